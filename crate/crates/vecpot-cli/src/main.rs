//! Command-line surface for the vecpot toolkit.
//!
//! Exit codes: 0 success/accept, 1 mathematical failure/reject, 2 usage,
//! 3 I/O. Reports are single JSON documents and are byte-identical across
//! repeated runs with the same configuration and seed on one platform.
//! `VECPOT_THREADS` caps worker parallelism.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};
use vecpot::diff_ops::StencilMode;
use vecpot::error::VecpotError;
use vecpot::grid_fields::{
    discrete_norm, read_field, write_field, AnyField, GridSpec, NormSpec, VectorField,
};
use vecpot::vector_potential::{construct, ConstructOptions, Method};

const EXIT_OK: i32 = 0;
const EXIT_MATH: i32 = 1;
const EXIT_USAGE: i32 = 2;
const EXIT_IO: i32 = 3;

/// Error carrying its process exit code.
#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
    fn io(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl From<VecpotError> for CliError {
    fn from(e: VecpotError) -> Self {
        let code = match &e {
            VecpotError::Io(_)
            | VecpotError::Json(_)
            | VecpotError::MalformedHeader(_)
            | VecpotError::PayloadMismatch(_)
            | VecpotError::UnsupportedKind(_) => EXIT_IO,
            VecpotError::InvalidArgument(_)
            | VecpotError::InvalidGrid(_)
            | VecpotError::InvalidNormSpec(_)
            | VecpotError::UnsupportedOrder(_)
            | VecpotError::DegenerateInput(_) => EXIT_USAGE,
            _ => EXIT_MATH,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "vecpot",
    about = "Discrete vector calculus, Newton potentials, vector-potential construction, zero-trace decomposition, and boundary trace compatibility",
    version
)]
struct Cli {
    /// Optional JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the four discrete operator identities on seeded smooth fields.
    VerifyIdentities(VerifyArgs),
    /// Construct the divergence-free vector potential of a field file.
    Potential(PotentialArgs),
    /// Split a zero-trace field into a regular part and a gradient.
    Decompose(DecomposeArgs),
    /// Check candidate boundary traces for compatibility.
    TraceCheck(TraceArgs),
    /// Run a named convergence study across grid levels.
    Convergence(ConvergenceArgs),
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// periodic | edges
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PotentialArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// fd | spectral
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long = "out-w")]
    out_w: Option<PathBuf>,
    #[arg(long = "out-eta")]
    out_eta: Option<PathBuf>,
    /// fd | spectral
    #[arg(long)]
    method: Option<String>,
    #[arg(long = "tol-recon")]
    tol_recon: Option<f64>,
    #[arg(long = "tol-leak")]
    tol_leak: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    boundary: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    /// Integrability exponent for the regularity diagnostics.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long)]
    case: Option<String>,
    /// Comma-separated grid sizes, e.g. 16,32,64.
    #[arg(long)]
    grids: Option<String>,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    if let Ok(threads) = std::env::var("VECPOT_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon_pool(n);
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version; everything else is usage
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let config = match load_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}", e.message);
            return e.code;
        }
    };
    let out = match cli.command {
        Command::VerifyIdentities(a) => cmd_verify(a, &config),
        Command::Potential(a) => cmd_potential(a, &config),
        Command::Decompose(a) => cmd_decompose(a, &config),
        Command::TraceCheck(a) => cmd_trace_check(a, &config),
        Command::Convergence(a) => cmd_convergence(a, &config),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn rayon_pool(n: usize) -> Result<(), rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
}

// ---------------------------------------------------------------------------
// Config file handling: JSON object with one section per command; flags win.
// ---------------------------------------------------------------------------

#[derive(Default)]
struct ConfigFile {
    value: serde_json::Value,
}

fn load_config(path: Option<&Path>) -> CliResult<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::io(format!("cannot read config {}: {e}", p.display())))?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("invalid config JSON: {e}")))?;
            if !value.is_object() {
                return Err(CliError::usage("config must be a JSON object"));
            }
            Ok(ConfigFile { value })
        }
    }
}

impl ConfigFile {
    fn get<T: serde::de::DeserializeOwned>(&self, section: &str, key: &str) -> CliResult<Option<T>> {
        match self.value.get(section).and_then(|s| s.get(key)) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::usage(format!("config {section}.{key}: {e}"))),
        }
    }
}

fn resolve<T: serde::de::DeserializeOwned>(
    flag: Option<T>,
    config: &ConfigFile,
    section: &str,
    key: &str,
) -> CliResult<Option<T>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => config.get(section, key),
    }
}

fn require<T>(v: Option<T>, what: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::usage(format!("missing required option --{what}")))
}

fn write_report<T: Serialize>(path: &Path, report: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| CliError::io(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::io(format!("cannot write report {}: {e}", path.display())))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// verify-identities
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct IdentityReportEntry {
    name: String,
    rel_defect: f64,
    pass: bool,
}

#[derive(Serialize)]
struct IdentityReport {
    dim: usize,
    grid: usize,
    seed: u64,
    mode: String,
    tolerance: f64,
    checks: Vec<IdentityReportEntry>,
    all_pass: bool,
}

const IDENTITY_TOL: f64 = 1e-12;

fn cmd_verify(a: VerifyArgs, config: &ConfigFile) -> CliResult<i32> {
    let sec = "verify_identities";
    let dim = require(resolve(a.dim, config, sec, "dim")?, "dim")?;
    let grid = require(resolve(a.grid, config, sec, "grid")?, "grid")?;
    let seed = resolve(a.seed, config, sec, "seed")?.unwrap_or(0);
    let mode_str = resolve(a.mode, config, sec, "mode")?.unwrap_or_else(|| "periodic".into());
    let report_path = resolve(a.report, config, sec, "report")?;

    if !(2..=5).contains(&dim) {
        return Err(CliError::usage(format!("--dim must be in [2, 5], got {dim}")));
    }
    if grid < 8 {
        return Err(CliError::usage(format!("--grid must be at least 8, got {grid}")));
    }
    let mode = StencilMode::parse(&mode_str).map_err(CliError::from)?;

    let checks = vecpot::diff_ops::identity_suite(dim, grid, seed, mode)?;
    let entries: Vec<IdentityReportEntry> = checks
        .iter()
        .map(|c| IdentityReportEntry {
            name: c.name.clone(),
            rel_defect: c.rel_defect,
            pass: c.rel_defect <= IDENTITY_TOL,
        })
        .collect();
    let all_pass = entries.iter().all(|e| e.pass);
    let report = IdentityReport {
        dim,
        grid,
        seed,
        mode: mode_str,
        tolerance: IDENTITY_TOL,
        checks: entries,
        all_pass,
    };
    if let Some(p) = report_path {
        write_report(&p, &report)?;
    }
    for c in &report.checks {
        println!(
            "{}: rel defect {:.3e} [{}]",
            c.name,
            c.rel_defect,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    Ok(if all_pass { EXIT_OK } else { EXIT_MATH })
}

// ---------------------------------------------------------------------------
// potential
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct PotentialReport {
    input: String,
    method: String,
    dim: usize,
    shape: Vec<usize>,
    #[serde(flatten)]
    summary: vecpot::vector_potential::DiagnosticsSummary,
    pass: bool,
}

fn read_vector_field(path: &Path) -> CliResult<VectorField> {
    match read_field(path)? {
        AnyField::Vector(v) => Ok(v),
        other => Err(CliError::usage(format!(
            "expected a vector field in {}, found kind {:?}",
            path.display(),
            other.kind()
        ))),
    }
}

fn cmd_potential(a: PotentialArgs, config: &ConfigFile) -> CliResult<i32> {
    let sec = "potential";
    let input = require(resolve(a.input, config, sec, "input")?, "input")?;
    let output = resolve(a.output, config, sec, "output")?;
    let method_str = resolve(a.method, config, sec, "method")?.unwrap_or_else(|| "fd".into());
    let report_path = resolve(a.report, config, sec, "report")?;

    let method = Method::parse(&method_str).map_err(CliError::from)?;
    let v = read_vector_field(&input)?;
    let opts = ConstructOptions {
        method,
        ..Default::default()
    };
    let diag = construct(&v, &opts)?;
    if let Some(out) = output {
        write_field(&diag.w, &out)?;
    }
    let pass = diag.curl_defect_rel <= 1e-12;
    let report = PotentialReport {
        input: input.display().to_string(),
        method: method_str,
        dim: v.grid().dim,
        shape: v.grid().shape.clone(),
        summary: diag.summary(),
        pass,
    };
    if let Some(p) = report_path {
        write_report(&p, &report)?;
    }
    println!(
        "curl defect {:.3e}, div {:.3e}, harmonic residual {:.3e}, norm ratio {:.6}",
        diag.curl_defect_rel, diag.div_w_rel, diag.harmonic_residual_rel, diag.norm_ratio
    );
    Ok(if pass { EXIT_OK } else { EXIT_MATH })
}

// ---------------------------------------------------------------------------
// decompose
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct DecomposeReport {
    input: String,
    method: String,
    recon_rel: f64,
    div_w_rel: f64,
    boundary_leak: f64,
    tol_recon: f64,
    tol_leak: f64,
    pass: bool,
}

fn cmd_decompose(a: DecomposeArgs, config: &ConfigFile) -> CliResult<i32> {
    let sec = "decompose";
    let input = require(resolve(a.input, config, sec, "input")?, "input")?;
    let out_w = resolve(a.out_w, config, sec, "out_w")?;
    let out_eta = resolve(a.out_eta, config, sec, "out_eta")?;
    let method_str = resolve(a.method, config, sec, "method")?.unwrap_or_else(|| "fd".into());
    let tol_recon = resolve(a.tol_recon, config, sec, "tol_recon")?.unwrap_or(1e-2);
    let tol_leak = resolve(a.tol_leak, config, sec, "tol_leak")?.unwrap_or(1e-2);
    let report_path = resolve(a.report, config, sec, "report")?;

    let method = Method::parse(&method_str).map_err(CliError::from)?;
    let v = read_vector_field(&input)?;
    let opts = vecpot::decomposition::DecomposeOptions {
        method,
        ..Default::default()
    };
    let result = vecpot::decomposition::decompose_zero_trace(&v, &opts)?;
    if let Some(p) = out_w {
        write_field(&result.w, &p)?;
    }
    if let Some(p) = out_eta {
        write_field(&result.eta, &p)?;
    }
    let pass = result.recon_rel <= tol_recon && result.boundary_leak <= tol_leak;
    let report = DecomposeReport {
        input: input.display().to_string(),
        method: method_str,
        recon_rel: result.recon_rel,
        div_w_rel: result.div_w_rel,
        boundary_leak: result.boundary_leak,
        tol_recon,
        tol_leak,
        pass,
    };
    if let Some(p) = report_path {
        write_report(&p, &report)?;
    }
    println!(
        "reconstruction {:.3e}, div w {:.3e}, boundary leak {:.3e}",
        result.recon_rel, result.div_w_rel, result.boundary_leak
    );
    Ok(if pass { EXIT_OK } else { EXIT_MATH })
}

// ---------------------------------------------------------------------------
// trace-check
// ---------------------------------------------------------------------------

fn cmd_trace_check(a: TraceArgs, config: &ConfigFile) -> CliResult<i32> {
    let sec = "trace_check";
    let order = require(resolve(a.order, config, sec, "order")?, "order")?;
    let boundary = require(resolve(a.boundary, config, sec, "boundary")?, "boundary")?;
    let data = require(resolve(a.data, config, sec, "data")?, "data")?;
    let tol = resolve(a.tol, config, sec, "tol")?.unwrap_or(1e-8);
    let p = resolve(a.p, config, sec, "p")?.unwrap_or(2.0);
    let report_path = resolve(a.report, config, sec, "report")?;

    if order < 1 || order > vecpot::trace::MAX_ORDER {
        return Err(CliError::usage(format!(
            "--order must be in [1, {}], got {order}",
            vecpot::trace::MAX_ORDER
        )));
    }
    if !(tol > 0.0) {
        return Err(CliError::usage("--tol must be positive"));
    }
    let charts = vecpot::trace::load_boundary_mesh(&boundary)?;
    let traces = vecpot::trace::load_trace_data(&data, &charts)?;
    for t in &traces {
        if t.len() < order {
            return Err(CliError::usage(format!(
                "trace data provides {} orders, need {order}",
                t.len()
            )));
        }
    }
    let report = vecpot::trace::check_compatibility(
        &charts,
        &vecpot::trace::TraceInput::Sampled(traces),
        order,
        tol,
        p,
    )?;
    if let Some(p) = report_path {
        write_report(&p, &report)?;
    }
    let accept = report.verdict == vecpot::trace::Verdict::Accept;
    println!(
        "verdict {}: worst defect {:.3e} (tol {:.1e})",
        if accept { "accept" } else { "reject" },
        report.max_defect(),
        tol
    );
    Ok(if accept { EXIT_OK } else { EXIT_MATH })
}

// ---------------------------------------------------------------------------
// convergence
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ConvergenceLevel {
    n: usize,
    h: f64,
    error: f64,
}

#[derive(Serialize)]
struct ConvergenceReport {
    case: String,
    levels: Vec<ConvergenceLevel>,
    observed_order: f64,
    threshold: f64,
    pass: bool,
}

fn parse_grids(s: &str) -> CliResult<Vec<usize>> {
    let grids: Result<Vec<usize>, _> = s.split(',').map(|t| t.trim().parse::<usize>()).collect();
    let grids = grids.map_err(|e| CliError::usage(format!("bad --grids value: {e}")))?;
    if grids.len() < 2 {
        return Err(CliError::usage("--grids needs at least two levels"));
    }
    if grids.iter().any(|&n| n < 8) {
        return Err(CliError::usage("grid levels must be at least 8"));
    }
    Ok(grids)
}

fn sin4(t: f64) -> f64 {
    (std::f64::consts::PI * t).sin().powi(4)
}

fn dsin4(t: f64) -> f64 {
    4.0 * std::f64::consts::PI
        * (std::f64::consts::PI * t).sin().powi(3)
        * (std::f64::consts::PI * t).cos()
}

/// Rotational (divergence-free) reference field in 2 or 3 dimensions, from
/// analytic derivatives of a product-of-sin^4 antisym potential.
fn rotational_field(grid: &GridSpec) -> CliResult<VectorField> {
    let dim = grid.dim;
    let coef = [1.0f64, 0.7, -0.5];
    let field = VectorField::sample(grid, |x, i| {
        let mut acc = 0.0;
        for j in 0..dim {
            if j == i {
                continue;
            }
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            let pidx = vecpot::grid_fields::pair_index(lo, hi, dim);
            let sgn = if i < j { 1.0 } else { -1.0 };
            let mut dja = 1.0;
            for k in 0..dim {
                dja *= if k == j { dsin4(x[k]) } else { sin4(x[k]) };
            }
            acc += 2.0 * sgn * coef[pidx % coef.len()] * dja;
        }
        acc
    })?;
    Ok(field)
}

fn case_error(case: &str, n: usize) -> CliResult<(f64, f64)> {
    let l2 = NormSpec::l2();
    match case {
        "poisson-gaussian-2d" | "poisson-gaussian-3d" => {
            let dim = if case.ends_with("2d") { 2 } else { 3 };
            let h = 2.0 / (n - 1) as f64;
            let grid = GridSpec::new(vec![n; dim], vec![h; dim], vec![-1.0; dim])
                .map_err(CliError::from)?;
            let rho = vecpot::grid_fields::sample(&grid, |x| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                (-15.0 * r2).exp()
            })?;
            let phi = vecpot::newton_potential::newton_fast(&rho)?;
            let lap = vecpot::diff_ops::laplacian_compact(&phi, StencilMode::OneSidedEdges);
            let resid = lap.scale(-1.0).sub(&rho)?;
            Ok((h, discrete_norm(&resid, &l2)))
        }
        "pipeline-divfree-2d" | "pipeline-divfree-3d" => {
            let dim = if case.ends_with("2d") { 2 } else { 3 };
            let grid = GridSpec::cube(dim, n, 1.0).map_err(CliError::from)?;
            let v = rotational_field(&grid)?;
            let diag = construct(&v, &ConstructOptions::default())?;
            Ok((grid.spacing[0], diag.div_w_rel))
        }
        "pipeline-harmonic-2d" | "pipeline-harmonic-3d" => {
            let dim = if case.ends_with("2d") { 2 } else { 3 };
            let grid = GridSpec::cube(dim, n, 1.0).map_err(CliError::from)?;
            let v = rotational_field(&grid)?;
            let diag = construct(&v, &ConstructOptions::default())?;
            Ok((grid.spacing[0], diag.harmonic_residual_rel))
        }
        "decompose-gradient-2d" => {
            let grid = GridSpec::cube(2, n, 1.0).map_err(CliError::from)?;
            let r2 = 0.42f64 * 0.42;
            let v = VectorField::sample(&grid, |x, k| {
                let u2 = ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)) / r2;
                if u2 >= 1.0 {
                    0.0
                } else {
                    8.0 * (1.0 - u2).powi(7) * (-2.0 * (x[k] - 0.5) / r2)
                }
            })?;
            let res = vecpot::decomposition::decompose_zero_trace(
                &v,
                &vecpot::decomposition::DecomposeOptions::default(),
            )?;
            Ok((grid.spacing[0], res.recon_rel))
        }
        "decompose-scurl-2d" => {
            let grid = GridSpec::cube(2, n, 1.0).map_err(CliError::from)?;
            let v = rotational_field(&grid)?;
            let res = vecpot::decomposition::decompose_zero_trace(
                &v,
                &vecpot::decomposition::DecomposeOptions::default(),
            )?;
            Ok((grid.spacing[0], res.recon_rel))
        }
        other => Err(CliError::usage(format!("unknown case {other:?}"))),
    }
}

fn cmd_convergence(a: ConvergenceArgs, config: &ConfigFile) -> CliResult<i32> {
    let sec = "convergence";
    let case = require(resolve(a.case, config, sec, "case")?, "case")?;
    let grids_str = require(resolve(a.grids, config, sec, "grids")?, "grids")?;
    let report_path = resolve(a.report, config, sec, "report")?;
    let grids = parse_grids(&grids_str)?;

    let mut levels = Vec::with_capacity(grids.len());
    let mut pts = Vec::with_capacity(grids.len());
    for &n in &grids {
        let (h, e) = case_error(&case, n)?;
        levels.push(ConvergenceLevel { n, h, error: e });
        pts.push((h, e));
    }
    let observed_order = vecpot::oracle::observed_order(&pts)?;
    let threshold = 1.8;
    let pass = observed_order >= threshold;
    let report = ConvergenceReport {
        case: case.clone(),
        levels,
        observed_order,
        threshold,
        pass,
    };
    if let Some(p) = report_path {
        write_report(&p, &report)?;
    }
    println!("case {case}: observed order {observed_order:.3} [{}]",
        if pass { "pass" } else { "FAIL" });
    Ok(if pass { EXIT_OK } else { EXIT_MATH })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_parsing() {
        assert_eq!(parse_grids("16,32,64").unwrap(), vec![16, 32, 64]);
        assert!(parse_grids("16").is_err());
        assert!(parse_grids("a,b").is_err());
    }
}
