//! Zero-trace Helmholtz-type splitting `v = w + grad eta`.
//!
//! The input vanishes on the boundary of its box domain, is extended by zero
//! to an ambient box, run through the vector-potential pipeline for `w`, and
//! the curl-free remainder is recovered as a gradient by a Poisson solve.
//! The checkable membership statement — `w + grad eta` vanishes outside the
//! original domain — is reported as `boundary_leak`.
//!
//! The domain is an axis-aligned box (simply connected), so a discretely
//! curl-free field is a discrete gradient and the recovery is well posed.

use crate::diff_ops::{curl, div, grad, StencilMode};
use crate::error::{Result, VecpotError};
use crate::grid_fields::{discrete_norm, restrict, GridSpec, NormSpec, ScalarField, VectorField};
use crate::spectral::{poisson_dirichlet_compact, poisson_periodic, PeriodicSymbol};
use crate::vector_potential::{construct, ConstructOptions, Method};

/// Splitting output restricted to the original domain, with residual
/// diagnostics.
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    pub w: VectorField,
    pub eta: ScalarField,
    /// `||v - w - grad eta||_2 / ||v||_2` over the domain.
    pub recon_rel: f64,
    /// `||div w||_2 / ||v||_2` over the domain.
    pub div_w_rel: f64,
    /// `max |w + grad eta|` over the ambient nodes outside the domain.
    pub boundary_leak: f64,
}

#[derive(Debug, Clone)]
pub struct DecomposeOptions {
    pub method: Method,
    /// Ambient margin in cells per side; default `max(4, n/4)`.
    pub margin_cells: Option<usize>,
    /// Also require the discrete curl of the input to vanish on the boundary
    /// ring (the stronger zero-trace class).
    pub check_curl_trace: bool,
    /// Relative tolerance for the boundary-ring checks.
    pub trace_tol: f64,
    /// Relative curl tolerance accepted by gradient recovery.
    pub curl_tol: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            method: Method::FreeSpace,
            margin_cells: None,
            check_curl_trace: false,
            trace_tol: 1e-10,
            curl_tol: 1e-8,
        }
    }
}

/// Maximum absolute value over the boundary ring of the grid, across all
/// components.
fn boundary_ring_max<F: crate::grid_fields::GridField>(field: &F) -> f64 {
    let grid = field.grid();
    let mut m: f64 = 0.0;
    for comp in field.comps() {
        for (flat, &v) in comp.values().iter().enumerate() {
            let idx = grid.unravel(flat);
            let on_ring = idx
                .iter()
                .zip(&grid.shape)
                .any(|(&i, &n)| i == 0 || i == n - 1);
            if on_ring {
                m = m.max(v.abs());
            }
        }
    }
    m
}

/// Extension of `v` by zero from its subgrid to `ambient`.
///
/// Rejects inputs whose boundary samples exceed `1e-10` relative to the
/// field maximum (not in the zero-trace class), and embeddings with fewer
/// than 4 margin cells on any side.
pub fn zero_extend(v: &VectorField, ambient: &GridSpec) -> Result<VectorField> {
    zero_extend_with_tol(v, ambient, 1e-10)
}

pub fn zero_extend_with_tol(
    v: &VectorField,
    ambient: &GridSpec,
    trace_tol: f64,
) -> Result<VectorField> {
    let sub = v.grid();
    let offset = ambient.embed_offset(sub)?;
    for d in 0..ambient.dim {
        let before = offset[d];
        let after = ambient.shape[d] - (offset[d] + sub.shape[d]);
        if before < 4 || after < 4 {
            return Err(VecpotError::EmbeddingError(format!(
                "margin on axis {d} is {} cells; at least 4 required",
                before.min(after)
            )));
        }
    }
    let scale = v.max_abs();
    if scale > 0.0 {
        let ring = boundary_ring_max(v);
        if ring > trace_tol * scale {
            return Err(VecpotError::NonzeroTrace(ring / scale));
        }
    }
    let mut comps = Vec::with_capacity(v.dim());
    for c in v.components() {
        let mut vals = vec![0.0; ambient.len()];
        for flat in 0..sub.len() {
            let idx = sub.unravel(flat);
            let amb: Vec<usize> = idx.iter().zip(&offset).map(|(i, o)| i + o).collect();
            vals[ambient.ravel(&amb)] = c.values()[flat];
        }
        comps.push(ScalarField::new(ambient.clone(), vals)?);
    }
    VectorField::new(comps)
}

/// Poisson backend for gradient recovery, matching the ambient path of the
/// field being recovered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryBc {
    /// Compact-stencil solve with homogeneous Dirichlet box values.
    DirichletCompact,
    /// Periodic solve with the composed-central symbol; exact against
    /// discrete gradients of periodic data.
    PeriodicWide,
}

impl RecoveryBc {
    fn for_method(method: Method) -> Self {
        match method {
            Method::FreeSpace => RecoveryBc::DirichletCompact,
            Method::Spectral => RecoveryBc::PeriodicWide,
        }
    }

    fn stencil(self) -> StencilMode {
        match self {
            RecoveryBc::DirichletCompact => StencilMode::OneSidedEdges,
            RecoveryBc::PeriodicWide => StencilMode::Periodic,
        }
    }
}

/// Recovers `eta` with `grad eta ~ u` for a discretely curl-free `u`, by
/// solving the Poisson problem `lap eta = div u`. Returns the zero-mean
/// potential and the relative residual `||grad eta - u||_2 / ||u||_2`.
pub fn gradient_recover(
    u: &VectorField,
    bc: RecoveryBc,
    curl_tol: f64,
) -> Result<(ScalarField, f64)> {
    let l2 = NormSpec::l2();
    let u_norm = discrete_norm(u, &l2);
    if u_norm == 0.0 {
        return Ok((ScalarField::zeros(u.grid().clone()), 0.0));
    }
    let mode = bc.stencil();
    let curl_norm = discrete_norm(&curl(u, mode), &l2);
    if curl_norm > curl_tol * u_norm {
        return Err(VecpotError::NotAGradient(curl_norm / u_norm, curl_tol));
    }
    let rhs = div(u, mode);
    let eta = match bc {
        RecoveryBc::DirichletCompact => poisson_dirichlet_compact(&rhs)?,
        // the periodic solver inverts -lap, so negate to solve lap eta = rhs
        RecoveryBc::PeriodicWide => poisson_periodic(&rhs.scale(-1.0), PeriodicSymbol::Wide),
    };
    let mean = eta.mean();
    let eta = ScalarField::new(
        eta.grid().clone(),
        eta.values().iter().map(|v| v - mean).collect(),
    )?;
    let residual = discrete_norm(&grad(&eta, mode).sub(u)?, &l2) / u_norm;
    Ok((eta, residual))
}

/// Full zero-trace splitting of `v` on its box domain.
pub fn decompose_zero_trace(
    v: &VectorField,
    opts: &DecomposeOptions,
) -> Result<DecompositionResult> {
    let sub = v.grid().clone();
    let nmax = *sub.shape.iter().max().unwrap();
    let margin = opts.margin_cells.unwrap_or_else(|| (nmax / 4).max(4));
    let ambient = GridSpec::new(
        sub.shape.iter().map(|&n| n + 2 * margin).collect(),
        sub.spacing.clone(),
        (0..sub.dim)
            .map(|d| sub.origin[d] - margin as f64 * sub.spacing[d])
            .collect(),
    )?;

    if opts.check_curl_trace && v.max_abs() > 0.0 {
        let c = curl(v, StencilMode::OneSidedEdges);
        let ring = boundary_ring_max(&c);
        let scale = c.max_abs();
        if scale > 0.0 && ring > opts.trace_tol.max(1e-8) * scale {
            return Err(VecpotError::NonzeroTrace(ring / scale));
        }
    }

    let v_tilde = zero_extend_with_tol(v, &ambient, opts.trace_tol)?;
    let copts = ConstructOptions {
        method: opts.method,
        ..Default::default()
    };
    let diag = construct(&v_tilde, &copts)?;
    let w_tilde = diag.w;

    let u = v_tilde.sub(&w_tilde)?;
    let bc = RecoveryBc::for_method(opts.method);
    let l2 = NormSpec::l2();
    // a remainder at roundoff level has nothing to recover; its relative
    // curl is pure noise
    let u_negligible = discrete_norm(&u, &l2) <= 1e-12 * discrete_norm(&v_tilde, &l2);
    let (eta_box, _resid) = if u_negligible {
        (ScalarField::zeros(ambient.clone()), 0.0)
    } else {
        gradient_recover(&u, bc, opts.curl_tol)?
    };
    let mode = bc.stencil();
    let grad_eta = grad(&eta_box, mode);

    // leak: w + grad eta away from the domain
    let w_plus = w_tilde.add(&grad_eta)?;
    let offset = ambient.embed_offset(&sub)?;
    let mut leak: f64 = 0.0;
    for k in 0..w_plus.dim() {
        for (flat, &val) in w_plus.comp(k).values().iter().enumerate() {
            let idx = ambient.unravel(flat);
            let inside = (0..ambient.dim)
                .all(|d| idx[d] >= offset[d] && idx[d] < offset[d] + sub.shape[d]);
            if !inside {
                leak = leak.max(val.abs());
            }
        }
    }

    // restriction to the domain
    let w = restrict(&w_tilde, &sub)?;
    let grad_eta_omega = restrict(&grad_eta, &sub)?;
    let eta_raw = restrict(&eta_box, &sub)?;
    let mean = eta_raw.mean();
    let eta = ScalarField::new(
        sub.clone(),
        eta_raw.values().iter().map(|x| x - mean).collect(),
    )?;

    let v_norm = discrete_norm(v, &l2);
    let recon = v.sub(&w.add(&grad_eta_omega)?)?;
    let div_w = restrict(&div(&w_tilde, mode), &sub)?;
    let (recon_rel, div_w_rel) = if v_norm == 0.0 {
        (0.0, 0.0)
    } else {
        (
            discrete_norm(&recon, &l2) / v_norm,
            discrete_norm(&div_w, &l2) / v_norm,
        )
    };

    Ok(DecompositionResult {
        w,
        eta,
        recon_rel,
        div_w_rel,
        boundary_leak: leak,
    })
}
