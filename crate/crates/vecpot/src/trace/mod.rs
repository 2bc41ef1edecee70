//! Boundary charts on Lipschitz graphs, the trace operators, the
//! compatibility tensors, and the accept/reject checker for candidate
//! boundary data.
//!
//! A chart parametrizes a boundary patch as the graph `y' -> (y', phi(y'))`
//! over a parameter grid. `orientation = +1` means the domain lies above the
//! graph (outward normal points toward smaller last coordinate), `-1` the
//! opposite. Frames `(tau_1, .., tau_{N-1}, n)` are orthonormal and
//! positively oriented.
//!
//! The checker builds the tensor chain per chart and accepts when every
//! tensor is pointwise symmetric to tolerance and, where charts overlap, the
//! chartwise tensors agree on shared nodes. Discrete `W^{1,p}` norms and a
//! Slobodeckij-type seminorm of the top tensor are reported as
//! refinement-indexed regularity diagnostics; they never enter the verdict,
//! since membership in a fractional Sobolev space is not decidable at a
//! fixed resolution.

pub mod chain;
pub mod jets;

pub use chain::{
    slobodeckij_seminorm, symmetry_defect, w1p_norm_chart, BoundaryField, MAX_ORDER,
};

use crate::diff_ops::{axis_diff, StencilMode};
use crate::error::{Result, VecpotError};
use crate::grid_fields::{GridSpec, ScalarField};
use crate::oracle::AnalyticScalar;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

/// Lipschitz-graph parametrization of a boundary patch.
#[derive(Debug, Clone)]
pub struct BoundaryChart {
    /// Ambient dimension `N`; the parameter grid has dimension `N - 1`.
    pub dim: usize,
    pub param_grid: GridSpec,
    /// Graph values `phi(y')` sampled on the parameter grid.
    pub graph: ScalarField,
    /// `+1`: domain above the graph; `-1`: below.
    pub orientation: i8,
}

impl BoundaryChart {
    pub fn new(param_grid: GridSpec, graph: ScalarField, orientation: i8) -> Result<Self> {
        if !graph.grid().same_layout(&param_grid) {
            return Err(VecpotError::GridMismatch(
                "chart graph not sampled on the parameter grid".into(),
            ));
        }
        if orientation != 1 && orientation != -1 {
            return Err(VecpotError::InvalidArgument(
                "chart orientation must be +1 or -1".into(),
            ));
        }
        Ok(BoundaryChart {
            dim: param_grid.dim + 1,
            param_grid,
            graph,
            orientation,
        })
    }

    /// Flat chart `phi == height` over a box parameter grid.
    pub fn flat(param_grid: GridSpec, height: f64, orientation: i8) -> Result<Self> {
        let graph = crate::grid_fields::sample(&param_grid, |_| height)?;
        Self::new(param_grid, graph, orientation)
    }

    /// Chart sampled from an analytic graph function.
    pub fn from_graph_fn(
        param_grid: GridSpec,
        graph_fn: &dyn AnalyticScalar,
        orientation: i8,
    ) -> Result<Self> {
        let graph = crate::grid_fields::sample(&param_grid, |y| graph_fn.eval_at(y))?;
        Self::new(param_grid, graph, orientation)
    }

    pub fn node_count(&self) -> usize {
        self.param_grid.len()
    }

    /// Finite-difference Lipschitz ratio of the graph over neighboring
    /// nodes (a diagnostic, reported by the checker).
    pub fn lipschitz_ratio(&self) -> f64 {
        let grid = &self.param_grid;
        let mut worst: f64 = 0.0;
        for k in 0..grid.dim {
            let stride = grid.strides()[k];
            let n = grid.shape[k];
            let h = grid.spacing[k];
            for flat in 0..grid.len() {
                let ik = (flat / stride) % n;
                if ik + 1 < n {
                    let d = (self.graph.values()[flat + stride] - self.graph.values()[flat])
                        .abs()
                        / h;
                    worst = worst.max(d);
                }
            }
        }
        worst
    }
}

/// Ambient position of a chart node: `(y', phi(y'))`.
pub fn chart_position(chart: &BoundaryChart, node: usize) -> Vec<f64> {
    let idx = chart.param_grid.unravel(node);
    let mut x = chart.param_grid.position(&idx);
    x.push(chart.graph.values()[node]);
    x
}

/// Orthonormal positively oriented frame: `N - 1` tangents and the outward
/// normal.
#[derive(Debug, Clone)]
pub struct Frame {
    pub tangents: Vec<Vec<f64>>,
    pub normal: Vec<f64>,
}

impl Frame {
    /// Largest deviation from pairwise orthonormality.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut vecs: Vec<&Vec<f64>> = self.tangents.iter().collect();
        vecs.push(&self.normal);
        let mut worst: f64 = 0.0;
        for (i, a) in vecs.iter().enumerate() {
            for (j, b) in vecs.iter().enumerate() {
                let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Determinant of `(tau_1, .., tau_{N-1}, n)` as columns.
    pub fn determinant(&self) -> f64 {
        let n = self.normal.len();
        let mut mat = vec![0.0; n * n];
        for (col, t) in self.tangents.iter().enumerate() {
            for a in 0..n {
                mat[a * n + col] = t[a];
            }
        }
        for a in 0..n {
            mat[a * n + n - 1] = self.normal[a];
        }
        det_dense(&mut mat, n)
    }
}

/// Determinant by Gaussian elimination with partial pivoting; consumes the
/// buffer.
pub(crate) fn det_dense(mat: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if mat[row * n + col].abs() > mat[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if mat[pivot * n + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                mat.swap(col * n + k, pivot * n + k);
            }
            det = -det;
        }
        det *= mat[col * n + col];
        for row in (col + 1)..n {
            let f = mat[row * n + col] / mat[col * n + col];
            for k in col..n {
                mat[row * n + k] -= f * mat[col * n + k];
            }
        }
    }
    det
}

/// Graph gradient `d_k phi` at every node, chart-grid stencils.
fn graph_gradients(chart: &BoundaryChart) -> Vec<Vec<f64>> {
    (0..chart.param_grid.dim)
        .map(|k| {
            axis_diff(
                chart.graph.values(),
                &chart.param_grid,
                k,
                StencilMode::OneSidedEdges,
            )
        })
        .collect()
}

fn frame_from_gradient(dphi: &[f64], orientation: i8) -> Result<Frame> {
    let d = dphi.len();
    let n_dim = d + 1;
    // raw tangents e_k + d_k(phi) e_N, orthonormalized in order
    let mut tangents: Vec<Vec<f64>> = Vec::with_capacity(d);
    for k in 0..d {
        let mut v = vec![0.0; n_dim];
        v[k] = 1.0;
        v[n_dim - 1] = dphi[k];
        for prev in &tangents {
            let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (vi, pi) in v.iter_mut().zip(prev) {
                *vi -= dot * pi;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(VecpotError::DegenerateFrame(norm));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        tangents.push(v);
    }
    // outward normal
    let sgn = orientation as f64;
    let g2: f64 = dphi.iter().map(|x| x * x).sum();
    let scale = 1.0 / (1.0 + g2).sqrt();
    let mut normal: Vec<f64> = dphi.iter().map(|&g| sgn * g * scale).collect();
    normal.push(-sgn * scale);
    let mut frame = Frame { tangents, normal };
    if frame.determinant() < 0.0 {
        if let Some(last) = frame.tangents.last_mut() {
            last.iter_mut().for_each(|x| *x = -*x);
        }
    }
    debug_assert!((frame.determinant() - 1.0).abs() <= 1e-10);
    Ok(frame)
}

/// Frame at one chart node, graph derivatives by chart-grid stencils.
pub fn build_frame(chart: &BoundaryChart, node: usize) -> Result<Frame> {
    let grads = graph_gradients(chart);
    let dphi: Vec<f64> = grads.iter().map(|g| g[node]).collect();
    frame_from_gradient(&dphi, chart.orientation)
}

/// Frames at every node (graph derivatives computed once).
pub fn build_frames(chart: &BoundaryChart) -> Result<Vec<Frame>> {
    let grads = graph_gradients(chart);
    (0..chart.node_count())
        .map(|nd| {
            let dphi: Vec<f64> = grads.iter().map(|g| g[nd]).collect();
            frame_from_gradient(&dphi, chart.orientation)
        })
        .collect()
}

/// Frames with exact graph derivatives from an analytic graph.
pub fn build_frames_analytic(
    chart: &BoundaryChart,
    graph_fn: &dyn AnalyticScalar,
) -> Result<Vec<Frame>> {
    (0..chart.node_count())
        .map(|nd| {
            let idx = chart.param_grid.unravel(nd);
            let y = chart.param_grid.position(&idx);
            let dphi: Vec<f64> = (0..chart.param_grid.dim)
                .map(|k| {
                    let mut alpha = vec![0usize; chart.param_grid.dim];
                    alpha[k] = 1;
                    graph_fn.partial_at(&y, &alpha)
                })
                .collect();
            frame_from_gradient(&dphi, chart.orientation)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Trace extraction
// ---------------------------------------------------------------------------

/// Order-`q` normal trace of an analytic function on the chart:
/// `gamma_q = sum d^q phi . n ... n` (all `q` slots contracted with the
/// normal). `q = 0, 1, 2` are the restriction, normal derivative, and second
/// normal derivative. Frames use chart-grid graph derivatives unless
/// `graph_fn` supplies exact ones.
pub fn gamma_analytic(
    phi: &dyn AnalyticScalar,
    chart: &BoundaryChart,
    q: usize,
    graph_fn: Option<&dyn AnalyticScalar>,
) -> Result<BoundaryField> {
    if q + 1 > MAX_ORDER {
        return Err(VecpotError::UnsupportedOrder(q + 1));
    }
    if phi.dim() != chart.dim {
        return Err(VecpotError::InvalidArgument(
            "trace function dimension does not match the chart".into(),
        ));
    }
    let frames = match graph_fn {
        Some(g) => build_frames_analytic(chart, g)?,
        None => build_frames(chart)?,
    };
    let n_dim = chart.dim;
    let mut values = vec![0.0; chart.node_count()];
    let count = n_dim.pow(q as u32);
    let mut tuple = vec![0usize; q];
    for (nd, out) in values.iter_mut().enumerate() {
        let x = chart_position(chart, nd);
        let nvec = &frames[nd].normal;
        let mut acc = 0.0;
        for flat in 0..count {
            chain::tensor_unravel(flat, n_dim, q, &mut tuple);
            let mut alpha = vec![0usize; n_dim];
            let mut weight = 1.0;
            for &t in &tuple {
                alpha[t] += 1;
                weight *= nvec[t];
            }
            acc += phi.partial_at(&x, &alpha) * weight;
        }
        *out = acc;
    }
    BoundaryField::scalar(n_dim, chart.param_grid.clone(), values)
}

pub fn gamma0(phi: &dyn AnalyticScalar, chart: &BoundaryChart) -> Result<BoundaryField> {
    gamma_analytic(phi, chart, 0, None)
}

pub fn gamma1(phi: &dyn AnalyticScalar, chart: &BoundaryChart) -> Result<BoundaryField> {
    gamma_analytic(phi, chart, 1, None)
}

pub fn gamma2(phi: &dyn AnalyticScalar, chart: &BoundaryChart) -> Result<BoundaryField> {
    gamma_analytic(phi, chart, 2, None)
}

/// Multilinear interpolation of a volume scalar field at an arbitrary point.
pub fn interp_multilinear(field: &ScalarField, x: &[f64]) -> Result<f64> {
    let grid = field.grid();
    let dim = grid.dim;
    let mut base = vec![0usize; dim];
    let mut frac = vec![0.0; dim];
    for d in 0..dim {
        let t = (x[d] - grid.origin[d]) / grid.spacing[d];
        if t < -1e-9 || t > (grid.shape[d] - 1) as f64 + 1e-9 {
            return Err(VecpotError::InsufficientStencil(format!(
                "point outside the grid on axis {d}"
            )));
        }
        let t = t.clamp(0.0, (grid.shape[d] - 1) as f64);
        let i = (t.floor() as usize).min(grid.shape[d] - 2);
        base[d] = i;
        frac[d] = t - i as f64;
    }
    let corners = 1usize << dim;
    let mut acc = 0.0;
    let mut idx = vec![0usize; dim];
    for c in 0..corners {
        let mut w = 1.0;
        for d in 0..dim {
            if (c >> d) & 1 == 1 {
                idx[d] = base[d] + 1;
                w *= frac[d];
            } else {
                idx[d] = base[d];
                w *= 1.0 - frac[d];
            }
        }
        acc += w * field.values()[grid.ravel(&idx)];
    }
    Ok(acc)
}

/// Order-`q <= 2` trace of a volume field by quadratic one-sided
/// interpolation along the inward normal: samples at distances `delta`,
/// `2 delta`, `3 delta` inside the domain fit a quadratic in the normal
/// coordinate; its value, first, and second derivative at the boundary are
/// the traces.
pub fn gamma_volume(
    field: &ScalarField,
    chart: &BoundaryChart,
    q: usize,
) -> Result<BoundaryField> {
    if q > 2 {
        return Err(VecpotError::UnsupportedOrder(q + 1));
    }
    if field.grid().dim != chart.dim {
        return Err(VecpotError::InvalidArgument(
            "volume field dimension does not match the chart".into(),
        ));
    }
    let frames = build_frames(chart)?;
    let delta = chart
        .param_grid
        .spacing
        .iter()
        .chain(field.grid().spacing.iter())
        .fold(0.0f64, |m, &h| m.max(h));
    let mut values = vec![0.0; chart.node_count()];
    for (nd, out) in values.iter_mut().enumerate() {
        let x = chart_position(chart, nd);
        let nvec = &frames[nd].normal;
        let mut samples = [0.0; 3];
        for (j, s) in samples.iter_mut().enumerate() {
            let t = (j + 1) as f64 * delta;
            let probe: Vec<f64> = x
                .iter()
                .zip(nvec)
                .map(|(xi, ni)| xi - t * ni)
                .collect();
            *s = interp_multilinear(field, &probe)?;
        }
        // quadratic p(t) through (delta, 2 delta, 3 delta); traces at t = 0
        // along the inward parameter t, so d/dn = -d/dt
        let (f1, f2, f3) = (samples[0], samples[1], samples[2]);
        let p0 = 3.0 * f1 - 3.0 * f2 + f3;
        let dp0 = (-2.5 * f1 + 4.0 * f2 - 1.5 * f3) / delta;
        let ddp0 = (f1 - 2.0 * f2 + f3) / (delta * delta);
        *out = match q {
            0 => p0,
            1 => -dp0,
            _ => ddp0,
        };
    }
    BoundaryField::scalar(chart.dim, chart.param_grid.clone(), values)
}

// ---------------------------------------------------------------------------
// Compatibility tensors
// ---------------------------------------------------------------------------

/// Surface gradient `grad_G u = sum_i tau_i x d_{tau_i} u`: the new leading
/// index carries the tangents; tangential derivatives use chart-grid
/// stencils.
pub fn surface_gradient(u: &BoundaryField, chart: &BoundaryChart) -> Result<BoundaryField> {
    let frames = build_frames(chart)?;
    let derivs = chain::tangential_derivs_fd(u, &frames);
    let n_dim = u.ambient_dim;
    let mut out = BoundaryField::zeros(n_dim, u.order + 1, u.param_grid.clone());
    let prev_len = u.tensor_len();
    for nd in 0..u.node_count() {
        let o = out.node_mut(nd);
        for (i, tau) in frames[nd].tangents.iter().enumerate() {
            for j in 0..prev_len {
                for a in 0..n_dim {
                    o[a * prev_len + j] += tau[a] * derivs[nd][i][j];
                }
            }
        }
    }
    Ok(out)
}

/// First compatibility tensor `s = grad_G phi_0 + phi_1 n` (one chain step).
pub fn build_s(
    phi0: &BoundaryField,
    phi1: &BoundaryField,
    chart: &BoundaryChart,
) -> Result<BoundaryField> {
    let frames = build_frames(chart)?;
    chain::chain_step_fd(phi0, phi1, &frames, 1)
}

/// Second compatibility tensor
/// `S = grad_G s + sum_i (d_{tau_i} s . n)(n x tau_i) + phi_2 (n x n)`.
pub fn build_big_s(
    s: &BoundaryField,
    phi2: &BoundaryField,
    chart: &BoundaryChart,
) -> Result<BoundaryField> {
    let frames = build_frames(chart)?;
    chain::chain_step_fd(s, phi2, &frames, 2)
}

/// Full chain `S_0 .. S_{m-1}` from sampled traces; steps `q = 1` and
/// `q = 2` are the exact code paths of [`build_s`] and [`build_big_s`].
pub fn build_s_chain(
    traces: &[BoundaryField],
    chart: &BoundaryChart,
    m: usize,
) -> Result<Vec<BoundaryField>> {
    if m < 1 || m > MAX_ORDER {
        return Err(VecpotError::UnsupportedOrder(m));
    }
    if traces.len() < m {
        return Err(VecpotError::InvalidArgument(format!(
            "chain of order {m} needs {m} traces, got {}",
            traces.len()
        )));
    }
    let frames = build_frames(chart)?;
    let mut out = Vec::with_capacity(m);
    out.push(traces[0].clone());
    for q in 1..m {
        let next = chain::chain_step_fd(&out[q - 1], &traces[q], &frames, q)?;
        out.push(next);
    }
    Ok(out)
}

/// Per-direction trace pair extracted from `(s, phi_2)`:
/// `phi0_i = s . e_i`, `phi1_i = sum_j (d_{tau_j} s . n)(tau_j . e_i) +
/// phi_2 (n . e_i)`. These are the candidate traces of the `i`-th first
/// derivative.
pub fn lemma_rows(
    s: &BoundaryField,
    phi2: &BoundaryField,
    chart: &BoundaryChart,
    i: usize,
) -> Result<(BoundaryField, BoundaryField)> {
    let n_dim = chart.dim;
    if i >= n_dim {
        return Err(VecpotError::InvalidArgument(format!(
            "direction index {i} out of range for dimension {n_dim}"
        )));
    }
    if s.order != 1 || phi2.order != 0 {
        return Err(VecpotError::InvalidArgument(
            "row extraction expects an order-1 tensor and a scalar trace".into(),
        ));
    }
    let frames = build_frames(chart)?;
    let derivs = chain::tangential_derivs_fd(s, &frames);
    let nodes = s.node_count();
    let mut phi0 = vec![0.0; nodes];
    let mut phi1 = vec![0.0; nodes];
    for nd in 0..nodes {
        phi0[nd] = s.node(nd)[i];
        let frame = &frames[nd];
        let mut acc = 0.0;
        for (j, tau) in frame.tangents.iter().enumerate() {
            let dsn: f64 = derivs[nd][j]
                .iter()
                .zip(&frame.normal)
                .map(|(d, n)| d * n)
                .sum();
            acc += dsn * tau[i];
        }
        acc += phi2.values[nd] * frame.normal[i];
        phi1[nd] = acc;
    }
    Ok((
        BoundaryField::scalar(n_dim, s.param_grid.clone(), phi0)?,
        BoundaryField::scalar(n_dim, s.param_grid.clone(), phi1)?,
    ))
}

// ---------------------------------------------------------------------------
// Checker
// ---------------------------------------------------------------------------

/// Trace data for the checker: sampled per-chart fields, or an analytic
/// function with analytic chart graphs (exact derivatives through the whole
/// chain).
pub enum TraceInput<'a> {
    Sampled(Vec<Vec<BoundaryField>>),
    Analytic {
        phi: &'a dyn AnalyticScalar,
        graphs: Vec<&'a dyn AnalyticScalar>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

/// Symmetry defects, overlap-consistency defects, regularity diagnostics,
/// and the verdict.
#[derive(Debug, Clone, Serialize)]
pub struct CompatibilityReport {
    pub dim: usize,
    pub order_m: usize,
    pub tol: f64,
    /// Per chart, per tensor order `q = 0..m-1`.
    pub symmetry_defect: Vec<Vec<f64>>,
    /// Per tensor order: worst relative disagreement across chart pairs on
    /// shared nodes (zero when no nodes are shared).
    pub overlap_defect: Vec<f64>,
    /// Per chart, per `q <= m-2`: discrete `W^{1,p}` norm (diagnostic only).
    pub w1p_norms: Vec<Vec<f64>>,
    /// Per chart: Slobodeckij-type seminorm of `S_{m-1}` (diagnostic only).
    pub slobodeckij_top: Vec<f64>,
    /// Per chart: finite-difference Lipschitz ratio of the graph.
    pub lipschitz_ratio: Vec<f64>,
    pub verdict: Verdict,
}

impl CompatibilityReport {
    /// Largest verdict-relevant defect.
    pub fn max_defect(&self) -> f64 {
        let sym = self
            .symmetry_defect
            .iter()
            .flatten()
            .fold(0.0f64, |m, &v| m.max(v));
        let ovl = self.overlap_defect.iter().fold(0.0f64, |m, &v| m.max(v));
        sym.max(ovl)
    }
}

/// Builds the chain on every chart and checks pointwise symmetry of each
/// tensor plus cross-chart consistency on shared nodes. The verdict is
/// `Accept` iff every symmetry defect and every overlap defect is at most
/// `tol`.
pub fn check_compatibility(
    charts: &[BoundaryChart],
    input: &TraceInput,
    m: usize,
    tol: f64,
    p: f64,
) -> Result<CompatibilityReport> {
    if m < 1 || m > MAX_ORDER {
        return Err(VecpotError::UnsupportedOrder(m));
    }
    if !(tol > 0.0) {
        return Err(VecpotError::InvalidArgument("tolerance must be positive".into()));
    }
    if charts.is_empty() {
        return Err(VecpotError::InvalidArgument("no charts given".into()));
    }
    let dim = charts[0].dim;
    if charts.iter().any(|c| c.dim != dim) {
        return Err(VecpotError::InvalidArgument(
            "charts of mixed ambient dimension".into(),
        ));
    }

    // per-chart chains
    let chains: Vec<Vec<BoundaryField>> = match input {
        TraceInput::Sampled(traces) => {
            if traces.len() != charts.len() {
                return Err(VecpotError::InvalidArgument(
                    "trace data does not cover every chart".into(),
                ));
            }
            charts
                .iter()
                .zip(traces)
                .map(|(c, t)| build_s_chain(t, c, m))
                .collect::<Result<Vec<_>>>()?
        }
        TraceInput::Analytic { phi, graphs } => {
            if graphs.len() != charts.len() {
                return Err(VecpotError::InvalidArgument(
                    "analytic graphs do not cover every chart".into(),
                ));
            }
            charts
                .iter()
                .zip(graphs)
                .map(|(c, g)| chain::build_chain_analytic(c, *g, *phi, m))
                .collect::<Result<Vec<_>>>()?
        }
    };

    let symmetry_defect: Vec<Vec<f64>> = chains
        .iter()
        .map(|ch| ch.iter().map(symmetry_defect).collect())
        .collect();

    let overlap_defect = overlap_defects(charts, &chains, m);

    let mut w1p_norms = Vec::with_capacity(charts.len());
    let mut slobodeckij_top = Vec::with_capacity(charts.len());
    for (c, ch) in charts.iter().zip(&chains) {
        let frames = build_frames(c)?;
        let norms: Vec<f64> = ch
            .iter()
            .take(m.saturating_sub(1))
            .map(|f| w1p_norm_chart(f, c, &frames, p))
            .collect();
        w1p_norms.push(norms);
        slobodeckij_top.push(slobodeckij_seminorm(&ch[m - 1], c, p));
    }

    let lipschitz_ratio: Vec<f64> = charts.iter().map(|c| c.lipschitz_ratio()).collect();

    let worst_sym = symmetry_defect
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &v| acc.max(v));
    let worst_ovl = overlap_defect.iter().fold(0.0f64, |acc, &v| acc.max(v));
    let verdict = if worst_sym <= tol && worst_ovl <= tol {
        Verdict::Accept
    } else {
        Verdict::Reject
    };

    Ok(CompatibilityReport {
        dim,
        order_m: m,
        tol,
        symmetry_defect,
        overlap_defect,
        w1p_norms,
        slobodeckij_top,
        lipschitz_ratio,
        verdict,
    })
}

/// Worst relative disagreement of the chain tensors across chart pairs on
/// ambient-coincident nodes, per tensor order.
fn overlap_defects(
    charts: &[BoundaryChart],
    chains: &[Vec<BoundaryField>],
    m: usize,
) -> Vec<f64> {
    let mut out = vec![0.0f64; m];
    if charts.len() < 2 {
        return out;
    }
    // quantized ambient positions
    let quantum = charts
        .iter()
        .flat_map(|c| c.param_grid.spacing.iter().copied())
        .fold(f64::INFINITY, f64::min)
        * 1e-6;
    let key = |x: &[f64]| -> Vec<i64> {
        x.iter().map(|v| (v / quantum).round() as i64).collect()
    };
    for a in 0..charts.len() {
        let mut map: HashMap<Vec<i64>, usize> = HashMap::new();
        for nd in 0..charts[a].node_count() {
            map.insert(key(&chart_position(&charts[a], nd)), nd);
        }
        for b in (a + 1)..charts.len() {
            for nd_b in 0..charts[b].node_count() {
                let k = key(&chart_position(&charts[b], nd_b));
                if let Some(&nd_a) = map.get(&k) {
                    for q in 0..m {
                        let ta = chains[a][q].node(nd_a);
                        let tb = chains[b][q].node(nd_b);
                        let scale = chains[a][q]
                            .max_abs()
                            .max(chains[b][q].max_abs());
                        if scale == 0.0 {
                            continue;
                        }
                        let diff = ta
                            .iter()
                            .zip(tb)
                            .fold(0.0f64, |mx, (x, y)| mx.max((x - y).abs()));
                        out[q] = out[q].max(diff / scale);
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Boundary mesh file: chart parameter grids, graph samples (inline base64
/// or a field-file path relative to the mesh file), and orientations.
#[derive(Debug, Serialize, Deserialize)]
pub struct BoundaryMeshFile {
    pub dim: usize,
    pub charts: Vec<ChartEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChartEntry {
    pub param_shape: Vec<usize>,
    pub param_spacing: Vec<f64>,
    pub param_origin: Vec<f64>,
    /// `"base64:<f64le data>"` or a field-file path.
    pub graph_values: String,
    pub orientation: i8,
}

pub fn save_boundary_mesh(charts: &[BoundaryChart], path: &Path) -> Result<()> {
    let entries = charts
        .iter()
        .map(|c| {
            let mut bytes = Vec::with_capacity(c.graph.values().len() * 8);
            for v in c.graph.values() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            ChartEntry {
                param_shape: c.param_grid.shape.clone(),
                param_spacing: c.param_grid.spacing.clone(),
                param_origin: c.param_grid.origin.clone(),
                graph_values: format!(
                    "base64:{}",
                    base64::engine::general_purpose::STANDARD.encode(&bytes)
                ),
                orientation: c.orientation,
            }
        })
        .collect();
    let file = BoundaryMeshFile {
        dim: charts.first().map(|c| c.dim).unwrap_or(0),
        charts: entries,
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_boundary_mesh(path: &Path) -> Result<Vec<BoundaryChart>> {
    let text = std::fs::read_to_string(path)?;
    let file: BoundaryMeshFile = serde_json::from_str(&text)?;
    let base_dir = path.parent().unwrap_or(Path::new("."));
    file.charts
        .iter()
        .map(|e| {
            let grid = GridSpec::new_param(
                e.param_shape.clone(),
                e.param_spacing.clone(),
                e.param_origin.clone(),
            )?;
            let values = if let Some(b64) = e.graph_values.strip_prefix("base64:") {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(b64)
                    .map_err(|err| VecpotError::MalformedHeader(err.to_string()))?;
                if bytes.len() != grid.len() * 8 {
                    return Err(VecpotError::PayloadMismatch(format!(
                        "graph payload {} bytes, expected {}",
                        bytes.len(),
                        grid.len() * 8
                    )));
                }
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect()
            } else {
                match crate::grid_fields::read_field(&base_dir.join(&e.graph_values))? {
                    crate::grid_fields::AnyField::Scalar(f) => f.into_values(),
                    other => {
                        return Err(VecpotError::UnsupportedKind(format!(
                            "chart graph must be a scalar field, got {}",
                            other.kind()
                        )))
                    }
                }
            };
            let graph = ScalarField::new(grid.clone(), values)?;
            BoundaryChart::new(grid, graph, e.orientation)
        })
        .collect()
}

/// Trace data file: map from trace order (as a string) to one scalar
/// field-file path per chart, relative to the data file.
pub type TraceDataFile = std::collections::BTreeMap<String, Vec<String>>;

pub fn save_trace_data(
    traces: &[Vec<BoundaryField>],
    dir: &Path,
    index_path: &Path,
) -> Result<()> {
    let m = traces.first().map(|t| t.len()).unwrap_or(0);
    let mut map: TraceDataFile = Default::default();
    for q in 0..m {
        let mut paths = Vec::new();
        for (ci, per_chart) in traces.iter().enumerate() {
            let field = &per_chart[q];
            if field.order != 0 {
                return Err(VecpotError::InvalidArgument(
                    "trace files store order-0 boundary fields".into(),
                ));
            }
            let name = format!("trace_q{q}_chart{ci}.field");
            let scalar = ScalarField::new(field.param_grid.clone(), field.values.clone())?;
            crate::grid_fields::write_field(&scalar, &dir.join(&name))?;
            paths.push(name);
        }
        map.insert(q.to_string(), paths);
    }
    std::fs::write(index_path, serde_json::to_string_pretty(&map)?)?;
    Ok(())
}

pub fn load_trace_data(
    index_path: &Path,
    charts: &[BoundaryChart],
) -> Result<Vec<Vec<BoundaryField>>> {
    let text = std::fs::read_to_string(index_path)?;
    let map: TraceDataFile = serde_json::from_str(&text)?;
    let base_dir = index_path.parent().unwrap_or(Path::new("."));
    let m = map.len();
    let mut out: Vec<Vec<BoundaryField>> = vec![Vec::with_capacity(m); charts.len()];
    for q in 0..m {
        let paths = map.get(&q.to_string()).ok_or_else(|| {
            VecpotError::InvalidArgument(format!("trace data missing order {q}"))
        })?;
        if paths.len() != charts.len() {
            return Err(VecpotError::InvalidArgument(format!(
                "trace order {q} lists {} charts, expected {}",
                paths.len(),
                charts.len()
            )));
        }
        for (ci, rel) in paths.iter().enumerate() {
            let field = match crate::grid_fields::read_field(&base_dir.join(rel))? {
                crate::grid_fields::AnyField::Scalar(f) => f,
                other => {
                    return Err(VecpotError::UnsupportedKind(format!(
                        "trace files must be scalar fields, got {}",
                        other.kind()
                    )))
                }
            };
            if !field.grid().same_layout(&charts[ci].param_grid) {
                return Err(VecpotError::GridMismatch(format!(
                    "trace field for chart {ci} is on a different parameter grid"
                )));
            }
            out[ci].push(BoundaryField::scalar(
                charts[ci].dim,
                charts[ci].param_grid.clone(),
                field.into_values(),
            )?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
