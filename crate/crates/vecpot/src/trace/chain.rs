//! The compatibility tensor chain.
//!
//! Starting from candidate traces `phi_0, ..., phi_{m-1}` on a chart, the
//! chain builds order-`q` tensors
//!
//! ```text
//! S_0 = phi_0
//! S_q = grad_G S_{q-1}
//!     + sum_{k=1}^{q-1} sum_i (n x^k) x tau_i x (d_{tau_i} S_{q-1} . n^k)
//!     + (n x^q) phi_q
//! ```
//!
//! where `grad_G u = sum_i tau_i x d_{tau_i} u` and the `k`-fold contraction
//! acts on the last `k` indices. For traces of a smooth function, `S_q` is
//! the pullback of its `q`-th derivative tensor, so total symmetry of every
//! `S_q` is the finitely checkable compatibility condition.
//!
//! Two derivative engines feed the same assembly: finite differences on the
//! chart parameter grid (sampled data), and exact truncated Taylor jets
//! (analytic data), so analytic runs verify symmetry at roundoff rather than
//! discretization level.

use super::jets::{compose, Jet};
use crate::diff_ops::{axis_diff, StencilMode};
use crate::error::{Result, VecpotError};
use crate::grid_fields::GridSpec;
use crate::oracle::AnalyticScalar;

/// Maximum supported trace order `m` (tensor order `m - 1`).
pub const MAX_ORDER: usize = 4;

/// Tensor-valued field sampled on a chart parameter grid. Values are stored
/// node-major, then row-major over the `N^order` tensor index (first index
/// slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    pub ambient_dim: usize,
    pub order: usize,
    pub param_grid: GridSpec,
    pub values: Vec<f64>,
}

impl BoundaryField {
    pub fn zeros(ambient_dim: usize, order: usize, param_grid: GridSpec) -> Self {
        let len = param_grid.len() * ambient_dim.pow(order as u32);
        BoundaryField {
            ambient_dim,
            order,
            param_grid,
            values: vec![0.0; len],
        }
    }

    pub fn tensor_len(&self) -> usize {
        self.ambient_dim.pow(self.order as u32)
    }

    pub fn node_count(&self) -> usize {
        self.param_grid.len()
    }

    /// Tensor entries of one node.
    pub fn node(&self, node: usize) -> &[f64] {
        let t = self.tensor_len();
        &self.values[node * t..(node + 1) * t]
    }

    pub fn node_mut(&mut self, node: usize) -> &mut [f64] {
        let t = self.tensor_len();
        &mut self.values[node * t..(node + 1) * t]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Scalar (order-0) field from per-node values.
    pub fn scalar(ambient_dim: usize, param_grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != param_grid.len() {
            return Err(VecpotError::InvalidArgument(
                "boundary field length mismatch".into(),
            ));
        }
        Ok(BoundaryField {
            ambient_dim,
            order: 0,
            param_grid,
            values,
        })
    }
}

/// Decodes a flat tensor index into per-slot indices (first slot slowest).
pub(crate) fn tensor_unravel(flat: usize, n: usize, order: usize, out: &mut [usize]) {
    let mut rem = flat;
    for slot in (0..order).rev() {
        out[slot] = rem % n;
        rem /= n;
    }
}

pub(crate) fn tensor_ravel(idx: &[usize], n: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Scalar algebra shared by the finite-difference (`f64`) and analytic
/// (`Jet`) chain builds.
pub trait ChainScalar: Clone {
    fn zero_like(&self) -> Self;
    fn add_s(&self, o: &Self) -> Self;
    fn mul_s(&self, o: &Self) -> Self;
    fn value_of(&self) -> f64;
}

impl ChainScalar for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add_s(&self, o: &Self) -> Self {
        self + o
    }
    fn mul_s(&self, o: &Self) -> Self {
        self * o
    }
    fn value_of(&self) -> f64 {
        *self
    }
}

impl ChainScalar for Jet {
    fn zero_like(&self) -> Self {
        Jet::zero_same_shape(self)
    }
    fn add_s(&self, o: &Self) -> Self {
        self.add(o)
    }
    fn mul_s(&self, o: &Self) -> Self {
        self.mul(o)
    }
    fn value_of(&self) -> f64 {
        self.value()
    }
}

/// One chain step at a single node.
///
/// * `tangents`, `normal`: the frame as `T`-vectors of length `N`.
/// * `ds[i]`: the tangential derivative of `S_{q-1}` along `tau_i`,
///   an order-`q-1` tensor (`N^(q-1)` entries).
/// * `phi_q`: the order-`q` trace value.
///
/// Returns the order-`q` tensor `S_q` at the node.
pub(crate) fn assemble_step<T: ChainScalar>(
    n_dim: usize,
    q: usize,
    tangents: &[Vec<T>],
    normal: &[T],
    ds: &[Vec<T>],
    phi_q: &T,
) -> Vec<T> {
    let zero = phi_q.zero_like();
    let out_len = n_dim.pow(q as u32);
    let prev_len = n_dim.pow(q as u32 - 1);
    let mut out = vec![zero.clone(); out_len];
    let mut idx = vec![0usize; q];

    // grad_G term: out[a, J] += tau_i[a] * ds[i][J]
    for (i, tau) in tangents.iter().enumerate() {
        for j in 0..prev_len {
            for a in 0..n_dim {
                let o = a * prev_len + j;
                out[o] = out[o].add_s(&tau[a].mul_s(&ds[i][j]));
            }
        }
    }

    // contraction terms, k = 1 .. q-1:
    // out[a_1..a_k, b, J'] += n[a_1]..n[a_k] * tau_i[b] * (ds[i] . n^k)[J']
    for k in 1..q {
        let contracted_len = n_dim.pow((q - 1 - k) as u32);
        for (_i, tau) in tangents.iter().enumerate() {
            let dsi = &ds[_i];
            // contract the last k indices of ds[i] with the normal
            let mut contracted = vec![zero.clone(); contracted_len];
            let mut tail = vec![0usize; k];
            for (jp, c) in contracted.iter_mut().enumerate() {
                let mut acc = zero.clone();
                let tail_count = n_dim.pow(k as u32);
                for tflat in 0..tail_count {
                    tensor_unravel(tflat, n_dim, k, &mut tail);
                    let mut weight = dsi[jp * tail_count + tflat].clone();
                    for &t in tail.iter() {
                        weight = weight.mul_s(&normal[t]);
                    }
                    acc = acc.add_s(&weight);
                }
                *c = acc;
            }
            // scatter into out
            let head_count = n_dim.pow(k as u32);
            let mut head = vec![0usize; k];
            for hflat in 0..head_count {
                tensor_unravel(hflat, n_dim, k, &mut head);
                let mut nprod = match head.first() {
                    Some(&h0) => normal[h0].clone(),
                    None => unreachable!("k >= 1"),
                };
                for &h in &head[1..] {
                    nprod = nprod.mul_s(&normal[h]);
                }
                for b in 0..n_dim {
                    let tb = nprod.mul_s(&tau[b]);
                    for (jp, c) in contracted.iter().enumerate() {
                        // flat index of (head, b, J')
                        let o = (hflat * n_dim + b) * contracted_len + jp;
                        out[o] = out[o].add_s(&tb.mul_s(c));
                    }
                }
            }
        }
    }

    // trailing term: out[a_1..a_q] += phi_q * n[a_1]..n[a_q]
    for (flat, o) in out.iter_mut().enumerate() {
        tensor_unravel(flat, n_dim, q, &mut idx);
        let mut nprod = phi_q.clone();
        for &a in idx.iter() {
            nprod = nprod.mul_s(&normal[a]);
        }
        *o = o.add_s(&nprod);
    }

    out
}

// ---------------------------------------------------------------------------
// Finite-difference engine
// ---------------------------------------------------------------------------

/// Tangential derivatives of every tensor entry of `u` along each tangent:
/// `d_{tau_i} u = sum_k tau_i[k] D_k u` with `D_k` the chart-grid stencil.
pub(crate) fn tangential_derivs_fd(
    u: &BoundaryField,
    frames: &[super::Frame],
) -> Vec<Vec<Vec<f64>>> {
    let grid = &u.param_grid;
    let d = grid.dim;
    let tlen = u.tensor_len();
    let nodes = grid.len();
    // D_k of each tensor component
    let mut dk: Vec<Vec<Vec<f64>>> = Vec::with_capacity(d);
    for k in 0..d {
        let mut per_comp = Vec::with_capacity(tlen);
        for t in 0..tlen {
            let comp: Vec<f64> = (0..nodes).map(|nd| u.values[nd * tlen + t]).collect();
            per_comp.push(axis_diff(&comp, grid, k, StencilMode::OneSidedEdges));
        }
        dk.push(per_comp);
    }
    // combine with the tangents nodewise: out[node][i][t]
    (0..nodes)
        .map(|nd| {
            let frame = &frames[nd];
            frame
                .tangents
                .iter()
                .map(|tau| {
                    (0..tlen)
                        .map(|t| {
                            let mut acc = 0.0;
                            for k in 0..d {
                                acc += tau[k] * dk[k][t][nd];
                            }
                            acc
                        })
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<Vec<f64>>>()
        })
        .collect()
}

/// One finite-difference chain step on a whole chart.
pub(crate) fn chain_step_fd(
    prev: &BoundaryField,
    phi_q: &BoundaryField,
    frames: &[super::Frame],
    q: usize,
) -> Result<BoundaryField> {
    if phi_q.order != 0 || prev.order != q - 1 {
        return Err(VecpotError::InvalidArgument(
            "chain step: wrong tensor orders".into(),
        ));
    }
    let n_dim = prev.ambient_dim;
    let derivs = tangential_derivs_fd(prev, frames);
    let mut out = BoundaryField::zeros(n_dim, q, prev.param_grid.clone());
    let tlen = out.tensor_len();
    for nd in 0..prev.node_count() {
        let frame = &frames[nd];
        let tangents: Vec<Vec<f64>> = frame.tangents.clone();
        let normal: Vec<f64> = frame.normal.clone();
        let ds: Vec<Vec<f64>> = derivs[nd].clone();
        let s = assemble_step(n_dim, q, &tangents, &normal, &ds, &phi_q.values[nd]);
        out.values[nd * tlen..(nd + 1) * tlen].copy_from_slice(&s);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Analytic (jet) engine
// ---------------------------------------------------------------------------

/// Frame of jet-valued vectors at one chart node.
pub(crate) struct JetFrame {
    pub tangents: Vec<Vec<Jet>>,
    pub normal: Vec<Jet>,
}

/// Builds the frame jets at a node of an analytic graph chart. `orientation`
/// is +1 when the domain lies above the graph (outward normal points down).
pub(crate) fn frame_jets(
    graph: &dyn AnalyticScalar,
    y0: &[f64],
    orientation: i8,
    r: usize,
) -> Result<JetFrame> {
    let d = y0.len();
    let n_dim = d + 1;
    // jets of the graph partials d_k phi
    let dphi: Vec<Jet> = (0..d)
        .map(|k| {
            Jet::from_partials(d, r, |beta| {
                let mut alpha = beta.to_vec();
                alpha[k] += 1;
                graph.partial_at(y0, &alpha)
            })
        })
        .collect();
    let zero = Jet::zero(d, r);
    let one = Jet::constant(d, r, 1.0);
    // raw tangents t_k = e_k + d_k(phi) e_N
    let raw: Vec<Vec<Jet>> = (0..d)
        .map(|k| {
            (0..n_dim)
                .map(|a| {
                    if a == k {
                        one.clone()
                    } else if a == n_dim - 1 {
                        dphi[k].clone()
                    } else {
                        zero.clone()
                    }
                })
                .collect()
        })
        .collect();
    // Gram-Schmidt in order
    let mut tangents: Vec<Vec<Jet>> = Vec::with_capacity(d);
    for t in raw {
        let mut v = t;
        for prev in &tangents {
            let mut dot = zero.clone();
            for a in 0..n_dim {
                dot = dot.add(&v[a].mul(&prev[a]));
            }
            for a in 0..n_dim {
                v[a] = v[a].sub(&dot.mul(&prev[a]));
            }
        }
        let mut norm2 = zero.clone();
        for a in 0..n_dim {
            norm2 = norm2.add(&v[a].mul(&v[a]));
        }
        if norm2.value() < 1e-24 {
            return Err(VecpotError::DegenerateFrame(norm2.value().sqrt()));
        }
        let inv = norm2.sqrt().recip();
        tangents.push(v.into_iter().map(|c| c.mul(&inv)).collect());
    }
    // outward normal: orientation * (grad phi, -1) / sqrt(1 + |grad phi|^2)
    let mut norm2 = one.clone();
    for k in 0..d {
        norm2 = norm2.add(&dphi[k].mul(&dphi[k]));
    }
    let inv = norm2.sqrt().recip();
    let sgn = orientation as f64;
    let mut normal: Vec<Jet> = (0..n_dim)
        .map(|a| {
            if a == n_dim - 1 {
                inv.scale(-sgn)
            } else {
                dphi[a].mul(&inv).scale(sgn)
            }
        })
        .collect();
    // positively oriented basis: flip the last tangent if needed
    let mut mat = vec![0.0; n_dim * n_dim];
    for (col, t) in tangents.iter().enumerate() {
        for a in 0..n_dim {
            mat[a * n_dim + col] = t[a].value();
        }
    }
    for a in 0..n_dim {
        mat[a * n_dim + n_dim - 1] = normal[a].value();
    }
    if super::det_dense(&mut mat, n_dim) < 0.0 {
        if let Some(last) = tangents.last_mut() {
            for c in last.iter_mut() {
                *c = c.scale(-1.0);
            }
        } else {
            for c in normal.iter_mut() {
                *c = c.scale(-1.0);
            }
        }
    }
    Ok(JetFrame { tangents, normal })
}

/// Builds the full chain `S_0..S_{m-1}` at every chart node with exact jet
/// derivatives of the analytic volume function and graph.
pub(crate) fn build_chain_analytic(
    chart: &super::BoundaryChart,
    graph: &dyn AnalyticScalar,
    phi: &dyn AnalyticScalar,
    m: usize,
) -> Result<Vec<BoundaryField>> {
    if m < 1 || m > MAX_ORDER {
        return Err(VecpotError::UnsupportedOrder(m));
    }
    let n_dim = chart.dim;
    let d = n_dim - 1;
    let grid = chart.param_grid.clone();
    let r = m - 1;
    let mut fields: Vec<BoundaryField> = (0..m)
        .map(|q| BoundaryField::zeros(n_dim, q, grid.clone()))
        .collect();

    for nd in 0..grid.len() {
        let y0 = grid.position(&grid.unravel(nd));
        let frame = frame_jets(graph, &y0, chart.orientation, r)?;
        // jets of the chart map
        let mut xjets: Vec<Jet> = (0..d).map(|k| Jet::variable(d, r, k, y0[k])).collect();
        xjets.push(Jet::from_partials(d, r, |beta| graph.partial_at(&y0, beta)));
        // jets of the ambient partials pulled back to the chart, up to the
        // orders the traces need
        let gamma_jet = |q: usize| -> Jet {
            // sum over all q-tuples of ambient indices
            let mut acc = Jet::zero(d, r);
            let count = n_dim.pow(q as u32);
            let mut tuple = vec![0usize; q];
            for flat in 0..count {
                tensor_unravel(flat, n_dim, q, &mut tuple);
                let mut alpha = vec![0usize; n_dim];
                for &t in &tuple {
                    alpha[t] += 1;
                }
                let part = compose(phi, &alpha, &xjets, r);
                let mut term = part;
                for &t in &tuple {
                    term = term.mul(&frame.normal[t]);
                }
                acc = acc.add(&term);
            }
            acc
        };

        // S_0
        let s0 = gamma_jet(0);
        fields[0].values[nd] = s0.value();
        // recursion with jet tensors
        let mut prev: Vec<Jet> = vec![s0];
        for q in 1..m {
            let prev_len = n_dim.pow((q - 1) as u32);
            debug_assert_eq!(prev.len(), prev_len);
            // tangential derivatives: d_{tau_i} entry = sum_k tau_i[k] *
            // d(entry)/dy_k
            let ds: Vec<Vec<Jet>> = frame
                .tangents
                .iter()
                .map(|tau| {
                    (0..prev_len)
                        .map(|j| {
                            let mut acc: Option<Jet> = None;
                            for k in 0..d {
                                let term = tau[k].mul(&prev[j].partial(k));
                                acc = Some(match acc {
                                    None => term,
                                    Some(a) => a.add(&term),
                                });
                            }
                            acc.expect("at least one parameter")
                        })
                        .collect()
                })
                .collect();
            let phi_q = gamma_jet(q);
            let s = assemble_step(n_dim, q, &frame.tangents, &frame.normal, &ds, &phi_q);
            let tlen = n_dim.pow(q as u32);
            for (t, entry) in s.iter().enumerate() {
                fields[q].values[nd * tlen + t] = entry.value_of();
            }
            prev = s;
        }
    }
    Ok(fields)
}

// ---------------------------------------------------------------------------
// Defects and chart seminorms
// ---------------------------------------------------------------------------

/// Largest pointwise asymmetry under any index-pair swap, relative to the
/// field's largest entry. Orders 0 and 1 report 0.
pub fn symmetry_defect(field: &BoundaryField) -> f64 {
    if field.order < 2 {
        return 0.0;
    }
    let n = field.ambient_dim;
    let q = field.order;
    let tlen = field.tensor_len();
    let scale = field.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    let mut idx = vec![0usize; q];
    for nd in 0..field.node_count() {
        let t = field.node(nd);
        for flat in 0..tlen {
            tensor_unravel(flat, n, q, &mut idx);
            for p1 in 0..q {
                for p2 in (p1 + 1)..q {
                    if idx[p1] == idx[p2] {
                        continue;
                    }
                    let mut swapped = idx.clone();
                    swapped.swap(p1, p2);
                    let other = tensor_ravel(&swapped, n);
                    worst = worst.max((t[flat] - t[other]).abs());
                }
            }
        }
    }
    worst / scale
}

/// Area element of the chart at each node:
/// `prod(param spacing) * sqrt(1 + |grad phi|^2)`, finite differences.
pub(crate) fn area_elements(chart: &super::BoundaryChart) -> Vec<f64> {
    let grid = &chart.param_grid;
    let base: f64 = grid.spacing.iter().product();
    let d = grid.dim;
    let grads: Vec<Vec<f64>> = (0..d)
        .map(|k| axis_diff(chart.graph.values(), grid, k, StencilMode::OneSidedEdges))
        .collect();
    (0..grid.len())
        .map(|nd| {
            let g2: f64 = grads.iter().map(|g| g[nd] * g[nd]).sum();
            base * (1.0 + g2).sqrt()
        })
        .collect()
}

/// Discrete `W^{1,p}` norm of a tensor field over its chart.
pub fn w1p_norm_chart(
    field: &BoundaryField,
    chart: &super::BoundaryChart,
    frames: &[super::Frame],
    p: f64,
) -> f64 {
    let area = area_elements(chart);
    let derivs = tangential_derivs_fd(field, frames);
    let mut total = 0.0;
    for nd in 0..field.node_count() {
        let mag2: f64 = field.node(nd).iter().map(|v| v * v).sum();
        let grad2: f64 = derivs[nd]
            .iter()
            .flat_map(|per_t| per_t.iter().map(|v| v * v))
            .sum();
        total += (mag2.powf(p / 2.0) + grad2.powf(p / 2.0)) * area[nd];
    }
    total.powf(1.0 / p)
}

/// Discrete Slobodeckij-type double-sum seminorm (order `s = 1 - 1/p`) of a
/// tensor field over its chart:
/// `sum_{x != y} |T(x) - T(y)|^p / |x - y|^(d + s p) dA_x dA_y`.
pub fn slobodeckij_seminorm(field: &BoundaryField, chart: &super::BoundaryChart, p: f64) -> f64 {
    let s = 1.0 - 1.0 / p;
    let grid = &chart.param_grid;
    let nodes = grid.len();
    let area = area_elements(chart);
    let tlen = field.tensor_len();
    let exponent = (grid.dim as f64 + s * p) / 2.0;
    let positions: Vec<Vec<f64>> = (0..nodes)
        .map(|nd| super::chart_position(chart, nd))
        .collect();
    let mut total = 0.0;
    for a in 0..nodes {
        for b in (a + 1)..nodes {
            let dist2: f64 = positions[a]
                .iter()
                .zip(&positions[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            if dist2 == 0.0 {
                continue;
            }
            let mut diff2 = 0.0;
            for t in 0..tlen {
                let d = field.values[a * tlen + t] - field.values[b * tlen + t];
                diff2 += d * d;
            }
            total += 2.0 * diff2.powf(p / 2.0) / dist2.powf(exponent) * area[a] * area[b];
        }
    }
    total.powf(1.0 / p)
}
