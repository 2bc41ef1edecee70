//! Discrete grad, div, curl, scurl, Laplacians, and inner products.
//!
//! All first derivatives are central differences (second-order one-sided at
//! non-periodic edges). Differences along distinct axes commute exactly, so
//!
//! * `curl(grad f) = 0` and `div(scurl A) = 0` hold to roundoff everywhere,
//! * the wide Laplacian (the composition `sum_k D_k D_k`) satisfies
//!   `-lap_wide f = -grad(div f) + scurl(curl f)` as an exact operator
//!   identity,
//! * summation by parts `inner(curl g, A) = inner(g, scurl A)` is exact on
//!   periodic grids and on data supported at least two cells inside the
//!   boundary.
//!
//! The compact Laplacian is the usual `2N+1`-point stencil, used where a
//! tight-stencil residual is wanted (Poisson checks) rather than identity
//! exactness.

use crate::error::{Result, VecpotError};
use crate::grid_fields::{pair_list, AntisymField, GridSpec, ScalarField, VectorField};
use rayon::prelude::*;

/// Edge handling for difference stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilMode {
    /// Wrap around; requires at least 3 samples per axis.
    Periodic,
    /// Second-order one-sided stencils at the first and last node.
    OneSidedEdges,
}

impl StencilMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(StencilMode::Periodic),
            "edges" | "one_sided_edges" => Ok(StencilMode::OneSidedEdges),
            other => Err(VecpotError::InvalidArgument(format!(
                "unknown stencil mode {other:?} (expected periodic|edges)"
            ))),
        }
    }
}

const PAR_THRESHOLD: usize = 1 << 15;

/// Central difference along `axis`.
pub fn axis_diff(values: &[f64], grid: &GridSpec, axis: usize, mode: StencilMode) -> Vec<f64> {
    let n = grid.shape[axis];
    let stride = grid.strides()[axis];
    let inv2h = 1.0 / (2.0 * grid.spacing[axis]);
    let at = |flat: usize| -> f64 {
        let ia = (flat / stride) % n;
        match mode {
            StencilMode::Periodic => {
                let up = if ia + 1 == n {
                    flat + stride - n * stride
                } else {
                    flat + stride
                };
                let dn = if ia == 0 {
                    flat + (n - 1) * stride
                } else {
                    flat - stride
                };
                (values[up] - values[dn]) * inv2h
            }
            StencilMode::OneSidedEdges => {
                if ia == 0 {
                    (-3.0 * values[flat] + 4.0 * values[flat + stride]
                        - values[flat + 2 * stride])
                        * inv2h
                } else if ia + 1 == n {
                    (3.0 * values[flat] - 4.0 * values[flat - stride]
                        + values[flat - 2 * stride])
                        * inv2h
                } else {
                    (values[flat + stride] - values[flat - stride]) * inv2h
                }
            }
        }
    };
    if values.len() >= PAR_THRESHOLD {
        (0..values.len()).into_par_iter().map(at).collect()
    } else {
        (0..values.len()).map(at).collect()
    }
}

/// Second difference along `axis` (the compact 3-point stencil).
fn axis_diff2(values: &[f64], grid: &GridSpec, axis: usize, mode: StencilMode) -> Vec<f64> {
    let n = grid.shape[axis];
    let stride = grid.strides()[axis];
    let invh2 = 1.0 / (grid.spacing[axis] * grid.spacing[axis]);
    let at = |flat: usize| -> f64 {
        let ia = (flat / stride) % n;
        match mode {
            StencilMode::Periodic => {
                let up = if ia + 1 == n {
                    flat + stride - n * stride
                } else {
                    flat + stride
                };
                let dn = if ia == 0 {
                    flat + (n - 1) * stride
                } else {
                    flat - stride
                };
                (values[up] - 2.0 * values[flat] + values[dn]) * invh2
            }
            StencilMode::OneSidedEdges => {
                if ia == 0 {
                    if n >= 4 {
                        (2.0 * values[flat] - 5.0 * values[flat + stride]
                            + 4.0 * values[flat + 2 * stride]
                            - values[flat + 3 * stride])
                            * invh2
                    } else {
                        (values[flat] - 2.0 * values[flat + stride] + values[flat + 2 * stride])
                            * invh2
                    }
                } else if ia + 1 == n {
                    if n >= 4 {
                        (2.0 * values[flat] - 5.0 * values[flat - stride]
                            + 4.0 * values[flat - 2 * stride]
                            - values[flat - 3 * stride])
                            * invh2
                    } else {
                        (values[flat] - 2.0 * values[flat - stride] + values[flat - 2 * stride])
                            * invh2
                    }
                } else {
                    (values[flat + stride] - 2.0 * values[flat] + values[flat - stride]) * invh2
                }
            }
        }
    };
    if values.len() >= PAR_THRESHOLD {
        (0..values.len()).into_par_iter().map(at).collect()
    } else {
        (0..values.len()).map(at).collect()
    }
}

fn scalar_from(grid: &GridSpec, values: Vec<f64>) -> ScalarField {
    ScalarField::new(grid.clone(), values).expect("difference of finite field is finite")
}

/// Gradient of a scalar field.
pub fn grad(f: &ScalarField, mode: StencilMode) -> VectorField {
    let grid = f.grid();
    let comps = (0..grid.dim)
        .map(|k| scalar_from(grid, axis_diff(f.values(), grid, k, mode)))
        .collect();
    VectorField::new(comps).expect("components share the input grid")
}

/// Divergence of a vector field.
pub fn div(v: &VectorField, mode: StencilMode) -> ScalarField {
    let grid = v.grid();
    let mut acc = vec![0.0; grid.len()];
    for k in 0..grid.dim {
        let d = axis_diff(v.comp(k).values(), grid, k, mode);
        for (a, b) in acc.iter_mut().zip(&d) {
            *a += b;
        }
    }
    scalar_from(grid, acc)
}

/// Antisymmetric-matrix curl: upper component `(i, j)` is
/// `(D_i v_j - D_j v_i) / 2`.
pub fn curl(v: &VectorField, mode: StencilMode) -> AntisymField {
    let grid = v.grid();
    let upper = pair_list(grid.dim)
        .into_iter()
        .map(|(i, j)| {
            let di_vj = axis_diff(v.comp(j).values(), grid, i, mode);
            let dj_vi = axis_diff(v.comp(i).values(), grid, j, mode);
            let vals: Vec<f64> = di_vj
                .iter()
                .zip(&dj_vi)
                .map(|(a, b)| 0.5 * (a - b))
                .collect();
            scalar_from(grid, vals)
        })
        .collect();
    AntisymField::new(grid.dim, upper).expect("pair components share the input grid")
}

// Test hook: disables the factor 2 in scurl so a deliberately broken build
// can be exercised end to end. Never set outside tests.
fn scurl_factor() -> f64 {
    use std::sync::OnceLock;
    static FACTOR: OnceLock<f64> = OnceLock::new();
    *FACTOR.get_or_init(|| {
        if std::env::var("VECPOT_TEST_SCURL_NO_FACTOR2").is_ok() {
            1.0
        } else {
            2.0
        }
    })
}

/// Adjoint of [`curl`] under the factor-2 pairing: component `i` is
/// `sum_j 2 D_j A_ij`, using the skew reconstruction for `j < i`.
pub fn scurl(a: &AntisymField, mode: StencilMode) -> VectorField {
    let grid = a.grid();
    let n = grid.dim;
    let factor = scurl_factor();
    let comps = (0..n)
        .map(|i| {
            let mut acc = vec![0.0; grid.len()];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let (sign, comp) = if i < j {
                    (1.0, a.upper(i, j))
                } else {
                    (-1.0, a.upper(j, i))
                };
                let d = axis_diff(comp.values(), grid, j, mode);
                for (out, v) in acc.iter_mut().zip(&d) {
                    *out += factor * sign * v;
                }
            }
            scalar_from(grid, acc)
        })
        .collect();
    VectorField::new(comps).expect("components share the input grid")
}

/// Wide Laplacian: the exact composition `sum_k D_k(D_k f)` (stencil reach
/// `2h` per axis).
pub fn laplacian_wide(f: &ScalarField, mode: StencilMode) -> ScalarField {
    let grid = f.grid();
    let mut acc = vec![0.0; grid.len()];
    for k in 0..grid.dim {
        let d1 = axis_diff(f.values(), grid, k, mode);
        let d2 = axis_diff(&d1, grid, k, mode);
        for (a, b) in acc.iter_mut().zip(&d2) {
            *a += b;
        }
    }
    scalar_from(grid, acc)
}

pub fn laplacian_wide_vector(v: &VectorField, mode: StencilMode) -> VectorField {
    let comps = v
        .components()
        .iter()
        .map(|c| laplacian_wide(c, mode))
        .collect();
    VectorField::new(comps).expect("components share the input grid")
}

/// Compact Laplacian: the `2N+1`-point stencil.
pub fn laplacian_compact(f: &ScalarField, mode: StencilMode) -> ScalarField {
    let grid = f.grid();
    let mut acc = vec![0.0; grid.len()];
    for k in 0..grid.dim {
        let d2 = axis_diff2(f.values(), grid, k, mode);
        for (a, b) in acc.iter_mut().zip(&d2) {
            *a += b;
        }
    }
    scalar_from(grid, acc)
}

pub fn laplacian_compact_vector(v: &VectorField, mode: StencilMode) -> VectorField {
    let comps = v
        .components()
        .iter()
        .map(|c| laplacian_compact(c, mode))
        .collect();
    VectorField::new(comps).expect("components share the input grid")
}

fn check_same_grid(a: &GridSpec, b: &GridSpec, what: &str) -> Result<()> {
    if !a.same_layout(b) {
        return Err(VecpotError::GridMismatch(what.to_string()));
    }
    Ok(())
}

/// `int f g` by the full-cell Riemann sum.
pub fn inner_scalar(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    check_same_grid(a.grid(), b.grid(), "inner_scalar")?;
    let vol = a.grid().cell_volume();
    Ok(a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * vol)
}

/// `int f . g` componentwise.
pub fn inner_vector(a: &VectorField, b: &VectorField) -> Result<f64> {
    check_same_grid(a.grid(), b.grid(), "inner_vector")?;
    let mut total = 0.0;
    for (ca, cb) in a.components().iter().zip(b.components()) {
        total += inner_scalar(ca, cb)?;
    }
    Ok(total)
}

/// Tensor pairing with the factor 2 over full index pairs, equivalently
/// `4 sum_{i<j}` on the stored upper components.
pub fn inner_antisym(a: &AntisymField, b: &AntisymField) -> Result<f64> {
    check_same_grid(a.grid(), b.grid(), "inner_antisym")?;
    let mut total = 0.0;
    for (ca, cb) in a.upper_components().iter().zip(b.upper_components()) {
        total += inner_scalar(ca, cb)?;
    }
    Ok(4.0 * total)
}

/// Pointwise tangential-trace matrix: entry `(i, j)` is
/// `(f_j n_i - f_i n_j) / 2`, returned row-major. `n` must be unit length
/// to within 1e-12.
pub fn gamma_t_pointwise(f: &[f64], n: &[f64]) -> Result<Vec<f64>> {
    if f.len() != n.len() {
        return Err(VecpotError::InvalidArgument(
            "gamma_t: vector and normal lengths differ".into(),
        ));
    }
    let len: f64 = n.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (len - 1.0).abs() > 1e-12 {
        return Err(VecpotError::NonUnitNormal(len));
    }
    let d = f.len();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = 0.5 * (f[j] * n[i] - f[i] * n[j]);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Identity suite
// ---------------------------------------------------------------------------

/// One identity check: name and relative defect.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub rel_defect: f64,
}

fn rel(defect: f64, scale: f64) -> f64 {
    defect / scale.max(f64::MIN_POSITIVE)
}

/// Runs the four operator identities on seeded smooth fields and reports
/// relative defects. All four are expected at roundoff level (<= 1e-12) for
/// periodic stencils or interior-supported data.
pub fn identity_suite(
    dim: usize,
    n: usize,
    seed: u64,
    mode: StencilMode,
) -> Result<Vec<IdentityCheck>> {
    use crate::synth;
    if !(2..=8).contains(&dim) {
        return Err(VecpotError::InvalidArgument(format!(
            "identity suite supports dim in [2, 8], got {dim}"
        )));
    }
    if n < 8 {
        return Err(VecpotError::InvalidArgument(format!(
            "identity suite needs at least 8 nodes per axis, got {n}"
        )));
    }
    let grid = match mode {
        // spacing 1/n so that node n wraps onto node 0 exactly one period away
        StencilMode::Periodic => {
            GridSpec::new(vec![n; dim], vec![1.0 / n as f64; dim], vec![0.0; dim])?
        }
        StencilMode::OneSidedEdges => GridSpec::cube(dim, n, 1.0)?,
    };
    let gen = |s: u64| -> synth::FieldGen {
        match mode {
            StencilMode::Periodic => synth::FieldGen::periodic(s),
            StencilMode::OneSidedEdges => synth::FieldGen::bump(s, 2),
        }
    };
    let eta = gen(seed).scalar(&grid)?;
    let g = gen(seed.wrapping_add(101)).vector(&grid)?;
    let v = gen(seed.wrapping_add(202)).vector(&grid)?;
    let a = gen(seed.wrapping_add(303)).antisym(&grid)?;

    let mut checks = Vec::new();

    let grad_eta = grad(&eta, mode);
    let cg = curl(&grad_eta, mode);
    checks.push(IdentityCheck {
        name: "curl_grad_zero".into(),
        rel_defect: rel(cg.max_abs(), grad_eta.max_abs()),
    });

    let sa = scurl(&a, mode);
    let ds = div(&sa, mode);
    checks.push(IdentityCheck {
        name: "div_scurl_zero".into(),
        rel_defect: rel(ds.max_abs(), sa.max_abs()),
    });

    let curl_g = curl(&g, mode);
    let lhs = inner_antisym(&curl_g, &a)?;
    let rhs = inner_vector(&g, &scurl(&a, mode))?;
    // the pairing itself may be near zero; normalize by its Cauchy-Schwarz
    // bound so the defect stays a relative quantity
    let l2 = crate::grid_fields::NormSpec::l2();
    let cs = crate::grid_fields::discrete_norm(&curl_g, &l2)
        * crate::grid_fields::discrete_norm(&a, &l2);
    checks.push(IdentityCheck {
        name: "curl_scurl_adjoint".into(),
        rel_defect: rel((lhs - rhs).abs(), lhs.abs().max(rhs.abs()).max(cs)),
    });

    let lap = laplacian_wide_vector(&v, mode);
    let gd = grad(&div(&v, mode), mode);
    let sc = scurl(&curl(&v, mode), mode);
    // -lap v  vs  -grad(div v) + scurl(curl v)
    let resid = lap.scale(-1.0).sub(&gd.scale(-1.0).add(&sc)?)?;
    checks.push(IdentityCheck {
        name: "laplacian_split".into(),
        rel_defect: rel(resid.max_abs(), lap.max_abs()),
    });

    Ok(checks)
}
