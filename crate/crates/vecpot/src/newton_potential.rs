//! Free-space Newton potential of compactly supported grid densities.
//!
//! The kernel is the fundamental solution of the Laplace equation in `N`
//! dimensions: `-(1/2pi) log r` for `N = 2` and `r^(2-N) / (N (N-2) V_N)`
//! otherwise, with `V_N` the unit-ball volume. Quadrature is the midpoint
//! sum over cells; the singular self cell is replaced by the closed-form
//! integral of the kernel over the ball of equal volume. The direct path is
//! an `O(M^2)` sum; the fast path is the identical kernel table applied by
//! zero-padded FFT convolution, so the two agree to transform roundoff.

use crate::error::{Result, VecpotError};
use crate::grid_fields::{
    discrete_norm, discrete_seminorm, restrict, AntisymField, GridField, GridSpec, NormSpec,
    ScalarField, VectorField,
};
use rayon::prelude::*;

/// Gamma(k/2) for integer `k >= 1`.
fn gamma_half(k: usize) -> f64 {
    if k == 1 {
        std::f64::consts::PI.sqrt()
    } else if k == 2 {
        1.0
    } else {
        (k as f64 / 2.0 - 1.0) * gamma_half(k - 2)
    }
}

/// Volume of the unit ball in `N` dimensions.
pub fn unit_ball_volume(n: usize) -> f64 {
    std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half(n + 2)
}

/// Dimension-parametrized fundamental solution with its self-cell rule.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub dim: usize,
    pub unit_ball_volume: f64,
    /// Replace the singular self cell by the equal-volume-ball integral.
    pub self_rule: bool,
}

impl KernelSpec {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(VecpotError::InvalidArgument(
                "kernel dimension must be >= 2".into(),
            ));
        }
        Ok(KernelSpec {
            dim,
            unit_ball_volume: unit_ball_volume(dim),
            self_rule: true,
        })
    }

    /// Kernel value at distance `r > 0`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(VecpotError::InvalidArgument(format!(
                "kernel distance must be positive, got {r}"
            )));
        }
        Ok(if self.dim == 2 {
            -r.ln() / (2.0 * std::f64::consts::PI)
        } else {
            let nf = self.dim as f64;
            r.powi(2 - self.dim as i32) / (nf * (nf - 2.0) * self.unit_ball_volume)
        })
    }

    /// Integral of the kernel over the ball of volume `cell_vol` centered at
    /// the singularity: `rc^2 (1 - 2 log rc) / 4` for `N = 2`,
    /// `rc^2 / (2 (N - 2))` otherwise, with `V_N rc^N = cell_vol`.
    pub fn self_cell_integral(&self, cell_vol: f64) -> f64 {
        if !self.self_rule {
            return 0.0;
        }
        let rc = (cell_vol / self.unit_ball_volume).powf(1.0 / self.dim as f64);
        if self.dim == 2 {
            rc * rc * (1.0 - 2.0 * rc.ln()) / 4.0
        } else {
            rc * rc / (2.0 * (self.dim as f64 - 2.0))
        }
    }

    /// Kernel table entry for an integer cell offset.
    fn table_entry(&self, offset: &[i64], spacing: &[f64], cell_vol: f64) -> f64 {
        if offset.iter().all(|&o| o == 0) {
            self.self_cell_integral(cell_vol)
        } else {
            let r2: f64 = offset
                .iter()
                .zip(spacing)
                .map(|(&o, &h)| {
                    let d = o as f64 * h;
                    d * d
                })
                .sum();
            self.eval(r2.sqrt()).expect("nonzero offset") * cell_vol
        }
    }
}

/// Smallest number of zero cells between the support of `field` and the grid
/// boundary, over all axes and components. Returns `None` for a zero field.
pub fn support_margin_cells<F: GridField>(field: &F) -> Option<usize> {
    let (lo, hi) = support_box(field)?;
    let grid = field.grid();
    let mut margin = usize::MAX;
    for d in 0..grid.dim {
        margin = margin.min(lo[d]);
        margin = margin.min(grid.shape[d] - 1 - hi[d]);
    }
    Some(margin)
}

/// Bounding box (inclusive) of the nonzero nodes across all components.
pub fn support_box<F: GridField>(field: &F) -> Option<(Vec<usize>, Vec<usize>)> {
    let grid = field.grid();
    let mut lo = vec![usize::MAX; grid.dim];
    let mut hi = vec![0usize; grid.dim];
    let mut any = false;
    for comp in field.comps() {
        for (flat, &v) in comp.values().iter().enumerate() {
            if v != 0.0 {
                any = true;
                let idx = grid.unravel(flat);
                for d in 0..grid.dim {
                    lo[d] = lo[d].min(idx[d]);
                    hi[d] = hi[d].max(idx[d]);
                }
            }
        }
    }
    if any {
        Some((lo, hi))
    } else {
        None
    }
}

/// Dilates an index box by `frac` of its width per side, clamped to the grid.
pub fn dilate_box(
    grid: &GridSpec,
    lo: &[usize],
    hi: &[usize],
    frac: f64,
) -> (Vec<usize>, Vec<usize>) {
    let mut nlo = vec![0usize; grid.dim];
    let mut nhi = vec![0usize; grid.dim];
    for d in 0..grid.dim {
        let w = (hi[d] - lo[d]) as f64;
        let pad = (w * frac).ceil() as usize;
        nlo[d] = lo[d].saturating_sub(pad);
        nhi[d] = (hi[d] + pad).min(grid.shape[d] - 1);
    }
    (nlo, nhi)
}

/// Subgrid spec covering the inclusive index box `[lo, hi]`.
pub fn subgrid_from_box(grid: &GridSpec, lo: &[usize], hi: &[usize]) -> Result<GridSpec> {
    let shape: Vec<usize> = lo.iter().zip(hi).map(|(&a, &b)| b - a + 1).collect();
    let origin: Vec<f64> = (0..grid.dim)
        .map(|d| grid.origin[d] + lo[d] as f64 * grid.spacing[d])
        .collect();
    GridSpec::new_param(shape, grid.spacing.clone(), origin)
}

/// Direct `O(M^2)` summation of the potential.
pub fn newton_direct(density: &ScalarField) -> Result<ScalarField> {
    let grid = density.grid();
    let spec = KernelSpec::new(grid.dim)?;
    let cell_vol = grid.cell_volume();
    let spacing = grid.spacing.clone();
    let rho = density.values();
    let n = grid.len();
    let indices: Vec<Vec<usize>> = (0..n).map(|f| grid.unravel(f)).collect();
    let out: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|target| {
            let ti = &indices[target];
            let mut acc = 0.0;
            let mut off = vec![0i64; grid.dim];
            for (source, si) in indices.iter().enumerate() {
                if rho[source] == 0.0 {
                    continue;
                }
                for d in 0..grid.dim {
                    off[d] = ti[d] as i64 - si[d] as i64;
                }
                acc += rho[source] * spec.table_entry(&off, &spacing, cell_vol);
            }
            acc
        })
        .collect();
    ScalarField::new(grid.clone(), out)
}

/// FFT path: zero-padded linear convolution against the same kernel table.
pub fn newton_fast(density: &ScalarField) -> Result<ScalarField> {
    let grid = density.grid();
    let spec = KernelSpec::new(grid.dim)?;
    let cell_vol = grid.cell_volume();
    let spacing = grid.spacing.clone();
    Ok(crate::spectral::convolve_linear(density, move |off| {
        spec.table_entry(off, &spacing, cell_vol)
    }))
}

/// Which summation path to use for componentwise potentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummationPath {
    Direct,
    Fast,
}

fn newton_by(density: &ScalarField, path: SummationPath) -> Result<ScalarField> {
    match path {
        SummationPath::Direct => newton_direct(density),
        SummationPath::Fast => newton_fast(density),
    }
}

/// Componentwise Newton potential of a vector field.
pub fn vector_potential_of_vector(v: &VectorField, path: SummationPath) -> Result<VectorField> {
    let comps = v
        .components()
        .iter()
        .map(|c| newton_by(c, path))
        .collect::<Result<Vec<_>>>()?;
    VectorField::new(comps)
}

/// Componentwise Newton potential of an antisymmetric-matrix field.
pub fn vector_potential_of_antisym(
    a: &AntisymField,
    path: SummationPath,
) -> Result<AntisymField> {
    let comps = a
        .upper_components()
        .iter()
        .map(|c| newton_by(c, path))
        .collect::<Result<Vec<_>>>()?;
    AntisymField::new(a.dim(), comps)
}

/// Finite-constant diagnostics for a density/potential pair: the interior
/// estimate ratio `||phi||_{W^{2,p}(S)} / (||phi||_{L^p(S~)} +
/// ||rho||_{L^p(S~)})` over the support box `S` and its 25% dilation `S~`,
/// and the second-derivative ratio `|phi|_{W^{2,p}} / ||rho||_{L^p}` over the
/// whole grid.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EstimateRatios {
    pub interior_ratio: f64,
    pub cz_ratio: f64,
}

pub fn estimate_ratios(density: &ScalarField, potential: &ScalarField, p: f64) -> Result<EstimateRatios> {
    let grid = density.grid();
    let (lo, hi) = support_box(density).ok_or_else(|| {
        VecpotError::DegenerateInput("estimate ratios need a nonzero density".into())
    })?;
    let omega = subgrid_from_box(grid, &lo, &hi)?;
    let (dlo, dhi) = dilate_box(grid, &lo, &hi, 0.25);
    let omega_tilde = subgrid_from_box(grid, &dlo, &dhi)?;

    let phi_omega = restrict(potential, &omega)?;
    let phi_tilde = restrict(potential, &omega_tilde)?;
    let rho_tilde = restrict(density, &omega_tilde)?;

    let w2p = NormSpec::new(p, 2)?;
    let lp = NormSpec::new(p, 0)?;
    let num = discrete_norm(&phi_omega, &w2p);
    let den = discrete_norm(&phi_tilde, &lp) + discrete_norm(&rho_tilde, &lp);
    let cz_num = discrete_seminorm(potential, &w2p);
    let cz_den = discrete_norm(density, &lp);
    Ok(EstimateRatios {
        interior_ratio: num / den.max(f64::MIN_POSITIVE),
        cz_ratio: cz_num / cz_den.max(f64::MIN_POSITIVE),
    })
}
