//! Seeded deterministic smooth random fields.
//!
//! The generator is fixed so that runs are reproducible and comparable: a sum
//! of `modes` cosine modes with integer per-axis frequencies up to `max_freq`
//! (amplitudes damped by `1/(1 + |f|^2)`), drawn from a ChaCha8 stream,
//! optionally multiplied by a C-infinity mollifier that vanishes identically
//! on a margin of grid cells. Periodic variants use the periodic span
//! `n_k h_k` so the samples wrap exactly.

use crate::error::Result;
use crate::grid_fields::{sample, AntisymField, GridSpec, ScalarField, VectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
enum Mask {
    /// Exactly periodic trigonometric field.
    Periodic,
    /// Mollifier support: zero on `margin` cells at every edge.
    Bump { margin: usize },
}

/// Deterministic generator for smooth scalar/vector/antisym fields.
#[derive(Debug, Clone)]
pub struct FieldGen {
    seed: u64,
    mask: Mask,
    pub modes: usize,
    pub max_freq: u32,
    pub amplitude: f64,
}

impl FieldGen {
    /// Exactly periodic fields (no mask); period = `shape * spacing` per axis.
    pub fn periodic(seed: u64) -> Self {
        FieldGen {
            seed,
            mask: Mask::Periodic,
            modes: 4,
            max_freq: 3,
            amplitude: 1.0,
        }
    }

    /// Compactly supported bumps vanishing on `margin` cells at every edge.
    pub fn bump(seed: u64, margin: usize) -> Self {
        FieldGen {
            seed,
            mask: Mask::Bump { margin },
            modes: 4,
            max_freq: 3,
            amplitude: 1.0,
        }
    }

    fn component(&self, grid: &GridSpec, sub: u64) -> Result<ScalarField> {
        let seed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(sub.wrapping_mul(0xD1B5_4A32_D192_ED03) ^ 0x5851_F42D);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = grid.dim;
        let lengths: Vec<f64> = match self.mask {
            Mask::Periodic => grid
                .shape
                .iter()
                .zip(&grid.spacing)
                .map(|(&n, &h)| n as f64 * h)
                .collect(),
            Mask::Bump { .. } => grid.extent(),
        };
        let mut waves = Vec::with_capacity(self.modes);
        for _ in 0..self.modes {
            let mut freqs = vec![0i64; dim];
            loop {
                for f in freqs.iter_mut() {
                    *f = rng.gen_range(-(self.max_freq as i64)..=self.max_freq as i64);
                }
                if freqs.iter().any(|&f| f != 0) {
                    break;
                }
            }
            let f2: f64 = freqs.iter().map(|&f| (f * f) as f64).sum();
            let amp = rng.gen_range(-1.0..1.0) * self.amplitude / (1.0 + f2);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            waves.push((freqs, amp, phase));
        }
        let mask = self.mask;
        let origin = grid.origin.clone();
        let spacing = grid.spacing.clone();
        let shape = grid.shape.clone();
        sample(grid, move |x| {
            let mut v = 0.0;
            for (freqs, amp, phase) in &waves {
                let mut arg = *phase;
                for k in 0..dim {
                    arg += std::f64::consts::TAU * freqs[k] as f64 * (x[k] - origin[k])
                        / lengths[k];
                }
                v += amp * arg.cos();
            }
            match mask {
                Mask::Periodic => v,
                Mask::Bump { margin } => {
                    let mut m = 1.0;
                    for k in 0..dim {
                        let lo = origin[k] + margin as f64 * spacing[k];
                        let hi = origin[k] + (shape[k] - 1 - margin) as f64 * spacing[k];
                        if hi <= lo {
                            return 0.0;
                        }
                        let u = 2.0 * (x[k] - lo) / (hi - lo) - 1.0;
                        if u.abs() >= 1.0 {
                            return 0.0;
                        }
                        m *= (1.0 - 1.0 / (1.0 - u * u)).exp();
                    }
                    v * m
                }
            }
        })
    }

    pub fn scalar(&self, grid: &GridSpec) -> Result<ScalarField> {
        self.component(grid, 0)
    }

    pub fn vector(&self, grid: &GridSpec) -> Result<VectorField> {
        let comps = (0..grid.dim)
            .map(|k| self.component(grid, 1 + k as u64))
            .collect::<Result<Vec<_>>>()?;
        VectorField::new(comps)
    }

    pub fn antisym(&self, grid: &GridSpec) -> Result<AntisymField> {
        let n = crate::grid_fields::upper_pair_count(grid.dim);
        let comps = (0..n)
            .map(|k| self.component(grid, 101 + k as u64))
            .collect::<Result<Vec<_>>>()?;
        AntisymField::new(grid.dim, comps)
    }
}

/// A single C-infinity radial bump `exp(1 - 1/(1 - |x-c|^2/r^2))` supported in
/// the ball of radius `r` about `c`.
pub fn radial_bump(x: &[f64], center: &[f64], radius: f64) -> f64 {
    let d2: f64 = x
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / (radius * radius);
    if d2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - d2)).exp()
    }
}
