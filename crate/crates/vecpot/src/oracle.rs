//! Independent references used to anchor the numerical tests: exact rational
//! polynomial vector calculus, radial potential quadrature, and observed
//! convergence order.
//!
//! Polynomial arithmetic is exact (BigRational coefficients), so symbolic
//! identities here are equalities, not tolerances. The radial potential
//! integrates the kernel shell-by-shell with its own copy of the fundamental
//! solution, independent of the convolution code it is used to check.

use crate::error::{Result, VecpotError};
use num::{BigInt, BigRational, One, Zero};
use std::collections::BTreeMap;

/// Per-variable exponent cap. Differentiation lowers exponents, so the cap
/// only constrains construction and multiplication.
pub const EXPONENT_CAP: u32 = 6;

/// Multivariate polynomial with exact rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyScalar {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, BigRational>,
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl PolyScalar {
    pub fn zero(nvars: usize) -> Self {
        PolyScalar {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: BigRational) -> Self {
        let mut p = Self::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn constant_i64(nvars: usize, c: i64) -> Self {
        Self::constant(nvars, ratio(c, 1))
    }

    /// The coordinate monomial `x_k`.
    pub fn var(nvars: usize, k: usize) -> Self {
        let mut exps = vec![0u32; nvars];
        exps[k] = 1;
        let mut p = Self::zero(nvars);
        p.terms.insert(exps, BigRational::one());
        p
    }

    /// A single monomial with an `i64` fraction coefficient.
    pub fn monomial_i64(nvars: usize, exps: Vec<u32>, num: i64, den: i64) -> Result<Self> {
        Self::monomial(nvars, exps, ratio(num, den))
    }

    /// A single monomial `c * prod x_k^{e_k}`.
    pub fn monomial(nvars: usize, exps: Vec<u32>, c: BigRational) -> Result<Self> {
        if exps.len() != nvars {
            return Err(VecpotError::InvalidArgument(
                "monomial exponent length mismatch".into(),
            ));
        }
        if let Some(&e) = exps.iter().find(|&&e| e > EXPONENT_CAP) {
            return Err(VecpotError::DegreeCapExceeded(e as usize));
        }
        let mut p = Self::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(exps, c);
        }
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.nvars, other.nvars);
        let mut terms = self.terms.clone();
        for (e, c) in &other.terms {
            let entry = terms.entry(e.clone()).or_insert_with(BigRational::zero);
            *entry += c;
            if entry.is_zero() {
                terms.remove(e);
            }
        }
        PolyScalar {
            nvars: self.nvars,
            terms,
        }
    }

    pub fn neg(&self) -> Self {
        PolyScalar {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero(self.nvars);
        }
        PolyScalar {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, k)| (e.clone(), k * c)).collect(),
        }
    }

    pub fn scale_i64(&self, n: i64, d: i64) -> Self {
        self.scale(&ratio(n, d))
    }

    /// Product; errors if any per-variable exponent would exceed the cap.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        debug_assert_eq!(self.nvars, other.nvars);
        let mut terms: BTreeMap<Vec<u32>, BigRational> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let exps: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                if let Some(&e) = exps.iter().find(|&&e| e > EXPONENT_CAP) {
                    return Err(VecpotError::DegreeCapExceeded(e as usize));
                }
                let entry = terms.entry(exps).or_insert_with(BigRational::zero);
                *entry += ca * cb;
            }
        }
        terms.retain(|_, c| !c.is_zero());
        Ok(PolyScalar {
            nvars: self.nvars,
            terms,
        })
    }

    /// Exact partial derivative with respect to `x_k`.
    pub fn partial(&self, k: usize) -> Self {
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[k] == 0 {
                continue;
            }
            let mut exps = e.clone();
            exps[k] -= 1;
            terms.insert(exps, c * ratio(e[k] as i64, 1));
        }
        PolyScalar {
            nvars: self.nvars,
            terms,
        }
    }

    /// Repeated partial derivative for a multi-index.
    pub fn partial_multi(&self, alpha: &[usize]) -> Self {
        let mut p = self.clone();
        for (k, &times) in alpha.iter().enumerate() {
            for _ in 0..times {
                p = p.partial(k);
            }
        }
        p
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (e, c) in &self.terms {
            let mut t = rational_to_f64(c);
            for (k, &ek) in e.iter().enumerate() {
                t *= x[k].powi(ek as i32);
            }
            total += t;
        }
        total
    }

    pub fn total_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }
}

fn rational_to_f64(c: &BigRational) -> f64 {
    // coefficients stay small in practice; fall back to string parsing if the
    // integer parts overflow i128
    let numer = c.numer();
    let denom = c.denom();
    let to_f64 = |b: &BigInt| -> f64 {
        if let Ok(v) = i128::try_from(b.clone()) {
            v as f64
        } else {
            b.to_string().parse::<f64>().unwrap_or(f64::NAN)
        }
    };
    to_f64(numer) / to_f64(denom)
}

/// Polynomial vector field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyVector {
    pub comps: Vec<PolyScalar>,
}

impl PolyVector {
    pub fn new(comps: Vec<PolyScalar>) -> Self {
        PolyVector { comps }
    }
    pub fn dim(&self) -> usize {
        self.comps.len()
    }
    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(|c| c.is_zero())
    }
    pub fn sub(&self, other: &Self) -> Self {
        PolyVector {
            comps: self
                .comps
                .iter()
                .zip(&other.comps)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }
}

/// Polynomial antisymmetric-matrix field, strictly-upper storage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyAntisym {
    pub dim: usize,
    pub upper: Vec<PolyScalar>,
}

impl PolyAntisym {
    pub fn new(dim: usize, upper: Vec<PolyScalar>) -> Result<Self> {
        if upper.len() != crate::grid_fields::upper_pair_count(dim) {
            return Err(VecpotError::InvalidArgument(
                "wrong number of upper components".into(),
            ));
        }
        Ok(PolyAntisym { dim, upper })
    }

    /// Signed entry, skew reconstruction.
    pub fn entry(&self, i: usize, j: usize) -> PolyScalar {
        use std::cmp::Ordering;
        match i.cmp(&j) {
            Ordering::Less => self.upper[crate::grid_fields::pair_index(i, j, self.dim)].clone(),
            Ordering::Greater => {
                self.upper[crate::grid_fields::pair_index(j, i, self.dim)].neg()
            }
            Ordering::Equal => PolyScalar::zero(self.upper[0].nvars()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.upper.iter().all(|c| c.is_zero())
    }
}

pub fn poly_grad(p: &PolyScalar) -> PolyVector {
    PolyVector::new((0..p.nvars()).map(|k| p.partial(k)).collect())
}

pub fn poly_div(v: &PolyVector) -> PolyScalar {
    let n = v.dim();
    let mut acc = PolyScalar::zero(n);
    for k in 0..n {
        acc = acc.add(&v.comps[k].partial(k));
    }
    acc
}

pub fn poly_curl(v: &PolyVector) -> PolyAntisym {
    let n = v.dim();
    let upper = crate::grid_fields::pair_list(n)
        .into_iter()
        .map(|(i, j)| {
            v.comps[j]
                .partial(i)
                .sub(&v.comps[i].partial(j))
                .scale_i64(1, 2)
        })
        .collect();
    PolyAntisym { dim: n, upper }
}

pub fn poly_scurl(a: &PolyAntisym) -> PolyVector {
    let n = a.dim;
    let comps = (0..n)
        .map(|i| {
            let mut acc = PolyScalar::zero(a.upper[0].nvars());
            for j in 0..n {
                if j == i {
                    continue;
                }
                acc = acc.add(&a.entry(i, j).partial(j).scale_i64(2, 1));
            }
            acc
        })
        .collect();
    PolyVector::new(comps)
}

pub fn poly_laplacian(p: &PolyScalar) -> PolyScalar {
    let mut acc = PolyScalar::zero(p.nvars());
    for k in 0..p.nvars() {
        acc = acc.add(&p.partial(k).partial(k));
    }
    acc
}

/// Seeded random polynomial with small integer-over-small-denominator
/// coefficients, total degree at most `degree`.
pub fn random_poly(nvars: usize, degree: u32, seed: u64) -> PolyScalar {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut p = PolyScalar::zero(nvars);
    let exps = all_exponents(nvars, degree.min(EXPONENT_CAP));
    for e in exps {
        if rng.gen_bool(0.5) {
            let num = rng.gen_range(-9i64..=9);
            if num == 0 {
                continue;
            }
            let den = rng.gen_range(1i64..=4);
            p = p.add(&PolyScalar::monomial(nvars, e, ratio(num, den)).unwrap());
        }
    }
    p
}

fn all_exponents(nvars: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(nvars: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == nvars {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=left.min(EXPONENT_CAP) {
            prefix.push(e);
            rec(nvars, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(nvars, degree, &mut Vec::new(), &mut out);
    out
}

/// Pointwise-evaluable function with exact partial derivatives of any order.
/// Implemented by [`PolyScalar`]; the boundary-trace machinery consumes this
/// for its analytic-derivative mode.
pub trait AnalyticScalar: Sync {
    fn dim(&self) -> usize;
    fn partial_at(&self, x: &[f64], alpha: &[usize]) -> f64;
    fn eval_at(&self, x: &[f64]) -> f64 {
        self.partial_at(x, &vec![0; self.dim()])
    }
}

impl AnalyticScalar for PolyScalar {
    fn dim(&self) -> usize {
        self.nvars()
    }
    fn partial_at(&self, x: &[f64], alpha: &[usize]) -> f64 {
        self.partial_multi(alpha).eval(x)
    }
}

// ---------------------------------------------------------------------------
// Radial potential oracle
// ---------------------------------------------------------------------------

fn unit_ball_volume_local(n: usize) -> f64 {
    // V_N = pi^(N/2) / Gamma(N/2 + 1), via the half-integer Gamma recursion
    let half = n as f64 / 2.0;
    std::f64::consts::PI.powf(half) / gamma_half(n + 2)
}

/// Gamma(k/2) for integer k >= 1.
fn gamma_half(k: usize) -> f64 {
    if k == 1 {
        std::f64::consts::PI.sqrt()
    } else if k == 2 {
        1.0
    } else {
        (k as f64 / 2.0 - 1.0) * gamma_half(k - 2)
    }
}

fn lambda_local(n: usize, r: f64) -> f64 {
    if n == 2 {
        -(r.ln()) / (2.0 * std::f64::consts::PI)
    } else {
        let vn = unit_ball_volume_local(n);
        r.powi(2 - n as i32) / (n as f64 * (n as f64 - 2.0) * vn)
    }
}

fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> Result<f64> {
        if depth == 0 {
            return Err(VecpotError::QuadratureNonConvergence(format!(
                "max depth reached on [{a}, {b}]"
            )));
        }
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        if (left + right - whole).abs() <= 15.0 * tol {
            Ok(left + right + (left + right - whole) / 15.0)
        } else {
            Ok(rec(f, a, m, left, tol / 2.0, depth - 1)?
                + rec(f, m, b, right, tol / 2.0, depth - 1)?)
        }
    }
    if a == b {
        return Ok(0.0);
    }
    let whole = simpson(f, a, b);
    rec(f, a, b, whole, tol, depth)
}

/// Potential at radius `r_eval` of the radial density `rho` supported in
/// `[0, support_radius]`, by shell decomposition: shells inside `r_eval`
/// contribute with the kernel at `r_eval`, shells outside with the kernel at
/// their own radius. Absolute quadrature error at most ~1e-12.
pub fn radial_potential<F: Fn(f64) -> f64>(
    rho: F,
    n: usize,
    support_radius: f64,
    r_eval: f64,
) -> Result<f64> {
    if n < 2 {
        return Err(VecpotError::InvalidArgument("dimension must be >= 2".into()));
    }
    if support_radius < 0.0 || r_eval < 0.0 {
        return Err(VecpotError::InvalidArgument("radii must be nonnegative".into()));
    }
    let nf = n as f64;
    let vn = unit_ball_volume_local(n);
    let shell = |t: f64| nf * vn * t.powi(n as i32 - 1) * rho(t);
    let split = r_eval.min(support_radius);
    let inner = if split > 0.0 {
        lambda_local(n, r_eval) * adaptive_simpson(&shell, 0.0, split, 1e-13, 48)?
    } else {
        0.0
    };
    let outer = if support_radius > split {
        // shell ~ t^(N-1) dominates the kernel singularity, so the integrand
        // extends continuously by 0 at t = 0
        let g = |t: f64| {
            if t <= 0.0 {
                0.0
            } else {
                shell(t) * lambda_local(n, t)
            }
        };
        adaptive_simpson(&g, split, support_radius, 1e-13, 48)?
    } else {
        0.0
    };
    Ok(inner + outer)
}

/// Least-squares slope of `log e` against `log h`.
pub fn observed_order(errors: &[(f64, f64)]) -> Result<f64> {
    if errors.len() < 2 {
        return Err(VecpotError::DegenerateInput(
            "need at least two (h, e) levels".into(),
        ));
    }
    for &(h, e) in errors {
        if !(h > 0.0) || !(e > 0.0) || !h.is_finite() || !e.is_finite() {
            return Err(VecpotError::DegenerateInput(format!(
                "invalid level (h={h}, e={e})"
            )));
        }
    }
    let pts: Vec<(f64, f64)> = errors.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(VecpotError::DegenerateInput(
            "all grid levels identical".into(),
        ));
    }
    Ok((n * sxy - sx * sy) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn curl_of_gradient_is_exactly_zero() {
        // x1^2 x2
        let p = PolyScalar::monomial(3, vec![2, 1, 0], ratio(1, 1)).unwrap();
        let c = poly_curl(&poly_grad(&p));
        assert!(c.is_zero());
        // and for a messy random polynomial
        let q = random_poly(3, 5, 17);
        assert!(poly_curl(&poly_grad(&q)).is_zero());
    }

    #[test]
    fn div_of_scurl_is_exactly_zero() {
        for seed in [1u64, 2, 3] {
            for dim in [2usize, 3, 4] {
                let upper = (0..crate::grid_fields::upper_pair_count(dim))
                    .map(|k| random_poly(dim, 4, seed * 100 + k as u64))
                    .collect();
                let a = PolyAntisym::new(dim, upper).unwrap();
                assert!(poly_div(&poly_scurl(&a)).is_zero());
            }
        }
    }

    #[test]
    fn laplacian_splits_into_grad_div_and_scurl_curl() {
        // -lap f = -grad(div f) + scurl(curl f), exact polynomial identity
        for dim in [2usize, 3, 4, 5] {
            let f = PolyVector::new(
                (0..dim).map(|k| random_poly(dim, 4, 31 + k as u64)).collect(),
            );
            let lap = PolyVector::new(f.comps.iter().map(poly_laplacian).collect());
            let gd = poly_grad(&poly_div(&f));
            let sc = poly_scurl(&poly_curl(&f));
            for i in 0..dim {
                let lhs = lap.comps[i].neg();
                let rhs = gd.comps[i].neg().add(&sc.comps[i]);
                assert_eq!(lhs, rhs, "component {i} in dimension {dim}");
            }
        }
    }

    #[test]
    fn degree_cap_is_enforced() {
        let x = PolyScalar::var(1, 0);
        let mut p = x.clone();
        for _ in 0..5 {
            p = p.mul(&x).unwrap();
        }
        assert!(matches!(
            p.mul(&x),
            Err(VecpotError::DegreeCapExceeded(_))
        ));
    }

    #[test]
    fn ball_center_potential_matches_closed_form() {
        let r = 0.7;
        // N=3 uniform ball: phi(0) = R^2/2
        let phi0 = radial_potential(|_| 1.0, 3, r, 0.0).unwrap();
        assert_relative_eq!(phi0, r * r / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn exterior_potential_matches_closed_form() {
        let r = 0.7;
        let at = 1.3;
        // N=3 uniform ball, outside: R^3 / (3 r)
        let phi = radial_potential(|_| 1.0, 3, r, at).unwrap();
        assert_relative_eq!(phi, r * r * r / (3.0 * at), epsilon = 1e-12);
    }

    #[test]
    fn interior_potential_matches_closed_form_2d() {
        // N=2 uniform disk of radius R at r=0: integral of -ln(t)/(2pi) * 2pi t
        // = R^2 (1 - 2 ln R) / 4
        let r: f64 = 0.9;
        let phi = radial_potential(|_| 1.0, 2, r, 0.0).unwrap();
        assert_relative_eq!(phi, r * r * (1.0 - 2.0 * r.ln()) / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_density_gives_zero_potential() {
        let phi = radial_potential(|_| 0.0, 4, 1.0, 0.5).unwrap();
        assert_eq!(phi, 0.0);
    }

    #[test]
    fn observed_order_recovers_exact_slopes() {
        let quad: Vec<(f64, f64)> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| (h, h * h))
            .collect();
        assert_relative_eq!(observed_order(&quad).unwrap(), 2.0, epsilon = 1e-12);
        let lin: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&h| (h, h)).collect();
        assert_relative_eq!(observed_order(&lin).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn observed_order_rejects_degenerate_input() {
        assert!(observed_order(&[(0.1, 1.0)]).is_err());
        assert!(observed_order(&[(0.1, 0.0), (0.05, 0.1)]).is_err());
        assert!(observed_order(&[(0.1, 1.0), (0.1, 0.5)]).is_err());
    }

    #[test]
    fn polynomial_eval_is_pointwise_exact() {
        // p = x^2 y / 2 - 3 z
        let p = PolyScalar::monomial(3, vec![2, 1, 0], ratio(1, 2))
            .unwrap()
            .add(&PolyScalar::monomial(3, vec![0, 0, 1], ratio(-3, 1)).unwrap());
        let x = [1.5, -2.0, 0.25];
        assert_eq!(p.eval(&x), 1.5 * 1.5 * -2.0 / 2.0 - 3.0 * 0.25);
        // partial_at: d/dx = x y, d2/dxdy = x
        assert_eq!(p.partial_at(&x, &[1, 0, 0]), 1.5 * -2.0);
        assert_eq!(p.partial_at(&x, &[1, 1, 0]), 1.5);
    }
}
