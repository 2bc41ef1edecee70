//! Truncated multivariate Taylor jets in the chart parameters.
//!
//! A jet stores the Taylor coefficients `c_beta = d^beta f / beta!` of a
//! quantity as a function of the `d` chart parameters, up to total order `r`.
//! Arithmetic on jets is exact on the retained orders, so the
//! analytic-derivative mode of the compatibility chain differentiates frames
//! and tensors without finite-difference error. Orders up to 3 in at most 4
//! parameters cover the supported tensor chain (`m <= 4`).

use std::sync::Mutex;

/// Exponent tables per (nvars, order), built once.
fn exponents(d: usize, r: usize) -> &'static [Vec<usize>] {
    use std::collections::HashMap;
    use std::sync::OnceLock;
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), &'static [Vec<usize>]>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(&e) = guard.get(&(d, r)) {
        return e;
    }
    fn rec(d: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == d {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=left {
            prefix.push(e);
            rec(d, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut list = Vec::new();
    for total in 0..=r {
        let mut level = Vec::new();
        rec(d, total, &mut Vec::new(), &mut level);
        // only keep |beta| == total
        level.retain(|e| e.iter().sum::<usize>() == total);
        list.extend(level);
    }
    let leaked: &'static [Vec<usize>] = Box::leak(list.into_boxed_slice());
    guard.insert((d, r), leaked);
    leaked
}

fn index_of(exps: &'static [Vec<usize>], beta: &[usize]) -> Option<usize> {
    exps.iter().position(|e| e == beta)
}

/// Truncated Taylor series in `d` variables to total order `r`.
#[derive(Debug, Clone)]
pub struct Jet {
    d: usize,
    r: usize,
    /// Coefficients aligned with `exponents(d, r)`.
    c: Vec<f64>,
}

impl Jet {
    pub fn zero(d: usize, r: usize) -> Self {
        Jet {
            d,
            r,
            c: vec![0.0; exponents(d, r).len()],
        }
    }

    /// Zero jet with the variable count and order of `other`.
    pub fn zero_same_shape(other: &Jet) -> Self {
        Jet::zero(other.d, other.r)
    }

    pub fn constant(d: usize, r: usize, v: f64) -> Self {
        let mut j = Self::zero(d, r);
        j.c[0] = v;
        j
    }

    /// The coordinate `y_k` as a jet centered at `y0_k`.
    pub fn variable(d: usize, r: usize, k: usize, y0k: f64) -> Self {
        let mut j = Self::zero(d, r);
        j.c[0] = y0k;
        if r >= 1 {
            let mut beta = vec![0usize; d];
            beta[k] = 1;
            let idx = index_of(exponents(d, r), &beta).expect("order-1 exponent");
            j.c[idx] = 1.0;
        }
        j
    }

    /// Builds a jet from the raw partial derivatives `partials(beta)` of the
    /// underlying function (converted to Taylor coefficients internally).
    pub fn from_partials<F: FnMut(&[usize]) -> f64>(d: usize, r: usize, mut partials: F) -> Self {
        let exps = exponents(d, r);
        let c = exps
            .iter()
            .map(|beta| partials(beta) / factorial_multi(beta))
            .collect();
        Jet { d, r, c }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn order(&self) -> usize {
        self.r
    }

    /// Taylor coefficient of a multi-exponent (zero if beyond the order).
    pub fn coeff(&self, beta: &[usize]) -> f64 {
        match index_of(exponents(self.d, self.r), beta) {
            Some(i) => self.c[i],
            None => 0.0,
        }
    }

    /// Addition; mixed orders truncate to the lower one (the higher
    /// coefficients would not be trustworthy anyway).
    pub fn add(&self, other: &Jet) -> Jet {
        debug_assert_eq!(self.d, other.d);
        let r = self.r.min(other.r);
        let (a, b) = (self.truncate(r), other.truncate(r));
        Jet {
            d: a.d,
            r,
            c: a.c.iter().zip(&b.c).map(|(x, y)| x + y).collect(),
        }
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            d: self.d,
            r: self.r,
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    /// Truncated product; mixed orders truncate to the lower one.
    pub fn mul(&self, other: &Jet) -> Jet {
        debug_assert_eq!(self.d, other.d);
        let r = self.r.min(other.r);
        let (a, b) = (self.truncate(r), other.truncate(r));
        let exps = exponents(a.d, r);
        let mut out = Jet::zero(a.d, r);
        for (ia, ea) in exps.iter().enumerate() {
            if a.c[ia] == 0.0 {
                continue;
            }
            for (ib, eb) in exps.iter().enumerate() {
                if b.c[ib] == 0.0 {
                    continue;
                }
                let total: usize = ea.iter().sum::<usize>() + eb.iter().sum::<usize>();
                if total > r {
                    continue;
                }
                let sum: Vec<usize> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                let idx = index_of(exps, &sum).expect("sum within order");
                out.c[idx] += a.c[ia] * b.c[ib];
            }
        }
        out
    }

    /// Reciprocal by Newton iteration on the series; requires a nonzero
    /// constant term.
    pub fn recip(&self) -> Jet {
        let b0 = self.c[0];
        assert!(b0 != 0.0, "jet reciprocal at zero");
        let mut x = Jet::constant(self.d, self.r, 1.0 / b0);
        // each step doubles the correct order
        let steps = (self.r as f64 + 1.0).log2().ceil() as usize + 1;
        let two = Jet::constant(self.d, self.r, 2.0);
        for _ in 0..steps {
            x = x.mul(&two.sub(&self.mul(&x)));
        }
        x
    }

    pub fn div(&self, other: &Jet) -> Jet {
        self.mul(&other.recip())
    }

    /// Square root by Newton iteration; requires a positive constant term.
    pub fn sqrt(&self) -> Jet {
        let b0 = self.c[0];
        assert!(b0 > 0.0, "jet sqrt of nonpositive leading term");
        let mut y = Jet::constant(self.d, self.r, b0.sqrt());
        let half = Jet::constant(self.d, self.r, 0.5);
        let steps = (self.r as f64 + 1.0).log2().ceil() as usize + 1;
        for _ in 0..steps {
            y = half.mul(&y.add(&self.div(&y)));
        }
        y
    }

    /// Partial derivative with respect to parameter `k`. The result is valid
    /// to order `r - 1` and returned at that order.
    pub fn partial(&self, k: usize) -> Jet {
        assert!(self.r >= 1, "cannot differentiate an order-0 jet");
        let src = exponents(self.d, self.r);
        let mut out = Jet::zero(self.d, self.r - 1);
        let dst = exponents(self.d, self.r - 1);
        for (i, beta) in dst.iter().enumerate() {
            let mut up = beta.clone();
            up[k] += 1;
            if let Some(j) = index_of(src, &up) {
                out.c[i] = self.c[j] * up[k] as f64;
            }
        }
        out
    }

    /// Truncation to a lower order.
    pub fn truncate(&self, r: usize) -> Jet {
        assert!(r <= self.r);
        if r == self.r {
            return self.clone();
        }
        let dst = exponents(self.d, r);
        let mut out = Jet::zero(self.d, r);
        for (i, beta) in dst.iter().enumerate() {
            out.c[i] = self.coeff(beta);
        }
        out
    }
}

fn factorial_multi(beta: &[usize]) -> f64 {
    beta.iter()
        .map(|&b| (1..=b).map(|k| k as f64).product::<f64>())
        .product()
}

/// Taylor-composes an ambient function with a chart map: given jets `x[a]`
/// of the ambient coordinates in the chart parameters and exact partials of
/// `f`, returns the jet of `f(x(y'))`.
pub fn compose(
    f: &dyn crate::oracle::AnalyticScalar,
    base_alpha: &[usize],
    x: &[Jet],
    r: usize,
) -> Jet {
    let d = x[0].d;
    let n = x.len();
    let x0: Vec<f64> = x.iter().map(|j| j.value()).collect();
    // delta_a = x_a - x_a(y0), zero constant term
    let deltas: Vec<Jet> = x
        .iter()
        .map(|j| j.sub(&Jet::constant(d, r, j.value())))
        .collect();
    // sum over ambient multi-indices gamma with |gamma| <= r of
    //   d^(alpha+gamma) f (x0) / gamma! * delta^gamma
    let mut out = Jet::zero(d, r);
    let mut gamma = vec![0usize; n];
    fn rec(
        f: &dyn crate::oracle::AnalyticScalar,
        base_alpha: &[usize],
        x0: &[f64],
        deltas: &[Jet],
        r: usize,
        k: usize,
        left: usize,
        gamma: &mut Vec<usize>,
        prefix: &Jet,
        out: &mut Jet,
    ) {
        if k == deltas.len() {
            let alpha: Vec<usize> = base_alpha
                .iter()
                .zip(gamma.iter())
                .map(|(a, g)| a + g)
                .collect();
            let coeff = f.partial_at(x0, &alpha) / factorial_multi(gamma);
            if coeff != 0.0 {
                *out = out.add(&prefix.scale(coeff));
            }
            return;
        }
        let mut power = prefix.clone();
        for g in 0..=left {
            gamma[k] = g;
            rec(f, base_alpha, x0, deltas, r, k + 1, left - g, gamma, &power, out);
            if g < left {
                power = power.mul(&deltas[k]);
            }
        }
        gamma[k] = 0;
    }
    let one = Jet::constant(d, r, 1.0);
    rec(
        f, base_alpha, &x0, &deltas, r, 0, r, &mut gamma, &one, &mut out,
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn arithmetic_matches_polynomial_calculus() {
        // f = (1 + 2u - v)^2 at (u0, v0) = (0.5, -1)
        let d = 2;
        let r = 3;
        let u = Jet::variable(d, r, 0, 0.5);
        let v = Jet::variable(d, r, 1, -1.0);
        let base = Jet::constant(d, r, 1.0)
            .add(&u.scale(2.0))
            .sub(&v);
        let f = base.mul(&base);
        // value: (1 + 1 + 1)^2 = 9
        assert_relative_eq!(f.value(), 9.0, epsilon = 1e-14);
        // df/du = 2*base*2 = 12, as a Taylor coefficient of u^1
        assert_relative_eq!(f.coeff(&[1, 0]), 12.0, epsilon = 1e-14);
        // d2f/du2 / 2! = 8/2 = 4
        assert_relative_eq!(f.coeff(&[2, 0]), 4.0, epsilon = 1e-14);
        // cross term d2f/dudv = -4, coefficient -4/1!1!
        assert_relative_eq!(f.coeff(&[1, 1]), -4.0, epsilon = 1e-14);
    }

    #[test]
    fn recip_and_sqrt_are_exact_series() {
        let d = 1;
        let r = 3;
        let u = Jet::variable(d, r, 0, 0.0);
        let g = Jet::constant(d, r, 4.0).add(&u); // 4 + u
        let inv = g.recip();
        // 1/(4+u) = 1/4 - u/16 + u^2/64 - u^3/256
        assert_relative_eq!(inv.coeff(&[0]), 0.25, epsilon = 1e-14);
        assert_relative_eq!(inv.coeff(&[1]), -1.0 / 16.0, epsilon = 1e-14);
        assert_relative_eq!(inv.coeff(&[2]), 1.0 / 64.0, epsilon = 1e-14);
        assert_relative_eq!(inv.coeff(&[3]), -1.0 / 256.0, epsilon = 1e-14);
        let s = g.sqrt();
        // sqrt(4+u) = 2 + u/4 - u^2/64 + u^3/512
        assert_relative_eq!(s.coeff(&[0]), 2.0, epsilon = 1e-14);
        assert_relative_eq!(s.coeff(&[1]), 0.25, epsilon = 1e-14);
        assert_relative_eq!(s.coeff(&[2]), -1.0 / 64.0, epsilon = 1e-14);
        assert_relative_eq!(s.coeff(&[3]), 1.0 / 512.0, epsilon = 1e-13);
    }

    #[test]
    fn partial_shifts_coefficients() {
        let d = 2;
        let r = 2;
        // f = 3 u^2 + u v
        let u = Jet::variable(d, r, 0, 0.0);
        let v = Jet::variable(d, r, 1, 0.0);
        let f = u.mul(&u).scale(3.0).add(&u.mul(&v));
        let fu = f.partial(0);
        // df/du = 6u + v: value 0, du-coefficient 6, dv-coefficient 1
        assert_eq!(fu.order(), 1);
        assert_relative_eq!(fu.coeff(&[1, 0]), 6.0, epsilon = 1e-14);
        assert_relative_eq!(fu.coeff(&[0, 1]), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn composition_matches_direct_partials() {
        use crate::oracle::PolyScalar;
        // ambient f(x, y) = x^2 y, chart x = (t, 1 + t^2)
        let f = PolyScalar::monomial(2, vec![2, 1], num::BigRational::from_integer(1.into()))
            .unwrap();
        let d = 1;
        let r = 3;
        let t0 = 0.7;
        let t = Jet::variable(d, r, 0, t0);
        let x = vec![t.clone(), Jet::constant(d, r, 1.0).add(&t.mul(&t))];
        let g = compose(&f, &[0, 0], &x, r);
        // g(t) = t^2 (1 + t^2) = t^2 + t^4
        let gv = |t: f64| t * t + t * t * t * t;
        let g1 = |t: f64| 2.0 * t + 4.0 * t * t * t;
        let g2 = |t: f64| 2.0 + 12.0 * t * t;
        let g3 = |t: f64| 24.0 * t;
        assert_relative_eq!(g.value(), gv(t0), epsilon = 1e-13);
        assert_relative_eq!(g.coeff(&[1]), g1(t0), epsilon = 1e-13);
        assert_relative_eq!(g.coeff(&[2]), g2(t0) / 2.0, epsilon = 1e-13);
        assert_relative_eq!(g.coeff(&[3]), g3(t0) / 6.0, epsilon = 1e-13);
    }
}
