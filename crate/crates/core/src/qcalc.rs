//! Scalar special functions for a base `q = exp(-2πi·τ₀·ε)` with `|q| > 1`.
//!
//! Everything here is built from the two-sided theta series
//! `Θ(z) = Σ (-1)^n q^{-n(n-1)/2} z^n` and the half product `Θ⁺(z) = (z; 1/q)_∞`.
//! Arguments far from the unit annulus are first reduced with `Θ(qz) = -qzΘ(z)`
//! (or `l(qz) = l(z) + 1` for the q-logarithm) so that the series is summed where
//! it converges fastest.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::confluence::spiral_coordinates;
use crate::error::{QError, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Deformation parameters and numerical policy.
#[derive(Debug, Clone, PartialEq)]
pub struct QContext {
    pub tau0: Complex64,
    pub epsilon: f64,
    pub q: Complex64,
    pub p: Complex64,
    pub eta: Complex64,
    /// `log q = -2πi·τ₀·ε`, the logarithm along the spiral.
    pub log_q: Complex64,
    pub tol: f64,
    pub max_theta_terms: usize,
    /// Relative distance below which a point counts as lying on a pole spiral.
    pub guard: f64,
    pp_inf: Complex64,
}

impl QContext {
    pub fn new(tau0: Complex64, epsilon: f64) -> Result<Self> {
        if !(tau0.im > 0.0) || !tau0.re.is_finite() {
            return Err(QError::InvalidParameter(format!("tau0 = {tau0} must have positive imaginary part")));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(QError::InvalidParameter(format!("epsilon = {epsilon} must be positive")));
        }
        let log_q = -2.0 * PI * I * tau0 * epsilon;
        let q = log_q.exp();
        let p = (-log_q).exp();
        let mut ctx = QContext {
            tau0,
            epsilon,
            q,
            p,
            eta: q - 1.0,
            log_q,
            tol: 1e-12,
            max_theta_terms: 20_000,
            guard: 1e-6,
            pp_inf: Complex64::new(1.0, 0.0),
        };
        ctx.pp_inf = product_plus(&ctx, p, 1e-17);
        Ok(ctx)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_theta_terms(mut self, n: usize) -> Self {
        self.max_theta_terms = n;
        self
    }

    pub fn with_guard(mut self, guard: f64) -> Self {
        self.guard = guard;
        self
    }

    /// `q^x` taken along the spiral, i.e. `exp(x·log q)`.
    pub fn qpow(&self, x: Complex64) -> Complex64 {
        (self.log_q * x).exp()
    }

    pub fn qpow_real(&self, x: f64) -> Complex64 {
        (self.log_q * x).exp()
    }

    /// `ln|q| > 0`.
    pub fn log_abs_q(&self) -> f64 {
        self.log_q.re
    }

    /// The cached constant `(p; p)_∞`.
    pub fn pp_inf(&self) -> Complex64 {
        self.pp_inf
    }

    /// Splits `z = q^k·w` with `|w|` as close to 1 as possible.
    pub(crate) fn reduce(&self, z: Complex64) -> (i64, Complex64) {
        let k = (z.norm().ln() / self.log_abs_q()).round() as i64;
        (k, z * (-self.log_q * k as f64).exp())
    }

    /// True when `z` lies within the guard of the spiral `c·q^Z`.
    pub fn near_spiral(&self, z: Complex64, c: Complex64) -> bool {
        let (_, w) = self.reduce(z / c);
        [-1.0, 0.0, 1.0]
            .iter()
            .any(|&j| (w * self.qpow_real(j) - 1.0).norm() < self.guard)
    }
}

fn product_plus(ctx: &QContext, z: Complex64, tol: f64) -> Complex64 {
    let tail = 1.0 - ctx.p.norm();
    let mut x = z;
    let mut prod = Complex64::new(1.0, 0.0);
    while x.norm() >= tol * tail {
        prod *= 1.0 - x;
        x *= ctx.p;
    }
    prod
}

/// Natural-log cancellation the Jacobi series may suffer before the product form takes over.
/// Near `|z| = 1` the series terms are `O(1)` while `|Θ|` can be as small as `exp(-π²/2|log q|)`.
const SERIES_MAX_LOSS: f64 = 8.0;

/// `log((p;p)_∞ (w;p)_∞ (p/w;p)_∞)` summed factor by factor, free of cancellation.
fn log_triple_product(ctx: &QContext, w: Complex64) -> Result<Complex64> {
    let stop = 0.1 * ctx.tol * (1.0 - ctx.p.norm());
    let mut acc = ctx.pp_inf.ln() + (1.0 - w).ln();
    let mut x = ctx.p * w;
    let mut y = ctx.p / w;
    let mut n = 0usize;
    while x.norm() >= stop || y.norm() >= stop {
        n += 1;
        if n > ctx.max_theta_terms {
            return Err(QError::TruncationExhausted { max: ctx.max_theta_terms });
        }
        acc += (1.0 - x).ln() + (1.0 - y).ln();
        x *= ctx.p;
        y *= ctx.p;
    }
    Ok(acc)
}

/// `Θ(z) = exp(log_factor)·series`, kept apart so that ratios never overflow.
pub(crate) fn theta_parts(ctx: &QContext, z: Complex64) -> Result<(Complex64, Complex64)> {
    if z == Complex64::new(0.0, 0.0) {
        return Err(QError::InvalidParameter("theta is undefined at 0".into()));
    }
    let (k, w) = ctx.reduce(z);
    let kf = k as f64;
    let ln_w = w.ln();
    let log_factor = ctx.log_q * (kf * (kf + 1.0) / 2.0) + ln_w * kf + I * PI * kf;
    if PI * PI / (2.0 * ctx.log_q.norm()) > SERIES_MAX_LOSS {
        return Ok((log_factor + log_triple_product(ctx, w)?, Complex64::new(1.0, 0.0)));
    }

    let mut sum = Complex64::new(1.0, 0.0);
    let mut n = 1usize;
    loop {
        if n > ctx.max_theta_terms {
            return Err(QError::TruncationExhausted { max: ctx.max_theta_terms });
        }
        let nf = n as f64;
        let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        let up = (-ctx.log_q * (nf * (nf - 1.0) / 2.0) + ln_w * nf).exp() * sign;
        let down = (-ctx.log_q * (nf * (nf + 1.0) / 2.0) - ln_w * nf).exp() * sign;
        sum += up + down;
        let scale = ctx.tol * sum.norm().max(f64::EPSILON);
        if n >= 2 && up.norm() < scale && down.norm() < scale {
            break;
        }
        n += 1;
    }
    Ok((log_factor, sum))
}

/// How `Θ` is summed at a given context, for `|z|` in the unit annulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThetaTruncation {
    /// The triple product in logarithms replaces the Jacobi series.
    pub product_form: bool,
    /// Series terms per side, or product factors.
    pub terms: usize,
}

pub fn theta_truncation(ctx: &QContext) -> ThetaTruncation {
    let a = ctx.log_abs_q();
    if PI * PI / (2.0 * ctx.log_q.norm()) > SERIES_MAX_LOSS {
        let stop = 0.1 * ctx.tol * (1.0 - ctx.p.norm());
        let terms = (stop.ln() / -a).ceil().max(1.0) as usize;
        return ThetaTruncation { product_form: true, terms };
    }
    let target = -ctx.tol.ln();
    let terms = (1..).find(|&n| a * (n * (n - 1)) as f64 / 2.0 > target).unwrap_or(1).max(2);
    ThetaTruncation { product_form: false, terms }
}

/// Jacobi theta function `Θ_q(z)`.
pub fn theta(ctx: &QContext, z: Complex64) -> Result<Complex64> {
    let (lf, s) = theta_parts(ctx, z)?;
    Ok(lf.exp() * s)
}

/// `Θ⁺_q(z) = Π_{r≥0} (1 - q^{-r} z)`.
pub fn theta_plus(ctx: &QContext, z: Complex64) -> Complex64 {
    product_plus(ctx, z, 0.1 * ctx.tol)
}

/// The character `e_{q,c}(z) = Θ(z)/Θ(z/c)`, solving `f(qz) = c·f(z)`.
pub fn character(ctx: &QContext, c: Complex64, z: Complex64) -> Result<Complex64> {
    if c == Complex64::new(0.0, 0.0) {
        return Err(QError::InvalidParameter("character exponent must be nonzero".into()));
    }
    if ctx.near_spiral(z, c) {
        return Err(QError::NearPole { z });
    }
    let (l1, s1) = theta_parts(ctx, z)?;
    let (l2, s2) = theta_parts(ctx, z / c)?;
    Ok((l1 - l2).exp() * s1 / s2)
}

fn qlog_reduced(ctx: &QContext, w: Complex64) -> Complex64 {
    let stop = 0.1 * ctx.tol * (1.0 - ctx.p.norm());
    let mut sum = Complex64::new(0.0, 0.0);
    let mut x = w;
    while x.norm() >= stop {
        sum -= x / (1.0 - x);
        x *= ctx.p;
    }
    let mut y = ctx.p / w;
    while y.norm() >= stop {
        sum += y / (1.0 - y);
        y *= ctx.p;
    }
    sum
}

/// The q-logarithm `l_q(z) = zΘ'(z)/Θ(z)`, solving `f(qz) = f(z) + 1`.
pub fn qlog(ctx: &QContext, z: Complex64) -> Result<Complex64> {
    if z == Complex64::new(0.0, 0.0) || ctx.near_spiral(z, Complex64::new(1.0, 0.0)) {
        return Err(QError::NearPole { z });
    }
    let (k, w) = ctx.reduce(z);
    Ok(qlog_reduced(ctx, w) + k as f64)
}

/// `l⁺_q(z) = z(Θ⁺)'(z)/Θ⁺(z) = -Σ_{r≥0} q^{-r}z/(1 - q^{-r}z)`.
pub fn qlog_plus(ctx: &QContext, z: Complex64) -> Result<Complex64> {
    let stop = 0.1 * ctx.tol * (1.0 - ctx.p.norm());
    let mut sum = Complex64::new(0.0, 0.0);
    let mut x = z;
    while x.norm() >= stop {
        if (x - 1.0).norm() < ctx.guard {
            return Err(QError::NearPole { z });
        }
        sum -= x / (1.0 - x);
        x *= ctx.p;
    }
    Ok(sum)
}

/// Newton binomial `binom(l, k)` of a complex `l`.
pub fn binomial(l: Complex64, k: usize) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for i in 0..k {
        acc *= (l - i as f64) / (i as f64 + 1.0);
    }
    acc
}

/// `l_q^{(k)}(z) = binom(l_q(z), k)`.
pub fn qlog_binom(ctx: &QContext, k: usize, z: Complex64) -> Result<Complex64> {
    if k == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    Ok(binomial(qlog(ctx, z)?, k))
}

/// The classical functions reached as `q → 1` along the spiral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Determination {
    /// `log(-z)` with `-1 ↦ 0`, cut along the spiral through 1.
    NegLog,
    /// `(-z)^γ` with `-1 ↦ 1`, same cut.
    NegPower(Complex64),
    /// `(1 - z)^α` with `0 ↦ 1`, cut along the outer half spiral from 1.
    OneMinusPower(Complex64),
    /// `log(1 - z)` with `0 ↦ 0`, same cut.
    LogOneMinus,
}

const CUT_GUARD: f64 = 1e-6;

fn as_integer(x: Complex64) -> Option<i32> {
    let r = x.re.round();
    ((x - r).norm() < 1e-14 && r.abs() < 1e6).then_some(r as i32)
}

/// `log(-z)` on the sphere cut along the spiral `q₀^R` through 1.
pub fn neg_log(tau0: Complex64, z: Complex64) -> Result<Complex64> {
    if z == Complex64::new(0.0, 0.0) {
        return Err(QError::OnCut { z });
    }
    let (s, y) = spiral_coordinates(tau0, z);
    if !(CUT_GUARD..=1.0 - CUT_GUARD).contains(&s) {
        return Err(QError::OnCut { z });
    }
    Ok(2.0 * PI * I * (s + y * tau0) - I * PI)
}

/// `log(1 - z)` on the sphere cut along `q₀^{[0,∞)}`, continued from 0 along the spiral of `z`.
pub fn log_one_minus(tau0: Complex64, z: Complex64) -> Result<Complex64> {
    if (z - 1.0).norm() < CUT_GUARD {
        return Err(QError::OnCut { z });
    }
    if z.norm() <= 0.5 {
        return Ok((1.0 - z).ln());
    }
    let (s, y) = spiral_coordinates(tau0, z);
    let on_ray = !(CUT_GUARD..=1.0 - CUT_GUARD).contains(&s);
    if on_ray && z.norm() >= 1.0 {
        return Err(QError::OnCut { z });
    }
    // Walk inward along the spiral of z until |z| <= 1/2, where the principal branch applies.
    let s = if s > 0.5 && on_ray { s - 1.0 } else { s };
    let y_end = (2.0f64).ln() / (2.0 * PI * tau0.im);
    let at = |y: f64| (2.0 * PI * I * (s + y * tau0)).exp();
    let mut yc = y;
    let mut zc = z;
    let mut acc = Complex64::new(0.0, 0.0);
    while yc < y_end {
        let dz_dy = 2.0 * PI * tau0.norm() * zc.norm();
        let step = (0.05 * (1.0 - zc).norm() / dz_dy).max(1e-9).min(y_end - yc);
        let yn = yc + step;
        let zn = at(yn);
        acc += ((1.0 - zc) / (1.0 - zn)).ln();
        yc = yn;
        zc = zn;
    }
    Ok((1.0 - zc).ln() + acc)
}

/// Principal determinations of the four classical limits.
pub fn classical_determinations(tau0: Complex64, z: Complex64, kind: Determination) -> Result<Complex64> {
    match kind {
        Determination::NegLog => neg_log(tau0, z),
        Determination::NegPower(g) => match as_integer(g) {
            Some(n) => Ok((-z).powi(n)),
            None => Ok((g * neg_log(tau0, z)?).exp()),
        },
        Determination::OneMinusPower(a) => match as_integer(a) {
            Some(n) => Ok((1.0 - z).powi(n)),
            None => Ok((a * log_one_minus(tau0, z)?).exp()),
        },
        Determination::LogOneMinus => log_one_minus(tau0, z),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ctx(eps: f64) -> QContext {
        QContext::new(c(0.0, 1.0), eps).unwrap()
    }

    /// Naive triple product (p;p)(z;p)(p/z;p), independent of the series path.
    fn triple_product(q: Complex64, z: Complex64) -> Complex64 {
        let p = 1.0 / q;
        let mut acc = Complex64::new(1.0, 0.0);
        let mut pk = Complex64::new(1.0, 0.0);
        for _ in 0..5000 {
            acc *= (1.0 - pk * p) * (1.0 - pk * z) * (1.0 - pk * p / z);
            pk *= p;
            if pk.norm() < 1e-18 {
                break;
            }
        }
        acc
    }

    #[test]
    fn theta_matches_triple_product_oracle_at_minus_one() {
        let ctx = ctx(0.5);
        let z = c(-1.0, 0.0);
        let lhs = theta(&ctx, z).unwrap();
        let rhs = triple_product(ctx.q, z);
        assert!((lhs - rhs).norm() <= 1e-10 * rhs.norm(), "{lhs} vs {rhs}");
    }

    #[test]
    fn truncation_is_short_for_large_epsilon() {
        let t = theta_truncation(&ctx(0.5));
        assert!(!t.product_form);
        assert!(t.terms <= 6, "{t:?}");
        let t = theta_truncation(&ctx(0.02));
        assert!(t.product_form);
        assert!(t.terms > 100);
    }

    #[test]
    fn theta_vanishes_on_q_powers() {
        let ctx = ctx(0.3);
        for k in -3..=3 {
            let v = theta(&ctx, ctx.qpow_real(k as f64)).unwrap();
            let scale = theta(&ctx, ctx.qpow_real(k as f64) * c(0.0, 1.0)).unwrap().norm();
            assert!(v.norm() < 1e-10 * scale, "k = {k}: {v}");
        }
    }

    #[test]
    fn theta_functional_equations() {
        let ctx = ctx(0.2);
        for z in [c(0.3, 0.7), c(-2.0, 0.4), c(5.0, -3.0)] {
            let r = theta(&ctx, ctx.q * z).unwrap() / theta(&ctx, z).unwrap();
            assert!((r + ctx.q * z).norm() < 1e-10 * (ctx.q * z).norm());
            let inv = theta(&ctx, 1.0 / z).unwrap();
            let expect = -theta(&ctx, z).unwrap() / z;
            assert!((inv - expect).norm() < 1e-10 * expect.norm());
        }
    }

    #[test]
    fn theta_plus_basics() {
        let ctx = ctx(0.4);
        assert_eq!(theta_plus(&ctx, c(0.0, 0.0)), c(1.0, 0.0));
        for n in 0..4 {
            let zn = ctx.qpow_real(n as f64);
            let scale = theta_plus(&ctx, zn * c(0.0, 1.0)).norm();
            assert!(theta_plus(&ctx, zn).norm() < 1e-12 * scale);
        }
        let z = c(0.4, -1.3);
        let lhs = theta_plus(&ctx, ctx.q * z);
        let rhs = (1.0 - ctx.q * z) * theta_plus(&ctx, z);
        assert!((lhs - rhs).norm() < 1e-11 * rhs.norm());
        let tp = ctx.pp_inf() * theta_plus(&ctx, z) * theta_plus(&ctx, ctx.p / z);
        let th = theta(&ctx, z).unwrap();
        assert!((tp - th).norm() < 1e-10 * th.norm());
    }

    #[test]
    fn character_relations() {
        let ctx = ctx(0.25);
        let z = c(0.8, 1.9);
        let one = character(&ctx, c(1.0, 0.0), z).unwrap();
        assert!((one - 1.0).norm() < 1e-13);
        let cc = c(1.3, -0.4);
        let r = character(&ctx, cc, ctx.q * z).unwrap() / character(&ctx, cc, z).unwrap();
        assert!((r - cc).norm() < 1e-11);
        let prod = character(&ctx, 1.0 / cc, z).unwrap() * character(&ctx, cc, cc * z).unwrap();
        assert!((prod - 1.0).norm() < 1e-11);
        let qq = character(&ctx, ctx.q, z).unwrap();
        assert!((qq + z).norm() < 1e-11 * z.norm());
    }

    #[test]
    fn character_refuses_pole_spiral() {
        let ctx = ctx(0.25);
        let cc = c(1.3, -0.4);
        let z = cc * ctx.qpow_real(2.0);
        assert!(matches!(character(&ctx, cc, z), Err(QError::NearPole { .. })));
    }

    #[test]
    fn qlog_functional_equations() {
        let ctx = ctx(0.3);
        let z = c(-0.6, 1.1);
        let l = qlog(&ctx, z).unwrap();
        assert!((qlog(&ctx, ctx.q * z).unwrap() - l - 1.0).norm() < 1e-11);
        assert!((qlog(&ctx, 1.0 / z).unwrap() - (1.0 - l)).norm() < 1e-11);
        assert!(matches!(qlog(&ctx, ctx.q), Err(QError::NearPole { .. })));
    }

    #[test]
    fn qlog_matches_finite_difference_of_triple_product() {
        let ctx = ctx(0.5);
        let z = c(-1.0, 0.0);
        let h = 1e-5;
        let lp = triple_product(ctx.q, z * (1.0 + h)).ln();
        let lm = triple_product(ctx.q, z * (1.0 - h)).ln();
        // z d/dz log Θ = d log Θ / d log z
        let fd = (lp - lm) / ((1.0 + h) / (1.0 - h)).ln();
        let l = qlog(&ctx, z).unwrap();
        assert!((l - fd).norm() < 1e-8, "{l} vs {fd}");
    }

    #[test]
    fn qlog_plus_relations() {
        let ctx = ctx(0.3);
        assert_eq!(qlog_plus(&ctx, c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        let z = c(0.7, -1.6);
        let lhs = qlog(&ctx, z).unwrap();
        let rhs = qlog_plus(&ctx, z).unwrap() - qlog_plus(&ctx, 1.0 / z).unwrap() + 1.0 / (1.0 - z);
        assert!((lhs - rhs).norm() < 1e-11);
        let small = c(0.2, 0.3);
        let mut series = Complex64::new(0.0, 0.0);
        for n in 1..200 {
            let qn = ctx.qpow_real(n as f64);
            series += qn * small.powi(n) / (qn - 1.0);
        }
        assert!((qlog_plus(&ctx, small).unwrap() + series).norm() < 1e-12);
    }

    #[test]
    fn qlog_binom_pascal_rule() {
        let ctx = ctx(0.2);
        let z = c(1.7, 0.9);
        assert_eq!(qlog_binom(&ctx, 0, z).unwrap(), c(1.0, 0.0));
        let l = qlog(&ctx, z).unwrap();
        assert!((qlog_binom(&ctx, 2, z).unwrap() - l * (l - 1.0) / 2.0).norm() < 1e-12);
        for k in 1..5 {
            let lhs = qlog_binom(&ctx, k, ctx.q * z).unwrap();
            let rhs = qlog_binom(&ctx, k, z).unwrap() + qlog_binom(&ctx, k - 1, z).unwrap();
            assert!((lhs - rhs).norm() < 1e-10 * rhs.norm().max(1.0));
        }
    }

    #[test]
    fn classical_normalizations() {
        let t = c(0.0, 1.0);
        assert!(neg_log(t, c(-1.0, 0.0)).unwrap().norm() < 1e-15);
        let z = c(0.3, -2.0);
        let sq = classical_determinations(t, z, Determination::NegPower(c(2.0, 0.0))).unwrap();
        assert!((sq - z * z).norm() < 1e-14);
        let one = classical_determinations(t, c(0.0, 0.0), Determination::OneMinusPower(c(0.37, 0.0))).unwrap();
        assert!((one - 1.0).norm() < 1e-15);
        assert!(matches!(neg_log(t, c(3.0, 0.0)), Err(QError::OnCut { .. })));
        assert!(matches!(log_one_minus(t, c(3.0, 0.0)), Err(QError::OnCut { .. })));
    }

    #[test]
    fn classical_logs_agree_with_principal_branch_for_tau_i() {
        let t = c(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let z = c(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            if z.im.abs() < 1e-3 {
                continue;
            }
            assert!((neg_log(t, z).unwrap() - (-z).ln()).norm() < 1e-12);
            assert!((log_one_minus(t, z).unwrap() - (1.0 - z).ln()).norm() < 1e-10);
        }
    }

    #[test]
    fn log_one_minus_is_continuous_on_a_tilted_spiral() {
        let t = c(0.3, 1.0);
        let f = |z: Complex64| log_one_minus(t, z).unwrap();
        let z = c(-2.0, 1.5);
        let d = c(1e-6, 0.0);
        let deriv = (f(z + d) - f(z - d)) / (2.0 * d);
        assert!((deriv + 1.0 / (1.0 - z)).norm() < 1e-6);
        let w = (f(z)).exp();
        assert!((w - (1.0 - z)).norm() < 1e-10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn point() -> impl Strategy<Value = Complex64> {
            (-1.5..1.5f64, -3.1..3.1f64).prop_map(|(lr, th)| Complex64::from_polar(lr.exp(), th))
        }

        /// Distance of `z` from the spiral `c·q^Z`, measured like the pole guard.
        fn clearance(ctx: &QContext, z: Complex64, c: Complex64) -> f64 {
            let (_, w) = ctx.reduce(z / c);
            [-1.0, 0.0, 1.0].iter().map(|&j| (w * ctx.qpow_real(j) - 1.0).norm()).fold(f64::INFINITY, f64::min)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn functional_equations(eps in 0.05..0.5f64, z in point()) {
                let ctx = ctx(eps);
                let one = Complex64::new(1.0, 0.0);
                prop_assume!(clearance(&ctx, z, one) > 1e-2 && clearance(&ctx, z, ctx.p) > 1e-2);
                let tol = 10.0 * ctx.tol;
                let th = theta(&ctx, z).unwrap();
                let lhs = theta(&ctx, ctx.q * z).unwrap();
                prop_assert!((lhs + ctx.q * z * th).norm() <= tol * lhs.norm());
                let inv = theta(&ctx, 1.0 / z).unwrap();
                prop_assert!((inv + th / z).norm() <= tol * inv.norm());
                let tp = theta_plus(&ctx, ctx.q * z);
                prop_assert!((tp - (1.0 - ctx.q * z) * theta_plus(&ctx, z)).norm() <= tol * tp.norm().max(1.0));
                let l = qlog(&ctx, z).unwrap();
                prop_assert!((qlog(&ctx, ctx.q * z).unwrap() - l - 1.0).norm() <= tol * l.norm().max(1.0));
            }

            #[test]
            fn character_equation(eps in 0.05..0.5f64, z in point(), c in point()) {
                let ctx = ctx(eps);
                prop_assume!(clearance(&ctx, z, c) > 1e-2 && clearance(&ctx, z, Complex64::new(1.0, 0.0)) > 1e-2);
                let e = character(&ctx, c, z).unwrap();
                let eq = character(&ctx, c, ctx.q * z).unwrap();
                prop_assert!((eq - c * e).norm() <= 10.0 * ctx.tol * eq.norm());
            }

            #[test]
            fn cocycle_is_elliptic(eps in 0.05..0.5f64, z in point(), c in point(), d in point()) {
                let ctx = ctx(eps);
                let one = Complex64::new(1.0, 0.0);
                for s in [c, d, c * d, one] {
                    prop_assume!(clearance(&ctx, z, s) > 1e-2);
                }
                let cocycle = |w: Complex64| {
                    character(&ctx, c, w).unwrap() * character(&ctx, d, w).unwrap() / character(&ctx, c * d, w).unwrap()
                };
                let (a, b) = (cocycle(z), cocycle(ctx.q * z));
                prop_assert!((a - b).norm() <= 10.0 * ctx.tol * a.norm(), "{} vs {}", a, b);
            }
        }
    }
}
