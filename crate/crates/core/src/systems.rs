//! Reference systems used by the command line, the benches and the test suites.

use num_complex::Complex64;

use crate::confluence::Family;
use crate::qcalc::QContext;
use crate::ratfun::{Poly, QCoeff, QRatFun, QRatMat, RatFun, RatMat};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn qs(t: &[(f64, f64)]) -> QCoeff {
    QCoeff { terms: t.iter().map(|&(a, e)| (re(a), e)).collect() }
}

/// `[[q, z^k], [0, 1]]`: Example 1 for `k = 1`, Example 2 for `k = 2`.
pub fn shear_example(ctx: &QContext, k: i64) -> RatMat {
    RatMat::new(2, vec![RatFun::constant(ctx.q), RatFun::monomial(ONE, k), RatFun::zero(), RatFun::constant(ONE)])
        .expect("2x2")
}

/// Heine's system for `(f, (σf − f)/(q − 1))` with `(a, b, c) = (q^α, q^β, q^γ)`.
pub fn hypergeometric(ctx: &QContext, al: f64, be: f64, ga: f64) -> RatMat {
    heine_family(al, be, ga).instantiate(ctx).expect("nonzero denominators")
}

/// `B̃` of Gauss' equation for the vector `(F, δF)`.
pub fn gauss_limit(al: f64, be: f64, ga: f64) -> RatMat {
    let d = Poly::new(vec![ONE, re(-1.0)]);
    let lam = RatFun::new(Poly::new(vec![re(1.0 - ga), re(al + be)]), d.clone()).expect("nonzero");
    let mu = RatFun::new(Poly::new(vec![ZERO, re(al * be)]), d).expect("nonzero");
    RatMat::new(2, vec![RatFun::zero(), RatFun::constant(ONE), mu, lam]).expect("2x2")
}

/// The `q`-family of [`hypergeometric`] together with its Gauss limit.
pub fn heine_family(al: f64, be: f64, ga: f64) -> Family {
    Family::Direct { family: heine_qmat(al, be, ga), limit: gauss_limit(al, be, ga) }
}

pub fn heine_qmat(al: f64, be: f64, ga: f64) -> QRatMat {
    let one = qs(&[(1.0, 0.0)]);
    let a11 = QRatFun { num: vec![one.clone()], den: vec![one.clone()] };
    let a12 = QRatFun { num: vec![qs(&[(1.0, 1.0), (-1.0, 0.0)])], den: vec![one] };
    let a21 = QRatFun {
        num: vec![qs(&[]), qs(&[(-1.0, 0.0), (1.0, al), (1.0, be), (-1.0, al + be)])],
        den: vec![qs(&[(-1.0, ga), (1.0, ga - 1.0)]), qs(&[(1.0, al + be + 1.0), (-1.0, al + be)])],
    };
    let a22 = QRatFun {
        num: vec![qs(&[(-1.0, 0.0)]), qs(&[(1.0, al), (1.0, be), (-1.0, al + be)])],
        den: vec![qs(&[(-1.0, ga - 1.0)]), qs(&[(1.0, al + be)])],
    };
    QRatMat { n: 2, entries: vec![a11, a12, a21, a22] }
}

/// `B̃ = −α·(z/z₀)/(1 − z/z₀)`, solved by `(1 − z/z₀)^α`.
pub fn first_order_limit(alpha: f64, z0: Complex64) -> RatMat {
    let f = RatFun::new(Poly::new(vec![ZERO, re(-alpha) / z0]), Poly::new(vec![ONE, -1.0 / z0])).expect("nonzero");
    RatMat::new(1, vec![f]).expect("1x1")
}

/// `a_ε(z) = (1 − q^α z/z₀)/(1 − z/z₀)` and its limit.
pub fn first_order_family(alpha: f64, z0: Complex64) -> Family {
    let num = vec![QCoeff::constant(ONE), QCoeff { terms: vec![(-1.0 / z0, alpha)] }];
    let den = vec![QCoeff::constant(ONE), QCoeff::constant(-1.0 / z0)];
    Family::Direct {
        family: QRatMat { n: 1, entries: vec![QRatFun { num, den }] },
        limit: first_order_limit(alpha, z0),
    }
}

/// `B̃ = [[0, −z/(1 − z/z₀)], [0, 0]]`, whose monodromy around `z₀` is `[[1, 2πi·z₀], [0, 1]]`.
pub fn log_limit(z0: Complex64) -> RatMat {
    let f = RatFun::new(Poly::new(vec![ZERO, re(-1.0)]), Poly::new(vec![ONE, -1.0 / z0])).expect("nonzero");
    RatMat::new(2, vec![RatFun::zero(), f, RatFun::zero(), RatFun::zero()]).expect("2x2")
}

pub fn log_family(z0: Complex64) -> Family {
    Family::Linear(log_limit(z0))
}
