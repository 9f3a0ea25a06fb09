//! The special-function identity battery behind `qconnect identities`.

use std::f64::consts::PI;

use num_complex::Complex64;
use qconnect_core::qcalc::{character, qlog, qlog_binom, qlog_plus, theta, theta_plus};
use qconnect_core::{QContext, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative residual every identity must stay below.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Admissible points keep this relative distance from the pole and zero spirals.
pub const MARGIN: f64 = 0.05;

pub const IDENTITIES: [&str; 7] = [
    "triple_product",
    "theta_shift",
    "theta_plus_shift",
    "character_shift",
    "qlog_shift",
    "qlog_plus_shift",
    "qlog_binom_pascal",
];

#[derive(Debug, Clone)]
pub struct BatteryResult {
    pub points: usize,
    /// Worst relative residual per entry of [`IDENTITIES`].
    pub worst: [f64; 7],
}

/// `(p;p)(z;p)(p/z;p)` multiplied out factor by factor.
pub fn naive_triple_product(q: Complex64, z: Complex64) -> Complex64 {
    let p = 1.0 / q;
    let mut acc = Complex64::new(1.0, 0.0);
    let mut pk = Complex64::new(1.0, 0.0);
    while pk.norm() > 1e-18 {
        acc *= (1.0 - pk * p) * (1.0 - pk * z) * (1.0 - pk * p / z);
        pk *= p;
    }
    acc
}

fn random_point(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Complex64 {
    Complex64::from_polar(rng.random_range(lo.ln()..hi.ln()).exp(), rng.random_range(-PI..PI))
}

fn rel(a: Complex64, b: Complex64, scale: f64) -> f64 {
    (a - b).norm() / scale.max(1e-300)
}

/// Runs every identity at `points` random admissible `z` in `0.1 ≤ |z| ≤ 10`,
/// with a random character exponent in `0.5 ≤ |c| ≤ 2` per point.
pub fn run(ctx: &QContext, seed: u64, points: usize) -> Result<BatteryResult> {
    let guard = ctx.clone().with_guard(MARGIN);
    let one = Complex64::new(1.0, 0.0);
    let q = ctx.q;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 7];
    let mut taken = 0;
    while taken < points {
        let z = random_point(&mut rng, 0.1, 10.0);
        let c = random_point(&mut rng, 0.5, 2.0);
        if guard.near_spiral(z, one) || guard.near_spiral(c, one) || guard.near_spiral(z, c) {
            continue;
        }
        taken += 1;
        let th = theta(ctx, z)?;
        let tp = naive_triple_product(q, z);
        worst[0] = worst[0].max(rel(th, tp, tp.norm()));

        let rhs = -q * z * th;
        worst[1] = worst[1].max(rel(theta(ctx, q * z)?, rhs, rhs.norm()));

        let rhs = (1.0 - q * z) * theta_plus(ctx, z);
        worst[2] = worst[2].max(rel(theta_plus(ctx, q * z), rhs, rhs.norm()));

        let rhs = c * character(ctx, c, z)?;
        worst[3] = worst[3].max(rel(character(ctx, c, q * z)?, rhs, rhs.norm()));

        let lhs = qlog(ctx, q * z)?;
        worst[4] = worst[4].max(rel(lhs, qlog(ctx, z)? + 1.0, lhs.norm().max(1.0)));

        let lhs = qlog_plus(ctx, q * z)?;
        let rhs = qlog_plus(ctx, z)? - q * z / (1.0 - q * z);
        worst[5] = worst[5].max(rel(lhs, rhs, lhs.norm().max(1.0)));

        for k in 1..=4 {
            let lhs = qlog_binom(ctx, k, q * z)?;
            let rhs = qlog_binom(ctx, k, z)? + qlog_binom(ctx, k - 1, z)?;
            worst[6] = worst[6].max(rel(lhs, rhs, lhs.norm().max(1.0)));
        }
    }
    Ok(BatteryResult { points, worst })
}
