//! Birkhoff connection matrix `P = (X^(∞))⁻¹·X^(0)` and its diagnostics.

use num_complex::Complex64;

use crate::cmatrix::{self, CMatrix, JordanData};
use crate::error::{QError, Result};
use crate::localsolve::{
    canonical_solution_infinity_with, canonical_solution_zero_with, LocalSolution, SolveOptions,
};
use crate::qcalc::QContext;
use crate::ratfun::RatMat;

/// Relative distance to a forbidden spiral under which a sample is rejected.
pub const SAMPLE_MARGIN: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct ConnectionEvaluator {
    pub sol0: LocalSolution,
    pub sol_inf: LocalSolution,
    pub ctx: QContext,
}

pub fn connection_matrix(a: &RatMat, ctx: &QContext) -> Result<ConnectionEvaluator> {
    connection_matrix_with(a, ctx, &SolveOptions::default())
}

pub fn connection_matrix_with(a: &RatMat, ctx: &QContext, opts: &SolveOptions) -> Result<ConnectionEvaluator> {
    let sol0 = canonical_solution_zero_with(a, ctx, opts)?;
    let sol_inf = canonical_solution_infinity_with(a, ctx, opts)?;
    Ok(ConnectionEvaluator::from_solutions(sol0, sol_inf, ctx))
}

/// `|z/(f·q^k) − 1|` minimised over the integer `k` nearest to the spiral.
fn spiral_distance(ctx: &QContext, z: Complex64, f: Complex64) -> f64 {
    let (k, _) = ctx.reduce(z / f);
    (k - 1..=k + 1)
        .map(|j| (z / (f * ctx.qpow_real(j as f64)) - 1.0).norm())
        .fold(f64::INFINITY, f64::min)
}

impl ConnectionEvaluator {
    /// Pairs arbitrary solutions; used for negative controls as well.
    pub fn from_solutions(sol0: LocalSolution, sol_inf: LocalSolution, ctx: &QContext) -> Self {
        ConnectionEvaluator { sol0, sol_inf, ctx: ctx.clone() }
    }

    pub fn eval(&self, z: Complex64) -> Result<CMatrix> {
        let x0 = self.sol0.eval(z)?;
        let xi = self.sol_inf.eval(z)?;
        let inv = cmatrix::inverse(&xi).map_err(|_| QError::NearSingularSpiral { z })?;
        Ok(inv * x0)
    }

    /// Points of `C*` whose `q`-spirals carry poles or zeros of either solution.
    pub fn forbidden_spirals(&self) -> Vec<Complex64> {
        let w0 = self.sol0.omega;
        let wi = 1.0 / self.sol_inf.omega;
        let mut f = vec![w0, wi];
        f.extend(self.sol0.singular_points().iter().copied());
        f.extend(self.sol_inf.singular_points().iter().map(|s| 1.0 / s));
        f.extend(self.sol0.exponents.iter().map(|c| w0 * c));
        f.extend(self.sol_inf.exponents.iter().map(|c| wi / c));
        f
    }

    /// Relative distance from `z` to the nearest forbidden spiral.
    pub fn clearance(&self, z: Complex64) -> f64 {
        self.forbidden_spirals()
            .into_iter()
            .map(|f| spiral_distance(&self.ctx, z, f))
            .fold(f64::INFINITY, f64::min)
    }

    /// Radius of the sampling circle: geometric mean of the two validated radii.
    pub fn sample_radius(&self) -> f64 {
        (self.sol0.radius() / self.sol_inf.radius()).sqrt()
    }

    /// `k` points of the annulus `R ≤ |z| < R|q|`, pairwise non-congruent mod `q^Z`,
    /// kept at [`SAMPLE_MARGIN`] from every forbidden spiral.
    pub fn sample_points(&self, k: usize) -> Vec<Complex64> {
        let r = self.sample_radius();
        let golden = 0.5 * (5f64.sqrt() - 1.0);
        let mut out = Vec::with_capacity(k);
        let mut j = 0usize;
        while out.len() < k && j < 64 * k + 64 {
            let t = (j as f64 + 0.5) / k as f64;
            let u = (j as f64 * golden).fract();
            let z = self.ctx.qpow_real(u) / self.ctx.qpow_real(u).norm() * r * self.ctx.q.norm().powf(u)
                * Complex64::from_polar(1.0, std::f64::consts::TAU * t);
            j += 1;
            if self.clearance(z) >= SAMPLE_MARGIN {
                out.push(z);
            }
        }
        out
    }
}

/// `max ‖P(qz) − P(z)‖ / ‖P(z)‖` over the samples.
pub fn ellipticity_residual(p: &ConnectionEvaluator, samples: &[Complex64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &z in samples {
        let a = p.eval(z)?;
        let b = p.eval(p.ctx.q * z)?;
        worst = worst.max((b - &a).norm() / a.norm());
    }
    Ok(worst)
}

/// `(N^(∞), P, N^(0))` coding: Jordan data of both constant parts and samples of `P`.
#[derive(Debug, Clone)]
pub struct TripletCode {
    pub jordan0: JordanData,
    pub jordan_inf: JordanData,
    /// Block eigenvalues moved into `1 ≤ |c| < |q|`.
    pub exponents0: Vec<Complex64>,
    pub exponents_inf: Vec<Complex64>,
    pub samples: Vec<(Complex64, CMatrix)>,
}

fn normalized(ctx: &QContext, jd: &JordanData) -> Vec<Complex64> {
    jd.blocks
        .iter()
        .map(|b| {
            let n = (b.lambda.norm().ln() / ctx.log_abs_q() + 1e-12).floor();
            b.lambda / ctx.qpow_real(n)
        })
        .collect()
}

pub fn triplet_code(a: &RatMat, ctx: &QContext, sample_count: usize) -> Result<TripletCode> {
    let p = connection_matrix(a, ctx)?;
    let jordan0 = cmatrix::jordanize(&p.sol0.a0, cmatrix::CLUSTER_TOL)?;
    let jordan_inf = cmatrix::jordanize(&p.sol_inf.a0, cmatrix::CLUSTER_TOL)?;
    let samples = p
        .sample_points(sample_count)
        .into_iter()
        .map(|z| p.eval(z).map(|m| (z, m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TripletCode {
        exponents0: normalized(ctx, &jordan0),
        exponents_inf: normalized(ctx, &jordan_inf),
        jordan0,
        jordan_inf,
        samples,
    })
}

/// `max ‖U(qz)·B(z) − A(z)·U(z)‖ / ‖A(z)·U(z)‖` over the samples.
pub fn gauge_equivalence_residual(a: &RatMat, b: &RatMat, u: &RatMat, ctx: &QContext, samples: &[Complex64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &z in samples {
        let lhs = u.eval(ctx.q * z)? * b.eval(z)?;
        let rhs = a.eval(z)? * u.eval(z)?;
        worst = worst.max((lhs - &rhs).norm() / rhs.norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localsolve::{canonical_solution_infinity, canonical_solution_zero};
    use crate::qcalc::{character, theta};
    use crate::ratfun::tests::{cx, hypergeometric};
    use crate::ratfun::{Poly, RatFun};
    use proptest::prelude::*;

    const ONE: Complex64 = Complex64::new(1.0, 0.0);
    const ZERO: Complex64 = Complex64::new(0.0, 0.0);

    fn ctx(eps: f64) -> QContext {
        QContext::new(cx(0.0, 1.0), eps).unwrap()
    }

    fn scalar(ctx: &QContext, al: f64, z0: Complex64) -> RatMat {
        let f = RatFun::new(Poly::new(vec![ONE, -ctx.qpow_real(al) / z0]), Poly::new(vec![ONE, -1.0 / z0])).unwrap();
        RatMat::new(1, vec![f]).unwrap()
    }

    #[test]
    fn identity_has_trivial_connection() {
        let c = ctx(0.1);
        let p = connection_matrix(&RatMat::identity(2), &c).unwrap();
        let s = p.sample_points(8);
        assert_eq!(s.len(), 8);
        for z in &s {
            assert!(cmatrix::rel_diff(&p.eval(*z).unwrap(), &cmatrix::identity(2)) < 1e-14);
        }
        assert!(ellipticity_residual(&p, &s).unwrap() < 1e-14);
    }

    #[test]
    fn scalar_connection_matches_theta_ratio() {
        let c = ctx(0.1);
        let (al, z0) = (1.0 / 3.0, cx(0.0, 2.0));
        let p = connection_matrix(&scalar(&c, al, z0), &c).unwrap();
        let qa = c.qpow_real(al);
        for z in p.sample_points(12) {
            // the closed form carries an extra constant factor q^α
            let expected = theta(&c, qa * z / z0).unwrap() / theta(&c, z / z0).unwrap()
                / character(&c, 1.0 / qa, 1.0 / z).unwrap()
                / qa;
            let got = p.eval(z).unwrap()[(0, 0)];
            assert!((got - expected).norm() < 1e-9 * expected.norm(), "{got} vs {expected}");
        }
    }

    #[test]
    fn hypergeometric_is_elliptic() {
        let c = ctx(0.1);
        let (a, _, _) = (0.5, 1.0 / 3.0, 0.75);
        let sys = hypergeometric(&c, 0.5, 1.0 / 3.0, 0.75);
        let p = connection_matrix(&sys, &c).unwrap();
        let s = p.sample_points(20);
        assert_eq!(s.len(), 20);
        assert!(ellipticity_residual(&p, &s).unwrap() < 1e-6);
        // in eigenframes the (a, 1) entry is a constant times Θ(bz/cq)/(Θ(abz/cq)·e_{q,a}(1/z))
        let (qa, qb, qc) = (c.qpow_real(a), c.qpow_real(1.0 / 3.0), c.qpow_real(0.75));
        let eigenframe = |m: &CMatrix, lambda: Complex64| {
            let jd = cmatrix::jordanize(m, cmatrix::CLUSTER_TOL).unwrap();
            let k = jd.blocks.iter().position(|b| (b.lambda - lambda).norm() < 1e-9).unwrap();
            let mut cols: Vec<_> = (0..2).map(|j| jd.q0.column(j).into_owned()).collect();
            cols.swap(0, k);
            CMatrix::from_columns(&cols)
        };
        let v0 = eigenframe(&p.sol0.a0, ONE);
        let vi = eigenframe(&p.sol_inf.a0, qa);
        let vi_inv = cmatrix::inverse(&vi).unwrap();
        let ratios: Vec<Complex64> = s
            .iter()
            .map(|&z| {
                let entry = (&vi_inv * p.eval(z).unwrap() * &v0)[(0, 0)];
                let form = theta(&c, qb * z / (qc * c.q)).unwrap() / theta(&c, qa * qb * z / (qc * c.q)).unwrap()
                    / character(&c, qa, 1.0 / z).unwrap();
                entry / form
            })
            .collect();
        assert!(ratios.iter().all(|r| (r - ratios[0]).norm() < 1e-7 * ratios[0].norm()));
        for z in &s {
            let d = p.eval(*z).unwrap().determinant();
            let dq = p.eval(c.q * z).unwrap().determinant();
            assert!(d.norm() > 1e-12);
            assert!((d - dq).norm() < 1e-6 * d.norm());
        }
    }

    #[test]
    fn ellipticity_for_two_epsilons() {
        for eps in [0.2, 0.05] {
            let c = ctx(eps);
            let p = connection_matrix(&hypergeometric(&c, 0.5, 1.0 / 3.0, 0.75), &c).unwrap();
            let s = p.sample_points(20);
            assert!(ellipticity_residual(&p, &s).unwrap() < 1e-6, "eps {eps}");
        }
    }

    #[test]
    fn mismatched_pair_is_flagged() {
        let c = ctx(0.1);
        let a = hypergeometric(&c, 0.5, 1.0 / 3.0, 0.75);
        let good = connection_matrix(&a, &c).unwrap();
        let bad = ConnectionEvaluator::from_solutions(
            canonical_solution_zero(&a, &c).unwrap(),
            canonical_solution_infinity(&a.scale(cx(2.0, 0.0)), &c).unwrap(),
            &c,
        );
        let s = good.sample_points(10);
        assert!(ellipticity_residual(&bad, &s).unwrap() > 1e-2);
    }

    #[test]
    fn right_multiplication_by_commuting_constant() {
        let c = ctx(0.1);
        let a = hypergeometric(&c, 0.5, 1.0 / 3.0, 0.75);
        let p = connection_matrix(&a, &c).unwrap();
        // a polynomial in A₀ commutes with it
        let r = cmatrix::identity(2) * cx(0.3, 0.2) + &p.sol0.a0 * cx(1.1, -0.4);
        for z in p.sample_points(5) {
            let x0r = p.sol0.eval(z).unwrap() * &r;
            let pr = cmatrix::inverse(&p.sol_inf.eval(z).unwrap()).unwrap() * x0r;
            assert!(cmatrix::rel_diff(&pr, &(p.eval(z).unwrap() * &r)) < 1e-12);
            // the right-multiplied frame is again a solution
            let x0rq = p.sol0.eval(c.q * z).unwrap() * &r;
            let ax = a.eval(z).unwrap() * p.sol0.eval(z).unwrap() * &r;
            assert!(cmatrix::rel_diff(&x0rq, &ax) < 1e-8);
        }
    }

    #[test]
    fn triplet_bookkeeping() {
        let c = ctx(0.1);
        let k = cx(1.3, 0.2);
        let t = triplet_code(&RatMat::constant(&CMatrix::from_element(1, 1, k)), &c, 4).unwrap();
        assert_eq!(t.jordan0.blocks.len(), 1);
        assert!((t.jordan0.blocks[0].lambda - k).norm() < 1e-14);
        assert!((t.jordan_inf.blocks[0].lambda - 1.0 / k).norm() < 1e-14);
        let first = &t.samples[0].1;
        assert!(t.samples.iter().all(|(_, m)| cmatrix::rel_diff(m, first) < 1e-10));

        // Example 1 after preparation
        let prepared = RatMat::constant(&cmatrix::from_rows(&[&[ONE, 1.0 / c.q], &[ZERO, ONE]]));
        let t = triplet_code(&prepared, &c, 4).unwrap();
        assert_eq!(t.jordan0.blocks.len(), 1);
        assert_eq!(t.jordan0.blocks[0].size, 2);
        assert!((t.jordan0.blocks[0].lambda - 1.0).norm() < 1e-12);

        let t = triplet_code(&hypergeometric(&c, 0.5, 1.0 / 3.0, 0.75), &c, 4).unwrap();
        let qc = c.q / c.qpow_real(0.75);
        assert!(t.exponents0.iter().any(|e| (e - 1.0).norm() < 1e-10));
        assert!(t.exponents0.iter().any(|e| (e - qc).norm() < 1e-10));
        assert!(t.exponents0.iter().all(|e| e.norm() >= 1.0 - 1e-12 && e.norm() < c.q.norm()));
        let (z0, z1) = (t.samples[0].0, t.samples[1].0);
        assert!((z0.norm().ln() - z1.norm().ln()).abs() < c.log_abs_q());
    }

    #[test]
    fn example_one_gauge_residual() {
        let c = ctx(0.1);
        let a = RatMat::new(
            2,
            vec![RatFun::constant(c.q), RatFun::monomial(ONE, 1), RatFun::zero(), RatFun::constant(ONE)],
        )
        .unwrap();
        let u = RatMat::new(2, vec![RatFun::monomial(ONE, 1), RatFun::zero(), RatFun::zero(), RatFun::constant(ONE)]).unwrap();
        let b = RatMat::constant(&cmatrix::from_rows(&[&[ONE, 1.0 / c.q], &[ZERO, ONE]]));
        let s = [cx(0.3, 0.4), cx(-1.2, 0.5), cx(2.0, -2.0)];
        assert!(gauge_equivalence_residual(&a, &b, &u, &c, &s).unwrap() < 1e-10);
        assert!(gauge_equivalence_residual(&a, &a, &RatMat::identity(2), &c, &s).unwrap() == 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn constructed_gauge_transforms_verify(seed in 0u64..10_000) {
            let c = ctx(0.1);
            let a = hypergeometric(&c, 0.5, 1.0 / 3.0, 0.75);
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            let u = crate::ratfun::tests::random_ratmat(&mut rng, 2, 1);
            if let Ok(uq_inv) = u.reciprocal_subs(ONE).reciprocal_subs(1.0 / c.q).inverse() {
                let b = uq_inv.mul(&a).mul(&u);
                let s = [cx(0.41, 0.13), cx(-0.7, 1.1), cx(1.9, -0.6)];
                if let Ok(r) = gauge_equivalence_residual(&a, &b, &u, &c, &s) {
                    prop_assert!(r < 1e-9, "{}", r);
                }
            }
        }
    }
}
