//! Canonical fundamental solutions of `X(qz) = A(z)·X(z)` at 0 and at ∞.
//!
//! At 0 the system is first sheared until no two exponents differ by a power
//! of `q`, then gauged to its constant part `A₀` by a convergent series
//! `F = I + F₁z + …`. Inside the validated disk the solution is `G·F·e_{q,A₀}`;
//! outside it is propagated with `X(z) = A(z/q)·X(z/q)`. The solution at ∞ is
//! the solution at 0 of `Ā(w) = A(1/(qw))⁻¹`, read in `w = 1/z`.

use num_complex::Complex64;

use crate::cmatrix::{self, CMatrix, MatrixCharacter, RESONANCE_TOL};
use crate::error::{QError, Result};
use crate::qcalc::{binomial, character, qlog, QContext};
use crate::ratfun::{infinity_transform, singular_set, Poly, RatFun, RatMat};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Default relative tolerance for the system residual.
pub const SOL_TOL: f64 = 1e-8;
/// Distance to resonance that is reported as a warning.
pub const NEAR_RESONANCE: f64 = 1e-4;
const MAX_SHEARS: usize = 64;
const DEFAULT_ORDER_CAP: usize = 400;
const MAX_PRODUCT_FACTORS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceReport {
    pub exponents: Vec<Complex64>,
    /// Indices into `exponents`, grouped by congruence modulo `q^Z`.
    pub classes: Vec<Vec<usize>>,
    pub resonant: bool,
    /// Some pair sits within [`NEAR_RESONANCE`] of a power of `q` without being resonant.
    pub near_resonant: bool,
}

/// Integer `n` with `|a/b − q^n| < tol·|q^n|`, searched over `|n| ≤ n_max`.
fn congruence(ctx: &QContext, a: Complex64, b: Complex64, n_max: i64, tol: f64) -> Option<i64> {
    let r = a / b;
    (-n_max..=n_max).find(|&n| {
        let qn = ctx.qpow_real(n as f64);
        (r - qn).norm() < tol * qn.norm()
    })
}

pub fn resonance_classes(a0: &CMatrix, ctx: &QContext) -> ResonanceReport {
    let exponents: Vec<Complex64> = cmatrix::spectrum(a0)
        .into_iter()
        .flat_map(|(c, k)| std::iter::repeat_n(c, k))
        .collect();
    let (lo, hi) = exponents
        .iter()
        .map(|c| c.norm())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let n_max = if exponents.is_empty() { 0 } else { ((hi / lo).ln() / ctx.log_abs_q()).ceil() as i64 + 2 };

    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut resonant = false;
    let mut near_resonant = false;
    for (i, &c) in exponents.iter().enumerate() {
        let home = classes.iter().position(|cl| congruence(ctx, c, exponents[cl[0]], n_max, RESONANCE_TOL).is_some());
        match home {
            Some(k) => {
                if classes[k].iter().any(|&j| congruence(ctx, c, exponents[j], n_max, RESONANCE_TOL) != Some(0)) {
                    resonant = true;
                }
                classes[k].push(i);
            }
            None => {
                if classes.iter().any(|cl| congruence(ctx, c, exponents[cl[0]], n_max, NEAR_RESONANCE).is_some()) {
                    near_resonant = true;
                }
                classes.push(vec![i]);
            }
        }
    }
    ResonanceReport { exponents, classes, resonant, near_resonant }
}

/// Result of [`shear_prepare`]: `prepared = (gauge(qz))⁻¹·A·gauge(z)`.
#[derive(Debug, Clone)]
pub struct Shearing {
    pub prepared: RatMat,
    pub gauge: RatMat,
    pub steps: usize,
}

fn constant_part(a: &RatMat) -> Result<CMatrix> {
    let a0 = a.eval(ZERO).map_err(|_| QError::NotFuchsian("0"))?;
    let sv = a0.clone().singular_values();
    if sv.min() <= 1e-12 * sv.max() {
        return Err(QError::NotFuchsian("0"));
    }
    Ok(a0)
}

/// `S(qz)⁻¹·M·S(z)` with `S = diag(z^{k_i})`; entries that must vanish at 0
/// have their numerical constant term removed before division by `z`.
fn shear_conjugate(m: &RatMat, k: &[i64], q: Complex64) -> Result<RatMat> {
    let n = m.dim();
    let mut out = m.clone();
    for i in 0..n {
        for j in 0..n {
            let f = m.get(i, j);
            let d = k[j] - k[i];
            let mut g = f.clone();
            if d < 0 && !g.is_zero() {
                let scale = f.num().max_abs().max(1.0);
                let v0 = g.eval(ZERO)?;
                if v0.norm() > 1e-8 * scale {
                    return Err(QError::IllConditioned(format!("shear leaves a pole at 0 in entry ({i},{j})")));
                }
                let mut c = g.num().coeffs().to_vec();
                c[0] = ZERO;
                g = g.with_num(Poly::new(c));
            }
            out.set(i, j, g.mul_monomial(q.powi(-k[i] as i32), d));
        }
    }
    Ok(out)
}

/// Jordan basis with each chain scaled so its head has a unit largest entry.
fn tidy_basis(a0: &CMatrix) -> Result<cmatrix::JordanData> {
    let mut jd = cmatrix::jordanize(a0, cmatrix::CLUSTER_TOL)?;
    let mut off = 0;
    for b in &jd.blocks {
        let head = jd.q0.column(off + b.size - 1).into_owned();
        let pivot = head.iter().copied().max_by(|x, y| x.norm().total_cmp(&y.norm())).unwrap_or(ONE);
        for c in off..off + b.size {
            let col = jd.q0.column(c) / pivot;
            jd.q0.set_column(c, &col);
        }
        off += b.size;
    }
    Ok(jd)
}

/// Alternates constant gauges and shears `diag(z·I_μ, I_ν)` until `A(0)` is non-resonant.
pub fn shear_prepare(a: &RatMat, ctx: &QContext) -> Result<Shearing> {
    let n = a.dim();
    let mut prepared = a.clone();
    let mut gauge = RatMat::identity(n);
    let mut steps = 0;
    loop {
        let a0 = constant_part(&prepared)?;
        let report = resonance_classes(&a0, ctx);
        if !report.resonant {
            return Ok(Shearing { prepared, gauge, steps });
        }
        if steps >= MAX_SHEARS {
            return Err(QError::MaxIterations(steps));
        }
        // the member of a resonant class with the largest power of q moves down
        let n_max = 64;
        let top = report
            .classes
            .iter()
            .filter_map(|cl| {
                let base = report.exponents[cl[0]];
                let powers: Vec<(i64, Complex64)> = cl
                    .iter()
                    .map(|&i| (congruence(ctx, report.exponents[i], base, n_max, RESONANCE_TOL).unwrap_or(0), report.exponents[i]))
                    .collect();
                let (kmin, kmax) = powers.iter().fold((i64::MAX, i64::MIN), |(lo, hi), (k, _)| (lo.min(*k), hi.max(*k)));
                (kmin != kmax).then(|| powers.into_iter().max_by_key(|(k, _)| *k).expect("nonempty").1)
            })
            .next()
            .expect("resonant report has a class with distinct powers");
        let jd = tidy_basis(&a0)?;
        let close = |l: Complex64| (l - top).norm() <= 1e-6 * top.norm();
        let mut cols = Vec::with_capacity(n);
        let mut rest = Vec::with_capacity(n);
        let mut off = 0;
        for b in &jd.blocks {
            let target = if close(b.lambda) { &mut cols } else { &mut rest };
            target.extend((off..off + b.size).map(|c| jd.q0.column(c).into_owned()));
            off += b.size;
        }
        let mu = cols.len();
        cols.extend(rest);
        let q = CMatrix::from_columns(&cols);
        let qinv = cmatrix::inverse(&q)?;
        let k: Vec<i64> = (0..n).map(|i| i64::from(i < mu)).collect();
        prepared = shear_conjugate(&prepared.conjugate_const(&qinv, &q), &k, ctx.q)?;
        let s = RatMat::from_fn(n, |i, j| if i != j { RatFun::zero() } else { RatFun::monomial(ONE, k[i]) });
        gauge = gauge.mul(&RatMat::constant(&q)).mul(&s);
        steps += 1;
    }
}

/// Truncated gauge transformation `F = Σ F_m z^m` with `F(qz)·A₀ = A(z)·F(z)`.
#[derive(Debug, Clone)]
pub struct GaugeSeries {
    pub coeffs: Vec<CMatrix>,
    pub radius: f64,
    pub tail_bound: f64,
}

impl GaugeSeries {
    pub fn eval(&self, z: Complex64) -> CMatrix {
        let n = self.coeffs[0].nrows();
        self.coeffs.iter().rev().fold(CMatrix::zeros(n, n), |acc, f| acc * z + f)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// Half the distance from 0 to the nearest singular point, 1 if there is none.
fn validated_radius(points: &[Complex64]) -> f64 {
    points.iter().map(|z| z.norm()).filter(|r| *r > 0.0).fold(f64::INFINITY, f64::min).min(2.0) / 2.0
}

fn singular_points(a: &RatMat) -> Result<Vec<Complex64>> {
    let mut s = singular_set(a)?;
    for p in a.poles() {
        if p.norm() > 0.0 && !s.iter().any(|x| (x - p).norm() < 1e-8) {
            s.push(p);
        }
    }
    Ok(s)
}

/// `‖Φ_{A₀,λ}⁻¹‖₂` for the operator `F ↦ λ·F·A₀ − A₀·F`.
fn inverse_operator_norm(a0: &CMatrix, lambda: Complex64) -> f64 {
    let n = a0.nrows();
    let id = CMatrix::identity(n, n);
    let op = a0.transpose().kronecker(&id) * lambda - id.kronecker(a0);
    1.0 / op.singular_values().min().max(f64::MIN_POSITIVE)
}

/// Majorant bound for `Σ_{m>M} ‖F_m‖·r^m`: the norms of the computed terms seed
/// the recursion `f_m = b_m·Σ_i K·ρ^{-i}·f_{m-i}` where `‖A_i‖ ≤ K·ρ^{-i}` (Cauchy)
/// and `b_m` bounds `‖Φ_{A₀,q^m}⁻¹‖`.
fn majorant_tail(a: &RatMat, ctx: &QContext, a0: &CMatrix, norms: &[f64], r: f64, rho: f64) -> f64 {
    let kc = (0..32)
        .filter_map(|j| {
            let z = Complex64::from_polar(rho, std::f64::consts::TAU * j as f64 / 32.0);
            a.eval(z).ok().map(|m| (m - a0).norm())
        })
        .fold(0.0, f64::max)
        * 1.5;
    let m0 = norms.len();
    let a0_norm = a0.norm();
    let a0_inv_norm = cmatrix::inverse(a0).map(|m| m.norm()).unwrap_or(f64::INFINITY);
    let b = |m: usize| {
        if m <= 2 * m0 {
            inverse_operator_norm(a0, ctx.q.powi(m as i32))
        } else {
            let d = ctx.q.norm().powi(m as i32) - a0_norm * a0_inv_norm;
            if d > 0.0 { a0_inv_norm / d } else { inverse_operator_norm(a0, ctx.q.powi(m as i32)) }
        }
    };
    let mut f: Vec<f64> = norms.to_vec();
    let mut tail = 0.0;
    let mut m = m0;
    loop {
        let s: f64 = (1..=m).map(|i| kc * rho.powi(-(i as i32)) * f[m - i]).sum();
        let fm = b(m) * s;
        f.push(fm);
        let term = fm * r.powi(m as i32);
        tail += term;
        if !tail.is_finite() {
            return f64::INFINITY;
        }
        if m > m0 + 8 && term <= 1e-3 * tail.max(f64::MIN_POSITIVE) || m > m0 + 4000 {
            // remaining terms decay at least geometrically from here
            return tail * 1.01;
        }
        m += 1;
    }
}

/// Gauge series to the constant part, with order chosen adaptively so that the
/// majorant tail at the validated radius is below `ctx.tol`.
pub fn gauge_series(a: &RatMat, ctx: &QContext, order_cap: usize) -> Result<GaugeSeries> {
    let radius = validated_radius(&singular_points(a)?);
    gauge_series_with_radius(a, ctx, order_cap, radius)
}

fn gauge_series_with_radius(a: &RatMat, ctx: &QContext, order_cap: usize, radius: f64) -> Result<GaugeSeries> {
    let a0 = constant_part(a)?;
    let n = a.dim();
    let rho = 1.5 * radius;
    let mut taylor = a.taylor(16)?;
    let mut coeffs = vec![CMatrix::identity(n, n)];
    let mut norms = vec![(n as f64).sqrt()];
    let mut m = 1;
    loop {
        if m >= taylor.len() {
            taylor = a.taylor(2 * taylor.len())?;
        }
        let mut rhs = CMatrix::zeros(n, n);
        for i in 1..=m {
            rhs += &taylor[i] * &coeffs[m - i];
        }
        let fm = cmatrix::sylvester_solve(&a0, ctx.q.powi(m as i32), &rhs).map_err(|e| match e {
            QError::SingularOperator => QError::Resonant(format!("q^{m} relates two exponents")),
            other => other,
        })?;
        norms.push(fm.norm());
        coeffs.push(fm);
        let partial: f64 = norms.iter().enumerate().map(|(k, x)| x * radius.powi(k as i32)).sum();
        let small = norms[m] * radius.powi(m as i32) <= ctx.tol * partial;
        if m >= 4 && small && (m % 4 == 0 || m == order_cap) {
            let tail = majorant_tail(a, ctx, &a0, &norms, radius, rho);
            if tail <= ctx.tol * partial {
                return Ok(GaugeSeries { coeffs, radius, tail_bound: tail });
            }
        }
        if m >= order_cap {
            return Err(QError::OrderCapExceeded(order_cap));
        }
        m += 1;
    }
}

/// Which side of the sphere a solution is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Base {
    Zero,
    Infinity,
}

/// One diagonal block of a log-car matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogCarBlockSpec {
    pub c: Complex64,
    pub m: usize,
    /// Use `(ξ′_{1,η/c,m})^{l_q}` instead of `ξ_{1,m}^{l_q}`.
    pub renormalized: bool,
}

fn car_block(ctx: &QContext, spec: &LogCarBlockSpec, l: Option<Complex64>, z: Complex64) -> Result<CMatrix> {
    let e = if spec.c == ONE { ONE } else { character(ctx, spec.c, z)? };
    let step = if spec.renormalized { ctx.eta / spec.c } else { ONE };
    let mut b = CMatrix::zeros(spec.m, spec.m);
    for i in 0..spec.m {
        for j in i..spec.m {
            let k = j - i;
            b[(i, j)] = if k == 0 { e } else { e * binomial(l.expect("log needed"), k) * step.powi(k as i32) };
        }
    }
    Ok(b)
}

/// Block diagonal of `e_{q,c}(z)·L_m(z)` (or the renormalized `L′_{c,m}`).
pub fn log_car_matrix(ctx: &QContext, blocks: &[LogCarBlockSpec], z: Complex64) -> Result<CMatrix> {
    if blocks.iter().any(|b| b.m == 0 || b.c == ZERO) {
        return Err(QError::InvalidParameter("log-car blocks need m ≥ 1 and c ≠ 0".into()));
    }
    let l = if blocks.iter().any(|b| b.m > 1) { Some(qlog(ctx, z)?) } else { None };
    let mats = blocks.iter().map(|b| car_block(ctx, b, l, z)).collect::<Result<Vec<_>>>()?;
    Ok(cmatrix::block_diagonal(&mats))
}

/// The constant `K₀` with `N(qz) = K₀·N(z)`: blocks `c·ξ_{1,m}` or `c·ξ′_{1,η/c,m}`.
pub fn log_car_constant(ctx: &QContext, blocks: &[LogCarBlockSpec]) -> CMatrix {
    let mats: Vec<CMatrix> = blocks
        .iter()
        .map(|b| {
            let mu = if b.renormalized { ctx.eta } else { b.c };
            cmatrix::jordan_block(b.c, mu, b.m)
        })
        .collect();
    cmatrix::block_diagonal(&mats)
}

/// How the constant part `e_{q,A₀}` is realised inside the disk.
#[derive(Debug, Clone)]
enum Frame {
    /// `F·e_{q,A₀}` with the multiplicative Dunford decomposition of `A₀`.
    Dunford(MatrixCharacter),
    /// `Q₀·H·N` with `Q₀⁻¹A₀Q₀` in `c·ξ_{1,m}` form and `N` the log-car matrix.
    Jordan { q0: CMatrix, blocks: Vec<LogCarBlockSpec> },
}

/// Construction choices for a canonical solution.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Characters are evaluated at `z/ω` (at 0) or `w·ω` (at ∞).
    pub omega: Complex64,
    pub order_cap: usize,
    /// Build `Q₀·H·L·C` instead of `F·e_{q,A₀}`.
    pub jordan_frame: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { omega: ONE, order_cap: DEFAULT_ORDER_CAP, jordan_frame: false }
    }
}

/// A canonical fundamental solution, evaluable anywhere off its singular spirals.
#[derive(Debug, Clone)]
pub struct LocalSolution {
    pub base: Base,
    /// The system in the local variable (`A` at 0, `Ā` at ∞).
    pub system: RatMat,
    /// The system in `z`.
    pub original: RatMat,
    pub shearing: Shearing,
    pub gauge: GaugeSeries,
    /// Constant part of the prepared system.
    pub a0: CMatrix,
    /// Exponents of `a0` and the integers `n` with `c = c̄·q^n`, `1 ≤ |c̄| < |q|`.
    pub exponents: Vec<Complex64>,
    pub exponent_shift: Vec<i64>,
    /// Character base point in the local variable.
    pub omega: Complex64,
    pub ctx: QContext,
    pub warnings: Vec<String>,
    singular: Vec<Complex64>,
    frame: Frame,
}

fn normalize_exponents(ctx: &QContext, exps: &[Complex64]) -> Vec<i64> {
    exps.iter().map(|c| (c.norm().ln() / ctx.log_abs_q() + 1e-12).floor() as i64).collect()
}

fn build(system: RatMat, original: RatMat, base: Base, ctx: &QContext, opts: &SolveOptions) -> Result<LocalSolution> {
    constant_part(&system)?;
    let shearing = shear_prepare(&system, ctx)?;
    let singular = singular_points(&system)?;
    let radius = validated_radius(&singular_points(&shearing.prepared)?).min(validated_radius(&singular));
    let a0 = constant_part(&shearing.prepared)?;
    let report = resonance_classes(&a0, ctx);
    let mut warnings = Vec::new();
    if report.near_resonant {
        warnings.push("exponents are within 1e-4 of a q-power resonance; Sylvester solves are ill-conditioned".to_string());
    }
    let (gauge, frame) = if opts.jordan_frame {
        let jd = cmatrix::jordanize(&a0, cmatrix::CLUSTER_TOL)?;
        let q0 = jd.scaled_basis();
        let k = shearing.prepared.conjugate_const(&cmatrix::inverse(&q0)?, &q0);
        let blocks = jd.blocks.iter().map(|b| LogCarBlockSpec { c: b.lambda, m: b.size, renormalized: false }).collect();
        (gauge_series_with_radius(&k, ctx, opts.order_cap, radius)?, Frame::Jordan { q0, blocks })
    } else {
        (gauge_series_with_radius(&shearing.prepared, ctx, opts.order_cap, radius)?, Frame::Dunford(MatrixCharacter::new(&a0)?))
    };
    let exponent_shift = normalize_exponents(ctx, &report.exponents);
    Ok(LocalSolution {
        base,
        system,
        original,
        shearing,
        gauge,
        a0,
        exponents: report.exponents,
        exponent_shift,
        omega: opts.omega,
        ctx: ctx.clone(),
        warnings,
        singular,
        frame,
    })
}

pub fn canonical_solution_zero(a: &RatMat, ctx: &QContext) -> Result<LocalSolution> {
    canonical_solution_zero_with(a, ctx, &SolveOptions::default())
}

pub fn canonical_solution_zero_with(a: &RatMat, ctx: &QContext, opts: &SolveOptions) -> Result<LocalSolution> {
    build(a.clone(), a.clone(), Base::Zero, ctx, opts)
}

pub fn canonical_solution_infinity(a: &RatMat, ctx: &QContext) -> Result<LocalSolution> {
    canonical_solution_infinity_with(a, ctx, &SolveOptions::default())
}

/// `opts.omega` is the base point in `z`; the characters are taken at `w·ω`.
pub fn canonical_solution_infinity_with(a: &RatMat, ctx: &QContext, opts: &SolveOptions) -> Result<LocalSolution> {
    let abar = infinity_transform(a, ctx.q)?;
    if abar.eval(ZERO).is_err() {
        return Err(QError::NotFuchsian("infinity"));
    }
    let local = SolveOptions { omega: 1.0 / opts.omega, ..opts.clone() };
    build(abar, a.clone(), Base::Infinity, ctx, &local).map_err(|e| match e {
        QError::NotFuchsian(_) => QError::NotFuchsian("infinity"),
        other => other,
    })
}

impl LocalSolution {
    pub fn radius(&self) -> f64 {
        self.gauge.radius
    }

    /// Points of `S(A) ∪ poles(A)` in the local variable.
    pub fn singular_points(&self) -> &[Complex64] {
        &self.singular
    }

    fn near_singular(&self, u: Complex64) -> bool {
        self.singular.iter().any(|s| (u - s).norm() <= self.ctx.guard * s.norm())
    }

    fn disk_value(&self, u: Complex64) -> Result<CMatrix> {
        let g = self.shearing.gauge.eval(u)?;
        let f = self.gauge.eval(u);
        let arg = u / self.omega;
        let spiral = |e: QError| match e {
            QError::NearPole { .. } | QError::OnCut { .. } => QError::NearSingularSpiral { z: u },
            other => other,
        };
        let core = match &self.frame {
            Frame::Dunford(ch) => f * ch.eval(&self.ctx, arg).map_err(spiral)?,
            Frame::Jordan { q0, blocks } => q0 * f * log_car_matrix(&self.ctx, blocks, arg).map_err(spiral)?,
        };
        Ok(g * core)
    }

    /// Value in the local variable (`z` at 0, `w = 1/z` at ∞).
    pub fn eval_local(&self, u: Complex64) -> Result<CMatrix> {
        if u == ZERO {
            return Err(QError::InvalidParameter("canonical solutions are not evaluated at the base point".into()));
        }
        let r = self.radius();
        let steps = if u.norm() <= r { 0 } else { ((u.norm() / r).ln() / self.ctx.log_abs_q()).ceil() as i32 };
        let mut points = Vec::with_capacity(steps as usize);
        let mut v = u;
        for _ in 0..steps {
            v /= self.ctx.q;
            if self.near_singular(v) {
                return Err(QError::NearSingularSpiral { z: u });
            }
            points.push(v);
        }
        let mut x = self.disk_value(v)?;
        for p in points.iter().rev() {
            x = self.system.eval(*p).map_err(|_| QError::NearSingularSpiral { z: u })? * x;
        }
        Ok(x)
    }

    /// Value at `z`.
    pub fn eval(&self, z: Complex64) -> Result<CMatrix> {
        match self.base {
            Base::Zero => self.eval_local(z),
            Base::Infinity => self.eval_local(1.0 / z),
        }
    }

    /// `‖X(qz) − A(z)·X(z)‖ / ‖X(z)‖`.
    pub fn residual(&self, z: Complex64) -> Result<f64> {
        let x = self.eval(z)?;
        let xq = self.eval(self.ctx.q * z)?;
        let a = self.original.eval(z)?;
        Ok((xq - a * &x).norm() / x.norm())
    }

    /// The constant `K₀` of the Jordan frame, if that frame was built.
    pub fn jordan_constant(&self) -> Option<(CMatrix, CMatrix)> {
        match &self.frame {
            Frame::Jordan { q0, blocks } => Some((q0.clone(), log_car_constant(&self.ctx, blocks))),
            Frame::Dunford(_) => None,
        }
    }
}

/// `Π_{i=1..R} A(q^{-i}z)` for a system with `A(0) = I`.
pub fn regular_product_solution(a: &RatMat, ctx: &QContext, z: Complex64) -> Result<CMatrix> {
    let n = a.dim();
    let id = CMatrix::identity(n, n);
    let a0 = a.eval(ZERO).map_err(|_| QError::NotRegular)?;
    if (&a0 - &id).norm() > 1e-12 * (n as f64).sqrt() {
        return Err(QError::NotRegular);
    }
    let mut x = id.clone();
    let mut v = z;
    for _ in 0..MAX_PRODUCT_FACTORS {
        v /= ctx.q;
        let f = a.eval(v).map_err(|_| QError::NearSingularSpiral { z })?;
        let done = (&f - &id).norm() < 0.1 * ctx.tol;
        x *= f;
        if done {
            return Ok(x);
        }
    }
    Err(QError::MaxIterations(MAX_PRODUCT_FACTORS))
}

pub type CVector = nalgebra::DVector<Complex64>;

/// Power-series solution of `X(qz) = A(z)X(z) − Y(z)` with prescribed `X(0)`.
pub fn solve_ivp_vector(a: &RatMat, y: &[CVector], x0: &CVector, ctx: &QContext, order: usize) -> Result<Vec<CVector>> {
    let n = a.dim();
    let taylor = a.taylor(order + 1)?;
    let a0 = &taylor[0];
    let y_at = |m: usize| y.get(m).cloned().unwrap_or_else(|| CVector::zeros(n));
    let lhs = x0 - (a0 * x0 - y_at(0));
    if lhs.norm() > 1e-10 * (x0.norm() + y_at(0).norm()).max(1.0) {
        return Err(QError::InconsistentInitialValue);
    }
    let mut xs = vec![x0.clone()];
    let id = CMatrix::identity(n, n);
    for m in 1..=order {
        let qm = ctx.q.powi(m as i32);
        let op = &id * qm - a0;
        let sv = op.clone().singular_values();
        if sv.min() <= RESONANCE_TOL * sv.max().max(qm.norm()) {
            return Err(QError::Resonant(format!("q^{m} is an eigenvalue of A(0)")));
        }
        let mut rhs = -y_at(m);
        for i in 1..=m {
            rhs += &taylor[i] * &xs[m - i];
        }
        let xm = op.lu().solve(&rhs).ok_or_else(|| QError::Resonant(format!("q^{m} is an eigenvalue of A(0)")))?;
        xs.push(xm);
    }
    Ok(xs)
}
