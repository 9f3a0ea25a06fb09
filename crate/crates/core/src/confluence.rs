//! Confluence `q → 1` along the spiral `q₀^ε`, sector geometry and monodromy extraction.
//!
//! The sphere minus the spirals `z̃ᵢ·q₀^R` splits into sectors on which the connection
//! matrix `P_ε` converges to a constant `P̃ᵢ`. Monodromies are read off as
//! `Mⱼ = P̃ⱼ⁻¹·P̃ⱼ₋₁`; an independent ODE integrator cross-checks them.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::cmatrix::{self, CMatrix, JordanData};
use crate::connect::{connection_matrix_with, ConnectionEvaluator, SAMPLE_MARGIN};
use crate::error::{QError, Result};
use crate::localsolve::SolveOptions;
use crate::qcalc::{self, Determination, QContext};
use crate::ratfun::{deformation_matrix, QRatMat, RatMat};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Minimal separation of two spiral coordinates.
pub const CHI_SEP: f64 = 1e-6;
/// Ladder of the monodromy pipeline.
pub const DEFAULT_LADDER: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];
/// Ladder of the scalar limit battery.
pub const LIMIT_LADDER: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
/// Largest extrapolation error accepted by [`monodromy_from_limits`].
pub const MONO_TOL: f64 = 1e-3;
/// Local error target of the ODE integrator (per unit parameter length).
pub const ODE_TOL: f64 = 1e-12;
/// Number of points used to average `P_ε` over one `q`-period.
pub const PERIOD_SAMPLES: usize = 12;
/// Relocation attempts for a sample too close to a pole spiral.
pub const MAX_RELOCATIONS: usize = 5;

/// Coordinates `(s, y)` with `z = exp(2πi(s + y·τ₀))`, `s ∈ [0, 1)`.
pub fn spiral_coordinates(tau0: Complex64, z: Complex64) -> (f64, f64) {
    let w = z.ln() / (2.0 * PI * I);
    let y = w.im / tau0.im;
    let s = (w.re - y * tau0.re).rem_euclid(1.0);
    (if s >= 1.0 { 0.0 } else { s }, y)
}

/// The spiral coordinate `s ∈ [0, 1)`: `z` lies on `c·q₀^R` iff both share it.
pub fn spiral_coordinate(tau0: Complex64, z: Complex64) -> f64 {
    spiral_coordinates(tau0, z).0
}

/// `exp(2πi(s + y·τ₀))`.
pub fn spiral_point(tau0: Complex64, s: f64, y: f64) -> Complex64 {
    (2.0 * PI * I * (s + y * tau0)).exp()
}

/// The `y` coordinate of the circle `|z| = r`.
pub fn spiral_level(tau0: Complex64, r: f64) -> f64 {
    -r.ln() / (2.0 * PI * tau0.im)
}

/// Sector geometry. `singularities[0]` is the base spiral point `ω` (1 unless it collides with
/// a singular spiral); `chi` are coordinates relative to `ω`, ascending, with `chi[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpiralConfig {
    pub tau0: Complex64,
    pub omega: Complex64,
    pub singularities: Vec<Complex64>,
    pub chi: Vec<f64>,
}

impl SpiralConfig {
    /// Sector `Ũᵢ` lies between spirals `i` and `i + 1` (cyclically).
    pub fn sector_count(&self) -> usize {
        self.chi.len()
    }

    pub fn sector_bounds(&self, i: usize) -> (f64, f64) {
        let lo = self.chi[i];
        let hi = self.chi.get(i + 1).copied().unwrap_or(1.0);
        (lo, hi)
    }

    /// Coordinate relative to `ω`.
    pub fn relative_chi(&self, z: Complex64) -> f64 {
        spiral_coordinate(self.tau0, z / self.omega)
    }

    pub fn sector_of(&self, z: Complex64) -> usize {
        let x = self.relative_chi(z);
        self.chi.iter().rposition(|&c| c <= x).unwrap_or(0)
    }

    /// The point of relative coordinate `chi` on the circle `|z| = r`.
    pub fn point(&self, chi: f64, r: f64) -> Complex64 {
        let y = spiral_level(self.tau0, r / self.omega.norm());
        self.omega * spiral_point(self.tau0, chi, y)
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        let (lo, hi) = self.sector_bounds(i);
        0.5 * (lo + hi)
    }
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Orders the singular spirals around the base spiral through `ω`.
///
/// `ω = 1` unless a singularity shares the spiral of 1; then `ω` is moved to the middle of the
/// widest gap between singular spirals, so the base cut and the singular cut stay distinct.
pub fn sector_decompose(tau0: Complex64, singularities: &[Complex64]) -> Result<SpiralConfig> {
    let mut chis: Vec<f64> = singularities.iter().map(|&z| spiral_coordinate(tau0, z)).collect();
    chis.sort_by(f64::total_cmp);
    let omega = if chis.iter().any(|&c| circular_distance(c, 0.0) < CHI_SEP) {
        let mut best = (0.0, 0.0);
        for (k, &c) in chis.iter().enumerate() {
            let next = if k + 1 < chis.len() { chis[k + 1] } else { chis[0] + 1.0 };
            if next - c > best.0 {
                best = (next - c, c + 0.5 * (next - c));
            }
        }
        spiral_point(tau0, best.1, 0.0)
    } else {
        ONE
    };
    sector_decompose_with_omega(tau0, singularities, omega)
}

/// As [`sector_decompose`] with an explicit base point.
pub fn sector_decompose_with_omega(tau0: Complex64, singularities: &[Complex64], omega: Complex64) -> Result<SpiralConfig> {
    if singularities.iter().any(|z| z.norm() == 0.0 || !z.norm().is_finite()) || omega.norm() == 0.0 {
        return Err(QError::InvalidParameter("singularities must lie in C*".into()));
    }
    let mut pts: Vec<(f64, Complex64)> = singularities
        .iter()
        .map(|&z| (spiral_coordinate(tau0, z / omega), z))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut chi = vec![0.0];
    let mut sing = vec![omega];
    for (c, z) in pts {
        if let Some(k) = chi.iter().position(|&x| circular_distance(x, c) < CHI_SEP) {
            return Err(QError::SpiralCollision(format!(
                "{} and {} lie on the same q₀-spiral; choose another tau0",
                sing[k], z
            )));
        }
        chi.push(c);
        sing.push(z);
    }
    Ok(SpiralConfig { tau0, omega, singularities: sing, chi })
}

/// How `A_ε` is obtained from the limit system `δX = B̃X`.
#[derive(Debug, Clone)]
pub enum Family {
    /// `A = I + (q − 1)·B̃`.
    Linear(RatMat),
    /// An explicit `q`-dependent family whose limit is `limit`.
    Direct { family: QRatMat, limit: RatMat },
}

impl Family {
    pub fn limit(&self) -> &RatMat {
        match self {
            Family::Linear(b) => b,
            Family::Direct { limit, .. } => limit,
        }
    }

    pub fn instantiate(&self, ctx: &QContext) -> Result<RatMat> {
        match self {
            Family::Linear(b) => Ok(deformation_matrix(b, ctx)),
            Family::Direct { family, .. } => family.instantiate(ctx),
        }
    }

    /// Finite singularities of the limit system: the poles of `B̃`.
    pub fn singularities(&self) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = Vec::new();
        for p in self.limit().poles() {
            if p.norm() > 1e-12 && !out.iter().any(|q| (q - p).norm() <= 1e-9 * p.norm()) {
                out.push(p);
            }
        }
        out
    }
}

/// Tuning of [`connection_limits`].
#[derive(Debug, Clone)]
pub struct ConfluenceOptions {
    /// Base point of the characters; chosen by [`sector_decompose`] when `None`.
    pub omega: Option<Complex64>,
    /// Modulus of the sample circle.
    pub radius: f64,
}

impl Default for ConfluenceOptions {
    fn default() -> Self {
        ConfluenceOptions { omega: None, radius: 1.0 }
    }
}

/// Connection matrices along the `ε` ladder, one sample per sector.
#[derive(Debug, Clone)]
pub struct ConfluenceLadder {
    pub config: SpiralConfig,
    pub epsilons: Vec<f64>,
    pub samples: Vec<Complex64>,
    /// `values[k][i]`: `P_ε` at rung `k`, sector `i`, averaged over one `q`-period.
    pub values: Vec<Vec<CMatrix>>,
    pub extrapolated: Vec<CMatrix>,
    pub error_estimates: Vec<f64>,
    pub limit: RatMat,
}

/// Polynomial extrapolation of `(xᵢ, yᵢ)` to `x = 0` (Neville).
pub fn neville_at_zero(xs: &[f64], ys: &[CMatrix]) -> CMatrix {
    let mut p: Vec<CMatrix> = ys.to_vec();
    let n = xs.len();
    for m in 1..n {
        for i in 0..n - m {
            let (xi, xj) = (xs[i], xs[i + m]);
            p[i] = (&p[i] * Complex64::from(-xj) + &p[i + 1] * Complex64::from(xi)) * Complex64::from(1.0 / (xi - xj));
        }
    }
    p.swap_remove(0)
}

/// The constant term of the elliptic `P_ε` on the strip through `z`: mean over one period `z ↦ qz`.
pub fn period_average(p: &ConnectionEvaluator, z: Complex64) -> Result<CMatrix> {
    let n = p.sol0.a0.nrows();
    let mut acc = CMatrix::zeros(n, n);
    for k in 0..PERIOD_SAMPLES {
        let t = k as f64 / PERIOD_SAMPLES as f64;
        acc += p.eval(z * p.ctx.qpow_real(t))?;
    }
    Ok(acc * Complex64::from(1.0 / PERIOD_SAMPLES as f64))
}

fn clear_for_all(evals: &[ConnectionEvaluator], z: Complex64) -> bool {
    evals.iter().all(|p| {
        (0..PERIOD_SAMPLES).all(|k| p.clearance(z * p.ctx.qpow_real(k as f64 / PERIOD_SAMPLES as f64)) >= SAMPLE_MARGIN)
    })
}

/// Builds `A_ε` along the ladder and extrapolates the per-sector connection matrices to `ε = 0`.
pub fn connection_limits(family: &Family, tau0: Complex64, epsilons: &[f64], opts: &ConfluenceOptions) -> Result<ConfluenceLadder> {
    if epsilons.is_empty() || epsilons.windows(2).any(|w| w[1] >= w[0]) || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(QError::InvalidParameter("epsilons must be positive and strictly descending".into()));
    }
    let sings = family.singularities();
    let config = match opts.omega {
        Some(w) => sector_decompose_with_omega(tau0, &sings, w)?,
        None => sector_decompose(tau0, &sings)?,
    };
    let solve = SolveOptions { omega: config.omega, ..SolveOptions::default() };
    let evals = epsilons
        .iter()
        .map(|&e| {
            let ctx = QContext::new(tau0, e)?;
            connection_matrix_with(&family.instantiate(&ctx)?, &ctx, &solve)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut samples = Vec::with_capacity(config.sector_count());
    for i in 0..config.sector_count() {
        let chi = config.midpoint(i);
        let mut found = None;
        for k in 0..=MAX_RELOCATIONS {
            // Alternate the modulus around the requested radius.
            let shift = k.div_ceil(2) as f64 * if k % 2 == 1 { 1.0 } else { -1.0 };
            let z = config.point(chi, opts.radius * (0.15 * shift).exp());
            if clear_for_all(&evals, z) {
                found = Some(z);
                break;
            }
        }
        samples.push(found.ok_or(QError::NearSingularSpiral { z: config.point(chi, opts.radius) })?);
    }

    let values = evals
        .iter()
        .map(|p| samples.iter().map(|&z| period_average(p, z)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut extrapolated = Vec::with_capacity(samples.len());
    let mut error_estimates = Vec::with_capacity(samples.len());
    for i in 0..samples.len() {
        let ys: Vec<CMatrix> = values.iter().map(|v| v[i].clone()).collect();
        let full = neville_at_zero(epsilons, &ys);
        let err = if epsilons.len() > 1 {
            let coarse = neville_at_zero(&epsilons[1..], &ys[1..]);
            (&full - &coarse).norm() / full.norm().max(1.0)
        } else {
            f64::INFINITY
        };
        extrapolated.push(full);
        error_estimates.push(err);
    }
    Ok(ConfluenceLadder {
        config,
        epsilons: epsilons.to_vec(),
        samples,
        values,
        extrapolated,
        error_estimates,
        limit: family.limit().clone(),
    })
}

/// Monodromies of `δX = B̃X` in the basis `X̃^(0) = F̃(z)·(−z/ω)^{B̃(0)}`.
#[derive(Debug, Clone)]
pub struct MonodromyReport {
    pub sectors: SpiralConfig,
    pub limits: Vec<CMatrix>,
    /// `(z̃ⱼ, Mⱼ)` for `j = 1..r`.
    pub monodromies: Vec<(Complex64, CMatrix)>,
    pub jordan0: Option<JordanData>,
    pub jordan_inf: Option<JordanData>,
    pub error_estimates: Vec<f64>,
    pub warnings: Vec<String>,
}

/// `B̃(∞)`.
pub fn value_at_infinity(b: &RatMat) -> Result<CMatrix> {
    b.reciprocal_subs(ONE).eval(ZERO)
}

pub fn monodromy_from_limits(ladder: &ConfluenceLadder) -> Result<MonodromyReport> {
    monodromy_from_limits_with(ladder, MONO_TOL)
}

pub fn monodromy_from_limits_with(ladder: &ConfluenceLadder, mono_tol: f64) -> Result<MonodromyReport> {
    let worst = ladder.error_estimates.iter().copied().fold(0.0, f64::max);
    if !(worst <= mono_tol) {
        return Err(QError::NotConverged { estimate: worst, tol: mono_tol });
    }
    let mut monodromies = Vec::new();
    for j in 1..ladder.extrapolated.len() {
        let inv = cmatrix::inverse(&ladder.extrapolated[j])?;
        monodromies.push((ladder.config.singularities[j], inv * &ladder.extrapolated[j - 1]));
    }
    let mut warnings = Vec::new();
    let jordan = |m: Result<CMatrix>, at: &str, warnings: &mut Vec<String>| match m.and_then(|m| cmatrix::jordanize(&m, cmatrix::CLUSTER_TOL)) {
        Ok(j) => Some(j),
        Err(e) => {
            warnings.push(format!("no Jordan data at {at}: {e}"));
            None
        }
    };
    let jordan0 = jordan(ladder.limit.eval(ZERO), "0", &mut warnings);
    let jordan_inf = jordan(value_at_infinity(&ladder.limit), "infinity", &mut warnings);
    Ok(MonodromyReport {
        sectors: ladder.config.clone(),
        limits: ladder.extrapolated.clone(),
        monodromies,
        jordan0,
        jordan_inf,
        error_estimates: ladder.error_estimates.clone(),
        warnings,
    })
}

/// Integrates `z·X′ = B̃(z)·X` and transports the frame `X̃^(0)`.
#[derive(Debug, Clone)]
pub struct OdeOracle {
    pub btilde: RatMat,
    pub tau0: Complex64,
    pub omega: Complex64,
    b0: CMatrix,
    frobenius: Vec<CMatrix>,
    /// Distance from 0 to the nearest singularity.
    pub radius: f64,
    pub tol: f64,
}

const FROBENIUS_ORDER: usize = 160;

/// Frobenius coefficients of `F̃` with `z·F̃′ = B̃F̃ − F̃B̃(0)`, `F̃(0) = I`.
fn frobenius_series(b: &RatMat, order: usize) -> Result<Vec<CMatrix>> {
    let n = b.dim();
    let taylor = b.taylor(order)?;
    let b0 = &taylor[0];
    let eye = CMatrix::identity(n, n);
    let mut out = vec![eye.clone()];
    for m in 1..order {
        let mut rhs = CMatrix::zeros(n, n);
        for i in 1..=m {
            rhs += &taylor[i] * &out[m - i];
        }
        // vec(mF + F·B₀ − B₀·F) = (m·I + B₀ᵀ⊗I − I⊗B₀)·vec F
        let op = CMatrix::identity(n * n, n * n) * Complex64::from(m as f64) + b0.transpose().kronecker(&eye) - eye.kronecker(b0);
        let v = CMatrix::from_column_slice(n * n, 1, rhs.as_slice());
        let sol = op.lu().solve(&v).ok_or_else(|| QError::Resonant(format!("B̃(0) has exponents differing by {m}")))?;
        out.push(CMatrix::from_column_slice(n, n, sol.as_slice()));
    }
    Ok(out)
}

impl OdeOracle {
    pub fn new(btilde: &RatMat, tau0: Complex64, omega: Complex64) -> Result<Self> {
        let b0 = btilde.eval(ZERO).map_err(|_| QError::NotFuchsian("zero"))?;
        let radius = btilde.poles().iter().map(|p| p.norm()).fold(f64::INFINITY, f64::min);
        let frobenius = frobenius_series(btilde, FROBENIUS_ORDER)?;
        Ok(OdeOracle { btilde: btilde.clone(), tau0, omega, b0, frobenius, radius, tol: ODE_TOL })
    }

    fn series_radius(&self) -> f64 {
        if self.radius.is_finite() { 0.25 * self.radius } else { 0.5 }
    }

    /// `X̃^(0)(z)` from the Frobenius series; requires `|z| ≤ radius/4`.
    fn frame_near_zero(&self, z: Complex64) -> Result<CMatrix> {
        let n = self.b0.nrows();
        let mut f = CMatrix::zeros(n, n);
        let mut zk = ONE;
        for c in &self.frobenius {
            f += c * zk;
            zk *= z;
        }
        Ok(f * cmatrix::matrix_neg_power(self.tau0, &self.b0, z / self.omega)?)
    }

    /// `X̃^(0)(a)`: series near 0, then transport along the spiral through `a`.
    pub fn frame_at(&self, a: Complex64) -> Result<CMatrix> {
        let r = self.series_radius();
        if a.norm() <= r {
            return self.frame_near_zero(a);
        }
        let (s, y) = spiral_coordinates(self.tau0, a / self.omega);
        let ys = spiral_level(self.tau0, r / self.omega.norm());
        let start = self.omega * spiral_point(self.tau0, s, ys);
        let steps = 256;
        let path: Vec<Complex64> = (0..=steps)
            .map(|k| {
                let t = k as f64 / steps as f64;
                self.omega * spiral_point(self.tau0, s, ys + t * (y - ys))
            })
            .collect();
        let x = self.frame_near_zero(start)?;
        self.transport(x, &path)
    }

    /// Continues `X` along the polyline (first point is the start).
    pub fn transport(&self, mut x: CMatrix, path: &[Complex64]) -> Result<CMatrix> {
        for w in path.windows(2) {
            x = self.segment(x, w[0], w[1])?;
        }
        Ok(x)
    }

    fn rhs(&self, za: Complex64, dz: Complex64, s: f64, x: &CMatrix) -> Result<CMatrix> {
        let z = za + dz * s;
        let b = self.btilde.eval(z).map_err(|_| QError::StepFailure { z })?;
        Ok(b * x * (dz / z))
    }

    fn rk4(&self, za: Complex64, dz: Complex64, s: f64, h: f64, x: &CMatrix) -> Result<CMatrix> {
        let c = |v: f64| Complex64::from(v);
        let k1 = self.rhs(za, dz, s, x)?;
        let k2 = self.rhs(za, dz, s + 0.5 * h, &(x + &k1 * c(0.5 * h)))?;
        let k3 = self.rhs(za, dz, s + 0.5 * h, &(x + &k2 * c(0.5 * h)))?;
        let k4 = self.rhs(za, dz, s + h, &(x + &k3 * c(h)))?;
        Ok(x + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0))
    }

    /// Adaptive RK4 with step doubling on the straight segment `za → zb`.
    fn segment(&self, mut x: CMatrix, za: Complex64, zb: Complex64) -> Result<CMatrix> {
        let dz = zb - za;
        let mut s = 0.0;
        let mut h: f64 = 0.25;
        while s < 1.0 {
            h = h.min(1.0 - s);
            let full = self.rk4(za, dz, s, h, &x)?;
            let half = self.rk4(za, dz, s, 0.5 * h, &x)?;
            let two = self.rk4(za, dz, s + 0.5 * h, 0.5 * h, &half)?;
            let err = (&two - &full).norm() / (15.0 * two.norm().max(1.0));
            if err <= self.tol * h.max(1e-3) {
                x = &two + (&two - &full) * Complex64::from(1.0 / 15.0);
                s += h;
                let grow = if err == 0.0 { 2.0 } else { (0.9 * (self.tol * h / err).powf(0.2)).min(2.0) };
                h *= grow.max(1.0);
            } else {
                h *= (0.9 * (self.tol * h / err).powf(0.25)).clamp(0.1, 0.5);
                if h < 1e-10 {
                    return Err(QError::StepFailure { z: za + dz * s });
                }
            }
        }
        Ok(x)
    }

    /// `M` with `X̃_after = X̃_before·M` for the closed loop `basepoint → loop → basepoint`.
    pub fn monodromy(&self, basepoint: Complex64, path: &[Complex64]) -> Result<CMatrix> {
        let before = self.frame_at(basepoint)?;
        let mut full = Vec::with_capacity(path.len() + 2);
        full.push(basepoint);
        full.extend_from_slice(path);
        full.push(basepoint);
        let after = self.transport(before.clone(), &full)?;
        Ok(cmatrix::inverse(&before)? * after)
    }
}

/// One-shot oracle: monodromy of `X̃^(0)` along a loop based at `basepoint`.
pub fn ode_monodromy_oracle(btilde: &RatMat, tau0: Complex64, omega: Complex64, basepoint: Complex64, path: &[Complex64]) -> Result<CMatrix> {
    OdeOracle::new(btilde, tau0, omega)?.monodromy(basepoint, path)
}

/// Points along `y = const` from relative coordinate `s0` to `s1`.
fn level_arc(config: &SpiralConfig, y: f64, s0: f64, s1: f64, per_turn: usize) -> Vec<Complex64> {
    let k = (((s1 - s0).abs() * per_turn as f64).ceil() as usize).max(2);
    (0..=k)
        .map(|i| config.omega * spiral_point(config.tau0, s0 + (s1 - s0) * i as f64 / k as f64, y))
        .collect()
}

/// Points along `s = const` from level `y0` to `y1`.
fn spiral_arc(config: &SpiralConfig, s: f64, y0: f64, y1: f64, count: usize) -> Vec<Complex64> {
    (0..=count)
        .map(|i| config.omega * spiral_point(config.tau0, s, y0 + (y1 - y0) * i as f64 / count as f64))
        .collect()
}

fn circle(center: Complex64, start: Complex64, clockwise: bool, count: usize) -> Vec<Complex64> {
    let d = start - center;
    let sign = if clockwise { -1.0 } else { 1.0 };
    (0..=count).map(|i| center + d * Complex64::from_polar(1.0, sign * TAU * i as f64 / count as f64)).collect()
}

/// Radius of the small circle drawn around `config.singularities[j]`.
fn loop_radius(config: &SpiralConfig, j: usize) -> f64 {
    let z = config.singularities[j];
    config.singularities[1..]
        .iter()
        .filter(|&&w| w != z)
        .map(|w| (w - z).norm())
        .fold(z.norm(), f64::min)
        * 0.4
}

/// Loop around `z̃ⱼ` based in `Ũⱼ₋₁`: along `|z| = |z̃ⱼ|` towards `z̃ⱼ`, one positive turn
/// around it, and back. Returns `(basepoint, interior polyline)`.
pub fn sector_loop(config: &SpiralConfig, j: usize) -> (Complex64, Vec<Complex64>) {
    let z = config.singularities[j];
    let (_, y) = spiral_coordinates(config.tau0, z / config.omega);
    let sj = config.chi[j];
    let rho = loop_radius(config, j);
    let delta = (rho / (2.0 * z.norm())).asin() / PI;
    let s_start = config.midpoint(j - 1);
    let mut path = level_arc(config, y, s_start, sj - delta, 512);
    let base = path.remove(0);
    let near = *path.last().unwrap();
    let mut ring = circle(z, near, false, 512);
    ring.remove(0);
    path.extend(ring);
    let mut back = level_arc(config, y, sj - delta, s_start, 512);
    back.remove(0);
    back.pop();
    path.extend(back);
    (base, path)
}

/// Common-base loops for the global relation: `[γ₁, …, γᵣ, γ₀, γ_∞]` as closed polylines,
/// with the base point in `Ũ₀` at small modulus. Traversed in this order they are null-homotopic.
pub fn global_loops(config: &SpiralConfig) -> (Complex64, Vec<Vec<Complex64>>) {
    let r = config.singularities[1..].iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let big = config.singularities[1..].iter().map(|z| z.norm()).fold(0.0, f64::max);
    let (r_small, r_big) = if r.is_finite() { (0.2 * r, 3.0 * big) } else { (0.5, 2.0) };
    let scale = config.omega.norm();
    let yb = spiral_level(config.tau0, r_small / scale);
    let y_out = spiral_level(config.tau0, r_big / scale);
    let sb = config.midpoint(0);
    let base = config.omega * spiral_point(config.tau0, sb, yb);
    let mut loops = Vec::new();
    for j in 1..config.singularities.len() {
        let z = config.singularities[j];
        let sj = config.chi[j];
        let (_, yj) = spiral_coordinates(config.tau0, z / config.omega);
        let rho = loop_radius(config, j);
        // Stop on the spiral of z̃ⱼ at distance ρ inside it.
        let dy = spiral_level(config.tau0, (z.norm() - rho) / z.norm());
        let mut path = level_arc(config, yb, sb, sj, 512);
        let mut inward = spiral_arc(config, sj, yb, yj + dy, 512);
        inward.remove(0);
        path.extend(inward);
        let near = *path.last().unwrap();
        let mut ring = circle(z, near, false, 512);
        ring.remove(0);
        path.extend(ring);
        let mut out = spiral_arc(config, sj, yj + dy, yb, 512);
        out.remove(0);
        path.extend(out);
        let mut home = level_arc(config, yb, sj, sb, 512);
        home.remove(0);
        path.extend(home);
        loops.push(path);
    }
    loops.push(level_arc(config, yb, sb, sb + 1.0, 1024));
    let mut inf = spiral_arc(config, sb, yb, y_out, 512);
    let mut round = level_arc(config, y_out, sb, sb - 1.0, 1024);
    round.remove(0);
    inf.extend(round);
    let mut back = spiral_arc(config, sb, y_out, yb, 512);
    back.remove(0);
    inf.extend(back);
    loops.push(inf);
    (base, loops)
}

/// Oracle monodromies along [`global_loops`] and `‖M_∞·M₀·Mᵣ⋯M₁ − I‖`.
pub fn oracle_global_relation(oracle: &OdeOracle, config: &SpiralConfig) -> Result<(Vec<CMatrix>, f64)> {
    let (base, loops) = global_loops(config);
    let before = oracle.frame_at(base)?;
    let inv = cmatrix::inverse(&before)?;
    let mut ms = Vec::with_capacity(loops.len());
    for l in &loops {
        let after = oracle.transport(before.clone(), l)?;
        ms.push(&inv * after);
    }
    let n = before.nrows();
    let mut prod = CMatrix::identity(n, n);
    for m in &ms {
        prod = m * prod;
    }
    let residual = (prod - CMatrix::identity(n, n)).norm();
    Ok((ms, residual))
}

/// Oracle monodromy around `z̃ⱼ` with the geometry of [`sector_loop`].
pub fn oracle_sector_monodromy(oracle: &OdeOracle, config: &SpiralConfig, j: usize) -> Result<CMatrix> {
    let (base, path) = sector_loop(config, j);
    oracle.monodromy(base, &path)
}

/// The scalar limits checked along the ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitKind {
    /// `(q − 1)·l_q(z) → log(−z)`.
    NegLog,
    /// `e_{q,q^γ}(z) → (−z)^γ`.
    Character { gamma: f64 },
    /// `Θ(q^α z)/Θ(q^β z) → (−z)^{α−β}`.
    ThetaRatio { alpha: f64, beta: f64 },
    /// `Θ⁺(q^α z)/Θ⁺(z) → (1 − z)^α`.
    OneMinusPower { alpha: f64 },
    /// `(q − 1)·l⁺_q(z) → log(1 − z)`.
    LogOneMinus,
}

/// The `q`-side value and the classical limit of `kind` at `z`.
pub fn scalar_limit_pair(ctx: &QContext, z: Complex64, kind: LimitKind) -> Result<(Complex64, Complex64)> {
    let tau0 = ctx.tau0;
    let c = |x: f64| Complex64::from(x);
    Ok(match kind {
        LimitKind::NegLog => (ctx.eta * qcalc::qlog(ctx, z)?, qcalc::classical_determinations(tau0, z, Determination::NegLog)?),
        LimitKind::Character { gamma } => (
            qcalc::character(ctx, ctx.qpow_real(gamma), z)?,
            qcalc::classical_determinations(tau0, z, Determination::NegPower(c(gamma)))?,
        ),
        LimitKind::ThetaRatio { alpha, beta } => (
            qcalc::theta(ctx, ctx.qpow_real(alpha) * z)? / qcalc::theta(ctx, ctx.qpow_real(beta) * z)?,
            qcalc::classical_determinations(tau0, z, Determination::NegPower(c(alpha - beta)))?,
        ),
        LimitKind::OneMinusPower { alpha } => (
            qcalc::theta_plus(ctx, ctx.qpow_real(alpha) * z) / qcalc::theta_plus(ctx, z),
            qcalc::classical_determinations(tau0, z, Determination::OneMinusPower(c(alpha)))?,
        ),
        LimitKind::LogOneMinus => (ctx.eta * qcalc::qlog_plus(ctx, z)?, qcalc::classical_determinations(tau0, z, Determination::LogOneMinus)?),
    })
}

/// Relative residual `|f_ε(z) − f(z)| / max(|f(z)|, 1e-300)` along the ladder.
pub fn scalar_limit_residual(tau0: Complex64, epsilons: &[f64], z: Complex64, kind: LimitKind) -> Result<Vec<f64>> {
    epsilons
        .iter()
        .map(|&e| {
            let ctx = QContext::new(tau0, e)?;
            let (approx, limit) = scalar_limit_pair(&ctx, z, kind)?;
            Ok((approx - limit).norm() / limit.norm().max(1e-300))
        })
        .collect()
}
