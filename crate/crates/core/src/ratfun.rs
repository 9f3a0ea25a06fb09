//! Rational functions of `z` over `C`, square matrices of them, and the
//! transforms used to set up a q-difference system: the deformation
//! `A = I + (q−1)·B`, the change of variable `w = 1/(qz)` and the pivot
//! factorization `M = C·R` at the origin.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::cmatrix::{self, CMatrix};
use crate::error::{QError, Result};
use crate::qcalc::QContext;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Coefficients below this fraction of the largest one are dropped.
pub const COEFF_TOL: f64 = 1e-12;
/// Absolute distance under which two roots are merged.
pub const ROOT_TOL: f64 = 1e-8;
/// Relative size of `|den(z)|` under which evaluation is refused.
pub const POLE_GUARD: f64 = 1e-11;
const MAX_PIVOT_STEPS: usize = 64;

/// Polynomial with ascending coefficients; trailing negligible terms are trimmed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    coeffs: Vec<Complex64>,
}

impl Poly {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(a: Complex64) -> Self {
        Poly::new(vec![a])
    }

    /// `a·z^k`.
    pub fn monomial(a: Complex64, k: usize) -> Self {
        let mut v = vec![ZERO; k + 1];
        v[k] = a;
        Poly::new(v)
    }

    fn trim(&mut self) {
        let m = self.max_abs();
        if m == 0.0 || !m.is_finite() {
            if m == 0.0 {
                self.coeffs.clear();
            }
            return;
        }
        while let Some(last) = self.coeffs.last() {
            if last.norm() <= COEFF_TOL * m {
                self.coeffs.pop();
            } else {
                break;
            }
        }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> Complex64 {
        self.coeffs.last().copied().unwrap_or(ZERO)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, &a| acc * z + a)
    }

    /// `Σ |a_k|·|z|^k`, the natural scale for cancellation checks.
    pub fn eval_scale(&self, z: Complex64) -> f64 {
        let r = z.norm();
        self.coeffs.iter().rev().fold(0.0, |acc, a| acc * r + a.norm())
    }

    pub fn derivative(&self) -> Poly {
        Poly::new(self.coeffs.iter().enumerate().skip(1).map(|(k, &a)| a * k as f64).collect())
    }

    pub fn scale(&self, a: Complex64) -> Poly {
        Poly::new(self.coeffs.iter().map(|&x| x * a).collect())
    }

    /// Order of vanishing at 0, with negligible low coefficients counted as zero.
    pub fn valuation(&self) -> usize {
        let m = self.max_abs();
        self.coeffs.iter().take_while(|c| c.norm() <= COEFF_TOL * m).count()
    }

    /// Exact division by `z^k`; the `k` lowest coefficients are discarded.
    pub fn shift_down(&self, k: usize) -> Poly {
        Poly::new(self.coeffs.iter().skip(k).copied().collect())
    }

    pub fn shift_up(&self, k: usize) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut v = vec![ZERO; k];
        v.extend_from_slice(&self.coeffs);
        Poly::new(v)
    }

    /// Quotient by `z − r` (synthetic division, remainder dropped).
    pub fn deflate(&self, r: Complex64) -> Poly {
        let n = self.coeffs.len();
        if n <= 1 {
            return Poly::zero();
        }
        let mut q = vec![ZERO; n - 1];
        let mut acc = ZERO;
        for k in (1..n).rev() {
            acc = acc * r + self.coeffs[k];
            q[k - 1] = acc;
        }
        Poly::new(q)
    }

    /// `P̃` with `p(a/w) = w^{-d}·P̃(w)`, `d = deg p`.
    pub fn reciprocal_subs(&self, a: Complex64) -> Poly {
        let Some(d) = self.degree() else { return Poly::zero() };
        Poly::new((0..=d).map(|k| self.coeffs[d - k] * a.powi((d - k) as i32)).collect())
    }

    pub fn roots(&self) -> Vec<Complex64> {
        poly_roots(self)
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let n = self.coeffs.len().max(o.coeffs.len());
        let get = |v: &[Complex64], k: usize| v.get(k).copied().unwrap_or(ZERO);
        Poly::new((0..n).map(|k| get(&self.coeffs, k) + get(&o.coeffs, k)).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        self + &(-o)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly { coeffs: self.coeffs.iter().map(|&x| -x).collect() }
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        if self.is_zero() || o.is_zero() {
            return Poly::zero();
        }
        let mut v = vec![ZERO; self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        Poly::new(v)
    }
}

/// All roots with multiplicity: zero roots are split off, the rest come from the
/// companion matrix and get one Newton step each.
pub fn poly_roots(p: &Poly) -> Vec<Complex64> {
    let Some(_) = p.degree() else { return Vec::new() };
    let v = p.valuation();
    let mut roots = vec![ZERO; v];
    let rest = p.shift_down(v);
    let Some(d) = rest.degree() else { return roots };
    if d == 0 {
        return roots;
    }
    let lead = rest.leading();
    let comp = CMatrix::from_fn(d, d, |i, j| {
        if j == d - 1 {
            -rest.coeffs[i] / lead
        } else if i == j + 1 {
            ONE
        } else {
            ZERO
        }
    });
    let dp = rest.derivative();
    let polished: Vec<Complex64> = cmatrix::eigenvalues(&comp)
        .into_iter()
        .map(|r| {
            let f = rest.eval(r);
            let df = dp.eval(r);
            let s = if df.norm() > 0.0 { r - f / df } else { r };
            if s.is_finite() && rest.eval(s).norm() <= f.norm() { s } else { r }
        })
        .collect();
    // multiple roots scatter like eps^(1/k); their cluster mean is far more accurate
    let scale = polished.iter().map(|r| r.norm()).fold(1.0, f64::max);
    for (r, k) in cmatrix::cluster(&polished, scale) {
        roots.extend(std::iter::repeat_n(r, k));
    }
    roots
}

/// Distinct values up to `tol` (first representative kept).
fn dedup(values: impl IntoIterator<Item = Complex64>, tol: f64) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = Vec::new();
    for z in values {
        if !out.iter().any(|w| (w - z).norm() < tol) {
            out.push(z);
        }
    }
    out
}

/// `num(z) / Π (z − p)`: the denominator is kept as its list of poles, so sums
/// use exact least common denominators and cancellations test known roots.
#[derive(Debug, Clone, PartialEq)]
pub struct RatFun {
    num: Poly,
    poles: Vec<Complex64>,
}

fn same_point(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() <= ROOT_TOL * 1e-2 * a.norm().max(b.norm()).max(1.0)
}

/// `Π (z − p)`.
fn expand(poles: &[Complex64]) -> Poly {
    poles.iter().fold(Poly::constant(ONE), |acc, p| &acc * &Poly::new(vec![-p, ONE]))
}

/// Multiset difference `a − b` with tolerant matching.
fn pole_difference(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut used = vec![false; b.len()];
    let mut out = Vec::new();
    for &p in a {
        match (0..b.len()).find(|&k| !used[k] && same_point(p, b[k])) {
            Some(k) => used[k] = true,
            None => out.push(p),
        }
    }
    out
}

impl RatFun {
    pub fn new(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(QError::InvalidParameter("rational function with zero denominator".into()));
        }
        let lead = den.leading();
        Ok(RatFun { num: num.scale(1.0 / lead), poles: poly_roots(&den) }.reduce())
    }

    /// `num / Π (z − p)` for a known pole list.
    pub fn from_poles(num: Poly, poles: Vec<Complex64>) -> Self {
        RatFun { num, poles }.reduce()
    }

    pub fn constant(a: Complex64) -> Self {
        RatFun { num: Poly::constant(a), poles: Vec::new() }
    }

    pub fn zero() -> Self {
        RatFun::constant(ZERO)
    }

    pub fn from_poly(p: Poly) -> Self {
        RatFun { num: p, poles: Vec::new() }
    }

    /// `a·z^k` for any integer `k`.
    pub fn monomial(a: Complex64, k: i64) -> Self {
        if k >= 0 {
            RatFun::from_poly(Poly::monomial(a, k as usize))
        } else {
            RatFun { num: Poly::constant(a), poles: vec![ZERO; (-k) as usize] }
        }
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    /// Monic denominator.
    pub fn den(&self) -> Poly {
        expand(&self.poles)
    }

    /// Poles with multiplicity.
    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    /// Cancels poles at which the numerator vanishes.
    fn reduce(mut self) -> Self {
        if self.num.is_zero() {
            return RatFun::zero();
        }
        let mut kept = Vec::with_capacity(self.poles.len());
        for p in std::mem::take(&mut self.poles) {
            let vanishes = self.num.degree().unwrap_or(0) > 0
                && self.num.eval(p).norm() <= 1e-9 * self.num.eval_scale(p);
            if vanishes {
                self.num = self.num.deflate(p);
            } else {
                kept.push(p);
            }
        }
        self.poles = kept;
        self
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let mut d = ONE;
        for p in &self.poles {
            let f = z - p;
            if f.norm() <= POLE_GUARD * p.norm().max(1.0) {
                return Err(QError::NearPole { z });
            }
            d *= f;
        }
        Ok(self.num.eval(z) / d)
    }

    /// Order at 0: positive for a zero, negative for a pole.
    pub fn valuation(&self) -> i64 {
        if self.is_zero() {
            return i64::MAX;
        }
        self.num.valuation() as i64 - self.poles.iter().filter(|p| **p == ZERO).count() as i64
    }

    /// Taylor coefficients `c_0..c_{m-1}` at 0; requires regularity at 0.
    pub fn taylor(&self, m: usize) -> Result<Vec<Complex64>> {
        if self.poles.iter().any(|p| p.norm() <= ROOT_TOL) {
            return Err(QError::NearPole { z: ZERO });
        }
        let den = self.den();
        let n = self.num.coeffs();
        let d = den.coeffs();
        let d0 = d[0];
        let mut out: Vec<Complex64> = Vec::with_capacity(m);
        for k in 0..m {
            let mut s = n.get(k).copied().unwrap_or(ZERO);
            for j in 1..=k.min(d.len() - 1) {
                s -= d[j] * out[k - j];
            }
            out.push(s / d0);
        }
        Ok(out)
    }

    /// `f(a/w)` as a rational function of `w`.
    pub fn reciprocal_subs(&self, a: Complex64) -> RatFun {
        if self.is_zero() {
            return RatFun::zero();
        }
        // num(a/w) = w^{-dn}·Ñ(w); Π(a/w − p) = w^{-m}·Π(a − p·w)
        let dn = self.num.degree().unwrap_or(0) as i64;
        let m = self.poles.len() as i64;
        let mut scale = ONE;
        let mut poles = Vec::with_capacity(self.poles.len());
        for &p in &self.poles {
            if p == ZERO {
                scale /= a;
            } else {
                scale /= -p;
                poles.push(a / p);
            }
        }
        let k = m - dn;
        let mut num = self.num.reciprocal_subs(a).scale(scale);
        if k >= 0 {
            num = num.shift_up(k as usize);
        } else {
            poles.extend(std::iter::repeat_n(ZERO, (-k) as usize));
        }
        RatFun { num, poles }.reduce()
    }

    pub fn inv(&self) -> Result<RatFun> {
        if self.is_zero() {
            return Err(QError::IdenticallySingular);
        }
        let lead = self.num.leading();
        Ok(RatFun { num: self.den().scale(1.0 / lead), poles: poly_roots(&self.num) }.reduce())
    }

    pub fn scale(&self, a: Complex64) -> RatFun {
        if a == ZERO {
            return RatFun::zero();
        }
        RatFun { num: self.num.scale(a), poles: self.poles.clone() }
    }

    /// Multiplication by `a·z^k`.
    pub fn mul_monomial(&self, a: Complex64, k: i64) -> RatFun {
        self * &RatFun::monomial(a, k)
    }

    /// Replaces the numerator, keeping the poles.
    pub fn with_num(&self, num: Poly) -> RatFun {
        RatFun { num, poles: self.poles.clone() }.reduce()
    }

    /// Sum without the cancellation pass.
    fn add_raw(&self, o: &RatFun) -> RatFun {
        if self.is_zero() {
            return o.clone();
        }
        if o.is_zero() {
            return self.clone();
        }
        let only_o = pole_difference(&o.poles, &self.poles);
        let only_self = pole_difference(&self.poles, &o.poles);
        let num = &(&self.num * &expand(&only_o)) + &(&o.num * &expand(&only_self));
        let mut poles = self.poles.clone();
        poles.extend(only_o);
        RatFun { num, poles }
    }

    fn mul_raw(&self, o: &RatFun) -> RatFun {
        if self.is_zero() || o.is_zero() {
            return RatFun::zero();
        }
        let mut poles = self.poles.clone();
        poles.extend_from_slice(&o.poles);
        RatFun { num: &self.num * &o.num, poles }
    }
}

impl Add for &RatFun {
    type Output = RatFun;
    fn add(self, o: &RatFun) -> RatFun {
        self.add_raw(o).reduce()
    }
}

impl Sub for &RatFun {
    type Output = RatFun;
    fn sub(self, o: &RatFun) -> RatFun {
        self.add_raw(&-o).reduce()
    }
}

impl Neg for &RatFun {
    type Output = RatFun;
    fn neg(self) -> RatFun {
        RatFun { num: -&self.num, poles: self.poles.clone() }
    }
}

impl Mul for &RatFun {
    type Output = RatFun;
    fn mul(self, o: &RatFun) -> RatFun {
        self.mul_raw(o).reduce()
    }
}

/// Square matrix of rational functions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RatMat {
    n: usize,
    entries: Vec<RatFun>,
}

impl RatMat {
    pub fn new(n: usize, entries: Vec<RatFun>) -> Result<Self> {
        if entries.len() != n * n || n == 0 {
            return Err(QError::InvalidParameter(format!("expected {} entries for a {n}x{n} matrix, got {}", n * n, entries.len())));
        }
        Ok(RatMat { n, entries })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> RatFun) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(f(i, j));
            }
        }
        RatMat { n, entries }
    }

    pub fn identity(n: usize) -> Self {
        RatMat::from_fn(n, |i, j| RatFun::constant(if i == j { ONE } else { ZERO }))
    }

    pub fn constant(m: &CMatrix) -> Self {
        RatMat::from_fn(m.nrows(), |i, j| RatFun::constant(m[(i, j)]))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &RatFun {
        &self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, f: RatFun) {
        self.entries[i * self.n + j] = f;
    }

    pub fn entries(&self) -> &[RatFun] {
        &self.entries
    }

    pub fn eval(&self, z: Complex64) -> Result<CMatrix> {
        let mut out = CMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out[(i, j)] = self.get(i, j).eval(z)?;
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(usize, usize, &RatFun) -> RatFun) -> RatMat {
        RatMat::from_fn(self.n, |i, j| f(i, j, self.get(i, j)))
    }

    pub fn mul(&self, o: &RatMat) -> RatMat {
        RatMat::from_fn(self.n, |i, j| {
            (0..self.n).fold(RatFun::zero(), |acc, k| acc.add_raw(&self.get(i, k).mul_raw(o.get(k, j)))).reduce()
        })
    }

    pub fn add(&self, o: &RatMat) -> RatMat {
        RatMat::from_fn(self.n, |i, j| self.get(i, j) + o.get(i, j))
    }

    pub fn scale(&self, a: Complex64) -> RatMat {
        self.map(|_, _, f| f.scale(a))
    }

    /// `L·self·R` for constant matrices.
    pub fn conjugate_const(&self, left: &CMatrix, right: &CMatrix) -> RatMat {
        RatMat::constant(left).mul(self).mul(&RatMat::constant(right))
    }

    fn minor(&self, row: usize, col: usize) -> RatMat {
        let n = self.n - 1;
        RatMat::from_fn(n, |i, j| {
            let ii = if i < row { i } else { i + 1 };
            let jj = if j < col { j } else { j + 1 };
            self.get(ii, jj).clone()
        })
    }

    /// Determinant by cofactor expansion (dimensions here stay small).
    pub fn det(&self) -> RatFun {
        match self.n {
            1 => self.get(0, 0).clone(),
            2 => {
                let a = self.get(0, 0).mul_raw(self.get(1, 1));
                let b = self.get(0, 1).mul_raw(self.get(1, 0));
                a.add_raw(&-&b).reduce()
            }
            n => {
                let mut acc = RatFun::zero();
                for j in 0..n {
                    if self.get(0, j).is_zero() {
                        continue;
                    }
                    let term = self.get(0, j).mul_raw(&self.minor(0, j).det());
                    acc = if j % 2 == 0 { acc.add_raw(&term) } else { acc.add_raw(&-&term) };
                }
                acc.reduce()
            }
        }
    }

    /// Transposed cofactor matrix.
    pub fn adjugate(&self) -> RatMat {
        if self.n == 1 {
            return RatMat::identity(1);
        }
        RatMat::from_fn(self.n, |i, j| {
            let d = self.minor(j, i).det();
            if (i + j) % 2 == 0 { d } else { -&d }
        })
    }

    pub fn inverse(&self) -> Result<RatMat> {
        let d = self.det();
        if d.is_zero() {
            return Err(QError::IdenticallySingular);
        }
        let dinv = d.inv()?;
        Ok(self.adjugate().map(|_, _, f| f * &dinv))
    }

    /// Entrywise `f(a/w)`.
    pub fn reciprocal_subs(&self, a: Complex64) -> RatMat {
        self.map(|_, _, f| f.reciprocal_subs(a))
    }

    /// Taylor coefficients `M_0..M_{m-1}` at 0.
    pub fn taylor(&self, m: usize) -> Result<Vec<CMatrix>> {
        let mut out = vec![CMatrix::zeros(self.n, self.n); m];
        for i in 0..self.n {
            for j in 0..self.n {
                for (k, v) in self.get(i, j).taylor(m)?.into_iter().enumerate() {
                    out[k][(i, j)] = v;
                }
            }
        }
        Ok(out)
    }

    /// Smallest entry valuation at 0.
    pub fn valuation(&self) -> i64 {
        self.entries.iter().map(RatFun::valuation).min().unwrap_or(i64::MAX)
    }

    /// Distinct entry poles, including 0 when present.
    pub fn poles(&self) -> Vec<Complex64> {
        dedup(self.entries.iter().flat_map(|f| f.poles().iter().copied()), ROOT_TOL)
    }

    /// Largest polynomial degree among numerators and denominators.
    pub fn degree(&self) -> usize {
        self.entries
            .iter()
            .map(|f| f.num.degree().unwrap_or(0).max(f.poles.len()))
            .max()
            .unwrap_or(0)
    }
}

/// Poles of the entries together with zeros of the determinant, restricted to `C*`.
pub fn singular_set(a: &RatMat) -> Result<Vec<Complex64>> {
    let det = a.det();
    if det.is_zero() {
        return Err(QError::IdenticallySingular);
    }
    let candidates = a.poles().into_iter().chain(poly_roots(&det.num));
    Ok(dedup(candidates.filter(|z| z.norm() > ROOT_TOL), ROOT_TOL))
}

/// `Ā(w) = A(1/(q·w))⁻¹`, the system seen from infinity.
pub fn infinity_transform(a: &RatMat, q: Complex64) -> Result<RatMat> {
    a.reciprocal_subs(1.0 / q).inverse()
}

/// `A = I + (q − 1)·B̃`.
pub fn deformation_matrix(btilde: &RatMat, ctx: &QContext) -> RatMat {
    btilde.map(|i, j, f| {
        let scaled = f.scale(ctx.eta);
        if i == j { &scaled + &RatFun::constant(ONE) } else { scaled }
    })
}

/// Elementary factor of the pivot factorization.
#[derive(Debug, Clone, PartialEq)]
pub enum PivotFactor {
    /// Multiplication by `z^k` of the whole matrix.
    Power(i64),
    /// Identity except row `row`, which is `alpha`.
    RowOperation { row: usize, alpha: Vec<Complex64> },
    /// Identity except `z` at `(row, row)`.
    Dilation { row: usize },
}

/// `M = C·R` with `R(0)` invertible and `C` a product of elementary factors.
#[derive(Debug, Clone)]
pub struct PivotFactorization {
    pub left: RatMat,
    pub regular: RatMat,
    /// `C = z^{-k}·T₁⁻¹D₁·T₂⁻¹D₂⋯` in application order.
    pub factors: Vec<PivotFactor>,
    /// Power `k ≥ 0` such that `z^k·M` is holomorphic at 0.
    pub clearing: i64,
    pub dilations: usize,
}

fn factor_matrix(n: usize, f: &PivotFactor) -> RatMat {
    match f {
        PivotFactor::Power(k) => RatMat::from_fn(n, |i, j| if i == j { RatFun::monomial(ONE, *k) } else { RatFun::zero() }),
        PivotFactor::RowOperation { row, alpha } => {
            // inverse of the row operation: same shape
            let ai = alpha[*row];
            RatMat::from_fn(n, |i, j| {
                if i == *row {
                    RatFun::constant(if j == *row { 1.0 / ai } else { -alpha[j] / ai })
                } else {
                    RatFun::constant(if i == j { ONE } else { ZERO })
                }
            })
        }
        PivotFactor::Dilation { row } => RatMat::from_fn(n, |i, j| {
            if i != j {
                RatFun::zero()
            } else if i == *row {
                RatFun::monomial(ONE, 1)
            } else {
                RatFun::constant(ONE)
            }
        }),
    }
}

fn min_singular_ratio(m: &CMatrix) -> f64 {
    let s = m.clone().singular_values();
    let max = s.max();
    if max == 0.0 {
        return 0.0;
    }
    s.min() / max
}

/// Gauss-pivot style reduction at the origin with uniformizer `z`.
pub fn pivot_factorize_at_zero(m: &RatMat) -> Result<PivotFactorization> {
    let n = m.dim();
    let det = m.det();
    if det.is_zero() {
        return Err(QError::IdenticallySingular);
    }
    let clearing = (-m.valuation()).max(0);
    let mut r = m.map(|_, _, f| f.mul_monomial(ONE, clearing));
    let mut factors = vec![PivotFactor::Power(-clearing)];
    let expected = r.det().valuation().max(0) as usize;
    let cap = (expected + n).min(MAX_PIVOT_STEPS);
    let mut dilations = 0;
    loop {
        let r0 = r.eval(ZERO)?;
        if min_singular_ratio(&r0) > 1e-9 {
            break;
        }
        if dilations >= cap {
            return Err(QError::MaxIterations(dilations));
        }
        // left kernel vector: alpha·R(0) = 0
        let svd = r0.adjoint().svd(false, true);
        let v_t = svd.v_t.expect("requested");
        let k = (0..n)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .expect("nonempty");
        // rows of v_t are v^H, which is exactly the left kernel vector of R(0)
        let alpha: Vec<Complex64> = v_t.row(k).iter().copied().collect();
        let row = (0..n).max_by(|&a, &b| alpha[a].norm().total_cmp(&alpha[b].norm())).expect("nonempty");
        for j in 0..n {
            let combo = (0..n)
                .fold(RatFun::zero(), |acc, i| acc.add_raw(&r.get(i, j).scale(alpha[i])))
                .reduce();
            // combo vanishes at 0: drop the constant term and divide by z
            let mut v = combo.num().coeffs().to_vec();
            if let Some(c0) = v.first_mut() {
                *c0 = ZERO;
            }
            let f = combo.with_num(Poly::new(v)).mul_monomial(ONE, -1);
            r.set(row, j, f);
        }
        factors.push(PivotFactor::RowOperation { row, alpha });
        factors.push(PivotFactor::Dilation { row });
        dilations += 1;
    }
    let left = factors.iter().fold(RatMat::identity(n), |acc, f| acc.mul(&factor_matrix(n, f)));
    Ok(PivotFactorization { left, regular: r, factors, clearing, dilations })
}

/// `Σ c_j·q^{e_j}`: a coefficient depending on the deformation parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QCoeff {
    pub terms: Vec<(Complex64, f64)>,
}

impl QCoeff {
    pub fn constant(a: Complex64) -> Self {
        QCoeff { terms: vec![(a, 0.0)] }
    }

    pub fn eval(&self, ctx: &QContext) -> Complex64 {
        self.terms.iter().map(|&(a, e)| if e == 0.0 { a } else { a * ctx.qpow_real(e) }).sum()
    }
}

/// Rational function whose coefficients are [`QCoeff`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct QRatFun {
    pub num: Vec<QCoeff>,
    pub den: Vec<QCoeff>,
}

impl QRatFun {
    pub fn instantiate(&self, ctx: &QContext) -> Result<RatFun> {
        let poly = |v: &[QCoeff]| Poly::new(v.iter().map(|c| c.eval(ctx)).collect());
        RatFun::new(poly(&self.num), poly(&self.den))
    }
}

/// Rational matrix family indexed by `q`; instantiated once per context.
#[derive(Debug, Clone, PartialEq)]
pub struct QRatMat {
    pub n: usize,
    pub entries: Vec<QRatFun>,
}

impl QRatMat {
    pub fn instantiate(&self, ctx: &QContext) -> Result<RatMat> {
        let entries = self.entries.iter().map(|e| e.instantiate(ctx)).collect::<Result<Vec<_>>>()?;
        RatMat::new(self.n, entries)
    }
}
