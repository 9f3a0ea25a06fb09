//! Dense complex linear algebra for the local theory: spectra, Jordan and
//! multiplicative Dunford decompositions, the Sylvester-type operator
//! `X ↦ λ·X·M₀ − M₀·X`, and the matrix characters `e_{q,A}`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{QError, Result};
use crate::qcalc::{binomial, character, classical_determinations, qlog, Determination, QContext};

pub type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative clustering tolerance for eigenvalues.
pub const CLUSTER_TOL: f64 = 1e-7;
/// Relative residual accepted for `Q₀·J·Q₀⁻¹ = A`.
pub const JORDAN_TOL: f64 = 1e-8;
/// Relative distance from the spectral condition of the Sylvester operator.
pub const RESONANCE_TOL: f64 = 1e-8;

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn from_rows(rows: &[&[Complex64]]) -> CMatrix {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// Inverse through LU with a conditioning gate.
pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    let inv = a
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| QError::IllConditioned("matrix is singular".into()))?;
    if !inv.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
        return Err(QError::IllConditioned("inverse overflowed".into()));
    }
    Ok(inv)
}

/// `‖a − b‖ / max(‖b‖, tiny)` in the Frobenius norm.
pub fn rel_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// `E_m(x) = diag(1, x, …, x^{m-1})`.
pub fn scaling_matrix(m: usize, x: Complex64) -> CMatrix {
    CMatrix::from_fn(m, m, |i, j| if i == j { x.powi(i as i32) } else { ZERO })
}

/// Jordan block with `lambda` on the diagonal and `mu` on the superdiagonal.
pub fn jordan_block(lambda: Complex64, mu: Complex64, m: usize) -> CMatrix {
    CMatrix::from_fn(m, m, |i, j| {
        if i == j {
            lambda
        } else if j == i + 1 {
            mu
        } else {
            ZERO
        }
    })
}

pub fn block_diagonal(blocks: &[CMatrix]) -> CMatrix {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let m = b.nrows();
        out.view_mut((off, off), (m, m)).copy_from(b);
        off += m;
    }
    out
}

pub(crate) fn eigenvalues(a: &CMatrix) -> Vec<Complex64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let t = a.clone().schur().unpack().1;
    (0..n).map(|i| t[(i, i)]).collect()
}

/// Eigenvalues clustered with their algebraic multiplicities.
pub fn spectrum(a: &CMatrix) -> Vec<(Complex64, usize)> {
    cluster(&eigenvalues(a), a.norm().max(1e-300))
}

pub(crate) fn cluster(values: &[Complex64], scale: f64) -> Vec<(Complex64, usize)> {
    // A defective eigenvalue of multiplicity k splits like eps^(1/k), so larger
    // clusters are searched first with the correspondingly wider radius.
    let radius = |k: usize| (10.0 * f64::EPSILON.powf(1.0 / k as f64)).max(CLUSTER_TOL) * scale;
    let mut left: Vec<Complex64> = values.to_vec();
    let mut out = Vec::new();
    for k in (1..=values.len()).rev() {
        let r = if k == 1 { CLUSTER_TOL * scale } else { radius(k) };
        let mut keep = Vec::new();
        for comp in linkage(&left, r) {
            if comp.len() >= k {
                out.push((mean(&comp), comp.len()));
            } else {
                keep.extend(comp);
            }
        }
        left = keep;
    }
    out
}

/// Single-linkage components at distance `r`.
fn linkage(values: &[Complex64], r: f64) -> Vec<Vec<Complex64>> {
    let n = values.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn find(l: &mut [usize], i: usize) -> usize {
        let mut i = i;
        while l[i] != i {
            l[i] = l[l[i]];
            i = l[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (values[i] - values[j]).norm() <= r {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                label[a] = b;
            }
        }
    }
    let mut comps: Vec<(usize, Vec<Complex64>)> = Vec::new();
    for i in 0..n {
        let root = find(&mut label, i);
        match comps.iter_mut().find(|(r, _)| *r == root) {
            Some((_, c)) => c.push(values[i]),
            None => comps.push((root, vec![values[i]])),
        }
    }
    comps.into_iter().map(|(_, c)| c).collect()
}

fn mean(g: &[Complex64]) -> Complex64 {
    g.iter().sum::<Complex64>() / g.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JordanBlock {
    pub lambda: Complex64,
    pub size: usize,
}

/// `Q₀⁻¹·A·Q₀` is block diagonal with blocks `ξ_{λ,m}` (ones on the superdiagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct JordanData {
    pub q0: CMatrix,
    pub blocks: Vec<JordanBlock>,
    /// 2-norm condition number of `q0`.
    pub cond: f64,
}

impl JordanData {
    pub fn jordan_matrix(&self) -> CMatrix {
        let blocks: Vec<CMatrix> = self
            .blocks
            .iter()
            .map(|b| jordan_block(b.lambda, ONE, b.size))
            .collect();
        block_diagonal(&blocks)
    }

    /// Same basis rescaled so the blocks read `c·ξ_{1,m}`.
    pub fn scaled_basis(&self) -> CMatrix {
        let scales: Vec<CMatrix> = self
            .blocks
            .iter()
            .map(|b| scaling_matrix(b.size, b.lambda))
            .collect();
        &self.q0 * block_diagonal(&scales)
    }

    pub fn reconstruct(&self) -> Result<CMatrix> {
        Ok(&self.q0 * self.jordan_matrix() * inverse(&self.q0)?)
    }

    pub fn is_semisimple(&self) -> bool {
        self.blocks.iter().all(|b| b.size == 1)
    }
}

/// Orthonormal basis of the numerical null space.
fn null_space(m: &CMatrix, tol: f64) -> CMatrix {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let cols: Vec<_> = (0..n)
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| v_t.row(i).adjoint())
        .collect();
    if cols.is_empty() {
        CMatrix::zeros(n, 0)
    } else {
        CMatrix::from_columns(&cols)
    }
}

/// Component of `v` orthogonal to the columns of `w`.
fn residual_against(w: &[nalgebra::DVector<Complex64>], v: &nalgebra::DVector<Complex64>) -> nalgebra::DVector<Complex64> {
    if w.is_empty() {
        return v.clone();
    }
    let wm = CMatrix::from_columns(w);
    let svd = wm.clone().svd(true, false);
    let u = svd.u.expect("requested");
    let smax = svd.singular_values.max();
    let mut r = v.clone();
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > 1e-12 * smax {
            let col = u.column(k);
            let coeff = col.dotc(&r);
            r -= col * coeff;
        }
    }
    r
}

/// Jordan decomposition with eigenvalues clustered at relative `tol`.
pub fn jordanize(a: &CMatrix, tol: f64) -> Result<JordanData> {
    let n = a.nrows();
    let scale = a.norm().max(1e-300);
    let groups = cluster(&eigenvalues(a), scale);
    let mut columns: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(n);
    let mut blocks = Vec::new();
    for (lambda, mult) in groups {
        let nmat = a - CMatrix::identity(n, n) * lambda;
        let rank_tol = |j: usize| tol.max(1e-9) * scale.max(1.0).powi(j as i32);
        // Null spaces of successive powers until the generalized eigenspace is reached.
        let mut kernels = vec![CMatrix::zeros(n, 0)];
        let mut power = CMatrix::identity(n, n);
        for j in 1..=mult {
            power = &power * &nmat;
            let k = null_space(&power, rank_tol(j));
            let done = k.ncols() >= mult;
            kernels.push(k);
            if done {
                break;
            }
        }
        let depth = kernels.len() - 1;
        if kernels[depth].ncols() != mult {
            return Err(QError::IllConditioned(format!(
                "generalized eigenspace of {lambda} has dimension {} instead of {mult}",
                kernels[depth].ncols()
            )));
        }
        let dims: Vec<usize> = kernels.iter().map(|k| k.ncols()).collect();
        let mut chains: Vec<(nalgebra::DVector<Complex64>, usize)> = Vec::new();
        for s in (1..=depth).rev() {
            let longer = chains.iter().filter(|(_, len)| *len > s).count();
            let want = (dims[s] - dims[s - 1]).saturating_sub(longer);
            let mut span: Vec<_> = kernels[s - 1].column_iter().map(|c| c.into_owned()).collect();
            for (head, len) in &chains {
                let mut v = head.clone();
                for _ in 0..(*len - s) {
                    v = &nmat * v;
                }
                span.push(v);
            }
            let mut added = 0;
            for cand in kernels[s].column_iter() {
                if added == want {
                    break;
                }
                let r = residual_against(&span, &cand.into_owned());
                if r.norm() > 1e-6 {
                    let head = r.normalize();
                    span.push(head.clone());
                    chains.push((head, s));
                    added += 1;
                }
            }
            if added != want {
                return Err(QError::IllConditioned(format!("could not complete Jordan chains for {lambda}")));
            }
        }
        for (head, len) in chains {
            let mut chain = vec![head];
            for _ in 1..len {
                let next = &nmat * chain.last().unwrap();
                chain.push(next);
            }
            chain.reverse();
            columns.extend(chain);
            blocks.push(JordanBlock { lambda, size: len });
        }
    }
    if columns.len() != n {
        return Err(QError::IllConditioned("Jordan basis is incomplete".into()));
    }
    let q0 = CMatrix::from_columns(&columns);
    let sv = q0.clone().svd(false, false).singular_values;
    let cond = sv.max() / sv.min().max(1e-300);
    let data = JordanData { q0, blocks, cond };
    let rec = data.reconstruct()?;
    if (&rec - a).norm() > JORDAN_TOL.max(tol) * scale.max(1e-300) * cond.max(1.0) {
        return Err(QError::IllConditioned(format!(
            "Jordan reconstruction residual {:.2e}",
            (&rec - a).norm() / scale
        )));
    }
    Ok(data)
}

/// Multiplicative Dunford decomposition `A = D·U`, `D` semisimple, `U` unipotent, `DU = UD`.
pub fn dunford_mult(a: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let jd = jordanize(a, CLUSTER_TOL)?;
    if jd.blocks.iter().any(|b| b.lambda.norm() <= 1e-14 * a.norm()) {
        return Err(QError::IllConditioned("matrix is not invertible".into()));
    }
    let n = a.nrows();
    let qinv = inverse(&jd.q0)?;
    let mut diag = CMatrix::zeros(n, n);
    let mut unip = CMatrix::zeros(n, n);
    let mut off = 0;
    for b in &jd.blocks {
        for i in 0..b.size {
            diag[(off + i, off + i)] = b.lambda;
            unip[(off + i, off + i)] = ONE;
            if i + 1 < b.size {
                unip[(off + i, off + i + 1)] = 1.0 / b.lambda;
            }
        }
        off += b.size;
    }
    let d = &jd.q0 * diag * &qinv;
    let u = &jd.q0 * unip * &qinv;
    Ok((d, u))
}

/// Solves `λ·X·M₀ − M₀·X = rhs`.
pub fn sylvester_solve(m0: &CMatrix, lambda: Complex64, rhs: &CMatrix) -> Result<CMatrix> {
    let spec = eigenvalues(m0);
    let scale = m0.norm().max(1e-300) * lambda.norm().max(1.0);
    for &a in &spec {
        for &b in &spec {
            if (lambda * a - b).norm() <= RESONANCE_TOL * scale {
                return Err(QError::SingularOperator);
            }
        }
    }
    sylvester_unchecked(m0, lambda, rhs)
}

pub(crate) fn sylvester_unchecked(m0: &CMatrix, lambda: Complex64, rhs: &CMatrix) -> Result<CMatrix> {
    let n = m0.nrows();
    let id = CMatrix::identity(n, n);
    let op = m0.transpose().kronecker(&id) * lambda - id.kronecker(m0);
    let b = nalgebra::DVector::from_column_slice(rhs.as_slice());
    let x = op.lu().solve(&b).ok_or(QError::SingularOperator)?;
    Ok(CMatrix::from_column_slice(n, n, x.as_slice()))
}

/// `U^s = Σ_k binom(s, k)·(U − I)^k` for unipotent `U`.
pub fn unipotent_power(u: &CMatrix, s: Complex64) -> Result<CMatrix> {
    let n = u.nrows();
    let nil = u - CMatrix::identity(n, n);
    let mut power = CMatrix::identity(n, n);
    let mut acc = CMatrix::identity(n, n);
    for k in 1..=n {
        power = &power * &nil;
        acc += &power * binomial(s, k);
    }
    if power.norm() > 1e-10 * u.norm().max(1.0).powi(n as i32) {
        return Err(QError::NotUnipotent);
    }
    Ok(acc)
}

/// Precomputed Jordan data for repeated evaluation of `e_{q,A₀}`.
#[derive(Debug, Clone)]
pub struct MatrixCharacter {
    pub jordan: JordanData,
    q0_inv: CMatrix,
    unipotent: bool,
}

impl MatrixCharacter {
    pub fn new(a0: &CMatrix) -> Result<Self> {
        let jordan = jordanize(a0, CLUSTER_TOL)?;
        if jordan.blocks.iter().any(|b| b.lambda.norm() <= 1e-14 * a0.norm()) {
            return Err(QError::IllConditioned("exponent matrix is not invertible".into()));
        }
        let q0_inv = inverse(&jordan.q0)?;
        let unipotent = !jordan.is_semisimple();
        Ok(MatrixCharacter { jordan, q0_inv, unipotent })
    }

    /// The log-car matrix in the Jordan basis: blocks `e_{q,c}(z)·Σ_k l^{(k)} c^{-k} S^k`.
    pub fn jordan_basis_value(&self, ctx: &QContext, z: Complex64) -> Result<CMatrix> {
        let l = if self.unipotent { Some(qlog(ctx, z)?) } else { None };
        let mut blocks = Vec::with_capacity(self.jordan.blocks.len());
        for b in &self.jordan.blocks {
            let e = if (b.lambda - 1.0).norm() == 0.0 {
                ONE
            } else {
                character(ctx, b.lambda, z)?
            };
            let mut m = CMatrix::zeros(b.size, b.size);
            for i in 0..b.size {
                for j in i..b.size {
                    let k = j - i;
                    let coeff = if k == 0 { ONE } else { binomial(l.unwrap(), k) / b.lambda.powi(k as i32) };
                    m[(i, j)] = e * coeff;
                }
            }
            blocks.push(m);
        }
        Ok(block_diagonal(&blocks))
    }

    pub fn eval(&self, ctx: &QContext, z: Complex64) -> Result<CMatrix> {
        Ok(&self.jordan.q0 * self.jordan_basis_value(ctx, z)? * &self.q0_inv)
    }
}

/// `e_{q,A₀}(z) = e_{q,D}(z)·e_{q,U}(z)` over the multiplicative Dunford decomposition.
pub fn matrix_character(ctx: &QContext, a0: &CMatrix, z: Complex64) -> Result<CMatrix> {
    MatrixCharacter::new(a0)?.eval(ctx, z)
}

/// `(-z)^{B₀} = exp(log(-z)·B₀)` with `log(-z)` cut along the spiral through 1.
pub fn matrix_neg_power(tau0: Complex64, b0: &CMatrix, z: Complex64) -> Result<CMatrix> {
    let l = classical_determinations(tau0, z, Determination::NegLog)?;
    Ok(matrix_exp(&(b0 * l)))
}

/// Matrix exponential by scaling and squaring of a Taylor polynomial.
pub fn matrix_exp(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let norm = a.norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a * Complex64::from(0.5f64.powi(squarings));
    let mut term = CMatrix::identity(n, n);
    let mut acc = CMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &scaled * Complex64::from(1.0 / k as f64);
        acc += &term;
        if term.norm() < 1e-18 * acc.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        acc = &acc * &acc;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn spectrum_examples() {
        let s = spectrum(&identity(3));
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].1, 3);
        assert!((s[0].0 - 1.0).norm() < 1e-14);
        let q = c(1.2, 0.7);
        let mut s = spectrum(&from_rows(&[&[q, ONE * 0.0], &[ZERO, ONE]]));
        s.sort_by(|a, b| a.0.norm().partial_cmp(&b.0.norm()).unwrap());
        assert!((s[0].0 - 1.0).norm() < 1e-14 && (s[1].0 - q).norm() < 1e-14);
        // companion of z^2 - 3z + 2; roots from the quadratic formula
        let comp = from_rows(&[&[ZERO, c(-2.0, 0.0)], &[ONE, c(3.0, 0.0)]]);
        let disc = (9.0f64 - 8.0).sqrt();
        let roots = [(3.0 - disc) / 2.0, (3.0 + disc) / 2.0];
        let mut s = spectrum(&comp);
        s.sort_by(|a, b| a.0.re.partial_cmp(&b.0.re).unwrap());
        for (got, want) in s.iter().zip(roots) {
            assert!((got.0 - want).norm() < 1e-12);
        }
    }

    #[test]
    fn jordanize_diagonal_and_block() {
        let d = from_rows(&[&[c(2.0, 0.0), ZERO], &[ZERO, c(3.0, 0.0)]]);
        let jd = jordanize(&d, CLUSTER_TOL).unwrap();
        assert!(jd.is_semisimple());
        assert!(rel_diff(&jd.reconstruct().unwrap(), &d) < 1e-12);
        let xi = jordan_block(ONE, ONE, 2);
        let jd = jordanize(&xi, CLUSTER_TOL).unwrap();
        assert_eq!(jd.blocks, vec![JordanBlock { lambda: ONE, size: 2 }]);
        assert!((jd.jordan_matrix() - &xi).norm() < 1e-12);
    }

    #[test]
    fn jordanize_recovers_conjugated_triple_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_matrix(&mut rng, 3) + identity(3) * c(2.0, 0.0);
        let a = &s * jordan_block(c(5.0, 0.0), ONE, 3) * inverse(&s).unwrap();
        let jd = jordanize(&a, CLUSTER_TOL).unwrap();
        assert_eq!(jd.blocks.len(), 1, "{:?}", jd.blocks);
        assert_eq!(jd.blocks[0].size, 3);
        assert!((jd.blocks[0].lambda - 5.0).norm() < 1e-6);
        assert!(rel_diff(&jd.reconstruct().unwrap(), &a) < 1e-8);
    }

    #[test]
    fn jordanize_round_trip_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for case in 0..50 {
            let n = 1 + case % 6;
            let mut blocks = Vec::new();
            let mut left = n;
            let mut k = 0;
            while left > 0 {
                let m = rng.random_range(1..=left.min(3));
                let lambda = c(1.0 + 2.0 * k as f64, rng.random_range(-0.5..0.5));
                blocks.push(jordan_block(lambda, ONE, m));
                left -= m;
                k += 1;
            }
            let j = block_diagonal(&blocks);
            let s = random_matrix(&mut rng, n) + identity(n) * c(3.0, 0.0);
            let a = &s * j * inverse(&s).unwrap();
            let jd = jordanize(&a, CLUSTER_TOL).unwrap();
            assert!(rel_diff(&jd.reconstruct().unwrap(), &a) <= 1e-8, "case {case}");
        }
    }

    #[test]
    fn dunford_examples() {
        let d = from_rows(&[&[c(2.0, 1.0), ZERO], &[ZERO, c(-1.0, 0.5)]]);
        let (dd, uu) = dunford_mult(&d).unwrap();
        assert!(rel_diff(&dd, &d) < 1e-12 && rel_diff(&uu, &identity(2)) < 1e-12);
        let cc = c(0.5, 2.0);
        let (dd, uu) = dunford_mult(&jordan_block(cc, ONE, 3)).unwrap();
        assert!(rel_diff(&dd, &(identity(3) * cc)) < 1e-10);
        assert!(rel_diff(&uu, &jordan_block(ONE, 1.0 / cc, 3)) < 1e-10);
    }

    #[test]
    fn sylvester_examples() {
        let rhs = from_rows(&[&[c(1.0, 2.0), c(0.5, 0.0)], &[c(-1.0, 0.0), c(0.0, 3.0)]]);
        let x = sylvester_solve(&identity(2), c(2.0, 0.0), &rhs).unwrap();
        assert!(rel_diff(&x, &rhs) < 1e-14);
        let m0 = from_rows(&[&[ONE, ZERO], &[ZERO, c(3.0, 0.0)]]);
        let e12 = from_rows(&[&[ZERO, ONE], &[ZERO, ZERO]]);
        let x = sylvester_solve(&m0, c(2.0, 0.0), &e12).unwrap();
        assert!((x[(0, 1)] - 1.0 / 5.0).norm() < 1e-14);
        assert!(x[(0, 0)].norm() + x[(1, 0)].norm() + x[(1, 1)].norm() < 1e-14);
        let q = c(1.1, 0.4);
        let res = from_rows(&[&[ONE, ZERO], &[ZERO, q]]);
        assert_eq!(sylvester_solve(&res, q, &e12), Err(QError::SingularOperator));
    }

    #[test]
    fn sylvester_diagonal_matches_entrywise_division() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = 3;
            let lam: Vec<Complex64> = (0..n).map(|_| c(rng.random_range(0.5..2.0), rng.random_range(-1.0..1.0))).collect();
            let m0 = CMatrix::from_fn(n, n, |i, j| if i == j { lam[i] } else { ZERO });
            let l = c(rng.random_range(1.5..3.0), rng.random_range(-0.3..0.3));
            let rhs = random_matrix(&mut rng, n);
            let x = sylvester_solve(&m0, l, &rhs).unwrap();
            let want = CMatrix::from_fn(n, n, |i, j| rhs[(i, j)] / (l * lam[j] - lam[i]));
            assert!(rel_diff(&x, &want) < 1e-12);
        }
    }

    #[test]
    fn unipotent_power_examples() {
        let s = c(0.3, -1.2);
        assert!(rel_diff(&unipotent_power(&identity(3), s).unwrap(), &identity(3)) < 1e-15);
        let xi = jordan_block(ONE, ONE, 3);
        let l = unipotent_power(&xi, s).unwrap();
        assert!((l[(0, 1)] - s).norm() < 1e-14);
        assert!((l[(0, 2)] - s * (s - 1.0) / 2.0).norm() < 1e-14);
        assert!(rel_diff(&unipotent_power(&xi, ONE).unwrap(), &xi) < 1e-15);
        assert_eq!(unipotent_power(&(identity(2) * c(2.0, 0.0)), s), Err(QError::NotUnipotent));
        let t = c(-0.7, 0.2);
        let prod = unipotent_power(&xi, s).unwrap() * unipotent_power(&xi, t).unwrap();
        assert!(rel_diff(&prod, &unipotent_power(&xi, s + t).unwrap()) < 1e-13);
    }

    #[test]
    fn matrix_character_examples() {
        let ctx = QContext::new(c(0.0, 1.0), 0.2).unwrap();
        let z = c(0.6, 0.9);
        assert!(rel_diff(&matrix_character(&ctx, &identity(2), z).unwrap(), &identity(2)) < 1e-14);
        let (cc, dd) = (c(1.4, 0.2), c(0.7, -0.9));
        let a0 = from_rows(&[&[cc, ZERO], &[ZERO, dd]]);
        let e = matrix_character(&ctx, &a0, z).unwrap();
        assert!((e[(0, 0)] - character(&ctx, cc, z).unwrap()).norm() < 1e-12);
        assert!((e[(1, 1)] - character(&ctx, dd, z).unwrap()).norm() < 1e-12);
        assert!(e[(0, 1)].norm() + e[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn matrix_character_functional_equation_and_commutation() {
        let ctx = QContext::new(c(0.0, 1.0), 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a0 = from_rows(&[&[c(1.3, 0.2), c(0.4, 0.0)], &[ZERO, c(1.3, 0.2)]]) + random_matrix(&mut rng, 2) * c(0.3, 0.0);
        let unip = from_rows(&[&[c(1.2, 0.1), ONE], &[ZERO, c(1.2, 0.1)]]);
        for a in [a0, unip] {
            for _ in 0..10 {
                let z = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let e = matrix_character(&ctx, &a, z).unwrap();
                let eq = matrix_character(&ctx, &a, ctx.q * z).unwrap();
                assert!(rel_diff(&eq, &(&a * &e)) < 1e-10);
                assert!(rel_diff(&(&e * &a), &(&a * &e)) < 1e-10);
            }
        }
    }

    #[test]
    fn matrix_neg_power_examples() {
        let t = c(0.0, 1.0);
        let z = c(0.4, 1.5);
        assert!(rel_diff(&matrix_neg_power(t, &CMatrix::zeros(2, 2), z).unwrap(), &identity(2)) < 1e-15);
        let g = c(0.3, 0.1);
        let m = matrix_neg_power(t, &(identity(1) * g), z).unwrap();
        assert!((m[(0, 0)] - (g * (-z).ln()).exp()).norm() < 1e-13);
        let nil = jordan_block(ZERO, ONE, 2);
        let m = matrix_neg_power(t, &nil, z).unwrap();
        let want = identity(2) + &nil * (-z).ln();
        assert!(rel_diff(&m, &want) < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn character_is_covariant_under_base_change(seed in 0u64..10_000) {
            let ctx = QContext::new(c(0.0, 1.0), 0.25).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a0 = random_matrix(&mut rng, 3) * c(0.3, 0.0) + identity(3) * c(1.2, 0.3);
            let r = random_matrix(&mut rng, 3) + identity(3) * c(2.5, 0.0);
            let rinv = inverse(&r).unwrap();
            let z = c(rng.random_range(-1.5..1.5), rng.random_range(0.2..1.5));
            let lhs = matrix_character(&ctx, &(&r * &a0 * &rinv), z);
            let rhs = matrix_character(&ctx, &a0, z).map(|e| &r * e * &rinv);
            if let (Ok(l), Ok(rr)) = (lhs, rhs) {
                prop_assert!(rel_diff(&l, &rr) < 1e-8);
            }
        }

        #[test]
        fn dunford_factors_commute(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, 3) + identity(3) * c(2.0, 0.0);
            let (d, u) = dunford_mult(&a).unwrap();
            prop_assert!(rel_diff(&(&d * &u), &a) < 1e-9);
            prop_assert!((&d * &u - &u * &d).norm() < 1e-9 * a.norm());
            let nil = &u - identity(3);
            prop_assert!((&nil * &nil * &nil).norm() < 1e-9);
        }
    }
}
