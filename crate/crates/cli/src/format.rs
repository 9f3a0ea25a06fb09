//! JSON system files.
//!
//! A file describes either `A(z)` directly or the limit matrix `B̃(z)` of the
//! deformation `A = I + (q − 1)·B̃`. Polynomials are ascending coefficient arrays,
//! complex numbers are `[re, im]`, and a coefficient may depend on `q` through
//! `{"qsum": [[[re, im], e], ...]}`, meaning `Σ c·q^e`.

use num_complex::Complex64;
use qconnect_core::confluence::{Family, DEFAULT_LADDER, MONO_TOL};
use qconnect_core::ratfun::{Poly, QCoeff, QRatFun, QRatMat, RatFun, RatMat};
use qconnect_core::QContext;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixKind {
    #[serde(rename = "A_direct")]
    ADirect,
    #[serde(rename = "B_deformation")]
    BDeformation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coeff {
    Value([f64; 2]),
    QSum { qsum: Vec<([f64; 2], f64)> },
}

impl Coeff {
    pub fn real(x: f64) -> Self {
        Coeff::Value([x, 0.0])
    }

    fn to_qcoeff(&self) -> QCoeff {
        match self {
            Coeff::Value([re, im]) => QCoeff::constant(Complex64::new(*re, *im)),
            Coeff::QSum { qsum } => QCoeff { terms: qsum.iter().map(|&([re, im], e)| (Complex64::new(re, im), e)).collect() },
        }
    }

    fn constant(&self) -> Option<Complex64> {
        match self {
            Coeff::Value([re, im]) => Some(Complex64::new(*re, *im)),
            Coeff::QSum { .. } => None,
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Coeff::Value([re, im]) => *re == 0.0 && *im == 0.0,
            Coeff::QSum { qsum } => qsum.iter().all(|([re, im], _)| *re == 0.0 && *im == 0.0),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Coeff::Value([re, im]) => re.is_finite() && im.is_finite(),
            Coeff::QSum { qsum } => qsum.iter().all(|([re, im], e)| re.is_finite() && im.is_finite() && e.is_finite()),
        }
    }
}

fn unit_den() -> Vec<Coeff> {
    vec![Coeff::real(1.0)]
}

/// One entry `num(z)/den(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub num: Vec<Coeff>,
    #[serde(default = "unit_den")]
    pub den: Vec<Coeff>,
}

impl Entry {
    pub fn constant(re: f64, im: f64) -> Self {
        Entry { num: vec![Coeff::Value([re, im])], den: unit_den() }
    }

    fn to_qratfun(&self) -> QRatFun {
        QRatFun { num: self.num.iter().map(Coeff::to_qcoeff).collect(), den: self.den.iter().map(Coeff::to_qcoeff).collect() }
    }

    fn to_ratfun(&self) -> Option<Result<RatFun, CliError>> {
        let num = self.num.iter().map(Coeff::constant).collect::<Option<Vec<_>>>()?;
        let den = self.den.iter().map(Coeff::constant).collect::<Option<Vec<_>>>()?;
        Some(RatFun::new(Poly::new(num), Poly::new(den)).map_err(|e| CliError::Parse(e.to_string())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    pub epsilon: f64,
    pub epsilons: Vec<f64>,
    /// Convergence tolerance of the confluence ladder.
    pub tol: f64,
    pub samples: usize,
}

impl Default for Defaults {
    fn default() -> Self {
        Defaults { epsilon: 0.1, epsilons: DEFAULT_LADDER.to_vec(), tol: MONO_TOL, samples: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonodromyRef {
    pub at: [f64; 2],
    pub matrix: Vec<Vec<[f64; 2]>>,
}

/// Expected monodromies. `gauss` refers to the vector `(F, δF)` of Gauss' equation
/// and is compared with the Gamma-function connection formulas around `z = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauss: Option<GaussParams>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub monodromy: Vec<MonodromyRef>,
}

fn default_tau0() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    #[serde(default)]
    pub name: String,
    pub n: usize,
    pub matrix_kind: MatrixKind,
    /// Rows of entries: `A` for `A_direct`, `B̃` for `B_deformation`.
    pub entries: Vec<Vec<Entry>>,
    /// Limit system `B̃` of an `A_direct` family; needed by `monodromy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<Vec<Vec<Entry>>>,
    #[serde(default = "default_tau0")]
    pub tau0: [f64; 2],
    #[serde(default)]
    pub defaults: Defaults,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
}

fn check_shape(n: usize, rows: &[Vec<Entry>], what: &str) -> Result<(), CliError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Parse(format!("{what} must be {n}x{n}")));
    }
    for e in rows.iter().flatten() {
        if e.den.is_empty() || e.den.iter().all(Coeff::is_zero) {
            return Err(CliError::Parse(format!("{what}: zero denominator")));
        }
        if !e.num.iter().chain(&e.den).all(Coeff::is_finite) {
            return Err(CliError::Parse(format!("{what}: non-finite coefficient")));
        }
    }
    Ok(())
}

fn constant_matrix(n: usize, rows: &[Vec<Entry>], what: &str) -> Result<RatMat, CliError> {
    let entries = rows
        .iter()
        .flatten()
        .map(|e| e.to_ratfun().unwrap_or_else(|| Err(CliError::Parse(format!("{what} may not depend on q")))))
        .collect::<Result<Vec<_>, _>>()?;
    RatMat::new(n, entries).map_err(|e| CliError::Parse(e.to_string()))
}

pub fn validate_epsilons(eps: &[f64]) -> Result<(), CliError> {
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(CliError::Parse("epsilons must be positive and finite".into()));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Parse("epsilons must be strictly decreasing".into()));
    }
    Ok(())
}

impl SystemFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: SystemFile = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    /// Canonical form: pretty JSON with a trailing newline.
    pub fn emit(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(CliError::Parse("n must be positive".into()));
        }
        check_shape(self.n, &self.entries, "entries")?;
        if let Some(limit) = &self.limit {
            if self.matrix_kind == MatrixKind::BDeformation {
                return Err(CliError::Parse("limit is implied by B_deformation entries".into()));
            }
            check_shape(self.n, limit, "limit")?;
            constant_matrix(self.n, limit, "limit")?;
        }
        if self.matrix_kind == MatrixKind::BDeformation {
            constant_matrix(self.n, &self.entries, "B_deformation entries")?;
        }
        if !(self.tau0[1] > 0.0) || !self.tau0[0].is_finite() {
            return Err(CliError::Parse("tau0 must have positive imaginary part".into()));
        }
        let d = &self.defaults;
        if !(d.epsilon > 0.0) || !d.epsilon.is_finite() {
            return Err(CliError::Parse("defaults.epsilon must be positive".into()));
        }
        validate_epsilons(&d.epsilons)?;
        if !(d.tol > 0.0) || d.samples == 0 {
            return Err(CliError::Parse("defaults.tol and defaults.samples must be positive".into()));
        }
        Ok(())
    }

    pub fn tau0(&self) -> Complex64 {
        Complex64::new(self.tau0[0], self.tau0[1])
    }

    /// The `q`-family together with its limit, when one is known.
    pub fn family(&self) -> Result<Family, CliError> {
        match self.matrix_kind {
            MatrixKind::BDeformation => Ok(Family::Linear(constant_matrix(self.n, &self.entries, "entries")?)),
            MatrixKind::ADirect => {
                let limit = self
                    .limit
                    .as_ref()
                    .ok_or_else(|| CliError::Parse("monodromy needs a limit system (field `limit`)".into()))?;
                Ok(Family::Direct { family: self.qmat(), limit: constant_matrix(self.n, limit, "limit")? })
            }
        }
    }

    fn qmat(&self) -> QRatMat {
        QRatMat { n: self.n, entries: self.entries.iter().flatten().map(Entry::to_qratfun).collect() }
    }

    /// `A(z)` at the deformation parameter of `ctx`.
    pub fn system_at(&self, ctx: &QContext) -> Result<RatMat, CliError> {
        match self.matrix_kind {
            MatrixKind::BDeformation => Ok(Family::Linear(constant_matrix(self.n, &self.entries, "entries")?).instantiate(ctx)?),
            MatrixKind::ADirect => Ok(self.qmat().instantiate(ctx)?),
        }
    }
}

/// Converts a constant rational matrix to file entries.
pub fn entries_of(m: &RatMat) -> Vec<Vec<Entry>> {
    let cx = |c: &Complex64| Coeff::Value([c.re, c.im]);
    (0..m.dim())
        .map(|i| {
            (0..m.dim())
                .map(|j| {
                    let f = m.get(i, j);
                    Entry { num: f.num().coeffs().iter().map(cx).collect(), den: f.den().coeffs().iter().map(cx).collect() }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "name": "shear",
        "n": 2,
        "matrix_kind": "A_direct",
        "entries": [
            [{"num": [{"qsum": [[[1, 0], 1]]}]}, {"num": [[0, 0], [1, 0]]}],
            [{"num": []}, {"num": [[1, 0]], "den": [[1, 0]]}]
        ]
    }"#;

    #[test]
    fn parses_and_instantiates() {
        let f = SystemFile::parse(EXAMPLE).unwrap();
        assert_eq!(f.tau0, [0.0, 1.0]);
        assert_eq!(f.defaults, Defaults::default());
        let ctx = QContext::new(f.tau0(), 0.1).unwrap();
        let a = f.system_at(&ctx).unwrap();
        let z = Complex64::new(0.3, 0.2);
        let m = a.eval(z).unwrap();
        assert!((m[(0, 0)] - ctx.q).norm() < 1e-15);
        assert!((m[(0, 1)] - z).norm() < 1e-15);
        assert_eq!(m[(1, 0)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let f = SystemFile::parse(EXAMPLE).unwrap();
        let once = f.emit();
        assert_eq!(SystemFile::parse(&once).unwrap(), f);
        assert_eq!(SystemFile::parse(&once).unwrap().emit(), once);
    }

    #[test]
    fn rejects_bad_files() {
        for bad in [
            EXAMPLE.replace("\"n\": 2", "\"n\": 3"),
            EXAMPLE.replace("\"den\": [[1, 0]]", "\"den\": [[0, 0]]"),
            EXAMPLE.replace("A_direct", "C_other"),
            EXAMPLE.replace("\"name\"", "\"nom\""),
        ] {
            assert!(matches!(SystemFile::parse(&bad), Err(CliError::Parse(_))), "{bad}");
        }
        let f = SystemFile::parse(EXAMPLE).unwrap();
        assert!(matches!(f.family(), Err(CliError::Parse(_))));
    }

    #[test]
    fn deformation_entries_must_be_constant_in_q() {
        let text = EXAMPLE.replace("A_direct", "B_deformation");
        assert!(matches!(SystemFile::parse(&text), Err(CliError::Parse(_))));
    }
}
