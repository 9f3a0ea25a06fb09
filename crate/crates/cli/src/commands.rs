//! The five subcommands. Each returns a [`Report`]; I/O stays in `main`.

use std::f64::consts::PI;

use num_complex::Complex64;
use qconnect_core::cmatrix::{self, CMatrix};
use qconnect_core::confluence::{
    connection_limits, monodromy_from_limits_with, oracle_global_relation, oracle_sector_monodromy, scalar_limit_residual,
    ConfluenceOptions, LimitKind, OdeOracle, LIMIT_LADDER,
};
use qconnect_core::connect::{connection_matrix, ellipticity_residual, triplet_code};
use qconnect_core::localsolve::{canonical_solution_infinity, canonical_solution_zero, resonance_classes, ResonanceReport};
use qconnect_core::qcalc::theta_truncation;
use qconnect_core::ratfun::{infinity_transform, singular_set};
use qconnect_core::{QContext, QError};
use serde_json::{json, Value};

use crate::battery::{self, IDENTITIES, IDENTITY_TOL};
use crate::error::CliError;
use crate::format::{validate_epsilons, GaussParams, SystemFile};
use crate::report::{cjson, fmt_c, fmt_m, mjson, Report};

/// Points drawn by `identities`.
pub const IDENTITY_POINTS: usize = 100;
/// Relative smallest singular value below which a constant part counts as singular.
const INVERTIBLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum At {
    #[default]
    Zero,
    Infinity,
}

/// Command-line overrides of the file defaults.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub epsilon: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub tau0: Option<Complex64>,
    pub tol: Option<f64>,
    pub samples: Option<usize>,
    pub eval: Vec<Complex64>,
    pub oracle: bool,
    pub seed: Option<u64>,
    pub at: At,
}

fn context(file: &SystemFile, opts: &Options, report: &mut Report) -> Result<QContext, CliError> {
    let eps = opts.epsilon.unwrap_or(file.defaults.epsilon);
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(CliError::Parse(format!("epsilon = {eps} must be positive")));
    }
    let tau0 = opts.tau0.unwrap_or(file.tau0());
    report.param("system", &file.name);
    report.param("epsilon", eps);
    report.param("tau0", [tau0.re, tau0.im]);
    Ok(QContext::new(tau0, eps)?)
}

/// `c` written as `q^x` when it lies on the real spiral through 1.
pub fn fmt_qpow(ctx: &QContext, c: Complex64) -> String {
    let ln = c.ln();
    let best = (-64..=64)
        .map(|k| (ln + Complex64::new(0.0, 2.0 * PI * k as f64)) / ctx.log_q)
        .min_by(|a, b| a.im.abs().total_cmp(&b.im.abs()))
        .expect("nonempty");
    if best.im.abs() > 1e-8 * best.re.abs().max(1.0) {
        return fmt_c(c);
    }
    let x = best.re;
    let n = x.round();
    if (x - n).abs() < 1e-8 {
        match n as i64 {
            0 => "1".into(),
            1 => "q".into(),
            k => format!("q^{k}"),
        }
    } else {
        format!("q^{x:.6}")
    }
}

fn invertible(m: &CMatrix) -> bool {
    let sv = m.clone().singular_values();
    let hi = sv.max();
    hi > 0.0 && sv.min() > INVERTIBLE_TOL * hi && m.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

fn describe_end(ctx: &QContext, end: &str, r: &ResonanceReport, report: &mut Report) -> Value {
    let names: Vec<String> = r.exponents.iter().map(|&c| fmt_qpow(ctx, c)).collect();
    report.line(format!("fuchsian at {end}: exponents {{{}}}", names.join(", ")));
    let mut resonant_classes = Vec::new();
    for cl in &r.classes {
        let distinct = cl.iter().any(|&i| (r.exponents[i] - r.exponents[cl[0]]).norm() > 1e-9 * r.exponents[cl[0]].norm());
        if distinct {
            let members: Vec<&str> = cl.iter().map(|&i| names[i].as_str()).collect();
            report.line(format!("resonant at {end}: class {{{}}}", members.join(", ")));
            resonant_classes.push(cl.clone());
        }
    }
    if !r.resonant {
        report.line(format!("non-resonant at {end}"));
    }
    if r.near_resonant {
        report.warn(format!("exponents at {end} are close to a q-power resonance"));
    }
    json!({
        "fuchsian": true,
        "exponents": r.exponents.iter().map(|&c| cjson(c)).collect::<Vec<_>>(),
        "exponents_q": names,
        "classes": r.classes,
        "resonant": r.resonant,
        "resonant_classes": resonant_classes,
        "near_resonant": r.near_resonant,
    })
}

/// Fuchsian test, resonance classes at both ends and the singular set.
pub fn cmd_check(file: &SystemFile, opts: &Options) -> Result<Report, CliError> {
    let mut report = Report::new("check");
    let ctx = context(file, opts, &mut report)?;
    let a = file.system_at(&ctx)?;
    let a0 = a.eval(Complex64::new(0.0, 0.0)).map_err(|_| QError::NotFuchsian("0"))?;
    if !invertible(&a0) {
        return Err(QError::NotFuchsian("0").into());
    }
    let r0 = resonance_classes(&a0, &ctx);
    let zero = describe_end(&ctx, "0", &r0, &mut report);
    report.result("zero", zero);

    let ainf = infinity_transform(&a, ctx.q).and_then(|b| b.eval(Complex64::new(0.0, 0.0)));
    let mut resonant_inf = false;
    match ainf {
        Ok(m) if invertible(&m) => {
            let r = resonance_classes(&m, &ctx);
            resonant_inf = r.resonant;
            let v = describe_end(&ctx, "infinity", &r, &mut report);
            report.result("infinity", v);
        }
        _ => {
            report.line("not fuchsian at infinity");
            report.result("infinity", json!({ "fuchsian": false }));
        }
    }

    let sing = singular_set(&a)?;
    let names: Vec<String> = sing.iter().map(|&c| fmt_qpow(&ctx, c)).collect();
    if sing.is_empty() && !r0.resonant && !resonant_inf {
        report.line("no singularities, non-resonant");
    } else {
        report.line(format!("singular set {{{}}}", names.join(", ")));
    }
    report.result("singular_set", Value::Array(sing.iter().map(|&c| cjson(c)).collect()));
    report.result("singular_set_q", json!(names));
    // The check is exact up to the eigenvalue tolerance.
    report.residual("resonance_tolerance", cmatrix::RESONANCE_TOL);
    Ok(report)
}

fn default_points(radius: f64, at: At) -> Vec<Complex64> {
    let r = if at == At::Zero { 0.5 * radius.min(1.0) } else { 2.0 / radius.min(1.0) };
    [0.4, 2.2, 4.1].iter().map(|&t| Complex64::from_polar(r, t)).collect()
}

/// Canonical solution at 0 or ∞ evaluated at the requested points.
pub fn cmd_solve(file: &SystemFile, opts: &Options) -> Result<Report, CliError> {
    let mut report = Report::new("solve");
    let ctx = context(file, opts, &mut report)?;
    let a = file.system_at(&ctx)?;
    let sol = match opts.at {
        At::Zero => canonical_solution_zero(&a, &ctx)?,
        At::Infinity => canonical_solution_infinity(&a, &ctx)?,
    };
    let at = if opts.at == At::Zero { "zero" } else { "infinity" };
    report.param("at", at);
    let points = if opts.eval.is_empty() { default_points(sol.radius(), opts.at) } else { opts.eval.clone() };
    report.param("eval", points.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>());
    for w in &sol.warnings {
        report.warn(w.clone());
    }
    report.line(format!(
        "canonical solution at {at}: prepared exponents {{{}}}, {} shear step(s), gauge order {}, validated radius {:.4}",
        sol.exponents.iter().map(|&c| fmt_qpow(&ctx, c)).collect::<Vec<_>>().join(", "),
        sol.shearing.steps,
        sol.gauge.order(),
        sol.radius()
    ));
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    for &z in &points {
        match sol.eval(z) {
            Ok(x) => {
                let r = sol.residual(z)?;
                worst = worst.max(r);
                report.line(format!("X({}) = {}  (residual {r:.2e})", fmt_c(z), fmt_m(&x)));
                values.push(json!({ "z": cjson(z), "value": mjson(&x), "residual": r }));
            }
            Err(e @ QError::NearSingularSpiral { .. }) => {
                report.warn(format!("{}: {e}", fmt_c(z)));
                values.push(json!({ "z": cjson(z), "error": e.to_string() }));
            }
            Err(e) => return Err(e.into()),
        }
    }
    report.result("exponents", Value::Array(sol.exponents.iter().map(|&c| cjson(c)).collect()));
    report.result("shear_steps", json!(sol.shearing.steps));
    report.result("gauge_order", json!(sol.gauge.order()));
    report.result("radius", json!(sol.radius()));
    report.result("points", Value::Array(values));
    report.residual("max_solution_residual", worst);
    report.residual("gauge_tail_bound", sol.gauge.tail_bound);
    Ok(report)
}

/// Samples of the connection matrix, its ellipticity and the triplet code.
pub fn cmd_connect(file: &SystemFile, opts: &Options) -> Result<Report, CliError> {
    let mut report = Report::new("connect");
    let ctx = context(file, opts, &mut report)?;
    let k = opts.samples.unwrap_or(file.defaults.samples);
    if k == 0 {
        return Err(CliError::Parse("samples must be positive".into()));
    }
    report.param("samples", k);
    let a = file.system_at(&ctx)?;
    let p = connection_matrix(&a, &ctx)?;
    let pts = p.sample_points(k);
    if pts.len() < k {
        report.warn(format!("only {} admissible sample points found", pts.len()));
    }
    let mut samples = Vec::new();
    let mut worst_sol = 0.0f64;
    for &z in &pts {
        let m = p.eval(z)?;
        worst_sol = worst_sol.max(p.sol0.residual(z)?).max(p.sol_inf.residual(z)?);
        report.line(format!("P({}) = {}", fmt_c(z), fmt_m(&m)));
        samples.push(json!({ "z": cjson(z), "P": mjson(&m) }));
    }
    let ell = ellipticity_residual(&p, &pts)?;
    report.line(format!("ellipticity residual {ell:.2e} over {} samples", pts.len()));
    let code = triplet_code(&a, &ctx, k)?;
    let blocks = |jd: &cmatrix::JordanData| jd.blocks.iter().map(|b| json!({ "lambda": cjson(b.lambda), "size": b.size })).collect::<Vec<_>>();
    let exps = |v: &[Complex64]| v.iter().map(|&c| fmt_qpow(&ctx, c)).collect::<Vec<_>>().join(", ");
    report.line(format!("triplet code: exponents at 0 {{{}}}, at infinity {{{}}}", exps(&code.exponents0), exps(&code.exponents_inf)));
    report.result("samples", Value::Array(samples));
    report.result(
        "triplet",
        json!({
            "blocks_zero": blocks(&code.jordan0),
            "blocks_infinity": blocks(&code.jordan_inf),
            "exponents_zero": code.exponents0.iter().map(|&c| cjson(c)).collect::<Vec<_>>(),
            "exponents_infinity": code.exponents_inf.iter().map(|&c| cjson(c)).collect::<Vec<_>>(),
        }),
    );
    report.residual("ellipticity", ell);
    report.residual("max_solution_residual", worst_sol);
    Ok(report)
}

/// `(P̃⁺)⁻¹·P̃⁻` for Gauss' equation from the Gamma-function connection formulas,
/// in the basis of local solutions at 0 used by those formulas.
pub fn gauss_reference_monodromy(g: &GaussParams) -> Result<CMatrix, CliError> {
    use statrs::function::gamma::gamma;
    let (al, be, ga) = (g.alpha, g.beta, g.gamma);
    let e = |x: f64| Complex64::new(0.0, PI * x).exp();
    let p = |s: f64| {
        cmatrix::from_rows(&[
            &[
                e(s * al) * gamma(ga) * gamma(be - al) / (gamma(be) * gamma(ga - al)),
                e(s * (al - ga + 1.0)) * gamma(2.0 - ga) * gamma(be - al) / (gamma(1.0 - al) * gamma(1.0 - ga + be)),
            ],
            &[
                e(s * be) * gamma(ga) * gamma(al - be) / (gamma(al) * gamma(ga - be)),
                e(s * (be - ga + 1.0)) * gamma(2.0 - ga) * gamma(al - be) / (gamma(1.0 - be) * gamma(1.0 - ga + al)),
            ],
        ])
    };
    Ok(cmatrix::inverse(&p(1.0))? * p(-1.0))
}

/// Change of basis from the frame of `(F, δF)` to the Gamma-formula basis.
fn gauss_basis_change(g: &GaussParams) -> CMatrix {
    let one = Complex64::new(1.0, 0.0);
    cmatrix::from_rows(&[&[one, one], &[Complex64::new(0.0, 0.0), Complex64::new(1.0 - g.gamma, 0.0)]])
}

fn max_entry(m: &CMatrix) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

fn compare(report: &mut Report, label: &str, got: &CMatrix, expect: &CMatrix) -> f64 {
    let err = max_entry(&(got - expect));
    report.line(format!("{label}: reference {}", fmt_m(expect)));
    for i in 0..got.nrows() {
        for j in 0..got.ncols() {
            report.line(format!(
                "  ({}, {})  computed {}  reference {}  diff {:.2e}",
                i + 1,
                j + 1,
                fmt_c(got[(i, j)]),
                fmt_c(expect[(i, j)]),
                (got[(i, j)] - expect[(i, j)]).norm()
            ));
        }
    }
    err
}

/// Confluence pipeline: sector limits along the ladder, monodromies, optional oracle.
pub fn cmd_monodromy(file: &SystemFile, opts: &Options) -> Result<Report, CliError> {
    let mut report = Report::new("monodromy");
    let family = file.family()?;
    let eps = opts.epsilons.clone().unwrap_or_else(|| file.defaults.epsilons.clone());
    validate_epsilons(&eps)?;
    let tau0 = opts.tau0.unwrap_or(file.tau0());
    if !(tau0.im > 0.0) {
        return Err(CliError::Parse("tau0 must have positive imaginary part".into()));
    }
    let tol = opts.tol.unwrap_or(file.defaults.tol);
    report.param("system", &file.name);
    report.param("epsilons", &eps);
    report.param("tau0", [tau0.re, tau0.im]);
    report.param("tol", tol);
    report.param("oracle", opts.oracle);

    let ladder = connection_limits(&family, tau0, &eps, &ConfluenceOptions::default())?;
    let rep = monodromy_from_limits_with(&ladder, tol)?;
    let cfg = &rep.sectors;
    report.line(format!(
        "{} sector(s), omega = {}, singular spirals at chi = [{}]",
        cfg.sector_count(),
        fmt_c(cfg.omega),
        cfg.chi.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
    ));
    for (i, (m, e)) in rep.limits.iter().zip(&rep.error_estimates).enumerate() {
        report.line(format!("sector {i}: limit {}  (error estimate {e:.2e})", fmt_m(m)));
        report.residual(&format!("ladder_error_sector_{i}"), *e);
    }
    let mut monos = Vec::new();
    for (zj, m) in &rep.monodromies {
        report.line(format!("monodromy at {}: {}", fmt_c(*zj), fmt_m(m)));
        monos.push(json!({ "at": cjson(*zj), "matrix": mjson(m) }));
    }
    for w in &rep.warnings {
        report.warn(w.clone());
    }
    report.result(
        "sectors",
        json!({
            "omega": cjson(cfg.omega),
            "singularities": cfg.singularities.iter().map(|&c| cjson(c)).collect::<Vec<_>>(),
            "chi": cfg.chi,
        }),
    );
    report.result("samples", Value::Array(ladder.samples.iter().map(|&c| cjson(c)).collect()));
    report.result(
        "ladder",
        Value::Array(
            ladder
                .values
                .iter()
                .zip(&ladder.epsilons)
                .map(|(row, e)| json!({ "epsilon": e, "P": row.iter().map(mjson).collect::<Vec<_>>() }))
                .collect(),
        ),
    );
    report.result("limits", Value::Array(rep.limits.iter().map(mjson).collect()));
    report.result("monodromies", Value::Array(monos));
    let worst = rep.error_estimates.iter().copied().fold(0.0, f64::max);
    report.residual("monodromy_error_estimate", worst);

    let mut oracle_ms = Vec::new();
    if opts.oracle {
        let oracle = OdeOracle::new(&ladder.limit, tau0, cfg.omega)?;
        let mut out = Vec::new();
        for j in 1..=rep.monodromies.len() {
            let mo = oracle_sector_monodromy(&oracle, cfg, j)?;
            let d = max_entry(&(&mo - &rep.monodromies[j - 1].1));
            report.line(format!("oracle at {}: {}  (pipeline difference {d:.2e})", fmt_c(cfg.singularities[j]), fmt_m(&mo)));
            report.residual(&format!("oracle_vs_pipeline_{j}"), d);
            out.push(json!({ "at": cjson(cfg.singularities[j]), "matrix": mjson(&mo) }));
            oracle_ms.push(mo);
        }
        let (_, rel) = oracle_global_relation(&oracle, cfg)?;
        report.line(format!("oracle global relation residual {rel:.2e}"));
        report.residual("oracle_global_relation", rel);
        report.result("oracle", Value::Array(out));
    }

    if let Some(reference) = &file.reference {
        if let Some(g) = &reference.gauss {
            let expect = gauss_reference_monodromy(g)?;
            let r = gauss_basis_change(g);
            let rinv = cmatrix::inverse(&r)?;
            let one = Complex64::new(1.0, 0.0);
            match rep.monodromies.iter().position(|(zj, _)| (zj - one).norm() < 1e-9) {
                Some(j) => {
                    let got = &rinv * &rep.monodromies[j].1 * &r;
                    let err = compare(&mut report, "Gamma-matrix comparison around 1", &got, &expect);
                    report.residual("reference_gauss", err);
                    if let Some(mo) = oracle_ms.get(j) {
                        report.residual("reference_gauss_oracle", max_entry(&(&rinv * mo * &r - &expect)));
                    }
                    report.result("reference_gauss", mjson(&expect));
                }
                None => report.warn("no singularity at 1 to compare with the Gamma matrices"),
            }
        }
        for (k, mr) in reference.monodromy.iter().enumerate() {
            let at = Complex64::new(mr.at[0], mr.at[1]);
            let n = mr.matrix.len();
            if mr.matrix.iter().any(|row| row.len() != n) {
                return Err(CliError::Parse("reference matrix must be square".into()));
            }
            let expect = CMatrix::from_fn(n, n, |i, j| Complex64::new(mr.matrix[i][j][0], mr.matrix[i][j][1]));
            match rep.monodromies.iter().find(|(zj, _)| (zj - at).norm() < 1e-9 * at.norm().max(1.0)) {
                Some((_, m)) if m.nrows() == n => {
                    let err = compare(&mut report, &format!("reference comparison at {}", fmt_c(at)), m, &expect);
                    report.residual(&format!("reference_{k}"), err);
                }
                _ => report.warn(format!("reference at {} does not match a computed monodromy", fmt_c(at))),
            }
        }
    }
    Ok(report)
}

/// Identity battery at one `ε` plus the scalar limits along the default ladder.
pub fn cmd_identities(opts: &Options) -> Result<Report, CliError> {
    let mut report = Report::new("identities");
    let eps = opts.epsilon.unwrap_or(0.1);
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(CliError::Parse(format!("epsilon = {eps} must be positive")));
    }
    let tau0 = opts.tau0.unwrap_or(Complex64::new(0.0, 1.0));
    let seed = opts.seed.unwrap_or(0);
    report.param("epsilon", eps);
    report.param("tau0", [tau0.re, tau0.im]);
    report.param("seed", seed);
    report.param("points", IDENTITY_POINTS);
    let ctx = QContext::new(tau0, eps)?;

    let t = theta_truncation(&ctx);
    report.line(format!(
        "theta: {} with {} terms",
        if t.product_form { "triple product in logarithms" } else { "Jacobi series (per side)" },
        t.terms
    ));
    report.result("theta", json!({ "product_form": t.product_form, "terms": t.terms }));

    let b = battery::run(&ctx, seed, IDENTITY_POINTS)?;
    let mut pass = true;
    for (name, w) in IDENTITIES.iter().zip(b.worst) {
        let ok = w <= IDENTITY_TOL;
        pass &= ok;
        report.line(format!("{name}: max relative residual {w:.2e} ({})", if ok { "ok" } else { "above threshold" }));
        report.residual(name, w);
        if !ok {
            report.warn(format!("{name} exceeds {IDENTITY_TOL:.0e}"));
        }
    }
    report.result("threshold", json!(IDENTITY_TOL));
    report.result("identities_pass", json!(pass));

    let z = Complex64::new(0.0, 2.0);
    let kinds = [
        ("neg_log", LimitKind::NegLog),
        ("character", LimitKind::Character { gamma: 1.0 / 3.0 }),
        ("theta_ratio", LimitKind::ThetaRatio { alpha: 0.5, beta: 1.0 / 3.0 }),
        ("one_minus_power", LimitKind::OneMinusPower { alpha: 1.0 / 3.0 }),
        ("log_one_minus", LimitKind::LogOneMinus),
    ];
    let mut limits = serde_json::Map::new();
    for (name, kind) in kinds {
        let r = scalar_limit_residual(tau0, &LIMIT_LADDER, z, kind)?;
        let ratios: Vec<f64> = r.windows(2).map(|w| w[0] / w[1]).collect();
        report.line(format!(
            "limit {name} at z = 2i: residuals [{}], ratios [{}]",
            r.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", "),
            ratios.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
        ));
        report.residual(&format!("limit_{name}"), *r.last().expect("nonempty ladder"));
        limits.insert(name.to_string(), json!({ "epsilons": LIMIT_LADDER, "residuals": r, "ratios": ratios }));
    }
    report.result("limits", Value::Object(limits));
    Ok(report)
}
