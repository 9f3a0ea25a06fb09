//! Reports: a human-readable summary plus a deterministic JSON payload.

use std::collections::BTreeMap;

use num_complex::Complex64;
use qconnect_core::CMatrix;
use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub params: Map<String, Value>,
    pub results: Map<String, Value>,
    /// Every numeric claim in `results` has an entry here.
    pub residuals: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub summary: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            params: Map::new(),
            results: Map::new(),
            residuals: BTreeMap::new(),
            warnings: Vec::new(),
            summary: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, v: impl Serialize) {
        self.params.insert(key.to_string(), serde_json::to_value(v).expect("serializable"));
    }

    pub fn result(&mut self, key: &str, v: Value) {
        self.results.insert(key.to_string(), v);
    }

    pub fn residual(&mut self, key: &str, r: f64) {
        self.residuals.insert(key.to_string(), r);
    }

    pub fn line(&mut self, s: impl Into<String>) {
        self.summary.push(s.into());
    }

    pub fn warn(&mut self, s: impl Into<String>) {
        self.warnings.push(s.into());
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("qconnect {}\n", self.command);
        for l in &self.summary {
            out.push_str("  ");
            out.push_str(l);
            out.push('\n');
        }
        if !self.residuals.is_empty() {
            out.push_str("residuals:\n");
            for (k, v) in &self.residuals {
                out.push_str(&format!("  {k}: {v:.3e}\n"));
            }
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

pub fn cjson(c: Complex64) -> Value {
    json!([c.re, c.im])
}

pub fn mjson(m: &CMatrix) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| cjson(m[(i, j)])).collect())).collect())
}

pub fn fmt_c(c: Complex64) -> String {
    if c.im.abs() < 5e-7 * c.norm().max(1e-300) {
        format!("{:.6}", c.re)
    } else {
        format!("{:.6}{:+.6}i", c.re, c.im)
    }
}

pub fn fmt_m(m: &CMatrix) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| format!("[{}]", (0..m.ncols()).map(|j| fmt_c(m[(i, j)])).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", rows.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_has_the_five_fields_in_order() {
        let mut r = Report::new("check");
        r.param("epsilon", 0.1);
        r.result("x", json!(1));
        r.residual("x", 1e-12);
        r.line("hidden from json");
        let v: Value = serde_json::from_str(&r.to_json()).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["command", "params", "residuals", "results", "warnings"]);
        assert!(r.render_text().contains("hidden from json"));
    }

    #[test]
    fn complex_formatting() {
        assert_eq!(fmt_c(Complex64::new(1.0, 0.0)), "1.000000");
        assert_eq!(fmt_c(Complex64::new(0.5, -2.0)), "0.500000-2.000000i");
    }
}
