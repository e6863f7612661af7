//! Estimate rows and the report that collects them.

use serde_json::{json, Value};

use crate::estimators::EstimandError;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Moment formula the value was computed from.
    pub formula: String,
    pub n_groups: usize,
}

impl EstimateRow {
    pub fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "value": sig15(self.value),
            "se": sig15(self.std_error),
            "ci": [sig15(self.ci_low), sig15(self.ci_high)],
            "formula": self.formula,
            "n_groups": self.n_groups,
        })
    }
}

/// An estimand that was requested but not reported.
#[derive(Debug, Clone, PartialEq)]
pub struct Omission {
    pub name: String,
    pub error: EstimandError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub name: String,
    pub value: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateReport {
    pub n_groups: usize,
    pub ci_level: f64,
    pub rows: Vec<EstimateRow>,
    pub omitted: Vec<Omission>,
    pub warnings: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

impl EstimateReport {
    pub fn new(n_groups: usize, ci_level: f64) -> Self {
        Self {
            n_groups,
            ci_level,
            ..Self::default()
        }
    }

    /// Record a row or the reason it could not be computed.
    pub fn push(&mut self, name: &str, result: Result<EstimateRow, EstimandError>) {
        match result {
            Ok(row) => self.rows.push(row),
            Err(error) => self.omitted.push(Omission {
                name: name.to_string(),
                error,
            }),
        }
    }

    pub fn get(&self, name: &str) -> Option<&EstimateRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn omission(&self, name: &str) -> Option<&EstimandError> {
        self.omitted.iter().find(|o| o.name == name).map(|o| &o.error)
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.iter().find(|d| d.name == name).map(|d| d.value)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n_groups": self.n_groups,
            "ci_level": self.ci_level,
            "estimates": self.rows.iter().map(EstimateRow::to_json).collect::<Vec<_>>(),
            "omitted": self.omitted.iter().map(|o| json!({
                "name": o.name,
                "reason": o.error.code(),
                "message": o.error.to_string(),
            })).collect::<Vec<_>>(),
            "warnings": self.warnings,
            "diagnostics": self.diagnostics.iter().map(|d| json!({
                "name": d.name,
                "value": sig15(d.value),
                "note": d.note,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("report serializes")
    }

    /// Fixed-width text table for terminals.
    pub fn render_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain(self.omitted.iter().map(|o| o.name.len()))
            .max()
            .unwrap_or(8)
            .max(8);
        let mut out = format!(
            "{:<width$}  {:>12}  {:>11}  {:>27}\n",
            "estimand",
            "estimate",
            "std.err",
            format!("{:.0}% CI", self.ci_level * 100.0),
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<width$}  {:>12.6}  {:>11.6}  [{:>11.6}, {:>11.6}]\n",
                r.name, r.value, r.std_error, r.ci_low, r.ci_high
            ));
        }
        for o in &self.omitted {
            out.push_str(&format!("{:<width$}  omitted: {}\n", o.name, o.error));
        }
        for d in &self.diagnostics {
            out.push_str(&format!("# {} = {:.6} {}\n", d.name, d.value, d.note));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out.push_str(&format!("households: {}\n", self.n_groups));
        out
    }
}

/// Round to 15 significant digits; non-finite values become `None`.
pub fn sig15(x: f64) -> Option<f64> {
    if !x.is_finite() {
        return None;
    }
    format!("{x:.14e}").parse().ok()
}
