#![allow(dead_code)]

use std::path::PathBuf;

use spillover_iv::moments::EstimateReport;
use spillover_iv::oracle::{DgpSpec, PopulationTruth};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load_fixture(name: &str) -> DgpSpec {
    DgpSpec::from_file(&fixture(name)).expect("fixture parses")
}

/// One (estimand, truth) comparison.
#[derive(Debug)]
pub struct Comparison {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub truth: f64,
}

impl Comparison {
    pub fn z(&self) -> f64 {
        (self.estimate - self.truth).abs() / self.std_error
    }

    /// Zero-SE rows (shares pinned at zero) count when they hit the truth.
    pub fn within(&self, k: f64) -> bool {
        (self.estimate - self.truth).abs() <= k * self.std_error + 1e-12
    }
}

/// Pair every reported row that has a population value.
pub fn compare(report: &EstimateReport, truth: &PopulationTruth) -> Vec<Comparison> {
    report
        .rows
        .iter()
        .filter_map(|r| {
            truth.get(&r.name).map(|t| Comparison {
                name: r.name.clone(),
                estimate: r.value,
                std_error: r.std_error,
                truth: t,
            })
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
