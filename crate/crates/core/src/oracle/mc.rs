//! Monte Carlo calibration of point estimates and delta-method intervals.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::simulate::{simulate, with_workers};
use super::spec::DgpSpec;
use super::truth::{truth, PopulationTruth};
use crate::estimators::{estimate_all, EstimateOptions};
use crate::moments::{critical_value, sig15};

/// SplitMix64 finalizer; derives well-separated replication seeds.
pub fn mix_seed(seed: u64, rep: u64) -> u64 {
    let mut z = seed ^ rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub name: String,
    pub truth: Option<f64>,
    pub n_reps: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    pub mc_sd: f64,
    pub mean_se: f64,
    pub coverage: f64,
    /// Replications in which the estimand was omitted, by reason code.
    pub excluded: BTreeMap<String, usize>,
}

impl Calibration {
    pub fn se_sd_ratio(&self) -> f64 {
        self.mean_se / self.mc_sd
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub replications: usize,
    pub groups: usize,
    pub ci_level: f64,
    pub estimands: Vec<Calibration>,
}

impl CalibrationReport {
    pub fn get(&self, name: &str) -> Option<&Calibration> {
        self.estimands.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "replications": self.replications,
            "groups": self.groups,
            "ci_level": self.ci_level,
            "estimands": self.estimands.iter().map(|c| json!({
                "name": c.name,
                "truth": c.truth.and_then(sig15),
                "n_reps": c.n_reps,
                "bias": sig15(c.bias),
                "mc_sd": sig15(c.mc_sd),
                "mean_se": sig15(c.mean_se),
                "coverage": sig15(c.coverage),
                "excluded": c.excluded,
            })).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOptions {
    pub replications: usize,
    pub workers: usize,
    pub ci_level: f64,
}

/// Simulate, estimate and compare to truth `replications` times.
pub fn mc_study(spec: &DgpSpec, estimands: &[String], opts: &McOptions) -> CalibrationReport {
    assert!(opts.replications >= 2, "at least two replications");
    let truth: PopulationTruth = truth(spec);
    let est_opts = EstimateOptions {
        ci_level: opts.ci_level,
        select: Some(estimands.to_vec()),
        ..EstimateOptions::default()
    };
    let z = critical_value(opts.ci_level);

    // Per replication: for each estimand, either (value, se) or a reason.
    let runs: Vec<Vec<Result<(f64, f64), String>>> = with_workers(opts.workers, || {
        (0..opts.replications)
            .into_par_iter()
            .map(|r| {
                let s = spec.clone().with_seed(mix_seed(spec.seed, r as u64));
                let ds = simulate(&s);
                let rep = estimate_all(&ds, &est_opts);
                estimands
                    .iter()
                    .map(|name| match rep.get(name) {
                        Some(row) => Ok((row.value, row.std_error)),
                        None => Err(rep
                            .omission(name)
                            .map(|e| e.code().to_string())
                            .unwrap_or_else(|| "not_reported".into())),
                    })
                    .collect()
            })
            .collect()
    });

    let estimands = estimands
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let t = truth.get(name);
            let mut vals = Vec::new();
            let mut ses = Vec::new();
            let mut excluded = BTreeMap::new();
            for run in &runs {
                match &run[k] {
                    Ok((v, s)) => {
                        vals.push(*v);
                        ses.push(*s);
                    }
                    Err(code) => *excluded.entry(code.clone()).or_insert(0) += 1,
                }
            }
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let covered = match t {
                Some(t) => vals
                    .iter()
                    .zip(&ses)
                    .filter(|(v, s)| (*v - t).abs() <= z * *s)
                    .count() as f64
                    / n as f64,
                None => f64::NAN,
            };
            Calibration {
                name: name.clone(),
                truth: t,
                n_reps: n,
                mean_estimate: mean,
                bias: t.map_or(f64::NAN, |t| mean - t),
                mc_sd: var.sqrt(),
                mean_se: ses.iter().sum::<f64>() / n as f64,
                coverage: covered,
                excluded,
            }
        })
        .collect();
    CalibrationReport {
        replications: opts.replications,
        groups: spec.groups,
        ci_level: opts.ci_level,
        estimands,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ() {
        let s: std::collections::BTreeSet<u64> = (0..1000).map(|r| mix_seed(42, r)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(mix_seed(1, 0), mix_seed(2, 0));
    }
}
