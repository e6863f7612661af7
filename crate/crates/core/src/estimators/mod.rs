//! Estimands as smooth functions of the moment vector, and the orchestrator
//! that evaluates every applicable one on a dataset.

mod conditional;
mod itt;
mod osn;
mod tsls;
mod types;
mod weights;

pub use conditional::{conditional_estimands, GTransform};
pub use itt::itt_estimands;
pub use osn::{heterogeneity_estimands, late_estimands, osn_local_average_estimands};
pub use tsls::{solve_linear, tsls_spillover, TslsEstimate};
pub use types::{type_distribution, type_distribution_estimands, TypeDistributionEstimate};
pub use weights::{itt_weight_decomposition, Contrast, IttKind, WeightTable};

use thiserror::Error;

use crate::ingest::Dataset;
use crate::model::{AssignmentDesign, Cell};
use crate::moments::{
    compute_moments_with, delta_method, Diagnostic, EstimateReport, EstimateRow, Expr, HBlock,
    MomentCovariance, MomentOptions, MomentVector, SigmaNorm,
};

/// Why an estimand could not be computed.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EstimandError {
    #[error("assignment cell {0} has no observations")]
    EmptyCell(Cell),
    #[error("assignment cell {cell} is empty in stratum `{stratum}`")]
    EmptyStratumCell { stratum: String, cell: Cell },
    #[error("propensity for cell {cell} in stratum `{stratum}` is degenerate")]
    DegeneratePropensity { stratum: String, cell: Cell },
    #[error("denominator `{0}` is numerically zero")]
    DegenerateDenominator(String),
    #[error("one-sided noncompliance violated: {hard_count} units treated while unassigned")]
    OSNViolated { hard_count: usize },
    #[error("first stage is rank deficient")]
    RankDeficientFirstStage,
    #[error("first stage is zero; weights cannot be rescaled")]
    ZeroFirstStage,
    #[error("moment layout does not carry E[{statistic} * 1(Z={cell})]")]
    NotInLayout { statistic: String, cell: Cell },
    #[error("dataset has no covariate column")]
    MissingCovariate,
}

impl EstimandError {
    /// Stable machine-readable reason.
    pub fn code(&self) -> &'static str {
        match self {
            EstimandError::EmptyCell(_) => "empty_cell",
            EstimandError::EmptyStratumCell { .. } => "empty_stratum_cell",
            EstimandError::DegeneratePropensity { .. } => "degenerate_propensity",
            EstimandError::DegenerateDenominator(_) => "degenerate_denominator",
            EstimandError::OSNViolated { .. } => "osn_violated",
            EstimandError::RankDeficientFirstStage => "rank_deficient_first_stage",
            EstimandError::ZeroFirstStage => "zero_first_stage",
            EstimandError::NotInLayout { .. } => "not_in_layout",
            EstimandError::MissingCovariate => "missing_covariate",
        }
    }
}

/// A named smooth transform of `mu` awaiting evaluation.
#[derive(Debug, Clone)]
pub struct Estimand {
    pub name: String,
    /// Family used by `--estimands` selection, e.g. `itt` or `late`.
    pub group: &'static str,
    pub formula: String,
    pub expr: Result<Expr, EstimandError>,
}

impl Estimand {
    pub fn new(name: impl Into<String>, group: &'static str, formula: impl Into<String>, expr: Result<Expr, EstimandError>) -> Self {
        Self {
            name: name.into(),
            group,
            formula: formula.into(),
            expr,
        }
    }

    pub fn evaluate(&self, mu: &MomentVector, sigma: &MomentCovariance, ci_level: f64) -> Result<EstimateRow, EstimandError> {
        let f = self.expr.clone()?;
        delta_method(mu, sigma, &f, &self.name, &self.formula, ci_level)
    }

    fn blocked(mut self, err: &EstimandError) -> Self {
        self.expr = Err(err.clone());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    pub ci_level: f64,
    pub h: HBlock,
    pub norm: SigmaNorm,
    /// Clamp type-share point estimates and intervals to [0, 1].
    pub clamp_shares: bool,
    /// Use these assignment probabilities as known propensities in the
    /// conditional estimands instead of within-stratum shares.
    pub design: Option<AssignmentDesign>,
    /// Restrict output to these names or groups.
    pub select: Option<Vec<String>>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            ci_level: 0.95,
            h: HBlock::Full8,
            norm: SigmaNorm::Population,
            clamp_shares: false,
            design: None,
            select: None,
        }
    }
}

/// Groups accepted by `--estimands` alongside individual names.
pub const GROUPS: [&str; 7] = ["types", "itt", "osn", "late", "het", "tsls", "cond"];

fn selected(select: &Option<Vec<String>>, name: &str, group: &str) -> bool {
    match select {
        None => true,
        Some(list) => list.iter().any(|s| s == name || s == group),
    }
}

/// Evaluate every estimand that applies to `ds`.
pub fn estimate_all(ds: &Dataset, opts: &EstimateOptions) -> EstimateReport {
    let mut report = EstimateReport::new(ds.n_groups(), opts.ci_level);
    let (mu, sigma) = compute_moments_with(
        ds,
        &MomentOptions {
            h: opts.h,
            norm: opts.norm,
            stratified: false,
        },
    );
    let layout = &mu.layout;
    let hard_count = ds.osn_hard_count();
    let osn_block = (hard_count > 0).then_some(EstimandError::OSNViolated { hard_count });

    let mut defs = type_distribution_estimands(layout);
    defs.extend(itt_estimands(layout));
    let mut osn_defs = osn_local_average_estimands(layout);
    osn_defs.extend(late_estimands(layout));
    osn_defs.extend(heterogeneity_estimands(layout));
    for d in osn_defs {
        defs.push(match &osn_block {
            Some(e) => d.blocked(e),
            None => d,
        });
    }

    for d in &defs {
        if !selected(&opts.select, &d.name, d.group) {
            continue;
        }
        let mut res = d.evaluate(&mu, &sigma, opts.ci_level);
        if d.group == "types" {
            if let Ok(row) = &mut res {
                if row.value < 0.0 && d.name.starts_with("p_") {
                    report
                        .warnings
                        .push(format!("NegativeShare: {} = {:.6}", row.name, row.value));
                }
                if opts.clamp_shares && d.name.starts_with("p_") {
                    row.value = row.value.clamp(0.0, 1.0);
                    row.ci_low = row.ci_low.clamp(0.0, 1.0);
                    row.ci_high = row.ci_high.clamp(0.0, 1.0);
                }
            }
        }
        report.push(&d.name, res);
    }

    // First-stage strength and the OSN diagnostic.
    if let Some(fs) = defs.iter().find(|d| d.name == "first_stage") {
        if let Ok(row) = fs.evaluate(&mu, &sigma, opts.ci_level) {
            if row.std_error > 0.0 {
                report.diagnostics.push(Diagnostic {
                    name: "first_stage_f".into(),
                    value: (row.value / row.std_error).powi(2),
                    note: "cluster-robust Wald F, one restriction".into(),
                });
            }
        }
    }
    report.diagnostics.push(Diagnostic {
        name: "osn_hard_count".into(),
        value: hard_count as f64,
        note: "units with d=1 and z=0".into(),
    });
    if hard_count > 0 {
        report
            .warnings
            .push(format!("OSNViolated: {hard_count} units treated while unassigned"));
    }

    let want_tsls = opts
        .select
        .as_ref()
        .is_none_or(|l| l.iter().any(|s| s.starts_with("tsls")));
    if want_tsls {
        match tsls_spillover(ds, opts.ci_level) {
            Ok(t) => {
                for row in t.rows {
                    if selected(&opts.select, &row.name, "tsls") {
                        report.rows.push(row);
                    }
                }
                if !t.beta3_identified && selected(&opts.select, "tsls_beta3", "tsls") {
                    report.push(
                        "tsls_beta3",
                        Err(EstimandError::DegenerateDenominator("E[D_i*D_j|Z=(1,1)]".into())),
                    );
                }
                report.warnings.extend(t.warnings);
            }
            Err(e) => {
                for k in 0..4 {
                    let name = format!("tsls_beta{k}");
                    if selected(&opts.select, &name, "tsls") {
                        report.push(&name, Err(e.clone()));
                    }
                }
            }
        }
    }

    if ds.has_covariate() {
        let (smu, ssigma) = compute_moments_with(
            ds,
            &MomentOptions {
                h: HBlock::Full8,
                norm: opts.norm,
                stratified: true,
            },
        );
        for d in conditional_estimands(&smu.layout, opts.design.as_ref()) {
            if !selected(&opts.select, &d.name, d.group) {
                continue;
            }
            let d = match &osn_block {
                Some(e) => d.blocked(e),
                None => d,
            };
            report.push(&d.name.clone(), d.evaluate(&smu, &ssigma, opts.ci_level));
        }
    }
    report
}

/// Evaluate a list of estimands into a fresh report.
pub fn evaluate_all(defs: &[Estimand], mu: &MomentVector, sigma: &MomentCovariance, ci_level: f64) -> EstimateReport {
    let mut report = EstimateReport::new(mu.n_groups, ci_level);
    for d in defs {
        report.push(&d.name, d.evaluate(mu, sigma, ci_level));
    }
    report
}
