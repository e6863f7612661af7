//! Compliance-type shares from cell-wise take-up rates.

use super::{Estimand, EstimandError};
use crate::model::{Cell, Statistic};
use crate::moments::{EstimateRow, Expr, MomentCovariance, MomentLayout, MomentVector, Scope};

fn take_up(l: &MomentLayout, cell: Cell) -> Result<Expr, EstimandError> {
    l.cond_mean(Statistic::Di, cell, Scope::Pooled)
}

fn diff(a: Result<Expr, EstimandError>, b: Result<Expr, EstimandError>) -> Result<Expr, EstimandError> {
    Ok(a? - b?)
}

pub fn type_distribution_estimands(l: &MomentLayout) -> Vec<Estimand> {
    let d = |c| take_up(l, c);
    let g = "types";
    vec![
        Estimand::new("p_at", g, "E[D_i|Z=(0,0)]", d(Cell::C00)),
        Estimand::new("p_sc", g, "E[D_i|Z=(0,1)]-E[D_i|Z=(0,0)]", diff(d(Cell::C01), d(Cell::C00))),
        Estimand::new("p_c", g, "E[D_i|Z=(1,0)]-E[D_i|Z=(0,1)]", diff(d(Cell::C10), d(Cell::C01))),
        Estimand::new("p_gc", g, "E[D_i|Z=(1,1)]-E[D_i|Z=(1,0)]", diff(d(Cell::C11), d(Cell::C10))),
        Estimand::new("p_nt", g, "1-E[D_i|Z=(1,1)]", d(Cell::C11).map(|e| Expr::constant(1.0) - e)),
        Estimand::new(
            "p_at_at",
            g,
            "E[D_i*D_j|Z=(0,0)]",
            l.cond_mean(Statistic::DiDj, Cell::C00, Scope::Pooled),
        ),
        Estimand::new(
            "p_nt_nt",
            g,
            "E[(1-D_i)*(1-D_j)|Z=(1,1)]",
            l.cond_mean(Statistic::NotDiNotDj, Cell::C11, Scope::Pooled),
        ),
        // P[AT,GC] + P[AT,NT] + P[SC,GC] + P[SC,NT]
        Estimand::new(
            "p_joint_identified_sum",
            g,
            "E[D_i*(1-D_j)|Z=(0,1)]",
            l.cond_mean(Statistic::DiNotDj, Cell::C01, Scope::Pooled),
        ),
        Estimand::new(
            "first_stage",
            g,
            "E[D_i|Z=(1,0)]-E[D_i|Z=(0,0)]",
            diff(d(Cell::C10), d(Cell::C00)),
        ),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeDistributionEstimate {
    /// AT, SC, C, GC, NT in that order.
    pub marginals: [EstimateRow; 5],
    pub joint_at_at: EstimateRow,
    pub joint_nt_nt: EstimateRow,
    pub identified_sum: EstimateRow,
    /// Names of shares with negative point estimates.
    pub negative_shares: Vec<String>,
}

/// All type-distribution rows; fails if any required cell is empty.
pub fn type_distribution(
    mu: &MomentVector,
    sigma: &MomentCovariance,
    ci_level: f64,
) -> Result<TypeDistributionEstimate, EstimandError> {
    let rows = type_distribution_estimands(&mu.layout)
        .iter()
        .take(8)
        .map(|e| e.evaluate(mu, sigma, ci_level))
        .collect::<Result<Vec<_>, _>>()?;
    let negative_shares = rows
        .iter()
        .filter(|r| r.value < 0.0)
        .map(|r| r.name.clone())
        .collect();
    let mut it = rows.into_iter();
    let mut next = || it.next().expect("eight rows");
    Ok(TypeDistributionEstimate {
        marginals: [next(), next(), next(), next(), next()],
        joint_at_at: next(),
        joint_nt_nt: next(),
        identified_sum: next(),
        negative_shares,
    })
}
