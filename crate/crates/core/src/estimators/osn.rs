//! Local averages, LATEs and baseline heterogeneity under one-sided
//! noncompliance.

use super::{Estimand, EstimandError};
use crate::model::{Cell, Statistic};
use crate::moments::{Expr, Guard, MomentLayout, Scope};

fn cm(l: &MomentLayout, s: Statistic, c: Cell) -> Result<Expr, EstimandError> {
    l.cond_mean(s, c, Scope::Pooled)
}

/// `E[Y(0,0) 1(own complier)]`.
fn y00_c(l: &MomentLayout) -> Result<Expr, EstimandError> {
    Ok(cm(l, Statistic::Y, Cell::C00)? - cm(l, Statistic::YNotDi, Cell::C10)?)
}

/// `E[Y(0,0) 1(peer complier)]`.
fn y00_cpeer(l: &MomentLayout) -> Result<Expr, EstimandError> {
    Ok(cm(l, Statistic::Y, Cell::C00)? - cm(l, Statistic::YNotDj, Cell::C01)?)
}

pub fn osn_local_average_estimands(l: &MomentLayout) -> Vec<Estimand> {
    let g = "osn";
    let ntnt_mean = match (
        cm(l, Statistic::YNotDiNotDj, Cell::C11),
        cm(l, Statistic::NotDiNotDj, Cell::C11),
    ) {
        (Ok(a), Ok(b)) => Ok(a.ratio(b, Guard::Named("P[NT,NT]".into()))),
        (Err(e), _) | (_, Err(e)) => Err(e),
    };
    vec![
        Estimand::new("e_y00", g, "E[Y|Z=(0,0)]", cm(l, Statistic::Y, Cell::C00)),
        Estimand::new("e_y10_c", g, "E[Y*D_i|Z=(1,0)]", cm(l, Statistic::YDi, Cell::C10)),
        Estimand::new("e_y01_cpeer", g, "E[Y*D_j|Z=(0,1)]", cm(l, Statistic::YDj, Cell::C01)),
        Estimand::new("e_y00_c", g, "E[Y|Z=(0,0)]-E[Y*(1-D_i)|Z=(1,0)]", y00_c(l)),
        Estimand::new("e_y00_cpeer", g, "E[Y|Z=(0,0)]-E[Y*(1-D_j)|Z=(0,1)]", y00_cpeer(l)),
        Estimand::new(
            "e_y00_ntnt",
            g,
            "E[Y*(1-D_i)*(1-D_j)|Z=(1,1)]",
            cm(l, Statistic::YNotDiNotDj, Cell::C11),
        ),
        Estimand::new(
            "mean_y00_given_ntnt",
            g,
            "E[Y*(1-D_i)*(1-D_j)|Z=(1,1)]/E[(1-D_i)*(1-D_j)|Z=(1,1)]",
            ntnt_mean,
        ),
    ]
}

pub fn late_estimands(l: &MomentLayout) -> Vec<Estimand> {
    let g = "late";
    let ratio = |hi: Cell, d: Statistic, label: &str| -> Result<Expr, EstimandError> {
        let num = cm(l, Statistic::Y, hi)? - cm(l, Statistic::Y, Cell::C00)?;
        Ok(num.ratio(cm(l, d, hi)?, Guard::Named(label.into())))
    };
    vec![
        Estimand::new(
            "late_direct",
            g,
            "(E[Y|Z=(1,0)]-E[Y|Z=(0,0)])/E[D_i|Z=(1,0)]",
            ratio(Cell::C10, Statistic::Di, "E[D_i|Z=(1,0)]"),
        ),
        Estimand::new(
            "late_indirect",
            g,
            "(E[Y|Z=(0,1)]-E[Y|Z=(0,0)])/E[D_j|Z=(0,1)]",
            ratio(Cell::C01, Statistic::Dj, "E[D_j|Z=(0,1)]"),
        ),
    ]
}

/// `E[Y(0,0)|C] - E[Y(0,0)|not C]` for own and peer compliance.
pub fn heterogeneity_estimands(l: &MomentLayout) -> Vec<Estimand> {
    let g = "het";
    let build = |num: Result<Expr, EstimandError>, d: Statistic, cell: Cell, label: &str| {
        let p = cm(l, d, cell)?;
        let y00 = cm(l, Statistic::Y, Cell::C00)?;
        let given_c = num?.ratio(p.clone(), Guard::Named(label.into()));
        Ok((given_c - y00).ratio(
            Expr::constant(1.0) - p,
            Guard::Named(format!("1-{label}")),
        ))
    };
    vec![
        Estimand::new(
            "het_own",
            g,
            "((E[Y|Z=(0,0)]-E[Y*(1-D_i)|Z=(1,0)])/E[D_i|Z=(1,0)]-E[Y|Z=(0,0)])/(1-E[D_i|Z=(1,0)])",
            build(y00_c(l), Statistic::Di, Cell::C10, "E[D_i|Z=(1,0)]"),
        ),
        Estimand::new(
            "het_peer",
            g,
            "((E[Y|Z=(0,0)]-E[Y*(1-D_j)|Z=(0,1)])/E[D_j|Z=(0,1)]-E[Y|Z=(0,0)])/(1-E[D_j|Z=(0,1)])",
            build(y00_cpeer(l), Statistic::Dj, Cell::C01, "E[D_j|Z=(0,1)]"),
        ),
    ]
}
