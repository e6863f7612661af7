//! Inverse-probability-weighted estimands with a discrete covariate.
//!
//! Propensities `p_zz'(x)` are the within-stratum cell shares unless a known
//! design is supplied. Every term is a ratio of stratum-block moments, so
//! standard errors come from the same delta-method path as everything else.

use std::fmt;

use super::{Estimand, EstimandError};
use crate::model::{AssignmentDesign, Cell, Statistic};
use crate::moments::{Expr, Guard, MomentLayout, Scope};

/// Choice of `g(y, x)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GTransform {
    Y,
    /// `1(x = label)`
    Indicator(String),
    /// `y * 1(x = label)`
    YIndicator(String),
}

impl fmt::Display for GTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GTransform::Y => write!(f, "y"),
            GTransform::Indicator(a) => write!(f, "1(x={a})"),
            GTransform::YIndicator(a) => write!(f, "y*1(x={a})"),
        }
    }
}

impl GTransform {
    fn keeps(&self, label: &str) -> bool {
        match self {
            GTransform::Y => true,
            GTransform::Indicator(a) | GTransform::YIndicator(a) => a == label,
        }
    }

    /// `g(Y) * stat` rewritten as a combination of layout statistics.
    fn statistic(&self, stat: Statistic) -> Vec<(Statistic, f64)> {
        if !matches!(self, GTransform::Indicator(_)) {
            return vec![(stat, 1.0)];
        }
        match stat {
            Statistic::Y => vec![(Statistic::One, 1.0)],
            Statistic::YDi => vec![(Statistic::Di, 1.0)],
            Statistic::YDj => vec![(Statistic::Dj, 1.0)],
            Statistic::YNotDi => vec![(Statistic::One, 1.0), (Statistic::Di, -1.0)],
            Statistic::YNotDj => vec![(Statistic::One, 1.0), (Statistic::Dj, -1.0)],
            other => vec![(other, 1.0)],
        }
    }
}

struct Weighting<'a> {
    l: &'a MomentLayout,
    design: Option<&'a AssignmentDesign>,
}

impl Weighting<'_> {
    /// `E[g(Y, X) stat 1(Z = cell) / p_cell(X)]`.
    fn ipw(&self, g: &GTransform, stat: Statistic, cell: Cell) -> Result<Expr, EstimandError> {
        let mut total = Expr::constant(0.0);
        for (s, label) in self.l.strata().iter().enumerate() {
            if !g.keeps(label) {
                continue;
            }
            let scope = Scope::Stratum(s);
            let mut num = Expr::constant(0.0);
            for (st, coef) in g.statistic(stat) {
                num = num + coef * self.l.moment(st, cell, scope)?;
            }
            let term = match self.design {
                Some(d) => {
                    let p = d.for_stratum(Some(label)).unit_prob(cell);
                    num.ratio(Expr::constant(p), Guard::Propensity(label.clone(), cell))
                }
                None => {
                    let share = Cell::ALL
                        .iter()
                        .fold(Expr::constant(0.0), |acc, c| acc + self.l.prob(*c, scope));
                    (num * share).ratio(
                        self.l.prob(cell, scope),
                        Guard::StratumCell(label.clone(), cell),
                    )
                }
            };
            total = total + term;
        }
        Ok(total)
    }
}

const TARGETS: [&str; 5] = ["y00", "y10_c", "y01_cpeer", "y00_c", "y00_cpeer"];

pub fn conditional_estimands(l: &MomentLayout, design: Option<&AssignmentDesign>) -> Vec<Estimand> {
    let group = "cond";
    let mut out = Vec::new();
    if l.strata().is_empty() {
        return out;
    }
    let w = Weighting { l, design };
    let weight_note = if design.is_some() {
        "known design propensities"
    } else {
        "within-stratum cell shares"
    };

    let mut gs = vec![GTransform::Y];
    gs.extend(l.strata().iter().map(|a| GTransform::Indicator(a.clone())));
    gs.extend(l.strata().iter().map(|a| GTransform::YIndicator(a.clone())));

    for g in &gs {
        let y00 = w.ipw(g, Statistic::Y, Cell::C00);
        let exprs = [
            y00.clone(),
            w.ipw(g, Statistic::YDi, Cell::C10),
            w.ipw(g, Statistic::YDj, Cell::C01),
            y00.clone().and_then(|a| Ok(a - w.ipw(g, Statistic::YNotDi, Cell::C10)?)),
            y00.and_then(|a| Ok(a - w.ipw(g, Statistic::YNotDj, Cell::C01)?)),
        ];
        let formulas = [
            format!("E[g*1(Z=(0,0))/p00(x)], g={g}"),
            format!("E[g*D_i*1(Z=(1,0))/p10(x)], g={g}"),
            format!("E[g*D_j*1(Z=(0,1))/p01(x)], g={g}"),
            format!("E[g*1(Z=(0,0))/p00(x)]-E[g*(1-D_i)*1(Z=(1,0))/p10(x)], g={g}"),
            format!("E[g*1(Z=(0,0))/p00(x)]-E[g*(1-D_j)*1(Z=(0,1))/p01(x)], g={g}"),
        ];
        for ((t, e), f) in TARGETS.iter().zip(exprs).zip(formulas) {
            out.push(Estimand::new(
                format!("cond_{t}[g={g}]"),
                group,
                format!("{f}; {weight_note}"),
                e,
            ));
        }
    }

    let p_c_total: Result<Expr, EstimandError> = l.strata().iter().try_fold(Expr::constant(0.0), |acc, a| {
        Ok(acc + w.ipw(&GTransform::Indicator(a.clone()), Statistic::YDi, Cell::C10)?)
    });
    for (s, a) in l.strata().iter().enumerate() {
        let scope = Scope::Stratum(s);
        let d10 = l.cond_mean(Statistic::Di, Cell::C10, scope);
        let d11 = l.cond_mean(Statistic::Di, Cell::C11, scope);
        out.push(Estimand::new(
            format!("cond_p_c[x={a}]"),
            group,
            format!("E[D_i|Z=(1,0),x={a}]"),
            d10.clone(),
        ));
        out.push(Estimand::new(
            format!("cond_p_gc[x={a}]"),
            group,
            format!("E[D_i|Z=(1,1),x={a}]-E[D_i|Z=(1,0),x={a}]"),
            d11.clone().and_then(|b| Ok(b - d10.clone()?)),
        ));
        out.push(Estimand::new(
            format!("cond_p_nt[x={a}]"),
            group,
            format!("1-E[D_i|Z=(1,1),x={a}]"),
            d11.map(|b| Expr::constant(1.0) - b),
        ));
        let share = w
            .ipw(&GTransform::Indicator(a.clone()), Statistic::YDi, Cell::C10)
            .and_then(|n| Ok(n.ratio(p_c_total.clone()?, Guard::Named("P[C]".into()))));
        out.push(Estimand::new(
            format!("cond_complier_share[x={a}]"),
            group,
            format!("P[x={a}|C] from g=1(x={a}); {weight_note}"),
            share,
        ));
    }
    out
}
