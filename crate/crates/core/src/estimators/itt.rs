//! Intention-to-treat contrasts of cell means.

use super::{Estimand, EstimandError};
use crate::model::{Cell, Statistic};
use crate::moments::{Expr, Guard, MomentLayout, Scope};

fn mean_y(l: &MomentLayout, c: Cell) -> Result<Expr, EstimandError> {
    l.cond_mean(Statistic::Y, c, Scope::Pooled)
}

fn contrast(l: &MomentLayout, hi: Cell, lo: Cell) -> Result<Expr, EstimandError> {
    Ok(mean_y(l, hi)? - mean_y(l, lo)?)
}

/// `E[stat | Z_own = z]`, marginalizing the peer's assignment.
fn marginal_mean(l: &MomentLayout, stat: Statistic, own: bool) -> Result<Expr, EstimandError> {
    let (a, b) = (Cell::new(own, false), Cell::new(own, true));
    let num = l.moment(stat, a, Scope::Pooled)? + l.moment(stat, b, Scope::Pooled)?;
    let den = l.prob(a, Scope::Pooled) + l.prob(b, Scope::Pooled);
    Ok(num.ratio(den, Guard::Named(format!("P[Z_i={}]", own as u8))))
}

fn naive(l: &MomentLayout, stat: Statistic) -> Result<Expr, EstimandError> {
    Ok(marginal_mean(l, stat, true)? - marginal_mean(l, stat, false)?)
}

pub fn itt_estimands(l: &MomentLayout) -> Vec<Estimand> {
    let g = "itt";
    let mut out: Vec<Estimand> = Cell::ALL
        .iter()
        .map(|&c| {
            Estimand::new(
                format!("mean_y_{}", c.label()),
                g,
                format!("E[Y|Z={c}]"),
                mean_y(l, c),
            )
        })
        .collect();
    let pairs = [
        ("itt_direct_0", Cell::C10, Cell::C00),
        ("itt_direct_1", Cell::C11, Cell::C01),
        ("itt_indirect_0", Cell::C01, Cell::C00),
        ("itt_indirect_1", Cell::C11, Cell::C10),
        ("itt_total", Cell::C11, Cell::C00),
    ];
    for (name, hi, lo) in pairs {
        out.push(Estimand::new(
            name,
            g,
            format!("E[Y|Z={hi}]-E[Y|Z={lo}]"),
            contrast(l, hi, lo),
        ));
    }
    let itt_naive = naive(l, Statistic::Y);
    let fs_naive = naive(l, Statistic::Di);
    let late_naive = match (&itt_naive, &fs_naive) {
        (Ok(n), Ok(f)) => Ok(n.clone().ratio(f.clone(), Guard::Named("naive first stage".into()))),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    out.push(Estimand::new("itt_naive", g, "E[Y|Z_i=1]-E[Y|Z_i=0]", itt_naive));
    out.push(Estimand::new("first_stage_naive", g, "E[D_i|Z_i=1]-E[D_i|Z_i=0]", fs_naive));
    out.push(Estimand::new(
        "late_naive",
        g,
        "(E[Y|Z_i=1]-E[Y|Z_i=0])/(E[D_i|Z_i=1]-E[D_i|Z_i=0])",
        late_naive,
    ));
    out
}
