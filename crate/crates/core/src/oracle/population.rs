//! Exact population expectations by enumerating the 25 type pairs.
//!
//! Types are independent of assignment within a component, so
//! `E[stat | Z = (z, z')]` is the type-weighted value of the statistic at
//! the potential treatments `D_own(z, z')`, `D_peer(z', z)`. Noise has mean
//! zero and every statistic is affine in `Y`, so only outcome means enter.

use super::spec::{Component, DgpSpec};
use crate::model::{Cell, ComplianceType, JointTypeDistribution, OutcomeModel, Statistic};
use crate::moments::{Coord, MomentLayout};

/// Treatments of a type pair at a unit-perspective cell.
pub fn treatments(own: ComplianceType, peer: ComplianceType, cell: Cell) -> (bool, bool) {
    (
        own.potential_treatment(cell.own, cell.peer),
        peer.potential_treatment(cell.peer, cell.own),
    )
}

/// `E[stat | Z = cell]` within one homogeneous component.
pub fn component_expectation(
    types: &JointTypeDistribution,
    outcomes: &OutcomeModel,
    cell: Cell,
    stat: Statistic,
) -> f64 {
    types
        .iter()
        .map(|(a, b, p)| {
            if p == 0.0 {
                return 0.0;
            }
            let (d, dp) = treatments(a, b, cell);
            let (coef, constant) = stat.affine(d, dp);
            p * (coef * outcomes.mean(a, b, d, dp) + constant)
        })
        .sum()
}

/// `E[Y | Z = cell]` written as `E[Y(0,0)]` plus the three treatment-shift
/// terms `E[(Y(d,d') - Y(0,0)) 1(D_own = d, D_peer = d')]`.
pub fn expansion_expectation(types: &JointTypeDistribution, outcomes: &OutcomeModel, cell: Cell) -> f64 {
    let mut base = 0.0;
    let mut shifts = [0.0; 3];
    for (a, b, p) in types.iter() {
        let y00 = outcomes.mean(a, b, false, false);
        base += p * y00;
        let (d, dp) = treatments(a, b, cell);
        let k = match (d, dp) {
            (true, false) => 0,
            (false, true) => 1,
            (true, true) => 2,
            (false, false) => continue,
        };
        shifts[k] += p * (outcomes.mean(a, b, d, dp) - y00);
    }
    base + shifts.iter().sum::<f64>()
}

/// Unit-perspective share of the cell, pooled over components.
pub fn cell_prob(spec: &DgpSpec, cell: Cell) -> f64 {
    spec.components()
        .iter()
        .map(|c| c.weight * c.design.unit_prob(cell))
        .sum()
}

/// `E[stat * 1(Z = cell)]` over the whole population.
pub fn population_moment(spec: &DgpSpec, cell: Cell, stat: Statistic) -> f64 {
    spec.components()
        .iter()
        .map(|c| c.weight * c.design.unit_prob(cell) * component_expectation(c.types, c.outcomes, cell, stat))
        .sum()
}

/// `E[stat | Z = cell]`. When no component ever assigns the cell, the
/// structural value (components weighted by their population share) is
/// returned, since types are independent of assignment.
pub fn population_expectation(spec: &DgpSpec, cell: Cell, stat: Statistic) -> f64 {
    let pc = cell_prob(spec, cell);
    if pc > 0.0 {
        return population_moment(spec, cell, stat) / pc;
    }
    spec.components()
        .iter()
        .map(|c| c.weight * component_expectation(c.types, c.outcomes, cell, stat))
        .sum()
}

fn component_h(c: &Component<'_>, layout: &MomentLayout, comp: usize, cell: Cell) -> f64 {
    let h = layout.h_block();
    c.types
        .iter()
        .map(|(a, b, p)| {
            let (d, dp) = treatments(a, b, cell);
            p * h.component(comp, c.outcomes.mean(a, b, d, dp), d, dp)
        })
        .sum()
}

/// Population counterpart of `mu_hat` for a layout.
pub fn population_moment_vector(spec: &DgpSpec, layout: &MomentLayout) -> Vec<f64> {
    let comps = spec.components();
    let in_block = |c: &Component<'_>, block: usize| {
        layout.strata().is_empty() || c.label == Some(layout.strata()[block].as_str())
    };
    layout
        .coords()
        .into_iter()
        .map(|coord| match coord {
            Coord::Prob { cell, block } => comps
                .iter()
                .filter(|c| in_block(c, block))
                .map(|c| c.weight * c.design.unit_prob(cell))
                .sum(),
            Coord::H { comp, cell, block } => comps
                .iter()
                .filter(|c| in_block(c, block))
                .map(|c| c.weight * c.design.unit_prob(cell) * component_h(c, layout, comp, cell))
                .sum(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AssignmentDesign, NoiseSpec};

    fn spec(types: JointTypeDistribution) -> DgpSpec {
        let outcomes = OutcomeModel::from_fn(NoiseSpec::None, |a, b, d, dp| {
            a.index() as f64 + 0.1 * b.index() as f64 + d as u8 as f64 + 2.0 * dp as u8 as f64
        })
        .unwrap();
        DgpSpec::new(types, outcomes, AssignmentDesign::simple([0.25; 4]).unwrap(), 1, 10).unwrap()
    }

    #[test]
    fn never_takers_never_treated() {
        let s = spec(JointTypeDistribution::point_mass(ComplianceType::NT));
        for cell in Cell::ALL {
            for st in [Statistic::Di, Statistic::Dj, Statistic::DiDj, Statistic::YDi, Statistic::YDj] {
                assert_eq!(population_expectation(&s, cell, st), 0.0);
            }
        }
    }

    #[test]
    fn uniform_take_up_when_peer_assigned() {
        let s = spec(JointTypeDistribution::uniform());
        let v = population_expectation(&s, Cell::C01, Statistic::Di);
        assert!((v - 0.4).abs() < 1e-15);
    }

    #[test]
    fn expansion_matches_enumeration() {
        let s = spec(JointTypeDistribution::uniform());
        for cell in Cell::ALL {
            let a = component_expectation(&s.types, &s.outcomes, cell, Statistic::Y);
            let b = expansion_expectation(&s.types, &s.outcomes, cell);
            assert!((a - b).abs() < 1e-12);
        }
    }
}
