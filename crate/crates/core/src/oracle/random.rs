//! Randomized specs for property sweeps.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::spec::DgpSpec;
use crate::model::{AssignmentDesign, ComplianceType, JointTypeDistribution, NoiseSpec, OutcomeModel};

fn exchangeable_design(rng: &mut ChaCha8Rng, min_cell: f64, allow_empty_11: bool) -> AssignmentDesign {
    loop {
        let p00: f64 = rng.random_range(min_cell..0.7);
        let p11: f64 = if allow_empty_11 && rng.random_bool(0.2) {
            0.0
        } else {
            rng.random_range(min_cell..0.5)
        };
        let rest = 1.0 - p00 - p11;
        if rest / 2.0 >= min_cell.max(0.02) {
            return AssignmentDesign::simple([p00, rest / 2.0, rest / 2.0, p11]).expect("valid design");
        }
    }
}

fn symmetric_table(rng: &mut ChaCha8Rng, osn: bool) -> JointTypeDistribution {
    let mut p = [[0.0; 5]; 5];
    for a in 0..5 {
        for b in a..5 {
            let blocked = osn && (a < 2 || b < 2);
            let v: f64 = if blocked || rng.random_bool(0.1) {
                0.0
            } else {
                Exp1.sample(rng)
            };
            p[a][b] = v;
            p[b][a] = v;
        }
    }
    let total: f64 = p.iter().flatten().sum();
    if total == 0.0 {
        return JointTypeDistribution::point_mass(ComplianceType::C);
    }
    for v in p.iter_mut().flatten() {
        *v /= total;
    }
    // Renormalize away rounding so the table validates.
    let resid = 1.0 - p.iter().flatten().sum::<f64>();
    let (mut ka, mut kb) = (0, 0);
    for a in 0..5 {
        for b in a..5 {
            if p[a][b] > p[ka][kb] {
                (ka, kb) = (a, b);
            }
        }
    }
    if ka == kb {
        p[ka][ka] += resid;
    } else {
        p[ka][kb] += resid / 2.0;
        p[kb][ka] += resid / 2.0;
    }
    JointTypeDistribution::new(p).expect("valid table")
}

/// Fully random spec for the identity suite: arbitrary symmetric joint
/// table (one-sided in about a third of draws), arbitrary outcome grid.
pub fn random_identity_spec(rng: &mut ChaCha8Rng) -> DgpSpec {
    let osn = rng.random_bool(0.35);
    let types = symmetric_table(rng, osn);
    let mut grid = [[[[0.0; 2]; 2]; 5]; 5];
    for v in grid.iter_mut().flatten().flatten().flatten() {
        *v = rng.random_range(-3.0..3.0);
    }
    let outcomes = OutcomeModel::new(grid, NoiseSpec::Gaussian { scale: 1.0, rho: 0.0 }).expect("finite grid");
    DgpSpec::new(types, outcomes, exchangeable_design(rng, 0.0, true), rng.random(), 1000).expect("valid spec")
}

/// Spec for the estimator sweep: joint types mix independence with
/// same-type pairing, compliers hold between 15% and 75%, every assignment
/// cell has at least 10% mass, and half the draws are one-sided.
pub fn random_sweep_spec(rng: &mut ChaCha8Rng, groups: usize) -> DgpSpec {
    let osn = rng.random_bool(0.5);
    let p_c: f64 = rng.random_range(0.15..0.75);
    let mut m = [0.0; 5];
    m[2] = p_c;
    let mut rest: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
    if osn {
        rest[0] = 0.0;
        rest[1] = 0.0;
    }
    let s: f64 = rest.iter().sum();
    for (slot, v) in [0usize, 1, 3, 4].into_iter().zip(&rest) {
        m[slot] = (1.0 - p_c) * v / s;
    }
    let lambda: f64 = rng.random_range(0.0..0.5);
    let mut p = [[0.0; 5]; 5];
    for a in 0..5 {
        for b in 0..5 {
            p[a][b] = (1.0 - lambda) * m[a] * m[b] + if a == b { lambda * m[a] } else { 0.0 };
        }
    }
    let total: f64 = p.iter().flatten().sum();
    p[2][2] += 1.0 - total;
    let types = JointTypeDistribution::new(p).expect("valid table");

    let base: f64 = rng.random_range(-1.0..1.0);
    let type_shift: Vec<f64> = (0..5).map(|_| rng.random_range(-0.5..0.5)).collect();
    let peer_shift: Vec<f64> = (0..5).map(|_| rng.random_range(-0.3..0.3)).collect();
    let own_effect: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let peer_effect: f64 = rng.random_range(-1.0..1.0);
    let interaction: f64 = rng.random_range(-0.5..0.5);
    let noise = NoiseSpec::Gaussian {
        scale: rng.random_range(0.5..1.5),
        rho: rng.random_range(-0.5..0.5),
    };
    let outcomes = OutcomeModel::from_fn(noise, |a, b, d, dp| {
        let (d, dp) = (d as u8 as f64, dp as u8 as f64);
        base + type_shift[a.index()]
            + peer_shift[b.index()]
            + own_effect[a.index()] * d
            + peer_effect * dp
            + interaction * d * dp
    })
    .expect("finite grid");
    DgpSpec::new(types, outcomes, exchangeable_design(rng, 0.1, false), rng.random(), groups).expect("valid spec")
}
