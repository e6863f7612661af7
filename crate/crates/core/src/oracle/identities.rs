//! Brute-force verification of the decomposition and identification
//! identities on a population.

use serde_json::{json, Value};

use super::population::{component_expectation, expansion_expectation, treatments};
use super::spec::{Component, DgpSpec};
use super::truth::{beta3_decomposition, local_averages, population_tsls, type_mean};
use crate::estimators::{itt_weight_decomposition, Contrast, IttKind};
use crate::model::{Cell, ComplianceType, Statistic};

use ComplianceType::{AT, C, GC, NT, SC};

/// Absolute tolerance for every identity.
pub const IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: String,
    pub status: CheckStatus,
    pub residual: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &IdentityCheck> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn count(&self, status: CheckStatus) -> usize {
        self.checks.iter().filter(|c| c.status == status).count()
    }

    pub fn max_residual(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.status != CheckStatus::NotApplicable)
            .map(|c| c.residual)
            .fold(0.0, f64::max)
    }

    fn compare(&mut self, name: String, lhs: f64, rhs: f64) {
        let residual = (lhs - rhs).abs();
        self.checks.push(IdentityCheck {
            name,
            status: if residual < IDENTITY_TOL {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            residual,
            detail: format!("lhs={lhs:.15e} rhs={rhs:.15e}"),
        });
    }

    fn skip(&mut self, name: String, why: &str) {
        self.checks.push(IdentityCheck {
            name,
            status: CheckStatus::NotApplicable,
            residual: 0.0,
            detail: why.to_string(),
        });
    }

    pub fn to_json(&self) -> Value {
        json!({
            "all_passed": self.all_passed(),
            "passed": self.count(CheckStatus::Pass),
            "failed": self.count(CheckStatus::Fail),
            "not_applicable": self.count(CheckStatus::NotApplicable),
            "max_residual": self.max_residual(),
            "checks": self.checks.iter().map(|c| json!({
                "name": c.name,
                "status": match c.status {
                    CheckStatus::Pass => "pass",
                    CheckStatus::Fail => "fail",
                    CheckStatus::NotApplicable => "not_applicable",
                },
                "residual": c.residual,
                "detail": c.detail,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Contrast weights found by walking every type pair and recording how the
/// pair's treatments move between the two cells.
pub fn brute_force_weights(c: &Component<'_>, kind: IttKind) -> [f64; 5] {
    let ((hz, hp), (lz, lp)) = kind.cells();
    let (hi, lo) = (Cell::new(hz, hp), Cell::new(lz, lp));
    let mut w = [0.0; 5];
    for (a, b, p) in c.types.iter() {
        let (th, tl) = (treatments(a, b, hi), treatments(a, b, lo));
        if th == tl {
            continue;
        }
        let k = Contrast::from_treatments(th, tl).expect("monotone treatments");
        w[Contrast::ALL.iter().position(|x| *x == k).unwrap()] += p;
    }
    w
}

/// ITT contrast as the event-weighted sum of type-conditional
/// potential-outcome contrasts.
fn itt_from_events(c: &Component<'_>, kind: IttKind) -> f64 {
    let mut s = 0.0;
    for (contrast, (own, peer)) in Contrast::ALL.into_iter().zip(kind.events()) {
        let ((h0, h1), (l0, l1)) = contrast.treatments();
        s += type_mean(c, own, peer, h0, h1) - type_mean(c, own, peer, l0, l1);
    }
    s
}

fn suffix(c: &Component<'_>) -> String {
    c.label.map(|l| format!("[x={l}]")).unwrap_or_default()
}

fn check_component(r: &mut IdentityReport, c: &Component<'_>) {
    let sx = suffix(c);
    let e = |cell: Cell, st: Statistic| component_expectation(c.types, c.outcomes, cell, st);
    let y = |cell: Cell| e(cell, Statistic::Y);
    let marg = c.types.marginals();

    for cell in Cell::ALL {
        r.compare(
            format!("outcome_expansion{sx}[{cell}]"),
            y(cell),
            expansion_expectation(c.types, c.outcomes, cell),
        );
    }

    // Decompositions of direct, indirect and total ITT.
    for (kind, label) in [
        (IttKind::Direct, "direct"),
        (IttKind::Indirect, "indirect"),
        (IttKind::Total, "total"),
    ] {
        let ((hz, hp), (lz, lp)) = kind.cells();
        r.compare(
            format!("itt_{label}_decomposition{sx}"),
            y(Cell::new(hz, hp)) - y(Cell::new(lz, lp)),
            itt_from_events(c, kind),
        );
        let bf = brute_force_weights(c, kind);
        let ev = kind.events().map(|(o, p)| c.types.event(o, p));
        let resid = bf.iter().zip(ev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        r.compare(format!("itt_{label}_weights{sx}"), resid, 0.0);
    }
    if let Ok(w) = itt_weight_decomposition(c.types, IttKind::Direct) {
        let claimed = marg[C.index()]
            + marg[SC.index()]
            + c.types.event(&[SC], &[GC])
            + c.types.event(&[SC], &[NT])
            + c.types.event(&[SC], &[AT]);
        r.compare(format!("itt_direct_weight_sum{sx}"), w.raw_sum, claimed);
    }

    // Naive ITT in terms of the cell-specific contrasts.
    let pu = |cell: Cell| c.design.unit_prob(cell);
    let (p1, p0) = (pu(Cell::C10) + pu(Cell::C11), pu(Cell::C00) + pu(Cell::C01));
    if p1 > 0.0 && p0 > 0.0 {
        let naive = (pu(Cell::C10) * y(Cell::C10) + pu(Cell::C11) * y(Cell::C11)) / p1
            - (pu(Cell::C00) * y(Cell::C00) + pu(Cell::C01) * y(Cell::C01)) / p0;
        let direct = y(Cell::C10) - y(Cell::C00);
        let total = y(Cell::C11) - y(Cell::C00);
        let indirect = y(Cell::C01) - y(Cell::C00);
        let three = direct * pu(Cell::C10) / p1 + total * pu(Cell::C11) / p1 - indirect * pu(Cell::C01) / p0;
        r.compare(format!("naive_itt{sx}"), naive, three);
    } else {
        r.skip(format!("naive_itt{sx}"), "an own-assignment arm has probability zero");
    }

    // Type shares from cell-wise take-up.
    let d = |cell: Cell| e(cell, Statistic::Di);
    let shares = [
        d(Cell::C00),
        d(Cell::C01) - d(Cell::C00),
        d(Cell::C10) - d(Cell::C01),
        d(Cell::C11) - d(Cell::C10),
        1.0 - d(Cell::C11),
    ];
    for (k, t) in ComplianceType::ALL.iter().enumerate() {
        r.compare(format!("type_share_{t}{sx}"), shares[k], marg[k]);
    }
    r.compare(format!("type_joint_at_at{sx}"), e(Cell::C00, Statistic::DiDj), c.types.get(AT, AT));
    r.compare(
        format!("type_joint_nt_nt{sx}"),
        e(Cell::C11, Statistic::NotDiNotDj),
        c.types.get(NT, NT),
    );
    r.compare(
        format!("type_joint_identified_sum{sx}"),
        e(Cell::C01, Statistic::DiNotDj),
        c.types.event(&[AT, SC], &[GC, NT]),
    );

    let osn_names = [
        "local_average_y00",
        "local_average_y10_c",
        "local_average_y01_cpeer",
        "local_average_y00_c",
        "local_average_y00_cpeer",
        "local_average_y00_ntnt",
        "local_average_p_ntnt",
        "late_direct",
        "late_indirect",
        "heterogeneity_own",
        "heterogeneity_peer",
        "tsls_closed_form",
        "tsls_beta3",
    ];
    if !c.types.satisfies_osn() {
        for n in osn_names {
            r.skip(format!("{n}{sx}"), "requires one-sided noncompliance");
        }
        return;
    }

    let la = local_averages(c);
    let rhs = [
        y(Cell::C00),
        e(Cell::C10, Statistic::YDi),
        e(Cell::C01, Statistic::YDj),
        y(Cell::C00) - e(Cell::C10, Statistic::YNotDi),
        y(Cell::C00) - e(Cell::C01, Statistic::YNotDj),
        e(Cell::C11, Statistic::YNotDiNotDj),
    ];
    for k in 0..6 {
        r.compare(format!("{}{sx}", osn_names[k]), la[k], rhs[k]);
    }
    r.compare(
        format!("local_average_p_ntnt{sx}"),
        c.types.get(NT, NT),
        e(Cell::C11, Statistic::NotDiNotDj),
    );

    let p_c = marg[C.index()];
    let fs_own = e(Cell::C10, Statistic::Di);
    let fs_peer = e(Cell::C01, Statistic::Dj);
    let closed_direct = (y(Cell::C10) - y(Cell::C00)) / fs_own;
    let closed_indirect = (y(Cell::C01) - y(Cell::C00)) / fs_peer;
    if p_c > 0.0 {
        r.compare(format!("late_direct{sx}"), (la[1] - la[3]) / p_c, closed_direct);
        r.compare(format!("late_indirect{sx}"), (la[2] - la[4]) / p_c, closed_indirect);
    } else {
        r.skip(format!("late_direct{sx}"), "P[C] is zero");
        r.skip(format!("late_indirect{sx}"), "P[C] is zero");
    }
    if p_c > 0.0 && p_c < 1.0 {
        let not_c = [GC, NT];
        let all = &ComplianceType::ALL;
        let own_lhs = type_mean(c, &[C], all, false, false) / p_c
            - type_mean(c, &not_c, all, false, false) / (1.0 - p_c);
        let peer_lhs = type_mean(c, all, &[C], false, false) / p_c
            - type_mean(c, all, &not_c, false, false) / (1.0 - p_c);
        let y00 = y(Cell::C00);
        let own_rhs = ((y00 - e(Cell::C10, Statistic::YNotDi)) / fs_own - y00) / (1.0 - fs_own);
        let peer_rhs = ((y00 - e(Cell::C01, Statistic::YNotDj)) / fs_peer - y00) / (1.0 - fs_peer);
        r.compare(format!("heterogeneity_own{sx}"), own_lhs, own_rhs);
        r.compare(format!("heterogeneity_peer{sx}"), peer_lhs, peer_rhs);
    } else {
        r.skip(format!("heterogeneity_own{sx}"), "P[C] is 0 or 1");
        r.skip(format!("heterogeneity_peer{sx}"), "P[C] is 0 or 1");
    }

    match population_tsls(std::slice::from_ref(c)) {
        Some((beta, keep)) if p_c > 0.0 => {
            let resid = [
                beta[0] - y(Cell::C00),
                beta[1] - closed_direct,
                beta[2] - closed_indirect,
            ]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
            r.compare(format!("tsls_closed_form{sx}"), resid, 0.0);
            match (keep, beta3_decomposition(c)) {
                (true, Some(b3)) => r.compare(format!("tsls_beta3{sx}"), beta[3], b3),
                _ => r.skip(format!("tsls_beta3{sx}"), "interaction not identified"),
            }
        }
        _ => {
            r.skip(format!("tsls_closed_form{sx}"), "first stage is rank deficient");
            r.skip(format!("tsls_beta3{sx}"), "first stage is rank deficient");
        }
    }
}

/// Run every identity on each homogeneous component of the spec.
pub fn verify_identities(spec: &DgpSpec) -> IdentityReport {
    let mut r = IdentityReport::default();
    for c in spec.components() {
        check_component(&mut r, &c);
    }
    r
}
