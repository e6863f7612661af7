//! Exact values of every estimand, computed from type-conditional means.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::population::component_expectation;
use super::spec::{Component, DgpSpec};
use crate::estimators::{itt_weight_decomposition, solve_linear, IttKind};
use crate::model::{Cell, ComplianceType, Statistic};
use crate::moments::sig15;

use ComplianceType::{AT, C, GC, NT, SC};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationTruth {
    pub values: BTreeMap<String, f64>,
    /// Estimands without a truth, with the reason.
    pub omitted: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl PopulationTruth {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    fn set(&mut self, name: impl Into<String>, v: f64) {
        self.values.insert(name.into(), v);
    }

    fn omit(&mut self, name: impl Into<String>, why: &str) {
        self.omitted.insert(name.into(), why.to_string());
    }

    fn set_or_omit(&mut self, name: &str, v: Option<f64>, why: &str) {
        match v {
            Some(v) => self.set(name, v),
            None => self.omit(name, why),
        }
    }

    pub fn to_json(&self) -> Value {
        let values: serde_json::Map<String, Value> = self
            .values
            .iter()
            .map(|(k, v)| (k.clone(), json!(sig15(*v))))
            .collect();
        json!({
            "values": values,
            "omitted": self.omitted,
            "warnings": self.warnings,
        })
    }
}

/// `sum_{own in a, peer in b} p(own, peer) mean(own, peer, d, d')`.
pub fn type_mean(c: &Component<'_>, own: &[ComplianceType], peer: &[ComplianceType], d: bool, dp: bool) -> f64 {
    let mut s = 0.0;
    for &a in own {
        for &b in peer {
            let p = c.types.get(a, b);
            if p > 0.0 {
                s += p * c.outcomes.mean(a, b, d, dp);
            }
        }
    }
    s
}

const ALL: &[ComplianceType] = &ComplianceType::ALL;

/// Local averages under one-sided noncompliance for one component:
/// `[E[Y(0,0)], E[Y(1,0) 1(C)], E[Y(0,1) 1(C_peer)], E[Y(0,0) 1(C)],
/// E[Y(0,0) 1(C_peer)], E[Y(0,0) 1(NT,NT)]]`.
pub fn local_averages(c: &Component<'_>) -> [f64; 6] {
    [
        type_mean(c, ALL, ALL, false, false),
        type_mean(c, &[C], ALL, true, false),
        type_mean(c, ALL, &[C], false, true),
        type_mean(c, &[C], ALL, false, false),
        type_mean(c, ALL, &[C], false, false),
        type_mean(c, &[NT], &[NT], false, false),
    ]
}

/// Probability limit of the just-identified 2SLS coefficients over a set of
/// components, and whether the interaction is kept.
pub fn population_tsls(comps: &[Component<'_>]) -> Option<(Vec<f64>, bool)> {
    let moment = |cell: Cell, st: Statistic| -> f64 {
        comps
            .iter()
            .map(|c| c.weight * c.design.unit_prob(cell) * component_expectation(c.types, c.outcomes, cell, st))
            .sum()
    };
    let p11: f64 = comps.iter().map(|c| c.weight * c.design.unit_prob(Cell::C11)).sum();
    let keep = p11 > 0.0 && moment(Cell::C11, Statistic::DiDj) / p11 > 1e-8;
    let k = if keep { 4 } else { 3 };
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    let xs = [Statistic::One, Statistic::Di, Statistic::Dj, Statistic::DiDj];
    let probs = Cell::ALL.map(|cell| comps.iter().map(|c| c.weight * c.design.unit_prob(cell)).sum::<f64>());
    if keep && probs.iter().all(|&p| p > 0.0) {
        // Saturated instruments: one equation per cell in conditional means,
        // which stays well conditioned when a cell is rare.
        for (r, cell) in Cell::ALL.into_iter().enumerate() {
            for j in 0..4 {
                a[r][j] = moment(cell, xs[j]) / probs[r];
            }
            b[r] = moment(cell, Statistic::Y) / probs[r];
        }
        return solve_linear(a, b).map(|beta| (beta, keep));
    }
    for cell in Cell::ALL {
        if !keep && cell == Cell::C11 {
            continue;
        }
        let zt = [1.0, cell.own as u8 as f64, cell.peer as u8 as f64, (cell.own && cell.peer) as u8 as f64];
        for i in 0..k {
            if zt[i] == 0.0 {
                continue;
            }
            for j in 0..k {
                a[i][j] += zt[i] * moment(cell, xs[j]);
            }
            b[i] += zt[i] * moment(cell, Statistic::Y);
        }
    }
    solve_linear(a, b).map(|beta| (beta, keep))
}

/// `beta3` assembled from type-conditional contrasts: heterogeneity of the
/// own and peer effects between group compliers and compliers, plus the
/// interaction among pairs treated at (1,1).
pub fn beta3_decomposition(c: &Component<'_>) -> Option<f64> {
    let treated = [C, GC];
    let e_dd = c.types.event(&treated, &treated);
    if e_dd <= 0.0 {
        return None;
    }
    let p_c = c.types.marginal(C);
    let p_gc = c.types.marginal(GC);
    let own_effect = |t: ComplianceType| {
        (type_mean(c, &[t], ALL, true, false) - type_mean(c, &[t], ALL, false, false)) / c.types.marginal(t)
    };
    let peer_effect = |t: ComplianceType| {
        (type_mean(c, ALL, &[t], false, true) - type_mean(c, ALL, &[t], false, false)) / c.types.marginal(t)
    };
    let (own_term, peer_term) = if p_gc > 0.0 && p_c > 0.0 {
        (
            (own_effect(GC) - own_effect(C)) * p_gc / e_dd,
            (peer_effect(GC) - peer_effect(C)) * p_gc / e_dd,
        )
    } else {
        (0.0, 0.0)
    };
    let interaction = (type_mean(c, &treated, &treated, true, true)
        - type_mean(c, &treated, &treated, true, false)
        - type_mean(c, &treated, &treated, false, true)
        + type_mean(c, &treated, &treated, false, false))
        / e_dd;
    Some(own_term + peer_term + interaction)
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den.abs() > 1e-12).then(|| num / den)
}

const TARGETS: [&str; 5] = ["y00", "y10_c", "y01_cpeer", "y00_c", "y00_cpeer"];

/// Exact value of every estimand the spec identifies.
pub fn truth(spec: &DgpSpec) -> PopulationTruth {
    let mut t = PopulationTruth {
        warnings: spec.warnings(),
        ..Default::default()
    };
    let comps = spec.components();
    let mix = |f: &dyn Fn(&Component<'_>) -> f64| comps.iter().map(|c| c.weight * f(c)).sum::<f64>();
    let randomized = spec.unconditionally_randomized();
    let osn = spec.satisfies_osn();

    let m = spec.marginals();
    let pooled = [
        "p_at",
        "p_sc",
        "p_c",
        "p_gc",
        "p_nt",
        "p_at_at",
        "p_nt_nt",
        "p_joint_identified_sum",
        "first_stage",
        "mean_y_00",
        "mean_y_10",
        "mean_y_01",
        "mean_y_11",
        "itt_direct_0",
        "itt_direct_1",
        "itt_indirect_0",
        "itt_indirect_1",
        "itt_total",
        "itt_naive",
        "first_stage_naive",
        "late_naive",
        "tsls_beta0",
        "tsls_beta1",
        "tsls_beta2",
        "tsls_beta3",
    ];
    if !randomized {
        for name in pooled {
            t.omit(name, "assignment depends on the covariate");
        }
    } else {
        for (i, name) in ["p_at", "p_sc", "p_c", "p_gc", "p_nt"].iter().enumerate() {
            t.set(*name, m[i]);
        }
        t.set("p_at_at", mix(&|c| c.types.get(AT, AT)));
        t.set("p_nt_nt", mix(&|c| c.types.get(NT, NT)));
        t.set("p_joint_identified_sum", mix(&|c| c.types.event(&[AT, SC], &[GC, NT])));
        t.set("first_stage", m[SC.index()] + m[C.index()]);

        let cm = |cell: Cell, st: Statistic| mix(&|c| component_expectation(c.types, c.outcomes, cell, st));
        let y: Vec<f64> = Cell::ALL.iter().map(|&c| cm(c, Statistic::Y)).collect();
        for cell in Cell::ALL {
            t.set(format!("mean_y_{}", cell.label()), y[cell.index()]);
        }
        let yc = |c: Cell| y[c.index()];
        t.set("itt_direct_0", yc(Cell::C10) - yc(Cell::C00));
        t.set("itt_direct_1", yc(Cell::C11) - yc(Cell::C01));
        t.set("itt_indirect_0", yc(Cell::C01) - yc(Cell::C00));
        t.set("itt_indirect_1", yc(Cell::C11) - yc(Cell::C10));
        t.set("itt_total", yc(Cell::C11) - yc(Cell::C00));

        let pu = |cell: Cell| comps.iter().map(|c| c.weight * c.design.unit_prob(cell)).sum::<f64>();
        let marginal_mean = |st: Statistic, own: bool| {
            let (a, b) = (Cell::new(own, false), Cell::new(own, true));
            ratio(pu(a) * cm(a, st) + pu(b) * cm(b, st), pu(a) + pu(b))
        };
        let naive = |st: Statistic| Some(marginal_mean(st, true)? - marginal_mean(st, false)?);
        let (itt_n, fs_n) = (naive(Statistic::Y), naive(Statistic::Di));
        let why = "an own-assignment arm is never assigned";
        t.set_or_omit("itt_naive", itt_n, why);
        t.set_or_omit("first_stage_naive", fs_n, why);
        t.set_or_omit(
            "late_naive",
            itt_n.zip(fs_n).and_then(|(a, b)| ratio(a, b)),
            "naive first stage is zero",
        );

        match population_tsls(&comps) {
            Some((beta, keep)) => {
                for (i, b) in beta.iter().enumerate() {
                    t.set(format!("tsls_beta{i}"), *b);
                }
                if !keep {
                    t.omit("tsls_beta3", "no joint take-up in cell (1,1)");
                }
            }
            None => {
                for i in 0..4 {
                    t.omit(format!("tsls_beta{i}"), "first stage is rank deficient");
                }
            }
        }
    }

    let osn_names = [
        "e_y00",
        "e_y10_c",
        "e_y01_cpeer",
        "e_y00_c",
        "e_y00_cpeer",
        "e_y00_ntnt",
        "mean_y00_given_ntnt",
        "late_direct",
        "late_indirect",
        "het_own",
        "het_peer",
    ];
    if !osn || !randomized {
        let why = if !osn {
            "requires one-sided noncompliance"
        } else {
            "assignment depends on the covariate"
        };
        for n in osn_names {
            t.omit(n, why);
        }
    } else {
        let la: Vec<f64> = (0..6).map(|k| mix(&|c| local_averages(c)[k])).collect();
        for (n, v) in osn_names.iter().zip(&la) {
            t.set(*n, *v);
        }
        let p_c = m[C.index()];
        let p_ntnt = mix(&|c| c.types.get(NT, NT));
        t.set_or_omit("mean_y00_given_ntnt", ratio(la[5], p_ntnt), "P[NT,NT] is zero");
        let why = "P[C] is zero";
        t.set_or_omit("late_direct", ratio(la[1] - la[3], p_c), why);
        t.set_or_omit("late_indirect", ratio(la[2] - la[4], p_c), why);
        let het = |num: f64| Some(ratio(num, p_c)? - ratio(la[0] - num, 1.0 - p_c)?);
        t.set_or_omit("het_own", het(la[3]), "P[C] is 0 or 1");
        t.set_or_omit("het_peer", het(la[4]), "P[C] is 0 or 1");
    }

    if spec.strata.is_empty() {
        for (kind, label) in [
            (IttKind::Direct, "direct"),
            (IttKind::Indirect, "indirect"),
            (IttKind::Total, "total"),
        ] {
            if let Ok(w) = itt_weight_decomposition(&spec.types, kind) {
                for (k, v) in w.rescaled.iter().enumerate() {
                    t.set(format!("weight_{label}_rescaled_{k}"), *v);
                }
                t.set(format!("weight_{label}_raw_sum"), w.raw_sum);
                t.set(format!("weight_{label}_rescaled_sum"), w.rescaled_sum);
            }
        }
    } else {
        conditional_truths(&mut t, &comps, osn);
    }
    t
}

fn conditional_truths(t: &mut PopulationTruth, comps: &[Component<'_>], osn: bool) {
    let mut names = Vec::new();
    let mut gs = vec!["y".to_string()];
    for c in comps {
        let a = c.label.unwrap_or_default();
        gs.push(format!("1(x={a})"));
        gs.push(format!("y*1(x={a})"));
        for n in ["cond_p_c", "cond_p_gc", "cond_p_nt", "cond_complier_share"] {
            names.push(format!("{n}[x={a}]"));
        }
    }
    for g in &gs {
        for tgt in TARGETS {
            names.push(format!("cond_{tgt}[g={g}]"));
        }
    }
    if !osn {
        for n in names {
            t.omit(n, "requires one-sided noncompliance");
        }
        return;
    }

    let total_c: f64 = comps.iter().map(|c| c.weight * c.types.marginal(C)).sum();
    let mut pooled = [0.0; 5];
    for c in comps {
        let a = c.label.unwrap_or_default();
        let la = local_averages(c);
        let vals = [la[0], la[1], la[2], la[3], la[4]];
        let pc = c.types.marginal(C);
        for k in 0..5 {
            pooled[k] += c.weight * vals[k];
            t.set(format!("cond_{}[g=y*1(x={a})]", TARGETS[k]), c.weight * vals[k]);
            let ind = if k == 0 { c.weight } else { c.weight * pc };
            t.set(format!("cond_{}[g=1(x={a})]", TARGETS[k]), ind);
        }
        t.set(format!("cond_p_c[x={a}]"), pc);
        t.set(format!("cond_p_gc[x={a}]"), c.types.marginal(GC));
        t.set(format!("cond_p_nt[x={a}]"), c.types.marginal(NT));
        t.set_or_omit(
            &format!("cond_complier_share[x={a}]"),
            ratio(c.weight * pc, total_c),
            "P[C] is zero",
        );
    }
    for k in 0..5 {
        t.set(format!("cond_{}[g=y]", TARGETS[k]), pooled[k]);
    }
}
