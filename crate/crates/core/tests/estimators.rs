mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::{compare, load_fixture, rel_close};
use spillover_iv::estimators::{
    estimate_all, itt_weight_decomposition, tsls_spillover, EstimandError, EstimateOptions, IttKind,
};
use spillover_iv::ingest::{Dataset, HouseholdRecord, UnitObs};
use spillover_iv::model::{
    AssignmentDesign, ComplianceType, JointTypeDistribution, NoiseSpec, OutcomeModel,
};
use spillover_iv::moments::EstimateReport;
use spillover_iv::oracle::{mc_study, simulate, truth, DgpSpec, McOptions};

fn estimate(ds: &Dataset) -> EstimateReport {
    estimate_all(ds, &EstimateOptions::default())
}

fn unit(y: f64, d: bool, z: bool) -> UnitObs {
    UnitObs { y, d, z }
}

#[test]
fn perfect_compliance_recovers_linear_coefficients() {
    let spec = DgpSpec::new(
        JointTypeDistribution::point_mass(ComplianceType::C),
        OutcomeModel::from_fn(NoiseSpec::None, |_, _, d, dp| 1.0 + 2.0 * d as u8 as f64 + 3.0 * dp as u8 as f64)
            .unwrap(),
        AssignmentDesign::simple([0.25; 4]).unwrap(),
        3,
        400,
    )
    .unwrap();
    let t = tsls_spillover(&simulate(&spec), 0.95).unwrap();
    assert!(t.beta3_identified);
    for (b, want) in t.beta.iter().zip([1.0, 2.0, 3.0, 0.0]) {
        assert!((b - want).abs() < 1e-12, "{:?}", t.beta);
    }
}

/// Unit-level IV solve with a generic dense solver.
fn reference_iv(ds: &Dataset) -> Vec<f64> {
    let n = 2 * ds.n_groups();
    let mut z = DMatrix::zeros(n, 4);
    let mut x = DMatrix::zeros(n, 4);
    let mut y = DVector::zeros(n);
    for (g, r) in ds.records().iter().enumerate() {
        for k in 0..2 {
            let (me, peer) = (&r.units[k], &r.units[1 - k]);
            let row = 2 * g + k;
            let f = |b: bool| b as u8 as f64;
            for (j, v) in [1.0, f(me.z), f(peer.z), f(me.z && peer.z)].into_iter().enumerate() {
                z[(row, j)] = v;
            }
            for (j, v) in [1.0, f(me.d), f(peer.d), f(me.d && peer.d)].into_iter().enumerate() {
                x[(row, j)] = v;
            }
            y[row] = me.y;
        }
    }
    let zx = z.transpose() * &x;
    let zy = z.transpose() * &y;
    zx.lu().solve(&zy).unwrap().iter().copied().collect()
}

#[test]
fn tsls_matches_dense_reference_and_ratio_estimators() {
    let spec = load_fixture("calibration.toml").with_groups(3000);
    let ds = simulate(&spec);
    let t = tsls_spillover(&ds, 0.95).unwrap();
    let reference = reference_iv(&ds);
    for (a, b) in t.beta.iter().zip(&reference) {
        assert!(rel_close(*a, *b, 1e-9), "{:?} vs {reference:?}", t.beta);
    }
    let rep = estimate(&ds);
    assert!(rel_close(t.beta[0], rep.get("mean_y_00").unwrap().value, 1e-10));
    assert!(rel_close(t.beta[1], rep.get("late_direct").unwrap().value, 1e-10));
    assert!(rel_close(t.beta[2], rep.get("late_indirect").unwrap().value, 1e-10));
}

#[test]
fn tsls_beta3_tracks_oracle() {
    let spec = load_fixture("calibration.toml").with_groups(20_000);
    let want = truth(&spec).get("tsls_beta3").unwrap();
    let rep = estimate(&simulate(&spec));
    let row = rep.get("tsls_beta3").unwrap();
    assert!((row.value - want).abs() < 4.0 * row.std_error, "{} vs {want}", row.value);
}

#[test]
fn tsls_drops_interaction_without_joint_take_up() {
    let spec = load_fixture("application_like.toml");
    let ds = simulate(&spec);
    let t = tsls_spillover(&ds, 0.95).unwrap();
    assert!(!t.beta3_identified);
    assert_eq!(t.beta.len(), 3);
    let rep = estimate(&ds);
    assert!(matches!(rep.omission("tsls_beta3"), Some(EstimandError::DegenerateDenominator(_))));
}

#[test]
fn fixture_estimates_track_truth() {
    for name in ["uniform_types.toml", "calibration.toml"] {
        let spec = load_fixture(name).with_groups(20_000);
        let cmp = compare(&estimate(&simulate(&spec)), &truth(&spec));
        assert!(cmp.len() > 10);
        let misses: Vec<_> = cmp.iter().filter(|c| !c.within(4.5)).collect();
        assert!(misses.is_empty(), "{name}: {misses:?}");
    }
}

#[test]
fn osn_violation_blocks_only_osn_rows() {
    let spec = load_fixture("uniform_types.toml");
    let rep = estimate(&simulate(&spec));
    for name in ["late_direct", "late_indirect", "het_own", "e_y00_c"] {
        assert!(matches!(rep.omission(name), Some(EstimandError::OSNViolated { .. })), "{name}");
    }
    for name in ["p_at", "p_c", "itt_direct_0", "itt_total", "mean_y_11", "tsls_beta1"] {
        assert!(rep.get(name).is_some(), "{name}");
    }
    assert!(rep.warnings.iter().any(|w| w.starts_with("OSNViolated")));
    assert!(rep.diagnostic("osn_hard_count").unwrap() > 0.0);
}

#[test]
fn estimand_selection_by_name_and_group() {
    let ds = simulate(&load_fixture("calibration.toml").with_groups(500));
    let opts = EstimateOptions {
        select: Some(vec!["late".into(), "p_c".into()]),
        ..Default::default()
    };
    let rep = estimate_all(&ds, &opts);
    let mut names: Vec<_> = rep.rows.iter().map(|r| r.name.as_str()).collect();
    names.sort();
    assert_eq!(names, ["late_direct", "late_indirect", "p_c"]);
}

#[test]
fn negative_shares_warn_and_clamp_on_request() {
    // AT share estimated from cell (0,0) take-up; force GC share negative.
    let mut recs = Vec::new();
    for g in 0..40 {
        let (zi, zj) = [(false, false), (true, false), (false, true), (true, true)][g % 4];
        let d = |z: bool| z && !(zi && zj && g % 8 == 3);
        recs.push(HouseholdRecord::new(
            &format!("h{g:03}"),
            [unit(g as f64, d(zi), zi), unit(1.0, d(zj), zj)],
            None,
        ));
    }
    let ds = Dataset::new(recs).unwrap();
    let rep = estimate(&ds);
    let gc = rep.get("p_gc").unwrap().value;
    assert!(gc < 0.0);
    assert!(rep.warnings.iter().any(|w| w.starts_with("NegativeShare: p_gc")));
    let clamped = estimate_all(
        &ds,
        &EstimateOptions {
            clamp_shares: true,
            ..Default::default()
        },
    );
    assert_eq!(clamped.get("p_gc").unwrap().value, 0.0);
}

#[test]
fn empty_cell_is_a_typed_omission() {
    let recs = (0..10)
        .map(|g| {
            let zi = g % 2 == 0;
            HouseholdRecord::new(&format!("h{g}"), [unit(1.0, zi, zi), unit(0.0, !zi, !zi)], None)
        })
        .collect();
    let rep = estimate(&Dataset::new(recs).unwrap());
    assert!(matches!(rep.omission("p_at"), Some(EstimandError::EmptyCell(_))));
    assert!(rep.get("mean_y_10").is_some());
}

#[test]
fn degenerate_first_stage_is_excluded_in_calibration() {
    let spec = DgpSpec::new(
        JointTypeDistribution::point_mass(ComplianceType::NT),
        OutcomeModel::zeros(NoiseSpec::Gaussian { scale: 1.0, rho: 0.0 }),
        AssignmentDesign::simple([0.25; 4]).unwrap(),
        1,
        200,
    )
    .unwrap();
    let rep = mc_study(
        &spec,
        &["late_direct".to_string(), "mean_y_00".to_string()],
        &McOptions {
            replications: 20,
            workers: 2,
            ci_level: 0.95,
        },
    );
    let late = rep.get("late_direct").unwrap();
    assert_eq!(late.n_reps, 0);
    assert_eq!(late.excluded.get("degenerate_denominator"), Some(&20));
    assert_eq!(rep.get("mean_y_00").unwrap().n_reps, 20);
}

#[test]
fn direct_weights_sum_matches_type_events() {
    let dist = JointTypeDistribution::independent([0.1, 0.2, 0.4, 0.2, 0.1]).unwrap();
    let w = itt_weight_decomposition(&dist, IttKind::Direct).unwrap();
    // P[C] + P[SC] + P[SC] * (P[GC] + P[NT] + P[AT]).
    assert!((w.raw_sum - (0.6 + 0.2 * 0.4)).abs() < 1e-12);
    assert!((w.rescaled_sum - 17.0 / 15.0).abs() < 1e-12);
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    let obs = (-5.0..5.0f64, any::<bool>());
    prop::collection::vec((obs.clone(), obs, 0usize..4), 24..60).prop_map(|rows| {
        let recs = rows
            .into_iter()
            .enumerate()
            .map(|(g, ((y1, d1), (y2, d2), c))| {
                // Every cell appears at least a few times.
                let c = if g < 8 { g % 4 } else { c };
                let (zi, zj) = [(false, false), (true, false), (false, true), (true, true)][c];
                HouseholdRecord::new(&format!("h{g:04}"), [unit(y1, d1, zi), unit(y2, d2, zj)], None)
            })
            .collect();
        Dataset::new(recs).unwrap()
    })
}

fn same_rows(a: &EstimateReport, b: &EstimateReport, tol: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(a.rows.len(), b.rows.len());
    for (x, y) in a.rows.iter().zip(&b.rows) {
        prop_assert_eq!(&x.name, &y.name);
        prop_assert!(rel_close(x.value, y.value, tol), "{} {} {}", x.name, x.value, y.value);
        prop_assert!(rel_close(x.std_error, y.std_error, 1e-6), "{} se", x.name);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unit_relabeling_leaves_estimates_unchanged(ds in arb_dataset()) {
        let swapped = Dataset::new(ds.records().iter().map(|r| r.swapped()).collect()).unwrap();
        same_rows(&estimate(&ds), &estimate(&swapped), 1e-9)?;
    }

    #[test]
    fn household_order_is_irrelevant(ds in arb_dataset()) {
        let n = ds.n_groups();
        let renamed = Dataset::new(
            ds.records()
                .iter()
                .enumerate()
                .map(|(g, r)| {
                    let mut r = r.clone();
                    r.group_id = format!("k{:04}", n - g);
                    r
                })
                .collect(),
        )
        .unwrap();
        same_rows(&estimate(&ds), &estimate(&renamed), 1e-9)?;
    }

    #[test]
    fn outcome_affine_map_scales_effects(ds in arb_dataset(), a in -3.0..3.0f64, b in 0.2..4.0f64) {
        let base = estimate(&ds);
        let moved = estimate(&ds.map_outcome(a, b));
        for row in &base.rows {
            let Some(m) = moved.get(&row.name) else { continue };
            let n = row.name.as_str();
            if n.starts_with("itt_") || n.starts_with("late_") || n.starts_with("het_") || n == "tsls_beta1" || n == "tsls_beta2" || n == "tsls_beta3" {
                prop_assert!(rel_close(m.value, b * row.value, 1e-8), "{n}");
                prop_assert!(rel_close(m.std_error, b * row.std_error, 1e-5), "{n} se");
            } else if n.starts_with("mean_y_") || n == "e_y00" || n == "tsls_beta0" {
                prop_assert!(rel_close(m.value, a + b * row.value, 1e-8), "{n}");
            } else if n.starts_with("p_") || n.starts_with("first_stage") {
                prop_assert!(rel_close(m.value, row.value, 1e-12), "{n}");
            }
        }
    }

    #[test]
    fn direct_weights_nonnegative_and_bounded(
        m in prop::array::uniform5(0.01..1.0f64)
    ) {
        let s: f64 = m.iter().sum();
        let marg = m.map(|v| v / s);
        let dist = JointTypeDistribution::independent(marg).unwrap();
        let w = itt_weight_decomposition(&dist, IttKind::Direct).unwrap();
        prop_assert!(w.weights.iter().all(|&v| v >= 0.0));
        let (at, sc, c, gc, nt) = (marg[0], marg[1], marg[2], marg[3], marg[4]);
        prop_assert!((w.raw_sum - (c + sc + sc * (gc + nt + at))).abs() < 1e-12);
        prop_assert!(w.raw_sum <= 1.0 + 1e-12);
    }
}
