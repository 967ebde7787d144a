use std::sync::Arc;

use memgrad_core::crossbar::{CrossbarArray, DifferentialPair, ExhaustionPolicy, Polarity, ReadModelParams};
use memgrad_core::data::{make_cluster_task, split_indices, ClusterTaskParams, SplitSpec};
use memgrad_core::device::{
    apply_retention_drift, pearson_coefficient, pulse_energy, DeviceState, DeviceTechParams, DriftModelParams,
    ResetTrajectory, TrajectoryBank, TrajectorySource,
};
use memgrad_core::energy::{programming_energy, EnergyLedger};
use memgrad_core::rules::{sign_descent_step_float, threshold_sign_plan, PlanMode};
use memgrad_core::stats::{holm_adjusted, holm_bonferroni, welch_t_test};
use memgrad_core::{derive_seed, rng_from_seed, Error, MICRO_SIEMENS};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn trajectory(g: Vec<f64>) -> Arc<ResetTrajectory> {
    Arc::new(ResetTrajectory::new(g, TrajectorySource::Synthetic { seed: 0, index: 0 }).unwrap())
}

/// Non-increasing conductance sequences in siemens.
fn monotone(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    (40.0..120.0f64, prop::collection::vec(0.0..0.2f64, len)).prop_map(|(g0, steps)| {
        let mut g = vec![g0 * MICRO_SIEMENS];
        for s in steps {
            let last = *g.last().unwrap();
            g.push((last - s * MICRO_SIEMENS).max(0.0));
        }
        g
    })
}

fn two_pass_pearson(g: &[f64]) -> f64 {
    let n = g.len() as f64;
    let mx = (n + 1.0) / 2.0;
    let my = g.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (i, y) in g.iter().enumerate() {
        let dx = (i + 1) as f64 - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

proptest! {
    #[test]
    fn replay_follows_the_stored_sequence(g in monotone(1..300)) {
        let t = trajectory(g.clone());
        let mut d = DeviceState::new(t);
        prop_assert_eq!(d.conductance(), g[0]);
        for (n, expected) in g.iter().enumerate().skip(1) {
            prop_assert_eq!(d.apply_reset_pulse(u64::MAX).unwrap(), *expected);
            prop_assert_eq!(d.pulse_index(), n);
            prop_assert!(d.conductance() <= g[n - 1]);
        }
        prop_assert!(d.is_exhausted());
        let last = d.conductance();
        let exhausted = matches!(d.apply_reset_pulse(u64::MAX), Err(Error::NeedsReinit { .. }));
        prop_assert!(exhausted);
        prop_assert_eq!(d.conductance(), last);
        prop_assert_eq!(d.lifetime_pulses(), (g.len() - 1) as u64);
    }

    #[test]
    fn endurance_budget_is_never_exceeded(g in monotone(10..50), budget in 1u64..20) {
        let mut d = DeviceState::new(trajectory(g.clone()));
        let mut delivered = 0;
        for _ in 0..g.len() {
            match d.apply_reset_pulse(budget) {
                Ok(_) => delivered += 1,
                Err(Error::EnduranceExceeded { .. }) => break,
                Err(Error::NeedsReinit { .. }) => break,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
        prop_assert!(delivered as u64 <= budget);
        prop_assert_eq!(delivered as u64, budget.min(g.len() as u64 - 1));
    }

    #[test]
    fn pearson_matches_two_pass_and_stays_bounded(g in prop::collection::vec(-1e3..1e3f64, 2..400)) {
        let shifted: Vec<f64> = g.iter().map(|v| v + 1e3).collect();
        let r = pearson_coefficient(&trajectory(shifted.clone()), shifted.len()).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!((r - two_pass_pearson(&shifted)).abs() < 1e-9);
    }

    #[test]
    fn affine_trajectories_are_perfectly_correlated(
        a in 1e-6..1e-4f64, b in 1e-12..1e-8f64, n in 2usize..2000, up in any::<bool>()
    ) {
        let g: Vec<f64> = (0..n).map(|i| if up { a + b * i as f64 } else { a + b * (n - i) as f64 }).collect();
        let r = pearson_coefficient(&trajectory(g), n).unwrap();
        let expected = if up { 1.0 } else { -1.0 };
        prop_assert!((r - expected).abs() < 1e-9, "{}", r);
    }

    #[test]
    fn plan_has_one_action_per_entry_above_tau(
        grad in prop::collection::vec(-1.0..1.0f64, 12), tau in 0.0..0.9f64
    ) {
        let g = Array2::from_shape_vec((3, 4), grad.clone()).unwrap();
        let plan = threshold_sign_plan(g.view(), tau, PlanMode::Descent);
        prop_assert_eq!(plan.len(), grad.iter().filter(|v| v.abs() > tau).count());
        for a in plan.actions() {
            // Gradients are n_out x n_in; the array is n_in x n_out.
            let v = g[(a.col, a.row)];
            prop_assert!(v.abs() > tau);
            let expected = if v > 0.0 { Polarity::PulsePlus } else { Polarity::PulseMinus };
            prop_assert_eq!(a.polarity, expected);
        }
        let literal = threshold_sign_plan(g.view(), tau, PlanMode::Ascent);
        prop_assert_eq!(literal.len(), plan.len());
        for (a, b) in plan.actions().iter().zip(literal.actions()) {
            prop_assert_ne!(a.polarity, b.polarity);
        }
    }

    #[test]
    fn pulses_move_weights_against_the_gradient(
        grad in prop::collection::vec(-1.0..1.0f64, 6), tau in 0.0..0.5f64, seed in any::<u64>()
    ) {
        let bank = TrajectoryBank::new(
            (0..8)
                .map(|i| {
                    let g: Vec<f64> = (0..50).map(|k| (80.0 - 0.3 * k as f64 - i as f64) * MICRO_SIEMENS).collect();
                    ResetTrajectory::new(g, TrajectorySource::Synthetic { seed: 0, index: i }).unwrap()
                })
                .collect(),
        );
        let mut rng = rng_from_seed(seed);
        let mut array = CrossbarArray::initialize(3, 2, 6e4, DeviceTechParams::mac_array(), &bank, 10, &mut rng).unwrap();
        let before = array.map_weights();
        let g = Array2::from_shape_vec((2, 3), grad).unwrap();
        let plan = threshold_sign_plan(g.view(), tau, PlanMode::Descent);
        let report = array.apply_update_plan(&plan, ExhaustionPolicy::Skip, &bank, &mut rng).unwrap();
        prop_assert_eq!(report.applied(), plan.len());
        let after = array.map_weights();
        for ((r, c), w) in after.indexed_iter() {
            let gv = g[(c, r)];
            let dw = w - before[(r, c)];
            if gv.abs() > tau {
                prop_assert!(dw * gv < 0.0, "dw {} for grad {}", dw, gv);
            } else {
                prop_assert_eq!(dw, 0.0);
            }
        }
    }

    #[test]
    fn mac_is_the_differential_matrix_product(seed in any::<u64>(), x in prop::collection::vec(-1i8..=1, 5)) {
        let bank = TrajectoryBank::new(
            (0..4)
                .map(|i| {
                    let g: Vec<f64> = (0..200).map(|k| (90.0 - 0.1 * k as f64 - 3.0 * i as f64) * MICRO_SIEMENS).collect();
                    ResetTrajectory::new(g, TrajectorySource::Synthetic { seed: 1, index: i }).unwrap()
                })
                .collect(),
        );
        let mut rng = rng_from_seed(seed);
        let tech = DeviceTechParams::mac_array();
        let array = CrossbarArray::initialize(5, 3, 6e4, tech.clone(), &bank, 100, &mut rng).unwrap();
        let x = Array1::from_iter(x.into_iter().map(f64::from));
        let out = array.mac(x.view(), &ReadModelParams::noiseless(), &mut rng).unwrap();
        let (gp, gm) = array.conductances();
        let expected = (&gp - &gm).t().dot(&x) * tech.v_read;
        for (i, e) in out.currents.iter().zip(expected.iter()) {
            // Currents are ~1e-5 A; compare at 1e-12 of that scale.
            prop_assert!((i - e).abs() <= 1e-17, "{} vs {}", i, e);
        }
        for (y, i) in out.logits.iter().zip(out.currents.iter()) {
            prop_assert!((y - 6e4 * i).abs() <= 1e-12 * y.abs().max(1e-12));
        }
    }

    #[test]
    fn ledger_energy_is_the_sum_of_pulse_energies(g in prop::collection::vec(0.0..2e-4f64, 0..200)) {
        let mut ledger = EnergyLedger::new("mac-array");
        for v in &g {
            ledger.record_pulse(*v);
        }
        for tech in [DeviceTechParams::large_array(), DeviceTechParams::mac_array()] {
            let by_hand: f64 = g.iter().map(|v| pulse_energy(*v, &tech)).sum();
            let total = programming_energy(&ledger, &tech);
            prop_assert!((total - by_hand).abs() <= 1e-12 * by_hand.max(1e-30));
            let summary = ledger.summary();
            prop_assert_eq!(summary.pulse_count, g.len() as u64);
            prop_assert!((summary.programming_energy(&tech) - by_hand).abs() <= 1e-12 * by_hand.max(1e-30));
        }
    }

    #[test]
    fn drift_is_identity_at_day_zero_and_never_negative(g in 0.0..2e-4f64, days in 0.0..400.0f64, seed in any::<u64>()) {
        let params = DriftModelParams::default();
        let mut rng = rng_from_seed(seed);
        prop_assert_eq!(apply_retention_drift(g, 0.0, &params, &mut rng).unwrap(), g);
        let drifted = apply_retention_drift(g, days, &params, &mut rng).unwrap();
        prop_assert!(drifted >= 0.0 && drifted.is_finite());
        prop_assert!(apply_retention_drift(g, -1.0, &params, &mut rng).is_err());
    }

    #[test]
    fn drift_tail_weight_grows_with_time(a in 0.01..500.0f64, b in 0.01..500.0f64) {
        let params = DriftModelParams::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(params.at_horizon(lo).tail_weight <= params.at_horizon(hi).tail_weight + 1e-15);
    }

    #[test]
    fn welch_is_antisymmetric_and_p_is_a_probability(
        a in prop::collection::vec(-10.0..10.0f64, 2..12), b in prop::collection::vec(-10.0..10.0f64, 2..12)
    ) {
        let ab = welch_t_test(&a, &b).unwrap();
        let ba = welch_t_test(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab.p));
        prop_assert!((ab.t + ba.t).abs() < 1e-12 * ab.t.abs().max(1.0));
        prop_assert!((ab.p - ba.p).abs() < 1e-12);
    }

    #[test]
    fn holm_decisions_agree_with_adjusted_p(p in prop::collection::vec(0.0..1.0f64, 1..10), alpha in 0.001..0.2f64) {
        let adj = holm_adjusted(&p);
        let rej = holm_bonferroni(&p, alpha).unwrap();
        for ((raw, a), r) in p.iter().zip(&adj).zip(&rej) {
            prop_assert!(*a >= *raw && *a <= 1.0);
            prop_assert_eq!(*r, *a <= alpha);
        }
    }

    #[test]
    fn splits_partition_the_dataset(seed in any::<u64>(), stratified in any::<bool>(), n in 10usize..60) {
        let ds = make_cluster_task(&ClusterTaskParams { n_per_class: n, dim: 4, seed, ..Default::default() }).unwrap();
        let spec = SplitSpec { stratified, seed, ..Default::default() };
        let idx = split_indices(&ds, &spec).unwrap();
        let mut all: Vec<usize> = idx.train.iter().chain(&idx.val).chain(&idx.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(&ds, &spec).unwrap(), idx);
    }

    #[test]
    fn float_sign_step_moves_selected_entries_by_lr(
        grad in prop::collection::vec(-1.0..1.0f64, 8), tau in 0.0..0.9f64, lr in 1e-4..0.1f64
    ) {
        let g = Array2::from_shape_vec((2, 4), grad).unwrap();
        let mut w = Array2::<f64>::zeros((2, 4));
        sign_descent_step_float(&mut w, g.view(), lr, tau).unwrap();
        for (wv, gv) in w.iter().zip(g.iter()) {
            let expected = if gv.abs() > tau { -lr * gv.signum() } else { 0.0 };
            prop_assert_eq!(*wv, expected);
        }
    }

    #[test]
    fn derived_seeds_are_stable_and_distinct(base in any::<u64>(), s in 0u64..1000) {
        prop_assert_eq!(derive_seed(base, s), derive_seed(base, s));
        prop_assert_ne!(derive_seed(base, s), derive_seed(base, s + 1));
    }
}

#[test]
fn plan_targets_each_pair_at_most_once() {
    let bank = TrajectoryBank::new(vec![ResetTrajectory::new(
        vec![1e-4, 9e-5, 8e-5],
        TrajectorySource::Synthetic { seed: 0, index: 0 },
    )
    .unwrap()]);
    let mut rng = rng_from_seed(0);
    let pair = |rng: &mut _| DifferentialPair {
        plus: DeviceState::new(bank.draw(rng).unwrap()),
        minus: DeviceState::new(bank.draw(rng).unwrap()),
    };
    let pairs = vec![pair(&mut rng), pair(&mut rng)];
    let mut array = CrossbarArray::from_pairs(1, 2, pairs, 1.0, DeviceTechParams::mac_array()).unwrap();
    let g = ndarray::array![[5.0], [-5.0]];
    let plan = threshold_sign_plan(g.view(), 0.0, PlanMode::Descent);
    for _ in 0..2 {
        array
            .apply_update_plan(&plan, ExhaustionPolicy::Skip, &bank, &mut rng)
            .unwrap();
    }
    assert_eq!(array.pair(0, 0).plus.pulse_index(), 2);
    assert_eq!(array.pair(0, 1).minus.pulse_index(), 2);
    let report = array
        .apply_update_plan(&plan, ExhaustionPolicy::Skip, &bank, &mut rng)
        .unwrap();
    assert_eq!(report.skipped(), 2);
    let report = array
        .apply_update_plan(&plan, ExhaustionPolicy::AutoReinit, &bank, &mut rng)
        .unwrap();
    assert_eq!(report.reinits(), 2);
    assert_eq!(array.pair(0, 0).plus.pulse_index(), 1);
}
