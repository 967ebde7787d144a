//! Coarse grid search for the goodness thresholds on the float models of the
//! synthetic task. Selection uses mean validation accuracy over three seeds;
//! the test split is never consulted.
//!
//! The CF grid runs first; its winner fixes the cluster-head thresholds used
//! while searching the SFF layer thresholds.
//!
//! Run with `cargo run --release -p memgrad-core --example theta_grid`.

use memgrad_core::config::{FloatUpdate, RunConfig};
use memgrad_core::stats::mean_std;
use memgrad_core::trainer::{prepare_splits, run_repeats, Algorithm};

const SEEDS: usize = 3;
const SIGN_STEP: f64 = 1e-3;

fn val_accuracy(c: &RunConfig) -> f64 {
    let data = prepare_splits(c).expect("task");
    let runs = run_repeats(c, SEEDS, &data, None).expect("training");
    let accs: Vec<f64> = runs
        .iter()
        .map(|r| r.final_eval.as_ref().expect("trained").val_accuracy)
        .collect();
    mean_std(&accs).0
}

/// Sign steps with the device thresholds: the software twin of the pulse rule.
fn base(algorithm: Algorithm) -> RunConfig {
    RunConfig {
        algorithm,
        float_update: Some(FloatUpdate::Sign),
        lr: Some(SIGN_STEP),
        ..Default::default()
    }
}

fn main() {
    let grid = [0.1, 0.3, 1.0];
    println!("cf: theta_plus theta_minus val_accuracy");
    let mut best_cf = (0.0, 0.0, f64::NEG_INFINITY);
    for &tp in &grid {
        for &tm in &grid {
            let mut c = base(Algorithm::FloatCf);
            c.cf.theta_plus = tp;
            c.cf.theta_minus = tm;
            let acc = val_accuracy(&c);
            println!("cf {tp:>5} {tm:>5} {acc:.4}");
            if acc > best_cf.2 {
                best_cf = (tp, tm, acc);
            }
        }
    }
    println!(
        "cf best: theta_plus {} theta_minus {} ({:.4})",
        best_cf.0, best_cf.1, best_cf.2
    );

    println!("sff: theta_plus theta_minus val_accuracy");
    let mut best_sff = (0.0, 0.0, f64::NEG_INFINITY);
    for &tp in &[0.25, 0.5, 1.0, 2.0] {
        for &tm in &[0.25, 0.5, 1.0] {
            let mut c = base(Algorithm::FloatSff);
            c.cf.theta_plus = best_cf.0;
            c.cf.theta_minus = best_cf.1;
            c.sff.theta_plus = tp;
            c.sff.theta_minus = tm;
            let acc = val_accuracy(&c);
            println!("sff {tp:>5} {tm:>5} {acc:.4}");
            if acc > best_sff.2 {
                best_sff = (tp, tm, acc);
            }
        }
    }
    println!(
        "sff best: theta_plus {} theta_minus {} ({:.4})",
        best_sff.0, best_sff.1, best_sff.2
    );
}
