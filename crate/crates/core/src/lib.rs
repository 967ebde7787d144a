//! Simulator and training harness for on-chip learning in memristor
//! crossbars programmed exclusively with small sub-1 V reset pulses.
//!
//! The crate is organised bottom-up:
//!
//! * [`device`] replays per-device reset trajectories, handles
//!   reinitialization, retention drift and per-pulse energy.
//! * [`crossbar`] pairs devices into signed weights, runs the analog
//!   multiply-accumulate and executes single-pulse update plans.
//! * [`rules`] produces gradients (layer-wise backpropagation, supervised
//!   Forward-Forward, competitive forward) and turns them into sign-only
//!   pulse plans.
//! * [`trainer`] orchestrates hardware-in-the-loop style training,
//!   evaluation, aging studies and pulse statistics.
//! * [`data`] loads and generates feature datasets.
//! * [`energy`] and [`stats`] account for programming/read/MAC energy and
//!   run the cross-method significance tests.

// Parameter checks use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characterize;
pub mod config;
pub mod crossbar;
pub mod data;
pub mod device;
pub mod energy;
pub mod error;
pub mod gradcheck;
pub mod rules;
pub mod stats;
pub mod trainer;

pub use crossbar::{
    CrossbarArray, DifferentialPair, ExhaustionPolicy, Polarity, PulseReport, ReadModelParams, UpdateAction, UpdatePlan,
};
pub use data::{FeatureDataset, SplitSpec};
pub use device::{
    DeviceState, DeviceTechParams, DriftModelParams, ResetTrajectory, SyntheticTrajectoryParams, TrajectoryBank,
};
pub use energy::EnergyLedger;
pub use error::{Error, ErrorKind, Result};
pub use rules::{CfParams, GradientBatch, LayerSpec, SffParams};
pub use trainer::{Algorithm, Schedule, TrainingRun};

/// One microsiemens, in siemens.
pub const MICRO_SIEMENS: f64 = 1e-6;

/// Deterministic RNG used for every stochastic component.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a label.
///
/// SplitMix64 finalizer over the combination; stable across releases so
/// manifests stay replayable.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
