//! Single-device behaviour under the reset-only programming regime.
//!
//! A device is a cursor into a [`ResetTrajectory`]: every reset pulse advances
//! it by exactly one recorded step. Trajectories come from a
//! [`TrajectoryBank`], either synthesized or loaded from a long-format CSV.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::{derive_seed, rng_from_seed, MICRO_SIEMENS};

/// Where a trajectory came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrajectorySource {
    Measured { file_id: String, device_id: u64 },
    Synthetic { seed: u64, index: usize },
}

/// Conductance (siemens) versus cumulative reset pulse count.
///
/// Index 0 is the post-initialization, low-resistance state.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetTrajectory {
    conductances: Vec<f64>,
    source: TrajectorySource,
}

impl ResetTrajectory {
    pub fn new(conductances: Vec<f64>, source: TrajectorySource) -> Result<Self> {
        if conductances.len() < 2 {
            return Err(Error::param(format!(
                "trajectory needs at least 2 points, got {}",
                conductances.len()
            )));
        }
        if let Some(bad) = conductances.iter().find(|g| !g.is_finite() || **g < 0.0) {
            return Err(Error::param(format!(
                "trajectory conductance must be finite and non-negative, got {bad}"
            )));
        }
        Ok(Self { conductances, source })
    }

    pub fn conductances(&self) -> &[f64] {
        &self.conductances
    }

    pub fn len(&self) -> usize {
        self.conductances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conductances.is_empty()
    }

    pub fn source(&self) -> &TrajectorySource {
        &self.source
    }

    /// Number of reset pulses this trajectory can absorb before reinit.
    pub fn max_pulses(&self) -> usize {
        self.conductances.len() - 1
    }

    pub fn is_monotone_nonincreasing(&self) -> bool {
        self.conductances.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Pulse amplitude/duration and lifetime limits for one device technology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceTechParams {
    pub name: String,
    /// Reset pulse amplitude across the device terminals (V).
    pub v_reset: f64,
    /// Reset pulse width (s).
    pub t_reset: f64,
    /// Effective read voltage magnitude at the device (V).
    pub v_read: f64,
    /// Read integration time (s).
    pub t_read: f64,
    pub max_pulses_between_reinit: u64,
    /// Lifetime reset pulses the device may receive.
    pub endurance_budget: u64,
    /// Energy charged per reinitialization (J). Reported separately.
    #[serde(default)]
    pub reinit_energy: f64,
    /// Bit-line/source-line levels used to synthesize ternary inputs.
    /// Bookkeeping only; the MAC uses `v_read`.
    #[serde(default)]
    pub bias: Option<BiasLevels>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasLevels {
    pub v_zero: f64,
    pub v_minus: f64,
    pub v_plus: f64,
}

impl BiasLevels {
    /// Effective input voltages for x in {-1, 0, +1}.
    pub fn effective_inputs(&self) -> [f64; 3] {
        [self.v_minus - self.v_zero, 0.0, self.v_plus - self.v_zero]
    }
}

impl DeviceTechParams {
    /// 128x64 1T1R array profile (0.9 V / 600 ns resets, 15 us bench reads).
    pub fn large_array() -> Self {
        Self {
            name: "large-array".into(),
            v_reset: 0.9,
            t_reset: 600e-9,
            v_read: 0.2,
            t_read: 15e-6,
            max_pulses_between_reinit: 5_000,
            endurance_budget: 1_500_000,
            reinit_energy: 0.0,
            bias: None,
        }
    }

    /// 32x64 2T1R MAC array profile with the low-voltage device flow.
    pub fn mac_array() -> Self {
        Self {
            name: "mac-array".into(),
            v_reset: 0.62,
            t_reset: 30e-9,
            v_read: 0.2,
            t_read: 15e-6,
            max_pulses_between_reinit: 5_000,
            endurance_budget: 1_500_000,
            reinit_energy: 0.0,
            bias: Some(BiasLevels {
                v_zero: 0.7,
                v_minus: 0.5,
                v_plus: 0.9,
            }),
        }
    }

    /// MAC array pulses with a short integrated-sensing read, for projections.
    pub fn mac_array_fast_read() -> Self {
        Self {
            name: "mac-array-fast-read".into(),
            t_read: 10e-9,
            ..Self::mac_array()
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "large-array" => Some(Self::large_array()),
            "mac-array" => Some(Self::mac_array()),
            "mac-array-fast-read" => Some(Self::mac_array_fast_read()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_reset > 0.0 && self.v_reset < 1.0) {
            return Err(Error::param(format!(
                "{}: reset amplitude must lie in (0, 1) V, got {}",
                self.name, self.v_reset
            )));
        }
        if !(self.t_reset > 0.0 && self.t_read > 0.0) {
            return Err(Error::param(format!("{}: durations must be positive", self.name)));
        }
        if !(self.v_read > 0.0) {
            return Err(Error::param(format!("{}: read voltage must be positive", self.name)));
        }
        if self.max_pulses_between_reinit == 0 || self.endurance_budget == 0 {
            return Err(Error::param(format!("{}: pulse limits must be positive", self.name)));
        }
        if !(self.reinit_energy >= 0.0) {
            return Err(Error::param(format!("{}: reinit energy must be >= 0", self.name)));
        }
        Ok(())
    }
}

/// Energy delivered by one reset pulse to a device of conductance `g`.
pub fn pulse_energy(g: f64, tech: &DeviceTechParams) -> f64 {
    g * tech.v_reset * tech.v_reset * tech.t_reset
}

/// Per-pulse decrement law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecrementFamily {
    TruncatedNormal,
    LogNormal,
}

/// Parameters of the synthetic trajectory generator. Conductances in siemens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticTrajectoryParams {
    pub g0_mean: f64,
    pub g0_sigma: f64,
    pub decrement_family: DecrementFamily,
    pub decrement_mean: f64,
    pub decrement_sigma: f64,
    /// Fraction of the trajectory (at its end) with amplified step noise.
    pub late_onset_fraction: f64,
    pub late_amplification: f64,
    /// Probability that a device is anomalous (steps with random sign).
    pub anomalous_prob: f64,
    /// Range of the per-step sign-flip probability of anomalous devices.
    pub anomalous_flip_min: f64,
    pub anomalous_flip_max: f64,
    /// Trajectory length, including the initial state.
    pub p_max: usize,
}

impl Default for SyntheticTrajectoryParams {
    fn default() -> Self {
        Self {
            g0_mean: 85.0 * MICRO_SIEMENS,
            g0_sigma: 6.0 * MICRO_SIEMENS,
            decrement_family: DecrementFamily::TruncatedNormal,
            decrement_mean: 0.006 * MICRO_SIEMENS,
            decrement_sigma: 0.008 * MICRO_SIEMENS,
            late_onset_fraction: 0.3,
            late_amplification: 2.5,
            anomalous_prob: 0.08,
            anomalous_flip_min: 0.3,
            anomalous_flip_max: 0.5,
            p_max: 5_001,
        }
    }
}

impl SyntheticTrajectoryParams {
    pub fn validate(&self) -> Result<()> {
        if self.p_max < 2 {
            return Err(Error::param(format!("p_max must be >= 2, got {}", self.p_max)));
        }
        for (name, v) in [("g0_sigma", self.g0_sigma), ("decrement_sigma", self.decrement_sigma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.g0_mean > 0.0 && self.g0_mean.is_finite()) {
            return Err(Error::param("g0_mean must be positive"));
        }
        if !(self.decrement_mean > 0.0 && self.decrement_mean.is_finite()) {
            return Err(Error::param("decrement_mean must be positive"));
        }
        for (name, p) in [
            ("anomalous_prob", self.anomalous_prob),
            ("late_onset_fraction", self.late_onset_fraction),
            ("anomalous_flip_min", self.anomalous_flip_min),
            ("anomalous_flip_max", self.anomalous_flip_max),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.anomalous_flip_min > self.anomalous_flip_max {
            return Err(Error::param("anomalous_flip_min exceeds anomalous_flip_max"));
        }
        if !(self.late_amplification >= 0.0) {
            return Err(Error::param("late_amplification must be >= 0"));
        }
        Ok(())
    }

    fn sample_decrement(&self, sigma: f64, rng: &mut crate::Rng) -> f64 {
        if sigma == 0.0 {
            return self.decrement_mean;
        }
        match self.decrement_family {
            DecrementFamily::TruncatedNormal => {
                let normal = Normal::new(self.decrement_mean, sigma).expect("validated sigma");
                loop {
                    let d = normal.sample(rng);
                    if d >= 0.0 {
                        break d;
                    }
                }
            }
            DecrementFamily::LogNormal => {
                // Moment-matched so the step mean/sigma are the configured ones.
                let m = self.decrement_mean;
                let s2 = (1.0 + (sigma * sigma) / (m * m)).ln();
                let mu = m.ln() - 0.5 * s2;
                LogNormal::new(mu, s2.sqrt()).expect("validated").sample(rng)
            }
        }
    }

    fn generate_one(&self, seed: u64, index: usize) -> ResetTrajectory {
        let mut rng = rng_from_seed(derive_seed(seed, index as u64));
        let g0 = if self.g0_sigma > 0.0 {
            Normal::new(self.g0_mean, self.g0_sigma)
                .expect("validated")
                .sample(&mut rng)
                .max(self.g0_mean * 0.05)
        } else {
            self.g0_mean
        };
        let anomalous = self.anomalous_prob > 0.0 && rng.random::<f64>() < self.anomalous_prob;
        let flip_p = if anomalous {
            rng.random_range(self.anomalous_flip_min..=self.anomalous_flip_max)
        } else {
            0.0
        };
        let steps = self.p_max - 1;
        let late_start = ((1.0 - self.late_onset_fraction) * steps as f64).round() as usize;
        let mut g = Vec::with_capacity(self.p_max);
        g.push(g0);
        let mut current = g0;
        for step in 0..steps {
            let sigma = if step >= late_start {
                self.decrement_sigma * self.late_amplification
            } else {
                self.decrement_sigma
            };
            let mut d = self.sample_decrement(sigma, &mut rng);
            if anomalous && rng.random::<f64>() < flip_p {
                d = -d;
            }
            current = (current - d).max(0.0);
            g.push(current);
        }
        ResetTrajectory {
            conductances: g,
            source: TrajectorySource::Synthetic { seed, index },
        }
    }
}

/// Pool of trajectories devices are initialized from.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryBank {
    trajectories: Vec<Arc<ResetTrajectory>>,
}

impl TrajectoryBank {
    pub fn new(trajectories: Vec<ResetTrajectory>) -> Self {
        Self {
            trajectories: trajectories.into_iter().map(Arc::new).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Arc<ResetTrajectory>> {
        self.trajectories.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<ResetTrajectory>> {
        self.trajectories.iter()
    }

    /// Uniform draw of one trajectory.
    pub fn draw(&self, rng: &mut crate::Rng) -> Result<Arc<ResetTrajectory>> {
        if self.trajectories.is_empty() {
            return Err(Error::Config("trajectory bank is empty".into()));
        }
        let i = rng.random_range(0..self.trajectories.len());
        Ok(Arc::clone(&self.trajectories[i]))
    }

    /// Longest pulse budget any trajectory offers.
    pub fn min_len(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).min().unwrap_or(0)
    }

    /// Reads the long-format CSV `device_id,pulse_index,conductance_uS`.
    ///
    /// Rows of one device must be contiguous and `pulse_index` dense from 0.
    pub fn read_csv<R: Read>(reader: R, file_id: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["device_id", "pulse_index", "conductance_uS"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse {
                source_name: file_id.into(),
                line: 1,
                msg: format!("expected header {}", expected.join(",")),
            });
        }
        let mut out: Vec<ResetTrajectory> = Vec::new();
        let mut current: Option<(u64, Vec<f64>)> = None;
        let mut seen = std::collections::HashSet::new();
        let finish = |(id, g): (u64, Vec<f64>), out: &mut Vec<ResetTrajectory>, line: usize| {
            ResetTrajectory::new(
                g,
                TrajectorySource::Measured {
                    file_id: file_id.into(),
                    device_id: id,
                },
            )
            .map(|t| out.push(t))
            .map_err(|e| Error::Parse {
                source_name: file_id.into(),
                line,
                msg: format!("device {id}: {e}"),
            })
        };
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let parse_err = |msg: String| Error::Parse {
                source_name: file_id.into(),
                line,
                msg,
            };
            if rec.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, got {}", rec.len())));
            }
            let id: u64 = rec[0]
                .parse()
                .map_err(|_| parse_err(format!("bad device_id {:?}", &rec[0])))?;
            let p: usize = rec[1]
                .parse()
                .map_err(|_| parse_err(format!("bad pulse_index {:?}", &rec[1])))?;
            let g_us: f64 = rec[2]
                .parse()
                .map_err(|_| parse_err(format!("bad conductance {:?}", &rec[2])))?;
            if !g_us.is_finite() || g_us < 0.0 {
                return Err(parse_err(format!("conductance must be finite and >= 0, got {g_us}")));
            }
            match &mut current {
                Some((cid, g)) if *cid == id => {
                    if p != g.len() {
                        return Err(parse_err(format!(
                            "device {id}: pulse_index {p} breaks density (expected {})",
                            g.len()
                        )));
                    }
                    g.push(g_us * MICRO_SIEMENS);
                }
                _ => {
                    if let Some(done) = current.take() {
                        finish(done, &mut out, line)?;
                    }
                    if !seen.insert(id) {
                        return Err(parse_err(format!("device {id} rows are not contiguous")));
                    }
                    if p != 0 {
                        return Err(parse_err(format!("device {id}: first pulse_index must be 0")));
                    }
                    current = Some((id, vec![g_us * MICRO_SIEMENS]));
                }
            }
        }
        if let Some(done) = current.take() {
            finish(done, &mut out, 0)?;
        }
        if out.is_empty() {
            return Err(Error::Parse {
                source_name: file_id.into(),
                line: 1,
                msg: "no trajectories".into(),
            });
        }
        Ok(Self::new(out))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["device_id", "pulse_index", "conductance_uS"])?;
        for (id, t) in self.trajectories.iter().enumerate() {
            for (p, g) in t.conductances().iter().enumerate() {
                w.write_record([id.to_string(), p.to_string(), format!("{:.9e}", g / MICRO_SIEMENS)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Synthesizes `count` trajectories; deterministic in `(params, count, seed)`.
pub fn generate_trajectory_bank(params: &SyntheticTrajectoryParams, count: usize, seed: u64) -> Result<TrajectoryBank> {
    params.validate()?;
    if count == 0 {
        return Err(Error::param("trajectory count must be >= 1"));
    }
    use rayon::prelude::*;
    let trajectories: Vec<_> = (0..count)
        .into_par_iter()
        .map(|i| params.generate_one(seed, i))
        .collect();
    Ok(TrajectoryBank::new(trajectories))
}

/// A device replaying a trajectory one pulse at a time.
#[derive(Debug, Clone)]
pub struct DeviceState {
    trajectory: Arc<ResetTrajectory>,
    pulse_index: usize,
    reinit_count: u64,
    lifetime_pulses: u64,
}

/// Record of one reinitialization (full reset/set back to low resistance).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReinitEvent {
    pub reinit_count: u64,
    pub energy: f64,
}

impl DeviceState {
    pub fn new(trajectory: Arc<ResetTrajectory>) -> Self {
        Self {
            trajectory,
            pulse_index: 0,
            reinit_count: 0,
            lifetime_pulses: 0,
        }
    }

    pub fn conductance(&self) -> f64 {
        self.trajectory.conductances[self.pulse_index]
    }

    pub fn pulse_index(&self) -> usize {
        self.pulse_index
    }

    pub fn reinit_count(&self) -> u64 {
        self.reinit_count
    }

    pub fn lifetime_pulses(&self) -> u64 {
        self.lifetime_pulses
    }

    pub fn trajectory(&self) -> &Arc<ResetTrajectory> {
        &self.trajectory
    }

    pub fn is_exhausted(&self) -> bool {
        self.pulse_index + 1 >= self.trajectory.len()
    }

    /// Advances exactly one step along the trajectory and returns the new
    /// conductance. Never clamps: an exhausted trajectory is an error.
    pub fn apply_reset_pulse(&mut self, endurance_budget: u64) -> Result<f64> {
        if self.lifetime_pulses >= endurance_budget {
            return Err(Error::EnduranceExceeded {
                budget: endurance_budget,
            });
        }
        if self.is_exhausted() {
            return Err(Error::NeedsReinit {
                pulse_index: self.pulse_index,
            });
        }
        self.pulse_index += 1;
        self.lifetime_pulses += 1;
        Ok(self.conductance())
    }

    /// Full reset/set back to low resistance on a freshly drawn trajectory.
    pub fn reinitialize(
        &mut self,
        bank: &TrajectoryBank,
        rng: &mut crate::Rng,
        tech: &DeviceTechParams,
    ) -> Result<ReinitEvent> {
        self.trajectory = bank.draw(rng)?;
        self.pulse_index = 0;
        self.reinit_count += 1;
        Ok(ReinitEvent {
            reinit_count: self.reinit_count,
            energy: tech.reinit_energy,
        })
    }

    /// Restores a device at a given position (used when loading snapshots).
    pub fn at_pulse(trajectory: Arc<ResetTrajectory>, pulse_index: usize) -> Result<Self> {
        if pulse_index >= trajectory.len() {
            return Err(Error::param(format!(
                "pulse_index {pulse_index} beyond trajectory length {}",
                trajectory.len()
            )));
        }
        Ok(Self {
            trajectory,
            pulse_index,
            reinit_count: 0,
            lifetime_pulses: pulse_index as u64,
        })
    }
}

/// Linearity of conductance versus pulse number over the first `p_max`
/// points; -1 for an ideal linear decrease. Constant input returns 0.
pub fn pearson_coefficient(trajectory: &ResetTrajectory, p_max: usize) -> Result<f64> {
    if p_max < 2 || p_max > trajectory.len() {
        return Err(Error::param(format!(
            "p_max must lie in [2, {}], got {p_max}",
            trajectory.len()
        )));
    }
    Ok(pearson_of_slice(&trajectory.conductances[..p_max]))
}

pub(crate) fn pearson_of_slice(g: &[f64]) -> f64 {
    let p = g.len() as f64;
    let mean_g = g.iter().sum::<f64>() / p;
    let var_g = g.iter().map(|v| (v - mean_g).powi(2)).sum::<f64>() / p;
    if var_g == 0.0 {
        return 0.0;
    }
    let sigma_g = var_g.sqrt();
    // Population sigma of 1..=P in closed form.
    let sigma_p = ((p * p - 1.0) / 12.0).sqrt();
    let centre = (p + 1.0) / 2.0;
    let s: f64 = g
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean_g) * ((i + 1) as f64 - centre))
        .sum();
    (s / (p * sigma_g * sigma_p)).clamp(-1.0, 1.0)
}

/// One calibration point of the retention model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftAnchor {
    pub days: f64,
    /// |dG| bound (S).
    pub bound: f64,
    /// Fraction of the population with |dG| below `bound`.
    pub fraction: f64,
}

/// Zero-mean core/tail Gaussian mixture for retention drift. The tail
/// weight at each anchor is solved so the |dG| CDF hits the target, then
/// interpolated in log(1 + days).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftModelParams {
    pub core_sigma: f64,
    pub tail_sigma: f64,
    pub anchors: Vec<DriftAnchor>,
}

impl Default for DriftModelParams {
    fn default() -> Self {
        Self {
            core_sigma: 0.8 * MICRO_SIEMENS,
            tail_sigma: 5.0 * MICRO_SIEMENS,
            anchors: vec![
                DriftAnchor {
                    days: 8.0,
                    bound: 3.0 * MICRO_SIEMENS,
                    fraction: 0.941,
                },
                DriftAnchor {
                    days: 90.0,
                    bound: 3.0 * MICRO_SIEMENS,
                    fraction: 0.907,
                },
            ],
        }
    }
}

/// Drift parameters resolved for one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftAtHorizon {
    pub core_sigma: f64,
    pub tail_sigma: f64,
    pub tail_weight: f64,
}

fn half_normal_cdf(bound: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    erf(bound / (sigma * std::f64::consts::SQRT_2))
}

impl DriftModelParams {
    /// No drift at all.
    pub fn none() -> Self {
        Self {
            core_sigma: 0.0,
            tail_sigma: 0.0,
            anchors: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.core_sigma >= 0.0 && self.core_sigma.is_finite())
            || !(self.tail_sigma >= 0.0 && self.tail_sigma.is_finite())
        {
            return Err(Error::param("drift sigmas must be finite and >= 0"));
        }
        for a in &self.anchors {
            if !(0.0..=1.0).contains(&a.fraction) || !(a.days > 0.0) || !(a.bound > 0.0) {
                return Err(Error::param(format!("invalid drift anchor {a:?}")));
            }
        }
        if self.anchors.windows(2).any(|w| w[1].days <= w[0].days) {
            return Err(Error::param("drift anchors must be sorted by days"));
        }
        Ok(())
    }

    fn anchor_tail_weight(&self, a: &DriftAnchor) -> f64 {
        let core = half_normal_cdf(a.bound, self.core_sigma);
        let tail = half_normal_cdf(a.bound, self.tail_sigma);
        if (core - tail).abs() < 1e-15 {
            return 0.0;
        }
        ((core - a.fraction) / (core - tail)).clamp(0.0, 1.0)
    }

    /// Mixture parameters at `days`.
    pub fn at_horizon(&self, days: f64) -> DriftAtHorizon {
        let zero = DriftAtHorizon {
            core_sigma: 0.0,
            tail_sigma: 0.0,
            tail_weight: 0.0,
        };
        if days <= 0.0 {
            return zero;
        }
        if self.anchors.is_empty() {
            return DriftAtHorizon {
                core_sigma: self.core_sigma,
                tail_sigma: self.tail_sigma,
                tail_weight: 0.0,
            };
        }
        let t = (1.0 + days).ln();
        let pts: Vec<(f64, f64)> = self
            .anchors
            .iter()
            .map(|a| ((1.0 + a.days).ln(), self.anchor_tail_weight(a)))
            .collect();
        let (t0, w0) = pts[0];
        if t <= t0 {
            // Ramp everything up from the identity at day 0.
            let f = t / t0;
            return DriftAtHorizon {
                core_sigma: self.core_sigma * f,
                tail_sigma: self.tail_sigma,
                tail_weight: w0 * f,
            };
        }
        let seg = pts
            .windows(2)
            .find(|w| t <= w[1].0)
            .map(|w| (w[0], w[1]))
            .or_else(|| (pts.len() >= 2).then(|| (pts[pts.len() - 2], pts[pts.len() - 1])));
        let weight = match seg {
            Some(((ta, wa), (tb, wb))) => wa + (wb - wa) * (t - ta) / (tb - ta),
            None => w0,
        };
        DriftAtHorizon {
            core_sigma: self.core_sigma,
            tail_sigma: self.tail_sigma,
            tail_weight: weight.clamp(0.0, 1.0),
        }
    }
}

/// Perturbs a read conductance by the retention drift accumulated over
/// `days`. The result is clamped at zero.
pub fn apply_retention_drift(g: f64, days: f64, params: &DriftModelParams, rng: &mut crate::Rng) -> Result<f64> {
    if !(days >= 0.0) {
        return Err(Error::param(format!("days must be >= 0, got {days}")));
    }
    Ok(drift_sample(g, &params.at_horizon(days), rng))
}

pub(crate) fn drift_sample(g: f64, h: &DriftAtHorizon, rng: &mut crate::Rng) -> f64 {
    let sigma = if h.tail_weight > 0.0 && rng.random::<f64>() < h.tail_weight {
        h.tail_sigma
    } else {
        h.core_sigma
    };
    if sigma == 0.0 {
        return g;
    }
    let z: f64 = rand_distr::StandardNormal.sample(rng);
    (g + sigma * z).max(0.0)
}
