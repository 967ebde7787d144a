//! Population statistics of a trajectory bank: Pearson histograms and the
//! repeated-cycle endurance protocol.

use serde::{Deserialize, Serialize};

use crate::device::{pearson_coefficient, DeviceState, DeviceTechParams, TrajectoryBank};
use crate::error::{Error, Result};
use crate::{rng_from_seed, MICRO_SIEMENS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonSummary {
    pub devices: usize,
    pub p_max: usize,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Fraction of devices with a coefficient above -0.5.
    pub fraction_above_minus_half: f64,
}

/// Coefficient of every trajectory over its first `p_max` points
/// (`None`: the shortest trajectory length).
pub fn bank_pearson(bank: &TrajectoryBank, p_max: Option<usize>) -> Result<(Vec<f64>, usize)> {
    if bank.is_empty() {
        return Err(Error::Param("empty trajectory bank".into()));
    }
    let p = p_max.unwrap_or_else(|| bank.min_len());
    let r = bank.iter().map(|t| pearson_coefficient(t, p)).collect::<Result<_>>()?;
    Ok((r, p))
}

pub fn pearson_summary(values: &[f64], p_max: usize) -> PearsonSummary {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    PearsonSummary {
        devices: n,
        p_max,
        median,
        mean: v.iter().sum::<f64>() / n as f64,
        min: v.first().copied().unwrap_or(f64::NAN),
        max: v.last().copied().unwrap_or(f64::NAN),
        fraction_above_minus_half: v.iter().filter(|r| **r > -0.5).count() as f64 / n as f64,
    }
}

/// Equal-width bins over [-1, 1]; 1.0 falls in the last bin.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::Param("histogram needs at least one bin".into()));
    }
    let width = 2.0 / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            lo: -1.0 + k as f64 * width,
            hi: -1.0 + (k + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &r in values {
        let k = (((r + 1.0) / width).floor() as usize).min(bins - 1);
        out[k].count += 1;
    }
    Ok(out)
}

/// One recorded point of the endurance trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndurancePoint {
    pub cycle: usize,
    pub pulse_in_cycle: usize,
    pub lifetime_pulse: u64,
    pub conductance_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnduranceReport {
    pub cycles: usize,
    pub pulses_per_cycle: usize,
    pub lifetime_pulses: u64,
    pub endurance_budget: u64,
    pub within_budget: bool,
    pub reinits: u64,
    /// Conductance at the start and end of every cycle (µS).
    pub cycle_start_us: Vec<f64>,
    pub cycle_end_us: Vec<f64>,
}

/// One device cycled `cycles` times: reinitialize on a fresh trajectory,
/// then `pulses_per_cycle` resets. `trace` receives every `stride`-th pulse
/// plus each cycle's first and last point.
pub fn endurance_cycles(
    bank: &TrajectoryBank,
    tech: &DeviceTechParams,
    cycles: usize,
    pulses_per_cycle: usize,
    seed: u64,
    stride: usize,
    mut trace: impl FnMut(EndurancePoint) -> Result<()>,
) -> Result<EnduranceReport> {
    if cycles == 0 || pulses_per_cycle == 0 || stride == 0 {
        return Err(Error::Param("cycles, pulses per cycle and stride must be >= 1".into()));
    }
    let shortest = bank.min_len().saturating_sub(1);
    if pulses_per_cycle > shortest {
        return Err(Error::Param(format!(
            "{pulses_per_cycle} pulses per cycle exceed the shortest trajectory ({shortest} pulses)"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut dev = DeviceState::new(bank.draw(&mut rng)?);
    let mut start = Vec::with_capacity(cycles);
    let mut end = Vec::with_capacity(cycles);
    for cycle in 0..cycles {
        if cycle > 0 {
            dev.reinitialize(bank, &mut rng, tech)?;
        }
        let point = |dev: &DeviceState, k: usize| EndurancePoint {
            cycle,
            pulse_in_cycle: k,
            lifetime_pulse: dev.lifetime_pulses(),
            conductance_us: dev.conductance() / MICRO_SIEMENS,
        };
        start.push(dev.conductance() / MICRO_SIEMENS);
        trace(point(&dev, 0))?;
        for k in 1..=pulses_per_cycle {
            dev.apply_reset_pulse(tech.endurance_budget)?;
            if k % stride == 0 || k == pulses_per_cycle {
                trace(point(&dev, k))?;
            }
        }
        end.push(dev.conductance() / MICRO_SIEMENS);
    }
    Ok(EnduranceReport {
        cycles,
        pulses_per_cycle,
        lifetime_pulses: dev.lifetime_pulses(),
        endurance_budget: tech.endurance_budget,
        within_budget: dev.lifetime_pulses() <= tech.endurance_budget,
        reinits: dev.reinit_count(),
        cycle_start_us: start,
        cycle_end_us: end,
    })
}
