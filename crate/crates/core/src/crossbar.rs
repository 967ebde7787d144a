//! Differential-pair crossbar arrays.
//!
//! Physical layout: `rows` are inputs (word/bit-line drive), `cols` are
//! outputs (column-summed currents). Pair `(row, col)` holds the devices
//! `G+` and `G-` of the weight connecting input `row` to output `col`.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::device::{DeviceState, DeviceTechParams, TrajectoryBank};
use crate::error::{Error, Result};
use crate::MICRO_SIEMENS;

#[derive(Debug, Clone)]
pub struct DifferentialPair {
    pub plus: DeviceState,
    pub minus: DeviceState,
}

impl DifferentialPair {
    pub fn difference(&self) -> f64 {
        self.plus.conductance() - self.minus.conductance()
    }

    pub fn device(&self, polarity: Polarity) -> &DeviceState {
        match polarity {
            Polarity::PulsePlus => &self.plus,
            Polarity::PulseMinus => &self.minus,
        }
    }

    fn device_mut(&mut self, polarity: Polarity) -> &mut DeviceState {
        match polarity {
            Polarity::PulsePlus => &mut self.plus,
            Polarity::PulseMinus => &mut self.minus,
        }
    }
}

/// Which device of a pair receives the reset pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    /// Reset `G+`: the weight decreases.
    PulsePlus,
    /// Reset `G-`: the weight increases.
    PulseMinus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UpdateAction {
    pub row: usize,
    pub col: usize,
    pub polarity: Polarity,
}

/// Single-pulse programming actions, at most one per pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdatePlan {
    actions: Vec<UpdateAction>,
}

impl UpdatePlan {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a plan, rejecting duplicate `(row, col)` targets.
    pub fn from_actions(actions: Vec<UpdateAction>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(actions.len());
        for a in &actions {
            if !seen.insert((a.row, a.col)) {
                return Err(Error::param(format!(
                    "plan has more than one action on pair ({}, {})",
                    a.row, a.col
                )));
            }
        }
        Ok(Self { actions })
    }

    /// Caller guarantees uniqueness of `(row, col)`.
    pub(crate) fn from_unique(actions: Vec<UpdateAction>) -> Self {
        Self { actions }
    }

    pub fn actions(&self) -> &[UpdateAction] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<Polarity> {
        self.actions
            .iter()
            .find(|a| a.row == row && a.col == col)
            .map(|a| a.polarity)
    }
}

/// What to do when a targeted device has no trajectory left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExhaustionPolicy {
    #[default]
    Skip,
    AutoReinit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    Exhausted,
    Endurance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionOutcome {
    Applied { g_pre: f64 },
    ReinitThenApplied { g_pre: f64, reinit_energy: f64 },
    Skipped { reason: SkipReason },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PulseReport {
    pub outcomes: Vec<(UpdateAction, ActionOutcome)>,
}

impl PulseReport {
    /// Pre-pulse conductances of every pulse actually delivered.
    pub fn pulsed_conductances(&self) -> impl Iterator<Item = f64> + '_ {
        self.outcomes.iter().filter_map(|(_, o)| match o {
            ActionOutcome::Applied { g_pre } | ActionOutcome::ReinitThenApplied { g_pre, .. } => Some(*g_pre),
            ActionOutcome::Skipped { .. } => None,
        })
    }

    pub fn applied(&self) -> usize {
        self.pulsed_conductances().count()
    }

    pub fn skipped(&self) -> usize {
        self.outcomes.len() - self.applied()
    }

    pub fn reinits(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|(_, o)| matches!(o, ActionOutcome::ReinitThenApplied { .. }))
            .count()
    }
}

/// Read imperfections applied to column currents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadModelParams {
    pub enabled: bool,
    /// Relative sigma of the multiplicative current noise.
    pub multiplicative_sigma: f64,
    /// Additive current noise sigma (A).
    pub additive_sigma: f64,
}

impl Default for ReadModelParams {
    fn default() -> Self {
        Self {
            enabled: false,
            multiplicative_sigma: 0.01,
            additive_sigma: 0.0,
        }
    }
}

impl ReadModelParams {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.multiplicative_sigma >= 0.0) || !(self.additive_sigma >= 0.0) {
            return Err(Error::param("read noise sigmas must be >= 0"));
        }
        Ok(())
    }
}

/// Energy-relevant summary of one forward read through an array.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReadEvent {
    /// sum_j x_j^2 * sum_i (G+_ij + G-_ij), in S. Multiply by V_read^2 t_read.
    pub weighted_conductance: f64,
    pub v_read: f64,
    pub t_read: f64,
}

impl ReadEvent {
    pub fn energy(&self) -> f64 {
        self.weighted_conductance * self.v_read * self.v_read * self.t_read
    }
}

#[derive(Debug, Clone)]
pub struct MacOutput {
    pub logits: Array1<f64>,
    pub currents: Array1<f64>,
    pub read: ReadEvent,
}

#[derive(Debug, Clone)]
pub struct CrossbarArray {
    rows: usize,
    cols: usize,
    pairs: Vec<DifferentialPair>,
    gain_kappa: f64,
    tech: DeviceTechParams,
}

impl CrossbarArray {
    pub fn from_pairs(
        rows: usize,
        cols: usize,
        pairs: Vec<DifferentialPair>,
        gain_kappa: f64,
        tech: DeviceTechParams,
    ) -> Result<Self> {
        if pairs.len() != rows * cols {
            return Err(Error::shape(format!("{} pairs for a {rows}x{cols} array", pairs.len())));
        }
        if !(gain_kappa > 0.0 && gain_kappa.is_finite()) {
            return Err(Error::param("read gain must be positive"));
        }
        tech.validate()?;
        Ok(Self {
            rows,
            cols,
            pairs,
            gain_kappa,
            tech,
        })
    }

    /// Fresh array: every device draws its own trajectory, then receives a
    /// uniform 0..=`max_prepulses` number of reset pulses to break symmetry.
    pub fn initialize(
        rows: usize,
        cols: usize,
        gain_kappa: f64,
        tech: DeviceTechParams,
        bank: &TrajectoryBank,
        max_prepulses: usize,
        rng: &mut crate::Rng,
    ) -> Result<Self> {
        let mut pairs = Vec::with_capacity(rows * cols);
        let budget = tech.endurance_budget;
        let fresh = |rng: &mut crate::Rng| -> Result<DeviceState> {
            let mut d = DeviceState::new(bank.draw(rng)?);
            let n = rng.random_range(0..=max_prepulses);
            for _ in 0..n {
                if d.is_exhausted() {
                    break;
                }
                d.apply_reset_pulse(budget)?;
            }
            Ok(d)
        };
        for _ in 0..rows * cols {
            let plus = fresh(rng)?;
            let minus = fresh(rng)?;
            pairs.push(DifferentialPair { plus, minus });
        }
        Self::from_pairs(rows, cols, pairs, gain_kappa, tech)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn device_count(&self) -> usize {
        2 * self.rows * self.cols
    }

    pub fn gain_kappa(&self) -> f64 {
        self.gain_kappa
    }

    pub fn tech(&self) -> &DeviceTechParams {
        &self.tech
    }

    /// Weight scale `s = kappa * V_read`.
    pub fn scale_s(&self) -> f64 {
        self.gain_kappa * self.tech.v_read
    }

    pub fn pair(&self, row: usize, col: usize) -> &DifferentialPair {
        &self.pairs[row * self.cols + col]
    }

    pub fn pairs(&self) -> &[DifferentialPair] {
        &self.pairs
    }

    /// Swaps `G+` and `G-` of every pair.
    pub fn swap_polarity(&mut self) {
        for p in &mut self.pairs {
            std::mem::swap(&mut p.plus, &mut p.minus);
        }
    }

    /// Conductance grids `(G+, G-)`, rows x cols, in siemens.
    pub fn conductances(&self) -> (Array2<f64>, Array2<f64>) {
        let gp = Array2::from_shape_fn((self.rows, self.cols), |(r, c)| self.pair(r, c).plus.conductance());
        let gm = Array2::from_shape_fn((self.rows, self.cols), |(r, c)| self.pair(r, c).minus.conductance());
        (gp, gm)
    }

    /// `W = s (G+ - G-)`, rows x cols.
    pub fn map_weights(&self) -> Array2<f64> {
        let s = self.scale_s();
        Array2::from_shape_fn((self.rows, self.cols), |(r, c)| s * self.pair(r, c).difference())
    }

    /// Analog multiply-accumulate: `I_i = sum_j (G+_ji - G-_ji) x_j V_read`,
    /// logits `y_i = kappa I_i`.
    pub fn mac(&self, x: ArrayView1<f64>, read_model: &ReadModelParams, rng: &mut crate::Rng) -> Result<MacOutput> {
        if x.len() != self.rows {
            return Err(Error::shape(format!(
                "input of length {} for an array with {} rows",
                x.len(),
                self.rows
            )));
        }
        let v = self.tech.v_read;
        let mut currents = Array1::<f64>::zeros(self.cols);
        let mut weighted = 0.0;
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            let row = &self.pairs[r * self.cols..(r + 1) * self.cols];
            let mut row_sum = 0.0;
            for (c, p) in row.iter().enumerate() {
                let (gp, gm) = (p.plus.conductance(), p.minus.conductance());
                currents[c] += gp * xr * v - gm * xr * v;
                row_sum += gp + gm;
            }
            weighted += xr * xr * row_sum;
        }
        if read_model.enabled {
            for i in currents.iter_mut() {
                let m: f64 = StandardNormal.sample(rng);
                let a: f64 = StandardNormal.sample(rng);
                *i = *i * (1.0 + read_model.multiplicative_sigma * m) + read_model.additive_sigma * a;
            }
        }
        let logits = currents.mapv(|i| self.gain_kappa * i);
        Ok(MacOutput {
            logits,
            currents,
            read: ReadEvent {
                weighted_conductance: weighted,
                v_read: v,
                t_read: self.tech.t_read,
            },
        })
    }

    /// Executes one reset pulse per action.
    pub fn apply_update_plan(
        &mut self,
        plan: &UpdatePlan,
        policy: ExhaustionPolicy,
        bank: &TrajectoryBank,
        rng: &mut crate::Rng,
    ) -> Result<PulseReport> {
        if let Some(a) = plan.actions().iter().find(|a| a.row >= self.rows || a.col >= self.cols) {
            return Err(Error::shape(format!(
                "action ({}, {}) outside a {}x{} array",
                a.row, a.col, self.rows, self.cols
            )));
        }
        let budget = self.tech.endurance_budget;
        let mut report = PulseReport {
            outcomes: Vec::with_capacity(plan.len()),
        };
        for &action in plan.actions() {
            let cols = self.cols;
            let device = self.pairs[action.row * cols + action.col].device_mut(action.polarity);
            let g_pre = device.conductance();
            let outcome = match device.apply_reset_pulse(budget) {
                Ok(_) => ActionOutcome::Applied { g_pre },
                Err(Error::EnduranceExceeded { .. }) => ActionOutcome::Skipped {
                    reason: SkipReason::Endurance,
                },
                Err(Error::NeedsReinit { .. }) => match policy {
                    ExhaustionPolicy::Skip => ActionOutcome::Skipped {
                        reason: SkipReason::Exhausted,
                    },
                    ExhaustionPolicy::AutoReinit => {
                        let ev = device.reinitialize(bank, rng, &self.tech)?;
                        let g_pre = device.conductance();
                        match device.apply_reset_pulse(budget) {
                            Ok(_) => ActionOutcome::ReinitThenApplied {
                                g_pre,
                                reinit_energy: ev.energy,
                            },
                            Err(Error::EnduranceExceeded { .. }) => ActionOutcome::Skipped {
                                reason: SkipReason::Endurance,
                            },
                            Err(e) => return Err(e),
                        }
                    }
                },
                Err(e) => return Err(e),
            };
            report.outcomes.push((action, outcome));
        }
        Ok(report)
    }

    /// CSV snapshot `row,col,g_plus_uS,g_minus_uS,pulse_index_plus,pulse_index_minus`.
    pub fn write_snapshot<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "row",
            "col",
            "g_plus_uS",
            "g_minus_uS",
            "pulse_index_plus",
            "pulse_index_minus",
        ])?;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let p = self.pair(r, c);
                w.write_record([
                    r.to_string(),
                    c.to_string(),
                    format!("{:.17e}", p.plus.conductance() / MICRO_SIEMENS),
                    format!("{:.17e}", p.minus.conductance() / MICRO_SIEMENS),
                    p.plus.pulse_index().to_string(),
                    p.minus.pulse_index().to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Conductance grids recovered from a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct ArraySnapshot {
    pub g_plus: Array2<f64>,
    pub g_minus: Array2<f64>,
    pub pulse_index_plus: Array2<usize>,
    pub pulse_index_minus: Array2<usize>,
}

impl ArraySnapshot {
    pub fn of(array: &CrossbarArray) -> Self {
        let (g_plus, g_minus) = array.conductances();
        let idx = |minus: bool| {
            Array2::from_shape_fn((array.rows, array.cols), |(r, c)| {
                let p = array.pair(r, c);
                if minus {
                    p.minus.pulse_index()
                } else {
                    p.plus.pulse_index()
                }
            })
        };
        Self {
            g_plus,
            g_minus,
            pulse_index_plus: idx(false),
            pulse_index_minus: idx(true),
        }
    }

    pub fn read_csv<R: Read>(reader: R, rows: usize, cols: usize, name: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut snap = Self {
            g_plus: Array2::from_elem((rows, cols), f64::NAN),
            g_minus: Array2::from_elem((rows, cols), f64::NAN),
            pulse_index_plus: Array2::zeros((rows, cols)),
            pulse_index_minus: Array2::zeros((rows, cols)),
        };
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let err = |msg: String| Error::Parse {
                source_name: name.into(),
                line,
                msg,
            };
            if rec.len() != 6 {
                return Err(err(format!("expected 6 fields, got {}", rec.len())));
            }
            let u =
                |k: usize| -> Result<usize> { rec[k].parse().map_err(|_| err(format!("bad integer {:?}", &rec[k]))) };
            let f = |k: usize| -> Result<f64> {
                rec[k]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| err(format!("bad conductance {:?}", &rec[k])))
            };
            let (r, c) = (u(0)?, u(1)?);
            if r >= rows || c >= cols {
                return Err(err(format!("pair ({r}, {c}) outside {rows}x{cols}")));
            }
            snap.g_plus[(r, c)] = f(2)? * MICRO_SIEMENS;
            snap.g_minus[(r, c)] = f(3)? * MICRO_SIEMENS;
            snap.pulse_index_plus[(r, c)] = u(4)?;
            snap.pulse_index_minus[(r, c)] = u(5)?;
        }
        if snap.g_plus.iter().any(|v| v.is_nan()) {
            return Err(Error::Format(format!("{name}: snapshot does not cover every pair")));
        }
        Ok(snap)
    }
}

/// Three-level input quantization: `sign(x)` outside the dead zone, else 0.
pub fn ternarize(x: ArrayView1<f64>, dead_zone: f64) -> Array1<f64> {
    x.mapv(|v| if v.abs() > dead_zone { v.signum() } else { 0.0 })
}
