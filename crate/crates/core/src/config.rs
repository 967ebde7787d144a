//! Declarative run configuration.
//!
//! Optional fields left as `None` take algorithm-dependent defaults in
//! [`RunConfig::resolved`]; the resolved form is what gets echoed into a run
//! manifest, so every run directory records concrete values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crossbar::{ExhaustionPolicy, ReadModelParams};
use crate::data::{load_feature_csv, load_idx, make_cluster_task, ClusterTaskParams, FeatureDataset, SplitSpec};
use crate::device::{
    generate_trajectory_bank, DeviceTechParams, DriftModelParams, SyntheticTrajectoryParams, TrajectoryBank,
};
use crate::error::{Error, Result};
use crate::rules::{CfVariant, PlanMode};
use crate::trainer::Algorithm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    #[default]
    Synthetic,
    Csv,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub synthetic: ClusterTaskParams,
    pub csv_path: Option<PathBuf>,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    /// Class count for file tasks; inferred from the labels when absent.
    pub n_classes: Option<usize>,
    /// Ternarize features with this dead zone before training.
    pub ternarize_dead_zone: Option<f64>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            kind: TaskKind::Synthetic,
            synthetic: ClusterTaskParams::default(),
            csv_path: None,
            idx_images: None,
            idx_labels: None,
            n_classes: None,
            ternarize_dead_zone: None,
        }
    }
}

impl TaskConfig {
    pub fn load(&self) -> Result<FeatureDataset> {
        let ds = match self.kind {
            TaskKind::Synthetic => make_cluster_task(&self.synthetic)?,
            TaskKind::Csv => {
                let path = self
                    .csv_path
                    .as_deref()
                    .ok_or_else(|| Error::Config("task.csv_path is required for csv tasks".into()))?;
                load_feature_csv(path, self.n_classes)?
            }
            TaskKind::Idx => {
                let (img, lab) = self
                    .idx_images
                    .as_deref()
                    .zip(self.idx_labels.as_deref())
                    .ok_or_else(|| {
                        Error::Config("task.idx_images and task.idx_labels are required for idx tasks".into())
                    })?;
                load_idx(img, lab)?
            }
        };
        match self.ternarize_dead_zone {
            Some(dz) => {
                if !(dz >= 0.0) {
                    return Err(Error::Config(format!("ternarize dead zone must be >= 0, got {dz}")));
                }
                ds.map_rows(|x| crate::crossbar::ternarize(x, dz))
            }
            None => Ok(ds),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Perceptron,
    #[default]
    TwoLayer,
}

/// Float-mode optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FloatUpdate {
    /// Plain minibatch gradient descent.
    #[default]
    Sgd,
    /// Thresholded sign step, the software twin of the pulse rule.
    Sign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SffInference {
    /// One pass with every token slot at `amplitude / C`; the head decides.
    #[default]
    Neutral,
    /// C passes, one per label token; the label with maximal goodness wins.
    MultiPass,
}

/// Which first-layer activations train the SFF cluster head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadInput {
    #[default]
    Neutral,
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SffConfig {
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub token_amplitude: f64,
    pub inference: SffInference,
    pub head_input: HeadInput,
}

impl Default for SffConfig {
    fn default() -> Self {
        Self {
            theta_plus: 2.0,
            theta_minus: 1.0,
            token_amplitude: 6.0,
            inference: SffInference::Neutral,
            head_input: HeadInput::Neutral,
        }
    }
}

/// Parameters shared by every cluster layer (CF layers and the SFF head).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CfConfig {
    pub variant: CfVariant,
    pub theta_plus: f64,
    pub theta_minus: f64,
    /// Goodness sign of every CF layer except the last (which uses +1).
    pub hidden_eta: f64,
}

impl Default for CfConfig {
    fn default() -> Self {
        Self {
            variant: CfVariant::Temperature,
            theta_plus: 1.0,
            theta_minus: 0.1,
            hidden_eta: -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceConfig {
    pub synthetic: SyntheticTrajectoryParams,
    pub bank_size: usize,
    pub bank_seed: u64,
    /// Measured bank in `device_id,pulse_index,conductance_uS` form.
    pub bank_file: Option<PathBuf>,
    /// `large-array`, `mac-array` or `mac-array-fast-read`.
    pub tech: String,
    /// Read gain; the weight scale is `kappa * v_read`.
    pub kappa: f64,
    pub max_prepulses: usize,
    pub read_model: ReadModelParams,
    pub exhaustion: ExhaustionPolicy,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticTrajectoryParams::default(),
            bank_size: 1268,
            bank_seed: 7,
            bank_file: None,
            tech: "mac-array".into(),
            kappa: 6.0e4,
            max_prepulses: 50,
            read_model: ReadModelParams::default(),
            exhaustion: ExhaustionPolicy::Skip,
        }
    }
}

impl DeviceConfig {
    pub fn tech_params(&self) -> Result<DeviceTechParams> {
        DeviceTechParams::by_name(&self.tech)
            .ok_or_else(|| Error::Config(format!("unknown tech profile {:?}", self.tech)))
    }

    pub fn build_bank(&self) -> Result<TrajectoryBank> {
        match &self.bank_file {
            Some(path) => {
                let f = std::fs::File::open(path)?;
                TrajectoryBank::read_csv(std::io::BufReader::new(f), &path.display().to_string())
            }
            None => {
                if self.bank_size == 0 {
                    return Err(Error::Config("device.bank_size must be >= 1".into()));
                }
                generate_trajectory_bank(&self.synthetic, self.bank_size, self.bank_seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgingConfig {
    pub days: Vec<f64>,
    pub repeats: usize,
}

impl Default for AgingConfig {
    fn default() -> Self {
        Self {
            days: vec![0.0, 8.0, 20.0, 90.0],
            repeats: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub task: TaskConfig,
    pub split: SplitSpec,
    pub algorithm: Algorithm,
    /// Only consulted by backpropagation.
    pub arch: Arch,
    pub hidden_units: usize,
    pub cluster_size: usize,
    /// Epochs per phase, in schedule order.
    pub epochs: Option<Vec<usize>>,
    pub batch_size: usize,
    /// Update threshold per layer.
    pub tau: Option<Vec<f64>>,
    /// Float-mode step: learning rate (SGD) or step size (sign).
    pub lr: Option<f64>,
    pub float_update: Option<FloatUpdate>,
    /// Std of float-mode initial weights, times `1/sqrt(n_in)`.
    pub float_init_gain: f64,
    pub plan_mode: PlanMode,
    pub sff: SffConfig,
    pub cf: CfConfig,
    pub device: DeviceConfig,
    pub drift: DriftModelParams,
    pub aging: AgingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            task: TaskConfig::default(),
            split: SplitSpec::default(),
            algorithm: Algorithm::Cf,
            arch: Arch::TwoLayer,
            hidden_units: 48,
            cluster_size: 12,
            epochs: None,
            batch_size: 16,
            tau: None,
            lr: None,
            float_update: None,
            float_init_gain: 1.0,
            plan_mode: PlanMode::Descent,
            sff: SffConfig::default(),
            cf: CfConfig::default(),
            device: DeviceConfig::default(),
            drift: DriftModelParams::default(),
            aging: AgingConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(|e| {
            Error::Config(format!(
                "{}: {}",
                path.display(),
                e.to_string().trim_start_matches("config error: ")
            ))
        })
    }

    /// Default epochs per phase.
    pub fn default_epochs(&self) -> Vec<usize> {
        match (self.algorithm.rule(), self.arch) {
            (crate::trainer::Rule::Bp, Arch::Perceptron) => vec![20],
            (crate::trainer::Rule::Bp, Arch::TwoLayer) => vec![10, 20],
            _ => vec![15, 15],
        }
    }

    /// Default per-layer thresholds (gradient units differ between rules).
    pub fn default_tau(&self) -> Vec<f64> {
        use crate::trainer::Rule;
        match (self.algorithm.rule(), self.arch) {
            (Rule::Bp, Arch::Perceptron) => vec![0.01],
            (Rule::Bp, Arch::TwoLayer) => vec![0.02, 0.005],
            (Rule::Sff, _) => vec![0.03, 0.0005],
            (Rule::Cf, _) => vec![0.002, 0.0003],
        }
    }

    /// Backpropagation uses SGD; the forward-only rules saturate their
    /// logistic losses under SGD and train with thresholded sign steps.
    pub fn default_float_update(&self) -> FloatUpdate {
        match self.algorithm.rule() {
            crate::trainer::Rule::Bp => FloatUpdate::Sgd,
            _ => FloatUpdate::Sign,
        }
    }

    pub fn default_lr(&self) -> f64 {
        match self.float_update.unwrap_or_else(|| self.default_float_update()) {
            FloatUpdate::Sgd => 0.05,
            FloatUpdate::Sign => 1e-3,
        }
    }

    /// Copy with every optional knob filled in.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if c.epochs.is_none() {
            c.epochs = Some(self.default_epochs());
        }
        if c.tau.is_none() {
            c.tau = Some(self.default_tau());
        }
        if c.lr.is_none() {
            c.lr = Some(self.default_lr());
        }
        if c.float_update.is_none() {
            c.float_update = Some(self.default_float_update());
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.hidden_units == 0 || self.cluster_size == 0 {
            return bad("hidden_units and cluster_size must be >= 1".into());
        }
        let r = self.resolved();
        let lr = r.lr.expect("resolved");
        if !(lr > 0.0 && lr.is_finite()) {
            return bad(format!("lr must be > 0, got {lr}"));
        }
        let epochs = r.epochs.as_ref().expect("resolved");
        if epochs.len() != self.default_epochs().len() {
            return bad(format!(
                "{} epoch entries for a schedule with {} phases",
                epochs.len(),
                self.default_epochs().len()
            ));
        }
        let tau = r.tau.as_ref().expect("resolved");
        if tau.len() != self.default_tau().len() {
            return bad(format!(
                "{} tau entries for {} layers",
                tau.len(),
                self.default_tau().len()
            ));
        }
        if tau.iter().any(|t| !(*t >= 0.0)) {
            return bad("tau must be >= 0".into());
        }
        if self.cf.hidden_eta != 1.0 && self.cf.hidden_eta != -1.0 {
            return bad("cf.hidden_eta must be +1 or -1".into());
        }
        crate::rules::CfParams {
            variant: self.cf.variant,
            theta_plus: self.cf.theta_plus,
            theta_minus: self.cf.theta_minus,
            eta: 1.0,
        }
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.sff.token_amplitude.is_finite()) {
            return bad("sff.token_amplitude must be finite".into());
        }
        if !(self.device.kappa > 0.0) {
            return bad("device.kappa must be > 0".into());
        }
        self.device.tech_params()?;
        self.device
            .read_model
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.device
            .synthetic
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.drift.validate().map_err(|e| Error::Config(e.to_string()))?;
        let s = &self.split;
        if !(s.train > 0.0 && s.val > 0.0 && s.test > 0.0) || ((s.train + s.val + s.test) - 1.0).abs() > 1e-9 {
            return bad("split fractions must be positive and sum to 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json_str(r#"{"seed": 1, "bogus": 2}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"device": {"kapa": 2}}"#).is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c = RunConfig::from_json_str(r#"{"algorithm": "bp", "arch": "perceptron"}"#).unwrap();
        let r = c.resolved();
        assert_eq!(r.epochs, Some(vec![20]));
        assert_eq!(r.batch_size, 16);
        c.validate().unwrap();
    }

    #[test]
    fn resolved_round_trips() {
        let r = RunConfig::default().resolved();
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), r);
    }

    #[test]
    fn validation_catches_bad_values() {
        let c = RunConfig {
            epochs: Some(vec![1]),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.device.tech = "nope".into();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.split.test = 0.2;
        assert!(c.validate().is_err());
    }
}
