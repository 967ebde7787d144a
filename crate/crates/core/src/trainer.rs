//! Hardware-in-the-loop style training: layer-wise schedules, minibatch
//! gradients, sign-only pulse updates, evaluation, aging and pulse
//! statistics.
//!
//! Each step reads the arrays (mapped weights), runs the forward pass in
//! floating point, computes the rule's gradient for the trainable layer,
//! thresholds it into a pulse plan and applies it, then re-reads the array.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Arch, FloatUpdate, HeadInput, RunConfig, SffInference};
use crate::crossbar::{ActionOutcome, ArraySnapshot, CrossbarArray, Polarity, ReadEvent, ReadModelParams};
use crate::data::{split_indices, FeatureDataset, SplitIndices};
use crate::device::{drift_sample, DeviceTechParams, DriftModelParams, TrajectoryBank};
use crate::energy::{EnergyLedger, LedgerSummary};
use crate::error::{Error, Result};
use crate::rules::{
    bp_gradients, build_pos_neg, cf_loss, cluster_mask, goodness, labelled_token, neutral_token, sff_loss,
    sign_descent_step_float, threshold_sign_plan, Activation, CfBuffer, CfParams, LayerSpec, PlanMode, SffBuffer,
    SffParams,
};
use crate::stats::mean_std;
use crate::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Bp,
    Sff,
    Cf,
    FloatBp,
    FloatSff,
    FloatCf,
}

/// Gradient producer behind an algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Bp,
    Sff,
    Cf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Bp,
        Algorithm::Sff,
        Algorithm::Cf,
        Algorithm::FloatBp,
        Algorithm::FloatSff,
        Algorithm::FloatCf,
    ];

    pub fn rule(self) -> Rule {
        match self {
            Algorithm::Bp | Algorithm::FloatBp => Rule::Bp,
            Algorithm::Sff | Algorithm::FloatSff => Rule::Sff,
            Algorithm::Cf | Algorithm::FloatCf => Rule::Cf,
        }
    }

    /// Whether weights live on crossbar arrays.
    pub fn is_device(self) -> bool {
        matches!(self, Algorithm::Bp | Algorithm::Sff | Algorithm::Cf)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bp => "bp",
            Algorithm::Sff => "sff",
            Algorithm::Cf => "cf",
            Algorithm::FloatBp => "float-bp",
            Algorithm::FloatSff => "float-sff",
            Algorithm::FloatCf => "float-cf",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phase {
    pub layer: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub algorithm: Algorithm,
    pub phases: Vec<Phase>,
    pub batch_size: usize,
    /// Threshold per layer.
    pub tau: Vec<f64>,
    pub lr: f64,
    pub float_update: FloatUpdate,
    pub plan_mode: PlanMode,
}

impl Schedule {
    /// Backpropagation trains output to input; forward-only rules input to output.
    pub fn from_config(c: &RunConfig) -> Self {
        let r = c.resolved();
        let epochs = r.epochs.clone().expect("resolved");
        let layers: Vec<usize> = match (c.algorithm.rule(), c.arch) {
            (Rule::Bp, Arch::Perceptron) => vec![0],
            (Rule::Bp, Arch::TwoLayer) => vec![1, 0],
            _ => vec![0, 1],
        };
        Self {
            algorithm: c.algorithm,
            phases: layers
                .into_iter()
                .zip(epochs)
                .map(|(layer, epochs)| Phase { layer, epochs })
                .collect(),
            batch_size: c.batch_size,
            tau: r.tau.clone().expect("resolved"),
            lr: r.lr.expect("resolved"),
            float_update: r.float_update.expect("resolved"),
            plan_mode: c.plan_mode,
        }
    }

    pub fn validate(&self, n_layers: usize) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::Config("schedule has no phases".into()));
        }
        if let Some(p) = self.phases.iter().find(|p| p.layer >= n_layers) {
            return Err(Error::Config(format!("phase trains layer {} of {n_layers}", p.layer)));
        }
        if self.tau.len() != n_layers {
            return Err(Error::Config(format!(
                "{} tau values for {n_layers} layers",
                self.tau.len()
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.phases.iter().map(|p| p.epochs).sum()
    }
}

/// Training objective attached to a layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    CrossEntropy,
    Sff(SffParams),
    Cf(CfParams),
}

/// Everything needed to run inference given per-layer weight matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub algorithm: Algorithm,
    pub layers: Vec<LayerSpec>,
    pub objectives: Vec<Objective>,
    pub n_features: usize,
    pub n_classes: usize,
    pub token_amplitude: f64,
    pub sff_inference: SffInference,
    pub head_input: HeadInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    #[serde(skip)]
    pub predictions: Vec<usize>,
}

/// Argmax with ties broken by the lowest index.
fn argmax(v: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.into_iter().enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Class whose cluster carries the largest `sum h^2`.
pub fn cluster_prediction(h: ndarray::ArrayView1<f64>, spec: &LayerSpec) -> usize {
    let c = spec.clusters.expect("cluster layer");
    argmax((0..c.n_classes).map(|k| {
        h.iter()
            .skip(k * c.cluster_size)
            .take(c.cluster_size)
            .map(|v| v * v)
            .sum::<f64>()
    }))
}

fn log_softmax_ce(z: ndarray::ArrayView1<f64>, y: usize) -> f64 {
    let m = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[y]
}

impl ModelSpec {
    pub fn from_config(c: &RunConfig, n_features: usize, n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        let h = c.hidden_units;
        let cs = c.cluster_size;
        let cf = |eta: f64| {
            Objective::Cf(CfParams {
                variant: c.cf.variant,
                theta_plus: c.cf.theta_plus,
                theta_minus: c.cf.theta_minus,
                eta,
            })
        };
        let (layers, objectives) = match (c.algorithm.rule(), c.arch) {
            (Rule::Bp, Arch::Perceptron) => (
                vec![LayerSpec::dense(n_features, n_classes, Activation::Identity)],
                vec![Objective::CrossEntropy],
            ),
            (Rule::Bp, Arch::TwoLayer) => (
                vec![
                    LayerSpec::dense(n_features, h, Activation::Relu),
                    LayerSpec::dense(h, n_classes, Activation::Identity),
                ],
                vec![Objective::CrossEntropy; 2],
            ),
            (Rule::Sff, _) => (
                vec![
                    LayerSpec::dense(n_features + n_classes, h, Activation::Relu),
                    LayerSpec::clustered(h, n_classes, cs, 1.0),
                ],
                vec![
                    Objective::Sff(SffParams {
                        theta_plus: c.sff.theta_plus,
                        theta_minus: c.sff.theta_minus,
                        eta: 1.0,
                    }),
                    cf(1.0),
                ],
            ),
            (Rule::Cf, _) => (
                vec![
                    LayerSpec::clustered(n_features, n_classes, cs, c.cf.hidden_eta),
                    LayerSpec::clustered(n_classes * cs, n_classes, cs, 1.0),
                ],
                vec![cf(c.cf.hidden_eta), cf(1.0)],
            ),
        };
        for l in &layers {
            l.validate()?;
        }
        Ok(Self {
            algorithm: c.algorithm,
            layers,
            objectives,
            n_features,
            n_classes,
            token_amplitude: c.sff.token_amplitude,
            sff_inference: c.sff.inference,
            head_input: c.sff.head_input,
        })
    }

    fn head_params(&self) -> Option<CfParams> {
        match self.objectives.last() {
            Some(Objective::Cf(p)) => Some(*p),
            _ => None,
        }
    }

    /// Appends the label-free token for SFF models; identity otherwise.
    pub fn encode_inference(&self, x: ArrayView2<f64>) -> Array2<f64> {
        if self.algorithm.rule() != Rule::Sff {
            return x.to_owned();
        }
        self.encode_with(x, |row| neutral_token(row, self.n_classes, self.token_amplitude))
    }

    fn encode_with(&self, x: ArrayView2<f64>, f: impl Fn(ndarray::ArrayView1<f64>) -> Array1<f64>) -> Array2<f64> {
        let d = x.ncols()
            + if self.algorithm.rule() == Rule::Sff {
                self.n_classes
            } else {
                0
            };
        let mut out = Array2::zeros((x.nrows(), d));
        for (mut o, r) in out.rows_mut().into_iter().zip(x.rows()) {
            o.assign(&f(r));
        }
        out
    }

    /// Inference through `fwd(layer, input)`.
    pub fn infer(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
        mut fwd: impl FnMut(usize, &Array2<f64>) -> Array2<f64>,
    ) -> Evaluation {
        let n = x.nrows();
        let mut a = self.encode_inference(x);
        for k in 0..self.layers.len() {
            a = fwd(k, &a);
        }
        let (predictions, loss) = match self.head_params() {
            None => {
                let preds: Vec<usize> = a.rows().into_iter().map(|z| argmax(z.iter().copied())).collect();
                let loss = a
                    .rows()
                    .into_iter()
                    .zip(labels)
                    .map(|(z, &y)| log_softmax_ce(z, y))
                    .sum::<f64>()
                    / n.max(1) as f64;
                (preds, loss)
            }
            Some(p) => {
                let head = self.layers.last().expect("layers");
                let preds: Vec<usize> = a.rows().into_iter().map(|h| cluster_prediction(h, head)).collect();
                let loss = a
                    .rows()
                    .into_iter()
                    .zip(labels)
                    .map(|(h, &y)| {
                        let z = cluster_mask(head, y).expect("valid label");
                        cf_loss(h, z.view(), &p).expect("shapes")
                    })
                    .sum::<f64>()
                    / n.max(1) as f64;
                (preds, loss)
            }
        };
        let predictions = if self.algorithm.rule() == Rule::Sff && self.sff_inference == SffInference::MultiPass {
            self.multipass_predictions(x, |k, a| fwd(k, a))
        } else {
            predictions
        };
        let correct = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
        Evaluation {
            accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
            loss,
            predictions,
        }
    }

    /// SFF label sweep: one first-layer pass per label token, pick the
    /// label with the largest positive goodness.
    pub fn multipass_predictions(
        &self,
        x: ArrayView2<f64>,
        mut fwd: impl FnMut(usize, &Array2<f64>) -> Array2<f64>,
    ) -> Vec<usize> {
        let eta = self.layers[0].eta;
        let scores: Vec<Vec<f64>> = (0..self.n_classes)
            .map(|c| {
                let xc = self.encode_with(x, |r| labelled_token(r, c, self.n_classes, self.token_amplitude));
                let h = fwd(0, &xc);
                h.rows().into_iter().map(|r| goodness(r, eta)).collect()
            })
            .collect();
        (0..x.nrows()).map(|i| argmax(scores.iter().map(|s| s[i]))).collect()
    }

    /// Noiseless evaluation under fixed weight matrices (`n_out x n_in`).
    pub fn evaluate(&self, weights: &[Array2<f64>], ds: &FeatureDataset) -> Result<Evaluation> {
        self.check_weights(weights)?;
        self.check_dataset(ds)?;
        Ok(self.infer(ds.features.view(), &ds.labels, |k, a| {
            self.layers[k].forward(weights[k].view(), a.view())
        }))
    }

    pub fn check_weights(&self, weights: &[Array2<f64>]) -> Result<()> {
        if weights.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "{} weight matrices for {} layers",
                weights.len(),
                self.layers.len()
            )));
        }
        for (k, (w, l)) in weights.iter().zip(&self.layers).enumerate() {
            if w.dim() != (l.n_out, l.n_in) {
                return Err(Error::shape(format!(
                    "layer {k} weights are {:?}, expected ({}, {})",
                    w.dim(),
                    l.n_out,
                    l.n_in
                )));
            }
        }
        Ok(())
    }

    pub fn check_dataset(&self, ds: &FeatureDataset) -> Result<()> {
        if ds.dim() != self.n_features {
            return Err(Error::shape(format!(
                "dataset has {} features, model expects {}",
                ds.dim(),
                self.n_features
            )));
        }
        if ds.n_classes != self.n_classes {
            return Err(Error::shape(format!(
                "dataset has {} classes, model expects {}",
                ds.n_classes, self.n_classes
            )));
        }
        Ok(())
    }
}

/// Storage of one layer's weights.
#[derive(Debug, Clone)]
pub enum LayerWeights {
    Device(CrossbarArray),
    Float(Array2<f64>),
}

impl LayerWeights {
    /// Weights as `n_out x n_in`.
    pub fn matrix(&self) -> Array2<f64> {
        match self {
            LayerWeights::Device(a) => a.map_weights().t().to_owned(),
            LayerWeights::Float(w) => w.clone(),
        }
    }

    pub fn as_array(&self) -> Option<&CrossbarArray> {
        match self {
            LayerWeights::Device(a) => Some(a),
            LayerWeights::Float(_) => None,
        }
    }
}

/// Successful reset pulses per device, crossbar layout (`n_in x n_out`).
#[derive(Debug, Clone, PartialEq)]
pub struct PulseCounts {
    pub plus: Array2<u64>,
    pub minus: Array2<u64>,
}

impl PulseCounts {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            plus: Array2::zeros((rows, cols)),
            minus: Array2::zeros((rows, cols)),
        }
    }

    pub fn total(&self) -> u64 {
        self.plus.sum() + self.minus.sum()
    }

    pub fn devices(&self) -> usize {
        self.plus.len() * 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub phase: usize,
    pub layer: usize,
    pub epoch: usize,
    pub batch: usize,
    /// Pulses delivered (device modes) or entries moved by a sign step.
    pub updates: usize,
    pub skipped: usize,
    pub reinits: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Global epoch counter; 0 is the initialized network.
    pub epoch: usize,
    pub phase: Option<usize>,
    pub layer: Option<usize>,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub cumulative_updates: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEvaluation {
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    /// SFF only: accuracy of the C-pass label sweep on the test split.
    pub sff_multipass_accuracy: Option<f64>,
    /// SFF only: fraction of test samples where both protocols agree.
    pub sff_protocol_agreement: Option<f64>,
}

/// Train/validation/test datasets.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: FeatureDataset,
    pub val: FeatureDataset,
    pub test: FeatureDataset,
    pub indices: SplitIndices,
    pub provenance: String,
    /// Content hash of the full dataset.
    pub data_hash: String,
}

/// Loads the task and splits it.
pub fn prepare_splits(config: &RunConfig) -> Result<Splits> {
    let ds = config.task.load()?;
    let indices = split_indices(&ds, &config.split)?;
    let (train, val, test) = indices.apply(&ds);
    Ok(Splits {
        train,
        val,
        test,
        indices,
        provenance: ds.provenance.clone(),
        data_hash: dataset_hash(&ds),
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn dataset_hash(ds: &FeatureDataset) -> String {
    let mut h = Sha256::new();
    for v in ds.features.iter() {
        h.update(v.to_le_bytes());
    }
    for y in &ds.labels {
        h.update((*y as u64).to_le_bytes());
    }
    hex(&h.finalize())
}

/// `blob <len>\0` + content, git-style.
fn content_hash(parts: &[&[u8]]) -> String {
    let len: usize = parts.iter().map(|p| p.len()).sum();
    let mut h = Sha256::new();
    h.update(format!("blob {len}\0").as_bytes());
    for p in parts {
        h.update(p);
    }
    hex(&h.finalize())
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    /// Resolved configuration.
    pub config: RunConfig,
    pub model: ModelSpec,
    pub schedule: Schedule,
    pub layers: Vec<LayerWeights>,
    pub log: EventLog,
    /// Per layer; `None` for float layers.
    pub pulse_counts: Vec<Option<PulseCounts>>,
    pub ledger: EnergyLedger,
    /// Largest per-batch working-memory scalar count seen per layer.
    pub working_memory_peak: Vec<usize>,
    pub final_eval: Option<FinalEvaluation>,
    mats: Vec<Array2<f64>>,
    row_sums: Vec<Option<Array1<f64>>>,
    tech: Option<DeviceTechParams>,
    bank: Option<TrajectoryBank>,
    rng_shuffle: Rng,
    rng_token: Rng,
    rng_noise: Rng,
    rng_reinit: Rng,
    updates_so_far: u64,
}

impl TrainingRun {
    /// Builds and initializes a network. Device algorithms need a bank.
    pub fn new(config: &RunConfig, n_features: usize, n_classes: usize, bank: Option<&TrajectoryBank>) -> Result<Self> {
        config.validate()?;
        let config = config.resolved();
        let model = ModelSpec::from_config(&config, n_features, n_classes)?;
        let schedule = Schedule::from_config(&config);
        schedule.validate(model.layers.len())?;
        let seed = config.seed;
        let mut rng_init = rng_from_seed(derive_seed(seed, 1));
        let device = config.algorithm.is_device();
        let (tech, bank) = if device {
            let bank = bank
                .filter(|b| !b.is_empty())
                .ok_or_else(|| Error::Config("device algorithms need a non-empty trajectory bank".into()))?;
            (Some(config.device.tech_params()?), Some(bank.clone()))
        } else {
            (None, None)
        };
        let mut layers = Vec::with_capacity(model.layers.len());
        for spec in &model.layers {
            let lw = match (&tech, &bank) {
                (Some(t), Some(b)) => LayerWeights::Device(CrossbarArray::initialize(
                    spec.n_in,
                    spec.n_out,
                    config.device.kappa,
                    t.clone(),
                    b,
                    config.device.max_prepulses,
                    &mut rng_init,
                )?),
                _ => {
                    let sd = config.float_init_gain / (spec.n_in as f64).sqrt();
                    LayerWeights::Float(Array2::from_shape_fn((spec.n_out, spec.n_in), |_| {
                        let z: f64 = StandardNormal.sample(&mut rng_init);
                        sd * z
                    }))
                }
            };
            layers.push(lw);
        }
        let pulse_counts = layers
            .iter()
            .map(|l| l.as_array().map(|a| PulseCounts::new(a.rows(), a.cols())))
            .collect();
        let n_layers = layers.len();
        let tech_name = tech.as_ref().map_or_else(|| "none".to_string(), |t| t.name.clone());
        let mut run = Self {
            model,
            schedule,
            log: EventLog::default(),
            pulse_counts,
            ledger: EnergyLedger::new(tech_name),
            working_memory_peak: vec![0; n_layers],
            final_eval: None,
            mats: Vec::new(),
            row_sums: vec![None; n_layers],
            tech,
            bank,
            rng_shuffle: rng_from_seed(derive_seed(seed, 2)),
            rng_token: rng_from_seed(derive_seed(seed, 3)),
            rng_noise: rng_from_seed(derive_seed(seed, 4)),
            rng_reinit: rng_from_seed(derive_seed(seed, 5)),
            updates_so_far: 0,
            layers,
            config,
        };
        run.mats = run.layers.iter().map(|l| l.matrix()).collect();
        for k in 0..n_layers {
            run.refresh_row_sums(k);
        }
        Ok(run)
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn tech(&self) -> Option<&DeviceTechParams> {
        self.tech.as_ref()
    }

    /// Current weights, `n_out x n_in` per layer.
    pub fn weights(&self) -> &[Array2<f64>] {
        &self.mats
    }

    fn refresh_row_sums(&mut self, k: usize) {
        self.row_sums[k] = self.layers[k].as_array().map(|a| {
            let (gp, gm) = a.conductances();
            (gp + gm).sum_axis(Axis(1))
        });
    }

    /// Forward through layer `k`, logging the array read and applying read
    /// noise on device layers.
    fn forward_layer(&mut self, k: usize, x: &Array2<f64>) -> Array2<f64> {
        let spec = &self.model.layers[k];
        let mut z = x.dot(&self.mats[k].t());
        if let (Some(rs), Some(tech)) = (&self.row_sums[k], &self.tech) {
            let weighted: f64 = x
                .rows()
                .into_iter()
                .map(|r| r.iter().zip(rs.iter()).map(|(v, g)| v * v * g).sum::<f64>())
                .sum();
            self.ledger.record_read(ReadEvent {
                weighted_conductance: weighted,
                v_read: tech.v_read,
                t_read: tech.t_read,
            });
            self.ledger.record_macs((x.nrows() * spec.n_in * spec.n_out) as u64);
            let rm: ReadModelParams = self.config.device.read_model;
            if rm.enabled {
                let kappa = self.config.device.kappa;
                for v in z.iter_mut() {
                    let m: f64 = StandardNormal.sample(&mut self.rng_noise);
                    let a: f64 = StandardNormal.sample(&mut self.rng_noise);
                    *v = *v * (1.0 + rm.multiplicative_sigma * m) + kappa * rm.additive_sigma * a;
                }
            }
        }
        let act = spec.activation;
        z.mapv_into(|v| act.apply(v))
    }

    /// Accuracy and loss of the current network on `ds` (reads are logged).
    pub fn evaluate(&mut self, ds: &FeatureDataset) -> Result<Evaluation> {
        self.model.check_dataset(ds)?;
        let model = self.model.clone();
        Ok(model.infer(ds.features.view(), &ds.labels, |k, a| self.forward_layer(k, a)))
    }

    /// Runs every phase of the schedule.
    pub fn train(&mut self, data: &Splits) -> Result<()> {
        for ds in [&data.train, &data.val, &data.test] {
            self.model.check_dataset(ds)?;
        }
        if data.train.is_empty() {
            return Err(Error::Config("empty training split".into()));
        }
        self.record_epoch(0, None, None, data)?;
        let phases = self.schedule.phases.clone();
        let mut global_epoch = 0;
        for (pi, phase) in phases.iter().enumerate() {
            for _ in 0..phase.epochs {
                global_epoch += 1;
                let mut order: Vec<usize> = (0..data.train.len()).collect();
                order.shuffle(&mut self.rng_shuffle);
                for (bi, chunk) in order.chunks(self.schedule.batch_size).enumerate() {
                    let xb = data.train.features.select(Axis(0), chunk);
                    let yb: Vec<usize> = chunk.iter().map(|&i| data.train.labels[i]).collect();
                    let (grad, loss) = self.layer_gradient(phase.layer, &xb, &yb)?;
                    let (updates, skipped, reinits) = self.apply_gradient(phase.layer, &grad)?;
                    self.updates_so_far += updates as u64;
                    self.log.steps.push(StepRecord {
                        phase: pi,
                        layer: phase.layer,
                        epoch: global_epoch,
                        batch: bi,
                        updates,
                        skipped,
                        reinits,
                        loss,
                    });
                }
                self.record_epoch(global_epoch, Some(pi), Some(phase.layer), data)?;
            }
        }
        let train = self.evaluate(&data.train)?;
        let val = self.evaluate(&data.val)?;
        let test = self.evaluate(&data.test)?;
        let (mp_acc, agree) = if self.model.algorithm.rule() == Rule::Sff {
            let model = self.model.clone();
            let mp = model.multipass_predictions(data.test.features.view(), |k, a| self.forward_layer(k, a));
            let n = data.test.len().max(1) as f64;
            let acc = mp.iter().zip(&data.test.labels).filter(|(p, y)| p == y).count() as f64 / n;
            let agree = mp.iter().zip(&test.predictions).filter(|(a, b)| a == b).count() as f64 / n;
            (Some(acc), Some(agree))
        } else {
            (None, None)
        };
        self.ledger.refresh_totals();
        self.final_eval = Some(FinalEvaluation {
            train_accuracy: train.accuracy,
            val_accuracy: val.accuracy,
            test_accuracy: test.accuracy,
            test_loss: test.loss,
            sff_multipass_accuracy: mp_acc,
            sff_protocol_agreement: agree,
        });
        Ok(())
    }

    fn record_epoch(&mut self, epoch: usize, phase: Option<usize>, layer: Option<usize>, data: &Splits) -> Result<()> {
        let tr = self.evaluate(&data.train)?;
        let va = self.evaluate(&data.val)?;
        self.log.epochs.push(EpochRecord {
            epoch,
            phase,
            layer,
            train_accuracy: tr.accuracy,
            train_loss: tr.loss,
            val_accuracy: va.accuracy,
            val_loss: va.loss,
            cumulative_updates: self.updates_so_far,
        });
        Ok(())
    }

    fn note_memory(&mut self, layer: usize, scalars: usize) {
        let p = &mut self.working_memory_peak[layer];
        *p = (*p).max(scalars);
    }

    fn encode_batch(&mut self, xb: &Array2<f64>, yb: &[usize], input: HeadInput) -> Array2<f64> {
        let c = self.model.n_classes;
        let amp = self.model.token_amplitude;
        let mut out = Array2::zeros((xb.nrows(), xb.ncols() + c));
        for (k, mut row) in out.rows_mut().into_iter().enumerate() {
            row.assign(&match input {
                HeadInput::Neutral => neutral_token(xb.row(k), c, amp),
                HeadInput::Positive => labelled_token(xb.row(k), yb[k], c, amp),
            });
        }
        out
    }

    /// Rule gradient (`n_out x n_in`) of `layer` on one minibatch, plus the
    /// batch loss of that layer's objective.
    fn layer_gradient(&mut self, layer: usize, xb: &Array2<f64>, yb: &[usize]) -> Result<(Array2<f64>, f64)> {
        let n = xb.nrows() as f64;
        match self.model.objectives[layer] {
            Objective::CrossEntropy => {
                let mut a = xb.clone();
                for k in 0..self.model.layers.len() {
                    let out = self.forward_layer(k, &a);
                    self.note_memory(k, a.len() + out.len());
                    a = out;
                }
                let views: Vec<ArrayView2<f64>> = self.mats.iter().map(|m| m.view()).collect();
                let trainable: Vec<bool> = (0..views.len()).map(|k| k == layer).collect();
                let (mut g, loss) = bp_gradients(&views, xb.view(), yb, &trainable)?;
                Ok((std::mem::replace(&mut g[layer].grad, Array2::zeros((0, 0))), loss))
            }
            Objective::Sff(p) => {
                let c = self.model.n_classes;
                let d = xb.ncols() + c;
                let mut x_pos = Array2::zeros((xb.nrows(), d));
                let mut x_neg = Array2::zeros((xb.nrows(), d));
                for (k, &y) in yb.iter().enumerate() {
                    let pn = build_pos_neg(xb.row(k), y, c, self.model.token_amplitude, &mut self.rng_token)?;
                    x_pos.row_mut(k).assign(&pn.pos);
                    x_neg.row_mut(k).assign(&pn.neg);
                }
                let h_pos = self.forward_layer(layer, &x_pos);
                let h_neg = self.forward_layer(layer, &x_neg);
                let n_h = self.model.layers[layer].n_out;
                let buf = SffBuffer::collect(x_pos, h_pos, x_neg, h_neg, &p)?;
                self.note_memory(layer, buf.scalar_count());
                let mut loss = 0.0;
                for (hp, hn) in buf.h_pos.rows().into_iter().zip(buf.h_neg.rows()) {
                    loss += sff_loss(hp, hn, &p, n_h)?;
                }
                Ok((buf.gradient().grad, loss / n))
            }
            Objective::Cf(p) => {
                let mut a = if self.model.algorithm.rule() == Rule::Sff {
                    let input = self.model.head_input;
                    self.encode_batch(xb, yb, input)
                } else {
                    xb.clone()
                };
                for k in 0..layer {
                    a = self.forward_layer(k, &a);
                }
                let h = self.forward_layer(layer, &a);
                let spec = self.model.layers[layer].clone();
                let buf = CfBuffer::collect(a, h, yb.to_vec(), &p, &spec)?;
                self.note_memory(layer, buf.scalar_count());
                let mut loss = 0.0;
                for (hr, &y) in buf.h.rows().into_iter().zip(yb) {
                    loss += cf_loss(hr, cluster_mask(&spec, y)?.view(), &p)?;
                }
                Ok((buf.gradient().grad, loss / n))
            }
        }
    }

    /// Returns `(updates, skipped, reinits)`.
    fn apply_gradient(&mut self, layer: usize, grad: &Array2<f64>) -> Result<(usize, usize, usize)> {
        let tau = self.schedule.tau[layer];
        let out = match &mut self.layers[layer] {
            LayerWeights::Device(array) => {
                let plan = threshold_sign_plan(grad.view(), tau, self.schedule.plan_mode);
                let bank = self.bank.as_ref().expect("device runs hold a bank");
                let report =
                    array.apply_update_plan(&plan, self.config.device.exhaustion, bank, &mut self.rng_reinit)?;
                let counts = self.pulse_counts[layer].as_mut().expect("device layer counts");
                for (a, o) in &report.outcomes {
                    if !matches!(o, ActionOutcome::Skipped { .. }) {
                        let slot = match a.polarity {
                            Polarity::PulsePlus => &mut counts.plus,
                            Polarity::PulseMinus => &mut counts.minus,
                        };
                        slot[(a.row, a.col)] += 1;
                    }
                }
                self.ledger.record_report(&report);
                (report.applied(), report.skipped(), report.reinits())
            }
            LayerWeights::Float(w) => match self.schedule.float_update {
                FloatUpdate::Sgd => {
                    w.scaled_add(-self.schedule.lr, grad);
                    (0, 0, 0)
                }
                FloatUpdate::Sign => {
                    let moved = grad.iter().filter(|g| g.abs() > tau).count();
                    sign_descent_step_float(w, grad.view(), self.schedule.lr, tau)?;
                    (moved, 0, 0)
                }
            },
        };
        self.mats[layer] = self.layers[layer].matrix();
        self.refresh_row_sums(layer);
        Ok(out)
    }

    pub fn pulse_statistics(&self) -> PulseStatistics {
        pulse_statistics(self)
    }

    /// Conductance (device) or weight (float) state for aging studies.
    pub fn aging_layers(&self) -> Vec<AgingLayer> {
        self.layers
            .iter()
            .map(|l| match l {
                LayerWeights::Device(a) => {
                    let (g_plus, g_minus) = a.conductances();
                    AgingLayer::Device {
                        g_plus,
                        g_minus,
                        scale: a.scale_s(),
                    }
                }
                LayerWeights::Float(w) => AgingLayer::Float(w.clone()),
            })
            .collect()
    }

    /// Writes every run artifact into `dir` (created if needed).
    pub fn write_artifacts(&self, dir: &Path, data: &Splits) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let config_json = serde_json::to_vec(&self.config)?;
        let manifest = RunManifest {
            format_version: 1,
            algorithm: self.model.algorithm,
            seed: self.config.seed,
            stream_seeds: (1..=5).map(|s| derive_seed(self.config.seed, s)).collect(),
            input_hash: content_hash(&[&config_json, data.data_hash.as_bytes()]),
            data_hash: data.data_hash.clone(),
            dataset: data.provenance.clone(),
            split_sizes: [data.train.len(), data.val.len(), data.test.len()],
            model: self.model.clone(),
            schedule: self.schedule.clone(),
            layers: self
                .layers
                .iter()
                .enumerate()
                .map(|(k, l)| match l {
                    LayerWeights::Device(a) => LayerManifest {
                        index: k,
                        storage: "device".into(),
                        rows: a.rows(),
                        cols: a.cols(),
                        scale_s: Some(a.scale_s()),
                        gain_kappa: Some(a.gain_kappa()),
                        file: format!("array_layer{k}.csv"),
                    },
                    LayerWeights::Float(w) => LayerManifest {
                        index: k,
                        storage: "float".into(),
                        rows: w.nrows(),
                        cols: w.ncols(),
                        scale_s: None,
                        gain_kappa: None,
                        file: format!("weights_layer{k}.csv"),
                    },
                })
                .collect(),
            tech: self.tech.clone(),
            bank: self.bank.as_ref().map(|b| BankReference {
                source: match &self.config.device.bank_file {
                    Some(p) => p.display().to_string(),
                    None => "synthetic".into(),
                },
                size: b.len(),
                seed: self.config.device.bank_seed,
                min_len: b.min_len(),
            }),
            final_eval: self.final_eval.clone(),
            pulse_statistics: self.pulse_statistics(),
            working_memory_peak: self.working_memory_peak.clone(),
            config: self.config.clone(),
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
        write_json(&dir.join("split.json"), &data.indices)?;
        write_json(&dir.join("ledger.json"), &self.ledger.summary())?;

        let mut w = csv::Writer::from_path(dir.join("curve.csv"))?;
        w.write_record(["epoch", "split", "accuracy", "loss"])?;
        for e in &self.log.epochs {
            for (split, acc, loss) in [
                ("train", e.train_accuracy, e.train_loss),
                ("val", e.val_accuracy, e.val_loss),
            ] {
                w.write_record([e.epoch.to_string(), split.into(), acc.to_string(), loss.to_string()])?;
            }
        }
        if let Some(f) = &self.final_eval {
            w.write_record([
                self.schedule.total_epochs().to_string(),
                "test".into(),
                f.test_accuracy.to_string(),
                f.test_loss.to_string(),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("pulses.csv"))?;
        w.write_record(["layer", "row", "col", "count"])?;
        for (k, pc) in self.pulse_counts.iter().enumerate() {
            if let Some(pc) = pc {
                for ((r, c), p) in pc.plus.indexed_iter() {
                    w.write_record([
                        k.to_string(),
                        r.to_string(),
                        c.to_string(),
                        (p + pc.minus[(r, c)]).to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("events.csv"))?;
        w.write_record([
            "phase", "layer", "epoch", "batch", "updates", "skipped", "reinits", "loss",
        ])?;
        for s in &self.log.steps {
            w.write_record([
                s.phase.to_string(),
                s.layer.to_string(),
                s.epoch.to_string(),
                s.batch.to_string(),
                s.updates.to_string(),
                s.skipped.to_string(),
                s.reinits.to_string(),
                s.loss.to_string(),
            ])?;
        }
        w.flush()?;

        for (k, l) in self.layers.iter().enumerate() {
            match l {
                LayerWeights::Device(a) => {
                    let f = std::fs::File::create(dir.join(format!("array_layer{k}.csv")))?;
                    a.write_snapshot(std::io::BufWriter::new(f))?;
                }
                LayerWeights::Float(m) => {
                    let f = std::fs::File::create(dir.join(format!("weights_layer{k}.csv")))?;
                    write_matrix(std::io::BufWriter::new(f), m)?;
                }
            }
        }
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_matrix<W: Write>(writer: W, m: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in m.rows() {
        w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let name = path.display().to_string();
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut m = Array2::zeros((rows, cols));
    let mut seen = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let err = |msg: String| Error::Parse {
            source_name: name.clone(),
            line: i + 1,
            msg,
        };
        if i >= rows || rec.len() != cols {
            return Err(err(format!("expected {rows} rows of {cols} values")));
        }
        for (j, v) in rec.iter().enumerate() {
            m[(i, j)] = v
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad value {v:?}")))?;
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Format(format!("{name}: {seen} rows, expected {rows}")));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerManifest {
    pub index: usize,
    /// `device` or `float`.
    pub storage: String,
    pub rows: usize,
    pub cols: usize,
    pub scale_s: Option<f64>,
    pub gain_kappa: Option<f64>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankReference {
    pub source: String,
    pub size: usize,
    pub seed: u64,
    pub min_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub stream_seeds: Vec<u64>,
    pub input_hash: String,
    pub data_hash: String,
    pub dataset: String,
    pub split_sizes: [usize; 3],
    pub model: ModelSpec,
    pub schedule: Schedule,
    pub layers: Vec<LayerManifest>,
    pub tech: Option<DeviceTechParams>,
    pub bank: Option<BankReference>,
    pub final_eval: Option<FinalEvaluation>,
    pub pulse_statistics: PulseStatistics,
    pub working_memory_peak: Vec<usize>,
    pub config: RunConfig,
}

/// A completed run read back from its directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub layers: Vec<AgingLayer>,
}

impl LoadedRun {
    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("manifest.json");
        if !mpath.is_file() {
            return Err(Error::Config(format!(
                "{} is not a run directory (no manifest.json)",
                dir.display()
            )));
        }
        let manifest: RunManifest = serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(&mpath)?))?;
        let mut layers = Vec::new();
        for l in &manifest.layers {
            let path = dir.join(&l.file);
            layers.push(match (l.storage.as_str(), l.scale_s) {
                ("device", Some(scale)) => {
                    let f = std::fs::File::open(&path)?;
                    let snap = ArraySnapshot::read_csv(
                        std::io::BufReader::new(f),
                        l.rows,
                        l.cols,
                        &path.display().to_string(),
                    )?;
                    AgingLayer::Device {
                        g_plus: snap.g_plus,
                        g_minus: snap.g_minus,
                        scale,
                    }
                }
                ("float", _) => AgingLayer::Float(read_matrix(&path, l.rows, l.cols)?),
                (other, _) => return Err(Error::Format(format!("layer {}: unknown storage {other:?}", l.index))),
            });
        }
        Ok(Self { manifest, layers })
    }

    pub fn ledger(dir: &Path) -> Result<LedgerSummary> {
        let path = dir.join("ledger.json");
        if !path.is_file() {
            return Err(Error::Config(format!("{} has no ledger.json", dir.display())));
        }
        Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(
            path,
        )?))?)
    }
}

/// State an aging study perturbs.
#[derive(Debug, Clone, PartialEq)]
pub enum AgingLayer {
    /// Conductance grids (`n_in x n_out`, siemens) and weight scale.
    Device {
        g_plus: Array2<f64>,
        g_minus: Array2<f64>,
        scale: f64,
    },
    /// Float weights (`n_out x n_in`), unaffected by drift.
    Float(Array2<f64>),
}

impl AgingLayer {
    pub fn matrix(&self) -> Array2<f64> {
        match self {
            AgingLayer::Device { g_plus, g_minus, scale } => ((g_plus - g_minus) * *scale).t().to_owned(),
            AgingLayer::Float(w) => w.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgingPoint {
    pub day: f64,
    pub repeat: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgingSummary {
    pub day: f64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingReport {
    /// Test accuracy of the undrifted network.
    pub baseline: f64,
    pub points: Vec<AgingPoint>,
    pub summary: Vec<AgingSummary>,
}

impl AgingReport {
    /// Baseline minus mean accuracy at `day`.
    pub fn drop_at(&self, day: f64) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.day == day)
            .map(|s| self.baseline - s.mean)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["day", "repeat", "accuracy"])?;
        for p in &self.points {
            w.write_record([p.day.to_string(), p.repeat.to_string(), p.accuracy.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Re-evaluates test accuracy after retention drift of every device
/// conductance. Each repeat and each checkpoint draws an independent drift
/// realization from the original conductances; pulse indices are frozen.
pub fn simulate_aging(
    model: &ModelSpec,
    layers: &[AgingLayer],
    test: &FeatureDataset,
    days: &[f64],
    drift: &DriftModelParams,
    repeats: usize,
    seed: u64,
) -> Result<AgingReport> {
    if repeats == 0 {
        return Err(Error::param("aging needs at least one repeat"));
    }
    if days.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::param("aging checkpoints must be >= 0 days"));
    }
    if days.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("aging checkpoints must be sorted ascending"));
    }
    drift.validate()?;
    let base_mats: Vec<Array2<f64>> = layers.iter().map(|l| l.matrix()).collect();
    let baseline = model.evaluate(&base_mats, test)?.accuracy;
    let per_repeat: Vec<Vec<AgingPoint>> = (0..repeats)
        .into_par_iter()
        .map(|r| -> Result<Vec<AgingPoint>> {
            let mut rng = rng_from_seed(derive_seed(seed, r as u64));
            let mut out = Vec::with_capacity(days.len());
            for &day in days {
                let h = drift.at_horizon(day);
                let mats: Vec<Array2<f64>> = layers
                    .iter()
                    .map(|l| match l {
                        AgingLayer::Device { g_plus, g_minus, scale } => {
                            let gp = g_plus.mapv(|g| drift_sample(g, &h, &mut rng));
                            let gm = g_minus.mapv(|g| drift_sample(g, &h, &mut rng));
                            ((gp - gm) * *scale).t().to_owned()
                        }
                        AgingLayer::Float(w) => w.clone(),
                    })
                    .collect();
                out.push(AgingPoint {
                    day,
                    repeat: r,
                    accuracy: model.evaluate(&mats, test)?.accuracy,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let points: Vec<AgingPoint> = per_repeat.into_iter().flatten().collect();
    let summary = days
        .iter()
        .map(|&day| {
            let accs: Vec<f64> = points.iter().filter(|p| p.day == day).map(|p| p.accuracy).collect();
            let (mean, std) = mean_std(&accs);
            AgingSummary {
                day,
                mean,
                std,
                n: accs.len(),
            }
        })
        .collect();
    Ok(AgingReport {
        baseline,
        points,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPulseStats {
    pub layer: usize,
    pub rows: usize,
    pub cols: usize,
    pub devices: usize,
    pub total: u64,
    pub mean_per_device: f64,
    pub max_per_device: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseStatistics {
    pub layers: Vec<LayerPulseStats>,
    pub total: u64,
    pub mean_per_device: f64,
}

/// Per-layer pulse totals and means (`total / (2 rows cols)`).
pub fn pulse_statistics(run: &TrainingRun) -> PulseStatistics {
    let layers: Vec<LayerPulseStats> = run
        .pulse_counts
        .iter()
        .enumerate()
        .filter_map(|(k, pc)| {
            pc.as_ref().map(|pc| {
                let total = pc.total();
                let devices = pc.devices();
                LayerPulseStats {
                    layer: k,
                    rows: pc.plus.nrows(),
                    cols: pc.plus.ncols(),
                    devices,
                    total,
                    mean_per_device: total as f64 / devices as f64,
                    max_per_device: pc.plus.iter().chain(pc.minus.iter()).copied().max().unwrap_or(0),
                }
            })
        })
        .collect();
    let total: u64 = layers.iter().map(|l| l.total).sum();
    let devices: usize = layers.iter().map(|l| l.devices).sum();
    PulseStatistics {
        mean_per_device: if devices == 0 {
            0.0
        } else {
            total as f64 / devices as f64
        },
        layers,
        total,
    }
}

/// Builds, trains and returns one run.
pub fn run_single(config: &RunConfig, data: &Splits, bank: Option<&TrajectoryBank>) -> Result<TrainingRun> {
    let mut run = TrainingRun::new(config, data.train.dim(), data.train.n_classes, bank)?;
    run.train(data)?;
    Ok(run)
}

/// `n` runs with seeds `config.seed + k`, executed concurrently.
pub fn run_repeats(
    config: &RunConfig,
    n: usize,
    data: &Splits,
    bank: Option<&TrajectoryBank>,
) -> Result<Vec<TrainingRun>> {
    (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let mut c = config.clone();
            c.seed = config.seed.wrapping_add(k);
            run_single(&c, data, bank)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub test_accuracies: Vec<f64>,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub mean_pulses_per_device: Vec<f64>,
    pub per_layer_mean_pulses: Vec<Vec<f64>>,
}

pub fn summarize_repeats(runs: &[TrainingRun]) -> Result<RepeatSummary> {
    let first = runs.first().ok_or_else(|| Error::param("no runs to summarize"))?;
    let accs: Vec<f64> = runs
        .iter()
        .map(|r| {
            r.final_eval
                .as_ref()
                .map(|f| f.test_accuracy)
                .ok_or_else(|| Error::param("run not trained"))
        })
        .collect::<Result<_>>()?;
    let (mean, std) = mean_std(&accs);
    Ok(RepeatSummary {
        algorithm: first.model.algorithm,
        seeds: runs.iter().map(|r| r.seed()).collect(),
        test_accuracies: accs,
        mean_test_accuracy: mean,
        std_test_accuracy: std,
        mean_pulses_per_device: runs.iter().map(|r| r.pulse_statistics().mean_per_device).collect(),
        per_layer_mean_pulses: runs
            .iter()
            .map(|r| r.pulse_statistics().layers.iter().map(|l| l.mean_per_device).collect())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClusterTaskParams;

    fn small_config(alg: Algorithm) -> RunConfig {
        let mut c = RunConfig {
            algorithm: alg,
            ..Default::default()
        };
        c.task.synthetic = ClusterTaskParams {
            n_per_class: 50,
            ..Default::default()
        };
        c.device.bank_size = 16;
        c.device.synthetic.p_max = 600;
        c.epochs = Some(vec![1, 1]);
        c
    }

    fn bank(c: &RunConfig) -> TrajectoryBank {
        c.device.build_bank().unwrap()
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("nope".parse::<Algorithm>().is_err());
    }

    #[test]
    fn phase_order_follows_rule() {
        let c = small_config(Algorithm::Bp);
        let s = Schedule::from_config(&c);
        assert_eq!(s.phases.iter().map(|p| p.layer).collect::<Vec<_>>(), vec![1, 0]);
        let c = small_config(Algorithm::Cf);
        let s = Schedule::from_config(&c);
        assert_eq!(s.phases.iter().map(|p| p.layer).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn zero_epochs_means_no_pulses() {
        let mut c = small_config(Algorithm::Cf);
        c.epochs = Some(vec![0, 0]);
        let data = prepare_splits(&c).unwrap();
        let b = bank(&c);
        let mut run = TrainingRun::new(&c, 32, 4, Some(&b)).unwrap();
        let before = run.evaluate(&data.test).unwrap().accuracy;
        run.train(&data).unwrap();
        assert_eq!(run.pulse_statistics().total, 0);
        assert_eq!(run.final_eval.as_ref().unwrap().test_accuracy, before);
    }

    #[test]
    fn cluster_prediction_breaks_ties_low() {
        let spec = LayerSpec::clustered(2, 3, 2, 1.0);
        let h = ndarray::array![1.0, 0.0, 0.0, 1.0, 0.5, 0.5];
        assert_eq!(cluster_prediction(h.view(), &spec), 0);
        let h = ndarray::array![0.0, 0.0, 0.0, 0.0, 0.0, 2.0];
        assert_eq!(cluster_prediction(h.view(), &spec), 2);
    }

    #[test]
    fn device_runs_are_deterministic_and_pulse_counts_match_ledger() {
        for alg in [Algorithm::Bp, Algorithm::Sff, Algorithm::Cf] {
            let c = small_config(alg);
            let data = prepare_splits(&c).unwrap();
            let b = bank(&c);
            let r1 = run_single(&c, &data, Some(&b)).unwrap();
            let r2 = run_single(&c, &data, Some(&b)).unwrap();
            assert_eq!(r1.log, r2.log, "{alg}");
            let stats = r1.pulse_statistics();
            assert_eq!(stats.total, r1.ledger.pulse_count(), "{alg}");
            let logged: u64 = r1.log.steps.iter().map(|s| s.updates as u64).sum();
            assert_eq!(stats.total, logged, "{alg}");
        }
    }
}
