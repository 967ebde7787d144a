//! Gradient producers and the sign-only update planner.
//!
//! Weight matrices here are `n_out x n_in` (entry `(i, j)` connects input `j`
//! to output `i`). Crossbars store the transpose; [`threshold_sign_plan`]
//! does the index swap when it emits crossbar actions.
//!
//! The forward-only gradients are written in the local form
//! `grad_ij = -sum_n [h+_ni x+_nj / D+_n - h-_ni x-_nj / D-_n]`, where the
//! per-sample denominators absorb the sigmoid factor, the goodness sign and
//! the `1/N_B` batch mean. With that normalization the result is the exact
//! gradient of the batch-mean loss.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::crossbar::{Polarity, UpdateAction, UpdatePlan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }
}

/// Partition of a layer's outputs into per-class neuron groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub n_classes: usize,
    pub cluster_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
    /// Goodness sign, +1 or -1.
    pub eta: f64,
    pub clusters: Option<ClusterSpec>,
}

impl LayerSpec {
    pub fn dense(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Self {
            n_in,
            n_out,
            activation,
            eta: 1.0,
            clusters: None,
        }
    }

    pub fn clustered(n_in: usize, n_classes: usize, cluster_size: usize, eta: f64) -> Self {
        Self {
            n_in,
            n_out: n_classes * cluster_size,
            activation: Activation::Relu,
            eta,
            clusters: Some(ClusterSpec {
                n_classes,
                cluster_size,
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.n_out == 0 {
            return Err(Error::param("layer dimensions must be positive"));
        }
        if self.eta != 1.0 && self.eta != -1.0 {
            return Err(Error::param(format!("eta must be +1 or -1, got {}", self.eta)));
        }
        if let Some(c) = self.clusters {
            if c.n_classes * c.cluster_size != self.n_out {
                return Err(Error::param(format!(
                    "{} clusters of {} do not cover {} outputs",
                    c.n_classes, c.cluster_size, self.n_out
                )));
            }
        }
        Ok(())
    }

    /// Class owning output `i`, for clustered layers.
    pub fn cluster_of(&self, i: usize) -> Option<usize> {
        self.clusters.map(|c| i / c.cluster_size)
    }

    /// Activations for a batch `x` (`N x n_in`) under weights `w` (`n_out x n_in`).
    pub fn forward(&self, w: ArrayView2<f64>, x: ArrayView2<f64>) -> Array2<f64> {
        let act = self.activation;
        x.dot(&w.t()).mapv_into(|v| act.apply(v))
    }
}

/// `eta * ||h||^2`.
pub fn goodness(h: ArrayView1<f64>, eta: f64) -> f64 {
    eta * h.dot(&h)
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `log(sigmoid(a))`, stable for large |a|.
pub fn log_sigmoid(a: f64) -> f64 {
    -softplus(-a)
}

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Positive and negative inputs for one labelled example.
#[derive(Debug, Clone, PartialEq)]
pub struct PosNeg {
    pub pos: Array1<f64>,
    pub neg: Array1<f64>,
    pub wrong_label: usize,
}

/// Appends a one-hot label token: the true label for the positive input,
/// a uniformly drawn wrong label for the negative one.
pub fn build_pos_neg(
    x: ArrayView1<f64>,
    label: usize,
    n_classes: usize,
    token_amplitude: f64,
    rng: &mut crate::Rng,
) -> Result<PosNeg> {
    if n_classes < 2 {
        return Err(Error::param("label tokens need at least 2 classes"));
    }
    if label >= n_classes {
        return Err(Error::param(format!("label {label} outside 0..{n_classes}")));
    }
    let mut wrong = rng.random_range(0..n_classes - 1);
    if wrong >= label {
        wrong += 1;
    }
    Ok(PosNeg {
        pos: with_token(x, n_classes, |k| if k == label { token_amplitude } else { 0.0 }),
        neg: with_token(x, n_classes, |k| if k == wrong { token_amplitude } else { 0.0 }),
        wrong_label: wrong,
    })
}

/// Input with every token slot at `token_amplitude / C`, for label-free inference.
pub fn neutral_token(x: ArrayView1<f64>, n_classes: usize, token_amplitude: f64) -> Array1<f64> {
    with_token(x, n_classes, |_| token_amplitude / n_classes as f64)
}

/// Input carrying the one-hot token of `label`.
pub fn labelled_token(x: ArrayView1<f64>, label: usize, n_classes: usize, token_amplitude: f64) -> Array1<f64> {
    with_token(x, n_classes, |k| if k == label { token_amplitude } else { 0.0 })
}

fn with_token(x: ArrayView1<f64>, n_classes: usize, slot: impl Fn(usize) -> f64) -> Array1<f64> {
    let d = x.len();
    Array1::from_shape_fn(d + n_classes, |k| if k < d { x[k] } else { slot(k - d) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SffParams {
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub eta: f64,
}

impl SffParams {
    fn arg_pos(&self, g: f64, n_h: usize) -> f64 {
        g - self.eta * self.theta_plus * n_h as f64
    }

    fn arg_neg(&self, g: f64, n_h: usize) -> f64 {
        g - self.eta * self.theta_minus * n_h as f64
    }
}

/// Per-layer Forward-Forward loss of one positive/negative activation pair.
pub fn sff_loss(h_pos: ArrayView1<f64>, h_neg: ArrayView1<f64>, params: &SffParams, n_h: usize) -> Result<f64> {
    if h_pos.len() != n_h || h_neg.len() != n_h {
        return Err(Error::shape(format!(
            "activations of length {}/{} for n_h = {n_h}",
            h_pos.len(),
            h_neg.len()
        )));
    }
    let a_pos = params.arg_pos(goodness(h_pos, params.eta), n_h);
    let a_neg = params.arg_neg(goodness(h_neg, params.eta), n_h);
    // log(1 - sigmoid(a)) = log_sigmoid(-a)
    Ok(-0.5 * (log_sigmoid(a_pos) + log_sigmoid(-a_neg)))
}

/// Gradient of a layer's batch-mean loss, with per-sample diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBatch {
    /// `n_out x n_in`.
    pub grad: Array2<f64>,
    pub batch_size: usize,
    pub d_plus: Array1<f64>,
    pub d_minus: Array1<f64>,
    pub goodness_plus: Array1<f64>,
    pub goodness_minus: Array1<f64>,
}

impl GradientBatch {
    pub fn zeros(n_out: usize, n_in: usize) -> Self {
        Self {
            grad: Array2::zeros((n_out, n_in)),
            batch_size: 0,
            d_plus: Array1::zeros(0),
            d_minus: Array1::zeros(0),
            goodness_plus: Array1::zeros(0),
            goodness_minus: Array1::zeros(0),
        }
    }
}

fn check_batch(name: &str, a: &ArrayView2<f64>, rows: usize, cols: Option<usize>) -> Result<()> {
    if a.nrows() != rows || cols.is_some_and(|c| a.ncols() != c) {
        return Err(Error::shape(format!(
            "{name} is {}x{}, expected {rows}x{}",
            a.nrows(),
            a.ncols(),
            cols.map_or("_".to_string(), |c| c.to_string())
        )));
    }
    Ok(())
}

/// Quantities a layer keeps in working memory over one SFF minibatch:
/// inputs and activations of both passes plus `D+`/`D-` per sample.
#[derive(Debug, Clone)]
pub struct SffBuffer {
    pub x_pos: Array2<f64>,
    pub h_pos: Array2<f64>,
    pub x_neg: Array2<f64>,
    pub h_neg: Array2<f64>,
    pub d_plus: Array1<f64>,
    pub d_minus: Array1<f64>,
    goodness_plus: Array1<f64>,
    goodness_minus: Array1<f64>,
}

impl SffBuffer {
    pub fn collect(
        x_pos: Array2<f64>,
        h_pos: Array2<f64>,
        x_neg: Array2<f64>,
        h_neg: Array2<f64>,
        params: &SffParams,
    ) -> Result<Self> {
        let n = x_pos.nrows();
        if n == 0 {
            return Err(Error::shape("empty minibatch"));
        }
        let n_in = x_pos.ncols();
        let n_h = h_pos.ncols();
        check_batch("x_neg", &x_neg.view(), n, Some(n_in))?;
        check_batch("h_pos", &h_pos.view(), n, None)?;
        check_batch("h_neg", &h_neg.view(), n, Some(n_h))?;
        let nb = n as f64;
        let eta = params.eta;
        let g_pos: Array1<f64> = h_pos.rows().into_iter().map(|h| goodness(h, eta)).collect();
        let g_neg: Array1<f64> = h_neg.rows().into_iter().map(|h| goodness(h, eta)).collect();
        // dL/dg+ = -(1/2) sigmoid(-a+); chain through dg/dw = 2 eta h x and the 1/N_B mean.
        let d_plus = g_pos.mapv(|g| 1.0 / (eta * sigmoid(-params.arg_pos(g, n_h)) / nb));
        let d_minus = g_neg.mapv(|g| 1.0 / (eta * sigmoid(params.arg_neg(g, n_h)) / nb));
        Ok(Self {
            x_pos,
            h_pos,
            x_neg,
            h_neg,
            d_plus,
            d_minus,
            goodness_plus: g_pos,
            goodness_minus: g_neg,
        })
    }

    /// Scalars held: `N_B (2 + 2 N_x + 2 N_h)`.
    pub fn scalar_count(&self) -> usize {
        self.d_plus.len()
            + self.d_minus.len()
            + self.x_pos.len()
            + self.x_neg.len()
            + self.h_pos.len()
            + self.h_neg.len()
    }

    pub fn gradient(&self) -> GradientBatch {
        let wp = self.d_plus.mapv(|d| 1.0 / d);
        let wm = self.d_minus.mapv(|d| 1.0 / d);
        let hp = &self.h_pos * &wp.view().insert_axis(Axis(1));
        let hm = &self.h_neg * &wm.view().insert_axis(Axis(1));
        let grad = hm.t().dot(&self.x_neg) - hp.t().dot(&self.x_pos);
        GradientBatch {
            grad,
            batch_size: self.d_plus.len(),
            d_plus: self.d_plus.clone(),
            d_minus: self.d_minus.clone(),
            goodness_plus: self.goodness_plus.clone(),
            goodness_minus: self.goodness_minus.clone(),
        }
    }
}

/// Local Forward-Forward gradient over a minibatch (rows are samples).
pub fn sff_gradient(
    x_pos: ArrayView2<f64>,
    h_pos: ArrayView2<f64>,
    x_neg: ArrayView2<f64>,
    h_neg: ArrayView2<f64>,
    params: &SffParams,
) -> Result<GradientBatch> {
    Ok(SffBuffer::collect(
        x_pos.to_owned(),
        h_pos.to_owned(),
        x_neg.to_owned(),
        h_neg.to_owned(),
        params,
    )?
    .gradient())
}

/// Binary mask selecting the outputs of class `label`'s cluster.
pub fn cluster_mask(spec: &LayerSpec, label: usize) -> Result<Array1<f64>> {
    let c = spec
        .clusters
        .ok_or_else(|| Error::Config("layer has no cluster partition".into()))?;
    if label >= c.n_classes {
        return Err(Error::param(format!("label {label} outside 0..{}", c.n_classes)));
    }
    Ok(Array1::from_shape_fn(spec.n_out, |k| {
        if k / c.cluster_size == label {
            1.0
        } else {
            0.0
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CfVariant {
    /// theta shifts the sigmoid arguments.
    Offset,
    /// theta scales the sigmoid arguments.
    Temperature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfParams {
    pub variant: CfVariant,
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub eta: f64,
}

impl CfParams {
    pub fn validate(&self) -> Result<()> {
        if !self.theta_plus.is_finite() || !self.theta_minus.is_finite() {
            return Err(Error::param("theta must be finite"));
        }
        if self.variant == CfVariant::Temperature && (self.theta_plus == 0.0 || self.theta_minus == 0.0) {
            return Err(Error::param("temperature variant needs non-zero theta"));
        }
        Ok(())
    }

    fn arg_pos(&self, g: f64) -> f64 {
        match self.variant {
            CfVariant::Offset => g - self.eta * self.theta_plus,
            CfVariant::Temperature => self.theta_plus * g,
        }
    }

    fn arg_neg(&self, g: f64) -> f64 {
        match self.variant {
            CfVariant::Offset => g - self.eta * self.theta_minus,
            CfVariant::Temperature => self.theta_minus * g,
        }
    }

    /// d(arg)/dg for the positive and negative terms.
    fn scales(&self) -> (f64, f64) {
        match self.variant {
            CfVariant::Offset => (1.0, 1.0),
            CfVariant::Temperature => (self.theta_plus, self.theta_minus),
        }
    }
}

fn masked_goodness(h: ArrayView1<f64>, z: ArrayView1<f64>, eta: f64, complement: bool) -> f64 {
    eta * h
        .iter()
        .zip(z.iter())
        .map(|(hv, zv)| {
            let m = if complement { 1.0 - zv } else { *zv };
            let v = hv * m;
            v * v
        })
        .sum::<f64>()
}

/// Competitive-forward loss of one sample given its target-cluster mask.
pub fn cf_loss(h: ArrayView1<f64>, z: ArrayView1<f64>, params: &CfParams) -> Result<f64> {
    if h.len() != z.len() {
        return Err(Error::shape(format!(
            "mask of length {} for {} activations",
            z.len(),
            h.len()
        )));
    }
    let g_pos = masked_goodness(h, z, params.eta, false);
    let g_neg = masked_goodness(h, z, params.eta, true);
    Ok(-0.5 * (log_sigmoid(params.arg_pos(g_pos)) + log_sigmoid(-params.arg_neg(g_neg))))
}

/// Working memory of one CF minibatch: inputs, activations, labels, `D+`/`D-`.
#[derive(Debug, Clone)]
pub struct CfBuffer {
    pub x: Array2<f64>,
    pub h: Array2<f64>,
    pub labels: Vec<usize>,
    pub d_plus: Array1<f64>,
    pub d_minus: Array1<f64>,
    goodness_plus: Array1<f64>,
    goodness_minus: Array1<f64>,
    cluster_size: usize,
}

impl CfBuffer {
    pub fn collect(
        x: Array2<f64>,
        h: Array2<f64>,
        labels: Vec<usize>,
        params: &CfParams,
        spec: &LayerSpec,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::shape("empty minibatch"));
        }
        let c = spec
            .clusters
            .ok_or_else(|| Error::Config("layer has no cluster partition".into()))?;
        check_batch("h", &h.view(), n, Some(spec.n_out))?;
        if x.ncols() != spec.n_in {
            return Err(Error::shape(format!(
                "x has {} columns, layer takes {}",
                x.ncols(),
                spec.n_in
            )));
        }
        if labels.len() != n {
            return Err(Error::shape(format!("{} labels for {n} samples", labels.len())));
        }
        if let Some(bad) = labels.iter().find(|y| **y >= c.n_classes) {
            return Err(Error::param(format!("label {bad} outside 0..{}", c.n_classes)));
        }
        let nb = n as f64;
        let eta = params.eta;
        let (sp, sm) = params.scales();
        let mut g_pos = Array1::zeros(n);
        let mut g_neg = Array1::zeros(n);
        for (k, (row, &y)) in h.rows().into_iter().zip(&labels).enumerate() {
            let (mut inside, mut outside) = (0.0, 0.0);
            for (i, v) in row.iter().enumerate() {
                if i / c.cluster_size == y {
                    inside += v * v;
                } else {
                    outside += v * v;
                }
            }
            g_pos[k] = eta * inside;
            g_neg[k] = eta * outside;
        }
        let d_plus = g_pos.mapv(|g| 1.0 / (sp * eta * sigmoid(-params.arg_pos(g)) / nb));
        let d_minus = g_neg.mapv(|g| 1.0 / (sm * eta * sigmoid(params.arg_neg(g)) / nb));
        Ok(Self {
            x,
            h,
            labels,
            d_plus,
            d_minus,
            goodness_plus: g_pos,
            goodness_minus: g_neg,
            cluster_size: c.cluster_size,
        })
    }

    /// Scalars held: `N_B (3 + N_x + N_h)`.
    pub fn scalar_count(&self) -> usize {
        self.d_plus.len() + self.d_minus.len() + self.labels.len() + self.x.len() + self.h.len()
    }

    pub fn gradient(&self) -> GradientBatch {
        let mut coeff = self.h.clone();
        for (k, mut row) in coeff.rows_mut().into_iter().enumerate() {
            let y = self.labels[k];
            let wp = 1.0 / self.d_plus[k];
            let wm = 1.0 / self.d_minus[k];
            for (i, v) in row.iter_mut().enumerate() {
                // Each output uses exactly one branch per sample.
                *v *= if i / self.cluster_size == y { -wp } else { wm };
            }
        }
        GradientBatch {
            grad: coeff.t().dot(&self.x),
            batch_size: self.labels.len(),
            d_plus: self.d_plus.clone(),
            d_minus: self.d_minus.clone(),
            goodness_plus: self.goodness_plus.clone(),
            goodness_minus: self.goodness_minus.clone(),
        }
    }
}

/// Local competitive-forward gradient over a minibatch.
pub fn cf_gradient(
    x: ArrayView2<f64>,
    h: ArrayView2<f64>,
    labels: &[usize],
    params: &CfParams,
    spec: &LayerSpec,
) -> Result<GradientBatch> {
    Ok(CfBuffer::collect(x.to_owned(), h.to_owned(), labels.to_vec(), params, spec)?.gradient())
}

/// Scalars one SFF layer buffers per minibatch.
pub fn sff_working_memory(n_b: usize, n_x: usize, n_h: usize) -> usize {
    n_b * (2 + 2 * n_x + 2 * n_h)
}

/// Scalars one CF layer buffers per minibatch.
pub fn cf_working_memory(n_b: usize, n_x: usize, n_h: usize) -> usize {
    n_b * (3 + n_x + n_h)
}

/// Forward pass through a bias-free MLP: ReLU on hidden layers, identity
/// on the last. Returns the activations of every layer (input first).
pub fn mlp_forward(weights: &[ArrayView2<f64>], x: ArrayView2<f64>) -> Vec<Array2<f64>> {
    let mut acts = vec![x.to_owned()];
    for (k, w) in weights.iter().enumerate() {
        let last = k + 1 == weights.len();
        let z = acts[k].dot(&w.t());
        acts.push(if last { z } else { z.mapv_into(|v| v.max(0.0)) });
    }
    acts
}

fn log_softmax_row(z: ArrayView1<f64>) -> Array1<f64> {
    let m = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.mapv(|v| v - lse)
}

/// Mean softmax cross-entropy of a bias-free MLP.
pub fn cross_entropy_loss(weights: &[ArrayView2<f64>], x: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    check_mlp(weights, x, labels)?;
    let acts = mlp_forward(weights, x);
    let logits = acts.last().expect("at least one layer");
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(z, &y)| -log_softmax_row(z)[y])
        .sum();
    Ok(total / labels.len() as f64)
}

fn check_mlp(weights: &[ArrayView2<f64>], x: ArrayView2<f64>, labels: &[usize]) -> Result<()> {
    if weights.is_empty() || weights.len() > 2 {
        return Err(Error::shape(format!("{} layers; expected 1 or 2", weights.len())));
    }
    let mut width = x.ncols();
    for (k, w) in weights.iter().enumerate() {
        if w.ncols() != width {
            return Err(Error::shape(format!(
                "layer {k} takes {} inputs, receives {width}",
                w.ncols()
            )));
        }
        width = w.nrows();
    }
    if labels.len() != x.nrows() || x.nrows() == 0 {
        return Err(Error::shape(format!(
            "{} labels for {} samples",
            labels.len(),
            x.nrows()
        )));
    }
    if let Some(bad) = labels.iter().find(|y| **y >= width) {
        return Err(Error::param(format!("label {bad} outside 0..{width}")));
    }
    Ok(())
}

/// Analytic backpropagation gradients of the mean cross-entropy. Layers
/// with `trainable[k] == false` get an all-zero gradient.
pub fn bp_gradients(
    weights: &[ArrayView2<f64>],
    x: ArrayView2<f64>,
    labels: &[usize],
    trainable: &[bool],
) -> Result<(Vec<GradientBatch>, f64)> {
    check_mlp(weights, x, labels)?;
    if trainable.len() != weights.len() {
        return Err(Error::shape("trainable mask length differs from layer count"));
    }
    let n = labels.len();
    let acts = mlp_forward(weights, x);
    let logits = acts.last().expect("non-empty");
    let mut delta = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (k, (z, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
        let lsm = log_softmax_row(z);
        loss -= lsm[y];
        for (c, l) in lsm.iter().enumerate() {
            delta[(k, c)] = (l.exp() - if c == y { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    let mut grads: Vec<GradientBatch> = Vec::with_capacity(weights.len());
    for layer in (0..weights.len()).rev() {
        let w = &weights[layer];
        let mut g = GradientBatch::zeros(w.nrows(), w.ncols());
        g.batch_size = n;
        if trainable[layer] {
            g.grad = delta.t().dot(&acts[layer]);
        }
        grads.push(g);
        if layer > 0 {
            let back = delta.dot(w);
            delta = back * acts[layer].mapv(|a| if a > 0.0 { 1.0 } else { 0.0 });
        }
    }
    grads.reverse();
    Ok((grads, loss / n as f64))
}

/// How a thresholded gradient entry picks the device to pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    /// Move each selected weight against the sign of its gradient.
    #[default]
    Descent,
    /// Positive entry pulses `G-` (weight goes up), negative pulses `G+`.
    Ascent,
}

/// Sign-only plan: one pulse on `(row = j, col = i)` for every gradient
/// entry with `|grad_ij| > tau`.
pub fn threshold_sign_plan(grad: ArrayView2<f64>, tau: f64, mode: PlanMode) -> UpdatePlan {
    let mut actions = Vec::new();
    for ((i, j), &g) in grad.indexed_iter() {
        if !(g.abs() > tau) {
            continue;
        }
        let up = match mode {
            PlanMode::Descent => g < 0.0,
            PlanMode::Ascent => g > 0.0,
        };
        actions.push(UpdateAction {
            row: j,
            col: i,
            polarity: if up { Polarity::PulseMinus } else { Polarity::PulsePlus },
        });
    }
    UpdatePlan::from_unique(actions)
}

/// Floating-point twin of the pulse rule: `W -= lr * sign(grad) * 1[|grad| > tau]`.
pub fn sign_descent_step_float(w: &mut Array2<f64>, grad: ArrayView2<f64>, lr: f64, tau: f64) -> Result<()> {
    if w.shape() != grad.shape() {
        return Err(Error::shape(format!(
            "weights {:?} vs gradient {:?}",
            w.shape(),
            grad.shape()
        )));
    }
    if !(lr > 0.0) {
        return Err(Error::param("learning rate must be positive"));
    }
    w.zip_mut_with(&grad, |wv, &g| {
        if g.abs() > tau {
            *wv -= lr * g.signum();
        }
    });
    Ok(())
}
