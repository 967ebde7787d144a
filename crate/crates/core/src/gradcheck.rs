//! Central finite-difference checks of the analytic gradients.
//!
//! The oracle side only ever calls the loss functions; the analytic side is
//! passed in as a closure so a deliberately broken gradient can be checked
//! as a negative control.

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rules::{
    bp_gradients, cf_gradient, cf_loss, cluster_mask, cross_entropy_loss, sff_gradient, sff_loss, CfParams, CfVariant,
    GradientBatch, LayerSpec, SffParams,
};
use crate::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSettings {
    pub configs: usize,
    pub seed: u64,
    pub step: f64,
    pub rtol: f64,
    /// Minimum |pre-activation| of every sampled point (keeps ReLU off its kink).
    pub margin: f64,
    /// Entries smaller than this in both routes are compared absolutely
    /// (`rtol * floor`), since central differences carry ~1e-11 roundoff.
    pub floor: f64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        Self {
            configs: 100,
            seed: 0,
            step: 1e-5,
            rtol: 1e-5,
            margin: 1e-3,
            floor: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub configs: usize,
    pub entries: usize,
    pub max_rel_err: f64,
    pub failures: usize,
    pub passed: bool,
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn normal_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

/// Batch of inputs whose pre-activations under `w` all clear `margin`.
fn inputs_off_kink(w: &Array2<f64>, n: usize, margin: f64, rng: &mut Rng) -> Array2<f64> {
    let mut x = Array2::zeros((n, w.ncols()));
    for mut row in x.rows_mut() {
        loop {
            let cand = normal_matrix(1, w.ncols(), 1.0, rng).row(0).to_owned();
            if w.dot(&cand).iter().all(|z| z.abs() > margin) {
                row.assign(&cand);
                break;
            }
        }
    }
    x
}

fn relu_forward(w: &Array2<f64>, x: &Array2<f64>) -> Array2<f64> {
    x.dot(&w.t()).mapv_into(|v| v.max(0.0))
}

/// Central differences of `loss(w)` over every entry of `w`.
pub fn finite_difference(w: &Array2<f64>, step: f64, loss: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(w.raw_dim());
    let mut wp = w.clone();
    for idx in ndarray::indices(w.raw_dim()) {
        let orig = w[idx];
        wp[idx] = orig + step;
        let up = loss(&wp);
        wp[idx] = orig - step;
        let down = loss(&wp);
        wp[idx] = orig;
        g[idx] = (up - down) / (2.0 * step);
    }
    g
}

struct Tally {
    name: String,
    configs: usize,
    entries: usize,
    max_rel: f64,
    failures: usize,
}

impl Tally {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            configs: 0,
            entries: 0,
            max_rel: 0.0,
            failures: 0,
        }
    }

    fn compare(&mut self, analytic: &Array2<f64>, fd: &Array2<f64>, s: &GradcheckSettings) {
        self.configs += 1;
        for (a, b) in analytic.iter().zip(fd.iter()) {
            let e = rel_err(*a, *b, s.floor);
            self.entries += 1;
            if !(e <= s.rtol) {
                self.failures += 1;
            }
            if e > self.max_rel || e.is_nan() {
                self.max_rel = e;
            }
        }
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            passed: self.failures == 0 && self.configs > 0,
            name: self.name,
            configs: self.configs,
            entries: self.entries,
            max_rel_err: self.max_rel,
            failures: self.failures,
        }
    }
}

pub type SffGradFn<'a> = dyn Fn(ArrayView2<f64>, ArrayView2<f64>, ArrayView2<f64>, ArrayView2<f64>, &SffParams) -> Result<GradientBatch>
    + 'a;

pub type CfGradFn<'a> =
    dyn Fn(ArrayView2<f64>, ArrayView2<f64>, &[usize], &CfParams, &LayerSpec) -> Result<GradientBatch> + 'a;

/// SFF gradient against finite differences of the batch-mean loss.
pub fn check_sff_with(s: &GradcheckSettings, batch_size: usize, eta: f64, grad: &SffGradFn<'_>) -> Result<SuiteResult> {
    let mut tally = Tally::new(format!("sff eta={eta:+} batch={batch_size}"));
    for c in 0..s.configs {
        let mut rng = rng_from_seed(derive_seed(
            s.seed,
            c as u64 * 4 + if eta > 0.0 { 0 } else { 1 } + batch_size as u64 * 1000,
        ));
        let n_in = rng.random_range(3..=7);
        let n_h = rng.random_range(2..=6);
        let w = normal_matrix(n_h, n_in, 1.0 / (n_in as f64).sqrt(), &mut rng);
        let x_pos = inputs_off_kink(&w, batch_size, s.margin, &mut rng);
        let x_neg = inputs_off_kink(&w, batch_size, s.margin, &mut rng);
        let params = SffParams {
            theta_plus: rng.random_range(0.0..0.8),
            theta_minus: rng.random_range(0.0..0.8),
            eta,
        };
        let loss = |w: &Array2<f64>| -> f64 {
            let hp = relu_forward(w, &x_pos);
            let hn = relu_forward(w, &x_neg);
            let total: f64 = (0..batch_size)
                .map(|k| sff_loss(hp.row(k), hn.row(k), &params, n_h).expect("shapes"))
                .sum();
            total / batch_size as f64
        };
        let fd = finite_difference(&w, s.step, loss);
        let hp = relu_forward(&w, &x_pos);
        let hn = relu_forward(&w, &x_neg);
        let g = grad(x_pos.view(), hp.view(), x_neg.view(), hn.view(), &params)?;
        tally.compare(&g.grad, &fd, s);
    }
    Ok(tally.finish())
}

pub fn check_sff(s: &GradcheckSettings, batch_size: usize, eta: f64) -> Result<SuiteResult> {
    check_sff_with(s, batch_size, eta, &sff_gradient)
}

/// CF gradient (either variant) against finite differences of the batch-mean loss.
pub fn check_cf_with(
    s: &GradcheckSettings,
    variant: CfVariant,
    batch_size: usize,
    eta: f64,
    grad: &CfGradFn<'_>,
) -> Result<SuiteResult> {
    let tag = match variant {
        CfVariant::Offset => "offset",
        CfVariant::Temperature => "temperature",
    };
    let mut tally = Tally::new(format!("cf-{tag} eta={eta:+} batch={batch_size}"));
    for c in 0..s.configs {
        let mut rng = rng_from_seed(derive_seed(
            s.seed ^ 0xC0FF_EE00,
            c as u64 * 4
                + if eta > 0.0 { 0 } else { 1 }
                + batch_size as u64 * 1000
                + if variant == CfVariant::Offset { 2 } else { 0 },
        ));
        let n_in = rng.random_range(3..=7);
        let n_classes = rng.random_range(2..=4);
        let cluster_size = rng.random_range(1..=3);
        let spec = LayerSpec::clustered(n_in, n_classes, cluster_size, eta);
        let w = normal_matrix(spec.n_out, n_in, 1.0 / (n_in as f64).sqrt(), &mut rng);
        let x = inputs_off_kink(&w, batch_size, s.margin, &mut rng);
        let labels: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..n_classes)).collect();
        let params = match variant {
            CfVariant::Temperature => CfParams {
                variant,
                theta_plus: rng.random_range(0.1..1.0),
                theta_minus: rng.random_range(0.1..1.0),
                eta,
            },
            CfVariant::Offset => CfParams {
                variant,
                theta_plus: rng.random_range(0.0..2.0),
                theta_minus: rng.random_range(0.0..2.0),
                eta,
            },
        };
        let masks: Vec<_> = labels
            .iter()
            .map(|&y| cluster_mask(&spec, y).expect("label in range"))
            .collect();
        let loss = |w: &Array2<f64>| -> f64 {
            let h = relu_forward(w, &x);
            let total: f64 = (0..batch_size)
                .map(|k| cf_loss(h.row(k), masks[k].view(), &params).expect("shapes"))
                .sum();
            total / batch_size as f64
        };
        let fd = finite_difference(&w, s.step, loss);
        let h = relu_forward(&w, &x);
        let g = grad(x.view(), h.view(), &labels, &params, &spec)?;
        tally.compare(&g.grad, &fd, s);
    }
    Ok(tally.finish())
}

pub fn check_cf(s: &GradcheckSettings, variant: CfVariant, batch_size: usize, eta: f64) -> Result<SuiteResult> {
    check_cf_with(s, variant, batch_size, eta, &cf_gradient)
}

/// Backpropagation through a two-layer bias-free MLP.
pub fn check_bp(s: &GradcheckSettings, batch_size: usize) -> Result<SuiteResult> {
    let mut tally = Tally::new(format!("bp batch={batch_size}"));
    for c in 0..s.configs {
        let mut rng = rng_from_seed(derive_seed(s.seed ^ 0xB0B0, c as u64 + batch_size as u64 * 1000));
        let n_in = rng.random_range(3..=6);
        let n_h = rng.random_range(2..=6);
        let n_out = rng.random_range(2..=4);
        let w1 = normal_matrix(n_h, n_in, 1.0 / (n_in as f64).sqrt(), &mut rng);
        let w2 = normal_matrix(n_out, n_h, 1.0 / (n_h as f64).sqrt(), &mut rng);
        let x = inputs_off_kink(&w1, batch_size, s.margin, &mut rng);
        let labels: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..n_out)).collect();
        let (g, _) = bp_gradients(&[w1.view(), w2.view()], x.view(), &labels, &[true, true])?;
        let fd1 = finite_difference(&w1, s.step, |w| {
            cross_entropy_loss(&[w.view(), w2.view()], x.view(), &labels).expect("shapes")
        });
        let fd2 = finite_difference(&w2, s.step, |w| {
            cross_entropy_loss(&[w1.view(), w.view()], x.view(), &labels).expect("shapes")
        });
        tally.compare(&g[0].grad, &fd1, s);
        tally.compare(&g[1].grad, &fd2, s);
        tally.configs -= 1;
    }
    Ok(tally.finish())
}

/// Which suites a gradcheck run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleSelection {
    All,
    Sff,
    Cf,
    Bp,
}

/// Runs every selected suite for batch sizes 1 and 16 and both goodness signs.
pub fn run_suites(
    s: &GradcheckSettings,
    rule: RuleSelection,
    cf_variant: Option<CfVariant>,
) -> Result<Vec<SuiteResult>> {
    let mut out = Vec::new();
    let batches = [1usize, 16];
    let etas = [1.0, -1.0];
    if matches!(rule, RuleSelection::All | RuleSelection::Sff) {
        for &b in &batches {
            for &e in &etas {
                out.push(check_sff(s, b, e)?);
            }
        }
    }
    if matches!(rule, RuleSelection::All | RuleSelection::Cf) {
        let variants = match cf_variant {
            Some(v) => vec![v],
            None => vec![CfVariant::Temperature, CfVariant::Offset],
        };
        for v in variants {
            for &b in &batches {
                for &e in &etas {
                    out.push(check_cf(s, v, b, e)?);
                }
            }
        }
    }
    if matches!(rule, RuleSelection::All | RuleSelection::Bp) {
        for &b in &batches {
            out.push(check_bp(s, b)?);
        }
    }
    Ok(out)
}
