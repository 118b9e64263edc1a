//! Softmax classifiers, losses and predictive entropy.
//!
//! Attribution code only relies on the [`Classifier`] contract, so any
//! black-box model producing class probabilities can be plugged in. The
//! built-in [`TrainedModel`] covers multinomial logistic regression and a
//! one-hidden-layer ReLU perceptron, trained with Adam on cross-entropy.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{bail, Result};
use crate::math;
use crate::rng::{self, RngSpec};

/// Lower clamp applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// A probabilistic classifier over `input_dim` real features.
pub trait Classifier {
    fn input_dim(&self) -> usize;

    fn class_count(&self) -> usize;

    /// Class probabilities for row-major inputs `[n x input_dim]`,
    /// returned row-major `[n x class_count]`.
    fn predict_proba_batch(&self, rows: &[f64]) -> Result<Vec<f64>>;

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            bail!(Shape, "input has {} features, model expects {}", x.len(), self.input_dim());
        }
        self.predict_proba_batch(x)
    }
}

impl<M: Classifier + ?Sized> Classifier for &M {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn class_count(&self) -> usize {
        (**self).class_count()
    }
    fn predict_proba_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        (**self).predict_proba_batch(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossKind {
    CrossEntropy,
    ZeroOne,
}

impl LossKind {
    pub fn evaluate(&self, p: &[f64], y: usize) -> Result<f64> {
        loss(*self, p, y)
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = k;
        }
    }
    best
}

pub fn loss(kind: LossKind, p: &[f64], y: usize) -> Result<f64> {
    if y >= p.len() {
        bail!(Domain, "class {} out of range for {} classes", y, p.len());
    }
    Ok(match kind {
        LossKind::CrossEntropy => -math::ln(p[y].clamp(PROB_FLOOR, 1.0)),
        LossKind::ZeroOne => {
            if argmax(p) == y {
                0.0
            } else {
                1.0
            }
        }
    })
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&q| q > 0.0).map(|&q| -q * math::ln(q)).sum()
}

/// Numerically stable softmax, in place.
pub fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = math::exp(*v - m);
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModelKind {
    LogisticRegression,
    Mlp1Hidden,
}

/// Fully connected layer; `weights` is `[outputs x inputs]` row-major.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *slot = self.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainingSummary {
    pub epochs_run: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub class_count: usize,
    /// One layer for logistic regression; hidden (ReLU) then output for the MLP.
    pub layers: Vec<DenseLayer>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub training: Option<TrainingSummary>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_units: 32,
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 16,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            patience: 10,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self, kind: ModelKind) -> Result<()> {
        if kind == ModelKind::Mlp1Hidden && self.hidden_units == 0 {
            bail!(Validation, "hidden_units must be positive");
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.patience == 0 {
            bail!(Validation, "learning rate, batch size and patience must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            bail!(Validation, "validation fraction must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            bail!(Validation, "invalid Adam constants");
        }
        Ok(())
    }
}

impl TrainedModel {
    /// Fresh model: He-normal hidden weights, zero output layer.
    pub fn initialize(kind: ModelKind, input_dim: usize, class_count: usize, config: &TrainConfig) -> Self {
        let layers = match kind {
            ModelKind::LogisticRegression => vec![DenseLayer::zeros(input_dim, class_count)],
            ModelKind::Mlp1Hidden => {
                let mut rng = RngSpec::new(config.seed).stream("model/init", 0);
                let mut hidden = DenseLayer::zeros(input_dim, config.hidden_units);
                let scale = math::sqrt(2.0 / input_dim as f64);
                hidden.weights.iter_mut().for_each(|w| *w = scale * rng::normal(&mut rng));
                vec![hidden, DenseLayer::zeros(config.hidden_units, class_count)]
            }
        };
        Self { kind, input_dim, class_count, layers, training: None }
    }

    fn check_shape(&self) -> Result<()> {
        let expected = match self.kind {
            ModelKind::LogisticRegression => 1,
            ModelKind::Mlp1Hidden => 2,
        };
        if self.layers.len() != expected {
            bail!(Validation, "{:?} needs {} layers, found {}", self.kind, expected, self.layers.len());
        }
        let mut width = self.input_dim;
        for l in &self.layers {
            if l.inputs != width || l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                bail!(Validation, "inconsistent layer dimensions");
            }
            width = l.outputs;
        }
        if width != self.class_count || self.class_count < 2 {
            bail!(Validation, "output width {} does not match class count {}", width, self.class_count);
        }
        Ok(())
    }

    /// Checks layer dimensions, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        self.check_shape()
    }

    /// Raw output scores for one input.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.outputs];
            layer.forward(&cur, &mut next);
            if k != last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = next;
        }
        cur
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Parameters flattened as `[w0, b0, w1, b1, ...]`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            bail!(Shape, "{} parameters supplied, model has {}", params.len(), self.param_count());
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    /// Cross-entropy of one example and its gradient w.r.t. [`parameters`](Self::parameters),
    /// accumulated into `grad`.
    pub fn loss_and_gradient(&self, x: &[f64], y: usize, grad: &mut [f64]) -> f64 {
        debug_assert_eq!(grad.len(), self.param_count());
        // forward, keeping every activation
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.outputs];
            layer.forward(&acts[k], &mut next);
            if k != last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(next);
        }
        let mut delta = acts.pop().unwrap_or_default();
        softmax_in_place(&mut delta);
        let value = -math::ln(delta[y].clamp(PROB_FLOOR, 1.0));
        delta[y] -= 1.0;

        // parameter offsets per layer
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for l in &self.layers {
            offsets.push(at);
            at += l.param_count();
        }
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &acts[k];
            let base = offsets[k];
            for o in 0..layer.outputs {
                let g = delta[o];
                if g == 0.0 {
                    continue;
                }
                let row = &mut grad[base + o * layer.inputs..base + (o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(gw, a)| *gw += g * a);
                grad[base + layer.weights.len() + o] += g;
            }
            if k > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for o in 0..layer.outputs {
                    let g = delta[o];
                    let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    prev.iter_mut().zip(w).for_each(|(p, w)| *p += g * w);
                }
                // ReLU derivative on the hidden activation
                prev.iter_mut().zip(input).for_each(|(p, a)| {
                    if *a <= 0.0 {
                        *p = 0.0
                    }
                });
                delta = prev;
            }
        }
        value
    }

    /// Mean cross-entropy over the given rows.
    pub fn mean_cross_entropy(&self, data: &Dataset, labels: &[usize], rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let total: f64 = rows
            .iter()
            .map(|&i| {
                let mut z = self.logits(data.row(i));
                softmax_in_place(&mut z);
                -math::ln(z[labels[i]].clamp(PROB_FLOOR, 1.0))
            })
            .sum();
        total / rows.len() as f64
    }
}

impl Classifier for TrainedModel {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict_proba_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        if rows.len() % self.input_dim != 0 {
            bail!(Shape, "input buffer of {} values is not a multiple of {}", rows.len(), self.input_dim);
        }
        let mut out = Vec::with_capacity(rows.len() / self.input_dim * self.class_count);
        for x in rows.chunks_exact(self.input_dim) {
            let mut z = self.logits(x);
            softmax_in_place(&mut z);
            out.extend_from_slice(&z);
        }
        Ok(out)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(cfg.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(cfg.beta2, self.t as f64);
        for k in 0..params.len() {
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * grad[k];
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
            let mhat = self.m[k] / c1;
            let vhat = self.v[k] / c2;
            params[k] -= cfg.learning_rate * mhat / (math::sqrt(vhat) + cfg.eps);
        }
    }
}

/// Trains a classifier with Adam on mini-batch cross-entropy.
///
/// A `validation_fraction` share of the rows (at least one row, only when
/// ten or more rows are available) is held out for early stopping; the
/// parameters with the best validation loss are restored at the end.
pub fn train(kind: ModelKind, data: &Dataset, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate(kind)?;
    let labels = data.require_labels()?;
    if data.has_missing() {
        bail!(Training, "training data contains missing values; impute first");
    }
    let class_count = data.class_count().unwrap_or(0);
    let mut present = vec![false; class_count];
    labels.iter().for_each(|&y| present[y] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        bail!(Training, "training data must contain at least two classes");
    }

    let spec = RngSpec::new(config.seed);
    let mut model = TrainedModel::initialize(kind, data.d(), class_count, config);

    let mut order: Vec<usize> = (0..data.n()).collect();
    order.shuffle(&mut spec.stream("model/split", 0));
    let n_val = if data.n() >= 10 && config.validation_fraction > 0.0 {
        (math::ceil(config.validation_fraction * data.n() as f64) as usize).max(1)
    } else {
        0
    };
    let (val_rows, train_rows) = order.split_at(n_val);
    let val_rows = val_rows.to_vec();
    let mut train_rows = train_rows.to_vec();

    let mut params = model.parameters();
    let mut grad = vec![0.0; params.len()];
    let mut adam = Adam::new(params.len());
    let mut best = (f64::INFINITY, params.clone());
    let mut stale = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 0..config.epochs {
        train_rows.shuffle(&mut spec.stream("model/epoch", epoch as u64));
        for batch in train_rows.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                model.loss_and_gradient(data.row(i), labels[i], &mut grad);
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut params, &grad, config);
            model.set_parameters(&params)?;
        }
        epochs_run = epoch + 1;
        if !val_rows.is_empty() {
            let val = model.mean_cross_entropy(data, labels, &val_rows);
            if val < best.0 {
                best = (val, params.clone());
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    if !val_rows.is_empty() && best.0.is_finite() {
        model.set_parameters(&best.1)?;
    }
    let train_loss = model.mean_cross_entropy(data, labels, &train_rows);
    if !train_loss.is_finite() {
        bail!(Training, "{}", format!("training diverged (loss {train_loss})"));
    }
    let validation_loss = (!val_rows.is_empty()).then(|| model.mean_cross_entropy(data, labels, &val_rows));
    model.training = Some(TrainingSummary { epochs_run, train_loss, validation_loss });
    Ok(model)
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy<M: Classifier + ?Sized>(model: &M, data: &Dataset) -> Result<f64> {
    let labels = data.require_labels()?;
    let probs = model.predict_proba_batch(data.features())?;
    let c = model.class_count();
    let hits = labels.iter().enumerate().filter(|(i, &y)| argmax(&probs[i * c..(i + 1) * c]) == y).count();
    Ok(hits as f64 / labels.len() as f64)
}
