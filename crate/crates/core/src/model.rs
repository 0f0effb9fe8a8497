//! Binary and multinomial logistic regression.
//!
//! Features are stored bias-augmented: every row has `dim + 1` entries and
//! the last one is the constant `1.0`. Labels are 0-indexed class ids.
//! Losses and gradients are means over the samples they are evaluated on.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value of `-ln(1e-12)`: the cap applied to every per-sample log loss.
const MAX_SAMPLE_LOSS: f64 = 27.631_021_115_928_547;

/// Bias-augmented features plus integer labels.
///
/// Feature storage is shared between clones, so relabeled copies of a
/// dataset (as produced during an attack) never duplicate or touch the
/// feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Arc<[f64]>,
    labels: Vec<usize>,
    num_classes: usize,
    dim: usize,
}

impl LabeledDataset {
    /// Builds a dataset from bias-augmented rows.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let width = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        let mut flat = Vec::with_capacity(rows.len() * width);
        for row in &rows {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    expected: width,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(flat, width.saturating_sub(1), labels, num_classes)
    }

    /// Builds a dataset from a row-major `N x (dim + 1)` buffer.
    pub fn from_flat(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let width = dim + 1;
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if num_classes < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if features.len() != labels.len() * width {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * width,
                found: features.len(),
            });
        }
        if let Some(pos) = labels.iter().position(|&y| y >= num_classes) {
            return Err(Error::InvalidDataset(format!(
                "label {} at index {pos} outside [0, {num_classes})",
                labels[pos]
            )));
        }
        for (i, row) in features.chunks_exact(width).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "non-finite feature in row {i}"
                )));
            }
            if row[dim] != 1.0 {
                return Err(Error::InvalidDataset(format!(
                    "row {i} bias coordinate is {} instead of 1.0",
                    row[dim]
                )));
            }
        }
        Ok(Self {
            features: features.into(),
            labels,
            num_classes,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Raw feature dimension `d` (without the bias coordinate).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row length `d + 1`.
    pub fn width(&self) -> usize {
        self.dim + 1
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.features[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.width())
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// True when both datasets read from the same feature buffer.
    pub fn shares_features_with(&self, other: &LabeledDataset) -> bool {
        Arc::ptr_eq(&self.features, &other.features)
    }

    /// Same features, new labels.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: labels.len(),
            });
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::InvalidDataset(format!(
                "label {y} outside [0, {})",
                self.num_classes
            )));
        }
        Ok(Self {
            features: Arc::clone(&self.features),
            labels,
            num_classes: self.num_classes,
            dim: self.dim,
        })
    }

    /// Copies the given rows into a new dataset, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let w = self.width();
        let mut flat = Vec::with_capacity(indices.len() * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.len(),
                });
            }
            flat.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::from_flat(flat, self.dim, labels, self.num_classes)
    }

    pub(crate) fn set_label(&mut self, i: usize, label: usize) {
        debug_assert!(label < self.num_classes);
        self.labels[i] = label;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryParams {
    pub alpha: Vec<f64>,
}

impl BinaryParams {
    pub fn zeros(width: usize) -> Self {
        Self {
            alpha: vec![0.0; width],
        }
    }
}

/// One weight row per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MulticlassParams {
    pub weights: Vec<Vec<f64>>,
}

impl MulticlassParams {
    pub fn zeros(num_classes: usize, width: usize) -> Self {
        Self {
            weights: vec![vec![0.0; width]; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn width(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o = dot(w, x);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Binary(BinaryParams),
    Multiclass(MulticlassParams),
}

impl ModelParams {
    /// Zero-initialised parameters for `data`: the sigmoid model for two
    /// classes, the softmax model otherwise.
    pub fn zeros_for(data: &LabeledDataset) -> Self {
        if data.num_classes() == 2 {
            ModelParams::Binary(BinaryParams::zeros(data.width()))
        } else {
            ModelParams::Multiclass(MulticlassParams::zeros(data.num_classes(), data.width()))
        }
    }

    /// Parameter rows: one for binary, `C` for multiclass.
    pub fn rows(&self) -> Vec<&[f64]> {
        match self {
            ModelParams::Binary(p) => vec![p.alpha.as_slice()],
            ModelParams::Multiclass(p) => p.weights.iter().map(Vec::as_slice).collect(),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            ModelParams::Binary(p) => p.alpha.len(),
            ModelParams::Multiclass(p) => p.width(),
        }
    }

    /// Same variant, row count and row width.
    pub fn same_shape(&self, other: &ModelParams) -> bool {
        match (self, other) {
            (ModelParams::Binary(a), ModelParams::Binary(b)) => a.alpha.len() == b.alpha.len(),
            (ModelParams::Multiclass(a), ModelParams::Multiclass(b)) => {
                a.num_classes() == b.num_classes() && a.width() == b.width()
            }
            _ => false,
        }
    }

    /// Euclidean (Frobenius for matrices) distance.
    pub fn distance(&self, other: &ModelParams) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::DimensionMismatch {
                expected: self.width(),
                found: other.width(),
            });
        }
        let sq: f64 = self
            .rows()
            .iter()
            .zip(other.rows())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
            .sum();
        Ok(sq.sqrt())
    }

    pub fn is_finite(&self) -> bool {
        self.rows().iter().all(|r| r.iter().all(|v| v.is_finite()))
    }

    fn check_data(&self, data: &LabeledDataset) -> Result<()> {
        if self.width() != data.width() {
            return Err(Error::DimensionMismatch {
                expected: self.width(),
                found: data.width(),
            });
        }
        match self {
            ModelParams::Binary(_) if data.num_classes() != 2 => Err(Error::DimensionMismatch {
                expected: 2,
                found: data.num_classes(),
            }),
            ModelParams::Multiclass(p) if p.num_classes() != data.num_classes() => {
                Err(Error::DimensionMismatch {
                    expected: p.num_classes(),
                    found: data.num_classes(),
                })
            }
            _ => Ok(()),
        }
    }
}

/// Training hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 64,
            epochs: 200,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it freezes the model, which tests rely on.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent partial sums let the compiler vectorise.
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Logistic function, evaluated without overflow for any finite input.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)`, stable for large `|z|`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn binary_sample_loss(z: f64, y: usize) -> f64 {
    // -ln σ(z) = softplus(-z), -ln(1 - σ(z)) = softplus(z)
    let l = if y == 1 { softplus(-z) } else { softplus(z) };
    l.min(MAX_SAMPLE_LOSS)
}

pub fn binary_loss(params: &BinaryParams, data: &LabeledDataset) -> Result<f64> {
    check_binary(params, data)?;
    let total: f64 = data
        .rows()
        .zip(data.labels())
        .map(|(x, &y)| binary_sample_loss(dot(&params.alpha, x), y))
        .sum();
    Ok(total / data.len() as f64)
}

pub fn binary_gradient(params: &BinaryParams, data: &LabeledDataset) -> Result<Vec<f64>> {
    check_binary(params, data)?;
    let all: Vec<usize> = (0..data.len()).collect();
    Ok(binary_batch_gradient(params, data, &all))
}

fn binary_batch_gradient(
    params: &BinaryParams,
    data: &LabeledDataset,
    batch: &[usize],
) -> Vec<f64> {
    let mut grad = vec![0.0; data.width()];
    for &i in batch {
        let x = data.row(i);
        let residual = sigmoid(dot(&params.alpha, x)) - data.label(i) as f64;
        axpy(residual, x, &mut grad);
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    grad
}

pub fn multiclass_loss(params: &MulticlassParams, data: &LabeledDataset) -> Result<f64> {
    check_multiclass(params, data)?;
    let mut logits = vec![0.0; params.num_classes()];
    let mut total = 0.0;
    for (x, &y) in data.rows().zip(data.labels()) {
        params.logits_into(x, &mut logits);
        total += (log_sum_exp(&logits) - logits[y]).min(MAX_SAMPLE_LOSS);
    }
    Ok(total / data.len() as f64)
}

pub fn multiclass_gradient(
    params: &MulticlassParams,
    data: &LabeledDataset,
) -> Result<Vec<Vec<f64>>> {
    check_multiclass(params, data)?;
    let all: Vec<usize> = (0..data.len()).collect();
    Ok(multiclass_batch_gradient(params, data, &all))
}

fn multiclass_batch_gradient(
    params: &MulticlassParams,
    data: &LabeledDataset,
    batch: &[usize],
) -> Vec<Vec<f64>> {
    let c = params.num_classes();
    let mut grad = vec![vec![0.0; data.width()]; c];
    let mut probs = vec![0.0; c];
    for &i in batch {
        let x = data.row(i);
        params.logits_into(x, &mut probs);
        softmax_in_place(&mut probs);
        let y = data.label(i);
        for (j, row) in grad.iter_mut().enumerate() {
            let coeff = probs[j] - if j == y { 1.0 } else { 0.0 };
            axpy(coeff, x, row);
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for row in &mut grad {
        row.iter_mut().for_each(|g| *g *= scale);
    }
    grad
}

/// Mean cross-entropy of either model kind.
pub fn loss(params: &ModelParams, data: &LabeledDataset) -> Result<f64> {
    match params {
        ModelParams::Binary(p) => binary_loss(p, data),
        ModelParams::Multiclass(p) => multiclass_loss(p, data),
    }
}

/// Mean gradient over the whole dataset, shaped like `params`.
pub fn gradient(params: &ModelParams, data: &LabeledDataset) -> Result<ModelParams> {
    params.check_data(data)?;
    let all: Vec<usize> = (0..data.len()).collect();
    Ok(batch_gradient(params, data, &all))
}

fn batch_gradient(params: &ModelParams, data: &LabeledDataset, batch: &[usize]) -> ModelParams {
    match params {
        ModelParams::Binary(p) => ModelParams::Binary(BinaryParams {
            alpha: binary_batch_gradient(p, data, batch),
        }),
        ModelParams::Multiclass(p) => ModelParams::Multiclass(MulticlassParams {
            weights: multiclass_batch_gradient(p, data, batch),
        }),
    }
}

fn descend(params: &mut ModelParams, grad: &ModelParams, lr: f64) {
    match (params, grad) {
        (ModelParams::Binary(p), ModelParams::Binary(g)) => axpy(-lr, &g.alpha, &mut p.alpha),
        (ModelParams::Multiclass(p), ModelParams::Multiclass(g)) => {
            for (w, gw) in p.weights.iter_mut().zip(&g.weights) {
                axpy(-lr, gw, w);
            }
        }
        _ => unreachable!("gradient shape always matches params"),
    }
}

/// One pass of mini-batch SGD: shuffle with `rng`, split into batches of
/// `cfg.batch_size` (the last one may be short) and step on each.
pub fn sgd_epoch<R: Rng + ?Sized>(
    params: &ModelParams,
    data: &LabeledDataset,
    cfg: &SgdConfig,
    rng: &mut R,
) -> Result<ModelParams> {
    cfg.validate()?;
    params.check_data(data)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut next = params.clone();
    for batch in order.chunks(cfg.batch_size) {
        let grad = batch_gradient(&next, data, batch);
        descend(&mut next, &grad, cfg.learning_rate);
    }
    Ok(next)
}

/// Predicted class per sample. Binary: 1 iff σ(αᵀx) ≥ 0.5. Multiclass:
/// argmax of the logits, ties to the lowest class.
pub fn predict(params: &ModelParams, data: &LabeledDataset) -> Result<Vec<usize>> {
    params.check_data(data)?;
    Ok(match params {
        ModelParams::Binary(p) => data
            .rows()
            .map(|x| usize::from(sigmoid(dot(&p.alpha, x)) >= 0.5))
            .collect(),
        ModelParams::Multiclass(p) => {
            let mut logits = vec![0.0; p.num_classes()];
            data.rows()
                .map(|x| {
                    p.logits_into(x, &mut logits);
                    first_best(&logits, |x, best| x > best)
                })
                .collect()
        }
    })
}

pub fn accuracy(params: &ModelParams, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = predict(params, data)?;
    let hits = preds
        .iter()
        .zip(data.labels())
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

/// Index of the first element that no later element beats under `better`.
pub(crate) fn first_best(v: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if better(x, v[best]) {
            best = i;
        }
    }
    best
}

fn check_binary(params: &BinaryParams, data: &LabeledDataset) -> Result<()> {
    if params.alpha.len() != data.width() {
        return Err(Error::DimensionMismatch {
            expected: params.alpha.len(),
            found: data.width(),
        });
    }
    if data.num_classes() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: data.num_classes(),
        });
    }
    Ok(())
}

fn check_multiclass(params: &MulticlassParams, data: &LabeledDataset) -> Result<()> {
    if params.width() != data.width() {
        return Err(Error::DimensionMismatch {
            expected: params.width(),
            found: data.width(),
        });
    }
    if params.num_classes() != data.num_classes() {
        return Err(Error::DimensionMismatch {
            expected: params.num_classes(),
            found: data.num_classes(),
        });
    }
    Ok(())
}
