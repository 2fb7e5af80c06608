//! Multinomial logistic regression trained by mini-batch gradient descent.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::metrics::evaluate;
use super::rebalance::rebalance_indices;
use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Records per step. With an extra target table each step takes half from
    /// the source pool and half from the target pool.
    pub batch: usize,
    /// Keep the epoch with the best validation mIoU (needs a validation table).
    pub early_stop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.05, epochs: 10, batch: 64, early_stop: false }
    }
}

/// Linear class scores `W [x; 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    /// `C` rows of `d + 1` weights; the last entry is the bias.
    pub weights: Vec<Vec<f64>>,
    pub config: TrainConfig,
    pub seed: u64,
}

impl Classifier {
    pub fn zeros(num_classes: usize, dim: usize, config: TrainConfig, seed: u64) -> Self {
        Self { weights: vec![vec![0.0; dim + 1]; num_classes], config, seed }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, |w| w.len() - 1)
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter().map(|w| score(w, x)).collect()
    }

    pub fn softmax(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.scores(x);
        softmax_in_place(&mut s);
        s
    }

    /// Highest-scoring class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let s = self.scores(x);
        let mut best = 0;
        for k in 1..s.len() {
            if s[k] > s[best] {
                best = k;
            }
        }
        best
    }
}

#[inline]
fn score(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

fn softmax_in_place(s: &mut [f64]) {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in s.iter_mut() {
        *v = libm::exp(*v - max);
        total += *v;
    }
    for v in s.iter_mut() {
        *v /= total;
    }
}

/// Mean cross-entropy over `batch` and its gradient with respect to the weights.
pub fn loss_and_gradient(weights: &[Vec<f64>], batch: &[(&[f64], usize)]) -> (f64, Vec<Vec<f64>>) {
    let c = weights.len();
    let cols = weights[0].len();
    let d = cols - 1;
    let mut grad = vec![vec![0.0; cols]; c];
    let mut loss = 0.0;
    let mut probs = vec![0.0; c];
    for &(x, y) in batch {
        for (p, w) in probs.iter_mut().zip(weights) {
            *p = score(w, x);
        }
        let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_total = libm::log(probs.iter().map(|s| libm::exp(s - max)).sum::<f64>()) + max;
        loss += log_total - probs[y];
        for k in 0..c {
            let residual = libm::exp(probs[k] - log_total) - if k == y { 1.0 } else { 0.0 };
            let g = &mut grad[k];
            for j in 0..d {
                g[j] += residual * x[j];
            }
            g[d] += residual;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    for g in grad.iter_mut().flatten() {
        *g *= inv;
    }
    (loss * inv, grad)
}

fn labels_of(table: &FeatureTable, what: &str) -> Result<Vec<usize>> {
    table
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.label.ok_or_else(|| Error::Labeling { row: i + 1, reason: alloc::format!("{what} records must be labeled") })
        })
        .collect()
}

/// Trains on `source`, optionally mixed half-and-half with `extra_target`.
pub fn train(source: &FeatureTable, extra_target: Option<&FeatureTable>, config: &TrainConfig, seed: u64) -> Result<Classifier> {
    train_with_validation(source, extra_target, None, config, seed)
}

/// [`train`] with an optional validation table used for early stopping.
pub fn train_with_validation(
    source: &FeatureTable,
    extra_target: Option<&FeatureTable>,
    validation: Option<&FeatureTable>,
    config: &TrainConfig,
    seed: u64,
) -> Result<Classifier> {
    if config.batch == 0 || !(config.lr > 0.0) {
        return Err(Error::InvalidArgument("batch must be positive and lr > 0".into()));
    }
    if source.is_empty() {
        return Err(Error::InsufficientData { needed: 1, found: 0 });
    }
    let src_labels = labels_of(source, "source")?;
    let tgt_labels = match extra_target {
        Some(t) => {
            if t.dim() != source.dim() {
                return Err(Error::Dimension { expected: source.dim(), found: t.dim() });
            }
            if t.is_empty() {
                return Err(Error::InsufficientData { needed: 1, found: 0 });
            }
            Some(labels_of(t, "target")?)
        }
        None => None,
    };
    let classes = source.num_classes();
    let mut model = Classifier::zeros(classes, source.dim(), *config, seed);
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut rng = Rng::seed_from_u64(seed);

    let half = match tgt_labels {
        Some(_) => (config.batch / 2).max(1),
        None => config.batch,
    };
    let mut batch: Vec<(&[f64], usize)> = Vec::with_capacity(config.batch);

    for epoch in 0..config.epochs {
        let mut src_pool = rebalance_indices(&src_labels, classes, &mut rng);
        rng.shuffle(&mut src_pool);
        let mut tgt_pool = match &tgt_labels {
            Some(l) => {
                let mut p = rebalance_indices(l, classes, &mut rng);
                rng.shuffle(&mut p);
                p
            }
            None => Vec::new(),
        };
        let mut tgt_cursor = 0;
        for chunk in src_pool.chunks(half) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| (source.features(i), src_labels[i])));
            if let (Some(t), Some(l)) = (extra_target, &tgt_labels) {
                for _ in 0..half {
                    if tgt_cursor == tgt_pool.len() {
                        rng.shuffle(&mut tgt_pool);
                        tgt_cursor = 0;
                    }
                    let i = tgt_pool[tgt_cursor];
                    tgt_cursor += 1;
                    batch.push((t.features(i), l[i]));
                }
            }
            let (loss, grad) = loss_and_gradient(&model.weights, &batch);
            if !loss.is_finite() {
                return Err(Error::Training { epoch: epoch + 1 });
            }
            for (w, g) in model.weights.iter_mut().flatten().zip(grad.iter().flatten()) {
                *w -= config.lr * g;
            }
        }
        if config.early_stop {
            if let Some(v) = validation {
                let score = evaluate(&model, v)?.m_iou;
                if best.as_ref().map_or(true, |(b, _)| score > *b) {
                    best = Some((score, model.weights.clone()));
                }
            }
        }
    }
    if let Some((_, w)) = best {
        model.weights = w;
    }
    Ok(model)
}
