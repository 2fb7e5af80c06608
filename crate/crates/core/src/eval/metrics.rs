//! Per-class precision, recall, Dice and IoU with macro averages.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::classifier::Classifier;
use crate::dataset::FeatureTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub dice: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Rows are truth, columns are predictions.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    /// Whether each class occurs in the truth; only those enter the macro means.
    pub present: Vec<bool>,
    pub m_precision: f64,
    pub m_recall: f64,
    pub m_dice: f64,
    pub m_iou: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Result<Self> {
        let c = confusion.len();
        if confusion.iter().any(|row| row.len() != c) {
            return Err(Error::Evaluation("confusion matrix must be square".into()));
        }
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::Evaluation("empty test set".into()));
        }
        let mut per_class = Vec::with_capacity(c);
        let mut present = Vec::with_capacity(c);
        for k in 0..c {
            let tp = confusion[k][k];
            let fn_ = confusion[k].iter().sum::<usize>() - tp;
            let fp = (0..c).map(|r| confusion[r][k]).sum::<usize>() - tp;
            per_class.push(ClassMetrics {
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                dice: ratio(2 * tp, 2 * tp + fp + fn_),
                iou: ratio(tp, tp + fp + fn_),
            });
            present.push(tp + fn_ > 0);
        }
        let macro_mean = |f: fn(&ClassMetrics) -> f64| {
            let (sum, n) = per_class
                .iter()
                .zip(&present)
                .filter(|(_, &p)| p)
                .fold((0.0, 0usize), |(s, n), (m, _)| (s + f(m), n + 1));
            sum / n as f64
        };
        Ok(Self {
            m_precision: macro_mean(|m| m.precision),
            m_recall: macro_mean(|m| m.recall),
            m_dice: macro_mean(|m| m.dice),
            m_iou: macro_mean(|m| m.iou),
            confusion,
            per_class,
            present,
        })
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// Confusion matrix of `(truth, prediction)` pairs.
pub fn confusion_matrix(num_classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0usize; num_classes]; num_classes];
    for (t, p) in pairs {
        m[t][p] += 1;
    }
    m
}

/// Scores `model` on a labeled table.
pub fn evaluate(model: &Classifier, test: &FeatureTable) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    if test.dim() != model.dim() {
        return Err(Error::Dimension { expected: model.dim(), found: test.dim() });
    }
    if test.num_classes() != model.num_classes() {
        return Err(Error::Evaluation("class count differs between model and test table".into()));
    }
    let mut pairs = Vec::with_capacity(test.len());
    for (i, r) in test.records().iter().enumerate() {
        let truth = r.label.ok_or(Error::Labeling { row: i + 1, reason: "test records must be labeled".into() })?;
        pairs.push((truth, model.predict(&r.features)));
    }
    EvalReport::from_confusion(confusion_matrix(model.num_classes(), pairs))
}
