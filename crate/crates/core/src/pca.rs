//! Principal-component projection used to reduce features before clustering.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::linalg::{self, dot};

/// Mean plus the top-`d` principal directions of a fitted table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d` rows of length `input_dim`; orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component, non-increasing and non-negative.
    pub eigenvalues: Vec<f64>,
    pub d: usize,
    #[serde(rename = "D")]
    pub input_dim: usize,
}

impl PcaModel {
    /// `components · (x - mean)`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.components.iter().map(|c| dot(c, &centered)).collect()
    }

    /// Maps reduced coordinates back to the input space.
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (zk, comp) in z.iter().zip(&self.components) {
            for (xi, ci) in x.iter_mut().zip(comp) {
                *xi += zk * ci;
            }
        }
        x
    }
}

/// Fits a `d`-component PCA on the table (centered, unscaled).
pub fn fit_pca(table: &FeatureTable, d: usize) -> Result<PcaModel> {
    let input_dim = table.dim();
    if d == 0 || d > input_dim {
        return Err(Error::Dimension { expected: input_dim, found: d });
    }
    if table.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, found: table.len() });
    }
    let rows = || table.records().iter().map(|r| r.features.as_slice());
    let mean = linalg::column_means(rows(), input_dim);
    let cov = linalg::covariance(rows(), &mean);
    let eig = linalg::symmetric_eigen(&cov)?;

    let mut components = Vec::with_capacity(d);
    let mut eigenvalues = Vec::with_capacity(d);
    for k in 0..d {
        let mut v = eig.vectors[k].clone();
        orient(&mut v);
        components.push(v);
        eigenvalues.push(eig.values[k].max(0.0));
    }
    Ok(PcaModel { mean, components, eigenvalues, d, input_dim })
}

/// Negates `v` when its largest-magnitude entry (first on ties) is negative.
fn orient(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Projects every record; ids, groups and labels are carried over.
pub fn transform(model: &PcaModel, table: &FeatureTable) -> Result<FeatureTable> {
    if table.dim() != model.input_dim {
        return Err(Error::Dimension { expected: model.input_dim, found: table.dim() });
    }
    let projected = table.records().iter().map(|r| model.project(&r.features)).collect();
    table.with_features(projected, model.d)
}
