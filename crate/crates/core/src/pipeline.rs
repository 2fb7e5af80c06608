//! Reduce, cluster, score and rank in one call.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cluster::{fit_kmeans, Assignment, KMeansModel, KMeansParams};
use crate::dataset::FeatureTable;
use crate::entropy::{group_entropies, rank_groups, GroupEntropy, RankedSelection};
use crate::error::Result;
use crate::pca::{fit_pca, transform, PcaModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaFit {
    /// Fit on the target table only.
    Target,
    /// Fit on target and source together.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub dim: usize,
    pub pca_fit: PcaFit,
    pub kmeans: KMeansParams,
    pub slice_size: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self { dim: 30, pca_fit: PcaFit::Target, kmeans: KMeansParams::default(), slice_size: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutput {
    pub pca: PcaModel,
    /// Target table in reduced coordinates.
    pub reduced: FeatureTable,
    pub kmeans: KMeansModel,
    pub assignment: Assignment,
    /// Group order of the target table.
    pub entropies: Vec<GroupEntropy>,
    pub ranking: RankedSelection,
}

impl SelectionOutput {
    pub fn selected(&self) -> &str {
        &self.ranking.ordered[0].group_id
    }
}

/// Runs the selection stages on a target table. `source` is only used when
/// the PCA is fit on both domains.
pub fn select(target: &FeatureTable, source: Option<&FeatureTable>, params: &SelectionParams) -> Result<SelectionOutput> {
    let pca = match (params.pca_fit, source) {
        (PcaFit::Both, Some(s)) => fit_pca(&target.concat(s)?, params.dim)?,
        _ => fit_pca(target, params.dim)?,
    };
    let reduced = transform(&pca, target)?;
    let (kmeans, assignment) = fit_kmeans(&reduced, &params.kmeans)?;
    let entropies = group_entropies(&assignment, &reduced, kmeans.k)?;
    let ranking = rank_groups(&entropies, params.slice_size)?;
    Ok(SelectionOutput { pca, reduced, kmeans, assignment, entropies, ranking })
}
