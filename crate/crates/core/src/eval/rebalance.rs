//! Class rebalancing by over- and under-sampling.
//!
//! Every present class is brought to the geometric mean of the present class
//! counts: larger classes are subsampled without replacement, smaller ones keep
//! all their records plus random duplicates.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{FeatureTable, PatchRecord};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Target per-class count: rounded geometric mean of the non-zero counts.
pub fn balanced_count(counts: &[usize]) -> usize {
    let present: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| libm::log(c as f64)).collect();
    if present.is_empty() {
        return 0;
    }
    let g = libm::exp(present.iter().sum::<f64>() / present.len() as f64);
    (libm::round(g) as usize).max(1)
}

/// Positions of a rebalanced sample, ascending (duplicates adjacent).
pub fn rebalance_indices(labels: &[usize], num_classes: usize, rng: &mut Rng) -> Vec<usize> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let target = balanced_count(&counts);
    let mut out = Vec::with_capacity(target * num_classes);
    for members in &mut by_class {
        let n = members.len();
        if n == 0 {
            continue;
        }
        if n >= target {
            // partial Fisher-Yates: first `target` slots are a uniform subset
            for i in 0..target {
                let j = i + rng.below(n - i);
                members.swap(i, j);
            }
            out.extend_from_slice(&members[..target]);
        } else {
            out.extend_from_slice(members);
            for _ in n..target {
                out.push(members[rng.below(n)]);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Rebalanced copy of a fully labeled table. Repeated records get `#k` appended
/// to their patch id.
pub fn rebalance(table: &FeatureTable, seed: u64) -> Result<FeatureTable> {
    let labels = table
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| r.label.ok_or(Error::Labeling { row: i + 1, reason: "rebalancing needs labels".into() }))
        .collect::<Result<Vec<usize>>>()?;
    let mut rng = Rng::seed_from_u64(seed);
    let rows = rebalance_indices(&labels, table.num_classes(), &mut rng);
    let mut records: Vec<PatchRecord> = Vec::with_capacity(rows.len());
    let mut prev: Option<usize> = None;
    let mut repeat = 0;
    for &i in &rows {
        let mut r = table.record(i).clone();
        if prev == Some(i) {
            repeat += 1;
            r.patch_id = format!("{}#{repeat}", r.patch_id);
        } else {
            repeat = 0;
        }
        prev = Some(i);
        records.push(r);
    }
    FeatureTable::new(records, table.dim(), table.num_classes(), table.domain())
}
