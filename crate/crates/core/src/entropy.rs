//! Cluster entropy of each group and the high/medium/low ranking.
//!
//! For a group with `C_i` patches in cluster `i`, `P(i) = C_i / Σ C` and
//! `H = -Σ P(i) ln P(i)` over the non-empty clusters (`0 ln 0 = 0`). `H` is 0
//! when every patch sits in one cluster and `ln K` when they spread evenly over
//! all `K` clusters.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::cluster::Assignment;
use crate::dataset::FeatureTable;
use crate::error::{Error, Result};

/// Cluster counts of one group's patches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub group_id: String,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntropy {
    pub group_id: String,
    pub counts: Vec<usize>,
    pub proportions: Vec<f64>,
    pub entropy: f64,
    pub n_patches: usize,
}

impl GroupEntropy {
    pub fn from_counts(group_id: String, counts: Vec<usize>) -> Result<Self> {
        let n_patches: usize = counts.iter().sum();
        let entropy = cluster_entropy(&counts)?;
        let proportions = counts.iter().map(|&c| c as f64 / n_patches as f64).collect();
        Ok(Self { group_id, counts, proportions, entropy, n_patches })
    }
}

/// Shannon entropy (natural log) of the distribution given by `counts`.
pub fn cluster_entropy(counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyGroup);
    }
    let total = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * libm::log(p)
        })
        .sum();
    Ok(if h > 0.0 { h } else { 0.0 })
}

/// Per-group cluster counts, groups in table order.
pub fn group_histograms(assignment: &Assignment, table: &FeatureTable, k: usize) -> Result<Vec<GroupCounts>> {
    if assignment.labels.len() != table.len() {
        return Err(Error::Consistency(format!(
            "assignment has {} labels for {} records",
            assignment.labels.len(),
            table.len()
        )));
    }
    let groups = table.records().iter().map(|r| r.group_id.as_str());
    histograms_by_group(groups, &assignment.labels, k)
}

/// Cluster counts keyed by the group of each label; groups in first-appearance order.
pub fn histograms_by_group<'a>(
    groups: impl IntoIterator<Item = &'a str>,
    labels: &[usize],
    k: usize,
) -> Result<Vec<GroupCounts>> {
    let mut out: Vec<GroupCounts> = Vec::new();
    let mut index: BTreeMap<&'a str, usize> = BTreeMap::new();
    let mut seen = 0;
    for (g, &l) in groups.into_iter().zip(labels) {
        if l >= k {
            return Err(Error::Consistency(format!("cluster label {l} out of range for K = {k}")));
        }
        let gi = *index.entry(g).or_insert_with(|| {
            out.push(GroupCounts { group_id: String::from(g), counts: vec![0; k] });
            out.len() - 1
        });
        out[gi].counts[l] += 1;
        seen += 1;
    }
    if seen != labels.len() {
        return Err(Error::Consistency(format!("{seen} group ids for {} labels", labels.len())));
    }
    Ok(out)
}

/// Histograms plus entropy for every group.
pub fn group_entropies(assignment: &Assignment, table: &FeatureTable, k: usize) -> Result<Vec<GroupEntropy>> {
    group_histograms(assignment, table, k)?
        .into_iter()
        .map(|h| GroupEntropy::from_counts(h.group_id, h.counts))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slice {
    High,
    Med,
    Low,
    None,
}

impl Slice {
    pub fn as_str(self) -> &'static str {
        match self {
            Slice::High => "high",
            Slice::Med => "med",
            Slice::Low => "low",
            Slice::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSelection {
    /// Entropy descending, ties by ascending group id.
    pub ordered: Vec<GroupEntropy>,
    pub slice_size: usize,
    pub high: Vec<String>,
    pub med: Vec<String>,
    pub low: Vec<String>,
}

impl RankedSelection {
    pub fn slice(&self, s: Slice) -> &[String] {
        match s {
            Slice::High => &self.high,
            Slice::Med => &self.med,
            Slice::Low => &self.low,
            Slice::None => &[],
        }
    }

    /// Slice membership; when slices overlap, high wins over med over low.
    pub fn slice_of(&self, group_id: &str) -> Slice {
        for s in [Slice::High, Slice::Med, Slice::Low] {
            if self.slice(s).iter().any(|g| g == group_id) {
                return s;
            }
        }
        Slice::None
    }

    /// Start position of the med window within `ordered`.
    pub fn med_start(group_count: usize, n: usize) -> usize {
        let center = (group_count - 1) / 2;
        center.saturating_sub((n - 1) / 2).min(group_count - n)
    }
}

fn by_entropy_desc(a: &GroupEntropy, b: &GroupEntropy) -> Ordering {
    b.entropy.total_cmp(&a.entropy).then_with(|| a.group_id.cmp(&b.group_id))
}

/// Sorts groups by entropy and cuts the top, middle and bottom `n`.
pub fn rank_groups(entropies: &[GroupEntropy], n: usize) -> Result<RankedSelection> {
    let m = entropies.len();
    if n == 0 {
        return Err(Error::InvalidArgument("slice size must be at least 1".into()));
    }
    if n > m {
        return Err(Error::Slice { n, groups: m });
    }
    let mut ordered = entropies.to_vec();
    ordered.sort_by(by_entropy_desc);
    let ids = |range: core::ops::Range<usize>| -> Vec<String> {
        ordered[range].iter().map(|g| g.group_id.clone()).collect()
    };
    let start = RankedSelection::med_start(m, n);
    let high = ids(0..n);
    let med = ids(start..start + n);
    let low = ids(m - n..m);
    Ok(RankedSelection { ordered, slice_size: n, high, med, low })
}

/// The group with the highest cluster entropy.
pub fn select_wsi(ranking: &RankedSelection) -> Result<&str> {
    ranking
        .ordered
        .first()
        .map(|g| g.group_id.as_str())
        .ok_or_else(|| Error::InvalidArgument("ranking is empty".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::testutil::points_table;
    use crate::rng::Rng;
    use alloc::string::ToString;

    fn ge(id: &str, h: f64) -> GroupEntropy {
        GroupEntropy { group_id: id.to_string(), counts: vec![], proportions: vec![], entropy: h, n_patches: 1 }
    }

    #[test]
    fn single_cluster_is_zero() {
        assert_eq!(cluster_entropy(&[7, 0, 0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn uniform_is_ln_k() {
        let h = cluster_entropy(&[13; 10]).unwrap();
        assert!((h - core::f64::consts::LN_10).abs() < 1e-12);
    }

    #[test]
    fn three_to_one() {
        // -(0.75 ln 0.75 + 0.25 ln 0.25), evaluated at 40 digits
        let h = cluster_entropy(&[3, 1, 0, 0]).unwrap();
        assert!((h - 0.5623351446188083).abs() < 1e-12);
    }

    #[test]
    fn empty_counts_error() {
        assert_eq!(cluster_entropy(&[0, 0, 0]), Err(Error::EmptyGroup));
        assert_eq!(cluster_entropy(&[]), Err(Error::EmptyGroup));
    }

    #[test]
    fn one_group_histogram() {
        let t = points_table(&[vec![0.0], vec![1.0], vec![2.0]], |_| "w".into());
        let h = group_histograms(&Assignment { labels: vec![0, 0, 1] }, &t, 2).unwrap();
        assert_eq!(h, [GroupCounts { group_id: "w".into(), counts: vec![2, 1] }]);
    }

    #[test]
    fn interleaved_groups_match_filter_then_count() {
        let mut rng = Rng::seed_from_u64(21);
        let groups: Vec<usize> = (0..500).map(|_| rng.below(6)).collect();
        let labels: Vec<usize> = (0..500).map(|_| rng.below(8)).collect();
        let pts: Vec<Vec<f64>> = (0..500).map(|i| vec![i as f64]).collect();
        let t = points_table(&pts, |i| alloc::format!("g{}", groups[i]));
        let hist = group_histograms(&Assignment { labels: labels.clone() }, &t, 8).unwrap();
        for h in &hist {
            let gi: usize = h.group_id[1..].parse().unwrap();
            for c in 0..8 {
                let oracle = (0..500).filter(|&i| groups[i] == gi && labels[i] == c).count();
                assert_eq!(h.counts[c], oracle);
            }
        }
    }

    #[test]
    fn absent_cluster_contributes_nothing() {
        assert_eq!(cluster_entropy(&[2, 0, 2]).unwrap(), cluster_entropy(&[2, 2]).unwrap());
    }

    #[test]
    fn histogram_length_mismatch() {
        let t = points_table(&[vec![0.0], vec![1.0]], |_| "w".into());
        assert!(matches!(
            group_histograms(&Assignment { labels: vec![0] }, &t, 2),
            Err(Error::Consistency(_))
        ));
        assert!(group_histograms(&Assignment { labels: vec![0, 2] }, &t, 2).is_err());
    }

    #[test]
    fn rank_three_groups() {
        let r = rank_groups(&[ge("a", 0.1), ge("b", 0.9), ge("c", 0.5)], 1).unwrap();
        assert_eq!(r.high, ["b"]);
        assert_eq!(r.med, ["c"]);
        assert_eq!(r.low, ["a"]);
        assert_eq!(select_wsi(&r).unwrap(), "b");
    }

    #[test]
    fn ties_break_by_group_id() {
        let gs: Vec<GroupEntropy> = ["d", "b", "e", "a", "c", "f"].iter().map(|id| ge(id, 1.0)).collect();
        let r = rank_groups(&gs, 2).unwrap();
        assert_eq!(r.high, ["a", "b"]);
        assert_eq!(r.low, ["e", "f"]);
        // center ⌊5/2⌋ = 2, even window shifted right
        assert_eq!(r.med, ["c", "d"]);
    }

    #[test]
    fn hundred_eight_groups_five_per_slice() {
        let mut rng = Rng::seed_from_u64(108);
        let gs: Vec<GroupEntropy> = (0..108).map(|i| ge(&alloc::format!("w{i:03}"), rng.next_f64())).collect();
        let r = rank_groups(&gs, 5).unwrap();
        assert_eq!((r.high.len(), r.med.len(), r.low.len()), (5, 5, 5));
        let mut all: Vec<&String> = r.high.iter().chain(&r.med).chain(&r.low).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 15);
        assert_eq!(r.med[2], r.ordered[53].group_id);
    }

    #[test]
    fn slice_larger_than_group_count() {
        assert_eq!(rank_groups(&[ge("a", 0.0)], 2).unwrap_err(), Error::Slice { n: 2, groups: 1 });
        assert!(rank_groups(&[ge("a", 0.0)], 0).is_err());
    }

    #[test]
    fn single_group_is_selected() {
        let r = rank_groups(&[ge("only", 0.3)], 1).unwrap();
        assert_eq!(select_wsi(&r).unwrap(), "only");
        assert_eq!(r.slice_of("only"), Slice::High);
    }
}
