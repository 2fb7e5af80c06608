//! Grouped patch-feature tables.
//!
//! A [`FeatureTable`] holds one feature vector per patch, the group (slide)
//! each patch was cut from, and an optional class label. Groups keep the order
//! in which they first appear; every downstream report iterates in that order.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub patch_id: String,
    pub group_id: String,
    pub label: Option<usize>,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub id: String,
    /// Record positions in table order.
    pub rows: Vec<usize>,
}

impl Group {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Validated, immutable table of patch records.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    records: Vec<PatchRecord>,
    dim: usize,
    num_classes: usize,
    domain: Domain,
    groups: Vec<Group>,
    lookup: BTreeMap<String, usize>,
}

impl FeatureTable {
    /// Builds a table, checking every record. Row numbers in errors are 1-based
    /// record positions.
    pub fn new(
        records: Vec<PatchRecord>,
        dim: usize,
        num_classes: usize,
        domain: Domain,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidArgument("class count must be positive".into()));
        }
        let mut seen_ids: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, rec) in records.iter().enumerate() {
            let row = i + 1;
            if rec.features.len() != dim {
                return Err(Error::Ingestion {
                    row,
                    field: "features".into(),
                    reason: format!("expected {dim} values, found {}", rec.features.len()),
                });
            }
            if let Some(j) = rec.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::Ingestion {
                    row,
                    field: format!("f{j}"),
                    reason: "non-finite value".into(),
                });
            }
            if let Some(prev) = seen_ids.insert(rec.patch_id.as_str(), row) {
                return Err(Error::Ingestion {
                    row,
                    field: "patch_id".into(),
                    reason: format!("duplicate patch_id `{}` (first seen at row {prev})", rec.patch_id),
                });
            }
            match rec.label {
                Some(c) if c >= num_classes => {
                    return Err(Error::Labeling {
                        row,
                        reason: format!("label {c} out of range for {num_classes} classes"),
                    })
                }
                None if domain == Domain::Source => {
                    return Err(Error::Labeling {
                        row,
                        reason: "source records must be labeled".into(),
                    })
                }
                _ => {}
            }
        }
        drop(seen_ids);

        let mut groups: Vec<Group> = Vec::new();
        let mut lookup: BTreeMap<String, usize> = BTreeMap::new();
        for (i, rec) in records.iter().enumerate() {
            let gi = *lookup.entry(rec.group_id.clone()).or_insert_with(|| {
                groups.push(Group { id: rec.group_id.clone(), rows: Vec::new() });
                groups.len() - 1
            });
            groups[gi].rows.push(i);
        }
        Ok(Self { records, dim, num_classes, domain, groups, lookup })
    }

    pub fn records(&self) -> &[PatchRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<PatchRecord> {
        self.records
    }

    pub fn record(&self, i: usize) -> &PatchRecord {
        &self.records[i]
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.records[i].features
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Groups in first-appearance order.
    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group(&self, id: &str) -> Option<&Group> {
        self.lookup.get(id).map(|&i| &self.groups[i])
    }

    pub fn group_ids(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.id.clone()).collect()
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.records.iter().all(|r| r.label.is_some())
    }

    /// The same records with replacement feature vectors of a new dimension.
    pub fn with_features(&self, features: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        if features.len() != self.records.len() {
            return Err(Error::Consistency(format!(
                "{} feature rows for {} records",
                features.len(),
                self.records.len()
            )));
        }
        let records = self
            .records
            .iter()
            .zip(features)
            .map(|(r, f)| PatchRecord {
                patch_id: r.patch_id.clone(),
                group_id: r.group_id.clone(),
                label: r.label,
                features: f,
            })
            .collect();
        FeatureTable::new(records, dim, self.num_classes, self.domain)
    }

    /// Records at the given positions, in the order given.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let records = rows.iter().map(|&i| self.records[i].clone()).collect();
        FeatureTable::new(records, self.dim, self.num_classes, self.domain)
    }

    /// Records of the listed groups, in table order.
    pub fn subset_groups(&self, ids: &[String]) -> Result<Self> {
        let mut keep = alloc::vec![false; self.groups.len()];
        for id in ids {
            let gi = *self.lookup.get(id).ok_or_else(|| Error::UnknownGroup(id.clone()))?;
            keep[gi] = true;
        }
        let rows: Vec<usize> = (0..self.records.len())
            .filter(|&i| keep[self.lookup[&self.records[i].group_id]])
            .collect();
        self.select_rows(&rows)
    }

    /// Concatenates tables of the same dimension and class count. The result
    /// takes the domain of `self`.
    pub fn concat(&self, other: &FeatureTable) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::Dimension { expected: self.dim, found: other.dim });
        }
        if other.num_classes != self.num_classes {
            return Err(Error::Consistency(format!(
                "class counts differ: {} vs {}",
                self.num_classes, other.num_classes
            )));
        }
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        FeatureTable::new(records, self.dim, self.num_classes, self.domain)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub counts: Vec<usize>,
}

impl ClassHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Per-class counts over the labeled records.
pub fn class_histogram(table: &FeatureTable) -> Result<ClassHistogram> {
    let mut counts = alloc::vec![0usize; table.num_classes()];
    let mut labeled = 0;
    for c in table.records().iter().filter_map(|r| r.label) {
        counts[c] += 1;
        labeled += 1;
    }
    if labeled == 0 {
        return Err(Error::EmptyLabels);
    }
    Ok(ClassHistogram { counts })
}

/// The records of one group, order preserved.
pub fn split_group(table: &FeatureTable, group_id: &str) -> Result<FeatureTable> {
    let group = table.group(group_id).ok_or_else(|| Error::UnknownGroup(group_id.to_string()))?;
    table.select_rows(&group.rows)
}
