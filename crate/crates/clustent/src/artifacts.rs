//! Files written and read between stages.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use clustent_core::entropy::{rank_groups, GroupEntropy, RankedSelection, Slice};
use clustent_core::{Assignment, FeatureTable};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{csv_writer, ensure_exists, finish, fmt_f64, write_row};

pub const PCA: &str = "pca.json";
pub const KMEANS: &str = "kmeans.json";
pub const ASSIGNMENT: &str = "assignment.csv";
pub const ENTROPY: &str = "entropy.ndjson";
pub const RANKING: &str = "ranking.ndjson";
pub const SELECTION: &str = "selection.json";
pub const SUMMARY: &str = "summary.json";
pub const REDUCED_STEM: &str = "reduced";

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(BufWriter::new(f))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::format(path, e.to_string()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    ensure_exists(path)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_ndjson<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| CliError::format(path, e.to_string()))?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    ensure_exists(path)?;
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| CliError::format(path, format!("line {}: {e}", i + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyLine {
    pub group_id: String,
    pub n: usize,
    pub counts: Vec<usize>,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingLine {
    pub group_id: String,
    pub n: usize,
    pub counts: Vec<usize>,
    pub entropy: f64,
    pub rank: usize,
    pub slice: Slice,
}

impl From<&GroupEntropy> for EntropyLine {
    fn from(g: &GroupEntropy) -> Self {
        Self { group_id: g.group_id.clone(), n: g.n_patches, counts: g.counts.clone(), entropy: g.entropy }
    }
}

/// Rebuilds the entropy record from its counts, checking the stored totals.
fn entropy_from_line(path: &Path, group_id: &str, n: usize, counts: &[usize]) -> Result<GroupEntropy> {
    let g = GroupEntropy::from_counts(group_id.to_string(), counts.to_vec())
        .map_err(|e| CliError::Table { path: path.to_path_buf(), source: e })?;
    if g.n_patches != n {
        return Err(CliError::format(path, format!("group `{group_id}`: n = {n} but counts sum to {}", g.n_patches)));
    }
    Ok(g)
}

pub fn write_entropy(path: &Path, entropies: &[GroupEntropy]) -> Result<()> {
    let rows: Vec<EntropyLine> = entropies.iter().map(EntropyLine::from).collect();
    write_ndjson(path, &rows)
}

pub fn read_entropy(path: &Path) -> Result<Vec<GroupEntropy>> {
    read_ndjson::<EntropyLine>(path)?
        .iter()
        .map(|l| entropy_from_line(path, &l.group_id, l.n, &l.counts))
        .collect()
}

pub fn write_ranking(path: &Path, ranking: &RankedSelection) -> Result<()> {
    let rows: Vec<RankingLine> = ranking
        .ordered
        .iter()
        .enumerate()
        .map(|(i, g)| RankingLine {
            group_id: g.group_id.clone(),
            n: g.n_patches,
            counts: g.counts.clone(),
            entropy: g.entropy,
            rank: i + 1,
            slice: ranking.slice_of(&g.group_id),
        })
        .collect();
    write_ndjson(path, &rows)
}

/// Reads a ranking back. The slice size is the number of `high` rows.
pub fn read_ranking(path: &Path) -> Result<RankedSelection> {
    let lines: Vec<RankingLine> = read_ndjson(path)?;
    let n = lines.iter().filter(|l| l.slice == Slice::High).count();
    let entropies = lines
        .iter()
        .map(|l| entropy_from_line(path, &l.group_id, l.n, &l.counts))
        .collect::<Result<Vec<_>>>()?;
    rank_groups(&entropies, n).map_err(|e| CliError::Table { path: path.to_path_buf(), source: e })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub selected: String,
    pub entropy: f64,
    pub slice_size: usize,
    pub high: Vec<String>,
    pub med: Vec<String>,
    pub low: Vec<String>,
}

impl Selection {
    pub fn from_ranking(ranking: &RankedSelection) -> Option<Self> {
        let top = ranking.ordered.first()?;
        Some(Self {
            selected: top.group_id.clone(),
            entropy: top.entropy,
            slice_size: ranking.slice_size,
            high: ranking.high.clone(),
            med: ranking.med.clone(),
            low: ranking.low.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub patch_id: String,
    pub wsi_id: String,
    pub cluster: usize,
}

pub fn write_assignment(path: &Path, table: &FeatureTable, assignment: &Assignment) -> Result<()> {
    if table.len() != assignment.labels.len() {
        return Err(CliError::format(
            path,
            format!("{} cluster labels for {} records", assignment.labels.len(), table.len()),
        ));
    }
    let mut w = csv_writer(path)?;
    write_row(&mut w, path, ["patch_id", "wsi_id", "cluster"])?;
    for (r, c) in table.records().iter().zip(&assignment.labels) {
        write_row(&mut w, path, [r.patch_id.as_str(), r.group_id.as_str(), &c.to_string()])?;
    }
    finish(w, path)
}

pub fn read_assignment(path: &Path) -> Result<Vec<AssignmentRow>> {
    ensure_exists(path)?;
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e.to_string()))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::format(path, format!("row {}: {e}", i + 1))))
        .collect()
}

/// Points and cluster histogram of one group, the data behind a per-group plot.
pub fn write_plot_data(
    dir: &Path,
    reduced: &FeatureTable,
    assignment: &Assignment,
    k: usize,
    group_id: &str,
) -> Result<()> {
    let group = reduced
        .group(group_id)
        .ok_or_else(|| CliError::Stage { stage: "export", source: clustent_core::Error::UnknownGroup(group_id.into()) })?;
    let name = file_safe(group_id);

    let path = dir.join(format!("projection_{name}.csv"));
    let mut w = csv_writer(&path)?;
    write_row(&mut w, &path, ["patch_id", "pc1", "pc2", "cluster", "label", "in_group"])?;
    for (r, &c) in reduced.records().iter().zip(&assignment.labels) {
        let pc2 = r.features.get(1).map(|&v| fmt_f64(v)).unwrap_or_default();
        let label = r.label.map(|l| l.to_string()).unwrap_or_default();
        let in_group = if r.group_id == group_id { "1" } else { "0" };
        write_row(&mut w, &path, [&r.patch_id, &fmt_f64(r.features[0]), &pc2, &c.to_string(), &label, in_group])?;
    }
    finish(w, &path)?;

    let mut counts = vec![0usize; k];
    for &i in &group.rows {
        counts[assignment.labels[i]] += 1;
    }
    let total = group.rows.len() as f64;
    let path = dir.join(format!("histogram_{name}.csv"));
    let mut w = csv_writer(&path)?;
    write_row(&mut w, &path, ["cluster", "count", "proportion"])?;
    for (c, &n) in counts.iter().enumerate() {
        write_row(&mut w, &path, [c.to_string(), n.to_string(), fmt_f64(n as f64 / total)])?;
    }
    finish(w, &path)
}

/// Group id with anything outside `[A-Za-z0-9._-]` replaced by `_`.
pub fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}
