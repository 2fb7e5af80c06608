//! k-means++ seeding with Lloyd refinement.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::linalg::squared_distance;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: usize,
    /// Sum of squared distances from each point to its nearest centroid.
    pub inertia: f64,
    pub iterations_run: usize,
    /// Seed of the run that produced this model.
    pub seed: u64,
}

impl KMeansModel {
    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self { k: 10, seed: 0, restarts: 10, tol: 1e-6, max_iter: 300 }
    }
}

/// One Lloyd run with its per-iteration inertia.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydRun {
    pub model: KMeansModel,
    pub assignment: Assignment,
    /// Inertia after the initial assignment and after every iteration.
    pub inertia_history: Vec<f64>,
}

/// Nearest centroid by squared distance; ties go to the lowest index.
#[inline]
fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(x, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    (best, best_d)
}

fn count_distinct(table: &FeatureTable) -> usize {
    let mut keys: Vec<Vec<u64>> = table
        .records()
        .iter()
        .map(|r| r.features.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

/// k-means++ seeding: the first center is a uniform draw, each later one is
/// drawn with probability proportional to its squared distance from the
/// nearest center chosen so far.
pub fn seed_plus_plus(table: &FeatureTable, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let n = table.len();
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, found: 0 });
    }
    let mut rng = Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(k);
    centers.push(table.features(rng.below(n)).to_vec());

    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(table.features(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::InfeasibleK { k, distinct: count_distinct(table) });
        }
        let pick = rng.weighted_index(&d2);
        let c = table.features(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = squared_distance(table.features(i), &c);
            if nd < *d {
                *d = nd;
            }
        }
        centers.push(c);
    }
    Ok(centers)
}

fn assign_step(table: &FeatureTable, centroids: &[Vec<f64>], labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let mut inertia = 0.0;
    for i in 0..table.len() {
        let (j, d) = nearest(table.features(i), centroids);
        labels[i] = j;
        dists[i] = d;
        inertia += d;
    }
    inertia
}

/// Lloyd iterations from the given centroids.
pub fn lloyd(table: &FeatureTable, init: &[Vec<f64>], tol: f64, max_iter: usize) -> Result<(KMeansModel, Assignment)> {
    let run = lloyd_traced(table, init, tol, max_iter, 0)?;
    Ok((run.model, run.assignment))
}

/// [`lloyd`] plus the inertia trace. `seed` is only recorded on the model.
pub fn lloyd_traced(table: &FeatureTable, init: &[Vec<f64>], tol: f64, max_iter: usize, seed: u64) -> Result<LloydRun> {
    let k = init.len();
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one initial centroid".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    let dim = table.dim();
    for c in init {
        if c.len() != dim {
            return Err(Error::Dimension { expected: dim, found: c.len() });
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite initial centroid".into()));
        }
    }
    let n = table.len();
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, found: 0 });
    }

    let mut centroids: Vec<Vec<f64>> = init.to_vec();
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut inertia = assign_step(table, &centroids, &mut labels, &mut dists);
    let mut history = vec![inertia];
    let mut iterations_run = 0;

    for it in 1..=max_iter {
        // Update: means of the current members, summed in record order.
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let j = labels[i];
            counts[j] += 1;
            for (s, &x) in sums[j].iter_mut().zip(table.features(i)) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let inv = counts[j] as f64;
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / inv;
                }
            }
        }
        // Empty clusters jump to the point farthest from its own centroid.
        for j in 0..k {
            if counts[j] == 0 {
                let mut far = 0;
                for i in 1..n {
                    if dists[i] > dists[far] {
                        far = i;
                    }
                }
                centroids[j] = table.features(far).to_vec();
                dists[far] = 0.0;
            }
        }

        let new_inertia = assign_step(table, &centroids, &mut labels, &mut dists);
        if !new_inertia.is_finite() {
            return Err(Error::Numeric("non-finite inertia".into()));
        }
        history.push(new_inertia);
        iterations_run = it;
        let improvement = inertia - new_inertia;
        inertia = new_inertia;
        if inertia == 0.0 || improvement < tol * (inertia + improvement) {
            break;
        }
    }

    Ok(LloydRun {
        model: KMeansModel { centroids, k, inertia, iterations_run, seed },
        assignment: Assignment { labels },
        inertia_history: history,
    })
}

/// Best of `restarts` seeded runs (seeds `seed`, `seed + 1`, ...); ties keep the earlier seed.
pub fn fit_kmeans(table: &FeatureTable, params: &KMeansParams) -> Result<(KMeansModel, Assignment)> {
    if params.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let mut best: Option<LloydRun> = None;
    for r in 0..params.restarts {
        let run = single_run(table, params, params.seed.wrapping_add(r as u64))?;
        if best.as_ref().map_or(true, |b| run.model.inertia < b.model.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("restarts >= 1");
    Ok((best.model, best.assignment))
}

/// Seeding plus Lloyd for one seed.
pub fn single_run(table: &FeatureTable, params: &KMeansParams, seed: u64) -> Result<LloydRun> {
    let init = seed_plus_plus(table, params.k, seed)?;
    lloyd_traced(table, &init, params.tol, params.max_iter, seed)
}

/// Nearest-centroid labels for every record.
pub fn assign(model: &KMeansModel, table: &FeatureTable) -> Result<Assignment> {
    if table.dim() != model.dim() {
        return Err(Error::Dimension { expected: model.dim(), found: table.dim() });
    }
    let labels = table.records().iter().map(|r| nearest(&r.features, &model.centroids).0).collect();
    Ok(Assignment { labels })
}

/// Sum of squared distances from each record to the centroid it is labeled with.
pub fn assignment_cost(model: &KMeansModel, table: &FeatureTable, assignment: &Assignment) -> f64 {
    table
        .records()
        .iter()
        .zip(&assignment.labels)
        .map(|(r, &j)| squared_distance(&r.features, &model.centroids[j]))
        .sum()
}
