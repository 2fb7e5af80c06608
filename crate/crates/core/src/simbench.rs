//! Synthetic source/target feature tables with domain and class-prior shift.
//!
//! Every class is a mixture of isotropic Gaussian components. Source patches
//! are drawn i.i.d. from the source class priors. Each target group draws its
//! own weights over the (shifted) components from a Dirichlet distribution, so
//! a small concentration gives groups stuck in one or two components and a
//! large one gives groups that cover the whole target distribution.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{Domain, FeatureTable, PatchRecord};
use crate::error::{Error, Result};
use crate::linalg::squared_distance;
use crate::rng::Rng;

/// Target-domain shift applied to every component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    /// Per-dimension translation magnitude (sign fixed per dimension by the seed).
    pub translation: f64,
    /// Multiplier on the component standard deviation.
    pub scale: f64,
}

/// Per-group Dirichlet concentration, drawn log-uniformly from `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub num_classes: usize,
    pub components_per_class: usize,
    pub dim: usize,
    pub source_priors: Vec<f64>,
    pub target_priors: Vec<f64>,
    /// Smallest distance between two component means, in component standard deviations.
    pub separation: f64,
    pub component_sd: f64,
    pub shift: Shift,
    pub source_wsis: usize,
    pub wsis: usize,
    /// Inclusive range of patches per group.
    pub patches_per_wsi: [usize; 2],
    pub alpha: AlphaRange,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_classes: 3,
            components_per_class: 2,
            dim: 16,
            source_priors: vec![0.85, 0.10, 0.05],
            target_priors: vec![0.5, 0.3, 0.2],
            separation: 8.0,
            component_sd: 1.0,
            shift: Shift { translation: 2.0, scale: 1.5 },
            source_wsis: 30,
            wsis: 60,
            patches_per_wsi: [100, 300],
            alpha: AlphaRange { min: 0.01, max: 50.0 },
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn num_components(&self) -> usize {
        self.num_classes * self.components_per_class
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_classes == 0 || self.components_per_class == 0 || self.dim == 0 {
            return bad("num_classes, components_per_class and dim must be positive".into());
        }
        if self.wsis == 0 || self.source_wsis == 0 {
            return bad("wsis and source_wsis must be positive".into());
        }
        let [lo, hi] = self.patches_per_wsi;
        if lo == 0 || hi < lo {
            return bad(format!("invalid patches_per_wsi range [{lo}, {hi}]"));
        }
        for (name, p) in [("source_priors", &self.source_priors), ("target_priors", &self.target_priors)] {
            if p.len() != self.num_classes {
                return bad(format!("{name} has {} entries for {} classes", p.len(), self.num_classes));
            }
            if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return bad(format!("{name} must be non-negative"));
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return bad(format!("{name} sum to {s}, not 1"));
            }
        }
        if !(self.component_sd > 0.0) || !(self.shift.scale > 0.0) {
            return bad("component_sd and shift.scale must be positive".into());
        }
        if !self.shift.translation.is_finite() {
            return bad("shift.translation must be finite".into());
        }
        if !(self.separation > 0.0) || !self.separation.is_finite() {
            return bad("separation must be positive".into());
        }
        if !(self.alpha.min > 0.0) || !(self.alpha.max >= self.alpha.min) || !self.alpha.max.is_finite() {
            return bad("alpha range must satisfy 0 < min <= max".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTruth {
    pub group_id: String,
    pub alpha: f64,
    /// Mixture weights over all components; sum to 1.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    /// Class of each component.
    pub component_classes: Vec<usize>,
    pub source_means: Vec<Vec<f64>>,
    pub target_means: Vec<Vec<f64>>,
    pub groups: Vec<GroupTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub source: FeatureTable,
    pub target: FeatureTable,
    pub truth: SimTruth,
}

/// Component means, centered and rescaled so the closest pair sits exactly
/// `separation * sd` apart.
fn component_means(rng: &mut Rng, count: usize, dim: usize, min_distance: f64) -> Vec<Vec<f64>> {
    let mut means: Vec<Vec<f64>> = (0..count).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect();
    let center = crate::linalg::column_means(means.iter().map(Vec::as_slice), dim);
    for m in &mut means {
        for (x, c) in m.iter_mut().zip(&center) {
            *x -= c;
        }
    }
    if count < 2 {
        return means;
    }
    let mut closest = f64::INFINITY;
    for i in 0..count {
        for j in (i + 1)..count {
            closest = closest.min(squared_distance(&means[i], &means[j]));
        }
    }
    let factor = min_distance / libm::sqrt(closest);
    for m in &mut means {
        for x in m.iter_mut() {
            *x *= factor;
        }
    }
    means
}

fn sample_point(rng: &mut Rng, mean: &[f64], sd: f64) -> Vec<f64> {
    mean.iter().map(|m| m + sd * rng.normal()).collect()
}

/// Generates the source table, the target table and the ground truth.
pub fn generate(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let mut root = Rng::seed_from_u64(config.seed);
    let mut geo = root.fork(1);
    let mut src_rng = root.fork(2);
    let mut tgt_rng = root.fork(3);

    let cpc = config.components_per_class;
    let m = config.num_components();
    let component_classes: Vec<usize> = (0..m).map(|k| k / cpc).collect();
    let sd = config.component_sd;
    let source_means = component_means(&mut geo, m, config.dim, config.separation * sd);
    let signs: Vec<f64> = (0..config.dim).map(|_| if geo.next_u64() >> 63 == 0 { 1.0 } else { -1.0 }).collect();
    let target_means: Vec<Vec<f64>> = source_means
        .iter()
        .map(|mu| mu.iter().zip(&signs).map(|(x, s)| x + s * config.shift.translation).collect())
        .collect();
    let [lo, hi] = config.patches_per_wsi;

    let mut source = Vec::new();
    for g in 0..config.source_wsis {
        let group_id = format!("S{g:03}");
        let n = src_rng.range_inclusive(lo, hi);
        for j in 0..n {
            let class = src_rng.weighted_index(&config.source_priors);
            let comp = class * cpc + src_rng.below(cpc);
            source.push(PatchRecord {
                patch_id: format!("{group_id}_{j:04}"),
                group_id: group_id.clone(),
                label: Some(class),
                features: sample_point(&mut src_rng, &source_means[comp], sd),
            });
        }
    }

    let base: Vec<f64> = component_classes
        .iter()
        .map(|&c| config.target_priors[c] / cpc as f64 * m as f64)
        .collect();
    let (ln_lo, ln_hi) = (libm::log(config.alpha.min), libm::log(config.alpha.max));
    let target_sd = sd * config.shift.scale;
    let mut target = Vec::new();
    let mut groups = Vec::with_capacity(config.wsis);
    for g in 0..config.wsis {
        let group_id = format!("T{g:03}");
        let alpha = libm::exp(ln_lo + (ln_hi - ln_lo) * tgt_rng.next_f64());
        let concentration: Vec<f64> = base.iter().map(|b| alpha * b).collect();
        // Classes with zero prior get no weight.
        let mut weights = tgt_rng.dirichlet(
            &concentration.iter().map(|&a| if a > 0.0 { a } else { 1.0 }).collect::<Vec<_>>(),
        );
        for (w, &a) in weights.iter_mut().zip(&concentration) {
            if a <= 0.0 {
                *w = 0.0;
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let n = tgt_rng.range_inclusive(lo, hi);
        for j in 0..n {
            let comp = tgt_rng.weighted_index(&weights);
            target.push(PatchRecord {
                patch_id: format!("{group_id}_{j:04}"),
                group_id: group_id.clone(),
                label: Some(component_classes[comp]),
                features: sample_point(&mut tgt_rng, &target_means[comp], target_sd),
            });
        }
        groups.push(GroupTruth { group_id, alpha, weights });
    }

    let source = FeatureTable::new(source, config.dim, config.num_classes, Domain::Source)?;
    let target = FeatureTable::new(target, config.dim, config.num_classes, Domain::Target)?;
    Ok(SimOutput {
        source,
        target,
        truth: SimTruth { component_classes, source_means, target_means, groups },
    })
}

/// Entropy (natural log) of a weight vector, `0 ln 0 = 0`.
pub fn weight_entropy(weights: &[f64]) -> f64 {
    let h: f64 = weights.iter().filter(|&&w| w > 0.0).map(|&w| -w * libm::log(w)).sum();
    if h > 0.0 {
        h
    } else {
        0.0
    }
}

/// Ground-truth diversity of every target group, in group order.
pub fn truth_diversity(truth: &SimTruth) -> Vec<(String, f64)> {
    truth.groups.iter().map(|g| (g.group_id.clone(), weight_entropy(&g.weights))).collect()
}
