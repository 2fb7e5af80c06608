//! High/medium/low selection experiment.
//!
//! For every seed the runner trains five classifiers: source only, source plus
//! one group from each entropy slice (rotating through the slice across seeds),
//! and a target-only oracle. All are scored on the same held-out target groups.
//! Planning, single runs and aggregation are separate steps so callers can
//! execute runs in parallel and still aggregate in seed order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::classifier::{train_with_validation, TrainConfig};
use super::metrics::{evaluate, EvalReport};
use crate::dataset::FeatureTable;
use crate::entropy::{RankedSelection, Slice};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::stats::{self, WelchResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    SToT,
    High,
    Med,
    Low,
    TToT,
}

impl Condition {
    pub const ALL: [Condition; 5] = [Condition::SToT, Condition::High, Condition::Med, Condition::Low, Condition::TToT];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::SToT => "s_to_t",
            Condition::High => "high",
            Condition::Med => "med",
            Condition::Low => "low",
            Condition::TToT => "t_to_t",
        }
    }

    fn slice(self) -> Option<Slice> {
        match self {
            Condition::High => Some(Slice::High),
            Condition::Med => Some(Slice::Med),
            Condition::Low => Some(Slice::Low),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    /// Fraction of all target groups held out for validation.
    pub validation_fraction: f64,
    /// Seeds the validation/test split.
    pub split_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { train: TrainConfig::default(), validation_fraction: 0.2, split_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub condition: Condition,
    pub seed_index: usize,
    pub seed: u64,
    /// Target groups added to training (empty for source only).
    pub target_groups: Vec<String>,
    pub use_source: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub seeds: Vec<u64>,
    pub candidates: Vec<String>,
    pub validation_groups: Vec<String>,
    pub test_groups: Vec<String>,
    pub runs: Vec<RunSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub condition: Condition,
    pub seed: u64,
    pub target_groups: Vec<String>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    /// Target group used per seed (slice conditions only).
    pub groups: Vec<Option<String>>,
    pub m_precision: Vec<f64>,
    pub m_recall: Vec<f64>,
    pub m_dice: Vec<f64>,
    pub m_iou: Vec<f64>,
    pub mean_m_precision: f64,
    pub mean_m_recall: f64,
    pub mean_m_dice: f64,
    pub mean_m_iou: f64,
    pub std_m_precision: f64,
    pub std_m_recall: f64,
    pub std_m_dice: f64,
    pub std_m_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: Condition,
    pub b: Condition,
    pub metric: String,
    /// `None` when the test is undefined (fewer than two seeds or no variance).
    pub welch: Option<WelchResult>,
    pub p_bonferroni: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub seeds: Vec<u64>,
    pub validation_groups: Vec<String>,
    pub test_groups: Vec<String>,
    pub conditions: Vec<ConditionSummary>,
    pub significance: Vec<PairwiseTest>,
}

impl ExperimentSummary {
    pub fn condition(&self, c: Condition) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|s| s.condition == c)
    }

    pub fn test(&self, a: Condition, b: Condition, metric: &str) -> Option<&PairwiseTest> {
        self.significance.iter().find(|t| t.a == a && t.b == b && t.metric == metric)
    }
}

/// Splits the target groups and lays out every (condition, seed) run.
pub fn plan_experiment(target: &FeatureTable, ranking: &RankedSelection, seeds: &[u64], config: &ExperimentConfig) -> Result<ExperimentPlan> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) {
        return Err(Error::InvalidArgument("validation_fraction must be in [0, 1)".into()));
    }
    let all = target.group_ids();
    for g in ranking.high.iter().chain(&ranking.med).chain(&ranking.low) {
        if target.group(g).is_none() {
            return Err(Error::UnknownGroup(g.clone()));
        }
    }
    let in_slices = |g: &String| ranking.slice_of(g) != Slice::None;
    let candidates: Vec<String> = all.iter().filter(|g| in_slices(g)).cloned().collect();
    let mut rest: Vec<String> = all.iter().filter(|g| !in_slices(g)).cloned().collect();
    if rest.is_empty() {
        return Err(Error::Evaluation("no target groups left for testing".into()));
    }
    let wanted = libm::round(config.validation_fraction * all.len() as f64) as usize;
    let n_val = wanted.min(rest.len() - 1);
    let mut rng = Rng::seed_from_u64(config.split_seed);
    rng.shuffle(&mut rest);
    let picked: Vec<String> = rest[..n_val].to_vec();
    let validation_groups: Vec<String> = all.iter().filter(|g| picked.contains(g)).cloned().collect();
    let test_groups: Vec<String> = all
        .iter()
        .filter(|g| !in_slices(g) && !picked.contains(g))
        .cloned()
        .collect();

    let mut runs = Vec::with_capacity(seeds.len() * Condition::ALL.len());
    for (i, &seed) in seeds.iter().enumerate() {
        for c in Condition::ALL {
            let (target_groups, use_source) = match c {
                Condition::SToT => (Vec::new(), true),
                Condition::TToT => (candidates.clone(), false),
                _ => {
                    let slice = ranking.slice(c.slice().expect("slice condition"));
                    (alloc::vec![slice[i % slice.len()].clone()], true)
                }
            };
            runs.push(RunSpec { condition: c, seed_index: i, seed, target_groups, use_source });
        }
    }
    Ok(ExperimentPlan { seeds: seeds.to_vec(), candidates, validation_groups, test_groups, runs })
}

/// Fails when a run would train on a test group.
pub fn check_leakage(run: &RunSpec, test_groups: &[String]) -> Result<()> {
    let leaked: Vec<String> = run.target_groups.iter().filter(|g| test_groups.contains(g)).cloned().collect();
    if leaked.is_empty() {
        Ok(())
    } else {
        Err(Error::Leakage { groups: leaked })
    }
}

/// Trains and scores one planned run.
pub fn execute_run(source: &FeatureTable, target: &FeatureTable, plan: &ExperimentPlan, run: &RunSpec, config: &ExperimentConfig) -> Result<RunResult> {
    check_leakage(run, &plan.test_groups)?;
    let test = target.subset_groups(&plan.test_groups)?;
    let validation = if config.train.early_stop && !plan.validation_groups.is_empty() {
        Some(target.subset_groups(&plan.validation_groups)?)
    } else {
        None
    };
    let extra = if run.target_groups.is_empty() {
        None
    } else {
        Some(target.subset_groups(&run.target_groups)?)
    };
    let model = match (run.use_source, &extra) {
        (true, extra) => train_with_validation(source, extra.as_ref(), validation.as_ref(), &config.train, run.seed)?,
        (false, Some(t)) => train_with_validation(t, None, validation.as_ref(), &config.train, run.seed)?,
        (false, None) => return Err(Error::InvalidArgument("run has no training data".into())),
    };
    let report = evaluate(&model, &test)?;
    Ok(RunResult { condition: run.condition, seed: run.seed, target_groups: run.target_groups.clone(), report })
}

fn summarize_condition(condition: Condition, results: &[&RunResult]) -> ConditionSummary {
    let pick = |f: fn(&EvalReport) -> f64| -> Vec<f64> { results.iter().map(|r| f(&r.report)).collect() };
    let m_precision = pick(|r| r.m_precision);
    let m_recall = pick(|r| r.m_recall);
    let m_dice = pick(|r| r.m_dice);
    let m_iou = pick(|r| r.m_iou);
    let groups = results
        .iter()
        .map(|r| match condition.slice() {
            Some(_) => r.target_groups.first().cloned(),
            None => None,
        })
        .collect();
    ConditionSummary {
        condition,
        groups,
        mean_m_precision: stats::mean(&m_precision),
        mean_m_recall: stats::mean(&m_recall),
        mean_m_dice: stats::mean(&m_dice),
        mean_m_iou: stats::mean(&m_iou),
        std_m_precision: stats::std_dev(&m_precision),
        std_m_recall: stats::std_dev(&m_recall),
        std_m_dice: stats::std_dev(&m_dice),
        std_m_iou: stats::std_dev(&m_iou),
        m_precision,
        m_recall,
        m_dice,
        m_iou,
    }
}

/// Aggregates run results (in plan order) into per-condition statistics and
/// Bonferroni-corrected Welch tests between the slice conditions.
pub fn summarize(plan: &ExperimentPlan, results: &[RunResult]) -> Result<ExperimentSummary> {
    if results.len() != plan.runs.len() {
        return Err(Error::Consistency(format!("{} results for {} planned runs", results.len(), plan.runs.len())));
    }
    let conditions: Vec<ConditionSummary> = Condition::ALL
        .iter()
        .map(|&c| {
            let rs: Vec<&RunResult> = results.iter().filter(|r| r.condition == c).collect();
            summarize_condition(c, &rs)
        })
        .collect();
    let get = |c: Condition| conditions.iter().find(|s| s.condition == c).expect("all conditions summarized");
    let pairs = [(Condition::High, Condition::Med), (Condition::High, Condition::Low), (Condition::Med, Condition::Low)];
    let mut significance = Vec::new();
    for metric in ["m_iou", "m_dice"] {
        for (a, b) in pairs {
            let (xa, xb) = match metric {
                "m_iou" => (&get(a).m_iou, &get(b).m_iou),
                _ => (&get(a).m_dice, &get(b).m_dice),
            };
            let welch = stats::welch_test(xa, xb).ok();
            significance.push(PairwiseTest {
                a,
                b,
                metric: metric.into(),
                p_bonferroni: welch.map(|w| stats::bonferroni(w.p, pairs.len())),
                welch,
            });
        }
    }
    Ok(ExperimentSummary {
        seeds: plan.seeds.clone(),
        validation_groups: plan.validation_groups.clone(),
        test_groups: plan.test_groups.clone(),
        conditions,
        significance,
    })
}

/// Plans, runs (serially) and summarizes the whole experiment.
pub fn run_experiment(
    source: &FeatureTable,
    target: &FeatureTable,
    ranking: &RankedSelection,
    seeds: &[u64],
    config: &ExperimentConfig,
) -> Result<ExperimentSummary> {
    let plan = plan_experiment(target, ranking, seeds, config)?;
    let results = plan
        .runs
        .iter()
        .map(|run| execute_run(source, target, &plan, run, config))
        .collect::<Result<Vec<_>>>()?;
    summarize(&plan, &results)
}
