//! Thread-pool versions of the core's serial loops. Results are collected in
//! input order and reduced exactly as the serial code does, so the output does
//! not depend on the number of threads.

use clustent_core::cluster::{fit_kmeans, single_run, LloydRun};
use clustent_core::entropy::RankedSelection;
use clustent_core::eval::{execute_run, plan_experiment, run_experiment, summarize, ExperimentConfig, ExperimentSummary};
use clustent_core::{Assignment, FeatureTable, KMeansModel, KMeansParams};
use rayon::prelude::*;

use crate::error::{CliError, Result, StageExt};

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))
}

/// k-means restarts spread over `jobs` threads.
pub fn kmeans(table: &FeatureTable, params: &KMeansParams, jobs: usize) -> Result<(KMeansModel, Assignment)> {
    if jobs <= 1 || params.restarts <= 1 {
        return fit_kmeans(table, params).stage("cluster");
    }
    let runs: Vec<clustent_core::Result<LloydRun>> = pool(jobs)?.install(|| {
        (0..params.restarts)
            .into_par_iter()
            .map(|r| single_run(table, params, params.seed.wrapping_add(r as u64)))
            .collect()
    });
    let mut best: Option<LloydRun> = None;
    for run in runs {
        let run = run.stage("cluster")?;
        if best.as_ref().map_or(true, |b| run.model.inertia < b.model.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("restarts >= 1");
    Ok((best.model, best.assignment))
}

/// (condition, seed) runs spread over `jobs` threads.
pub fn experiment(
    source: &FeatureTable,
    target: &FeatureTable,
    ranking: &RankedSelection,
    seeds: &[u64],
    config: &ExperimentConfig,
    jobs: usize,
) -> Result<ExperimentSummary> {
    if jobs <= 1 {
        return run_experiment(source, target, ranking, seeds, config).stage("evaluate");
    }
    let plan = plan_experiment(target, ranking, seeds, config).stage("evaluate")?;
    let results: Vec<_> = pool(jobs)?.install(|| {
        plan.runs.par_iter().map(|run| execute_run(source, target, &plan, run, config)).collect()
    });
    let results = results.into_iter().collect::<clustent_core::Result<Vec<_>>>().stage("evaluate")?;
    summarize(&plan, &results).stage("evaluate")
}
