//! Downstream evaluation: retrain a linear classifier on source data plus one
//! annotated target group and score it on held-out target groups.

pub mod classifier;
pub mod experiment;
pub mod metrics;
pub mod rebalance;

pub use classifier::{train, train_with_validation, Classifier, TrainConfig};
pub use experiment::{
    check_leakage, execute_run, plan_experiment, run_experiment, summarize, Condition, ConditionSummary,
    ExperimentConfig, ExperimentPlan, ExperimentSummary, PairwiseTest, RunResult, RunSpec,
};
pub use metrics::{evaluate, EvalReport};
pub use rebalance::{rebalance, rebalance_indices};
