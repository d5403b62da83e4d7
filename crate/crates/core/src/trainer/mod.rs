//! Optimization loop, evaluation, the repeat-and-average protocol and
//! learning curves.

mod curve;
mod experiment;
mod optimizer;
mod step;
#[cfg(test)]
mod tests;

pub use curve::{mean_curve, peak_to_final_drop, smooth_curve, LearningCurve};
pub use experiment::{
    run_experiment, run_once, summarize, AuxData, ExperimentReport, ExperimentSetup, RunReport, RunStatus, Schedule,
    SplitSizes, Suite, SyntheticTasks, TaskData, TrainConfig,
};
pub use optimizer::{clip_gradients, Algorithm, ClipStats, Optimizer, OptimizerConfig};
pub use step::{evaluate, evaluate_aux, predict, score, train_step, AuxReport, StepReport};
