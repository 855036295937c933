//! Accuracy constraints, model generators, the greedy cascade algorithm and
//! cascade evaluation.

mod constraint;
mod evaluate;
mod file;
mod generator;
mod greedy;
mod model;

pub use constraint::{exact_ge_product, AccuracyConstraint};
pub use evaluate::{evaluate_cascade, EvaluationReport, StageReport};
pub use file::{
    BuildStats, CascadeFile, CostSpec, EnsembleSpec, ExtendedReal, StageRow, StageSpec,
};
pub use generator::{
    confident_model_set, ensemble_generator, ensemble_objective, fit_ensemble_weights,
    CompositeGenerator, ConfidentGenerator, EnsembleGenerator, FixedGenerator, GenContext,
    ModelGenerator, UnionGenerator, ENSEMBLE_RIDGE,
};
pub use greedy::{
    answered_set, cascade_predictions, greedy_cascade, per_example_cost, per_example_costs,
    stage_costs, CascadeTrace, GreedyOptions, GreedyOutcome, Stage,
};
pub use model::{EnsembleModel, GeneratedModel, Provenance};
