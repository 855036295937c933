//! Abstaining-model generators g(R, m_{1:i-1}).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::constraint::{AccuracyConstraint, BoundConstraint};
use super::model::{EnsembleModel, GeneratedModel};
use crate::abstain::{confidences, softmax, AbstainingModel, AccuracyModel, AccuracyModelKind};
use crate::cost::{composite_id, CompositeModel};
use crate::data::{AccuracyMetric, Label, ModelOutput, PredictionLog};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Ridge term of the ensemble weight fit.
pub const ENSEMBLE_RIDGE: f64 = 1e-6;

/// Inputs shared by every generator call in one greedy run.
#[derive(Clone, Copy)]
pub struct GenContext<'a> {
    pub log: &'a PredictionLog,
    pub constraint: &'a AccuracyConstraint,
    pub exec: Execution,
}

pub trait ModelGenerator: Sync {
    fn generate(
        &self,
        ctx: &GenContext<'_>,
        remaining: &[usize],
        prior: &[GeneratedModel],
    ) -> Result<Vec<GeneratedModel>>;
}

/// Smallest threshold in {−∞} ∪ {q̂(x) : x ∈ R} at which the constraint holds
/// on the answered set; `+∞` (answer nothing) when none does.
///
/// `items` holds (example, prediction, q̂) for every example of R.
pub(crate) fn min_threshold(items: &[(usize, Label, f64)], bound: &BoundConstraint<'_>) -> f64 {
    let mut sorted: Vec<&(usize, Label, f64)> = items.iter().collect();
    sorted.sort_by(|a, b| b.2.total_cmp(&a.2));

    // prefix sums over groups of equal q̂, in descending q̂ order
    let mut groups: Vec<(f64, f64, f64)> = Vec::new();
    let (mut q_model, mut q_ref) = (0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].2;
        while i < sorted.len() && sorted[i].2 == v {
            let (a, b) = bound.contribution(Some(sorted[i].1), sorted[i].0);
            q_model += a;
            q_ref += b;
            i += 1;
        }
        groups.push((v, q_model, q_ref));
    }

    if bound.holds(q_model, q_ref) {
        return f64::NEG_INFINITY;
    }
    for &(v, a, b) in groups.iter().rev() {
        if bound.holds(a, b) {
            return v;
        }
    }
    f64::INFINITY
}

/// ConfidentModel with the threshold set just high enough to satisfy the
/// constraint on R, for every (pool model, accuracy model) pair.
pub fn confident_model_set(
    remaining: &[usize],
    pool: &[(String, AccuracyModel)],
    constraint: &AccuracyConstraint,
    log: &PredictionLog,
    exec: Execution,
) -> Result<Vec<GeneratedModel>> {
    let bound = constraint.bind(log)?;
    par::map(exec, pool, |(model_id, accuracy_model)| {
        let m = log.model_index(model_id)?;
        let q = confidences(accuracy_model, log, m)?;
        let items: Vec<(usize, Label, f64)> = remaining
            .iter()
            .map(|&e| (e, log.output(m, e).prediction, q[e]))
            .collect();
        let threshold = min_threshold(&items, &bound);
        Ok(GeneratedModel::Pool(AbstainingModel::new(
            model_id.clone(),
            accuracy_model.clone(),
            threshold,
        )))
    })
    .into_iter()
    .collect()
}

/// Least-squares ensemble weights against one-hot targets with a small ridge
/// term. `probs[j][e]` is component j's probability vector on example e.
pub fn fit_ensemble_weights(probs: &[Vec<Vec<f64>>], labels: &[Label], rows: &[usize]) -> Vec<f64> {
    let j = probs.len();
    if j == 1 {
        return vec![1.0];
    }
    let mut gram = DMatrix::<f64>::zeros(j, j);
    let mut rhs = DVector::<f64>::zeros(j);
    for &e in rows {
        let width = probs[0][e].len();
        for (k, target) in (0..width).map(|k| (k, if labels[e] as usize == k { 1.0 } else { 0.0 }))
        {
            for a in 0..j {
                let ga = probs[a][e][k];
                rhs[a] += ga * target;
                for b in 0..=a {
                    gram[(a, b)] += ga * probs[b][e][k];
                }
            }
        }
    }
    for a in 0..j {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
        gram[(a, a)] += ENSEMBLE_RIDGE;
    }
    match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs).iter().copied().collect(),
        None => gram
            .lu()
            .solve(&rhs)
            .map(|v| v.iter().copied().collect())
            .unwrap_or_else(|| vec![1.0 / j as f64; j]),
    }
}

/// Squared error of ensemble weights against one-hot targets on `rows`.
pub fn ensemble_objective(
    probs: &[Vec<Vec<f64>>],
    labels: &[Label],
    rows: &[usize],
    beta: &[f64],
) -> f64 {
    rows.iter()
        .map(|&e| {
            (0..probs[0][e].len())
                .map(|k| {
                    let mix: f64 = probs.iter().zip(beta).map(|(p, b)| b * p[e][k]).sum();
                    let target = if labels[e] as usize == k { 1.0 } else { 0.0 };
                    (mix - target).powi(2)
                })
                .sum::<f64>()
        })
        .sum()
}

fn prior_components(prior: &[GeneratedModel]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for stage in prior {
        for id in stage.base_models() {
            if !out.contains(&id) {
                out.push(id);
            }
        }
    }
    out
}

/// For every pool model p, an ensemble of p with the prior stages' base
/// models, thresholded like [`confident_model_set`].
pub fn ensemble_generator(
    remaining: &[usize],
    prior: &[GeneratedModel],
    pool: &[(String, AccuracyModelKind)],
    metric: AccuracyMetric,
    constraint: &AccuracyConstraint,
    log: &PredictionLog,
    exec: Execution,
) -> Result<Vec<GeneratedModel>> {
    let bound = constraint.bind(log)?;
    let base = prior_components(prior);
    let labels: Vec<Label> = log.examples().iter().map(|e| e.label).collect();
    par::map(exec, pool, |(pool_id, kind)| {
        let mut components = base.clone();
        components.push(pool_id.clone());
        let probs: Vec<Vec<Vec<f64>>> = components
            .iter()
            .map(|id| {
                let m = log.model_index(id)?;
                log.outputs_of(m)
                    .iter()
                    .map(|o| {
                        o.scores
                            .as_deref()
                            .map(softmax)
                            .ok_or_else(|| Error::MissingScores(id.clone()))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let beta = fit_ensemble_weights(&probs, &labels, remaining);
        let outputs = EnsembleModel::outputs(&components, &beta, log)?;
        let cells: Vec<&ModelOutput> = remaining.iter().map(|&e| &outputs[e]).collect();
        let targets: Vec<f64> = remaining
            .iter()
            .map(|&e| metric.value(outputs[e].prediction, labels[e]))
            .collect();
        let accuracy_model = if remaining.is_empty() {
            match kind {
                AccuracyModelKind::Raw(f) => AccuracyModel::raw(f),
                _ => return Err(Error::EmptyInput("ensemble accuracy model")),
            }
        } else {
            kind.fit_cells(&cells, &targets)?
        };
        let mut ensemble = EnsembleModel {
            components,
            beta,
            accuracy_model,
            threshold: f64::NEG_INFINITY,
        };
        let scored = ensemble.confidences(log)?;
        let items: Vec<(usize, Label, f64)> = remaining
            .iter()
            .map(|&e| (e, scored[e].0, scored[e].1))
            .collect();
        ensemble.threshold = min_threshold(&items, &bound);
        Ok(GeneratedModel::Ensemble(ensemble))
    })
    .into_iter()
    .collect()
}

/// Pool models with per-iteration thresholds.
pub struct ConfidentGenerator {
    pub pool: Vec<(String, AccuracyModel)>,
}

impl ModelGenerator for ConfidentGenerator {
    fn generate(
        &self,
        ctx: &GenContext<'_>,
        remaining: &[usize],
        _prior: &[GeneratedModel],
    ) -> Result<Vec<GeneratedModel>> {
        confident_model_set(remaining, &self.pool, ctx.constraint, ctx.log, ctx.exec)
    }
}

/// Ensembles of each pool model with the models already in the cascade.
pub struct EnsembleGenerator {
    pub pool: Vec<(String, AccuracyModelKind)>,
    pub metric: AccuracyMetric,
    /// Emit single-component ensembles when no stage precedes them.
    pub include_singletons: bool,
}

impl ModelGenerator for EnsembleGenerator {
    fn generate(
        &self,
        ctx: &GenContext<'_>,
        remaining: &[usize],
        prior: &[GeneratedModel],
    ) -> Result<Vec<GeneratedModel>> {
        if prior.is_empty() && !self.include_singletons {
            return Ok(Vec::new());
        }
        ensemble_generator(
            remaining,
            prior,
            &self.pool,
            self.metric,
            ctx.constraint,
            ctx.log,
            ctx.exec,
        )
    }
}

/// Prefix composites of linear chains, with each member thresholded on R.
///
/// The composite vertices must already be registered in the cost function
/// (see [`crate::cost::register_prefix_composites`]).
pub struct CompositeGenerator {
    pub chains: Vec<Vec<String>>,
    pub accuracy_models: HashMap<String, AccuracyModel>,
}

impl ModelGenerator for CompositeGenerator {
    fn generate(
        &self,
        ctx: &GenContext<'_>,
        remaining: &[usize],
        _prior: &[GeneratedModel],
    ) -> Result<Vec<GeneratedModel>> {
        let mut out = Vec::new();
        for chain in &self.chains {
            let pool: Vec<(String, AccuracyModel)> = chain
                .iter()
                .map(|id| {
                    self.accuracy_models
                        .get(id)
                        .cloned()
                        .map(|a| (id.clone(), a))
                        .ok_or_else(|| Error::UnknownModel(id.clone()))
                })
                .collect::<Result<_>>()?;
            let members: Vec<AbstainingModel> =
                confident_model_set(remaining, &pool, ctx.constraint, ctx.log, ctx.exec)?
                    .into_iter()
                    .map(|g| match g {
                        GeneratedModel::Pool(m) => m,
                        _ => unreachable!("confident_model_set emits pool models"),
                    })
                    .collect();
            for k in 1..=chain.len() {
                out.push(GeneratedModel::Composite(CompositeModel {
                    id: composite_id(&chain[..k]),
                    members: members[..k].to_vec(),
                }));
            }
        }
        Ok(out)
    }
}

/// The same models on every call.
pub struct FixedGenerator(pub Vec<GeneratedModel>);

impl ModelGenerator for FixedGenerator {
    fn generate(
        &self,
        _ctx: &GenContext<'_>,
        _remaining: &[usize],
        _prior: &[GeneratedModel],
    ) -> Result<Vec<GeneratedModel>> {
        Ok(self.0.clone())
    }
}

/// Concatenation of several generators' outputs.
pub struct UnionGenerator(pub Vec<Box<dyn ModelGenerator>>);

impl ModelGenerator for UnionGenerator {
    fn generate(
        &self,
        ctx: &GenContext<'_>,
        remaining: &[usize],
        prior: &[GeneratedModel],
    ) -> Result<Vec<GeneratedModel>> {
        let mut out = Vec::new();
        for g in &self.0 {
            out.extend(g.generate(ctx, remaining, prior)?);
        }
        Ok(out)
    }
}
