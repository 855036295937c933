//! The greedy cascade loop.
//!
//! Each iteration asks the generator for candidates, keeps those that answer
//! at least one remaining example and satisfy the accuracy constraint on the
//! examples they answer, and picks the one answering the most examples per
//! unit of marginal cost.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use super::constraint::AccuracyConstraint;
use super::generator::{GenContext, ModelGenerator};
use super::model::GeneratedModel;
use crate::cost::CostFunction;
use crate::data::{Label, PredictionLog};
use crate::error::Result;
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GreedyOptions {
    pub exec: Execution,
    /// Per-component cost added to ensemble stages.
    pub ensemble_overhead: f64,
}

/// One selected stage with its build-set statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub model: GeneratedModel,
    /// A_i: examples this stage answers among those still remaining.
    pub answered: Vec<usize>,
    /// n_i: examples remaining when the stage was selected.
    pub remaining: usize,
    /// C_i = c(m_i, m_{1:i-1}).
    pub cost: f64,
    /// r_i = |A_i| / C_i (infinite for zero cost).
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeTrace {
    pub stages: Vec<Stage>,
    /// C_Σ: cost of running every stage.
    pub total_stage_cost: f64,
    /// T = Σ_i n_i · C_i.
    pub total_cost: f64,
}

impl CascadeTrace {
    pub fn models(&self) -> Vec<GeneratedModel> {
        self.stages.iter().map(|s| s.model.clone()).collect()
    }

    pub fn stage_costs(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.cost).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GreedyOutcome {
    Cascade(CascadeTrace),
    /// No candidate was both useful and accurate while examples remained.
    Failure {
        partial: Vec<Stage>,
        remaining: Vec<usize>,
    },
}

impl GreedyOutcome {
    pub fn cascade(self) -> Option<CascadeTrace> {
        match self {
            GreedyOutcome::Cascade(t) => Some(t),
            GreedyOutcome::Failure { .. } => None,
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, GreedyOutcome::Failure { .. })
    }
}

/// A(m, R): the examples of `remaining` on which the model answers.
pub fn answered_set(
    model: &GeneratedModel,
    remaining: &[usize],
    log: &PredictionLog,
) -> Result<Vec<usize>> {
    let decisions = model.decisions(log)?;
    Ok(answered_from(&decisions, remaining))
}

pub(crate) fn answered_from(decisions: &[Option<Label>], remaining: &[usize]) -> Vec<usize> {
    remaining
        .iter()
        .copied()
        .filter(|&e| decisions[e].is_some())
        .collect()
}

struct Scored {
    index: usize,
    answered: Vec<usize>,
    cost: f64,
    identity: String,
}

/// Total selection order: higher |A|/c (zero cost beats any finite ratio),
/// then larger |A|, then lower cost, then smaller identity.
fn better(a: &Scored, b: &Scored) -> Ordering {
    let (na, nb) = (a.answered.len() as f64, b.answered.len() as f64);
    // na / ca vs nb / cb by cross-multiplication
    (na * b.cost)
        .total_cmp(&(nb * a.cost))
        .then(a.answered.len().cmp(&b.answered.len()))
        .then(b.cost.total_cmp(&a.cost))
        .then(b.identity.cmp(&a.identity))
}

fn ratio(answered: usize, cost: f64) -> f64 {
    if cost == 0.0 {
        f64::INFINITY
    } else {
        answered as f64 / cost
    }
}

/// Runs the greedy cascade algorithm on the examples `validation` of `log`.
pub fn greedy_cascade(
    validation: &[usize],
    constraint: &AccuracyConstraint,
    cf: &CostFunction,
    generator: &dyn ModelGenerator,
    log: &PredictionLog,
    options: GreedyOptions,
) -> Result<GreedyOutcome> {
    let ctx = GenContext {
        log,
        constraint,
        exec: options.exec,
    };
    let mut remaining: Vec<usize> = validation.to_vec();
    remaining.sort_unstable();
    remaining.dedup();

    let mut stages: Vec<Stage> = Vec::new();
    let mut prior: Vec<GeneratedModel> = Vec::new();
    let mut computed: BTreeSet<String> = BTreeSet::new();

    while !remaining.is_empty() {
        let candidates = generator.generate(&ctx, &remaining, &prior)?;
        let scored: Vec<Option<Scored>> = par::map_range(
            options.exec,
            candidates.len(),
            |i| -> Result<Option<Scored>> {
                let model = &candidates[i];
                let decisions = model.decisions(log)?;
                let answered = answered_from(&decisions, &remaining);
                if answered.is_empty() || !constraint.check(&decisions, &answered, log)? {
                    return Ok(None);
                }
                Ok(Some(Scored {
                    index: i,
                    answered,
                    cost: model.stage_cost(cf, &computed, options.ensemble_overhead)?,
                    identity: model.identity(),
                }))
            },
        )
        .into_iter()
        .collect::<Result<_>>()?;

        let Some(best) = scored.into_iter().flatten().max_by(better) else {
            return Ok(GreedyOutcome::Failure {
                partial: stages,
                remaining,
            });
        };

        let model = candidates[best.index].clone();
        let answered: BTreeSet<usize> = best.answered.iter().copied().collect();
        stages.push(Stage {
            remaining: remaining.len(),
            ratio: ratio(best.answered.len(), best.cost),
            cost: best.cost,
            answered: best.answered,
            model: model.clone(),
        });
        remaining.retain(|e| !answered.contains(e));
        computed.extend(model.computed_vertices());
        prior.push(model);
    }

    let total_stage_cost = stages.iter().map(|s| s.cost).sum();
    let total_cost = stages.iter().map(|s| s.remaining as f64 * s.cost).sum();
    Ok(GreedyOutcome::Cascade(CascadeTrace {
        stages,
        total_stage_cost,
        total_cost,
    }))
}

/// Stage costs c(m_i, m_{1:i-1}) of an arbitrary stage sequence.
pub fn stage_costs(
    stages: &[GeneratedModel],
    cf: &CostFunction,
    ensemble_overhead: f64,
) -> Result<Vec<f64>> {
    let mut computed = BTreeSet::new();
    let mut out = Vec::with_capacity(stages.len());
    for stage in stages {
        out.push(stage.stage_cost(cf, &computed, ensemble_overhead)?);
        computed.extend(stage.computed_vertices());
    }
    Ok(out)
}

/// τ(x, S): stage costs summed through the first stage that answers `example`
/// (all stages when none does).
pub fn per_example_cost(
    stages: &[GeneratedModel],
    example: usize,
    log: &PredictionLog,
    cf: &CostFunction,
    ensemble_overhead: f64,
) -> Result<f64> {
    let costs = stage_costs(stages, cf, ensemble_overhead)?;
    let mut tau = 0.0;
    for (stage, cost) in stages.iter().zip(costs) {
        tau += cost;
        if stage.decisions(log)?[example].is_some() {
            break;
        }
    }
    Ok(tau)
}

/// τ(x, S) for every example in `examples`, from per-stage decisions.
pub fn per_example_costs(
    stages: &[GeneratedModel],
    examples: &[usize],
    log: &PredictionLog,
    cf: &CostFunction,
    ensemble_overhead: f64,
) -> Result<Vec<f64>> {
    let costs = stage_costs(stages, cf, ensemble_overhead)?;
    let decisions: Vec<Vec<Option<Label>>> = stages
        .iter()
        .map(|s| s.decisions(log))
        .collect::<Result<_>>()?;
    Ok(examples
        .iter()
        .map(|&e| {
            let mut tau = 0.0;
            for (d, c) in decisions.iter().zip(&costs) {
                tau += c;
                if d[e].is_some() {
                    break;
                }
            }
            tau
        })
        .collect())
}

/// Prediction of the cascade on every example: the first answering stage's.
pub fn cascade_predictions(
    stages: &[GeneratedModel],
    log: &PredictionLog,
) -> Result<Vec<Option<Label>>> {
    let mut out = vec![None; log.len()];
    for stage in stages {
        for (slot, d) in out.iter_mut().zip(stage.decisions(log)?) {
            if slot.is_none() {
                *slot = d;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstain::{AbstainingModel, AccuracyModel};
    use crate::cascade::generator::FixedGenerator;
    use crate::data::{LabeledExample, ModelOutput};

    /// Builds a log where model `i` answers exactly `answers[i]` (feature
    /// "a" = 1) and predicts the label.
    fn table_log(n: usize, answers: &[&[usize]]) -> (PredictionLog, Vec<GeneratedModel>) {
        let examples = (0..n)
            .map(|i| LabeledExample {
                example_id: format!("e{}", i + 1),
                label: 0,
            })
            .collect();
        let ids: Vec<String> = (0..answers.len()).map(|i| format!("m{}", i + 1)).collect();
        let outputs = answers
            .iter()
            .map(|set| {
                (0..n)
                    .map(|e| ModelOutput {
                        prediction: 0,
                        scores: None,
                        features: [("a".to_string(), if set.contains(&e) { 1.0 } else { 0.0 })]
                            .into_iter()
                            .collect(),
                    })
                    .collect()
            })
            .collect();
        let log = PredictionLog::new(examples, ids.clone(), outputs).unwrap();
        let models = ids
            .into_iter()
            .map(|id| GeneratedModel::Pool(AbstainingModel::new(id, AccuracyModel::raw("a"), 0.5)))
            .collect();
        (log, models)
    }

    #[test]
    fn three_model_instance() {
        let (log, models) = table_log(4, &[&[0, 1], &[1, 2], &[0, 1, 2, 3]]);
        let cf = CostFunction::linear([("m1", 1.0), ("m2", 1.0), ("m3", 3.0)]).unwrap();
        let trace = greedy_cascade(
            &log.all_examples(),
            &AccuracyConstraint::AlwaysTrue,
            &cf,
            &FixedGenerator(models),
            &log,
            GreedyOptions::default(),
        )
        .unwrap()
        .cascade()
        .unwrap();
        let names: Vec<String> = trace
            .stages
            .iter()
            .map(|s| s.model.display_name())
            .collect();
        assert_eq!(names, ["m1", "m2", "m3"]);
        let n: Vec<usize> = trace.stages.iter().map(|s| s.remaining).collect();
        assert_eq!(n, [4, 2, 1]);
        assert_eq!(trace.stage_costs(), [1.0, 1.0, 3.0]);
        assert_eq!(trace.total_cost, 9.0);
        assert_eq!(trace.total_stage_cost, 5.0);

        let stages = trace.models();
        let taus = per_example_costs(&stages, &log.all_examples(), &log, &cf, 0.0).unwrap();
        assert_eq!(taus.iter().sum::<f64>(), 9.0);
        assert_eq!(per_example_cost(&stages, 0, &log, &cf, 0.0).unwrap(), 1.0);
        assert_eq!(per_example_cost(&stages, 2, &log, &cf, 0.0).unwrap(), 2.0);
        assert_eq!(per_example_cost(&stages, 3, &log, &cf, 0.0).unwrap(), 5.0);
    }

    #[test]
    fn abstain_everywhere_fails() {
        let (log, models) = table_log(3, &[&[], &[]]);
        let cf = CostFunction::linear([("m1", 1.0), ("m2", 1.0)]).unwrap();
        let out = greedy_cascade(
            &log.all_examples(),
            &AccuracyConstraint::AlwaysTrue,
            &cf,
            &FixedGenerator(models),
            &log,
            GreedyOptions::default(),
        )
        .unwrap();
        assert!(out.is_failure());
    }

    #[test]
    fn empty_validation_set_gives_empty_cascade() {
        let (log, models) = table_log(2, &[&[0, 1]]);
        let cf = CostFunction::linear([("m1", 1.0)]).unwrap();
        let trace = greedy_cascade(
            &[],
            &AccuracyConstraint::AlwaysTrue,
            &cf,
            &FixedGenerator(models),
            &log,
            GreedyOptions::default(),
        )
        .unwrap()
        .cascade()
        .unwrap();
        assert!(trace.stages.is_empty());
        assert_eq!(trace.total_cost, 0.0);
    }

    #[test]
    fn zero_cost_model_selected_first() {
        let (log, models) = table_log(4, &[&[0, 1, 2, 3], &[0]]);
        let cf = CostFunction::linear([("m1", 0.5), ("m2", 0.0)]).unwrap();
        let trace = greedy_cascade(
            &log.all_examples(),
            &AccuracyConstraint::AlwaysTrue,
            &cf,
            &FixedGenerator(models),
            &log,
            GreedyOptions::default(),
        )
        .unwrap()
        .cascade()
        .unwrap();
        assert_eq!(trace.stages[0].model.display_name(), "m2");
        assert!(trace.stages[0].ratio.is_infinite());
    }

    #[test]
    fn ties_prefer_larger_answered_set_then_identity() {
        // m1 answers 2 at cost 1, m2 answers 4 at cost 2: equal ratio
        let (log, models) = table_log(4, &[&[0, 1], &[0, 1, 2, 3], &[2, 3]]);
        let cf = CostFunction::linear([("m1", 1.0), ("m2", 2.0), ("m3", 1.0)]).unwrap();
        let trace = greedy_cascade(
            &log.all_examples(),
            &AccuracyConstraint::AlwaysTrue,
            &cf,
            &FixedGenerator(models.clone()),
            &log,
            GreedyOptions::default(),
        )
        .unwrap()
        .cascade()
        .unwrap();
        assert_eq!(trace.stages[0].model.display_name(), "m2");

        // identical candidates: lexicographic identity decides
        let (log, models) = table_log(2, &[&[0, 1], &[0, 1]]);
        let cf = CostFunction::linear([("m1", 1.0), ("m2", 1.0)]).unwrap();
        let trace = greedy_cascade(
            &log.all_examples(),
            &AccuracyConstraint::AlwaysTrue,
            &cf,
            &FixedGenerator(models),
            &log,
            GreedyOptions::default(),
        )
        .unwrap()
        .cascade()
        .unwrap();
        assert_eq!(trace.stages[0].model.display_name(), "m1");
    }

    #[test]
    fn answered_set_filters() {
        let (log, _) = table_log(3, &[&[0, 2]]);
        let never = GeneratedModel::Pool(AbstainingModel::new(
            "m1",
            AccuracyModel::raw("a"),
            f64::NEG_INFINITY,
        ));
        let always = GeneratedModel::Pool(AbstainingModel::new(
            "m1",
            AccuracyModel::raw("a"),
            f64::INFINITY,
        ));
        let half = GeneratedModel::Pool(AbstainingModel::new("m1", AccuracyModel::raw("a"), 0.5));
        assert_eq!(answered_set(&never, &[0, 1, 2], &log).unwrap(), [0, 1, 2]);
        assert!(answered_set(&always, &[0, 1, 2], &log).unwrap().is_empty());
        assert_eq!(answered_set(&half, &[1, 2], &log).unwrap(), [2]);
    }
}
