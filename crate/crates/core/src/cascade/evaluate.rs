use super::greedy::stage_costs;
use super::model::GeneratedModel;
use crate::cost::CostFunction;
use crate::data::{AccuracyMetric, Label, PredictionLog};
use crate::error::{Error, Result};

/// One row of the per-stage table.
#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    pub model: String,
    pub cost: f64,
    pub threshold: Option<f64>,
    /// Fraction of all evaluated examples answered by this stage.
    pub fraction_classified: f64,
    /// Mean metric on the examples this stage answered (`None` if it answered none).
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub examples: usize,
    /// Mean metric over all examples; unanswered examples score zero.
    pub accuracy: f64,
    /// Mean τ(x, S).
    pub mean_cost: f64,
    /// Fraction of examples no stage answered.
    pub unanswered: f64,
    pub stages: Vec<StageReport>,
}

/// Runs a cascade on every example of `log` and tabulates per-stage results.
pub fn evaluate_cascade(
    stages: &[GeneratedModel],
    log: &PredictionLog,
    metric: AccuracyMetric,
    cf: &CostFunction,
    ensemble_overhead: f64,
) -> Result<EvaluationReport> {
    for stage in stages {
        for id in stage.required_models() {
            if !log.has_model(&id) {
                return Err(Error::UnknownModel(id));
            }
        }
    }
    let costs = stage_costs(stages, cf, ensemble_overhead)?;
    let decisions: Vec<Vec<Option<Label>>> = stages
        .iter()
        .map(|s| s.decisions(log))
        .collect::<Result<_>>()?;

    let n = log.len();
    let mut answered = vec![0usize; stages.len()];
    let mut correct = vec![0.0; stages.len()];
    let mut total_metric = 0.0;
    let mut total_cost = 0.0;
    let mut unanswered = 0usize;
    for e in 0..n {
        let mut tau = 0.0;
        let mut hit = false;
        for (i, d) in decisions.iter().enumerate() {
            tau += costs[i];
            if let Some(p) = d[e] {
                let q = metric.value(p, log.label(e));
                answered[i] += 1;
                correct[i] += q;
                total_metric += q;
                hit = true;
                break;
            }
        }
        if !hit {
            unanswered += 1;
        }
        total_cost += tau;
    }

    let denom = n.max(1) as f64;
    Ok(EvaluationReport {
        examples: n,
        accuracy: total_metric / denom,
        mean_cost: total_cost / denom,
        unanswered: unanswered as f64 / denom,
        stages: stages
            .iter()
            .enumerate()
            .map(|(i, s)| StageReport {
                stage: i + 1,
                model: s.display_name(),
                cost: costs[i],
                threshold: s.threshold(),
                fraction_classified: answered[i] as f64 / denom,
                accuracy: (answered[i] > 0).then(|| correct[i] / answered[i] as f64),
            })
            .collect(),
    })
}
