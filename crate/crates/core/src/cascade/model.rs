use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::abstain::{extended_real, softmax, AbstainingModel, AccuracyModel, CellFeatures};
use crate::cost::{CompositeModel, CostFunction};
use crate::data::{argmax, Label, ModelOutput, PredictionLog};
use crate::error::{Error, Result};

/// Floor applied to ensemble probabilities before taking logs.
const PROB_FLOOR: f64 = 1e-12;

/// Weighted average of component softmax outputs, wrapped as an abstaining model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub components: Vec<String>,
    pub beta: Vec<f64>,
    pub accuracy_model: AccuracyModel,
    #[serde(with = "extended_real")]
    pub threshold: f64,
}

impl EnsembleModel {
    /// Combined output per example. Scores are log-probabilities of the
    /// β-weighted mixture, so softmax recovers the normalized mixture.
    pub fn outputs(
        components: &[String],
        beta: &[f64],
        log: &PredictionLog,
    ) -> Result<Vec<ModelOutput>> {
        let indices: Vec<usize> = components
            .iter()
            .map(|id| log.model_index(id))
            .collect::<Result<_>>()?;
        let probs: Vec<Vec<Vec<f64>>> = indices
            .iter()
            .zip(components)
            .map(|(&m, id)| {
                log.outputs_of(m)
                    .iter()
                    .map(|o| {
                        o.scores
                            .as_deref()
                            .map(softmax)
                            .ok_or_else(|| Error::MissingScores(id.clone()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok((0..log.len())
            .map(|e| {
                let width = probs[0][e].len();
                let mut mix = vec![0.0; width];
                for (p, &b) in probs.iter().zip(beta) {
                    for (slot, &v) in mix.iter_mut().zip(&p[e]) {
                        *slot += b * v;
                    }
                }
                let prediction = argmax(&mix).unwrap_or(0) as Label;
                let scores: Vec<f64> = mix.iter().map(|&v| v.max(PROB_FLOOR).ln()).collect();
                ModelOutput {
                    prediction,
                    scores: Some(scores),
                    features: Default::default(),
                }
            })
            .collect())
    }

    pub fn confidences(&self, log: &PredictionLog) -> Result<Vec<(Label, f64)>> {
        Self::outputs(&self.components, &self.beta, log)?
            .iter()
            .map(|o| {
                let q = self.accuracy_model.predict(&CellFeatures::new(o))?;
                Ok((o.prediction, q))
            })
            .collect()
    }
}

/// Candidate stage produced by a model generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provenance", rename_all = "snake_case")]
pub enum GeneratedModel {
    Pool(AbstainingModel),
    Ensemble(EnsembleModel),
    Composite(CompositeModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Pool,
    Ensemble,
    Composite,
}

impl GeneratedModel {
    pub fn provenance(&self) -> Provenance {
        match self {
            GeneratedModel::Pool(_) => Provenance::Pool,
            GeneratedModel::Ensemble(_) => Provenance::Ensemble,
            GeneratedModel::Composite(_) => Provenance::Composite,
        }
    }

    /// Identity string used as the final tie-breaker in greedy selection.
    pub fn identity(&self) -> String {
        match self {
            GeneratedModel::Pool(m) => format!("pool:{}:{}", m.model_id, m.accuracy_model.tag()),
            GeneratedModel::Ensemble(m) => {
                format!(
                    "ensemble:{}:{}",
                    m.components.join("+"),
                    m.accuracy_model.tag()
                )
            }
            GeneratedModel::Composite(m) => m.id.clone(),
        }
    }

    /// Name reported in stage tables.
    pub fn display_name(&self) -> String {
        match self {
            GeneratedModel::Pool(m) => m.model_id.clone(),
            GeneratedModel::Ensemble(m) => m.components.join("+"),
            GeneratedModel::Composite(m) => m.id.clone(),
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        match self {
            GeneratedModel::Pool(m) => Some(m.threshold),
            GeneratedModel::Ensemble(m) => Some(m.threshold),
            GeneratedModel::Composite(_) => None,
        }
    }

    /// Prediction or abstention on every example of the log.
    pub fn decisions(&self, log: &PredictionLog) -> Result<Vec<Option<Label>>> {
        match self {
            GeneratedModel::Pool(m) => m.decisions(log),
            GeneratedModel::Ensemble(m) => Ok(m
                .confidences(log)?
                .into_iter()
                .map(|(p, q)| (q >= m.threshold).then_some(p))
                .collect()),
            GeneratedModel::Composite(m) => m.decisions(log),
        }
    }

    /// Cost-graph vertices whose outputs are available after this stage runs.
    pub fn computed_vertices(&self) -> Vec<String> {
        match self {
            GeneratedModel::Pool(m) => vec![m.model_id.clone()],
            GeneratedModel::Ensemble(m) => m.components.clone(),
            GeneratedModel::Composite(m) => vec![m.id.clone()],
        }
    }

    /// Pool models whose logged outputs this stage reads.
    pub fn required_models(&self) -> Vec<String> {
        match self {
            GeneratedModel::Pool(m) => vec![m.model_id.clone()],
            GeneratedModel::Ensemble(m) => m.components.clone(),
            GeneratedModel::Composite(m) => m.chain(),
        }
    }

    /// Pool models backing this stage's prediction, used as ensemble components
    /// in later stages.
    pub fn base_models(&self) -> Vec<String> {
        match self {
            GeneratedModel::Pool(m) => vec![m.model_id.clone()],
            GeneratedModel::Ensemble(m) => m.components.last().cloned().into_iter().collect(),
            GeneratedModel::Composite(m) => m.chain(),
        }
    }

    /// c(m, prior): marginal cost given the vertices already computed.
    ///
    /// An ensemble pays for each component not yet computed plus
    /// `ensemble_overhead` per component.
    pub fn stage_cost(
        &self,
        cf: &CostFunction,
        computed: &BTreeSet<String>,
        ensemble_overhead: f64,
    ) -> Result<f64> {
        match self {
            GeneratedModel::Pool(m) => cf.cost(&m.model_id, computed.iter().map(String::as_str)),
            GeneratedModel::Composite(m) => cf.cost(&m.id, computed.iter().map(String::as_str)),
            GeneratedModel::Ensemble(m) => {
                let mut have = computed.clone();
                let mut total = ensemble_overhead * m.components.len() as f64;
                for id in &m.components {
                    if !have.contains(id) {
                        total += cf.cost(id, have.iter().map(String::as_str))?;
                        have.insert(id.clone());
                    }
                }
                Ok(total)
            }
        }
    }
}
