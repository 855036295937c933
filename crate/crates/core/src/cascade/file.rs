//! Cascade JSON: the stages, the constraint they were built under, and the
//! build-set statistics.

use serde::{Deserialize, Serialize};

use super::constraint::AccuracyConstraint;
use super::greedy::CascadeTrace;
use super::model::{EnsembleModel, GeneratedModel};
use crate::abstain::{extended_real, AbstainingModel, AccuracyModel};
use crate::cost::{composite_id, CompositeModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExtendedReal(#[serde(with = "extended_real")] pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub components: Vec<String>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composite_chain: Option<Vec<String>>,
    /// Per-member wrappers of a composite stage, in chain order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composite_members: Option<Vec<AbstainingModel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy_model: Option<AccuracyModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ExtendedReal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub kind: String,
    #[serde(default)]
    pub ensemble_overhead: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: usize,
    pub model: String,
    /// n_i
    pub remaining: usize,
    /// |A_i|
    pub answered: usize,
    /// C_i
    pub cost: f64,
    pub ratio: ExtendedReal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ExtendedReal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    #[serde(rename = "T")]
    pub total_cost: f64,
    pub total_stage_cost: f64,
    pub build_examples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_log_sha256: Option<String>,
    pub stage_table: Vec<StageRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeFile {
    pub stages: Vec<StageSpec>,
    pub constraint: AccuracyConstraint,
    pub cost: CostSpec,
    pub build_stats: BuildStats,
}

impl StageSpec {
    pub fn from_model(model: &GeneratedModel) -> Self {
        match model {
            GeneratedModel::Pool(m) => StageSpec {
                model_id: m.model_id.clone(),
                composite_chain: None,
                composite_members: None,
                ensemble: None,
                accuracy_model: Some(m.accuracy_model.clone()),
                threshold: Some(ExtendedReal(m.threshold)),
            },
            GeneratedModel::Ensemble(m) => StageSpec {
                model_id: m.components.last().cloned().unwrap_or_default(),
                composite_chain: None,
                composite_members: None,
                ensemble: Some(EnsembleSpec {
                    components: m.components.clone(),
                    beta: m.beta.clone(),
                }),
                accuracy_model: Some(m.accuracy_model.clone()),
                threshold: Some(ExtendedReal(m.threshold)),
            },
            GeneratedModel::Composite(m) => StageSpec {
                model_id: m.id.clone(),
                composite_chain: Some(m.chain()),
                composite_members: Some(m.members.clone()),
                ensemble: None,
                accuracy_model: None,
                threshold: None,
            },
        }
    }

    pub fn to_model(&self) -> Result<GeneratedModel> {
        let invalid = |what: &str| Error::Config(format!("stage {:?}: {what}", self.model_id));
        if let Some(members) = &self.composite_members {
            let chain: Vec<String> = members.iter().map(|m| m.model_id.clone()).collect();
            if let Some(listed) = &self.composite_chain {
                if *listed != chain {
                    return Err(invalid("composite_chain disagrees with composite_members"));
                }
            }
            return Ok(GeneratedModel::Composite(CompositeModel {
                id: composite_id(&chain),
                members: members.clone(),
            }));
        }
        let accuracy_model = self
            .accuracy_model
            .clone()
            .ok_or_else(|| invalid("missing accuracy_model"))?;
        let threshold = self
            .threshold
            .ok_or_else(|| invalid("missing threshold"))?
            .0;
        Ok(match &self.ensemble {
            Some(spec) => {
                if spec.components.len() != spec.beta.len() || spec.components.is_empty() {
                    return Err(invalid("ensemble components and beta differ in length"));
                }
                GeneratedModel::Ensemble(EnsembleModel {
                    components: spec.components.clone(),
                    beta: spec.beta.clone(),
                    accuracy_model,
                    threshold,
                })
            }
            None => GeneratedModel::Pool(AbstainingModel::new(
                self.model_id.clone(),
                accuracy_model,
                threshold,
            )),
        })
    }
}

impl CascadeFile {
    pub fn from_trace(
        trace: &CascadeTrace,
        constraint: &AccuracyConstraint,
        cost: CostSpec,
        build_examples: usize,
    ) -> Self {
        CascadeFile {
            stages: trace
                .stages
                .iter()
                .map(|s| StageSpec::from_model(&s.model))
                .collect(),
            constraint: constraint.clone(),
            cost,
            build_stats: BuildStats {
                total_cost: trace.total_cost,
                total_stage_cost: trace.total_stage_cost,
                build_examples,
                train_log_sha256: None,
                stage_table: trace
                    .stages
                    .iter()
                    .enumerate()
                    .map(|(i, s)| StageRow {
                        stage: i + 1,
                        model: s.model.display_name(),
                        remaining: s.remaining,
                        answered: s.answered.len(),
                        cost: s.cost,
                        ratio: ExtendedReal(s.ratio),
                        threshold: s.model.threshold().map(ExtendedReal),
                    })
                    .collect(),
            },
        }
    }

    pub fn models(&self) -> Result<Vec<GeneratedModel>> {
        self.stages.iter().map(StageSpec::to_model).collect()
    }

    /// Chains of composite stages; their vertices must be registered in the
    /// cost function before the cascade is costed.
    pub fn composite_chains(&self) -> Vec<Vec<String>> {
        self.stages
            .iter()
            .filter_map(|s| s.composite_members.as_ref())
            .map(|m| m.iter().map(|a| a.model_id.clone()).collect())
            .collect()
    }

    pub fn to_json_string(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("cascade files always serialize");
        text.push('\n');
        text
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
