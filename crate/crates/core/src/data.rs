//! Logged predictions of a model pool, model manifests and accuracy metrics.
//!
//! A [`PredictionLog`] is the in-memory form of the long-format JSON-lines
//! file: one record per example, each record carrying the output of every
//! model in the pool. Loading validates that the table is total.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer class index.
pub type Label = u32;

/// Vertex name used for the source vertex in manifest files.
pub const SOURCE_NAME: &str = "∅";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub example_id: String,
    pub label: Label,
}

/// One model's logged output on one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub prediction: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    /// Precomputed confidence features, for models that do not log scores.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub features: BTreeMap<String, f64>,
}

impl ModelOutput {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let prediction = argmax(&scores).unwrap_or(0) as Label;
        Self {
            prediction,
            scores: Some(scores),
            features: BTreeMap::new(),
        }
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogFormat {
    #[default]
    JsonLines,
}

#[derive(Serialize, Deserialize)]
struct LogRecord {
    example_id: String,
    label: Label,
    models: BTreeMap<String, ModelOutput>,
}

/// Outputs of every pool model on every validation example.
///
/// Examples and models are addressed by dense indices; `outputs[m][e]` is the
/// output of model `m` on example `e`. Model ids are kept in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLog {
    examples: Vec<LabeledExample>,
    model_ids: Vec<String>,
    outputs: Vec<Vec<ModelOutput>>,
    example_index: HashMap<String, usize>,
    model_index: HashMap<String, usize>,
}

impl PredictionLog {
    /// Builds a log from model-major outputs, validating every invariant.
    pub fn new(
        examples: Vec<LabeledExample>,
        model_ids: Vec<String>,
        outputs: Vec<Vec<ModelOutput>>,
    ) -> Result<Self> {
        let mut example_index = HashMap::with_capacity(examples.len());
        for (i, ex) in examples.iter().enumerate() {
            if example_index.insert(ex.example_id.clone(), i).is_some() {
                return Err(Error::DuplicateExample(ex.example_id.clone()));
            }
        }
        let mut model_index = HashMap::with_capacity(model_ids.len());
        for (i, id) in model_ids.iter().enumerate() {
            if model_index.insert(id.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate model id {id:?}")));
            }
        }
        if outputs.len() != model_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: model_ids.len(),
                found: outputs.len(),
            });
        }
        for (m, column) in outputs.iter().enumerate() {
            if column.len() != examples.len() {
                let missing = examples
                    .get(column.len())
                    .map(|e| e.example_id.clone())
                    .unwrap_or_default();
                return Err(Error::MissingOutput {
                    example_id: missing,
                    model_id: model_ids[m].clone(),
                });
            }
            let mut width: Option<usize> = None;
            for (e, out) in column.iter().enumerate() {
                let Some(scores) = &out.scores else { continue };
                match width {
                    None => width = Some(scores.len()),
                    Some(w) if w != scores.len() => {
                        return Err(Error::ScoreLength {
                            model_id: model_ids[m].clone(),
                            example_id: examples[e].example_id.clone(),
                            expected: w,
                            found: scores.len(),
                        })
                    }
                    Some(_) => {}
                }
                if argmax(scores) != Some(out.prediction as usize) {
                    return Err(Error::PredictionMismatch {
                        model_id: model_ids[m].clone(),
                        example_id: examples[e].example_id.clone(),
                        prediction: out.prediction,
                    });
                }
            }
        }
        Ok(Self {
            examples,
            model_ids,
            outputs,
            example_index,
            model_index,
        })
    }

    pub fn load(path: impl AsRef<Path>, format: LogFormat) -> Result<Self> {
        match format {
            LogFormat::JsonLines => {
                let file = fs::File::open(path)?;
                Self::read_jsonl(BufReader::new(file))
            }
        }
    }

    pub fn from_jsonl_str(text: &str) -> Result<Self> {
        Self::read_jsonl(text.as_bytes())
    }

    fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut records: Vec<(usize, LogRecord)> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: LogRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push((i + 1, record));
        }

        let model_ids: Vec<String> = records
            .iter()
            .flat_map(|(_, r)| r.models.keys().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut examples = Vec::with_capacity(records.len());
        let mut outputs: Vec<Vec<ModelOutput>> =
            vec![Vec::with_capacity(records.len()); model_ids.len()];
        let mut seen = BTreeSet::new();
        for (_, mut record) in records {
            if !seen.insert(record.example_id.clone()) {
                return Err(Error::DuplicateExample(record.example_id));
            }
            for (m, id) in model_ids.iter().enumerate() {
                let out = record
                    .models
                    .remove(id)
                    .ok_or_else(|| Error::MissingOutput {
                        example_id: record.example_id.clone(),
                        model_id: id.clone(),
                    })?;
                outputs[m].push(out);
            }
            examples.push(LabeledExample {
                example_id: record.example_id,
                label: record.label,
            });
        }
        Self::new(examples, model_ids, outputs)
    }

    /// Serializes to the JSON-lines format accepted by [`PredictionLog::load`].
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (e, ex) in self.examples.iter().enumerate() {
            let record = LogRecord {
                example_id: ex.example_id.clone(),
                label: ex.label,
                models: self
                    .model_ids
                    .iter()
                    .enumerate()
                    .map(|(m, id)| (id.clone(), self.outputs[m][e].clone()))
                    .collect(),
            };
            out.push_str(&serde_json::to_string(&record).expect("log records always serialize"));
            out.push('\n');
        }
        out
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn label(&self, example: usize) -> Label {
        self.examples[example].label
    }

    pub fn example_id(&self, example: usize) -> &str {
        &self.examples[example].example_id
    }

    pub fn example_index(&self, example_id: &str) -> Result<usize> {
        self.example_index
            .get(example_id)
            .copied()
            .ok_or_else(|| Error::UnknownExample(example_id.to_string()))
    }

    pub fn model_index(&self, model_id: &str) -> Result<usize> {
        self.model_index
            .get(model_id)
            .copied()
            .ok_or_else(|| Error::UnknownModel(model_id.to_string()))
    }

    pub fn has_model(&self, model_id: &str) -> bool {
        self.model_index.contains_key(model_id)
    }

    pub fn output(&self, model: usize, example: usize) -> &ModelOutput {
        &self.outputs[model][example]
    }

    pub fn outputs_of(&self, model: usize) -> &[ModelOutput] {
        &self.outputs[model]
    }

    /// All example indices, in file order.
    pub fn all_examples(&self) -> Vec<usize> {
        (0..self.examples.len()).collect()
    }

    /// Mean metric value of a pool model over the whole log.
    pub fn model_accuracy(&self, model: usize, metric: AccuracyMetric) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let total: f64 = (0..self.len())
            .map(|e| metric.value(self.outputs[model][e].prediction, self.label(e)))
            .sum();
        total / self.len() as f64
    }
}

/// Accuracy metric q(prediction, label).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccuracyMetric {
    #[default]
    Top1,
}

impl AccuracyMetric {
    pub fn value(self, prediction: Label, label: Label) -> f64 {
        match self {
            AccuracyMetric::Top1 => {
                if prediction == label {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for AccuracyMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "top1" | "top-1" => Ok(AccuracyMetric::Top1),
            other => Err(Error::Config(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub cost: f64,
}

/// Reuse edge; `from == None` is the source vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ReuseEdge {
    pub from: Option<String>,
    pub to: String,
    pub weight: f64,
}

#[derive(Serialize, Deserialize)]
struct RawEdge {
    from: String,
    to: String,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct RawManifest {
    models: Vec<ManifestEntry>,
    #[serde(default)]
    reuse_edges: Vec<RawEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    units: Option<String>,
}

/// Per-model from-scratch costs plus optional reuse edges.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelManifest {
    pub entries: Vec<ManifestEntry>,
    pub reuse_edges: Vec<ReuseEdge>,
    /// Free-form cost unit, e.g. "multiplications" or "bits". Reporting only.
    pub units: Option<String>,
}

impl ModelManifest {
    pub fn new(entries: Vec<ManifestEntry>, reuse_edges: Vec<ReuseEdge>) -> Result<Self> {
        let manifest = Self {
            entries,
            reuse_edges,
            units: None,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawManifest = serde_json::from_str(text)?;
        let reuse_edges = raw
            .reuse_edges
            .into_iter()
            .map(|e| ReuseEdge {
                from: (e.from != SOURCE_NAME).then_some(e.from),
                to: e.to,
                weight: e.weight,
            })
            .collect();
        let manifest = Self {
            entries: raw.models,
            reuse_edges,
            units: raw.units,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawManifest {
            models: self.entries.clone(),
            reuse_edges: self
                .reuse_edges
                .iter()
                .map(|e| RawEdge {
                    from: e.from.clone().unwrap_or_else(|| SOURCE_NAME.to_string()),
                    to: e.to.clone(),
                    weight: e.weight,
                })
                .collect(),
            units: self.units.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("manifest always serializes")
    }

    fn validate(&self) -> Result<()> {
        let mut costs = HashMap::new();
        for entry in &self.entries {
            if !(entry.cost.is_finite() && entry.cost >= 0.0) {
                return Err(Error::Manifest(format!(
                    "model {:?} has invalid cost {}",
                    entry.id, entry.cost
                )));
            }
            if costs.insert(entry.id.as_str(), entry.cost).is_some() {
                return Err(Error::Manifest(format!("duplicate model {:?}", entry.id)));
            }
        }
        for edge in &self.reuse_edges {
            if !(edge.weight.is_finite() && edge.weight >= 0.0) {
                return Err(Error::Manifest(format!(
                    "edge to {:?} has invalid weight {}",
                    edge.to, edge.weight
                )));
            }
            let Some(&to_cost) = costs.get(edge.to.as_str()) else {
                return Err(Error::Manifest(format!(
                    "edge target {:?} is not a listed model",
                    edge.to
                )));
            };
            match &edge.from {
                Some(from) if !costs.contains_key(from.as_str()) => {
                    return Err(Error::Manifest(format!(
                        "edge source {from:?} is not a listed model"
                    )));
                }
                None if edge.weight != to_cost => {
                    return Err(Error::Manifest(format!(
                        "source edge to {:?} has weight {} but the model cost is {}",
                        edge.to, edge.weight, to_cost
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn cost_of(&self, model_id: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.id == model_id)
            .map(|e| e.cost)
    }

    pub fn contains(&self, model_id: &str) -> bool {
        self.entries.iter().any(|e| e.id == model_id)
    }
}
