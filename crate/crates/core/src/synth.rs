//! Seeded synthetic prediction logs.
//!
//! Each example has a latent difficulty d ∈ [0, 1). A model with competence
//! θ is correct iff d + jitter < θ, so cheaper (less competent) models are
//! correct on the easy examples; its logit gap grows with the margin θ − d.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{
    Label, LabeledExample, ManifestEntry, ModelManifest, ModelOutput, PredictionLog,
};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthModel {
    pub id: String,
    pub cost: f64,
    pub competence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub classes: usize,
    pub train_examples: usize,
    pub test_examples: usize,
    pub models: Vec<SynthModel>,
    /// Logit gap per unit of margin.
    pub gap_slope: f64,
    /// Standard deviation of the noise added to the gap.
    pub gap_noise: f64,
    /// Standard deviation of per-model difficulty jitter.
    pub difficulty_jitter: f64,
    /// Scores are rounded to this many decimals.
    pub decimals: i32,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub train: PredictionLog,
    pub test: PredictionLog,
    pub manifest: ModelManifest,
    /// Id of the most competent model.
    pub reference: String,
}

fn model(id: &str, cost: f64, competence: f64) -> SynthModel {
    SynthModel {
        id: id.into(),
        cost,
        competence,
    }
}

impl SynthConfig {
    /// Five models with nested competence and costs 1, 2, 4, 6, 10.
    pub fn nested_pool(seed: u64) -> Self {
        Self {
            seed,
            classes: 10,
            train_examples: 2000,
            test_examples: 2000,
            models: vec![
                model("m1", 1.0, 0.50),
                model("m2", 2.0, 0.62),
                model("m3", 4.0, 0.72),
                model("m4", 6.0, 0.80),
                model("m5", 10.0, 0.88),
            ],
            gap_slope: 12.0,
            gap_noise: 1.0,
            difficulty_jitter: 0.05,
            decimals: 6,
        }
    }

    /// Small three-model pool used for committed CLI fixtures.
    pub fn three_model_fixture(seed: u64) -> Self {
        Self {
            seed,
            classes: 3,
            train_examples: 40,
            test_examples: 40,
            models: vec![
                model("small", 1.0, 0.55),
                model("medium", 3.0, 0.75),
                model("large", 10.0, 0.9),
            ],
            gap_slope: 10.0,
            gap_noise: 1.0,
            difficulty_jitter: 0.05,
            decimals: 3,
        }
    }
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

fn split(cfg: &SynthConfig, rng: &mut ChaCha8Rng, n: usize, prefix: &str) -> Result<PredictionLog> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut examples = Vec::with_capacity(n);
    let mut outputs: Vec<Vec<ModelOutput>> = vec![Vec::with_capacity(n); cfg.models.len()];
    for i in 0..n {
        let label: Label = rng.gen_range(0..cfg.classes as Label);
        let difficulty: f64 = rng.gen();
        examples.push(LabeledExample {
            example_id: format!("{prefix}{i:04}"),
            label,
        });
        for (m, spec) in cfg.models.iter().enumerate() {
            let d = difficulty + cfg.difficulty_jitter * normal.sample(rng);
            let margin = spec.competence - d;
            let prediction = if margin > 0.0 {
                label
            } else {
                let wrong = rng.gen_range(0..cfg.classes as Label - 1);
                if wrong >= label {
                    wrong + 1
                } else {
                    wrong
                }
            };
            let mut scores: Vec<f64> = (0..cfg.classes)
                .map(|_| round_to(normal.sample(rng), cfg.decimals))
                .collect();
            let runner_up = scores
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != prediction as usize)
                .map(|(_, &s)| s)
                .fold(f64::NEG_INFINITY, f64::max);
            let z = cfg.gap_slope * margin + cfg.gap_noise * normal.sample(rng);
            // softplus keeps the gap positive; at least one rounding unit survives
            let unit = 10f64.powi(-cfg.decimals);
            let gap = (z.max(0.0) + (-z.abs()).exp().ln_1p()).max(unit);
            let mut top = round_to(runner_up + gap, cfg.decimals);
            if top <= runner_up {
                top = round_to(runner_up + unit, cfg.decimals);
            }
            scores[prediction as usize] = top;
            outputs[m].push(ModelOutput {
                prediction,
                scores: Some(scores),
                features: Default::default(),
            });
        }
    }
    let mut order: Vec<usize> = (0..cfg.models.len()).collect();
    order.sort_by(|&a, &b| cfg.models[a].id.cmp(&cfg.models[b].id));
    let ids = order.iter().map(|&m| cfg.models[m].id.clone()).collect();
    let mut taken: Vec<Option<Vec<ModelOutput>>> = outputs.into_iter().map(Some).collect();
    let columns = order
        .iter()
        .map(|&m| taken[m].take().expect("each column once"))
        .collect();
    PredictionLog::new(examples, ids, columns)
}

/// Train and test logs plus a linear-cost manifest, deterministic in the seed.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = split(cfg, &mut rng, cfg.train_examples, "x")?;
    let test = split(cfg, &mut rng, cfg.test_examples, "t")?;
    let manifest = ModelManifest::new(
        cfg.models
            .iter()
            .map(|m| ManifestEntry {
                id: m.id.clone(),
                cost: m.cost,
            })
            .collect(),
        Vec::new(),
    )?;
    let reference = cfg
        .models
        .iter()
        .max_by(|a, b| a.competence.total_cmp(&b.competence))
        .map(|m| m.id.clone())
        .unwrap_or_default();
    Ok(SynthData {
        train,
        test,
        manifest,
        reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AccuracyMetric;

    #[test]
    fn deterministic_in_seed() {
        let cfg = SynthConfig::three_model_fixture(11);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.train.to_jsonl(), b.train.to_jsonl());
        assert_eq!(a.test.to_jsonl(), b.test.to_jsonl());
        let c = generate(&SynthConfig::three_model_fixture(12)).unwrap();
        assert_ne!(a.train.to_jsonl(), c.train.to_jsonl());
    }

    #[test]
    fn competence_orders_accuracy() {
        let data = generate(&SynthConfig::nested_pool(3)).unwrap();
        let acc: Vec<f64> = ["m1", "m2", "m3", "m4", "m5"]
            .iter()
            .map(|id| {
                data.train
                    .model_accuracy(data.train.model_index(id).unwrap(), AccuracyMetric::Top1)
            })
            .collect();
        assert!(acc.windows(2).all(|w| w[0] < w[1]), "{acc:?}");
        assert_eq!(data.reference, "m5");
        assert!((acc[4] - 0.88).abs() < 0.03);
    }

    #[test]
    fn round_trips_through_jsonl() {
        let data = generate(&SynthConfig::three_model_fixture(5)).unwrap();
        let text = data.train.to_jsonl();
        assert_eq!(
            PredictionLog::from_jsonl_str(&text).unwrap().to_jsonl(),
            text
        );
    }
}
