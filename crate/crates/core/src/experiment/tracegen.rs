//! Synthetic traces of heterogeneous inference backends.
//!
//! Two modes are available. `linear` draws contexts uniformly from the unit
//! box and makes every backend's expected reward and costs affine in the
//! context, so per-backend linear heads realize them exactly. `heterogeneous`
//! mixes task families with heavy-tailed difficulty and backend profiles
//! ranging from a cheap, fast, weak local model to slow, expensive, strong
//! cloud models, with rewards on the discrete `1..=5` scale.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::costs::{cloud_cost, local_cost, local_latency, CloudRates};
use super::rewards::{exact_match_reward, rouge_to_reward};
use crate::embed::PoolingConfig;
use crate::trace::{TaskRecord, Trace, TraceError};
use crate::types::{CostVector, Matrix, Outcome, TaskContext};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    #[default]
    Linear,
    Heterogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    Rouge,
    ExactMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFamily {
    pub name: String,
    pub scoring: Scoring,
    /// How much difficulty erodes answer quality.
    pub hardness: f64,
    pub input_tokens: f64,
    pub output_tokens: f64,
    pub images: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BackendKind {
    /// On-device model; money is the energy bill.
    Local { throughput: f64 },
    /// Hosted model billed per token and image.
    Cloud {
        round_trip: f64,
        prefill_rate: f64,
        decode_rate: f64,
        rates: CloudRates,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendProfile {
    pub label: String,
    pub kind: BackendKind,
    /// Answer quality on an effortless task, one entry per family.
    pub skill: Vec<f64>,
    /// Output-length multiplier.
    pub verbosity: f64,
}

fn default_actions() -> usize {
    5
}
fn default_context_dim() -> usize {
    6
}
fn default_noise() -> f64 {
    0.1
}
fn default_num_families() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    #[serde(default)]
    pub mode: TraceMode,
    pub num_tasks: usize,
    #[serde(default = "default_actions")]
    pub num_actions: usize,
    /// Context dimension in linear mode.
    #[serde(default = "default_context_dim")]
    pub context_dim: usize,
    #[serde(default = "default_num_families")]
    pub num_families: usize,
    /// Standard deviation of reward noise (linear mode) and relative
    /// standard deviation of cost noise.
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Seed of the backend parameters; rows use the generation seed.
    #[serde(default)]
    pub structure_seed: u64,
    /// Emit per-token hidden states and CLS attention instead of an
    /// embedding (heterogeneous mode).
    #[serde(default)]
    pub modalities: bool,
    /// `(target, source)`: make backend `target` an exact copy of `source`.
    #[serde(default)]
    pub clone_backend: Option<(usize, usize)>,
    /// Custom backend profiles for heterogeneous mode.
    #[serde(default)]
    pub backends: Option<Vec<BackendProfile>>,
    #[serde(default)]
    pub families: Option<Vec<TaskFamily>>,
}

impl GeneratorSpec {
    pub fn linear(num_tasks: usize) -> Self {
        Self {
            mode: TraceMode::Linear,
            num_tasks,
            num_actions: default_actions(),
            context_dim: default_context_dim(),
            num_families: default_num_families(),
            noise: default_noise(),
            structure_seed: 0,
            modalities: false,
            clone_backend: None,
            backends: None,
            families: None,
        }
    }

    pub fn heterogeneous(num_tasks: usize) -> Self {
        Self {
            mode: TraceMode::Heterogeneous,
            ..Self::linear(num_tasks)
        }
    }

    fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: &str| Err(GeneratorError::InvalidSpec(m.to_string()));
        if self.num_tasks == 0 {
            return bad("num_tasks must be positive");
        }
        if self.num_actions < 2 {
            return bad("at least two backends are required");
        }
        if self.num_families < 2 {
            return bad("at least two task families are required");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be nonnegative");
        }
        if self.mode == TraceMode::Linear && self.context_dim == 0 {
            return bad("context_dim must be positive");
        }
        if let Some((t, s)) = self.clone_backend {
            if t >= self.num_actions || s >= self.num_actions {
                return bad("clone_backend index out of range");
            }
        }
        Ok(())
    }
}

/// Generates a trace deterministically from `(spec, seed)`.
pub fn generate_synthetic_trace(spec: &GeneratorSpec, seed: u64) -> Result<Trace, GeneratorError> {
    spec.validate()?;
    let mut tasks = match spec.mode {
        TraceMode::Linear => linear_tasks(spec, seed),
        TraceMode::Heterogeneous => heterogeneous_tasks(spec, seed)?,
    };
    if let Some((target, source)) = spec.clone_backend {
        for task in &mut tasks {
            task.outcomes[target] = task.outcomes[source].clone();
            if let Some(e) = task.expected.as_mut() {
                e[target] = e[source].clone();
            }
        }
    }
    Ok(Trace::new(tasks, PoolingConfig::default())?)
}

/// Affine per-backend model `mean = base + ⟨w, x − ½⟩`.
struct LinearBackend {
    reward_base: f64,
    reward_w: Vec<f64>,
    cost_base: [f64; 2],
    cost_w: [Vec<f64>; 2],
}

fn linear_backends(spec: &GeneratorSpec) -> Vec<LinearBackend> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.structure_seed);
    rng.set_stream(7);
    let a = spec.num_actions;
    let d = spec.context_dim;
    let reward_scale = 1.2;
    // Keeps cost swings within 60% of the base, so means stay positive.
    let cost_scale = 1.2 / d as f64;
    (0..a)
        .map(|k| {
            let q = k as f64 / (a - 1) as f64;
            let reward_base = 1.5 + 3.0 * q;
            let latency = 0.5 + 2.0 * q + rng.random_range(-0.2..0.2);
            let money = 0.5 + 2.0 * q * q + rng.random_range(-0.3..0.3);
            let mut w = || {
                (0..d)
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect::<Vec<f64>>()
            };
            let reward_w = w().into_iter().map(|v| v * reward_scale).collect();
            let (latency, money) = (latency.max(0.3), money.max(0.3));
            let lw = w().into_iter().map(|v| v * cost_scale * latency).collect();
            let mw = w().into_iter().map(|v| v * cost_scale * money).collect();
            LinearBackend {
                reward_base,
                reward_w,
                cost_base: [latency, money],
                cost_w: [lw, mw],
            }
        })
        .collect()
}

fn linear_tasks(spec: &GeneratorSpec, seed: u64) -> Vec<TaskRecord> {
    let backends = linear_backends(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let d = spec.context_dim;
    let f = spec.num_families;
    (0..spec.num_tasks)
        .map(|t| {
            let family = rng.random_range(0..f);
            let mut x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            // Families occupy evenly spaced levels of the first coordinate.
            x[0] = (family as f64 + rng.random::<f64>()) / f as f64;
            let centered: Vec<f64> = x.iter().map(|v| v - 0.5).collect();
            let affine = |base: f64, w: &[f64]| {
                base + w.iter().zip(&centered).map(|(a, b)| a * b).sum::<f64>()
            };
            let mut outcomes = Vec::with_capacity(backends.len());
            let mut expected = Vec::with_capacity(backends.len());
            for b in &backends {
                let r = affine(b.reward_base, &b.reward_w);
                let costs: Vec<f64> = (0..2)
                    .map(|c| affine(b.cost_base[c], &b.cost_w[c]))
                    .collect();
                let r_obs = r + spec.noise * noise.sample(&mut rng);
                let c_obs: Vec<f64> = costs
                    .iter()
                    .map(|m| m * (1.0 + spec.noise * noise.sample(&mut rng)))
                    .collect();
                outcomes.push(Outcome {
                    reward: r_obs,
                    cost: CostVector::clamped(c_obs),
                });
                expected.push(Outcome {
                    reward: r,
                    cost: CostVector::clamped(costs),
                });
            }
            TaskRecord {
                context: TaskContext::from_embedding(t, x),
                outcomes,
                expected: Some(expected),
            }
        })
        .collect()
}

pub fn default_families() -> Vec<TaskFamily> {
    vec![
        TaskFamily {
            name: "vqa".into(),
            scoring: Scoring::Rouge,
            hardness: 0.9,
            input_tokens: 900.0,
            output_tokens: 60.0,
            images: 1.0,
        },
        TaskFamily {
            name: "math".into(),
            scoring: Scoring::ExactMatch,
            hardness: 1.0,
            input_tokens: 250.0,
            output_tokens: 220.0,
            images: 0.0,
        },
        TaskFamily {
            name: "dialogue".into(),
            scoring: Scoring::Rouge,
            hardness: 0.7,
            input_tokens: 1400.0,
            output_tokens: 80.0,
            images: 0.0,
        },
    ]
}

pub fn default_backends() -> Vec<BackendProfile> {
    let cloud = |label: &str,
                 rtt: f64,
                 decode: f64,
                 input: f64,
                 output: f64,
                 image: f64,
                 skill: [f64; 3],
                 verbosity: f64| {
        BackendProfile {
            label: label.into(),
            kind: BackendKind::Cloud {
                round_trip: rtt,
                prefill_rate: 4000.0,
                decode_rate: decode,
                rates: CloudRates {
                    input,
                    output,
                    image,
                },
            },
            skill: skill.to_vec(),
            verbosity,
        }
    };
    vec![
        BackendProfile {
            label: "local-small".into(),
            kind: BackendKind::Local { throughput: 2500.0 },
            skill: vec![0.45, 0.30, 0.50],
            verbosity: 0.8,
        },
        BackendProfile {
            label: "local-large".into(),
            kind: BackendKind::Local { throughput: 900.0 },
            skill: vec![0.60, 0.50, 0.60],
            verbosity: 1.0,
        },
        cloud(
            "cloud-nano",
            0.8,
            150.0,
            5e-8,
            4e-7,
            2e-5,
            [0.70, 0.65, 0.65],
            1.0,
        ),
        cloud(
            "cloud-mini",
            1.0,
            110.0,
            2.5e-7,
            2e-6,
            1e-4,
            [0.85, 0.80, 0.75],
            1.1,
        ),
        cloud(
            "cloud-pro",
            1.5,
            60.0,
            1.25e-6,
            1e-5,
            5e-4,
            [0.95, 0.95, 0.85],
            1.3,
        ),
    ]
}

/// Spreads `k` picks over `0..n` keeping both ends.
fn spread(n: usize, k: usize) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    (0..k)
        .map(|i| (i * (n - 1) + (k - 1) / 2) / (k - 1))
        .collect()
}

fn heterogeneous_tasks(spec: &GeneratorSpec, seed: u64) -> Result<Vec<TaskRecord>, GeneratorError> {
    let families = match &spec.families {
        Some(f) => f.clone(),
        None => {
            let all = default_families();
            if spec.num_families > all.len() {
                return Err(GeneratorError::InvalidSpec(format!(
                    "at most {} built-in task families",
                    all.len()
                )));
            }
            all[..spec.num_families].to_vec()
        }
    };
    let backends = match &spec.backends {
        Some(b) => b.clone(),
        None => {
            let all = default_backends();
            if spec.num_actions > all.len() {
                return Err(GeneratorError::InvalidSpec(format!(
                    "at most {} built-in backends",
                    all.len()
                )));
            }
            spread(all.len(), spec.num_actions)
                .into_iter()
                .map(|i| all[i].clone())
                .collect()
        }
    };
    if backends.len() != spec.num_actions {
        return Err(GeneratorError::InvalidSpec(
            "backends must match num_actions".into(),
        ));
    }
    if families.len() < 2 {
        return Err(GeneratorError::InvalidSpec(
            "at least two task families are required".into(),
        ));
    }
    for b in &backends {
        if b.skill.len() != families.len() {
            return Err(GeneratorError::InvalidSpec(format!(
                "backend `{}` needs one skill per family",
                b.label
            )));
        }
        let rates_ok = match &b.kind {
            BackendKind::Local { throughput } => *throughput > 0.0,
            BackendKind::Cloud {
                round_trip,
                prefill_rate,
                decode_rate,
                rates,
            } => {
                *round_trip >= 0.0
                    && *prefill_rate > 0.0
                    && *decode_rate > 0.0
                    && rates.input >= 0.0
                    && rates.output >= 0.0
                    && rates.image >= 0.0
            }
        };
        if !rates_ok {
            return Err(GeneratorError::InvalidSpec(format!(
                "backend `{}` has invalid rates",
                b.label
            )));
        }
    }

    let f = families.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let tail: Pareto<f64> = Pareto::new(1.0, 1.6).expect("valid Pareto");
    let mut tasks = Vec::with_capacity(spec.num_tasks);
    for t in 0..spec.num_tasks {
        let fam_idx = rng.random_range(0..f);
        let fam = &families[fam_idx];
        let difficulty: f64 = (0.12 * tail.sample(&mut rng)).min(1.0);
        let length = rng.random_range(0.5..1.5);

        // Family indicator, difficulty and its square per family, length.
        let mut z = vec![0.0; 3 * f + 1];
        z[fam_idx] = 1.0;
        z[f + fam_idx] = difficulty;
        z[2 * f + fam_idx] = difficulty * difficulty;
        z[3 * f] = length - 1.0;

        let t_in = fam.input_tokens * length;
        let mut outcomes = Vec::with_capacity(backends.len());
        let mut expected = Vec::with_capacity(backends.len());
        for b in &backends {
            let quality = b.skill[fam_idx] - difficulty * fam.hardness;
            let reward = match fam.scoring {
                Scoring::Rouge => {
                    let r = rouge_to_reward(quality.clamp(0.0, 1.0)).expect("clamped to [0, 1]");
                    f64::from(r)
                }
                Scoring::ExactMatch => f64::from(exact_match_reward(quality > 0.35)),
            };
            let t_out = fam.output_tokens * b.verbosity * (1.0 + difficulty);
            let (latency, money) = match &b.kind {
                BackendKind::Local { throughput } => {
                    let lat = local_latency(t_in, t_out, *throughput)
                        .expect("throughput validated positive");
                    (lat, local_cost(lat))
                }
                BackendKind::Cloud {
                    round_trip,
                    prefill_rate,
                    decode_rate,
                    rates,
                } => (
                    round_trip + t_in / prefill_rate + t_out / decode_rate,
                    cloud_cost(t_in, t_out, fam.images, rates),
                ),
            };
            let jitter = (1.0 + spec.noise * noise.sample(&mut rng)).max(0.0);
            outcomes.push(Outcome {
                reward,
                cost: CostVector::clamped(vec![latency * jitter, money]),
            });
            expected.push(Outcome {
                reward,
                cost: CostVector::clamped(vec![latency, money]),
            });
        }
        let context = if spec.modalities {
            modality_context(t, &z, fam.images > 0.0, &mut rng)
        } else {
            TaskContext::from_embedding(t, z)
        };
        tasks.push(TaskRecord {
            context,
            outcomes,
            expected: Some(expected),
        });
    }
    Ok(tasks)
}

/// Hidden states scattered around `z` with CLS attention in `[0.5, 1.5]`,
/// so that pooling recovers roughly `z`.
fn modality_context(t: usize, z: &[f64], image: bool, rng: &mut ChaCha8Rng) -> TaskContext {
    let heads = 2;
    let mut mods = BTreeMap::new();
    let mut tokens = 0;
    let mut add = |tag: &str, len: usize, rng: &mut ChaCha8Rng| {
        let rows: Vec<Vec<f64>> = (0..len)
            .map(|_| z.iter().map(|v| v * rng.random_range(0.9..1.1)).collect())
            .collect();
        mods.insert(
            tag.to_string(),
            Matrix::from_rows(rows).expect("uniform rows"),
        );
        tokens += len;
    };
    if image {
        add("image", 4, rng);
    }
    add("text", 6, rng);
    let att: Vec<Vec<f64>> = (0..heads)
        .map(|_| (0..tokens).map(|_| rng.random_range(0.5..1.5)).collect())
        .collect();
    TaskContext::from_modalities(t, mods, Some(Matrix::from_rows(att).expect("uniform rows")))
}
