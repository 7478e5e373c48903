//! Experiment configuration: the TOML schema, validation, and conversion
//! into core types.
//!
//! Configs are nested key-value tables.  Worlds are tagged by `family`,
//! learners by `kind`; seeds are unsigned 64-bit decimal integers.  The
//! schema is documented field-by-field in the README.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use oodle_core::risk::{DataPlan, EvalMode, DEFAULT_EVAL_N};
use oodle_core::worlds::ScheduleBatch;
use oodle_core::{
    LearnerKind, LearnerSpec, LinearChainWorld, MixtureDraw, MixtureWorld, StreamSchedule, TaskId,
    WeightVector, World, WorldPair,
};

/// Fallback master seed when neither config, flag, nor environment supplies
/// one.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Risk,
    Le,
    Transfer,
    Multitask,
    Meta,
    Continual,
    Lifelong,
    ProbeWeak,
    ProbeStrong,
    Sweep,
    VerifyThm1,
    VerifyThm2,
    Tbr,
    ClMetrics,
    LifelongMetrics,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Risk => "risk",
            ExperimentKind::Le => "le",
            ExperimentKind::Transfer => "transfer",
            ExperimentKind::Multitask => "multitask",
            ExperimentKind::Meta => "meta",
            ExperimentKind::Continual => "continual",
            ExperimentKind::Lifelong => "lifelong",
            ExperimentKind::ProbeWeak => "probe-weak",
            ExperimentKind::ProbeStrong => "probe-strong",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::VerifyThm1 => "verify-thm1",
            ExperimentKind::VerifyThm2 => "verify-thm2",
            ExperimentKind::Tbr => "tbr",
            ExperimentKind::ClMetrics => "cl-metrics",
            ExperimentKind::LifelongMetrics => "lifelong-metrics",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WorldConfig {
    Threshold {
        z: f64,
    },
    Mixture {
        components: Vec<MixtureComponentConfig>,
        #[serde(default)]
        per_sample: bool,
    },
    LinearChain {
        a: f64,
        b: f64,
        noise_sd: f64,
        covariate_sd: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponentConfig {
    pub weight: f64,
    #[serde(flatten)]
    pub world: WorldConfig,
}

impl WorldConfig {
    pub fn build(&self) -> Result<World, String> {
        match self {
            WorldConfig::Threshold { z } => {
                World::threshold(*z).map_err(|e| e.to_string())
            }
            WorldConfig::LinearChain { a, b, noise_sd, covariate_sd } => {
                LinearChainWorld::new(*a, *b, *noise_sd, *covariate_sd)
                    .map(World::LinearChain)
                    .map_err(|e| e.to_string())
            }
            WorldConfig::Mixture { components, per_sample } => {
                let comps = components
                    .iter()
                    .map(|c| c.world.build().map(|w| (w, c.weight)))
                    .collect::<Result<Vec<_>, _>>()?;
                let mode = if *per_sample { MixtureDraw::PerSample } else { MixtureDraw::PerDataset };
                MixtureWorld::new(comps, mode)
                    .map(World::Mixture)
                    .map_err(|e| e.to_string())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldPairConfig {
    pub eval: WorldConfig,
    /// Defaults to the evaluation world (in-distribution) when omitted.
    pub data: Option<WorldConfig>,
}

impl WorldPairConfig {
    pub fn build(&self) -> Result<WorldPair, String> {
        let eval = self.eval.build()?;
        let data = match &self.data {
            Some(d) => d.build()?,
            None => eval.clone(),
        };
        Ok(WorldPair::new(eval, data))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKindConfig {
    MaxZeroThreshold,
    Chance,
    OlsDirect,
    OlsChain,
}

impl From<LearnerKindConfig> for LearnerKind {
    fn from(k: LearnerKindConfig) -> Self {
        match k {
            LearnerKindConfig::MaxZeroThreshold => LearnerKind::MaxZeroThreshold,
            LearnerKindConfig::Chance => LearnerKind::Chance,
            LearnerKindConfig::OlsDirect => LearnerKind::OlsDirect,
            LearnerKindConfig::OlsChain => LearnerKind::OlsChain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: LearnerKindConfig,
}

impl LearnerConfig {
    pub fn build(&self) -> LearnerSpec {
        LearnerSpec::new(self.kind.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default)]
    pub n: usize,
    #[serde(default)]
    pub m: usize,
}

impl From<PlanConfig> for DataPlan {
    fn from(p: PlanConfig) -> Self {
        DataPlan { n: p.n, m: p.m }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// `closed-form` or `monte-carlo`.
    pub mode: EvalModeConfig,
    pub eval_n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalModeConfig {
    ClosedForm,
    MonteCarlo,
}

impl EvalConfig {
    pub fn build(&self) -> EvalMode {
        match self.mode {
            EvalModeConfig::ClosedForm => EvalMode::ClosedForm,
            EvalModeConfig::MonteCarlo => {
                EvalMode::MonteCarlo { eval_n: self.eval_n.unwrap_or(DEFAULT_EVAL_N) }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub task: u32,
    pub world: WorldConfig,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub id: u32,
    pub world: WorldConfig,
    #[serde(default)]
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    /// Flat weights, position k belonging to the k-th declared task.
    pub w: Option<Vec<f64>>,
    /// Time-sliced weights for lifelong schedules.
    pub slices: Option<Vec<WeightSliceConfig>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSliceConfig {
    pub u: u64,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSettings {
    pub epsilon: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub a: f64,
    pub b: f64,
    pub noise_sd: f64,
    pub covariate_sd: f64,
    pub n_task: usize,
    pub n_ood: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
    /// `csv` or `json`; both are written when omitted.
    pub format: Option<OutputFormat>,
    /// Also write whitespace-separated plot-data series.
    #[serde(default)]
    pub plot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// A full experiment description as parsed from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    #[serde(default)]
    pub excess: bool,
    pub eval: Option<EvalConfig>,
    pub world: Option<WorldPairConfig>,
    pub learner: Option<LearnerConfig>,
    pub plan: Option<PlanConfig>,
    /// Numerator arm for `le`/`transfer`; defaults to the in-distribution
    /// part of `plan`.
    pub base_plan: Option<PlanConfig>,
    pub schedule: Option<Vec<BatchConfig>>,
    pub tasks: Option<Vec<TaskConfig>>,
    pub weights: Option<WeightsConfig>,
    pub probe: Option<ProbeSettings>,
    pub grid: Option<GridConfig>,
    pub chain: Option<ChainConfig>,
    pub output: Option<OutputConfig>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        config.validate()?;
        Ok(config)
    }

    /// Semantic hash: SHA-256 over the canonical JSON serialization of the
    /// parsed config, so formatting and comments never affect it.
    pub fn semantic_hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }

    pub fn eval_mode(&self) -> EvalMode {
        self.eval.as_ref().map_or(EvalMode::ClosedForm, EvalConfig::build)
    }

    pub fn world_pair(&self) -> Result<WorldPair, String> {
        self.world
            .as_ref()
            .ok_or_else(|| "this experiment kind needs a [world] section".to_string())?
            .build()
    }

    pub fn learner_spec(&self) -> Result<LearnerSpec, String> {
        Ok(self
            .learner
            .as_ref()
            .ok_or_else(|| "this experiment kind needs a [learner] section".to_string())?
            .build())
    }

    pub fn plan(&self) -> Result<DataPlan, String> {
        Ok(self
            .plan
            .ok_or_else(|| "this experiment kind needs a [plan] section".to_string())?
            .into())
    }

    pub fn stream_schedule(&self) -> Result<StreamSchedule, String> {
        let batches = self
            .schedule
            .as_ref()
            .ok_or_else(|| "this experiment kind needs a [[schedule]] list".to_string())?;
        let built = batches
            .iter()
            .map(|b| {
                b.world.build().map(|world| ScheduleBatch {
                    task: TaskId(b.task),
                    world,
                    count: b.count,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        StreamSchedule::new(built).map_err(|e| e.to_string())
    }

    /// Flat weights over the given tasks, defaulting to uniform.
    pub fn weight_vector(&self, tasks: &[TaskId]) -> Result<WeightVector, String> {
        match self.weights.as_ref().and_then(|w| w.w.as_ref()) {
            None => WeightVector::uniform(tasks).map_err(|e| e.to_string()),
            Some(raw) => {
                if raw.len() != tasks.len() {
                    return Err(format!(
                        "{} weights for {} tasks",
                        raw.len(),
                        tasks.len()
                    ));
                }
                let map: BTreeMap<TaskId, f64> =
                    tasks.iter().copied().zip(raw.iter().copied()).collect();
                WeightVector::new(map).map_err(|e| e.to_string())
            }
        }
    }

    /// Time-sliced weights for lifelong runs.
    pub fn weight_slices(&self, tasks: &[TaskId]) -> Result<Vec<WeightVector>, String> {
        let slices = self
            .weights
            .as_ref()
            .and_then(|w| w.slices.as_ref())
            .ok_or_else(|| "lifelong runs need [weights] slices".to_string())?;
        slices
            .iter()
            .map(|s| {
                if s.w.len() != tasks.len() {
                    return Err(format!("slice u={} has {} weights for {} tasks", s.u, s.w.len(), tasks.len()));
                }
                let map: BTreeMap<TaskId, f64> =
                    tasks.iter().copied().zip(s.w.iter().copied()).collect();
                WeightVector::time_slice(map, s.u).map_err(|e| e.to_string())
            })
            .collect()
    }

    fn validate(&self) -> Result<(), String> {
        use ExperimentKind::*;
        match self.kind {
            Risk | ProbeWeak => {
                self.world_pair()?;
                self.learner_spec()?;
                self.plan()?;
            }
            ProbeStrong => {
                self.world_pair()?;
                self.learner_spec()?;
                self.plan()?;
                let p = self.probe.as_ref().ok_or("probe-strong needs [probe] epsilon")?;
                let eps = p.epsilon.ok_or("probe-strong needs probe.epsilon")?;
                if eps <= 0.0 {
                    return Err("probe.epsilon must be positive".into());
                }
            }
            Le | Transfer => {
                self.world_pair()?;
                self.learner_spec()?;
                let full: DataPlan = self.plan()?;
                let base: DataPlan =
                    self.base_plan.unwrap_or(PlanConfig { n: full.n, m: 0 }).into();
                if !(base.n <= full.n && base.m <= full.m) {
                    return Err("base_plan must be a subset of plan".into());
                }
            }
            Multitask | Meta => {
                let tasks =
                    self.tasks.as_ref().ok_or("multitask/meta needs a [[tasks]] list")?;
                if tasks.is_empty() {
                    return Err("at least one task required".into());
                }
                let ids: Vec<TaskId> = tasks.iter().map(|t| TaskId(t.id)).collect();
                for t in tasks {
                    t.world.build()?;
                }
                self.learner_spec()?;
                self.weight_vector(&ids)?;
            }
            Continual => {
                self.learner_spec()?;
                let schedule = self.stream_schedule()?;
                self.weight_vector(&schedule.tasks())?;
            }
            Lifelong => {
                self.learner_spec()?;
                let schedule = self.stream_schedule()?;
                let slices = self.weight_slices(&schedule.tasks())?;
                let total: f64 = slices.iter().map(|s| s.sum()).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(format!("lifelong slice weights sum to {total}, not 1"));
                }
                let batches = schedule.batches();
                for slice in &slices {
                    let u = slice.time_index.expect("slices carry time indices") as usize;
                    if u == 0 || u > batches.len() {
                        return Err(format!("slice u={u} outside 1..={}", batches.len()));
                    }
                    for (t, w) in slice.entries() {
                        let seen = batches[..u].iter().any(|b| b.task == t);
                        if w > 0.0 && !seen {
                            return Err(format!(
                                "slice u={u} weights task {t} before it appears in the stream"
                            ));
                        }
                    }
                }
            }
            Sweep => {
                self.world_pair()?;
                self.learner_spec()?;
                let grid = self.grid.as_ref().ok_or("sweep needs a [grid] section")?;
                if grid.n.is_empty() || grid.m.is_empty() {
                    return Err("grid.n and grid.m must be non-empty".into());
                }
            }
            VerifyThm1 | VerifyThm2 => {}
            Tbr => {
                let c = self.chain.as_ref().ok_or("tbr needs a [chain] section")?;
                if c.n_task == 0 {
                    return Err("chain.n_task must be positive".into());
                }
                LinearChainWorld::new(c.a, c.b, c.noise_sd, c.covariate_sd)
                    .map_err(|e| e.to_string())?;
            }
            ClMetrics | LifelongMetrics => {
                self.learner_spec()?;
                self.stream_schedule()?;
            }
        }
        for t in self.tasks.iter().flatten() {
            let _ = t;
        }
        Ok(())
    }
}
