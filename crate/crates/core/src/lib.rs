//! A simulation and evaluation laboratory for out-of-distribution learning.
//!
//! The crate builds up from a small set of domain types (tasks, data sets,
//! streams, hypotheses) to synthetic distribution families, simple learners,
//! a deterministic parallel Monte Carlo risk engine, the learning-efficiency
//! metric family (transfer, multitask, meta, continual, lifelong), and
//! empirical learnability probers with theorem-verification drivers.
//!
//! Everything downstream of a seed is reproducible: sampling and trial
//! scheduling use a counter-based generator ([`rng::SplitMix64`]) with
//! stateless per-trial seed derivation, so results are bit-identical for any
//! thread count.
//!
//! ```
//! use oodle_core::risk::{expected_error, DataPlan, ErrorSpec};
//! use oodle_core::{LearnerKind, LearnerSpec, World, WorldPair};
//!
//! # fn main() -> oodle_core::Result<()> {
//! // evaluate against P_0.8 while training data comes from P_0.6
//! let pair = WorldPair::new(World::threshold(0.8)?, World::threshold(0.6)?);
//! let learner = LearnerSpec::new(LearnerKind::MaxZeroThreshold);
//! let spec = ErrorSpec::new(pair, learner, DataPlan { n: 0, m: 500 })
//!     .with_trials(200)
//!     .with_seed(42);
//! let estimate = expected_error(&spec)?;
//! // the fitted threshold concentrates just under 0.6, so the risk sits
//! // near the 0.2 distribution gap
//! assert!((estimate.mean - 0.2).abs() < 0.01);
//! # Ok(())
//! # }
//! ```

pub mod domain;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod probe;
pub mod risk;
pub mod rng;
pub mod worlds;

pub use domain::{
    amalgamate, slice_task_only, slice_up_to_task, Action, DataSet, DataStream, HyperParams,
    Hypothesis, Query, Sample, TaskId, WeightVector,
};
pub use error::Error;
pub use learners::{fit, predict, LearnerKind, LearnerSpec};
pub use metrics::{
    backward_le, cl_accuracy, cl_backward_transfer, cl_forward_transfer, compute_lifelong_curves,
    compute_task_grid, continual_les, forward_le, has_forgotten, has_learned, learner_efficiency,
    learning_efficiency, lifelong_verdict, multitask_les, performance_maintenance,
    performance_recovery, sample_efficiency, ste_ratio, transfer_benefit_ratio, transfer_le,
    weighted_verdict, ContinualLes, LEValue, LearnerEfficiency, LifelongCurves, MetricReport,
    RawAndRecast, RecoveryResult, TaskGrid, TaskSetup, TbrResult, Verdict,
};
pub use probe::{
    strong_ood_probability, sweep, verify_theorem_positive_transfer, verify_theorem_weak_meta,
    weak_ood_probability, ProbeKind, ProbeResult, SweepCell, TheoremCheck, TheoremReport,
};
pub use risk::{expected_error, risk_of_hypothesis, DataPlan, ErrorSpec, EvalMode, RiskEstimate};
pub use rng::{derive_seed, Seed, SplitMix64};
pub use worlds::{
    bayes_risk, closed_form_risk, make_stream, sample_dataset, sample_eval_batch,
    LinearChainWorld, MixtureDraw, MixtureWorld, ScheduleBatch, StreamSchedule, ThresholdWorld,
    World, WorldPair,
};

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
