//! Estimation of the expected error of a learner: the expectation over
//! data-set draws of the risk of the learned hypothesis.
//!
//! The error is a double integral — an inner integral over query-action
//! pairs (the risk of one hypothesis) and an outer integral over data-set
//! draws.  The inner integral is evaluated in closed form whenever the
//! hypothesis/world pair supports it, which removes inner variance entirely
//! for the threshold worlds; otherwise it falls back to a fresh Monte Carlo
//! evaluation batch.  The outer integral is always Monte Carlo over
//! independent trials.
//!
//! # Concurrency
//!
//! Trials are independent rayon tasks.  Trial `k` derives its seed
//! statelessly as `derive_seed(master_seed, k)`, results are collected in
//! trial order, and the reduction happens after all trials complete — so the
//! estimate is bit-identical for any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{amalgamate, Action, DataSet, Hypothesis, HypothesisKind};
use crate::error::Error;
use crate::learners::{fit, LearnerSpec};
use crate::rng::{derive_seed, Seed};
use crate::worlds::{bayes_risk, closed_form_risk, sample_dataset, sample_eval_batch, World, WorldPair};
use crate::Result;

/// How the inner (risk) integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    /// Exact integral; requires a supported hypothesis/world pair.
    ClosedForm,
    /// Mean loss over `eval_n` fresh evaluation samples per trial.
    MonteCarlo { eval_n: usize },
}

impl EvalMode {
    fn eval_samples(&self) -> usize {
        match self {
            EvalMode::ClosedForm => 0,
            EvalMode::MonteCarlo { eval_n } => *eval_n,
        }
    }
}

/// Default outer trial count.
pub const DEFAULT_TRIALS: usize = 1000;
/// Default inner evaluation batch size for Monte Carlo risk.
pub const DEFAULT_EVAL_N: usize = 10_000;

/// A Monte Carlo (or exact) estimate of an error value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
    pub mode: EstimateMode,
    pub eval_samples_per_trial: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateMode {
    ClosedForm,
    MonteCarlo,
}

impl RiskEstimate {
    /// An exact value: zero standard error, one trial.
    pub fn exact(mean: f64) -> Self {
        Self {
            mean,
            std_err: 0.0,
            trials: 1,
            mode: EstimateMode::ClosedForm,
            eval_samples_per_trial: 0,
        }
    }

    /// Estimate from per-trial values (already in trial order).
    pub fn from_trials(values: &[f64], eval_samples_per_trial: usize) -> Self {
        let (mean, std_err) = mean_and_se(values);
        Self {
            mean,
            std_err,
            trials: values.len(),
            mode: EstimateMode::MonteCarlo,
            eval_samples_per_trial,
        }
    }
}

/// Which data sets a trial draws: `n` in-distribution samples from the
/// evaluation world and `m` out-of-distribution samples from the data world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPlan {
    pub n: usize,
    pub m: usize,
}

impl DataPlan {
    pub fn in_dist(n: usize) -> Self {
        Self { n, m: 0 }
    }

    pub fn total(&self) -> usize {
        self.n + self.m
    }

    /// Componentwise subset: every arm of `self` is contained in `other`.
    pub fn is_subset_of(&self, other: &DataPlan) -> bool {
        self.n <= other.n && self.m <= other.m
    }
}

/// Full specification of one expected-error estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub world_pair: WorldPair,
    pub learner: LearnerSpec,
    pub plan: DataPlan,
    pub trials: usize,
    pub eval_mode: EvalMode,
    pub master_seed: Seed,
    /// Subtract the Bayes risk of the evaluation world (excess risk).
    pub excess: bool,
}

impl ErrorSpec {
    pub fn new(world_pair: WorldPair, learner: LearnerSpec, plan: DataPlan) -> Self {
        Self {
            world_pair,
            learner,
            plan,
            trials: DEFAULT_TRIALS,
            eval_mode: EvalMode::ClosedForm,
            master_seed: 0,
            excess: false,
        }
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: Seed) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_eval_mode(mut self, mode: EvalMode) -> Self {
        self.eval_mode = mode;
        self
    }
}

fn loss(prediction: &Action, truth: &Action) -> Result<f64> {
    match (prediction, truth) {
        (Action::Label(p), Action::Label(t)) => Ok(f64::from(p != t)),
        (Action::Value(p), Action::Value(t)) => Ok((p - t) * (p - t)),
        _ => Err(Error::Unsupported(
            "loss undefined between label and value actions".into(),
        )),
    }
}

/// Risk of one hypothesis against an evaluation world.
///
/// Closed form covers threshold worlds with threshold/chance/constant
/// hypotheses (0-1 loss) and the linear chain with linear-estimate
/// hypotheses (squared loss).  Monte Carlo evaluates mean loss over `eval_n`
/// fresh samples drawn from `derive_seed(seed, 0)`; chance predictions take
/// their coins from a parallel substream, so evaluation is deterministic
/// given the seed.
pub fn risk_of_hypothesis(
    h: &Hypothesis,
    eval_world: &World,
    mode: EvalMode,
    seed: Seed,
) -> Result<f64> {
    match mode {
        EvalMode::ClosedForm => match eval_world {
            World::Threshold(w) => closed_form_risk(h, w),
            World::LinearChain(w) => match h.kind {
                HypothesisKind::LinearEstimate(s) => {
                    let gap = s - w.tau();
                    Ok(gap * gap * w.covariate_sd * w.covariate_sd
                        + (1.0 + w.b * w.b) * w.noise_sd * w.noise_sd)
                }
                _ => Err(Error::Unsupported(format!(
                    "no closed-form chain risk for {:?}",
                    h.kind
                ))),
            },
            World::Mixture(_) => Err(Error::Unsupported(
                "no closed-form risk against a mixture evaluation world".into(),
            )),
        },
        EvalMode::MonteCarlo { eval_n } => {
            if eval_n == 0 {
                return Err(Error::InvalidParameter("eval_n must be positive".into()));
            }
            let batch = sample_eval_batch(eval_world, eval_n, derive_seed(seed, 0));
            let pred_base = derive_seed(seed, 1);
            let mut total = 0.0;
            for (i, s) in batch.iter().enumerate() {
                let pred = h.predict(&s.query, derive_seed(pred_base, i as u64));
                total += loss(&pred, &s.action)?;
            }
            Ok(total / eval_n as f64)
        }
    }
}

/// Draw the trial's data sets and fit the learner.  The in-distribution and
/// out-of-distribution draws come from fixed substreams of `trial_seed`, so
/// arms that share a trial seed share the in-distribution draw.
pub(crate) fn fit_trial(
    learner: &LearnerSpec,
    world_pair: &WorldPair,
    plan: &DataPlan,
    trial_seed: Seed,
) -> Result<Hypothesis> {
    let data = trial_data(world_pair, plan, trial_seed);
    fit(learner, &data)
}

pub(crate) fn trial_data(world_pair: &WorldPair, plan: &DataPlan, trial_seed: Seed) -> DataSet {
    let s_in = sample_dataset(&world_pair.eval_world, plan.n, derive_seed(trial_seed, 0));
    let s_ood = sample_dataset(&world_pair.data_world, plan.m, derive_seed(trial_seed, 1));
    match (plan.n, plan.m) {
        (_, 0) => s_in,
        (0, _) => s_ood,
        _ => amalgamate(&[s_in, s_ood]),
    }
}

/// Evaluation seed substream for a trial.
pub(crate) fn trial_eval_seed(trial_seed: Seed) -> Seed {
    derive_seed(trial_seed, 2)
}

/// Run independent trials in parallel with stateless per-trial seeds,
/// collecting results in trial order.  Any error aborts the whole set.
pub fn run_trials<T, F>(trials: usize, master_seed: Seed, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, Seed) -> Result<T> + Sync,
{
    (0..trials as u64)
        .into_par_iter()
        .map(|k| f(k, derive_seed(master_seed, k)))
        .collect()
}

/// Sample mean and standard error (sample standard deviation over sqrt n).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Expected error of a learner under a data plan: the average over
/// independent data-set draws of the risk of the fitted hypothesis.
///
/// A plan that draws no data at all has a deterministic fit; in that case a
/// closed-form evaluation collapses to an exact estimate.
pub fn expected_error(spec: &ErrorSpec) -> Result<RiskEstimate> {
    if spec.trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let excess_offset = if spec.excess {
        bayes_risk(&spec.world_pair.eval_world)
            .map_err(|_| Error::UnknownBayesRisk(format!("{}", spec.world_pair.eval_world)))?
    } else {
        0.0
    };

    if spec.plan.total() == 0 && spec.eval_mode == EvalMode::ClosedForm {
        let h = fit(&spec.learner, &DataSet::base())?;
        let r = risk_of_hypothesis(&h, &spec.world_pair.eval_world, EvalMode::ClosedForm, 0)?;
        return Ok(RiskEstimate::exact(r - excess_offset));
    }

    let risks = run_trials(spec.trials, spec.master_seed, |_, trial_seed| {
        let h = fit_trial(&spec.learner, &spec.world_pair, &spec.plan, trial_seed)?;
        let r = risk_of_hypothesis(
            &h,
            &spec.world_pair.eval_world,
            spec.eval_mode,
            trial_eval_seed(trial_seed),
        )?;
        Ok(r - excess_offset)
    })?;
    Ok(RiskEstimate::from_trials(&risks, spec.eval_mode.eval_samples()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Hypothesis;
    use crate::learners::LearnerKind;
    use crate::worlds::{MixtureDraw, MixtureWorld};

    fn threshold_world(z: f64) -> World {
        World::threshold(z).unwrap()
    }

    fn hyp(kind: HypothesisKind) -> Hypothesis {
        Hypothesis::new(kind, "test")
    }

    #[test]
    fn closed_form_examples() {
        let w = threshold_world(0.8);
        let r = risk_of_hypothesis(&hyp(HypothesisKind::Chance), &w, EvalMode::ClosedForm, 0)
            .unwrap();
        assert_eq!(r, 0.5);
        let r = risk_of_hypothesis(
            &hyp(HypothesisKind::Threshold(0.7)),
            &w,
            EvalMode::ClosedForm,
            0,
        )
        .unwrap();
        assert!((r - 0.1).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let w = threshold_world(0.9);
        let h = hyp(HypothesisKind::Threshold(0.6));
        let mc = risk_of_hypothesis(&h, &w, EvalMode::MonteCarlo { eval_n: 100_000 }, 11).unwrap();
        assert!((mc - 0.3).abs() < 0.005, "mc {mc}");
    }

    #[test]
    fn chance_monte_carlo_near_half() {
        let w = threshold_world(0.5);
        let h = hyp(HypothesisKind::Chance);
        let mc = risk_of_hypothesis(&h, &w, EvalMode::MonteCarlo { eval_n: 100_000 }, 3).unwrap();
        assert!((mc - 0.5).abs() < 0.01, "mc {mc}");
    }

    /// Squared-loss path: chain risk of a linear estimate, closed form vs
    /// Monte Carlo.
    #[test]
    fn chain_risk_closed_form_matches_monte_carlo() {
        let chain = crate::worlds::LinearChainWorld::new(1.5, 0.5, 0.8, 1.2).unwrap();
        let world = World::LinearChain(chain);
        for slope in [0.0, chain.tau(), 2.0] {
            let h = hyp(HypothesisKind::LinearEstimate(slope));
            let exact = risk_of_hypothesis(&h, &world, EvalMode::ClosedForm, 0).unwrap();
            let mc =
                risk_of_hypothesis(&h, &world, EvalMode::MonteCarlo { eval_n: 200_000 }, 19)
                    .unwrap();
            assert!(
                (mc - exact).abs() < 0.05 * exact.max(1.0),
                "slope {slope}: mc {mc} exact {exact}"
            );
        }
    }

    /// The whole engine with a Monte Carlo inner integral lands on the
    /// closed-form answer.
    #[test]
    fn expected_error_monte_carlo_inner_matches_closed_form() {
        let pair = WorldPair::in_distribution(threshold_world(0.6));
        let base = ErrorSpec::new(
            pair,
            LearnerSpec::new(LearnerKind::MaxZeroThreshold),
            DataPlan { n: 0, m: 100 },
        )
        .with_trials(300)
        .with_seed(77);
        let cf = expected_error(&base).unwrap();
        let eval_n = 20_000;
        let mc =
            expected_error(&base.clone().with_eval_mode(EvalMode::MonteCarlo { eval_n })).unwrap();
        // both arms share trial seeds, hence fits; the difference is pure
        // inner-evaluation noise with per-trial sd at most sqrt(0.25/eval_n)
        let tol = 3.0 * (0.25 / eval_n as f64 / base.trials as f64).sqrt();
        assert!((cf.mean - mc.mean).abs() <= tol, "cf {} mc {} tol {tol}", cf.mean, mc.mean);
        assert_eq!(mc.eval_samples_per_trial, eval_n);
    }

    fn thm1_spec(trials: usize, seed: Seed) -> ErrorSpec {
        let mixture = World::Mixture(
            MixtureWorld::new(
                vec![(threshold_world(0.7), 0.5), (threshold_world(0.1), 0.5)],
                MixtureDraw::PerDataset,
            )
            .unwrap(),
        );
        let pair = WorldPair::new(threshold_world(0.8), mixture);
        ErrorSpec::new(
            pair,
            LearnerSpec::new(LearnerKind::MaxZeroThreshold),
            DataPlan { n: 0, m: 10_000 },
        )
        .with_trials(trials)
        .with_seed(seed)
    }

    /// The mixture configuration lands at expected risk 0.4: half the data
    /// draws fit a threshold near 0.7 (risk 0.1 against z=0.8), half near 0.1
    /// (risk 0.7).
    #[test]
    fn expected_error_mixture_configuration() {
        let est = expected_error(&thm1_spec(1000, 42)).unwrap();
        assert!(
            (est.mean - 0.4).abs() < 0.02,
            "mean {} se {}",
            est.mean,
            est.std_err
        );
        assert_eq!(est.mode, EstimateMode::MonteCarlo);
    }

    /// With an empty plan the fit is chance and the estimate is exact.
    #[test]
    fn empty_plan_closed_form_is_exact_half() {
        let mut spec = thm1_spec(1000, 2024);
        spec.plan = DataPlan { n: 0, m: 0 };
        let est = expected_error(&spec).unwrap();
        assert_eq!(est.mean, 0.5);
        assert_eq!(est.std_err, 0.0);
        assert_eq!(est.trials, 1);
        assert_eq!(est.mode, EstimateMode::ClosedForm);
    }

    /// Same spec, different rayon pool widths: bit-identical estimates.
    #[test]
    fn estimate_is_independent_of_thread_count() {
        let spec = thm1_spec(200, 7);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| expected_error(&spec))
            .unwrap();
        let eight = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| expected_error(&spec))
            .unwrap();
        assert_eq!(one.mean.to_bits(), eight.mean.to_bits());
        assert_eq!(one.std_err.to_bits(), eight.std_err.to_bits());
    }

    /// In-distribution learning improves with more data (3-sigma allowance).
    #[test]
    fn expected_error_non_increasing_in_sample_size() {
        let pair = WorldPair::in_distribution(threshold_world(0.6));
        let mut prev: Option<RiskEstimate> = None;
        for m in [10, 100, 1000] {
            let spec = ErrorSpec::new(
                pair.clone(),
                LearnerSpec::new(LearnerKind::MaxZeroThreshold),
                DataPlan { n: 0, m },
            )
            .with_trials(300)
            .with_seed(55);
            let est = expected_error(&spec).unwrap();
            if let Some(p) = prev {
                let slack = 3.0 * (p.std_err.powi(2) + est.std_err.powi(2)).sqrt();
                assert!(
                    est.mean <= p.mean + slack,
                    "m={m}: {} > {} + {slack}",
                    est.mean,
                    p.mean
                );
            }
            prev = Some(est);
        }
    }

    #[test]
    fn excess_risk_subtracts_bayes() {
        let mut spec = thm1_spec(50, 3);
        spec.excess = true;
        let plain = expected_error(&thm1_spec(50, 3)).unwrap();
        let excess = expected_error(&spec).unwrap();
        // threshold worlds have zero Bayes risk, so the flag is a no-op here
        assert_eq!(plain.mean.to_bits(), excess.mean.to_bits());
    }

    #[test]
    fn fit_errors_abort_trials() {
        let chain = crate::worlds::LinearChainWorld::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let pair = WorldPair::in_distribution(World::LinearChain(chain));
        // OLS on an empty plan cannot regress
        let spec = ErrorSpec::new(
            pair,
            LearnerSpec::new(LearnerKind::OlsDirect),
            DataPlan { n: 0, m: 0 },
        )
        .with_trials(4)
        .with_eval_mode(EvalMode::MonteCarlo { eval_n: 10 });
        assert!(matches!(expected_error(&spec), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn mean_and_se_basics() {
        let (m, se) = mean_and_se(&[2.0]);
        assert_eq!((m, se), (2.0, 0.0));
        let (m, se) = mean_and_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-12);
    }
}
