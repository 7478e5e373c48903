//! Empirical learnability probers and theorem-verification drivers.
//!
//! The formal learnability definitions quantify over every distribution in a
//! model and every tolerance; those are not computable.  What is computable
//! — and what these probers estimate — is the inner probability for one
//! fixed distribution pair:
//!
//! * weak probe: `P[risk(fit(S_n ∪ S'_m)) < risk(fit(S_n))]`,
//! * strong probe: `P[risk(fit(S_n ∪ S'_m)) − R* < ε]`.
//!
//! Certification over a whole model is done by sweeping a finite grid of
//! threshold positions, which is exact for the finite-support models the
//! verification drivers use.
//!
//! Within a trial the two arms share the in-distribution draw (paired
//! seeds), so adding zero out-of-distribution samples can never register as
//! an improvement: the weak probability at `m = 0` is exactly zero.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::learners::{fit, LearnerKind, LearnerSpec};
use crate::metrics::{learning_efficiency, transfer_le, LEValue};
use crate::risk::{
    expected_error, risk_of_hypothesis, run_trials, trial_data, trial_eval_seed, DataPlan,
    ErrorSpec, EvalMode, RiskEstimate, DEFAULT_EVAL_N,
};
use crate::rng::{derive_seed, Seed};
use crate::worlds::{MixtureDraw, MixtureWorld, World, WorldPair};
use crate::Result;

/// A probability estimate with its binomial standard error and the
/// configuration it was measured under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub probability: f64,
    pub trials: usize,
    pub std_err: f64,
    pub config: ProbeConfig,
}

/// Echo of the probed configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub n: usize,
    pub m: usize,
    pub epsilon: Option<f64>,
    pub learner: String,
    pub eval_world: String,
    pub data_world: String,
    pub seed: Seed,
}

impl ProbeResult {
    fn new(successes: usize, trials: usize, config: ProbeConfig) -> Self {
        let p = successes as f64 / trials as f64;
        Self { probability: p, trials, std_err: (p * (1.0 - p) / trials as f64).sqrt(), config }
    }
}

fn probe_config(
    learner: &LearnerSpec,
    pair: &WorldPair,
    n: usize,
    m: usize,
    epsilon: Option<f64>,
    seed: Seed,
) -> ProbeConfig {
    ProbeConfig {
        n,
        m,
        epsilon,
        learner: learner.kind.name().to_string(),
        eval_world: pair.eval_world.to_string(),
        data_world: pair.data_world.to_string(),
        seed,
    }
}

/// Closed form when the pair supports it, Monte Carlo otherwise.
fn risk_auto(h: &crate::domain::Hypothesis, world: &World, seed: Seed) -> Result<f64> {
    match risk_of_hypothesis(h, world, EvalMode::ClosedForm, seed) {
        Ok(r) => Ok(r),
        Err(Error::Unsupported(_)) => {
            risk_of_hypothesis(h, world, EvalMode::MonteCarlo { eval_n: DEFAULT_EVAL_N }, seed)
        }
        Err(e) => Err(e),
    }
}

/// Per-trial paired risks of the two arms: `(risk(h_n), risk(h_{n,m}))`.
fn paired_arm_risks(
    learner: &LearnerSpec,
    pair: &WorldPair,
    n: usize,
    m: usize,
    trials: usize,
    seed: Seed,
) -> Result<Vec<(f64, f64)>> {
    run_trials(trials, seed, |_, trial_seed| {
        let base_plan = DataPlan { n, m: 0 };
        let full_plan = DataPlan { n, m };
        let h_n = fit(learner, &trial_data(pair, &base_plan, trial_seed))?;
        let h_nm = fit(learner, &trial_data(pair, &full_plan, trial_seed))?;
        let eval_seed = trial_eval_seed(trial_seed);
        let r_n = risk_auto(&h_n, &pair.eval_world, eval_seed)?;
        let r_nm = risk_auto(&h_nm, &pair.eval_world, derive_seed(eval_seed, 1))?;
        Ok((r_n, r_nm))
    })
}

/// Estimate the probability that the out-of-distribution data strictly
/// improves on the in-distribution-only hypothesis.  Ties count as
/// non-improvement.
pub fn weak_ood_probability(
    learner: &LearnerSpec,
    pair: &WorldPair,
    n: usize,
    m: usize,
    trials: usize,
    seed: Seed,
) -> Result<ProbeResult> {
    let risks = paired_arm_risks(learner, pair, n, m, trials, seed)?;
    let successes = risks.iter().filter(|(r_n, r_nm)| r_nm < r_n).count();
    Ok(ProbeResult::new(successes, trials, probe_config(learner, pair, n, m, None, seed)))
}

/// Estimate the probability that the combined-data hypothesis comes within
/// `epsilon` of the Bayes risk of the evaluation world.
pub fn strong_ood_probability(
    learner: &LearnerSpec,
    pair: &WorldPair,
    n: usize,
    m: usize,
    epsilon: f64,
    trials: usize,
    seed: Seed,
) -> Result<ProbeResult> {
    let bayes = crate::worlds::bayes_risk(&pair.eval_world)
        .map_err(|_| Error::UnknownBayesRisk(pair.eval_world.to_string()))?;
    let risks = paired_arm_risks(learner, pair, n, m, trials, seed)?;
    let successes = risks.iter().filter(|(_, r_nm)| r_nm - bayes < epsilon).count();
    Ok(ProbeResult::new(
        successes,
        trials,
        probe_config(learner, pair, n, m, Some(epsilon), seed),
    ))
}

/// What a sweep certifies per cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProbeKind {
    Weak { delta: f64 },
    Strong { epsilon: f64, delta: f64 },
}

/// One sweep cell: the probe at `(n, m)` plus the transfer efficiency of the
/// same arms, and whether the probability clears `1 - delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n: usize,
    pub m: usize,
    pub probe: ProbeResult,
    pub le: LEValue,
    pub meets_threshold: bool,
}

/// Probe every `(n, m)` cell of the grids, emitting the probability and the
/// learning efficiency per cell.
pub fn sweep(
    learner: &LearnerSpec,
    pair: &WorldPair,
    n_grid: &[usize],
    m_grid: &[usize],
    kind: ProbeKind,
    trials: usize,
    seed: Seed,
) -> Result<Vec<SweepCell>> {
    if n_grid.is_empty() || m_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut cells = Vec::with_capacity(n_grid.len() * m_grid.len());
    for (i, &n) in n_grid.iter().enumerate() {
        for (j, &m) in m_grid.iter().enumerate() {
            let cell_seed = derive_seed(seed, (i * m_grid.len() + j) as u64);
            let risks = paired_arm_risks(learner, pair, n, m, trials, cell_seed)?;
            let successes = match kind {
                ProbeKind::Weak { .. } => risks.iter().filter(|(r_n, r_nm)| r_nm < r_n).count(),
                ProbeKind::Strong { epsilon, .. } => {
                    let bayes = crate::worlds::bayes_risk(&pair.eval_world)
                        .map_err(|_| Error::UnknownBayesRisk(pair.eval_world.to_string()))?;
                    risks.iter().filter(|(_, r_nm)| r_nm - bayes < epsilon).count()
                }
            };
            let epsilon = match kind {
                ProbeKind::Weak { .. } => None,
                ProbeKind::Strong { epsilon, .. } => Some(epsilon),
            };
            let probe = ProbeResult::new(
                successes,
                trials,
                probe_config(learner, pair, n, m, epsilon, cell_seed),
            );
            let (num, den): (Vec<f64>, Vec<f64>) = risks.into_iter().unzip();
            let le = learning_efficiency(
                RiskEstimate::from_trials(&num, 0),
                RiskEstimate::from_trials(&den, 0),
            );
            let delta = match kind {
                ProbeKind::Weak { delta } | ProbeKind::Strong { delta, .. } => delta,
            };
            let meets_threshold = probe.probability >= 1.0 - delta;
            cells.push(SweepCell { n, m, probe, le, meets_threshold });
        }
    }
    Ok(cells)
}

/// One verified assertion inside a theorem report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub name: String,
    pub measured: f64,
    /// Human-readable statement of the asserted bound.
    pub bound: String,
    pub passed: bool,
    /// Set when the trial budget cannot resolve the bound (the measurement's
    /// uncertainty exceeds the tolerance it is checked against).
    pub insufficient_precision: bool,
}

impl TheoremCheck {
    fn band(name: &str, measured: f64, lo: f64, hi: f64, std_err: f64) -> Self {
        Self {
            name: name.to_string(),
            measured,
            bound: format!("in [{lo}, {hi}]"),
            passed: (lo..=hi).contains(&measured),
            insufficient_precision: 2.0 * std_err > (hi - lo) / 2.0,
        }
    }

    fn at_least(name: &str, measured: f64, threshold: f64, trials: usize) -> Self {
        Self {
            name: name.to_string(),
            measured,
            bound: format!(">= {threshold}"),
            passed: measured >= threshold,
            // resolving a 1-delta event needs at least 1/delta trials
            insufficient_precision: (trials as f64) * (1.0 - threshold) < 1.0,
        }
    }

    fn exactly(name: &str, measured: f64, expected: f64) -> Self {
        Self {
            name: name.to_string(),
            measured,
            bound: format!("= {expected}"),
            passed: measured == expected,
            insufficient_precision: false,
        }
    }

    fn equals_zero(name: &str, measured: f64, delta: f64, trials: usize) -> Self {
        Self {
            name: name.to_string(),
            measured,
            bound: "= 0".to_string(),
            passed: measured == 0.0,
            insufficient_precision: (trials as f64) * delta < 1.0,
        }
    }
}

/// The outcome of a fixed theorem-reproduction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub name: String,
    pub checks: Vec<TheoremCheck>,
    pub passed: bool,
    pub insufficient_precision: bool,
}

impl TheoremReport {
    fn from_checks(name: &str, checks: Vec<TheoremCheck>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        let insufficient_precision = checks.iter().any(|c| c.insufficient_precision);
        Self { name: name.to_string(), checks, passed, insufficient_precision }
    }
}

fn positive_transfer_pair() -> WorldPair {
    let mixture = World::Mixture(
        MixtureWorld::new(
            vec![
                (World::threshold(0.7).unwrap(), 0.5),
                (World::threshold(0.1).unwrap(), 0.5),
            ],
            MixtureDraw::PerDataset,
        )
        .unwrap(),
    );
    WorldPair::new(World::threshold(0.8).unwrap(), mixture)
}

/// Exact expected risk of the fitted max-zero threshold against `P_{z_eval}`
/// given the data came from `P_z` with `m` samples (`z <= z_eval`): the
/// asymptotic gap `z_eval - z` plus the mean fitted shortfall
/// `E[z - c] = (1 - (1-z)^(m+1)) / (m+1)`, from averaging `z/(k+1)` over the
/// binomial count of 0-labels.
fn conditional_mean_risk(z: f64, z_eval: f64, m: usize) -> f64 {
    (z_eval - z) + (1.0 - (1.0 - z).powi(m as i32 + 1)) / (m as f64 + 1.0)
}

/// Reproduce the positive-transfer construction: transfer helps on average
/// (efficiency 1.25) while the weak-improvement probability stays pinned at
/// one half by the mixture coin.
pub fn verify_theorem_positive_transfer(seed: Seed) -> Result<TheoremReport> {
    verify_theorem_positive_transfer_with_trials(seed, 1000)
}

pub fn verify_theorem_positive_transfer_with_trials(
    seed: Seed,
    trials: usize,
) -> Result<TheoremReport> {
    verify_theorem_positive_transfer_with(seed, trials, 10_000)
}

/// As above with a configurable out-of-distribution sample size; the
/// asserted values are asymptotic in `m`, so the checks are insensitive to
/// it at these scales.
pub fn verify_theorem_positive_transfer_with(
    seed: Seed,
    trials: usize,
    m: usize,
) -> Result<TheoremReport> {
    let pair = positive_transfer_pair();
    let learner = LearnerSpec::new(LearnerKind::MaxZeroThreshold);
    let mut checks = Vec::new();

    // (a) expected risk with the out-of-distribution data: 0.4 +/- 0.02
    let ood_err = expected_error(
        &ErrorSpec::new(pair.clone(), learner.clone(), DataPlan { n: 0, m })
            .with_trials(trials)
            .with_seed(seed),
    )?;
    checks.push(TheoremCheck::band(
        "expected risk with mixture data",
        ood_err.mean,
        0.38,
        0.42,
        ood_err.std_err,
    ));

    // (b) task-only (empty) arm is exactly the chance risk
    let base_err = expected_error(
        &ErrorSpec::new(pair.clone(), learner.clone(), DataPlan { n: 0, m: 0 })
            .with_trials(trials)
            .with_seed(seed),
    )?;
    checks.push(TheoremCheck::exactly("task-only expected risk", base_err.mean, 0.5));

    // (c) transfer efficiency 0.5 / 0.4 = 1.25
    let le = transfer_le(
        &learner,
        &pair,
        DataPlan { n: 0, m: 0 },
        DataPlan { n: 0, m },
        trials,
        EvalMode::ClosedForm,
        derive_seed(seed, 1),
    )?;
    checks.push(TheoremCheck::band("transfer efficiency", le.ratio, 1.19, 1.32, le.std_err));

    // (d) weak improvement probability is pinned at one half
    let weak = weak_ood_probability(&learner, &pair, 0, m, trials, derive_seed(seed, 2))?;
    let (lo, hi) = (0.5 - 3.0 * weak.std_err, 0.5 + 3.0 * weak.std_err);
    checks.push(TheoremCheck {
        name: "weak improvement probability".to_string(),
        measured: weak.probability,
        bound: format!("within 3 standard errors of 0.5 ([{lo:.4}, {hi:.4}])"),
        passed: weak.probability >= lo && weak.probability <= hi,
        insufficient_precision: trials < 100,
    });

    // (e) conditioning on the mixture coin splits the trials into two
    // populations whose mean risks match the finite-sample values
    let World::Mixture(mix) = &pair.data_world else { unreachable!() };
    let per_trial = run_trials(trials, seed, |_, trial_seed| {
        let h = crate::risk::fit_trial(&learner, &pair, &DataPlan { n: 0, m }, trial_seed)?;
        let r = risk_auto(&h, &pair.eval_world, trial_eval_seed(trial_seed))?;
        // the out-of-distribution draw is substream 1 of the trial seed
        let component = mix.component_index(derive_seed(trial_seed, 1));
        Ok((component, r))
    })?;
    for (component, z) in [(0usize, 0.7), (1usize, 0.1)] {
        let risks: Vec<f64> =
            per_trial.iter().filter(|(c, _)| *c == component).map(|(_, r)| *r).collect();
        let (mean, se) = crate::risk::mean_and_se(&risks);
        let expect = conditional_mean_risk(z, 0.8, m);
        checks.push(TheoremCheck {
            name: format!("conditional risk mode (component z={z})"),
            measured: mean,
            bound: format!("within 3 standard errors of {expect:.6}"),
            passed: (mean - expect).abs() <= 3.0 * se,
            insufficient_precision: risks.len() < 30,
        });
    }

    Ok(TheoremReport::from_checks("positive-transfer-without-weak-learning", checks))
}

/// Reproduce the weak-without-strong construction: data from `P_0.6` weakly
/// improves every evaluation threshold in `[0.7, 1.0]`, yet the risk at
/// `z = 0.9` never comes within 0.01 of optimal no matter how much data
/// arrives.  A near-in-distribution control (`z = 0.61`) is strongly
/// learnable at a looser tolerance.
pub fn verify_theorem_weak_meta(seed: Seed) -> Result<TheoremReport> {
    verify_theorem_weak_meta_with_trials(seed, 1000)
}

pub fn verify_theorem_weak_meta_with_trials(seed: Seed, trials: usize) -> Result<TheoremReport> {
    let learner = LearnerSpec::new(LearnerKind::MaxZeroThreshold);
    let data_world = World::threshold(0.6).unwrap();
    let mut checks = Vec::new();
    let mut stream = 0u64;
    let mut next_seed = || {
        stream += 1;
        derive_seed(seed, stream)
    };

    for z in [0.7, 0.8, 0.9, 1.0] {
        let pair = WorldPair::new(World::threshold(z).unwrap(), data_world.clone());
        let weak = weak_ood_probability(&learner, &pair, 0, 1000, trials, next_seed())?;
        checks.push(TheoremCheck::at_least(
            &format!("weak probability at z={z}, m=1000"),
            weak.probability,
            0.99,
            trials,
        ));
    }

    let pair_09 = WorldPair::new(World::threshold(0.9).unwrap(), data_world.clone());
    for m in [100, 1000, 10_000] {
        let strong = strong_ood_probability(&learner, &pair_09, 0, m, 0.01, trials, next_seed())?;
        checks.push(TheoremCheck::equals_zero(
            &format!("strong probability at z=0.9, eps=0.01, m={m}"),
            strong.probability,
            0.01,
            trials,
        ));
    }

    let control = WorldPair::new(World::threshold(0.61).unwrap(), data_world);
    let strong = strong_ood_probability(&learner, &control, 0, 1000, 0.05, trials, next_seed())?;
    checks.push(TheoremCheck::at_least(
        "negative control: strong probability at z=0.61, eps=0.05",
        strong.probability,
        0.99,
        trials,
    ));

    Ok(TheoremReport::from_checks("weak-without-strong-learning", checks))
}
