//! The concrete learners the worlds are probed with: the max-zero-threshold
//! classifier, the chance learner, and the two least-squares estimators of
//! the chain parameter.
//!
//! `fit` is a deterministic function of its input data; the chance hypothesis
//! defers its coin flips to the evaluation seed stream.

use serde::{Deserialize, Serialize};

use crate::domain::{Action, DataSet, HyperParams, Hypothesis, HypothesisKind, Query, Sample};
use crate::error::Error;
use crate::rng::Seed;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LearnerKind {
    /// Threshold at the largest 0-labeled query; `Threshold(0)` when the data
    /// has no 0-labels; chance on empty data.
    MaxZeroThreshold,
    /// Always the chance hypothesis.
    Chance,
    /// Least-squares slope of action on query over the whole data set.
    OlsDirect,
    /// Chained slope: the a-link slope over task-agnostic samples times the
    /// b-link slope over task-tagged samples.  Degenerates to the direct
    /// regression when the data carries no a-link samples.
    OlsChain,
}

impl LearnerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::MaxZeroThreshold => "max-zero-threshold",
            LearnerKind::Chance => "chance",
            LearnerKind::OlsDirect => "ols-direct",
            LearnerKind::OlsChain => "ols-chain",
        }
    }
}

/// A learner plus its hyperparameter schedule.  Both arms of any
/// learning-efficiency ratio must reuse one `LearnerSpec` so the schedule is
/// shared by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub hyper: HyperParams,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        Self { kind, hyper: HyperParams::default() }
    }
}

/// Least-squares slope through the origin; `None` when no sample has a
/// non-zero regressor.
fn ols_slope(pairs: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in pairs {
        sxy += x * y;
        sxx += x * x;
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

fn value_pairs<'a>(
    samples: impl Iterator<Item = &'a Sample> + 'a,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    samples.filter_map(|s| s.action.as_value().map(|y| (s.query.value, y)))
}

/// Fit a hypothesis to a data set.
pub fn fit(spec: &LearnerSpec, data: &DataSet) -> Result<Hypothesis> {
    match spec.kind {
        LearnerKind::Chance => Ok(Hypothesis::new(HypothesisKind::Chance, "chance")),
        LearnerKind::MaxZeroThreshold => {
            if data.is_empty() {
                // with nothing seen, the hypothesis flips a coin per query
                return Ok(Hypothesis::new(
                    HypothesisKind::Chance,
                    "max-zero-threshold(n=0)",
                ));
            }
            let c = data
                .samples
                .iter()
                .filter(|s| s.action.as_label() == Some(0))
                .map(|s| s.query.value)
                .fold(f64::NEG_INFINITY, f64::max);
            let c = if c.is_finite() { c } else { 0.0 };
            Ok(Hypothesis::new(
                HypothesisKind::Threshold(c),
                format!("max-zero-threshold(n={})", data.len()),
            ))
        }
        LearnerKind::OlsDirect => {
            let slope = ols_slope(value_pairs(data.samples.iter())).ok_or_else(|| {
                Error::InsufficientData("direct regression needs a usable sample".into())
            })?;
            Ok(Hypothesis::new(
                HypothesisKind::LinearEstimate(slope),
                format!("ols-direct(n={})", data.len()),
            ))
        }
        LearnerKind::OlsChain => {
            let has_a_link = data
                .samples
                .iter()
                .any(|s| s.query.task_hint.is_none() && s.action.as_value().is_some());
            if !has_a_link {
                let slope = ols_slope(value_pairs(data.samples.iter())).ok_or_else(|| {
                    Error::InsufficientData("chain regression needs a usable sample".into())
                })?;
                return Ok(Hypothesis::new(
                    HypothesisKind::LinearEstimate(slope),
                    format!("ols-chain(degenerate,n={})", data.len()),
                ));
            }
            let a_hat = ols_slope(value_pairs(
                data.samples.iter().filter(|s| s.query.task_hint.is_none()),
            ))
            .ok_or_else(|| Error::InsufficientData("a-link regression is degenerate".into()))?;
            let b_hat = ols_slope(value_pairs(
                data.samples.iter().filter(|s| s.query.task_hint.is_some()),
            ))
            .ok_or_else(|| {
                Error::InsufficientData("b-link regression needs a task-tagged sample".into())
            })?;
            Ok(Hypothesis::new(
                HypothesisKind::LinearEstimate(a_hat * b_hat),
                format!("ols-chain(n={})", data.len()),
            ))
        }
    }
}

/// Map a query to an action with the given hypothesis; deterministic given
/// the seed (only the chance hypothesis consumes it).
pub fn predict(h: &Hypothesis, q: &Query, seed: Seed) -> Action {
    h.predict(q, seed)
}
