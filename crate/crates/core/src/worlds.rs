//! Synthetic distribution families and stream schedulers.
//!
//! Three families cover every construction the metric family is exercised
//! on: the threshold family `P_z` on the unit interval (uniform queries
//! labeled 0 iff `x <= z`, Bayes risk 0), per-dataset mixtures of worlds,
//! and a two-stage linear chain `x -> u -> y` with `tau = a*b` used by the
//! transfer-benefit ratio.
//!
//! Worlds are immutable and sampling takes an explicit seed, so concurrent
//! sampling with distinct seeds is race-free by construction.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{
    Action, DataSet, DataStream, Hypothesis, HypothesisKind, Query, Sample, TaskId,
};
use crate::error::Error;
use crate::rng::{derive_seed, Seed, SplitMix64};
use crate::Result;

/// Threshold distribution `P_z`: `X ~ U([0,1])`, `Y = I(x > z)`.
/// The boundary `x = z` labels 0 (the `<=` convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdWorld {
    pub z: f64,
}

impl ThresholdWorld {
    pub fn new(z: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::InvalidParameter(format!("threshold z={z} outside [0,1]")));
        }
        Ok(Self { z })
    }

    fn sample_into(&self, rng: &mut SplitMix64, n: usize, out: &mut Vec<Sample>) {
        for _ in 0..n {
            let x = rng.next_f64();
            out.push(Sample::classify(x, x > self.z));
        }
    }
}

/// How a mixture allocates samples to components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MixtureDraw {
    /// One component coin per data-set draw: the entire set comes from a
    /// single component.  This is the default and matches the construction
    /// used by the positive-transfer argument.
    #[default]
    PerDataset,
    /// Independent component coin per sample.
    PerSample,
}

/// A weighted mixture of worlds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureWorld {
    components: Vec<(World, f64)>,
    pub draw_mode: MixtureDraw,
}

impl MixtureWorld {
    pub fn new(components: Vec<(World, f64)>, draw_mode: MixtureDraw) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        let mut sum = 0.0;
        for (_, w) in &components {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::InvalidParameter(format!("mixture weight {w} invalid")));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {sum}")));
        }
        Ok(Self { components, draw_mode })
    }

    pub fn components(&self) -> &[(World, f64)] {
        &self.components
    }

    fn pick(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, (_, w)) in self.components.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.components.len() - 1
    }

    /// The component index a per-dataset draw with this seed selects.
    /// Consumes the same leading coin as [`sample_dataset`], so probers can
    /// condition trial populations on the realized mixture component.
    pub fn component_index(&self, seed: Seed) -> usize {
        self.pick(SplitMix64::new(seed).next_f64())
    }
}

/// Two-stage linear chain: `x ~ N(0, covariate_sd^2)`, `u = a*x + e1`,
/// `y = b*u + e2`, with `e1, e2 ~ N(0, noise_sd^2)` independent.
///
/// The world's own (in-distribution) samples are the `(x, y)` pairs; the
/// out-of-distribution view exposes only the shared first stage as `(x, u)`
/// pairs ([`LinearChainWorld::sample_a_link`]).  Chain learners additionally
/// see the task's second stage as `(u, y)` pairs; link roles ride on the
/// sample task hint (a-link observations are task-agnostic, b-link
/// observations carry the task id).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearChainWorld {
    pub a: f64,
    pub b: f64,
    pub noise_sd: f64,
    pub covariate_sd: f64,
}

impl LinearChainWorld {
    pub fn new(a: f64, b: f64, noise_sd: f64, covariate_sd: f64) -> Result<Self> {
        if noise_sd < 0.0 || covariate_sd < 0.0 {
            return Err(Error::InvalidParameter("negative standard deviation".into()));
        }
        Ok(Self { a, b, noise_sd, covariate_sd })
    }

    /// The derived parameter of interest.
    pub fn tau(&self) -> f64 {
        self.a * self.b
    }

    fn draw_chain(&self, rng: &mut SplitMix64) -> (f64, f64, f64) {
        let x = rng.next_normal() * self.covariate_sd;
        let u = self.a * x + rng.next_normal() * self.noise_sd;
        let y = self.b * u + rng.next_normal() * self.noise_sd;
        (x, u, y)
    }

    fn sample_into(&self, rng: &mut SplitMix64, n: usize, out: &mut Vec<Sample>) {
        for _ in 0..n {
            let (x, _, y) = self.draw_chain(rng);
            out.push(Sample::estimate(x, y));
        }
    }

    /// Out-of-distribution view: `(x, u)` observations of the shared first
    /// stage only.
    pub fn sample_a_link(&self, n: usize, seed: Seed) -> DataSet {
        let mut rng = SplitMix64::new(seed);
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let x = rng.next_normal() * self.covariate_sd;
            let u = self.a * x + rng.next_normal() * self.noise_sd;
            samples.push(Sample::estimate(x, u));
        }
        DataSet::new(samples, None, format!("{self}[a-link n={n}]"))
    }

    /// Paired learner views over one set of underlying draws: `n_task` full
    /// chain realizations plus `n_ood` a-link realizations.
    ///
    /// `direct` holds the task `(x, y)` pairs.  `chain` holds the task
    /// `(u, y)` b-link pairs (tagged with `task`) followed by the pooled
    /// task + out-of-distribution `(x, u)` a-link pairs (untagged).  With
    /// `n_ood = 0` there is nothing to chain through, so `chain` degenerates
    /// to the direct view and the two estimators coincide.
    pub fn sample_chain_views(
        &self,
        task: TaskId,
        n_task: usize,
        n_ood: usize,
        seed: Seed,
    ) -> ChainViews {
        let mut rng = SplitMix64::new(seed);
        let mut direct = Vec::with_capacity(n_task);
        let mut b_link = Vec::with_capacity(n_task);
        let mut a_link = Vec::with_capacity(n_task + n_ood);
        for _ in 0..n_task {
            let (x, u, y) = self.draw_chain(&mut rng);
            direct.push(Sample::new(Query::with_hint(x, task), Action::Value(y)));
            b_link.push(Sample::new(Query::with_hint(u, task), Action::Value(y)));
            a_link.push(Sample::estimate(x, u));
        }
        for _ in 0..n_ood {
            let x = rng.next_normal() * self.covariate_sd;
            let u = self.a * x + rng.next_normal() * self.noise_sd;
            a_link.push(Sample::estimate(x, u));
        }
        let direct = DataSet::new(direct, Some(task), format!("{self}[direct n={n_task}]"));
        let chain = if n_ood == 0 {
            let mut d = direct.clone();
            d.name = format!("{self}[chain degenerate n={n_task}]");
            d
        } else {
            let mut samples = b_link;
            samples.extend(a_link);
            DataSet::new(samples, Some(task), format!("{self}[chain n={n_task}+{n_ood}]"))
        };
        ChainViews { direct, chain }
    }
}

impl fmt::Display for LinearChainWorld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "chain(a={},b={},sd={},cov={})",
            self.a, self.b, self.noise_sd, self.covariate_sd
        )
    }
}

/// The two learner views produced by one set of chain draws.
#[derive(Debug, Clone)]
pub struct ChainViews {
    pub direct: DataSet,
    pub chain: DataSet,
}

/// A synthetic world: a named sampler with (where available) closed-form
/// hypothesis risk and known Bayes risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum World {
    Threshold(ThresholdWorld),
    Mixture(MixtureWorld),
    LinearChain(LinearChainWorld),
}

impl World {
    pub fn threshold(z: f64) -> Result<Self> {
        Ok(World::Threshold(ThresholdWorld::new(z)?))
    }

    fn sample_into(&self, rng: &mut SplitMix64, n: usize, out: &mut Vec<Sample>) {
        match self {
            World::Threshold(w) => w.sample_into(rng, n, out),
            World::LinearChain(w) => w.sample_into(rng, n, out),
            World::Mixture(m) => match m.draw_mode {
                MixtureDraw::PerDataset => {
                    let idx = m.pick(rng.next_f64());
                    m.components()[idx].0.sample_into(rng, n, out);
                }
                MixtureDraw::PerSample => {
                    for _ in 0..n {
                        let idx = m.pick(rng.next_f64());
                        m.components()[idx].0.sample_into(rng, 1, out);
                    }
                }
            },
        }
    }
}

// `Display` strings feed data-set provenance names.
impl fmt::Display for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            World::Threshold(w) => write!(f, "P(z={})", w.z),
            World::LinearChain(w) => write!(f, "{w}"),
            World::Mixture(m) => {
                write!(f, "mix[")?;
                for (i, (w, p)) in m.components().iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{w}:{p}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// A pair of distributions: what queries are evaluated against versus what
/// the training data is sampled from.  The two may be entirely unrelated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldPair {
    pub eval_world: World,
    pub data_world: World,
}

impl WorldPair {
    pub fn new(eval_world: World, data_world: World) -> Self {
        Self { eval_world, data_world }
    }

    /// In-distribution pair: data drawn from the evaluation distribution.
    pub fn in_distribution(world: World) -> Self {
        Self { eval_world: world.clone(), data_world: world }
    }
}

/// One batch of a stream schedule: `count` samples of `world` tagged `task`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleBatch {
    pub task: TaskId,
    pub world: World,
    pub count: usize,
}

/// An ordered plan of task batches for continual scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSchedule {
    batches: Vec<ScheduleBatch>,
}

impl StreamSchedule {
    pub fn new(batches: Vec<ScheduleBatch>) -> Result<Self> {
        if batches.is_empty() {
            return Err(Error::EmptySchedule);
        }
        if batches.iter().any(|b| b.count == 0) {
            return Err(Error::InvalidParameter("batch counts must be positive".into()));
        }
        Ok(Self { batches })
    }

    pub fn batches(&self) -> &[ScheduleBatch] {
        &self.batches
    }

    /// Distinct tasks in first-appearance order.
    pub fn tasks(&self) -> Vec<TaskId> {
        let mut seen = Vec::new();
        for b in &self.batches {
            if !seen.contains(&b.task) {
                seen.push(b.task);
            }
        }
        seen
    }

    /// The world evaluated against for `task`: the world of its first batch.
    pub fn eval_world(&self, task: TaskId) -> Result<&World> {
        self.batches
            .iter()
            .find(|b| b.task == task)
            .map(|b| &b.world)
            .ok_or(Error::TaskNotInStream(task))
    }
}

/// Draw `n` iid samples from `world`.  For per-dataset mixtures the component
/// coin is flipped once and the entire set comes from that component.
/// Deterministic: identical `(world, n, seed)` yields identical samples.
pub fn sample_dataset(world: &World, n: usize, seed: Seed) -> DataSet {
    let mut rng = SplitMix64::new(seed);
    let mut samples = Vec::with_capacity(n);
    world.sample_into(&mut rng, n, &mut samples);
    DataSet::new(samples, None, format!("{world}[n={n}]"))
}

/// Draw `n` fresh evaluation samples (always from the evaluation
/// distribution of a pair).
pub fn sample_eval_batch(world: &World, n: usize, seed: Seed) -> Vec<Sample> {
    let mut rng = SplitMix64::new(seed);
    let mut samples = Vec::with_capacity(n);
    world.sample_into(&mut rng, n, &mut samples);
    samples
}

/// Exact Bayes risk where the world supports a closed form.
///
/// Threshold worlds are realizable (0).  For the linear chain under squared
/// loss the optimal predictor of `y` from `x` is `tau * x`, leaving the
/// propagated noise `Var(b*e1 + e2) = (1 + b^2) * noise_sd^2`.
pub fn bayes_risk(world: &World) -> Result<f64> {
    match world {
        World::Threshold(_) => Ok(0.0),
        World::LinearChain(w) => Ok((1.0 + w.b * w.b) * w.noise_sd * w.noise_sd),
        World::Mixture(_) => Err(Error::Unsupported(
            "mixtures are data worlds; evaluation worlds are single components".into(),
        )),
    }
}

/// Exact 0-1 risk of a hypothesis against a threshold world: the measure of
/// the disagreement set with the optimal threshold rule at `z`.
pub fn closed_form_risk(h: &Hypothesis, world: &ThresholdWorld) -> Result<f64> {
    match h.kind {
        HypothesisKind::Threshold(c) => Ok((c - world.z).abs()),
        HypothesisKind::Chance => Ok(0.5),
        HypothesisKind::Constant(Action::Label(l)) => {
            Ok(if l == 1 { world.z } else { 1.0 - world.z })
        }
        _ => Err(Error::Unsupported(format!(
            "no closed-form threshold risk for {:?}",
            h.kind
        ))),
    }
}

/// Materialize a schedule into a stream: concatenated batches with bounds
/// recorded and every item tagged with its batch's task.  Batch `k` draws
/// from the substream `derive_seed(seed, k)`, so the stream is bit-identical
/// for a given `(schedule, seed)`.
pub fn make_stream(schedule: &StreamSchedule, seed: Seed) -> DataStream {
    let mut items = Vec::new();
    let mut bounds = Vec::with_capacity(schedule.batches().len());
    for (k, batch) in schedule.batches().iter().enumerate() {
        let ds = sample_dataset(&batch.world, batch.count, derive_seed(seed, k as u64));
        items.extend(ds.samples.into_iter().map(|s| (s, Some(batch.task))));
        bounds.push(items.len());
    }
    DataStream::new(items, bounds).expect("schedule batches are non-empty and ordered")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Hypothesis;

    fn p(z: f64) -> World {
        World::threshold(z).unwrap()
    }

    fn mix_07_01() -> World {
        World::Mixture(
            MixtureWorld::new(
                vec![(p(0.7), 0.5), (p(0.1), 0.5)],
                MixtureDraw::PerDataset,
            )
            .unwrap(),
        )
    }

    #[test]
    fn threshold_samples_are_realizable() {
        let ds = sample_dataset(&p(0.6), 10_000, 17);
        assert_eq!(ds.len(), 10_000);
        for s in &ds.samples {
            let want = u8::from(s.query.value > 0.6);
            assert_eq!(s.action.as_label().unwrap(), want);
        }
    }

    #[test]
    fn empty_draw_is_empty() {
        assert!(sample_dataset(&p(0.6), 0, 1).is_empty());
        assert!(sample_eval_batch(&p(0.8), 0, 1).is_empty());
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = sample_dataset(&mix_07_01(), 100, 33);
        let b = sample_dataset(&mix_07_01(), 100, 33);
        assert_eq!(a, b);
        let c = sample_dataset(&mix_07_01(), 100, 34);
        assert_ne!(a, c);
    }

    /// Per-dataset mixtures put the whole set in one regime: every sample is
    /// consistent with a single component threshold.
    #[test]
    fn mixture_per_dataset_is_internally_consistent() {
        let world = mix_07_01();
        for seed in 0..200u64 {
            let ds = sample_dataset(&world, 300, seed);
            let consistent_with = |z: f64| {
                ds.samples
                    .iter()
                    .all(|s| s.action.as_label().unwrap() == u8::from(s.query.value > z))
            };
            assert!(
                consistent_with(0.7) || consistent_with(0.1),
                "seed {seed} mixes regimes"
            );
        }
    }

    /// Over many seeds the component frequencies match the weights, and the
    /// advertised component index matches what sampling actually does.
    /// Per-sample mode draws the coin per item, so large sets mix regimes.
    #[test]
    fn mixture_per_sample_mixes_regimes() {
        let world = World::Mixture(
            MixtureWorld::new(
                vec![(p(0.7), 0.5), (p(0.1), 0.5)],
                MixtureDraw::PerSample,
            )
            .unwrap(),
        );
        let ds = sample_dataset(&world, 500, 3);
        let consistent_with = |z: f64| {
            ds.samples
                .iter()
                .all(|s| s.action.as_label().unwrap() == u8::from(s.query.value > z))
        };
        assert!(!consistent_with(0.7) && !consistent_with(0.1));
    }

    #[test]
    fn mixture_component_frequency_and_index_agree() {
        let World::Mixture(m) = mix_07_01() else { unreachable!() };
        let world = mix_07_01();
        let trials = 1000;
        let mut upper = 0;
        for seed in 0..trials {
            let ds = sample_dataset(&world, 1000, seed);
            let is_07 = ds
                .samples
                .iter()
                .all(|s| s.action.as_label().unwrap() == u8::from(s.query.value > 0.7));
            if is_07 {
                upper += 1;
                assert_eq!(m.component_index(seed), 0);
            } else {
                assert_eq!(m.component_index(seed), 1);
            }
        }
        let frac = upper as f64 / trials as f64;
        assert!((frac - 0.5).abs() < 0.05, "component fraction {frac}");
    }

    #[test]
    fn bayes_risks() {
        for z in [0.0, 0.3, 1.0] {
            assert_eq!(bayes_risk(&p(z)).unwrap(), 0.0);
        }
        assert!(matches!(bayes_risk(&mix_07_01()), Err(Error::Unsupported(_))));
        let chain = LinearChainWorld::new(1.0, 1.0, 0.5, 1.0).unwrap();
        let analytic = bayes_risk(&World::LinearChain(chain)).unwrap();
        assert!((analytic - 2.0 * 0.25).abs() < 1e-12);
    }

    /// Monte Carlo cross-check of the chain Bayes risk using the true-tau
    /// hypothesis.
    #[test]
    fn chain_bayes_risk_matches_monte_carlo() {
        let chain = LinearChainWorld::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let world = World::LinearChain(chain);
        let batch = sample_eval_batch(&world, 400_000, 5);
        let tau = chain.tau();
        let mse: f64 = batch
            .iter()
            .map(|s| {
                let y = s.action.as_value().unwrap();
                let e = y - tau * s.query.value;
                e * e
            })
            .sum::<f64>()
            / batch.len() as f64;
        let analytic = bayes_risk(&world).unwrap();
        assert!((mse - analytic).abs() < 0.02, "mc {mse} vs analytic {analytic}");
    }

    #[test]
    fn closed_form_risk_examples() {
        let h = |c| Hypothesis::new(HypothesisKind::Threshold(c), "test");
        let w = ThresholdWorld::new(0.8).unwrap();
        assert!((closed_form_risk(&h(0.1), &w).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(closed_form_risk(&h(0.8), &w).unwrap(), 0.0);
        assert!((closed_form_risk(&h(0.7), &w).unwrap() - 0.1).abs() < 1e-15);
        let chance = Hypothesis::new(HypothesisKind::Chance, "test");
        assert_eq!(closed_form_risk(&chance, &w).unwrap(), 0.5);
        let one = Hypothesis::new(HypothesisKind::Constant(Action::Label(1)), "test");
        let zero = Hypothesis::new(HypothesisKind::Constant(Action::Label(0)), "test");
        assert!((closed_form_risk(&one, &w).unwrap() - 0.8).abs() < 1e-15);
        assert!((closed_form_risk(&zero, &w).unwrap() - 0.2).abs() < 1e-15);
        let lin = Hypothesis::new(HypothesisKind::LinearEstimate(1.0), "test");
        assert!(closed_form_risk(&lin, &w).is_err());
    }

    /// Closed form vs a test-side Monte Carlo oracle over the full grid.
    #[test]
    fn closed_form_matches_monte_carlo_grid() {
        let eval_n = 100_000usize;
        for (i, &c) in [0.0, 0.25, 0.5, 0.75, 1.0].iter().enumerate() {
            for (j, &z) in [0.6, 0.7, 0.8, 0.9].iter().enumerate() {
                let w = ThresholdWorld::new(z).unwrap();
                let h = Hypothesis::new(HypothesisKind::Threshold(c), "grid");
                let exact = closed_form_risk(&h, &w).unwrap();
                let batch = sample_eval_batch(&p(z), eval_n, (i * 7 + j + 1) as u64);
                let mut err = 0.0;
                for s in &batch {
                    let pred = u8::from(s.query.value > c);
                    if pred != s.action.as_label().unwrap() {
                        err += 1.0;
                    }
                }
                let mc = err / eval_n as f64;
                let se = (mc * (1.0 - mc) / eval_n as f64).sqrt().max(1e-4);
                assert!(
                    (mc - exact).abs() <= 3.0 * se,
                    "c={c} z={z}: mc {mc} exact {exact} se {se}"
                );
            }
        }
    }

    #[test]
    fn chain_eval_batch_noiseless_recovers_tau() {
        let chain = LinearChainWorld::new(1.0, 1.0, 0.0, 1.0).unwrap();
        let batch = sample_eval_batch(&World::LinearChain(chain), 1000, 3);
        for s in &batch {
            if s.query.value.abs() > 1e-12 {
                let ratio = s.action.as_value().unwrap() / s.query.value;
                assert!((ratio - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn make_stream_layout_and_determinism() {
        let schedule = StreamSchedule::new(vec![
            ScheduleBatch { task: TaskId(0), world: p(0.7), count: 3 },
            ScheduleBatch { task: TaskId(1), world: p(0.9), count: 2 },
        ])
        .unwrap();
        let st = make_stream(&schedule, 8);
        assert_eq!(st.len(), 5);
        assert_eq!(st.batch_bounds(), &[3, 5]);
        for i in 0..3 {
            assert_eq!(st.task_at(i), Some(TaskId(0)));
        }
        for i in 3..5 {
            assert_eq!(st.task_at(i), Some(TaskId(1)));
        }
        assert_eq!(st, make_stream(&schedule, 8));

        let single = StreamSchedule::new(vec![ScheduleBatch {
            task: TaskId(0),
            world: p(0.7),
            count: 4,
        }])
        .unwrap();
        assert_eq!(make_stream(&single, 1).batch_bounds(), &[4]);
    }

    #[test]
    fn schedule_validation() {
        assert!(matches!(StreamSchedule::new(vec![]), Err(Error::EmptySchedule)));
        assert!(StreamSchedule::new(vec![ScheduleBatch {
            task: TaskId(0),
            world: p(0.5),
            count: 0,
        }])
        .is_err());
    }

    #[test]
    fn chain_views_share_draws_and_degenerate_without_ood() {
        let chain = LinearChainWorld::new(2.0, 0.5, 0.0, 1.0).unwrap();
        let views = chain.sample_chain_views(TaskId(0), 10, 5, 21);
        assert_eq!(views.direct.len(), 10);
        assert_eq!(views.chain.len(), 10 + 10 + 5);
        // b-link samples carry the task, a-link samples do not
        assert!(views.chain.samples[..10].iter().all(|s| s.query.task_hint.is_some()));
        assert!(views.chain.samples[10..].iter().all(|s| s.query.task_hint.is_none()));

        let degenerate = chain.sample_chain_views(TaskId(0), 10, 0, 21);
        assert_eq!(degenerate.chain.samples, degenerate.direct.samples);
    }
}
