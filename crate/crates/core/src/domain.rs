//! Domain types shared by every other module: tasks, queries, actions, data
//! sets, streams, hypotheses — plus the data-set algebra (amalgamation and
//! task slicing) the metric family is built from.
//!
//! All types here are immutable after construction and the operations are
//! pure functions, so everything is safe to share across threads.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::{Seed, SplitMix64};
use crate::Result;

/// Dense task identifier (`0..T-1` within an environment).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// A query: a point of the query space plus an optional task association.
/// A `None` hint marks a task-agnostic query and is legal everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub value: f64,
    pub task_hint: Option<TaskId>,
}

impl Query {
    pub fn new(value: f64) -> Self {
        Self { value, task_hint: None }
    }

    pub fn with_hint(value: f64, task: TaskId) -> Self {
        Self { value, task_hint: Some(task) }
    }
}

/// An action: a binary label in classification worlds, a real value in
/// estimation worlds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Action {
    /// Binary classification label, exactly 0 or 1.
    Label(u8),
    /// Real-valued estimate.
    Value(f64),
}

impl Action {
    /// Label constructor from a boolean (`false` = 0, `true` = 1).
    pub fn label(one: bool) -> Self {
        Action::Label(u8::from(one))
    }

    pub fn as_label(&self) -> Option<u8> {
        match self {
            Action::Label(b) => Some(*b),
            Action::Value(_) => None,
        }
    }

    pub fn as_value(&self) -> Option<f64> {
        match self {
            Action::Value(v) => Some(*v),
            Action::Label(_) => None,
        }
    }
}

/// A labeled data sample: query-action pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub query: Query,
    pub action: Action,
}

impl Sample {
    pub fn new(query: Query, action: Action) -> Self {
        Self { query, action }
    }

    /// Classification sample with no task hint.
    pub fn classify(x: f64, label_one: bool) -> Self {
        Self { query: Query::new(x), action: Action::label(label_one) }
    }

    /// Estimation sample with no task hint.
    pub fn estimate(x: f64, y: f64) -> Self {
        Self { query: Query::new(x), action: Action::Value(y) }
    }
}

/// An ordered data set with an optional task descriptor.  The empty data set
/// is the base set `S_0`.  Duplicates are allowed (copy-per-task convention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub samples: Vec<Sample>,
    pub descriptor: Option<TaskId>,
    pub name: String,
}

impl DataSet {
    pub fn new(samples: Vec<Sample>, descriptor: Option<TaskId>, name: impl Into<String>) -> Self {
        Self { samples, descriptor, name: name.into() }
    }

    /// The empty base data set `S_0`.
    pub fn base() -> Self {
        Self { samples: Vec::new(), descriptor: None, name: "S_0".into() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A stream of samples with optional per-item task tags and recorded batch
/// boundaries.  `batch_bounds[k]` is the index one past the end of batch `k`,
/// so bounds are strictly increasing and the last equals the item count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataStream {
    items: Vec<(Sample, Option<TaskId>)>,
    batch_bounds: Vec<usize>,
}

impl DataStream {
    pub fn new(items: Vec<(Sample, Option<TaskId>)>, batch_bounds: Vec<usize>) -> Result<Self> {
        let mut prev = 0usize;
        for &b in &batch_bounds {
            if b <= prev {
                return Err(Error::InvalidParameter(format!(
                    "batch_bounds must be strictly increasing, got {batch_bounds:?}"
                )));
            }
            prev = b;
        }
        if let Some(&last) = batch_bounds.last() {
            if last != items.len() {
                return Err(Error::InvalidParameter(format!(
                    "last batch bound {last} != item count {}",
                    items.len()
                )));
            }
        } else if !items.is_empty() {
            return Err(Error::InvalidParameter(
                "non-empty stream requires batch bounds".into(),
            ));
        }
        Ok(Self { items, batch_bounds })
    }

    pub fn items(&self) -> &[(Sample, Option<TaskId>)] {
        &self.items
    }

    pub fn batch_bounds(&self) -> &[usize] {
        &self.batch_bounds
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Task tag of the item at `index`.
    pub fn task_at(&self, index: usize) -> Option<TaskId> {
        self.items[index].1
    }

    /// The full stream as one data set.
    pub fn as_dataset(&self, name: impl Into<String>) -> DataSet {
        DataSet::new(self.items.iter().map(|(s, _)| *s).collect(), None, name)
    }

    /// Prefix of the first `upto` items as a data set.
    pub fn prefix(&self, upto: usize, name: impl Into<String>) -> DataSet {
        DataSet::new(
            self.items[..upto].iter().map(|(s, _)| *s).collect(),
            None,
            name,
        )
    }
}

/// Hypothesis kinds produced by the learners in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HypothesisKind {
    /// Classify `x` as 0 iff `x <= c`.
    Threshold(f64),
    /// Fair coin per query, randomness from the evaluation seed stream.
    Chance,
    /// Constant action regardless of query.
    Constant(Action),
    /// Linear estimate `y = slope * x`.
    LinearEstimate(f64),
}

/// A learned hypothesis with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub kind: HypothesisKind,
    pub provenance: String,
}

impl Hypothesis {
    pub fn new(kind: HypothesisKind, provenance: impl Into<String>) -> Self {
        Self { kind, provenance: provenance.into() }
    }

    /// Map a query to an action.  `Chance` draws a fair coin from `seed`, so
    /// prediction is deterministic given the seed.
    pub fn predict(&self, query: &Query, seed: Seed) -> Action {
        match self.kind {
            HypothesisKind::Threshold(c) => Action::label(query.value > c),
            HypothesisKind::Chance => {
                Action::label(SplitMix64::new(seed).next_bool())
            }
            HypothesisKind::Constant(a) => a,
            HypothesisKind::LinearEstimate(slope) => Action::Value(slope * query.value),
        }
    }
}

/// Opaque hyperparameter schedule `n -> settings`.  The learners here consume
/// none of it; the type exists so both arms of any learning-efficiency ratio
/// demonstrably share one schedule.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperParams {
    pub schedule: BTreeMap<usize, BTreeMap<String, String>>,
}

/// Non-negative task weights summing to one; optionally tagged with the time
/// index of a lifelong schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: BTreeMap<TaskId, f64>,
    pub time_index: Option<u64>,
}

/// Tolerance on the simplex constraint `|sum - 1| <= WEIGHT_SUM_TOL`.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

impl WeightVector {
    pub fn new(weights: BTreeMap<TaskId, f64>) -> Result<Self> {
        Self::validate_entries(&weights)?;
        let sum: f64 = weights.values().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { weights, time_index: None })
    }

    /// A slice of a lifelong weight schedule; entries must be non-negative but
    /// the slice need not sum to one (the whole schedule must).
    pub fn time_slice(weights: BTreeMap<TaskId, f64>, u: u64) -> Result<Self> {
        Self::validate_entries(&weights)?;
        Ok(Self { weights, time_index: Some(u) })
    }

    fn validate_entries(weights: &BTreeMap<TaskId, f64>) -> Result<()> {
        for (t, &w) in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidWeights(format!("weight for {t} is {w}")));
            }
        }
        Ok(())
    }

    pub fn uniform(tasks: &[TaskId]) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::InvalidWeights("no tasks".into()));
        }
        let w = 1.0 / tasks.len() as f64;
        Self::new(tasks.iter().map(|&t| (t, w)).collect())
    }

    /// All weight on one task.
    pub fn degenerate(task: TaskId) -> Self {
        Self {
            weights: BTreeMap::from([(task, 1.0)]),
            time_index: None,
        }
    }

    pub fn get(&self, task: TaskId) -> f64 {
        self.weights.get(&task).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (TaskId, f64)> + '_ {
        self.weights.iter().map(|(&t, &w)| (t, w))
    }

    pub fn tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.weights.keys().copied()
    }

    pub fn sum(&self) -> f64 {
        self.weights.values().sum()
    }
}

/// Concatenate data sets in order into one amalgamated set.  An empty list
/// yields the base set `S_0`.  Duplicate inputs are allowed.
pub fn amalgamate(datasets: &[DataSet]) -> DataSet {
    if datasets.is_empty() {
        return DataSet::base();
    }
    let samples = datasets
        .iter()
        .flat_map(|d| d.samples.iter().copied())
        .collect();
    let name = format!(
        "amalgam({})",
        datasets.iter().map(|d| d.name.as_str()).collect::<Vec<_>>().join("+")
    );
    DataSet::new(samples, None, name)
}

/// All items at positions up to and including the last item of task `t`
/// (the prefix `S^{<t}`).  With `strict` set, any task-agnostic item inside
/// that prefix is an error instead of being silently included.
pub fn slice_up_to_task(stream: &DataStream, t: TaskId, strict: bool) -> Result<DataSet> {
    let last = stream
        .items()
        .iter()
        .rposition(|(_, tag)| *tag == Some(t))
        .ok_or(Error::TaskNotInStream(t))?;
    if strict {
        if let Some(position) = stream.items()[..=last].iter().position(|(_, tag)| tag.is_none()) {
            return Err(Error::TaskAgnosticStream { position });
        }
    }
    Ok(DataSet::new(
        stream.items()[..=last].iter().map(|(s, _)| *s).collect(),
        None,
        format!("S^{{<{t}}}"),
    ))
}

/// Items of task `t` only, optionally restricted to positions `<= upto`
/// (the task slice `S^j_{<i}`).
pub fn slice_task_only(stream: &DataStream, t: TaskId, upto: Option<usize>) -> Result<DataSet> {
    if !stream.items().iter().any(|(_, tag)| *tag == Some(t)) {
        return Err(Error::TaskNotInStream(t));
    }
    let cut = upto.map_or(stream.len(), |i| (i + 1).min(stream.len()));
    let samples = stream.items()[..cut]
        .iter()
        .filter(|(_, tag)| *tag == Some(t))
        .map(|(s, _)| *s)
        .collect();
    Ok(DataSet::new(samples, Some(t), format!("S^{t}")))
}
