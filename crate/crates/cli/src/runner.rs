//! Experiment execution: turn a parsed config into result documents and
//! flat CSV rows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use oodle_core::metrics::{
    cl_accuracy, cl_backward_transfer, cl_forward_transfer, compute_lifelong_curves,
    compute_task_grid, continual_les, lifelong_verdict, multitask_les,
    performance_maintenance, performance_recovery, sample_efficiency, ste_ratio,
    transfer_benefit_ratio, transfer_le, weighted_verdict, ContinualLes, LEValue,
    LifelongCurves, MetricReport, RawAndRecast, RecoveryResult, TaskSetup, TbrResult, Verdict,
};
use oodle_core::probe::{
    sweep, verify_theorem_positive_transfer_with_trials, verify_theorem_weak_meta_with_trials,
    ProbeKind, SweepCell, TheoremReport,
};
use oodle_core::risk::{expected_error, DataPlan, ErrorSpec, RiskEstimate};
use oodle_core::worlds::ScheduleBatch;
use oodle_core::{Error as CoreError, LinearChainWorld, StreamSchedule, TaskId};

use crate::config::{ExperimentConfig, ExperimentKind, PlanConfig};

/// Anything that stops a run, mapped to process exit codes in `main`.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2: the config failed to parse or validate.
    Config(String),
    /// Exit 3: a theorem verification ran but did not pass.
    VerificationFailed(String),
    /// Exit 1: IO or execution failure.
    Run(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::VerificationFailed(name) => write!(f, "verification failed: {name}"),
            CliError::Run(msg) => write!(f, "run error: {msg}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Run(e.to_string())
    }
}

fn config_err(msg: String) -> CliError {
    CliError::Config(msg)
}

/// A lifelong time slice outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LifelongSlice {
    pub u: u64,
    pub per_task: BTreeMap<TaskId, LEValue>,
}

/// Per-task lifelong metric values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LifelongTaskMetrics {
    pub maintenance: Option<f64>,
    /// Present when the task occupies the stream's final position and never
    /// exits, which leaves maintenance undefined.
    pub maintenance_note: Option<String>,
    pub ste_ratio: f64,
    pub sample_efficiency: f64,
}

/// Everything a run can produce, in one JSON-serializable document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ResultsDoc {
    Risk {
        estimate: RiskEstimate,
        n: usize,
        m: usize,
    },
    Efficiency {
        value: LEValue,
        verdict: Verdict,
        n: usize,
        m: usize,
    },
    Weighted {
        report: MetricReport,
    },
    Continual {
        per_task: BTreeMap<TaskId, ContinualLes>,
        report: MetricReport,
    },
    Lifelong {
        slices: Vec<LifelongSlice>,
        combined_log: f64,
        verdict: Verdict,
    },
    Probe {
        cell: SweepCell,
    },
    Sweep {
        cells: Vec<SweepCell>,
    },
    Theorem {
        report: TheoremReport,
    },
    Tbr {
        result: TbrResult,
    },
    ClMetrics {
        accuracy: RawAndRecast,
        backward_transfer: RawAndRecast,
        forward_transfer: RawAndRecast,
    },
    LifelongMetrics {
        recovery: Option<RecoveryResult>,
        recovery_note: Option<String>,
        per_task: BTreeMap<TaskId, LifelongTaskMetrics>,
        curves: LifelongCurves,
    },
}

/// A named plot series: `(name, column header, (x, y) points)`.
pub type PlotSeries = (String, String, Vec<(f64, f64)>);

/// One flat CSV row; optional cells print empty.
#[derive(Debug, Clone, Default)]
pub struct CsvRow {
    pub experiment: String,
    pub task_id: Option<u32>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub trials: usize,
    pub err_s_mean: Option<f64>,
    pub err_s_se: Option<f64>,
    pub err_sp_mean: Option<f64>,
    pub err_sp_se: Option<f64>,
    pub le: Option<f64>,
    pub log_le: Option<f64>,
    pub verdict: Option<String>,
    pub seed: u64,
}

fn verdict_str(v: Verdict) -> String {
    match v {
        Verdict::Learned => "learned".to_string(),
        Verdict::NotLearned => "not-learned".to_string(),
    }
}

fn le_row(experiment: &str, le: &LEValue, trials: usize, seed: u64) -> CsvRow {
    CsvRow {
        experiment: experiment.to_string(),
        trials,
        err_s_mean: Some(le.numerator.mean),
        err_s_se: Some(le.numerator.std_err),
        err_sp_mean: Some(le.denominator.mean),
        err_sp_se: Some(le.denominator.std_err),
        le: Some(le.ratio),
        log_le: Some(le.log_ratio),
        verdict: Some(if le.log_ratio > 0.0 {
            "learned".to_string()
        } else {
            "not-learned".to_string()
        }),
        seed,
        ..Default::default()
    }
}

/// Execute one experiment.  The caller decides the effective seed and trial
/// count (flag overrides applied) and owns the rayon pool.
pub fn execute(config: &ExperimentConfig, seed: u64, trials: usize) -> Result<ResultsDoc, CliError> {
    let eval_mode = config.eval_mode();
    match config.kind {
        ExperimentKind::Risk => {
            let spec = ErrorSpec {
                world_pair: config.world_pair().map_err(config_err)?,
                learner: config.learner_spec().map_err(config_err)?,
                plan: config.plan().map_err(config_err)?,
                trials,
                eval_mode,
                master_seed: seed,
                excess: config.excess,
            };
            let (n, m) = (spec.plan.n, spec.plan.m);
            Ok(ResultsDoc::Risk { estimate: expected_error(&spec)?, n, m })
        }
        ExperimentKind::Le | ExperimentKind::Transfer => {
            let pair = config.world_pair().map_err(config_err)?;
            let learner = config.learner_spec().map_err(config_err)?;
            let full: DataPlan = config.plan().map_err(config_err)?;
            let base: DataPlan =
                config.base_plan.unwrap_or(PlanConfig { n: full.n, m: 0 }).into();
            let value = transfer_le(&learner, &pair, base, full, trials, eval_mode, seed)?;
            let verdict =
                if value.log_ratio > 0.0 { Verdict::Learned } else { Verdict::NotLearned };
            Ok(ResultsDoc::Efficiency { value, verdict, n: full.n, m: full.m })
        }
        ExperimentKind::Multitask | ExperimentKind::Meta => {
            let learner = config.learner_spec().map_err(config_err)?;
            let task_configs = config.tasks.as_ref().expect("validated");
            let setups = task_configs
                .iter()
                .map(|t| {
                    t.world.build().map(|world| TaskSetup { task: TaskId(t.id), world, n: t.n })
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(config_err)?;
            let ids: Vec<TaskId> = setups.iter().map(|s| s.task).collect();
            let les = multitask_les(&setups, &learner, trials, eval_mode, seed)?;
            let weights = config.weight_vector(&ids).map_err(config_err)?;
            let report = weighted_verdict(&les, &weights)?;
            Ok(ResultsDoc::Weighted { report })
        }
        ExperimentKind::Continual => {
            let learner = config.learner_spec().map_err(config_err)?;
            let schedule = config.stream_schedule().map_err(config_err)?;
            let tasks = schedule.tasks();
            let mut per_task = BTreeMap::new();
            let mut totals = BTreeMap::new();
            for (k, &t) in tasks.iter().enumerate() {
                let les = continual_les(
                    &learner,
                    &schedule,
                    t,
                    trials,
                    eval_mode,
                    oodle_core::derive_seed(seed, k as u64),
                )?;
                totals.insert(t, les.total);
                per_task.insert(t, les);
            }
            let weights = config.weight_vector(&tasks).map_err(config_err)?;
            let report = weighted_verdict(&totals, &weights)?;
            Ok(ResultsDoc::Continual { per_task, report })
        }
        ExperimentKind::Lifelong => {
            let learner = config.learner_spec().map_err(config_err)?;
            let schedule = config.stream_schedule().map_err(config_err)?;
            let tasks = schedule.tasks();
            let slices_w = config.weight_slices(&tasks).map_err(config_err)?;
            let batches = schedule.batches();
            let mut les_by_slice: BTreeMap<u64, BTreeMap<TaskId, LEValue>> = BTreeMap::new();
            let mut slices = Vec::new();
            for (k, w) in slices_w.iter().enumerate() {
                let u = w.time_index.expect("slices carry time indices");
                if u == 0 || u as usize > batches.len() {
                    return Err(config_err(format!(
                        "slice u={u} outside 1..={}",
                        batches.len()
                    )));
                }
                let truncated: Vec<ScheduleBatch> = batches[..u as usize].to_vec();
                let truncated = StreamSchedule::new(truncated).map_err(|e| config_err(e.to_string()))?;
                let mut per_task = BTreeMap::new();
                for (j, t) in truncated.tasks().into_iter().enumerate() {
                    if w.get(t) > 0.0 {
                        let les = continual_les(
                            &learner,
                            &truncated,
                            t,
                            trials,
                            eval_mode,
                            oodle_core::derive_seed(seed, (k * 64 + j) as u64),
                        )?;
                        per_task.insert(t, les.total);
                    }
                }
                les_by_slice.insert(u, per_task.clone());
                slices.push(LifelongSlice { u, per_task });
            }
            let (combined_log, verdict) = lifelong_verdict(&les_by_slice, &slices_w)?;
            Ok(ResultsDoc::Lifelong { slices, combined_log, verdict })
        }
        ExperimentKind::ProbeWeak | ExperimentKind::ProbeStrong => {
            let pair = config.world_pair().map_err(config_err)?;
            let learner = config.learner_spec().map_err(config_err)?;
            let plan: DataPlan = config.plan().map_err(config_err)?;
            let kind = probe_kind(config)?;
            let cells = sweep(&learner, &pair, &[plan.n], &[plan.m], kind, trials, seed)?;
            Ok(ResultsDoc::Probe { cell: cells.into_iter().next().expect("one cell") })
        }
        ExperimentKind::Sweep => {
            let pair = config.world_pair().map_err(config_err)?;
            let learner = config.learner_spec().map_err(config_err)?;
            let grid = config.grid.as_ref().expect("validated");
            let kind = probe_kind(config)?;
            let cells = sweep(&learner, &pair, &grid.n, &grid.m, kind, trials, seed)?;
            Ok(ResultsDoc::Sweep { cells })
        }
        ExperimentKind::VerifyThm1 => {
            let report = verify_theorem_positive_transfer_with_trials(seed, trials)?;
            Ok(ResultsDoc::Theorem { report })
        }
        ExperimentKind::VerifyThm2 => {
            let report = verify_theorem_weak_meta_with_trials(seed, trials)?;
            Ok(ResultsDoc::Theorem { report })
        }
        ExperimentKind::Tbr => {
            let c = config.chain.as_ref().expect("validated");
            let world = LinearChainWorld::new(c.a, c.b, c.noise_sd, c.covariate_sd)?;
            let result = transfer_benefit_ratio(&world, c.n_task, c.n_ood, trials, seed)?;
            Ok(ResultsDoc::Tbr { result })
        }
        ExperimentKind::ClMetrics => {
            let learner = config.learner_spec().map_err(config_err)?;
            let schedule = config.stream_schedule().map_err(config_err)?;
            let grid = compute_task_grid(&learner, &schedule, trials, eval_mode, seed)?;
            Ok(ResultsDoc::ClMetrics {
                accuracy: cl_accuracy(&grid)?,
                backward_transfer: cl_backward_transfer(&grid)?,
                forward_transfer: cl_forward_transfer(&grid)?,
            })
        }
        ExperimentKind::LifelongMetrics => {
            let learner = config.learner_spec().map_err(config_err)?;
            let schedule = config.stream_schedule().map_err(config_err)?;
            let curves = compute_lifelong_curves(&learner, &schedule, trials, eval_mode, seed)?;
            let (recovery, recovery_note) = match performance_recovery(&curves) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let mut per_task = BTreeMap::new();
            for t in schedule.tasks() {
                let (maintenance, maintenance_note) = match performance_maintenance(&curves, t) {
                    Ok(v) => (Some(v), None),
                    Err(CoreError::TaskNeverExits(_)) => {
                        (None, Some("task never exits the stream".to_string()))
                    }
                    Err(e) => return Err(e.into()),
                };
                per_task.insert(
                    t,
                    LifelongTaskMetrics {
                        maintenance,
                        maintenance_note,
                        ste_ratio: ste_ratio(&curves, t)?,
                        sample_efficiency: sample_efficiency(&curves, t)?,
                    },
                );
            }
            Ok(ResultsDoc::LifelongMetrics { recovery, recovery_note, per_task, curves })
        }
    }
}

fn probe_kind(config: &ExperimentConfig) -> Result<ProbeKind, CliError> {
    let settings = config.probe.clone().unwrap_or(crate::config::ProbeSettings {
        epsilon: None,
        delta: 0.05,
    });
    Ok(match (config.kind, settings.epsilon) {
        (ExperimentKind::ProbeStrong, Some(epsilon)) | (ExperimentKind::Sweep, Some(epsilon)) => {
            ProbeKind::Strong { epsilon, delta: settings.delta }
        }
        (ExperimentKind::ProbeStrong, None) => {
            return Err(config_err("probe-strong needs probe.epsilon".into()))
        }
        _ => ProbeKind::Weak { delta: settings.delta },
    })
}

impl ResultsDoc {
    /// Flatten to CSV rows under the fixed column schema.
    pub fn rows(&self, kind: ExperimentKind, trials: usize, seed: u64) -> Vec<CsvRow> {
        let name = kind.name();
        match self {
            ResultsDoc::Risk { estimate, n, m } => vec![CsvRow {
                experiment: name.to_string(),
                n: Some(*n),
                m: Some(*m),
                trials: estimate.trials,
                err_s_mean: Some(estimate.mean),
                err_s_se: Some(estimate.std_err),
                seed,
                ..Default::default()
            }],
            ResultsDoc::Efficiency { value, n, m, .. } => {
                let mut row = le_row(name, value, trials, seed);
                row.n = Some(*n);
                row.m = Some(*m);
                vec![row]
            }
            ResultsDoc::Weighted { report } => {
                let mut rows: Vec<CsvRow> = report
                    .per_task
                    .iter()
                    .map(|(t, le)| {
                        let mut row = le_row(name, le, trials, seed);
                        row.task_id = Some(t.0);
                        row
                    })
                    .collect();
                rows.push(CsvRow {
                    experiment: format!("{name}.combined"),
                    trials,
                    le: Some(report.combined_log.exp()),
                    log_le: Some(report.combined_log),
                    verdict: Some(verdict_str(report.verdict)),
                    seed,
                    ..Default::default()
                });
                rows
            }
            ResultsDoc::Continual { per_task, report } => {
                let mut rows = Vec::new();
                for (t, les) in per_task {
                    for (arm, le) in [
                        ("forward", &les.forward),
                        ("backward", &les.backward),
                        ("total", &les.total),
                    ] {
                        let mut row = le_row(&format!("{name}.{arm}"), le, trials, seed);
                        row.task_id = Some(t.0);
                        rows.push(row);
                    }
                }
                rows.push(CsvRow {
                    experiment: format!("{name}.combined"),
                    trials,
                    le: Some(report.combined_log.exp()),
                    log_le: Some(report.combined_log),
                    verdict: Some(verdict_str(report.verdict)),
                    seed,
                    ..Default::default()
                });
                rows
            }
            ResultsDoc::Lifelong { slices, combined_log, verdict } => {
                let mut rows = Vec::new();
                for slice in slices {
                    for (t, le) in &slice.per_task {
                        let mut row = le_row(&format!("{name}.u{}", slice.u), le, trials, seed);
                        row.task_id = Some(t.0);
                        rows.push(row);
                    }
                }
                rows.push(CsvRow {
                    experiment: format!("{name}.combined"),
                    trials,
                    le: Some(combined_log.exp()),
                    log_le: Some(*combined_log),
                    verdict: Some(verdict_str(*verdict)),
                    seed,
                    ..Default::default()
                });
                rows
            }
            ResultsDoc::Probe { cell } => vec![sweep_row(name, cell, trials, seed)],
            ResultsDoc::Sweep { cells } => {
                cells.iter().map(|c| sweep_row(name, c, trials, seed)).collect()
            }
            ResultsDoc::Theorem { report } => report
                .checks
                .iter()
                .enumerate()
                .map(|(i, c)| CsvRow {
                    experiment: format!("{name}.check{}", i + 1),
                    task_id: None,
                    trials,
                    err_s_mean: Some(c.measured),
                    verdict: Some(if c.passed { "pass".into() } else { "fail".into() }),
                    seed,
                    ..Default::default()
                })
                .collect(),
            ResultsDoc::Tbr { result } => vec![CsvRow {
                experiment: name.to_string(),
                trials: result.trials,
                err_s_mean: Some(result.mse_direct),
                err_s_se: Some(result.se_direct),
                err_sp_mean: Some(result.mse_chain),
                err_sp_se: Some(result.se_chain),
                le: Some(result.ratio),
                log_le: Some(result.ratio.ln()),
                verdict: Some(if result.ratio > 1.0 {
                    "learned".into()
                } else {
                    "not-learned".into()
                }),
                seed,
                ..Default::default()
            }],
            ResultsDoc::ClMetrics { accuracy, backward_transfer, forward_transfer } => {
                [
                    ("accuracy", accuracy),
                    ("backward-transfer", backward_transfer),
                    ("forward-transfer", forward_transfer),
                ]
                .into_iter()
                .map(|(metric, v)| CsvRow {
                    experiment: format!("{name}.{metric}"),
                    trials,
                    err_s_mean: Some(v.raw),
                    err_sp_mean: Some(v.recast),
                    seed,
                    ..Default::default()
                })
                .collect()
            }
            ResultsDoc::LifelongMetrics { recovery, per_task, .. } => {
                let mut rows = Vec::new();
                if let Some(r) = recovery {
                    rows.push(CsvRow {
                        experiment: format!("{name}.recovery-slope"),
                        trials,
                        le: Some(r.slope),
                        seed,
                        ..Default::default()
                    });
                }
                for (t, m) in per_task {
                    if let Some(v) = m.maintenance {
                        rows.push(CsvRow {
                            experiment: format!("{name}.maintenance"),
                            task_id: Some(t.0),
                            trials,
                            le: Some(v),
                            seed,
                            ..Default::default()
                        });
                    }
                    rows.push(CsvRow {
                        experiment: format!("{name}.ste-ratio"),
                        task_id: Some(t.0),
                        trials,
                        le: Some(m.ste_ratio),
                        seed,
                        ..Default::default()
                    });
                    rows.push(CsvRow {
                        experiment: format!("{name}.sample-efficiency"),
                        task_id: Some(t.0),
                        trials,
                        le: Some(m.sample_efficiency),
                        seed,
                        ..Default::default()
                    });
                }
                rows
            }
        }
    }

    /// Whether this outcome means the process should exit non-zero.
    pub fn verification_failure(&self) -> Option<String> {
        match self {
            ResultsDoc::Theorem { report } if !report.passed => Some(report.name.clone()),
            _ => None,
        }
    }

    /// Plot-data series: `(series name, column header, points)`.
    pub fn plot_series(&self) -> Vec<PlotSeries> {
        match self {
            ResultsDoc::Sweep { cells } => {
                let mut ns: Vec<usize> = cells.iter().map(|c| c.n).collect();
                ns.sort_unstable();
                ns.dedup();
                let mut series = Vec::new();
                for n in ns {
                    let by_m: Vec<&SweepCell> =
                        cells.iter().filter(|c| c.n == n).collect();
                    series.push((
                        format!("le_n{n}"),
                        "m le".to_string(),
                        by_m.iter().map(|c| (c.m as f64, c.le.ratio)).collect(),
                    ));
                    series.push((
                        format!("probability_n{n}"),
                        "m probability".to_string(),
                        by_m.iter().map(|c| (c.m as f64, c.probe.probability)).collect(),
                    ));
                }
                series
            }
            ResultsDoc::LifelongMetrics { curves, .. } => {
                let mut series = vec![(
                    "lifelong_le".to_string(),
                    "index le".to_string(),
                    curves
                        .ll_le
                        .iter()
                        .enumerate()
                        .map(|(i, v)| ((i + 1) as f64, *v))
                        .collect(),
                )];
                for (t, curve) in &curves.ste_le {
                    series.push((
                        format!("ste_le_task{}", t.0),
                        "index le".to_string(),
                        curve.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect(),
                    ));
                }
                series
            }
            _ => Vec::new(),
        }
    }
}

fn sweep_row(name: &str, cell: &SweepCell, trials: usize, seed: u64) -> CsvRow {
    CsvRow {
        experiment: name.to_string(),
        task_id: None,
        n: Some(cell.n),
        m: Some(cell.m),
        trials,
        err_s_mean: Some(cell.le.numerator.mean),
        err_s_se: Some(cell.le.numerator.std_err),
        err_sp_mean: Some(cell.le.denominator.mean),
        err_sp_se: Some(cell.le.denominator.std_err),
        le: Some(cell.le.ratio),
        log_le: Some(cell.le.log_ratio),
        verdict: Some(if cell.meets_threshold { "pass".into() } else { "fail".into() }),
        seed,
    }
}
