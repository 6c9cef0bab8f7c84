//! The experiment designs behind each CLI subcommand.

use std::sync::Arc;

use selfheal_core::analyze::Models;
use selfheal_core::classes::DiagnosisClass;
use selfheal_core::execute::Mode;
use selfheal_core::experiment::{ExperimentConfig, ExperimentError, ExperimentReport};
use selfheal_core::plan::KnowledgeRow;
use serde::Serialize;

use crate::runner::{self, ModeRuns};
use crate::LabError;

/// One incident, flattened for `outcomes.csv`. Times are seconds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutcomeRow {
    pub fault_id: Option<u64>,
    pub class: DiagnosisClass,
    pub mode: &'static str,
    pub strategy: Option<u32>,
    pub success: bool,
    pub t_detected: f64,
    pub t_recovered: Option<f64>,
    pub ttr: Option<f64>,
    pub attempts: u32,
    pub seed: u64,
}

/// A report plus the raw material written next to it.
#[derive(Clone, Debug)]
pub struct Study {
    pub report: ExperimentReport,
    pub outcomes: Vec<OutcomeRow>,
    pub knowledge: Option<Vec<KnowledgeRow>>,
}

impl Study {
    fn new(report: ExperimentReport) -> Self {
        Study {
            report,
            outcomes: Vec::new(),
            knowledge: None,
        }
    }
}

const DA_NOTE: &str =
    "decision accuracy counts an incident as correct when the first strategy chosen \
removed the fault without any fallback";

fn prepare(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Arc<Models>), LabError> {
    let warnings = cfg.validate()?;
    let models = runner::train(cfg)?;
    let mut report = ExperimentReport::new(cfg.clone());
    report.model_summary = Some(models.summary.clone());
    report
        .notes
        .extend(warnings.into_iter().map(|w| format!("config warning: {w}")));
    Ok((report, models))
}

fn outcome_rows(runs: &[ModeRuns]) -> Vec<OutcomeRow> {
    let mut rows = Vec::new();
    for m in runs {
        for run in &m.runs {
            for o in &run.outcomes {
                rows.push(OutcomeRow {
                    fault_id: o.fault_id,
                    class: o.diagnosed,
                    mode: o.mode.name(),
                    strategy: o.strategy,
                    success: o.success,
                    t_detected: o.t_detected.as_secs_f64(),
                    t_recovered: o.t_recovered.map(|t| t.as_secs_f64()),
                    ttr: o
                        .t_recovered
                        .map(|t| t.saturating_sub(o.t_detected).as_secs_f64()),
                    attempts: o.attempts,
                    seed: run.seed,
                })
            }
        }
    }
    rows
}

fn matrix(cfg: &ExperimentConfig, modes: &[Mode]) -> Result<Study, LabError> {
    let (mut report, models) = prepare(cfg)?;
    let runs = runner::recovery_matrix(cfg, &models, modes)?;
    runner::fill_core_tables(&mut report, &runs);
    report.notes.push(DA_NOTE.to_string());
    let knowledge = runs
        .iter()
        .find(|m| m.mode == Mode::AutoFix)
        .map(|m| m.kb.snapshot());
    Ok(Study {
        outcomes: outcome_rows(&runs),
        knowledge,
        report,
    })
}

/// The configured mode paired with manual handling on the same seeds.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Study, LabError> {
    let modes: Vec<Mode> = if cfg.mode == Mode::ManualRunbook {
        vec![Mode::ManualRunbook]
    } else {
        vec![Mode::ManualRunbook, cfg.mode]
    };
    matrix(cfg, &modes)
}

/// Manual, rule-only, orchestrator and AutoFix on identical seeds.
pub fn run_baselines(cfg: &ExperimentConfig) -> Result<Study, LabError> {
    matrix(cfg, &Mode::HEALING)
}

pub fn run_feedback(cfg: &ExperimentConfig) -> Result<Study, LabError> {
    if cfg.mode != Mode::AutoFix || !cfg.world.exec.feedback {
        return Err(ExperimentError::LearningDisabled(cfg.mode).into());
    }
    let (mut report, models) = prepare(cfg)?;
    report.feedback = Some(runner::feedback_study(cfg, &models, Mode::AutoFix)?);
    report.notes.push(DA_NOTE.to_string());
    Ok(Study::new(report))
}

/// Fault-rate, detection-threshold and user-load sweeps.
pub fn run_sweeps(cfg: &ExperimentConfig) -> Result<Study, LabError> {
    let (mut report, models) = prepare(cfg)?;
    report.throughput_series = runner::rate_sweep(cfg, &models)?;
    report.theta_sweep = runner::theta_sweep(cfg, &models)?;
    report.load_sweep = runner::load_sweep(cfg, &models)?;
    Ok(Study::new(report))
}
