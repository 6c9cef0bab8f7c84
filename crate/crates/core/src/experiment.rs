//! Experiment designs: configuration, training corpus, sequential and
//! campaign runs, and the aggregation behind every reported table.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyze::{
    score_detection, AnalyzeError, ConfusionCounts, LabeledWindow, ModelSummary, Models,
    ScoringConfig,
};
use crate::chaos::{schedule_campaign, FaultScenario};
use crate::classes::{RecoveryClass, ReportClass};
use crate::engine::{RngStream, SimTime};
use crate::execute::Mode;
use crate::metrics::{
    self, stats, ClassificationReport, Comparison, CycleStats, FeedbackMetrics, MetricsError,
};
use crate::plan::KnowledgeBase;
use crate::sim::{self, RunResult, SimError, World, WorldConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Labeled fault runs per scenario.
    pub runs_per_scenario: u32,
    /// Extra fault-free runs.
    pub healthy_runs: u32,
    pub healthy_duration_s: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            runs_per_scenario: 2,
            healthy_runs: 2,
            healthy_duration_s: 300,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub theta: Vec<f64>,
    pub users: Vec<u32>,
    /// Faults per minute for the campaign sweep.
    pub fault_rates: Vec<f64>,
    pub campaign_s: f64,
    pub modes: Vec<Mode>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            theta: vec![0.80, 0.85, 0.90, 0.95],
            users: vec![50, 100, 150, 200],
            fault_rates: vec![0.0, 0.5, 1.0, 2.0, 4.0],
            campaign_s: 3600.0,
            modes: vec![
                Mode::NoHeal,
                Mode::ManualRunbook,
                Mode::RuleOnly,
                Mode::OrchestratorOnly,
                Mode::AutoFix,
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: Mode,
    /// Scenario ids to run; empty means the whole catalog.
    pub scenarios: Vec<u32>,
    pub replications: u32,
    /// Feedback cycles for the learning study.
    pub cycles: u32,
    /// Seeds averaged by the learning study; empty means ten seeds spaced
    /// 1000 apart starting at `seed`.
    pub feedback_seeds: Vec<u64>,
    /// Healthy gap after each scenario in the sequential protocol.
    pub gap_s: f64,
    pub training: TrainingConfig,
    pub sweeps: SweepConfig,
    pub scoring: ScoringConfig,
    pub world: WorldConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            mode: Mode::AutoFix,
            scenarios: Vec::new(),
            replications: 5,
            cycles: 5,
            feedback_seeds: Vec::new(),
            gap_s: 60.0,
            training: TrainingConfig::default(),
            sweeps: SweepConfig::default(),
            scoring: ScoringConfig::default(),
            world: WorldConfig::default(),
        }
    }
}

/// A config value that failed validation, with its dotted path.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

fn bad(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

fn unit(path: &str, x: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(bad(path, format!("must lie in [0, 1], got {x}")))
    }
}

fn positive(path: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(bad(path, format!("must be positive, got {x}")))
    }
}

impl ExperimentConfig {
    /// Hard errors come back as `Err`; out-of-range sweep points as warnings.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let mut warnings = Vec::new();
        if self.replications < 1 {
            return Err(bad("replications", "must be at least 1"));
        }
        if self.cycles < 2 {
            return Err(bad("cycles", "must be at least 2"));
        }
        if !(self.gap_s >= 0.0 && self.gap_s.is_finite()) {
            return Err(bad("gap_s", "must be non-negative"));
        }
        let w = &self.world;
        if w.scenarios.is_empty() {
            return Err(bad("world.scenarios", "catalog is empty"));
        }
        for (i, id) in self.scenarios.iter().enumerate() {
            if !w.scenarios.iter().any(|s| s.id == *id) {
                return Err(bad(
                    format!("scenarios[{i}]"),
                    format!("unknown scenario id {id}"),
                ));
            }
        }
        for (i, s) in w.scenarios.iter().enumerate() {
            positive(&format!("world.scenarios[{i}].duration_s"), s.duration_s)?;
            if s.effect.tier() != s.target {
                return Err(bad(
                    format!("world.scenarios[{i}].target"),
                    "does not match the effect's tier",
                ));
            }
        }
        let wl = &w.workload;
        if wl.users == 0 || wl.users > 10_000 {
            return Err(bad(
                "world.workload.users",
                format!("must lie in 1..=10000, got {}", wl.users),
            ));
        }
        positive("world.workload.think_time_s", wl.think_time_s).or_else(|e| {
            if wl.think_time_s == f64::INFINITY {
                Ok(())
            } else {
                Err(e)
            }
        })?;
        positive("world.workload.request_timeout_s", wl.request_timeout_s)?;
        let sum: f64 = wl.op_mix.iter().sum();
        if wl.op_mix.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(bad(
                "world.workload.op_mix",
                "must be non-negative and sum to 1",
            ));
        }
        for (name, t) in [
            ("frontend", &w.app.frontend),
            ("api", &w.app.api),
            ("db", &w.app.db),
        ] {
            positive(&format!("world.app.{name}.service_rate"), t.service_rate)?;
            positive(
                &format!("world.app.{name}.base_latency_ms"),
                t.base_latency_ms,
            )?;
            positive(
                &format!("world.app.{name}.mem_capacity_mb"),
                t.mem_capacity_mb,
            )?;
            if t.mem_baseline_mb >= t.mem_capacity_mb {
                return Err(bad(
                    format!("world.app.{name}.mem_baseline_mb"),
                    "must be below mem_capacity_mb",
                ));
            }
        }
        unit("world.app.load_smoothing", w.app.load_smoothing)?;
        unit("world.app.throttle_shed", w.app.throttle_shed)?;
        unit("world.app.oom_jitter", w.app.oom_jitter)?;
        let a = &w.analyzer;
        if !(a.theta > 0.0 && a.theta < 1.0) {
            return Err(bad(
                "world.analyzer.theta",
                format!("must lie in (0, 1), got {}", a.theta),
            ));
        }
        if a.n_trees == 0 {
            return Err(bad("world.analyzer.n_trees", "must be at least 1"));
        }
        if a.subsample < 2 {
            return Err(bad("world.analyzer.subsample", "must be at least 2"));
        }
        unit("world.analyzer.min_confidence", a.min_confidence)?;
        let e = &w.exec;
        for (i, row) in e.success.p.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                unit(&format!("world.exec.success.p[{i}][{j}]"), *v)?;
            }
        }
        for (i, l) in e.latency_s.iter().enumerate() {
            positive(&format!("world.exec.latency_s[{i}]"), *l)?;
        }
        for (i, m) in e.manual.mean_s.iter().enumerate() {
            positive(&format!("world.exec.manual.mean_s[{i}]"), *m)?;
        }
        unit("world.exec.manual.success_p", e.manual.success_p)?;
        unit("world.exec.epsilon", e.epsilon)?;
        unit("world.exec.epsilon_decay", e.epsilon_decay)?;
        if e.max_attempts == 0 {
            return Err(bad("world.exec.max_attempts", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&e.jitter) {
            return Err(bad("world.exec.jitter", "must lie in [0, 1)"));
        }
        if e.health.consecutive_ticks == 0 || e.health.timeout_ticks < e.health.consecutive_ticks {
            return Err(bad(
                "world.exec.health.timeout_ticks",
                "must be at least consecutive_ticks (>= 1)",
            ));
        }
        for (i, s) in w.rules.strategies.iter().enumerate() {
            if s.actions.is_empty() {
                return Err(bad(
                    format!("world.rules.strategies[{i}].actions"),
                    "empty strategy",
                ));
            }
        }
        if w.warmup_s < w.monitor.min_history_s {
            return Err(bad("world.warmup_s", "must cover monitor.min_history_s"));
        }
        for (i, t) in self.sweeps.theta.iter().enumerate() {
            if !(*t > 0.0 && *t < 1.0) {
                return Err(bad(format!("sweeps.theta[{i}]"), "must lie in (0, 1)"));
            }
            if !(0.80..=0.95).contains(t) {
                warnings.push(format!("sweeps.theta[{i}] = {t} outside 0.80-0.95"));
            }
        }
        for (i, u) in self.sweeps.users.iter().enumerate() {
            if *u == 0 {
                return Err(bad(format!("sweeps.users[{i}]"), "must be at least 1"));
            }
            if !(50..=200).contains(u) {
                warnings.push(format!("sweeps.users[{i}] = {u} outside 50-200"));
            }
        }
        for (i, r) in self.sweeps.fault_rates.iter().enumerate() {
            if !(*r >= 0.0 && r.is_finite()) {
                return Err(bad(
                    format!("sweeps.fault_rates[{i}]"),
                    "must be non-negative",
                ));
            }
        }
        positive("sweeps.campaign_s", self.sweeps.campaign_s)?;
        Ok(warnings)
    }

    pub fn selected_scenarios(&self) -> Vec<FaultScenario> {
        if self.scenarios.is_empty() {
            return self.world.scenarios.clone();
        }
        self.scenarios
            .iter()
            .filter_map(|id| self.world.scenarios.iter().find(|s| s.id == *id).copied())
            .collect()
    }

    pub fn eval_seed(&self, replication: u32) -> u64 {
        self.seed.wrapping_add(u64::from(replication))
    }

    pub fn feedback_seed_set(&self) -> Vec<u64> {
        if self.feedback_seeds.is_empty() {
            (0..10).map(|k| self.seed.wrapping_add(1000 * k)).collect()
        } else {
            self.feedback_seeds.clone()
        }
    }

    pub fn epsilon_for_cycle(&self, cycle: u32) -> f64 {
        let e = &self.world.exec;
        e.epsilon * libm::pow(e.epsilon_decay, f64::from(cycle))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analyze(#[from] AnalyzeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("learning cycles need autofix with feedback on (mode {})", .0.name())]
    LearningDisabled(Mode),
}

/// Training seeds come from their own named stream with the top bit set,
/// so they cannot collide with `seed + replication` evaluation seeds.
pub fn training_seed(seed: u64, index: u64) -> u64 {
    RngStream::derive(seed, "training", index).next_u64() | (1 << 63)
}

/// One unit of the training corpus: a fault run (`Some(scenario)`) or a healthy run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainingJob {
    pub scenario: Option<u32>,
    pub seed: u64,
}

pub fn training_jobs(cfg: &ExperimentConfig) -> Vec<TrainingJob> {
    let mut jobs = Vec::new();
    let mut k = 0u64;
    for s in &cfg.world.scenarios {
        for _ in 0..cfg.training.runs_per_scenario {
            jobs.push(TrainingJob {
                scenario: Some(s.id),
                seed: training_seed(cfg.seed, k),
            });
            k += 1;
        }
    }
    for _ in 0..cfg.training.healthy_runs {
        jobs.push(TrainingJob {
            scenario: None,
            seed: training_seed(cfg.seed, k),
        });
        k += 1;
    }
    jobs
}

/// Labeled windows from one unhealed run; the run stops when the fault expires.
pub fn training_run(
    cfg: &ExperimentConfig,
    job: TrainingJob,
) -> Result<Vec<LabeledWindow>, ExperimentError> {
    let mut world = World::new(
        cfg.world.clone(),
        Mode::NoHeal,
        job.seed,
        None,
        KnowledgeBase::default(),
        0.0,
    );
    world.collect_training(true);
    let warm = cfg.world.warmup_s as f64;
    let end = match job.scenario {
        Some(id) => {
            let sc = cfg
                .world
                .scenarios
                .iter()
                .find(|s| s.id == id)
                .copied()
                .ok_or(ConfigError {
                    path: "scenarios".to_string(),
                    message: format!("unknown scenario id {id}"),
                })?;
            let offset = RngStream::derive(job.seed, "faults", 99).uniform() * 10.0;
            world.schedule_injection(SimTime::from_secs_f64(warm + offset), id)?;
            SimTime::from_secs_f64(warm + offset + sc.duration_s)
        }
        None => SimTime::from_secs(cfg.training.healthy_duration_s.max(cfg.world.warmup_s)),
    };
    world.run_until(end)?;
    Ok(world.finish().training)
}

pub fn train_models(
    cfg: &ExperimentConfig,
    windows: &[LabeledWindow],
) -> Result<Models, ExperimentError> {
    let mut rng = RngStream::derive(cfg.seed, "detectors", 0);
    Ok(Models::train(windows, &cfg.world.analyzer, &mut rng)?)
}

/// Sequential scenario suite under `mode`. Returns the run and the knowledge
/// base as it stands afterwards.
pub fn sequential_run(
    cfg: &ExperimentConfig,
    mode: Mode,
    seed: u64,
    models: Option<Arc<Models>>,
    kb: KnowledgeBase,
    epsilon: f64,
) -> Result<(RunResult, KnowledgeBase), ExperimentError> {
    let scenarios = cfg.selected_scenarios();
    let warm = cfg.world.warmup_s as f64;
    let mut world = World::new(cfg.world.clone(), mode, seed, models, kb, epsilon);
    for (t, id) in sim::sequential_schedule(&scenarios, warm, cfg.gap_s) {
        world.schedule_injection(t, id)?;
    }
    world.run_until(sim::sequential_horizon(&scenarios, warm, cfg.gap_s))?;
    Ok(world.finish_with_kb())
}

/// The same seed and horizon with no faults, for retention denominators.
pub fn healthy_run(
    cfg: &ExperimentConfig,
    seed: u64,
    horizon: SimTime,
) -> Result<RunResult, ExperimentError> {
    let mut world = World::new(
        cfg.world.clone(),
        Mode::NoHeal,
        seed,
        None,
        KnowledgeBase::default(),
        0.0,
    );
    world.run_until(horizon)?;
    Ok(world.finish())
}

pub fn campaign_horizon(cfg: &ExperimentConfig) -> SimTime {
    SimTime::from_secs_f64(cfg.world.warmup_s as f64 + cfg.sweeps.campaign_s)
}

/// Poisson fault campaign at `rate_per_min` across the selected scenarios.
pub fn campaign_run(
    cfg: &ExperimentConfig,
    mode: Mode,
    seed: u64,
    rate_per_min: f64,
    models: Option<Arc<Models>>,
    kb: KnowledgeBase,
    epsilon: f64,
) -> Result<RunResult, ExperimentError> {
    let scenarios = cfg.selected_scenarios();
    let mix = vec![1.0; scenarios.len()];
    let mut rng = RngStream::derive(seed, "faults", 7);
    let start = SimTime::from_secs(cfg.world.warmup_s);
    let plan = schedule_campaign(
        &scenarios,
        rate_per_min,
        start,
        cfg.sweeps.campaign_s,
        &mix,
        &mut rng,
    )
    .map_err(SimError::from)?;
    let mut world = World::new(cfg.world.clone(), mode, seed, models, kb, epsilon);
    for p in plan {
        world.schedule_injection(p.t, p.scenario_id)?;
    }
    world.run_until(campaign_horizon(cfg))?;
    Ok(world.finish())
}

/// Ok completions of `run` over the fault windows, relative to `healthy`.
pub fn retention_in_windows(run: &RunResult, healthy: &RunResult) -> f64 {
    let w = sim::fault_windows(&run.faults);
    let base = sim::ok_in_windows(healthy, &w);
    if w.is_empty() || base == 0 {
        return 100.0;
    }
    sim::ok_in_windows(run, &w) as f64 * 100.0 / base as f64
}

/// Ok completions over `[from, to)` relative to `healthy`.
pub fn retention_between(run: &RunResult, healthy: &RunResult, from: SimTime, to: SimTime) -> f64 {
    let base = healthy.ok_between(from, to);
    if base == 0 {
        return 100.0;
    }
    run.ok_between(from, to) as f64 * 100.0 / base as f64
}

/// Per-class recovery tallies of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassTally {
    pub incidents: u32,
    pub successes: u32,
    pub ttrs: Vec<f64>,
}

/// What one replication contributes to the tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub mode: Mode,
    pub seed: u64,
    pub classes: Vec<ClassTally>,
    pub retention_pct: f64,
    pub confusion: ConfusionCounts,
    pub incidents: u32,
    pub first_choice_correct: u32,
    pub kb_size: usize,
    pub stale: u32,
}

impl ReplicationSummary {
    pub fn new(
        run: &RunResult,
        healthy: &RunResult,
        scoring: &ScoringConfig,
        kb_size: usize,
    ) -> Self {
        let mut classes = vec![ClassTally::default(); RecoveryClass::ALL.len()];
        let mut incidents = 0;
        let mut correct = 0;
        let mut stale = 0;
        for o in &run.outcomes {
            if o.fault_id.is_none() {
                continue;
            }
            let c = &mut classes[o.recovery_class().index()];
            c.incidents += 1;
            incidents += 1;
            if o.success {
                c.successes += 1;
                if let Ok(t) = metrics::ttr(o.t_detected, o.t_recovered) {
                    c.ttrs.push(t.seconds);
                }
            }
            if o.first_choice_correct {
                correct += 1;
            }
            if o.stale {
                stale += 1;
            }
        }
        let (confusion, _) = score_detection(&run.diagnoses, &run.faults, scoring);
        ReplicationSummary {
            mode: run.mode,
            seed: run.seed,
            classes,
            retention_pct: retention_in_windows(run, healthy),
            confusion,
            incidents,
            first_choice_correct: correct,
            kb_size,
            stale,
        }
    }

    /// Mean TTR per recovery class, `None` where nothing recovered.
    pub fn class_mean_ttr(&self) -> Vec<Option<f64>> {
        self.classes
            .iter()
            .map(|c| (!c.ttrs.is_empty()).then(|| stats::mean(&c.ttrs)))
            .collect()
    }

    /// Unweighted mean over classes with a defined TTR.
    pub fn mean_ttr(&self) -> f64 {
        let v: Vec<f64> = self.class_mean_ttr().into_iter().flatten().collect();
        if v.is_empty() {
            f64::NAN
        } else {
            stats::mean(&v)
        }
    }

    /// Successful recoveries over all fault incidents.
    pub fn success_pct(&self) -> f64 {
        pooled_success(core::slice::from_ref(self))
    }

    pub fn decision_accuracy_pct(&self) -> f64 {
        if self.incidents == 0 {
            return 0.0;
        }
        f64::from(self.first_choice_correct) * 100.0 / f64::from(self.incidents)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub class: String,
    pub mode: Mode,
    pub mean_ttr_s: Option<f64>,
    pub sd_ttr_s: Option<f64>,
    pub success_rate_pct: Option<f64>,
    /// Relative to the manual row of the same class.
    pub speed_improvement_pct: Option<f64>,
    pub incidents: u32,
}

fn pooled(reps: &[ReplicationSummary], class: usize) -> (Vec<f64>, u32, u32) {
    let mut ttrs = Vec::new();
    let (mut n, mut s) = (0, 0);
    for r in reps {
        ttrs.extend_from_slice(&r.classes[class].ttrs);
        n += r.classes[class].incidents;
        s += r.classes[class].successes;
    }
    (ttrs, n, s)
}

/// Per-class rows pooled over replications, plus an unweighted average row.
pub fn recovery_rows(
    mode: Mode,
    reps: &[ReplicationSummary],
    manual: Option<&[ReplicationSummary]>,
) -> Vec<RecoveryRow> {
    let mut rows = Vec::new();
    let mut ttr_means = Vec::new();
    let mut sr = Vec::new();
    let mut manual_means = Vec::new();
    for rc in RecoveryClass::ALL {
        let (ttrs, n, s) = pooled(reps, rc.index());
        let mean = (!ttrs.is_empty()).then(|| stats::mean(&ttrs));
        let sd = mean.map(|_| stats::sd(&ttrs));
        let success = (n > 0).then(|| f64::from(s) * 100.0 / f64::from(n));
        let manual_mean = manual.and_then(|m| {
            let (t, _, _) = pooled(m, rc.index());
            (!t.is_empty()).then(|| stats::mean(&t))
        });
        let speed = match (manual_mean, mean) {
            (Some(m), Some(a)) => metrics::speed_improvement(m, a).ok(),
            _ => None,
        };
        if let Some(m) = mean {
            ttr_means.push(m);
            if let Some(mm) = manual_mean {
                manual_means.push(mm);
            }
        }
        if let Some(x) = success {
            sr.push(x);
        }
        rows.push(RecoveryRow {
            class: rc.label().to_string(),
            mode,
            mean_ttr_s: mean,
            sd_ttr_s: sd,
            success_rate_pct: success,
            speed_improvement_pct: speed,
            incidents: n,
        });
    }
    let avg = (!ttr_means.is_empty()).then(|| stats::mean(&ttr_means));
    let manual_avg = (manual_means.len() == ttr_means.len() && !manual_means.is_empty())
        .then(|| stats::mean(&manual_means));
    rows.push(RecoveryRow {
        class: "Average".to_string(),
        mode,
        mean_ttr_s: avg,
        sd_ttr_s: None,
        success_rate_pct: (!sr.is_empty()).then(|| stats::mean(&sr)),
        speed_improvement_pct: match (manual_avg, avg) {
            (Some(m), Some(a)) => metrics::speed_improvement(m, a).ok(),
            _ => None,
        },
        incidents: rows.iter().map(|r| r.incidents).sum(),
    });
    rows
}

fn pooled_success(reps: &[ReplicationSummary]) -> f64 {
    let (n, s) = reps
        .iter()
        .flat_map(|r| &r.classes)
        .fold((0u32, 0u32), |(n, s), c| (n + c.incidents, s + c.successes));
    if n == 0 {
        f64::NAN
    } else {
        f64::from(s) * 100.0 / f64::from(n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub mode: Mode,
    pub mean_ttr_s: f64,
    /// Across replications.
    pub sd_ttr_s: f64,
    /// Pooled over every incident of every replication.
    pub success_pct: f64,
    pub throughput_retention_pct: f64,
    pub replications: usize,
}

pub fn baseline_row(mode: Mode, reps: &[ReplicationSummary]) -> BaselineRow {
    let ttr: Vec<f64> = reps
        .iter()
        .map(ReplicationSummary::mean_ttr)
        .filter(|x| x.is_finite())
        .collect();
    let ret: Vec<f64> = reps.iter().map(|r| r.retention_pct).collect();
    let or_nan = |v: &[f64]| {
        if v.is_empty() {
            f64::NAN
        } else {
            stats::mean(v)
        }
    };
    BaselineRow {
        mode,
        mean_ttr_s: or_nan(&ttr),
        sd_ttr_s: stats::sd(&ttr),
        success_pct: pooled_success(reps),
        throughput_retention_pct: or_nan(&ret),
        replications: reps.len(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub class: String,
    pub precision_pct: Option<f64>,
    pub recall_pct: Option<f64>,
    pub f1_pct: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionTable {
    pub rows: Vec<DetectionRow>,
    pub macro_precision_pct: f64,
    pub macro_recall_pct: f64,
    pub macro_f1_pct: f64,
    pub excluded: Vec<String>,
}

pub fn detection_table(counts: &ConfusionCounts) -> Result<DetectionTable, MetricsError> {
    let r: ClassificationReport = metrics::classification_metrics(counts)?;
    let pct = |x: Option<f64>| x.map(|v| v * 100.0);
    Ok(DetectionTable {
        rows: r
            .classes
            .iter()
            .map(|m| DetectionRow {
                class: m.class.label().to_string(),
                precision_pct: pct(m.precision),
                recall_pct: pct(m.recall),
                f1_pct: pct(m.f1),
                tp: m.tp,
                fp: m.fp,
                fn_: m.fn_,
            })
            .collect(),
        macro_precision_pct: r.macro_precision * 100.0,
        macro_recall_pct: r.macro_recall * 100.0,
        macro_f1_pct: r.macro_f1 * 100.0,
        excluded: r
            .excluded
            .iter()
            .map(|c: &ReportClass| c.label().to_string())
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackCurve {
    pub cycles: Vec<CycleStats>,
    pub summary: Option<FeedbackMetrics>,
    pub seeds: Vec<u64>,
    pub feedback_enabled: bool,
}

/// Averages per-cycle statistics over seeds (`per_seed[s][c]`).
pub fn feedback_curve(
    per_seed: &[Vec<ReplicationSummary>],
    seeds: Vec<u64>,
    feedback_enabled: bool,
) -> FeedbackCurve {
    let n = per_seed.iter().map(Vec::len).min().unwrap_or(0);
    let mut cycles = Vec::with_capacity(n);
    for c in 0..n {
        let da: Vec<f64> = per_seed
            .iter()
            .map(|s| s[c].decision_accuracy_pct())
            .collect();
        let ttr: Vec<f64> = per_seed
            .iter()
            .map(|s| s[c].mean_ttr())
            .filter(|x| x.is_finite())
            .collect();
        let kb: Vec<f64> = per_seed.iter().map(|s| s[c].kb_size as f64).collect();
        cycles.push(CycleStats {
            cycle: c as u32 + 1,
            decision_accuracy_pct: stats::mean(&da),
            mean_ttr_s: if ttr.is_empty() {
                f64::NAN
            } else {
                stats::mean(&ttr)
            },
            kb_size: libm::round(stats::mean(&kb)) as usize,
        });
    }
    let summary = metrics::feedback_metrics(&cycles).ok();
    FeedbackCurve {
        cycles,
        summary,
        seeds,
        feedback_enabled,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub metric: String,
    pub a: Mode,
    pub b: Mode,
    pub comparison: Comparison,
    pub p_holm: f64,
    pub wilcoxon_p_holm: f64,
}

/// Paired tests of `reference` against every other mode on one metric,
/// Holm-adjusted within the family.
pub fn compare_modes(
    metric: &str,
    reference: (Mode, &[f64]),
    others: &[(Mode, Vec<f64>)],
) -> Vec<StatRow> {
    let mut rows: Vec<StatRow> = Vec::new();
    for (mode, xs) in others {
        if let Ok(c) = metrics::compare(reference.1, xs) {
            rows.push(StatRow {
                metric: metric.to_string(),
                a: reference.0,
                b: *mode,
                comparison: c,
                p_holm: 0.0,
                wilcoxon_p_holm: 0.0,
            });
        }
    }
    let p: Vec<f64> = rows.iter().map(|r| r.comparison.p_value).collect();
    let wp: Vec<f64> = rows.iter().map(|r| r.comparison.wilcoxon_p).collect();
    for ((r, a), b) in rows
        .iter_mut()
        .zip(stats::holm_bonferroni(&p))
        .zip(stats::holm_bonferroni(&wp))
    {
        r.p_holm = a;
        r.wilcoxon_p_holm = b;
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub fault_rate_per_min: f64,
    pub mode: Mode,
    pub retention_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub theta: f64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub macro_f1_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub users: u32,
    pub throughput_rps: f64,
    pub avg_rt_ms: f64,
    pub error_rate_pct: f64,
    pub retention_pct: f64,
}

/// False positives and negatives summed over classes.
pub fn fp_fn(c: &ConfusionCounts) -> (u64, u64) {
    (c.fp.iter().sum(), c.fn_.iter().sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub model_summary: Option<ModelSummary>,
    pub detection: Option<DetectionTable>,
    pub recovery: Vec<RecoveryRow>,
    pub baselines: Vec<BaselineRow>,
    pub throughput_series: Vec<SeriesPoint>,
    pub theta_sweep: Vec<ThetaPoint>,
    pub load_sweep: Vec<LoadPoint>,
    pub feedback: Option<FeedbackCurve>,
    pub statistics: Vec<StatRow>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(config: ExperimentConfig) -> Self {
        ExperimentReport {
            seed: config.seed,
            config,
            model_summary: None,
            detection: None,
            recovery: Vec::new(),
            baselines: Vec::new(),
            throughput_series: Vec::new(),
            theta_sweep: Vec::new(),
            load_sweep: Vec::new(),
            feedback: None,
            statistics: Vec::new(),
            notes: Vec::new(),
        }
    }
}
