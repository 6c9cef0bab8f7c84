//! The closed-loop world: workload, application, chaos, monitoring and one
//! recovery mode, all driven by a single event queue.

use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyze::{Analyzer, AnalyzerConfig, Diagnosis, LabeledWindow, Models};
use crate::chaos::{Chaos, ChaosError, ClearedBy, FaultEvent, FaultScenario, FaultType};
use crate::classes::DiagnosisClass;
use crate::engine::{EventKind, RngStream, Scheduler, SimEvent, SimTime, TraceDigest};
use crate::execute::{
    ActionRecord, ExecConfig, ExecError, FeedbackTiming, ManualConfig, Mode, RecoveryOutcome,
};
use crate::monitor::{Monitor, MonitorConfig, MonitorError, TelemetrySample};
use crate::plan::{self, ActionKind, ActionSpec, KnowledgeBase, OutcomeKey, PlanError, RuleTable};
use crate::webapp::{App, AppConfig, Counters, TierId, WorkloadConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub app: AppConfig,
    pub workload: WorkloadConfig,
    pub monitor: MonitorConfig,
    pub analyzer: AnalyzerConfig,
    pub exec: ExecConfig,
    pub rules: RuleTable,
    pub scenarios: Vec<FaultScenario>,
    /// Healthy lead-in used to measure baseline response times.
    pub warmup_s: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            app: AppConfig::default(),
            workload: WorkloadConfig::default(),
            monitor: MonitorConfig::default(),
            analyzer: AnalyzerConfig::default(),
            exec: ExecConfig::default(),
            rules: RuleTable::default(),
            scenarios: crate::chaos::catalog(),
            warmup_s: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Chaos(#[from] ChaosError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("cannot run backwards to {0}")]
    TimeReversal(SimTime),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Hold {
    Throttle,
    ScaleOut,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ev {
    Arrival { user: u32 },
    Complete { id: u64 },
    Telemetry,
    Mape,
    Inject { scenario: u32 },
    Expire { fault: u64 },
    ActionStart { incident: usize },
    Attempt { incident: usize },
    ActionDone { incident: usize, attempt: u32 },
    HoldEnd { tier: TierId, hold: Hold },
}

impl SimEvent for Ev {
    fn kind(&self) -> EventKind {
        match self {
            Ev::Arrival { .. } => EventKind::RequestArrival,
            Ev::Complete { .. } => EventKind::RequestComplete,
            Ev::Telemetry => EventKind::TelemetryTick,
            Ev::Mape => EventKind::MapeTick,
            Ev::Inject { .. } => EventKind::FaultInject,
            Ev::Expire { .. } => EventKind::FaultClear,
            Ev::ActionStart { .. }
            | Ev::Attempt { .. }
            | Ev::ActionDone { .. }
            | Ev::HoldEnd { .. } => EventKind::ActionComplete,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Phase {
    Acting,
    Verifying {
        since: SimTime,
        streak: u32,
        unhealthy: u32,
        ticks: u32,
    },
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Try {
    strategy: u32,
    fixed: bool,
    started: SimTime,
}

#[derive(Clone, Debug)]
struct Incident {
    id: u64,
    tier: TierId,
    class: DiagnosisClass,
    t_detected: SimTime,
    fault: Option<u64>,
    order: Vec<u32>,
    pos: usize,
    action_idx: usize,
    attempts: u32,
    phase: Phase,
    current: Option<(ActionSpec, u32)>,
    t_fix: Option<SimTime>,
    tries: Vec<Try>,
    actions: Vec<ActionRecord>,
    stale: bool,
    rng: RngStream,
    /// Manual runbook: action and total operator delay.
    manual: Option<(ActionSpec, f64)>,
}

/// Everything a finished run hands back.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub mode: Mode,
    pub seed: u64,
    pub horizon: SimTime,
    pub outcomes: Vec<RecoveryOutcome>,
    pub diagnoses: Vec<Diagnosis>,
    pub faults: Vec<FaultEvent>,
    pub ok_per_sec: Vec<u32>,
    pub counters: Counters,
    pub digest: TraceDigest,
    pub telemetry: Vec<TelemetrySample>,
    pub training: Vec<LabeledWindow>,
    pub baseline_rt_ms: [f64; 3],
    pub skipped_injections: u32,
}

impl RunResult {
    /// Successful completions with completion time in `[from, to)`.
    pub fn ok_between(&self, from: SimTime, to: SimTime) -> u64 {
        let a = (from.as_micros() / 1_000_000) as usize;
        let b = ((to.as_micros() / 1_000_000) as usize).min(self.ok_per_sec.len());
        if a >= b {
            return 0;
        }
        self.ok_per_sec[a..b].iter().map(|&x| u64::from(x)).sum()
    }
}

pub struct World {
    cfg: WorldConfig,
    mode: Mode,
    seed: u64,
    started: bool,
    sched: Scheduler<Ev>,
    app: App,
    chaos: Chaos,
    monitor: Monitor,
    analyzer: Option<Analyzer>,
    models: Option<Arc<Models>>,
    kb: KnowledgeBase,
    /// Where outcomes are recorded; the same as `kb` under per-incident feedback.
    learned: KnowledgeBase,
    epsilon: f64,
    workload_rng: RngStream,
    faults_rng: RngStream,
    incidents: Vec<Incident>,
    outcomes: Vec<RecoveryOutcome>,
    diagnoses: Vec<Diagnosis>,
    baseline_acc: [(f64, u32); 3],
    baseline_rt: [f64; 3],
    probe_down: [Option<(SimTime, u32)>; 3],
    holds: [[u32; 2]; 3],
    record_telemetry: bool,
    telemetry: Vec<TelemetrySample>,
    collect_training: bool,
    training: Vec<LabeledWindow>,
    skipped: u32,
}

const TICK: SimTime = SimTime::from_secs(1);

fn analyzer_for(mode: Mode, cfg: AnalyzerConfig, models: Option<Arc<Models>>) -> Option<Analyzer> {
    match mode {
        Mode::OrchestratorOnly => None,
        Mode::RuleOnly => Some(Analyzer::new(cfg, None)),
        _ => Some(Analyzer::new(cfg, models)),
    }
}

impl World {
    /// `models` feeds the ML gate in the modes that use it; `kb` and
    /// `epsilon` only matter for AutoFix.
    pub fn new(
        cfg: WorldConfig,
        mode: Mode,
        seed: u64,
        models: Option<Arc<Models>>,
        kb: KnowledgeBase,
        epsilon: f64,
    ) -> Self {
        let mut faults_rng = RngStream::derive(seed, "faults", 0);
        let workload_rng = RngStream::derive(seed, "workload", 0);
        let app = App::new(cfg.app, cfg.workload, &mut faults_rng);
        let analyzer = analyzer_for(mode, cfg.analyzer, models.clone());
        let baseline_rt = TierId::ALL.map(|t| cfg.app.tier(t).base_latency_ms * 1.1);
        World {
            chaos: Chaos::new(cfg.scenarios.clone()),
            monitor: Monitor::new(cfg.monitor),
            cfg,
            mode,
            seed,
            started: false,
            sched: Scheduler::new(),
            app,
            analyzer,
            models,
            learned: kb.clone(),
            kb,
            epsilon,
            workload_rng,
            faults_rng,
            incidents: Vec::new(),
            outcomes: Vec::new(),
            diagnoses: Vec::new(),
            baseline_acc: [(0.0, 0); 3],
            baseline_rt,
            probe_down: [None; 3],
            holds: [[0; 2]; 3],
            record_telemetry: false,
            telemetry: Vec::new(),
            collect_training: false,
            training: Vec::new(),
            skipped: 0,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) -> Result<(), SimError> {
        if self.started {
            return Err(ExecError::ModeLocked.into());
        }
        if mode != self.mode {
            self.analyzer = analyzer_for(mode, self.cfg.analyzer, self.models.clone());
            self.mode = mode;
        }
        Ok(())
    }

    pub fn record_telemetry(&mut self, on: bool) {
        self.record_telemetry = on;
    }

    pub fn collect_training(&mut self, on: bool) {
        self.collect_training = on;
    }

    pub fn app(&self) -> &App {
        &self.app
    }

    pub fn app_mut(&mut self) -> &mut App {
        &mut self.app
    }

    pub fn chaos(&self) -> &Chaos {
        &self.chaos
    }

    pub fn monitor(&self) -> &Monitor {
        &self.monitor
    }

    /// Knowledge base including every outcome recorded so far.
    pub fn kb(&self) -> &KnowledgeBase {
        &self.learned
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn outcomes(&self) -> &[RecoveryOutcome] {
        &self.outcomes
    }

    pub fn diagnoses(&self) -> &[Diagnosis] {
        &self.diagnoses
    }

    pub fn digest(&self) -> TraceDigest {
        self.sched.digest()
    }

    pub fn schedule_injection(&mut self, t: SimTime, scenario: u32) -> Result<(), SimError> {
        if self.chaos.scenario(scenario).is_none() {
            return Err(ChaosError::UnknownScenario(scenario).into());
        }
        self.sched
            .schedule(Ev::Inject { scenario }, t)
            .map_err(|_| SimError::TimeReversal(t))?;
        Ok(())
    }

    fn start(&mut self) {
        self.started = true;
        let think = self.cfg.workload.think_time_s;
        let spread = if think.is_finite() { think } else { 1.0 };
        for user in 0..self.cfg.workload.users {
            let at = SimTime::from_secs_f64(self.workload_rng.uniform() * spread);
            self.sched.schedule_in(Ev::Arrival { user }, at);
        }
        self.sched.schedule_in(Ev::Telemetry, TICK);
    }

    pub fn run_until(&mut self, t_end: SimTime) -> Result<(), SimError> {
        if !self.started {
            self.start();
        }
        if t_end < self.sched.now() {
            return Err(SimError::TimeReversal(t_end));
        }
        while let Some(ev) = self.sched.pop_due(t_end) {
            self.handle(ev.event)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> RunResult {
        let horizon = self.sched.now();
        // close incidents still open at the horizon
        for i in 0..self.incidents.len() {
            if self.incidents[i].phase != Phase::Done {
                self.conclude(i, false);
            }
        }
        RunResult {
            mode: self.mode,
            seed: self.seed,
            horizon,
            outcomes: self.outcomes,
            diagnoses: self.diagnoses,
            faults: self.chaos.events().to_vec(),
            ok_per_sec: self.app.ok_per_second().to_vec(),
            counters: self.app.counters,
            digest: self.sched.digest(),
            telemetry: self.telemetry,
            training: self.training,
            baseline_rt_ms: self.baseline_rt,
            skipped_injections: self.skipped,
        }
    }

    /// Takes the knowledge base out of a finished run.
    pub fn finish_with_kb(mut self) -> (RunResult, KnowledgeBase) {
        let kb = core::mem::take(&mut self.learned);
        (self.finish(), kb)
    }

    fn think(&mut self, user: u32, after: SimTime) {
        let think = self.cfg.workload.think_time_s;
        if think.is_finite() {
            let d = SimTime::from_secs_f64(self.workload_rng.exp_mean(think));
            self.sched
                .schedule_in(Ev::Arrival { user }, after.saturating_add(d));
        }
    }

    fn handle(&mut self, ev: Ev) -> Result<(), SimError> {
        let now = self.sched.now();
        match ev {
            Ev::Arrival { user } => {
                let op = self.cfg.workload.pick_op(&mut self.workload_rng);
                let (id, done) = self.app.issue(user, op, now, &mut self.workload_rng);
                self.sched
                    .schedule(Ev::Complete { id }, done)
                    .map_err(|_| SimError::TimeReversal(done))?;
            }
            Ev::Complete { id } => {
                if let Some(user) = self.app.complete(id, now) {
                    self.think(user, SimTime::ZERO);
                }
            }
            Ev::Telemetry => {
                let samples =
                    self.app
                        .sample_telemetry(now, TICK.as_secs_f64(), &mut self.faults_rng);
                for log in self.app.take_logs() {
                    self.monitor.ingest_log(log)?;
                }
                for s in samples {
                    self.monitor.ingest(s)?;
                    if self.record_telemetry {
                        self.telemetry.push(s);
                    }
                }
                self.sched.schedule_in(Ev::Mape, SimTime::ZERO);
                self.sched.schedule_in(Ev::Telemetry, TICK);
            }
            Ev::Mape => self.mape(now)?,
            Ev::Inject { scenario } => match self.chaos.inject(&mut self.app, scenario, now) {
                Ok(f) => {
                    self.sched
                        .schedule(Ev::Expire { fault: f.fault_id }, f.t_expires)
                        .map_err(|_| SimError::TimeReversal(now))?;
                }
                Err(ChaosError::TierBusy(_)) => self.skipped += 1,
                Err(e) => return Err(e.into()),
            },
            Ev::Expire { fault } => {
                if self.chaos.event(fault).is_some_and(FaultEvent::is_active) {
                    self.chaos
                        .clear(&mut self.app, fault, now, ClearedBy::Expiry)?;
                }
            }
            Ev::ActionStart { incident } => {
                if let Some((spec, _)) = self.incidents[incident].manual {
                    let tier = spec.target(self.incidents[incident].tier);
                    self.begin_side_effects(spec.action, tier);
                    self.incidents[incident].current = Some((spec, 0));
                }
            }
            Ev::Attempt { incident } => {
                if self.incidents[incident].phase != Phase::Done {
                    self.next_attempt(incident, now);
                }
            }
            Ev::ActionDone { incident, attempt } => self.action_done(incident, attempt, now)?,
            Ev::HoldEnd { tier, hold } => {
                let slot = &mut self.holds[tier.index()][hold as usize];
                *slot = slot.saturating_sub(1);
                if *slot == 0 {
                    match hold {
                        Hold::Throttle => self.app.shed_fraction = 0.0,
                        Hold::ScaleOut => self.app.tier_mut(tier).replicas = 1,
                    }
                }
            }
        }
        Ok(())
    }

    fn open_incident_on(&self, tier: TierId) -> bool {
        self.incidents.iter().any(|i| {
            i.phase != Phase::Done
                && (i.tier == tier || i.current.is_some_and(|(s, _)| s.target(i.tier) == tier))
        })
    }

    fn mape(&mut self, now: SimTime) -> Result<(), SimError> {
        let secs = now.as_micros() / 1_000_000;
        if secs >= 5 && secs <= self.cfg.warmup_s {
            for tier in TierId::ALL {
                if let Some(s) = self.monitor.latest(tier) {
                    if s.request_count > 0 && s.available {
                        let acc = &mut self.baseline_acc[tier.index()];
                        acc.0 += s.mean_rt_ms;
                        acc.1 += 1;
                    }
                }
            }
            if secs == self.cfg.warmup_s {
                for tier in TierId::ALL {
                    let (sum, n) = self.baseline_acc[tier.index()];
                    if n > 0 {
                        self.baseline_rt[tier.index()] = sum / f64::from(n);
                    }
                }
            }
        }

        self.verify_tick(now);

        if self.collect_training && secs >= self.cfg.monitor.min_history_s {
            for tier in TierId::ALL {
                if let Ok(features) = self.monitor.feature_vector(tier, now) {
                    let label = self
                        .chaos
                        .active_on(tier)
                        .map(|f| f.fault_type.true_class());
                    self.training.push(LabeledWindow { features, label });
                }
            }
        }

        if self.mode == Mode::OrchestratorOnly {
            self.orchestrator_tick(now);
            return Ok(());
        }
        if secs < self.cfg.monitor.min_history_s {
            return Ok(());
        }
        let suppressed = TierId::ALL.map(|t| self.open_incident_on(t));
        let Some(analyzer) = self.analyzer.as_mut() else {
            return Ok(());
        };
        let found = analyzer.diagnose(&self.monitor, now, suppressed);
        for d in found {
            self.diagnoses.push(d);
            if matches!(
                self.mode,
                Mode::AutoFix | Mode::RuleOnly | Mode::ManualRunbook
            ) && !self.open_incident_on(d.tier)
            {
                self.open_incident(d.tier, d.class, now)?;
            }
        }
        Ok(())
    }

    fn new_incident(&mut self, tier: TierId, class: DiagnosisClass, t_detected: SimTime) -> usize {
        let id = self.incidents.len() as u64;
        let fault = self.chaos.active_on(tier).map(|f| f.fault_id);
        let rng = RngStream::derive(self.seed, "actions", id + 1);
        self.incidents.push(Incident {
            id,
            tier,
            class,
            t_detected,
            fault,
            order: Vec::new(),
            pos: 0,
            action_idx: 0,
            attempts: 0,
            phase: Phase::Acting,
            current: None,
            t_fix: None,
            tries: Vec::new(),
            actions: Vec::new(),
            stale: false,
            rng,
            manual: None,
        });
        self.incidents.len() - 1
    }

    fn open_incident(
        &mut self,
        tier: TierId,
        class: DiagnosisClass,
        now: SimTime,
    ) -> Result<(), SimError> {
        let i = self.new_incident(tier, class, now);
        match self.mode {
            Mode::AutoFix => {
                let eps = self.epsilon;
                let default_ttr = self.cfg.exec.default_ttr_s;
                let inc = &mut self.incidents[i];
                let p = plan::select(
                    &self.cfg.rules,
                    &self.kb,
                    class,
                    tier,
                    eps,
                    default_ttr,
                    &mut inc.rng,
                )?;
                inc.order.push(p.strategy);
                inc.order.extend(p.fallbacks);
                self.next_attempt(i, now);
            }
            Mode::RuleOnly => {
                let order: Vec<u32> = self
                    .cfg
                    .rules
                    .for_class(class)
                    .iter()
                    .map(|s| s.id)
                    .collect();
                if order.is_empty() {
                    return Err(PlanError::UnknownClass(class).into());
                }
                self.incidents[i].order = order;
                let pending = SimTime::from_secs_f64(self.cfg.exec.rule_pending_s);
                self.sched.schedule_in(Ev::Attempt { incident: i }, pending);
            }
            Mode::ManualRunbook => {
                let truth = self.incidents[i]
                    .fault
                    .and_then(|f| self.chaos.event(f))
                    .map(|f| f.fault_type);
                let (spec, rclass) = match truth {
                    Some(ft) => {
                        let action = ManualConfig::runbook_action(ft);
                        let target = if action == ActionKind::ReconnectDb {
                            Some(TierId::Db)
                        } else {
                            None
                        };
                        (
                            ActionSpec {
                                action,
                                tier: target,
                            },
                            ft.true_class().recovery_class(),
                        )
                    }
                    None => {
                        let s = self
                            .cfg
                            .rules
                            .for_class(class)
                            .first()
                            .map(|s| s.actions[0]);
                        (
                            s.unwrap_or(ActionSpec::on_diagnosed(ActionKind::RestartService)),
                            class.recovery_class(),
                        )
                    }
                };
                let inc = &mut self.incidents[i];
                let delay = self.cfg.exec.manual.sample_delay(rclass, &mut inc.rng);
                let lat = self.cfg.exec.latency(spec.action).min(delay);
                inc.manual = Some((spec, delay));
                inc.attempts = 1;
                inc.tries.push(Try {
                    strategy: 0,
                    fixed: false,
                    started: now,
                });
                self.sched.schedule_in(
                    Ev::ActionStart { incident: i },
                    SimTime::from_secs_f64(delay - lat),
                );
                self.sched.schedule_in(
                    Ev::ActionDone {
                        incident: i,
                        attempt: 1,
                    },
                    SimTime::from_secs_f64(delay),
                );
            }
            Mode::OrchestratorOnly | Mode::NoHeal => {}
        }
        Ok(())
    }

    fn orchestrator_tick(&mut self, now: SimTime) {
        for tier in TierId::ALL {
            let down = self.monitor.latest(tier).is_some_and(|s| !s.available);
            let busy = self.open_incident_on(tier);
            let probe = &mut self.probe_down[tier.index()];
            if !down || busy {
                if !down {
                    *probe = None;
                }
                continue;
            }
            let (first, n) = probe.map_or((now, 1), |(f, n)| (f, n + 1));
            *probe = Some((first, n));
            if n >= self.cfg.exec.orchestrator.probe_ticks {
                *probe = None;
                let i = self.new_incident(tier, DiagnosisClass::ServiceCrash, first);
                let spec = ActionSpec::on_diagnosed(ActionKind::RestartService);
                let inc = &mut self.incidents[i];
                let j = self.cfg.exec.jitter;
                let lat = self.cfg.exec.orchestrator.restart_latency_s
                    * (1.0 + inc.rng.uniform_in(-j, j));
                inc.attempts = 1;
                inc.current = Some((spec, 0));
                inc.tries.push(Try {
                    strategy: 0,
                    fixed: false,
                    started: now,
                });
                inc.actions.push(ActionRecord {
                    action: spec.action,
                    tier,
                    strategy: 0,
                    started: now,
                    finished: now.saturating_add(SimTime::from_secs_f64(lat)),
                    fixed: false,
                    stale: false,
                });
                self.begin_side_effects(spec.action, tier);
                self.sched.schedule_in(
                    Ev::ActionDone {
                        incident: i,
                        attempt: 1,
                    },
                    SimTime::from_secs_f64(lat),
                );
            }
        }
    }

    /// Launches the action under the cursor, or concludes the incident.
    fn next_attempt(&mut self, i: usize, now: SimTime) {
        let max = self.cfg.exec.max_attempts;
        let inc = &self.incidents[i];
        if inc.attempts >= max || inc.order.is_empty() {
            self.conclude(i, false);
            return;
        }
        if let Some(f) = inc.fault.and_then(|f| self.chaos.event(f)) {
            if f.cleared_by == ClearedBy::Expiry {
                self.incidents[i].stale = true;
                self.conclude(i, false);
                return;
            }
        }
        let sid = inc.order[inc.pos];
        let Some(strategy) = self.cfg.rules.get(sid) else {
            self.conclude(i, false);
            return;
        };
        let spec = strategy.actions[inc.action_idx.min(strategy.actions.len() - 1)];
        let target = spec.target(inc.tier);
        let new_try = inc.action_idx == 0;
        let lat = {
            let exec = self.cfg.exec;
            exec.sample_latency(spec.action, &mut self.incidents[i].rng)
        };
        let inc = &mut self.incidents[i];
        inc.attempts += 1;
        inc.phase = Phase::Acting;
        inc.current = Some((spec, sid));
        if new_try {
            inc.tries.push(Try {
                strategy: sid,
                fixed: false,
                started: now,
            });
        }
        let finished = now.saturating_add(SimTime::from_secs_f64(lat));
        inc.actions.push(ActionRecord {
            action: spec.action,
            tier: target,
            strategy: sid,
            started: now,
            finished,
            fixed: false,
            stale: false,
        });
        let attempt = inc.attempts;
        self.begin_side_effects(spec.action, target);
        self.sched.schedule_in(
            Ev::ActionDone {
                incident: i,
                attempt,
            },
            SimTime::from_secs_f64(lat),
        );
    }

    /// Advances the strategy cursor after an unsuccessful action.
    fn advance(&mut self, i: usize) {
        let inc = &mut self.incidents[i];
        let len = inc
            .order
            .get(inc.pos)
            .and_then(|&s| self.cfg.rules.get(s))
            .map_or(1, |s| s.actions.len());
        if inc.action_idx + 1 < len {
            inc.action_idx += 1;
        } else {
            inc.action_idx = 0;
            inc.pos = (inc.pos + 1) % inc.order.len().max(1);
        }
    }

    fn begin_side_effects(&mut self, action: ActionKind, tier: TierId) {
        match action {
            ActionKind::RestartService | ActionKind::RollbackDeploy => {
                self.app.tier_mut(tier).maintenance += 1
            }
            ActionKind::ReconnectDb => self.app.tier_mut(TierId::Db).reconnecting += 1,
            _ => {}
        }
    }

    fn reset(&mut self, tier: TierId, now: SimTime) {
        for (user, _) in self.app.reset_connections(tier, now) {
            self.think(user, SimTime::ZERO);
        }
    }

    fn end_side_effects(&mut self, action: ActionKind, tier: TierId, now: SimTime) {
        let jitter = self.app.oom_jitter();
        match action {
            ActionKind::RestartService | ActionKind::RollbackDeploy => {
                let t = self.app.tier_mut(tier);
                t.maintenance = t.maintenance.saturating_sub(1);
                if action == ActionKind::RollbackDeploy {
                    t.deploy_version = t.deploy_version.saturating_sub(1);
                }
                let crashed = t.crashed;
                t.restart(&mut self.faults_rng, jitter);
                // a restart does not undo an injected crash; the fault ledger decides
                self.app.tier_mut(tier).crashed = crashed;
                self.reset(tier, now);
            }
            ActionKind::ReconnectDb => {
                let t = self.app.tier_mut(TierId::Db);
                t.reconnecting = t.reconnecting.saturating_sub(1);
                self.reset(TierId::Db, now);
            }
            ActionKind::ClearCache => self.app.tier_mut(tier).cache_valid = true,
            ActionKind::ApplyPatch => self.app.tier_mut(tier).deploy_version += 1,
            ActionKind::ThrottleTraffic => {
                self.app.shed_fraction = self.app.cfg.throttle_shed;
                self.holds[tier.index()][Hold::Throttle as usize] += 1;
                self.sched.schedule_in(
                    Ev::HoldEnd {
                        tier,
                        hold: Hold::Throttle,
                    },
                    SimTime::from_secs_f64(self.cfg.exec.throttle_hold_s),
                );
            }
            ActionKind::ScaleOut => {
                self.app.tier_mut(tier).replicas = 2;
                self.holds[tier.index()][Hold::ScaleOut as usize] += 1;
                self.sched.schedule_in(
                    Ev::HoldEnd {
                        tier,
                        hold: Hold::ScaleOut,
                    },
                    SimTime::from_secs_f64(self.cfg.exec.scale_hold_s),
                );
            }
        }
    }

    /// Clears `fault` and undoes the state it left behind.
    fn repair(&mut self, fault: &FaultEvent, now: SimTime) -> Result<(), SimError> {
        self.chaos
            .clear(&mut self.app, fault.fault_id, now, ClearedBy::Action)?;
        let jitter = self.app.oom_jitter();
        match fault.fault_type {
            FaultType::MemoryLeak => {
                let t = self.app.tier_mut(fault.target);
                let crashed = t.crashed;
                t.restart(&mut self.faults_rng, jitter);
                t.crashed = crashed;
            }
            FaultType::Deadlock | FaultType::DbTimeout | FaultType::DbDisconnect => {
                self.reset(fault.target, now)
            }
            _ => {}
        }
        Ok(())
    }

    /// Latent draw for one incident on a fault, shared by all of its
    /// actions: an action fixes the fault iff this falls below its success
    /// probability, so repeating an action that already failed cannot help.
    /// A later incident on the same fault draws afresh.
    fn resistance(&self, i: usize, fault_id: u64) -> f64 {
        let nth = self.incidents[..i]
            .iter()
            .filter(|x| x.fault == Some(fault_id))
            .count() as u64;
        RngStream::derive(self.seed, "resistance", (fault_id << 8) | nth.min(255)).uniform()
    }

    fn action_done(&mut self, i: usize, attempt: u32, now: SimTime) -> Result<(), SimError> {
        let inc = &self.incidents[i];
        if inc.phase == Phase::Done || inc.attempts != attempt {
            return Ok(());
        }
        let Some((spec, _)) = inc.current else {
            return Ok(());
        };
        let target = spec.target(inc.tier);
        self.end_side_effects(spec.action, target, now);

        let manual = self.incidents[i].manual.is_some();
        let fixed_here = match self.chaos.active_on(target).copied() {
            Some(f) => {
                let p = if manual {
                    self.cfg.exec.manual.success_p
                } else {
                    self.cfg.exec.success.get(f.fault_type, spec.action)
                };
                let hit = self.resistance(i, f.fault_id) < p;
                if hit {
                    self.repair(&f, now)?;
                }
                hit
            }
            None => true,
        };
        let resolved = match self.incidents[i].fault {
            Some(f) => self
                .chaos
                .event(f)
                .is_some_and(|e| !e.is_active() && e.cleared_by == ClearedBy::Action),
            None => fixed_here,
        };
        let inc = &mut self.incidents[i];
        if let Some(a) = inc.actions.last_mut() {
            a.fixed = resolved;
            a.finished = now;
        }
        if manual && inc.actions.is_empty() {
            inc.actions.push(ActionRecord {
                action: spec.action,
                tier: target,
                strategy: 0,
                started: now
                    .saturating_sub(SimTime::from_secs_f64(self.cfg.exec.latency(spec.action))),
                finished: now,
                fixed: resolved,
                stale: false,
            });
        }
        if resolved {
            inc.t_fix = Some(now);
            if let Some(t) = inc.tries.last_mut() {
                t.fixed = true;
            }
        }
        inc.current = None;
        let verify = Phase::Verifying {
            since: now,
            streak: 0,
            unhealthy: 0,
            ticks: 0,
        };
        match self.mode {
            Mode::AutoFix => {
                if resolved {
                    self.incidents[i].phase = verify;
                } else {
                    self.advance(i);
                    let check = SimTime::from_secs_f64(self.cfg.exec.fallback_check_s);
                    self.sched.schedule_in(Ev::Attempt { incident: i }, check);
                }
            }
            _ => self.incidents[i].phase = verify,
        }
        Ok(())
    }

    fn verify_tick(&mut self, now: SimTime) {
        let h = self.cfg.exec.health;
        for i in 0..self.incidents.len() {
            let Phase::Verifying {
                since,
                streak,
                unhealthy,
                ticks,
            } = self.incidents[i].phase
            else {
                continue;
            };
            if now < since.saturating_add(TICK) {
                continue;
            }
            let tier = self.incidents[i].tier;
            let healthy = self
                .monitor
                .latest(tier)
                .is_some_and(|s| h.is_healthy(s, self.baseline_rt[tier.index()]));
            let (streak, unhealthy) = if healthy {
                (streak + 1, 0)
            } else {
                (0, unhealthy + 1)
            };
            let ticks = ticks + 1;
            if streak >= h.consecutive_ticks {
                let ok = self.incidents[i].t_fix.is_some();
                self.conclude(i, ok);
                continue;
            }
            let rule_gave_up = self.mode == Mode::RuleOnly && unhealthy >= h.consecutive_ticks;
            if rule_gave_up || ticks >= h.timeout_ticks {
                match self.mode {
                    Mode::AutoFix | Mode::RuleOnly => {
                        self.incidents[i].t_fix = None;
                        if let Some(t) = self.incidents[i].tries.last_mut() {
                            t.fixed = false;
                        }
                        self.advance(i);
                        self.next_attempt(i, now);
                    }
                    _ => self.conclude(i, false),
                }
                continue;
            }
            self.incidents[i].phase = Phase::Verifying {
                since,
                streak,
                unhealthy,
                ticks,
            };
        }
    }

    fn conclude(&mut self, i: usize, verified: bool) {
        let inc = &mut self.incidents[i];
        if inc.phase == Phase::Done {
            return;
        }
        if let Some((spec, _)) = inc.current.take() {
            // horizon reached mid-action: release the tier
            let target = spec.target(inc.tier);
            match spec.action {
                ActionKind::RestartService | ActionKind::RollbackDeploy => {
                    let t = self.app.tier_mut(target);
                    t.maintenance = t.maintenance.saturating_sub(1);
                }
                ActionKind::ReconnectDb => {
                    let t = self.app.tier_mut(TierId::Db);
                    t.reconnecting = t.reconnecting.saturating_sub(1);
                }
                _ => {}
            }
        }
        let inc = &mut self.incidents[i];
        inc.phase = Phase::Done;
        let fault_ok = match inc.fault {
            Some(f) => self
                .chaos
                .event(f)
                .is_some_and(|e| e.cleared_by == ClearedBy::Action),
            None => true,
        };
        let success = verified && inc.t_fix.is_some() && fault_ok;
        let fault_type = inc
            .fault
            .and_then(|f| self.chaos.event(f))
            .map(|e| e.fault_type);
        let first_choice_correct = success && inc.tries.len() == 1 && inc.tries[0].fixed;
        let winner = if success {
            inc.tries.last().map(|t| t.strategy)
        } else {
            None
        };
        let outcome = RecoveryOutcome {
            incident: inc.id,
            mode: self.mode,
            tier: inc.tier,
            diagnosed: inc.class,
            fault_id: inc.fault,
            fault_type,
            first_strategy: inc.order.first().copied(),
            strategy: winner.filter(|&s| s != 0),
            success,
            t_detected: inc.t_detected,
            t_recovered: if success { inc.t_fix } else { None },
            attempts: inc.attempts,
            actions: inc.actions.clone(),
            first_choice_correct,
            stale: inc.stale,
        };
        if self.mode == Mode::AutoFix && self.cfg.exec.feedback {
            for (k, t) in inc.tries.iter().enumerate() {
                let last = k + 1 == inc.tries.len();
                let ok = t.fixed && (!last || success);
                // a fallback is credited from its own start, the first try from detection
                let from = if k == 0 { inc.t_detected } else { t.started };
                let ttr = inc
                    .t_fix
                    .filter(|_| ok)
                    .map(|f| f.saturating_sub(from).as_secs_f64());
                let key = OutcomeKey {
                    run: self.seed,
                    incident: inc.id,
                    attempt: k as u32,
                };
                // keys are unique per incident and try
                let _ = self
                    .learned
                    .record_outcome(key, inc.class, t.strategy, ok, ttr);
            }
            if self.cfg.exec.feedback_timing == FeedbackTiming::PerIncident {
                self.kb = self.learned.clone();
            }
        }
        self.outcomes.push(outcome);
    }
}

/// Sequential protocol: a healthy lead-in, then each scenario in turn with a
/// healthy gap after its nominal lifetime. Returns injection times.
pub fn sequential_schedule(
    scenarios: &[FaultScenario],
    warmup_s: f64,
    gap_s: f64,
) -> Vec<(SimTime, u32)> {
    let mut t = warmup_s;
    let mut out = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        out.push((SimTime::from_secs_f64(t), s.id));
        t += s.duration_s + gap_s;
    }
    out
}

/// End of a sequential schedule.
pub fn sequential_horizon(scenarios: &[FaultScenario], warmup_s: f64, gap_s: f64) -> SimTime {
    SimTime::from_secs_f64(warmup_s + scenarios.iter().map(|s| s.duration_s + gap_s).sum::<f64>())
}

/// Nominal fault windows `[inject, inject + duration)` of a run.
pub fn fault_windows(faults: &[FaultEvent]) -> Vec<(SimTime, SimTime)> {
    let mut w: Vec<(SimTime, SimTime)> =
        faults.iter().map(|f| (f.t_injected, f.t_expires)).collect();
    w.sort();
    let mut merged: Vec<(SimTime, SimTime)> = Vec::new();
    for (a, b) in w {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
}

pub fn ok_in_windows(r: &RunResult, windows: &[(SimTime, SimTime)]) -> u64 {
    windows.iter().map(|&(a, b)| r.ok_between(a, b)).sum()
}
