//! MAPE Execute: action catalog, effectiveness table, recovery modes and the
//! models for manual and orchestrator-only recovery.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaos::FaultType;
use crate::classes::{DiagnosisClass, RecoveryClass};
use crate::engine::{RngStream, SimTime};
use crate::monitor::TelemetrySample;
use crate::plan::ActionKind;
use crate::webapp::TierId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "autofix", alias = "AutoFix")]
    AutoFix,
    #[serde(rename = "manual", alias = "ManualRunbook")]
    ManualRunbook,
    #[serde(rename = "rule-only", alias = "RuleOnly")]
    RuleOnly,
    #[serde(rename = "orchestrator", alias = "OrchestratorOnly")]
    OrchestratorOnly,
    #[serde(rename = "no-heal", alias = "NoHeal")]
    NoHeal,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::ManualRunbook,
        Mode::RuleOnly,
        Mode::OrchestratorOnly,
        Mode::AutoFix,
        Mode::NoHeal,
    ];

    /// The four healing modes in the order the comparison table lists them.
    pub const HEALING: [Mode; 4] = [
        Mode::ManualRunbook,
        Mode::RuleOnly,
        Mode::OrchestratorOnly,
        Mode::AutoFix,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            Mode::AutoFix => "autofix",
            Mode::ManualRunbook => "manual",
            Mode::RuleOnly => "rule-only",
            Mode::OrchestratorOnly => "orchestrator",
            Mode::NoHeal => "no-heal",
        }
    }

    pub const fn label(self) -> &'static str {
        match self {
            Mode::AutoFix => "Proposed (AutoFix)",
            Mode::ManualRunbook => "Manual Runbook",
            Mode::RuleOnly => "Rule-only AIOps",
            Mode::OrchestratorOnly => "Orchestrator-only",
            Mode::NoHeal => "No healing",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        let s = s.to_ascii_lowercase().replace('_', "-");
        match s.as_str() {
            "autofix" | "auto-fix" | "proposed" => Some(Mode::AutoFix),
            "manual" | "manual-runbook" => Some(Mode::ManualRunbook),
            "rule-only" | "ruleonly" | "rule" => Some(Mode::RuleOnly),
            "orchestrator" | "orchestrator-only" => Some(Mode::OrchestratorOnly),
            "no-heal" | "noheal" | "none" => Some(Mode::NoHeal),
            _ => None,
        }
    }
}

/// Probability that an action removes a fault, by fault type and action.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuccessTable {
    pub p: [[f64; 7]; 8],
}

impl Default for SuccessTable {
    fn default() -> Self {
        // columns: restart, rollback, clear-cache, reconnect, patch, throttle, scale-out
        SuccessTable {
            p: [
                [1.00, 1.00, 0.00, 0.00, 0.00, 0.00, 0.00], // crash
                [0.50, 0.60, 0.00, 0.00, 0.92, 0.00, 0.00], // leak
                [0.90, 0.00, 0.00, 0.95, 0.00, 0.00, 0.00], // db disconnect
                [0.95, 0.00, 0.20, 0.50, 0.00, 0.00, 0.30], // db timeout
                [0.30, 0.20, 0.00, 0.00, 0.20, 0.50, 0.90], // cpu
                [0.10, 0.70, 0.10, 0.00, 0.85, 0.00, 0.00], // http 500
                [0.00, 0.30, 0.20, 0.00, 0.88, 0.00, 0.00], // logic
                [0.60, 0.40, 0.00, 0.00, 0.88, 0.00, 0.00], // deadlock
            ],
        }
    }
}

impl SuccessTable {
    pub fn get(&self, fault: FaultType, action: ActionKind) -> f64 {
        self.p[fault.index()][action.index()]
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        for (i, row) in self.p.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ExecError::BadProbability {
                        fault: FaultType::ALL[i],
                        action: ActionKind::ALL[j],
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Post-action health gate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HealthCheck {
    pub max_error_rate: f64,
    /// Mean response time must stay below this multiple of the tier baseline.
    pub rt_factor: f64,
    pub consecutive_ticks: u32,
    /// Ticks after which an unverified action counts as failed.
    pub timeout_ticks: u32,
}

impl Default for HealthCheck {
    fn default() -> Self {
        HealthCheck {
            max_error_rate: 0.01,
            rt_factor: 1.5,
            consecutive_ticks: 3,
            timeout_ticks: 10,
        }
    }
}

impl HealthCheck {
    pub fn is_healthy(&self, s: &TelemetrySample, baseline_rt_ms: f64) -> bool {
        if !s.available {
            return false;
        }
        if s.request_count == 0 {
            return true;
        }
        let er = f64::from(s.error_count) / f64::from(s.request_count);
        er < self.max_error_rate && s.mean_rt_ms < self.rt_factor * baseline_rt_ms
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManualConfig {
    /// Mean operator time per recovery class, seconds.
    pub mean_s: [f64; 5],
    pub sd_fraction: f64,
    pub floor_s: f64,
    pub success_p: f64,
}

impl Default for ManualConfig {
    fn default() -> Self {
        ManualConfig {
            mean_s: [7.8, 10.4, 9.2, 8.5, 8.9],
            sd_fraction: 0.1,
            floor_s: 0.5,
            success_p: 0.9,
        }
    }
}

impl ManualConfig {
    /// Normal draw around the class mean, redrawn below the floor.
    pub fn sample_delay(&self, class: RecoveryClass, rng: &mut RngStream) -> f64 {
        let mean = self.mean_s[class.index()];
        let sd = mean * self.sd_fraction;
        for _ in 0..64 {
            let x = rng.normal(mean, sd);
            if x >= self.floor_s {
                return x;
            }
        }
        self.floor_s.max(mean)
    }

    /// What the operator ends up doing for a given fault.
    pub fn runbook_action(fault: FaultType) -> ActionKind {
        match fault {
            FaultType::ServiceCrash
            | FaultType::MemoryLeak
            | FaultType::DbTimeout
            | FaultType::Deadlock => ActionKind::RestartService,
            FaultType::DbDisconnect => ActionKind::ReconnectDb,
            FaultType::CpuOverload => ActionKind::ThrottleTraffic,
            FaultType::Http500Burst => ActionKind::RollbackDeploy,
            FaultType::LogicError => ActionKind::ApplyPatch,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrchestratorConfig {
    /// Consecutive failed liveness probes before a restart.
    pub probe_ticks: u32,
    pub restart_latency_s: f64,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            probe_ticks: 3,
            restart_latency_s: 3.0,
        }
    }
}

/// When recorded outcomes start to influence selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackTiming {
    /// Right after each incident closes.
    PerIncident,
    /// Outcomes of a run are merged when it finishes; selection within the
    /// run sees the knowledge base it started with.
    PerRun,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecConfig {
    pub dispatch_s: f64,
    /// Relative half-width of the uniform latency jitter.
    pub jitter: f64,
    pub max_attempts: u32,
    /// Nominal latency per action, seconds, in `ActionKind::ALL` order.
    pub latency_s: [f64; 7],
    pub throttle_hold_s: f64,
    pub scale_hold_s: f64,
    pub health: HealthCheck,
    pub success: SuccessTable,
    pub manual: ManualConfig,
    pub orchestrator: OrchestratorConfig,
    /// How long a rule-only alert must stay pending before its rule fires.
    pub rule_pending_s: f64,
    /// Probing after an AutoFix action that did not clear the fault, before
    /// the next strategy is tried.
    pub fallback_check_s: f64,
    /// Learn from outcomes (AutoFix only).
    pub feedback: bool,
    pub feedback_timing: FeedbackTiming,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    /// Utility stand-in for strategies without a successful trial.
    pub default_ttr_s: f64,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            dispatch_s: 0.2,
            jitter: 0.1,
            max_attempts: 3,
            latency_s: [3.0, 3.5, 1.0, 2.5, 3.8, 0.5, 4.0],
            throttle_hold_s: 30.0,
            scale_hold_s: 120.0,
            health: HealthCheck::default(),
            success: SuccessTable::default(),
            manual: ManualConfig::default(),
            orchestrator: OrchestratorConfig::default(),
            rule_pending_s: 2.0,
            fallback_check_s: 1.0,
            feedback: true,
            feedback_timing: FeedbackTiming::PerRun,
            epsilon: 0.1,
            epsilon_decay: 0.8,
            default_ttr_s: 5.0,
        }
    }
}

impl ExecConfig {
    pub fn latency(&self, a: ActionKind) -> f64 {
        self.latency_s[a.index()]
    }

    /// Dispatch plus jittered action latency.
    pub fn sample_latency(&self, a: ActionKind, rng: &mut RngStream) -> f64 {
        self.dispatch_s + self.latency(a) * (1.0 + rng.uniform_in(-self.jitter, self.jitter))
    }

    pub fn validate(&self) -> Result<(), ExecError> {
        self.success.validate()?;
        if self.max_attempts == 0 {
            return Err(ExecError::Invalid("max_attempts must be at least 1"));
        }
        if self.latency_s.iter().any(|l| !(*l > 0.0))
            || !(self.dispatch_s >= 0.0)
            || !(self.rule_pending_s >= 0.0)
            || !(self.fallback_check_s >= 0.0)
        {
            return Err(ExecError::Invalid("latencies must be positive"));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(ExecError::Invalid("jitter must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) || !(0.0..=1.0).contains(&self.epsilon_decay) {
            return Err(ExecError::Invalid(
                "epsilon and its decay must lie in [0, 1]",
            ));
        }
        if !(0.0..=1.0).contains(&self.manual.success_p)
            || self.manual.mean_s.iter().any(|m| !(*m > 0.0))
        {
            return Err(ExecError::Invalid("manual model out of range"));
        }
        if self.orchestrator.probe_ticks == 0 || self.health.consecutive_ticks == 0 {
            return Err(ExecError::Invalid("tick counts must be at least 1"));
        }
        if self.health.timeout_ticks < self.health.consecutive_ticks {
            return Err(ExecError::Invalid(
                "verification timeout shorter than the healthy streak",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("success probability {value} for {fault:?}/{action:?} outside [0, 1]")]
    BadProbability {
        fault: FaultType,
        action: ActionKind,
        value: f64,
    },
    #[error("{0}")]
    Invalid(&'static str),
    #[error("mode cannot change while a run is in progress")]
    ModeLocked,
}

/// One recovery attempt as it ran.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub action: ActionKind,
    pub tier: TierId,
    pub strategy: u32,
    pub started: SimTime,
    pub finished: SimTime,
    pub fixed: bool,
    /// Ran after the fault was already gone.
    pub stale: bool,
}

/// Result of handling one incident.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOutcome {
    pub incident: u64,
    pub mode: Mode,
    pub tier: TierId,
    pub diagnosed: DiagnosisClass,
    pub fault_id: Option<u64>,
    pub fault_type: Option<FaultType>,
    pub first_strategy: Option<u32>,
    /// Strategy that resolved the incident.
    pub strategy: Option<u32>,
    pub success: bool,
    pub t_detected: SimTime,
    pub t_recovered: Option<SimTime>,
    pub attempts: u32,
    pub actions: Vec<ActionRecord>,
    /// The first strategy chosen fixed the fault without fallback.
    pub first_choice_correct: bool,
    pub stale: bool,
}

impl RecoveryOutcome {
    /// Recovery class used for reporting: ground truth when known.
    pub fn recovery_class(&self) -> RecoveryClass {
        self.fault_type
            .map_or(self.diagnosed, FaultType::true_class)
            .recovery_class()
    }
}
