//! Three-tier application model driven by a closed-loop user population.
//!
//! Per-request work is resolved analytically at arrival: each tier on the
//! path contributes `base * jitter * 1/(1 - min(rho, 0.95)) * gc_penalty`
//! milliseconds, where `rho` is the tier's smoothed utilization plus its
//! CPU bias. Only the completion is an event.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{RngStream, SimTime};
use crate::monitor::{LogCode, LogEvent, LogSeverity, TelemetrySample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TierId {
    Frontend,
    Api,
    Db,
}

impl TierId {
    pub const ALL: [TierId; 3] = [TierId::Frontend, TierId::Api, TierId::Db];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        match self {
            TierId::Frontend => "frontend",
            TierId::Api => "api",
            TierId::Db => "db",
        }
    }

    pub fn parse(s: &str) -> Option<TierId> {
        TierId::ALL.into_iter().find(|t| t.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Availability {
    Up,
    Degraded,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpType {
    Login,
    Upload,
    Query,
}

impl OpType {
    pub const ALL: [OpType; 3] = [OpType::Login, OpType::Upload, OpType::Query];

    pub fn path(self) -> &'static [TierId] {
        match self {
            OpType::Login | OpType::Query => &[TierId::Frontend, TierId::Api, TierId::Db],
            OpType::Upload => &[TierId::Frontend, TierId::Api],
        }
    }

    /// Service demand placed on `tier`, in units of one plain request.
    pub fn work(self, tier: TierId) -> f64 {
        match (self, tier) {
            (OpType::Upload, TierId::Api) => 2.0,
            (OpType::Upload, TierId::Db) => 0.0,
            _ => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadConfig {
    pub users: u32,
    /// Mean of the exponential think time; infinity means each user issues one request.
    pub think_time_s: f64,
    /// Probabilities for login, upload, query.
    pub op_mix: [f64; 3],
    pub request_timeout_s: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            users: 100,
            think_time_s: 1.0,
            op_mix: [0.3, 0.2, 0.5],
            request_timeout_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("op_mix must be non-negative and sum to 1, got {0:?}")]
    BadMix([f64; 3]),
    #[error("workload needs at least one user")]
    NoUsers,
    #[error("think time must be positive")]
    BadThinkTime,
    #[error("request timeout must be positive")]
    BadTimeout,
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let sum: f64 = self.op_mix.iter().sum();
        if self.op_mix.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(WorkloadError::BadMix(self.op_mix));
        }
        if self.users == 0 {
            return Err(WorkloadError::NoUsers);
        }
        if !(self.think_time_s > 0.0) {
            return Err(WorkloadError::BadThinkTime);
        }
        if !(self.request_timeout_s > 0.0 && self.request_timeout_s.is_finite()) {
            return Err(WorkloadError::BadTimeout);
        }
        Ok(())
    }

    pub fn pick_op(&self, rng: &mut RngStream) -> OpType {
        let u = rng.uniform();
        let mut acc = 0.0;
        for (op, p) in OpType::ALL.into_iter().zip(self.op_mix) {
            acc += p;
            if u < acc {
                return op;
            }
        }
        OpType::Query
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierConfig {
    pub service_rate: f64,
    pub concurrency_limit: u32,
    pub base_latency_ms: f64,
    pub mem_baseline_mb: f64,
    pub mem_capacity_mb: f64,
    /// Latency penalty per unit of leaked memory relative to capacity.
    pub gc_gain: f64,
    /// Transient allocation per in-flight request, visible in memory samples.
    pub mem_per_request_mb: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub frontend: TierConfig,
    pub api: TierConfig,
    pub db: TierConfig,
    pub db_timeout_s: f64,
    /// EWMA weight of the newest utilization window.
    pub load_smoothing: f64,
    /// Relative spread of the OOM crash point around capacity.
    pub oom_jitter: f64,
    /// Traffic shed at the frontend while throttling is active.
    pub throttle_shed: f64,
}

impl Default for AppConfig {
    fn default() -> Self {
        let tier = |rate, base, mem| TierConfig {
            service_rate: rate,
            concurrency_limit: 400,
            base_latency_ms: base,
            mem_baseline_mb: mem,
            mem_capacity_mb: 512.0,
            gc_gain: 4.0,
            mem_per_request_mb: 0.5,
        };
        AppConfig {
            frontend: tier(600.0, 5.0, 160.0),
            api: tier(400.0, 20.0, 200.0),
            db: tier(300.0, 10.0, 240.0),
            db_timeout_s: 2.0,
            load_smoothing: 0.5,
            oom_jitter: 0.05,
            throttle_shed: 0.3,
        }
    }
}

impl AppConfig {
    pub fn tier(&self, id: TierId) -> &TierConfig {
        match id {
            TierId::Frontend => &self.frontend,
            TierId::Api => &self.api,
            TierId::Db => &self.db,
        }
    }

    pub fn tier_mut(&mut self, id: TierId) -> &mut TierConfig {
        match id {
            TierId::Frontend => &mut self.frontend,
            TierId::Api => &mut self.api,
            TierId::Db => &mut self.db,
        }
    }
}

/// `1/(1 - min(rho, 0.95))`.
pub fn latency_multiplier(rho: f64) -> f64 {
    1.0 / (1.0 - rho.clamp(0.0, 0.95))
}

#[derive(Clone, Debug, Default)]
struct TierWindow {
    work: f64,
    requests: u32,
    errors: u32,
    rts: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Tier {
    pub id: TierId,
    pub cfg: TierConfig,
    /// Crashed by an injected fault.
    pub crashed: bool,
    /// Crashed by memory exhaustion.
    pub oom_down: bool,
    /// Taken offline by a running recovery action.
    pub maintenance: u32,
    pub mem_used_mb: f64,
    pub oom_threshold_mb: f64,
    pub leak_rate_mb_s: f64,
    pub cpu_load_bias: f64,
    pub error_injection_rate: f64,
    pub logic_error_rate: f64,
    pub deadlock_fraction: f64,
    pub refuse_fraction: f64,
    pub timeout_fraction: f64,
    /// Refusing new connections while reconnecting a pool.
    pub reconnecting: u32,
    pub replicas: u32,
    pub deploy_version: u32,
    pub cache_valid: bool,
    /// Smoothed utilization from traffic alone.
    pub load: f64,
    win: TierWindow,
}

impl Tier {
    fn new(id: TierId, cfg: TierConfig) -> Self {
        Tier {
            id,
            cfg,
            crashed: false,
            oom_down: false,
            maintenance: 0,
            mem_used_mb: cfg.mem_baseline_mb,
            oom_threshold_mb: cfg.mem_capacity_mb,
            leak_rate_mb_s: 0.0,
            cpu_load_bias: 0.0,
            error_injection_rate: 0.0,
            logic_error_rate: 0.0,
            deadlock_fraction: 0.0,
            refuse_fraction: 0.0,
            timeout_fraction: 0.0,
            reconnecting: 0,
            replicas: 1,
            deploy_version: 1,
            cache_valid: true,
            load: 0.0,
            win: TierWindow::default(),
        }
    }

    pub fn is_down(&self) -> bool {
        self.crashed || self.oom_down || self.maintenance > 0
    }

    pub fn availability(&self) -> Availability {
        if self.is_down() {
            Availability::Down
        } else if self.cpu_load_bias > 0.0
            || self.error_injection_rate > 0.0
            || self.logic_error_rate > 0.0
            || self.deadlock_fraction > 0.0
            || self.refuse_fraction > 0.0
            || self.timeout_fraction > 0.0
            || self.leak_rate_mb_s > 0.0
            || self.reconnecting > 0
        {
            Availability::Degraded
        } else {
            Availability::Up
        }
    }

    pub fn rho(&self) -> f64 {
        self.load + self.cpu_load_bias
    }

    fn gc_penalty(&self) -> f64 {
        1.0 + self.cfg.gc_gain * (self.mem_used_mb - self.cfg.mem_baseline_mb).max(0.0)
            / self.cfg.mem_capacity_mb
    }

    /// Process restart: memory back to baseline, crash flags cleared.
    pub fn restart(&mut self, rng: &mut RngStream, jitter: f64) {
        self.crashed = false;
        self.oom_down = false;
        self.mem_used_mb = self.cfg.mem_baseline_mb;
        self.oom_threshold_mb = self.cfg.mem_capacity_mb * (1.0 + rng.uniform_in(-jitter, jitter));
        self.cache_valid = true;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FaultEffect {
    Crash { tier: TierId },
    Leak { tier: TierId, rate_mb_s: f64 },
    DbDisconnect { refuse_fraction: f64 },
    DbTimeout { fraction: f64 },
    CpuOverload { tier: TierId, bias: f64 },
    Http500Burst { tier: TierId, rate: f64 },
    LogicError { tier: TierId, rate: f64 },
    Deadlock { tier: TierId, fraction: f64 },
}

impl FaultEffect {
    pub fn tier(&self) -> TierId {
        match *self {
            FaultEffect::Crash { tier }
            | FaultEffect::Leak { tier, .. }
            | FaultEffect::CpuOverload { tier, .. }
            | FaultEffect::Http500Burst { tier, .. }
            | FaultEffect::LogicError { tier, .. }
            | FaultEffect::Deadlock { tier, .. } => tier,
            FaultEffect::DbDisconnect { .. } | FaultEffect::DbTimeout { .. } => TierId::Db,
        }
    }
}

/// An applied effect together with the parameter value it replaced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppliedEffect {
    pub effect: FaultEffect,
    pub previous: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AppError {
    #[error("effect parameter out of range: {0:?}")]
    BadEffect(FaultEffect),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestStatus {
    Ok,
    Error { http: u16, tier: TierId },
    Timeout { tier: TierId },
    InFlight,
}

impl RequestStatus {
    pub fn is_ok(self) -> bool {
        self == RequestStatus::Ok
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: u64,
    pub op: OpType,
    pub arrival: SimTime,
    pub completion: Option<SimTime>,
    pub status: RequestStatus,
    pub rt_ms: f64,
}

/// Per-tier slice of a resolved request.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Hop {
    reached: bool,
    served_ms: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct InFlight {
    pub id: u64,
    pub user: u32,
    pub op: OpType,
    pub arrival: SimTime,
    pub completes_at: SimTime,
    pub status: RequestStatus,
    /// Tier holding the request until completion.
    pub terminal: TierId,
    log: Option<LogCode>,
    hops: [Hop; 3],
}

/// Running totals over the whole run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub issued: u64,
    pub ok: u64,
    pub errors: u64,
    pub timeouts: u64,
    pub ok_rt_sum_ms: f64,
}

#[derive(Clone, Debug)]
pub struct App {
    pub cfg: AppConfig,
    pub workload: WorkloadConfig,
    tiers: [Tier; 3],
    /// Fraction of arrivals rejected at the frontend (throttling).
    pub shed_fraction: f64,
    in_flight: Vec<InFlight>,
    next_id: u64,
    pub counters: Counters,
    /// Successful completions per whole virtual second.
    ok_per_sec: Vec<u32>,
    ledger: Option<Vec<RequestRecord>>,
    pending_logs: Vec<LogEvent>,
}

impl App {
    pub fn new(cfg: AppConfig, workload: WorkloadConfig, rng: &mut RngStream) -> Self {
        let mut tiers = TierId::ALL.map(|id| Tier::new(id, *cfg.tier(id)));
        for t in &mut tiers {
            t.oom_threshold_mb =
                t.cfg.mem_capacity_mb * (1.0 + rng.uniform_in(-cfg.oom_jitter, cfg.oom_jitter));
        }
        App {
            cfg,
            workload,
            tiers,
            shed_fraction: 0.0,
            in_flight: Vec::new(),
            next_id: 0,
            counters: Counters::default(),
            ok_per_sec: Vec::new(),
            ledger: None,
            pending_logs: Vec::new(),
        }
    }

    /// Keep a full per-request ledger (used for oracle checks).
    pub fn with_ledger(mut self) -> Self {
        self.ledger = Some(Vec::new());
        self
    }

    pub fn tier(&self, id: TierId) -> &Tier {
        &self.tiers[id.index()]
    }

    pub fn tier_mut(&mut self, id: TierId) -> &mut Tier {
        &mut self.tiers[id.index()]
    }

    pub fn ledger(&self) -> Option<&[RequestRecord]> {
        self.ledger.as_deref()
    }

    pub fn ok_per_second(&self) -> &[u32] {
        &self.ok_per_sec
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn in_flight_requests(&self) -> &[InFlight] {
        &self.in_flight
    }

    pub fn oom_jitter(&self) -> f64 {
        self.cfg.oom_jitter
    }

    /// Successful completions with completion second in `[from, to)`.
    pub fn ok_between(&self, from: SimTime, to: SimTime) -> u64 {
        let a = (from.as_micros() / 1_000_000) as usize;
        let b = (to.as_micros() / 1_000_000) as usize;
        let b = b.min(self.ok_per_sec.len());
        if a >= b {
            return 0;
        }
        self.ok_per_sec[a..b].iter().map(|&x| u64::from(x)).sum()
    }

    /// Resolves a new request issued by `user` at `t`, returning its id and completion time.
    pub fn issue(
        &mut self,
        user: u32,
        op: OpType,
        t: SimTime,
        rng: &mut RngStream,
    ) -> (u64, SimTime) {
        let id = self.next_id;
        self.next_id += 1;
        self.counters.issued += 1;
        let timeout = self.workload.request_timeout_s;
        let mut hops = [Hop::default(); 3];
        let mut elapsed_ms = 0.0;
        let mut status = RequestStatus::Ok;
        let mut terminal = *op.path().last().unwrap_or(&TierId::Frontend);
        let mut log = None;
        let mut hold_s: Option<f64> = None;

        'path: for &tid in op.path() {
            let in_flight_here = self.in_flight.iter().filter(|r| r.terminal == tid).count() as u32;
            let shed = self.shed_fraction;
            let db_timeout = self.cfg.db_timeout_s;
            let tier = &mut self.tiers[tid.index()];
            tier.win.work += op.work(tid);
            hops[tid.index()].reached = true;
            terminal = tid;
            if tier.is_down()
                || tier.reconnecting > 0
                || in_flight_here >= tier.cfg.concurrency_limit
            {
                status = RequestStatus::Error {
                    http: 503,
                    tier: tid,
                };
                log = Some(LogCode::ConnRefused);
                elapsed_ms += 1.0;
                break 'path;
            }
            if tid == TierId::Frontend && shed > 0.0 && rng.bernoulli(shed) {
                status = RequestStatus::Error {
                    http: 429,
                    tier: tid,
                };
                elapsed_ms += 1.0;
                break 'path;
            }
            if tier.refuse_fraction > 0.0 && rng.bernoulli(tier.refuse_fraction) {
                status = RequestStatus::Error {
                    http: 503,
                    tier: tid,
                };
                log = Some(LogCode::ConnRefused);
                elapsed_ms += 1.0;
                break 'path;
            }
            let rho = tier.rho() / f64::from(tier.replicas.max(1));
            let served = tier.cfg.base_latency_ms
                * (1.0 + 0.2 * rng.uniform())
                * latency_multiplier(rho)
                * tier.gc_penalty();
            if tier.deadlock_fraction > 0.0 && rng.bernoulli(tier.deadlock_fraction) {
                status = RequestStatus::Timeout { tier: tid };
                log = Some(LogCode::Deadlock);
                hold_s = Some(timeout);
                break 'path;
            }
            if tier.timeout_fraction > 0.0 && rng.bernoulli(tier.timeout_fraction) {
                status = RequestStatus::Error {
                    http: 504,
                    tier: tid,
                };
                log = Some(LogCode::DbTimeout);
                elapsed_ms += db_timeout * 1000.0;
                break 'path;
            }
            hops[tid.index()].served_ms = Some(served);
            elapsed_ms += served;
            if elapsed_ms > timeout * 1000.0 {
                status = RequestStatus::Timeout { tier: tid };
                hold_s = Some(timeout);
                break 'path;
            }
            if tier.error_injection_rate > 0.0 && rng.bernoulli(tier.error_injection_rate) {
                status = RequestStatus::Error {
                    http: 500,
                    tier: tid,
                };
                log = Some(LogCode::Http500);
                break 'path;
            }
            if tier.logic_error_rate > 0.0 && rng.bernoulli(tier.logic_error_rate) {
                status = RequestStatus::Error {
                    http: 500,
                    tier: tid,
                };
                log = Some(LogCode::LogicErr);
                break 'path;
            }
        }

        let latency_s = hold_s.unwrap_or(elapsed_ms / 1000.0).min(timeout);
        let completes_at = t.saturating_add(SimTime::from_secs_f64(latency_s).max(SimTime(1)));
        self.in_flight.push(InFlight {
            id,
            user,
            op,
            arrival: t,
            completes_at,
            status,
            terminal,
            log,
            hops,
        });
        if let Some(l) = self.ledger.as_mut() {
            l.push(RequestRecord {
                id,
                op,
                arrival: t,
                completion: None,
                status: RequestStatus::InFlight,
                rt_ms: 0.0,
            });
        }
        (id, completes_at)
    }

    /// Finalizes request `id` at `t`. Returns the owning user, or `None` if
    /// the request was already finalized.
    pub fn complete(&mut self, id: u64, t: SimTime) -> Option<u32> {
        let pos = self.in_flight.iter().position(|r| r.id == id)?;
        let r = self.in_flight.swap_remove(pos);
        Some(self.finalize(r, t, None))
    }

    fn finalize(&mut self, r: InFlight, t: SimTime, forced: Option<RequestStatus>) -> u32 {
        let status = forced.unwrap_or(r.status);
        for tid in TierId::ALL {
            let hop = r.hops[tid.index()];
            if !hop.reached {
                continue;
            }
            let w = &mut self.tiers[tid.index()].win;
            w.requests += 1;
            if let Some(ms) = hop.served_ms {
                w.rts.push(ms);
            }
        }
        let rt_ms = (t.saturating_sub(r.arrival)).as_secs_f64() * 1000.0;
        match status {
            RequestStatus::Ok => {
                self.counters.ok += 1;
                self.counters.ok_rt_sum_ms += rt_ms;
                let sec = (t.as_micros() / 1_000_000) as usize;
                if self.ok_per_sec.len() <= sec {
                    self.ok_per_sec.resize(sec + 1, 0);
                }
                self.ok_per_sec[sec] += 1;
            }
            RequestStatus::Error { tier, .. } => {
                self.counters.errors += 1;
                self.tiers[tier.index()].win.errors += 1;
            }
            RequestStatus::Timeout { tier } => {
                self.counters.timeouts += 1;
                self.tiers[tier.index()].win.errors += 1;
            }
            RequestStatus::InFlight => {}
        }
        if forced.is_none() {
            if let (Some(code), Some(tier)) = (r.log, status_tier(status)) {
                let severity = if code == LogCode::ConnRefused {
                    LogSeverity::Warn
                } else {
                    LogSeverity::Error
                };
                self.pending_logs.push(LogEvent {
                    t,
                    tier,
                    severity,
                    code,
                    request_id: Some(r.id),
                });
            }
        }
        if let Some(l) = self.ledger.as_mut() {
            if let Some(rec) = l.get_mut(r.id as usize) {
                rec.completion = Some(t);
                rec.status = status;
                rec.rt_ms = rt_ms;
            }
        }
        r.user
    }

    /// Drains log events produced since the last call, in time order.
    pub fn take_logs(&mut self) -> Vec<LogEvent> {
        core::mem::take(&mut self.pending_logs)
    }

    /// Fails every request currently held at `tier` (connection reset on
    /// restart or deadlock release). Returns the affected users.
    pub fn reset_connections(&mut self, tier: TierId, t: SimTime) -> Vec<(u32, u64)> {
        let mut users = Vec::new();
        let mut i = 0;
        while i < self.in_flight.len() {
            if self.in_flight[i].terminal == tier && self.in_flight[i].completes_at > t {
                let r = self.in_flight.swap_remove(i);
                let id = r.id;
                let user = self.finalize(r, t, Some(RequestStatus::Error { http: 503, tier }));
                users.push((user, id));
            } else {
                i += 1;
            }
        }
        users.sort_unstable();
        users
    }

    /// Closes the telemetry window of length `dt` ending at `t`: one sample
    /// per tier, then advances memory state.
    pub fn sample_telemetry(
        &mut self,
        t: SimTime,
        dt: f64,
        rng: &mut RngStream,
    ) -> [TelemetrySample; 3] {
        let mut queue = [0u32; 3];
        for r in &self.in_flight {
            queue[r.terminal.index()] += 1;
        }
        let alpha = self.cfg.load_smoothing;
        let jitter = self.cfg.oom_jitter;
        let mut out = [None; 3];
        for tid in TierId::ALL {
            let tier = &mut self.tiers[tid.index()];
            let win = core::mem::take(&mut tier.win);
            let capacity = tier.cfg.service_rate * f64::from(tier.replicas.max(1)) * dt;
            let util = if capacity > 0.0 {
                win.work / capacity
            } else {
                0.0
            };
            tier.load = alpha * util + (1.0 - alpha) * tier.load;
            let down = tier.is_down();
            let cpu_util = if down {
                0.0
            } else {
                (util + tier.cpu_load_bias).min(1.0)
            };

            if !down && tier.leak_rate_mb_s > 0.0 {
                tier.mem_used_mb += tier.leak_rate_mb_s * dt;
                if tier.mem_used_mb >= tier.oom_threshold_mb {
                    tier.oom_down = true;
                    tier.mem_used_mb = tier.cfg.mem_baseline_mb;
                    tier.oom_threshold_mb =
                        tier.cfg.mem_capacity_mb * (1.0 + rng.uniform_in(-jitter, jitter));
                    self.pending_logs.push(LogEvent {
                        t,
                        tier: tid,
                        severity: LogSeverity::Error,
                        code: LogCode::Oom,
                        request_id: None,
                    });
                }
            }
            let (mean_rt, p95_rt) = if win.rts.is_empty() {
                (0.0, 0.0)
            } else {
                let mean = win.rts.iter().sum::<f64>() / win.rts.len() as f64;
                let mut v = win.rts;
                (mean, crate::monitor::nearest_rank_p95(&mut v))
            };
            let mem = if tier.is_down() {
                0.0
            } else {
                tier.mem_used_mb + tier.cfg.mem_per_request_mb * f64::from(queue[tid.index()])
            };
            out[tid.index()] = Some(TelemetrySample {
                t,
                tier: tid,
                cpu_util,
                mem_used_mb: mem,
                mean_rt_ms: mean_rt,
                p95_rt_ms: p95_rt,
                request_count: win.requests,
                error_count: win.errors.min(win.requests),
                queue_len: queue[tid.index()],
                available: !tier.is_down(),
            });
        }
        out.map(|s| s.expect("every tier sampled"))
    }

    pub fn apply_effect(&mut self, effect: FaultEffect) -> Result<AppliedEffect, AppError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let ok = match effect {
            FaultEffect::Crash { .. } => true,
            FaultEffect::Leak { rate_mb_s, .. } => rate_mb_s >= 0.0 && rate_mb_s.is_finite(),
            FaultEffect::DbDisconnect { refuse_fraction: x }
            | FaultEffect::DbTimeout { fraction: x }
            | FaultEffect::CpuOverload { bias: x, .. }
            | FaultEffect::Http500Burst { rate: x, .. }
            | FaultEffect::LogicError { rate: x, .. }
            | FaultEffect::Deadlock { fraction: x, .. } => unit(x),
        };
        if !ok {
            return Err(AppError::BadEffect(effect));
        }
        let tier = &mut self.tiers[effect.tier().index()];
        let previous = match effect_slot(tier, &effect) {
            Some(slot) => core::mem::replace(slot, effect_value(&effect)),
            None => f64::from(u8::from(core::mem::replace(&mut tier.crashed, true))),
        };
        Ok(AppliedEffect { effect, previous })
    }

    /// Restores the parameter an effect replaced. Leaked memory stays until
    /// a restart; an OOM crash caused by the leak is lifted with it.
    pub fn revert_effect(&mut self, applied: &AppliedEffect) {
        let tier = &mut self.tiers[applied.effect.tier().index()];
        match effect_slot(tier, &applied.effect) {
            Some(slot) => *slot = applied.previous,
            None => tier.crashed = applied.previous != 0.0,
        }
        if let FaultEffect::Leak { .. } = applied.effect {
            tier.oom_down = false;
        }
    }
}

fn status_tier(s: RequestStatus) -> Option<TierId> {
    match s {
        RequestStatus::Error { tier, .. } | RequestStatus::Timeout { tier } => Some(tier),
        _ => None,
    }
}

fn effect_value(e: &FaultEffect) -> f64 {
    match *e {
        FaultEffect::Crash { .. } => 1.0,
        FaultEffect::Leak { rate_mb_s, .. } => rate_mb_s,
        FaultEffect::DbDisconnect { refuse_fraction } => refuse_fraction,
        FaultEffect::DbTimeout { fraction } => fraction,
        FaultEffect::CpuOverload { bias, .. } => bias,
        FaultEffect::Http500Burst { rate, .. } => rate,
        FaultEffect::LogicError { rate, .. } => rate,
        FaultEffect::Deadlock { fraction, .. } => fraction,
    }
}

/// The numeric parameter an effect drives; `None` for the crash flag.
fn effect_slot<'a>(tier: &'a mut Tier, e: &FaultEffect) -> Option<&'a mut f64> {
    Some(match e {
        FaultEffect::Crash { .. } => return None,
        FaultEffect::Leak { .. } => &mut tier.leak_rate_mb_s,
        FaultEffect::DbDisconnect { .. } => &mut tier.refuse_fraction,
        FaultEffect::DbTimeout { .. } => &mut tier.timeout_fraction,
        FaultEffect::CpuOverload { .. } => &mut tier.cpu_load_bias,
        FaultEffect::Http500Burst { .. } => &mut tier.error_injection_rate,
        FaultEffect::LogicError { .. } => &mut tier.logic_error_rate,
        FaultEffect::Deadlock { .. } => &mut tier.deadlock_fraction,
    })
}
