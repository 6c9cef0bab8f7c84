//! Monitor: bounded per-tier telemetry and log buffers, sliding-window
//! statistics and the fixed feature layout consumed by the analyzer.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::webapp::TierId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub t: SimTime,
    pub tier: TierId,
    pub cpu_util: f64,
    pub mem_used_mb: f64,
    pub mean_rt_ms: f64,
    pub p95_rt_ms: f64,
    pub request_count: u32,
    pub error_count: u32,
    pub queue_len: u32,
    pub available: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LogSeverity {
    Info,
    Warn,
    Error,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LogCode {
    Http500,
    DbTimeout,
    Oom,
    Deadlock,
    LogicErr,
    ConnRefused,
}

impl LogCode {
    pub const ALL: [LogCode; 6] = [
        LogCode::Http500,
        LogCode::DbTimeout,
        LogCode::Oom,
        LogCode::Deadlock,
        LogCode::LogicErr,
        LogCode::ConnRefused,
    ];

    pub const fn as_str(self) -> &'static str {
        match self {
            LogCode::Http500 => "HTTP-500",
            LogCode::DbTimeout => "DB-TIMEOUT",
            LogCode::Oom => "OOM",
            LogCode::Deadlock => "DEADLOCK",
            LogCode::LogicErr => "LOGIC-ERR",
            LogCode::ConnRefused => "CONN-REFUSED",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEvent {
    pub t: SimTime,
    pub tier: TierId,
    pub severity: LogSeverity,
    pub code: LogCode,
    pub request_id: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    Cpu,
    Mem,
    MeanRt,
    P95Rt,
    Requests,
    Errors,
    Queue,
    Available,
}

impl Metric {
    pub fn of(self, s: &TelemetrySample) -> f64 {
        match self {
            Metric::Cpu => s.cpu_util,
            Metric::Mem => s.mem_used_mb,
            Metric::MeanRt => s.mean_rt_ms,
            Metric::P95Rt => s.p95_rt_ms,
            Metric::Requests => f64::from(s.request_count),
            Metric::Errors => f64::from(s.error_count),
            Metric::Queue => f64::from(s.queue_len),
            Metric::Available => {
                if s.available {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub metric: Metric,
    pub tier: TierId,
    pub duration_s: f64,
    pub mean: f64,
    pub max: f64,
    pub p95: f64,
    /// Least-squares slope, units per second.
    pub slope: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonitorError {
    #[error("out-of-order sample for {tier:?}: {t} after {last}")]
    OutOfOrder {
        tier: TierId,
        t: SimTime,
        last: SimTime,
    },
    #[error("window of {requested} exceeds retention {retention}")]
    WindowTooLong {
        requested: SimTime,
        retention: SimTime,
    },
    #[error("need {need} of history for {tier:?}, have {have}")]
    InsufficientHistory {
        tier: TierId,
        need: SimTime,
        have: SimTime,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    pub retention_s: u64,
    pub feature_window_s: u64,
    pub slope_window_s: u64,
    pub min_history_s: u64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            retention_s: 300,
            feature_window_s: 10,
            slope_window_s: 60,
            min_history_s: 30,
        }
    }
}

pub const FEATURE_LEN: usize = 10;

/// Feature order is part of the model contract.
pub const FEATURE_NAMES: [&str; FEATURE_LEN] = [
    "cpu_mean",
    "cpu_max",
    "mem_slope",
    "mean_rt",
    "p95_rt",
    "error_rate",
    "http500_rate",
    "db_code_rate",
    "queue_mean",
    "availability",
];

pub type FeatureVector = [f64; FEATURE_LEN];

pub fn nearest_rank_p95(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    // ceil(0.95 n) without float rounding surprises
    let rank = (95 * n).div_ceil(100).max(1);
    values[rank - 1]
}

/// Least-squares slope of `(x, y)` points; zero for fewer than two distinct x.
pub fn ls_slope(points: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let (mut n, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (x, y) in points.clone() {
        n += 1.0;
        sx += x;
        sy += y;
    }
    if n < 2.0 {
        return 0.0;
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

#[derive(Clone, Debug)]
pub struct Monitor {
    cfg: MonitorConfig,
    samples: [VecDeque<TelemetrySample>; 3],
    logs: [VecDeque<LogEvent>; 3],
    first_t: [Option<SimTime>; 3],
    now: SimTime,
}

impl Monitor {
    pub fn new(cfg: MonitorConfig) -> Self {
        Monitor {
            cfg,
            samples: Default::default(),
            logs: Default::default(),
            first_t: [None; 3],
            now: SimTime::ZERO,
        }
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    fn retention(&self) -> SimTime {
        SimTime::from_secs(self.cfg.retention_s)
    }

    pub fn ingest(&mut self, s: TelemetrySample) -> Result<(), MonitorError> {
        let ret = self.retention();
        let buf = &mut self.samples[s.tier.index()];
        if let Some(last) = buf.back() {
            if s.t < last.t {
                return Err(MonitorError::OutOfOrder {
                    tier: s.tier,
                    t: s.t,
                    last: last.t,
                });
            }
        }
        buf.push_back(s);
        while buf.front().is_some_and(|f| f.t.saturating_add(ret) <= s.t) {
            buf.pop_front();
        }
        self.first_t[s.tier.index()].get_or_insert(s.t);
        self.now = self.now.max(s.t);
        Ok(())
    }

    pub fn ingest_log(&mut self, e: LogEvent) -> Result<(), MonitorError> {
        let ret = self.retention();
        let buf = &mut self.logs[e.tier.index()];
        if let Some(last) = buf.back() {
            if e.t < last.t {
                return Err(MonitorError::OutOfOrder {
                    tier: e.tier,
                    t: e.t,
                    last: last.t,
                });
            }
        }
        buf.push_back(e);
        while buf.front().is_some_and(|f| f.t.saturating_add(ret) <= e.t) {
            buf.pop_front();
        }
        self.now = self.now.max(e.t);
        Ok(())
    }

    pub fn samples(&self, tier: TierId) -> &VecDeque<TelemetrySample> {
        &self.samples[tier.index()]
    }

    pub fn latest(&self, tier: TierId) -> Option<&TelemetrySample> {
        self.samples[tier.index()].back()
    }

    /// Samples with `t` in `(end - duration, end]`.
    pub fn samples_in(
        &self,
        tier: TierId,
        end: SimTime,
        duration: SimTime,
    ) -> impl Iterator<Item = &TelemetrySample> + Clone {
        let buf = &self.samples[tier.index()];
        let lo = if end < duration {
            0
        } else {
            buf.partition_point(|s| s.t <= end.saturating_sub(duration))
        };
        buf.range(lo..).take_while(move |s| s.t <= end)
    }

    /// Logs with `t` in `(end - duration, end]`, optionally filtered by code.
    pub fn logs_in(
        &self,
        tier: TierId,
        code: Option<LogCode>,
        end: SimTime,
        duration: SimTime,
    ) -> impl Iterator<Item = &LogEvent> {
        let buf = &self.logs[tier.index()];
        let lo = if end < duration {
            0
        } else {
            buf.partition_point(|l| l.t <= end.saturating_sub(duration))
        };
        buf.range(lo..)
            .take_while(move |l| l.t <= end)
            .filter(move |l| code.is_none_or(|c| l.code == c))
    }

    pub fn log_count(&self, tier: TierId, code: LogCode, end: SimTime, duration: SimTime) -> usize {
        self.logs_in(tier, Some(code), end, duration).count()
    }

    /// Statistics over `(now - duration, now]`. `Ok(None)` means the window is empty.
    pub fn window(
        &self,
        metric: Metric,
        tier: TierId,
        duration: SimTime,
    ) -> Result<Option<WindowStats>, MonitorError> {
        self.window_at(metric, tier, duration, self.now)
    }

    pub fn window_at(
        &self,
        metric: Metric,
        tier: TierId,
        duration: SimTime,
        end: SimTime,
    ) -> Result<Option<WindowStats>, MonitorError> {
        if duration > self.retention() {
            return Err(MonitorError::WindowTooLong {
                requested: duration,
                retention: self.retention(),
            });
        }
        let it = self.samples_in(tier, end, duration);
        let mut values: Vec<f64> = it.clone().map(|s| metric.of(s)).collect();
        if values.is_empty() {
            return Ok(None);
        }
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slope = ls_slope(it.map(|s| (s.t.as_secs_f64(), metric.of(s))));
        let p95 = nearest_rank_p95(&mut values);
        Ok(Some(WindowStats {
            metric,
            tier,
            duration_s: duration.as_secs_f64(),
            mean,
            max,
            p95,
            slope,
            count,
        }))
    }

    pub fn has_history(&self, tier: TierId, t: SimTime) -> bool {
        let need = SimTime::from_secs(self.cfg.min_history_s);
        self.first_t[tier.index()].is_some_and(|f| t.saturating_sub(f) >= need)
    }

    /// The 10-feature vector for `tier`, each over the feature window ending at `t`.
    pub fn feature_vector(&self, tier: TierId, t: SimTime) -> Result<FeatureVector, MonitorError> {
        if !self.has_history(tier, t) {
            let have = self.first_t[tier.index()].map_or(SimTime::ZERO, |f| t.saturating_sub(f));
            return Err(MonitorError::InsufficientHistory {
                tier,
                need: SimTime::from_secs(self.cfg.min_history_s),
                have,
            });
        }
        let w = SimTime::from_secs(self.cfg.feature_window_s);
        Ok(self.features_over(tier, t, w))
    }

    /// Feature layout over an arbitrary window; zeroes when the window is empty.
    pub fn features_over(&self, tier: TierId, t: SimTime, w: SimTime) -> FeatureVector {
        let it = self.samples_in(tier, t, w);
        let (mut n, mut cpu_sum, mut cpu_max, mut q_sum, mut avail) =
            (0usize, 0.0, 0.0f64, 0.0, 0.0);
        let (mut reqs, mut errs, mut rt_weighted, mut rt_weight) = (0u64, 0u64, 0.0, 0.0);
        let mut p95s = Vec::new();
        for s in it.clone() {
            n += 1;
            cpu_sum += s.cpu_util;
            cpu_max = cpu_max.max(s.cpu_util);
            q_sum += f64::from(s.queue_len);
            if s.available {
                avail += 1.0;
            }
            reqs += u64::from(s.request_count);
            errs += u64::from(s.error_count);
            if s.mean_rt_ms > 0.0 {
                let wgt = f64::from(s.request_count.max(1));
                rt_weighted += s.mean_rt_ms * wgt;
                rt_weight += wgt;
                p95s.push(s.p95_rt_ms);
            }
        }
        if n == 0 {
            return [0.0; FEATURE_LEN];
        }
        let nf = n as f64;
        let mem_slope = ls_slope(it.map(|s| (s.t.as_secs_f64(), s.mem_used_mb)));
        let rate = |count: usize| {
            if reqs == 0 {
                0.0
            } else {
                count as f64 / reqs as f64
            }
        };
        let http500 = self.log_count(tier, LogCode::Http500, t, w);
        let db = self.log_count(tier, LogCode::DbTimeout, t, w)
            + self.log_count(tier, LogCode::ConnRefused, t, w);
        [
            cpu_sum / nf,
            cpu_max,
            mem_slope,
            if rt_weight > 0.0 {
                rt_weighted / rt_weight
            } else {
                0.0
            },
            if p95s.is_empty() {
                0.0
            } else {
                nearest_rank_p95(&mut p95s)
            },
            if reqs == 0 {
                0.0
            } else {
                errs as f64 / reqs as f64
            },
            rate(http500),
            rate(db),
            q_sum / nf,
            avail / nf,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: u64, tier: TierId, v: f64) -> TelemetrySample {
        TelemetrySample {
            t: SimTime::from_secs(t),
            tier,
            cpu_util: v,
            mem_used_mb: v,
            mean_rt_ms: 10.0,
            p95_rt_ms: 12.0,
            request_count: 100,
            error_count: 0,
            queue_len: 2,
            available: true,
        }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut m = Monitor::new(MonitorConfig::default());
        for t in 1..=301 {
            m.ingest(sample(t, TierId::Api, 0.1)).unwrap();
        }
        assert_eq!(m.samples(TierId::Api).len(), 300);
        assert_eq!(
            m.samples(TierId::Api).front().unwrap().t,
            SimTime::from_secs(2)
        );
    }

    #[test]
    fn rejects_out_of_order() {
        let mut m = Monitor::new(MonitorConfig::default());
        m.ingest(sample(5, TierId::Db, 0.1)).unwrap();
        assert!(matches!(
            m.ingest(sample(4, TierId::Db, 0.1)),
            Err(MonitorError::OutOfOrder { .. })
        ));
        // other sources are independent
        m.ingest(sample(1, TierId::Api, 0.1)).unwrap();
    }

    #[test]
    fn logs_query_by_code_and_window() {
        let mut m = Monitor::new(MonitorConfig::default());
        for (t, code) in [
            (1, LogCode::Http500),
            (2, LogCode::Oom),
            (3, LogCode::Http500),
            (9, LogCode::Http500),
        ] {
            m.ingest_log(LogEvent {
                t: SimTime::from_secs(t),
                tier: TierId::Frontend,
                severity: LogSeverity::Error,
                code,
                request_id: None,
            })
            .unwrap();
        }
        let end = SimTime::from_secs(9);
        assert_eq!(
            m.log_count(
                TierId::Frontend,
                LogCode::Http500,
                end,
                SimTime::from_secs(10)
            ),
            3
        );
        assert_eq!(
            m.log_count(
                TierId::Frontend,
                LogCode::Http500,
                end,
                SimTime::from_secs(7)
            ),
            2
        );
        assert_eq!(
            m.log_count(TierId::Frontend, LogCode::Oom, end, SimTime::from_secs(5)),
            0
        );
    }

    #[test]
    fn window_constant_and_line() {
        let mut m = Monitor::new(MonitorConfig::default());
        for t in 1..=3 {
            m.ingest(sample(t, TierId::Api, t as f64)).unwrap();
            m.ingest(sample(t, TierId::Db, 4.0)).unwrap();
        }
        let w = m
            .window(Metric::Cpu, TierId::Api, SimTime::from_secs(10))
            .unwrap()
            .unwrap();
        assert!((w.mean - 2.0).abs() < 1e-12);
        assert!((w.slope - 1.0).abs() < 1e-12);
        assert_eq!(w.count, 3);
        let c = m
            .window(Metric::Cpu, TierId::Db, SimTime::from_secs(10))
            .unwrap()
            .unwrap();
        assert_eq!(c.slope, 0.0);
    }

    #[test]
    fn window_empty_and_too_long() {
        let m = Monitor::new(MonitorConfig::default());
        assert_eq!(
            m.window(Metric::Cpu, TierId::Api, SimTime::from_secs(10))
                .unwrap(),
            None
        );
        assert!(matches!(
            m.window(Metric::Cpu, TierId::Api, SimTime::from_secs(301)),
            Err(MonitorError::WindowTooLong { .. })
        ));
    }

    #[test]
    fn p95_nearest_rank() {
        let mut v: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        assert_eq!(nearest_rank_p95(&mut v), 95.0);
        assert_eq!(nearest_rank_p95(&mut [7.0]), 7.0);
    }

    #[test]
    fn features_need_history_and_have_fixed_length() {
        let mut m = Monitor::new(MonitorConfig::default());
        for t in 1..=20 {
            m.ingest(sample(t, TierId::Api, 0.2)).unwrap();
        }
        assert!(matches!(
            m.feature_vector(TierId::Api, SimTime::from_secs(20)),
            Err(MonitorError::InsufficientHistory { .. })
        ));
        for t in 21..=40 {
            m.ingest(sample(t, TierId::Api, 0.2)).unwrap();
        }
        let f = m
            .feature_vector(TierId::Api, SimTime::from_secs(40))
            .unwrap();
        assert_eq!(f.len(), FEATURE_LEN);
        assert_eq!(f[5], 0.0);
        assert_eq!(f[6], 0.0);
        assert_eq!(f[9], 1.0);
    }

    #[test]
    fn down_tier_has_zero_availability() {
        let mut m = Monitor::new(MonitorConfig::default());
        for t in 1..=40 {
            let mut s = sample(t, TierId::Db, 0.0);
            s.available = t < 20;
            m.ingest(s).unwrap();
        }
        let f = m
            .feature_vector(TierId::Db, SimTime::from_secs(40))
            .unwrap();
        assert_eq!(f[9], 0.0);
    }
}
