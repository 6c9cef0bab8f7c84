//! Deterministic signature rules over monitor windows.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classes::DiagnosisClass;
use crate::engine::SimTime;
use crate::monitor::{ls_slope, LogCode, Monitor, TelemetrySample};
use crate::webapp::TierId;

/// When several signatures fire, the earliest entry wins.
pub const PRECEDENCE: [DiagnosisClass; 6] = [
    DiagnosisClass::ServiceCrash,
    DiagnosisClass::DbTimeout,
    DiagnosisClass::Http500,
    DiagnosisClass::LogicError,
    DiagnosisClass::CpuOverload,
    DiagnosisClass::MemoryLeak,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignatureConfig {
    /// Window for the error-code rules.
    pub acute_window_s: u64,
    pub http500_rate: f64,
    pub db_code_rate: f64,
    pub cpu_threshold: f64,
    pub cpu_samples: usize,
    pub leak_long_s: u64,
    pub leak_short_s: u64,
    /// MB/s over the long window.
    pub leak_slope_long: f64,
    /// MB/s over the short window.
    pub leak_slope_short: f64,
}

impl Default for SignatureConfig {
    fn default() -> Self {
        SignatureConfig {
            acute_window_s: 3,
            http500_rate: 0.05,
            db_code_rate: 0.02,
            cpu_threshold: 0.9,
            cpu_samples: 3,
            leak_long_s: 60,
            leak_short_s: 10,
            leak_slope_long: 0.3,
            leak_slope_short: 0.8,
        }
    }
}

/// Samples in the window whose tier was up for the whole sampling interval,
/// paired with the start of that interval.
fn stabilized(
    m: &Monitor,
    tier: TierId,
    t: SimTime,
    w: SimTime,
) -> Vec<(SimTime, TelemetrySample)> {
    let all = m.samples(tier);
    let start = t.saturating_sub(w);
    let lo = all.partition_point(|s| s.t <= start);
    let mut out = Vec::new();
    for i in lo.max(1)..all.len() {
        let (prev, s) = (all[i - 1], all[i]);
        if s.t > t {
            break;
        }
        if s.available && prev.available {
            out.push((prev.t, s));
        }
    }
    out
}

/// Every signature that fires for `tier` at `t`, in precedence order.
pub fn rule_signatures(
    m: &Monitor,
    tier: TierId,
    t: SimTime,
    cfg: &SignatureConfig,
) -> Vec<DiagnosisClass> {
    let mut fired = [false; 6];
    let Some(latest) = m.latest(tier) else {
        return Vec::new();
    };
    if !latest.available {
        fired[0] = true;
    }

    let acute = stabilized(m, tier, t, SimTime::from_secs(cfg.acute_window_s));
    let reqs: u64 = acute.iter().map(|(_, s)| u64::from(s.request_count)).sum();
    let count = |codes: &[LogCode]| -> usize {
        acute
            .iter()
            .map(|(from, s)| {
                codes
                    .iter()
                    .map(|&c| m.log_count(tier, c, s.t, s.t.saturating_sub(*from)))
                    .sum::<usize>()
            })
            .sum()
    };
    if reqs > 0 {
        let r = reqs as f64;
        if tier == TierId::Db
            && count(&[LogCode::DbTimeout, LogCode::ConnRefused]) as f64 / r > cfg.db_code_rate
        {
            fired[1] = true;
        }
        if count(&[LogCode::Http500]) as f64 / r > cfg.http500_rate {
            fired[2] = true;
        }
    }
    if count(&[LogCode::LogicErr, LogCode::Deadlock]) > 0 {
        fired[3] = true;
    }

    let recent: Vec<&TelemetrySample> =
        m.samples(tier).iter().rev().take(cfg.cpu_samples).collect();
    if recent.len() == cfg.cpu_samples && recent.iter().all(|s| s.available) {
        let mean = recent.iter().map(|s| s.cpu_util).sum::<f64>() / recent.len() as f64;
        if mean > cfg.cpu_threshold {
            fired[4] = true;
        }
    }

    let long = stabilized(m, tier, t, SimTime::from_secs(cfg.leak_long_s));
    let short_from = t.saturating_sub(SimTime::from_secs(cfg.leak_short_s));
    if long.len() as u64 >= cfg.leak_long_s / 2 {
        let pts = long.iter().map(|(_, s)| (s.t.as_secs_f64(), s.mem_used_mb));
        let short = long.iter().filter(|(_, s)| s.t > short_from);
        let short_n = short.clone().count() as u64;
        let rt = long
            .iter()
            .filter(|(_, s)| s.mean_rt_ms > 0.0)
            .map(|(_, s)| (s.t.as_secs_f64(), s.mean_rt_ms));
        if short_n >= cfg.leak_short_s / 2
            && ls_slope(pts) > cfg.leak_slope_long
            && ls_slope(short.map(|(_, s)| (s.t.as_secs_f64(), s.mem_used_mb)))
                > cfg.leak_slope_short
            && ls_slope(rt) > 0.0
        {
            fired[5] = true;
        }
    }

    PRECEDENCE
        .iter()
        .zip(fired)
        .filter(|(_, f)| *f)
        .map(|(c, _)| *c)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitor::{LogEvent, LogSeverity, MonitorConfig};

    fn healthy(t: u64, tier: TierId) -> TelemetrySample {
        TelemetrySample {
            t: SimTime::from_secs(t),
            tier,
            cpu_util: 0.3,
            mem_used_mb: 200.0,
            mean_rt_ms: 20.0,
            p95_rt_ms: 25.0,
            request_count: 100,
            error_count: 0,
            queue_len: 2,
            available: true,
        }
    }

    fn filled(n: u64) -> Monitor {
        let mut m = Monitor::new(MonitorConfig::default());
        for t in 1..=n {
            for tier in TierId::ALL {
                m.ingest(healthy(t, tier)).unwrap();
            }
        }
        m
    }

    #[test]
    fn healthy_is_silent() {
        let m = filled(90);
        for tier in TierId::ALL {
            assert!(rule_signatures(
                &m,
                tier,
                SimTime::from_secs(90),
                &SignatureConfig::default()
            )
            .is_empty());
        }
    }

    #[test]
    fn unavailable_means_crash() {
        let mut m = filled(40);
        let mut s = healthy(41, TierId::Api);
        s.available = false;
        m.ingest(s).unwrap();
        let sig = rule_signatures(
            &m,
            TierId::Api,
            SimTime::from_secs(41),
            &SignatureConfig::default(),
        );
        assert_eq!(sig, [DiagnosisClass::ServiceCrash]);
    }

    #[test]
    fn two_signatures_both_returned() {
        let mut m = filled(40);
        for t in 41..=44 {
            let mut s = healthy(t, TierId::Api);
            s.cpu_util = 0.97;
            m.ingest(s).unwrap();
            for k in 0..10 {
                m.ingest_log(LogEvent {
                    t: SimTime::from_secs(t).saturating_sub(SimTime::from_millis(500 - k)),
                    tier: TierId::Api,
                    severity: LogSeverity::Error,
                    code: LogCode::Http500,
                    request_id: None,
                })
                .unwrap();
            }
        }
        let sig = rule_signatures(
            &m,
            TierId::Api,
            SimTime::from_secs(44),
            &SignatureConfig::default(),
        );
        assert_eq!(sig, [DiagnosisClass::Http500, DiagnosisClass::CpuOverload]);
    }

    #[test]
    fn rising_memory_with_rising_latency_is_a_leak() {
        let mut m = filled(30);
        for (i, t) in (31..=60).enumerate() {
            let mut s = healthy(t, TierId::Frontend);
            s.mem_used_mb += 3.0 * i as f64;
            s.mean_rt_ms += 0.2 * i as f64;
            m.ingest(s).unwrap();
        }
        let sig = rule_signatures(
            &m,
            TierId::Frontend,
            SimTime::from_secs(60),
            &SignatureConfig::default(),
        );
        assert_eq!(sig, [DiagnosisClass::MemoryLeak]);
    }
}
