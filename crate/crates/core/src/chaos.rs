//! Fault catalog, ground-truth ledger and injection planning.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::{DiagnosisClass, ReportClass};
use crate::engine::{RngStream, SimTime};
use crate::webapp::{App, AppError, AppliedEffect, FaultEffect, TierId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultType {
    ServiceCrash,
    MemoryLeak,
    DbDisconnect,
    DbTimeout,
    CpuOverload,
    Http500Burst,
    LogicError,
    Deadlock,
}

impl FaultType {
    pub const ALL: [FaultType; 8] = [
        FaultType::ServiceCrash,
        FaultType::MemoryLeak,
        FaultType::DbDisconnect,
        FaultType::DbTimeout,
        FaultType::CpuOverload,
        FaultType::Http500Burst,
        FaultType::LogicError,
        FaultType::Deadlock,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    /// The class a perfect analyzer would assign.
    pub const fn true_class(self) -> DiagnosisClass {
        match self {
            FaultType::ServiceCrash => DiagnosisClass::ServiceCrash,
            FaultType::MemoryLeak => DiagnosisClass::MemoryLeak,
            FaultType::DbDisconnect | FaultType::DbTimeout => DiagnosisClass::DbTimeout,
            FaultType::CpuOverload => DiagnosisClass::CpuOverload,
            FaultType::Http500Burst => DiagnosisClass::Http500,
            FaultType::LogicError | FaultType::Deadlock => DiagnosisClass::LogicError,
        }
    }

    pub const fn report_class(self) -> ReportClass {
        self.true_class().report_class()
    }

    pub const fn name(self) -> &'static str {
        match self {
            FaultType::ServiceCrash => "ServiceCrash",
            FaultType::MemoryLeak => "MemoryLeak",
            FaultType::DbDisconnect => "DbDisconnect",
            FaultType::DbTimeout => "DbTimeout",
            FaultType::CpuOverload => "CpuOverload",
            FaultType::Http500Burst => "Http500Burst",
            FaultType::LogicError => "LogicError",
            FaultType::Deadlock => "Deadlock",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Low,
    High,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultScenario {
    pub id: u32,
    pub fault_type: FaultType,
    pub target: TierId,
    pub severity: Severity,
    pub effect: FaultEffect,
    /// Nominal lifetime; the effect expires after this unless repaired sooner.
    pub duration_s: f64,
}

/// The twenty built-in scenarios.
pub fn catalog() -> Vec<FaultScenario> {
    use FaultType as F;
    use Severity::{High, Low};
    use TierId::{Api, Db, Frontend};
    let rows: [(F, TierId, Severity, FaultEffect, f64); 20] = [
        (
            F::ServiceCrash,
            Api,
            High,
            FaultEffect::Crash { tier: Api },
            30.0,
        ),
        (
            F::ServiceCrash,
            Frontend,
            High,
            FaultEffect::Crash { tier: Frontend },
            30.0,
        ),
        (
            F::ServiceCrash,
            Db,
            High,
            FaultEffect::Crash { tier: Db },
            30.0,
        ),
        (
            F::MemoryLeak,
            Api,
            Low,
            FaultEffect::Leak {
                tier: Api,
                rate_mb_s: 2.0,
            },
            120.0,
        ),
        (
            F::MemoryLeak,
            Api,
            High,
            FaultEffect::Leak {
                tier: Api,
                rate_mb_s: 4.0,
            },
            120.0,
        ),
        (
            F::MemoryLeak,
            Frontend,
            Low,
            FaultEffect::Leak {
                tier: Frontend,
                rate_mb_s: 4.0,
            },
            120.0,
        ),
        (
            F::DbDisconnect,
            Db,
            High,
            FaultEffect::DbDisconnect {
                refuse_fraction: 0.15,
            },
            30.0,
        ),
        (
            F::DbTimeout,
            Db,
            Low,
            FaultEffect::DbTimeout { fraction: 0.04 },
            30.0,
        ),
        (
            F::DbTimeout,
            Db,
            High,
            FaultEffect::DbTimeout { fraction: 0.06 },
            30.0,
        ),
        (
            F::CpuOverload,
            Api,
            Low,
            FaultEffect::CpuOverload {
                tier: Api,
                bias: 0.65,
            },
            30.0,
        ),
        (
            F::CpuOverload,
            Api,
            High,
            FaultEffect::CpuOverload {
                tier: Api,
                bias: 0.7,
            },
            30.0,
        ),
        (
            F::CpuOverload,
            Db,
            High,
            FaultEffect::CpuOverload {
                tier: Db,
                bias: 0.75,
            },
            30.0,
        ),
        (
            F::Http500Burst,
            Frontend,
            Low,
            FaultEffect::Http500Burst {
                tier: Frontend,
                rate: 0.08,
            },
            30.0,
        ),
        (
            F::Http500Burst,
            Frontend,
            High,
            FaultEffect::Http500Burst {
                tier: Frontend,
                rate: 0.15,
            },
            30.0,
        ),
        (
            F::Http500Burst,
            Api,
            Low,
            FaultEffect::Http500Burst {
                tier: Api,
                rate: 0.12,
            },
            30.0,
        ),
        (
            F::LogicError,
            Api,
            Low,
            FaultEffect::LogicError {
                tier: Api,
                rate: 0.03,
            },
            30.0,
        ),
        (
            F::LogicError,
            Api,
            High,
            FaultEffect::LogicError {
                tier: Api,
                rate: 0.06,
            },
            30.0,
        ),
        (
            F::LogicError,
            Frontend,
            Low,
            FaultEffect::LogicError {
                tier: Frontend,
                rate: 0.04,
            },
            30.0,
        ),
        (
            F::Deadlock,
            Api,
            Low,
            FaultEffect::Deadlock {
                tier: Api,
                fraction: 0.01,
            },
            30.0,
        ),
        (
            F::Deadlock,
            Db,
            Low,
            FaultEffect::Deadlock {
                tier: Db,
                fraction: 0.01,
            },
            30.0,
        ),
    ];
    rows.iter()
        .enumerate()
        .map(
            |(i, &(fault_type, target, severity, effect, duration_s))| FaultScenario {
                id: i as u32 + 1,
                fault_type,
                target,
                severity,
                effect,
                duration_s,
            },
        )
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClearedBy {
    Action,
    Expiry,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub fault_id: u64,
    pub scenario_id: u32,
    pub fault_type: FaultType,
    pub target: TierId,
    pub t_injected: SimTime,
    /// Nominal expiry time.
    pub t_expires: SimTime,
    pub t_cleared: Option<SimTime>,
    pub cleared_by: ClearedBy,
}

impl FaultEvent {
    pub fn is_active(&self) -> bool {
        self.t_cleared.is_none()
    }

    /// Active at `t`: injected and not yet cleared.
    pub fn active_at(&self, t: SimTime) -> bool {
        self.t_injected <= t && self.t_cleared.is_none_or(|c| t < c)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChaosError {
    #[error("unknown scenario {0}")]
    UnknownScenario(u32),
    #[error("tier {0:?} already has an active fault")]
    TierBusy(TierId),
    #[error("unknown fault id {0}")]
    UnknownFault(u64),
    #[error("fault {0} already cleared")]
    AlreadyCleared(u64),
    #[error("invalid scenario mix")]
    InvalidMix,
    #[error("invalid fault rate {0}")]
    InvalidRate(f64),
    #[error(transparent)]
    App(#[from] AppError),
}

/// Ground-truth ledger plus the effects currently applied.
#[derive(Clone, Debug)]
pub struct Chaos {
    scenarios: Vec<FaultScenario>,
    events: Vec<FaultEvent>,
    applied: [Option<(u64, AppliedEffect)>; 3],
}

impl Default for Chaos {
    fn default() -> Self {
        Chaos::new(catalog())
    }
}

impl Chaos {
    pub fn new(scenarios: Vec<FaultScenario>) -> Self {
        Chaos {
            scenarios,
            events: Vec::new(),
            applied: [None; 3],
        }
    }

    pub fn scenarios(&self) -> &[FaultScenario] {
        &self.scenarios
    }

    pub fn scenario(&self, id: u32) -> Option<&FaultScenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    pub fn events(&self) -> &[FaultEvent] {
        &self.events
    }

    pub fn event(&self, fault_id: u64) -> Option<&FaultEvent> {
        self.events.get(fault_id as usize)
    }

    /// Active fault on `tier`, if any.
    pub fn active_on(&self, tier: TierId) -> Option<&FaultEvent> {
        self.applied[tier.index()].map(|(id, _)| &self.events[id as usize])
    }

    pub fn inject(
        &mut self,
        app: &mut App,
        scenario_id: u32,
        t: SimTime,
    ) -> Result<FaultEvent, ChaosError> {
        let sc = *self
            .scenario(scenario_id)
            .ok_or(ChaosError::UnknownScenario(scenario_id))?;
        let slot = sc.effect.tier().index();
        if self.applied[slot].is_some() {
            return Err(ChaosError::TierBusy(sc.effect.tier()));
        }
        let applied = app.apply_effect(sc.effect)?;
        let ev = FaultEvent {
            fault_id: self.events.len() as u64,
            scenario_id,
            fault_type: sc.fault_type,
            target: sc.effect.tier(),
            t_injected: t,
            t_expires: t.saturating_add(SimTime::from_secs_f64(sc.duration_s)),
            t_cleared: None,
            cleared_by: ClearedBy::None,
        };
        self.applied[slot] = Some((ev.fault_id, applied));
        self.events.push(ev);
        Ok(ev)
    }

    pub fn clear(
        &mut self,
        app: &mut App,
        fault_id: u64,
        t: SimTime,
        by: ClearedBy,
    ) -> Result<(), ChaosError> {
        let ev = self
            .events
            .get_mut(fault_id as usize)
            .ok_or(ChaosError::UnknownFault(fault_id))?;
        if ev.t_cleared.is_some() {
            return Err(ChaosError::AlreadyCleared(fault_id));
        }
        ev.t_cleared = Some(t.max(ev.t_injected));
        ev.cleared_by = by;
        let slot = ev.target.index();
        if let Some((id, applied)) = self.applied[slot] {
            if id == fault_id {
                app.revert_effect(&applied);
                self.applied[slot] = None;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedInjection {
    pub t: SimTime,
    pub scenario_id: u32,
}

/// Poisson-spaced injections at `rate_per_min` over `duration_s`. A draw that
/// would overlap a still-active planned fault on the same tier is deferred
/// in 1 s steps.
pub fn schedule_campaign(
    scenarios: &[FaultScenario],
    rate_per_min: f64,
    start: SimTime,
    duration_s: f64,
    mix: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<PlannedInjection>, ChaosError> {
    if !(rate_per_min >= 0.0) || !rate_per_min.is_finite() {
        return Err(ChaosError::InvalidRate(rate_per_min));
    }
    let total: f64 = mix.iter().sum();
    if mix.len() != scenarios.len() || mix.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
        return Err(ChaosError::InvalidMix);
    }
    let mut plan = Vec::new();
    if rate_per_min == 0.0 {
        return Ok(plan);
    }
    let end = start.saturating_add(SimTime::from_secs_f64(duration_s));
    let mut busy_until = [SimTime::ZERO; 3];
    let mut t = start;
    loop {
        t = t.saturating_add(SimTime::from_secs_f64(rng.exp_mean(60.0 / rate_per_min)));
        if t >= end {
            break;
        }
        let u = rng.uniform() * total;
        let mut acc = 0.0;
        let mut pick = scenarios.len() - 1;
        for (i, w) in mix.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        let sc = &scenarios[pick];
        let tier = sc.effect.tier().index();
        let mut at = t;
        while at < busy_until[tier] {
            at = at.saturating_add(SimTime::from_secs(1));
        }
        if at >= end {
            continue;
        }
        busy_until[tier] = at
            .saturating_add(SimTime::from_secs_f64(sc.duration_s))
            .saturating_add(SimTime::from_secs(1));
        plan.push(PlannedInjection {
            t: at,
            scenario_id: sc.id,
        });
    }
    plan.sort_by_key(|p| (p.t, p.scenario_id));
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::webapp::{AppConfig, Availability, WorkloadConfig};

    fn app() -> App {
        App::new(
            AppConfig::default(),
            WorkloadConfig::default(),
            &mut RngStream::from_seed(1),
        )
    }

    #[test]
    fn twenty_dense_ids() {
        let c = catalog();
        assert_eq!(c.len(), 20);
        for (i, s) in c.iter().enumerate() {
            assert_eq!(s.id as usize, i + 1);
        }
    }

    #[test]
    fn every_report_class_has_two_scenarios() {
        let c = catalog();
        for rc in ReportClass::ALL {
            assert!(
                c.iter()
                    .filter(|s| s.fault_type.report_class() == rc)
                    .count()
                    >= 2,
                "{rc:?}"
            );
        }
        for ft in FaultType::ALL {
            assert!(c.iter().any(|s| s.fault_type == ft));
        }
    }

    #[test]
    fn crash_injection_takes_tier_down() {
        let mut a = app();
        let mut ch = Chaos::default();
        let ev = ch.inject(&mut a, 1, SimTime::from_secs(5)).unwrap();
        assert_eq!(a.tier(TierId::Api).availability(), Availability::Down);
        assert_eq!(ch.events().len(), 1);
        ch.clear(
            &mut a,
            ev.fault_id,
            SimTime::from_secs(9),
            ClearedBy::Action,
        )
        .unwrap();
        assert_eq!(a.tier(TierId::Api).availability(), Availability::Up);
        assert_eq!(ch.events()[0].t_cleared, Some(SimTime::from_secs(9)));
        assert!(matches!(
            ch.clear(
                &mut a,
                ev.fault_id,
                SimTime::from_secs(10),
                ClearedBy::Action
            ),
            Err(ChaosError::AlreadyCleared(_))
        ));
        assert!(matches!(
            ch.clear(&mut a, 77, SimTime::from_secs(10), ClearedBy::Action),
            Err(ChaosError::UnknownFault(77))
        ));
    }

    #[test]
    fn repeated_injection_gives_distinct_events() {
        let mut a = app();
        let mut ch = Chaos::default();
        let e1 = ch.inject(&mut a, 13, SimTime::from_secs(1)).unwrap();
        assert!(matches!(
            ch.inject(&mut a, 13, SimTime::from_secs(2)),
            Err(ChaosError::TierBusy(_))
        ));
        ch.clear(
            &mut a,
            e1.fault_id,
            SimTime::from_secs(3),
            ClearedBy::Expiry,
        )
        .unwrap();
        let e2 = ch.inject(&mut a, 13, SimTime::from_secs(4)).unwrap();
        assert_ne!(e1.fault_id, e2.fault_id);
        assert!(matches!(
            ch.inject(&mut a, 99, SimTime::from_secs(4)),
            Err(ChaosError::UnknownScenario(99))
        ));
    }

    #[test]
    fn campaign_counts() {
        let c = catalog();
        let mix = [1.0; 20];
        let mut rng = RngStream::derive(42, "faults", 0);
        assert!(
            schedule_campaign(&c, 0.0, SimTime::ZERO, 600.0, &mix, &mut rng)
                .unwrap()
                .is_empty()
        );
        let plan = schedule_campaign(&c, 2.0, SimTime::ZERO, 600.0, &mix, &mut rng).unwrap();
        assert!((10..=30).contains(&plan.len()), "{}", plan.len());
        let mut one = [0.0; 20];
        one[6] = 1.0;
        let plan = schedule_campaign(&c, 2.0, SimTime::ZERO, 600.0, &one, &mut rng).unwrap();
        assert!(plan.iter().all(|p| p.scenario_id == 7));
        assert!(schedule_campaign(&c, 2.0, SimTime::ZERO, 600.0, &[1.0; 3], &mut rng).is_err());
    }
}
