//! MAPE Plan and Knowledge: rule table, outcome statistics, strategy choice.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::DiagnosisClass;
use crate::engine::RngStream;
use crate::webapp::TierId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    RestartService,
    RollbackDeploy,
    ClearCache,
    ReconnectDb,
    ApplyPatch,
    ThrottleTraffic,
    ScaleOut,
}

impl ActionKind {
    pub const ALL: [ActionKind; 7] = [
        ActionKind::RestartService,
        ActionKind::RollbackDeploy,
        ActionKind::ClearCache,
        ActionKind::ReconnectDb,
        ActionKind::ApplyPatch,
        ActionKind::ThrottleTraffic,
        ActionKind::ScaleOut,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        match self {
            ActionKind::RestartService => "RestartService",
            ActionKind::RollbackDeploy => "RollbackDeploy",
            ActionKind::ClearCache => "ClearCache",
            ActionKind::ReconnectDb => "ReconnectDb",
            ActionKind::ApplyPatch => "ApplyPatch",
            ActionKind::ThrottleTraffic => "ThrottleTraffic",
            ActionKind::ScaleOut => "ScaleOut",
        }
    }
}

/// One step of a strategy; `tier: None` targets the diagnosed tier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub action: ActionKind,
    pub tier: Option<TierId>,
}

impl ActionSpec {
    pub const fn on_diagnosed(action: ActionKind) -> Self {
        ActionSpec { action, tier: None }
    }

    pub fn target(&self, diagnosed: TierId) -> TierId {
        self.tier.unwrap_or(diagnosed)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub id: u32,
    pub class: DiagnosisClass,
    pub actions: Vec<ActionSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleTable {
    pub strategies: Vec<Strategy>,
}

impl Default for RuleTable {
    fn default() -> Self {
        default_rules()
    }
}

impl RuleTable {
    /// Strategies serving `class`, in rule-table order.
    pub fn for_class(&self, class: DiagnosisClass) -> Vec<&Strategy> {
        self.strategies
            .iter()
            .filter(|s| s.class == class)
            .collect()
    }

    pub fn get(&self, id: u32) -> Option<&Strategy> {
        self.strategies.iter().find(|s| s.id == id)
    }
}

pub fn default_rules() -> RuleTable {
    use ActionKind::*;
    use DiagnosisClass as C;
    let d = ActionSpec::on_diagnosed;
    let rows: [(C, Vec<ActionSpec>); 13] = [
        (C::ServiceCrash, vec![d(RestartService)]),
        (C::ServiceCrash, vec![d(RollbackDeploy), d(RestartService)]),
        (C::MemoryLeak, vec![d(RestartService)]),
        (C::MemoryLeak, vec![d(ApplyPatch)]),
        (
            C::DbTimeout,
            vec![ActionSpec {
                action: ReconnectDb,
                tier: Some(TierId::Db),
            }],
        ),
        (
            C::DbTimeout,
            vec![ActionSpec {
                action: RestartService,
                tier: Some(TierId::Db),
            }],
        ),
        (C::CpuOverload, vec![d(ThrottleTraffic)]),
        (C::CpuOverload, vec![d(ScaleOut)]),
        (C::Http500, vec![d(RollbackDeploy)]),
        (C::Http500, vec![d(ApplyPatch)]),
        (C::LogicError, vec![d(ClearCache)]),
        (C::LogicError, vec![d(ApplyPatch)]),
        (C::LogicError, vec![d(RollbackDeploy)]),
    ];
    RuleTable {
        strategies: rows
            .into_iter()
            .enumerate()
            .map(|(i, (class, actions))| Strategy {
                id: i as u32 + 1,
                class,
                actions,
            })
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeRecord {
    pub successes: u32,
    pub failures: u32,
    /// EMA of time-to-recovery over successes; `None` until the first one.
    pub ttr_ema: Option<f64>,
}

impl KnowledgeRecord {
    pub fn trials(&self) -> u32 {
        self.successes + self.failures
    }

    /// `(s + 1) / (n + 2)`.
    pub fn posterior_mean(&self) -> f64 {
        (f64::from(self.successes) + 1.0) / (f64::from(self.trials()) + 2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutcomeKey {
    /// Seed of the run the incident belongs to.
    pub run: u64,
    pub incident: u64,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no strategy serves {0:?}")]
    UnknownClass(DiagnosisClass),
    #[error("outcome {0:?} already recorded")]
    Duplicate(OutcomeKey),
    #[error("unknown strategy {0}")]
    UnknownStrategy(u32),
}

pub const EMA_ALPHA: f64 = 0.3;

/// Persist through [`KnowledgeBase::snapshot`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeBase {
    records: BTreeMap<(DiagnosisClass, u32), KnowledgeRecord>,
    seen: BTreeSet<OutcomeKey>,
}

/// Exported KB row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeRow {
    pub class: DiagnosisClass,
    pub strategy: u32,
    pub successes: u32,
    pub failures: u32,
    pub ttr_ema: Option<f64>,
}

impl KnowledgeBase {
    pub fn get(&self, class: DiagnosisClass, strategy: u32) -> KnowledgeRecord {
        self.records
            .get(&(class, strategy))
            .copied()
            .unwrap_or_default()
    }

    /// Number of (class, strategy) pairs with at least one trial.
    pub fn kb_size(&self) -> usize {
        self.records.values().filter(|r| r.trials() >= 1).count()
    }

    pub fn has_class(&self, class: DiagnosisClass) -> bool {
        self.records
            .iter()
            .any(|((c, _), r)| *c == class && r.trials() > 0)
    }

    pub fn record_outcome(
        &mut self,
        key: OutcomeKey,
        class: DiagnosisClass,
        strategy: u32,
        success: bool,
        ttr_s: Option<f64>,
    ) -> Result<(), PlanError> {
        if !self.seen.insert(key) {
            return Err(PlanError::Duplicate(key));
        }
        let r = self.records.entry((class, strategy)).or_default();
        if success {
            r.successes += 1;
            if let Some(x) = ttr_s {
                r.ttr_ema = Some(match r.ttr_ema {
                    None => x,
                    Some(prev) => EMA_ALPHA * x + (1.0 - EMA_ALPHA) * prev,
                });
            }
        } else {
            r.failures += 1;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<KnowledgeRow> {
        self.records
            .iter()
            .map(|(&(class, strategy), r)| KnowledgeRow {
                class,
                strategy,
                successes: r.successes,
                failures: r.failures,
                ttr_ema: r.ttr_ema,
            })
            .collect()
    }

    pub fn from_snapshot(rows: &[KnowledgeRow]) -> Self {
        let mut kb = KnowledgeBase::default();
        for row in rows {
            kb.records.insert(
                (row.class, row.strategy),
                KnowledgeRecord {
                    successes: row.successes,
                    failures: row.failures,
                    ttr_ema: row.ttr_ema,
                },
            );
        }
        kb
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionSource {
    RuleDefault,
    KbRanked,
    Explore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryPlan {
    pub class: DiagnosisClass,
    pub tier: TierId,
    pub strategy: u32,
    pub actions: Vec<ActionSpec>,
    pub source: SelectionSource,
    /// Remaining strategies for this class, in fallback order.
    pub fallbacks: Vec<u32>,
}

/// `posterior_mean / (ttr + 0.1)`, with `default_ttr_s` standing in before any success.
pub fn utility(r: &KnowledgeRecord, default_ttr_s: f64) -> f64 {
    r.posterior_mean() / (r.ttr_ema.unwrap_or(default_ttr_s) + 0.1)
}

pub fn select(
    rules: &RuleTable,
    kb: &KnowledgeBase,
    class: DiagnosisClass,
    tier: TierId,
    eps: f64,
    default_ttr_s: f64,
    rng: &mut RngStream,
) -> Result<RecoveryPlan, PlanError> {
    let eligible = rules.for_class(class);
    if eligible.is_empty() {
        return Err(PlanError::UnknownClass(class));
    }
    let explore = rng.uniform() < eps;
    let (pick, source) = if explore {
        (rng.below(eligible.len()), SelectionSource::Explore)
    } else {
        let mut best = 0;
        let mut best_u = f64::NEG_INFINITY;
        for (i, s) in eligible.iter().enumerate() {
            let u = utility(&kb.get(class, s.id), default_ttr_s);
            if u > best_u {
                best = i;
                best_u = u;
            }
        }
        let source = if kb.has_class(class) {
            SelectionSource::KbRanked
        } else {
            SelectionSource::RuleDefault
        };
        (best, source)
    };
    let chosen = eligible[pick];
    // fall back through the others in utility order
    let mut rest: Vec<(usize, f64)> = eligible
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != pick)
        .map(|(i, s)| (i, utility(&kb.get(class, s.id), default_ttr_s)))
        .collect();
    rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(RecoveryPlan {
        class,
        tier,
        strategy: chosen.id,
        actions: chosen.actions.clone(),
        source,
        fallbacks: rest.into_iter().map(|(i, _)| eligible[i].id).collect(),
    })
}
