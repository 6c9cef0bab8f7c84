//! Detection scoring against the fault ledger.
//!
//! Each injected fault is scored once, by the first diagnosis on its target
//! tier inside the matching window after injection: same report class is a
//! TP, another class is an FP for the predicted class plus an FN for the
//! true one, nothing is an FN. Later diagnoses on that tier while the fault
//! (plus a short residual grace) is active belong to the same incident and
//! are not rescored. Any other diagnosis is an FP.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Diagnosis;
use crate::chaos::FaultEvent;
use crate::classes::ReportClass;
use crate::engine::SimTime;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: [u64; 5],
    pub fp: [u64; 5],
    pub fn_: [u64; 5],
    /// Scored items that were neither predicted nor truly of the class.
    pub tn: [u64; 5],
}

impl ConfusionCounts {
    pub fn merge(&mut self, o: &ConfusionCounts) {
        for i in 0..5 {
            self.tp[i] += o.tp[i];
            self.fp[i] += o.fp[i];
            self.fn_[i] += o.fn_[i];
            self.tn[i] += o.tn[i];
        }
    }

    /// Records one scored item: `predicted`/`actual` are `None` for "no diagnosis"/"no fault".
    pub fn record(&mut self, predicted: Option<ReportClass>, actual: Option<ReportClass>) {
        for c in ReportClass::ALL {
            let i = c.index();
            match (predicted == Some(c), actual == Some(c)) {
                (true, true) => self.tp[i] += 1,
                (true, false) => self.fp[i] += 1,
                (false, true) => self.fn_[i] += 1,
                (false, false) => self.tn[i] += 1,
            }
        }
    }

    pub fn incidents(&self, c: ReportClass) -> u64 {
        self.tp[c.index()] + self.fn_[c.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub match_window_s: f64,
    pub residual_grace_s: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            match_window_s: 30.0,
            residual_grace_s: 10.0,
        }
    }
}

/// Outcome of scoring one fault.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultMatch {
    pub fault_id: u64,
    /// Index into the diagnosis slice of the scoring diagnosis.
    pub diagnosis: Option<usize>,
    pub correct: bool,
}

pub fn score_detection(
    diagnoses: &[Diagnosis],
    faults: &[FaultEvent],
    cfg: &ScoringConfig,
) -> (ConfusionCounts, Vec<FaultMatch>) {
    let window = SimTime::from_secs_f64(cfg.match_window_s);
    let grace = SimTime::from_secs_f64(cfg.residual_grace_s);
    let mut counts = ConfusionCounts::default();
    let mut used = alloc::vec![false; diagnoses.len()];
    let mut matches = Vec::with_capacity(faults.len());
    for f in faults {
        let deadline = f.t_injected.saturating_add(window);
        let hit = diagnoses.iter().enumerate().find(|(i, d)| {
            !used[*i]
                && d.tier == f.target
                && d.t_detected >= f.t_injected
                && d.t_detected <= deadline
        });
        let truth = f.fault_type.report_class();
        match hit {
            Some((i, d)) => {
                used[i] = true;
                let pred = d.class.report_class();
                // a wrong class lands as FP for the prediction and FN for the truth
                counts.record(Some(pred), Some(truth));
                matches.push(FaultMatch {
                    fault_id: f.fault_id,
                    diagnosis: Some(i),
                    correct: pred == truth,
                });
            }
            None => {
                counts.record(None, Some(truth));
                matches.push(FaultMatch {
                    fault_id: f.fault_id,
                    diagnosis: None,
                    correct: false,
                });
            }
        }
    }
    for (i, d) in diagnoses.iter().enumerate() {
        if used[i] {
            continue;
        }
        let within_incident = faults.iter().any(|f| {
            let end = f
                .t_cleared
                .unwrap_or(SimTime::MAX)
                .max(f.t_injected.saturating_add(window));
            f.target == d.tier
                && d.t_detected >= f.t_injected
                && d.t_detected <= end.saturating_add(grace)
        });
        if !within_incident {
            counts.record(Some(d.class.report_class()), None);
        }
    }
    (counts, matches)
}
