//! Detection, recovery, load and learning metrics, plus paired comparisons.

pub mod stats;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyze::ConfusionCounts;
use crate::classes::ReportClass;
use crate::engine::SimTime;
use crate::webapp::{RequestRecord, RequestStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("confusion counts are all zero")]
    NoCounts,
    #[error("recovery did not succeed")]
    NotRecovered,
    #[error("recovery time {t_recovered:?} precedes detection {t_detected:?}")]
    RecoveredBeforeDetected {
        t_detected: SimTime,
        t_recovered: SimTime,
    },
    #[error("manual baseline must be positive, got {0}")]
    BadBaseline(f64),
    #[error("no outcomes")]
    Empty,
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("horizon must be positive")]
    BadHorizon,
    #[error("no completed requests")]
    NoRequests,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: ReportClass,
    /// `None` when the class was never predicted.
    pub precision: Option<f64>,
    /// `None` when the class never occurred.
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Classes left out of a macro average because a value was undefined.
    pub excluded: Vec<ReportClass>,
}

fn avg_defined(xs: impl Iterator<Item = Option<f64>>) -> f64 {
    let (s, n) = xs.flatten().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Per-class precision/recall/F1 (fractions in [0, 1]) and their macro averages.
pub fn classification_metrics(c: &ConfusionCounts) -> Result<ClassificationReport, MetricsError> {
    let total: u64 = (0..5).map(|i| c.tp[i] + c.fp[i] + c.fn_[i]).sum();
    if total == 0 {
        return Err(MetricsError::NoCounts);
    }
    let mut classes = Vec::new();
    let mut excluded = Vec::new();
    for rc in ReportClass::ALL {
        let i = rc.index();
        let (tp, fp, fn_) = (c.tp[i], c.fp[i], c.fn_[i]);
        let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
        let recall = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
        let f = match (precision, recall) {
            (Some(p), Some(r)) => Some(f1(p, r)),
            _ => None,
        };
        if f.is_none() {
            excluded.push(rc);
        }
        classes.push(ClassMetrics {
            class: rc,
            precision,
            recall,
            f1: f,
            tp,
            fp,
            fn_,
        });
    }
    Ok(ClassificationReport {
        macro_precision: avg_defined(classes.iter().map(|m| m.precision)),
        macro_recall: avg_defined(classes.iter().map(|m| m.recall)),
        macro_f1: avg_defined(classes.iter().map(|m| m.f1)),
        classes,
        excluded,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ttr {
    pub seconds: f64,
    /// Recovery coincided with detection.
    pub degenerate: bool,
}

pub fn ttr(t_detected: SimTime, t_recovered: Option<SimTime>) -> Result<Ttr, MetricsError> {
    let t_recovered = t_recovered.ok_or(MetricsError::NotRecovered)?;
    if t_recovered < t_detected {
        return Err(MetricsError::RecoveredBeforeDetected {
            t_detected,
            t_recovered,
        });
    }
    let seconds = t_recovered.saturating_sub(t_detected).as_secs_f64();
    Ok(Ttr {
        seconds,
        degenerate: t_recovered == t_detected,
    })
}

/// Percentage reduction of `auto` relative to `manual`.
pub fn speed_improvement(manual: f64, auto: f64) -> Result<f64, MetricsError> {
    if !(manual > 0.0) {
        return Err(MetricsError::BadBaseline(manual));
    }
    Ok((manual - auto) / manual * 100.0)
}

/// Recovery success rate in percent.
pub fn rsr(outcomes: &[bool]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(outcomes.iter().filter(|&&s| s).count() as f64 * 100.0 / outcomes.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadMetrics {
    /// Successful completions per second.
    pub throughput_rps: f64,
    /// Mean response time of successful requests, ms.
    pub avg_rt_ms: f64,
    /// Failed share of completed requests, percent.
    pub error_rate_pct: f64,
    pub completed: u64,
}

/// Load metrics over requests completing in `[0, horizon]`.
pub fn load_metrics(
    ledger: &[RequestRecord],
    horizon: SimTime,
) -> Result<LoadMetrics, MetricsError> {
    if horizon == SimTime::ZERO {
        return Err(MetricsError::BadHorizon);
    }
    let mut ok = 0u64;
    let mut failed = 0u64;
    let mut rt = 0.0;
    for r in ledger {
        let Some(done) = r.completion else { continue };
        if done > horizon {
            continue;
        }
        match r.status {
            RequestStatus::Ok => {
                ok += 1;
                rt += r.rt_ms;
            }
            RequestStatus::InFlight => {}
            _ => failed += 1,
        }
    }
    let completed = ok + failed;
    if completed == 0 {
        return Err(MetricsError::NoRequests);
    }
    Ok(LoadMetrics {
        throughput_rps: ok as f64 / horizon.as_secs_f64(),
        avg_rt_ms: if ok > 0 { rt / ok as f64 } else { 0.0 },
        error_rate_pct: failed as f64 * 100.0 / completed as f64,
        completed,
    })
}

/// Statistics of one learning cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub cycle: u32,
    /// Percent of incidents whose first chosen strategy succeeded.
    pub decision_accuracy_pct: f64,
    pub mean_ttr_s: f64,
    pub kb_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackMetrics {
    pub delta_da_pp: f64,
    pub kb_growth: i64,
    /// Mean TTR reduction per cycle, seconds.
    pub adaptation_efficiency: f64,
    pub ttr_reduction_pct: f64,
}

pub fn feedback_metrics(cycles: &[CycleStats]) -> Result<FeedbackMetrics, MetricsError> {
    let (Some(first), Some(last)) = (cycles.first(), cycles.last()) else {
        return Err(MetricsError::TooFew { need: 2, got: 0 });
    };
    if cycles.len() < 2 {
        return Err(MetricsError::TooFew {
            need: 2,
            got: cycles.len(),
        });
    }
    Ok(FeedbackMetrics {
        delta_da_pp: last.decision_accuracy_pct - first.decision_accuracy_pct,
        kb_growth: last.kb_size as i64 - first.kb_size as i64,
        adaptation_efficiency: (first.mean_ttr_s - last.mean_ttr_s) / cycles.len() as f64,
        ttr_reduction_pct: if first.mean_ttr_s > 0.0 {
            (first.mean_ttr_s - last.mean_ttr_s) / first.mean_ttr_s * 100.0
        } else {
            0.0
        },
    })
}

/// Paired comparison of `a` against `b` (differences `a - b`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub cohens_d: f64,
    pub wilcoxon_w: f64,
    pub wilcoxon_p: f64,
    pub wilcoxon_exact: bool,
    /// All differences equal: t is infinite (or undefined when they are all zero).
    pub zero_variance: bool,
}

pub fn compare(a: &[f64], b: &[f64]) -> Result<Comparison, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 3 {
        return Err(MetricsError::TooFew {
            need: 3,
            got: a.len(),
        });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let m = stats::mean(&d);
    let s = stats::sd(&d);
    let df = (n - 1) as f64;
    let zero_variance = s == 0.0;
    let (t, p, cd) = if zero_variance {
        if m == 0.0 {
            (f64::NAN, 1.0, 0.0)
        } else {
            let inf = if m > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            (inf, 0.0, inf)
        }
    } else {
        let t = m / (s / libm::sqrt(n as f64));
        (t, stats::t_two_sided_p(t, df), m / s)
    };
    let w = stats::wilcoxon(&d);
    Ok(Comparison {
        n,
        mean_diff: m,
        sd_diff: s,
        t,
        df,
        p_value: p,
        cohens_d: cd,
        wilcoxon_w: w.w_plus,
        wilcoxon_p: w.p_value,
        wilcoxon_exact: w.exact,
        zero_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_of_http_row() {
        assert!((f1(95.40, 92.10) - 93.7).abs() < 0.05);
        assert_eq!(f1(0.0, 0.0), 0.0);
    }

    #[test]
    fn speed_improvement_rules() {
        assert!(speed_improvement(0.0, 1.0).is_err());
        assert_eq!(speed_improvement(4.0, 4.0).unwrap(), 0.0);
        assert_eq!(speed_improvement(4.0, 0.0).unwrap(), 100.0);
    }

    #[test]
    fn ttr_rules() {
        let d = SimTime::from_secs(10);
        assert!(matches!(ttr(d, None), Err(MetricsError::NotRecovered)));
        assert!(ttr(d, Some(SimTime::from_secs(9))).is_err());
        let z = ttr(d, Some(d)).unwrap();
        assert!(z.degenerate && z.seconds == 0.0);
        assert!((ttr(d, Some(SimTime::from_millis(13_500))).unwrap().seconds - 3.5).abs() < 1e-12);
    }

    #[test]
    fn rsr_rules() {
        assert!(rsr(&[]).is_err());
        assert_eq!(rsr(&[true, false, true, true]).unwrap(), 75.0);
    }

    #[test]
    fn feedback_example() {
        let cyc = |cycle, ttr, da, kb| CycleStats {
            cycle,
            decision_accuracy_pct: da,
            mean_ttr_s: ttr,
            kb_size: kb,
        };
        assert!(feedback_metrics(&[cyc(1, 4.8, 70.0, 3)]).is_err());
        let f = feedback_metrics(&[
            cyc(1, 4.8, 70.0, 3),
            cyc(2, 4.5, 74.0, 6),
            cyc(3, 4.3, 77.0, 8),
            cyc(4, 4.0, 80.0, 9),
            cyc(5, 3.9, 83.0, 10),
        ])
        .unwrap();
        assert!((f.adaptation_efficiency - 0.18).abs() < 1e-12);
        assert!((f.delta_da_pp - 13.0).abs() < 1e-12);
        assert_eq!(f.kb_growth, 7);
    }

    #[test]
    fn all_zero_counts_rejected() {
        assert!(matches!(
            classification_metrics(&ConfusionCounts::default()),
            Err(MetricsError::NoCounts)
        ));
    }

    #[test]
    fn undefined_class_excluded_from_macro() {
        let mut c = ConfusionCounts::default();
        c.tp[0] = 9;
        c.fn_[0] = 1;
        c.tp[1] = 5;
        c.fp[1] = 5;
        let r = classification_metrics(&c).unwrap();
        assert_eq!(r.excluded.len(), 3);
        assert!((r.macro_recall - 0.95).abs() < 1e-12);
        assert!((r.macro_precision - 0.75).abs() < 1e-12);
    }

    #[test]
    fn compare_shapes() {
        assert!(matches!(
            compare(&[1.0, 2.0], &[1.0]),
            Err(MetricsError::LengthMismatch(2, 1))
        ));
        assert!(matches!(
            compare(&[1.0, 2.0], &[1.0, 1.0]),
            Err(MetricsError::TooFew { .. })
        ));
        let c = compare(&[5.0, 6.0, 7.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!(c.zero_variance && c.t.is_infinite());
        let c = compare(&[5.0, 6.1, 7.3, 8.0], &[4.0, 5.0, 6.0, 7.5]).unwrap();
        assert!(c.t > 0.0 && c.p_value < 0.05);
        assert!((c.cohens_d - c.mean_diff / c.sd_diff).abs() < 1e-12);
    }
}
