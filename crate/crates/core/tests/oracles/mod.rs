//! Brute-force oracles written independently of the library code. Each
//! `check_*` returns a description of the first mismatch.

#![allow(dead_code)]

use selfheal_core::analyze::confusion::{score_detection, ConfusionCounts, ScoringConfig};
use selfheal_core::analyze::iforest::IsolationForest;
use selfheal_core::analyze::{DecisionTree, Diagnosis, DiagnosisSource, TreeParams};
use selfheal_core::chaos::{ClearedBy, FaultEvent, FaultType};
use selfheal_core::classes::{DiagnosisClass, ReportClass};
use selfheal_core::engine::{EventKind, RngStream, Scheduler, SimEvent, SimTime};
use selfheal_core::metrics::{self, stats};
use selfheal_core::monitor::{Metric, Monitor, MonitorConfig, TelemetrySample};
use selfheal_core::webapp::TierId;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Tag(u32);

impl SimEvent for Tag {
    fn kind(&self) -> EventKind {
        EventKind::MapeTick
    }
}

fn dispatch(times: &[u64]) -> (Vec<u32>, u64) {
    let mut s: Scheduler<Tag> = Scheduler::new();
    for (i, t) in times.iter().enumerate() {
        s.schedule(Tag(i as u32), SimTime(*t)).unwrap();
    }
    let mut order = Vec::new();
    s.run_until(SimTime(u64::MAX / 2), |_, ev| {
        order.push(ev.event.0);
        Ok::<(), std::convert::Infallible>(())
    })
    .unwrap();
    (order, s.digest().0)
}

/// Events fire by time, ties in insertion order, and replays hash alike.
pub fn check_scheduler(times: &[u64]) -> Check {
    let (order, digest) = dispatch(times);
    let mut expect: Vec<u32> = (0..times.len() as u32).collect();
    expect.sort_by_key(|&i| (times[i as usize], i));
    ensure!(order == expect, "order {order:?} != {expect:?}");
    let (again, digest2) = dispatch(times);
    ensure!(order == again && digest == digest2, "replay diverged");
    Ok(())
}

pub fn check_f1_bounds(tp: [u64; 5], fp: [u64; 5], fn_: [u64; 5]) -> Check {
    let c = ConfusionCounts {
        tp,
        fp,
        fn_,
        tn: [0; 5],
    };
    let r = metrics::classification_metrics(&c).map_err(|e| e.to_string())?;
    for m in &r.classes {
        let (p, rc, f) = (m.precision.unwrap(), m.recall.unwrap(), m.f1.unwrap());
        ensure!(f >= p.min(rc) - 1e-12, "f1 {f} below min({p}, {rc})");
        ensure!(f <= (p + rc) / 2.0 + 1e-12, "f1 {f} above mean({p}, {rc})");
    }
    ensure!(r.excluded.is_empty(), "classes with tp > 0 were excluded");
    Ok(())
}

fn sample(t: u64, cpu: f64) -> TelemetrySample {
    TelemetrySample {
        t: SimTime::from_secs(t),
        tier: TierId::Api,
        cpu_util: cpu,
        mem_used_mb: 0.0,
        mean_rt_ms: 0.0,
        p95_rt_ms: 0.0,
        request_count: 0,
        error_count: 0,
        queue_len: 0,
        available: true,
    }
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return 0.0;
    }
    let (sx, sy, sxx, sxy) = pts
        .iter()
        .fold((0.0, 0.0, 0.0, 0.0), |(a, b, c, d), (x, y)| {
            (a + x, b + y, c + x * x, d + x * y)
        });
    let den = n * sxx - sx * sx;
    if den.abs() < 1e-12 {
        0.0
    } else {
        (n * sxy - sx * sy) / den
    }
}

/// One sample per second at t = 1..=n, window of `duration` seconds.
pub fn check_monitor_window(values: &[f64], duration: u64) -> Check {
    let mut m = Monitor::new(MonitorConfig::default());
    for (i, v) in values.iter().enumerate() {
        m.ingest(sample(i as u64 + 1, *v))
            .map_err(|e| e.to_string())?;
    }
    let end = values.len() as u64;
    let w = m
        .window(Metric::Cpu, TierId::Api, SimTime::from_secs(duration))
        .map_err(|e| e.to_string())?
        .ok_or("empty window")?;
    // samples with t in (end - duration, end]
    let pts: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .map(|(i, v)| (i as f64 + 1.0, *v))
        .filter(|(t, _)| *t > end as f64 - duration as f64)
        .collect();
    ensure!(w.count == pts.len(), "count {} != {}", w.count, pts.len());
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    ensure!((w.mean - mean).abs() < 1e-9, "mean {} != {mean}", w.mean);
    let max = pts.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    ensure!(w.max == max, "max {} != {max}", w.max);
    let mut sorted: Vec<f64> = pts.iter().map(|p| p.1).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((0.95 * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    ensure!(
        w.p95 == sorted[rank - 1],
        "p95 {} != {}",
        w.p95,
        sorted[rank - 1]
    );
    ensure!(
        (w.slope - slope(&pts)).abs() < 1e-9,
        "slope {} != {}",
        w.slope,
        slope(&pts)
    );
    Ok(())
}

pub fn check_iforest(seed: u64) -> Check {
    let mut rng = RngStream::from_seed(seed);
    let data: Vec<Vec<f64>> = (0..300)
        .map(|_| vec![rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)])
        .collect();
    let f = IsolationForest::fit(&data, 50, 128, &mut rng).map_err(|e| e.to_string())?;
    let far = f.score(&[25.0, -25.0]).map_err(|e| e.to_string())?;
    for x in &data {
        let s = f.score(x).map_err(|e| e.to_string())?;
        ensure!(s > 0.0 && s < 1.0, "score {s} out of (0, 1)");
        // the far point shadows whichever sample is most extreme toward it, so compare the core only
        if x[0].hypot(x[1]) < 2.0 {
            ensure!(far > s, "far point {far} not above inlier {s}");
        }
    }
    Ok(())
}

/// Labels that are a function of the features are fitted exactly.
pub fn check_tree(seed: u64, n: usize) -> Check {
    let mut rng = RngStream::from_seed(seed);
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::new();
    for _ in 0..n {
        let x = vec![rng.below(20) as f64, rng.below(20) as f64, rng.uniform()];
        // label depends only on the first two coordinates
        let y = (x[0] as usize * 7 + x[1] as usize * 3) % 4;
        rows.push((x, y));
    }
    if rows.iter().all(|r| r.1 == rows[0].1) {
        return Ok(());
    }
    let t = DecisionTree::fit(&rows, 4, TreeParams::UNBOUNDED).map_err(|e| e.to_string())?;
    for (x, y) in &rows {
        let got = t.classify(x).map_err(|e| e.to_string())?.0;
        ensure!(got == *y, "{x:?}: {got} != {y}");
    }
    Ok(())
}

fn enumerated_wilcoxon_p(d: &[f64]) -> f64 {
    let nz: Vec<f64> = d.iter().copied().filter(|x| *x != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return 1.0;
    }
    // average ranks of magnitudes, by counting
    let ranks: Vec<f64> = nz
        .iter()
        .map(|x| {
            let less = nz.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let same = nz.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            less + (same + 1.0) / 2.0
        })
        .collect();
    let w: f64 = nz
        .iter()
        .zip(&ranks)
        .filter(|(x, _)| **x > 0.0)
        .map(|(_, r)| r)
        .sum();
    let (mut lo, mut hi) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        let s: f64 = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| ranks[i])
            .sum();
        if s <= w + 1e-9 {
            lo += 1;
        }
        if s >= w - 1e-9 {
            hi += 1;
        }
    }
    let total = (1u64 << n) as f64;
    (2.0 * (lo.min(hi) as f64) / total).min(1.0)
}

pub fn check_wilcoxon(d: &[f64]) -> Check {
    let got = stats::wilcoxon(d).p_value;
    let p = enumerated_wilcoxon_p(d);
    ensure!((got - p).abs() < 1e-12, "{got} vs {p} for {d:?}");
    Ok(())
}

fn rescore(ds: &[Diagnosis], faults: &[FaultEvent], cfg: &ScoringConfig) -> ConfusionCounts {
    let window = (cfg.match_window_s * 1e6) as u64;
    let grace = (cfg.residual_grace_s * 1e6) as u64;
    let mut pairs: Vec<(Option<ReportClass>, Option<ReportClass>)> = Vec::new();
    let mut taken = vec![false; ds.len()];
    for f in faults {
        let (a, b) = (f.t_injected.0, f.t_injected.0 + window);
        let mut pick = None;
        for (i, d) in ds.iter().enumerate() {
            if !taken[i] && d.tier == f.target && d.t_detected.0 >= a && d.t_detected.0 <= b {
                pick = Some(i);
                break;
            }
        }
        let truth = Some(f.fault_type.report_class());
        match pick {
            Some(i) => {
                taken[i] = true;
                pairs.push((Some(ds[i].class.report_class()), truth));
            }
            None => pairs.push((None, truth)),
        }
    }
    for (i, d) in ds.iter().enumerate() {
        if taken[i] {
            continue;
        }
        let covered = faults.iter().any(|f| {
            let end = f
                .t_cleared
                .map_or(u64::MAX, |c| c.0)
                .max(f.t_injected.0 + window);
            f.target == d.tier
                && d.t_detected.0 >= f.t_injected.0
                && d.t_detected.0 <= end.saturating_add(grace)
        });
        if !covered {
            pairs.push((Some(d.class.report_class()), None));
        }
    }
    let mut c = ConfusionCounts::default();
    for rc in ReportClass::ALL {
        let i = rc.index();
        c.tp[i] = pairs
            .iter()
            .filter(|(p, a)| *p == Some(rc) && *a == Some(rc))
            .count() as u64;
        c.fp[i] = pairs
            .iter()
            .filter(|(p, a)| *p == Some(rc) && *a != Some(rc))
            .count() as u64;
        c.fn_[i] = pairs
            .iter()
            .filter(|(p, a)| *p != Some(rc) && *a == Some(rc))
            .count() as u64;
        c.tn[i] = pairs
            .iter()
            .filter(|(p, a)| *p != Some(rc) && *a != Some(rc))
            .count() as u64;
    }
    c
}

/// Faults are (tier, t_s, kind, lifetime_s); diagnoses are (tier, t_s, class).
pub fn check_confusion(
    faults: &[(usize, u64, usize, Option<u64>)],
    diags: &[(usize, u64, usize)],
) -> Check {
    let tiers = TierId::ALL;
    let mut ledger: Vec<FaultEvent> = faults
        .iter()
        .enumerate()
        .map(|(i, &(tier, t, kind, life))| FaultEvent {
            fault_id: i as u64,
            scenario_id: 1,
            fault_type: FaultType::ALL[kind],
            target: tiers[tier],
            t_injected: SimTime::from_secs(t),
            t_expires: SimTime::from_secs(t + 30),
            t_cleared: life.map(|l| SimTime::from_secs(t + l)),
            cleared_by: if life.is_some() {
                ClearedBy::Action
            } else {
                ClearedBy::None
            },
        })
        .collect();
    ledger.sort_by_key(|f| f.t_injected);
    let mut ds: Vec<Diagnosis> = diags
        .iter()
        .map(|&(tier, t, class)| Diagnosis {
            tier: tiers[tier],
            class: DiagnosisClass::ALL[class],
            confidence: 1.0,
            t_detected: SimTime::from_secs(t),
            source: DiagnosisSource::Signature,
            anomaly_score: 1.0,
        })
        .collect();
    ds.sort_by_key(|d| d.t_detected);
    let cfg = ScoringConfig::default();
    let (counts, _) = score_detection(&ds, &ledger, &cfg);
    let oracle = rescore(&ds, &ledger, &cfg);
    ensure!(counts == oracle, "{counts:?} != {oracle:?}");
    Ok(())
}
