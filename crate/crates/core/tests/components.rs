use selfheal_core::analyze::iforest::IsolationForest;
use selfheal_core::analyze::kmeans::{purity, KMeans};
use selfheal_core::analyze::{DecisionTree, TreeParams};
use selfheal_core::chaos::{
    self, Chaos, ChaosError, ClearedBy, FaultScenario, FaultType, Severity,
};
use selfheal_core::engine::{RngStream, SimTime};
use selfheal_core::execute::Mode;
use selfheal_core::metrics::{self, CycleStats};
use selfheal_core::webapp::{
    App, AppConfig, FaultEffect, OpType, RequestRecord, RequestStatus, TierId, WorkloadConfig,
};

fn record(id: u64, done_s: f64, status: RequestStatus, rt_ms: f64) -> RequestRecord {
    RequestRecord {
        id,
        op: OpType::Query,
        arrival: SimTime::ZERO,
        completion: Some(SimTime::from_secs_f64(done_s)),
        status,
        rt_ms,
    }
}

#[test]
fn load_metrics_arithmetic() {
    let ok: Vec<RequestRecord> = (0..500)
        .map(|i| record(i, i as f64 / 10.0, RequestStatus::Ok, 10.0))
        .collect();
    let m = metrics::load_metrics(&ok, SimTime::from_secs(50)).unwrap();
    assert_eq!(m.throughput_rps, 10.0);

    let rts: Vec<RequestRecord> = [10.0, 20.0, 30.0]
        .iter()
        .enumerate()
        .map(|(i, rt)| record(i as u64, 1.0, RequestStatus::Ok, *rt))
        .collect();
    assert_eq!(
        metrics::load_metrics(&rts, SimTime::from_secs(10))
            .unwrap()
            .avg_rt_ms,
        20.0
    );

    let err = RequestStatus::Error {
        http: 500,
        tier: TierId::Api,
    };
    let mixed: Vec<RequestRecord> = (0..200)
        .map(|i| record(i, 1.0, if i < 5 { err } else { RequestStatus::Ok }, 5.0))
        .collect();
    assert_eq!(
        metrics::load_metrics(&mixed, SimTime::from_secs(10))
            .unwrap()
            .error_rate_pct,
        2.5
    );
}

#[test]
fn macro_f1_of_the_five_detection_rows() {
    let f1 = [93.7, 91.8, 88.4, 92.1, 87.6];
    let mean = f1.iter().sum::<f64>() / 5.0;
    assert!((mean - 90.72).abs() < 1e-9);
    assert!((metrics::f1(95.40, 92.10) - 93.72).abs() < 0.005);
}

#[test]
fn feedback_efficiency_and_growth() {
    let cycles: Vec<CycleStats> = [
        (80.0, 4.8),
        (83.0, 4.6),
        (86.0, 4.4),
        (90.0, 4.1),
        (93.0, 3.9),
    ]
    .iter()
    .enumerate()
    .map(|(i, &(da, ttr))| CycleStats {
        cycle: i as u32 + 1,
        decision_accuracy_pct: da,
        mean_ttr_s: ttr,
        kb_size: 7,
    })
    .collect();
    let m = metrics::feedback_metrics(&cycles).unwrap();
    assert!((m.delta_da_pp - 13.0).abs() < 1e-9);
    assert!((m.adaptation_efficiency - 0.18).abs() < 1e-9);
    assert_eq!(m.kb_growth, 0);
}

/// Two-sided p of Student's t by Simpson integration of the density.
fn t_p_oracle(t: f64, df: u32) -> f64 {
    fn gamma_half(k: u32) -> f64 {
        // Gamma(k / 2) for positive integer k
        let (mut g, mut x) = if k.is_multiple_of(2) {
            (1.0, 1.0)
        } else {
            (std::f64::consts::PI.sqrt(), 0.5)
        };
        while x < k as f64 / 2.0 - 1e-9 {
            g *= x;
            x += 1.0;
        }
        g
    }
    let v = f64::from(df);
    let c = gamma_half(df + 1) / ((v * std::f64::consts::PI).sqrt() * gamma_half(df));
    let pdf = |x: f64| c * (1.0 + x * x / v).powf(-(v + 1.0) / 2.0);
    let n = 200_000;
    let h = t.abs() / n as f64;
    let mut s = pdf(0.0) + pdf(t.abs());
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

#[test]
fn paired_t_matches_hand_computation() {
    // classic paired design, ten subjects
    let a = [12.1, 14.3, 11.8, 13.9, 12.7, 15.2, 13.3, 12.9, 14.8, 13.6];
    let b = [11.4, 13.1, 11.9, 12.6, 12.0, 14.1, 12.5, 12.7, 13.2, 12.8];
    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    let c = metrics::compare(&a, &b).unwrap();
    assert!((c.mean_diff - mean).abs() < 1e-12);
    assert!((c.t - t).abs() < 1e-9);
    assert!((c.cohens_d - mean / sd).abs() < 1e-12);
    assert!(
        (c.p_value - t_p_oracle(t, 9)).abs() < 1e-6,
        "{} vs {}",
        c.p_value,
        t_p_oracle(t, 9)
    );

    let same = metrics::compare(&a, &a).unwrap();
    assert_eq!(same.mean_diff, 0.0);
    assert_eq!(same.cohens_d, 0.0);
    let shifted: Vec<f64> = a.iter().map(|x| x - 1.0).collect();
    let z = metrics::compare(&a, &shifted).unwrap();
    assert!(z.zero_variance);
    assert!(z.t.is_infinite());
}

fn app() -> App {
    let mut rng = RngStream::from_seed(1);
    App::new(AppConfig::default(), WorkloadConfig::default(), &mut rng).with_ledger()
}

#[test]
fn clearing_checks_the_ledger() {
    let mut a = app();
    let mut c = Chaos::default();
    let ev = c.inject(&mut a, 1, SimTime::from_secs(5)).unwrap();
    assert!(matches!(
        c.clear(&mut a, 99, SimTime::from_secs(6), ClearedBy::Action),
        Err(ChaosError::UnknownFault(99))
    ));
    c.clear(
        &mut a,
        ev.fault_id,
        SimTime::from_secs(7),
        ClearedBy::Action,
    )
    .unwrap();
    assert_eq!(
        c.event(ev.fault_id).unwrap().t_cleared,
        Some(SimTime::from_secs(7))
    );
    assert!(!a.tier(TierId::Api).is_down());
    assert!(matches!(
        c.clear(
            &mut a,
            ev.fault_id,
            SimTime::from_secs(8),
            ClearedBy::Action
        ),
        Err(ChaosError::AlreadyCleared(_))
    ));
}

#[test]
fn error_burst_rate_passes_through() {
    let burst = FaultScenario {
        id: 1,
        fault_type: FaultType::Http500Burst,
        target: TierId::Frontend,
        severity: Severity::High,
        effect: FaultEffect::Http500Burst {
            tier: TierId::Frontend,
            rate: 0.3,
        },
        duration_s: 600.0,
    };
    let mut a = app();
    let mut c = Chaos::new(vec![burst]);
    c.inject(&mut a, 1, SimTime::ZERO).unwrap();
    let mut rng = RngStream::from_seed(77);
    let n = 4000;
    for i in 0..n {
        let (id, done) = a.issue(0, OpType::Upload, SimTime::from_millis(i), &mut rng);
        a.complete(id, done);
    }
    let errs = a
        .ledger()
        .unwrap()
        .iter()
        .filter(|r| matches!(r.status, RequestStatus::Error { http: 500, .. }))
        .count();
    let share = errs as f64 / n as f64;
    // binomial sd at n = 4000 is about 0.007
    assert!((share - 0.3).abs() < 0.03, "{share}");
}

#[test]
fn campaign_edge_cases() {
    let sc = chaos::catalog();
    let mut rng = RngStream::from_seed(3);
    let empty =
        chaos::schedule_campaign(&sc, 0.0, SimTime::ZERO, 600.0, &[1.0; 20], &mut rng).unwrap();
    assert!(empty.is_empty());
    let mut mix = [0.0; 20];
    mix[6] = 1.0;
    let one = chaos::schedule_campaign(&sc, 3.0, SimTime::ZERO, 600.0, &mix, &mut rng).unwrap();
    assert!(!one.is_empty());
    assert!(one.iter().all(|p| p.scenario_id == 7));
}

#[test]
fn planted_outliers_rank_high() {
    let mut rng = RngStream::from_seed(12);
    let mut data: Vec<Vec<f64>> = (0..480)
        .map(|_| (0..4).map(|_| rng.normal(0.0, 1.0)).collect())
        .collect();
    let mut labels = vec![false; data.len()];
    for _ in 0..20 {
        data.push(
            (0..4)
                .map(|_| rng.uniform_in(5.0, 8.0) * if rng.bernoulli(0.5) { 1.0 } else { -1.0 })
                .collect(),
        );
        labels.push(true);
    }
    let f = IsolationForest::fit(&data, 100, 256, &mut rng).unwrap();
    let scores: Vec<f64> = data.iter().map(|x| f.score(x).unwrap()).collect();
    // AUC as the share of (outlier, inlier) pairs ranked correctly, ties half
    let (mut good, mut pairs) = (0.0, 0.0);
    for (i, si) in scores.iter().enumerate().filter(|(i, _)| labels[*i]) {
        let _ = i;
        for sj in scores
            .iter()
            .enumerate()
            .filter(|(j, _)| !labels[*j])
            .map(|(_, s)| s)
        {
            pairs += 1.0;
            if si > sj {
                good += 1.0;
            } else if si == sj {
                good += 0.5;
            }
        }
    }
    assert!(good / pairs >= 0.95, "{}", good / pairs);
}

#[test]
fn separated_blobs_cluster_purely() {
    let mut rng = RngStream::from_seed(4);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for k in 0..2 {
        for _ in 0..100 {
            let c = if k == 0 { -10.0 } else { 10.0 };
            data.push(vec![rng.normal(c, 1.0), rng.normal(c, 1.0)]);
            labels.push(k);
        }
    }
    let km = KMeans::fit(&data, 2, &mut rng).unwrap();
    let clusters: Vec<usize> = data.iter().map(|x| km.assign(x)).collect();
    assert_eq!(purity(&clusters, &labels), 1.0);
}

#[test]
fn pure_leaf_reports_full_purity() {
    let rows = vec![
        (vec![0.0], 0),
        (vec![0.1], 0),
        (vec![5.0], 1),
        (vec![5.2], 1),
    ];
    let t = DecisionTree::fit(&rows, 2, TreeParams::UNBOUNDED).unwrap();
    assert_eq!(t.classify(&[0.05]).unwrap(), (0, 1.0));
    assert_eq!(t.classify(&[6.0]).unwrap(), (1, 1.0));
}

#[test]
fn modes_serialize_by_their_cli_names() {
    for m in Mode::ALL {
        let j = serde_json::to_string(&m).unwrap();
        assert_eq!(j, format!("\"{}\"", m.name()));
        assert_eq!(serde_json::from_str::<Mode>(&j).unwrap(), m);
    }
    assert_eq!(
        serde_json::from_str::<Mode>("\"AutoFix\"").unwrap(),
        Mode::AutoFix
    );
}
