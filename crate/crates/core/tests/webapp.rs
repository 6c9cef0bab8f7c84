use selfheal_core::engine::{RngStream, SimTime};
use selfheal_core::execute::Mode;
use selfheal_core::plan::KnowledgeBase;
use selfheal_core::sim::{World, WorldConfig};
use selfheal_core::webapp::{
    latency_multiplier, App, AppConfig, Availability, FaultEffect, OpType, RequestStatus, TierId,
    WorkloadConfig,
};

fn app() -> App {
    let mut rng = RngStream::derive(1, "faults", 0);
    App::new(AppConfig::default(), WorkloadConfig::default(), &mut rng).with_ledger()
}

fn world(workload: WorkloadConfig, seed: u64) -> World {
    let cfg = WorldConfig {
        workload,
        ..WorldConfig::default()
    };
    World::new(cfg, Mode::NoHeal, seed, None, KnowledgeBase::default(), 0.0)
}

#[test]
fn idle_path_costs_the_sum_of_base_latencies() {
    let mut a = app();
    let mut rng = RngStream::from_seed(5);
    for i in 0..50 {
        let t = SimTime::from_secs(i);
        let (id, done) = a.issue(0, OpType::Query, t, &mut rng);
        a.complete(id, done);
    }
    let rts: Vec<f64> = a.ledger().unwrap().iter().map(|r| r.rt_ms).collect();
    // 5 + 20 + 10 ms, each hop stretched by at most 20% service jitter
    for rt in &rts {
        assert!((35.0..=42.0 + 1e-9).contains(rt), "{rt}");
    }
}

#[test]
fn db_down_fails_queries_at_the_db() {
    let mut a = app();
    let mut rng = RngStream::from_seed(5);
    a.apply_effect(FaultEffect::Crash { tier: TierId::Db })
        .unwrap();
    let (id, done) = a.issue(0, OpType::Query, SimTime::from_secs(1), &mut rng);
    a.complete(id, done);
    assert_eq!(
        a.ledger().unwrap()[0].status,
        RequestStatus::Error {
            http: 503,
            tier: TierId::Db
        }
    );
    // uploads never touch the db
    let (id, done) = a.issue(0, OpType::Upload, SimTime::from_secs(2), &mut rng);
    a.complete(id, done);
    assert_eq!(a.ledger().unwrap()[1].status, RequestStatus::Ok);
}

#[test]
fn half_load_doubles_latency() {
    assert_eq!(latency_multiplier(0.5), 2.0);
    assert_eq!(latency_multiplier(0.0), 1.0);
    assert_eq!(latency_multiplier(0.99), latency_multiplier(0.95));
}

#[test]
fn idle_telemetry_shows_bias_only() {
    let mut a = app();
    let mut rng = RngStream::from_seed(2);
    let s = a.sample_telemetry(SimTime::from_secs(1), 1.0, &mut rng);
    for x in &s {
        assert_eq!(x.cpu_util, 0.0);
        assert_eq!(x.error_count, 0);
        assert!(x.available);
    }
    a.apply_effect(FaultEffect::CpuOverload {
        tier: TierId::Api,
        bias: 0.4,
    })
    .unwrap();
    let s = a.sample_telemetry(SimTime::from_secs(2), 1.0, &mut rng);
    assert_eq!(s[TierId::Api.index()].cpu_util, 0.4);
}

#[test]
fn down_tier_errors_everything_routed_to_it() {
    let mut a = app();
    let mut rng = RngStream::from_seed(3);
    a.apply_effect(FaultEffect::Crash {
        tier: TierId::Frontend,
    })
    .unwrap();
    for i in 0..20 {
        let op = OpType::ALL[i % 3];
        let (id, done) = a.issue(0, op, SimTime::from_millis(i as u64 * 50), &mut rng);
        a.complete(id, done);
    }
    let s = a.sample_telemetry(SimTime::from_secs(1), 1.0, &mut rng);
    let fe = &s[TierId::Frontend.index()];
    assert!(!fe.available);
    assert_eq!(fe.request_count, 20);
    assert_eq!(fe.error_count, 20);
}

#[test]
fn effects_apply_and_revert() {
    let mut a = app();
    let mut rng = RngStream::from_seed(4);
    let crash = a
        .apply_effect(FaultEffect::Crash { tier: TierId::Api })
        .unwrap();
    assert_eq!(a.tier(TierId::Api).availability(), Availability::Down);
    a.revert_effect(&crash);
    assert_eq!(a.tier(TierId::Api).availability(), Availability::Up);

    let base = a.tier(TierId::Api).mem_used_mb;
    a.apply_effect(FaultEffect::Leak {
        tier: TierId::Api,
        rate_mb_s: 2.0,
    })
    .unwrap();
    for s in 1..=10 {
        a.sample_telemetry(SimTime::from_secs(s), 1.0, &mut rng);
    }
    assert!((a.tier(TierId::Api).mem_used_mb - base - 20.0).abs() < 1e-9);

    let cpu = a
        .apply_effect(FaultEffect::CpuOverload {
            tier: TierId::Db,
            bias: 0.6,
        })
        .unwrap();
    a.revert_effect(&cpu);
    assert_eq!(a.tier(TierId::Db).cpu_load_bias, 0.0);

    assert!(a
        .apply_effect(FaultEffect::Http500Burst {
            tier: TierId::Api,
            rate: 1.5
        })
        .is_err());
}

#[test]
fn single_user_with_infinite_think_time_issues_once() {
    let mut w = world(
        WorkloadConfig {
            users: 1,
            think_time_s: f64::INFINITY,
            ..WorkloadConfig::default()
        },
        9,
    );
    w.run_until(SimTime::from_secs(120)).unwrap();
    assert_eq!(w.app().counters.issued, 1);
}

#[test]
fn closed_loop_never_double_books_a_user() {
    let users = 100;
    let mut w = world(
        WorkloadConfig {
            users,
            ..WorkloadConfig::default()
        },
        11,
    );
    for s in 1..=60 {
        w.run_until(SimTime::from_secs(s)).unwrap();
        let reqs = w.app().in_flight_requests();
        let mut owners: Vec<u32> = reqs.iter().map(|r| r.user).collect();
        owners.sort_unstable();
        owners.dedup();
        assert_eq!(owners.len(), reqs.len());
        assert!(owners.iter().all(|u| *u < users));
        let c = &w.app().counters;
        assert_eq!(c.issued - c.ok - c.errors - c.timeouts, reqs.len() as u64);
    }
}

#[test]
fn overload_grows_latency_and_produces_timeouts() {
    let light = WorkloadConfig {
        users: 50,
        ..WorkloadConfig::default()
    };
    let heavy = WorkloadConfig {
        users: 3000,
        think_time_s: 0.2,
        ..WorkloadConfig::default()
    };
    let mean_rt = |w: &World| w.app().counters.ok_rt_sum_ms / w.app().counters.ok as f64;
    let mut a = world(light, 3);
    a.run_until(SimTime::from_secs(60)).unwrap();
    let mut b = world(heavy, 3);
    b.run_until(SimTime::from_secs(60)).unwrap();
    assert!(
        mean_rt(&b) > 1.5 * mean_rt(&a),
        "{} vs {}",
        mean_rt(&b),
        mean_rt(&a)
    );
    assert!(b.app().counters.timeouts + b.app().counters.errors > 0);
    assert_eq!(a.app().counters.timeouts, 0);
}
