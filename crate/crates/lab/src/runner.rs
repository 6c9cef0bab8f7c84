//! Fans experiment units out over rayon and gathers them back in seed order.

use std::sync::Arc;

use rayon::prelude::*;
use selfheal_core::analyze::{ConfusionCounts, Models};
use selfheal_core::engine::SimTime;
use selfheal_core::execute::Mode;
use selfheal_core::experiment::{
    self as exp, baseline_row, compare_modes, detection_table, feedback_curve, recovery_rows,
    ExperimentConfig, ExperimentError, ExperimentReport, FeedbackCurve, LoadPoint,
    ReplicationSummary, SeriesPoint, ThetaPoint,
};
use selfheal_core::plan::KnowledgeBase;
use selfheal_core::sim::RunResult;

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Generates the training corpus and fits the detectors.
pub fn train(cfg: &ExperimentConfig) -> Result<Arc<Models>> {
    let jobs = exp::training_jobs(cfg);
    let parts: Vec<_> = jobs
        .par_iter()
        .map(|j| exp::training_run(cfg, *j))
        .collect::<Result<_>>()?;
    let windows: Vec<_> = parts.into_iter().flatten().collect();
    Ok(Arc::new(exp::train_models(cfg, &windows)?))
}

/// Runs of one mode over all replications.
#[derive(Clone, Debug)]
pub struct ModeRuns {
    pub mode: Mode,
    pub reps: Vec<ReplicationSummary>,
    pub runs: Vec<RunResult>,
    pub kb: KnowledgeBase,
}

fn healthy_runs(cfg: &ExperimentConfig, seeds: &[u64], horizon: SimTime) -> Result<Vec<RunResult>> {
    seeds
        .par_iter()
        .map(|s| exp::healthy_run(cfg, *s, horizon))
        .collect()
}

/// Chains `cycles` sequential suites through one knowledge base.
/// Cycle `c` runs on `seed_of(c)` with the decayed exploration rate.
fn learning_chain(
    cfg: &ExperimentConfig,
    mode: Mode,
    seeds: &[u64],
    healthy: &[RunResult],
    models: &Arc<Models>,
) -> Result<ModeRuns> {
    let mut kb = KnowledgeBase::default();
    let mut reps = Vec::with_capacity(seeds.len());
    let mut runs = Vec::with_capacity(seeds.len());
    for (c, (seed, h)) in seeds.iter().zip(healthy).enumerate() {
        let eps = cfg.epsilon_for_cycle(c as u32);
        let (run, next) = exp::sequential_run(cfg, mode, *seed, Some(models.clone()), kb, eps)?;
        kb = next;
        reps.push(ReplicationSummary::new(&run, h, &cfg.scoring, kb.kb_size()));
        runs.push(run);
    }
    Ok(ModeRuns {
        mode,
        reps,
        runs,
        kb,
    })
}

fn independent(
    cfg: &ExperimentConfig,
    mode: Mode,
    seeds: &[u64],
    healthy: &[RunResult],
    models: &Arc<Models>,
) -> Result<ModeRuns> {
    let out: Vec<(ReplicationSummary, RunResult)> = seeds
        .par_iter()
        .zip(healthy)
        .map(|(s, h)| {
            let (run, kb) = exp::sequential_run(
                cfg,
                mode,
                *s,
                Some(models.clone()),
                KnowledgeBase::default(),
                0.0,
            )?;
            Ok((
                ReplicationSummary::new(&run, h, &cfg.scoring, kb.kb_size()),
                run,
            ))
        })
        .collect::<Result<_>>()?;
    let (reps, runs) = out.into_iter().unzip();
    Ok(ModeRuns {
        mode,
        reps,
        runs,
        kb: KnowledgeBase::default(),
    })
}

/// The sequential suite under every requested mode, `cfg.replications`
/// seeds each. AutoFix carries its knowledge base from one replication to
/// the next.
pub fn recovery_matrix(
    cfg: &ExperimentConfig,
    models: &Arc<Models>,
    modes: &[Mode],
) -> Result<Vec<ModeRuns>> {
    let seeds: Vec<u64> = (0..cfg.replications).map(|r| cfg.eval_seed(r)).collect();
    let scenarios = cfg.selected_scenarios();
    let horizon =
        selfheal_core::sim::sequential_horizon(&scenarios, cfg.world.warmup_s as f64, cfg.gap_s);
    let healthy = healthy_runs(cfg, &seeds, horizon)?;
    modes
        .par_iter()
        .map(|m| {
            if *m == Mode::AutoFix && cfg.world.exec.feedback {
                learning_chain(cfg, *m, &seeds, &healthy, models)
            } else {
                independent(cfg, *m, &seeds, &healthy, models)
            }
        })
        .collect()
}

/// Learning-curve study: per feedback seed, `cfg.cycles` chained suites.
pub fn feedback_study(
    cfg: &ExperimentConfig,
    models: &Arc<Models>,
    mode: Mode,
) -> Result<FeedbackCurve> {
    let seeds = cfg.feedback_seed_set();
    let scenarios = cfg.selected_scenarios();
    let horizon =
        selfheal_core::sim::sequential_horizon(&scenarios, cfg.world.warmup_s as f64, cfg.gap_s);
    let per_seed: Vec<Vec<ReplicationSummary>> = seeds
        .par_iter()
        .map(|base| {
            let cyc: Vec<u64> = (0..u64::from(cfg.cycles))
                .map(|c| base.wrapping_add(c))
                .collect();
            let healthy: Vec<RunResult> = cyc
                .iter()
                .map(|s| exp::healthy_run(cfg, *s, horizon))
                .collect::<Result<_>>()?;
            Ok(learning_chain(cfg, mode, &cyc, &healthy, models)?.reps)
        })
        .collect::<Result<_>>()?;
    Ok(feedback_curve(
        &per_seed,
        seeds,
        cfg.world.exec.feedback && mode == Mode::AutoFix,
    ))
}

/// Retention against Poisson fault rate for every sweep mode.
pub fn rate_sweep(cfg: &ExperimentConfig, models: &Arc<Models>) -> Result<Vec<SeriesPoint>> {
    let seeds: Vec<u64> = (0..cfg.replications).map(|r| cfg.eval_seed(r)).collect();
    let horizon = exp::campaign_horizon(cfg);
    let start = SimTime::from_secs(cfg.world.warmup_s);
    let healthy = healthy_runs(cfg, &seeds, horizon)?;
    let mut units = Vec::new();
    for (ri, rate) in cfg.sweeps.fault_rates.iter().enumerate() {
        for (mi, mode) in cfg.sweeps.modes.iter().enumerate() {
            for (si, seed) in seeds.iter().enumerate() {
                units.push((ri, mi, si, *rate, *mode, *seed));
            }
        }
    }
    let ret: Vec<f64> = units
        .par_iter()
        .map(|&(_, _, si, rate, mode, seed)| {
            let run = exp::campaign_run(
                cfg,
                mode,
                seed,
                rate,
                Some(models.clone()),
                KnowledgeBase::default(),
                cfg.world.exec.epsilon,
            )?;
            Ok(exp::retention_between(&run, &healthy[si], start, horizon))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (ri, rate) in cfg.sweeps.fault_rates.iter().enumerate() {
        for (mi, mode) in cfg.sweeps.modes.iter().enumerate() {
            let v: Vec<f64> = units
                .iter()
                .zip(&ret)
                .filter(|((r, m, ..), _)| *r == ri && *m == mi)
                .map(|(_, x)| *x)
                .collect();
            out.push(SeriesPoint {
                fault_rate_per_min: *rate,
                mode: *mode,
                retention_pct: exp_mean(&v),
            });
        }
    }
    Ok(out)
}

fn exp_mean(v: &[f64]) -> f64 {
    selfheal_core::metrics::stats::mean(v)
}

/// Detection thresholds over unhealed runs, so every threshold sees the same world.
pub fn theta_sweep(cfg: &ExperimentConfig, models: &Arc<Models>) -> Result<Vec<ThetaPoint>> {
    let seeds: Vec<u64> = (0..cfg.replications).map(|r| cfg.eval_seed(r)).collect();
    let mut units = Vec::new();
    for (ti, th) in cfg.sweeps.theta.iter().enumerate() {
        for s in &seeds {
            units.push((ti, *th, *s));
        }
    }
    let counts: Vec<ConfusionCounts> = units
        .par_iter()
        .map(|&(_, th, seed)| {
            let mut c = cfg.clone();
            c.world.analyzer.theta = th;
            let (run, _) = exp::sequential_run(
                &c,
                Mode::NoHeal,
                seed,
                Some(models.clone()),
                KnowledgeBase::default(),
                0.0,
            )?;
            Ok(selfheal_core::analyze::score_detection(&run.diagnoses, &run.faults, &c.scoring).0)
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (ti, th) in cfg.sweeps.theta.iter().enumerate() {
        let mut total = ConfusionCounts::default();
        for ((t, ..), c) in units.iter().zip(&counts) {
            if *t == ti {
                total.merge(c);
            }
        }
        let (fp, fn_) = exp::fp_fn(&total);
        out.push(ThetaPoint {
            theta: *th,
            false_positives: fp,
            false_negatives: fn_,
            macro_f1_pct: detection_table(&total).ok().map(|d| d.macro_f1_pct),
        });
    }
    Ok(out)
}

/// AutoFix under different user counts.
pub fn load_sweep(cfg: &ExperimentConfig, models: &Arc<Models>) -> Result<Vec<LoadPoint>> {
    let seeds: Vec<u64> = (0..cfg.replications).map(|r| cfg.eval_seed(r)).collect();
    let mut units = Vec::new();
    for (ui, u) in cfg.sweeps.users.iter().enumerate() {
        for s in &seeds {
            units.push((ui, *u, *s));
        }
    }
    let rows: Vec<[f64; 4]> = units
        .par_iter()
        .map(|&(_, users, seed)| {
            let mut c = cfg.clone();
            c.world.workload.users = users;
            let (run, _) = exp::sequential_run(
                &c,
                Mode::AutoFix,
                seed,
                Some(models.clone()),
                KnowledgeBase::default(),
                c.world.exec.epsilon,
            )?;
            let healthy = exp::healthy_run(&c, seed, run.horizon)?;
            let secs = (run.horizon.as_secs_f64() - c.world.warmup_s as f64).max(1.0);
            let k = &run.counters;
            let done = k.ok + k.errors + k.timeouts;
            Ok([
                k.ok as f64 / secs,
                if k.ok > 0 {
                    k.ok_rt_sum_ms / k.ok as f64
                } else {
                    0.0
                },
                if done > 0 {
                    (k.errors + k.timeouts) as f64 * 100.0 / done as f64
                } else {
                    0.0
                },
                exp::retention_in_windows(&run, &healthy),
            ])
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (ui, u) in cfg.sweeps.users.iter().enumerate() {
        let sel: Vec<&[f64; 4]> = units
            .iter()
            .zip(&rows)
            .filter(|((i, ..), _)| *i == ui)
            .map(|(_, r)| r)
            .collect();
        let col = |j: usize| exp_mean(&sel.iter().map(|r| r[j]).collect::<Vec<_>>());
        out.push(LoadPoint {
            users: *u,
            throughput_rps: col(0),
            avg_rt_ms: col(1),
            error_rate_pct: col(2),
            retention_pct: col(3),
        });
    }
    Ok(out)
}

/// Pools detection counts from the runs of every ML-gated mode.
pub fn pooled_detection(runs: &[ModeRuns]) -> ConfusionCounts {
    let mut total = ConfusionCounts::default();
    for m in runs.iter().filter(|m| m.mode == Mode::AutoFix) {
        for r in &m.reps {
            total.merge(&r.confusion);
        }
    }
    total
}

/// Recovery table, baseline matrix, detection table and paired statistics.
pub fn fill_core_tables(report: &mut ExperimentReport, runs: &[ModeRuns]) {
    let manual = runs
        .iter()
        .find(|m| m.mode == Mode::ManualRunbook)
        .map(|m| m.reps.as_slice());
    for m in runs {
        report
            .recovery
            .extend(recovery_rows(m.mode, &m.reps, manual));
        report.baselines.push(baseline_row(m.mode, &m.reps));
    }
    report.detection = detection_table(&pooled_detection(runs)).ok();
    if let Some(auto) = runs.iter().find(|m| m.mode == Mode::AutoFix) {
        let ttr = |m: &ModeRuns| {
            m.reps
                .iter()
                .map(ReplicationSummary::mean_ttr)
                .collect::<Vec<_>>()
        };
        let ret = |m: &ModeRuns| m.reps.iter().map(|r| r.retention_pct).collect::<Vec<_>>();
        let others: Vec<&ModeRuns> = runs.iter().filter(|m| m.mode != Mode::AutoFix).collect();
        let a_ttr = ttr(auto);
        let o_ttr: Vec<(Mode, Vec<f64>)> = others.iter().map(|m| (m.mode, ttr(m))).collect();
        report
            .statistics
            .extend(compare_modes("mean_ttr_s", (Mode::AutoFix, &a_ttr), &o_ttr));
        let a_ret = ret(auto);
        let o_ret: Vec<(Mode, Vec<f64>)> = others.iter().map(|m| (m.mode, ret(m))).collect();
        report.statistics.extend(compare_modes(
            "throughput_retention_pct",
            (Mode::AutoFix, &a_ret),
            &o_ret,
        ));
    }
}
