//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any fails. Tolerances and time budgets are pinned below.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use selfheal_lab::core::engine::RngStream;
use selfheal_lab::core::execute::Mode;
use selfheal_lab::core::experiment::{BaselineRow, ExperimentConfig, FeedbackCurve};
use selfheal_lab::core::metrics;
use selfheal_lab::{emit, runner, study};

/// Reference detection rows: precision, recall, reported F1.
const DETECTION_ROWS: [(f64, f64, f64); 5] = [
    (95.40, 92.10, 93.70),
    (90.20, 93.50, 91.80),
    (87.30, 89.60, 88.40),
    (94.10, 90.30, 92.10),
    (88.60, 86.70, 87.60),
];
const REPORTED_MACRO_F1: f64 = 90.70;
const F1_TOL: f64 = 0.05;

/// Reference recovery rows: manual TTR, AutoFix TTR, reported improvement. The last is the average row.
const RECOVERY_ROWS: [(f64, f64, f64); 6] = [
    (7.80, 3.20, 58.90),
    (10.40, 4.50, 56.70),
    (9.20, 3.90, 57.60),
    (8.50, 3.70, 56.50),
    (8.90, 4.30, 51.70),
    (8.96, 3.92, 56.20),
];
const SPEED_TOL_PP: f64 = 0.1;

const RSR_BAND: (f64, f64) = (90.2, 96.2);
const TTR_BAND: (f64, f64) = (3.4, 4.4);
const ORDERING_SEEDS: u64 = 10;
const ORDERING_MIN_PASS: usize = 9;
const MIN_MACRO_F1_PCT: f64 = 85.0;
const STRESS_RATE: f64 = 2.0;
const AUTOFIX_MIN_RETENTION: f64 = 85.0;
const NOHEAL_MAX_RETENTION: f64 = 75.0;
const MIN_TTR_REDUCTION_PCT: f64 = 10.0;
const MIN_DELTA_DA_PP: f64 = 5.0;
const PROPERTY_CASES: u64 = 64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn criterion(n: u32, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let took = start.elapsed();
    let pass = o.pass && took <= budget;
    println!(
        "[{}] {n:>2}. {name}: {} ({:.1}s, budget {}s)",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn formula_f1() -> Outcome {
    let first = metrics::f1(DETECTION_ROWS[0].0, DETECTION_ROWS[0].1);
    let reported_mean = DETECTION_ROWS.iter().map(|r| r.2).sum::<f64>() / 5.0;
    let from_pr: Vec<f64> = DETECTION_ROWS
        .iter()
        .map(|r| metrics::f1(r.0, r.1))
        .collect();
    let recomputed_mean = from_pr.iter().sum::<f64>() / 5.0;
    let pass =
        (first - 93.7).abs() <= F1_TOL && (reported_mean - REPORTED_MACRO_F1).abs() <= F1_TOL;
    Outcome {
        pass,
        detail: format!(
            "F1(95.40, 92.10) = {first:.4}; macro of row F1 = {reported_mean:.4} (from P/R {recomputed_mean:.4}); tol {F1_TOL}"
        ),
    }
}

fn formula_speed() -> Outcome {
    let mut worst: f64 = 0.0;
    for (manual, auto, reported) in RECOVERY_ROWS {
        match metrics::speed_improvement(manual, auto) {
            Ok(s) => worst = worst.max((s - reported).abs()),
            Err(e) => {
                return Outcome {
                    pass: false,
                    detail: e.to_string(),
                }
            }
        }
    }
    Outcome {
        pass: worst <= SPEED_TOL_PP,
        detail: format!("max deviation {worst:.3} pp over 6 rows; tol {SPEED_TOL_PP}"),
    }
}

fn baseline(rows: &[BaselineRow], mode: Mode) -> Option<&BaselineRow> {
    rows.iter().find(|r| r.mode == mode)
}

fn ordered(rows: &[BaselineRow]) -> Option<bool> {
    let l: Vec<&BaselineRow> = Mode::HEALING
        .iter()
        .map(|m| baseline(rows, *m))
        .collect::<Option<_>>()?;
    let ttr = l.windows(2).all(|w| w[0].mean_ttr_s > w[1].mean_ttr_s);
    let ret = l
        .windows(2)
        .all(|w| w[0].throughput_retention_pct < w[1].throughput_retention_pct);
    Some(ttr && ret)
}

fn ordering() -> Outcome {
    let mut passed = 0;
    let mut failed = Vec::new();
    for k in 0..ORDERING_SEEDS {
        let cfg = ExperimentConfig {
            seed: 42 + 1000 * k,
            ..ExperimentConfig::default()
        };
        let ok = match study::run_baselines(&cfg) {
            Ok(s) => ordered(&s.report.baselines).unwrap_or(false),
            Err(e) => {
                failed.push(format!("{}: {e}", cfg.seed));
                continue;
            }
        };
        if ok {
            passed += 1;
        } else {
            failed.push(cfg.seed.to_string());
        }
    }
    Outcome {
        pass: passed >= ORDERING_MIN_PASS,
        detail: format!(
            "{passed}/{ORDERING_SEEDS} seeds ordered (min {ORDERING_MIN_PASS}); failing: [{}]",
            failed.join(", ")
        ),
    }
}

fn stress_retention() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.sweeps.fault_rates = vec![STRESS_RATE];
    cfg.sweeps.modes = vec![Mode::AutoFix, Mode::NoHeal];
    let points = match runner::train(&cfg).and_then(|m| runner::rate_sweep(&cfg, &m)) {
        Ok(p) => p,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: e.to_string(),
            }
        }
    };
    let at = |m: Mode| {
        points
            .iter()
            .find(|p| p.mode == m && p.fault_rate_per_min == STRESS_RATE)
            .map(|p| p.retention_pct)
    };
    match (at(Mode::AutoFix), at(Mode::NoHeal)) {
        (Some(a), Some(n)) => Outcome {
            pass: a >= AUTOFIX_MIN_RETENTION && n <= NOHEAL_MAX_RETENTION,
            detail: format!(
                "at {STRESS_RATE}/min AutoFix {a:.2}% (min {AUTOFIX_MIN_RETENTION}), no-heal {n:.2}% (max {NOHEAL_MAX_RETENTION})"
            ),
        },
        _ => Outcome { pass: false, detail: "sweep point missing".into() },
    }
}

fn feedback() -> Outcome {
    match study::run_feedback(&ExperimentConfig::default()) {
        Ok(s) => match s.report.feedback.and_then(|f| f.summary) {
            Some(m) => Outcome {
                pass: m.ttr_reduction_pct >= MIN_TTR_REDUCTION_PCT && m.delta_da_pp >= MIN_DELTA_DA_PP,
                detail: format!(
                    "TTR reduction {:.2}% (min {MIN_TTR_REDUCTION_PCT}), delta DA {:+.2} pp (min {MIN_DELTA_DA_PP})",
                    m.ttr_reduction_pct, m.delta_da_pp
                ),
            },
            None => Outcome { pass: false, detail: "no feedback summary".into() },
        },
        Err(e) => Outcome { pass: false, detail: e.to_string() },
    }
}

fn mean_cycle_ttr(c: &FeedbackCurve) -> f64 {
    c.cycles.iter().map(|c| c.mean_ttr_s).sum::<f64>() / c.cycles.len() as f64
}

fn ablation() -> Outcome {
    let on = ExperimentConfig::default();
    let mut off = on.clone();
    off.world.exec.feedback = false;
    let curves = runner::train(&on).and_then(|m| {
        Ok((
            runner::feedback_study(&on, &m, Mode::AutoFix)?,
            runner::feedback_study(&off, &m, Mode::AutoFix)?,
            runner::feedback_study(&on, &m, Mode::RuleOnly)?,
        ))
    });
    match curves {
        Ok((full, no_fb, rules)) => {
            let (a, b, c) = (
                mean_cycle_ttr(&full),
                mean_cycle_ttr(&no_fb),
                mean_cycle_ttr(&rules),
            );
            Outcome {
                pass: b > a && c > b,
                detail: format!(
                    "5-cycle mean TTR: full {a:.3}s, no feedback {b:.3}s ({:+.1}%), rule-only {c:.3}s ({:+.1}%)",
                    (b / a - 1.0) * 100.0,
                    (c / a - 1.0) * 100.0
                ),
            }
        }
        Err(e) => Outcome {
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn below(rng: &mut RngStream, n: u64) -> u64 {
    rng.below(n as usize) as u64
}

fn properties() -> Outcome {
    let mut rng = RngStream::from_seed(0x5eed);
    let mut failures: Vec<String> = Vec::new();
    let mut note = |suite: &str, r: oracles::Check| {
        if let Err(e) = r {
            if failures.len() < 3 {
                failures.push(format!("{suite}: {e}"));
            }
        }
    };
    for _ in 0..PROPERTY_CASES {
        let times: Vec<u64> = (0..below(&mut rng, 60))
            .map(|_| below(&mut rng, 50))
            .collect();
        note("scheduler", oracles::check_scheduler(&times));

        let values: Vec<f64> = (0..1 + below(&mut rng, 119))
            .map(|_| rng.uniform())
            .collect();
        note(
            "monitor",
            oracles::check_monitor_window(&values, 1 + below(&mut rng, 89)),
        );

        let seed = rng.next_u64();
        note("iforest", oracles::check_iforest(seed));
        note(
            "tree",
            oracles::check_tree(seed, 10 + below(&mut rng, 190) as usize),
        );

        let d: Vec<f64> = (0..1 + below(&mut rng, 12))
            .map(|_| below(&mut rng, 13) as f64 - 6.0)
            .collect();
        note("wilcoxon", oracles::check_wilcoxon(&d));

        let faults: Vec<_> = (0..below(&mut rng, 8))
            .map(|_| {
                let life = if rng.bernoulli(0.5) {
                    Some(1 + below(&mut rng, 119))
                } else {
                    None
                };
                (
                    below(&mut rng, 3) as usize,
                    below(&mut rng, 900),
                    below(&mut rng, 8) as usize,
                    life,
                )
            })
            .collect();
        let diags: Vec<_> = (0..below(&mut rng, 25))
            .map(|_| {
                (
                    below(&mut rng, 3) as usize,
                    below(&mut rng, 1000),
                    below(&mut rng, 6) as usize,
                )
            })
            .collect();
        note("confusion", oracles::check_confusion(&faults, &diags));

        let arr = |rng: &mut RngStream, lo: u64| std::array::from_fn(|_| lo + below(rng, 500 - lo));
        let (tp, fp, fn_) = (arr(&mut rng, 1), arr(&mut rng, 0), arr(&mut rng, 0));
        note("f1 bounds", oracles::check_f1_bounds(tp, fp, fn_));
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{PROPERTY_CASES} cases of each of 7 oracles")
        } else {
            failures.join("; ")
        },
    }
}

const OUT_OF_SCOPE: [&str; 5] = ["SUS", "Shapiro", "usability", "cross-environment", "89.8%"];

fn main() -> ExitCode {
    println!("acceptance suite");
    let mut ok = Vec::new();
    ok.push(criterion(1, "F1 formula", secs(1), formula_f1));
    ok.push(criterion(
        2,
        "speed improvement formula",
        secs(1),
        formula_speed,
    ));

    // criteria 3, 5 and 10 share one run of the default suite
    let start = Instant::now();
    let run = study::run_experiment(&ExperimentConfig::default());
    let run_time = start.elapsed();
    let run = match run {
        Ok(s) => s,
        Err(e) => {
            println!("[FAIL] default suite did not complete: {e}");
            return ExitCode::FAILURE;
        }
    };
    ok.push(criterion(3, "AutoFix recovery reproduction", secs(120), || {
        match baseline(&run.report.baselines, Mode::AutoFix) {
            Some(a) => Outcome {
                pass: (RSR_BAND.0..=RSR_BAND.1).contains(&a.success_pct)
                    && (TTR_BAND.0..=TTR_BAND.1).contains(&a.mean_ttr_s)
                    && run_time <= secs(120),
                detail: format!(
                    "RSR {:.2}% in {RSR_BAND:?}, mean TTR {:.3}s in {TTR_BAND:?}, suite took {:.1}s",
                    a.success_pct,
                    a.mean_ttr_s,
                    run_time.as_secs_f64()
                ),
            },
            None => Outcome { pass: false, detail: "no AutoFix row".into() },
        }
    }));
    ok.push(criterion(4, "baseline ordering", secs(600), ordering));
    ok.push(criterion(
        5,
        "detection quality",
        secs(300),
        || match &run.report.detection {
            Some(d) => Outcome {
                pass: d.macro_f1_pct >= MIN_MACRO_F1_PCT && run_time <= secs(300),
                detail: format!(
                    "macro F1 {:.2}% (min {MIN_MACRO_F1_PCT}), per class [{}]",
                    d.macro_f1_pct,
                    d.rows
                        .iter()
                        .map(|r| format!(
                            "{} {}",
                            r.class,
                            r.f1_pct.map_or("n/a".into(), |f| format!("{f:.2}"))
                        ))
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            },
            None => Outcome {
                pass: false,
                detail: "no detection table".into(),
            },
        },
    ));
    ok.push(criterion(
        6,
        "throughput retention under stress",
        secs(300),
        stress_retention,
    ));
    ok.push(criterion(7, "feedback improvement", secs(600), feedback));
    ok.push(criterion(8, "ablation direction", secs(600), ablation));
    ok.push(criterion(9, "property suites", secs(120), properties));
    ok.push(criterion(10, "out-of-scope items absent", secs(5), || {
        let text = match emit::json(&run.report) {
            Ok(j) => j + &emit::markdown(&run.report),
            Err(e) => {
                return Outcome {
                    pass: false,
                    detail: e.to_string(),
                }
            }
        };
        let found: Vec<&str> = OUT_OF_SCOPE
            .iter()
            .copied()
            .filter(|w| text.contains(w))
            .collect();
        Outcome {
            pass: found.is_empty(),
            detail: if found.is_empty() {
                format!("none of {OUT_OF_SCOPE:?} in report")
            } else {
                format!("found {found:?}")
            },
        }
    }));

    let passed = ok.iter().filter(|p| **p).count();
    println!("{passed}/{} criteria passed", ok.len());
    if passed == ok.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
