//! Regression gates for `--check`. Each applies only when the report holds
//! the section it reads.

use std::fmt;

use selfheal_core::execute::Mode;
use selfheal_core::experiment::{BaselineRow, ExperimentReport};

pub const MIN_MACRO_F1_PCT: f64 = 85.0;
pub const AUTOFIX_SUCCESS_PCT: (f64, f64) = (90.2, 96.2);
pub const AUTOFIX_TTR_S: (f64, f64) = (3.4, 4.4);
pub const MIN_TTR_REDUCTION_PCT: f64 = 10.0;
pub const MIN_DELTA_DA_PP: f64 = 5.0;
pub const STRESS_RATE_PER_MIN: f64 = 2.0;
pub const STRESS_AUTOFIX_MIN_PCT: f64 = 85.0;
pub const STRESS_NOHEAL_MAX_PCT: f64 = 75.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

fn row(rows: &[BaselineRow], mode: Mode) -> Option<&BaselineRow> {
    rows.iter().find(|r| r.mode == mode)
}

pub fn evaluate(report: &ExperimentReport) -> Vec<Gate> {
    let mut gates = Vec::new();
    if let Some(d) = &report.detection {
        gates.push(Gate {
            name: "macro F1",
            pass: d.macro_f1_pct >= MIN_MACRO_F1_PCT,
            detail: format!("{:.2}% (min {MIN_MACRO_F1_PCT})", d.macro_f1_pct),
        });
    }
    if let Some(a) = row(&report.baselines, Mode::AutoFix) {
        gates.push(Gate {
            name: "AutoFix success rate",
            pass: within(a.success_pct, AUTOFIX_SUCCESS_PCT),
            detail: format!("{:.2}% (want {:?})", a.success_pct, AUTOFIX_SUCCESS_PCT),
        });
        gates.push(Gate {
            name: "AutoFix mean TTR",
            pass: within(a.mean_ttr_s, AUTOFIX_TTR_S),
            detail: format!("{:.2}s (want {:?})", a.mean_ttr_s, AUTOFIX_TTR_S),
        });
    }
    let ladder: Option<Vec<&BaselineRow>> = Mode::HEALING
        .iter()
        .map(|m| row(&report.baselines, *m))
        .collect();
    if let Some(l) = ladder {
        let ttr = l.windows(2).all(|w| w[0].mean_ttr_s > w[1].mean_ttr_s);
        let ret = l
            .windows(2)
            .all(|w| w[0].throughput_retention_pct < w[1].throughput_retention_pct);
        gates.push(Gate {
            name: "baseline ordering",
            pass: ttr && ret,
            detail: l
                .iter()
                .map(|r| {
                    format!(
                        "{} {:.2}s/{:.2}%",
                        r.mode.name(),
                        r.mean_ttr_s,
                        r.throughput_retention_pct
                    )
                })
                .collect::<Vec<_>>()
                .join(", "),
        });
    }
    if let Some(s) = report.feedback.as_ref().and_then(|f| f.summary.as_ref()) {
        gates.push(Gate {
            name: "feedback TTR reduction",
            pass: s.ttr_reduction_pct >= MIN_TTR_REDUCTION_PCT,
            detail: format!("{:.2}% (min {MIN_TTR_REDUCTION_PCT})", s.ttr_reduction_pct),
        });
        gates.push(Gate {
            name: "feedback decision accuracy",
            pass: s.delta_da_pp >= MIN_DELTA_DA_PP,
            detail: format!("{:+.2} pp (min {MIN_DELTA_DA_PP})", s.delta_da_pp),
        });
    }
    let at = |m: Mode| {
        report
            .throughput_series
            .iter()
            .find(|p| p.mode == m && (p.fault_rate_per_min - STRESS_RATE_PER_MIN).abs() < 1e-9)
            .map(|p| p.retention_pct)
    };
    if let (Some(a), Some(n)) = (at(Mode::AutoFix), at(Mode::NoHeal)) {
        gates.push(Gate {
            name: "retention under stress",
            pass: a >= STRESS_AUTOFIX_MIN_PCT && n <= STRESS_NOHEAL_MAX_PCT,
            detail: format!("autofix {a:.2}% (min {STRESS_AUTOFIX_MIN_PCT}), no-heal {n:.2}% (max {STRESS_NOHEAL_MAX_PCT})"),
        });
    }
    gates
}
