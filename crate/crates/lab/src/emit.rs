//! Report files: nested JSON, a CSV set with fixed schemas, and markdown
//! tables.
//!
//! CSV floats carry exactly four decimals. Formatting rounds the exact
//! binary value, so a true tie such as 0.03125 goes to the even digit
//! (0.0312) while 0.09375 becomes 0.0938. Missing values are empty cells.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use sha2::{Digest, Sha256};

use selfheal_core::chaos::FaultScenario;
use selfheal_core::execute::Mode;
use selfheal_core::experiment::{ExperimentReport, RecoveryRow};

use crate::study::Study;
use crate::{io_err, LabError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
    Md,
}

pub fn fmt4(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

fn opt4(x: Option<f64>) -> String {
    x.map_or(String::new(), fmt4)
}

fn fmt2(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => {
            let s = format!("{v:.2}");
            if s == "-0.00" {
                "0.00".to_string()
            } else {
                s
            }
        }
        _ => "n/a".to_string(),
    }
}

pub const DETECTION_HEADER: [&str; 4] = ["class", "precision", "recall", "f1"];
pub const RECOVERY_HEADER: [&str; 6] = [
    "class",
    "mode",
    "mean_ttr_s",
    "sd_ttr_s",
    "success_rate_pct",
    "speed_improvement_pct",
];
pub const BASELINES_HEADER: [&str; 5] = [
    "mode",
    "mean_ttr_s",
    "sd_ttr_s",
    "success_pct",
    "throughput_retention_pct",
];
pub const SERIES_HEADER: [&str; 3] = ["fault_rate_per_min", "mode", "retention_pct"];
pub const FEEDBACK_HEADER: [&str; 4] = ["cycle", "decision_accuracy_pct", "mean_ttr_s", "kb_size"];
pub const THETA_HEADER: [&str; 4] = [
    "theta",
    "false_positives",
    "false_negatives",
    "macro_f1_pct",
];
pub const LOAD_HEADER: [&str; 5] = [
    "users",
    "throughput_rps",
    "avg_rt_ms",
    "error_rate_pct",
    "retention_pct",
];

fn table(header: &[&str], rows: Vec<Vec<String>>) -> Result<String, LabError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// The CSV set for whatever sections the report holds, as (file name, body).
/// Detection scores are percentages.
pub fn csv_tables(report: &ExperimentReport) -> Result<Vec<(&'static str, String)>, LabError> {
    let mut out = Vec::new();
    if let Some(d) = &report.detection {
        let mut rows: Vec<Vec<String>> = d
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.class.clone(),
                    opt4(r.precision_pct),
                    opt4(r.recall_pct),
                    opt4(r.f1_pct),
                ]
            })
            .collect();
        rows.push(vec![
            "Average".to_string(),
            fmt4(d.macro_precision_pct),
            fmt4(d.macro_recall_pct),
            fmt4(d.macro_f1_pct),
        ]);
        out.push(("detection_metrics.csv", table(&DETECTION_HEADER, rows)?));
    }
    if !report.recovery.is_empty() {
        let rows = report
            .recovery
            .iter()
            .map(|r| {
                vec![
                    r.class.clone(),
                    r.mode.name().to_string(),
                    opt4(r.mean_ttr_s),
                    opt4(r.sd_ttr_s),
                    opt4(r.success_rate_pct),
                    opt4(r.speed_improvement_pct),
                ]
            })
            .collect();
        out.push(("recovery.csv", table(&RECOVERY_HEADER, rows)?));
    }
    if !report.baselines.is_empty() {
        let rows = report
            .baselines
            .iter()
            .map(|b| {
                vec![
                    b.mode.name().to_string(),
                    fmt4(b.mean_ttr_s),
                    fmt4(b.sd_ttr_s),
                    fmt4(b.success_pct),
                    fmt4(b.throughput_retention_pct),
                ]
            })
            .collect();
        out.push(("baselines.csv", table(&BASELINES_HEADER, rows)?));
    }
    if !report.throughput_series.is_empty() {
        let rows = report
            .throughput_series
            .iter()
            .map(|p| {
                vec![
                    fmt4(p.fault_rate_per_min),
                    p.mode.name().to_string(),
                    fmt4(p.retention_pct),
                ]
            })
            .collect();
        out.push(("throughput_series.csv", table(&SERIES_HEADER, rows)?));
    }
    if let Some(f) = &report.feedback {
        let rows = f
            .cycles
            .iter()
            .map(|c| {
                vec![
                    c.cycle.to_string(),
                    fmt4(c.decision_accuracy_pct),
                    fmt4(c.mean_ttr_s),
                    c.kb_size.to_string(),
                ]
            })
            .collect();
        out.push(("feedback.csv", table(&FEEDBACK_HEADER, rows)?));
    }
    if !report.theta_sweep.is_empty() {
        let rows = report
            .theta_sweep
            .iter()
            .map(|t| {
                vec![
                    fmt4(t.theta),
                    t.false_positives.to_string(),
                    t.false_negatives.to_string(),
                    opt4(t.macro_f1_pct),
                ]
            })
            .collect();
        out.push(("theta_sweep.csv", table(&THETA_HEADER, rows)?));
    }
    if !report.load_sweep.is_empty() {
        let rows = report
            .load_sweep
            .iter()
            .map(|l| {
                vec![
                    l.users.to_string(),
                    fmt4(l.throughput_rps),
                    fmt4(l.avg_rt_ms),
                    fmt4(l.error_rate_pct),
                    fmt4(l.retention_pct),
                ]
            })
            .collect();
        out.push(("load_sweep.csv", table(&LOAD_HEADER, rows)?));
    }
    Ok(out)
}

fn md_table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    out.push_str(&format!("| {} |\n", header.join(" | ")));
    out.push_str(&format!(
        "|{}\n",
        header.iter().map(|_| "---|").collect::<String>()
    ));
    for r in rows {
        out.push_str(&format!("| {} |\n", r.join(" | ")));
    }
    out.push('\n');
}

/// Pairs each class's manual row with the other mode's row.
fn recovery_pairs(rows: &[RecoveryRow]) -> Vec<(&RecoveryRow, Option<&RecoveryRow>)> {
    let other = rows
        .iter()
        .map(|r| r.mode)
        .find(|m| *m != Mode::ManualRunbook);
    rows.iter()
        .filter(|r| r.mode == Mode::ManualRunbook)
        .map(|m| {
            (
                m,
                other.and_then(|o| rows.iter().find(|r| r.mode == o && r.class == m.class)),
            )
        })
        .collect()
}

/// Markdown tables, two decimals.
pub fn markdown(report: &ExperimentReport) -> String {
    let mut out = format!("# Self-healing experiment (seed {})\n\n", report.seed);
    if let Some(d) = &report.detection {
        out.push_str("## Detection accuracy\n\n");
        let mut rows: Vec<Vec<String>> = d
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.class.clone(),
                    fmt2(r.precision_pct),
                    fmt2(r.recall_pct),
                    fmt2(r.f1_pct),
                ]
            })
            .collect();
        rows.push(vec![
            "Average".to_string(),
            fmt2(Some(d.macro_precision_pct)),
            fmt2(Some(d.macro_recall_pct)),
            fmt2(Some(d.macro_f1_pct)),
        ]);
        md_table(
            &mut out,
            &[
                "Anomaly Type",
                "Precision (%)",
                "Recall (%)",
                "F1-Score (%)",
            ],
            &rows,
        );
    }
    if !report.recovery.is_empty() {
        let pairs = recovery_pairs(&report.recovery);
        let label = pairs
            .iter()
            .find_map(|(_, o)| o.map(|r| r.mode.label()))
            .unwrap_or("Mode");
        out.push_str("## Recovery time\n\n");
        let rows: Vec<Vec<String>> = pairs
            .iter()
            .map(|(m, o)| {
                vec![
                    m.class.clone(),
                    fmt2(m.mean_ttr_s),
                    fmt2(o.and_then(|r| r.mean_ttr_s)),
                    fmt2(o.and_then(|r| r.speed_improvement_pct)),
                    fmt2(o.and_then(|r| r.success_rate_pct)),
                ]
            })
            .collect();
        let h2 = format!("{label} TTR (s)");
        md_table(
            &mut out,
            &[
                "Fault Type",
                "Manual TTR (s)",
                &h2,
                "Speed Improvement (%)",
                "Success Rate (%)",
            ],
            &rows,
        );
    }
    if !report.baselines.is_empty() {
        out.push_str("## Comparison with baselines\n\n");
        let rows: Vec<Vec<String>> = report
            .baselines
            .iter()
            .map(|b| {
                vec![
                    b.mode.label().to_string(),
                    fmt2(Some(b.mean_ttr_s)),
                    fmt2(Some(b.success_pct)),
                    fmt2(Some(b.throughput_retention_pct)),
                ]
            })
            .collect();
        md_table(
            &mut out,
            &[
                "Approach",
                "Mean TTR (s)",
                "Success Rate (%)",
                "Throughput Retention (%)",
            ],
            &rows,
        );
    }
    if !report.statistics.is_empty() {
        out.push_str("## Paired tests\n\n");
        let rows: Vec<Vec<String>> = report
            .statistics
            .iter()
            .map(|s| {
                vec![
                    s.metric.clone(),
                    format!("{} vs {}", s.a.name(), s.b.name()),
                    fmt2(Some(s.comparison.t)),
                    format!("{:.4}", s.p_holm),
                    format!("{:.4}", s.wilcoxon_p_holm),
                    fmt2(Some(s.comparison.cohens_d)),
                ]
            })
            .collect();
        md_table(
            &mut out,
            &[
                "Metric",
                "Pair",
                "t",
                "p (Holm)",
                "Wilcoxon p (Holm)",
                "Cohen's d",
            ],
            &rows,
        );
    }
    if let Some(f) = &report.feedback {
        out.push_str("## Feedback learning\n\n");
        let rows: Vec<Vec<String>> = f
            .cycles
            .iter()
            .map(|c| {
                vec![
                    c.cycle.to_string(),
                    fmt2(Some(c.decision_accuracy_pct)),
                    fmt2(Some(c.mean_ttr_s)),
                    c.kb_size.to_string(),
                ]
            })
            .collect();
        md_table(
            &mut out,
            &["Cycle", "Decision Accuracy (%)", "Mean TTR (s)", "KB Size"],
            &rows,
        );
        if let Some(s) = &f.summary {
            out.push_str(&format!(
                "TTR reduction {}%, decision accuracy change {} pp, KB growth {}.\n\n",
                fmt2(Some(s.ttr_reduction_pct)),
                fmt2(Some(s.delta_da_pp)),
                s.kb_growth
            ));
        }
    }
    if !report.throughput_series.is_empty() {
        out.push_str("## Throughput retention by fault rate\n\n");
        let mut modes: Vec<Mode> = Vec::new();
        let mut rates: Vec<f64> = Vec::new();
        for p in &report.throughput_series {
            if !modes.contains(&p.mode) {
                modes.push(p.mode);
            }
            if !rates.contains(&p.fault_rate_per_min) {
                rates.push(p.fault_rate_per_min);
            }
        }
        let rows: Vec<Vec<String>> = rates
            .iter()
            .map(|r| {
                let mut row = vec![format!("{r}")];
                for m in &modes {
                    let v = report
                        .throughput_series
                        .iter()
                        .find(|p| p.mode == *m && p.fault_rate_per_min == *r)
                        .map(|p| p.retention_pct);
                    row.push(fmt2(v));
                }
                row
            })
            .collect();
        let mut header = vec!["Faults/min"];
        header.extend(modes.iter().map(|m| m.label()));
        md_table(&mut out, &header, &rows);
    }
    if !report.theta_sweep.is_empty() {
        out.push_str("## Detection threshold\n\n");
        let rows: Vec<Vec<String>> = report
            .theta_sweep
            .iter()
            .map(|t| {
                vec![
                    format!("{:.2}", t.theta),
                    t.false_positives.to_string(),
                    t.false_negatives.to_string(),
                    fmt2(t.macro_f1_pct),
                ]
            })
            .collect();
        md_table(
            &mut out,
            &[
                "Theta",
                "False positives",
                "False negatives",
                "Macro F1 (%)",
            ],
            &rows,
        );
    }
    if !report.load_sweep.is_empty() {
        out.push_str("## Load\n\n");
        let rows: Vec<Vec<String>> = report
            .load_sweep
            .iter()
            .map(|l| {
                vec![
                    l.users.to_string(),
                    fmt2(Some(l.throughput_rps)),
                    fmt2(Some(l.avg_rt_ms)),
                    fmt2(Some(l.error_rate_pct)),
                    fmt2(Some(l.retention_pct)),
                ]
            })
            .collect();
        md_table(
            &mut out,
            &[
                "Users",
                "Throughput (req/s)",
                "Avg RT (ms)",
                "Error rate (%)",
                "Retention (%)",
            ],
            &rows,
        );
    }
    if !report.notes.is_empty() {
        out.push_str("## Notes\n\n");
        for n in &report.notes {
            out.push_str(&format!("- {n}\n"));
        }
    }
    out
}

pub fn json<T: Serialize + ?Sized>(value: &T) -> Result<String, LabError> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn put(dir: &Path, name: &str, body: &str, written: &mut Vec<PathBuf>) -> Result<(), LabError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(io_err(&path))?;
    written.push(path);
    Ok(())
}

/// Writes the study into `dir`. `report.json` and its `report.sha256` are
/// always present; the format picks the rest.
pub fn write(dir: &Path, study: &Study, format: Format) -> Result<Vec<PathBuf>, LabError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let report = json(&study.report)?;
    put(dir, "report.json", &report, &mut written)?;
    put(
        dir,
        "report.sha256",
        &format!("{}  report.json\n", sha256_hex(report.as_bytes())),
        &mut written,
    )?;
    match format {
        Format::Json => {
            if let Some(m) = &study.report.model_summary {
                put(dir, "model_summary.json", &json(m)?, &mut written)?;
            }
            if let Some(kb) = &study.knowledge {
                put(dir, "kb.json", &json(kb)?, &mut written)?;
            }
        }
        Format::Csv => {
            for (name, body) in csv_tables(&study.report)? {
                put(dir, name, &body, &mut written)?;
            }
            if !study.outcomes.is_empty() {
                let mut w = csv::Writer::from_writer(Vec::new());
                for o in &study.outcomes {
                    w.serialize(o)?;
                }
                let bytes = w
                    .into_inner()
                    .map_err(|e| csv::Error::from(e.into_error()))?;
                put(
                    dir,
                    "outcomes.csv",
                    &String::from_utf8_lossy(&bytes),
                    &mut written,
                )?;
            }
        }
        Format::Md => put(dir, "report.md", &markdown(&study.report), &mut written)?,
    }
    Ok(written)
}

pub fn scenarios_json(scenarios: &[FaultScenario]) -> Result<String, LabError> {
    json(scenarios)
}
