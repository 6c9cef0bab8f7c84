//! MAPE Analyze: anomaly gate, signature rules and classifier.
//!
//! A tier is flagged when its isolation-forest score reaches `theta` or any
//! signature fires. Signatures win with confidence 1; otherwise the decision
//! tree names the class with confidence `purity * score`.

pub mod confusion;
pub mod dtree;
pub mod iforest;
pub mod kmeans;
pub mod signatures;

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use confusion::{score_detection, ConfusionCounts, FaultMatch, ScoringConfig};
pub use dtree::{DecisionTree, TreeParams};
pub use iforest::IsolationForest;
pub use kmeans::KMeans;
pub use signatures::{rule_signatures, SignatureConfig, PRECEDENCE};

use crate::classes::DiagnosisClass;
use crate::engine::{RngStream, SimTime};
use crate::monitor::{FeatureVector, Monitor, FEATURE_NAMES};
use crate::webapp::TierId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyzeError {
    #[error("need at least {need} rows, have {have}")]
    TooLittleData { need: usize, have: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("label {0} outside the class range")]
    UnknownLabel(usize),
    #[error("{0}")]
    InvalidParam(&'static str),
}

/// Label index used for healthy windows.
pub const NORMAL_LABEL: usize = DiagnosisClass::ALL.len();
pub const N_LABELS: usize = NORMAL_LABEL + 1;

pub fn label_index(label: Option<DiagnosisClass>) -> usize {
    label.map_or(NORMAL_LABEL, DiagnosisClass::index)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisSource {
    Signature,
    Classifier,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub tier: TierId,
    pub class: DiagnosisClass,
    pub confidence: f64,
    pub t_detected: SimTime,
    pub source: DiagnosisSource,
    pub anomaly_score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzerConfig {
    pub theta: f64,
    pub n_trees: usize,
    pub subsample: usize,
    pub tree: TreeParams,
    pub kmeans_k: usize,
    /// Classifier verdicts below this confidence are dropped.
    pub min_confidence: f64,
    /// Ticks without supporting evidence before an open diagnosis is closed.
    pub resolve_after_ticks: u32,
    pub signatures: SignatureConfig,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            theta: 0.85,
            n_trees: 100,
            subsample: 256,
            tree: TreeParams::default(),
            kmeans_k: N_LABELS,
            min_confidence: 0.5,
            resolve_after_ticks: 5,
            signatures: SignatureConfig::default(),
        }
    }
}

/// A labeled feature window for training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub features: FeatureVector,
    pub label: Option<DiagnosisClass>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Models {
    pub iforest: IsolationForest,
    pub dtree: DecisionTree,
    pub kmeans: KMeans,
    pub summary: ModelSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub training_windows: usize,
    pub healthy_windows: usize,
    pub label_counts: Vec<(String, usize)>,
    pub iforest_trees: usize,
    pub iforest_subsample: usize,
    pub iforest_max_depth: usize,
    pub dtree_depth: usize,
    pub dtree_leaves: usize,
    pub dtree_training_accuracy: f64,
    pub feature_importances: Vec<(String, f64)>,
    pub kmeans_k: usize,
    pub kmeans_purity: f64,
}

fn label_name(i: usize) -> &'static str {
    DiagnosisClass::from_index(i).map_or("normal", DiagnosisClass::name)
}

impl Models {
    /// Isolation forest on healthy windows, tree on all windows, k-means as a purity check.
    pub fn train(
        data: &[LabeledWindow],
        cfg: &AnalyzerConfig,
        rng: &mut RngStream,
    ) -> Result<Models, AnalyzeError> {
        let healthy: Vec<&[f64]> = data
            .iter()
            .filter(|w| w.label.is_none())
            .map(|w| w.features.as_slice())
            .collect();
        let iforest = IsolationForest::fit(&healthy, cfg.n_trees, cfg.subsample, rng)?;
        let labeled: Vec<(&[f64], usize)> = data
            .iter()
            .map(|w| (w.features.as_slice(), label_index(w.label)))
            .collect();
        let dtree = DecisionTree::fit(&labeled, N_LABELS, cfg.tree)?;
        let all: Vec<&[f64]> = data.iter().map(|w| w.features.as_slice()).collect();
        let kmeans = KMeans::fit(&all, cfg.kmeans_k.min(all.len()).max(1), rng)?;

        let correct = labeled
            .iter()
            .filter(|(x, y)| dtree.classify(x).map(|(c, _)| c) == Ok(*y))
            .count();
        let clusters: Vec<usize> = all.iter().map(|x| kmeans.assign(x)).collect();
        let labels: Vec<usize> = labeled.iter().map(|(_, y)| *y).collect();
        let mut label_counts = Vec::new();
        for i in 0..N_LABELS {
            label_counts.push((
                label_name(i).to_string(),
                labels.iter().filter(|&&y| y == i).count(),
            ));
        }
        let summary = ModelSummary {
            training_windows: data.len(),
            healthy_windows: healthy.len(),
            label_counts,
            iforest_trees: iforest.n_trees,
            iforest_subsample: iforest.subsample,
            iforest_max_depth: iforest.max_depth(),
            dtree_depth: dtree.depth(),
            dtree_leaves: dtree.leaves().count(),
            dtree_training_accuracy: correct as f64 / data.len() as f64,
            feature_importances: FEATURE_NAMES
                .iter()
                .zip(&dtree.importances)
                .map(|(n, v)| (n.to_string(), *v))
                .collect(),
            kmeans_k: kmeans.centroids.len(),
            kmeans_purity: kmeans::purity(&clusters, &labels),
        };
        Ok(Models {
            iforest,
            dtree,
            kmeans,
            summary,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct OpenDiagnosis {
    tier: TierId,
    class: DiagnosisClass,
    last_evidence: SimTime,
}

#[derive(Clone, Debug)]
pub struct Analyzer {
    pub cfg: AnalyzerConfig,
    models: Option<Arc<Models>>,
    use_ml: bool,
    open: Vec<OpenDiagnosis>,
}

impl Analyzer {
    /// `models = None` runs signatures only.
    pub fn new(cfg: AnalyzerConfig, models: Option<Arc<Models>>) -> Self {
        let use_ml = models.is_some();
        Analyzer {
            cfg,
            models,
            use_ml,
            open: Vec::new(),
        }
    }

    pub fn uses_ml(&self) -> bool {
        self.use_ml
    }

    pub fn is_open(&self, tier: TierId, class: DiagnosisClass) -> bool {
        self.open.iter().any(|o| o.tier == tier && o.class == class)
    }

    pub fn open_on(&self, tier: TierId) -> bool {
        self.open.iter().any(|o| o.tier == tier)
    }

    /// Anomaly score and classifier verdict for one tier, if the models apply.
    pub fn ml_view(&self, m: &Monitor, tier: TierId, t: SimTime) -> Option<(f64, usize, f64)> {
        let models = self.models.as_ref()?;
        let x = m.feature_vector(tier, t).ok()?;
        let score = models.iforest.score(&x).ok()?;
        let (label, purity) = models.dtree.classify(&x).ok()?;
        Some((score, label, purity))
    }

    /// One analysis pass. Tiers flagged in `suppressed` are evaluated for
    /// evidence bookkeeping but cannot raise new diagnoses.
    pub fn diagnose(&mut self, m: &Monitor, t: SimTime, suppressed: [bool; 3]) -> Vec<Diagnosis> {
        let mut out = Vec::new();
        for tier in TierId::ALL {
            let sigs = rule_signatures(m, tier, t, &self.cfg.signatures);
            let ml = if self.use_ml {
                self.ml_view(m, tier, t)
            } else {
                None
            };
            let score = ml.map_or(0.0, |(s, _, _)| s);
            let classifier = ml.and_then(|(score, label, purity)| {
                let class = DiagnosisClass::from_index(label)?;
                let conf = purity * score;
                (score >= self.cfg.theta && conf >= self.cfg.min_confidence)
                    .then_some((class, conf))
            });
            for o in self.open.iter_mut().filter(|o| o.tier == tier) {
                if sigs.contains(&o.class) || classifier.is_some_and(|(c, _)| c == o.class) {
                    o.last_evidence = t;
                }
            }
            if suppressed[tier.index()] {
                continue;
            }
            let candidate = match sigs.first() {
                Some(&class) => Some((class, 1.0, DiagnosisSource::Signature)),
                None => classifier.map(|(c, conf)| (c, conf, DiagnosisSource::Classifier)),
            };
            if let Some((class, confidence, source)) = candidate {
                if !self.is_open(tier, class) {
                    self.open.push(OpenDiagnosis {
                        tier,
                        class,
                        last_evidence: t,
                    });
                    out.push(Diagnosis {
                        tier,
                        class,
                        confidence,
                        t_detected: t,
                        source,
                        anomaly_score: score,
                    });
                }
            }
        }
        let horizon = SimTime::from_secs(u64::from(self.cfg.resolve_after_ticks));
        self.open
            .retain(|o| suppressed[o.tier.index()] || t.saturating_sub(o.last_evidence) < horizon);
        out
    }
}
