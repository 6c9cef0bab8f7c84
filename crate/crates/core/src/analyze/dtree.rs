//! CART classification tree with Gini impurity.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::AnalyzeError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DNode {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        hist: Vec<u32>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_leaf: 20,
        }
    }
}

impl TreeParams {
    /// Grow until every leaf is pure.
    pub const UNBOUNDED: TreeParams = TreeParams {
        max_depth: usize::MAX,
        min_leaf: 1,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_classes: usize,
    pub dim: usize,
    pub params: TreeParams,
    pub nodes: Vec<DNode>,
    /// Total weighted impurity decrease per feature, normalized to sum 1.
    pub importances: Vec<f64>,
}

pub fn gini(hist: &[u32]) -> f64 {
    let n: u32 = hist.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = f64::from(n);
    1.0 - hist
        .iter()
        .map(|&c| (f64::from(c) / n) * (f64::from(c) / n))
        .sum::<f64>()
}

struct Builder<'a, R> {
    data: &'a [(R, usize)],
    n_classes: usize,
    dim: usize,
    params: TreeParams,
    nodes: Vec<DNode>,
    importances: Vec<f64>,
    total: f64,
}

impl<R: AsRef<[f64]>> Builder<'_, R> {
    fn hist(&self, rows: &[usize]) -> Vec<u32> {
        let mut h = vec![0u32; self.n_classes];
        for &r in rows {
            h[self.data[r].1] += 1;
        }
        h
    }

    fn x(&self, r: usize, f: usize) -> f64 {
        self.data[r].0.as_ref()[f]
    }

    /// Best split as (weighted child impurity, feature, threshold).
    fn best_split(&self, rows: &mut [usize]) -> Option<(f64, usize, f64)> {
        let n = rows.len();
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        let total = self.hist(rows);
        for f in 0..self.dim {
            rows.sort_by(|&a, &b| self.x(a, f).total_cmp(&self.x(b, f)).then(a.cmp(&b)));
            let mut left = vec![0u32; self.n_classes];
            for i in 0..n - 1 {
                left[self.data[rows[i]].1] += 1;
                let (a, b) = (self.x(rows[i], f), self.x(rows[i + 1], f));
                if a == b || i + 1 < min_leaf || n - i - 1 < min_leaf {
                    continue;
                }
                let right: Vec<u32> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let nl = (i + 1) as f64;
                let nr = (n - i - 1) as f64;
                let w = (nl * gini(&left) + nr * gini(&right)) / n as f64;
                let mut threshold = a + (b - a) * 0.5;
                if threshold <= a {
                    threshold = b;
                }
                if best.is_none_or(|(bw, _, _)| w < bw - 1e-15) {
                    best = Some((w, f, threshold));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> u32 {
        let hist = self.hist(rows);
        let me = self.nodes.len() as u32;
        let g = gini(&hist);
        self.nodes.push(DNode::Leaf { hist });
        if g == 0.0
            || depth >= self.params.max_depth
            || rows.len() < 2 * self.params.min_leaf.max(1)
        {
            return me;
        }
        let Some((w, feature, threshold)) = self.best_split(rows) else {
            return me;
        };
        self.importances[feature] += (g - w) * rows.len() as f64 / self.total;
        let mut split = 0;
        for i in 0..rows.len() {
            if self.x(rows[i], feature) < threshold {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = rows.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[me as usize] = DNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

impl DecisionTree {
    pub fn fit<R: AsRef<[f64]>>(
        data: &[(R, usize)],
        n_classes: usize,
        params: TreeParams,
    ) -> Result<Self, AnalyzeError> {
        if data.is_empty() {
            return Err(AnalyzeError::TooLittleData { need: 1, have: 0 });
        }
        let dim = data[0].0.as_ref().len();
        if let Some((r, _)) = data.iter().find(|(r, _)| r.as_ref().len() != dim) {
            return Err(AnalyzeError::DimensionMismatch {
                expected: dim,
                got: r.as_ref().len(),
            });
        }
        if let Some(&(_, c)) = data.iter().find(|(_, c)| *c >= n_classes) {
            return Err(AnalyzeError::UnknownLabel(c));
        }
        let first = data[0].1;
        if data.iter().all(|(_, c)| *c == first) {
            return Err(AnalyzeError::SingleClass);
        }
        let mut b = Builder {
            data,
            n_classes,
            dim,
            params,
            nodes: Vec::new(),
            importances: vec![0.0; dim],
            total: data.len() as f64,
        };
        let mut rows: Vec<usize> = (0..data.len()).collect();
        b.grow(&mut rows, 0);
        let s: f64 = b.importances.iter().sum();
        if s > 0.0 {
            for v in &mut b.importances {
                *v /= s;
            }
        }
        Ok(DecisionTree {
            n_classes,
            dim,
            params,
            nodes: b.nodes,
            importances: b.importances,
        })
    }

    fn leaf(&self, x: &[f64]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                DNode::Leaf { hist } => return hist,
                DNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Majority class at the routed leaf and its fraction there.
    pub fn classify(&self, x: &[f64]) -> Result<(usize, f64), AnalyzeError> {
        if x.len() != self.dim {
            return Err(AnalyzeError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let hist = self.leaf(x);
        let n: u32 = hist.iter().sum();
        let (class, &count) = hist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty histogram");
        Ok((
            class,
            if n == 0 {
                0.0
            } else {
                f64::from(count) / f64::from(n)
            },
        ))
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[DNode], i: usize) -> usize {
            match &nodes[i] {
                DNode::Leaf { .. } => 0,
                DNode::Split { left, right, .. } => {
                    1 + go(nodes, *left as usize).max(go(nodes, *right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[u32]> {
        self.nodes.iter().filter_map(|n| match n {
            DNode::Leaf { hist } => Some(hist.as_slice()),
            DNode::Split { .. } => None,
        })
    }
}
