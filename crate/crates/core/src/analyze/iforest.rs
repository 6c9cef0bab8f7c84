//! Isolation forest.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::AnalyzeError;
use crate::engine::RngStream;

const EULER_GAMMA: f64 = 0.577_215_664_9;

/// Average unsuccessful-search path length in a BST of `n` points.
/// `c(1) = 0` and `c(2) = 1` by convention.
pub fn c_norm(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * (libm::log(n - 1.0) + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum INode {
    Split {
        feature: usize,
        value: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        size: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ITree {
    pub nodes: Vec<INode>,
}

impl ITree {
    pub fn depth(&self) -> usize {
        fn go(nodes: &[INode], i: usize) -> usize {
            match nodes[i] {
                INode::Leaf { .. } => 0,
                INode::Split { left, right, .. } => {
                    1 + go(nodes, left as usize).max(go(nodes, right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }

    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[i] {
                INode::Leaf { size } => return depth + c_norm(size as usize),
                INode::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    i = if x[feature] < value {
                        left as usize
                    } else {
                        right as usize
                    };
                    depth += 1.0;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub n_trees: usize,
    pub subsample: usize,
    pub dim: usize,
    pub c_norm: f64,
    pub trees: Vec<ITree>,
}

impl IsolationForest {
    pub fn fit<R: AsRef<[f64]>>(
        data: &[R],
        n_trees: usize,
        subsample: usize,
        rng: &mut RngStream,
    ) -> Result<Self, AnalyzeError> {
        if subsample < 2 || data.len() < subsample {
            return Err(AnalyzeError::TooLittleData {
                need: subsample.max(2),
                have: data.len(),
            });
        }
        if n_trees == 0 {
            return Err(AnalyzeError::InvalidParam("n_trees must be positive"));
        }
        let dim = data[0].as_ref().len();
        if data.iter().any(|r| r.as_ref().len() != dim) {
            return Err(AnalyzeError::DimensionMismatch {
                expected: dim,
                got: 0,
            });
        }
        let max_depth = (usize::BITS - (subsample - 1).leading_zeros()) as usize;
        let mut trees = Vec::with_capacity(n_trees);
        let mut idx: Vec<usize> = (0..data.len()).collect();
        for _ in 0..n_trees {
            // partial Fisher-Yates: first `subsample` slots become the sample
            for i in 0..subsample {
                let j = i + rng.below(idx.len() - i);
                idx.swap(i, j);
            }
            let mut sample: Vec<usize> = idx[..subsample].to_vec();
            let mut nodes = Vec::new();
            build(data, &mut sample, 0, max_depth, dim, rng, &mut nodes);
            trees.push(ITree { nodes });
        }
        Ok(IsolationForest {
            n_trees,
            subsample,
            dim,
            c_norm: c_norm(subsample),
            trees,
        })
    }

    pub fn expected_path(&self, x: &[f64]) -> Result<f64, AnalyzeError> {
        if x.len() != self.dim {
            return Err(AnalyzeError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// `2^(-E[h(x)] / c(psi))`.
    pub fn score(&self, x: &[f64]) -> Result<f64, AnalyzeError> {
        Ok(score_from_path(self.expected_path(x)?, self.c_norm))
    }

    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(ITree::depth).max().unwrap_or(0)
    }
}

pub fn score_from_path(expected_path: f64, c: f64) -> f64 {
    libm::pow(2.0, -expected_path / c)
}

fn build<R: AsRef<[f64]>>(
    data: &[R],
    rows: &mut [usize],
    depth: usize,
    max_depth: usize,
    dim: usize,
    rng: &mut RngStream,
    nodes: &mut Vec<INode>,
) -> u32 {
    let me = nodes.len() as u32;
    nodes.push(INode::Leaf {
        size: rows.len() as u32,
    });
    if rows.len() <= 1 || depth >= max_depth {
        return me;
    }
    let mut ranges: Vec<(usize, f64, f64)> = Vec::new();
    for f in 0..dim {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in rows.iter() {
            let v = data[r].as_ref()[f];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi > lo {
            ranges.push((f, lo, hi));
        }
    }
    if ranges.is_empty() {
        return me;
    }
    let (feature, lo, hi) = ranges[rng.below(ranges.len())];
    let mut value = rng.uniform_in(lo, hi);
    if value <= lo {
        value = lo + (hi - lo) * 0.5;
    }
    let mut split = 0;
    for i in 0..rows.len() {
        if data[rows[i]].as_ref()[feature] < value {
            rows.swap(i, split);
            split += 1;
        }
    }
    let (l, r) = rows.split_at_mut(split);
    let left = build(data, l, depth + 1, max_depth, dim, rng, nodes);
    let right = build(data, r, depth + 1, max_depth, dim, rng, nodes);
    nodes[me as usize] = INode::Split {
        feature,
        value,
        left,
        right,
    };
    me
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn c_norm_small_cases() {
        assert_eq!(c_norm(1), 0.0);
        assert_eq!(c_norm(2), 1.0);
        let h = libm::log(255.0) + EULER_GAMMA;
        assert!((c_norm(256) - (2.0 * h - 2.0 * 255.0 / 256.0)).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_half() {
        assert!((score_from_path(c_norm(256), c_norm(256)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_point_tree_is_a_leaf() {
        let data = vec![vec![1.0, 2.0]];
        let mut nodes = Vec::new();
        let mut rows = vec![0];
        build(
            &data,
            &mut rows,
            0,
            8,
            2,
            &mut RngStream::from_seed(1),
            &mut nodes,
        );
        assert_eq!(ITree { nodes }.depth(), 0);
    }

    #[test]
    fn identical_points_score_equally() {
        let data = vec![vec![3.0, 3.0, 3.0]; 1000];
        let m = IsolationForest::fit(&data, 50, 256, &mut RngStream::from_seed(2)).unwrap();
        let s0 = m.score(&[3.0, 3.0, 3.0]).unwrap();
        assert!((s0 - 0.5).abs() < 1e-12);
        assert_eq!(m.score(&[9.0, -1.0, 0.0]).unwrap(), s0);
    }

    #[test]
    fn depth_cap_and_errors() {
        let mut rng = RngStream::from_seed(3);
        let data: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![rng.uniform(), rng.uniform()])
            .collect();
        let m = IsolationForest::fit(&data, 20, 64, &mut rng).unwrap();
        assert!(m.max_depth() <= 6);
        assert!(matches!(
            m.score(&[1.0]),
            Err(AnalyzeError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            IsolationForest::fit(&data[..10], 20, 64, &mut rng),
            Err(AnalyzeError::TooLittleData { .. })
        ));
    }
}
