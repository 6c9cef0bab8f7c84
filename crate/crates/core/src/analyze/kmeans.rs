//! k-means with k-means++ seeding. Diagnostic only.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::AnalyzeError;
use crate::engine::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after each Lloyd iteration.
    pub inertia: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn assign(centroids: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

impl KMeans {
    pub fn fit<R: AsRef<[f64]>>(
        data: &[R],
        k: usize,
        rng: &mut RngStream,
    ) -> Result<Self, AnalyzeError> {
        const MAX_ITER: usize = 100;
        if k < 1 {
            return Err(AnalyzeError::InvalidParam("k must be at least 1"));
        }
        if data.len() < k {
            return Err(AnalyzeError::TooLittleData {
                need: k,
                have: data.len(),
            });
        }
        let dim = data[0].as_ref().len();
        let mut centroids: Vec<Vec<f64>> = vec![data[rng.below(data.len())].as_ref().to_vec()];
        let mut d2: Vec<f64> = data
            .iter()
            .map(|x| dist2(x.as_ref(), &centroids[0]))
            .collect();
        while centroids.len() < k {
            let total: f64 = d2.iter().sum();
            let pick = if total > 0.0 {
                let mut u = rng.uniform() * total;
                let mut pick = data.len() - 1;
                for (i, d) in d2.iter().enumerate() {
                    if u < *d {
                        pick = i;
                        break;
                    }
                    u -= d;
                }
                pick
            } else {
                rng.below(data.len())
            };
            let c = data[pick].as_ref().to_vec();
            for (i, x) in data.iter().enumerate() {
                d2[i] = d2[i].min(dist2(x.as_ref(), &c));
            }
            centroids.push(c);
        }
        let mut inertia = Vec::new();
        let mut labels = vec![0usize; data.len()];
        for _ in 0..MAX_ITER {
            let mut cur = 0.0;
            for (i, x) in data.iter().enumerate() {
                labels[i] = assign(&centroids, x.as_ref());
                cur += dist2(x.as_ref(), &centroids[labels[i]]);
            }
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (x, &l) in data.iter().zip(&labels) {
                counts[l] += 1;
                for (s, v) in sums[l].iter_mut().zip(x.as_ref()) {
                    *s += v;
                }
            }
            for (c, (s, n)) in centroids.iter_mut().zip(sums.into_iter().zip(counts)) {
                if n > 0 {
                    *c = s.into_iter().map(|v| v / n as f64).collect();
                }
            }
            let after: f64 = data
                .iter()
                .zip(&labels)
                .map(|(x, &l)| dist2(x.as_ref(), &centroids[l]))
                .sum();
            inertia.push(after);
            if cur - after < 1e-9 {
                break;
            }
        }
        Ok(KMeans { centroids, inertia })
    }

    pub fn assign(&self, x: &[f64]) -> usize {
        assign(&self.centroids, x)
    }
}

/// Fraction of points whose label equals their cluster's majority label.
pub fn purity(clusters: &[usize], labels: &[usize]) -> f64 {
    if clusters.is_empty() {
        return 0.0;
    }
    let mut tally: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&c, &l) in clusters.iter().zip(labels) {
        *tally.entry((c, l)).or_default() += 1;
    }
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for ((c, _), n) in tally {
        let b = best.entry(c).or_default();
        *b = (*b).max(n);
    }
    best.values().sum::<usize>() as f64 / clusters.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k1_is_the_mean() {
        let data = vec![vec![0.0, 2.0], vec![2.0, 4.0], vec![4.0, 0.0]];
        let m = KMeans::fit(&data, 1, &mut RngStream::from_seed(1)).unwrap();
        assert!((m.centroids[0][0] - 2.0).abs() < 1e-12);
        assert!((m.centroids[0][1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn inertia_never_increases() {
        let mut rng = RngStream::from_seed(9);
        let data: Vec<Vec<f64>> = (0..400)
            .map(|_| vec![rng.uniform() * 10.0, rng.uniform()])
            .collect();
        let m = KMeans::fit(&data, 5, &mut rng).unwrap();
        for w in m.inertia.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn rejects_k0() {
        let data = vec![vec![1.0]];
        assert!(KMeans::fit(&data, 0, &mut RngStream::from_seed(1)).is_err());
        assert!(KMeans::fit(&data, 2, &mut RngStream::from_seed(1)).is_err());
    }
}
