//! Small-sample statistics: t distribution, Wilcoxon signed-rank, Holm.

use alloc::vec;
use alloc::vec::Vec;

use libm::{erfc, exp, fabs, lgamma, log, sqrt};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64)
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if fabs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if fabs(del - 1.0) < 1e-15 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log(1.0 - x);
    let front = exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Student t CDF with `df` degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let x = df / (df + t * t);
    let tail = 0.5 * inc_beta(df / 2.0, 0.5, x);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided p-value of a t statistic.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    inc_beta(df / 2.0, 0.5, df / (df + t * t)).min(1.0)
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / core::f64::consts::SQRT_2)
}

/// Average ranks (1-based) of `xs`, ties sharing the mean rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wilcoxon {
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Non-zero differences used.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
}

/// Largest `n` for which the exact null distribution is used.
pub const WILCOXON_EXACT_MAX: usize = 20;

/// Wilcoxon signed-rank test on paired differences, two-sided. Zero
/// differences are dropped; tied magnitudes get average ranks.
pub fn wilcoxon(diffs: &[f64]) -> Wilcoxon {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return Wilcoxon {
            w_plus: 0.0,
            n,
            p_value: 1.0,
            exact: true,
        };
    }
    let mags: Vec<f64> = nz.iter().map(|d| fabs(*d)).collect();
    let r = ranks(&mags);
    let w_plus: f64 = nz
        .iter()
        .zip(&r)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    if n <= WILCOXON_EXACT_MAX {
        // doubled ranks are integers even with ties
        let dr: Vec<usize> = r.iter().map(|x| libm::round(x * 2.0) as usize).collect();
        let total: usize = dr.iter().sum();
        let mut counts = vec![0f64; total + 1];
        counts[0] = 1.0;
        for &k in &dr {
            for s in (k..=total).rev() {
                counts[s] += counts[s - k];
            }
        }
        let all = libm::pow(2.0, n as f64);
        let w2 = libm::round(w_plus * 2.0) as usize;
        let lower: f64 = counts[..=w2].iter().sum::<f64>() / all;
        let upper: f64 = counts[w2..].iter().sum::<f64>() / all;
        let p = f64::min(2.0 * lower.min(upper), 1.0);
        return Wilcoxon {
            w_plus,
            n,
            p_value: p,
            exact: true,
        };
    }
    let nf = n as f64;
    let mu = nf * (nf + 1.0) / 4.0;
    let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
    // tie correction
    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        var -= (t * t * t - t) / 48.0;
        i = j + 1;
    }
    let dev = fabs(w_plus - mu) - 0.5;
    let z = if var > 0.0 {
        dev.max(0.0) / sqrt(var)
    } else {
        0.0
    };
    Wilcoxon {
        w_plus,
        n,
        p_value: (2.0 * (1.0 - normal_cdf(z))).min(1.0),
        exact: false,
    }
}

/// Holm step-down adjusted p-values, in input order.
pub fn holm_bonferroni(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (rank, &i) in idx.iter().enumerate() {
        let adj = ((m - rank) as f64 * p[i]).min(1.0);
        running = running.max(adj);
        out[i] = running;
    }
    out
}
