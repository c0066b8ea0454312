//! Diagonal-Gaussian sufficient statistics and the entropy-based category utility.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

/// Running count, mean and sum of squared deviations per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStats {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl GaussianStats {
    pub fn empty(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn singleton(x: &[f64]) -> Self {
        Self {
            count: 1,
            mean: x.to_vec(),
            m2: vec![0.0; x.len()],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Welford update with one observation.
    pub fn update(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim());
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    /// Pooled statistics of two disjoint sets.
    pub fn combined(a: &Self, b: &Self) -> Self {
        if a.count == 0 {
            return b.clone();
        }
        if b.count == 0 {
            return a.clone();
        }
        let (na, nb) = (a.count as f64, b.count as f64);
        let n = na + nb;
        let mut mean = Vec::with_capacity(a.dim());
        let mut m2 = Vec::with_capacity(a.dim());
        for d in 0..a.dim() {
            let delta = b.mean[d] - a.mean[d];
            mean.push(a.mean[d] + delta * nb / n);
            m2.push(a.m2[d] + b.m2[d] + delta * delta * na * nb / n);
        }
        Self {
            count: a.count + b.count,
            mean,
            m2,
        }
    }

    /// Per-dimension variance `m2 / count + floor`.
    pub fn variance(&self, floor: f64) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.m2.iter().map(|s| s / n + floor).collect()
    }

    pub fn entropy(&self, floor: f64) -> f64 {
        let n = self.count.max(1) as f64;
        entropy_from_variances(self.m2.iter().map(|s| s / n + floor), self.dim())
    }

    /// Entropy the statistics would have after `update(x)`, without mutating.
    pub fn entropy_with(&self, x: &[f64], floor: f64) -> f64 {
        let n = (self.count + 1) as f64;
        let vars = self.mean.iter().zip(&self.m2).zip(x).map(|((&m, &s), &v)| {
            let delta = v - m;
            let mean = m + delta / n;
            (s + delta * (v - mean)) / n + floor
        });
        entropy_from_variances(vars, self.dim())
    }
}

/// Differential entropy of a diagonal Gaussian, `sum_d 0.5 * ln(2 pi e var_d)`.
pub fn gaussian_entropy(variances: &[f64]) -> f64 {
    entropy_from_variances(variances.iter().copied(), variances.len())
}

fn entropy_from_variances(vars: impl Iterator<Item = f64>, dim: usize) -> f64 {
    0.5 * (dim as f64 * (2.0 * PI * E).ln() + sum_ln(vars))
}

/// `sum ln(v)` for positive `v`, taking one logarithm per block of eight factors.
pub(crate) fn sum_ln(values: impl Iterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    let mut block = [1.0f64; 8];
    let mut len = 0;
    let flush = |block: &[f64]| {
        let prod: f64 = block.iter().product();
        if prod.is_normal() {
            prod.ln()
        } else {
            block.iter().map(|v| v.ln()).sum()
        }
    };
    for v in values {
        block[len] = v;
        len += 1;
        if len == 8 {
            total += flush(&block);
            len = 0;
        }
    }
    if len > 0 {
        total += flush(&block[..len]);
    }
    total
}

/// `P(child | parent) * (U(parent) - U(child))`.
pub fn category_utility(parent: &GaussianStats, child: &GaussianStats, floor: f64) -> f64 {
    let p = child.count as f64 / parent.count as f64;
    p * (parent.entropy(floor) - child.entropy(floor))
}

/// Mean category utility of a partition of `parent` into `children`.
pub fn partition_score(parent: &GaussianStats, children: &[&GaussianStats], floor: f64) -> f64 {
    if children.is_empty() {
        return 0.0;
    }
    let up = parent.entropy(floor);
    let total: f64 = children
        .iter()
        .map(|c| c.count as f64 / parent.count as f64 * (up - c.entropy(floor)))
        .sum();
    total / children.len() as f64
}
