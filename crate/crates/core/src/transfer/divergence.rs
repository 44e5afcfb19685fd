//! State-visitation histograms, Jensen-Shannon divergence and the adaptive
//! transfer weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sbpg::DiscretizedIndex;

const NORMALIZATION_TOL: f64 = 1e-9;

/// Per-dimension visit counters over `B` bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitHistogram {
    bins: usize,
    counts: Vec<Vec<u64>>,
    total: u64,
}

/// Laplace-smoothed visit probabilities, one vector per state dimension.
pub type VisitDistribution = Vec<Vec<f64>>;

impl VisitHistogram {
    pub fn new(dim: usize, bins: usize) -> Self {
        Self {
            bins,
            counts: vec![vec![0; bins]; dim],
            total: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn record(&mut self, index: &DiscretizedIndex) -> Result<()> {
        if index.bins().len() != self.counts.len() {
            return Err(Error::DimensionMismatch {
                expected: self.counts.len(),
                actual: index.bins().len(),
            });
        }
        if let Some(&b) = index.bins().iter().find(|&&b| b >= self.bins) {
            return Err(Error::config(format!("bin {b} outside histogram of {}", self.bins)));
        }
        for (counter, &b) in self.counts.iter_mut().zip(index.bins()) {
            counter[b] += 1;
        }
        self.total += 1;
        Ok(())
    }

    /// `(count + 1) / (total + B)` per bin.
    pub fn dimension(&self, m: usize) -> Vec<f64> {
        let denom = (self.total + self.bins as u64) as f64;
        self.counts[m]
            .iter()
            .map(|&c| (c + 1) as f64 / denom)
            .collect()
    }

    pub fn distribution(&self) -> VisitDistribution {
        (0..self.counts.len()).map(|m| self.dimension(m)).collect()
    }
}

fn validate(p: &[f64], label: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution(format!("{label} is empty")));
    }
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidDistribution(format!("{label} has entry {v}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidDistribution(format!("{label} sums to {sum}")));
    }
    Ok(())
}

/// Jensen-Shannon divergence in bits, so the result lies in `[0, 1]`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidDistribution(format!(
            "length mismatch {} vs {}",
            p.len(),
            q.len()
        )));
    }
    validate(p, "p")?;
    validate(q, "q")?;
    // Each bin term is built from `p + q` and a sum of two products, both
    // commutative in IEEE arithmetic, so jsd(p, q) == jsd(q, p) bit for bit.
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        total += 0.5 * kl_term(a, m) + 0.5 * kl_term(b, m);
    }
    Ok(total.clamp(0.0, 1.0))
}

fn kl_term(p: f64, m: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / m).log2()
    }
}

/// Adaptive transfer weight with its underlying summed divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferWeight {
    pub alpha: f64,
    pub divergence: f64,
}

/// Gate on exploration, then weight by how similar the visited states are.
pub fn alpha_from_divergence(epsilon: f64, beta_tf: f64, divergence: f64) -> f64 {
    if epsilon >= beta_tf || divergence >= 1.0 {
        0.0
    } else {
        1.0 - divergence
    }
}

pub fn alpha_tf(
    epsilon: f64,
    beta_tf: f64,
    visits_i: &VisitDistribution,
    visits_j: &VisitDistribution,
) -> Result<TransferWeight> {
    if visits_i.len() != visits_j.len() {
        return Err(Error::DimensionMismatch {
            expected: visits_i.len(),
            actual: visits_j.len(),
        });
    }
    let mut divergence = 0.0;
    for (p, q) in visits_i.iter().zip(visits_j) {
        divergence += jsd(p, q)?;
    }
    Ok(TransferWeight {
        alpha: alpha_from_divergence(epsilon, beta_tf, divergence),
        divergence,
    })
}
