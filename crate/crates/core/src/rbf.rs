//! Fixed-center radial basis latents of a player's state-action and
//! state-utility maps, used to infer which players resemble each other.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sbpg::PerformanceMap;

/// Ridge term in the least-squares fit.
pub const RIDGE_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfConfig {
    pub centers: Vec<Vec<f64>>,
    pub sigma: f64,
    /// Adaptation steps between refits.
    pub update_interval: u64,
}

impl RbfConfig {
    /// `side^dim` centers on a regular grid with spacing `1 / side`, offset by half a cell.
    pub fn grid(dim: usize, side: usize, sigma: Option<f64>, update_interval: u64) -> Result<Self> {
        if side == 0 {
            return Err(Error::config("rbf grid side must be >= 1"));
        }
        let total = side.pow(dim as u32);
        let centers = (0..total)
            .map(|flat| {
                let mut c = vec![0.0; dim];
                let mut rest = flat;
                for slot in c.iter_mut().rev() {
                    *slot = ((rest % side) as f64 + 0.5) / side as f64;
                    rest /= side;
                }
                c
            })
            .collect();
        let config = Self {
            centers,
            sigma: sigma.unwrap_or(0.5 / side as f64),
            update_interval: update_interval.max(1),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(Error::config("rbf needs at least one center"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::config(format!("rbf sigma {} must be > 0", self.sigma)));
        }
        if self.centers.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::config("rbf centers must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Normalized Gaussian activations; they sum to one.
    pub fn basis(&self, state: &[f64]) -> Vec<f64> {
        let scale = 1.0 / (2.0 * self.sigma * self.sigma);
        let exponents: Vec<f64> = self
            .centers
            .iter()
            .map(|mu| {
                let d2: f64 = mu.iter().zip(state).map(|(m, s)| (s - m) * (s - m)).sum();
                -d2 * scale
            })
            .collect();
        let peak = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = exponents.iter().map(|e| (e - peak).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|r| r / total).collect()
    }
}

/// Latent weights for the action head and the utility head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfLatent {
    pub theta_action: Vec<f64>,
    pub theta_utility: Vec<f64>,
    pub fitted_at_step: u64,
}

impl RbfLatent {
    pub fn len(&self) -> usize {
        self.theta_action.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_action.is_empty()
    }
}

/// One training point: a state with its best action and utility.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: Vec<f64>,
    pub action: f64,
    pub utility: f64,
}

pub fn samples_from_map(map: &PerformanceMap) -> Vec<Sample> {
    map.support_points()
        .map(|(state, action, utility)| Sample {
            state,
            action,
            utility,
        })
        .collect()
}

/// Returns `(action_estimate, utility_estimate)`.
pub fn rbf_eval(latent: &RbfLatent, config: &RbfConfig, state: &[f64]) -> (f64, f64) {
    let phi = config.basis(state);
    (dot(&latent.theta_action, &phi), dot(&latent.theta_utility, &phi))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ridge-regularized least squares on the normal equations, solved by Cholesky.
pub fn fit_latent(samples: &[Sample], config: &RbfConfig, step: u64) -> Result<RbfLatent> {
    if samples.is_empty() {
        return Err(Error::EmptyFit);
    }
    let j = config.len();
    let mut gram = vec![0.0; j * j];
    let mut rhs_action = vec![0.0; j];
    let mut rhs_utility = vec![0.0; j];
    for sample in samples {
        let phi = config.basis(&sample.state);
        for r in 0..j {
            rhs_action[r] += phi[r] * sample.action;
            rhs_utility[r] += phi[r] * sample.utility;
            for c in 0..=r {
                gram[r * j + c] += phi[r] * phi[c];
            }
        }
    }
    for r in 0..j {
        gram[r * j + r] += RIDGE_LAMBDA;
        for c in 0..r {
            gram[c * j + r] = gram[r * j + c];
        }
    }
    let factor = cholesky(&gram, j)?;
    Ok(RbfLatent {
        theta_action: cholesky_solve(&factor, j, &rhs_action),
        theta_utility: cholesky_solve(&factor, j, &rhs_utility),
        fitted_at_step: step,
    })
}

fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..=r {
            let mut sum = a[r * n + c];
            for k in 0..c {
                sum -= l[r * n + k] * l[c * n + k];
            }
            if r == c {
                if !(sum > 0.0) {
                    return Err(Error::config("rbf normal equations are not positive definite"));
                }
                l[r * n + r] = sum.sqrt();
            } else {
                l[r * n + c] = sum / l[c * n + c];
            }
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for r in 0..n {
        let s: f64 = (0..r).map(|k| l[r * n + k] * y[k]).sum();
        y[r] = (b[r] - s) / l[r * n + r];
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| l[k * n + r] * x[k]).sum();
        x[r] = (y[r] - s) / l[r * n + r];
    }
    x
}

/// Ridge objective `sum_n (theta . phi_n - y_n)^2 + lambda |theta|^2` for one head.
pub fn ls_objective(theta: &[f64], phis: &[Vec<f64>], targets: &[f64], lambda: f64) -> f64 {
    let fit: f64 = phis
        .iter()
        .zip(targets)
        .map(|(phi, y)| {
            let r = dot(theta, phi) - y;
            r * r
        })
        .sum();
    fit + lambda * dot(theta, theta)
}

/// Analytic gradient of [`ls_objective`].
pub fn ls_gradient(theta: &[f64], phis: &[Vec<f64>], targets: &[f64], lambda: f64) -> Vec<f64> {
    let mut grad: Vec<f64> = theta.iter().map(|t| 2.0 * lambda * t).collect();
    for (phi, y) in phis.iter().zip(targets) {
        let r = dot(theta, phi) - y;
        for (g, p) in grad.iter_mut().zip(phi) {
            *g += 2.0 * r * p;
        }
    }
    grad
}

/// Squared distance between two latents, summed over both heads.
pub fn similarity(a: &RbfLatent, b: &RbfLatent) -> Result<f64> {
    if a.len() != b.len() || a.theta_utility.len() != b.theta_utility.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let sq = |x: &[f64], y: &[f64]| -> f64 {
        x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum()
    };
    Ok(sq(&a.theta_action, &b.theta_action) + sq(&a.theta_utility, &b.theta_utility))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    /// Symmetric, zero diagonal. Pairs with incompatible latent sizes hold `+inf`.
    pub values: Vec<Vec<f64>>,
    /// Comparable pairs `(i, j, loss)` with `i < j`, most similar first.
    pub ranked: Vec<(usize, usize, f64)>,
}

pub fn similarity_matrix(latents: &[RbfLatent]) -> SimilarityMatrix {
    let n = latents.len();
    let mut values = vec![vec![0.0; n]; n];
    let mut ranked = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let v = similarity(&latents[i], &latents[j]).unwrap_or(f64::INFINITY);
            values[i][j] = v;
            values[j][i] = v;
            if v.is_finite() {
                ranked.push((i, j, v));
            }
        }
    }
    ranked.sort_by(|a, b| a.2.total_cmp(&b.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    SimilarityMatrix { values, ranked }
}

impl SimilarityMatrix {
    /// Player-by-player CSV with a header row of names.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("player");
        for name in names {
            write!(out, ",{name}").ok();
        }
        out.push('\n');
        for (name, row) in names.iter().zip(&self.values) {
            out.push_str(name);
            for v in row {
                write!(out, ",{v}").ok();
            }
            out.push('\n');
        }
        out
    }
}

/// Ring buffer of latent snapshots for one player, oldest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatentHistory {
    depth: usize,
    snapshots: VecDeque<RbfLatent>,
}

impl LatentHistory {
    pub fn new(depth: usize) -> Self {
        Self {
            depth: depth.max(1),
            snapshots: VecDeque::new(),
        }
    }

    pub fn push(&mut self, latent: RbfLatent) {
        if let Some(last) = self.snapshots.back() {
            debug_assert!(latent.fitted_at_step >= last.fitted_at_step);
        }
        if self.snapshots.len() == self.depth {
            self.snapshots.pop_front();
        }
        self.snapshots.push_back(latent);
    }

    pub fn latest(&self) -> Option<&RbfLatent> {
        self.snapshots.back()
    }

    pub fn snapshots(&self) -> &VecDeque<RbfLatent> {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

/// Latent transfer loss over the last `horizon` snapshots of both players,
/// padding short histories with their oldest snapshot.
pub fn latent_loss(mine: &LatentHistory, theirs: &LatentHistory, horizon: usize) -> Result<f64> {
    if horizon < 1 {
        return Err(Error::config("latent horizon must be >= 1"));
    }
    if mine.is_empty() || theirs.is_empty() {
        return Ok(0.0);
    }
    fn pick(h: &LatentHistory, k: usize) -> &RbfLatent {
        let s = &h.snapshots;
        if k < s.len() {
            &s[s.len() - 1 - k]
        } else {
            &s[0]
        }
    }
    (0..horizon).try_fold(0.0, |acc, k| Ok(acc + similarity(pick(mine, k), pick(theirs, k))?))
}

/// Base utility minus the averaged, weighted latent losses of all partners.
pub fn utility_with_latent(u_base: f64, alphas: &[f64], losses: &[f64], players: usize) -> Result<f64> {
    if players < 2 {
        return Err(Error::config("latent utility needs at least two players"));
    }
    if alphas.len() != losses.len() {
        return Err(Error::DimensionMismatch {
            expected: alphas.len(),
            actual: losses.len(),
        });
    }
    let penalty: f64 = alphas.iter().zip(losses).map(|(a, l)| a * l).sum();
    Ok(u_base - penalty / (players - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> RbfConfig {
        RbfConfig::grid(2, 3, None, 10).unwrap()
    }

    #[test]
    fn grid_layout() {
        let c = cfg();
        assert_eq!(c.len(), 9);
        assert!((c.sigma - 0.5 / 3.0).abs() < 1e-15);
        assert_eq!(c.centers[0], vec![1.0 / 6.0, 1.0 / 6.0]);
        assert_eq!(c.centers[8], vec![5.0 / 6.0, 5.0 / 6.0]);
    }

    #[test]
    fn partition_of_unity() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let s = [rng.gen::<f64>(), rng.gen::<f64>()];
            let sum: f64 = c.basis(&s).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_latent_is_constant_output() {
        let c = cfg();
        let latent = RbfLatent {
            theta_action: vec![0.37; 9],
            theta_utility: vec![2.0; 9],
            fitted_at_step: 0,
        };
        for s in [[0.0, 0.0], [0.4, 0.9], [1.0, 1.0]] {
            let (a, u) = rbf_eval(&latent, &c, &s);
            assert!((a - 0.37).abs() < 1e-12);
            assert!((u - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_latent_peaks_at_its_center() {
        let c = cfg();
        let mut theta = vec![0.0; 9];
        theta[4] = 1.0;
        let latent = RbfLatent {
            theta_action: theta.clone(),
            theta_utility: theta,
            fitted_at_step: 0,
        };
        let at_own = rbf_eval(&latent, &c, &c.centers[4]).0;
        for (k, mu) in c.centers.iter().enumerate() {
            if k != 4 {
                assert!(at_own >= rbf_eval(&latent, &c, mu).0);
            }
        }
    }

    #[test]
    fn single_center_is_flat() {
        let c = RbfConfig::grid(2, 1, None, 1).unwrap();
        let latent = RbfLatent {
            theta_action: vec![0.6],
            theta_utility: vec![1.1],
            fitted_at_step: 0,
        };
        assert_eq!(rbf_eval(&latent, &c, &[0.9, 0.1]), (0.6, 1.1));
    }

    #[test]
    fn fit_single_sample_single_center() {
        let c = RbfConfig::grid(1, 1, None, 1).unwrap();
        let s = [Sample {
            state: vec![0.3],
            action: 0.8,
            utility: 2.0,
        }];
        let latent = fit_latent(&s, &c, 0).unwrap();
        assert!((latent.theta_action[0] - 0.8).abs() < 1e-5);
        assert!((latent.theta_utility[0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn fit_constant_targets() {
        let c = cfg();
        let mut samples = Vec::new();
        for x in 0..40 {
            for y in 0..40 {
                samples.push(Sample {
                    state: vec![(x as f64 + 0.5) / 40.0, (y as f64 + 0.5) / 40.0],
                    action: 0.4,
                    utility: 0.4,
                });
            }
        }
        let latent = fit_latent(&samples, &c, 0).unwrap();
        assert!(latent.theta_action.iter().all(|t| (t - 0.4).abs() < 1e-3));
    }

    #[test]
    fn fit_without_samples() {
        assert!(matches!(fit_latent(&[], &cfg(), 0), Err(Error::EmptyFit)));
    }

    #[test]
    fn similarity_cases() {
        let base = RbfLatent {
            theta_action: vec![0.5; 9],
            theta_utility: vec![1.0; 9],
            fitted_at_step: 0,
        };
        assert_eq!(similarity(&base, &base).unwrap(), 0.0);
        let mut shifted = base.clone();
        shifted.theta_action[0] += 0.1;
        assert!((similarity(&base, &shifted).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(
            similarity(&base, &shifted).unwrap(),
            similarity(&shifted, &base).unwrap()
        );
        let short = RbfLatent {
            theta_action: vec![0.5; 3],
            theta_utility: vec![1.0; 3],
            fitted_at_step: 0,
        };
        assert!(similarity(&base, &short).is_err());
    }

    #[test]
    fn matrix_ranks_closest_pair_first() {
        let mk = |v: f64| RbfLatent {
            theta_action: vec![v; 9],
            theta_utility: vec![v; 9],
            fitted_at_step: 0,
        };
        let m = similarity_matrix(&[mk(0.0), mk(0.5), mk(0.52)]);
        assert_eq!(m.ranked[0].0, 1);
        assert_eq!(m.ranked[0].1, 2);
        for i in 0..3 {
            assert_eq!(m.values[i][i], 0.0);
            for j in 0..3 {
                assert_eq!(m.values[i][j], m.values[j][i]);
            }
        }
        let csv = m.to_csv(&["a".into(), "b".into(), "c".into()]);
        assert!(csv.starts_with("player,a,b,c\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn latent_utility_cases() {
        assert_eq!(utility_with_latent(2.0, &[0.0, 0.0], &[5.0, 1.0], 5).unwrap(), 2.0);
        assert!((utility_with_latent(2.0, &[1.0], &[0.3], 2).unwrap() - 1.7).abs() < 1e-12);
        assert!((utility_with_latent(2.0, &[0.5, 0.5], &[0.2, 0.2], 3).unwrap() - 1.9).abs() < 1e-12);
        assert!(utility_with_latent(2.0, &[1.0], &[0.3], 1).is_err());
    }

    #[test]
    fn latent_history_window() {
        let mk = |v: f64, step: u64| RbfLatent {
            theta_action: vec![v],
            theta_utility: vec![0.0],
            fitted_at_step: step,
        };
        let mut a = LatentHistory::new(3);
        let mut b = LatentHistory::new(3);
        for step in 0..5 {
            a.push(mk(step as f64, step));
            b.push(mk(0.0, step));
        }
        assert_eq!(a.len(), 3);
        // snapshots 4, 3, 2 against zeros
        assert!((latent_loss(&a, &b, 3).unwrap() - (16.0 + 9.0 + 4.0)).abs() < 1e-12);
        // padding repeats the oldest (2)
        assert!((latent_loss(&a, &b, 4).unwrap() - (16.0 + 9.0 + 4.0 + 4.0)).abs() < 1e-12);
    }
}
