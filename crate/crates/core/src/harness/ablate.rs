use std::fmt::Write as _;

use rayon::prelude::*;

use super::game::train;
use super::report::RunReport;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::transfer::Variant;

/// Values swept in an ablation; the grid is their cartesian product.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AblationGrid {
    pub variants: Vec<Variant>,
    pub beta_tf: Vec<f64>,
    pub alpha_mom: Vec<f64>,
    pub horizon: Vec<usize>,
}

impl AblationGrid {
    /// Sweeps `beta_tf` for one variant and keeps the other settings of `config`.
    pub fn beta_sweep(config: &ExperimentConfig, variant: Variant, betas: &[f64]) -> Self {
        Self {
            variants: vec![variant],
            beta_tf: betas.to_vec(),
            alpha_mom: vec![config.transfer.alpha_mom],
            horizon: vec![config.transfer.horizon],
        }
    }

    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &variant in &self.variants {
            for &beta_tf in &self.beta_tf {
                for &alpha_mom in &self.alpha_mom {
                    for &horizon in &self.horizon {
                        out.push(GridPoint {
                            variant,
                            beta_tf,
                            alpha_mom,
                            horizon,
                            seed: 0,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub variant: Variant,
    pub beta_tf: f64,
    pub alpha_mom: f64,
    pub horizon: usize,
    pub seed: u64,
}

/// SplitMix64 step; spreads consecutive grid indices over the seed space.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One training run per grid point on a pool of `jobs` workers. Results
/// follow grid order regardless of scheduling.
pub fn ablate(
    config: &ExperimentConfig,
    grid: &AblationGrid,
    jobs: usize,
) -> Result<Vec<(GridPoint, RunReport)>> {
    let points: Vec<GridPoint> = grid
        .points()
        .into_iter()
        .enumerate()
        .map(|(k, p)| GridPoint {
            seed: derive_seed(config.run.seed, k as u64),
            ..p
        })
        .collect();
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        points
            .par_iter()
            .map(|point| {
                let mut c = config.clone();
                c.run.variant = point.variant;
                c.run.seed = point.seed;
                c.transfer.beta_tf = Some(point.beta_tf);
                c.transfer.alpha_mom = point.alpha_mom;
                c.transfer.horizon = point.horizon;
                train(&c).map(|r| (*point, r))
            })
            .collect()
    })
}

pub fn comparison_csv(results: &[(GridPoint, RunReport)]) -> String {
    let mut out = String::from(
        "variant,beta_tf,alpha_mom,horizon,seed,avg_power_kw,avg_overflow_lps,avg_demand_deviation_lps,final_potential\n",
    );
    for (p, r) in results {
        let last = r.last_episode();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p.variant,
            p.beta_tf,
            p.alpha_mom,
            p.horizon,
            p.seed,
            last.map_or(0.0, |e| e.power_kw),
            last.map_or(0.0, |e| e.overflow_lps),
            last.map_or(0.0, |e| e.demand_deviation_lps),
            r.final_potential
        )
        .ok();
    }
    out
}
