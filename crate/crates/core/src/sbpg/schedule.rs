use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential exploration decay with a floor: `eps(t) = max(eps0 * gamma^t, eps_min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySchedule {
    pub eps0: f64,
    pub gamma: f64,
    pub eps_min: f64,
}

impl Default for DecaySchedule {
    fn default() -> Self {
        Self {
            eps0: 1.0,
            gamma: 0.999,
            eps_min: 0.02,
        }
    }
}

impl DecaySchedule {
    pub fn new(eps0: f64, gamma: f64, eps_min: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps0) || !(0.0..=1.0).contains(&eps_min) {
            return Err(Error::config("epsilon bounds must lie in [0, 1]"));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::config(format!("decay factor {gamma} outside (0, 1]")));
        }
        Ok(Self {
            eps0,
            gamma,
            eps_min,
        })
    }

    /// Picks `gamma` so that epsilon reaches `eps_min` after `fraction * total_steps` steps.
    pub fn reaching_floor_at(
        eps0: f64,
        eps_min: f64,
        total_steps: u64,
        fraction: f64,
    ) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::config(format!("decay fraction {fraction} outside (0, 1]")));
        }
        let horizon = (total_steps as f64 * fraction).max(1.0);
        let gamma = if eps0 <= eps_min || eps_min <= 0.0 {
            if eps_min <= 0.0 && eps0 > 0.0 {
                return Err(Error::config("eps_min must be > 0 to derive a decay factor"));
            }
            1.0
        } else {
            (eps_min / eps0).powf(1.0 / horizon)
        };
        Self::new(eps0, gamma, eps_min)
    }

    pub fn value(&self, step: u64) -> f64 {
        let exponent = i32::try_from(step).unwrap_or(i32::MAX);
        (self.eps0 * self.gamma.powi(exponent)).max(self.eps_min)
    }
}
