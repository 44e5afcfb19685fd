//! Pairwise action-similarity losses and the transfer-augmented utility.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sliding-window loss over the last `horizon` communicated actions.
///
/// Histories are ordered oldest first. A history shorter than the horizon is
/// padded at the old end with its oldest entry.
pub fn sw_loss(history_i: &[f64], history_j: &[f64], horizon: usize) -> Result<f64> {
    if horizon < 1 {
        return Err(Error::config("sliding-window horizon must be >= 1"));
    }
    if history_i.is_empty() || history_j.is_empty() {
        return Err(Error::config("sliding-window loss needs at least one action per player"));
    }
    let lookback = |h: &[f64], k: usize| -> f64 {
        if k < h.len() {
            h[h.len() - 1 - k]
        } else {
            h[0]
        }
    };
    Ok((0..horizon)
        .map(|k| {
            let d = lookback(history_i, k) - lookback(history_j, k);
            d * d
        })
        .sum())
}

/// Running momentum average of squared action differences for one ordered pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MomState {
    pub h_prev: f64,
    pub initialized: bool,
}

/// `t == 0` seeds the average with the current squared difference; later
/// steps blend it with the previous value.
pub fn mom_loss(state: &mut MomState, a_i: f64, a_j: f64, alpha_mom: f64, t: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha_mom) {
        return Err(Error::config(format!("alpha_mom {alpha_mom} outside [0, 1]")));
    }
    let current = (a_i - a_j) * (a_i - a_j);
    let h = if t == 0 || !state.initialized {
        current
    } else {
        alpha_mom * state.h_prev + (1.0 - alpha_mom) * current
    };
    state.h_prev = h;
    state.initialized = true;
    Ok(h)
}

pub fn modified_utility(u_base: f64, alpha: f64, h_loss: f64) -> f64 {
    u_base - alpha * h_loss
}
