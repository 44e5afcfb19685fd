//! Local multi-objective utilities of the production line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible denominator of the demand term.
pub const DEMAND_DENOMINATOR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UtilityForm {
    /// Demand objective only for the last player.
    #[default]
    Bgs,
    /// Demand objective for every player.
    Lsbgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityWeights {
    #[serde(default)]
    pub form: UtilityForm,
    pub alpha_l: f64,
    pub alpha_p: f64,
    pub alpha_d: f64,
    /// Lower fill limit, normalized.
    pub h_p: f64,
    /// Upper fill limit, normalized.
    pub h_s: f64,
    #[serde(default = "default_demand")]
    pub demand_lps: f64,
    /// Seconds per simulation step.
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_demand() -> f64 {
    0.125
}

fn default_dt() -> f64 {
    1.0
}

impl Default for UtilityWeights {
    fn default() -> Self {
        Self {
            form: UtilityForm::Bgs,
            alpha_l: 0.5,
            alpha_p: 2.0,
            alpha_d: 2.0,
            h_p: 0.1,
            h_s: 0.9,
            demand_lps: default_demand(),
            dt: default_dt(),
        }
    }
}

impl UtilityWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_l > 0.0 && self.alpha_p > 0.0 && self.alpha_d > 0.0) {
            return Err(Error::config("utility weights must be positive"));
        }
        if !(0.0 <= self.h_p && self.h_p < self.h_s && self.h_s <= 1.0) {
            return Err(Error::config(format!(
                "fill limits need 0 <= h_p < h_s <= 1, got {} and {}",
                self.h_p, self.h_s
            )));
        }
        if !(self.demand_lps >= 0.0) || !(self.dt > 0.0) {
            return Err(Error::config("demand must be >= 0 and dt > 0"));
        }
        Ok(())
    }
}

/// Instantaneous unmet-demand volume for one step: `(out - in) * dt` while the
/// final buffer is empty, zero otherwise. Never negative.
pub fn demand_term(fill_final_normalized: f64, outflow_lps: f64, inflow_lps: f64, dt: f64) -> f64 {
    if fill_final_normalized <= 0.0 {
        ((outflow_lps - inflow_lps) * dt).max(0.0)
    } else {
        0.0
    }
}

/// Time spent below the lower limit and above the upper limit over one
/// interval sampled every `dt` seconds.
pub fn constraint_terms(
    low_guarded: &[f64],
    high_guarded: &[f64],
    limits: &UtilityWeights,
    dt: f64,
) -> (f64, f64) {
    let l_p = low_guarded.iter().filter(|&&h| h < limits.h_p).count() as f64 * dt;
    let l_s = high_guarded.iter().filter(|&&h| h > limits.h_s).count() as f64 * dt;
    (l_p, l_s)
}

/// Per-interval penalty signals of one player.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Penalties {
    pub l_p: f64,
    pub l_s: f64,
    /// Average power over the interval, kW.
    pub power: f64,
    /// Signed demand deviation over the interval, litres; negative when the
    /// line falls short.
    pub v_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Utility {
    pub value: f64,
    /// The demand denominator hit its floor.
    pub demand_clamped: bool,
}

fn demand_component(v_d: f64, weights: &UtilityWeights) -> (f64, bool) {
    let den = 1.0 - weights.alpha_d * v_d;
    if den < DEMAND_DENOMINATOR_FLOOR {
        (1.0 / DEMAND_DENOMINATOR_FLOOR, true)
    } else {
        (1.0 / den, false)
    }
}

fn base_terms(p: &Penalties, is_last: bool, w: &UtilityWeights) -> f64 {
    let fill = 1.0 / (1.0 + w.alpha_l * p.l_p);
    let power = 1.0 / (1.0 + w.alpha_p * p.power);
    if is_last {
        fill + power
    } else {
        fill + 1.0 / (1.0 + w.alpha_l * p.l_s) + power
    }
}

/// Demand objective only on the last player.
pub fn utility_bgs(p: &Penalties, is_last: bool, w: &UtilityWeights) -> Utility {
    let base = base_terms(p, is_last, w);
    if is_last {
        let (d, clamped) = demand_component(p.v_d, w);
        Utility {
            value: base + d,
            demand_clamped: clamped,
        }
    } else {
        Utility {
            value: base,
            demand_clamped: false,
        }
    }
}

/// Demand objective on every player.
pub fn utility_lsbgs(p: &Penalties, is_last: bool, w: &UtilityWeights) -> Utility {
    let (d, clamped) = demand_component(p.v_d, w);
    Utility {
        value: base_terms(p, is_last, w) + d,
        demand_clamped: clamped,
    }
}

pub fn utility(p: &Penalties, is_last: bool, w: &UtilityWeights) -> Utility {
    match w.form {
        UtilityForm::Bgs => utility_bgs(p, is_last, w),
        UtilityForm::Lsbgs => utility_lsbgs(p, is_last, w),
    }
}

/// Global potential: the sum of local utilities.
pub fn potential(utilities: &[f64]) -> f64 {
    utilities.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> UtilityWeights {
        UtilityWeights {
            alpha_l: 1.0,
            alpha_p: 1.0,
            alpha_d: 0.5,
            ..UtilityWeights::default()
        }
    }

    #[test]
    fn demand_term_cases() {
        assert_eq!(demand_term(0.3, 0.125, 0.0, 1.0), 0.0);
        let v_d: f64 = (0..10).map(|_| demand_term(0.0, 0.125, 0.0, 1.0)).sum();
        assert!((v_d - 1.25).abs() < 1e-12);
        assert_eq!(demand_term(0.0, 0.125, 0.125, 1.0), 0.0);
    }

    #[test]
    fn constraint_term_cases() {
        let lim = UtilityWeights::default();
        let inside = [0.5; 10];
        assert_eq!(constraint_terms(&inside, &inside, &lim, 1.0), (0.0, 0.0));
        assert_eq!(constraint_terms(&[0.05; 10], &inside, &lim, 1.0), (10.0, 0.0));
        let mut high = [0.5; 10];
        high[2] = 0.95;
        high[5] = 0.91;
        high[9] = 1.0;
        assert_eq!(constraint_terms(&inside, &high, &lim, 1.0), (0.0, 3.0));
    }

    #[test]
    fn bgs_maxima() {
        let zero = Penalties::default();
        assert_eq!(utility_bgs(&zero, false, &w()).value, 3.0);
        assert_eq!(utility_bgs(&zero, true, &w()).value, 3.0);
    }

    #[test]
    fn bgs_direct_evaluation() {
        let p = Penalties {
            l_p: 1.0,
            l_s: 0.0,
            power: 0.5,
            v_d: 0.0,
        };
        let u = utility_bgs(&p, false, &w()).value;
        assert!((u - (0.5 + 1.0 + 1.0 / 1.5)).abs() < 1e-12);
        assert!((u - 2.1667).abs() < 1e-4);
    }

    #[test]
    fn lsbgs_structure() {
        let zero = Penalties::default();
        assert_eq!(utility_lsbgs(&zero, false, &w()).value, 4.0);
        assert_eq!(utility_lsbgs(&zero, true, &w()).value, 3.0);
        let p = Penalties {
            l_p: 3.0,
            l_s: 2.0,
            power: 0.2,
            v_d: 0.0,
        };
        assert!(
            (utility_lsbgs(&p, false, &w()).value - (utility_bgs(&p, false, &w()).value + 1.0)).abs()
                < 1e-12
        );
        let p = Penalties {
            v_d: 1.0,
            ..Penalties::default()
        };
        // demand term alone is 1 / (1 - 0.5)
        assert!((utility_lsbgs(&p, false, &w()).value - 3.0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn shortfall_lowers_utility() {
        let short = Penalties {
            v_d: -1.25,
            ..Penalties::default()
        };
        let u = utility_bgs(&short, true, &w());
        assert!(u.value < 3.0);
        assert!(!u.demand_clamped);
    }

    #[test]
    fn demand_singularity_is_clamped() {
        let p = Penalties {
            v_d: 2.0,
            ..Penalties::default()
        };
        let u = utility_bgs(&p, true, &w());
        assert!(u.demand_clamped);
        assert!(u.value.is_finite());
    }

    #[test]
    fn terms_stay_in_unit_interval() {
        for l in [0.0, 0.5, 3.0, 10.0] {
            for power in [0.0, 0.1, 0.357] {
                let p = Penalties {
                    l_p: l,
                    l_s: l,
                    power,
                    v_d: -l / 8.0,
                };
                let u = utility_bgs(&p, false, &w()).value;
                assert!(u > 0.0 && u <= 3.0);
                let u = utility_lsbgs(&p, false, &w()).value;
                assert!(u > 0.0 && u <= 4.0);
            }
        }
    }

    #[test]
    fn potential_sums() {
        assert_eq!(potential(&[2.5]), 2.5);
        assert_eq!(potential(&[3.0; 5]), 15.0);
    }
}
