//! Offline ground truth: integral and fractional optima, the packing LP,
//! sampled estimates and the two Z estimators.

use serde::{Deserialize, Serialize};

use crate::instances::Instance;

mod brute;
mod fractional;
mod packing;
pub(crate) mod solver;

pub use brute::{brute_force_opt, BRUTE_FORCE_LIMIT};
pub use fractional::{estimate_z_phased, fractional_opt, is_feasible, opt_delta_curve, DeltaCurve};
pub use packing::{estimate_z_packing, eta_for, packing_opt_sum, sampled_opt_hat, ZEstimate};
pub use solver::SolveOptions as OracleOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    BruteForce,
    DualSubgradient,
    PackingDual,
}

/// Dual variables of the fractional problem: `mu = lambda * theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub lambda: f64,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Optimal value; `-inf` when `feasible` is false.
    pub value: f64,
    pub feasible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<DualCertificate>,
    pub method: OracleMethod,
    /// Zero when the value is exact up to rounding.
    pub tolerance_achieved: f64,
    /// Maximizing option index per request (brute force only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<Vec<usize>>,
}

impl OracleResult {
    fn infeasible(method: OracleMethod) -> Self {
        OracleResult {
            value: f64::NEG_INFINITY,
            feasible: false,
            certificate: None,
            method,
            tolerance_achieved: 0.0,
            choice: None,
        }
    }
}

/// `f(avg) + avg_reward`, the per-step value every oracle maximizes.
pub fn objective_value(instance: &Instance, average: &[f64], average_reward: f64) -> f64 {
    let clamped: Vec<f64> = average.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    instance.objective().eval(&clamped).unwrap_or(f64::NAN) + average_reward
}
