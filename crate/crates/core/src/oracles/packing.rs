use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{rp_stream, Instance, StreamOrder};

use super::solver::{minimize, Problem, SolveOptions};
use super::{OracleMethod, OracleResult};

fn budget_of(instance: &Instance) -> Result<f64> {
    instance
        .budget()
        .ok_or_else(|| Error::InvalidParameter("packing oracle needs an instance budget B".into()))
}

/// Total-reward packing optimum with budget `budget_scale * B`, via the LP
/// dual `min over theta >= 0 of sum_t max(0, max_o (r_o - v_o . theta)) + budget_scale B sum_j theta_j`.
///
/// The sign constraint is folded in as `max(theta_j, 0)` in the budget term,
/// which leaves the minimum unchanged because the first term never
/// increases with `theta`.
pub fn packing_opt_sum(instance: &Instance, budget_scale: f64, opts: &SolveOptions) -> Result<OracleResult> {
    let cap = budget_scale * budget_of(instance)?;
    if !(cap >= 0.0 && cap.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "budget scale {budget_scale} gives an invalid budget"
        )));
    }
    let d = instance.d();
    let mut p = Problem::new(d);
    for req in instance.requests() {
        p.add_block(
            std::iter::once((vec![0.0; d], 0.0))
                .chain(req.opts.iter().map(|o| (o.v.iter().map(|v| -v).collect(), o.reward()))),
        );
    }
    for j in 0..d {
        let mut a = vec![0.0; d];
        a[j] = cap;
        p.add_block([(vec![0.0; d], 0.0), (a, 0.0)]);
    }
    let sol = minimize(&p, opts, None);
    let theta: Vec<f64> = sol.x.iter().map(|t| t.max(0.0)).collect();
    Ok(OracleResult {
        value: sol.value,
        feasible: true,
        certificate: Some(super::DualCertificate {
            lambda: 0.0,
            phi: Vec::new(),
            theta,
        }),
        method: OracleMethod::PackingDual,
        tolerance_achieved: if sol.exact { 0.0 } else { sol.tolerance },
        choice: None,
    })
}

/// `sqrt(3 ln((d + 2) / rho))`
pub fn eta_for(d: usize, rho: f64) -> f64 {
    (3.0 * ((d as f64 + 2.0) / rho).ln()).sqrt()
}

/// Scaled-up optimum of the requests at `indices`, out of a stream of
/// `total` requests: the packing LP on the sample with budget
/// `f B + eta sqrt(f B)` divided by the sampled fraction `f`.
fn opt_hat_of(instance: &Instance, indices: &[usize], total: usize, rho: f64, opts: &SolveOptions) -> Result<f64> {
    let b = budget_of(instance)?;
    let sample = instance.with_requests(indices.iter().map(|&i| instance.requests()[i].clone()).collect())?;
    let frac = indices.len() as f64 / total as f64;
    let eta = eta_for(instance.d(), rho);
    let budget = frac * b + eta * (frac * b).sqrt();
    Ok(packing_opt_sum(&sample, budget / b, opts)?.value / frac)
}

/// Sampled estimate of the total-reward optimum from `ceil(delta T)` requests
/// drawn without replacement.
pub fn sampled_opt_hat(instance: &Instance, delta: f64, rho: f64, seed: u64, opts: &SolveOptions) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sample fraction must be in (0,1], got {delta}"
        )));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!("rho must be in (0,1), got {rho}")));
    }
    let t = instance.horizon();
    let n = ((delta * t as f64).ceil() as usize).clamp(1, t);
    let order = rp_stream(instance, seed);
    opt_hat_of(instance, &order.indices[..n], t, rho, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZEstimate {
    pub z: f64,
    pub opt_hat: f64,
    pub sample_fraction: f64,
    pub sample_size: usize,
    pub eta: f64,
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// `Z = 2 OPT-hat / B` from the first `ceil(delta T)` requests of the stream,
/// with `rho = eps^2` and `delta = min(1, 4 eta^2 eps^2 / ln d)`.
pub fn estimate_z_packing(
    instance: &Instance,
    stream: &StreamOrder,
    eps: f64,
    opts: &SolveOptions,
) -> Result<ZEstimate> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be in (0,1), got {eps}")));
    }
    let b = budget_of(instance)?;
    let d = instance.d();
    let rho = eps * eps;
    let eta = eta_for(d, rho);
    let ln_d = (d as f64).ln();
    let delta = if ln_d > 0.0 {
        (4.0 * eta * eta * eps * eps / ln_d).min(1.0)
    } else {
        1.0
    };
    let t = stream.len();
    let want = delta * t as f64;
    if want < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "sample of {want:.3} requests is too small to estimate Z"
        )));
    }
    let n = (want.ceil() as usize).min(t);
    let opt_hat = opt_hat_of(instance, &stream.indices[..n], t, rho, opts)?;
    let floor = ln_d / (eps * eps);
    let warning = (b.min(opt_hat) < floor).then(|| {
        format!(
            "min(B, OPT-hat) = {:.4} is below ln(d)/eps^2 = {floor:.4}; Z may be off",
            b.min(opt_hat)
        )
    });
    Ok(ZEstimate {
        z: 2.0 * opt_hat / b,
        opt_hat,
        sample_fraction: delta,
        sample_size: n,
        eta,
        rho,
        warning,
    })
}
