use serde::{Deserialize, Serialize};

use crate::algorithms::{Algorithm, RunTrace};
use crate::convex_sets::QuadraticExcess;
use crate::instances::{Instance, StreamMode, StreamOrder};
use crate::oracles::{objective_value, OracleMethod, OracleResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `f(avg v) + avg r` over the whole stream.
    pub value: f64,
    /// Per-step benchmark; absent when no oracle value is available.
    pub opt: Option<f64>,
    /// `opt - value`.
    pub regret1: Option<f64>,
    /// Distance of the average from S; for the smooth variant, the
    /// quadratic excess penalty of the average.
    pub regret2: f64,
    /// Distance of the average from S, for every algorithm.
    pub distance: f64,
    /// Packing only: collected reward over the total-reward optimum.
    pub ratio: Option<f64>,
    pub tau: usize,
    pub oracle_tolerance: Option<f64>,
}

pub fn compute_metrics(trace: &RunTrace, instance: &Instance, oracle: Option<&OracleResult>) -> Metrics {
    let n = trace.horizon.max(1) as f64;
    let value = objective_value(instance, &trace.average, trace.total_reward / n);
    let set = instance.set();
    let distance = set.distance(&trace.average);
    let regret2 = match trace.algorithm {
        Algorithm::SmoothCp => QuadraticExcess::new(set.upper().to_vec())
            .map(|h| h.eval(&trace.average))
            .unwrap_or(distance),
        _ => distance,
    };
    let oracle = oracle.filter(|o| o.feasible);
    let (opt, ratio) = match oracle {
        Some(o) if o.method == OracleMethod::PackingDual => {
            let ratio = (o.value > 0.0).then(|| trace.total_reward / o.value);
            (Some(o.value / n), ratio)
        }
        Some(o) => (Some(o.value), None),
        None => (None, None),
    };
    Metrics {
        value,
        opt,
        regret1: opt.map(|o| o - value),
        regret2,
        distance,
        ratio,
        tau: trace.tau,
        oracle_tolerance: oracle.map(|o| o.tolerance_achieved),
    }
}

/// Per-step gap between the unconditional and the conditional mean of the
/// offline choice under a random permutation:
/// `Q(t) = z ||E[v*] - E[v* | first t-1 seen]|| + |E[r*] - E[r* | first t-1 seen]|`.
///
/// The offline choice for each request is the option that maximizes
/// `r - y . v` at the oracle's dual prices `y`. IID streams have `Q = 0`.
pub fn q_gap(instance: &Instance, order: &StreamOrder, oracle: &OracleResult, z: f64) -> Vec<f64> {
    if order.mode == StreamMode::Iid {
        return vec![0.0; order.len()];
    }
    let d = instance.d();
    let prices: Vec<f64> = match &oracle.certificate {
        Some(c) if oracle.method == OracleMethod::PackingDual => c.theta.clone(),
        Some(c) => (0..d)
            .map(|j| c.phi.get(j).copied().unwrap_or(0.0) + c.lambda * c.theta[j])
            .collect(),
        None => vec![0.0; d],
    };
    let choice: Vec<(&[f64], f64)> = instance
        .requests()
        .iter()
        .map(|req| {
            let mut best = (&req.opts[0], f64::NEG_INFINITY);
            for o in &req.opts {
                let s = o.reward() - o.v.iter().zip(&prices).map(|(a, b)| a * b).sum::<f64>();
                if s > best.1 {
                    best = (o, s);
                }
            }
            (best.0.v.as_slice(), best.0.reward())
        })
        .collect();
    let t = order.len();
    // Suffix sums of the chosen vectors and rewards along the stream.
    let mut suffix_v = vec![vec![0.0; d]; t + 1];
    let mut suffix_r = vec![0.0; t + 1];
    for i in (0..t).rev() {
        let (v, r) = choice[order.indices[i]];
        for j in 0..d {
            suffix_v[i][j] = suffix_v[i + 1][j] + v[j];
        }
        suffix_r[i] = suffix_r[i + 1] + r;
    }
    let mean_v: Vec<f64> = suffix_v[0].iter().map(|s| s / t as f64).collect();
    let mean_r = suffix_r[0] / t as f64;
    let norm = instance.set().distance_norm();
    (0..t)
        .map(|i| {
            let left = (t - i) as f64;
            let diff: Vec<f64> = (0..d).map(|j| mean_v[j] - suffix_v[i][j] / left).collect();
            z * norm.norm(&diff) + (mean_r - suffix_r[i] / left).abs()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{run, RunConfig};
    use crate::convex_sets::ConvexSet;
    use crate::instances::{rp_stream, InstanceKind, OptionItem, Request};
    use crate::objectives::Objective;
    use crate::oracles::{fractional_opt, packing_opt_sum, OracleOptions};
    use crate::vectorspace::NormKind;

    #[test]
    fn perfect_run_has_zero_regret() {
        // Singleton requests: the only solution is the optimum.
        let set = ConvexSet::boxed(vec![0.0], vec![0.5], NormKind::MaxAbs).unwrap();
        let reqs = vec![
            Request::new(vec![OptionItem::new(vec![0.2], Some(0.4))]),
            Request::new(vec![OptionItem::new(vec![0.6], Some(0.8))]),
        ];
        let inst = Instance::new(InstanceKind::Linear, set, Objective::linear_reward(), None, reqs).unwrap();
        let order = rp_stream(&inst, 0);
        let trace = run(&inst, &order, &RunConfig::new(Algorithm::LinearCp).with_z(1.0)).unwrap();
        let oracle = fractional_opt(&inst, 0.0, &OracleOptions::default()).unwrap();
        let m = compute_metrics(&trace, &inst, Some(&oracle));
        assert!(m.regret1.unwrap().abs() < 1e-12);
        assert_eq!(m.regret2, 0.0);
    }

    #[test]
    fn packing_run_collecting_the_optimum_has_ratio_one() {
        let set = ConvexSet::budget_cap(vec![1.0], NormKind::MaxAbs).unwrap();
        let reqs = vec![
            Request::new(vec![
                OptionItem::new(vec![0.0], Some(0.0)),
                OptionItem::new(vec![0.5], Some(1.0))
            ]);
            4
        ];
        let inst = Instance::new(InstanceKind::Packing, set, Objective::linear_reward(), Some(4.0), reqs).unwrap();
        let order = rp_stream(&inst, 0);
        let cfg = RunConfig::new(Algorithm::Packing).with_z(1.0).with_epsilon(0.1);
        let trace = run(&inst, &order, &cfg).unwrap();
        let oracle = packing_opt_sum(&inst, 1.0, &OracleOptions::default()).unwrap();
        let m = compute_metrics(&trace, &inst, Some(&oracle));
        assert!((m.ratio.unwrap() - 1.0).abs() < 1e-12);
        assert!(m.regret1.unwrap().abs() < 1e-12);
    }

    #[test]
    fn missing_oracle_leaves_regret1_unavailable() {
        let set = ConvexSet::boxed(vec![0.0], vec![0.5], NormKind::MaxAbs).unwrap();
        let reqs = vec![Request::new(vec![OptionItem::new(vec![0.9], None)])];
        let inst = Instance::new(InstanceKind::Feasibility, set, Objective::zero(), None, reqs).unwrap();
        let order = rp_stream(&inst, 0);
        let trace = run(&inst, &order, &RunConfig::new(Algorithm::Feasibility)).unwrap();
        let m = compute_metrics(&trace, &inst, None);
        assert_eq!(m.regret1, None);
        assert_eq!(m.opt, None);
        assert!((m.regret2 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn q_gap_vanishes_at_the_start_and_for_iid() {
        let inst = crate::instances::generate(&crate::instances::GenParams {
            kind: InstanceKind::Linear,
            horizon: 30,
            ..Default::default()
        })
        .unwrap();
        let oracle = fractional_opt(&inst, 0.0, &OracleOptions::default()).unwrap();
        let order = rp_stream(&inst, 2);
        let q = q_gap(&inst, &order, &oracle, 2.0);
        assert_eq!(q.len(), 30);
        assert!(q[0].abs() < 1e-12);
        assert!(q.iter().all(|x| *x >= 0.0));
        let iid = crate::instances::iid_stream(&inst, 2, 10);
        assert!(q_gap(&inst, &iid, &oracle, 2.0).iter().all(|x| *x == 0.0));
    }
}
