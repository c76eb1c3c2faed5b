use crate::error::{Error, Result};
use crate::instances::Instance;

use super::{objective_value, OracleMethod, OracleResult};

/// Largest number of one-option-per-request combinations enumerated.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Best integral solution: one option per request, maximizing
/// `f(avg v) + avg r` subject to `d(avg v, S) <= delta`.
pub fn brute_force_opt(instance: &Instance, delta: f64) -> Result<OracleResult> {
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::InvalidParameter(format!("delta must be >= 0, got {delta}")));
    }
    let reqs = instance.requests();
    let combinations: f64 = reqs.iter().map(|r| r.opts.len() as f64).product();
    if combinations > BRUTE_FORCE_LIMIT {
        return Err(Error::GuardExceeded {
            combinations,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let d = instance.d();
    let n = reqs.len() as f64;

    let mut walk = Walk {
        instance,
        n,
        delta,
        choice: vec![0; reqs.len()],
        sum: vec![0.0; d],
        best: None,
    };
    walk.visit(0, 0.0);
    let best = walk.best;
    Ok(match best {
        Some((value, choice)) => OracleResult {
            value,
            feasible: true,
            certificate: None,
            method: OracleMethod::BruteForce,
            tolerance_achieved: 0.0,
            choice: Some(choice),
        },
        None => OracleResult::infeasible(OracleMethod::BruteForce),
    })
}

struct Walk<'a> {
    instance: &'a Instance,
    n: f64,
    delta: f64,
    choice: Vec<usize>,
    sum: Vec<f64>,
    best: Option<(f64, Vec<usize>)>,
}

impl Walk<'_> {
    fn visit(&mut self, depth: usize, reward: f64) {
        let reqs = self.instance.requests();
        if depth == reqs.len() {
            let avg: Vec<f64> = self.sum.iter().map(|s| s / self.n).collect();
            if self.instance.set().distance(&avg) <= self.delta + 1e-12 {
                let value = objective_value(self.instance, &avg, reward / self.n);
                if self.best.as_ref().is_none_or(|(b, _)| value > *b) {
                    self.best = Some((value, self.choice.clone()));
                }
            }
            return;
        }
        for (i, opt) in reqs[depth].opts.iter().enumerate() {
            self.choice[depth] = i;
            for (s, v) in self.sum.iter_mut().zip(&opt.v) {
                *s += v;
            }
            self.visit(depth + 1, reward + opt.reward());
            for (s, v) in self.sum.iter_mut().zip(&opt.v) {
                *s -= v;
            }
        }
    }
}
