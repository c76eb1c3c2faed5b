//! The five online primal-dual algorithms and their per-step selection rules.
//!
//! Each run walks a [`StreamOrder`] once. At every step it picks one option
//! using the current dual iterates, then feeds a supergradient of the round's
//! payoff to each learner. Ties in every selection rule go to the lowest
//! option index.

use serde::{Deserialize, Serialize};

use crate::convex_sets::QuadraticExcess;
use crate::error::{Error, Result};
use crate::instances::{Instance, OptionItem, StreamOrder};
use crate::oco::{Learner, LearnerSpec, MwSimplex, StronglyConcaveOgd};
use crate::vectorspace::{dot, sub};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Feasibility,
    GeneralCp,
    LinearCp,
    Packing,
    SmoothCp,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Feasibility => "feasibility",
            Algorithm::GeneralCp => "general_cp",
            Algorithm::LinearCp => "linear_cp",
            Algorithm::Packing => "packing",
            Algorithm::SmoothCp => "smooth_cp",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::InvalidParameter(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// Trade-off parameter; required by every algorithm except feasibility.
    #[serde(default)]
    pub z: Option<f64>,
    /// Multiplicative-weights parameter for packing.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub theta_learner: LearnerSpec,
    #[serde(default)]
    pub phi_learner: LearnerSpec,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        RunConfig {
            algorithm,
            z: None,
            epsilon: None,
            theta_learner: LearnerSpec::Auto,
            phi_learner: LearnerSpec::Auto,
        }
    }

    pub fn with_z(mut self, z: f64) -> Self {
        self.z = Some(z);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    fn require_z(&self) -> Result<f64> {
        match self.z {
            Some(z) if z >= 0.0 && z.is_finite() => Ok(z),
            Some(z) => Err(Error::InvalidParameter(format!("Z must be >= 0, got {z}"))),
            None => Err(Error::InvalidParameter(format!("{} needs a Z value", self.algorithm))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Position in the stream, starting at 1.
    pub t: usize,
    /// Index of the request within the instance.
    pub request: usize,
    /// Chosen option index within the request.
    pub idx: usize,
    pub v: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Dual iterate used for this step's decision.
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
    /// Cumulative consumption after this step.
    pub cum_budget: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub steps: Vec<StepRecord>,
    /// Stream length.
    pub horizon: usize,
    /// Number of committed steps (less than `horizon` only when packing exits).
    pub tau: usize,
    /// `(1/horizon) * sum_{t <= tau} v_t`
    pub average: Vec<f64>,
    pub total_reward: f64,
    pub consumption: Vec<f64>,
    /// `max(0, consumption_j - B)`; all zero for algorithms without a budget.
    pub overshoot: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
}

impl RunTrace {
    pub fn chosen(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.idx).collect()
    }
}

/// Index of the largest score; the first one wins ties.
fn argmax_by(opts: &[OptionItem], score: impl Fn(&OptionItem) -> f64) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, o) in opts.iter().enumerate() {
        let s = score(o);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// `argmin_v theta . v`
pub fn select_feasibility(opts: &[OptionItem], theta: &[f64]) -> usize {
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (i, o) in opts.iter().enumerate() {
        let s = dot(theta, &o.v);
        if s < best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// `argmax_v -phi . v - scale * theta . v`
pub fn select_general(opts: &[OptionItem], phi: &[f64], theta: &[f64], scale: f64) -> usize {
    argmax_by(opts, |o| -dot(phi, &o.v) - scale * dot(theta, &o.v))
}

/// `argmax_(r, v) r - scale * theta . v`
pub fn select_linear(opts: &[OptionItem], theta: &[f64], scale: f64) -> usize {
    argmax_by(opts, |o| o.reward() - scale * dot(theta, &o.v))
}

/// Accumulates committed steps into a trace.
struct Recorder {
    algorithm: Algorithm,
    steps: Vec<StepRecord>,
    consumption: Vec<f64>,
    reward: f64,
}

impl Recorder {
    fn new(algorithm: Algorithm, d: usize, horizon: usize) -> Self {
        Recorder {
            algorithm,
            steps: Vec::with_capacity(horizon),
            consumption: vec![0.0; d],
            reward: 0.0,
        }
    }

    fn commit(&mut self, request: usize, idx: usize, opt: &OptionItem, theta: &[f64], phi: Option<&[f64]>) {
        for (c, x) in self.consumption.iter_mut().zip(&opt.v) {
            *c += x;
        }
        self.reward += opt.reward();
        self.steps.push(StepRecord {
            t: self.steps.len() + 1,
            request,
            idx,
            v: opt.v.clone(),
            r: opt.r,
            theta: theta.to_vec(),
            phi: phi.map(<[f64]>::to_vec),
            cum_budget: self.consumption.clone(),
        });
    }

    fn finish(self, horizon: usize, budget: Option<f64>, z: Option<f64>) -> RunTrace {
        let n = horizon.max(1) as f64;
        let average = self.consumption.iter().map(|c| c / n).collect();
        let overshoot = match budget {
            Some(b) => self.consumption.iter().map(|c| (c - b).max(0.0)).collect(),
            None => vec![0.0; self.consumption.len()],
        };
        RunTrace {
            algorithm: self.algorithm,
            tau: self.steps.len(),
            steps: self.steps,
            horizon,
            average,
            total_reward: self.reward,
            consumption: self.consumption,
            overshoot,
            z,
        }
    }
}

fn check_dims(instance: &Instance, stream: &StreamOrder) -> Result<()> {
    if let Some(&bad) = stream.indices.iter().find(|&&i| i >= instance.horizon()) {
        return Err(Error::InvalidParameter(format!(
            "stream refers to request {bad} of {}",
            instance.horizon()
        )));
    }
    Ok(())
}

/// Feasibility: pick `argmin theta . v`, learn `theta` on
/// `g(theta) = theta . v - h_S(theta)` over the unit dual ball.
pub fn run_feasibility(instance: &Instance, stream: &StreamOrder, config: &RunConfig) -> Result<RunTrace> {
    check_dims(instance, stream)?;
    let set = instance.set();
    let (d, horizon) = (instance.d(), stream.len());
    let mut theta = config.theta_learner.build_ball(d, set.distance_norm(), 1.0, horizon)?;
    let mut rec = Recorder::new(Algorithm::Feasibility, d, horizon);
    for &ri in &stream.indices {
        let opts = &instance.requests()[ri].opts;
        let th = theta.current().to_vec();
        let idx = select_feasibility(opts, &th);
        let v = &opts[idx].v;
        rec.commit(ri, idx, &opts[idx], &th, None);
        theta.observe(&sub(v, &set.support_argmax(&th)))?;
    }
    Ok(rec.finish(horizon, None, None))
}

/// General concave objective: pick `argmax -phi . v - 2(Z+L) theta . v`,
/// learn `theta` as in feasibility and `phi` on
/// `psi(phi) = phi . v - (-f)*(phi)` over the dual ball of radius `L`.
pub fn run_general_cp(instance: &Instance, stream: &StreamOrder, config: &RunConfig) -> Result<RunTrace> {
    check_dims(instance, stream)?;
    let z = config.require_z()?;
    let set = instance.set();
    let objective = instance.objective();
    let l = objective.lipschitz();
    if !(l.is_finite() && l >= 0.0) {
        return Err(Error::InvalidParameter("objective has no Lipschitz constant".into()));
    }
    let (d, horizon) = (instance.d(), stream.len());
    let mut theta = config.theta_learner.build_ball(d, set.distance_norm(), 1.0, horizon)?;
    let mut phi = config.phi_learner.build_ball(d, objective.norm(), l, horizon)?;
    let scale = 2.0 * (z + l);
    let mut rec = Recorder::new(Algorithm::GeneralCp, d, horizon);
    for &ri in &stream.indices {
        let opts = &instance.requests()[ri].opts;
        let th = theta.current().to_vec();
        let ph = phi.current().to_vec();
        let idx = select_general(opts, &ph, &th, scale);
        let v = &opts[idx].v;
        rec.commit(ri, idx, &opts[idx], &th, Some(&ph));
        theta.observe(&sub(v, &set.support_argmax(&th)))?;
        phi.observe(&sub(v, &objective.conjugate_neg_argmax(&ph)))?;
    }
    Ok(rec.finish(horizon, None, Some(z)))
}

/// Linear objective: pick `argmax r - 2Z theta . v`, learn `theta` as in
/// feasibility.
pub fn run_linear_cp(instance: &Instance, stream: &StreamOrder, config: &RunConfig) -> Result<RunTrace> {
    check_dims(instance, stream)?;
    let z = config.require_z()?;
    let set = instance.set();
    let (d, horizon) = (instance.d(), stream.len());
    for &ri in &stream.indices {
        if instance.requests()[ri].opts.iter().any(|o| o.r.is_none()) {
            return Err(Error::InvalidParameter(format!(
                "request {ri} has an option without a reward"
            )));
        }
    }
    let mut theta = config.theta_learner.build_ball(d, set.distance_norm(), 1.0, horizon)?;
    let mut rec = Recorder::new(Algorithm::LinearCp, d, horizon);
    for &ri in &stream.indices {
        let opts = &instance.requests()[ri].opts;
        let th = theta.current().to_vec();
        let idx = select_linear(opts, &th, 2.0 * z);
        let v = &opts[idx].v;
        rec.commit(ri, idx, &opts[idx], &th, None);
        theta.observe(&sub(v, &set.support_argmax(&th)))?;
    }
    Ok(rec.finish(horizon, None, Some(z)))
}

/// Online packing: pick `argmax r - Z theta . v`, stop once any coordinate
/// of the cumulative consumption reaches `B`, and update
/// `w_j *= (1+eps)^(v_j - B/T)`, `theta_j = w_j / (1 + sum w)`.
pub fn run_packing(instance: &Instance, stream: &StreamOrder, config: &RunConfig) -> Result<RunTrace> {
    check_dims(instance, stream)?;
    let z = config.require_z()?;
    let eps = config
        .epsilon
        .ok_or_else(|| Error::InvalidParameter("packing needs epsilon".into()))?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0,1), got {eps}")));
    }
    let budget = match instance.budget() {
        Some(b) if b > 0.0 => b,
        _ => return Err(Error::InvalidParameter("packing needs a budget B > 0".into())),
    };
    let (d, horizon) = (instance.d(), stream.len());
    let drift = budget / horizon.max(1) as f64;
    let mut theta = Learner::MwSimplex(MwSimplex::new(d, eps, drift.max(1.0), true)?);
    let mut rec = Recorder::new(Algorithm::Packing, d, horizon);
    for &ri in &stream.indices {
        let opts = &instance.requests()[ri].opts;
        let th = theta.current().to_vec();
        let idx = select_linear(opts, &th, z);
        let v = &opts[idx].v;
        rec.commit(ri, idx, &opts[idx], &th, None);
        if rec.consumption.iter().any(|c| *c >= budget) {
            break;
        }
        let gains: Vec<f64> = v.iter().map(|x| x - drift).collect();
        theta.observe(&gains)?;
    }
    Ok(rec.finish(horizon, Some(budget), Some(z)))
}

/// Smooth variant: pick `argmax -phi . v - 2Z theta . v`; both duals follow
/// `1/(H t)` gradient steps on the gradient-range boxes, where `theta`
/// pays `theta . v - h*(theta)` for the quadratic excess penalty `h` over the
/// set's caps and `phi` pays `phi . v - (-f)*(phi)`.
pub fn run_smooth_cp(instance: &Instance, stream: &StreamOrder, config: &RunConfig) -> Result<RunTrace> {
    check_dims(instance, stream)?;
    let z = config.require_z()?;
    let set = instance.set();
    if set.lower().iter().any(|l| *l != 0.0) {
        return Err(Error::UnsupportedVariant(
            "the smooth penalty needs a set of the form {0 <= v <= cap}".into(),
        ));
    }
    let penalty = QuadraticExcess::new(set.upper().to_vec())?;
    let objective = instance.objective();
    let beta_f = objective
        .smoothness()
        .ok_or_else(|| Error::UnsupportedVariant("objective is not smooth".into()))?;
    let (d, horizon) = (instance.d(), stream.len());
    let g = set.distance_norm().ones_norm(d);

    let (th_lo, th_hi) = penalty.gradient_range();
    let mut theta = Learner::StronglyConcaveOgd(StronglyConcaveOgd::new(th_lo, th_hi, 1.0 / penalty.smoothness(), g)?);
    let (f_lo, f_hi) = objective.gradient_range_box(d)?;
    let phi_lo = f_hi.iter().map(|x| -x).collect();
    let phi_hi = f_lo.iter().map(|x| -x).collect();
    let mut phi = Learner::StronglyConcaveOgd(StronglyConcaveOgd::new(phi_lo, phi_hi, 1.0 / beta_f, g)?);

    let mut rec = Recorder::new(Algorithm::SmoothCp, d, horizon);
    for &ri in &stream.indices {
        let opts = &instance.requests()[ri].opts;
        let th = theta.current().to_vec();
        let ph = phi.current().to_vec();
        let idx = select_general(opts, &ph, &th, 2.0 * z);
        let v = &opts[idx].v;
        rec.commit(ri, idx, &opts[idx], &th, Some(&ph));
        theta.observe(&sub(v, &penalty.conjugate_argmax(&th)))?;
        phi.observe(&sub(v, &objective.conjugate_neg_argmax(&ph)))?;
    }
    Ok(rec.finish(horizon, None, Some(z)))
}

pub fn run(instance: &Instance, stream: &StreamOrder, config: &RunConfig) -> Result<RunTrace> {
    match config.algorithm {
        Algorithm::Feasibility => run_feasibility(instance, stream, config),
        Algorithm::GeneralCp => run_general_cp(instance, stream, config),
        Algorithm::LinearCp => run_linear_cp(instance, stream, config),
        Algorithm::Packing => run_packing(instance, stream, config),
        Algorithm::SmoothCp => run_smooth_cp(instance, stream, config),
    }
}
