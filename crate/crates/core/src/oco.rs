//! Online convex optimization learners that produce the dual iterates.
//!
//! Every learner maximizes a sequence of concave payoffs `g_t` and is driven
//! only by a supergradient `z_t` of `g_t` at the current iterate:
//!
//! * [`OgdBall`]: projected gradient ascent on a dual-norm ball.
//! * [`MwSimplex`]: multiplicative weights over the simplex, optionally with
//!   an origin slack coordinate (`theta_j = w_j / (1 + sum w)`).
//! * [`SignedMw`]: multiplicative weights over `2d` signed vertices plus the
//!   origin, covering the whole L1 ball.
//! * [`StronglyConcaveOgd`]: gradient ascent with `1/(H t)` steps on a box.
//!
//! Multiplicative weights are stored as log-weights, so they stay strictly
//! positive however long the run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex_sets::ConvexSet;
use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::vectorspace::{
    add_scaled, clamp_box, dot, dual_norm, norm, project_dual_ball, project_simplex_with_origin, NormKind,
};

const CAP_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    Constant {
        eta: f64,
    },
    /// `eta_t = diameter / (gradient_bound * sqrt(t))`
    Anytime {
        diameter: f64,
        gradient_bound: f64,
    },
}

impl StepSchedule {
    fn eta(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::Anytime {
                diameter,
                gradient_bound,
            } => {
                if gradient_bound <= 0.0 {
                    0.0
                } else {
                    diameter / (gradient_bound * (t as f64).sqrt())
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OgdBall {
    iterate: Vec<f64>,
    norm: NormKind,
    radius: f64,
    schedule: StepSchedule,
    t: usize,
}

impl OgdBall {
    pub fn new(d: usize, norm: NormKind, radius: f64, schedule: StepSchedule) -> Self {
        Self::with_initial(vec![0.0; d], norm, radius, schedule)
    }

    pub fn with_initial(init: Vec<f64>, norm: NormKind, radius: f64, schedule: StepSchedule) -> Self {
        OgdBall {
            iterate: project_dual_ball(&init, norm, radius),
            norm,
            radius,
            schedule,
            t: 0,
        }
    }

    /// Anytime schedule with diameter `2 * radius` and the given gradient bound.
    pub fn anytime(d: usize, norm: NormKind, radius: f64, gradient_bound: f64) -> Self {
        Self::new(
            d,
            norm,
            radius,
            StepSchedule::Anytime {
                diameter: 2.0 * radius,
                gradient_bound,
            },
        )
    }

    fn observe(&mut self, z: &[f64]) {
        self.t += 1;
        let eta = self.schedule.eta(self.t);
        let mut next = self.iterate.clone();
        add_scaled(&mut next, eta, z);
        self.iterate = project_dual_ball(&next, self.norm, self.radius);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MwSimplex {
    log_weights: Vec<f64>,
    epsilon: f64,
    cap: f64,
    includes_origin: bool,
    theta: Vec<f64>,
    t: usize,
}

impl MwSimplex {
    pub fn new(d: usize, epsilon: f64, cap: f64, includes_origin: bool) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0,1), got {epsilon}"
            )));
        }
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(Error::InvalidParameter("payoff cap must be > 0".into()));
        }
        let mut mw = MwSimplex {
            log_weights: vec![0.0; d],
            epsilon,
            cap,
            includes_origin,
            theta: Vec::new(),
            t: 0,
        };
        mw.refresh();
        Ok(mw)
    }

    pub fn from_weights(weights: &[f64], epsilon: f64, cap: f64, includes_origin: bool) -> Result<Self> {
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        let mut mw = Self::new(weights.len(), epsilon, cap, includes_origin)?;
        mw.log_weights = weights.iter().map(|w| w.ln()).collect();
        mw.refresh();
        Ok(mw)
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    fn refresh(&mut self) {
        let origin = if self.includes_origin { Some(0.0) } else { None };
        self.theta = normalized(&self.log_weights, origin);
    }

    fn observe(&mut self, z: &[f64]) -> Result<()> {
        check_cap(z, self.cap)?;
        let rate = (1.0 + self.epsilon).ln() / self.cap;
        for (lw, &g) in self.log_weights.iter_mut().zip(z) {
            *lw += rate * g;
        }
        self.t += 1;
        self.refresh();
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedMw {
    /// `[+e_1..+e_d, -e_1..-e_d]`; the origin keeps log-weight 0.
    log_weights: Vec<f64>,
    epsilon: f64,
    cap: f64,
    radius: f64,
    theta: Vec<f64>,
    t: usize,
}

impl SignedMw {
    /// Learner over `{||theta||_1 <= radius}` with payoffs capped at `cap`.
    pub fn new(d: usize, epsilon: f64, radius: f64, cap: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0,1), got {epsilon}"
            )));
        }
        if !(cap > 0.0 && cap.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidParameter("cap must be > 0, radius >= 0".into()));
        }
        let mut mw = SignedMw {
            log_weights: vec![0.0; 2 * d],
            epsilon,
            cap,
            radius,
            theta: vec![0.0; d],
            t: 0,
        };
        mw.refresh();
        Ok(mw)
    }

    fn refresh(&mut self) {
        let d = self.theta.len();
        let p = normalized(&self.log_weights, Some(0.0));
        for j in 0..d {
            self.theta[j] = self.radius * (p[j] - p[d + j]);
        }
    }

    fn observe(&mut self, z: &[f64]) -> Result<()> {
        let d = self.theta.len();
        let gains: Vec<f64> = z.iter().map(|g| self.radius * g).collect();
        check_cap(&gains, self.cap)?;
        let rate = (1.0 + self.epsilon).ln() / self.cap;
        let (pos, neg) = self.log_weights.split_at_mut(d);
        for ((p, n), g) in pos.iter_mut().zip(neg.iter_mut()).zip(&gains) {
            *p += rate * g;
            *n -= rate * g;
        }
        self.t += 1;
        self.refresh();
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StronglyConcaveOgd {
    iterate: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    strong_concavity: f64,
    gradient_bound: f64,
    t: usize,
}

impl StronglyConcaveOgd {
    /// Ascent on the box `[lower, upper]` with step `1 / (H t)`; starts at the
    /// projection of the origin.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, strong_concavity: f64, gradient_bound: f64) -> Result<Self> {
        if !(strong_concavity > 0.0 && strong_concavity.is_finite()) {
            return Err(Error::InvalidParameter("strong concavity must be > 0".into()));
        }
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidParameter("empty projection box".into()));
        }
        let iterate = clamp_box(&vec![0.0; lower.len()], &lower, &upper);
        Ok(StronglyConcaveOgd {
            iterate,
            lower,
            upper,
            strong_concavity,
            gradient_bound,
            t: 0,
        })
    }

    pub fn gradient_bound(&self) -> f64 {
        self.gradient_bound
    }

    pub fn strong_concavity(&self) -> f64 {
        self.strong_concavity
    }

    fn observe(&mut self, z: &[f64]) {
        self.t += 1;
        let eta = 1.0 / (self.strong_concavity * self.t as f64);
        let mut next = self.iterate.clone();
        add_scaled(&mut next, eta, z);
        self.iterate = clamp_box(&next, &self.lower, &self.upper);
    }
}

/// Softmax of log-weights, optionally with an extra slack entry of the given
/// log-weight that is dropped from the output.
fn normalized(log_weights: &[f64], slack: Option<f64>) -> Vec<f64> {
    let mut m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if let Some(s) = slack {
        m = m.max(s);
    }
    let exps: Vec<f64> = log_weights.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = exps.iter().sum::<f64>() + slack.map_or(0.0, |s| (s - m).exp());
    exps.into_iter().map(|e| e / total).collect()
}

fn check_cap(z: &[f64], cap: f64) -> Result<()> {
    for (index, &g) in z.iter().enumerate() {
        if !g.is_finite() || g.abs() > cap + CAP_SLACK {
            return Err(Error::PayoffCap { index, value: g, cap });
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    OgdBall(OgdBall),
    MwSimplex(MwSimplex),
    SignedMw(SignedMw),
    StronglyConcaveOgd(StronglyConcaveOgd),
}

impl Learner {
    pub fn current(&self) -> &[f64] {
        match self {
            Learner::OgdBall(l) => &l.iterate,
            Learner::MwSimplex(l) => &l.theta,
            Learner::SignedMw(l) => &l.theta,
            Learner::StronglyConcaveOgd(l) => &l.iterate,
        }
    }

    /// Feeds a supergradient of this round's payoff at the current iterate.
    pub fn observe(&mut self, z: &[f64]) -> Result<()> {
        if z.len() != self.current().len() {
            return Err(Error::Dimension {
                expected: self.current().len(),
                got: z.len(),
            });
        }
        match self {
            Learner::OgdBall(l) => l.observe(z),
            Learner::MwSimplex(l) => l.observe(z)?,
            Learner::SignedMw(l) => l.observe(z)?,
            Learner::StronglyConcaveOgd(l) => l.observe(z),
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        match self {
            Learner::OgdBall(l) => l.t,
            Learner::MwSimplex(l) => l.t,
            Learner::SignedMw(l) => l.t,
            Learner::StronglyConcaveOgd(l) => l.t,
        }
    }

    /// The domain the iterates live in.
    pub fn domain(&self) -> Domain {
        match self {
            Learner::OgdBall(l) => Domain::DualBall {
                norm: l.norm,
                radius: l.radius,
            },
            Learner::MwSimplex(l) if l.includes_origin => Domain::SimplexWithOrigin,
            Learner::MwSimplex(_) => Domain::Simplex,
            Learner::SignedMw(l) => Domain::DualBall {
                norm: NormKind::MaxAbs,
                radius: l.radius,
            },
            Learner::StronglyConcaveOgd(l) => Domain::Box {
                lower: l.lower.clone(),
                upper: l.upper.clone(),
            },
        }
    }
}

/// How a run builds a learner for a dual-ball domain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerSpec {
    /// OGD for Euclidean balls, signed MW for L1 balls.
    #[default]
    Auto,
    Ogd {
        #[serde(default)]
        eta: Option<f64>,
    },
    SignedMw {
        #[serde(default)]
        epsilon: Option<f64>,
    },
}

impl LearnerSpec {
    /// Learner over `{dual_norm(theta, norm) <= radius}` for supergradients in
    /// `[-1,1]^d` and a horizon of `horizon` rounds.
    pub fn build_ball(&self, d: usize, norm: NormKind, radius: f64, horizon: usize) -> Result<Learner> {
        let horizon = horizon.max(1);
        let ogd = |eta: Option<f64>| {
            let schedule = match eta {
                Some(eta) => StepSchedule::Constant { eta },
                None => StepSchedule::Anytime {
                    diameter: 2.0 * radius,
                    gradient_bound: (d as f64).sqrt(),
                },
            };
            Learner::OgdBall(OgdBall::new(d, norm, radius, schedule))
        };
        let signed = |epsilon: Option<f64>| -> Result<Learner> {
            if norm != NormKind::MaxAbs {
                return Err(Error::InvalidParameter(
                    "signed MW needs the max-abs distance norm (L1 dual ball)".into(),
                ));
            }
            let eps = epsilon.unwrap_or_else(|| default_mw_epsilon(2 * d + 1, horizon));
            let cap = radius.max(f64::MIN_POSITIVE);
            Ok(Learner::SignedMw(SignedMw::new(d, eps, radius, cap)?))
        };
        match self {
            LearnerSpec::Auto => match norm {
                NormKind::Euclidean => Ok(ogd(None)),
                NormKind::MaxAbs => signed(None),
            },
            LearnerSpec::Ogd { eta } => Ok(ogd(*eta)),
            LearnerSpec::SignedMw { epsilon } => signed(*epsilon),
        }
    }
}

/// `sqrt(ln(experts) / T)`, kept inside `(0, 0.5]`.
pub fn default_mw_epsilon(experts: usize, horizon: usize) -> f64 {
    ((experts as f64).ln() / horizon.max(1) as f64).sqrt().clamp(1e-6, 0.5)
}

/// A concave payoff for regret measurement.
pub trait Payoff {
    fn value(&self, theta: &[f64]) -> f64;
    fn supergradient(&self, theta: &[f64]) -> Vec<f64>;
}

/// `g(theta) = theta . z`
#[derive(Clone, Debug)]
pub struct LinearPayoff(pub Vec<f64>);

impl Payoff for LinearPayoff {
    fn value(&self, theta: &[f64]) -> f64 {
        dot(theta, &self.0)
    }
    fn supergradient(&self, _theta: &[f64]) -> Vec<f64> {
        self.0.clone()
    }
}

/// `g(theta) = theta . v - h_S(theta)`
#[derive(Clone, Debug)]
pub struct SupportPayoff<'a> {
    pub v: Vec<f64>,
    pub set: &'a ConvexSet,
}

impl Payoff for SupportPayoff<'_> {
    fn value(&self, theta: &[f64]) -> f64 {
        dot(theta, &self.v) - self.set.support(theta)
    }
    fn supergradient(&self, theta: &[f64]) -> Vec<f64> {
        crate::vectorspace::sub(&self.v, &self.set.support_argmax(theta))
    }
}

/// `psi(phi) = phi . v - (-f)*(phi)`
#[derive(Clone, Debug)]
pub struct ConjugatePayoff<'a> {
    pub v: Vec<f64>,
    pub objective: &'a Objective,
}

impl Payoff for ConjugatePayoff<'_> {
    fn value(&self, phi: &[f64]) -> f64 {
        dot(phi, &self.v) - self.objective.conjugate_neg(phi)
    }
    fn supergradient(&self, phi: &[f64]) -> Vec<f64> {
        crate::vectorspace::sub(&self.v, &self.objective.conjugate_neg_argmax(phi))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    DualBall { norm: NormKind, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Simplex,
    SimplexWithOrigin,
}

impl Domain {
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Domain::DualBall { norm, radius } => project_dual_ball(x, *norm, *radius),
            Domain::Box { lower, upper } => clamp_box(x, lower, upper),
            Domain::SimplexWithOrigin => project_simplex_with_origin(x),
            Domain::Simplex => {
                // Shift so the point lands on the face sum = 1.
                let d = x.len() as f64;
                let s: f64 = x.iter().sum();
                let shifted: Vec<f64> = x.iter().map(|v| v + (1.0 - s) / d + 1.0).collect();
                let p = project_simplex_with_origin(&shifted);
                let total: f64 = p.iter().sum();
                if total <= 0.0 {
                    vec![1.0 / d; x.len()]
                } else {
                    p.iter().map(|v| v / total).collect()
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            Domain::DualBall { norm, radius } => dual_norm(x, *norm) <= radius + tol,
            Domain::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            Domain::SimplexWithOrigin => x.iter().all(|v| *v >= -tol) && x.iter().sum::<f64>() <= 1.0 + tol,
            Domain::Simplex => x.iter().all(|v| *v >= -tol) && (x.iter().sum::<f64>() - 1.0).abs() <= tol,
        }
    }

    /// Extreme points worth checking directly (linear payoffs peak there).
    fn vertices(&self, d: usize) -> Vec<Vec<f64>> {
        let unit = |j: usize, s: f64| {
            let mut e = vec![0.0; d];
            e[j] = s;
            e
        };
        match self {
            Domain::DualBall {
                norm: NormKind::MaxAbs,
                radius,
            } => (0..d)
                .flat_map(|j| [unit(j, *radius), unit(j, -*radius)])
                .chain(std::iter::once(vec![0.0; d]))
                .collect(),
            Domain::DualBall { .. } => vec![vec![0.0; d]],
            Domain::SimplexWithOrigin => (0..d)
                .map(|j| unit(j, 1.0))
                .chain(std::iter::once(vec![0.0; d]))
                .collect(),
            Domain::Simplex => (0..d).map(|j| unit(j, 1.0)).collect(),
            Domain::Box { lower, upper } if d <= 12 => (0..1usize << d)
                .map(|mask| {
                    (0..d)
                        .map(|j| if mask >> j & 1 == 1 { upper[j] } else { lower[j] })
                        .collect()
                })
                .collect(),
            Domain::Box { lower, upper } => vec![lower.clone(), upper.clone()],
        }
    }

    fn scale(&self) -> f64 {
        match self {
            Domain::DualBall { radius, .. } => radius.max(1e-12),
            Domain::Box { lower, upper } => lower.iter().zip(upper).map(|(l, u)| u - l).fold(1e-12, f64::max),
            Domain::Simplex | Domain::SimplexWithOrigin => 1.0,
        }
    }
}

/// Best fixed point in hindsight for a payoff sequence, by projected
/// supergradient ascent with restarts followed by a shrinking pattern search.
/// Returns the maximizer and `sum_t g_t` at it.
pub fn hindsight_best<P: Payoff>(payoffs: &[P], domain: &Domain, d: usize, seed: u64) -> (Vec<f64>, f64) {
    let total = |theta: &[f64]| payoffs.iter().map(|p| p.value(theta)).sum::<f64>();
    let grad = |theta: &[f64]| {
        let mut g = vec![0.0; d];
        for p in payoffs {
            add_scaled(&mut g, 1.0, &p.supergradient(theta));
        }
        g
    };
    let scale = domain.scale();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut best_theta = domain.project(&vec![0.0; d]);
    let mut best_val = total(&best_theta);
    let consider = |theta: Vec<f64>, best_theta: &mut Vec<f64>, best_val: &mut f64| {
        let v = total(&theta);
        if v > *best_val {
            *best_val = v;
            *best_theta = theta;
        }
    };
    for vtx in domain.vertices(d) {
        consider(vtx, &mut best_theta, &mut best_val);
    }

    let mut starts = vec![domain.project(&vec![0.0; d])];
    for _ in 0..4 {
        let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-scale..=scale)).collect();
        starts.push(domain.project(&raw));
    }
    for start in starts {
        let mut theta = start;
        for k in 1..=3000 {
            let g = grad(&theta);
            let gn = norm(&g, NormKind::Euclidean);
            if gn == 0.0 {
                break;
            }
            let step = scale / (gn * (k as f64).sqrt());
            add_scaled(&mut theta, step, &g);
            theta = domain.project(&theta);
            consider(theta.clone(), &mut best_theta, &mut best_val);
        }
    }

    // Pattern search polish.
    let mut step = scale / 50.0;
    while step > 1e-10 * scale {
        let mut improved = false;
        for j in 0..d {
            for s in [-1.0, 1.0] {
                let mut cand = best_theta.clone();
                cand[j] += s * step;
                let cand = domain.project(&cand);
                let v = total(&cand);
                if v > best_val {
                    best_val = v;
                    best_theta = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best_theta, best_val)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest};

    #[test]
    fn current_examples() {
        let mw = MwSimplex::from_weights(&[1.0, 1.0], 0.5, 1.0, true).unwrap();
        let l = Learner::MwSimplex(mw);
        assert!(l.current().iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        let mw = MwSimplex::from_weights(&[1.0, 1.0], 0.5, 1.0, false).unwrap();
        assert_eq!(Learner::MwSimplex(mw).current(), &[0.5, 0.5]);
        let ogd = Learner::OgdBall(OgdBall::anytime(3, NormKind::Euclidean, 1.0, 1.0));
        assert_eq!(ogd.current(), &[0.0, 0.0, 0.0]);
        let init = OgdBall::with_initial(vec![0.2], NormKind::Euclidean, 1.0, StepSchedule::Constant { eta: 0.1 });
        assert_eq!(Learner::OgdBall(init).current(), &[0.2]);
    }

    #[test]
    fn mw_update_examples() {
        let mut l = Learner::MwSimplex(MwSimplex::new(1, 0.5, 1.0, true).unwrap());
        l.observe(&[1.0]).unwrap();
        let Learner::MwSimplex(mw) = &l else { unreachable!() };
        assert!((mw.weights()[0] - 1.5).abs() < 1e-12);
        assert!((l.current()[0] - 1.5 / 2.5).abs() < 1e-12);

        let mut l = Learner::MwSimplex(MwSimplex::from_weights(&[0.3, 2.0], 0.2, 1.0, true).unwrap());
        let before = l.current().to_vec();
        l.observe(&[0.0, 0.0]).unwrap();
        assert_eq!(l.current(), before.as_slice());
        assert!(matches!(l.observe(&[1.5, 0.0]), Err(Error::PayoffCap { index: 0, .. })));
    }

    #[test]
    fn ogd_projection_example() {
        let mut l = Learner::OgdBall(OgdBall::with_initial(
            vec![0.9],
            NormKind::Euclidean,
            1.0,
            StepSchedule::Constant { eta: 0.5 },
        ));
        l.observe(&[1.0]).unwrap();
        assert_eq!(l.current(), &[1.0]);
    }

    #[test]
    fn signed_mw_stays_in_l1_ball() {
        let mut l = LearnerSpec::Auto.build_ball(3, NormKind::MaxAbs, 1.0, 100).unwrap();
        assert!(matches!(l, Learner::SignedMw(_)));
        for t in 0..500 {
            let z = [((t % 7) as f64 / 7.0) - 0.5, 1.0, -1.0];
            l.observe(&z).unwrap();
            assert!(dual_norm(l.current(), NormKind::MaxAbs) <= 1.0 + 1e-12);
        }
        // Persistent positive payoff on coordinate 1 pushes theta toward +e_2.
        assert!(l.current()[1] > 0.4 && l.current()[2] < -0.4);
    }

    #[test]
    fn weights_never_underflow() {
        let mut mw = MwSimplex::new(2, 0.9, 1.0, true).unwrap();
        for _ in 0..100_000 {
            mw.observe(&[-1.0, -1.0]).unwrap();
        }
        assert!(mw.log_weights().iter().all(|l| l.is_finite()));
        assert!(mw.theta.iter().all(|t| *t >= 0.0));
    }

    fn mw_bound_holds(d: usize, eps: f64, payoffs: &[Vec<f64>]) -> bool {
        // MW guarantee: sum g(theta_t) >= (1-eps) sum g(theta) - M ln(d+1)/eps
        // for every vertex theta of the simplex-with-origin, payoffs linear in [0,1].
        let mut l = Learner::MwSimplex(MwSimplex::new(d, eps, 1.0, true).unwrap());
        let mut earned = 0.0;
        let mut corner = vec![0.0; d];
        for z in payoffs {
            earned += dot(l.current(), z);
            for j in 0..d {
                corner[j] += z[j];
            }
            l.observe(z).unwrap();
        }
        let slack = ((d + 1) as f64).ln() / eps;
        corner.iter().all(|c| earned >= (1.0 - eps) * c - slack) && earned >= -slack
    }

    #[test]
    fn mw_guarantee_on_adversarial_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let d = rng.gen_range(1..=5);
            let t = rng.gen_range(10..=300);
            let eps = [0.1, 0.3, 0.5][rng.gen_range(0..3)];
            // Switching adversary: reward the currently least-weighted expert.
            let payoffs: Vec<Vec<f64>> = (0..t)
                .map(|s| {
                    (0..d)
                        .map(|j| {
                            if (s / 7 + j) % d == 0 {
                                1.0
                            } else {
                                rng.gen_range(0.0..0.2)
                            }
                        })
                        .collect()
                })
                .collect();
            assert!(mw_bound_holds(d, eps, &payoffs));
        }
    }

    #[test]
    fn hindsight_examples() {
        let set = ConvexSet::budget_cap(vec![0.4, 0.6], NormKind::MaxAbs).unwrap();
        let payoffs: Vec<_> = (0..5)
            .map(|_| SupportPayoff {
                v: vec![0.0, 0.0],
                set: &set,
            })
            .collect();
        let (theta, val) = hindsight_best(
            &payoffs,
            &Domain::DualBall {
                norm: NormKind::MaxAbs,
                radius: 1.0,
            },
            2,
            0,
        );
        assert!(val.abs() < 1e-12);
        assert!(payoffs.iter().map(|p| p.value(&theta)).sum::<f64>() >= -1e-12);

        let z = vec![0.3, -0.8, 0.5];
        let (theta, val) = hindsight_best(
            &[LinearPayoff(z)],
            &Domain::DualBall {
                norm: NormKind::MaxAbs,
                radius: 1.0,
            },
            3,
            0,
        );
        assert!((val - 0.8).abs() < 1e-12);
        assert!((theta[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn hindsight_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let set = ConvexSet::boxed(
                vec![rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3)],
                vec![rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7)],
                NormKind::Euclidean,
            )
            .unwrap();
            let payoffs: Vec<_> = (0..20)
                .map(|_| SupportPayoff {
                    v: vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                    set: &set,
                })
                .collect();
            let domain = Domain::Box {
                lower: vec![-1.0, -1.0],
                upper: vec![1.0, 1.0],
            };
            let (_, val) = hindsight_best(&payoffs, &domain, 2, 3);
            let n = 400;
            let mut grid = f64::NEG_INFINITY;
            for i in 0..=n {
                for j in 0..=n {
                    let th = [-1.0 + 2.0 * i as f64 / n as f64, -1.0 + 2.0 * j as f64 / n as f64];
                    grid = grid.max(payoffs.iter().map(|p| p.value(&th)).sum::<f64>());
                }
            }
            assert!((val - grid).abs() < 1e-3, "{val} {grid}");
        }
    }

    fn linear_regret(horizon: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 3;
        let mean: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let mut l = Learner::OgdBall(OgdBall::anytime(d, NormKind::Euclidean, 1.0, (d as f64).sqrt()));
        let mut earned = 0.0;
        let mut payoffs = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let z: Vec<f64> = mean
                .iter()
                .map(|m| (m + rng.gen_range(-0.7..0.7)).clamp(-1.0, 1.0))
                .collect();
            earned += dot(l.current(), &z);
            l.observe(&z).unwrap();
            payoffs.push(z);
        }
        let sum: Vec<f64> = (0..d).map(|j| payoffs.iter().map(|z| z[j]).sum()).collect();
        norm(&sum, NormKind::Euclidean) - earned
    }

    #[test]
    fn ogd_regret_grows_sublinearly() {
        let seeds = 20;
        let r1: f64 = (0..seeds).map(|s| linear_regret(2000, s)).sum::<f64>() / seeds as f64;
        let r2: f64 = (0..seeds).map(|s| linear_regret(4000, s + 100)).sum::<f64>() / seeds as f64;
        assert!(r1 > 0.0);
        assert!(r2 / r1 <= 1.6, "ratio {}", r2 / r1);
    }

    #[test]
    fn strongly_concave_ogd_has_log_regret() {
        // g_t(theta) = -H/2 (theta - c_t)^2 on [-1, 1], c_t random in [-0.5, 0.5].
        let h = 1.0;
        let g_bound = 1.5 * h * 2.0;
        for horizon in [100usize, 1000, 10_000] {
            let mut rng = ChaCha8Rng::seed_from_u64(horizon as u64);
            let mut l =
                Learner::StronglyConcaveOgd(StronglyConcaveOgd::new(vec![-1.0], vec![1.0], h, g_bound).unwrap());
            let mut earned = 0.0;
            let mut cs = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let c: f64 = rng.gen_range(-0.5..0.5);
                let th = l.current()[0];
                earned += -0.5 * h * (th - c).powi(2);
                l.observe(&[-h * (th - c)]).unwrap();
                cs.push(c);
            }
            let mean = cs.iter().sum::<f64>() / horizon as f64;
            let best: f64 = cs.iter().map(|c| -0.5 * h * (mean - c).powi(2)).sum();
            let regret = best - earned;
            assert!(
                regret / (horizon as f64).ln() <= 2.0 * g_bound * g_bound / h,
                "{regret}"
            );
        }
    }

    proptest! {
        #[test]
        fn mw_weights_stay_positive(
            zs in prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, 3), 1..200),
            eps in 0.01f64..0.99,
        ) {
            let mut mw = MwSimplex::new(3, eps, 1.0, true).unwrap();
            for z in &zs {
                mw.observe(z).unwrap();
            }
            prop_assert!(mw.log_weights().iter().all(|l| l.is_finite()));
            prop_assert!(Domain::SimplexWithOrigin.contains(&mw.theta, 1e-12));
        }

        #[test]
        fn ogd_iterate_feasible(
            zs in prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, 2), 1..100),
            radius in 0.0f64..2.0,
        ) {
            for k in [NormKind::Euclidean, NormKind::MaxAbs] {
                let mut l = Learner::OgdBall(OgdBall::anytime(2, k, radius, 2f64.sqrt()));
                for z in &zs {
                    l.observe(z).unwrap();
                    prop_assert!(dual_norm(l.current(), k) <= radius + 1e-12);
                }
            }
        }
    }
}
