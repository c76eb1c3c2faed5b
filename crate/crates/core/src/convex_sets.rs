//! Target sets `S` and their support functions.
//!
//! Every set is an axis-aligned box inside `[0,1]^d`. For boxes the nearest
//! point under both supported norms is the coordinatewise clamp, so distance
//! and support have closed forms. A new set shape only has to provide
//! `support`, `support_argmax`, `distance` and `s_param`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectorspace::{check_finite, dot, norm, NormKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetShape {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// `{v : 0 <= v <= cap}`.
    BudgetCap {
        cap: Vec<f64>,
    },
    /// `{v : floor <= v <= 1}`.
    CoverFloor {
        floor: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexSetSpec {
    pub shape: SetShape,
    pub distance_norm: NormKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConvexSetSpec", into = "ConvexSetSpec")]
pub struct ConvexSet {
    shape: SetShape,
    norm: NormKind,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<ConvexSetSpec> for ConvexSet {
    type Error = Error;

    fn try_from(spec: ConvexSetSpec) -> Result<Self> {
        ConvexSet::from_shape(spec.shape, spec.distance_norm)
    }
}

impl From<ConvexSet> for ConvexSetSpec {
    fn from(s: ConvexSet) -> Self {
        ConvexSetSpec {
            shape: s.shape,
            distance_norm: s.norm,
        }
    }
}

impl ConvexSet {
    pub fn from_shape(shape: SetShape, norm: NormKind) -> Result<Self> {
        let (lower, upper) = match &shape {
            SetShape::Box { lower, upper } => (lower.clone(), upper.clone()),
            SetShape::BudgetCap { cap } => (vec![0.0; cap.len()], cap.clone()),
            SetShape::CoverFloor { floor } => (floor.clone(), vec![1.0; floor.len()]),
        };
        if lower.is_empty() {
            return Err(Error::InvalidSet("dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        check_finite(&lower)?;
        check_finite(&upper)?;
        for (j, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if !(0.0..=1.0).contains(&l) || !(0.0..=1.0).contains(&u) || l > u {
                return Err(Error::InvalidSet(format!(
                    "coordinate {j}: need 0 <= lower ({l}) <= upper ({u}) <= 1"
                )));
            }
        }
        Ok(ConvexSet {
            shape,
            norm,
            lower,
            upper,
        })
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>, norm: NormKind) -> Result<Self> {
        Self::from_shape(SetShape::Box { lower, upper }, norm)
    }

    pub fn budget_cap(cap: Vec<f64>, norm: NormKind) -> Result<Self> {
        Self::from_shape(SetShape::BudgetCap { cap }, norm)
    }

    pub fn cover_floor(floor: Vec<f64>, norm: NormKind) -> Result<Self> {
        Self::from_shape(SetShape::CoverFloor { floor }, norm)
    }

    pub fn shape(&self) -> &SetShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn distance_norm(&self) -> NormKind {
        self.norm
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Largest coordinate value any point of the set can take.
    pub fn s_param(&self) -> f64 {
        self.upper.iter().fold(0.0, |m, &u| m.max(u))
    }

    /// `h_S(theta) = max_{y in S} theta . y`.
    pub fn support(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&t, (&l, &u))| if t > 0.0 { t * u } else { t * l })
            .sum()
    }

    /// A maximizer of `theta . y` over the set; zero weights pick the lower bound.
    pub fn support_argmax(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&t, (&l, &u))| if t > 0.0 { u } else { l })
            .collect()
    }

    pub fn nearest(&self, v: &[f64]) -> Vec<f64> {
        crate::vectorspace::clamp_box(v, &self.lower, &self.upper)
    }

    pub fn distance(&self, v: &[f64]) -> f64 {
        let gap: Vec<f64> = v
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&x, (&l, &u))| x - x.clamp(l, u))
            .collect();
        norm(&gap, self.norm)
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&x, (&l, &u))| l <= x && x <= u)
    }
}

/// Maximizes `theta . v - h_S(theta)` over the dual unit ball by grid search.
///
/// The objective is positively homogeneous in `theta`, so its maximum over the
/// ball is either 0 (at the origin) or attained on the unit sphere. The sphere
/// is covered by radially normalizing a grid on the surface of `[-1,1]^d`; the
/// best grid points are then polished by a shrinking pattern search. Used as
/// an independent oracle for [`ConvexSet::distance`].
pub fn fenchel_distance_oracle(v: &[f64], set: &ConvexSet, grid_resolution: usize) -> f64 {
    let d = v.len();
    let res = grid_resolution.max(10);
    let k = set.distance_norm();
    let value = |theta: &[f64]| dot(theta, v) - set.support(theta);
    let to_sphere = |u: &[f64]| -> Option<Vec<f64>> {
        let n = crate::vectorspace::dual_norm(u, k);
        (n > 0.0).then(|| u.iter().map(|x| x / n).collect())
    };

    let mut best: Vec<(f64, Vec<f64>)> = Vec::new();
    let keep = 8;
    let push = |val: f64, theta: Vec<f64>, best: &mut Vec<(f64, Vec<f64>)>| {
        if best.len() < keep || val > best[best.len() - 1].0 {
            best.push((val, theta));
            best.sort_by(|a, b| b.0.total_cmp(&a.0));
            best.truncate(keep);
        }
    };

    let ticks: Vec<f64> = (0..=res).map(|i| -1.0 + 2.0 * i as f64 / res as f64).collect();
    let mut u = vec![0.0; d];
    for face in 0..d {
        for sign in [-1.0, 1.0] {
            // Enumerate the other d-1 coordinates over the tick grid.
            let others = d - 1;
            let total = (res + 1).pow(others as u32);
            for idx in 0..total {
                let mut rem = idx;
                let mut o = 0;
                for (j, slot) in u.iter_mut().enumerate() {
                    if j == face {
                        *slot = sign;
                    } else {
                        *slot = ticks[rem % (res + 1)];
                        rem /= res + 1;
                        o += 1;
                    }
                }
                debug_assert_eq!(o, others);
                if let Some(theta) = to_sphere(&u) {
                    push(value(&theta), theta, &mut best);
                }
            }
        }
    }

    let mut overall = 0.0_f64;
    for (val, theta) in best {
        let mut cur = theta;
        let mut cur_val = val;
        let max_step = 2.0 / res as f64;
        let mut step = max_step;
        // Kinks where a dual coordinate is zero make compass search zig-zag,
        // so the polish is capped; the grid start is already close.
        for _ in 0..2_000 {
            if step <= 1e-8 {
                break;
            }
            let mut improved = false;
            for j in 0..d {
                for s in [-1.0, 1.0] {
                    let mut cand = cur.clone();
                    cand[j] += s * step;
                    if let Some(c) = to_sphere(&cand) {
                        let cv = value(&c);
                        // Ignore rounding-level gains, which would keep the
                        // search wandering at tiny steps.
                        if cv > cur_val + 1e-14 {
                            cur = c;
                            cur_val = cv;
                            improved = true;
                        }
                    }
                }
            }
            // Grow again after progress so long ridges are crossed quickly.
            step = if improved {
                (2.0 * step).min(max_step)
            } else {
                0.5 * step
            };
        }
        overall = overall.max(cur_val);
    }
    overall
}

/// Smooth constraint penalty `h(x) = sum_j max(0, x_j - cap_j)^2`.
///
/// It is 2-strongly-smooth, vanishes exactly on the cap box, and its gradient
/// range over `[0,1]^d` is the box `[0, 2(1 - cap_j)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticExcess {
    pub cap: Vec<f64>,
}

impl QuadraticExcess {
    pub fn new(cap: Vec<f64>) -> Result<Self> {
        check_finite(&cap)?;
        if cap.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidSet("penalty caps must lie in [0,1]".into()));
        }
        Ok(QuadraticExcess { cap })
    }

    pub fn smoothness(&self) -> f64 {
        2.0
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.cap).map(|(&v, &c)| (v - c).max(0.0).powi(2)).sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.cap).map(|(&v, &c)| 2.0 * (v - c).max(0.0)).collect()
    }

    /// Smallest maximizer of `theta . y - h(y)` over `[0,1]^d`.
    pub fn conjugate_argmax(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.cap)
            .map(|(&t, &c)| if t > 0.0 { (c + t / 2.0).min(1.0) } else { 0.0 })
            .collect()
    }

    /// `h*(theta) = max_{y in [0,1]^d} theta . y - h(y)`.
    pub fn conjugate(&self, theta: &[f64]) -> f64 {
        let y = self.conjugate_argmax(theta);
        dot(theta, &y) - self.eval(&y)
    }

    pub fn gradient_range(&self) -> (Vec<f64>, Vec<f64>) {
        (
            vec![0.0; self.cap.len()],
            self.cap.iter().map(|c| 2.0 * (1.0 - c)).collect(),
        )
    }
}
