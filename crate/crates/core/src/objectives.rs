//! Concave objectives `f` together with the conjugate `(-f)*` the primal-dual
//! algorithms linearize through.
//!
//! `(-f)*(phi) = max_{x in [0,1]^d} phi . x + f(x)`. Every built-in variant is
//! separable, so the conjugate and its maximizer are computed one coordinate
//! at a time: closed form where one exists, golden-section search otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectorspace::{check_finite, dual_norm, NormKind};

/// Tolerance used when checking that a point lies in the unit box.
const DOMAIN_SLACK: f64 = 1e-9;

/// One concave function of a single coordinate on `[0,1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Piece {
    /// `slope * x`
    Linear { slope: f64 },
    /// `slope * min(x, cap)` with `slope >= 0`
    Capped { slope: f64, cap: f64 },
    /// `weight * ln(1 + x)` with `weight >= 0`
    Log { weight: f64 },
    /// `slope * x - beta/2 * (x - center)^2` with `beta > 0`
    Quadratic { slope: f64, center: f64, beta: f64 },
}

impl Piece {
    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        match *self {
            Piece::Linear { slope } if !slope.is_finite() => bad("linear slope must be finite"),
            Piece::Capped { slope, cap } if !(slope.is_finite() && slope >= 0.0 && (0.0..=1.0).contains(&cap)) => {
                bad("capped piece needs slope >= 0 and cap in [0,1]")
            }
            Piece::Log { weight } if !(weight.is_finite() && weight >= 0.0) => bad("log weight must be >= 0"),
            Piece::Quadratic { slope, center, beta }
                if !(slope.is_finite() && center.is_finite() && beta.is_finite() && beta > 0.0) =>
            {
                bad("quadratic piece needs beta > 0")
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Piece::Linear { slope } => slope * x,
            Piece::Capped { slope, cap } => slope * x.min(cap),
            Piece::Log { weight } => weight * x.ln_1p(),
            Piece::Quadratic { slope, center, beta } => slope * x - 0.5 * beta * (x - center).powi(2),
        }
    }

    /// Bound on `|p'(x)|` over `[0,1]`.
    pub fn derivative_bound(&self) -> f64 {
        match *self {
            Piece::Linear { slope } => slope.abs(),
            Piece::Capped { slope, .. } => slope,
            Piece::Log { weight } => weight,
            Piece::Quadratic { .. } => {
                let (lo, hi) = self.derivative_range().expect("quadratic is smooth");
                lo.abs().max(hi.abs())
            }
        }
    }

    pub fn derivative(&self, x: f64) -> Option<f64> {
        match *self {
            Piece::Linear { slope } => Some(slope),
            Piece::Capped { .. } => None,
            Piece::Log { weight } => Some(weight / (1.0 + x)),
            Piece::Quadratic { slope, center, beta } => Some(slope - beta * (x - center)),
        }
    }

    /// `[min p', max p']` over `[0,1]`; `None` for non-differentiable pieces.
    pub fn derivative_range(&self) -> Option<(f64, f64)> {
        match *self {
            Piece::Linear { slope } => Some((slope, slope)),
            Piece::Capped { .. } => None,
            Piece::Log { weight } => Some((weight / 2.0, weight)),
            Piece::Quadratic { slope, center, beta } => Some((slope - beta * (1.0 - center), slope + beta * center)),
        }
    }

    /// Bound on `|p''|`; `None` when the piece is not differentiable.
    pub fn smoothness(&self) -> Option<f64> {
        match *self {
            Piece::Linear { .. } => Some(0.0),
            Piece::Capped { .. } => None,
            Piece::Log { weight } => Some(weight),
            Piece::Quadratic { beta, .. } => Some(beta),
        }
    }

    /// Smallest maximizer of `phi * x + p(x)` over `[0,1]`.
    pub fn conjugate_argmax(&self, phi: f64) -> f64 {
        match *self {
            Piece::Linear { slope } => {
                if phi + slope > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Piece::Capped { cap, .. } => {
                let mut best = (0.0, self.eval(0.0));
                for x in [cap, 1.0] {
                    let val = phi * x + self.eval(x);
                    if val > best.1 {
                        best = (x, val);
                    }
                }
                best.0
            }
            Piece::Quadratic { slope, center, beta } => (center + (phi + slope) / beta).clamp(0.0, 1.0),
            Piece::Log { weight } => {
                if weight == 0.0 {
                    return if phi > 0.0 { 1.0 } else { 0.0 };
                }
                golden_section_max(|x| phi * x + self.eval(x), 0.0, 1.0)
            }
        }
    }

    pub fn conjugate(&self, phi: f64) -> f64 {
        let x = self.conjugate_argmax(phi);
        phi * x + self.eval(x)
    }
}

/// Maximizes a concave function on `[lo, hi]` to an interval width of 1e-9.
fn golden_section_max(g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..200 {
        if b - a <= 1e-9 {
            break;
        }
        if gc >= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - inv_phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + inv_phi * (b - a);
            gd = g(d);
        }
    }
    let mid = 0.5 * (a + b);
    // The interval may have collapsed onto an endpoint of the domain.
    let mut best = (mid, g(mid));
    for x in [lo, hi] {
        let v = g(x);
        if v > best.1 || (v == best.1 && x < best.0) {
            best = (x, v);
        }
    }
    best.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Feasibility: no objective.
    Zero,
    /// Each option carries its own reward; `f` itself is identically zero.
    LinearReward,
    Separable {
        pieces: Vec<Piece>,
    },
    /// `a . x - beta/2 * ||x - x0||^2`
    Quadratic {
        a: Vec<f64>,
        x0: Vec<f64>,
        beta: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub norm: NormKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObjectiveSpec", into = "ObjectiveSpec")]
pub struct Objective {
    kind: ObjectiveKind,
    norm: NormKind,
    lipschitz: f64,
    smoothness: Option<f64>,
}

impl TryFrom<ObjectiveSpec> for Objective {
    type Error = Error;

    fn try_from(spec: ObjectiveSpec) -> Result<Self> {
        Objective::new(spec.kind, spec.norm)
    }
}

impl From<Objective> for ObjectiveSpec {
    fn from(o: Objective) -> Self {
        ObjectiveSpec {
            kind: o.kind,
            norm: o.norm,
        }
    }
}

impl Objective {
    /// Builds an objective whose Lipschitz constant is measured in `norm`.
    pub fn new(kind: ObjectiveKind, norm: NormKind) -> Result<Self> {
        let (lipschitz, smoothness) = match &kind {
            ObjectiveKind::Zero | ObjectiveKind::LinearReward => (0.0, None),
            ObjectiveKind::Separable { pieces } => {
                if pieces.is_empty() {
                    return Err(Error::InvalidParameter("no pieces".into()));
                }
                for p in pieces {
                    p.validate()?;
                }
                let bounds: Vec<f64> = pieces.iter().map(Piece::derivative_bound).collect();
                let beta = pieces
                    .iter()
                    .map(Piece::smoothness)
                    .try_fold(0.0_f64, |m, b| b.map(|b| m.max(b)));
                (dual_norm(&bounds, norm), beta.filter(|b| *b > 0.0))
            }
            ObjectiveKind::Quadratic { a, x0, beta } => {
                if a.len() != x0.len() || a.is_empty() {
                    return Err(Error::Dimension {
                        expected: a.len(),
                        got: x0.len(),
                    });
                }
                check_finite(a)?;
                check_finite(x0)?;
                if !(beta.is_finite() && *beta > 0.0) {
                    return Err(Error::InvalidParameter("beta must be > 0".into()));
                }
                let bounds: Vec<f64> = a
                    .iter()
                    .zip(x0)
                    .map(|(&aj, &cj)| (aj - beta * (1.0 - cj)).abs().max((aj + beta * cj).abs()))
                    .collect();
                (dual_norm(&bounds, norm), Some(*beta))
            }
        };
        Ok(Objective {
            kind,
            norm,
            lipschitz,
            smoothness,
        })
    }

    pub fn zero() -> Self {
        Objective::new(ObjectiveKind::Zero, NormKind::Euclidean).expect("zero objective")
    }

    pub fn linear_reward() -> Self {
        Objective::new(ObjectiveKind::LinearReward, NormKind::Euclidean).expect("reward objective")
    }

    pub fn kind(&self) -> &ObjectiveKind {
        &self.kind
    }

    pub fn norm(&self) -> NormKind {
        self.norm
    }

    /// Bound on the dual norm of every supergradient of `f` on `[0,1]^d`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn smoothness(&self) -> Option<f64> {
        self.smoothness
    }

    /// True when `f` is identically zero (feasibility or reward-driven).
    pub fn is_trivial(&self) -> bool {
        matches!(self.kind, ObjectiveKind::Zero | ObjectiveKind::LinearReward)
    }

    /// True when every breakpoint structure is piecewise linear.
    pub fn is_piecewise_linear(&self) -> bool {
        match &self.kind {
            ObjectiveKind::Zero | ObjectiveKind::LinearReward => true,
            ObjectiveKind::Separable { pieces } => pieces
                .iter()
                .all(|p| matches!(p, Piece::Linear { .. } | Piece::Capped { .. })),
            ObjectiveKind::Quadratic { .. } => false,
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            ObjectiveKind::Zero | ObjectiveKind::LinearReward => None,
            ObjectiveKind::Separable { pieces } => Some(pieces.len()),
            ObjectiveKind::Quadratic { a, .. } => Some(a.len()),
        }
    }

    fn check_domain(x: &[f64]) -> Result<()> {
        check_finite(x)?;
        match x.iter().position(|v| *v < -DOMAIN_SLACK || *v > 1.0 + DOMAIN_SLACK) {
            Some(index) => Err(Error::Domain { index, value: x[index] }),
            None => Ok(()),
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        match self.dim() {
            Some(expected) if expected != d => Err(Error::Dimension { expected, got: d }),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Self::check_domain(x)?;
        self.check_dim(x.len())?;
        Ok(match &self.kind {
            ObjectiveKind::Zero | ObjectiveKind::LinearReward => 0.0,
            ObjectiveKind::Separable { pieces } => pieces.iter().zip(x).map(|(p, &v)| p.eval(v)).sum(),
            ObjectiveKind::Quadratic { a, x0, beta } => {
                let lin: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
                let sq: f64 = x.iter().zip(x0).map(|(xi, ci)| (xi - ci).powi(2)).sum();
                lin - 0.5 * beta * sq
            }
        })
    }

    /// `(-f)*(phi) = max_{x in [0,1]^d} phi . x + f(x)`.
    pub fn conjugate_neg(&self, phi: &[f64]) -> f64 {
        let x = self.conjugate_neg_argmax(phi);
        let fx = self.eval(&x).unwrap_or(0.0);
        phi.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + fx
    }

    /// Coordinatewise-smallest maximizer of `phi . x + f(x)` over `[0,1]^d`.
    pub fn conjugate_neg_argmax(&self, phi: &[f64]) -> Vec<f64> {
        match &self.kind {
            ObjectiveKind::Zero | ObjectiveKind::LinearReward => {
                phi.iter().map(|&p| if p > 0.0 { 1.0 } else { 0.0 }).collect()
            }
            ObjectiveKind::Separable { pieces } => {
                pieces.iter().zip(phi).map(|(p, &ph)| p.conjugate_argmax(ph)).collect()
            }
            ObjectiveKind::Quadratic { a, x0, beta } => phi
                .iter()
                .zip(a.iter().zip(x0))
                .map(|(&ph, (&aj, &cj))| (cj + (ph + aj) / beta).clamp(0.0, 1.0))
                .collect(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Self::check_domain(x)?;
        self.check_dim(x.len())?;
        match &self.kind {
            ObjectiveKind::Zero | ObjectiveKind::LinearReward => Ok(vec![0.0; x.len()]),
            ObjectiveKind::Separable { pieces } => pieces
                .iter()
                .zip(x)
                .map(|(p, &v)| {
                    p.derivative(v)
                        .ok_or_else(|| Error::UnsupportedVariant("capped piece".into()))
                })
                .collect(),
            ObjectiveKind::Quadratic { a, x0, beta } => Ok(a
                .iter()
                .zip(x0.iter().zip(x))
                .map(|(&aj, (&cj, &xj))| aj - beta * (xj - cj))
                .collect()),
        }
    }

    /// Coordinatewise bounds of `{grad f(x) : x in [0,1]^d}` in dimension `d`.
    pub fn gradient_range_box(&self, d: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_dim(d)?;
        match &self.kind {
            ObjectiveKind::Zero | ObjectiveKind::LinearReward => Ok((vec![0.0; d], vec![0.0; d])),
            ObjectiveKind::Separable { pieces } => {
                let mut lo = Vec::with_capacity(d);
                let mut hi = Vec::with_capacity(d);
                for p in pieces {
                    let (l, h) = p
                        .derivative_range()
                        .ok_or_else(|| Error::UnsupportedVariant("non-differentiable piece".into()))?;
                    lo.push(l);
                    hi.push(h);
                }
                Ok((lo, hi))
            }
            ObjectiveKind::Quadratic { a, x0, beta } => Ok((
                a.iter().zip(x0).map(|(aj, cj)| aj - beta * (1.0 - cj)).collect(),
                a.iter().zip(x0).map(|(aj, cj)| aj + beta * cj).collect(),
            )),
        }
    }
}
