//! Norms, dual norms and dual-ball projections.
//!
//! Two primal norms are supported: the Euclidean norm (self-dual) and the
//! max-abs norm, whose dual is the sum-abs (L1) norm. Everything else in the
//! crate measures distances in one of these and keeps its dual iterates in the
//! matching dual ball.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Euclidean,
    MaxAbs,
}

impl NormKind {
    /// Primal norm of `v`.
    pub fn norm(self, v: &[f64]) -> f64 {
        norm(v, self)
    }

    /// Dual norm of `v`.
    pub fn dual_norm(self, v: &[f64]) -> f64 {
        dual_norm(v, self)
    }

    /// Primal norm of the all-ones vector in dimension `d`.
    pub fn ones_norm(self, d: usize) -> f64 {
        match self {
            NormKind::Euclidean => (d as f64).sqrt(),
            NormKind::MaxAbs => 1.0,
        }
    }
}

/// A finite real vector of dimension at least one.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        check_finite(&entries)?;
        Ok(Vector(entries))
    }

    pub fn zeros(d: usize) -> Self {
        Vector(vec![0.0; d.max(1)])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl<'de> Deserialize<'de> for Vector {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(de)?;
        Vector::new(raw).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64], k: NormKind) -> f64 {
    match k {
        NormKind::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormKind::MaxAbs => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

pub fn dual_norm(v: &[f64], k: NormKind) -> f64 {
    match k {
        NormKind::Euclidean => norm(v, NormKind::Euclidean),
        NormKind::MaxAbs => v.iter().map(|x| x.abs()).sum(),
    }
}

/// Euclidean projection of `theta` onto `{u : dual_norm(u, k) <= radius}`.
pub fn project_dual_ball(theta: &[f64], k: NormKind, radius: f64) -> Vec<f64> {
    let radius = radius.max(0.0);
    match k {
        NormKind::Euclidean => {
            let n = norm(theta, NormKind::Euclidean);
            if n <= radius {
                theta.to_vec()
            } else if radius == 0.0 {
                vec![0.0; theta.len()]
            } else {
                let s = radius / n;
                let out: Vec<f64> = theta.iter().map(|x| x * s).collect();
                shrink_into_ball(out, radius, |v| norm(v, NormKind::Euclidean))
            }
        }
        NormKind::MaxAbs => project_l1_ball(theta, radius),
    }
}

/// Sort-based soft-threshold projection onto the L1 ball.
pub fn project_l1_ball(theta: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = theta.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return theta.to_vec();
    }
    if radius == 0.0 {
        return vec![0.0; theta.len()];
    }
    let mut mags: Vec<f64> = theta.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - radius) / (i + 1) as f64;
        if m > t {
            tau = t;
        } else {
            break;
        }
    }
    let out: Vec<f64> = theta.iter().map(|&x| x.signum() * (x.abs() - tau).max(0.0)).collect();
    shrink_into_ball(out, radius, |v| dual_norm(v, NormKind::MaxAbs))
}

// Rounding can leave a projected point a few ulps outside the ball, which
// would break idempotence of the projection.
fn shrink_into_ball(mut v: Vec<f64>, radius: f64, measure: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut factor = 1.0 - f64::EPSILON;
    while measure(&v) > radius {
        for x in v.iter_mut() {
            *x *= factor;
        }
        factor *= factor;
    }
    v
}

/// Projection of `x` onto the box `[lo, hi]`.
pub fn clamp_box(x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| v.clamp(l, h))
        .collect()
}

/// Euclidean projection onto `{u >= 0, sum(u) <= 1}`.
pub fn project_simplex_with_origin(x: &[f64]) -> Vec<f64> {
    let pos: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    if pos.iter().sum::<f64>() <= 1.0 {
        return pos;
    }
    // On the face sum(u) = 1: standard simplex projection.
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (i + 1) as f64;
        if s > t {
            tau = t;
        } else {
            break;
        }
    }
    x.iter().map(|v| (v - tau).max(0.0)).collect()
}

pub fn add_scaled(x: &mut [f64], s: f64, y: &[f64]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a += s * b;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn norm_examples() {
        assert_eq!(norm(&[3.0, 4.0], NormKind::Euclidean), 5.0);
        assert_eq!(norm(&[0.2, -0.7], NormKind::MaxAbs), 0.7);
        assert!((norm(&[1.0, 1.0, 1.0], NormKind::Euclidean) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dual_norm_examples() {
        assert_eq!(dual_norm(&[1.0, 1.0], NormKind::MaxAbs), 2.0);
        assert!((dual_norm(&[0.6, 0.8], NormKind::Euclidean) - 1.0).abs() < 1e-15);
    }

    fn sample_unit_primal(rng: &mut ChaCha8Rng, d: usize, k: NormKind) -> Vec<f64> {
        match k {
            NormKind::MaxAbs => (0..d)
                .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.9..=1.0))
                .collect(),
            NormKind::Euclidean => {
                let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = norm(&u, NormKind::Euclidean).max(1e-12);
                u.iter().map(|x| x / n).collect()
            }
        }
    }

    #[test]
    fn dual_norm_matches_sampled_maximization() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in [NormKind::Euclidean, NormKind::MaxAbs] {
            for _ in 0..5 {
                let d = rng.gen_range(1..=3);
                let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let best = (0..10_000)
                    .map(|_| dot(&sample_unit_primal(&mut rng, d, k), &v))
                    .fold(f64::NEG_INFINITY, f64::max);
                let dn = dual_norm(&v, k);
                assert!(best <= dn + 1e-12);
                assert!((dn - best).abs() <= 0.02 * dn.max(1e-9), "{k:?} {dn} {best}");
            }
        }
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_dual_ball(&[0.1, 0.2], NormKind::Euclidean, 1.0), vec![0.1, 0.2]);
        let p = project_dual_ball(&[3.0, 4.0], NormKind::Euclidean, 1.0);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        let p = project_dual_ball(&[0.9, 0.3], NormKind::MaxAbs, 1.0);
        assert!((p[0] - 0.8).abs() < 1e-12 && (p[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn l1_projection_matches_grid_search() {
        // Brute force over a fine grid of the L1 ball.
        let theta = [0.9, 0.3];
        let n = 2000;
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for i in 0..=n {
            for j in 0..=n {
                let u = [-1.0 + 2.0 * i as f64 / n as f64, -1.0 + 2.0 * j as f64 / n as f64];
                if u[0].abs() + u[1].abs() > 1.0 + 1e-12 {
                    continue;
                }
                let dist = (u[0] - theta[0]).powi(2) + (u[1] - theta[1]).powi(2);
                if dist < best.0 {
                    best = (dist, u);
                }
            }
        }
        let p = project_l1_ball(&theta, 1.0);
        assert!((p[0] - best.1[0]).abs() <= 1e-3 && (p[1] - best.1[1]).abs() <= 1e-3);
    }

    #[test]
    fn vector_rejects_non_finite() {
        assert!(matches!(
            Vector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(Vector::new(vec![]).is_err());
        assert!(serde_json::from_str::<Vector>("[1.0, 2.0]").is_ok());
    }

    #[test]
    fn simplex_with_origin_projection() {
        assert_eq!(project_simplex_with_origin(&[0.2, -0.1]), vec![0.2, 0.0]);
        let p = project_simplex_with_origin(&[1.0, 1.0]);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    fn kind() -> impl Strategy<Value = NormKind> {
        prop_oneof![Just(NormKind::Euclidean), Just(NormKind::MaxAbs)]
    }

    proptest! {
        #[test]
        fn holder_inequality(
            k in kind(),
            uv in (1usize..6).prop_flat_map(|d| (
                prop::collection::vec(-5.0f64..5.0, d),
                prop::collection::vec(-5.0f64..5.0, d),
            )),
        ) {
            let (u, v) = uv;
            prop_assert!(dot(&u, &v) <= norm(&u, k) * dual_norm(&v, k) + 1e-12);
        }

        #[test]
        fn projection_idempotent_and_feasible(
            k in kind(),
            theta in prop::collection::vec(-5.0f64..5.0, 1..6),
            radius in 0.0f64..3.0,
        ) {
            let p = project_dual_ball(&theta, k, radius);
            prop_assert!(dual_norm(&p, k) <= radius + 1e-12);
            let pp = project_dual_ball(&p, k, radius);
            prop_assert_eq!(pp, p);
        }
    }
}
