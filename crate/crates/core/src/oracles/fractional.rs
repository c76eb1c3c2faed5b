use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::Instance;
use crate::objectives::{ObjectiveKind, Piece};
use crate::vectorspace::NormKind;

use super::solver::{minimize, Curved, Problem, SolveOptions};
use super::{DualCertificate, OracleMethod, OracleResult};

/// Values below this on the homogeneous feasibility function prove
/// infeasibility.
const INFEASIBLE_BELOW: f64 = -1e-10;

fn check_delta(delta: f64) -> Result<()> {
    if delta >= 0.0 && !delta.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("delta must be >= 0, got {delta}")))
    }
}

/// Adds `h_S(mu) + delta * ||mu||_*` for `mu = x[offset..offset + d]`.
fn add_set_terms(p: &mut Problem, instance: &Instance, offset: usize, delta: f64) {
    let n = p.dim();
    let d = instance.d();
    let set = instance.set();
    let unit = |j: usize, s: f64| {
        let mut a = vec![0.0; n];
        a[offset + j] = s;
        a
    };
    for j in 0..d {
        p.add_block([(unit(j, set.upper()[j]), 0.0), (unit(j, set.lower()[j]), 0.0)]);
    }
    if delta > 0.0 {
        match set.distance_norm() {
            // The dual of the max-abs norm is l1, which splits per coordinate.
            NormKind::MaxAbs => {
                for j in 0..d {
                    p.add_block([(unit(j, delta), 0.0), (unit(j, -delta), 0.0)]);
                }
            }
            NormKind::Euclidean => p.add_curved(Curved::Norm2 {
                start: offset,
                len: d,
                weight: delta,
            }),
        }
    }
}

/// Adds `(-f)*(phi)` for `phi = x[0..d]`: piecewise-linear pieces become max
/// blocks, curved ones stay as conjugate terms.
fn add_conjugate_terms(p: &mut Problem, instance: &Instance) {
    let n = p.dim();
    let d = instance.d();
    let pieces: Vec<Piece> = match instance.objective().kind() {
        ObjectiveKind::Zero | ObjectiveKind::LinearReward => return,
        ObjectiveKind::Separable { pieces } => pieces.clone(),
        ObjectiveKind::Quadratic { a, x0, beta } => (0..d)
            .map(|j| Piece::Quadratic {
                slope: a[j],
                center: x0[j],
                beta: *beta,
            })
            .collect(),
    };
    for (j, piece) in pieces.into_iter().enumerate() {
        let unit = |s: f64| {
            let mut a = vec![0.0; n];
            a[j] = s;
            a
        };
        match piece {
            // max over x in {0, 1} of (phi + s) x
            Piece::Linear { slope } => p.add_block([(vec![0.0; n], 0.0), (unit(1.0), slope)]),
            // max over x in {0, cap, 1} of phi x + s min(x, cap)
            Piece::Capped { slope, cap } => {
                p.add_block([(vec![0.0; n], 0.0), (unit(cap), slope * cap), (unit(1.0), slope * cap)])
            }
            curved => p.add_curved(Curved::Conj { var: j, piece: curved }),
        }
    }
}

/// `min over |mu_i| <= 1` of `h_S(mu) + delta ||mu||_* + mean_t max_o (-mu . v_o)`.
/// The function is positively homogeneous, so its minimum is 0 exactly when
/// the fractional problem is feasible at `delta`.
fn feasibility_problem(instance: &Instance, delta: f64) -> Problem {
    let d = instance.d();
    let inv_t = 1.0 / instance.horizon() as f64;
    let mut p = Problem::new(d);
    add_set_terms(&mut p, instance, 0, delta);
    for req in instance.requests() {
        p.add_block(req.opts.iter().map(|o| (o.v.iter().map(|v| -v * inv_t).collect(), 0.0)));
    }
    p.with_bound(1.0)
}

/// Whether some mixture of the options has its average within `delta` of S.
pub fn is_feasible(instance: &Instance, delta: f64, opts: &SolveOptions) -> Result<bool> {
    check_delta(delta)?;
    let sol = minimize(&feasibility_problem(instance, delta), opts, None);
    Ok(sol.value >= INFEASIBLE_BELOW)
}

/// Fractional optimum of `f(avg v) + avg r` subject to `d(avg v, S) <= delta`,
/// computed as the minimum of its dual
///
/// `(-f)*(phi) + h_S(mu) + delta ||mu||_* + mean_t max_o (r_o - (phi + mu) . v_o)`
///
/// with `lambda = ||mu||_*` and `theta = mu / lambda`. Among optimal duals
/// the one with the smallest `lambda` is returned.
pub fn fractional_opt(instance: &Instance, delta: f64, opts: &SolveOptions) -> Result<OracleResult> {
    check_delta(delta)?;
    if !is_feasible(instance, delta, opts)? {
        return Ok(OracleResult::infeasible(OracleMethod::DualSubgradient));
    }
    let d = instance.d();
    let has_phi = !instance.objective().is_trivial();
    let phi_len = if has_phi { d } else { 0 };
    let n = phi_len + d;
    let inv_t = 1.0 / instance.horizon() as f64;

    let mut p = Problem::new(n);
    add_conjugate_terms(&mut p, instance);
    add_set_terms(&mut p, instance, phi_len, delta);
    for req in instance.requests() {
        p.add_block(req.opts.iter().map(|o| {
            let mut a = vec![0.0; n];
            for j in 0..d {
                if has_phi {
                    a[j] = -o.v[j] * inv_t;
                }
                a[phi_len + j] = -o.v[j] * inv_t;
            }
            (a, o.reward() * inv_t)
        }));
    }

    let dual_norm = instance.set().distance_norm();
    let lambda_of = move |x: &[f64]| dual_norm.dual_norm(&x[phi_len..]);
    let sol = minimize(&p, opts, Some(&lambda_of));
    let mu = &sol.x[phi_len..];
    let lambda = lambda_of(&sol.x);
    let theta = if lambda > 0.0 {
        mu.iter().map(|m| m / lambda).collect()
    } else {
        vec![0.0; d]
    };
    Ok(OracleResult {
        value: sol.value,
        feasible: true,
        certificate: Some(DualCertificate {
            lambda,
            phi: if has_phi { sol.x[..d].to_vec() } else { vec![0.0; d] },
            theta,
        }),
        method: OracleMethod::DualSubgradient,
        tolerance_achieved: if sol.exact { 0.0 } else { sol.tolerance },
        choice: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaCurve {
    pub points: Vec<(f64, OracleResult)>,
    /// Finite-difference slope between the first two grid points when the
    /// grid starts at 0 and both are feasible.
    pub z_star: Option<f64>,
}

/// `OPT^delta` along an ascending grid.
pub fn opt_delta_curve(instance: &Instance, grid: &[f64], opts: &SolveOptions) -> Result<DeltaCurve> {
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("delta grid must be ascending".into()));
    }
    let points = grid
        .iter()
        .map(|&delta| Ok((delta, fractional_opt(instance, delta, opts)?)))
        .collect::<Result<Vec<_>>>()?;
    let z_star = match points.as_slice() {
        [(d0, a), (d1, b), ..] if *d0 == 0.0 && *d1 > 0.0 && a.feasible && b.feasible => Some((b.value - a.value) / d1),
        _ => None,
    };
    Ok(DeltaCurve { points, z_star })
}

/// Phased estimate of Z from a prefix of `T_r` requests:
/// `(OPT^{4 gamma} - OPT^{gamma}) / gamma + 2 L` with
/// `gamma = ||1_d|| sqrt(ln(d T_r) / T_r)`.
pub fn estimate_z_phased(prefix: &Instance, lipschitz: f64, norm: NormKind, opts: &SolveOptions) -> Result<f64> {
    let t_r = prefix.horizon();
    if t_r < 2 {
        return Err(Error::InvalidParameter(format!(
            "phased estimate needs T_r >= 2, got {t_r}"
        )));
    }
    let d = prefix.d();
    let gamma = norm.ones_norm(d) * ((d * t_r) as f64).ln().max(0.0).sqrt() / (t_r as f64).sqrt();
    let wide = fractional_opt(prefix, 4.0 * gamma, opts)?;
    let narrow = fractional_opt(prefix, gamma, opts)?;
    if !wide.feasible {
        return Err(Error::Infeasible(format!(
            "prefix of {t_r} requests is infeasible at delta = {}",
            4.0 * gamma
        )));
    }
    if !narrow.feasible {
        return Err(Error::Infeasible(format!(
            "prefix of {t_r} requests is infeasible at delta = {gamma}"
        )));
    }
    Ok((wide.value - narrow.value) / gamma + 2.0 * lipschitz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_sets::ConvexSet;
    use crate::instances::{generate, GenParams, InstanceKind, OptionItem, Request};
    use crate::objectives::Objective;
    use crate::oracles::{brute_force_opt, objective_value};

    fn tiny(kind: InstanceKind, seed: u64, norm: NormKind) -> Instance {
        generate(&GenParams {
            kind,
            d: 2,
            horizon: 6,
            k: 2,
            seed,
            norm,
            band: 0.1,
            ..GenParams::default()
        })
        .unwrap()
    }

    /// Primal oracle for two requests with two options each: grid over both
    /// mixing weights.
    fn grid_primal(inst: &Instance, delta: f64, steps: usize) -> f64 {
        let reqs = inst.requests();
        assert_eq!(reqs.len(), 2);
        let mut best = f64::NEG_INFINITY;
        for i in 0..=steps {
            for j in 0..=steps {
                let w = [i as f64 / steps as f64, j as f64 / steps as f64];
                let mut avg = vec![0.0; inst.d()];
                let mut rew = 0.0;
                for (req, &wi) in reqs.iter().zip(&w) {
                    let (a, b) = (&req.opts[0], &req.opts[1]);
                    for ((x, va), vb) in avg.iter_mut().zip(&a.v).zip(&b.v) {
                        *x += 0.5 * (wi * va + (1.0 - wi) * vb);
                    }
                    rew += 0.5 * (wi * a.reward() + (1.0 - wi) * b.reward());
                }
                if inst.set().distance(&avg) <= delta + 1e-12 {
                    best = best.max(objective_value(inst, &avg, rew));
                }
            }
        }
        best
    }

    #[test]
    fn zero_objective_feasible_has_value_zero() {
        for seed in 0..5 {
            let inst = tiny(InstanceKind::Feasibility, seed, NormKind::MaxAbs);
            let r = fractional_opt(&inst, 0.0, &SolveOptions::default()).unwrap();
            assert!(r.feasible);
            assert!(r.value.abs() < 1e-12, "{}", r.value);
            assert!(r.certificate.unwrap().lambda.is_finite());
        }
    }

    #[test]
    fn infeasible_at_zero_feasible_when_relaxed() {
        let set = ConvexSet::boxed(vec![0.8, 0.0], vec![1.0, 1.0], NormKind::MaxAbs).unwrap();
        let reqs = vec![
            Request::new(vec![
                OptionItem::new(vec![0.1, 0.5], None),
                OptionItem::new(vec![0.5, 0.5], None),
            ]),
            Request::new(vec![OptionItem::new(vec![0.3, 0.2], None)]),
        ];
        let inst = Instance::new(InstanceKind::Feasibility, set, Objective::zero(), None, reqs).unwrap();
        let opts = SolveOptions::default();
        // Best average first coordinate is 0.4, distance 0.4.
        assert!(!is_feasible(&inst, 0.39, &opts).unwrap());
        assert!(is_feasible(&inst, 0.4, &opts).unwrap());
        let r = fractional_opt(&inst, 0.3, &opts).unwrap();
        assert!(!r.feasible && r.value == f64::NEG_INFINITY);
    }

    #[test]
    fn dominates_brute_force() {
        for kind in [
            InstanceKind::Concave,
            InstanceKind::Linear,
            InstanceKind::Feasibility,
            InstanceKind::Packing,
            InstanceKind::Covering,
            InstanceKind::Smooth,
        ] {
            for norm in [NormKind::MaxAbs, NormKind::Euclidean] {
                for seed in 0..4 {
                    let inst = tiny(kind, seed, norm);
                    for delta in [0.0, 0.02, 0.1, 5.0] {
                        let b = brute_force_opt(&inst, delta).unwrap();
                        let f = fractional_opt(&inst, delta, &SolveOptions::default()).unwrap();
                        if b.feasible {
                            assert!(f.feasible);
                            assert!(
                                f.value >= b.value - 1e-6,
                                "{kind:?} {norm:?} {seed} {delta}: {} < {}",
                                f.value,
                                b.value
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn vacuous_constraint_matches_brute_force_on_linear_rewards() {
        // With a linear objective the best mixture is a vertex.
        for seed in 0..10 {
            let inst = tiny(InstanceKind::Linear, seed, NormKind::MaxAbs);
            let b = brute_force_opt(&inst, 10.0).unwrap();
            let f = fractional_opt(&inst, 10.0, &SolveOptions::default()).unwrap();
            assert!((f.value - b.value).abs() < 1e-4, "{} vs {}", f.value, b.value);
        }
    }

    #[test]
    fn matches_primal_grid_on_two_requests() {
        for kind in [InstanceKind::Concave, InstanceKind::Smooth, InstanceKind::Linear] {
            for norm in [NormKind::MaxAbs, NormKind::Euclidean] {
                for seed in 0..3 {
                    let full = tiny(kind, seed, norm);
                    let inst = full.with_requests(full.requests()[..2].to_vec()).unwrap();
                    for delta in [0.05, 0.2, 3.0] {
                        let grid = grid_primal(&inst, delta, 400);
                        let f = fractional_opt(&inst, delta, &SolveOptions::default()).unwrap();
                        if grid.is_finite() {
                            assert!(
                                f.value >= grid - 1e-6,
                                "{kind:?} {norm:?} {seed} {delta}: {} < {grid}",
                                f.value
                            );
                            assert!(
                                f.value <= grid + 5e-3,
                                "{kind:?} {norm:?} {seed} {delta}: {} > {grid}",
                                f.value
                            );
                        }
                    }
                }
            }
        }
    }

    /// Same requests with a piecewise-linear objective, so the dual is
    /// solved exactly.
    fn capped(inst: &Instance) -> Instance {
        let obj = Objective::new(
            ObjectiveKind::Separable {
                pieces: vec![Piece::Capped { slope: 1.0, cap: 0.4 }, Piece::Linear { slope: 0.5 }],
            },
            NormKind::MaxAbs,
        )
        .unwrap();
        Instance::new(
            InstanceKind::Concave,
            inst.set().clone(),
            obj,
            None,
            inst.requests().to_vec(),
        )
        .unwrap()
    }

    /// Eight points with a short first step so the first chord approximates
    /// the right derivative at 0.
    pub(crate) const CURVE_GRID: [f64; 8] = [0.0, 1e-4, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06];

    /// Nondecreasing, and every point below the extension of the previous
    /// chord, both within 1e-6.
    pub(crate) fn assert_monotone_concave(grid: &[f64], vals: &[f64]) {
        for w in vals.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "{vals:?}");
        }
        for i in 2..vals.len() {
            let slope = (vals[i - 1] - vals[i - 2]) / (grid[i - 1] - grid[i - 2]);
            assert!(
                vals[i] <= vals[i - 1] + slope * (grid[i] - grid[i - 1]) + 1e-6,
                "{vals:?}"
            );
        }
    }

    fn check_curve(inst: &Instance, exact: bool) -> bool {
        let curve = opt_delta_curve(inst, &CURVE_GRID, &SolveOptions::default()).unwrap();
        let vals: Vec<f64> = curve.points.iter().map(|(_, r)| r.value).collect();
        if !vals[0].is_finite() {
            return false;
        }
        assert_monotone_concave(&CURVE_GRID, &vals);
        let lambda = curve.points[0].1.certificate.as_ref().unwrap().lambda;
        let z = curve.z_star.unwrap();
        if exact {
            // The right derivative at 0 is the smallest optimal lambda.
            assert!(z <= lambda + 1e-6, "slope {z} above lambda {lambda}");
            assert!(
                (z - lambda).abs() <= 0.05 * lambda + 1e-6,
                "slope {z} vs lambda {lambda} {vals:?}"
            );
        } else {
            assert!(z <= 1.05 * lambda + 1e-6, "slope {z} above lambda {lambda}");
        }
        true
    }

    #[test]
    fn curve_is_monotone_concave_and_slope_matches_lambda() {
        let mut checked = 0;
        for seed in 0..10 {
            let inst = tiny(InstanceKind::Concave, seed, NormKind::MaxAbs);
            if check_curve(&capped(&inst), true) {
                checked += 1;
            }
            check_curve(&inst, false);
        }
        assert!(checked >= 5);
    }

    #[test]
    fn phased_estimate_on_flat_and_feasibility_prefixes() {
        let opts = SolveOptions::default();
        let inst = tiny(InstanceKind::Feasibility, 3, NormKind::MaxAbs);
        let z = estimate_z_phased(&inst, 0.0, NormKind::MaxAbs, &opts).unwrap();
        assert!(z >= 0.0);

        // f identically zero through a zero-slope piece: Z = 2L = 0.
        let obj = Objective::new(
            ObjectiveKind::Separable {
                pieces: vec![Piece::Linear { slope: 0.0 }, Piece::Linear { slope: 0.0 }],
            },
            NormKind::MaxAbs,
        )
        .unwrap();
        let flat = Instance::new(
            InstanceKind::Concave,
            inst.set().clone(),
            obj,
            None,
            inst.requests().to_vec(),
        )
        .unwrap();
        let z = estimate_z_phased(&flat, 0.0, NormKind::MaxAbs, &opts).unwrap();
        assert!(z.abs() < 1e-9);

        let short = inst.with_requests(inst.requests()[..1].to_vec()).unwrap();
        assert!(estimate_z_phased(&short, 0.0, NormKind::MaxAbs, &opts).is_err());
    }

    #[test]
    fn phased_estimate_on_two_step_prefix_matches_brute_force() {
        // Singleton requests: the integral and fractional problems coincide.
        let set = ConvexSet::boxed(vec![0.0, 0.0], vec![0.3, 0.3], NormKind::MaxAbs).unwrap();
        let obj = Objective::new(
            ObjectiveKind::Separable {
                pieces: vec![Piece::Linear { slope: 1.0 }, Piece::Log { weight: 1.0 }],
            },
            NormKind::MaxAbs,
        )
        .unwrap();
        let reqs = vec![
            Request::new(vec![OptionItem::new(vec![0.9, 0.1], None)]),
            Request::new(vec![OptionItem::new(vec![0.5, 0.2], None)]),
        ];
        let inst = Instance::new(InstanceKind::Concave, set, obj, None, reqs).unwrap();
        let opts = SolveOptions::default();
        let gamma = (2.0f64 * 2.0).ln().sqrt() / 2f64.sqrt();
        let b_wide = brute_force_opt(&inst, 4.0 * gamma).unwrap();
        let b_narrow = brute_force_opt(&inst, gamma).unwrap();
        let l = inst.objective().lipschitz();
        let expected = (b_wide.value - b_narrow.value) / gamma + 2.0 * l;
        let z = estimate_z_phased(&inst, l, NormKind::MaxAbs, &opts).unwrap();
        assert!((z - expected).abs() < 1e-6, "{z} vs {expected}");

        // With two options per step the fractional values dominate.
        let reqs = vec![
            Request::new(vec![
                OptionItem::new(vec![0.9, 0.1], None),
                OptionItem::new(vec![0.1, 0.9], None),
            ]),
            Request::new(vec![
                OptionItem::new(vec![0.5, 0.2], None),
                OptionItem::new(vec![0.0, 0.0], None),
            ]),
        ];
        let inst = inst.with_requests(reqs).unwrap();
        for delta in [gamma, 4.0 * gamma] {
            let f = fractional_opt(&inst, delta, &opts).unwrap();
            let b = brute_force_opt(&inst, delta).unwrap();
            assert!(f.value >= b.value - 1e-9);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let inst = tiny(InstanceKind::Concave, 0, NormKind::MaxAbs);
        let opts = SolveOptions::default();
        assert!(fractional_opt(&inst, -1.0, &opts).is_err());
        assert!(opt_delta_curve(&inst, &[0.1, 0.0], &opts).is_err());
    }
}
