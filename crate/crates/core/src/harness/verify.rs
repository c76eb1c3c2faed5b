use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instances::{generate, GenParams, Instance, InstanceKind};
use crate::oracles::{brute_force_opt, fractional_opt, opt_delta_curve, packing_opt_sum, OracleOptions};
use crate::vectorspace::NormKind;

/// File extension of instance files.
pub const PACK_EXTENSION: &str = "osp.jsonl";

/// Largest T the self-check enumerates.
const MAX_VERIFY_T: usize = 8;

/// Relaxation grid: a short first step so the first chord tracks the right
/// derivative at 0.
const CURVE_GRID: [f64; 8] = [0.0, 1e-4, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub instances: usize,
    pub skipped: usize,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(msg());
        }
    }
}

/// Deterministic tiny instances covering every kind and both norms.
pub fn builtin_pack() -> Vec<(String, Instance)> {
    let kinds = [
        InstanceKind::Feasibility,
        InstanceKind::Covering,
        InstanceKind::Linear,
        InstanceKind::Packing,
        InstanceKind::Smooth,
        InstanceKind::Concave,
    ];
    let mut pack = Vec::new();
    for (ki, kind) in kinds.into_iter().enumerate() {
        for norm in [NormKind::MaxAbs, NormKind::Euclidean] {
            for seed in 0..2u64 {
                let t = 5 + (ki + seed as usize) % 4;
                let d = if seed == 0 { 2 } else { 1 + ki % 3 };
                let params = GenParams {
                    kind,
                    d,
                    horizon: t,
                    k: 2 + (seed as usize),
                    seed: 100 + seed,
                    norm,
                    band: 0.1,
                    budget: (kind == InstanceKind::Packing).then_some(t as f64 / 4.0),
                    ..GenParams::default()
                };
                let norm_name = match norm {
                    NormKind::MaxAbs => "maxabs",
                    NormKind::Euclidean => "euclidean",
                };
                let kind_name = serde_json::to_value(kind)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default();
                let name = format!("{kind_name}-{norm_name}-{seed}");
                pack.push((name, generate(&params).expect("pack parameters are valid")));
            }
        }
    }
    pack
}

/// Writes the built-in pack as instance files into `dir`.
pub fn write_pack(dir: &Path) -> Result<usize> {
    fs::create_dir_all(dir)?;
    let pack = builtin_pack();
    for (name, inst) in &pack {
        inst.write_file(&dir.join(format!("{name}.{PACK_EXTENSION}")))?;
    }
    Ok(pack.len())
}

/// Reads every instance file in `dir`, sorted by name.
pub fn load_pack(dir: &Path) -> Result<Vec<(String, Instance)>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(PACK_EXTENSION) || n.ends_with(&format!("{PACK_EXTENSION}.gz")))
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            Ok((name, Instance::read_file(&p)?))
        })
        .collect()
}

/// Oracle cross-checks on every instance with `T <= 8`:
/// the fractional optimum dominates brute force, the packing LP agrees with
/// the fractional oracle, and `OPT^delta` is nondecreasing and concave with
/// its slope at 0 matching the dual multiplier when the dual is solved
/// exactly.
pub fn verify_pack(pack: &[(String, Instance)], opts: &OracleOptions) -> Result<VerifyReport> {
    let mut rep = VerifyReport::default();
    for (name, inst) in pack {
        if inst.horizon() > MAX_VERIFY_T {
            rep.skipped += 1;
            continue;
        }
        rep.instances += 1;
        for delta in [0.0, 0.05, 0.2] {
            let brute = brute_force_opt(inst, delta)?;
            let frac = fractional_opt(inst, delta, opts)?;
            rep.check(!brute.feasible || frac.feasible, || {
                format!("{name}: integral solution exists at delta={delta} but fractional reports infeasible")
            });
            if brute.feasible && frac.feasible {
                rep.check(frac.value >= brute.value - 1e-6, || {
                    format!(
                        "{name}: fractional {} below brute force {} at delta={delta}",
                        frac.value, brute.value
                    )
                });
            }
        }
        if inst.kind() == InstanceKind::Packing {
            let sum = packing_opt_sum(inst, 1.0, opts)?;
            let frac = fractional_opt(inst, 0.0, opts)?;
            let per_step = sum.value / inst.horizon() as f64;
            rep.check((per_step - frac.value).abs() <= 1e-3, || {
                format!("{name}: packing LP {per_step} disagrees with fractional {}", frac.value)
            });
        }
        let curve = opt_delta_curve(inst, &CURVE_GRID, opts)?;
        let vals: Vec<f64> = curve.points.iter().map(|(_, r)| r.value).collect();
        if vals[0].is_finite() {
            for i in 1..vals.len() {
                rep.check(vals[i] >= vals[i - 1] - 1e-6, || {
                    format!(
                        "{name}: OPT^delta decreases between {} and {}",
                        CURVE_GRID[i - 1],
                        CURVE_GRID[i]
                    )
                });
            }
            for i in 2..vals.len() {
                let slope = (vals[i - 1] - vals[i - 2]) / (CURVE_GRID[i - 1] - CURVE_GRID[i - 2]);
                let bound = vals[i - 1] + slope * (CURVE_GRID[i] - CURVE_GRID[i - 1]) + 1e-6;
                rep.check(vals[i] <= bound, || {
                    format!("{name}: OPT^delta not concave at {}", CURVE_GRID[i])
                });
            }
            let exact = curve.points[..2].iter().all(|(_, r)| r.tolerance_achieved == 0.0);
            if let (true, Some(z), Some(cert)) = (exact, curve.z_star, curve.points[0].1.certificate.as_ref()) {
                rep.check((z - cert.lambda).abs() <= 0.05 * cert.lambda + 1e-6, || {
                    format!("{name}: slope {z} at 0 differs from dual multiplier {}", cert.lambda)
                });
            }
        }
    }
    Ok(rep)
}
