use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{generate, Instance, StreamMode};
use crate::oracles::{OracleOptions, OracleResult};

use super::{benchmark, run_experiment, ExperimentSpec};

/// One run of a sweep. The first seven columns are the stable contract;
/// the rest identify the configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub algo: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    pub regret1: Option<f64>,
    pub regret2: f64,
    pub ratio: Option<f64>,
    pub tau: usize,
    #[serde(rename = "B")]
    pub budget: Option<f64>,
    pub epsilon: Option<f64>,
    pub z: Option<f64>,
    pub instance_hash: String,
    pub config_hash: String,
    pub wall_ms: f64,
}

/// Worker pool sized by `OSTOC_THREADS` when set, otherwise by rayon's
/// default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("OSTOC_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("OSTOC_THREADS must be a positive integer, got {v:?}")))?;
        if n > 0 {
            builder = builder.num_threads(n);
        }
    }
    builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build worker pool: {e}")))
}

struct Task {
    spec: usize,
    instance: usize,
    seed: u64,
}

/// Expands the grid into per-point specs and instances, then runs every
/// seed on the worker pool from [`thread_pool`]. Rows come back in grid
/// order.
pub fn run_sweep(spec: &ExperimentSpec, opts: &OracleOptions) -> Result<Vec<SweepRow>> {
    run_sweep_on(spec, opts, &thread_pool()?)
}

pub fn run_sweep_on(spec: &ExperimentSpec, opts: &OracleOptions, pool: &rayon::ThreadPool) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    if spec.instance.is_some() && !(spec.horizons.is_empty() && spec.budget_ratios.is_empty()) {
        return Err(Error::InvalidParameter(
            "horizon and budget grids need generator parameters, not an instance file".into(),
        ));
    }
    if spec.horizons.contains(&0) {
        return Err(Error::InvalidParameter("horizons must be >= 1".into()));
    }
    let horizons: Vec<Option<usize>> = if spec.horizons.is_empty() {
        vec![None]
    } else {
        spec.horizons.iter().copied().map(Some).collect()
    };
    let ratios: Vec<Option<f64>> = if spec.budget_ratios.is_empty() {
        vec![None]
    } else {
        spec.budget_ratios.iter().copied().map(Some).collect()
    };
    let epsilons: Vec<Option<f64>> = if spec.epsilons.is_empty() {
        vec![spec.epsilon]
    } else {
        spec.epsilons.iter().copied().map(Some).collect()
    };

    let mut specs = Vec::new();
    let mut instances: Vec<Instance> = Vec::new();
    let mut tasks = Vec::new();
    for &t in &horizons {
        for &ratio in &ratios {
            let params = spec.generate.clone().map(|mut g| {
                if let Some(t) = t {
                    g.horizon = t;
                }
                if let Some(r) = ratio {
                    g.budget = Some(r * g.horizon as f64);
                }
                g
            });
            let shared = if spec.fresh_instances {
                None
            } else {
                let inst = match &params {
                    Some(p) => generate(p)?,
                    None => spec.load_instance()?,
                };
                instances.push(inst);
                Some(instances.len() - 1)
            };
            let mut fresh = Vec::new();
            if spec.fresh_instances {
                for &seed in &spec.seeds {
                    let inst = match &params {
                        Some(p) => generate(&crate::instances::GenParams {
                            seed: p.seed.wrapping_add(seed),
                            ..p.clone()
                        })?,
                        None => spec.load_instance()?,
                    };
                    instances.push(inst);
                    fresh.push(instances.len() - 1);
                }
            }
            for &eps in &epsilons {
                specs.push(ExperimentSpec {
                    epsilon: eps,
                    ..spec.clone()
                });
                for (i, &seed) in spec.seeds.iter().enumerate() {
                    tasks.push(Task {
                        spec: specs.len() - 1,
                        instance: shared.unwrap_or_else(|| fresh[i]),
                        seed,
                    });
                }
            }
        }
    }

    pool.install(|| {
        // Random-permutation runs share one benchmark per instance.
        let cached: Vec<Option<OracleResult>> = if spec.stream == StreamMode::Rp {
            instances
                .par_iter()
                .map(|inst| {
                    let algorithm = spec.algorithm_for(inst);
                    benchmark(inst, algorithm, opts).map(Some)
                })
                .collect::<Result<_>>()?
        } else {
            vec![None; instances.len()]
        };
        tasks
            .par_iter()
            .map(|task| {
                let inst = &instances[task.instance];
                let s = &specs[task.spec];
                let start = Instant::now();
                let out = run_experiment(s, inst, task.seed, cached[task.instance].as_ref(), opts)?;
                let m = &out.summary.metrics;
                Ok(SweepRow {
                    algo: out.summary.algorithm.name().to_string(),
                    horizon: out.summary.stream_length,
                    seed: task.seed,
                    regret1: m.regret1,
                    regret2: m.regret2,
                    ratio: m.ratio,
                    tau: m.tau,
                    budget: inst.budget(),
                    epsilon: s.epsilon,
                    z: out.summary.z.as_ref().map(|z| z.value),
                    instance_hash: out.summary.instance_hash,
                    config_hash: out.summary.config_hash,
                    wall_ms: start.elapsed().as_secs_f64() * 1e3,
                })
            })
            .collect()
    })
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<SweepRow>, _>>()?;
    Ok(rows)
}
