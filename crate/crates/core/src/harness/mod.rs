//! Experiment plumbing: configuration, Z resolution, benchmarks, metrics,
//! trace and summary files, sweeps, reports and the oracle self-check.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algorithms::{self, Algorithm, RunConfig, RunTrace};
use crate::error::{Error, Result};
use crate::instances::{generate, sha256_hex, stream, GenParams, Instance, InstanceKind, StreamMode, StreamOrder};
use crate::oco::LearnerSpec;
use crate::oracles::{
    estimate_z_packing, estimate_z_phased, fractional_opt, is_feasible, packing_opt_sum, OracleMethod, OracleOptions,
    OracleResult, ZEstimate,
};

mod metrics;
mod output;
mod report;
mod sweep;
mod verify;

pub use metrics::{compute_metrics, q_gap, Metrics};
pub use output::{write_run_outputs, write_summary, write_trace_csv, TRACE_COLUMNS_DOC};
pub use report::{build_report, fit_loglog, mean_stderr, write_report, GroupStats, Report, SlopeFit};
pub use sweep::{read_sweep_csv, run_sweep, run_sweep_on, thread_pool, write_sweep_csv, SweepRow};
pub use verify::{builtin_pack, load_pack, verify_pack, write_pack, VerifyReport, PACK_EXTENSION};

/// Version of the `summary.json` layout.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Where the trade-off parameter Z comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZSource {
    /// A fixed value.
    Value(f64),
    /// From the offline oracle on the realized requests: the smallest
    /// optimal dual multiplier of the distance constraint, or `OPT_sum / B`
    /// for packing.
    Oracle,
    /// From a prefix of the stream: the sampled estimate for packing, the
    /// phased estimate otherwise.
    Estimate,
}

impl FromStr for ZSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(ZSource::Oracle),
            "estimate" => Ok(ZSource::Estimate),
            other => other
                .parse::<f64>()
                .map(ZSource::Value)
                .map_err(|_| Error::InvalidParameter(format!("Z must be a number, 'oracle' or 'estimate', got {s:?}"))),
        }
    }
}

/// One experiment, or a grid of them for a sweep. Every CLI flag mirrors a
/// key here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Instance file (`.osp.jsonl`, optionally gzipped).
    pub instance: Option<PathBuf>,
    /// Generator parameters, used when no instance file is given.
    pub generate: Option<GenParams>,
    /// Defaults to the natural algorithm for the instance kind.
    pub algorithm: Option<Algorithm>,
    pub stream: StreamMode,
    pub seeds: Vec<u64>,
    /// Length of IID streams; defaults to the instance size.
    pub stream_length: Option<usize>,
    /// Defaults to the oracle.
    pub z: Option<ZSource>,
    pub epsilon: Option<f64>,
    pub theta_learner: LearnerSpec,
    pub phi_learner: LearnerSpec,
    /// Prefix length for the phased Z estimate; defaults to `max(2, ceil(sqrt T))`.
    pub z_prefix: Option<usize>,
    /// Compute the offline benchmark (needed for regret1 and the ratio).
    pub oracle: bool,
    /// Record the random-permutation drift diagnostic in the summary.
    pub q_gap: bool,
    pub output: Option<PathBuf>,
    /// Sweep grid: stream lengths (generated instances only).
    pub horizons: Vec<usize>,
    /// Sweep grid: packing budgets as fractions of T.
    pub budget_ratios: Vec<f64>,
    /// Sweep grid: packing epsilons.
    pub epsilons: Vec<f64>,
    /// Sweep: generate a fresh instance per seed instead of reshuffling one.
    pub fresh_instances: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            instance: None,
            generate: None,
            algorithm: None,
            stream: StreamMode::Rp,
            seeds: vec![0],
            stream_length: None,
            z: None,
            epsilon: None,
            theta_learner: LearnerSpec::Auto,
            phi_learner: LearnerSpec::Auto,
            z_prefix: None,
            oracle: true,
            q_gap: false,
            output: None,
            horizons: Vec::new(),
            budget_ratios: Vec::new(),
            epsilons: Vec::new(),
            fresh_instances: false,
        }
    }
}

/// The fields that determine a run's behavior, hashed into summaries.
#[derive(Serialize)]
struct ConfigKey<'a> {
    algorithm: Algorithm,
    stream: StreamMode,
    stream_length: Option<usize>,
    z: &'a Option<ZSource>,
    epsilon: Option<f64>,
    theta_learner: &'a LearnerSpec,
    phi_learner: &'a LearnerSpec,
    z_prefix: Option<usize>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("at least one seed is required".into()));
        }
        match (&self.instance, &self.generate) {
            (Some(_), Some(_)) => Err(Error::InvalidParameter(
                "give either an instance file or generator parameters, not both".into(),
            )),
            (None, None) => Err(Error::InvalidParameter(
                "no instance file or generator parameters".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn load_instance(&self) -> Result<Instance> {
        self.validate()?;
        match (&self.instance, &self.generate) {
            (Some(path), _) => Instance::read_file(path),
            (None, Some(params)) => generate(params),
            (None, None) => unreachable!("validated above"),
        }
    }

    pub fn algorithm_for(&self, instance: &Instance) -> Algorithm {
        self.algorithm.unwrap_or_else(|| default_algorithm(instance.kind()))
    }

    pub fn config_hash(&self, algorithm: Algorithm) -> String {
        let key = ConfigKey {
            algorithm,
            stream: self.stream,
            stream_length: self.stream_length,
            z: &self.z,
            epsilon: self.epsilon,
            theta_learner: &self.theta_learner,
            phi_learner: &self.phi_learner,
            z_prefix: self.z_prefix,
        };
        sha256_hex(&serde_json::to_vec(&key).expect("config key serializes"))
    }
}

pub fn default_algorithm(kind: InstanceKind) -> Algorithm {
    match kind {
        InstanceKind::Feasibility | InstanceKind::Covering => Algorithm::Feasibility,
        InstanceKind::Linear => Algorithm::LinearCp,
        InstanceKind::Packing => Algorithm::Packing,
        InstanceKind::Smooth => Algorithm::SmoothCp,
        InstanceKind::Concave => Algorithm::GeneralCp,
    }
}

/// Offline benchmark for the realized requests: the packing LP (total reward)
/// for packing, the fractional optimum (per step) otherwise.
pub fn benchmark(instance: &Instance, algorithm: Algorithm, opts: &OracleOptions) -> Result<OracleResult> {
    match algorithm {
        Algorithm::Packing => packing_opt_sum(instance, 1.0, opts),
        _ => fractional_opt(instance, 0.0, opts),
    }
}

/// Resolved trade-off parameter with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZChoice {
    pub value: f64,
    pub source: ZSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packing_estimate: Option<ZEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_length: Option<usize>,
}

fn z_from_oracle(instance: &Instance, oracle: &OracleResult) -> Result<f64> {
    if !oracle.feasible {
        return Err(Error::Infeasible(
            "no fractional solution satisfies the constraint".into(),
        ));
    }
    match oracle.method {
        OracleMethod::PackingDual => {
            let b = instance.budget().unwrap_or(1.0);
            Ok(oracle.value / b)
        }
        _ => Ok(oracle.certificate.as_ref().map_or(0.0, |c| c.lambda)),
    }
}

fn resolve_z(
    spec: &ExperimentSpec,
    algorithm: Algorithm,
    instance: &Instance,
    order: &StreamOrder,
    oracle: &mut Option<OracleResult>,
    opts: &OracleOptions,
) -> Result<Option<ZChoice>> {
    if algorithm == Algorithm::Feasibility {
        return Ok(None);
    }
    let source = spec.z.clone().unwrap_or(ZSource::Oracle);
    let choice = match source {
        ZSource::Value(v) => ZChoice {
            value: v,
            source,
            packing_estimate: None,
            prefix_length: None,
        },
        ZSource::Oracle => {
            if oracle.is_none() {
                *oracle = Some(benchmark(instance, algorithm, opts)?);
            }
            let value = z_from_oracle(instance, oracle.as_ref().expect("set above"))?;
            ZChoice {
                value,
                source,
                packing_estimate: None,
                prefix_length: None,
            }
        }
        ZSource::Estimate if algorithm == Algorithm::Packing => {
            let eps = spec
                .epsilon
                .ok_or_else(|| Error::InvalidParameter("packing needs epsilon".into()))?;
            let est = estimate_z_packing(instance, order, eps, opts)?;
            ZChoice {
                value: est.z,
                source,
                packing_estimate: Some(est),
                prefix_length: None,
            }
        }
        ZSource::Estimate => {
            let len = spec
                .z_prefix
                .unwrap_or_else(|| ((order.len() as f64).sqrt().ceil() as usize).max(2))
                .min(order.len());
            let prefix = instance.with_requests(order.requests(instance).take(len).cloned().collect())?;
            let objective = instance.objective();
            let value = estimate_z_phased(&prefix, objective.lipschitz(), instance.set().distance_norm(), opts)?;
            ZChoice {
                value: value.max(0.0),
                source,
                packing_estimate: None,
                prefix_length: Some(len),
            }
        }
    };
    Ok(Some(choice))
}

/// Everything recorded about one run. Numbers trace back to the instance
/// hash, config hash and seed stored alongside them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub instance_hash: String,
    pub config_hash: String,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub stream: StreamMode,
    pub stream_length: usize,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<ZChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub metrics: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleResult>,
    pub average: Vec<f64>,
    pub total_reward: f64,
    pub consumption: Vec<f64>,
    pub overshoot: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_gap: Option<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub summary: RunSummary,
}

/// Runs one seeded experiment. `cached` may carry a benchmark already
/// computed for the same realized requests (random-permutation streams
/// share one).
pub fn run_experiment(
    spec: &ExperimentSpec,
    instance: &Instance,
    seed: u64,
    cached: Option<&OracleResult>,
    opts: &OracleOptions,
) -> Result<RunOutcome> {
    let algorithm = spec.algorithm_for(instance);
    let order = stream(instance, spec.stream, seed, spec.stream_length);
    let realized = match spec.stream {
        StreamMode::Rp => instance.clone(),
        StreamMode::Iid => order.realized(instance)?,
    };

    let mut oracle = match (spec.stream, cached) {
        (StreamMode::Rp, Some(o)) => Some(o.clone()),
        _ if spec.oracle => Some(benchmark(&realized, algorithm, opts)?),
        _ => None,
    };
    match &oracle {
        Some(o) if !o.feasible => {
            return Err(Error::Infeasible(
                "no fractional solution satisfies the constraint".into(),
            ))
        }
        None if algorithm != Algorithm::Packing && !is_feasible(&realized, 0.0, opts)? => {
            return Err(Error::Infeasible(
                "no fractional solution satisfies the constraint".into(),
            ))
        }
        _ => {}
    }

    let z = resolve_z(spec, algorithm, &realized, &order, &mut oracle, opts)?;
    let config = RunConfig {
        algorithm,
        z: z.as_ref().map(|c| c.value),
        epsilon: spec.epsilon,
        theta_learner: spec.theta_learner.clone(),
        phi_learner: spec.phi_learner.clone(),
    };
    let trace = algorithms::run(instance, &order, &config)?;
    let metrics = compute_metrics(&trace, &realized, if spec.oracle { oracle.as_ref() } else { None });
    let q = match (&oracle, spec.q_gap) {
        (Some(o), true) => Some(q_gap(instance, &order, o, z.as_ref().map_or(1.0, |c| c.value))),
        _ => None,
    };
    let summary = RunSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        instance_hash: instance.content_hash(),
        config_hash: spec.config_hash(algorithm),
        seed,
        algorithm,
        stream: spec.stream,
        stream_length: order.len(),
        d: instance.d(),
        z,
        epsilon: spec.epsilon,
        metrics,
        oracle: if spec.oracle { oracle } else { None },
        average: trace.average.clone(),
        total_reward: trace.total_reward,
        consumption: trace.consumption.clone(),
        overshoot: trace.overshoot.clone(),
        q_gap: q,
    };
    Ok(RunOutcome { trace, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorspace::NormKind;

    fn spec(kind: InstanceKind) -> ExperimentSpec {
        ExperimentSpec {
            generate: Some(GenParams {
                kind,
                d: 2,
                horizon: 60,
                k: 3,
                seed: 4,
                norm: NormKind::MaxAbs,
                ..GenParams::default()
            }),
            epsilon: Some(0.2),
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn z_source_parses() {
        assert_eq!("oracle".parse::<ZSource>().unwrap(), ZSource::Oracle);
        assert_eq!("Estimate".parse::<ZSource>().unwrap(), ZSource::Estimate);
        assert_eq!("2.5".parse::<ZSource>().unwrap(), ZSource::Value(2.5));
        assert!("lots".parse::<ZSource>().is_err());
        let json: ZSource = serde_json::from_str(r#"{"value": 1.5}"#).unwrap();
        assert_eq!(json, ZSource::Value(1.5));
    }

    #[test]
    fn spec_rejects_unknown_keys_and_ambiguous_sources() {
        assert!(ExperimentSpec::from_json(r#"{"seedz": [1]}"#).is_err());
        let s = ExperimentSpec::from_json(r#"{"instance": "a.osp.jsonl", "generate": {}}"#).unwrap();
        assert!(s.validate().is_err());
        let s = ExperimentSpec::from_json(r#"{"generate": {"kind": "packing"}, "seeds": []}"#).unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn every_kind_runs_with_each_z_source() {
        let opts = OracleOptions::default();
        for kind in [
            InstanceKind::Feasibility,
            InstanceKind::Covering,
            InstanceKind::Linear,
            InstanceKind::Packing,
            InstanceKind::Smooth,
            InstanceKind::Concave,
        ] {
            for z in [ZSource::Oracle, ZSource::Estimate, ZSource::Value(1.0)] {
                let s = ExperimentSpec {
                    z: Some(z.clone()),
                    ..spec(kind)
                };
                let inst = s.load_instance().unwrap();
                let out = run_experiment(&s, &inst, 3, None, &opts).unwrap();
                let m = &out.summary.metrics;
                assert!(m.regret2 >= 0.0, "{kind:?}");
                assert!(m.regret1.is_some(), "{kind:?}");
                assert_eq!(out.summary.algorithm, default_algorithm(kind));
                if kind == InstanceKind::Packing {
                    let r = m.ratio.unwrap();
                    assert!((0.0..=1.0 + 1.0 / inst.budget().unwrap() + 1e-9).contains(&r), "{r}");
                }
            }
        }
    }

    #[test]
    fn iid_benchmark_uses_the_realization() {
        let s = ExperimentSpec {
            stream: StreamMode::Iid,
            stream_length: Some(40),
            ..spec(InstanceKind::Linear)
        };
        let inst = s.load_instance().unwrap();
        let opts = OracleOptions::default();
        let out = run_experiment(&s, &inst, 5, None, &opts).unwrap();
        let order = stream(&inst, StreamMode::Iid, 5, Some(40));
        let direct = fractional_opt(&order.realized(&inst).unwrap(), 0.0, &opts).unwrap();
        assert_eq!(out.summary.oracle.unwrap().value, direct.value);
        assert_eq!(out.summary.stream_length, 40);
    }

    #[test]
    fn infeasible_instances_are_reported() {
        use crate::convex_sets::ConvexSet;
        use crate::instances::{OptionItem, Request};
        use crate::objectives::Objective;
        let set = ConvexSet::boxed(vec![0.9], vec![1.0], NormKind::MaxAbs).unwrap();
        let reqs = vec![Request::new(vec![OptionItem::new(vec![0.1], None)]); 3];
        let inst = Instance::new(InstanceKind::Feasibility, set, Objective::zero(), None, reqs).unwrap();
        let opts = OracleOptions::default();
        for oracle in [true, false] {
            let s = ExperimentSpec {
                oracle,
                ..ExperimentSpec::default()
            };
            assert!(matches!(
                run_experiment(&s, &inst, 0, None, &opts),
                Err(Error::Infeasible(_))
            ));
        }
    }

    #[test]
    fn config_hash_tracks_behavioral_fields_only() {
        let a = spec(InstanceKind::Linear);
        let mut b = a.clone();
        b.output = Some("elsewhere".into());
        b.seeds = vec![9, 10];
        assert_eq!(a.config_hash(Algorithm::LinearCp), b.config_hash(Algorithm::LinearCp));
        b.z = Some(ZSource::Value(3.0));
        assert_ne!(a.config_hash(Algorithm::LinearCp), b.config_hash(Algorithm::LinearCp));
    }
}
