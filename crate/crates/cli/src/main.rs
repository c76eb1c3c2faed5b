//! `ostoc`: generate instances, run the online algorithms, sweep parameter
//! grids, cross-check the offline oracles and aggregate sweep results.
//!
//! Exit codes: 0 on success, 1 when `verify` finds a violation or an I/O
//! operation fails, 2 for malformed input or parameters, 3 when the instance
//! is infeasible.

use std::fs;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use ostoc_core::algorithms::Algorithm;
use ostoc_core::harness::{
    build_report, builtin_pack, load_pack, read_sweep_csv, run_experiment, run_sweep, verify_pack, write_pack,
    write_report, write_run_outputs, write_sweep_csv, ExperimentSpec, ZSource,
};
use ostoc_core::instances::{generate, GenParams, InstanceKind, StreamMode};
use ostoc_core::oco::LearnerSpec;
use ostoc_core::oracles::OracleOptions;
use ostoc_core::vectorspace::NormKind;
use ostoc_core::Error;

#[derive(Parser)]
#[command(name = "ostoc", version, about = "Online stochastic convex programming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file, or write the built-in verification pack.
    Gen(GenCmd),
    /// Run one experiment per seed and write trace.csv and summary.json.
    Run(RunCmd),
    /// Run a grid of experiments and write a long-format CSV.
    Sweep(SweepCmd),
    /// Cross-check the offline oracles on a pack of tiny instances.
    Verify(VerifyCmd),
    /// Aggregate sweep CSVs into mean/stderr tables and log-log slopes.
    Report(ReportCmd),
}

/// Generator flags. Each mirrors a key of the generator JSON object.
#[derive(Args, Default)]
struct GenFlags {
    /// feasibility, linear, packing, covering, smooth or concave.
    #[arg(long, value_parser = parse_enum::<InstanceKind>)]
    kind: Option<InstanceKind>,
    /// Dimension of the outcome vectors.
    #[arg(long)]
    d: Option<usize>,
    /// Number of requests.
    #[arg(short = 'T', long = "horizon")]
    horizon: Option<usize>,
    /// Options per request.
    #[arg(long)]
    k: Option<usize>,
    /// Generator seed.
    #[arg(long = "gen-seed")]
    gen_seed: Option<u64>,
    /// euclidean or max_abs.
    #[arg(long, value_parser = parse_enum::<NormKind>)]
    norm: Option<NormKind>,
    /// Packing budget.
    #[arg(short = 'B', long = "budget")]
    budget: Option<f64>,
    /// Half-width of the target band for feasibility and concave boxes.
    #[arg(long)]
    band: Option<f64>,
    /// Per-coordinate cap for linear and smooth sets.
    #[arg(long)]
    cap: Option<f64>,
    /// Per-coordinate floor for covering sets.
    #[arg(long)]
    floor: Option<f64>,
    /// Curvature of smooth and concave objectives.
    #[arg(long)]
    beta: Option<f64>,
    /// Attach uniform IID weights to every request.
    #[arg(long)]
    iid_weights: bool,
}

impl GenFlags {
    fn any(&self) -> bool {
        self.kind.is_some()
            || self.d.is_some()
            || self.horizon.is_some()
            || self.k.is_some()
            || self.gen_seed.is_some()
            || self.norm.is_some()
            || self.budget.is_some()
            || self.band.is_some()
            || self.cap.is_some()
            || self.floor.is_some()
            || self.beta.is_some()
            || self.iid_weights
    }

    fn apply(&self, p: &mut GenParams) {
        if let Some(v) = self.kind {
            p.kind = v;
        }
        if let Some(v) = self.d {
            p.d = v;
        }
        if let Some(v) = self.horizon {
            p.horizon = v;
        }
        if let Some(v) = self.k {
            p.k = v;
        }
        if let Some(v) = self.gen_seed {
            p.seed = v;
        }
        if let Some(v) = self.norm {
            p.norm = v;
        }
        if self.budget.is_some() {
            p.budget = self.budget;
        }
        if let Some(v) = self.band {
            p.band = v;
        }
        if let Some(v) = self.cap {
            p.cap = v;
        }
        if let Some(v) = self.floor {
            p.floor = v;
        }
        if let Some(v) = self.beta {
            p.beta = v;
        }
        if self.iid_weights {
            p.iid_weights = true;
        }
    }
}

#[derive(Args)]
struct GenCmd {
    /// JSON file with generator parameters; flags win on conflict.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    gen: GenFlags,
    /// Output instance file (`.osp.jsonl`, or `.osp.jsonl.gz` to compress).
    #[arg(
        short,
        long,
        visible_alias = "out",
        required_unless_present = "pack",
        conflicts_with = "pack"
    )]
    output: Option<PathBuf>,
    /// Write the built-in verification pack into this directory instead.
    #[arg(long)]
    pack: Option<PathBuf>,
}

/// Experiment flags. Each mirrors a key of the experiment JSON object.
#[derive(Args)]
struct ExperimentFlags {
    /// JSON experiment file; flags win on conflict.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance file; replaces any generator parameters from the config.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    gen: GenFlags,
    /// feasibility, general_cp, linear_cp, packing or smooth_cp.
    #[arg(long, value_parser = parse_enum::<Algorithm>)]
    algorithm: Option<Algorithm>,
    /// rp (random permutation) or iid.
    #[arg(long, value_parser = parse_enum::<StreamMode>)]
    stream: Option<StreamMode>,
    /// Comma-separated stream seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Single stream seed (shorthand for --seeds N).
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Length of IID streams.
    #[arg(long)]
    stream_length: Option<usize>,
    /// A number, `oracle` or `estimate`.
    #[arg(long, value_parser = parse_z)]
    z: Option<ZSource>,
    /// Packing learning rate; required by the packing algorithm.
    #[arg(long)]
    epsilon: Option<f64>,
    /// auto, ogd, ogd:ETA, signed_mw or signed_mw:EPS.
    #[arg(long, value_parser = parse_learner)]
    theta_learner: Option<LearnerSpec>,
    /// auto, ogd, ogd:ETA, signed_mw or signed_mw:EPS.
    #[arg(long, value_parser = parse_learner)]
    phi_learner: Option<LearnerSpec>,
    /// Prefix length for the phased Z estimate.
    #[arg(long)]
    z_prefix: Option<usize>,
    /// Skip the offline benchmark (no regret1 or ratio).
    #[arg(long)]
    no_oracle: bool,
    /// Record the random-permutation drift diagnostic.
    #[arg(long)]
    q_gap: bool,
}

impl ExperimentFlags {
    fn spec(&self) -> Result<ExperimentSpec, Error> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_json(&fs::read_to_string(path)?)?,
            None => ExperimentSpec::default(),
        };
        if let Some(path) = &self.instance {
            spec.instance = Some(path.clone());
            spec.generate = None;
        }
        if self.gen.any() {
            if self.instance.is_some() {
                return Err(Error::InvalidParameter(
                    "generator flags cannot be combined with --instance".into(),
                ));
            }
            let mut params = spec.generate.take().unwrap_or_default();
            self.gen.apply(&mut params);
            spec.generate = Some(params);
            spec.instance = None;
        }
        if let Some(v) = self.algorithm {
            spec.algorithm = Some(v);
        }
        if let Some(v) = self.stream {
            spec.stream = v;
        }
        if let Some(v) = &self.seeds {
            spec.seeds = v.clone();
        }
        if let Some(v) = self.seed {
            spec.seeds = vec![v];
        }
        if self.stream_length.is_some() {
            spec.stream_length = self.stream_length;
        }
        if self.z.is_some() {
            spec.z = self.z.clone();
        }
        if self.epsilon.is_some() {
            spec.epsilon = self.epsilon;
        }
        if let Some(v) = &self.theta_learner {
            spec.theta_learner = v.clone();
        }
        if let Some(v) = &self.phi_learner {
            spec.phi_learner = v.clone();
        }
        if self.z_prefix.is_some() {
            spec.z_prefix = self.z_prefix;
        }
        if self.no_oracle {
            spec.oracle = false;
        }
        if self.q_gap {
            spec.q_gap = true;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct RunCmd {
    #[command(flatten)]
    exp: ExperimentFlags,
    /// Output directory; with several seeds each gets a `seed-N` subdirectory.
    /// Without one, the summary is printed to stdout.
    #[arg(short, long, visible_alias = "out")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    exp: ExperimentFlags,
    /// Comma-separated stream lengths (generated instances only).
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<usize>>,
    /// Comma-separated packing budgets as fractions of T.
    #[arg(long, value_delimiter = ',')]
    budget_ratios: Option<Vec<f64>>,
    /// Comma-separated packing epsilons.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Generate a fresh instance per seed.
    #[arg(long)]
    fresh_instances: bool,
    /// Output CSV; stdout when absent.
    #[arg(short, long, visible_alias = "out")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyCmd {
    /// Directory of `.osp.jsonl` instances; the built-in pack when absent.
    #[arg(long)]
    pack: Option<PathBuf>,
}

#[derive(Args)]
struct ReportCmd {
    /// Sweep CSV files.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Directory for groups.csv, slopes.csv and report.json.
    #[arg(short, long, visible_alias = "out")]
    output: PathBuf,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    let name = s.trim().to_ascii_lowercase().replace('-', "_");
    serde_json::from_value(serde_json::Value::String(name)).map_err(|_| format!("unrecognized value {s:?}"))
}

fn parse_z(s: &str) -> Result<ZSource, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_learner(s: &str) -> Result<LearnerSpec, String> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (
            n,
            Some(a.parse::<f64>().map_err(|e| format!("bad learner parameter: {e}"))?),
        ),
        None => (s, None),
    };
    match (name.to_ascii_lowercase().replace('-', "_").as_str(), arg) {
        ("auto", None) => Ok(LearnerSpec::Auto),
        ("ogd", eta) => Ok(LearnerSpec::Ogd { eta }),
        ("signed_mw", epsilon) => Ok(LearnerSpec::SignedMw { epsilon }),
        _ => Err(format!("unrecognized learner {s:?}")),
    }
}

fn cmd_gen(cmd: &GenCmd) -> Result<ExitCode, Error> {
    if let Some(dir) = &cmd.pack {
        let n = write_pack(dir)?;
        println!("wrote {n} instances to {}", dir.display());
        return Ok(ExitCode::SUCCESS);
    }
    let mut params: GenParams = match &cmd.config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => GenParams::default(),
    };
    cmd.gen.apply(&mut params);
    let instance = generate(&params)?;
    let path = cmd.output.as_ref().expect("clap requires --output without --pack");
    instance.write_file(path)?;
    println!("{} {}", instance.content_hash(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(cmd: &RunCmd) -> Result<ExitCode, Error> {
    let spec = cmd.exp.spec()?;
    let output = cmd.output.clone().or_else(|| spec.output.clone());
    let instance = spec.load_instance()?;
    let opts = OracleOptions::default();
    let mut cached = None;
    for &seed in &spec.seeds {
        let outcome = run_experiment(&spec, &instance, seed, cached.as_ref(), &opts)?;
        if spec.stream == StreamMode::Rp && cached.is_none() {
            cached = outcome.summary.oracle.clone();
        }
        match &output {
            Some(dir) => {
                let dir = if spec.seeds.len() > 1 {
                    dir.join(format!("seed-{seed}"))
                } else {
                    dir.clone()
                };
                write_run_outputs(&dir, &outcome)?;
                eprintln!("seed {seed}: wrote {}", dir.display());
            }
            None => println!("{}", serde_json::to_string(&outcome.summary)?),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(cmd: &SweepCmd) -> Result<ExitCode, Error> {
    let mut spec = cmd.exp.spec()?;
    if let Some(v) = &cmd.horizons {
        spec.horizons = v.clone();
    }
    if let Some(v) = &cmd.budget_ratios {
        spec.budget_ratios = v.clone();
    }
    if let Some(v) = &cmd.epsilons {
        spec.epsilons = v.clone();
    }
    if cmd.fresh_instances {
        spec.fresh_instances = true;
    }
    let rows = run_sweep(&spec, &OracleOptions::default())?;
    match cmd.output.clone().or_else(|| spec.output.clone()) {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            write_sweep_csv(&rows, fs::File::create(&path)?)?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => write_sweep_csv(&rows, io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(cmd: &VerifyCmd) -> Result<ExitCode, Error> {
    let pack = match &cmd.pack {
        Some(dir) => load_pack(dir)?,
        None => builtin_pack(),
    };
    let report = verify_pack(&pack, &OracleOptions::default())?;
    for failure in &report.failures {
        eprintln!("FAIL {failure}");
    }
    println!(
        "{} instances ({} skipped), {} checks, {} failures",
        report.instances,
        report.skipped,
        report.checks,
        report.failures.len()
    );
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_report(cmd: &ReportCmd) -> Result<ExitCode, Error> {
    let mut rows = Vec::new();
    for path in &cmd.files {
        rows.extend(read_sweep_csv(path)?);
    }
    let report = build_report(&rows);
    write_report(&cmd.output, &report)?;
    for s in &report.slopes {
        println!(
            "{:<12} B/T={:<6} eps={:<6} {:<8} slope {:.4} ({} points)",
            s.algo,
            fmt_opt(s.budget_ratio),
            fmt_opt(s.epsilon),
            s.metric,
            s.slope,
            s.points
        );
    }
    eprintln!("wrote report to {}", cmd.output.display());
    Ok(ExitCode::SUCCESS)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Infeasible(_) => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(c) => cmd_gen(c),
        Command::Run(c) => cmd_run(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Verify(c) => cmd_verify(c),
        Command::Report(c) => cmd_report(c),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("ostoc: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
