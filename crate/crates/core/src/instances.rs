//! Instance data model, seeded generators, the JSON Lines file format and the
//! two stochastic input streams.
//!
//! File layout (`.osp.jsonl`, optionally gzip-compressed): the first line is a
//! header `{"d", "T", "kind", "set", "objective", "B"}`, followed by one line
//! per request `{"opts": [{"v": [...], "r": 0.3}, ...]}`. A request line may
//! carry `"witness"` (the index of a certified choice) and `"weight"` (its
//! probability mass when the instance is read as an IID distribution).
//!
//! All randomness comes from `ChaCha8Rng` seeded with a `u64`, which is
//! portable across platforms.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::convex_sets::ConvexSet;
use crate::error::{Error, Result};
use crate::objectives::{Objective, ObjectiveKind, Piece};
use crate::vectorspace::NormKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionItem {
    pub v: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl OptionItem {
    pub fn new(v: Vec<f64>, r: Option<f64>) -> Self {
        OptionItem { v, r }
    }

    pub fn reward(&self) -> f64 {
        self.r.unwrap_or(0.0)
    }

    fn is_zero(&self) -> bool {
        self.v.iter().all(|x| *x == 0.0) && self.reward() == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub opts: Vec<OptionItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl Request {
    pub fn new(opts: Vec<OptionItem>) -> Self {
        Request {
            opts,
            witness: None,
            weight: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Feasibility,
    Linear,
    Packing,
    Covering,
    Smooth,
    /// General concave objective with a box constraint.
    Concave,
}

impl std::str::FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidParameter(format!("unknown instance kind {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    d: usize,
    #[serde(rename = "T")]
    horizon: usize,
    kind: InstanceKind,
    set: ConvexSet,
    objective: Objective,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    budget: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    header: Header,
    requests: Vec<Request>,
}

impl Instance {
    pub fn new(
        kind: InstanceKind,
        set: ConvexSet,
        objective: Objective,
        budget: Option<f64>,
        requests: Vec<Request>,
    ) -> Result<Self> {
        let d = set.dim();
        let header = Header {
            d,
            horizon: requests.len(),
            kind,
            set,
            objective,
            budget,
        };
        let inst = Instance { header, requests };
        inst.validate()?;
        Ok(inst)
    }

    fn validate(&self) -> Result<()> {
        let h = &self.header;
        let bad = |msg: String| Err(Error::Format(msg));
        if h.d == 0 || h.horizon == 0 {
            return bad("d and T must be >= 1".into());
        }
        if h.set.dim() != h.d {
            return bad(format!("set has dimension {}, header says {}", h.set.dim(), h.d));
        }
        if let Some(od) = h.objective.dim() {
            if od != h.d {
                return bad(format!("objective has dimension {od}, header says {}", h.d));
            }
        }
        if self.requests.len() != h.horizon {
            return bad(format!(
                "header says T={} but found {} requests",
                h.horizon,
                self.requests.len()
            ));
        }
        let needs_reward = matches!(h.kind, InstanceKind::Linear | InstanceKind::Packing);
        if h.kind == InstanceKind::Packing {
            match h.budget {
                Some(b) if b > 0.0 && b.is_finite() => {}
                _ => return bad("packing instances need a budget B > 0".into()),
            }
        }
        let in_unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        for (t, req) in self.requests.iter().enumerate() {
            if req.opts.is_empty() {
                return bad(format!("request {t} has no options"));
            }
            for (i, o) in req.opts.iter().enumerate() {
                if o.v.len() != h.d {
                    return bad(format!("request {t} option {i} has dimension {}", o.v.len()));
                }
                if !o.v.iter().all(|x| in_unit(*x)) {
                    return bad(format!("request {t} option {i} leaves [0,1]^d"));
                }
                match o.r {
                    Some(r) if !in_unit(r) => return bad(format!("request {t} option {i} reward {r} outside [0,1]")),
                    None if needs_reward => return bad(format!("request {t} option {i} is missing a reward")),
                    _ => {}
                }
            }
            if h.kind == InstanceKind::Packing && !req.opts.iter().any(OptionItem::is_zero) {
                return bad(format!("packing request {t} lacks the zero option"));
            }
            if let Some(w) = req.witness {
                if w >= req.opts.len() {
                    return bad(format!("request {t} witness {w} out of range"));
                }
            }
            if let Some(w) = req.weight {
                if !(w >= 0.0 && w.is_finite()) {
                    return bad(format!("request {t} has invalid weight {w}"));
                }
            }
        }
        let weighted = self.requests.iter().filter(|r| r.weight.is_some()).count();
        if weighted != 0 && weighted != self.requests.len() {
            return bad("weights must be given for all requests or none".into());
        }
        if weighted != 0 && self.requests.iter().map(|r| r.weight.unwrap_or(0.0)).sum::<f64>() <= 0.0 {
            return bad("weights sum to zero".into());
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.header.d
    }

    pub fn horizon(&self) -> usize {
        self.header.horizon
    }

    pub fn kind(&self) -> InstanceKind {
        self.header.kind
    }

    pub fn set(&self) -> &ConvexSet {
        &self.header.set
    }

    pub fn objective(&self) -> &Objective {
        &self.header.objective
    }

    pub fn budget(&self) -> Option<f64> {
        self.header.budget
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    /// Recorded witness index per request, if every request has one.
    pub fn witness(&self) -> Option<Vec<usize>> {
        self.requests.iter().map(|r| r.witness).collect()
    }

    /// IID weights, if the instance carries them.
    pub fn weights(&self) -> Option<Vec<f64>> {
        self.requests.iter().map(|r| r.weight).collect()
    }

    /// Average of the witness choices.
    pub fn witness_average(&self) -> Option<Vec<f64>> {
        let w = self.witness()?;
        let mut avg = vec![0.0; self.d()];
        for (req, &i) in self.requests.iter().zip(&w) {
            for (a, x) in avg.iter_mut().zip(&req.opts[i].v) {
                *a += x;
            }
        }
        let n = self.horizon() as f64;
        Some(avg.into_iter().map(|a| a / n).collect())
    }

    /// A new instance over a subset of the requests (used for prefixes and
    /// samples). The budget is kept as is.
    pub fn with_requests(&self, requests: Vec<Request>) -> Result<Self> {
        Instance::new(
            self.kind(),
            self.set().clone(),
            self.objective().clone(),
            self.budget(),
            requests,
        )
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for req in &self.requests {
            serde_json::to_writer(&mut w, req)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| match l {
            Ok(s) => !s.trim().is_empty(),
            Err(_) => true,
        });
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::Format("empty instance file".into()))?;
        let header: Header = serde_json::from_str(&first?).map_err(|e| Error::Format(format!("line 1: {e}")))?;
        let mut requests = Vec::with_capacity(header.horizon);
        for (n, line) in lines {
            let req: Request =
                serde_json::from_str(&line?).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
            requests.push(req);
        }
        let inst = Instance { header, requests };
        inst.validate()?;
        Ok(inst)
    }

    /// Reads a file, transparently decompressing gzip content.
    pub fn read_file(path: &Path) -> Result<Self> {
        let mut f = BufReader::new(File::open(path)?);
        let magic = f.fill_buf()?;
        if magic.starts_with(&[0x1f, 0x8b]) {
            Self::read_jsonl(BufReader::new(GzDecoder::new(f)))
        } else {
            Self::read_jsonl(f)
        }
    }

    /// Writes a file; a `.gz` extension selects gzip compression.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let f = BufWriter::new(File::create(path)?);
        if path.extension().is_some_and(|e| e == "gz") {
            let mut enc = GzEncoder::new(f, Compression::default());
            self.write_jsonl(&mut enc)?;
            enc.finish()?.flush()?;
        } else {
            let mut f = f;
            self.write_jsonl(&mut f)?;
            f.flush()?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON Lines encoding.
    pub fn content_hash(&self) -> String {
        sha256_hex(&self.to_jsonl())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads raw bytes, decompressing gzip if present.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Generator parameters. Fields that do not apply to a kind are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub kind: InstanceKind,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Options per request (packing adds the zero option on top).
    pub k: usize,
    pub seed: u64,
    pub norm: NormKind,
    /// Packing budget; defaults to `T / 4`.
    #[serde(rename = "B")]
    pub budget: Option<f64>,
    /// Half-width of the target band for feasibility and concave boxes.
    pub band: f64,
    /// Per-coordinate cap for linear and smooth sets.
    pub cap: f64,
    /// Per-coordinate floor for covering sets.
    pub floor: f64,
    /// Curvature of smooth and concave objectives.
    pub beta: f64,
    /// Attach uniform IID weights to every request.
    pub iid_weights: bool,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            kind: InstanceKind::Feasibility,
            d: 2,
            horizon: 100,
            k: 3,
            seed: 0,
            norm: NormKind::Euclidean,
            budget: None,
            band: 0.05,
            cap: 0.3,
            floor: 0.6,
            beta: 1.0,
            iid_weights: false,
        }
    }
}

/// Uniform witnesses rescaled per coordinate so their average lands exactly
/// on the nearest face of `[lower, upper]` when it starts outside.
fn witness_vectors(rng: &mut ChaCha8Rng, d: usize, t: usize, lower: &[f64], upper: &[f64]) -> Vec<Vec<f64>> {
    let mut w: Vec<Vec<f64>> = (0..t).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
    for j in 0..d {
        let mean = w.iter().map(|x| x[j]).sum::<f64>() / t as f64;
        if mean > upper[j] {
            let s = upper[j] / mean;
            for x in w.iter_mut() {
                x[j] *= s;
            }
        } else if mean < lower[j] {
            let s = (1.0 - lower[j]) / (1.0 - mean);
            for x in w.iter_mut() {
                x[j] = 1.0 - (1.0 - x[j]) * s;
            }
        }
        // Rounding can leave the mean a few ulps outside; nudge the largest
        // (or smallest) entry to absorb it.
        let mean = w.iter().map(|x| x[j]).sum::<f64>() / t as f64;
        if mean > upper[j] {
            let excess = (mean - upper[j]) * t as f64;
            let i = (0..t).max_by(|&a, &b| w[a][j].total_cmp(&w[b][j])).unwrap_or(0);
            w[i][j] = (w[i][j] - 2.0 * excess).max(0.0);
        } else if mean < lower[j] {
            let deficit = (lower[j] - mean) * t as f64;
            let i = (0..t).min_by(|&a, &b| w[a][j].total_cmp(&w[b][j])).unwrap_or(0);
            w[i][j] = (w[i][j] + 2.0 * deficit).min(1.0);
        }
    }
    w
}

fn check_params(p: &GenParams) -> Result<()> {
    let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
    if p.d == 0 || p.horizon == 0 || p.k == 0 {
        return bad("d, T and k must be >= 1");
    }
    if !(0.0..=0.5).contains(&p.band) {
        return bad("band must lie in [0, 0.5]");
    }
    if !(0.0..=1.0).contains(&p.cap) {
        return bad("cap must lie in [0, 1]");
    }
    if !(0.0..=1.0).contains(&p.floor) {
        return bad("floor must lie in [0, 1]");
    }
    if !(p.beta > 0.0 && p.beta.is_finite()) {
        return bad("beta must be > 0");
    }
    if let Some(b) = p.budget {
        if !(b > 0.0 && b.is_finite()) {
            return bad("budget must be > 0");
        }
    }
    Ok(())
}

/// Deterministic instance generator.
pub fn generate(p: &GenParams) -> Result<Instance> {
    check_params(p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let (d, t, k) = (p.d, p.horizon, p.k);
    let uniform = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..d).map(|_| rng.gen::<f64>()).collect() };

    let (set, objective, budget, with_reward) = match p.kind {
        InstanceKind::Feasibility | InstanceKind::Concave => {
            let centers: Vec<f64> = (0..d).map(|_| rng.gen_range(0.25..0.75)).collect();
            let lower = centers.iter().map(|c| c - p.band).collect();
            let upper = centers.iter().map(|c| c + p.band).collect();
            let set = ConvexSet::boxed(lower, upper, p.norm)?;
            let objective = if p.kind == InstanceKind::Concave {
                let pieces = (0..d)
                    .map(|j| match j % 3 {
                        0 => Piece::Log {
                            weight: rng.gen_range(0.2..1.0),
                        },
                        1 => Piece::Quadratic {
                            slope: rng.gen_range(0.0..0.5),
                            center: rng.gen_range(0.0..1.0),
                            beta: p.beta,
                        },
                        _ => Piece::Linear {
                            slope: rng.gen_range(-0.5..0.5),
                        },
                    })
                    .collect();
                Objective::new(ObjectiveKind::Separable { pieces }, p.norm)?
            } else {
                Objective::zero()
            };
            (set, objective, None, false)
        }
        InstanceKind::Covering => {
            let set = ConvexSet::cover_floor(vec![p.floor; d], p.norm)?;
            (set, Objective::zero(), None, false)
        }
        InstanceKind::Linear => {
            let set = ConvexSet::budget_cap(vec![p.cap; d], p.norm)?;
            (set, Objective::linear_reward(), None, true)
        }
        InstanceKind::Smooth => {
            let set = ConvexSet::budget_cap(vec![p.cap; d], p.norm)?;
            let a = (0..d).map(|_| rng.gen_range(0.2..0.8)).collect();
            let x0 = (0..d).map(|_| rng.gen_range(0.4..0.9)).collect();
            let objective = Objective::new(ObjectiveKind::Quadratic { a, x0, beta: p.beta }, p.norm)?;
            (set, objective, None, false)
        }
        InstanceKind::Packing => {
            let b = p.budget.unwrap_or(t as f64 / 4.0);
            let set = ConvexSet::budget_cap(vec![(b / t as f64).min(1.0); d], p.norm)?;
            (set, Objective::linear_reward(), Some(b), true)
        }
    };

    let requests: Vec<Request> = if p.kind == InstanceKind::Packing {
        (0..t)
            .map(|_| {
                let mut opts = vec![OptionItem::new(vec![0.0; d], Some(0.0))];
                for _ in 0..k {
                    let v = uniform(&mut rng);
                    let r = rng.gen::<f64>();
                    opts.push(OptionItem::new(v, Some(r)));
                }
                Request {
                    opts,
                    witness: Some(0),
                    weight: None,
                }
            })
            .collect()
    } else {
        let witnesses = witness_vectors(&mut rng, d, t, set.lower(), set.upper());
        witnesses
            .into_iter()
            .map(|w| {
                let slot = rng.gen_range(0..k);
                let opts = (0..k)
                    .map(|i| {
                        let v = if i == slot { w.clone() } else { uniform(&mut rng) };
                        let r = with_reward.then(|| rng.gen::<f64>());
                        OptionItem::new(v, r)
                    })
                    .collect();
                Request {
                    opts,
                    witness: Some(slot),
                    weight: None,
                }
            })
            .collect()
    };
    let requests = if p.iid_weights {
        requests
            .into_iter()
            .map(|r| Request { weight: Some(1.0), ..r })
            .collect()
    } else {
        requests
    };
    Instance::new(p.kind, set, objective, budget, requests)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    #[default]
    Rp,
    Iid,
}

impl std::str::FromStr for StreamMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rp" => Ok(StreamMode::Rp),
            "iid" => Ok(StreamMode::Iid),
            _ => Err(Error::InvalidParameter(format!("unknown stream mode {s:?}"))),
        }
    }
}

/// A realized order of request indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamOrder {
    pub mode: StreamMode,
    pub seed: u64,
    pub indices: Vec<usize>,
}

impl StreamOrder {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn requests<'a>(&'a self, instance: &'a Instance) -> impl Iterator<Item = &'a Request> + 'a {
        self.indices.iter().map(move |&i| &instance.requests()[i])
    }

    /// The realized requests as a standalone instance (the per-realization
    /// offline benchmark under IID streams).
    pub fn realized(&self, instance: &Instance) -> Result<Instance> {
        instance.with_requests(self.requests(instance).cloned().collect())
    }
}

/// Uniformly random permutation of the requests (Fisher-Yates).
pub fn rp_stream(instance: &Instance, seed: u64) -> StreamOrder {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..instance.horizon()).collect();
    indices.shuffle(&mut rng);
    StreamOrder {
        mode: StreamMode::Rp,
        seed,
        indices,
    }
}

/// `t_out` draws with replacement, uniform unless the instance carries
/// non-uniform weights.
pub fn iid_stream(instance: &Instance, seed: u64, t_out: usize) -> StreamOrder {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = instance.horizon();
    let indices = match instance.weights() {
        Some(w) if w.windows(2).any(|p| p[0] != p[1]) => {
            let dist = WeightedIndex::new(&w).expect("weights validated at construction");
            (0..t_out).map(|_| dist.sample(&mut rng)).collect()
        }
        _ => (0..t_out).map(|_| rng.gen_range(0..n)).collect(),
    };
    StreamOrder {
        mode: StreamMode::Iid,
        seed,
        indices,
    }
}

pub fn stream(instance: &Instance, mode: StreamMode, seed: u64, t_out: Option<usize>) -> StreamOrder {
    match mode {
        StreamMode::Rp => rp_stream(instance, seed),
        StreamMode::Iid => iid_stream(instance, seed, t_out.unwrap_or(instance.horizon())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn params(kind: InstanceKind) -> GenParams {
        GenParams {
            kind,
            d: 3,
            horizon: 40,
            k: 3,
            seed: 11,
            ..GenParams::default()
        }
    }

    const KINDS: [InstanceKind; 6] = [
        InstanceKind::Feasibility,
        InstanceKind::Linear,
        InstanceKind::Packing,
        InstanceKind::Covering,
        InstanceKind::Smooth,
        InstanceKind::Concave,
    ];

    #[test]
    fn generation_is_deterministic() {
        for kind in KINDS {
            let a = generate(&params(kind)).unwrap().to_jsonl();
            let b = generate(&params(kind)).unwrap().to_jsonl();
            assert_eq!(a, b);
            let c = generate(&GenParams {
                seed: 12,
                ..params(kind)
            })
            .unwrap()
            .to_jsonl();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn packing_requests_contain_zero_option() {
        let inst = generate(&params(InstanceKind::Packing)).unwrap();
        assert!(inst.requests().iter().all(|r| r.opts[0].is_zero()));
        assert_eq!(inst.budget(), Some(10.0));
    }

    #[test]
    fn witnesses_certify_feasibility() {
        for kind in KINDS {
            for seed in 0..20 {
                let inst = generate(&GenParams { seed, ..params(kind) }).unwrap();
                let avg = inst.witness_average().unwrap();
                assert!(inst.set().distance(&avg) <= 1e-9, "{kind:?} seed {seed}");
            }
        }
    }

    #[test]
    fn bad_parameters_rejected() {
        let p = GenParams {
            floor: 1.5,
            ..params(InstanceKind::Covering)
        };
        assert!(matches!(generate(&p), Err(Error::InvalidParameter(_))));
        let p = GenParams {
            d: 0,
            ..params(InstanceKind::Feasibility)
        };
        assert!(generate(&p).is_err());
    }

    #[test]
    fn jsonl_round_trip_is_byte_identical() {
        for kind in KINDS {
            let inst = generate(&GenParams {
                iid_weights: kind == InstanceKind::Smooth,
                ..params(kind)
            })
            .unwrap();
            let bytes = inst.to_jsonl();
            let back = Instance::read_jsonl(bytes.as_slice()).unwrap();
            assert_eq!(back, inst);
            assert_eq!(back.to_jsonl(), bytes);
        }
    }

    #[test]
    fn gzip_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let inst = generate(&params(InstanceKind::Linear)).unwrap();
        for name in ["a.osp.jsonl", "a.osp.jsonl.gz"] {
            let path = dir.path().join(name);
            inst.write_file(&path).unwrap();
            assert_eq!(Instance::read_file(&path).unwrap(), inst);
        }
        let gz = std::fs::read(dir.path().join("a.osp.jsonl.gz")).unwrap();
        assert_eq!(&gz[..2], &[0x1f, 0x8b]);
    }

    #[test]
    fn malformed_files_rejected() {
        let inst = generate(&params(InstanceKind::Packing)).unwrap();
        let text = String::from_utf8(inst.to_jsonl()).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop();
        let truncated = lines.join("\n");
        assert!(matches!(
            Instance::read_jsonl(truncated.as_bytes()),
            Err(Error::Format(_))
        ));
        let broken = text.replacen("\"opts\"", "\"optz\"", 1);
        assert!(matches!(Instance::read_jsonl(broken.as_bytes()), Err(Error::Format(_))));
        let out_of_box = text.replacen("[0.0,0.0,0.0]", "[0.0,2.0,0.0]", 1);
        assert!(Instance::read_jsonl(out_of_box.as_bytes()).is_err());
    }

    #[test]
    fn rp_stream_is_a_permutation() {
        let inst = generate(&GenParams {
            horizon: 1,
            ..params(InstanceKind::Feasibility)
        })
        .unwrap();
        assert_eq!(rp_stream(&inst, 5).indices, vec![0]);
        let inst = generate(&params(InstanceKind::Feasibility)).unwrap();
        let mut pi = rp_stream(&inst, 5).indices;
        pi.sort_unstable();
        assert_eq!(pi, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn rp_orders_are_uniform() {
        let inst = generate(&GenParams {
            horizon: 4,
            ..params(InstanceKind::Feasibility)
        })
        .unwrap();
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let n = 10_000;
        for seed in 0..n {
            *counts.entry(rp_stream(&inst, seed).indices).or_default() += 1;
        }
        assert_eq!(counts.len(), 24);
        for c in counts.values() {
            assert!((*c as f64 / n as f64 - 1.0 / 24.0).abs() <= 0.01);
        }
    }

    #[test]
    fn iid_stream_frequencies() {
        let inst = generate(&GenParams {
            horizon: 5,
            ..params(InstanceKind::Linear)
        })
        .unwrap();
        let n = 10_000;
        let s = iid_stream(&inst, 9, n);
        assert_eq!(s, iid_stream(&inst, 9, n));
        let p = 0.2;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for j in 0..5 {
            let c = s.indices.iter().filter(|&&i| i == j).count() as f64;
            assert!((c - n as f64 * p).abs() <= 3.0 * sigma);
        }
        let single = generate(&GenParams {
            horizon: 1,
            ..params(InstanceKind::Linear)
        })
        .unwrap();
        assert!(iid_stream(&single, 3, 50).indices.iter().all(|&i| i == 0));
    }

    #[test]
    fn weighted_iid_stream_follows_weights() {
        let inst = generate(&GenParams {
            horizon: 2,
            ..params(InstanceKind::Linear)
        })
        .unwrap();
        let mut reqs = inst.requests().to_vec();
        reqs[0].weight = Some(3.0);
        reqs[1].weight = Some(1.0);
        let inst = inst.with_requests(reqs).unwrap();
        let s = iid_stream(&inst, 1, 8000);
        let c0 = s.indices.iter().filter(|&&i| i == 0).count() as f64 / 8000.0;
        assert!((c0 - 0.75).abs() < 0.03);
    }

    #[test]
    fn fuzz_generated_values_in_unit_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for i in 0..1000 {
            let p = GenParams {
                kind: KINDS[i % KINDS.len()],
                d: rng.gen_range(1..=5),
                horizon: rng.gen_range(1..=12),
                k: rng.gen_range(1..=4),
                seed: rng.gen(),
                norm: if rng.gen() {
                    NormKind::Euclidean
                } else {
                    NormKind::MaxAbs
                },
                band: rng.gen_range(0.0..0.25),
                cap: rng.gen_range(0.0..=1.0),
                floor: rng.gen_range(0.0..=1.0),
                ..GenParams::default()
            };
            let inst = generate(&p).unwrap();
            for req in inst.requests() {
                for o in &req.opts {
                    assert!(o.v.iter().all(|x| (0.0..=1.0).contains(x)));
                    assert!(o.r.is_none_or(|r| (0.0..=1.0).contains(&r)));
                }
            }
        }
    }
}
