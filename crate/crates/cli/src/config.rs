//! Flat `key = value` experiment configuration.
//!
//! One entry per line; blank lines and lines starting with `#` are ignored.
//! Every key is optional and falls back to the default shown by
//! `ExperimentConfig::default().serialize()`. Unknown or repeated keys are
//! errors. `serialize` writes every key in a fixed order, and its output is
//! what the result files hash.

use std::collections::BTreeMap;
use std::fmt;

use coset::crng::{CrngConfig, Engine};
use coset::factor_graph::BpConfig;
use coset::models::{DistortionSpec, Kernel, MemorylessSource};
use coset::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    GenMatrix,
    Channel,
    Lossy,
    VerifyHash,
    CrngTest,
    Derandomize,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::GenMatrix,
        Kind::Channel,
        Kind::Lossy,
        Kind::VerifyHash,
        Kind::CrngTest,
        Kind::Derandomize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::GenMatrix => "gen-matrix",
            Kind::Channel => "channel",
            Kind::Lossy => "lossy",
            Kind::VerifyHash => "verify-hash",
            Kind::CrngTest => "crng-test",
            Kind::Derandomize => "derandomize",
        }
    }

    fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Code dimensions, either as rates in bits per letter or as row counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dims {
    Rates { r: f64, big_r: f64 },
    Rows { l: usize, k: usize },
}

impl Dims {
    /// `(l, k)` at block length `n`: rates are turned into rows by
    /// `round(rate * n / log2 q)`.
    pub fn rows(&self, n: usize, q: u32) -> (usize, usize) {
        match *self {
            Dims::Rows { l, k } => (l, k),
            Dims::Rates { r, big_r } => {
                let per = n as f64 / (q as f64).log2();
                ((r * per).round() as usize, (big_r * per).round() as usize)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoderChoice {
    Map,
    Bp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HashEnsemble {
    AllLinear,
    Sparse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Option<Kind>,
    pub q: u32,
    /// Block lengths of the sweep.
    pub n: Vec<usize>,
    pub tau: usize,
    pub dims: Dims,
    /// Channel preset, e.g. `bsc(0.02)`.
    pub channel: String,
    /// Input prior (channel coding) or source law (lossy coding).
    pub prior: String,
    /// Lossy test channel from source letters to reproduction letters.
    pub test_channel: String,
    pub distortion: String,
    /// Per-letter distortion threshold.
    pub d_max: f64,
    pub trials: u64,
    pub seed: u64,
    pub decoder: DecoderChoice,
    pub bp: BpConfig,
    pub crng: CrngConfig,
    /// Largest coset searched by exact decoders.
    pub decode_cap: u64,
    /// Normal quantile of the reported intervals.
    pub z: f64,
    pub hash_ensemble: HashEnsemble,
    pub hash_n: usize,
    pub hash_l: usize,
    pub hash_tau: usize,
    pub hash_rho: f64,
    /// Overrides of the computed hash constants.
    pub hash_alpha: Option<f64>,
    pub hash_beta: Option<f64>,
    pub instances: usize,
    pub max_n: usize,
    /// Hex bit string driving the deterministic encoder.
    pub omega: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: None,
            q: 2,
            n: vec![96, 192, 384],
            tau: 6,
            dims: Dims::Rates { r: 0.3, big_r: 0.6 },
            channel: "bsc(0.02)".into(),
            prior: "uniform".into(),
            test_channel: "bsc(0.2)".into(),
            distortion: "hamming".into(),
            d_max: 0.23,
            trials: 2000,
            seed: 1,
            decoder: DecoderChoice::Bp,
            bp: BpConfig::default(),
            crng: CrngConfig::default(),
            decode_cap: coset::coding::DEFAULT_DECODE_CAP,
            z: coset::stats::Z95,
            hash_ensemble: HashEnsemble::AllLinear,
            hash_n: 4,
            hash_l: 2,
            hash_tau: 2,
            hash_rho: 0.1,
            hash_alpha: None,
            hash_beta: None,
            instances: 200,
            max_n: 8,
            omega: None,
        }
    }
}

/// A configuration problem, pointing at the offending line or key.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "config line {l}, key `{k}`: {}", self.msg),
            (Some(l), None) => write!(f, "config line {l}: {}", self.msg),
            (None, Some(k)) => write!(f, "config key `{k}`: {}", self.msg),
            (None, None) => write!(f, "config: {}", self.msg),
        }
    }
}

impl std::error::Error for ConfigError {}

fn field_err(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError {
        line: None,
        key: Some(key.to_string()),
        msg: msg.into(),
    }
}

/// Raw entries with their line numbers, consumed key by key.
struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn take<T>(
        &mut self,
        key: &str,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ConfigError> {
        match self.0.remove(key) {
            None => Ok(None),
            Some((line, v)) => parse(&v).map(Some).map_err(|msg| ConfigError {
                line: Some(line),
                key: Some(key.to_string()),
                msg,
            }),
        }
    }

    fn set<T>(
        &mut self,
        key: &str,
        slot: &mut T,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<(), ConfigError> {
        if let Some(v) = self.take(key, parse)? {
            *slot = v;
        }
        Ok(())
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.0.get(key).map(|e| e.0)
    }
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse {s:?}"))
}

fn boolean(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {s:?}")),
    }
}

fn text(s: &str) -> Result<String, String> {
    if s.is_empty() {
        return Err("empty value".into());
    }
    Ok(s.to_string())
}

fn list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(|p| num(p.trim())).collect()
}

impl ExperimentConfig {
    pub fn parse(text_in: &str) -> Result<Self, ConfigError> {
        let mut raw = BTreeMap::new();
        for (i, line) in text_in.lines().enumerate() {
            let line_no = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = t.split_once('=').ok_or(ConfigError {
                line: Some(line_no),
                key: None,
                msg: format!("expected `key = value`, got {t:?}"),
            })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if let Some((first, _)) = raw.get(&k) {
                return Err(ConfigError {
                    line: Some(line_no),
                    key: Some(k),
                    msg: format!("repeated key (first set on line {first})"),
                });
            }
            raw.insert(k, (line_no, v));
        }
        let mut e = Entries(raw);
        let mut c = ExperimentConfig::default();
        let lines: BTreeMap<&str, Option<usize>> = KEYS.iter().map(|&k| (k, e.line(k))).collect();

        c.kind = e.take("kind", |s| Kind::parse(s).ok_or(format!("unknown experiment kind {s:?}")))?;
        e.set("q", &mut c.q, num)?;
        e.set("n", &mut c.n, list)?;
        e.set("tau", &mut c.tau, num)?;
        let r = e.take("r", num)?;
        let big_r = e.take("R", num)?;
        let l = e.take("l", num)?;
        let k = e.take("k", num)?;
        c.dims = match (r, big_r, l, k) {
            (None, None, None, None) => c.dims,
            (Some(r), Some(big_r), None, None) => Dims::Rates { r, big_r },
            (None, None, Some(l), Some(k)) => Dims::Rows { l, k },
            _ => {
                return Err(ConfigError {
                    line: lines["r"].or(lines["R"]).or(lines["l"]).or(lines["k"]),
                    key: None,
                    msg: "give either both of r and R or both of l and k".into(),
                })
            }
        };
        e.set("channel", &mut c.channel, text)?;
        e.set("prior", &mut c.prior, text)?;
        e.set("test_channel", &mut c.test_channel, text)?;
        e.set("distortion", &mut c.distortion, text)?;
        e.set("D", &mut c.d_max, num)?;
        e.set("trials", &mut c.trials, num)?;
        e.set("seed", &mut c.seed, num)?;
        e.set("decoder", &mut c.decoder, |s| match s {
            "bp" => Ok(DecoderChoice::Bp),
            "map" => Ok(DecoderChoice::Map),
            _ => Err(format!("decoder must be bp or map, got {s:?}")),
        })?;
        e.set("bp.max_iters", &mut c.bp.max_iters, num)?;
        e.set("bp.damping", &mut c.bp.damping, num)?;
        e.set("bp.tol", &mut c.bp.tol, num)?;
        e.set("crng.engine", &mut c.crng.engine, |s| match s {
            "sp" => Ok(Engine::SumProduct),
            "exact" => Ok(Engine::Exact),
            _ => Err(format!("crng.engine must be sp or exact, got {s:?}")),
        })?;
        e.set("crng.exact_cap", &mut c.crng.exact_cap, num)?;
        e.set("crng.early_stop", &mut c.crng.early_stop, boolean)?;
        e.set("crng.max_restarts", &mut c.crng.max_restarts, num)?;
        e.set("crng.bp.max_iters", &mut c.crng.bp.max_iters, num)?;
        e.set("crng.bp.damping", &mut c.crng.bp.damping, num)?;
        e.set("crng.bp.tol", &mut c.crng.bp.tol, num)?;
        e.set("decode_cap", &mut c.decode_cap, num)?;
        e.set("z", &mut c.z, num)?;
        e.set("hash.ensemble", &mut c.hash_ensemble, |s| match s {
            "all-linear" => Ok(HashEnsemble::AllLinear),
            "sparse" => Ok(HashEnsemble::Sparse),
            _ => Err(format!("hash.ensemble must be all-linear or sparse, got {s:?}")),
        })?;
        e.set("hash.n", &mut c.hash_n, num)?;
        e.set("hash.l", &mut c.hash_l, num)?;
        e.set("hash.tau", &mut c.hash_tau, num)?;
        e.set("hash.rho", &mut c.hash_rho, num)?;
        c.hash_alpha = e.take("hash.alpha", num)?;
        c.hash_beta = e.take("hash.beta", num)?;
        e.set("instances", &mut c.instances, num)?;
        e.set("max_n", &mut c.max_n, num)?;
        c.omega = e.take("omega", |s| Ok(s.to_string()))?;

        if let Some((k, (line, _))) = e.0.into_iter().min_by_key(|(_, (l, _))| *l) {
            return Err(ConfigError {
                line: Some(line),
                key: Some(k),
                msg: "unknown key".into(),
            });
        }
        c.validate().map_err(|mut err| {
            if let Some(k) = &err.key {
                err.line = lines.get(k.as_str()).copied().flatten();
            }
            err
        })?;
        Ok(c)
    }

    /// Canonical text form; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        if let Some(k) = self.kind {
            put("kind", k.name().into());
        }
        put("q", self.q.to_string());
        put(
            "n",
            self.n.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", "),
        );
        put("tau", self.tau.to_string());
        match self.dims {
            Dims::Rates { r, big_r } => {
                put("r", r.to_string());
                put("R", big_r.to_string());
            }
            Dims::Rows { l, k } => {
                put("l", l.to_string());
                put("k", k.to_string());
            }
        }
        put("channel", self.channel.clone());
        put("prior", self.prior.clone());
        put("test_channel", self.test_channel.clone());
        put("distortion", self.distortion.clone());
        put("D", self.d_max.to_string());
        put("trials", self.trials.to_string());
        put("seed", self.seed.to_string());
        put(
            "decoder",
            match self.decoder {
                DecoderChoice::Bp => "bp",
                DecoderChoice::Map => "map",
            }
            .into(),
        );
        put("bp.max_iters", self.bp.max_iters.to_string());
        put("bp.damping", self.bp.damping.to_string());
        put("bp.tol", self.bp.tol.to_string());
        put(
            "crng.engine",
            match self.crng.engine {
                Engine::SumProduct => "sp",
                Engine::Exact => "exact",
            }
            .into(),
        );
        put("crng.exact_cap", self.crng.exact_cap.to_string());
        put("crng.early_stop", self.crng.early_stop.to_string());
        put("crng.max_restarts", self.crng.max_restarts.to_string());
        put("crng.bp.max_iters", self.crng.bp.max_iters.to_string());
        put("crng.bp.damping", self.crng.bp.damping.to_string());
        put("crng.bp.tol", self.crng.bp.tol.to_string());
        put("decode_cap", self.decode_cap.to_string());
        put("z", self.z.to_string());
        put(
            "hash.ensemble",
            match self.hash_ensemble {
                HashEnsemble::AllLinear => "all-linear",
                HashEnsemble::Sparse => "sparse",
            }
            .into(),
        );
        put("hash.n", self.hash_n.to_string());
        put("hash.l", self.hash_l.to_string());
        put("hash.tau", self.hash_tau.to_string());
        put("hash.rho", self.hash_rho.to_string());
        if let Some(a) = self.hash_alpha {
            put("hash.alpha", a.to_string());
        }
        if let Some(b) = self.hash_beta {
            put("hash.beta", b.to_string());
        }
        put("instances", self.instances.to_string());
        put("max_n", self.max_n.to_string());
        if let Some(o) = &self.omega {
            put("omega", o.clone());
        }
        out
    }

    /// Semantic checks. Errors name the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let field = Field::new(self.q).map_err(|e| field_err("q", e.to_string()))?;
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(field_err("n", "block lengths must be positive"));
        }
        if self.tau == 0 || self.tau % 2 != 0 {
            return Err(field_err("tau", format!("must be a positive even integer, got {}", self.tau)));
        }
        if let Dims::Rates { r, big_r } = self.dims {
            let cap = (self.q as f64).log2();
            if !(0.0..=cap).contains(&r) {
                return Err(field_err("r", format!("must lie in [0, log2 q], got {r}")));
            }
            if !(0.0..=cap).contains(&big_r) {
                return Err(field_err("R", format!("must lie in [0, log2 q], got {big_r}")));
            }
        }
        // Presets must always parse; alphabets only have to fit the field
        // for the experiment that uses them.
        let kernel = Kernel::from_preset(&self.channel).map_err(|e| field_err("channel", e.to_string()))?;
        let test = Kernel::from_preset(&self.test_channel).map_err(|e| field_err("test_channel", e.to_string()))?;
        match self.kind {
            Some(Kind::Channel | Kind::Derandomize) => {
                if kernel.inputs() != field.size() {
                    return Err(field_err(
                        "channel",
                        format!("takes {} input letters, the field has {}", kernel.inputs(), self.q),
                    ));
                }
                MemorylessSource::from_preset(&self.prior, 1, field.size())
                    .map_err(|e| field_err("prior", e.to_string()))?;
            }
            Some(Kind::Lossy) => {
                if test.outputs() != Some(field.size()) {
                    return Err(field_err("test_channel", "must output field letters"));
                }
                MemorylessSource::from_preset(&self.prior, 1, test.inputs())
                    .map_err(|e| field_err("prior", e.to_string()))?;
            }
            _ => {}
        }
        self.distortion_spec()?;
        if !(self.d_max >= 0.0) {
            return Err(field_err("D", "must be nonnegative"));
        }
        if self.trials == 0 {
            return Err(field_err("trials", "must be positive"));
        }
        self.bp.validate().map_err(|e| field_err("bp.max_iters", e.to_string()))?;
        self.crng.validate().map_err(|e| field_err("crng.exact_cap", e.to_string()))?;
        if self.decode_cap == 0 {
            return Err(field_err("decode_cap", "must be positive"));
        }
        if !(self.z > 0.0 && self.z.is_finite()) {
            return Err(field_err("z", "must be positive"));
        }
        if self.hash_n == 0 || self.hash_l == 0 {
            return Err(field_err("hash.n", "hash.n and hash.l must be positive"));
        }
        if self.hash_tau == 0 || self.hash_tau % 2 != 0 {
            return Err(field_err("hash.tau", "must be a positive even integer"));
        }
        if !(self.hash_rho >= 0.0) {
            return Err(field_err("hash.rho", "must be nonnegative"));
        }
        if self.max_n == 0 {
            return Err(field_err("max_n", "must be positive"));
        }
        if let Some(o) = &self.omega {
            hex::decode(o).map_err(|e| field_err("omega", format!("not a hex string: {e}")))?;
        }
        Ok(())
    }

    pub fn field(&self) -> Field {
        Field::new(self.q).expect("validated")
    }

    pub fn distortion_spec(&self) -> Result<DistortionSpec, ConfigError> {
        match self.distortion.as_str() {
            "hamming" => Ok(DistortionSpec::hamming(self.q as usize)),
            other => Err(field_err("distortion", format!("unknown distortion {other:?}"))),
        }
    }

    /// Applies `--exact-caps crng=<u64>,decode=<u64>`.
    pub fn apply_exact_caps(&mut self, spec: &str) -> Result<(), ConfigError> {
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| field_err("exact-caps", format!("expected name=value, got {part:?}")))?;
            let v: u64 = num(v.trim()).map_err(|m| field_err("exact-caps", m))?;
            match k.trim() {
                "crng" => self.crng.exact_cap = v,
                "decode" => self.decode_cap = v,
                other => return Err(field_err("exact-caps", format!("unknown cap {other:?}"))),
            }
        }
        self.validate()
    }
}

const KEYS: &[&str] = &[
    "kind", "q", "n", "tau", "r", "R", "l", "k", "channel", "prior", "test_channel", "distortion",
    "D", "trials", "seed", "decoder", "bp.max_iters", "bp.damping", "bp.tol", "crng.engine",
    "crng.exact_cap", "crng.early_stop", "crng.max_restarts", "crng.bp.max_iters",
    "crng.bp.damping", "crng.bp.tol", "decode_cap", "z", "hash.ensemble", "hash.n", "hash.l",
    "hash.tau", "hash.rho", "hash.alpha", "hash.beta", "instances", "max_n", "omega",
];
