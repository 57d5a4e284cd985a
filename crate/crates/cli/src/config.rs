//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;

use polarity_core::{HemisphereMode, ParamError, Params64};
use sha2::{Digest, Sha256};

/// Every accepted key, in canonical order.
pub const KEYS: [&str; 15] = [
    "N",
    "D",
    "R",
    "k_on",
    "k_off",
    "k_fb",
    "t_end",
    "burn_in",
    "snapshot_interval",
    "dt_max",
    "epsilon",
    "replicas",
    "seed",
    "max_pairs",
    "hemisphere_mode",
];

pub const DEFAULT_MAX_PAIRS: u64 = 10_000;
pub const DEFAULT_EPSILON: f64 = 0.2;
/// Snapshots per trajectory when `snapshot_interval` is not given.
pub const DEFAULT_SNAPSHOTS: f64 = 100.0;
/// Auto burn-in in relaxation times.
pub const AUTO_BURN_IN_RELAXATIONS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub enum BurnIn {
    Fixed(f64),
    Auto,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: Params64,
    /// Length of the observation window that follows the burn-in.
    pub t_end: f64,
    pub burn_in_spec: BurnIn,
    /// Resolved burn-in time.
    pub burn_in: f64,
    pub snapshot_interval: f64,
    pub dt_max: f64,
    pub epsilon: f64,
    pub replicas: u64,
    pub master_seed: u64,
    pub max_pairs: u64,
    pub hemisphere_mode: HemisphereMode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigErrorKind {
    Syntax(String),
    UnknownKey(String),
    DuplicateKey(String),
    MissingKey(&'static str),
    Unparsable { key: String, value: String },
    Invalid(ParamError),
    InvalidValue { key: &'static str, reason: String },
    AutoBurnInUnavailable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line the error refers to; `None` for keys that are absent.
    pub line: Option<usize>,
    pub kind: ConfigErrorKind,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: ")?,
            None => write!(f, "config: ")?,
        }
        match &self.kind {
            ConfigErrorKind::Syntax(s) => write!(f, "expected `key = value`, got `{s}`"),
            ConfigErrorKind::UnknownKey(k) => write!(f, "unknown key `{k}`"),
            ConfigErrorKind::DuplicateKey(k) => write!(f, "key `{k}` set twice"),
            ConfigErrorKind::MissingKey(k) => write!(f, "required key `{k}` is missing"),
            ConfigErrorKind::Unparsable { key, value } => write!(f, "cannot parse `{value}` for `{key}`"),
            ConfigErrorKind::Invalid(e) => write!(f, "{e}"),
            ConfigErrorKind::InvalidValue { key, reason } => write!(f, "`{key}` {reason}"),
            ConfigErrorKind::AutoBurnInUnavailable => {
                write!(f, "burn_in = auto needs a positive relaxation rate (k_on > 0)")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

struct Entries<'a> {
    map: BTreeMap<&'a str, (usize, &'a str)>,
}

impl<'a> Entries<'a> {
    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|e| e.0)
    }

    fn raw(&self, key: &str) -> Option<(usize, &'a str)> {
        self.map.get(key).copied()
    }

    fn get<T>(&self, key: &'static str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => parse(v).map(Some).ok_or(ConfigError {
                line: Some(line),
                kind: ConfigErrorKind::Unparsable { key: key.into(), value: v.into() },
            }),
        }
    }

    fn require<T>(&self, key: &'static str, parse: impl Fn(&str) -> Option<T>) -> Result<T, ConfigError> {
        self.get(key, parse)?
            .ok_or(ConfigError { line: None, kind: ConfigErrorKind::MissingKey(key) })
    }

    fn invalid(&self, key: &'static str, reason: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.line(key),
            kind: ConfigErrorKind::InvalidValue { key, reason: reason.into() },
        }
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Accepts `1000` as well as `1e3`.
fn parse_count(s: &str) -> Option<u64> {
    s.parse::<u64>().ok().or_else(|| {
        let v = parse_f64(s)?;
        (v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(63)).then_some(v as u64)
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError { line: Some(line), kind: ConfigErrorKind::Syntax(content.into()) });
        };
        let (k, v) = (k.trim(), v.trim());
        let Some(&key) = KEYS.iter().find(|&&known| known == k) else {
            return Err(ConfigError { line: Some(line), kind: ConfigErrorKind::UnknownKey(k.into()) });
        };
        if map.insert(key, (line, v)).is_some() {
            return Err(ConfigError { line: Some(line), kind: ConfigErrorKind::DuplicateKey(k.into()) });
        }
    }
    let e = Entries { map };

    let n_total = e.require("N", parse_count)?;
    let diffusion = e.require("D", parse_f64)?;
    let radius = e.require("R", parse_f64)?;
    let k_on = e.require("k_on", parse_f64)?;
    let k_off = e.require("k_off", parse_f64)?;
    let k_fb = e.require("k_fb", parse_f64)?;
    let params = Params64::new(n_total, diffusion, radius, k_on, k_off, k_fb).map_err(|err| {
        let line = match &err {
            ParamError::AssumptionViolated { .. } => e.line("k_fb").max(e.line("k_off")),
            ParamError::InvalidGeometry(_) => e.line("R"),
            ParamError::NonPositive { name, .. } | ParamError::Negative { name, .. } | ParamError::NonFinite { name } => {
                e.line(name)
            }
            ParamError::EmptyPopulation => e.line("N"),
            _ => None,
        };
        ConfigError { line, kind: ConfigErrorKind::Invalid(err) }
    })?;

    let t_end = e.require("t_end", parse_f64)?;
    if t_end < 0.0 {
        return Err(e.invalid("t_end", "must be non-negative"));
    }

    let burn_in_spec = e
        .get("burn_in", |s| if s == "auto" { Some(BurnIn::Auto) } else { parse_f64(s).map(BurnIn::Fixed) })?
        .unwrap_or(BurnIn::Fixed(0.0));
    let burn_in = match burn_in_spec {
        BurnIn::Fixed(b) if b < 0.0 => return Err(e.invalid("burn_in", "must be non-negative")),
        BurnIn::Fixed(b) => b,
        BurnIn::Auto => {
            let rate = params.derive().relax_rate;
            if !(rate > 0.0) {
                return Err(ConfigError { line: e.line("burn_in"), kind: ConfigErrorKind::AutoBurnInUnavailable });
            }
            AUTO_BURN_IN_RELAXATIONS / rate
        }
    };

    let snapshot_interval = e
        .get("snapshot_interval", parse_f64)?
        .unwrap_or(if t_end > 0.0 { t_end / DEFAULT_SNAPSHOTS } else { 1.0 });
    if !(snapshot_interval > 0.0) {
        return Err(e.invalid("snapshot_interval", "must be positive"));
    }
    let dt_max = e.get("dt_max", parse_f64)?.unwrap_or_else(|| params.default_dt_max());
    if !(dt_max > 0.0) {
        return Err(e.invalid("dt_max", "must be positive"));
    }
    let epsilon = e.get("epsilon", parse_f64)?.unwrap_or(DEFAULT_EPSILON);
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(e.invalid("epsilon", "must lie in (0, 1)"));
    }
    let replicas = e.get("replicas", parse_count)?.unwrap_or(1);
    if replicas < 1 {
        return Err(e.invalid("replicas", "must be at least 1"));
    }
    let master_seed = e.get("seed", parse_count)?.unwrap_or(0);
    let max_pairs = e.get("max_pairs", parse_count)?.unwrap_or(DEFAULT_MAX_PAIRS);
    let hemisphere_mode = e.get("hemisphere_mode", |s| s.parse().ok())?.unwrap_or(HemisphereMode::Auto);

    Ok(RunConfig {
        params,
        t_end,
        burn_in_spec,
        burn_in,
        snapshot_interval,
        dt_max,
        epsilon,
        replicas,
        master_seed,
        max_pairs,
        hemisphere_mode,
    })
}

impl RunConfig {
    /// Fully resolved configuration, one `key = value` per line in [`KEYS`] order.
    /// Reparsing it yields the same config.
    pub fn canonical(&self) -> String {
        let p = &self.params;
        let burn_in = match self.burn_in_spec {
            BurnIn::Auto => "auto".to_string(),
            BurnIn::Fixed(b) => b.to_string(),
        };
        let values = [
            p.n_total.to_string(),
            p.diffusion.to_string(),
            p.radius.to_string(),
            p.k_on.to_string(),
            p.k_off.to_string(),
            p.k_fb.to_string(),
            self.t_end.to_string(),
            burn_in,
            self.snapshot_interval.to_string(),
            self.dt_max.to_string(),
            self.epsilon.to_string(),
            self.replicas.to_string(),
            self.master_seed.to_string(),
            self.max_pairs.to_string(),
            self.hemisphere_mode.to_string(),
        ];
        KEYS.iter().zip(values).map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Snapshot times `burn_in + k * snapshot_interval` covering `[burn_in, burn_in + t_end]`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let count = (self.t_end / self.snapshot_interval + 1e-9).floor() as u64;
        (0..=count).map(|k| self.burn_in + k as f64 * self.snapshot_interval).collect()
    }

    pub fn end_time(&self) -> f64 {
        self.burn_in + self.t_end
    }
}
