//! Flat `key = value` configuration files.
//!
//! Model keys: `p0`, `null.kind`, `null.delta0`, `null.sigma0`, `g.kind`
//! (`normal` | `grid`), `g.mean`, `g.variance`, `g.support`, `g.weights`
//! (comma-separated lists), `sampling_variance`.

use crate::error::{Error, Result};
use crate::model::{MixingDistribution, NullComponent, NullKind, TwoGroupsModel};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

/// Parsed key-value pairs, remembering the line each key came from.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    source: String,
    entries: BTreeMap<String, (String, u64)>,
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx as u64 + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: source.into(),
                    line: line_no,
                    msg: format!("expected `key = value`, found {line:?}"),
                });
            };
            let key = key.trim().to_string();
            if entries.insert(key.clone(), (value.trim().to_string(), line_no)).is_some() {
                return Err(Error::Parse {
                    path: source.into(),
                    line: line_no,
                    msg: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(Self {
            source: source.into(),
            entries,
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn err(&self, key: &str, msg: String) -> Error {
        let line = self.entries.get(key).map(|(_, l)| *l).unwrap_or(0);
        Error::Parse {
            path: self.source.clone(),
            line,
            msg,
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(key, format!("cannot parse {key} = {v:?}"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Parse {
            path: self.source.clone(),
            line: 0,
            msg: format!("missing required key {key:?}"),
        })
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| self.err(key, format!("bad number {s:?} in {key}"))))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    /// Errors on the first key not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        for key in self.keys() {
            if !allowed.contains(&key) {
                return Err(self.err(key, format!("unknown key {key:?}")));
            }
        }
        Ok(())
    }

    /// Wraps a domain validation error with the location of `key`.
    pub fn locate(&self, key: &str, e: Error) -> Error {
        match e {
            Error::InvalidInput(msg) => self.err(key, msg),
            other => other,
        }
    }
}

pub const MODEL_KEYS: &[&str] = &[
    "p0",
    "null.kind",
    "null.delta0",
    "null.sigma0",
    "g.kind",
    "g.mean",
    "g.variance",
    "g.support",
    "g.weights",
    "sampling_variance",
];

/// Builds a model from already-parsed keys (other keys are ignored).
pub fn model_from_keys(kv: &KeyValues) -> Result<TwoGroupsModel> {
    let p0: f64 = kv.require("p0")?;
    let delta0: f64 = kv.get("null.delta0")?.unwrap_or(0.0);
    let sigma0: f64 = kv.get("null.sigma0")?.unwrap_or(1.0);
    let kind = match kv.raw("null.kind") {
        Some("theoretical") => NullKind::Theoretical,
        Some("empirical") => NullKind::Empirical,
        Some(other) => return Err(kv.err("null.kind", format!("unknown null.kind {other:?}"))),
        None if delta0 == 0.0 && sigma0 == 1.0 => NullKind::Theoretical,
        None => NullKind::Empirical,
    };
    let null = match kind {
        NullKind::Theoretical => {
            if delta0 != 0.0 || sigma0 != 1.0 {
                return Err(kv.err("null.kind", "theoretical null requires delta0 = 0 and sigma0 = 1".into()));
            }
            NullComponent::theoretical()
        }
        NullKind::Empirical => NullComponent::empirical(delta0, sigma0).map_err(|e| kv.locate("null.sigma0", e))?,
    };
    let g_kind: String = kv.require("g.kind")?;
    let g = match g_kind.as_str() {
        "normal" => MixingDistribution::normal(kv.require("g.mean")?, kv.require("g.variance")?)
            .map_err(|e| kv.locate("g.variance", e))?,
        "grid" => {
            let support = kv.list("g.support")?.unwrap_or_default();
            let weights = kv.list("g.weights")?.unwrap_or_default();
            MixingDistribution::grid(support, weights).map_err(|e| kv.locate("g.weights", e))?
        }
        other => return Err(kv.err("g.kind", format!("unknown g.kind {other:?}"))),
    };
    let v: f64 = kv.get("sampling_variance")?.unwrap_or(1.0);
    TwoGroupsModel::new(p0, null, g, v).map_err(|e| kv.locate("p0", e))
}

pub fn parse_model(text: &str, source: &str) -> Result<TwoGroupsModel> {
    let kv = KeyValues::parse(text, source)?;
    kv.reject_unknown(MODEL_KEYS)?;
    model_from_keys(&kv)
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Serializes a model; `{}` formatting of f64 round-trips exactly.
pub fn write_model(model: &TwoGroupsModel) -> String {
    let mut s = String::new();
    let null = model.null();
    let _ = writeln!(s, "p0 = {}", model.p0());
    let kind = match null.kind() {
        NullKind::Theoretical => "theoretical",
        NullKind::Empirical => "empirical",
    };
    let _ = writeln!(s, "null.kind = {kind}");
    let _ = writeln!(s, "null.delta0 = {}", null.delta0());
    let _ = writeln!(s, "null.sigma0 = {}", null.sigma0());
    match model.g() {
        MixingDistribution::Normal { mean, variance } => {
            let _ = writeln!(s, "g.kind = normal");
            let _ = writeln!(s, "g.mean = {mean}");
            let _ = writeln!(s, "g.variance = {variance}");
        }
        MixingDistribution::Grid { support, weights } => {
            let _ = writeln!(s, "g.kind = grid");
            let _ = writeln!(s, "g.support = {}", join(support));
            let _ = writeln!(s, "g.weights = {}", join(weights));
        }
    }
    let _ = writeln!(s, "sampling_variance = {}", model.default_sampling_variance());
    s
}
