//! Run configuration: a flat `key = value` file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::output::Format;

/// Ordered string map; later sources overwrite earlier ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    /// Parses `key = value` lines. `#` starts a comment; blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::input(format!("config line {}: expected key = value", i + 1)))?;
            let key = normalize_key(k.trim());
            if key.is_empty() {
                return Err(Error::input(format!("config line {}: empty key", i + 1)));
            }
            map.insert(key, v.trim().to_string());
        }
        Ok(Self { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.map.insert(normalize_key(key), value.to_string());
    }

    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn overlay(&mut self, other: &KeyValues) {
        for (k, v) in &other.map {
            self.map.insert(k.clone(), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| Error::input(format!("cannot parse {key} = {v}"))),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.parsed(key)?.ok_or_else(|| Error::input(format!("missing required parameter --{key}")))
    }

    pub fn positive_or(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.f64_or(key, default)?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::input(format!("{key} must be positive (got {v})")));
        }
        Ok(v)
    }

    pub fn count_or(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.parsed(key)?.unwrap_or(default);
        if v == 0 {
            return Err(Error::input(format!("{key} must be at least 1")));
        }
        Ok(v)
    }
}

fn normalize_key(k: &str) -> String {
    match k {
        "A" => "amplitude".to_string(),
        other => other.to_ascii_lowercase().replace('-', "_"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MackeyGlass,
    SuarezSchopf,
    Custom,
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mackey_glass" | "mackey-glass" | "mg" => Ok(Self::MackeyGlass),
            "suarez_schopf" | "suarez-schopf" | "ss" => Ok(Self::SuarezSchopf),
            "custom" | "linear" => Ok(Self::Custom),
            other => Err(Error::input(format!("unknown model {other}"))),
        }
    }
}

/// Model parameters with defaults filled in. Mackey-Glass defaults to
/// `β = 0.2, γ = 0.1, k = 10`; the forced oscillator to `γ = 1, A = 0`.
/// The custom model is the scalar linear delay equation `ẋ = a x + b x(t−τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub tau: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k: f64,
    pub alpha: f64,
    pub amplitude: f64,
    pub a: f64,
    pub b: f64,
}

impl ModelParams {
    pub const SWEEPABLE: [&'static str; 8] = ["tau", "beta", "gamma", "k", "alpha", "amplitude", "a", "b"];

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let kind: ModelKind =
            kv.get("model").ok_or_else(|| Error::input("missing required parameter --model"))?.parse()?;
        let tau = kv.require_f64("tau")?;
        let mut p = Self {
            kind,
            tau,
            beta: kv.f64_or("beta", 0.2)?,
            gamma: kv.f64_or("gamma", if kind == ModelKind::SuarezSchopf { 1.0 } else { 0.1 })?,
            k: kv.f64_or("k", 10.0)?,
            alpha: f64::NAN,
            amplitude: kv.f64_or("amplitude", 0.0)?,
            a: f64::NAN,
            b: f64::NAN,
        };
        match kind {
            ModelKind::SuarezSchopf => p.alpha = kv.require_f64("alpha")?,
            ModelKind::Custom => {
                p.a = kv.require_f64("a")?;
                p.b = kv.require_f64("b")?;
            }
            ModelKind::MackeyGlass => {}
        }
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::input(format!("tau must be positive (got {})", self.tau)));
        }
        match self.kind {
            ModelKind::MackeyGlass if !(self.beta > 0.0 && self.gamma >= 0.0 && self.k > 1.0) => {
                Err(Error::input("Mackey-Glass needs β > 0, γ ≥ 0 and k > 1"))
            }
            ModelKind::SuarezSchopf if !(self.alpha > 0.0 && self.gamma > 0.0 && self.amplitude.is_finite()) => {
                Err(Error::input("Suarez-Schopf needs α > 0 and γ > 0"))
            }
            ModelKind::Custom if !(self.a.is_finite() && self.b.is_finite()) => {
                Err(Error::input("custom model needs finite a and b"))
            }
            _ => Ok(()),
        }
    }

    pub fn with(&self, key: &str, value: f64) -> Result<Self> {
        let mut p = *self;
        match key {
            "tau" => p.tau = value,
            "beta" => p.beta = value,
            "gamma" => p.gamma = value,
            "k" => p.k = value,
            "alpha" => p.alpha = value,
            "amplitude" => p.amplitude = value,
            "a" => p.a = value,
            "b" => p.b = value,
            other => return Err(Error::input(format!("parameter {other} cannot be swept"))),
        }
        p.validate()?;
        Ok(p)
    }

    /// Classical settings for which reference values are tabulated.
    pub fn is_classical_mackey_glass(&self) -> bool {
        self.kind == ModelKind::MackeyGlass && self.beta == 0.2 && self.gamma == 0.1 && self.k == 10.0
    }

    pub fn is_classical_suarez_schopf(&self) -> bool {
        self.kind == ModelKind::SuarezSchopf
            && self.alpha == 0.75
            && self.gamma == 1.0
            && (self.tau - 1.596).abs() < 1e-12
    }
}

/// Where and how results are written.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Format,
}

impl OutputConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        Ok(Self {
            path: kv.get("output").filter(|p| !p.is_empty() && *p != "-").map(PathBuf::from),
            format: kv.parsed("format")?.unwrap_or(Format::Csv),
        })
    }
}
