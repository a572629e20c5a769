use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// A sampled hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Categorical(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(i) => Some(i as f64),
            ParamValue::Float(x) => Some(x),
            ParamValue::Categorical(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Categorical(s) => f.write_str(s),
        }
    }
}

/// Parameter name → value.
pub type ParamMap = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamKind {
    Uniform { low: f64, high: f64 },
    LogUniform { low: f64, high: f64 },
    IntUniform { low: i64, high: i64 },
    IntLogUniform { low: i64, high: i64 },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDomain {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

impl ParamDomain {
    pub fn uniform(name: &str, low: f64, high: f64) -> Self {
        Self::new(name, ParamKind::Uniform { low, high })
    }

    pub fn log_uniform(name: &str, low: f64, high: f64) -> Self {
        Self::new(name, ParamKind::LogUniform { low, high })
    }

    pub fn int_uniform(name: &str, low: i64, high: i64) -> Self {
        Self::new(name, ParamKind::IntUniform { low, high })
    }

    pub fn int_log_uniform(name: &str, low: i64, high: i64) -> Self {
        Self::new(name, ParamKind::IntLogUniform { low, high })
    }

    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Self::new(
            name,
            ParamKind::Categorical {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
        )
    }

    fn new(name: &str, kind: ParamKind) -> Self {
        ParamDomain {
            name: name.to_string(),
            kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::parse(format!("space.{}", self.name), msg));
        match &self.kind {
            ParamKind::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return bad(format!("need finite low < high, got [{low}, {high}]"));
                }
            }
            ParamKind::LogUniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && *low > 0.0 && low < high) {
                    return bad(format!("need 0 < low < high, got [{low}, {high}]"));
                }
            }
            ParamKind::IntUniform { low, high } => {
                if low >= high {
                    return bad(format!("need low < high, got [{low}, {high}]"));
                }
            }
            ParamKind::IntLogUniform { low, high } => {
                if !(*low > 0 && low < high) {
                    return bad(format!("need 0 < low < high, got [{low}, {high}]"));
                }
            }
            ParamKind::Categorical { choices } => {
                if choices.is_empty() {
                    return bad("categorical list is empty".into());
                }
                let unique: HashSet<&String> = choices.iter().collect();
                if unique.len() != choices.len() {
                    return bad("categorical list has duplicates".into());
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, value: &ParamValue) -> bool {
        match (&self.kind, value) {
            (ParamKind::Uniform { low, high } | ParamKind::LogUniform { low, high }, ParamValue::Float(x)) => {
                low <= x && x <= high
            }
            (ParamKind::IntUniform { low, high } | ParamKind::IntLogUniform { low, high }, ParamValue::Int(i)) => {
                low <= i && i <= high
            }
            (ParamKind::Categorical { choices }, ParamValue::Categorical(c)) => choices.contains(c),
            _ => false,
        }
    }

    pub fn is_log(&self) -> bool {
        matches!(
            self.kind,
            ParamKind::LogUniform { .. } | ParamKind::IntLogUniform { .. }
        )
    }

    pub fn is_integer(&self) -> bool {
        matches!(
            self.kind,
            ParamKind::IntUniform { .. } | ParamKind::IntLogUniform { .. }
        )
    }

    /// Numeric interval the density model works in: natural log for log
    /// kinds, widened by half a unit for integer kinds. `None` for
    /// categorical domains.
    pub fn internal_bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            ParamKind::Uniform { low, high } => Some((low, high)),
            ParamKind::LogUniform { low, high } => Some((low.ln(), high.ln())),
            ParamKind::IntUniform { low, high } => Some((low as f64 - 0.5, high as f64 + 0.5)),
            ParamKind::IntLogUniform { low, high } => Some(((low as f64 - 0.5).ln(), (high as f64 + 0.5).ln())),
            ParamKind::Categorical { .. } => None,
        }
    }

    /// Value → internal coordinate (category index for categoricals).
    pub fn to_internal(&self, value: &ParamValue) -> Option<f64> {
        match (&self.kind, value) {
            (ParamKind::Categorical { choices }, ParamValue::Categorical(c)) => {
                choices.iter().position(|x| x == c).map(|i| i as f64)
            }
            (ParamKind::Categorical { .. }, _) => None,
            (_, v) => {
                let x = v.as_f64()?;
                Some(if self.is_log() { x.ln() } else { x })
            }
        }
    }

    /// Internal coordinate → value, rounding and clamping integer kinds.
    pub fn from_internal(&self, x: f64) -> ParamValue {
        match &self.kind {
            ParamKind::Uniform { low, high } => ParamValue::Float(x.clamp(*low, *high)),
            ParamKind::LogUniform { low, high } => ParamValue::Float(x.exp().clamp(*low, *high)),
            ParamKind::IntUniform { low, high } => ParamValue::Int((x.round() as i64).clamp(*low, *high)),
            ParamKind::IntLogUniform { low, high } => ParamValue::Int((x.exp().round() as i64).clamp(*low, *high)),
            ParamKind::Categorical { choices } => {
                let i = (x.round().max(0.0) as usize).min(choices.len() - 1);
                ParamValue::Categorical(choices[i].clone())
            }
        }
    }

    /// Independent uniform draw (log-uniform for log kinds).
    pub fn sample_uniform(&self, rng: &mut Rng) -> ParamValue {
        match &self.kind {
            ParamKind::IntUniform { low, high } => ParamValue::Int(rng.random_range(*low..=*high)),
            ParamKind::Categorical { choices } => {
                ParamValue::Categorical(choices[rng.random_range(0..choices.len())].clone())
            }
            _ => {
                let (lo, hi) = self.internal_bounds().expect("numeric domain");
                self.from_internal(lo + (hi - lo) * rng.random::<f64>())
            }
        }
    }
}

/// Ordered list of parameter domains; the order fixes CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<ParamDomain>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamDomain>) -> Result<Self> {
        let space = SearchSpace { params };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for d in &self.params {
            d.validate()?;
            if !seen.insert(d.name.as_str()) {
                return Err(Error::parse("space", format!("duplicate parameter `{}`", d.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|d| d.name.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&ParamDomain> {
        self.params.iter().find(|d| d.name == name)
    }

    /// `params` holds exactly this space's names, each within its domain.
    pub fn check(&self, params: &ParamMap) -> Result<()> {
        for d in &self.params {
            match params.get(&d.name) {
                None => return Err(Error::usage(format!("missing parameter `{}`", d.name))),
                Some(v) if !d.contains(v) => {
                    return Err(Error::usage(format!(
                        "parameter `{}` = {v} is outside its domain",
                        d.name
                    )))
                }
                _ => {}
            }
        }
        if let Some(extra) = params.keys().find(|k| self.get(k).is_none()) {
            return Err(Error::usage(format!("unknown parameter `{extra}`")));
        }
        Ok(())
    }

    pub fn sample_uniform(&self, rng: &mut Rng) -> ParamMap {
        self.params
            .iter()
            .map(|d| (d.name.clone(), d.sample_uniform(rng)))
            .collect()
    }

    /// Human-readable differences against `other`, empty when equal.
    pub fn diff(&self, other: &SearchSpace) -> Vec<String> {
        let mut out = Vec::new();
        for d in &self.params {
            match other.get(&d.name) {
                None => out.push(format!("- {}: {:?}", d.name, d.kind)),
                Some(o) if o.kind != d.kind => out.push(format!("~ {}: {:?} -> {:?}", d.name, d.kind, o.kind)),
                _ => {}
            }
        }
        for o in &other.params {
            if self.get(&o.name).is_none() {
                out.push(format!("+ {}: {:?}", o.name, o.kind));
            }
        }
        if out.is_empty() && self.names().ne(other.names()) {
            out.push("parameter order differs".into());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn invalid_domains_are_rejected() {
        assert!(ParamDomain::uniform("a", 1.0, 1.0).validate().is_err());
        assert!(ParamDomain::log_uniform("a", 0.0, 1.0).validate().is_err());
        assert!(ParamDomain::int_log_uniform("a", 0, 10).validate().is_err());
        assert!(ParamDomain::categorical("a", &[]).validate().is_err());
        assert!(ParamDomain::categorical("a", &["x", "x"]).validate().is_err());
        let dup = SearchSpace::new(vec![
            ParamDomain::uniform("a", 0.0, 1.0),
            ParamDomain::uniform("a", 0.0, 2.0),
        ]);
        assert!(dup.is_err());
    }

    #[test]
    fn uniform_samples_respect_domains() {
        let space = SearchSpace::new(vec![
            ParamDomain::uniform("u", -1.0, 1.0),
            ParamDomain::log_uniform("l", 1e-5, 1e-1),
            ParamDomain::int_uniform("i", 16, 256),
            ParamDomain::int_log_uniform("il", 1000, 1_000_000),
            ParamDomain::categorical("c", &["true", "false"]),
        ])
        .unwrap();
        let mut r = rng::seeded(0);
        for _ in 0..2000 {
            let p = space.sample_uniform(&mut r);
            space.check(&p).unwrap();
        }
    }

    #[test]
    fn space_json_round_trip_and_diff() {
        let space = SearchSpace::new(vec![
            ParamDomain::log_uniform("lr", 1e-5, 1e-1),
            ParamDomain::categorical("c", &["a", "b"]),
        ])
        .unwrap();
        let text = serde_json::to_string(&space).unwrap();
        assert!(text.contains(r#""kind":"log_uniform""#));
        let back: SearchSpace = serde_json::from_str(&text).unwrap();
        assert_eq!(back, space);
        assert!(space.diff(&back).is_empty());

        let mut other = space.clone();
        other.params[0] = ParamDomain::log_uniform("lr", 1e-4, 1e-1);
        other.params.push(ParamDomain::uniform("x", 0.0, 1.0));
        let d = space.diff(&other);
        assert_eq!(d.len(), 2, "{d:?}");
    }

    #[test]
    fn param_values_deserialize_by_shape() {
        let m: ParamMap = serde_json::from_str(r#"{"a": 3, "b": 0.0, "c": "true", "d": 1e-300}"#).unwrap();
        assert_eq!(m["a"], ParamValue::Int(3));
        assert_eq!(m["b"], ParamValue::Float(0.0));
        assert_eq!(m["c"], ParamValue::Categorical("true".into()));
        assert_eq!(m["d"], ParamValue::Float(1e-300));
    }
}
