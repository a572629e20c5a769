//! Built-in search spaces and hyperparameter presets for both agents.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::tpe::{ParamDomain, ParamMap, ParamValue, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Ppo,
    Sac,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Ppo => "ppo",
            Algo::Sac => "sac",
        }
    }

    pub fn search_space(self) -> SearchSpace {
        match self {
            Algo::Ppo => ppo_space(),
            Algo::Sac => sac_space(),
        }
    }

    pub fn preset(self, preset: Preset) -> ParamMap {
        match (self, preset) {
            (Algo::Ppo, Preset::Default) => ppo_defaults(),
            (Algo::Ppo, Preset::BestPaper) => ppo_best_paper(),
            (Algo::Sac, Preset::Default) => sac_defaults(),
            (Algo::Sac, Preset::BestPaper) => sac_best_paper(),
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ppo" => Ok(Algo::Ppo),
            "sac" => Ok(Algo::Sac),
            other => Err(Error::usage(format!(
                "unknown algorithm `{other}` (expected ppo or sac)"
            ))),
        }
    }
}

/// Static hyperparameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Library defaults.
    Default,
    /// Best values reported for the full-scale study.
    BestPaper,
}

/// The 9-dimensional PPO space.
pub fn ppo_space() -> SearchSpace {
    SearchSpace::new(vec![
        ParamDomain::log_uniform("learning_rate", 1e-5, 1e-1),
        ParamDomain::int_uniform("n_steps", 64, 4096),
        ParamDomain::int_uniform("batch_size", 16, 256),
        ParamDomain::uniform("gamma", 0.95, 0.999),
        ParamDomain::uniform("ent_coef", 0.0, 0.1),
        ParamDomain::uniform("vf_coef", 0.2, 1.0),
        ParamDomain::uniform("max_grad_norm", 0.1, 10.0),
        ParamDomain::uniform("gae_lambda", 0.8, 0.99),
        ParamDomain::uniform("clip_range", 0.1, 0.4),
    ])
    .expect("built-in space is valid")
}

/// The 10-dimensional SAC space.
pub fn sac_space() -> SearchSpace {
    SearchSpace::new(vec![
        ParamDomain::int_log_uniform("buffer_size", 1000, 1_000_000),
        ParamDomain::int_log_uniform("learning_starts", 100, 10_000),
        ParamDomain::int_uniform("batch_size", 16, 256),
        ParamDomain::log_uniform("tau", 0.001, 0.1),
        ParamDomain::uniform("gamma", 0.9, 0.999),
        ParamDomain::log_uniform("learning_rate", 1e-5, 1e-1),
        ParamDomain::uniform("ent_coef", 0.0, 0.2),
        ParamDomain::int_uniform("target_update_interval", 1, 100),
        ParamDomain::int_uniform("gradient_steps", 1, 20),
        ParamDomain::categorical("use_sde", &["true", "false"]),
    ])
    .expect("built-in space is valid")
}

fn map(entries: &[(&str, ParamValue)]) -> ParamMap {
    entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

use ParamValue::{Categorical as C, Float as F, Int as I};

pub fn ppo_defaults() -> ParamMap {
    map(&[
        ("learning_rate", F(0.0003)),
        ("n_steps", I(2048)),
        ("batch_size", I(64)),
        ("gamma", F(0.99)),
        ("ent_coef", F(0.0)),
        ("vf_coef", F(0.5)),
        ("max_grad_norm", F(0.5)),
        ("gae_lambda", F(0.95)),
        ("clip_range", F(0.2)),
    ])
}

pub fn ppo_best_paper() -> ParamMap {
    map(&[
        ("learning_rate", F(0.0153)),
        ("n_steps", I(559)),
        ("batch_size", I(193)),
        ("gamma", F(0.9657)),
        ("ent_coef", F(0.0548)),
        ("vf_coef", F(0.3999)),
        ("max_grad_norm", F(9.4229)),
        ("gae_lambda", F(0.8543)),
        ("clip_range", F(0.2865)),
    ])
}

pub fn sac_defaults() -> ParamMap {
    map(&[
        ("buffer_size", I(1_000_000)),
        ("learning_starts", I(1000)),
        ("batch_size", I(256)),
        ("tau", F(0.005)),
        ("gamma", F(0.99)),
        ("learning_rate", F(0.0003)),
        ("ent_coef", F(0.2)),
        ("target_update_interval", I(1)),
        ("gradient_steps", I(1)),
        ("use_sde", C("false".into())),
    ])
}

pub fn sac_best_paper() -> ParamMap {
    map(&[
        ("buffer_size", I(79709)),
        ("learning_starts", I(7126)),
        ("batch_size", I(104)),
        ("tau", F(0.034480)),
        ("gamma", F(0.920970)),
        ("learning_rate", F(0.000728)),
        ("ent_coef", F(0.008345)),
        ("target_update_interval", I(40)),
        ("gradient_steps", I(10)),
        ("use_sde", C("true".into())),
    ])
}

/// Typed accessors used when turning a parameter map into an agent config.
pub(crate) struct Reader<'a>(pub &'a ParamMap);

impl Reader<'_> {
    fn get(&self, name: &str) -> Result<&ParamValue> {
        self.0
            .get(name)
            .ok_or_else(|| Error::usage(format!("missing hyperparameter `{name}`")))
    }

    pub fn f64(&self, name: &str) -> Result<f64> {
        self.get(name)?
            .as_f64()
            .ok_or_else(|| Error::usage(format!("hyperparameter `{name}` must be numeric")))
    }

    pub fn usize(&self, name: &str) -> Result<usize> {
        match self.get(name)? {
            ParamValue::Int(i) if *i >= 0 => Ok(*i as usize),
            ParamValue::Float(x) if *x >= 0.0 && x.fract() == 0.0 => Ok(*x as usize),
            v => Err(Error::usage(format!(
                "hyperparameter `{name}` = {v} must be a non-negative integer"
            ))),
        }
    }

    pub fn bool(&self, name: &str) -> Result<bool> {
        match self.get(name)? {
            ParamValue::Categorical(s) if s.eq_ignore_ascii_case("true") => Ok(true),
            ParamValue::Categorical(s) if s.eq_ignore_ascii_case("false") => Ok(false),
            v => Err(Error::usage(format!(
                "hyperparameter `{name}` = {v} must be true or false"
            ))),
        }
    }

    /// Fails on names outside `known`.
    pub fn only(&self, known: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(Error::usage(format!("unknown hyperparameter `{k}`"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_cover_their_spaces() {
        for algo in [Algo::Ppo, Algo::Sac] {
            let space = algo.search_space();
            for preset in [Preset::Default, Preset::BestPaper] {
                space.check(&algo.preset(preset)).unwrap();
            }
        }
        assert_eq!(ppo_space().len(), 9);
        assert_eq!(sac_space().len(), 10);
    }

    #[test]
    fn best_values_are_verbatim() {
        let p = ppo_best_paper();
        assert_eq!(p["learning_rate"], F(0.0153));
        assert_eq!(p["n_steps"], I(559));
        assert_eq!(p["batch_size"], I(193));
        assert_eq!(p["clip_range"], F(0.2865));
        let s = sac_best_paper();
        assert_eq!(s["buffer_size"], I(79709));
        assert_eq!(s["tau"], F(0.034480));
        assert_eq!(s["target_update_interval"], I(40));
        assert_eq!(s["gradient_steps"], I(10));
        assert_eq!(s["use_sde"], C("true".into()));
    }

    #[test]
    fn algo_parses_case_insensitively() {
        assert_eq!("PPO".parse::<Algo>().unwrap(), Algo::Ppo);
        assert!(matches!("dqn".parse::<Algo>(), Err(Error::Usage(_))));
    }
}
