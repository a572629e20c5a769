//! Tree-structured Parzen Estimator over flat mixed search spaces.
//!
//! The history is split into a small "good" set (top `gamma` fraction by
//! objective, maximized) and the rest. Each dimension gets a Parzen density
//! `l` fitted on the good values and `g` on the bad ones; candidates are
//! drawn from `l` and the one maximizing `log l(x) − log g(x)` wins.

mod importance;
mod parzen;
mod space;

use serde::{Deserialize, Serialize};

pub use importance::importance;
pub use parzen::{parzen_fit, ParzenEstimator};
pub use space::{ParamDomain, ParamKind, ParamMap, ParamValue, SearchSpace};

use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialState {
    Running,
    Complete,
    Failed,
}

/// One evaluated (or in-flight) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: u64,
    pub state: TrialState,
    pub seed: u64,
    /// Objective, higher is better. `None` unless complete.
    pub value: Option<f64>,
    pub params: ParamMap,
}

impl Trial {
    /// Objective of a complete trial with a finite value.
    pub fn complete_value(&self) -> Option<f64> {
        match (self.state, self.value) {
            (TrialState::Complete, Some(v)) if v.is_finite() => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub gamma_fraction: f64,
    pub max_good: usize,
    pub n_startup_trials: usize,
    pub n_ei_candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        TpeConfig {
            gamma_fraction: 0.25,
            max_good: 25,
            n_startup_trials: 10,
            n_ei_candidates: 24,
        }
    }
}

/// Partitions complete trials into `(good, bad)`.
///
/// Sorted by value descending with ties going to the lower id;
/// `n_good = min(max_good, max(1, ceil(gamma · n)))`. Non-complete trials
/// are ignored.
pub fn split_trials<'a>(
    history: &[&'a Trial],
    gamma_fraction: f64,
    max_good: usize,
) -> (Vec<&'a Trial>, Vec<&'a Trial>) {
    let mut ranked: Vec<(&Trial, f64)> = history
        .iter()
        .filter_map(|t| t.complete_value().map(|v| (*t, v)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.id.cmp(&b.0.id)));
    if ranked.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let n = ranked.len();
    let n_good = ((gamma_fraction * n as f64).ceil() as usize)
        .max(1)
        .min(max_good)
        .min(n);
    let mut good: Vec<&Trial> = ranked.into_iter().map(|(t, _)| t).collect();
    let bad = good.split_off(n_good);
    (good, bad)
}

/// Next configuration to evaluate.
///
/// With fewer than `n_startup_trials` complete trials this is an independent
/// uniform draw of every domain, consuming exactly the draws of
/// [`SearchSpace::sample_uniform`]. Failed trials join the bad set.
pub fn suggest(space: &SearchSpace, history: &[Trial], rng: &mut Rng, config: &TpeConfig) -> ParamMap {
    let refs: Vec<&Trial> = history.iter().collect();
    let (good, mut bad) = split_trials(&refs, config.gamma_fraction, config.max_good);
    if good.len() + bad.len() < config.n_startup_trials.max(1) {
        return space.sample_uniform(rng);
    }
    bad.extend(history.iter().filter(|t| t.state == TrialState::Failed));

    let mut out = ParamMap::new();
    for domain in &space.params {
        let values = |set: &[&'_ Trial]| -> Vec<ParamValue> {
            set.iter().filter_map(|t| t.params.get(&domain.name).cloned()).collect()
        };
        let good_values = values(&good);
        let bad_values = values(&bad);
        let l = parzen_fit(&good_values.iter().collect::<Vec<_>>(), domain);
        let g = parzen_fit(&bad_values.iter().collect::<Vec<_>>(), domain);

        let mut best: Option<(ParamValue, f64)> = None;
        for _ in 0..config.n_ei_candidates.max(1) {
            let (value, x) = parzen::snap(domain, l.sample(rng));
            let score = l.log_pdf(x) - g.log_pdf(x);
            if best.as_ref().is_none_or(|(_, s)| score > *s) {
                best = Some((value, score));
            }
        }
        out.insert(domain.name.clone(), best.expect("at least one candidate").0);
    }
    out
}
