//! Pieces shared by the two learners.

use crate::env::{Action, ArmEnv, Observation, StepResult, ACTION_DIM};
use crate::error::{Error, Result};
use crate::hyper::{Algo, ParamMap};
use crate::neural::Checkpoint;
use crate::ppo::{PpoAgent, PpoConfig};
use crate::sac::{SacAgent, SacConfig};

/// Outcome of one finished training episode.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpisodeSummary {
    /// 1-based, counted over the learner's lifetime.
    pub episode: u64,
    pub reward: f64,
    pub length: usize,
    pub success: bool,
}

/// Anything that maps an observation to a deterministic action.
pub trait Policy {
    fn deterministic_action(&self, obs: &Observation) -> Result<Action>;
}

/// A learner that trains episode by episode and can be checkpointed.
///
/// Training state (partial rollouts, replay contents, the live episode)
/// survives between calls, so `train_episodes(a)` followed by
/// `train_episodes(b)` is identical to `train_episodes(a + b)`.
pub trait Learner: Policy + Send {
    fn algo(&self) -> Algo;

    fn train_episodes(
        &mut self,
        env: &mut ArmEnv,
        episodes: u64,
        on_episode: &mut dyn FnMut(&EpisodeSummary),
    ) -> Result<()>;

    fn episodes_completed(&self) -> u64;

    fn to_checkpoint(&self, seed: u64) -> Checkpoint;
}

/// Fresh learner for `algo` configured from `params`. `hidden` overrides the
/// algorithm's default hidden widths.
pub fn build_learner(algo: Algo, params: &ParamMap, hidden: Option<&[usize]>, seed: u64) -> Result<Box<dyn Learner>> {
    Ok(match algo {
        Algo::Ppo => {
            let mut config = PpoConfig::from_params(params)?;
            if let Some(h) = hidden {
                config.hidden = h.to_vec();
            }
            Box::new(PpoAgent::new(config, seed)?)
        }
        Algo::Sac => {
            let mut config = SacConfig::from_params(params)?;
            if let Some(h) = hidden {
                config.hidden = h.to_vec();
            }
            Box::new(SacAgent::new(config, seed)?)
        }
    })
}

/// Restores whichever learner a checkpoint holds.
pub fn load_learner(ck: &Checkpoint) -> Result<Box<dyn Learner>> {
    match ck.algo.parse::<Algo>() {
        Ok(Algo::Ppo) => Ok(Box::new(PpoAgent::from_checkpoint(ck)?)),
        Ok(Algo::Sac) => Ok(Box::new(SacAgent::from_checkpoint(ck)?)),
        Err(_) => Err(Error::usage(format!(
            "checkpoint holds unknown algorithm `{}`",
            ck.algo
        ))),
    }
}

pub(crate) fn to_action(v: &[f64]) -> Action {
    let mut a = [0.0; ACTION_DIM];
    a.copy_from_slice(v);
    a
}

pub(crate) fn clip_unit(v: &[f64]) -> Action {
    let mut a = [0.0; ACTION_DIM];
    for (d, s) in a.iter_mut().zip(v) {
        *d = s.clamp(-1.0, 1.0);
    }
    a
}

/// Tracks the live episode inside a learner.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpisodeTracker {
    pub current: Option<Observation>,
    reward: f64,
    length: usize,
    pub completed: u64,
}

impl EpisodeTracker {
    /// Current observation, resetting the environment if no episode is live.
    pub fn observation(&mut self, env: &mut ArmEnv) -> Observation {
        match self.current {
            Some(obs) => obs,
            None => {
                let obs = env.reset(None);
                self.current = Some(obs);
                self.reward = 0.0;
                self.length = 0;
                obs
            }
        }
    }

    /// Accounts for one step; returns the summary if the episode ended.
    pub fn record(&mut self, result: &StepResult) -> Option<EpisodeSummary> {
        self.reward += result.reward;
        self.length += 1;
        if result.done() {
            self.current = None;
            self.completed += 1;
            Some(EpisodeSummary {
                episode: self.completed,
                reward: self.reward,
                length: self.length,
                success: result.terminated,
            })
        } else {
            self.current = Some(result.observation);
            None
        }
    }
}
