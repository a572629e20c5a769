//! Proximal policy optimization with a clipped surrogate, generalized
//! advantage estimation, value and entropy terms and global gradient-norm
//! clipping.
//!
//! The policy is a tanh MLP producing the Gaussian mean and a
//! state-independent log standard deviation vector; actions are clipped to
//! `[-1, 1]` before reaching the environment while the unclipped sample is
//! what gets stored and scored.

use rand::seq::SliceRandom;

use crate::agent::{clip_unit, to_action, EpisodeSummary, EpisodeTracker, Learner, Policy};
use crate::env::{Action, ArmEnv, Observation, ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::hyper::{self, Algo, ParamMap, ParamValue, Reader};
use crate::neural::{
    adam_step, clip_grad_norm, diag_gaussian_log_prob, log_prob_on_tape, standard_normal, Activation, AdamState,
    Checkpoint, Grad, Matrix, MlpParams, MlpSpec, NetworkRecord, Tape, VectorRecord, LOG_STD_MAX, LOG_STD_MIN,
};
use crate::rng::{self, Rng, Stream};

const NAMES: [&str; 9] = [
    "learning_rate",
    "n_steps",
    "batch_size",
    "gamma",
    "ent_coef",
    "vf_coef",
    "max_grad_norm",
    "gae_lambda",
    "clip_range",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub n_steps: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub n_epochs: usize,
    /// Normalize advantages within each minibatch.
    pub normalize_advantage: bool,
    /// Hidden widths of both the policy and the value network.
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self::from_params(&hyper::ppo_defaults()).expect("defaults are valid")
    }
}

impl PpoConfig {
    /// Builds a config from the 9 searchable hyperparameters. `batch_size`
    /// is capped at `n_steps`.
    pub fn from_params(params: &ParamMap) -> Result<Self> {
        let r = Reader(params);
        r.only(&NAMES)?;
        let n_steps = r.usize("n_steps")?;
        let config = PpoConfig {
            learning_rate: r.f64("learning_rate")?,
            n_steps,
            batch_size: r.usize("batch_size")?.min(n_steps),
            gamma: r.f64("gamma")?,
            ent_coef: r.f64("ent_coef")?,
            vf_coef: r.f64("vf_coef")?,
            max_grad_norm: r.f64("max_grad_norm")?,
            gae_lambda: r.f64("gae_lambda")?,
            clip_range: r.f64("clip_range")?,
            n_epochs: 10,
            normalize_advantage: true,
            hidden: vec![64, 64],
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_params(&self) -> ParamMap {
        use ParamValue::{Float as F, Int as I};
        [
            ("learning_rate", F(self.learning_rate)),
            ("n_steps", I(self.n_steps as i64)),
            ("batch_size", I(self.batch_size as i64)),
            ("gamma", F(self.gamma)),
            ("ent_coef", F(self.ent_coef)),
            ("vf_coef", F(self.vf_coef)),
            ("max_grad_norm", F(self.max_grad_norm)),
            ("gae_lambda", F(self.gae_lambda)),
            ("clip_range", F(self.clip_range)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::usage(format!("ppo: {m}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.n_steps == 0 || self.batch_size == 0 || self.n_epochs == 0 {
            return fail("n_steps, batch_size and n_epochs must be positive");
        }
        if self.batch_size > self.n_steps {
            return fail("batch_size must not exceed n_steps");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_range > 0.0) {
            return fail("clip_range must be positive");
        }
        if !(self.max_grad_norm > 0.0) || !(self.ent_coef >= 0.0) || !(self.vf_coef >= 0.0) {
            return fail("max_grad_norm must be positive, ent_coef and vf_coef non-negative");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("hidden widths must be positive");
        }
        Ok(())
    }

    fn policy_spec(&self) -> MlpSpec {
        MlpSpec::new(OBS_DIM, &self.hidden, ACTION_DIM, Activation::Tanh)
    }

    fn value_spec(&self) -> MlpSpec {
        MlpSpec::new(OBS_DIM, &self.hidden, 1, Activation::Tanh)
    }
}

/// On-policy transitions of one collection phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub observations: Vec<[f64; OBS_DIM]>,
    /// Unclipped policy samples.
    pub actions: Vec<Action>,
    /// Raw environment rewards.
    pub rewards: Vec<f64>,
    /// `γ·V(s_final)` on steps that ended by truncation, zero elsewhere.
    pub truncation_bootstrap: Vec<f64>,
    /// Episode ended (terminated or truncated) after this step.
    pub dones: Vec<bool>,
    pub values: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// `V` of the observation following the last stored step.
    pub bootstrap_value: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn clear(&mut self) {
        *self = RolloutBuffer::default();
    }

    /// Fills `advantages` and `returns`.
    pub fn finish(&mut self, gamma: f64, gae_lambda: f64) {
        let rewards: Vec<f64> = self
            .rewards
            .iter()
            .zip(&self.truncation_bootstrap)
            .map(|(r, b)| r + b)
            .collect();
        let (adv, ret) = compute_gae(
            &rewards,
            &self.values,
            &self.dones,
            self.bootstrap_value,
            gamma,
            gae_lambda,
        );
        self.advantages = adv;
        self.returns = ret;
    }
}

/// Generalized advantage estimates and returns (`advantages + values`).
///
/// `dones[t]` cuts the recursion after step `t`; `bootstrap_value` is the
/// value after the final step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    gae_lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(values.len() == n && dones.len() == n, "compute_gae: length mismatch");
    let mut advantages = vec![0.0; n];
    let mut last = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 == n { bootstrap_value } else { values[t + 1] };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        last = delta + gamma * gae_lambda * live * last;
        advantages[t] = last;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Per-sample clipped surrogate `min(r·Â, clip(r, 1−ε, 1+ε)·Â)`.
pub fn clipped_objective(advantage: f64, ratio: f64, clip_range: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip_range, 1.0 + clip_range) * advantage;
    if unclipped <= clipped {
        unclipped
    } else {
        clipped
    }
}

/// Averages over all minibatches of one [`ppo_update`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub policy_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
    /// Surrogate of the very first minibatch.
    pub first_objective: f64,
    pub first_ratio_max_dev: f64,
}

/// A sampled action with the information training needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoAction {
    /// What the environment receives, clipped to `[-1, 1]`.
    pub action: Action,
    /// Unclipped sample.
    pub raw: Action,
    pub log_prob: f64,
}

/// Policy and value networks with their optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoNets {
    pub policy_spec: MlpSpec,
    pub value_spec: MlpSpec,
    pub policy: MlpParams,
    pub value: MlpParams,
    pub log_std: Vec<f64>,
    pub policy_adam: AdamState,
    pub value_adam: AdamState,
    pub log_std_adam: AdamState,
}

impl PpoNets {
    pub fn new(config: &PpoConfig, rng: &mut Rng) -> Result<Self> {
        let policy_spec = config.policy_spec();
        let value_spec = config.value_spec();
        let policy = MlpParams::init_orthogonal(&policy_spec, 0.01, rng)?;
        let value = MlpParams::init_orthogonal(&value_spec, 1.0, rng)?;
        Ok(PpoNets {
            policy_adam: AdamState::new(policy.len()),
            value_adam: AdamState::new(value.len()),
            log_std_adam: AdamState::new(ACTION_DIM),
            policy_spec,
            value_spec,
            policy,
            value,
            log_std: vec![0.0; ACTION_DIM],
        })
    }

    pub fn mean(&self, obs: &[f64; OBS_DIM]) -> Result<Vec<f64>> {
        Ok(self
            .policy
            .forward_batch(&self.policy_spec, &Matrix::row_vector(obs))?
            .into_vec())
    }

    pub fn value_of(&self, obs: &[f64; OBS_DIM]) -> Result<f64> {
        Ok(self
            .value
            .forward_batch(&self.value_spec, &Matrix::row_vector(obs))?
            .item())
    }

    /// Deterministic: the clipped mean. Otherwise a Gaussian sample, clipped.
    pub fn act(&self, obs: &Observation, deterministic: bool, rng: &mut Rng) -> Result<PpoAction> {
        let mean = self.mean(&obs.flatten())?;
        let raw: Vec<f64> = if deterministic {
            mean.clone()
        } else {
            let z = standard_normal(rng, ACTION_DIM);
            mean.iter()
                .zip(&self.log_std)
                .zip(&z)
                .map(|((m, ls), z)| m + ls.exp() * z)
                .collect()
        };
        Ok(PpoAction {
            action: clip_unit(&raw),
            log_prob: diag_gaussian_log_prob(&mean, &self.log_std, &raw),
            raw: to_action(&raw),
        })
    }
}

/// Tape-recorded PPO loss on one minibatch.
pub struct MinibatchLoss {
    pub tape: Tape,
    pub loss: crate::neural::Var,
    pub policy: crate::neural::MlpVars,
    pub value: crate::neural::MlpVars,
    pub log_std: crate::neural::Var,
    pub objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub ratios: Vec<f64>,
}

/// Minibatch inputs for [`ppo_loss`].
pub struct Minibatch {
    pub observations: Matrix,
    pub actions: Matrix,
    pub old_log_probs: Matrix,
    /// Already normalized if normalization is on.
    pub advantages: Matrix,
    pub returns: Matrix,
}

impl Minibatch {
    fn gather(buffer: &RolloutBuffer, idx: &[usize], normalize: bool) -> Self {
        let rows = |f: &dyn Fn(usize) -> Vec<f64>, cols: usize| {
            let mut data = Vec::with_capacity(idx.len() * cols);
            for &i in idx {
                data.extend(f(i));
            }
            Matrix::from_vec(idx.len(), cols, data)
        };
        let mut adv: Vec<f64> = idx.iter().map(|&i| buffer.advantages[i]).collect();
        if normalize && adv.len() > 1 {
            let n = adv.len() as f64;
            let mean = adv.iter().sum::<f64>() / n;
            let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
        }
        Minibatch {
            observations: rows(&|i| buffer.observations[i].to_vec(), OBS_DIM),
            actions: rows(&|i| buffer.actions[i].to_vec(), ACTION_DIM),
            old_log_probs: Matrix::column_vector(&idx.iter().map(|&i| buffer.log_probs[i]).collect::<Vec<_>>()),
            advantages: Matrix::column_vector(&adv),
            returns: Matrix::column_vector(&idx.iter().map(|&i| buffer.returns[i]).collect::<Vec<_>>()),
        }
    }
}

/// `−L_clip + vf_coef·MSE(V, returns) − ent_coef·H` on the tape.
pub fn ppo_loss(nets: &PpoNets, config: &PpoConfig, batch: &Minibatch) -> MinibatchLoss {
    let mut tape = Tape::new();
    let obs = tape.constant(batch.observations.clone());
    let policy = nets.policy.on_tape(&mut tape, &nets.policy_spec, obs, true);
    let log_std = tape.param(Matrix::row_vector(&nets.log_std));
    let actions = tape.constant(batch.actions.clone());
    let log_prob = log_prob_on_tape(&mut tape, policy.output, log_std, actions);
    let old = tape.constant(batch.old_log_probs.clone());
    let diff = tape.sub(log_prob, old);
    let ratio = tape.exp(diff);
    let adv = tape.constant(batch.advantages.clone());
    let surr1 = tape.mul(ratio, adv);
    let clipped = tape.clip(ratio, 1.0 - config.clip_range, 1.0 + config.clip_range);
    let surr2 = tape.mul(clipped, adv);
    let surr = tape.min(surr1, surr2);
    let objective = tape.mean(surr);

    let value = nets.value.on_tape(&mut tape, &nets.value_spec, obs, true);
    let returns = tape.constant(batch.returns.clone());
    let err = tape.sub(returns, value.output);
    let sq = tape.square(err);
    let value_loss = tape.mean(sq);

    let ls_sum = tape.sum(log_std);
    let entropy = tape.add_scalar(
        ls_sum,
        ACTION_DIM as f64 * (0.5 + 0.5 * (2.0 * std::f64::consts::PI).ln()),
    );

    let neg_obj = tape.scale(objective, -1.0);
    let v_term = tape.scale(value_loss, config.vf_coef);
    let e_term = tape.scale(entropy, -config.ent_coef);
    let loss = tape.add(neg_obj, v_term);
    let loss = tape.add(loss, e_term);

    MinibatchLoss {
        objective: tape.value(objective).item(),
        value_loss: tape.value(value_loss).item(),
        entropy: tape.value(entropy).item(),
        ratios: tape.value(ratio).as_slice().to_vec(),
        tape,
        loss,
        policy,
        value,
        log_std,
    }
}

/// Gradients of [`ppo_loss`] as `(policy, value, log_std)` blocks.
pub fn ppo_gradients(nets: &PpoNets, l: &MinibatchLoss) -> Result<(Grad, Grad, Grad)> {
    let grads = l.tape.backward(l.loss)?;
    let policy = l.policy.grad(&grads, &nets.policy);
    let value = l.value.grad(&grads, &nets.value);
    let log_std = Grad {
        flat: grads.get_or_zeros(l.log_std, (1, ACTION_DIM)).into_vec(),
    };
    Ok((policy, value, log_std))
}

/// `n_epochs` passes of shuffled minibatch updates over a finished buffer.
pub fn ppo_update(buffer: &RolloutBuffer, config: &PpoConfig, nets: &mut PpoNets, rng: &mut Rng) -> Result<LossStats> {
    if buffer.advantages.len() != buffer.len() || buffer.is_empty() {
        return Err(Error::usage("ppo_update: advantages have not been computed"));
    }
    let mut stats = LossStats::default();
    let mut clipped = 0usize;
    let mut samples = 0usize;
    let mut indices: Vec<usize> = (0..buffer.len()).collect();
    for epoch in 0..config.n_epochs {
        indices.shuffle(rng);
        for (k, idx) in indices.chunks(config.batch_size).enumerate() {
            let batch = Minibatch::gather(buffer, idx, config.normalize_advantage);
            let l = ppo_loss(nets, config, &batch);
            let loss = l.tape.value(l.loss).item();
            if !loss.is_finite() {
                return Err(Error::numeric(format!(
                    "ppo: non-finite loss at epoch {epoch} minibatch {k} (objective {}, value loss {}, entropy {})",
                    l.objective, l.value_loss, l.entropy
                )));
            }
            if stats.minibatches == 0 {
                stats.first_objective = l.objective;
                stats.first_ratio_max_dev = l.ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
            }
            clipped += l.ratios.iter().filter(|r| (*r - 1.0).abs() > config.clip_range).count();
            samples += l.ratios.len();

            let (mut gp, mut gv, mut gl) = ppo_gradients(nets, &l)?;
            let norm = clip_grad_norm(&mut [&mut gp, &mut gv, &mut gl], config.max_grad_norm);
            adam_step(&mut nets.policy.flat, &gp, &mut nets.policy_adam, config.learning_rate)?;
            adam_step(&mut nets.value.flat, &gv, &mut nets.value_adam, config.learning_rate)?;
            adam_step(&mut nets.log_std, &gl, &mut nets.log_std_adam, config.learning_rate)?;
            nets.log_std
                .iter_mut()
                .for_each(|x| *x = x.clamp(LOG_STD_MIN, LOG_STD_MAX));

            stats.policy_objective += l.objective;
            stats.value_loss += l.value_loss;
            stats.entropy += l.entropy;
            stats.grad_norm += norm;
            stats.minibatches += 1;
        }
    }
    let m = stats.minibatches as f64;
    stats.policy_objective /= m;
    stats.value_loss /= m;
    stats.entropy /= m;
    stats.grad_norm /= m;
    stats.clip_fraction = clipped as f64 / samples as f64;
    Ok(stats)
}

/// PPO learner: networks, the rollout being collected and the live episode.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub config: PpoConfig,
    pub nets: PpoNets,
    rng: Rng,
    buffer: RolloutBuffer,
    tracker: EpisodeTracker,
    updates: u64,
    pub last_stats: Option<LossStats>,
}

impl PpoAgent {
    pub fn new(config: PpoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let nets = PpoNets::new(&config, &mut rng::stream(seed, Stream::NetworkInit))?;
        Ok(PpoAgent {
            config,
            nets,
            rng: rng::stream(seed, Stream::Agent),
            buffer: RolloutBuffer::default(),
            tracker: EpisodeTracker::default(),
            updates: 0,
            last_stats: None,
        })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Stochastic action from the agent's own stream.
    pub fn act(&mut self, obs: &Observation, deterministic: bool) -> Result<PpoAction> {
        self.nets.act(obs, deterministic, &mut self.rng)
    }

    /// One environment step into the rollout; returns the finished episode,
    /// if any, and whether the buffer is now full.
    fn collect_step(&mut self, env: &mut ArmEnv) -> Result<(Option<EpisodeSummary>, bool)> {
        let obs = self.tracker.observation(env);
        let flat = obs.flatten();
        let a = self.nets.act(&obs, false, &mut self.rng)?;
        let value = self.nets.value_of(&flat)?;
        let result = env.step(&a.action)?;
        let boot = if result.truncated {
            self.config.gamma * self.nets.value_of(&result.observation.flatten())?
        } else {
            0.0
        };
        let b = &mut self.buffer;
        b.observations.push(flat);
        b.actions.push(a.raw);
        b.rewards.push(result.reward);
        b.truncation_bootstrap.push(boot);
        b.dones.push(result.done());
        b.values.push(value);
        b.log_probs.push(a.log_prob);
        let summary = self.tracker.record(&result);
        Ok((summary, self.buffer.len() >= self.config.n_steps))
    }

    fn update(&mut self) -> Result<()> {
        self.buffer.bootstrap_value = match self.tracker.current {
            Some(obs) => self.nets.value_of(&obs.flatten())?,
            None => 0.0,
        };
        self.buffer.finish(self.config.gamma, self.config.gae_lambda);
        let stats = ppo_update(&self.buffer, &self.config, &mut self.nets, &mut self.rng)?;
        self.last_stats = Some(stats);
        self.updates += 1;
        self.buffer.clear();
        Ok(())
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.algo != Algo::Ppo.name() {
            return Err(Error::usage(format!(
                "checkpoint holds a {} model, expected ppo",
                ck.algo
            )));
        }
        let mut config = PpoConfig::from_params(&ck.hyperparameters)?;
        let policy = ck.network("policy")?;
        let value = ck.network("value")?;
        config.hidden = policy.spec.hidden.clone();
        let log_std = ck.vector("log_std")?;
        if policy.spec != config.policy_spec()
            || value.spec != config.value_spec()
            || log_std.values.len() != ACTION_DIM
        {
            return Err(Error::usage("checkpoint networks do not match the ppo architecture"));
        }
        let nets = PpoNets {
            policy_spec: policy.spec.clone(),
            value_spec: value.spec.clone(),
            policy: policy.params.clone(),
            value: value.params.clone(),
            log_std: log_std.values.clone(),
            policy_adam: policy
                .adam
                .clone()
                .unwrap_or_else(|| AdamState::new(policy.params.len())),
            value_adam: value.adam.clone().unwrap_or_else(|| AdamState::new(value.params.len())),
            log_std_adam: log_std.adam.clone().unwrap_or_else(|| AdamState::new(ACTION_DIM)),
        };
        let mut agent = PpoAgent::new(config, ck.seed)?;
        agent.nets = nets;
        agent.tracker.completed = ck.episodes;
        Ok(agent)
    }
}

impl Policy for PpoAgent {
    fn deterministic_action(&self, obs: &Observation) -> Result<Action> {
        Ok(clip_unit(&self.nets.mean(&obs.flatten())?))
    }
}

impl Policy for PpoNets {
    fn deterministic_action(&self, obs: &Observation) -> Result<Action> {
        Ok(clip_unit(&self.mean(&obs.flatten())?))
    }
}

impl Learner for PpoAgent {
    fn algo(&self) -> Algo {
        Algo::Ppo
    }

    fn train_episodes(
        &mut self,
        env: &mut ArmEnv,
        episodes: u64,
        on_episode: &mut dyn FnMut(&EpisodeSummary),
    ) -> Result<()> {
        let target = self.tracker.completed + episodes;
        while self.tracker.completed < target {
            let (summary, full) = self.collect_step(env)?;
            if full {
                self.update()?;
            }
            if let Some(s) = summary {
                on_episode(&s);
            }
        }
        Ok(())
    }

    fn episodes_completed(&self) -> u64 {
        self.tracker.completed
    }

    fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let n = &self.nets;
        Checkpoint {
            algo: Algo::Ppo.name().into(),
            episodes: self.tracker.completed,
            seed,
            hyperparameters: self.config.to_params(),
            networks: vec![
                NetworkRecord {
                    name: "policy".into(),
                    spec: n.policy_spec.clone(),
                    params: n.policy.clone(),
                    adam: Some(n.policy_adam.clone()),
                },
                NetworkRecord {
                    name: "value".into(),
                    spec: n.value_spec.clone(),
                    params: n.value.clone(),
                    adam: Some(n.value_adam.clone()),
                },
            ],
            vectors: vec![VectorRecord {
                name: "log_std".into(),
                values: n.log_std.clone(),
                adam: Some(n.log_std_adam.clone()),
            }],
        }
    }
}

/// Collects exactly `n_steps` transitions with `nets`, auto-resetting `env`
/// at episode ends. Advantages are left empty.
pub fn collect_rollout(
    env: &mut ArmEnv,
    nets: &PpoNets,
    gamma: f64,
    n_steps: usize,
    rng: &mut Rng,
) -> Result<RolloutBuffer> {
    let mut buffer = RolloutBuffer::default();
    let mut obs = env.reset(None);
    for _ in 0..n_steps {
        let flat = obs.flatten();
        let a = nets.act(&obs, false, rng)?;
        let result = env.step(&a.action)?;
        buffer.observations.push(flat);
        buffer.actions.push(a.raw);
        buffer.rewards.push(result.reward);
        buffer.truncation_bootstrap.push(if result.truncated {
            gamma * nets.value_of(&result.observation.flatten())?
        } else {
            0.0
        });
        buffer.dones.push(result.done());
        buffer.values.push(nets.value_of(&flat)?);
        buffer.log_probs.push(a.log_prob);
        obs = if result.done() {
            env.reset(None)
        } else {
            result.observation
        };
    }
    buffer.bootstrap_value = nets.value_of(&obs.flatten())?;
    Ok(buffer)
}
