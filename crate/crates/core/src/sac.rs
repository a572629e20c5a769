//! Soft actor-critic with twin critics, target networks, a fixed entropy
//! temperature and a tanh-squashed Gaussian actor.
//!
//! With `use_sde` the exploration noise of the behaviour policy is drawn once
//! per episode and held fixed until the episode ends; gradient updates always
//! use fresh noise.

use rand::Rng as _;

use crate::agent::{to_action, EpisodeSummary, EpisodeTracker, Learner, Policy};
use crate::env::{Action, ArmEnv, Observation, ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::hyper::{self, Algo, ParamMap, ParamValue, Reader};
use crate::neural::{
    adam_step, squash_with_noise, squashed_on_tape, standard_normal, Activation, AdamState, Checkpoint, Grad, Matrix,
    MlpParams, MlpSpec, NetworkRecord, Tape,
};
use crate::rng::{self, Rng, Stream};

const NAMES: [&str; 10] = [
    "buffer_size",
    "learning_starts",
    "batch_size",
    "tau",
    "gamma",
    "learning_rate",
    "ent_coef",
    "target_update_interval",
    "gradient_steps",
    "use_sde",
];

/// Hidden widths used unless configured otherwise.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub buffer_size: usize,
    pub learning_starts: usize,
    pub batch_size: usize,
    pub tau: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    /// Entropy temperature α.
    pub ent_coef: f64,
    /// Gradient iterations between soft target updates.
    pub target_update_interval: usize,
    pub gradient_steps: usize,
    pub use_sde: bool,
    /// Hidden widths of the actor and both critics.
    pub hidden: Vec<usize>,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self::from_params(&hyper::sac_defaults()).expect("defaults are valid")
    }
}

impl SacConfig {
    /// Builds a config from the 10 searchable hyperparameters.
    /// `learning_starts` is capped at `buffer_size`.
    pub fn from_params(params: &ParamMap) -> Result<Self> {
        let r = Reader(params);
        r.only(&NAMES)?;
        let buffer_size = r.usize("buffer_size")?;
        let config = SacConfig {
            buffer_size,
            learning_starts: r.usize("learning_starts")?.min(buffer_size),
            batch_size: r.usize("batch_size")?,
            tau: r.f64("tau")?,
            gamma: r.f64("gamma")?,
            learning_rate: r.f64("learning_rate")?,
            ent_coef: r.f64("ent_coef")?,
            target_update_interval: r.usize("target_update_interval")?,
            gradient_steps: r.usize("gradient_steps")?,
            use_sde: r.bool("use_sde")?,
            hidden: DEFAULT_HIDDEN.to_vec(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_params(&self) -> ParamMap {
        use ParamValue::{Categorical as C, Float as F, Int as I};
        [
            ("buffer_size", I(self.buffer_size as i64)),
            ("learning_starts", I(self.learning_starts as i64)),
            ("batch_size", I(self.batch_size as i64)),
            ("tau", F(self.tau)),
            ("gamma", F(self.gamma)),
            ("learning_rate", F(self.learning_rate)),
            ("ent_coef", F(self.ent_coef)),
            ("target_update_interval", I(self.target_update_interval as i64)),
            ("gradient_steps", I(self.gradient_steps as i64)),
            ("use_sde", C(self.use_sde.to_string())),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::usage(format!("sac: {m}")));
        if self.buffer_size == 0 || self.batch_size == 0 {
            return fail("buffer_size and batch_size must be positive");
        }
        if self.learning_starts > self.buffer_size {
            return fail("learning_starts must not exceed buffer_size");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail("tau must lie in (0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(self.ent_coef >= 0.0 && self.ent_coef.is_finite()) {
            return fail("ent_coef must be non-negative");
        }
        if self.target_update_interval == 0 || self.gradient_steps == 0 {
            return fail("target_update_interval and gradient_steps must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("hidden widths must be positive");
        }
        Ok(())
    }

    fn actor_spec(&self) -> MlpSpec {
        MlpSpec::new(OBS_DIM, &self.hidden, 2 * ACTION_DIM, Activation::Relu)
    }

    fn critic_spec(&self) -> MlpSpec {
        MlpSpec::new(OBS_DIM + ACTION_DIM, &self.hidden, 1, Activation::Relu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub obs: [f64; OBS_DIM],
    pub action: Action,
    pub reward: f64,
    pub next_obs: [f64; OBS_DIM],
    /// True only for goal-reaching ends; truncation keeps bootstrapping.
    pub terminated: bool,
}

/// FIFO ring of transitions. Storage grows on demand up to `capacity`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Stored transitions, oldest first.
    pub fn in_order(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity {
            0
        } else {
            self.cursor
        };
        self.items[split..].iter().chain(&self.items[..split])
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }
}

/// Uniform indices with replacement.
pub fn replay_sample_indices(buffer: &ReplayBuffer, batch_size: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if buffer.len() < batch_size || batch_size == 0 {
        return Err(Error::usage(format!(
            "replay buffer holds {} transitions, cannot draw a batch of {batch_size}",
            buffer.len()
        )));
    }
    Ok((0..batch_size).map(|_| rng.random_range(0..buffer.len())).collect())
}

/// A sampled minibatch in matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_obs: Matrix,
    pub terminated: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(ts: &[Transition]) -> Self {
        let cat = |f: &dyn Fn(&Transition) -> &[f64], cols: usize| {
            Matrix::from_vec(ts.len(), cols, ts.iter().flat_map(|t| f(t).iter().copied()).collect())
        };
        Batch {
            obs: cat(&|t| &t.obs, OBS_DIM),
            actions: cat(&|t| &t.action, ACTION_DIM),
            rewards: ts.iter().map(|t| t.reward).collect(),
            next_obs: cat(&|t| &t.next_obs, OBS_DIM),
            terminated: ts.iter().map(|t| t.terminated).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

pub fn replay_sample(buffer: &ReplayBuffer, batch_size: usize, rng: &mut Rng) -> Result<Batch> {
    let idx = replay_sample_indices(buffer, batch_size, rng)?;
    let ts: Vec<Transition> = idx.iter().map(|&i| *buffer.get(i)).collect();
    Ok(Batch::from_transitions(&ts))
}

/// Actor, twin critics and their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SacNets {
    pub actor_spec: MlpSpec,
    pub critic_spec: MlpSpec,
    pub actor: MlpParams,
    pub q1: MlpParams,
    pub q2: MlpParams,
    pub q1_target: MlpParams,
    pub q2_target: MlpParams,
    pub actor_adam: AdamState,
    pub q1_adam: AdamState,
    pub q2_adam: AdamState,
}

impl SacNets {
    pub fn new(config: &SacConfig, rng: &mut Rng) -> Result<Self> {
        let actor_spec = config.actor_spec();
        let critic_spec = config.critic_spec();
        let actor = MlpParams::init_orthogonal(&actor_spec, 0.01, rng)?;
        let q1 = MlpParams::init_orthogonal(&critic_spec, 1.0, rng)?;
        let q2 = MlpParams::init_orthogonal(&critic_spec, 1.0, rng)?;
        Ok(SacNets {
            actor_adam: AdamState::new(actor.len()),
            q1_adam: AdamState::new(q1.len()),
            q2_adam: AdamState::new(q2.len()),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor_spec,
            critic_spec,
            actor,
            q1,
            q2,
        })
    }

    /// Gaussian mean and (unclamped) log-std for each row of `obs`.
    pub fn actor_heads(&self, obs: &Matrix) -> Result<(Matrix, Matrix)> {
        let out = self.actor.forward_batch(&self.actor_spec, obs)?;
        Ok((out.columns(0, ACTION_DIM), out.columns(ACTION_DIM, 2 * ACTION_DIM)))
    }

    /// Squashed samples with log-densities for given noise `z` (`n×d`).
    pub fn sample_with_noise(&self, obs: &Matrix, z: &Matrix) -> Result<(Matrix, Vec<f64>)> {
        let (mean, log_std) = self.actor_heads(obs)?;
        let mut actions = Vec::with_capacity(obs.rows() * ACTION_DIM);
        let mut log_probs = Vec::with_capacity(obs.rows());
        for i in 0..obs.rows() {
            let (a, lp) = squash_with_noise(mean.row(i), log_std.row(i), z.row(i));
            actions.extend(a);
            log_probs.push(lp);
        }
        Ok((Matrix::from_vec(obs.rows(), ACTION_DIM, actions), log_probs))
    }

    pub fn act(&self, obs: &Observation, deterministic: bool, rng: &mut Rng) -> Result<Action> {
        let z = if deterministic {
            vec![0.0; ACTION_DIM]
        } else {
            standard_normal(rng, ACTION_DIM)
        };
        self.act_with_noise(obs, &z)
    }

    /// `tanh(mean + std·z)`; `z = 0` gives the deterministic action.
    pub fn act_with_noise(&self, obs: &Observation, z: &[f64]) -> Result<Action> {
        let (a, _) = self.sample_with_noise(&Matrix::row_vector(&obs.flatten()), &Matrix::row_vector(z))?;
        Ok(to_action(a.as_slice()))
    }

    fn q(&self, params: &MlpParams, obs: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        Ok(params
            .forward_batch(&self.critic_spec, &obs.hconcat(actions))?
            .into_vec())
    }
}

/// Entropy-regularized Bellman targets
/// `r + γ·(1 − done)·(min Q'(s', a') − α·log π(a'|s'))` for fixed noise `z`.
pub fn critic_targets(nets: &SacNets, config: &SacConfig, batch: &Batch, z: &Matrix) -> Result<Vec<f64>> {
    let (next_actions, next_log_probs) = nets.sample_with_noise(&batch.next_obs, z)?;
    let q1 = nets.q(&nets.q1_target, &batch.next_obs, &next_actions)?;
    let q2 = nets.q(&nets.q2_target, &batch.next_obs, &next_actions)?;
    let mut y = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let target = if batch.terminated[i] {
            batch.rewards[i]
        } else {
            let soft = q1[i].min(q2[i]) - config.ent_coef * next_log_probs[i];
            batch.rewards[i] + config.gamma * soft
        };
        if !target.is_finite() {
            return Err(Error::numeric(format!(
                "sac: non-finite critic target at batch row {i}"
            )));
        }
        y.push(target);
    }
    Ok(y)
}

/// Critic loss `0.5·(MSE(Q1, y) + MSE(Q2, y))` on the tape, with gradients.
pub fn critic_loss_and_grads(nets: &SacNets, batch: &Batch, y: &[f64]) -> Result<(f64, Grad, Grad)> {
    let mut tape = Tape::new();
    let sa = tape.constant(batch.obs.hconcat(&batch.actions));
    let y = tape.constant(Matrix::column_vector(y));
    let q1 = nets.q1.on_tape(&mut tape, &nets.critic_spec, sa, true);
    let q2 = nets.q2.on_tape(&mut tape, &nets.critic_spec, sa, true);
    let mse = |tape: &mut Tape, q| {
        let d = tape.sub(q, y);
        let s = tape.square(d);
        tape.mean(s)
    };
    let l1 = mse(&mut tape, q1.output);
    let l2 = mse(&mut tape, q2.output);
    let sum = tape.add(l1, l2);
    let loss = tape.scale(sum, 0.5);
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::numeric("sac: non-finite critic loss"));
    }
    let grads = tape.backward(loss)?;
    Ok((value, q1.grad(&grads, &nets.q1), q2.grad(&grads, &nets.q2)))
}

/// One critic step: targets, loss, one Adam update per critic.
pub fn critic_update(batch: &Batch, config: &SacConfig, nets: &mut SacNets, rng: &mut Rng) -> Result<f64> {
    let z = Matrix::from_vec(batch.len(), ACTION_DIM, standard_normal(rng, batch.len() * ACTION_DIM));
    let y = critic_targets(nets, config, batch, &z)?;
    let (loss, g1, g2) = critic_loss_and_grads(nets, batch, &y)?;
    adam_step(&mut nets.q1.flat, &g1, &mut nets.q1_adam, config.learning_rate)?;
    adam_step(&mut nets.q2.flat, &g2, &mut nets.q2_adam, config.learning_rate)?;
    Ok(loss)
}

/// Actor loss `mean(α·log π(a|s) − min(Q1, Q2)(s, a))` with the
/// reparameterized `a` for noise `z`, and its gradient.
pub fn actor_loss_and_grad(nets: &SacNets, config: &SacConfig, obs: &Matrix, z: &Matrix) -> Result<(f64, Grad)> {
    let mut tape = Tape::new();
    let s = tape.constant(obs.clone());
    let actor = nets.actor.on_tape(&mut tape, &nets.actor_spec, s, true);
    let mean = tape.slice_cols(actor.output, 0, ACTION_DIM);
    let log_std = tape.slice_cols(actor.output, ACTION_DIM, 2 * ACTION_DIM);
    let (action, log_prob) = squashed_on_tape(&mut tape, mean, log_std, z);
    let sa = tape.concat_cols(s, action);
    let q1 = nets.q1.on_tape(&mut tape, &nets.critic_spec, sa, false);
    let q2 = nets.q2.on_tape(&mut tape, &nets.critic_spec, sa, false);
    let q = tape.min(q1.output, q2.output);
    let ent = tape.scale(log_prob, config.ent_coef);
    let per = tape.sub(ent, q);
    let loss = tape.mean(per);
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::numeric("sac: non-finite actor loss"));
    }
    let grads = tape.backward(loss)?;
    Ok((value, actor.grad(&grads, &nets.actor)))
}

/// One actor step with fresh noise.
pub fn actor_update(batch: &Batch, config: &SacConfig, nets: &mut SacNets, rng: &mut Rng) -> Result<f64> {
    let z = Matrix::from_vec(batch.len(), ACTION_DIM, standard_normal(rng, batch.len() * ACTION_DIM));
    let (loss, g) = actor_loss_and_grad(nets, config, &batch.obs, &z)?;
    adam_step(&mut nets.actor.flat, &g, &mut nets.actor_adam, config.learning_rate)?;
    Ok(loss)
}

/// `target ← τ·online + (1 − τ)·target`, elementwise.
pub fn soft_update(online: &[f64], target: &mut [f64], tau: f64) {
    assert_eq!(online.len(), target.len(), "soft_update: shape mismatch");
    for (t, &o) in target.iter_mut().zip(online) {
        *t = tau * o + (1.0 - tau) * *t;
    }
}

/// What one [`SacAgent::train_step`] did.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    pub critic_updates: usize,
    pub actor_updates: usize,
    pub target_updates: usize,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub episode: Option<EpisodeSummary>,
}

/// SAC learner with its replay buffer and live episode.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub config: SacConfig,
    pub nets: SacNets,
    pub buffer: ReplayBuffer,
    rng: Rng,
    tracker: EpisodeTracker,
    episode_noise: Option<Vec<f64>>,
    total_steps: u64,
    gradient_iterations: u64,
}

impl SacAgent {
    pub fn new(config: SacConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let nets = SacNets::new(&config, &mut rng::stream(seed, Stream::NetworkInit))?;
        Ok(SacAgent {
            buffer: ReplayBuffer::new(config.buffer_size),
            config,
            nets,
            rng: rng::stream(seed, Stream::Agent),
            tracker: EpisodeTracker::default(),
            episode_noise: None,
            total_steps: 0,
            gradient_iterations: 0,
        })
    }

    pub fn total_steps(&self) -> u64 {
        self.total_steps
    }

    pub fn gradient_iterations(&self) -> u64 {
        self.gradient_iterations
    }

    /// One environment step followed, once learning has started, by
    /// `gradient_steps` critic/actor iterations.
    pub fn train_step(&mut self, env: &mut ArmEnv) -> Result<StepReport> {
        let fresh = self.tracker.current.is_none();
        let obs = self.tracker.observation(env);
        if fresh && self.config.use_sde {
            self.episode_noise = Some(standard_normal(&mut self.rng, ACTION_DIM));
        }
        let action = if self.total_steps < self.config.learning_starts as u64 {
            let mut a = [0.0; ACTION_DIM];
            a.iter_mut().for_each(|x| *x = self.rng.random_range(-1.0..=1.0));
            a
        } else if let Some(z) = &self.episode_noise {
            self.nets.act_with_noise(&obs, z)?
        } else {
            self.nets.act(&obs, false, &mut self.rng)?
        };
        let result = env.step(&action)?;
        self.buffer.push(Transition {
            obs: obs.flatten(),
            action,
            reward: result.reward,
            next_obs: result.observation.flatten(),
            terminated: result.terminated,
        });
        self.total_steps += 1;

        let mut report = StepReport {
            episode: self.tracker.record(&result),
            ..StepReport::default()
        };
        if self.total_steps >= self.config.learning_starts.max(1) as u64 && self.buffer.len() >= self.config.batch_size
        {
            for _ in 0..self.config.gradient_steps {
                let batch = replay_sample(&self.buffer, self.config.batch_size, &mut self.rng)?;
                report.critic_loss = Some(critic_update(&batch, &self.config, &mut self.nets, &mut self.rng)?);
                report.actor_loss = Some(actor_update(&batch, &self.config, &mut self.nets, &mut self.rng)?);
                report.critic_updates += 1;
                report.actor_updates += 1;
                self.gradient_iterations += 1;
                if self
                    .gradient_iterations
                    .is_multiple_of(self.config.target_update_interval as u64)
                {
                    let n = &mut self.nets;
                    soft_update(&n.q1.flat, &mut n.q1_target.flat, self.config.tau);
                    soft_update(&n.q2.flat, &mut n.q2_target.flat, self.config.tau);
                    report.target_updates += 1;
                }
            }
        }
        Ok(report)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.algo != Algo::Sac.name() {
            return Err(Error::usage(format!(
                "checkpoint holds a {} model, expected sac",
                ck.algo
            )));
        }
        let mut config = SacConfig::from_params(&ck.hyperparameters)?;
        let actor = ck.network("actor")?;
        config.hidden = actor.spec.hidden.clone();
        let mut agent = SacAgent::new(config, ck.seed)?;
        let n = &mut agent.nets;
        for (name, params, adam) in [
            ("actor", &mut n.actor, Some(&mut n.actor_adam)),
            ("q1", &mut n.q1, Some(&mut n.q1_adam)),
            ("q2", &mut n.q2, Some(&mut n.q2_adam)),
            ("q1_target", &mut n.q1_target, None),
            ("q2_target", &mut n.q2_target, None),
        ] {
            let rec = ck.network(name)?;
            if rec.params.layout != params.layout {
                return Err(Error::usage(format!(
                    "checkpoint network `{name}` does not match the sac architecture"
                )));
            }
            *params = rec.params.clone();
            if let (Some(dst), Some(src)) = (adam, &rec.adam) {
                *dst = src.clone();
            }
        }
        agent.tracker.completed = ck.episodes;
        Ok(agent)
    }
}

impl Policy for SacAgent {
    fn deterministic_action(&self, obs: &Observation) -> Result<Action> {
        self.nets.act_with_noise(obs, &[0.0; ACTION_DIM])
    }
}

impl Policy for SacNets {
    fn deterministic_action(&self, obs: &Observation) -> Result<Action> {
        self.act_with_noise(obs, &[0.0; ACTION_DIM])
    }
}

impl Learner for SacAgent {
    fn algo(&self) -> Algo {
        Algo::Sac
    }

    fn train_episodes(
        &mut self,
        env: &mut ArmEnv,
        episodes: u64,
        on_episode: &mut dyn FnMut(&EpisodeSummary),
    ) -> Result<()> {
        let target = self.tracker.completed + episodes;
        while self.tracker.completed < target {
            if let Some(s) = self.train_step(env)?.episode {
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
        let rec = |name: &str, spec: &MlpSpec, params: &MlpParams, adam: Option<&AdamState>| NetworkRecord {
            name: name.into(),
            spec: spec.clone(),
            params: params.clone(),
            adam: adam.cloned(),
        };
        Checkpoint {
            algo: Algo::Sac.name().into(),
            episodes: self.tracker.completed,
            seed,
            hyperparameters: self.config.to_params(),
            networks: vec![
                rec("actor", &n.actor_spec, &n.actor, Some(&n.actor_adam)),
                rec("q1", &n.critic_spec, &n.q1, Some(&n.q1_adam)),
                rec("q2", &n.critic_spec, &n.q2, Some(&n.q2_adam)),
                rec("q1_target", &n.critic_spec, &n.q1_target, None),
                rec("q2_target", &n.critic_spec, &n.q2_target, None),
            ],
            vectors: Vec::new(),
        }
    }
}
