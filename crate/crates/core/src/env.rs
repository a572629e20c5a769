//! Reach-target task on the kinematic arm.
//!
//! The state is the joint vector, the tool position and the goal position.
//! Actions are per-joint angle increments, reward is the negated distance
//! between tool and goal, and the episode terminates once that distance drops
//! below the success threshold.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{tool_position, ArmModel, JointVector, Vec3, N_JOINTS};
use crate::rng::{self, Rng, Stream};

pub const OBS_DIM: usize = 13;
pub const ACTION_DIM: usize = N_JOINTS;

pub const TRAIN_MAX_STEPS: usize = 50;
pub const EVAL_MAX_STEPS: usize = 5;

pub type Action = [f64; ACTION_DIM];

/// Axis-aligned box given by its two corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalBox {
    pub low: Vec3,
    pub high: Vec3,
}

impl GoalBox {
    pub fn centered(center: Vec3, half_extent: f64) -> Self {
        GoalBox {
            low: Vec3::new(center.x - half_extent, center.y - half_extent, center.z - half_extent),
            high: Vec3::new(center.x + half_extent, center.y + half_extent, center.z + half_extent),
        }
    }

    fn is_ordered(&self) -> bool {
        self.low.x <= self.high.x && self.low.y <= self.high.y && self.low.z <= self.high.z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub max_steps: usize,
    /// Radians per unit action per joint.
    pub action_scale: f64,
    pub goal_box: GoalBox,
    /// Meters; success requires a strictly smaller distance.
    pub success_threshold: f64,
    /// Starting joints; `None` uses the mid-range of every joint interval.
    pub home: Option<JointVector>,
    /// Draw the starting joints uniformly within limits instead of using `home`.
    pub randomize_start: bool,
}

impl EnvConfig {
    /// Defaults for `model`: 5 cm threshold, 0.05 rad per step, a 0.3 m goal
    /// cube centred on the home tool position.
    pub fn for_model(model: &ArmModel, max_steps: usize) -> Self {
        let home_ee = tool_position(model, &model.home());
        EnvConfig {
            max_steps,
            action_scale: 0.05,
            goal_box: GoalBox::centered(home_ee, 0.15),
            success_threshold: 0.05,
            home: None,
            randomize_start: false,
        }
    }

    pub fn validate(&self, model: &ArmModel) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::usage("max_steps must be positive"));
        }
        if !(self.action_scale > 0.0) {
            return Err(Error::usage("action_scale must be positive"));
        }
        if !(self.success_threshold > 0.0) {
            return Err(Error::usage("success_threshold must be positive"));
        }
        if !self.goal_box.is_ordered() || !self.goal_box.low.is_finite() || !self.goal_box.high.is_finite() {
            return Err(Error::usage(
                "goal_box corners must be finite and ordered componentwise",
            ));
        }
        if let Some(home) = &self.home {
            model.check_limits(home)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub joints: JointVector,
    pub ee_pos: Vec3,
    pub goal_pos: Vec3,
}

impl Observation {
    /// `[joints.., ee.., goal..]`
    pub fn flatten(&self) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        out[..N_JOINTS].copy_from_slice(&self.joints.0);
        out[7..10].copy_from_slice(&self.ee_pos.to_array());
        out[10..13].copy_from_slice(&self.goal_pos.to_array());
        out
    }

    pub fn distance(&self) -> f64 {
        self.ee_pos.distance(&self.goal_pos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Dense reward: negated Euclidean distance between tool and goal.
pub fn reward(ee: &Vec3, goal: &Vec3) -> f64 {
    -ee.distance(goal)
}

/// Uniform sample inside the goal box. Always consumes exactly three draws.
pub fn sample_goal(rng: &mut Rng, config: &EnvConfig) -> Vec3 {
    let GoalBox { low, high } = config.goal_box;
    let mut axis = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let x = axis(low.x, high.x);
    let y = axis(low.y, high.y);
    let z = axis(low.z, high.z);
    Vec3::new(x, y, z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    NotStarted,
    Running,
    Finished,
}

/// A single environment instance; owns its random stream.
#[derive(Debug, Clone)]
pub struct ArmEnv {
    model: ArmModel,
    config: EnvConfig,
    rng: Rng,
    joints: JointVector,
    goal: Vec3,
    steps: usize,
    phase: Phase,
}

impl ArmEnv {
    pub fn new(model: ArmModel, config: EnvConfig, seed: u64) -> Result<Self> {
        model.validate()?;
        config.validate(&model)?;
        let joints = config.home.unwrap_or_else(|| model.home());
        Ok(ArmEnv {
            goal: tool_position(&model, &joints),
            model,
            config,
            rng: rng::stream(seed, Stream::Environment),
            joints,
            steps: 0,
            phase: Phase::NotStarted,
        })
    }

    /// Panda arm with the default task geometry.
    pub fn panda(max_steps: usize, seed: u64) -> Self {
        let model = ArmModel::panda();
        let config = EnvConfig::for_model(&model, max_steps);
        Self::new(model, config, seed).expect("default configuration is valid")
    }

    pub fn model(&self) -> &ArmModel {
        &self.model
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn observation(&self) -> Observation {
        Observation {
            joints: self.joints,
            ee_pos: tool_position(&self.model, &self.joints),
            goal_pos: self.goal,
        }
    }

    /// Starts a new episode. A seed re-seeds the environment stream so the
    /// whole episode (and any that follow) is reproducible.
    pub fn reset(&mut self, seed: Option<u64>) -> Observation {
        if let Some(seed) = seed {
            self.rng = rng::stream(seed, Stream::Environment);
        }
        self.joints = if self.config.randomize_start {
            let rng = &mut self.rng;
            JointVector(std::array::from_fn(|i| {
                let lim = self.model.limits[i];
                lim.lower + (lim.upper - lim.lower) * rng.random::<f64>()
            }))
        } else {
            self.config.home.unwrap_or_else(|| self.model.home())
        };
        self.goal = sample_goal(&mut self.rng, &self.config);
        self.steps = 0;
        self.phase = Phase::Running;
        self.observation()
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        match self.phase {
            Phase::Running => {}
            Phase::NotStarted => return Err(Error::usage("step called before reset")),
            Phase::Finished => return Err(Error::usage("step called after the episode ended")),
        }
        if let Some(i) = action.iter().position(|a| !a.is_finite()) {
            return Err(Error::usage(format!("action component {i} is not finite")));
        }

        for ((q, &a), lim) in self.joints.0.iter_mut().zip(action).zip(&self.model.limits) {
            *q = lim.clamp(*q + self.config.action_scale * a.clamp(-1.0, 1.0));
        }
        self.steps += 1;

        let observation = self.observation();
        let reward = reward(&observation.ee_pos, &observation.goal_pos);
        let terminated = -reward < self.config.success_threshold;
        let truncated = !terminated && self.steps >= self.config.max_steps;
        if terminated || truncated {
            self.phase = Phase::Finished;
        }
        Ok(StepResult {
            observation,
            reward,
            terminated,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::forward_kinematics;

    #[test]
    fn reward_examples() {
        let o = Vec3::new(0.0, 0.0, 0.0);
        assert_eq!(reward(&o, &o), 0.0);
        assert_eq!(reward(&o, &Vec3::new(0.0, 0.0, 1.0)), -1.0);
        assert_eq!(reward(&Vec3::new(1.0, 2.0, 2.0), &o), -3.0);
    }

    #[test]
    fn degenerate_box_returns_corner() {
        let model = ArmModel::panda();
        let mut config = EnvConfig::for_model(&model, 50);
        let c = Vec3::new(0.4, -0.1, 0.5);
        config.goal_box = GoalBox { low: c, high: c };
        let mut rng = rng::seeded(3);
        assert_eq!(sample_goal(&mut rng, &config), c);
    }

    #[test]
    fn goal_sampling_is_uniform_and_deterministic() {
        let model = ArmModel::panda();
        let mut config = EnvConfig::for_model(&model, 50);
        config.goal_box = GoalBox {
            low: Vec3::new(0.0, 0.0, 0.0),
            high: Vec3::new(1.0, 1.0, 1.0),
        };
        let mut rng = rng::seeded(11);
        let n = 10_000;
        let mut sum = [0.0; 3];
        for _ in 0..n {
            let g = sample_goal(&mut rng, &config).to_array();
            for k in 0..3 {
                assert!((0.0..=1.0).contains(&g[k]));
                sum[k] += g[k];
            }
        }
        for s in sum {
            assert!((s / n as f64 - 0.5).abs() < 0.02);
        }
        let a = sample_goal(&mut rng::seeded(5), &config);
        let b = sample_goal(&mut rng::seeded(5), &config);
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_consumes_exactly_three_draws() {
        let model = ArmModel::panda();
        let config = EnvConfig::for_model(&model, 50);
        let mut a = rng::seeded(9);
        let mut b = rng::seeded(9);
        sample_goal(&mut a, &config);
        for _ in 0..3 {
            let _: f64 = b.random();
        }
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn seeded_reset_is_reproducible_and_consistent() {
        let mut env = ArmEnv::panda(50, 0);
        let a = env.reset(Some(7));
        let b = env.reset(Some(7));
        assert_eq!(a, b);
        assert_eq!(env.steps(), 0);
        assert_eq!(forward_kinematics(env.model(), &a.joints).unwrap(), a.ee_pos);
    }

    #[test]
    fn goal_at_tool_terminates_immediately() {
        let model = ArmModel::panda();
        let mut config = EnvConfig::for_model(&model, 50);
        let home_ee = forward_kinematics(&model, &model.home()).unwrap();
        config.goal_box = GoalBox {
            low: home_ee,
            high: home_ee,
        };
        let mut env = ArmEnv::new(model, config, 0).unwrap();
        env.reset(Some(1));
        let r = env.step(&[0.0; 7]).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(r.terminated && !r.truncated);
    }

    #[test]
    fn oversized_action_components_are_clamped() {
        let mut a = ArmEnv::panda(50, 0);
        let mut b = ArmEnv::panda(50, 0);
        a.reset(Some(2));
        b.reset(Some(2));
        let ra = a.step(&[2.0, -3.0, 0.5, 1.0, 7.0, -1.0, 0.0]).unwrap();
        let rb = b.step(&[1.0, -1.0, 0.5, 1.0, 1.0, -1.0, 0.0]).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn step_limit_truncates_and_then_refuses() {
        let model = ArmModel::panda();
        let mut config = EnvConfig::for_model(&model, EVAL_MAX_STEPS);
        // goal far outside the reachable region so the episode cannot terminate
        let far = Vec3::new(5.0, 5.0, 5.0);
        config.goal_box = GoalBox { low: far, high: far };
        let mut env = ArmEnv::new(model, config, 0).unwrap();
        env.reset(None);
        for i in 1..=EVAL_MAX_STEPS {
            let r = env.step(&[0.0; 7]).unwrap();
            assert!(!r.terminated);
            assert_eq!(r.truncated, i == EVAL_MAX_STEPS);
            assert!(r.reward <= 0.0);
        }
        assert!(matches!(env.step(&[0.0; 7]), Err(Error::Usage(_))));
    }

    #[test]
    fn step_before_reset_and_nan_action_are_usage_errors() {
        let mut env = ArmEnv::panda(50, 0);
        assert!(matches!(env.step(&[0.0; 7]), Err(Error::Usage(_))));
        env.reset(None);
        let mut bad = [0.0; 7];
        bad[3] = f64::NAN;
        assert!(matches!(env.step(&bad), Err(Error::Usage(_))));
    }

    #[test]
    fn joints_are_clamped_to_limits() {
        let mut env = ArmEnv::panda(10_000, 0);
        env.reset(Some(0));
        for _ in 0..200 {
            let r = env.step(&[1.0; 7]).unwrap();
            if r.done() {
                break;
            }
            env.model().check_limits(&r.observation.joints).unwrap();
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let model = ArmModel::panda();
        let mut config = EnvConfig::for_model(&model, 50);
        config.success_threshold = 0.0;
        assert!(ArmEnv::new(model.clone(), config, 0).is_err());
        let mut config = EnvConfig::for_model(&model, 50);
        std::mem::swap(&mut config.goal_box.low, &mut config.goal_box.high);
        assert!(ArmEnv::new(model, config, 0).is_err());
    }
}
