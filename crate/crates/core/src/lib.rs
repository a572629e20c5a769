//! PPO, SAC and TPE hyperparameter search for a kinematic 7-DOF reach task.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod env;
pub mod error;
pub mod harness;
pub mod hyper;
pub mod kinematics;
pub mod neural;
pub mod ppo;
pub mod rng;
pub mod sac;
pub mod study;
pub mod tpe;

pub use error::{Error, Result};
