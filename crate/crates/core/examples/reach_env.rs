//! Forward kinematics and one episode of the reach task under a greedy
//! Jacobian-free policy: nudge each joint in whichever direction brings the
//! tool closer to the goal.
//!
//!     cargo run --release --example reach_env

use armtune::env::{Action, ArmEnv, ACTION_DIM, TRAIN_MAX_STEPS};
use armtune::kinematics::{forward_kinematics, ArmModel};

fn main() -> armtune::Result<()> {
    let model = ArmModel::panda();
    let home = model.home();
    let ee = forward_kinematics(&model, &home)?;
    println!("home joints {:?}", home.angles().map(|q| (q * 1000.0).round() / 1000.0));
    println!("home tool point ({:.4}, {:.4}, {:.4})", ee.x, ee.y, ee.z);

    let mut env = ArmEnv::panda(TRAIN_MAX_STEPS, 7);
    let mut obs = env.reset(None);
    println!(
        "goal ({:.4}, {:.4}, {:.4}), distance {:.4}",
        obs.goal_pos.x,
        obs.goal_pos.y,
        obs.goal_pos.z,
        obs.distance()
    );

    let mut total = 0.0;
    loop {
        let mut action: Action = [0.0; ACTION_DIM];
        for (j, a) in action.iter_mut().enumerate() {
            let mut q = obs.joints;
            q.0[j] = model.limits[j].clamp(q.0[j] + 0.01);
            let closer = forward_kinematics(&model, &q)?.distance(&obs.goal_pos) < obs.distance();
            *a = if closer { 1.0 } else { -1.0 };
        }
        let step = env.step(&action)?;
        total += step.reward;
        obs = step.observation;
        if step.done() {
            let how = if step.terminated {
                "reached the goal"
            } else {
                "ran out of steps"
            };
            println!(
                "{how} after {} steps, distance {:.4}, return {total:.3}",
                env.steps(),
                obs.distance()
            );
            return Ok(());
        }
    }
}
