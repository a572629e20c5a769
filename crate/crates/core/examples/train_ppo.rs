//! Trains PPO with its default hyperparameters and prints the mean episode
//! reward per tenth of training.
//!
//!     cargo run --release --example train_ppo -- [episodes] [seed]

use armtune::agent::Learner;
use armtune::env::{ArmEnv, TRAIN_MAX_STEPS};
use armtune::ppo::{PpoAgent, PpoConfig};

fn main() -> armtune::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes: u64 = args.next().map_or(1000, |s| s.parse().expect("episodes"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let mut env = ArmEnv::panda(TRAIN_MAX_STEPS, seed);
    let mut agent = PpoAgent::new(PpoConfig::default(), seed)?;
    let mut rewards = Vec::new();
    let mut successes = 0;
    agent.train_episodes(&mut env, episodes, &mut |e| {
        rewards.push(e.reward);
        successes += e.success as usize;
    })?;

    let chunk = (rewards.len() / 10).max(1);
    for (i, c) in rewards.chunks(chunk).enumerate() {
        println!(
            "episodes {:>5}..{:<5} mean reward {:8.3}",
            i * chunk + 1,
            i * chunk + c.len(),
            c.iter().sum::<f64>() / c.len() as f64
        );
    }
    println!(
        "{successes} of {episodes} episodes reached the goal; {} policy updates",
        agent.updates()
    );
    Ok(())
}
