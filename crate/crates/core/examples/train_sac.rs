//! Trains SAC and prints the mean episode reward per tenth of training.
//!
//! The default temperature (0.2) outweighs this task's small dense rewards;
//! pass a smaller one to see the critic-driven improvement.
//!
//!     cargo run --release --example train_sac -- [episodes] [ent_coef] [seed]

use armtune::agent::Learner;
use armtune::env::{ArmEnv, TRAIN_MAX_STEPS};
use armtune::sac::{SacAgent, SacConfig};

fn main() -> armtune::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes: u64 = args.next().map_or(200, |s| s.parse().expect("episodes"));
    let ent_coef: f64 = args.next().map_or(0.01, |s| s.parse().expect("ent_coef"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let config = SacConfig {
        ent_coef,
        hidden: vec![32, 32],
        ..SacConfig::default()
    };
    let mut env = ArmEnv::panda(TRAIN_MAX_STEPS, seed);
    let mut agent = SacAgent::new(config, seed)?;
    let mut rewards = Vec::new();
    agent.train_episodes(&mut env, episodes, &mut |e| rewards.push(e.reward))?;

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
        "{} environment steps, {} gradient iterations",
        agent.total_steps(),
        agent.gradient_iterations()
    );
    Ok(())
}
