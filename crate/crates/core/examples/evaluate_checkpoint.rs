//! Trains PPO briefly, saves checkpoints, and measures the success rate of
//! each on random targets at the 5-step evaluation limit.
//!
//!     cargo run --release --example evaluate_checkpoint

use armtune::env::EVAL_MAX_STEPS;
use armtune::harness::{self, TrainRun};
use armtune::hyper::{Algo, Preset};

fn main() -> armtune::Result<()> {
    let out = std::env::temp_dir().join(format!("evaluate_checkpoint_{}", std::process::id()));
    let run = TrainRun {
        algo: Algo::Ppo,
        params: Algo::Ppo.preset(Preset::Default),
        episodes: 600,
        milestones: vec![100, 300],
        seed: 0,
        hidden: None,
    };
    let trained = harness::train_full(&run, &out)?;
    for c in &trained.checkpoints {
        let path = out.join(&c.file);
        let r = harness::evaluate_checkpoint(&path, "ppo-default", 1000, EVAL_MAX_STEPS, 42)?;
        println!(
            "{:>4} episodes: {:>4}/{} targets reached ({:.1}%)",
            r.episodes,
            r.successes,
            r.targets,
            100.0 * r.success_rate
        );
    }
    Ok(())
}
