//! A short hyperparameter study for PPO on the reach task, then the best
//! configuration against the defaults. Budgets are tiny so it finishes in a
//! few minutes; the CLI's `optimize` runs the full-size version.
//!
//!     cargo run --release --example tune_ppo

use armtune::env::EVAL_MAX_STEPS;
use armtune::harness::{self, TrainRun};
use armtune::hyper::{Algo, Preset};
use armtune::neural::Checkpoint;
use armtune::study::{self, RlObjective, StudyConfig};

fn main() -> armtune::Result<()> {
    let algo = Algo::Ppo;
    let config = StudyConfig::new(algo.search_space(), 12, 6, 0);
    let mut objective = RlObjective::new(algo, 400);
    objective.eval_targets = 0;
    let records = study::run_study(&config, &objective)?;
    for r in &records {
        println!(
            "trial {:>2}: tail reward {:8.3}",
            r.trial.id,
            r.trial.value.unwrap_or(f64::NAN)
        );
    }
    let best = study::best_trial(&records)?;
    println!(
        "best trial {}: {}",
        best.trial.id,
        serde_json::to_string(&best.trial.params).unwrap()
    );

    let out = std::env::temp_dir().join(format!("tune_ppo_{}", std::process::id()));
    for (label, params) in [
        ("default", algo.preset(Preset::Default)),
        ("tuned", best.trial.params.clone()),
    ] {
        let run = TrainRun {
            algo,
            params,
            episodes: 1000,
            milestones: vec![],
            seed: 1,
            hidden: None,
        };
        let dir = out.join(label);
        let trained = harness::train_full(&run, &dir)?;
        let ck = Checkpoint::load(dir.join(&trained.checkpoints[0].file))?;
        let rate = harness::evaluate_success(&ck, 1000, EVAL_MAX_STEPS, 7)?;
        println!("{label:>8}: success rate {:.1}%", 100.0 * rate);
    }
    Ok(())
}
