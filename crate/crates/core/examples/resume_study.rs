//! Crash and resume: a study is stopped with one trial in flight, then resumed.
//! The in-flight trial is recorded as interrupted and the next suggestion is
//! the one an uninterrupted study would have made.
//!
//!     cargo run --release --example resume_study

use std::fs;

use armtune::harness::BenchFunction;
use armtune::hyper::ParamMap;
use armtune::study::{self, Evaluation, FnObjective, StudyConfig};
use armtune::tpe::TrialState;

fn main() -> armtune::Result<()> {
    let sphere = FnObjective {
        name: "sphere".to_string(),
        f: |p: &ParamMap, _seed: u64| {
            let (x, y) = (p["x"].as_f64().unwrap(), p["y"].as_f64().unwrap());
            Ok(Evaluation {
                value: BenchFunction::Sphere.eval(x, y),
                ..Default::default()
            })
        },
    };
    let dir = std::env::temp_dir().join(format!("resume_study_{}", std::process::id()));
    fs::create_dir_all(&dir).map_err(|e| armtune::Error::io(&dir, e))?;
    let journal = dir.join("study.jsonl");
    let config = |n| {
        let mut c = StudyConfig::new(BenchFunction::Sphere.space(), n, 5, 3);
        c.journal = Some(journal.clone());
        c
    };

    let first = study::run_study(&config(6), &sphere)?;
    println!("first run: {} trials", first.len());

    // what a crash during trial 7 leaves behind
    let mut orphan = first[5].clone();
    orphan.trial.id = 7;
    orphan.trial.state = TrialState::Running;
    orphan.trial.value = None;
    let running = study::running_path(&journal);
    fs::write(&running, serde_json::to_string(&orphan).unwrap() + "\n").map_err(|e| armtune::Error::io(&running, e))?;

    let resumed = study::run_study(&config(10), &sphere)?;
    for r in &resumed {
        let note = r.breakdown.failure.as_deref().unwrap_or("");
        println!(
            "trial {:>2} {:>8?} value {:>9.4} {note}",
            r.trial.id,
            r.trial.state,
            r.trial.value.unwrap_or(f64::NAN)
        );
    }
    let best = study::best_trial(&resumed)?;
    println!("best: trial {} with {:.4}", best.trial.id, best.trial.value.unwrap());
    Ok(())
}
