//! Writes the report tables for a small random-search study and a training
//! curve, then prints them.
//!
//!     cargo run --release --example report

use std::fs;

use armtune::harness::{self, ReportInputs, TrainRun};
use armtune::hyper::{Algo, ParamMap, ParamValue, Preset, SearchSpace};
use armtune::study::{self, Evaluation, FnObjective, SamplerKind, StudyConfig};
use armtune::tpe::ParamDomain;

fn main() -> armtune::Result<()> {
    let dir = std::env::temp_dir().join(format!("armtune_report_{}", std::process::id()));
    let space = SearchSpace::new(vec![
        ParamDomain::log_uniform("learning_rate", 1e-5, 1e-2),
        ParamDomain::uniform("gamma", 0.9, 0.9999),
        ParamDomain::categorical("use_sde", &["true", "false"]),
    ])?;
    // only the learning rate matters, with a peak at 1e-3
    let objective = FnObjective {
        name: "synthetic".to_string(),
        f: |p: &ParamMap, _seed: u64| {
            let lr = p["learning_rate"].as_f64().unwrap();
            let sde = matches!(&p["use_sde"], ParamValue::Categorical(c) if c == "true");
            Ok(Evaluation {
                value: -(lr.log10() + 3.0).powi(2) - if sde { 0.01 } else { 0.0 },
                ..Default::default()
            })
        },
    };
    let journal = dir.join("study.jsonl");
    fs::create_dir_all(&dir).map_err(|e| armtune::Error::io(&dir, e))?;
    let mut config = StudyConfig::new(space, 40, 40, 0);
    config.sampler = SamplerKind::Random;
    config.journal = Some(journal.clone());
    study::run_study(&config, &objective)?;

    let run = TrainRun {
        algo: Algo::Ppo,
        params: Algo::Ppo.preset(Preset::Default),
        episodes: 300,
        milestones: vec![],
        seed: 0,
        hidden: None,
    };
    harness::train_full(&run, &dir.join("ppo"))?;

    let inputs = ReportInputs {
        journal: Some(journal),
        curves: vec![("ppo-default".to_string(), dir.join("ppo").join(harness::CURVE_FILE))],
        evaluations: vec![],
        window: 50,
    };
    for w in harness::report_emit(&inputs, &dir)? {
        println!("warning: {w}");
    }
    for file in [harness::IMPORTANCE_FILE, harness::PCP_FILE, harness::CURVES_FILE] {
        let path = dir.join(file);
        let text = fs::read_to_string(&path).map_err(|e| armtune::Error::io(&path, e))?;
        println!("== {file} ({} rows)", text.lines().count() - 1);
        for line in text.lines().take(6) {
            println!("{line}");
        }
    }
    Ok(())
}
