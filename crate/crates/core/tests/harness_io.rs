use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use armtune::harness::{self, BenchFunction, EvalRecord, ReportInputs, TrainRun};
use armtune::hyper::{Algo, ParamMap, Preset};
use armtune::neural::Checkpoint;
use armtune::study::{self, Evaluation, FnObjective, RlObjective, SamplerKind, StudyConfig};

fn armtune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_armtune")).args(args).output().unwrap()
}

fn read_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn trial_evaluation_is_deterministic_and_non_positive() {
    for algo in [Algo::Ppo, Algo::Sac] {
        let mut objective = RlObjective::new(algo, 8);
        objective.tail_episodes = 4;
        objective.eval_targets = 10;
        objective.hidden = Some(vec![16, 16]);
        let params = algo.preset(Preset::Default);
        let a = study::evaluate_trial(&objective, &params, 5).unwrap();
        let b = study::evaluate_trial(&objective, &params, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.value <= 0.0);
        for key in ["tail_reward", "tail_success_rate", "eval_success_rate"] {
            assert!(a.metrics.contains_key(key), "{algo}: {key}");
        }
        let c = study::evaluate_trial(&objective, &params, 6).unwrap();
        assert_ne!(a.value, c.value, "{algo}: seed is ignored");
    }
}

#[test]
fn milestones_give_one_checkpoint_each() {
    let dir = tempfile::tempdir().unwrap();
    let run = TrainRun {
        algo: Algo::Ppo,
        params: Algo::Ppo.preset(Preset::Default),
        episodes: 30,
        milestones: vec![20, 10],
        seed: 1,
        hidden: Some(vec![8, 8]),
    };
    let out = harness::train_full(&run, dir.path()).unwrap();
    let episodes: Vec<u64> = out.checkpoints.iter().map(|c| c.episodes).collect();
    assert_eq!(episodes, [10, 20, 30]);
    for c in &out.checkpoints {
        let ck = Checkpoint::load(dir.path().join(&c.file)).unwrap();
        assert_eq!(ck.episodes, c.episodes);
    }
    let curve = harness::read_curve(&dir.path().join(harness::CURVE_FILE)).unwrap();
    assert_eq!(curve, out.curve);
    assert_eq!(
        read_lines(&dir.path().join(harness::CURVE_FILE))[0],
        "episode,reward,length,success"
    );

    let bad = TrainRun {
        milestones: vec![31],
        ..run
    };
    assert_eq!(harness::train_full(&bad, dir.path()).unwrap_err().exit_code(), 2);
}

#[test]
fn report_files_have_the_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("j.jsonl");
    let mut config = StudyConfig::new(BenchFunction::Bowl.space(), 30, 10, 3);
    config.journal = Some(journal.clone());
    config.sampler = SamplerKind::Random;
    let objective = FnObjective {
        name: "bowl".into(),
        f: |p: &ParamMap, _seed: u64| {
            Ok(Evaluation {
                value: BenchFunction::Bowl.eval(p["x"].as_f64().unwrap(), p["y"].as_f64().unwrap()),
                ..Default::default()
            })
        },
    };
    study::run_study(&config, &objective).unwrap();

    let curve = dir.path().join("curve.csv");
    fs::write(
        &curve,
        "episode,reward,length,success\n1,-2.0,50,false\n2,-1.0,50,false\n3,-0.5,4,true\n",
    )
    .unwrap();

    // 4 models x 3 checkpoints
    let evals = dir.path().join("evals.jsonl");
    let mut text = String::new();
    for model in ["ppo-default", "ppo-tuned", "sac-default", "sac-tuned"] {
        for episodes in [500, 1000, 2000] {
            let r = EvalRecord {
                model: model.into(),
                algo: model[..3].into(),
                episodes,
                checkpoint: format!("{model}_{episodes}.ckpt"),
                seed: 0,
                targets: 1000,
                max_steps: 5,
                successes: episodes / 10,
                success_rate: episodes as f64 / 10_000.0,
            };
            text += &(serde_json::to_string(&r).unwrap() + "\n");
        }
    }
    fs::write(&evals, text).unwrap();

    let out = dir.path().join("report");
    let inputs = ReportInputs {
        journal: Some(journal),
        curves: vec![("run-a".into(), curve)],
        evaluations: vec![evals],
        window: 2,
    };
    let warnings = harness::report_emit(&inputs, &out).unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");

    let pcp = read_lines(&out.join(harness::PCP_FILE));
    assert_eq!(pcp.len(), 31);
    assert_eq!(pcp[0], "x,y,value");

    let imp = read_lines(&out.join(harness::IMPORTANCE_FILE));
    assert_eq!(imp[0], "param,score");
    let scores: Vec<f64> = imp[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(scores.len(), 2);
    assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(scores[0] >= scores[1]);

    let curves = read_lines(&out.join(harness::CURVES_FILE));
    assert_eq!(
        curves,
        [
            "run,episode,reward,smoothed",
            "run-a,1,-2,-2",
            "run-a,2,-1,-1.5",
            "run-a,3,-0.5,-0.75"
        ]
    );

    let summary = read_lines(&out.join(harness::SUMMARY_FILE));
    assert_eq!(summary.len(), 13);
    assert_eq!(summary[0], "model,episodes,success_rate");
    assert_eq!(summary[1], "ppo-default,500,0.05");
    assert_eq!(summary[12], "sac-tuned,2000,0.2");

    for f in [
        harness::PCP_FILE,
        harness::IMPORTANCE_FILE,
        harness::CURVES_FILE,
        harness::SUMMARY_FILE,
    ] {
        let bytes = fs::read(out.join(f)).unwrap();
        assert!(!bytes.contains(&b'\r') && bytes.ends_with(b"\n"), "{f}");
    }
}

#[test]
fn empty_report_writes_headers_and_warns() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("empty.jsonl");
    fs::write(&journal, "").unwrap();
    let inputs = ReportInputs {
        journal: Some(journal),
        ..Default::default()
    };
    let warnings = harness::report_emit(&inputs, dir.path()).unwrap();
    assert!(!warnings.is_empty());
    assert_eq!(
        read_lines(&dir.path().join(harness::SUMMARY_FILE)),
        ["model,episodes,success_rate"]
    );
    assert_eq!(read_lines(&dir.path().join(harness::IMPORTANCE_FILE)), ["param,score"]);
}

#[test]
fn bench_table_rows_and_warm_up_equality() {
    let table = harness::bench_tpe(BenchFunction::Bowl, 10, 10, 4, 0).unwrap();
    assert!(table.rows.iter().all(|r| r.tpe_best == r.random_best));
    let csv = harness::bench_csv(&table);
    assert_eq!(csv.lines().count(), 1 + 4 + 1);
    assert!(harness::bench_tpe(BenchFunction::Sphere, 10, 5, 1, 0).is_err());
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(armtune(&["--help"]).status.code(), Some(0));
    assert_eq!(
        armtune(&["train", "--algo", "dqn", "--out", "x"]).status.code(),
        Some(2)
    );
    assert_eq!(armtune(&["nonsense"]).status.code(), Some(2));
    assert_eq!(armtune(&["bench-tpe", "--seeds", "1"]).status.code(), Some(2));
    let missing = dir.path().join("missing.ckpt");
    assert_eq!(armtune(&["evaluate", missing.to_str().unwrap()]).status.code(), Some(4));

    // a learning rate this large overflows the first Adam steps
    let params = dir.path().join("params.json");
    fs::write(&params, r#"{"learning_rate": 1e300, "n_steps": 16, "batch_size": 16}"#).unwrap();
    let out = dir.path().join("run");
    let o = armtune(&[
        "train",
        "--algo",
        "ppo",
        "--episodes",
        "20",
        "--hidden",
        "8,8",
        "--params",
        params.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join(harness::CURVE_FILE).exists());
}

#[test]
fn help_lists_every_flag() {
    let mut text = String::new();
    for cmd in ["optimize", "train", "evaluate", "report", "bench-tpe"] {
        text += &String::from_utf8(armtune(&[cmd, "--help"]).stdout).unwrap();
    }
    for flag in [
        "--algo",
        "--trials",
        "--warmup",
        "--budget-episodes",
        "--episodes",
        "--checkpoints",
        "--targets",
        "--max-steps",
        "--seed",
        "--out",
        "--journal",
        "--params",
        "--preset",
        "--jobs",
    ] {
        assert!(text.contains(flag), "{flag}");
    }
    assert!(text.contains("best-from-journal") && text.contains("best-paper"));
}

#[test]
fn best_from_journal_preset_trains() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("ppo.jsonl");
    let j = journal.to_str().unwrap();
    let o = armtune(&[
        "optimize",
        "--algo",
        "ppo",
        "--trials",
        "2",
        "--warmup",
        "2",
        "--budget-episodes",
        "6",
        "--tail-episodes",
        "3",
        "--eval-targets",
        "0",
        "--hidden",
        "8,8",
        "--journal",
        j,
    ]);
    assert!(o.status.success());
    let best: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let out = dir.path().join("run");
    let o = armtune(&[
        "train",
        "--algo",
        "ppo",
        "--preset",
        "best-from-journal",
        "--journal",
        j,
        "--episodes",
        "4",
        "--hidden",
        "8,8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join(harness::CHECKPOINTS_FILE)).unwrap()).unwrap();
    assert_eq!(meta[0]["params"], best["params"]);
}
