//! Experiment harness: full training runs with checkpoints, success-rate
//! evaluation, the convergence-speed metric, CSV reports and a TPE benchmark.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::agent::{build_learner, load_learner, EpisodeSummary, Policy};
use crate::env::{ArmEnv, TRAIN_MAX_STEPS};
use crate::error::{Error, Result};
use crate::hyper::{Algo, ParamMap};
use crate::neural::Checkpoint;
use crate::rng::{self, Stream};
use crate::study::{self, best_trial, run_study, Evaluation, FnObjective, SamplerKind, StudyConfig, TrialRecord};
use crate::tpe::{importance, ParamDomain, SearchSpace};

/// Default smoothing window, in episodes.
pub const DEFAULT_WINDOW: usize = 100;

/// One training episode in the curve log.
pub type CurvePoint = EpisodeSummary;

/// A checkpoint written during [`train_full`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub episodes: u64,
    pub algo: Algo,
    pub params: ParamMap,
    pub seed: u64,
    /// File name relative to the run directory.
    pub file: String,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub algo: Algo,
    pub params: ParamMap,
    pub episodes: u64,
    /// Extra checkpoint episodes; the final episode is always saved.
    pub milestones: Vec<u64>,
    pub seed: u64,
    pub hidden: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub curve: Vec<CurvePoint>,
    pub checkpoints: Vec<CheckpointMeta>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path.display().to_string(), format!("{other:?}")),
    }
}

pub const CURVE_FILE: &str = "curve.csv";
pub const CHECKPOINTS_FILE: &str = "checkpoints.json";

/// Trains at the training step limit, logging every episode to
/// `out_dir/curve.csv` and saving a checkpoint at every milestone and at the
/// end (`out_dir/<algo>_ep<N>.ckpt`, listed in `out_dir/checkpoints.json`).
///
/// On a numeric failure the curve log is flushed up to the failing episode
/// before the error is returned.
pub fn train_full(run: &TrainRun, out_dir: &Path) -> Result<TrainOutput> {
    if run.episodes == 0 {
        return Err(Error::usage("episodes must be at least 1"));
    }
    if let Some(m) = run.milestones.iter().find(|&&m| m == 0 || m > run.episodes) {
        return Err(Error::usage(format!(
            "checkpoint milestone {m} is outside 1..={}",
            run.episodes
        )));
    }
    let mut stops: Vec<u64> = run.milestones.clone();
    stops.push(run.episodes);
    stops.sort_unstable();
    stops.dedup();

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let curve_path = out_dir.join(CURVE_FILE);
    let mut writer = csv_writer(&curve_path)?;
    let mut env = ArmEnv::panda(TRAIN_MAX_STEPS, run.seed);
    let mut learner = build_learner(run.algo, &run.params, run.hidden.as_deref(), run.seed)?;
    let mut curve = Vec::with_capacity(run.episodes as usize);
    let mut checkpoints = Vec::new();

    for stop in stops {
        let todo = stop - learner.episodes_completed();
        let mut write_error = None;
        let trained = learner.train_episodes(&mut env, todo, &mut |e| {
            if write_error.is_none() {
                write_error = writer.serialize(e).err();
            }
            curve.push(*e);
        });
        writer.flush().map_err(|e| Error::io(&curve_path, e))?;
        if let Some(e) = write_error {
            return Err(csv_err(&curve_path)(e));
        }
        trained?;

        let file = format!("{}_ep{stop}.ckpt", run.algo);
        learner.to_checkpoint(run.seed).save(out_dir.join(&file))?;
        checkpoints.push(CheckpointMeta {
            episodes: stop,
            algo: run.algo,
            params: run.params.clone(),
            seed: run.seed,
            file,
        });
    }

    let meta_path = out_dir.join(CHECKPOINTS_FILE);
    let text = serde_json::to_string_pretty(&checkpoints).expect("metadata serializes");
    fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))?;
    Ok(TrainOutput { curve, checkpoints })
}

/// Reads a curve log written by [`train_full`].
pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    reader.deserialize().map(|r| r.map_err(csv_err(path))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub targets: u64,
    pub successes: u64,
    pub success_rate: f64,
}

/// Runs the deterministic policy against `n_targets` random goals in `env`.
/// An episode succeeds if it terminates before the step limit.
pub fn evaluate_in_env(policy: &dyn Policy, env: &mut ArmEnv, n_targets: u64) -> Result<EvalStats> {
    if n_targets == 0 {
        return Err(Error::usage("n_targets must be at least 1"));
    }
    let mut successes = 0;
    for _ in 0..n_targets {
        let mut obs = env.reset(None);
        loop {
            let result = env.step(&policy.deterministic_action(&obs)?)?;
            if result.done() {
                successes += result.terminated as u64;
                break;
            }
            obs = result.observation;
        }
    }
    Ok(EvalStats {
        targets: n_targets,
        successes,
        success_rate: successes as f64 / n_targets as f64,
    })
}

/// [`evaluate_in_env`] on the default arm. `seed` fixes the target sequence,
/// which is independent of the goals any training run with that seed saw.
pub fn evaluate_policy(policy: &dyn Policy, n_targets: u64, max_steps: usize, seed: u64) -> Result<EvalStats> {
    let env_seed: u64 = rng::stream(seed, Stream::Evaluation).random();
    let model = crate::kinematics::ArmModel::panda();
    let config = crate::env::EnvConfig::for_model(&model, max_steps);
    let mut env = ArmEnv::new(model, config, env_seed)?;
    evaluate_in_env(policy, &mut env, n_targets)
}

/// Success rate of a saved model.
pub fn evaluate_success(ck: &Checkpoint, n_targets: u64, max_steps: usize, seed: u64) -> Result<f64> {
    let learner = load_learner(ck)?;
    Ok(evaluate_policy(learner.as_ref(), n_targets, max_steps, seed)?.success_rate)
}

/// One line of an evaluation results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model: String,
    pub algo: String,
    pub episodes: u64,
    pub checkpoint: String,
    pub seed: u64,
    pub targets: u64,
    pub max_steps: usize,
    pub successes: u64,
    pub success_rate: f64,
}

pub fn evaluate_checkpoint(
    path: &Path,
    model: &str,
    n_targets: u64,
    max_steps: usize,
    seed: u64,
) -> Result<EvalRecord> {
    let ck = Checkpoint::load(path)?;
    let learner = load_learner(&ck)?;
    let stats = evaluate_policy(learner.as_ref(), n_targets, max_steps, seed)?;
    Ok(EvalRecord {
        model: model.to_string(),
        algo: ck.algo.clone(),
        episodes: ck.episodes,
        checkpoint: path.display().to_string(),
        seed,
        targets: stats.targets,
        max_steps,
        successes: stats.successes,
        success_rate: stats.success_rate,
    })
}

pub fn read_eval_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 1), e.to_string()))
        })
        .collect()
}

/// Trailing moving average; the first `window - 1` points average what exists.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// First 1-based episode whose smoothed reward closes `fraction` of the gap
/// between the initial and the maximum smoothed reward, i.e. reaches
/// `M − (1 − fraction)·|M − s₁|`. `None` for an empty curve.
pub fn convergence_episodes(rewards: &[f64], fraction: f64, window: usize) -> Result<Option<u64>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::usage(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    if window == 0 {
        return Err(Error::usage("window must be at least 1"));
    }
    let s = smooth(rewards, window);
    let Some(&initial) = s.first() else { return Ok(None) };
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = max - (1.0 - fraction) * (max - initial).abs();
    Ok(s.iter().position(|&v| v >= threshold).map(|i| i as u64 + 1))
}

/// Relative reduction in episodes to converge: `1 − tuned / baseline`.
pub fn speedup(tuned: u64, baseline: u64) -> f64 {
    1.0 - tuned as f64 / baseline as f64
}

#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub journal: Option<PathBuf>,
    /// `(run label, curve.csv)` pairs.
    pub curves: Vec<(String, PathBuf)>,
    /// Files of [`EvalRecord`] lines.
    pub evaluations: Vec<PathBuf>,
    pub window: usize,
}

pub const PCP_FILE: &str = "pcp.csv";
pub const IMPORTANCE_FILE: &str = "importance.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Writes `pcp.csv`, `importance.csv`, `curves.csv` and `summary.csv` into
/// `out_dir`. Missing or empty inputs give header-only files; the returned
/// strings are warnings about them.
pub fn report_emit(inputs: &ReportInputs, out_dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut warnings = Vec::new();

    let (records, space) = match &inputs.journal {
        Some(path) => {
            let records = study::read_journal(path)?;
            let space = match study::read_space(path) {
                Ok(s) => Some(s.space),
                Err(_) => None,
            };
            (records, space)
        }
        None => (Vec::new(), None),
    };
    let names: Vec<String> = match &space {
        Some(s) => s.names().map(str::to_string).collect(),
        None => records
            .first()
            .map(|r| r.trial.params.keys().cloned().collect())
            .unwrap_or_default(),
    };
    if records.is_empty() {
        warnings.push("journal is empty or missing; pcp.csv and importance.csv have headers only".into());
    }

    let path = out_dir.join(PCP_FILE);
    let mut w = csv_writer(&path)?;
    let mut header = names.clone();
    header.push("value".into());
    w.write_record(&header).map_err(csv_err(&path))?;
    for r in &records {
        let Some(v) = r.trial.complete_value() else { continue };
        let mut row: Vec<String> = names
            .iter()
            .map(|n| r.trial.params.get(n).map(|p| p.to_string()).unwrap_or_default())
            .collect();
        row.push(v.to_string());
        w.write_record(&row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out_dir.join(IMPORTANCE_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["param", "score"]).map_err(csv_err(&path))?;
    if let (Some(space), false) = (&space, records.is_empty()) {
        let trials: Vec<_> = records.iter().map(|r| r.trial.clone()).collect();
        match importance(&trials, space) {
            Ok(mut scores) => {
                scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                for (name, score) in scores {
                    w.write_record([name, score.to_string()]).map_err(csv_err(&path))?;
                }
            }
            Err(e) => warnings.push(format!("importance skipped: {e}")),
        }
    } else if !records.is_empty() {
        warnings.push("importance skipped: journal has no space sidecar".into());
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out_dir.join(CURVES_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["run", "episode", "reward", "smoothed"])
        .map_err(csv_err(&path))?;
    for (label, curve_path) in &inputs.curves {
        let curve = read_curve(curve_path)?;
        let rewards: Vec<f64> = curve.iter().map(|c| c.reward).collect();
        let smoothed = smooth(
            &rewards,
            if inputs.window == 0 {
                DEFAULT_WINDOW
            } else {
                inputs.window
            },
        );
        for (c, s) in curve.iter().zip(smoothed) {
            w.write_record([
                label.clone(),
                c.episode.to_string(),
                c.reward.to_string(),
                s.to_string(),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    if inputs.curves.is_empty() {
        warnings.push("no curve logs given; curves.csv has a header only".into());
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out_dir.join(SUMMARY_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["model", "episodes", "success_rate"])
        .map_err(csv_err(&path))?;
    let mut evals = Vec::new();
    for p in &inputs.evaluations {
        evals.extend(read_eval_records(p)?);
    }
    let mut order: Vec<String> = Vec::new();
    for e in &evals {
        if !order.contains(&e.model) {
            order.push(e.model.clone());
        }
    }
    let mut grid: BTreeMap<(usize, u64), f64> = BTreeMap::new();
    for e in &evals {
        let m = order.iter().position(|o| *o == e.model).expect("model listed");
        grid.insert((m, e.episodes), e.success_rate);
    }
    for ((m, episodes), rate) in grid {
        w.write_record([order[m].clone(), episodes.to_string(), rate.to_string()])
            .map_err(csv_err(&path))?;
    }
    if evals.is_empty() {
        warnings.push("no evaluation records given; summary.csv has a header only".into());
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    Ok(warnings)
}

/// Synthetic maximization problems for checking the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchFunction {
    /// `−(x² + y²)` on `[−5, 5]²`.
    Sphere,
    /// Negated Branin function on `[−5, 10] × [0, 15]`; maximum ≈ −0.397887.
    Bowl,
}

impl BenchFunction {
    pub fn space(self) -> SearchSpace {
        let params = match self {
            BenchFunction::Sphere => vec![
                ParamDomain::uniform("x", -5.0, 5.0),
                ParamDomain::uniform("y", -5.0, 5.0),
            ],
            BenchFunction::Bowl => vec![
                ParamDomain::uniform("x", -5.0, 10.0),
                ParamDomain::uniform("y", 0.0, 15.0),
            ],
        };
        SearchSpace::new(params).expect("benchmark spaces are valid")
    }

    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            BenchFunction::Sphere => -(x * x + y * y),
            BenchFunction::Bowl => {
                use std::f64::consts::PI;
                let b = 5.1 / (4.0 * PI * PI);
                let c = 5.0 / PI;
                let t = 1.0 / (8.0 * PI);
                -((y - b * x * x + c * x - 6.0).powi(2) + 10.0 * (1.0 - t) * x.cos() + 10.0)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BenchFunction::Sphere => "sphere",
            BenchFunction::Bowl => "bowl",
        }
    }
}

impl std::str::FromStr for BenchFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(BenchFunction::Sphere),
            "bowl" | "branin" => Ok(BenchFunction::Bowl),
            other => Err(Error::usage(format!(
                "unknown benchmark function `{other}` (expected sphere or bowl)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub seed: u64,
    pub tpe_best: f64,
    pub random_best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub function: BenchFunction,
    pub rows: Vec<BenchRow>,
    pub tpe_median: f64,
    pub random_median: f64,
    /// Seeds where TPE's best strictly beats random's.
    pub tpe_wins: usize,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Best value of a TPE study and a random study for each seed in
/// `base_seed .. base_seed + n_seeds`; the two share every seed.
pub fn bench_tpe(
    function: BenchFunction,
    n_trials: u64,
    n_startup: usize,
    n_seeds: u64,
    base_seed: u64,
) -> Result<BenchTable> {
    if n_seeds < 2 {
        return Err(Error::usage("bench-tpe needs at least 2 seeds"));
    }
    let objective = FnObjective {
        name: function.name().to_string(),
        f: move |p: &ParamMap, _seed: u64| -> Result<Evaluation> {
            let x = p["x"].as_f64().expect("x is numeric");
            let y = p["y"].as_f64().expect("y is numeric");
            Ok(Evaluation {
                value: function.eval(x, y),
                metrics: BTreeMap::new(),
            })
        },
    };
    let best = |sampler: SamplerKind, seed: u64| -> Result<f64> {
        let mut config = StudyConfig::new(function.space(), n_trials, n_startup, seed);
        config.sampler = sampler;
        let records = run_study(&config, &objective)?;
        Ok(best_trial(&records)?.trial.value.expect("best trial is complete"))
    };
    let mut rows = Vec::new();
    for seed in base_seed..base_seed + n_seeds {
        rows.push(BenchRow {
            seed,
            tpe_best: best(SamplerKind::Tpe, seed)?,
            random_best: best(SamplerKind::Random, seed)?,
        });
    }
    let tpe: Vec<f64> = rows.iter().map(|r| r.tpe_best).collect();
    let random: Vec<f64> = rows.iter().map(|r| r.random_best).collect();
    Ok(BenchTable {
        function,
        tpe_median: median(&tpe),
        random_median: median(&random),
        tpe_wins: rows.iter().filter(|r| r.tpe_best > r.random_best).count(),
        rows,
    })
}

/// `seed,tpe_best,random_best` per seed plus a final `median` row.
pub fn bench_csv(table: &BenchTable) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut rows = vec![["seed".to_string(), "tpe_best".into(), "random_best".into()]];
    for r in &table.rows {
        rows.push([r.seed.to_string(), r.tpe_best.to_string(), r.random_best.to_string()]);
    }
    rows.push([
        "median".into(),
        table.tpe_median.to_string(),
        table.random_median.to_string(),
    ]);
    for row in rows {
        w.write_record(row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv is utf-8")
}

/// Params of the best complete trial in a journal.
pub fn best_params_from_journal(journal: &Path) -> Result<ParamMap> {
    let records: Vec<TrialRecord> = study::read_journal(journal)?;
    Ok(best_trial(&records)?.trial.params.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, EnvConfig, GoalBox, Observation, ACTION_DIM};
    use crate::kinematics::{tool_position, ArmModel};

    struct Still;

    impl Policy for Still {
        fn deterministic_action(&self, _: &Observation) -> Result<Action> {
            Ok([0.0; ACTION_DIM])
        }
    }

    #[test]
    fn goal_at_effector_always_succeeds() {
        let model = ArmModel::panda();
        let mut config = EnvConfig::for_model(&model, 5);
        config.goal_box = GoalBox::centered(tool_position(&model, &model.home()), 0.0);
        let mut env = ArmEnv::new(model, config, 3).unwrap();
        let stats = evaluate_in_env(&Still, &mut env, 50).unwrap();
        assert_eq!(stats.success_rate, 1.0);
    }

    #[test]
    fn still_policy_matches_goal_geometry() {
        let model = ArmModel::panda();
        let home = tool_position(&model, &model.home());
        let config = EnvConfig::for_model(&model, 5);
        let mut env = ArmEnv::new(model, config.clone(), 8).unwrap();
        let n = 20_000;
        let stats = evaluate_in_env(&Still, &mut env, n).unwrap();

        let mut goals = rng::stream(8, Stream::Environment);
        let inside = (0..n)
            .filter(|_| crate::env::sample_goal(&mut goals, &config).distance(&home) < config.success_threshold)
            .count() as u64;
        assert_eq!(stats.successes, inside);

        let ball = 4.0 / 3.0 * std::f64::consts::PI * 0.05f64.powi(3) / 0.3f64.powi(3);
        assert!(
            (stats.success_rate - ball).abs() < 0.004,
            "{} vs {ball}",
            stats.success_rate
        );
    }

    #[test]
    fn smoothing() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        assert_eq!(smooth(&[2.0, 4.0], 1), vec![2.0, 4.0]);
    }

    #[test]
    fn convergence_cases() {
        let linear: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        // 0.95 lies between the 95th (94/99) and 96th (95/99) values.
        assert_eq!(convergence_episodes(&linear, 0.95, 1).unwrap(), Some(96));
        assert_eq!(convergence_episodes(&[-2.0; 10], 0.95, 3).unwrap(), Some(1));
        assert_eq!(convergence_episodes(&[], 0.95, 3).unwrap(), None);
        assert!(convergence_episodes(&linear, 1.0, 1).is_err());
        assert!(convergence_episodes(&linear, 0.5, 0).is_err());
        assert!((speedup(12, 50) - 0.76).abs() < 1e-15);
    }

    #[test]
    fn negative_curve_converges_where_gap_closes() {
        let curve: Vec<f64> = (0..200)
            .map(|i| -10.0 + 8.0 * (1.0 - (-(i as f64) / 20.0).exp()))
            .collect();
        let e = convergence_episodes(&curve, 0.95, 1).unwrap().unwrap();
        let target = -10.0 + 8.0 * (1.0 - (-199.0f64 / 20.0).exp()) * 0.95;
        assert!(curve[e as usize - 1] >= target && curve[e as usize - 2] < target);
    }

    #[test]
    fn bowl_optimum() {
        let v = BenchFunction::Bowl.eval(std::f64::consts::PI, 2.275);
        assert!((v + 0.397887).abs() < 1e-6, "{v}");
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
