//! Hyperparameter studies.
//!
//! The first `n_startup_trials` configurations are drawn uniformly, the rest
//! come from TPE conditioned on every finished trial. Each finished trial is
//! appended to a JSON-lines journal before the next one is suggested, so a
//! killed study can be resumed from its journal.
//!
//! Two sidecar files live next to the journal: `<journal>.space.json` records
//! the search space (a resumed study must use the same one) and
//! `<journal>.running` lists the trials in flight. Trials still listed there on
//! resume were interrupted; they are appended as failed records and do not
//! count towards `n_trials`.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::agent::build_learner;
use crate::env::{ArmEnv, TRAIN_MAX_STEPS};
use crate::error::{Error, Result};
use crate::harness::evaluate_policy;
use crate::hyper::Algo;
use crate::rng::{self, Stream};
use crate::tpe::{self, ParamMap, SearchSpace, TpeConfig, Trial, TrialState};

/// `failure` text of trials that were in flight when a study was killed.
pub const INTERRUPTED: &str = "interrupted";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Tpe,
    Random,
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub space: SearchSpace,
    pub n_trials: u64,
    pub n_startup_trials: usize,
    pub base_seed: u64,
    pub sampler: SamplerKind,
    /// `None` keeps the study in memory.
    pub journal: Option<PathBuf>,
    /// Trials evaluated concurrently. Journals are bitwise reproducible only at 1.
    pub jobs: usize,
    /// Record `started_at`, `finished_at` and durations. Off by default
    /// because timestamps make journals differ between identical runs.
    pub wall_clock: bool,
}

impl StudyConfig {
    pub fn new(space: SearchSpace, n_trials: u64, n_startup_trials: usize, base_seed: u64) -> Self {
        StudyConfig {
            space,
            n_trials,
            n_startup_trials,
            base_seed,
            sampler: SamplerKind::Tpe,
            journal: None,
            jobs: 1,
            wall_clock: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::usage("n_trials must be at least 1"));
        }
        if self.n_startup_trials as u64 > self.n_trials {
            return Err(Error::usage(format!(
                "n_startup_trials ({}) exceeds n_trials ({})",
                self.n_startup_trials, self.n_trials
            )));
        }
        if self.jobs == 0 {
            return Err(Error::usage("jobs must be at least 1"));
        }
        if self.space.is_empty() {
            return Err(Error::usage("search space is empty"));
        }
        Ok(())
    }

    fn tpe(&self) -> TpeConfig {
        TpeConfig {
            n_startup_trials: self.n_startup_trials,
            ..TpeConfig::default()
        }
    }
}

/// Result of evaluating one configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    /// Objective, higher is better.
    pub value: f64,
    pub metrics: BTreeMap<String, f64>,
}

pub trait Objective: Sync {
    /// Short description stored in the space sidecar; a resumed study must match it.
    fn describe(&self) -> String;
    fn evaluate(&self, params: &ParamMap, seed: u64) -> Result<Evaluation>;
}

/// Objective backed by a plain function.
pub struct FnObjective<F> {
    pub name: String,
    pub f: F,
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&ParamMap, u64) -> Result<Evaluation> + Sync,
{
    fn describe(&self) -> String {
        self.name.clone()
    }

    fn evaluate(&self, params: &ParamMap, seed: u64) -> Result<Evaluation> {
        (self.f)(params, seed)
    }
}

/// Train-then-score objective on the reach task.
#[derive(Debug, Clone)]
pub struct RlObjective {
    pub algo: Algo,
    pub budget_episodes: u64,
    /// The objective is the mean reward of this many final training episodes.
    pub tail_episodes: u64,
    /// Deterministic-policy targets evaluated after training (0 skips it).
    pub eval_targets: u64,
    pub hidden: Option<Vec<usize>>,
}

impl RlObjective {
    pub fn new(algo: Algo, budget_episodes: u64) -> Self {
        RlObjective {
            algo,
            budget_episodes,
            tail_episodes: 100.min(budget_episodes),
            eval_targets: 100,
            hidden: None,
        }
    }
}

impl Objective for RlObjective {
    fn describe(&self) -> String {
        format!(
            "{} budget={} tail={} eval_targets={} hidden={:?}",
            self.algo, self.budget_episodes, self.tail_episodes, self.eval_targets, self.hidden
        )
    }

    fn evaluate(&self, params: &ParamMap, seed: u64) -> Result<Evaluation> {
        evaluate_trial(self, params, seed)
    }
}

/// Trains a fresh agent for the budget and scores it.
///
/// The value is the mean episode reward over the final `tail_episodes`
/// training episodes, so it is never positive. Metrics also carry the tail
/// success fraction and, if requested, the success rate of the deterministic
/// policy on `eval_targets` fresh targets at the evaluation step limit.
pub fn evaluate_trial(objective: &RlObjective, params: &ParamMap, seed: u64) -> Result<Evaluation> {
    if objective.budget_episodes == 0 || objective.tail_episodes == 0 {
        return Err(Error::usage("budget and tail episodes must be at least 1"));
    }
    let tail = objective.tail_episodes.min(objective.budget_episodes) as usize;
    let mut env = ArmEnv::panda(TRAIN_MAX_STEPS, seed);
    let mut learner = build_learner(objective.algo, params, objective.hidden.as_deref(), seed)?;
    let mut episodes = Vec::with_capacity(objective.budget_episodes as usize);
    learner.train_episodes(&mut env, objective.budget_episodes, &mut |e| episodes.push(*e))?;

    let tail = &episodes[episodes.len() - tail..];
    let n = tail.len() as f64;
    let value = tail.iter().map(|e| e.reward).sum::<f64>() / n;
    if !value.is_finite() {
        return Err(Error::numeric("objective is not finite"));
    }
    let mut metrics = BTreeMap::new();
    metrics.insert("tail_reward".to_string(), value);
    metrics.insert(
        "tail_success_rate".to_string(),
        tail.iter().filter(|e| e.success).count() as f64 / n,
    );
    if objective.eval_targets > 0 {
        let stats = evaluate_policy(
            learner.as_ref(),
            objective.eval_targets,
            crate::env::EVAL_MAX_STEPS,
            seed,
        )?;
        metrics.insert("eval_success_rate".to_string(), stats.success_rate);
    }
    Ok(Evaluation { value, metrics })
}

/// Extra per-trial data stored in the journal.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Breakdown {
    #[serde(flatten)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_secs: Option<f64>,
}

/// One journal line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    #[serde(flatten)]
    pub trial: Trial,
    #[serde(default)]
    pub breakdown: Breakdown,
    /// Unix seconds, only with wall-clock recording on.
    #[serde(default)]
    pub started_at: Option<f64>,
    #[serde(default)]
    pub finished_at: Option<f64>,
    /// Number of finished trials the suggestion was conditioned on.
    #[serde(default)]
    pub history_size_at_suggest: usize,
}

impl TrialRecord {
    pub fn is_interrupted(&self) -> bool {
        self.trial.state == TrialState::Failed && self.breakdown.failure.as_deref() == Some(INTERRUPTED)
    }
}

/// Highest value among complete trials; ties go to the lowest id.
pub fn best_trial(records: &[TrialRecord]) -> Result<&TrialRecord> {
    records
        .iter()
        .filter_map(|r| r.trial.complete_value().map(|v| (r, v)))
        .fold(None, |best: Option<(&TrialRecord, f64)>, (r, v)| match best {
            Some((b, bv)) if bv > v || (bv == v && b.trial.id < r.trial.id) => Some((b, bv)),
            _ => Some((r, v)),
        })
        .map(|(r, _)| r)
        .ok_or_else(|| Error::usage("no complete trials"))
}

/// Path of the space sidecar for `journal`.
pub fn space_path(journal: &Path) -> PathBuf {
    sidecar(journal, "space.json")
}

/// Path of the in-flight sidecar for `journal`.
pub fn running_path(journal: &Path) -> PathBuf {
    sidecar(journal, "running")
}

fn sidecar(journal: &Path, suffix: &str) -> PathBuf {
    let mut name = journal.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    journal.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceRecord {
    pub objective: String,
    pub space: SearchSpace,
}

pub fn read_space(journal: &Path) -> Result<SpaceRecord> {
    let path = space_path(journal);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// Reads a journal; ids must run 1, 2, 3, ... without gaps.
pub fn read_journal(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrialRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 1), e.to_string()))?;
        let expected = records.len() as u64 + 1;
        if record.trial.id != expected {
            return Err(Error::parse(
                format!("{}:{}", path.display(), i + 1),
                format!("trial id {} where {expected} was expected", record.trial.id),
            ));
        }
        records.push(record);
    }
    Ok(records)
}

fn to_line(record: &TrialRecord) -> String {
    let mut line = serde_json::to_string(record).expect("trial records serialize");
    line.push('\n');
    line
}

struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    fn append(&mut self, record: &TrialRecord) -> Result<()> {
        let io = |e| Error::io(&self.path, e);
        self.file.write_all(to_line(record).as_bytes()).map_err(io)?;
        self.file.flush().map_err(io)?;
        self.file.sync_data().map_err(io)
    }

    fn write_running(&self, running: &BTreeMap<u64, TrialRecord>) -> Result<()> {
        let path = running_path(&self.path);
        if running.is_empty() {
            return match fs::remove_file(&path) {
                Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(&path, e)),
                _ => Ok(()),
            };
        }
        let text: String = running.values().map(to_line).collect();
        let tmp = sidecar(&self.path, "running.tmp");
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

/// Opens or resumes the journal; returns it with the records already there.
fn open_journal(path: &Path, config: &StudyConfig, objective: &str) -> Result<(Journal, Vec<TrialRecord>)> {
    let expected = SpaceRecord {
        objective: objective.to_string(),
        space: config.space.clone(),
    };
    let existing = match fs::metadata(path) {
        Ok(m) if m.len() > 0 => read_journal(path)?,
        _ => Vec::new(),
    };
    let space_file = space_path(path);
    if existing.is_empty() {
        let text = serde_json::to_string_pretty(&expected).expect("space serializes");
        fs::write(&space_file, text + "\n").map_err(|e| Error::io(&space_file, e))?;
    } else {
        let found = read_space(path)?;
        let diff = found.space.diff(&config.space);
        if !diff.is_empty() {
            return Err(Error::usage(format!(
                "journal search space differs: {}",
                diff.join("; ")
            )));
        }
        if found.objective != expected.objective {
            return Err(Error::usage(format!(
                "journal objective differs: `{}` vs `{}`",
                found.objective, expected.objective
            )));
        }
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut journal = Journal {
        path: path.to_path_buf(),
        file,
    };
    let mut records = existing;

    let running = running_path(path);
    if running.exists() {
        let orphans = read_journal_lines(&running)?;
        for mut orphan in orphans {
            if orphan.trial.id != records.len() as u64 + 1 {
                continue;
            }
            orphan.trial.state = TrialState::Failed;
            orphan.trial.value = None;
            orphan.breakdown.failure = Some(INTERRUPTED.to_string());
            journal.append(&orphan)?;
            records.push(orphan);
        }
        journal.write_running(&BTreeMap::new())?;
    }
    Ok((journal, records))
}

fn read_journal_lines(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records: Vec<TrialRecord> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::parse(path.display().to_string(), e.to_string())))
        .collect::<Result<_>>()?;
    records.sort_by_key(|r| r.trial.id);
    Ok(records)
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Next configuration for trial slot `slot` (1-based, interrupted trials excluded).
fn propose(config: &StudyConfig, history: &[Trial], slot: u64) -> ParamMap {
    let mut rng = rng::block(config.base_seed, Stream::Sampler, slot);
    match config.sampler {
        SamplerKind::Tpe => tpe::suggest(&config.space, history, &mut rng, &config.tpe()),
        SamplerKind::Random => config.space.sample_uniform(&mut rng),
    }
}

type Finished = (u64, Result<Evaluation>, Option<f64>, f64);

/// Runs (or resumes) a study until `n_trials` non-interrupted trials exist.
///
/// Returns every journal record in id order. Trial `id` trains with seed
/// `base_seed + id`. Errors other than I/O fail the trial and the study goes
/// on; an I/O error stops the study once running trials have finished,
/// leaving the journal valid.
pub fn run_study(config: &StudyConfig, objective: &dyn Objective) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    let (mut journal, mut records) = match &config.journal {
        Some(path) => {
            let (j, r) = open_journal(path, config, &objective.describe())?;
            (Some(j), r)
        }
        None => (None, Vec::new()),
    };

    let interrupted = records.iter().filter(|r| r.is_interrupted()).count() as u64;
    let mut launched = records.len() as u64 - interrupted;
    let mut next_id = records.len() as u64 + 1;
    let mut running: BTreeMap<u64, TrialRecord> = BTreeMap::new();
    let mut finished: BTreeMap<u64, TrialRecord> = BTreeMap::new();
    let mut io_error: Option<Error> = None;
    let mut in_flight = 0;

    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<Finished>();
        loop {
            while io_error.is_none() && in_flight < config.jobs && launched < config.n_trials {
                let history: Vec<Trial> = records
                    .iter()
                    .chain(finished.values())
                    .filter(|r| !r.is_interrupted())
                    .map(|r| r.trial.clone())
                    .collect();
                let id = next_id;
                let params = propose(config, &history, id - interrupted);
                let record = TrialRecord {
                    trial: Trial {
                        id,
                        state: TrialState::Running,
                        seed: config.base_seed.wrapping_add(id),
                        value: None,
                        params: params.clone(),
                    },
                    breakdown: Breakdown::default(),
                    started_at: config.wall_clock.then(unix_now),
                    finished_at: None,
                    history_size_at_suggest: history.len(),
                };
                let seed = record.trial.seed;
                running.insert(id, record);
                if let Some(j) = &journal {
                    if let Err(e) = j.write_running(&running) {
                        io_error = Some(e);
                    }
                }
                let tx = tx.clone();
                let wall_clock = config.wall_clock;
                scope.spawn(move || {
                    let start = Instant::now();
                    let result = objective.evaluate(&params, seed);
                    let secs = start.elapsed().as_secs_f64();
                    let _ = tx.send((
                        id,
                        result,
                        wall_clock.then_some(secs),
                        if wall_clock { unix_now() } else { 0.0 },
                    ));
                });
                next_id += 1;
                launched += 1;
                in_flight += 1;
            }
            if in_flight == 0 {
                break;
            }
            let (id, result, secs, done_at) = rx.recv().expect("workers send before exiting");
            in_flight -= 1;
            let mut record = running.get(&id).expect("finished trial was running").clone();
            record.breakdown.duration_secs = secs;
            record.finished_at = config.wall_clock.then_some(done_at);
            match result {
                Ok(eval) if eval.value.is_finite() => {
                    record.trial.state = TrialState::Complete;
                    record.trial.value = Some(eval.value);
                    record.breakdown.metrics = eval.metrics;
                }
                Ok(_) => {
                    record.trial.state = TrialState::Failed;
                    record.breakdown.failure = Some("objective is not finite".into());
                }
                Err(e @ Error::Io { .. }) if io_error.is_none() => {
                    record.trial.state = TrialState::Failed;
                    record.breakdown.failure = Some(e.to_string());
                    io_error = Some(e);
                }
                Err(e) => {
                    record.trial.state = TrialState::Failed;
                    record.breakdown.failure = Some(e.to_string());
                }
            }
            finished.insert(id, record);

            while let Some(record) = finished.remove(&(records.len() as u64 + 1)) {
                running.remove(&record.trial.id);
                if let Some(j) = &mut journal {
                    if io_error.is_none() {
                        if let Err(e) = j.append(&record).and_then(|_| j.write_running(&running)) {
                            io_error = Some(e);
                        }
                    }
                }
                records.push(record);
            }
        }
    });

    match io_error {
        Some(e) => Err(e),
        None => Ok(records),
    }
}
