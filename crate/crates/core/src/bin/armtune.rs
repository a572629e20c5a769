use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use armtune::harness::{self, BenchFunction, ReportInputs, TrainRun};
use armtune::hyper::{Algo, ParamMap, Preset};
use armtune::study::{self, RlObjective, SamplerKind, StudyConfig};
use armtune::{Error, Result};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Tune, train and evaluate PPO and SAC agents on a 7-DOF reach task.
///
/// Exit codes: 0 success, 2 usage error, 3 numeric failure, 4 I/O error.
#[derive(Parser)]
#[command(name = "armtune", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) a hyperparameter study and print the best trial.
    Optimize(OptimizeArgs),
    /// Train one configuration, writing curve.csv and checkpoints.
    Train(TrainArgs),
    /// Success rate of saved checkpoints on random targets.
    Evaluate(EvaluateArgs),
    /// Emit pcp.csv, importance.csv, curves.csv and summary.csv.
    Report(ReportArgs),
    /// Compare TPE with random search on a synthetic function.
    BenchTpe(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Ppo,
    Sac,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Algo {
        match a {
            AlgoArg::Ppo => Algo::Ppo,
            AlgoArg::Sac => Algo::Sac,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Default,
    BestPaper,
    BestFromJournal,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Tpe,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum FunctionArg {
    Sphere,
    Bowl,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long, value_enum)]
    algo: AlgoArg,
    /// Total trials, warm-up included.
    #[arg(long, default_value_t = 20)]
    trials: u64,
    /// Uniformly sampled warm-up trials.
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    /// Training episodes per trial.
    #[arg(long, default_value_t = 2000)]
    budget_episodes: u64,
    /// Final training episodes averaged into the objective.
    #[arg(long, default_value_t = 100)]
    tail_episodes: u64,
    /// Targets for the post-training success rate stored with each trial (0 skips it).
    #[arg(long, default_value_t = 100)]
    eval_targets: u64,
    /// Base seed; trial `id` uses seed + id.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON-lines journal; an existing one is resumed.
    #[arg(long)]
    journal: PathBuf,
    /// Trials evaluated in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_enum, default_value = "tpe")]
    sampler: SamplerArg,
    /// Hidden layer widths, e.g. 64,64.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Record timestamps and durations (journals then differ between runs).
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    algo: AlgoArg,
    #[arg(long, value_enum, default_value = "default")]
    preset: PresetArg,
    /// JSON object of hyperparameters overriding the preset.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Journal read by `--preset best-from-journal`.
    #[arg(long)]
    journal: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    episodes: u64,
    /// Extra checkpoint episodes, e.g. 500,1000; the last episode is always saved.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint files.
    #[arg(required = true)]
    checkpoint: Vec<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    targets: u64,
    #[arg(long, default_value_t = 5)]
    max_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model label in the results; defaults to the algorithm.
    #[arg(long)]
    model: Option<String>,
    /// Results file (one JSON line per checkpoint); printed to stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    journal: Option<PathBuf>,
    /// Training curve as LABEL=PATH to a curve.csv; repeatable.
    #[arg(long = "curve")]
    curves: Vec<String>,
    /// Evaluation results file; repeatable.
    #[arg(long = "evals")]
    evaluations: Vec<PathBuf>,
    /// Smoothing window in episodes.
    #[arg(long, default_value_t = harness::DEFAULT_WINDOW)]
    window: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "sphere")]
    function: FunctionArg,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    /// Number of paired seeds.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV file; printed to stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("armtune: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Optimize(a) => optimize(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::BenchTpe(a) => bench(a),
    }
}

fn optimize(a: OptimizeArgs) -> Result<()> {
    let algo = Algo::from(a.algo);
    let mut config = StudyConfig::new(algo.search_space(), a.trials, a.warmup, a.seed);
    config.journal = Some(a.journal);
    config.jobs = a.jobs;
    config.wall_clock = a.wall_clock;
    config.sampler = match a.sampler {
        SamplerArg::Tpe => SamplerKind::Tpe,
        SamplerArg::Random => SamplerKind::Random,
    };
    let mut objective = RlObjective::new(algo, a.budget_episodes);
    objective.tail_episodes = a.tail_episodes;
    objective.eval_targets = a.eval_targets;
    objective.hidden = a.hidden;
    let records = study::run_study(&config, &objective)?;
    let best = study::best_trial(&records)?;
    eprintln!(
        "{} trials recorded; best is trial {} with value {}",
        records.len(),
        best.trial.id,
        best.trial.value.unwrap_or(f64::NAN)
    );
    println!("{}", serde_json::to_string(best).expect("records serialize"));
    Ok(())
}

fn read_params(path: &Path) -> Result<ParamMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

fn train(a: TrainArgs) -> Result<()> {
    let algo = Algo::from(a.algo);
    let mut params = match a.preset {
        PresetArg::Default => algo.preset(Preset::Default),
        PresetArg::BestPaper => algo.preset(Preset::BestPaper),
        PresetArg::BestFromJournal => {
            let journal = a
                .journal
                .as_deref()
                .ok_or_else(|| Error::usage("--preset best-from-journal needs --journal"))?;
            harness::best_params_from_journal(journal)?
        }
    };
    if let Some(path) = &a.params {
        params.extend(read_params(path)?);
    }
    let run = TrainRun {
        algo,
        params,
        episodes: a.episodes,
        milestones: a.checkpoints,
        seed: a.seed,
        hidden: a.hidden,
    };
    let out = harness::train_full(&run, &a.out)?;
    let n = out.curve.len();
    let d = (n / 10).max(1);
    let mean = |s: &[harness::CurvePoint]| s.iter().map(|c| c.reward).sum::<f64>() / s.len() as f64;
    eprintln!(
        "{n} episodes; first-decile reward {:.4}, last-decile reward {:.4}",
        mean(&out.curve[..d]),
        mean(&out.curve[n - d..])
    );
    for c in &out.checkpoints {
        println!("{}", a.out.join(&c.file).display());
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut lines = String::new();
    for path in &a.checkpoint {
        let ck = armtune::neural::Checkpoint::load(path)?;
        let label = a.model.clone().unwrap_or_else(|| ck.algo.clone());
        let record = harness::evaluate_checkpoint(path, &label, a.targets, a.max_steps, a.seed)?;
        eprintln!(
            "{}: {} / {} targets reached",
            path.display(),
            record.successes,
            record.targets
        );
        lines.push_str(&serde_json::to_string(&record).expect("records serialize"));
        lines.push('\n');
    }
    match &a.out {
        Some(path) => fs::write(path, lines).map_err(|e| Error::io(path, e)),
        None => std::io::stdout()
            .write_all(lines.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn report(a: ReportArgs) -> Result<()> {
    let curves = a
        .curves
        .iter()
        .map(|c| match c.split_once('=') {
            Some((label, path)) if !label.is_empty() => Ok((label.to_string(), PathBuf::from(path))),
            _ => Err(Error::usage(format!("--curve expects LABEL=PATH, got `{c}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs = ReportInputs {
        journal: a.journal,
        curves,
        evaluations: a.evaluations,
        window: a.window,
    };
    for w in harness::report_emit(&inputs, &a.out)? {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let function = match a.function {
        FunctionArg::Sphere => BenchFunction::Sphere,
        FunctionArg::Bowl => BenchFunction::Bowl,
    };
    let table = harness::bench_tpe(function, a.trials, a.warmup, a.seeds, a.seed)?;
    eprintln!(
        "{}: TPE median {:.6}, random median {:.6}, TPE wins {}/{}",
        function.name(),
        table.tpe_median,
        table.random_median,
        table.tpe_wins,
        table.rows.len()
    );
    let text = harness::bench_csv(&table);
    match &a.out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}
