//! The `plsp` command line.
//!
//! Exit codes: 0 success, 1 runtime failure (including failed `verify`
//! checks), 2 usage error, 3 unreadable or malformed file, 4 invalid
//! parameter or configuration. Failures print one JSON object on stderr.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use plsp_core::objective::df_objective;
use plsp_core::pldata::{make_blobs, GenSpec, PlDataset, Strategy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{ConfigError, RunConfig};
use crate::format::{self, FormatError};
use crate::metrics::{self, MetricsLine, MetricsRecord};
use crate::run::{self, Mode, RunError};
use crate::verify::{self, VerifyOptions};

#[derive(Debug, Parser)]
#[command(name = "plsp", version, about = "Partial-label learning with semantic perturbation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize Gaussian blobs with USS or FPS candidate sets.
    Generate(GenerateArgs),
    /// Disambiguation-free pre-training only.
    Pretrain(TrainArgs),
    /// Pre-training followed by semi-supervised training.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Closed-form versus Monte-Carlo checks and the probit sup-error report.
    Verify(VerifyArgs),
    /// Full training for each k in a list.
    SweepK(SweepArgs),
    /// The disambiguation-free loss alone for the same epoch budget as `train`.
    DfBaseline(TrainArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Uss,
    Fps,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Training instances.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Held-out instances drawn from the same blobs (needs --test-out).
    #[arg(long, default_value_t = 0)]
    test_n: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    #[arg(long, value_enum, default_value_t = StrategyArg::Fps)]
    strategy: StrategyArg,
    /// Flip probability for FPS.
    #[arg(long, default_value_t = 0.3)]
    q: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    test_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Held-out set scored after every epoch.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set k=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Zero the wall-clock fields so identical runs give identical files.
    #[arg(long)]
    deterministic: bool,
    /// Checkpoint to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metrics file; defaults to stdout.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    #[arg(long, default_value_t = 50)]
    instances: usize,
    /// Monte-Carlo draws per branch.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 8)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra β candidates for the sup-error report.
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',', required = true)]
    ks: Vec<usize>,
    /// Directory for per-k metrics files `k<k>.jsonl`.
    #[arg(long)]
    metrics_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 3,
            CliError::Config(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Format { .. } => "format",
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
        }
    }
}

impl From<plsp_core::Error> for CliError {
    fn from(e: plsp_core::Error) -> Self {
        match e {
            plsp_core::Error::InvalidParameter { .. } | plsp_core::Error::InvalidArity { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load_dataset(path: &Path) -> Result<PlDataset, CliError> {
    format::load_dataset(path).map_err(|source| match source {
        FormatError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        source => CliError::Format {
            path: path.to_path_buf(),
            source,
        },
    })
}

fn load_checkpoint(path: &Path) -> Result<plsp_core::model::ClassifierParams, CliError> {
    format::load_checkpoint(path).map_err(|source| match source {
        FormatError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        source => CliError::Format {
            path: path.to_path_buf(),
            source,
        },
    })
}

/// `PLSP_THREADS` caps worker threads. Execution is single-threaded, so
/// the value is only validated.
pub fn thread_cap(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("PLSP_THREADS must be a positive integer, found `{v}`"))),
        },
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    thread_cap(std::env::var("PLSP_THREADS").ok().as_deref())?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            write!(stdout, "{e}").map_err(|e| CliError::Runtime(e.to_string()))?;
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string().trim_end().to_string())),
    };
    match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Pretrain(a) => train(&a, Mode::Pretrain, stdout),
        Command::Train(a) => train(&a, Mode::Train, stdout),
        Command::DfBaseline(a) => train(&a, Mode::DfBaseline, stdout),
        Command::Eval(a) => eval(&a, stdout),
        Command::Verify(a) => verify(&a, stdout),
        Command::SweepK(a) => sweep(&a, stdout),
    }
}

/// Entry point for the binary: runs, reports failures on stderr and
/// returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = run_cli(args, &mut out);
    let _ = out.flush();
    match result {
        Ok(()) => 0,
        Err(e) => {
            let line = json!({ "error": e.kind(), "code": e.exit_code(), "message": e.to_string() });
            eprintln!("{line}");
            e.exit_code()
        }
    }
}

fn generate(a: &GenerateArgs) -> Result<(), CliError> {
    if a.test_n > 0 && a.test_out.is_none() {
        return Err(CliError::Usage("--test-n needs --test-out".into()));
    }
    let strategy = match a.strategy {
        StrategyArg::Uss => Strategy::Uss,
        StrategyArg::Fps => Strategy::Fps { q: a.q },
    };
    let blobs = make_blobs(a.n + a.test_n, a.classes, a.dim, a.separation, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    let (train, test) = blobs.split_at(a.n);
    let gen = |salt: u64| GenSpec {
        strategy,
        seed: a.seed ^ salt,
    };
    let train = train.into_dataset(a.classes, &gen(0x5EED_0001))?;
    format::save_dataset(&a.out, &train).map_err(io_at(&a.out))?;
    if let Some(path) = &a.test_out {
        let test = test.into_dataset(a.classes, &gen(0x5EED_0002))?;
        format::save_dataset(path, &test).map_err(io_at(path))?;
    }
    Ok(())
}

fn run_config(a: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(io_at(path))?;
        cfg.apply_text(&text, &path.display().to_string())?;
    }
    for o in &a.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    if a.deterministic {
        cfg.train.deterministic = true;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn run_error(e: RunError, metrics: Option<&Path>) -> CliError {
    match e {
        RunError::Core(e) => e.into(),
        RunError::TestMismatch(_) => CliError::Config(e.to_string()),
        RunError::Io(source) => CliError::Io {
            path: metrics.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf),
            source,
        },
    }
}

struct Prepared {
    data: PlDataset,
    test: Option<PlDataset>,
    init: Option<plsp_core::model::ClassifierParams>,
}

fn prepare(a: &TrainArgs) -> Result<Prepared, CliError> {
    Ok(Prepared {
        data: load_dataset(&a.data)?,
        test: a.test.as_deref().map(load_dataset).transpose()?,
        init: a.init.as_deref().map(load_checkpoint).transpose()?,
    })
}

/// Runs one training job, streaming metrics to `metrics` or `stdout`.
fn train_once(
    p: &Prepared,
    cfg: &RunConfig,
    mode: Mode,
    metrics: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<run::Outcome, CliError> {
    let mut file = match metrics {
        Some(path) => Some(BufWriter::new(File::create(path).map_err(io_at(path))?)),
        None => None,
    };
    let mut sink = |line: &MetricsLine| match file.as_mut() {
        Some(f) => metrics::write_line(f, line),
        None => metrics::write_line(&mut *stdout, line),
    };
    let outcome = run::run(mode, &p.data, p.test.as_ref(), cfg, p.init.clone(), &mut sink)
        .map_err(|e| run_error(e, metrics))?;
    if let (Some(f), Some(path)) = (file.as_mut(), metrics) {
        f.flush().map_err(io_at(path))?;
    }
    Ok(outcome)
}

fn train(a: &TrainArgs, mode: Mode, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = run_config(a)?;
    let p = prepare(a)?;
    let outcome = train_once(&p, &cfg, mode, a.metrics.as_deref(), stdout)?;
    if let Some(path) = &a.out {
        format::save_checkpoint(path, &outcome.params).map_err(io_at(path))?;
    }
    Ok(())
}

fn eval(a: &EvalArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let params = load_checkpoint(&a.checkpoint)?;
    let data = load_dataset(&a.data)?;
    if params.input_dim() != data.shape().len() || params.classes() != data.classes() {
        return Err(CliError::Config("checkpoint does not fit the dataset".into()));
    }
    let (loss, _) = df_objective(&params, &data.all_features(), data.candidates())?;
    let scores = metrics::score(&params, &data)?;
    let record = MetricsRecord {
        stage: "eval".into(),
        epoch: 0,
        l_df: loss.value,
        l_l: 0.0,
        r_u: 0.0,
        l_cl: 0.0,
        total: loss.value,
        gamma: 0.0,
        lambda: 0.0,
        macro_f1: scores.map(|s| s.macro_f1),
        micro_f1: scores.map(|s| s.micro_f1),
        train_macro_f1: None,
        train_micro_f1: None,
        h_pass_rate: 0.0,
        tau: Vec::new(),
        labeled: 0,
        unlabeled: data.len(),
        clamped: loss.clamped,
        skipped: 0,
        wall_clock: 0.0,
    };
    metrics::write_line(stdout, &MetricsLine::Epoch(record)).map_err(|e| CliError::Runtime(e.to_string()))
}

fn verify(a: &VerifyArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let opts = VerifyOptions {
        lambda: a.lambda,
        instances: a.instances,
        samples: a.samples,
        classes: a.classes,
        feature_dim: a.feature_dim,
        seed: a.seed,
        betas: a.beta.clone(),
    };
    if !(opts.lambda >= 0.0 && opts.lambda.is_finite()) {
        return Err(CliError::Config("--lambda must be finite and non-negative".into()));
    }
    if opts.classes < 3 {
        return Err(plsp_core::Error::InvalidArity { classes: opts.classes }.into());
    }
    if opts.samples < 2 || opts.feature_dim == 0 {
        return Err(CliError::Config("--samples must be at least 2 and --feature-dim positive".into()));
    }
    let lines = verify::run_checks(&opts)?;
    let mut failed = 0;
    for l in &lines {
        let mut body = l.body.clone();
        body["status"] = json!(l.status);
        writeln!(stdout, "{body}").map_err(|e| CliError::Runtime(e.to_string()))?;
        failed += l.failed() as usize;
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} verify checks failed")));
    }
    Ok(())
}

fn sweep(a: &SweepArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let base = run_config(&a.train)?;
    let p = prepare(&a.train)?;
    if let Some(dir) = &a.metrics_dir {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
    }
    for &k in &a.ks {
        let mut cfg = base.clone();
        cfg.train.k = k;
        let path = a.metrics_dir.as_ref().map(|d| d.join(format!("k{k}.jsonl")));
        let outcome = train_once(&p, &cfg, Mode::Train, path.as_deref(), &mut io::sink())?;
        let s = outcome.summary;
        let line = json!({
            "k": k,
            "scored_on": s.as_ref().map(|s| s.scored_on.clone()),
            "final_macro_f1": s.as_ref().map(|s| s.final_macro_f1),
            "final_micro_f1": s.as_ref().map(|s| s.final_micro_f1),
            "best_micro_f1": s.as_ref().map(|s| s.best_micro_f1),
        });
        writeln!(stdout, "{line}").map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}
