//! `passgauge` command-line pipeline.
//!
//! Exit status: 0 on success, 1 on runtime or data errors, 2 on usage errors.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use passgauge::analytics::{emit_report, DatasetReport, ReportFormat};
use passgauge::corpus::{clean_reader, read_tsv, write_tsv, Cleaner, RecordSchema};
use passgauge::features::{featurize, read_csv, split, write_csv, LabeledDataset, SplitSpec};
use passgauge::io::{sha256_hex, write_atomic};
use passgauge::learn::grid::{write_score_table, GridSpec};
use passgauge::pipeline::{evaluate_model, train, tune, TrainOptions};
use passgauge::scoring::{score, ScoreError};
use passgauge::synth::{generate, CorpusPreset};
use passgauge::{Hyperparams, ModelFile, ModelKind, DEFAULT_SEED};

#[derive(Parser)]
#[command(name = "passgauge", version, about = "Password corpus analytics and strength classification")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a leak-dump file and write the deduplicated corpus as TSV.
    Clean(CleanArgs),
    /// Top-k, length and composition statistics of a cleaned corpus.
    Stats(StatsArgs),
    /// Generate a seeded synthetic cleaned corpus from a preset.
    Synth(SynthArgs),
    /// Turn a cleaned corpus into a labeled feature CSV.
    Featurize(FeaturizeArgs),
    /// Split a feature CSV into train/val/test CSVs.
    Split(SplitArgs),
    /// Fit one model and write a model file.
    Train(TrainArgs),
    /// Grid search on a validation split and write the score table.
    Grid(GridArgs),
    /// Score a model file on a labeled feature CSV.
    Evaluate(EvaluateArgs),
    /// Score one password.
    Score(ScoreArgs),
    /// Run the HTTP scoring service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct CleanArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated field roles: serial, email, username, password.
    #[arg(long, default_value = "password")]
    schema: String,
    #[arg(long, default_value_t = ';')]
    delimiter: char,
    /// Also write the cleaning report JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    input: PathBuf,
    #[arg(long, default_value = "json", value_parser = ["json", "csv"])]
    format: String,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Dataset name in the report (default: file stem).
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Built-in preset name or path to a preset JSON file.
    preset: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    size: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strong_rate: Option<f64>,
}

#[derive(Args)]
struct FeaturizeArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    input: PathBuf,
    /// Directory for train.csv, val.csv and test.csv.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 0.70)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    val_frac: f64,
    #[arg(long, default_value_t = 0.15)]
    test_frac: f64,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Train on the imbalanced split as-is.
    #[arg(long)]
    no_balance: bool,
    /// Seeded subsample of the balanced training rows (needed for SVM on large splits).
    #[arg(long)]
    max_train_rows: Option<usize>,
    /// Timestamp recorded in the model file; falls back to SOURCE_DATE_EPOCH, else none.
    #[arg(long)]
    timestamp: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Hyperparameter overrides, e.g. `max_depth=10,criterion=entropy`. Repeatable.
    #[arg(long = "param")]
    params: Vec<String>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    /// Grid JSON (default: the built-in grid for the model kind).
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Score table CSV.
    #[arg(long)]
    out: PathBuf,
    /// Refit the best cell on the training split and write it here.
    #[arg(long)]
    best_model: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Metrics CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    /// Password to score; read from the first line of stdin when omitted.
    password: Option<String>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Allow browser calls from this origin, e.g. http://localhost:5173.
    #[arg(long)]
    cors_origin: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Clean(a) => clean_cmd(a),
        Command::Stats(a) => stats_cmd(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Featurize(a) => featurize_cmd(a),
        Command::Split(a) => split_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Grid(a) => grid_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Score(a) => score_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_out(p, bytes),
        None => Ok(io::stdout().write_all(bytes)?),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn load_corpus(path: &Path) -> Result<Vec<passgauge::CleanPassword>> {
    read_tsv(&read_bytes(path)?[..]).with_context(|| format!("parsing {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<(LabeledDataset, Vec<u8>)> {
    let bytes = read_bytes(path)?;
    let data = read_csv(&bytes[..]).with_context(|| format!("parsing {}", path.display()))?;
    Ok((data, bytes))
}

fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::from_json(&read_bytes(path)?).with_context(|| format!("loading model {}", path.display()))
}

fn clean_cmd(a: CleanArgs) -> Result<()> {
    let schema = RecordSchema::parse(&a.schema, a.delimiter)?;
    let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let (corpus, report) = clean_reader(BufReader::new(file), &schema, Cleaner::new())?;
    ensure!(report.reconciles(), "cleaning report does not reconcile: {report:?}");
    let mut tsv = Vec::new();
    write_tsv(&mut tsv, &corpus)?;
    write_out(&a.out, &tsv)?;
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    if let Some(p) = &a.report {
        write_out(p, &json)?;
    }
    io::stdout().write_all(&json)?;
    Ok(())
}

fn stats_cmd(a: StatsArgs) -> Result<()> {
    let corpus = load_corpus(&a.input)?;
    let id = a
        .id
        .unwrap_or_else(|| a.input.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned()));
    let report = DatasetReport::build(id, &corpus, a.top_k)?;
    let format: ReportFormat = a.format.parse()?;
    emit(a.out.as_deref(), &emit_report(&report, format)?)
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let mut preset = CorpusPreset::resolve(&a.preset)?;
    if let Some(size) = a.size {
        preset.size = size;
    }
    if let Some(seed) = a.seed {
        preset.seed = seed;
    }
    if let Some(rate) = a.strong_rate {
        preset.strong_rate = rate;
    }
    eprintln!("seed: {}", preset.seed);
    let corpus = generate(&preset)?;
    let mut tsv = Vec::new();
    write_tsv(&mut tsv, &corpus)?;
    write_out(&a.out, &tsv)?;
    eprintln!("{}: {} occurrences, {} unique passwords", preset.name, preset.size, corpus.len());
    Ok(())
}

fn featurize_cmd(a: FeaturizeArgs) -> Result<()> {
    let data = featurize(&load_corpus(&a.input)?)?;
    let mut csv = Vec::new();
    write_csv(&mut csv, &data)?;
    write_out(&a.out, &csv)?;
    let (weak, strong) = data.class_counts();
    eprintln!("{} rows: {weak} weak, {strong} strong", data.len());
    Ok(())
}

fn split_cmd(a: SplitArgs) -> Result<()> {
    let (data, _) = load_dataset(&a.input)?;
    let spec = SplitSpec { train_frac: a.train_frac, val_frac: a.val_frac, test_frac: a.test_frac, seed: a.seed };
    eprintln!("seed: {}", a.seed);
    let parts = split(&data, &spec)?;
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for (name, part) in [("train", &parts.0), ("val", &parts.1), ("test", &parts.2)] {
        let mut csv = Vec::new();
        write_csv(&mut csv, part)?;
        write_out(&a.out_dir.join(format!("{name}.csv")), &csv)?;
        let (weak, strong) = part.class_counts();
        eprintln!("{name}: {} rows ({weak} weak, {strong} strong)", part.len());
    }
    Ok(())
}

/// Explicit flag first, then SOURCE_DATE_EPOCH, else no timestamp so
/// repeated runs produce identical files.
fn resolve_timestamp(flag: Option<String>) -> Result<Option<String>> {
    if flag.is_some() {
        return Ok(flag);
    }
    let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") else {
        return Ok(None);
    };
    let secs: i64 = epoch.trim().parse().with_context(|| format!("SOURCE_DATE_EPOCH {epoch:?} is not an integer"))?;
    let t = time::OffsetDateTime::from_unix_timestamp(secs)?;
    Ok(Some(t.format(&time::format_description::well_known::Rfc3339)?))
}

fn train_options(fit: &FitArgs) -> TrainOptions {
    TrainOptions { seed: fit.seed, balance: !fit.no_balance, max_rows: fit.max_train_rows }
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let (data, bytes) = load_dataset(&a.train)?;
    let mut hp = Hyperparams::defaults(a.model);
    for list in &a.params {
        hp.apply_list(list)?;
    }
    eprintln!("seed: {}", a.fit.seed);
    let timestamp = resolve_timestamp(a.fit.timestamp.clone())?;
    let model = train(&hp, &data, &train_options(&a.fit), sha256_hex(&bytes), timestamp)?;
    write_out(&a.out, &model.to_json())?;
    eprintln!("{} trained on {} rows", a.model, model.training_metadata.train_rows);
    Ok(())
}

fn grid_cmd(a: GridArgs) -> Result<()> {
    let grid = match &a.grid {
        Some(p) => GridSpec::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => GridSpec::default_for(a.model),
    };
    let (train_set, bytes) = load_dataset(&a.train)?;
    let (val, _) = load_dataset(&a.val)?;
    eprintln!("seed: {}", a.fit.seed);
    let opts = train_options(&a.fit);
    let result = tune(a.model, &grid, &train_set, &val, &opts)?;
    let mut csv = Vec::new();
    write_score_table(&mut csv, &result.table)?;
    write_out(&a.out, &csv)?;
    let best = &result.table[result.best_cell];
    eprintln!("{} cells; best cell {} ({}) val F1 {:.4}", result.table.len(), best.cell_id, best.params, best.val_f1);
    if let Some(path) = &a.best_model {
        let timestamp = resolve_timestamp(a.fit.timestamp.clone())?;
        let model = train(&result.best, &train_set, &opts, sha256_hex(&bytes), timestamp)?;
        write_out(path, &model.to_json())?;
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (data, _) = load_dataset(&a.data)?;
    let (cm, m) = evaluate_model(&model, &data)?;
    let mut out = Vec::new();
    writeln!(out, "model_kind,rows,accuracy,recall,precision,f1,tp,fp,fn,tn")?;
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{}",
        model.model_kind,
        data.len(),
        m.accuracy,
        m.recall,
        m.precision,
        m.f1,
        cm.tp,
        cm.fp,
        cm.fn_,
        cm.tn
    )?;
    emit(a.out.as_deref(), &out)
}

fn score_cmd(a: ScoreArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let password = match a.password {
        Some(p) => p,
        None => {
            let mut line = String::new();
            io::stdin().lock().read_line(&mut line)?;
            line.trim_end_matches(['\n', '\r']).to_owned()
        }
    };
    match score(&password, &model) {
        Ok(r) => {
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(())
        }
        Err(ScoreError::Invalid(v)) => bail!("{} ({})", v.error, v.rule),
        Err(e) => Err(e.into()),
    }
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    let model = load_model(&a.model)?;
    let app = passgauge_server::router(model, a.cors_origin.as_deref())?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(a.addr)
            .await
            .with_context(|| format!("binding {}", a.addr))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        passgauge_server::serve(listener, app, passgauge_server::shutdown_signal()).await?;
        Ok(())
    })
}
