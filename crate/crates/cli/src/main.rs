use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use attrnet::checkpoint;
use attrnet::data::synthetic::{self, SyntheticAttribute, SyntheticConfig};
use attrnet::data::{ingest, split_by_source, write_delimited, write_lines, AttributeRecord, DomainCatalog, InputFormat};
use attrnet::eval::{render_report, run_loo, run_one, EvalReport, Grid, LooConfig, Method};
use attrnet::layers::PoolingOp;
use attrnet::training::gradcheck::check_all;
use attrnet::training::{metrics_csv, train, TrainConfig};
use attrnet::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "attrnet", version, about = "Character-level attribute annotation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network on a labelled dataset and write a checkpoint.
    Train(TrainArgs),
    /// Leave-one-source-out evaluation of one or more methods.
    EvalLoo(EvalArgs),
    /// Label values with a trained checkpoint.
    Predict(PredictArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic multi-source dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Labelled records (`source,attribute,value` CSV or JSON lines).
    #[arg(long)]
    data: PathBuf,
    /// Input format; inferred from the file extension when omitted.
    #[arg(long)]
    format: Option<InputFormat>,
}

impl DataArgs {
    fn load(&self) -> attrnet::Result<Vec<AttributeRecord>> {
        let fmt = match self.format {
            Some(f) => f,
            None => InputFormat::from_path(&self.data),
        };
        ingest(&self.data, fmt)
    }
}

#[derive(Args)]
struct HyperArgs {
    /// Combiner for hybrid methods: max, sum, avg, mul, outer or concat
    #[arg(long)]
    pooling: Option<PoolingOp>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-6)]
    lr: f64,
    /// Drop rate of the branch hidden layers.
    #[arg(long, default_value_t = 0.25)]
    dropout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl HyperArgs {
    fn config(&self) -> TrainConfig {
        let mut cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            drop_rate: self.dropout,
            seed: self.seed,
            ..TrainConfig::default()
        };
        if let Some(op) = self.pooling {
            cfg.pooling = op;
        }
        cfg
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// One of hybrid-{max,sum,avg,mul,outer,concat}, cnn, lstm.
    #[arg(long, default_value = "hybrid-max")]
    method: Method,
    #[arg(long, default_value_t = 100)]
    embedding_size: usize,
    #[arg(long, default_value_t = 3)]
    window: usize,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Leave this source out of training.
    #[arg(long)]
    test_source: Option<String>,
    /// Checkpoint path; the metrics log goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated methods.
    #[arg(long, default_value = "hybrid-max")]
    method: String,
    /// Embedding sizes searched per run.
    #[arg(long, value_delimiter = ',', default_value = "100,200,300")]
    embedding_size: Vec<usize>,
    /// Window sizes searched per run.
    #[arg(long, value_delimiter = ',', default_value = "3,5")]
    window: Vec<usize>,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Evaluate only this held-out source.
    #[arg(long)]
    test_source: Option<String>,
    /// Report prefix: writes PREFIX.txt and PREFIX.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// File with one value per line; values are read from stdin otherwise.
    #[arg(long, conflicts_with = "values")]
    input: Option<PathBuf>,
    values: Vec<String>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    sources: usize,
    /// Comma-separated attribute kinds.
    #[arg(long, value_delimiter = ',', default_value = "price,time,color,vin,make")]
    attributes: Vec<SyntheticAttribute>,
    #[arg(long, default_value_t = 200)]
    records_per_source: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    format: Option<InputFormat>,
}

/// Failure of a subcommand, mapped onto an exit code.
enum Failure {
    Lib(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Usage(_) => EXIT_USAGE,
        Error::Row { .. } | Error::File { .. } | Error::Io(_) | Error::Json(_) | Error::Checkpoint(_) | Error::Vocabulary { .. } => EXIT_DATA,
        _ => 1,
    }
}

/// `--pooling` replaces the combiner of a hybrid method.
fn with_pooling(method: Method, pooling: Option<PoolingOp>) -> Method {
    match (method, pooling) {
        (Method::Hybrid(_), Some(op)) => Method::Hybrid(op),
        _ => method,
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), Failure> {
    if !a.method.is_network() {
        return Err(Error::Usage(format!("train builds networks; evaluate {} with eval-loo", a.method)).into());
    }
    let records = a.data.load()?;
    let catalog = match &a.test_source {
        Some(s) => split_by_source(&records, s)?.0,
        None => DomainCatalog::from_records(records)?,
    };
    let method = with_pooling(a.method, a.hyper.pooling);
    let mut cfg = method.train_config(&a.hyper.config());
    cfg.embedding_size = a.embedding_size;
    cfg.window = a.window;
    let model = train(&catalog, &cfg)?;
    checkpoint::save(&model, &a.out)?;
    let log_path = a.out.with_extension("metrics.csv");
    fs::write(&log_path, metrics_csv(&model.history))?;
    println!(
        "trained {} on {} records: best epoch {}, validation accuracy {:.4}",
        method,
        catalog.len(),
        model.best_epoch,
        model.best_validation_accuracy
    );
    println!("checkpoint: {}", a.out.display());
    println!("metrics: {}", log_path.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    let methods = Method::parse_list(&a.method)?;
    let records = a.data.load()?;
    let cfg = LooConfig {
        train: a.hyper.config(),
        grid: Grid {
            embedding_sizes: a.embedding_size.clone(),
            windows: a.window.clone(),
        },
        ..LooConfig::default()
    };
    let mut reports = Vec::new();
    for m in methods {
        info!("evaluating {m}");
        let m = with_pooling(m, a.hyper.pooling);
        let report = match &a.test_source {
            Some(s) => EvalReport::from_runs(m, vec![run_one(&records, s, m, &cfg)?]),
            None => run_loo(&records, m, &cfg)?,
        };
        reports.push(report);
    }
    let rendered = render_report(&reports)?;
    print!("{}", rendered.text);
    if let Some(prefix) = a.out {
        let txt = with_suffix(&prefix, "txt");
        let jsonl = with_suffix(&prefix, "jsonl");
        fs::write(&txt, &rendered.text)?;
        fs::write(&jsonl, &rendered.jsonl)?;
        eprintln!("report: {} {}", txt.display(), jsonl.display());
    }
    Ok(())
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn cmd_predict(a: PredictArgs) -> Result<(), Failure> {
    let model = checkpoint::load(&a.model)?;
    let values: Vec<String> = if !a.values.is_empty() {
        a.values
    } else if let Some(path) = &a.input {
        fs::read_to_string(path)?.lines().map(str::to_string).collect()
    } else {
        io::stdin().lock().lines().collect::<io::Result<_>>()?
    };
    let mut out = io::stdout().lock();
    for v in &values {
        let (k, p) = model.predict(v)?;
        writeln!(out, "{}\t{p:.6}", model.labels[k])?;
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<(), Failure> {
    let reports = check_all(a.seed, a.eps, a.tol)?;
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for (name, r) in &reports {
        println!("{name}: max rel err {:.3e} {}", r.max_rel_error(), if r.passed() { "PASS" } else { "FAIL" });
        for g in &r.groups {
            println!("  {:<20} {:>5} coords  {:.3e}", g.name, g.coordinates, g.max_rel_error);
        }
        worst = worst.max(r.max_rel_error());
        if !r.passed() {
            failed.push(name.clone());
        }
    }
    println!("max rel err {worst:.3e} (tol {:.1e})", a.tol);
    if failed.is_empty() {
        println!("PASS");
        Ok(())
    } else {
        Err(Failure::Check(format!("gradient check failed for {}", failed.join(", "))))
    }
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let records = synthetic::generate(&SyntheticConfig {
        sources: a.sources,
        attributes: a.attributes,
        records_per_source: a.records_per_source,
        seed: a.seed,
    })?;
    let fmt = match a.format {
        Some(f) => f,
        None => InputFormat::from_path(&a.out),
    };
    let file = io::BufWriter::new(fs::File::create(&a.out)?);
    match fmt {
        InputFormat::Delimited => write_delimited(&records, file)?,
        InputFormat::RecordPerLine => write_lines(&records, file)?,
    }
    println!("wrote {} records to {}", records.len(), a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::EvalLoo(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CHECK)
        }
    }
}
