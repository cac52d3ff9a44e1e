use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use policygraph_core::{
    compare_runs, run_batch, BackendKind, BatchOptions, ConfigOverrides, IndicatorVocabulary, Mode, RunConfig,
};
use policygraph_service::{load_profiles, AppState, ServiceOptions};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "policygraph",
    version,
    about = "Policy consequence graphs and indicator impact evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every episode in a corpus and write one record per row.
    Run(Box<RunArgs>),
    /// Compare finished runs: `compare out.csv pipeline=runs/a baseline=runs/b`.
    Compare {
        /// Where to write the CSV table.
        output: PathBuf,
        /// Runs as NAME=DIR.
        #[arg(required = true, value_parser = parse_named_dir)]
        runs: Vec<(String, PathBuf)>,
    },
    /// Start the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Corpus file (.xlsx, .xls, .ods or .csv).
    input: PathBuf,
    /// Directory for the records and summary.json.
    output_dir: PathBuf,
    /// Model identifier sent to the remote backend.
    #[arg(long)]
    model_name: Option<String>,
    /// Sampling temperature for graph expansion [default: 0.7].
    #[arg(long)]
    temperature: Option<f64>,
    /// Sampling temperature for indicator linking [default: 0.2].
    #[arg(long)]
    link_temperature: Option<f64>,
    /// Layers below the root; 0 keeps the root alone [default: 3].
    #[arg(long)]
    max_depth: Option<u32>,
    /// Children per node [default: 3].
    #[arg(long)]
    max_branch: Option<u32>,
    /// Supporting nodes kept per indicator [default: 5].
    #[arg(long)]
    max_links_per_node: Option<u32>,
    /// Similarity at which statements in one layer merge [default: 0.8].
    #[arg(long)]
    merge_threshold: Option<f64>,
    /// Retries per backend call [default: 3].
    #[arg(long)]
    retry_limit: Option<u32>,
    /// Chat-completion URL for the remote backend.
    #[arg(long)]
    api_endpoint: Option<String>,
    /// Environment variable that holds the API credential [default: POLICYGRAPH_API_KEY].
    #[arg(long)]
    api_key_env: Option<String>,
    /// `pipeline` or `baseline` [default: pipeline].
    #[arg(long, value_parser = clap::value_parser!(Mode))]
    mode: Option<Mode>,
    /// `stub` or `remote` [default: stub].
    #[arg(long, value_parser = clap::value_parser!(BackendKind))]
    backend: Option<BackendKind>,
    /// Stub backend seed [default: 42].
    #[arg(long)]
    seed: Option<u64>,
    /// Indicator vocabulary JSON; defaults to the built-in 19 indicators.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Directory with replacement prompt templates.
    #[arg(long)]
    prompt_dir: Option<PathBuf>,
    /// Worksheet name; defaults to the first sheet.
    #[arg(long)]
    sheet: Option<String>,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    overwrite: bool,
    /// Episodes evaluated at once.
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Backend requests per second.
    #[arg(long)]
    rate_limit: Option<f64>,
    /// Per-request timeout for the remote backend [default: 60].
    #[arg(long)]
    timeout_secs: Option<u64>,
    /// Write every backend exchange to audit.log.
    #[arg(long)]
    audit: bool,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig::default().with_overrides(&ConfigOverrides {
            model_name: self.model_name.clone(),
            temperature: self.temperature,
            link_temperature: self.link_temperature,
            max_depth: self.max_depth,
            max_branch: self.max_branch,
            max_links_per_node: self.max_links_per_node,
            api_endpoint: self.api_endpoint.clone(),
            api_key_ref: self.api_key_env.clone(),
            merge_threshold: self.merge_threshold,
            retry_limit: self.retry_limit,
            mode: self.mode,
            backend: self.backend,
            random_seed: self.seed,
        })
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory of `<name>.json` run configurations.
    #[arg(long)]
    profile_dir: Option<PathBuf>,
    /// Built UI assets served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[arg(long, default_value_t = 64)]
    queue_capacity: usize,
}

fn parse_named_dir(raw: &str) -> Result<(String, PathBuf), String> {
    match raw.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => Ok((name.to_string(), PathBuf::from(dir))),
        _ => Err(format!("expected NAME=DIR, got {raw:?}")),
    }
}

fn load_vocab(path: Option<&PathBuf>) -> Result<Arc<IndicatorVocabulary>> {
    let vocab = match path {
        Some(p) => IndicatorVocabulary::from_path(p).with_context(|| format!("loading vocabulary {}", p.display()))?,
        None => IndicatorVocabulary::default_vocabulary(),
    };
    Ok(Arc::new(vocab))
}

fn run(args: RunArgs) -> Result<()> {
    if args.concurrency == 0 {
        bail!("--concurrency must be at least 1");
    }
    let config = args.config();
    let mut opts = BatchOptions::new(&args.input, &args.output_dir);
    opts.sheet = args.sheet.clone();
    opts.overwrite = args.overwrite;
    opts.concurrency = args.concurrency;
    opts.audit = args.audit;
    opts.vocab = load_vocab(args.vocab.as_ref())?;
    opts.prompt_dir = args.prompt_dir.clone();
    opts.rate_limit = args.rate_limit;
    opts.timeout = args.timeout_secs.map(Duration::from_secs);
    let summary = run_batch(&opts, &config)?;
    print!("{}", summary.to_text());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let options = ServiceOptions {
        vocab: load_vocab(args.vocab.as_ref())?,
        profiles: load_profiles(args.profile_dir.as_deref())?,
        concurrency: args.concurrency.max(1),
        queue_capacity: args.queue_capacity,
        static_dir: args.static_dir,
    };
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().context("starting async runtime")?;
    runtime.block_on(policygraph_service::serve(addr, AppState::new(options)))?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let result = match Cli::parse().command {
        Command::Run(args) => run(*args),
        Command::Compare { output, runs } => compare_runs(&runs, &output)
            .map(|table| print!("{}", table.to_text()))
            .map_err(Into::into),
        Command::Serve(args) => serve(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
