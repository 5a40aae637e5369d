mod bench;
mod config;
mod eval;
mod exit;
mod io;
mod predict;
mod study;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use degusta_core::evaluation::Matching;
use degusta_core::lifting::GridSpec;
use degusta_core::prompt::{Method, DEFAULT_SAMPLES};
use tracing_subscriber::EnvFilter;

use config::FileConfig;
use exit::{ErrorLine, USAGE};

/// Visual preference learning for table settings: benchmarks, prompts,
/// model predictions, evaluation and the elicitation study service.
///
/// Exit codes: 0 success, 2 usage or configuration, 3 data, 4 provider.
/// Failures print one JSON line `{"error","exit","message"}` on stderr.
#[derive(Debug, Parser)]
#[command(name = "degusta", version, max_term_width = 100)]
struct Cli {
    /// TOML file with defaults (catalog, data_dir, seed, jobs, [providers.*], [serve]); flags override it
    #[arg(long, global = true, env = "DEGUSTA_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,

    /// Object catalog directory [default: ./catalog]
    #[arg(long, global = true, env = "DEGUSTA_CATALOG", value_name = "DIR")]
    catalog: Option<PathBuf>,

    /// More log output on stderr (-v info, -vv debug, -vvv trace); DEGUSTA_LOG overrides
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only log errors
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic benchmark (72 cases) as a manifest plus case directories
    Simulate(SimulateArgs),
    /// Write one case's prompt text, images and mark sidecars to disk
    Render(RenderArgs),
    /// Query a model for one case or every case in a manifest
    Predict(PredictArgs),
    /// Score one predicted arrangement against its ground truth
    Eval(EvalArgs),
    /// Score every case of a manifest and write per-case and summary CSVs
    EvalBatch(EvalBatchArgs),
    /// Table of human and model acceptance rates per RMSD threshold
    Acceptability(AcceptabilityArgs),
    /// Build context / held-out cases from study records for each context size
    Contexts(ContextsArgs),
    /// Write a mock provider script answering each case with its ground truth
    MockScript(MockScriptArgs),
    /// Run the HTTP service
    Serve(ServeArgs),
    /// Dump every study record as JSON lines
    Export(ExportArgs),
    /// Load JSON-lines study records into a data directory (idempotent)
    Ingest(IngestArgs),
    /// Catalog utilities
    #[command(subcommand)]
    Catalog(CatalogCommand),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Seed for preference parameters and noise [default: config seed, else 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Context arrangements per case
    #[arg(long, default_value_t = 4)]
    context_len: usize,
    /// Output directory (must be empty or absent)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Prompting method
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Grid as COLSxROWS, required by LOGMA and MOGMA
    #[arg(long, value_parser = parse_grid, value_name = "CxR")]
    grid: Option<GridSpec>,
    /// Case directory containing case.json
    #[arg(long, value_name = "DIR")]
    case: PathBuf,
    /// Output directory [default: <case>/prompt_<method>]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Responses to request per prompt
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["case", "manifest"])))]
struct PredictArgs {
    /// Provider: mock, openai, anthropic, gemini, or a name from the config file
    #[arg(long)]
    provider: String,
    /// Prompting method
    #[arg(long, value_parser = parse_method, default_value = "LOUMA")]
    method: Method,
    /// Responses sampled and aggregated per case
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Grid as COLSxROWS, required by LOGMA and MOGMA
    #[arg(long, value_parser = parse_grid, value_name = "CxR")]
    grid: Option<GridSpec>,
    /// One case directory
    #[arg(long, value_name = "DIR")]
    case: Option<PathBuf>,
    /// Benchmark manifest (file or directory); predicts every case
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
    /// Cases in flight at once [default: config jobs, else 4]
    #[arg(long)]
    jobs: Option<usize>,
    /// Send requests through a running service instead of calling the provider directly
    #[arg(long, value_name = "URL")]
    server: Option<String>,
    /// Model name sent to the provider
    #[arg(long)]
    model: Option<String>,
    /// Provider base URL
    #[arg(long)]
    endpoint: Option<String>,
    /// Mock response script (JSON)
    #[arg(long, value_name = "FILE")]
    script: Option<PathBuf>,
    /// Environment variable holding the API key
    #[arg(long, value_name = "VAR")]
    credential_env: Option<String>,
    /// Append every request and response to this JSON-lines file
    #[arg(long, value_name = "FILE")]
    replay_log: Option<PathBuf>,
    /// Sampling temperature
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MatchingArg {
    Greedy,
    Optimal,
}

impl From<MatchingArg> for Matching {
    fn from(m: MatchingArg) -> Self {
        match m {
            MatchingArg::Greedy => Matching::Greedy,
            MatchingArg::Optimal => Matching::Optimal,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Ground-truth arrangement JSON
    #[arg(long, value_name = "FILE")]
    gt: PathBuf,
    /// Predicted arrangement JSON (a prediction file works too)
    #[arg(long, value_name = "FILE")]
    pred: PathBuf,
    /// Object matching strategy
    #[arg(long, value_enum, default_value = "greedy")]
    matching: MatchingArg,
}

#[derive(Debug, Args)]
struct EvalBatchArgs {
    /// Benchmark manifest (file or directory)
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Methods to score, repeatable [default: every method with prediction files]
    #[arg(long, value_parser = parse_method)]
    method: Vec<Method>,
    /// Object matching strategy
    #[arg(long, value_enum, default_value = "greedy")]
    matching: MatchingArg,
    /// Where the CSV and JSON reports go [default: next to the manifest]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Score cases without a prediction as empty predictions instead of failing
    #[arg(long)]
    allow_missing: bool,
    /// Worker threads [default: config jobs, else all cores]
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct AcceptabilityArgs {
    /// Rating records as JSON lines, or a study data directory
    #[arg(long, value_name = "PATH")]
    ratings: PathBuf,
    /// Model evaluation reports (eval or eval-batch JSON output), repeatable
    #[arg(long, value_name = "FILE")]
    predictions: Vec<PathBuf>,
    /// RMSD thresholds
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.10")]
    thresholds: Vec<f64>,
    /// Also write the table as CSV
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Write correction RMSD vs rating change points as CSV
    #[arg(long, value_name = "FILE")]
    scatter: Option<PathBuf>,
    /// Write the rank correlation summary as JSON
    #[arg(long, value_name = "FILE")]
    correlation: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ContextsArgs {
    /// Study data directory or a JSON-lines export
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    /// Context sizes
    #[arg(long, value_delimiter = ',', default_value = "0,2,4")]
    k: Vec<usize>,
    /// Output directory; one manifest per size under k<N>/
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Keep sessions that did not finish every trial
    #[arg(long)]
    include_incomplete: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PerturbArg {
    /// Exact ground truth
    None,
    /// Every position moved by (--dx, --dy)
    Shift,
    /// Last-placed object swapped for a same-class object of another color
    SwapColor,
}

#[derive(Debug, Args)]
struct MockScriptArgs {
    /// Benchmark manifest (file or directory)
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// How the scripted answers depart from the ground truth
    #[arg(long, value_enum, default_value = "none")]
    perturb: PerturbArg,
    /// Horizontal shift for --perturb shift
    #[arg(long, default_value_t = 0.0625, allow_negative_numbers = true)]
    dx: f64,
    /// Vertical shift for --perturb shift
    #[arg(long, default_value_t = 0.0625, allow_negative_numbers = true)]
    dy: f64,
    /// Script file to write
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Interface to listen on [default: 127.0.0.1]
    #[arg(long)]
    host: Option<String>,
    /// Port [default: 8080]
    #[arg(long)]
    port: Option<u16>,
    /// Study data directory [default: config data_dir, else ./data]
    #[arg(long, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Makes table orders and jitter draws reproducible
    #[arg(long)]
    seed: Option<u64>,
    /// Built UI served at /
    #[arg(long, value_name = "DIR")]
    ui_dir: Option<PathBuf>,
    /// Allowed browser origin, repeatable [default: any]
    #[arg(long)]
    cors_origin: Vec<String>,
    /// How long /predict blocks before answering with a job to poll
    #[arg(long)]
    predict_wait_ms: Option<u64>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Study data directory [default: config data_dir, else ./data]
    #[arg(long, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Output file [default: stdout]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Study data directory [default: config data_dir, else ./data]
    #[arg(long, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// JSON-lines study records
    #[arg(long, value_name = "FILE")]
    records: PathBuf,
}

#[derive(Debug, Subcommand)]
enum CatalogCommand {
    /// Write the built-in placeholder catalog (125 objects, 6 tables)
    Init {
        /// Output directory
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Load a catalog and summarize it
    Check,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    s.parse::<GridSpec>().map_err(|e| e.to_string())
}

/// Settings shared by every subcommand after merging the config file.
pub struct Context {
    pub file: FileConfig,
    pub catalog_dir: PathBuf,
}

impl Context {
    pub fn catalog(&self) -> anyhow::Result<degusta_core::Catalog> {
        use anyhow::Context as _;
        degusta_core::load_catalog(&self.catalog_dir)
            .with_context(|| format!("loading catalog {}", self.catalog_dir.display()))
    }

    pub fn data_dir(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.file.data_dir.clone()).unwrap_or_else(|| "data".into())
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "error",
        (_, 0) => "warn",
        (_, 1) => "info",
        (_, 2) => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_env("DEGUSTA_LOG").unwrap_or_else(|_| EnvFilter::new(level));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let catalog_dir = cli
        .catalog
        .clone()
        .or_else(|| file.catalog.clone())
        .unwrap_or_else(|| "catalog".into());
    let ctx = Context { file, catalog_dir };
    match cli.command {
        Command::Simulate(a) => bench::simulate(&ctx, a),
        Command::Render(a) => predict::render(&ctx, a),
        Command::Predict(a) => predict::predict(&ctx, a),
        Command::Eval(a) => eval::eval(&ctx, a),
        Command::EvalBatch(a) => eval::eval_batch(&ctx, a),
        Command::Acceptability(a) => eval::acceptability(a),
        Command::Contexts(a) => bench::contexts(&ctx, a),
        Command::MockScript(a) => bench::mock_script(&ctx, a),
        Command::Serve(a) => study::serve(&ctx, a),
        Command::Export(a) => study::export(&ctx, a),
        Command::Ingest(a) => study::ingest(&ctx, a),
        Command::Catalog(CatalogCommand::Init { out }) => bench::catalog_init(&out),
        Command::Catalog(CatalogCommand::Check) => bench::catalog_check(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", ErrorLine::new("usage", USAGE, first).to_json());
            return ExitCode::from(USAGE);
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = exit::classify(&e);
            eprintln!("{}", line.to_json());
            ExitCode::from(line.exit)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_flag_is_documented() {
        fn walk(cmd: &clap::Command, path: &str) {
            for arg in cmd.get_arguments() {
                let id = arg.get_id().as_str();
                if matches!(id, "help" | "version") {
                    continue;
                }
                assert!(arg.get_help().is_some(), "{path} --{id} has no help text");
            }
            for sub in cmd.get_subcommands() {
                assert!(sub.get_about().is_some(), "{path} {} has no description", sub.get_name());
                walk(sub, &format!("{path} {}", sub.get_name()));
            }
        }
        walk(&Cli::command(), "degusta");
    }

    #[test]
    fn list_flags_split_on_commas() {
        let cli = Cli::try_parse_from(["degusta", "contexts", "--dataset", "d", "--k", "0,4", "--out", "o"]).unwrap();
        let Command::Contexts(a) = cli.command else { unreachable!() };
        assert_eq!(a.k, vec![0, 4]);
        let cli = Cli::try_parse_from(["degusta", "acceptability", "--ratings", "r"]).unwrap();
        let Command::Acceptability(a) = cli.command else { unreachable!() };
        assert_eq!(a.thresholds, vec![0.01, 0.05, 0.10]);
    }

    #[test]
    fn predict_needs_exactly_one_input() {
        assert!(Cli::try_parse_from(["degusta", "predict", "--provider", "mock"]).is_err());
        assert!(Cli::try_parse_from(["degusta", "predict", "--provider", "mock", "--case", "a", "--manifest", "b"]).is_err());
        let cli = Cli::try_parse_from(["degusta", "predict", "--provider", "mock", "--case", "a", "--grid", "8x6", "--method", "mogma"]).unwrap();
        let Command::Predict(a) = cli.command else { unreachable!() };
        assert_eq!(a.grid, Some(GridSpec { cols: 8, rows: 6 }));
        assert_eq!(a.method, Method::Mogma);
    }
}
