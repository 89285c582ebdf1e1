use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod compare;
mod config;
mod correlate;
mod evaluate;
mod report;

use config::{Format, RunConfig};

/// Reference-free factual-consistency scoring for Bangla summaries.
#[derive(Debug, Parser)]
#[command(name = "summcheck", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct BackendArgs {
    /// TOML file layered over the shipped defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// OpenAI-compatible endpoint for the language model.
    #[arg(long, conflicts_with = "scripted")]
    backend_url: Option<String>,
    /// Scripted fixture used for both the model and the embedder.
    #[arg(long)]
    scripted: Option<PathBuf>,
}

impl BackendArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut c = RunConfig::load(self.config.as_deref())?;
        if let Some(p) = &self.scripted {
            c.use_scripted(p);
        }
        if let Some(url) = &self.backend_url {
            c.use_backend_url(url);
        }
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score each pair of a JSONL file.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        /// Results file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Directory for one trace file per pair.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        /// Admission threshold for round-trip similarity.
        #[arg(long)]
        tau: Option<f64>,
        /// Pairs evaluated at once.
        #[arg(long)]
        concurrency: Option<usize>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Correlate a score column with human judgements.
    Correlate {
        /// Results JSONL from `evaluate`.
        #[arg(long)]
        input: PathBuf,
        /// Separate JSONL of `{id, human_score}`; inline scores are used otherwise.
        #[arg(long)]
        human: Option<PathBuf>,
        #[arg(long, default_value = "f1")]
        metric_field: String,
        /// Human scores are divided by this before comparison.
        #[arg(long, default_value_t = 1.0)]
        human_scale: f64,
        /// Skip ids present on only one side instead of failing.
        #[arg(long)]
        allow_unmatched: bool,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
    /// Compare lexical and embedding metrics against human scores.
    MetricCompare {
        /// JSONL of `{reference, candidate, human_score}`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        human_scale: f64,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Render a trace as a diagnostic report.
    Report {
        #[arg(long)]
        trace: PathBuf,
        /// Defaults to the configured report format.
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn emit(text: &str, output: Option<&PathBuf>) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Returns whether any record failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Evaluate { input, output, trace_dir, tau, concurrency, backend } => {
            let mut c = backend.load()?;
            if let Some(t) = tau {
                c.pipeline.tau = t;
            }
            if let Some(n) = concurrency {
                c.concurrency = n;
            }
            c.validate()?;
            let summary = evaluate::run(&c, &input, output.as_deref(), trace_dir.as_ref())?;
            Ok(summary.errors > 0)
        }
        Command::Correlate { input, human, metric_field, human_scale, allow_unmatched, format } => {
            let out = correlate::run(&correlate::CorrelateArgs {
                results: &input,
                human: human.as_deref(),
                metric_field: &metric_field,
                human_scale,
                allow_unmatched,
            })?;
            print!("{}", correlate::render(&out, format)?);
            Ok(false)
        }
        Command::MetricCompare { input, human_scale, format, backend } => {
            let c = backend.load()?;
            let embedder = c.embedder()?;
            let rows = compare::run(&input, human_scale, embedder.as_ref())?;
            print!("{}", compare::render(&rows, format)?);
            Ok(false)
        }
        Command::Report { trace, format, config, output } => {
            let c = RunConfig::load(config.as_deref())?;
            let text = report::run(&trace, format.unwrap_or(c.report.format))?;
            emit(&text, output.as_ref())?;
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
