//! `strokescreen` command-line tool.

mod commands;
mod config;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "strokescreen", version, about = "Stroke risk stratification from resident survey data")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (ingest, cleanse, label, synth) or directory (other commands).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read a cohort CSV, normalize missing cells and write it back.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Repair blood pressure pairs and drop mostly-missing columns.
    Cleanse {
        #[arg(long)]
        input: PathBuf,
    },
    /// Label each row Low / Medium / High with the "8+2" rule.
    Label {
        #[arg(long)]
        input: PathBuf,
    },
    /// Generate a synthetic resident cohort.
    Synth {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, value_enum, default_value_t = Outcome::Risk)]
        outcome: Outcome,
        /// Calibration targets (TOML); built-in defaults otherwise.
        #[arg(long)]
        targets: Option<PathBuf>,
    },
    /// Fit a model and write a bundle plus training report.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Hold out a stratified test split and write it next to the bundle.
        #[arg(long)]
        holdout: bool,
    },
    /// Score a bundle on a labeled cohort.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Feature importance and per-row attributions.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Explain a single row (shap only).
        #[arg(long)]
        row: Option<usize>,
    },
    /// Score decay as feature values go missing at increasing rates.
    Sweep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value_t = Kind::Forest)]
        kind: Kind,
    },
    /// Recursive feature elimination by MDI.
    Rfe {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value_t = Kind::Forest)]
        kind: Kind,
        /// Stop when this many features remain.
        #[arg(long, default_value_t = 1)]
        target: usize,
        /// Precision drop from the best step still counted as the plateau.
        #[arg(long, default_value_t = 0.02)]
        plateau_tolerance: f64,
    },
    /// Serve /schema, /predict and /explain over HTTP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Risk,
    Stroke,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Tree,
    Forest,
    Logit,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mdi,
    Permutation,
    Shap,
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    use strokescreen::Error as E;
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err {
                E::Io(_) => "io",
                E::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => "io",
                E::Schema(_) | E::ColumnAbsent(_) | E::UnknownColumn(_) | E::DuplicateHeader(_) => "schema",
                E::Config(_) => "config",
                E::BundleVersion(_) => "bundle",
                _ => "input",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return "config";
        }
    }
    "input"
}

/// Context lines down to the first library error; its own sources repeat
/// in its message.
fn error_message(e: &anyhow::Error) -> String {
    let mut parts = Vec::new();
    for cause in e.chain() {
        parts.push(cause.to_string());
        if cause.downcast_ref::<strokescreen::Error>().is_some() {
            break;
        }
    }
    parts.join(": ")
}

fn report_error(kind: &str, message: String) {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            report_error("usage", first.trim_start_matches("error: ").to_string());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(error_kind(&e), error_message(&e));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let common = &cli.common;
    let cfg = config::Config::load(common.config.as_deref())?;
    use commands as c;
    match cli.command {
        Command::Ingest { input } => c::ingest(common, &cfg, &input),
        Command::Cleanse { input } => c::cleanse(common, &cfg, &input),
        Command::Label { input } => c::label(common, &cfg, &input),
        Command::Synth { n, outcome, targets } => c::synth(common, n, outcome, targets.as_deref()),
        Command::Train { input, kind, holdout } => c::train(common, &cfg, &input, kind, holdout),
        Command::Evaluate { model, input } => c::evaluate(common, &cfg, &model, &input),
        Command::Explain { model, input, method, row } => c::explain(common, &cfg, &model, &input, method, row),
        Command::Sweep { input, test, kind } => c::sweep(common, &cfg, &input, &test, kind),
        Command::Rfe {
            input,
            test,
            kind,
            target,
            plateau_tolerance,
        } => c::rfe(common, &cfg, &input, &test, kind, target, plateau_tolerance),
        Command::Serve { model, host, port } => serve::serve(&model, &host, port),
    }
}
