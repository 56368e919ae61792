use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use trendvote_cli::commands::{
    cmd_eval, cmd_ingest, cmd_predict, cmd_sweep, cmd_synth, SweepAxis,
};
use trendvote_cli::config::RunConfig;
use trendvote_cli::CliError;

/// News-driven stock trend prediction: per-item denoising plus threshold
/// majority voting, with standard and voting baselines.
#[derive(Parser, Debug)]
#[command(name = "trendvote", version, about)]
struct Cli {
    /// Config file (TOML). Any value can also be overridden with
    /// --<section>.<key> VALUE or --set <section>.<key>=VALUE.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config value: section.key=value (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Method: standard | voting | dtv (defaults to method.kind).
    #[arg(long, global = true)]
    method: Option<String>,
    /// Split: train | valid | test.
    #[arg(long, global = true, default_value = "test")]
    split: String,
    /// Vote threshold λ in [0, 1].
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Exemplars per class.
    #[arg(long, global = true)]
    shots: Option<usize>,
    /// News budget per day.
    #[arg(long = "max-news", global = true)]
    max_news: Option<usize>,
    /// Input variant: title | article-first-N | article-middle-N |
    /// article-last-N | article-summary-N.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Backend: remote | lexicon | oracle | replay.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Response cache path.
    #[arg(long, global = true)]
    cache: Option<String>,
    /// Sampling/selection seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate data and print per-split day counts and label distributions.
    Ingest,
    /// Run one method over one split and write the prediction file.
    Predict,
    /// Sweep an experiment axis and write an x,acc,p,r,f1 series file.
    Sweep {
        /// Axis: lambda | shots | news_count | variant.
        #[arg(long)]
        axis: String,
    },
    /// Evaluate prediction files: metrics and paired t-tests.
    Eval { files: Vec<PathBuf> },
    /// Generate a synthetic corpus with planted truth.
    Synth,
}

/// Pull `--section.key value` / `--section.key=value` pairs out of argv so
/// clap never sees them; they become config overrides.
fn split_dotted(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let dotted = arg
            .strip_prefix("--")
            .filter(|body| body.splitn(2, '=').next().unwrap_or("").contains('.'));
        match dotted {
            Some(body) => {
                if let Some((key, value)) = body.split_once('=') {
                    overrides.push((key.to_string(), value.to_string()));
                } else if i + 1 < args.len() {
                    overrides.push((body.to_string(), args[i + 1].clone()));
                    i += 1;
                } else {
                    overrides.push((body.to_string(), String::new()));
                }
            }
            None => rest.push(arg.clone()),
        }
        i += 1;
    }
    (rest, overrides)
}

fn shorthand_overrides(cli: &Cli) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut push = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            out.push((key.to_string(), v));
        }
    };
    push("method.kind", cli.method.clone());
    push("method.lambda", cli.lambda.map(|v| v.to_string()));
    push("method.shots_per_class", cli.shots.map(|v| v.to_string()));
    push("method.max_news", cli.max_news.map(|v| v.to_string()));
    push("method.input_variant", cli.variant.clone());
    push("method.seed", cli.seed.map(|v| v.to_string()));
    push("backend.kind", cli.backend.clone());
    push("backend.cache", cli.cache.clone());
    push("report.out_dir", cli.out.clone());
    out
}

fn run() -> Result<String, CliError> {
    let (args, mut overrides) = split_dotted(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => return Err(CliError::Usage(e.to_string())),
        Err(e) => {
            // --help / --version
            print!("{e}");
            return Ok(String::new());
        }
    };
    overrides.extend(shorthand_overrides(&cli));
    let cfg = RunConfig::load(cli.config.as_deref().map(Path::new), &overrides)?;
    let method = cli.method.clone().unwrap_or_else(|| cfg.method.kind.clone());
    match &cli.command {
        Command::Ingest => cmd_ingest(&cfg).map(|s| s.render()),
        Command::Predict => cmd_predict(&cfg, &method, &cli.split).map(|s| s.render()),
        Command::Sweep { axis } => {
            let axis = SweepAxis::parse(axis)?;
            cmd_sweep(&cfg, axis, &method, &cli.split).map(|s| s.render())
        }
        Command::Eval { files } => cmd_eval(&cfg, files).map(|s| s.render()),
        Command::Synth => cmd_synth(&cfg).map(|s| s.render()),
    }
}

fn main() {
    match run() {
        Ok(summary) => {
            print!("{summary}");
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
