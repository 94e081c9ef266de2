//! Command-line entry point: build-data, train, evaluate, ablate, report.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use batchalign::config::RunConfig;
use batchalign::eval::EvalReport;
use batchalign::pipeline::{
    cmd_ablate, cmd_build_data, cmd_evaluate, cmd_train, AblationReport, PipelineError, Sweep,
};

#[derive(Parser)]
#[command(name = "batchalign", version, about = "Language-coupled preference finetuning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags mirror the run-config keys; every flag overrides its config entry.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus record file; omit to generate a synthetic corpus.
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    languages: Option<usize>,
    #[arg(long)]
    pool: Option<usize>,
    #[arg(long)]
    noise_rate: Option<f64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    include_anchor: Option<bool>,
    #[arg(long)]
    anchor: Option<String>,
    #[arg(long)]
    held_out_langs: Option<String>,
    #[arg(long)]
    eval_langs: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    equal_update_budget: Option<bool>,
    #[arg(long)]
    adam: Option<bool>,
    #[arg(long)]
    bootstrap_b: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mcnemar_alpha: Option<f64>,
    #[arg(long)]
    seed_data: Option<u64>,
    #[arg(long)]
    seed_train: Option<u64>,
    #[arg(long)]
    seed_eval: Option<u64>,
    #[arg(long)]
    out_dir: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the corpus and the train/test sample dataset.
    BuildData(Overrides),
    /// Train the policy (warmup + alignment phase).
    Train {
        #[command(flatten)]
        overrides: Overrides,
        /// Continue from the existing checkpoint instead of reinitializing.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint on the test split and write the report.
    Evaluate(Overrides),
    /// Run an ablation sweep: anchor, k, or noise.
    Ablate {
        #[command(flatten)]
        overrides: Overrides,
        /// Sweep kind: anchor | k | noise.
        #[arg(long)]
        sweep: String,
        /// Noise rates for --sweep noise, comma separated.
        #[arg(long, default_value = "0.0,0.1,0.3")]
        noise_rates: String,
    },
    /// Pretty-print stored report files.
    Report {
        /// report.json or ablation.json files.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
    },
}

fn build_config(overrides: &Overrides) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &overrides.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let mut set = |key: &str, value: Option<String>| -> Result<(), PipelineError> {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
        Ok(())
    };
    set("corpus_path", overrides.corpus.clone())?;
    set("synthetic_topics", overrides.topics.map(|v| v.to_string()))?;
    set(
        "synthetic_languages",
        overrides.languages.map(|v| v.to_string()),
    )?;
    set("synthetic_pool", overrides.pool.map(|v| v.to_string()))?;
    set("noise_rate", overrides.noise_rate.map(|v| v.to_string()))?;
    set("mode", overrides.mode.clone())?;
    set("k", overrides.k.map(|v| v.to_string()))?;
    set(
        "include_anchor",
        overrides.include_anchor.map(|v| v.to_string()),
    )?;
    set("anchor", overrides.anchor.clone())?;
    set("held_out_langs", overrides.held_out_langs.clone())?;
    set("eval_langs", overrides.eval_langs.clone())?;
    set("method", overrides.method.clone())?;
    set("beta", overrides.beta.map(|v| v.to_string()))?;
    set("lambda", overrides.lambda.map(|v| v.to_string()))?;
    set("lr", overrides.lr.map(|v| v.to_string()))?;
    set("epochs", overrides.epochs.map(|v| v.to_string()))?;
    set(
        "warmup_epochs",
        overrides.warmup_epochs.map(|v| v.to_string()),
    )?;
    set(
        "equal_update_budget",
        overrides.equal_update_budget.map(|v| v.to_string()),
    )?;
    set("adam", overrides.adam.map(|v| v.to_string()))?;
    set("bootstrap_b", overrides.bootstrap_b.map(|v| v.to_string()))?;
    set("alpha", overrides.alpha.map(|v| v.to_string()))?;
    set(
        "mcnemar_alpha",
        overrides.mcnemar_alpha.map(|v| v.to_string()),
    )?;
    set("seed_data", overrides.seed_data.map(|v| v.to_string()))?;
    set("seed_train", overrides.seed_train.map(|v| v.to_string()))?;
    set("seed_eval", overrides.seed_eval.map(|v| v.to_string()))?;
    set("out_dir", overrides.out_dir.clone())?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::BuildData(overrides) => {
            let cfg = build_config(&overrides)?;
            cmd_build_data(&cfg)?;
            println!("dataset written to {}", cfg.out_dir.display());
        }
        Command::Train { overrides, resume } => {
            let cfg = build_config(&overrides)?;
            cmd_train(&cfg, resume)?;
            println!("checkpoint written to {}", cfg.out_dir.display());
        }
        Command::Evaluate(overrides) => {
            let cfg = build_config(&overrides)?;
            let report = cmd_evaluate(&cfg)?;
            print!("{}", report.render_table());
        }
        Command::Ablate {
            overrides,
            sweep,
            noise_rates,
        } => {
            let cfg = build_config(&overrides)?;
            let sweep = match sweep.as_str() {
                "anchor" => Sweep::Anchor,
                "k" => Sweep::KLadder,
                "noise" => {
                    let rates: Result<Vec<f64>, _> =
                        noise_rates.split(',').map(|s| s.trim().parse()).collect();
                    Sweep::Noise(rates.map_err(|e| {
                        PipelineError::State(format!("bad --noise-rates: {e}"))
                    })?)
                }
                other => {
                    return Err(PipelineError::State(format!(
                        "unknown sweep {other:?}; expected anchor|k|noise"
                    )))
                }
            };
            let report = cmd_ablate(&cfg, &sweep)?;
            print!("{}", report.render_table());
        }
        Command::Report { input } => {
            for path in input {
                let bytes = std::fs::read(&path)?;
                if let Ok(report) = serde_json::from_slice::<EvalReport>(&bytes) {
                    println!("# {}", path.display());
                    print!("{}", report.render_table());
                } else if let Ok(report) = serde_json::from_slice::<AblationReport>(&bytes) {
                    println!("# {}", path.display());
                    print!("{}", report.render_table());
                } else {
                    return Err(PipelineError::State(format!(
                        "{} is neither an evaluation nor an ablation report",
                        path.display()
                    )));
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
