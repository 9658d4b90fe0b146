use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dragrank_core::script::{run_script, InteractionScript};
use dragrank_core::{ingest, SessionConfig};
use dragrank_service::ServiceConfig;

#[derive(Debug, Parser)]
#[command(name = "dragrank", version, about = "Drag-to-rank weight elicitation")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Seed for the trainer and the projection.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Soft-margin penalty C.
    #[arg(long = "c", global = true)]
    c: Option<f64>,
    /// t-SNE perplexity.
    #[arg(long, global = true)]
    perplexity: Option<f64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut SessionConfig) {
        if let Some(seed) = self.seed {
            cfg.trainer.seed = seed;
            cfg.projection.seed = seed;
        }
        if let Some(c) = self.c {
            cfg.trainer.c = c;
        }
        if let Some(p) = self.perplexity {
            cfg.projection.perplexity = p;
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Execute an interaction script and write its reports.
    Run {
        #[arg(long)]
        script: PathBuf,
    },
    /// Validate a dataset file.
    Ingest {
        #[arg(long)]
        check: PathBuf,
    },
}

enum Failure {
    Validation(String),
    Internal(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Serve { config } => {
            let mut cfg = match config {
                Some(path) => ServiceConfig::load(&path).map_err(|e| Failure::Validation(e.to_string()))?,
                None => ServiceConfig::default(),
            };
            let mut session = cfg.session_config();
            cli.overrides.apply(&mut session);
            cfg.trainer = session.trainer;
            cfg.projection = session.projection;
            check_config(&session)?;
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Internal(e.to_string()))?;
            rt.block_on(dragrank_service::serve(&cfg))
                .map_err(|e| Failure::Internal(e.to_string()))
        }
        Command::Run { script } => {
            let script = InteractionScript::load(&script).map_err(|e| {
                if e.is_validation() {
                    Failure::Validation(e.to_string())
                } else {
                    Failure::Internal(e.to_string())
                }
            })?;
            let mut cfg = SessionConfig::default();
            cli.overrides.apply(&mut cfg);
            check_config(&cfg)?;
            let report = run_script(&script, cfg).map_err(|e| match &e {
                dragrank_core::script::ScriptError::Io { path, .. } if *path == script.dataset_path => {
                    Failure::Validation(e.to_string())
                }
                _ if e.is_validation() => Failure::Validation(e.to_string()),
                _ => Failure::Internal(e.to_string()),
            })?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
        Command::Ingest { check } => {
            let file = File::open(&check).map_err(|e| Failure::Validation(format!("{}: {e}", check.display())))?;
            let ds = ingest(file, None).map_err(|e| Failure::Validation(e.to_string()))?;
            println!(
                "ok: {} entities, {} indicators, {} types",
                ds.n(),
                ds.m(),
                ds.type_labels().len()
            );
            Ok(())
        }
    }
}

fn check_config(cfg: &SessionConfig) -> Result<(), Failure> {
    cfg.trainer.validate().map_err(|e| Failure::Validation(e.to_string()))?;
    if !(cfg.projection.perplexity > 0.0 && cfg.projection.perplexity.is_finite()) {
        return Err(Failure::Validation(format!(
            "perplexity must be positive, got {}",
            cfg.projection.perplexity
        )));
    }
    Ok(())
}
