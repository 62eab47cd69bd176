use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use skillscout_cli::commands::{self, EvaluateArgs, TrainRlArgs};
use skillscout_cli::config::Config;
use skillscout_cli::api;
use skillscout_core::service::PolicyKind;
use skillscout_core::usersim::UserProfile;
use tracing_subscriber::EnvFilter;

/// Conversational skill discovery: catalog, simulators, DQN training and
/// a session service.
#[derive(Parser)]
#[command(name = "skillscout", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Random seed; each subcommand falls back to its config default.
    #[arg(long)]
    seed: Option<u64>,
    /// TOML config file.
    #[arg(long, env = "SKILLSCOUT_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PolicyArg {
    Rule,
    Rl,
    BaselinePopularity,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Rule => PolicyKind::Rule,
            PolicyArg::Rl => PolicyKind::Rl,
            PolicyArg::BaselinePopularity => PolicyKind::BaselinePopularity,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic catalog.
    GenerateCatalog {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Play the behavioral user against the rule policy and write JSONL logs.
    BootstrapLogs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the next-intent model on dialog logs.
    TrainSim {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a DQN policy against the intent-model user.
    TrainRl {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Learned user simulator; the behavioral user when absent.
        #[arg(long)]
        intent_model: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the per-evaluation table (TSV).
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Success rate and dialog length of a policy.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        intent_model: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        episodes: usize,
    },
    /// Start the HTTP session API.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
        /// JSONL dialog log, appended to.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Talk to a policy in the terminal.
    Chat {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "rule")]
        policy: PolicyArg,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        returning: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let print = |s: String| print!("{s}");
    match cli.command {
        Command::GenerateCatalog { common, out } => {
            let cfg = Config::resolve(common.config.as_deref())?;
            print(commands::generate_catalog(&cfg, common.seed, &out)?);
        }
        Command::BootstrapLogs { common, catalog, episodes, out } => {
            let cfg = Config::resolve(common.config.as_deref())?;
            let episodes = episodes.unwrap_or(cfg.bootstrap.episodes);
            print(commands::bootstrap(&cfg, common.seed.unwrap_or(0), catalog.as_deref(), episodes, &out)?);
        }
        Command::TrainSim { common, logs, out } => {
            let cfg = Config::resolve(common.config.as_deref())?;
            let seed = common.seed.unwrap_or(cfg.intent_model.seed);
            print(commands::train_sim(&cfg, seed, &logs, &out)?);
        }
        Command::TrainRl { common, catalog, intent_model, steps, out, stats } => {
            let cfg = Config::resolve(common.config.as_deref())?;
            let args = TrainRlArgs {
                seed: common.seed.unwrap_or(cfg.train.seed),
                catalog: catalog.as_deref(),
                intent_model: intent_model.as_deref(),
                steps,
                out: &out,
                stats: stats.as_deref(),
            };
            print(commands::train_rl(&cfg, args)?);
        }
        Command::Evaluate { common, policy, checkpoint, catalog, intent_model, episodes } => {
            let cfg = Config::resolve(common.config.as_deref())?;
            let args = EvaluateArgs {
                seed: common.seed.unwrap_or(0),
                policy: policy.into(),
                checkpoint: checkpoint.as_deref(),
                catalog: catalog.as_deref(),
                intent_model: intent_model.as_deref(),
                episodes,
            };
            print(commands::evaluate(&cfg, args)?);
        }
        Command::Serve { common, catalog, checkpoint, listen, log } => {
            let cfg = Config::resolve(common.config.as_deref())?;
            let manager = commands::session_manager(
                &cfg,
                common.seed.unwrap_or(0),
                catalog.as_deref(),
                checkpoint.as_deref(),
                log.as_deref(),
            )?;
            let addr = listen.unwrap_or(cfg.service.listen.clone());
            serve(Arc::new(manager), &addr)?;
        }
        Command::Chat { common, policy, catalog, checkpoint, returning } => {
            let cfg = Config::resolve(common.config.as_deref())?;
            let manager =
                commands::session_manager(&cfg, common.seed.unwrap_or(0), catalog.as_deref(), checkpoint.as_deref(), None)?;
            let stdin = std::io::stdin();
            commands::chat(&manager, policy.into(), UserProfile::new(!returning), stdin.lock(), std::io::stdout())?;
        }
    }
    Ok(())
}

fn serve(manager: Arc<skillscout_core::service::SessionManager>, addr: &str) -> anyhow::Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, policies = ?manager.available_policies(), "serving");
        axum::serve(listener, api::router(manager))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
