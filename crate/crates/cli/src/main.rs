use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use seqbed::engine::RunState;
use seqbed::utilities::surface_csv;
use seqbed_cli::{api, open_state, parse_design_grid, read_config, run_campaign};

#[derive(Parser)]
#[command(name = "seqbed", version, about = "Sequential Bayesian experimental design for simulator models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign in batch mode and write the run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a run over HTTP.
    Serve {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Config used when the state directory holds no run yet.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate the configured utility over a design grid as CSV.
    Surface {
        /// `lo:hi:n`, `all` (discrete domains) or a comma-separated list.
        #[arg(long)]
        design_grid: String,
        #[arg(long, required_unless_present = "config")]
        state: Option<PathBuf>,
        /// Evaluate under the prior of a fresh run instead.
        #[arg(long, conflicts_with = "state")]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the KDE and 95% HPDI of the belief after an iteration as JSON.
    Posterior {
        #[arg(long)]
        state: PathBuf,
        /// Defaults to the latest completed iteration.
        #[arg(long)]
        iteration: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, out } => {
            let state = run_campaign(read_config(&config)?, &out)?;
            println!("{}", serde_json::to_string_pretty(&state.view())?);
        }
        Command::Serve { state, port, host, config } => {
            let run = open_state(&state, config.as_deref())?;
            let app = api::router(run, Some(state));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                log::info!("listening on {}", listener.local_addr()?);
                axum::serve(listener, app).await?;
                Ok::<_, anyhow::Error>(())
            })?;
        }
        Command::Surface { design_grid, state, config, out } => {
            let run = match (state, config) {
                (Some(dir), _) => seqbed::engine::load(&dir)?,
                (None, Some(cfg)) => RunState::new(read_config(&cfg)?)?,
                (None, None) => unreachable!("clap requires one of --state and --config"),
            };
            let designs = parse_design_grid(&design_grid, &run.config.model.design_domain())?;
            emit(&surface_csv(&run.utility_surface(&designs)?), out)?;
        }
        Command::Posterior { state, iteration, out } => {
            let run = seqbed::engine::load(&state)?;
            let k = iteration.unwrap_or(run.completed());
            let text = serde_json::to_string_pretty(&run.posterior(k)?)? + "\n";
            emit(&text, out)?;
        }
    }
    Ok(())
}
