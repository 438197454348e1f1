use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use labelamp::pool::DEFAULT_MIN_DIM;
use labelamp_cli::commands::{self, AuditArgs, CascadeArgs, IngestArgs, ServeArgs, SimulateArgs};

#[derive(Parser)]
#[command(name = "labelamp", version, about = "Labeling cascade operator tool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a line-delimited manifest into the journal.
    Ingest {
        manifest: PathBuf,
        #[arg(long)]
        category: String,
        /// object or scene, used when the category is new.
        #[arg(long, default_value = "object")]
        kind: String,
        /// Definition shown to workers, used when the category is new.
        #[arg(long)]
        definition: Option<String>,
        #[arg(long, default_value_t = DEFAULT_MIN_DIM)]
        min_dim: u32,
        #[arg(long)]
        journal: PathBuf,
    },
    /// Serve the worker and admin HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long)]
        journal: PathBuf,
        /// Gold file for a category, as CATEGORY=PATH. Repeatable.
        #[arg(long, value_parser = parse_gold)]
        gold: Vec<(String, PathBuf)>,
        /// TOML service settings (timeouts, consensus).
        #[arg(long)]
        service_config: Option<PathBuf>,
        /// Advance this category's cascade as iterations finish labeling.
        #[arg(long, requires = "cascade_config")]
        drive: Option<String>,
        #[arg(long)]
        cascade_config: Option<PathBuf>,
        /// Seed for tokens and HIT assembly; random when omitted.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run or step the cascade.
    Cascade {
        #[command(subcommand)]
        action: CascadeAction,
    },
    /// Run a synthetic end-to-end simulation.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "sim-out")]
        out: PathBuf,
    },
    /// Audit the precision of the positive set against expert labels.
    Audit {
        #[arg(long)]
        category: String,
        #[arg(long)]
        sample_n: usize,
        #[arg(long)]
        expert_file: PathBuf,
        #[arg(long)]
        journal: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print run status for a category.
    Stats {
        #[arg(long)]
        category: String,
        #[arg(long)]
        journal: PathBuf,
    },
    /// Write final labels as line-delimited JSON.
    Export {
        #[arg(long)]
        category: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        journal: PathBuf,
    },
}

#[derive(Subcommand)]
enum CascadeAction {
    /// Iterate to completion, labeling from --labels.
    Run(CascadeOpts),
    /// Open the next iteration, or finish the open one.
    Step(CascadeOpts),
}

#[derive(Args)]
struct CascadeOpts {
    #[arg(long)]
    category: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    journal: PathBuf,
    /// Expert labels, one {"item_id", "label"} object per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// With step: finish even if some targets were never labeled.
    #[arg(long)]
    force: bool,
}

fn parse_gold(s: &str) -> Result<(String, PathBuf), String> {
    let (cat, path) = s.split_once('=').ok_or("expected CATEGORY=PATH")?;
    if cat.is_empty() || path.is_empty() {
        return Err("expected CATEGORY=PATH".into());
    }
    Ok((cat.to_owned(), PathBuf::from(path)))
}

impl CascadeOpts {
    fn args(&self) -> CascadeArgs<'_> {
        CascadeArgs {
            category: &self.category,
            config: &self.config,
            journal: &self.journal,
            labels: self.labels.as_deref(),
            force: self.force,
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<String> {
    match cli.command {
        Command::Ingest {
            manifest,
            category,
            kind,
            definition,
            min_dim,
            journal,
        } => commands::ingest(IngestArgs {
            manifest: &manifest,
            category: &category,
            kind: commands::parse_kind(&kind)?,
            definition: definition.as_deref(),
            min_dim,
            journal: &journal,
        }),
        Command::Serve {
            addr,
            journal,
            gold,
            service_config,
            drive,
            cascade_config,
            seed,
        } => {
            let args = ServeArgs {
                addr,
                journal: &journal,
                gold: &gold,
                service_config: service_config.as_deref(),
                drive: drive.as_deref().zip(cascade_config.as_deref()),
                seed,
            };
            tokio::runtime::Runtime::new()?.block_on(commands::serve(args))?;
            Ok(String::new())
        }
        Command::Cascade { action } => match action {
            CascadeAction::Run(opts) => commands::cascade_run(opts.args()),
            CascadeAction::Step(opts) => commands::cascade_step(opts.args()),
        },
        Command::Simulate { config, seed, out } => commands::simulate(SimulateArgs {
            config: config.as_deref(),
            seed,
            out: &out,
        }),
        Command::Audit {
            category,
            sample_n,
            expert_file,
            journal,
            seed,
        } => commands::audit(AuditArgs {
            category: &category,
            sample_n,
            expert_file: &expert_file,
            journal: &journal,
            seed,
        }),
        Command::Stats { category, journal } => commands::stats(&category, &journal),
        Command::Export {
            category,
            out,
            journal,
        } => commands::export(&category, &journal, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(text) => {
            if !text.is_empty() {
                println!("{}", text.trim_end());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
