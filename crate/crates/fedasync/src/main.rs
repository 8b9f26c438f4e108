use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use fedasync::commands;
use fedasync::config::{self, RunSpec};
use fedasync::net;

#[derive(Parser)]
#[command(name = "fedasync", version, about = "Asynchronous federated optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file of key=value lines.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, extra: &[(&str, Option<String>)]) -> Result<RunSpec> {
        let mut overrides = self.set.clone();
        overrides.extend(extra.iter().filter_map(|(k, v)| v.as_ref().map(|v| format!("{k}={v}"))));
        Ok(config::load(self.config.as_deref(), &overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run repetitions of one algorithm and write metrics files.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// fedasync-sampled, fedasync-latency, fedasync-net, fedavg or sgd.
        #[arg(short, long)]
        algorithm: Option<String>,
        /// Output directory; must not exist yet.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Compare metrics or summary files of the same problem.
    Compare {
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
        /// Target loss as a fraction of each run's initial loss.
        #[arg(long, default_value_t = 0.1)]
        threshold: f64,
        /// Write every row of every run to this CSV.
        #[arg(long)]
        merged: Option<PathBuf>,
    },
    /// Run the FedAsync server for networked workers.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long, default_value = "127.0.0.1:7878")]
        bind: String,
        /// Output directory for metrics and the final model.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run one networked worker.
    Worker {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1:7878")]
        connect: String,
        /// Device index; selects the data shard.
        #[arg(long)]
        id: usize,
    },
    /// Write the synthetic train/test splits and device shards.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, algorithm, out } => {
            let out = out.map(|p| p.display().to_string());
            let spec = config.load(&[("algorithm", algorithm), ("out", out)])?;
            let report = commands::cmd_run(&spec)?;
            print!("{}", report.render());
            if report.failed() {
                eprintln!("error: at least one repetition failed; see the failed= markers");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Compare { files, threshold, merged } => {
            let cmp = commands::cmd_compare(&files, threshold, merged.as_deref())?;
            print!("{}", cmp.render());
        }
        Command::Serve { config, bind, out } => {
            let spec = config.load(&[])?;
            let listener = TcpListener::bind(&bind)?;
            println!("listening on {}", listener.local_addr()?);
            std::io::stdout().flush()?;
            let result = commands::cmd_serve(&spec, listener, &out)?;
            let last = result.final_record().expect("initial record");
            println!(
                "committed {} epochs, {} rejected, final loss {}",
                last.epoch, result.rejected, last.loss
            );
        }
        Command::Worker { config, connect, id } => {
            let spec = config.load(&[])?;
            let report = net::worker_loop(&connect, id, &spec.experiment, &commands::net_options(&spec))?;
            println!("worker {id}: {} tasks, {} rejected", report.tasks, report.rejected);
        }
        Command::GenData { config, out } => {
            let spec = config.load(&[])?;
            for p in commands::cmd_gen_data(&spec, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
