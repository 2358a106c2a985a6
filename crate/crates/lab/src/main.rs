use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rhel_lab::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "rhel-lab", about = "Echo-learning experiments on Hamiltonian sequence models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare two backward algorithms on one batch.
    Gradcheck(Common),
    /// Train with Adam and write a log, summary and checkpoint.
    Train(Common),
    /// Compare echo estimates against the adjoint on the oscillator model.
    Toy(Common),
    /// Write the configured dataset as CSV files.
    MakeData(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["32", "64"])]
    precision: Option<String>,
    /// Reduce batch gradients in sample order.
    #[arg(long)]
    deterministic: bool,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.precision {
            cfg.precision = p.parse()?;
        }
        cfg.deterministic |= self.deterministic;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gradcheck(c) => {
            let cfg = c.load()?;
            let r = rhel_lab::cmd_gradcheck(&cfg)?;
            println!("mean cosine {:.6}, min cosine {:.6}", r.mean_cosine, r.min_cosine());
        }
        Command::Train(c) => {
            let cfg = c.load()?;
            let (_, s) = rhel_lab::cmd_train(&cfg)?;
            println!("test loss {:.6}, test metric {:.6}", s.test_loss, s.test_metric);
        }
        Command::Toy(c) => {
            let cfg = c.load()?;
            let o = rhel_lab::cmd_toy(&cfg)?;
            println!("worst relative error {:.3e}", o.comparison.worst_error());
            for r in &o.sweep {
                println!("  eps {:.3e}: {:.3e}", r.epsilon, r.worst_error);
            }
        }
        Command::MakeData(c) => {
            let cfg = c.load()?;
            let s = rhel_lab::cmd_make_data(&cfg)?;
            println!("wrote {}/{}/{} samples", s.train.len(), s.val.len(), s.test.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
