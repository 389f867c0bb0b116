//! timebin - heralded multi-time-bin photon source simulator

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use timebin::commands::{self, RunOptions};

#[derive(Parser)]
#[command(
    name = "timebin",
    version,
    about = "Raman rate equations, read-train design and Franson fringes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,

    /// Output directory, created if missing
    #[arg(long)]
    out: PathBuf,

    /// Override the Monte Carlo seed
    #[arg(long)]
    seed: Option<u64>,

    /// Force fixed-step RK4 with this step (units of 1/gamma)
    #[arg(long = "fixed-step", value_name = "DT")]
    fixed_step: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the rate equations for an explicit pulse train
    Simulate(Common),
    /// Design read-pulse peaks for target bin weights
    Design(Common),
    /// Interferometer fringes for a time-bin state
    Franson(Common),
    /// One simulation per value of a swept key
    Sweep(Common),
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Simulate(c) => ("simulate", c),
        Command::Design(c) => ("design", c),
        Command::Franson(c) => ("franson", c),
        Command::Sweep(c) => ("sweep", c),
    };
    let options = RunOptions {
        seed: common.seed,
        fixed_step: common.fixed_step,
    };
    let config = commands::load_config(&common.config, &options)?;
    let out = &common.out;
    match &cli.command {
        Command::Simulate(_) => {
            let s = commands::cmd_simulate(&config, out)?;
            println!("n_S(inf) = {:.6}  n_AS(inf) = {:.6}", s.n_s_inf, s.n_as_inf);
            for b in &s.bins {
                println!("bin {}: area {:.6}  fraction {:.6}", b.index, b.area, b.fraction);
            }
        }
        Command::Design(_) => {
            let r = commands::cmd_design(&config, out)?;
            println!("exposures {:?}", r.exposures);
            println!("peaks {:?} after {} refinement iterations", r.peaks, r.iterations);
        }
        Command::Franson(_) => {
            let r = commands::cmd_franson(&config, out, &options)?;
            for f in &r.fringes {
                println!("variance {:.4}: visibility {:.6}", f.variance_rad2, f.visibility);
            }
        }
        Command::Sweep(_) => {
            let r = commands::cmd_sweep(&config, out, &options)?;
            println!("{} points over {}", r.points, r.key);
        }
    }
    eprintln!(
        "{name}: wrote {} files to {}",
        commands::listing(out).len(),
        out.display()
    );
    Ok(())
}
