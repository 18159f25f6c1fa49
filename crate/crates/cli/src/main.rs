//! `conley`: command-line driver.
//!
//! Exit status: 0 when everything passes, 1 on a property failure, 2 on a
//! configuration or ingestion error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use conley_core::commands::{cmd_analyze, cmd_filtration, cmd_lyapunov, cmd_verify};
use conley_core::config::{RunConfig, SystemSource};
use conley_core::lyapunov::Construction;
use conley_core::Error;

#[derive(Parser)]
#[command(name = "conley", version, about = "Morse graphs, index pairs and Lyapunov functions for flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the transition graph and the Morse graph.
    Analyze(Common),
    /// Compute a Lyapunov function on the index pair.
    Lyapunov {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "morse")]
        construction: Kind,
        /// Attractor-repeller pair index for `--construction pair`.
        #[arg(long = "pair")]
        pair: Option<usize>,
    },
    /// Extract and validate a regular index filtration.
    Filtration(Common),
    /// Run the property suite and write a report.
    Verify(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Pair,
    Morse,
    Complete,
}

#[derive(Args)]
struct Common {
    /// Built-in system name.
    #[arg(long, conflicts_with = "system_file")]
    system: Option<String>,
    /// JSON system spec file.
    #[arg(long)]
    system_file: Option<PathBuf>,
    /// Boxes per axis, comma separated; one value applies to every axis.
    #[arg(long, value_delimiter = ',')]
    depth: Vec<usize>,
    #[arg(long, default_value_t = 1.5)]
    map_time: f64,
    /// Image padding (default: one box diagonal).
    #[arg(long)]
    padding: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    #[arg(long, default_value_t = 20.0)]
    horizon: f64,
    #[arg(long, default_value_t = 12.0)]
    tmax: f64,
    /// Oracle chain tolerance (default: two box widths).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<RunConfig, Error> {
        let system = match (&self.system, &self.system_file) {
            (Some(n), None) => SystemSource::Builtin(n.clone()),
            (None, Some(p)) => SystemSource::File(p.clone()),
            (None, None) => return Err(Error::Config("one of --system or --system-file is required".into())),
            (Some(_), Some(_)) => return Err(Error::Config("--system and --system-file are exclusive".into())),
        };
        Ok(RunConfig {
            system,
            depth: self.depth.clone(),
            map_time: self.map_time,
            padding: self.padding,
            dt: self.dt,
            horizon: self.horizon,
            t_max: self.tmax,
            epsilon: self.epsilon,
            seed: self.seed,
            out: self.out.clone(),
        })
    }
}

fn status_for(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Ingest { .. }
        | Error::UnknownSystem { .. }
        | Error::InvalidSystem(_)
        | Error::Selection(_)
        | Error::Io(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Analyze(c) => {
            print!("{}", cmd_analyze(&c.config()?)?.text());
            Ok(true)
        }
        Command::Lyapunov { common, construction, pair } => {
            let kind = match construction {
                Kind::Pair => Construction::SinglePair,
                Kind::Morse => Construction::MorseSum,
                Kind::Complete => Construction::Complete,
            };
            print!("{}", cmd_lyapunov(&common.config()?, kind, pair)?.text());
            Ok(true)
        }
        Command::Filtration(c) => {
            let f = cmd_filtration(&c.config()?)?;
            println!("filtration with {} levels", f.levels.len());
            for (k, level) in f.levels.iter().enumerate() {
                println!("  N_{k}: {} boxes", level.len());
            }
            Ok(true)
        }
        Command::Verify(c) => {
            let report = cmd_verify(&c.config()?)?;
            print!("{}", report.text());
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(status_for(&e))
        }
    }
}
