use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{Mode, Overrides, RunConfig};
use crate::error::Result;
use crate::pipeline::{self, RunOutcome};

#[derive(Debug, Parser)]
#[command(name = "augforge", version, about = "Compose, filter and soft-label augmented VQA training pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// All stages; stops after `score` when external inputs are missing.
    Run(#[command(flatten)] Args),
    Compose(#[command(flatten)] Args),
    Score(#[command(flatten)] Args),
    Assign(#[command(flatten)] Args),
    Emit(#[command(flatten)] Args),
    Eval(#[command(flatten)] Args),
    Stats(#[command(flatten)] Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Basic,
    Extra,
}

#[derive(Debug, Clone, PartialEq, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, env = "AUGFORGE_JOBS")]
    pub jobs: Option<usize>,
}

impl Command {
    pub fn args(&self) -> &Args {
        match self {
            Self::Run(a)
            | Self::Compose(a)
            | Self::Score(a)
            | Self::Assign(a)
            | Self::Emit(a)
            | Self::Eval(a)
            | Self::Stats(a) => a,
        }
    }
}

impl Args {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            alpha_percent: self.alpha,
            delta_percent: self.delta,
            seed: self.seed,
            mode: self.mode.map(|m| match m {
                ModeArg::Basic => Mode::Basic,
                ModeArg::Extra => Mode::Extra,
            }),
        }
    }
}

/// Runs one command. Only `run` can report a paused two-phase run.
pub fn execute(command: &Command) -> Result<RunOutcome> {
    let args = command.args();
    let cfg = RunConfig::load(&args.config, &args.overrides())?;
    let pool = pipeline::thread_pool(args.jobs)?;
    match command {
        Command::Run(_) => return pipeline::run(&cfg, &pool),
        Command::Compose(_) => {
            pipeline::compose(&cfg, &pool)?;
        }
        Command::Score(_) => {
            pipeline::score(&cfg, &pool)?;
        }
        Command::Assign(_) => {
            let missing = pipeline::missing_phase_two_inputs(&cfg)?;
            if !missing.is_empty() {
                let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
                return Err(crate::AppError::Config(format!("missing phase-two inputs: {}", list.join(", "))));
            }
            pipeline::assign(&cfg, &pool)?;
        }
        Command::Emit(_) => {
            pipeline::emit(&cfg)?;
        }
        Command::Eval(_) => {
            let report = crate::eval::eval(&cfg)?;
            print!("{}", report.to_text());
        }
        Command::Stats(_) => {
            let report = crate::stats::stats(&cfg)?;
            print!("{}", report.to_text());
        }
    }
    Ok(RunOutcome::Completed)
}

/// Parses arguments, runs, and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    match execute(&cli.command) {
        Ok(RunOutcome::Completed) => 0,
        Ok(RunOutcome::AwaitingInputs(paths)) => {
            eprintln!("phase one complete; provide these inputs and rerun:");
            for p in paths {
                eprintln!("  {}", p.display());
            }
            0
        }
        Err(e) => {
            let cat = e.category();
            eprintln!("error [{}]: {e}", cat.as_str());
            cat.exit_code()
        }
    }
}
