//! `fluidobs` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::dde::fmt_f64;
use crate::pipeline::{
    cmd_detect, cmd_equilibrium, cmd_linearize, cmd_run, cmd_synthesize, prepare, Overrides, PipelineError,
};

#[derive(Debug, Parser)]
#[command(name = "fluidobs", version, about = "Flow-rate observer and anomaly detector for a TCP/AQM bottleneck")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonFlags {
    /// Output directory (overrides the scenario's output_dir)
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// LMI margin epsilon
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Alarm threshold on |dhat| in packets/s
    #[arg(long)]
    pub theta: Option<f64>,
    /// Dwell time in seconds before an alarm is raised or cleared
    #[arg(long)]
    pub hold: Option<f64>,
    /// Integration step in seconds
    #[arg(long)]
    pub step: Option<f64>,
}

impl CommonFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            output_dir: self.out.clone(),
            epsilon: self.epsilon,
            threshold: self.theta,
            hold: self.hold,
            step: self.step,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print and write the operating point
    Equilibrium {
        scenario: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Write the linearized and augmented model matrices
    Linearize {
        scenario: PathBuf,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Synthesize an observer gain, or certify the scenario's fixed gain
    Synthesize {
        scenario: PathBuf,
        /// Also export the LMI in SDPA sparse format
        #[arg(long)]
        sdpa: bool,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Simulate plant and observer, raise alarms and write reports
    Run {
        /// Scenario file (omit with --batch)
        #[arg(required_unless_present = "batch")]
        scenario: Option<PathBuf>,
        /// Run every *.toml in this directory in parallel
        #[arg(long, conflicts_with = "scenario")]
        batch: Option<PathBuf>,
        #[command(flatten)]
        flags: CommonFlags,
    },
    /// Re-threshold the dhat column of an existing trace CSV
    Detect {
        csv: PathBuf,
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        hold: f64,
        /// Directory for alarms.txt; printed only when absent
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn report(err: &PipelineError) -> i32 {
    eprintln!("error: {err}");
    err.exit_code()
}

fn run_one(path: &Path, flags: &CommonFlags) -> Result<String, PipelineError> {
    let sc = prepare(path, &flags.overrides())?;
    let (summary, art) = cmd_run(&sc)?;
    let dir = sc.output_dir();
    art.commit(&dir)?;
    let mut msg = format!(
        "{}: {} alarm(s), written to {}\n",
        path.display(),
        summary.alarms.alarms.len(),
        dir.display()
    );
    for a in &summary.alarms.alarms {
        msg.push_str(&format!(
            "  alarm {}..{} mean dhat {}\n",
            fmt_f64(a.onset),
            fmt_f64(a.clear),
            fmt_f64(a.mean_estimate)
        ));
    }
    Ok(msg)
}

fn batch(dir: &Path, flags: &CommonFlags) -> i32 {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", dir.display());
            return 1;
        }
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    if files.is_empty() {
        eprintln!("error: no scenario files in {}", dir.display());
        return 1;
    }
    if flags.out.is_some() && files.len() > 1 {
        eprintln!("error: --out cannot be shared by several scenarios");
        return 1;
    }
    let results: Vec<_> = files.par_iter().map(|f| (f, run_one(f, flags))).collect();
    let mut code = 0;
    for (f, r) in results {
        match r {
            Ok(msg) => print!("{msg}"),
            Err(e) => {
                eprintln!("error: {}: {e}", f.display());
                code = code.max(e.exit_code());
            }
        }
    }
    code
}

pub fn execute(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Equilibrium { scenario, flags } => prepare(&scenario, &flags.overrides()).and_then(|sc| {
            let (eq, art) = cmd_equilibrium(&sc)?;
            art.commit(&sc.output_dir())?;
            print!("{}", art.get("equilibrium.csv").unwrap_or_default());
            println!("queue = {}", fmt_f64(eq.queue));
            Ok(())
        }),
        Command::Linearize { scenario, flags } => prepare(&scenario, &flags.overrides()).and_then(|sc| {
            let (aug, art) = cmd_linearize(&sc)?;
            art.commit(&sc.output_dir())?;
            println!(
                "augmented model of dimension {}, observability rank {}",
                aug.dim(),
                aug.observability_rank()
            );
            Ok(())
        }),
        Command::Synthesize { scenario, sdpa, flags } => prepare(&scenario, &flags.overrides()).and_then(|sc| {
            let (_, art) = cmd_synthesize(&sc, sdpa)?;
            art.commit(&sc.output_dir())?;
            print!("{}", art.get("synthesis.txt").unwrap_or_default());
            Ok(())
        }),
        Command::Run {
            scenario,
            batch: Some(dir),
            flags,
        } => {
            debug_assert!(scenario.is_none());
            return batch(&dir, &flags);
        }
        Command::Run {
            scenario: Some(path),
            batch: None,
            flags,
        } => run_one(&path, &flags).map(|msg| print!("{msg}")),
        Command::Run { .. } => unreachable!("clap requires a scenario or --batch"),
        Command::Detect { csv, theta, hold, out } => cmd_detect(&csv, theta, hold).and_then(|(rep, art)| {
            if let Some(dir) = out {
                art.commit(&dir)?;
            }
            print!("{}", rep.to_text());
            Ok(())
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() { 1 } else { 0 }
        }
    }
}
