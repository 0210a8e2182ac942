//! `freeshift`: sample configurations, apply and invert the two
//! constructions, and run seeded verification batches with JSON reports.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 degraded confidence,
//! 64 bad usage, 74 I/O failure.

mod commands;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use freeshift::config::{MeasureKind, MeasureSpec};
use freeshift::oe2::DEFAULT_BUDGET;
use freeshift::statcheck::TestReport;

const EXIT_FAIL: u8 = 1;
const EXIT_DEGRADED: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 74;

#[derive(Parser, Debug)]
#[command(name = "freeshift", version, about = "Orbit equivalences of Bernoulli shifts over free groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Base seed; trial i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Alphabet size |K| (taken from --law when a law is given).
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    pub alphabet_size: Option<u32>,
    /// "uniform" or a probability list such as 0.5,0.3,0.2.
    #[arg(long, default_value = "uniform")]
    pub law: String,
    /// Radius of the window in F2.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub radius: u64,
    /// Step budget of each pairing scan.
    #[arg(long, default_value_t = DEFAULT_BUDGET, value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: u64,
    /// Write output here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    pub fn measure(&self, kind: MeasureKind) -> Result<MeasureSpec, Failure> {
        let law = if self.law == "uniform" {
            let k = self.alphabet_size.unwrap_or(2);
            vec![1.0 / k as f64; k as usize]
        } else {
            let parsed: Result<Vec<f64>, _> = if self.law.trim_start().starts_with('[') {
                serde_json::from_str(&self.law).map_err(|e| e.to_string())
            } else {
                self.law.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string())).collect()
            };
            let law = parsed.map_err(|e| Failure::Usage(format!("bad --law {:?}: {e}", self.law)))?;
            if let Some(k) = self.alphabet_size {
                if k as usize != law.len() {
                    return Err(Failure::Usage(format!(
                        "--alphabet-size {k} disagrees with a law of {} symbols",
                        law.len()
                    )));
                }
            }
            law
        };
        MeasureSpec::new(kind, law).map_err(Failure::from)
    }

    /// The alphabet size for constructions that need uniform `κ`.
    pub fn uniform_size(&self) -> Result<u32, Failure> {
        let m = self.measure(MeasureKind::Pair)?;
        if !m.is_uniform() {
            return Err(Failure::Usage("the tree contraction needs a uniform law".into()));
        }
        Ok(m.alphabet_size())
    }

    pub fn radius(&self) -> usize {
        self.radius as usize
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Emit a window of a sampled configuration.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Kind::Pair)]
        kind: Kind,
    },
    /// The edge-rewiring orbit equivalence on rank-2 pair shifts.
    Oe13 {
        #[command(subcommand)]
        action: Oe13Action,
    },
    /// The tree-contraction stable orbit equivalence.
    Soe14 {
        #[command(subcommand)]
        action: Soe14Action,
    },
    /// Statistical suites: calibration, oe13 pushforward, soe14 run labels.
    MeasureTest {
        #[command(flatten)]
        common: Common,
        /// Suites to run.
        #[arg(long, value_delimiter = ',', default_values_t = [Suite::Calibration, Suite::Oe13, Suite::Soe14])]
        suite: Vec<Suite>,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
    },
    /// Aggregate report files into a summary table and CSV.
    Report {
        /// JSON files written by verify or measure-test.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum Oe13Action {
    /// Emit Ωx and its second coordinate on the window.
    Apply {
        #[command(flatten)]
        common: Common,
    },
    /// Run exact checks over seeded trials.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = verify::Oe13Check::all())]
        checks: Vec<verify::Oe13Check>,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        /// Length bound of the exhaustive witness-uniqueness search.
        #[arg(long, default_value_t = 2)]
        witness_cap: usize,
    },
}

#[derive(Subcommand, Debug)]
enum Soe14Action {
    /// Emit Ωy on the F_T ball of radius --fradius, for y sampled in Y.
    Apply {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        fradius: u64,
    },
    /// Read a file written by `apply` and emit Θz on the F2 window.
    Invert {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run checks over seeded trials.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = verify::Soe14Check::all())]
        checks: Vec<verify::Soe14Check>,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        fradius: u64,
        #[arg(long, default_value_t = 2)]
        witness_cap: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Kind {
    Pair,
    Plain,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
pub enum Suite {
    Calibration,
    Oe13,
    Soe14,
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

/// Why a command did not finish normally.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(String),
    /// A scan ran out of budget while producing a single artifact.
    Aborted(String),
    Other(String),
}

impl From<freeshift::Error> for Failure {
    fn from(e: freeshift::Error) -> Self {
        match e {
            freeshift::Error::Usage(m) => Failure::Usage(m),
            e if e.is_abort() => Failure::Aborted(format!("{e}; rerun with a larger --budget")),
            e => Failure::Other(e.to_string()),
        }
    }
}

/// Exit status for a list of reports: failure beats degraded confidence.
pub fn verdict(reports: &[TestReport]) -> u8 {
    if reports.iter().any(|r| !r.pass && !r.degraded) {
        EXIT_FAIL
    } else if reports.iter().any(|r| r.degraded) {
        EXIT_DEGRADED
    } else {
        0
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Sample { common, kind } => {
            let kind = match kind {
                Kind::Pair => MeasureKind::Pair,
                Kind::Plain => MeasureKind::Plain,
            };
            commands::sample(&common, kind)
        }
        Command::Oe13 { action } => match action {
            Oe13Action::Apply { common } => commands::oe13_apply(&common),
            Oe13Action::Verify {
                common,
                checks,
                trials,
                witness_cap,
            } => verify::oe13(&common, &checks, trials, witness_cap),
        },
        Command::Soe14 { action } => match action {
            Soe14Action::Apply { common, fradius } => commands::soe14_apply(&common, fradius as usize),
            Soe14Action::Invert { common, input } => commands::soe14_invert(&common, &input),
            Soe14Action::Verify {
                common,
                checks,
                trials,
                fradius,
                witness_cap,
            } => verify::soe14(&common, &checks, trials, fradius as usize, witness_cap),
        },
        Command::MeasureTest { common, suite, trials } => commands::measure_test(&common, &suite, trials),
        Command::Report { inputs, out } => commands::report(&inputs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let (code, msg) = match f {
                Failure::Usage(m) => (EXIT_USAGE, m),
                Failure::Io(m) => (EXIT_IO, m),
                Failure::Aborted(m) => (EXIT_DEGRADED, m),
                Failure::Other(m) => (EXIT_FAIL, m),
            };
            eprintln!("freeshift: {msg}");
            ExitCode::from(code)
        }
    }
}
