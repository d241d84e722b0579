//! `bsc`: simulate fringe sequences, compensate motion error, check the
//! error oracle, unwrap stereo phase and benchmark the streaming path.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status for errors in the input (bad scenario, geometry, frames).
const EXIT_SPEC: u8 = 2;
/// Exit status for numerical failures, and for tolerance misses under `--strict`.
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "bsc", version, about = "Binomial self-compensation toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the row-parallel kernels (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "bsc-out")]
    pub out: PathBuf,
    /// Exit with status 3 when a result misses its tolerance.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scenario to PGM frames plus ground truth.
    Simulate {
        scenario: PathBuf,
        /// PGM bit depth (8 or 16).
        #[arg(long, default_value_t = 8)]
        bits: u8,
    },
    /// Sample a motion profile and its finite differences.
    Offsets {
        /// `linear:<v>`, `sin:<a>:<period>[:<phase>]` or `series:<x0>,<x1>,...`
        #[arg(long)]
        profile: String,
        #[arg(long)]
        frames: usize,
        /// Highest difference order to tabulate.
        #[arg(long, default_value_t = 2)]
        order: usize,
    },
    /// Wrapped phase of consecutive windows of a frame directory.
    Phase {
        frames: PathBuf,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        /// Capture index of the first window.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Number of windows (default: as many as fit).
        #[arg(long)]
        count: Option<usize>,
        /// Apply datum correction with t = window start.
        #[arg(long)]
        datum: bool,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Order-K compensated phase for every window of a frame directory.
    Compensate {
        frames: PathBuf,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        #[arg(short, long)]
        k: usize,
        /// Use the frame-by-frame streaming path instead of batch.
        #[arg(long)]
        stream: bool,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Fit one output's error per K and compare it with the prediction.
    OracleCheck {
        scenario: PathBuf,
        /// Capture index of the output's first frame.
        #[arg(long, default_value_t = 0)]
        window: usize,
    },
    /// Full sweep over the scenario's K range.
    #[command(name = "sweep-k", alias = "run-sweep")]
    SweepK { scenario: PathBuf },
    /// Uniqueness limit on the fringe frequency for a rig geometry.
    FreqLimit {
        /// System geometry JSON (default: the built-in desk rig).
        #[arg(long)]
        geometry: Option<PathBuf>,
        /// Frequency to test (default: the geometry's own).
        #[arg(long)]
        candidate: Option<f64>,
    },
    /// Stereo phase unwrapping and triangulation of one phase pair.
    Unwrap {
        #[arg(long)]
        main: PathBuf,
        #[arg(long)]
        aux: PathBuf,
        /// Rig JSON (default: the built-in desk rig).
        #[arg(long)]
        rig: Option<PathBuf>,
        /// SAD window side in pixels.
        #[arg(long)]
        window: Option<usize>,
    },
    /// Time the streaming path on synthetic frames.
    Bench {
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
        #[arg(long, default_value_t = 4)]
        steps: usize,
        #[arg(short, long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 800)]
        frames: usize,
    },
}

/// Raised when `--strict` is set and a result misses its tolerance.
#[derive(Debug)]
pub struct StrictFailure(pub String);

impl std::fmt::Display for StrictFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for StrictFailure {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use bsc_core::Error as E;
    for cause in err.chain() {
        if cause.is::<StrictFailure>() {
            return EXIT_NUMERICAL;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_) => 1,
                E::WrapEvent { .. } | E::RankDeficient(_) => EXIT_NUMERICAL,
                _ => EXIT_SPEC,
            };
        }
        if cause.is::<serde_json::Error>() {
            return EXIT_SPEC;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(EXIT_SPEC);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
