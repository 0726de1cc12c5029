use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "dband",
    version,
    about = "160 GHz ISAC sensing twin: simulate, process, benchmark, serve"
)]
pub struct Cli {
    /// Pipeline configuration file (JSON). Missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Override the scene noise seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the radar numerology derived from the system configuration.
    DeriveParams,
    /// Synthesize a scenario into a raw pulse file.
    Simulate(SimulateArgs),
    /// Run the processing pipeline and write per-frame events.
    Run(RunArgs),
    /// Time the DSP and decision stages per CPI.
    Bench(BenchArgs),
    /// Stream a live, remotely controllable scene over WebSocket.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Args)]
pub struct DetectionArgs {
    /// Activation threshold above the noise floor, dB.
    #[arg(long, value_name = "DB")]
    pub thr_up: Option<f64>,
    /// Release threshold above the noise floor, dB.
    #[arg(long, value_name = "DB")]
    pub thr_down: Option<f64>,
    /// Near edge of the detection scope, m.
    #[arg(long, value_name = "M")]
    pub scope_min_m: Option<f64>,
    /// Far edge of the detection scope, m.
    #[arg(long, value_name = "M")]
    pub scope_max_m: Option<f64>,
    /// Doppler rows excluded on each side of zero Doppler.
    #[arg(long, value_name = "BINS")]
    pub guard_bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_name = "PATH")]
    pub scenario: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario to synthesize on the fly.
    #[arg(
        long,
        value_name = "PATH",
        conflicts_with = "input",
        required_unless_present = "input"
    )]
    pub scenario: Option<PathBuf>,
    /// Raw pulse file written by `simulate`.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Event CSV destination; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    pub events: Option<PathBuf>,
    /// Newline-delimited JSON mirror of the event log.
    #[arg(long, value_name = "PATH")]
    pub ndjson: Option<PathBuf>,
    /// Include per-frame compute time in the event logs.
    #[arg(long)]
    pub timing: bool,
    /// Write every range-Doppler map into this directory.
    #[arg(long, value_name = "DIR")]
    pub dump_rd: Option<PathBuf>,
    /// Also write a grayscale PNG per map (requires --dump-rd).
    #[arg(long, requires = "dump_rd")]
    pub png: bool,
    #[arg(long, value_enum, default_value_t)]
    pub precision: Precision,
    #[command(flatten)]
    pub detection: DetectionArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 50)]
    pub frames: usize,
    #[arg(long, value_enum, default_value_t)]
    pub precision: Precision,
    #[command(flatten)]
    pub detection: DetectionArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// TCP port; 0 picks a free one.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = 8)]
    pub max_clients: usize,
    /// Directory of static UI assets served next to the WebSocket endpoint.
    #[arg(long, value_name = "DIR")]
    pub ui_dir: Option<PathBuf>,
    /// Produce frames as fast as possible instead of at the CPI rate.
    #[arg(long)]
    pub unpaced: bool,
    #[arg(long, value_enum, default_value_t)]
    pub precision: Precision,
    #[command(flatten)]
    pub detection: DetectionArgs,
}
