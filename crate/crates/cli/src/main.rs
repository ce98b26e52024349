//! `rgatelock`: lock netlists with reconfigurable gates, attack them, and measure them.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "rgatelock", version, about = "Logic locking with reconfigurable gates")]
struct Cli {
    /// Worker threads for sweeps and curves (default: one per core)
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replace gates of a .bench netlist with rGates; writes <stem>.locked and <stem>.key
    Lock(LockArgs),
    /// Attack a locked netlist and print a JSON report
    Attack(AttackArgs),
    /// Error rate and HD/fanout sweep over key widths, as CSV
    Metrics(MetricsArgs),
    /// Expected traversal cost of a per-bit probability model
    Model(ModelArgs),
    /// Build an instruction sequence that drives the core to a target key
    Keygen(KeygenArgs),
    /// Evaluate a netlist on one input vector
    Sim(SimArgs),
}

#[derive(Args, Clone, Copy)]
struct SeedArg {
    /// Seed for every random choice; falls back to $ALLMASK_SEED, then 0
    #[arg(long, env = "ALLMASK_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LockArgs {
    bench: PathBuf,
    /// Number of rGates (key bits)
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    seed: SeedArg,
    /// Output directory (default: current directory)
    #[arg(short, long, default_value = ".")]
    out_dir: PathBuf,
    /// Allowed replacement types
    #[arg(long, value_delimiter = ',', default_value = "A,B,C,D")]
    types: Vec<String>,
    /// Nets per G cone
    #[arg(long, default_value_t = 1)]
    g_width: usize,
    /// Minimum critical-path slack of a replaced gate
    #[arg(long, default_value_t = 1)]
    depth_margin: u32,
    /// Measure slack along the longest path through the gate
    #[arg(long)]
    strict_slack: bool,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Strategy {
    /// Direct traversal of the whole key
    Combined,
    /// Per-domain traversal (needs DOMAIN lines)
    Separate,
    /// Random instructions on the key-generating core
    Iis,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    Seeded,
    Ascending,
}

#[derive(Clone, Copy, ValueEnum)]
enum Core {
    Toy,
    Uniform,
}

#[derive(Args)]
struct AttackArgs {
    /// Locked netlist; a .bench file is accepted with --curve
    locked: PathBuf,
    #[arg(long, value_enum, default_value = "combined")]
    strategy: Strategy,
    /// Group sizes for --strategy separate, e.g. 1,2,2
    #[arg(long, value_delimiter = ',')]
    groups: Vec<usize>,
    /// Cycle budget for iis (accepts 1e6)
    #[arg(long, default_value = "1e6", value_parser = parse_count)]
    max_cycles: u64,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, value_enum, default_value = "seeded")]
    order: Order,
    /// Override the rGate write budget
    #[arg(long, value_parser = parse_count)]
    endurance: Option<u64>,
    /// Node selection JSON for iis (default: seeded register bits)
    #[arg(long)]
    sel: Option<PathBuf>,
    /// Unlocked reference netlist to use as the oracle instead of the .key sidecar
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Include wall-clock time in the report
    #[arg(long)]
    timing: bool,
    /// Write a cycles-vs-K CSV here instead of attacking once
    #[arg(long)]
    curve: Option<PathBuf>,
    /// K values for --curve as first:last[:step]
    #[arg(long, default_value = "3:9", value_parser = parse_range)]
    k_range: KList,
    /// Number of seeds per K for --curve, counting up from --seed
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, value_enum, default_value = "toy")]
    core: Core,
}

#[derive(Args)]
struct MetricsArgs {
    bench: PathBuf,
    /// K values as first:last[:step]
    #[arg(long, default_value = "10:80:10", value_parser = parse_range)]
    k_sweep: KList,
    /// Lock seeds per K, counting up from --seed
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[command(flatten)]
    seed: SeedArg,
    /// Wrong keys sampled per cell
    #[arg(long, default_value_t = 1000)]
    keys: usize,
    /// Input vectors sampled per cell
    #[arg(long, default_value_t = 1000)]
    inputs: usize,
    /// Never switch to exhaustive enumeration
    #[arg(long)]
    no_exhaustive: bool,
    /// Write the CSV here and print a JSON summary on stdout
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    /// JSON with fields "p" and "N"
    model: PathBuf,
    /// Also estimate E(M) by simulation with this many trials
    #[arg(long, value_parser = parse_count)]
    trials: Option<u64>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args)]
struct KeygenArgs {
    /// Node selection JSON
    #[arg(long)]
    sel: PathBuf,
    /// Target key, bit 0 first
    #[arg(long, required_unless_present = "replay")]
    target: Option<String>,
    /// Replay an existing program instead of searching
    #[arg(long, conflicts_with = "target")]
    replay: Option<PathBuf>,
    /// Maximum program length
    #[arg(long, default_value_t = 16)]
    budget: usize,
    #[arg(long, default_value_t = 20_000)]
    max_expansions: usize,
    #[command(flatten)]
    seed: SeedArg,
    /// Program output file (default: stdout)
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    /// .bench or .locked file
    netlist: PathBuf,
    /// Input values, input 0 first
    #[arg(long)]
    vector: String,
    /// Key for a locked netlist (default: from the .key sidecar)
    #[arg(long)]
    key: Option<String>,
}

/// Integer that may be written in scientific notation.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(format!("`{s}` is not a non-negative integer")),
    }
}

/// Key widths from a range argument.
#[derive(Clone, Debug, PartialEq, Eq)]
struct KList(Vec<usize>);

/// `a:b[:s]` inclusive, or a single value.
fn parse_range(s: &str) -> Result<KList, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}"));
    let (first, last, step) = match parts.as_slice() {
        [a] => (num(a)?, num(a)?, 1),
        [a, b] => (num(a)?, num(b)?, 1),
        [a, b, c] => (num(a)?, num(b)?, num(c)?),
        _ => return Err(format!("expected first:last[:step], got `{s}`")),
    };
    if step == 0 || first > last {
        return Err(format!("empty range `{s}`"));
    }
    Ok(KList((first..=last).step_by(step).collect()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Lock(a) => commands::lock(a),
        Command::Attack(a) => commands::attack(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Model(a) => commands::model(a),
        Command::Keygen(a) => commands::keygen(a),
        Command::Sim(a) => commands::sim(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_ranges() {
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert_eq!(parse_count("250"), Ok(250));
        assert!(parse_count("1.5").is_err());
        assert_eq!(parse_range("10:80:10").unwrap().0, vec![10, 20, 30, 40, 50, 60, 70, 80]);
        assert_eq!(parse_range("3:5").unwrap().0, vec![3, 4, 5]);
        assert_eq!(parse_range("0").unwrap().0, vec![0]);
        assert!(parse_range("5:3").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
