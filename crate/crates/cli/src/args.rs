use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dispatch", version, about = "Ride-hailing dispatch with evolving assignment objectives")]
pub struct Cli {
    /// key = value file supplying defaults for any long flag
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (repeatable); RUST_LOG overrides
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a scenario file
    #[command(args_override_self = true)]
    Generate(GenerateArgs),
    /// Simulate one scenario under a fixed objective
    #[command(args_override_self = true)]
    Run(RunArgs),
    /// Evolve per-epoch objectives with a generator in the loop
    #[command(args_override_self = true)]
    Evolve(EvolveArgs),
    /// Compare the joint optimum with the two-level pipeline on a tiny instance
    #[command(args_override_self = true)]
    Oracle(OracleArgs),
    /// Tabulate mean waits from metrics files
    #[command(args_override_self = true)]
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CityArgs {
    /// Travel-time matrix CSV, integer seconds, no header
    #[arg(long, value_name = "CSV")]
    pub matrix: Option<PathBuf>,
    /// Origin-destination frequency CSV matching --matrix
    #[arg(long, value_name = "CSV")]
    pub freq: Option<PathBuf>,
    /// Zones of the synthetic city used when --matrix is absent
    #[arg(long, default_value_t = 19)]
    pub zones: usize,
    /// Seed of the synthetic city
    #[arg(long, default_value_t = 0)]
    pub city_seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub city: CityArgs,
    /// Scenario JSON written by `generate`
    #[arg(long, value_name = "FILE", conflicts_with = "name")]
    pub scenario: Option<PathBuf>,
    /// Scenario shape, e.g. P35_C60_T600, sampled with --seed
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub city: CityArgs,
    /// Scenario shape, e.g. P50_C30_T300
    #[arg(long)]
    pub name: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DispatchArgs {
    /// Decision epoch length in seconds
    #[arg(long, default_value_t = 300)]
    pub dt: u64,
    /// Heatmap time-slot width in seconds
    #[arg(long, default_value_t = 600)]
    pub bins: u64,
    /// Run directory; a timestamped one under ./runs when absent
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Builtin objective name or path to an objective JSON file
    #[arg(long, default_value = "default_composite")]
    pub objective: String,
    #[command(flatten)]
    pub dispatch: DispatchArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GeneratorArgs {
    /// Offline deterministic generator
    #[arg(long, conflicts_with = "endpoint")]
    pub mock: bool,
    /// Offline generator that weights load balancing by demand per taxi
    #[arg(long, conflicts_with = "endpoint")]
    pub adaptive: bool,
    /// Chat-completions URL; the key is read from DISPATCH_API_KEY
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value = "default")]
    pub model: String,
    #[arg(long, default_value_t = 0.9)]
    pub temperature: f64,
    /// Fraction of mock responses that are unusable
    #[arg(long, default_value_t = 0.0)]
    pub invalid_rate: f64,
    /// Mock seed; defaults to --seed
    #[arg(long)]
    pub mock_seed: Option<u64>,
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    #[arg(long, default_value_t = 60_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 500)]
    pub backoff_ms: u64,
}

#[derive(Debug, Clone, Args)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub generator: GeneratorArgs,
    #[arg(long, default_value_t = 0.9)]
    pub hmcr: f64,
    #[arg(long, default_value_t = 0.2)]
    pub par: f64,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 5)]
    pub pop: usize,
    /// Query once per individual and reuse the objective in every epoch
    #[arg(long)]
    pub open_loop: bool,
    /// Threads evaluating population rounds; 0 uses every core
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[command(flatten)]
    pub dispatch: DispatchArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 5)]
    pub max_passengers: usize,
    #[arg(long, default_value_t = 3)]
    pub max_taxis: usize,
    /// Run directory for oracle.json; printing only when absent
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// metrics.json files from `run` or `evolve`
    #[arg(required = true, value_name = "METRICS")]
    pub metrics: Vec<PathBuf>,
    /// Report CSV; stdout when absent
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write every heatmap cell into one CSV
    #[arg(long, value_name = "FILE")]
    pub heatmaps: Option<PathBuf>,
}

const SWITCHES: [&str; 3] = ["mock", "adaptive", "open-loop"];
const SUBCOMMANDS: [&str; 5] = ["generate", "run", "evolve", "oracle", "report"];

/// Parses `key = value` lines; `#` starts a comment. Keys are long flag
/// names with either `-` or `_`.
pub fn read_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key = value", n + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            bail!("config line {}: invalid key {:?}", n + 1, k.trim());
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn config_flags(pairs: &[(String, String)]) -> Result<Vec<OsString>> {
    let mut flags = Vec::new();
    for (k, v) in pairs {
        if SWITCHES.contains(&k.as_str()) {
            match v.as_str() {
                "true" | "1" | "yes" => flags.push(format!("--{k}").into()),
                "false" | "0" | "no" => {}
                _ => bail!("config key {k} expects true or false, got {v:?}"),
            }
        } else {
            flags.push(format!("--{k}={v}").into());
        }
    }
    Ok(flags)
}

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Splices flags from the `--config` file right after the subcommand, so
/// anything given on the command line later overrides them.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = read_file(&path)?;
    let flags = config_flags(&read_config(&text).with_context(|| format!("in {}", path.display()))?)?;
    let Some(pos) = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(argv);
    };
    let mut out = argv[..=pos].to_vec();
    out.extend(flags);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}
