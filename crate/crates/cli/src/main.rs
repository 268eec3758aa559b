//! `qpvlab`: command-line surface over the position-verification laboratory.
//!
//! Five subcommands cover the workflow end to end:
//!
//! - `bound`    evaluates the entanglement thresholds for a target ε (or the
//!   tightest ε for a given adversarial E_max),
//! - `entropy`  certifies two-sided E_max bounds for a shared resource and
//!   prints the numeric certificate,
//! - `simulate` runs one honest protocol round and prints its transcript,
//! - `attack`   Monte-Carlo-estimates a cheating strategy's acceptance
//!   probability and cross-checks it against the certified bound,
//! - `sweep`    streams a grid of attack estimates as CSV.
//!
//! Exit codes: 0 on success, 1 on a domain error (invalid parameter values,
//! protocol failures, bound violations), 2 on a usage error (unknown flags,
//! missing arguments). Single results print as JSON; sweeps print CSV with a
//! fixed header. All randomness derives from `--seed`, which defaults to the
//! `QPVLAB_SEED` environment variable when set; identical invocations produce
//! byte-identical output.

use std::error::Error;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qpvlab_core::adversaries::default_resource;
use qpvlab_core::bounds::{bound_from_emax, epsilon_threshold};
use qpvlab_core::harness::{monte_carlo, sweep, SweepCell};
use qpvlab_core::protocols::{run_qpv_honest, run_wse_honest};
use qpvlab_core::{
    BoundReport, EstimateRow, ExperimentConfig, Geometry, ResourceSpec, RunSpec, Verdict, WseMode,
};

type CliResult = Result<(), Box<dyn Error>>;

#[derive(Parser)]
#[command(
    name = "qpvlab",
    version,
    about = "Simulation and bound-certification laboratory for BB84-based position verification",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the security bound for a qubit count and target ε or E_max
    Bound(BoundArgs),
    /// Certify E_max bounds for a shared entanglement resource
    Entropy(EntropyArgs),
    /// Run one honest protocol round and print the transcript
    Simulate(SimulateArgs),
    /// Estimate a cheating strategy's acceptance probability
    Attack(AttackArgs),
    /// Run an attack across an (n, ebits) grid and emit CSV
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Args)]
#[command(group(ArgGroup::new("target").required(true).args(["epsilon", "emax"])))]
struct BoundArgs {
    /// Number of encoded qubits n
    #[arg(long)]
    n: u64,
    /// Cheat-probability bound ε in (0, 1); reports the tolerable E_max
    #[arg(long)]
    epsilon: Option<f64>,
    /// Adversarial entanglement in bits; reports the tightest ε it permits
    #[arg(long)]
    emax: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ResourceKind {
    /// No shared entanglement
    None,
    /// Maximally entangled qubit pairs
    MaxEntangled,
    /// Identical two-qubit pure states with given Schmidt weights
    PureSchmidt,
    /// Isotropic (Werner-twirled) pairs of given visibility
    Isotropic,
}

#[derive(Args)]
struct EntropyArgs {
    /// Resource family to certify
    #[arg(long, value_enum)]
    resource: ResourceKind,
    /// Number of shared pairs
    #[arg(long, default_value_t = 1)]
    pairs: usize,
    /// Schmidt weights "w0,w1" (pure-schmidt only)
    #[arg(long, required_if_eq("resource", "pure-schmidt"))]
    weights: Option<String>,
    /// Visibility v in [0, 1] (isotropic only)
    #[arg(long, required_if_eq("resource", "isotropic"))]
    visibility: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Protocol {
    /// Position verification with both verifiers and timing verdicts
    Qpv,
    /// The two-party weak string erasure round underlying it
    Wse,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Alice prepares encodings, Bob measures
    Prepare,
    /// Both halves measured out of shared pairs
    Entangled,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Protocol::Qpv)]
    protocol: Protocol,
    /// Number of encoded qubits n
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Weak-string-erasure variant (wse only)
    #[arg(long, value_enum, default_value_t = Mode::Prepare)]
    mode: Mode,
    /// Position of the first verifier
    #[arg(long, default_value_t = 0.0)]
    v1: f64,
    /// Position of the second verifier
    #[arg(long, default_value_t = 2.0)]
    v2: f64,
    /// Claimed prover position
    #[arg(long, default_value_t = 1.0)]
    position: f64,
    /// Actual prover position, when it differs from the claim
    #[arg(long)]
    actual: Option<f64>,
    /// Timing tolerance added to both verdict deadlines
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
    #[arg(long, env = "QPVLAB_SEED", default_value_t = 0)]
    seed: u64,
    /// Write the spacetime event log here as JSON lines (qpv only)
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    /// breidbart | basis-guess | teleport | random-independent | random-shared
    #[arg(long)]
    strategy: String,
    /// Number of encoded qubits n
    #[arg(long)]
    n: usize,
    /// Entangled pairs available to the colluders
    #[arg(long, default_value_t = 0)]
    ebits: usize,
    /// Replace the default resource with isotropic pairs of this visibility
    #[arg(long)]
    visibility: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, env = "QPVLAB_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated qubit counts, one sweep row per (n, ebits) pair
    #[arg(long, value_delimiter = ',', required = true)]
    ns: Vec<usize>,
    /// Comma-separated entangled-pair budgets; pairs exceeding n are skipped
    #[arg(long, value_delimiter = ',', default_value = "0")]
    ebits: Vec<usize>,
    #[arg(long, default_value = "teleport")]
    strategy: String,
    /// Monte-Carlo trials per cell
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, env = "QPVLAB_SEED", default_value_t = 0)]
    seed: u64,
    /// Output CSV path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    // Die quietly when the reader of a pipe goes away (`qpvlab sweep | head`)
    // instead of panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bound(args) => run_bound(args),
        Command::Entropy(args) => run_entropy(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Attack(args) => run_attack(args),
        Command::Sweep(args) => run_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run_bound(args: BoundArgs) -> CliResult {
    let report = match (args.epsilon, args.emax) {
        (Some(eps), None) => epsilon_threshold(args.n, eps)?,
        (None, Some(emax)) => bound_from_emax(args.n, emax)?,
        _ => unreachable!("clap enforces exactly one of --epsilon/--emax"),
    };
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Csv => print_bound_csv(&report),
        Format::Text => print_bound_text(&report),
    }
    Ok(())
}

fn verdict_token(verdict: Verdict) -> &'static str {
    match verdict {
        Verdict::Secure => "secure",
        Verdict::BoundExceeded => "bound_exceeded",
        Verdict::Vacuous => "vacuous",
        Verdict::NotCompared => "not_compared",
    }
}

/// `{}`-format an optional column, leaving it empty when absent.
fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn print_bound_csv(report: &BoundReport) {
    println!(
        "n,epsilon,lambda,s,threshold_exact,threshold_stringent,reference_rate,emax,gamma_rate,lambda_secure,verdict"
    );
    println!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        report.params.n,
        report.params.epsilon,
        report.params.lambda,
        report.params.s,
        opt(report.threshold_exact),
        opt(report.threshold_stringent),
        report.reference_rate,
        opt(report.emax),
        opt(report.gamma_rate),
        opt(report.lambda_secure),
        verdict_token(report.verdict)
    );
}

fn print_bound_text(report: &BoundReport) {
    let p = &report.params;
    println!("n                   = {}", p.n);
    println!("epsilon             = {:.6e}", p.epsilon);
    println!("lambda              = {:.6} bits/qubit", p.lambda);
    println!("s = 1 - 2 log2(eps) = {:.6}", p.s);
    match report.threshold_exact {
        Some(t) => println!("threshold_exact     = {t:.6} bits"),
        None => println!("threshold_exact     = none (s outside [1, n])"),
    }
    match report.threshold_stringent {
        Some(t) => println!("threshold_stringent = {t:.6} bits"),
        None => println!("threshold_stringent = none (s outside [1, n])"),
    }
    println!("reference_rate      = {:.6} bits", report.reference_rate);
    if let Some(emax) = report.emax {
        println!("emax                = {emax:.6} bits");
    }
    if let Some(g) = report.gamma_rate {
        println!("gamma_rate          = {g:.6}");
    }
    if let Some(l) = report.lambda_secure {
        println!("lambda_secure       = {l:.6} bits/qubit");
    }
    println!("verdict             = {}", verdict_token(report.verdict));
}

fn parse_weights(text: &str) -> Result<Vec<f64>, Box<dyn Error>> {
    text.split(',')
        .map(|w| {
            w.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad Schmidt weight '{w}'").into())
        })
        .collect()
}

fn run_entropy(args: EntropyArgs) -> CliResult {
    let resource = match args.resource {
        ResourceKind::None => ResourceSpec::None,
        ResourceKind::MaxEntangled => ResourceSpec::MaxEntangledPairs { pairs: args.pairs },
        ResourceKind::PureSchmidt => ResourceSpec::PureSchmidt {
            weights: parse_weights(args.weights.as_deref().expect("required_if_eq"))?,
            pairs: args.pairs,
        },
        ResourceKind::Isotropic => ResourceSpec::Isotropic {
            pairs: args.pairs,
            visibility: args.visibility.expect("required_if_eq"),
        },
    };
    let bounds = resource.emax_bounds()?;
    let certificate = resource.emax_certificate()?;
    let report = serde_json::json!({
        "resource": resource,
        "emax_bits": bounds,
        "per_pair_certificate": certificate,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> CliResult {
    let rng = ChaCha8Rng::seed_from_u64(args.seed);
    match args.protocol {
        Protocol::Qpv => {
            let mut geometry = Geometry::honest(args.v1, args.v2, args.position, args.tolerance)?;
            if let Some(actual) = args.actual {
                geometry = geometry.with_actual_prover(actual)?;
            }
            let (transcript, log) = run_qpv_honest(args.n, &geometry, rng)?;
            if let Some(path) = &args.events {
                let mut file = BufWriter::new(File::create(path)?);
                file.write_all(log.to_json_lines().as_bytes())?;
                file.flush()?;
            }
            println!("{}", serde_json::to_string_pretty(&transcript)?);
        }
        Protocol::Wse => {
            let mode = match args.mode {
                Mode::Prepare => WseMode::Prepare,
                Mode::Entangled => WseMode::Entangled,
            };
            let transcript = run_wse_honest(args.n, mode, rng)?;
            println!("{}", serde_json::to_string_pretty(&transcript)?);
        }
    }
    Ok(())
}

fn run_attack(args: AttackArgs) -> CliResult {
    let resource = match args.visibility {
        Some(v) => ResourceSpec::Isotropic { pairs: args.ebits, visibility: v },
        None => default_resource(&args.strategy, args.ebits),
    };
    let config = ExperimentConfig {
        run: RunSpec::Attack {
            strategy: args.strategy.clone(),
            ebits: args.ebits,
            resource: Some(resource.clone()),
        },
        n: args.n,
        geometry: qpvlab_core::harness::canonical_cheat_geometry(),
        trials: args.trials,
        seed: args.seed,
        output: None,
    };
    let estimate = monte_carlo(&config)?;
    let row = EstimateRow::build(args.n, args.ebits, &args.strategy, &resource, &estimate)?;
    row.check_against_bound()?;
    println!("{}", serde_json::to_string_pretty(&row)?);
    Ok(())
}

fn run_sweep(args: SweepArgs) -> CliResult {
    let cells: Vec<SweepCell> = args
        .ns
        .iter()
        .flat_map(|&n| args.ebits.iter().map(move |&ebits| SweepCell { n, ebits }))
        .filter(|cell| cell.ebits <= cell.n)
        .collect();
    match &args.out {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path)?);
            sweep(&cells, &args.strategy, args.trials, args.seed, &mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            sweep(&cells, &args.strategy, args.trials, args.seed, &mut lock)?;
        }
    }
    Ok(())
}
