use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use lwr_net::{build_scenario, initialize, ConfigError, NetworkSpec, ScenarioError, ScenarioId, ScenarioParams, SimError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod output;

use output::{write_snapshot, RunWriter};

#[derive(Parser)]
#[command(name = "lwr-net", version, about = "Exact wave-front tracking on road networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation to its horizon and write CSV outputs.
    Run(RunArgs),
    /// Check a network file or scenario parameters without running.
    Validate(Source),
    /// Run several jittered copies of a network concurrently.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct Source {
    /// Built-in scenario: appendix_a, appendix_b or traffic_light_swap.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    scenario: Option<String>,
    /// Network description in JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Flux of the incoming wave, as a fraction of fmax.
    #[arg(long)]
    rho1_flux: Option<f64>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    /// Abort with exit status 3 after this many events.
    #[arg(long)]
    event_limit: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated times at which to write the full state.
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Vec<f64>,
    /// Also write the full state after every event.
    #[arg(long)]
    snapshot_every_event: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Number of runs; run k jitters the initial densities with seed k.
    #[arg(long, default_value_t = 4)]
    seeds: u64,
    /// Largest density perturbation.
    #[arg(long, default_value_t = 0.01)]
    jitter: f64,
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Runaway(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runaway(_) => 3,
            Failure::Other(_) => 1,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Runaway(e) | Failure::Other(e) => e,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Runaway { .. } => Failure::Runaway(e.into()),
            SimError::Config(_) => Failure::Config(e.into()),
            other => Failure::Other(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load(source: &Source) -> Result<NetworkSpec, Failure> {
    let params = ScenarioParams {
        rho1_flux: source.rho1_flux,
        alpha1: source.alpha1,
        alpha2: source.alpha2,
        beta1: source.beta1,
        beta2: source.beta2,
        delta: source.delta,
        horizon: source.horizon,
        ..Default::default()
    };
    let id = match (&source.scenario, &source.config) {
        (Some(name), _) => ScenarioId::parse(name).ok_or_else(|| {
            Failure::Config(anyhow!("unknown scenario {name:?} (expected appendix_a, appendix_b or traffic_light_swap)"))
        })?,
        (None, Some(path)) => ScenarioId::Custom(path.clone()),
        (None, None) => return Err(Failure::Config(anyhow!("either --scenario or --config is required"))),
    };
    build_scenario(&id, &params).map_err(|e| {
        let e = match (&e, &source.config) {
            (ScenarioError::Config(ConfigError::Invalid { .. } | ConfigError::Syntax(_)), Some(path)) => {
                anyhow!("{}: {e}", path.display())
            }
            _ => anyhow!(e),
        };
        Failure::Config(e)
    })
}

fn prepare(dir: &Path, spec: &NetworkSpec) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join("spec_normalized.json");
    fs::write(&path, spec.to_json()).with_context(|| format!("cannot write {}", path.display()))
}

/// Runs `spec` to its horizon, writing every output into `dir`.
fn simulate(spec: &NetworkSpec, dir: &Path, limit: Option<u64>, times: &[f64], every_event: bool) -> Result<u64, Failure> {
    prepare(dir, spec)?;
    let mut state = initialize(spec)?;
    if let Some(limit) = limit {
        state = state.with_event_limit(limit);
    }
    let horizon = spec.tracking.horizon;
    let mut writer = RunWriter::create(dir, spec, every_event)?;
    let mut stops: Vec<f64> = times.iter().copied().filter(|&t| (0.0..=horizon).contains(&t)).collect();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    for &t in &stops {
        state.run_until(t, &mut [&mut writer])?;
        writer.check()?;
        write_snapshot(&dir.join(format!("snapshot_{t}.csv")), spec, &state.snapshot_now())?;
    }
    state.run_until(horizon, &mut [&mut writer])?;
    writer.finish(&state)?;
    Ok(state.event_count())
}

fn jittered(spec: &NetworkSpec, seed: u64, jitter: f64) -> Result<NetworkSpec, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut doc = spec.to_doc();
    for road in &mut doc.roads {
        for (_, rho) in &mut road.initial {
            *rho = (*rho + rng.gen_range(-jitter..=jitter)).clamp(0.0, 1.0);
        }
    }
    NetworkSpec::from_doc(&doc).map_err(|e| Failure::Config(e.into()))
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let spec = load(&args.source)?;
    if !(args.jitter >= 0.0 && args.jitter.is_finite()) {
        return Err(Failure::Config(anyhow!("--jitter must be a finite non-negative number")));
    }
    let specs = (0..args.seeds).map(|k| jittered(&spec, k, args.jitter)).collect::<Result<Vec<_>, _>>()?;
    let results: Vec<Result<u64, Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let dir = args.out.join(format!("seed_{k}"));
                let limit = args.source.event_limit;
                scope.spawn(move || simulate(s, &dir, limit, &[], false))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    let mut summary = csv::Writer::from_path(args.out.join("sweep.csv")).context("cannot write sweep.csv")?;
    summary.write_record(["seed", "events", "status"]).context("cannot write sweep.csv")?;
    let mut worst: Option<Failure> = None;
    for (k, result) in results.into_iter().enumerate() {
        let (events, status) = match &result {
            Ok(n) => (n.to_string(), "ok".to_string()),
            Err(f) => (String::new(), format!("exit {}", f.code())),
        };
        summary.write_record([k.to_string(), events, status]).context("cannot write sweep.csv")?;
        if let Err(f) = result {
            eprintln!("seed {k}: {:#}", f.error());
            if worst.as_ref().is_none_or(|w| f.code() > w.code()) {
                worst = Some(f);
            }
        }
    }
    summary.flush().context("cannot write sweep.csv")?;
    worst.map_or(Ok(()), Err)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate(source) => {
            let spec = load(&source)?;
            for w in &spec.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "ok: {} roads, {} junctions, delta {}, horizon {}",
                spec.roads.len(),
                spec.junctions.len(),
                spec.tracking.delta,
                spec.tracking.horizon
            );
            Ok(())
        }
        Command::Run(args) => {
            let spec = load(&args.source)?;
            let events = simulate(&spec, &args.out, args.source.event_limit, &args.snapshot_times, args.snapshot_every_event)?;
            println!("{events} events up to t = {}; outputs in {}", spec.tracking.horizon, args.out.display());
            Ok(())
        }
        Command::Sweep(args) => sweep(&args),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
