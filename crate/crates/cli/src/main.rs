//! `autosim`: run missions, train personalities, verify ledgers, replay
//! and export metrics.
//!
//! Exit codes: 0 success, 1 missing/unreadable input (message names the
//! path), 2 scenario validation failure, 3 ledger verification failure.

use anyhow::Context;
use autosim_core::ensemble::init_params;
use autosim_core::episode::run_episode;
use autosim_core::ledger::{decode_dump, derive_key, verify_chain, ChainSet, KeyRing};
use autosim_core::replay::{
    lines_from_trajectory, metrics_csv, read_replay, render_text, write_replay, ReplayError,
};
use autosim_core::rng::derive_seed;
use autosim_core::scenario::{Scenario, ScenarioError};
use autosim_core::train::{curve_to_csv, load_personality, save_personality, train};
use clap::{Args, Parser, Subcommand};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "autosim", version, about = "Deterministic multi-asset autonomy simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission episode and write its logs.
    Run(RunArgs),
    /// Train a mission personality with policy-gradient RL.
    Train(TrainArgs),
    /// Print a recorded replay log.
    Replay(ReplayArgs),
    /// Re-verify every hash chain in a ledger dump.
    VerifyLedger(VerifyArgs),
    /// Export per-tick metrics from a replay log as CSV.
    ExportMetrics(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Episode seed; all randomness derives from it.
    #[arg(long)]
    seed: u64,
    /// Trained personality checkpoint; omitted, parameters are initialized
    /// from the seed.
    #[arg(long)]
    personality: Option<PathBuf>,
    /// Output directory for replay.jsonl, audit.jsonl, metrics.csv,
    /// utility.json and ledger.bin.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the mission's max_ticks.
    #[arg(long)]
    ticks: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Master seed for the whole training run.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Replay log produced by `run`.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    from: Option<u64>,
    #[arg(long)]
    to: Option<u64>,
    #[arg(long, default_value = "text", value_parser = ["text", "csv"])]
    format: String,
}

#[derive(Args)]
struct VerifyArgs {
    /// Ledger dump produced by `run`.
    #[arg(long)]
    ledger: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    log: PathBuf,
    /// Destination CSV path.
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    from: Option<u64>,
    #[arg(long)]
    to: Option<u64>,
}

fn init_logging() {
    let level = std::env::var("AUTOSIM_LOG_LEVEL").unwrap_or_else(|_| "warn".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .init();
}

fn load_scenario(path: &Path) -> Result<Scenario, ExitCode> {
    if !path.exists() {
        eprintln!("scenario file not found: {}", path.display());
        return Err(ExitCode::from(1));
    }
    match Scenario::load(path) {
        Ok(s) => Ok(s),
        Err(ScenarioError::Io(e)) => {
            eprintln!("cannot read {}: {e}", path.display());
            Err(ExitCode::from(1))
        }
        Err(e) => {
            eprintln!("{e}");
            Err(ExitCode::from(2))
        }
    }
}

fn tick_range(from: Option<u64>, to: Option<u64>) -> Option<(u64, u64)> {
    match (from, to) {
        (None, None) => None,
        (lo, hi) => Some((lo.unwrap_or(0), hi.unwrap_or(u64::MAX))),
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, anyhow::Error> {
    let mut scenario = match load_scenario(&args.scenario) {
        Ok(s) => s,
        Err(code) => return Ok(code),
    };
    if let Some(ticks) = args.ticks {
        scenario.mission.max_ticks = ticks;
        if let Err(e) = scenario.validate() {
            eprintln!("{e}");
            return Ok(ExitCode::from(2));
        }
    }
    let params = match &args.personality {
        Some(path) => {
            if !path.exists() {
                eprintln!("personality file not found: {}", path.display());
                return Ok(ExitCode::from(1));
            }
            let p = load_personality(path)
                .with_context(|| format!("loading personality {}", path.display()))?;
            log::info!(
                "loaded personality `{}` (mission type `{}`)",
                p.id,
                p.mission_type
            );
            p.params
        }
        None => init_params(
            derive_seed(args.seed, "init"),
            scenario.ensembler_dims(),
            scenario.ensembler.init_scale,
            scenario.ensembler.delta_max,
        ),
    };

    let result = run_episode(&scenario, &params, args.seed)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let mut replay_file = std::fs::File::create(args.out.join("replay.jsonl"))?;
    write_replay(&mut replay_file, &result.trajectory)?;

    let mut audit = String::new();
    for entry in &result.audit {
        audit.push_str(&serde_json::to_string(entry)?);
        audit.push('\n');
    }
    std::fs::write(args.out.join(&scenario.audit_log), audit)?;

    let lines = lines_from_trajectory(&result.trajectory);
    std::fs::write(args.out.join("metrics.csv"), metrics_csv(&lines, None))?;

    let summary = serde_json::json!({
        "utility": result.utility,
        "stats": result.trajectory.stats,
        "termination": result.trajectory.termination,
    });
    std::fs::write(
        args.out.join("utility.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;

    // Dump the converged replica of the first surviving asset (first asset
    // overall if none survived) together with the verification keys.
    let keyring: KeyRing = scenario
        .assets
        .iter()
        .map(|a| (a.id.clone(), derive_key(scenario.ledger.key_seed, &a.id)))
        .collect();
    let replica = result
        .final_world
        .living_assets()
        .map(|a| a.id.clone())
        .next()
        .or_else(|| result.chains.keys().next().cloned());
    if let Some(owner) = replica {
        let dump = autosim_core::ledger::encode_dump(&result.chains[&owner], &keyring);
        std::fs::write(args.out.join("ledger.bin"), dump)?;
    }

    println!(
        "episode complete: {} ticks, utility {:.4} ({:?})",
        result.trajectory.stats.ticks_used,
        result.utility.total,
        result.trajectory.termination
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode, anyhow::Error> {
    let scenario = match load_scenario(&args.scenario) {
        Ok(s) => s,
        Err(code) => return Ok(code),
    };
    let mut config = scenario.training;
    config.master_seed = args.seed;
    if let Some(v) = args.iterations {
        config.iterations = v;
    }
    if let Some(v) = args.episodes {
        config.episodes_per_iteration = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.sigma {
        config.sigma = v;
    }
    if let Some(v) = args.epsilon {
        config.epsilon = v;
    }

    let (personality, curve) = train(&scenario, &config)?;
    std::fs::create_dir_all(&args.out)?;
    save_personality(&personality, &args.out.join("personality.bin"))?;
    std::fs::write(args.out.join("curve.csv"), curve_to_csv(&curve))?;
    println!(
        "trained `{}`: {} iterations, final recorded utility {:.4}",
        personality.id,
        curve.len(),
        personality.meta.final_mean_utility
    );
    Ok(ExitCode::SUCCESS)
}

fn read_log(path: &Path) -> Result<Vec<autosim_core::replay::ReplayLine>, ExitCode> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("cannot open {}: {e}", path.display());
            return Err(ExitCode::from(1));
        }
    };
    match read_replay(BufReader::new(file)) {
        Ok(lines) => Ok(lines),
        Err(ReplayError::Parse { line, source }) => {
            eprintln!("{}: parse error at line {line}: {source}", path.display());
            Err(ExitCode::from(1))
        }
        Err(ReplayError::Io(e)) => {
            eprintln!("cannot read {}: {e}", path.display());
            Err(ExitCode::from(1))
        }
    }
}

fn cmd_replay(args: ReplayArgs) -> Result<ExitCode, anyhow::Error> {
    let lines = match read_log(&args.log) {
        Ok(l) => l,
        Err(code) => return Ok(code),
    };
    let range = tick_range(args.from, args.to);
    let rendered = match args.format.as_str() {
        "csv" => metrics_csv(&lines, range),
        _ => render_text(&lines, range),
    };
    print!("{rendered}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify_ledger(args: VerifyArgs) -> Result<ExitCode, anyhow::Error> {
    let bytes = match std::fs::read(&args.ledger) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("cannot read {}: {e}", args.ledger.display());
            return Ok(ExitCode::from(1));
        }
    };
    let (chains, keyring): (ChainSet, KeyRing) = match decode_dump(&bytes) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{}: malformed ledger dump ({e})", args.ledger.display());
            return Ok(ExitCode::from(3));
        }
    };
    let mut failures = 0;
    for author in chains.authors() {
        let key = keyring.get(author).copied().unwrap_or([0u8; 32]);
        match verify_chain(chains.chain(author), &key) {
            Ok(()) => println!(
                "{author}: ok ({} blocks)",
                chains.chain(author).len()
            ),
            Err(fault) => {
                println!("{author}: INVALID at seq {} ({:?})", fault.seq, fault.reason);
                failures += 1;
            }
        }
    }
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn cmd_export_metrics(args: ExportArgs) -> Result<ExitCode, anyhow::Error> {
    let lines = match read_log(&args.log) {
        Ok(l) => l,
        Err(code) => return Ok(code),
    };
    let csv = metrics_csv(&lines, tick_range(args.from, args.to));
    std::fs::write(&args.csv, csv).with_context(|| format!("writing {}", args.csv.display()))?;
    println!("wrote {}", args.csv.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Train(args) => cmd_train(args),
        Command::Replay(args) => cmd_replay(args),
        Command::VerifyLedger(args) => cmd_verify_ledger(args),
        Command::ExportMetrics(args) => cmd_export_metrics(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
