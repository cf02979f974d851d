//! Command-line front end: loads a TOML config (or the built-in default),
//! dispatches to race-only, probability, single-session, batch, and
//! liquidity runs, and writes all artifacts plus a run manifest under one
//! output directory.

use anyhow::Context;
use bbe_core::config::{load_config, ConfigError, FileConfig};
use bbe_core::datagen::{
    rebase, write_market_stream, write_rebased, write_sentiment, write_trades, write_trajectories, DEFAULT_EPOCH_MS,
};
use bbe_core::orchestrator::{min_bettors, nonempty_market_prob, run_batch, run_session, SessionRecord};
use bbe_core::prediction::{estimate_probs, BeliefProfile};
use bbe_core::race::{run_race, RaceRecord, RaceState, RaceStreams};
use bbe_core::seeds::SeedMix;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bbe", version, about = "Agent-based in-play betting exchange simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; the built-in six-horse default is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; fully determines all outputs for a fixed config.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory (falls back to $BBE_OUT, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Which artifact families to write.
    #[arg(long, value_enum, default_value_t = Format::All)]
    format: Format,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
    All,
}

impl Format {
    fn csv(self) -> bool {
        self != Format::Jsonl
    }

    fn jsonl(self) -> bool {
        self != Format::Csv
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the race alone and write trajectory and rebased CSVs.
    Race {
        #[command(flatten)]
        common: Common,
    },
    /// Estimate win probabilities from a race snapshot.
    Probs {
        #[command(flatten)]
        common: Common,
        /// Dry runs behind the estimate.
        #[arg(long, default_value_t = 1000)]
        dryruns: u32,
        /// Advance the race this far before estimating.
        #[arg(long, default_value_t = 0.0)]
        at_seconds: f64,
    },
    /// Run one full betting session and write every artifact.
    Session {
        #[command(flatten)]
        common: Common,
        /// Unix-epoch milliseconds that simulated time 0 maps to.
        #[arg(long, default_value_t = DEFAULT_EPOCH_MS)]
        epoch_ms: u64,
    },
    /// Run many independent sessions in parallel.
    Batch {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        count: u64,
        /// Worker threads (0 = all cores); never affects the outputs.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long, default_value_t = DEFAULT_EPOCH_MS)]
        epoch_ms: u64,
    },
    /// Print the minimum-population arithmetic for a field size.
    Liquidity {
        #[arg(long)]
        runners: u64,
        /// Largest grid depth to tabulate.
        #[arg(long, default_value_t = 5)]
        depth: u64,
    },
}

/// Config mistakes exit 2; failures during a valid run exit 1.
enum CliError {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn load_or_default(path: &Option<PathBuf>) -> Result<FileConfig, CliError> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => Ok(FileConfig::standard()),
    }
}

fn resolve_out(out: &Option<PathBuf>) -> PathBuf {
    out.clone()
        .or_else(|| std::env::var_os("BBE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Serialize)]
struct ManifestEntry {
    subcommand: String,
    config_digest: String,
    seed: u64,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct BatchLine {
    index: u64,
    seed: u64,
    outputs: Vec<String>,
}

/// Collects relative output paths as files are written and finishes with a
/// manifest; nothing is ever written outside `dir`.
struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    fn create(dir: PathBuf) -> anyhow::Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(OutDir { dir, written: Vec::new() })
    }

    fn write_with(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut BufWriter<fs::File>) -> anyhow::Result<()>,
    ) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut writer = BufWriter::new(file);
        fill(&mut writer)?;
        writer.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, subcommand: &str, digest: String, seed: u64) -> anyhow::Result<()> {
        self.written.sort();
        let entry = ManifestEntry {
            subcommand: subcommand.to_string(),
            config_digest: digest,
            seed,
            outputs: self.written.clone(),
        };
        let path = self.dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec_pretty(&entry)?)?;
        Ok(())
    }
}

fn write_race_files(out: &mut OutDir, record: &RaceRecord, format: Format) -> anyhow::Result<()> {
    if format.csv() {
        out.write_with("trajectories.csv", |w| Ok(write_trajectories(record, w)?))?;
        let series = rebase(record)?;
        out.write_with("rebased.csv", |w| Ok(write_rebased(&series, &record.competitor_names, w)?))?;
    }
    if format.jsonl() {
        out.write_with("race.jsonl", |w| {
            serde_json::to_writer(&mut *w, record)?;
            writeln!(w)?;
            Ok(())
        })?;
    }
    Ok(())
}

fn write_session_files(out: &mut OutDir, record: &SessionRecord, format: Format, epoch_ms: u64) -> anyhow::Result<()> {
    write_race_files(out, &record.race, format)?;
    let names = &record.race.competitor_names;
    if format.csv() {
        out.write_with("sentiment.csv", |w| Ok(write_sentiment(&record.sentiment, names, w)?))?;
        out.write_with("trades.csv", |w| Ok(write_trades(&record.journal, names.len(), w)?))?;
    }
    if format.jsonl() {
        out.write_with("stream.jsonl", |w| Ok(write_market_stream(&record.journal, names.len(), epoch_ms, w)?))?;
        out.write_with("session.json", |w| {
            serde_json::to_writer(&mut *w, record)?;
            writeln!(w)?;
            Ok(())
        })?;
    }
    Ok(())
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Race { common } => {
            let file = load_or_default(&common.config)?;
            let (race, field) = file.race_setup()?;
            let mut out = OutDir::create(resolve_out(&common.out)).map_err(CliError::Runtime)?;
            let run = || -> anyhow::Result<()> {
                let mut streams = RaceStreams::derive(common.seed, &race.race_id, &field);
                let record = run_race(&race, &field, &mut streams)?;
                write_race_files(&mut out, &record, common.format)?;
                out.finish("race", file.digest(), common.seed)
            };
            run().map_err(CliError::Runtime)
        }
        Command::Probs { common, dryruns, at_seconds } => {
            let file = load_or_default(&common.config)?;
            let (race, field) = file.race_setup()?;
            if !(at_seconds.is_finite() && at_seconds >= 0.0) {
                return Err(CliError::Config(format!("--at-seconds must be >= 0, got {at_seconds}")));
            }
            let mut out = OutDir::create(resolve_out(&common.out)).map_err(CliError::Runtime)?;
            let run = || -> anyhow::Result<()> {
                let mut streams = RaceStreams::derive(common.seed, &race.race_id, &field);
                let mut state = RaceState::start(&race, &field);
                while state.seconds(&race) < at_seconds && !state.race_over() {
                    bbe_core::race::advance_tick(&mut state, &race, &field, &mut streams)?;
                }
                let mut rng = SeedMix::new(common.seed).with_str("probs").rng();
                let estimate = estimate_probs(&state, &race, &field, &BeliefProfile::exact(dryruns), &mut rng)?;
                let json = serde_json::to_string(&estimate)?;
                println!("{json}");
                out.write_with("probs.json", |w| {
                    writeln!(w, "{json}")?;
                    Ok(())
                })?;
                out.finish("probs", file.digest(), common.seed)
            };
            run().map_err(CliError::Runtime)
        }
        Command::Session { common, epoch_ms } => {
            let file = load_or_default(&common.config)?;
            let config = file.to_session(common.seed)?;
            let mut out = OutDir::create(resolve_out(&common.out)).map_err(CliError::Runtime)?;
            let run = || -> anyhow::Result<()> {
                let record = run_session(&config)?;
                write_session_files(&mut out, &record, common.format, epoch_ms)?;
                out.finish("session", file.digest(), common.seed)
            };
            run().map_err(CliError::Runtime)
        }
        Command::Batch { common, count, workers, epoch_ms } => {
            let file = load_or_default(&common.config)?;
            let template = file.to_session(common.seed)?;
            let root = resolve_out(&common.out);
            let mut out = OutDir::create(root.clone()).map_err(CliError::Runtime)?;
            let run = || -> anyhow::Result<()> {
                let format = common.format;
                let results = run_batch(&template, count, effective_workers(workers), move |index, record| {
                    let dir = root.join(format!("session-{index:06}"));
                    let mut session_out = OutDir::create(dir)
                        .map_err(|e| bbe_core::orchestrator::OrchestratorError::Sink(e.to_string()))?;
                    write_session_files(&mut session_out, &record, format, epoch_ms)
                        .map_err(|e| bbe_core::orchestrator::OrchestratorError::Sink(e.to_string()))?;
                    session_out.written.sort();
                    Ok((record.seed, session_out.written))
                })?;
                out.write_with("sessions.jsonl", |w| {
                    for (index, result) in results.into_iter().enumerate() {
                        let (seed, outputs) = result
                            .with_context(|| format!("session {index} failed"))?;
                        let line = BatchLine {
                            index: index as u64,
                            seed,
                            outputs: outputs.iter().map(|f| format!("session-{index:06}/{f}")).collect(),
                        };
                        serde_json::to_writer(&mut *w, &line)?;
                        writeln!(w)?;
                    }
                    Ok(())
                })?;
                out.finish("batch", file.digest(), common.seed)
            };
            run().map_err(CliError::Runtime)
        }
        Command::Liquidity { runners, depth } => {
            if runners == 0 {
                return Err(CliError::Config("--runners must be at least 1".into()));
            }
            let p = nonempty_market_prob(runners);
            println!("P(nonempty market with {runners} runners, one-bet bettors) = {p:.6}");
            println!();
            println!("depth  min_bettors");
            for d in 1..=depth.max(1) {
                println!("{d:>5}  {:>11}", min_bettors(runners, d));
            }
            Ok(())
        }
    }
}

fn effective_workers(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism().map_or(4, |n| n.get())
    }
}
