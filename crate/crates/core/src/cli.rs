//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad arguments or configuration, 3 scenario
//! errors, 4 chunking demo mismatch.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::memory::{EpisodeStore, MemoryConfig};
use crate::policy::PolicySpec;
use crate::scenario::metrics::{metrics_line, render_comparison, render_table};
use crate::scenario::pipeline::{parse_order, Stage};
use crate::scenario::runner::{run_gwt, run_pipeline_baseline, MemoryMode, RunError, RunOptions, RunResult};
use crate::scenario::{bundled, resolve, ChainSpec, Scenario, ScenarioError};
use crate::trace::to_jsonl;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SCENARIO: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "gwt", version, about = "Selection-broadcast cycle runtime and grid-world harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and print its metrics.
    Run(RunArgs),
    /// Run the workspace engine and the pipeline baseline side by side.
    Compare(CompareArgs),
    /// Demonstrate chunk recall on the abstract chain.
    Fig4(Fig4Args),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Scenario file or bundled scenario name.
    #[arg(long)]
    scenario: String,
    /// `gwt`, `pipeline`, or `pipeline:<stage,stage,...>`.
    #[arg(long, default_value = "gwt")]
    engine: String,
    /// `max`, `threshold:<θ>` or `recency:<λ>`.
    #[arg(long, default_value = "recency:0.5")]
    policy: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_cycles: Option<u64>,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    memory_in: Option<PathBuf>,
    #[arg(long)]
    memory_out: Option<PathBuf>,
    #[arg(long)]
    no_memory: bool,
}

#[derive(Debug, clap::Args)]
struct CompareArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value = "recency:0.5")]
    policy: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Stage order of the baseline.
    #[arg(long, default_value = "voice,vision,detector,planner,motor")]
    pipeline_order: String,
    #[arg(long)]
    no_memory: bool,
}

#[derive(Debug, clap::Args)]
struct Fig4Args {
    /// Maximum items per recalled chunk.
    #[arg(long, default_value_t = 4)]
    chunk_cap: usize,
    /// Chain length.
    #[arg(long, default_value_t = 3)]
    length: usize,
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Run both passes without the memory module.
    #[arg(long)]
    no_memory: bool,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure {
            code: EXIT_SCENARIO,
            message: e.to_string(),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        let code = match e {
            RunError::Unsupported(_) => EXIT_SCENARIO,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

pub fn main() -> i32 {
    let args: Vec<String> = std::env::args().collect();
    run(&args, &mut std::io::stdout(), &mut std::io::stderr())
}

/// Parses `args` (including the program name) and executes the command.
pub fn run(args: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::Fig4(a) => cmd_fig4(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "gwt: {}", f.message);
            f.code
        }
    }
}

fn parse_policy(s: &str) -> Result<PolicySpec, Failure> {
    s.parse()
        .map_err(|e: crate::policy::PolicyError| Failure::config(format!("--policy: {e}")))
}

fn load_store(path: &Path) -> Result<EpisodeStore, Failure> {
    EpisodeStore::load(path).map_err(|e| Failure::config(format!("--memory-in {}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}

fn write_trace(path: &Path, result: &RunResult) -> Result<(), Failure> {
    let mut text = to_jsonl(&result.trace);
    text.push_str(&metrics_line(&result.metrics));
    write_file(path, &text)
}

enum EngineChoice {
    Gwt,
    Pipeline(Vec<Stage>),
}

fn parse_engine(s: &str) -> Result<EngineChoice, Failure> {
    match s {
        "gwt" => Ok(EngineChoice::Gwt),
        "pipeline" => Ok(EngineChoice::Pipeline(Stage::DEFAULT_ORDER.to_vec())),
        _ => match s.strip_prefix("pipeline:") {
            Some(order) => parse_order(order)
                .map(EngineChoice::Pipeline)
                .map_err(|e| Failure::config(format!("--engine: {e}"))),
            None => Err(Failure::config(format!(
                "--engine: unknown engine {s:?} (expected gwt or pipeline[:order])"
            ))),
        },
    }
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let policy = parse_policy(&a.policy)?;
    let engine = parse_engine(&a.engine)?;
    if a.no_memory && (a.memory_in.is_some() || a.memory_out.is_some()) {
        return Err(Failure::config("--no-memory conflicts with --memory-in/--memory-out"));
    }
    let store = a.memory_in.as_deref().map(load_store).transpose()?;
    let scenario = resolve(&a.scenario)?;
    let result = match engine {
        EngineChoice::Gwt => {
            let memory = if a.no_memory {
                MemoryMode::Disabled
            } else {
                MemoryMode::Enabled {
                    config: store.as_ref().map_or_else(MemoryConfig::default, |s| *s.config()),
                    store,
                }
            };
            let opts = RunOptions {
                policy,
                seed: a.seed,
                max_cycles: a.max_cycles,
                memory,
                ..RunOptions::default()
            };
            run_gwt(&scenario, &opts)?
        }
        EngineChoice::Pipeline(order) => run_pipeline_baseline(&scenario, &order, a.seed, a.max_cycles)?,
    };
    if let Some(path) = &a.trace_out {
        write_trace(path, &result)?;
    }
    if let (Some(path), Some(store)) = (&a.memory_out, &result.store) {
        store
            .save(path)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    }
    let _ = write!(out, "{}", render_table(&[(a.engine.clone(), result.metrics)]));
    Ok(())
}

fn cmd_compare(a: CompareArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let policy = parse_policy(&a.policy)?;
    let order = parse_order(&a.pipeline_order).map_err(|e| Failure::config(format!("--pipeline-order: {e}")))?;
    let scenario = resolve(&a.scenario)?;
    let opts = RunOptions {
        policy,
        seed: a.seed,
        memory: if a.no_memory {
            MemoryMode::Disabled
        } else {
            MemoryMode::default()
        },
        ..RunOptions::default()
    };
    let gwt = run_gwt(&scenario, &opts)?;
    let pipe = run_pipeline_baseline(&scenario, &order, a.seed, None)?;
    let _ = write!(out, "{}", render_comparison(("gwt", &gwt.metrics), ("pipeline", &pipe.metrics)));
    Ok(())
}

fn bare_opts() -> RunOptions {
    RunOptions {
        memory: MemoryMode::Disabled,
        ..RunOptions::default()
    }
}

/// Cycles the chain takes on replay when every recall succeeds.
pub fn expected_replay_cycles(length: usize, chunk_cap: usize) -> u64 {
    1 + (length as u64 - 1).div_ceil(chunk_cap as u64)
}

fn cmd_fig4(a: Fig4Args, out: &mut dyn Write) -> Result<(), Failure> {
    if a.chunk_cap == 0 {
        return Err(Failure::config("--chunk-cap must be at least 1"));
    }
    let mut scenario: Scenario = bundled("fig4-abstract").expect("bundled fixture")?;
    let chain = scenario.chain.as_mut().expect("chain fixture");
    *chain = ChainSpec {
        length: a.length,
        ..chain.clone()
    };
    scenario.max_cycles = scenario.max_cycles.max(a.length as u64 * 2 + 2);
    scenario.validate()?;
    let config = MemoryConfig {
        max_chunk: a.chunk_cap,
        ..MemoryConfig::default()
    };

    if a.no_memory {
        let first = run_gwt(&scenario, &bare_opts())?;
        let replay = run_gwt(&scenario, &bare_opts())?;
        if let Some(path) = &a.trace_out {
            write_trace(path, &replay)?;
        }
        let (c1, c2) = (first.metrics.cycles, replay.metrics.cycles);
        let _ = writeln!(out, "first run: {c1} cycles");
        let _ = writeln!(out, "replay without memory: {c2} cycles");
        let _ = writeln!(out, "{c1} → {c2}, saved {}", c1 as i64 - c2 as i64);
        let len = a.length as u64;
        if c1 != len || c2 != len {
            return Err(Failure {
                code: EXIT_MISMATCH,
                message: format!("expected {len} → {len} without memory, got {c1} → {c2}"),
            });
        }
        return Ok(());
    }

    let first = run_gwt(
        &scenario,
        &RunOptions {
            memory: MemoryMode::Enabled { store: None, config },
            ..RunOptions::default()
        },
    )?;
    let dir = tempfile::tempdir().map_err(|e| Failure::config(format!("temporary directory: {e}")))?;
    let snapshot = dir.path().join("memory.json");
    first
        .store
        .as_ref()
        .expect("memory enabled")
        .save(&snapshot)
        .map_err(|e| Failure::config(e.to_string()))?;
    let restored = EpisodeStore::load(&snapshot).map_err(|e| Failure::config(e.to_string()))?;
    let replay = run_gwt(
        &scenario,
        &RunOptions {
            memory: MemoryMode::Enabled {
                store: Some(restored),
                config,
            },
            ..RunOptions::default()
        },
    )?;
    let bare = run_gwt(&scenario, &bare_opts())?;
    if let Some(path) = &a.trace_out {
        write_trace(path, &replay)?;
    }

    let (c1, c2, c0) = (first.metrics.cycles, replay.metrics.cycles, bare.metrics.cycles);
    let saved = c1 as i64 - c2 as i64;
    let _ = writeln!(out, "first run: {c1} cycles");
    let _ = writeln!(out, "replay with memory: {c2} cycles");
    let _ = writeln!(out, "replay without memory: {c0} cycles");
    let _ = writeln!(out, "{c1} → {c2}, saved {saved}");

    let want = expected_replay_cycles(a.length, a.chunk_cap);
    let len = a.length as u64;
    if c1 != len || c2 != want || c0 != len {
        return Err(Failure {
            code: EXIT_MISMATCH,
            message: format!(
                "expected {len} → {want} with memory and {len} without, got {c1} → {c2} and {c0}"
            ),
        });
    }
    Ok(())
}
