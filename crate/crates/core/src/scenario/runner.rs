use thiserror::Error;

use super::metrics::{metrics, MetricsReport};
use super::pipeline::{run_pipeline, Stage};
use super::specialists::{priority, HumanDetector, Motor, RoutePlanner, Vision, VoiceParser, MEMORY};
use super::world::{GridEnv, GridWorld};
use super::{Scenario, ScenarioKind, StopSpec};
use crate::engine::{
    Engine, EngineConfig, EngineError, Environment, ExternalEvent, NullWorld, Polling, RunOutcome, RunStatus,
    Stop,
};
use crate::memory::{EpisodeStore, EpisodicMemory, MemoryConfig, MemoryError};
use crate::policy::PolicySpec;
use crate::trace::TraceEvent;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MemoryMode {
    Disabled,
    /// Starts from `store` when given, otherwise from an empty store.
    Enabled {
        store: Option<EpisodeStore>,
        config: MemoryConfig,
    },
}

impl Default for MemoryMode {
    fn default() -> Self {
        MemoryMode::Enabled {
            store: None,
            config: MemoryConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub policy: PolicySpec,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    /// Overrides the scenario cycle cap.
    pub max_cycles: Option<u64>,
    pub polling: Polling,
    pub memory: MemoryMode,
    /// Overrides the scenario stop condition.
    pub stop: Option<StopSpec>,
    pub extra_events: Vec<ExternalEvent>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Vec<TraceEvent>,
    pub metrics: MetricsReport,
    pub status: RunStatus,
    pub store: Option<EpisodeStore>,
    pub world: Option<GridWorld>,
}

fn memory_module(mode: &MemoryMode) -> Option<EpisodicMemory> {
    match mode {
        MemoryMode::Disabled => None,
        MemoryMode::Enabled { store, config } => {
            let mut s = store.clone().unwrap_or_else(|| EpisodeStore::new(*config));
            s.set_config(*config);
            Some(EpisodicMemory::new(MEMORY, s))
        }
    }
}

fn finish<E: Environment>(engine: &Engine<E>, out: RunOutcome, world: Option<GridWorld>) -> RunResult {
    let store = engine
        .module::<EpisodicMemory>(MEMORY)
        .map(|m| m.store().clone());
    RunResult {
        metrics: metrics(&out.trace),
        trace: out.trace,
        status: out.status,
        store,
        world,
    }
}

/// Runs a scenario on the workspace engine.
pub fn run_gwt(scenario: &Scenario, opts: &RunOptions) -> Result<RunResult, RunError> {
    let seed = opts.seed.unwrap_or(scenario.seed);
    let max_cycles = opts.max_cycles.unwrap_or(scenario.max_cycles);
    let config = EngineConfig {
        policy: opts.policy,
        seed,
        max_cycles,
        polling: opts.polling,
        ..EngineConfig::default()
    };
    let stop_spec = opts.stop.unwrap_or(scenario.stop);
    let mut events = scenario.events();
    events.extend(opts.extra_events.iter().cloned());
    let last_release = events.iter().map(ExternalEvent::release_cycle).max();

    match scenario.kind {
        ScenarioKind::Grid => {
            let world = scenario.world.clone().expect("validated grid scenario");
            let sal = scenario.saliences;
            let mut engine = Engine::new(config, GridEnv::new(world.clone()));
            let cast: Vec<Box<dyn crate::engine::Specialist<GridEnv>>> = vec![
                Box::new(HumanDetector::new(sal)),
                Box::new(RoutePlanner::new(sal, world.goal)),
                Box::new(VoiceParser::new(sal)),
                Box::new(Vision::new(sal, seed)),
                Box::new(Motor::new(world.goal)),
            ];
            for m in cast {
                let p = priority(m.name());
                engine.register_module(m, p)?;
            }
            if let Some(m) = memory_module(&opts.memory) {
                engine.register_module(Box::new(m), priority(MEMORY))?;
            }
            for e in events {
                engine.inject_event(e);
            }
            let stop = match stop_spec {
                StopSpec::AtGoal => Stop::When(Box::new(move |state, env: &GridEnv| {
                    env.world.robot == env.world.goal && last_release.is_none_or(|r| state.cycle > r)
                })),
                StopSpec::MaxCycles => Stop::Cycles(max_cycles),
                StopSpec::ChainEnd => {
                    return Err(RunError::Unsupported("chain_end needs a chain scenario".into()))
                }
            };
            let out = engine.run_until(stop);
            let world = engine.env().world.clone();
            Ok(finish(&engine, out, Some(world)))
        }
        ScenarioKind::Chain => {
            let spec = scenario.chain.clone().expect("validated chain scenario");
            let mut engine = Engine::new(config, NullWorld);
            let cast = spec.cast();
            let n = cast.len() as u32;
            for (i, m) in cast.into_iter().enumerate() {
                engine.register_module(Box::new(m), i as u32 + 1)?;
            }
            if let Some(m) = memory_module(&opts.memory) {
                engine.register_module(Box::new(m), n + 1)?;
            }
            for e in events {
                engine.inject_event(e);
            }
            let last = *spec.keys().last().expect("non-empty chain");
            let stop = match stop_spec {
                StopSpec::ChainEnd => Stop::When(Box::new(move |state, _: &NullWorld| {
                    state.history().any(|k| *k == last)
                })),
                StopSpec::MaxCycles => Stop::Cycles(max_cycles),
                StopSpec::AtGoal => {
                    return Err(RunError::Unsupported("at_goal needs a grid scenario".into()))
                }
            };
            let out = engine.run_until(stop);
            Ok(finish(&engine, out, None))
        }
    }
}

/// Runs a grid scenario through the fixed pipeline baseline.
pub fn run_pipeline_baseline(
    scenario: &Scenario,
    order: &[Stage],
    seed: Option<u64>,
    max_cycles: Option<u64>,
) -> Result<RunResult, RunError> {
    if scenario.kind != ScenarioKind::Grid {
        return Err(RunError::Unsupported("the pipeline baseline needs a grid scenario".into()));
    }
    if order.is_empty() {
        return Err(RunError::Unsupported("the pipeline order is empty".into()));
    }
    let run = run_pipeline(
        scenario,
        order,
        seed.unwrap_or(scenario.seed),
        max_cycles.unwrap_or(scenario.max_cycles),
        &[],
    );
    Ok(RunResult {
        metrics: metrics(&run.trace),
        trace: run.trace,
        status: run.status,
        store: None,
        world: Some(run.env.world),
    })
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub first: RunResult,
    pub replay: RunResult,
    /// `first.cycles − replay.cycles`; negative when the replay was slower.
    pub cycles_saved: i64,
}

/// Runs a scenario, round-trips the learned store through its JSON form, and
/// runs it again on the restored store.
pub fn run_with_replay(scenario: &Scenario, opts: &RunOptions) -> Result<Replay, RunError> {
    let config = match &opts.memory {
        MemoryMode::Enabled { config, .. } => *config,
        MemoryMode::Disabled => {
            return Err(RunError::Unsupported("replay needs memory enabled".into()))
        }
    };
    let first = run_gwt(scenario, opts)?;
    let text = first.store.as_ref().expect("memory enabled").to_json();
    let restored = EpisodeStore::from_json(&text)?;
    let replay_opts = RunOptions {
        memory: MemoryMode::Enabled {
            store: Some(restored),
            config,
        },
        ..opts.clone()
    };
    let replay = run_gwt(scenario, &replay_opts)?;
    let cycles_saved = first.metrics.cycles as i64 - replay.metrics.cycles as i64;
    Ok(Replay {
        first,
        replay,
        cycles_saved,
    })
}
