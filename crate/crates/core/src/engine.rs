//! The selection-broadcast cycle.
//!
//! Each cycle runs `Inject* → Collect → Select → Broadcast → Apply`. Modules
//! may be polled concurrently during Collect; every other phase is serial and
//! walks modules in priority order. Proposals are put into canonical order
//! before selection, so the trace never depends on polling order.

use std::any::Any;
use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::memory::Outcome;
use crate::policy::{select, PolicySpec};
use crate::trace::{
    ActionRecord, ApplyRecord, BroadcastRecord, CollectRecord, Entry, InjectRecord,
    ProposalRecord, ScoreRecord, SelectRecord, TraceEvent, WinnerRecord,
};
use crate::types::{
    canonical_order, Content, ContentKey, CycleIndex, ModuleId, Payload, Proposal, Salience,
    TypeError, EXTERNAL_ID, EXTERNAL_PRIORITY,
};

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("module {0:?} is already registered")]
    DuplicateName(String),
    #[error("priority {0} is already taken")]
    DuplicatePriority(u32),
    #[error("name {EXTERNAL_ID:?} and priority {EXTERNAL_PRIORITY} are reserved for external input")]
    Reserved,
    #[error("modules cannot be registered after the first cycle")]
    AlreadyStarted,
    #[error("cycle budget of {0} exhausted")]
    BudgetExhausted(u64),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// Deterministic work counter handed to every module call.
#[derive(Debug, Clone)]
pub struct StepMeter {
    budget: u64,
    used: u64,
}

impl StepMeter {
    pub fn new(budget: u64) -> Self {
        StepMeter { budget, used: 0 }
    }

    /// Records `steps` units of work; returns false once over budget.
    pub fn charge(&mut self, steps: u64) -> bool {
        self.used = self.used.saturating_add(steps);
        self.used <= self.budget
    }

    pub fn exceeded(&self) -> bool {
        self.used > self.budget
    }

    pub fn used(&self) -> u64 {
        self.used
    }
}

/// A module's raw bid; the engine stamps source and cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Bid {
    pub payload: Payload,
    pub salience: Salience,
}

impl Bid {
    pub fn new(payload: Payload, salience: f64) -> Self {
        Bid {
            payload,
            salience: Salience::saturating(salience),
        }
    }
}

/// World effects committed during Apply.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Applied {
    pub world: serde_json::Value,
    pub verdict: Option<Outcome>,
    pub notes: Vec<String>,
}

pub trait Environment: Sync {
    type Action: Serialize + Send;

    fn on_inject(&mut self, _payload: &Payload, _cycle: CycleIndex) {}

    fn step(
        &mut self,
        actions: Vec<(String, Self::Action)>,
        winner: Option<&Content>,
        cycle: CycleIndex,
    ) -> Applied;
}

/// Environment with no world state.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullWorld;

impl Environment for NullWorld {
    type Action = ();

    fn step(&mut self, _: Vec<(String, ())>, _: Option<&Content>, _: CycleIndex) -> Applied {
        Applied::default()
    }
}

pub trait Specialist<E: Environment>: Send {
    fn name(&self) -> &str;

    fn propose(&mut self, env: &E, cycle: CycleIndex, meter: &mut StepMeter) -> Vec<Bid>;

    fn receive(&mut self, content: &Content, cycle: CycleIndex, meter: &mut StepMeter);

    fn act(&mut self, _env: &E, _cycle: CycleIndex) -> Vec<E::Action> {
        Vec::new()
    }

    /// Called after Apply when a chunk won and the environment judged it.
    fn on_outcome(&mut self, _chunk: &Content, _outcome: Outcome) -> Option<String> {
        None
    }

    fn as_any(&self) -> Option<&dyn Any> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalEvent {
    pub payload: Payload,
    pub salience: Salience,
    /// Cycle of arrival; fractional values round up to the next boundary.
    pub arrival: f64,
}

impl ExternalEvent {
    pub fn new(payload: Payload, salience: f64, arrival: f64) -> Result<Self, TypeError> {
        payload.validate()?;
        Ok(ExternalEvent {
            payload,
            salience: Salience::new(salience)?,
            arrival,
        })
    }

    pub fn release_cycle(&self) -> CycleIndex {
        if self.arrival <= 0.0 || self.arrival.is_nan() {
            0
        } else {
            self.arrival.ceil() as CycleIndex
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Acknowledgment {
    pub sequence: u64,
    pub release_cycle: CycleIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polling {
    #[default]
    Sequential,
    Reversed,
    Parallel(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub policy: PolicySpec,
    pub history_bound: usize,
    pub step_budget: u64,
    pub seed: u64,
    pub max_cycles: u64,
    pub polling: Polling,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            policy: PolicySpec::default(),
            history_bound: 64,
            step_budget: 100_000,
            seed: 0,
            max_cycles: 1_000,
            polling: Polling::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceState {
    pub cycle: CycleIndex,
    pub conscious: Option<Content>,
    history: VecDeque<ContentKey>,
    bound: usize,
}

impl WorkspaceState {
    pub fn new(bound: usize) -> Self {
        WorkspaceState {
            cycle: 0,
            conscious: None,
            history: VecDeque::with_capacity(bound),
            bound: bound.max(1),
        }
    }

    pub fn push_history(&mut self, key: ContentKey) {
        if self.history.len() == self.bound {
            self.history.pop_front();
        }
        self.history.push_back(key);
    }

    pub fn history(&self) -> impl Iterator<Item = &ContentKey> {
        self.history.iter()
    }

    pub fn occurrences(&self, key: ContentKey) -> usize {
        self.history.iter().filter(|k| **k == key).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModuleHandle(pub usize);

struct Registered<E: Environment> {
    id: ModuleId,
    module: Box<dyn Specialist<E>>,
}

pub enum Stop<'a, E> {
    Cycles(u64),
    When(Box<dyn Fn(&WorkspaceState, &E) -> bool + 'a>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Stopped,
    BudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: WorkspaceState,
    pub trace: Vec<TraceEvent>,
    pub status: RunStatus,
}

pub struct Engine<E: Environment> {
    config: EngineConfig,
    env: E,
    modules: Vec<Registered<E>>,
    state: WorkspaceState,
    pending: Vec<(u64, ExternalEvent)>,
    next_sequence: u64,
    started: bool,
    pool: Option<rayon::ThreadPool>,
}

impl<E: Environment> Engine<E> {
    pub fn new(config: EngineConfig, env: E) -> Self {
        let pool = match config.polling {
            Polling::Parallel(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .expect("thread pool"),
            ),
            _ => None,
        };
        let state = WorkspaceState::new(config.history_bound);
        Engine {
            config,
            env,
            modules: Vec::new(),
            state,
            pending: Vec::new(),
            next_sequence: 0,
            started: false,
            pool,
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn state(&self) -> &WorkspaceState {
        &self.state
    }

    pub fn module_ids(&self) -> Vec<ModuleId> {
        self.modules.iter().map(|m| m.id.clone()).collect()
    }

    /// Downcasts a registered module by name.
    pub fn module<T: 'static>(&self, name: &str) -> Option<&T> {
        self.modules
            .iter()
            .find(|m| m.id.name == name)
            .and_then(|m| m.module.as_any())
            .and_then(|a| a.downcast_ref::<T>())
    }

    pub fn register_module(
        &mut self,
        module: Box<dyn Specialist<E>>,
        priority: u32,
    ) -> Result<ModuleHandle, EngineError> {
        if self.started {
            return Err(EngineError::AlreadyStarted);
        }
        let id = ModuleId::new(module.name(), priority)?;
        if id.name == EXTERNAL_ID || priority == EXTERNAL_PRIORITY {
            return Err(EngineError::Reserved);
        }
        if self.modules.iter().any(|m| m.id.name == id.name) {
            return Err(EngineError::DuplicateName(id.name));
        }
        if self.modules.iter().any(|m| m.id.priority == priority) {
            return Err(EngineError::DuplicatePriority(priority));
        }
        let at = self
            .modules
            .partition_point(|m| m.id.priority < priority);
        self.modules.insert(at, Registered { id, module });
        Ok(ModuleHandle(at))
    }

    pub fn inject_event(&mut self, event: ExternalEvent) -> Acknowledgment {
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        let release_cycle = event.release_cycle().max(self.state.cycle);
        self.pending.push((sequence, event));
        Acknowledgment {
            sequence,
            release_cycle,
        }
    }

    pub fn run_cycle(&mut self) -> Result<(WorkspaceState, Vec<TraceEvent>), EngineError> {
        if self.state.cycle >= self.config.max_cycles {
            return Err(EngineError::BudgetExhausted(self.config.max_cycles));
        }
        self.started = true;
        let cycle = self.state.cycle;
        let mut trace = Vec::new();
        let mut proposals = Vec::new();

        // Inject
        let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending)
            .into_iter()
            .partition(|(_, e)| e.release_cycle() <= cycle);
        self.pending = later;
        for (_, event) in due {
            let content = Content::new(event.payload.clone(), EXTERNAL_ID, cycle)?;
            trace.push(TraceEvent {
                cycle,
                entry: Entry::Inject(InjectRecord {
                    key: content.key(),
                    payload: event.payload.clone(),
                    salience: event.salience.get(),
                    arrival: event.arrival,
                }),
            });
            self.env.on_inject(&event.payload, cycle);
            proposals.push(Proposal {
                content,
                salience: event.salience,
                proposer: ModuleId::external(),
            });
        }

        // Collect
        let budget = self.config.step_budget;
        let env = &self.env;
        let poll = |m: &mut Registered<E>| {
            let mut meter = StepMeter::new(budget);
            let bids = m.module.propose(env, cycle, &mut meter);
            (bids, meter.exceeded())
        };
        let polled: Vec<(Vec<Bid>, bool)> = match (self.config.polling, &self.pool) {
            (Polling::Parallel(_), Some(pool)) => {
                let modules = &mut self.modules;
                pool.install(|| modules.par_iter_mut().map(poll).collect())
            }
            (Polling::Reversed, _) => {
                let mut out: Vec<_> = self.modules.iter_mut().rev().map(poll).collect();
                out.reverse();
                out
            }
            _ => self.modules.iter_mut().map(poll).collect(),
        };
        let mut faulted = vec![false; self.modules.len()];
        for (i, (bids, over_budget)) in polled.into_iter().enumerate() {
            let id = &self.modules[i].id;
            let built: Result<Vec<Proposal>, TypeError> = bids
                .into_iter()
                .map(|b| {
                    Ok(Proposal {
                        content: Content::new(b.payload, id.name.clone(), cycle)?,
                        salience: b.salience,
                        proposer: id.clone(),
                    })
                })
                .collect();
            match built {
                Ok(ps) if !over_budget => proposals.extend(ps),
                _ => faulted[i] = true,
            }
        }
        let proposals = canonical_order(proposals);
        trace.push(TraceEvent {
            cycle,
            entry: Entry::Collect(CollectRecord {
                proposals: proposals.iter().map(ProposalRecord::from).collect(),
                faulted: self.faulted_names(&faulted),
            }),
        });

        // Select
        let outcome = select(self.config.policy, &proposals, &self.state);
        trace.push(TraceEvent {
            cycle,
            entry: Entry::Select(SelectRecord {
                winner: outcome.winner.as_ref().map(|w| WinnerRecord {
                    proposer: w.proposer.name.clone(),
                    key: w.key(),
                    score: outcome.winner_score.unwrap_or_default(),
                }),
                scoreboard: proposals
                    .iter()
                    .zip(&outcome.scoreboard)
                    .map(|(p, (key, score))| ScoreRecord {
                        key: *key,
                        proposer: p.proposer.name.clone(),
                        score: *score,
                    })
                    .collect(),
            }),
        });

        // Broadcast
        let winner = outcome.winner.map(|w| w.content);
        if let Some(content) = &winner {
            let interior = content.interior();
            let deliveries: Vec<&Content> = if interior.is_empty() {
                vec![content]
            } else {
                interior.iter().collect()
            };
            let mut receivers = Vec::new();
            for (i, m) in self.modules.iter_mut().enumerate() {
                if faulted[i] {
                    continue;
                }
                let mut meter = StepMeter::new(budget);
                for c in &deliveries {
                    m.module.receive(c, cycle, &mut meter);
                }
                if meter.exceeded() {
                    faulted[i] = true;
                } else {
                    receivers.push(m.id.name.clone());
                }
            }
            self.state.push_history(content.key());
            for c in &interior {
                self.state.push_history(c.key());
            }
            self.state.conscious = Some(content.clone());
            trace.push(TraceEvent {
                cycle,
                entry: Entry::Broadcast(BroadcastRecord {
                    proposer: content.source().to_string(),
                    key: content.key(),
                    payload: content.payload().clone(),
                    receivers,
                    collapsed: interior.iter().map(Content::key).collect(),
                    faulted: self.faulted_names(&faulted),
                }),
            });
        }

        // Apply
        let mut actions = Vec::new();
        for (i, m) in self.modules.iter_mut().enumerate() {
            if faulted[i] {
                continue;
            }
            for a in m.module.act(&self.env, cycle) {
                actions.push((m.id.name.clone(), a));
            }
        }
        let action_records = actions
            .iter()
            .map(|(module, a)| ActionRecord {
                module: module.clone(),
                action: serde_json::to_value(a).unwrap_or(serde_json::Value::Null),
            })
            .collect();
        let mut applied = self.env.step(actions, winner.as_ref(), cycle);
        if let (Some(chunk), Some(verdict)) = (&winner, applied.verdict) {
            if matches!(chunk.payload(), Payload::ChunkRecall(_)) {
                for (i, m) in self.modules.iter_mut().enumerate() {
                    if !faulted[i] {
                        if let Some(note) = m.module.on_outcome(chunk, verdict) {
                            applied.notes.push(note);
                        }
                    }
                }
            }
        }
        trace.push(TraceEvent {
            cycle,
            entry: Entry::Apply(ApplyRecord {
                actions: action_records,
                world: applied.world,
                verdict: applied.verdict,
                notes: applied.notes,
            }),
        });

        self.state.cycle += 1;
        Ok((self.state.clone(), trace))
    }

    pub fn run_until(&mut self, stop: Stop<'_, E>) -> RunOutcome {
        let mut trace = Vec::new();
        loop {
            let done = match &stop {
                Stop::Cycles(n) => self.state.cycle >= *n,
                Stop::When(pred) => pred(&self.state, &self.env),
            };
            if done {
                return RunOutcome {
                    state: self.state.clone(),
                    trace,
                    status: RunStatus::Stopped,
                };
            }
            match self.run_cycle() {
                Ok((_, events)) => trace.extend(events),
                Err(_) => {
                    return RunOutcome {
                        state: self.state.clone(),
                        trace,
                        status: RunStatus::BudgetExhausted,
                    }
                }
            }
        }
    }

    fn faulted_names(&self, faulted: &[bool]) -> Vec<String> {
        self.modules
            .iter()
            .zip(faulted)
            .filter(|(_, f)| **f)
            .map(|(m, _)| m.id.name.clone())
            .collect()
    }
}

/// Proposes from a per-cycle script; the test and demo driver.
#[derive(Debug, Clone)]
pub struct ScriptedModule {
    name: String,
    script: Vec<Vec<Bid>>,
    /// Steps charged per cycle; exceeding the engine budget faults the module.
    cost: Vec<u64>,
    pub received: Vec<(CycleIndex, ContentKey)>,
}

impl ScriptedModule {
    pub fn new(name: impl Into<String>, script: Vec<Vec<Bid>>) -> Self {
        ScriptedModule {
            name: name.into(),
            script,
            cost: Vec::new(),
            received: Vec::new(),
        }
    }

    pub fn with_cost(mut self, cost: Vec<u64>) -> Self {
        self.cost = cost;
        self
    }
}

impl<E: Environment> Specialist<E> for ScriptedModule {
    fn name(&self) -> &str {
        &self.name
    }

    fn propose(&mut self, _env: &E, cycle: CycleIndex, meter: &mut StepMeter) -> Vec<Bid> {
        meter.charge(self.cost.get(cycle as usize).copied().unwrap_or(1));
        self.script.get(cycle as usize).cloned().unwrap_or_default()
    }

    fn receive(&mut self, content: &Content, cycle: CycleIndex, meter: &mut StepMeter) {
        meter.charge(1);
        self.received.push((cycle, content.key()));
    }

    fn as_any(&self) -> Option<&dyn Any> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{content_key, Cell};

    fn label(s: &str) -> Payload {
        Payload::percept(s, None)
    }

    fn engine() -> Engine<NullWorld> {
        Engine::new(
            EngineConfig {
                policy: PolicySpec::MaxSalience,
                max_cycles: 20,
                ..EngineConfig::default()
            },
            NullWorld,
        )
    }

    fn winners(trace: &[TraceEvent]) -> Vec<Option<String>> {
        trace
            .iter()
            .filter_map(|e| match &e.entry {
                Entry::Select(s) => Some(s.winner.as_ref().map(|w| w.proposer.clone())),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn registration_rules() {
        let mut e = engine();
        e.register_module(Box::new(ScriptedModule::new("m1", vec![])), 1).unwrap();
        e.register_module(Box::new(ScriptedModule::new("m2", vec![])), 2).unwrap();
        assert_eq!(
            e.register_module(Box::new(ScriptedModule::new("m1", vec![])), 3),
            Err(EngineError::DuplicateName("m1".into()))
        );
        assert_eq!(
            e.register_module(Box::new(ScriptedModule::new("m3", vec![])), 2),
            Err(EngineError::DuplicatePriority(2))
        );
        assert_eq!(
            e.register_module(Box::new(ScriptedModule::new("m3", vec![])), 0),
            Err(EngineError::Reserved)
        );
        e.run_cycle().unwrap();
        assert_eq!(
            e.register_module(Box::new(ScriptedModule::new("m4", vec![])), 4),
            Err(EngineError::AlreadyStarted)
        );
    }

    #[test]
    fn both_modules_collected_every_cycle() {
        let mut e = engine();
        let script = |n: &str| {
            (0..3)
                .map(|c| vec![Bid::new(label(&format!("{n}-{c}")), 0.5)])
                .collect()
        };
        e.register_module(Box::new(ScriptedModule::new("M1", script("M1"))), 1).unwrap();
        e.register_module(Box::new(ScriptedModule::new("M2", script("M2"))), 2).unwrap();
        let out = e.run_until(Stop::Cycles(3));
        for ev in &out.trace {
            if let Entry::Collect(c) = &ev.entry {
                let names: Vec<_> = c.proposals.iter().map(|p| p.proposer.as_str()).collect();
                assert!(names.contains(&"M1") && names.contains(&"M2"));
            }
        }
    }

    #[test]
    fn empty_engine_has_no_winner() {
        let mut e = engine();
        let (state, trace) = e.run_cycle().unwrap();
        assert_eq!(state.cycle, 1);
        assert!(state.conscious.is_none());
        assert_eq!(winners(&trace), vec![None]);
        assert!(!trace.iter().any(|t| matches!(t.entry, Entry::Broadcast(_))));
    }

    #[test]
    fn scripted_winner_sequence() {
        let mut e = engine();
        let s = |hi: [bool; 3], n: &str| {
            hi.iter()
                .enumerate()
                .map(|(c, h)| vec![Bid::new(label(&format!("{n}{c}")), if *h { 0.9 } else { 0.1 })])
                .collect()
        };
        e.register_module(Box::new(ScriptedModule::new("M1", s([true, false, true], "a"))), 1)
            .unwrap();
        e.register_module(Box::new(ScriptedModule::new("M2", s([false, true, false], "b"))), 2)
            .unwrap();
        let out = e.run_until(Stop::Cycles(3));
        let w: Vec<_> = winners(&out.trace).into_iter().flatten().collect();
        assert_eq!(w, ["M1", "M2", "M1"]);
        // Winner is delivered to every module, proposer included.
        let m1: &ScriptedModule = e.module("M1").unwrap();
        assert_eq!(m1.received.len(), 3);
    }

    #[test]
    fn chunk_collapses_in_one_cycle() {
        let mut e = engine();
        let chunk = Payload::chunk(vec![label("b"), label("c")]).unwrap();
        e.register_module(
            Box::new(ScriptedModule::new("mem", vec![vec![Bid::new(chunk, 0.6)]])),
            1,
        )
        .unwrap();
        e.register_module(Box::new(ScriptedModule::new("M1", vec![])), 2).unwrap();
        let (state, trace) = e.run_cycle().unwrap();
        assert_eq!(state.cycle, 1);
        let b = trace
            .iter()
            .find_map(|t| match &t.entry {
                Entry::Broadcast(b) => Some(b.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(b.collapsed, vec![content_key(&label("b")), content_key(&label("c"))]);
        let m1: &ScriptedModule = e.module("M1").unwrap();
        assert_eq!(
            m1.received,
            vec![(0, content_key(&label("b"))), (0, content_key(&label("c")))]
        );
    }

    #[test]
    fn over_budget_module_is_faulted_and_skipped() {
        let mut e = Engine::new(
            EngineConfig {
                policy: PolicySpec::MaxSalience,
                step_budget: 10,
                ..EngineConfig::default()
            },
            NullWorld,
        );
        e.register_module(
            Box::new(
                ScriptedModule::new("slow", vec![vec![Bid::new(label("x"), 0.9)]]).with_cost(vec![50]),
            ),
            1,
        )
        .unwrap();
        e.register_module(
            Box::new(ScriptedModule::new("ok", vec![vec![Bid::new(label("y"), 0.2)]])),
            2,
        )
        .unwrap();
        let (_, trace) = e.run_cycle().unwrap();
        assert_eq!(winners(&trace), vec![Some("ok".to_string())]);
        for t in &trace {
            match &t.entry {
                Entry::Collect(c) => assert_eq!(c.faulted, vec!["slow".to_string()]),
                Entry::Broadcast(b) => assert_eq!(b.receivers, vec!["ok".to_string()]),
                _ => {}
            }
        }
    }

    #[test]
    fn injected_event_preempts() {
        let mut e = engine();
        let routine: Vec<Vec<Bid>> = (0..5).map(|c| vec![Bid::new(label(&format!("r{c}")), 0.9)]).collect();
        e.register_module(Box::new(ScriptedModule::new("M1", routine)), 1).unwrap();
        let alert = Payload::Alert { cell: Cell::new(1, 1) };
        let ack = e.inject_event(ExternalEvent::new(alert.clone(), 1.0, 2.3).unwrap());
        assert_eq!(ack.release_cycle, 3);
        let out = e.run_until(Stop::Cycles(5));
        let w = winners(&out.trace);
        assert_eq!(w[3].as_deref(), Some(EXTERNAL_ID));
        assert_eq!(w[2].as_deref(), Some("M1"));
        let injects: Vec<_> = out
            .trace
            .iter()
            .filter(|t| matches!(t.entry, Entry::Inject(_)))
            .map(|t| t.cycle)
            .collect();
        assert_eq!(injects, vec![3]);
    }

    #[test]
    fn zero_salience_event_loses() {
        let mut e = engine();
        e.register_module(
            Box::new(ScriptedModule::new("M1", vec![vec![Bid::new(label("r"), 0.1)]])),
            1,
        )
        .unwrap();
        e.inject_event(ExternalEvent::new(label("quiet"), 0.0, 0.0).unwrap());
        let (_, trace) = e.run_cycle().unwrap();
        assert_eq!(winners(&trace), vec![Some("M1".to_string())]);
        assert!(trace.iter().any(|t| matches!(t.entry, Entry::Inject(_))));
    }

    #[test]
    fn simultaneous_events_tie_break_on_key() {
        let a = Payload::Goal { target: Cell::new(1, 1) };
        let b = Payload::Goal { target: Cell::new(2, 2) };
        let expected = std::cmp::min(content_key(&a), content_key(&b));
        for order in [[a.clone(), b.clone()], [b.clone(), a.clone()]] {
            let mut e = engine();
            for p in order {
                e.inject_event(ExternalEvent::new(p, 0.7, 0.0).unwrap());
            }
            let (_, trace) = e.run_cycle().unwrap();
            let key = trace
                .iter()
                .find_map(|t| match &t.entry {
                    Entry::Select(s) => s.winner.as_ref().map(|w| w.key),
                    _ => None,
                })
                .unwrap();
            assert_eq!(key, expected);
        }
    }

    #[test]
    fn run_until_bounds() {
        let mut e = engine();
        let out = e.run_until(Stop::Cycles(5));
        assert_eq!(out.state.cycle, 5);
        let mut e = engine();
        let out = e.run_until(Stop::When(Box::new(|_, _| true)));
        assert_eq!(out.state.cycle, 0);
        assert!(out.trace.is_empty());
        let mut e = engine();
        let out = e.run_until(Stop::When(Box::new(|_, _| false)));
        assert_eq!(out.status, RunStatus::BudgetExhausted);
        assert_eq!(out.state.cycle, 20);
    }

    #[test]
    fn history_is_bounded() {
        let mut s = WorkspaceState::new(2);
        for i in 0..5 {
            s.push_history(ContentKey(i));
        }
        assert_eq!(s.history().copied().collect::<Vec<_>>(), vec![ContentKey(3), ContentKey(4)]);
    }
}
