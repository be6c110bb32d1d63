//! Fixed-order pipeline baseline. One stage runs per cycle, round robin, and
//! hands its output packet to the next stage; the motor actuates every cycle
//! from whatever plan it last adopted. Traces use the workspace format so the
//! same metrics apply.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use super::specialists::{detect_humans, make_plan, module_rng, next_move, parse_instruction, perceive};
use super::world::{GridAction, GridEnv};
use super::{Saliences, Scenario};
use crate::engine::{Environment, ExternalEvent, RunStatus};
use crate::trace::{
    ActionRecord, ApplyRecord, BroadcastRecord, CollectRecord, Entry, InjectRecord, ProposalRecord,
    ScoreRecord, SelectRecord, TraceEvent, WinnerRecord,
};
use crate::types::{canonical_order, Cell, Content, CycleIndex, ModuleId, Payload, Proposal, Salience, EXTERNAL_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Voice,
    Vision,
    Detector,
    Planner,
    Motor,
}

impl Stage {
    pub const DEFAULT_ORDER: [Stage; 5] = [Stage::Voice, Stage::Vision, Stage::Detector, Stage::Planner, Stage::Motor];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Voice => "voice",
            Stage::Vision => "vision",
            Stage::Detector => "detector",
            Stage::Planner => "planner",
            Stage::Motor => "motor",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::DEFAULT_ORDER
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown pipeline stage {s:?}"))
    }
}

/// Parses `voice,vision,...`: a non-empty list of distinct stages. Missing
/// stages simply never run.
pub fn parse_order(s: &str) -> Result<Vec<Stage>, String> {
    let order: Vec<Stage> = s.split(',').map(|p| p.trim().parse()).collect::<Result<_, _>>()?;
    for (i, st) in order.iter().enumerate() {
        if order[..i].contains(st) {
            return Err(format!("pipeline order repeats {st}"));
        }
    }
    Ok(order)
}

pub struct PipelineRun {
    pub trace: Vec<TraceEvent>,
    pub env: GridEnv,
    pub status: RunStatus,
}

struct Pipeline {
    order: Vec<Stage>,
    sal: Saliences,
    env: GridEnv,
    rng: ChaCha8Rng,
    pending: Vec<ExternalEvent>,
    inbox: Vec<Payload>,
    packet: Vec<(Payload, f64)>,
    goal: Cell,
    motor_plan: Option<Payload>,
    previous: BTreeSet<Cell>,
}

impl Pipeline {
    fn run_stage(&mut self, stage: Stage) -> Vec<(Payload, f64)> {
        let world = &self.env.world;
        match stage {
            Stage::Voice => {
                let out: Vec<_> = self
                    .inbox
                    .drain(..)
                    .filter_map(|p| parse_instruction(&p))
                    .map(|g| (g, self.sal.goal))
                    .collect();
                if let Some((Payload::Goal { target }, _)) = out.last() {
                    self.goal = *target;
                }
                out
            }
            Stage::Vision => {
                let out = perceive(world, &self.previous, None, &self.sal, &mut self.rng);
                self.previous = out
                    .iter()
                    .filter_map(|(p, _)| match p {
                        Payload::Percept { cell, .. } => *cell,
                        _ => None,
                    })
                    .collect();
                out
            }
            Stage::Detector => {
                let humans = self.packet_humans();
                self.motor_plan
                    .as_ref()
                    .and_then(|plan| detect_humans(plan, world.robot, &humans))
                    .map(|a| vec![(a, self.sal.alert)])
                    .unwrap_or_default()
            }
            Stage::Planner => {
                if world.robot == self.goal {
                    return Vec::new();
                }
                let mut avoid: BTreeSet<Cell> = self.packet_humans().into_iter().collect();
                for (p, _) in &self.packet {
                    if let Payload::Alert { cell } = p {
                        avoid.insert(*cell);
                    }
                }
                make_plan(world, self.goal, &avoid)
                    .map(|p| vec![(p, self.sal.plan)])
                    .unwrap_or_default()
            }
            Stage::Motor => {
                let goal = self.goal;
                if let Some((p, _)) = self
                    .packet
                    .iter()
                    .find(|(p, _)| matches!(p, Payload::Plan { goal: g, .. } if *g == goal))
                {
                    self.motor_plan = Some(p.clone());
                }
                Vec::new()
            }
        }
    }

    fn packet_humans(&self) -> Vec<Cell> {
        self.packet
            .iter()
            .filter_map(|(p, _)| match p {
                Payload::Percept { label, cell: Some(c) } if label == "human" => Some(*c),
                _ => None,
            })
            .collect()
    }

    fn cycle(&mut self, cycle: CycleIndex) -> Vec<TraceEvent> {
        let mut trace = Vec::new();
        let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending)
            .into_iter()
            .partition(|e| e.release_cycle() <= cycle);
        self.pending = later;
        for e in due {
            let key = Content::new(e.payload.clone(), EXTERNAL_ID, cycle)
                .expect("validated event")
                .key();
            trace.push(TraceEvent {
                cycle,
                entry: Entry::Inject(InjectRecord {
                    key,
                    payload: e.payload.clone(),
                    salience: e.salience.get(),
                    arrival: e.arrival,
                }),
            });
            self.env.on_inject(&e.payload, cycle);
            self.inbox.push(e.payload);
        }

        let slot = (cycle as usize) % self.order.len();
        if slot == 0 {
            self.packet.clear();
        }
        let stage = self.order[slot];
        let id = ModuleId::new(stage.name(), slot as u32 + 1).expect("stage name");
        let outputs = self.run_stage(stage);
        self.packet.extend(outputs.iter().cloned());
        let proposals = canonical_order(
            outputs
                .into_iter()
                .map(|(p, s)| Proposal {
                    content: Content::new(p, stage.name(), cycle).expect("stage output"),
                    salience: Salience::saturating(s),
                    proposer: id.clone(),
                })
                .collect(),
        );
        trace.push(TraceEvent {
            cycle,
            entry: Entry::Collect(CollectRecord {
                proposals: proposals.iter().map(ProposalRecord::from).collect(),
                faulted: Vec::new(),
            }),
        });
        let top = proposals.first();
        trace.push(TraceEvent {
            cycle,
            entry: Entry::Select(SelectRecord {
                winner: top.map(|p| WinnerRecord {
                    proposer: stage.name().to_string(),
                    key: p.key(),
                    score: p.salience.get(),
                }),
                scoreboard: proposals
                    .iter()
                    .map(|p| ScoreRecord {
                        key: p.key(),
                        proposer: stage.name().to_string(),
                        score: Some(p.salience.get()),
                    })
                    .collect(),
            }),
        });
        if let Some(p) = top {
            let next = self.order[(slot + 1) % self.order.len()];
            trace.push(TraceEvent {
                cycle,
                entry: Entry::Broadcast(BroadcastRecord {
                    proposer: stage.name().to_string(),
                    key: p.key(),
                    payload: p.content.payload().clone(),
                    receivers: vec![next.name().to_string()],
                    collapsed: Vec::new(),
                    faulted: Vec::new(),
                }),
            });
        }

        let actions: Vec<(String, GridAction)> = self
            .motor_plan
            .as_ref()
            .and_then(|p| next_move(p, self.env.world.robot))
            .map(|m| vec![(Stage::Motor.name().to_string(), GridAction::Move(m))])
            .unwrap_or_default();
        let records = actions
            .iter()
            .map(|(module, a)| ActionRecord {
                module: module.clone(),
                action: serde_json::to_value(a).expect("action serializes"),
            })
            .collect();
        let applied = self.env.step(actions, None, cycle);
        trace.push(TraceEvent {
            cycle,
            entry: Entry::Apply(ApplyRecord {
                actions: records,
                world: applied.world,
                verdict: None,
                notes: applied.notes,
            }),
        });
        trace
    }
}

/// Runs a grid scenario through the pipeline until the robot stands on the
/// goal after every scripted event is out, or `max_cycles` elapse.
pub fn run_pipeline(
    scenario: &Scenario,
    order: &[Stage],
    seed: u64,
    max_cycles: u64,
    extra_events: &[ExternalEvent],
) -> PipelineRun {
    let world = scenario.world.clone().expect("grid scenario");
    let mut events = scenario.events();
    events.extend(extra_events.iter().cloned());
    let last_release = events.iter().map(ExternalEvent::release_cycle).max();
    let mut p = Pipeline {
        order: order.to_vec(),
        sal: scenario.saliences,
        goal: world.goal,
        env: GridEnv::new(world),
        rng: module_rng(seed, Stage::Vision.name()),
        pending: events,
        inbox: Vec::new(),
        packet: Vec::new(),
        motor_plan: None,
        previous: BTreeSet::new(),
    };
    let mut trace = Vec::new();
    let mut cycle = 0;
    let status = loop {
        let w = &p.env.world;
        let settled = last_release.is_none_or(|r| cycle > r);
        if w.robot == w.goal && settled {
            break RunStatus::Stopped;
        }
        if cycle >= max_cycles {
            break RunStatus::BudgetExhausted;
        }
        trace.extend(p.cycle(cycle));
        cycle += 1;
    };
    PipelineRun {
        trace,
        env: p.env,
        status,
    }
}
