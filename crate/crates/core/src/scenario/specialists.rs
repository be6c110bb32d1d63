//! The robot's specialist modules. The pure behaviour functions are shared
//! with the pipeline baseline; the structs wrap them as workspace modules.

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::route::{plan_route, Route};
use super::world::{GridAction, GridEnv, GridWorld};
use super::Saliences;
use crate::engine::{Bid, Specialist, StepMeter};
use crate::types::{content_key, Cell, Content, CycleIndex, Move, Payload};

pub const VISION_RANGE: u32 = 3;
pub const ALERT_RANGE: u32 = 2;
/// Cycles a broadcast human position stays blocked for the planner.
pub const HUMAN_MEMORY: u64 = 4;

pub const VISION: &str = "vision";
pub const DETECTOR: &str = "detector";
pub const PLANNER: &str = "planner";
pub const VOICE: &str = "voice";
pub const MOTOR: &str = "motor";
pub const MEMORY: &str = "memory";

/// Registration priorities of the grid cast (lower wins ties).
pub fn priority(name: &str) -> u32 {
    match name {
        DETECTOR => 1,
        PLANNER => 2,
        VOICE => 3,
        MEMORY => 4,
        VISION => 5,
        MOTOR => 6,
        _ => 7,
    }
}

pub fn module_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let salt = content_key(&Payload::percept(name, None)).0;
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

/// What the last broadcast asked perception to attend to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Context {
    Goal(Cell),
    Alert(Cell),
}

impl Context {
    pub fn from_payload(p: &Payload) -> Option<Context> {
        match p {
            Payload::Goal { target } => Some(Context::Goal(*target)),
            Payload::Alert { cell } => Some(Context::Alert(*cell)),
            _ => None,
        }
    }

    fn relevant(self, robot: Cell, cell: Cell) -> bool {
        match self {
            Context::Alert(a) => a.manhattan(cell) <= ALERT_RANGE,
            Context::Goal(g) => {
                (robot.x.min(g.x)..=robot.x.max(g.x)).contains(&cell.x)
                    && (robot.y.min(g.y)..=robot.y.max(g.y)).contains(&cell.y)
            }
        }
    }
}

/// Percepts of nearby humans and adjacent obstacles, or a single "clear".
///
/// Human salience grows with proximity and novelty; cells reported in the
/// previous scan are not novel. Percepts relevant to `context` gain the
/// context boost, capped at 1.
pub fn perceive(
    world: &GridWorld,
    previous: &BTreeSet<Cell>,
    context: Option<Context>,
    sal: &Saliences,
    rng: &mut impl Rng,
) -> Vec<(Payload, f64)> {
    let robot = world.robot;
    let mut out = Vec::new();
    for h in world.human_cells() {
        let d = robot.manhattan(h);
        if d > VISION_RANGE {
            continue;
        }
        let novelty = if previous.contains(&h) { 0.0 } else { 0.05 };
        let s = 0.25 + 0.05 * f64::from(VISION_RANGE - d) + novelty + rng.gen_range(0.0..0.03);
        out.push((Payload::percept("human", Some(h)), s));
    }
    for mv in Move::ALL {
        let c = robot.step(mv);
        if world.in_bounds(c) && world.obstacles.contains(&c) {
            let novelty = if previous.contains(&c) { 0.0 } else { 0.05 };
            let s = 0.15 + novelty + rng.gen_range(0.0..0.03);
            out.push((Payload::percept("obstacle", Some(c)), s));
        }
    }
    if out.is_empty() {
        return vec![(Payload::percept("clear", None), sal.clear)];
    }
    if let Some(ctx) = context {
        for (p, s) in &mut out {
            if let Payload::Percept { cell: Some(c), .. } = p {
                if ctx.relevant(robot, *c) {
                    *s += sal.context_boost;
                }
            }
        }
    }
    for (_, s) in &mut out {
        *s = s.min(1.0);
    }
    out
}

/// Index of `robot` on a plan's path, if it is on it.
pub fn plan_position(plan: &Payload, robot: Cell) -> Option<usize> {
    plan.plan_cells()?.iter().position(|c| *c == robot)
}

/// Cells of a plan still ahead of the robot.
pub fn remaining_cells(plan: &Payload, robot: Cell) -> Vec<Cell> {
    match (plan.plan_cells(), plan_position(plan, robot)) {
        (Some(cells), Some(i)) => cells[i + 1..].to_vec(),
        _ => Vec::new(),
    }
}

/// Alert for the first human within alert range of the robot that stands on,
/// or next to, a cell of the plan still ahead.
pub fn detect_humans(plan: &Payload, robot: Cell, humans: &[Cell]) -> Option<Payload> {
    let near: Vec<Cell> = humans
        .iter()
        .copied()
        .filter(|h| robot.manhattan(*h) <= ALERT_RANGE)
        .collect();
    remaining_cells(plan, robot).into_iter().find_map(|c| {
        let on = near.iter().find(|h| **h == c);
        let beside = near.iter().find(|h| h.manhattan(c) == 1);
        on.or(beside).map(|cell| Payload::Alert { cell: *cell })
    })
}

pub fn parse_instruction(p: &Payload) -> Option<Payload> {
    match p {
        Payload::Instruction { goal } => Some(Payload::Goal { target: *goal }),
        _ => None,
    }
}

pub fn next_move(plan: &Payload, robot: Cell) -> Option<Move> {
    let i = plan_position(plan, robot)?;
    match plan {
        Payload::Plan { moves, .. } => moves.get(i).copied(),
        _ => None,
    }
}

pub fn make_plan(world: &GridWorld, goal: Cell, avoid: &BTreeSet<Cell>) -> Option<Payload> {
    match plan_route(world, world.robot, goal, avoid) {
        Route::Moves(moves) => Some(Payload::Plan {
            goal,
            origin: world.robot,
            moves,
        }),
        Route::Unreachable => None,
    }
}

pub struct Vision {
    sal: Saliences,
    rng: ChaCha8Rng,
    previous: BTreeSet<Cell>,
    context: Option<Context>,
}

impl Vision {
    pub fn new(sal: Saliences, seed: u64) -> Self {
        Vision {
            sal,
            rng: module_rng(seed, VISION),
            previous: BTreeSet::new(),
            context: None,
        }
    }
}

impl Specialist<GridEnv> for Vision {
    fn name(&self) -> &str {
        VISION
    }

    fn propose(&mut self, env: &GridEnv, _cycle: CycleIndex, meter: &mut StepMeter) -> Vec<Bid> {
        meter.charge(env.world.humans.len() as u64 + 4);
        let percepts = perceive(&env.world, &self.previous, self.context, &self.sal, &mut self.rng);
        self.previous = percepts
            .iter()
            .filter_map(|(p, _)| match p {
                Payload::Percept { cell, .. } => *cell,
                _ => None,
            })
            .collect();
        percepts.into_iter().map(|(p, s)| Bid::new(p, s)).collect()
    }

    fn receive(&mut self, content: &Content, _cycle: CycleIndex, meter: &mut StepMeter) {
        meter.charge(1);
        self.context = Context::from_payload(content.payload());
    }
}

/// Senses humans directly and alerts against the last broadcast plan. After
/// one of its alerts is broadcast it stays quiet until a new plan arrives.
pub struct HumanDetector {
    sal: Saliences,
    plan: Option<Payload>,
    waiting_for_plan: bool,
}

impl HumanDetector {
    pub fn new(sal: Saliences) -> Self {
        HumanDetector {
            sal,
            plan: None,
            waiting_for_plan: false,
        }
    }
}

impl Specialist<GridEnv> for HumanDetector {
    fn name(&self) -> &str {
        DETECTOR
    }

    fn propose(&mut self, env: &GridEnv, _cycle: CycleIndex, meter: &mut StepMeter) -> Vec<Bid> {
        meter.charge(env.world.humans.len() as u64 + 1);
        if self.waiting_for_plan {
            return Vec::new();
        }
        let Some(plan) = &self.plan else {
            return Vec::new();
        };
        detect_humans(plan, env.world.robot, &env.world.human_cells())
            .map(|a| vec![Bid::new(a, self.sal.alert)])
            .unwrap_or_default()
    }

    fn receive(&mut self, content: &Content, _cycle: CycleIndex, meter: &mut StepMeter) {
        meter.charge(1);
        match content.payload() {
            p @ Payload::Plan { .. } => {
                self.plan = Some(p.clone());
                self.waiting_for_plan = false;
            }
            Payload::Alert { .. } => self.waiting_for_plan = true,
            _ => {}
        }
    }
}

/// Plans toward the broadcast goal around obstacles and recently broadcast
/// human positions. A broadcast alert triggers an avoidance plan at elevated
/// salience on the next cycle.
pub struct RoutePlanner {
    sal: Saliences,
    goal: Cell,
    held: Option<Payload>,
    humans: BTreeMap<Cell, CycleIndex>,
    avoid: Option<Cell>,
}

impl RoutePlanner {
    pub fn new(sal: Saliences, goal: Cell) -> Self {
        RoutePlanner {
            sal,
            goal,
            held: None,
            humans: BTreeMap::new(),
            avoid: None,
        }
    }

    fn blocked(&self, cycle: CycleIndex) -> BTreeSet<Cell> {
        let horizon = cycle.saturating_sub(HUMAN_MEMORY);
        self.humans
            .iter()
            .filter(|(_, seen)| **seen >= horizon)
            .map(|(c, _)| *c)
            .chain(self.avoid)
            .collect()
    }
}

impl Specialist<GridEnv> for RoutePlanner {
    fn name(&self) -> &str {
        PLANNER
    }

    fn propose(&mut self, env: &GridEnv, cycle: CycleIndex, meter: &mut StepMeter) -> Vec<Bid> {
        let world = &env.world;
        meter.charge((world.width * world.height) as u64);
        if world.robot == self.goal {
            return Vec::new();
        }
        let blocked = self.blocked(cycle);
        if let Some(alerted) = self.avoid {
            let mut wide = blocked.clone();
            wide.extend(Move::ALL.map(|m| alerted.step(m)));
            wide.remove(&world.robot);
            let plan = make_plan(world, self.goal, &wide)
                .or_else(|| make_plan(world, self.goal, &blocked))
                .unwrap_or(Payload::Plan {
                goal: self.goal,
                origin: world.robot,
                moves: Vec::new(),
            });
            return vec![Bid::new(plan, self.sal.avoid_plan)];
        }
        let fresh = make_plan(world, self.goal, &blocked);
        let held_remaining = self.held.as_ref().and_then(|h| {
            plan_position(h, world.robot)?;
            let ahead = remaining_cells(h, world.robot);
            (!ahead.is_empty() && ahead.iter().all(|c| !blocked.contains(c))).then_some(ahead.len())
        });
        let bid = match (held_remaining, fresh) {
            (Some(left), Some(f)) => {
                let shorter = matches!(&f, Payload::Plan { moves, .. } if moves.len() < left);
                if shorter {
                    f
                } else {
                    self.held.clone().expect("held plan")
                }
            }
            (Some(_), None) => self.held.clone().expect("held plan"),
            (None, Some(f)) => f,
            (None, None) => return Vec::new(),
        };
        vec![Bid::new(bid, self.sal.plan)]
    }

    fn receive(&mut self, content: &Content, cycle: CycleIndex, meter: &mut StepMeter) {
        meter.charge(1);
        match content.payload() {
            Payload::Goal { target } => {
                if *target != self.goal {
                    self.goal = *target;
                    self.held = None;
                }
            }
            p @ Payload::Plan { goal, .. } => {
                if *goal == self.goal {
                    self.held = Some(p.clone());
                    self.avoid = None;
                }
            }
            Payload::Alert { cell } => {
                self.avoid = Some(*cell);
                self.humans.insert(*cell, cycle);
            }
            Payload::Percept {
                label,
                cell: Some(c),
            } if label == "human" => {
                self.humans.insert(*c, cycle);
            }
            _ => {}
        }
    }
}

/// Turns a broadcast voice instruction into a goal bid.
pub struct VoiceParser {
    sal: Saliences,
    pending: Option<Payload>,
}

impl VoiceParser {
    pub fn new(sal: Saliences) -> Self {
        VoiceParser { sal, pending: None }
    }
}

impl Specialist<GridEnv> for VoiceParser {
    fn name(&self) -> &str {
        VOICE
    }

    fn propose(&mut self, _env: &GridEnv, _cycle: CycleIndex, meter: &mut StepMeter) -> Vec<Bid> {
        meter.charge(1);
        self.pending
            .iter()
            .map(|g| Bid::new(g.clone(), self.sal.goal))
            .collect()
    }

    fn receive(&mut self, content: &Content, _cycle: CycleIndex, meter: &mut StepMeter) {
        meter.charge(1);
        let p = content.payload();
        if let Some(goal) = parse_instruction(p) {
            self.pending = Some(goal);
        } else if self.pending.as_ref() == Some(p) {
            self.pending = None;
        }
    }
}

/// Executes one move of the adopted plan per Apply phase. Only plans that
/// start from the robot's current cell are adopted; any alert halts it.
pub struct Motor {
    goal: Cell,
    plan: Option<Payload>,
    offered: Option<Payload>,
}

impl Motor {
    pub fn new(goal: Cell) -> Self {
        Motor {
            goal,
            plan: None,
            offered: None,
        }
    }

    pub fn plan(&self) -> Option<&Payload> {
        self.plan.as_ref()
    }
}

impl Specialist<GridEnv> for Motor {
    fn name(&self) -> &str {
        MOTOR
    }

    fn propose(&mut self, _env: &GridEnv, _cycle: CycleIndex, _meter: &mut StepMeter) -> Vec<Bid> {
        Vec::new()
    }

    fn receive(&mut self, content: &Content, _cycle: CycleIndex, meter: &mut StepMeter) {
        meter.charge(1);
        match content.payload() {
            Payload::Goal { target } if *target != self.goal => {
                self.goal = *target;
                self.plan = None;
            }
            p @ Payload::Plan { goal, .. } if *goal == self.goal => self.offered = Some(p.clone()),
            Payload::Alert { .. } => {
                self.plan = None;
                self.offered = None;
            }
            _ => {}
        }
    }

    fn act(&mut self, env: &GridEnv, _cycle: CycleIndex) -> Vec<GridAction> {
        if let Some(p @ Payload::Plan { origin, .. }) = self.offered.take() {
            if origin == env.world.robot {
                self.plan = Some(p);
            }
        }
        self.plan
            .as_ref()
            .and_then(|p| next_move(p, env.world.robot))
            .map(|m| vec![GridAction::Move(m)])
            .unwrap_or_default()
    }

    fn as_any(&self) -> Option<&dyn Any> {
        Some(self)
    }
}
