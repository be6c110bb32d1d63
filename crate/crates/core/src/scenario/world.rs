use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{invalid, ScenarioError};
use crate::engine::{Applied, Environment};
use crate::memory::Outcome;
use crate::types::{Cell, Content, CycleIndex, Move, Payload};

/// A human walking a scripted path, one cell per tick, then standing still.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanTrack {
    pub name: String,
    pub path: Vec<Cell>,
}

impl HumanTrack {
    pub fn at(&self, tick: u64) -> Cell {
        let i = (tick as usize).min(self.path.len() - 1);
        self.path[i]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridWorld {
    pub width: i32,
    pub height: i32,
    pub obstacles: BTreeSet<Cell>,
    pub humans: Vec<HumanTrack>,
    pub robot: Cell,
    pub goal: Cell,
    #[serde(default)]
    pub tick: u64,
}

impl GridWorld {
    pub fn in_bounds(&self, c: Cell) -> bool {
        (0..self.width).contains(&c.x) && (0..self.height).contains(&c.y)
    }

    pub fn passable(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.obstacles.contains(&c)
    }

    pub fn human_cells(&self) -> Vec<Cell> {
        let mut cells: Vec<Cell> = self.humans.iter().map(|h| h.at(self.tick)).collect();
        cells.sort();
        cells.dedup();
        cells
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.width < 1 || self.height < 1 {
            return Err(invalid("world.width", "dimensions must be positive"));
        }
        if let Some(c) = self.obstacles.iter().find(|c| !self.in_bounds(**c)) {
            return Err(invalid("world.obstacles", format!("{c} is out of bounds")));
        }
        if !self.passable(self.robot) {
            return Err(invalid("world.robot", format!("{} is not a free cell", self.robot)));
        }
        if !self.passable(self.goal) {
            return Err(invalid("world.goal", format!("{} is not a free cell", self.goal)));
        }
        for (i, h) in self.humans.iter().enumerate() {
            if h.path.is_empty() {
                return Err(invalid(format!("world.humans[{i}].path"), "must not be empty"));
            }
            if let Some(c) = h.path.iter().find(|c| !self.in_bounds(**c)) {
                return Err(invalid(format!("world.humans[{i}].path"), format!("{c} is out of bounds")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GridAction {
    Move(Move),
}

/// Per-tick world record written into the Apply phase of the trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldDelta {
    pub tick: u64,
    pub robot: Cell,
    pub goal: Cell,
    pub moved: bool,
    pub collision: bool,
    pub at_goal: bool,
    pub humans: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEnv {
    pub world: GridWorld,
}

impl GridEnv {
    pub fn new(world: GridWorld) -> Self {
        GridEnv { world }
    }

    /// A chunk is contradicted by a collision or by carrying a stale goal.
    fn judge(&self, chunk: &Content, collision: bool) -> Outcome {
        let stale = chunk.interior().iter().any(|c| match c.payload() {
            Payload::Plan { goal, .. } | Payload::Goal { target: goal } => *goal != self.world.goal,
            _ => false,
        });
        if collision || stale {
            Outcome::Contradicted
        } else {
            Outcome::Confirmed
        }
    }
}

impl Environment for GridEnv {
    type Action = GridAction;

    fn on_inject(&mut self, payload: &Payload, _cycle: CycleIndex) {
        if let Payload::Instruction { goal } = payload {
            self.world.goal = *goal;
        }
    }

    fn step(
        &mut self,
        actions: Vec<(String, GridAction)>,
        winner: Option<&Content>,
        _cycle: CycleIndex,
    ) -> Applied {
        let mut notes = Vec::new();
        let mut moved = false;
        for (module, GridAction::Move(mv)) in actions {
            if moved {
                notes.push(format!("{module}: second move {mv:?} in one tick dropped"));
                continue;
            }
            let target = self.world.robot.step(mv);
            if self.world.passable(target) {
                self.world.robot = target;
                moved = true;
            } else {
                notes.push(format!("{module}: move {mv:?} into {target} dropped"));
            }
        }
        self.world.tick += 1;
        let humans = self.world.human_cells();
        let collision = humans.contains(&self.world.robot);
        let verdict = winner
            .filter(|w| matches!(w.payload(), Payload::ChunkRecall(_)))
            .map(|w| self.judge(w, collision));
        let delta = WorldDelta {
            tick: self.world.tick,
            robot: self.world.robot,
            goal: self.world.goal,
            moved,
            collision,
            at_goal: self.world.robot == self.world.goal,
            humans,
        };
        Applied {
            world: serde_json::to_value(delta).expect("delta serializes"),
            verdict,
            notes,
        }
    }
}
