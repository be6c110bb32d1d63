//! Scenario files, the grid-world robot cast, the fixed-pipeline baseline and
//! trace-derived metrics.
//!
//! A scenario file is JSON:
//!
//! ```text
//! {
//!   "schema_version": 1,
//!   "name": "room-goal-switch",
//!   "kind": "grid" | "chain",
//!   "world": { width, height, obstacles, humans, robot, goal, tick },   // grid only
//!   "chain": { length, salience, modules },                             // chain only
//!   "events": [ { "cycle": 10.0, "payload": {...}, "salience": 0.7 } ],
//!   "stop": "at_goal" | "chain_end" | "max_cycles",
//!   "seed": 7,
//!   "max_cycles": 200,
//!   "saliences": { alert, goal, plan, avoid_plan, context_boost, clear }
//! }
//! ```

pub mod chain;
pub mod metrics;
pub mod pipeline;
pub mod route;
pub mod runner;
pub mod specialists;
pub mod world;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::ExternalEvent;
use crate::types::{Payload, TypeError};

pub use chain::ChainSpec;
pub use world::{GridWorld, HumanTrack};

pub const SCHEMA_VERSION: u32 = 1;

pub const BUNDLED: [(&str, &str); 4] = [
    ("room-goal-switch", include_str!("../../scenarios/room-goal-switch.json")),
    ("human-crossing", include_str!("../../scenarios/human-crossing.json")),
    ("corridor-repeat", include_str!("../../scenarios/corridor-repeat.json")),
    ("fig4-abstract", include_str!("../../scenarios/fig4-abstract.json")),
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario not found: {0}")]
    NotFound(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Grid,
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopSpec {
    AtGoal,
    ChainEnd,
    MaxCycles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub cycle: f64,
    pub payload: Payload,
    pub salience: f64,
}

impl EventSpec {
    pub fn to_event(&self) -> Result<ExternalEvent, TypeError> {
        ExternalEvent::new(self.payload.clone(), self.salience, self.cycle)
    }
}

/// Salience constants for the grid cast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Saliences {
    pub alert: f64,
    pub goal: f64,
    pub plan: f64,
    pub avoid_plan: f64,
    pub context_boost: f64,
    pub clear: f64,
}

impl Default for Saliences {
    fn default() -> Self {
        Saliences {
            alert: 0.9,
            goal: 0.8,
            plan: 0.5,
            avoid_plan: 0.85,
            context_boost: 0.2,
            clear: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<GridWorld>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSpec>,
    pub events: Vec<EventSpec>,
    pub stop: StopSpec,
    pub seed: u64,
    pub max_cycles: u64,
    #[serde(default)]
    pub saliences: Saliences,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    /// Pretty JSON with a trailing newline; bundled fixtures are stored in this form.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        if self.max_cycles == 0 {
            return Err(invalid("max_cycles", "must be at least 1"));
        }
        match self.kind {
            ScenarioKind::Grid => {
                let world = self
                    .world
                    .as_ref()
                    .ok_or_else(|| invalid("world", "grid scenarios need a world"))?;
                if self.chain.is_some() {
                    return Err(invalid("chain", "not allowed in grid scenarios"));
                }
                world.validate()?;
                if self.stop == StopSpec::ChainEnd {
                    return Err(invalid("stop", "chain_end needs a chain scenario"));
                }
            }
            ScenarioKind::Chain => {
                let chain = self
                    .chain
                    .as_ref()
                    .ok_or_else(|| invalid("chain", "chain scenarios need a chain"))?;
                if self.world.is_some() {
                    return Err(invalid("world", "not allowed in chain scenarios"));
                }
                chain.validate()?;
                if self.stop == StopSpec::AtGoal {
                    return Err(invalid("stop", "at_goal needs a grid scenario"));
                }
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            let field = |f: &str| format!("events[{i}].{f}");
            if !e.cycle.is_finite() || e.cycle < 0.0 {
                return Err(invalid(field("cycle"), "must be a finite number ≥ 0"));
            }
            e.to_event().map_err(|err| match err {
                TypeError::SalienceNan | TypeError::SalienceRange(_) => {
                    invalid(field("salience"), err.to_string())
                }
                _ => invalid(field("payload"), err.to_string()),
            })?;
            if let (Some(w), Payload::Instruction { goal }) = (&self.world, &e.payload) {
                if !w.passable(*goal) {
                    return Err(invalid(field("payload"), format!("goal {goal} is not a free cell")));
                }
            }
        }
        let s = &self.saliences;
        for (name, v) in [
            ("alert", s.alert),
            ("goal", s.goal),
            ("plan", s.plan),
            ("avoid_plan", s.avoid_plan),
            ("context_boost", s.context_boost),
            ("clear", s.clear),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("saliences.{name}"), "must be in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn events(&self) -> Vec<ExternalEvent> {
        self.events
            .iter()
            .map(|e| e.to_event().expect("validated"))
            .collect()
    }

    /// Cycle by which every scripted event has been released.
    pub fn last_release(&self) -> Option<u64> {
        self.events().iter().map(ExternalEvent::release_cycle).max()
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            ScenarioError::NotFound(path.display().to_string())
        } else {
            ScenarioError::Io {
                path: path.display().to_string(),
                source,
            }
        }
    })?;
    Scenario::parse(&text)
}

pub fn bundled(name: &str) -> Option<Result<Scenario, ScenarioError>> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::parse(text))
}

/// Accepts a file path or the name of a bundled fixture.
pub fn resolve(arg: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(arg);
    if path.exists() {
        return load_scenario(path);
    }
    bundled(arg).unwrap_or_else(|| Err(ScenarioError::NotFound(arg.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Cell;

    #[test]
    fn bundled_fixtures_round_trip_byte_identically() {
        for (name, text) in BUNDLED {
            let s = Scenario::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
            assert_eq!(s.to_json(), text, "{name} is not in canonical form");
        }
    }

    #[test]
    fn room_goal_switch_shape() {
        let s = bundled("room-goal-switch").unwrap().unwrap();
        let w = s.world.as_ref().unwrap();
        assert_eq!((w.width, w.height), (9, 9));
        assert!(s
            .events
            .iter()
            .any(|e| e.cycle == 10.0 && matches!(e.payload, Payload::Instruction { .. })));
    }

    #[test]
    fn goal_on_obstacle_is_rejected() {
        let mut s = bundled("room-goal-switch").unwrap().unwrap();
        let w = s.world.as_mut().unwrap();
        let blocked = *w.obstacles.iter().next().unwrap();
        w.goal = blocked;
        let err = Scenario::parse(&s.to_json()).unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { ref field, .. } if field == "world.goal"), "{err}");
    }

    #[test]
    fn empty_event_list_is_valid() {
        let mut s = bundled("room-goal-switch").unwrap().unwrap();
        s.events.clear();
        assert!(Scenario::parse(&s.to_json()).is_ok());
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "{\n  \"schema_version\": 1,\n  \"name\": oops\n}";
        match Scenario::parse(text) {
            Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_event_fields_are_named() {
        let mut s = bundled("room-goal-switch").unwrap().unwrap();
        s.events[0].salience = 1.5;
        match Scenario::parse(&s.to_json()) {
            Err(ScenarioError::Invalid { field, .. }) => assert_eq!(field, "events[0].salience"),
            other => panic!("{other:?}"),
        }
        let mut s = bundled("room-goal-switch").unwrap().unwrap();
        s.events[0].payload = Payload::Instruction {
            goal: Cell::new(40, 40),
        };
        match Scenario::parse(&s.to_json()) {
            Err(ScenarioError::Invalid { field, .. }) => assert_eq!(field, "events[0].payload"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_name_is_not_found() {
        assert!(matches!(resolve("no-such-scenario"), Err(ScenarioError::NotFound(_))));
    }
}
