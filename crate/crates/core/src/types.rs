//! Shared vocabulary: payloads, content keys, proposals and their canonical
//! byte encoding.
//!
//! # Canonical payload encoding
//!
//! Content keys are the 64-bit FNV-1a digest of the canonical encoding below.
//! All integers are little-endian.
//!
//! | variant       | tag  | body                                                        |
//! |---------------|------|-------------------------------------------------------------|
//! | `Percept`     | 0x01 | label len `u32`, label UTF-8 bytes, cell flag `u8` (0/1), [cell] |
//! | `Plan`        | 0x02 | goal cell, origin cell, move count `u32`, one `u8` per move   |
//! | `Goal`        | 0x03 | target cell                                                 |
//! | `Instruction` | 0x04 | goal cell                                                   |
//! | `Alert`       | 0x05 | cell                                                        |
//! | `ChunkRecall` | 0x06 | item count `u32`, then per item: byte len `u32`, item encoding |
//!
//! A cell is `x: i32` followed by `y: i32`. Moves encode as N=0, E=1, S=2, W=3.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Name reserved for externally injected events.
pub const EXTERNAL_ID: &str = "external";
/// Tie-break priority of external events; no module may register with it.
pub const EXTERNAL_PRIORITY: u32 = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TypeError {
    #[error("salience {0} outside [0, 1]")]
    SalienceRange(f64),
    #[error("salience is NaN")]
    SalienceNan,
    #[error("chunk recall must contain at least one item")]
    EmptyChunk,
    #[error("chunk recall may not contain another chunk recall")]
    NestedChunk,
    #[error("module name {0:?} must be non-empty ASCII without whitespace")]
    BadModuleName(String),
}

/// A grid cell. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    pub fn step(self, mv: Move) -> Cell {
        let (dx, dy) = mv.delta();
        Cell::new(self.x + dx, self.y + dy)
    }
}

impl From<(i32, i32)> for Cell {
    fn from((x, y): (i32, i32)) -> Self {
        Cell { x, y }
    }
}

impl From<Cell> for (i32, i32) {
    fn from(c: Cell) -> Self {
        (c.x, c.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// One 4-connected move. North decreases `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Move {
    N,
    E,
    S,
    W,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::N, Move::E, Move::S, Move::W];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Move::N => (0, -1),
            Move::E => (1, 0),
            Move::S => (0, 1),
            Move::W => (-1, 0),
        }
    }

    fn code(self) -> u8 {
        match self {
            Move::N => 0,
            Move::E => 1,
            Move::S => 2,
            Move::W => 3,
        }
    }
}

/// The closed set of things that can occupy the workspace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Payload {
    Percept { label: String, cell: Option<Cell> },
    Plan { goal: Cell, origin: Cell, moves: Vec<Move> },
    Goal { target: Cell },
    Instruction { goal: Cell },
    Alert { cell: Cell },
    ChunkRecall(Vec<Payload>),
}

impl Payload {
    pub fn percept(label: impl Into<String>, cell: Option<Cell>) -> Self {
        Payload::Percept {
            label: label.into(),
            cell,
        }
    }

    /// Builds a chunk, rejecting empty or nested interiors.
    pub fn chunk(interior: Vec<Payload>) -> Result<Self, TypeError> {
        let p = Payload::ChunkRecall(interior);
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        if let Payload::ChunkRecall(items) = self {
            if items.is_empty() {
                return Err(TypeError::EmptyChunk);
            }
            if items.iter().any(|i| matches!(i, Payload::ChunkRecall(_))) {
                return Err(TypeError::NestedChunk);
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Percept { .. } => "Percept",
            Payload::Plan { .. } => "Plan",
            Payload::Goal { .. } => "Goal",
            Payload::Instruction { .. } => "Instruction",
            Payload::Alert { .. } => "Alert",
            Payload::ChunkRecall(_) => "ChunkRecall",
        }
    }

    /// Path cells of a plan, origin first.
    pub fn plan_cells(&self) -> Option<Vec<Cell>> {
        match self {
            Payload::Plan { origin, moves, .. } => {
                let mut cells = Vec::with_capacity(moves.len() + 1);
                let mut at = *origin;
                cells.push(at);
                for mv in moves {
                    at = at.step(*mv);
                    cells.push(at);
                }
                Some(cells)
            }
            _ => None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        fn cell(out: &mut Vec<u8>, c: Cell) {
            out.extend_from_slice(&c.x.to_le_bytes());
            out.extend_from_slice(&c.y.to_le_bytes());
        }
        fn len(out: &mut Vec<u8>, n: usize) {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        match self {
            Payload::Percept { label, cell: c } => {
                out.push(0x01);
                len(out, label.len());
                out.extend_from_slice(label.as_bytes());
                match c {
                    Some(c) => {
                        out.push(1);
                        cell(out, *c);
                    }
                    None => out.push(0),
                }
            }
            Payload::Plan {
                goal,
                origin,
                moves,
            } => {
                out.push(0x02);
                cell(out, *goal);
                cell(out, *origin);
                len(out, moves.len());
                out.extend(moves.iter().map(|m| m.code()));
            }
            Payload::Goal { target } => {
                out.push(0x03);
                cell(out, *target);
            }
            Payload::Instruction { goal } => {
                out.push(0x04);
                cell(out, *goal);
            }
            Payload::Alert { cell: c } => {
                out.push(0x05);
                cell(out, *c);
            }
            Payload::ChunkRecall(items) => {
                out.push(0x06);
                len(out, items.len());
                for item in items {
                    let bytes = item.encode();
                    len(out, bytes.len());
                    out.extend_from_slice(&bytes);
                }
            }
        }
    }
}

/// Stable 64-bit digest of a payload's canonical encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentKey(pub u64);

impl fmt::Display for ContentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for ContentKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ContentKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16)
            .map(ContentKey)
            .map_err(serde::de::Error::custom)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

pub fn content_key(payload: &Payload) -> ContentKey {
    ContentKey(fnv1a(&payload.encode()))
}

/// Competitive strength of a proposal, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Salience(f64);

impl Salience {
    pub fn new(value: f64) -> Result<Self, TypeError> {
        if value.is_nan() {
            return Err(TypeError::SalienceNan);
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(TypeError::SalienceRange(value));
        }
        Ok(Salience(value))
    }

    /// Clamps into range; NaN maps to zero.
    pub fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Salience(0.0)
        } else {
            Salience(value.clamp(0.0, 1.0))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl<'de> Deserialize<'de> for Salience {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Salience::new(f64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModuleId {
    pub name: String,
    pub priority: u32,
}

impl ModuleId {
    pub fn new(name: impl Into<String>, priority: u32) -> Result<Self, TypeError> {
        let name = name.into();
        if name.is_empty() || !name.bytes().all(|b| b.is_ascii_graphic()) {
            return Err(TypeError::BadModuleName(name));
        }
        Ok(ModuleId { name, priority })
    }

    pub fn external() -> Self {
        ModuleId {
            name: EXTERNAL_ID.to_string(),
            priority: EXTERNAL_PRIORITY,
        }
    }
}

pub type CycleIndex = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct Content {
    key: ContentKey,
    payload: Payload,
    source: String,
    born_cycle: CycleIndex,
}

impl Content {
    pub fn new(
        payload: Payload,
        source: impl Into<String>,
        born_cycle: CycleIndex,
    ) -> Result<Self, TypeError> {
        payload.validate()?;
        Ok(Content {
            key: content_key(&payload),
            payload,
            source: source.into(),
            born_cycle,
        })
    }

    pub fn key(&self) -> ContentKey {
        self.key
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn born_cycle(&self) -> CycleIndex {
        self.born_cycle
    }

    /// Interior items of a chunk as contents attributed to the chunk's source.
    pub fn interior(&self) -> Vec<Content> {
        match &self.payload {
            Payload::ChunkRecall(items) => items
                .iter()
                .map(|p| Content {
                    key: content_key(p),
                    payload: p.clone(),
                    source: self.source.clone(),
                    born_cycle: self.born_cycle,
                })
                .collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub content: Content,
    pub salience: Salience,
    pub proposer: ModuleId,
}

impl Proposal {
    pub fn key(&self) -> ContentKey {
        self.content.key()
    }
}

/// Salience descending, proposer priority ascending, content key ascending.
pub fn canonical_cmp(a: &Proposal, b: &Proposal) -> Ordering {
    b.salience
        .get()
        .total_cmp(&a.salience.get())
        .then(a.proposer.priority.cmp(&b.proposer.priority))
        .then(a.key().cmp(&b.key()))
}

pub fn canonical_order(mut proposals: Vec<Proposal>) -> Vec<Proposal> {
    proposals.sort_by(canonical_cmp);
    proposals
}

#[cfg(test)]
mod tests {
    use super::*;

    fn goal(x: i32, y: i32) -> Payload {
        Payload::Goal {
            target: Cell::new(x, y),
        }
    }

    fn prop(salience: f64, prio: u32, payload: Payload) -> Proposal {
        Proposal {
            content: Content::new(payload, "m", 0).unwrap(),
            salience: Salience::new(salience).unwrap(),
            proposer: ModuleId::new(format!("m{prio}"), prio).unwrap(),
        }
    }

    #[test]
    fn equal_payloads_share_a_key() {
        assert_eq!(content_key(&goal(3, 3)), content_key(&goal(3, 3)));
        assert_ne!(content_key(&goal(3, 3)), content_key(&goal(3, 4)));
    }

    #[test]
    fn key_ignores_metadata() {
        let a = Content::new(goal(1, 2), "a", 0).unwrap();
        let b = Content::new(goal(1, 2), "b", 9).unwrap();
        assert_eq!(a.key(), b.key());
    }

    #[test]
    fn encoding_layout_is_pinned() {
        assert_eq!(
            goal(1, -1).encode(),
            vec![0x03, 1, 0, 0, 0, 0xff, 0xff, 0xff, 0xff]
        );
        assert_eq!(
            Payload::percept("ab", None).encode(),
            vec![0x01, 2, 0, 0, 0, b'a', b'b', 0]
        );
        let plan = Payload::Plan {
            goal: Cell::new(2, 0),
            origin: Cell::new(0, 0),
            moves: vec![Move::E, Move::S],
        };
        assert_eq!(
            plan.encode(),
            vec![0x02, 2, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 1, 2]
        );
        // FNV-1a of the empty input is the offset basis.
        assert_eq!(fnv1a(&[]), FNV_OFFSET);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn nested_chunk_rejected() {
        let inner = Payload::chunk(vec![goal(0, 0)]).unwrap();
        assert_eq!(
            Payload::chunk(vec![goal(1, 1), inner]),
            Err(TypeError::NestedChunk)
        );
        assert_eq!(Payload::chunk(vec![]), Err(TypeError::EmptyChunk));
        assert!(Content::new(Payload::ChunkRecall(vec![]), "m", 0).is_err());
    }

    #[test]
    fn salience_bounds() {
        assert!(Salience::new(f64::NAN).is_err());
        assert!(Salience::new(-0.01).is_err());
        assert!(Salience::new(1.01).is_err());
        assert_eq!(Salience::new(1.0).unwrap().get(), 1.0);
        assert_eq!(Salience::saturating(3.0).get(), 1.0);
        assert!(serde_json::from_str::<Salience>("1.5").is_err());
    }

    #[test]
    fn module_names_are_ascii_identifiers() {
        assert!(ModuleId::new("vision", 3).is_ok());
        assert!(ModuleId::new("", 3).is_err());
        assert!(ModuleId::new("two words", 3).is_err());
        assert!(ModuleId::new("é", 3).is_err());
    }

    #[test]
    fn ordering_examples() {
        assert!(canonical_order(vec![]).is_empty());
        let out = canonical_order(vec![prop(0.4, 1, goal(0, 0)), prop(0.9, 2, goal(0, 1))]);
        assert_eq!(out[0].salience.get(), 0.9);
        let out = canonical_order(vec![prop(0.5, 2, goal(0, 0)), prop(0.5, 1, goal(0, 1))]);
        assert_eq!(out[0].proposer.priority, 1);
    }

    #[test]
    fn key_serializes_as_hex() {
        let k = ContentKey(0xab);
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(s, "\"00000000000000ab\"");
        assert_eq!(serde_json::from_str::<ContentKey>(&s).unwrap(), k);
    }
}
