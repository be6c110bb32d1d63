//! Append-only cycle trace and its JSON Lines form.
//!
//! Each line is one event with keys in the fixed order `cycle`, `phase`,
//! `detail`. A run may end with a single `{"metrics": {...}}` line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::Outcome;
use crate::types::{ContentKey, CycleIndex, Payload, Proposal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Inject,
    Collect,
    Select,
    Broadcast,
    Apply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: CycleIndex,
    #[serde(flatten)]
    pub entry: Entry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", content = "detail")]
pub enum Entry {
    Inject(InjectRecord),
    Collect(CollectRecord),
    Select(SelectRecord),
    Broadcast(BroadcastRecord),
    Apply(ApplyRecord),
}

impl TraceEvent {
    pub fn phase(&self) -> Phase {
        match self.entry {
            Entry::Inject(_) => Phase::Inject,
            Entry::Collect(_) => Phase::Collect,
            Entry::Select(_) => Phase::Select,
            Entry::Broadcast(_) => Phase::Broadcast,
            Entry::Apply(_) => Phase::Apply,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectRecord {
    pub key: ContentKey,
    pub payload: Payload,
    pub salience: f64,
    /// Requested arrival, possibly fractional.
    pub arrival: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub proposer: String,
    pub priority: u32,
    pub key: ContentKey,
    pub salience: f64,
    pub payload: Payload,
}

impl From<&Proposal> for ProposalRecord {
    fn from(p: &Proposal) -> Self {
        ProposalRecord {
            proposer: p.proposer.name.clone(),
            priority: p.proposer.priority,
            key: p.key(),
            salience: p.salience.get(),
            payload: p.content.payload().clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectRecord {
    pub proposals: Vec<ProposalRecord>,
    pub faulted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub key: ContentKey,
    pub proposer: String,
    /// `null` when the policy excluded the proposal.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinnerRecord {
    pub proposer: String,
    pub key: ContentKey,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectRecord {
    pub winner: Option<WinnerRecord>,
    pub scoreboard: Vec<ScoreRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastRecord {
    pub proposer: String,
    pub key: ContentKey,
    pub payload: Payload,
    /// Modules that acknowledged delivery, in priority order.
    pub receivers: Vec<String>,
    /// Interior keys of a chunk delivered within this cycle.
    pub collapsed: Vec<ContentKey>,
    pub faulted: Vec<String>,
}

impl BroadcastRecord {
    /// Payloads made visible this cycle: chunk interiors, or the winner itself.
    pub fn delivered(&self) -> Vec<&Payload> {
        match &self.payload {
            Payload::ChunkRecall(items) => items.iter().collect(),
            p => vec![p],
        }
    }

    pub fn delivered_keys(&self) -> Vec<ContentKey> {
        if self.collapsed.is_empty() {
            vec![self.key]
        } else {
            self.collapsed.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub module: String,
    pub action: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyRecord {
    pub actions: Vec<ActionRecord>,
    pub world: serde_json::Value,
    pub verdict: Option<Outcome>,
    pub notes: Vec<String>,
}

pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Error)]
#[error("trace line {line}: {message}")]
pub struct TraceParseError {
    pub line: usize,
    pub message: String,
}

/// Parses a trace, skipping a trailing metrics line if present.
pub fn parse_jsonl(text: &str) -> Result<Vec<TraceEvent>, TraceParseError> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with("{\"metrics\"") {
            continue;
        }
        let ev: TraceEvent = serde_json::from_str(line).map_err(|e| TraceParseError {
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(ev);
    }
    Ok(events)
}

pub fn broadcasts(events: &[TraceEvent]) -> impl Iterator<Item = (CycleIndex, &BroadcastRecord)> {
    events.iter().filter_map(|e| match &e.entry {
        Entry::Broadcast(b) => Some((e.cycle, b)),
        _ => None,
    })
}

/// Every key made visible by broadcasts, chunks expanded in interior order.
pub fn broadcast_key_stream(events: &[TraceEvent]) -> Vec<ContentKey> {
    broadcasts(events).flat_map(|(_, b)| b.delivered_keys()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{content_key, Cell};

    #[test]
    fn line_keys_in_fixed_order() {
        let payload = Payload::Goal {
            target: Cell::new(1, 2),
        };
        let ev = TraceEvent {
            cycle: 3,
            entry: Entry::Select(SelectRecord {
                winner: Some(WinnerRecord {
                    proposer: "m1".into(),
                    key: content_key(&payload),
                    score: 0.5,
                }),
                scoreboard: vec![],
            }),
        };
        let line = serde_json::to_string(&ev).unwrap();
        assert!(line.starts_with("{\"cycle\":3,\"phase\":\"Select\",\"detail\":{\"winner\":"));
        let back = parse_jsonl(&format!("{line}\n")).unwrap();
        assert_eq!(back, vec![ev]);
    }

    #[test]
    fn bad_line_is_named() {
        let good = to_jsonl(&[TraceEvent {
            cycle: 0,
            entry: Entry::Collect(CollectRecord {
                proposals: vec![],
                faulted: vec![],
            }),
        }]);
        let text = format!("{good}{{\"cycle\":1,\"phase\":\"Nope\"}}\n");
        let err = parse_jsonl(&text).unwrap_err();
        assert_eq!(err.line, 2);
    }

    #[test]
    fn metrics_line_is_skipped() {
        let text = "{\"metrics\":{\"cycles\":0}}\n";
        assert!(parse_jsonl(text).unwrap().is_empty());
    }
}
