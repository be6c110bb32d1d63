//! Metrics recomputed from a trace alone.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::world::WorldDelta;
use crate::trace::{broadcasts, parse_jsonl, Entry, TraceEvent, TraceParseError};
use crate::types::{CycleIndex, Payload};

/// A cycle or step count, or `"unreached"` when the event never happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Count {
    Value(u64),
    Unreached,
}

impl Count {
    pub fn value(self) -> Option<u64> {
        match self {
            Count::Value(v) => Some(v),
            Count::Unreached => None,
        }
    }
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Count::Value(v) => write!(f, "{v}"),
            Count::Unreached => f.write_str("unreached"),
        }
    }
}

impl Serialize for Count {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Count::Value(v) => s.serialize_u64(*v),
            Count::Unreached => s.serialize_str("unreached"),
        }
    }
}

impl<'de> Deserialize<'de> for Count {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(v) => Ok(Count::Value(v)),
            Raw::S(s) if s == "unreached" => Ok(Count::Unreached),
            Raw::S(s) => Err(serde::de::Error::custom(format!("expected a count, found {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cycles: u64,
    /// Moves committed until the robot first stands on its final goal.
    pub steps_to_goal: Option<Count>,
    pub collisions: u64,
    /// Worst gap between an instruction and the first plan for its goal.
    pub adaptation_latency: Option<Count>,
    /// Cycles avoided by chunk broadcasts within this trace.
    pub cycles_saved: u64,
}

fn deltas(events: &[TraceEvent]) -> Vec<(CycleIndex, WorldDelta)> {
    events
        .iter()
        .filter_map(|e| match &e.entry {
            Entry::Apply(a) => serde_json::from_value::<WorldDelta>(a.world.clone())
                .ok()
                .map(|d| (e.cycle, d)),
            _ => None,
        })
        .collect()
}

pub fn metrics(events: &[TraceEvent]) -> MetricsReport {
    let cycles = events.iter().map(|e| e.cycle + 1).max().unwrap_or(0);
    let instructions: Vec<(CycleIndex, Payload)> = events
        .iter()
        .filter_map(|e| match &e.entry {
            Entry::Inject(i) if matches!(i.payload, Payload::Instruction { .. }) => {
                Some((e.cycle, i.payload.clone()))
            }
            _ => None,
        })
        .collect();
    let last_instruction = instructions.iter().map(|(c, _)| *c).max().unwrap_or(0);

    let world = deltas(events);
    let steps_to_goal = (!world.is_empty()).then(|| {
        let mut moves = 0;
        for (cycle, d) in &world {
            moves += u64::from(d.moved);
            if d.at_goal && *cycle >= last_instruction {
                return Count::Value(moves);
            }
        }
        Count::Unreached
    });
    let collisions = world.iter().filter(|(_, d)| d.collision).count() as u64;

    let adaptation_latency = (!instructions.is_empty()).then(|| {
        let mut worst = Count::Value(0);
        for (at, instruction) in &instructions {
            let Payload::Instruction { goal } = instruction else {
                continue;
            };
            let answered = broadcasts(events).find(|(c, b)| {
                *c >= *at
                    && b.delivered()
                        .iter()
                        .any(|p| matches!(p, Payload::Plan { goal: g, .. } if g == goal))
            });
            worst = match (worst, answered) {
                (Count::Value(w), Some((c, _))) => Count::Value(w.max(c - at)),
                _ => Count::Unreached,
            };
        }
        worst
    });

    let cycles_saved = broadcasts(events)
        .map(|(_, b)| b.collapsed.len().saturating_sub(1) as u64)
        .sum();

    MetricsReport {
        cycles,
        steps_to_goal,
        collisions,
        adaptation_latency,
        cycles_saved,
    }
}

pub fn compute_metrics(jsonl: &str) -> Result<MetricsReport, TraceParseError> {
    Ok(metrics(&parse_jsonl(jsonl)?))
}

/// The trailing trace line carrying a run's metrics.
pub fn metrics_line(report: &MetricsReport) -> String {
    let v = serde_json::json!({ "metrics": report });
    format!("{v}\n")
}

fn cell(v: Option<Count>) -> String {
    v.map_or_else(|| "-".to_string(), |c| c.to_string())
}

const ROWS: [&str; 5] = ["cycles", "steps_to_goal", "collisions", "adaptation_latency", "cycles_saved"];

fn row_values(r: &MetricsReport) -> [String; 5] {
    [
        r.cycles.to_string(),
        cell(r.steps_to_goal),
        r.collisions.to_string(),
        cell(r.adaptation_latency),
        r.cycles_saved.to_string(),
    ]
}

fn signed(a: Option<u64>, b: Option<u64>) -> String {
    match (a, b) {
        (Some(a), Some(b)) => format!("{:+}", a as i64 - b as i64),
        _ => "-".to_string(),
    }
}

fn aligned(labels: &[String], cols: &[Vec<String>]) -> String {
    let first = ROWS.iter().map(|n| n.len()).max().unwrap_or(0).max("metric".len());
    let widths: Vec<usize> = labels
        .iter()
        .zip(cols)
        .map(|(label, col)| col.iter().map(String::len).max().unwrap_or(0).max(label.len()))
        .collect();
    let mut out = format!("{:<first$}", "metric");
    for (label, w) in labels.iter().zip(&widths) {
        out.push_str(&format!("  {label:>w$}"));
    }
    out.push('\n');
    for (i, name) in ROWS.iter().enumerate() {
        out.push_str(&format!("{name:<first$}"));
        for (col, w) in cols.iter().zip(&widths) {
            out.push_str(&format!("  {:>w$}", col[i]));
        }
        out.push('\n');
    }
    out
}

/// Aligned text table, one column per labelled report.
pub fn render_table(columns: &[(String, MetricsReport)]) -> String {
    let labels: Vec<String> = columns.iter().map(|(l, _)| l.clone()).collect();
    let cols: Vec<Vec<String>> = columns.iter().map(|(_, r)| row_values(r).to_vec()).collect();
    aligned(&labels, &cols)
}

/// Two reports side by side plus a `delta` column (`a − b`); `-` where either
/// side has no value.
pub fn render_comparison(a: (&str, &MetricsReport), b: (&str, &MetricsReport)) -> String {
    let (ra, rb) = (a.1, b.1);
    let value = |c: Option<Count>| c.and_then(Count::value);
    let delta = vec![
        signed(Some(ra.cycles), Some(rb.cycles)),
        signed(value(ra.steps_to_goal), value(rb.steps_to_goal)),
        signed(Some(ra.collisions), Some(rb.collisions)),
        signed(value(ra.adaptation_latency), value(rb.adaptation_latency)),
        signed(Some(ra.cycles_saved), Some(rb.cycles_saved)),
    ];
    let labels = vec![a.0.to_string(), b.0.to_string(), "delta".to_string()];
    aligned(&labels, &[row_values(ra).to_vec(), row_values(rb).to_vec(), delta])
}
