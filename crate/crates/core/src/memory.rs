//! Episodic memory: records the stream of conscious contents and recalls a
//! previously seen continuation as a single chunk.
//!
//! The index maps every key suffix of length `1..=max_suffix` to the keys that
//! followed it. Each continuation keeps an occurrence count and a confidence.
//! Without reinforcement the confidence equals `count / total` for its suffix.
//! New observations rescale existing confidences by `total / (total + 1)` and
//! credit `1 / (total + 1)` to the observed successor, so feedback applied by
//! [`EpisodeStore::reinforce`] persists through later observations.

use std::any::Any;
use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Bid, Environment, Specialist, StepMeter};
use crate::types::{content_key, Content, ContentKey, CycleIndex, Payload};

pub const SNAPSHOT_FORMAT: &str = "gwt-episodic-memory";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Confirmed,
    Contradicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub max_suffix: usize,
    pub max_chunk: usize,
    pub recall_threshold: f64,
    /// Chunk salience is `base_salience × confidence`.
    pub base_salience: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            max_suffix: 3,
            max_chunk: 4,
            recall_threshold: 0.1,
            base_salience: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    pub next: ContentKey,
    pub count: u64,
    pub confidence: f64,
}

/// Identifies a recalled chunk by the suffix that triggered it and its first item.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChunkId {
    pub suffix: Vec<ContentKey>,
    pub first: ContentKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkProposal {
    pub id: ChunkId,
    pub interior: Vec<Payload>,
    pub confidence: f64,
    pub salience: f64,
}

impl ChunkProposal {
    pub fn payload(&self) -> Payload {
        Payload::ChunkRecall(self.interior.clone())
    }
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("unknown chunk (suffix of {} keys, first {})", .0.suffix.len(), .0.first)]
    UnknownChunk(ChunkId),
    #[error("snapshot format {found:?} version {version}, expected {SNAPSHOT_FORMAT:?} version {SNAPSHOT_VERSION}")]
    Version { found: String, version: u32 },
    #[error("snapshot is malformed: {0}")]
    Malformed(String),
    #[error("snapshot io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStore {
    config: MemoryConfig,
    log: Vec<(ContentKey, CycleIndex)>,
    payloads: BTreeMap<ContentKey, Payload>,
    index: BTreeMap<Vec<ContentKey>, Vec<Continuation>>,
}

impl EpisodeStore {
    pub fn new(config: MemoryConfig) -> Self {
        EpisodeStore {
            config,
            log: Vec::new(),
            payloads: BTreeMap::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    pub fn set_config(&mut self, config: MemoryConfig) {
        self.config = config;
    }

    pub fn log(&self) -> &[(ContentKey, CycleIndex)] {
        &self.log
    }

    pub fn continuations(&self, suffix: &[ContentKey]) -> &[Continuation] {
        self.index.get(suffix).map_or(&[], Vec::as_slice)
    }

    /// Appends a broadcast content; chunks are recorded item by item.
    pub fn observe(&mut self, payload: &Payload, cycle: CycleIndex) {
        match payload {
            Payload::ChunkRecall(items) => {
                for item in items {
                    self.observe_one(item, cycle);
                }
            }
            p => self.observe_one(p, cycle),
        }
    }

    fn observe_one(&mut self, payload: &Payload, cycle: CycleIndex) {
        let key = content_key(payload);
        let keys: Vec<ContentKey> = self.log.iter().map(|(k, _)| *k).collect();
        for len in 1..=self.config.max_suffix.min(keys.len()) {
            let suffix = keys[keys.len() - len..].to_vec();
            let entries = self.index.entry(suffix).or_default();
            let total: u64 = entries.iter().map(|e| e.count).sum();
            let scale = total as f64 / (total + 1) as f64;
            for e in entries.iter_mut() {
                e.confidence *= scale;
            }
            let credit = 1.0 / (total + 1) as f64;
            match entries.iter_mut().find(|e| e.next == key) {
                Some(e) => {
                    e.count += 1;
                    e.confidence = (e.confidence + credit).clamp(0.0, 1.0);
                }
                None => entries.push(Continuation {
                    next: key,
                    count: 1,
                    confidence: credit.clamp(0.0, 1.0),
                }),
            }
        }
        self.log.push((key, cycle));
        self.payloads.entry(key).or_insert_with(|| payload.clone());
    }

    /// Longest stored suffix of `tail`, and its preferred continuation.
    fn best_continuation(&self, tail: &[ContentKey]) -> Option<(Vec<ContentKey>, &Continuation)> {
        for len in (1..=self.config.max_suffix.min(tail.len())).rev() {
            let suffix = &tail[tail.len() - len..];
            if let Some(entries) = self.index.get(suffix) {
                let best = entries.iter().max_by(|a, b| {
                    a.confidence
                        .total_cmp(&b.confidence)
                        .then(a.count.cmp(&b.count))
                        .then(b.next.cmp(&a.next))
                })?;
                return Some((suffix.to_vec(), best));
            }
        }
        None
    }

    pub fn recall(&self, recent: &[ContentKey]) -> Vec<ChunkProposal> {
        let threshold = self.config.recall_threshold;
        let Some((suffix, first)) = self.best_continuation(recent) else {
            return Vec::new();
        };
        if first.confidence < threshold {
            return Vec::new();
        }
        let Some(p) = self.payloads.get(&first.next) else {
            return Vec::new();
        };
        let confidence = first.confidence;
        let id = ChunkId {
            suffix,
            first: first.next,
        };
        let mut interior = vec![p.clone()];
        let mut tail: Vec<ContentKey> = recent.to_vec();
        tail.push(first.next);
        while interior.len() < self.config.max_chunk {
            let Some((_, c)) = self.best_continuation(&tail) else {
                break;
            };
            if c.confidence < threshold {
                break;
            }
            let Some(p) = self.payloads.get(&c.next) else {
                break;
            };
            interior.push(p.clone());
            tail.push(c.next);
        }
        vec![ChunkProposal {
            id,
            interior,
            confidence,
            salience: (self.config.base_salience * confidence).clamp(0.0, 1.0),
        }]
    }

    pub fn reinforce(&mut self, chunk: &ChunkId, outcome: Outcome) -> Result<f64, MemoryError> {
        let entry = self
            .index
            .get_mut(&chunk.suffix)
            .and_then(|es| es.iter_mut().find(|e| e.next == chunk.first))
            .ok_or_else(|| MemoryError::UnknownChunk(chunk.clone()))?;
        entry.confidence = match outcome {
            Outcome::Confirmed => (entry.confidence + 0.1).min(1.0),
            Outcome::Contradicted => entry.confidence * 0.5,
        };
        Ok(entry.confidence)
    }

    #[cfg(test)]
    pub(crate) fn set_confidence(&mut self, chunk: &ChunkId, confidence: f64) {
        for e in self.index.get_mut(&chunk.suffix).unwrap() {
            if e.next == chunk.first {
                e.confidence = confidence;
            }
        }
    }

    pub fn to_snapshot(&self) -> Snapshot {
        Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            config: self.config,
            log: self
                .log
                .iter()
                .map(|(key, cycle)| LogEntry {
                    key: *key,
                    cycle: *cycle,
                })
                .collect(),
            payloads: self
                .payloads
                .iter()
                .map(|(key, payload)| PayloadEntry {
                    key: *key,
                    payload: payload.clone(),
                })
                .collect(),
            index: self
                .index
                .iter()
                .map(|(suffix, continuations)| IndexEntry {
                    suffix: suffix.clone(),
                    continuations: continuations.clone(),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snap: Snapshot) -> Result<Self, MemoryError> {
        if snap.format != SNAPSHOT_FORMAT || snap.version != SNAPSHOT_VERSION {
            return Err(MemoryError::Version {
                found: snap.format,
                version: snap.version,
            });
        }
        let mut payloads = BTreeMap::new();
        for p in snap.payloads {
            if content_key(&p.payload) != p.key {
                return Err(MemoryError::Malformed(format!("payload key {} mismatch", p.key)));
            }
            payloads.insert(p.key, p.payload);
        }
        Ok(EpisodeStore {
            config: snap.config,
            log: snap.log.into_iter().map(|l| (l.key, l.cycle)).collect(),
            payloads,
            index: snap
                .index
                .into_iter()
                .map(|e| (e.suffix, e.continuations))
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_snapshot()).expect("snapshot serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, MemoryError> {
        let snap: Snapshot =
            serde_json::from_str(text).map_err(|e| MemoryError::Malformed(e.to_string()))?;
        Self::from_snapshot(snap)
    }

    pub fn save(&self, path: &Path) -> Result<(), MemoryError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk layout of an [`EpisodeStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub config: MemoryConfig,
    pub log: Vec<LogEntry>,
    pub payloads: Vec<PayloadEntry>,
    pub index: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub key: ContentKey,
    pub cycle: CycleIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadEntry {
    pub key: ContentKey,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub suffix: Vec<ContentKey>,
    pub continuations: Vec<Continuation>,
}

/// Specialist wrapper: observes every broadcast and bids recalled chunks.
#[derive(Debug, Clone)]
pub struct EpisodicMemory {
    name: String,
    store: EpisodeStore,
    /// Keys broadcast during the current run only.
    recent: Vec<ContentKey>,
    proposed: BTreeMap<ContentKey, ChunkId>,
}

impl EpisodicMemory {
    pub fn new(name: impl Into<String>, store: EpisodeStore) -> Self {
        EpisodicMemory {
            name: name.into(),
            store,
            recent: Vec::new(),
            proposed: BTreeMap::new(),
        }
    }

    pub fn store(&self) -> &EpisodeStore {
        &self.store
    }

    pub fn into_store(self) -> EpisodeStore {
        self.store
    }
}

impl<E: Environment> Specialist<E> for EpisodicMemory {
    fn name(&self) -> &str {
        &self.name
    }

    fn propose(&mut self, _env: &E, _cycle: CycleIndex, meter: &mut StepMeter) -> Vec<Bid> {
        meter.charge(self.recent.len().min(self.store.config.max_suffix) as u64 + 1);
        self.store
            .recall(&self.recent)
            .into_iter()
            .map(|c| {
                let payload = c.payload();
                self.proposed.insert(content_key(&payload), c.id.clone());
                Bid::new(payload, c.salience)
            })
            .collect()
    }

    fn receive(&mut self, content: &Content, cycle: CycleIndex, meter: &mut StepMeter) {
        meter.charge(self.store.config.max_suffix as u64 + 1);
        self.store.observe(content.payload(), cycle);
        match content.payload() {
            Payload::ChunkRecall(items) => self.recent.extend(items.iter().map(content_key)),
            _ => self.recent.push(content.key()),
        }
        let keep = self.store.config.max_suffix;
        if self.recent.len() > keep {
            self.recent.drain(..self.recent.len() - keep);
        }
    }

    fn on_outcome(&mut self, chunk: &Content, outcome: Outcome) -> Option<String> {
        if chunk.source() != self.name {
            return None;
        }
        let Some(id) = self.proposed.get(&chunk.key()) else {
            return Some(format!("memory: reinforce of unknown chunk {}", chunk.key()));
        };
        match self.store.reinforce(id, outcome) {
            Ok(_) => None,
            Err(e) => Some(format!("memory: {e}")),
        }
    }

    fn as_any(&self) -> Option<&dyn Any> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Payload {
        Payload::percept(s, None)
    }

    fn k(s: &str) -> ContentKey {
        content_key(&p(s))
    }

    fn store_with(seq: &[&str]) -> EpisodeStore {
        let mut s = EpisodeStore::new(MemoryConfig::default());
        for (i, x) in seq.iter().enumerate() {
            s.observe(&p(x), i as u64);
        }
        s
    }

    /// Counts occurrences of `next` directly after `suffix` by scanning the raw sequence.
    fn scan_count(seq: &[&str], suffix: &[&str], next: &str) -> u64 {
        let n = suffix.len();
        (n..seq.len())
            .filter(|&i| &seq[i - n..i] == suffix && seq[i] == next)
            .count() as u64
    }

    #[test]
    fn index_after_abc() {
        let s = store_with(&["A", "B", "C"]);
        assert_eq!(s.continuations(&[k("A")])[0].next, k("B"));
        assert_eq!(s.continuations(&[k("A"), k("B")])[0].next, k("C"));
        assert_eq!(s.continuations(&[k("B")])[0].next, k("C"));
        assert!(s.continuations(&[k("C")]).is_empty());
    }

    #[test]
    fn first_observation_has_no_continuations() {
        let s = store_with(&["A"]);
        assert_eq!(s.log().len(), 1);
        assert!(s.index.is_empty());
    }

    #[test]
    fn repeated_pair_counts_twice() {
        let seq = ["A", "B", "A", "B"];
        let s = store_with(&seq);
        let c = &s.continuations(&[k("A")])[0];
        assert_eq!(c.count, scan_count(&seq, &["A"], "B"));
        assert_eq!(c.count, 2);
    }

    #[test]
    fn counts_match_brute_force_scanner() {
        let seq = ["A", "B", "C", "A", "B", "D", "A", "C", "B", "A", "B", "C"];
        let s = store_with(&seq);
        for (suffix, entries) in &s.index {
            let names: Vec<&str> = suffix
                .iter()
                .map(|key| *seq.iter().find(|x| k(x) == *key).unwrap())
                .collect();
            let total: u64 = entries.iter().map(|e| e.count).sum();
            for e in entries {
                let next = *seq.iter().find(|x| k(x) == e.next).unwrap();
                assert_eq!(e.count, scan_count(&seq, &names, next));
                assert!((e.confidence - e.count as f64 / total as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn recall_continuation_chunk() {
        let s = store_with(&["A", "B", "C"]);
        let chunks = s.recall(&[k("A")]);
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].interior, vec![p("B"), p("C")]);
        assert!((chunks[0].salience - 0.6).abs() < 1e-12);
        assert!(s.recall(&[k("Z")]).is_empty());
        assert!(s.recall(&[]).is_empty());
    }

    #[test]
    fn ambiguous_history_prefers_frequent_successor() {
        let seq = ["A", "B", "X", "A", "D", "Y", "A", "B"];
        let s = store_with(&seq);
        let chunk = &s.recall(&[k("A")])[0];
        assert_eq!(chunk.interior[0], p("B"));
        let total = scan_count(&seq, &["A"], "B") + scan_count(&seq, &["A"], "D");
        let oracle = scan_count(&seq, &["A"], "B") as f64 / total as f64;
        assert!((chunk.confidence - oracle).abs() < 1e-12);
        assert!((chunk.confidence - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn chunk_length_is_capped() {
        let mut s = store_with(&["A", "B", "C", "D", "E", "F"]);
        assert_eq!(s.recall(&[k("A")])[0].interior.len(), 4);
        s.set_config(MemoryConfig {
            max_chunk: 1,
            ..MemoryConfig::default()
        });
        assert_eq!(s.recall(&[k("A")])[0].interior, vec![p("B")]);
    }

    #[test]
    fn reinforce_rules() {
        let mut s = store_with(&["A", "B"]);
        let id = s.recall(&[k("A")])[0].id.clone();
        s.set_confidence(&id, 0.8);
        assert!((s.reinforce(&id, Outcome::Contradicted).unwrap() - 0.4).abs() < 1e-12);
        s.set_confidence(&id, 0.95);
        assert_eq!(s.reinforce(&id, Outcome::Confirmed).unwrap(), 1.0);
        s.set_confidence(&id, 0.15);
        let c = s.reinforce(&id, Outcome::Contradicted).unwrap();
        assert!((c - 0.075).abs() < 1e-12);
        assert!(s.recall(&[k("A")]).is_empty());
        let unknown = ChunkId {
            suffix: vec![k("Q")],
            first: k("R"),
        };
        assert!(matches!(
            s.reinforce(&unknown, Outcome::Confirmed),
            Err(MemoryError::UnknownChunk(_))
        ));
    }

    #[test]
    fn chunk_broadcast_is_logged_item_by_item() {
        let mut s = store_with(&["A"]);
        s.observe(&Payload::chunk(vec![p("B"), p("C")]).unwrap(), 1);
        let keys: Vec<_> = s.log().iter().map(|(key, _)| *key).collect();
        assert_eq!(keys, vec![k("A"), k("B"), k("C")]);
    }

    #[test]
    fn snapshot_version_checked() {
        let s = store_with(&["A", "B", "C"]);
        let back = EpisodeStore::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        let bumped = s.to_json().replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(
            EpisodeStore::from_json(&bumped),
            Err(MemoryError::Version { version: 9, .. })
        ));
        assert!(matches!(
            EpisodeStore::from_json("{"),
            Err(MemoryError::Malformed(_))
        ));
    }
}
