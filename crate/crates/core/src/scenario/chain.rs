//! Abstract chain scenario: modules take turns proposing the items
//! `c1 … cL`, each waiting for its predecessor to be broadcast.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{invalid, ScenarioError};
use crate::engine::{Bid, NullWorld, Specialist, StepMeter};
use crate::types::{content_key, Content, ContentKey, CycleIndex, ModuleId, Payload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub length: usize,
    pub salience: f64,
    pub modules: Vec<String>,
}

impl ChainSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.length == 0 {
            return Err(invalid("chain.length", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.salience) {
            return Err(invalid("chain.salience", "must be in [0, 1]"));
        }
        if self.modules.is_empty() {
            return Err(invalid("chain.modules", "needs at least one module"));
        }
        for (i, m) in self.modules.iter().enumerate() {
            ModuleId::new(m.clone(), 1).map_err(|e| invalid(format!("chain.modules[{i}]"), e.to_string()))?;
            if self.modules[..i].contains(m) {
                return Err(invalid(format!("chain.modules[{i}]"), "duplicate name"));
            }
        }
        Ok(())
    }

    pub fn item(&self, i: usize) -> Payload {
        Payload::percept(format!("c{}", i + 1), None)
    }

    pub fn keys(&self) -> Vec<ContentKey> {
        (0..self.length).map(|i| content_key(&self.item(i))).collect()
    }

    pub fn owner(&self, i: usize) -> &str {
        &self.modules[i % self.modules.len()]
    }

    pub fn cast(&self) -> Vec<ChainModule> {
        self.modules
            .iter()
            .enumerate()
            .map(|(slot, name)| ChainModule {
                name: name.clone(),
                slot,
                spec: self.clone(),
                keys: self.keys(),
                next: 0,
            })
            .collect()
    }
}

pub struct ChainModule {
    name: String,
    slot: usize,
    spec: ChainSpec,
    keys: Vec<ContentKey>,
    next: usize,
}

impl ChainModule {
    pub fn next_index(&self) -> usize {
        self.next
    }
}

impl Specialist<NullWorld> for ChainModule {
    fn name(&self) -> &str {
        &self.name
    }

    fn propose(&mut self, _env: &NullWorld, _cycle: CycleIndex, meter: &mut StepMeter) -> Vec<Bid> {
        meter.charge(1);
        if self.next % self.spec.modules.len() != self.slot {
            return Vec::new();
        }
        vec![Bid::new(self.spec.item(self.next), self.spec.salience)]
    }

    fn receive(&mut self, content: &Content, _cycle: CycleIndex, meter: &mut StepMeter) {
        meter.charge(1);
        if let Some(i) = self.keys.iter().position(|k| *k == content.key()) {
            self.next = (i + 1) % self.spec.length;
        }
    }

    fn as_any(&self) -> Option<&dyn Any> {
        Some(self)
    }
}
