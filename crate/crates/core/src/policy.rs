//! Scoring and single-winner selection.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::WorkspaceState;
use crate::types::{ContentKey, Proposal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    MaxSalience,
    Threshold { theta: f64 },
    /// score = salience × decay^(occurrences of the key in history)
    RecencyDecay { decay: f64 },
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec::RecencyDecay { decay: 0.5 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("unknown policy {0:?} (expected max, threshold:<θ> or recency:<λ>)")]
    Unknown(String),
    #[error("policy parameter {0:?} is not a number in [0, 1]")]
    Parameter(String),
}

impl PolicySpec {
    pub fn validate(self) -> Result<Self, PolicyError> {
        let p = match self {
            PolicySpec::MaxSalience => return Ok(self),
            PolicySpec::Threshold { theta } => theta,
            PolicySpec::RecencyDecay { decay } => decay,
        };
        if (0.0..=1.0).contains(&p) {
            Ok(self)
        } else {
            Err(PolicyError::Parameter(p.to_string()))
        }
    }
}

impl FromStr for PolicySpec {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let s = s.strip_prefix("policy=").unwrap_or(s);
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let param = |a: Option<&str>| -> Result<f64, PolicyError> {
            let a = a.ok_or_else(|| PolicyError::Parameter(String::new()))?;
            let v: f64 = a.parse().map_err(|_| PolicyError::Parameter(a.to_string()))?;
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(PolicyError::Parameter(a.to_string()))
            }
        };
        match name {
            "max" | "max-salience" if arg.is_none() => Ok(PolicySpec::MaxSalience),
            "threshold" => Ok(PolicySpec::Threshold { theta: param(arg)? }),
            "recency" => Ok(PolicySpec::RecencyDecay { decay: param(arg)? }),
            _ => Err(PolicyError::Unknown(s.to_string())),
        }
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::MaxSalience => write!(f, "max"),
            PolicySpec::Threshold { theta } => write!(f, "threshold:{theta}"),
            PolicySpec::RecencyDecay { decay } => write!(f, "recency:{decay}"),
        }
    }
}

/// `None` marks a proposal excluded from the competition.
pub fn score(policy: PolicySpec, proposal: &Proposal, state: &WorkspaceState) -> Option<f64> {
    let s = proposal.salience.get();
    match policy {
        PolicySpec::MaxSalience => Some(s),
        PolicySpec::Threshold { theta } => (s >= theta).then_some(s),
        PolicySpec::RecencyDecay { decay } => {
            let repeats = state.occurrences(proposal.key());
            Some(s * decay.powi(repeats as i32))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub winner: Option<Proposal>,
    pub winner_score: Option<f64>,
    /// One entry per input proposal, in input (canonical) order.
    pub scoreboard: Vec<(ContentKey, Option<f64>)>,
}

/// Picks the maximal score; on equal scores the earlier canonical position wins.
pub fn select(policy: PolicySpec, proposals: &[Proposal], state: &WorkspaceState) -> SelectionOutcome {
    let scoreboard: Vec<(ContentKey, Option<f64>)> = proposals
        .iter()
        .map(|p| (p.key(), score(policy, p, state)))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, (_, s)) in scoreboard.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    SelectionOutcome {
        winner: best.map(|(i, _)| proposals[i].clone()),
        winner_score: best.map(|(_, s)| s),
        scoreboard,
    }
}
