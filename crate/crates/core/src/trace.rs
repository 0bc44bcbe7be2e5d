//! Episode traces and their line-delimited interchange format.
//!
//! A trace is one JSON header line followed by one JSON line per step:
//!
//! ```text
//! {"trace_id":"…","scenario":"intrusion-default","config_hash":"…","seed":7,"terminated_reason":"horizon"}
//! {"t":1,"state":0,"attacker_action":0,"defender_action":0,"observation":[1,0,4],"reward":1.0,"belief_after":[1.0,0.0,0.0,0.0]}
//! ```
//!
//! `state` is the hidden state *after* the step's transition (the state
//! whose attacker emitted `attacker_action` and whose metrics produced
//! `observation`); `reward` is the reward of `defender_action` in the state
//! before the transition. `seed` and `terminated_reason` are omitted for
//! traces that did not come from the simulator. Floats are written in their
//! shortest round-trip decimal form, so parsing and re-writing a canonical
//! trace reproduces it byte for byte.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Belief, Observation, PomdpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Horizon,
    TerminalState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub t: usize,
    pub state: usize,
    pub attacker_action: usize,
    pub defender_action: usize,
    pub observation: Observation,
    pub reward: f64,
    pub belief_after: Option<Belief>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub trace_id: String,
    pub scenario: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminated_reason: Option<TerminationReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
}

impl EpisodeTrace {
    pub fn trace_id(&self) -> &str {
        &self.header.trace_id
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Canonical interchange form.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).expect("step serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        Self::read(text.as_bytes())
    }

    /// Parses the interchange format, reporting 1-based line numbers.
    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut header: Option<TraceHeader> = None;
        let mut steps: Vec<StepRecord> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::Ingest {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                return Err(Error::Ingest {
                    line: line_no,
                    message: "blank line".into(),
                });
            }
            match header {
                None => {
                    header = Some(serde_json::from_str(&line).map_err(|e| Error::Ingest {
                        line: line_no,
                        message: format!("invalid header: {e}"),
                    })?);
                }
                Some(_) => {
                    let step: StepRecord =
                        serde_json::from_str(&line).map_err(|e| Error::Ingest {
                            line: line_no,
                            message: format!("invalid step record: {e}"),
                        })?;
                    let expected = steps.last().map_or(1, |s| s.t + 1);
                    if step.t != expected {
                        return Err(Error::Ingest {
                            line: line_no,
                            message: format!("expected t = {expected}, found t = {}", step.t),
                        });
                    }
                    steps.push(step);
                }
            }
        }
        let header = header.ok_or_else(|| Error::Ingest {
            line: 1,
            message: "missing header".into(),
        })?;
        if steps.is_empty() {
            return Err(Error::Ingest {
                line: 2,
                message: "trace has no steps".into(),
            });
        }
        Ok(Self { header, steps })
    }

    /// Checks every id and bin against `model`'s spaces and the horizon.
    pub fn check_against(&self, model: &PomdpModel) -> Result<()> {
        if self.steps.len() > model.horizon {
            return Err(Error::Incompatible(format!(
                "trace has {} steps, horizon is {}",
                self.steps.len(),
                model.horizon
            )));
        }
        for step in &self.steps {
            let bad = |what: &str, v: usize, n: usize| {
                Error::Incompatible(format!("step t={}: {what} {v} out of range ({n})", step.t))
            };
            if step.state >= model.num_states() {
                return Err(bad("state", step.state, model.num_states()));
            }
            if step.attacker_action >= model.num_attacker_actions() {
                return Err(bad(
                    "attacker_action",
                    step.attacker_action,
                    model.num_attacker_actions(),
                ));
            }
            if step.defender_action >= model.num_defender_actions() {
                return Err(bad(
                    "defender_action",
                    step.defender_action,
                    model.num_defender_actions(),
                ));
            }
            model
                .check_observation(&step.observation)
                .map_err(|e| Error::Incompatible(format!("step t={}: {e}", step.t)))?;
        }
        Ok(())
    }
}
