use serde::{Deserialize, Serialize};

use super::Frame;
use crate::error::{Error, Result};
use crate::model::PomdpModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Ge,
    Le,
}

impl Comparison {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparison::Ge => lhs >= rhs,
            Comparison::Le => lhs <= rhs,
        }
    }
}

/// Condition over a produced frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Predicate {
    TimeEquals { t: usize },
    DefenderActionIs { action: usize },
    BeliefThreshold { state: usize, op: Comparison, value: f64 },
    MetricThreshold { metric: usize, op: Comparison, bin: usize },
    All { predicates: Vec<Predicate> },
}

impl Predicate {
    pub fn matches(&self, frame: &Frame) -> bool {
        match self {
            Predicate::TimeEquals { t } => frame.t == *t,
            Predicate::DefenderActionIs { action } => frame.defender_action == Some(*action),
            Predicate::BeliefThreshold { state, op, value } => frame
                .belief
                .probs()
                .get(*state)
                .is_some_and(|b| op.holds(*b, *value)),
            Predicate::MetricThreshold { metric, op, bin } => frame
                .observation
                .as_ref()
                .and_then(|o| o.bins().get(*metric))
                .is_some_and(|b| op.holds(*b as f64, *bin as f64)),
            Predicate::All { predicates } => predicates.iter().all(|p| p.matches(frame)),
        }
    }

    /// Rejects references outside the model's spaces.
    pub fn check(&self, model: &PomdpModel) -> Result<()> {
        match self {
            Predicate::TimeEquals { .. } => Ok(()),
            Predicate::DefenderActionIs { action } => {
                if *action < model.num_defender_actions() {
                    Ok(())
                } else {
                    Err(Error::Range(format!("defender action {action} out of range")))
                }
            }
            Predicate::BeliefThreshold { state, value, .. } => {
                if *state >= model.num_states() {
                    Err(Error::Range(format!("state {state} out of range")))
                } else if !value.is_finite() {
                    Err(Error::Range("threshold must be finite".into()))
                } else {
                    Ok(())
                }
            }
            Predicate::MetricThreshold { metric, bin, .. } => match model.metrics.get(*metric) {
                None => Err(Error::Range(format!("metric {metric} out of range"))),
                Some(spec) if *bin >= spec.bins => {
                    Err(Error::Range(format!("bin {bin} out of range for metric {metric}")))
                }
                Some(_) => Ok(()),
            },
            Predicate::All { predicates } => {
                if predicates.is_empty() {
                    return Err(Error::Range("empty conjunction".into()));
                }
                predicates.iter().try_for_each(|p| p.check(model))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub id: u64,
    pub predicate: Predicate,
}
