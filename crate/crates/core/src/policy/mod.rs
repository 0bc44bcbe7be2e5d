//! Defender policies: threshold rules, uniform and constant baselines, and
//! the softmax network trained with PPO.

mod eval;
mod io;
mod network;
mod ppo;

pub use eval::{evaluate_policy, EvalStats};
pub use io::{load_policy, save_policy, POLICY_FORMAT_VERSION};
pub use network::{Activation, Dense, ForwardCache, PolicyParameters};
pub use ppo::{
    gae_advantages, ppo_surrogate, ppo_train, ppo_train_with, Adam, IterationStats, PpoBatch,
    SurrogateOutput, TrainingConfig, TrainingStats,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_distribution, Belief, Observation, PomdpModel, PROB_TOLERANCE};

/// Fixed-size policy input: belief, normalized last observation, and
/// normalized time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyInput {
    pub belief: Vec<f64>,
    /// Each bin index divided by `B_m - 1`; all zeros before the first
    /// observation.
    pub last_observation: Vec<f64>,
    pub t_normalized: f64,
}

impl PolicyInput {
    pub fn new(belief: Vec<f64>, last_observation: Vec<f64>, t_normalized: f64) -> Result<Self> {
        check_distribution(&belief, PROB_TOLERANCE)
            .map_err(|m| Error::Validation(format!("belief {m}")))?;
        if let Some(v) = last_observation.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!(
                "normalized observation component {v} outside [0, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&t_normalized) {
            return Err(Error::Validation(format!(
                "normalized time {t_normalized} outside [0, 1]"
            )));
        }
        Ok(Self {
            belief,
            last_observation,
            t_normalized,
        })
    }

    /// Builds the input at time `t` of a `horizon`-step episode.
    pub fn from_model(
        model: &PomdpModel,
        belief: &Belief,
        last_observation: Option<&Observation>,
        t: usize,
        horizon: usize,
    ) -> Self {
        let last_observation = match last_observation {
            Some(obs) => obs
                .bins()
                .iter()
                .zip(&model.metrics)
                .map(|(&b, spec)| b as f64 / (spec.bins - 1) as f64)
                .collect(),
            None => vec![0.0; model.num_metrics()],
        };
        Self {
            belief: belief.probs().to_vec(),
            last_observation,
            t_normalized: (t as f64 / horizon.max(1) as f64).min(1.0),
        }
    }

    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.belief.len() + self.last_observation.len() + 1);
        f.extend_from_slice(&self.belief);
        f.extend_from_slice(&self.last_observation);
        f.push(self.t_normalized);
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, action: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[action] = 1.0;
        Self { probs }
    }

    pub fn from_logits(logits: &[f64]) -> Self {
        Self {
            probs: softmax(logits),
        }
    }

    pub fn prob(&self, action: usize) -> f64 {
        self.probs[action]
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySpaces {
    pub num_states: usize,
    pub num_defender_actions: usize,
    pub num_metrics: usize,
}

impl PolicySpaces {
    pub fn of(model: &PomdpModel) -> Self {
        Self {
            num_states: model.num_states(),
            num_defender_actions: model.num_defender_actions(),
            num_metrics: model.num_metrics(),
        }
    }

    pub fn feature_len(&self) -> usize {
        self.num_states + self.num_metrics + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Defends iff the belief mass on `alert_states` is at least `alpha`.
    Threshold {
        alpha: f64,
        alert_states: Vec<usize>,
        defend_action: usize,
        idle_action: usize,
    },
    Random,
    Constant { action: usize },
    Network(PolicyParameters),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub spaces: PolicySpaces,
    pub kind: PolicyKind,
}

impl Policy {
    /// Threshold rule over every non-terminal state except state 0, defending
    /// with the action named `defend` (or action 1).
    pub fn threshold(model: &PomdpModel, alpha: f64) -> Self {
        let alert_states = (1..model.num_states())
            .filter(|s| !model.is_terminal(*s))
            .collect();
        let defend_action = model
            .defender_action_index("defend")
            .unwrap_or(1.min(model.num_defender_actions() - 1));
        let idle_action = model.defender_action_index("continue").unwrap_or(0);
        Self {
            spaces: PolicySpaces::of(model),
            kind: PolicyKind::Threshold {
                alpha,
                alert_states,
                defend_action,
                idle_action,
            },
        }
    }

    pub fn random(model: &PomdpModel) -> Self {
        Self {
            spaces: PolicySpaces::of(model),
            kind: PolicyKind::Random,
        }
    }

    pub fn constant(model: &PomdpModel, action: usize) -> Self {
        Self {
            spaces: PolicySpaces::of(model),
            kind: PolicyKind::Constant { action },
        }
    }

    /// Always plays action 0 (`continue` in the intrusion scenario).
    pub fn never_defend(model: &PomdpModel) -> Self {
        Self::constant(model, model.defender_action_index("continue").unwrap_or(0))
    }

    pub fn network(model: &PomdpModel, params: PolicyParameters) -> Result<Self> {
        let spaces = PolicySpaces::of(model);
        let sizes = params.layer_sizes();
        if sizes[0] != spaces.feature_len() || *sizes.last().unwrap() != spaces.num_defender_actions
        {
            return Err(Error::Incompatible(format!(
                "network layers {sizes:?} do not fit {} features and {} actions",
                spaces.feature_len(),
                spaces.num_defender_actions
            )));
        }
        Ok(Self {
            spaces,
            kind: PolicyKind::Network(params),
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            PolicyKind::Threshold { .. } => "threshold",
            PolicyKind::Random => "random",
            PolicyKind::Constant { .. } => "constant",
            PolicyKind::Network(_) => "network",
        }
    }

    pub fn check_compatible(&self, model: &PomdpModel) -> Result<()> {
        if self.spaces != PolicySpaces::of(model) {
            return Err(Error::Incompatible(format!(
                "policy spaces {:?} do not match model {:?}",
                self.spaces,
                PolicySpaces::of(model)
            )));
        }
        Ok(())
    }

    pub fn predict(&self, input: &PolicyInput) -> Result<ActionDistribution> {
        if input.belief.len() != self.spaces.num_states
            || input.last_observation.len() != self.spaces.num_metrics
        {
            return Err(Error::Incompatible(format!(
                "input has {} belief entries and {} metrics, policy expects {} and {}",
                input.belief.len(),
                input.last_observation.len(),
                self.spaces.num_states,
                self.spaces.num_metrics
            )));
        }
        let n = self.spaces.num_defender_actions;
        Ok(match &self.kind {
            PolicyKind::Threshold {
                alpha,
                alert_states,
                defend_action,
                idle_action,
            } => {
                let mass: f64 = alert_states.iter().map(|&s| input.belief[s]).sum();
                if mass >= *alpha {
                    ActionDistribution::point_mass(n, *defend_action)
                } else {
                    ActionDistribution::point_mass(n, *idle_action)
                }
            }
            PolicyKind::Random => ActionDistribution::uniform(n),
            PolicyKind::Constant { action } => ActionDistribution::point_mass(n, *action),
            PolicyKind::Network(params) => {
                let (logits, _) = params.forward(&input.features())?;
                ActionDistribution::from_logits(&logits)
            }
        })
    }
}
