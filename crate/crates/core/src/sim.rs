//! Episode simulation.
//!
//! [`EpisodeRunner`] is the single place where an episode advances; batch
//! simulation, evaluation, training, and the debugger all drive it, so they
//! consume the random stream identically. Per episode the draw order is:
//! the initial hidden state, then for every step the defender's action
//! followed by [`PomdpModel::environment_step`]'s draws.
//!
//! The runner distinguishes the *defender's* model (used for belief
//! filtering) from the *environment* model (used to generate the hidden
//! process). They are usually the same; a mismatch lets a policy be examined
//! against traffic its model did not anticipate.

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Belief, Observation, PomdpModel, StepOutcome};
use crate::policy::{save_policy, ActionDistribution, Policy, PolicyInput};
use crate::rng::SimRng;
use crate::trace::{EpisodeTrace, StepRecord, TerminationReason, TraceHeader};

#[derive(Debug, Clone)]
pub struct Transition {
    pub t: usize,
    pub prev_state: usize,
    pub defender_action: usize,
    pub action_distribution: ActionDistribution,
    pub outcome: StepOutcome,
    pub belief_after: Belief,
}

#[derive(Debug, Clone)]
pub struct EpisodeRunner {
    defender: Arc<PomdpModel>,
    environment: Arc<PomdpModel>,
    rng: SimRng,
    state: usize,
    belief: Belief,
    last_observation: Option<Observation>,
    t: usize,
    horizon: usize,
    finished: Option<TerminationReason>,
}

impl EpisodeRunner {
    pub fn new(
        defender: Arc<PomdpModel>,
        environment: Arc<PomdpModel>,
        seed: u64,
        horizon: Option<usize>,
    ) -> Result<Self> {
        defender.ensure_valid()?;
        environment.ensure_valid()?;
        if !defender.same_spaces(&environment) {
            return Err(Error::Incompatible(
                "defender and environment models have different spaces".into(),
            ));
        }
        if environment
            .initial_distribution
            .iter()
            .enumerate()
            .any(|(s, &p)| p > 0.0 && environment.is_terminal(s))
        {
            return Err(Error::Incompatible(
                "initial distribution places mass on a terminal state".into(),
            ));
        }
        let horizon = horizon.unwrap_or(environment.horizon);
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let mut rng = SimRng::new(seed);
        let state = environment.sample_initial_state(&mut rng);
        let belief = defender.initial_belief()?;
        Ok(Self {
            defender,
            environment,
            rng,
            state,
            belief,
            last_observation: None,
            t: 0,
            horizon,
            finished: None,
        })
    }

    /// Runner over a single model.
    pub fn single(model: Arc<PomdpModel>, seed: u64, horizon: Option<usize>) -> Result<Self> {
        Self::new(model.clone(), model, seed, horizon)
    }

    pub fn defender_model(&self) -> &PomdpModel {
        &self.defender
    }

    pub fn environment_model(&self) -> &PomdpModel {
        &self.environment
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn last_observation(&self) -> Option<&Observation> {
        self.last_observation.as_ref()
    }

    pub fn finished(&self) -> Option<TerminationReason> {
        self.finished
    }

    /// Replaces the random stream, e.g. when forking a session.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = SimRng::new(seed);
    }

    pub fn policy_input(&self) -> PolicyInput {
        PolicyInput::from_model(
            &self.defender,
            &self.belief,
            self.last_observation.as_ref(),
            self.t,
            self.horizon,
        )
    }

    /// Samples the defender's action from `dist` and advances one step.
    /// On error the runner is left unchanged.
    pub fn advance(&mut self, dist: &ActionDistribution) -> Result<Transition> {
        if self.finished.is_some() {
            return Err(Error::Finished);
        }
        if dist.probs.len() != self.defender.num_defender_actions() {
            return Err(Error::Incompatible(format!(
                "action distribution has {} entries, model has {} actions",
                dist.probs.len(),
                self.defender.num_defender_actions()
            )));
        }
        let mut rng = self.rng.clone();
        let action = rng.categorical(&dist.probs);
        let outcome = self
            .environment
            .environment_step(self.state, action, &mut rng)?;
        let belief_after = self
            .defender
            .belief_update(&self.belief, action, &outcome.observation)?;

        let prev_state = self.state;
        self.rng = rng;
        self.t += 1;
        self.state = outcome.next_state;
        self.belief = belief_after.clone();
        self.last_observation = Some(outcome.observation.clone());
        if self.environment.is_terminal(self.state) {
            self.finished = Some(TerminationReason::TerminalState);
        } else if self.t >= self.horizon {
            self.finished = Some(TerminationReason::Horizon);
        }
        Ok(Transition {
            t: self.t,
            prev_state,
            defender_action: action,
            action_distribution: dist.clone(),
            outcome,
            belief_after,
        })
    }
}

/// Simulates one episode of `model` under `policy`.
pub fn simulate_episode(
    model: &PomdpModel,
    policy: &Policy,
    seed: u64,
    horizon_override: Option<usize>,
) -> Result<EpisodeTrace> {
    let model = Arc::new(model.clone());
    simulate_episode_in(model.clone(), model, policy, seed, horizon_override)
}

/// Simulates with separate defender and environment models.
pub fn simulate_episode_in(
    defender: Arc<PomdpModel>,
    environment: Arc<PomdpModel>,
    policy: &Policy,
    seed: u64,
    horizon_override: Option<usize>,
) -> Result<EpisodeTrace> {
    policy.check_compatible(&defender)?;
    let mut runner = EpisodeRunner::new(defender, environment, seed, horizon_override)?;
    let mut steps = Vec::new();
    while runner.finished().is_none() {
        let dist = policy.predict(&runner.policy_input())?;
        let tr = runner.advance(&dist)?;
        steps.push(StepRecord {
            t: tr.t,
            state: tr.outcome.next_state,
            attacker_action: tr.outcome.attacker_action,
            defender_action: tr.defender_action,
            observation: tr.outcome.observation,
            reward: tr.outcome.reward,
            belief_after: Some(tr.belief_after),
        });
    }
    let env = runner.environment_model();
    let trace_id = simulated_trace_id(env, policy, seed, runner.horizon());
    Ok(EpisodeTrace {
        header: TraceHeader {
            trace_id,
            scenario: env.name.clone(),
            config_hash: env.config_hash.clone(),
            seed: Some(seed),
            terminated_reason: runner.finished(),
        },
        steps,
    })
}

/// Deterministic id derived from everything that determines the episode.
fn simulated_trace_id(env: &PomdpModel, policy: &Policy, seed: u64, horizon: usize) -> String {
    let mut h = Sha256::new();
    h.update(env.name.as_bytes());
    h.update(env.config_hash.as_bytes());
    h.update(save_policy(policy));
    h.update(seed.to_le_bytes());
    h.update((horizon as u64).to_le_bytes());
    format!("sim-{}", &hex::encode(h.finalize())[..16])
}
