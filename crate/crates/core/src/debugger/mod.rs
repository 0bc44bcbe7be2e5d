//! Step-through debugging of POMDP episodes.
//!
//! A [`DebugSession`] walks an episode one frame at a time, either driving a
//! live simulation or replaying a recorded trace. Frame 0 is the
//! pre-episode state (`t = 0`, belief `ρ₁`); frame `t` holds the action taken
//! at step `t`, the resulting observation and reward, and the belief after
//! filtering. Its `action_distribution` is what the policy outputs *given*
//! frame `t`, i.e. the distribution the next action is drawn from.
//!
//! Every produced frame is kept. Reversing moves the cursor back through the
//! history; stepping forward again replays stored frames instead of
//! resampling. In simulation mode each frame also stores the simulator
//! state after it, so [`DebugSession::fork`] can branch from any frame.

mod breakpoint;

pub use breakpoint::{Breakpoint, Comparison, Predicate};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Belief, Observation, PomdpModel};
use crate::policy::{ActionDistribution, Policy, PolicyInput};
use crate::sim::EpisodeRunner;
use crate::trace::{EpisodeTrace, TerminationReason};

#[derive(Debug, Clone)]
pub enum SessionSource {
    Simulation {
        model: Arc<PomdpModel>,
        /// Generates the hidden process; defaults to `model`.
        environment: Option<Arc<PomdpModel>>,
        policy: Arc<Policy>,
        seed: u64,
        horizon: Option<usize>,
    },
    Replay {
        trace: Arc<EpisodeTrace>,
        model: Arc<PomdpModel>,
        overlay: Option<Arc<Policy>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    Manual,
    Autoplay { interval_ms: u64 },
}

impl Mode {
    pub fn autoplay() -> Self {
        Mode::Autoplay { interval_ms: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Halted,
    Running,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HaltReason {
    User,
    Breakpoint { id: u64 },
    Terminal,
    Horizon,
    ImpossibleObservation { t: usize, unnormalized: Vec<f64> },
}

/// Ground truth shown in the attacker panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerView {
    pub state: usize,
    pub state_name: String,
    pub attacker_action: Option<usize>,
    pub attacker_action_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: usize,
    pub belief: Belief,
    /// Absent in replay sessions without an overlay policy.
    pub action_distribution: Option<ActionDistribution>,
    pub defender_action: Option<usize>,
    pub observation: Option<Observation>,
    /// Predictive distribution of each metric under the defender's belief
    /// before this frame's observation was seen.
    pub metric_distributions: Vec<Vec<f64>>,
    /// Hidden when the session's `reveal_attacker` is off.
    pub attacker: Option<AttackerView>,
    pub reward: f64,
    pub cumulative_reward: f64,
    pub halt_reason: Option<HaltReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfReport {
    pub action: usize,
    pub action_name: String,
    /// `Σ_s b(s)·R[s][a]`.
    pub expected_reward: f64,
    /// `R[s][a]` for the true hidden state, when it is known.
    pub reward: Option<f64>,
    pub predicted_belief: Belief,
    pub metric_distributions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub source: String,
    pub scenario: String,
    pub mode: Mode,
    pub status: Status,
    pub cursor: usize,
    pub history_len: usize,
    pub breakpoints: usize,
    pub reveal_attacker: bool,
}

#[derive(Debug, Clone)]
pub struct DebugSession {
    id: String,
    source: SessionSource,
    mode: Mode,
    status: Status,
    cursor: usize,
    frames: Vec<Frame>,
    /// Simulator state after each frame (simulation mode only).
    snapshots: Vec<EpisodeRunner>,
    /// Index of the last frame and why the episode ended, once reached.
    end: Option<(usize, TerminationReason)>,
    /// Set when the frame after the last one cannot be produced.
    stalled: Option<HaltReason>,
    breakpoints: BTreeMap<u64, Predicate>,
    next_breakpoint: u64,
    halt_reason: Option<HaltReason>,
    reveal_attacker: bool,
}

enum Advance {
    Moved,
    Stalled(HaltReason),
}

impl DebugSession {
    pub fn new(source: SessionSource, mode: Mode) -> Result<Self> {
        let mut session = Self {
            id: uuid::Uuid::new_v4().to_string(),
            source,
            mode,
            status: Status::Halted,
            cursor: 0,
            frames: Vec::new(),
            snapshots: Vec::new(),
            end: None,
            stalled: None,
            breakpoints: BTreeMap::new(),
            next_breakpoint: 1,
            halt_reason: None,
            reveal_attacker: true,
        };
        let frame0 = match &session.source {
            SessionSource::Simulation {
                model,
                environment,
                policy,
                seed,
                horizon,
            } => {
                policy.check_compatible(model)?;
                let env = environment.clone().unwrap_or_else(|| model.clone());
                let runner = EpisodeRunner::new(model.clone(), env, *seed, *horizon)?;
                let belief = runner.belief().clone();
                let frame = Frame {
                    t: 0,
                    action_distribution: Some(policy.predict(&runner.policy_input())?),
                    defender_action: None,
                    observation: None,
                    metric_distributions: model.metric_marginals(&belief)?,
                    attacker: Some(attacker_view(runner.environment_model(), runner.state(), None)),
                    belief,
                    reward: 0.0,
                    cumulative_reward: 0.0,
                    halt_reason: None,
                };
                session.snapshots.push(runner);
                frame
            }
            SessionSource::Replay {
                trace,
                model,
                overlay,
            } => {
                if trace.header.scenario != model.name {
                    return Err(Error::Incompatible(format!(
                        "trace {} is from scenario {}, model is {}",
                        trace.trace_id(),
                        trace.header.scenario,
                        model.name
                    )));
                }
                trace.check_against(model)?;
                if let Some(p) = overlay {
                    p.check_compatible(model)?;
                }
                let belief = model.initial_belief()?;
                let action_distribution = match overlay {
                    Some(p) => Some(p.predict(&PolicyInput::from_model(
                        model,
                        &belief,
                        None,
                        0,
                        model.horizon,
                    ))?),
                    None => None,
                };
                Frame {
                    t: 0,
                    action_distribution,
                    defender_action: None,
                    observation: None,
                    metric_distributions: model.metric_marginals(&belief)?,
                    attacker: None,
                    belief,
                    reward: 0.0,
                    cumulative_reward: 0.0,
                    halt_reason: None,
                }
            }
        };
        session.frames.push(frame0);
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn source(&self) -> &SessionSource {
        &self.source
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn history_len(&self) -> usize {
        self.frames.len()
    }

    pub fn reveal_attacker(&self) -> bool {
        self.reveal_attacker
    }

    pub fn set_reveal_attacker(&mut self, reveal: bool) {
        self.reveal_attacker = reveal;
    }

    /// Defender's model.
    pub fn model(&self) -> &PomdpModel {
        match &self.source {
            SessionSource::Simulation { model, .. } | SessionSource::Replay { model, .. } => model,
        }
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            session_id: self.id.clone(),
            source: match self.source {
                SessionSource::Simulation { .. } => "simulation".into(),
                SessionSource::Replay { .. } => "replay".into(),
            },
            scenario: self.model().name.clone(),
            mode: self.mode,
            status: self.status,
            cursor: self.cursor,
            history_len: self.frames.len(),
            breakpoints: self.breakpoints.len(),
            reveal_attacker: self.reveal_attacker,
        }
    }

    fn present(&self, mut frame: Frame) -> Frame {
        if !self.reveal_attacker {
            frame.attacker = None;
        }
        frame
    }

    /// The frame at the cursor, annotated with the latest halt reason.
    pub fn current_frame(&self) -> Frame {
        let mut frame = self.present(self.frames[self.cursor].clone());
        frame.halt_reason = self.halt_reason.clone();
        frame
    }

    /// Stored frames with `from <= t <= to`, clamped to the history.
    pub fn frames(&self, from: usize, to: usize) -> Vec<Frame> {
        let end = to.min(self.frames.len().saturating_sub(1));
        if from > end {
            return Vec::new();
        }
        self.frames[from..=end]
            .iter()
            .map(|f| self.present(f.clone()))
            .collect()
    }

    fn at_end(&self) -> bool {
        self.end.is_some_and(|(last, _)| last == self.cursor)
    }

    fn produce_next(&mut self) -> Result<Advance> {
        if let Some(reason) = &self.stalled {
            return Ok(Advance::Stalled(reason.clone()));
        }
        let prev = self.frames.last().expect("frame 0 exists").clone();
        let (frame, snapshot, finished) = match &self.source {
            SessionSource::Simulation { policy, .. } => {
                let mut runner = self.snapshots.last().expect("snapshot per frame").clone();
                let dist = prev
                    .action_distribution
                    .clone()
                    .expect("simulation frames carry a distribution");
                let tr = match runner.advance(&dist) {
                    Ok(tr) => tr,
                    Err(Error::ImpossibleObservation { unnormalized }) => {
                        let reason = HaltReason::ImpossibleObservation {
                            t: prev.t + 1,
                            unnormalized,
                        };
                        self.stalled = Some(reason.clone());
                        return Ok(Advance::Stalled(reason));
                    }
                    Err(e) => return Err(e),
                };
                let model = runner.defender_model();
                let predicted = model.predict_belief(&prev.belief, tr.defender_action)?;
                let frame = Frame {
                    t: tr.t,
                    belief: tr.belief_after.clone(),
                    action_distribution: Some(policy.predict(&runner.policy_input())?),
                    defender_action: Some(tr.defender_action),
                    observation: Some(tr.outcome.observation.clone()),
                    metric_distributions: model.metric_marginals(&predicted)?,
                    attacker: Some(attacker_view(
                        runner.environment_model(),
                        tr.outcome.next_state,
                        Some(tr.outcome.attacker_action),
                    )),
                    reward: tr.outcome.reward,
                    cumulative_reward: prev.cumulative_reward + tr.outcome.reward,
                    halt_reason: None,
                };
                let finished = runner.finished();
                (frame, Some(runner), finished)
            }
            SessionSource::Replay {
                trace,
                model,
                overlay,
            } => {
                let rec = &trace.steps[prev.t];
                let belief = match model.belief_update(
                    &prev.belief,
                    rec.defender_action,
                    &rec.observation,
                ) {
                    Ok(b) => b,
                    Err(Error::ImpossibleObservation { unnormalized }) => {
                        let reason = HaltReason::ImpossibleObservation {
                            t: rec.t,
                            unnormalized,
                        };
                        self.stalled = Some(reason.clone());
                        return Ok(Advance::Stalled(reason));
                    }
                    Err(e) => return Err(e),
                };
                let predicted = model.predict_belief(&prev.belief, rec.defender_action)?;
                let action_distribution = match overlay {
                    Some(p) => Some(p.predict(&PolicyInput::from_model(
                        model,
                        &belief,
                        Some(&rec.observation),
                        rec.t,
                        model.horizon,
                    ))?),
                    None => None,
                };
                let frame = Frame {
                    t: rec.t,
                    belief,
                    action_distribution,
                    defender_action: Some(rec.defender_action),
                    observation: Some(rec.observation.clone()),
                    metric_distributions: model.metric_marginals(&predicted)?,
                    attacker: Some(attacker_view(model, rec.state, Some(rec.attacker_action))),
                    reward: rec.reward,
                    cumulative_reward: prev.cumulative_reward + rec.reward,
                    halt_reason: None,
                };
                let finished = (rec.t == trace.steps.len()).then(|| {
                    trace.header.terminated_reason.unwrap_or(if model.is_terminal(rec.state) {
                        TerminationReason::TerminalState
                    } else {
                        TerminationReason::Horizon
                    })
                });
                (frame, None, finished)
            }
        };
        self.frames.push(frame);
        if let Some(s) = snapshot {
            self.snapshots.push(s);
        }
        if let Some(reason) = finished {
            self.end = Some((self.frames.len() - 1, reason));
        }
        Ok(Advance::Moved)
    }

    /// Advances by one frame and reports why traversal must stop, if it must.
    fn advance_one(&mut self) -> Result<Option<HaltReason>> {
        if self.cursor + 1 < self.frames.len() {
            self.cursor += 1;
        } else {
            match self.produce_next()? {
                Advance::Moved => self.cursor += 1,
                Advance::Stalled(reason) => return Ok(Some(reason)),
            }
        }
        let frame = &self.frames[self.cursor];
        let hit = self
            .breakpoints
            .iter()
            .find(|(_, p)| p.matches(frame))
            .map(|(&id, _)| HaltReason::Breakpoint { id });
        if self.at_end() {
            let (_, reason) = self.end.unwrap();
            self.status = Status::Finished;
            return Ok(Some(hit.unwrap_or(match reason {
                TerminationReason::TerminalState => HaltReason::Terminal,
                TerminationReason::Horizon => HaltReason::Horizon,
            })));
        }
        Ok(hit)
    }

    fn run(&mut self, n: usize) -> Result<Frame> {
        self.halt_reason = None;
        for _ in 0..n {
            if let Some(reason) = self.advance_one()? {
                self.halt_reason = Some(reason);
                break;
            }
        }
        Ok(self.current_frame())
    }

    fn check_steppable(&self) -> Result<()> {
        match self.status {
            Status::Finished => Err(Error::Finished),
            Status::Running => Err(Error::Precondition("session is running".into())),
            Status::Halted => Ok(()),
        }
    }

    /// Advances up to `n` frames, stopping early at the end of the episode,
    /// a breakpoint, or an impossible observation.
    pub fn step(&mut self, n: usize) -> Result<Frame> {
        if n == 0 {
            return Err(Error::Range("step count must be at least 1".into()));
        }
        self.check_steppable()?;
        self.run(n)
    }

    /// Manual mode: runs until something halts it. Autoplay mode: starts
    /// the clock; [`tick`](Self::tick) then advances one frame per call.
    pub fn continue_run(&mut self) -> Result<Frame> {
        self.check_steppable()?;
        match self.mode {
            Mode::Manual => self.run(usize::MAX),
            Mode::Autoplay { .. } => {
                self.status = Status::Running;
                self.halt_reason = None;
                Ok(self.current_frame())
            }
        }
    }

    /// One autoplay step; a no-op unless the session is running.
    pub fn tick(&mut self) -> Result<Frame> {
        if self.status != Status::Running {
            return Ok(self.current_frame());
        }
        match self.advance_one() {
            Ok(None) => {}
            Ok(Some(reason)) => {
                if self.status == Status::Running {
                    self.status = Status::Halted;
                }
                self.halt_reason = Some(reason);
            }
            Err(e) => {
                self.status = Status::Halted;
                return Err(e);
            }
        }
        Ok(self.current_frame())
    }

    pub fn halt(&mut self) -> Result<Frame> {
        if !matches!(self.mode, Mode::Autoplay { .. }) {
            return Err(Error::Precondition("halt requires autoplay mode".into()));
        }
        if self.status != Status::Running {
            return Err(Error::Precondition("session is not running".into()));
        }
        self.status = Status::Halted;
        self.halt_reason = Some(HaltReason::User);
        Ok(self.current_frame())
    }

    /// Moves the cursor back `n` stored frames.
    pub fn reverse(&mut self, n: usize) -> Result<Frame> {
        if self.status == Status::Running {
            return Err(Error::Precondition("session is running".into()));
        }
        if n == 0 || n > self.cursor {
            return Err(Error::Range(format!(
                "cannot reverse {n} frames from cursor {}",
                self.cursor
            )));
        }
        self.cursor -= n;
        self.status = Status::Halted;
        self.halt_reason = None;
        Ok(self.current_frame())
    }

    /// Side-effect-free probe of `action` at the current frame.
    pub fn what_if(&self, action: usize) -> Result<WhatIfReport> {
        match self.status {
            Status::Halted => {}
            Status::Finished => {
                return Err(Error::Precondition("session is finished".into()))
            }
            Status::Running => return Err(Error::Precondition("session is running".into())),
        }
        let model = self.model();
        if action >= model.num_defender_actions() {
            return Err(Error::Range(format!("defender action {action} out of range")));
        }
        let frame = &self.frames[self.cursor];
        let predicted = model.predict_belief(&frame.belief, action)?;
        let hidden = match &self.source {
            SessionSource::Simulation { .. } => Some(self.snapshots[self.cursor].state()),
            SessionSource::Replay { trace, .. } => {
                (frame.t > 0).then(|| trace.steps[frame.t - 1].state)
            }
        };
        Ok(WhatIfReport {
            action,
            action_name: model.defender_actions[action].name.clone(),
            expected_reward: model.expected_reward(&frame.belief, action)?,
            reward: hidden.map(|s| model.reward[s][action]),
            metric_distributions: model.metric_marginals(&predicted)?,
            predicted_belief: predicted,
        })
    }

    pub fn add_breakpoint(&mut self, predicate: Predicate) -> Result<u64> {
        predicate.check(self.model())?;
        let id = self.next_breakpoint;
        self.next_breakpoint += 1;
        self.breakpoints.insert(id, predicate);
        Ok(id)
    }

    pub fn remove_breakpoint(&mut self, id: u64) -> Result<()> {
        self.breakpoints
            .remove(&id)
            .map(|_| ())
            .ok_or_else(|| Error::NotFound(format!("breakpoint {id}")))
    }

    pub fn list_breakpoints(&self) -> Vec<Breakpoint> {
        self.breakpoints
            .iter()
            .map(|(&id, p)| Breakpoint {
                id,
                predicate: p.clone(),
            })
            .collect()
    }

    /// New session sharing the history up to the cursor. Simulation forks
    /// continue from the cursor's simulator state with a fresh random
    /// stream seeded by `seed`.
    pub fn fork(&self, seed: Option<u64>) -> Result<DebugSession> {
        if self.status == Status::Running {
            return Err(Error::Precondition("session is running".into()));
        }
        let mut fork = self.clone();
        fork.id = uuid::Uuid::new_v4().to_string();
        fork.frames.truncate(self.cursor + 1);
        fork.halt_reason = None;
        fork.stalled = None;
        fork.end = self.end.filter(|(last, _)| *last <= self.cursor);
        fork.status = if fork.at_end() {
            Status::Finished
        } else {
            Status::Halted
        };
        if !fork.snapshots.is_empty() {
            fork.snapshots.truncate(self.cursor + 1);
            if let Some(seed) = seed {
                fork.snapshots[self.cursor].reseed(seed);
            }
            if let SessionSource::Simulation { seed: s, .. } = &mut fork.source {
                *s = seed.unwrap_or(*s);
            }
        }
        Ok(fork)
    }
}

fn attacker_view(model: &PomdpModel, state: usize, action: Option<usize>) -> AttackerView {
    AttackerView {
        state,
        state_name: model.state_names[state].clone(),
        attacker_action: action,
        attacker_action_name: action.map(|a| model.attacker_actions[a].clone()),
    }
}
