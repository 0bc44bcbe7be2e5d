//! Finite POMDP representation, validation, and exact Bayesian filtering.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Tolerance for probability rows and beliefs.
pub const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub name: String,
    /// Number of bins `B >= 2`; the last bin is the overflow bin.
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenderAction {
    pub name: String,
    pub cost: f64,
}

/// A finite POMDP with an environment-internal attacker process.
///
/// Kernels are indexed as follows:
///
/// - `transition[s][a_def][s']`
/// - `attacker_behavior[s][a_att]`
/// - `observation[s][a_att][m][b]` (emitted by the successor state)
/// - `reward[s][a_def]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PomdpModel {
    pub name: String,
    pub config_hash: String,
    pub state_names: Vec<String>,
    pub defender_actions: Vec<DefenderAction>,
    pub attacker_actions: Vec<String>,
    pub metrics: Vec<MetricSpec>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub attacker_behavior: Vec<Vec<f64>>,
    pub observation: Vec<Vec<Vec<Vec<f64>>>>,
    pub reward: Vec<Vec<f64>>,
    pub initial_distribution: Vec<f64>,
    pub horizon: usize,
    pub terminal_states: Vec<usize>,
}

/// Posterior distribution over hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Checked constructor: entries in `[0, 1]`, sum within [`PROB_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs, PROB_TOLERANCE)
            .map_err(|msg| Error::Validation(format!("belief {msg}")))?;
        Ok(Self(probs))
    }

    pub fn point_mass(len: usize, state: usize) -> Self {
        let mut probs = vec![0.0; len];
        probs[state] = 1.0;
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// One bin index per metric.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<usize>);

impl Observation {
    pub fn bins(&self) -> &[usize] {
        &self.0
    }
}

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: usize,
    pub attacker_action: usize,
    pub observation: Observation,
    pub reward: f64,
}

/// A single violated invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    TooFewStates { count: usize },
    EmptySpace { space: String },
    TooFewBins { metric: usize, bins: usize },
    InvalidCost { action: usize, cost: f64 },
    Shape { kernel: String, location: Vec<usize>, expected: usize, found: usize },
    EntryOutOfRange { kernel: String, location: Vec<usize>, value: f64 },
    RowSum { kernel: String, location: Vec<usize>, sum: f64 },
    NonFiniteReward { state: usize, action: usize },
    ZeroHorizon,
    TerminalOutOfRange { state: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewStates { count } => write!(f, "need at least 2 states, got {count}"),
            Violation::EmptySpace { space } => write!(f, "{space} is empty"),
            Violation::TooFewBins { metric, bins } => {
                write!(f, "metric {metric} has {bins} bins, need at least 2")
            }
            Violation::InvalidCost { action, cost } => {
                write!(f, "defender action {action} has invalid cost {cost}")
            }
            Violation::Shape { kernel, location, expected, found } => write!(
                f,
                "{kernel}{location:?} has length {found}, expected {expected}"
            ),
            Violation::EntryOutOfRange { kernel, location, value } => {
                write!(f, "{kernel}{location:?} entry {value} outside [0, 1]")
            }
            Violation::RowSum { kernel, location, sum } => {
                write!(f, "{kernel}{location:?} sums to {sum}")
            }
            Violation::NonFiniteReward { state, action } => {
                write!(f, "reward[{state}][{action}] is not finite")
            }
            Violation::ZeroHorizon => write!(f, "horizon must be at least 1"),
            Violation::TerminalOutOfRange { state } => {
                write!(f, "terminal state {state} is not a state id")
            }
        }
    }
}

/// Every violated invariant of a model; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub(crate) fn check_distribution(probs: &[f64], tol: f64) -> std::result::Result<(), String> {
    if probs.is_empty() {
        return Err("is empty".into());
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(format!("has entry {p} outside [0, 1]"));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

struct Checker {
    report: ValidationReport,
}

impl Checker {
    fn row(&mut self, kernel: &str, location: Vec<usize>, row: &[f64], expected: usize) {
        if row.len() != expected {
            self.report.violations.push(Violation::Shape {
                kernel: kernel.into(),
                location,
                expected,
                found: row.len(),
            });
            return;
        }
        let mut out_of_range = false;
        for (i, &p) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                let mut loc = location.clone();
                loc.push(i);
                self.report.violations.push(Violation::EntryOutOfRange {
                    kernel: kernel.into(),
                    location: loc,
                    value: p,
                });
                out_of_range = true;
            }
        }
        let sum: f64 = row.iter().sum();
        if !out_of_range && (sum - 1.0).abs() > PROB_TOLERANCE {
            self.report.violations.push(Violation::RowSum {
                kernel: kernel.into(),
                location,
                sum,
            });
        }
    }

    fn len(&mut self, kernel: &str, location: Vec<usize>, found: usize, expected: usize) -> bool {
        if found != expected {
            self.report.violations.push(Violation::Shape {
                kernel: kernel.into(),
                location,
                expected,
                found,
            });
            false
        } else {
            true
        }
    }
}

impl PomdpModel {
    pub fn num_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn num_defender_actions(&self) -> usize {
        self.defender_actions.len()
    }

    pub fn num_attacker_actions(&self) -> usize {
        self.attacker_actions.len()
    }

    pub fn num_metrics(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal_states.contains(&state)
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|s| s == name)
    }

    pub fn defender_action_index(&self, name: &str) -> Option<usize> {
        self.defender_actions.iter().position(|a| a.name == name)
    }

    pub fn attacker_action_index(&self, name: &str) -> Option<usize> {
        self.attacker_actions.iter().position(|a| a == name)
    }

    /// Lists every violated invariant. Never stops at the first problem.
    pub fn validate(&self) -> ValidationReport {
        let mut c = Checker {
            report: ValidationReport::default(),
        };
        let ns = self.num_states();
        let nd = self.num_defender_actions();
        let na = self.num_attacker_actions();
        if ns < 2 {
            c.report.violations.push(Violation::TooFewStates { count: ns });
        }
        if nd == 0 {
            c.report.violations.push(Violation::EmptySpace {
                space: "defender_actions".into(),
            });
        }
        if na == 0 {
            c.report.violations.push(Violation::EmptySpace {
                space: "attacker_actions".into(),
            });
        }
        for (i, a) in self.defender_actions.iter().enumerate() {
            if !(a.cost.is_finite() && a.cost >= 0.0) {
                c.report.violations.push(Violation::InvalidCost {
                    action: i,
                    cost: a.cost,
                });
            }
        }
        for (m, spec) in self.metrics.iter().enumerate() {
            if spec.bins < 2 {
                c.report.violations.push(Violation::TooFewBins {
                    metric: m,
                    bins: spec.bins,
                });
            }
        }

        if c.len("transition", vec![], self.transition.len(), ns) {
            for (s, per_action) in self.transition.iter().enumerate() {
                if c.len("transition", vec![s], per_action.len(), nd) {
                    for (a, row) in per_action.iter().enumerate() {
                        c.row("transition", vec![s, a], row, ns);
                    }
                }
            }
        }
        if c.len("attacker_behavior", vec![], self.attacker_behavior.len(), ns) {
            for (s, row) in self.attacker_behavior.iter().enumerate() {
                c.row("attacker_behavior", vec![s], row, na);
            }
        }
        if c.len("observation", vec![], self.observation.len(), ns) {
            for (s, per_att) in self.observation.iter().enumerate() {
                if !c.len("observation", vec![s], per_att.len(), na) {
                    continue;
                }
                for (a, per_metric) in per_att.iter().enumerate() {
                    if !c.len("observation", vec![s, a], per_metric.len(), self.metrics.len()) {
                        continue;
                    }
                    for (m, row) in per_metric.iter().enumerate() {
                        c.row("observation", vec![s, a, m], row, self.metrics[m].bins);
                    }
                }
            }
        }
        if c.len("reward", vec![], self.reward.len(), ns) {
            for (s, row) in self.reward.iter().enumerate() {
                if c.len("reward", vec![s], row.len(), nd) {
                    for (a, r) in row.iter().enumerate() {
                        if !r.is_finite() {
                            c.report
                                .violations
                                .push(Violation::NonFiniteReward { state: s, action: a });
                        }
                    }
                }
            }
        }
        c.row("initial_distribution", vec![], &self.initial_distribution, ns);
        if self.horizon == 0 {
            c.report.violations.push(Violation::ZeroHorizon);
        }
        for &t in &self.terminal_states {
            if t >= ns {
                c.report
                    .violations
                    .push(Violation::TerminalOutOfRange { state: t });
            }
        }
        c.report
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::ModelInvalid(report))
        }
    }

    /// `ρ₁`, copied verbatim.
    pub fn initial_belief(&self) -> Result<Belief> {
        self.ensure_valid()?;
        Ok(Belief(self.initial_distribution.clone()))
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s < self.num_states() {
            Ok(())
        } else {
            Err(Error::index("state", s, self.num_states()))
        }
    }

    pub(crate) fn check_defender_action(&self, a: usize) -> Result<()> {
        if a < self.num_defender_actions() {
            Ok(())
        } else {
            Err(Error::index("defender action", a, self.num_defender_actions()))
        }
    }

    fn check_attacker_action(&self, a: usize) -> Result<()> {
        if a < self.num_attacker_actions() {
            Ok(())
        } else {
            Err(Error::index("attacker action", a, self.num_attacker_actions()))
        }
    }

    pub fn check_observation(&self, obs: &Observation) -> Result<()> {
        if obs.0.len() != self.num_metrics() {
            return Err(Error::Shape(format!(
                "observation has {} metrics, model has {}",
                obs.0.len(),
                self.num_metrics()
            )));
        }
        for (m, &b) in obs.0.iter().enumerate() {
            if b >= self.metrics[m].bins {
                return Err(Error::index("observation bin", b, self.metrics[m].bins));
            }
        }
        Ok(())
    }

    pub(crate) fn check_belief(&self, belief: &Belief) -> Result<()> {
        if belief.len() != self.num_states() {
            return Err(Error::Shape(format!(
                "belief has {} entries, model has {} states",
                belief.len(),
                self.num_states()
            )));
        }
        Ok(())
    }

    /// `∏_m Z[state][attacker_action][m][obs_m]`.
    pub fn observation_likelihood(
        &self,
        state: usize,
        attacker_action: usize,
        obs: &Observation,
    ) -> Result<f64> {
        self.check_state(state)?;
        self.check_attacker_action(attacker_action)?;
        self.check_observation(obs)?;
        Ok(self.likelihood_unchecked(state, attacker_action, obs))
    }

    fn likelihood_unchecked(&self, state: usize, attacker_action: usize, obs: &Observation) -> f64 {
        let rows = &self.observation[state][attacker_action];
        obs.0
            .iter()
            .zip(rows)
            .map(|(&b, row)| row[b])
            .product()
    }

    /// Likelihood of `obs` from successor `state`, marginalized over the
    /// attacker's emission: `Σ_a P_att[state][a] · observation_likelihood`.
    pub fn emission_likelihood(&self, state: usize, obs: &Observation) -> Result<f64> {
        self.check_state(state)?;
        self.check_observation(obs)?;
        Ok(self.emission_unchecked(state, obs))
    }

    fn emission_unchecked(&self, state: usize, obs: &Observation) -> f64 {
        self.attacker_behavior[state]
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(a, &p)| p * self.likelihood_unchecked(state, a, obs))
            .sum()
    }

    /// Prediction step `Σ_s T[s][a][s'] · b(s)` (not renormalized).
    pub fn predict_belief(&self, belief: &Belief, defender_action: usize) -> Result<Belief> {
        self.check_belief(belief)?;
        self.check_defender_action(defender_action)?;
        Ok(Belief(self.predict_unchecked(belief.probs(), defender_action)))
    }

    fn predict_unchecked(&self, belief: &[f64], action: usize) -> Vec<f64> {
        let ns = self.num_states();
        let mut out = vec![0.0; ns];
        for (s, &b) in belief.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            for (next, &p) in self.transition[s][action].iter().enumerate() {
                out[next] += p * b;
            }
        }
        out
    }

    /// Recursive Bayes filter step.
    ///
    /// `b'(s') ∝ L(obs|s') · Σ_s T[s][a][s'] · b(s)`, where `L` is
    /// [`emission_likelihood`](Self::emission_likelihood).
    pub fn belief_update(
        &self,
        belief: &Belief,
        defender_action: usize,
        obs: &Observation,
    ) -> Result<Belief> {
        self.check_belief(belief)?;
        self.check_defender_action(defender_action)?;
        self.check_observation(obs)?;
        let mut post = self.predict_unchecked(belief.probs(), defender_action);
        for (s, p) in post.iter_mut().enumerate() {
            if *p != 0.0 {
                *p *= self.emission_unchecked(s, obs);
            }
        }
        let norm: f64 = post.iter().sum();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ImpossibleObservation { unnormalized: post });
        }
        for p in &mut post {
            *p /= norm;
        }
        Ok(Belief(post))
    }

    /// Per-metric predictive distributions of the next observation under a
    /// (predicted) belief over successor states.
    pub fn metric_marginals(&self, belief: &Belief) -> Result<Vec<Vec<f64>>> {
        self.check_belief(belief)?;
        let mut rows: Vec<Vec<f64>> = self.metrics.iter().map(|m| vec![0.0; m.bins]).collect();
        for (s, &b) in belief.probs().iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            for (a, &pa) in self.attacker_behavior[s].iter().enumerate() {
                let w = b * pa;
                if w == 0.0 {
                    continue;
                }
                for (m, row) in rows.iter_mut().enumerate() {
                    for (bin, z) in self.observation[s][a][m].iter().enumerate() {
                        row[bin] += w * z;
                    }
                }
            }
        }
        let total: f64 = belief.probs().iter().sum();
        if total > 0.0 {
            for row in &mut rows {
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
        }
        Ok(rows)
    }

    pub fn sample_initial_state(&self, rng: &mut SimRng) -> usize {
        rng.categorical(&self.initial_distribution)
    }

    /// Advances the hidden environment one step.
    ///
    /// Draw order: successor state, attacker action, then one draw per
    /// metric in declaration order.
    pub fn environment_step(
        &self,
        state: usize,
        defender_action: usize,
        rng: &mut SimRng,
    ) -> Result<StepOutcome> {
        self.check_state(state)?;
        self.check_defender_action(defender_action)?;
        if self.is_terminal(state) {
            return Err(Error::TerminalState(state));
        }
        let next_state = rng.categorical(&self.transition[state][defender_action]);
        let attacker_action = rng.categorical(&self.attacker_behavior[next_state]);
        let bins = self.observation[next_state][attacker_action]
            .iter()
            .map(|row| rng.categorical(row))
            .collect();
        Ok(StepOutcome {
            next_state,
            attacker_action,
            observation: Observation(bins),
            reward: self.reward[state][defender_action],
        })
    }

    /// Expected immediate reward of `action` under `belief`.
    pub fn expected_reward(&self, belief: &Belief, action: usize) -> Result<f64> {
        self.check_belief(belief)?;
        self.check_defender_action(action)?;
        Ok(belief
            .probs()
            .iter()
            .zip(&self.reward)
            .map(|(b, row)| b * row[action])
            .sum())
    }

    /// True when the two models share state, action, and metric spaces.
    pub fn same_spaces(&self, other: &PomdpModel) -> bool {
        self.num_states() == other.num_states()
            && self.num_defender_actions() == other.num_defender_actions()
            && self.num_attacker_actions() == other.num_attacker_actions()
            && self.metrics.len() == other.metrics.len()
            && self
                .metrics
                .iter()
                .zip(&other.metrics)
                .all(|(a, b)| a.bins == b.bins)
    }

    /// Hex SHA-256 of the model's canonical JSON form.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut copy = self.clone();
        copy.config_hash.clear();
        let bytes = serde_json::to_vec(&copy).expect("model serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
