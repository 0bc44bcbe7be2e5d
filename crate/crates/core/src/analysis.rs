//! Scripted searches over many episodes, for finding and checking the
//! qualitative behaviours one would otherwise hunt for by hand in the
//! debugger.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PomdpModel;
use crate::policy::Policy;
use crate::rng::SimRng;
use crate::sim::EpisodeRunner;

/// One episode in which the policy considered defending without cause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseAlarmHit {
    pub seed: u64,
    /// First frame at which the defend probability crossed the threshold.
    pub t: usize,
    pub defend_prob: f64,
    /// Largest defend probability over the whole episode.
    pub max_defend_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseAlarmReport {
    pub seeds_searched: usize,
    /// Episodes in which the hidden state ever left `benign_state`; these
    /// are skipped.
    pub intrusions: usize,
    pub threshold: f64,
    pub hits: Vec<FalseAlarmHit>,
}

/// Runs one episode per seed in `seeds` with the defender filtering under
/// `defender` while `environment` generates the data, and records every
/// intrusion-free episode where `P(defend_action)` exceeds `threshold` at
/// some frame.
pub fn search_false_alarms(
    defender: Arc<PomdpModel>,
    environment: Arc<PomdpModel>,
    policy: &Policy,
    seeds: std::ops::Range<u64>,
    defend_action: usize,
    benign_state: usize,
    threshold: f64,
) -> Result<FalseAlarmReport> {
    policy.check_compatible(&defender)?;
    if defend_action >= defender.num_defender_actions() {
        return Err(Error::Range(format!("defender action {defend_action} out of range")));
    }
    let mut report = FalseAlarmReport {
        seeds_searched: 0,
        intrusions: 0,
        threshold,
        hits: Vec::new(),
    };
    for seed in seeds {
        report.seeds_searched += 1;
        let mut runner = EpisodeRunner::new(defender.clone(), environment.clone(), seed, None)?;
        let mut first: Option<(usize, f64)> = None;
        let mut max_p = 0.0f64;
        let mut intruded = runner.state() != benign_state;
        loop {
            let dist = policy.predict(&runner.policy_input())?;
            let p = dist.probs[defend_action];
            max_p = max_p.max(p);
            if p > threshold && first.is_none() {
                first = Some((runner.t(), p));
            }
            if runner.finished().is_some() {
                break;
            }
            let tr = runner.advance(&dist)?;
            intruded |= tr.outcome.next_state != benign_state;
        }
        if intruded {
            report.intrusions += 1;
            continue;
        }
        if let Some((t, defend_prob)) = first {
            report.hits.push(FalseAlarmHit {
                seed,
                t,
                defend_prob,
                max_defend_prob: max_p,
            });
        }
    }
    Ok(report)
}

/// Defend probabilities split by which attacker action produced the
/// frame's observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionComparison {
    pub episodes: usize,
    /// Episodes containing frames of both kinds.
    pub paired_episodes: usize,
    /// Mean over paired episodes of the per-episode mean defend probability
    /// on frames following `focus`.
    pub mean_after_focus: f64,
    /// Same, on frames following `baseline`.
    pub mean_after_baseline: f64,
    pub focus_frames: usize,
    pub baseline_frames: usize,
}

/// Compares the policy's defend probability on frames whose observation
/// was emitted under attacker action `focus` against frames emitted under
/// `baseline`. Episode `i` uses the `i`-th draw of `SimRng::new(seed)`.
pub fn compare_emissions(
    model: Arc<PomdpModel>,
    policy: &Policy,
    episodes: usize,
    seed: u64,
    focus: usize,
    baseline: usize,
    defend_action: usize,
) -> Result<EmissionComparison> {
    policy.check_compatible(&model)?;
    let mut seeds = SimRng::new(seed);
    let (mut focus_sum, mut base_sum, mut paired) = (0.0, 0.0, 0usize);
    let (mut focus_frames, mut baseline_frames) = (0usize, 0usize);
    for _ in 0..episodes {
        let mut runner = EpisodeRunner::single(model.clone(), seeds.next_u64(), None)?;
        let mut dist = policy.predict(&runner.policy_input())?;
        let (mut f, mut fn_, mut b, mut bn) = (0.0, 0usize, 0.0, 0usize);
        while runner.finished().is_none() {
            let tr = runner.advance(&dist)?;
            dist = policy.predict(&runner.policy_input())?;
            let p = dist.probs[defend_action];
            if tr.outcome.attacker_action == focus {
                f += p;
                fn_ += 1;
            } else if tr.outcome.attacker_action == baseline {
                b += p;
                bn += 1;
            }
        }
        focus_frames += fn_;
        baseline_frames += bn;
        if fn_ > 0 && bn > 0 {
            paired += 1;
            focus_sum += f / fn_ as f64;
            base_sum += b / bn as f64;
        }
    }
    if paired == 0 {
        return Err(Error::EmptyInput(
            "no episode contained frames of both kinds".into(),
        ));
    }
    Ok(EmissionComparison {
        episodes,
        paired_episodes: paired,
        mean_after_focus: focus_sum / paired as f64,
        mean_after_baseline: base_sum / paired as f64,
        focus_frames,
        baseline_frames,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateDeviation {
    /// Steps whose observation was emitted under the probed attacker action.
    pub steps: usize,
    /// Largest `|b'(s) − p̂(s)|` over those steps, where `p̂` is the
    /// normalized prediction-only belief.
    pub max_abs_diff: f64,
}

/// How far the filter moves the belief away from its prediction on steps
/// where the attacker played `attacker_action`. Zero means those
/// observations carry no information.
pub fn observation_update_deviation(
    model: Arc<PomdpModel>,
    policy: &Policy,
    episodes: usize,
    seed: u64,
    attacker_action: usize,
) -> Result<UpdateDeviation> {
    let mut seeds = SimRng::new(seed);
    let mut out = UpdateDeviation {
        steps: 0,
        max_abs_diff: 0.0,
    };
    for _ in 0..episodes {
        let mut runner = EpisodeRunner::single(model.clone(), seeds.next_u64(), None)?;
        while runner.finished().is_none() {
            let prior = runner.belief().clone();
            let dist = policy.predict(&runner.policy_input())?;
            let tr = runner.advance(&dist)?;
            if tr.outcome.attacker_action != attacker_action {
                continue;
            }
            let predicted = model.predict_belief(&prior, tr.defender_action)?;
            let total: f64 = predicted.probs().iter().sum();
            out.steps += 1;
            for (b, p) in tr.belief_after.probs().iter().zip(predicted.probs()) {
                out.max_abs_diff = out.max_abs_diff.max((b - p / total).abs());
            }
        }
    }
    Ok(out)
}
