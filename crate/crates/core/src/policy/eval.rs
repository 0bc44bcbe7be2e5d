use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Policy;
use crate::error::{Error, Result};
use crate::model::PomdpModel;
use crate::rng::SimRng;
use crate::sim::EpisodeRunner;

/// Summary of seeded evaluation rollouts.
///
/// Any action other than action 0 counts as defensive; a false alarm is a
/// defensive action taken while the hidden state is state 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_length: f64,
    pub std_length: f64,
    pub defend_frequency: f64,
    pub false_alarms: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `episodes` rollouts; episode `i` is seeded with the `i`-th output of
/// a generator seeded by `seed`.
pub fn evaluate_policy(
    model: &PomdpModel,
    policy: &Policy,
    episodes: usize,
    seed: u64,
) -> Result<EvalStats> {
    if episodes == 0 {
        return Err(Error::Range("episodes must be at least 1".into()));
    }
    policy.check_compatible(model)?;
    let model = Arc::new(model.clone());
    let mut seeds = SimRng::new(seed);
    let mut returns = Vec::with_capacity(episodes);
    let mut lengths = Vec::with_capacity(episodes);
    let (mut steps, mut defends, mut false_alarms) = (0usize, 0usize, 0usize);
    for _ in 0..episodes {
        let mut runner = EpisodeRunner::single(model.clone(), seeds.next_u64(), None)?;
        let mut total = 0.0;
        let mut len = 0usize;
        while runner.finished().is_none() {
            let dist = policy.predict(&runner.policy_input())?;
            let tr = runner.advance(&dist)?;
            total += tr.outcome.reward;
            len += 1;
            if tr.defender_action != 0 {
                defends += 1;
                if tr.prev_state == 0 {
                    false_alarms += 1;
                }
            }
        }
        steps += len;
        returns.push(total);
        lengths.push(len as f64);
    }
    let (mean_return, std_return) = mean_std(&returns);
    let (mean_length, std_length) = mean_std(&lengths);
    Ok(EvalStats {
        episodes,
        mean_return,
        std_return,
        mean_length,
        std_length,
        defend_frequency: defends as f64 / steps as f64,
        false_alarms,
    })
}
