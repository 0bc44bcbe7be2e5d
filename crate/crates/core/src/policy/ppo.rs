//! Proximal policy optimization with generalized advantage estimation.
//!
//! Gradients are computed by hand-written backpropagation through
//! [`PolicyParameters`]; there is no autodiff framework, so the test-suite
//! checks them against central finite differences.

use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::PolicyParameters;
use super::{softmax, ActionDistribution};
use crate::error::{Error, Result};
use crate::model::PomdpModel;
use crate::rng::SimRng;
use crate::sim::EpisodeRunner;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    pub epochs_per_iteration: usize,
    pub minibatch_size: usize,
    pub rollout_episodes: usize,
    pub iterations: usize,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
    pub hidden_layers: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            learning_rate: 3e-4,
            epochs_per_iteration: 4,
            minibatch_size: 64,
            rollout_episodes: 32,
            iterations: 150,
            entropy_coeff: 0.01,
            value_coeff: 0.5,
            hidden_layers: vec![64, 64],
            seed: 1,
        }
    }
}

impl TrainingConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("training config serializes")
    }

    pub fn check(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma = {} not in (0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return fail(format!("gae_lambda = {} not in [0, 1]", self.gae_lambda));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon.is_finite()) {
            return fail(format!("clip_epsilon = {} must be positive", self.clip_epsilon));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate = {} must be positive", self.learning_rate));
        }
        if self.epochs_per_iteration == 0 || self.minibatch_size == 0 || self.rollout_episodes == 0
        {
            return fail("epochs_per_iteration, minibatch_size, rollout_episodes must be >= 1".into());
        }
        for (name, v) in [("entropy_coeff", self.entropy_coeff), ("value_coeff", self.value_coeff)] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} = {v} must be >= 0"));
            }
        }
        if self.hidden_layers.iter().any(|&h| h == 0) {
            return fail("hidden layer widths must be >= 1".into());
        }
        Ok(())
    }
}

/// Advantages and returns by the backward GAE recursion.
///
/// `δ_t = r_t + γ·v_{t+1} − v_t` with `v_n = terminal_value`,
/// `A_t = δ_t + γλ·A_{t+1}`, `returns_t = A_t + v_t`.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    terminal_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() {
        return Err(Error::Shape(format!(
            "{} rewards but {} values",
            rewards.len(),
            values.len()
        )));
    }
    if rewards.is_empty() {
        return Err(Error::Shape("empty reward sequence".into()));
    }
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut next_value = terminal_value;
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        advantages[t] = running;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PpoBatch {
    pub features: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.actions.len();
        if n == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if self.features.len() != n
            || self.old_log_probs.len() != n
            || self.advantages.len() != n
            || self.returns.len() != n
        {
            return Err(Error::Shape("batch columns have different lengths".into()));
        }
        Ok(())
    }

    fn select(&self, idx: &[usize]) -> PpoBatch {
        PpoBatch {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            old_log_probs: idx.iter().map(|&i| self.old_log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateOutput {
    pub loss: f64,
    /// `−mean(min(r·A, clip(r)·A))`.
    pub policy_loss: f64,
    /// `mean((v − returns)²)`, before the coefficient.
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub grad: PolicyParameters,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn finite(term: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(term.into()))
    }
}

/// Clipped PPO loss and its exact gradient:
///
/// `loss = −mean(min(r·A, clip(r, 1−ε, 1+ε)·A)) + c_v·mean((v − R)²) − c_e·mean(H)`
pub fn ppo_surrogate(
    params: &PolicyParameters,
    batch: &PpoBatch,
    config: &TrainingConfig,
) -> Result<SurrogateOutput> {
    batch.check()?;
    let n = batch.len() as f64;
    let eps = config.clip_epsilon;
    let mut grad = params.zeros_like();
    let (mut policy_loss, mut value_loss, mut entropy, mut clipped) = (0.0, 0.0, 0.0, 0usize);

    for i in 0..batch.len() {
        let cache = params.forward_cached(&batch.features[i])?;
        let a = batch.actions[i];
        if a >= cache.logits.len() {
            return Err(Error::index("action", a, cache.logits.len()));
        }
        let logp = log_softmax(&cache.logits);
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let ratio = finite("probability ratio", (logp[a] - batch.old_log_probs[i]).exp())?;
        let adv = finite("advantage", batch.advantages[i])?;
        let unclipped = ratio * adv;
        let clipped_obj = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        let (objective, d_obj_d_ratio) = if unclipped <= clipped_obj {
            (unclipped, adv)
        } else {
            clipped += 1;
            (clipped_obj, 0.0)
        };
        let h: f64 = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
        let v_err = cache.value - batch.returns[i];

        policy_loss -= objective;
        value_loss += v_err * v_err;
        entropy += h;

        let dlogits: Vec<f64> = (0..probs.len())
            .map(|j| {
                let onehot = if j == a { 1.0 } else { 0.0 };
                let d_policy = -d_obj_d_ratio * ratio * (onehot - probs[j]);
                let d_entropy = config.entropy_coeff * probs[j] * (logp[j] + h);
                (d_policy + d_entropy) / n
            })
            .collect();
        let dvalue = 2.0 * config.value_coeff * v_err / n;
        params.backward(&cache, &dlogits, dvalue, &mut grad);
    }

    let policy_loss = finite("policy loss", policy_loss / n)?;
    let value_loss = finite("value loss", value_loss / n)?;
    let entropy = finite("entropy", entropy / n)?;
    if !grad.is_finite() {
        return Err(Error::Numeric("gradient".into()));
    }
    Ok(SurrogateOutput {
        loss: policy_loss + config.value_coeff * value_loss - config.entropy_coeff * entropy,
        policy_loss,
        value_loss,
        entropy,
        clip_fraction: clipped as f64 / n,
        grad,
    })
}

/// Adaptive-moment optimizer with bias correction (β₁ = 0.9, β₂ = 0.999).
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_values: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; num_values],
            v: vec![0.0; num_values],
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut PolicyParameters, grad: &PolicyParameters) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params
            .values_mut()
            .zip(grad.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        params.version += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub mean_return: f64,
    pub mean_length: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub iterations: Vec<IterationStats>,
}

impl TrainingStats {
    pub fn first(&self) -> Option<&IterationStats> {
        self.iterations.first()
    }

    pub fn last(&self) -> Option<&IterationStats> {
        self.iterations.last()
    }
}

pub fn ppo_train(model: &PomdpModel, config: &TrainingConfig) -> Result<(PolicyParameters, TrainingStats)> {
    ppo_train_with(model, config, |_| {})
}

/// [`ppo_train`] with a callback after every iteration.
pub fn ppo_train_with(
    model: &PomdpModel,
    config: &TrainingConfig,
    mut on_iteration: impl FnMut(&IterationStats),
) -> Result<(PolicyParameters, TrainingStats)> {
    model.ensure_valid()?;
    config.check()?;
    let model = Arc::new(model.clone());
    let mut rng = SimRng::new(config.seed);
    let inputs = model.num_states() + model.num_metrics() + 1;
    let mut params = PolicyParameters::init(
        inputs,
        &config.hidden_layers,
        model.num_defender_actions(),
        &mut rng,
    );
    let mut adam = Adam::new(params.num_values(), config.learning_rate);
    let mut stats = TrainingStats::default();

    for iteration in 0..config.iterations {
        let last_good = params.clone();
        let abort = |reason: String, last_good: PolicyParameters| Error::TrainingAborted {
            iteration,
            reason,
            last_good: Box::new(last_good),
        };

        let (mut batch, returns, lengths) =
            collect_rollouts(&model, &params, config, &mut rng).map_err(|e| abort(e.to_string(), last_good.clone()))?;
        normalize(&mut batch.advantages);

        let mut indices: Vec<usize> = (0..batch.len()).collect();
        let (mut pl, mut vl, mut ent, mut cf, mut count) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..config.epochs_per_iteration {
            indices.shuffle(rng.inner_mut());
            for chunk in indices.chunks(config.minibatch_size) {
                let mini = batch.select(chunk);
                let out = ppo_surrogate(&params, &mini, config)
                    .map_err(|e| abort(e.to_string(), last_good.clone()))?;
                adam.step(&mut params, &out.grad);
                if !params.is_finite() {
                    return Err(abort("non-finite parameters".into(), last_good));
                }
                pl += out.policy_loss;
                vl += out.value_loss;
                ent += out.entropy;
                cf += out.clip_fraction;
                count += 1.0;
            }
        }
        let it = IterationStats {
            iteration,
            mean_return: returns.iter().sum::<f64>() / returns.len() as f64,
            mean_length: lengths.iter().sum::<usize>() as f64 / lengths.len() as f64,
            policy_loss: pl / count,
            value_loss: vl / count,
            entropy: ent / count,
            clip_fraction: cf / count,
        };
        on_iteration(&it);
        stats.iterations.push(it);
    }
    Ok((params, stats))
}

fn normalize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    values.iter_mut().for_each(|v| *v = (*v - mean) / std);
}

fn collect_rollouts(
    model: &Arc<PomdpModel>,
    params: &PolicyParameters,
    config: &TrainingConfig,
    rng: &mut SimRng,
) -> Result<(PpoBatch, Vec<f64>, Vec<usize>)> {
    let mut batch = PpoBatch::default();
    let mut episode_returns = Vec::with_capacity(config.rollout_episodes);
    let mut lengths = Vec::with_capacity(config.rollout_episodes);
    for _ in 0..config.rollout_episodes {
        let mut runner = EpisodeRunner::single(model.clone(), rng.next_u64(), None)?;
        let mut rewards = Vec::new();
        let mut values = Vec::new();
        while runner.finished().is_none() {
            let features = runner.policy_input().features();
            let (logits, value) = params.forward(&features)?;
            let dist = ActionDistribution {
                probs: softmax(&logits),
            };
            let tr = runner.advance(&dist)?;
            let a = tr.defender_action;
            batch.features.push(features);
            batch.actions.push(a);
            batch.old_log_probs.push(log_softmax(&logits)[a]);
            rewards.push(tr.outcome.reward);
            values.push(value);
        }
        // The time feature makes the horizon part of the state, so both
        // terminal states and horizon ends bootstrap from zero.
        let (adv, ret) = gae_advantages(&rewards, &values, 0.0, config.gamma, config.gae_lambda)?;
        batch.advantages.extend(adv);
        batch.returns.extend(ret);
        episode_returns.push(rewards.iter().sum());
        lengths.push(rewards.len());
    }
    Ok((batch, episode_returns, lengths))
}
