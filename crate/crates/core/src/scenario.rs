//! The built-in intrusion-prevention scenario.
//!
//! States `healthy → recon → compromised → breached` (breached is terminal).
//! The defender chooses between `continue` and `defend`; `defend` evicts the
//! attacker from any non-terminal state. Each metric is a count of client
//! traffic plus attack traffic, both Poisson, binned into `0..B-1` with the
//! last bin absorbing the tail.
//!
//! Scenario configs are TOML files:
//!
//! ```toml
//! schema_version = 1
//! name = "intrusion-default"
//! horizon = 100
//! bins = 16
//! intrusion_start_prob = 0.1
//! stage_progression_prob = 0.2
//! port_scan_prob = 0.5
//! ping_scan_visible = false
//! client_traffic_scale = 1.0
//! service_reward = 1.0
//! intrusion_penalty = 2.0
//! defend_cost = 5.0
//! false_alarm_penalty = 10.0
//! stop_intrusion_reward = 20.0
//! ```
//!
//! Penalties and costs are magnitudes; they are subtracted from the reward.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{DefenderAction, MetricSpec, PomdpModel};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SCENARIO: &str = "intrusion-default";

pub const HEALTHY: usize = 0;
pub const RECON: usize = 1;
pub const COMPROMISED: usize = 2;
pub const BREACHED: usize = 3;

pub const CONTINUE: usize = 0;
pub const DEFEND: usize = 1;

pub const PASSIVE: usize = 0;
pub const PING_SCAN: usize = 1;
pub const PORT_SCAN: usize = 2;
pub const EXPLOIT: usize = 3;

pub const STATE_NAMES: [&str; 4] = ["healthy", "recon", "compromised", "breached"];
pub const ATTACKER_ACTIONS: [&str; 4] = ["passive", "ping_scan", "port_scan", "exploit"];
pub const METRIC_NAMES: [&str; 3] = ["ids_alerts", "failed_logins", "new_connections"];

/// Mean client-generated count per step, per metric.
const CLIENT_RATES: [f64; 3] = [1.0, 1.0, 4.0];
/// Mean attack-generated count per step, `[attacker action][metric]`.
const ATTACK_RATES: [[f64; 3]; 4] = [
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 3.0],
    [6.0, 0.5, 8.0],
    [3.0, 6.0, 2.0],
];
/// Probability the attacker exploits (rather than lying low) once inside.
const EXPLOIT_PROB: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub horizon: usize,
    pub bins: usize,
    pub intrusion_start_prob: f64,
    pub stage_progression_prob: f64,
    /// Probability that a reconnaissance step is a port scan rather than a
    /// ping scan.
    pub port_scan_prob: f64,
    /// When false, ping scans leave the metrics exactly as passive steps do.
    pub ping_scan_visible: bool,
    pub client_traffic_scale: f64,
    pub service_reward: f64,
    pub intrusion_penalty: f64,
    pub defend_cost: f64,
    pub false_alarm_penalty: f64,
    pub stop_intrusion_reward: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: DEFAULT_SCENARIO.into(),
            horizon: 100,
            bins: 16,
            intrusion_start_prob: 0.1,
            stage_progression_prob: 0.2,
            port_scan_prob: 0.5,
            ping_scan_visible: false,
            client_traffic_scale: 1.0,
            service_reward: 1.0,
            intrusion_penalty: 2.0,
            defend_cost: 5.0,
            false_alarm_penalty: 10.0,
            stop_intrusion_reward: 20.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn check(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.name.trim().is_empty() {
            return Err(Error::Config("name must not be empty".into()));
        }
        if self.horizon == 0 || self.horizon > 100_000 {
            return Err(Error::Config(format!("horizon {} not in 1..=100000", self.horizon)));
        }
        if !(2..=256).contains(&self.bins) {
            return Err(Error::Config(format!("bins {} not in 2..=256", self.bins)));
        }
        for (field, p) in [
            ("intrusion_start_prob", self.intrusion_start_prob),
            ("stage_progression_prob", self.stage_progression_prob),
            ("port_scan_prob", self.port_scan_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{field} = {p} not in [0, 1]")));
            }
        }
        if !(self.client_traffic_scale.is_finite() && self.client_traffic_scale > 0.0) {
            return Err(Error::Config(format!(
                "client_traffic_scale = {} must be positive",
                self.client_traffic_scale
            )));
        }
        for (field, v) in [
            ("service_reward", self.service_reward),
            ("intrusion_penalty", self.intrusion_penalty),
            ("defend_cost", self.defend_cost),
            ("false_alarm_penalty", self.false_alarm_penalty),
            ("stop_intrusion_reward", self.stop_intrusion_reward),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{field} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// `P(bin = b)` for a Poisson count, with the last bin holding the tail.
pub fn binned_poisson(rate: f64, bins: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(bins);
    let mut pmf = (-rate).exp();
    let mut acc = 0.0;
    for k in 0..bins - 1 {
        row.push(pmf);
        acc += pmf;
        pmf *= rate / (k + 1) as f64;
    }
    row.push((1.0 - acc).max(0.0));
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= total);
    row
}

pub fn build_intrusion_scenario(config: &ScenarioConfig) -> Result<PomdpModel> {
    config.check()?;
    let ns = STATE_NAMES.len();
    let p_start = config.intrusion_start_prob;
    let p_stage = config.stage_progression_prob;

    let mut transition = vec![vec![vec![0.0; ns]; 2]; ns];
    transition[HEALTHY][CONTINUE][HEALTHY] = 1.0 - p_start;
    transition[HEALTHY][CONTINUE][RECON] = p_start;
    transition[RECON][CONTINUE][RECON] = 1.0 - p_stage;
    transition[RECON][CONTINUE][COMPROMISED] = p_stage;
    transition[COMPROMISED][CONTINUE][COMPROMISED] = 1.0 - p_stage;
    transition[COMPROMISED][CONTINUE][BREACHED] = p_stage;
    transition[BREACHED][CONTINUE][BREACHED] = 1.0;
    for s in [HEALTHY, RECON, COMPROMISED] {
        transition[s][DEFEND][HEALTHY] = 1.0;
    }
    transition[BREACHED][DEFEND][BREACHED] = 1.0;

    let mut attacker_behavior = vec![vec![0.0; 4]; ns];
    attacker_behavior[HEALTHY][PASSIVE] = 1.0;
    attacker_behavior[RECON][PING_SCAN] = 1.0 - config.port_scan_prob;
    attacker_behavior[RECON][PORT_SCAN] = config.port_scan_prob;
    attacker_behavior[COMPROMISED][EXPLOIT] = EXPLOIT_PROB;
    attacker_behavior[COMPROMISED][PASSIVE] = 1.0 - EXPLOIT_PROB;
    attacker_behavior[BREACHED][EXPLOIT] = 1.0;

    // Emission rows depend only on the attacker's action, so they are
    // identical across states.
    let emission: Vec<Vec<Vec<f64>>> = (0..ATTACKER_ACTIONS.len())
        .map(|a| {
            let source = if a == PING_SCAN && !config.ping_scan_visible {
                PASSIVE
            } else {
                a
            };
            (0..METRIC_NAMES.len())
                .map(|m| {
                    let rate =
                        CLIENT_RATES[m] * config.client_traffic_scale + ATTACK_RATES[source][m];
                    binned_poisson(rate, config.bins)
                })
                .collect()
        })
        .collect();
    let observation = vec![emission; ns];

    let service = config.service_reward;
    let defend = -config.defend_cost;
    let reward = vec![
        vec![service, defend - config.false_alarm_penalty],
        vec![
            service - config.intrusion_penalty,
            defend + config.stop_intrusion_reward,
        ],
        vec![
            service - config.intrusion_penalty,
            defend + config.stop_intrusion_reward,
        ],
        vec![-config.intrusion_penalty, defend],
    ];

    let mut initial_distribution = vec![0.0; ns];
    initial_distribution[HEALTHY] = 1.0;

    let model = PomdpModel {
        name: config.name.clone(),
        config_hash: config.hash(),
        state_names: STATE_NAMES.iter().map(|s| s.to_string()).collect(),
        defender_actions: vec![
            DefenderAction {
                name: "continue".into(),
                cost: 0.0,
            },
            DefenderAction {
                name: "defend".into(),
                cost: config.defend_cost,
            },
        ],
        attacker_actions: ATTACKER_ACTIONS.iter().map(|s| s.to_string()).collect(),
        metrics: METRIC_NAMES
            .iter()
            .map(|n| MetricSpec {
                name: n.to_string(),
                bins: config.bins,
            })
            .collect(),
        transition,
        attacker_behavior,
        observation,
        reward,
        initial_distribution,
        horizon: config.horizon,
        terminal_states: vec![BREACHED],
    };
    model.ensure_valid()?;
    Ok(model)
}

/// The default scenario with default configuration.
pub fn default_scenario() -> PomdpModel {
    build_intrusion_scenario(&ScenarioConfig::default()).expect("default config is valid")
}
