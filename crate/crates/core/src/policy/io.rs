//! Policy files.
//!
//! A policy file is a single JSON object (UTF-8, no trailing newline):
//!
//! ```text
//! {"format_version":1,"policy_kind":"network","num_states":4,
//!  "num_defender_actions":2,"num_metrics":3,"layer_sizes":[8,64,64,2],
//!  "payload":{…}}
//! ```
//!
//! `payload` is the serialized [`PolicyKind`] (tagged by `"kind"`).
//! `layer_sizes` is empty for non-network policies. Floats use the shortest
//! decimal form that round-trips, so save → load → save is byte-identical.

use serde::{Deserialize, Serialize};

use super::{Policy, PolicyKind, PolicySpaces};
use crate::error::{Error, Result};

pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    format_version: u32,
    policy_kind: String,
    num_states: usize,
    num_defender_actions: usize,
    num_metrics: usize,
    layer_sizes: Vec<usize>,
    payload: PolicyKind,
}

pub fn save_policy(policy: &Policy) -> Vec<u8> {
    let layer_sizes = match &policy.kind {
        PolicyKind::Network(p) => p.layer_sizes(),
        _ => vec![],
    };
    let file = PolicyFile {
        format_version: POLICY_FORMAT_VERSION,
        policy_kind: policy.kind_name().into(),
        num_states: policy.spaces.num_states,
        num_defender_actions: policy.spaces.num_defender_actions,
        num_metrics: policy.spaces.num_metrics,
        layer_sizes,
        payload: policy.kind.clone(),
    };
    serde_json::to_vec(&file).expect("policy serializes")
}

pub fn load_policy(bytes: &[u8]) -> Result<Policy> {
    let file: PolicyFile =
        serde_json::from_slice(bytes).map_err(|e| Error::Load(format!("malformed policy file: {e}")))?;
    if file.format_version != POLICY_FORMAT_VERSION {
        return Err(Error::Load(format!(
            "unsupported format_version {} (expected {POLICY_FORMAT_VERSION})",
            file.format_version
        )));
    }
    let spaces = PolicySpaces {
        num_states: file.num_states,
        num_defender_actions: file.num_defender_actions,
        num_metrics: file.num_metrics,
    };
    if spaces.num_states == 0 || spaces.num_defender_actions == 0 {
        return Err(Error::Load("empty state or action space".into()));
    }
    let policy = Policy {
        spaces,
        kind: file.payload,
    };
    if policy.kind_name() != file.policy_kind {
        return Err(Error::Load(format!(
            "policy_kind {} does not match payload {}",
            file.policy_kind,
            policy.kind_name()
        )));
    }
    let n = spaces.num_defender_actions;
    match &policy.kind {
        PolicyKind::Threshold {
            alpha,
            alert_states,
            defend_action,
            idle_action,
        } => {
            if !alpha.is_finite() {
                return Err(Error::Load("threshold alpha is not finite".into()));
            }
            if alert_states.iter().any(|&s| s >= spaces.num_states) {
                return Err(Error::Load("alert state out of range".into()));
            }
            if *defend_action >= n || *idle_action >= n {
                return Err(Error::Load("threshold action out of range".into()));
            }
        }
        PolicyKind::Random => {}
        PolicyKind::Constant { action } => {
            if *action >= n {
                return Err(Error::Load("constant action out of range".into()));
            }
        }
        PolicyKind::Network(params) => {
            params.check_shapes().map_err(|e| Error::Load(e.to_string()))?;
            let sizes = params.layer_sizes();
            if sizes != file.layer_sizes {
                return Err(Error::Load(format!(
                    "header layer_sizes {:?} disagree with payload {sizes:?}",
                    file.layer_sizes
                )));
            }
            if sizes[0] != spaces.feature_len() || *sizes.last().unwrap() != n {
                return Err(Error::Load(format!(
                    "layer sizes {sizes:?} do not fit {} features and {n} actions",
                    spaces.feature_len()
                )));
            }
            if !params.is_finite() {
                return Err(Error::Load("non-finite parameter".into()));
            }
        }
    }
    Ok(policy)
}
