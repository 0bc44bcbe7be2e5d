//! Hunts for the three behaviours worth stepping through in the debugger:
//! a defence triggered by a port-scan spike, ping scans that leave the
//! belief untouched, and false alarms on noisy but benign traffic.
//!
//! ```bash
//! cargo run --release -p pomdbg --example edge_cases -- [policy.json]
//! ```

use std::sync::Arc;

use pomdbg::analysis::{compare_emissions, observation_update_deviation, search_false_alarms};
use pomdbg::policy::{load_policy, ppo_train};
use pomdbg::scenario::{DEFEND, HEALTHY, PASSIVE, PING_SCAN, PORT_SCAN};
use pomdbg::{build_intrusion_scenario, default_scenario, Policy, ScenarioConfig, TrainingConfig};

fn main() -> pomdbg::Result<()> {
    let model = Arc::new(default_scenario());
    let policy = match std::env::args().nth(1) {
        Some(path) => load_policy(&std::fs::read(path)?)?,
        None => {
            eprintln!("no policy given, training one with the default config");
            let (params, _) = ppo_train(&model, &TrainingConfig::default())?;
            Policy::network(&model, params)?
        }
    };

    let spike = compare_emissions(model.clone(), &policy, 200, 7, PORT_SCAN, PASSIVE, DEFEND)?;
    println!(
        "P(defend) after port_scan {:.3} vs after passive {:.3} ({} paired episodes)",
        spike.mean_after_focus, spike.mean_after_baseline, spike.paired_episodes
    );

    let quiet = Arc::new(build_intrusion_scenario(&ScenarioConfig {
        port_scan_prob: 0.0,
        stage_progression_prob: 0.0,
        ..ScenarioConfig::default()
    })?);
    let dev = observation_update_deviation(quiet, &Policy::never_defend(&model), 50, 7, PING_SCAN)?;
    println!(
        "ping_scan steps {}: max |update - prediction| = {:.2e}",
        dev.steps, dev.max_abs_diff
    );

    let noisy = Arc::new(build_intrusion_scenario(&ScenarioConfig {
        intrusion_start_prob: 0.0,
        client_traffic_scale: 1.5,
        ..ScenarioConfig::default()
    })?);
    let report = search_false_alarms(model, noisy, &policy, 0..500, DEFEND, HEALTHY, 0.5)?;
    println!(
        "false alarms in {} of {} benign episodes",
        report.hits.len(),
        report.seeds_searched
    );
    for hit in report.hits.iter().take(5) {
        println!(
            "  seed {:>3}: P(defend) = {:.3} at t = {}",
            hit.seed, hit.defend_prob, hit.t
        );
    }
    Ok(())
}
