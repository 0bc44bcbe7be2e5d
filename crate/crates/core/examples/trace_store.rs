//! Fills a trace store with simulated episodes, exports one back, and
//! estimates the observation kernel from the corpus.
//!
//! ```bash
//! cargo run -p pomdbg --example trace_store -- [store-dir]
//! ```

use pomdbg::scenario::{HEALTHY, PASSIVE, PORT_SCAN, RECON};
use pomdbg::store::{EstimationConfig, TraceFilter, TraceStore};
use pomdbg::{default_scenario, simulate_episode, Policy};

fn main() -> pomdbg::Result<()> {
    let tmp = tempfile::tempdir()?;
    let root = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| tmp.path().to_path_buf());
    let store = TraceStore::open(&root)?;
    let model = default_scenario();
    let policy = Policy::never_defend(&model);

    let mut ids = Vec::new();
    for seed in 0..200 {
        let trace = simulate_episode(&model, &policy, seed, None)?;
        let text = trace.to_jsonl();
        let id = store.ingest_trace(text.as_bytes())?;
        assert_eq!(store.export_trace(&id)?, text);
        ids.push(id);
    }
    store.flush()?;
    let listed = store.list_traces(&TraceFilter::default());
    println!("{} traces in {}", listed.len(), root.display());

    let est = store.estimate_observation_model(&ids, &EstimationConfig::for_model(&model))?;
    for (state, action) in [(HEALTHY, PASSIVE), (RECON, PORT_SCAN)] {
        let l1: f64 = est.kernel[state][action]
            .iter()
            .zip(&model.observation[state][action])
            .map(|(e, z)| e.iter().zip(z).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        println!(
            "{} / {}: {} samples, worst per-metric L1 error {l1:.4}",
            model.state_names[state], model.attacker_actions[action], est.counts[state][action]
        );
    }
    println!("{} low-sample cells", est.warnings.len());
    Ok(())
}
