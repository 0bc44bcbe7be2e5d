//! Simulates one episode and prints it in the line-delimited trace format.
//!
//! ```bash
//! cargo run -p pomdbg --example simulate_trace -- [seed] > episode.jsonl
//! ```

use pomdbg::{default_scenario, simulate_episode, EpisodeTrace, Policy};

fn main() -> pomdbg::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(7);
    let model = default_scenario();
    let policy = Policy::threshold(&model, 0.8);
    let trace = simulate_episode(&model, &policy, seed, None)?;

    let text = trace.to_jsonl();
    // Parsing and re-serializing is the identity.
    assert_eq!(EpisodeTrace::from_jsonl(&text)?.to_jsonl(), text);
    print!("{text}");
    eprintln!(
        "{} steps, total reward {}, ended by {:?}",
        trace.steps.len(),
        trace.total_reward(),
        trace.header.terminated_reason
    );
    Ok(())
}
