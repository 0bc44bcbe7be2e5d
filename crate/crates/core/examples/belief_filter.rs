//! Runs the recursive belief filter by hand over a few observations of the
//! built-in scenario.
//!
//! ```bash
//! cargo run -p pomdbg --example belief_filter
//! ```

use pomdbg::scenario::{CONTINUE, DEFEND};
use pomdbg::{default_scenario, Observation};

fn main() -> pomdbg::Result<()> {
    let model = default_scenario();
    let report = model.validate();
    println!("model {} valid: {}", model.name, report.is_valid());

    let show = |label: &str, b: &pomdbg::Belief| {
        let parts: Vec<String> = model
            .state_names
            .iter()
            .zip(b.probs())
            .map(|(n, p)| format!("{n}={p:.3}"))
            .collect();
        println!("{label:<28} {}", parts.join("  "));
    };

    let mut belief = model.initial_belief()?;
    show("initial", &belief);
    // ids_alerts, failed_logins, new_connections
    let quiet = Observation(vec![1, 0, 4]);
    let scan = Observation(vec![7, 1, 12]);
    let exploit = Observation(vec![4, 6, 6]);
    for (label, action, obs) in [
        ("continue, quiet", CONTINUE, &quiet),
        ("continue, scan-like spike", CONTINUE, &scan),
        ("continue, exploit-like", CONTINUE, &exploit),
        ("defend, quiet", DEFEND, &quiet),
    ] {
        belief = model.belief_update(&belief, action, obs)?;
        show(label, &belief);
    }

    let marginals = model.metric_marginals(&model.predict_belief(&belief, CONTINUE)?)?;
    for (spec, row) in model.metrics.iter().zip(&marginals) {
        let mode = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        println!("next {:<16} most likely bin {mode} (p={:.3})", spec.name, row[mode]);
    }
    Ok(())
}
