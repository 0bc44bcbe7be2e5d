//! Trains a defender with PPO on the built-in scenario and compares it to
//! the random and never-defend baselines.
//!
//! ```bash
//! cargo run --release -p pomdbg --example train_policy -- [iterations] [out.json]
//! ```

use pomdbg::policy::{evaluate_policy, ppo_train_with, save_policy};
use pomdbg::{default_scenario, Policy, TrainingConfig};

fn main() -> pomdbg::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut config = TrainingConfig::default();
    if let Some(n) = args.next() {
        config.iterations = n.parse().expect("iterations must be an integer");
    }
    let model = default_scenario();

    let started = std::time::Instant::now();
    let (params, stats) = ppo_train_with(&model, &config, |it| {
        if it.iteration % 10 == 0 {
            eprintln!(
                "iter {:>4}  return {:>8.2}  entropy {:.3}  clip {:.3}",
                it.iteration, it.mean_return, it.entropy, it.clip_fraction
            );
        }
    })?;
    eprintln!("trained in {:.1?}", started.elapsed());
    if let (Some(first), Some(last)) = (stats.first(), stats.last()) {
        println!("first iteration return {:.2}, last {:.2}", first.mean_return, last.mean_return);
    }

    let trained = Policy::network(&model, params)?;
    for (name, policy) in [
        ("trained", &trained),
        ("random", &Policy::random(&model)),
        ("never_defend", &Policy::never_defend(&model)),
        ("threshold(0.5)", &Policy::threshold(&model, 0.5)),
    ] {
        let s = evaluate_policy(&model, policy, 500, 12345)?;
        println!(
            "{name:<15} mean return {:>8.2} ± {:<7.2} length {:>6.1}  defend freq {:.3}  false alarms {}",
            s.mean_return, s.std_return, s.mean_length, s.defend_frequency, s.false_alarms
        );
    }

    if let Some(path) = args.next() {
        std::fs::write(&path, save_policy(&trained))?;
        println!("wrote {path}");
    }
    Ok(())
}
