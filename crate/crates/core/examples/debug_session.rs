//! Steps through a simulated episode the way the debugger UI does: set a
//! breakpoint, continue to it, probe an alternative action, rewind.
//!
//! ```bash
//! cargo run -p pomdbg --example debug_session
//! ```

use std::sync::Arc;

use pomdbg::debugger::{Comparison, DebugSession, Frame, Mode, Predicate, SessionSource};
use pomdbg::scenario::{DEFEND, HEALTHY};
use pomdbg::{default_scenario, Policy};

fn show(frame: &Frame) {
    let b: Vec<String> = frame.belief.probs().iter().map(|p| format!("{p:.3}")).collect();
    let defend = frame
        .action_distribution
        .as_ref()
        .map(|d| d.probs[DEFEND])
        .unwrap_or(f64::NAN);
    let attacker = frame
        .attacker
        .as_ref()
        .map(|a| format!("{} / {}", a.state_name, a.attacker_action_name.as_deref().unwrap_or("-")))
        .unwrap_or_default();
    println!(
        "t={:<3} belief [{}]  P(defend)={defend:.3}  obs={:?}  attacker {attacker}  halt={:?}",
        frame.t,
        b.join(", "),
        frame.observation.as_ref().map(|o| o.bins()),
        frame.halt_reason
    );
}

fn main() -> pomdbg::Result<()> {
    let model = Arc::new(default_scenario());
    let policy = Arc::new(Policy::threshold(&model, 0.8));
    let mut session = DebugSession::new(
        SessionSource::Simulation {
            model: model.clone(),
            environment: None,
            policy,
            seed: 3,
            horizon: None,
        },
        Mode::Manual,
    )?;

    show(&session.current_frame());
    for _ in 0..3 {
        show(&session.step(1)?);
    }

    let id = session.add_breakpoint(Predicate::BeliefThreshold {
        state: HEALTHY,
        op: Comparison::Le,
        value: 0.5,
    })?;
    println!("breakpoint {id}: belief in healthy <= 0.5");
    let frame = session.continue_run()?;
    show(&frame);

    for action in 0..model.num_defender_actions() {
        let r = session.what_if(action)?;
        println!(
            "what if {:<8} expected reward {:>7.2}  true reward {:?}",
            r.action_name, r.expected_reward, r.reward
        );
    }

    let back = session.reverse(frame.t.min(2))?;
    println!("reversed to t={}", back.t);
    let fork = session.fork(Some(99))?;
    println!("forked session {} at t={}", fork.id(), fork.cursor());
    Ok(())
}
