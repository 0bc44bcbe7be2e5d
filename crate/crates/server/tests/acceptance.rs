//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so that each criterion reports its
//! measured numbers. The process fails on any failure not listed in
//! `KNOWN_RED`; those are explained in the project's decisions notes and
//! printed as FAIL all the same.
//!
//! ```bash
//! cargo test -p pomdbg-server --test acceptance
//! ```

mod contract;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use pomdbg::analysis::{compare_emissions, observation_update_deviation, search_false_alarms};
use pomdbg::debugger::{
    Comparison, DebugSession, Frame, HaltReason, Mode, Predicate, SessionSource, Status,
};
use pomdbg::model::{DefenderAction, MetricSpec};
use pomdbg::policy::{
    evaluate_policy, gae_advantages, ppo_surrogate, ppo_train, ppo_train_with, PpoBatch,
    TrainingStats,
};
use pomdbg::scenario::{DEFEND, HEALTHY, PASSIVE, PING_SCAN, PORT_SCAN};
use pomdbg::store::{estimate_from_traces, EstimationConfig, TraceStore};
use pomdbg::{
    build_intrusion_scenario, default_scenario, simulate_episode, Belief, EpisodeTrace,
    Observation, Policy, PolicyInput, PolicyParameters, PomdpModel, ScenarioConfig, SimRng,
    TrainingConfig,
};

/// Criteria expected to fail, with the reason in one line.
const KNOWN_RED: &[(&str, &str)] = &[(
    "estimation_consistency",
    "E[L1] of a 16-bin empirical row is ~2.5/sqrt(N), about 0.08 at N=1000; 0.02 needs N~18000",
)];

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- helpers

fn random_dist(rng: &mut SimRng, n: usize, zero_prob: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| if rng.uniform() < zero_prob { 0.0 } else { rng.uniform() + 0.01 })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[(rng.next_u64() % n as u64) as usize] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

fn below(rng: &mut SimRng, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

/// A small random POMDP with some structural zeros.
fn random_model(rng: &mut SimRng) -> PomdpModel {
    let ns = 2 + below(rng, 3);
    let na = 1 + below(rng, 2);
    let natt = 1 + below(rng, 2);
    let bins: Vec<usize> = (0..1 + below(rng, 2)).map(|_| 2 + below(rng, 2)).collect();
    PomdpModel {
        name: "random".into(),
        config_hash: String::new(),
        state_names: (0..ns).map(|s| format!("s{s}")).collect(),
        defender_actions: (0..na)
            .map(|a| DefenderAction { name: format!("a{a}"), cost: 0.0 })
            .collect(),
        attacker_actions: (0..natt).map(|a| format!("x{a}")).collect(),
        metrics: bins
            .iter()
            .enumerate()
            .map(|(m, &b)| MetricSpec { name: format!("m{m}"), bins: b })
            .collect(),
        transition: (0..ns)
            .map(|_| (0..na).map(|_| random_dist(rng, ns, 0.25)).collect())
            .collect(),
        attacker_behavior: (0..ns).map(|_| random_dist(rng, natt, 0.2)).collect(),
        observation: (0..ns)
            .map(|_| {
                (0..natt)
                    .map(|_| bins.iter().map(|&b| random_dist(rng, b, 0.2)).collect())
                    .collect()
            })
            .collect(),
        reward: (0..ns).map(|_| (0..na).map(|_| rng.uniform() - 0.5).collect()).collect(),
        initial_distribution: random_dist(rng, ns, 0.3),
        horizon: 6,
        terminal_states: Vec::new(),
    }
}

/// Samples a (defender action, observation) history from the model itself,
/// so every observation has positive probability.
fn random_history(m: &PomdpModel, rng: &mut SimRng, len: usize) -> Vec<(usize, Observation)> {
    let mut s = rng.categorical(&m.initial_distribution);
    (0..len)
        .map(|_| {
            let a = below(rng, m.defender_actions.len());
            s = rng.categorical(&m.transition[s][a]);
            let att = rng.categorical(&m.attacker_behavior[s]);
            let obs = m.observation[s][att].iter().map(|row| rng.categorical(row)).collect();
            (a, Observation(obs))
        })
        .collect()
}

/// `P(o | s') = Σ_att π(att|s') Π_m Z[s'][att][m][o_m]`, written out afresh.
fn emission(m: &PomdpModel, s: usize, obs: &Observation) -> f64 {
    (0..m.attacker_actions.len())
        .map(|att| {
            m.attacker_behavior[s][att]
                * obs.0.iter().enumerate().map(|(k, &b)| m.observation[s][att][k][b]).product::<f64>()
        })
        .sum()
}

/// Posterior over the last state by enumerating every state trajectory.
fn brute_force_posterior(m: &PomdpModel, history: &[(usize, Observation)]) -> Vec<f64> {
    let ns = m.state_names.len();
    let len = history.len() + 1;
    let mut post = vec![0.0; ns];
    let mut path = vec![0usize; len];
    for code in 0..ns.pow(len as u32) {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % ns;
            c /= ns;
        }
        let mut p = m.initial_distribution[path[0]];
        for (t, (a, obs)) in history.iter().enumerate() {
            if p == 0.0 {
                break;
            }
            p *= m.transition[path[t]][*a][path[t + 1]] * emission(m, path[t + 1], obs);
        }
        post[path[len - 1]] += p;
    }
    let total: f64 = post.iter().sum();
    post.iter().map(|p| p / total).collect()
}

fn trained() -> &'static (Policy, TrainingStats, Duration) {
    static TRAINED: OnceLock<(Policy, TrainingStats, Duration)> = OnceLock::new();
    TRAINED.get_or_init(|| {
        let model = default_scenario();
        let start = Instant::now();
        let (params, stats) = ppo_train(&model, &TrainingConfig::default()).expect("training runs");
        let policy = Policy::network(&model, params).expect("trained policy fits the model");
        (policy, stats, start.elapsed())
    })
}

// --------------------------------------------------------------- criteria

fn filter_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = SimRng::new(2024);
    let mut worst = 0.0f64;
    let mut checks = 0;
    for _ in 0..50 {
        let m = random_model(&mut rng);
        m.ensure_valid().map_err(err)?;
        let len = 1 + below(&mut rng, 6);
        let history = random_history(&m, &mut rng, len);
        let mut belief = m.initial_belief().map_err(err)?;
        for t in 0..=len {
            if t > 0 {
                let (a, obs) = &history[t - 1];
                belief = m.belief_update(&belief, *a, obs).map_err(err)?;
            }
            let oracle = brute_force_posterior(&m, &history[..t]);
            for (x, y) in belief.probs().iter().zip(&oracle) {
                worst = worst.max((x - y).abs());
            }
            checks += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-9, || format!("max |filter - brute force| = {worst:.3e}"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:.1?}"))?;
    Ok(format!("50 models, {checks} beliefs, max err {worst:.2e}, {elapsed:.2?}"))
}

fn distribution_validity() -> Outcome {
    let mut rng = SimRng::new(77);
    let mut worst = 0.0f64;
    let check = |p: &[f64], worst: &mut f64| -> Result<(), String> {
        ensure(p.iter().all(|x| (0.0..=1.0).contains(x)), || format!("entry out of [0,1]: {p:?}"))?;
        *worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
        Ok(())
    };

    let mut updates = 0;
    while updates < 10_000 {
        let m = random_model(&mut rng);
        let ns = m.state_names.len();
        for _ in 0..100 {
            let belief = Belief::new(random_dist(&mut rng, ns, 0.3)).map_err(err)?;
            let a = below(&mut rng, m.defender_actions.len());
            let obs = Observation(m.metrics.iter().map(|s| below(&mut rng, s.bins)).collect());
            match m.belief_update(&belief, a, &obs) {
                Ok(b) => check(b.probs(), &mut worst)?,
                // Zero evidence is reported, never normalized into garbage.
                Err(pomdbg::Error::ImpossibleObservation { unnormalized }) => ensure(
                    unnormalized.iter().all(|&p| p == 0.0),
                    || format!("impossible with mass {unnormalized:?}"),
                )?,
                Err(e) => return Err(e.to_string()),
            }
            updates += 1;
        }
    }

    let model = default_scenario();
    let spaces = pomdbg::policy::PolicySpaces::of(&model);
    let mut predicts = 0;
    while predicts < 10_000 {
        let mut params = PolicyParameters::init(spaces.feature_len(), &[64, 64], 2, &mut rng);
        let scale = 0.5 + 3.0 * rng.uniform();
        params.randomize(&mut rng, scale);
        let policy = Policy::network(&model, params).map_err(err)?;
        for _ in 0..500 {
            let belief = Belief::new(random_dist(&mut rng, 4, 0.3)).map_err(err)?;
            let obs = Observation((0..3).map(|_| below(&mut rng, 16)).collect());
            let t = below(&mut rng, 101);
            let input = PolicyInput::from_model(&model, &belief, Some(&obs), t, 100);
            check(&policy.predict(&input).map_err(err)?.probs, &mut worst)?;
            predicts += 1;
        }
    }
    ensure(worst <= 1e-9, || format!("max |sum - 1| = {worst:.3e}"))?;
    Ok(format!("{updates} updates + {predicts} predicts, max |sum - 1| = {worst:.2e}"))
}

fn random_batch(params: &PolicyParameters, rng: &mut SimRng, n: usize) -> PpoBatch {
    let inputs = params.layer_sizes()[0];
    let actions = params.policy_head.outputs;
    let mut b = PpoBatch::default();
    for _ in 0..n {
        let x: Vec<f64> = (0..inputs).map(|_| rng.uniform()).collect();
        let (logits, _) = params.forward(&x).unwrap();
        let a = below(rng, actions);
        let lse = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
        b.old_log_probs.push(logits[a] - lse + 0.3 * (rng.uniform() - 0.5));
        b.features.push(x);
        b.actions.push(a);
        b.advantages.push(2.0 * rng.uniform() - 1.0);
        b.returns.push(2.0 * rng.uniform() - 1.0);
    }
    b
}

fn gradient_check() -> Outcome {
    // Five-point central stencil. The three-point one cannot resolve the
    // smallest coordinates to 1e-4: at h = 1e-5 roundoff leaves ~3e-10, at
    // h = 1e-4 the h² term does. Relative error is taken against
    // max(|fd|, |analytic|, 1e-6).
    const H: f64 = 1e-4;
    const FLOOR: f64 = 1e-6;
    let start = Instant::now();
    let config = TrainingConfig::default();
    let inputs = pomdbg::policy::PolicySpaces::of(&default_scenario()).feature_len();
    let mut rng = SimRng::new(31);
    let (mut worst, mut coords, mut worst_at) = (0.0f64, 0usize, (0, 0, 0.0));
    for draw in 0..20 {
        let mut params = PolicyParameters::init(inputs, &config.hidden_layers, 2, &mut rng);
        params.randomize(&mut rng, 0.7);
        let batch = random_batch(&params, &mut rng, 8);
        let analytic: Vec<f64> =
            ppo_surrogate(&params, &batch, &config).map_err(err)?.grad.values().copied().collect();
        for (i, a) in analytic.iter().enumerate() {
            let mut probe = params.clone();
            let loss_at = |probe: &mut PolicyParameters, v: f64| {
                *probe.values_mut().nth(i).unwrap() = v;
                ppo_surrogate(probe, &batch, &config).map(|o| o.loss)
            };
            let x = *params.values().nth(i).unwrap();
            let mut f = |k: f64| loss_at(&mut probe, x + k * H).map_err(err);
            let fd = (8.0 * (f(1.0)? - f(-1.0)?) - (f(2.0)? - f(-2.0)?)) / (12.0 * H);
            let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(FLOOR);
            if rel >= 1e-4 {
                return Err(format!("draw {draw} coord {i}: analytic {a:e} vs fd {fd:e} (rel {rel:.2e})"));
            }
            if rel > worst {
                worst = rel;
                worst_at = (draw, i, *a);
            }
            coords += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "20 draws, {coords} coords, max rel err {worst:.2e} (draw {} coord {} grad {:.2e}), {elapsed:.1?}",
        worst_at.0, worst_at.1, worst_at.2
    ))
}

fn gae_oracle() -> Outcome {
    let mut rng = SimRng::new(5);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = 1 + below(&mut rng, 32);
        let rewards: Vec<f64> = (0..n).map(|_| 4.0 * rng.uniform() - 2.0).collect();
        let values: Vec<f64> = (0..n).map(|_| 4.0 * rng.uniform() - 2.0).collect();
        let terminal = if rng.uniform() < 0.5 { 0.0 } else { rng.uniform() };
        let gamma = 0.5 + 0.5 * rng.uniform();
        let lambda = rng.uniform();
        let (adv, returns) = gae_advantages(&rewards, &values, terminal, gamma, lambda).map_err(err)?;
        let v = |t: usize| if t < n { values[t] } else { terminal };
        for t in 0..n {
            let oracle: f64 = (t..n)
                .map(|l| {
                    let delta = rewards[l] + gamma * v(l + 1) - values[l];
                    (gamma * lambda).powi((l - t) as i32) * delta
                })
                .sum();
            worst = worst.max((adv[t] - oracle).abs()).max((returns[t] - oracle - values[t]).abs());
        }
    }
    ensure(worst < 1e-10, || format!("max diff {worst:.3e}"))?;
    Ok(format!("200 sequences, max diff {worst:.2e}"))
}

fn learning_efficacy() -> Outcome {
    let model = default_scenario();
    let (policy, stats, train_time) = trained();
    let start = Instant::now();
    let eval = |p: &Policy| evaluate_policy(&model, p, 500, 12345).map(|s| s.mean_return);
    let ppo = eval(policy).map_err(err)?;
    let random = eval(&Policy::random(&model)).map_err(err)?;
    let never = eval(&Policy::never_defend(&model)).map_err(err)?;
    let total = *train_time + start.elapsed();
    let first = stats.first().ok_or("no iterations")?.mean_return;
    let last = stats.last().ok_or("no iterations")?.mean_return;
    let detail = format!(
        "ppo {ppo:.2} vs random {random:.2}, never_defend {never:.2}; iteration return {first:.1} -> {last:.1}; {total:.1?}"
    );
    ensure(ppo > random && ppo > never, || detail.clone())?;
    ensure(last >= first, || detail.clone())?;
    ensure(total < Duration::from_secs(600), || detail.clone())?;
    Ok(detail)
}

fn spike_triggers_defence() -> Outcome {
    let model = Arc::new(default_scenario());
    let (policy, ..) = trained();
    let c = compare_emissions(model, policy, 200, 7, PORT_SCAN, PASSIVE, DEFEND).map_err(err)?;
    let detail = format!(
        "P(defend) after port_scan {:.3} vs passive {:.3} over {} paired episodes",
        c.mean_after_focus, c.mean_after_baseline, c.paired_episodes
    );
    ensure(c.paired_episodes > 0 && c.mean_after_focus > c.mean_after_baseline, || detail.clone())?;
    Ok(detail)
}

fn ping_scan_invisible() -> Outcome {
    let quiet = build_intrusion_scenario(&ScenarioConfig {
        port_scan_prob: 0.0,
        stage_progression_prob: 0.0,
        ..ScenarioConfig::default()
    })
    .map_err(err)?;
    let rows: Vec<_> = quiet.observation.iter().map(|s| &s[PING_SCAN]).collect();
    ensure(rows.windows(2).all(|w| w[0] == w[1]), || "ping rows differ across states".into())?;
    let policy = Policy::never_defend(&quiet);
    let d = observation_update_deviation(Arc::new(quiet), &policy, 50, 7, PING_SCAN).map_err(err)?;
    let detail = format!("{} ping_scan steps, max |update - prediction| = {:.2e}", d.steps, d.max_abs_diff);
    ensure(d.steps > 0 && d.max_abs_diff <= 1e-12, || detail.clone())?;
    Ok(detail)
}

fn false_alarm_search() -> Outcome {
    let model = Arc::new(default_scenario());
    let noisy = Arc::new(
        build_intrusion_scenario(&ScenarioConfig {
            intrusion_start_prob: 0.0,
            client_traffic_scale: 1.5,
            ..ScenarioConfig::default()
        })
        .map_err(err)?,
    );
    let (policy, ..) = trained();
    let r = search_false_alarms(model, noisy, policy, 0..500, DEFEND, HEALTHY, 0.5).map_err(err)?;
    ensure(r.seeds_searched == 500 && r.intrusions == 0, || {
        format!("searched {}, intrusions {}", r.seeds_searched, r.intrusions)
    })?;
    let hit = r.hits.first().ok_or("no benign episode crossed 0.5")?;
    Ok(format!(
        "{} of 500 benign episodes alarm; first: seed {} P(defend) {:.3} at t {}",
        r.hits.len(),
        hit.seed,
        hit.defend_prob,
        hit.t
    ))
}

fn determinism() -> Outcome {
    let model = default_scenario();
    let dir = tempfile::tempdir().map_err(err)?;
    let store = TraceStore::open(dir.path()).map_err(err)?;
    let policies = [Policy::random(&model), Policy::threshold(&model, 0.8), trained().0.clone()];
    let mut bytes = 0;
    for (i, policy) in policies.iter().enumerate() {
        for seed in 0..5 {
            let text = simulate_episode(&model, policy, seed, None).map_err(err)?.to_jsonl();
            let again = simulate_episode(&model, policy, seed, None).map_err(err)?.to_jsonl();
            ensure(text == again, || format!("policy {i} seed {seed}: resimulation differs"))?;
            let id = store.ingest_trace(text.as_bytes()).map_err(err)?;
            let exported = store.export_trace(&id).map_err(err)?;
            ensure(exported.as_bytes() == text.as_bytes(), || format!("policy {i} seed {seed}: export differs"))?;
            bytes += text.len();
        }
    }

    let config = TrainingConfig { iterations: 6, ..TrainingConfig::default() };
    let stream = || -> Result<(Vec<String>, PolicyParameters), String> {
        let mut lines = Vec::new();
        let (params, _) = ppo_train_with(&model, &config, |it| {
            lines.push(serde_json::to_string(it).unwrap());
        })
        .map_err(err)?;
        Ok((lines, params))
    };
    let (a, pa) = stream()?;
    let (b, pb) = stream()?;
    ensure(a == b, || "training stats streams differ".into())?;
    ensure(pa == pb, || "trained parameters differ".into())?;
    Ok(format!("15 traces ({bytes} bytes) round-trip byte-identical; {} stats lines identical", a.len()))
}

fn sim_session(policy: Policy, seed: u64) -> pomdbg::Result<DebugSession> {
    let model = Arc::new(default_scenario());
    DebugSession::new(
        SessionSource::Simulation {
            model,
            environment: None,
            policy: Arc::new(policy),
            seed,
            horizon: None,
        },
        Mode::Manual,
    )
}

fn replay_session(trace: &EpisodeTrace) -> pomdbg::Result<DebugSession> {
    DebugSession::new(
        SessionSource::Replay {
            trace: Arc::new(trace.clone()),
            model: Arc::new(default_scenario()),
            overlay: None,
        },
        Mode::Manual,
    )
}

/// Frame fields visible to a breakpoint, built from the trace alone.
struct Expected {
    t: usize,
    action: usize,
    obs: Vec<usize>,
    belief: Vec<f64>,
}

fn debugger_semantics() -> Outcome {
    let model = default_scenario();

    // step(k); reverse(k) restores frame 0.
    for seed in 0..5 {
        let mut s = sim_session(Policy::threshold(&model, 0.5), seed).map_err(err)?;
        let frame0 = s.current_frame();
        for k in [1, 2, 5, 17, 40] {
            let moved = s.step(k).map_err(err)?.t;
            s.reverse(moved).map_err(err)?;
            ensure(s.current_frame() == frame0, || format!("seed {seed} k {k}: frame 0 changed"))?;
        }
    }

    // Breakpoints halt exactly at every match, in order, and nowhere else.
    type Check = Box<dyn Fn(&Expected) -> bool>;
    let cases: Vec<(Predicate, Check)> = vec![
        (Predicate::TimeEquals { t: 7 }, Box::new(|e| e.t == 7)),
        (Predicate::DefenderActionIs { action: DEFEND }, Box::new(|e| e.action == DEFEND)),
        (
            Predicate::MetricThreshold { metric: 0, op: Comparison::Ge, bin: 6 },
            Box::new(|e| e.obs[0] >= 6),
        ),
        (
            Predicate::MetricThreshold { metric: 2, op: Comparison::Le, bin: 1 },
            Box::new(|e| e.obs[2] <= 1),
        ),
        (
            Predicate::BeliefThreshold { state: HEALTHY, op: Comparison::Le, value: 0.5 },
            Box::new(|e| e.belief[HEALTHY] <= 0.5),
        ),
        (
            Predicate::All {
                predicates: vec![
                    Predicate::DefenderActionIs { action: 0 },
                    Predicate::MetricThreshold { metric: 1, op: Comparison::Ge, bin: 2 },
                ],
            },
            Box::new(|e| e.action == 0 && e.obs[1] >= 2),
        ),
    ];
    let mut halts = 0;
    for seed in 0..10 {
        let trace = simulate_episode(&model, &Policy::random(&model), seed, Some(40)).map_err(err)?;
        let expected: Vec<Expected> = trace
            .steps
            .iter()
            .map(|r| Expected {
                t: r.t,
                action: r.defender_action,
                obs: r.observation.0.clone(),
                belief: r.belief_after.as_ref().unwrap().probs().to_vec(),
            })
            .collect();
        for (pred, oracle) in &cases {
            let mut s = replay_session(&trace).map_err(err)?;
            let id = s.add_breakpoint(pred.clone()).map_err(err)?;
            let want: Vec<usize> = expected.iter().filter(|e| oracle(e)).map(|e| e.t).collect();
            let mut got = Vec::new();
            loop {
                let f = s.continue_run().map_err(err)?;
                match &f.halt_reason {
                    Some(HaltReason::Breakpoint { id: hit }) if *hit == id => got.push(f.t),
                    _ => {}
                }
                if s.status() == Status::Finished {
                    break;
                }
            }
            ensure(got == want, || format!("seed {seed} {pred:?}: halted at {got:?}, matches at {want:?}"))?;
            halts += got.len();
        }
    }

    // what_if is pure.
    let mut probed = sim_session(trained().0.clone(), 3).map_err(err)?;
    let mut plain = sim_session(trained().0.clone(), 3).map_err(err)?;
    for _ in 0..10 {
        let before = probed.frames(0, usize::MAX);
        let summary = probed.summary();
        for a in 0..model.defender_actions.len() {
            probed.what_if(a).map_err(err)?;
        }
        ensure(probed.frames(0, usize::MAX) == before, || "what_if changed frames".into())?;
        ensure(probed.summary() == summary, || "what_if changed the session".into())?;
        if probed.step(3).map_err(err)? != plain.step(3).map_err(err)? {
            return Err("stepping after what_if diverged".into());
        }
        if probed.status() == Status::Finished {
            break;
        }
    }

    // Replay frames equal the trace records.
    let mut frames_checked = 0;
    for seed in 20..30 {
        let trace = simulate_episode(&model, &trained().0, seed, None).map_err(err)?;
        let mut s = replay_session(&trace).map_err(err)?;
        s.continue_run().map_err(err)?;
        let frames: Vec<Frame> = s.frames(1, usize::MAX);
        ensure(frames.len() == trace.steps.len(), || format!("seed {seed}: frame count"))?;
        let mut cumulative = 0.0;
        for (f, r) in frames.iter().zip(&trace.steps) {
            cumulative += r.reward;
            let attacker = f.attacker.as_ref().ok_or("attacker view missing")?;
            let same = f.t == r.t
                && f.defender_action == Some(r.defender_action)
                && f.observation.as_ref() == Some(&r.observation)
                && f.reward == r.reward
                && f.cumulative_reward == cumulative
                && Some(&f.belief) == r.belief_after.as_ref()
                && attacker.state == r.state
                && attacker.attacker_action == Some(r.attacker_action);
            ensure(same, || format!("seed {seed} t {}: frame differs from record", r.t))?;
            frames_checked += 1;
        }
    }
    Ok(format!(
        "reverse restores frame 0; {halts} breakpoint halts all exact; what_if pure; {frames_checked} replay frames match"
    ))
}

fn api_contract() -> Outcome {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(err)?;
    let mut failed = Vec::new();
    for (name, case) in contract::CASES {
        let res = rt.block_on(async { tokio::spawn(case()).await });
        if res.is_err() {
            failed.push(*name);
        }
    }
    ensure(failed.is_empty(), || format!("failed cases: {failed:?}"))?;
    Ok(format!("{} cases against the in-process router", contract::CASES.len()))
}

fn estimation_consistency() -> Outcome {
    let model = default_scenario();
    let policy = Policy::never_defend(&model);
    let mut traces = Vec::new();
    let (mut steps, mut seed) = (0, 0);
    while steps < 100_000 {
        let t = simulate_episode(&model, &policy, seed, None).map_err(err)?;
        steps += t.steps.len();
        seed += 1;
        traces.push(t);
    }
    let est = estimate_from_traces(&traces, &EstimationConfig::for_model(&model)).map_err(err)?;
    let (mut cells, mut worst, mut worst_at) = (0, 0.0f64, (0, 0, 0));
    for s in 0..model.num_states() {
        for a in 0..model.num_attacker_actions() {
            let n = est.counts[s][a];
            if n < 1000 {
                continue;
            }
            cells += 1;
            for m in 0..model.num_metrics() {
                let l1: f64 = est.kernel[s][a][m]
                    .iter()
                    .zip(&model.observation[s][a][m])
                    .map(|(x, y)| (x - y).abs())
                    .sum();
                if l1 > worst {
                    worst = l1;
                    worst_at = (s, a, n);
                }
            }
        }
    }
    let detail = format!(
        "{steps} steps, {cells} cells with >= 1000 samples, max L1 {worst:.4} (state {} attacker {} n={})",
        worst_at.0, worst_at.1, worst_at.2
    );
    ensure(cells > 0 && worst <= 0.02, || detail.clone())?;
    Ok(detail)
}

fn main() {
    let criteria: &[(&str, fn() -> Outcome)] = &[
        ("filter_correctness", filter_correctness),
        ("distribution_validity", distribution_validity),
        ("gradient_check", gradient_check),
        ("gae_oracle", gae_oracle),
        ("learning_efficacy", learning_efficacy),
        ("spike_triggers_defence", spike_triggers_defence),
        ("ping_scan_invisible", ping_scan_invisible),
        ("false_alarm_search", false_alarm_search),
        ("determinism", determinism),
        ("debugger_semantics", debugger_semantics),
        ("api_contract", api_contract),
        ("estimation_consistency", estimation_consistency),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let known = KNOWN_RED.iter().find(|(n, _)| n == name);
        match (outcome, known) {
            (Ok(detail), None) => println!("PASS {name}: {detail}"),
            (Ok(detail), Some(_)) => println!("PASS {name}: {detail} (listed as known red)"),
            (Err(detail), Some((_, why))) => println!("FAIL {name}: {detail} [known red: {why}]"),
            (Err(detail), None) => {
                unexpected += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if unexpected > 0 {
        eprintln!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}
