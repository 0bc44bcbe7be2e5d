//! The `pomdbg` command line. Every successful run prints exactly one JSON
//! line on stdout; progress and errors go to stderr.
//!
//! Exit codes: 0 ok, 1 runtime error, 2 usage error.

use std::ffi::OsString;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};
use serde_json::json;

use pomdbg::policy::{evaluate_policy, load_policy, ppo_train_with, save_policy};
use pomdbg::scenario::DEFAULT_SCENARIO;
use pomdbg::store::{write_atomic, Conditioning, EstimationConfig, TraceStore};
use pomdbg::{
    build_intrusion_scenario, default_scenario, simulate_episode, Policy, PomdpModel,
    ScenarioConfig, TrainingConfig,
};

use crate::{resolve_scenario, BuiltinPolicy, ServeConfig, DEFAULT_MAX_SESSIONS};

#[derive(Debug, Parser)]
#[command(name = "pomdbg", version, about = "Train, simulate, and debug intrusion-prevention POMDP policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one episode and write its trace.
    Simulate {
        /// Scenario: a TOML file, a store scenario id/name, or intrusion-default.
        #[arg(long, default_value = DEFAULT_SCENARIO)]
        scenario: String,
        /// Policy file, store policy id, or builtin:random|never_defend|threshold=<alpha>.
        #[arg(long)]
        policy: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, env = "POMDBG_STORE")]
        store: Option<PathBuf>,
    },
    /// Train a network policy with PPO.
    Train {
        #[arg(long, default_value = DEFAULT_SCENARIO)]
        scenario: String,
        /// Training config (TOML); defaults apply to omitted keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write per-iteration stats; defaults to <out>.stats.json.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "POMDBG_STORE")]
        store: Option<PathBuf>,
    },
    /// Roll a policy out and print summary statistics.
    Evaluate {
        #[arg(long, default_value = DEFAULT_SCENARIO)]
        scenario: String,
        #[arg(long)]
        policy: String,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, env = "POMDBG_STORE")]
        store: Option<PathBuf>,
    },
    /// Add trace files to a store.
    Ingest {
        #[arg(long, env = "POMDBG_STORE")]
        store: PathBuf,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Write a stored trace back out in the interchange format.
    Export {
        #[arg(long, env = "POMDBG_STORE")]
        store: PathBuf,
        #[arg(long)]
        trace: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate an observation kernel from stored traces.
    Estimate {
        #[arg(long, env = "POMDBG_STORE")]
        store: PathBuf,
        #[arg(long, default_value = DEFAULT_SCENARIO)]
        scenario: String,
        #[arg(long, num_args = 1.., required = true)]
        traces: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 30)]
        min_samples: usize,
        /// Pool attacker actions: one histogram per (state, metric).
        #[arg(long)]
        state_only: bool,
        /// Also write the estimate here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, env = "POMDBG_STORE")]
        store: PathBuf,
        #[arg(long, env = "POMDBG_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, default_value_t = DEFAULT_MAX_SESSIONS)]
        max_sessions: usize,
        #[arg(long, default_value_t = 1800)]
        session_ttl_secs: u64,
        /// Serve a built UI from this directory.
        #[arg(long, env = "POMDBG_STATIC_DIR")]
        static_dir: Option<PathBuf>,
    },
    /// List the built-in and registered scenarios.
    Scenarios {
        #[arg(long, env = "POMDBG_STORE")]
        store: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    init_logging();
    match execute(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", json!({ "code": e.code(), "message": e.to_string() }));
            1
        }
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("POMDBG_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::env::var_os("NO_COLOR").is_none())
        .try_init();
}

fn open_store(root: &Option<PathBuf>) -> pomdbg::Result<Option<TraceStore>> {
    root.as_ref().map(TraceStore::open).transpose()
}

fn load_scenario(key: &str, store: Option<&TraceStore>) -> pomdbg::Result<PomdpModel> {
    let path = Path::new(key);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return build_intrusion_scenario(&ScenarioConfig::from_toml(&text)?);
    }
    match store {
        Some(store) => resolve_scenario(store, key),
        None if key == DEFAULT_SCENARIO => Ok(default_scenario()),
        None => Err(pomdbg::Error::NotFound(format!(
            "scenario {key} (not a file; pass --store to look it up)"
        ))),
    }
}

fn load_policy_arg(
    key: &str,
    model: &PomdpModel,
    store: Option<&TraceStore>,
) -> pomdbg::Result<Policy> {
    let policy = if let Some(spec) = key.strip_prefix("builtin:") {
        BuiltinPolicy::parse(spec)
            .ok_or_else(|| pomdbg::Error::Validation(format!("unknown builtin policy {spec:?}")))?
            .build(model)
    } else if Path::new(key).is_file() {
        load_policy(&std::fs::read(key)?)?
    } else if let Some(store) = store {
        store.load_policy(key)?
    } else {
        return Err(pomdbg::Error::NotFound(format!("policy {key}")));
    };
    policy.check_compatible(model)?;
    Ok(policy)
}

fn execute(command: Command) -> pomdbg::Result<serde_json::Value> {
    match command {
        Command::Simulate {
            scenario,
            policy,
            seed,
            out,
            horizon,
            store,
        } => {
            let store = open_store(&store)?;
            let model = load_scenario(&scenario, store.as_ref())?;
            let policy = load_policy_arg(&policy, &model, store.as_ref())?;
            let trace = simulate_episode(&model, &policy, seed, horizon)?;
            write_atomic(&out, trace.to_jsonl().as_bytes())?;
            Ok(json!({
                "command": "simulate",
                "trace_id": trace.trace_id(),
                "scenario": model.name,
                "steps": trace.steps.len(),
                "total_reward": trace.total_reward(),
                "terminated_reason": trace.header.terminated_reason,
                "out": out,
            }))
        }
        Command::Train {
            scenario,
            config,
            out,
            stats,
            seed,
            store,
        } => {
            let store = open_store(&store)?;
            let model = load_scenario(&scenario, store.as_ref())?;
            let mut config = match config {
                Some(path) => TrainingConfig::from_toml(&std::fs::read_to_string(path)?)?,
                None => TrainingConfig::default(),
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let (params, training) = ppo_train_with(&model, &config, |it| {
                tracing::info!(
                    iteration = it.iteration,
                    mean_return = it.mean_return,
                    entropy = it.entropy,
                    "ppo"
                );
            })?;
            let policy = Policy::network(&model, params)?;
            write_atomic(&out, &save_policy(&policy))?;
            let stats_path = stats.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".stats.json");
                p.into()
            });
            let stats_json = serde_json::to_vec_pretty(&training).expect("stats serialize");
            write_atomic(&stats_path, &stats_json)?;
            Ok(json!({
                "command": "train",
                "scenario": model.name,
                "iterations": training.iterations.len(),
                "first_mean_return": training.first().map(|s| s.mean_return),
                "final_mean_return": training.last().map(|s| s.mean_return),
                "out": out,
                "stats": stats_path,
            }))
        }
        Command::Evaluate {
            scenario,
            policy,
            episodes,
            seed,
            store,
        } => {
            let store = open_store(&store)?;
            let model = load_scenario(&scenario, store.as_ref())?;
            let policy = load_policy_arg(&policy, &model, store.as_ref())?;
            let stats = evaluate_policy(&model, &policy, episodes as usize, seed)?;
            Ok(serde_json::to_value(stats).expect("stats serialize"))
        }
        Command::Ingest { store, files } => {
            let store = TraceStore::open(store)?;
            let mut ids = Vec::with_capacity(files.len());
            for file in &files {
                let reader = BufReader::new(std::fs::File::open(file)?);
                ids.push(store.ingest_trace(reader)?);
            }
            store.flush()?;
            Ok(json!({ "command": "ingest", "trace_ids": ids }))
        }
        Command::Export { store, trace, out } => {
            let store = TraceStore::open(store)?;
            let text = store.export_trace(&trace)?;
            write_atomic(&out, text.as_bytes())?;
            Ok(json!({ "command": "export", "trace_id": trace, "bytes": text.len(), "out": out }))
        }
        Command::Estimate {
            store,
            scenario,
            traces,
            alpha,
            min_samples,
            state_only,
            out,
        } => {
            let store = TraceStore::open(store)?;
            let model = load_scenario(&scenario, Some(&store))?;
            let config = EstimationConfig {
                alpha,
                min_samples,
                conditioning: if state_only {
                    Conditioning::StateOnly
                } else {
                    Conditioning::StateAndAttacker
                },
                ..EstimationConfig::for_model(&model)
            };
            let estimate = store.estimate_observation_model(&traces, &config)?;
            if estimate.scenario != model.name {
                return Err(pomdbg::Error::Incompatible(format!(
                    "traces are from scenario {}, not {}",
                    estimate.scenario, model.name
                )));
            }
            let value = serde_json::to_value(&estimate).expect("estimate serializes");
            if let Some(path) = out {
                write_atomic(&path, &serde_json::to_vec(&value).expect("JSON"))?;
            }
            Ok(value)
        }
        Command::Serve {
            store,
            bind,
            max_sessions,
            session_ttl_secs,
            static_dir,
        } => {
            let config = ServeConfig {
                bind,
                store_root: store,
                max_sessions,
                session_ttl: Duration::from_secs(session_ttl_secs),
                static_dir,
            };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::serve(config.clone()))?;
            Ok(json!({ "command": "serve", "bind": config.bind.to_string(), "status": "stopped" }))
        }
        Command::Scenarios { store } => {
            let store = open_store(&store)?;
            let entries = match &store {
                Some(s) => serde_json::to_value(s.list_scenarios()).expect("JSON"),
                None => json!([{ "id": DEFAULT_SCENARIO, "name": DEFAULT_SCENARIO, "builtin": true }]),
            };
            Ok(json!({ "command": "scenarios", "scenarios": entries }))
        }
    }
}
