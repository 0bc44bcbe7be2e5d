//! Interactive examination of learned intrusion-prevention policies.
//!
//! The crate models intrusion prevention as a finite POMDP ([`model`]),
//! ships a built-in scenario ([`scenario`]), trains defender policies with
//! PPO ([`policy`]), persists and estimates from episode traces ([`store`]),
//! and walks episodes step by step like a debugger ([`debugger`]).
//!
//! Runnable walkthroughs live in `examples/`:
//!
//! ```bash
//! cargo run -p pomdbg --example belief_filter
//! cargo run -p pomdbg --example debug_session
//! ```

pub mod analysis;
pub mod debugger;
pub mod error;
pub mod model;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod store;
pub mod trace;

pub use error::{Error, Result};
pub use model::{Belief, Observation, PomdpModel, ValidationReport};
pub use policy::{ActionDistribution, Policy, PolicyInput, PolicyParameters, TrainingConfig};
pub use rng::SimRng;
pub use scenario::{build_intrusion_scenario, default_scenario, ScenarioConfig};
pub use sim::{simulate_episode, simulate_episode_in, EpisodeRunner};
pub use trace::{EpisodeTrace, StepRecord, TraceHeader};
