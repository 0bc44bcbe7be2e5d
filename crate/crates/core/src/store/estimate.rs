//! Empirical observation-kernel estimation from ground-truth traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PomdpModel;
use crate::trace::EpisodeTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// One histogram per (state, attacker action, metric).
    StateAndAttacker,
    /// One histogram per (state, metric), shared by all attacker actions.
    StateOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    /// Laplace pseudo-count added to every bin.
    pub alpha: f64,
    /// Bin count per metric; must match the scenario.
    pub bins: Vec<usize>,
    pub num_states: usize,
    pub num_attacker_actions: usize,
    /// Cells with fewer samples than this are reported in `warnings`.
    pub min_samples: usize,
    pub conditioning: Conditioning,
}

impl EstimationConfig {
    pub fn for_model(model: &PomdpModel) -> Self {
        Self {
            alpha: 1.0,
            bins: model.metrics.iter().map(|m| m.bins).collect(),
            num_states: model.num_states(),
            num_attacker_actions: model.num_attacker_actions(),
            min_samples: 30,
            conditioning: Conditioning::StateAndAttacker,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha = {} must be >= 0", self.alpha)));
        }
        if self.bins.iter().any(|&b| b < 2) {
            return Err(Error::Config("every metric needs at least 2 bins".into()));
        }
        if self.num_states == 0 || self.num_attacker_actions == 0 {
            return Err(Error::Config("empty state or attacker-action space".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowSampleWarning {
    pub state: usize,
    /// `None` under [`Conditioning::StateOnly`].
    pub attacker_action: Option<usize>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationKernelEstimate {
    pub scenario: String,
    /// `kernel[s][a][m][b]`, shaped like [`PomdpModel::observation`].
    pub kernel: Vec<Vec<Vec<Vec<f64>>>>,
    /// Samples per `(s, a)` cell (pooled over `a` under state-only
    /// conditioning, repeated for every `a`).
    pub counts: Vec<Vec<usize>>,
    pub warnings: Vec<LowSampleWarning>,
}

impl ObservationKernelEstimate {
    /// A copy of `base` with the estimated observation kernel.
    pub fn instantiate(&self, base: &PomdpModel) -> Result<PomdpModel> {
        let mut model = base.clone();
        model.observation = self.kernel.clone();
        model.config_hash = String::new();
        model.config_hash = format!("estimated-{}", &model.content_hash()[..16]);
        model.ensure_valid()?;
        Ok(model)
    }
}

/// `Ẑ[s][a][m][b] = (count(b) + α) / (N + α·B_m)`.
///
/// An empty cell with `α = 0` falls back to the uniform distribution.
pub fn estimate_from_traces(
    traces: &[EpisodeTrace],
    config: &EstimationConfig,
) -> Result<ObservationKernelEstimate> {
    config.check()?;
    let first = traces
        .first()
        .ok_or_else(|| Error::EmptyInput("no traces to estimate from".into()))?;
    let scenario = &first.header.scenario;
    if let Some(other) = traces.iter().find(|t| &t.header.scenario != scenario) {
        return Err(Error::Incompatible(format!(
            "traces mix scenarios {scenario} and {}",
            other.header.scenario
        )));
    }

    let (ns, na, nm) = (config.num_states, config.num_attacker_actions, config.bins.len());
    let cell_actions = match config.conditioning {
        Conditioning::StateAndAttacker => na,
        Conditioning::StateOnly => 1,
    };
    let mut hist: Vec<Vec<Vec<Vec<u64>>>> = (0..ns)
        .map(|_| {
            (0..cell_actions)
                .map(|_| config.bins.iter().map(|&b| vec![0u64; b]).collect())
                .collect()
        })
        .collect();
    let mut samples = vec![vec![0usize; cell_actions]; ns];

    for trace in traces {
        for step in &trace.steps {
            let bad = |msg: String| {
                Error::Incompatible(format!("trace {} t={}: {msg}", trace.trace_id(), step.t))
            };
            if step.state >= ns {
                return Err(bad(format!("state {} out of range", step.state)));
            }
            if step.attacker_action >= na {
                return Err(bad(format!("attacker action {} out of range", step.attacker_action)));
            }
            if step.observation.bins().len() != nm {
                return Err(bad("wrong metric count".into()));
            }
            let a = match config.conditioning {
                Conditioning::StateAndAttacker => step.attacker_action,
                Conditioning::StateOnly => 0,
            };
            for (m, &b) in step.observation.bins().iter().enumerate() {
                if b >= config.bins[m] {
                    return Err(bad(format!("metric {m} bin {b} out of range")));
                }
                hist[step.state][a][m][b] += 1;
            }
            samples[step.state][a] += 1;
        }
    }

    let alpha = config.alpha;
    let mut kernel = vec![vec![Vec::with_capacity(nm); na]; ns];
    let mut counts = vec![vec![0usize; na]; ns];
    let mut warnings = Vec::new();
    for s in 0..ns {
        for cell in 0..cell_actions {
            let n = samples[s][cell];
            if n < config.min_samples {
                warnings.push(LowSampleWarning {
                    state: s,
                    attacker_action: match config.conditioning {
                        Conditioning::StateAndAttacker => Some(cell),
                        Conditioning::StateOnly => None,
                    },
                    samples: n,
                });
            }
            let rows: Vec<Vec<f64>> = hist[s][cell]
                .iter()
                .map(|h| {
                    let b = h.len() as f64;
                    let denom = n as f64 + alpha * b;
                    if denom == 0.0 {
                        vec![1.0 / b; h.len()]
                    } else {
                        h.iter().map(|&c| (c as f64 + alpha) / denom).collect()
                    }
                })
                .collect();
            match config.conditioning {
                Conditioning::StateAndAttacker => {
                    kernel[s][cell] = rows;
                    counts[s][cell] = n;
                }
                Conditioning::StateOnly => {
                    for a in 0..na {
                        kernel[s][a] = rows.clone();
                        counts[s][a] = n;
                    }
                }
            }
        }
    }
    Ok(ObservationKernelEstimate {
        scenario: scenario.clone(),
        kernel,
        counts,
        warnings,
    })
}
