//! File-backed trace store with a policy and scenario catalog.
//!
//! On-disk layout under the store root:
//!
//! ```text
//! traces/<id>.jsonl             canonical trace payload
//! traces/<id>.meta.json         creation time and sequence number
//! catalog/policies/<id>.json    policy file bytes, exactly as registered
//! catalog/policies/<id>.meta.json
//! catalog/scenarios/<id>.toml   scenario config
//! catalog/scenarios/<id>.meta.json
//! index.json                    snapshot written by `flush`; never trusted
//! ```
//!
//! Every file is written to a temporary file and renamed into place. A
//! payload becomes visible once its `.meta.json` sidecar exists, so a crash
//! mid-write never exposes a partial trace. The in-memory index is rebuilt
//! from the sidecars and payloads on open.

mod estimate;

pub use estimate::{
    estimate_from_traces, Conditioning, EstimationConfig, LowSampleWarning,
    ObservationKernelEstimate,
};

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PomdpModel;
use crate::policy::{load_policy, Policy};
use crate::scenario::{build_intrusion_scenario, ScenarioConfig, DEFAULT_SCENARIO};
use crate::trace::EpisodeTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub trace_id: String,
    pub scenario: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub steps: usize,
    pub created_at: DateTime<Utc>,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: String,
    pub name: String,
    /// Policy kind, or `"scenario"`.
    pub kind: String,
    pub builtin: bool,
    pub created_at: DateTime<Utc>,
    pub seq: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub traces: BTreeMap<String, TraceMeta>,
    pub policies: BTreeMap<String, CatalogEntry>,
    pub scenarios: BTreeMap<String, CatalogEntry>,
    pub next_seq: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFilter {
    pub scenario: Option<String>,
}

#[derive(Debug)]
pub struct TraceStore {
    root: PathBuf,
    index: RwLock<StoreIndex>,
    writer: Mutex<()>,
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        && !id.starts_with('.')
}

fn read_meta<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Validation(format!("corrupt sidecar {}: {e}", path.display())))
}

fn meta_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(id) = name.strip_suffix(".meta.json") {
            out.push((id.to_string(), path.clone()));
        }
    }
    Ok(out)
}

impl TraceStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for dir in ["traces", "catalog/policies", "catalog/scenarios"] {
            fs::create_dir_all(root.join(dir))?;
        }
        let index = Self::scan(&root)?;
        Ok(Self {
            root,
            index: RwLock::new(index),
            writer: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn traces_dir(&self) -> PathBuf {
        self.root.join("traces")
    }

    fn policies_dir(&self) -> PathBuf {
        self.root.join("catalog/policies")
    }

    fn scenarios_dir(&self) -> PathBuf {
        self.root.join("catalog/scenarios")
    }

    /// Rebuilds the index from payload sidecars.
    pub fn scan(root: &Path) -> Result<StoreIndex> {
        let mut index = StoreIndex::default();
        let mut max_seq = None;
        for (id, path) in meta_files(&root.join("traces"))? {
            if !root.join("traces").join(format!("{id}.jsonl")).exists() {
                continue;
            }
            let meta: TraceMeta = read_meta(&path)?;
            max_seq = max_seq.max(Some(meta.seq));
            index.traces.insert(id, meta);
        }
        for (dir, ext, map) in [
            ("catalog/policies", "json", &mut index.policies),
            ("catalog/scenarios", "toml", &mut index.scenarios),
        ] {
            for (id, path) in meta_files(&root.join(dir))? {
                if !root.join(dir).join(format!("{id}.{ext}")).exists() {
                    continue;
                }
                let entry: CatalogEntry = read_meta(&path)?;
                max_seq = max_seq.max(Some(entry.seq));
                map.insert(id, entry);
            }
        }
        index.next_seq = max_seq.map_or(0, |s| s + 1);
        Ok(index)
    }

    pub fn index(&self) -> StoreIndex {
        self.index.read().unwrap().clone()
    }

    /// Writes the index snapshot to `index.json`.
    pub fn flush(&self) -> Result<()> {
        let _w = self.writer.lock().unwrap();
        let bytes = serde_json::to_vec_pretty(&*self.index.read().unwrap())
            .expect("index serializes");
        write_atomic(&self.root.join("index.json"), &bytes)
    }

    fn next_seq(&self) -> u64 {
        let mut idx = self.index.write().unwrap();
        let seq = idx.next_seq;
        idx.next_seq += 1;
        seq
    }

    /// Parses and persists a trace in the interchange format.
    ///
    /// The header's `trace_id` becomes the store id; an empty id is replaced
    /// by a fresh one. Re-using an existing id is a conflict.
    pub fn ingest_trace(&self, reader: impl BufRead) -> Result<String> {
        let trace = EpisodeTrace::read(reader)?;
        self.insert_trace(trace)
    }

    pub fn insert_trace(&self, mut trace: EpisodeTrace) -> Result<String> {
        if trace.header.trace_id.is_empty() {
            trace.header.trace_id = uuid::Uuid::new_v4().to_string();
        }
        let id = trace.header.trace_id.clone();
        if !valid_id(&id) {
            return Err(Error::Ingest {
                line: 1,
                message: format!("trace_id {id:?} is not a valid identifier"),
            });
        }
        if trace.steps.is_empty() {
            return Err(Error::Ingest {
                line: 2,
                message: "trace has no steps".into(),
            });
        }
        let _w = self.writer.lock().unwrap();
        if self.index.read().unwrap().traces.contains_key(&id) {
            return Err(Error::Conflict(format!("trace {id} already exists")));
        }
        let meta = TraceMeta {
            trace_id: id.clone(),
            scenario: trace.header.scenario.clone(),
            config_hash: trace.header.config_hash.clone(),
            seed: trace.header.seed,
            steps: trace.steps.len(),
            created_at: Utc::now(),
            seq: self.next_seq(),
        };
        let dir = self.traces_dir();
        write_atomic(&dir.join(format!("{id}.jsonl")), trace.to_jsonl().as_bytes())?;
        write_atomic(
            &dir.join(format!("{id}.meta.json")),
            &serde_json::to_vec(&meta).expect("meta serializes"),
        )?;
        self.index.write().unwrap().traces.insert(id.clone(), meta);
        Ok(id)
    }

    pub fn trace_meta(&self, id: &str) -> Result<TraceMeta> {
        self.index
            .read()
            .unwrap()
            .traces
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("trace {id}")))
    }

    /// Canonical interchange text of a stored trace.
    pub fn export_trace(&self, id: &str) -> Result<String> {
        self.trace_meta(id)?;
        Ok(fs::read_to_string(self.traces_dir().join(format!("{id}.jsonl")))?)
    }

    pub fn get_trace(&self, id: &str) -> Result<EpisodeTrace> {
        let text = self.export_trace(id)?;
        EpisodeTrace::from_jsonl(&text)
    }

    /// Metadata in creation order.
    pub fn list_traces(&self, filter: &TraceFilter) -> Vec<TraceMeta> {
        let mut out: Vec<TraceMeta> = self
            .index
            .read()
            .unwrap()
            .traces
            .values()
            .filter(|m| filter.scenario.as_ref().is_none_or(|s| &m.scenario == s))
            .cloned()
            .collect();
        out.sort_by_key(|m| m.seq);
        out
    }

    pub fn delete_trace(&self, id: &str) -> Result<()> {
        let _w = self.writer.lock().unwrap();
        if self.index.write().unwrap().traces.remove(id).is_none() {
            return Err(Error::NotFound(format!("trace {id}")));
        }
        let dir = self.traces_dir();
        fs::remove_file(dir.join(format!("{id}.meta.json")))?;
        fs::remove_file(dir.join(format!("{id}.jsonl")))?;
        Ok(())
    }

    fn register(
        &self,
        dir: PathBuf,
        ext: &str,
        name: &str,
        kind: &str,
        payload: &[u8],
        scenarios: bool,
    ) -> Result<String> {
        if name.trim().is_empty() {
            return Err(Error::Validation("name must not be empty".into()));
        }
        let _w = self.writer.lock().unwrap();
        {
            let idx = self.index.read().unwrap();
            let map = if scenarios { &idx.scenarios } else { &idx.policies };
            if map.values().any(|e| e.name == name)
                || (scenarios && name == DEFAULT_SCENARIO)
            {
                return Err(Error::Conflict(format!("name {name:?} already registered")));
            }
        }
        let id = uuid::Uuid::new_v4().to_string();
        let entry = CatalogEntry {
            id: id.clone(),
            name: name.into(),
            kind: kind.into(),
            builtin: false,
            created_at: Utc::now(),
            seq: self.next_seq(),
        };
        write_atomic(&dir.join(format!("{id}.{ext}")), payload)?;
        write_atomic(
            &dir.join(format!("{id}.meta.json")),
            &serde_json::to_vec(&entry).expect("entry serializes"),
        )?;
        let mut idx = self.index.write().unwrap();
        let map = if scenarios {
            &mut idx.scenarios
        } else {
            &mut idx.policies
        };
        map.insert(id.clone(), entry);
        Ok(id)
    }

    /// Catalogs a policy file; the bytes must load.
    pub fn register_policy(&self, name: &str, bytes: &[u8]) -> Result<String> {
        let policy = load_policy(bytes).map_err(|e| Error::Validation(e.to_string()))?;
        self.register(self.policies_dir(), "json", name, policy.kind_name(), bytes, false)
    }

    pub fn policy_bytes(&self, id: &str) -> Result<Vec<u8>> {
        self.policy_entry(id)?;
        Ok(fs::read(self.policies_dir().join(format!("{id}.json")))?)
    }

    pub fn policy_entry(&self, id: &str) -> Result<CatalogEntry> {
        self.index
            .read()
            .unwrap()
            .policies
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("policy {id}")))
    }

    pub fn load_policy(&self, id: &str) -> Result<Policy> {
        load_policy(&self.policy_bytes(id)?)
    }

    pub fn list_policies(&self) -> Vec<CatalogEntry> {
        let mut out: Vec<_> = self.index.read().unwrap().policies.values().cloned().collect();
        out.sort_by_key(|e| e.seq);
        out
    }

    pub fn register_scenario(&self, name: &str, config: &ScenarioConfig) -> Result<String> {
        build_intrusion_scenario(config)?;
        self.register(
            self.scenarios_dir(),
            "toml",
            name,
            "scenario",
            config.to_toml().as_bytes(),
            true,
        )
    }

    fn builtin_entry() -> CatalogEntry {
        CatalogEntry {
            id: DEFAULT_SCENARIO.into(),
            name: DEFAULT_SCENARIO.into(),
            kind: "scenario".into(),
            builtin: true,
            created_at: DateTime::<Utc>::UNIX_EPOCH,
            seq: 0,
        }
    }

    /// Registered scenarios, preceded by the built-in default.
    pub fn list_scenarios(&self) -> Vec<CatalogEntry> {
        let mut out: Vec<_> = self.index.read().unwrap().scenarios.values().cloned().collect();
        out.sort_by_key(|e| e.seq);
        out.insert(0, Self::builtin_entry());
        out
    }

    pub fn scenario_entry(&self, id: &str) -> Result<CatalogEntry> {
        if id == DEFAULT_SCENARIO {
            return Ok(Self::builtin_entry());
        }
        self.index
            .read()
            .unwrap()
            .scenarios
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("scenario {id}")))
    }

    pub fn scenario_config(&self, id: &str) -> Result<ScenarioConfig> {
        if id == DEFAULT_SCENARIO {
            return Ok(ScenarioConfig::default());
        }
        self.scenario_entry(id)?;
        let text = fs::read_to_string(self.scenarios_dir().join(format!("{id}.toml")))?;
        ScenarioConfig::from_toml(&text)
    }

    pub fn scenario_model(&self, id: &str) -> Result<PomdpModel> {
        build_intrusion_scenario(&self.scenario_config(id)?)
    }

    /// Loads `trace_ids` and estimates an observation kernel from them.
    pub fn estimate_observation_model(
        &self,
        trace_ids: &[String],
        config: &EstimationConfig,
    ) -> Result<ObservationKernelEstimate> {
        if trace_ids.is_empty() {
            return Err(Error::EmptyInput("no trace ids given".into()));
        }
        let traces = trace_ids
            .iter()
            .map(|id| self.get_trace(id))
            .collect::<Result<Vec<_>>>()?;
        estimate_from_traces(&traces, config)
    }
}
