//! HTTP-backed reasoning policy with a persistent response cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GameError, Result};
use crate::game::{ActionSpace, Distribution};
use crate::prompt::policy::{Backend, InfoContext, ReasoningPolicy, Role, Sampling, StructuredPrompt};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_RETRIES: u32 = 2;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PolicyRequest {
    pub prompt_id: String,
    pub rendered_prompt: String,
    pub role: Role,
    pub info: serde_json::Value,
    pub action_labels: Vec<String>,
    pub seed: u64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PolicyResponse {
    pub samples: Vec<String>,
}

fn info_object(info: &InfoContext) -> serde_json::Value {
    serde_json::json!({
        "private_info": info.private_info,
        "observed_message": info.observed_message,
    })
}

/// Hex SHA-256 of the canonical (key-sorted) JSON of everything that
/// determines a response.
pub fn cache_key(prompt: &StructuredPrompt, info: &InfoContext, sampling: Sampling) -> String {
    // serde_json's default map is a BTreeMap, so object keys serialize sorted.
    let canonical = serde_json::json!({
        "prompt_id": prompt.id,
        "rendered": prompt.rendered,
        "role": info.role,
        "info": info_object(info),
        "seed": sampling.seed,
        "n_samples": sampling.sample_count,
    });
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    samples: Vec<String>,
}

/// Request-hash to raw-samples map, optionally mirrored to an append-only
/// line-delimited JSON file.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<String, Vec<String>>>,
    file: Mutex<Option<File>>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Loads existing records from `path` (if present) and appends new ones to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line).map_err(|e| {
                    GameError::Configuration(format!("cache file {} line {}: {e}", path.display(), n + 1))
                })?;
                entries.insert(rec.key, rec.samples);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            entries: RwLock::new(entries),
            file: Mutex::new(Some(file)),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<Vec<String>> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: String, samples: Vec<String>) -> Result<()> {
        let mut file = self.file.lock().expect("cache file lock");
        let mut entries = self.entries.write().expect("cache lock");
        if entries.contains_key(&key) {
            return Ok(());
        }
        if let Some(f) = file.as_mut() {
            let line = serde_json::to_string(&CacheRecord {
                key: key.clone(),
                samples: samples.clone(),
            })
            .map_err(|e| GameError::Internal(e.to_string()))?;
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        entries.insert(key, samples);
        Ok(())
    }
}

/// Maps raw samples to labels and applies add-one smoothing.
pub fn smoothed_frequencies(space: &ActionSpace, samples: &[String]) -> Result<Distribution> {
    let mut counts = vec![0.0; space.len()];
    for s in samples {
        let i = space
            .index_of(s)
            .ok_or_else(|| GameError::UnparseableAction { text: s.clone() })?;
        counts[i] += 1.0;
    }
    let total = samples.len() as f64 + space.len() as f64;
    Distribution::new(space.clone(), counts.into_iter().map(|c| (c + 1.0) / total).collect())
}

#[derive(Debug)]
pub struct ExternalPolicy {
    endpoint: String,
    space: ActionSpace,
    agent: ureq::Agent,
    retries: u32,
    cache: Option<Arc<ResponseCache>>,
    requests: AtomicU64,
}

impl ExternalPolicy {
    pub fn new(endpoint: impl Into<String>, space: ActionSpace) -> Self {
        Self::with_options(endpoint, space, DEFAULT_TIMEOUT, DEFAULT_RETRIES)
    }

    pub fn with_options(endpoint: impl Into<String>, space: ActionSpace, timeout: Duration, retries: u32) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            space,
            agent,
            retries,
            cache: None,
            requests: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Requests sent over the wire so far (retries included).
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn post(&self, body: &PolicyRequest) -> Result<Vec<String>> {
        let mut last = String::new();
        for _ in 0..=self.retries {
            self.requests.fetch_add(1, Ordering::Relaxed);
            match self.agent.post(&self.endpoint).send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status >= 500 {
                        last = format!("HTTP {status}");
                        continue;
                    }
                    if status != 200 {
                        return Err(GameError::Protocol(format!("HTTP {status} from {}", self.endpoint)));
                    }
                    let parsed: PolicyResponse = resp
                        .body_mut()
                        .read_json()
                        .map_err(|e| GameError::Protocol(format!("malformed response body: {e}")))?;
                    if parsed.samples.len() != body.n_samples {
                        return Err(GameError::Protocol(format!(
                            "asked for {} samples, got {}",
                            body.n_samples,
                            parsed.samples.len()
                        )));
                    }
                    return Ok(parsed.samples);
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(GameError::EndpointUnreachable(format!("{}: {last}", self.endpoint)))
    }
}

impl ReasoningPolicy for ExternalPolicy {
    fn backend(&self) -> Backend {
        Backend::External
    }

    fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    fn evaluate(&self, prompt: &StructuredPrompt, info: &InfoContext, sampling: Sampling) -> Result<Distribution> {
        if sampling.sample_count == 0 {
            return Err(GameError::invalid("external policies need at least one sample"));
        }
        let key = cache_key(prompt, info, sampling);
        if let Some(samples) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return smoothed_frequencies(&self.space, &samples);
        }
        let request = PolicyRequest {
            prompt_id: prompt.id.clone(),
            rendered_prompt: prompt.rendered.clone(),
            role: info.role,
            info: info_object(info),
            action_labels: self.space.labels().to_vec(),
            seed: sampling.seed,
            n_samples: sampling.sample_count,
        };
        let samples = self.post(&request)?;
        let dist = smoothed_frequencies(&self.space, &samples)?;
        if let Some(c) = &self.cache {
            c.insert(key, samples)?;
        }
        Ok(dist)
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}
