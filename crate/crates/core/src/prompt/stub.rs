//! Local HTTP server speaking the external policy wire contract, for tests
//! and offline runs.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::game::{ActionSpace, Distribution};
use crate::prompt::external::{PolicyRequest, PolicyResponse};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StubMode {
    /// Exact proportions: `n` samples apportioned by largest remainder.
    Quota,
    /// Independent draws from a ChaCha8 stream seeded by the request seed.
    Multinomial,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StubConfig {
    pub labels: ActionSpace,
    pub mode: StubMode,
    /// Used for prompt ids without their own entry.
    pub default: Distribution,
    pub per_prompt: BTreeMap<String, Distribution>,
    /// When set, every sample is this literal text.
    pub literal: Option<String>,
}

impl StubConfig {
    pub fn new(default: Distribution, mode: StubMode) -> Self {
        Self {
            labels: default.space().clone(),
            mode,
            default,
            per_prompt: BTreeMap::new(),
            literal: None,
        }
    }

    pub fn with_prompt(mut self, id: impl Into<String>, d: Distribution) -> Self {
        self.per_prompt.insert(id.into(), d);
        self
    }

    pub fn always(mut self, text: impl Into<String>) -> Self {
        self.literal = Some(text.into());
        self
    }

    pub fn distribution_for(&self, prompt_id: &str) -> &Distribution {
        self.per_prompt.get(prompt_id).unwrap_or(&self.default)
    }
}

/// Largest-remainder apportionment of `n` draws to `probs`; remainders tie
/// toward the lower index.
pub fn quota_counts(probs: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|a, b| {
        let ra = exact[*a] - exact[*a].floor();
        let rb = exact[*b] - exact[*b].floor();
        rb.total_cmp(&ra).then(a.cmp(b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn fnv(text: &str) -> u64 {
    text.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// The samples the stub answers with for `request`.
pub fn stub_samples(config: &StubConfig, request: &PolicyRequest) -> Vec<String> {
    if let Some(text) = &config.literal {
        return vec![text.clone(); request.n_samples];
    }
    let d = config.distribution_for(&request.prompt_id);
    let labels = d.space().labels();
    match config.mode {
        StubMode::Quota => quota_counts(d.probs(), request.n_samples)
            .into_iter()
            .enumerate()
            .flat_map(|(i, c)| std::iter::repeat_n(labels[i].clone(), c))
            .collect(),
        StubMode::Multinomial => {
            let mut rng = ChaCha8Rng::seed_from_u64(request.seed ^ fnv(&request.prompt_id));
            (0..request.n_samples)
                .map(|_| labels[d.sample_with(rng.random())].clone())
                .collect()
        }
    }
}

pub struct StubServer {
    server: Arc<tiny_http::Server>,
    url: String,
    requests: Arc<AtomicU64>,
    worker: Option<JoinHandle<()>>,
}

impl std::fmt::Debug for StubServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StubServer").field("url", &self.url).finish()
    }
}

impl StubServer {
    /// Binds an ephemeral port on localhost.
    pub fn start(config: StubConfig) -> Result<Self> {
        Self::bind("127.0.0.1:0", config)
    }

    pub fn bind(addr: &str, config: StubConfig) -> Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(|e| GameError::Configuration(format!("stub server bind {addr}: {e}")))?;
        let local = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| GameError::Internal("stub server has no IP address".into()))?;
        let server = Arc::new(server);
        let requests = Arc::new(AtomicU64::new(0));
        let worker = {
            let server = Arc::clone(&server);
            let requests = Arc::clone(&requests);
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    requests.fetch_add(1, Ordering::Relaxed);
                    let mut body = String::new();
                    let reply = match req.as_reader().read_to_string(&mut body) {
                        Ok(_) => match serde_json::from_str::<PolicyRequest>(&body) {
                            Ok(parsed) => {
                                let out = PolicyResponse {
                                    samples: stub_samples(&config, &parsed),
                                };
                                tiny_http::Response::from_string(serde_json::to_string(&out).unwrap_or_default()).with_status_code(200)
                            }
                            Err(e) => tiny_http::Response::from_string(format!("bad request: {e}")).with_status_code(400),
                        },
                        Err(e) => tiny_http::Response::from_string(format!("read error: {e}")).with_status_code(400),
                    };
                    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header");
                    let _ = req.respond(reply.with_header(header));
                }
            })
        };
        Ok(Self {
            server,
            url: format!("http://{local}/policy"),
            requests,
            worker: Some(worker),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    /// Blocks until the server is stopped from another thread or the process exits.
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
