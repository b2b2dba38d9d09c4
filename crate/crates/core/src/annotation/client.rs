use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::descriptor::Descriptor;
use super::stable_hash;

/// One model call: the rendered prompt plus the raw descriptor it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    /// Prompt key (`hand_role`, ..., `verify`); not sent over the wire.
    #[serde(skip)]
    pub task: String,
    pub prompt: String,
    pub input_descriptor: String,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited")]
    RateLimit,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("service unavailable: {0}")]
    Unavailable(String),
}

impl ClientError {
    /// Worth retrying with the same request.
    pub fn is_transient(&self) -> bool {
        matches!(self, ClientError::Timeout | ClientError::RateLimit)
    }
}

/// A text model. Implementations must tolerate concurrent calls.
pub trait ModelClient: Send + Sync {
    fn name(&self) -> &str;
    fn max_in_flight(&self) -> usize;
    fn complete(&self, request: &Request) -> Result<String, ClientError>;
}

/// Offline responder that fills fixed templates from the request descriptor.
///
/// Responses depend only on the request and the seed. Failure injection,
/// per-task overrides and seeded delays exist for tests.
pub struct MockClient {
    seed: u64,
    max_in_flight: usize,
    down: bool,
    failures: Mutex<HashMap<String, usize>>,
    overrides: HashMap<String, Vec<String>>,
    override_calls: Mutex<HashMap<String, usize>>,
    jitter: Option<Mutex<ChaCha8Rng>>,
    max_delay: Duration,
}

impl MockClient {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            max_in_flight: 4,
            down: false,
            failures: Mutex::new(HashMap::new()),
            overrides: HashMap::new(),
            override_calls: Mutex::new(HashMap::new()),
            jitter: None,
            max_delay: Duration::ZERO,
        }
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    /// The first `count` calls for `task` time out.
    pub fn with_timeouts(self, task: &str, count: usize) -> Self {
        self.failures.lock().expect("unpoisoned").insert(task.to_string(), count);
        self
    }

    /// Calls for `task` return these texts in turn; the last one repeats.
    pub fn with_override(mut self, task: &str, responses: &[&str]) -> Self {
        self.overrides.insert(task.to_string(), responses.iter().map(|s| s.to_string()).collect());
        self
    }

    /// Every call fails with `Unavailable`.
    pub fn down(mut self) -> Self {
        self.down = true;
        self
    }

    /// Sleeps a seeded random duration up to `max_delay` per call, shuffling completion order.
    pub fn with_jitter(mut self, jitter_seed: u64, max_delay: Duration) -> Self {
        self.jitter = Some(Mutex::new(ChaCha8Rng::seed_from_u64(jitter_seed)));
        self.max_delay = max_delay;
        self
    }

    fn respond(&self, req: &Request) -> Result<String, ClientError> {
        let d = Descriptor::parse(&req.input_descriptor);
        let (verb, noun) = d.action_pair();
        let lead = d.get("lead").unwrap_or("right");
        let text = match req.task.as_str() {
            "hand_role" => match lead {
                "both" => "Both hands act together with matching roles.".to_string(),
                other => format!("The {other} hand leads while the other hand stays still."),
            },
            "action_object" => format!("{verb} {noun}"),
            "state_transition" => format!(
                "The hands start at rest, {} {} at a {} pace, and return to rest.",
                verb,
                noun,
                d.get("tempo").unwrap_or("steady")
            ),
            "intent" => format!("to {verb} the {noun}"),
            "summarize" => summarize(&req.prompt),
            "refine" => serde_json::json!({
                "caption": format!("The {lead} hand {verb}s the {noun}."),
                "pairs": [[verb, noun]],
            })
            .to_string(),
            "verify" => {
                let h = stable_hash(&[&self.seed.to_le_bytes(), req.prompt.as_bytes(), req.input_descriptor.as_bytes()]);
                let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
                let family_named = d.get("family").is_some_and(|f| req.prompt.to_lowercase().contains(f));
                let score = if family_named { 0.75 + 0.25 * unit } else { 0.25 * unit };
                serde_json::json!({ "score": score }).to_string()
            }
            other => return Err(ClientError::Malformed(format!("unknown task {other:?}"))),
        };
        Ok(text)
    }
}

/// Joins the `aspect: answer` lines of the summarization input in a fixed order.
fn summarize(input: &str) -> String {
    let answers: BTreeMap<&str, &str> = input
        .lines()
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.trim(), v.trim().trim_end_matches('.')))
        .collect();
    let get = |k| answers.get(k).copied().unwrap_or("");
    format!(
        "{}; the action is to {}, {}. The hands {}.",
        get("hand_role"),
        get("action_object"),
        get("intent"),
        get("state_transition").trim_start_matches("The hands ")
    )
}

impl ModelClient for MockClient {
    fn name(&self) -> &str {
        "mock"
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    fn complete(&self, req: &Request) -> Result<String, ClientError> {
        if let Some(rng) = &self.jitter {
            let nanos = rng.lock().expect("unpoisoned").gen_range(0..=self.max_delay.as_nanos() as u64);
            std::thread::sleep(Duration::from_nanos(nanos));
        }
        if self.down {
            return Err(ClientError::Unavailable("mock is down".into()));
        }
        {
            let mut failures = self.failures.lock().expect("unpoisoned");
            if let Some(n) = failures.get_mut(&req.task) {
                if *n > 0 {
                    *n -= 1;
                    return Err(ClientError::Timeout);
                }
            }
        }
        if let Some(responses) = self.overrides.get(&req.task) {
            let mut calls = self.override_calls.lock().expect("unpoisoned");
            let i = calls.entry(req.task.clone()).or_insert(0);
            let text = responses[(*i).min(responses.len() - 1)].clone();
            *i += 1;
            return Ok(text);
        }
        self.respond(req)
    }
}

/// Remote model behind `POST endpoint` with JSON `{prompt, input_descriptor, max_tokens}` → `{text}`.
pub struct HttpClient {
    endpoint: String,
    api_key: Option<String>,
    max_in_flight: usize,
    agent: ureq::Agent,
}

/// Environment variable that overrides the configured API key.
pub const API_KEY_ENV: &str = "HANDLM_ANNOTATION_KEY";

impl HttpClient {
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration, max_in_flight: usize) -> Self {
        let api_key = std::env::var(API_KEY_ENV).ok().or(api_key);
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self { endpoint: endpoint.to_string(), api_key, max_in_flight: max_in_flight.max(1), agent }
    }
}

#[derive(Deserialize)]
struct HttpResponse {
    text: String,
}

impl ModelClient for HttpClient {
    fn name(&self) -> &str {
        &self.endpoint
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    fn complete(&self, req: &Request) -> Result<String, ClientError> {
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        match call.send_json(req) {
            Ok(resp) => resp
                .into_json::<HttpResponse>()
                .map(|r| r.text)
                .map_err(|e| ClientError::Malformed(e.to_string())),
            Err(ureq::Error::Status(429, _)) => Err(ClientError::RateLimit),
            Err(ureq::Error::Status(code, _)) => Err(ClientError::Unavailable(format!("HTTP {code}"))),
            Err(ureq::Error::Transport(t)) if t.kind() == ureq::ErrorKind::Io => Err(ClientError::Timeout),
            Err(ureq::Error::Transport(t)) => Err(ClientError::Unavailable(t.to_string())),
        }
    }
}
