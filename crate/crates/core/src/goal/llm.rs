use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{parse_structured_goal, GoalError, GoalSource, GoalSpec};
use crate::pddl::Domain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default)]
    pub retries: u32,
}

fn default_key_env() -> String {
    "LLM_API_KEY".to_string()
}

fn default_timeout() -> f64 {
    30.0
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), GoalError> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(GoalError::Config("timeout_s must be positive".into()));
        }
        if self.base_url.is_empty() || self.model.is_empty() {
            return Err(GoalError::Config("base_url and model are required".into()));
        }
        Ok(())
    }
}

/// Sends one chat-completions request body and returns the response body.
pub trait ChatTransport: Send + Sync {
    fn send(&self, request: &Value) -> Result<Value, GoalError>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    key: Option<String>,
}

impl HttpTransport {
    pub fn new(cfg: &LlmConfig) -> Result<Self, GoalError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_s))
            .build()
            .map_err(|e| GoalError::Network(e.to_string()))?;
        Ok(HttpTransport {
            client,
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            key: std::env::var(&cfg.api_key_env).ok(),
        })
    }
}

impl ChatTransport for HttpTransport {
    fn send(&self, request: &Value) -> Result<Value, GoalError> {
        let mut req = self.client.post(&self.url).json(request);
        if let Some(k) = &self.key {
            req = req.bearer_auth(k);
        }
        req.send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json::<Value>())
            .map_err(|e| GoalError::Network(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: Value,
    pub response: Value,
}

/// Replays recorded exchanges. Each recorded exchange answers at most one
/// request; identical requests consume entries in file order.
pub struct Cassette {
    entries: Vec<Exchange>,
    used: Mutex<Vec<bool>>,
}

impl Cassette {
    pub fn new(entries: Vec<Exchange>) -> Self {
        let used = Mutex::new(vec![false; entries.len()]);
        Cassette { entries, used }
    }

    pub fn load(path: &Path) -> Result<Self, GoalError> {
        let text = std::fs::read_to_string(path).map_err(|e| GoalError::Cassette(e.to_string()))?;
        let entries: Vec<Exchange> =
            serde_json::from_str(&text).map_err(|e| GoalError::Cassette(e.to_string()))?;
        Ok(Cassette::new(entries))
    }
}

impl ChatTransport for Cassette {
    fn send(&self, request: &Value) -> Result<Value, GoalError> {
        let mut used = self.used.lock().expect("cassette lock poisoned");
        for (i, e) in self.entries.iter().enumerate() {
            if !used[i] && e.request == *request {
                used[i] = true;
                return Ok(e.response.clone());
            }
        }
        Err(GoalError::Cassette(
            "no recorded response for request".into(),
        ))
    }
}

/// Forwards to an inner transport and keeps every exchange.
pub struct Recorder<T> {
    inner: T,
    log: Mutex<Vec<Exchange>>,
}

impl<T: ChatTransport> Recorder<T> {
    pub fn new(inner: T) -> Self {
        Recorder {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().expect("recorder lock poisoned").clone()
    }

    pub fn save(&self, path: &Path) -> Result<(), GoalError> {
        let text = serde_json::to_string_pretty(&self.exchanges())
            .map_err(|e| GoalError::Cassette(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| GoalError::Cassette(e.to_string()))
    }
}

impl<T: ChatTransport> ChatTransport for Recorder<T> {
    fn send(&self, request: &Value) -> Result<Value, GoalError> {
        let response = self.inner.send(request)?;
        self.log
            .lock()
            .expect("recorder lock poisoned")
            .push(Exchange {
                request: request.clone(),
                response: response.clone(),
            });
        Ok(response)
    }
}

/// Prompt listing the domain's types and predicate signatures. It never
/// mentions the scene.
pub fn build_prompt(instruction: &str, domain: &Domain) -> String {
    let mut s = String::from(
        "Translate the instruction into a goal condition for a PDDL planner.\n\nTypes:\n",
    );
    for t in domain.types.types() {
        match domain.types.parent(t) {
            Some(p) => s += &format!("  {t} (a kind of {p})\n"),
            None => s += &format!("  {t}\n"),
        }
    }
    s += "\nPredicates:\n";
    for p in &domain.predicates {
        let params: Vec<String> = p
            .params
            .iter()
            .map(|x| format!("?{} - {}", x.name, x.ty))
            .collect();
        s += &format!("  {}({})\n", p.name, params.join(", "));
    }
    s += "\nReply with a single line such as `in(cucumber, white_bowl) AND sliced(cucumber)`. \
          Use NOT before a clause to require that it is false. Object names are lowercase \
          with underscores. Do not write anything else.\n\nInstruction: ";
    s += instruction;
    s.push('\n');
    s
}

fn extract_content(response: &Value) -> Option<String> {
    response
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(|s| {
            s.trim()
                .trim_start_matches("```pddl")
                .trim_start_matches("```text")
                .trim_start_matches("```")
                .trim_end_matches("```")
                .trim()
                .to_string()
        })
}

/// Asks the endpoint for a goal. Responses that fail the structured-goal
/// validator are retried up to `cfg.retries` times.
pub fn llm_parse_goal(
    instruction: &str,
    domain: &Domain,
    cfg: &LlmConfig,
    transport: &dyn ChatTransport,
) -> Result<GoalSpec, GoalError> {
    cfg.validate()?;
    let request = json!({
        "model": cfg.model,
        "temperature": 0,
        "messages": [{"role": "user", "content": build_prompt(instruction, domain)}],
    });
    let attempts = cfg.retries as usize + 1;
    let mut last = String::new();
    let mut last_err = None;
    for _ in 0..attempts {
        match transport.send(&request) {
            Ok(resp) => {
                let content = extract_content(&resp).unwrap_or_else(|| resp.to_string());
                match parse_structured_goal(&content, domain) {
                    Ok(mut spec) => {
                        spec.source = GoalSource::Llm;
                        return Ok(spec);
                    }
                    Err(e) => {
                        last = content;
                        last_err = Some(e);
                    }
                }
            }
            Err(e @ (GoalError::Network(_) | GoalError::Cassette(_))) => {
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    match last_err {
        Some(e @ (GoalError::Network(_) | GoalError::Cassette(_))) => Err(e),
        Some(GoalError::UnknownPredicate(p)) => Err(GoalError::UnknownPredicate(p)),
        _ => Err(GoalError::Unparsable { attempts, last }),
    }
}
