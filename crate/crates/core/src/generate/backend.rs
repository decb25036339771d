use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::GenerateError;

/// Environment variable holding the hosted model's API key.
pub const API_KEY_ENV: &str = "STORYRAG_API_KEY";

/// Text in, text out, plus an identity and the parameters used.
pub trait TextBackend: Send + Sync {
    fn id(&self) -> String;
    fn params(&self) -> BTreeMap<String, Value>;
    fn complete(&self, prompt: &str) -> Result<String, GenerateError>;
}

/// Deterministic backend that copies every `[F<n>] text` prompt line
/// verbatim, one line per fact.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    pub max_prompt_chars: Option<usize>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl TextBackend for MockBackend {
    fn id(&self) -> String {
        "mock-verbatim".into()
    }

    fn params(&self) -> BTreeMap<String, Value> {
        BTreeMap::new()
    }

    fn complete(&self, prompt: &str) -> Result<String, GenerateError> {
        if let Some(limit) = self.max_prompt_chars {
            let len = prompt.chars().count();
            if len > limit {
                return Err(GenerateError::BackendOverflow { len, limit });
            }
        }
        let facts: Vec<&str> = prompt
            .lines()
            .filter_map(|l| {
                let rest = l.trim_start().strip_prefix("[F")?;
                let (n, text) = rest.split_once("] ")?;
                n.chars().all(|c| c.is_ascii_digit()).then_some(text.trim())
            })
            .collect();
        Ok(facts.join("\n"))
    }
}

/// Counting semaphore bounding concurrent backend calls.
#[derive(Debug)]
pub struct CallLimiter {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl CallLimiter {
    pub fn new(permits: usize) -> Arc<Self> {
        Arc::new(CallLimiter { permits: Mutex::new(permits.max(1)), freed: Condvar::new() })
    }

    pub fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut n = self.permits.lock().expect("limiter lock");
            while *n == 0 {
                n = self.freed.wait(n).expect("limiter lock");
            }
            *n -= 1;
        }
        let out = f();
        *self.permits.lock().expect("limiter lock") += 1;
        self.freed.notify_one();
        out
    }
}

/// Client for a hosted `generateContent`-style endpoint. Model defaults are
/// left to the service; only the model name is sent.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    pub endpoint: String,
    pub model: String,
    api_key: String,
    pub max_prompt_chars: usize,
    agent: ureq::Agent,
    limiter: Arc<CallLimiter>,
}

impl HttpBackend {
    pub fn new(endpoint: &str, model: &str, api_key: String, timeout: Duration, max_concurrent: usize) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        HttpBackend {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            max_prompt_chars: 200_000,
            agent,
            limiter: CallLimiter::new(max_concurrent),
        }
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(
        endpoint: &str,
        model: &str,
        timeout: Duration,
        max_concurrent: usize,
    ) -> Result<Self, GenerateError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| GenerateError::BackendUnavailable(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(endpoint, model, key, timeout, max_concurrent))
    }

    fn url(&self) -> String {
        format!("{}/models/{}:generateContent", self.endpoint, self.model)
    }
}

impl TextBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.model)
    }

    fn params(&self) -> BTreeMap<String, Value> {
        [
            ("endpoint".to_string(), json!(self.endpoint)),
            ("model".to_string(), json!(self.model)),
            ("generation_config".to_string(), json!("service defaults")),
        ]
        .into()
    }

    fn complete(&self, prompt: &str) -> Result<String, GenerateError> {
        let len = prompt.chars().count();
        if len > self.max_prompt_chars {
            return Err(GenerateError::BackendOverflow { len, limit: self.max_prompt_chars });
        }
        let body = json!({ "contents": [{ "role": "user", "parts": [{ "text": prompt }] }] });
        self.limiter.run(|| {
            let mut resp = self
                .agent
                .post(&self.url())
                .header("x-goog-api-key", &self.api_key)
                .send_json(&body)
                .map_err(|e| GenerateError::BackendUnavailable(e.to_string()))?;
            let status = resp.status().as_u16();
            let text =
                resp.body_mut().read_to_string().map_err(|e| GenerateError::BackendUnavailable(e.to_string()))?;
            match status {
                200..=299 => {}
                413 => return Err(GenerateError::BackendOverflow { len, limit: self.max_prompt_chars }),
                _ => return Err(GenerateError::BackendUnavailable(format!("HTTP {status}: {}", text.trim()))),
            }
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| GenerateError::BackendUnavailable(format!("malformed response: {e}")))?;
            let parts = value
                .pointer("/candidates/0/content/parts")
                .and_then(Value::as_array)
                .ok_or_else(|| GenerateError::BackendUnavailable("response has no candidates".into()))?;
            Ok(parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect::<Vec<_>>().join(""))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    #[test]
    fn mock_copies_fact_lines() {
        let prompt = "Tone: warm\n[F1] Queen played Wembley\nnot a fact\n[F2] U2 played Bad\n[Fx] nope";
        assert_eq!(MockBackend::new().complete(prompt).unwrap(), "Queen played Wembley\nU2 played Bad");
    }

    #[test]
    fn mock_overflow() {
        let b = MockBackend { max_prompt_chars: Some(5) };
        assert!(matches!(b.complete("[F1] long text"), Err(GenerateError::BackendOverflow { limit: 5, .. })));
    }

    fn serve_once(status: &str, body: &str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let response = format!("HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len());
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut content_length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; content_length];
            reader.read_exact(&mut body).unwrap();
            stream.write_all(response.as_bytes()).unwrap();
            head + &String::from_utf8(body).unwrap()
        });
        (addr, handle)
    }

    #[test]
    fn http_round_trip() {
        let (addr, handle) =
            serve_once("200 OK", r#"{"candidates":[{"content":{"parts":[{"text":"Queen "},{"text":"played."}]}}]}"#);
        let b = HttpBackend::new(&addr, "test-model", "secret".into(), Duration::from_secs(5), 2);
        assert_eq!(b.complete("[F1] Queen played").unwrap(), "Queen played.");
        let request = handle.join().unwrap();
        assert!(request.starts_with("POST /models/test-model:generateContent"));
        assert!(request.to_ascii_lowercase().contains("x-goog-api-key: secret"));
        assert!(request.contains("[F1] Queen played"));
    }

    #[test]
    fn http_auth_failure_is_unavailable() {
        let (addr, handle) = serve_once("401 Unauthorized", r#"{"error":"bad key"}"#);
        let b = HttpBackend::new(&addr, "m", "k".into(), Duration::from_secs(5), 1);
        assert!(matches!(b.complete("x"), Err(GenerateError::BackendUnavailable(m)) if m.contains("401")));
        handle.join().unwrap();
    }

    #[test]
    fn limiter_bounds_concurrency() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let limiter = CallLimiter::new(2);
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (l, a, p) = (limiter.clone(), active.clone(), peak.clone());
                std::thread::spawn(move || {
                    l.run(|| {
                        let now = a.fetch_add(1, Ordering::SeqCst) + 1;
                        p.fetch_max(now, Ordering::SeqCst);
                        std::thread::sleep(Duration::from_millis(5));
                        a.fetch_sub(1, Ordering::SeqCst);
                    })
                })
            })
            .collect();
        handles.into_iter().for_each(|h| h.join().unwrap());
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
