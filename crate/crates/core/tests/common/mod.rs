#![allow(dead_code)]

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};
use textscore::corpus::{Dataset, FeatureValue, LoanRecord, Schema};
use textscore::refine::{Clock, EndpointConfig, FakeClock, LlmClient};

/// One canned reply: HTTP status and raw body.
#[derive(Clone)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn chat(content: &str) -> Self {
        let body = json!({"choices": [{"message": {"role": "assistant", "content": content}}]});
        Self { status: 200, body: body.to_string() }
    }

    pub fn status(status: u16) -> Self {
        Self { status, body: "{}".into() }
    }

    pub fn raw(body: &str) -> Self {
        Self { status: 200, body: body.into() }
    }
}

#[derive(Default)]
struct State {
    script: VecDeque<Reply>,
    fallback: Option<Reply>,
    requests: Vec<Value>,
    arrivals: Vec<Duration>,
}

/// Minimal chat-completions server on a loopback port. Replies follow the
/// script, then the fallback; each request body and its arrival time on the
/// shared clock are recorded.
pub struct StubServer {
    pub base_url: String,
    state: Arc<Mutex<State>>,
    pub clock: Arc<FakeClock>,
}

impl StubServer {
    pub fn start(script: Vec<Reply>, fallback: Option<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let state = Arc::new(Mutex::new(State { script: script.into(), fallback, ..Default::default() }));
        let clock = Arc::new(FakeClock::default());
        let (st, ck) = (state.clone(), clock.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let (st, ck) = (st.clone(), ck.clone());
                std::thread::spawn(move || serve(stream, &st, &ck));
            }
        });
        Self { base_url, state, clock }
    }

    pub fn calls(&self) -> usize {
        self.state.lock().unwrap().requests.len()
    }

    pub fn requests(&self) -> Vec<Value> {
        self.state.lock().unwrap().requests.clone()
    }

    pub fn arrivals(&self) -> Vec<Duration> {
        self.state.lock().unwrap().arrivals.clone()
    }

    pub fn endpoint(&self, rpm: usize) -> EndpointConfig {
        EndpointConfig {
            base_url: self.base_url.clone(),
            model: "stub-model".into(),
            requests_per_minute: rpm,
            timeout_secs: 10,
            backoff_base_ms: 10,
            ..Default::default()
        }
    }

    pub fn client(&self, rpm: usize) -> LlmClient {
        self.client_with(self.endpoint(rpm))
    }

    pub fn client_with(&self, cfg: EndpointConfig) -> LlmClient {
        let clock: Arc<dyn Clock> = self.clock.clone();
        LlmClient::with_clock(cfg, "test-token".into(), clock).unwrap()
    }
}

fn serve(stream: TcpStream, state: &Mutex<State>, clock: &FakeClock) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let reply = {
        let mut s = state.lock().unwrap();
        s.requests.push(serde_json::from_slice(&body).unwrap_or(Value::Null));
        s.arrivals.push(clock.now());
        s.script.pop_front().or_else(|| s.fallback.clone()).unwrap_or_else(|| Reply::status(500))
    };
    let mut out = stream;
    let head = format!(
        "HTTP/1.1 {} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        reply.status,
        reply.body.len()
    );
    let _ = out.write_all(head.as_bytes());
    let _ = out.write_all(reply.body.as_bytes());
    let _ = out.flush();
}

/// Records with only a label and an id, enough for splitting.
pub fn label_only_dataset(n: usize, n_pos: usize) -> Dataset {
    let records = (0..n)
        .map(|i| LoanRecord {
            id: format!("L{i:05}"),
            features: [("x".to_string(), FeatureValue::Continuous(i as f64))].into(),
            human_text: "text".into(),
            refined_texts: Default::default(),
            label: u8::from(i < n_pos),
            loan_amount: 100.0,
            interest_rate: 0.1,
            term_months: 12,
        })
        .collect();
    Dataset { records, schema: Schema::default() }
}
