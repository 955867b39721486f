//! Shared test support: a minimal in-process chat-completion stub server,
//! the replay fixture corpus, and a seeded random-graph generator.

#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use umrmt::umr_graph::{
    AttributeValue, Concept, EdgeTarget, RoleLabel, UmrEdge, UmrGraph, UmrNode, Variable,
};

pub const FIG1: &str = "(s / buy-01\n  :ARG0 (p / person\n    :refer-person 3rd\n    :refer-number Plural)\n  :ARG1 (c / car\n    :ARG1-of (n / new-01)\n    :refer-number Singular)\n  :aspect Activity\n  :modstr FullAff)";

pub enum StubReply {
    Ok { content: String, prompt_tokens: u64, completion_tokens: u64 },
    Status(u16, String),
}

type Responder = dyn Fn(&serde_json::Value) -> StubReply + Send + Sync;

/// One-thread HTTP/1.1 server answering chat-completion POSTs with whatever
/// the responder closure decides.
pub struct StubServer {
    addr: SocketAddr,
    requests: Arc<AtomicUsize>,
    shutdown: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl StubServer {
    pub fn start<F>(respond: F) -> StubServer
    where
        F: Fn(&serde_json::Value) -> StubReply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let addr = listener.local_addr().expect("stub addr");
        let requests = Arc::new(AtomicUsize::new(0));
        let shutdown = Arc::new(AtomicBool::new(false));
        let respond: Arc<Responder> = Arc::new(respond);
        let handle = {
            let requests = Arc::clone(&requests);
            let shutdown = Arc::clone(&shutdown);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let _ = handle_connection(stream, &respond, &requests);
                }
            })
        };
        StubServer { addr, requests, shutdown, handle: Some(handle) }
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(
    mut stream: TcpStream,
    respond: &Arc<Responder>,
    requests: &AtomicUsize,
) -> std::io::Result<()> {
    let mut buffer = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Ok(());
        }
        buffer.extend_from_slice(&chunk[..n]);
        if let Some(pos) = find_header_end(&buffer) {
            break pos;
        }
    };
    let headers = String::from_utf8_lossy(&buffer[..header_end]).to_string();
    let content_length: usize = headers
        .lines()
        .find_map(|line| {
            let (name, value) = line.split_once(':')?;
            name.eq_ignore_ascii_case("content-length").then(|| value.trim().parse().ok())?
        })
        .unwrap_or(0);
    let body_start = header_end + 4;
    while buffer.len() < body_start + content_length {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            break;
        }
        buffer.extend_from_slice(&chunk[..n]);
    }
    let body: serde_json::Value =
        serde_json::from_slice(&buffer[body_start..body_start + content_length])
            .unwrap_or(serde_json::Value::Null);

    requests.fetch_add(1, Ordering::SeqCst);
    let (status, reason, payload) = match respond(&body) {
        StubReply::Ok { content, prompt_tokens, completion_tokens } => (
            200,
            "OK",
            serde_json::json!({
                "choices": [{ "message": { "role": "assistant", "content": content } }],
                "usage": {
                    "prompt_tokens": prompt_tokens,
                    "completion_tokens": completion_tokens,
                },
            })
            .to_string(),
        ),
        StubReply::Status(code, message) => {
            (code, "Error", serde_json::json!({ "error": { "message": message } }).to_string())
        }
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    stream.write_all(response.as_bytes())?;
    stream.flush()
}

fn find_header_end(buffer: &[u8]) -> Option<usize> {
    buffer.windows(4).position(|w| w == b"\r\n\r\n")
}

/// Extracts the user message from a chat-completion request body.
pub fn user_message(body: &serde_json::Value) -> String {
    body.pointer("/messages/1/content").and_then(|v| v.as_str()).unwrap_or("").to_string()
}

/// Replay fixture: 10 Kukama items, all with sentence-level graphs.
pub const REPLAY_ITEMS: &[(&str, &str, &str)] = &[
    ("kc-001", "rana ikian tsapuki", "He runs in the forest"),
    ("kc-002", "yawara ikian kumitsa", "The dog barks at night"),
    ("kc-003", "awa emete ukaka", "The man is in the house"),
    ("kc-004", "mena umanu ipira", "My husband caught a fish"),
    ("kc-005", "ikian tsawa kakiri", "She lives near the river"),
    ("kc-006", "tana yumita uyarita", "We learned the old songs"),
    ("kc-007", "yapana yanuki tsuriara", "The children play by the canoe"),
    ("kc-008", "awiti emete yawachi", "The moon is bright tonight"),
    ("kc-009", "ipira kakiri paranapura", "Fish live in the big river"),
    ("kc-010", "tana chikari uyupe", "We searched for firewood"),
];

/// The fixture corpus as jsonl bytes.
pub fn replay_corpus_jsonl() -> String {
    let mut out = String::new();
    for (index, (id, source, reference)) in REPLAY_ITEMS.iter().enumerate() {
        let umr = format!("(e{index} / event-{index:02}\\n  :aspect Activity\\n  :modstr FullAff)");
        out.push_str(&format!(
            "{{\"id\":\"{id}\",\"language\":\"kukama\",\"source_text\":\"{source}\",\"reference_en\":\"{reference}\",\"umr_penman\":\"{umr}\"}}\n"
        ));
    }
    out
}

pub fn reference_for_source(source: &str) -> Option<&'static str> {
    REPLAY_ITEMS.iter().find(|(_, s, _)| *s == source).map(|(_, _, r)| *r)
}

/// Last `Kukama: ...` line of a prompt: the sentence to translate.
pub fn query_source(user: &str) -> Option<&str> {
    user.lines().rev().find_map(|line| line.strip_prefix("Kukama: "))
}

/// Deterministic stub translator engineered so each protocol lands strictly
/// closer to the reference than the one before it: zero-shot is unrelated,
/// zero-shot+UMR recovers half the reference, five-shot is near-perfect,
/// five-shot+UMR is exact.
pub fn directional_reply(body: &serde_json::Value) -> StubReply {
    let user = user_message(body);
    let with_umr = user.contains("Uniform Meaning Representation:");
    let five_shot = user.matches("Please provide the English translation").count() == 2;
    let source = query_source(&user).unwrap_or("");
    let reference = reference_for_source(source).unwrap_or("nothing at all");
    let content = match (five_shot, with_umr) {
        (false, false) => "qqq www zzz".to_string(),
        (false, true) => {
            let half: String = reference.chars().take(reference.chars().count() / 2).collect();
            half
        }
        (true, false) => format!("{reference} indeed"),
        (true, true) => reference.to_string(),
    };
    StubReply::Ok {
        content,
        prompt_tokens: user.len() as u64 / 4,
        completion_tokens: 16,
    }
}

const CONCEPTS: &[&str] = &[
    "buy-01", "person", "car", "new-01", "run-02", "forest", "dog", "see-01", "tell-01", "story",
    "house", "water", "sing-02", "child", "moon", "walk-01",
];

const ROLES: &[&str] = &[
    ":ARG0", ":ARG1", ":ARG2", ":ARG1-of", ":ARG0-of", ":aspect", ":modstr", ":refer-number",
    ":refer-person", ":mod", ":quant", ":poss", ":temporal",
];

// None of these collide lexically with generated variable names (letter+index).
const ATTRIBUTES: &[&str] = &[
    "Activity", "State", "Habitual", "Performance", "FullAff", "PartAff", "NegAff", "3rd", "1st",
    "2nd", "Plural", "Singular", "Dual", "5", "12", "-", "\"Denver\"", "\"New York City\"",
    "100.5",
];

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random valid graph: a nesting spine guarantees reachability, extra
/// reference edges add reentrancy, attribute edges add constants, and the
/// edge order is shuffled.
pub fn random_graph(rng: &mut ChaCha8Rng) -> UmrGraph {
    let node_count = rng.random_range(1..=8usize);
    let letters = ['s', 'p', 'c', 'n', 'a', 'b', 'd', 'e'];
    let variables: Vec<Variable> = (0..node_count)
        .map(|i| Variable::new_unchecked(format!("{}{}", letters[i % letters.len()], i)))
        .collect();
    let nodes: Vec<UmrNode> = variables
        .iter()
        .map(|v| UmrNode {
            variable: v.clone(),
            concept: Concept::new_unchecked(*CONCEPTS.choose(rng).expect("concept pool")),
        })
        .collect();

    let mut edges = Vec::new();
    for i in 1..node_count {
        let parent = rng.random_range(0..i);
        edges.push(UmrEdge {
            source: variables[parent].clone(),
            role: RoleLabel::new_unchecked(*ROLES.choose(rng).expect("role pool")),
            target: EdgeTarget::Ref(variables[i].clone()),
        });
    }
    for _ in 0..rng.random_range(0..=3usize) {
        let source = variables.choose(rng).expect("source").clone();
        let target = variables.choose(rng).expect("target").clone();
        edges.push(UmrEdge {
            source,
            role: RoleLabel::new_unchecked(*ROLES.choose(rng).expect("role pool")),
            target: EdgeTarget::Ref(target),
        });
    }
    for _ in 0..rng.random_range(0..=4usize) {
        let source = variables.choose(rng).expect("source").clone();
        edges.push(UmrEdge {
            source,
            role: RoleLabel::new_unchecked(*ROLES.choose(rng).expect("role pool")),
            target: EdgeTarget::Attribute(AttributeValue::new_unchecked(
                *ATTRIBUTES.choose(rng).expect("attribute pool"),
            )),
        });
    }
    edges.shuffle(rng);

    UmrGraph { root: variables[0].clone(), nodes, edges }
}

/// A run-config TOML pointing at the given corpus, cache and output paths.
pub fn fixture_config_toml(
    corpus_path: &std::path::Path,
    output_dir: &std::path::Path,
    cache_dir: &std::path::Path,
    endpoint: &str,
    mode: &str,
    max_in_flight: usize,
) -> String {
    format!(
        r#"output_dir = "{output}"
mode = "{mode}"
k = 5

[client]
endpoint = "{endpoint}"
model = "gpt-4"
api_key_env = "UMRMT_TEST_API_KEY"
cache_dir = "{cache}"
max_in_flight = {max_in_flight}

[client.retry]
max_attempts = 2
base_delay_ms = 1

[[corpora]]
language = "kukama"
path = "{corpus}"
"#,
        output = output_dir.display(),
        cache = cache_dir.display(),
        corpus = corpus_path.display(),
        endpoint = endpoint,
        mode = mode,
        max_in_flight = max_in_flight,
    )
}
