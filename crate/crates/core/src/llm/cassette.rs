//! Record/replay of chat traffic as JSONL cassettes.
//!
//! Each line is `{"request_hash": "<sha256 hex>", "response": "<text>"}`. The
//! hash covers the model id, the messages and the temperature. Repeated
//! identical requests replay their recorded responses in order; once a
//! hash's queue is exhausted its last response keeps being served.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatClient, ChatRequest, Completion, LlmError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub request_hash: String,
    pub response: String,
}

pub fn request_hash(request: &ChatRequest) -> String {
    let canonical = serde_json::json!({
        "model": request.model,
        "messages": request.messages,
        "temperature": request.temperature,
    });
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

#[derive(Default)]
struct Tape {
    queue: VecDeque<String>,
    last: Option<String>,
}

/// Serves responses from a cassette; a request that was never recorded is an upstream error.
pub struct ReplayChat {
    tapes: Mutex<HashMap<String, Tape>>,
}

impl ReplayChat {
    pub fn from_entries(entries: impl IntoIterator<Item = CassetteEntry>) -> Self {
        let mut tapes: HashMap<String, Tape> = HashMap::new();
        for e in entries {
            tapes.entry(e.request_hash).or_default().queue.push_back(e.response);
        }
        Self { tapes: Mutex::new(tapes) }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), n + 1))
            })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }
}

impl ChatClient for ReplayChat {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let hash = request_hash(request);
        let mut tapes = self.tapes.lock().unwrap();
        let tape = tapes
            .get_mut(&hash)
            .ok_or_else(|| LlmError::Upstream(format!("cassette has no recording for request {hash}")))?;
        let text = match tape.queue.pop_front() {
            Some(t) => {
                tape.last = Some(t.clone());
                t
            }
            None => tape.last.clone().ok_or_else(|| LlmError::Upstream(format!("empty tape for {hash}")))?,
        };
        Ok(Completion::text(text))
    }
}

/// Wraps a live client and records every successful exchange.
pub struct RecordingChat<C> {
    inner: C,
    entries: Mutex<Vec<CassetteEntry>>,
}

impl<C: ChatClient> RecordingChat<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, entries: Mutex::new(Vec::new()) }
    }

    pub fn entries(&self) -> Vec<CassetteEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut f = fs::File::create(path)?;
        for e in self.entries.lock().unwrap().iter() {
            let line = serde_json::to_string(e).map_err(std::io::Error::other)?;
            f.write_all(line.as_bytes())?;
            f.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl<C: ChatClient> ChatClient for RecordingChat<C> {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, LlmError> {
        let c = self.inner.complete(request)?;
        self.entries.lock().unwrap().push(CassetteEntry { request_hash: request_hash(request), response: c.text.clone() });
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{CallRole, Message, ScriptedChat};

    fn req(text: &str) -> ChatRequest {
        ChatRequest { model: "m".into(), messages: vec![Message::user(text)], temperature: 0.0, call_role: CallRole::Filter }
    }

    #[test]
    fn role_does_not_affect_hash() {
        let mut a = req("x");
        let h = request_hash(&a);
        a.call_role = CallRole::Summarize;
        assert_eq!(h, request_hash(&a));
        assert_ne!(h, request_hash(&req("y")));
    }

    #[test]
    fn record_then_replay() {
        let rec = RecordingChat::new(ScriptedChat::new(["one", "two", "three"]));
        rec.complete(&req("x")).unwrap();
        rec.complete(&req("x")).unwrap();
        rec.complete(&req("z")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        rec.save(&path).unwrap();

        let replay = ReplayChat::load(&path).unwrap();
        assert_eq!(replay.complete(&req("x")).unwrap().text, "one");
        assert_eq!(replay.complete(&req("x")).unwrap().text, "two");
        assert_eq!(replay.complete(&req("x")).unwrap().text, "two");
        assert_eq!(replay.complete(&req("z")).unwrap().text, "three");
        assert!(matches!(replay.complete(&req("nope")), Err(LlmError::Upstream(_))));
    }
}
