//! Stateful operations behind both the HTTP routes and the CLI. Every
//! method is blocking; the server runs them on the blocking pool.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::storage::Storage;
use super::{EngineConfig, EngineError, ErrorBody};
use crate::agents::{
    run_interrogation, ArchivistReply, ArchivistSession, InterrogationState, InterrogatorOptions, Report,
    ResearchResources, StoppedBy,
};
use crate::doctree::{ParseMode, TreeJson};
use crate::eval::{run_benchmark, MetricsReport, OracleRetriever, PipelineRetriever, DEFAULT_K_GRID};
use crate::index::ChunkIndex;
use crate::llm::{CallRecord, ClientSet, CostLedger};
use crate::pipeline::ingest;
use crate::retrieval::RetrievalConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub document_id: String,
    pub filename: String,
    pub parse_mode: ParseMode,
    pub chunk_count: usize,
    pub section_count: usize,
    pub summary: Option<String>,
    pub warnings: Vec<String>,
    /// Model calls spent on ingestion.
    pub calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    #[serde(flatten)]
    pub document: DocumentSummary,
    pub tree: TreeJson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Briefed,
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub document_id: String,
    pub status: SessionStatus,
    pub archivist: ArchivistSession,
    pub state: Option<InterrogationState>,
    pub error: Option<ErrorBody>,
    pub calls: Vec<CallRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageReply {
    pub session_id: String,
    pub status: SessionStatus,
    #[serde(flatten)]
    pub reply: ArchivistReply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnView {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressView {
    pub session_id: String,
    pub status: SessionStatus,
    pub d_max: Option<usize>,
    pub turns_completed: usize,
    pub turns: Vec<TurnView>,
    pub title: Option<String>,
    pub stopped_by: Option<StoppedBy>,
    pub calls: usize,
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportView {
    pub session_id: String,
    pub status: SessionStatus,
    /// False while the loop is still refining the draft.
    pub is_final: bool,
    pub stopped_by: StoppedBy,
    pub markdown: String,
    pub report: Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskOutput {
    pub session_id: String,
    pub document_id: String,
    pub stopped_by: StoppedBy,
    pub turns: usize,
    pub calls: usize,
    pub markdown: String,
    pub report: Report,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalRequest {
    pub corpus: PathBuf,
    pub k: Option<Vec<usize>>,
    /// Where metrics.csv and metrics.json go; defaults to the corpus.
    pub out: Option<PathBuf>,
    /// `pipeline` (default) or `oracle`.
    pub retriever: Option<String>,
}

pub struct Engine {
    config: EngineConfig,
    clients: ClientSet,
    storage: Storage,
    indexes: Mutex<HashMap<String, Arc<ChunkIndex>>>,
    running: Mutex<HashSet<String>>,
    session_writes: Mutex<()>,
    counter: AtomicU64,
}

/// Clears the running flag however the loop ends.
struct RunGuard<'a> {
    running: &'a Mutex<HashSet<String>>,
    id: String,
}

impl Drop for RunGuard<'_> {
    fn drop(&mut self) {
        self.running.lock().expect("run set poisoned").remove(&self.id);
    }
}

fn short_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..8])
}

impl Engine {
    /// Build clients from the config. Call outside an async runtime when
    /// HTTP providers are configured.
    pub fn new(config: EngineConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let clients = config.build_clients()?;
        Self::with_clients(config, clients)
    }

    pub fn with_clients(config: EngineConfig, clients: ClientSet) -> Result<Self, EngineError> {
        let storage = Storage::open(&config.storage_root)?;
        Ok(Self {
            config,
            clients,
            storage,
            indexes: Mutex::default(),
            running: Mutex::default(),
            session_writes: Mutex::default(),
            counter: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    /// Parse, chunk and index a document. The id is derived from filename
    /// and content, so ingesting the same file twice is a no-op.
    pub fn ingest(&self, filename: &str, text: &str) -> Result<DocumentSummary, EngineError> {
        let filename = filename.trim();
        if filename.is_empty() {
            return Err(EngineError::BadRequest("filename must not be empty".into()));
        }
        if text.trim().is_empty() {
            return Err(EngineError::BadRequest("document text is empty".into()));
        }
        let id = short_hash(&[filename.as_bytes(), text.as_bytes()]);
        if self.storage.has_document(&id) {
            return Ok(self.storage.document_meta::<DocumentRecord>(&id)?.document);
        }
        let ledger = Arc::new(CostLedger::default());
        let doc = ingest(text, filename, &self.config.ingest, &self.clients.with_ledger(ledger.clone()))?;
        let summary = DocumentSummary {
            document_id: id.clone(),
            filename: filename.into(),
            parse_mode: doc.tree.parse_mode,
            chunk_count: doc.chunks.len(),
            section_count: doc.tree.section_count(),
            summary: doc.tree.summary.clone(),
            warnings: doc.tree.warnings.clone(),
            calls: ledger.len(),
        };
        let record = DocumentRecord { document: summary.clone(), tree: doc.tree.to_json() };
        self.storage.put_document(&id, &record, text, &doc.index)?;
        self.indexes.lock().expect("index cache poisoned").insert(id, Arc::new(doc.index));
        Ok(summary)
    }

    pub fn document(&self, id: &str) -> Result<DocumentRecord, EngineError> {
        self.storage.document_meta(id)
    }

    pub fn chunks(&self, id: &str) -> Result<String, EngineError> {
        self.storage.chunks_jsonl(id)
    }

    fn index(&self, id: &str) -> Result<Arc<ChunkIndex>, EngineError> {
        if let Some(i) = self.indexes.lock().expect("index cache poisoned").get(id) {
            return Ok(i.clone());
        }
        let idx = Arc::new(self.storage.load_index(id)?);
        self.indexes.lock().expect("index cache poisoned").insert(id.into(), idx.clone());
        Ok(idx)
    }

    pub fn create_session(&self, document_id: &str) -> Result<SessionRecord, EngineError> {
        if !self.storage.has_document(document_id) {
            return Err(EngineError::NotFound { what: "document", id: document_id.into() });
        }
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let id = short_hash(&[document_id.as_bytes(), &nanos.to_le_bytes(), &n.to_le_bytes(), &std::process::id().to_le_bytes()]);
        let record = SessionRecord {
            session_id: id.clone(),
            document_id: document_id.into(),
            status: SessionStatus::Open,
            archivist: ArchivistSession::new(),
            state: None,
            error: None,
            calls: Vec::new(),
        };
        self.storage.put_session(&id, &record)?;
        Ok(record)
    }

    pub fn session(&self, id: &str) -> Result<SessionRecord, EngineError> {
        self.storage.session(id)
    }

    fn is_running(&self, id: &str) -> bool {
        self.running.lock().expect("run set poisoned").contains(id)
    }

    /// Read, change and write back one session file.
    fn update_session<T>(&self, id: &str, f: impl FnOnce(&mut SessionRecord) -> Result<T, EngineError>) -> Result<T, EngineError> {
        let _w = self.session_writes.lock().expect("session lock poisoned");
        let mut s: SessionRecord = self.storage.session(id)?;
        let out = f(&mut s);
        self.storage.put_session(id, &s)?;
        out
    }

    /// One archivist turn, or with `finalize` the closing call that turns
    /// the dialogue (plus `text`, if any) into a brief.
    pub fn post_message(&self, session_id: &str, text: &str, finalize: bool) -> Result<MessageReply, EngineError> {
        if self.is_running(session_id) {
            return Err(EngineError::Conflict(format!("session {session_id} is being interrogated")));
        }
        if !finalize && text.trim().is_empty() {
            return Err(EngineError::BadRequest("message text is empty".into()));
        }
        self.update_session(session_id, |s| {
            let ledger = Arc::new(CostLedger::default());
            let gw = self.clients.archivist.with_ledger(ledger.clone());
            let result = if finalize {
                if !text.trim().is_empty() {
                    s.archivist.push_user(text);
                }
                s.archivist.finalize(&gw).map(|brief| ArchivistReply::Brief { brief })
            } else {
                s.archivist.converse(text, &gw).map(|text| ArchivistReply::Reply { text })
            };
            s.calls.extend(ledger.records());
            let reply = result?;
            if s.archivist.brief.is_some() && s.status == SessionStatus::Open {
                s.status = SessionStatus::Briefed;
            }
            Ok(MessageReply { session_id: s.session_id.clone(), status: s.status, reply })
        })
    }

    /// Mark the session as running. A session without a brief is
    /// finalized first.
    pub fn start_interrogation(&self, session_id: &str, d_max: Option<usize>) -> Result<SessionRecord, EngineError> {
        let d_max = d_max.unwrap_or(self.config.d_max);
        if d_max == 0 {
            return Err(EngineError::BadRequest("d_max must be at least 1".into()));
        }
        {
            let mut running = self.running.lock().expect("run set poisoned");
            if running.contains(session_id) {
                return Err(EngineError::Conflict(format!("session {session_id} is already being interrogated")));
            }
            running.insert(session_id.to_string());
        }
        let started = self.update_session(session_id, |s| {
            if s.archivist.brief.is_none() {
                let ledger = Arc::new(CostLedger::default());
                let r = s.archivist.finalize(&self.clients.archivist.with_ledger(ledger.clone()));
                s.calls.extend(ledger.records());
                r?;
            }
            let brief = s.archivist.brief.clone().expect("finalized above");
            s.status = SessionStatus::Running;
            s.state = Some(InterrogationState::new(brief, d_max));
            s.error = None;
            Ok(s.clone())
        });
        if started.is_err() {
            self.running.lock().expect("run set poisoned").remove(session_id);
        }
        started
    }

    /// Run the loop of a session marked by `start_interrogation`,
    /// persisting the state after every turn.
    pub fn run_started(&self, session_id: &str) -> Result<SessionRecord, EngineError> {
        let _guard = RunGuard { running: &self.running, id: session_id.to_string() };
        let session = self.session(session_id)?;
        let state = session
            .state
            .clone()
            .filter(|_| session.status == SessionStatus::Running)
            .ok_or_else(|| EngineError::Conflict(format!("session {session_id} was not started")))?;
        let index = self.index(&session.document_id)?;
        let ledger = Arc::new(CostLedger::default());
        let clients = self.clients.with_ledger(ledger.clone());
        let options = InterrogatorOptions {
            research: self.config.research,
            retrieval: self.config.retrieval.clone(),
            ..Default::default()
        };
        let base_calls = session.calls.clone();
        let mut observer = |st: &InterrogationState| {
            let calls: Vec<CallRecord> = base_calls.iter().cloned().chain(ledger.records()).collect();
            let snapshot = st.clone();
            let written = self.update_session(session_id, |s| {
                s.state = Some(snapshot);
                s.calls = calls;
                Ok(())
            });
            if let Err(e) = written {
                tracing::warn!(session = session_id, error = %e, "could not persist progress");
            }
        };
        let outcome = run_interrogation(
            state.brief.clone(),
            ResearchResources::document(&index),
            state.d_max,
            &clients,
            &options,
            &mut observer,
        );
        let calls: Vec<CallRecord> = base_calls.into_iter().chain(ledger.records()).collect();
        match outcome {
            Ok((_, state)) => self.update_session(session_id, |s| {
                s.status = SessionStatus::Completed;
                s.state = Some(state);
                s.calls = calls;
                Ok(s.clone())
            }),
            Err(failure) => {
                let error = EngineError::Agent(failure.error);
                let body = error.body();
                self.update_session(session_id, |s| {
                    s.status = SessionStatus::Failed;
                    s.state = Some(*failure.state);
                    s.error = Some(body);
                    s.calls = calls;
                    Ok(())
                })?;
                Err(error)
            }
        }
    }

    pub fn interrogate(&self, session_id: &str, d_max: Option<usize>) -> Result<SessionRecord, EngineError> {
        self.start_interrogation(session_id, d_max)?;
        self.run_started(session_id)
    }

    pub fn progress(&self, session_id: &str) -> Result<ProgressView, EngineError> {
        let s = self.session(session_id)?;
        let st = s.state.as_ref();
        Ok(ProgressView {
            session_id: s.session_id.clone(),
            status: s.status,
            d_max: st.map(|x| x.d_max),
            turns_completed: st.map_or(0, |x| x.turns.len()),
            turns: st
                .map(|x| x.turns.iter().map(|t| TurnView { question: t.question.clone(), answer: t.research.answer_text() }).collect())
                .unwrap_or_default(),
            title: st.and_then(|x| x.report.as_ref()).map(|r| r.title.clone()),
            stopped_by: st.map(|x| x.stopped_by).filter(|_| s.status == SessionStatus::Completed),
            calls: s.calls.len(),
            error: s.error.clone(),
        })
    }

    /// The latest report or draft; not found until a turn has completed.
    pub fn report(&self, session_id: &str) -> Result<ReportView, EngineError> {
        let s = self.session(session_id)?;
        let Some((state, report)) = s.state.as_ref().and_then(|st| st.report.clone().map(|r| (st, r))) else {
            return Err(EngineError::NotFound { what: "report for session", id: session_id.into() });
        };
        Ok(ReportView {
            session_id: s.session_id.clone(),
            status: s.status,
            is_final: s.status == SessionStatus::Completed,
            stopped_by: state.stopped_by,
            markdown: report.render(),
            report,
        })
    }

    /// One-shot: the question becomes the only user message, the session
    /// is finalized and interrogated to completion.
    pub fn ask(&self, document_id: &str, question: &str, d_max: Option<usize>) -> Result<AskOutput, EngineError> {
        if question.trim().is_empty() {
            return Err(EngineError::BadRequest("question is empty".into()));
        }
        let session = self.create_session(document_id)?;
        self.post_message(&session.session_id, question, true)?;
        let done = self.interrogate(&session.session_id, d_max)?;
        let view = self.report(&done.session_id)?;
        Ok(AskOutput {
            session_id: done.session_id.clone(),
            document_id: done.document_id.clone(),
            stopped_by: view.stopped_by,
            turns: done.state.as_ref().map_or(0, |s| s.turns.len()),
            calls: done.calls.len(),
            markdown: view.markdown,
            report: view.report,
        })
    }

    /// Score retrieval on a benchmark corpus and write metrics files.
    pub fn eval(&self, request: &EvalRequest) -> Result<MetricsReport, EngineError> {
        let grid = request.k.clone().unwrap_or_else(|| DEFAULT_K_GRID.to_vec());
        let max_k = grid.iter().copied().max().unwrap_or(1);
        let report = match request.retriever.as_deref().unwrap_or("pipeline") {
            "pipeline" => {
                let retriever = PipelineRetriever {
                    clients: self.clients.clone(),
                    config: RetrievalConfig { answer_top_k: max_k.max(1), ..self.config.retrieval.clone() },
                };
                run_benchmark(&request.corpus, &retriever, &self.config.ingest, &self.clients, &grid)?
            }
            "oracle" => run_benchmark(&request.corpus, &OracleRetriever, &self.config.ingest, &self.clients, &grid)?,
            other => return Err(EngineError::BadRequest(format!("unknown retriever {other:?}"))),
        };
        report.write(request.out.as_ref().unwrap_or(&request.corpus))?;
        Ok(report)
    }
}
