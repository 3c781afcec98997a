//! Per-call accounting of model inference.
//!
//! The closed-form call count for one full run is
//!
//! ```text
//! N = (N_turns + 1) + I[llm_parsing] + D_int * (1 + (1 + I[nl_response]) + 1)
//! ```
//!
//! where the Archivist contributes one call per dialogue turn plus one
//! finalization call, and each interrogation round contributes a question,
//! the Researcher's query extraction (plus an optional natural-language
//! answer) and one report refinement.

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CallRole {
    ArchivistTurn,
    ArchivistFinalize,
    LlmParse,
    InterrogatorQuestion,
    ResearcherQueryExtract,
    ResearcherNlResponse,
    ReportRefine,
    Summarize,
    Filter,
    #[default]
    Unspecified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub role: CallRole,
    pub wall_time_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u32>,
    /// Regeneration and schema-repair calls, which sit outside the closed form.
    #[serde(default)]
    pub repair: bool,
}

/// Append-only call log. Appends are serialized through a mutex so
/// concurrent pipeline stages can share one ledger.
#[derive(Debug, Default)]
pub struct CostLedger {
    records: Mutex<Vec<CallRecord>>,
}

/// The run parameters recovered from a ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ObservedCounts {
    pub n_turns: u64,
    pub d_int: u64,
    pub llm_parsing: bool,
    pub nl_response: bool,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&self, record: CallRecord) {
        self.records.lock().expect("ledger poisoned").push(record);
    }

    pub fn record(&self, role: CallRole, wall_time: Duration) {
        self.append(CallRecord {
            role,
            wall_time_ms: wall_time.as_secs_f64() * 1000.0,
            prompt_tokens: None,
            completion_tokens: None,
            repair: false,
        });
    }

    pub fn len(&self) -> usize {
        self.records.lock().expect("ledger poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.records.lock().expect("ledger poisoned").clone()
    }

    pub fn count(&self, role: CallRole) -> u64 {
        self.records
            .lock()
            .expect("ledger poisoned")
            .iter()
            .filter(|r| r.role == role)
            .count() as u64
    }

    fn count_primary(&self, role: CallRole) -> u64 {
        self.records
            .lock()
            .expect("ledger poisoned")
            .iter()
            .filter(|r| r.role == role && !r.repair)
            .count() as u64
    }

    pub fn total_wall_time(&self) -> Duration {
        let ms: f64 = self.records.lock().expect("ledger poisoned").iter().map(|r| r.wall_time_ms).sum();
        Duration::from_secs_f64(ms / 1000.0)
    }

    pub fn observed(&self) -> ObservedCounts {
        ObservedCounts {
            n_turns: self.count(CallRole::ArchivistTurn),
            d_int: self.count_primary(CallRole::ReportRefine),
            llm_parsing: self.count(CallRole::LlmParse) > 0,
            nl_response: self.count(CallRole::ResearcherNlResponse) > 0,
        }
    }

    /// Records that the closed-form cost model accounts for.
    pub fn formula_terms(&self) -> u64 {
        use CallRole::*;
        self.records
            .lock()
            .expect("ledger poisoned")
            .iter()
            .filter(|r| !r.repair)
            .filter(|r| {
                matches!(
                    r.role,
                    ArchivistTurn
                        | ArchivistFinalize
                        | LlmParse
                        | InterrogatorQuestion
                        | ResearcherQueryExtract
                        | ResearcherNlResponse
                        | ReportRefine
                )
            })
            .count() as u64
    }
}

/// Closed-form number of model calls for one run.
pub fn expected_call_count(n_turns: u64, d_int: u64, llm_parsing: bool, nl_response: bool) -> u64 {
    let archivist = n_turns + 1 + u64::from(llm_parsing);
    let researcher = 1 + u64::from(nl_response);
    archivist + d_int * (1 + researcher + 1)
}
