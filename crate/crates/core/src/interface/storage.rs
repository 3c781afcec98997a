//! Plain-file persistence under the storage root:
//!
//! ```text
//! documents/<id>/document.json
//! documents/<id>/source.txt
//! documents/<id>/index/
//! sessions/<id>.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::EngineError;
use crate::index::ChunkIndex;

#[derive(Debug, Clone)]
pub struct Storage {
    root: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// Write `bytes` to `path` through a sibling temp file and a rename, so
/// readers never see a half-written file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

impl Storage {
    /// Open (creating if needed) a storage root.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, EngineError> {
        let root = root.into();
        for sub in ["documents", "sessions"] {
            fs::create_dir_all(root.join(sub))
                .map_err(|e| EngineError::Config(format!("storage root {} is not writable: {e}", root.display())))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn checked(what: &'static str, id: &str) -> Result<(), EngineError> {
        if valid_id(id) {
            Ok(())
        } else {
            Err(EngineError::NotFound { what, id: id.into() })
        }
    }

    pub fn document_dir(&self, id: &str) -> Result<PathBuf, EngineError> {
        Self::checked("document", id)?;
        Ok(self.root.join("documents").join(id))
    }

    pub fn has_document(&self, id: &str) -> bool {
        self.document_dir(id).map(|d| d.join("document.json").is_file()).unwrap_or(false)
    }

    /// Store source, index and metadata. `document.json` goes last and
    /// marks the document as complete.
    pub fn put_document<M: Serialize>(&self, id: &str, meta: &M, source: &str, index: &ChunkIndex) -> Result<(), EngineError> {
        let dir = self.document_dir(id)?;
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("source.txt"), source)?;
        index.save(&dir.join("index"))?;
        write_atomic(&dir.join("document.json"), &serde_json::to_vec_pretty(meta)?)?;
        Ok(())
    }

    pub fn document_meta<M: DeserializeOwned>(&self, id: &str) -> Result<M, EngineError> {
        let path = self.document_dir(id)?.join("document.json");
        read_json(&path).ok_or_else(|| EngineError::NotFound { what: "document", id: id.into() })?
    }

    pub fn load_index(&self, id: &str) -> Result<ChunkIndex, EngineError> {
        if !self.has_document(id) {
            return Err(EngineError::NotFound { what: "document", id: id.into() });
        }
        Ok(ChunkIndex::load(&self.document_dir(id)?.join("index"))?)
    }

    /// The chunk set exactly as persisted, one JSON object per line.
    pub fn chunks_jsonl(&self, id: &str) -> Result<String, EngineError> {
        if !self.has_document(id) {
            return Err(EngineError::NotFound { what: "document", id: id.into() });
        }
        Ok(fs::read_to_string(self.document_dir(id)?.join("index").join("chunks.jsonl"))?)
    }

    fn session_path(&self, id: &str) -> Result<PathBuf, EngineError> {
        Self::checked("session", id)?;
        Ok(self.root.join("sessions").join(format!("{id}.json")))
    }

    pub fn put_session<S: Serialize>(&self, id: &str, session: &S) -> Result<(), EngineError> {
        write_atomic(&self.session_path(id)?, &serde_json::to_vec_pretty(session)?)?;
        Ok(())
    }

    pub fn session<S: DeserializeOwned>(&self, id: &str) -> Result<S, EngineError> {
        let path = self.session_path(id)?;
        read_json(&path).ok_or_else(|| EngineError::NotFound { what: "session", id: id.into() })?
    }
}

/// `None` when the file does not exist.
fn read_json<T: DeserializeOwned>(path: &Path) -> Option<Result<T, EngineError>> {
    match fs::read(path) {
        Ok(bytes) => Some(serde_json::from_slice(&bytes).map_err(|e| EngineError::Storage(format!("{}: {e}", path.display())))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => Some(Err(e.into())),
    }
}
