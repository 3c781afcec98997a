//! Engine configuration: one TOML file plus `COVENANT_*` environment overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::agents::{ResearchOptions, DEFAULT_D_MAX};
use crate::llm::{
    ChatClient, ClientSet, CostLedger, Embedder, Gateway, HashEmbedder, HttpChatClient, HttpEmbedder, HttpReranker,
    LexicalReranker, MockPipelineChat, ProviderProfile, ReplayChat, Reranker,
};
use crate::pipeline::IngestOptions;
use crate::retrieval::RetrievalConfig;

pub const ENV_PREFIX: &str = "COVENANT_";
pub const TOKEN_ENV: &str = "COVENANT_API_TOKEN";
pub const DEFAULT_EMBED_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderProfile {
    #[serde(flatten)]
    pub profile: ProviderProfile,
    pub dim: usize,
}

impl Default for EmbedderProfile {
    fn default() -> Self {
        Self { profile: ProviderProfile::offline("hash-embedder"), dim: DEFAULT_EMBED_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Providers {
    pub archivist: ProviderProfile,
    pub interrogator: ProviderProfile,
    pub researcher: ProviderProfile,
    pub filter: ProviderProfile,
    pub embedder: EmbedderProfile,
    pub reranker: ProviderProfile,
}

impl Default for Providers {
    fn default() -> Self {
        Self {
            archivist: ProviderProfile::offline("mock-chat"),
            interrogator: ProviderProfile::offline("mock-chat"),
            researcher: ProviderProfile::offline("mock-chat"),
            filter: ProviderProfile::offline("mock-chat"),
            embedder: EmbedderProfile::default(),
            reranker: ProviderProfile::offline("lexical-reranker"),
        }
    }
}

impl Providers {
    fn stage_mut(&mut self, stage: &str) -> Option<&mut ProviderProfile> {
        Some(match stage {
            "ARCHIVIST" => &mut self.archivist,
            "INTERROGATOR" => &mut self.interrogator,
            "RESEARCHER" => &mut self.researcher,
            "FILTER" => &mut self.filter,
            "EMBEDDER" => &mut self.embedder.profile,
            "RERANKER" => &mut self.reranker,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub d_max: usize,
    pub storage_root: PathBuf,
    pub bind: String,
    pub providers: Providers,
    pub retrieval: RetrievalConfig,
    pub ingest: IngestOptions,
    pub research: ResearchOptions,
    /// Bearer token required on every endpoint but `/health`. Read from
    /// `COVENANT_API_TOKEN` only.
    #[serde(skip)]
    pub api_token: Option<String>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            d_max: DEFAULT_D_MAX,
            storage_root: PathBuf::from("covenant-data"),
            bind: "127.0.0.1:8080".into(),
            providers: Providers::default(),
            retrieval: RetrievalConfig::default(),
            ingest: IngestOptions::default(),
            research: ResearchOptions::default(),
            api_token: None,
        }
    }
}

fn config_err(msg: impl Into<String>) -> EngineError {
    EngineError::Config(msg.into())
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, EngineError> {
        toml::from_str(text).map_err(|e| config_err(format!("config file: {e}")))
    }

    /// Load `path` (or `$COVENANT_CONFIG`, or defaults), apply the process
    /// environment and validate.
    pub fn load(path: Option<&Path>) -> Result<Self, EngineError> {
        let env = |k: &str| std::env::var(k).ok();
        let path = path.map(Path::to_path_buf).or_else(|| env("COVENANT_CONFIG").map(PathBuf::from));
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(env)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides: `COVENANT_D_MAX`, `COVENANT_STORAGE_ROOT`, `COVENANT_BIND`,
    /// `COVENANT_API_TOKEN` and `COVENANT_<STAGE>_BASE_URL` / `_MODEL` for
    /// each provider stage.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), EngineError> {
        let var = |name: &str| lookup(&format!("{ENV_PREFIX}{name}")).filter(|v| !v.is_empty());
        if let Some(v) = var("D_MAX") {
            self.d_max = v.trim().parse().map_err(|_| config_err(format!("COVENANT_D_MAX: not an integer: {v:?}")))?;
        }
        if let Some(v) = var("STORAGE_ROOT") {
            self.storage_root = PathBuf::from(v);
        }
        if let Some(v) = var("BIND") {
            self.bind = v;
        }
        if let Some(v) = var("API_TOKEN") {
            self.api_token = Some(v);
        }
        for stage in ["ARCHIVIST", "INTERROGATOR", "RESEARCHER", "FILTER", "EMBEDDER", "RERANKER"] {
            let url = var(&format!("{stage}_BASE_URL"));
            let model = var(&format!("{stage}_MODEL"));
            let p = self.providers.stage_mut(stage).expect("known stage");
            if let Some(u) = url {
                p.base_url = u;
            }
            if let Some(m) = model {
                p.model_id = m;
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.d_max == 0 {
            return Err(config_err("d_max must be at least 1"));
        }
        self.bind_addr()?;
        self.retrieval.validate().map_err(|e| config_err(e.to_string()))?;
        let p = &self.providers;
        for (name, prof) in [
            ("archivist", &p.archivist),
            ("interrogator", &p.interrogator),
            ("researcher", &p.researcher),
            ("filter", &p.filter),
            ("embedder", &p.embedder.profile),
            ("reranker", &p.reranker),
        ] {
            prof.validate().map_err(|e| config_err(format!("providers.{name}: {e}")))?;
        }
        if p.embedder.dim == 0 {
            return Err(config_err("providers.embedder.dim must be positive"));
        }
        Ok(())
    }

    pub fn bind_addr(&self) -> Result<SocketAddr, EngineError> {
        self.bind.parse().map_err(|_| config_err(format!("bind: not a socket address: {:?}", self.bind)))
    }

    /// Instantiate every provider. HTTP clients are blocking, so call this
    /// outside any async runtime.
    pub fn build_clients(&self) -> Result<ClientSet, EngineError> {
        let ledger = Arc::new(CostLedger::default());
        let p = &self.providers;
        let gw = |prof: &ProviderProfile| -> Result<Gateway, EngineError> {
            Ok(Gateway::new(chat_client(prof)?, prof.clone(), ledger.clone()))
        };
        Ok(ClientSet {
            archivist: gw(&p.archivist)?,
            interrogator: gw(&p.interrogator)?,
            researcher: gw(&p.researcher)?,
            filter: gw(&p.filter)?,
            embedder: embedder(&p.embedder)?,
            reranker: reranker(&p.reranker)?,
            ledger,
        })
    }
}

enum Scheme<'a> {
    Mock(&'a str),
    Replay(&'a str),
    Http,
}

fn scheme(url: &str) -> Scheme<'_> {
    if let Some(rest) = url.strip_prefix("mock://") {
        Scheme::Mock(rest.trim_end_matches('/'))
    } else if let Some(rest) = url.strip_prefix("replay://") {
        Scheme::Replay(rest)
    } else {
        Scheme::Http
    }
}

fn chat_client(prof: &ProviderProfile) -> Result<Arc<dyn ChatClient>, EngineError> {
    Ok(match scheme(&prof.base_url) {
        Scheme::Mock("never-stopping") => Arc::new(MockPipelineChat::never_stopping()),
        Scheme::Mock(_) => Arc::new(MockPipelineChat::default()),
        Scheme::Replay(path) => {
            Arc::new(ReplayChat::load(Path::new(path)).map_err(|e| config_err(format!("cassette {path}: {e}")))?)
        }
        Scheme::Http => Arc::new(HttpChatClient::new(prof.clone()).map_err(|e| config_err(e.to_string()))?),
    })
}

fn embedder(prof: &EmbedderProfile) -> Result<Arc<dyn Embedder>, EngineError> {
    Ok(match scheme(&prof.profile.base_url) {
        Scheme::Mock(_) => Arc::new(HashEmbedder::new(prof.dim, 7)),
        Scheme::Replay(_) => return Err(config_err("providers.embedder: replay is only available for chat stages")),
        Scheme::Http => Arc::new(HttpEmbedder::new(prof.profile.clone(), prof.dim).map_err(|e| config_err(e.to_string()))?),
    })
}

fn reranker(prof: &ProviderProfile) -> Result<Arc<dyn Reranker>, EngineError> {
    Ok(match scheme(&prof.base_url) {
        Scheme::Mock(_) => Arc::new(LexicalReranker),
        Scheme::Replay(_) => return Err(config_err("providers.reranker: replay is only available for chat stages")),
        Scheme::Http => Arc::new(HttpReranker::new(prof.clone()).map_err(|e| config_err(e.to_string()))?),
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    #[test]
    fn defaults_are_offline_and_valid() {
        let c = EngineConfig::default();
        c.validate().unwrap();
        assert_eq!(c.d_max, 5);
        assert!(c.providers.interrogator.base_url.starts_with("mock://"));
        c.build_clients().unwrap();
    }

    #[test]
    fn toml_and_env_overrides() {
        let mut c = EngineConfig::from_toml(
            "d_max = 3\nbind = \"0.0.0.0:9000\"\n[providers.embedder]\ndim = 64\n[retrieval]\nanswer_top_k = 4\n[ingest]\nllm_parsing = true\n",
        )
        .unwrap();
        assert_eq!((c.d_max, c.providers.embedder.dim, c.retrieval.answer_top_k), (3, 64, 4));
        assert!(c.ingest.llm_parsing);
        let env: HashMap<&str, &str> =
            [("COVENANT_D_MAX", "2"), ("COVENANT_RESEARCHER_MODEL", "big-model"), ("COVENANT_API_TOKEN", "t0k")].into();
        c.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(c.d_max, 2);
        assert_eq!(c.providers.researcher.model_id, "big-model");
        assert_eq!(c.api_token.as_deref(), Some("t0k"));
        c.validate().unwrap();
    }

    #[test]
    fn token_is_never_read_from_file() {
        let c = EngineConfig::from_toml("api_token = \"leak\"\n").unwrap();
        assert!(c.api_token.is_none());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut c = EngineConfig { d_max: 0, ..Default::default() };
        assert!(matches!(c.validate(), Err(EngineError::Config(_))));
        c.d_max = 1;
        c.bind = "nowhere".into();
        assert!(matches!(c.validate(), Err(EngineError::Config(_))));
        assert!(matches!(c.apply_env(|k| (k == "COVENANT_D_MAX").then(|| "x".to_string())), Err(EngineError::Config(_))));
        assert!(EngineConfig::from_toml("d_max = \"five\"").is_err());
    }

    #[test]
    fn missing_cassette_is_config_error() {
        let mut c = EngineConfig::default();
        c.providers.interrogator.base_url = "replay:///no/such/cassette.jsonl".into();
        assert!(matches!(c.build_clients(), Err(EngineError::Config(_))));
    }
}
