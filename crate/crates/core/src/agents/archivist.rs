//! Intake dialogue that turns a conversation into a research brief.

use serde::{Deserialize, Serialize};

use super::{prompts, AgentError};
use crate::llm::{CallRole, Gateway, Message, MessageRole};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserBrief {
    pub query: String,
    #[serde(default)]
    pub context: String,
    #[serde(default)]
    pub instructions: String,
}

impl UserBrief {
    pub fn new(query: impl Into<String>) -> Result<Self, AgentError> {
        let query = query.into();
        if query.trim().is_empty() {
            return Err(AgentError::EmptyQuery);
        }
        Ok(Self { query, context: String::new(), instructions: String::new() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ArchivistReply {
    Reply { text: String },
    Brief { brief: UserBrief },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchivistSession {
    pub transcript: Vec<Message>,
    pub brief: Option<UserBrief>,
    /// Assistant turns taken so far.
    pub n_turns: usize,
}

impl ArchivistSession {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record a user message without asking the model anything.
    pub fn push_user(&mut self, text: impl Into<String>) {
        self.transcript.push(Message::user(text));
    }

    /// One dialogue turn: the user's message and the assistant's reply.
    pub fn converse(&mut self, user_message: &str, chat: &Gateway) -> Result<String, AgentError> {
        if self.brief.is_some() {
            return Err(AgentError::InvalidArgument("session is already finalized".into()));
        }
        self.push_user(user_message);
        let mut messages = vec![Message::system(prompts::ARCHIVIST_SYSTEM)];
        messages.extend(self.transcript.iter().cloned());
        let reply = match chat.chat(CallRole::ArchivistTurn, messages) {
            Ok(r) => r,
            Err(e) => {
                self.transcript.pop();
                return Err(e.into());
            }
        };
        self.transcript.push(Message::assistant(reply.clone()));
        self.n_turns += 1;
        Ok(reply)
    }

    /// Distill the dialogue into a brief with one model call. When the
    /// reply is not usable JSON the first user message becomes the query
    /// and the remaining user messages the context.
    pub fn finalize(&mut self, chat: &Gateway) -> Result<UserBrief, AgentError> {
        if let Some(b) = &self.brief {
            return Ok(b.clone());
        }
        let users: Vec<&str> = self
            .transcript
            .iter()
            .filter(|m| m.role == MessageRole::User && !m.content.trim().is_empty())
            .map(|m| m.content.as_str())
            .collect();
        if users.is_empty() {
            return Err(AgentError::EmptySession);
        }
        let transcript: String = self
            .transcript
            .iter()
            .map(|m| match m.role {
                MessageRole::User => format!("<user>{}</user>\n", m.content),
                _ => format!("<assistant>{}</assistant>\n", m.content),
            })
            .collect();
        let reply = chat.chat(
            CallRole::ArchivistFinalize,
            vec![Message::system(prompts::ARCHIVIST_FINALIZE_SYSTEM), Message::user(prompts::archivist_finalize_user(&transcript))],
        )?;
        let parsed = json_object(&reply).and_then(|j| serde_json::from_str::<UserBrief>(j).ok()).filter(|b| !b.query.trim().is_empty());
        let brief = parsed.unwrap_or_else(|| UserBrief {
            query: users[0].trim().to_string(),
            context: users[1..].join("\n"),
            instructions: String::new(),
        });
        self.brief = Some(brief.clone());
        Ok(brief)
    }
}

fn json_object(text: &str) -> Option<&str> {
    let s = text.find('{')?;
    let e = text.rfind('}')?;
    (e > s).then(|| &text[s..=e])
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::llm::{CostLedger, MockPipelineChat, ProviderProfile, ScriptedChat};

    fn gw(chat: Arc<dyn crate::llm::ChatClient>) -> (Gateway, Arc<CostLedger>) {
        let l = Arc::new(CostLedger::new());
        (Gateway::new(chat, ProviderProfile::offline("m"), l.clone()), l)
    }

    #[test]
    fn two_turns_then_finalize() {
        let (g, ledger) = gw(Arc::new(MockPipelineChat::default()));
        let mut s = ArchivistSession::new();
        s.converse("Can the recipient share information with employees?", &g).unwrap();
        s.converse("It is a mutual NDA governed by New York law.", &g).unwrap();
        let b = s.finalize(&g).unwrap();
        assert_eq!(ledger.len(), 3);
        assert_eq!(ledger.count(CallRole::ArchivistTurn), 2);
        assert_eq!(b.query, "Can the recipient share information with employees?");
        assert!(b.context.contains("New York"));
    }

    #[test]
    fn immediate_finalize_uses_message() {
        let (g, ledger) = gw(Arc::new(MockPipelineChat::default()));
        let mut s = ArchivistSession::new();
        s.push_user("Is there a non-compete clause?");
        let b = s.finalize(&g).unwrap();
        assert_eq!(ledger.len(), 1);
        assert_eq!(b.query, "Is there a non-compete clause?");
    }

    #[test]
    fn empty_session_cannot_finalize() {
        let (g, ledger) = gw(Arc::new(MockPipelineChat::default()));
        assert!(matches!(ArchivistSession::new().finalize(&g), Err(AgentError::EmptySession)));
        assert!(ledger.is_empty());
    }

    #[test]
    fn unparseable_brief_falls_back_to_messages() {
        let (g, _) = gw(Arc::new(ScriptedChat::new(["sure thing"])));
        let mut s = ArchivistSession::new();
        s.push_user("What is the notice period?");
        assert_eq!(s.finalize(&g).unwrap().query, "What is the notice period?");
    }
}
