//! Human review of generated candidates: leased claims, verdicts, expert
//! resolution of flagged items, an append-only decision log, and assembly of
//! the final graph.

mod api;
mod finalize;
mod log;
mod service;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_model::{EmotionCategory, NodeId, NodeKind, NodeStatus, Polarity, Topic};
use crate::construction_pipeline::PipelineError;
use crate::graph_store::StoreError;

pub use api::{router, serve};
pub use finalize::finalize;
pub use log::{apply_entry, read_log, replay, DecisionLog, LogEntry};
pub use service::{CurationConfig, CurationService};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("unknown item {0}")]
    UnknownItem(NodeId),
    #[error("item {0} is not claimed by this annotator or the claim has expired")]
    StaleClaim(NodeId),
    #[error("item {0} has already been decided")]
    AlreadyDecided(NodeId),
    #[error("item {0} is flagged and awaits an expert")]
    AwaitingExpert(NodeId),
    #[error("item {0} is not flagged")]
    NotFlagged(NodeId),
    #[error("annotator `{0}` lacks the expert role")]
    RoleDenied(String),
    #[error("unknown annotator")]
    UnknownAnnotator,
    #[error("{label} is not a legal emotion for a {polarity} item")]
    LabelPolarityMismatch { label: String, polarity: Polarity },
    #[error("invalid decision: {0}")]
    Validation(String),
    #[error("{0} item(s) are still pending or flagged")]
    PendingItemsRemain(usize),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{path}: {message}")]
    Log { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotator {
    pub id: String,
    pub token: String,
    #[serde(default)]
    pub expert: bool,
}

/// Static annotator list loaded from a JSON array of `{"id","token","expert"}`.
#[derive(Debug, Clone, Default)]
pub struct Roster {
    annotators: Vec<Annotator>,
}

impl Roster {
    pub fn new(annotators: Vec<Annotator>) -> Result<Roster, CurationError> {
        let mut ids = std::collections::HashSet::new();
        let mut tokens = std::collections::HashSet::new();
        for a in &annotators {
            if a.id.is_empty() || a.token.is_empty() {
                return Err(CurationError::Validation("annotator id and token must be non-empty".into()));
            }
            if !ids.insert(&a.id) || !tokens.insert(&a.token) {
                return Err(CurationError::Validation(format!("duplicate roster entry for `{}`", a.id)));
            }
        }
        Ok(Roster { annotators })
    }

    pub fn load(path: &Path) -> Result<Roster, CurationError> {
        let err = |message: String| CurationError::Log {
            path: path.display().to_string(),
            message,
        };
        let body = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let annotators: Vec<Annotator> = serde_json::from_str(&body).map_err(|e| err(e.to_string()))?;
        Roster::new(annotators)
    }

    pub fn by_token(&self, token: &str) -> Option<&Annotator> {
        self.annotators.iter().find(|a| a.token == token)
    }

    pub fn by_id(&self, id: &str) -> Option<&Annotator> {
        self.annotators.iter().find(|a| a.id == id)
    }
}

/// Milliseconds since the Unix epoch; injectable for lease tests.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn advance_ms(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Revise { text: String },
    Reject,
    Flag { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    pub item: NodeId,
    pub annotator: String,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertResolution {
    pub item: NodeId,
    pub expert: String,
    #[serde(flatten)]
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relabel: Option<EmotionCategory>,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub annotator: String,
    pub expires_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub id: NodeId,
    pub kind: NodeKind,
    pub text: String,
    pub polarity: Option<Polarity>,
    pub topic: Option<Topic>,
    pub status: NodeStatus,
    pub situation_text: Option<String>,
    pub thought_text: Option<String>,
    /// Legal labels for emotion items.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<EmotionCategory>,
    pub claim: Option<Claim>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueStatus {
    #[default]
    Pending,
    Flagged,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueFilter {
    pub kind: Option<NodeKind>,
    pub topic: Option<Topic>,
    pub polarity: Option<Polarity>,
    #[serde(default)]
    pub status: QueueStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KindCounts {
    pub raw: usize,
    pub pending: usize,
    pub accepted: usize,
    pub revised: usize,
    pub rejected: usize,
    pub flagged: usize,
    /// Removed by the automatic near-duplicate filter.
    pub filtered: usize,
    /// Still raw, but under a rejected ancestor, so never reviewed.
    pub moot: usize,
    /// (accepted + revised) / raw, rounded to 4 decimals.
    pub retention: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReviewStats {
    pub kinds: BTreeMap<NodeKind, KindCounts>,
    pub annotators: BTreeMap<String, BTreeMap<String, usize>>,
}

#[cfg(test)]
mod tests;
