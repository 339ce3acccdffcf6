//! In-memory cognitive graph with dedup, per-situation chain lookup,
//! statistics, TF-IDF situation linking and JSONL persistence.

mod io;
mod similarity;
mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_model::{
    validate_chain, ChainId, CognitiveChain, Node, NodeId, NodeKind, NodeStatus, Polarity,
    ValidationReport,
};
use crate::text::dedup_key;

pub use io::{read_jsonl, write_jsonl, CHAINS_FILE, MANIFEST_FILE, NODES_FILE};
pub use similarity::{SimilarityHit, TfIdfIndex};
pub use synthetic::synthetic_graph;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invariant violation: {0}")]
    InvariantViolation(ValidationReport),
    #[error("unknown situation {0}")]
    UnknownSituation(NodeId),
    #[error("graph contains no situations")]
    EmptyGraph,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{file}:{line}: {message}")]
    Format {
        file: String,
        line: usize,
        message: String,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parent context used for dedup. Clues and thoughts dedup within their
/// situation; actions and emotions within their (situation, thought).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    Global,
    Situation(NodeId),
    Thought(NodeId, NodeId),
}

impl Scope {
    fn fits(&self, kind: NodeKind) -> bool {
        matches!(
            (kind, self),
            (NodeKind::Situation, Scope::Global)
                | (NodeKind::Clue | NodeKind::Thought, Scope::Situation(_))
                | (NodeKind::Action | NodeKind::Emotion, Scope::Thought(_, _))
        )
    }

    fn parents(&self) -> Vec<&NodeId> {
        match self {
            Scope::Global => vec![],
            Scope::Situation(s) => vec![s],
            Scope::Thought(s, t) => vec![s, t],
        }
    }
}

/// A node about to be stored; the graph assigns its id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewNode {
    pub kind: NodeKind,
    pub text: String,
    pub polarity: Option<Polarity>,
    pub topic: Option<crate::chain_model::Topic>,
    pub status: NodeStatus,
    pub source: crate::chain_model::NodeSource,
}

impl From<Node> for NewNode {
    fn from(node: Node) -> Self {
        NewNode {
            kind: node.kind,
            text: node.text,
            polarity: node.polarity,
            topic: node.topic,
            status: node.status,
            source: node.source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub final_counts: BTreeMap<NodeKind, usize>,
    pub raw_counts: BTreeMap<NodeKind, usize>,
    /// final / raw per kind, rounded to 4 decimals; absent when raw is zero.
    pub retention: BTreeMap<NodeKind, Option<f64>>,
    pub chains_total: usize,
    pub chains_positive: usize,
    pub chains_negative: usize,
}

impl GraphStats {
    /// Plain-text table with retention rendered as a two-decimal percentage.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>8} {:>8} {:>10}\n",
            "Kind", "Raw", "Final", "Retention"
        );
        for kind in NodeKind::ALL {
            let retention = match self.retention.get(&kind).copied().flatten() {
                Some(r) => format_percent(r),
                None => "-".to_string(),
            };
            out.push_str(&format!(
                "{:<10} {:>8} {:>8} {:>10}\n",
                kind.name(),
                self.raw_counts.get(&kind).copied().unwrap_or(0),
                self.final_counts.get(&kind).copied().unwrap_or(0),
                retention
            ));
        }
        out.push_str(&format!(
            "chains: {} (positive {}, negative {})\n",
            self.chains_total, self.chains_positive, self.chains_negative
        ));
        out
    }
}

/// `final / raw`, rounded to four decimal places.
pub fn retention_rate(final_count: usize, raw_count: usize) -> Result<f64, StoreError> {
    if raw_count == 0 {
        return Err(StoreError::Domain("retention rate needs raw > 0".into()));
    }
    if final_count > raw_count {
        return Err(StoreError::Domain(format!(
            "final count {final_count} exceeds raw count {raw_count}"
        )));
    }
    let ratio = final_count as f64 / raw_count as f64;
    Ok((ratio * 10_000.0).round() / 10_000.0)
}

/// Renders a ratio as a percentage with two decimals, e.g. `67.97%`.
pub fn format_percent(ratio: f64) -> String {
    format!("{:.2}%", ratio * 100.0)
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: BTreeMap<NodeId, Node>,
    chains: BTreeMap<ChainId, CognitiveChain>,
    by_kind: BTreeMap<NodeKind, BTreeSet<NodeId>>,
    by_situation: BTreeMap<NodeId, BTreeSet<ChainId>>,
    dedup: HashMap<(NodeKind, Scope, String), NodeId>,
    raw_counts: BTreeMap<NodeKind, usize>,
    next_node: BTreeMap<NodeKind, u64>,
    next_chain: u64,
    similarity: TfIdfIndex,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.chains == other.chains && self.raw_counts == other.raw_counts
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn chain(&self, id: &ChainId) -> Option<&CognitiveChain> {
        self.chains.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn chains(&self) -> impl Iterator<Item = &CognitiveChain> {
        self.chains.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn chain_count(&self) -> usize {
        self.chains.len()
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.by_kind
            .get(&kind)
            .into_iter()
            .flat_map(|ids| ids.iter())
            .filter_map(|id| self.nodes.get(id))
    }

    pub fn situation_count(&self) -> usize {
        self.by_kind.get(&NodeKind::Situation).map_or(0, |s| s.len())
    }

    /// True when every node survived curation.
    pub fn is_finalized(&self) -> bool {
        self.nodes.values().all(|n| n.status.is_kept())
    }

    pub fn set_raw_counts(&mut self, raw: BTreeMap<NodeKind, usize>) {
        self.raw_counts = raw;
    }

    pub fn raw_counts(&self) -> &BTreeMap<NodeKind, usize> {
        &self.raw_counts
    }

    /// Stores a node under `scope`, or returns the id of an equivalent kept
    /// node (same kind, same dedup key, same scope).
    pub fn add_node(&mut self, node: NewNode, scope: Scope) -> Result<NodeId, StoreError> {
        let mut report = ValidationReport::default();
        if !scope.fits(node.kind) {
            report.push(
                "scope-mismatch",
                format!("scope {scope:?} does not fit a {} node", node.kind),
            );
        }
        for parent in scope.parents() {
            if !self.nodes.contains_key(parent) {
                report.push(
                    "unresolved-reference",
                    format!("parent {parent} is not stored"),
                );
            }
        }
        let probe = Node {
            id: NodeId::new("pending"),
            kind: node.kind,
            text: node.text.clone(),
            polarity: node.polarity,
            topic: node.topic,
            status: node.status,
            source: node.source,
        };
        report.merge(probe.validate());
        if !report.ok() {
            return Err(StoreError::InvariantViolation(report));
        }

        let key = (node.kind, scope, dedup_key(&node.text));
        if node.status.is_kept() {
            if let Some(existing) = self.dedup.get(&key) {
                return Ok(existing.clone());
            }
        }
        let id = self.next_node_id(node.kind);
        let stored = Node { id: id.clone(), ..probe };
        self.index_node(&stored);
        if stored.status.is_kept() {
            self.dedup.insert(key, id.clone());
        }
        self.nodes.insert(id.clone(), stored);
        Ok(id)
    }

    fn next_node_id(&mut self, kind: NodeKind) -> NodeId {
        let counter = self.next_node.entry(kind).or_insert(0);
        *counter += 1;
        NodeId(format!("{}-{:06}", kind.id_prefix(), counter))
    }

    fn index_node(&mut self, node: &Node) {
        self.by_kind
            .entry(node.kind)
            .or_default()
            .insert(node.id.clone());
        if node.kind == NodeKind::Situation {
            self.similarity.insert(node.id.clone(), &node.text);
        }
    }

    /// Validates against stored nodes, assigns a chain id and stores the chain.
    pub fn insert_chain(&mut self, mut chain: CognitiveChain) -> Result<ChainId, StoreError> {
        let report = validate_chain(&chain, |id| self.nodes.get(id));
        if !report.ok() {
            return Err(StoreError::InvariantViolation(report));
        }
        self.next_chain += 1;
        chain.chain_id = ChainId(format!("chain-{:06}", self.next_chain));
        let id = chain.chain_id.clone();
        self.index_chain(&chain);
        self.chains.insert(id.clone(), chain);
        Ok(id)
    }

    fn index_chain(&mut self, chain: &CognitiveChain) {
        self.by_situation
            .entry(chain.situation.clone())
            .or_default()
            .insert(chain.chain_id.clone());
        let scopes = [
            (&chain.clue, Scope::Situation(chain.situation.clone())),
            (&chain.thought, Scope::Situation(chain.situation.clone())),
            (
                &chain.action,
                Scope::Thought(chain.situation.clone(), chain.thought.clone()),
            ),
        ];
        for (id, scope) in scopes {
            if let Some(node) = self.nodes.get(id) {
                if node.status.is_kept() {
                    self.dedup
                        .entry((node.kind, scope, dedup_key(&node.text)))
                        .or_insert_with(|| id.clone());
                }
            }
        }
    }

    /// Chains rooted at `situation`, optionally filtered by polarity, ordered by chain id.
    pub fn query_chains(
        &self,
        situation: &NodeId,
        polarity: Option<Polarity>,
    ) -> Result<Vec<&CognitiveChain>, StoreError> {
        match self.nodes.get(situation) {
            Some(n) if n.kind == NodeKind::Situation => {}
            _ => return Err(StoreError::UnknownSituation(situation.clone())),
        }
        Ok(self
            .by_situation
            .get(situation)
            .into_iter()
            .flat_map(|ids| ids.iter())
            .filter_map(|id| self.chains.get(id))
            .filter(|c| polarity.is_none_or(|p| c.polarity == p))
            .collect())
    }

    /// Top-`k` stored situations by TF-IDF cosine similarity to `query`.
    pub fn link_similar_situations(
        &self,
        query: &str,
        k: usize,
    ) -> Result<Vec<SimilarityHit>, StoreError> {
        if self.similarity.is_empty() {
            return Err(StoreError::EmptyGraph);
        }
        Ok(self.similarity.top_k(query, k))
    }

    pub fn stats(&self) -> GraphStats {
        let mut final_counts = BTreeMap::new();
        let mut retention = BTreeMap::new();
        for kind in NodeKind::ALL {
            let finals = self.by_kind.get(&kind).map_or(0, |s| s.len());
            final_counts.insert(kind, finals);
            let raw = self.raw_counts.get(&kind).copied().unwrap_or(0);
            retention.insert(kind, retention_rate(finals, raw).ok());
        }
        let chains_positive = self
            .chains
            .values()
            .filter(|c| c.polarity == Polarity::Positive)
            .count();
        GraphStats {
            final_counts,
            raw_counts: self.raw_counts.clone(),
            retention,
            chains_total: self.chains.len(),
            chains_positive,
            chains_negative: self.chains.len() - chains_positive,
        }
    }

    /// Rebuilds a graph from persisted records, checking referential integrity.
    pub(crate) fn from_records(
        nodes: Vec<Node>,
        chains: Vec<CognitiveChain>,
        raw_counts: BTreeMap<NodeKind, usize>,
    ) -> Result<Self, StoreError> {
        let mut graph = Graph {
            raw_counts,
            ..Graph::default()
        };
        for node in nodes {
            let report = node.validate();
            if !report.ok() {
                return Err(StoreError::InvariantViolation(report));
            }
            bump_counter(&mut graph.next_node, node.kind, node.id.as_str());
            graph.index_node(&node);
            if node.kind == NodeKind::Situation && node.status.is_kept() {
                graph
                    .dedup
                    .entry((node.kind, Scope::Global, dedup_key(&node.text)))
                    .or_insert_with(|| node.id.clone());
            }
            graph.nodes.insert(node.id.clone(), node);
        }
        for chain in chains {
            let report = validate_chain(&chain, |id| graph.nodes.get(id));
            if !report.ok() {
                return Err(StoreError::InvariantViolation(report));
            }
            if let Some(n) = numeric_suffix(chain.chain_id.as_str()) {
                graph.next_chain = graph.next_chain.max(n);
            }
            graph.index_chain(&chain);
            graph.chains.insert(chain.chain_id.clone(), chain);
        }
        Ok(graph)
    }
}

fn numeric_suffix(id: &str) -> Option<u64> {
    id.rsplit('-').next().and_then(|s| s.parse().ok())
}

fn bump_counter(counters: &mut BTreeMap<NodeKind, u64>, kind: NodeKind, id: &str) {
    if let Some(n) = numeric_suffix(id) {
        let c = counters.entry(kind).or_insert(0);
        *c = (*c).max(n);
    }
}

/// Single-writer, multi-reader handle. Readers take cheap immutable snapshots;
/// writers are serialized and publish a new snapshot when done.
#[derive(Debug, Clone, Default)]
pub struct GraphHandle {
    current: Arc<RwLock<Arc<Graph>>>,
    writer: Arc<Mutex<()>>,
}

impl GraphHandle {
    pub fn new(graph: Graph) -> Self {
        GraphHandle {
            current: Arc::new(RwLock::new(Arc::new(graph))),
            writer: Arc::new(Mutex::new(())),
        }
    }

    pub fn snapshot(&self) -> Arc<Graph> {
        self.current.read().clone()
    }

    pub fn update<T>(&self, f: impl FnOnce(&mut Graph) -> T) -> T {
        let _guard = self.writer.lock();
        let mut next = (*self.snapshot()).clone();
        let out = f(&mut next);
        *self.current.write() = Arc::new(next);
        out
    }
}
