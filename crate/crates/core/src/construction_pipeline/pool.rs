use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::chain_model::{Node, NodeId, NodeKind, NodeSource, NodeStatus, Polarity, Topic};
use crate::graph_store::{read_jsonl, write_jsonl};
use crate::text::{dedup_key, tokenize};

/// Generation step a parent has been through. Keys resumability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    /// Event rewritten into situations.
    Situations,
    /// Situation expanded into thoughts.
    Thoughts,
    /// Thought labelled with an emotion.
    Emotion,
    /// Thought expanded into clues and actions.
    Details,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: NodeId,
    pub kind: NodeKind,
    pub text: String,
    pub polarity: Option<Polarity>,
    pub topic: Option<Topic>,
    pub status: NodeStatus,
    pub source: NodeSource,
    /// Ancestors from the situation down: `[]`, `[s]` or `[s, t]`.
    pub parent_ids: Vec<NodeId>,
    pub prompt_sha256: String,
    pub completion_index: u32,
    pub round: u32,
    /// Dropped by the automatic near-duplicate filter before review.
    #[serde(default)]
    pub auto_filtered: bool,
}

impl Candidate {
    pub fn situation_id(&self) -> Option<&NodeId> {
        if self.kind == NodeKind::Situation {
            Some(&self.id)
        } else {
            self.parent_ids.first()
        }
    }

    pub fn thought_id(&self) -> Option<&NodeId> {
        match self.kind {
            NodeKind::Thought => Some(&self.id),
            NodeKind::Clue | NodeKind::Action | NodeKind::Emotion => self.parent_ids.get(1),
            NodeKind::Situation => None,
        }
    }

    /// Reviewable: neither filtered automatically nor already decided.
    pub fn awaits_review(&self) -> bool {
        !self.auto_filtered && matches!(self.status, NodeStatus::Raw | NodeStatus::Flagged)
    }

    pub fn to_node(&self) -> Node {
        Node {
            id: self.id.clone(),
            kind: self.kind,
            text: self.text.clone(),
            polarity: self.polarity,
            topic: self.topic,
            status: self.status,
            source: self.source,
        }
    }
}

/// Generated text and its provenance, before id assignment and dedup.
#[derive(Debug, Clone, PartialEq)]
pub struct Draft {
    pub kind: NodeKind,
    pub text: String,
    pub polarity: Option<Polarity>,
    pub topic: Option<Topic>,
    pub status: NodeStatus,
    pub parent_ids: Vec<NodeId>,
    pub prompt_sha256: String,
    pub completion_index: u32,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum PoolLine {
    Candidate(Candidate),
    Expanded { parent: String, stage: Stage },
}

/// Token-set Jaccard similarity; two empty texts count as identical.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let a: BTreeSet<String> = tokenize(a).into_iter().collect();
    let b: BTreeSet<String> = tokenize(b).into_iter().collect();
    jaccard_sets(&a, &b)
}

fn jaccard_sets(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, Default)]
struct ScopeEntries {
    keys: Vec<(String, BTreeSet<String>)>,
}

impl ScopeEntries {
    fn is_duplicate(&self, key: &str, tokens: &BTreeSet<String>, threshold: f64) -> bool {
        self.keys
            .iter()
            .any(|(k, t)| k == key || jaccard_sets(t, tokens) >= threshold)
    }
}

/// Keeps the first of every group of near-duplicates within each
/// (kind, parent scope), in input order.
pub fn dedup_filter(drafts: Vec<Draft>, threshold: f64) -> Vec<Draft> {
    let mut scopes: HashMap<(NodeKind, Vec<NodeId>), ScopeEntries> = HashMap::new();
    drafts
        .into_iter()
        .filter(|d| {
            let entries = scopes.entry((d.kind, d.parent_ids.clone())).or_default();
            let key = dedup_key(&d.text);
            let tokens: BTreeSet<String> = tokenize(&d.text).into_iter().collect();
            if entries.is_duplicate(&key, &tokens, threshold) {
                false
            } else {
                entries.keys.push((key, tokens));
                true
            }
        })
        .collect()
}

/// Every candidate generated so far, including automatically filtered ones,
/// plus the set of (parent, stage) expansions already run.
#[derive(Debug, Clone, Default)]
pub struct CandidatePool {
    candidates: Vec<Candidate>,
    by_id: HashMap<NodeId, usize>,
    expanded: BTreeSet<(String, Stage)>,
    next_id: BTreeMap<NodeKind, u64>,
    scopes: HashMap<(NodeKind, Vec<NodeId>), ScopeEntries>,
}

/// Outcome of pushing one draft into the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Kept,
    Duplicate,
}

impl CandidatePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn get(&self, id: &NodeId) -> Option<&Candidate> {
        self.by_id.get(id).map(|&i| &self.candidates[i])
    }

    pub fn get_mut(&mut self, id: &NodeId) -> Option<&mut Candidate> {
        self.by_id.get(id).map(|&i| &mut self.candidates[i])
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(move |c| c.kind == kind)
    }

    pub fn is_expanded(&self, parent: &str, stage: Stage) -> bool {
        self.expanded.contains(&(parent.to_string(), stage))
    }

    pub fn mark_expanded(&mut self, parent: &str, stage: Stage) {
        self.expanded.insert((parent.to_string(), stage));
    }

    /// Generated candidates per kind, counting automatically filtered duplicates.
    pub fn raw_counts(&self) -> BTreeMap<NodeKind, usize> {
        let mut counts: BTreeMap<NodeKind, usize> = NodeKind::ALL.iter().map(|k| (*k, 0)).collect();
        for c in &self.candidates {
            *counts.entry(c.kind).or_default() += 1;
        }
        counts
    }

    /// Candidates per kind removed by the near-duplicate filter.
    pub fn dedup_losses(&self) -> BTreeMap<NodeKind, usize> {
        let mut counts: BTreeMap<NodeKind, usize> = NodeKind::ALL.iter().map(|k| (*k, 0)).collect();
        for c in self.candidates.iter().filter(|c| c.auto_filtered) {
            *counts.entry(c.kind).or_default() += 1;
        }
        counts
    }

    /// Assigns an id and stores the draft; near-duplicates of earlier
    /// candidates in the same scope are stored as filtered and rejected.
    /// Emotion labels are exempt from the filter.
    pub fn admit(&mut self, draft: Draft, threshold: f64) -> Admission {
        let duplicate = if draft.kind == NodeKind::Emotion {
            false
        } else {
            let entries = self
                .scopes
                .entry((draft.kind, draft.parent_ids.clone()))
                .or_default();
            let key = dedup_key(&draft.text);
            let tokens: BTreeSet<String> = tokenize(&draft.text).into_iter().collect();
            if entries.is_duplicate(&key, &tokens, threshold) {
                true
            } else {
                entries.keys.push((key, tokens));
                false
            }
        };
        let counter = self.next_id.entry(draft.kind).or_insert(0);
        *counter += 1;
        let id = NodeId(format!("{}-{:06}", draft.kind.id_prefix(), counter));
        let candidate = Candidate {
            id,
            kind: draft.kind,
            text: draft.text,
            polarity: draft.polarity,
            topic: draft.topic,
            status: if duplicate { NodeStatus::Rejected } else { draft.status },
            source: NodeSource::LlmGenerated,
            parent_ids: draft.parent_ids,
            prompt_sha256: draft.prompt_sha256,
            completion_index: draft.completion_index,
            round: draft.round,
            auto_filtered: duplicate,
        };
        self.insert(candidate);
        if duplicate {
            Admission::Duplicate
        } else {
            Admission::Kept
        }
    }

    fn insert(&mut self, candidate: Candidate) {
        self.by_id.insert(candidate.id.clone(), self.candidates.len());
        self.candidates.push(candidate);
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
                path: dir.display().to_string(),
                source,
            })?;
        }
        let lines = self
            .candidates
            .iter()
            .cloned()
            .map(PoolLine::Candidate)
            .chain(self.expanded.iter().map(|(parent, stage)| PoolLine::Expanded {
                parent: parent.clone(),
                stage: *stage,
            }));
        write_jsonl(path, lines)?;
        Ok(())
    }

    /// Loads a checkpoint. Candidate ids continue from the highest stored one
    /// and the dedup index is rebuilt from unfiltered candidates.
    pub fn load(path: &Path) -> Result<CandidatePool, PipelineError> {
        let lines: Vec<PoolLine> = read_jsonl(path)?;
        let mut pool = CandidatePool::new();
        for line in lines {
            match line {
                PoolLine::Candidate(c) => {
                    if pool.by_id.contains_key(&c.id) {
                        return Err(PipelineError::Pool(format!("duplicate candidate id {}", c.id)));
                    }
                    let n = c
                        .id
                        .as_str()
                        .rsplit('-')
                        .next()
                        .and_then(|n| n.parse::<u64>().ok())
                        .unwrap_or(0);
                    let counter = pool.next_id.entry(c.kind).or_insert(0);
                    *counter = (*counter).max(n);
                    if !c.auto_filtered && c.kind != NodeKind::Emotion {
                        pool.scopes
                            .entry((c.kind, c.parent_ids.clone()))
                            .or_default()
                            .keys
                            .push((dedup_key(&c.text), tokenize(&c.text).into_iter().collect()));
                    }
                    pool.insert(c);
                }
                PoolLine::Expanded { parent, stage } => {
                    pool.expanded.insert((parent, stage));
                }
            }
        }
        for c in &pool.candidates {
            for parent in &c.parent_ids {
                if !pool.by_id.contains_key(parent) {
                    return Err(PipelineError::Pool(format!(
                        "candidate {} references unknown parent {parent}",
                        c.id
                    )));
                }
            }
        }
        Ok(pool)
    }
}
