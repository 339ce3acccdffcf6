use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::CurationError;
use crate::chain_model::{normalize_emotion, ChainId, CognitiveChain, NodeId, NodeKind, NodeStatus};
use crate::construction_pipeline::{Candidate, CandidatePool};
use crate::graph_store::{Graph, NewNode, Scope};

/// True when some ancestor of `c` was rejected, so `c` will never be reviewed.
pub(super) fn is_moot(pool: &CandidatePool, c: &Candidate) -> bool {
    c.parent_ids
        .iter()
        .any(|p| pool.get(p).is_none_or(|p| p.status == NodeStatus::Rejected))
}

/// Items still raw or flagged that are not under a rejected ancestor.
pub(super) fn outstanding(pool: &CandidatePool) -> usize {
    pool.candidates()
        .iter()
        .filter(|c| c.awaits_review() && !is_moot(pool, c))
        .count()
}

/// Builds the curated graph: every kept candidate whose ancestors are kept,
/// and for each kept thought with a kept emotion, one chain per
/// (kept clue, kept action) pair. With `force`, outstanding items are
/// simply left out.
pub fn finalize(pool: &CandidatePool, force: bool) -> Result<Graph, CurationError> {
    let remaining = outstanding(pool);
    if remaining > 0 && !force {
        return Err(CurationError::PendingItemsRemain(remaining));
    }
    let mut graph = Graph::new();
    let mut ids: HashMap<&NodeId, NodeId> = HashMap::new();
    let new_node = |c: &Candidate| NewNode::from(c.to_node());

    for kind in [NodeKind::Situation, NodeKind::Thought, NodeKind::Clue, NodeKind::Action, NodeKind::Emotion] {
        for c in pool.of_kind(kind).filter(|c| c.status.is_kept()) {
            let parents: Option<Vec<NodeId>> = c.parent_ids.iter().map(|p| ids.get(p).cloned()).collect();
            let Some(parents) = parents else { continue };
            let scope = match (kind, parents.as_slice()) {
                (NodeKind::Situation, []) => Scope::Global,
                (NodeKind::Thought, [s]) | (NodeKind::Clue, [s, _]) => Scope::Situation(s.clone()),
                (NodeKind::Action | NodeKind::Emotion, [s, t]) => Scope::Thought(s.clone(), t.clone()),
                _ => {
                    return Err(CurationError::Validation(format!(
                        "candidate {} has malformed provenance",
                        c.id
                    )))
                }
            };
            let id = graph.add_node(new_node(c), scope)?;
            ids.insert(&c.id, id);
        }
    }

    // Group kept descendants by the stored thought they hang off.
    let mut clues: BTreeMap<(NodeId, NodeId), BTreeSet<NodeId>> = BTreeMap::new();
    let mut actions: BTreeMap<(NodeId, NodeId), BTreeSet<NodeId>> = BTreeMap::new();
    let mut emotions: BTreeMap<(NodeId, NodeId), NodeId> = BTreeMap::new();
    for c in pool.candidates() {
        let (Some(id), [s, t]) = (ids.get(&c.id), c.parent_ids.as_slice()) else { continue };
        let key = (ids[s].clone(), ids[t].clone());
        match c.kind {
            NodeKind::Clue => {
                clues.entry(key).or_default().insert(id.clone());
            }
            NodeKind::Action => {
                actions.entry(key).or_default().insert(id.clone());
            }
            NodeKind::Emotion => {
                emotions.entry(key).or_insert_with(|| id.clone());
            }
            _ => {}
        }
    }

    for ((s, t), emotion_id) in &emotions {
        let key = (s.clone(), t.clone());
        let (Some(cs), Some(acts)) = (clues.get(&key), actions.get(&key)) else { continue };
        let thought = graph.node(t).expect("thought stored above");
        let polarity = thought.polarity.expect("thoughts carry a polarity");
        let emotion_text = &graph.node(emotion_id).expect("emotion stored above").text;
        let emotion = normalize_emotion(emotion_text).map_err(|_| {
            CurationError::Validation(format!("emotion node {emotion_id} has label `{emotion_text}`"))
        })?;
        for clue in cs {
            for action in acts {
                graph.insert_chain(CognitiveChain {
                    chain_id: ChainId::new(""),
                    situation: s.clone(),
                    clue: clue.clone(),
                    thought: t.clone(),
                    action: action.clone(),
                    emotion,
                    polarity,
                })?;
            }
        }
    }
    graph.set_raw_counts(pool.raw_counts());
    Ok(graph)
}
