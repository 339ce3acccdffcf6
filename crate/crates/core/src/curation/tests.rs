use std::sync::Arc;

use super::*;
use crate::chain_model::validate_chain;
use crate::construction_pipeline::{CandidatePool, Draft};
use crate::NodeSource;

fn draft(kind: NodeKind, text: &str, polarity: Option<Polarity>, parents: &[&NodeId]) -> Draft {
    Draft {
        kind,
        text: text.into(),
        polarity,
        topic: (kind == NodeKind::Situation).then_some(Topic::School),
        status: NodeStatus::Raw,
        parent_ids: parents.iter().map(|p| (*p).clone()).collect(),
        prompt_sha256: "ab".into(),
        completion_index: 0,
        round: 0,
    }
}

fn last_id(pool: &CandidatePool) -> NodeId {
    pool.candidates().last().unwrap().id.clone()
}

/// One situation with one thought per polarity; each thought has one clue,
/// one action and one emotion.
fn small_pool() -> CandidatePool {
    let mut pool = CandidatePool::new();
    pool.admit(draft(NodeKind::Situation, "I have an exam tomorrow.", None, &[]), 0.9);
    let s = last_id(&pool);
    for (p, thought, emotion) in [
        (Polarity::Positive, "I studied hard", "Joyful"),
        (Polarity::Negative, "I will fail", "Fearful"),
    ] {
        pool.admit(draft(NodeKind::Thought, thought, Some(p), &[&s]), 0.9);
        let t = last_id(&pool);
        pool.admit(draft(NodeKind::Clue, &format!("clue for {thought}"), Some(p), &[&s, &t]), 0.9);
        pool.admit(draft(NodeKind::Action, &format!("action for {thought}"), Some(p), &[&s, &t]), 0.9);
        pool.admit(draft(NodeKind::Emotion, emotion, Some(p), &[&s, &t]), 0.9);
    }
    pool
}

fn roster() -> Roster {
    Roster::new(vec![
        Annotator { id: "ann".into(), token: "t-ann".into(), expert: false },
        Annotator { id: "bob".into(), token: "t-bob".into(), expert: false },
        Annotator { id: "exp".into(), token: "t-exp".into(), expert: true },
    ])
    .unwrap()
}

fn service(pool: CandidatePool) -> (CurationService, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(1_000));
    let svc = CurationService::new(pool, roster(), CurationConfig::default(), clock.clone());
    (svc, clock)
}

fn all() -> QueueFilter {
    QueueFilter::default()
}

fn accept_everything(svc: &CurationService, who: &str) {
    loop {
        let batch = svc.claim_batch(who, &all(), 50).unwrap();
        if batch.is_empty() {
            break;
        }
        for item in batch {
            svc.submit_decision(who, &item.id, Verdict::Accept).unwrap();
        }
    }
}

#[test]
fn queue_order_and_context() {
    let (svc, _) = service(small_pool());
    let items = svc.claim_batch("ann", &all(), 100).unwrap();
    let kinds: Vec<NodeKind> = items.iter().map(|i| i.kind).collect();
    assert_eq!(kinds[0], NodeKind::Situation);
    assert!(kinds.windows(2).all(|w| w[0] <= w[1]));
    let emotion = items.iter().find(|i| i.kind == NodeKind::Emotion).unwrap();
    assert_eq!(emotion.situation_text.as_deref(), Some("I have an exam tomorrow."));
    assert!(emotion.thought_text.is_some());
    assert_eq!(emotion.choices.len(), 3);
    assert_eq!(emotion.topic, Some(Topic::School));
}

#[test]
fn claims_are_exclusive_and_expire() {
    let (svc, clock) = service(small_pool());
    let a = svc.claim_batch("ann", &all(), 4).unwrap();
    let b = svc.claim_batch("bob", &all(), 4).unwrap();
    assert!(a.iter().all(|x| b.iter().all(|y| x.id != y.id)));
    assert_eq!(svc.claim_batch("bob", &all(), 4).unwrap().len(), 4, "own claims are renewed");
    assert!(svc.claim_batch("exp", &all(), 100).unwrap().len() == 1);
    clock.advance_ms(CurationConfig::default().lease_ms + 1);
    let c = svc.claim_batch("exp", &all(), 100).unwrap();
    assert_eq!(c.len(), 9);
    assert_eq!(
        svc.submit_decision("ann", &a[0].id, Verdict::Accept).unwrap_err().to_string(),
        CurationError::StaleClaim(a[0].id.clone()).to_string()
    );
}

#[test]
fn filters_restrict_the_batch() {
    let (svc, _) = service(small_pool());
    let filter = QueueFilter { kind: Some(NodeKind::Emotion), ..all() };
    let items = svc.claim_batch("ann", &filter, 10).unwrap();
    assert_eq!(items.len(), 2);
    assert!(items.iter().all(|i| i.kind == NodeKind::Emotion));
    let filter = QueueFilter { polarity: Some(Polarity::Negative), ..all() };
    assert!(svc.claim_batch("bob", &filter, 10).unwrap().iter().all(|i| i.polarity == Some(Polarity::Negative)));
    let filter = QueueFilter { topic: Some(Topic::Work), ..all() };
    assert!(svc.claim_batch("bob", &filter, 10).unwrap().is_empty());
    assert!(matches!(
        svc.claim_batch("ann", &QueueFilter { status: QueueStatus::Flagged, ..all() }, 10),
        Err(CurationError::RoleDenied(_))
    ));
    assert!(matches!(svc.claim_batch("nobody", &all(), 1), Err(CurationError::UnknownAnnotator)));
}

#[test]
fn decisions_validate_and_apply() {
    let (svc, _) = service(small_pool());
    let items = svc.claim_batch("ann", &all(), 100).unwrap();
    let s = &items[0].id;
    assert!(matches!(
        svc.submit_decision("ann", s, Verdict::Revise { text: "  ".into() }),
        Err(CurationError::Validation(_))
    ));
    assert!(matches!(
        svc.submit_decision("ann", s, Verdict::Revise { text: "i have an EXAM tomorrow.".into() }),
        Err(CurationError::Validation(_))
    ));
    assert!(matches!(
        svc.submit_decision("ann", s, Verdict::Flag { reason: "".into() }),
        Err(CurationError::Validation(_))
    ));
    assert_eq!(
        svc.submit_decision("ann", s, Verdict::Revise { text: "I have a maths exam tomorrow.".into() }).unwrap(),
        NodeStatus::Revised
    );
    let snapshot = svc.pool_snapshot();
    let revised = snapshot.get(s).unwrap();
    assert_eq!(revised.text, "I have a maths exam tomorrow.");
    assert_eq!(revised.source, NodeSource::HumanRevised);
    assert!(matches!(
        svc.submit_decision("ann", s, Verdict::Accept),
        Err(CurationError::AlreadyDecided(_))
    ));
    assert!(matches!(
        svc.submit_decision("ann", &NodeId::new("s-999999"), Verdict::Accept),
        Err(CurationError::UnknownItem(_))
    ));
    let emotion = items.iter().find(|i| i.kind == NodeKind::Emotion).unwrap();
    assert!(matches!(
        svc.submit_decision("ann", &emotion.id, Verdict::Revise { text: "Sad".into() }),
        Err(CurationError::LabelPolarityMismatch { .. })
    ));
}

#[test]
fn flagged_items_need_an_expert() {
    let (svc, _) = service(small_pool());
    let items = svc.claim_batch("ann", &QueueFilter { kind: Some(NodeKind::Emotion), ..all() }, 1).unwrap();
    let e = &items[0].id;
    assert_eq!(
        svc.submit_decision("ann", e, Verdict::Flag { reason: "not sure".into() }).unwrap(),
        NodeStatus::Flagged
    );
    assert!(matches!(svc.submit_decision("ann", e, Verdict::Accept), Err(CurationError::AwaitingExpert(_))));
    assert!(matches!(
        svc.expert_resolve("ann", e, Verdict::Accept, None),
        Err(CurationError::RoleDenied(_))
    ));
    assert!(matches!(
        svc.expert_resolve("exp", e, Verdict::Accept, Some(EmotionCategory::Sad)),
        Err(CurationError::LabelPolarityMismatch { .. })
    ));
    assert!(matches!(
        svc.expert_resolve("exp", e, Verdict::Flag { reason: "x".into() }, None),
        Err(CurationError::Validation(_))
    ));
    let flagged = svc.claim_batch("exp", &QueueFilter { status: QueueStatus::Flagged, ..all() }, 5).unwrap();
    assert_eq!(flagged.len(), 1);
    assert_eq!(
        svc.expert_resolve("exp", e, Verdict::Accept, Some(EmotionCategory::Surprise)).unwrap(),
        NodeStatus::Revised
    );
    assert_eq!(svc.pool_snapshot().get(e).unwrap().text, "Surprise");
    assert!(matches!(
        svc.expert_resolve("exp", e, Verdict::Accept, None),
        Err(CurationError::NotFlagged(_))
    ));
}

#[test]
fn open_mode_allows_unclaimed_decisions() {
    let clock = Arc::new(ManualClock::new(0));
    let config = CurationConfig { open_mode: true, ..CurationConfig::default() };
    let svc = CurationService::new(small_pool(), roster(), config, clock);
    svc.submit_decision("ann", &NodeId::new("s-000001"), Verdict::Accept).unwrap();
    svc.claim_batch("bob", &all(), 1).unwrap();
    assert!(matches!(
        svc.submit_decision("ann", &NodeId::new("c-000001"), Verdict::Accept),
        Err(CurationError::StaleClaim(_))
    ));
}

#[test]
fn finalize_builds_valid_chains() {
    let (svc, _) = service(small_pool());
    assert!(matches!(svc.finalize(false), Err(CurationError::PendingItemsRemain(9))));
    accept_everything(&svc, "ann");
    let graph = svc.finalize(false).unwrap();
    assert_eq!(graph.chain_count(), 2);
    for chain in graph.chains() {
        assert!(validate_chain(chain, |id| graph.node(id)).ok());
    }
    assert!(graph.nodes().all(|n| n.status.is_kept()));
    let stats = graph.stats();
    assert_eq!((stats.chains_positive, stats.chains_negative), (1, 1));
    assert_eq!(stats.retention[&NodeKind::Thought], Some(1.0));
}

#[test]
fn rejected_nodes_break_their_paths() {
    let (svc, _) = service(small_pool());
    let items = svc.claim_batch("ann", &all(), 100).unwrap();
    for item in &items {
        let verdict = if item.kind == NodeKind::Clue && item.polarity == Some(Polarity::Negative) {
            Verdict::Reject
        } else {
            Verdict::Accept
        };
        svc.submit_decision("ann", &item.id, verdict).unwrap();
    }
    let graph = svc.finalize(false).unwrap();
    assert_eq!(graph.chain_count(), 1);
    assert!(graph.chains().all(|c| c.polarity == Polarity::Positive));
    assert_eq!(graph.nodes_of_kind(NodeKind::Clue).count(), 1);
}

#[test]
fn rejected_thought_makes_descendants_moot() {
    let (svc, _) = service(small_pool());
    let items = svc.claim_batch("ann", &QueueFilter { kind: Some(NodeKind::Thought), ..all() }, 2).unwrap();
    for item in &items {
        svc.submit_decision("ann", &item.id, Verdict::Reject).unwrap();
    }
    let stats = svc.stats();
    assert_eq!(stats.kinds[&NodeKind::Clue].moot, 2);
    assert_eq!(svc.outstanding(), 1);
    let c = &stats.kinds[&NodeKind::Thought];
    assert_eq!(c.raw, c.pending + c.accepted + c.revised + c.rejected + c.flagged + c.filtered + c.moot);
    assert_eq!(stats.annotators["ann"]["reject"], 2);
}

#[test]
fn forced_finalize_skips_outstanding_items() {
    let (svc, _) = service(small_pool());
    let mut items = svc.claim_batch("ann", &all(), 1).unwrap();
    items.extend(svc.claim_batch("ann", &QueueFilter { kind: Some(NodeKind::Thought), ..all() }, 2).unwrap());
    for item in &items {
        svc.submit_decision("ann", &item.id, Verdict::Accept).unwrap();
    }
    let graph = svc.finalize(true).unwrap();
    assert_eq!(graph.node_count(), 3);
    assert_eq!(graph.chain_count(), 0);
}

#[test]
fn log_replay_reproduces_the_graph() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("decisions.jsonl");
    let pool = small_pool();
    let clock = Arc::new(ManualClock::new(0));
    let svc = CurationService::new(pool.clone(), roster(), CurationConfig::default(), clock)
        .with_log(&log_path)
        .unwrap();
    let items = svc.claim_batch("ann", &all(), 100).unwrap();
    for (i, item) in items.iter().enumerate() {
        let verdict = match (item.kind, i % 3) {
            (NodeKind::Emotion, _) => Verdict::Flag { reason: "check".into() },
            (NodeKind::Clue, 0) => Verdict::Revise { text: format!("{} indeed", item.text) },
            _ => Verdict::Accept,
        };
        svc.submit_decision("ann", &item.id, verdict).unwrap();
    }
    for item in items.iter().filter(|i| i.kind == NodeKind::Emotion) {
        svc.expert_resolve("exp", &item.id, Verdict::Accept, None).unwrap();
    }
    let live = svc.finalize(false).unwrap();

    let replayed = finalize(&replay(pool.clone(), &read_log(&log_path).unwrap()).unwrap(), false).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    live.save(&a).unwrap();
    replayed.save(&b).unwrap();
    for file in ["nodes.jsonl", "chains.jsonl", "graph.json"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
    }

    // Reopening the service on the same log resumes where it left off.
    let reopened = CurationService::new(pool, roster(), CurationConfig::default(), Arc::new(ManualClock::new(0)))
        .with_log(&log_path)
        .unwrap();
    assert_eq!(reopened.outstanding(), 0);
    assert_eq!(reopened.stats(), svc.stats());
}

#[test]
fn situation_retention_matches_table_arithmetic() {
    let mut pool = CandidatePool::new();
    for i in 0..2000 {
        pool.admit(draft(NodeKind::Situation, &format!("situation number {i}"), None, &[]), 0.9);
    }
    let clock = Arc::new(ManualClock::new(0));
    let config = CurationConfig { open_mode: true, ..CurationConfig::default() };
    let svc = CurationService::new(pool, roster(), config, clock);
    for i in 0..2000 {
        let verdict = if i < 1200 { Verdict::Accept } else { Verdict::Reject };
        svc.submit_decision("ann", &NodeId(format!("s-{:06}", i + 1)), verdict).unwrap();
    }
    assert_eq!(svc.stats().kinds[&NodeKind::Situation].retention, Some(0.6));
    let graph = svc.finalize(false).unwrap();
    assert_eq!(graph.stats().retention[&NodeKind::Situation], Some(0.6));
    assert_eq!(crate::graph_store::format_percent(0.6), "60.00%");
}
