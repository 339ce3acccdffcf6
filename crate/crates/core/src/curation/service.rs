use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::finalize::{is_moot, outstanding};
use super::log::{apply_entry, check_decidable, check_resolution, check_verdict, read_log, DecisionLog, LogEntry};
use super::{
    finalize, Annotator, Claim, Clock, CurationError, ExpertResolution, KindCounts, QueueFilter,
    QueueStatus, ReviewDecision, ReviewItem, ReviewStats, Roster, Verdict,
};
use crate::chain_model::{EmotionCategory, NodeId, NodeKind, NodeStatus};
use crate::construction_pipeline::{Candidate, CandidatePool};
use crate::graph_store::{retention_rate, Graph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    pub lease_ms: u64,
    /// Accept decisions on unclaimed items.
    pub open_mode: bool,
    /// Where `finalize` writes the graph, if anywhere.
    pub graph_dir: Option<PathBuf>,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            lease_ms: 30 * 60 * 1000,
            open_mode: false,
            graph_dir: None,
        }
    }
}

struct State {
    pool: CandidatePool,
    /// Review order: (situation id, kind, generation order).
    order: Vec<NodeId>,
    claims: HashMap<NodeId, Claim>,
    tallies: BTreeMap<String, BTreeMap<String, usize>>,
    log: Option<DecisionLog>,
}

impl State {
    fn live_claim(&self, id: &NodeId, now: u64) -> Option<&Claim> {
        self.claims.get(id).filter(|c| c.expires_at_ms > now)
    }

    fn tally(&mut self, annotator: &str, what: &str) {
        *self
            .tallies
            .entry(annotator.to_string())
            .or_default()
            .entry(what.to_string())
            .or_default() += 1;
    }

    fn record(&mut self, entry: LogEntry) -> Result<NodeStatus, CurationError> {
        if let Some(log) = self.log.as_mut() {
            log.append(&entry)?;
        }
        apply_entry(&mut self.pool, &entry)?;
        let (annotator, what, item) = match &entry {
            LogEntry::Decision(d) => (d.annotator.clone(), verdict_name(&d.verdict), d.item.clone()),
            LogEntry::ExpertResolve(r) => (r.expert.clone(), "resolve", r.item.clone()),
        };
        self.tally(&annotator, what);
        self.claims.remove(&item);
        Ok(self.pool.get(&item).expect("item exists").status)
    }
}

fn verdict_name(v: &Verdict) -> &'static str {
    match v {
        Verdict::Accept => "accept",
        Verdict::Revise { .. } => "revise",
        Verdict::Reject => "reject",
        Verdict::Flag { .. } => "flag",
    }
}

fn review_order(pool: &CandidatePool) -> Vec<NodeId> {
    let mut keyed: Vec<(&NodeId, NodeKind, usize)> = pool
        .candidates()
        .iter()
        .enumerate()
        .map(|(i, c)| (c.situation_id().unwrap_or(&c.id), c.kind, i))
        .collect();
    keyed.sort();
    keyed
        .into_iter()
        .map(|(_, _, i)| pool.candidates()[i].id.clone())
        .collect()
}

/// Review service over one candidate pool. All transitions are serialized
/// behind one lock and logged before they are applied.
pub struct CurationService {
    state: Mutex<State>,
    roster: Roster,
    config: CurationConfig,
    clock: Arc<dyn Clock>,
}

impl CurationService {
    pub fn new(pool: CandidatePool, roster: Roster, config: CurationConfig, clock: Arc<dyn Clock>) -> Self {
        CurationService {
            state: Mutex::new(State {
                order: review_order(&pool),
                pool,
                claims: HashMap::new(),
                tallies: BTreeMap::new(),
                log: None,
            }),
            roster,
            config,
            clock,
        }
    }

    /// Replays an existing log at `path` onto the pool, then appends to it.
    pub fn with_log(self, path: &Path) -> Result<Self, CurationError> {
        {
            let mut state = self.state.lock();
            if path.exists() {
                for entry in read_log(path)? {
                    apply_entry(&mut state.pool, &entry)?;
                    match &entry {
                        LogEntry::Decision(d) => state.tally(&d.annotator, verdict_name(&d.verdict)),
                        LogEntry::ExpertResolve(r) => state.tally(&r.expert, "resolve"),
                    }
                }
            }
            state.log = Some(DecisionLog::open(path)?);
        }
        Ok(self)
    }

    pub fn config(&self) -> &CurationConfig {
        &self.config
    }

    pub fn authenticate(&self, token: &str) -> Option<&Annotator> {
        self.roster.by_token(token)
    }

    fn annotator(&self, id: &str) -> Result<&Annotator, CurationError> {
        self.roster.by_id(id).ok_or(CurationError::UnknownAnnotator)
    }

    fn item(pool: &CandidatePool, c: &Candidate, claim: Option<Claim>) -> ReviewItem {
        let situation = c.parent_ids.first().and_then(|id| pool.get(id));
        let thought = c.parent_ids.get(1).and_then(|id| pool.get(id));
        ReviewItem {
            id: c.id.clone(),
            kind: c.kind,
            text: c.text.clone(),
            polarity: c.polarity,
            topic: situation.map_or(c.topic, |s| s.topic),
            status: c.status,
            situation_text: situation.map(|s| s.text.clone()),
            thought_text: thought.map(|t| t.text.clone()),
            choices: match (c.kind, c.polarity) {
                (NodeKind::Emotion, Some(p)) => p.emotions().to_vec(),
                _ => vec![],
            },
            claim,
        }
    }

    pub fn get_item(&self, id: &NodeId) -> Option<ReviewItem> {
        let state = self.state.lock();
        let now = self.clock.now_ms();
        let c = state.pool.get(id)?;
        Some(Self::item(&state.pool, c, state.live_claim(id, now).cloned()))
    }

    /// Leases up to `size` matching items to `annotator`. Items the annotator
    /// already holds are included and their lease renewed.
    pub fn claim_batch(
        &self,
        annotator: &str,
        filter: &QueueFilter,
        size: usize,
    ) -> Result<Vec<ReviewItem>, CurationError> {
        let who = self.annotator(annotator)?;
        if filter.status == QueueStatus::Flagged && !who.expert {
            return Err(CurationError::RoleDenied(who.id.clone()));
        }
        let mut state = self.state.lock();
        let now = self.clock.now_ms();
        let expires_at_ms = now + self.config.lease_ms;
        let mut picked = Vec::new();
        for id in &state.order {
            if picked.len() >= size {
                break;
            }
            let c = state.pool.get(id).expect("ordered ids exist");
            let status_ok = match filter.status {
                QueueStatus::Pending => c.status == NodeStatus::Raw && !c.auto_filtered,
                QueueStatus::Flagged => c.status == NodeStatus::Flagged,
            };
            if !status_ok
                || filter.kind.is_some_and(|k| k != c.kind)
                || filter.polarity.is_some_and(|p| c.polarity != Some(p))
                || is_moot(&state.pool, c)
            {
                continue;
            }
            if let Some(topic) = filter.topic {
                let situation = c.situation_id().and_then(|s| state.pool.get(s));
                if situation.and_then(|s| s.topic) != Some(topic) {
                    continue;
                }
            }
            if state.live_claim(id, now).is_some_and(|cl| cl.annotator != who.id) {
                continue;
            }
            picked.push(id.clone());
        }
        let claim = Claim {
            annotator: who.id.clone(),
            expires_at_ms,
        };
        let mut items = Vec::with_capacity(picked.len());
        for id in picked {
            state.claims.insert(id.clone(), claim.clone());
            let c = state.pool.get(&id).expect("picked ids exist");
            items.push(Self::item(&state.pool, c, Some(claim.clone())));
        }
        Ok(items)
    }

    pub fn submit_decision(
        &self,
        annotator: &str,
        item: &NodeId,
        verdict: Verdict,
    ) -> Result<NodeStatus, CurationError> {
        let who = self.annotator(annotator)?;
        let mut state = self.state.lock();
        let now = self.clock.now_ms();
        let c = state
            .pool
            .get(item)
            .ok_or_else(|| CurationError::UnknownItem(item.clone()))?;
        check_decidable(c)?;
        match state.live_claim(item, now) {
            Some(claim) if claim.annotator == who.id => {}
            None if self.config.open_mode => {}
            _ => return Err(CurationError::StaleClaim(item.clone())),
        }
        check_verdict(c, &verdict)?;
        state.record(LogEntry::Decision(ReviewDecision {
            item: item.clone(),
            annotator: who.id.clone(),
            verdict,
            timestamp_ms: now,
        }))
    }

    pub fn expert_resolve(
        &self,
        expert: &str,
        item: &NodeId,
        verdict: Verdict,
        relabel: Option<EmotionCategory>,
    ) -> Result<NodeStatus, CurationError> {
        let who = self.annotator(expert)?;
        if !who.expert {
            return Err(CurationError::RoleDenied(who.id.clone()));
        }
        let mut state = self.state.lock();
        let c = state
            .pool
            .get(item)
            .ok_or_else(|| CurationError::UnknownItem(item.clone()))?;
        let resolution = ExpertResolution {
            item: item.clone(),
            expert: who.id.clone(),
            verdict,
            relabel,
            timestamp_ms: self.clock.now_ms(),
        };
        check_resolution(c, &resolution)?;
        state.record(LogEntry::ExpertResolve(resolution))
    }

    pub fn stats(&self) -> ReviewStats {
        let state = self.state.lock();
        let pool = &state.pool;
        let mut kinds: BTreeMap<NodeKind, KindCounts> =
            NodeKind::ALL.iter().map(|k| (*k, KindCounts::default())).collect();
        for c in pool.candidates() {
            let k = kinds.get_mut(&c.kind).expect("all kinds present");
            k.raw += 1;
            match c.status {
                _ if c.auto_filtered => k.filtered += 1,
                NodeStatus::Raw if is_moot(pool, c) => k.moot += 1,
                NodeStatus::Raw => k.pending += 1,
                NodeStatus::Accepted => k.accepted += 1,
                NodeStatus::Revised => k.revised += 1,
                NodeStatus::Rejected => k.rejected += 1,
                NodeStatus::Flagged => k.flagged += 1,
            }
        }
        for k in kinds.values_mut() {
            k.retention = retention_rate(k.accepted + k.revised, k.raw).ok();
        }
        ReviewStats {
            kinds,
            annotators: state.tallies.clone(),
        }
    }

    /// Items still awaiting a decision or an expert.
    pub fn outstanding(&self) -> usize {
        outstanding(&self.state.lock().pool)
    }

    pub fn pool_snapshot(&self) -> CandidatePool {
        self.state.lock().pool.clone()
    }

    /// Assembles the graph from the current pool and writes it to the
    /// configured directory, if any.
    pub fn finalize(&self, force: bool) -> Result<Graph, CurationError> {
        let graph = {
            let state = self.state.lock();
            finalize(&state.pool, force)?
        };
        if let Some(dir) = &self.config.graph_dir {
            graph.save(dir)?;
        }
        Ok(graph)
    }
}
