//! Candidate generation: events are rewritten into situations, kept
//! situations into thoughts, thoughts into emotions, and kept thoughts into
//! clues and actions. Every step deduplicates and records provenance in a
//! resumable pool.

mod pool;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_model::{normalize_emotion, NodeId, NodeKind, NodeStatus, Polarity, Topic};
use crate::graph_store::StoreError;
use crate::llm_backend::{default_params, generate, Backend, GenerationParams, GenerationRequest, LlmError};
use crate::prompt_builder::{PromptError, TemplateSet};
use crate::text::sha256_hex;

pub use pool::{dedup_filter, jaccard, Admission, Candidate, CandidatePool, Draft, Stage};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("no events to rewrite")]
    NoEvents,
    #[error("{context}: {source}")]
    Backend {
        context: String,
        #[source]
        source: LlmError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("candidate pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// One situation per topic, in topic order; at most 5.
    pub situations_per_event: usize,
    pub thought_rounds_per_polarity: usize,
    pub candidates_per_expansion: usize,
    pub jaccard_dup_threshold: f64,
    pub model: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            situations_per_event: 5,
            thought_rounds_per_polarity: 6,
            candidates_per_expansion: 3,
            jaccard_dup_threshold: 0.9,
            model: crate::llm_backend::DEFAULT_MODEL.to_string(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(1..=Topic::ALL.len()).contains(&self.situations_per_event) {
            return bad(format!(
                "situations_per_event must be in 1..={}, got {}",
                Topic::ALL.len(),
                self.situations_per_event
            ));
        }
        if self.thought_rounds_per_polarity < 1 || self.candidates_per_expansion < 1 {
            return bad("counts must be at least 1".into());
        }
        if !(self.jaccard_dup_threshold > 0.0 && self.jaccard_dup_threshold <= 1.0) {
            return bad(format!(
                "jaccard_dup_threshold must be in (0, 1], got {}",
                self.jaccard_dup_threshold
            ));
        }
        Ok(())
    }

    fn params(&self, kind: NodeKind) -> GenerationParams {
        let mut params = default_params(kind);
        params.model = self.model.clone();
        match kind {
            // One line per round; rounds supply the fan-out.
            NodeKind::Thought => params.with_n(1),
            NodeKind::Clue | NodeKind::Action => {
                let n = self.candidates_per_expansion as u32;
                params.n = n;
                params.best_of = n;
                params
            }
            _ => params,
        }
    }
}

/// Counts from one pipeline run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub generated: BTreeMap<NodeKind, usize>,
    pub duplicates: BTreeMap<NodeKind, usize>,
    pub empty_skipped: BTreeMap<NodeKind, usize>,
    pub flagged: usize,
    pub parents_expanded: usize,
}

impl RunReport {
    fn merge(&mut self, other: RunReport) {
        for (k, v) in other.generated {
            *self.generated.entry(k).or_default() += v;
        }
        for (k, v) in other.duplicates {
            *self.duplicates.entry(k).or_default() += v;
        }
        for (k, v) in other.empty_skipped {
            *self.empty_skipped.entry(k).or_default() += v;
        }
        self.flagged += other.flagged;
        self.parents_expanded += other.parents_expanded;
    }
}

/// Reads an events file: one event per line, blank lines ignored.
pub fn read_events(path: &Path) -> Result<Vec<String>, PipelineError> {
    let body = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(body
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// One prompt call and how to turn its completions into drafts.
struct Call {
    kind: NodeKind,
    polarity: Option<Polarity>,
    topic: Option<Topic>,
    parent_ids: Vec<NodeId>,
    request: GenerationRequest,
}

/// All calls for one (parent, stage); recorded as expanded only if every call succeeds.
struct Job {
    parent: String,
    stage: Stage,
    context: String,
    calls: Vec<Call>,
}

struct JobOutput {
    drafts: Vec<Draft>,
    empty: BTreeMap<NodeKind, usize>,
}

pub struct Pipeline<'a> {
    backend: &'a dyn Backend,
    templates: &'a TemplateSet,
    config: PipelineConfig,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        backend: &'a dyn Backend,
        templates: &'a TemplateSet,
        config: PipelineConfig,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Pipeline {
            backend,
            templates,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// One situation per topic for every event not already rewritten.
    pub fn rewrite_events(&self, pool: &mut CandidatePool, events: &[String]) -> Result<RunReport, PipelineError> {
        if events.is_empty() {
            return Err(PipelineError::NoEvents);
        }
        let mut jobs = Vec::new();
        for event in events {
            let parent = format!("event:{}", sha256_hex(event.trim()));
            if pool.is_expanded(&parent, Stage::Situations) {
                continue;
            }
            let mut calls = Vec::new();
            for topic in Topic::ALL.into_iter().take(self.config.situations_per_event) {
                let prompt = self.templates.situation_prompt(topic, event)?;
                calls.push(Call {
                    kind: NodeKind::Situation,
                    polarity: None,
                    topic: Some(topic),
                    parent_ids: vec![],
                    request: GenerationRequest::new(prompt, self.config.params(NodeKind::Situation)),
                });
            }
            jobs.push(Job {
                parent,
                stage: Stage::Situations,
                context: format!("rewriting event `{event}`"),
                calls,
            });
        }
        self.run(pool, jobs)
    }

    /// Runs every pending expansion: thoughts for kept situations, emotions
    /// for every live thought, clues and actions for kept thoughts.
    pub fn expand(&self, pool: &mut CandidatePool) -> Result<RunReport, PipelineError> {
        let mut report = self.expand_situations(pool)?;
        report.merge(self.expand_emotions(pool)?);
        report.merge(self.expand_thoughts(pool)?);
        Ok(report)
    }

    pub fn expand_situations(&self, pool: &mut CandidatePool) -> Result<RunReport, PipelineError> {
        let mut jobs = Vec::new();
        for s in pool.of_kind(NodeKind::Situation) {
            if !s.status.is_kept() || pool.is_expanded(s.id.as_str(), Stage::Thoughts) {
                continue;
            }
            let mut calls = Vec::new();
            for polarity in Polarity::ALL {
                let prompt = self.templates.thought_prompt(&s.text, polarity)?;
                for round in 0..self.config.thought_rounds_per_polarity {
                    calls.push(Call {
                        kind: NodeKind::Thought,
                        polarity: Some(polarity),
                        topic: None,
                        parent_ids: vec![s.id.clone()],
                        request: GenerationRequest::new(prompt.clone(), self.config.params(NodeKind::Thought))
                            .with_round(round as u32),
                    });
                }
            }
            jobs.push(Job {
                parent: s.id.to_string(),
                stage: Stage::Thoughts,
                context: format!("expanding situation {}", s.id),
                calls,
            });
        }
        self.run(pool, jobs)
    }

    /// One emotion label per thought that has not been rejected, whether or
    /// not it has been reviewed yet.
    pub fn expand_emotions(&self, pool: &mut CandidatePool) -> Result<RunReport, PipelineError> {
        let mut jobs = Vec::new();
        for t in pool.of_kind(NodeKind::Thought) {
            if t.auto_filtered
                || t.status == NodeStatus::Rejected
                || pool.is_expanded(t.id.as_str(), Stage::Emotion)
            {
                continue;
            }
            let Some(situation) = self.kept_parent(pool, t) else { continue };
            let polarity = t.polarity.expect("thought candidates carry a polarity");
            let prompt = self.templates.emotion_prompt(&situation.text, &t.text, polarity)?;
            jobs.push(Job {
                parent: t.id.to_string(),
                stage: Stage::Emotion,
                context: format!("labelling thought {}", t.id),
                calls: vec![Call {
                    kind: NodeKind::Emotion,
                    polarity: Some(polarity),
                    topic: None,
                    parent_ids: vec![situation.id.clone(), t.id.clone()],
                    request: GenerationRequest::new(prompt, self.config.params(NodeKind::Emotion)),
                }],
            });
        }
        self.run(pool, jobs)
    }

    /// Clues and actions for every kept thought under a kept situation.
    pub fn expand_thoughts(&self, pool: &mut CandidatePool) -> Result<RunReport, PipelineError> {
        let mut jobs = Vec::new();
        for t in pool.of_kind(NodeKind::Thought) {
            if !t.status.is_kept() || pool.is_expanded(t.id.as_str(), Stage::Details) {
                continue;
            }
            let Some(situation) = self.kept_parent(pool, t) else { continue };
            let polarity = t.polarity.expect("thought candidates carry a polarity");
            let parent_ids = vec![situation.id.clone(), t.id.clone()];
            let clue = self.templates.clue_prompt(&situation.text, &t.text, polarity)?;
            let action = self.templates.action_prompt(&situation.text, &t.text, polarity)?;
            let calls = [(NodeKind::Clue, clue), (NodeKind::Action, action)]
                .into_iter()
                .map(|(kind, prompt)| Call {
                    kind,
                    polarity: Some(polarity),
                    topic: None,
                    parent_ids: parent_ids.clone(),
                    request: GenerationRequest::new(prompt, self.config.params(kind)),
                })
                .collect();
            jobs.push(Job {
                parent: t.id.to_string(),
                stage: Stage::Details,
                context: format!("expanding thought {}", t.id),
                calls,
            });
        }
        self.run(pool, jobs)
    }

    fn kept_parent<'p>(&self, pool: &'p CandidatePool, c: &Candidate) -> Option<&'p Candidate> {
        pool.get(c.parent_ids.first()?).filter(|s| s.status.is_kept())
    }

    fn run_job(&self, job: &Job) -> Result<JobOutput, PipelineError> {
        let mut out = JobOutput {
            drafts: Vec::new(),
            empty: BTreeMap::new(),
        };
        for call in &job.calls {
            let prompt_sha256 = sha256_hex(&call.request.prompt);
            let n = call.request.params.n as usize;
            let completions = match generate(self.backend, &call.request) {
                Ok(result) => result.completions,
                Err(LlmError::EmptyCompletion) => vec![String::new(); n],
                Err(source) => {
                    return Err(PipelineError::Backend {
                        context: job.context.clone(),
                        source,
                    })
                }
            };
            for (index, text) in completions.into_iter().enumerate() {
                if text.is_empty() {
                    tracing::warn!(context = %job.context, index, "skipping empty completion");
                    *out.empty.entry(call.kind).or_default() += 1;
                    continue;
                }
                let (text, status) = match (call.kind, call.polarity) {
                    (NodeKind::Emotion, Some(polarity)) => match normalize_emotion(&text) {
                        Ok(e) if e.polarity() == polarity => (e.name().to_string(), NodeStatus::Raw),
                        _ => (text, NodeStatus::Flagged),
                    },
                    _ => (text, NodeStatus::Raw),
                };
                out.drafts.push(Draft {
                    kind: call.kind,
                    text,
                    polarity: call.polarity,
                    topic: call.topic,
                    status,
                    parent_ids: call.parent_ids.clone(),
                    prompt_sha256: prompt_sha256.clone(),
                    completion_index: index as u32,
                    round: call.request.round,
                });
            }
        }
        Ok(out)
    }

    /// Generates in parallel, then admits results in job order so ids and
    /// dedup outcomes do not depend on scheduling. Jobs that fail are left
    /// unexpanded; the first failure is returned after the rest are stored.
    fn run(&self, pool: &mut CandidatePool, jobs: Vec<Job>) -> Result<RunReport, PipelineError> {
        let outputs: Vec<Result<JobOutput, PipelineError>> =
            jobs.par_iter().map(|job| self.run_job(job)).collect();
        let mut report = RunReport::default();
        let mut first_error = None;
        for (job, output) in jobs.iter().zip(outputs) {
            let output = match output {
                Ok(o) => o,
                Err(e) => {
                    tracing::error!(error = %e, "generation failed");
                    first_error.get_or_insert(e);
                    continue;
                }
            };
            for (kind, n) in output.empty {
                *report.empty_skipped.entry(kind).or_default() += n;
            }
            let expected = job.calls.iter().map(|c| c.request.params.n as usize).sum::<usize>();
            let mut kept = 0;
            for draft in output.drafts {
                let kind = draft.kind;
                *report.generated.entry(kind).or_default() += 1;
                if draft.status == NodeStatus::Flagged {
                    report.flagged += 1;
                }
                match pool.admit(draft, self.config.jaccard_dup_threshold) {
                    Admission::Kept => kept += 1,
                    Admission::Duplicate => *report.duplicates.entry(kind).or_default() += 1,
                }
            }
            if kept < expected {
                tracing::info!(context = %job.context, kept, expected, "fewer candidates than requested");
            }
            pool.mark_expanded(&job.parent, job.stage);
            report.parents_expanded += 1;
        }
        match first_error {
            Some(e) => Err(e),
            None => Ok(report),
        }
    }
}
