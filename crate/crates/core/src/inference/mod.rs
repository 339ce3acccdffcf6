//! Restoring full cognitive chains for a situation, either by linking it to a
//! similar stored situation or by running the four generation stages.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_model::{
    normalize_emotion, validate_chain, ChainId, CognitiveChain, EmotionCategory, Node, NodeId,
    NodeKind, Polarity, ValidationReport,
};
use crate::graph_store::{write_jsonl, Graph, StoreError, CHAINS_FILE, NODES_FILE};
use crate::llm_backend::{default_params, generate, Backend, BackendCapability, GenerationRequest, LlmError};
use crate::prompt_builder::{build_test_prompt, encode_input, PromptError, SampleFields};
use crate::task_builder::TaskKind;
use crate::text::sha256_hex;

pub const PROVENANCE_FILE: &str = "provenance.jsonl";

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid inference config: {0}")]
    Config(String),
    #[error("situation text is empty")]
    EmptySituation,
    #[error("stage {stage} failed: {source}")]
    StageFailure {
        stage: TaskKind,
        #[source]
        source: LlmError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("answer `{answer}` does not resolve to a {polarity} emotion")]
    EmotionUnresolvable { answer: String, polarity: Polarity },
    #[error("inferred chain is invalid: {0}")]
    InvalidChain(ValidationReport),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EmotionMode {
    /// The answer must name one of the polarity's three labels.
    #[default]
    ConstrainedChoice,
    /// The first polarity label found anywhere in the answer, case-insensitively.
    NearestLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub similarity_threshold: f64,
    pub emotion_mode: EmotionMode,
    /// Control-token index used when the backend takes encoded inputs.
    pub token_index: u8,
    pub chains_per_polarity: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            similarity_threshold: 0.35,
            emotion_mode: EmotionMode::ConstrainedChoice,
            token_index: 1,
            chains_per_polarity: 1,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(InferenceError::Config(format!(
                "similarity_threshold {} is outside [0, 1]",
                self.similarity_threshold
            )));
        }
        if !(1..=3).contains(&self.token_index) {
            return Err(InferenceError::Config(format!("token_index {} is outside 1..=3", self.token_index)));
        }
        if self.chains_per_polarity == 0 {
            return Err(InferenceError::Config("chains_per_polarity must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InferenceMode {
    Linked,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageProvenance {
    pub stage: TaskKind,
    pub prompt_sha256: String,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferredChain {
    pub mode: InferenceMode,
    pub chain: CognitiveChain,
    /// Situation, clue, thought and action nodes the chain refers to.
    pub nodes: Vec<Node>,
    /// One entry per generation stage; empty for linked chains.
    pub provenance: Vec<StageProvenance>,
    /// Similarity of the linked stored situation, when linking was attempted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

impl InferredChain {
    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn text_of(&self, kind: NodeKind) -> Option<&str> {
        let id = match kind {
            NodeKind::Situation => &self.chain.situation,
            NodeKind::Clue => &self.chain.clue,
            NodeKind::Thought => &self.chain.thought,
            NodeKind::Action => &self.chain.action,
            NodeKind::Emotion => return Some(self.chain.emotion.name()),
        };
        self.node(id).map(|n| n.text.as_str())
    }

    pub fn validate(&self) -> ValidationReport {
        validate_chain(&self.chain, |id| self.node(id))
    }
}

fn stage_input(
    backend: &dyn Backend,
    task: TaskKind,
    polarity: Polarity,
    fields: &SampleFields,
    token_index: u8,
) -> Result<String, PromptError> {
    match backend.capability() {
        BackendCapability::RawLm => build_test_prompt(task, polarity, fields),
        BackendCapability::ControlTokens => encode_input(task, polarity, fields, token_index),
    }
}

/// Runs one generation stage with a single completion and records its provenance.
pub(crate) fn run_stage(
    backend: &dyn Backend,
    task: TaskKind,
    polarity: Polarity,
    fields: &SampleFields,
    token_index: u8,
    round: u32,
) -> Result<(String, StageProvenance), InferenceError> {
    let input = stage_input(backend, task, polarity, fields, token_index)?;
    let params = default_params(task.output_kind()).with_n(1);
    let request = GenerationRequest::new(input.as_str(), params).with_round(round);
    let result =
        generate(backend, &request).map_err(|source| InferenceError::StageFailure { stage: task, source })?;
    let text = result.completions.into_iter().next().unwrap_or_default();
    if text.is_empty() {
        return Err(InferenceError::StageFailure {
            stage: task,
            source: LlmError::EmptyCompletion,
        });
    }
    let provenance = StageProvenance {
        stage: task,
        prompt_sha256: sha256_hex(&input),
        backend: result.backend,
    };
    Ok((text, provenance))
}

struct Stages<'a> {
    backend: &'a dyn Backend,
    polarity: Polarity,
    config: &'a InferenceConfig,
    round: u32,
    provenance: Vec<StageProvenance>,
}

impl Stages<'_> {
    fn run(&mut self, task: TaskKind, fields: &SampleFields) -> Result<String, InferenceError> {
        let (text, provenance) =
            run_stage(self.backend, task, self.polarity, fields, self.config.token_index, self.round)?;
        self.provenance.push(provenance);
        Ok(text)
    }
}

/// Maps a free-text emotion answer onto the polarity's label set.
pub fn resolve_emotion(answer: &str, polarity: Polarity, mode: EmotionMode) -> Result<EmotionCategory, InferenceError> {
    let allowed = polarity.emotions();
    let unresolvable = || InferenceError::EmotionUnresolvable {
        answer: answer.to_string(),
        polarity,
    };
    let exact = normalize_emotion(answer.trim().trim_end_matches(['.', '!']))
        .ok()
        .filter(|e| allowed.contains(e));
    match mode {
        EmotionMode::ConstrainedChoice => exact.ok_or_else(unresolvable),
        EmotionMode::NearestLabel => {
            if let Some(e) = exact {
                return Ok(e);
            }
            let folded = answer.to_lowercase();
            allowed
                .iter()
                .filter_map(|e| folded.find(&e.name().to_lowercase()).map(|pos| (pos, *e)))
                .min()
                .map(|(_, e)| e)
                .ok_or_else(unresolvable)
        }
    }
}

fn generated_chain_id(situation: &str, polarity: Polarity, round: u32) -> String {
    let digest = sha256_hex(&format!("{}\u{1f}{}\u{1f}{}", situation.trim(), polarity.name(), round));
    format!("gen-{}", &digest[..12])
}

fn infer_round(
    situation: &str,
    polarity: Polarity,
    backend: &dyn Backend,
    config: &InferenceConfig,
    round: u32,
) -> Result<InferredChain, InferenceError> {
    let situation = situation.trim();
    if situation.is_empty() {
        return Err(InferenceError::EmptySituation);
    }
    let mut stages = Stages {
        backend,
        polarity,
        config,
        round,
        provenance: Vec::with_capacity(4),
    };
    let base = SampleFields::situation(situation);
    let clue = stages.run(TaskKind::ClueGen, &base)?;
    let thought = stages.run(TaskKind::ThoughtGen, &base.clone().with_clue(clue.as_str()))?;
    let with_thought = base.with_thought(thought.as_str());
    let action = stages.run(TaskKind::ActionGen, &with_thought)?;
    let answer = stages.run(TaskKind::EmotionCls, &with_thought)?;
    let emotion = resolve_emotion(&answer, polarity, config.emotion_mode)?;

    let chain_id = generated_chain_id(situation, polarity, round);
    let id = |slot: &str| NodeId::new(format!("{chain_id}/{slot}"));
    let mut situation_node = Node::polar(id("situation").0, NodeKind::Situation, situation, polarity);
    // Query situations have neither polarity nor a known topic.
    situation_node.polarity = None;
    let nodes = vec![
        situation_node,
        Node::polar(id("clue").0, NodeKind::Clue, clue, polarity),
        Node::polar(id("thought").0, NodeKind::Thought, thought, polarity),
        Node::polar(id("action").0, NodeKind::Action, action, polarity),
    ];
    let inferred = InferredChain {
        mode: InferenceMode::Generated,
        chain: CognitiveChain {
            chain_id: ChainId::new(chain_id.as_str()),
            situation: id("situation"),
            clue: id("clue"),
            thought: id("thought"),
            action: id("action"),
            emotion,
            polarity,
        },
        nodes,
        provenance: stages.provenance,
        similarity: None,
    };
    let report = inferred.validate();
    if !report.ok() {
        return Err(InferenceError::InvalidChain(report));
    }
    Ok(inferred)
}

/// Runs the clue, thought, action and emotion stages in order, each feeding
/// the next as literal text.
pub fn infer_chain(
    situation: &str,
    polarity: Polarity,
    backend: &dyn Backend,
    config: &InferenceConfig,
) -> Result<InferredChain, InferenceError> {
    config.validate()?;
    infer_round(situation, polarity, backend, config, 0)
}

/// `config.chains_per_polarity` independent generated chains, inferred in parallel.
pub fn infer_chains(
    situation: &str,
    polarity: Polarity,
    backend: &dyn Backend,
    config: &InferenceConfig,
) -> Result<Vec<InferredChain>, InferenceError> {
    config.validate()?;
    (0..config.chains_per_polarity as u32)
        .into_par_iter()
        .map(|round| infer_round(situation, polarity, backend, config, round))
        .collect()
}

fn linked(graph: &Graph, chain: &CognitiveChain, score: f64) -> InferredChain {
    let nodes = [&chain.situation, &chain.clue, &chain.thought, &chain.action]
        .into_iter()
        .filter_map(|id| graph.node(id).cloned())
        .collect();
    InferredChain {
        mode: InferenceMode::Linked,
        chain: chain.clone(),
        nodes,
        provenance: Vec::new(),
        similarity: Some(score),
    }
}

/// Stored chains of the most similar situation when it clears the threshold,
/// otherwise freshly generated ones. A linked situation with no chains of the
/// requested polarity also falls through to generation.
pub fn lookup_or_infer(
    graph: &Graph,
    situation: &str,
    polarity: Polarity,
    backend: &dyn Backend,
    config: &InferenceConfig,
) -> Result<Vec<InferredChain>, InferenceError> {
    config.validate()?;
    if situation.trim().is_empty() {
        return Err(InferenceError::EmptySituation);
    }
    let mut best_score = None;
    if graph.situation_count() > 0 {
        if let Some(hit) = graph.link_similar_situations(situation, 1)?.into_iter().next() {
            best_score = Some(hit.score);
            if hit.score >= config.similarity_threshold {
                let chains = graph.query_chains(&hit.situation, Some(polarity))?;
                if !chains.is_empty() {
                    return Ok(chains.into_iter().map(|c| linked(graph, c, hit.score)).collect());
                }
            }
        }
    }
    let mut generated = infer_chains(situation, polarity, backend, config)?;
    for chain in &mut generated {
        chain.similarity = best_score;
    }
    Ok(generated)
}

/// Writes inferred chains as `nodes.jsonl` + `chains.jsonl`, with per-stage
/// provenance in a `provenance.jsonl` sidecar.
pub fn save_inferred(dir: &Path, chains: &[InferredChain]) -> Result<(), StoreError> {
    std::fs::create_dir_all(dir).map_err(|source| StoreError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut seen = std::collections::HashSet::new();
    let nodes: Vec<&Node> = chains
        .iter()
        .flat_map(|c| &c.nodes)
        .filter(|n| seen.insert(n.id.clone()))
        .collect();
    write_jsonl(&dir.join(NODES_FILE), nodes)?;
    write_jsonl(&dir.join(CHAINS_FILE), chains.iter().map(|c| &c.chain))?;
    write_jsonl(
        &dir.join(PROVENANCE_FILE),
        chains.iter().map(|c| {
            serde_json::json!({
                "chain_id": c.chain.chain_id,
                "mode": c.mode,
                "similarity": c.similarity,
                "stages": c.provenance,
            })
        }),
    )
}
