//! Support-dialogue context augmentation: the latest user utterance is taken
//! as a clue, one thought and one action are generated per polarity, and verb
//! and noun keywords from them are appended to the dialogue history.
//!
//! The built-in tagger is a heuristic: closed-class stopwords and auxiliaries
//! are dropped, a verb lexicon (with regular inflections) marks verbs,
//! adjectives are recognized by a short list and by suffix, and any remaining
//! open-class word counts as a noun.

mod tagger;

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_model::Polarity;
use crate::graph_store::{read_jsonl, write_jsonl, StoreError};
use crate::inference::{run_stage, InferenceError};
use crate::llm_backend::Backend;
use crate::prompt_builder::SampleFields;
use crate::task_builder::TaskKind;
use crate::text::tokenize;

pub use tagger::{is_stopword, HeuristicTagger, Tagger, WordClass};

#[derive(Debug, Error)]
pub enum EscError {
    #[error("dialogue has no user turn")]
    NoUserTurn,
    #[error("dialogue situation is empty")]
    EmptySituation,
    #[error(transparent)]
    Generation(#[from] InferenceError),
    #[error("dialogue {dialogue_id}: {source}")]
    InDialogue {
        dialogue_id: String,
        #[source]
        source: Box<EscError>,
    },
    #[error(transparent)]
    Io(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    #[serde(alias = "User", alias = "seeker", alias = "usr")]
    User,
    #[serde(alias = "System", alias = "supporter", alias = "sys")]
    System,
}

impl Speaker {
    fn label(self) -> &'static str {
        match self {
            Speaker::User => "USER",
            Speaker::System => "SYSTEM",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_id: Option<String>,
    pub situation: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// `SITUATION:` line followed by one `USER:` / `SYSTEM:` line per turn.
    pub fn history(&self) -> String {
        let mut lines = vec![format!("SITUATION: {}", self.situation.trim())];
        lines.extend(
            self.turns
                .iter()
                .map(|t| format!("{}: {}", t.speaker.label(), t.text.trim())),
        );
        lines.join("\n")
    }

    pub fn latest_user_turn(&self) -> Option<&Turn> {
        self.turns.iter().rev().find(|t| t.speaker == Speaker::User)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeywordSource {
    #[default]
    Thoughts,
    Actions,
}

impl std::str::FromStr for KeywordSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "thoughts" | "thought" => Ok(KeywordSource::Thoughts),
            "actions" | "action" => Ok(KeywordSource::Actions),
            other => Err(format!("unknown keyword source `{other}` (expected thoughts or actions)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscConfig {
    pub source: KeywordSource,
    /// Placed between the history and the keyword list.
    pub separator: String,
    /// Control-token index used when the backend takes encoded inputs.
    pub token_index: u8,
}

impl Default for EscConfig {
    fn default() -> Self {
        EscConfig {
            source: KeywordSource::Thoughts,
            separator: "\n".to_string(),
            token_index: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generated {
    pub polarity: Polarity,
    pub thought: String,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedContext {
    pub history: String,
    pub keywords: Vec<String>,
    pub enhanced_context: String,
    /// Positive branch first.
    pub generated: Vec<Generated>,
}

/// Verb and noun tokens in first-occurrence order, case-folded, without
/// duplicates or stopwords.
pub fn extract_keywords<S: AsRef<str>>(texts: &[S], tagger: &dyn Tagger) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for text in texts {
        // Punctuation inside a token would corrupt the comma-joined list.
        let spaced: String = text
            .as_ref()
            .chars()
            .map(|c| if c.is_alphanumeric() || c == '\'' || c == '-' || c.is_whitespace() { c } else { ' ' })
            .collect();
        let tokens = tokenize(&spaced);
        for (i, token) in tokens.iter().enumerate() {
            if is_stopword(token) || !matches!(tagger.tag(&tokens, i), WordClass::Verb | WordClass::Noun) {
                continue;
            }
            if seen.insert(token.clone()) {
                out.push(token.clone());
            }
        }
    }
    out
}

fn branch(
    situation: &str,
    clue: &str,
    polarity: Polarity,
    backend: &dyn Backend,
    config: &EscConfig,
) -> Result<Generated, EscError> {
    let base = SampleFields::situation(situation);
    let (thought, _) = run_stage(
        backend,
        TaskKind::ThoughtGen,
        polarity,
        &base.clone().with_clue(clue),
        config.token_index,
        0,
    )?;
    let (action, _) = run_stage(
        backend,
        TaskKind::ActionGen,
        polarity,
        &base.with_thought(thought.as_str()),
        config.token_index,
        0,
    )?;
    Ok(Generated { polarity, thought, action })
}

/// Four generation calls: a thought then an action for each polarity. The two
/// polarity branches run in parallel.
pub fn augment_dialogue_with(
    dialogue: &Dialogue,
    backend: &dyn Backend,
    config: &EscConfig,
    tagger: &dyn Tagger,
) -> Result<AugmentedContext, EscError> {
    let situation = dialogue.situation.trim();
    if situation.is_empty() {
        return Err(EscError::EmptySituation);
    }
    let clue = dialogue.latest_user_turn().ok_or(EscError::NoUserTurn)?.text.trim();
    if clue.is_empty() {
        return Err(EscError::NoUserTurn);
    }
    let (positive, negative) = rayon::join(
        || branch(situation, clue, Polarity::Positive, backend, config),
        || branch(situation, clue, Polarity::Negative, backend, config),
    );
    let generated = vec![positive?, negative?];
    let sources: Vec<&str> = generated
        .iter()
        .map(|g| match config.source {
            KeywordSource::Thoughts => g.thought.as_str(),
            KeywordSource::Actions => g.action.as_str(),
        })
        .collect();
    let keywords = extract_keywords(&sources, tagger);
    let history = dialogue.history();
    let enhanced_context = format!("{history}{}{}", config.separator, keywords.join(","));
    Ok(AugmentedContext {
        history,
        keywords,
        enhanced_context,
        generated,
    })
}

pub fn augment_dialogue(dialogue: &Dialogue, backend: &dyn Backend, config: &EscConfig) -> Result<AugmentedContext, EscError> {
    augment_dialogue_with(dialogue, backend, config, &HeuristicTagger)
}

/// One line of augmentation output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscRecord {
    pub dialogue_id: String,
    pub keywords: Vec<String>,
    pub enhanced_context: String,
}

/// Augments every dialogue, in parallel, keeping input order. Dialogues
/// without an id are numbered by their 1-based line.
pub fn augment_all(dialogues: &[Dialogue], backend: &dyn Backend, config: &EscConfig) -> Result<Vec<EscRecord>, EscError> {
    dialogues
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let dialogue_id = d.dialogue_id.clone().unwrap_or_else(|| (i + 1).to_string());
            match augment_dialogue(d, backend, config) {
                Ok(ctx) => Ok(EscRecord {
                    dialogue_id,
                    keywords: ctx.keywords,
                    enhanced_context: ctx.enhanced_context,
                }),
                Err(e) => Err(EscError::InDialogue {
                    dialogue_id,
                    source: Box::new(e),
                }),
            }
        })
        .collect()
}

pub fn read_dialogues(path: &Path) -> Result<Vec<Dialogue>, EscError> {
    Ok(read_jsonl(path)?)
}

pub fn write_records(path: &Path, records: &[EscRecord]) -> Result<(), EscError> {
    Ok(write_jsonl(path, records)?)
}
