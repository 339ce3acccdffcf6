//! Vocabulary of cognitive chains: node kinds, polarity, emotions, topics,
//! and the validation rules a chain must satisfy.
//!
//! A chain is the unit `Situation => Clue => Thought => (Action + Emotion)`.
//! Its polarity is anchored to the thought node; clue, action and emotion
//! must agree with it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("unknown emotion `{0}`")]
    UnknownEmotion(String),
    #[error("unknown {what} `{value}`")]
    UnknownName { what: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub const ALL: [Polarity; 2] = [Polarity::Positive, Polarity::Negative];

    /// Three-letter prefix used in control tokens.
    pub fn token_prefix(self) -> &'static str {
        match self {
            Polarity::Positive => "Pos",
            Polarity::Negative => "Neg",
        }
    }

    /// "positive" / "negative".
    pub fn adjective(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        }
    }

    /// The sentiment word used by thought prompts.
    pub fn sentiment_word(self) -> &'static str {
        match self {
            Polarity::Positive => "great",
            Polarity::Negative => "terrible",
        }
    }

    /// The three emotions legal in chains of this polarity, in prompt order.
    pub fn emotions(self) -> [EmotionCategory; 3] {
        match self {
            Polarity::Positive => [
                EmotionCategory::Love,
                EmotionCategory::Surprise,
                EmotionCategory::Joyful,
            ],
            Polarity::Negative => [
                EmotionCategory::Sad,
                EmotionCategory::Angry,
                EmotionCategory::Fearful,
            ],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Polarity::Positive => "Positive",
            Polarity::Negative => "Negative",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Polarity {
    type Err = ChainError;

    /// Accepts "positive", "pos", "+" and the negative counterparts, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "+" => Ok(Polarity::Positive),
            "negative" | "neg" | "-" => Ok(Polarity::Negative),
            _ => Err(ChainError::UnknownName {
                what: "polarity",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EmotionCategory {
    Love,
    Surprise,
    Joyful,
    Sad,
    Angry,
    Fearful,
}

impl EmotionCategory {
    pub const ALL: [EmotionCategory; 6] = [
        EmotionCategory::Love,
        EmotionCategory::Surprise,
        EmotionCategory::Joyful,
        EmotionCategory::Sad,
        EmotionCategory::Angry,
        EmotionCategory::Fearful,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EmotionCategory::Love => "Love",
            EmotionCategory::Surprise => "Surprise",
            EmotionCategory::Joyful => "Joyful",
            EmotionCategory::Sad => "Sad",
            EmotionCategory::Angry => "Angry",
            EmotionCategory::Fearful => "Fearful",
        }
    }

    pub fn polarity(self) -> Polarity {
        polarity_of_emotion(self)
    }
}

impl fmt::Display for EmotionCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionCategory {
    type Err = ChainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize_emotion(s)
    }
}

/// Love, Surprise and Joyful belong to positive chains; the rest to negative ones.
pub fn polarity_of_emotion(emotion: EmotionCategory) -> Polarity {
    match emotion {
        EmotionCategory::Love | EmotionCategory::Surprise | EmotionCategory::Joyful => {
            Polarity::Positive
        }
        EmotionCategory::Sad | EmotionCategory::Angry | EmotionCategory::Fearful => {
            Polarity::Negative
        }
    }
}

/// Maps free text onto the closed emotion set. Matching is case-insensitive
/// after trimming; the prompt spelling "Surprised" folds into `Surprise`.
pub fn normalize_emotion(text: &str) -> Result<EmotionCategory, ChainError> {
    let folded = text.trim().to_lowercase();
    let category = match folded.as_str() {
        "love" => EmotionCategory::Love,
        "surprise" | "surprised" => EmotionCategory::Surprise,
        "joyful" => EmotionCategory::Joyful,
        "sad" => EmotionCategory::Sad,
        "angry" => EmotionCategory::Angry,
        "fearful" => EmotionCategory::Fearful,
        _ => return Err(ChainError::UnknownEmotion(text.to_string())),
    };
    Ok(category)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Topic {
    School,
    Work,
    Tourism,
    Relationship,
    #[serde(rename = "Ordinary Life")]
    OrdinaryLife,
}

impl Topic {
    pub const ALL: [Topic; 5] = [
        Topic::School,
        Topic::Work,
        Topic::Tourism,
        Topic::Relationship,
        Topic::OrdinaryLife,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Topic::School => "School",
            Topic::Work => "Work",
            Topic::Tourism => "Tourism",
            Topic::Relationship => "Relationship",
            Topic::OrdinaryLife => "Ordinary Life",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topic {
    type Err = ChainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
            .collect::<String>()
            .to_lowercase();
        Topic::ALL
            .into_iter()
            .find(|t| t.name().replace(' ', "").to_lowercase() == folded)
            .ok_or_else(|| ChainError::UnknownName {
                what: "topic",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Situation,
    Clue,
    Thought,
    Action,
    Emotion,
}

impl NodeKind {
    pub const ALL: [NodeKind; 5] = [
        NodeKind::Situation,
        NodeKind::Clue,
        NodeKind::Thought,
        NodeKind::Action,
        NodeKind::Emotion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Situation => "Situation",
            NodeKind::Clue => "Clue",
            NodeKind::Thought => "Thought",
            NodeKind::Action => "Action",
            NodeKind::Emotion => "Emotion",
        }
    }

    /// Prefix of store-assigned ids, e.g. `s-000001`.
    pub fn id_prefix(self) -> &'static str {
        match self {
            NodeKind::Situation => "s",
            NodeKind::Clue => "c",
            NodeKind::Thought => "t",
            NodeKind::Action => "a",
            NodeKind::Emotion => "e",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NodeKind {
    type Err = ChainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded = s.trim().to_lowercase();
        NodeKind::ALL
            .into_iter()
            .find(|k| k.name().to_lowercase() == folded)
            .ok_or_else(|| ChainError::UnknownName {
                what: "node kind",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeStatus {
    Raw,
    Accepted,
    Revised,
    Rejected,
    Flagged,
}

impl NodeStatus {
    /// Accepted or Revised: the node survives curation.
    pub fn is_kept(self) -> bool {
        matches!(self, NodeStatus::Accepted | NodeStatus::Revised)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeSource {
    LlmGenerated,
    HumanRevised,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChainId(pub String);

impl ChainId {
    pub fn new(id: impl Into<String>) -> Self {
        ChainId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One node of a cognitive chain. Field order matches the `nodes.jsonl` layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub text: String,
    pub polarity: Option<Polarity>,
    pub topic: Option<Topic>,
    pub status: NodeStatus,
    pub source: NodeSource,
}

impl Node {
    pub fn situation(id: impl Into<String>, text: impl Into<String>, topic: Topic) -> Self {
        Node {
            id: NodeId::new(id),
            kind: NodeKind::Situation,
            text: text.into(),
            polarity: None,
            topic: Some(topic),
            status: NodeStatus::Accepted,
            source: NodeSource::LlmGenerated,
        }
    }

    /// A non-situation node. Emotion nodes should carry the canonical category name.
    pub fn polar(
        id: impl Into<String>,
        kind: NodeKind,
        text: impl Into<String>,
        polarity: Polarity,
    ) -> Self {
        Node {
            id: NodeId::new(id),
            kind,
            text: text.into(),
            polarity: Some(polarity),
            topic: None,
            status: NodeStatus::Accepted,
            source: NodeSource::LlmGenerated,
        }
    }

    pub fn with_status(mut self, status: NodeStatus) -> Self {
        self.status = status;
        self
    }

    /// Checks the per-node invariants.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.text.trim().is_empty() {
            report.push("empty-text", format!("node {} has empty text", self.id));
        }
        let is_situation = self.kind == NodeKind::Situation;
        if is_situation == self.polarity.is_some() {
            report.push(
                "polarity-presence",
                format!(
                    "node {} of kind {} must {}carry a polarity",
                    self.id,
                    self.kind,
                    if is_situation { "not " } else { "" }
                ),
            );
        }
        if is_situation != self.topic.is_some() {
            report.push(
                "topic-presence",
                format!(
                    "node {} of kind {} must {}carry a topic",
                    self.id,
                    self.kind,
                    if is_situation { "" } else { "not " }
                ),
            );
        }
        if self.kind == NodeKind::Emotion {
            match normalize_emotion(&self.text) {
                Ok(emotion) => {
                    if Some(emotion.polarity()) != self.polarity {
                        report.push(
                            "emotion-polarity-mismatch",
                            format!(
                                "emotion node {} labelled {} but carries polarity {:?}",
                                self.id, emotion, self.polarity
                            ),
                        );
                    }
                }
                Err(_) => report.push(
                    "unknown-emotion",
                    format!("emotion node {} text `{}` is not a category", self.id, self.text),
                ),
            }
        }
        report
    }
}

/// A chain tuple. Field order matches the `chains.jsonl` layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CognitiveChain {
    pub chain_id: ChainId,
    pub situation: NodeId,
    pub clue: NodeId,
    pub thought: NodeId,
    pub action: NodeId,
    pub emotion: EmotionCategory,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, rule: &str, message: String) {
        self.violations.push(Violation {
            rule: rule.to_string(),
            message,
        });
    }

    pub fn has_rule(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.rule, v.message)?;
        }
        Ok(())
    }
}

/// Checks every chain invariant, resolving node references through `resolve`.
/// Malformed chains produce a failing report rather than an error.
pub fn validate_chain<'a, F>(chain: &CognitiveChain, resolve: F) -> ValidationReport
where
    F: Fn(&NodeId) -> Option<&'a Node>,
{
    let mut report = ValidationReport::default();
    let slots = [
        ("situation", &chain.situation, NodeKind::Situation),
        ("clue", &chain.clue, NodeKind::Clue),
        ("thought", &chain.thought, NodeKind::Thought),
        ("action", &chain.action, NodeKind::Action),
    ];
    let mut resolved: [Option<&Node>; 4] = [None; 4];
    for (slot, (name, id, kind)) in slots.iter().enumerate() {
        match resolve(id) {
            None => report.push(
                "unresolved-reference",
                format!("chain {} {} reference {} does not resolve", chain.chain_id, name, id),
            ),
            Some(node) => {
                if node.kind != *kind {
                    report.push(
                        "kind-mismatch",
                        format!(
                            "chain {} {} reference {} is a {} node",
                            chain.chain_id, name, id, node.kind
                        ),
                    );
                }
                resolved[slot] = Some(node);
            }
        }
    }

    let [_, clue, thought, action] = resolved;
    if let Some(thought) = thought {
        if thought.polarity != Some(chain.polarity) {
            report.push(
                "thought-polarity-mismatch",
                format!(
                    "chain {} polarity {} differs from thought polarity {:?}",
                    chain.chain_id, chain.polarity, thought.polarity
                ),
            );
        }
    }
    for (name, node) in [("clue", clue), ("action", action)] {
        if let Some(node) = node {
            if node.polarity != Some(chain.polarity) {
                report.push(
                    &format!("{name}-polarity-mismatch"),
                    format!(
                        "chain {} polarity {} differs from {} polarity {:?}",
                        chain.chain_id, chain.polarity, name, node.polarity
                    ),
                );
            }
        }
    }
    if chain.emotion.polarity() != chain.polarity {
        report.push(
            "emotion-polarity-mismatch",
            format!(
                "chain {} emotion {} belongs to {} chains, chain is {}",
                chain.chain_id,
                chain.emotion,
                chain.emotion.polarity(),
                chain.polarity
            ),
        );
    }
    report
}
