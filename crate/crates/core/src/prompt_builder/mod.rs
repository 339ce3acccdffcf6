//! Prompt construction: few-shot data-collection prompts, zero-shot test
//! prompts for raw language models, and control-token inputs for fine-tuned ones.

mod control;
mod templates;

use thiserror::Error;

use crate::chain_model::{NodeKind, Polarity, Topic};
use crate::task_builder::TaskKind;
use crate::text::as_clause;

pub use control::{
    encode_input, encode_training_sample, parse_encoded_input, ControlToken, EncodedSample,
    ParsedInput, SampleFields,
};
pub use templates::{parse_choice_line, PromptTemplate, TemplateSet};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("invalid template: {0}")]
    Template(String),
    #[error("no {kind} template for polarity {polarity:?}, topic {topic:?}")]
    MissingTemplate {
        kind: NodeKind,
        polarity: Option<Polarity>,
        topic: Option<Topic>,
    },
    #[error("required field `{0}` is missing or blank")]
    MissingField(&'static str),
    #[error("field `{0}` does not belong to this task")]
    UnexpectedField(&'static str),
    #[error("field `{0}` contains a square bracket")]
    BracketInField(&'static str),
    #[error("control-token index {0} is outside 1..=3")]
    InvalidTokenIndex(u8),
    #[error("malformed encoded input: {0}")]
    MalformedEncoding(String),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
}

/// Zero-shot prompt used to query a model that has no control tokens.
pub fn build_test_prompt(
    task: TaskKind,
    polarity: Polarity,
    fields: &SampleFields,
) -> Result<String, PromptError> {
    // Reuse the control-token validation for required/extra fields.
    encode_input(task, polarity, fields, 1)?;
    let situation = as_clause(fields.situation.as_deref().unwrap_or_default());
    let adjective = polarity.adjective();
    Ok(match task {
        TaskKind::ClueGen => format!(
            "Complete the sentence with the {adjective} clue:\nWhen {situation}, I think {adjective}ly since"
        ),
        TaskKind::ThoughtGen => format!(
            "Complete the sentence with the {adjective} thought:\nWhen {situation} and {}, I feel {} since I think",
            as_clause(fields.clue.as_deref().unwrap_or_default()),
            polarity.sentiment_word()
        ),
        TaskKind::ActionGen => format!(
            "Complete the sentence with the {adjective} action:\nWhen {situation}, I think {}, so",
            as_clause(fields.thought.as_deref().unwrap_or_default())
        ),
        TaskKind::EmotionCls => {
            let labels: Vec<&str> = polarity.emotions().iter().map(|e| e.name()).collect();
            format!(
                "Choose one word from {{{}}} to describe the given situation:\nWhen {situation}, I think {}.",
                labels.join(", "),
                as_clause(fields.thought.as_deref().unwrap_or_default())
            )
        }
    })
}

/// What a prompt asks for, as recovered from its text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptClass {
    pub kind: NodeKind,
    pub polarity: Option<Polarity>,
    pub topic: Option<Topic>,
    /// Source event for situation prompts.
    pub event: Option<String>,
}

impl PromptClass {
    fn new(kind: NodeKind, polarity: Option<Polarity>) -> Self {
        PromptClass {
            kind,
            polarity,
            topic: None,
            event: None,
        }
    }
}

/// Recognizes control-token inputs, test prompts and data prompts built from `templates`.
pub fn classify_prompt(prompt: &str, templates: &TemplateSet) -> Option<PromptClass> {
    let trimmed = prompt.trim_end();
    if trimmed.ends_with(']') {
        if let Ok(parsed) = parse_encoded_input(trimmed) {
            return Some(PromptClass::new(parsed.task.output_kind(), Some(parsed.polarity)));
        }
    }
    let first = trimmed.lines().next().unwrap_or_default();
    if let Some(rest) = first.strip_prefix("Complete the sentence with the ") {
        let (adjective, what) = rest.strip_suffix(':')?.split_once(' ')?;
        let polarity = Polarity::ALL.into_iter().find(|p| p.adjective() == adjective)?;
        let kind = match what {
            "clue" => NodeKind::Clue,
            "thought" => NodeKind::Thought,
            "action" => NodeKind::Action,
            _ => return None,
        };
        return Some(PromptClass::new(kind, Some(polarity)));
    }
    if let Some(rest) = first.strip_prefix("Choose one word from {") {
        let labels = rest.split_once('}')?.0;
        let polarity = crate::chain_model::normalize_emotion(labels.split(',').next()?)
            .ok()?
            .polarity();
        return Some(PromptClass::new(NodeKind::Emotion, Some(polarity)));
    }
    let template = templates.match_preamble(trimmed)?;
    let mut class = PromptClass::new(template.kind, template.polarity);
    class.topic = template.topic;
    if template.kind == NodeKind::Situation {
        let last = trimmed.lines().last()?;
        let event = last
            .strip_prefix("[Sentence] ")?
            .strip_suffix("=> [Situation]")?
            .trim();
        class.event = Some(event.to_string());
    }
    Some(class)
}
