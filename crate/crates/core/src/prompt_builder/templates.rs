use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::PromptError;
use crate::chain_model::{normalize_emotion, EmotionCategory, NodeKind, Polarity, Topic};
use crate::text::as_clause;

const BUILTIN_TEMPLATES: &str = include_str!("../../data/templates.json");

/// One few-shot data-collection prompt: an optional instruction line,
/// verbatim demonstration lines, and query lines carrying `{Event}`,
/// `{Situation}` or `{Thought}` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub kind: NodeKind,
    pub polarity: Option<Polarity>,
    pub topic: Option<Topic>,
    pub instruction: Option<String>,
    pub demonstrations: Vec<String>,
    pub query: Vec<String>,
}

impl PromptTemplate {
    pub fn line_count(&self) -> usize {
        usize::from(self.instruction.is_some()) + self.demonstrations.len() + self.query.len()
    }

    fn check_shape(&self) -> Result<(), PromptError> {
        let (has_instruction, demos, query) = match self.kind {
            NodeKind::Situation => (true, 4, 1),
            NodeKind::Thought | NodeKind::Clue | NodeKind::Action => (true, 3, 1),
            NodeKind::Emotion => (false, 15, 5),
        };
        let shape_ok = self.instruction.is_some() == has_instruction
            && self.demonstrations.len() == demos
            && self.query.len() == query;
        let keys_ok = match self.kind {
            NodeKind::Situation => self.polarity.is_none() && self.topic.is_some(),
            _ => self.polarity.is_some() && self.topic.is_none(),
        };
        if !shape_ok || !keys_ok {
            return Err(PromptError::Template(format!(
                "{} template ({:?}, {:?}) has the wrong shape",
                self.kind, self.polarity, self.topic
            )));
        }
        if self.kind == NodeKind::Emotion {
            let polarity = self.polarity.expect("checked above");
            for line in self.demonstrations.iter().chain(&self.query) {
                if let Some(choices) = parse_choice_line(line) {
                    let mut expected = polarity.emotions().to_vec();
                    let mut got = choices;
                    expected.sort();
                    got.sort();
                    if got != expected {
                        return Err(PromptError::Template(format!(
                            "choice line `{line}` does not list the {polarity} emotions"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// The lines preceding the query, joined with newlines.
    fn preamble(&self) -> String {
        self.instruction
            .iter()
            .chain(&self.demonstrations)
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn render(&self, slots: &[(&str, &str)]) -> String {
        let query: Vec<String> = self.query.iter().map(|l| fill_slots(l, slots)).collect();
        let mut out = self.preamble();
        out.push('\n');
        out.push_str(&query.join("\n"));
        out
    }
}

/// Single-pass `{Name}` substitution; slot values are never re-scanned.
fn fill_slots(line: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(line.len());
    let mut rest = line;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                match slots.iter().find(|(n, _)| *n == name) {
                    Some((_, value)) => out.push_str(value),
                    None => {
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Parses `Choice : A, B, C` into categories.
pub fn parse_choice_line(line: &str) -> Option<Vec<EmotionCategory>> {
    let rest = line.trim().strip_prefix("Choice")?;
    let rest = rest.trim_start().strip_prefix(':')?;
    rest.split(',').map(|c| normalize_emotion(c).ok()).collect()
}

/// The full set of data-collection templates keyed by (kind, polarity, topic).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: Vec<PromptTemplate>,
}

impl TemplateSet {
    /// Templates shipped with the crate.
    pub fn builtin() -> &'static TemplateSet {
        static BUILTIN: OnceLock<TemplateSet> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            TemplateSet::from_json(BUILTIN_TEMPLATES).expect("bundled templates are valid")
        })
    }

    pub fn from_json(json: &str) -> Result<TemplateSet, PromptError> {
        let templates: Vec<PromptTemplate> =
            serde_json::from_str(json).map_err(|e| PromptError::Template(e.to_string()))?;
        let set = TemplateSet { templates };
        set.check_complete()?;
        Ok(set)
    }

    pub fn from_file(path: &Path) -> Result<TemplateSet, PromptError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Self::from_json(&body)
    }

    fn check_complete(&self) -> Result<(), PromptError> {
        for t in &self.templates {
            t.check_shape()?;
        }
        for topic in Topic::ALL {
            self.find(NodeKind::Situation, None, Some(topic))?;
        }
        for kind in [NodeKind::Thought, NodeKind::Clue, NodeKind::Action, NodeKind::Emotion] {
            for polarity in Polarity::ALL {
                self.find(kind, Some(polarity), None)?;
            }
        }
        Ok(())
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }

    pub fn find(
        &self,
        kind: NodeKind,
        polarity: Option<Polarity>,
        topic: Option<Topic>,
    ) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .iter()
            .find(|t| t.kind == kind && t.polarity == polarity && t.topic == topic)
            .ok_or(PromptError::MissingTemplate {
                kind,
                polarity,
                topic,
            })
    }

    fn get(&self, kind: NodeKind, polarity: Option<Polarity>, topic: Option<Topic>) -> &PromptTemplate {
        self.find(kind, polarity, topic)
            .expect("template sets are checked for completeness on construction")
    }

    /// Six-line event-to-situation prompt for `topic`.
    pub fn situation_prompt(&self, topic: Topic, event: &str) -> Result<String, PromptError> {
        require("event", event)?;
        Ok(self
            .get(NodeKind::Situation, None, Some(topic))
            .render(&[("Event", event.trim())]))
    }

    /// Five-line thought prompt ending in `I feel great|terrible since I think`.
    pub fn thought_prompt(&self, situation: &str, polarity: Polarity) -> Result<String, PromptError> {
        require("situation", situation)?;
        Ok(self
            .get(NodeKind::Thought, Some(polarity), None)
            .render(&[("Situation", as_clause(situation))]))
    }

    pub fn clue_prompt(
        &self,
        situation: &str,
        thought: &str,
        polarity: Polarity,
    ) -> Result<String, PromptError> {
        self.clause_prompt(NodeKind::Clue, situation, thought, polarity)
    }

    pub fn action_prompt(
        &self,
        situation: &str,
        thought: &str,
        polarity: Polarity,
    ) -> Result<String, PromptError> {
        self.clause_prompt(NodeKind::Action, situation, thought, polarity)
    }

    fn clause_prompt(
        &self,
        kind: NodeKind,
        situation: &str,
        thought: &str,
        polarity: Polarity,
    ) -> Result<String, PromptError> {
        require("situation", situation)?;
        require("thought", thought)?;
        Ok(self.get(kind, Some(polarity), None).render(&[
            ("Situation", as_clause(situation)),
            ("Thought", as_clause(thought)),
        ]))
    }

    /// Twenty-line multiple-choice emotion prompt ending in `Answer:`.
    pub fn emotion_prompt(
        &self,
        situation: &str,
        thought: &str,
        polarity: Polarity,
    ) -> Result<String, PromptError> {
        require("situation", situation)?;
        require("thought", thought)?;
        Ok(self
            .get(NodeKind::Emotion, Some(polarity), None)
            .render(&[("Situation", situation.trim()), ("Thought", thought.trim())]))
    }

    /// Identifies a prompt built from this set by its preamble.
    pub(super) fn match_preamble(&self, prompt: &str) -> Option<&PromptTemplate> {
        self.templates.iter().find(|t| {
                prompt
                    .strip_prefix(&t.preamble())
                    .is_some_and(|rest| rest.starts_with('\n'))
            })
    }
}

fn require(field: &'static str, value: &str) -> Result<(), PromptError> {
    if value.trim().is_empty() {
        Err(PromptError::MissingField(field))
    } else {
        Ok(())
    }
}
