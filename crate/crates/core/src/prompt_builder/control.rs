//! Control-token encoding for multi-task training and inference inputs.
//!
//! Inputs follow the task flows:
//!
//! | task       | input                                   | target  |
//! |------------|-----------------------------------------|---------|
//! | ClueGen    | `S [XClueN]`                            | clue    |
//! | ThoughtGen | `S [XClueN] C [XThoughtN]`              | thought |
//! | ActionGen  | `S [XThoughtN] T [XActionN]`            | action  |
//! | EmotionCls | `S [XThoughtN] T [XEmotionN]`           | emotion |
//!
//! with `X` = `Pos`/`Neg` and `N` in 1..=3.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PromptError;
use crate::chain_model::{normalize_emotion, Polarity};
use crate::task_builder::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ControlToken {
    pub task: TaskKind,
    pub polarity: Polarity,
    pub index: u8,
}

impl ControlToken {
    pub fn new(task: TaskKind, polarity: Polarity, index: u8) -> Result<Self, PromptError> {
        check_index(index)?;
        Ok(ControlToken {
            task,
            polarity,
            index,
        })
    }
}

impl fmt::Display for ControlToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}{}{}]",
            self.polarity.token_prefix(),
            self.task.output_label(),
            self.index
        )
    }
}

impl FromStr for ControlToken {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || PromptError::MalformedEncoding(format!("`{s}` is not a control token"));
        let inner = s
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(malformed)?;
        let (polarity, rest) = if let Some(rest) = inner.strip_prefix("Pos") {
            (Polarity::Positive, rest)
        } else if let Some(rest) = inner.strip_prefix("Neg") {
            (Polarity::Negative, rest)
        } else {
            return Err(malformed());
        };
        let task = TaskKind::ALL
            .into_iter()
            .find(|t| rest.starts_with(t.output_label()))
            .ok_or_else(malformed)?;
        let digits = &rest[task.output_label().len()..];
        let index = match digits {
            "1" => 1,
            "2" => 2,
            "3" => 3,
            _ => return Err(malformed()),
        };
        Ok(ControlToken {
            task,
            polarity,
            index,
        })
    }
}

fn check_index(index: u8) -> Result<(), PromptError> {
    if (1..=3).contains(&index) {
        Ok(())
    } else {
        Err(PromptError::InvalidTokenIndex(index))
    }
}

/// Input-side text of a task sample. Only the fields a task's flow reads may be set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleFields {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub situation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clue: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought: Option<String>,
}

impl SampleFields {
    pub fn situation(situation: impl Into<String>) -> Self {
        SampleFields {
            situation: Some(situation.into()),
            ..Default::default()
        }
    }

    pub fn with_clue(mut self, clue: impl Into<String>) -> Self {
        self.clue = Some(clue.into());
        self
    }

    pub fn with_thought(mut self, thought: impl Into<String>) -> Self {
        self.thought = Some(thought.into());
        self
    }

    /// (situation, middle) for the task, failing on missing or extra fields.
    fn for_task(&self, task: TaskKind) -> Result<(&str, Option<&str>), PromptError> {
        let situation = required("situation", &self.situation)?;
        let (wanted, unwanted): (Option<(&'static str, &Option<String>)>, _) = match task {
            TaskKind::ClueGen => (None, [("clue", &self.clue), ("thought", &self.thought)]),
            TaskKind::ThoughtGen => (Some(("clue", &self.clue)), [("thought", &self.thought), ("", &None)]),
            TaskKind::ActionGen | TaskKind::EmotionCls => {
                (Some(("thought", &self.thought)), [("clue", &self.clue), ("", &None)])
            }
        };
        for (name, value) in unwanted {
            if value.is_some() {
                return Err(PromptError::UnexpectedField(name));
            }
        }
        let middle = match wanted {
            Some((name, value)) => Some(required(name, value)?),
            None => None,
        };
        Ok((situation, middle))
    }
}

fn required<'a>(name: &'static str, value: &'a Option<String>) -> Result<&'a str, PromptError> {
    match value.as_deref() {
        Some(v) if !v.trim().is_empty() => {
            check_brackets(name, v)?;
            Ok(v)
        }
        _ => Err(PromptError::MissingField(name)),
    }
}

fn check_brackets(name: &'static str, value: &str) -> Result<(), PromptError> {
    if value.contains(['[', ']']) {
        Err(PromptError::BracketInField(name))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSample {
    pub input: String,
    pub target: String,
    pub task: TaskKind,
    pub polarity: Polarity,
}

/// Result of decoding an encoded input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedInput {
    pub task: TaskKind,
    pub polarity: Polarity,
    pub token_index: u8,
    pub fields: SampleFields,
}

/// Control-token input for `task` without a target; used at inference time.
pub fn encode_input(
    task: TaskKind,
    polarity: Polarity,
    fields: &SampleFields,
    token_index: u8,
) -> Result<String, PromptError> {
    check_index(token_index)?;
    let (situation, middle) = fields.for_task(task)?;
    let own = ControlToken::new(task, polarity, token_index)?;
    Ok(match (task.input_token_task(), middle) {
        (Some(lead_task), Some(middle)) => {
            let lead = ControlToken::new(lead_task, polarity, token_index)?;
            format!("{situation} {lead} {middle} {own}")
        }
        _ => format!("{situation} {own}"),
    })
}

/// Encodes one supervision pair. Emotion targets are stored by canonical name
/// and must belong to the sample's polarity.
pub fn encode_training_sample(
    task: TaskKind,
    polarity: Polarity,
    fields: &SampleFields,
    target: &str,
    token_index: u8,
) -> Result<EncodedSample, PromptError> {
    let input = encode_input(task, polarity, fields, token_index)?;
    if target.trim().is_empty() {
        return Err(PromptError::MissingField("target"));
    }
    check_brackets("target", target)?;
    let target = if task == TaskKind::EmotionCls {
        let emotion = normalize_emotion(target)
            .map_err(|_| PromptError::InvalidTarget(format!("`{target}` is not an emotion")))?;
        if emotion.polarity() != polarity {
            return Err(PromptError::InvalidTarget(format!(
                "{emotion} cannot label a {polarity} sample"
            )));
        }
        emotion.name().to_string()
    } else {
        target.to_string()
    };
    Ok(EncodedSample {
        input,
        target,
        task,
        polarity,
    })
}

/// Exact inverse of [`encode_input`].
pub fn parse_encoded_input(text: &str) -> Result<ParsedInput, PromptError> {
    let malformed = |why: &str| PromptError::MalformedEncoding(format!("{why}: `{text}`"));
    let mut tokens = Vec::new();
    let mut search = 0;
    while let Some(open) = text[search..].find('[').map(|i| i + search) {
        let close = text[open..]
            .find(']')
            .map(|i| i + open)
            .ok_or_else(|| malformed("unterminated token"))?;
        let token: ControlToken = text[open..=close].parse()?;
        tokens.push((open, close, token));
        search = close + 1;
    }
    if text[search..].contains(']') {
        return Err(malformed("stray bracket"));
    }
    let Some(&(last_open, last_close, last)) = tokens.last() else {
        return Err(malformed("no control token"));
    };
    if last_close + 1 != text.len() {
        return Err(malformed("input must end with a control token"));
    }
    let task = last.task;
    let expected_lead = task.input_token_task();
    let lead = match (tokens.len(), expected_lead) {
        (1, None) => None,
        (2, Some(lead_task)) if tokens[0].2.task == lead_task => Some(tokens[0]),
        _ => return Err(malformed("unexpected control-token sequence")),
    };
    if let Some((_, _, lead_token)) = lead {
        if lead_token.polarity != last.polarity || lead_token.index != last.index {
            return Err(malformed("control tokens disagree"));
        }
    }
    let first_open = lead.map_or(last_open, |(open, _, _)| open);
    let situation = text[..first_open]
        .strip_suffix(' ')
        .filter(|s| !s.is_empty())
        .ok_or_else(|| malformed("missing situation"))?;
    let mut fields = SampleFields::situation(situation);
    if let Some((_, lead_close, _)) = lead {
        let middle = text[lead_close + 1..last_open]
            .strip_prefix(' ')
            .and_then(|m| m.strip_suffix(' '))
            .filter(|m| !m.is_empty())
            .ok_or_else(|| malformed("missing middle field"))?;
        match task {
            TaskKind::ThoughtGen => fields.clue = Some(middle.to_string()),
            _ => fields.thought = Some(middle.to_string()),
        }
    }
    Ok(ParsedInput {
        task,
        polarity: last.polarity,
        token_index: last.index,
        fields,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn renders_tokens() {
        let t = ControlToken::new(TaskKind::ClueGen, Polarity::Negative, 2).unwrap();
        assert_eq!(t.to_string(), "[NegClue2]");
        assert_eq!("[PosEmotion3]".parse::<ControlToken>().unwrap().task, TaskKind::EmotionCls);
        assert!("[PosEmotion4]".parse::<ControlToken>().is_err());
        assert!(ControlToken::new(TaskKind::ClueGen, Polarity::Negative, 0).is_err());
    }

    #[test]
    fn clue_sample() {
        let s = encode_training_sample(
            TaskKind::ClueGen,
            Polarity::Negative,
            &SampleFields::situation("S"),
            "I didn't prepare",
            1,
        )
        .unwrap();
        assert_eq!(s.input, "S [NegClue1]");
        assert_eq!(s.target, "I didn't prepare");
    }

    #[test]
    fn all_flows_render() {
        let thought = encode_input(
            TaskKind::ThoughtGen,
            Polarity::Negative,
            &SampleFields::situation("S").with_clue("C"),
            3,
        )
        .unwrap();
        assert_eq!(thought, "S [NegClue3] C [NegThought3]");
        let action = encode_input(
            TaskKind::ActionGen,
            Polarity::Positive,
            &SampleFields::situation("S").with_thought("T"),
            1,
        )
        .unwrap();
        assert_eq!(action, "S [PosThought1] T [PosAction1]");
        let emotion = encode_training_sample(
            TaskKind::EmotionCls,
            Polarity::Positive,
            &SampleFields::situation("S").with_thought("T"),
            "surprised",
            2,
        )
        .unwrap();
        assert_eq!(emotion.input, "S [PosThought2] T [PosEmotion2]");
        assert_eq!(emotion.target, "Surprise");
    }

    #[test]
    fn encode_errors() {
        let f = SampleFields::situation("S");
        assert!(matches!(
            encode_input(TaskKind::ThoughtGen, Polarity::Negative, &f, 1),
            Err(PromptError::MissingField("clue"))
        ));
        assert!(matches!(
            encode_input(TaskKind::ClueGen, Polarity::Negative, &f.clone().with_thought("T"), 1),
            Err(PromptError::UnexpectedField("thought"))
        ));
        assert!(matches!(
            encode_input(TaskKind::ClueGen, Polarity::Negative, &SampleFields::situation("a [b]"), 1),
            Err(PromptError::BracketInField("situation"))
        ));
        assert!(matches!(
            encode_input(TaskKind::ClueGen, Polarity::Negative, &f, 4),
            Err(PromptError::InvalidTokenIndex(4))
        ));
        assert!(encode_training_sample(
            TaskKind::EmotionCls,
            Polarity::Negative,
            &f.clone().with_thought("T"),
            "Joyful",
            1
        )
        .is_err());
    }

    #[test]
    fn parse_rejects_malformed() {
        for bad in [
            "",
            "no tokens",
            "[NegClue1]",
            "S [NegClue1] trailing",
            "S [NegClue1] C [PosThought1]",
            "S [NegClue1] C [NegThought2]",
            "S [NegAction1]",
            "S [NegThought1] T [NegClue1]",
            "S [NegClue1]]",
            "S [Neg",
        ] {
            assert!(parse_encoded_input(bad).is_err(), "{bad}");
        }
    }

    fn field_text() -> impl Strategy<Value = String> {
        "[^\\[\\]]{1,40}".prop_filter("non-blank", |s| !s.trim().is_empty())
    }

    proptest! {
        #[test]
        fn encode_parse_round_trip(
            task_i in 0usize..4,
            pos in any::<bool>(),
            index in 1u8..=3,
            s in field_text(),
            m in field_text(),
        ) {
            let task = TaskKind::ALL[task_i];
            let polarity = if pos { Polarity::Positive } else { Polarity::Negative };
            let mut fields = SampleFields::situation(s);
            match task {
                TaskKind::ClueGen => {}
                TaskKind::ThoughtGen => fields.clue = Some(m),
                _ => fields.thought = Some(m),
            }
            let input = encode_input(task, polarity, &fields, index).unwrap();
            let parsed = parse_encoded_input(&input).unwrap();
            prop_assert_eq!(parsed.task, task);
            prop_assert_eq!(parsed.polarity, polarity);
            prop_assert_eq!(parsed.token_index, index);
            prop_assert_eq!(parsed.fields, fields);
        }
    }
}
