use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CurationError, ExpertResolution, ReviewDecision, Verdict};
use crate::chain_model::{normalize_emotion, NodeKind, NodeSource, NodeStatus};
use crate::construction_pipeline::{Candidate, CandidatePool};
use crate::graph_store::read_jsonl;
use crate::text::dedup_key;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Decision(ReviewDecision),
    ExpertResolve(ExpertResolution),
}

/// Append-only JSONL decision log; every entry is flushed before the
/// transition it records is acknowledged.
#[derive(Debug)]
pub struct DecisionLog {
    path: PathBuf,
    file: File,
}

impl DecisionLog {
    pub fn open(path: &Path) -> Result<DecisionLog, CurationError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CurationError::Log {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Ok(DecisionLog {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, entry: &LogEntry) -> Result<(), CurationError> {
        let mut line = serde_json::to_string(entry).expect("log entries serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| CurationError::Log {
                path: self.path.display().to_string(),
                message: e.to_string(),
            })
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogEntry>, CurationError> {
    Ok(read_jsonl(path)?)
}

/// Applies `entries` in order to `pool`, validating every transition.
pub fn replay(mut pool: CandidatePool, entries: &[LogEntry]) -> Result<CandidatePool, CurationError> {
    for entry in entries {
        apply_entry(&mut pool, entry)?;
    }
    Ok(pool)
}

fn lookup<'a>(pool: &'a mut CandidatePool, id: &crate::chain_model::NodeId) -> Result<&'a mut Candidate, CurationError> {
    pool.get_mut(id).ok_or_else(|| CurationError::UnknownItem(id.clone()))
}

/// Canonical label for an emotion item's text, checked against its polarity.
fn legal_label(c: &Candidate, text: &str) -> Result<String, CurationError> {
    let polarity = c.polarity.expect("emotion candidates carry a polarity");
    match normalize_emotion(text) {
        Ok(e) if e.polarity() == polarity => Ok(e.name().to_string()),
        _ => Err(CurationError::LabelPolarityMismatch {
            label: text.to_string(),
            polarity,
        }),
    }
}

fn revised_text(c: &Candidate, text: &str) -> Result<String, CurationError> {
    if text.trim().is_empty() {
        return Err(CurationError::Validation("revised text must not be empty".into()));
    }
    let text = if c.kind == NodeKind::Emotion {
        legal_label(c, text)?
    } else {
        text.trim().to_string()
    };
    if dedup_key(&text) == dedup_key(&c.text) {
        return Err(CurationError::Validation("revised text must differ from the original".into()));
    }
    Ok(text)
}

/// Checks a verdict against the item without changing it.
pub(super) fn check_verdict(c: &Candidate, verdict: &Verdict) -> Result<(), CurationError> {
    match verdict {
        Verdict::Accept if c.kind == NodeKind::Emotion => legal_label(c, &c.text).map(drop),
        Verdict::Accept | Verdict::Reject => Ok(()),
        Verdict::Revise { text } => revised_text(c, text).map(drop),
        Verdict::Flag { reason } if reason.trim().is_empty() => {
            Err(CurationError::Validation("a flag needs a reason".into()))
        }
        Verdict::Flag { .. } => Ok(()),
    }
}

fn apply_verdict(c: &mut Candidate, verdict: &Verdict) -> Result<(), CurationError> {
    check_verdict(c, verdict)?;
    match verdict {
        Verdict::Accept => c.status = NodeStatus::Accepted,
        Verdict::Reject => c.status = NodeStatus::Rejected,
        Verdict::Flag { .. } => c.status = NodeStatus::Flagged,
        Verdict::Revise { text } => {
            c.text = revised_text(c, text)?;
            c.status = NodeStatus::Revised;
            c.source = NodeSource::HumanRevised;
        }
    }
    Ok(())
}

/// Ordinary decisions need an undecided, unflagged item.
pub(super) fn check_decidable(c: &Candidate) -> Result<(), CurationError> {
    if c.status == NodeStatus::Flagged {
        return Err(CurationError::AwaitingExpert(c.id.clone()));
    }
    if !c.awaits_review() {
        return Err(CurationError::AlreadyDecided(c.id.clone()));
    }
    Ok(())
}

pub(super) fn check_resolution(c: &Candidate, r: &ExpertResolution) -> Result<(), CurationError> {
    if c.status != NodeStatus::Flagged {
        return Err(CurationError::NotFlagged(c.id.clone()));
    }
    match (&r.verdict, r.relabel) {
        (Verdict::Flag { .. }, _) => Err(CurationError::Validation(
            "an expert resolution must accept, revise or reject".into(),
        )),
        (_, Some(_)) if c.kind != NodeKind::Emotion => {
            Err(CurationError::Validation("only emotion items can be relabelled".into()))
        }
        (Verdict::Accept, Some(label)) => legal_label(c, label.name()).map(drop),
        (_, Some(_)) => Err(CurationError::Validation("a relabel goes with an accept verdict".into())),
        (verdict, None) => check_verdict(c, verdict),
    }
}

/// Validates and applies one logged transition.
pub fn apply_entry(pool: &mut CandidatePool, entry: &LogEntry) -> Result<(), CurationError> {
    match entry {
        LogEntry::Decision(d) => {
            let c = lookup(pool, &d.item)?;
            check_decidable(c)?;
            apply_verdict(c, &d.verdict)
        }
        LogEntry::ExpertResolve(r) => {
            let c = lookup(pool, &r.item)?;
            check_resolution(c, r)?;
            match r.relabel {
                Some(label) => {
                    let label = legal_label(c, label.name())?;
                    if label == c.text {
                        c.status = NodeStatus::Accepted;
                    } else {
                        c.text = label;
                        c.status = NodeStatus::Revised;
                        c.source = NodeSource::HumanRevised;
                    }
                    Ok(())
                }
                None => apply_verdict(c, &r.verdict),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain_model::{EmotionCategory, NodeId};

    #[test]
    fn entries_serialize_flat() {
        let e = LogEntry::Decision(ReviewDecision {
            item: NodeId::new("c-000001"),
            annotator: "ann".into(),
            verdict: Verdict::Revise { text: "new".into() },
            timestamp_ms: 5,
        });
        let line = serde_json::to_string(&e).unwrap();
        assert_eq!(
            line,
            r#"{"type":"decision","item":"c-000001","annotator":"ann","verdict":"revise","text":"new","timestamp_ms":5}"#
        );
        assert_eq!(serde_json::from_str::<LogEntry>(&line).unwrap(), e);
        let r = LogEntry::ExpertResolve(ExpertResolution {
            item: NodeId::new("e-000001"),
            expert: "boss".into(),
            verdict: Verdict::Accept,
            relabel: Some(EmotionCategory::Sad),
            timestamp_ms: 9,
        });
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<LogEntry>(&line).unwrap(), r);
    }
}
