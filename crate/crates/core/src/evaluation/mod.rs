//! Sentence-level BLEU, ROUGE-L and METEOR-lite, all-pairs multi-reference
//! averaging, emotion accuracy and per-task reports.

mod metrics;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_model::normalize_emotion;
use crate::graph_store::read_jsonl;
use crate::task_builder::TaskKind;
use crate::text::tokenize;

pub use metrics::{align, bleu_n, lcs_len, meteor_lite, rouge_l, BLEU_EPSILON};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("candidate has no tokens")]
    EmptyCandidate,
    #[error("candidate or reference has no tokens")]
    EmptyInput,
    #[error("prediction or reference list is empty")]
    EmptyList,
    #[error("BLEU order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("{predictions} predictions but {golds} gold labels")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("gold label `{0}` is not an emotion category")]
    InvalidGold(String),
    #[error("alignment: {0}")]
    Alignment(String),
    #[error("input {input_id}: {source}")]
    AtInput {
        input_id: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Io(#[from] crate::graph_store::StoreError),
}

/// Case-folded word tokens of a text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenizedText(pub Vec<String>);

impl TokenizedText {
    pub fn new(text: &str) -> Self {
        TokenizedText(tokenize(text))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Bleu1,
    Bleu2,
    RougeL,
    MeteorLite,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::MeteorLite, Metric::RougeL, Metric::Bleu1, Metric::Bleu2];

    pub fn score(self, candidate: &TokenizedText, reference: &TokenizedText) -> Result<f64, EvalError> {
        let (c, r) = (candidate.tokens(), reference.tokens());
        match self {
            Metric::Bleu1 => bleu_n(c, r, 1),
            Metric::Bleu2 => bleu_n(c, r, 2),
            Metric::RougeL => rouge_l(c, r),
            Metric::MeteorLite => meteor_lite(c, r),
        }
    }
}

/// Mean of `metric` over every (prediction, reference) pair.
pub fn multi_ref_score(
    predictions: &[TokenizedText],
    references: &[TokenizedText],
    metric: Metric,
) -> Result<f64, EvalError> {
    if predictions.is_empty() || references.is_empty() {
        return Err(EvalError::EmptyList);
    }
    let mut total = 0.0;
    for p in predictions {
        for r in references {
            total += metric.score(p, r)?;
        }
    }
    Ok(total / (predictions.len() * references.len()) as f64)
}

/// Fraction of predictions naming the gold category. Unrecognized
/// predictions count as wrong; unrecognized golds are an error.
pub fn emotion_accuracy(predictions: &[String], golds: &[String]) -> Result<f64, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if predictions.is_empty() {
        return Err(EvalError::EmptyList);
    }
    let mut correct = 0usize;
    for (p, g) in predictions.iter().zip(golds) {
        let gold = normalize_emotion(g).map_err(|_| EvalError::InvalidGold(g.clone()))?;
        if normalize_emotion(p).is_ok_and(|p| p == gold) {
            correct += 1;
        }
    }
    Ok(correct as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: TaskKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meteor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rouge_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    pub samples: usize,
}

fn at_input(id: &str) -> impl Fn(EvalError) -> EvalError + '_ {
    move |e| EvalError::AtInput {
        input_id: id.to_string(),
        source: Box::new(e),
    }
}

/// Scores one task. Generation tasks macro-average the per-input multi-reference
/// means; emotion classification expects exactly one prediction and one gold per input.
pub fn evaluate_task(task: TaskKind, inputs: &[AlignedInput]) -> Result<MetricReport, EvalError> {
    if inputs.is_empty() {
        return Err(EvalError::EmptyList);
    }
    let mut report = MetricReport {
        task,
        meteor: None,
        rouge_l: None,
        bleu1: None,
        bleu2: None,
        accuracy: None,
        samples: inputs.len(),
    };
    if task == TaskKind::EmotionCls {
        let mut predictions = Vec::with_capacity(inputs.len());
        let mut golds = Vec::with_capacity(inputs.len());
        for input in inputs {
            match (input.predictions.as_slice(), input.references.as_slice()) {
                ([p], [g]) => {
                    predictions.push(p.clone());
                    golds.push(g.clone());
                }
                _ => {
                    return Err(at_input(&input.input_id)(EvalError::Alignment(
                        "emotion inputs need exactly one prediction and one gold label".into(),
                    )))
                }
            }
        }
        report.accuracy = Some(emotion_accuracy(&predictions, &golds)?);
        return Ok(report);
    }

    let per_input: Vec<[f64; 4]> = inputs
        .par_iter()
        .map(|input| {
            let wrap = at_input(&input.input_id);
            let preds: Vec<TokenizedText> = input.predictions.iter().map(|t| TokenizedText::new(t)).collect();
            let refs: Vec<TokenizedText> = input.references.iter().map(|t| TokenizedText::new(t)).collect();
            let mut scores = [0.0; 4];
            for (slot, metric) in Metric::ALL.into_iter().enumerate() {
                scores[slot] = multi_ref_score(&preds, &refs, metric).map_err(&wrap)?;
            }
            Ok(scores)
        })
        .collect::<Result<_, EvalError>>()?;
    let n = per_input.len() as f64;
    let mean = |slot: usize| per_input.iter().map(|s| s[slot]).sum::<f64>() / n;
    report.meteor = Some(mean(0));
    report.rouge_l = Some(mean(1));
    report.bleu1 = Some(mean(2));
    report.bleu2 = Some(mean(3));
    Ok(report)
}

/// Fixed-width table, one row per report, scores to four decimals.
pub fn render_table(reports: &[MetricReport]) -> String {
    let header = ["task", "METEOR-lite", "ROUGE-L", "BLEU-1", "BLEU-2", "Accuracy", "n"];
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    let rows: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            [
                r.task.name().to_string(),
                cell(r.meteor),
                cell(r.rouge_l),
                cell(r.bleu1),
                cell(r.bleu2),
                cell(r.accuracy),
                r.samples.to_string(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

/// One line of a predictions or references file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub input_id: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedInput {
    pub input_id: String,
    pub predictions: Vec<String>,
    pub references: Vec<String>,
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    Ok(read_jsonl(path)?)
}

/// Pairs predictions with references by `input_id`, in reference order.
/// Every reference needs exactly one prediction record and vice versa.
pub fn align_records(predictions: Vec<EvalRecord>, references: Vec<EvalRecord>) -> Result<Vec<AlignedInput>, EvalError> {
    let mut by_id: HashMap<String, Vec<String>> = HashMap::new();
    for p in predictions {
        if by_id.insert(p.input_id.clone(), p.texts).is_some() {
            return Err(EvalError::Alignment(format!("duplicate prediction for `{}`", p.input_id)));
        }
    }
    let mut seen = HashSet::new();
    let mut aligned = Vec::with_capacity(references.len());
    for r in references {
        if !seen.insert(r.input_id.clone()) {
            return Err(EvalError::Alignment(format!("duplicate reference for `{}`", r.input_id)));
        }
        let predictions = by_id
            .remove(&r.input_id)
            .ok_or_else(|| EvalError::Alignment(format!("no prediction for `{}`", r.input_id)))?;
        aligned.push(AlignedInput {
            input_id: r.input_id,
            predictions,
            references: r.texts,
        });
    }
    if let Some(extra) = by_id.keys().min() {
        return Err(EvalError::Alignment(format!("prediction `{extra}` has no reference")));
    }
    Ok(aligned)
}
