//! Supervision datasets for the four cognitive-generation tasks.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_model::{NodeId, NodeKind, Polarity};
use crate::graph_store::Graph;
use crate::prompt_builder::{encode_training_sample, PromptError, SampleFields};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("graph is not finalized: {pending} node(s) are not accepted or revised")]
    UnfinalizedGraph { pending: usize },
    #[error("need at least 2 situations to split, found {0}")]
    TooFewSituations(usize),
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("nothing to export: the split is empty")]
    EmptySplit,
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    ClueGen,
    ThoughtGen,
    ActionGen,
    EmotionCls,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::ClueGen,
        TaskKind::ThoughtGen,
        TaskKind::ActionGen,
        TaskKind::EmotionCls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::ClueGen => "ClueGen",
            TaskKind::ThoughtGen => "ThoughtGen",
            TaskKind::ActionGen => "ActionGen",
            TaskKind::EmotionCls => "EmotionCls",
        }
    }

    /// Word used inside this task's control token, e.g. `Clue` in `[NegClue1]`.
    pub fn output_label(self) -> &'static str {
        match self {
            TaskKind::ClueGen => "Clue",
            TaskKind::ThoughtGen => "Thought",
            TaskKind::ActionGen => "Action",
            TaskKind::EmotionCls => "Emotion",
        }
    }

    pub fn output_kind(self) -> NodeKind {
        match self {
            TaskKind::ClueGen => NodeKind::Clue,
            TaskKind::ThoughtGen => NodeKind::Thought,
            TaskKind::ActionGen => NodeKind::Action,
            TaskKind::EmotionCls => NodeKind::Emotion,
        }
    }

    /// Task whose token marks the middle input field, if the flow has one.
    pub fn input_token_task(self) -> Option<TaskKind> {
        match self {
            TaskKind::ClueGen => None,
            TaskKind::ThoughtGen => Some(TaskKind::ClueGen),
            TaskKind::ActionGen | TaskKind::EmotionCls => Some(TaskKind::ThoughtGen),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = TaskError;

    /// Full names (`ClueGen`) or output labels (`clue`), case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s) || t.output_label().eq_ignore_ascii_case(s))
            .ok_or_else(|| TaskError::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSample {
    pub task: TaskKind,
    pub polarity: Polarity,
    pub situation: NodeId,
    pub fields: SampleFields,
    pub target: String,
    pub token_index: u8,
}

/// One sample per distinct (polarity, input fields, target) in chain order,
/// with token indices cycling 1, 2, 3 by ordinal.
pub fn derive_samples(graph: &Graph, task: TaskKind) -> Result<Vec<TaskSample>, TaskError> {
    let pending = graph.nodes().filter(|n| !n.status.is_kept()).count();
    if pending > 0 {
        return Err(TaskError::UnfinalizedGraph { pending });
    }
    let text = |id: &NodeId| {
        graph
            .node(id)
            .map(|n| n.text.clone())
            .expect("stored chains resolve")
    };
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for chain in graph.chains() {
        let situation = SampleFields::situation(text(&chain.situation));
        let (fields, target) = match task {
            TaskKind::ClueGen => (situation, text(&chain.clue)),
            TaskKind::ThoughtGen => (situation.with_clue(text(&chain.clue)), text(&chain.thought)),
            TaskKind::ActionGen => (situation.with_thought(text(&chain.thought)), text(&chain.action)),
            TaskKind::EmotionCls => (
                situation.with_thought(text(&chain.thought)),
                chain.emotion.name().to_string(),
            ),
        };
        if !seen.insert((chain.polarity, fields.clone(), target.clone())) {
            continue;
        }
        let token_index = (samples.len() % 3) as u8 + 1;
        samples.push(TaskSample {
            task,
            polarity: chain.polarity,
            situation: chain.situation.clone(),
            fields,
            target,
            token_index,
        });
    }
    Ok(samples)
}

/// Samples for all four tasks, in task order.
pub fn derive_all(graph: &Graph) -> Result<Vec<TaskSample>, TaskError> {
    let mut all = Vec::new();
    for task in TaskKind::ALL {
        all.extend(derive_samples(graph, task)?);
    }
    Ok(all)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub ratio: f64,
    pub train_situations: Vec<NodeId>,
    pub validation_situations: Vec<NodeId>,
    #[serde(skip)]
    pub train: Vec<TaskSample>,
    #[serde(skip)]
    pub validation: Vec<TaskSample>,
}

/// Number of situations assigned to training for `n` situations.
pub fn train_size(n: usize, ratio: f64) -> usize {
    let raw = (ratio * n as f64 + 1e-9).floor() as usize;
    raw.clamp(1, n.saturating_sub(1).max(1))
}

/// Shuffles the situations that have samples with a seeded ChaCha8 generator
/// and assigns the first `floor(ratio * N)` to training.
pub fn split_by_situation(
    samples: &[TaskSample],
    ratio: f64,
    seed: u64,
) -> Result<DatasetSplit, TaskError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(TaskError::InvalidRatio(ratio));
    }
    let situations: BTreeSet<&NodeId> = samples.iter().map(|s| &s.situation).collect();
    let mut order: Vec<NodeId> = situations.into_iter().cloned().collect();
    if order.len() < 2 {
        return Err(TaskError::TooFewSituations(order.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = train_size(order.len(), ratio);
    let validation_situations = order.split_off(n_train);
    let mut train_situations = order;
    train_situations.sort();
    let mut validation_situations = validation_situations;
    validation_situations.sort();

    let train_set: HashSet<&NodeId> = train_situations.iter().collect();
    let (train, validation) = samples
        .iter()
        .cloned()
        .partition(|s| train_set.contains(&s.situation));
    Ok(DatasetSplit {
        seed,
        ratio,
        train_situations,
        validation_situations,
        train,
        validation,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub task: TaskKind,
    pub polarity: Polarity,
    pub input: String,
    pub target: String,
}

/// Encodes samples with tasks interleaved round-robin (ClueGen, ThoughtGen,
/// ActionGen, EmotionCls, ClueGen, ...) until every task runs out.
pub fn training_records(samples: &[TaskSample]) -> Result<Vec<TrainingRecord>, TaskError> {
    let mut queues: BTreeMap<TaskKind, std::collections::VecDeque<&TaskSample>> = BTreeMap::new();
    for s in samples {
        queues.entry(s.task).or_default().push_back(s);
    }
    let mut out = Vec::with_capacity(samples.len());
    while queues.values().any(|q| !q.is_empty()) {
        for queue in queues.values_mut() {
            if let Some(s) = queue.pop_front() {
                let encoded =
                    encode_training_sample(s.task, s.polarity, &s.fields, &s.target, s.token_index)?;
                out.push(TrainingRecord {
                    task: s.task,
                    polarity: s.polarity,
                    input: encoded.input,
                    target: encoded.target,
                });
            }
        }
    }
    Ok(out)
}

/// Writes `samples` as a JSONL training file.
pub fn export_training_file(samples: &[TaskSample], path: &Path) -> Result<(), TaskError> {
    if samples.is_empty() {
        return Err(TaskError::EmptySplit);
    }
    let records = training_records(samples)?;
    let io = |source| TaskError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for r in &records {
        let line = serde_json::to_string(r).expect("records serialize");
        out.write_all(line.as_bytes()).map_err(io)?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Writes the split manifest: seed, ratio and both situation-id lists.
pub fn write_split_manifest(split: &DatasetSplit, path: &Path) -> Result<(), TaskError> {
    let body = serde_json::to_string_pretty(split).expect("split serializes");
    fs::write(path, body + "\n").map_err(|source| TaskError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_split_manifest(path: &Path) -> Result<DatasetSplit, TaskError> {
    let body = fs::read_to_string(path).map_err(|source| TaskError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&body).map_err(|e| TaskError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}

/// Re-attaches samples to a split loaded from a manifest.
pub fn apply_split(split: &mut DatasetSplit, samples: &[TaskSample]) {
    let train: HashSet<&NodeId> = split.train_situations.iter().collect();
    let validation: HashSet<&NodeId> = split.validation_situations.iter().collect();
    split.train = samples.iter().filter(|s| train.contains(&s.situation)).cloned().collect();
    split.validation = samples
        .iter()
        .filter(|s| validation.contains(&s.situation))
        .cloned()
        .collect();
}
