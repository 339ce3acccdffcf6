//! Cognitive-chain knowledge graphs: situations, clues, thoughts, actions
//! and emotions, plus the tooling to build, curate and learn from them.

pub mod chain_model;
pub mod construction_pipeline;
pub mod curation;
pub mod esc_augment;
pub mod evaluation;
pub mod graph_store;
pub mod inference;
pub mod llm_backend;
pub mod prompt_builder;
pub mod task_builder;
pub mod text;

pub use chain_model::{
    CognitiveChain, EmotionCategory, Node, NodeId, NodeKind, NodeSource, NodeStatus, Polarity,
    Topic,
};
pub use graph_store::{Graph, GraphStats, StoreError};
