//! Operator configuration: a TOML file with one table per section, overlaid
//! by `TOMFORGE_<SECTION>_<KEY>` environment variables. The completion API
//! key is never read from here; it comes from `TOMFORGE_API_KEY` only.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tomforge_core::curation::CurationConfig;
use tomforge_core::construction_pipeline::PipelineConfig;
use tomforge_core::esc_augment::EscConfig;
use tomforge_core::inference::InferenceConfig;
use tomforge_core::llm_backend::{BackendCapability, HttpConfig, API_KEY_ENV};

use crate::error::CliError;

pub const ENV_PREFIX: &str = "TOMFORGE_";
pub const DEFAULT_CONFIG_FILE: &str = "tomforge.toml";

/// Env-var section names, longest first so `backend_http` wins over `backend`.
const SECTIONS: &[(&str, &[&str])] = &[
    ("backend_http_", &["backend", "http"]),
    ("paths_", &["paths"]),
    ("backend_", &["backend"]),
    ("pipeline_", &["pipeline"]),
    ("inference_", &["inference"]),
    ("eval_", &["eval"]),
    ("curation_", &["curation"]),
    ("esc_", &["esc"]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub graph_dir: PathBuf,
    pub pool_file: PathBuf,
    pub events_file: Option<PathBuf>,
    pub decision_log: PathBuf,
    pub split_manifest: PathBuf,
    /// Prompt templates; the bundled set when absent.
    pub templates: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            graph_dir: "work/graph".into(),
            pool_file: "work/pool.jsonl".into(),
            events_file: None,
            decision_log: "work/decisions.jsonl".into(),
            split_manifest: "work/split.json".into(),
            templates: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub kind: BackendKind,
    pub seed: u64,
    /// Mock phrase lexicon; the bundled one when absent.
    pub lexicon: Option<PathBuf>,
    pub unique_completions: bool,
    pub capability: BackendCapability,
    pub http: HttpConfig,
}

impl Default for BackendSettings {
    fn default() -> Self {
        BackendSettings {
            kind: BackendKind::Mock,
            seed: 0,
            lexicon: None,
            unique_completions: false,
            capability: BackendCapability::RawLm,
            http: HttpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Table,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub format: ReportFormat,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub backend: BackendSettings,
    pub pipeline: PipelineConfig,
    pub inference: InferenceConfig,
    pub eval: EvalSettings,
    pub curation: CurationConfig,
    pub esc: EscConfig,
}

impl Config {
    /// Reads `path` (or `tomforge.toml` in the working directory when it
    /// exists), applies overrides from `env`, and validates the result.
    pub fn load<I>(path: Option<&Path>, env: I) -> Result<Config, CliError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match path {
            Some(p) => read_table(p)?,
            None if Path::new(DEFAULT_CONFIG_FILE).exists() => read_table(Path::new(DEFAULT_CONFIG_FILE))?,
            None => toml::Table::new(),
        };
        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k != API_KEY_ENV)
            .collect();
        overrides.sort();
        for (key, value) in overrides {
            apply_override(&mut table, &key, &value)?;
        }
        let config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.pipeline.validate()?;
        self.inference.validate()?;
        if !(1..=3).contains(&self.esc.token_index) {
            return Err(CliError::Validation(format!(
                "config: esc.token_index {} is outside 1..=3",
                self.esc.token_index
            )));
        }
        if self.backend.http.max_concurrency == 0 {
            return Err(CliError::Validation("config: backend.http.max_concurrency must be at least 1".into()));
        }
        if self.curation.lease_ms == 0 {
            return Err(CliError::Validation("config: curation.lease_ms must be positive".into()));
        }
        Ok(())
    }
}

fn read_table(path: &Path) -> Result<toml::Table, CliError> {
    let body = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    body.parse::<toml::Table>()
        .map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.message())))
}

/// Bare TOML literal when it parses as one, otherwise a string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(table: &mut toml::Table, var: &str, value: &str) -> Result<(), CliError> {
    let rest = var[ENV_PREFIX.len()..].to_ascii_lowercase();
    let (section, key) = SECTIONS
        .iter()
        .find_map(|(prefix, path)| rest.strip_prefix(prefix).map(|k| (*path, k)))
        .filter(|(_, k)| !k.is_empty())
        .ok_or_else(|| CliError::Validation(format!("environment variable {var} names no config section")))?;
    let mut target = table;
    for part in section {
        let entry = target
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        target = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Validation(format!("config: `{part}` must be a table")))?;
    }
    target.insert(key.to_string(), parse_value(value));
    Ok(())
}
