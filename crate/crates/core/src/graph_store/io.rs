use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{Graph, StoreError};
use crate::chain_model::NodeKind;

pub const NODES_FILE: &str = "nodes.jsonl";
pub const CHAINS_FILE: &str = "chains.jsonl";
pub const MANIFEST_FILE: &str = "graph.json";

#[derive(Debug, Serialize, Deserialize, Default)]
struct Manifest {
    raw_counts: BTreeMap<NodeKind, usize>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `items` as JSON Lines (LF endings, one object per line).
pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), StoreError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(&item).map_err(|e| StoreError::Format {
            file: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        out.write_all(line.as_bytes()).map_err(io_err(path))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Reads JSON Lines, skipping blank lines; malformed lines report their 1-based number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| StoreError::Format {
            file: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

impl Graph {
    /// Writes `nodes.jsonl`, `chains.jsonl` and the `graph.json` manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_jsonl(&dir.join(NODES_FILE), self.nodes.values())?;
        write_jsonl(&dir.join(CHAINS_FILE), self.chains.values())?;
        let manifest = Manifest {
            raw_counts: self.raw_counts.clone(),
        };
        let path = dir.join(MANIFEST_FILE);
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, body + "\n").map_err(io_err(&path))
    }

    pub fn load(dir: &Path) -> Result<Graph, StoreError> {
        let nodes = read_jsonl(&dir.join(NODES_FILE))?;
        let chains = read_jsonl(&dir.join(CHAINS_FILE))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: Manifest = if manifest_path.exists() {
            let body = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
            serde_json::from_str(&body).map_err(|e| StoreError::Format {
                file: manifest_path.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })?
        } else {
            Manifest::default()
        };
        Graph::from_records(nodes, chains, manifest.raw_counts)
    }
}
