mod support;

use std::path::Path;

use serde_json::Value;
use support::{data, failure, Workspace};
use tomforge_core::construction_pipeline::CandidatePool;
use tomforge_core::curation::{read_log, replay, DecisionLog, ExpertResolution, LogEntry, ReviewDecision, Verdict};
use tomforge_core::graph_store::synthetic_graph;
use tomforge_core::{Graph, NodeKind, NodeStatus};

const POOL: &str = "work/pool.jsonl";
const LOG: &str = "work/decisions.jsonl";

/// Accepts every reviewable candidate and rejects every flagged one, as an
/// annotator and an expert would through the review API.
fn review_everything(ws: &Workspace) -> usize {
    let log_path = ws.path(LOG);
    let mut pool = CandidatePool::load(&ws.path(POOL)).unwrap();
    if log_path.exists() {
        pool = replay(pool, &read_log(&log_path).unwrap()).unwrap();
    }
    let mut log = DecisionLog::open(&log_path).unwrap();
    let mut n = 0;
    for c in pool.candidates().iter().filter(|c| c.awaits_review()) {
        let entry = if c.status == NodeStatus::Flagged {
            LogEntry::ExpertResolve(ExpertResolution {
                item: c.id.clone(),
                expert: "exp".into(),
                verdict: Verdict::Reject,
                relabel: None,
                timestamp_ms: n as u64,
            })
        } else {
            LogEntry::Decision(ReviewDecision {
                item: c.id.clone(),
                annotator: "ann".into(),
                verdict: Verdict::Accept,
                timestamp_ms: n as u64,
            })
        };
        log.append(&entry).unwrap();
        n += 1;
    }
    n
}

fn events(ws: &Workspace, lines: usize) -> String {
    let body = std::fs::read_to_string(data("sample_events.txt")).unwrap();
    let subset: Vec<&str> = body.lines().take(lines).collect();
    std::fs::write(ws.path("events.txt"), subset.join("\n")).unwrap();
    "events.txt".into()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn full_workflow_on_the_mock_backend() {
    let ws = Workspace::new();
    let events = events(&ws, 3);
    let report = json(&ws.ok(&["build", "situations", "--events", &events]));
    assert_eq!(report["generated"]["Situation"], 15);

    // Nothing is expanded until situations are reviewed.
    let report = json(&ws.ok(&["build", "expand"]));
    assert_eq!(report["parents_expanded"], 0);
    assert_eq!(review_everything(&ws), 15);

    let report = json(&ws.ok(&["build", "expand"]));
    assert!(report["generated"]["Thought"].as_u64().unwrap() > 0);
    // Pool decisions stay in the log: the pool file holds no reviewed items.
    let pool = CandidatePool::load(&ws.path(POOL)).unwrap();
    assert!(pool.candidates().iter().all(|c| !c.status.is_kept()));

    review_everything(&ws);
    let report = json(&ws.ok(&["build", "expand"]));
    assert!(report["generated"]["Clue"].as_u64().unwrap() > 0);
    assert!(report["generated"]["Action"].as_u64().unwrap() > 0);

    let (code, err) = failure(&ws.run(&["finalize"]));
    assert_eq!(code, 3);
    assert_eq!(err["error"], "validation");

    review_everything(&ws);
    let table = ws.ok(&["finalize"]);
    assert!(table.starts_with("Kind"));
    assert!(table.contains("100.00%"), "{table}");
    let graph = Graph::load(&ws.path("work/graph")).unwrap();
    assert!(graph.chain_count() > 0);
    assert!(graph.nodes().all(|n| matches!(n.status, NodeStatus::Accepted | NodeStatus::Revised)));

    let stats = json(&ws.ok(&["stats", "--json"]));
    assert_eq!(stats["chains_total"], graph.chain_count());
    assert_eq!(ws.ok(&["stats"]), table);

    let line = ws.ok(&["split", "--ratio", "0.8", "--seed", "3"]);
    assert_eq!(line, "train_situations: 12, val_situations: 3\n");
    let manifest = json(&std::fs::read_to_string(ws.path("work/split.json")).unwrap());
    assert_eq!(manifest["seed"], 3);

    let out = ws.ok(&["export-training", "--out", "train.jsonl"]);
    let records = std::fs::read_to_string(ws.path("train.jsonl")).unwrap();
    assert_eq!(out, format!("records: {}\n", records.lines().count()));
    let first = json(records.lines().next().unwrap());
    assert!(first["input"].as_str().unwrap().contains("[Pos") || first["input"].as_str().unwrap().contains("[Neg"));
    ws.ok(&["export-training", "--out", "val.jsonl", "--part", "validation"]);
    ws.ok(&["export-training", "--out", "all.jsonl", "--part", "all"]);
    let count = |f: &str| std::fs::read_to_string(ws.path(f)).unwrap().lines().count();
    assert_eq!(count("train.jsonl") + count("val.jsonl"), count("all.jsonl"));

    // A stored situation links to its own chains.
    let situation = graph.nodes_of_kind(NodeKind::Situation).next().unwrap().text.clone();
    let linked = json(&ws.ok(&["infer", "--situation", &situation, "--polarity", "pos"]));
    assert_eq!(linked[0]["mode"], "Linked");
    assert_eq!(linked[0]["chain"]["polarity"], "Positive");
}

#[test]
fn infer_is_deterministic_and_saves_provenance() {
    let ws = Workspace::new();
    let args = ["infer", "--situation", "My sister forgot my birthday", "--polarity", "neg", "--seed", "11"];
    let first = ws.ok(&args);
    assert_eq!(first, ws.ok(&args));
    let chains = json(&first);
    assert_eq!(chains.as_array().unwrap().len(), 1);
    assert_eq!(chains[0]["mode"], "Generated");
    let emotion = chains[0]["chain"]["emotion"].as_str().unwrap();
    assert!(["Sad", "Angry", "Fearful"].contains(&emotion));
    assert_ne!(first, ws.ok(&["infer", "--situation", "My sister forgot my birthday", "--polarity", "neg", "--seed", "12"]));

    ws.ok(&["infer", "--situation", "I won a prize", "--polarity", "positive", "--save", "out"]);
    for f in ["nodes.jsonl", "chains.jsonl", "provenance.jsonl"] {
        assert!(ws.path("out").join(f).exists(), "{f}");
    }
}

#[test]
fn config_file_and_env_overrides() {
    let ws = Workspace::new().env("TOMFORGE_INFERENCE_CHAINS_PER_POLARITY", "3");
    std::fs::write(ws.path("tomforge.toml"), "[backend]\nseed = 5\n").unwrap();
    let chains = json(&ws.ok(&["infer", "--situation", "I missed the bus", "--polarity", "neg"]));
    assert_eq!(chains.as_array().unwrap().len(), 3);

    std::fs::write(ws.path("bad.toml"), "[backend]\nseeed = 5\n").unwrap();
    let (code, err) = failure(&ws.run(&["--config", "bad.toml", "stats"]));
    assert_eq!(code, 3);
    assert!(err["message"].as_str().unwrap().contains("seeed"));

    let ws = Workspace::new().env("TOMFORGE_INFERENCE_TOKEN_INDEX", "7");
    let (code, _) = failure(&ws.run(&["infer", "--situation", "x", "--polarity", "neg"]));
    assert_eq!(code, 3);
}

#[test]
fn split_of_1200_situations() {
    let ws = Workspace::new();
    synthetic_graph(1200, 9).save(&ws.path("work/graph")).unwrap();
    assert_eq!(ws.ok(&["split", "--ratio", "0.9", "--seed", "42"]), "train_situations: 1080, val_situations: 120\n");
}

fn write_records(path: &Path, records: &[(&str, &[&str])]) {
    let body: Vec<String> = records
        .iter()
        .map(|(id, texts)| serde_json::json!({"input_id": id, "texts": texts}).to_string())
        .collect();
    std::fs::write(path, body.join("\n") + "\n").unwrap();
}

#[test]
fn eval_reports() {
    let ws = Workspace::new();
    let refs: &[(&str, &[&str])] = &[("1", &["I studied all night"]), ("2", &["my friend called me"])];
    write_records(&ws.path("refs.jsonl"), refs);
    write_records(&ws.path("preds.jsonl"), refs);
    let report = json(&ws.ok(&["eval", "--task", "clue", "--preds", "refs.jsonl", "--refs", "refs.jsonl"]));
    assert_eq!(report["task"], "ClueGen");
    assert_eq!(report["samples"], 2);
    let table = ws.ok(&["eval", "--task", "clue", "--preds", "preds.jsonl", "--refs", "refs.jsonl", "--format", "table"]);
    assert!(table.lines().nth(1).unwrap().contains("1.0000"), "{table}");
    // Two references: every (prediction, reference) pair counts.
    write_records(&ws.path("multi.jsonl"), &[("1", &["I studied all night"]), ("2", &["my friend called me", "she called"])]);
    let report = json(&ws.ok(&["eval", "--task", "clue", "--preds", "multi.jsonl", "--refs", "multi.jsonl"]));
    assert!(report["bleu1"].as_f64().unwrap() < 1.0);

    write_records(&ws.path("emo_p.jsonl"), &[("1", &["sad"]), ("2", &["Love"])]);
    write_records(&ws.path("emo_r.jsonl"), &[("1", &["Sad"]), ("2", &["Joyful"])]);
    let report = json(&ws.ok(&["eval", "--task", "emotion", "--preds", "emo_p.jsonl", "--refs", "emo_r.jsonl"]));
    assert_eq!(report["accuracy"], 0.5);

    write_records(&ws.path("short.jsonl"), &[("1", &["x"])]);
    let (code, err) = failure(&ws.run(&["eval", "--task", "clue", "--preds", "short.jsonl", "--refs", "refs.jsonl"]));
    assert_eq!((code, err["error"].as_str().unwrap()), (3, "validation"));
}

#[test]
fn esc_augment_writes_jsonl() {
    let ws = Workspace::new();
    let dialogues = data("sample_dialogues.jsonl");
    let dialogues = dialogues.to_str().unwrap();
    let stdout = ws.ok(&["esc", "augment", "--dialogues", dialogues]);
    let lines: Vec<Value> = stdout.lines().map(json).collect();
    assert_eq!(lines.len(), 3);
    for line in &lines {
        let ctx = line["enhanced_context"].as_str().unwrap();
        let keywords: Vec<&str> = line["keywords"].as_array().unwrap().iter().map(|k| k.as_str().unwrap()).collect();
        assert!(ctx.starts_with("SITUATION: "));
        assert!(ctx.ends_with(&format!("\n{}", keywords.join(","))));
    }
    ws.ok(&["esc", "augment", "--dialogues", dialogues, "--source", "actions", "--out", "esc.jsonl"]);
    let written = std::fs::read_to_string(ws.path("esc.jsonl")).unwrap();
    assert_eq!(written.lines().count(), 3);
    assert_ne!(written, stdout);
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    let (code, err) = failure(&ws.run(&["split", "--ratio"]));
    assert_eq!((code, err["error"].as_str().unwrap()), (2, "usage"));
    let (code, _) = failure(&ws.run(&["infer", "--situation", "x", "--polarity", "sideways"]));
    assert_eq!(code, 2);
    let (code, _) = failure(&ws.run(&["build", "situations"]));
    assert_eq!(code, 2);
    let (code, err) = failure(&ws.run(&["stats"]));
    assert_eq!((code, err["error"].as_str().unwrap()), (5, "io"));
    let (code, _) = failure(&ws.run(&["build", "expand"]));
    assert_eq!(code, 5);
    let (code, _) = failure(&ws.run(&["esc", "augment", "--dialogues", "missing.jsonl"]));
    assert_eq!(code, 5);

    // Unreachable endpoint: the backend error class.
    let ws = Workspace::new()
        .env("TOMFORGE_BACKEND_HTTP_ENDPOINT_URL", "http://127.0.0.1:9")
        .env("TOMFORGE_BACKEND_HTTP_RETRIES", "0")
        .env("TOMFORGE_BACKEND_HTTP_TIMEOUT_MS", "2000");
    let (code, err) = failure(&ws.run(&["infer", "--situation", "x y", "--polarity", "neg", "--backend", "http"]));
    assert_eq!((code, err["error"].as_str().unwrap()), (4, "backend"));
    assert_eq!(ws.run(&["--version"]).status.code(), Some(0));
}
