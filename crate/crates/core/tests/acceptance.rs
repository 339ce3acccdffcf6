//! Acceptance checks. Each criterion prints one PASS/FAIL line; the test
//! fails if any criterion fails.

mod support;

use std::collections::{BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use support::oracle;
use tomforge_core::construction_pipeline::{CandidatePool, Pipeline, PipelineConfig};
use tomforge_core::curation::{
    finalize, read_log, replay, Annotator, CurationConfig, CurationService, ManualClock, QueueFilter, Roster,
    Verdict,
};
use tomforge_core::esc_augment::{augment_dialogue, read_dialogues, Dialogue, EscConfig, Speaker, Turn};
use tomforge_core::evaluation::{bleu_n, meteor_lite, multi_ref_score, rouge_l, Metric, TokenizedText};
use tomforge_core::graph_store::{format_percent, retention_rate, synthetic_graph};
use tomforge_core::inference::{infer_chain, InferenceConfig};
use tomforge_core::llm_backend::{CountingBackend, MockBackend};
use tomforge_core::prompt_builder::{encode_training_sample, parse_encoded_input, SampleFields, TemplateSet};
use tomforge_core::task_builder::{derive_all, split_by_situation, TaskKind, TaskSample};
use tomforge_core::{EmotionCategory, Graph, NodeId, NodeKind, NodeStatus, Polarity};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    check(elapsed < limit, || format!("{what} took {elapsed:?}, limit {limit:?}"))
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = oracle::rng(50);
    for _ in 0..50 {
        let c = oracle::random_tokens(&mut rng, 10);
        let r = oracle::random_tokens(&mut rng, 10);
        let pairs = [
            ("BLEU-1", bleu_n(&c, &r, 1).unwrap(), oracle::bleu(&c, &r, 1)),
            ("BLEU-2", bleu_n(&c, &r, 2).unwrap(), oracle::bleu(&c, &r, 2)),
            ("ROUGE-L", rouge_l(&c, &r).unwrap(), oracle::rouge_l(&c, &r)),
            ("METEOR-lite", meteor_lite(&c, &r).unwrap(), oracle::meteor(&c, &r)),
        ];
        for (name, got, want) in pairs {
            check((got - want).abs() < 1e-9, || format!("{name} {c:?} / {r:?}: {got} vs oracle {want}"))?;
        }
    }
    let t = |s: &str| TokenizedText::new(s).0;
    let four = |x: f64| format!("{x:.4}");
    let hand = [
        ("clipped BLEU-1", bleu_n(&t("the the the"), &t("the cat"), 1).unwrap(), "0.3333"),
        ("brevity penalty", bleu_n(&t("the cat sat"), &t("the cat sat on mat"), 1).unwrap(), "0.5134"),
        ("ROUGE-L", rouge_l(&t("a b c d"), &t("a c b d")).unwrap(), "0.7500"),
        ("METEOR-lite", meteor_lite(&t("the cat sat"), &t("the cat sat")).unwrap(), "0.9815"),
    ];
    for (name, got, want) in hand {
        check(four(got) == want, || format!("{name}: {} != {want}", four(got)))?;
    }
    let bp = bleu_n(&t("the cat sat"), &t("the cat sat on mat"), 1).unwrap();
    check(four(bp) == four((-2.0f64 / 3.0).exp()), || "BP differs from exp(-2/3)".into())?;
    within(start.elapsed(), Duration::from_secs(5), "metric checks")?;
    Ok(format!("50 oracle pairs within 1e-9, 4 hand examples, {:?}", start.elapsed()))
}

fn retention_arithmetic() -> Outcome {
    let cases = [(1200, 2000, "60.00%"), (9788, 14400, "67.97%"), (21677, 29364, "73.82%"), (19875, 29364, "67.68%")];
    for (kept, raw, want) in cases {
        let got = format_percent(retention_rate(kept, raw).map_err(|e| e.to_string())?);
        check(got == want, || format!("({kept},{raw}) -> {got}, expected {want}"))?;
    }
    Ok("4 table rows reproduced".into())
}

fn accept_kind(pool: &mut CandidatePool, kind: NodeKind) -> usize {
    let ids: Vec<NodeId> = pool.of_kind(kind).filter(|c| c.awaits_review()).map(|c| c.id.clone()).collect();
    for id in &ids {
        pool.get_mut(id).unwrap().status = NodeStatus::Accepted;
    }
    ids.len()
}

fn fan_out() -> Outcome {
    let mock = MockBackend::with_seed(12).with_unique_completions(true);
    let pipeline = Pipeline::new(&mock, TemplateSet::builtin(), PipelineConfig::default()).map_err(|e| e.to_string())?;
    let mut pool = CandidatePool::new();
    let events: Vec<String> = ["going to a job interview", "cooking for my parents", "losing a close game", "visiting a new town"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    pipeline.rewrite_events(&mut pool, &events).map_err(|e| e.to_string())?;
    let situations = accept_kind(&mut pool, NodeKind::Situation);
    pipeline.expand(&mut pool).map_err(|e| e.to_string())?;
    let raw = pool.raw_counts();
    let thoughts = raw.get(&NodeKind::Thought).copied().unwrap_or(0);
    check(thoughts == 12 * situations, || format!("raw thoughts {thoughts} != 12 x {situations}"))?;
    // Reject every fourth thought so kept < raw.
    let ids: Vec<NodeId> = pool.of_kind(NodeKind::Thought).map(|c| c.id.clone()).collect();
    for id in ids.iter().step_by(4) {
        pool.get_mut(id).unwrap().status = NodeStatus::Rejected;
    }
    let kept = accept_kind(&mut pool, NodeKind::Thought);
    pipeline.expand(&mut pool).map_err(|e| e.to_string())?;
    let raw = pool.raw_counts();
    let (clues, actions) = (raw[&NodeKind::Clue], raw[&NodeKind::Action]);
    check(clues == 3 * kept && actions == 3 * kept, || format!("clues {clues}, actions {actions}, kept thoughts {kept}"))?;
    Ok(format!("{situations} situations -> {thoughts} thoughts; {kept} kept -> {clues} clues, {actions} actions"))
}

fn samples_for(n: usize, rng: &mut ChaCha8Rng) -> Vec<TaskSample> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..rng.random_range(1..=3) {
            out.push(TaskSample {
                task: TaskKind::ALL[j % 4],
                polarity: Polarity::ALL[j % 2],
                situation: NodeId::new(format!("s-{i:06}")),
                fields: SampleFields::situation(format!("situation {i}")),
                target: format!("target {i} {j}"),
                token_index: 1,
            });
        }
    }
    out
}

fn split_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for seed in 0..1000u64 {
        let n = rng.random_range(3..=300);
        let samples = samples_for(n, &mut rng);
        let split = split_by_situation(&samples, 0.9, seed).map_err(|e| format!("seed {seed}: {e}"))?;
        let train: HashSet<&NodeId> = split.train_situations.iter().collect();
        let val: HashSet<&NodeId> = split.validation_situations.iter().collect();
        check(train.is_disjoint(&val), || format!("seed {seed}: overlapping situations"))?;
        let all: HashSet<&NodeId> = samples.iter().map(|s| &s.situation).collect();
        let union: HashSet<&NodeId> = train.union(&val).copied().collect();
        check(union == all, || format!("seed {seed}: split is not exhaustive"))?;
        check(split.train.len() + split.validation.len() == samples.len(), || format!("seed {seed}: samples lost"))?;
        check(
            split.validation.iter().all(|s| val.contains(&s.situation)),
            || format!("seed {seed}: validation sample from a training situation"),
        )?;
    }
    let graph = synthetic_graph(1200, 4);
    let samples = derive_all(&graph).map_err(|e| e.to_string())?;
    let split = split_by_situation(&samples, 0.9, 7).map_err(|e| e.to_string())?;
    let sizes = (split.train_situations.len(), split.validation_situations.len());
    check(sizes == (1080, 120), || format!("1,200 situations split {sizes:?}"))?;
    Ok("1000 seeds disjoint and exhaustive; 1200 -> 1080/120".into())
}

const WORDS: &[&str] = &["I", "my", "friend", "lost", "the", "game", "won't", "ever", "call", "again", "café", "2024", "it's", "fine,", "really?", "(maybe)"];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=12);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn control_token_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut combos = 0;
    for task in TaskKind::ALL {
        for polarity in Polarity::ALL {
            for index in 1..=3u8 {
                combos += 1;
                for _ in 0..200 {
                    let base = SampleFields::situation(random_text(&mut rng));
                    let fields = match task {
                        TaskKind::ClueGen => base,
                        TaskKind::ThoughtGen => base.with_clue(random_text(&mut rng)),
                        TaskKind::ActionGen | TaskKind::EmotionCls => base.with_thought(random_text(&mut rng)),
                    };
                    let target = match task {
                        TaskKind::EmotionCls => polarity.emotions()[rng.random_range(0..3)].name().to_string(),
                        _ => random_text(&mut rng),
                    };
                    let encoded = encode_training_sample(task, polarity, &fields, &target, index)
                        .map_err(|e| format!("{task:?}/{polarity:?}/{index}: {e}"))?;
                    let parsed = parse_encoded_input(&encoded.input).map_err(|e| e.to_string())?;
                    check(
                        parsed.task == task
                            && parsed.polarity == polarity
                            && parsed.token_index == index
                            && parsed.fields == fields,
                        || format!("round trip changed {:?}", encoded.input),
                    )?;
                }
            }
        }
    }
    check(combos == 24, || format!("{combos} combinations"))?;
    Ok("24 combinations x 200 texts".into())
}

fn chain_validity() -> Outcome {
    let situations = ["I failed my driving test", "My brother visited me", "I got a new puppy", "My laptop broke before the deadline"];
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let config = InferenceConfig::default();
    let mut negative = 0;
    for i in 0..100 {
        let seed = rng.random::<u64>();
        let polarity = Polarity::ALL[i % 2];
        let situation = situations[rng.random_range(0..situations.len())];
        let chain = infer_chain(situation, polarity, &MockBackend::with_seed(seed), &config)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let report = chain.validate();
        check(report.ok(), || format!("seed {seed}: {report:?}"))?;
        check(chain.chain.polarity == polarity, || format!("seed {seed}: polarity drift"))?;
        if polarity == Polarity::Negative {
            negative += 1;
            let positive = [EmotionCategory::Love, EmotionCategory::Surprise, EmotionCategory::Joyful];
            check(!positive.contains(&chain.chain.emotion), || {
                format!("seed {seed}: negative chain labelled {}", chain.chain.emotion)
            })?;
        }
    }
    Ok(format!("100 chains valid, {negative} negative without positive emotions"))
}

fn roster(n: usize) -> Roster {
    let mut people: Vec<Annotator> = (0..n)
        .map(|i| Annotator { id: format!("a{i}"), token: format!("t{i}"), expert: false })
        .collect();
    people.push(Annotator { id: "exp".into(), token: "t-exp".into(), expert: true });
    Roster::new(people).unwrap()
}

fn generated_pool() -> CandidatePool {
    let mock = MockBackend::with_seed(77).with_unique_completions(true);
    let config = PipelineConfig { thought_rounds_per_polarity: 2, ..PipelineConfig::default() };
    let pipeline = Pipeline::new(&mock, TemplateSet::builtin(), config).unwrap();
    let mut pool = CandidatePool::new();
    pipeline.rewrite_events(&mut pool, &["starting at a new school".to_string()]).unwrap();
    accept_kind(&mut pool, NodeKind::Situation);
    pipeline.expand(&mut pool).unwrap();
    accept_kind(&mut pool, NodeKind::Thought);
    pipeline.expand(&mut pool).unwrap();
    // Reset to an unreviewed pool so every decision goes through the service.
    let ids: Vec<NodeId> = pool.candidates().iter().map(|c| c.id.clone()).collect();
    for id in ids {
        let c = pool.get_mut(&id).unwrap();
        if c.status.is_kept() {
            c.status = NodeStatus::Raw;
        }
    }
    pool
}

fn curation_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log_path = dir.path().join("decisions.jsonl");
    let pool = generated_pool();
    let svc = CurationService::new(pool.clone(), roster(1), CurationConfig::default(), Arc::new(ManualClock::new(0)))
        .with_log(&log_path)
        .map_err(|e| e.to_string())?;
    let mut i = 0usize;
    loop {
        let batch = svc.claim_batch("a0", &QueueFilter::default(), 1).map_err(|e| e.to_string())?;
        let Some(item) = batch.into_iter().next() else { break };
        let verdict = match (item.kind, i % 5) {
            (NodeKind::Situation, _) | (NodeKind::Emotion, 0 | 1) => Verdict::Accept,
            (NodeKind::Emotion, _) => Verdict::Flag { reason: "label".into() },
            (_, 0) => Verdict::Reject,
            (_, 1) => Verdict::Revise { text: format!("{} after all", item.text) },
            (_, 2) => Verdict::Flag { reason: "unsure".into() },
            _ => Verdict::Accept,
        };
        svc.submit_decision("a0", &item.id, verdict).map_err(|e| e.to_string())?;
        i += 1;
    }
    let flagged = svc
        .claim_batch("exp", &QueueFilter { status: tomforge_core::curation::QueueStatus::Flagged, ..QueueFilter::default() }, 10_000)
        .map_err(|e| e.to_string())?;
    for (j, item) in flagged.iter().enumerate() {
        let (verdict, relabel) = match (item.kind, item.polarity) {
            (NodeKind::Emotion, Some(p)) => (Verdict::Accept, Some(p.emotions()[j % 3])),
            _ if j % 2 == 0 => (Verdict::Reject, None),
            _ => (Verdict::Accept, None),
        };
        svc.expert_resolve("exp", &item.id, verdict, relabel).map_err(|e| e.to_string())?;
    }
    let live = svc.finalize(false).map_err(|e| e.to_string())?;
    let entries = read_log(&log_path).map_err(|e| e.to_string())?;
    let replayed = finalize(&replay(pool, &entries).map_err(|e| e.to_string())?, false).map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("live"), dir.path().join("replayed"));
    live.save(&a).map_err(|e| e.to_string())?;
    replayed.save(&b).map_err(|e| e.to_string())?;
    for file in ["nodes.jsonl", "chains.jsonl", "graph.json"] {
        let same = std::fs::read(a.join(file)).ok() == std::fs::read(b.join(file)).ok();
        check(same, || format!("{file} differs after replay"))?;
    }
    let bad = live.nodes().filter(|n| matches!(n.status, NodeStatus::Rejected | NodeStatus::Flagged)).count();
    check(bad == 0, || format!("{bad} rejected or flagged nodes in the graph"))?;
    check(live.chain_count() > 0, || "no chains survived".into())?;

    // Eight annotators racing over 1,000 items.
    let mut stress = CandidatePool::new();
    let mock = MockBackend::with_seed(3).with_unique_completions(true);
    let pipeline = Pipeline::new(&mock, TemplateSet::builtin(), PipelineConfig::default()).unwrap();
    let events: Vec<String> = (0..200).map(|k| format!("event number {k} took place")).collect();
    pipeline.rewrite_events(&mut stress, &events).map_err(|e| e.to_string())?;
    check(stress.len() == 1000, || format!("stress pool has {} items", stress.len()))?;
    let svc = Arc::new(CurationService::new(stress, roster(8), CurationConfig::default(), Arc::new(ManualClock::new(0))));
    let handles: Vec<_> = (0..8)
        .map(|k| {
            let svc = svc.clone();
            std::thread::spawn(move || {
                let who = format!("a{k}");
                let mut claimed = Vec::new();
                loop {
                    let batch = svc.claim_batch(&who, &QueueFilter::default(), 5).unwrap();
                    if batch.is_empty() {
                        break claimed;
                    }
                    for item in batch {
                        svc.submit_decision(&who, &item.id, Verdict::Accept).unwrap();
                        claimed.push(item.id);
                    }
                }
            })
        })
        .collect();
    let mut seen = HashSet::new();
    let mut doubles = 0;
    for h in handles {
        for id in h.join().map_err(|_| "annotator thread panicked".to_string())? {
            if !seen.insert(id) {
                doubles += 1;
            }
        }
    }
    check(doubles == 0 && seen.len() == 1000, || format!("{doubles} double claims, {} decided", seen.len()))?;
    Ok(format!("{} log entries replay byte-identically; 8x1000 stress with 0 double claims", entries.len()))
}

fn multi_reference() -> Outcome {
    let mut rng = oracle::rng(100);
    for case in 0..100 {
        let preds: Vec<Vec<String>> = (0..rng.random_range(1..=4)).map(|_| oracle::random_tokens(&mut rng, 8)).collect();
        let refs: Vec<Vec<String>> = (0..rng.random_range(1..=4)).map(|_| oracle::random_tokens(&mut rng, 8)).collect();
        let p: Vec<TokenizedText> = preds.iter().cloned().map(TokenizedText).collect();
        let r: Vec<TokenizedText> = refs.iter().cloned().map(TokenizedText).collect();
        for metric in Metric::ALL {
            let got = multi_ref_score(&p, &r, metric).map_err(|e| e.to_string())?;
            let want = oracle::all_pairs_mean(&preds, &refs, |a, b| {
                metric.score(&TokenizedText(a.to_vec()), &TokenizedText(b.to_vec())).unwrap()
            });
            check(got == want, || format!("case {case} {metric:?}: {got} vs {want}"))?;
        }
    }
    Ok("100 list pairs x 4 metrics exactly equal".into())
}

fn esc_augmentation() -> Outcome {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample_dialogues.jsonl");
    let mut dialogues = read_dialogues(&path).map_err(|e| e.to_string())?;
    dialogues.push(Dialogue {
        dialogue_id: None,
        situation: "My grandmother is in the hospital.".into(),
        turns: vec![
            Turn { speaker: Speaker::User, text: "I can't stop thinking about her, I'm scared.".into() },
            Turn { speaker: Speaker::System, text: "I'm sorry. Do you get to visit?".into() },
            Turn { speaker: Speaker::User, text: "Only on weekends, the drive is long.".into() },
        ],
    });
    for (i, d) in dialogues.iter().enumerate() {
        let backend = CountingBackend::new(MockBackend::with_seed(i as u64));
        let ctx = augment_dialogue(d, &backend, &EscConfig::default()).map_err(|e| e.to_string())?;
        check(backend.calls() == 4, || format!("dialogue {i}: {} calls", backend.calls()))?;
        let history = d.history();
        check(ctx.enhanced_context.starts_with(&history), || format!("dialogue {i}: history altered"))?;
        let tail = &ctx.enhanced_context[history.len()..];
        check(tail == format!("\n{}", ctx.keywords.join(",")), || format!("dialogue {i}: tail {tail:?}"))?;
        let unique: BTreeSet<&String> = ctx.keywords.iter().collect();
        check(unique.len() == ctx.keywords.len(), || format!("dialogue {i}: duplicate keywords"))?;
        check(!ctx.keywords.is_empty(), || format!("dialogue {i}: no keywords"))?;
        check(ctx.keywords.iter().all(|k| !k.contains(',') && !k.contains(' ')), || {
            format!("dialogue {i}: keyword breaks the list {:?}", ctx.keywords)
        })?;
    }
    Ok(format!("{} dialogues, 4 calls each, history prefix intact", dialogues.len()))
}

fn store_round_trip() -> Outcome {
    let graph = synthetic_graph(1112, 10);
    check(graph.node_count() >= 10_000, || format!("only {} nodes", graph.node_count()))?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    graph.save(dir.path()).map_err(|e| e.to_string())?;
    let loaded = Graph::load(dir.path()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(loaded.node_count() == graph.node_count(), || "node count changed".into())?;
    check(loaded.chain_count() == graph.chain_count(), || "chain count changed".into())?;
    check(loaded.stats() == graph.stats(), || "stats changed".into())?;
    check(graph.nodes().eq(loaded.nodes()), || "node fields changed".into())?;
    check(graph.chains().eq(loaded.chains()), || "chain fields changed".into())?;
    within(elapsed, Duration::from_secs(2), "save + load")?;
    Ok(format!("{} nodes, {} chains in {elapsed:?}", graph.node_count(), graph.chain_count()))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        ("metric oracle equivalence", metric_oracle),
        ("retention arithmetic", retention_arithmetic),
        ("fan-out arithmetic", fan_out),
        ("split property", split_property),
        ("control-token round trip", control_token_round_trip),
        ("chain validity end-to-end", chain_validity),
        ("curation determinism", curation_determinism),
        ("multi-reference averaging", multi_reference),
        ("support-dialogue augmentation", esc_augmentation),
        ("store round trip", store_round_trip),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(why) => {
                println!("FAIL [{:>2}] {name}: {why}", i + 1);
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
