use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, NewNode, Scope};
use crate::chain_model::{ChainId, CognitiveChain, NodeKind, NodeSource, NodeStatus, Polarity, Topic};

const WORDS: &[&str] = &[
    "exam", "friend", "job", "city", "party", "dog", "train", "boss", "gift", "team", "trip", "class",
    "rent", "game", "song", "letter", "garden", "meeting", "phone", "dinner", "race", "book", "plan",
    "sister", "coffee", "office", "market", "river", "movie", "visit",
];

fn phrase(rng: &mut ChaCha8Rng, lead: &str, words: usize) -> String {
    let mut out = lead.to_string();
    for _ in 0..words {
        out.push(' ');
        out.push_str(WORDS[rng.random_range(0..WORDS.len())]);
    }
    out
}

/// Seeded, fully curated graph with one chain per polarity for each of
/// `situations` situations (nine nodes per situation). Raw counts are set to
/// the stored counts.
pub fn synthetic_graph(situations: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    let node = |kind, text: String, polarity, topic| NewNode {
        kind,
        text,
        polarity,
        topic,
        status: NodeStatus::Accepted,
        source: NodeSource::LlmGenerated,
    };
    for i in 0..situations {
        let topic = Topic::ALL[i % Topic::ALL.len()];
        let text = format!("{} number {i}", phrase(&mut rng, "I went to the", 3));
        let s = g
            .add_node(node(NodeKind::Situation, text, None, Some(topic)), Scope::Global)
            .expect("synthetic situation is valid");
        for polarity in Polarity::ALL {
            let p = Some(polarity);
            let in_s = Scope::Situation(s.clone());
            let tag = polarity.adjective();
            let c = g
                .add_node(node(NodeKind::Clue, phrase(&mut rng, &format!("{tag} clue about"), 2), p, None), in_s.clone())
                .expect("synthetic clue is valid");
            let t = g
                .add_node(node(NodeKind::Thought, phrase(&mut rng, &format!("{tag} thought on"), 3), p, None), in_s)
                .expect("synthetic thought is valid");
            let in_t = Scope::Thought(s.clone(), t.clone());
            let a = g
                .add_node(node(NodeKind::Action, phrase(&mut rng, "I will", 2), p, None), in_t.clone())
                .expect("synthetic action is valid");
            let emotion = polarity.emotions()[rng.random_range(0..3)];
            g.add_node(node(NodeKind::Emotion, emotion.name().to_string(), p, None), in_t)
                .expect("synthetic emotion is valid");
            g.insert_chain(CognitiveChain {
                chain_id: ChainId::new(""),
                situation: s.clone(),
                clue: c,
                thought: t,
                action: a,
                emotion,
                polarity,
            })
            .expect("synthetic chain is valid");
        }
    }
    let raw = NodeKind::ALL
        .into_iter()
        .map(|k| (k, g.nodes_of_kind(k).count()))
        .collect();
    g.set_raw_counts(raw);
    g
}
