use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendCapability, GenerationRequest, LlmError};
use crate::chain_model::{NodeKind, Polarity, Topic};
use crate::prompt_builder::{classify_prompt, TemplateSet};

const BUILTIN_LEXICON: &str = include_str!("../../data/lexicon.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarPhrases {
    #[serde(rename = "Positive")]
    pub positive: Vec<String>,
    #[serde(rename = "Negative")]
    pub negative: Vec<String>,
}

impl PolarPhrases {
    fn get(&self, polarity: Polarity) -> &[String] {
        match polarity {
            Polarity::Positive => &self.positive,
            Polarity::Negative => &self.negative,
        }
    }
}

/// Phrases the mock samples from, per node kind and polarity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub situation: Vec<String>,
    pub clue: PolarPhrases,
    pub thought: PolarPhrases,
    pub action: PolarPhrases,
}

impl Lexicon {
    pub fn builtin() -> &'static Lexicon {
        static BUILTIN: OnceLock<Lexicon> = OnceLock::new();
        BUILTIN.get_or_init(|| Lexicon::from_json(BUILTIN_LEXICON).expect("bundled lexicon is valid"))
    }

    pub fn from_json(json: &str) -> Result<Lexicon, LlmError> {
        let lexicon: Lexicon = serde_json::from_str(json)
            .map_err(|e| LlmError::InvalidRequest(format!("lexicon: {e}")))?;
        lexicon.check()?;
        Ok(lexicon)
    }

    pub fn from_file(path: &Path) -> Result<Lexicon, LlmError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| LlmError::InvalidRequest(format!("{}: {e}", path.display())))?;
        Lexicon::from_json(&body)
    }

    fn check(&self) -> Result<(), LlmError> {
        if self.situation.is_empty() {
            return Err(LlmError::EmptyLexicon("Situation".into()));
        }
        for (kind, phrases) in [
            (NodeKind::Clue, &self.clue),
            (NodeKind::Thought, &self.thought),
            (NodeKind::Action, &self.action),
        ] {
            for polarity in Polarity::ALL {
                if phrases.get(polarity).is_empty() {
                    return Err(LlmError::EmptyLexicon(format!("{kind}/{polarity}")));
                }
            }
        }
        Ok(())
    }

    fn phrases(&self, kind: NodeKind, polarity: Polarity) -> &[String] {
        match kind {
            NodeKind::Clue => self.clue.get(polarity),
            NodeKind::Thought => self.thought.get(polarity),
            NodeKind::Action => self.action.get(polarity),
            NodeKind::Situation | NodeKind::Emotion => &self.situation,
        }
    }
}

/// Deterministic offline backend. Each completion is a pure function of
/// (seed, prompt, round, completion index).
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    lexicon: Lexicon,
    templates: TemplateSet,
    capability: BackendCapability,
    unique: bool,
}

impl MockBackend {
    pub fn new(seed: u64, lexicon: Lexicon) -> Result<MockBackend, LlmError> {
        lexicon.check()?;
        Ok(MockBackend {
            seed,
            lexicon,
            templates: TemplateSet::builtin().clone(),
            capability: BackendCapability::RawLm,
            unique: false,
        })
    }

    /// Mock over the bundled lexicon.
    pub fn with_seed(seed: u64) -> MockBackend {
        MockBackend::new(seed, Lexicon::builtin().clone()).expect("bundled lexicon is valid")
    }

    /// Data prompts are recognized against `templates`.
    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_capability(mut self, capability: BackendCapability) -> Self {
        self.capability = capability;
        self
    }

    /// Tags every generated phrase with a hash suffix so no two completions
    /// ever collide under deduplication.
    pub fn with_unique_completions(mut self, unique: bool) -> Self {
        self.unique = unique;
        self
    }

    fn base_hash(&self, request: &GenerationRequest) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(request.round.to_le_bytes());
        h.update(request.prompt.as_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

impl Backend for MockBackend {
    fn label(&self) -> &str {
        "mock"
    }

    fn capability(&self) -> BackendCapability {
        self.capability
    }

    fn complete(&self, request: &GenerationRequest) -> Result<Vec<String>, LlmError> {
        let class = classify_prompt(&request.prompt, &self.templates).ok_or_else(|| {
            LlmError::BadResponse("mock backend does not recognize the prompt".into())
        })?;
        let base = self.base_hash(request);
        let n = request.params.n as usize;
        let completions = (0..n)
            .map(|i| {
                let pick = base.wrapping_add(i as u64);
                let text = match (class.kind, class.polarity) {
                    (NodeKind::Emotion, Some(polarity)) => {
                        return format!(" {}", polarity.emotions()[(pick % 3) as usize]);
                    }
                    (NodeKind::Situation, _) => match &class.event {
                        Some(event) => situated(&first_person(event), class.topic),
                        None => pick_from(&self.lexicon.situation, pick),
                    },
                    (kind, Some(polarity)) => pick_from(self.lexicon.phrases(kind, polarity), pick),
                    (kind, None) => pick_from(self.lexicon.phrases(kind, Polarity::Positive), pick),
                };
                let text = if self.unique || (i >= 1 && n > self.lexicon_len(&class.kind, class.polarity)) {
                    format!("{text} (v{:08x})", mix(base, i as u64) as u32)
                } else {
                    text
                };
                format!(" {text}\n")
            })
            .collect();
        Ok(completions)
    }
}

impl MockBackend {
    fn lexicon_len(&self, kind: &NodeKind, polarity: Option<Polarity>) -> usize {
        match (kind, polarity) {
            (NodeKind::Situation, _) => usize::MAX,
            (kind, p) => self.lexicon.phrases(*kind, p.unwrap_or(Polarity::Positive)).len(),
        }
    }
}

fn pick_from(phrases: &[String], pick: u64) -> String {
    phrases[(pick % phrases.len() as u64) as usize].clone()
}

fn mix(a: u64, b: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(a.to_le_bytes());
    h.update(b.to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("digest has 32 bytes"))
}

/// Rough first-person rewrite of a `PersonX ...` event.
fn first_person(event: &str) -> String {
    let event = event.trim().trim_end_matches('.').trim_end();
    let mut words: Vec<String> = Vec::new();
    let mut after_subject = false;
    for word in event.split_whitespace() {
        let out = match word {
            "PersonX" => {
                after_subject = words.is_empty();
                "I".to_string()
            }
            "PersonX's" => "my".to_string(),
            "PersonY" | "PersonZ" => "my friend".to_string(),
            "PersonY's" | "PersonZ's" => "my friend's".to_string(),
            w if after_subject => {
                after_subject = false;
                first_person_verb(w)
            }
            w => w.to_string(),
        };
        words.push(out);
    }
    let mut s = words.join(" ");
    s.push('.');
    s
}

/// Places a rewritten event in the setting of `topic`.
fn situated(sentence: &str, topic: Option<Topic>) -> String {
    let place = match topic {
        Some(Topic::School) => "at school",
        Some(Topic::Work) => "at work",
        Some(Topic::OrdinaryLife) => "at home",
        Some(Topic::Tourism) => "on my trip",
        Some(Topic::Relationship) => "with my partner",
        None => return sentence.to_string(),
    };
    format!("{} {place}.", sentence.trim_end_matches('.'))
}

fn first_person_verb(verb: &str) -> String {
    match verb {
        "is" => "am".into(),
        "has" => "have".into(),
        "does" => "do".into(),
        "goes" => "go".into(),
        v if ["ches", "shes", "sses", "xes", "zes"].iter().any(|e| v.ends_with(e)) => {
            v[..v.len() - 2].to_string()
        }
        v if v.ends_with("ies") && v.len() > 4 => format!("{}y", &v[..v.len() - 3]),
        v if v.ends_with('s') && !v.ends_with("ss") && v.len() > 2 => v[..v.len() - 1].to_string(),
        v => v.to_string(),
    }
}
