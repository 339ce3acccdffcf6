use std::collections::HashSet;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordClass {
    Verb,
    Noun,
    Other,
}

/// Classifies a single case-folded token. Implementations may consult
/// neighbouring context through `sentence` and `position`.
pub trait Tagger: Send + Sync {
    fn tag(&self, sentence: &[String], position: usize) -> WordClass;
}

/// Closed-class words: pronouns, determiners, prepositions, conjunctions,
/// auxiliaries, modals and frequent adverbs. Never keywords, whatever the tagger says.
const STOPWORDS: &[&str] = &[
    "i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself", "he", "him", "his",
    "himself", "she", "her", "hers", "herself", "it", "its", "itself", "we", "us", "our", "ours",
    "ourselves", "they", "them", "their", "theirs", "themselves", "this", "that", "these", "those",
    "who", "whom", "whose", "which", "what", "where", "when", "why", "how", "a", "an", "the",
    "some", "any", "no", "every", "each", "all", "both", "either", "neither", "other", "another",
    "such", "own", "same", "much", "many", "more", "most", "few", "less", "least", "in", "on",
    "at", "by", "for", "with", "about", "against", "between", "into", "through", "during",
    "before", "after", "above", "below", "to", "from", "up", "down", "out", "off", "over",
    "under", "again", "further", "then", "once", "of", "as", "until", "while", "since", "because",
    "so", "and", "but", "or", "nor", "if", "than", "though", "although", "unless", "whether", "be",
    "am", "is", "are", "was", "were", "been", "being", "have", "has", "had", "having", "do",
    "does", "did", "doing", "will", "would", "shall", "should", "can", "could", "may", "might",
    "must", "ought", "not", "very", "too", "just", "only", "also", "even", "still", "already",
    "here", "there", "now", "yet", "ever", "never", "always", "often", "really", "quite",
    "maybe", "perhaps", "yes", "ok", "okay", "oh", "well", "like", "i'm", "i've", "i'll", "i'd",
    "you're", "you've", "you'll", "it's", "that's", "there's", "don't", "doesn't", "didn't",
    "can't", "won't", "wouldn't", "shouldn't", "couldn't", "isn't", "aren't", "wasn't",
    "weren't", "haven't", "hasn't", "hadn't", "let's", "something", "anything", "nothing",
    "everything", "someone", "anyone", "everyone", "nobody", "somebody", "anybody", "everybody",
    "one", "get", "got", "gets", "getting",
];

/// Common adjectives without a telltale suffix.
const ADJECTIVES: &[&str] = &[
    "new", "old", "good", "bad", "great", "big", "small", "little", "long", "short", "high",
    "low", "young", "happy", "sad", "glad", "sure", "right", "wrong", "hard", "easy", "nice",
    "fine", "able", "free", "full", "real", "true", "best", "better", "worse", "worst", "last",
    "next", "first", "late", "early", "busy", "tired", "angry", "afraid", "alone", "ready",
    "sorry", "proud", "kind", "close", "poor", "rich", "strong", "weak", "safe", "calm", "sick",
    "upset", "bored", "scared", "worried", "excited", "lonely", "friendly", "silly", "lucky",
    "unlucky", "okay", "whole", "own", "certain", "main",
];

/// Base forms of frequent verbs; inflected forms are recognized by stripping
/// regular suffixes.
const VERBS: &[&str] = &[
    "accept", "achieve", "add", "admit", "agree", "allow", "answer", "apologize", "appear", "apply",
    "argue", "arrive", "ask", "attack", "attend", "avoid", "bake", "bear", "beat", "become", "begin",
    "believe", "belong", "blame", "borrow", "break", "bring", "build", "buy", "call", "calm", "care",
    "carry", "catch", "celebrate", "change", "chat", "check", "cheer", "choose", "clean", "climb",
    "close", "come", "comfort", "compete", "complain", "complete", "confront", "consider", "continue",
    "cook", "cope", "cost", "count", "cover", "create", "cry", "cut", "dance", "deal", "decide",
    "defend", "deliver", "deny", "deserve", "destroy", "die", "disappoint", "discover", "discuss",
    "dislike", "draw", "dream", "drink", "drive", "drop", "eat", "encourage", "end", "enjoy", "enter",
    "escape", "expect", "explain", "explore", "express", "fail", "fall", "fear", "feel", "fight",
    "fill", "find", "finish", "fire", "fix", "fly", "focus", "follow", "forget", "forgive", "gain",
    "give", "go", "grow", "guess", "hate", "hear", "help", "hide", "hit", "hold", "hope", "hug",
    "hurt", "ignore", "imagine", "improve", "invite", "join", "judge", "jump", "keep", "kick", "kill",
    "know", "laugh", "lead", "learn", "leave", "lend", "let", "lie", "lift", "listen", "live", "look",
    "lose", "love", "make", "manage", "marry", "mean", "meet", "miss", "move", "need", "notice",
    "offer", "open", "organize", "own", "paint", "pass", "pay", "perform", "pick", "plan", "play",
    "practice", "praise", "prepare", "pretend", "prevent", "promise", "protect", "prove", "pull",
    "punish", "push", "put", "quit", "rain", "reach", "read", "realize", "receive", "recover",
    "refuse", "regret", "relax", "remember", "remind", "repair", "reply", "respect", "rest", "return",
    "ride", "ruin", "run", "save", "say", "scare", "scold", "search", "see", "seem", "sell", "send",
    "share", "shout", "show", "sing", "sit", "sleep", "smile", "solve", "speak", "spend", "stand",
    "start", "stay", "steal", "stop", "study", "succeed", "suffer", "suggest", "support", "surprise",
    "swim", "take", "talk", "teach", "tell", "thank", "think", "throw", "travel", "treat", "try",
    "turn", "understand", "use", "view", "visit", "wait", "wake", "walk", "want", "warn", "wash",
    "waste", "watch", "wear", "win", "wish", "wonder", "work", "worry", "write", "yell",
];

/// Irregular past and participle forms of lexicon verbs.
const IRREGULAR: &[&str] = &[
    "became", "began", "begun", "bore", "born", "broke", "broken", "brought", "built", "bought",
    "caught", "came", "chose", "chosen", "drew", "drawn", "drank", "drunk", "drove", "driven",
    "ate", "eaten", "fell", "fallen", "felt", "fought", "found", "flew", "flown", "forgot",
    "forgotten", "forgave", "forgiven", "gave", "given", "went", "gone", "grew", "grown", "heard",
    "hid", "hidden", "held", "kept", "knew", "known", "led", "left", "lent", "lay", "lost", "made",
    "meant", "met", "paid", "read", "rode", "ridden", "ran", "said", "saw", "seen", "sold", "sent",
    "sang", "sung", "sat", "slept", "spoke", "spoken", "spent", "stood", "stole", "stolen", "swam",
    "took", "taken", "taught", "told", "thought", "threw", "thrown", "understood", "woke", "woken",
    "wore", "worn", "won", "wrote", "written",
];

const NOUN_SUFFIXES: &[&str] = &["tion", "sion", "ment", "ness", "ity", "ship", "hood", "ance", "ence", "ism", "ist"];
const ADJECTIVE_SUFFIXES: &[&str] = &["ful", "ous", "ive", "able", "ible", "less", "ish", "ical", "ic", "ent", "ant", "al"];

struct Lexicons {
    stop: HashSet<&'static str>,
    adjectives: HashSet<&'static str>,
    verbs: HashSet<&'static str>,
    irregular: HashSet<&'static str>,
}

fn lexicons() -> &'static Lexicons {
    static LEX: OnceLock<Lexicons> = OnceLock::new();
    LEX.get_or_init(|| Lexicons {
        stop: STOPWORDS.iter().copied().collect(),
        adjectives: ADJECTIVES.iter().copied().collect(),
        verbs: VERBS.iter().copied().collect(),
        irregular: IRREGULAR.iter().copied().collect(),
    })
}

pub fn is_stopword(token: &str) -> bool {
    lexicons().stop.contains(token)
}

/// Candidate base forms of an inflected token.
fn base_forms(token: &str) -> Vec<String> {
    let mut out = vec![token.to_string()];
    for suffix in ["ing", "ed", "es", "s"] {
        if let Some(stem) = token.strip_suffix(suffix) {
            if stem.len() < 2 {
                continue;
            }
            out.push(stem.to_string());
            out.push(format!("{stem}e"));
            let b = stem.as_bytes();
            if b.len() >= 3 && b[b.len() - 1] == b[b.len() - 2] {
                out.push(stem[..stem.len() - 1].to_string());
            }
            if let Some(y) = stem.strip_suffix('i') {
                out.push(format!("{y}y"));
            }
        }
    }
    out
}

/// Lexicon-and-suffix tagger; see the module docs for the rules.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicTagger;

impl HeuristicTagger {
    fn is_verb(token: &str) -> bool {
        let lex = lexicons();
        lex.irregular.contains(token) || base_forms(token).iter().any(|b| lex.verbs.contains(b.as_str()))
    }
}

impl Tagger for HeuristicTagger {
    fn tag(&self, sentence: &[String], position: usize) -> WordClass {
        let token = sentence[position].as_str();
        let lex = lexicons();
        if lex.stop.contains(token) || !token.chars().any(|c| c.is_alphabetic()) || token.len() < 2 {
            return WordClass::Other;
        }
        if token.contains('\'') {
            return WordClass::Other;
        }
        // After a determiner, a lexicon verb is usually a noun ("the view").
        let after_determiner = position > 0
            && matches!(sentence[position - 1].as_str(), "a" | "an" | "the" | "my" | "your" | "his" | "her" | "our" | "their");
        if Self::is_verb(token) {
            return if after_determiner { WordClass::Noun } else { WordClass::Verb };
        }
        if lex.adjectives.contains(token) || token.ends_with("ly") {
            return WordClass::Other;
        }
        if (token.ends_with("ing") || token.ends_with("ed")) && token.len() > 4 {
            return WordClass::Verb;
        }
        if NOUN_SUFFIXES.iter().any(|s| token.ends_with(s)) {
            return WordClass::Noun;
        }
        if ADJECTIVE_SUFFIXES.iter().any(|s| token.ends_with(s) && token.len() > s.len() + 2) {
            return WordClass::Other;
        }
        WordClass::Noun
    }
}
