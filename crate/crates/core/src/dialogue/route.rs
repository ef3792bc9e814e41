use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use crate::dataset::{Catalog, ItemId};
use crate::llm::{normalize_title, ParseError, ParseErrorKind};
use crate::prompt::Domain;

use super::{DialogueState, TaskKind};

static POSITION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)(?:#|\bnumber\s+|\bno\.\s*)([1-9])\b").unwrap());
static YEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(1[89]\d\d|2\d\d\d)\b").unwrap());
static TRAILING_GROUP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s*\([^()]*\)\s*$").unwrap());
static ARTICLE_SUFFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^(.*\S),\s*(a|an|the)$").unwrap());

pub const DEFAULT_RECOMMEND_WORDS: [&str; 13] = [
    "recommend",
    "suggest",
    "movie",
    "movies",
    "film",
    "films",
    "watch",
    "more like",
    "something",
    "another",
    "newer",
    "looking for",
    "want",
];

const WHY_WORDS: [&str; 3] = ["why", "what made you", "reason"];
const DETAIL_WORDS: [&str; 8] = ["tell me about", "what is", "what's", "who directed", "who stars", "who is in", "plot", "more about"];
const DOMAIN_WORDS: [(&str, Domain); 16] = [
    ("book", Domain::Books),
    ("books", Domain::Books),
    ("novel", Domain::Books),
    ("novels", Domain::Books),
    ("tv show", Domain::Tv),
    ("tv shows", Domain::Tv),
    ("tv series", Domain::Tv),
    ("television", Domain::Tv),
    ("podcast", Domain::Podcasts),
    ("podcasts", Domain::Podcasts),
    ("game", Domain::Games),
    ("games", Domain::Games),
    ("music", Domain::Music),
    ("song", Domain::Music),
    ("songs", Domain::Music),
    ("albums", Domain::Music),
];

/// Finds catalog titles mentioned in free text.
///
/// Each title is matched by its name without the year and alternate-title
/// groups, with a trailing article moved back to the front as people write
/// it ("The Usual Suspects") and also without the article.
#[derive(Debug, Clone, Default)]
pub struct MentionIndex {
    keys: Vec<(ItemId, String)>,
}

impl MentionIndex {
    pub fn new(catalog: &Catalog) -> Self {
        let mut keys = Vec::new();
        for item in catalog.iter() {
            for k in title_keys(&item.title) {
                if k.chars().filter(|c| c.is_alphanumeric()).count() >= 3 {
                    keys.push((item.item_id, k));
                }
            }
        }
        Self { keys }
    }

    /// The item whose longest key occurs in `text` at word boundaries,
    /// restricted to `within` when given. Ties go to the smaller id.
    pub fn find(&self, text: &str, within: Option<&BTreeSet<ItemId>>) -> Option<ItemId> {
        let hay = text.to_lowercase();
        let mut best: Option<(usize, ItemId)> = None;
        for (id, key) in &self.keys {
            if within.is_some_and(|w| !w.contains(id)) {
                continue;
            }
            if contains_words(&hay, key) {
                let better = match best {
                    None => true,
                    Some((len, bid)) => key.len() > len || (key.len() == len && *id < bid),
                };
                if better {
                    best = Some((key.len(), *id));
                }
            }
        }
        best.map(|(_, id)| id)
    }
}

fn title_keys(title: &str) -> Vec<String> {
    let mut core = normalize_title(title);
    while TRAILING_GROUP.is_match(&core) {
        core = TRAILING_GROUP.replace(&core, "").into_owned();
    }
    let core = core.trim().to_lowercase();
    let mut keys = vec![core.clone()];
    if let Some(c) = ARTICLE_SUFFIX.captures(&core) {
        keys.push(format!("{} {}", &c[2], &c[1]));
        keys.push(c[1].to_string());
    }
    keys
}

fn contains_words(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let bytes = hay.as_bytes();
    let mut from = 0;
    while let Some(pos) = hay[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let left_ok = start == 0 || !is_word_byte(bytes[start - 1]);
        let right_ok = end == bytes.len() || !is_word_byte(bytes[end]);
        if left_ok && right_ok {
            return true;
        }
        from = start + hay[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b >= 0x80
}

/// Domains named in `query`.
pub fn domains_in(query: &str) -> BTreeSet<Domain> {
    let q = query.to_lowercase();
    DOMAIN_WORDS.iter().filter(|(w, _)| contains_words(&q, w)).map(|(_, d)| *d).collect()
}

/// Years in `query` later than `max_year`.
pub fn year_beyond(query: &str, max_year: i32) -> Option<i32> {
    YEAR.captures_iter(query).filter_map(|c| c[1].parse::<i32>().ok()).filter(|&y| y > max_year).max()
}

fn position_ref(query: &str, state: &DialogueState) -> Option<ItemId> {
    let top = state.last_top5.as_ref()?;
    let n: usize = POSITION.captures(query)?[1].parse().ok()?;
    top.get(n - 1).copied()
}

fn any_word(q: &str, words: &[&str]) -> bool {
    words.iter().any(|w| contains_words(q, w))
}

/// The rule pass of task determination. `None` means the rules could not
/// decide and the classifier should be asked.
pub fn rule_task(query: &str, state: &DialogueState, mentions: &MentionIndex, recommend_words: &[String]) -> Option<TaskKind> {
    let q = query.to_lowercase();
    if any_word(&q, &WHY_WORDS) {
        if let Some(item_id) = mentions.find(query, Some(&state.shown)).or_else(|| position_ref(query, state)) {
            return Some(TaskKind::Explain { item_id });
        }
    }
    let domains = domains_in(query);
    if !domains.is_empty() {
        return Some(TaskKind::CrossDomain { domains });
    }
    if any_word(&q, &DETAIL_WORDS) {
        let item = position_ref(query, state).or_else(|| mentions.find(query, Some(&state.shown))).or_else(|| mentions.find(query, None));
        if let Some(item_id) = item {
            return Some(TaskKind::DetailQa { item_id });
        }
    }
    if recommend_words.iter().any(|w| contains_words(&q, &w.to_lowercase())) {
        return Some(TaskKind::Recommend);
    }
    None
}

/// Labels the classifier prompt may answer with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Recommend,
    Explain,
    Detail,
    CrossDomain,
    Chitchat,
}

/// Reads the first known label in a classifier answer.
pub fn parse_label(text: &str) -> Result<Label, ParseError> {
    let t = text.to_lowercase();
    let found = [
        ("crossdomain", Label::CrossDomain),
        ("cross-domain", Label::CrossDomain),
        ("recommend", Label::Recommend),
        ("explain", Label::Explain),
        ("detail", Label::Detail),
        ("chitchat", Label::Chitchat),
    ]
    .into_iter()
    .filter_map(|(w, l)| t.find(w).map(|p| (p, l)))
    .min_by_key(|(p, _)| *p);
    found.map(|(_, l)| l).ok_or_else(|| ParseError::new(ParseErrorKind::UnknownLabel, format!("no task label in {:?}", text.trim())))
}
