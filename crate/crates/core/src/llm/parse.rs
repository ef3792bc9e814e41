//! Strict parsers for model output: ranked title lists and single ratings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::{Catalog, ItemId};

/// The phrase that introduces a ranked list in every top-k answer.
pub const LIST_ANCHOR: &str = "The current list is:";

const ARTICLES: [&str; 3] = ["A", "An", "The"];

static TRAILING_PAREN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s*(\([^()]*\))\s*$").unwrap());
static YEAR_PAREN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\((\d{4})\)$").unwrap());
static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(\d{1,3})\s*[.)]\s*(.*\S)\s*$").unwrap());
static LOST_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\[?[^\s:\[\]]{1,8}\]?\s*:\s*\S.*\(\d{4}\)").unwrap());
static WITH_YEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(.*?\(\d{4}\))\s*(?:[-:]\s*(.*\S))?\s*$").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").unwrap());
static ANCHOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)the\s+current\s+list\s+is\s*:").unwrap());
static RATE_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\brat(?:e|ing)\b").unwrap());

/// Puts a title into catalog form.
///
/// Whitespace runs collapse to one space, a leading `A`, `An` or `The` moves
/// to a comma suffix placed before the trailing parenthetical groups, and a
/// year group is separated from the name by one space. Titles that already
/// end in a suffixed article are left alone, which keeps the function
/// idempotent.
///
/// ```
/// use chatrec::llm::normalize_title;
/// assert_eq!(normalize_title("The Shawshank Redemption (1994)"), "Shawshank Redemption, The (1994)");
/// assert_eq!(normalize_title("Fargo (1996)"), "Fargo (1996)");
/// ```
pub fn normalize_title(raw: &str) -> String {
    let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    let (mut core, groups) = split_trailing_groups(&collapsed);
    if let Some((article, rest)) = core.split_once(' ') {
        let article = article.to_string();
        if ARTICLES.contains(&article.as_str()) && !rest.is_empty() && !has_suffixed_article(&core) {
            core = format!("{rest}, {article}");
        }
    }
    let mut out = core;
    for g in groups {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&g);
    }
    out
}

fn has_suffixed_article(core: &str) -> bool {
    ARTICLES.iter().any(|a| core.ends_with(&format!(", {a}")))
}

/// Splits `Name (Alt) (1995)` into `Name` and its trailing groups, in order.
fn split_trailing_groups(s: &str) -> (String, Vec<String>) {
    let mut core = s.to_string();
    let mut groups = Vec::new();
    while let Some(m) = TRAILING_PAREN.captures(&core) {
        let whole = m.get(0).unwrap();
        if whole.start() == 0 {
            break;
        }
        groups.push(m[1].to_string());
        core.truncate(whole.start());
    }
    groups.reverse();
    (core.trim_end().to_string(), groups)
}

/// The normalized title with any trailing `(YYYY)` group removed.
fn without_year(normalized: &str) -> String {
    let (core, mut groups) = split_trailing_groups(normalized);
    if groups.last().is_some_and(|g| YEAR_PAREN.is_match(g)) {
        groups.pop();
    }
    std::iter::once(core).chain(groups).filter(|s| !s.is_empty()).collect::<Vec<_>>().join(" ")
}

/// Title lookup used to resolve parsed lines to item ids.
///
/// When two items share a title, the smaller id wins.
#[derive(Debug, Clone, Default)]
pub struct TitleIndex {
    titles: BTreeMap<ItemId, String>,
    exact: BTreeMap<String, ItemId>,
    yearless: BTreeMap<String, ItemId>,
}

impl TitleIndex {
    pub fn new<'a>(items: impl IntoIterator<Item = (ItemId, &'a str)>) -> Self {
        let mut idx = TitleIndex::default();
        for (id, title) in items {
            idx.titles.insert(id, title.to_string());
        }
        for (&id, title) in &idx.titles {
            let norm = normalize_title(title);
            idx.yearless.entry(without_year(&norm)).or_insert(id);
            idx.exact.entry(norm).or_insert(id);
        }
        idx
    }

    pub fn from_catalog(catalog: &Catalog) -> Self {
        Self::new(catalog.iter().map(|i| (i.item_id, i.title.as_str())))
    }

    /// Index restricted to `ids`, in the catalog's spelling.
    pub fn subset(catalog: &Catalog, ids: &[ItemId]) -> Self {
        Self::new(ids.iter().filter_map(|id| catalog.get(*id)).map(|i| (i.item_id, i.title.as_str())))
    }

    pub fn title(&self, id: ItemId) -> Option<&str> {
        self.titles.get(&id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.titles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.titles.is_empty()
    }

    /// Exact match after normalization, then a match that ignores the year.
    pub fn resolve(&self, raw: &str) -> Option<ItemId> {
        let norm = normalize_title(raw);
        self.exact.get(&norm).or_else(|| self.yearless.get(&without_year(&norm))).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    WrongCount,
    UnknownTitle,
    LostId,
    NoAnchor,
    NonNumeric,
    UnknownLabel,
    Empty,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::WrongCount => "wrong_count",
            ParseErrorKind::UnknownTitle => "unknown_title",
            ParseErrorKind::LostId => "lost_id",
            ParseErrorKind::NoAnchor => "no_anchor",
            ParseErrorKind::NonNumeric => "non_numeric",
            ParseErrorKind::UnknownLabel => "unknown_label",
            ParseErrorKind::Empty => "empty",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{kind}: {detail}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub detail: String,
}

impl ParseError {
    pub fn new(kind: ParseErrorKind, detail: impl Into<String>) -> Self {
        Self { kind, detail: detail.into() }
    }
}

/// One resolved line of a ranked answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub item_id: ItemId,
    /// The title as the model wrote it.
    pub raw_title: String,
    pub reason: Option<String>,
}

impl RankedEntry {
    pub fn ids(entries: &[RankedEntry]) -> Vec<ItemId> {
        entries.iter().map(|e| e.item_id).collect()
    }
}

/// Formats titles the way the top-k prompt asks the model to answer.
pub fn format_ranked_list<'a>(titles: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::from(LIST_ANCHOR);
    for (n, t) in titles.into_iter().enumerate() {
        out.push_str(&format!("\n{}.{}", n + 1, t));
    }
    out
}

/// Parses a ranked answer into exactly `expected_n` distinct items of `index`.
///
/// Only the text after the last anchor phrase is read. Numbered lines
/// (`3.Title (Year)`, optionally followed by ` - reason`) are items; a line
/// shaped like `x:Title` is the lost-id failure; other lines are ignored.
pub fn parse_ranked_list(text: &str, expected_n: usize, index: &TitleIndex) -> Result<Vec<RankedEntry>, ParseError> {
    let Some(anchor) = ANCHOR.find_iter(text).last() else {
        return Err(ParseError::new(ParseErrorKind::NoAnchor, format!("missing \"{LIST_ANCHOR}\"")));
    };
    let body = &text[anchor.end()..];

    let mut lines = Vec::new();
    for line in body.lines() {
        if let Some(c) = NUMBERED.captures(line) {
            lines.push(c[2].to_string());
        } else if LOST_ID.is_match(line) {
            return Err(ParseError::new(ParseErrorKind::LostId, format!("unnumbered id-style line {:?}", line.trim())));
        }
    }
    if lines.len() != expected_n {
        return Err(ParseError::new(ParseErrorKind::WrongCount, format!("expected {expected_n} items, found {}", lines.len())));
    }

    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(lines.len());
    for line in lines {
        let (title, reason) = split_reason(&line);
        let Some(item_id) = index.resolve(&title) else {
            return Err(ParseError::new(ParseErrorKind::UnknownTitle, format!("{title:?} is not a listed item")));
        };
        if !seen.insert(item_id) {
            return Err(ParseError::new(ParseErrorKind::WrongCount, format!("{title:?} appears twice")));
        }
        out.push(RankedEntry { item_id, raw_title: title, reason });
    }
    Ok(out)
}

fn split_reason(line: &str) -> (String, Option<String>) {
    if let Some(c) = WITH_YEAR.captures(line) {
        return (c[1].trim().to_string(), c.get(2).map(|m| m.as_str().to_string()));
    }
    match line.split_once(" - ") {
        Some((t, r)) if !r.trim().is_empty() => (t.trim().to_string(), Some(r.trim().to_string())),
        _ => (line.trim().to_string(), None),
    }
}

/// Extracts a rating in `[1, 5]`.
///
/// Numbers after the first "rate"/"rating" are preferred; without that word
/// the first in-range number anywhere counts.
pub fn parse_rating(text: &str) -> Result<f64, ParseError> {
    let in_range = |s: &str| NUMBER.find_iter(s).filter_map(|m| m.as_str().parse::<f64>().ok()).find(|v| (1.0..=5.0).contains(v));
    let after_word = RATE_WORD.find(text).and_then(|m| in_range(&text[m.end()..]));
    after_word
        .or_else(|| in_range(text))
        .ok_or_else(|| ParseError::new(ParseErrorKind::NonNumeric, format!("no rating in {:?}", truncate(text, 80))))
}

/// Accepts any non-blank answer.
pub fn parse_free_text(text: &str) -> Result<String, ParseError> {
    let t = text.trim();
    if t.is_empty() {
        Err(ParseError::new(ParseErrorKind::Empty, "blank answer"))
    } else {
        Ok(t.to_string())
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}
