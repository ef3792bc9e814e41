//! Renders every prompt the system sends.
//!
//! Wording lives in plain-text templates under `crates/core/templates/`. A
//! template is UTF-8 text with `{{field}}` placeholders; every placeholder
//! must be supplied when rendering, and unknown names are an error. The
//! defaults are compiled in, and [`Templates::load_dir`] overrides any of them
//! from a directory of same-named `.txt` files without a rebuild.
//!
//! Builders are pure: the same inputs, including the shuffle seed, give a
//! byte-identical [`PromptBundle`].

mod templates;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Catalog, ItemId, RatingEvent, UserId, UserProfile};
use crate::llm::{CompletionRequest, Message};
use crate::recsys::CandidateSet;

pub use templates::{Templates, TEMPLATE_NAMES};

pub const DEFAULT_HISTORY_CAP: usize = 20;
pub const DEFAULT_CANDIDATES: usize = 20;
pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_TEMPERATURE: f64 = 0.9;

/// Flag set on bundles rendered without any rating history.
pub const FLAG_EMPTY_HISTORY: &str = "empty_history";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PromptError {
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("need at least {need} candidates, got {have}")]
    TooFewCandidates { need: usize, have: usize },
    #[error("item {0} is not in the catalog")]
    UnknownItem(ItemId),
    #[error("interaction history is empty")]
    EmptyHistory,
    #[error("item {0} was not recommended in this session")]
    NotRecommended(ItemId),
    #[error("at least one target domain is required")]
    EmptyDomains,
    #[error("nothing was retrieved to recommend from")]
    EmptyRetrieval,
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("unknown variant {0:?}")]
    UnknownVariant(String),
    #[error("template {template}: no value for {{{{{field}}}}}")]
    MissingField { template: String, field: String },
    #[error("template {template}: unterminated placeholder")]
    Unterminated { template: String },
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template file {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Prompt variants of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Candidates in recommender order, top-1 stated as background.
    #[default]
    Standard,
    /// Candidates shuffled with a seeded generator.
    WRandom,
    /// Recommender order without the top-1 background sentence.
    WTop1,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Standard, Variant::WRandom, Variant::WTop1];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::WRandom => "w_random",
            Variant::WTop1 => "w_top1",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['/', '-'], "_").as_str() {
            "standard" => Ok(Variant::Standard),
            "w_random" | "wrandom" | "random" => Ok(Variant::WRandom),
            "w_top1" | "wtop1" | "top1" => Ok(Variant::WTop1),
            _ => Err(PromptError::UnknownVariant(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpectedFormat {
    RankedList { n: usize },
    RatingValue,
    FreeText,
}

/// A rendered prompt and what its answer should look like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub variant: Variant,
    pub temperature: f64,
    pub expected_format: ExpectedFormat,
    /// Item ids in the order they appear in `user_text`.
    pub candidate_order: Vec<ItemId>,
    pub flags: Vec<String>,
}

impl PromptBundle {
    pub fn messages(&self) -> Vec<Message> {
        vec![Message::system(&self.system_text), Message::user(&self.user_text)]
    }

    pub fn request(&self, model_id: &str) -> CompletionRequest {
        CompletionRequest::new(model_id, self.messages(), self.temperature)
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}

/// A user's rating history as prompt lines, most recent last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSummary {
    pub user_id: UserId,
    pub lines: Vec<String>,
    /// The training events behind `lines`, in the same order.
    pub items: Vec<(ItemId, u8)>,
    pub cap: usize,
}

impl InteractionSummary {
    /// Keeps the `cap` most recent of the user's events in `train`.
    pub fn from_events(user: UserId, train: &[RatingEvent], catalog: &Catalog, cap: usize) -> Self {
        let mut mine: Vec<&RatingEvent> = train.iter().filter(|e| e.user_id == user && catalog.contains(e.item_id)).collect();
        mine.sort_by_key(|e| (e.timestamp, e.item_id));
        let skip = mine.len().saturating_sub(cap);
        let kept = &mine[skip..];
        Self {
            user_id: user,
            lines: kept.iter().map(|e| history_line(&catalog.get(e.item_id).unwrap().title, e.rating)).collect(),
            items: kept.iter().map(|e| (e.item_id, e.rating)).collect(),
            cap,
        }
    }

    pub fn empty(user: UserId, cap: usize) -> Self {
        Self { user_id: user, lines: Vec::new(), items: Vec::new(), cap }
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }
}

pub fn history_line(title: &str, rating: u8) -> String {
    format!("{title}, rated {rating}/5")
}

/// Non-movie domains for cross-domain suggestions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Books,
    Tv,
    Podcasts,
    Games,
    Music,
}

impl Domain {
    pub const ALL: [Domain; 5] = [Domain::Books, Domain::Tv, Domain::Podcasts, Domain::Games, Domain::Music];

    pub fn label(self) -> &'static str {
        match self {
            Domain::Books => "books",
            Domain::Tv => "TV series",
            Domain::Podcasts => "podcasts",
            Domain::Games => "games",
            Domain::Music => "music",
        }
    }
}

impl FromStr for Domain {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "books" | "book" => Ok(Domain::Books),
            "tv" | "tv series" | "television" => Ok(Domain::Tv),
            "podcasts" | "podcast" => Ok(Domain::Podcasts),
            "games" | "game" => Ok(Domain::Games),
            "music" => Ok(Domain::Music),
            _ => Err(PromptError::UnknownDomain(s.to_string())),
        }
    }
}

/// Fields for one template rendering.
pub type Fields<'a> = BTreeMap<&'a str, String>;

/// Shuffles `ids` exactly as the `w_random` variant does.
pub fn seeded_shuffle(ids: &mut [ItemId], seed: u64) {
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
}

/// Builds prompts against one catalog and template set.
#[derive(Debug, Clone)]
pub struct PromptForge {
    catalog: Arc<Catalog>,
    templates: Templates,
    pub history_cap: usize,
    pub top_k: usize,
    pub temperature: f64,
}

impl PromptForge {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        Self {
            catalog,
            templates: Templates::default(),
            history_cap: DEFAULT_HISTORY_CAP,
            top_k: DEFAULT_TOP_K,
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    pub fn with_templates(mut self, templates: Templates) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn templates(&self) -> &Templates {
        &self.templates
    }

    pub fn summary(&self, user: UserId, train: &[RatingEvent]) -> InteractionSummary {
        InteractionSummary::from_events(user, train, &self.catalog, self.history_cap)
    }

    /// Renders a named template.
    pub fn render(&self, name: &str, fields: &Fields<'_>) -> Result<String, PromptError> {
        self.templates.render(name, fields)
    }

    pub fn system_text(&self) -> Result<String, PromptError> {
        self.render("system", &Fields::new())
    }

    pub fn profile_block(&self, profile: &UserProfile) -> Result<String, PromptError> {
        self.render(
            "profile",
            &Fields::from([
                ("age", profile.age.to_string()),
                ("gender", profile.gender.to_string()),
                ("occupation", profile.occupation.clone()),
            ]),
        )
    }

    /// The history block, or the profile-only framing when there is none.
    pub fn history_block(&self, summary: &InteractionSummary) -> Result<String, PromptError> {
        if summary.is_empty() {
            return self.render("no_history", &Fields::new());
        }
        let start = summary.lines.len().saturating_sub(summary.cap.min(self.history_cap));
        let lines = summary.lines[start..].iter().map(|l| format!("- {l}")).collect::<Vec<_>>().join("\n");
        self.render("history", &Fields::from([("lines", lines)]))
    }

    pub fn request_block(&self, query: Option<&str>) -> Result<String, PromptError> {
        match query.map(str::trim).filter(|q| !q.is_empty()) {
            Some(q) => self.render("request", &Fields::from([("query", q.to_string())])),
            None => Ok(String::new()),
        }
    }

    fn title(&self, id: ItemId) -> Result<&str, PromptError> {
        self.catalog.get(id).map(|i| i.title.as_str()).ok_or(PromptError::UnknownItem(id))
    }

    fn bundle(
        &self,
        user_text: String,
        variant: Variant,
        format: ExpectedFormat,
        order: Vec<ItemId>,
        summary: &InteractionSummary,
    ) -> Result<PromptBundle, PromptError> {
        let mut flags = Vec::new();
        if summary.is_empty() {
            flags.push(FLAG_EMPTY_HISTORY.to_string());
        }
        Ok(PromptBundle {
            system_text: self.system_text()?,
            user_text,
            variant,
            temperature: self.temperature,
            expected_format: format,
            candidate_order: order,
            flags,
        })
    }

    /// The candidate-reranking prompt.
    ///
    /// `standard` keeps the recommender order, `w_random` shuffles it with
    /// `seed`, and `w_top1` keeps the order but drops the sentence naming the
    /// recommender's top-1.
    pub fn build_topk_prompt(
        &self,
        profile: &UserProfile,
        summary: &InteractionSummary,
        candidates: &CandidateSet,
        variant: Variant,
        seed: u64,
        query: Option<&str>,
    ) -> Result<PromptBundle, PromptError> {
        if candidates.is_empty() {
            return Err(PromptError::EmptyCandidates);
        }
        if candidates.len() < self.top_k {
            return Err(PromptError::TooFewCandidates { need: self.top_k, have: candidates.len() });
        }
        let mut order = candidates.item_ids();
        if variant == Variant::WRandom {
            seeded_shuffle(&mut order, seed);
        }
        let listed = order.iter().map(|&id| self.title(id).map(|t| format!("- {t}"))).collect::<Result<Vec<_>, _>>()?;
        let background = match (variant, candidates.top1()) {
            (Variant::WTop1, _) | (_, None) => String::new(),
            (_, Some(top)) => self.render("top1_background", &Fields::from([("title", self.title(top)?.to_string())]))?,
        };
        let text = self.render(
            "topk",
            &Fields::from([
                ("profile", self.profile_block(profile)?),
                ("history", self.history_block(summary)?),
                ("request", self.request_block(query)?),
                ("background", background),
                ("candidates", listed.join("\n")),
                ("k", self.top_k.to_string()),
            ]),
        )?;
        self.bundle(text, variant, ExpectedFormat::RankedList { n: self.top_k }, order, summary)
    }

    pub fn build_rating_prompt(
        &self,
        profile: &UserProfile,
        summary: &InteractionSummary,
        target: ItemId,
    ) -> Result<PromptBundle, PromptError> {
        let title = self.title(target)?.to_string();
        let text = self.render(
            "rating",
            &Fields::from([("profile", self.profile_block(profile)?), ("history", self.history_block(summary)?), ("title", title)]),
        )?;
        self.bundle(text, Variant::Standard, ExpectedFormat::RatingValue, vec![target], summary)
    }

    pub fn build_preference_summary_prompt(
        &self,
        profile: &UserProfile,
        summary: &InteractionSummary,
    ) -> Result<PromptBundle, PromptError> {
        if summary.is_empty() {
            return Err(PromptError::EmptyHistory);
        }
        let text = self.render(
            "preference_summary",
            &Fields::from([("profile", self.profile_block(profile)?), ("history", self.history_block(summary)?)]),
        )?;
        self.bundle(text, Variant::Standard, ExpectedFormat::FreeText, Vec::new(), summary)
    }

    /// Asks why `item` suits the user. `recommended` holds every item shown
    /// to the user this session; anything else is a routing bug.
    pub fn build_explanation_prompt(
        &self,
        item: ItemId,
        profile: &UserProfile,
        summary: &InteractionSummary,
        recommended: &BTreeSet<ItemId>,
    ) -> Result<PromptBundle, PromptError> {
        if !recommended.contains(&item) {
            return Err(PromptError::NotRecommended(item));
        }
        let text = self.render(
            "explanation",
            &Fields::from([
                ("profile", self.profile_block(profile)?),
                ("history", self.history_block(summary)?),
                ("title", self.title(item)?.to_string()),
            ]),
        )?;
        self.bundle(text, Variant::Standard, ExpectedFormat::FreeText, vec![item], summary)
    }

    pub fn build_detail_prompt(
        &self,
        item: ItemId,
        profile: &UserProfile,
        summary: &InteractionSummary,
        query: &str,
    ) -> Result<PromptBundle, PromptError> {
        let it = self.catalog.get(item).ok_or(PromptError::UnknownItem(item))?;
        let genres = if it.genres.is_empty() { "unknown".to_string() } else { it.genre_labels().join(", ") };
        let text = self.render(
            "detail",
            &Fields::from([
                ("profile", self.profile_block(profile)?),
                ("title", it.title.clone()),
                ("genres", genres),
                ("query", query.trim().to_string()),
            ]),
        )?;
        self.bundle(text, Variant::Standard, ExpectedFormat::FreeText, vec![item], summary)
    }

    pub fn build_crossdomain_prompt(
        &self,
        profile: &UserProfile,
        summary: &InteractionSummary,
        domains: &BTreeSet<Domain>,
        query: Option<&str>,
    ) -> Result<PromptBundle, PromptError> {
        if domains.is_empty() {
            return Err(PromptError::EmptyDomains);
        }
        let text = self.render(
            "crossdomain",
            &Fields::from([
                ("profile", self.profile_block(profile)?),
                ("history", self.history_block(summary)?),
                ("request", self.request_block(query)?),
                ("domains", domains.iter().map(|d| d.label()).collect::<Vec<_>>().join(", ")),
            ]),
        )?;
        self.bundle(text, Variant::Standard, ExpectedFormat::FreeText, Vec::new(), summary)
    }

    pub fn build_classify_prompt(&self, query: &str) -> Result<PromptBundle, PromptError> {
        let text = self.render("classify", &Fields::from([("query", query.trim().to_string())]))?;
        let empty = InteractionSummary::empty(0, self.history_cap);
        let mut b = self.bundle(text, Variant::Standard, ExpectedFormat::FreeText, Vec::new(), &empty)?;
        b.flags.clear();
        b.temperature = 0.0;
        Ok(b)
    }

    pub fn build_consistency_prompt(&self, item: ItemId) -> Result<PromptBundle, PromptError> {
        let text = self.render("consistency", &Fields::from([("title", self.title(item)?.to_string())]))?;
        let empty = InteractionSummary::empty(0, self.history_cap);
        let mut b = self.bundle(text, Variant::Standard, ExpectedFormat::FreeText, vec![item], &empty)?;
        b.flags.clear();
        Ok(b)
    }

    pub fn build_chitchat_prompt(&self, query: &str) -> Result<PromptBundle, PromptError> {
        let text = self.render("chitchat", &Fields::from([("query", query.trim().to_string())]))?;
        let empty = InteractionSummary::empty(0, self.history_cap);
        let mut b = self.bundle(text, Variant::Standard, ExpectedFormat::FreeText, Vec::new(), &empty)?;
        b.flags.clear();
        Ok(b)
    }
}
