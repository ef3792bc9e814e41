//! Chat sessions: task routing, the recommend path and the free-text paths.
//!
//! A [`DialogueEngine`] holds everything shared between sessions (catalog,
//! profiles, the candidate source, the language model binding). Each
//! session owns a [`DialogueState`] and feeds it to
//! [`DialogueEngine::handle_turn`] one query at a time.

mod route;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::coldstart::{
    build_coldstart_prompt, doc_title_index, query_text, retrieve, ColdstartError, EmbeddingCache, ExternalItemDoc, QueryMode,
    DEFAULT_RETRIEVAL_K,
};
use crate::dataset::{Catalog, Dataset, ItemId, RatingEvent, UserId, UserProfile};
use crate::llm::{format_ranked_list, parse_free_text, parse_ranked_list, Attempted, Binding, LlmError, Message, RankedEntry, TitleIndex};
use crate::prompt::{InteractionSummary, PromptBundle, PromptError, PromptForge, Variant, DEFAULT_CANDIDATES};
use crate::recsys::{CandidateSet, CandidateSource, RecsysError};

pub use route::{domains_in, parse_label, rule_task, year_beyond, Label, MentionIndex, DEFAULT_RECOMMEND_WORDS};

/// The reply came from the fallback, not the language model.
pub const FLAG_DEGRADED: &str = "degraded_fallback";
/// The task classifier gave no usable label and the turn became chitchat.
pub const FLAG_CLASSIFIER_FALLBACK: &str = "classifier_fallback";
pub const FLAG_COLDSTART: &str = "coldstart";
/// A new-item query found no usable document cache and used the recommender.
pub const FLAG_COLDSTART_UNAVAILABLE: &str = "coldstart_unavailable";
pub const FLAG_SUMMARY_FAILED: &str = "preference_summary_failed";

#[derive(Debug, thiserror::Error)]
pub enum DialogueError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("consistency probe needs at least one item")]
    NoProbeItems,
    #[error("item {0} was a candidate that made the top five, or was never a candidate")]
    NotProbeable(ItemId),
    #[error(transparent)]
    Recsys(#[from] RecsysError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Coldstart(#[from] ColdstartError),
}

/// What a turn asks for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    Recommend,
    Explain { item_id: ItemId },
    DetailQa { item_id: ItemId },
    CrossDomain { domains: BTreeSet<crate::prompt::Domain> },
    Chitchat,
}

/// One recommended item as shown to the user. Catalog items carry
/// `item_id`; new items from the document cache carry `doc_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Card {
    pub item_id: Option<ItemId>,
    pub doc_id: Option<String>,
    pub title: String,
    pub year: Option<i32>,
    pub genres: Vec<String>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    #[serde(flatten)]
    pub task: TaskKind,
    pub text: String,
    /// Present exactly when the task is `recommend`.
    pub recommendations: Option<Vec<Card>>,
    pub degraded: bool,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub query: String,
    pub reply: Reply,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub session_id: String,
    pub user_id: UserId,
    pub history: Vec<Turn>,
    pub last_candidates: Option<CandidateSet>,
    pub last_top5: Option<Vec<ItemId>>,
    /// Every catalog item recommended so far in this session.
    pub shown: BTreeSet<ItemId>,
    pub preference_summary: Option<String>,
}

impl DialogueState {
    pub fn new(session_id: impl Into<String>, user_id: UserId) -> Self {
        Self {
            session_id: session_id.into(),
            user_id,
            history: Vec::new(),
            last_candidates: None,
            last_top5: None,
            shown: BTreeSet::new(),
            preference_summary: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DialogueConfig {
    /// Candidates fetched from the recommender per recommend turn.
    pub candidates: usize,
    pub variant: Variant,
    /// Rerank the previous turn's candidates instead of fetching new ones.
    pub reuse_candidates: bool,
    /// Ask the model for a preference summary once per session.
    pub summarize_preferences: bool,
    /// Earlier (query, reply) pairs sent along with each prompt.
    pub context_turns: usize,
    pub retrieval_k: usize,
    pub query_mode: QueryMode,
    pub recommend_words: Vec<String>,
    pub seed: u64,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        Self {
            candidates: DEFAULT_CANDIDATES,
            variant: Variant::Standard,
            reuse_candidates: false,
            summarize_preferences: true,
            context_turns: 5,
            retrieval_k: DEFAULT_RETRIEVAL_K,
            query_mode: QueryMode::default(),
            recommend_words: DEFAULT_RECOMMEND_WORDS.iter().map(|s| s.to_string()).collect(),
            seed: 0,
        }
    }
}

/// Mixes `parts` into `base` so that every combination gets its own
/// well-spread seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(splitmix(base), |h, &p| splitmix(h ^ splitmix(p)))
}

/// Everything one rerank call needs.
#[derive(Debug, Clone, Copy)]
pub struct RerankInput<'a> {
    pub profile: &'a UserProfile,
    pub summary: &'a InteractionSummary,
    pub candidates: &'a CandidateSet,
    pub variant: Variant,
    pub seed: u64,
    pub query: Option<&'a str>,
    /// Messages placed between the system message and the prompt.
    pub prior: &'a [Message],
}

/// A parsed rerank with the accepted answer text.
#[derive(Debug, Clone, PartialEq)]
pub struct Reranked {
    pub entries: Vec<RankedEntry>,
    pub attempts: usize,
    pub text: String,
}

impl Reranked {
    pub fn ids(&self) -> Vec<ItemId> {
        RankedEntry::ids(&self.entries)
    }
}

/// The recommender's own top-k as a ranked answer. This is what the echo
/// provider returns and what a failed rerank falls back to.
pub fn recommender_answer(catalog: &Catalog, candidates: &CandidateSet, k: usize) -> String {
    let titles: Vec<&str> = candidates.entries.iter().take(k).filter_map(|c| catalog.get(c.item_id)).map(|i| i.title.as_str()).collect();
    format_ranked_list(titles)
}

/// Asks the model to pick and order the top-k of `candidates`. The answer
/// must name exactly k distinct candidates; anything else is retried.
pub fn rerank_candidates(forge: &PromptForge, binding: &Binding, input: RerankInput<'_>) -> Result<Reranked, DialogueError> {
    let bundle = forge.build_topk_prompt(input.profile, input.summary, input.candidates, input.variant, input.seed, input.query)?;
    let index = TitleIndex::subset(forge.catalog(), &input.candidates.item_ids());
    let k = forge.top_k;
    let request = binding.request(with_prior(&bundle, input.prior), bundle.temperature).with_reference(recommender_answer(
        forge.catalog(),
        input.candidates,
        k,
    ));
    let Attempted { value, attempts, raw } =
        binding.gateway.complete_with_retry(&request, binding.gateway.max_retries, |t| parse_ranked_list(t, k, &index))?;
    Ok(Reranked { entries: value, attempts, text: raw.last().cloned().unwrap_or_default() })
}

fn with_prior(bundle: &PromptBundle, prior: &[Message]) -> Vec<Message> {
    let mut m = Vec::with_capacity(prior.len() + 2);
    m.push(Message::system(&bundle.system_text));
    m.extend_from_slice(prior);
    m.push(Message::user(&bundle.user_text));
    m
}

pub struct DialogueEngine {
    catalog: Arc<Catalog>,
    users: Arc<BTreeMap<UserId, UserProfile>>,
    history: Arc<BTreeMap<UserId, Vec<RatingEvent>>>,
    recommender: Arc<dyn CandidateSource>,
    forge: PromptForge,
    binding: Binding,
    coldstart: Option<Arc<RwLock<EmbeddingCache>>>,
    mentions: MentionIndex,
    max_year: i32,
    pub config: DialogueConfig,
}

impl std::fmt::Debug for DialogueEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DialogueEngine")
            .field("recommender", &self.recommender.source_id())
            .field("binding", &self.binding.id())
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl DialogueEngine {
    /// `history` is the rating data the recommender was trained on; it
    /// supplies each user's interaction summary and the items they have
    /// already rated.
    pub fn new(dataset: &Dataset, history: &[RatingEvent], recommender: Arc<dyn CandidateSource>, binding: Binding) -> Self {
        let catalog = Arc::new(dataset.catalog.clone());
        let mut by_user: BTreeMap<UserId, Vec<RatingEvent>> = BTreeMap::new();
        for e in history {
            by_user.entry(e.user_id).or_default().push(*e);
        }
        Self {
            mentions: MentionIndex::new(&catalog),
            max_year: catalog.max_release_year().unwrap_or(i32::MAX),
            forge: PromptForge::new(catalog.clone()),
            catalog,
            users: Arc::new(dataset.users.clone()),
            history: Arc::new(by_user),
            recommender,
            binding,
            coldstart: None,
            config: DialogueConfig::default(),
        }
    }

    pub fn with_forge(mut self, forge: PromptForge) -> Self {
        self.forge = forge;
        self
    }

    pub fn with_config(mut self, config: DialogueConfig) -> Self {
        self.config = config;
        self
    }

    /// Enables the new-item path for queries about years past the catalog.
    pub fn with_coldstart(mut self, cache: Arc<RwLock<EmbeddingCache>>) -> Self {
        self.coldstart = Some(cache);
        self
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn forge(&self) -> &PromptForge {
        &self.forge
    }

    pub fn binding(&self) -> &Binding {
        &self.binding
    }

    pub fn knows_user(&self, user: UserId) -> bool {
        self.users.contains_key(&user)
    }

    pub fn new_session(&self, session_id: impl Into<String>, user: UserId) -> Result<DialogueState, DialogueError> {
        if !self.knows_user(user) {
            return Err(DialogueError::UnknownUser(user));
        }
        Ok(DialogueState::new(session_id, user))
    }

    fn user_events(&self, user: UserId) -> &[RatingEvent] {
        self.history.get(&user).map(Vec::as_slice).unwrap_or(&[])
    }

    fn summary(&self, user: UserId) -> InteractionSummary {
        self.forge.summary(user, self.user_events(user))
    }

    /// Rules first; when they cannot decide, the classifier prompt. An
    /// unusable classifier answer yields chitchat.
    pub fn determine_task(&self, query: &str, state: &DialogueState) -> TaskKind {
        self.route(query, state).0
    }

    fn route(&self, query: &str, state: &DialogueState) -> (TaskKind, Option<&'static str>) {
        if let Some(task) = rule_task(query, state, &self.mentions, &self.config.recommend_words) {
            return (task, None);
        }
        let label = self.forge.build_classify_prompt(query).map_err(DialogueError::from).and_then(|b| {
            let req = self.binding.request(b.messages(), b.temperature).with_reference("chitchat");
            Ok(self.binding.gateway.complete_with_retry(&req, self.binding.gateway.max_retries, parse_label)?.value)
        });
        let task = match label {
            Ok(Label::Recommend) => Some(TaskKind::Recommend),
            Ok(Label::Chitchat) => Some(TaskKind::Chitchat),
            Ok(Label::Explain) => self
                .mentions
                .find(query, Some(&state.shown))
                .or_else(|| state.last_top5.as_ref().and_then(|t| t.first().copied()))
                .map(|item_id| TaskKind::Explain { item_id }),
            Ok(Label::Detail) => self.mentions.find(query, None).map(|item_id| TaskKind::DetailQa { item_id }),
            Ok(Label::CrossDomain) => {
                let domains = domains_in(query);
                (!domains.is_empty()).then_some(TaskKind::CrossDomain { domains })
            }
            Err(e) => {
                tracing::warn!(error = %e, "task classifier failed");
                None
            }
        };
        match task {
            Some(t) => (t, None),
            None => {
                tracing::warn!(query, "no usable task label; answering as chitchat");
                (TaskKind::Chitchat, Some(FLAG_CLASSIFIER_FALLBACK))
            }
        }
    }

    /// Runs one turn and appends it to the session history.
    pub fn handle_turn(&self, state: &mut DialogueState, query: &str) -> Result<Reply, DialogueError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(DialogueError::EmptyQuery);
        }
        let profile = self.users.get(&state.user_id).ok_or(DialogueError::UnknownUser(state.user_id))?.clone();
        let summary = self.summary(state.user_id);
        let (task, route_flag) = self.route(query, state);
        let flags: Vec<String> = route_flag.into_iter().map(String::from).collect();
        let reply = match task {
            TaskKind::Recommend => self.recommend(state, &profile, &summary, query, flags)?,
            TaskKind::Explain { item_id } => {
                let b = self.forge.build_explanation_prompt(item_id, &profile, &summary, &state.shown)?;
                let fallback = self.explain_fallback(item_id, &summary);
                self.free_text(state, task, &b, fallback, flags)?
            }
            TaskKind::DetailQa { item_id } => {
                let b = self.forge.build_detail_prompt(item_id, &profile, &summary, query)?;
                let fallback = self.detail_fallback(item_id);
                self.free_text(state, task, &b, fallback, flags)?
            }
            TaskKind::CrossDomain { ref domains } => {
                let b = self.forge.build_crossdomain_prompt(&profile, &summary, domains, Some(query))?;
                let labels: Vec<&str> = domains.iter().map(|d| d.label()).collect();
                let fallback = format!("I can only suggest movies right now, not {}.", labels.join(" or "));
                self.free_text(state, task, &b, fallback, flags)?
            }
            TaskKind::Chitchat => {
                let b = self.forge.build_chitchat_prompt(query)?;
                let fallback = "I can recommend movies, explain a recommendation, or tell you about a movie.".to_string();
                self.free_text(state, task, &b, fallback, flags)?
            }
        };
        state.history.push(Turn { query: query.to_string(), reply: reply.clone() });
        Ok(reply)
    }

    /// Earlier turns as alternating user and assistant messages, preceded
    /// by the preference summary exchange when there is one.
    fn prior_messages(&self, state: &DialogueState, profile: &UserProfile, summary: &InteractionSummary) -> Vec<Message> {
        let mut m = Vec::new();
        if let Some(p) = &state.preference_summary {
            if let Ok(b) = self.forge.build_preference_summary_prompt(profile, summary) {
                m.push(Message::user(b.user_text));
                m.push(Message::assistant(p));
            }
        }
        let skip = state.history.len().saturating_sub(self.config.context_turns);
        for t in &state.history[skip..] {
            m.push(Message::user(&t.query));
            m.push(Message::assistant(&t.reply.text));
        }
        m
    }

    fn ensure_preference_summary(
        &self,
        state: &mut DialogueState,
        profile: &UserProfile,
        summary: &InteractionSummary,
        flags: &mut Vec<String>,
    ) {
        if !self.config.summarize_preferences || state.preference_summary.is_some() || summary.is_empty() {
            return;
        }
        let result = self.forge.build_preference_summary_prompt(profile, summary).map_err(DialogueError::from).and_then(|b| {
            let req = self.binding.request(b.messages(), b.temperature).with_reference(self.summary_fallback(summary));
            Ok(self.binding.gateway.complete_with_retry(&req, self.binding.gateway.max_retries, parse_free_text)?.value)
        });
        match result {
            Ok(text) => state.preference_summary = Some(text),
            Err(e) => {
                tracing::warn!(error = %e, "preference summary failed; continuing without it");
                flags.push(FLAG_SUMMARY_FAILED.into());
            }
        }
    }

    fn recommend(
        &self,
        state: &mut DialogueState,
        profile: &UserProfile,
        summary: &InteractionSummary,
        query: &str,
        mut flags: Vec<String>,
    ) -> Result<Reply, DialogueError> {
        self.ensure_preference_summary(state, profile, summary, &mut flags);
        if year_beyond(query, self.max_year).is_some() {
            if let Some(reply) = self.coldstart_recommend(state, profile, summary, query, &mut flags)? {
                return Ok(reply);
            }
            flags.push(FLAG_COLDSTART_UNAVAILABLE.into());
        }
        let candidates = match (&state.last_candidates, self.config.reuse_candidates) {
            (Some(c), true) => c.clone(),
            _ => {
                let mut exclude: BTreeSet<ItemId> = self.user_events(state.user_id).iter().map(|e| e.item_id).collect();
                exclude.extend(&state.shown);
                self.recommender.top_n_candidates(state.user_id, self.config.candidates, &exclude)?
            }
        };
        let prior = self.prior_messages(state, profile, summary);
        let seed = derive_seed(self.config.seed, &[state.user_id as u64, state.history.len() as u64]);
        let input = RerankInput {
            profile,
            summary,
            candidates: &candidates,
            variant: self.config.variant,
            seed,
            query: Some(query),
            prior: &prior,
        };
        let k = self.forge.top_k;
        let (ids, reasons, text, degraded) = match rerank_candidates(&self.forge, &self.binding, input) {
            Ok(r) => {
                let reasons = r.entries.iter().map(|e| e.reason.clone()).collect();
                (r.ids(), reasons, r.text, false)
            }
            Err(
                e @ (DialogueError::Llm(_) | DialogueError::Prompt(PromptError::TooFewCandidates { .. } | PromptError::EmptyCandidates)),
            ) => {
                tracing::warn!(user = state.user_id, error = %e, "rerank failed; showing recommender order");
                flags.push(FLAG_DEGRADED.into());
                let ids: Vec<ItemId> = candidates.item_ids().into_iter().take(k).collect();
                let text = if ids.is_empty() {
                    "There is nothing left to recommend.".to_string()
                } else {
                    recommender_answer(&self.catalog, &candidates, k)
                };
                (ids.clone(), vec![None; ids.len()], text, true)
            }
            Err(e) => return Err(e),
        };
        let cards = ids.iter().zip(reasons).map(|(&id, reason)| self.card(id, reason)).collect();
        state.shown.extend(&ids);
        state.last_candidates = Some(candidates);
        state.last_top5 = Some(ids);
        Ok(Reply { task: TaskKind::Recommend, text, recommendations: Some(cards), degraded, flags })
    }

    fn coldstart_recommend(
        &self,
        state: &DialogueState,
        profile: &UserProfile,
        summary: &InteractionSummary,
        query: &str,
        flags: &mut Vec<String>,
    ) -> Result<Option<Reply>, DialogueError> {
        let Some(cache) = &self.coldstart else { return Ok(None) };
        let cache = cache.read().unwrap_or_else(|p| p.into_inner());
        if cache.is_empty() {
            return Ok(None);
        }
        let qtext = query_text(query, state.preference_summary.as_deref(), self.config.query_mode);
        let hits = match retrieve(&qtext, self.config.retrieval_k, &self.binding.gateway, &cache) {
            Ok(h) => h,
            Err(e) => {
                tracing::warn!(error = %e, "retrieval failed");
                return Ok(None);
            }
        };
        let docs: Vec<&ExternalItemDoc> = hits.iter().filter_map(|h| cache.doc(&h.doc_id)).collect();
        let bundle = build_coldstart_prompt(&self.forge, query, &docs, profile, summary)?;
        let n = self.forge.top_k.min(docs.len());
        let index = doc_title_index(&docs);
        let prior = self.prior_messages(state, profile, summary);
        let reference = format_ranked_list(docs.iter().take(n).map(|d| d.display_title()).collect::<Vec<_>>().iter().map(String::as_str));
        let request = self.binding.request(with_prior(&bundle, &prior), bundle.temperature).with_reference(reference.clone());
        flags.push(FLAG_COLDSTART.into());
        let (picked, text, degraded) =
            match self.binding.gateway.complete_with_retry(&request, self.binding.gateway.max_retries, |t| parse_ranked_list(t, n, &index))
            {
                Ok(a) => {
                    let picked: Vec<(usize, Option<String>)> = a.value.iter().map(|e| (e.item_id as usize, e.reason.clone())).collect();
                    (picked, a.raw.last().cloned().unwrap_or_default(), false)
                }
                Err(e) => {
                    tracing::warn!(error = %e, "new-item rerank failed; showing retrieval order");
                    flags.push(FLAG_DEGRADED.into());
                    ((0..n).map(|i| (i, None)).collect(), reference, true)
                }
            };
        let cards = picked
            .into_iter()
            .map(|(i, reason)| Card {
                item_id: None,
                doc_id: Some(docs[i].doc_id.clone()),
                title: docs[i].title.clone(),
                year: docs[i].release_year,
                genres: Vec::new(),
                reason,
            })
            .collect();
        Ok(Some(Reply { task: TaskKind::Recommend, text, recommendations: Some(cards), degraded, flags: std::mem::take(flags) }))
    }

    fn free_text(
        &self,
        state: &DialogueState,
        task: TaskKind,
        bundle: &PromptBundle,
        fallback: String,
        mut flags: Vec<String>,
    ) -> Result<Reply, DialogueError> {
        let profile = &self.users[&state.user_id];
        let prior = self.prior_messages(state, profile, &self.summary(state.user_id));
        let request = self.binding.request(with_prior(bundle, &prior), bundle.temperature).with_reference(fallback.clone());
        let (text, degraded) = match self.binding.gateway.complete_with_retry(&request, self.binding.gateway.max_retries, parse_free_text) {
            Ok(a) => (a.value, false),
            Err(e) => {
                tracing::warn!(error = %e, "free-text answer failed; using fallback text");
                flags.push(FLAG_DEGRADED.into());
                (fallback, true)
            }
        };
        Ok(Reply { task, text, recommendations: None, degraded, flags })
    }

    /// Asks, inside the session, whether the user would like each of
    /// `items`. Items must be candidates of the last recommend turn that
    /// did not make its top five.
    pub fn consistency_probe(&self, state: &DialogueState, items: &[ItemId]) -> Result<Vec<(ItemId, String)>, DialogueError> {
        if items.is_empty() {
            return Err(DialogueError::NoProbeItems);
        }
        let top: BTreeSet<ItemId> = state.last_top5.iter().flatten().copied().collect();
        for &i in items {
            let candidate = state.last_candidates.as_ref().is_some_and(|c| c.contains(i));
            if !candidate || top.contains(&i) {
                return Err(DialogueError::NotProbeable(i));
            }
        }
        let profile = self.users.get(&state.user_id).ok_or(DialogueError::UnknownUser(state.user_id))?;
        let prior = self.prior_messages(state, profile, &self.summary(state.user_id));
        let mut out = Vec::with_capacity(items.len());
        for &i in items {
            let b = self.forge.build_consistency_prompt(i)?;
            let req = self.binding.request(with_prior(&b, &prior), b.temperature).with_reference("Unsure.");
            let a = self.binding.gateway.complete_with_retry(&req, self.binding.gateway.max_retries, parse_free_text)?;
            out.push((i, a.value));
        }
        Ok(out)
    }

    fn card(&self, id: ItemId, reason: Option<String>) -> Card {
        let item = self.catalog.get(id);
        Card {
            item_id: Some(id),
            doc_id: None,
            title: item.map(|i| i.title.clone()).unwrap_or_else(|| format!("item {id}")),
            year: item.and_then(|i| i.release_year),
            genres: item.map(|i| i.genre_labels().into_iter().map(String::from).collect()).unwrap_or_default(),
            reason,
        }
    }

    fn liked_titles(&self, summary: &InteractionSummary, n: usize) -> Vec<String> {
        summary
            .items
            .iter()
            .rev()
            .filter(|(_, r)| *r >= 4)
            .filter_map(|(i, _)| self.catalog.get(*i).map(|it| it.title.clone()))
            .take(n)
            .collect()
    }

    fn summary_fallback(&self, summary: &InteractionSummary) -> String {
        let liked = self.liked_titles(summary, 5);
        if liked.is_empty() {
            "No strong preferences yet.".into()
        } else {
            format!("Enjoys movies such as {}.", liked.join("; "))
        }
    }

    fn explain_fallback(&self, item: ItemId, summary: &InteractionSummary) -> String {
        let title = self.catalog.get(item).map(|i| i.title.as_str()).unwrap_or("This movie");
        let liked = self.liked_titles(summary, 2);
        if liked.is_empty() {
            format!("{title} ranked highly for your profile in the recommender.")
        } else {
            format!("{title} is close to movies you rated highly, such as {}.", liked.join(" and "))
        }
    }

    fn detail_fallback(&self, item: ItemId) -> String {
        match self.catalog.get(item) {
            Some(i) if !i.genres.is_empty() => format!("{} is a {} movie.", i.title, i.genre_labels().join("/").to_lowercase()),
            Some(i) => format!("{} is in the catalog, but I have no further details.", i.title),
            None => "I have no details on that movie.".into(),
        }
    }
}

#[cfg(test)]
mod tests;
