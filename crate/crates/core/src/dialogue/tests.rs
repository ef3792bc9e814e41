use std::collections::BTreeMap;

use super::*;
use crate::coldstart::ingest_docs;
use crate::dataset::{Gender, Genre, Item, Ratings};
use crate::llm::{EchoStub, Gateway, Provider, Script, ScriptedStub};
use crate::prompt::Domain;
use crate::recsys::{Candidate, RecsysError};

/// Ranks items by ascending id.
struct ByIdSource(Vec<ItemId>);

impl CandidateSource for ByIdSource {
    fn source_id(&self) -> String {
        "by-id".into()
    }

    fn top_n_candidates(&self, user: UserId, n: usize, exclude: &BTreeSet<ItemId>) -> Result<CandidateSet, RecsysError> {
        let entries = self
            .0
            .iter()
            .filter(|i| !exclude.contains(i))
            .take(n)
            .enumerate()
            .map(|(rank, &item_id)| Candidate { item_id, score: 100.0 - rank as f64 })
            .collect();
        Ok(CandidateSet { user_id: user, entries, source: self.source_id() })
    }
}

fn title(i: ItemId) -> String {
    match i {
        7 => "Fargo (1996)".into(),
        _ => format!("Film Number {i} ({})", 1950 + i),
    }
}

fn dataset() -> (Dataset, Vec<RatingEvent>) {
    let catalog = Catalog::new((1..=60).map(|i| Item {
        item_id: i,
        title: title(i),
        release_year: Some(1950 + i as i32 % 48),
        genres: if i % 2 == 0 { vec![Genre::Action] } else { vec![Genre::Drama] },
    }));
    let users = BTreeMap::from([(
        1,
        UserProfile { user_id: 1, age: 31, gender: Gender::M, occupation: "engineer".into(), zip_code: "55105".into() },
    )]);
    let history: Vec<RatingEvent> = [(50, 5), (51, 4), (52, 2)]
        .iter()
        .enumerate()
        .map(|(t, &(item_id, rating))| RatingEvent { user_id: 1, item_id, rating, timestamp: t as i64 })
        .collect();
    let ds = Dataset::from_parts(Ratings::new(history.clone()), catalog, users).unwrap();
    (ds, history)
}

fn engine(provider: impl Provider + 'static, summarize: bool) -> DialogueEngine {
    let (ds, history) = dataset();
    let binding = Binding::new(Gateway::new(Arc::new(provider)), "test-model");
    let config = DialogueConfig { summarize_preferences: summarize, ..DialogueConfig::default() };
    DialogueEngine::new(&ds, &history, Arc::new(ByIdSource((1..=60).collect())), binding).with_config(config)
}

fn listed(ids: &[ItemId]) -> String {
    let titles: Vec<String> = ids.iter().map(|&i| title(i)).collect();
    format_ranked_list(titles.iter().map(String::as_str))
}

fn scripted(answers: &[String]) -> ScriptedStub {
    ScriptedStub::new(Script::sequential(answers.iter().cloned()))
}

#[test]
fn scripted_list_becomes_the_recommendations() {
    let e = engine(scripted(&[listed(&[3, 1, 7, 2, 9])]), false);
    let mut s = e.new_session("s", 1).unwrap();
    let r = e.handle_turn(&mut s, "I want some action movies").unwrap();
    assert_eq!(r.task, TaskKind::Recommend);
    let ids: Vec<ItemId> = r.recommendations.unwrap().iter().map(|c| c.item_id.unwrap()).collect();
    assert_eq!(ids, [3, 1, 7, 2, 9]);
    assert!(!r.degraded);
    assert_eq!(s.last_top5.as_deref(), Some(&[3, 1, 7, 2, 9][..]));
    let cands = s.last_candidates.as_ref().unwrap();
    assert_eq!(cands.len(), 20);
    assert!(s.last_top5.as_ref().unwrap().iter().all(|&i| cands.contains(i)));
}

#[test]
fn second_round_fetches_fresh_candidates() {
    let e = engine(scripted(&[listed(&[3, 1, 7, 2, 9]), listed(&[4, 5, 6, 8, 10])]), false);
    let mut s = e.new_session("s", 1).unwrap();
    e.handle_turn(&mut s, "recommend action movies").unwrap();
    let r = e.handle_turn(&mut s, "more like #2 but newer").unwrap();
    assert_eq!(s.history.len(), 2);
    let cands = s.last_candidates.as_ref().unwrap();
    for shown in [3, 1, 7, 2, 9] {
        assert!(!cands.contains(shown), "{shown} offered again");
    }
    assert_eq!(cands.item_ids()[0], 4);
    assert_eq!(r.recommendations.unwrap().len(), 5);
}

#[test]
fn reuse_mode_keeps_the_candidates() {
    let mut e = engine(scripted(&[listed(&[3, 1, 7, 2, 9]), listed(&[4, 5, 6, 8, 10])]), false);
    e.config.reuse_candidates = true;
    let mut s = e.new_session("s", 1).unwrap();
    e.handle_turn(&mut s, "recommend action movies").unwrap();
    let first = s.last_candidates.clone();
    e.handle_turn(&mut s, "more like #2 but newer").unwrap();
    assert_eq!(s.last_candidates, first);
}

#[test]
fn retry_exhaustion_degrades_to_recommender_order() {
    let junk: Vec<String> = vec!["I like movies".into(); 4];
    let e = engine(scripted(&junk), false);
    let mut s = e.new_session("s", 1).unwrap();
    let r = e.handle_turn(&mut s, "recommend something").unwrap();
    assert!(r.degraded);
    assert!(r.flags.iter().any(|f| f == FLAG_DEGRADED));
    let ids: Vec<ItemId> = r.recommendations.unwrap().iter().map(|c| c.item_id.unwrap()).collect();
    assert_eq!(ids, [1, 2, 3, 4, 5]);
    assert_eq!(s.history.len(), 1);
}

#[test]
fn out_of_set_title_is_retried() {
    let e = engine(scripted(&[listed(&[3, 1, 7, 2, 55]), listed(&[3, 1, 7, 2, 9])]), false);
    let mut s = e.new_session("s", 1).unwrap();
    let r = e.handle_turn(&mut s, "recommend something").unwrap();
    assert!(!r.degraded);
    assert_eq!(s.last_top5.as_deref(), Some(&[3, 1, 7, 2, 9][..]));
}

#[test]
fn why_fargo_is_an_explanation_without_cards() {
    let e = engine(scripted(&[listed(&[3, 1, 7, 2, 9]), "Because you liked Film Number 50.".into()]), false);
    let mut s = e.new_session("s", 1).unwrap();
    e.handle_turn(&mut s, "recommend movies").unwrap();
    let r = e.handle_turn(&mut s, "Why did you recommend Fargo?").unwrap();
    assert_eq!(r.task, TaskKind::Explain { item_id: 7 });
    assert!(r.recommendations.is_none());
    assert_eq!(r.text, "Because you liked Film Number 50.");
}

#[test]
fn rule_pass_examples() {
    let e = engine(EchoStub, false);
    let mut s = e.new_session("s", 1).unwrap();
    assert_eq!(e.determine_task("I want some action movies", &s), TaskKind::Recommend);
    assert_eq!(
        e.determine_task("Can you suggest books or podcasts I'd like?", &s),
        TaskKind::CrossDomain { domains: BTreeSet::from([Domain::Books, Domain::Podcasts]) }
    );
    assert_eq!(e.determine_task("why did you recommend Fargo?", &s), TaskKind::Recommend);
    s.shown.insert(7);
    s.last_top5 = Some(vec![7, 1, 2, 3, 4]);
    assert_eq!(e.determine_task("why did you recommend Fargo?", &s), TaskKind::Explain { item_id: 7 });
    assert_eq!(e.determine_task("why #2?", &s), TaskKind::Explain { item_id: 1 });
    assert_eq!(e.determine_task("tell me about Film Number 40", &s), TaskKind::DetailQa { item_id: 40 });
}

#[test]
fn unusable_classifier_answer_becomes_chitchat() {
    let mut answers = vec!["banana".to_string(); 4];
    answers.push("Hello there.".into());
    let e = engine(scripted(&answers), false);
    let mut s = e.new_session("s", 1).unwrap();
    let r = e.handle_turn(&mut s, "hmm, okay").unwrap();
    assert_eq!(r.task, TaskKind::Chitchat);
    assert!(r.flags.iter().any(|f| f == FLAG_CLASSIFIER_FALLBACK));
    assert_eq!(r.text, "Hello there.");
}

#[test]
fn classifier_label_is_used() {
    let e = engine(scripted(&["recommend".into(), listed(&[3, 1, 7, 2, 9])]), false);
    let mut s = e.new_session("s", 1).unwrap();
    let r = e.handle_turn(&mut s, "surprise me").unwrap();
    assert_eq!(r.task, TaskKind::Recommend);
}

#[test]
fn echo_session_shows_recommender_order() {
    let e = engine(EchoStub, true);
    let mut s = e.new_session("s", 1).unwrap();
    let r = e.handle_turn(&mut s, "recommend action movies").unwrap();
    assert!(!r.degraded, "{:?}", r.flags);
    let ids: Vec<ItemId> = r.recommendations.unwrap().iter().map(|c| c.item_id.unwrap()).collect();
    assert_eq!(ids, [1, 2, 3, 4, 5]);
    assert!(s.preference_summary.as_deref().unwrap().contains("Film Number 51"));
}

#[test]
fn preference_summary_is_asked_once_and_sent_as_a_prior_turn() {
    let log = Arc::new(crate::llm::RunLog::in_memory());
    let (ds, history) = dataset();
    let stub = scripted(&["Likes westerns.".into(), listed(&[3, 1, 7, 2, 9]), listed(&[4, 5, 6, 8, 10])]);
    let binding = Binding::new(Gateway::new(Arc::new(stub)).with_log(log.clone()), "m");
    let e = DialogueEngine::new(&ds, &history, Arc::new(ByIdSource((1..=60).collect())), binding);
    let mut s = e.new_session("s", 1).unwrap();
    e.handle_turn(&mut s, "recommend movies").unwrap();
    e.handle_turn(&mut s, "recommend more movies").unwrap();
    let records = log.records().unwrap();
    assert_eq!(records.len(), 3);
    assert_eq!(s.preference_summary.as_deref(), Some("Likes westerns."));
    let second = &records[1].messages;
    assert_eq!(second[2].content, "Likes westerns.");
    let third = &records[2].messages;
    assert!(third.iter().any(|m| m.content == "recommend movies"), "earlier turn missing from context");
}

#[test]
fn unknown_user_and_empty_query() {
    let e = engine(EchoStub, false);
    assert!(matches!(e.new_session("s", 99999), Err(DialogueError::UnknownUser(99999))));
    let mut s = e.new_session("s", 1).unwrap();
    assert!(matches!(e.handle_turn(&mut s, "   "), Err(DialogueError::EmptyQuery)));
    assert!(s.history.is_empty());
}

#[test]
fn consistency_probe_asks_about_each_item() {
    let e = engine(scripted(&[listed(&[3, 1, 7, 2, 9]), "Yes.".into(), "No.".into()]), false);
    let mut s = e.new_session("s", 1).unwrap();
    e.handle_turn(&mut s, "recommend movies").unwrap();
    let verdicts = e.consistency_probe(&s, &[4, 5]).unwrap();
    assert_eq!(verdicts, vec![(4, "Yes.".to_string()), (5, "No.".to_string())]);
    assert!(matches!(e.consistency_probe(&s, &[3]), Err(DialogueError::NotProbeable(3))));
    assert!(matches!(e.consistency_probe(&s, &[]), Err(DialogueError::NoProbeItems)));
    assert_eq!(s.history.len(), 1);
}

#[test]
fn probe_transcript_is_replayable() {
    let run = || {
        let e = engine(scripted(&[listed(&[3, 1, 7, 2, 9]), "Maybe.".into()]), false);
        let mut s = e.new_session("s", 1).unwrap();
        e.handle_turn(&mut s, "recommend movies").unwrap();
        (serde_json::to_string(&s).unwrap(), e.consistency_probe(&s, &[6]).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn new_item_queries_use_the_document_cache() {
    let docs: Vec<ExternalItemDoc> = (0..6)
        .map(|i| ExternalItemDoc {
            doc_id: format!("d{i}"),
            title: format!("Brand New {i}"),
            release_year: Some(2023),
            description: format!("A 2023 film, story {i}."),
            source_tag: "fixture".into(),
        })
        .collect();
    let e = engine(EchoStub, false);
    let mut cache = EmbeddingCache::new("stub");
    ingest_docs(&docs, &e.binding().gateway, &mut cache);
    let e = e.with_coldstart(Arc::new(RwLock::new(cache)));
    let mut s = e.new_session("s", 1).unwrap();
    let r = e.handle_turn(&mut s, "recommend some new movies released in 2023").unwrap();
    assert!(r.flags.iter().any(|f| f == FLAG_COLDSTART));
    let cards = r.recommendations.unwrap();
    assert_eq!(cards.len(), 5);
    assert!(cards.iter().all(|c| c.item_id.is_none() && c.doc_id.as_deref().is_some_and(|d| d.starts_with('d'))));
    assert!(s.last_top5.is_none());
}

#[test]
fn new_item_query_without_cache_uses_the_recommender() {
    let e = engine(EchoStub, false);
    let mut s = e.new_session("s", 1).unwrap();
    let r = e.handle_turn(&mut s, "recommend movies from 2023").unwrap();
    assert!(r.flags.iter().any(|f| f == FLAG_COLDSTART_UNAVAILABLE));
    assert_eq!(r.recommendations.unwrap().len(), 5);
}

#[test]
fn reply_json_carries_the_kind() {
    let r = Reply { task: TaskKind::Explain { item_id: 7 }, text: "t".into(), recommendations: None, degraded: false, flags: vec![] };
    let v = serde_json::to_value(&r).unwrap();
    assert_eq!(v["kind"], "explain");
    assert_eq!(v["item_id"], 7);
    assert_eq!(serde_json::from_value::<Reply>(v).unwrap(), r);
}

#[test]
fn seeds_differ_per_part() {
    assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
    assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
}
