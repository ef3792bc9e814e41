//! One line per acceptance criterion. Runs as `cargo test --test acceptance`
//! and exits non-zero when any criterion fails.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use chatrec::coldstart::{EmbeddingCache, ExternalItemDoc};
use chatrec::dataset::{split_train_test, Dataset, SplitPolicy};
use chatrec::eval::{mae, ndcg_at_k, precision_at_k, recall_at_k, rmse, MetricError, MetricReport, ABLATION_COLUMNS};
use chatrec::llm::{
    normalize_title, parse_ranked_list, CompletionRequest, Gateway, LlmError, Message, RankedEntry, RunLog, Script, ScriptedStub,
    TitleIndex, DEFAULT_MAX_RETRIES,
};
use chatrec::recsys::{ModelFile, ModelKind};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn data_dir() -> PathBuf {
    std::env::var_os("CHATREC_DATA_DIR").map(PathBuf::from).unwrap_or_else(|| root().join("data/ml-100k"))
}

fn micro() -> PathBuf {
    root().join("fixtures/micro")
}

fn require_data() -> Result<Dataset, String> {
    let dir = data_dir();
    if !dir.join("u.data").exists() {
        return Err(format!("no MovieLens data in {}; run `python3 scripts/fetch_ml100k.py` first", dir.display()));
    }
    Dataset::load(&dir).map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn chatrec(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chatrec"));
    cmd.args(args).current_dir(root()).env_remove("CHATREC_API_KEY").env_remove("CHATREC_PROVIDER").env_remove("RUST_LOG");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("chatrec runs")
}

fn ok_or_stderr(out: &Output) -> Result<(), String> {
    ensure(out.status.success(), || format!("chatrec failed: {}", String::from_utf8_lossy(&out.stderr).trim()))
}

fn micro_eval(extra: &[&str], out: &Path) -> Result<MetricReport, String> {
    let m = micro();
    let candidates = format!("external:{}", m.join("candidates.csv").display());
    let mut args = vec![
        "eval",
        "topk",
        "--data-dir",
        m.to_str().unwrap(),
        "--holdout-order",
        "most-recent",
        "--candidates",
        &candidates,
        "--no-save",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    ok_or_stderr(&chatrec(&args, &[]))?;
    MetricReport::from_json(&std::fs::read_to_string(out).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------

fn dataset_fidelity() -> Check {
    let t = Instant::now();
    let d = require_data()?;
    let secs = t.elapsed().as_secs_f64();
    let s = d.stats();
    ensure((s.users, s.items, s.ratings) == (943, 1682, 100_000), || format!("counts {} / {} / {}", s.users, s.items, s.ratings))?;
    let pct = s.density * 100.0;
    ensure((pct - 6.304).abs() <= 0.001, || format!("density {pct:.5}%"))?;
    ensure(secs < 5.0, || format!("load took {secs:.2}s"))?;
    Ok(format!("943 users, 1682 items, 100000 ratings, density {pct:.4}%, loaded in {secs:.2}s"))
}

fn baseline_reproduction() -> Check {
    let t = Instant::now();
    let d = require_data()?;
    let split = split_train_test(d.ratings.events(), SplitPolicy::default(), 0).map_err(|e| e.to_string())?;
    let truth: Vec<f64> = split.test.iter().map(|e| f64::from(e.rating)).collect();
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for (kind, rmse_win, mae_win) in [(ModelKind::Itemknn, (0.88, 0.98), (0.69, 0.78)), (ModelKind::Mf, (0.90, 1.02), (0.71, 0.81))] {
        let model = ModelFile::train(kind, &split.train, 0).map_err(|e| e.to_string())?;
        let (_, p) = model.into_shared();
        let pred: Vec<f64> = split.test.iter().map(|e| p.predict_rating(e.user_id, e.item_id)).collect();
        let n = pred.len() as f64;
        let r = (pred.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n).sqrt();
        let m = pred.iter().zip(&truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
        lines.push(format!("{kind:?} RMSE {r:.4} MAE {m:.4}"));
        if !(rmse_win.0..=rmse_win.1).contains(&r) || !(mae_win.0..=mae_win.1).contains(&m) {
            failures.push(format!("{kind:?} RMSE {r:.4} not in {rmse_win:?} or MAE {m:.4} not in {mae_win:?}"));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(failures.is_empty(), || failures.join("; "))?;
    ensure(secs < 300.0, || format!("took {secs:.0}s"))?;
    Ok(format!("{} in {secs:.1}s", lines.join(", ")))
}

fn log2(x: f64) -> f64 {
    x.ln() / std::f64::consts::LN_2
}

fn metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let mut pool: Vec<u32> = (1..=60).collect();
        pool.shuffle(&mut rng);
        let ranking: Vec<u32> = pool[..rng.gen_range(1..=20)].to_vec();
        pool.shuffle(&mut rng);
        let relevant: BTreeSet<u32> = pool[..rng.gen_range(0..=12)].iter().copied().collect();
        let k = rng.gen_range(1..=10);

        let top = &ranking[..k.min(ranking.len())];
        let mut hits = 0usize;
        let mut dcg = 0.0;
        for (i, item) in top.iter().enumerate() {
            if relevant.contains(item) {
                hits += 1;
                dcg += 1.0 / log2(i as f64 + 2.0);
            }
        }
        let mut idcg = 0.0;
        for i in 0..k.min(relevant.len()) {
            idcg += 1.0 / log2(i as f64 + 2.0);
        }
        let p = precision_at_k(&ranking, &relevant, k).map_err(|e| format!("case {case}: {e}"))?;
        worst = worst.max((p - hits as f64 / k as f64).abs());
        if relevant.is_empty() {
            ensure(recall_at_k(&ranking, &relevant, k) == Err(MetricError::NoRelevant), || format!("case {case}: recall defined"))?;
            ensure(ndcg_at_k(&ranking, &relevant, k) == Err(MetricError::NoRelevant), || format!("case {case}: ndcg defined"))?;
            continue;
        }
        let r = recall_at_k(&ranking, &relevant, k).map_err(|e| e.to_string())?;
        let n = ndcg_at_k(&ranking, &relevant, k).map_err(|e| e.to_string())?;
        worst = worst.max((r - hits as f64 / relevant.len() as f64).abs());
        worst = worst.max((n - dcg / idcg).abs());
    }
    ensure(worst <= 1e-9, || format!("ranking metrics differ by {worst:e}"))?;

    let mut worst_err = 0.0f64;
    for _ in 0..1000 {
        let len = rng.gen_range(1..=50);
        let pred: Vec<f64> = (0..len).map(|_| rng.gen_range(1.0..=5.0)).collect();
        let truth: Vec<f64> = (0..len).map(|_| f64::from(rng.gen_range(1u8..=5))).collect();
        let mut sq = 0.0;
        let mut abs = 0.0;
        for i in 0..len {
            sq += (pred[i] - truth[i]).powi(2);
            abs += (pred[i] - truth[i]).abs();
        }
        worst_err = worst_err.max((rmse(&pred, &truth).unwrap() - (sq / len as f64).sqrt()).abs());
        worst_err = worst_err.max((mae(&pred, &truth).unwrap() - abs / len as f64).abs());
    }
    ensure(worst_err <= 1e-12, || format!("RMSE/MAE differ by {worst_err:e}"))?;
    Ok(format!("1000 ranking instances max diff {worst:.1e}; 1000 error instances max diff {worst_err:.1e}"))
}

fn parser_corpus() -> Check {
    let text = std::fs::read_to_string(root().join("fixtures/parser/table4.json")).map_err(|e| e.to_string())?;
    let corpus: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let catalog: Vec<(u32, String)> = corpus["catalog"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["item_id"].as_u64().unwrap() as u32, c["title"].as_str().unwrap().to_string()))
        .collect();
    let index = TitleIndex::new(catalog.iter().map(|(i, t)| (*i, t.as_str())));
    let mut classes = BTreeSet::new();
    let cases = corpus["cases"].as_array().unwrap();
    for case in cases {
        let name = case["name"].as_str().unwrap();
        let n = case["expected_n"].as_u64().unwrap() as usize;
        let got = parse_ranked_list(case["text"].as_str().unwrap(), n, &index);
        match (&case["expect"]["ok"], &case["expect"]["error"], got) {
            (Value::Array(ids), _, Ok(entries)) => {
                let want: Vec<u32> = ids.iter().map(|v| v.as_u64().unwrap() as u32).collect();
                ensure(RankedEntry::ids(&entries) == want, || format!("{name}: got {:?}", RankedEntry::ids(&entries)))?;
            }
            (_, Value::String(kind), Err(e)) => ensure(e.kind.to_string() == *kind, || format!("{name}: got {}", e.kind))?,
            (_, _, got) => return Err(format!("{name}: unexpected {got:?}")),
        }
        classes.insert(case["class"].as_str().unwrap().to_string());
    }
    ensure(classes.len() == 4, || format!("classes covered {classes:?}"))?;
    for (raw, want) in [
        ("The Shawshank Redemption (1994)", "Shawshank Redemption, The (1994)"),
        ("A Fish Called Wanda (1988)", "Fish Called Wanda, A (1988)"),
    ] {
        ensure(normalize_title(raw) == want, || format!("normalize_title({raw:?}) = {:?}", normalize_title(raw)))?;
    }
    let d = require_data()?;
    for (id, title) in &catalog {
        ensure(d.catalog.get(*id).map(|i| &i.title) == Some(title), || format!("fixture title for {id} differs from the catalog"))?;
    }
    let mut fixed_points = 0;
    for item in d.catalog.iter() {
        let once = normalize_title(&item.title);
        ensure(normalize_title(&once) == once, || format!("not idempotent on {:?}", item.title))?;
        fixed_points += usize::from(once == item.title);
    }
    Ok(format!(
        "{} cases over 4 classes as expected; article examples mapped; idempotent over {} titles ({fixed_points} already canonical)",
        cases.len(),
        d.catalog.len()
    ))
}

fn micro_expected() -> [(&'static str, f64); 3] {
    let d = |p: f64| 1.0 / (p + 1.0).log2();
    let ndcg = [
        1.0,
        1.0,
        (d(2.0) + d(4.0)) / (1.0 + d(2.0)),
        1.0 / (1.0 + d(2.0)),
        0.0,
        1.0,
        d(5.0),
        d(2.0) / (1.0 + d(2.0)),
        d(5.0) / (1.0 + d(2.0)),
    ];
    let precision = [0.4, 0.2, 0.4, 0.2, 0.0, 0.4, 0.2, 0.2, 0.2];
    let recall = [1.0, 1.0, 1.0, 0.5, 0.0, 1.0, 1.0, 0.5, 0.5];
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    [("ndcg", mean(&ndcg)), ("precision", mean(&precision)), ("recall", mean(&recall))]
}

fn stub_pipeline() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let script = format!("stub:{}", micro().join("script.jsonl").display());
    let r = micro_eval(&["--provider", &script, "--temperature", "0"], &dir.path().join("scripted.json"))?;
    for (name, want) in micro_expected() {
        let got = r.mean(name).unwrap_or(f64::NAN);
        ensure(got == want, || format!("scripted {name} {got} != hand-computed {want}"))?;
    }
    ensure((r.users_evaluated, r.degraded_runs) == (9, 1), || format!("{} users, {} degraded", r.users_evaluated, r.degraded_runs))?;

    let mut echo_means = Vec::new();
    for variant in ["standard", "w_random"] {
        let r = micro_eval(
            &["--provider", "echo", "--variant", variant, "--temperature", "0.9", "--repeats", "5"],
            &dir.path().join(format!("echo-{variant}.json")),
        )?;
        let base = r.baseline.as_ref().ok_or("no baseline row")?;
        for (name, m) in &r.metrics {
            ensure(m.mean == base.metrics[name], || format!("echo {variant} {name} {} != baseline {}", m.mean, base.metrics[name]))?;
        }
        echo_means.push(r.metrics.iter().map(|(k, v)| (k.clone(), v.mean)).collect::<Vec<_>>());
    }
    ensure(echo_means[0] == echo_means[1], || "w_random changed the echo metrics".into())?;
    let [(_, n), (_, p), (_, rc)] = micro_expected();
    Ok(format!("scripted means exact (P {p:.4}, R {rc:.4}, NDCG {n:.4}); echo equals baseline for standard and w_random"))
}

fn retry_semantics() -> Check {
    let text = std::fs::read_to_string(root().join("fixtures/parser/table4.json")).map_err(|e| e.to_string())?;
    let corpus: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let titles: Vec<(u32, String)> = corpus["catalog"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["item_id"].as_u64().unwrap() as u32, c["title"].as_str().unwrap().to_string()))
        .collect();
    let index = TitleIndex::new(titles.iter().map(|(i, t)| (*i, t.as_str())));
    let parser = |t: &str| parse_ranked_list(t, 5, &index).map(|e| RankedEntry::ids(&e));
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let request = CompletionRequest::new("scripted", vec![Message::system("rank"), Message::user("five films please")], 0.9);

    let run = |name: &str| {
        let script = Script::load(root().join("fixtures/retry").join(format!("{name}.jsonl"))).unwrap();
        let log_path = dir.path().join(format!("{name}.log.jsonl"));
        let gateway = Gateway::new(Arc::new(ScriptedStub::new(script.clone()))).with_log(Arc::new(RunLog::open(&log_path).unwrap()));
        let result = gateway.complete_with_retry(&request, DEFAULT_MAX_RETRIES, parser);
        (script, RunLog::read(&log_path).unwrap(), result)
    };

    let (script, log, result) = run("recovers");
    let got = result.map_err(|e| format!("[malformed, wellformed] failed: {e}"))?;
    ensure(got.attempts == 2, || format!("succeeded on attempt {}", got.attempts))?;
    ensure(got.value == [1, 100, 144, 153, 169], || format!("ids {:?}", got.value))?;
    let responses: Vec<&str> = log.iter().map(|r| r.response.as_str()).collect();
    let scripted: Vec<&str> = script.entries.iter().map(|e| e.response.as_str()).collect();
    ensure(responses == scripted, || "run log does not hold both raw answers".into())?;
    ensure(log[0].parse_outcome.starts_with("lost_id") && log[1].parse_outcome == "ok", || "run log outcomes wrong".into())?;
    ensure(log.iter().all(|r| r.messages == request.messages), || "run log request differs".into())?;

    let (script, log, result) = run("exhausts");
    let n = DEFAULT_MAX_RETRIES + 1;
    ensure(script.entries.len() == n, || format!("fixture has {} answers, need {n}", script.entries.len()))?;
    match result {
        Err(LlmError::RetriesExhausted { attempts, raw, .. }) => {
            ensure(attempts == n && raw.len() == n, || format!("exhausted after {attempts}"))?;
        }
        other => return Err(format!("expected exhaustion, got {other:?}")),
    }
    ensure(log.len() == n, || format!("run log has {} records", log.len()))?;
    let attempts: Vec<usize> = log.iter().map(|r| r.attempt).collect();
    ensure(attempts == (1..=n).collect::<Vec<_>>(), || format!("attempt numbers {attempts:?}"))?;
    ensure(log.iter().zip(&script.entries).all(|(r, e)| r.response == e.response), || "raw answers missing".into())?;
    Ok(format!("recovered on attempt 2; exhausted after {n} attempts; run logs hold all {} raw answers", 2 + n))
}

fn brute_force(entries: &[(String, Vec<f32>)], q: &[f32], k: usize) -> Vec<(String, f64)> {
    let qn = q.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    let mut all: Vec<(String, f64)> = entries
        .iter()
        .map(|(id, v)| {
            let dot: f64 = v.iter().zip(q).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
            let vn = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
            (id.clone(), dot / (vn * qn))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn coldstart_retrieval() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dim = 32;
    let mut cache = EmbeddingCache::new("synthetic");
    let mut raw: Vec<Vec<f32>> = Vec::new();
    for n in 0..1000 {
        // every tenth vector repeats an earlier one, so exact ties occur
        let v: Vec<f32> =
            if n % 10 == 9 { raw[rng.gen_range(0..raw.len())].clone() } else { (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        raw.push(v.clone());
        let doc = ExternalItemDoc {
            doc_id: format!("doc-{:04}", (n * 7919) % 1000),
            title: format!("Synthetic {n}"),
            release_year: Some(2023),
            description: "synthetic".into(),
            source_tag: "test".into(),
        };
        let hash = doc.content_hash();
        cache.insert(doc, hash, v).map_err(|e| e.to_string())?;
    }
    let stored: Vec<(String, Vec<f32>)> = cache.iter().map(|e| (e.doc.doc_id.clone(), e.vector.clone())).collect();
    ensure(stored.len() == 1000, || format!("{} entries", stored.len()))?;
    let mut ties = 0;
    for qn in 0..50 {
        let q: Vec<f32> =
            if qn % 5 == 0 { raw[rng.gen_range(0..raw.len())].clone() } else { (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect() };
        let got = cache.search(&q, 10).map_err(|e| e.to_string())?;
        let want = brute_force(&stored, &q, 10);
        let got_ids: Vec<&str> = got.iter().map(|r| r.doc_id.as_str()).collect();
        let want_ids: Vec<&str> = want.iter().map(|r| r.0.as_str()).collect();
        ensure(got_ids == want_ids, || format!("query {qn}: {got_ids:?} != {want_ids:?}"))?;
        for (g, w) in got.iter().zip(&want) {
            ensure((g.similarity - w.1).abs() <= 1e-12, || format!("query {qn}: similarity {} vs {}", g.similarity, w.1))?;
        }
        ties += got.windows(2).filter(|w| w[0].similarity == w[1].similarity).count();
    }
    ensure(ties > 0, || "no ties exercised".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cache.persist(&a).map_err(|e| e.to_string())?;
    let back = EmbeddingCache::load(&a).map_err(|e| e.to_string())?;
    back.persist(&b).map_err(|e| e.to_string())?;
    for f in ["manifest.json", "vectors.f32"] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        ensure(x == y, || format!("{f} differs after reload"))?;
    }
    let same = cache
        .iter()
        .zip(back.iter())
        .all(|(x, y)| x.doc == y.doc && x.vector.iter().map(|f| f.to_bits()).eq(y.vector.iter().map(|f| f.to_bits())));
    ensure(same && back.len() == cache.len(), || "reloaded vectors differ".into())?;
    Ok(format!("50 queries over 1000 vectors match the full scan ({ties} adjacent ties); reload is bit-identical"))
}

fn ablation_protocol() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("grid.csv");
    let m = micro();
    let candidates = format!("external:{}", m.join("candidates.csv").display());
    let out = chatrec(
        &[
            "ablate",
            "--data-dir",
            m.to_str().unwrap(),
            "--holdout-order",
            "most-recent",
            "--candidates",
            &candidates,
            "--provider",
            "echo",
            "--variants",
            "standard,w_random,w_top1",
            "--temperatures",
            "0,0.3,0.6,0.9",
            "--no-save",
            "--csv",
            csv.to_str().unwrap(),
        ],
        &[],
    );
    ok_or_stderr(&out)?;
    let text = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    ensure(lines.next() == Some(ABLATION_COLUMNS.join(",").as_str()), || "header differs".into())?;
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    ensure(rows.len() == 12, || format!("{} rows for 12 cells", rows.len()))?;
    for r in &rows {
        let t: f64 = r[1].parse().unwrap();
        let want = if t == 0.0 { "1" } else { "5" };
        ensure(r[2] == want, || format!("{} at t={t} ran {} repeats", r[0], r[2]))?;
    }
    Ok("12 cells, one CSV row each; 1 repeat at temperature 0, 5 elsewhere".into())
}

/// Answers every chat request with the same ranked list.
fn mock_llm(replies: usize, body: String) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        for _ in 0..replies {
            let Ok((mut stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut buf = vec![0; len];
            let _ = reader.read_exact(&mut buf);
            let resp = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    addr
}

fn published_figures() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let r = micro_eval(&["--provider", "echo", "--temperature", "0"], &dir.path().join("topk.json"))?;
    let row = |r: &MetricReport, metric: &str, v: f64| r.reference_rows.iter().any(|x| x.metrics.get(metric) == Some(&v));
    ensure(row(&r, "ndcg", 0.3802), || "top-k report lacks the published NDCG 0.3802 row".into())?;
    ensure(r.reference_rows.iter().all(|x| x.note.contains("not produced by this run")), || "reference rows not marked".into())?;

    let m = micro();
    let rating_out = dir.path().join("rating.json");
    let out = chatrec(
        &[
            "eval",
            "rating",
            "--data-dir",
            m.to_str().unwrap(),
            "--candidates",
            "itemknn",
            "--provider",
            "echo",
            "--no-save",
            "--out",
            rating_out.to_str().unwrap(),
        ],
        &[],
    );
    ok_or_stderr(&out)?;
    let rr = MetricReport::from_json(&std::fs::read_to_string(&rating_out).unwrap()).map_err(|e| e.to_string())?;
    ensure(row(&rr, "rmse", 0.785), || "rating report lacks the published RMSE 0.785 row".into())?;

    let keyless = chatrec(&["llm", "probe", "--provider", "http"], &[]);
    let msg = String::from_utf8_lossy(&keyless.stderr);
    ensure(!keyless.status.success() && msg.contains("CHATREC_API_KEY"), || format!("keyless live run: {msg}"))?;

    let list = "The current list is:\\n1.Fargo (1996)\\n2.Heat (1995)\\n3.Braveheart (1995)\\n4.Apollo 13 (1995)\\n5.Batman Forever (1995)";
    let body = format!(r#"{{"choices":[{{"message":{{"role":"assistant","content":"{list}"}}}}]}}"#);
    let base = mock_llm(9, body);
    let live_out = dir.path().join("live.json");
    let candidates = format!("external:{}", m.join("candidates.csv").display());
    let out = chatrec(
        &[
            "eval",
            "topk",
            "--data-dir",
            m.to_str().unwrap(),
            "--holdout-order",
            "most-recent",
            "--candidates",
            &candidates,
            "--provider",
            "http",
            "--temperature",
            "0",
            "--no-save",
            "--out",
            live_out.to_str().unwrap(),
        ],
        &[("CHATREC_API_KEY", "test-key"), ("CHATREC_API_BASE", &base), ("CHATREC_MODEL", "mock-model")],
    );
    ok_or_stderr(&out)?;
    let live = MetricReport::from_json(&std::fs::read_to_string(&live_out).unwrap()).map_err(|e| e.to_string())?;
    ensure(live.provider.starts_with("http") && live.degraded_runs == 0, || {
        format!("live run {} degraded {}", live.provider, live.degraded_runs)
    })?;
    ensure(row(&live, "ndcg", 0.3802), || "live report lacks reference rows".into())?;
    Ok(format!("published rows attached as reference only; live provider {} produced a report against a local endpoint", live.provider))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("dataset fidelity", dataset_fidelity),
        ("baseline reproduction", baseline_reproduction),
        ("metric oracle equivalence", metric_oracle),
        ("parser corpus", parser_corpus),
        ("end-to-end stub pipeline", stub_pipeline),
        ("retry semantics", retry_semantics),
        ("cold-start retrieval", coldstart_retrieval),
        ("ablation protocol", ablation_protocol),
        ("published figures declared", published_figures),
    ];
    println!("\nrunning {} acceptance criteria", criteria.len());
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed\n", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
