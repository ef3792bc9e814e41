mod setup;

use std::collections::BTreeSet;
use std::io::{IsTerminal, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use chatrec::coldstart::{ingest_docs, load_docs, retrieve, EmbeddingCache};
use chatrec::eval::{
    run_ablation, run_rating_experiment, run_topk_experiment, write_ablation_csv, AblationConfig, EvalContext, MetricReport, RatingConfig,
    ReportStore, TopkConfig, DEFAULT_EXCLUSION_CEILING,
};
use chatrec::llm::{Message, ParseError, ParseErrorKind};
use chatrec::prompt::{PromptForge, Variant, DEFAULT_CANDIDATES, DEFAULT_TEMPERATURE, DEFAULT_TOP_K};
use chatrec::recsys::{history_by_user, ModelKind, RatingPredictor};
use chatrec_service::ServiceConfig;

use setup::{DataArgs, ProviderArgs, SourceArgs};

/// Conversational reranking of recommender candidates with a language model.
#[derive(Parser)]
#[command(name = "chatrec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the dataset, print its statistics and the split sizes.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Print the statistics as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Train a recommender on the training split and report test error.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "mf")]
        model: String,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Prompt(PromptCmd),
    #[command(subcommand)]
    Llm(LlmCmd),
    #[command(subcommand)]
    Coldstart(ColdstartCmd),
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Run the variant x temperature grid and write one CSV row per cell.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated variants.
        #[arg(long, default_value = "standard,w_random,w_top1", value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long, default_value = "0,0.3,0.6,0.9", value_delimiter = ',')]
        temperatures: Vec<f64>,
        #[arg(long)]
        repeats: Option<usize>,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Serve the JSON chat API.
    Serve {
        /// TOML configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        host: Option<String>,
    },
}

#[derive(Subcommand)]
enum PromptCmd {
    /// Print the top-k prompt for one user.
    Preview {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        user: u32,
        #[arg(long, default_value = "standard")]
        variant: String,
        /// Shuffle seed for w_random.
        #[arg(long = "shuffle-seed", default_value_t = 0)]
        shuffle_seed: u64,
        /// Show the rating prompt for this item instead.
        #[arg(long)]
        rate_item: Option<u32>,
    },
}

#[derive(Subcommand)]
enum LlmCmd {
    /// Send one small request and print the answer.
    Probe {
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long, default_value = "Reply with the single word ok.")]
        text: String,
    },
}

#[derive(Subcommand)]
enum ColdstartCmd {
    /// Embed a JSONL file of item documents into the cache.
    Ingest {
        #[arg(long)]
        docs: PathBuf,
        #[arg(long, default_value = "coldstart-cache")]
        cache: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Print the cached documents closest to a request.
    Query {
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = chatrec::coldstart::DEFAULT_RETRIEVAL_K)]
        k: usize,
        #[arg(long, default_value = "coldstart-cache")]
        cache: PathBuf,
        #[command(flatten)]
        provider: ProviderArgs,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Rerank each user's candidates and score precision, recall and NDCG.
    Topk {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "standard")]
        variant: String,
        #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
        temperature: f64,
        /// Repeats at non-zero temperature (5 when absent).
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Ask for held-out ratings and score RMSE and MAE.
    Rating {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        /// Cap on held-out pairs per user.
        #[arg(long)]
        max_pairs: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_EXCLUSION_CEILING)]
        exclusion_ceiling: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Candidates handed to the model.
    #[arg(long = "n-candidates", default_value_t = DEFAULT_CANDIDATES)]
    n_candidates: usize,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    k: usize,
    /// Seed for shuffles and model training.
    #[arg(long, default_value_t = 0)]
    run_seed: u64,
    /// Users evaluated in parallel; scripted providers need 1.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "reports")]
    reports_dir: PathBuf,
    /// Do not store the report.
    #[arg(long)]
    no_save: bool,
    /// Also write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve { .. }) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    match cli.command {
        Command::Ingest { data, json } => ingest(&data, json),
        Command::Train { data, model, out } => train(&data, &model, &out),
        Command::Prompt(PromptCmd::Preview { data, source, user, variant, shuffle_seed, rate_item }) => {
            preview(&data, &source, user, &variant, shuffle_seed, rate_item)
        }
        Command::Llm(LlmCmd::Probe { provider, text }) => probe(&provider, &text),
        Command::Coldstart(ColdstartCmd::Ingest { docs, cache, provider }) => coldstart_ingest(&docs, &cache, &provider),
        Command::Coldstart(ColdstartCmd::Query { text, k, cache, provider }) => coldstart_query(&text, k, &cache, &provider),
        Command::Eval(EvalCmd::Topk { run, variant, temperature, repeats }) => eval_topk(&run, &variant, temperature, repeats),
        Command::Eval(EvalCmd::Rating { run, temperature, max_pairs, exclusion_ceiling }) => {
            eval_rating(&run, temperature, max_pairs, exclusion_ceiling)
        }
        Command::Ablate { run, variants, temperatures, repeats, csv } => ablate(&run, &variants, &temperatures, repeats, csv),
        Command::Serve { config, port, host } => serve(config, port, host),
    }
}

fn ingest(data: &DataArgs, json: bool) -> Result<()> {
    let loaded = data.load()?;
    let stats = loaded.dataset.stats();
    if json {
        let v = serde_json::json!({
            "users": stats.users,
            "items": stats.items,
            "ratings": stats.ratings,
            "density": stats.density,
            "load_secs": loaded.load_secs,
            "train": loaded.split.train.len(),
            "test": loaded.split.test.len(),
            "sampled_users": loaded.users.len(),
        });
        println!("{}", serde_json::to_string_pretty(&v)?);
        return Ok(());
    }
    println!("users     {}", stats.users);
    println!("items     {}", stats.items);
    println!("ratings   {}", stats.ratings);
    println!("density   {:.3}%", stats.density * 100.0);
    println!("loaded in {:.2}s", loaded.load_secs);
    println!("split     {} train / {} test ({:?}, seed {})", loaded.split.train.len(), loaded.split.test.len(), data.policy(), data.seed);
    println!("users     {} selected", loaded.users.len());
    Ok(())
}

fn train(data: &DataArgs, model: &str, out: &PathBuf) -> Result<()> {
    let loaded = data.load()?;
    let kind: ModelKind = model.parse()?;
    let t = Instant::now();
    let file = chatrec::recsys::ModelFile::train(kind, &loaded.split.train, data.seed)?;
    let secs = t.elapsed().as_secs_f64();
    file.save(out)?;
    let (_, predictor) = file.into_shared();
    let (rmse, mae) = test_error(predictor.as_ref(), &loaded.split.test)?;
    println!("{kind:?} trained in {secs:.1}s; test RMSE {rmse:.4} MAE {mae:.4}; saved {}", out.display());
    Ok(())
}

fn test_error(p: &dyn RatingPredictor, test: &[chatrec::dataset::RatingEvent]) -> Result<(f64, f64)> {
    let pred: Vec<f64> = test.iter().map(|e| p.predict_rating(e.user_id, e.item_id)).collect();
    let truth: Vec<f64> = test.iter().map(|e| f64::from(e.rating)).collect();
    Ok((chatrec::eval::rmse(&pred, &truth)?, chatrec::eval::mae(&pred, &truth)?))
}

fn preview(data: &DataArgs, source: &SourceArgs, user: u32, variant: &str, shuffle_seed: u64, rate_item: Option<u32>) -> Result<()> {
    let loaded = data.load()?;
    let profile = loaded.dataset.profile(user).with_context(|| format!("unknown user {user}"))?;
    let forge = PromptForge::new(Arc::new(loaded.dataset.catalog.clone()));
    let train: Vec<_> = loaded.split.train.iter().filter(|e| e.user_id == user).copied().collect();
    let summary = forge.summary(user, &train);
    let bundle = match rate_item {
        Some(item) => forge.build_rating_prompt(profile, &summary, item)?,
        None => {
            let src = source.build(&loaded, data.seed)?;
            let exclude: BTreeSet<_> = history_by_user(&train).remove(&user).unwrap_or_default();
            let candidates = src.candidates.top_n_candidates(user, DEFAULT_CANDIDATES, &exclude)?;
            forge.build_topk_prompt(profile, &summary, &candidates, variant.parse()?, shuffle_seed, None)?
        }
    };
    println!("--- system (temperature {}) ---\n{}", bundle.temperature, bundle.system_text);
    println!("--- user ---\n{}", bundle.user_text);
    Ok(())
}

fn probe(provider: &ProviderArgs, text: &str) -> Result<()> {
    let binding = provider.binding()?;
    let req = binding.request(vec![Message::user(text)], 0.0).with_reference("ok");
    let t = Instant::now();
    let answer = binding.gateway.complete_with_retry(&req, 0, |s: &str| {
        if s.trim().is_empty() {
            Err(ParseError::new(ParseErrorKind::Empty, "empty answer"))
        } else {
            Ok(s.to_string())
        }
    })?;
    println!("{} answered in {:.2}s: {}", binding.id(), t.elapsed().as_secs_f64(), answer.value.trim());
    Ok(())
}

fn open_cache(dir: &PathBuf, provider: &ProviderArgs) -> Result<(EmbeddingCache, chatrec::llm::Binding)> {
    let binding = provider.binding()?;
    let cache = EmbeddingCache::load_or_new(dir, &binding.gateway.provider_id())?;
    Ok((cache, binding))
}

fn coldstart_ingest(docs: &PathBuf, dir: &PathBuf, provider: &ProviderArgs) -> Result<()> {
    let docs = load_docs(docs)?;
    let (mut cache, binding) = open_cache(dir, provider)?;
    let report = ingest_docs(&docs, &binding.gateway, &mut cache);
    cache.persist(dir)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if !report.errors.is_empty() {
        bail!("{} document(s) failed to embed", report.errors.len());
    }
    Ok(())
}

fn coldstart_query(text: &str, k: usize, dir: &PathBuf, provider: &ProviderArgs) -> Result<()> {
    let (cache, binding) = open_cache(dir, provider)?;
    if cache.is_empty() {
        bail!("cache {} is empty; run `chatrec coldstart ingest` first", dir.display());
    }
    for r in retrieve(text, k, &binding.gateway, &cache)? {
        let title = cache.doc(&r.doc_id).map(|d| d.display_title()).unwrap_or_default();
        println!("{:.6}  {}  {}", r.similarity, r.doc_id, title);
    }
    Ok(())
}

struct Prepared {
    loaded: setup::Loaded,
    source: setup::Source,
    binding: chatrec::llm::Binding,
    forge: PromptForge,
}

fn prepare(run: &RunArgs) -> Result<Prepared> {
    let loaded = run.data.load()?;
    let source = run.source.build(&loaded, run.run_seed)?;
    let binding = run.provider.binding()?;
    let mut forge = PromptForge::new(Arc::new(loaded.dataset.catalog.clone()));
    forge.top_k = run.k;
    Ok(Prepared { loaded, source, binding, forge })
}

impl Prepared {
    fn ctx(&self) -> EvalContext<'_> {
        EvalContext {
            users: &self.loaded.dataset.users,
            split: &self.loaded.split,
            source: self.source.candidates.as_ref(),
            binding: &self.binding,
            forge: &self.forge,
        }
    }
}

fn topk_config(run: &RunArgs, users: Vec<u32>, variant: Variant, temperature: f64, repeats: Option<usize>) -> TopkConfig {
    TopkConfig {
        users,
        candidates: run.n_candidates,
        k: run.k,
        variant,
        temperature,
        repeats,
        seed: run.run_seed,
        sample_seed: run.data.sample_users.map(|_| run.data.seed),
        workers: run.workers,
        ..TopkConfig::default()
    }
}

fn finish(run: &RunArgs, report: &MetricReport) -> Result<()> {
    print_report(report);
    if let Some(p) = &run.out {
        std::fs::write(p, report.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    if !run.no_save {
        let id = ReportStore::new(&run.reports_dir).save(report)?;
        println!("saved report {id} in {}", run.reports_dir.display());
    }
    Ok(())
}

fn print_report(r: &MetricReport) {
    println!(
        "{:?} {} via {} on {}, temperature {}, {} repeat(s)",
        r.experiment, r.variant, r.provider, r.candidate_source, r.temperature, r.repeats
    );
    println!("users {} scored, {} skipped, {} degraded run(s)", r.users_evaluated, r.users_skipped.len(), r.degraded_runs);
    if let (Some(total), Some(excluded)) = (r.pairs_total, r.pairs_excluded) {
        println!("pairs {total}, {excluded} excluded{}", if r.valid { "" } else { "; INVALID: too many unusable answers" });
    }
    println!("{:<10} {:>10} {:>10} {:>9}", "metric", "measured", "baseline", "delta%");
    for (name, m) in &r.metrics {
        let base = r.baseline.as_ref().and_then(|b| b.metrics.get(name));
        let delta = r.delta_vs_baseline_pct.get(name);
        println!(
            "{:<10} {:>10.4} {:>10} {:>9}",
            name,
            m.mean,
            base.map(|b| format!("{b:.4}")).unwrap_or_else(|| "-".into()),
            delta.map(|d| format!("{d:+.1}")).unwrap_or_else(|| "-".into())
        );
    }
    println!("published figures, shown for comparison only:");
    for row in &r.reference_rows {
        let vals: Vec<String> = row.metrics.iter().map(|(k, v)| format!("{k} {v:.4}")).collect();
        println!("  {:<40} {}", row.label, vals.join("  "));
    }
}

fn eval_topk(run: &RunArgs, variant: &str, temperature: f64, repeats: Option<usize>) -> Result<()> {
    let p = prepare(run)?;
    let cfg = topk_config(run, p.loaded.users.clone(), variant.parse()?, temperature, repeats);
    let report = run_topk_experiment(p.ctx(), &cfg)?;
    finish(run, &report)
}

fn eval_rating(run: &RunArgs, temperature: f64, max_pairs: Option<usize>, exclusion_ceiling: f64) -> Result<()> {
    let p = prepare(run)?;
    let cfg = RatingConfig {
        users: p.loaded.users.clone(),
        temperature,
        max_pairs_per_user: max_pairs,
        exclusion_ceiling,
        seed: run.run_seed,
        sample_seed: run.data.sample_users.map(|_| run.data.seed),
        workers: run.workers,
    };
    let report = run_rating_experiment(p.ctx(), &cfg, p.source.predictor.as_deref())?;
    finish(run, &report)
}

fn ablate(run: &RunArgs, variants: &[String], temperatures: &[f64], repeats: Option<usize>, csv: Option<PathBuf>) -> Result<()> {
    let p = prepare(run)?;
    let variants = variants.iter().map(|v| v.parse::<Variant>()).collect::<Result<Vec<_>, _>>()?;
    let grid = AblationConfig {
        base: topk_config(run, p.loaded.users.clone(), Variant::Standard, 0.0, repeats),
        variants,
        temperatures: temperatures.to_vec(),
    };
    let reports = run_ablation(p.ctx(), &grid)?;
    match csv {
        Some(path) => {
            let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_ablation_csv(&reports, f)?;
            eprintln!("wrote {} cell(s) to {}", reports.len(), path.display());
        }
        None => {
            let mut out = std::io::stdout().lock();
            write_ablation_csv(&reports, &mut out)?;
            out.flush()?;
        }
    }
    if !run.no_save {
        let store = ReportStore::new(&run.reports_dir);
        for r in &reports {
            store.save(r)?;
        }
    }
    Ok(())
}

fn serve(config: Option<PathBuf>, port: Option<u16>, host: Option<String>) -> Result<()> {
    let mut cfg = match &config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(p) = port {
        cfg.server.port = p;
    }
    if let Some(h) = host {
        cfg.server.host = h;
    }
    let state = Arc::new(chatrec_service::build_state(&cfg)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        chatrec_service::serve(state, &cfg.server, cfg.snapshot.as_deref(), shutdown).await
    })?;
    Ok(())
}
