use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use qreform::context::Selector;
use qreform::eval::{validate_run, EvalOptions, Gain, Metric, Qrels, Run, Topics};
use qreform::genreform::{sha256_hex, FusionMode, PromptKind};
use qreform::index::Index;
use qreform::pipeline::{
    cmd_eval, cmd_index, cmd_pairs, cmd_prompts, cmd_rerank, cmd_run, default_bm25_grid, render_stage_reports,
    tune_bm25, write_pairs, PipelineConfig, RunMode, GENERATOR_URL_ENV,
};
use qreform::weak::FilterChain;

/// Query reformulation experiments over a BM25 index.
#[derive(Parser)]
#[command(name = "qreform", version)]
struct Cli {
    /// Experiment manifest (TOML). Flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and save an index from a corpus file.
    Index(IndexArgs),
    /// Retrieve topics and write a TREC run file.
    Run(RunArgs),
    /// MaxPassage re-ranking of a run with an external scorer.
    Rerank(RerankArgs),
    /// Evaluate run files, optionally against a baseline.
    Eval(EvalArgs),
    /// Build and filter weakly supervised query pairs.
    Pairs(PairsArgs),
    /// Grid-search BM25 parameters.
    Tune(TuneArgs),
    /// Print the prompt each topic gets, one JSON object per line.
    Prompts(PromptsArgs),
}

#[derive(Args)]
struct IndexArgs {
    /// TSV (docno<TAB>text) or JSON lines with docno and text fields.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    no_stem: bool,
    #[arg(long)]
    stopwords: Option<PathBuf>,
}

#[derive(Args)]
struct Bm25Flags {
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[arg(long, short)]
    mode: RunMode,
    /// Run file to write; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    tag: Option<String>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    bm25: Bm25Flags,
    #[arg(long)]
    fb_docs: Option<usize>,
    #[arg(long)]
    fb_terms: Option<usize>,
    #[arg(long)]
    rm3_lambda: Option<f64>,
    #[arg(long)]
    k_rm3: Option<f64>,
    #[arg(long)]
    k_gen: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// interpolate or append; defaults per mode.
    #[arg(long)]
    fusion: Option<FusionMode>,
    /// firstp, topp or maxp.
    #[arg(long)]
    selector: Option<Selector>,
    #[arg(long)]
    passages: Option<usize>,
    #[arg(long)]
    num_return: Option<usize>,
    /// Generation service base URL.
    #[arg(long, env = GENERATOR_URL_ENV)]
    endpoint: Option<String>,
    /// Generation fixture file (JSON lines keyed by prompt hash).
    #[arg(long)]
    fixture: Option<PathBuf>,
}

#[derive(Args)]
struct RerankArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Scoring service base URL.
    #[arg(long)]
    scorer: Option<String>,
    /// Score fixture file.
    #[arg(long)]
    score_fixture: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    qrels: PathBuf,
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Run to test the others against (paired t-test, Holm-Bonferroni).
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "map,mrr,ndcg@10,ndcg@20,recall@1000")]
    metrics: Vec<Metric>,
    /// Use 2^rel - 1 gains for (n)DCG.
    #[arg(long)]
    exp_gain: bool,
    /// Score judged queries missing from a run as 0.
    #[arg(long)]
    all_queries: bool,
    /// Also print per-query values.
    #[arg(long)]
    per_query: bool,
}

#[derive(Args)]
struct PairsArgs {
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Filter chain such as O, E, S, O+S, E+S or none.
    #[arg(long, default_value = "E+S")]
    filters: FilterChain,
    #[arg(long, short)]
    out: PathBuf,
    /// Where to write the stage report; stderr when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    delta_o: Option<usize>,
    #[arg(long)]
    delta_e: Option<f64>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value = "map")]
    metric: Metric,
}

#[derive(Args)]
struct PromptsArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    /// t5qr, t5prf, flanqr or flanprf.
    #[arg(long)]
    kind: PromptKind,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_env();
    Ok(cfg)
}

fn load_index(path: &Path) -> Result<Index> {
    Index::load(path).with_context(|| format!("loading index {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Index(a) => {
            if a.no_stem {
                cfg.analysis.stem = false;
            }
            if a.stopwords.is_some() {
                cfg.analysis.stopwords = a.stopwords;
            }
            let index = cmd_index(&a.corpus, &a.out, cfg.analysis.to_config()?)?;
            eprintln!(
                "indexed {} documents, {} terms, avg length {:.2} -> {}",
                index.doc_count(),
                index.vocabulary_size(),
                index.avg_doc_length(),
                a.out.display()
            );
        }
        Command::Run(a) => {
            set(&mut cfg.bm25.k1, a.bm25.k1);
            set(&mut cfg.bm25.b, a.bm25.b);
            set(&mut cfg.run.depth, a.depth);
            set(&mut cfg.run.threads, a.threads);
            set(&mut cfg.prf.fb_docs, a.fb_docs);
            set(&mut cfg.prf.fb_terms, a.fb_terms);
            set(&mut cfg.prf.rm3_lambda, a.rm3_lambda);
            set(&mut cfg.fusion.k_rm3, a.k_rm3);
            set(&mut cfg.fusion.k_gen, a.k_gen);
            set(&mut cfg.fusion.beta, a.beta);
            set(&mut cfg.context.selector, a.selector);
            set(&mut cfg.context.num_passages, a.passages);
            set(&mut cfg.generation.num_return, a.num_return);
            if a.fusion.is_some() {
                cfg.fusion.mode = a.fusion;
            }
            if a.tag.is_some() {
                cfg.run.tag = a.tag;
            }
            if a.endpoint.is_some() {
                cfg.generation.endpoint = a.endpoint;
                cfg.generation.fixture = None;
            }
            if a.fixture.is_some() {
                cfg.generation.fixture = a.fixture;
                cfg.generation.endpoint = None;
            }
            cfg.validate()?;
            let index = load_index(&a.index)?;
            let topics = Topics::load(&a.topics)?;
            let run = cmd_run(&index, &topics, a.mode, &cfg)?;
            let text = run.to_trec_string();
            validate_run(&text)?;
            emit(a.out.as_deref(), &text)?;
        }
        Command::Rerank(a) => {
            set(&mut cfg.run.threads, a.threads);
            if a.scorer.is_some() {
                cfg.scoring.endpoint = a.scorer;
                cfg.scoring.fixture = None;
            }
            if a.score_fixture.is_some() {
                cfg.scoring.fixture = a.score_fixture;
                cfg.scoring.endpoint = None;
            }
            let index = load_index(&a.index)?;
            let topics = Topics::load(&a.topics)?;
            let input = Run::load(&a.run)?;
            let scorer = cfg.scorer()?;
            let out = cmd_rerank(&input, &topics, &index, scorer.as_ref(), &cfg)?;
            let text = out.to_trec_string();
            validate_run(&text)?;
            emit(a.out.as_deref(), &text)?;
        }
        Command::Eval(a) => {
            let qrels = Qrels::load(&a.qrels)?;
            let runs = a.runs.iter().map(Run::load).collect::<qreform::Result<Vec<_>>>()?;
            let baseline = a.baseline.as_deref().map(Run::load).transpose()?;
            let options = EvalOptions {
                gain: if a.exp_gain { Gain::Exponential } else { Gain::Linear },
                all_queries: a.all_queries,
            };
            let summary = cmd_eval(&runs, &qrels, &a.metrics, baseline.as_ref(), options)?;
            let mut text = summary.render();
            if a.per_query {
                text.push_str("\nrun\tmetric\tqid\tvalue\n");
                for r in &summary.reports {
                    for m in &r.metrics {
                        for (q, v) in &m.per_query {
                            text.push_str(&format!("{}\t{}\t{q}\t{v:.4}\n", r.tag, m.metric));
                        }
                    }
                }
            }
            emit(None, &text)?;
        }
        Command::Pairs(a) => {
            set(&mut cfg.filter.delta_o, a.delta_o);
            set(&mut cfg.filter.delta_e, a.delta_e);
            let index = load_index(&a.index)?;
            let qrels = Qrels::load(&a.qrels)?;
            let topics = Topics::load(&a.topics)?;
            let (pairs, reports) = cmd_pairs(&qrels, &topics, &index, &a.filters, &cfg)?;
            write_pairs(&a.out, &pairs)?;
            let report = render_stage_reports(&reports);
            match &a.report {
                Some(p) => std::fs::write(p, report)?,
                None => eprint!("{report}"),
            }
        }
        Command::Tune(a) => {
            let index = load_index(&a.index)?;
            let topics = Topics::load(&a.topics)?;
            let qrels = Qrels::load(&a.qrels)?;
            let report = tune_bm25(&index, &topics, &qrels, &default_bm25_grid(), a.metric, cfg.run.depth)?;
            emit(None, &report.render())?;
        }
        Command::Prompts(a) => {
            let index = load_index(&a.index)?;
            let topics = Topics::load(&a.topics)?;
            let mut text = String::new();
            for (qid, prompt) in cmd_prompts(&index, &topics, a.kind, &cfg)? {
                let line = serde_json::json!({
                    "qid": qid,
                    "kind": a.kind.name(),
                    "prompt_sha256": sha256_hex(&prompt),
                    "prompt": prompt,
                });
                text.push_str(&line.to_string());
                text.push('\n');
            }
            emit(None, &text)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        let code = match e.downcast_ref::<qreform::Error>() {
            Some(err) if err.is_retriable() => 3,
            Some(_) => 2,
            None => 1,
        };
        std::process::exit(code);
    }
}

