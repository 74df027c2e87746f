//! End-to-end commands: index, run, rerank, eval, pairs, tune and prompt dumps.

mod config;

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{select_context, Passage};
use crate::error::{Error, Result};
use crate::eval::{compare_all, evaluate, Comparison, EvalOptions, Metric, Qrels, Run, RunReport, Topics};
use crate::genreform::{
    build_prompt, fuse, generate, paraphrases_to_weighted_query, FusionMode, Generated, GenerationRequest,
    GenerationResult, Generator, PromptKind, RelevanceScorer,
};
use crate::index::{read_corpus, rerank_maxpassage, Bm25Params, Index, IndexBuilder, Ranking, WeightedQuery};
use crate::prf::{expand_dfr, expand_rm3, DfrModel};
use crate::textproc::AnalysisConfig;
use crate::weak::{build_initial_pool, pairs_to_tsv, run_filters, FilterChain, FilterContext, QueryPair, StageReport};

pub use config::{AnalysisSection, GenerationSection, PipelineConfig, RunSection, ScoringSection, GENERATOR_URL_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Bm25,
    Rm3,
    Bo1,
    Kl,
    T5qr,
    T5prf,
    Flanqr,
    Flanprf,
}

impl RunMode {
    pub const ALL: [RunMode; 8] = [
        RunMode::Bm25,
        RunMode::Rm3,
        RunMode::Bo1,
        RunMode::Kl,
        RunMode::T5qr,
        RunMode::T5prf,
        RunMode::Flanqr,
        RunMode::Flanprf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RunMode::Bm25 => "bm25",
            RunMode::Rm3 => "rm3",
            RunMode::Bo1 => "bo1",
            RunMode::Kl => "kl",
            RunMode::T5qr => "t5qr",
            RunMode::T5prf => "t5prf",
            RunMode::Flanqr => "flanqr",
            RunMode::Flanprf => "flanprf",
        }
    }

    /// The reformulation prompt of a generative mode.
    pub fn prompt_kind(self) -> Option<PromptKind> {
        match self {
            RunMode::T5qr => Some(PromptKind::T5Qr),
            RunMode::T5prf => Some(PromptKind::T5Prf),
            RunMode::Flanqr => Some(PromptKind::FlanQr),
            RunMode::Flanprf => Some(PromptKind::FlanPrf),
            _ => None,
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RunMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = RunMode::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!("unknown run mode {s:?} ({})", names.join(", ")))
            })
    }
}

/// Build an index from a corpus file and write it to `out`.
pub fn cmd_index(corpus: impl AsRef<Path>, out: impl AsRef<Path>, analysis: AnalysisConfig) -> Result<Index> {
    let mut builder = IndexBuilder::new(analysis);
    for (docno, text) in read_corpus(corpus)? {
        builder.add(docno, text)?;
    }
    let index = builder.finish()?;
    index.save(out)?;
    Ok(index)
}

/// Caps concurrent calls into a generator.
struct Throttled<'a> {
    inner: &'a dyn Generator,
    slots: Mutex<usize>,
    freed: Condvar,
}

impl<'a> Throttled<'a> {
    fn new(inner: &'a dyn Generator, max: usize) -> Self {
        Throttled {
            inner,
            slots: Mutex::new(max),
            freed: Condvar::new(),
        }
    }
}

impl Generator for Throttled<'_> {
    fn candidates(&self, request: &GenerationRequest) -> Result<Vec<GenerationResult>> {
        {
            let mut free = self.slots.lock().expect("slot lock");
            while *free == 0 {
                free = self.freed.wait(free).expect("slot lock");
            }
            *free -= 1;
        }
        let out = self.inner.candidates(request);
        *self.slots.lock().expect("slot lock") += 1;
        self.freed.notify_one();
        out
    }
}

/// Everything recorded while running one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTrace {
    pub query_id: String,
    pub original: WeightedQuery,
    pub first_stage: Ranking,
    pub context: Vec<Passage>,
    pub prompt: Option<String>,
    pub generations: Vec<GenerationResult>,
    /// The query sent to the final retrieval.
    pub final_query: WeightedQuery,
    pub ranking: Ranking,
}

/// Shared state for running topics in one mode.
pub struct Runner<'a> {
    pub index: &'a Index,
    pub config: &'a PipelineConfig,
    generator: Option<&'a dyn Generator>,
}

impl<'a> Runner<'a> {
    /// `generator` is required for the generative modes only.
    pub fn new(index: &'a Index, config: &'a PipelineConfig, generator: Option<&'a dyn Generator>) -> Result<Self> {
        config.validate()?;
        Ok(Runner { index, config, generator })
    }

    fn generate_with_retry(&self, generator: &dyn Generator, request: &GenerationRequest) -> Result<Vec<GenerationResult>> {
        let mut attempt = 0;
        loop {
            match generate(generator, request) {
                Err(e) if e.is_retriable() && attempt < self.config.generation.retries => {
                    attempt += 1;
                    log::warn!("query {}: {e}; retry {attempt}", request.id);
                    std::thread::sleep(Duration::from_millis(200 << attempt));
                }
                other => return other,
            }
        }
    }

    /// The prompt `kind` builds for a topic, with the context it selected.
    pub fn prompt_for(&self, text: &str, first_stage: &Ranking, kind: PromptKind) -> Result<(String, Vec<Passage>)> {
        let original = WeightedQuery::from_text(text, self.index.analysis());
        let context = if kind.needs_context() {
            select_context(self.index, &original, first_stage, &self.config.context, &self.config.bm25)?
        } else {
            Vec::new()
        };
        Ok((build_prompt(kind, text, &context)?, context))
    }

    /// Run one topic through the full pipeline of `mode`.
    pub fn run_query(&self, query_id: &str, text: &str, mode: RunMode) -> Result<QueryTrace> {
        let cfg = self.config;
        let params = &cfg.bm25;
        let depth = cfg.run.depth;
        let original = WeightedQuery::from_text(text, self.index.analysis());
        let first_stage = self.index.search(&original, depth, params).with_query_id(query_id);
        let mut trace = QueryTrace {
            query_id: query_id.to_string(),
            original: original.clone(),
            first_stage: first_stage.clone(),
            context: Vec::new(),
            prompt: None,
            generations: Vec::new(),
            final_query: original.clone(),
            ranking: first_stage.clone(),
        };
        let rm3 = || expand_rm3(self.index, &original, &first_stage, &cfg.prf).map(|e| e.query);
        trace.final_query = match mode {
            RunMode::Bm25 => return Ok(trace),
            RunMode::Rm3 => rm3()?,
            RunMode::Bo1 => expand_dfr(self.index, &original, &first_stage, DfrModel::Bo1, &cfg.prf)?.query,
            RunMode::Kl => expand_dfr(self.index, &original, &first_stage, DfrModel::Kl, &cfg.prf)?.query,
            _ => {
                let kind = mode.prompt_kind().expect("generative mode");
                if kind.needs_context() && first_stage.is_empty() {
                    log::warn!("query {query_id}: no feedback documents, keeping the first-stage ranking");
                    return Ok(trace);
                }
                let generator = self
                    .generator
                    .ok_or_else(|| Error::Config(format!("mode {mode} needs a generator")))?;
                let (prompt, context) = self.prompt_for(text, &first_stage, kind)?;
                let request = GenerationRequest {
                    num_return: cfg.generation.num_return,
                    beam_size: cfg.generation.beam_size,
                    max_new_tokens: cfg.generation.max_new_tokens,
                    ..GenerationRequest::new(query_id, prompt.clone())
                };
                let generations = self.generate_with_retry(generator, &request)?;
                let fused = match cfg.fusion.mode_for(kind) {
                    FusionMode::Interpolate => {
                        let generated = paraphrases_to_weighted_query(&generations, self.index.analysis())?;
                        let rm3 = rm3()?;
                        fuse(&original, Some(&rm3), Generated::Weighted(&generated), FusionMode::Interpolate, &cfg.fusion, self.index.analysis())?
                    }
                    FusionMode::Append => {
                        let texts: Vec<String> = generations.iter().map(|g| g.text.clone()).collect();
                        fuse(&original, None, Generated::Texts(&texts), FusionMode::Append, &cfg.fusion, self.index.analysis())?
                    }
                };
                trace.prompt = Some(prompt);
                trace.context = context;
                trace.generations = generations;
                fused
            }
        };
        trace.ranking = self.index.search(&trace.final_query, depth, params).with_query_id(query_id);
        Ok(trace)
    }

    /// Run every topic, in topic order, on a bounded worker pool.
    pub fn run(&self, topics: &Topics, mode: RunMode) -> Result<Run> {
        let throttled = self.generator.map(|g| Throttled::new(g, self.config.generation.max_in_flight));
        let runner = Runner {
            index: self.index,
            config: self.config,
            generator: throttled.as_ref().map(|t| t as &dyn Generator),
        };
        let entries: Vec<(&str, &str)> = topics.iter().collect();
        let rankings = with_pool(self.config.run.threads, || {
            entries
                .par_iter()
                .map(|&(qid, text)| runner.run_query(qid, text, mode).map(|t| t.ranking))
                .collect::<Result<Vec<_>>>()
        })?;
        let tag = self.config.run.tag.clone().unwrap_or_else(|| mode.name().to_string());
        Ok(Run::new(tag, rankings))
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    pool.install(f)
}

/// Retrieve `topics` in `mode`, building the generator from `config` when the
/// mode needs one.
pub fn cmd_run(index: &Index, topics: &Topics, mode: RunMode, config: &PipelineConfig) -> Result<Run> {
    let generator = match mode.prompt_kind() {
        Some(_) => Some(config.generator()?),
        None => None,
    };
    Runner::new(index, config, generator.as_deref())?.run(topics, mode)
}

/// MaxPassage re-ranking of every query in `run`; the tag gains `.rr`.
pub fn cmd_rerank(
    run: &Run,
    topics: &Topics,
    index: &Index,
    scorer: &dyn RelevanceScorer,
    config: &PipelineConfig,
) -> Result<Run> {
    let (window, stride) = (config.scoring.window, config.scoring.stride);
    let rankings = with_pool(config.run.threads, || {
        run.rankings
            .par_iter()
            .map(|r| {
                let text = topics
                    .get(&r.query_id)
                    .ok_or_else(|| Error::Usage(format!("run query {} is not in the topics", r.query_id)))?;
                rerank_maxpassage(index, r, text, scorer, window, stride)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Run::new(format!("{}.rr", run.tag), rankings))
}

/// Metric reports for several runs, optionally tested against a baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub metrics: Vec<Metric>,
    pub reports: Vec<RunReport>,
    pub baseline: Option<RunReport>,
    /// One entry per report, present when a baseline was given.
    pub comparisons: Option<Vec<Vec<Comparison>>>,
    pub alpha: f64,
}

pub fn cmd_eval(
    runs: &[Run],
    qrels: &Qrels,
    metrics: &[Metric],
    baseline: Option<&Run>,
    options: EvalOptions,
) -> Result<EvalSummary> {
    if metrics.is_empty() {
        return Err(Error::Usage("no metrics requested".into()));
    }
    let reports: Vec<RunReport> = runs.iter().map(|r| evaluate(r, qrels, metrics, options)).collect();
    let baseline = baseline.map(|b| evaluate(b, qrels, metrics, options));
    let comparisons = match &baseline {
        Some(b) => Some(compare_all(b, &reports)?),
        None => None,
    };
    Ok(EvalSummary {
        metrics: metrics.to_vec(),
        reports,
        baseline,
        comparisons,
        alpha: 0.05,
    })
}

impl EvalSummary {
    /// A tab-separated table of means, `*` marking a significant difference
    /// from the baseline after correction, followed by the test details.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.metrics.iter().map(Metric::to_string).collect();
        writeln!(out, "run\t{}", header.join("\t")).unwrap();
        if let Some(b) = &self.baseline {
            let cells: Vec<String> = self.metrics.iter().map(|&m| format!("{:.4}", b.mean(m).unwrap_or(0.0))).collect();
            writeln!(out, "{} (baseline)\t{}", b.tag, cells.join("\t")).unwrap();
        }
        for (i, r) in self.reports.iter().enumerate() {
            let cells: Vec<String> = self
                .metrics
                .iter()
                .map(|&m| {
                    let marker = self
                        .comparisons
                        .as_ref()
                        .and_then(|c| c[i].iter().find(|x| x.metric == m))
                        .map_or("", |c| if c.significant(self.alpha) && c.delta > 0.0 { "*" } else if c.significant(self.alpha) { "-" } else { "" });
                    format!("{:.4}{marker}", r.mean(m).unwrap_or(0.0))
                })
                .collect();
            writeln!(out, "{}\t{}", r.tag, cells.join("\t")).unwrap();
        }
        if let Some(comparisons) = &self.comparisons {
            writeln!(out).unwrap();
            writeln!(out, "run\tmetric\tdelta\tp\tp_holm").unwrap();
            for (r, cs) in self.reports.iter().zip(comparisons) {
                for c in cs {
                    writeln!(out, "{}\t{}\t{:+.4}\t{:.4}\t{:.4}", r.tag, c.metric, c.delta, c.p_value, c.adjusted_p).unwrap();
                }
            }
        }
        for r in self.reports.iter().chain(&self.baseline) {
            if !r.skipped.is_empty() {
                writeln!(out, "# {}: skipped queries without relevant judgments: {}", r.tag, r.skipped.join(" ")).unwrap();
            }
        }
        out
    }
}

/// The weak-supervision pool after `chain`, and the per-stage report.
pub fn cmd_pairs(
    qrels: &Qrels,
    topics: &Topics,
    index: &Index,
    chain: &FilterChain,
    config: &PipelineConfig,
) -> Result<(Vec<QueryPair>, Vec<StageReport>)> {
    config.validate()?;
    let pool = build_initial_pool(qrels, topics)?;
    let ctx = FilterContext {
        index,
        qrels,
        params: config.bm25,
        stoplist: config.analysis.to_config()?.stopwords,
        config: config.filter,
    };
    Ok(run_filters(&pool, chain, &ctx))
}

pub fn render_stage_reports(reports: &[StageReport]) -> String {
    let mut out = String::from("stage\tpool_size\tavg_len_qx\tavg_len_qy\n");
    for r in reports {
        writeln!(out, "{}\t{}\t{:.2}\t{:.2}", r.stage, r.pool_size, r.avg_len_qx, r.avg_len_qy).unwrap();
    }
    out
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[QueryPair]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, pairs_to_tsv(pairs)).map_err(|e| Error::io(path, e))
}

/// The default BM25 search grid: k1 ∈ {0.6, 0.9, 1.2, 1.5, 2.0} × b ∈ {0.3, 0.5, 0.75, 0.9}.
pub fn default_bm25_grid() -> Vec<Bm25Params> {
    let mut grid = Vec::new();
    for k1 in [0.6, 0.9, 1.2, 1.5, 2.0] {
        for b in [0.3, 0.5, 0.75, 0.9] {
            grid.push(Bm25Params { k1, b });
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    pub metric: Metric,
    pub rows: Vec<(Bm25Params, f64)>,
    /// First grid point with the highest score.
    pub best: Bm25Params,
}

impl TuneReport {
    pub fn render(&self) -> String {
        let mut out = format!("k1\tb\t{}\n", self.metric);
        for (p, v) in &self.rows {
            let mark = if *p == self.best { "\t<- best" } else { "" };
            writeln!(out, "{}\t{}\t{v:.4}{mark}", p.k1, p.b).unwrap();
        }
        out
    }
}

/// Grid search for BM25 parameters on validation topics.
pub fn tune_bm25(
    index: &Index,
    topics: &Topics,
    qrels: &Qrels,
    grid: &[Bm25Params],
    metric: Metric,
    depth: usize,
) -> Result<TuneReport> {
    if grid.is_empty() {
        return Err(Error::Usage("empty tuning grid".into()));
    }
    let rows: Vec<(Bm25Params, f64)> = grid
        .par_iter()
        .map(|p| {
            p.validate()?;
            let rankings = topics
                .iter()
                .map(|(qid, text)| {
                    let q = WeightedQuery::from_text(text, index.analysis());
                    index.search(&q, depth, p).with_query_id(qid)
                })
                .collect();
            let report = evaluate(&Run::new("tune", rankings), qrels, &[metric], EvalOptions::default());
            Ok((*p, report.mean(metric).unwrap_or(0.0)))
        })
        .collect::<Result<_>>()?;
    let mut best = rows[0];
    for &row in &rows[1..] {
        if row.1 > best.1 {
            best = row;
        }
    }
    Ok(TuneReport { metric, rows, best: best.0 })
}

/// The prompt each topic gets under `kind`, in topic order.
pub fn cmd_prompts(index: &Index, topics: &Topics, kind: PromptKind, config: &PipelineConfig) -> Result<Vec<(String, String)>> {
    let runner = Runner::new(index, config, None)?;
    topics
        .iter()
        .filter_map(|(qid, text)| {
            let q = WeightedQuery::from_text(text, index.analysis());
            let first = index.search(&q, config.run.depth, &config.bm25);
            if kind.needs_context() && first.is_empty() {
                return None;
            }
            Some(runner.prompt_for(text, &first, kind).map(|(p, _)| (qid.to_string(), p)))
        })
        .collect()
}
