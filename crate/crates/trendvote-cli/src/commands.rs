//! The five subcommands: ingest, predict, sweep, eval, synth.
//!
//! Every command is a deterministic function of (config, input files, cache
//! contents): no wall clock enters any output, and replayed runs produce
//! byte-identical prediction files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use trendvote::backends::{CachedBackend, Classifier, LexiconBackend, RemoteBackend, RemoteConfig};
use trendvote::corpus::{
    build_instances, ingest_news, ingest_prices, split_dataset, DatasetSplit, SplitName, SplitSet,
};
use trendvote::evaluation::{
    correctness, evaluate_predictions, paired_ttest, write_results, write_series, write_table,
    MetricsRow, RunReport, SeriesRow, SignificanceResult,
};
use trendvote::evaluation::report::SignificanceVs;
use trendvote::pipeline::{
    run_method, sweep_lambda, DayPrediction, MethodContext, MethodKind,
};
use trendvote::prompting::{
    load_exemplar_pool, Exemplar, Template, WhitespaceCounter,
};
use trendvote::synthlab::{generate, write_corpus, OracleBackend, SynthPaths};
use trendvote::{Real, TrendLabel};

use crate::config::RunConfig;
use crate::CliError;

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn aborted(e: impl std::fmt::Display) -> CliError {
    CliError::Aborted(e.to_string())
}

/// Split sizes and label distributions for `ingest`.
#[derive(Debug)]
pub struct IngestSummary {
    pub rows: Vec<(SplitName, usize, usize, usize)>,
    pub empty_days: usize,
    pub unassigned_news: usize,
    pub excluded_instances: usize,
}

impl IngestSummary {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, days, down, up) in &self.rows {
            out.push_str(&format!("{name}: {days} days (down/up {down}/{up})\n"));
        }
        out.push_str(&format!(
            "days without news: {}; news outside all windows: {}; instances outside all spans: {}\n",
            self.empty_days, self.unassigned_news, self.excluded_instances
        ));
        out
    }
}

#[derive(Debug)]
pub struct LoadedCorpus {
    pub splits: SplitSet,
    pub empty_days: usize,
    pub unassigned_news: usize,
}

pub fn load_corpus(cfg: &RunConfig) -> Result<LoadedCorpus, CliError> {
    for (name, path) in [("data.news", &cfg.data.news), ("data.prices", &cfg.data.prices)] {
        if path.is_empty() {
            return Err(CliError::Validation(format!("{name} is not set")));
        }
        if !Path::new(path).exists() {
            return Err(CliError::Validation(format!("{name}: no such file `{path}`")));
        }
    }
    let news = ingest_news(Path::new(&cfg.data.news)).map_err(validation)?;
    let prices = ingest_prices(Path::new(&cfg.data.prices)).map_err(validation)?;
    let set = build_instances(&news, &prices).map_err(validation)?;
    let splits = split_dataset(&set.instances, cfg.spans()?).map_err(validation)?;
    Ok(LoadedCorpus {
        splits,
        empty_days: set.empty_days,
        unassigned_news: set.unassigned_news,
    })
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestSummary, CliError> {
    let corpus = load_corpus(cfg)?;
    let rows = [SplitName::Train, SplitName::Valid, SplitName::Test]
        .into_iter()
        .map(|name| {
            let split = corpus.splits.get(name);
            let (down, up) = split.label_distribution();
            (name, split.instances.len(), down, up)
        })
        .collect();
    Ok(IngestSummary {
        rows,
        empty_days: corpus.empty_days,
        unassigned_news: corpus.unassigned_news,
        excluded_instances: corpus.splits.excluded,
    })
}

/// A constructed backend, with the cache handle kept around for stats.
pub enum BuiltBackend {
    Plain(Box<dyn Classifier>),
    Cached(Arc<CachedBackend>),
}

impl BuiltBackend {
    pub fn classifier(&self) -> &dyn Classifier {
        match self {
            BuiltBackend::Plain(b) => b.as_ref(),
            BuiltBackend::Cached(c) => c.as_ref(),
        }
    }

    pub fn cache_stats(&self) -> Option<CacheStatsSnapshot> {
        match self {
            BuiltBackend::Plain(_) => None,
            BuiltBackend::Cached(c) => Some(CacheStatsSnapshot {
                hits: c.stats().hits(),
                misses: c.stats().misses(),
                inner_calls: c.stats().inner_calls(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheStatsSnapshot {
    pub hits: u64,
    pub misses: u64,
    pub inner_calls: u64,
}

fn build_inner_backend(cfg: &RunConfig) -> Result<Box<dyn Classifier>, CliError> {
    match cfg.backend.kind.as_str() {
        "lexicon" => {
            if cfg.backend.lexicon.is_empty() {
                return Err(CliError::Validation("backend.lexicon path is not set".into()));
            }
            Ok(Box::new(
                LexiconBackend::from_file(Path::new(&cfg.backend.lexicon)).map_err(validation)?,
            ))
        }
        "oracle" => {
            if cfg.backend.truth.is_empty() {
                return Err(CliError::Validation("backend.truth path is not set".into()));
            }
            Ok(Box::new(
                OracleBackend::from_truth_file(
                    Path::new(&cfg.backend.truth),
                    cfg.backend.relevance_error,
                    cfg.backend.direction_error,
                    cfg.backend.oracle_seed,
                )
                .map_err(validation)?,
            ))
        }
        "remote" => {
            let remote = RemoteBackend::new(RemoteConfig {
                endpoint: cfg.backend.endpoint.clone(),
                credential_env: cfg.backend.credential_env.clone(),
                max_attempts: cfg.backend.max_attempts,
                initial_backoff: std::time::Duration::from_millis(cfg.backend.initial_backoff_ms),
                in_flight: cfg.backend.in_flight,
                requests_per_minute: cfg.backend.requests_per_minute,
                timeout: std::time::Duration::from_secs(cfg.backend.timeout_secs),
            })
            .map_err(validation)?;
            Ok(Box::new(remote))
        }
        other => Err(CliError::Usage(format!(
            "unknown backend `{other}` (expected remote|lexicon|oracle|replay)"
        ))),
    }
}

pub fn build_backend(cfg: &RunConfig) -> Result<BuiltBackend, CliError> {
    if cfg.backend.kind == "replay" {
        if cfg.backend.cache.is_empty() {
            return Err(CliError::Validation("replay backend requires backend.cache".into()));
        }
        let cache = CachedBackend::open(Path::new(&cfg.backend.cache), None).map_err(validation)?;
        return Ok(BuiltBackend::Cached(Arc::new(cache)));
    }
    let inner = build_inner_backend(cfg)?;
    if cfg.backend.cache.is_empty() {
        Ok(BuiltBackend::Plain(inner))
    } else {
        let cache =
            CachedBackend::open(Path::new(&cfg.backend.cache), Some(inner)).map_err(validation)?;
        Ok(BuiltBackend::Cached(Arc::new(cache)))
    }
}

fn load_template(path: &str) -> Result<Template, CliError> {
    if path.is_empty() {
        Ok(Template::default_skeleton())
    } else {
        Template::from_file(Path::new(path)).map_err(validation)
    }
}

fn load_pool(path: &str) -> Result<Vec<Exemplar>, CliError> {
    if path.is_empty() {
        Ok(Vec::new())
    } else {
        load_exemplar_pool(Path::new(path)).map_err(validation)
    }
}

/// Build the method context for `kind` from the config.
pub fn build_context(cfg: &RunConfig, kind: MethodKind) -> Result<MethodContext, CliError> {
    let mut method_cfg = cfg.method_config()?;
    method_cfg.kind = kind;
    if kind != MethodKind::Standard {
        method_cfg.token_budget = Some(cfg.method.token_budget);
    }
    let pool_path = match kind {
        MethodKind::Standard => &cfg.prompting.pool_standard,
        MethodKind::Voting => &cfg.prompting.pool_voting,
        MethodKind::Dtv => &cfg.prompting.pool_dtv,
    };
    let ctx = MethodContext {
        cfg: method_cfg,
        input_variant: cfg.input_variant()?,
        item_template: load_template(&cfg.prompting.item_template)?,
        standard_template: load_template(&cfg.prompting.standard_template)?,
        pool: load_pool(pool_path)?,
        instruction: (!cfg.prompting.instruction.is_empty()).then(|| cfg.prompting.instruction.clone()),
        counter: Box::new(WhitespaceCounter),
        model_id: cfg.backend.model.clone(),
        temperature: cfg.backend.temperature,
        workers: cfg.backend.in_flight.max(1),
    };
    ctx.validate().map_err(validation)?;
    Ok(ctx)
}

fn parse_split(name: &str) -> Result<SplitName, CliError> {
    match name.to_ascii_lowercase().as_str() {
        "train" => Ok(SplitName::Train),
        "valid" => Ok(SplitName::Valid),
        "test" => Ok(SplitName::Test),
        other => Err(CliError::Usage(format!("unknown split `{other}`"))),
    }
}

#[derive(Debug)]
pub struct PredictSummary {
    pub path: PathBuf,
    pub n_days: usize,
    pub fallback_days: usize,
    pub cache: Option<CacheStatsSnapshot>,
}

impl PredictSummary {
    pub fn render(&self) -> String {
        let mut out = format!(
            "wrote {} ({} days, {} fallback)\n",
            self.path.display(),
            self.n_days,
            self.fallback_days
        );
        if let Some(stats) = &self.cache {
            out.push_str(&format!(
                "cache: {} hits, {} misses, {} backend calls\n",
                stats.hits, stats.misses, stats.inner_calls
            ));
        }
        out
    }
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn write_predictions(preds: &[DayPrediction], path: &Path) -> Result<(), CliError> {
    let mut out = Vec::new();
    for p in preds {
        serde_json::to_writer(&mut out, p).expect("prediction serializes");
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| aborted(format!("writing {}: {e}", path.display())))
}

pub fn read_predictions(path: &Path) -> Result<Vec<DayPrediction>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut preds = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: DayPrediction = serde_json::from_str(line).map_err(|e| {
            CliError::Validation(format!("{}:{}: bad prediction record: {e}", path.display(), idx + 1))
        })?;
        preds.push(p);
    }
    Ok(preds)
}

fn run_split(
    cfg: &RunConfig,
    kind: MethodKind,
    split: &DatasetSplit,
    backend: &BuiltBackend,
) -> Result<Vec<DayPrediction>, CliError> {
    let ctx = build_context(cfg, kind)?;
    run_method(split, &ctx, backend.classifier()).map_err(aborted)
}

/// Run one method over one split and write the prediction file.
pub fn cmd_predict(cfg: &RunConfig, method: &str, split_name: &str) -> Result<PredictSummary, CliError> {
    let kind = MethodKind::parse(method)
        .ok_or_else(|| CliError::Usage(format!("unknown method `{method}`")))?;
    let split_name = parse_split(split_name)?;
    let corpus = load_corpus(cfg)?;
    let split = corpus.splits.get(split_name);
    let backend = build_backend(cfg)?;
    let preds = run_split(cfg, kind, split, &backend)?;
    let out_dir = ensure_out_dir(cfg)?;
    let path = out_dir.join(format!("predictions_{kind}_{split_name}.jsonl"));
    write_predictions(&preds, &path)?;
    Ok(PredictSummary {
        path,
        n_days: preds.len(),
        fallback_days: preds.iter().filter(|p| p.fallback_used).count(),
        cache: backend.cache_stats(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Lambda,
    Shots,
    NewsCount,
    Variant,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "lambda" => Ok(SweepAxis::Lambda),
            "shots" => Ok(SweepAxis::Shots),
            "news_count" | "news-count" => Ok(SweepAxis::NewsCount),
            "variant" => Ok(SweepAxis::Variant),
            other => Err(CliError::Usage(format!(
                "unknown sweep axis `{other}` (expected lambda|shots|news_count|variant)"
            ))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepAxis::Lambda => write!(f, "lambda"),
            SweepAxis::Shots => write!(f, "shots"),
            SweepAxis::NewsCount => write!(f, "news_count"),
            SweepAxis::Variant => write!(f, "variant"),
        }
    }
}

#[derive(Debug)]
pub struct SweepSummary {
    pub axis: SweepAxis,
    pub series_path: PathBuf,
    pub rows: Vec<(String, Real)>,
    /// Chosen λ for the lambda axis.
    pub best_lambda: Option<Real>,
}

impl SweepSummary {
    pub fn render(&self) -> String {
        let mut out = format!("wrote {}\n", self.series_path.display());
        for (x, acc) in &self.rows {
            out.push_str(&format!("{} = {x}: acc {acc:.4}\n", self.axis));
        }
        if let Some(best) = self.best_lambda {
            out.push_str(&format!("best lambda: {best}\n"));
        }
        out
    }
}

/// Sweep one experiment axis, writing an `x,acc,p,r,f1` series file.
pub fn cmd_sweep(cfg: &RunConfig, axis: SweepAxis, method: &str, split_name: &str) -> Result<SweepSummary, CliError> {
    let kind = MethodKind::parse(method)
        .ok_or_else(|| CliError::Usage(format!("unknown method `{method}`")))?;
    let split_enum = parse_split(split_name)?;
    let corpus = load_corpus(cfg)?;
    let split = corpus.splits.get(split_enum);
    let backend = build_backend(cfg)?;
    let positive = cfg.positive_class()?;
    let out_dir = ensure_out_dir(cfg)?;
    let series_path = out_dir.join(format!("sweep_{axis}_{kind}_{split_enum}.csv"));

    let mut series = Vec::new();
    let mut rows = Vec::new();
    let mut best_lambda = None;

    match axis {
        SweepAxis::Lambda => {
            if kind == MethodKind::Standard {
                return Err(CliError::Usage(
                    "lambda sweep needs per-item tallies; use --method voting or dtv".into(),
                ));
            }
            let preds = run_split(cfg, kind, split, &backend)?;
            let truths: Vec<TrendLabel> = preds.iter().map(|p| p.truth).collect();
            let grid = cfg.sweep.lambda_grid();
            let sweep = sweep_lambda(&preds, &truths, &grid).map_err(aborted)?;
            for row in &sweep.rows {
                // re-vote at this λ and compute the full metric row
                let relabeled: Vec<DayPrediction> = preds
                    .iter()
                    .map(|p| {
                        let mut p = p.clone();
                        if p.tally.direction_total() > 0 {
                            let (label, _) =
                                trendvote::pipeline::vote(&p.tally, row.lambda, p.final_label);
                            p.final_label = label;
                        }
                        p
                    })
                    .collect();
                let m = evaluate_predictions(&relabeled, positive).map_err(aborted)?;
                series.push(SeriesRow::from_metrics(format!("{}", row.lambda), &m));
                rows.push((format!("{}", row.lambda), m.acc));
            }
            best_lambda = Some(sweep.best_lambda);
        }
        SweepAxis::Shots => {
            for shots in cfg.sweep.shots_grid() {
                let mut cfg = cfg.clone();
                cfg.method.shots_per_class = shots;
                let preds = run_split(&cfg, kind, split, &backend)?;
                let m = evaluate_predictions(&preds, positive).map_err(aborted)?;
                series.push(SeriesRow::from_metrics(shots, &m));
                rows.push((shots.to_string(), m.acc));
            }
        }
        SweepAxis::NewsCount => {
            for n in cfg.sweep.news_count_grid() {
                let mut cfg = cfg.clone();
                cfg.method.max_news = n;
                let preds = run_split(&cfg, kind, split, &backend)?;
                let m = evaluate_predictions(&preds, positive).map_err(aborted)?;
                series.push(SeriesRow::from_metrics(n, &m));
                rows.push((n.to_string(), m.acc));
            }
        }
        SweepAxis::Variant => {
            for variant in cfg.sweep.variants() {
                let mut cfg = cfg.clone();
                cfg.method.input_variant = variant.clone();
                let preds = run_split(&cfg, kind, split, &backend)?;
                let m = evaluate_predictions(&preds, positive).map_err(aborted)?;
                series.push(SeriesRow::from_metrics(&variant, &m));
                rows.push((variant, m.acc));
            }
        }
    }

    write_series(&series, &series_path).map_err(aborted)?;
    Ok(SweepSummary {
        axis,
        series_path,
        rows,
        best_lambda,
    })
}

#[derive(Debug)]
pub struct EvalSummary {
    pub results_path: PathBuf,
    pub table_path: PathBuf,
    pub reports: Vec<RunReport>,
    pub skipped_pairs: Vec<(String, String)>,
}

impl EvalSummary {
    pub fn render(&self) -> String {
        let mut buf = Vec::new();
        trendvote::evaluation::report::write_table_to(&self.reports, &mut buf).expect("table renders");
        let mut out = String::from_utf8(buf).unwrap();
        for (a, b) in &self.skipped_pairs {
            out.push_str(&format!("warning: day sets differ, no t-test for {a} vs {b}\n"));
        }
        out.push_str(&format!(
            "wrote {} and {}\n",
            self.results_path.display(),
            self.table_path.display()
        ));
        out
    }
}

/// Evaluate prediction files: metrics per file, paired t-tests between
/// files sharing identical day sets (each later file against the first
/// compatible one).
pub fn cmd_eval(cfg: &RunConfig, files: &[PathBuf]) -> Result<EvalSummary, CliError> {
    if files.is_empty() {
        return Err(CliError::Usage("eval needs at least one prediction file".into()));
    }
    let positive = cfg.positive_class()?;
    let mut labeled: Vec<(String, Vec<DayPrediction>)> = Vec::new();
    for path in files {
        let preds = read_predictions(path)?;
        if preds.is_empty() {
            return Err(CliError::Validation(format!("{}: empty prediction file", path.display())));
        }
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        labeled.push((label, preds));
    }
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for (i, (label, preds)) in labeled.iter().enumerate() {
        let metrics: MetricsRow = evaluate_predictions(preds, positive).map_err(validation)?;
        let mut significance = None;
        if i > 0 {
            let days: Vec<_> = preds.iter().map(|p| p.date).collect();
            let baseline = labeled[..i]
                .iter()
                .find(|(_, other)| other.iter().map(|p| p.date).collect::<Vec<_>>() == days);
            match baseline {
                Some((base_label, base_preds)) if preds.len() >= 2 => {
                    let result: SignificanceResult =
                        paired_ttest(&correctness(preds), &correctness(base_preds))
                            .map_err(validation)?;
                    significance = Some(SignificanceVs {
                        baseline: base_label.clone(),
                        result,
                    });
                }
                Some((base_label, _)) => skipped.push((label.clone(), base_label.clone())),
                None => skipped.push((label.clone(), labeled[0].0.clone())),
            }
        }
        reports.push(RunReport {
            label: label.clone(),
            config: cfg.echo(),
            positive_class: positive,
            metrics,
            significance,
        });
    }
    let out_dir = ensure_out_dir(cfg)?;
    let results_path = out_dir.join("results.jsonl");
    let table_path = out_dir.join("table.md");
    write_results(&reports, &results_path).map_err(aborted)?;
    write_table(&reports, &table_path).map_err(aborted)?;
    Ok(EvalSummary {
        results_path,
        table_path,
        reports,
        skipped_pairs: skipped,
    })
}

#[derive(Debug)]
pub struct SynthSummary {
    pub paths: SynthPaths,
    pub n_days: usize,
    pub n_items: usize,
}

impl SynthSummary {
    pub fn render(&self) -> String {
        format!(
            "wrote {} ({} days, {} items), {}, {}, {}\n",
            self.paths.news.display(),
            self.n_days,
            self.n_items,
            self.paths.prices.display(),
            self.paths.truth.display(),
            self.paths.lexicon.display()
        )
    }
}

/// Generate a synthetic corpus with planted truth into the output directory.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthSummary, CliError> {
    let synth_cfg = cfg.synth_config()?;
    let corpus = generate(&synth_cfg).map_err(validation)?;
    let out_dir = ensure_out_dir(cfg)?;
    let paths = write_corpus(&corpus, &out_dir).map_err(aborted)?;
    Ok(SynthSummary {
        paths,
        n_days: corpus.days.len(),
        n_items: corpus.days.iter().map(|d| d.items.len()).sum(),
    })
}
