//! Experiment orchestration: translate every (language, item, protocol)
//! cell, score it, and aggregate into summary and significance tables.
//!
//! Progress lives in an append-only jsonl results log keyed by
//! (language, item_id, protocol); re-running the same config skips completed
//! keys, so an interrupted run against a paid API resumes where it stopped.

pub mod report;

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

use crate::config::{RunConfig, ScorerKind, ScorerSettings};
use crate::corpus::{load_corpus_with, Corpus, CorpusError, CorpusItem, LanguageId, LoadWarning};
use crate::llm_client::{
    ledger_add, ChatRequest, ClientConfig, ClientError, LlmClient, ResponseSource, UsageLedger,
};
use crate::metrics::scorer::{ExternalScorer, FileScorer, SubprocessScorer};
use crate::metrics::stats::{mean_std, paired_t_test_values};
use crate::metrics::{chrf, MetricsError};
use crate::prompting::{build_prompt, Protocol, PromptOptions};
use crate::selection::{select_demonstrations, DemoSet};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no scores for language {language}, protocol {protocol}, metric {metric}")]
    EmptyCell { language: LanguageId, protocol: Protocol, metric: String },
    #[error("{language}/{metric} {pair}: only {n} shared items, need at least 2")]
    TooFewPairs { language: LanguageId, metric: String, pair: ComparisonPair, n: usize },
    #[error("cannot write {path}: {message}")]
    OutputUnwritable { path: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("results log {path}: {message}")]
    CorruptLog { path: String, message: String },
    #[error("configuration error: {0}")]
    Config(String),
}

/// One (item, protocol) outcome. Skipped cells keep their slot in the log so
/// counts stay conserved; they carry a reason instead of a hypothesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemResult {
    pub language: LanguageId,
    pub item_id: String,
    pub protocol: Protocol,
    pub hypothesis: Option<String>,
    #[serde(default)]
    pub scores: BTreeMap<String, f64>,
    #[serde(default)]
    pub demo_ids: Vec<String>,
    pub skipped: bool,
    #[serde(default)]
    pub skip_reason: Option<String>,
    #[serde(default)]
    pub response_source: Option<ResponseSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolSummary {
    pub language: LanguageId,
    pub protocol: Protocol,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonPair {
    ZeroVsZeroUmr,
    ZeroVsFive,
    FiveVsFiveUmr,
}

impl ComparisonPair {
    pub const ALL: [ComparisonPair; 3] = [
        ComparisonPair::ZeroVsZeroUmr,
        ComparisonPair::ZeroVsFive,
        ComparisonPair::FiveVsFiveUmr,
    ];

    /// (baseline, enhanced) protocol sides.
    pub fn protocols(self) -> (Protocol, Protocol) {
        match self {
            ComparisonPair::ZeroVsZeroUmr => (Protocol::ZeroShot, Protocol::ZeroShotUmr),
            ComparisonPair::ZeroVsFive => (Protocol::ZeroShot, Protocol::FiveShot),
            ComparisonPair::FiveVsFiveUmr => (Protocol::FiveShot, Protocol::FiveShotUmr),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ComparisonPair::ZeroVsZeroUmr => "Zero-shot vs Zero-shot with UMR",
            ComparisonPair::ZeroVsFive => "Zero-shot vs Five-shot",
            ComparisonPair::FiveVsFiveUmr => "Five-shot vs Five-shot with UMR",
        }
    }
}

impl std::fmt::Display for ComparisonPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

fn serialize_total_f64<S: serde::Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
    // JSON has no infinities; the degenerate-variance t goes out as a string.
    if value.is_finite() {
        s.serialize_f64(*value)
    } else if *value > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonResult {
    pub language: LanguageId,
    pub metric: String,
    pub pair: ComparisonPair,
    /// Size of the item-id intersection actually paired.
    pub n: usize,
    #[serde(serialize_with = "serialize_total_f64")]
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub mean_baseline: f64,
    pub mean_enhanced: f64,
    /// Which side had the higher mean; `None` on an exact tie.
    pub direction: Option<Protocol>,
    pub degenerate_variance: bool,
}

/// Append-only jsonl results log.
pub struct ResultsLog {
    path: PathBuf,
}

impl ResultsLog {
    pub fn open(path: impl Into<PathBuf>) -> Self {
        ResultsLog { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Everything logged so far; an absent file is an empty log.
    pub fn load(&self) -> Result<Vec<ItemResult>, EvalError> {
        let text = match std::fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => {
                return Err(EvalError::CorruptLog {
                    path: self.path.display().to_string(),
                    message: e.to_string(),
                })
            }
        };
        let mut results = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let result: ItemResult =
                serde_json::from_str(line).map_err(|e| EvalError::CorruptLog {
                    path: self.path.display().to_string(),
                    message: format!("line {}: {e}", lineno + 1),
                })?;
            results.push(result);
        }
        Ok(results)
    }

    fn writer(&self) -> Result<LogWriter, EvalError> {
        if let Some(parent) = self.path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| EvalError::OutputUnwritable {
                path: parent.display().to_string(),
                message: e.to_string(),
            })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| EvalError::OutputUnwritable {
                path: self.path.display().to_string(),
                message: e.to_string(),
            })?;
        Ok(LogWriter { file: Mutex::new(file) })
    }
}

struct LogWriter {
    file: Mutex<std::fs::File>,
}

impl LogWriter {
    /// One whole record per write call, so concurrent appends stay intact
    /// lines.
    fn append(&self, result: &ItemResult) -> Result<(), EvalError> {
        let mut line = serde_json::to_string(result).expect("results serialize");
        line.push('\n');
        let mut file = self.file.lock().expect("log writer lock");
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| EvalError::OutputUnwritable {
                path: "results log".into(),
                message: e.to_string(),
            })
    }
}

pub struct LoadedCorpora {
    pub corpora: Vec<Corpus>,
    pub warnings: Vec<LoadWarning>,
}

/// Loads every active corpus named in the config.
pub fn load_corpora(config: &RunConfig) -> Result<LoadedCorpora, EvalError> {
    let mut corpora = Vec::new();
    let mut warnings = Vec::new();
    for source in config.active_corpora() {
        let load = load_corpus_with(
            &source.path,
            source.format,
            Some(source.language),
            &source.umr_blocks,
        )?;
        warnings.extend(load.warnings);
        corpora.push(load.corpus);
    }
    Ok(LoadedCorpora { corpora, warnings })
}

pub struct ExperimentOutput {
    /// Every (language, item, protocol) result, previously logged ones
    /// included, in deterministic (language, item_id, protocol) order.
    pub results: Vec<ItemResult>,
    pub ledger: UsageLedger,
    /// Items newly attempted in this invocation (resumability observability).
    pub newly_run: usize,
    /// Items that failed with transport-class errors after retries.
    pub transport_failures: usize,
}

fn build_scorers(
    settings: &[ScorerSettings],
    metrics: &[String],
) -> Result<BTreeMap<String, Mutex<Box<dyn ExternalScorer>>>, EvalError> {
    let mut scorers: BTreeMap<String, Mutex<Box<dyn ExternalScorer>>> = BTreeMap::new();
    for s in settings {
        if !metrics.contains(&s.name) {
            continue;
        }
        let scorer: Box<dyn ExternalScorer> = match s.kind {
            ScorerKind::File => {
                let path = s
                    .path
                    .as_ref()
                    .ok_or_else(|| EvalError::Config(format!("scorer '{}' needs a path", s.name)))?;
                Box::new(FileScorer::from_path(&s.name, path).map_err(|e| {
                    EvalError::Config(format!("scorer '{}': {e}", s.name))
                })?)
            }
            ScorerKind::Subprocess => {
                Box::new(SubprocessScorer::new(&s.name, s.command.clone()))
            }
        };
        scorers.insert(s.name.clone(), Mutex::new(scorer));
    }
    Ok(scorers)
}

struct WorkUnit<'a> {
    corpus: &'a Corpus,
    item: &'a CorpusItem,
    protocol: Protocol,
}

/// Runs the full experiment for the given corpora. Per-item client errors
/// become skipped results; only configuration problems abort.
pub fn run_experiment(config: &RunConfig, corpora: &[Corpus]) -> Result<ExperimentOutput, EvalError> {
    let api_key = std::env::var(&config.client.api_key_env).ok();
    let client = LlmClient::new(ClientConfig {
        mode: config.mode,
        endpoint: config.client.endpoint.clone(),
        api_key,
        cache_dir: Some(config.client.cache_dir.clone()),
        retry: config.client.retry,
    })?;
    let scorers = build_scorers(&config.scorers, &config.metrics)?;

    let log = ResultsLog::open(config.output_dir.join("results.jsonl"));
    let existing = log.load()?;
    let done: HashSet<(LanguageId, &str, Protocol)> = existing
        .iter()
        .map(|r| (r.language, r.item_id.as_str(), r.protocol))
        .collect();

    let mut work = Vec::new();
    for corpus in corpora {
        for &protocol in &config.protocols {
            for item in &corpus.items {
                if done.contains(&(corpus.language, item.id.as_str(), protocol)) {
                    continue;
                }
                work.push(WorkUnit { corpus, item, protocol });
            }
        }
    }

    let writer = log.writer()?;
    let collected: Mutex<Vec<ItemResult>> = Mutex::new(Vec::with_capacity(work.len()));
    let ledger: Mutex<UsageLedger> = Mutex::new(UsageLedger::default());
    let transport_failures = AtomicUsize::new(0);
    let append_error: Mutex<Option<EvalError>> = Mutex::new(None);
    let next = AtomicUsize::new(0);

    let threads = config.client.max_in_flight.clamp(1, 64).min(work.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                let Some(unit) = work.get(index) else { break };
                let result = process_unit(config, &client, &scorers, &ledger, unit);
                if is_transport_failure(&result) {
                    transport_failures.fetch_add(1, Ordering::Relaxed);
                }
                if let Err(e) = writer.append(&result) {
                    *append_error.lock().expect("append error lock") = Some(e);
                    break;
                }
                collected.lock().expect("results lock").push(result);
            });
        }
    });
    if let Some(e) = append_error.into_inner().expect("append error lock") {
        return Err(e);
    }

    let newly_run = work.len();
    let mut results = existing;
    results.extend(collected.into_inner().expect("results lock"));
    sort_results(&mut results);

    Ok(ExperimentOutput {
        results,
        ledger: ledger.into_inner().expect("ledger lock"),
        newly_run,
        transport_failures: transport_failures.into_inner(),
    })
}

fn sort_results(results: &mut [ItemResult]) {
    results.sort_by(|a, b| {
        a.language
            .code()
            .cmp(b.language.code())
            .then_with(|| a.item_id.cmp(&b.item_id))
            .then_with(|| a.protocol.as_str().cmp(b.protocol.as_str()))
    });
}

fn is_transport_failure(result: &ItemResult) -> bool {
    result
        .skip_reason
        .as_deref()
        .is_some_and(|r| r.starts_with("transport:"))
}

fn skipped(unit: &WorkUnit, reason: String) -> ItemResult {
    ItemResult {
        language: unit.corpus.language,
        item_id: unit.item.id.clone(),
        protocol: unit.protocol,
        hypothesis: None,
        scores: BTreeMap::new(),
        demo_ids: Vec::new(),
        skipped: true,
        skip_reason: Some(reason),
        response_source: None,
    }
}

fn classify_client_error(e: &ClientError) -> String {
    let transport = match e {
        ClientError::RetriesExhausted { source, .. } => source.is_retryable(),
        other => other.is_retryable(),
    };
    if transport {
        format!("transport: {e}")
    } else {
        format!("client: {e}")
    }
}

fn process_unit(
    config: &RunConfig,
    client: &LlmClient,
    scorers: &BTreeMap<String, Mutex<Box<dyn ExternalScorer>>>,
    ledger: &Mutex<UsageLedger>,
    unit: &WorkUnit,
) -> ItemResult {
    let protocol = unit.protocol;
    let item = unit.item;

    if protocol.uses_umr() && item.umr.is_none() {
        return skipped(unit, "MissingUmr".into());
    }

    let demos: Option<DemoSet> = if protocol.uses_demos() {
        match select_demonstrations(
            item,
            unit.corpus,
            config.k,
            protocol == Protocol::FiveShotUmr,
            &config.chrf,
            &config.selection,
        ) {
            Ok(set) => Some(set),
            Err(e) => return skipped(unit, format!("selection: {e}")),
        }
    } else {
        None
    };

    let options = PromptOptions {
        demo_count: config.k,
        umr_indent: 2,
        most_similar_first: config.most_similar_first,
    };
    let bundle = match build_prompt(protocol, item, demos.as_ref(), unit.corpus.language, &options)
    {
        Ok(b) => b,
        Err(e) => return skipped(unit, format!("prompt: {e}")),
    };

    let request = ChatRequest {
        model: config.client.model.clone(),
        system: bundle.system,
        user: bundle.user,
        temperature: config.client.temperature,
        max_output_tokens: config.client.max_output_tokens,
    };
    let response = match client.complete_with_retry(&request) {
        Ok(outcome) => outcome.response,
        Err(e) => {
            let mut result = skipped(unit, classify_client_error(&e));
            result.demo_ids = bundle.demo_ids;
            return result;
        }
    };

    if config.client.prices.contains_key(&config.client.model) {
        let mut ledger = ledger.lock().expect("ledger lock");
        let _ = ledger_add(&mut ledger, &config.client.model, &response, &config.client.prices);
    }

    // Whitespace trim only; label echoes stay visible in the report.
    let hypothesis = response.text.trim().to_string();
    let mut scores = BTreeMap::new();
    for metric in &config.metrics {
        if metric == "chrf" {
            scores.insert(metric.clone(), chrf(&hypothesis, &item.reference_en, &config.chrf));
        } else if let Some(scorer) = scorers.get(metric) {
            let mut scorer = scorer.lock().expect("scorer lock");
            match scorer.score(&hypothesis, &item.reference_en) {
                Ok(value) => {
                    scores.insert(metric.clone(), value);
                }
                Err(e) => {
                    eprintln!("warning: scorer '{metric}' failed for {}: {e}", item.id);
                }
            }
        }
    }

    ItemResult {
        language: unit.corpus.language,
        item_id: item.id.clone(),
        protocol,
        hypothesis: Some(hypothesis),
        scores,
        demo_ids: bundle.demo_ids,
        skipped: false,
        skip_reason: None,
        response_source: Some(response.source),
    }
}

/// Per-item scores for one (language, protocol, metric) cell, keyed and
/// ordered by item id.
fn cell_scores<'a>(
    results: &'a [ItemResult],
    language: LanguageId,
    protocol: Protocol,
    metric: &str,
) -> BTreeMap<&'a str, f64> {
    results
        .iter()
        .filter(|r| r.language == language && r.protocol == protocol && !r.skipped)
        .filter_map(|r| r.scores.get(metric).map(|&s| (r.item_id.as_str(), s)))
        .collect()
}

pub fn summarize(
    results: &[ItemResult],
    language: LanguageId,
    protocol: Protocol,
    metric: &str,
) -> Result<ProtocolSummary, EvalError> {
    let cell = cell_scores(results, language, protocol, metric);
    let values: Vec<f64> = cell.values().copied().collect();
    let (mean, std) = mean_std(&values).map_err(|_| EvalError::EmptyCell {
        language,
        protocol,
        metric: metric.to_string(),
    })?;
    Ok(ProtocolSummary { language, protocol, metric: metric.to_string(), n: values.len(), mean, std })
}

/// Summaries for every populated cell, in deterministic
/// (language, metric, protocol) order. Empty cells are omitted.
pub fn summarize_all(results: &[ItemResult], config: &RunConfig) -> Vec<ProtocolSummary> {
    let mut languages: Vec<LanguageId> = results.iter().map(|r| r.language).collect::<HashSet<_>>()
        .into_iter()
        .collect();
    languages.sort();
    let mut summaries = Vec::new();
    for &language in &languages {
        for metric in &config.metrics {
            for &protocol in &config.protocols {
                if let Ok(summary) = summarize(results, language, protocol, metric) {
                    summaries.push(summary);
                }
            }
        }
    }
    summaries
}

/// The three protocol comparisons for one language and metric. Pairs whose
/// protocols were not run at all are omitted; pairs with a 1-item overlap
/// are an error.
pub fn compare_protocols(
    results: &[ItemResult],
    language: LanguageId,
    metric: &str,
) -> Result<Vec<ComparisonResult>, EvalError> {
    let mut comparisons = Vec::new();
    for pair in ComparisonPair::ALL {
        let (baseline, enhanced) = pair.protocols();
        let a = cell_scores(results, language, baseline, metric);
        let b = cell_scores(results, language, enhanced, metric);
        if a.is_empty() || b.is_empty() {
            continue;
        }
        // Pair over the id intersection of non-skipped items, id order.
        let shared: Vec<&str> = a.keys().filter(|id| b.contains_key(*id)).copied().collect();
        if shared.len() < 2 {
            return Err(EvalError::TooFewPairs {
                language,
                metric: metric.to_string(),
                pair,
                n: shared.len(),
            });
        }
        let va: Vec<f64> = shared.iter().map(|id| a[id]).collect();
        let vb: Vec<f64> = shared.iter().map(|id| b[id]).collect();
        let test = paired_t_test_values(&va, &vb).map_err(|e| match e {
            MetricsError::TooFewPairs { n } => EvalError::TooFewPairs {
                language,
                metric: metric.to_string(),
                pair,
                n,
            },
            other => EvalError::Config(other.to_string()),
        })?;
        let (mean_baseline, _) = mean_std(&va).expect("non-empty");
        let (mean_enhanced, _) = mean_std(&vb).expect("non-empty");
        let direction = if mean_baseline > mean_enhanced {
            Some(baseline)
        } else if mean_enhanced > mean_baseline {
            Some(enhanced)
        } else {
            None
        };
        comparisons.push(ComparisonResult {
            language,
            metric: metric.to_string(),
            pair,
            n: shared.len(),
            t: test.t,
            df: test.df,
            p: test.p,
            mean_baseline,
            mean_enhanced,
            direction,
            degenerate_variance: test.degenerate_variance,
        });
    }
    Ok(comparisons)
}

/// All comparisons for every language and metric present in the results.
pub fn compare_all(results: &[ItemResult], config: &RunConfig) -> Result<Vec<ComparisonResult>, EvalError> {
    let mut languages: Vec<LanguageId> = results.iter().map(|r| r.language).collect::<HashSet<_>>()
        .into_iter()
        .collect();
    languages.sort();
    let mut comparisons = Vec::new();
    for &language in &languages {
        for metric in &config.metrics {
            comparisons.extend(compare_protocols(results, language, metric)?);
        }
    }
    Ok(comparisons)
}
