//! Command-line frontend. One run-config TOML governs one experiment; flags
//! override file values, which override defaults, and the effective config
//! is echoed into the run manifest.
//!
//! Exit codes: 0 success, 1 data/validation failure, 2 configuration or
//! credential failure, 3 transport failure after retries.

use clap::{Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;

use crate::config::{ConfigError, RunConfig};
use crate::corpus::{
    load_corpus_with, validate_corpus, CorpusFormat, CorpusReport, LanguageId, UmrBlocksOptions,
};
use crate::evaluation::report::{emit_report, Report, ReportFormat, RunManifest};
use crate::evaluation::{
    compare_all, load_corpora, run_experiment, summarize_all, EvalError, ResultsLog,
};
use crate::llm_client::{ClientError, TransportMode};
use crate::prompting::{build_prompt, Protocol, PromptOptions};
use crate::selection::select_demonstrations;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "umrmt",
    version,
    about = "UMR-augmented prompting pipeline for translating low-resource languages, with chrF scoring and paired significance tests"
)]
pub struct Cli {
    /// Run-config TOML file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Override the configured transport mode (live, record, replay).
    #[arg(long, global = true)]
    pub mode: Option<TransportMode>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load corpora and report counts and invariant violations.
    ValidateCorpus {
        /// Corpus files to check.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value = "jsonl")]
        format: CorpusFormat,
        /// Corpus language; required for umr-blocks files.
        #[arg(long)]
        language: Option<LanguageId>,
    },
    /// Render the prompt for one item under one protocol, as JSON.
    BuildPrompts {
        #[arg(long)]
        language: LanguageId,
        #[arg(long)]
        item_id: String,
        #[arg(long)]
        protocol: Protocol,
    },
    /// Print the selected demonstrations for one item as jsonl.
    SelectDemos {
        #[arg(long)]
        language: LanguageId,
        #[arg(long)]
        item_id: String,
        /// Neighbors to select; defaults to the configured k.
        #[arg(long)]
        k: Option<usize>,
        /// Only consider candidates that carry a UMR graph.
        #[arg(long)]
        require_umr: bool,
    },
    /// Translate every (item, protocol) cell into the results log.
    Translate,
    /// Aggregate the results log; print summaries and comparisons as JSON.
    Evaluate,
    /// Write report files from the results log.
    Report {
        /// Comma-separated subset of json,csv,markdown; default all.
        #[arg(long, value_delimiter = ',')]
        formats: Vec<ReportFormat>,
    },
    /// Translate, then report: the whole experiment under one manifest.
    Run {
        #[arg(long, value_delimiter = ',')]
        formats: Vec<ReportFormat>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

fn config_failure(e: ConfigError) -> Failure {
    Failure::new(EXIT_CONFIG, e.to_string())
}

fn client_exit_code(e: &ClientError) -> i32 {
    match e {
        ClientError::AuthError(_) | ClientError::Config(_) | ClientError::UnknownModelPrice { .. } => {
            EXIT_CONFIG
        }
        ClientError::RateLimited(_)
        | ClientError::TransportError(_)
        | ClientError::MalformedResponse(_)
        | ClientError::RetriesExhausted { .. } => EXIT_TRANSPORT,
        ClientError::CacheMiss { .. } | ClientError::CacheError(_) => EXIT_DATA,
    }
}

fn eval_failure(e: EvalError) -> Failure {
    let code = match &e {
        EvalError::Client(client) => client_exit_code(client),
        EvalError::Config(_) => EXIT_CONFIG,
        _ => EXIT_DATA,
    };
    Failure::new(code, e.to_string())
}

fn effective_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(config_failure)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(mode) = cli.mode {
        config.mode = mode;
    }
    // A relative cache directory lives under the output directory, keeping
    // all writes inside it.
    if config.client.cache_dir.is_relative() {
        config.client.cache_dir = config.output_dir.join(&config.client.cache_dir);
    }
    Ok(config)
}

pub fn run(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32, Failure> {
    match &cli.command {
        Command::ValidateCorpus { paths, format, language } => {
            cmd_validate_corpus(paths, *format, *language)
        }
        Command::BuildPrompts { language, item_id, protocol } => {
            cmd_build_prompts(cli, *language, item_id, *protocol)
        }
        Command::SelectDemos { language, item_id, k, require_umr } => {
            cmd_select_demos(cli, *language, item_id, *k, *require_umr)
        }
        Command::Translate => cmd_translate(cli),
        Command::Evaluate => cmd_evaluate(cli),
        Command::Report { formats } => cmd_report(cli, formats),
        Command::Run { formats } => cmd_run(cli, formats),
    }
}

#[derive(Serialize)]
struct ValidationOutput {
    corpora: Vec<CorpusReport>,
    total_items: usize,
}

fn cmd_validate_corpus(
    paths: &[PathBuf],
    format: CorpusFormat,
    language: Option<LanguageId>,
) -> Result<i32, Failure> {
    let mut reports = Vec::new();
    let mut total = 0;
    for path in paths {
        let load = load_corpus_with(path, format, language, &UmrBlocksOptions::default())
            .map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
        for warning in &load.warnings {
            eprintln!("warning [{}]: {}", warning.item_id, warning.message);
        }
        let report = validate_corpus(&load.corpus);
        total += report.total_items;
        reports.push(report);
    }
    let all_valid = reports.iter().all(CorpusReport::is_valid);
    let output = ValidationOutput { corpora: reports, total_items: total };
    println!("{}", serde_json::to_string_pretty(&output).expect("report serializes"));
    Ok(if all_valid { EXIT_OK } else { EXIT_DATA })
}

fn load_language_corpus(
    config: &RunConfig,
    language: LanguageId,
) -> Result<crate::corpus::Corpus, Failure> {
    let source = config
        .active_corpora()
        .into_iter()
        .find(|c| c.language == language)
        .ok_or_else(|| {
            Failure::new(EXIT_CONFIG, format!("no corpus configured for language '{language}'"))
        })?;
    let load = load_corpus_with(&source.path, source.format, Some(language), &source.umr_blocks)
        .map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    for warning in &load.warnings {
        eprintln!("warning [{}]: {}", warning.item_id, warning.message);
    }
    Ok(load.corpus)
}

fn cmd_build_prompts(
    cli: &Cli,
    language: LanguageId,
    item_id: &str,
    protocol: Protocol,
) -> Result<i32, Failure> {
    let config = effective_config(cli)?;
    let corpus = load_language_corpus(&config, language)?;
    let item = corpus
        .item(item_id)
        .ok_or_else(|| Failure::new(EXIT_DATA, format!("item '{item_id}' not found")))?;
    let demos = if protocol.uses_demos() {
        Some(
            select_demonstrations(
                item,
                &corpus,
                config.k,
                protocol == Protocol::FiveShotUmr,
                &config.chrf,
                &config.selection,
            )
            .map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?,
        )
    } else {
        None
    };
    let options = PromptOptions {
        demo_count: config.k,
        umr_indent: 2,
        most_similar_first: config.most_similar_first,
    };
    let bundle = build_prompt(protocol, item, demos.as_ref(), language, &options)
        .map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    println!("{}", serde_json::to_string_pretty(&bundle).expect("bundle serializes"));
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct DemoLine<'a> {
    rank: usize,
    item_id: &'a str,
    similarity: f64,
    source_text: &'a str,
    reference_en: &'a str,
    has_umr: bool,
}

fn cmd_select_demos(
    cli: &Cli,
    language: LanguageId,
    item_id: &str,
    k: Option<usize>,
    require_umr: bool,
) -> Result<i32, Failure> {
    let config = effective_config(cli)?;
    let corpus = load_language_corpus(&config, language)?;
    let item = corpus
        .item(item_id)
        .ok_or_else(|| Failure::new(EXIT_DATA, format!("item '{item_id}' not found")))?;
    let set = select_demonstrations(
        item,
        &corpus,
        k.unwrap_or(config.k),
        require_umr,
        &config.chrf,
        &config.selection,
    )
    .map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    for (index, demo) in set.demos.iter().enumerate() {
        let line = DemoLine {
            rank: index + 1,
            item_id: &demo.item.id,
            similarity: demo.similarity,
            source_text: &demo.item.source_text,
            reference_en: &demo.item.reference_en,
            has_umr: demo.item.umr.is_some(),
        };
        println!("{}", serde_json::to_string(&line).expect("demo serializes"));
    }
    Ok(EXIT_OK)
}

/// Shared by translate and run: executes the experiment, writes the full
/// manifest, prints progress, returns the transport-aware exit code.
fn translate_into_log(config: &RunConfig) -> Result<i32, Failure> {
    let loaded = load_corpora(config).map_err(eval_failure)?;
    for warning in &loaded.warnings {
        eprintln!("warning [{}]: {}", warning.item_id, warning.message);
    }
    if loaded.corpora.is_empty() {
        return Err(Failure::new(EXIT_CONFIG, "no corpora configured"));
    }
    let output = run_experiment(config, &loaded.corpora).map_err(eval_failure)?;

    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| Failure::new(EXIT_DATA, format!("cannot create output dir: {e}")))?;
    let manifest_path = config.output_dir.join("run_manifest.json");
    let manifest = serde_json::json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )
    .map_err(|e| Failure::new(EXIT_DATA, format!("cannot write manifest: {e}")))?;

    let skipped = output.results.iter().filter(|r| r.skipped).count();
    println!(
        "translated {} results ({} newly run, {} skipped) across {} corpora",
        output.results.len(),
        output.newly_run,
        skipped,
        loaded.corpora.len()
    );
    println!(
        "usage: {} prompt tokens, {} completion tokens, estimated cost {:.4}",
        output.ledger.total_prompt_tokens,
        output.ledger.total_completion_tokens,
        output.ledger.estimated_cost
    );
    println!("results log: {}", config.output_dir.join("results.jsonl").display());
    println!("run manifest: {}", manifest_path.display());
    if output.transport_failures > 0 {
        eprintln!(
            "error: {} items failed with transport errors after retries",
            output.transport_failures
        );
        return Ok(EXIT_TRANSPORT);
    }
    Ok(EXIT_OK)
}

fn cmd_translate(cli: &Cli) -> Result<i32, Failure> {
    let config = effective_config(cli)?;
    translate_into_log(&config)
}

fn report_from_log(config: &RunConfig, formats: &[ReportFormat]) -> Result<i32, Failure> {
    let log = ResultsLog::open(config.output_dir.join("results.jsonl"));
    let results = log.load().map_err(eval_failure)?;
    let summaries = summarize_all(&results, config);
    let comparisons = compare_all(&results, config).map_err(eval_failure)?;
    let report = Report { manifest: RunManifest::new(config), summaries, comparisons };
    let formats: Vec<ReportFormat> =
        if formats.is_empty() { ReportFormat::ALL.to_vec() } else { formats.to_vec() };
    let written = emit_report(&report, &formats, &config.output_dir).map_err(eval_failure)?;
    for path in written {
        println!("report: {}", path.display());
    }
    Ok(EXIT_OK)
}

fn cmd_evaluate(cli: &Cli) -> Result<i32, Failure> {
    let config = effective_config(cli)?;
    let log = ResultsLog::open(config.output_dir.join("results.jsonl"));
    let results = log.load().map_err(eval_failure)?;
    let summaries = summarize_all(&results, &config);
    let comparisons = compare_all(&results, &config).map_err(eval_failure)?;
    let output = serde_json::json!({ "summaries": summaries, "comparisons": comparisons });
    println!("{}", serde_json::to_string_pretty(&output).expect("output serializes"));
    Ok(EXIT_OK)
}

fn cmd_report(cli: &Cli, formats: &[ReportFormat]) -> Result<i32, Failure> {
    let config = effective_config(cli)?;
    report_from_log(&config, formats)
}

fn cmd_run(cli: &Cli, formats: &[ReportFormat]) -> Result<i32, Failure> {
    let config = effective_config(cli)?;
    let translate_code = translate_into_log(&config)?;
    let report_code = report_from_log(&config, formats)?;
    Ok(translate_code.max(report_code))
}
