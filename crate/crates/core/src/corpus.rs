//! Per-language corpora of (source sentence, English reference, optional
//! sentence-level UMR) triples.
//!
//! The native interchange format is jsonl: one object per line with keys
//! `id`, `language`, `source_text`, `reference_en`, `umr_penman` (string or
//! null). A best-effort `umr-blocks` reader ingests release-style files of
//! blank-line-separated blocks with `# :: snt` / `# :: eng` headers.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

use crate::umr_graph::{parse_penman, UmrGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageId {
    Navajo,
    Kukama,
    Arapaho,
}

impl LanguageId {
    pub const ALL: [LanguageId; 3] = [LanguageId::Navajo, LanguageId::Kukama, LanguageId::Arapaho];

    pub fn code(self) -> &'static str {
        match self {
            LanguageId::Navajo => "navajo",
            LanguageId::Kukama => "kukama",
            LanguageId::Arapaho => "arapaho",
        }
    }

    /// The exact name substituted into prompts, diacritics included.
    pub fn display_name(self) -> &'static str {
        match self {
            LanguageId::Navajo => "Navajo",
            LanguageId::Kukama => "Kukama",
            LanguageId::Arapaho => "Arápaho",
        }
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for LanguageId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "navajo" => Ok(LanguageId::Navajo),
            "kukama" => Ok(LanguageId::Kukama),
            "arapaho" | "arápaho" => Ok(LanguageId::Arapaho),
            other => Err(format!(
                "unknown language '{other}' (expected navajo, kukama or arapaho)"
            )),
        }
    }
}

/// One annotated sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub id: String,
    pub language: LanguageId,
    pub source_text: String,
    pub reference_en: String,
    pub umr: Option<UmrGraph>,
}

/// All items for one language, in load order. Order is stable across runs;
/// selection tie-breaking depends on it.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub language: LanguageId,
    pub items: Vec<CorpusItem>,
}

impl Corpus {
    pub fn item(&self, id: &str) -> Option<&CorpusItem> {
        self.items.iter().find(|i| i.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    Jsonl,
    UmrBlocks,
}

impl FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "umr-blocks" => Ok(CorpusFormat::UmrBlocks),
            other => Err(format!("unknown corpus format '{other}' (expected jsonl or umr-blocks)")),
        }
    }
}

/// Header keys for the umr-blocks reader. The official release layout is not
/// pinned down, so both keys can be adjusted per corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UmrBlocksOptions {
    /// Key of the source-sentence header line, default `snt`.
    pub snt_key: String,
    /// Key of the English-reference header line, default `eng`.
    pub reference_key: String,
}

impl Default for UmrBlocksOptions {
    fn default() -> Self {
        UmrBlocksOptions { snt_key: "snt".into(), reference_key: "eng".into() }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file not found: {path}")]
    FileNotFound { path: String },
    #[error("{path}:{line}: malformed record: {message}")]
    MalformedRecord { path: String, line: usize, message: String },
    #[error("corpus file {path} contains no items")]
    EmptyCorpus { path: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Non-fatal problems noticed while loading; the affected items stay in the
/// corpus so downstream counts and ordering are not disturbed.
#[derive(Debug, Clone, Serialize)]
pub struct LoadWarning {
    pub item_id: String,
    pub message: String,
}

#[derive(Debug)]
pub struct CorpusLoad {
    pub corpus: Corpus,
    pub warnings: Vec<LoadWarning>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonlRecord {
    id: String,
    language: LanguageId,
    source_text: String,
    reference_en: String,
    umr_penman: Option<String>,
}

fn read_file(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CorpusError::FileNotFound { path: path.display().to_string() }
        } else {
            CorpusError::Io { path: path.display().to_string(), source: e }
        }
    })
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<CorpusLoad, CorpusError> {
    load_corpus_with(path, format, None, &UmrBlocksOptions::default())
}

/// Full-control loader. `language` overrides record-level languages for
/// umr-blocks files (which carry none) and is required for them.
pub fn load_corpus_with(
    path: &Path,
    format: CorpusFormat,
    language: Option<LanguageId>,
    options: &UmrBlocksOptions,
) -> Result<CorpusLoad, CorpusError> {
    let text = read_file(path)?;
    let mut warnings = Vec::new();
    let items = match format {
        CorpusFormat::Jsonl => load_jsonl(path, &text, &mut warnings)?,
        CorpusFormat::UmrBlocks => {
            let language = language.ok_or_else(|| CorpusError::MalformedRecord {
                path: path.display().to_string(),
                line: 0,
                message: "umr-blocks files carry no language field; pass one explicitly".into(),
            })?;
            load_umr_blocks(&text, language, options, &mut warnings)
        }
    };
    if items.is_empty() {
        return Err(CorpusError::EmptyCorpus { path: path.display().to_string() });
    }

    let language = language.unwrap_or(items[0].language);
    for item in &items {
        if item.language != language {
            warnings.push(LoadWarning {
                item_id: item.id.clone(),
                message: format!(
                    "record language '{}' differs from corpus language '{}'",
                    item.language, language
                ),
            });
        }
    }
    check_item_invariants(&items, &mut warnings);

    Ok(CorpusLoad { corpus: Corpus { language, items }, warnings })
}

fn check_item_invariants(items: &[CorpusItem], warnings: &mut Vec<LoadWarning>) {
    let mut seen = HashSet::new();
    for item in items {
        if !seen.insert(item.id.as_str()) {
            warnings.push(LoadWarning {
                item_id: item.id.clone(),
                message: "duplicate item id".into(),
            });
        }
        if item.source_text.trim().is_empty() {
            warnings.push(LoadWarning {
                item_id: item.id.clone(),
                message: "empty source_text".into(),
            });
        }
        if item.reference_en.trim().is_empty() {
            warnings.push(LoadWarning {
                item_id: item.id.clone(),
                message: "empty reference_en".into(),
            });
        }
    }
}

fn load_jsonl(
    path: &Path,
    text: &str,
    warnings: &mut Vec<LoadWarning>,
) -> Result<Vec<CorpusItem>, CorpusError> {
    let mut items = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord =
            serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
                path: path.display().to_string(),
                line: lineno + 1,
                message: e.to_string(),
            })?;
        let umr = match &record.umr_penman {
            None => None,
            Some(penman) => match parse_penman(penman) {
                Ok(graph) => Some(graph),
                Err(e) => {
                    warnings.push(LoadWarning {
                        item_id: record.id.clone(),
                        message: format!("unparseable UMR, item kept without graph: {e}"),
                    });
                    None
                }
            },
        };
        items.push(CorpusItem {
            id: record.id,
            language: record.language,
            source_text: record.source_text,
            reference_en: record.reference_en,
            umr,
        });
    }
    Ok(items)
}

fn load_umr_blocks(
    text: &str,
    language: LanguageId,
    options: &UmrBlocksOptions,
    warnings: &mut Vec<LoadWarning>,
) -> Vec<CorpusItem> {
    let mut items = Vec::new();
    for block in text.split("\n\n").map(str::trim).filter(|b| !b.is_empty()) {
        let index = items.len() + 1;
        let mut id = None;
        let mut source = None;
        let mut reference = None;
        let mut graph_lines = Vec::new();
        for line in block.lines() {
            let trimmed = line.trim_start();
            if let Some(header) = trimmed.strip_prefix("# ::") {
                let header = header.trim_start();
                if let Some(value) = header.strip_prefix(&format!("{} ", options.snt_key)) {
                    source = Some(value.trim().to_string());
                } else if let Some(value) =
                    header.strip_prefix(&format!("{} ", options.reference_key))
                {
                    reference = Some(value.trim().to_string());
                } else if let Some(value) = header.strip_prefix("id ") {
                    id = Some(value.trim().to_string());
                }
                // Unknown header keys are release metadata; skipped.
            } else if trimmed.starts_with('#') {
                // Plain comment/alignment line.
            } else {
                graph_lines.push(line);
            }
        }
        let id = id.unwrap_or_else(|| format!("{}-{index:04}", language.code()));
        let umr = if graph_lines.is_empty() {
            None
        } else {
            match parse_penman(&graph_lines.join("\n")) {
                Ok(graph) => Some(graph),
                Err(e) => {
                    warnings.push(LoadWarning {
                        item_id: id.clone(),
                        message: format!("unparseable UMR, item kept without graph: {e}"),
                    });
                    None
                }
            }
        };
        items.push(CorpusItem {
            id,
            language,
            source_text: source.unwrap_or_default(),
            reference_en: reference.unwrap_or_default(),
            umr,
        });
    }
    items
}

/// Pure summary of a corpus against the item invariants. A corpus is valid
/// when there are no duplicates and no empty fields; items without a UMR are
/// counted but allowed.
#[derive(Debug, Clone, Serialize)]
pub struct CorpusReport {
    pub language: LanguageId,
    pub total_items: usize,
    pub items_with_umr: usize,
    pub missing_umr_ids: Vec<String>,
    pub duplicate_ids: Vec<String>,
    pub empty_source_ids: Vec<String>,
    pub empty_reference_ids: Vec<String>,
}

impl CorpusReport {
    pub fn is_valid(&self) -> bool {
        self.duplicate_ids.is_empty()
            && self.empty_source_ids.is_empty()
            && self.empty_reference_ids.is_empty()
    }
}

pub fn validate_corpus(corpus: &Corpus) -> CorpusReport {
    let mut seen = HashSet::new();
    let mut duplicates = Vec::new();
    let mut empty_source = Vec::new();
    let mut empty_reference = Vec::new();
    let mut missing_umr = Vec::new();
    for item in &corpus.items {
        if !seen.insert(item.id.as_str()) && !duplicates.contains(&item.id) {
            duplicates.push(item.id.clone());
        }
        if item.source_text.trim().is_empty() {
            empty_source.push(item.id.clone());
        }
        if item.reference_en.trim().is_empty() {
            empty_reference.push(item.id.clone());
        }
        if item.umr.is_none() {
            missing_umr.push(item.id.clone());
        }
    }
    CorpusReport {
        language: corpus.language,
        total_items: corpus.items.len(),
        items_with_umr: corpus.items.len() - missing_umr.len(),
        missing_umr_ids: missing_umr,
        duplicate_ids: duplicates,
        empty_source_ids: empty_source,
        empty_reference_ids: empty_reference,
    }
}
