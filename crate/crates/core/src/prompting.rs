//! The four prompting protocols: zero- and five-shot, each with and without
//! UMR graphs, rendered byte-exactly against the checked-in templates under
//! `templates/`.
//!
//! Layout decisions the templates pin down: every instruction sentence pair
//! is one line; each demonstration is a source line followed by an
//! `English:` completion line; every UMR is a multi-line canonical PENMAN
//! block after `Uniform Meaning Representation:` on its own line; every user
//! prompt ends with the bare line `English:`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::corpus::{CorpusItem, LanguageId};
use crate::selection::DemoSet;
use crate::umr_graph::serialize_penman;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    ZeroShot,
    ZeroShotUmr,
    FiveShot,
    FiveShotUmr,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::ZeroShot,
        Protocol::ZeroShotUmr,
        Protocol::FiveShot,
        Protocol::FiveShotUmr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::ZeroShot => "zero_shot",
            Protocol::ZeroShotUmr => "zero_shot_umr",
            Protocol::FiveShot => "five_shot",
            Protocol::FiveShotUmr => "five_shot_umr",
        }
    }

    /// Human-readable label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Protocol::ZeroShot => "Zero-Shot",
            Protocol::ZeroShotUmr => "Zero-Shot w UMR",
            Protocol::FiveShot => "Five-Shot",
            Protocol::FiveShotUmr => "Five-Shot w UMR",
        }
    }

    pub fn uses_umr(self) -> bool {
        matches!(self, Protocol::ZeroShotUmr | Protocol::FiveShotUmr)
    }

    pub fn uses_demos(self) -> bool {
        matches!(self, Protocol::FiveShot | Protocol::FiveShotUmr)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero_shot" => Ok(Protocol::ZeroShot),
            "zero_shot_umr" => Ok(Protocol::ZeroShotUmr),
            "five_shot" => Ok(Protocol::FiveShot),
            "five_shot_umr" => Ok(Protocol::FiveShotUmr),
            other => Err(format!(
                "unknown protocol '{other}' (expected zero_shot, zero_shot_umr, five_shot or five_shot_umr)"
            )),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("protocol {protocol} requires a UMR graph but item '{item_id}' has none")]
    MissingUmr { protocol: Protocol, item_id: String },
    #[error("protocol {protocol} expects {expected} demonstrations, got {actual}")]
    DemoCountMismatch { protocol: Protocol, expected: usize, actual: usize },
}

/// A fully rendered system+user message pair for one item under one protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub protocol: Protocol,
    pub item_id: String,
    pub demo_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PromptOptions {
    /// Demonstrations each five-shot prompt must carry.
    pub demo_count: usize,
    /// Indent used for embedded PENMAN blocks.
    pub umr_indent: usize,
    /// Render demos most-similar-first (slot 1 = nearest neighbor).
    pub most_similar_first: bool,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions { demo_count: 5, umr_indent: 2, most_similar_first: true }
    }
}

const SYSTEM_TEMPLATE: &str = include_str!("../templates/system.txt");
const ZERO_SHOT_TEMPLATE: &str = include_str!("../templates/zero_shot.txt");
const ZERO_SHOT_UMR_TEMPLATE: &str = include_str!("../templates/zero_shot_umr.txt");
const FIVE_SHOT_TEMPLATE: &str = include_str!("../templates/five_shot.txt");
const FIVE_SHOT_UMR_TEMPLATE: &str = include_str!("../templates/five_shot_umr.txt");

/// The raw templates with placeholders intact, keyed by protocol.
pub fn render_template_catalog() -> BTreeMap<Protocol, &'static str> {
    BTreeMap::from([
        (Protocol::ZeroShot, ZERO_SHOT_TEMPLATE),
        (Protocol::ZeroShotUmr, ZERO_SHOT_UMR_TEMPLATE),
        (Protocol::FiveShot, FIVE_SHOT_TEMPLATE),
        (Protocol::FiveShotUmr, FIVE_SHOT_UMR_TEMPLATE),
    ])
}

pub fn system_prompt(language: LanguageId) -> String {
    SYSTEM_TEMPLATE.replace("[Source language]", language.display_name())
}

fn instruction_line(language: LanguageId, with_umr: bool) -> String {
    if with_umr {
        format!(
            "Please provide the English translation for this {} sentence (which is accompanied by a Uniform Meaning Representation parse). Do not provide any explanations or text apart from the translation.",
            language.display_name()
        )
    } else {
        format!(
            "Please provide the English translation for this {} sentence. Do not provide any explanations or text apart from the translation.",
            language.display_name()
        )
    }
}

pub fn build_prompt(
    protocol: Protocol,
    item: &CorpusItem,
    demos: Option<&DemoSet>,
    language: LanguageId,
    options: &PromptOptions,
) -> Result<PromptBundle, PromptError> {
    let demo_count = demos.map(|d| d.demos.len()).unwrap_or(0);
    let expected = if protocol.uses_demos() { options.demo_count } else { 0 };
    if demo_count != expected {
        return Err(PromptError::DemoCountMismatch { protocol, expected, actual: demo_count });
    }

    let umr_block = |candidate: &CorpusItem| -> Result<String, PromptError> {
        let graph = candidate.umr.as_ref().ok_or_else(|| PromptError::MissingUmr {
            protocol,
            item_id: candidate.id.clone(),
        })?;
        Ok(serialize_penman(graph, options.umr_indent))
    };

    // Check the target's graph before rendering anything.
    if protocol.uses_umr() && item.umr.is_none() {
        return Err(PromptError::MissingUmr { protocol, item_id: item.id.clone() });
    }

    let name = language.display_name();
    let mut user = instruction_line(language, protocol.uses_umr());
    let mut demo_ids = Vec::new();

    if let Some(demos) = demos {
        let mut ordered: Vec<_> = demos.demos.iter().collect();
        if !options.most_similar_first {
            ordered.reverse();
        }
        for demo in ordered {
            demo_ids.push(demo.item.id.clone());
            user.push_str(&format!("\n{name}: {}", demo.item.source_text));
            if protocol.uses_umr() {
                user.push_str(&format!(
                    "\nUniform Meaning Representation:\n{}",
                    umr_block(&demo.item)?
                ));
            }
            user.push_str(&format!("\nEnglish: {}", demo.item.reference_en));
        }
        user.push('\n');
        user.push_str(&instruction_line(language, protocol.uses_umr()));
    }

    user.push_str(&format!("\n{name}: {}", item.source_text));
    if protocol.uses_umr() {
        user.push_str(&format!("\nUniform Meaning Representation:\n{}", umr_block(item)?));
    }
    user.push_str("\nEnglish:");

    Ok(PromptBundle {
        system: system_prompt(language),
        user,
        protocol,
        item_id: item.id.clone(),
        demo_ids,
    })
}
