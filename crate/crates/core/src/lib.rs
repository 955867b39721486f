//! UMR-augmented prompting pipeline for machine translation from
//! low-resource languages.
//!
//! The pipeline ingests corpora of (source sentence, English reference,
//! sentence-level UMR graph) triples for Navajo, Kukama and Arápaho, builds
//! four prompting protocols (zero- and five-shot, with and without the UMR
//! graph), obtains translations through a chat-completion client with
//! record/replay support, scores hypotheses with sentence-level chrF (plus
//! pluggable external metrics), and reports per-protocol averages alongside
//! paired two-tailed t-tests between protocols.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod evaluation;
pub mod llm_client;
pub mod metrics;
pub mod prompting;
pub mod selection;
pub mod umr_graph;
