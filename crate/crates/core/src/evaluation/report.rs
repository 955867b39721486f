//! Report emission: JSON and CSV at full precision, markdown shaped like the
//! two result tables (mean±std cells; three comparison rows per language and
//! metric with 4-decimal p-values, `<0.0001` below that, and significance
//! marking at alpha = 0.05).

use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{ComparisonResult, EvalError, ProtocolSummary};
use crate::config::RunConfig;
use crate::corpus::LanguageId;
use crate::prompting::Protocol;

pub const ALPHA: f64 = 0.05;
pub const P_DISPLAY_FLOOR: f64 = 0.0001;

/// Echo of the effective configuration; a report is not interpretable
/// without it. Execution-only knobs (in-flight bound, retry timing) are
/// dropped from the embedded copy: they cannot affect results, and keeping
/// them out makes replay reports byte-identical across concurrency settings.
/// The complete effective config is still written as `run_manifest.json`
/// alongside the results log.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Self {
        let mut value = serde_json::to_value(config).expect("config serializes");
        if let Some(client) = value.get_mut("client").and_then(|c| c.as_object_mut()) {
            client.remove("max_in_flight");
            client.remove("retry");
        }
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: value,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub manifest: RunManifest,
    pub summaries: Vec<ProtocolSummary>,
    pub comparisons: Vec<ComparisonResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown];
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format '{other}' (expected json, csv or markdown)")),
        }
    }
}

/// `mean±std`. Sub-unit metrics (BERTscore-like) keep three decimals, larger
/// scales (chrF) keep one.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    if mean.abs() < 1.0 {
        format!("{mean:.3}±{std:.2}")
    } else {
        format!("{mean:.1}±{std:.1}")
    }
}

/// Four decimals, with everything below 0.0001 rendered as `<0.0001`.
pub fn format_p(p: f64) -> String {
    if p < P_DISPLAY_FLOOR {
        "<0.0001".to_string()
    } else {
        format!("{p:.4}")
    }
}

/// Markdown cell for one comparison: bold when significant and the enhanced
/// side won, dagger when significant but the baseline won.
pub fn format_p_cell(comparison: &ComparisonResult) -> String {
    let rendered = format_p(comparison.p);
    if comparison.p >= ALPHA {
        return rendered;
    }
    let (_, enhanced) = comparison.pair.protocols();
    match comparison.direction {
        Some(side) if side == enhanced => format!("**{rendered}**"),
        Some(_) => format!("{rendered}†"),
        None => rendered,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), EvalError> {
    std::fs::write(path, contents).map_err(|e| EvalError::OutputUnwritable {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Writes the requested formats under `out_dir` and returns the paths.
pub fn emit_report(
    report: &Report,
    formats: &[ReportFormat],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(out_dir).map_err(|e| EvalError::OutputUnwritable {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            ReportFormat::Json => {
                let path = out_dir.join("report.json");
                let mut body =
                    serde_json::to_string_pretty(report).expect("report serializes");
                body.push('\n');
                write_file(&path, &body)?;
                written.push(path);
            }
            ReportFormat::Csv => {
                let summaries = out_dir.join("summaries.csv");
                write_file(&summaries, &render_summaries_csv(&report.summaries))?;
                written.push(summaries);
                let comparisons = out_dir.join("comparisons.csv");
                write_file(&comparisons, &render_comparisons_csv(&report.comparisons))?;
                written.push(comparisons);
            }
            ReportFormat::Markdown => {
                let path = out_dir.join("report.md");
                write_file(&path, &render_markdown(report))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

fn render_summaries_csv(summaries: &[ProtocolSummary]) -> String {
    let mut out = String::from("language,protocol,metric,n,mean,std\n");
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.language,
            s.protocol,
            csv_field(&s.metric),
            s.n,
            s.mean,
            s.std
        );
    }
    out
}

fn render_comparisons_csv(comparisons: &[ComparisonResult]) -> String {
    let mut out = String::from(
        "language,metric,pair,n,t,df,p,mean_baseline,mean_enhanced,direction,degenerate_variance\n",
    );
    for c in comparisons {
        let pair = match c.pair {
            super::ComparisonPair::ZeroVsZeroUmr => "zero_vs_zero_umr",
            super::ComparisonPair::ZeroVsFive => "zero_vs_five",
            super::ComparisonPair::FiveVsFiveUmr => "five_vs_five_umr",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.language,
            csv_field(&c.metric),
            pair,
            c.n,
            c.t,
            c.df,
            c.p,
            c.mean_baseline,
            c.mean_enhanced,
            c.direction.map(|d| d.as_str()).unwrap_or(""),
            c.degenerate_variance
        );
    }
    out
}

/// Languages present in the report, ordered by display name as in the
/// result tables.
fn report_languages(report: &Report) -> Vec<LanguageId> {
    let mut languages: BTreeSet<LanguageId> = report.summaries.iter().map(|s| s.language).collect();
    languages.extend(report.comparisons.iter().map(|c| c.language));
    let mut ordered: Vec<LanguageId> = languages.into_iter().collect();
    ordered.sort_by_key(|l| l.display_name());
    ordered
}

fn render_markdown(report: &Report) -> String {
    let languages = report_languages(report);
    let metrics: Vec<&str> = {
        let mut seen = Vec::new();
        for name in report
            .summaries
            .iter()
            .map(|s| s.metric.as_str())
            .chain(report.comparisons.iter().map(|c| c.metric.as_str()))
        {
            if !seen.contains(&name) {
                seen.push(name);
            }
        }
        seen
    };

    let mut out = String::new();
    out.push_str("# Translation evaluation report\n\n");
    let config = &report.manifest.config;
    let field = |ptr: &str| {
        config
            .pointer(ptr)
            .map(|v| match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .unwrap_or_else(|| "?".into())
    };
    let _ = writeln!(
        out,
        "Model `{}`, mode `{}`, k = {}, chrF max_n = {}, beta = {}.\n",
        field("/client/model"),
        field("/mode"),
        field("/k"),
        field("/chrf/max_n"),
        field("/chrf/beta")
    );

    // Average scores: metric x protocol rows, language columns.
    out.push_str("## Average scores\n\n");
    out.push_str("Cell format is mean±std (sample standard deviation).\n\n");
    out.push_str("| Evaluation Metric | Prompting Protocol |");
    for language in &languages {
        let _ = write!(out, " {} |", language.display_name());
    }
    out.push('\n');
    out.push_str("|---|---|");
    for _ in &languages {
        out.push_str("---|");
    }
    out.push('\n');
    for metric in &metrics {
        for protocol in Protocol::ALL {
            let row: Vec<Option<&ProtocolSummary>> = languages
                .iter()
                .map(|&language| {
                    report.summaries.iter().find(|s| {
                        s.language == language && s.protocol == protocol && s.metric == *metric
                    })
                })
                .collect();
            if row.iter().all(Option::is_none) {
                continue;
            }
            let _ = write!(out, "| {} | {} |", metric, protocol.label());
            for cell in row {
                match cell {
                    Some(s) => {
                        let _ = write!(out, " {} |", format_mean_std(s.mean, s.std));
                    }
                    None => {
                        let _ = write!(out, " - |");
                    }
                }
            }
            out.push('\n');
        }
    }

    // Paired t-tests: comparison rows, language columns.
    out.push_str("\n## Two-tailed paired t-test p-values\n\n");
    let _ = writeln!(
        out,
        "Bold marks a statistically significant improvement at α = {ALPHA} from adding UMR or demonstrations; † marks a significant difference in the opposite direction.\n"
    );
    out.push_str("| Comparison |");
    for language in &languages {
        let _ = write!(out, " {} |", language.display_name());
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &languages {
        out.push_str("---|");
    }
    out.push('\n');
    for metric in &metrics {
        for pair in super::ComparisonPair::ALL {
            let row: Vec<Option<&ComparisonResult>> = languages
                .iter()
                .map(|&language| {
                    report.comparisons.iter().find(|c| {
                        c.language == language && c.pair == pair && c.metric == *metric
                    })
                })
                .collect();
            if row.iter().all(Option::is_none) {
                continue;
            }
            let _ = write!(out, "| {}: {} |", metric, pair.label());
            for cell in &row {
                match cell {
                    Some(c) => {
                        let _ = write!(out, " {} |", format_p_cell(c));
                    }
                    None => {
                        let _ = write!(out, " - |");
                    }
                }
            }
            out.push('\n');
        }
    }

    // Pairing sizes, so intersection-based tests are auditable.
    out.push_str("\n## Paired item counts\n\n");
    out.push_str("| Comparison |");
    for language in &languages {
        let _ = write!(out, " {} |", language.display_name());
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &languages {
        out.push_str("---|");
    }
    out.push('\n');
    for metric in &metrics {
        for pair in super::ComparisonPair::ALL {
            let row: Vec<Option<usize>> = languages
                .iter()
                .map(|&language| {
                    report
                        .comparisons
                        .iter()
                        .find(|c| c.language == language && c.pair == pair && c.metric == *metric)
                        .map(|c| c.n)
                })
                .collect();
            if row.iter().all(Option::is_none) {
                continue;
            }
            let _ = write!(out, "| {}: {} |", metric, pair.label());
            for cell in row {
                match cell {
                    Some(n) => {
                        let _ = write!(out, " {n} |");
                    }
                    None => {
                        let _ = write!(out, " - |");
                    }
                }
            }
            out.push('\n');
        }
    }

    out.push_str("\n## Run manifest\n\n```json\n");
    out.push_str(&serde_json::to_string_pretty(&report.manifest).expect("manifest serializes"));
    out.push_str("\n```\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::ComparisonPair;

    #[test]
    fn p_value_rendering() {
        assert_eq!(format_p(0.00003), "<0.0001");
        assert_eq!(format_p(0.0), "<0.0001");
        assert_eq!(format_p(0.0555), "0.0555");
        assert_eq!(format_p(0.0294), "0.0294");
        assert_eq!(format_p(0.9721), "0.9721");
        assert_eq!(format_p(1.0), "1.0000");
        assert_eq!(format_p(0.0001), "0.0001");
    }

    #[test]
    fn mean_std_rendering() {
        assert_eq!(format_mean_std(13.0, 5.5), "13.0±5.5");
        assert_eq!(format_mean_std(35.7, 22.0), "35.7±22.0");
        assert_eq!(format_mean_std(0.867, 0.02), "0.867±0.02");
    }

    fn comparison(p: f64, direction: Option<Protocol>) -> ComparisonResult {
        ComparisonResult {
            language: LanguageId::Kukama,
            metric: "chrf".into(),
            pair: ComparisonPair::ZeroVsZeroUmr,
            n: 10,
            t: 1.0,
            df: 9,
            p,
            mean_baseline: 10.0,
            mean_enhanced: 12.0,
            direction,
            degenerate_variance: false,
        }
    }

    #[test]
    fn significance_marking() {
        assert_eq!(
            format_p_cell(&comparison(0.0146, Some(Protocol::ZeroShotUmr))),
            "**0.0146**"
        );
        assert_eq!(
            format_p_cell(&comparison(0.0146, Some(Protocol::ZeroShot))),
            "0.0146†"
        );
        assert_eq!(format_p_cell(&comparison(0.0555, Some(Protocol::ZeroShotUmr))), "0.0555");
        assert_eq!(format_p_cell(&comparison(0.00003, Some(Protocol::ZeroShotUmr))), "**<0.0001**");
    }

    #[test]
    fn markdown_shape() {
        let config = RunConfig::default();
        let report = Report {
            manifest: RunManifest::new(&config),
            summaries: vec![
                ProtocolSummary {
                    language: LanguageId::Arapaho,
                    protocol: Protocol::ZeroShot,
                    metric: "chrf".into(),
                    n: 406,
                    mean: 13.0,
                    std: 5.5,
                },
                ProtocolSummary {
                    language: LanguageId::Arapaho,
                    protocol: Protocol::FiveShot,
                    metric: "chrf".into(),
                    n: 406,
                    mean: 32.9,
                    std: 21.0,
                },
            ],
            comparisons: vec![comparison(0.0555, Some(Protocol::ZeroShotUmr))],
        };
        let md = render_markdown(&report);
        // Columns ordered by display name: Arápaho then Kukama.
        assert!(md.contains("| Evaluation Metric | Prompting Protocol | Arápaho | Kukama |"));
        assert!(md.contains("| chrf | Zero-Shot | 13.0±5.5 | - |"));
        assert!(md.contains("| chrf | Five-Shot | 32.9±21.0 | - |"));
        assert!(md.contains("| chrf: Zero-shot vs Zero-shot with UMR | - | 0.0555 |"));
        assert!(md.contains("## Run manifest"));
        assert!(md.contains("\"tool\""));
    }

    #[test]
    fn csv_escaping() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }
}
