//! Table-shaped reports in markdown, CSV or JSON.

use crate::harness::EvalSummary;
use gpc_core::{Error, Result};
use std::collections::BTreeSet;
use std::path::Path;

pub const COLUMNS: [&str; 7] = ["method", "success_rate", "wilson_low", "wilson_high", "steps_mean", "steps_std", "cem_ratio"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidConfig(format!("unknown report format `{other}`"))),
        }
    }
}

impl ReportFormat {
    /// Format implied by a file extension, markdown otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => ReportFormat::Csv,
            Some("json") => ReportFormat::Json,
            _ => ReportFormat::Markdown,
        }
    }
}

fn row(s: &EvalSummary) -> [String; 7] {
    let f = |v: f64| format!("{v:.3}");
    let o = |v: Option<f64>| v.map(f).unwrap_or_default();
    [s.method.clone(), f(s.success_rate), f(s.wilson_low), f(s.wilson_high), o(s.steps_mean), o(s.steps_std), o(s.mean_cem_ratio)]
}

pub fn render_markdown(summaries: &[EvalSummary]) -> String {
    let mut out = format!("| {} |\n|{}\n", COLUMNS.join(" | "), "---|".repeat(COLUMNS.len()));
    for s in summaries {
        out.push_str(&format!("| {} |\n", row(s).join(" | ")));
    }
    let sets: BTreeSet<(u64, usize)> = summaries.iter().map(|s| (s.seed_base, s.n_episodes)).collect();
    out.push('\n');
    for (base, n) in sets {
        out.push_str(&format!("Initial states: seeds {base} + i for i in 0..{n}, shared across methods.\n"));
    }
    out.push_str("Steps: successful episodes only, counting every executed step up to and including the success step.\n");
    out
}

pub fn render_csv(summaries: &[EvalSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(COLUMNS).map_err(io)?;
    for s in summaries {
        w.write_record(row(s)).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn render_json(summaries: &[EvalSummary]) -> String {
    let mut s = serde_json::to_string_pretty(summaries).expect("summaries serialize");
    s.push('\n');
    s
}

pub fn render(summaries: &[EvalSummary], format: ReportFormat) -> Result<String> {
    if summaries.is_empty() {
        return Err(Error::InvalidInput("report needs at least one summary".into()));
    }
    match format {
        ReportFormat::Markdown => Ok(render_markdown(summaries)),
        ReportFormat::Csv => render_csv(summaries),
        ReportFormat::Json => Ok(render_json(summaries)),
    }
}

pub fn emit_report(summaries: &[EvalSummary], format: ReportFormat, path: &Path) -> Result<()> {
    let text = render(summaries, format)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn parse_json(text: &str) -> Result<Vec<EvalSummary>> {
    serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("bad summary json: {e}")))
}
