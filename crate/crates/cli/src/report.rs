//! Diagnostic report for one trace.
//!
//! The trace is first flattened into a [`Report`] whose cells are already
//! formatted strings; the markdown, HTML and JSON renderers only lay those
//! cells out, so every format shows the same numbers.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use summcheck::eval::{deserialize_trace, ContextTag, EvalTrace};

use crate::config::Format;

/// How many of the weakest questions are called out.
const LOWEST: usize = 3;

fn num(v: f64) -> String {
    format!("{v:.4}")
}

#[derive(Debug, Serialize)]
pub struct Table {
    pub title: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Indices of rows to highlight.
    pub highlight: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub pair_id: String,
    pub tau: String,
    pub scores: Vec<(&'static str, String)>,
    pub summary_candidates: Vec<String>,
    pub document_candidates: Vec<String>,
    pub tables: Vec<Table>,
    /// Questions with the smallest contributions, weakest first.
    pub lowest: Vec<String>,
    pub warnings: Vec<String>,
}

/// Indices of the `k` smallest values, smallest first; ties keep input order.
fn lowest_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx.truncate(k);
    idx
}

pub fn build(trace: &EvalTrace) -> Report {
    let s = &trace.stages;
    let tau = num(trace.tau);

    let qg_rows = s
        .question_generation
        .iter()
        .map(|r| {
            let status = if r.accepted { "admitted".to_string() } else { "filtered (sim < τ)".to_string() };
            let ctx = match r.context {
                ContextTag::Summary => "summary",
                ContextTag::Document => "document",
            };
            vec![
                ctx.to_string(),
                r.candidate.clone(),
                r.question.clone(),
                r.roundtrip_answer.clone(),
                num(r.similarity),
                status,
            ]
        })
        .collect();

    let n_prec = s.precision.len().max(1) as f64;
    let prec_contrib: Vec<f64> = s.precision.iter().map(|r| r.similarity / n_prec).collect();
    let prec_rows = s
        .precision
        .iter()
        .zip(&prec_contrib)
        .map(|(r, c)| {
            vec![
                r.question.clone(),
                r.gold_answer.clone(),
                r.source_answer.clone().unwrap_or_else(|| "(no answer)".into()),
                num(r.similarity),
                num(*c),
            ]
        })
        .collect();

    let total_weight: f64 = s.weights.iter().map(|w| w.weight).sum();
    let n_rec = s.recall.len().max(1) as f64;
    let rec_contrib: Vec<f64> = s
        .recall
        .iter()
        .zip(&s.weights)
        .map(|(r, w)| if total_weight > 0.0 { w.weight * r.answerability / total_weight } else { r.answerability / n_rec })
        .collect();
    let rec_rows = s
        .recall
        .iter()
        .zip(&s.weights)
        .zip(&rec_contrib)
        .map(|((r, w), c)| {
            vec![
                r.question.clone(),
                r.generated_answer.clone(),
                num(r.ll_answer),
                num(r.ll_unanswerable),
                num(r.answerability),
                num(w.weight),
                num(*c),
            ]
        })
        .collect();

    // precision rows are judged by similarity, recall rows by answerability
    let prec_scores: Vec<f64> = s.precision.iter().map(|r| r.similarity).collect();
    let rec_scores: Vec<f64> = s.recall.iter().map(|r| r.answerability).collect();
    let prec_low = lowest_indices(&prec_scores, 1);
    let rec_low = lowest_indices(&rec_scores, 1);
    let mut weakest: Vec<(f64, String)> = s
        .precision
        .iter()
        .map(|r| (r.similarity, format!("precision: {} ({})", r.question, num(r.similarity))))
        .chain(s.recall.iter().map(|r| (r.answerability, format!("recall: {} ({})", r.question, num(r.answerability)))))
        .collect();
    weakest.sort_by(|a, b| a.0.total_cmp(&b.0));

    let sc = &trace.scores;
    Report {
        pair_id: trace.pair_id.clone(),
        tau: tau.clone(),
        scores: vec![
            ("precision", num(sc.precision)),
            ("recall", num(sc.recall)),
            ("f1", num(sc.f1)),
            ("degenerate", sc.degenerate.to_string()),
        ],
        summary_candidates: s.candidates.summary.clone(),
        document_candidates: s.candidates.document.clone(),
        tables: vec![
            Table {
                title: format!("Question generation and round-trip filter (τ = {tau})"),
                columns: vec!["context", "candidate", "question", "round-trip answer", "similarity", "status"],
                rows: qg_rows,
                highlight: vec![],
            },
            Table {
                title: "Precision: summary questions answered from the document".into(),
                columns: vec!["question", "gold answer", "document answer", "similarity", "contribution"],
                rows: prec_rows,
                highlight: prec_low,
            },
            Table {
                title: "Recall: document questions answered from the summary".into(),
                columns: vec!["question", "answer", "ℓ(answer)", "ℓ(unanswerable)", "answerability", "weight", "contribution"],
                rows: rec_rows,
                highlight: rec_low,
            },
        ],
        lowest: weakest.into_iter().take(LOWEST).map(|(_, q)| q).collect(),
        warnings: trace.warnings.iter().map(|w| format!("{:?}: {}", w.code, w.message)).collect(),
    }
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

pub fn markdown(r: &Report) -> String {
    let mut out = format!("# Trace report: {}\n\n", r.pair_id);
    out.push_str("## Scores\n\n| score | value |\n|---|---|\n");
    for (k, v) in &r.scores {
        out.push_str(&format!("| {k} | {v} |\n"));
    }
    out.push_str("\n## Candidates\n\n");
    out.push_str(&format!("- summary: {}\n", list_or_none(&r.summary_candidates)));
    out.push_str(&format!("- document: {}\n", list_or_none(&r.document_candidates)));
    for t in &r.tables {
        out.push_str(&format!("\n## {}\n\n", t.title));
        if t.rows.is_empty() {
            out.push_str("(none)\n");
            continue;
        }
        out.push_str(&format!("| {} |\n", t.columns.join(" | ")));
        out.push_str(&format!("|{}\n", "---|".repeat(t.columns.len())));
        for (i, row) in t.rows.iter().enumerate() {
            let mut cells: Vec<String> = row.iter().map(|c| md_cell(c)).collect();
            if t.highlight.contains(&i) {
                cells[0] = format!("⚠ {}", cells[0]);
            }
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
        }
    }
    out.push_str("\n## Likely inconsistency sites\n\n");
    if r.lowest.is_empty() {
        out.push_str("(none)\n");
    }
    for q in &r.lowest {
        out.push_str(&format!("- {}\n", md_cell(q)));
    }
    out.push_str("\n## Warnings\n\n");
    if r.warnings.is_empty() {
        out.push_str("(none)\n");
    }
    for w in &r.warnings {
        out.push_str(&format!("- {}\n", md_cell(w)));
    }
    out
}

fn list_or_none(v: &[String]) -> String {
    if v.is_empty() {
        "(none)".into()
    } else {
        v.join(", ")
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn html(r: &Report) -> String {
    let mut out = format!(
        "<!DOCTYPE html>\n<html lang=\"bn\">\n<head>\n<meta charset=\"utf-8\">\n<title>Trace report: {id}</title>\n\
         <style>body{{font-family:sans-serif}}td,th{{border:1px solid #ccc;padding:2px 6px}}\
         table{{border-collapse:collapse}}tr.lowest{{background:#fdd}}</style>\n</head>\n<body>\n\
         <h1>Trace report: {id}</h1>\n<h2>Scores</h2>\n<table>\n",
        id = esc(&r.pair_id)
    );
    for (k, v) in &r.scores {
        out.push_str(&format!("<tr><th>{k}</th><td>{}</td></tr>\n", esc(v)));
    }
    out.push_str("</table>\n<h2>Candidates</h2>\n<ul>\n");
    out.push_str(&format!("<li>summary: {}</li>\n", esc(&list_or_none(&r.summary_candidates))));
    out.push_str(&format!("<li>document: {}</li>\n</ul>\n", esc(&list_or_none(&r.document_candidates))));
    for t in &r.tables {
        out.push_str(&format!("<h2>{}</h2>\n", esc(&t.title)));
        if t.rows.is_empty() {
            out.push_str("<p>(none)</p>\n");
            continue;
        }
        out.push_str("<table>\n<tr>");
        for c in &t.columns {
            out.push_str(&format!("<th>{}</th>", esc(c)));
        }
        out.push_str("</tr>\n");
        for (i, row) in t.rows.iter().enumerate() {
            let class = if t.highlight.contains(&i) { " class=\"lowest\"" } else { "" };
            out.push_str(&format!("<tr{class}>"));
            for c in row {
                out.push_str(&format!("<td>{}</td>", esc(c)));
            }
            out.push_str("</tr>\n");
        }
        out.push_str("</table>\n");
    }
    out.push_str("<h2>Likely inconsistency sites</h2>\n<ol>\n");
    for q in &r.lowest {
        out.push_str(&format!("<li>{}</li>\n", esc(q)));
    }
    out.push_str("</ol>\n<h2>Warnings</h2>\n<ul>\n");
    for w in &r.warnings {
        out.push_str(&format!("<li>{}</li>\n", esc(w)));
    }
    out.push_str("</ul>\n</body>\n</html>\n");
    out
}

pub fn run(trace_path: &Path, format: Format) -> Result<String> {
    let text = std::fs::read_to_string(trace_path).with_context(|| format!("reading {}", trace_path.display()))?;
    let trace = deserialize_trace(&text).with_context(|| format!("loading trace {}", trace_path.display()))?;
    trace.check_invariants().with_context(|| format!("checking trace {}", trace_path.display()))?;
    let report = build(&trace);
    Ok(match format {
        Format::Markdown => markdown(&report),
        Format::Html => html(&report),
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
    })
}
