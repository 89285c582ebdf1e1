use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use summcheck::gateway::Embedder;
use summcheck::similarity::{score, Metric};
use summcheck::stats::{mae, pearson, rmse, PairedSamples};

use crate::config::Format;

#[derive(Debug, Deserialize)]
struct Row {
    reference: String,
    candidate: String,
    human_score: f64,
}

/// One metric's agreement with the human scores.
#[derive(Debug, Serialize)]
pub struct MetricRow {
    pub metric: Metric,
    pub label: &'static str,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum Outcome {
    Stats { pearson_r: f64, pearson_p: f64, mae: f64, rmse: f64 },
    Undefined { error: String },
}

fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn evaluate_metric(metric: Metric, rows: &[Row], human: &[f64], embedder: &dyn Embedder) -> Outcome {
    let scores: Result<Vec<f64>, String> = rows
        .iter()
        .map(|r| score(metric, &r.reference, &r.candidate, Some(embedder)).map(|s| s.value).map_err(|e| e.to_string()))
        .collect();
    let stats = scores.and_then(|xs| {
        let samples = PairedSamples::new(xs, human.to_vec()).map_err(|e| e.to_string())?;
        let (r, p) = pearson(&samples).map_err(|e| e.to_string())?;
        Ok(Outcome::Stats { pearson_r: r, pearson_p: p, mae: mae(&samples), rmse: rmse(&samples) })
    });
    stats.unwrap_or_else(|error| Outcome::Undefined { error })
}

/// Scores every row with all nine metrics; rows sorted by Pearson r, highest first.
pub fn run(input: &Path, human_scale: f64, embedder: &dyn Embedder) -> Result<Vec<MetricRow>> {
    if human_scale.is_nan() || human_scale <= 0.0 {
        bail!("--human-scale must be positive");
    }
    let rows = read_rows(input)?;
    if rows.len() < 3 {
        bail!("need at least 3 rows, got {}", rows.len());
    }
    let human: Vec<f64> = rows.iter().map(|r| r.human_score / human_scale).collect();
    let mut out: Vec<MetricRow> = Metric::ALL
        .iter()
        .map(|&m| MetricRow { metric: m, label: m.label(), outcome: evaluate_metric(m, &rows, &human, embedder) })
        .collect();
    let key = |r: &MetricRow| match r.outcome {
        Outcome::Stats { pearson_r, .. } => pearson_r,
        Outcome::Undefined { .. } => f64::NEG_INFINITY,
    };
    out.sort_by(|a, b| key(b).total_cmp(&key(a)));
    Ok(out)
}

pub fn render(rows: &[MetricRow], format: Format) -> Result<String> {
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(rows)? + "\n",
        Format::Markdown | Format::Html => {
            let mut s = String::from("| Metric | Pearson_r | Pearson_p | MAE | RMSE |\n|---|---|---|---|---|\n");
            for r in rows {
                match &r.outcome {
                    Outcome::Stats { pearson_r, pearson_p, mae, rmse } => {
                        s.push_str(&format!("| {} | {pearson_r:.3} | {pearson_p:.3e} | {mae:.3} | {rmse:.3} |\n", r.label))
                    }
                    Outcome::Undefined { error } => s.push_str(&format!("| {} | undefined: {error} | | | |\n", r.label)),
                }
            }
            s
        }
    })
}
