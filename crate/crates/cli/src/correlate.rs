use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;
use summcheck::stats::{correlation_report, CorrelationReport, PairedSamples};

use crate::config::Format;

pub struct CorrelateArgs<'a> {
    pub results: &'a Path,
    pub human: Option<&'a Path>,
    pub metric_field: &'a str,
    pub human_scale: f64,
    pub allow_unmatched: bool,
}

#[derive(Debug, Serialize)]
pub struct CorrelationOutput {
    pub metric_field: String,
    pub human_scale: f64,
    #[serde(flatten)]
    pub report: CorrelationReport,
    pub unmatched: Vec<String>,
}

fn read_jsonl(path: &Path) -> Result<Vec<(usize, Value)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let v: Value =
                serde_json::from_str(l).with_context(|| format!("{}:{}: malformed JSON", path.display(), i + 1))?;
            Ok((i + 1, v))
        })
        .collect()
}

fn id_of(path: &Path, line: usize, v: &Value) -> Result<String> {
    match v.get("id") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => bail!("{}:{line}: missing id", path.display()),
    }
}

fn number(path: &Path, line: usize, v: &Value, field: &str) -> Result<Option<f64>> {
    match v.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(x) => match x.as_f64() {
            Some(f) => Ok(Some(f)),
            None => bail!("{}:{line}: field {field} is not a number", path.display()),
        },
    }
}

pub fn run(args: &CorrelateArgs) -> Result<CorrelationOutput> {
    if args.human_scale.is_nan() || args.human_scale <= 0.0 {
        bail!("--human-scale must be positive");
    }
    let mut metric: BTreeMap<String, f64> = BTreeMap::new();
    let mut inline_human: BTreeMap<String, f64> = BTreeMap::new();
    let mut order = Vec::new();
    for (line, v) in read_jsonl(args.results)? {
        if v.get("error").is_some() {
            continue;
        }
        let id = id_of(args.results, line, &v)?;
        let Some(m) = number(args.results, line, &v, args.metric_field)? else {
            bail!("{}:{line}: no {} value", args.results.display(), args.metric_field);
        };
        if let Some(h) = number(args.results, line, &v, "human_score")? {
            inline_human.insert(id.clone(), h);
        }
        if metric.insert(id.clone(), m).is_some() {
            bail!("{}:{line}: duplicate id {id:?}", args.results.display());
        }
        order.push(id);
    }
    let human = match args.human {
        None => inline_human,
        Some(path) => {
            let mut h = BTreeMap::new();
            for (line, v) in read_jsonl(path)? {
                let id = id_of(path, line, &v)?;
                let Some(score) = number(path, line, &v, "human_score")? else {
                    bail!("{}:{line}: no human_score", path.display());
                };
                h.insert(id, score);
            }
            h
        }
    };

    let mut unmatched: Vec<String> = order.iter().filter(|id| !human.contains_key(*id)).cloned().collect();
    unmatched.extend(human.keys().filter(|id| !metric.contains_key(*id)).cloned());
    if !unmatched.is_empty() && !args.allow_unmatched {
        bail!(
            "{} ids have no counterpart (pass --allow-unmatched to skip them): {}",
            unmatched.len(),
            unmatched.join(", ")
        );
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = order
        .iter()
        .filter_map(|id| human.get(id).map(|h| (metric[id], h / args.human_scale)))
        .unzip();
    let samples = PairedSamples::new(xs, ys)?;
    let report = correlation_report(&samples)?;
    Ok(CorrelationOutput {
        metric_field: args.metric_field.to_string(),
        human_scale: args.human_scale,
        report,
        unmatched,
    })
}

pub fn render(out: &CorrelationOutput, format: Format) -> Result<String> {
    let r = &out.report;
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(out)? + "\n",
        Format::Markdown | Format::Html => {
            let rows = [
                ("Pearson r", r.pearson_r, Some(r.pearson_p)),
                ("Spearman ρ", r.spearman_rho, Some(r.spearman_p)),
                ("Kendall τ-b", r.kendall_tau, Some(r.kendall_p)),
                ("R²", r.r_squared, None),
                ("MAE", r.mae, None),
                ("RMSE", r.rmse, None),
                ("L2 deviation", r.l2_deviation, None),
            ];
            let mut s = format!(
                "Correlation of `{}` with human scores (n = {}, human scale ÷{})\n\n| Statistic | Value | p-value |\n|---|---|---|\n",
                out.metric_field, r.n, out.human_scale
            );
            for (name, v, p) in rows {
                let p = p.map(|p| format!("{p:.3e}")).unwrap_or_default();
                s.push_str(&format!("| {name} | {v:.4} | {p} |\n"));
            }
            if !out.unmatched.is_empty() {
                s.push_str(&format!("\nSkipped unmatched ids: {}\n", out.unmatched.join(", ")));
            }
            s
        }
    })
}
