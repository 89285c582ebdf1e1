use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use summcheck::eval::{serialize_trace, validate_pair, EvalPair, EvalScores, EvalTrace};
use summcheck::gateway::{CallCounter, Counted};
use summcheck::parallel::ordered_map;
use summcheck::pipeline::Evaluator;

use crate::config::RunConfig;

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultLine {
    pub id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
    pub warnings_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_score: Option<f64>,
}

/// Written in place of a result when a line cannot be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorLine {
    pub line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub error: String,
}

#[derive(Debug, Default)]
pub struct Summary {
    pub results: usize,
    pub errors: usize,
}

enum Parsed {
    Pair(EvalPair),
    Bad(ErrorLine),
}

fn parse_lines(text: &str) -> Vec<(usize, Parsed)> {
    let mut seen = HashSet::new();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let line = i + 1;
            let parsed = match serde_json::from_str::<EvalPair>(l) {
                Err(e) => Parsed::Bad(ErrorLine { line, id: None, error: format!("malformed input line: {e}") }),
                Ok(pair) => match validate_pair(pair) {
                    Err(e) => Parsed::Bad(ErrorLine { line, id: None, error: e.to_string() }),
                    Ok(pair) if !seen.insert(pair.id.clone()) => Parsed::Bad(ErrorLine {
                        line,
                        id: Some(pair.id.clone()),
                        error: format!("duplicate id {:?}", pair.id),
                    }),
                    Ok(pair) => Parsed::Pair(pair),
                },
            };
            (line, parsed)
        })
        .collect()
}

/// File name for a pair's trace: the id with anything outside
/// `[A-Za-z0-9._-]` replaced by `_`.
pub fn trace_file_name(id: &str) -> String {
    let stem: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    format!("{stem}.json")
}

pub fn run(
    config: &RunConfig,
    input: &Path,
    output: Option<&Path>,
    trace_dir: Option<&PathBuf>,
) -> Result<Summary> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let prompts = config.prompts()?;
    let model = config.model()?;
    let embedder = config.embedder()?;
    if let Some(dir) = trace_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut out: Box<dyn Write> = match output {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };

    let lines = parse_lines(&text);
    if lines.is_empty() {
        eprintln!("warning: {} holds no pairs", input.display());
    }
    let counter = CallCounter::new();
    let counted_model = Counted::new(model.as_ref(), &counter);
    let counted_embedder = Counted::new(embedder.as_ref(), &counter);
    let evaluator = Evaluator::new(&counted_model, &counted_embedder, &prompts, &config.pipeline)?;

    let total = lines.len();
    let outcomes = ordered_map(&lines, config.concurrency, |_, (line, parsed)| match parsed {
        Parsed::Bad(e) => Err(e.clone()),
        Parsed::Pair(pair) => {
            let r = evaluator.evaluate(pair).map_err(|e| ErrorLine {
                line: *line,
                id: Some(pair.id.clone()),
                error: e.to_string(),
            });
            match &r {
                Ok((s, _)) => eprintln!("[line {line}/{total}] {}: f1 {:.4}", pair.id, s.f1),
                Err(e) => eprintln!("[line {line}/{total}] {}: failed: {}", pair.id, e.error),
            }
            r.map(|(scores, trace)| (pair.clone(), scores, trace))
        }
    });

    let mut summary = Summary::default();
    for outcome in outcomes {
        let json = match outcome {
            Ok((pair, scores, trace)) => {
                if let Some(dir) = trace_dir {
                    write_trace(dir, &trace)?;
                }
                summary.results += 1;
                serde_json::to_string(&result_line(&pair, &scores, &trace))?
            }
            Err(e) => {
                summary.errors += 1;
                serde_json::to_string(&e)?
            }
        };
        writeln!(out, "{json}")?;
    }
    out.flush()?;

    let calls = counter.snapshot();
    let detail: Vec<String> = calls.iter().filter(|(_, n)| **n > 0).map(|(k, n)| format!("{k}={n}")).collect();
    eprintln!(
        "{} evaluated, {} failed; backend calls: {} ({})",
        summary.results,
        summary.errors,
        counter.total(),
        detail.join(", ")
    );
    Ok(summary)
}

fn result_line(pair: &EvalPair, scores: &EvalScores, trace: &EvalTrace) -> ResultLine {
    ResultLine {
        id: pair.id.clone(),
        precision: scores.precision,
        recall: scores.recall,
        f1: scores.f1,
        degenerate: scores.degenerate,
        warnings_count: trace.warnings.len(),
        human_score: pair.human_score,
    }
}

fn write_trace(dir: &Path, trace: &EvalTrace) -> Result<()> {
    let path = dir.join(trace_file_name(&trace.pair_id));
    std::fs::write(&path, serialize_trace(trace)).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_names_are_filesystem_safe() {
        assert_eq!(trace_file_name("a/b c"), "a_b_c.json");
        assert_eq!(trace_file_name("pair-01.x"), "pair-01.x.json");
    }

    #[test]
    fn bad_and_duplicate_lines_are_isolated() {
        let text = "{\"id\":\"a\",\"document\":\"d\",\"summary\":\"s\"}\nnot json\n\n{\"id\":\"a\",\"document\":\"d\",\"summary\":\"s\"}\n";
        let parsed = parse_lines(text);
        assert_eq!(parsed.len(), 3);
        assert!(matches!(parsed[0].1, Parsed::Pair(_)));
        assert!(matches!(&parsed[1].1, Parsed::Bad(e) if e.line == 2));
        assert!(matches!(&parsed[2].1, Parsed::Bad(e) if e.line == 4 && e.error.contains("duplicate")));
    }
}
