use std::path::PathBuf;

use approx::assert_abs_diff_eq;
use serde_json::Value;
use summcheck::eval::{ContextTag, EvalPair, WarningCode};
use summcheck::gateway::ScriptedBackend;
use summcheck::pipeline::{Evaluator, PipelineConfig};
use summcheck::prompting::PromptSet;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/e2e")
}

fn pairs() -> Vec<EvalPair> {
    std::fs::read_to_string(fixtures().join("pairs.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn expected() -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("expected.json")).unwrap()).unwrap()
}

fn backend() -> ScriptedBackend {
    ScriptedBackend::from_path(fixtures().join("script.json")).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn strings(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect()
}

#[test]
fn scripted_corpus_matches_the_worksheet() {
    let backend = backend();
    let prompts = PromptSet::default();
    let config = PipelineConfig::default();
    let evaluator = Evaluator::new(&backend, &backend, &prompts, &config).unwrap();
    let expected = expected();

    for pair in pairs() {
        let want = &expected[&pair.id];
        let (scores, trace) = evaluator.evaluate(&pair).unwrap();
        assert_abs_diff_eq!(scores.precision, want["precision"].as_f64().unwrap(), epsilon = 1e-9);
        assert_abs_diff_eq!(scores.recall, want["recall"].as_f64().unwrap(), epsilon = 1e-9);
        assert_abs_diff_eq!(scores.f1, want["f1"].as_f64().unwrap(), epsilon = 1e-9);
        assert_eq!(scores.degenerate, want["degenerate"].as_bool().unwrap());
        assert_eq!(trace.scores, scores);

        let c = &trace.stages.candidates;
        assert_eq!(c.summary, strings(&want["summary_candidates"]));
        assert_eq!(c.document, strings(&want["document_candidates"]));

        for (tag, key) in [(ContextTag::Summary, "summary"), (ContextTag::Document, "document")] {
            let sims: Vec<f64> = trace
                .stages
                .question_generation
                .iter()
                .filter(|r| r.context == tag)
                .map(|r| r.similarity)
                .collect();
            let want_sims = floats(&want["roundtrip_similarity"][key]);
            assert_eq!(sims.len(), want_sims.len());
            for (got, w) in sims.iter().zip(&want_sims) {
                assert_abs_diff_eq!(*got, *w, epsilon = 1e-12);
            }
        }
        let prec: Vec<f64> = trace.stages.precision.iter().map(|r| r.similarity).collect();
        for (got, w) in prec.iter().zip(floats(&want["precision_similarity"])) {
            assert_abs_diff_eq!(*got, w, epsilon = 1e-12);
        }
        let weights: Vec<f64> = trace.stages.weights.iter().map(|r| r.weight).collect();
        assert_eq!(weights, floats(&want["weights"]));
        for (got, w) in trace.stages.recall.iter().zip(floats(&want["answerability"])) {
            assert_abs_diff_eq!(got.answerability, w, epsilon = 1e-12);
        }
        trace.check_invariants().unwrap();
    }
}

#[test]
fn rejected_document_question_stays_in_the_trace() {
    let backend = backend();
    let prompts = PromptSet::default();
    let config = PipelineConfig::default();
    let evaluator = Evaluator::new(&backend, &backend, &prompts, &config).unwrap();
    let (_, trace) = evaluator.evaluate(&pairs()[0]).unwrap();
    let rejected: Vec<_> = trace.stages.question_generation.iter().filter(|r| !r.accepted).collect();
    assert_eq!(rejected.len(), 1);
    assert_eq!(rejected[0].candidate, "সিভিসি");
    assert_eq!(rejected[0].similarity, 0.0);
    assert_eq!(trace.accepted(ContextTag::Document).count(), 2);
}

#[test]
fn empty_summary_candidates_degenerate() {
    let backend = backend();
    let prompts = PromptSet::default();
    let config = PipelineConfig::default();
    let evaluator = Evaluator::new(&backend, &backend, &prompts, &config).unwrap();
    let (scores, trace) = evaluator.evaluate(&pairs()[1]).unwrap();
    assert_eq!((scores.precision, scores.f1), (0.0, 0.0));
    assert!(scores.degenerate);
    let codes: Vec<_> = trace.warnings.iter().map(|w| w.code).collect();
    assert!(codes.contains(&WarningCode::NoCandidates));
    assert!(codes.contains(&WarningCode::DegenerateScore));
}

#[test]
fn raising_tau_filters_the_partial_match() {
    // the second summary question round-trips at 0.8
    let backend = backend();
    let prompts = PromptSet::default();
    let config = PipelineConfig { tau: 0.9, ..Default::default() };
    let evaluator = Evaluator::new(&backend, &backend, &prompts, &config).unwrap();
    let (scores, trace) = evaluator.evaluate(&pairs()[0]).unwrap();
    assert_eq!(trace.accepted(ContextTag::Summary).count(), 1);
    assert_abs_diff_eq!(scores.precision, 1.0, epsilon = 1e-12);
}

#[test]
fn round_trip_similarity_at_the_threshold_is_admitted() {
    let backend = backend();
    let prompts = PromptSet::default();
    let at = PipelineConfig { tau: 0.8, ..Default::default() };
    let evaluator = Evaluator::new(&backend, &backend, &prompts, &at).unwrap();
    let (_, trace) = evaluator.evaluate(&pairs()[0]).unwrap();
    assert_eq!(trace.accepted(ContextTag::Summary).count(), 2);

    let above = PipelineConfig { tau: 0.8 + 1e-9, ..Default::default() };
    let evaluator = Evaluator::new(&backend, &backend, &prompts, &above).unwrap();
    let (_, trace) = evaluator.evaluate(&pairs()[0]).unwrap();
    assert_eq!(trace.accepted(ContextTag::Summary).count(), 1);
}

#[test]
fn candidate_cap_truncates_in_order() {
    let backend = backend();
    let prompts = PromptSet::default();
    let config = PipelineConfig { max_candidates: Some(1), ..Default::default() };
    let evaluator = Evaluator::new(&backend, &backend, &prompts, &config).unwrap();
    let (_, trace) = evaluator.evaluate(&pairs()[0]).unwrap();
    assert_eq!(trace.stages.candidates.summary, vec!["ডেঙ্গু"]);
    assert_eq!(trace.stages.candidates.document, vec!["ডেঙ্গু"]);
}

#[test]
fn serial_and_parallel_runs_agree_bitwise() {
    let backend = backend();
    let prompts = PromptSet::default();
    let serial = PipelineConfig { concurrency: 1, ..Default::default() };
    let parallel = PipelineConfig { concurrency: 8, ..Default::default() };
    let a = Evaluator::new(&backend, &backend, &prompts, &serial).unwrap().evaluate(&pairs()[0]).unwrap();
    let b = Evaluator::new(&backend, &backend, &prompts, &parallel).unwrap().evaluate(&pairs()[0]).unwrap();
    assert_eq!(summcheck::eval::serialize_trace(&a.1), summcheck::eval::serialize_trace(&b.1));
}

#[test]
fn unscripted_extraction_aborts_the_pair() {
    let backend = backend();
    let prompts = PromptSet::default();
    let config = PipelineConfig::default();
    let evaluator = Evaluator::new(&backend, &backend, &prompts, &config).unwrap();
    let pair = EvalPair::new("x", "অজানা নথি", "অজানা সারাংশ");
    let err = evaluator.evaluate(&pair).unwrap_err();
    assert!(err.to_string().contains("candidate extraction"), "{err}");
}
