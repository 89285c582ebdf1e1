use std::thread;

use crate::eval::{
    validate_pair, AnswerabilityRecord, ContextTag, EvalPair, EvalScores, EvalTrace, PrecisionRecord, QgRecord,
    Warning, WarningCode, WeightRecord,
};
use crate::gateway::{Embedder, LanguageModel};
use crate::parallel::ordered_map;
use crate::prompting::{parse_ner_output, parse_question, parse_short_answer, parse_weight_output, PromptSet};
use crate::similarity::bertscore_recall;

use super::{
    admits, answerability_from_loglik, sequence_loglikelihood, weighted_recall, PipelineConfig,
    PipelineError, QAPair, RecallAggregate,
};

/// Candidates, question-generation records and admitted pairs of one context.
#[derive(Debug, Clone, Default)]
pub struct ContextStage {
    pub candidates: Vec<String>,
    pub records: Vec<QgRecord>,
    pub pairs: Vec<QAPair>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone)]
pub struct PrecisionStage {
    pub value: f64,
    pub degenerate: bool,
    pub records: Vec<PrecisionRecord>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone)]
pub struct RecallStage {
    pub aggregate: RecallAggregate,
    pub records: Vec<AnswerabilityRecord>,
    pub weights: Vec<WeightRecord>,
    pub warnings: Vec<Warning>,
}

impl RecallStage {
    pub fn value(&self) -> f64 {
        self.aggregate.value()
    }
}

/// Runs the pipeline against one model and one embedder.
#[derive(Clone, Copy)]
pub struct Evaluator<'a> {
    model: &'a dyn LanguageModel,
    embedder: &'a dyn Embedder,
    prompts: &'a PromptSet,
    config: &'a PipelineConfig,
}

/// Outcome of one candidate's round trip.
enum RoundTrip {
    Record(QgRecord, Option<Warning>),
    Skipped(Warning),
}

impl<'a> Evaluator<'a> {
    pub fn new(
        model: &'a dyn LanguageModel,
        embedder: &'a dyn Embedder,
        prompts: &'a PromptSet,
        config: &'a PipelineConfig,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self { model, embedder, prompts, config })
    }

    pub fn config(&self) -> &PipelineConfig {
        self.config
    }

    /// Candidate answers of `context`, in the order the model listed them.
    pub fn extract_candidates(&self, context: &str) -> Result<Vec<String>, PipelineError> {
        let prompt = self.prompts.ner(context)?;
        let out = self
            .model
            .generate(&prompt, &self.config.gen_params.ner)
            .map_err(PipelineError::backend("candidate extraction"))?;
        let mut candidates = parse_ner_output(&out.text);
        if let Some(cap) = self.config.max_candidates {
            candidates.truncate(cap);
        }
        Ok(candidates)
    }

    fn round_trip(&self, tag: ContextTag, context: &str, candidate: &str) -> Result<RoundTrip, PipelineError> {
        let skip = |code, message: String| Ok(RoundTrip::Skipped(Warning::new(code, message)));
        let qg_prompt = self.prompts.qg(context, candidate)?;
        let raw_question = match self.model.generate(&qg_prompt, &self.config.gen_params.qg) {
            Ok(out) => out.text,
            Err(e) => {
                return skip(
                    WarningCode::QuestionGenerationFailed,
                    format!("{tag} candidate {candidate:?}: {e}"),
                )
            }
        };
        let Ok(question) = parse_question(&raw_question) else {
            return skip(WarningCode::EmptyQuestion, format!("{tag} candidate {candidate:?}: empty question"));
        };
        let qa_prompt = self.prompts.qa(context, &question)?;
        let raw_answer = match self.model.generate(&qa_prompt, &self.config.gen_params.qa) {
            Ok(out) => out.text,
            Err(e) => return skip(WarningCode::RoundTripFailed, format!("{tag} question {question:?}: {e}")),
        };
        let record = |answer: String, similarity: f64| QgRecord {
            context: tag,
            candidate: candidate.to_string(),
            question: question.clone(),
            roundtrip_answer: answer,
            similarity,
            accepted: admits(similarity, self.config.tau),
        };
        let Ok(answer) = parse_short_answer(&raw_answer) else {
            let w = Warning::new(WarningCode::EmptyAnswer, format!("{tag} question {question:?}: empty answer"));
            return Ok(RoundTrip::Record(record(String::new(), 0.0), Some(w)));
        };
        match bertscore_recall(candidate, &answer, self.embedder) {
            Ok(sim) => Ok(RoundTrip::Record(record(answer, sim.value), None)),
            Err(e) => skip(WarningCode::RoundTripFailed, format!("{tag} question {question:?}: {e}")),
        }
    }

    /// Generates, answers back and filters one question per candidate.
    pub fn build_qa_pairs(
        &self,
        tag: ContextTag,
        context: &str,
        candidates: &[String],
    ) -> Result<ContextStage, PipelineError> {
        let outcomes = ordered_map(candidates, self.config.concurrency, |_, c| self.round_trip(tag, context, c));
        let mut stage = ContextStage { candidates: candidates.to_vec(), ..Default::default() };
        for outcome in outcomes {
            match outcome? {
                RoundTrip::Record(record, warning) => {
                    if record.accepted {
                        stage.pairs.push(QAPair {
                            question: record.question.clone(),
                            gold_answer: record.candidate.clone(),
                            origin_context: tag,
                            roundtrip_similarity: record.similarity,
                            weight: None,
                        });
                    }
                    stage.records.push(record);
                    stage.warnings.extend(warning);
                }
                RoundTrip::Skipped(w) => stage.warnings.push(w),
            }
        }
        if !candidates.is_empty() && stage.pairs.is_empty() {
            stage
                .warnings
                .push(Warning::new(WarningCode::NoQaPairs, format!("no {tag} question passed the round trip")));
        }
        Ok(stage)
    }

    /// Extraction followed by round-trip filtering.
    pub fn context_stage(&self, tag: ContextTag, context: &str) -> Result<ContextStage, PipelineError> {
        let candidates = self.extract_candidates(context)?;
        if candidates.is_empty() {
            return Ok(ContextStage {
                warnings: vec![Warning::new(WarningCode::NoCandidates, format!("no candidates in the {tag}"))],
                ..Default::default()
            });
        }
        self.build_qa_pairs(tag, context, &candidates)
    }

    fn precision_one(&self, document: &str, pair: &QAPair) -> Result<(PrecisionRecord, Option<Warning>), PipelineError> {
        let prompt = self.prompts.qa(document, &pair.question)?;
        let failed = |reason: String| {
            let record = PrecisionRecord {
                question: pair.question.clone(),
                gold_answer: pair.gold_answer.clone(),
                source_answer: None,
                similarity: 0.0,
            };
            let w = Warning::new(WarningCode::PrecisionAnswerFailed, format!("question {:?}: {reason}", pair.question));
            Ok((record, Some(w)))
        };
        let answer = match self.model.generate(&prompt, &self.config.gen_params.qa) {
            Ok(out) => match parse_short_answer(&out.text) {
                Ok(a) => a,
                Err(e) => return failed(e.to_string()),
            },
            Err(e) => return failed(e.to_string()),
        };
        match bertscore_recall(&pair.gold_answer, &answer, self.embedder) {
            Ok(sim) => Ok((
                PrecisionRecord {
                    question: pair.question.clone(),
                    gold_answer: pair.gold_answer.clone(),
                    source_answer: Some(answer),
                    similarity: sim.value,
                },
                None,
            )),
            Err(e) => failed(e.to_string()),
        }
    }

    /// Mean similarity of document answers to the gold answers of summary questions.
    pub fn precision(&self, document: &str, summary_pairs: &[QAPair]) -> Result<PrecisionStage, PipelineError> {
        let outcomes = ordered_map(summary_pairs, self.config.concurrency, |_, p| self.precision_one(document, p));
        let mut records = Vec::with_capacity(outcomes.len());
        let mut warnings = Vec::new();
        for outcome in outcomes {
            let (record, warning) = outcome?;
            records.push(record);
            warnings.extend(warning);
        }
        let degenerate = records.is_empty();
        let value = if degenerate {
            0.0
        } else {
            records.iter().map(|r| r.similarity).sum::<f64>() / records.len() as f64
        };
        Ok(PrecisionStage { value, degenerate, records, warnings })
    }

    /// Probability that `question` is answerable from `summary` rather than
    /// met with the unanswerable string.
    pub fn answerability(&self, summary: &str, question: &str) -> Result<AnswerabilityRecord, PipelineError> {
        let prompt = self.prompts.qa(summary, question)?;
        let generated = self
            .model
            .generate(&prompt, &self.config.gen_params.qa)
            .map_err(PipelineError::backend("answerability generation"))?;
        let epsilon = self
            .model
            .score_sequence(&prompt, &self.config.unanswerable_epsilon)
            .map_err(PipelineError::backend("answerability scoring"))?;
        let ll_answer = sequence_loglikelihood(&generated);
        let ll_unanswerable = sequence_loglikelihood(&epsilon);
        Ok(AnswerabilityRecord {
            question: question.to_string(),
            generated_answer: generated.text.trim().to_string(),
            ll_answer,
            ll_unanswerable,
            answerability: answerability_from_loglik(ll_answer, ll_unanswerable),
        })
    }

    /// Importance of `question` for `document`, in [0, 1].
    pub fn weight_question(&self, document: &str, question: &str) -> Result<(f64, Option<Warning>), PipelineError> {
        let prompt = self.prompts.weighter(document, question)?;
        let fallback = self.config.weight_fallback;
        let warn = |why: String| {
            Some(Warning::new(WarningCode::WeightFallback, format!("question {question:?}: {why}; weight {fallback}")))
        };
        match self.model.generate(&prompt, &self.config.gen_params.weighter) {
            Ok(out) => {
                let parsed = parse_weight_output(&out.text, fallback);
                let warning = if parsed.parsed { None } else { warn(format!("no number in {:?}", out.text)) };
                Ok((parsed.value, warning))
            }
            Err(e) => Ok((fallback, warn(e.to_string()))),
        }
    }

    /// Weighted answerability of document questions against the summary.
    pub fn recall(&self, document: &str, summary: &str, document_pairs: &[QAPair]) -> Result<RecallStage, PipelineError> {
        let outcomes = ordered_map(document_pairs, self.config.concurrency, |_, p| {
            let (weight, warning) = self.weight_question(document, &p.question)?;
            let record = self.answerability(summary, &p.question)?;
            Ok::<_, PipelineError>((weight, warning, record))
        });
        let mut stage = RecallStage {
            aggregate: RecallAggregate::Empty,
            records: Vec::new(),
            weights: Vec::new(),
            warnings: Vec::new(),
        };
        let mut items = Vec::with_capacity(outcomes.len());
        for outcome in outcomes {
            let (weight, warning, record) = outcome?;
            items.push((weight, record.answerability));
            stage.weights.push(WeightRecord { question: record.question.clone(), weight });
            stage.records.push(record);
            stage.warnings.extend(warning);
        }
        stage.aggregate = weighted_recall(&items);
        if let RecallAggregate::Unweighted(_) = stage.aggregate {
            stage.warnings.push(Warning::new(
                WarningCode::ZeroWeights,
                "every question weight is 0; recall is the unweighted mean",
            ));
        }
        Ok(stage)
    }

    /// Scores one pair and returns the full trace.
    pub fn evaluate(&self, pair: &EvalPair) -> Result<(EvalScores, EvalTrace), PipelineError> {
        let pair = validate_pair(pair.clone())?;
        let (summary_stage, document_stage) = thread::scope(|s| {
            let summary = s.spawn(|| self.context_stage(ContextTag::Summary, &pair.summary));
            let document = self.context_stage(ContextTag::Document, &pair.document);
            (summary.join().expect("summary stage panicked"), document)
        });
        let (summary_stage, document_stage) = (summary_stage?, document_stage?);

        let (precision, recall) = thread::scope(|s| {
            let precision = s.spawn(|| self.precision(&pair.document, &summary_stage.pairs));
            let recall = self.recall(&pair.document, &pair.summary, &document_stage.pairs);
            (precision.join().expect("precision stage panicked"), recall)
        });
        let (precision, recall) = (precision?, recall?);

        let degenerate = precision.degenerate || recall.aggregate == RecallAggregate::Empty;
        let scores = EvalScores::new(precision.value, recall.value(), degenerate);

        let mut trace = EvalTrace::new(pair.id.clone(), self.config.tau);
        trace.stages.candidates.summary = summary_stage.candidates;
        trace.stages.candidates.document = document_stage.candidates;
        trace.stages.question_generation = summary_stage.records;
        trace.stages.question_generation.extend(document_stage.records);
        trace.stages.precision = precision.records;
        trace.stages.recall = recall.records;
        trace.stages.weights = recall.weights;
        trace.warnings = summary_stage.warnings;
        trace.warnings.extend(document_stage.warnings);
        trace.warnings.extend(precision.warnings);
        trace.warnings.extend(recall.warnings);
        if scores.degenerate {
            let mut empty = Vec::new();
            if precision.degenerate {
                empty.push("summary");
            }
            if recall.aggregate == RecallAggregate::Empty {
                empty.push("document");
            }
            let what = if empty.is_empty() { "precision and recall are both 0".to_string() } else {
                format!("no admitted {} questions", empty.join(" or "))
            };
            trace.warnings.push(Warning::new(WarningCode::DegenerateScore, what));
        }
        trace.scores = scores;
        trace.check_invariants().map_err(|e| PipelineError::Internal(e.to_string()))?;
        Ok((scores, trace))
    }
}
