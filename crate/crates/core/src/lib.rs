//! Reference-free factual-consistency scoring for Bangla summaries.
//!
//! A summary is scored by asking questions about it and checking whether the
//! source document answers them the same way (precision), and by asking
//! questions about the document and checking whether the summary can answer
//! them at all (recall). The two combine into an F1 score in [0, 1].
//!
//! Language-model and embedding calls go through the [`gateway`] traits, so
//! the whole pipeline runs offline against a [`gateway::ScriptedBackend`].

pub mod eval;
pub mod gateway;
pub mod parallel;
pub mod pipeline;
pub mod prompting;
pub mod similarity;
pub mod stats;
pub mod text;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/similarity.md")]
    mod similarity {}
    #[doc = include_str!("../../../book/src/answerability.md")]
    mod answerability {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/scripted.md")]
    mod scripted {}
    #[doc = include_str!("../../../book/src/trace.md")]
    mod trace {}
    #[doc = include_str!("../../../book/src/wire.md")]
    mod wire {}
}
