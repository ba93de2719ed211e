//! Treebank ingestion and dataset construction.

mod conllu;
mod dataset;
mod episode;

use alloc::string::String;

use thiserror::Error;

pub use conllu::{base_relation, parse_conllu, to_conllu, Head, Sentence, Token};
pub use dataset::{
    build_pos_dataset, build_rel_dataset, filter_rare_concepts, restrict_to_names, ConceptVocab,
    LabeledDataset, Provenance, RootArcs, Split, Task,
};
pub use episode::{holdout_split_for_testonly, sample_support_query, Episode};

/// Default minimum number of samples for a concept to be kept.
pub const MIN_CONCEPT_COUNT: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum TreebankError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sentence {sentence_id}: {message}")]
    Alignment { sentence_id: String, message: String },
    #[error("need {needed} sentences, only {available} available")]
    InsufficientSentences { needed: usize, available: usize },
    #[error("concept {0:?} has no samples")]
    EmptyConcept(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}
