//! Meta-learned alignment of new languages onto source-language prototypes.
//!
//! Three modes share a language-agnostic perceptron `f`:
//!
//! * few-shot: `g_l(f(x))` is compared with the frozen source prototypes,
//!   where `g_l` is an affine map learned per language (and from scratch for
//!   a new language at test time);
//! * zero-shot: `f(x)` is compared with unified prototypes `h(c)` and no
//!   per-language parameters exist;
//! * identity prototypes: prototypes are plain means of demonstration
//!   representations and `f(x)` is compared with them directly.

mod adapt;
mod objective;
mod train;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::GeometryError;
use crate::linalg::Matrix;
use crate::probe::PrototypeSet;
use crate::tensor::{argmax, proto_logits, softmax, LinearMap, Mlp2};
use crate::treebank::{ConceptVocab, LabeledDataset, Task, TreebankError};

pub use adapt::{evaluate_generalization, fewshot_adapt, AdaptConfig, GeneralizationRun};
pub use objective::{
    adapter_objective, fewshot_objective, identity_prototype_objective, zeroshot_objective, FewshotGrads,
    ZeroshotGrads,
};
pub use train::{icl_align_train, meta_train_fewshot, meta_train_zeroshot, ContextEpisodeSource, TrainLog};

#[derive(Debug, Error, PartialEq)]
pub enum MetaError {
    #[error("meta-learning configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] TreebankError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("model is in {actual:?} mode, operation needs {expected:?}")]
    Mode { expected: MetaMode, actual: MetaMode },
    #[error("no adapter for language {0:?}")]
    UnknownLanguage(String),
    #[error("no training language shares a concept with the source")]
    NoLanguages,
    #[error("non-finite parameters after {0} episodes")]
    NonFinite(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetaMode {
    Fewshot,
    Zeroshot,
    IclAlign,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    /// Hidden width of `f`.
    pub h: usize,
    /// Output width of `f`; must match the source prototype dimension.
    pub m: usize,
    pub epochs: usize,
    pub episodes_per_language_per_epoch: usize,
    pub n_query: usize,
    /// Support sizes (in sentences) drawn uniformly per training episode.
    pub support_sizes: Vec<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    /// Weight of `||W^T W - I||^2` on each `g`; 0 leaves `g` unconstrained.
    pub orthogonality_weight: f64,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self::for_task(Task::Pos)
    }
}

impl MetaConfig {
    /// Widths used for part-of-speech (256/32) and relation (384/64) concepts.
    pub fn for_task(task: Task) -> Self {
        let (h, m) = match task {
            Task::Pos => (256, 32),
            Task::Rel => (384, 64),
        };
        Self {
            h,
            m,
            epochs: 50,
            episodes_per_language_per_epoch: 50,
            n_query: 30,
            support_sizes: alloc::vec![10, 30, 50],
            lr: 5e-5,
            weight_decay: 1e-4,
            dropout: 0.33,
            orthogonality_weight: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), MetaError> {
        let bad = |m: &str| Err(MetaError::Config(m.to_string()));
        if self.h == 0 || self.m == 0 {
            return bad("h and m must be positive");
        }
        if self.epochs == 0 || self.episodes_per_language_per_epoch == 0 {
            return bad("epochs and episodes must be positive");
        }
        if self.n_query == 0 {
            return bad("n_query must be positive");
        }
        if self.support_sizes.is_empty() {
            return bad("support_sizes must not be empty");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(self.orthogonality_weight >= 0.0 && self.orthogonality_weight.is_finite()) {
            return bad("orthogonality_weight must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IclAlignConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub episodes_per_language_per_epoch: usize,
    pub n_query: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for IclAlignConfig {
    fn default() -> Self {
        Self {
            hidden: 512,
            epochs: 100,
            episodes_per_language_per_epoch: 10,
            n_query: 30,
            lr: 5e-4,
            weight_decay: 1e-4,
            dropout: 0.33,
            seed: 0,
        }
    }
}

impl IclAlignConfig {
    pub fn validate(&self) -> Result<(), MetaError> {
        let bad = |m: &str| Err(MetaError::Config(m.to_string()));
        if self.hidden == 0 || self.epochs == 0 || self.episodes_per_language_per_epoch == 0 || self.n_query == 0 {
            return bad("hidden, epochs, episodes and n_query must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }
}

/// Trained networks plus the frozen prototypes they target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaModel {
    pub mode: MetaMode,
    pub f: Mlp2,
    /// Per-language adapters learned during few-shot meta-training.
    pub g: BTreeMap<String, LinearMap>,
    /// Prototype map of the zero-shot mode.
    pub h: Option<LinearMap>,
    /// Frozen source prototypes (absent for identity-prototype models).
    pub source: Option<PrototypeSet>,
}

/// Per-call inputs that select how a sample is embedded and scored.
#[derive(Clone, Copy, Debug, Default)]
pub struct ClassifyContext<'a> {
    /// Adapter applied after `f` (few-shot mode).
    pub adapter: Option<&'a LinearMap>,
    /// Demonstration prototypes (identity-prototype mode).
    pub prototypes: Option<&'a Matrix>,
}

impl MetaModel {
    pub(crate) fn require(&self, expected: MetaMode) -> Result<(), MetaError> {
        if self.mode != expected {
            return Err(MetaError::Mode {
                expected,
                actual: self.mode,
            });
        }
        Ok(())
    }

    pub fn source(&self) -> Result<&PrototypeSet, MetaError> {
        self.source
            .as_ref()
            .ok_or_else(|| MetaError::Config("model has no source prototypes".to_string()))
    }

    /// Concept vocabulary that predictions index into, if fixed by the model.
    pub fn vocab(&self) -> Option<&ConceptVocab> {
        self.source.as_ref().map(|s| s.vocab())
    }

    /// Adapter learned for a training language.
    pub fn adapter(&self, language: &str) -> Result<&LinearMap, MetaError> {
        self.g.get(language).ok_or_else(|| MetaError::UnknownLanguage(language.to_string()))
    }

    /// Prototypes that embedded samples are compared with.
    pub fn effective_prototypes(&self, ctx: ClassifyContext<'_>) -> Result<Matrix, MetaError> {
        match self.mode {
            MetaMode::Fewshot => Ok(self.source()?.prototypes().clone()),
            MetaMode::Zeroshot => {
                let h = self.h.as_ref().ok_or_else(|| MetaError::Config("zero-shot model without h".to_string()))?;
                Ok(h.forward(self.source()?.prototypes()))
            }
            MetaMode::IclAlign => ctx
                .prototypes
                .cloned()
                .ok_or_else(|| MetaError::Config("identity-prototype mode needs demonstration prototypes".to_string())),
        }
    }

    /// Embeds a batch of raw features (inference mode, no dropout).
    pub fn embed(&self, x: &Matrix, ctx: ClassifyContext<'_>) -> Result<Matrix, MetaError> {
        let z = self.f.forward(x);
        match self.mode {
            MetaMode::Fewshot => {
                let g = ctx
                    .adapter
                    .ok_or_else(|| MetaError::Config("few-shot mode needs an adapter".to_string()))?;
                Ok(g.forward(&z))
            }
            MetaMode::Zeroshot | MetaMode::IclAlign => Ok(z),
        }
    }

    /// Predicted concept index and class probabilities for every row of `x`.
    pub fn classify_batch(&self, x: &Matrix, ctx: ClassifyContext<'_>) -> Result<Vec<(usize, Vec<f64>)>, MetaError> {
        let protos = self.effective_prototypes(ctx)?;
        let z = self.embed(x, ctx)?;
        Ok(z.row_iter()
            .map(|zi| {
                let logits = proto_logits(zi, &protos);
                (argmax(&logits), softmax(&logits))
            })
            .collect())
    }
}

/// Classifies one sample: few-shot uses `g(f(x))` against the source
/// prototypes, zero-shot `f(x)` against `h(c)`, identity-prototype mode
/// `f(x)` against demonstration means.
pub fn meta_classify(model: &MetaModel, ctx: ClassifyContext<'_>, x: &[f64]) -> Result<(usize, Vec<f64>), MetaError> {
    let row = Matrix::from_vec(1, x.len(), x.to_vec());
    Ok(model.classify_batch(&row, ctx)?.remove(0))
}

/// Restricts `ds` to concepts known to `vocab` and returns, per sample, the
/// concept index in `vocab`.
pub fn map_to_vocab(ds: &LabeledDataset, vocab: &ConceptVocab) -> (LabeledDataset, Vec<usize>) {
    let shared = ds.vocab().intersection(vocab);
    let kept = crate::treebank::restrict_to_names(ds, &shared);
    let gold = (0..kept.len())
        .map(|i| vocab.index_of(kept.label_name(i)).expect("shared concept"))
        .collect();
    (kept, gold)
}

/// Per-concept means of demonstration representations, i.e. prototypes
/// under an identity transform.
pub fn demonstration_prototypes(demo: &LabeledDataset) -> Result<PrototypeSet, MetaError> {
    let means = demo.class_means()?;
    Ok(PrototypeSet::new(
        LinearMap::identity(demo.dim(), false),
        means,
        demo.vocab().clone(),
    ))
}
