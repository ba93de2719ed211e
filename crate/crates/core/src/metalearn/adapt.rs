use alloc::string::ToString;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::objective::adapter_objective;
use super::{demonstration_prototypes, ClassifyContext, MetaError, MetaMode, MetaModel};
use crate::probe::UnseenPolicy;
use crate::rng::{derive_seed, seeded};
use crate::tensor::{AdamHyper, AdamState, LinearMap};
use crate::treebank::{holdout_split_for_testonly, sample_support_query, ConceptVocab, LabeledDataset};

/// Test-time fitting of a fresh adapter on a support set with `f` frozen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// Passes over the support set.
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            weight_decay: 1e-4,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<(), MetaError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(MetaError::Config("adapt epochs and batch_size must be positive".to_string()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(MetaError::Config("adapt lr must be positive, weight_decay non-negative".to_string()));
        }
        Ok(())
    }
}

/// Learns a new identity-initialized affine adapter from `support` while
/// `f` and the source prototypes stay fixed.
pub fn fewshot_adapt(model: &MetaModel, support: &LabeledDataset, cfg: &AdaptConfig) -> Result<LinearMap, MetaError> {
    model.require(MetaMode::Fewshot)?;
    cfg.validate()?;
    if support.is_empty() {
        return Err(MetaError::Config("few-shot adaptation needs at least one support example".to_string()));
    }
    let source = model.source()?;
    let (kept, gold) = super::map_to_vocab(support, source.vocab());
    if kept.is_empty() {
        return Err(MetaError::Config("support set shares no concept with the source".to_string()));
    }
    let z = model.f.forward(kept.features());
    let m = model.f.output_dim();
    let mut g = LinearMap::identity(m, true);
    let mut adam = AdamState::new(AdamHyper::new(cfg.lr, cfg.weight_decay));
    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..kept.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let zb = z.select_rows(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| gold[i]).collect();
            let (_, grad) = adapter_objective(&g, source.prototypes(), &zb, &yb);
            adam.step(&mut g.param_slices_mut(), &grad.slices());
        }
    }
    if !g.is_finite() {
        return Err(MetaError::NonFinite(cfg.epochs));
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationRun {
    pub run: usize,
    pub n_support: usize,
    pub accuracy: f64,
}

/// Accuracy of `preds` (indices into `vocab`) on `ds` under `policy`.
fn score(vocab: &ConceptVocab, ds: &LabeledDataset, preds: &[usize], policy: UnseenPolicy) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (i, &p) in preds.iter().enumerate() {
        match vocab.index_of(ds.label_name(i)) {
            Some(gold) => {
                total += 1;
                correct += usize::from(gold == p);
            }
            None => total += usize::from(policy == UnseenPolicy::Misclassified),
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Accuracy on a target language for `runs` independent support draws.
///
/// Support sentences come from `support_pool` (the target's training split)
/// when given; otherwise they are held out of `test` itself and the
/// remaining sentences are scored. Few-shot models adapt a fresh `g` per
/// run; zero-shot models ignore the support; identity-prototype models use
/// the support as demonstrations.
pub fn evaluate_generalization(
    model: &MetaModel,
    test: &LabeledDataset,
    support_pool: Option<&LabeledDataset>,
    n_support: usize,
    runs: usize,
    seed: u64,
    adapt: &AdaptConfig,
    policy: UnseenPolicy,
) -> Result<Vec<GeneralizationRun>, MetaError> {
    if n_support == 0 && model.mode != MetaMode::Zeroshot {
        return Err(MetaError::Config(alloc::format!(
            "{:?} evaluation needs support examples",
            model.mode
        )));
    }
    let mut out = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut rng = seeded(derive_seed(seed, run as u64));
        let (support, eval) = if n_support == 0 || model.mode == MetaMode::Zeroshot {
            (None, test.clone())
        } else if let Some(pool) = support_pool {
            let ep = sample_support_query(pool, n_support, 0, &mut rng)?;
            (Some(ep.support), test.clone())
        } else {
            let (s, rest) = holdout_split_for_testonly(test, n_support, &mut rng)?;
            (Some(s), rest)
        };
        let accuracy = match model.mode {
            MetaMode::Fewshot => {
                let cfg = AdaptConfig {
                    seed: derive_seed(seed ^ adapt.seed, 0x1000 + run as u64),
                    ..adapt.clone()
                };
                let g = fewshot_adapt(model, support.as_ref().expect("support drawn"), &cfg)?;
                let ctx = ClassifyContext {
                    adapter: Some(&g),
                    prototypes: None,
                };
                let preds: Vec<usize> = model.classify_batch(eval.features(), ctx)?.into_iter().map(|p| p.0).collect();
                score(model.source()?.vocab(), &eval, &preds, policy)
            }
            MetaMode::Zeroshot => {
                let preds: Vec<usize> = model
                    .classify_batch(eval.features(), ClassifyContext::default())?
                    .into_iter()
                    .map(|p| p.0)
                    .collect();
                score(model.source()?.vocab(), &eval, &preds, policy)
            }
            MetaMode::IclAlign => {
                let demo = demonstration_prototypes(support.as_ref().expect("support drawn"))?;
                let ctx = ClassifyContext {
                    adapter: None,
                    prototypes: Some(demo.prototypes()),
                };
                let preds: Vec<usize> = model.classify_batch(eval.features(), ctx)?.into_iter().map(|p| p.0).collect();
                score(demo.vocab(), &eval, &preds, policy)
            }
        };
        out.push(GeneralizationRun {
            run,
            n_support,
            accuracy,
        });
    }
    Ok(out)
}
