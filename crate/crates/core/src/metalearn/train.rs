use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::objective::{adapter_objective, fewshot_objective, identity_prototype_objective, zeroshot_objective};
use super::{demonstration_prototypes, IclAlignConfig, MetaConfig, MetaError, MetaMode, MetaModel};
use crate::linalg::Matrix;
use crate::probe::PrototypeSet;
use crate::rng::{derive_seed, seeded, Rng};
use crate::tensor::{AdamHyper, AdamState, LinearGrad, LinearMap, Mlp2};
use crate::treebank::{sample_support_query, LabeledDataset, TreebankError};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub episodes: usize,
    /// Mean query loss of each epoch.
    pub epoch_loss: Vec<f64>,
    /// Languages dropped because they share no concept with the source.
    pub excluded_languages: Vec<String>,
}

/// A training language with labels re-indexed against the source vocabulary.
struct Prepared {
    name: String,
    ds: LabeledDataset,
    /// Dataset concept id -> source concept id.
    remap: Vec<usize>,
}

impl Prepared {
    fn gold(&self, ds: &LabeledDataset) -> Vec<usize> {
        ds.labels().iter().map(|&l| self.remap[l]).collect()
    }
}

fn prepare(
    datasets: &BTreeMap<String, LabeledDataset>,
    source: &PrototypeSet,
    min_sentences: usize,
    log: &mut TrainLog,
) -> Result<Vec<Prepared>, MetaError> {
    let mut out = Vec::new();
    for (name, ds) in datasets {
        let shared = ds.vocab().intersection(source.vocab());
        let kept = crate::treebank::restrict_to_names(ds, &shared);
        if kept.is_empty() {
            log.excluded_languages.push(name.clone());
            continue;
        }
        let available = kept.sentence_ids().len();
        if available < min_sentences {
            return Err(TreebankError::InsufficientSentences {
                needed: min_sentences,
                available,
            }
            .into());
        }
        let remap = kept
            .vocab()
            .names()
            .iter()
            .map(|n| source.vocab().index_of(n).expect("shared"))
            .collect();
        out.push(Prepared {
            name: name.clone(),
            ds: kept,
            remap,
        });
    }
    if out.is_empty() {
        return Err(MetaError::NoLanguages);
    }
    Ok(out)
}

fn check_dims(datasets: &BTreeMap<String, LabeledDataset>) -> Result<usize, MetaError> {
    let mut dims = datasets.values().map(|d| d.dim());
    let n = dims.next().ok_or(MetaError::NoLanguages)?;
    if dims.any(|d| d != n) {
        return Err(MetaError::Config("training languages differ in feature dimension".to_string()));
    }
    Ok(n)
}

fn stack(a: &Matrix, b: &Matrix) -> Matrix {
    let mut data = a.as_slice().to_vec();
    data.extend_from_slice(b.as_slice());
    Matrix::from_vec(a.rows() + b.rows(), a.cols(), data)
}

fn dropout_mask(f: &Mlp2, rows: usize, rng: &mut Rng) -> Option<Vec<f64>> {
    (f.dropout_p() > 0.0).then(|| f.dropout_mask(rows, rng))
}

fn add_orthogonality(g: &LinearMap, grad: &mut LinearGrad, weight: f64) {
    if weight > 0.0 {
        let (_, pg) = g.orthogonality_penalty();
        for (a, b) in grad.weight.as_mut_slice().iter_mut().zip(pg.as_slice()) {
            *a += weight * b;
        }
    }
}

/// Episodic training of `f` and one adapter per language against frozen
/// source prototypes.
///
/// Each episode first fits the language's adapter on the support set (one
/// Adam step), then updates `f` and the adapter together on the query set.
pub fn meta_train_fewshot(
    datasets: &BTreeMap<String, LabeledDataset>,
    source: &PrototypeSet,
    cfg: &MetaConfig,
) -> Result<(MetaModel, TrainLog), MetaError> {
    cfg.validate()?;
    if cfg.m != source.dim() {
        return Err(MetaError::Config(alloc::format!(
            "m = {} but source prototypes have dimension {}",
            cfg.m,
            source.dim()
        )));
    }
    let n = check_dims(datasets)?;
    let mut log = TrainLog::default();
    let max_support = cfg.support_sizes.iter().copied().max().unwrap_or(0);
    let langs = prepare(datasets, source, max_support + cfg.n_query, &mut log)?;

    let mut init_rng = seeded(derive_seed(cfg.seed, 0));
    let mut episode_rng = seeded(derive_seed(cfg.seed, 1));
    let mut dropout_rng = seeded(derive_seed(cfg.seed, 2));
    let mut f = Mlp2::new(n, cfg.h, cfg.m, cfg.dropout, &mut init_rng);
    let hyper = AdamHyper::new(cfg.lr, cfg.weight_decay);
    let mut f_adam = AdamState::new(hyper);
    let mut g: Vec<LinearMap> = langs.iter().map(|_| LinearMap::identity(cfg.m, true)).collect();
    let mut g_adam: Vec<AdamState> = langs.iter().map(|_| AdamState::new(hyper)).collect();
    let protos = source.prototypes();

    let mut order: Vec<usize> = (0..langs.len()).collect();
    for _ in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for _ in 0..cfg.episodes_per_language_per_epoch {
            order.shuffle(&mut episode_rng);
            for &li in &order {
                let lang = &langs[li];
                let n_support = cfg.support_sizes[episode_rng.random_range(0..cfg.support_sizes.len())];
                let ep = sample_support_query(&lang.ds, n_support, cfg.n_query, &mut episode_rng)?;

                let mask = dropout_mask(&f, ep.support.len(), &mut dropout_rng);
                let z = f.forward_cached(ep.support.features(), mask).output;
                let (_, mut gg) = adapter_objective(&g[li], protos, &z, &lang.gold(&ep.support));
                add_orthogonality(&g[li], &mut gg, cfg.orthogonality_weight);
                g_adam[li].step(&mut g[li].param_slices_mut(), &gg.slices());

                let mask = dropout_mask(&f, ep.query.len(), &mut dropout_rng);
                let mut q = fewshot_objective(&f, &g[li], protos, ep.query.features(), &lang.gold(&ep.query), mask);
                add_orthogonality(&g[li], &mut q.g, cfg.orthogonality_weight);
                f_adam.step(&mut f.param_slices_mut(), &q.f.slices());
                g_adam[li].step(&mut g[li].param_slices_mut(), &q.g.slices());
                loss_sum += q.loss;
                count += 1;
                log.episodes += 1;
            }
        }
        log.epoch_loss.push(loss_sum / count as f64);
        if !loss_sum.is_finite() {
            return Err(MetaError::NonFinite(log.episodes));
        }
    }
    let model = MetaModel {
        mode: MetaMode::Fewshot,
        f,
        g: langs.iter().map(|l| l.name.clone()).zip(g).collect(),
        h: None,
        source: Some(source.clone()),
    };
    Ok((model, log))
}

/// Episodic training of `f` and the prototype map `h`; support and query
/// sentences of an episode form one batch since there is nothing to adapt.
pub fn meta_train_zeroshot(
    datasets: &BTreeMap<String, LabeledDataset>,
    source: &PrototypeSet,
    cfg: &MetaConfig,
) -> Result<(MetaModel, TrainLog), MetaError> {
    cfg.validate()?;
    if cfg.m != source.dim() {
        return Err(MetaError::Config(alloc::format!(
            "m = {} but source prototypes have dimension {}",
            cfg.m,
            source.dim()
        )));
    }
    let n = check_dims(datasets)?;
    let mut log = TrainLog::default();
    let max_support = cfg.support_sizes.iter().copied().max().unwrap_or(0);
    let langs = prepare(datasets, source, max_support + cfg.n_query, &mut log)?;

    let mut init_rng = seeded(derive_seed(cfg.seed, 0));
    let mut episode_rng = seeded(derive_seed(cfg.seed, 1));
    let mut dropout_rng = seeded(derive_seed(cfg.seed, 2));
    let mut f = Mlp2::new(n, cfg.h, cfg.m, cfg.dropout, &mut init_rng);
    let mut h = LinearMap::identity(cfg.m, true);
    let hyper = AdamHyper::new(cfg.lr, cfg.weight_decay);
    let mut f_adam = AdamState::new(hyper);
    let mut h_adam = AdamState::new(hyper);
    let protos = source.prototypes();

    let mut order: Vec<usize> = (0..langs.len()).collect();
    for _ in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for _ in 0..cfg.episodes_per_language_per_epoch {
            order.shuffle(&mut episode_rng);
            for &li in &order {
                let lang = &langs[li];
                let n_support = cfg.support_sizes[episode_rng.random_range(0..cfg.support_sizes.len())];
                let ep = sample_support_query(&lang.ds, n_support, cfg.n_query, &mut episode_rng)?;
                let x = stack(ep.support.features(), ep.query.features());
                let mut gold = lang.gold(&ep.support);
                gold.extend(lang.gold(&ep.query));
                let mask = dropout_mask(&f, x.rows(), &mut dropout_rng);
                let r = zeroshot_objective(&f, &h, protos, &x, &gold, mask);
                f_adam.step(&mut f.param_slices_mut(), &r.f.slices());
                h_adam.step(&mut h.param_slices_mut(), &r.h.slices());
                loss_sum += r.loss;
                count += 1;
                log.episodes += 1;
            }
        }
        log.epoch_loss.push(loss_sum / count as f64);
        if !loss_sum.is_finite() {
            return Err(MetaError::NonFinite(log.episodes));
        }
    }
    let model = MetaModel {
        mode: MetaMode::Zeroshot,
        f,
        g: BTreeMap::new(),
        h: Some(h),
        source: Some(source.clone()),
    };
    Ok((model, log))
}

/// Representations of one language under one demonstration context:
/// `demo` holds the demonstration tokens, `queries` the tokens tagged in
/// that context.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextEpisodeSource {
    pub language: String,
    pub demo: LabeledDataset,
    pub queries: LabeledDataset,
}

/// Trains `f` so that query representations land on prototypes taken
/// directly from demonstration means. Each episode picks one language and
/// one of its demonstration contexts.
pub fn icl_align_train(
    sources: &[ContextEpisodeSource],
    cfg: &IclAlignConfig,
) -> Result<(MetaModel, TrainLog), MetaError> {
    cfg.validate()?;
    let first = sources.first().ok_or(MetaError::NoLanguages)?;
    let n = first.demo.dim();
    if sources.iter().any(|s| s.demo.dim() != n || s.queries.dim() != n) {
        return Err(MetaError::Config("contexts differ in feature dimension".to_string()));
    }
    let mut by_language: BTreeMap<&str, Vec<(Matrix, &LabeledDataset, Vec<Option<usize>>)>> = BTreeMap::new();
    for s in sources {
        let ps = demonstration_prototypes(&s.demo)?;
        let remap = s.queries.vocab().names().iter().map(|n| ps.vocab().index_of(n)).collect();
        by_language
            .entry(s.language.as_str())
            .or_default()
            .push((ps.prototypes().clone(), &s.queries, remap));
    }
    let languages: Vec<&str> = by_language.keys().copied().collect();

    let mut init_rng = seeded(derive_seed(cfg.seed, 0));
    let mut episode_rng = seeded(derive_seed(cfg.seed, 1));
    let mut dropout_rng = seeded(derive_seed(cfg.seed, 2));
    let mut f = Mlp2::new(n, cfg.hidden, n, cfg.dropout, &mut init_rng);
    let mut adam = AdamState::new(AdamHyper::new(cfg.lr, cfg.weight_decay));
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..languages.len()).collect();

    for _ in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for _ in 0..cfg.episodes_per_language_per_epoch {
            order.shuffle(&mut episode_rng);
            for &li in &order {
                let contexts = &by_language[languages[li]];
                let (protos, queries, remap) = &contexts[episode_rng.random_range(0..contexts.len())];
                let ids = queries.sentence_ids();
                let take = cfg.n_query.min(ids.len());
                let picked: Vec<usize> = ids.choose_multiple(&mut episode_rng, take).copied().collect();
                let q = queries.select_sentences(&picked);
                let rows: Vec<usize> = (0..q.len()).filter(|&i| remap[q.labels()[i]].is_some()).collect();
                if rows.is_empty() {
                    continue;
                }
                let x = q.features().select_rows(&rows);
                let gold: Vec<usize> = rows.iter().map(|&i| remap[q.labels()[i]].expect("filtered")).collect();
                let mask = dropout_mask(&f, x.rows(), &mut dropout_rng);
                let (loss, grad) = identity_prototype_objective(&f, protos, &x, &gold, mask);
                adam.step(&mut f.param_slices_mut(), &grad.slices());
                loss_sum += loss;
                count += 1;
                log.episodes += 1;
            }
        }
        log.epoch_loss.push(if count == 0 { 0.0 } else { loss_sum / count as f64 });
        if !loss_sum.is_finite() {
            return Err(MetaError::NonFinite(log.episodes));
        }
    }
    let model = MetaModel {
        mode: MetaMode::IclAlign,
        f,
        g: BTreeMap::new(),
        h: None,
        source: None,
    };
    Ok((model, log))
}
