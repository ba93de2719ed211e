//! Linear prototype probe.
//!
//! A linear map `A: R^n -> R^m` is learned so that each sample lands
//! closest (in squared Euclidean distance) to the projected mean of its own
//! concept. Because `A` is linear, the prototype of concept `k` is exactly
//! `A mu_k`, so class means are computed once and prototypes follow `A`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::rng::{derive_seed, seeded};
use crate::tensor::{argmax, proto_logits, proto_nll_batch, softmax, AdamHyper, AdamState, LinearMap};
use crate::treebank::{ConceptVocab, LabeledDataset, TreebankError};

#[derive(Debug, Error, PartialEq)]
pub enum ProbeError {
    #[error("probe configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] TreebankError),
    #[error("training diverged at epoch {0}")]
    NonFinite(usize),
}

/// Projected class prototypes together with the map and raw means that
/// produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    transform: LinearMap,
    class_means: Matrix,
    prototypes: Matrix,
    vocab: ConceptVocab,
}

impl PrototypeSet {
    /// Projects `class_means` (`K x n`) through `transform`.
    pub fn new(transform: LinearMap, class_means: Matrix, vocab: ConceptVocab) -> Self {
        assert_eq!(class_means.rows(), vocab.len(), "one mean per concept");
        assert_eq!(class_means.cols(), transform.input_dim(), "mean dim");
        let prototypes = transform.forward(&class_means);
        Self {
            transform,
            class_means,
            prototypes,
            vocab,
        }
    }

    pub fn transform(&self) -> &LinearMap {
        &self.transform
    }

    pub fn class_means(&self) -> &Matrix {
        &self.class_means
    }

    pub fn prototypes(&self) -> &Matrix {
        &self.prototypes
    }

    pub fn vocab(&self) -> &ConceptVocab {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    /// Prototype space dimension `m`.
    pub fn dim(&self) -> usize {
        self.prototypes.cols()
    }

    /// Keeps only the named concepts, in the order given.
    pub fn restrict(&self, names: &[String]) -> Option<PrototypeSet> {
        let idx: Option<Vec<usize>> = names.iter().map(|n| self.vocab.index_of(n)).collect();
        let idx = idx?;
        let vocab = ConceptVocab::from_counts(idx.iter().map(|&i| (self.vocab.name(i), self.vocab.counts()[i])));
        // from_counts sorts; keep rows aligned with the sorted vocabulary
        let idx: Vec<usize> = vocab
            .names()
            .iter()
            .map(|n| self.vocab.index_of(n).expect("present"))
            .collect();
        Some(PrototypeSet {
            transform: self.transform.clone(),
            class_means: self.class_means.select_rows(&idx),
            prototypes: self.prototypes.select_rows(&idx),
            vocab,
        })
    }

    /// Projects a raw feature vector into prototype space.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.transform.apply(x)
    }
}

/// Probe hyperparameters. Defaults follow the reference setup: Adam with
/// learning rate 1e-4, weight decay 1e-6, batch size 8, 20 epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub m: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub min_count: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            m: 32,
            lr: 1e-4,
            weight_decay: 1e-6,
            batch_size: 8,
            epochs: 20,
            seed: 0,
            min_count: crate::treebank::MIN_CONCEPT_COUNT,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), ProbeError> {
        let bad = |m: &str| Err(ProbeError::Config(m.to_string()));
        if self.m == 0 {
            return bad("m must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive and finite");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        Ok(())
    }
}

/// `c_k = A mu_k`, with `mu_k` the mean feature of concept `k` in `ds`.
pub fn compute_prototypes(transform: &LinearMap, ds: &LabeledDataset) -> Result<PrototypeSet, ProbeError> {
    if transform.input_dim() != ds.dim() {
        return Err(ProbeError::Config(alloc::format!(
            "transform expects dim {}, dataset has {}",
            transform.input_dim(),
            ds.dim()
        )));
    }
    let means = ds.class_means()?;
    Ok(PrototypeSet::new(transform.clone(), means, ds.vocab().clone()))
}

/// Probabilities over concepts and the predicted concept id.
pub fn classify(ps: &PrototypeSet, x: &[f64]) -> (usize, Vec<f64>) {
    let logits = proto_logits(&ps.project(x), &ps.prototypes);
    (argmax(&logits), softmax(&logits))
}

/// How samples whose gold concept is unknown to the classifier are scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnseenPolicy {
    /// Counted as errors.
    #[default]
    Misclassified,
    /// Left out of the denominator.
    Skip,
}

/// Fraction of samples whose predicted concept name equals the gold name.
pub fn evaluate_accuracy(ps: &PrototypeSet, ds: &LabeledDataset, policy: UnseenPolicy) -> f64 {
    accuracy_with(ps.vocab(), ds, policy, |x| classify(ps, x).0)
}

/// Shared scoring loop: `predict` returns an index into `vocab`.
pub fn accuracy_with(
    vocab: &ConceptVocab,
    ds: &LabeledDataset,
    policy: UnseenPolicy,
    mut predict: impl FnMut(&[f64]) -> usize,
) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for i in 0..ds.len() {
        match vocab.index_of(ds.label_name(i)) {
            Some(gold) => {
                total += 1;
                if predict(ds.feature(i)) == gold {
                    correct += 1;
                }
            }
            None => {
                if policy == UnseenPolicy::Misclassified {
                    total += 1;
                }
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    /// Prototypes from the epoch with the best dev accuracy.
    pub prototypes: PrototypeSet,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Mean prototype NLL of a batch and its gradient w.r.t. the weight of
/// `map`. Both the projected samples `x A^T` and the prototypes `mu A^T`
/// depend on `A`, so both paths contribute.
pub fn probe_objective(map: &LinearMap, x: &Matrix, means: &Matrix, gold: &[usize]) -> (f64, Matrix) {
    let z = map.forward(x);
    let c = map.forward(means);
    let pl = proto_nll_batch(&z, &c, gold);
    let mut g = LinearMap::weight_grad(x, &pl.grad_z);
    let gc = LinearMap::weight_grad(means, &pl.grad_prototypes);
    g.as_mut_slice().iter_mut().zip(gc.as_slice()).for_each(|(a, b)| *a += b);
    (pl.loss, g)
}

/// Trains the probe with minibatch Adam on the prototype NLL and keeps the
/// epoch with the highest dev accuracy (earliest on ties).
///
/// `train` must already be rare-filtered; every concept in its vocabulary
/// needs at least one sample.
pub fn train_probe(train: &LabeledDataset, dev: &LabeledDataset, cfg: &ProbeConfig) -> Result<ProbeOutcome, ProbeError> {
    cfg.validate()?;
    if train.is_empty() || train.vocab().is_empty() {
        return Err(ProbeError::Config("empty training set".to_string()));
    }
    if let Some(pos) = train.vocab().counts().iter().position(|&c| c == 0) {
        return Err(ProbeError::Config(alloc::format!(
            "concept {:?} has no training samples",
            train.vocab().name(pos)
        )));
    }
    let means = train.class_means()?;
    let mut init_rng = seeded(derive_seed(cfg.seed, 0));
    let mut shuffle_rng = seeded(derive_seed(cfg.seed, 1));
    let mut map = LinearMap::uniform(train.dim(), cfg.m, false, &mut init_rng);
    let mut adam = AdamState::new(AdamHyper::new(cfg.lr, cfg.weight_decay));

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, LinearMap)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let x = train.features().select_rows(chunk);
            let gold: Vec<usize> = chunk.iter().map(|&i| train.labels()[i]).collect();
            let (loss, g) = probe_objective(&map, &x, &means, &gold);
            adam.step(&mut map.param_slices_mut(), &[g.as_slice()]);
            loss_sum += loss;
            batches += 1;
        }
        if !map.is_finite() {
            return Err(ProbeError::NonFinite(epoch));
        }
        let ps = PrototypeSet::new(map.clone(), means.clone(), train.vocab().clone());
        let dev_accuracy = evaluate_accuracy(&ps, dev, UnseenPolicy::Misclassified);
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            dev_accuracy,
        });
        if best.as_ref().is_none_or(|(acc, _, _)| dev_accuracy > *acc) {
            best = Some((dev_accuracy, epoch, map.clone()));
        }
    }
    let (_, best_epoch, map) = best.expect("at least one epoch");
    Ok(ProbeOutcome {
        prototypes: PrototypeSet::new(map, means, train.vocab().clone()),
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::squared_distance;
    use crate::rng::seeded;
    use crate::treebank::{Provenance, Split, Task};
    use alloc::vec;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn prov() -> Provenance {
        Provenance {
            language: "xx".to_string(),
            task: Task::Pos,
            split: Split::Train,
        }
    }

    fn dataset(rows: Vec<Vec<f64>>, labels: &[&str]) -> LabeledDataset {
        let n = rows.len();
        LabeledDataset::from_named(Matrix::from_rows(&rows), labels, (0..n).collect(), prov()).unwrap()
    }

    #[test]
    fn identity_prototype_is_class_mean() {
        let ds = dataset(vec![vec![1.0, 0.0], vec![3.0, 0.0]], &["k", "k"]);
        let ps = compute_prototypes(&LinearMap::identity(2, false), &ds).unwrap();
        assert_eq!(ps.prototypes().row(0), &[2.0, 0.0]);
    }

    #[test]
    fn prototypes_are_linear_in_the_map() {
        let ds = dataset(
            vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 3.0]],
            &["a", "b", "a"],
        );
        let one = compute_prototypes(&LinearMap::identity(2, false), &ds).unwrap();
        let mut w = Matrix::identity(2);
        w.scale(2.0);
        let two = compute_prototypes(&LinearMap::from_parts(w, None), &ds).unwrap();
        for (a, b) in one.prototypes().as_slice().iter().zip(two.prototypes().as_slice()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn random_map_matches_project_then_average() {
        let mut rng = seeded(5);
        let map = LinearMap::uniform(4, 3, false, &mut rng);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let ds = dataset(rows.clone(), &["c"; 5]);
        let ps = compute_prototypes(&map, &ds).unwrap();
        // oracle: project each sample, then average
        let mut avg = vec![0.0; 3];
        for r in &rows {
            for (a, p) in avg.iter_mut().zip(map.apply(r)) {
                *a += p / 5.0;
            }
        }
        for (a, b) in avg.iter().zip(ps.prototypes().row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn one_d(points: &[f64], golds: &[&str]) -> (PrototypeSet, LabeledDataset) {
        let ps = PrototypeSet::new(
            LinearMap::identity(1, false),
            Matrix::from_vec(2, 1, vec![-1.0, 1.0]),
            ConceptVocab::from_counts([("a", 1), ("b", 1)]),
        );
        let ds = dataset(points.iter().map(|&p| vec![p]).collect(), golds);
        (ps, ds)
    }

    #[test]
    fn nearest_prototype_hand_oracle() {
        let pts = [-2.0, -0.5, 0.4, 3.0];
        let (ps, ds) = one_d(&pts, &["a", "a", "b", "b"]);
        assert_eq!(evaluate_accuracy(&ps, &ds, UnseenPolicy::Misclassified), 1.0);
        let (ps, ds) = one_d(&pts, &["a", "b", "b", "b"]);
        assert_eq!(evaluate_accuracy(&ps, &ds, UnseenPolicy::Misclassified), 0.75);
    }

    #[test]
    fn unseen_gold_counts_as_error() {
        let (ps, ds) = one_d(&[-1.0, 1.0], &["zz", "yy"]);
        assert_eq!(evaluate_accuracy(&ps, &ds, UnseenPolicy::Misclassified), 0.0);
        let (ps, ds) = one_d(&[-1.0, 1.0, 1.0], &["a", "b", "zz"]);
        assert!((evaluate_accuracy(&ps, &ds, UnseenPolicy::Misclassified) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(evaluate_accuracy(&ps, &ds, UnseenPolicy::Skip), 1.0);
    }

    #[test]
    fn points_at_their_means_are_perfect() {
        let ds = dataset(
            vec![vec![0.0, 5.0], vec![5.0, 0.0], vec![-5.0, -5.0], vec![0.0, 5.0]],
            &["a", "b", "c", "a"],
        );
        let ps = compute_prototypes(&LinearMap::identity(2, false), &ds).unwrap();
        assert_eq!(evaluate_accuracy(&ps, &ds, UnseenPolicy::Misclassified), 1.0);
    }

    fn separable(seed: u64, per_class: usize) -> LabeledDataset {
        let mut rng = seeded(seed);
        let centers = [[3.0, 0.0, 0.0, 1.0], [0.0, 3.0, 0.0, -1.0], [0.0, 0.0, 3.0, 0.0]];
        let names = ["x", "y", "z"];
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..per_class {
            for (c, name) in centers.iter().zip(names) {
                rows.push(c.iter().map(|v| v + 0.3 * rng.random_range(-1.0..1.0)).collect());
                labels.push(name);
            }
        }
        dataset(rows, &labels)
    }

    #[test]
    fn training_on_separable_data() {
        let train = separable(1, 60);
        let dev = separable(2, 20);
        let cfg = ProbeConfig {
            m: 2,
            lr: 1e-2,
            epochs: 8,
            seed: 3,
            ..ProbeConfig::default()
        };
        let out = train_probe(&train, &dev, &cfg).unwrap();
        assert_eq!(out.history.len(), 8);
        let losses: Vec<f64> = out.history.iter().map(|h| h.train_loss).collect();
        for w in losses[1..].windows(2) {
            assert!(w[1] <= w[0] + 1e-3, "{losses:?}");
        }
        assert!(evaluate_accuracy(&out.prototypes, &train, UnseenPolicy::Misclassified) >= 0.99);
        // best epoch is the earliest maximum
        let best = out.history.iter().map(|h| h.dev_accuracy).fold(0.0, f64::max);
        let first = out.history.iter().find(|h| h.dev_accuracy == best).unwrap().epoch;
        assert_eq!(out.best_epoch, first);
        // linearity invariant of the returned set
        let again = out.prototypes.transform().forward(out.prototypes.class_means());
        for (a, b) in again.as_slice().iter().zip(out.prototypes.prototypes().as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn training_is_bit_reproducible() {
        let train = separable(4, 10);
        let dev = separable(5, 5);
        let cfg = ProbeConfig {
            m: 3,
            epochs: 3,
            seed: 11,
            ..ProbeConfig::default()
        };
        let a = train_probe(&train, &dev, &cfg).unwrap();
        let b = train_probe(&train, &dev, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_class_is_config_error() {
        let ds = separable(1, 3);
        let (filtered, _) = crate::treebank::filter_rare_concepts(&ds, 4);
        let r = train_probe(&filtered, &ds, &ProbeConfig::default());
        assert!(matches!(r, Err(ProbeError::Config(_))));
    }

    #[test]
    fn classify_is_nearest_projected_prototype() {
        let mut rng = seeded(9);
        let ds = separable(7, 5);
        let map = LinearMap::uniform(4, 3, false, &mut rng);
        let ps = compute_prototypes(&map, &ds).unwrap();
        for _ in 0..200 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-4.0..4.0)).collect();
            let (pred, probs) = classify(&ps, &x);
            let z = ps.project(&x);
            let d: Vec<f64> = ps.prototypes().row_iter().map(|c| squared_distance(&z, c)).collect();
            let best = (0..d.len()).fold(0, |b, k| if d[k] < d[b] { k } else { b });
            assert_eq!(pred, best);
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
