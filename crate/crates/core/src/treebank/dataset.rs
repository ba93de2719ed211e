use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::conllu::{Head, Sentence};
use super::TreebankError;
use crate::featurestore::FeatureStore;
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Word classes (UPOS).
    Pos,
    /// Grammatical relations (universal deprels).
    Rel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub language: String,
    pub task: Task,
    pub split: Split,
}

/// Lexicographically ordered concept names with their sample counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptVocab {
    names: Vec<String>,
    counts: Vec<usize>,
}

impl ConceptVocab {
    /// Builds a vocabulary from `(name, count)` pairs; duplicate names are
    /// merged.
    pub fn from_counts<S: AsRef<str>>(pairs: impl IntoIterator<Item = (S, usize)>) -> Self {
        let mut map: BTreeMap<String, usize> = BTreeMap::new();
        for (name, c) in pairs {
            *map.entry(name.as_ref().to_string()).or_default() += c;
        }
        let (names, counts) = map.into_iter().unzip();
        Self { names, counts }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    /// Concepts present in both vocabularies, in lexicographic order.
    pub fn intersection(&self, other: &ConceptVocab) -> Vec<String> {
        self.names
            .iter()
            .filter(|n| other.index_of(n).is_some())
            .cloned()
            .collect()
    }
}

/// Feature/label pairs for one language, task and split.
///
/// `sentences[i]` is the index of the treebank sentence sample `i` came
/// from; sampling always happens at sentence granularity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    sentences: Vec<usize>,
    vocab: ConceptVocab,
    provenance: Provenance,
}

impl LabeledDataset {
    /// Builds a dataset from string labels; the vocabulary is derived from
    /// the labels themselves.
    pub fn from_named(
        features: Matrix,
        labels: &[&str],
        sentences: Vec<usize>,
        provenance: Provenance,
    ) -> Result<Self, TreebankError> {
        let vocab = ConceptVocab::from_counts(labels.iter().map(|l| (*l, 1)));
        let ids = labels
            .iter()
            .map(|l| vocab.index_of(l).expect("label in vocab"))
            .collect();
        Self::new(features, ids, sentences, vocab, provenance)
    }

    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        sentences: Vec<usize>,
        vocab: ConceptVocab,
        provenance: Provenance,
    ) -> Result<Self, TreebankError> {
        if features.rows() != labels.len() || sentences.len() != labels.len() {
            return Err(TreebankError::Invalid(alloc::format!(
                "{} feature rows, {} labels, {} sentence ids",
                features.rows(),
                labels.len(),
                sentences.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= vocab.len()) {
            return Err(TreebankError::Invalid(alloc::format!(
                "label id {bad} outside vocabulary of size {}",
                vocab.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            sentences,
            vocab,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sentence_of(&self) -> &[usize] {
        &self.sentences
    }

    pub fn vocab(&self) -> &ConceptVocab {
        &self.vocab
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn label_name(&self, i: usize) -> &str {
        self.vocab.name(self.labels[i])
    }

    /// Distinct sentence indices in first-appearance order.
    pub fn sentence_ids(&self) -> Vec<usize> {
        let mut seen = alloc::collections::BTreeSet::new();
        self.sentences.iter().copied().filter(|s| seen.insert(*s)).collect()
    }

    /// Sample indices grouped by sentence, in first-appearance order.
    pub fn by_sentence(&self) -> Vec<(usize, Vec<usize>)> {
        let mut order: Vec<usize> = Vec::new();
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &s) in self.sentences.iter().enumerate() {
            groups
                .entry(s)
                .or_insert_with(|| {
                    order.push(s);
                    Vec::new()
                })
                .push(i);
        }
        order
            .into_iter()
            .map(|s| {
                let g = groups.remove(&s).expect("group");
                (s, g)
            })
            .collect()
    }

    /// Samples at the given positions, keeping the vocabulary and
    /// provenance. Counts in the vocabulary are recomputed.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        let labels: Vec<usize> = idx.iter().map(|&i| self.labels[i]).collect();
        let mut counts = alloc::vec![0usize; self.vocab.len()];
        for &l in &labels {
            counts[l] += 1;
        }
        LabeledDataset {
            features: self.features.select_rows(idx),
            labels,
            sentences: idx.iter().map(|&i| self.sentences[i]).collect(),
            vocab: ConceptVocab {
                names: self.vocab.names.clone(),
                counts,
            },
            provenance: self.provenance.clone(),
        }
    }

    /// All samples from the listed sentences, in the given sentence order.
    pub fn select_sentences(&self, sentence_ids: &[usize]) -> LabeledDataset {
        let groups: BTreeMap<usize, Vec<usize>> = self.by_sentence().into_iter().collect();
        let idx: Vec<usize> = sentence_ids
            .iter()
            .filter_map(|s| groups.get(s))
            .flatten()
            .copied()
            .collect();
        self.subset(&idx)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.provenance.split = split;
        self
    }

    /// Per-concept mean feature vectors (`K x n`). Empty concepts yield an
    /// error naming the concept.
    pub fn class_means(&self) -> Result<Matrix, TreebankError> {
        let k = self.vocab.len();
        let mut sums = Matrix::zeros(k, self.dim());
        let mut counts = alloc::vec![0usize; k];
        for (i, &l) in self.labels.iter().enumerate() {
            counts[l] += 1;
            for (s, x) in sums.row_mut(l).iter_mut().zip(self.features.row(i)) {
                *s += x;
            }
        }
        for (c, &n) in counts.iter().enumerate() {
            if n == 0 {
                return Err(TreebankError::EmptyConcept(self.vocab.name(c).to_string()));
            }
            let inv = 1.0 / n as f64;
            sums.row_mut(c).iter_mut().for_each(|s| *s *= inv);
        }
        Ok(sums)
    }
}

/// How relation samples treat arcs attached to the ROOT pseudo-node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootArcs {
    /// No sample for `root` arcs; there is no head word to subtract.
    #[default]
    Exclude,
    /// Use the sentence-mean vector as the ROOT representation.
    SentenceMean,
}

fn check_alignment(sentences: &[Sentence], store: &FeatureStore) -> Result<(), TreebankError> {
    if sentences.len() != store.n_sentences() {
        return Err(TreebankError::Alignment {
            sentence_id: sentences
                .get(store.n_sentences())
                .map_or_else(|| "<end of treebank>".to_string(), |s| s.sentence_id.clone()),
            message: alloc::format!(
                "treebank has {} sentences, store has {}",
                sentences.len(),
                store.n_sentences()
            ),
        });
    }
    for (i, s) in sentences.iter().enumerate() {
        let v = store.get_sentence(i).expect("index checked");
        if v.n_tokens() != s.len() {
            return Err(TreebankError::Alignment {
                sentence_id: s.sentence_id.clone(),
                message: alloc::format!("{} tokens in treebank, {} in store", s.len(), v.n_tokens()),
            });
        }
    }
    Ok(())
}

/// One `(h_i, upos_i)` pair per token, sentence order preserved.
pub fn build_pos_dataset(
    sentences: &[Sentence],
    store: &FeatureStore,
    language: &str,
    split: Split,
) -> Result<LabeledDataset, TreebankError> {
    check_alignment(sentences, store)?;
    let n = store.n_dim();
    let mut data = Vec::new();
    let mut labels: Vec<&str> = Vec::new();
    let mut sent_ids = Vec::new();
    for (si, s) in sentences.iter().enumerate() {
        let v = store.get_sentence(si).expect("aligned");
        for (ti, t) in s.tokens.iter().enumerate() {
            data.extend(v.token(ti).iter().map(|&x| f64::from(x)));
            labels.push(&t.upos);
            sent_ids.push(si);
        }
    }
    let rows = labels.len();
    LabeledDataset::from_named(
        Matrix::from_vec(rows, n, data),
        &labels,
        sent_ids,
        Provenance {
            language: language.to_string(),
            task: Task::Pos,
            split,
        },
    )
}

/// One `(h_head - h_dep, deprel_dep)` pair per dependency arc.
pub fn build_rel_dataset(
    sentences: &[Sentence],
    store: &FeatureStore,
    language: &str,
    split: Split,
    root_arcs: RootArcs,
) -> Result<LabeledDataset, TreebankError> {
    check_alignment(sentences, store)?;
    let n = store.n_dim();
    let mut data = Vec::new();
    let mut labels: Vec<&str> = Vec::new();
    let mut sent_ids = Vec::new();
    for (si, s) in sentences.iter().enumerate() {
        let v = store.get_sentence(si).expect("aligned");
        let mean: Option<Vec<f64>> = match root_arcs {
            RootArcs::Exclude => None,
            RootArcs::SentenceMean => {
                let mut m = alloc::vec![0.0; n];
                for ti in 0..v.n_tokens() {
                    for (a, &x) in m.iter_mut().zip(v.token(ti)) {
                        *a += f64::from(x);
                    }
                }
                let inv = 1.0 / v.n_tokens() as f64;
                m.iter_mut().for_each(|a| *a *= inv);
                Some(m)
            }
        };
        for (ti, t) in s.tokens.iter().enumerate() {
            let dep = v.token(ti);
            match (t.head, &mean) {
                (Head::Token(h), _) => {
                    let head = v.token(h);
                    data.extend(head.iter().zip(dep).map(|(&a, &b)| f64::from(a) - f64::from(b)));
                }
                (Head::Root, Some(m)) => {
                    data.extend(m.iter().zip(dep).map(|(&a, &b)| a - f64::from(b)));
                }
                (Head::Root, None) => continue,
            }
            labels.push(&t.deprel);
            sent_ids.push(si);
        }
    }
    let rows = labels.len();
    LabeledDataset::from_named(
        Matrix::from_vec(rows, n, data),
        &labels,
        sent_ids,
        Provenance {
            language: language.to_string(),
            task: Task::Rel,
            split,
        },
    )
}

/// Drops concepts with fewer than `min_count` samples and re-indexes the
/// remaining labels against the reduced vocabulary.
pub fn filter_rare_concepts(ds: &LabeledDataset, min_count: usize) -> (LabeledDataset, ConceptVocab) {
    let mut counts = alloc::vec![0usize; ds.vocab.len()];
    for &l in &ds.labels {
        counts[l] += 1;
    }
    restrict_to(ds, |id| counts[id] >= min_count)
}

/// Keeps only samples whose concept is listed in `names`, re-indexing
/// labels against the surviving (still lexicographic) vocabulary.
pub fn restrict_to_names(ds: &LabeledDataset, names: &[String]) -> LabeledDataset {
    restrict_to(ds, |id| names.iter().any(|n| n == ds.vocab.name(id))).0
}

fn restrict_to(ds: &LabeledDataset, keep: impl Fn(usize) -> bool) -> (LabeledDataset, ConceptVocab) {
    let mut remap = alloc::vec![usize::MAX; ds.vocab.len()];
    let mut names = Vec::new();
    for id in 0..ds.vocab.len() {
        if keep(id) {
            remap[id] = names.len();
            names.push(ds.vocab.names[id].clone());
        }
    }
    let idx: Vec<usize> = (0..ds.len()).filter(|&i| remap[ds.labels[i]] != usize::MAX).collect();
    let labels: Vec<usize> = idx.iter().map(|&i| remap[ds.labels[i]]).collect();
    let mut counts = alloc::vec![0usize; names.len()];
    for &l in &labels {
        counts[l] += 1;
    }
    let vocab = ConceptVocab { names, counts };
    let out = LabeledDataset {
        features: ds.features.select_rows(&idx),
        labels,
        sentences: idx.iter().map(|&i| ds.sentences[i]).collect(),
        vocab: vocab.clone(),
        provenance: ds.provenance.clone(),
    };
    (out, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurestore::StoreMeta;
    use crate::treebank::conllu::parse_conllu;
    use alloc::vec;

    fn prov() -> Provenance {
        Provenance {
            language: "xx".to_string(),
            task: Task::Pos,
            split: Split::Train,
        }
    }

    fn store_for(sentences: &[Sentence], n_dim: usize) -> FeatureStore {
        let mut k = 0.0f32;
        let blocks = sentences
            .iter()
            .map(|s| {
                (0..s.len() * n_dim)
                    .map(|_| {
                        k += 1.0;
                        k
                    })
                    .collect()
            })
            .collect();
        FeatureStore::new(
            StoreMeta {
                language: "xx".to_string(),
                model_name: "toy".to_string(),
                layer: 0,
                treebank_file: "toy.conllu".to_string(),
                pooling: "mean".to_string(),
            },
            n_dim,
            blocks,
        )
        .unwrap()
    }

    const TOY: &str = "\
1\tA\t_\tDET\t_\t_\t2\tdet\t_\t_
2\tb\t_\tNOUN\t_\t_\t0\troot\t_\t_

1\tc\t_\tPRON\t_\t_\t2\tnsubj\t_\t_
2\td\t_\tVERB\t_\t_\t0\troot\t_\t_
3\te\t_\tNOUN\t_\t_\t2\tobj\t_\t_

1\tf\t_\tVERB\t_\t_\t0\troot\t_\t_
2\tg\t_\tADV\t_\t_\t1\tadvmod:emph\t_\t_
3\th\t_\tPUNCT\t_\t_\t1\tpunct\t_\t_
4\ti\t_\tPUNCT\t_\t_\t1\tpunct\t_\t_
";

    #[test]
    fn pos_dataset_one_pair_per_token() {
        let s = parse_conllu(TOY).unwrap();
        let st = store_for(&s, 2);
        let ds = build_pos_dataset(&s, &st, "xx", Split::Train).unwrap();
        assert_eq!(ds.len(), 9);
        assert_eq!(ds.label_name(0), "DET");
        assert_eq!(ds.feature(0), &[1.0, 2.0]);
        assert_eq!(ds.label_name(8), "PUNCT");
        assert_eq!(ds.sentence_of(), &[0, 0, 1, 1, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn rel_feature_is_head_minus_dependent() {
        let s = parse_conllu(TOY).unwrap();
        let st = store_for(&s, 2);
        let ds = build_rel_dataset(&s, &st, "xx", Split::Train, RootArcs::Exclude).unwrap();
        // count oracle: tokens whose head is a real token
        let expected: usize = s
            .iter()
            .flat_map(|x| &x.tokens)
            .filter(|t| matches!(t.head, Head::Token(_)))
            .count();
        assert_eq!(ds.len(), expected);
        assert_eq!(ds.len(), 6);
        // token A = [1,2], head b = [3,4]
        assert_eq!(ds.label_name(0), "det");
        assert_eq!(ds.feature(0), &[2.0, 2.0]);
        assert!(ds.vocab().index_of("advmod").is_some());
        assert!(ds.vocab().index_of("root").is_none());
    }

    #[test]
    fn rel_feature_arithmetic() {
        let text = "1\tx\t_\tX\t_\t_\t2\tdep\t_\t_\n2\ty\t_\tX\t_\t_\t0\troot\t_\t_\n\n\
                    1\tx\t_\tX\t_\t_\t2\tdep\t_\t_\n2\ty\t_\tX\t_\t_\t0\troot\t_\t_\n";
        let s = parse_conllu(text).unwrap();
        let meta = store_for(&s, 2).manifest().clone();
        let st = FeatureStore::new(
            StoreMeta::from_manifest(&meta),
            2,
            vec![vec![0.5, 1.0, 1.0, 2.0], vec![3.0, 3.0, 3.0, 3.0]],
        )
        .unwrap();
        let ds = build_rel_dataset(&s, &st, "xx", Split::Train, RootArcs::Exclude).unwrap();
        assert_eq!(ds.feature(0), &[0.5, 1.0]);
        assert_eq!(ds.feature(1), &[0.0, 0.0]);
    }

    #[test]
    fn root_arcs_can_use_sentence_mean() {
        let s = parse_conllu(TOY).unwrap();
        let st = store_for(&s, 1);
        let ds = build_rel_dataset(&s, &st, "xx", Split::Train, RootArcs::SentenceMean).unwrap();
        assert_eq!(ds.len(), 9);
        // sentence 0 values [1, 2], mean 1.5; root token b = 2
        let i = (0..ds.len()).find(|&i| ds.label_name(i) == "root").unwrap();
        assert_eq!(ds.feature(i), &[-0.5]);
    }

    #[test]
    fn misaligned_store_names_sentence() {
        let mut s = parse_conllu(TOY).unwrap();
        let st = store_for(&s, 2);
        s[1].sentence_id = "bad-one".to_string();
        s[1].tokens.pop();
        match build_pos_dataset(&s, &st, "xx", Split::Train) {
            Err(TreebankError::Alignment { sentence_id, .. }) => assert_eq!(sentence_id, "bad-one"),
            other => panic!("{other:?}"),
        }
    }

    fn counted(counts: &[(&str, usize)]) -> LabeledDataset {
        let labels: Vec<&str> = counts.iter().flat_map(|(n, c)| core::iter::repeat_n(*n, *c)).collect();
        let rows = labels.len();
        LabeledDataset::from_named(
            Matrix::from_fn(rows, 1, |i, _| i as f64),
            &labels,
            (0..rows).collect(),
            prov(),
        )
        .unwrap()
    }

    #[test]
    fn filter_threshold_is_inclusive_at_20() {
        let ds = counted(&[("A", 19), ("B", 20)]);
        let (out, vocab) = filter_rare_concepts(&ds, 20);
        assert_eq!(vocab.names(), ["B"]);
        assert_eq!(out.len(), 20);
        assert!(out.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn filter_mixed_counts() {
        let ds = counted(&[("A", 5), ("B", 25), ("C", 100)]);
        let (out, vocab) = filter_rare_concepts(&ds, 20);
        // counting oracle
        let kept: usize = [("A", 5), ("B", 25), ("C", 100)]
            .iter()
            .filter(|(_, c)| *c >= 20)
            .map(|(_, c)| c)
            .sum();
        assert_eq!(vocab.names(), ["B", "C"]);
        assert_eq!(vocab.counts(), [25, 100]);
        assert_eq!(out.len(), kept);
        assert_eq!(out.len(), 125);
        assert_eq!(out.label_name(0), "B");
        assert_eq!(out.label_name(124), "C");
    }

    #[test]
    fn filter_zero_is_noop_and_idempotent() {
        let ds = counted(&[("A", 5), ("B", 25)]);
        let (same, _) = filter_rare_concepts(&ds, 0);
        assert_eq!(same, ds);
        let (once, _) = filter_rare_concepts(&ds, 20);
        let (twice, _) = filter_rare_concepts(&once, 20);
        assert_eq!(once, twice);
    }

    #[test]
    fn vocab_is_lexicographic_and_unique() {
        let v = ConceptVocab::from_counts([("VERB", 1), ("ADJ", 2), ("VERB", 3)]);
        assert_eq!(v.names(), ["ADJ", "VERB"]);
        assert_eq!(v.counts(), [2, 4]);
        assert_eq!(v.index_of("VERB"), Some(1));
    }
}
