use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::TreebankError;
use crate::rng::Rng;

/// One meta-learning task instance drawn from a single language.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub support: LabeledDataset,
    pub query: LabeledDataset,
    pub support_sentences: Vec<usize>,
    pub query_sentences: Vec<usize>,
}

impl Episode {
    pub fn n_support_sentences(&self) -> usize {
        self.support_sentences.len()
    }

    pub fn n_query_sentences(&self) -> usize {
        self.query_sentences.len()
    }
}

/// Draws `n_support + n_query` distinct sentences without replacement and
/// splits them into support and query sets.
pub fn sample_support_query(
    ds: &LabeledDataset,
    n_support: usize,
    n_query: usize,
    rng: &mut Rng,
) -> Result<Episode, TreebankError> {
    let ids = ds.sentence_ids();
    let needed = n_support + n_query;
    if ids.len() < needed {
        return Err(TreebankError::InsufficientSentences {
            needed,
            available: ids.len(),
        });
    }
    let picked: Vec<usize> = ids.choose_multiple(rng, needed).copied().collect();
    let (s, q) = picked.split_at(n_support);
    Ok(Episode {
        support: ds.select_sentences(s),
        query: ds.select_sentences(q),
        support_sentences: s.to_vec(),
        query_sentences: q.to_vec(),
    })
}

/// For languages without a training split: support comes from the test
/// set and evaluation uses the remaining sentences.
pub fn holdout_split_for_testonly(
    ds: &LabeledDataset,
    n_support: usize,
    rng: &mut Rng,
) -> Result<(LabeledDataset, LabeledDataset), TreebankError> {
    let mut ids = ds.sentence_ids();
    if ids.len() <= n_support {
        return Err(TreebankError::InsufficientSentences {
            needed: n_support + 1,
            available: ids.len(),
        });
    }
    ids.shuffle(rng);
    let (s, rest) = ids.split_at(n_support);
    let mut rest = rest.to_vec();
    rest.sort_unstable();
    Ok((ds.select_sentences(s), ds.select_sentences(&rest)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::rng::seeded;
    use crate::treebank::dataset::{Provenance, Split, Task};
    use alloc::collections::BTreeSet;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn ds(n_sent: usize, per: usize) -> LabeledDataset {
        let rows = n_sent * per;
        let labels: Vec<&str> = (0..rows).map(|i| if i % 2 == 0 { "A" } else { "B" }).collect();
        LabeledDataset::from_named(
            Matrix::from_fn(rows, 2, |i, j| (i * 2 + j) as f64),
            &labels,
            (0..rows).map(|i| i / per).collect(),
            Provenance {
                language: "xx".to_string(),
                task: Task::Pos,
                split: Split::Train,
            },
        )
        .unwrap()
    }

    #[test]
    fn insufficient_sentences_reports_available() {
        let d = ds(10, 3);
        match sample_support_query(&d, 5, 30, &mut seeded(1)) {
            Err(TreebankError::InsufficientSentences { needed, available }) => {
                assert_eq!((needed, available), (35, 10));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let d = ds(50, 2);
        let a = sample_support_query(&d, 10, 30, &mut seeded(7)).unwrap();
        let b = sample_support_query(&d, 10, 30, &mut seeded(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn testonly_holdout_partitions_sentences() {
        let d = ds(20, 3);
        let (s, rest) = holdout_split_for_testonly(&d, 5, &mut seeded(3)).unwrap();
        assert_eq!(s.sentence_ids().len(), 5);
        assert_eq!(rest.sentence_ids().len(), 15);
        assert_eq!(s.len() + rest.len(), d.len());
        let a: BTreeSet<usize> = s.sentence_ids().into_iter().collect();
        assert!(rest.sentence_ids().iter().all(|x| !a.contains(x)));
    }

    proptest! {
        #[test]
        fn support_and_query_are_disjoint(
            n_sent in 2usize..60,
            per in 1usize..4,
            frac in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let d = ds(n_sent, per);
            let n_support = ((n_sent - 1) as f64 * frac) as usize;
            let n_query = (n_sent - n_support).min(30);
            let ep = sample_support_query(&d, n_support, n_query, &mut seeded(seed)).unwrap();
            prop_assert_eq!(ep.n_support_sentences(), n_support);
            prop_assert_eq!(ep.support.sentence_ids().len(), n_support);
            let s: BTreeSet<usize> = ep.support_sentences.iter().copied().collect();
            prop_assert!(ep.query_sentences.iter().all(|q| !s.contains(q)));
            prop_assert_eq!(ep.support.len(), n_support * per);
        }
    }
}
