use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::procrustes::procrustes_alignability;
use super::rsa::rsa_points;
use super::stats::{wilcoxon_signed_rank, Alternative, StatTestResult};
use super::GeometryError;
use crate::linalg::Matrix;
use crate::probe::PrototypeSet;
use crate::rng::{derive_seed, seeded};
use crate::treebank::LabeledDataset;

/// Random replacements for the second language's prototypes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaselineKind {
    /// Prototype rows permuted uniformly (identity included).
    #[serde(rename = "RP")]
    RandomPrototype,
    /// One random sample of each concept in place of its prototype.
    #[serde(rename = "RC")]
    RandomConcept,
    /// `K` random samples of any concept.
    #[serde(rename = "RS")]
    RandomSample,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [Self::RandomPrototype, Self::RandomConcept, Self::RandomSample];

    pub fn code(self) -> &'static str {
        match self {
            Self::RandomPrototype => "RP",
            Self::RandomConcept => "RC",
            Self::RandomSample => "RS",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Rsa,
    Procrustes,
}

impl Metric {
    pub fn evaluate(self, p1: &Matrix, p2: &Matrix) -> Result<f64, GeometryError> {
        match self {
            Metric::Rsa => rsa_points(p1, p2),
            Metric::Procrustes => procrustes_alignability(p1, p2),
        }
    }
}

pub const DEFAULT_TRIALS: usize = 100;

/// Randomized stand-ins for `ps2`'s prototype matrix, plus how many RP
/// draws were the identity permutation.
///
/// `ds2` supplies the samples for RC and RS; they are projected with
/// `ps2`'s transform so they live in the same space as the prototypes.
pub fn baseline_configurations(
    kind: BaselineKind,
    ps2: &PrototypeSet,
    ds2: &LabeledDataset,
    n_trials: usize,
    seed: u64,
) -> Result<(Vec<Matrix>, usize), GeometryError> {
    let mut rng = seeded(derive_seed(seed, kind as u64));
    let k = ps2.len();
    let protos = ps2.prototypes();
    let mut out = Vec::with_capacity(n_trials);
    let mut identity = 0;
    match kind {
        BaselineKind::RandomPrototype => {
            let mut perm: Vec<usize> = (0..k).collect();
            for _ in 0..n_trials {
                perm.shuffle(&mut rng);
                if perm.iter().enumerate().all(|(i, &p)| i == p) {
                    identity += 1;
                }
                out.push(protos.select_rows(&perm));
            }
        }
        BaselineKind::RandomConcept => {
            let mut members: Vec<Vec<usize>> = Vec::with_capacity(k);
            for name in ps2.vocab().names() {
                let idx: Vec<usize> = (0..ds2.len()).filter(|&i| ds2.label_name(i) == name).collect();
                if idx.is_empty() {
                    return Err(GeometryError::EmptyConcept(name.clone()));
                }
                members.push(idx);
            }
            for _ in 0..n_trials {
                let picks: Vec<usize> = members.iter().map(|m| m[rng.random_range(0..m.len())]).collect();
                out.push(ps2.transform().forward(&ds2.features().select_rows(&picks)));
            }
        }
        BaselineKind::RandomSample => {
            if ds2.len() < k {
                return Err(GeometryError::Shape(alloc::format!(
                    "{} samples cannot fill {k} random picks",
                    ds2.len()
                )));
            }
            for _ in 0..n_trials {
                let picks = index::sample(&mut rng, ds2.len(), k).into_vec();
                out.push(ps2.transform().forward(&ds2.features().select_rows(&picks)));
            }
        }
    }
    Ok((out, identity))
}

/// Metric values of `ps1` against `n_trials` randomized versions of `ps2`.
pub fn baseline_distribution(
    kind: BaselineKind,
    metric: Metric,
    ps1: &PrototypeSet,
    ps2: &PrototypeSet,
    ds2: &LabeledDataset,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<f64>, GeometryError> {
    check_same_concepts(ps1, ps2)?;
    let (configs, _) = baseline_configurations(kind, ps2, ds2, n_trials, seed)?;
    configs.iter().map(|c| metric.evaluate(ps1.prototypes(), c)).collect()
}

fn check_same_concepts(ps1: &PrototypeSet, ps2: &PrototypeSet) -> Result<(), GeometryError> {
    if ps1.vocab().names() != ps2.vocab().names() {
        return Err(GeometryError::ConceptOrder);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub kind: BaselineKind,
    pub metric: Metric,
    pub values: Vec<f64>,
    pub test: StatTestResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignabilityReport {
    pub source: String,
    pub target: String,
    pub shared_concepts: Vec<String>,
    pub rsa_rho: f64,
    pub procrustes_ev: f64,
    pub baselines: Vec<BaselineComparison>,
    /// RP trials that drew the identity permutation.
    pub rp_identity_draws: usize,
    pub alternative: Alternative,
}

impl AlignabilityReport {
    pub fn observed(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Rsa => self.rsa_rho,
            Metric::Procrustes => self.procrustes_ev,
        }
    }

    pub fn comparison(&self, kind: BaselineKind, metric: Metric) -> Option<&BaselineComparison> {
        self.baselines.iter().find(|b| b.kind == kind && b.metric == metric)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub n_trials: usize,
    pub seed: u64,
    pub alternative: Alternative,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            n_trials: DEFAULT_TRIALS,
            seed: 0,
            alternative: Alternative::TwoSided,
        }
    }
}

/// Compares two languages over their shared concepts: RSA, Procrustes EV,
/// and each metric against all three random baselines.
pub fn alignability_report(
    pair: (&str, &str),
    ps1: &PrototypeSet,
    ps2: &PrototypeSet,
    ds2: &LabeledDataset,
    cfg: &ReportConfig,
) -> Result<AlignabilityReport, GeometryError> {
    let shared = ps1.vocab().intersection(ps2.vocab());
    if shared.len() < 3 {
        return Err(GeometryError::TooFewConcepts(shared.len()));
    }
    let a = ps1.restrict(&shared).ok_or(GeometryError::ConceptOrder)?;
    let b = ps2.restrict(&shared).ok_or(GeometryError::ConceptOrder)?;
    let rsa_rho = Metric::Rsa.evaluate(a.prototypes(), b.prototypes())?;
    let procrustes_ev = Metric::Procrustes.evaluate(a.prototypes(), b.prototypes())?;
    let mut baselines = Vec::new();
    let mut rp_identity_draws = 0;
    for kind in BaselineKind::ALL {
        let (configs, identity) = baseline_configurations(kind, &b, ds2, cfg.n_trials, cfg.seed)?;
        if kind == BaselineKind::RandomPrototype {
            rp_identity_draws = identity;
        }
        for metric in [Metric::Rsa, Metric::Procrustes] {
            let values = configs
                .iter()
                .map(|c| metric.evaluate(a.prototypes(), c))
                .collect::<Result<Vec<f64>, _>>()?;
            let observed = if metric == Metric::Rsa { rsa_rho } else { procrustes_ev };
            let test = wilcoxon_signed_rank(observed, &values, cfg.alternative);
            baselines.push(BaselineComparison {
                kind,
                metric,
                values,
                test,
            });
        }
    }
    Ok(AlignabilityReport {
        source: pair.0.into(),
        target: pair.1.into(),
        shared_concepts: shared,
        rsa_rho,
        procrustes_ev,
        baselines,
        rp_identity_draws,
        alternative: cfg.alternative,
    })
}
