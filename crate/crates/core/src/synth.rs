//! Synthetic languages with a known shared concept geometry.
//!
//! Every language draws token vectors `mu_y + eps` around a common set of
//! concept means and then rotates them with its own orthogonal matrix, so
//! the concept geometry is identical up to rotation and noise. Language 0
//! is the unrotated source. With `independent_means` every language gets
//! its own means instead, which removes any shared structure.
//!
//! Output mirrors real data: CoNLL-U style sentences whose UPOS column holds
//! the concept name, plus a feature store aligned token for token.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurestore::{FeatureStore, StoreMeta};
use crate::linalg::{qr_orthogonal, Matrix};
use crate::rng::{derive_seed, seeded, Rng};
use crate::treebank::{Head, Sentence, Split, Token};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RotationKind {
    /// Haar-random orthogonal matrix per language.
    OrthogonalRandom,
    /// `Q diag(R(theta_i)) Q^T` with every plane angle `|theta_i| <= max_angle_deg`.
    NearIdentity { max_angle_deg: f64 },
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Number of concepts `K`.
    pub k: usize,
    /// Feature dimension `n`.
    pub n: usize,
    pub n_languages: usize,
    pub rotation: RotationKind,
    /// Per-coordinate standard deviation of token noise.
    pub sigma: f64,
    /// Standard deviation of the leading coordinate of the concept means.
    pub mean_scale: f64,
    /// Coordinate `i` of the means has standard deviation
    /// `mean_scale * (i + 1)^-spectrum_decay`; 0 gives isotropic means.
    pub spectrum_decay: f64,
    pub sentences_per_language: usize,
    pub tokens_per_sentence: usize,
    /// Draw separate concept means for every language.
    pub independent_means: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            k: 17,
            n: 64,
            n_languages: 5,
            rotation: RotationKind::OrthogonalRandom,
            sigma: 0.3,
            mean_scale: 1.0,
            spectrum_decay: 0.5,
            sentences_per_language: 500,
            tokens_per_sentence: 20,
            independent_means: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid synthetic spec: {0}")]
pub struct SpecError(pub String);

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let bad = |m: &str| Err(SpecError(m.to_string()));
        if self.k < 2 {
            return bad("k must be at least 2");
        }
        if self.n == 0 {
            return bad("n must be positive");
        }
        if self.n_languages == 0 {
            return bad("n_languages must be positive");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(self.mean_scale > 0.0 && self.mean_scale.is_finite()) {
            return bad("mean_scale must be positive");
        }
        if !(self.spectrum_decay >= 0.0 && self.spectrum_decay.is_finite()) {
            return bad("spectrum_decay must be non-negative");
        }
        if self.sentences_per_language < 10 {
            return bad("sentences_per_language must be at least 10");
        }
        if self.tokens_per_sentence == 0 {
            return bad("tokens_per_sentence must be positive");
        }
        if let RotationKind::NearIdentity { max_angle_deg } = self.rotation {
            if !(0.0..=180.0).contains(&max_angle_deg) {
                return bad("max_angle_deg must be within [0, 180]");
            }
        }
        Ok(())
    }

    /// Name of the concept with index `c`; zero-padded so lexicographic
    /// order equals index order.
    pub fn concept_name(&self, c: usize) -> String {
        let width = alloc::format!("{}", self.k - 1).len();
        alloc::format!("C{c:0width$}")
    }

    pub fn language_name(&self, l: usize) -> String {
        alloc::format!("syn{l}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSplit {
    pub split: Split,
    pub sentences: Vec<Sentence>,
    pub store: FeatureStore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticLanguage {
    pub name: String,
    /// Right-multiplied onto source-space draws.
    pub rotation: Matrix,
    pub means: Matrix,
    pub splits: Vec<SyntheticSplit>,
}

impl SyntheticLanguage {
    pub fn split(&self, split: Split) -> &SyntheticSplit {
        self.splits.iter().find(|s| s.split == split).expect("all splits generated")
    }
}

/// Sentences per split: 80% train, 10% dev, remainder test.
pub fn split_sizes(total: usize) -> [(Split, usize); 3] {
    let train = total * 8 / 10;
    let dev = total / 10;
    [(Split::Train, train), (Split::Dev, dev), (Split::Test, total - train - dev)]
}

/// Random orthogonal matrix: QR of a Gaussian matrix with the signs of `R`'s
/// diagonal folded into `Q`.
pub fn random_orthogonal(n: usize, rng: &mut Rng) -> Matrix {
    let g = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    qr_orthogonal(&g)
}

/// Rotation acting as planar rotations by at most `max_angle_deg` in `n/2`
/// random orthogonal planes (the odd leftover direction is fixed).
pub fn near_identity_rotation(n: usize, max_angle_deg: f64, rng: &mut Rng) -> Matrix {
    let q = random_orthogonal(n, rng);
    let bound = max_angle_deg.to_radians();
    let mut block = Matrix::identity(n);
    for p in 0..n / 2 {
        let theta = if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 };
        let (s, c) = (libm::sin(theta), libm::cos(theta));
        let (i, j) = (2 * p, 2 * p + 1);
        block[(i, i)] = c;
        block[(i, j)] = -s;
        block[(j, i)] = s;
        block[(j, j)] = c;
    }
    q.matmul(&block).matmul(&q.transpose())
}

fn draw_means(spec: &SyntheticSpec, rng: &mut Rng) -> Matrix {
    let scales: Vec<f64> = (0..spec.n)
        .map(|i| spec.mean_scale * libm::pow((i + 1) as f64, -spec.spectrum_decay))
        .collect();
    Matrix::from_fn(spec.k, spec.n, |_, j| {
        let z: f64 = StandardNormal.sample(rng);
        z * scales[j]
    })
}

/// Generates all languages. Deterministic in `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<SyntheticLanguage>, SpecError> {
    spec.validate()?;
    let shared = draw_means(spec, &mut seeded(derive_seed(spec.seed, 0x6d65616e)));
    let mut out = Vec::with_capacity(spec.n_languages);
    for l in 0..spec.n_languages {
        let mut rng = seeded(derive_seed(spec.seed, l as u64 + 1));
        let means = if spec.independent_means && l > 0 {
            draw_means(spec, &mut rng)
        } else {
            shared.clone()
        };
        let rotation = if l == 0 {
            Matrix::identity(spec.n)
        } else {
            match spec.rotation {
                RotationKind::OrthogonalRandom => random_orthogonal(spec.n, &mut rng),
                RotationKind::NearIdentity { max_angle_deg } => near_identity_rotation(spec.n, max_angle_deg, &mut rng),
                RotationKind::Identity => Matrix::identity(spec.n),
            }
        };
        let name = spec.language_name(l);
        let mut splits = Vec::with_capacity(3);
        for (split, count) in split_sizes(spec.sentences_per_language) {
            splits.push(generate_split(spec, &name, split, count, &means, &rotation, &mut rng));
        }
        out.push(SyntheticLanguage {
            name,
            rotation,
            means,
            splits,
        });
    }
    Ok(out)
}

fn generate_split(
    spec: &SyntheticSpec,
    language: &str,
    split: Split,
    count: usize,
    means: &Matrix,
    rotation: &Matrix,
    rng: &mut Rng,
) -> SyntheticSplit {
    let split_name = match split {
        Split::Train => "train",
        Split::Dev => "dev",
        Split::Test => "test",
    };
    let mut sentences = Vec::with_capacity(count);
    let mut blocks = Vec::with_capacity(count);
    let mut x = vec![0.0; spec.n];
    for s in 0..count {
        let mut tokens = Vec::with_capacity(spec.tokens_per_sentence);
        let mut block = Vec::with_capacity(spec.tokens_per_sentence * spec.n);
        for t in 0..spec.tokens_per_sentence {
            let c = rng.random_range(0..spec.k);
            for (xi, mu) in x.iter_mut().zip(means.row(c)) {
                let e: f64 = StandardNormal.sample(rng);
                *xi = mu + spec.sigma * e;
            }
            // row vector times rotation
            for j in 0..spec.n {
                let mut v = 0.0;
                for (i, xi) in x.iter().enumerate() {
                    v += xi * rotation[(i, j)];
                }
                block.push(v as f32);
            }
            let upos = spec.concept_name(c);
            tokens.push(Token {
                form: upos.to_lowercase(),
                upos,
                head: if t == 0 { Head::Root } else { Head::Token(0) },
                deprel: if t == 0 { "root".to_string() } else { "dep".to_string() },
            });
        }
        sentences.push(Sentence {
            sentence_id: alloc::format!("{language}-{split_name}-{s}"),
            tokens,
        });
        blocks.push(block);
    }
    let meta = StoreMeta {
        language: language.to_string(),
        model_name: "synthetic".to_string(),
        layer: 0,
        treebank_file: alloc::format!("{language}-{split_name}.conllu"),
        pooling: "none".to_string(),
    };
    let store = FeatureStore::new(meta, spec.n, blocks).expect("blocks are n-aligned");
    SyntheticSplit { split, sentences, store }
}
