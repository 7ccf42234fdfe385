//! Partially labeled datasets: candidate-label sets, the dataset container,
//! and synthetic generation (USS / FPS candidate sets over Gaussian blobs).

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// A subset of `{0, .., l-1}` stored as 64-bit words; bit `j` set means `j ∈ C`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelSet {
    words: Vec<u64>,
}

impl LabelSet {
    pub fn words_for(classes: usize) -> usize {
        classes.div_ceil(64)
    }

    pub fn empty(classes: usize) -> Self {
        Self {
            words: vec![0; Self::words_for(classes)],
        }
    }

    pub fn from_labels(classes: usize, labels: impl IntoIterator<Item = usize>) -> Self {
        let mut set = Self::empty(classes);
        for j in labels {
            set.insert(j);
        }
        set
    }

    pub fn from_words(words: Vec<u64>) -> Self {
        Self { words }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn insert(&mut self, label: usize) {
        self.words[label / 64] |= 1 << (label % 64);
    }

    pub fn contains(&self, label: usize) -> bool {
        self.words
            .get(label / 64)
            .is_some_and(|w| w >> (label % 64) & 1 == 1)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter(move |b| w >> b & 1 == 1).map(move |b| wi * 64 + b)
        })
    }

    /// True when every label in `0..classes` is present.
    pub fn is_full(&self, classes: usize) -> bool {
        self.len() == classes && self.iter().all(|j| j < classes)
    }

    /// Whether any bit at or above `classes` is set.
    pub fn has_bits_beyond(&self, classes: usize) -> bool {
        self.iter().any(|j| j >= classes)
    }

    /// `1.0` for members, `0.0` otherwise, over `classes` entries.
    pub fn indicator(&self, classes: usize) -> Vec<f64> {
        (0..classes)
            .map(|j| if self.contains(j) { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Layout of one instance's feature record. Images are row-major `H×W×Ch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    Flat(usize),
    Image {
        height: usize,
        width: usize,
        channels: usize,
    },
}

impl FeatureShape {
    pub fn len(&self) -> usize {
        match *self {
            FeatureShape::Flat(d) => d,
            FeatureShape::Image {
                height,
                width,
                channels,
            } => height * width * channels,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            FeatureShape::Flat(d) => vec![d],
            FeatureShape::Image {
                height,
                width,
                channels,
            } => vec![height, width, channels],
        }
    }

    pub fn from_dims(dims: &[usize]) -> Option<Self> {
        match *dims {
            [d] => Some(FeatureShape::Flat(d)),
            [height, width, channels] => Some(FeatureShape::Image {
                height,
                width,
                channels,
            }),
            _ => None,
        }
    }
}

/// Feature records plus per-instance candidate sets, with optional hidden truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PlDataset {
    classes: usize,
    shape: FeatureShape,
    features: Vec<f32>,
    candidates: Vec<LabelSet>,
    truth: Option<Vec<u32>>,
}

impl PlDataset {
    /// Builds a dataset, checking every candidate-set invariant.
    pub fn new(
        classes: usize,
        shape: FeatureShape,
        features: Vec<f32>,
        candidates: Vec<LabelSet>,
        truth: Option<Vec<u32>>,
    ) -> Result<Self> {
        // with two classes every admissible candidate set is a singleton
        if classes < 3 {
            return Err(Error::InvalidArity { classes });
        }
        let n = candidates.len();
        if features.len() != n * shape.len() {
            return Err(Error::LengthMismatch {
                context: "dataset features",
                left: features.len(),
                right: n * shape.len(),
            });
        }
        if let Some(t) = &truth {
            if t.len() != n {
                return Err(Error::LengthMismatch {
                    context: "dataset truth",
                    left: t.len(),
                    right: n,
                });
            }
        }
        let words = LabelSet::words_for(classes);
        for (i, c) in candidates.iter().enumerate() {
            let bad = |reason| Error::InvalidDataset { index: i, reason };
            if c.words().len() != words {
                return Err(bad("candidate mask has the wrong word count"));
            }
            if c.has_bits_beyond(classes) {
                return Err(bad("candidate mask has bits beyond the label space"));
            }
            if c.is_empty() {
                return Err(bad("empty candidate set"));
            }
            if c.len() >= classes {
                return Err(bad("candidate set equals the full label set"));
            }
            if let Some(t) = &truth {
                if !c.contains(t[i] as usize) {
                    return Err(bad("true label outside its candidate set"));
                }
            }
        }
        Ok(Self {
            classes,
            shape,
            features,
            candidates,
            truth,
        })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn shape(&self) -> FeatureShape {
        self.shape
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn instance(&self, i: usize) -> &[f32] {
        let d = self.shape.len();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn candidates(&self) -> &[LabelSet] {
        &self.candidates
    }

    pub fn truth(&self) -> Option<&[u32]> {
        self.truth.as_deref()
    }

    /// Instance rows gathered into a `len(indices) × d` f64 tensor.
    pub fn gather(&self, indices: &[usize]) -> Tensor {
        let d = self.shape.len();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend(self.instance(i).iter().map(|&v| v as f64));
        }
        Tensor::from_vec(indices.len(), d, data)
    }

    /// Every instance as an `n × d` f64 tensor.
    pub fn all_features(&self) -> Tensor {
        let d = self.shape.len();
        Tensor::from_vec(
            self.len(),
            d,
            self.features.iter().map(|&v| v as f64).collect(),
        )
    }
}

/// Candidate-set generation strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Uniform over admissible candidate sets containing the truth.
    Uss,
    /// Each irrelevant label flips in independently with probability `q`.
    Fps { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSpec {
    pub strategy: Strategy,
    pub seed: u64,
}

impl GenSpec {
    pub fn generate(&self, truth: &[u32], classes: usize) -> Result<Vec<LabelSet>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.strategy {
            Strategy::Uss => generate_uss(truth, classes, &mut rng),
            Strategy::Fps { q } => generate_fps(truth, classes, q, &mut rng),
        }
    }
}

fn check_labels(truth: &[u32], classes: usize) -> Result<()> {
    if classes < 3 {
        return Err(Error::InvalidArity { classes });
    }
    if let Some(&bad) = truth.iter().find(|&&y| y as usize >= classes) {
        return Err(invalid("truth", alloc::format!("label {bad} >= {classes}")));
    }
    Ok(())
}

/// Uniformly samples a candidate set containing the truth, never the full label set.
pub fn generate_uss<R: Rng + ?Sized>(
    truth: &[u32],
    classes: usize,
    rng: &mut R,
) -> Result<Vec<LabelSet>> {
    check_labels(truth, classes)?;
    Ok(truth
        .iter()
        .map(|&y| loop {
            let y = y as usize;
            let mut set = LabelSet::empty(classes);
            set.insert(y);
            for j in (0..classes).filter(|&j| j != y) {
                if rng.random::<bool>() {
                    set.insert(j);
                }
            }
            if set.len() < classes {
                break set;
            }
        })
        .collect())
}

/// Flips each irrelevant label in with probability `q`, forcing one flip when
/// none fired and resampling when every label flipped.
pub fn generate_fps<R: Rng + ?Sized>(
    truth: &[u32],
    classes: usize,
    q: f64,
    rng: &mut R,
) -> Result<Vec<LabelSet>> {
    if !(0.0..1.0).contains(&q) {
        return Err(invalid("q", alloc::format!("{q} is outside [0, 1)")));
    }
    check_labels(truth, classes)?;
    Ok(truth
        .iter()
        .map(|&y| loop {
            let y = y as usize;
            let mut set = LabelSet::empty(classes);
            set.insert(y);
            for j in (0..classes).filter(|&j| j != y) {
                if rng.random::<f64>() < q {
                    set.insert(j);
                }
            }
            if set.len() == 1 {
                let r = rng.random_range(0..classes - 1);
                set.insert(if r >= y { r + 1 } else { r });
            }
            if set.len() < classes {
                break set;
            }
        })
        .collect())
}

/// Labeled Gaussian-blob features, before candidate sets are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Blobs {
    pub dim: usize,
    pub features: Vec<f32>,
    pub truth: Vec<u32>,
    pub centers: Vec<Vec<f64>>,
}

impl Blobs {
    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    /// Splits into `(first at, rest)`.
    pub fn split_at(self, at: usize) -> (Blobs, Blobs) {
        let d = self.dim;
        let (fa, fb) = self.features.split_at(at * d);
        let (ta, tb) = self.truth.split_at(at);
        (
            Blobs {
                dim: d,
                features: fa.to_vec(),
                truth: ta.to_vec(),
                centers: self.centers.clone(),
            },
            Blobs {
                dim: d,
                features: fb.to_vec(),
                truth: tb.to_vec(),
                centers: self.centers,
            },
        )
    }

    pub fn into_dataset(self, classes: usize, gen: &GenSpec) -> Result<PlDataset> {
        let candidates = gen.generate(&self.truth, classes)?;
        PlDataset::new(
            classes,
            FeatureShape::Flat(self.dim),
            self.features,
            candidates,
            Some(self.truth),
        )
    }
}

/// `l` unit-variance isotropic clusters with centers at mutual distance at
/// least `separation`; labels assigned round-robin, features z-scored per dimension.
pub fn make_blobs<R: Rng + ?Sized>(
    n: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Blobs> {
    if classes < 2 {
        return Err(Error::InvalidArity { classes });
    }
    if n < classes {
        return Err(invalid("n", "fewer instances than classes"));
    }
    if dim < 2 {
        return Err(invalid("dim", "blob features need at least 2 dimensions"));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(invalid("separation", "must be positive and finite"));
    }

    let per_axis = libm::ceil(libm::pow(classes as f64, 1.0 / dim as f64)).max(1.0);
    let mut side = 2.0 * separation * per_axis;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    let mut failures = 0;
    while centers.len() < classes {
        let c: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * side).collect();
        let far = centers.iter().all(|o| {
            let d2: f64 = o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            libm::sqrt(d2) >= separation
        });
        if far {
            centers.push(c);
        } else {
            failures += 1;
            if failures % 1000 == 0 {
                side *= 1.5;
            }
        }
    }

    let truth: Vec<u32> = (0..n).map(|i| (i % classes) as u32).collect();
    let mut raw = Vec::with_capacity(n * dim);
    for &y in &truth {
        for k in 0..dim {
            let z: f64 = StandardNormal.sample(rng);
            raw.push(centers[y as usize][k] + z);
        }
    }

    for k in 0..dim {
        let mean = (0..n).map(|i| raw[i * dim + k]).sum::<f64>() / n as f64;
        let var = (0..n)
            .map(|i| {
                let v = raw[i * dim + k] - mean;
                v * v
            })
            .sum::<f64>()
            / n as f64;
        let sd = libm::sqrt(var);
        let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
        for i in 0..n {
            raw[i * dim + k] = (raw[i * dim + k] - mean) * scale;
        }
        for c in centers.iter_mut() {
            c[k] = (c[k] - mean) * scale;
        }
    }

    Ok(Blobs {
        dim,
        features: raw.into_iter().map(|v| v as f32).collect(),
        truth,
        centers,
    })
}
