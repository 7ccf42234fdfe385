#![allow(dead_code)]

use plsp_core::model::{ClassifierParams, ModelConfig};
use plsp_core::objective::{SsBatch, SsWeights};
use plsp_core::pldata::LabelSet;
use plsp_core::semstats::{ClassCovStats, DEFAULT_BETA};
use plsp_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_tensor(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect();
    Tensor::from_vec(rows, cols, data)
}

/// 3 inputs → 6 hidden → 8 features → `classes` logits.
pub fn small_model(classes: usize, seed: u64) -> ClassifierParams {
    let cfg = ModelConfig {
        input_dim: 3,
        hidden: vec![6],
        feature_dim: 8,
        classes,
    };
    let mut p = ClassifierParams::init(&cfg, &mut rng(seed)).unwrap();
    // non-zero biases so the graph exercises them
    let mut r = rng(seed ^ 0xB1A5);
    for t in p.tensors_mut() {
        if t.rows() == 1 {
            for v in t.data_mut() {
                *v = 0.1 * r.random::<f64>();
            }
        }
    }
    p
}

/// A copy with every parameter nudged, standing in for a stale snapshot.
pub fn perturbed(p: &ClassifierParams, scale: f64, seed: u64) -> ClassifierParams {
    let mut q = p.clone();
    let mut r = rng(seed);
    for t in q.tensors_mut() {
        for v in t.data_mut() {
            let z: f64 = StandardNormal.sample(&mut r);
            *v += scale * z;
        }
    }
    q
}

/// Covariances estimated from random feature draws for every class.
pub fn random_stats(classes: usize, dim: usize, seed: u64) -> ClassCovStats {
    let mut r = rng(seed);
    let mut stats = ClassCovStats::new(classes, dim);
    let n = 8 * dim * classes;
    let feats = normal_tensor(n, dim, 1.0, &mut r);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    stats.update(&feats, &labels).unwrap();
    stats
}

pub fn random_candidates(n: usize, classes: usize, r: &mut ChaCha8Rng) -> Vec<LabelSet> {
    (0..n)
        .map(|_| loop {
            let labels: Vec<usize> = (0..classes).filter(|_| r.random::<bool>()).collect();
            if !labels.is_empty() && labels.len() < classes {
                break LabelSet::from_labels(classes, labels);
            }
        })
        .collect()
}

pub fn random_batch(classes: usize, b_l: usize, b_u: usize, seed: u64) -> SsBatch {
    let mut r = rng(seed);
    let labeled_x = normal_tensor(b_l, 3, 1.0, &mut r);
    let labeled_y = (0..b_l).map(|_| r.random_range(0..classes)).collect();
    let unlabeled_x = normal_tensor(b_u, 3, 1.0, &mut r);
    let mut weak_x = unlabeled_x.clone();
    let mut strong_x = unlabeled_x.clone();
    for v in weak_x.data_mut() {
        let z: f64 = StandardNormal.sample(&mut r);
        *v += 0.05 * z;
    }
    for v in strong_x.data_mut() {
        let z: f64 = StandardNormal.sample(&mut r);
        *v += 0.3 * z;
    }
    SsBatch {
        labeled_x,
        labeled_y,
        unlabeled_x,
        weak_x,
        strong_x,
        candidates: random_candidates(b_u, classes, &mut r),
    }
}

pub fn weights(classes: usize, gamma: f64, lambda: f64, tau: f64) -> SsWeights {
    SsWeights {
        gamma,
        lambda,
        beta: DEFAULT_BETA,
        tau: vec![tau; classes],
    }
}
