//! Class-conditional feature statistics and the closed-form probability maps
//! that replace sampling of semantic feature perturbations `ã ~ N(a, λΣ_y)`.
//!
//! * [`probit_weak_probs`] approximates `E[softmax(Ŵã)]` by swapping the
//!   sigmoid in each pairwise term for a probit `Φ(βx)` and integrating the
//!   Gaussian analytically.
//! * [`shifted_softmax_probs`] gives `p̲_j` such that `−log p̲_j` upper-bounds
//!   `E[−log softmax_j(Wã)]` (Jensen plus the Gaussian MGF).

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::math::{self, std_normal_cdf};
use crate::tensor::Tensor;

/// Minimax-optimal slope for `sigmoid(x) ≈ Φ(βx)` on `[-8, 8]`
/// (sup error ≈ 0.00947); see [`fit_probit_beta`].
pub const DEFAULT_BETA: f64 = 0.5876;

/// The alternative slope `π²/8`.
pub const PI_SQUARED_OVER_8: f64 = core::f64::consts::PI * core::f64::consts::PI / 8.0;

/// Slope-matched constant `√(π/8)`.
pub const SQRT_PI_OVER_8: f64 = 0.626_657_068_657_750_1;

const CDF_CLAMP: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticSpec {
    pub lambda: f64,
    pub beta: f64,
    pub eig_floor: f64,
}

impl Default for SemanticSpec {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            beta: DEFAULT_BETA,
            eig_floor: 0.0,
        }
    }
}

/// Running count, mean and population covariance for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMoments {
    pub count: u64,
    pub mean: Vec<f64>,
    /// Row-major `d×d`.
    pub cov: Vec<f64>,
}

impl ClassMoments {
    fn zero(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            cov: vec![0.0; dim * dim],
        }
    }

    /// Population moments of a set of rows.
    pub fn from_rows(rows: &[&[f64]], dim: usize) -> Self {
        let mut out = Self::zero(dim);
        if rows.is_empty() {
            return out;
        }
        let m = rows.len() as f64;
        for r in rows {
            for (acc, v) in out.mean.iter_mut().zip(r.iter()) {
                *acc += v;
            }
        }
        out.mean.iter_mut().for_each(|v| *v /= m);
        let mut centered = vec![0.0; dim];
        for r in rows {
            for k in 0..dim {
                centered[k] = r[k] - out.mean[k];
            }
            for a in 0..dim {
                if centered[a] == 0.0 {
                    continue;
                }
                let row = &mut out.cov[a * dim..(a + 1) * dim];
                for (b, c) in row.iter_mut().enumerate() {
                    *c += centered[a] * centered[b];
                }
            }
        }
        out.cov.iter_mut().for_each(|v| *v /= m);
        out.count = rows.len() as u64;
        out
    }

    /// Merges another set of population moments into this one.
    pub fn merge(&mut self, other: &ClassMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let m = self.count as f64;
        let mp = other.count as f64;
        let total = m + mp;
        let dim = self.mean.len();
        let diff: Vec<f64> = self.mean.iter().zip(&other.mean).map(|(a, b)| a - b).collect();
        let cross = m * mp / (total * total);
        for a in 0..dim {
            for b in 0..dim {
                let idx = a * dim + b;
                self.cov[idx] =
                    (m * self.cov[idx] + mp * other.cov[idx]) / total + cross * diff[a] * diff[b];
            }
        }
        for (mu, mu_p) in self.mean.iter_mut().zip(&other.mean) {
            *mu = (m * *mu + mp * mu_p) / total;
        }
        self.count += other.count;
    }
}

/// Per-class feature statistics, merged batch by batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCovStats {
    dim: usize,
    classes: Vec<ClassMoments>,
}

impl ClassCovStats {
    pub fn new(classes: usize, dim: usize) -> Self {
        Self {
            dim,
            classes: (0..classes).map(|_| ClassMoments::zero(dim)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, j: usize) -> &ClassMoments {
        &self.classes[j]
    }

    pub fn covariance(&self, j: usize) -> &[f64] {
        &self.classes[j].cov
    }

    /// Folds a batch of `(feature row, class)` pairs in; classes absent from
    /// the batch are untouched.
    pub fn update(&mut self, features: &Tensor, labels: &[usize]) -> Result<()> {
        if features.rows() != labels.len() {
            return Err(Error::LengthMismatch {
                context: "covariance update",
                left: features.rows(),
                right: labels.len(),
            });
        }
        if features.rows() > 0 && features.cols() != self.dim {
            return Err(Error::ShapeMismatch {
                context: "covariance update",
                expected: [features.rows(), self.dim],
                found: features.shape(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.classes.len()) {
            return Err(invalid("labels", alloc::format!("class {bad} out of range")));
        }
        for j in 0..self.classes.len() {
            let rows: Vec<&[f64]> = labels
                .iter()
                .enumerate()
                .filter(|&(_, &y)| y == j)
                .map(|(i, _)| features.row(i))
                .collect();
            if rows.is_empty() {
                continue;
            }
            let batch = ClassMoments::from_rows(&rows, self.dim);
            self.classes[j].merge(&batch);
        }
        Ok(())
    }
}

fn check_symmetric(sigma: &[f64], dim: usize) -> Result<()> {
    let mut worst: f64 = 0.0;
    for a in 0..dim {
        for b in (a + 1)..dim {
            worst = worst.max((sigma[a * dim + b] - sigma[b * dim + a]).abs());
        }
    }
    if worst > SYMMETRY_TOL {
        return Err(Error::AsymmetricCovariance { deviation: worst });
    }
    Ok(())
}

/// Draws from `N(a, λΣ)` through a precomputed symmetric square-root factor.
#[derive(Debug, Clone)]
pub struct SemanticSampler {
    dim: usize,
    /// `V·diag(√(λ·max(e, floor)))`, row-major, or `None` when the spread is zero.
    factor: Option<Vec<f64>>,
}

impl SemanticSampler {
    pub fn new(sigma: &[f64], dim: usize, lambda: f64, eig_floor: f64) -> Result<Self> {
        if sigma.len() != dim * dim {
            return Err(Error::LengthMismatch {
                context: "covariance",
                left: sigma.len(),
                right: dim * dim,
            });
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", "must be finite and non-negative"));
        }
        check_symmetric(sigma, dim)?;
        if lambda == 0.0 {
            return Ok(Self { dim, factor: None });
        }
        // symmetrize the round-off before decomposing
        let m = DMatrix::from_fn(dim, dim, |r, c| 0.5 * (sigma[r * dim + c] + sigma[c * dim + r]));
        let eig = m.symmetric_eigen();
        let scales: Vec<f64> = eig
            .eigenvalues
            .iter()
            .map(|&e| libm::sqrt(lambda * e.max(0.0).max(eig_floor)))
            .collect();
        if scales.iter().all(|&s| s == 0.0) {
            return Ok(Self { dim, factor: None });
        }
        let mut factor = vec![0.0; dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                factor[r * dim + c] = eig.eigenvectors[(r, c)] * scales[c];
            }
        }
        Ok(Self {
            dim,
            factor: Some(factor),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        let Some(factor) = &self.factor else {
            return mean.to_vec();
        };
        let z: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(rng)).collect();
        (0..self.dim)
            .map(|r| mean[r] + math::dot(&factor[r * self.dim..(r + 1) * self.dim], &z))
            .collect()
    }
}

/// One draw of `ã ~ N(a, λΣ)`.
pub fn sample_semantic<R: Rng + ?Sized>(
    a: &[f64],
    sigma: &[f64],
    lambda: f64,
    eig_floor: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(SemanticSampler::new(sigma, a.len(), lambda, eig_floor)?.sample(a, rng))
}

/// `q[j·l + j'] = (w_j − w_j')ᵀ Σ (w_j − w_j')`, from `M = WΣWᵀ`.
pub fn pair_quadratics(head: &Tensor, sigma: &[f64]) -> Result<Vec<f64>> {
    let (l, d) = (head.rows(), head.cols());
    if sigma.len() != d * d {
        return Err(Error::LengthMismatch {
            context: "pair quadratics covariance",
            left: sigma.len(),
            right: d * d,
        });
    }
    let sig = Tensor::from_vec(d, d, sigma.to_vec());
    let ws = crate::tensor::matmul_raw(head, &sig);
    let m = crate::tensor::matmul_nt(&ws, head);
    let mut q = vec![0.0; l * l];
    for j in 0..l {
        for jp in 0..l {
            if j != jp {
                let v = m.get(j, j) + m.get(jp, jp) - m.get(j, jp) - m.get(jp, j);
                q[j * l + jp] = v.max(0.0);
            }
        }
    }
    Ok(q)
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Probit approximation of the expected weak-branch softmax, with
/// `Φ` clamped to `[1e-12, 1 − 1e-12]` and the result clamped at zero and renormalized.
pub fn probit_weak_probs(
    head: &Tensor,
    a: &[f64],
    sigma: &[f64],
    lambda: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    let q = pair_quadratics(head, sigma)?;
    probit_weak_probs_with(head, a, &q, lambda, beta)
}

/// [`probit_weak_probs`] with precomputed [`pair_quadratics`].
pub fn probit_weak_probs_with(
    head: &Tensor,
    a: &[f64],
    quad: &[f64],
    lambda: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    let z = crate::model::logits(a, head)?;
    check_finite(&z, "weak-branch logits")?;
    if !(beta > 0.0) {
        return Err(invalid("beta", "must be positive"));
    }
    let l = z.len();
    let mut p: Vec<f64> = (0..l)
        .map(|j| {
            let s: f64 = (0..l)
                .map(|jp| {
                    let mean = z[j] - z[jp];
                    let spread = 1.0 + lambda * beta * beta * quad[j * l + jp];
                    let phi = std_normal_cdf(beta * mean / libm::sqrt(spread));
                    1.0 / phi.clamp(CDF_CLAMP, 1.0 - CDF_CLAMP)
                })
                .sum();
            (1.0 / (s - l as f64)).max(0.0)
        })
        .collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    Ok(p)
}

/// Log of the MGF-shifted softmax:
/// `log p̲_j = z_j − log Σ_j' exp(z_j' + (λ/2)·u_{j'j}ᵀ Σ u_{j'j})`.
pub fn shifted_log_probs(head: &Tensor, a: &[f64], sigma: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let q = pair_quadratics(head, sigma)?;
    shifted_log_probs_with(head, a, &q, lambda)
}

pub fn shifted_log_probs_with(head: &Tensor, a: &[f64], quad: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_finite(a, "features")?;
    let z = crate::model::logits(a, head)?;
    check_finite(&z, "logits")?;
    let l = z.len();
    let mut shifted = vec![0.0; l];
    Ok((0..l)
        .map(|j| {
            for jp in 0..l {
                shifted[jp] = z[jp] + 0.5 * lambda * quad[jp * l + j];
            }
            z[j] - math::logsumexp_unchecked(&shifted)
        })
        .collect())
}

/// `p̲` for every target class; `p̲_j ≤ softmax_j` always.
pub fn shifted_softmax_probs(head: &Tensor, a: &[f64], sigma: &[f64], lambda: f64) -> Result<Vec<f64>> {
    Ok(shifted_log_probs(head, a, sigma, lambda)?
        .into_iter()
        .map(libm::exp)
        .collect())
}

/// `sup_{x ∈ [lo, hi]} |sigmoid(x) − Φ(βx)|` over `steps + 1` grid points.
pub fn probit_sup_error(beta: f64, lo: f64, hi: f64, steps: usize) -> f64 {
    (0..=steps)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / steps as f64;
            (math::sigmoid(x) - std_normal_cdf(beta * x)).abs()
        })
        .fold(0.0, f64::max)
}

/// Grid search for the minimax `β` on `[-8, 8]`; returns `(β, sup error)`.
pub fn fit_probit_beta() -> (f64, f64) {
    let err = |b: f64| probit_sup_error(b, -8.0, 8.0, 16_000);
    let mut best = (0.5, err(0.5));
    let mut b = 0.5;
    while b <= 0.8 {
        let e = err(b);
        if e < best.1 {
            best = (b, e);
        }
        b += 1e-3;
    }
    let center = best.0;
    for i in -100..=100 {
        let b = center + i as f64 * 1e-5;
        let e = err(b);
        if e < best.1 {
            best = (b, e);
        }
    }
    best
}
