//! Weak and strong input perturbations.
//!
//! Image records (row-major `H×W×Ch`) get horizontal flip, zero-pad-and-crop,
//! and (strong only) a zeroed square cutout. Flat vectors get Gaussian jitter
//! and (strong only) Bernoulli feature masking.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::pldata::FeatureShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentKind {
    Weak,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    pub flip_prob: f64,
    pub pad: usize,
    /// Side of the zeroed square; `0` disables cutout.
    pub cutout_size: usize,
    pub vector_jitter_sigma: f64,
    pub vector_mask_prob: f64,
}

impl AugmentSpec {
    pub fn weak() -> Self {
        Self {
            kind: AugmentKind::Weak,
            flip_prob: 0.5,
            pad: 4,
            cutout_size: 0,
            vector_jitter_sigma: 0.05,
            vector_mask_prob: 0.0,
        }
    }

    /// Cutout defaults to a quarter of the shorter image side.
    pub fn strong(shape: FeatureShape) -> Self {
        let cutout_size = match shape {
            FeatureShape::Image { height, width, .. } => height.min(width) / 4,
            FeatureShape::Flat(_) => 0,
        };
        Self {
            kind: AugmentKind::Strong,
            flip_prob: 0.5,
            pad: 4,
            cutout_size,
            vector_jitter_sigma: 0.15,
            vector_mask_prob: 0.2,
        }
    }

    /// Every random component disabled.
    pub fn identity(kind: AugmentKind) -> Self {
        Self {
            kind,
            flip_prob: 0.0,
            pad: 0,
            cutout_size: 0,
            vector_jitter_sigma: 0.0,
            vector_mask_prob: 0.0,
        }
    }

    pub fn validate(&self, shape: FeatureShape) -> Result<()> {
        for (name, p) in [
            ("flip_prob", self.flip_prob),
            ("vector_mask_prob", self.vector_mask_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(name, "probability outside [0, 1]"));
            }
        }
        if !(self.vector_jitter_sigma >= 0.0 && self.vector_jitter_sigma.is_finite()) {
            return Err(invalid("vector_jitter_sigma", "must be finite and non-negative"));
        }
        if let FeatureShape::Image { height, width, .. } = shape {
            if self.cutout_size > height.min(width) {
                return Err(invalid("cutout_size", "larger than the image"));
            }
        }
        Ok(())
    }

    /// Applies the pipeline for `self.kind` to one record.
    pub fn apply<R: Rng + ?Sized>(&self, x: &[f64], shape: FeatureShape, rng: &mut R) -> Vec<f64> {
        match shape {
            FeatureShape::Flat(_) => {
                let mut out = jitter(x, self.vector_jitter_sigma, rng);
                if self.kind == AugmentKind::Strong && self.vector_mask_prob > 0.0 {
                    for v in &mut out {
                        if rng.random::<f64>() < self.vector_mask_prob {
                            *v = 0.0;
                        }
                    }
                }
                out
            }
            FeatureShape::Image {
                height,
                width,
                channels,
            } => {
                let grid = Grid {
                    height,
                    width,
                    channels,
                };
                let mut out = x.to_vec();
                if self.flip_prob > 0.0 && rng.random::<f64>() < self.flip_prob {
                    out = grid.flip_horizontal(&out);
                }
                if self.pad > 0 {
                    let span = 2 * self.pad + 1;
                    let dy = rng.random_range(0..span) as isize - self.pad as isize;
                    let dx = rng.random_range(0..span) as isize - self.pad as isize;
                    out = grid.shift(&out, dy, dx);
                }
                if self.kind == AugmentKind::Strong && self.cutout_size > 0 {
                    let s = self.cutout_size;
                    let top = rng.random_range(0..=height - s);
                    let left = rng.random_range(0..=width - s);
                    grid.zero_square(&mut out, top, left, s);
                }
                out
            }
        }
    }
}

fn jitter<R: Rng + ?Sized>(x: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return x.to_vec();
    }
    x.iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(rng);
            v + sigma * z
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Grid {
    height: usize,
    width: usize,
    channels: usize,
}

impl Grid {
    fn at(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    fn flip_horizontal(&self, img: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; img.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out[self.at(y, self.width - 1 - x, c)] = img[self.at(y, x, c)];
                }
            }
        }
        out
    }

    /// Zero-pad then crop back to `H×W` at offset `(dy, dx)` from center.
    fn shift(&self, img: &[f64], dy: isize, dx: isize) -> Vec<f64> {
        let mut out = alloc::vec![0.0; img.len()];
        for y in 0..self.height {
            let sy = y as isize + dy;
            if sy < 0 || sy >= self.height as isize {
                continue;
            }
            for x in 0..self.width {
                let sx = x as isize + dx;
                if sx < 0 || sx >= self.width as isize {
                    continue;
                }
                for c in 0..self.channels {
                    out[self.at(y, x, c)] = img[self.at(sy as usize, sx as usize, c)];
                }
            }
        }
        out
    }

    fn zero_square(&self, img: &mut [f64], top: usize, left: usize, side: usize) {
        for y in top..top + side {
            for x in left..left + side {
                for c in 0..self.channels {
                    img[self.at(y, x, c)] = 0.0;
                }
            }
        }
    }
}

/// Branch tag for augmentation substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Weak = 1,
    Strong = 2,
}

/// Independent generator for `(seed, epoch, iteration, instance, branch)`.
pub fn substream(seed: u64, epoch: u64, iteration: u64, instance: u64, branch: Branch) -> ChaCha8Rng {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for word in [epoch, iteration, instance, branch as u64] {
        h = splitmix(h ^ word);
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
