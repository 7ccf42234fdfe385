//! The two-stage training loop: disambiguation-free pre-training, then
//! semi-supervised training on a per-epoch pseudo split with ramped
//! `γ`, `λ` and curriculum thresholds `τ`.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{substream, AugmentSpec, Branch};
use crate::error::{invalid, Error, Result};
use crate::model::{ClassifierParams, ModelConfig};
use crate::objective::{self, PseudoSplit, SsBatch, SsWeights};
use crate::pldata::PlDataset;
use crate::semstats::{ClassCovStats, DEFAULT_BETA};
use crate::sgd::{Sgd, SgdConfig};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma0: f64,
    pub lambda0: f64,
    pub tau0: f64,
    /// Pseudo-labeled instances kept per class.
    pub k: usize,
    pub pretrain_epochs: usize,
    pub epochs: usize,
    /// Mini-batches per epoch, in both stages.
    pub iterations: usize,
    pub batch_labeled: usize,
    /// Also the pre-training batch size.
    pub batch_unlabeled: usize,
    pub sgd: SgdConfig,
    pub beta: f64,
    pub tau_floor: f64,
    pub eig_floor: f64,
    pub seed: u64,
    pub deterministic: bool,
    /// `None` selects [`AugmentSpec::weak`].
    pub weak_augment: Option<AugmentSpec>,
    /// `None` selects [`AugmentSpec::strong`] for the dataset shape.
    pub strong_augment: Option<AugmentSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma0: 1.0,
            lambda0: 0.01,
            tau0: 0.75,
            k: 200,
            pretrain_epochs: 10,
            epochs: 250,
            iterations: 200,
            batch_labeled: 64,
            batch_unlabeled: 256,
            sgd: SgdConfig::default(),
            beta: DEFAULT_BETA,
            tau_floor: 0.5,
            eig_floor: 0.0,
            seed: 0,
            deterministic: false,
            weak_augment: None,
            strong_augment: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.5 && self.tau0 <= 1.0) {
            return Err(invalid("tau0", "must lie in (0.5, 1]"));
        }
        if !(self.tau_floor >= 0.0 && self.tau_floor <= self.tau0) {
            return Err(invalid("tau_floor", "must lie in [0, tau0]"));
        }
        for (name, v) in [
            ("gamma0", self.gamma0),
            ("lambda0", self.lambda0),
            ("eig_floor", self.eig_floor),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be finite and non-negative"));
            }
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", "must be finite and positive"));
        }
        if self.batch_unlabeled == 0 || self.batch_labeled == 0 {
            return Err(invalid("batch size", "must be at least 1"));
        }
        self.sgd.validate()
    }
}

/// `min((t/T)·c₀, c₀)`.
pub fn schedule_gamma(t: usize, total: usize, gamma0: f64) -> f64 {
    ramp(t, total, gamma0)
}

/// `min((t/T)·c₀, c₀)`.
pub fn schedule_lambda(t: usize, total: usize, lambda0: f64) -> f64 {
    ramp(t, total, lambda0)
}

fn ramp(t: usize, total: usize, c0: f64) -> f64 {
    if total == 0 {
        return c0;
    }
    (t as f64 / total as f64 * c0).min(c0)
}

/// Curriculum thresholds `clamp(σ(j)/max σ · τ₀, τ_floor, τ₀)`; all-zero counts give `τ₀`.
pub fn update_tau(confident: &[u64], tau0: f64, tau_floor: f64) -> Vec<f64> {
    let max = confident.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return vec![tau0; confident.len()];
    }
    confident
        .iter()
        .map(|&s| (s as f64 / max as f64 * tau0).clamp(tau_floor, tau0))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    pub epoch: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub tau: Vec<f64>,
    /// Confident predictions per class so far in this epoch.
    pub confident: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    SemiSupervised,
}

/// Per-epoch means of the batch losses plus split and schedule state.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub stage: Stage,
    pub epoch: usize,
    /// Disambiguation-free loss; pre-training only.
    pub l_df: f64,
    pub l_l: f64,
    pub r_u: f64,
    pub l_cl: f64,
    pub total: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub h_pass_rate: f64,
    /// Thresholds in effect during the epoch.
    pub tau: Vec<f64>,
    pub labeled: usize,
    pub unlabeled: usize,
    pub clamped: usize,
    pub skipped: usize,
}

impl EpochReport {
    fn empty(stage: Stage, epoch: usize, classes: usize) -> Self {
        Self {
            stage,
            epoch,
            l_df: 0.0,
            l_l: 0.0,
            r_u: 0.0,
            l_cl: 0.0,
            total: 0.0,
            gamma: 0.0,
            lambda: 0.0,
            h_pass_rate: 0.0,
            tau: vec![0.0; classes],
            labeled: 0,
            unlabeled: 0,
            clamped: 0,
            skipped: 0,
        }
    }
}

const SAMPLING_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// He-initialized parameters drawn from the seed's init stream.
pub fn init_params(model: &ModelConfig, seed: u64) -> Result<ClassifierParams> {
    ClassifierParams::init(model, &mut stream_rng(seed, INIT_STREAM))
}

/// Owns Θ, the optimizer and the sampling stream across both stages.
#[derive(Debug, Clone)]
pub struct Trainer<'d> {
    dataset: &'d PlDataset,
    config: TrainConfig,
    params: ClassifierParams,
    optimizer: Sgd,
    rng: ChaCha8Rng,
    weak: AugmentSpec,
    strong: AugmentSpec,
}

impl<'d> Trainer<'d> {
    pub fn new(dataset: &'d PlDataset, params: ClassifierParams, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if params.input_dim() != dataset.shape().len() {
            return Err(Error::ShapeMismatch {
                context: "model input",
                expected: [1, dataset.shape().len()],
                found: [1, params.input_dim()],
            });
        }
        if params.classes() != dataset.classes() {
            return Err(invalid("model", "class count differs from the dataset"));
        }
        let weak = config.weak_augment.unwrap_or_else(AugmentSpec::weak);
        let strong = config
            .strong_augment
            .unwrap_or_else(|| AugmentSpec::strong(dataset.shape()));
        weak.validate(dataset.shape())?;
        strong.validate(dataset.shape())?;
        Ok(Self {
            dataset,
            optimizer: Sgd::new(config.sgd)?,
            rng: stream_rng(config.seed, SAMPLING_STREAM),
            params,
            config,
            weak,
            strong,
        })
    }

    pub fn params(&self) -> &ClassifierParams {
        &self.params
    }

    pub fn into_params(self) -> ClassifierParams {
        self.params
    }

    fn step(&mut self, grads: &[Tensor]) -> Result<()> {
        let refs: Vec<&Tensor> = grads.iter().collect();
        self.optimizer.step(&mut self.params.tensors_mut(), &refs)
    }

    /// `epochs` epochs of the disambiguation-free loss with no augmentation.
    /// Batches of `B_u` walk a permutation reshuffled at every epoch start
    /// and whenever it runs out.
    pub fn pretrain(&mut self, epochs: usize, observer: &mut dyn FnMut(&EpochReport, &ClassifierParams)) -> Result<()> {
        self.optimizer.reset();
        let n = self.dataset.len();
        if n == 0 || epochs == 0 {
            return Ok(());
        }
        let batch = self.config.batch_unlabeled.min(n);
        let mut order: Vec<usize> = (0..n).collect();
        for epoch in 0..epochs {
            order.shuffle(&mut self.rng);
            let mut cursor = 0;
            let mut report = EpochReport::empty(Stage::Pretrain, epoch, self.dataset.classes());
            report.tau = vec![self.config.tau0; self.dataset.classes()];
            for _ in 0..self.config.iterations {
                if cursor + batch > n {
                    order.shuffle(&mut self.rng);
                    cursor = 0;
                }
                let idx = &order[cursor..cursor + batch];
                cursor += batch;
                let x = self.dataset.gather(idx);
                let cands: Vec<_> = idx.iter().map(|&i| self.dataset.candidates()[i].clone()).collect();
                let (loss, grads) = objective::df_objective(&self.params, &x, &cands)?;
                if !loss.value.is_finite() {
                    return Err(Error::NonFinite("pre-training loss"));
                }
                self.step(&grads)?;
                report.l_df += loss.value;
                report.clamped += loss.clamped;
            }
            if self.config.iterations > 0 {
                report.l_df /= self.config.iterations as f64;
            }
            report.total = report.l_df;
            report.unlabeled = n;
            observer(&report, &self.params);
        }
        Ok(())
    }

    fn sample_labeled(&mut self, split: &PseudoSplit) -> Vec<(usize, usize)> {
        let m = split.labeled.len();
        let b = self.config.batch_labeled;
        if m == 0 {
            Vec::new()
        } else if m < b {
            (0..b).map(|_| split.labeled[self.rng.random_range(0..m)]).collect()
        } else {
            index::sample(&mut self.rng, m, b)
                .into_iter()
                .map(|i| split.labeled[i])
                .collect()
        }
    }

    fn sample_unlabeled(&mut self, split: &PseudoSplit) -> Vec<usize> {
        let m = split.unlabeled.len();
        let b = self.config.batch_unlabeled.min(m);
        index::sample(&mut self.rng, m, b)
            .into_iter()
            .map(|i| split.unlabeled[i])
            .collect()
    }

    fn augmented(&self, idx: &[usize], epoch: usize, iteration: usize, branch: Branch) -> Tensor {
        let shape = self.dataset.shape();
        let spec = match branch {
            Branch::Weak => &self.weak,
            Branch::Strong => &self.strong,
        };
        let mut data = Vec::with_capacity(idx.len() * shape.len());
        for &i in idx {
            let x: Vec<f64> = self.dataset.instance(i).iter().map(|&v| v as f64).collect();
            let mut rng = substream(self.config.seed, epoch as u64, iteration as u64, i as u64, branch);
            data.extend(spec.apply(&x, shape, &mut rng));
        }
        Tensor::from_vec(idx.len(), shape.len(), data)
    }

    /// The semi-supervised stage over `config.epochs` epochs.
    pub fn train_ss(&mut self, observer: &mut dyn FnMut(&EpochReport, &ClassifierParams)) -> Result<()> {
        self.optimizer.reset();
        let classes = self.dataset.classes();
        let total_epochs = self.config.epochs;
        let mut stats = ClassCovStats::new(classes, self.params.feature_dim());
        let mut schedule = ScheduleState {
            epoch: 0,
            gamma: 0.0,
            lambda: 0.0,
            tau: vec![self.config.tau0; classes],
            confident: vec![0; classes],
        };
        for epoch in 0..total_epochs {
            schedule.epoch = epoch;
            schedule.gamma = schedule_gamma(epoch, total_epochs, self.config.gamma0);
            schedule.lambda = schedule_lambda(epoch, total_epochs, self.config.lambda0);
            schedule.confident.iter_mut().for_each(|c| *c = 0);
            let split = objective::build_pseudo_split(self.dataset, &self.params, self.config.k)?;
            let mut report = EpochReport::empty(Stage::SemiSupervised, epoch, classes);
            report.gamma = schedule.gamma;
            report.lambda = schedule.lambda;
            report.tau = schedule.tau.clone();
            report.labeled = split.labeled.len();
            report.unlabeled = split.unlabeled.len();
            let weights = SsWeights {
                gamma: schedule.gamma,
                lambda: schedule.lambda,
                beta: self.config.beta,
                tau: schedule.tau.clone(),
            };
            let (mut passed, mut drawn) = (0usize, 0usize);
            for iteration in 0..self.config.iterations {
                let labeled = self.sample_labeled(&split);
                let unlabeled = self.sample_unlabeled(&split);
                let frozen = self.params.snapshot_frozen();
                let l_idx: Vec<usize> = labeled.iter().map(|&(i, _)| i).collect();
                let labeled_y: Vec<usize> = labeled.iter().map(|&(_, y)| y).collect();
                let labeled_x = self.dataset.gather(&l_idx);
                if !labeled_y.is_empty() {
                    let feats = self.params.features(&labeled_x)?;
                    stats.update(&feats, &labeled_y)?;
                }
                let batch = SsBatch {
                    labeled_x,
                    labeled_y,
                    unlabeled_x: self.dataset.gather(&unlabeled),
                    weak_x: self.augmented(&unlabeled, epoch, iteration, Branch::Weak),
                    strong_x: self.augmented(&unlabeled, epoch, iteration, Branch::Strong),
                    candidates: unlabeled
                        .iter()
                        .map(|&i| self.dataset.candidates()[i].clone())
                        .collect(),
                };
                let out = objective::ss_objective(&self.params, &frozen, &stats, &batch, &weights)?;
                if !out.report.total.is_finite() {
                    return Err(Error::NonFinite("training loss"));
                }
                self.step(&out.grads)?;
                let r = &out.report;
                report.l_l += r.l_l;
                report.r_u += r.r_u;
                report.l_cl += r.l_cl;
                report.total += r.total;
                report.clamped += r.clamped;
                report.skipped += r.skipped;
                passed += r.passed;
                drawn += r.unlabeled;
                for (acc, c) in schedule.confident.iter_mut().zip(&r.confident) {
                    *acc += c;
                }
            }
            if self.config.iterations > 0 {
                let it = self.config.iterations as f64;
                report.l_l /= it;
                report.r_u /= it;
                report.l_cl /= it;
                report.total /= it;
            }
            report.h_pass_rate = if drawn == 0 { 0.0 } else { passed as f64 / drawn as f64 };
            schedule.tau = update_tau(&schedule.confident, self.config.tau0, self.config.tau_floor);
            observer(&report, &self.params);
        }
        Ok(())
    }
}

/// Pre-trains `params` for `config.pretrain_epochs` epochs.
pub fn pretrain(dataset: &PlDataset, params: ClassifierParams, config: &TrainConfig) -> Result<ClassifierParams> {
    let mut t = Trainer::new(dataset, params, config.clone())?;
    t.pretrain(config.pretrain_epochs, &mut |_, _| {})?;
    Ok(t.into_params())
}

/// Runs the semi-supervised stage from `params`, reporting every epoch.
pub fn train_ss(
    dataset: &PlDataset,
    params: ClassifierParams,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochReport, &ClassifierParams),
) -> Result<ClassifierParams> {
    let mut t = Trainer::new(dataset, params, config.clone())?;
    t.train_ss(observer)?;
    Ok(t.into_params())
}

/// Both stages with one sampling stream: pre-training then semi-supervised training.
pub fn train_full(
    dataset: &PlDataset,
    params: ClassifierParams,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochReport, &ClassifierParams),
) -> Result<ClassifierParams> {
    let mut t = Trainer::new(dataset, params, config.clone())?;
    t.pretrain(config.pretrain_epochs, observer)?;
    t.train_ss(observer)?;
    Ok(t.into_params())
}

/// The disambiguation-free baseline: the pre-training loss alone for the
/// same total epoch budget as both stages together.
pub fn df_baseline(
    dataset: &PlDataset,
    params: ClassifierParams,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochReport, &ClassifierParams),
) -> Result<ClassifierParams> {
    let mut t = Trainer::new(dataset, params, config.clone())?;
    t.pretrain(config.pretrain_epochs + config.epochs, observer)?;
    Ok(t.into_params())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramps() {
        assert_eq!(schedule_gamma(0, 10, 1.0), 0.0);
        assert_eq!(schedule_gamma(10, 10, 1.0), 1.0);
        assert_eq!(schedule_gamma(5, 10, 1.0), 0.5);
        assert_eq!(schedule_lambda(10, 10, 0.01), 0.01);
        assert_eq!(schedule_lambda(25, 10, 0.01), 0.01);
    }

    #[test]
    fn tau_cases() {
        assert_eq!(update_tau(&[100, 50, 0], 0.75, 0.5), vec![0.75, 0.5, 0.5]);
        assert_eq!(update_tau(&[7, 7], 0.75, 0.5), vec![0.75, 0.75]);
        assert_eq!(update_tau(&[0, 0, 0], 0.75, 0.5), vec![0.75; 3]);
        assert_eq!(update_tau(&[10, 9], 0.8, 0.5)[1], 0.9 * 0.8);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            tau0: 0.5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lambda0: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
