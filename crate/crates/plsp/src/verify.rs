//! Closed-form versus Monte-Carlo checks on a freshly initialized model.

use plsp_core::math;
use plsp_core::model::{ClassifierParams, ModelConfig};
use plsp_core::objective::{mc_oracle_reg, McInstance};
use plsp_core::pldata::LabelSet;
use plsp_core::semstats::{self, ClassCovStats, DEFAULT_BETA, PI_SQUARED_OVER_8, SQRT_PI_OVER_8};
use plsp_core::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub lambda: f64,
    pub instances: usize,
    pub samples: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub seed: u64,
    /// Extra `β` values for the sup-error report.
    pub betas: Vec<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            instances: 50,
            samples: 2000,
            classes: 3,
            feature_dim: 8,
            seed: 0,
            betas: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    /// `PASS`, `FAIL` or `INFO`.
    pub status: &'static str,
    pub body: Value,
}

impl CheckLine {
    pub fn failed(&self) -> bool {
        self.status == "FAIL"
    }
}

/// One unlabeled instance pushed through a random model.
pub struct Probe {
    pub head: Tensor,
    pub weak: Vec<f64>,
    pub strong: Vec<f64>,
    pub candidates: LabelSet,
    pub stats: ClassCovStats,
}

impl Probe {
    pub fn instance<'a>(&'a self, tau: &'a [f64]) -> McInstance<'a> {
        // a fresh step: the snapshot equals the live parameters
        McInstance {
            frozen_head: &self.head,
            weak_feature: &self.weak,
            head: &self.head,
            strong_feature: &self.strong,
            candidates: &self.candidates,
            stats: &self.stats,
            tau,
        }
    }
}

fn noisy(x: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(rng);
            v + sigma * z
        })
        .collect()
}

pub fn random_probe(classes: usize, feature_dim: usize, rng: &mut ChaCha8Rng) -> plsp_core::Result<Probe> {
    let input_dim = 4;
    let model = ModelConfig {
        input_dim,
        hidden: vec![16],
        feature_dim,
        classes,
    };
    let params = ClassifierParams::init(&model, rng)?;
    let n = 8 * feature_dim * classes;
    let xs: Vec<f64> = (0..n * input_dim).map(|_| StandardNormal.sample(rng)).collect();
    let feats = params.features(&Tensor::from_vec(n, input_dim, xs))?;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut stats = ClassCovStats::new(classes, feature_dim);
    stats.update(&feats, &labels)?;

    let x: Vec<f64> = (0..input_dim).map(|_| StandardNormal.sample(rng)).collect();
    let weak = params.extract_features(&noisy(&x, 0.05, rng))?;
    let strong = params.extract_features(&noisy(&x, 0.3, rng))?;
    let candidates = loop {
        let labels: Vec<usize> = (0..classes).filter(|_| rng.random::<bool>()).collect();
        if !labels.is_empty() && labels.len() < classes {
            break LabelSet::from_labels(classes, labels);
        }
    };
    Ok(Probe {
        head: params.head().clone(),
        weak,
        strong,
        candidates,
        stats,
    })
}

/// Runs every check; the returned lines are in reporting order.
pub fn run_checks(opts: &VerifyOptions) -> plsp_core::Result<Vec<CheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let tau = vec![0.0; opts.classes];
    let mut lines = Vec::new();

    let mut passed = 0;
    let mut worst = f64::INFINITY;
    let mut zero_dev: f64 = 0.0;
    for _ in 0..opts.instances {
        let probe = random_probe(opts.classes, opts.feature_dim, &mut rng)?;
        let inst = probe.instance(&tau);
        let est = mc_oracle_reg(&inst, opts.lambda, DEFAULT_BETA, 0.0, opts.samples, &mut rng)?;
        let margin = est.closed_strong_ce - (est.strong_ce - 3.0 * est.strong_ce_se);
        worst = worst.min(margin);
        // equality up to round-off when the covariance is degenerate
        if margin >= -1e-12 {
            passed += 1;
        }

        let z = plsp_core::model::logits(&probe.strong, &probe.head)?;
        let sigma = probe.stats.covariance(0);
        let shifted = semstats::shifted_log_probs(&probe.head, &probe.strong, sigma, 0.0)?;
        for (a, b) in shifted.iter().zip(math::log_softmax(&z)) {
            zero_dev = zero_dev.max((a - b).abs());
        }
        let at_zero = mc_oracle_reg(&inst, 0.0, DEFAULT_BETA, 0.0, 4, &mut rng)?;
        zero_dev = zero_dev
            .max((at_zero.strong_ce - at_zero.closed_strong_ce).abs())
            .max(at_zero.reg_se);
    }
    lines.push(CheckLine {
        status: if passed == opts.instances { "PASS" } else { "FAIL" },
        body: json!({
            "check": "bound_direction",
            "lambda": opts.lambda,
            "instances": opts.instances,
            "samples": opts.samples,
            "passed": passed,
            "worst_margin": if opts.instances == 0 { 0.0 } else { worst },
        }),
    });
    lines.push(CheckLine {
        status: if zero_dev <= 1e-9 { "PASS" } else { "FAIL" },
        body: json!({
            "check": "zero_lambda_reduction",
            "instances": opts.instances,
            "max_deviation": zero_dev,
        }),
    });

    let mut betas = vec![
        ("default", DEFAULT_BETA),
        ("sqrt_pi_over_8", SQRT_PI_OVER_8),
        ("pi_squared_over_8", PI_SQUARED_OVER_8),
    ];
    betas.extend(opts.betas.iter().map(|&b| ("user", b)));
    for (name, beta) in betas {
        lines.push(CheckLine {
            status: "INFO",
            body: json!({
                "check": "probit_sup_error",
                "candidate": name,
                "beta": beta,
                "sup_error": semstats::probit_sup_error(beta, -8.0, 8.0, 16_000),
            }),
        });
    }
    let (beta, err) = semstats::fit_probit_beta();
    lines.push(CheckLine {
        status: "INFO",
        body: json!({ "check": "probit_beta_fit", "beta": beta, "sup_error": err }),
    });
    Ok(lines)
}
