mod common;

use common::rng;
use plsp_core::model::{ClassifierParams, Dense, ModelConfig};
use plsp_core::objective::build_pseudo_split;
use plsp_core::pldata::{make_blobs, FeatureShape, GenSpec, LabelSet, PlDataset, Strategy};
use plsp_core::sgd::SgdConfig;
use plsp_core::tensor::Tensor;
use plsp_core::trainer::{self, init_params, EpochReport, Stage, TrainConfig};

fn blobs(n: usize, classes: usize, q: f64, seed: u64) -> PlDataset {
    let b = make_blobs(n, classes, 2, 6.0, &mut rng(seed)).unwrap();
    b.into_dataset(
        classes,
        &GenSpec {
            strategy: Strategy::Fps { q },
            seed: seed + 1,
        },
    )
    .unwrap()
}

fn tiny_model(classes: usize) -> ModelConfig {
    ModelConfig {
        input_dim: 2,
        hidden: vec![16],
        feature_dim: 8,
        classes,
    }
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        k: 10,
        pretrain_epochs: 2,
        epochs: 3,
        iterations: 5,
        batch_labeled: 16,
        batch_unlabeled: 32,
        lambda0: 0.05,
        deterministic: true,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn accuracy(params: &ClassifierParams, data: &PlDataset) -> f64 {
    let pred = params.predict(&data.all_features()).unwrap();
    let truth = data.truth().unwrap();
    let hits = pred.iter().zip(truth).filter(|(p, t)| **p == **t as usize).count();
    hits as f64 / data.len() as f64
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let data = blobs(60, 3, 0.3, 1);
    let p0 = init_params(&tiny_model(3), 9).unwrap();
    let mut cfg = quick_config();
    cfg.pretrain_epochs = 0;
    assert_eq!(trainer::pretrain(&data, p0.clone(), &cfg).unwrap(), p0);
    cfg.epochs = 0;
    let mut seen = 0;
    let out = trainer::train_ss(&data, p0.clone(), &cfg, &mut |_, _| seen += 1).unwrap();
    assert_eq!(out, p0);
    assert_eq!(seen, 0);
}

#[test]
fn unambiguous_candidates_reduce_to_supervised_training() {
    let classes = 4;
    let b = make_blobs(600, classes, 2, 6.0, &mut rng(11)).unwrap();
    let cands = b
        .truth
        .iter()
        .map(|&y| LabelSet::from_labels(classes, [y as usize]))
        .collect();
    let data = PlDataset::new(classes, FeatureShape::Flat(2), b.features, cands, Some(b.truth)).unwrap();
    let cfg = TrainConfig {
        pretrain_epochs: 10,
        seed: 4,
        ..TrainConfig::default()
    };
    let p = trainer::pretrain(&data, init_params(&tiny_model(classes), 4).unwrap(), &cfg).unwrap();
    let acc = accuracy(&p, &data);
    assert!(acc >= 0.99, "training accuracy {acc}");
}

#[test]
fn full_batch_gradient_descent_never_increases_the_df_loss() {
    let data = blobs(120, 4, 0.5, 21);
    let cfg = TrainConfig {
        pretrain_epochs: 60,
        iterations: 1,
        batch_unlabeled: 1000,
        sgd: SgdConfig {
            learning_rate: 0.02,
            momentum: 0.0,
            weight_decay: 0.0,
        },
        ..TrainConfig::default()
    };
    let mut losses = Vec::new();
    let mut t = trainer::Trainer::new(&data, init_params(&tiny_model(4), 2).unwrap(), cfg).unwrap();
    t.pretrain(60, &mut |r, _| losses.push(r.l_df)).unwrap();
    assert_eq!(losses.len(), 60);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
    }
    assert!(losses[59] < losses[0]);
}

/// Hand-written forward/backward for `mean_i Σ_{j∉C_i} −log(1−p_ij)`.
fn complementary_grads(params: &ClassifierParams, x: &Tensor, cands: &[LabelSet]) -> Vec<Vec<f64>> {
    let layers: &[Dense] = params.layers();
    let head = params.head();
    let l = params.classes();
    let n = x.rows();
    let mut grads: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
    for i in 0..n {
        // forward, keeping every activation
        let mut acts = vec![x.row(i).to_vec()];
        for layer in layers {
            let h = acts.last().unwrap();
            let (din, dout) = (layer.input_dim(), layer.output_dim());
            let out: Vec<f64> = (0..dout)
                .map(|o| {
                    let s: f64 = (0..din).map(|k| h[k] * layer.weight.get(k, o)).sum();
                    (s + layer.bias.get(0, o)).max(0.0)
                })
                .collect();
            acts.push(out);
        }
        let a = acts.last().unwrap().clone();
        let z: Vec<f64> = (0..l).map(|j| (0..a.len()).map(|k| head.get(j, k) * a[k]).sum()).collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|v| v / s).collect();
        // d/dz_k of −log(1−p_j) = p_j(δ_jk − p_k)/(1−p_j)
        let mut dz = vec![0.0; l];
        for j in (0..l).filter(|&j| !cands[i].contains(j)) {
            let r = p[j] / (1.0 - p[j]);
            for k in 0..l {
                let delta = if j == k { 1.0 } else { 0.0 };
                dz[k] += r * (delta - p[k]) / n as f64;
            }
        }
        let hi = grads.len() - 1;
        let mut da = vec![0.0; a.len()];
        for j in 0..l {
            for k in 0..a.len() {
                grads[hi][j * a.len() + k] += dz[j] * a[k];
                da[k] += dz[j] * head.get(j, k);
            }
        }
        for (li, layer) in layers.iter().enumerate().rev() {
            let input = &acts[li];
            let output = &acts[li + 1];
            let dout = layer.output_dim();
            let dpre: Vec<f64> = (0..dout).map(|o| if output[o] > 0.0 { da[o] } else { 0.0 }).collect();
            let mut din = vec![0.0; input.len()];
            for k in 0..input.len() {
                for o in 0..dout {
                    grads[2 * li][k * dout + o] += input[k] * dpre[o];
                    din[k] += layer.weight.get(k, o) * dpre[o];
                }
            }
            for o in 0..dout {
                grads[2 * li + 1][o] += dpre[o];
            }
            da = din;
        }
    }
    grads
}

#[test]
fn zero_gamma_and_lambda_follow_the_complementary_loss_alone() {
    let data = blobs(40, 4, 0.4, 31);
    let cfg = TrainConfig {
        gamma0: 0.0,
        lambda0: 0.0,
        k: 3,
        epochs: 4,
        iterations: 3,
        batch_unlabeled: 1000,
        seed: 8,
        ..TrainConfig::default()
    };
    let p0 = init_params(&tiny_model(4), 8).unwrap();
    let got = trainer::train_ss(&data, p0.clone(), &cfg, &mut |_, _| {}).unwrap();
    assert!(got.head().max_abs_diff(p0.head()) > 1e-3);

    // Every Ω_u instance is in every batch, so only the split matters.
    let mut p = p0;
    let mut velocity: Vec<Vec<f64>> = p.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
    for _ in 0..cfg.epochs {
        let split = build_pseudo_split(&data, &p, cfg.k).unwrap();
        let x = data.gather(&split.unlabeled);
        let cands: Vec<LabelSet> = split.unlabeled.iter().map(|&i| data.candidates()[i].clone()).collect();
        for _ in 0..cfg.iterations {
            let g = complementary_grads(&p, &x, &cands);
            for ((t, g), v) in p.tensors_mut().into_iter().zip(&g).zip(&mut velocity) {
                for ((w, &gw), vw) in t.data_mut().iter_mut().zip(g).zip(v.iter_mut()) {
                    *vw = cfg.sgd.momentum * *vw + gw + cfg.sgd.weight_decay * *w;
                    *w -= cfg.sgd.learning_rate * *vw;
                }
            }
        }
    }
    for (a, b) in got.tensors().iter().zip(p.tensors()) {
        let diff = a.max_abs_diff(b);
        assert!(diff < 1e-9, "parameter drift {diff}");
    }
}

fn record(cfg: &TrainConfig, data: &PlDataset) -> (Vec<EpochReport>, ClassifierParams) {
    let mut reports = Vec::new();
    let p0 = init_params(&tiny_model(data.classes()), cfg.seed).unwrap();
    let p = trainer::train_full(data, p0, cfg, &mut |r, _| reports.push(r.clone())).unwrap();
    (reports, p)
}

#[test]
fn identical_seeds_give_identical_runs() {
    let data = blobs(90, 3, 0.5, 41);
    let cfg = quick_config();
    let (ra, pa) = record(&cfg, &data);
    let (rb, pb) = record(&cfg, &data);
    assert_eq!(ra.len(), cfg.pretrain_epochs + cfg.epochs);
    let bits = |rs: &[EpochReport]| -> Vec<u64> {
        rs.iter()
            .flat_map(|r| [r.l_df, r.l_l, r.r_u, r.l_cl, r.total, r.h_pass_rate].map(f64::to_bits))
            .collect()
    };
    assert_eq!(bits(&ra), bits(&rb));
    assert_eq!(ra, rb);
    assert_eq!(pa, pb);
    let other = TrainConfig { seed: 4, ..cfg };
    assert_ne!(record(&other, &data).1, pa);
}

#[test]
fn split_sizes_and_schedules_hold_every_epoch() {
    let data = blobs(90, 3, 0.5, 51);
    let cfg = quick_config();
    let (reports, _) = record(&cfg, &data);
    let ss: Vec<_> = reports.iter().filter(|r| r.stage == Stage::SemiSupervised).collect();
    assert_eq!(ss.len(), cfg.epochs);
    for (t, r) in ss.iter().enumerate() {
        assert_eq!(r.epoch, t);
        assert_eq!(r.labeled + r.unlabeled, data.len());
        assert!(r.labeled <= cfg.k * data.classes());
        assert_eq!(r.gamma, trainer::schedule_gamma(t, cfg.epochs, cfg.gamma0));
        assert_eq!(r.lambda, trainer::schedule_lambda(t, cfg.epochs, cfg.lambda0));
        assert!(r.tau.iter().all(|&v| (cfg.tau_floor..=cfg.tau0).contains(&v)));
        assert!((0.0..=1.0).contains(&r.h_pass_rate));
    }
    assert_eq!(ss[0].gamma, 0.0);
    assert_eq!(ss[0].lambda, 0.0);
}

#[test]
fn k_zero_never_uses_the_labeled_term_and_still_trains() {
    let data = blobs(90, 3, 0.5, 61);
    let cfg = TrainConfig {
        k: 0,
        pretrain_epochs: 0,
        ..quick_config()
    };
    let p0 = init_params(&tiny_model(3), cfg.seed).unwrap();
    let mut reports = Vec::new();
    let p = trainer::train_ss(&data, p0.clone(), &cfg, &mut |r, _| reports.push(r.clone())).unwrap();
    assert!(reports.iter().all(|r| r.l_l == 0.0 && r.labeled == 0 && r.unlabeled == data.len()));
    assert!(reports.iter().all(|r| r.l_cl > 0.0));
    assert_ne!(p, p0);
}

#[test]
fn k_at_least_n_empties_the_unlabeled_side() {
    let data = blobs(60, 3, 0.5, 71);
    let cfg = TrainConfig {
        k: 1000,
        ..quick_config()
    };
    let (reports, _) = record(&cfg, &data);
    for r in reports.iter().filter(|r| r.stage == Stage::SemiSupervised) {
        assert_eq!(r.labeled, data.len());
        assert_eq!(r.unlabeled, 0);
        assert_eq!((r.r_u, r.l_cl), (0.0, 0.0));
        assert!(r.total.is_finite());
    }
}

#[test]
fn mismatched_model_is_rejected() {
    let data = blobs(30, 3, 0.5, 81);
    let p = init_params(&tiny_model(4), 0).unwrap();
    assert!(trainer::Trainer::new(&data, p, quick_config()).is_err());
    let bad = TrainConfig {
        tau0: 0.5,
        ..quick_config()
    };
    let p = init_params(&tiny_model(3), 0).unwrap();
    assert!(trainer::Trainer::new(&data, p, bad).is_err());
}
