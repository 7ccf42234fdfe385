//! Loss terms of the two training stages.
//!
//! Pre-training minimizes the disambiguation-free loss [`loss_df`]. The
//! semi-supervised stage splits the data by class activation values
//! ([`build_pseudo_split`]) and minimizes
//! `γ·(L_l + R_u) + L_cl` ([`ss_objective`]), where every expectation over
//! semantic feature perturbations is replaced by a closed form from
//! [`crate::semstats`].
//!
//! Each semantic term has a plain evaluator (`loss_sup_semantic`,
//! `reg_consistency_semantic`, `loss_complementary_semantic`) and a graph
//! evaluator inside [`ss_objective`]; the two are computed independently.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Graph, NodeId};
use crate::error::{invalid, Error, Result};
use crate::math::{self, LOG_CLAMP};
use crate::model::{BoundParams, ClassifierParams, FrozenParams};
use crate::pldata::{LabelSet, PlDataset};
use crate::semstats::{self, ClassCovStats, SemanticSampler};
use crate::tensor::Tensor;

/// A loss value with the number of log arguments that hit the `1e-12` floor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScalarLoss {
    pub value: f64,
    pub clamped: usize,
}

fn clamped_log(p: f64, clamped: &mut usize) -> f64 {
    if p < LOG_CLAMP {
        *clamped += 1;
        libm::log(LOG_CLAMP)
    } else {
        libm::log(p)
    }
}

fn clamped_log_value(logp: f64, clamped: &mut usize) -> f64 {
    let floor = math::log_clamp_floor();
    if logp < floor {
        *clamped += 1;
        floor
    } else {
        logp
    }
}

fn check_rows(context: &'static str, left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch {
            context,
            left,
            right,
        });
    }
    Ok(())
}

/// Mean over rows of `(1/|C_i|)·Σ_{j∈C_i} −log p_ij`.
pub fn loss_df(probs: &Tensor, candidates: &[LabelSet]) -> Result<ScalarLoss> {
    check_rows("df loss rows", probs.rows(), candidates.len())?;
    if probs.rows() == 0 {
        return Ok(ScalarLoss::default());
    }
    let mut clamped = 0;
    let mut total = 0.0;
    for (i, c) in candidates.iter().enumerate() {
        let row = probs.row(i);
        let s: f64 = c.iter().map(|j| -clamped_log(row[j], &mut clamped)).sum();
        total += s / c.len() as f64;
    }
    Ok(ScalarLoss {
        value: total / probs.rows() as f64,
        clamped,
    })
}

/// `v_j = z_j·|z_j − 1|`.
pub fn cav_scores(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| v * (v - 1.0).abs()).collect()
}

/// `argmax_{j∈C} v_j`, ties to the lowest class.
pub fn cav_pseudo_label(z: &[f64], candidates: &LabelSet) -> usize {
    let v = cav_scores(z);
    let mut best: Option<usize> = None;
    for j in candidates.iter() {
        if best.map_or(true, |b| v[j] > v[b]) {
            best = Some(j);
        }
    }
    best.expect("candidate sets are non-empty")
}

/// `Ω_l` as `(instance, pseudo label)` pairs and `Ω_u` as instance indices,
/// both ascending by instance.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PseudoSplit {
    pub labeled: Vec<(usize, usize)>,
    pub unlabeled: Vec<usize>,
}

impl PseudoSplit {
    /// Instances per class in `Ω_l`.
    pub fn labeled_per_class(&self, classes: usize) -> Vec<usize> {
        let mut out = vec![0; classes];
        for &(_, y) in &self.labeled {
            out[y] += 1;
        }
        out
    }
}

/// Pseudo-labels every row by candidate CAV, then keeps the `k` highest
/// scores per class (ties to lower index) as pseudo-labeled.
pub fn pseudo_split_from_logits(logits: &Tensor, candidates: &[LabelSet], k: usize) -> Result<PseudoSplit> {
    check_rows("pseudo split rows", logits.rows(), candidates.len())?;
    let classes = logits.cols();
    let mut per_class: Vec<Vec<(f64, usize)>> = vec![Vec::new(); classes];
    for (i, c) in candidates.iter().enumerate() {
        let z = logits.row(i);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pseudo split logits"));
        }
        let y = cav_pseudo_label(z, c);
        per_class[y].push((cav_scores(z)[y], i));
    }
    let mut chosen: Vec<Option<usize>> = vec![None; candidates.len()];
    for (y, mut ranked) in per_class.into_iter().enumerate() {
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in ranked.iter().take(k) {
            chosen[i] = Some(y);
        }
    }
    let mut split = PseudoSplit::default();
    for (i, c) in chosen.into_iter().enumerate() {
        match c {
            Some(y) => split.labeled.push((i, y)),
            None => split.unlabeled.push(i),
        }
    }
    Ok(split)
}

/// [`pseudo_split_from_logits`] on un-augmented inputs through `params`.
pub fn build_pseudo_split(dataset: &PlDataset, params: &ClassifierParams, k: usize) -> Result<PseudoSplit> {
    let logits = params.logits(&dataset.all_features())?;
    pseudo_split_from_logits(&logits, dataset.candidates(), k)
}

/// `p^w` restricted to `C` and renormalized.
pub fn pseudo_target(pw: &[f64], candidates: &LabelSet) -> Result<Vec<f64>> {
    let mass: f64 = candidates.iter().map(|j| pw[j]).sum();
    if !(mass > 0.0) {
        return Err(Error::DegenerateMass);
    }
    let mut out = vec![0.0; pw.len()];
    for j in candidates.iter() {
        out[j] = pw[j] / mass;
    }
    Ok(out)
}

/// `max p ≥ τ(argmax)` and `argmax ∈ C`, ties to the lowest class.
pub fn confidence_indicator(pw: &[f64], candidates: &LabelSet, tau: &[f64]) -> bool {
    let top = math::argmax(pw);
    pw[top] >= tau[top] && candidates.contains(top)
}

/// `γ·(L_l + R_u) + L_cl`.
pub fn total_objective(l_l: f64, r_u: f64, l_cl: f64, gamma: f64) -> f64 {
    gamma * (l_l + r_u) + l_cl
}

/// `q[c]` = [`semstats::pair_quadratics`] of `head` under `Σ_c`, for every class.
fn quadratics_per_class(head: &Tensor, stats: &ClassCovStats) -> Result<Vec<Vec<f64>>> {
    (0..stats.classes())
        .map(|c| semstats::pair_quadratics(head, stats.covariance(c)))
        .collect()
}

fn check_stats(head: &Tensor, stats: &ClassCovStats) -> Result<()> {
    if stats.classes() != head.rows() || stats.dim() != head.cols() {
        return Err(Error::ShapeMismatch {
            context: "covariance statistics",
            expected: [head.rows(), head.cols()],
            found: [stats.classes(), stats.dim()],
        });
    }
    Ok(())
}

/// Mean of `−log p̲_{i y_i}` with `Σ_{y_i}` per row.
pub fn loss_sup_semantic(
    head: &Tensor,
    features: &Tensor,
    labels: &[usize],
    stats: &ClassCovStats,
    lambda: f64,
) -> Result<ScalarLoss> {
    check_rows("supervised loss rows", features.rows(), labels.len())?;
    check_stats(head, stats)?;
    if labels.is_empty() {
        return Ok(ScalarLoss::default());
    }
    let quad = quadratics_per_class(head, stats)?;
    let mut clamped = 0;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let logp = semstats::shifted_log_probs_with(head, features.row(i), &quad[y], lambda)?;
        total -= clamped_log_value(logp[y], &mut clamped);
    }
    Ok(ScalarLoss {
        value: total / labels.len() as f64,
        clamped,
    })
}

/// Mean of `Σ_{j∉C_i} −log(1 − p̲_ij)` with `Σ_{sigma_class_i}` per row.
pub fn loss_complementary_semantic(
    head: &Tensor,
    features: &Tensor,
    candidates: &[LabelSet],
    sigma_classes: &[usize],
    stats: &ClassCovStats,
    lambda: f64,
) -> Result<ScalarLoss> {
    check_rows("complementary loss rows", features.rows(), candidates.len())?;
    check_rows("complementary loss classes", sigma_classes.len(), candidates.len())?;
    check_stats(head, stats)?;
    if candidates.is_empty() {
        return Ok(ScalarLoss::default());
    }
    let quad = quadratics_per_class(head, stats)?;
    let mut clamped = 0;
    let mut total = 0.0;
    for (i, c) in candidates.iter().enumerate() {
        let logp = semstats::shifted_log_probs_with(head, features.row(i), &quad[sigma_classes[i]], lambda)?;
        for (j, lp) in logp.iter().enumerate() {
            if !c.contains(j) {
                total -= clamped_log(1.0 - libm::exp(*lp), &mut clamped);
            }
        }
    }
    Ok(ScalarLoss {
        value: total / candidates.len() as f64,
        clamped,
    })
}

/// Stop-gradient targets for the consistency regularizer, computed from the
/// weak branch under the frozen snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakTargets {
    /// `ŷ_i`: candidate CAV arg-max on the weak view; selects `Σ_ŷ`.
    pub pseudo_labels: Vec<usize>,
    /// `h_i·p̲̂_i`, or `None` when `h_i = 0` or the target was degenerate.
    pub targets: Vec<Option<Vec<f64>>>,
    /// Confident-prediction counts per class (`σ` increments).
    pub confident: Vec<u64>,
    pub passed: usize,
    pub skipped: usize,
}

pub fn weak_targets(
    frozen_head: &Tensor,
    weak_features: &Tensor,
    candidates: &[LabelSet],
    stats: &ClassCovStats,
    lambda: f64,
    beta: f64,
    tau: &[f64],
) -> Result<WeakTargets> {
    check_rows("weak branch rows", weak_features.rows(), candidates.len())?;
    check_stats(frozen_head, stats)?;
    check_rows("thresholds", tau.len(), frozen_head.rows())?;
    let quad = quadratics_per_class(frozen_head, stats)?;
    let mut out = WeakTargets {
        pseudo_labels: Vec::with_capacity(candidates.len()),
        targets: Vec::with_capacity(candidates.len()),
        confident: vec![0; frozen_head.rows()],
        passed: 0,
        skipped: 0,
    };
    for (i, c) in candidates.iter().enumerate() {
        let a = weak_features.row(i);
        let z = crate::model::logits(a, frozen_head)?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("weak-branch logits"));
        }
        let y = cav_pseudo_label(&z, c);
        out.pseudo_labels.push(y);
        let pw = semstats::probit_weak_probs_with(frozen_head, a, &quad[y], lambda, beta)?;
        let target = match pseudo_target(&pw, c) {
            Ok(t) => t,
            Err(Error::DegenerateMass) => {
                out.skipped += 1;
                out.targets.push(None);
                continue;
            }
            Err(e) => return Err(e),
        };
        if confidence_indicator(&pw, c, tau) {
            out.passed += 1;
            out.confident[y] += 1;
            out.targets.push(Some(target));
        } else {
            out.targets.push(None);
        }
    }
    Ok(out)
}

/// `Σ_j t_j log t_j` with `0·log 0 = 0`.
fn neg_entropy(t: &[f64]) -> f64 {
    t.iter().filter(|&&v| v > 0.0).map(|&v| v * libm::log(v)).sum()
}

/// Mean over the batch (every row in the denominator) of
/// `h·KL(p̲̂ ‖ p̲^s)` with `Σ_ŷ` per row.
pub fn reg_consistency_semantic(
    weak: &WeakTargets,
    head: &Tensor,
    strong_features: &Tensor,
    stats: &ClassCovStats,
    lambda: f64,
) -> Result<ScalarLoss> {
    check_rows("strong branch rows", strong_features.rows(), weak.targets.len())?;
    check_stats(head, stats)?;
    if weak.targets.is_empty() {
        return Ok(ScalarLoss::default());
    }
    let quad = quadratics_per_class(head, stats)?;
    let mut clamped = 0;
    let mut total = 0.0;
    for (i, t) in weak.targets.iter().enumerate() {
        let Some(t) = t else { continue };
        let y = weak.pseudo_labels[i];
        let logp = semstats::shifted_log_probs_with(head, strong_features.row(i), &quad[y], lambda)?;
        let cross: f64 = t
            .iter()
            .zip(&logp)
            .filter(|(&tj, _)| tj > 0.0)
            .map(|(&tj, &lp)| tj * clamped_log_value(lp, &mut clamped))
            .sum();
        total += neg_entropy(t) - cross;
    }
    Ok(ScalarLoss {
        value: total / weak.targets.len() as f64,
        clamped,
    })
}

/// Inputs for one semi-supervised step. The three unlabeled views share row order.
#[derive(Debug, Clone)]
pub struct SsBatch {
    pub labeled_x: Tensor,
    pub labeled_y: Vec<usize>,
    pub unlabeled_x: Tensor,
    pub weak_x: Tensor,
    pub strong_x: Tensor,
    pub candidates: Vec<LabelSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsWeights {
    pub gamma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchLossReport {
    pub l_l: f64,
    pub r_u: f64,
    pub l_cl: f64,
    pub gamma: f64,
    pub total: f64,
    /// Confident predictions per class in this batch.
    pub confident: Vec<u64>,
    pub passed: usize,
    pub unlabeled: usize,
    pub skipped: usize,
    pub clamped: usize,
}

impl BatchLossReport {
    /// Fraction of the unlabeled batch with `h = 1`; 0 for an empty batch.
    pub fn h_pass_rate(&self) -> f64 {
        if self.unlabeled == 0 {
            0.0
        } else {
            self.passed as f64 / self.unlabeled as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct SsOutcome {
    pub report: BatchLossReport,
    /// Gradient of the total w.r.t. each tensor of [`ClassifierParams::tensors`].
    pub grads: Vec<Tensor>,
}

/// Graph form of the shifted log-probabilities for every row of `z`, with
/// row `i` using `Σ_{classes[i]}`. Exactly `log_softmax` when `λ = 0`.
fn shifted_log_probs_graph(
    g: &mut Graph,
    z: NodeId,
    head: NodeId,
    stats: &ClassCovStats,
    classes: &[usize],
    lambda: f64,
) -> NodeId {
    if lambda == 0.0 {
        return g.log_softmax_rows(z);
    }
    let (b, l) = (g.value(z).rows(), g.value(z).cols());
    let ll = l * l;
    // Row `j·l + j'` of `diffs` is `e_j' − e_j`, so `diffs·W` stacks `u_{j'j}`.
    let mut diffs = Tensor::zeros(ll, l);
    let mut expand = Tensor::zeros(l, ll);
    for j in 0..l {
        for jp in 0..l {
            if jp != j {
                diffs.set(j * l + jp, jp, 1.0);
                diffs.set(j * l + jp, j, -1.0);
            }
            expand.set(jp, j * l + jp, 1.0);
        }
    }
    let diffs = g.constant(diffs);
    let u = g.matmul(diffs, head);
    let mut shift: Option<NodeId> = None;
    for c in 0..stats.classes() {
        let cov = stats.covariance(c);
        if cov.iter().all(|&v| v == 0.0) {
            continue;
        }
        let rows: Vec<f64> = classes.iter().map(|&y| if y == c { 1.0 } else { 0.0 }).collect();
        if rows.iter().all(|&v| v == 0.0) {
            continue;
        }
        let d = stats.dim();
        let sigma = g.constant(Tensor::from_vec(d, d, cov.to_vec()));
        let us = g.matmul(u, sigma);
        let prod = g.mul(us, u);
        let q = g.sum_rows(prod);
        let q = g.reshape(q, 1, ll);
        let sel = g.constant(Tensor::from_vec(b, 1, rows));
        let term = g.matmul(sel, q);
        shift = Some(match shift {
            Some(s) => g.add(s, term),
            None => term,
        });
    }
    let Some(shift) = shift else {
        return g.log_softmax_rows(z);
    };
    let expand = g.constant(expand);
    let zt = g.matmul(z, expand);
    let half = g.scale(shift, 0.5 * lambda);
    let s = g.add(zt, half);
    let s = g.reshape(s, b * l, l);
    let lse = g.row_logsumexp(s);
    let lse = g.reshape(lse, b, l);
    g.sub(z, lse)
}

fn count_below(t: &Tensor, floor: f64, mask: Option<&Tensor>) -> usize {
    t.data()
        .iter()
        .enumerate()
        .filter(|&(i, &v)| v < floor && mask.map_or(true, |m| m.data()[i] != 0.0))
        .count()
}

fn logits_node(g: &mut Graph, bound: &BoundParams, x: &Tensor) -> NodeId {
    let x = g.constant(x.clone());
    let a = bound.features(g, x);
    bound.logits(g, a)
}

fn validate_batch(params: &ClassifierParams, batch: &SsBatch, w: &SsWeights) -> Result<()> {
    let d = params.input_dim();
    let l = params.classes();
    check_rows("labeled batch", batch.labeled_x.rows(), batch.labeled_y.len())?;
    let b_u = batch.candidates.len();
    for (ctx, t) in [
        ("unlabeled batch", &batch.unlabeled_x),
        ("weak batch", &batch.weak_x),
        ("strong batch", &batch.strong_x),
    ] {
        check_rows(ctx, t.rows(), b_u)?;
    }
    for t in [&batch.labeled_x, &batch.unlabeled_x, &batch.weak_x, &batch.strong_x] {
        if t.rows() > 0 && t.cols() != d {
            return Err(Error::ShapeMismatch {
                context: "batch features",
                expected: [t.rows(), d],
                found: t.shape(),
            });
        }
    }
    if batch.labeled_y.iter().any(|&y| y >= l) {
        return Err(invalid("labeled_y", "pseudo label out of range"));
    }
    if batch.candidates.iter().any(|c| c.has_bits_beyond(l) || c.is_empty()) {
        return Err(invalid("candidates", "candidate set outside the label space"));
    }
    if !(w.gamma >= 0.0 && w.lambda >= 0.0) {
        return Err(invalid("weights", "gamma and lambda must be non-negative"));
    }
    check_rows("thresholds", w.tau.len(), l)
}

/// Evaluates `γ(L_l + R_u) + L_cl` on one batch and differentiates it w.r.t. Θ.
/// `frozen` supplies the stop-gradient weak branch.
pub fn ss_objective(
    params: &ClassifierParams,
    frozen: &FrozenParams,
    stats: &ClassCovStats,
    batch: &SsBatch,
    w: &SsWeights,
) -> Result<SsOutcome> {
    validate_batch(params, batch, w)?;
    check_stats(params.head(), stats)?;
    let l = params.classes();
    let b_l = batch.labeled_y.len();
    let b_u = batch.candidates.len();
    let fp = frozen.params();
    let weak_feats = fp.features(&batch.weak_x)?;
    let weak = weak_targets(fp.head(), &weak_feats, &batch.candidates, stats, w.lambda, w.beta, &w.tau)?;

    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let head = bound.head();
    let log_floor = math::log_clamp_floor();
    let mut clamped = 0;
    let mut l_l = None;
    let mut r_u = None;
    let mut l_cl = None;

    if b_l > 0 {
        let z = logits_node(&mut g, &bound, &batch.labeled_x);
        let logp = shifted_log_probs_graph(&mut g, z, head, stats, &batch.labeled_y, w.lambda);
        let mut onehot = Tensor::zeros(b_l, l);
        for (i, &y) in batch.labeled_y.iter().enumerate() {
            onehot.set(i, y, -1.0 / b_l as f64);
        }
        clamped += count_below(g.value(logp), log_floor, Some(&onehot));
        let logp = g.clamp_min(logp, log_floor);
        let onehot = g.constant(onehot);
        let picked = g.mul(onehot, logp);
        l_l = Some(g.sum(picked));
    }

    if b_u > 0 {
        if weak.passed > 0 {
            let z = logits_node(&mut g, &bound, &batch.strong_x);
            let logp = shifted_log_probs_graph(&mut g, z, head, stats, &weak.pseudo_labels, w.lambda);
            let mut target = Tensor::zeros(b_u, l);
            let mut entropy_part = 0.0;
            for (i, t) in weak.targets.iter().enumerate() {
                if let Some(t) = t {
                    entropy_part += neg_entropy(t);
                    for (j, &v) in t.iter().enumerate() {
                        target.set(i, j, -v / b_u as f64);
                    }
                }
            }
            clamped += count_below(g.value(logp), log_floor, Some(&target));
            let logp = g.clamp_min(logp, log_floor);
            let target = g.constant(target);
            let cross = g.mul(target, logp);
            let cross = g.sum(cross);
            r_u = Some(g.add_scalar(cross, entropy_part / b_u as f64));
        }

        let z = logits_node(&mut g, &bound, &batch.unlabeled_x);
        let logp = shifted_log_probs_graph(&mut g, z, head, stats, &weak.pseudo_labels, w.lambda);
        let p = g.exp(logp);
        let neg = g.scale(p, -1.0);
        let rest = g.add_scalar(neg, 1.0);
        let mut mask = Tensor::zeros(b_u, l);
        for (i, c) in batch.candidates.iter().enumerate() {
            for j in 0..l {
                if !c.contains(j) {
                    mask.set(i, j, -1.0 / b_u as f64);
                }
            }
        }
        clamped += count_below(g.value(rest), LOG_CLAMP, Some(&mask));
        let rest = g.clamp_min(rest, LOG_CLAMP);
        let log_rest = g.log(rest);
        let mask = g.constant(mask);
        let masked = g.mul(mask, log_rest);
        l_cl = Some(g.sum(masked));
    }

    let value = |g: &Graph, n: Option<NodeId>| n.map_or(0.0, |n| g.value(n).item());
    let (v_l, v_r, v_cl) = (value(&g, l_l), value(&g, r_u), value(&g, l_cl));
    let total = total_objective(v_l, v_r, v_cl, w.gamma);

    let ss = match (l_l, r_u) {
        (Some(a), Some(b)) => Some(g.add(a, b)),
        (a, b) => a.or(b),
    };
    let ss = ss.map(|n| g.scale(n, w.gamma));
    let root = match (ss, l_cl) {
        (Some(a), Some(b)) => Some(g.add(a, b)),
        (a, b) => a.or(b),
    };
    let grads = match root {
        Some(root) => {
            let gr = g.backward(root)?;
            bound
                .ids()
                .into_iter()
                .map(|id| gr.get(id).cloned())
                .collect::<Result<Vec<_>>>()?
        }
        None => params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect(),
    };
    Ok(SsOutcome {
        report: BatchLossReport {
            l_l: v_l,
            r_u: v_r,
            l_cl: v_cl,
            gamma: w.gamma,
            total,
            confident: weak.confident,
            passed: weak.passed,
            unlabeled: b_u,
            skipped: weak.skipped,
            clamped,
        },
        grads,
    })
}

/// Disambiguation-free loss on a batch and its gradient w.r.t. Θ.
pub fn df_objective(params: &ClassifierParams, x: &Tensor, candidates: &[LabelSet]) -> Result<(ScalarLoss, Vec<Tensor>)> {
    check_rows("df batch", x.rows(), candidates.len())?;
    if x.cols() != params.input_dim() {
        return Err(Error::ShapeMismatch {
            context: "df batch features",
            expected: [x.rows(), params.input_dim()],
            found: x.shape(),
        });
    }
    let b = x.rows();
    if b == 0 {
        let zeros = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        return Ok((ScalarLoss::default(), zeros));
    }
    let l = params.classes();
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let z = logits_node(&mut g, &bound, x);
    let logp = g.log_softmax_rows(z);
    let mut weights = Tensor::zeros(b, l);
    for (i, c) in candidates.iter().enumerate() {
        let share = -1.0 / (c.len() as f64 * b as f64);
        for j in c.iter() {
            weights.set(i, j, share);
        }
    }
    let floor = math::log_clamp_floor();
    let clamped = count_below(g.value(logp), floor, Some(&weights));
    let logp = g.clamp_min(logp, floor);
    let weights = g.constant(weights);
    let prod = g.mul(weights, logp);
    let root = g.sum(prod);
    let value = g.value(root).item();
    let gr = g.backward(root)?;
    let grads = bound
        .ids()
        .into_iter()
        .map(|id| gr.get(id).cloned())
        .collect::<Result<Vec<_>>>()?;
    Ok((ScalarLoss { value, clamped }, grads))
}

/// One unlabeled instance seen by both branches.
#[derive(Debug, Clone, Copy)]
pub struct McInstance<'a> {
    pub frozen_head: &'a Tensor,
    pub weak_feature: &'a [f64],
    pub head: &'a Tensor,
    pub strong_feature: &'a [f64],
    pub candidates: &'a LabelSet,
    pub stats: &'a ClassCovStats,
    pub tau: &'a [f64],
}

/// Monte-Carlo estimates alongside the closed forms they check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    /// Mean of `h(p̂^{w,k₁})·KL(p̂^{k₁} ‖ p^{s,k₂})` over all `K²` pairs.
    pub reg: f64,
    pub reg_se: f64,
    /// Mean of `−Σ_j p̲̂_j log softmax_j(W ã^s)` with the closed-form target fixed.
    pub strong_ce: f64,
    pub strong_ce_se: f64,
    /// `h·KL(p̲̂ ‖ p̲^s)`.
    pub closed_reg: f64,
    /// `−Σ_j p̲̂_j log p̲^s_j`.
    pub closed_strong_ce: f64,
    /// Fraction of weak-branch draws with `h = 1`.
    pub h_rate: f64,
    pub pseudo_label: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_var(xs: &[f64]) -> f64 {
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Samples `K` semantic perturbations per branch and averages the
/// regularizer over every weak/strong pair.
pub fn mc_oracle_reg<R: Rng + ?Sized>(
    inst: &McInstance<'_>,
    lambda: f64,
    beta: f64,
    eig_floor: f64,
    samples: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    if samples == 0 {
        return Err(invalid("samples", "at least one sample is required"));
    }
    check_stats(inst.head, inst.stats)?;
    check_stats(inst.frozen_head, inst.stats)?;
    let l = inst.head.rows();
    let zw = crate::model::logits(inst.weak_feature, inst.frozen_head)?;
    if zw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("weak-branch logits"));
    }
    let y = cav_pseudo_label(&zw, inst.candidates);
    let sigma = inst.stats.covariance(y);

    let pw = semstats::probit_weak_probs(inst.frozen_head, inst.weak_feature, sigma, lambda, beta)?;
    let target = pseudo_target(&pw, inst.candidates)?;
    let h = confidence_indicator(&pw, inst.candidates, inst.tau);
    let logps = semstats::shifted_log_probs(inst.head, inst.strong_feature, sigma, lambda)?;
    let closed_strong_ce: f64 = -target
        .iter()
        .zip(&logps)
        .filter(|(&t, _)| t > 0.0)
        .map(|(t, lp)| t * lp)
        .sum::<f64>();
    let closed_reg = if h { neg_entropy(&target) + closed_strong_ce } else { 0.0 };

    let d = inst.weak_feature.len();
    let weak_sampler = SemanticSampler::new(sigma, d, lambda, eig_floor)?;
    let strong_sampler = SemanticSampler::new(sigma, inst.strong_feature.len(), lambda, eig_floor)?;
    let mut a_terms = Vec::with_capacity(samples);
    let mut b_terms: Vec<Vec<f64>> = Vec::with_capacity(samples);
    for _ in 0..samples {
        let a = weak_sampler.sample(inst.weak_feature, rng);
        let p = math::softmax(&crate::model::logits(&a, inst.frozen_head)?);
        let hk = confidence_indicator(&p, inst.candidates, inst.tau);
        match (hk, pseudo_target(&p, inst.candidates)) {
            (true, Ok(t)) => {
                a_terms.push(neg_entropy(&t));
                b_terms.push(t);
            }
            _ => {
                a_terms.push(0.0);
                b_terms.push(vec![0.0; l]);
            }
        }
    }
    let mut log_s: Vec<Vec<f64>> = Vec::with_capacity(samples);
    for _ in 0..samples {
        let a = strong_sampler.sample(inst.strong_feature, rng);
        log_s.push(math::log_softmax(&crate::model::logits(&a, inst.head)?));
    }

    let avg = |rows: &[Vec<f64>]| -> Vec<f64> {
        let mut m = vec![0.0; l];
        for r in rows {
            for (acc, v) in m.iter_mut().zip(r) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= rows.len() as f64);
        m
    };
    // Pair mean factorizes: mean(A) − mean(B)ᵀ·mean(L).
    let b_bar = avg(&b_terms);
    let l_bar = avg(&log_s);
    let a_bar = mean(&a_terms);
    let row_means: Vec<f64> = a_terms
        .iter()
        .zip(&b_terms)
        .map(|(a, b)| a - math::dot(b, &l_bar))
        .collect();
    let col_means: Vec<f64> = log_s.iter().map(|ls| a_bar - math::dot(&b_bar, ls)).collect();
    let reg = a_bar - math::dot(&b_bar, &l_bar);
    let k = samples as f64;
    let reg_se = libm::sqrt(sample_var(&row_means) / k + sample_var(&col_means) / k);

    let ce: Vec<f64> = log_s
        .iter()
        .map(|ls| {
            -target
                .iter()
                .zip(ls)
                .filter(|(&t, _)| t > 0.0)
                .map(|(t, lp)| t * lp)
                .sum::<f64>()
        })
        .collect();
    Ok(McEstimate {
        reg,
        reg_se,
        strong_ce: mean(&ce),
        strong_ce_se: libm::sqrt(sample_var(&ce) / k),
        closed_reg,
        closed_strong_ce,
        h_rate: b_terms.iter().filter(|b| b.iter().any(|&v| v > 0.0)).count() as f64 / k,
        pseudo_label: y,
    })
}
