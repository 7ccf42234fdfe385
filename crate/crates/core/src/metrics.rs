//! Classification scores against ground truth.

use alloc::vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Scores {
    pub macro_f1: f64,
    /// Equals accuracy for single-label predictions.
    pub micro_f1: f64,
}

/// Macro- and micro-averaged F1 over `classes` classes. A class with no true
/// and no predicted instances scores 0 in the macro mean.
pub fn macro_micro_f1(predicted: &[usize], truth: &[usize], classes: usize) -> Result<F1Scores> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            context: "f1 predictions/truth",
            left: predicted.len(),
            right: truth.len(),
        });
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= classes || t >= classes {
            return Err(crate::error::invalid("labels", "class index out of range"));
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let macro_f1 = (0..classes)
        .map(|j| ratio(2 * tp[j], 2 * tp[j] + fp[j] + fn_[j]))
        .sum::<f64>()
        / classes as f64;
    let total_tp: usize = tp.iter().sum();
    let total_fp: usize = fp.iter().sum();
    let total_fn: usize = fn_.iter().sum();
    let micro_f1 = ratio(2 * total_tp, 2 * total_tp + total_fp + total_fn);
    Ok(F1Scores { macro_f1, micro_f1 })
}
