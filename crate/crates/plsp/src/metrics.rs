//! Line-delimited JSON metrics.
//!
//! Every epoch emits one `{"kind":"epoch",…}` record; a run ends with one
//! `{"kind":"summary",…}` object carrying the best-epoch scores.

use std::io::{self, BufRead, Write};

use plsp_core::metrics::{macro_micro_f1, F1Scores};
use plsp_core::model::ClassifierParams;
use plsp_core::pldata::PlDataset;
use plsp_core::trainer::{EpochReport, Stage};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// `pretrain`, `ss` or `eval`.
    pub stage: String,
    pub epoch: usize,
    pub l_df: f64,
    pub l_l: f64,
    pub r_u: f64,
    pub l_cl: f64,
    pub total: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Test-set scores when a test set was given, else `null`.
    pub macro_f1: Option<f64>,
    pub micro_f1: Option<f64>,
    /// Scores against the training set's hidden truth, if it has one.
    pub train_macro_f1: Option<f64>,
    pub train_micro_f1: Option<f64>,
    pub h_pass_rate: f64,
    pub tau: Vec<f64>,
    pub labeled: usize,
    pub unlabeled: usize,
    pub clamped: usize,
    pub skipped: usize,
    /// Seconds since the run started; `0` under `--deterministic`.
    pub wall_clock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Which split the scores below come from: `test` or `train`.
    pub scored_on: String,
    pub best_stage: String,
    pub best_epoch: usize,
    pub best_macro_f1: f64,
    pub best_micro_f1: f64,
    pub final_macro_f1: f64,
    pub final_micro_f1: f64,
    pub epochs: usize,
    pub wall_clock: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsLine {
    Epoch(MetricsRecord),
    Summary(Summary),
}

pub fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Pretrain => "pretrain",
        Stage::SemiSupervised => "ss",
    }
}

/// Macro/micro-F1 of `params` on `data`, or `None` without hidden truth.
pub fn score(params: &ClassifierParams, data: &PlDataset) -> plsp_core::Result<Option<F1Scores>> {
    let Some(truth) = data.truth() else {
        return Ok(None);
    };
    let pred = params.predict(&data.all_features())?;
    let truth: Vec<usize> = truth.iter().map(|&y| y as usize).collect();
    macro_micro_f1(&pred, &truth, data.classes()).map(Some)
}

impl MetricsRecord {
    pub fn from_report(
        r: &EpochReport,
        train: Option<F1Scores>,
        test: Option<F1Scores>,
        wall_clock: f64,
    ) -> Self {
        Self {
            stage: stage_name(r.stage).to_string(),
            epoch: r.epoch,
            l_df: r.l_df,
            l_l: r.l_l,
            r_u: r.r_u,
            l_cl: r.l_cl,
            total: r.total,
            gamma: r.gamma,
            lambda: r.lambda,
            macro_f1: test.map(|s| s.macro_f1),
            micro_f1: test.map(|s| s.micro_f1),
            train_macro_f1: train.map(|s| s.macro_f1),
            train_micro_f1: train.map(|s| s.micro_f1),
            h_pass_rate: r.h_pass_rate,
            tau: r.tau.clone(),
            labeled: r.labeled,
            unlabeled: r.unlabeled,
            clamped: r.clamped,
            skipped: r.skipped,
            wall_clock,
        }
    }

    /// Test scores if present, else training scores.
    fn scores(&self) -> Option<(f64, f64)> {
        match (self.macro_f1, self.micro_f1) {
            (Some(a), Some(i)) => Some((a, i)),
            _ => self.train_macro_f1.zip(self.train_micro_f1),
        }
    }
}

/// The best record by micro-F1 (earliest on ties) and the last one, or
/// `None` when no record carries scores.
pub fn summarize(records: &[MetricsRecord], wall_clock: f64) -> Option<Summary> {
    let last = records.last()?;
    let (final_macro, final_micro) = last.scores()?;
    let scored_on = if last.micro_f1.is_some() { "test" } else { "train" };
    let mut best = last;
    let mut best_micro = f64::NEG_INFINITY;
    for r in records {
        if let Some((_, micro)) = r.scores() {
            if micro > best_micro {
                best_micro = micro;
                best = r;
            }
        }
    }
    let (best_macro, best_micro) = best.scores()?;
    Some(Summary {
        scored_on: scored_on.to_string(),
        best_stage: best.stage.clone(),
        best_epoch: best.epoch,
        best_macro_f1: best_macro,
        best_micro_f1: best_micro,
        final_macro_f1: final_macro,
        final_micro_f1: final_micro,
        epochs: records.len(),
        wall_clock,
    })
}

pub fn write_line<W: Write>(mut w: W, line: &MetricsLine) -> io::Result<()> {
    serde_json::to_writer(&mut w, line)?;
    w.write_all(b"\n")
}

pub fn read_lines<R: BufRead>(r: R) -> io::Result<Vec<MetricsLine>> {
    r.lines()
        .map(|l| serde_json::from_str(&l?).map_err(io::Error::from))
        .collect()
}
