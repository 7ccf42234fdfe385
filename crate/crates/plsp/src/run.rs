//! One training run with metrics streamed per epoch.

use std::io;
use std::time::Instant;

use plsp_core::model::ClassifierParams;
use plsp_core::pldata::PlDataset;
use plsp_core::trainer::{self, init_params, EpochReport, Trainer};

use crate::config::RunConfig;
use crate::metrics::{score, summarize, MetricsLine, MetricsRecord, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// The disambiguation-free stage only, for `pretrain_epochs` epochs.
    Pretrain,
    /// Pre-training followed by the semi-supervised stage.
    Train,
    /// The disambiguation-free loss for `pretrain_epochs + epochs` epochs.
    DfBaseline,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] plsp_core::Error),
    #[error("test set does not match the training set: {0}")]
    TestMismatch(&'static str),
    #[error("writing metrics: {0}")]
    Io(#[from] io::Error),
}

pub struct Outcome {
    pub params: ClassifierParams,
    pub records: Vec<MetricsRecord>,
    pub summary: Option<Summary>,
}

/// Runs `mode`, passing every metrics line to `sink` as soon as it exists.
/// Without `init`, parameters are drawn from the config seed.
pub fn run(
    mode: Mode,
    data: &PlDataset,
    test: Option<&PlDataset>,
    config: &RunConfig,
    init: Option<ClassifierParams>,
    sink: &mut dyn FnMut(&MetricsLine) -> io::Result<()>,
) -> Result<Outcome, RunError> {
    if let Some(t) = test {
        if t.shape() != data.shape() {
            return Err(RunError::TestMismatch("feature shape"));
        }
        if t.classes() != data.classes() {
            return Err(RunError::TestMismatch("class count"));
        }
    }
    let train_cfg = config.resolved(data.shape());
    let params = match init {
        Some(p) => p,
        None => init_params(&config.model(data.shape().len(), data.classes()), train_cfg.seed)?,
    };
    let deterministic = train_cfg.deterministic;
    let started = Instant::now();
    let clock = move || if deterministic { 0.0 } else { started.elapsed().as_secs_f64() };

    let mut records = Vec::new();
    let mut failure: Option<RunError> = None;
    let mut observe = |r: &EpochReport, p: &ClassifierParams| {
        if failure.is_some() {
            return;
        }
        let scored = score(p, data).and_then(|train| Ok((train, test.map(|t| score(p, t)).transpose()?.flatten())));
        let (train, test) = match scored {
            Ok(s) => s,
            Err(e) => {
                failure = Some(e.into());
                return;
            }
        };
        let record = MetricsRecord::from_report(r, train, test, clock());
        if let Err(e) = sink(&MetricsLine::Epoch(record.clone())) {
            failure = Some(e.into());
        }
        records.push(record);
    };

    let params = match mode {
        Mode::Pretrain => {
            let mut t = Trainer::new(data, params, train_cfg.clone())?;
            t.pretrain(train_cfg.pretrain_epochs, &mut observe)?;
            t.into_params()
        }
        Mode::Train => trainer::train_full(data, params, &train_cfg, &mut observe)?,
        Mode::DfBaseline => trainer::df_baseline(data, params, &train_cfg, &mut observe)?,
    };
    if let Some(e) = failure {
        return Err(e);
    }
    let summary = summarize(&records, clock());
    if let Some(s) = &summary {
        sink(&MetricsLine::Summary(s.clone()))?;
    }
    Ok(Outcome {
        params,
        records,
        summary,
    })
}
