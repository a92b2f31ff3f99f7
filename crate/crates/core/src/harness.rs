//! Training loop, acquisition-speed measurement, held-out evaluation,
//! multi-seed scheduling and aggregation.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Adam, CellKind, Parameterized, Tape};
use crate::languages::{LanguageKind, LanguageSpec, Message};
use crate::receiver::{BatchTargets, Evaluation, HeadKind, ReceiverConfig, ReceiverModel};
use crate::seeding::{self, Stream};
use crate::tasks::{gen_linear_params, target_coordinates, AttValTask, LinearTaskParams, TargetOutput, TaskKind};
use crate::worlds::{enumerate_attval, sample_unit_disk, split_train_test};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Attval,
    Coordinates,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Attval => "attval",
            Experiment::Coordinates => "coordinates",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attval" => Ok(Experiment::Attval),
            "coordinates" => Ok(Experiment::Coordinates),
            other => Err(Error::Config(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub language: LanguageKind,
    pub task: TaskKind,
    pub cell: CellKind,
    pub n_values: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Attval only.
    pub test_fraction: f64,
    /// Coordinates only.
    pub n_train: usize,
    /// Coordinates only.
    pub n_test: usize,
    /// Seed of the shared coordinates dataset.
    pub data_seed: u64,
    /// Train accuracy that counts as acquired.
    pub acquisition_threshold: f64,
    /// Fixed `(A, b)` for task-linear; drawn per seed when absent.
    pub linear_params: Option<LinearTaskParams>,
    /// Receiver reads an end-of-message step after the two symbols.
    pub eos: bool,
}

impl RunConfig {
    pub fn attval(language: LanguageKind, task: TaskKind, cell: CellKind) -> Self {
        RunConfig {
            experiment: Experiment::Attval,
            language,
            task,
            cell,
            n_values: 31,
            epochs: 500,
            batch_size: 32,
            lr: 1e-2,
            embed_dim: 50,
            hidden_dim: 100,
            test_fraction: 0.2,
            n_train: 0,
            n_test: 0,
            data_seed: 0,
            acquisition_threshold: 1.0,
            linear_params: None,
            eos: true,
        }
    }

    pub fn coordinates(language: LanguageKind) -> Self {
        RunConfig {
            experiment: Experiment::Coordinates,
            language,
            task: TaskKind::Coordinates,
            cell: CellKind::Lstm,
            n_values: 100,
            epochs: 250,
            batch_size: 32,
            lr: 1e-3,
            embed_dim: 50,
            hidden_dim: 100,
            test_fraction: 0.5,
            n_train: 1000,
            n_test: 1000,
            data_seed: 0,
            acquisition_threshold: 1.0,
            linear_params: None,
            eos: true,
        }
    }

    pub fn head(&self) -> HeadKind {
        match self.experiment {
            Experiment::Attval => HeadKind::Classify,
            Experiment::Coordinates => HeadKind::Regress,
        }
    }

    pub fn receiver_config(&self) -> ReceiverConfig {
        ReceiverConfig { cell: self.cell, n_values: self.n_values, embed_dim: self.embed_dim, hidden_dim: self.hidden_dim, head: self.head(), eos: self.eos }
    }

    /// Short identifier, e.g. `attval_lstm_identity_entangled`.
    pub fn label(&self) -> String {
        format!("{}_{}_{}_{}", self.experiment, self.cell, self.language, self.task)
    }

    pub fn validate(&self) -> Result<()> {
        let discrete = self.language.is_discrete();
        match self.experiment {
            Experiment::Attval if !discrete || self.task == TaskKind::Coordinates => {
                return Err(Error::Config(format!("attval runs need an attribute language and task, got {}/{}", self.language, self.task)));
            }
            Experiment::Coordinates if discrete || self.task != TaskKind::Coordinates => {
                return Err(Error::Config(format!("coordinates runs need a point language, got {}/{}", self.language, self.task)));
            }
            _ => {}
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.experiment == Experiment::Coordinates && (self.n_train == 0 || self.n_test == 0) {
            return Err(Error::Config("coordinates runs need non-empty train and test sets".into()));
        }
        self.receiver_config().validate()?;
        LanguageSpec::new(self.language, self.n_values)?;
        Ok(())
    }
}

/// Messages and targets for one split.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub messages: Vec<Message>,
    pub targets: Vec<TargetOutput>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    pub linear_params: Option<LinearTaskParams>,
}

/// Builds the train/test datasets for `(config, seed)`.
///
/// Attval splits the grid with the run seed; coordinates draws one shared
/// dataset from `data_seed`, the first `n_train` points training.
pub fn prepare_data(config: &RunConfig, seed: u64) -> Result<PreparedData> {
    config.validate()?;
    let n = config.n_values;
    let lang = LanguageSpec::new(config.language, n)?;
    match config.experiment {
        Experiment::Attval => {
            let task = match config.task {
                TaskKind::Identity => AttValTask::Identity,
                TaskKind::Entangled => AttValTask::Entangled,
                TaskKind::Linear => AttValTask::Linear(match config.linear_params {
                    Some(p) => p,
                    None => gen_linear_params(n, seed)?,
                }),
                TaskKind::Coordinates => unreachable!("rejected by validate"),
            };
            let grid = enumerate_attval(n)?;
            let (train, test) = split_train_test(&grid, config.test_fraction, seed)?;
            let build = |items: &[crate::worlds::AttValInput]| -> Result<Dataset> {
                Ok(Dataset {
                    messages: items.iter().map(|&i| lang.encode_attval(i)).collect::<Result<_>>()?,
                    targets: items.iter().map(|&i| task.target(i, n)).collect(),
                })
            };
            let linear_params = match task {
                AttValTask::Linear(p) => Some(p),
                _ => None,
            };
            Ok(PreparedData { train: build(&train)?, test: build(&test)?, linear_params })
        }
        Experiment::Coordinates => {
            let points = sample_unit_disk(config.n_train + config.n_test, config.data_seed);
            let (train, test) = points.split_at(config.n_train);
            let build = |pts: &[crate::worlds::DiskPoint]| -> Result<Dataset> {
                Ok(Dataset {
                    messages: pts.iter().map(|&p| lang.encode_point(p)).collect::<Result<_>>()?,
                    targets: pts.iter().map(|&p| target_coordinates(p)).collect(),
                })
            };
            Ok(PreparedData { train: build(train)?, test: build(test)?, linear_params: None })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// Strict accuracy (attval) or MSE (coordinates).
    pub train_metric: f64,
    pub test_loss: f64,
    pub test_metric: f64,
    /// Mean per-output accuracy on the test set (attval only).
    pub test_per_output: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub seed: u64,
    pub linear_params: Option<LinearTaskParams>,
    pub epochs: Vec<EpochMetrics>,
    pub acquisition_epoch: Option<usize>,
    /// Set when the run stopped on a non-finite loss.
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn final_epoch(&self) -> Option<&EpochMetrics> {
        self.epochs.last()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,train_loss,train_metric,test_loss,test_metric")?;
        for e in &self.epochs {
            writeln!(out, "{},{},{},{},{}", e.epoch, e.train_loss, e.train_metric, e.test_loss, e.test_metric)?;
        }
        Ok(())
    }
}

/// First 1-based epoch whose train accuracy reaches `threshold`.
pub fn acquisition_epochs(record: &RunRecord, threshold: f64) -> Option<usize> {
    if record.config.experiment != Experiment::Attval {
        return None;
    }
    acquisition_from_series(record.epochs.iter().map(|e| e.train_metric), threshold)
}

pub fn acquisition_from_series(series: impl IntoIterator<Item = f64>, threshold: f64) -> Option<usize> {
    series.into_iter().position(|a| a >= threshold).map(|i| i + 1)
}

fn metrics_from(epoch: usize, train: Evaluation, test: Evaluation) -> EpochMetrics {
    EpochMetrics {
        epoch,
        train_loss: train.loss,
        train_metric: train.accuracy.unwrap_or(train.loss),
        test_loss: test.loss,
        test_metric: test.accuracy.unwrap_or(test.loss),
        test_per_output: test.per_output_accuracy,
    }
}

/// Progress callback: called after every epoch with the new metrics.
pub type EpochHook<'a> = &'a mut dyn FnMut(&ReceiverModel, &EpochMetrics);

/// Trains one receiver on freshly prepared data; see [`train_on`].
pub fn train_run(config: &RunConfig, seed: u64) -> Result<RunRecord> {
    let data = prepare_data(config, seed)?;
    train_on(config, seed, &data, &mut |_, _| {}).map(|(record, _)| record)
}

/// Trains one receiver on prepared data and returns the record with the
/// final model.
///
/// Each epoch shuffles the training set with the `(seed, epoch)` stream,
/// takes one Adam step per mini-batch (the last batch may be short), then
/// evaluates train and test sets. The test set never reaches the optimizer.
pub fn train_on(config: &RunConfig, seed: u64, data: &PreparedData, hook: EpochHook<'_>) -> Result<(RunRecord, ReceiverModel)> {
    let mut trainer = Trainer::new(config.clone(), seed, data.clone())?;
    while let Some(m) = trainer.step()? {
        hook(trainer.model(), &m);
    }
    Ok(trainer.finish())
}

/// One run's training state, advanced an epoch at a time.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: RunConfig,
    seed: u64,
    data: PreparedData,
    model: ReceiverModel,
    adam: Adam,
    order: Vec<usize>,
    record: RunRecord,
}

impl Trainer {
    pub fn new(config: RunConfig, seed: u64, data: PreparedData) -> Result<Self> {
        config.validate()?;
        if data.train.is_empty() {
            return Err(Error::Input("empty training set".into()));
        }
        let model = ReceiverModel::init(config.receiver_config(), seed)?;
        let record = RunRecord {
            config: config.clone(),
            seed,
            linear_params: data.linear_params,
            epochs: Vec::with_capacity(config.epochs.min(1024)),
            acquisition_epoch: None,
            failure: None,
        };
        Ok(Trainer { adam: Adam::new(config.lr), order: (0..data.train.len()).collect(), config, seed, data, model, record })
    }

    /// Runs the next epoch and returns its metrics, or `None` once the epoch
    /// budget is spent or the loss has diverged.
    pub fn step(&mut self) -> Result<Option<EpochMetrics>> {
        if self.is_done() {
            return Ok(None);
        }
        let epoch = self.record.epochs.len();
        let train = &self.data.train;
        self.order.sort_unstable();
        self.order.shuffle(&mut seeding::rng(self.seed, Stream::Epoch(epoch)));
        let mut batch_msgs = Vec::with_capacity(self.config.batch_size);
        let mut batch_targets = Vec::with_capacity(self.config.batch_size);
        for chunk in self.order.chunks(self.config.batch_size) {
            batch_msgs.clear();
            batch_targets.clear();
            batch_msgs.extend(chunk.iter().map(|&i| train.messages[i]));
            batch_targets.extend(chunk.iter().map(|&i| train.targets[i]));
            let targets = BatchTargets::from_outputs(&batch_targets)?;

            self.model.zero_grad();
            let mut tape = Tape::new();
            let loss = self.model.batch_loss(&mut tape, &batch_msgs, &targets)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                self.record.failure = Some(Error::Diverged { epoch: epoch + 1, loss: value }.to_string());
                return Ok(None);
            }
            tape.backward_into(loss, &mut self.model)?;
            self.adam.step_all(&mut self.model);
        }

        let tr = self.model.evaluate(&train.messages, &train.targets)?;
        let te = self.model.evaluate(&self.data.test.messages, &self.data.test.targets)?;
        let m = metrics_from(epoch + 1, tr, te);
        self.record.epochs.push(m);
        if !(m.train_loss.is_finite() && m.test_loss.is_finite()) {
            self.record.failure = Some(Error::Diverged { epoch: epoch + 1, loss: m.train_loss }.to_string());
            return Ok(None);
        }
        Ok(Some(m))
    }

    pub fn is_done(&self) -> bool {
        self.record.failure.is_some() || self.record.epochs.len() >= self.config.epochs
    }

    pub fn model(&self) -> &ReceiverModel {
        &self.model
    }

    pub fn data(&self) -> &PreparedData {
        &self.data
    }

    /// Metrics so far, without the acquisition epoch filled in.
    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn finish(mut self) -> (RunRecord, ReceiverModel) {
        self.record.acquisition_epoch = acquisition_epochs(&self.record, self.config.acquisition_threshold);
        (self.record, self.model)
    }
}

/// Runs every `(config, seed)` job on a pool of `workers` threads. Results come
/// back in job order.
pub fn run_grid(jobs: &[(RunConfig, u64)], workers: usize) -> Result<Vec<RunRecord>> {
    run_grid_with_progress(jobs, workers, &|_| {})
}

/// Like [`run_grid`], calling `progress` as each run finishes (in completion
/// order, possibly from several threads).
pub fn run_grid_with_progress(jobs: &[(RunConfig, u64)], workers: usize, progress: &(dyn Fn(&RunRecord) + Sync)) -> Result<Vec<RunRecord>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|(c, s)| {
                let record = train_run(c, *s)?;
                progress(&record);
                Ok(record)
            })
            .collect()
    })
}

/// Mean with standard error of the mean (`n - 1` denominator).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    /// Undefined for fewer than two values.
    pub sem: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sem = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Some(Stat { n, mean, sem })
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = f.precision().unwrap_or(2);
        match self.sem {
            Some(s) => write!(f, "{:.p$} ± {:.p$}", self.mean, s),
            None => write!(f, "{:.p$}", self.mean),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub label: String,
    pub runs: usize,
    pub failed: usize,
    /// Over runs that reached the threshold.
    pub acquisition: Option<Stat>,
    pub not_reached: usize,
    pub final_train_metric: Option<Stat>,
    pub final_test_metric: Option<Stat>,
    pub final_test_per_output: Option<Stat>,
    pub linear_params: Vec<LinearTaskParams>,
}

/// Folds completed runs of one configuration into summary statistics.
pub fn aggregate(records: &[RunRecord]) -> Aggregate {
    let label = records.first().map(|r| r.config.label()).unwrap_or_default();
    let ok: Vec<&RunRecord> = records.iter().filter(|r| r.failure.is_none()).collect();
    let acq: Vec<f64> = ok.iter().filter_map(|r| r.acquisition_epoch).map(|e| e as f64).collect();
    let attval = records.first().is_some_and(|r| r.config.experiment == Experiment::Attval);
    let finals: Vec<&EpochMetrics> = ok.iter().filter_map(|r| r.final_epoch()).collect();
    let col = |f: fn(&EpochMetrics) -> f64| Stat::of(&finals.iter().map(|e| f(e)).collect::<Vec<_>>());
    Aggregate {
        label,
        runs: records.len(),
        failed: records.len() - ok.len(),
        acquisition: if attval { Stat::of(&acq) } else { None },
        not_reached: if attval { ok.len() - acq.len() } else { 0 },
        final_train_metric: col(|e| e.train_metric),
        final_test_metric: col(|e| e.test_metric),
        final_test_per_output: Stat::of(&finals.iter().filter_map(|e| e.test_per_output).collect::<Vec<_>>()),
        linear_params: records.iter().filter_map(|r| r.linear_params).collect(),
    }
}
