//! Minibatch RMSProp training with a plateau schedule and early stopping.

use std::fmt::Write as _;

use bowlnet_core::baselines::{
    state_mlp_init, state_mlp_loss_and_gradients, state_mlp_rollout, StateMlpConfig, StateTransition, StateVector,
    STATE_CONTEXT,
};
use bowlnet_core::model::{init_params, Symmetry, loss_and_gradients, predict, encoder_input, ModelConfig, SequenceTargets};
use bowlnet_core::numerics::{OptimizerState, ParameterSet, RmsProp, Tensor};
use bowlnet_core::objectives::pixel_errors;
use bowlnet_core::render::Image;
use bowlnet_core::schedule::PlateauScheduler;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::ExperimentConfig;
use crate::dataset::{Dataset, SequenceData};
use crate::error::{LabError, LabResult};

/// Stacked encoder input for a sequence: context frames, plus the frame at
/// `t0 + horizon − 1` for InterpNet.
pub fn network_input(seq: &SequenceData, config: &ModelConfig, horizon: usize) -> LabResult<Tensor> {
    let mut frames: Vec<Image> = (0..config.t0).map(|i| seq.frame(i)).collect();
    if config.variant.is_interpolating() {
        frames.push(seq.frame(config.t0 + horizon - 1));
    }
    let refs: Vec<&Image> = frames.iter().collect();
    Ok(encoder_input(&refs, config.t0)?)
}

/// Ground-truth state vectors of a sequence at the dataset frame rate.
pub fn sequence_states(seq: &SequenceData, config: &StateMlpConfig) -> LabResult<Vec<StateVector>> {
    let gt = &seq.ground_truth;
    Ok(StateVector::from_records(&gt.px, &gt.v, &gt.omega, seq.entry.meta.a, seq.entry.meta.gamma, config.frame_dt)?)
}

/// One model family's view of the data.
pub trait TrainingTask: Sync {
    fn kind(&self) -> ModelKind;
    fn init(&self, rng: &mut ChaCha8Rng) -> LabResult<ParameterSet>;
    fn sample_count(&self) -> usize;
    /// Loss and gradients of one training sample seen through `symmetry`.
    fn sample_loss(&self, params: &ParameterSet, index: usize, symmetry: Symmetry) -> LabResult<(f64, ParameterSet)>;
    /// Mean pixel distance on the validation split at the training horizon.
    fn validate(&self, params: &ParameterSet) -> LabResult<f64>;
    fn supports_augmentation(&self) -> bool;
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub struct NetworkTask<'a> {
    pub config: ModelConfig,
    pub horizon: usize,
    pub train: &'a [SequenceData],
    pub val: &'a [SequenceData],
}

impl NetworkTask<'_> {
    fn targets(&self, seq: &SequenceData) -> (Vec<[f64; 2]>, Vec<[f64; 3]>) {
        let r = self.config.t0..self.config.t0 + self.horizon;
        (seq.ground_truth.px[r.clone()].to_vec(), seq.ground_truth.omega[r].to_vec())
    }
}

impl TrainingTask for NetworkTask<'_> {
    fn supports_augmentation(&self) -> bool {
        true
    }

    fn kind(&self) -> ModelKind {
        ModelKind::Network(self.config.clone())
    }

    fn init(&self, rng: &mut ChaCha8Rng) -> LabResult<ParameterSet> {
        Ok(init_params(&self.config, rng)?)
    }

    fn sample_count(&self) -> usize {
        self.train.len()
    }

    fn sample_loss(&self, params: &ParameterSet, index: usize, symmetry: Symmetry) -> LabResult<(f64, ParameterSet)> {
        let seq = &self.train[index];
        let input = symmetry.apply_tensor(&network_input(seq, &self.config, self.horizon)?)?;
        let (positions, omegas) = self.targets(seq);
        let positions: Vec<[f64; 2]> = positions.iter().map(|&p| symmetry.apply_pixel(p, self.config.resolution)).collect();
        let omegas: Vec<[f64; 3]> = omegas.iter().map(|&w| symmetry.apply_angular(w)).collect();
        let targets = SequenceTargets { positions: &positions, angular: Some(&omegas) };
        let (loss, grads) = loss_and_gradients(params, &self.config, &input, &targets)?;
        Ok((loss.total, grads))
    }

    fn validate(&self, params: &ParameterSet) -> LabResult<f64> {
        let errors = self
            .val
            .par_iter()
            .map(|seq| -> LabResult<f64> {
                let input = network_input(seq, &self.config, self.horizon)?;
                let predicted = match predict(&input, params, &self.config, self.horizon) {
                    Ok((p, _)) => p,
                    Err(bowlnet_core::Error::NonFinite(_)) => return Ok(f64::INFINITY),
                    Err(e) => return Err(e.into()),
                };
                let pos: Vec<[f64; 2]> = predicted.iter().map(|p| p.position).collect();
                Ok(mean(pixel_errors(&pos, &self.targets(seq).0)?.into_iter()))
            })
            .collect::<LabResult<Vec<f64>>>()?;
        Ok(mean(errors.into_iter()))
    }
}

pub struct StateMlpTask {
    pub config: StateMlpConfig,
    pub t0: usize,
    pub horizon: usize,
    train_states: Vec<Vec<StateVector>>,
    samples: Vec<(usize, usize)>,
    val_states: Vec<Vec<StateVector>>,
}

impl StateMlpTask {
    pub fn new(config: StateMlpConfig, t0: usize, horizon: usize, train: &[SequenceData], val: &[SequenceData]) -> LabResult<Self> {
        if t0 != STATE_CONTEXT {
            return Err(LabError::Config(format!("the state MLP observes {STATE_CONTEXT} states, config has t0 = {t0}")));
        }
        let states = |s: &[SequenceData]| s.iter().map(|q| sequence_states(q, &config)).collect::<LabResult<Vec<_>>>();
        let train_states = states(train)?;
        let val_states = states(val)?;
        let samples = train_states
            .iter()
            .enumerate()
            .flat_map(|(i, s)| (0..s.len().saturating_sub(STATE_CONTEXT)).map(move |k| (i, k)))
            .collect();
        Ok(Self { config, t0, horizon, train_states, samples, val_states })
    }
}

impl TrainingTask for StateMlpTask {
    fn supports_augmentation(&self) -> bool {
        false
    }

    fn kind(&self) -> ModelKind {
        ModelKind::StateMlp(self.config.clone())
    }

    fn init(&self, rng: &mut ChaCha8Rng) -> LabResult<ParameterSet> {
        Ok(state_mlp_init(&self.config, rng)?)
    }

    fn sample_count(&self) -> usize {
        self.samples.len()
    }

    fn sample_loss(&self, params: &ParameterSet, index: usize, symmetry: Symmetry) -> LabResult<(f64, ParameterSet)> {
        if symmetry != Symmetry::IDENTITY {
            return Err(LabError::Config("the state MLP is trained without augmentation".into()));
        }
        let (i, k) = self.samples[index];
        let s = &self.train_states[i];
        let batch = [StateTransition { context: &s[k..k + STATE_CONTEXT], next: &s[k + STATE_CONTEXT] }];
        Ok(state_mlp_loss_and_gradients(params, &self.config, &batch)?)
    }

    fn validate(&self, params: &ParameterSet) -> LabResult<f64> {
        let errors = self
            .val_states
            .par_iter()
            .map(|s| -> LabResult<f64> {
                let out = match state_mlp_rollout(&s[..STATE_CONTEXT], params, &self.config, self.t0 + self.horizon) {
                    Ok(o) => o,
                    Err(bowlnet_core::Error::NonFinite(_)) => return Ok(f64::INFINITY),
                    Err(e) => return Err(e.into()),
                };
                let pred: Vec<[f64; 2]> = out[self.t0..].iter().map(|s| s.position).collect();
                let gt: Vec<[f64; 2]> = s[self.t0..self.t0 + self.horizon].iter().map(|s| s.position).collect();
                Ok(mean(pixel_errors(&pred, &gt)?.into_iter()))
            })
            .collect::<LabResult<Vec<f64>>>()?;
        Ok(mean(errors.into_iter()))
    }
}

/// Hyperparameters of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub seed: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub stop_patience: usize,
    pub max_epochs: usize,
    pub augment: bool,
}

impl TrainSettings {
    pub fn from_config(config: &ExperimentConfig, learning_rate: f64) -> Self {
        Self {
            seed: config.seed,
            batch_size: config.batch_size,
            learning_rate,
            lr_factor: config.lr_factor,
            lr_patience: config.lr_patience,
            stop_patience: config.stop_patience,
            max_epochs: config.max_epochs,
            augment: config.augment,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss; `None` for the epoch-0 evaluation.
    pub train_loss: Option<f64>,
    pub val_l2: f64,
    pub learning_rate: f64,
    pub improved: bool,
    pub lr_dropped: bool,
}

pub const LOG_HEADER: &str = "epoch,train_loss,val_l2,learning_rate,improved,lr_dropped";

pub fn render_log(records: &[EpochRecord]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in records {
        let loss = r.train_loss.map(|l| l.to_string()).unwrap_or_default();
        writeln!(out, "{},{loss},{},{},{},{}", r.epoch, r.val_l2, r.learning_rate, r.improved as u8, r.lr_dropped as u8)
            .expect("string write");
    }
    out
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Lowest validation error seen, including the initialization.
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub log: Vec<EpochRecord>,
    /// Set when training aborted on a non-finite loss.
    pub failure: Option<LabError>,
}

/// Trains `task`, calling `on_epoch` after every logged epoch.
pub fn fit(
    task: &dyn TrainingTask,
    settings: &TrainSettings,
    log_reference: &str,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> LabResult<TrainOutcome> {
    if settings.batch_size == 0 {
        return Err(LabError::Config("batch size must be positive".into()));
    }
    if task.sample_count() == 0 {
        return Err(LabError::Config("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let augment = settings.augment && task.supports_augmentation();
    let mut params = task.init(&mut rng)?;
    let rms = RmsProp { learning_rate: settings.learning_rate, ..RmsProp::default() };
    let mut optimizer = OptimizerState::new(rms, &params);
    let mut scheduler =
        PlateauScheduler::new(settings.learning_rate, settings.lr_patience, settings.stop_patience, settings.lr_factor);
    let snapshot = |params: &ParameterSet, optimizer: &OptimizerState, epoch: usize| Checkpoint {
        kind: task.kind(),
        params: params.clone(),
        optimizer: Some(optimizer.clone()),
        epoch: epoch as u64,
        training_log: log_reference.to_string(),
    };

    let val0 = task.validate(&params)?;
    let first = EpochRecord {
        epoch: 0,
        train_loss: None,
        val_l2: val0,
        learning_rate: settings.learning_rate,
        improved: false,
        lr_dropped: false,
    };
    on_epoch(&first);
    let mut log = vec![first];
    let mut best = snapshot(&params, &optimizer, 0);
    let mut best_val = val0;
    let mut order: Vec<usize> = (0..task.sample_count()).collect();
    let mut failure = None;

    'epochs: for epoch in 1..=settings.max_epochs {
        order.shuffle(&mut rng);
        let symmetries: Vec<Symmetry> = order
            .iter()
            .map(|_| if augment { Symmetry::from_index(rng.random_range(0..8)) } else { Symmetry::IDENTITY })
            .collect();
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (batch, syms) in order.chunks(settings.batch_size).zip(symmetries.chunks(settings.batch_size)) {
            let results = batch
                .par_iter()
                .zip(syms)
                .map(|(&i, &sym)| task.sample_loss(&params, i, sym))
                .collect::<Vec<LabResult<(f64, ParameterSet)>>>();
            let mut grads = params.zeros_like();
            let mut batch_loss = 0.0;
            for r in results {
                let (loss, g) = match r {
                    Ok(v) => v,
                    Err(LabError::Core(bowlnet_core::Error::NonFinite(what))) => {
                        failure = Some(LabError::Diverged { epoch, detail: format!("non-finite {what}") });
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                };
                batch_loss += loss;
                grads.axpy(1.0, &g)?;
            }
            let n = batch.len() as f64;
            let mut mean_grads = params.zeros_like();
            mean_grads.axpy(1.0 / n, &grads)?;
            if !batch_loss.is_finite() || !mean_grads.is_finite() {
                failure = Some(LabError::Diverged { epoch, detail: format!("batch loss {batch_loss}") });
                break 'epochs;
            }
            optimizer.step(&mut params, &mean_grads)?;
            loss_sum += batch_loss / n;
            batches += 1;
        }
        let val = task.validate(&params)?;
        let step = scheduler.observe(val);
        optimizer.set_learning_rate(step.learning_rate);
        let record = EpochRecord {
            epoch,
            train_loss: Some(loss_sum / batches as f64),
            val_l2: val,
            learning_rate: step.learning_rate,
            improved: step.improved,
            lr_dropped: step.lr_dropped,
        };
        on_epoch(&record);
        log.push(record);
        if val < best_val {
            best_val = val;
            best = snapshot(&params, &optimizer, epoch);
        }
        if step.stop {
            break;
        }
    }
    let last_epoch = log.last().map_or(0, |r| r.epoch);
    let last = snapshot(&params, &optimizer, last_epoch);
    Ok(TrainOutcome { best, last, log, failure })
}

/// Builds the task for a model tag (`physnet`, …, `state-mlp`, `state-mlp++`).
pub enum AnyTask<'a> {
    Network(NetworkTask<'a>),
    StateMlp(Box<StateMlpTask>),
}

impl<'a> AnyTask<'a> {
    pub fn new(dataset: &'a Dataset, tag: &str, horizon: usize) -> LabResult<Self> {
        let config = dataset.config();
        if horizon == 0 || horizon > config.eval_horizon {
            return Err(LabError::Config(format!("training horizon {horizon} must lie in [1, {}]", config.eval_horizon)));
        }
        match tag {
            "state-mlp" | "state-mlp++" => Ok(AnyTask::StateMlp(Box::new(StateMlpTask::new(
                config.state_mlp_config(tag.ends_with("++")),
                config.t0,
                horizon,
                &dataset.train,
                &dataset.val,
            )?))),
            _ => {
                let variant = bowlnet_core::model::Variant::from_name(tag)
                    .ok_or_else(|| LabError::Config(format!("unknown model {tag:?}")))?;
                Ok(AnyTask::Network(NetworkTask {
                    config: config.model_config(variant),
                    horizon,
                    train: &dataset.train,
                    val: &dataset.val,
                }))
            }
        }
    }

    pub fn as_task(&self) -> &dyn TrainingTask {
        match self {
            AnyTask::Network(t) => t,
            AnyTask::StateMlp(t) => t.as_ref(),
        }
    }

    pub fn learning_rate(&self, config: &ExperimentConfig) -> f64 {
        match self {
            AnyTask::Network(_) => config.learning_rate,
            AnyTask::StateMlp(_) => config.state_mlp_learning_rate,
        }
    }
}
