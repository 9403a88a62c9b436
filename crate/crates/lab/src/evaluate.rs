//! Rollout evaluation of models and baselines on a dataset split.

use std::fmt::Write as _;

use bowlnet_core::baselines::{polyfit_extrapolate, state_mlp_rollout, STATE_CONTEXT};
use bowlnet_core::model::predict;
use bowlnet_core::objectives::{log_perplexity, pixel_errors, timestep_error_stats, TimestepErrorCurve};
use rayon::prelude::*;

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::dataset::{Dataset, SequenceData, Split};
use crate::error::{LabError, LabResult};
use crate::report::MetricsRecord;
use crate::train::{network_input, sequence_states};

/// Anything that can be scored.
#[derive(Debug, Clone)]
pub enum Method {
    Model { checkpoint: Checkpoint, source: String },
    Linear,
    Quadratic,
    /// Returns the ground truth; a harness self-check.
    Oracle,
}

impl Method {
    /// Baseline by name: `linear`, `quadratic` or `oracle`.
    pub fn baseline(name: &str) -> Option<Self> {
        match name {
            "linear" => Some(Method::Linear),
            "quadratic" => Some(Method::Quadratic),
            "oracle" => Some(Method::Oracle),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Method::Model { checkpoint, .. } => checkpoint.kind.tag().to_string(),
            Method::Linear => "linear".into(),
            Method::Quadratic => "quadratic".into(),
            Method::Oracle => "oracle".into(),
        }
    }

    fn source(&self) -> String {
        match self {
            Method::Model { source, .. } => source.clone(),
            _ => "-".into(),
        }
    }
}

/// Per-sequence, per-timestep results of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub method: String,
    pub case: String,
    pub checkpoint: String,
    pub horizon: usize,
    /// Euclidean pixel error `[sequence][t]`.
    pub position_errors: Vec<Vec<f64>>,
    /// `‖ω̂ − ω‖` in rad/s, when the method predicts spin.
    pub angular_errors: Option<Vec<Vec<f64>>>,
    /// Negative log-likelihood in nats, for probabilistic models.
    pub nll: Option<Vec<Vec<f64>>>,
}

struct SequenceResult {
    position: Vec<f64>,
    angular: Option<Vec<f64>>,
    nll: Option<Vec<f64>>,
}

fn angular_errors(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Vec<f64> {
    pred.iter()
        .zip(gt)
        .map(|(p, g)| ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt())
        .collect()
}

fn evaluate_sequence(seq: &SequenceData, method: &Method, t0: usize, fit_window: usize, horizon: usize) -> LabResult<SequenceResult> {
    let gt = &seq.ground_truth;
    let targets = &gt.px[t0..t0 + horizon];
    let omegas = &gt.omega[t0..t0 + horizon];
    let result = match method {
        Method::Oracle => SequenceResult {
            position: pixel_errors(targets, targets)?,
            angular: Some(angular_errors(omegas, omegas)),
            nll: None,
        },
        Method::Linear | Method::Quadratic => {
            let degree = if matches!(method, Method::Linear) { 1 } else { 2 };
            let pred = polyfit_extrapolate(&gt.px[..fit_window], degree, t0 + horizon)?;
            SequenceResult { position: pixel_errors(&pred[t0..], targets)?, angular: None, nll: None }
        }
        Method::Model { checkpoint, .. } => match &checkpoint.kind {
            ModelKind::Network(config) => {
                let input = network_input(seq, config, horizon)?;
                let (preds, _) = predict(&input, &checkpoint.params, config, horizon)?;
                let pos: Vec<[f64; 2]> = preds.iter().map(|p| p.position).collect();
                let angular = config.variant.predicts_angular().then(|| {
                    let w: Vec<[f64; 3]> = preds.iter().map(|p| p.angular_velocity.expect("++ layout")).collect();
                    angular_errors(&w, omegas)
                });
                let nll = if config.variant.is_probabilistic() {
                    Some(
                        preds
                            .iter()
                            .zip(targets)
                            .map(|(p, y)| p.belief.expect("probabilistic layout").nll(*y))
                            .collect::<bowlnet_core::Result<Vec<f64>>>()?,
                    )
                } else {
                    None
                };
                SequenceResult { position: pixel_errors(&pos, targets)?, angular, nll }
            }
            ModelKind::StateMlp(config) => {
                if t0 != STATE_CONTEXT {
                    return Err(LabError::Mismatch(format!("state MLP needs t0 = {STATE_CONTEXT}, dataset has {t0}")));
                }
                let states = sequence_states(seq, config)?;
                let out = state_mlp_rollout(&states[..STATE_CONTEXT], &checkpoint.params, config, t0 + horizon)?;
                let pos: Vec<[f64; 2]> = out[t0..].iter().map(|s| s.position).collect();
                let angular = config.plus.then(|| {
                    let w: Vec<[f64; 3]> = out[t0..].iter().map(|s| s.angular_velocity).collect();
                    angular_errors(&w, omegas)
                });
                SequenceResult { position: pixel_errors(&pos, targets)?, angular, nll: None }
            }
        },
    };
    Ok(result)
}

fn check_compatibility(dataset: &Dataset, method: &Method) -> LabResult<()> {
    let c = dataset.config();
    if let Method::Model { checkpoint, .. } = method {
        let (res, name) = match &checkpoint.kind {
            ModelKind::Network(m) => {
                if m.t0 != c.t0 {
                    return Err(LabError::Mismatch(format!("model observes {} frames, dataset t0 is {}", m.t0, c.t0)));
                }
                (m.resolution, m.variant.name())
            }
            ModelKind::StateMlp(m) => (m.resolution, checkpoint.kind.tag()),
        };
        if res != c.resolution {
            return Err(LabError::Mismatch(format!("{name} expects {res}×{res} frames, dataset has {}", c.resolution)));
        }
    }
    Ok(())
}

/// Scores `method` on `split` up to `horizon` predicted steps.
pub fn evaluate(dataset: &Dataset, split: Split, method: &Method, horizon: usize) -> LabResult<Evaluation> {
    let config = dataset.config();
    let sequences = dataset.split(split);
    if sequences.is_empty() {
        return Err(LabError::Mismatch(format!("{} split is empty", split.name())));
    }
    if horizon == 0 || horizon > config.eval_horizon {
        return Err(LabError::Config(format!("horizon {horizon} must lie in [1, {}]", config.eval_horizon)));
    }
    check_compatibility(dataset, method)?;
    let results = sequences
        .par_iter()
        .map(|s| evaluate_sequence(s, method, config.t0, config.fit_window, horizon))
        .collect::<LabResult<Vec<_>>>()?;
    let collect = |f: fn(&SequenceResult) -> Option<&Vec<f64>>| -> Option<Vec<Vec<f64>>> {
        results.iter().map(|r| f(r).cloned()).collect()
    };
    Ok(Evaluation {
        method: method.name(),
        case: config.scenario.clone(),
        checkpoint: method.source(),
        horizon,
        position_errors: results.iter().map(|r| r.position.clone()).collect(),
        angular_errors: collect(|r| r.angular.as_ref()),
        nll: collect(|r| r.nll.as_ref()),
    })
}

fn horizon_mean(rows: &[Vec<f64>], h: usize, f: impl Fn(f64) -> f64) -> f64 {
    let total: f64 = rows.iter().map(|r| r[..h].iter().map(|&v| f(v)).sum::<f64>() / h as f64).sum();
    total / rows.len() as f64
}

impl Evaluation {
    /// Table cells at horizon `h ≤ self.horizon`: means over sequences and `t < h`.
    pub fn metrics(&self, h: usize) -> LabResult<MetricsRecord> {
        if h == 0 || h > self.horizon {
            return Err(LabError::Config(format!("metric horizon {h} exceeds evaluated horizon {}", self.horizon)));
        }
        let ln_perplexity = match &self.nll {
            Some(nll) => {
                let flat: Vec<f64> = nll.iter().flat_map(|r| r[..h].iter().copied()).collect();
                Some(log_perplexity(&flat)?)
            }
            None => None,
        };
        Ok(MetricsRecord {
            method: self.method.clone(),
            case: self.case.clone(),
            checkpoint: self.checkpoint.clone(),
            horizon: h,
            l2: horizon_mean(&self.position_errors, h, |v| v),
            mse: horizon_mean(&self.position_errors, h, |v| v * v),
            angular: self.angular_errors.as_ref().map(|a| horizon_mean(a, h, |v| v)),
            ln_perplexity,
        })
    }

    pub fn position_curve(&self) -> LabResult<TimestepErrorCurve> {
        Ok(timestep_error_stats(&self.position_errors)?)
    }

    pub fn angular_curve(&self) -> LabResult<Option<TimestepErrorCurve>> {
        Ok(match &self.angular_errors {
            Some(a) => Some(timestep_error_stats(a)?),
            None => None,
        })
    }

    /// Mean NLL per timestep, for probabilistic models.
    pub fn nll_curve(&self) -> Option<Vec<f64>> {
        self.nll.as_ref().map(|n| (0..self.horizon).map(|t| n.iter().map(|r| r[t]).sum::<f64>() / n.len() as f64).collect())
    }

    /// Per-timestep curves as CSV (`t` indexed from 0).
    pub fn curves_csv(&self) -> LabResult<String> {
        let pos = self.position_curve()?;
        let ang = self.angular_curve()?;
        let nll = self.nll_curve();
        let mut out = String::from("t,l2_mean,l2_p25,l2_p75,angular_mean,angular_p25,angular_p75,nll_mean\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for t in 0..self.horizon {
            writeln!(
                out,
                "{t},{},{},{},{},{},{},{}",
                pos.mean[t],
                pos.p25[t],
                pos.p75[t],
                opt(ang.as_ref().map(|a| a.mean[t])),
                opt(ang.as_ref().map(|a| a.p25[t])),
                opt(ang.as_ref().map(|a| a.p75[t])),
                opt(nll.as_ref().map(|n| n[t])),
            )
            .expect("string write");
        }
        Ok(out)
    }
}
