//! Training losses and evaluation metrics on plain values.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::LN_2;
use libm::{log, pow, sqrt};

use crate::error::{Error, Result};
use crate::model::GaussianBelief;

/// Loss value with its components and per-timestep contributions.
///
/// `total = position + nll + regularizer + angular`; absent components are 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossReport {
    pub total: f64,
    pub position: f64,
    pub nll: f64,
    pub regularizer: f64,
    pub angular: f64,
    pub per_timestep: Vec<f64>,
}

/// Per-timestep mean and 25th/75th percentiles of pixel errors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimestepErrorCurve {
    pub mean: Vec<f64>,
    pub p25: Vec<f64>,
    pub p75: Vec<f64>,
}

impl TimestepErrorCurve {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Keeps the first `n` timesteps.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self { mean: self.mean[..n].to_vec(), p25: self.p25[..n].to_vec(), p75: self.p75[..n].to_vec() }
    }
}

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Invalid(format!("{what}: {a} predictions vs {b} targets")));
    }
    if a == 0 {
        return Err(Error::Invalid(format!("{what}: empty sequence")));
    }
    Ok(())
}

fn squared_distance<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(1/T) Σ ‖ŷ_t − y_t‖²`.
pub fn l2_sequence_loss(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<f64> {
    check_lengths(pred.len(), gt.len(), "l2 loss")?;
    Ok(pred.iter().zip(gt).map(|(p, y)| squared_distance(p, y)).sum::<f64>() / pred.len() as f64)
}

/// Euclidean pixel distance at each timestep.
pub fn pixel_errors(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<Vec<f64>> {
    check_lengths(pred.len(), gt.len(), "pixel errors")?;
    Ok(pred.iter().zip(gt).map(|(p, y)| sqrt(squared_distance(p, y))).collect())
}

/// `(1/T) Σ −log N(y_t; μ_t, Σ_t)` plus `λ Σ_t det Σ_t`.
pub fn gaussian_nll_loss(gt: &[[f64; 2]], beliefs: &[GaussianBelief], lambda: f64) -> Result<LossReport> {
    check_lengths(beliefs.len(), gt.len(), "gaussian nll")?;
    let mut per_timestep = Vec::with_capacity(gt.len());
    let mut det_sum = 0.0;
    for (b, y) in beliefs.iter().zip(gt) {
        per_timestep.push(b.nll(*y)?);
        let c = b.covariance();
        det_sum += c[0][0] * c[1][1] - c[0][1] * c[1][0];
    }
    let nll = per_timestep.iter().sum::<f64>() / gt.len() as f64;
    let regularizer = lambda * det_sum;
    Ok(LossReport { total: nll + regularizer, nll, regularizer, per_timestep, ..LossReport::default() })
}

/// `(1/T) Σ ‖ω̂_t − ω_t‖²`.
pub fn angular_velocity_loss(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64> {
    check_lengths(pred.len(), gt.len(), "angular loss")?;
    Ok(pred.iter().zip(gt).map(|(p, y)| squared_distance(p, y)).sum::<f64>() / pred.len() as f64)
}

/// Natural log of the perplexity `2^{−E[log₂ p]}`, i.e. the mean NLL in nats.
pub fn log_perplexity(nll: &[f64]) -> Result<f64> {
    if nll.is_empty() {
        return Err(Error::Invalid("log perplexity of an empty set".into()));
    }
    if nll.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log perplexity input"));
    }
    Ok(nll.iter().sum::<f64>() / nll.len() as f64)
}

/// `ln(2^{−mean log₂ p})` evaluated literally from base-2 log densities.
pub fn log_perplexity_base2(nll: &[f64]) -> f64 {
    let mean_log2_p = nll.iter().map(|n| -n / LN_2).sum::<f64>() / nll.len() as f64;
    log(pow(2.0, -mean_log2_p))
}

/// Linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Aggregates `errors[sequence][t]` into per-timestep statistics.
pub fn timestep_error_stats(errors: &[Vec<f64>]) -> Result<TimestepErrorCurve> {
    let first = errors.first().ok_or_else(|| Error::Invalid("no sequences to aggregate".into()))?;
    let horizon = first.len();
    if horizon == 0 {
        return Err(Error::Invalid("sequences have no timesteps".into()));
    }
    if let Some(bad) = errors.iter().position(|e| e.len() != horizon) {
        return Err(Error::Invalid(format!("sequence {bad} has {} timesteps, expected {horizon}", errors[bad].len())));
    }
    let mut curve = TimestepErrorCurve::default();
    let mut column = Vec::with_capacity(errors.len());
    for t in 0..horizon {
        column.clear();
        column.extend(errors.iter().map(|e| e[t]));
        if column.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("timestep error"));
        }
        curve.mean.push(column.iter().sum::<f64>() / column.len() as f64);
        column.sort_by(f64::total_cmp);
        curve.p25.push(quantile(&column, 0.25));
        curve.p75.push(quantile(&column, 0.75));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    fn belief(mean: [f64; 2], lam: f64) -> GaussianBelief {
        GaussianBelief { mean, eigenvalues: [lam, lam], angle: 0.3 }
    }

    #[test]
    fn l2_examples() {
        let gt = [[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]];
        assert_eq!(l2_sequence_loss(&gt, &gt).unwrap(), 0.0);
        let shifted: Vec<_> = gt.iter().map(|p| [p[0] + 3.0, p[1] + 4.0]).collect();
        assert!((l2_sequence_loss(&shifted, &gt).unwrap() - 25.0).abs() < 1e-12);
        let v = l2_sequence_loss(&[[0.0, 0.0], [3.0, 4.0]], &[[0.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!((v - 12.5).abs() < 1e-12);
        assert!(l2_sequence_loss(&gt[..2], &gt).is_err());
    }

    #[test]
    fn nll_examples() {
        let r = gaussian_nll_loss(&[[1.0, 1.0]], &[belief([1.0, 1.0], 1.0)], 0.0).unwrap();
        assert!((r.total - log(2.0 * PI)).abs() < 1e-12);
        assert!((r.total - 1.837877).abs() < 1e-6);
        let r = gaussian_nll_loss(&[[0.0, 0.0]], &[belief([0.0, 0.0], 4.0)], 0.0).unwrap();
        assert!((r.total - 3.224171).abs() < 1e-6);
        let gt = [[0.0, 0.0]; 3];
        let r = gaussian_nll_loss(&gt, &[belief([0.0, 0.0], 1.0); 3], 0.01).unwrap();
        assert!((r.regularizer - 0.03).abs() < 1e-12);
        assert!((r.total - r.nll - r.regularizer).abs() < 1e-12);
        assert_eq!(r.per_timestep.len(), 3);
    }

    #[test]
    fn nll_decreases_toward_target() {
        let y = [[2.0, -1.0]];
        let far = gaussian_nll_loss(&y, &[belief([0.0, 0.0], 2.0)], 0.0).unwrap().total;
        let near = gaussian_nll_loss(&y, &[belief([1.0, -0.5], 2.0)], 0.0).unwrap().total;
        assert!(near < far);
    }

    #[test]
    fn angular_examples() {
        let w = [[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]];
        assert_eq!(angular_velocity_loss(&w, &w).unwrap(), 0.0);
        let off: Vec<_> = w.iter().map(|v| [v[0] + 1.0, v[1], v[2]]).collect();
        assert!((angular_velocity_loss(&off, &w).unwrap() - 1.0).abs() < 1e-12);
        let pred = [[1.0, 1.0, 0.0], [2.0, 0.0, 0.0]];
        assert!((angular_velocity_loss(&pred, &[[0.0; 3]; 2]).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn perplexity_examples() {
        let nll = vec![log(2.0 * PI); 5];
        assert!((log_perplexity(&nll).unwrap() - 1.8379).abs() < 1e-4);
        assert_eq!(log_perplexity(&[0.0, 0.0]).unwrap(), 0.0);
        let mixed = [0.3, 12.0, -1.5, 40.0];
        assert!((log_perplexity(&mixed).unwrap() - log_perplexity_base2(&mixed)).abs() < 1e-12);
    }

    #[test]
    fn percentile_examples() {
        let c = timestep_error_stats(&[vec![2.5, 7.0]]).unwrap();
        assert_eq!(c.mean, vec![2.5, 7.0]);
        assert_eq!(c.p25, c.mean);
        assert_eq!(c.p75, c.mean);
        let c = timestep_error_stats(&[vec![0.0], vec![10.0]]).unwrap();
        assert_eq!(c.mean, vec![5.0]);
        let c = timestep_error_stats(&[vec![3.0], vec![1.0], vec![4.0], vec![2.0]]).unwrap();
        assert!((c.p25[0] - 1.75).abs() < 1e-12);
        assert!((c.p75[0] - 3.25).abs() < 1e-12);
        assert!(timestep_error_stats(&[]).is_err());
        assert!(timestep_error_stats(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
