//! Single-output GP regression on z-scored values.
//!
//! Hyperparameters are the kernel lengthscale and the noise variance, fitted
//! by maximizing the log marginal likelihood in log space.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::covariance::{stable_factorize, Factor};
use crate::error::{Error, Result};
use crate::kernel::{kernel_grad_lengthscale, kernel_matrix, KernelParams};
use crate::optimize::{minimize, BfgsOptions};
use crate::series::{FitInfo, Normalization, PredictionBand, TimeSeries, TrainConfig};

/// Kernel plus noise variance (normalized units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    pub kernel: KernelParams,
    pub noise_variance: f64,
}

fn covariance(hyper: &GpHyper, times: &[f64]) -> Result<DMatrix<f64>> {
    let mut k = kernel_matrix(&hyper.kernel, times, times)?;
    for i in 0..times.len() {
        k[(i, i)] += hyper.noise_variance;
    }
    Ok(k)
}

fn gaussian_lml(factor: &Factor, y: &DVector<f64>) -> (f64, DVector<f64>) {
    let alpha = factor.solve(y);
    let n = y.len() as f64;
    let lml = -0.5 * y.dot(&alpha) - 0.5 * factor.log_det() - 0.5 * n * (2.0 * PI).ln();
    (lml, alpha)
}

/// Log marginal likelihood of normalized values `y` observed at `times`.
pub fn log_marginal_likelihood(hyper: &GpHyper, times: &[f64], y: &[f64]) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let factor = stable_factorize(&covariance(hyper, times)?)?;
    Ok(gaussian_lml(&factor, &DVector::from_column_slice(y)).0)
}

/// Log marginal likelihood and its gradient with respect to
/// `(ln lengthscale, ln noise_variance)`.
pub fn log_marginal_likelihood_grad(
    hyper: &GpHyper,
    times: &[f64],
    y: &[f64],
) -> Result<(f64, [f64; 2])> {
    if times.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let factor = stable_factorize(&covariance(hyper, times)?)?;
    let (lml, alpha) = gaussian_lml(&factor, &DVector::from_column_slice(y));
    // 0.5 tr((alpha alpha^T - K^-1) dK)
    let mut w = factor.inverse();
    w.ger(1.0, &alpha, &alpha, -1.0);
    let dk = kernel_grad_lengthscale(&hyper.kernel, times, times)?;
    let g_len = 0.5 * hyper.kernel.lengthscale() * w.component_mul(&dk).sum();
    let g_noise = 0.5 * hyper.noise_variance * w.trace();
    Ok((lml, [g_len, g_noise]))
}

/// A fitted (or explicitly parameterized) single-output GP.
#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: GpHyper,
    norm: Normalization,
    series: TimeSeries,
    values_normalized: Vec<f64>,
    factor: Factor,
    alpha: DVector<f64>,
    fit: Option<FitInfo>,
}

impl GpModel {
    /// Builds a model with fixed hyperparameters, normalizing `series` itself.
    pub fn from_parts(hyper: GpHyper, series: &TimeSeries) -> Result<Self> {
        let norm = Normalization::fit(series.values(), 1)?;
        Self::with_normalization(hyper, series, norm)
    }

    pub fn with_normalization(hyper: GpHyper, series: &TimeSeries, norm: Normalization) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if !(hyper.noise_variance >= 0.0 && hyper.noise_variance.is_finite()) {
            return Err(Error::InvalidInput("noise variance must be nonnegative".into()));
        }
        if !(norm.std > 0.0) {
            return Err(Error::ConstantSeries { output: 1 });
        }
        let values_normalized: Vec<f64> = series.values().iter().map(|&v| norm.normalize(v)).collect();
        let factor = stable_factorize(&covariance(&hyper, series.times())?)?;
        let alpha = factor.solve(&DVector::from_column_slice(&values_normalized));
        Ok(GpModel {
            hyper,
            norm,
            series: series.clone(),
            values_normalized,
            factor,
            alpha,
            fit: None,
        })
    }

    pub fn with_fit_info(mut self, fit: FitInfo) -> Self {
        self.fit = Some(fit);
        self
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn normalization(&self) -> Normalization {
        self.norm
    }

    pub fn training(&self) -> &TimeSeries {
        &self.series
    }

    pub fn values_normalized(&self) -> &[f64] {
        &self.values_normalized
    }

    pub fn factor(&self) -> &Factor {
        &self.factor
    }

    pub fn fit_info(&self) -> Option<FitInfo> {
        self.fit
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        gaussian_lml(&self.factor, &DVector::from_column_slice(&self.values_normalized)).0
    }

    /// Predictive mean and variance in normalized units. The variance
    /// includes the observation noise.
    pub fn predict_normalized(&self, times: &[f64]) -> (Vec<f64>, Vec<f64>) {
        if times.is_empty() {
            return (vec![], vec![]);
        }
        let train = self.series.times();
        let k_star = DMatrix::from_fn(train.len(), times.len(), |i, j| {
            self.hyper.kernel.eval(train[i], times[j])
        });
        let mean = k_star.tr_mul(&self.alpha);
        let v = self.factor.solve_lower_matrix(&k_star);
        let prior = 1.0 + self.hyper.noise_variance;
        let var = v
            .column_iter()
            .map(|c| (prior - c.norm_squared()).max(0.0))
            .collect();
        (mean.as_slice().to_vec(), var)
    }

    pub fn predict(&self, times: &[f64]) -> PredictionBand {
        let (mean, var) = self.predict_normalized(times);
        PredictionBand {
            times: times.to_vec(),
            mean: mean.iter().map(|&m| self.norm.denormalize(m)).collect(),
            std: var.iter().map(|v| v.sqrt() * self.norm.std).collect(),
        }
    }
}

pub fn predict(model: &GpModel, times: &[f64]) -> PredictionBand {
    model.predict(times)
}

/// Fits lengthscale and noise variance by maximizing the marginal likelihood,
/// keeping the best of `config.restarts` runs.
pub fn train(series: &TimeSeries, config: &TrainConfig) -> Result<GpModel> {
    if series.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: series.len(),
        });
    }
    let norm = Normalization::fit(series.values(), 1)?;
    let y: Vec<f64> = series.values().iter().map(|&v| norm.normalize(v)).collect();
    let times = series.times();
    let floor = config.noise_floor;
    let kind = config.kernel;

    // x = [ln l, ln(noise - floor)]
    let objective = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let extra = x[1].exp();
        let hyper = GpHyper {
            kernel: KernelParams::new(kind, x[0].exp()).ok()?,
            noise_variance: floor + extra,
        };
        let (lml, g) = log_marginal_likelihood_grad(&hyper, times, &y).ok()?;
        let g_noise = g[1] * extra / hyper.noise_variance;
        Some((-lml, vec![-g[0], -g_noise]))
    };

    let range = series.span();
    let bases = [range / 10.0, range / 3.0, range];
    let jitter = LogNormal::new(0.0, 0.2).expect("valid lognormal");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let opts = BfgsOptions {
        max_iter: config.max_iter,
        grad_tol: config.grad_tol,
        ..Default::default()
    };

    let restarts = config.restarts.max(1);
    let mut best: Option<(usize, crate::optimize::Minimum)> = None;
    for r in 0..restarts {
        let l0 = bases[r % 3] * jitter.sample(&mut rng);
        let x0 = [l0.ln(), (0.1 - floor).ln()];
        let Some(m) = minimize(objective, &x0, &opts) else {
            log::debug!("gp restart {r} failed at its initial point");
            continue;
        };
        if best.as_ref().is_none_or(|(_, b)| m.value < b.value) {
            best = Some((r, m));
        }
    }
    let (restart_index, m) = best.ok_or(Error::OptimizerDiverged { restarts })?;
    let hyper = GpHyper {
        kernel: KernelParams::new(kind, m.x[0].exp())?,
        noise_variance: floor + m.x[1].exp(),
    };
    let model = GpModel::with_normalization(hyper, series, norm)?;
    Ok(model.with_fit_info(FitInfo {
        iterations: m.iterations,
        log_likelihood: -m.value,
        restart_index,
        converged: m.converged,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper(l: f64, noise: f64) -> GpHyper {
        GpHyper {
            kernel: KernelParams::matern32(l).unwrap(),
            noise_variance: noise,
        }
    }

    #[test]
    fn lml_single_sample() {
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        let v = log_marginal_likelihood(&hyper(10.0, 0.0), &[0.0], &[2.0]).unwrap();
        assert!((v - (-2.0 - half_log_2pi)).abs() < 1e-12);
        assert!((v + 2.9189).abs() < 1e-4);
        let v = log_marginal_likelihood(&hyper(10.0, 0.0), &[0.0], &[0.0]).unwrap();
        assert!((v + 0.9189).abs() < 1e-4);
    }

    #[test]
    fn lml_matches_dense_oracle() {
        let h = hyper(7.0, 0.3);
        let t = [0.0, 4.0, 11.0];
        let y = [0.5, -1.2, 0.8];
        let k = covariance(&h, &t).unwrap();
        let inv = k.clone().try_inverse().unwrap();
        let yv = DVector::from_column_slice(&y);
        let oracle = -0.5 * (yv.transpose() * inv * &yv)[(0, 0)]
            - 0.5 * k.determinant().ln()
            - 1.5 * (2.0 * PI).ln();
        let v = log_marginal_likelihood(&h, &t, &y).unwrap();
        assert!((v - oracle).abs() < 1e-12, "{v} vs {oracle}");
    }

    #[test]
    fn too_few_and_constant() {
        let one = TimeSeries::new(vec![0.0], vec![1.0], "x").unwrap();
        assert!(matches!(train(&one, &TrainConfig::default()), Err(Error::TooFewSamples { .. })));
        let flat = TimeSeries::new(vec![0.0, 10.0], vec![3.0, 3.0], "x").unwrap();
        assert!(matches!(
            train(&flat, &TrainConfig::default()),
            Err(Error::ConstantSeries { output: 1 })
        ));
    }

    #[test]
    fn one_sample_closed_form_prediction() {
        // normalization chosen so the stored value maps to 1.0
        let s = TimeSeries::new(vec![0.0], vec![1.0], "x").unwrap();
        let m = GpModel::with_normalization(hyper(10.0, 1.0), &s, Normalization { mean: 0.0, std: 1.0 }).unwrap();
        let (mean, var) = m.predict_normalized(&[0.0]);
        assert!((mean[0] - 0.5).abs() < 1e-15);
        assert!((var[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn noise_free_interpolation_and_prior_reversion() {
        let s = TimeSeries::new(vec![0.0, 20.0, 45.0, 60.0], vec![1.0, 3.0, 2.0, 5.0], "x").unwrap();
        let m = GpModel::from_parts(hyper(15.0, 0.0), &s).unwrap();
        let (mean, _) = m.predict_normalized(s.times());
        for (p, y) in mean.iter().zip(m.values_normalized()) {
            assert!((p - y).abs() < 1e-6);
        }
        let noisy = GpModel::from_parts(hyper(15.0, 0.2), &s).unwrap();
        let (mean, var) = noisy.predict_normalized(&[1e5]);
        assert!(mean[0].abs() < 1e-12);
        assert!((var[0] - 1.2).abs() < 1e-12);
        let band = noisy.predict(&[1e5]);
        assert!((band.mean[0] - noisy.normalization().mean).abs() < 1e-9);
    }

    #[test]
    fn variance_smaller_at_data_than_in_gap() {
        let s = TimeSeries::new(vec![0.0, 10.0, 20.0, 100.0, 110.0], vec![1.0, 2.0, 1.5, 0.5, 1.0], "x").unwrap();
        let m = GpModel::from_parts(hyper(20.0, 0.0), &s).unwrap();
        let (_, var) = m.predict_normalized(&[10.0, 60.0]);
        assert!(var[0] < var[1]);
        let noisy = GpModel::from_parts(hyper(20.0, 1e-3), &s).unwrap();
        let (_, var) = noisy.predict_normalized(&[0.0, 5.0, 33.0, 60.0, 500.0]);
        assert!(var.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn translation_invariance() {
        let s = TimeSeries::new(vec![0.0, 7.0, 19.0, 30.0], vec![1.0, 2.5, 1.5, 0.2], "x").unwrap();
        let shifted = TimeSeries::new(s.times().iter().map(|t| t + 1234.5).collect(), s.values().to_vec(), "x").unwrap();
        let a = GpModel::from_parts(hyper(9.0, 0.05), &s).unwrap().predict(&[3.0, 25.0]);
        let b = GpModel::from_parts(hyper(9.0, 0.05), &shifted).unwrap().predict(&[1237.5, 1259.5]);
        for i in 0..2 {
            assert!((a.mean[i] - b.mean[i]).abs() < 1e-10, "{} vs {}", a.mean[i], b.mean[i]);
            assert!((a.std[i] - b.std[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn affine_equivariance() {
        let s = TimeSeries::new(vec![0.0, 7.0, 19.0, 30.0], vec![1.0, 2.5, 1.5, 0.2], "x").unwrap();
        let (alpha, beta) = (3.5, -2.0);
        let t = TimeSeries::new(s.times().to_vec(), s.values().iter().map(|v| alpha * v + beta).collect(), "x").unwrap();
        let a = GpModel::from_parts(hyper(9.0, 0.05), &s).unwrap().predict(&[3.0, 25.0, 80.0]);
        let b = GpModel::from_parts(hyper(9.0, 0.05), &t).unwrap().predict(&[3.0, 25.0, 80.0]);
        for i in 0..3 {
            assert!((alpha * a.mean[i] + beta - b.mean[i]).abs() < 1e-12);
            assert!((alpha * a.std[i] - b.std[i]).abs() < 1e-12);
        }
    }
}
