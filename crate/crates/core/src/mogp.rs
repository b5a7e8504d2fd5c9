//! Two-output semiparametric latent factor model.
//!
//! Each output is a linear mix of two independent unit-variance latent GPs,
//! `f_d(t) = a_{d,1} u_1(t) + a_{d,2} u_2(t)`, observed with its own noise.
//! The 8 free parameters are the two lengthscales, the four mixing weights
//! and the two noise variances.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::covariance::{
    assemble_cross_covariance, assemble_full_covariance, coreg_matrix, stable_factorize, CoregVector, Factor,
    MultiInput, NoiseVariances,
};
use crate::error::{Error, Result};
use crate::interp::{interpolate, Interpolator};
use crate::kernel::KernelParams;
use crate::optimize::{minimize, BfgsOptions, Minimum};
use crate::series::{FitInfo, Normalization, PredictionBand, TimeSeries, TrainConfig};

pub const NUM_PARAMS: usize = 8;

/// Latent kernels, mixing vectors and noise of the two-output model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlfmParams {
    pub kernels: [KernelParams; 2],
    pub coregs: [CoregVector; 2],
    pub noise: NoiseVariances,
}

impl SlfmParams {
    /// Parameter vector in gradient order:
    /// `[ln l_1, ln l_2, a_11, a_21, a_12, a_22, ln s2_1, ln s2_2]`,
    /// where `a_dq` weights latent `q` in output `d`.
    pub fn to_vector(&self) -> [f64; NUM_PARAMS] {
        let a = self.coregs[0].components();
        let b = self.coregs[1].components();
        [
            self.kernels[0].lengthscale().ln(),
            self.kernels[1].lengthscale().ln(),
            a[0],
            a[1],
            b[0],
            b[1],
            self.noise.0[0].ln(),
            self.noise.0[1].ln(),
        ]
    }

    pub fn from_vector(kind: crate::kernel::KernelKind, x: &[f64; NUM_PARAMS]) -> Result<Self> {
        Ok(SlfmParams {
            kernels: [KernelParams::new(kind, x[0].exp())?, KernelParams::new(kind, x[1].exp())?],
            coregs: [CoregVector::raw([x[2], x[3]]), CoregVector::raw([x[4], x[5]])],
            noise: NoiseVariances::new([x[6].exp(), x[7].exp()])?,
        })
    }

    pub fn canonical(&self) -> Self {
        SlfmParams {
            coregs: [self.coregs[0].canonical(), self.coregs[1].canonical()],
            ..*self
        }
    }
}

fn factor_and_alpha(params: &SlfmParams, inputs: &MultiInput, y: &[f64]) -> Result<(Factor, DVector<f64>)> {
    if y.len() != inputs.total() {
        return Err(Error::InvalidInput(format!(
            "{} values for {} sample times",
            y.len(),
            inputs.total()
        )));
    }
    let k = assemble_full_covariance(&params.kernels, &params.coregs, inputs, &params.noise);
    let factor = stable_factorize(&k)?;
    let alpha = factor.solve(&DVector::from_column_slice(y));
    Ok((factor, alpha))
}

fn lml_from(factor: &Factor, alpha: &DVector<f64>, y: &[f64]) -> f64 {
    let y = DVector::from_column_slice(y);
    -0.5 * y.dot(alpha) - 0.5 * factor.log_det() - 0.5 * y.len() as f64 * (2.0 * PI).ln()
}

/// Gaussian log likelihood of the stacked normalized values `[y_1; y_2]`.
pub fn log_marginal_likelihood(params: &SlfmParams, inputs: &MultiInput, y: &[f64]) -> Result<f64> {
    let (factor, alpha) = factor_and_alpha(params, inputs, y)?;
    Ok(lml_from(&factor, &alpha, y))
}

/// Log likelihood and its gradient in the order of [`SlfmParams::to_vector`].
pub fn log_marginal_likelihood_grad(
    params: &SlfmParams,
    inputs: &MultiInput,
    y: &[f64],
) -> Result<(f64, [f64; NUM_PARAMS])> {
    let (factor, alpha) = factor_and_alpha(params, inputs, y)?;
    let lml = lml_from(&factor, &alpha, y);

    // W = alpha alpha^T - K^-1; dL/dtheta = 0.5 sum(W o dK/dtheta)
    let mut w = factor.inverse();
    w.ger(1.0, &alpha, &alpha, -1.0);

    let (t, owner) = inputs.stacked();
    let n = t.len();
    // s[q][d][d'] = sum over block (d, d') of W o K_q, g likewise with dK_q/dl
    let mut s = [[[0.0; 2]; 2]; 2];
    let mut g = [[[0.0; 2]; 2]; 2];
    for j in 0..n {
        for i in 0..n {
            let wij = w[(i, j)];
            let r = t[i] - t[j];
            let (di, dj) = (owner[i], owner[j]);
            for q in 0..2 {
                s[q][di][dj] += wij * params.kernels[q].eval_distance(r);
                g[q][di][dj] += wij * params.kernels[q].grad_distance(r);
            }
        }
    }

    let mut grad = [0.0; NUM_PARAMS];
    for q in 0..2 {
        let a = params.coregs[q].components();
        let b = coreg_matrix(&params.coregs[q]);
        let mut dl = 0.0;
        for d in 0..2 {
            for e in 0..2 {
                dl += b[(d, e)] * g[q][d][e];
            }
        }
        grad[q] = 0.5 * params.kernels[q].lengthscale() * dl;
        for e in 0..2 {
            grad[2 + 2 * q + e] = a[0] * s[q][e][0] + a[1] * s[q][e][1];
        }
    }
    for d in 0..2 {
        let tr: f64 = (0..n).filter(|&i| owner[i] == d).map(|i| w[(i, i)]).sum();
        grad[6 + d] = 0.5 * params.noise.0[d] * tr;
    }
    Ok((lml, grad))
}

/// Gradient only, same order as [`SlfmParams::to_vector`].
pub fn gradients(params: &SlfmParams, inputs: &MultiInput, y: &[f64]) -> Result<[f64; NUM_PARAMS]> {
    Ok(log_marginal_likelihood_grad(params, inputs, y)?.1)
}

/// Trained or explicitly parameterized two-output model.
#[derive(Debug, Clone)]
pub struct SlfmModel {
    params: SlfmParams,
    norm: [Normalization; 2],
    series: [TimeSeries; 2],
    inputs: MultiInput,
    values_normalized: Vec<f64>,
    factor: Factor,
    alpha: DVector<f64>,
    fit: Option<FitInfo>,
}

impl SlfmModel {
    /// Builds a model with fixed parameters, z-scoring each output itself.
    pub fn from_parts(params: SlfmParams, series_1: &TimeSeries, series_2: &TimeSeries) -> Result<Self> {
        let norm = [
            Normalization::fit(series_1.values(), 1)?,
            Normalization::fit(series_2.values(), 2)?,
        ];
        Self::with_normalization(params, series_1, series_2, norm)
    }

    pub fn with_normalization(
        params: SlfmParams,
        series_1: &TimeSeries,
        series_2: &TimeSeries,
        norm: [Normalization; 2],
    ) -> Result<Self> {
        for (d, n) in norm.iter().enumerate() {
            if !(n.std > 0.0) {
                return Err(Error::ConstantSeries { output: d + 1 });
            }
        }
        let inputs = MultiInput::new(series_1.times().to_vec(), series_2.times().to_vec())?;
        let values_normalized: Vec<f64> = series_1
            .values()
            .iter()
            .map(|&v| norm[0].normalize(v))
            .chain(series_2.values().iter().map(|&v| norm[1].normalize(v)))
            .collect();
        let (factor, alpha) = factor_and_alpha(&params, &inputs, &values_normalized)?;
        Ok(SlfmModel {
            params,
            norm,
            series: [series_1.clone(), series_2.clone()],
            inputs,
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

    pub fn params(&self) -> &SlfmParams {
        &self.params
    }

    pub fn normalization(&self) -> [Normalization; 2] {
        self.norm
    }

    pub fn training(&self, output: usize) -> &TimeSeries {
        &self.series[output]
    }

    pub fn inputs(&self) -> &MultiInput {
        &self.inputs
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
        lml_from(&self.factor, &self.alpha, &self.values_normalized)
    }

    /// Per-output predictive mean and variance in normalized units
    /// (variance includes that output's noise).
    pub fn predict_normalized(&self, times: &[f64]) -> [(Vec<f64>, Vec<f64>); 2] {
        let p = &self.params;
        let prior = [
            coreg_matrix(&p.coregs[0]) + coreg_matrix(&p.coregs[1]),
            Matrix2::from_diagonal(&p.noise.0.into()),
        ];
        let mut out: [(Vec<f64>, Vec<f64>); 2] = Default::default();
        if times.is_empty() {
            return out;
        }
        let n = self.inputs.total();
        let mut cross = [DMatrix::zeros(n, times.len()), DMatrix::zeros(n, times.len())];
        for (j, &ts) in times.iter().enumerate() {
            let k = assemble_cross_covariance(&p.kernels, &p.coregs, &self.inputs, ts);
            for d in 0..2 {
                cross[d].set_column(j, &k.row(d).transpose());
            }
        }
        for d in 0..2 {
            let mean = cross[d].tr_mul(&self.alpha);
            let v = self.factor.solve_lower_matrix(&cross[d]);
            let c = prior[0][(d, d)] + prior[1][(d, d)];
            out[d] = (
                mean.as_slice().to_vec(),
                v.column_iter().map(|col| (c - col.norm_squared()).max(0.0)).collect(),
            );
        }
        out
    }

    /// Predictions for both outputs, de-normalized to original units.
    pub fn predict(&self, times: &[f64]) -> [PredictionBand; 2] {
        let [o1, o2] = self.predict_normalized(times);
        let band = |(mean, var): (Vec<f64>, Vec<f64>), n: Normalization| PredictionBand {
            times: times.to_vec(),
            mean: mean.iter().map(|&m| n.denormalize(m)).collect(),
            std: var.iter().map(|v| v.sqrt() * n.std).collect(),
        };
        [band(o1, self.norm[0]), band(o2, self.norm[1])]
    }

    pub fn diagnose(&self, config: &DiagnoseConfig) -> SynergyDiagnostics {
        diagnose_params(&self.params, config)
    }
}

pub fn predict(model: &SlfmModel, times: &[f64]) -> [PredictionBand; 2] {
    model.predict(times)
}

/// Sign of the correlation between output 1 and output 2 interpolated at the
/// output-1 times; +1 when it cannot be estimated.
fn cross_correlation_sign(s1: &TimeSeries, s2: &TimeSeries) -> f64 {
    let (lo, hi) = (s2.times()[0], s2.times()[s2.len() - 1]);
    let (t, v): (Vec<f64>, Vec<f64>) = s1.iter().filter(|(t, _)| *t >= lo && *t <= hi).unzip();
    if t.len() < 3 {
        return 1.0;
    }
    let Ok(w) = interpolate(s2, Interpolator::Linear, &t) else {
        return 1.0;
    };
    let n = t.len() as f64;
    let (mv, mw) = (v.iter().sum::<f64>() / n, w.iter().sum::<f64>() / n);
    let cov: f64 = v.iter().zip(&w).map(|(a, b)| (a - mv) * (b - mw)).sum();
    if cov < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Jointly fits all 8 parameters on the z-scored outputs, keeping the best
/// of `config.restarts` runs. Restart 0 starts from the deterministic
/// LF/HF-separated initialization, later restarts from perturbations of it.
pub fn train(series_1: &TimeSeries, series_2: &TimeSeries, config: &TrainConfig) -> Result<SlfmModel> {
    for s in [series_1, series_2] {
        if s.len() < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: s.len() });
        }
    }
    let norm = [
        Normalization::fit(series_1.values(), 1)?,
        Normalization::fit(series_2.values(), 2)?,
    ];
    let inputs = MultiInput::new(series_1.times().to_vec(), series_2.times().to_vec())?;
    let y: Vec<f64> = series_1
        .values()
        .iter()
        .map(|&v| norm[0].normalize(v))
        .chain(series_2.values().iter().map(|&v| norm[1].normalize(v)))
        .collect();

    let floor = config.noise_floor;
    let kind = config.kernel;
    // noise enters as floor + exp(x), the rest as in SlfmParams::to_vector
    let to_params = |x: &[f64]| -> Option<SlfmParams> {
        Some(SlfmParams {
            kernels: [KernelParams::new(kind, x[0].exp()).ok()?, KernelParams::new(kind, x[1].exp()).ok()?],
            coregs: [CoregVector::raw([x[2], x[3]]), CoregVector::raw([x[4], x[5]])],
            noise: NoiseVariances([floor + x[6].exp(), floor + x[7].exp()]),
        })
    };
    let objective = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let p = to_params(x)?;
        let (lml, mut g) = log_marginal_likelihood_grad(&p, &inputs, &y).ok()?;
        for d in 0..2 {
            g[6 + d] *= x[6 + d].exp() / p.noise.0[d];
        }
        Some((-lml, g.iter().map(|v| -v).collect()))
    };

    let t_min = series_1.times()[0].min(series_2.times()[0]);
    let t_max = series_1.times()[series_1.len() - 1].max(series_2.times()[series_2.len() - 1]);
    let range = t_max - t_min;
    let sign = cross_correlation_sign(series_1, series_2);
    let noise0 = (0.1 - floor).ln();
    let base = [
        (range / 5.0).ln(),
        (range / 40.0).ln(),
        0.8,
        0.8 * sign,
        0.3,
        0.05,
        noise0,
        noise0,
    ];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let len_jitter = LogNormal::<f64>::new(0.0, 0.5).expect("valid lognormal");
    let coef_jitter = Normal::new(0.0, 0.25).expect("valid normal");
    let opts = BfgsOptions {
        max_iter: config.max_iter,
        grad_tol: config.grad_tol,
        ..Default::default()
    };

    let restarts = config.restarts.max(1);
    let mut best: Option<(usize, Minimum)> = None;
    for r in 0..restarts {
        let mut x0 = base;
        if r > 0 {
            for v in &mut x0[0..2] {
                *v += len_jitter.sample(&mut rng).ln();
            }
            for v in &mut x0[2..6] {
                *v += coef_jitter.sample(&mut rng);
            }
            for v in &mut x0[6..8] {
                *v += len_jitter.sample(&mut rng).ln();
            }
        }
        let Some(m) = minimize(objective, &x0, &opts) else {
            log::debug!("slfm restart {r} failed at its initial point");
            continue;
        };
        log::debug!("slfm restart {r}: lml {} after {} iterations", -m.value, m.iterations);
        if best.as_ref().is_none_or(|(_, b)| m.value < b.value) {
            best = Some((r, m));
        }
    }
    let (restart_index, m) = best.ok_or(Error::OptimizerDiverged { restarts })?;
    let params = to_params(&m.x).ok_or(Error::OptimizerDiverged { restarts })?.canonical();
    let model = SlfmModel::with_normalization(params, series_1, series_2, norm)?;
    Ok(model.with_fit_info(FitInfo {
        iterations: m.iterations,
        log_likelihood: -m.value,
        restart_index,
        converged: m.converged,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynergyClass {
    SynergyDominant,
    Mixed,
    Independent,
}

impl SynergyClass {
    pub fn name(self) -> &'static str {
        match self {
            SynergyClass::SynergyDominant => "synergy_dominant",
            SynergyClass::Mixed => "mixed",
            SynergyClass::Independent => "independent",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnoseConfig {
    /// `|a_1^LF / a_1^HF|` above this marks the shared component as dominant in output 1.
    pub synergy_threshold: f64,
    /// Model-implied output correlation below this (in magnitude) means no shared information.
    pub independence_threshold: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            synergy_threshold: 1.5,
            independence_threshold: 0.1,
        }
    }
}

/// Interpretation of a fitted model: the latent GPs labeled by lengthscale,
/// their output coupling and the weight ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynergyDiagnostics {
    pub ell_lf: f64,
    pub ell_hf: f64,
    pub a_lf: [f64; 2],
    pub a_hf: [f64; 2],
    pub b_lf: Matrix2<f64>,
    pub b_hf: Matrix2<f64>,
    pub b12_lf: f64,
    pub b12_hf: f64,
    /// `|a_1^LF| / |a_1^HF|`; infinite when the HF weight is zero.
    pub ratio_out1: f64,
    pub ratio_out2: f64,
    /// Zero-lag correlation between the two noise-free outputs.
    pub output_correlation: f64,
    pub synergy_class: SynergyClass,
}

/// LF is the latent GP with the longer lengthscale; ties go to the larger |b12|.
pub fn diagnose_params(params: &SlfmParams, config: &DiagnoseConfig) -> SynergyDiagnostics {
    let (l0, l1) = (params.kernels[0].lengthscale(), params.kernels[1].lengthscale());
    let first_is_lf = if l0 != l1 {
        l0 > l1
    } else {
        params.coregs[0].b12().abs() >= params.coregs[1].b12().abs()
    };
    let (lf, hf) = if first_is_lf { (0, 1) } else { (1, 0) };
    let a_lf = params.coregs[lf].canonical().components();
    let a_hf = params.coregs[hf].canonical().components();
    let b_lf = coreg_matrix(&params.coregs[lf]);
    let b_hf = coreg_matrix(&params.coregs[hf]);
    let total = b_lf + b_hf;
    let denom = (total[(0, 0)] * total[(1, 1)]).sqrt();
    let output_correlation = if denom > 0.0 { total[(0, 1)] / denom } else { 0.0 };
    let ratio_out1 = a_lf[0].abs() / a_hf[0].abs();
    let ratio_out2 = a_lf[1].abs() / a_hf[1].abs();
    let synergy_class = if output_correlation.abs() < config.independence_threshold {
        SynergyClass::Independent
    } else if ratio_out1 > config.synergy_threshold {
        SynergyClass::SynergyDominant
    } else {
        SynergyClass::Mixed
    };
    SynergyDiagnostics {
        ell_lf: params.kernels[lf].lengthscale(),
        ell_hf: params.kernels[hf].lengthscale(),
        a_lf,
        a_hf,
        b_lf,
        b_hf,
        b12_lf: b_lf[(0, 1)],
        b12_hf: b_hf[(0, 1)],
        ratio_out1,
        ratio_out2,
        output_correlation,
        synergy_class,
    }
}

pub fn diagnose(model: &SlfmModel) -> SynergyDiagnostics {
    model.diagnose(&DiagnoseConfig::default())
}
