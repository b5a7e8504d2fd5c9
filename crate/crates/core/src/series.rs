use crate::error::{Error, Result};
use crate::kernel::KernelKind;

/// Irregularly sampled scalar observations of one descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    label: String,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "series '{label}': {} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("series '{label}' has non-finite entries")));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "series '{label}': times must be strictly ascending ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(TimeSeries {
            times,
            values,
            label,
        })
    }

    pub fn empty(label: impl Into<String>) -> Self {
        TimeSeries {
            times: Vec::new(),
            values: Vec::new(),
            label: label.into(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Time span covered, zero for fewer than two samples.
    pub fn span(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    /// Splits off samples whose time matches one of `times` exactly.
    pub fn split_at_times(&self, times: &[f64]) -> Result<(TimeSeries, TimeSeries)> {
        let mut take = vec![false; self.len()];
        for &t in times {
            let i = self
                .times
                .iter()
                .position(|&x| x == t)
                .ok_or(Error::HoldoutNotFound(t))?;
            take[i] = true;
        }
        let (mut kt, mut kv, mut ht, mut hv) = (vec![], vec![], vec![], vec![]);
        for (i, (t, v)) in self.iter().enumerate() {
            if take[i] {
                ht.push(t);
                hv.push(v);
            } else {
                kt.push(t);
                kv.push(v);
            }
        }
        Ok((
            TimeSeries::new(kt, kv, self.label.clone())?,
            TimeSeries::new(ht, hv, self.label.clone())?,
        ))
    }
}

/// z-score constants of one output (population standard deviation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub mean: f64,
    pub std: f64,
}

impl Normalization {
    /// `output` is 1-based and only used for the error.
    pub fn fit(values: &[f64], output: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) || std < 1e-12 * mean.abs() {
            return Err(Error::ConstantSeries { output });
        }
        Ok(Normalization { mean, std })
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Predictive mean and standard deviation at query times, in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBand {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Hyperparameter fitting options shared by the single- and two-output models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub kernel: KernelKind,
    pub restarts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
    /// Lower bound on noise variances, normalized units.
    pub noise_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kernel: KernelKind::Matern32,
            restarts: 5,
            max_iter: 500,
            grad_tol: 1e-4,
            seed: 0,
            noise_floor: 1e-6,
        }
    }
}

/// Optimizer bookkeeping for a trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitInfo {
    pub iterations: usize,
    pub log_likelihood: f64,
    pub restart_index: usize,
    pub converged: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![1.0], "x").is_err());
        assert!(TimeSeries::new(vec![1.0, 1.0], vec![1.0, 2.0], "x").is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![1.0, f64::NAN], "x").is_err());
        let s = TimeSeries::new(vec![0.0, 2.5], vec![1.0, 2.0], "x").unwrap();
        assert_eq!(s.span(), 2.5);
    }

    #[test]
    fn normalization_roundtrip() {
        let n = Normalization::fit(&[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        assert_eq!(n.mean, 2.5);
        assert!((n.std - 1.25f64.sqrt()).abs() < 1e-15);
        assert!((n.denormalize(n.normalize(3.7)) - 3.7).abs() < 1e-15);
        assert!(matches!(
            Normalization::fit(&[2.0, 2.0], 2),
            Err(Error::ConstantSeries { output: 2 })
        ));
    }

    #[test]
    fn split_by_times() {
        let s = TimeSeries::new(vec![0.0, 1.0, 2.0, 3.0], vec![5.0, 6.0, 7.0, 8.0], "x").unwrap();
        let (keep, held) = s.split_at_times(&[2.0, 0.0]).unwrap();
        assert_eq!(keep.times(), &[1.0, 3.0]);
        assert_eq!(held.values(), &[5.0, 7.0]);
        assert!(matches!(s.split_at_times(&[1.5]), Err(Error::HoldoutNotFound(_))));
    }
}
