//! Classical gap-filling interpolators used as assessment baselines.

use crate::error::{Error, Result};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolator {
    Linear,
    Nearest,
    Previous,
}

impl Interpolator {
    pub fn name(self) -> &'static str {
        match self {
            Interpolator::Linear => "linear",
            Interpolator::Nearest => "nearest",
            Interpolator::Previous => "previous",
        }
    }
}

/// Evaluates the interpolant of `series` at each query time. Queries outside
/// the sampled range take the closest endpoint value.
pub fn interpolate(series: &TimeSeries, kind: Interpolator, times: &[f64]) -> Result<Vec<f64>> {
    if series.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let t = series.times();
    let v = series.values();
    let n = t.len();
    Ok(times
        .iter()
        .map(|&q| {
            // first index with t[i] > q
            let hi = t.partition_point(|&x| x <= q);
            if hi == 0 {
                return v[0];
            }
            let lo = hi - 1;
            if t[lo] == q || hi == n {
                return v[lo];
            }
            match kind {
                Interpolator::Previous => v[lo],
                Interpolator::Nearest => {
                    if q - t[lo] <= t[hi] - q {
                        v[lo]
                    } else {
                        v[hi]
                    }
                }
                Interpolator::Linear => {
                    let w = (q - t[lo]) / (t[hi] - t[lo]);
                    v[lo] + w * (v[hi] - v[lo])
                }
            }
        })
        .collect())
}
