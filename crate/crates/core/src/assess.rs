//! Leave-samples-out assessment: withhold output-1 samples, refit a method
//! on what remains and score its predictions at the withheld times.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gp;
use crate::interp::{interpolate, Interpolator};
use crate::metrics::{self, R2Kind};
use crate::mogp::{self, DiagnoseConfig, SynergyDiagnostics};
use crate::series::{TimeSeries, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mogp,
    Gp,
    Linear,
    Nearest,
    Previous,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Mogp, Method::Gp, Method::Linear, Method::Nearest, Method::Previous];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mogp => "mogp",
            Method::Gp => "gp",
            Method::Linear => "linear",
            Method::Nearest => "nearest",
            Method::Previous => "previous",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method '{s}' (expected mogp, gp, linear, nearest or previous)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentReport {
    pub method: Method,
    pub holdout: Vec<f64>,
    pub predicted: Vec<f64>,
    /// Predictive std for the GP methods.
    pub predicted_std: Option<Vec<f64>>,
    pub reference: Vec<f64>,
    pub residuals: Vec<f64>,
    /// NaN when undefined (one sample or a constant reference).
    pub r2: f64,
    pub rmse: f64,
    pub diagnostics: Option<SynergyDiagnostics>,
}

/// Scores `predicted` against `reference`.
pub fn score(predicted: &[f64], reference: &[f64], kind: R2Kind) -> Result<(f64, f64)> {
    let rmse = metrics::rmse(predicted, reference)?;
    let r2 = match metrics::r2(kind, predicted, reference) {
        Ok(v) => v,
        Err(Error::TooFewSamples { .. } | Error::ConstantReference) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok((r2, rmse))
}

/// Removes `holdout` (exact time matches) from output 1, fits `method` on
/// the rest and scores predictions against the removed values.
pub fn assess(
    series_1: &TimeSeries,
    series_2: Option<&TimeSeries>,
    holdout: &[f64],
    method: Method,
    config: &TrainConfig,
    r2_kind: R2Kind,
) -> Result<AssessmentReport> {
    if holdout.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    let (kept, held) = series_1.split_at_times(holdout)?;
    let times = held.times();
    let mut diagnostics = None;
    let (predicted, predicted_std) = match method {
        Method::Mogp => {
            let s2 = series_2.ok_or_else(|| Error::InvalidInput("method mogp needs a second series".into()))?;
            let model = mogp::train(&kept, s2, config)?;
            diagnostics = Some(model.diagnose(&DiagnoseConfig::default()));
            let [b1, _] = model.predict(times);
            (b1.mean, Some(b1.std))
        }
        Method::Gp => {
            let b = gp::train(&kept, config)?.predict(times);
            (b.mean, Some(b.std))
        }
        Method::Linear => (interpolate(&kept, Interpolator::Linear, times)?, None),
        Method::Nearest => (interpolate(&kept, Interpolator::Nearest, times)?, None),
        Method::Previous => (interpolate(&kept, Interpolator::Previous, times)?, None),
    };
    let reference = held.values().to_vec();
    let (r2, rmse) = score(&predicted, &reference, r2_kind)?;
    Ok(AssessmentReport {
        method,
        holdout: times.to_vec(),
        residuals: predicted.iter().zip(&reference).map(|(p, r)| p - r).collect(),
        predicted,
        predicted_std,
        reference,
        r2,
        rmse,
        diagnostics,
    })
}

/// Runs several methods on the same split, each on its own thread.
pub fn assess_methods(
    series_1: &TimeSeries,
    series_2: Option<&TimeSeries>,
    holdout: &[f64],
    methods: &[Method],
    config: &TrainConfig,
    r2_kind: R2Kind,
) -> Vec<Result<AssessmentReport>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = methods
            .iter()
            .map(|&m| scope.spawn(move || assess(series_1, series_2, holdout, m, config, r2_kind)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("assessment thread panicked"))
            .collect()
    })
}

fn fmt_vec(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

impl AssessmentReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method = {}", self.method.name());
        let _ = writeln!(s, "n = {}", self.holdout.len());
        let _ = writeln!(s, "r2 = {:?}", self.r2);
        let _ = writeln!(s, "rmse = {:?}", self.rmse);
        let _ = writeln!(s, "holdout = {}", fmt_vec(&self.holdout));
        let _ = writeln!(s, "predicted = {}", fmt_vec(&self.predicted));
        if let Some(std) = &self.predicted_std {
            let _ = writeln!(s, "predicted_std = {}", fmt_vec(std));
        }
        let _ = writeln!(s, "reference = {}", fmt_vec(&self.reference));
        let _ = writeln!(s, "residuals = {}", fmt_vec(&self.residuals));
        if let Some(d) = &self.diagnostics {
            let _ = writeln!(s, "ell_lf = {:?}", d.ell_lf);
            let _ = writeln!(s, "ell_hf = {:?}", d.ell_hf);
            let _ = writeln!(s, "b12_lf = {:?}", d.b12_lf);
            let _ = writeln!(s, "b12_hf = {:?}", d.b12_hf);
            let _ = writeln!(s, "ratio_out1 = {:?}", d.ratio_out1);
            let _ = writeln!(s, "synergy_class = {}", d.synergy_class.name());
        }
        s
    }
}
