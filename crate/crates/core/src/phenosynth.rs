//! Vegetation descriptor utilities and synthetic optical/radar scenarios.
//!
//! Synthetic scenarios stand in for real satellite collections: a dense
//! noiseless "truth" curve for output 1, a gapped noisy sampling of it, and a
//! dense noisy companion series for output 2.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::covariance::stable_factorize;
use crate::error::{Error, Result};
use crate::kernel::{kernel_matrix, KernelKind, KernelParams};
use crate::metrics::pearson;
use crate::series::TimeSeries;

/// Dual-polarization radar vegetation index, `4 vh / (vh + vv)`, from linear backscatter.
pub fn rvi(vh: f64, vv: f64) -> Result<f64> {
    if !(vh >= 0.0 && vv >= 0.0 && vh.is_finite() && vv.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "backscatter must be finite and nonnegative, got vh={vh} vv={vv}"
        )));
    }
    let sum = vh + vv;
    if sum == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(4.0 * vh / sum)
}

/// Union of two acquisition series where samples on the same calendar day
/// (`floor(t)`) are averaged into one.
pub fn merge_daily(asc: &TimeSeries, desc: &TimeSeries) -> TimeSeries {
    let mut all: Vec<(f64, f64)> = asc.iter().chain(desc.iter()).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < all.len() {
        let day = all[i].0.floor();
        let mut j = i;
        while j < all.len() && all[j].0.floor() == day {
            j += 1;
        }
        let group = &all[i..j];
        let n = group.len() as f64;
        if group.len() == 1 {
            times.push(group[0].0);
            values.push(group[0].1);
        } else {
            times.push(group.iter().map(|s| s.0).sum::<f64>() / n);
            values.push(group.iter().map(|s| s.1).sum::<f64>() / n);
        }
        i = j;
    }
    TimeSeries::new(times, values, asc.label()).expect("merged days are strictly ascending")
}

pub const DEFAULT_PAIRING_TOLERANCE: f64 = 1.5;

fn nearest_index(times: &[f64], t: f64) -> usize {
    let hi = times.partition_point(|&x| x < t);
    if hi == 0 {
        0
    } else if hi == times.len() || t - times[hi - 1] <= times[hi] - t {
        hi - 1
    } else {
        hi
    }
}

/// Pairs samples that are mutually nearest in time and no further apart than
/// `tolerance` days. The pairing does not depend on argument order.
pub fn pair_samples(a: &TimeSeries, b: &TimeSeries, tolerance: f64) -> Vec<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let (ta, tb) = (a.times(), b.times());
    let mut pairs = Vec::new();
    for (i, &t) in ta.iter().enumerate() {
        let j = nearest_index(tb, t);
        if (tb[j] - t).abs() <= tolerance && nearest_index(ta, tb[j]) == i {
            pairs.push((a.values()[i], b.values()[j]));
        }
    }
    pairs
}

/// Temporal Pearson correlation between two descriptor series.
pub fn pearson_temporal(a: &TimeSeries, b: &TimeSeries, tolerance: f64) -> Result<f64> {
    let pairs = pair_samples(a, b, tolerance);
    if pairs.len() < 3 {
        return Err(Error::TooFewPairs(pairs.len()));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::ConstantSeries { output: 1 });
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::ConstantSeries { output: 2 });
    }
    pearson(&x, &y).ok_or(Error::ConstantSeries { output: 1 })
}

/// Ranks candidate descriptors by temporal correlation with the optical
/// series, highest first (ties by label). Candidates whose correlation
/// cannot be computed are dropped with a warning.
pub fn select_descriptor(
    optical: &TimeSeries,
    candidates: &[(String, TimeSeries)],
    tolerance: f64,
) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = candidates
        .iter()
        .filter_map(|(label, s)| match pearson_temporal(optical, s, tolerance) {
            Ok(r) => Some((label.clone(), r)),
            Err(e) => {
                log::warn!("descriptor '{label}' excluded: {e}");
                None
            }
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Seasonal double-logistic profile for output 1; output 2 is an affine map
/// of it plus independent short-scale detail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleLogistic {
    pub base: f64,
    pub amplitude: f64,
    pub k_rise: f64,
    pub k_fall: f64,
    pub season_length: f64,
    pub first_sos: f64,
    pub season_period: f64,
    pub radar_offset: f64,
    pub radar_scale: f64,
    pub radar_detail_std: f64,
    pub radar_detail_lengthscale: f64,
}

impl Default for DoubleLogistic {
    fn default() -> Self {
        DoubleLogistic {
            base: 0.2,
            amplitude: 4.5,
            k_rise: 0.08,
            k_fall: 0.08,
            season_length: 180.0,
            first_sos: 60.0,
            season_period: 365.0,
            radar_offset: 0.15,
            radar_scale: 0.12,
            radar_detail_std: 0.03,
            radar_detail_lengthscale: 10.0,
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl DoubleLogistic {
    pub fn season_starts(&self, span: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut sos = self.first_sos;
        while sos < span {
            out.push(sos);
            sos += self.season_period;
        }
        out
    }

    pub fn eval(&self, t: f64, span: f64) -> f64 {
        self.base
            + self.amplitude
                * self
                    .season_starts(span)
                    .iter()
                    .map(|&sos| {
                        let eos = sos + self.season_length;
                        logistic(self.k_rise * (t - sos)) - logistic(self.k_fall * (t - eos))
                    })
                    .sum::<f64>()
    }
}

/// Two latent GPs mixed into the outputs, optionally offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlfmGenerator {
    pub kernel: KernelKind,
    pub ell_lf: f64,
    pub ell_hf: f64,
    pub a_lf: [f64; 2],
    pub a_hf: [f64; 2],
    pub offset: [f64; 2],
}

impl Default for SlfmGenerator {
    fn default() -> Self {
        SlfmGenerator {
            kernel: KernelKind::Matern32,
            ell_lf: 76.44,
            ell_hf: 13.43,
            a_lf: [0.8420, 1.0831],
            a_hf: [0.4243, -0.036],
            offset: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Generator {
    DoubleLogisticSeasons(DoubleLogistic),
    SlfmSample(SlfmGenerator),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap {
    pub start: f64,
    pub length: f64,
}

impl Gap {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.length
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub span_days: f64,
    /// Sampling interval of each output, days.
    pub interval: [f64; 2],
    /// Windows removed from output 1.
    pub gaps: Vec<Gap>,
    pub generator: Generator,
    pub noise_std: [f64; 2],
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            span_days: 1095.0,
            interval: [15.0, 6.0],
            gaps: Vec::new(),
            generator: Generator::SlfmSample(SlfmGenerator::default()),
            noise_std: [0.05, 0.05],
            seed: 0,
        }
    }
}

fn fmt_pair(v: [f64; 2]) -> String {
    format!("{}, {}", v[0], v[1])
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.span_days.is_finite() && self.span_days > 0.0) {
            return bad(format!("span_days must be positive, got {}", self.span_days));
        }
        for (d, i) in self.interval.iter().enumerate() {
            if !(i.is_finite() && *i > 0.0) {
                return bad(format!("interval_{} must be positive, got {i}", d + 1));
            }
        }
        for (d, s) in self.noise_std.iter().enumerate() {
            if !(s.is_finite() && *s >= 0.0) {
                return bad(format!("noise_std_{} must be nonnegative, got {s}", d + 1));
            }
        }
        for g in &self.gaps {
            if !(g.start >= 0.0 && g.length > 0.0 && g.start + g.length <= self.span_days) {
                return bad(format!(
                    "gap {}:{} must lie within [0, {}]",
                    g.start, g.length, self.span_days
                ));
            }
        }
        match &self.generator {
            Generator::SlfmSample(p) => {
                if !(p.ell_lf > 0.0 && p.ell_hf > 0.0) {
                    return bad("lengthscales must be positive".into());
                }
                if p.a_lf.iter().chain(&p.a_hf).chain(&p.offset).any(|x| !x.is_finite()) {
                    return bad("mixing weights and offsets must be finite".into());
                }
            }
            Generator::DoubleLogisticSeasons(p) => {
                if !(p.season_period > 0.0 && p.season_length > 0.0 && p.radar_detail_lengthscale > 0.0) {
                    return bad("season period, season length and detail lengthscale must be positive".into());
                }
                if p.radar_detail_std < 0.0 {
                    return bad("radar_detail_std must be nonnegative".into());
                }
            }
        }
        Ok(())
    }

    /// Parses the flat `key = value` format. Unset keys keep their defaults;
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        let mut slfm = SlfmGenerator::default();
        let mut dl = DoubleLogistic::default();
        let mut kind = "slfm".to_string();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| Error::InvalidConfig(format!("line {}: {m}", n + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
            let (key, value) = (key.trim(), value.trim());
            let num = || value.parse::<f64>().map_err(|_| err(&format!("{key}: not a number: {value}")));
            let pair = || -> Result<[f64; 2]> {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                match parts.as_slice() {
                    [a, b] => Ok([
                        a.parse().map_err(|_| err(&format!("{key}: not a number: {a}")))?,
                        b.parse().map_err(|_| err(&format!("{key}: not a number: {b}")))?,
                    ]),
                    _ => Err(err(&format!("{key}: expected two comma-separated numbers"))),
                }
            };
            match key {
                "span_days" => cfg.span_days = num()?,
                "interval_1" => cfg.interval[0] = num()?,
                "interval_2" => cfg.interval[1] = num()?,
                "noise_std_1" => cfg.noise_std[0] = num()?,
                "noise_std_2" => cfg.noise_std[1] = num()?,
                "seed" => cfg.seed = value.parse().map_err(|_| err("seed: not an unsigned integer"))?,
                "gaps" => cfg.gaps = parse_gaps(value).map_err(|m| err(&m))?,
                "generator" => kind = value.to_string(),
                "kernel" => {
                    slfm.kernel = KernelKind::from_name(value).ok_or_else(|| err("kernel: unknown kind"))?
                }
                "ell_lf" => slfm.ell_lf = num()?,
                "ell_hf" => slfm.ell_hf = num()?,
                "a_lf" => slfm.a_lf = pair()?,
                "a_hf" => slfm.a_hf = pair()?,
                "offset_1" => slfm.offset[0] = num()?,
                "offset_2" => slfm.offset[1] = num()?,
                "base" => dl.base = num()?,
                "amplitude" => dl.amplitude = num()?,
                "k_rise" => dl.k_rise = num()?,
                "k_fall" => dl.k_fall = num()?,
                "season_length" => dl.season_length = num()?,
                "first_sos" => dl.first_sos = num()?,
                "season_period" => dl.season_period = num()?,
                "radar_offset" => dl.radar_offset = num()?,
                "radar_scale" => dl.radar_scale = num()?,
                "radar_detail_std" => dl.radar_detail_std = num()?,
                "radar_detail_lengthscale" => dl.radar_detail_lengthscale = num()?,
                _ => return Err(err(&format!("unknown key '{key}'"))),
            }
        }
        cfg.generator = match kind.as_str() {
            "slfm" => Generator::SlfmSample(slfm),
            "double_logistic" => Generator::DoubleLogisticSeasons(dl),
            other => return Err(Error::InvalidConfig(format!("unknown generator '{other}'"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "span_days = {}", self.span_days);
        let _ = writeln!(s, "interval_1 = {}", self.interval[0]);
        let _ = writeln!(s, "interval_2 = {}", self.interval[1]);
        let gaps: Vec<String> = self.gaps.iter().map(|g| format!("{}:{}", g.start, g.length)).collect();
        let _ = writeln!(s, "gaps = {}", gaps.join(", "));
        let _ = writeln!(s, "noise_std_1 = {}", self.noise_std[0]);
        let _ = writeln!(s, "noise_std_2 = {}", self.noise_std[1]);
        let _ = writeln!(s, "seed = {}", self.seed);
        match &self.generator {
            Generator::SlfmSample(p) => {
                let _ = writeln!(s, "generator = slfm");
                let _ = writeln!(s, "kernel = {}", p.kernel.name());
                let _ = writeln!(s, "ell_lf = {}", p.ell_lf);
                let _ = writeln!(s, "ell_hf = {}", p.ell_hf);
                let _ = writeln!(s, "a_lf = {}", fmt_pair(p.a_lf));
                let _ = writeln!(s, "a_hf = {}", fmt_pair(p.a_hf));
                let _ = writeln!(s, "offset_1 = {}", p.offset[0]);
                let _ = writeln!(s, "offset_2 = {}", p.offset[1]);
            }
            Generator::DoubleLogisticSeasons(p) => {
                let _ = writeln!(s, "generator = double_logistic");
                for (k, v) in [
                    ("base", p.base),
                    ("amplitude", p.amplitude),
                    ("k_rise", p.k_rise),
                    ("k_fall", p.k_fall),
                    ("season_length", p.season_length),
                    ("first_sos", p.first_sos),
                    ("season_period", p.season_period),
                    ("radar_offset", p.radar_offset),
                    ("radar_scale", p.radar_scale),
                    ("radar_detail_std", p.radar_detail_std),
                    ("radar_detail_lengthscale", p.radar_detail_lengthscale),
                ] {
                    let _ = writeln!(s, "{k} = {v}");
                }
            }
        }
        s
    }

    /// Sample times of `output` (0-based): multiples of its interval below the span.
    pub fn sample_times(&self, output: usize) -> Vec<f64> {
        let step = self.interval[output];
        (0..).map(|k| k as f64 * step).take_while(|&t| t < self.span_days).collect()
    }
}

/// Parses `start:length` windows separated by commas.
pub fn parse_gaps(value: &str) -> std::result::Result<Vec<Gap>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|g| {
            let (a, b) = g.split_once(':').ok_or(format!("gap '{g}': expected start:length"))?;
            Ok(Gap {
                start: a.trim().parse().map_err(|_| format!("gap '{g}': bad start"))?,
                length: b.trim().parse().map_err(|_| format!("gap '{g}': bad length"))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Noiseless output 1 on a daily grid.
    pub truth_1: TimeSeries,
    /// Noisy output-1 samples outside the gap windows.
    pub observed_1: TimeSeries,
    pub observed_2: TimeSeries,
    /// Noisy output-1 samples that fell inside a gap window.
    pub withheld_1: TimeSeries,
}

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Exact draw of a unit-variance Matérn 3/2 process at ascending `times`,
/// through its two-state (value, derivative) Markov representation.
pub fn sample_matern32(lengthscale: f64, times: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let lam = SQRT_3 / lengthscale;
    let mut out = Vec::with_capacity(times.len());
    let z = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let (mut f, mut df) = (z(rng), lam * z(rng));
    let mut prev = match times.first() {
        Some(&t) => t,
        None => return out,
    };
    out.push(f);
    for &t in &times[1..] {
        let dt = t - prev;
        prev = t;
        let e = (-lam * dt).exp();
        let phi = [[e * (1.0 + lam * dt), e * dt], [-e * lam * lam * dt, e * (1.0 - lam * dt)]];
        // Q = P_inf - phi P_inf phi^T with P_inf = diag(1, lam^2)
        let p = [1.0, lam * lam];
        let q00 = p[0] - (phi[0][0] * phi[0][0] * p[0] + phi[0][1] * phi[0][1] * p[1]);
        let q01 = -(phi[0][0] * phi[1][0] * p[0] + phi[0][1] * phi[1][1] * p[1]);
        let q11 = p[1] - (phi[1][0] * phi[1][0] * p[0] + phi[1][1] * phi[1][1] * p[1]);
        let l00 = q00.max(0.0).sqrt();
        let l10 = if l00 > 0.0 { q01 / l00 } else { 0.0 };
        let l11 = (q11 - l10 * l10).max(0.0).sqrt();
        let (z0, z1) = (z(rng), z(rng));
        let nf = phi[0][0] * f + phi[0][1] * df + l00 * z0;
        let ndf = phi[1][0] * f + phi[1][1] * df + l10 * z0 + l11 * z1;
        f = nf;
        df = ndf;
        out.push(f);
    }
    out
}

fn sample_latent(kind: KernelKind, lengthscale: f64, times: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    match kind {
        KernelKind::Matern32 => Ok(sample_matern32(lengthscale, times, rng)),
        KernelKind::SquaredExponential => {
            let k = kernel_matrix(&KernelParams::new(kind, lengthscale)?, times, times)?;
            let l = stable_factorize(&k)?.lower();
            let z = DVector::from_fn(times.len(), |_, _| StandardNormal.sample(rng));
            Ok((l * z).as_slice().to_vec())
        }
    }
}

fn union_sorted(parts: &[&[f64]]) -> Vec<f64> {
    let mut all: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    all
}

fn lookup(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let i = grid.partition_point(|&x| x < t);
    debug_assert_eq!(grid[i], t);
    values[i]
}

/// Generates one reproducible scenario from `config`.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let daily: Vec<f64> = (0..).map(f64::from).take_while(|&t| t < config.span_days).collect();
    let t1 = config.sample_times(0);
    let t2 = config.sample_times(1);

    let (truth_daily, f1, f2): (Vec<f64>, Vec<f64>, Vec<f64>) = match &config.generator {
        Generator::SlfmSample(p) => {
            let grid = union_sorted(&[&daily, &t1, &t2]);
            let u_lf = sample_latent(p.kernel, p.ell_lf, &grid, &mut rng)?;
            let u_hf = sample_latent(p.kernel, p.ell_hf, &grid, &mut rng)?;
            let out = |d: usize, t: f64| {
                p.offset[d] + p.a_lf[d] * lookup(&grid, &u_lf, t) + p.a_hf[d] * lookup(&grid, &u_hf, t)
            };
            (
                daily.iter().map(|&t| out(0, t)).collect(),
                t1.iter().map(|&t| out(0, t)).collect(),
                t2.iter().map(|&t| out(1, t)).collect(),
            )
        }
        Generator::DoubleLogisticSeasons(p) => {
            let span = config.span_days;
            let detail = sample_matern32(p.radar_detail_lengthscale, &t2, &mut rng);
            (
                daily.iter().map(|&t| p.eval(t, span)).collect(),
                t1.iter().map(|&t| p.eval(t, span)).collect(),
                t2.iter()
                    .zip(&detail)
                    .map(|(&t, u)| p.radar_offset + p.radar_scale * p.eval(t, span) + p.radar_detail_std * u)
                    .collect(),
            )
        }
    };

    let mut noisy = |f: &[f64], std: f64| -> Vec<f64> {
        f.iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + std * z
            })
            .collect()
    };
    let y1 = noisy(&f1, config.noise_std[0]);
    let y2 = noisy(&f2, config.noise_std[1]);

    let (mut kt, mut kv, mut wt, mut wv) = (vec![], vec![], vec![], vec![]);
    for (&t, &v) in t1.iter().zip(&y1) {
        if config.gaps.iter().any(|g| g.contains(t)) {
            wt.push(t);
            wv.push(v);
        } else {
            kt.push(t);
            kv.push(v);
        }
    }
    Ok(Scenario {
        truth_1: TimeSeries::new(daily, truth_daily, "truth_1")?,
        observed_1: TimeSeries::new(kt, kv, "observed_1")?,
        observed_2: TimeSeries::new(t2, y2, "observed_2")?,
        withheld_1: TimeSeries::new(wt, wv, "withheld_1")?,
    })
}
