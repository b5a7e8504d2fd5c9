//! File formats: series CSV, query-time lists and the text model file.
//!
//! All writes go through [`write_atomic`] (temp file in the target
//! directory, then rename) so readers never observe a partial file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::covariance::{CoregVector, NoiseVariances};
use crate::error::{Error, Result};
use crate::gp::{GpHyper, GpModel};
use crate::kernel::{KernelKind, KernelParams};
use crate::mogp::{SlfmModel, SlfmParams};
use crate::series::{FitInfo, Normalization, PredictionBand, TimeSeries};

pub const MODEL_FORMAT_VERSION: &str = "1";

/// Writes `contents` to `path` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    let s = s.trim();
    s.parse::<f64>()
        .map_err(|_| parse_error(path, line, format!("not a number: '{s}'")))
}

/// Parses a `time,value` CSV. Times in the file are days since the file's
/// epoch; `epoch` is subtracted so the series lives on the common axis.
pub fn parse_series(text: &str, path: &Path, epoch: f64) -> Result<TimeSeries> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break (i + 1, l),
            None => return Err(parse_error(path, 1, "missing header 'time,value'")),
        }
    };
    let cols: Vec<&str> = header.1.split(',').map(str::trim).collect();
    if cols != ["time", "value"] {
        return Err(parse_error(path, header.0, format!("expected header 'time,value', got '{}'", header.1)));
    }
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_error(path, i + 1, format!("expected 2 fields, got {}", fields.len())));
        }
        let t = parse_f64(path, i + 1, fields[0])? - epoch;
        let v = parse_f64(path, i + 1, fields[1])?;
        if !v.is_finite() || !t.is_finite() {
            return Err(parse_error(path, i + 1, "time and value must be finite"));
        }
        if let Some(&last) = times.last() {
            if t <= last {
                return Err(parse_error(path, i + 1, "times must be strictly ascending"));
            }
        }
        times.push(t);
        values.push(v);
    }
    let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    TimeSeries::new(times, values, label)
}

pub fn read_series(path: &Path, epoch: f64) -> Result<TimeSeries> {
    parse_series(&read_text(path)?, path, epoch)
}

pub fn series_to_csv(series: &TimeSeries, epoch: f64) -> String {
    let mut s = String::from("time,value\n");
    for (t, v) in series.iter() {
        let _ = writeln!(s, "{},{}", t + epoch, v);
    }
    s
}

pub fn write_series(path: &Path, series: &TimeSeries, epoch: f64) -> Result<()> {
    write_atomic(path, series_to_csv(series, epoch).as_bytes())
}

/// Query times, one per line; the first comma field is used, so a series CSV
/// also works. A non-numeric first line is taken as a header.
pub fn parse_times(text: &str, path: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut first = true;
    for (i, l) in text.lines().enumerate() {
        let field = l.split(',').next().unwrap_or("").trim();
        if field.is_empty() || field.starts_with('#') {
            continue;
        }
        match field.parse::<f64>() {
            Ok(t) if t.is_finite() => out.push(t),
            _ if first => {}
            _ => return Err(parse_error(path, i + 1, format!("not a finite time: '{field}'"))),
        }
        first = false;
    }
    Ok(out)
}

pub fn read_times(path: &Path) -> Result<Vec<f64>> {
    parse_times(&read_text(path)?, path)
}

/// Prediction CSV: `time,mean_1,std_1` plus `mean_2,std_2` for two-output models.
pub fn predictions_to_csv(bands: &[PredictionBand]) -> String {
    let mut s = String::from("time");
    for d in 1..=bands.len() {
        let _ = write!(s, ",mean_{d},std_{d}");
    }
    s.push('\n');
    let Some(first) = bands.first() else {
        return s;
    };
    for (i, t) in first.times.iter().enumerate() {
        let _ = write!(s, "{t}");
        for b in bands {
            let _ = write!(s, ",{},{}", b.mean[i], b.std[i]);
        }
        s.push('\n');
    }
    s
}

/// A persisted model of either kind.
#[derive(Debug, Clone)]
pub enum ModelFile {
    Gp(GpModel),
    Slfm(SlfmModel),
}

impl ModelFile {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelFile::Gp(_) => "gp",
            ModelFile::Slfm(_) => "slfm",
        }
    }

    pub fn predict(&self, times: &[f64]) -> Vec<PredictionBand> {
        match self {
            ModelFile::Gp(m) => vec![m.predict(times)],
            ModelFile::Slfm(m) => m.predict(times).to_vec(),
        }
    }

    pub fn to_text(&self) -> String {
        model_to_text(self)
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

fn write_fit(s: &mut String, fit: Option<FitInfo>) {
    if let Some(f) = fit {
        let _ = writeln!(s, "iterations = {}", f.iterations);
        let _ = writeln!(s, "log_likelihood = {:?}", f.log_likelihood);
        let _ = writeln!(s, "restart_index = {}", f.restart_index);
        let _ = writeln!(s, "converged = {}", f.converged);
    }
}

fn write_series_keys(s: &mut String, suffix: &str, series: &TimeSeries) {
    let _ = writeln!(s, "label{suffix} = {}", one_line(series.label()));
    let _ = writeln!(s, "times{suffix} = {}", fmt_vec(series.times()));
    let _ = writeln!(s, "values{suffix} = {}", fmt_vec(series.values()));
}

/// Serializes a model. Floats use the shortest representation that parses
/// back to the same bits.
pub fn model_to_text(model: &ModelFile) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "version = {MODEL_FORMAT_VERSION}");
    let _ = writeln!(s, "kind = {}", model.kind_name());
    match model {
        ModelFile::Gp(m) => {
            let h = m.hyper();
            let n = m.normalization();
            let _ = writeln!(s, "kernel = {}", h.kernel.kind.name());
            let _ = writeln!(s, "lengthscale = {:?}", h.kernel.lengthscale());
            let _ = writeln!(s, "noise_variance = {:?}", h.noise_variance);
            let _ = writeln!(s, "norm_mean = {:?}", n.mean);
            let _ = writeln!(s, "norm_std = {:?}", n.std);
            let _ = writeln!(s, "jitter = {:?}", m.factor().jitter());
            write_fit(&mut s, m.fit_info());
            write_series_keys(&mut s, "", m.training());
        }
        ModelFile::Slfm(m) => {
            let p = m.params();
            let n = m.normalization();
            let _ = writeln!(s, "kernel = {}", p.kernels[0].kind.name());
            let _ = writeln!(
                s,
                "lengthscales = {}",
                fmt_vec(&[p.kernels[0].lengthscale(), p.kernels[1].lengthscale()])
            );
            let _ = writeln!(s, "coreg_1 = {}", fmt_vec(&p.coregs[0].components()));
            let _ = writeln!(s, "coreg_2 = {}", fmt_vec(&p.coregs[1].components()));
            let _ = writeln!(s, "noise_variances = {}", fmt_vec(&p.noise.0));
            let _ = writeln!(s, "norm_mean = {}", fmt_vec(&[n[0].mean, n[1].mean]));
            let _ = writeln!(s, "norm_std = {}", fmt_vec(&[n[0].std, n[1].std]));
            let _ = writeln!(s, "jitter = {:?}", m.factor().jitter());
            write_fit(&mut s, m.fit_info());
            write_series_keys(&mut s, "_1", m.training(0));
            write_series_keys(&mut s, "_2", m.training(1));
        }
    }
    s
}

struct Fields<'a> {
    path: &'a Path,
    map: BTreeMap<&'a str, (usize, &'a str)>,
}

impl<'a> Fields<'a> {
    fn parse(text: &'a str, path: &'a Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_error(path, i + 1, "expected 'key = value'"))?;
            let k = k.trim();
            if map.insert(k, (i + 1, v.trim())).is_some() {
                return Err(parse_error(path, i + 1, format!("duplicate key '{k}'")));
            }
        }
        Ok(Fields { path, map })
    }

    fn take(&mut self, key: &str) -> Result<(usize, &'a str)> {
        self.map
            .remove(key)
            .ok_or_else(|| parse_error(self.path, 0, format!("missing key '{key}'")))
    }

    fn str(&mut self, key: &str) -> Result<&'a str> {
        Ok(self.take(key)?.1)
    }

    fn f64(&mut self, key: &str) -> Result<f64> {
        let (line, v) = self.take(key)?;
        parse_f64(self.path, line, v)
    }

    fn vec(&mut self, key: &str) -> Result<Vec<f64>> {
        let (line, v) = self.take(key)?;
        let inner = v
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| parse_error(self.path, line, format!("{key}: expected [a, b, ...]")))?;
        if inner.trim().is_empty() {
            return Ok(Vec::new());
        }
        inner.split(',').map(|x| parse_f64(self.path, line, x)).collect()
    }

    fn pair(&mut self, key: &str) -> Result<[f64; 2]> {
        let line = self.map.get(key).map_or(0, |e| e.0);
        let v = self.vec(key)?;
        <[f64; 2]>::try_from(v.as_slice())
            .map_err(|_| parse_error(self.path, line, format!("{key}: expected 2 values, got {}", v.len())))
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (line, v) = self.take(key)?;
        v.parse()
            .map_err(|_| parse_error(self.path, line, format!("{key}: invalid value '{v}'")))
    }

    fn fit(&mut self) -> Result<Option<FitInfo>> {
        if !self.map.contains_key("iterations") {
            return Ok(None);
        }
        Ok(Some(FitInfo {
            iterations: self.parsed("iterations")?,
            log_likelihood: self.f64("log_likelihood")?,
            restart_index: self.parsed("restart_index")?,
            converged: self.parsed("converged")?,
        }))
    }

    fn series(&mut self, suffix: &str) -> Result<TimeSeries> {
        let label = self.str(&format!("label{suffix}"))?.to_string();
        let times = self.vec(&format!("times{suffix}"))?;
        let values = self.vec(&format!("values{suffix}"))?;
        TimeSeries::new(times, values, label)
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().next() {
            Some((k, (line, _))) => Err(parse_error(self.path, line, format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }
}

/// Parses a model file and rebuilds the model from its stored parameters,
/// normalization and training samples.
pub fn parse_model(text: &str, path: &Path) -> Result<ModelFile> {
    let mut f = Fields::parse(text, path)?;
    let version = f.str("version")?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::UnknownVersion(version.to_string()));
    }
    let (kind_line, kind) = f.take("kind")?;
    let (kernel_line, kernel_name) = f.take("kernel")?;
    let kernel = KernelKind::from_name(kernel_name)
        .ok_or_else(|| parse_error(path, kernel_line, format!("unknown kernel '{kernel_name}'")))?;
    let stored_jitter = f.f64("jitter")?;
    let model = match kind {
        "gp" => {
            let hyper = GpHyper {
                kernel: KernelParams::new(kernel, f.f64("lengthscale")?)?,
                noise_variance: f.f64("noise_variance")?,
            };
            let norm = Normalization {
                mean: f.f64("norm_mean")?,
                std: f.f64("norm_std")?,
            };
            let fit = f.fit()?;
            let series = f.series("")?;
            f.finish()?;
            let mut m = GpModel::with_normalization(hyper, &series, norm)?;
            if let Some(fit) = fit {
                m = m.with_fit_info(fit);
            }
            ModelFile::Gp(m)
        }
        "slfm" => {
            let l = f.pair("lengthscales")?;
            let params = SlfmParams {
                kernels: [KernelParams::new(kernel, l[0])?, KernelParams::new(kernel, l[1])?],
                coregs: [CoregVector::new(f.pair("coreg_1")?), CoregVector::new(f.pair("coreg_2")?)],
                noise: NoiseVariances::new(f.pair("noise_variances")?)?,
            };
            let (mean, std) = (f.pair("norm_mean")?, f.pair("norm_std")?);
            let norm = [
                Normalization { mean: mean[0], std: std[0] },
                Normalization { mean: mean[1], std: std[1] },
            ];
            let fit = f.fit()?;
            let s1 = f.series("_1")?;
            let s2 = f.series("_2")?;
            f.finish()?;
            let mut m = SlfmModel::with_normalization(params, &s1, &s2, norm)?;
            if let Some(fit) = fit {
                m = m.with_fit_info(fit);
            }
            ModelFile::Slfm(m)
        }
        other => return Err(parse_error(path, kind_line, format!("unknown model kind '{other}'"))),
    };
    let jitter = match &model {
        ModelFile::Gp(m) => m.factor().jitter(),
        ModelFile::Slfm(m) => m.factor().jitter(),
    };
    if jitter != stored_jitter {
        log::warn!(
            "{}: stored jitter {stored_jitter:e} differs from recomputed {jitter:e}",
            path.display()
        );
    }
    Ok(model)
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    parse_model(&read_text(path)?, path)
}

pub fn write_model(path: &Path, model: &ModelFile) -> Result<()> {
    write_atomic(path, model_to_text(model).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelParams;

    fn p() -> &'static Path {
        Path::new("mem.csv")
    }

    #[test]
    fn series_csv_parse_and_epoch() {
        let s = parse_series("time,value\n10,1.5\n12.5,2\n\n20,-0.25\n", p(), 10.0).unwrap();
        assert_eq!(s.times(), &[0.0, 2.5, 10.0]);
        assert_eq!(s.values(), &[1.5, 2.0, -0.25]);
        assert_eq!(s.label(), "mem");
        assert_eq!(series_to_csv(&s, 10.0), "time,value\n10,1.5\n12.5,2\n20,-0.25\n");
    }

    #[test]
    fn series_csv_errors_name_line() {
        let cases = [
            ("t,v\n1,2\n", 1),
            ("time,value\n1,2\n1,3\n", 3),
            ("time,value\n1,2\nx,3\n", 3),
            ("time,value\n1,2,3\n", 2),
            ("time,value\n1,NaN\n", 2),
            ("", 1),
        ];
        for (text, line) in cases {
            match parse_series(text, p(), 0.0) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn times_file() {
        assert_eq!(parse_times("time\n0\n5.5\n# c\n\n10\n", p()).unwrap(), vec![0.0, 5.5, 10.0]);
        assert_eq!(parse_times("time,value\n1,9\n2,8\n", p()).unwrap(), vec![1.0, 2.0]);
        assert!(parse_times("1\nabc\n", p()).is_err());
    }

    #[test]
    fn prediction_csv_columns() {
        let b = PredictionBand { times: vec![0.0, 5.0], mean: vec![1.0, 2.0], std: vec![0.1, 0.2] };
        assert_eq!(predictions_to_csv(&[b.clone()]), "time,mean_1,std_1\n0,1,0.1\n5,2,0.2\n");
        let two = predictions_to_csv(&[b.clone(), b]);
        assert!(two.starts_with("time,mean_1,std_1,mean_2,std_2\n"));
        assert!(two.lines().skip(1).all(|l| l.split(',').count() == 5));
    }

    fn gp_model() -> ModelFile {
        let s = TimeSeries::new(vec![0.0, 10.0, 25.0], vec![1.0, 2.5, 0.1], "lai").unwrap();
        let hyper = GpHyper { kernel: KernelParams::matern32(12.3).unwrap(), noise_variance: 0.1 };
        ModelFile::Gp(GpModel::from_parts(hyper, &s).unwrap().with_fit_info(FitInfo {
            iterations: 17,
            log_likelihood: -12.718281828459045,
            restart_index: 2,
            converged: true,
        }))
    }

    fn slfm_model() -> ModelFile {
        let s1 = TimeSeries::new(vec![0.0, 15.0, 30.0], vec![0.3, 2.2, 1.7], "lai").unwrap();
        let s2 = TimeSeries::new(vec![1.0, 7.0, 13.0, 19.0], vec![0.5, 0.61, 0.66, 0.4], "rvi").unwrap();
        let params = SlfmParams {
            kernels: [KernelParams::matern32(76.44).unwrap(), KernelParams::matern32(13.43).unwrap()],
            coregs: [CoregVector::new([0.842, 1.0831]), CoregVector::new([0.4243, -0.036])],
            noise: NoiseVariances([0.05, 1.0 / 3.0]),
        };
        ModelFile::Slfm(SlfmModel::from_parts(params, &s1, &s2).unwrap())
    }

    #[test]
    fn model_roundtrip_is_byte_identical_and_predicts_identically() {
        let q = [-5.0, 0.0, 12.5, 40.0];
        for m in [gp_model(), slfm_model()] {
            let text = m.to_text();
            let back = parse_model(&text, p()).unwrap();
            assert_eq!(back.to_text(), text);
            assert_eq!(back.predict(&q), m.predict(&q));
        }
    }

    #[test]
    fn model_rejects_bad_files() {
        let text = gp_model().to_text();
        assert!(matches!(
            parse_model(&text.replace("version = 1", "version = 99"), p()),
            Err(Error::UnknownVersion(v)) if v == "99"
        ));
        assert!(parse_model(&text.replace("kind = gp", "kind = tree"), p()).is_err());
        assert!(parse_model(&format!("{text}extra = 1\n"), p()).is_err());
        assert!(parse_model(&text.replace("lengthscale = ", "lengthscale = x"), p()).is_err());
        let missing: String = text.lines().filter(|l| !l.starts_with("norm_std")).map(|l| format!("{l}\n")).collect();
        assert!(parse_model(&missing, p()).is_err());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
