//! Command-line surface. [`run`] executes a parsed [`Cli`] and writes its
//! report to the given writer; `main` maps errors to exit codes.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::assess::{assess_methods, Method};
use crate::error::{Error, Result};
use crate::gp;
use crate::io::{self, ModelFile};
use crate::kernel::KernelKind;
use crate::metrics::R2Kind;
use crate::mogp::{self, DiagnoseConfig, SynergyDiagnostics};
use crate::phenosynth::{
    generate_scenario, parse_gaps, select_descriptor, DoubleLogistic, Generator, ScenarioConfig, SlfmGenerator,
    DEFAULT_PAIRING_TOLERANCE,
};
use crate::series::{TimeSeries, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "mogp-gapfill", version, about = "Fill gaps in a sparse optical series using a dense radar series")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a GP (one series) or a two-output model (two series).
    Train(TrainArgs),
    /// Predict mean and std at given times from a model file.
    Predict(PredictArgs),
    /// Withhold output-1 samples, refit and score the predictions.
    Assess(AssessArgs),
    /// Report the latent structure of a two-output model.
    Diagnose(DiagnoseArgs),
    /// Generate a synthetic optical/radar scenario.
    Simulate(SimulateArgs),
    /// Rank candidate series by temporal correlation with an optical series.
    Corr(CorrArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelArg {
    Matern32,
    SquaredExponential,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Matern32 => KernelKind::Matern32,
            KernelArg::SquaredExponential => KernelKind::SquaredExponential,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "matern32")]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

impl FitArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            kernel: self.kernel.into(),
            restarts: self.restarts,
            max_iter: self.max_iter,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Series CSV; give once for a GP, twice (optical first) for the two-output model.
    #[arg(long, required = true, num_args = 1, action = clap::ArgAction::Append)]
    pub series: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Day subtracted from all file times.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub epoch: f64,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("query").required(true).args(["times", "grid"]))]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// File with one query time per line.
    #[arg(long)]
    pub times: Option<PathBuf>,
    /// Inclusive grid `start:stop:step`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub epoch: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum R2Arg {
    /// Squared Pearson correlation.
    Pearson,
    /// Coefficient of determination.
    Determination,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    /// Output-1 series, then optionally the output-2 series.
    #[arg(long, required = true, num_args = 1, action = clap::ArgAction::Append)]
    pub series: Vec<PathBuf>,
    /// Comma-separated output-1 times to withhold.
    #[arg(long, allow_hyphen_values = true)]
    pub holdout: Option<String>,
    /// Series CSV of extra output-1 samples used as the holdout set.
    #[arg(long)]
    pub holdout_series: Option<PathBuf>,
    /// Method to assess; repeat to run several.
    #[arg(long = "method", required = true, action = clap::ArgAction::Append)]
    pub methods: Vec<Method>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pearson")]
    pub r2: R2Arg,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub epoch: f64,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Emit `key = value` lines at full precision.
    #[arg(long)]
    pub structured: bool,
    #[arg(long, default_value_t = 1.5)]
    pub synergy_threshold: f64,
    #[arg(long, default_value_t = 0.1)]
    pub independence_threshold: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GeneratorArg {
    Slfm,
    DoubleLogistic,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario config file; inline flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Sample exactly on the noise-free curves.
    #[arg(long)]
    pub zero_noise: bool,
    #[arg(long)]
    pub span: Option<f64>,
    #[arg(long)]
    pub interval_1: Option<f64>,
    #[arg(long)]
    pub interval_2: Option<f64>,
    /// Output-1 gap `start:length`; repeatable.
    #[arg(long = "gap", action = clap::ArgAction::Append)]
    pub gaps: Vec<String>,
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorArg>,
    #[arg(long)]
    pub noise_1: Option<f64>,
    #[arg(long)]
    pub noise_2: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub epoch: f64,
}

#[derive(Debug, Args)]
pub struct CorrArgs {
    #[arg(long)]
    pub optical: PathBuf,
    /// Candidate series CSV; repeatable. Labels come from file names.
    #[arg(long = "candidate", required = true, action = clap::ArgAction::Append)]
    pub candidates: Vec<PathBuf>,
    /// Maximum time difference in days for paired samples.
    #[arg(long, default_value_t = DEFAULT_PAIRING_TOLERANCE)]
    pub tolerance: f64,
    /// Also write the ranking as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub epoch: f64,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

/// Parses an inclusive `start:stop:step` grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(usage(format!("grid '{spec}': expected start:stop:step")));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| usage(format!("grid '{spec}': '{s}' is not a finite number")))
    };
    let (start, stop, step) = (num(a)?, num(b)?, num(c)?);
    if step <= 0.0 {
        return Err(usage(format!("grid '{spec}': step must be positive")));
    }
    if stop < start {
        return Err(usage(format!("grid '{spec}': stop is before start")));
    }
    let count = ((stop - start) / step + 1e-9).floor();
    if count >= 1e7 {
        return Err(usage(format!("grid '{spec}': too many points")));
    }
    Ok((0..=count as usize).map(|k| start + k as f64 * step).collect())
}

fn parse_time_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse::<f64>()
                .map_err(|_| usage(format!("holdout: '{x}' is not a number")))
        })
        .collect()
}

fn write_output(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => io::write_atomic(path, text.as_bytes()),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn fmt_matrix(m: &nalgebra::Matrix2<f64>, structured: bool) -> String {
    if structured {
        format!("[[{:?}, {:?}], [{:?}, {:?}]]", m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
    } else {
        format!("[[{:.3}, {:.3}], [{:.3}, {:.3}]]", m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
    }
}

/// Diagnostics report, human-readable or `key = value`.
pub fn diagnostics_text(d: &SynergyDiagnostics, structured: bool) -> String {
    let f = |v: f64| if structured { format!("{v:?}") } else { format!("{v:.4}") };
    let rows = [
        ("ell_lf", f(d.ell_lf)),
        ("ell_hf", f(d.ell_hf)),
        ("a_lf", format!("[{}, {}]", f(d.a_lf[0]), f(d.a_lf[1]))),
        ("a_hf", format!("[{}, {}]", f(d.a_hf[0]), f(d.a_hf[1]))),
        ("b_lf", fmt_matrix(&d.b_lf, structured)),
        ("b_hf", fmt_matrix(&d.b_hf, structured)),
        ("b12_lf", f(d.b12_lf)),
        ("b12_hf", f(d.b12_hf)),
        ("ratio_out1", f(d.ratio_out1)),
        ("ratio_out2", f(d.ratio_out2)),
        ("output_correlation", f(d.output_correlation)),
        ("synergy_class", d.synergy_class.name().to_string()),
    ];
    let mut s = String::new();
    for (k, v) in rows {
        if structured {
            s.push_str(&format!("{k} = {v}\n"));
        } else {
            s.push_str(&format!("{k:<20}{v}\n"));
        }
    }
    s
}

fn cmd_train(args: &TrainArgs, stdout: &mut dyn Write) -> Result<()> {
    let series: Vec<TimeSeries> = args
        .series
        .iter()
        .map(|p| io::read_series(p, args.epoch))
        .collect::<Result<_>>()?;
    let config = args.fit.config();
    let model = match series.as_slice() {
        [s] => ModelFile::Gp(gp::train(s, &config)?),
        [s1, s2] => ModelFile::Slfm(mogp::train(s1, s2, &config)?),
        _ => return Err(usage("train takes one or two --series")),
    };
    io::write_model(&args.out, &model)?;
    let (fit, diag) = match &model {
        ModelFile::Gp(m) => (m.fit_info(), None),
        ModelFile::Slfm(m) => (m.fit_info(), Some(m.diagnose(&DiagnoseConfig::default()))),
    };
    let mut s = format!("kind = {}\n", model.kind_name());
    if let Some(fit) = fit {
        s.push_str(&format!(
            "log_likelihood = {:?}\niterations = {}\nrestart_index = {}\nconverged = {}\n",
            fit.log_likelihood, fit.iterations, fit.restart_index, fit.converged
        ));
    }
    match &model {
        ModelFile::Gp(m) => s.push_str(&format!(
            "lengthscale = {:?}\nnoise_variance = {:?}\n",
            m.hyper().kernel.lengthscale(),
            m.hyper().noise_variance
        )),
        ModelFile::Slfm(_) => s.push_str(&diagnostics_text(&diag.expect("slfm diagnostics"), true)),
    }
    emit(stdout, &s)
}

fn cmd_predict(args: &PredictArgs, stdout: &mut dyn Write) -> Result<()> {
    let model = io::read_model(&args.model)?;
    let times = match (&args.times, &args.grid) {
        (Some(p), _) => io::read_times(p)?,
        (None, Some(g)) => parse_grid(g)?,
        (None, None) => return Err(usage("predict needs --times or --grid")),
    };
    let shifted: Vec<f64> = times.iter().map(|t| t - args.epoch).collect();
    let mut bands = model.predict(&shifted);
    for b in &mut bands {
        b.times = times.clone();
    }
    write_output(args.out.as_deref(), &io::predictions_to_csv(&bands), stdout)
}

/// Output-1 series extended with the `extra` samples.
fn with_extra_samples(series: &TimeSeries, extra: &TimeSeries) -> Result<TimeSeries> {
    let mut all: Vec<(f64, f64)> = series.iter().chain(extra.iter()).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (t, v) = all.into_iter().unzip();
    TimeSeries::new(t, v, series.label())
        .map_err(|_| usage("holdout series shares sample times with output 1"))
}

fn cmd_assess(args: &AssessArgs, stdout: &mut dyn Write) -> Result<()> {
    let series: Vec<TimeSeries> = args
        .series
        .iter()
        .map(|p| io::read_series(p, args.epoch))
        .collect::<Result<_>>()?;
    if series.len() > 2 {
        return Err(usage("assess takes one or two --series"));
    }
    let mut s1 = series[0].clone();
    let mut holdout = match &args.holdout {
        Some(h) => parse_time_list(h)?
            .into_iter()
            .map(|t| t - args.epoch)
            .collect(),
        None => Vec::new(),
    };
    if let Some(p) = &args.holdout_series {
        let extra = io::read_series(p, args.epoch)?;
        s1 = with_extra_samples(&s1, &extra)?;
        holdout.extend_from_slice(extra.times());
    }
    let r2_kind = match args.r2 {
        R2Arg::Pearson => R2Kind::SquaredPearson,
        R2Arg::Determination => R2Kind::Determination,
    };
    let reports = assess_methods(&s1, series.get(1), &holdout, &args.methods, &args.fit.config(), r2_kind);
    let mut text = String::new();
    for (i, r) in reports.into_iter().enumerate() {
        if i > 0 {
            text.push('\n');
        }
        text.push_str(&r?.to_text());
    }
    write_output(args.out.as_deref(), &text, stdout)
}

fn cmd_diagnose(args: &DiagnoseArgs, stdout: &mut dyn Write) -> Result<()> {
    let model = match io::read_model(&args.model)? {
        ModelFile::Slfm(m) => m,
        ModelFile::Gp(_) => {
            return Err(Error::WrongModelKind(format!(
                "{}: diagnose requires a two-output (slfm) model, got a single-output gp model",
                args.model.display()
            )))
        }
    };
    let cfg = DiagnoseConfig {
        synergy_threshold: args.synergy_threshold,
        independence_threshold: args.independence_threshold,
    };
    emit(stdout, &diagnostics_text(&model.diagnose(&cfg), args.structured))
}

fn scenario_config(args: &SimulateArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(p) => ScenarioConfig::parse(&io::read_text(p)?)?,
        None => ScenarioConfig::default(),
    };
    if let Some(g) = args.generator {
        let keep = matches!(
            (g, &cfg.generator),
            (GeneratorArg::Slfm, Generator::SlfmSample(_)) | (GeneratorArg::DoubleLogistic, Generator::DoubleLogisticSeasons(_))
        );
        if !keep {
            cfg.generator = match g {
                GeneratorArg::Slfm => Generator::SlfmSample(SlfmGenerator::default()),
                GeneratorArg::DoubleLogistic => Generator::DoubleLogisticSeasons(DoubleLogistic::default()),
            };
        }
    }
    if let Some(v) = args.span {
        cfg.span_days = v;
    }
    if let Some(v) = args.interval_1 {
        cfg.interval[0] = v;
    }
    if let Some(v) = args.interval_2 {
        cfg.interval[1] = v;
    }
    if let Some(v) = args.noise_1 {
        cfg.noise_std[0] = v;
    }
    if let Some(v) = args.noise_2 {
        cfg.noise_std[1] = v;
    }
    if !args.gaps.is_empty() {
        cfg.gaps = parse_gaps(&args.gaps.join(",")).map_err(Error::InvalidConfig)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.zero_noise {
        cfg.noise_std = [0.0, 0.0];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let cfg = scenario_config(args)?;
    let scenario = generate_scenario(&cfg)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let files = [
        ("observed_1.csv", &scenario.observed_1),
        ("observed_2.csv", &scenario.observed_2),
        ("truth_1.csv", &scenario.truth_1),
        ("withheld_1.csv", &scenario.withheld_1),
    ];
    for (name, series) in files {
        io::write_series(&args.out_dir.join(name), series, args.epoch)?;
    }
    io::write_atomic(&args.out_dir.join("scenario.cfg"), cfg.to_text().as_bytes())?;
    emit(
        stdout,
        &format!(
            "observed_1 = {}\nobserved_2 = {}\nwithheld_1 = {}\n",
            scenario.observed_1.len(),
            scenario.observed_2.len(),
            scenario.withheld_1.len()
        ),
    )
}

fn cmd_corr(args: &CorrArgs, stdout: &mut dyn Write) -> Result<()> {
    let optical = io::read_series(&args.optical, args.epoch)?;
    let candidates: Vec<(String, TimeSeries)> = args
        .candidates
        .iter()
        .map(|p| {
            let s = io::read_series(p, args.epoch)?;
            Ok((s.label().to_string(), s))
        })
        .collect::<Result<_>>()?;
    let ranked = select_descriptor(&optical, &candidates, args.tolerance);
    let mut table = String::new();
    for (label, r) in &ranked {
        table.push_str(&format!("{label}\t{r:.5}\n"));
    }
    emit(stdout, &table)?;
    if let Some(out) = &args.out {
        let mut csv = String::from("label,pearson\n");
        for (label, r) in &ranked {
            csv.push_str(&format!("{label},{r:?}\n"));
        }
        io::write_atomic(out, csv.as_bytes())?;
    }
    Ok(())
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, stdout),
        Command::Predict(a) => cmd_predict(a, stdout),
        Command::Assess(a) => cmd_assess(a, stdout),
        Command::Diagnose(a) => cmd_diagnose(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Corr(a) => cmd_corr(a, stdout),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:10:5").unwrap(), vec![0.0, 5.0, 10.0]);
        assert_eq!(parse_grid("0:9:5").unwrap(), vec![0.0, 5.0]);
        assert_eq!(parse_grid("-2:-2:1").unwrap(), vec![-2.0]);
        assert_eq!(parse_grid("0:1:0.1").unwrap().len(), 11);
        for bad in ["0:10", "0:10:0", "10:0:1", "a:1:1", "0:1:-1", "0:1e12:1e-3"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn time_list() {
        assert_eq!(parse_time_list("1, 2.5,3").unwrap(), vec![1.0, 2.5, 3.0]);
        assert!(parse_time_list("1,x").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
