//! Command-line front end: `fit`, `predict`, `evaluate` and `rank`.
//!
//! Configuration is one JSON document. Any field can be overridden with a
//! dotted flag such as `--sampler.sweeps 500` or `--set sampler.seed=7`;
//! named flags (`--seed`, `--model`, ...) are applied last.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{load_panel, PanelDataset, TrajectoryFormat};
use crate::error::{Error, Result};
use crate::evaluation::{compare_models, EvaluationConfig, ModelKind, MseReport};
use crate::gibbs::{run_chains, PosteriorDraws, SamplerConfig};
use crate::inference::{
    classify, extrapolate, flat_time_summary, grand_average_curve, parameter_summaries, rank_covariates,
    summarize, theta1_below_observed, BandOptions, GrandAverageXi,
};
use crate::model::{ModelData, ModelSpec, StateLayout};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Exit code for an error: 3 for sampler and I/O failures, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Chain { .. } | Error::Kernel(_) | Error::Factorization(_) | Error::Step { .. } | Error::Io(_) => {
            EXIT_RUNTIME
        }
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub trajectories: Option<PathBuf>,
    pub format: TrajectoryFormat,
    pub covariates: Option<PathBuf>,
    /// Replace each trajectory by its running maximum before fitting.
    pub running_max: bool,
    pub model: ModelKind,
    /// Unit id fitted by m1.
    pub unit: Option<String>,
    pub sampler: SamplerConfig,
    pub gammas: Vec<f64>,
    pub horizon: usize,
    pub level: f64,
    pub include_noise: bool,
    pub grand_average_xi: GrandAverageXi,
    pub rank_k: usize,
    /// Add the standardization center and scale to ranking output.
    pub report_scale: bool,
    pub evaluation: EvaluationConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trajectories: None,
            format: TrajectoryFormat::Long,
            covariates: None,
            running_max: false,
            model: ModelKind::M2,
            unit: None,
            sampler: SamplerConfig::default(),
            gammas: vec![0.9, 0.99, 0.999, 0.9999],
            horizon: 30,
            level: 0.95,
            include_noise: false,
            grand_average_xi: GrandAverageXi::GeometricMean,
            rank_k: 10,
            report_scale: false,
            evaluation: EvaluationConfig::default(),
            out: PathBuf::from("growthcast-out"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        for path in self.trajectories.iter().chain(&self.covariates) {
            if !path.exists() {
                return cfg(format!("input file {} does not exist", path.display()));
            }
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return cfg(format!("gamma values must lie in (0, 1), got {g}"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return cfg(format!("level must lie in (0, 1), got {}", self.level));
        }
        self.sampler.validate()
    }

    fn require_trajectories(&self) -> Result<&Path> {
        self.trajectories
            .as_deref()
            .ok_or_else(|| Error::Config("no trajectories file given".into()))
    }

    fn band_options(&self) -> BandOptions {
        BandOptions {
            level: self.level,
            include_noise: self.include_noise,
            seed: self.sampler.seed,
        }
    }
}

/// Sets `path` (dotted) in a JSON object tree to `raw`, parsed as JSON when
/// possible and as a string otherwise.
pub fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("malformed override key '{path}'")));
    }
    for key in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override '{path}': '{key}' is not inside an object")))?;
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| Error::Config(format!("override '{path}' does not name an object field")))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "growthcast", version, about = "Hierarchical Richards growth-curve models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    /// jhu_wide or long.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// m1, m2 or m3.
    #[arg(long)]
    pub model: Option<String>,
    /// Unit id fitted by m1.
    #[arg(long)]
    pub unit: Option<String>,
    /// Comma-separated progression constants for flat time points.
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted override, e.g. `sampler.sweeps=500`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the sampler and write draws, summary and diagnostics.
    Fit(CommonArgs),
    /// Forecast bands, flat time points, grand average and travel levels.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        /// Draws CSV written by `fit` (its JSON sidecar must sit next to it).
        #[arg(long)]
        draws: PathBuf,
    },
    /// Compare M1, M2 and M3 by held-out MSE.
    Evaluate(CommonArgs),
    /// Rank covariates by absolute posterior-mean coefficient.
    Rank {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        draws: PathBuf,
        /// Curve parameter 1, 2 or 3; all three when omitted.
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
    },
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Fit(c) | Command::Evaluate(c) => c,
            Command::Predict { common, .. } | Command::Rank { common, .. } => common,
        }
    }
}

/// Pulls `--a.b=v` and `--a.b v` tokens out of `args`.
fn split_dotted(args: Vec<String>) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::with_capacity(args.len());
    let mut dotted = Vec::new();
    let mut it = args.into_iter().peekable();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            rest.push(a);
            continue;
        };
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if !key.contains('.') {
            rest.push(a);
            continue;
        }
        let value = inline.or_else(|| it.next()).unwrap_or_default();
        dotted.push((key, value));
    }
    (rest, dotted)
}

/// Builds the run configuration: file, then dotted overrides, then named
/// flags.
pub fn resolve_config(common: &CommonArgs, dotted: &[(String, String)]) -> Result<RunConfig> {
    let mut root = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?
        }
        None => Value::Object(Default::default()),
    };
    let mut overrides: Vec<(String, String)> = dotted.to_vec();
    for s in &common.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{s}'")))?;
        overrides.push((k.to_string(), v.to_string()));
    }
    let string = |v: &str| Value::String(v.to_string()).to_string();
    if let Some(p) = &common.trajectories {
        overrides.push(("trajectories".into(), string(&p.to_string_lossy())));
    }
    if let Some(f) = &common.format {
        overrides.push(("format".into(), string(f)));
    }
    if let Some(p) = &common.covariates {
        overrides.push(("covariates".into(), string(&p.to_string_lossy())));
    }
    if let Some(s) = common.seed {
        overrides.push(("sampler.seed".into(), s.to_string()));
    }
    if let Some(m) = &common.model {
        overrides.push(("model".into(), string(&m.to_ascii_lowercase())));
    }
    if let Some(u) = &common.unit {
        overrides.push(("unit".into(), string(u)));
    }
    if let Some(g) = &common.gamma {
        overrides.push(("gammas".into(), serde_json::to_string(g)?));
    }
    if let Some(h) = common.horizon {
        overrides.push(("horizon".into(), h.to_string()));
    }
    if let Some(o) = &common.out {
        overrides.push(("out".into(), string(&o.to_string_lossy())));
    }
    for (k, v) in &overrides {
        apply_override(&mut root, k, v)?;
    }
    let config: RunConfig = serde_json::from_value(root).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Metadata written next to the draws CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub version: String,
    pub git_describe: String,
    pub spec: ModelSpec,
    pub config: SamplerConfig,
    pub unit_ids: Vec<String>,
    pub covariate_names: Vec<String>,
    pub covariate_center: Vec<f64>,
    pub covariate_scale: Vec<f64>,
    pub series_len: usize,
    pub start_date: NaiveDate,
    pub max_observed: Vec<f64>,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub acceptance_rates: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn sidecar_path(draws_csv: &Path) -> PathBuf {
    draws_csv.with_extension("json")
}

/// Writes `draws.csv` (one row per retained draw) and its `draws.json`
/// sidecar into `dir`.
pub fn write_draws(dir: &Path, draws: &PosteriorDraws, meta: &DrawsMeta) -> Result<PathBuf> {
    let path = dir.join("draws.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let layout = draws.layout();
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(layout.names());
    w.write_record(&header)?;
    for c in 0..draws.n_chains() {
        for (k, s) in draws.chain(c).iter().enumerate() {
            let mut row = vec![c.to_string(), k.to_string()];
            row.extend(layout.flatten(s).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    let mut side = create(&sidecar_path(&path))?;
    serde_json::to_writer_pretty(&mut side, meta)?;
    side.flush()?;
    Ok(path)
}

/// Reads draws written by [`write_draws`]. Disagreement between the CSV
/// and its sidecar is a configuration error.
pub fn read_draws(path: &Path) -> Result<(PosteriorDraws, DrawsMeta)> {
    let mismatch = |m: String| Error::Config(format!("{}: {m}", path.display()));
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side)
        .map_err(|e| mismatch(format!("cannot read sidecar {}: {e}", side.display())))?;
    let meta: DrawsMeta = serde_json::from_str(&text).map_err(|e| mismatch(e.to_string()))?;
    let layout = StateLayout::new(meta.unit_ids.clone(), meta.covariate_names.len());
    let file = File::open(path).map_err(|e| mismatch(e.to_string()))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut expected = vec!["chain".to_string(), "draw".to_string()];
    expected.extend(layout.names());
    if header != expected {
        return Err(mismatch("columns do not match the model recorded in the sidecar".into()));
    }
    let mut states = Vec::new();
    let mut per_chain = vec![0usize; meta.chains];
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let chain: usize = record[0].parse().map_err(|_| mismatch(format!("row {}: bad chain index", k + 2)))?;
        if chain >= meta.chains || chain != states.len() / meta.draws_per_chain.max(1) {
            return Err(mismatch(format!("row {}: chain index {chain} out of order", k + 2)));
        }
        per_chain[chain] += 1;
        let values = record
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| mismatch(format!("row {}: non-numeric value", k + 2)))?;
        states.push(layout.unflatten(&values).map_err(|e| mismatch(format!("row {}: {e}", k + 2)))?);
    }
    if per_chain.iter().any(|n| *n != meta.draws_per_chain) {
        return Err(mismatch(format!(
            "expected {} draws in each of {} chains, found {per_chain:?}",
            meta.draws_per_chain, meta.chains
        )));
    }
    let mut draws = PosteriorDraws {
        spec: meta.spec,
        config: meta.config.clone(),
        unit_ids: meta.unit_ids.clone(),
        covariate_names: meta.covariate_names.clone(),
        series_len: meta.series_len,
        max_observed: meta.max_observed.clone(),
        draws: states,
        draws_per_chain: meta.draws_per_chain,
        acceptance_rates: meta.acceptance_rates.clone(),
        diagnostics: Vec::new(),
        warnings: meta.warnings.clone(),
    };
    draws.diagnostics = draws.compute_diagnostics();
    Ok((draws, meta))
}

fn load(config: &RunConfig) -> Result<PanelDataset> {
    let (panel, imputed) = load_panel(
        config.require_trajectories()?,
        config.format,
        config.covariates.as_deref(),
        config.running_max,
    )?;
    for m in &imputed {
        log::info!("imputed {} for unit '{}' with median {}", m.covariate, m.unit_id, m.value);
    }
    Ok(panel)
}

fn model_spec(config: &RunConfig, panel: &PanelDataset) -> Result<ModelSpec> {
    Ok(match config.model {
        ModelKind::M1 => {
            let id = config
                .unit
                .as_deref()
                .ok_or_else(|| Error::Config("model m1 needs --unit".into()))?;
            let unit = panel
                .trajectories
                .iter()
                .position(|t| t.unit_id.trim() == id.trim())
                .ok_or_else(|| Error::Config(format!("unit '{id}' not found in trajectories")))?;
            ModelSpec::M1 { unit }
        }
        ModelKind::M2 => ModelSpec::M2,
        ModelKind::M3 => {
            if panel.covariates.is_none() {
                return Err(Error::Config("model m3 requires a covariates file".into()));
            }
            ModelSpec::M3
        }
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

/// Fits the configured model and writes `draws.csv`, `draws.json`,
/// `summary.csv` and `diagnostics.csv` into `config.out`.
pub fn cmd_fit(config: &RunConfig) -> Result<PathBuf> {
    let panel = load(config)?;
    let spec = model_spec(config, &panel)?;
    let data = ModelData::for_spec(&panel.trajectories, panel.covariates.as_ref(), &spec)?;
    let draws = run_chains(&data, &spec, &config.sampler)?;
    std::fs::create_dir_all(&config.out)?;
    let mut warnings = draws.warnings.clone();
    warnings.extend(theta1_below_observed(&draws));
    for w in &warnings {
        log::warn!("{w}");
    }
    let (center, scale) = match (&panel.covariates, spec.uses_covariates()) {
        (Some(c), true) => (c.center.clone(), c.scale.clone()),
        _ => (Vec::new(), Vec::new()),
    };
    let meta = DrawsMeta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        git_describe: option_env!("GROWTHCAST_GIT_DESCRIBE").unwrap_or("unknown").to_string(),
        spec,
        config: config.sampler.clone(),
        unit_ids: draws.unit_ids.clone(),
        covariate_names: draws.covariate_names.clone(),
        covariate_center: center,
        covariate_scale: scale,
        series_len: draws.series_len,
        start_date: panel.start_date(),
        max_observed: draws.max_observed.clone(),
        chains: draws.n_chains(),
        draws_per_chain: draws.draws_per_chain,
        acceptance_rates: draws.acceptance_rates.clone(),
        warnings,
    };
    let path = write_draws(&config.out, &draws, &meta)?;

    let mut w = csv_writer(&config.out.join("summary.csv"))?;
    w.write_record(["parameter", "mean", "lower", "upper"])?;
    for (name, s) in parameter_summaries(&draws, config.level)? {
        w.write_record([name, s.mean.to_string(), s.lower.to_string(), s.upper.to_string()])?;
    }
    w.flush()?;

    let mut w = csv_writer(&config.out.join("diagnostics.csv"))?;
    w.write_record(["parameter", "rhat", "ess", "acceptance_rate"])?;
    let rate = |name: &str| {
        draws
            .acceptance_rates
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.to_string())
            .unwrap_or_default()
    };
    for d in &draws.diagnostics {
        w.write_record([d.name.clone(), d.rhat.to_string(), d.ess.to_string(), rate(&d.name)])?;
    }
    for (name, r) in draws.acceptance_rates.iter().filter(|(n, _)| n.ends_with("/curve_block")) {
        w.write_record([name.clone(), String::new(), String::new(), r.to_string()])?;
    }
    w.flush()?;
    Ok(path)
}

fn safe_file_stem(unit: &str) -> String {
    unit.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes per-unit forecast CSVs, `flat_times.csv`, `classification.csv`
/// and, for hierarchical models, `grand_average.csv`.
pub fn cmd_predict(config: &RunConfig, draws_path: &Path) -> Result<()> {
    let (draws, meta) = read_draws(draws_path)?;
    std::fs::create_dir_all(&config.out)?;
    let opts = config.band_options();
    let date = |t: f64| crate::inference::day_to_date(meta.start_date, t).map(|d| d.to_string());
    let write_band = |path: &Path, band: &crate::inference::ForecastBand| -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["t", "date", "mean", "lower", "upper"])?;
        for k in 0..band.len() {
            w.write_record([
                band.times[k].to_string(),
                date(band.times[k])?,
                band.mean_curve[k].to_string(),
                band.lower_curve[k].to_string(),
                band.upper_curve[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    for (i, unit) in draws.unit_ids.iter().enumerate() {
        let band = extrapolate(&draws, i, config.horizon, &opts)?;
        write_band(&config.out.join(format!("forecast_{}.csv", safe_file_stem(unit))), &band)?;
    }

    let mut w = csv_writer(&config.out.join("flat_times.csv"))?;
    w.write_record(["unit", "gamma", "mean_day", "mean_date", "lower", "upper"])?;
    for (i, unit) in draws.unit_ids.iter().enumerate() {
        for &g in &config.gammas {
            let s = flat_time_summary(&draws, i, g, config.level, meta.start_date)?;
            w.write_record([
                unit.clone(),
                g.to_string(),
                s.days.mean.to_string(),
                s.mean_date.to_string(),
                s.days.lower.to_string(),
                s.days.upper.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv_writer(&config.out.join("classification.csv"))?;
    w.write_record(["unit", "theta1_mean", "theta1_lower", "theta1_upper", "level"])?;
    for (i, unit) in draws.unit_ids.iter().enumerate() {
        let theta1: Vec<f64> = draws.draws.iter().map(|s| s.curve_params[i].theta1).collect();
        let s = summarize(&theta1, config.level)?;
        w.write_record([
            unit.clone(),
            s.mean.to_string(),
            s.lower.to_string(),
            s.upper.to_string(),
            classify(s.mean)?.number().to_string(),
        ])?;
    }
    w.flush()?;

    if matches!(draws.spec, ModelSpec::M1 { .. }) {
        log::warn!("grand-average curve skipped: intercepts are not identified for a single series");
    } else {
        let band = grand_average_curve(&draws, config.horizon, config.grand_average_xi, &opts)?;
        write_band(&config.out.join("grand_average.csv"), &band)?;
    }
    Ok(())
}

/// Runs the model comparison and writes `mse.csv` and `mse_box.csv`.
pub fn cmd_evaluate(config: &RunConfig) -> Result<MseReport> {
    let panel = load(config)?;
    let report = compare_models(&panel, &config.evaluation, &config.sampler)?;
    std::fs::create_dir_all(&config.out)?;
    report.write_cells(create(&config.out.join("mse.csv"))?)?;
    report.write_boxes(create(&config.out.join("mse_box.csv"))?)?;
    for c in report.failures() {
        log::warn!(
            "{} d={} replicate={} failed: {}",
            c.model.label(),
            c.d,
            c.replicate,
            c.error.as_deref().unwrap_or("")
        );
    }
    Ok(report)
}

/// Writes `rank_theta{l}.csv` with columns `rank, covariate, posterior_mean`
/// (plus `center, scale` when `report_scale` is set).
pub fn cmd_rank(config: &RunConfig, draws_path: &Path, l: Option<usize>, k: Option<usize>) -> Result<()> {
    let (draws, meta) = read_draws(draws_path)?;
    if draws.covariate_names.is_empty() {
        return Err(Error::Config("these draws come from a model without covariates".into()));
    }
    std::fs::create_dir_all(&config.out)?;
    let k = k.unwrap_or(config.rank_k);
    let blocks: Vec<usize> = match l {
        Some(l) => vec![l],
        None => vec![1, 2, 3],
    };
    for l in blocks {
        let ranked = rank_covariates(&draws, l, k).map_err(|e| Error::Config(e.to_string()))?;
        let mut w = csv_writer(&config.out.join(format!("rank_theta{l}.csv")))?;
        let mut header = vec!["rank", "covariate", "posterior_mean"];
        if config.report_scale {
            header.extend(["center", "scale"]);
        }
        w.write_record(&header)?;
        for (r, c) in ranked.iter().enumerate() {
            let mut row = vec![(r + 1).to_string(), c.name.clone(), c.posterior_mean.to_string()];
            if config.report_scale {
                row.push(meta.covariate_center.get(c.index).map(f64::to_string).unwrap_or_default());
                row.push(meta.covariate_scale.get(c.index).map(f64::to_string).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let (rest, dotted) = split_dotted(args.into_iter().map(Into::into).collect());
    let cli = Cli::try_parse_from(rest).map_err(|e| Error::Config(e.to_string()))?;
    let config = resolve_config(cli.command.common(), &dotted)?;
    match &cli.command {
        Command::Fit(_) => cmd_fit(&config).map(|_| ()),
        Command::Predict { draws, .. } => cmd_predict(&config, draws),
        Command::Evaluate(_) => cmd_evaluate(&config).map(|_| ()),
        Command::Rank { draws, l, k, .. } => cmd_rank(&config, draws, *l, *k),
    }
}

/// Entry point used by the binary: runs and maps the outcome to an exit
/// code, printing errors to stderr.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    if args.iter().skip(1).any(|a| a == "--help" || a == "-h" || a == "--version" || a == "-V") {
        let (rest, _) = split_dotted(args);
        return match Cli::try_parse_from(rest) {
            Ok(_) => EXIT_OK,
            Err(e) => {
                let _ = e.print();
                if e.use_stderr() {
                    EXIT_CONFIG
                } else {
                    EXIT_OK
                }
            }
        };
    }
    match run(args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
