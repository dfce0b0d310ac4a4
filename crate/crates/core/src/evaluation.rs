//! Forecast comparison of M1, M2 and M3: MSE over held-out trailing days,
//! replicated over sampler seeds, with box-plot statistics per cell group.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{train_test_split, PanelDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::gibbs::{run_chains, SamplerConfig};
use crate::inference::{predictive_mean, quantile_sorted};
use crate::model::{ModelData, ModelSpec, Trajectory};

/// Mean squared error over a units × days grid.
pub fn mse_d(actuals: &DMatrix<f64>, forecasts: &DMatrix<f64>) -> Result<f64> {
    if actuals.shape() != forecasts.shape() {
        return Err(Error::contract(format!(
            "shape mismatch: actuals {:?}, forecasts {:?}",
            actuals.shape(),
            forecasts.shape()
        )));
    }
    if actuals.is_empty() {
        return Err(Error::contract("empty forecast grid"));
    }
    if actuals.iter().chain(forecasts.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite entry in forecast grid"));
    }
    Ok((actuals - forecasts).norm_squared() / actuals.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Quartiles, 1.5·IQR whiskers and outliers.
pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::contract("box statistics need at least one value"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite value in box statistics input"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = |v: &&f64| **v >= lo_fence && **v <= hi_fence;
    // an interpolated quartile can lie outside the nearest in-fence point
    let whisker_low = sorted.iter().find(inside).copied().unwrap_or(q1).min(q1);
    let whisker_high = sorted.iter().rev().find(inside).copied().unwrap_or(q3).max(q3);
    let outliers = sorted.iter().filter(|v| !inside(v)).copied().collect();
    Ok(BoxStats {
        q1,
        median,
        q3,
        whisker_low,
        whisker_high,
        outliers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    M1,
    M2,
    M3,
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::M1 => "m1",
            Self::M2 => "m2",
            Self::M3 => "m3",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(Self::M1),
            "m2" => Ok(Self::M2),
            "m3" => Ok(Self::M3),
            other => Err(Error::Config(format!("unknown model '{other}' (expected m1, m2 or m3)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub test_days: Vec<usize>,
    pub replicates: usize,
    pub base_seed: u64,
    pub models: Vec<ModelKind>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            test_days: (2..=28).step_by(2).collect(),
            replicates: 5,
            base_seed: 1,
            models: vec![ModelKind::M1, ModelKind::M2, ModelKind::M3],
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self, panel: &PanelDataset) -> Result<()> {
        let t = panel.series_len();
        if self.test_days.is_empty() {
            return Err(Error::Config("test_days is empty".into()));
        }
        if let Some(d) = self.test_days.iter().find(|d| **d == 0 || **d >= t) {
            return Err(Error::Config(format!("test window d={d} must satisfy 1 <= d < T={t}")));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be positive".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models to compare".into()));
        }
        if self.models.contains(&ModelKind::M3) && panel.covariates.is_none() {
            return Err(Error::Config("model m3 requires covariates".into()));
        }
        Ok(())
    }
}

/// One (model, d, replicate) result; `mse` is `None` when the fit failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCell {
    pub model: ModelKind,
    pub d: usize,
    pub replicate: usize,
    pub mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub cells: Vec<MseCell>,
    /// Box statistics per (model, d) over the successful replicates.
    pub boxes: Vec<(ModelKind, usize, BoxStats)>,
}

impl MseReport {
    pub fn values(&self, model: ModelKind, d: usize) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.model == model && c.d == d)
            .filter_map(|c| c.mse)
            .collect()
    }

    pub fn box_for(&self, model: ModelKind, d: usize) -> Option<&BoxStats> {
        self.boxes.iter().find(|(m, dd, _)| *m == model && *dd == d).map(|(_, _, b)| b)
    }

    pub fn failures(&self) -> impl Iterator<Item = &MseCell> {
        self.cells.iter().filter(|c| c.mse.is_none())
    }

    /// Long-format CSV: `model,d,replicate,mse` (empty mse for failed cells).
    pub fn write_cells<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model", "d", "replicate", "mse"])?;
        for c in &self.cells {
            w.write_record([
                c.model.label().to_string(),
                c.d.to_string(),
                c.replicate.to_string(),
                c.mse.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `model,d,n,q1,median,q3,whisker_low,whisker_high,outliers` with
    /// outliers separated by `;`.
    pub fn write_boxes<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["model", "d", "n", "q1", "median", "q3", "whisker_low", "whisker_high", "outliers"])?;
        for (m, d, b) in &self.boxes {
            let n = self.values(*m, *d).len();
            let outliers: Vec<String> = b.outliers.iter().map(f64::to_string).collect();
            w.write_record([
                m.label().to_string(),
                d.to_string(),
                n.to_string(),
                b.q1.to_string(),
                b.median.to_string(),
                b.q3.to_string(),
                b.whisker_low.to_string(),
                b.whisker_high.to_string(),
                outliers.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn split_panel(panel: &PanelDataset, d: usize) -> Result<(Vec<Trajectory>, DMatrix<f64>)> {
    let s = SplitSpec::new(d)?;
    let mut train = Vec::with_capacity(panel.n_units());
    let mut actuals = DMatrix::zeros(panel.n_units(), d);
    for (i, y) in panel.trajectories.iter().enumerate() {
        let (tr, te) = train_test_split(y, s)?;
        train.push(tr);
        for (r, v) in te.counts.iter().enumerate() {
            actuals[(i, r)] = *v;
        }
    }
    Ok((train, actuals))
}

/// Posterior predictive mean forecasts of the `d` days after the training
/// window, one row per unit.
pub fn forecast_cell(
    panel: &PanelDataset,
    train: &[Trajectory],
    model: ModelKind,
    d: usize,
    config: &SamplerConfig,
) -> Result<DMatrix<f64>> {
    let n = train.len();
    let t_train = train[0].len();
    let mut forecasts = DMatrix::zeros(n, d);
    let mut fill = |row: usize, draws: &crate::gibbs::PosteriorDraws, unit: usize| -> Result<()> {
        let mean = predictive_mean(draws, unit, t_train + 1, t_train + d)?;
        for (r, v) in mean.into_iter().enumerate() {
            forecasts[(row, r)] = v;
        }
        Ok(())
    };
    match model {
        ModelKind::M1 => {
            for i in 0..n {
                let spec = ModelSpec::M1 { unit: i };
                let data = ModelData::for_spec(train, None, &spec)?;
                let draws = run_chains(&data, &spec, config)?;
                fill(i, &draws, 0)?;
            }
        }
        ModelKind::M2 | ModelKind::M3 => {
            let spec = if model == ModelKind::M2 { ModelSpec::M2 } else { ModelSpec::M3 };
            let data = ModelData::for_spec(train, panel.covariates.as_ref(), &spec)?;
            let draws = run_chains(&data, &spec, config)?;
            for i in 0..n {
                fill(i, &draws, i)?;
            }
        }
    }
    Ok(forecasts)
}

/// Runs every (model, d, replicate) cell with sampler seed
/// `base_seed + replicate`. Failed cells are recorded, not fatal.
pub fn compare_models(panel: &PanelDataset, config: &EvaluationConfig, sampler: &SamplerConfig) -> Result<MseReport> {
    config.validate(panel)?;
    sampler.validate()?;
    let splits = config
        .test_days
        .iter()
        .map(|&d| split_panel(panel, d).map(|s| (d, s)))
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for &model in &config.models {
        for (k, &d) in config.test_days.iter().enumerate() {
            for replicate in 0..config.replicates {
                jobs.push((model, k, d, replicate));
            }
        }
    }
    let cells: Vec<MseCell> = jobs
        .into_par_iter()
        .map(|(model, k, d, replicate)| {
            let (_, (train, actuals)) = &splits[k];
            let sampler = SamplerConfig {
                seed: config.base_seed.wrapping_add(replicate as u64),
                ..sampler.clone()
            };
            let result = forecast_cell(panel, train, model, d, &sampler).and_then(|f| mse_d(actuals, &f));
            match result {
                Ok(mse) => MseCell {
                    model,
                    d,
                    replicate,
                    mse: Some(mse),
                    error: None,
                },
                Err(e) => {
                    log::warn!("cell {} d={d} replicate={replicate} failed: {e}", model.label());
                    MseCell {
                        model,
                        d,
                        replicate,
                        mse: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let mut report = MseReport {
        cells,
        boxes: Vec::new(),
    };
    for &model in &config.models {
        for &d in &config.test_days {
            let values = report.values(model, d);
            if !values.is_empty() {
                report.boxes.push((model, d, box_stats(&values)?));
            }
        }
    }
    Ok(report)
}
