//! Loading trajectory and covariate CSV files, design-matrix
//! standardization and train/test splitting.
//!
//! Trajectory formats:
//! * `jhu_wide`: `Province/State, Country/Region, Lat, Long, <m/d/yy>...`;
//!   province rows are summed per country.
//! * `long`: `unit_id, date, cumulative_count` with ISO-8601 dates.
//!
//! Covariate files have `unit_id` followed by one column per covariate;
//! an empty cell is a missing value.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CovariateTable, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryFormat {
    JhuWide,
    Long,
}

impl std::str::FromStr for TrajectoryFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jhu_wide" => Ok(Self::JhuWide),
            "long" => Ok(Self::Long),
            other => Err(Error::Config(format!("unknown trajectory format '{other}'"))),
        }
    }
}

/// Trajectories sharing a start date and length, with optional covariates
/// whose rows follow the trajectory order.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub trajectories: Vec<Trajectory>,
    pub covariates: Option<CovariateTable>,
}

impl PanelDataset {
    pub fn new(trajectories: Vec<Trajectory>, covariates: Option<CovariateTable>) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::data("panel has no trajectories"))?;
        for t in &trajectories {
            t.validate()?;
            if t.len() != first.len() || t.start_date != first.start_date {
                return Err(Error::data(format!(
                    "trajectory '{}' ({} days from {}) does not match '{}' ({} days from {})",
                    t.unit_id,
                    t.len(),
                    t.start_date,
                    first.unit_id,
                    first.len(),
                    first.start_date
                )));
            }
        }
        let ids: Vec<String> = trajectories.iter().map(|t| t.unit_id.trim().to_string()).collect();
        let covariates = match covariates {
            Some(c) => {
                let mut cov_ids: Vec<String> = c.unit_ids.iter().map(|u| u.trim().to_string()).collect();
                let mut want = ids.clone();
                cov_ids.sort();
                want.sort();
                if cov_ids != want {
                    return Err(Error::data("covariate unit ids do not match trajectory unit ids"));
                }
                Some(c.aligned_to(&ids)?)
            }
            None => None,
        };
        Ok(Self {
            trajectories,
            covariates,
        })
    }

    pub fn n_units(&self) -> usize {
        self.trajectories.len()
    }

    pub fn series_len(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn start_date(&self) -> NaiveDate {
        self.trajectories[0].start_date
    }

    pub fn unit_ids(&self) -> Vec<String> {
        self.trajectories.iter().map(|t| t.unit_id.clone()).collect()
    }

    /// Applies the running-maximum transform to every trajectory.
    pub fn running_max(&self) -> Self {
        Self {
            trajectories: self.trajectories.iter().map(Trajectory::running_max).collect(),
            covariates: self.covariates.clone(),
        }
    }
}

fn parse_jhu_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%m/%d/%y").ok()
}

fn parse_count(cell: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::data(format!("row {row}, column {col}: '{cell}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::data(format!("row {row}, column {col}: non-finite count")));
    }
    if v < 0.0 {
        return Err(Error::data(format!("row {row}, column {col}: negative count {v}")));
    }
    Ok(v)
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader)
}

fn read_jhu_wide<R: Read>(reader: R) -> Result<Vec<Trajectory>> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 5 {
        return Err(Error::data("jhu_wide file needs Province/State, Country/Region, Lat, Long and date columns"));
    }
    let dates: Vec<NaiveDate> = headers
        .iter()
        .enumerate()
        .skip(4)
        .map(|(col, h)| {
            parse_jhu_date(h).ok_or_else(|| Error::data(format!("header column {}: unparseable date '{h}'", col + 1)))
        })
        .collect::<Result<_>>()?;
    check_consecutive(&dates, "jhu_wide header")?;

    let mut order: Vec<String> = Vec::new();
    let mut sums: HashMap<String, Vec<f64>> = HashMap::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| Error::data(format!("row {row}: {e}")))?;
        let country = record[1].trim().to_string();
        let counts: Vec<f64> = record
            .iter()
            .enumerate()
            .skip(4)
            .map(|(col, cell)| parse_count(cell, row, col + 1))
            .collect::<Result<_>>()?;
        match sums.get_mut(&country) {
            Some(acc) => acc.iter_mut().zip(&counts).for_each(|(a, c)| *a += c),
            None => {
                order.push(country.clone());
                sums.insert(country, counts);
            }
        }
    }
    order
        .into_iter()
        .map(|c| {
            let counts = sums.remove(&c).expect("inserted above");
            Trajectory::new(c, dates[0], counts)
        })
        .collect()
}

fn check_consecutive(dates: &[NaiveDate], what: &str) -> Result<()> {
    for w in dates.windows(2) {
        if w[1] - w[0] != Duration::days(1) {
            return Err(Error::data(format!("{what}: dates {} and {} are not consecutive days", w[0], w[1])));
        }
    }
    Ok(())
}

fn read_long<R: Read>(reader: R) -> Result<Vec<Trajectory>> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["unit_id", "date", "cumulative_count"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
        return Err(Error::data(format!(
            "long format header must be unit_id,date,cumulative_count, got {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(NaiveDate, f64)>> = HashMap::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| Error::data(format!("row {row}: {e}")))?;
        let unit = record[0].trim().to_string();
        let date = NaiveDate::parse_from_str(record[1].trim(), "%Y-%m-%d")
            .map_err(|_| Error::data(format!("row {row}, column 2: unparseable date '{}'", &record[1])))?;
        let count = parse_count(&record[2], row, 3)?;
        rows.entry(unit.clone())
            .or_insert_with(|| {
                order.push(unit);
                Vec::new()
            })
            .push((date, count));
    }
    order
        .into_iter()
        .map(|unit| {
            let mut obs = rows.remove(&unit).expect("inserted above");
            obs.sort_by_key(|(d, _)| *d);
            let dates: Vec<NaiveDate> = obs.iter().map(|(d, _)| *d).collect();
            check_consecutive(&dates, &format!("unit '{unit}'"))?;
            Trajectory::new(unit, dates[0], obs.into_iter().map(|(_, c)| c).collect())
        })
        .collect()
}

pub fn read_trajectories<R: Read>(reader: R, format: TrajectoryFormat) -> Result<Vec<Trajectory>> {
    match format {
        TrajectoryFormat::JhuWide => read_jhu_wide(reader),
        TrajectoryFormat::Long => read_long(reader),
    }
}

pub fn load_trajectories(path: impl AsRef<Path>, format: TrajectoryFormat) -> Result<Vec<Trajectory>> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::data(format!("{}: {e}", path.as_ref().display())))?;
    read_trajectories(file, format)
}

pub fn write_long<W: Write>(writer: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["unit_id", "date", "cumulative_count"])?;
    for t in trajectories {
        for (k, c) in t.counts.iter().enumerate() {
            let date = t.start_date + Duration::days(k as i64);
            w.write_record([t.unit_id.clone(), date.format("%Y-%m-%d").to_string(), c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Covariates as read from disk; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCovariates {
    pub unit_ids: Vec<String>,
    pub names: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

pub fn read_covariates<R: Read>(reader: R) -> Result<RawCovariates> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || headers[0].trim() != "unit_id" {
        return Err(Error::data("covariate file must start with a unit_id column"));
    }
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut unit_ids = Vec::new();
    let mut cells = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 2;
        let record = record.map_err(|e| Error::data(format!("row {row}: {e}")))?;
        let id = record[0].trim().to_string();
        if unit_ids.contains(&id) {
            return Err(Error::data(format!("row {row}: duplicate unit_id '{id}'")));
        }
        let values = record
            .iter()
            .enumerate()
            .skip(1)
            .map(|(col, cell)| {
                if cell.trim().is_empty() {
                    return Ok(None);
                }
                cell.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| Error::data(format!("row {row}, column {}: '{cell}' is not numeric", col + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        unit_ids.push(id);
        cells.push(values);
    }
    Ok(RawCovariates {
        unit_ids,
        names,
        cells,
    })
}

pub fn load_covariates(path: impl AsRef<Path>) -> Result<RawCovariates> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::data(format!("{}: {e}", path.as_ref().display())))?;
    read_covariates(file)
}

/// One imputed cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Imputation {
    pub unit_id: String,
    pub covariate: String,
    pub value: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Imputes missing cells with the column median, then centers each column
/// and scales it to unit Euclidean norm.
pub fn standardize(raw: &RawCovariates) -> Result<(CovariateTable, Vec<Imputation>)> {
    let n = raw.unit_ids.len();
    let p = raw.names.len();
    if n < 2 {
        return Err(Error::data("standardization needs at least two units"));
    }
    let mut imputed = DMatrix::zeros(n, p);
    let mut report = Vec::new();
    for j in 0..p {
        let mut present: Vec<f64> = raw.cells.iter().filter_map(|r| r[j]).collect();
        if present.is_empty() {
            return Err(Error::data(format!("covariate '{}' has no observed values", raw.names[j])));
        }
        let fill = median(&mut present);
        for i in 0..n {
            imputed[(i, j)] = match raw.cells[i][j] {
                Some(v) => v,
                None => {
                    report.push(Imputation {
                        unit_id: raw.unit_ids[i].clone(),
                        covariate: raw.names[j].clone(),
                        value: fill,
                    });
                    fill
                }
            };
        }
    }
    let mut standardized = imputed.clone();
    let mut center = Vec::with_capacity(p);
    let mut scale = Vec::with_capacity(p);
    for j in 0..p {
        let mut col = imputed.column(j).clone_owned();
        if col.iter().all(|v| *v == col[0]) {
            return Err(Error::data(format!("covariate '{}' is constant", raw.names[j])));
        }
        let m = col.mean();
        col.add_scalar_mut(-m);
        // second pass removes rounding left by the first
        let m2 = col.mean();
        col.add_scalar_mut(-m2);
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::data(format!("covariate '{}' cannot be scaled", raw.names[j])));
        }
        col /= norm;
        standardized.set_column(j, &col);
        center.push(m + m2);
        scale.push(norm);
    }
    Ok((
        CovariateTable {
            unit_ids: raw.unit_ids.clone(),
            names: raw.names.clone(),
            raw: imputed,
            standardized,
            center,
            scale,
        },
        report,
    ))
}

/// Number of trailing days held out for testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub d: usize,
}

impl SplitSpec {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::domain("test window must hold at least one day"));
        }
        Ok(Self { d })
    }
}

/// First `T − d` days for training, last `d` for testing.
pub fn train_test_split(y: &Trajectory, s: SplitSpec) -> Result<(Trajectory, Trajectory)> {
    let t = y.len();
    if s.d == 0 || s.d >= t {
        return Err(Error::domain(format!("test window d={} must satisfy 1 <= d < T={t}", s.d)));
    }
    let cut = t - s.d;
    let train = Trajectory {
        unit_id: y.unit_id.clone(),
        start_date: y.start_date,
        counts: y.counts[..cut].to_vec(),
    };
    let test = Trajectory {
        unit_id: y.unit_id.clone(),
        start_date: y.start_date + Duration::days(cut as i64),
        counts: y.counts[cut..].to_vec(),
    };
    Ok((train, test))
}

/// Loads trajectories and (optionally) covariates into a validated panel.
pub fn load_panel(
    trajectories: impl AsRef<Path>,
    format: TrajectoryFormat,
    covariates: Option<&Path>,
    running_max: bool,
) -> Result<(PanelDataset, Vec<Imputation>)> {
    let trajs = load_trajectories(trajectories, format)?;
    let (cov, report) = match covariates {
        Some(path) => {
            let (table, report) = standardize(&load_covariates(path)?)?;
            (Some(table), report)
        }
        None => (None, Vec::new()),
    };
    let panel = PanelDataset::new(trajs, cov)?;
    Ok((if running_max { panel.running_max() } else { panel }, report))
}
