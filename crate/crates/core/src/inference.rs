//! Posterior summaries: credible intervals, forecast bands, flat time
//! points, travel levels, the grand-average curve and covariate rankings.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::curve::{flat_time_point, richards, FlatTimeQuery, RichardsParams};
use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;
use crate::samplers::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleSummary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// Quantile of sorted data by linear interpolation between order
/// statistics, with position `(n − 1)·q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("credible level must lie in (0, 1), got {level}")))
    }
}

/// Sorts in place and summarizes; the mean is taken over the sorted values
/// so the result does not depend on draw order.
fn summarize_in_place(values: &mut [f64], level: f64) -> CredibleSummary {
    values.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    CredibleSummary {
        mean,
        lower: quantile_sorted(values, (1.0 - level) / 2.0),
        upper: quantile_sorted(values, (1.0 + level) / 2.0),
        level,
    }
}

pub fn summarize(draws: &[f64], level: f64) -> Result<CredibleSummary> {
    check_level(level)?;
    if draws.is_empty() {
        return Err(Error::contract("cannot summarize an empty draw set"));
    }
    if let Some(bad) = draws.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("non-finite draw {bad}")));
    }
    Ok(summarize_in_place(&mut draws.to_vec(), level))
}

/// Calendar date of day `t`, where day 1 is `start`.
pub fn day_to_date(start: NaiveDate, t: f64) -> Result<NaiveDate> {
    if !t.is_finite() || t.abs() > 1e6 {
        return Err(Error::domain(format!("day {t} cannot be rendered as a date")));
    }
    Ok(start + Duration::days(t.round() as i64 - 1))
}

/// Pointwise summary of curves over days `1..=times.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastBand {
    pub times: Vec<f64>,
    pub mean_curve: Vec<f64>,
    pub lower_curve: Vec<f64>,
    pub upper_curve: Vec<f64>,
}

impl ForecastBand {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandOptions {
    pub level: f64,
    /// Add `N(0, σ²)` observation noise per draw to the band.
    pub include_noise: bool,
    /// Seed for the noise draws.
    pub seed: u64,
}

impl Default for BandOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            include_noise: false,
            seed: 0,
        }
    }
}

fn band_from_params<'a>(
    params: impl Iterator<Item = (RichardsParams, f64)> + Clone + 'a,
    n_times: usize,
    opts: &BandOptions,
) -> Result<ForecastBand> {
    check_level(opts.level)?;
    let n_draws = params.clone().count();
    if n_draws == 0 {
        return Err(Error::contract("no retained draws"));
    }
    // curves[t][s]
    let mut curves = vec![Vec::with_capacity(n_draws); n_times];
    let mut rng = RandomStream::new(opts.seed);
    for (p, sigma2) in params {
        for (k, column) in curves.iter_mut().enumerate() {
            let mut v = richards((k + 1) as f64, &p)?;
            if opts.include_noise {
                v += rng.normal(0.0, sigma2.sqrt());
            }
            if !v.is_finite() {
                return Err(Error::domain(format!("non-finite curve value at day {} for {p:?}", k + 1)));
            }
            column.push(v);
        }
    }
    let mut band = ForecastBand {
        times: (1..=n_times).map(|t| t as f64).collect(),
        mean_curve: Vec::with_capacity(n_times),
        lower_curve: Vec::with_capacity(n_times),
        upper_curve: Vec::with_capacity(n_times),
    };
    for mut column in curves {
        let s = summarize_in_place(&mut column, opts.level);
        band.mean_curve.push(s.mean);
        band.lower_curve.push(s.lower);
        band.upper_curve.push(s.upper);
    }
    Ok(band)
}

fn unit_checked(draws: &PosteriorDraws, unit: usize) -> Result<()> {
    if unit >= draws.unit_ids.len() {
        return Err(Error::contract(format!(
            "unit index {unit} out of range for {} units",
            draws.unit_ids.len()
        )));
    }
    Ok(())
}

/// Posterior curve band for one unit over days `1..=T + horizon`.
pub fn extrapolate(draws: &PosteriorDraws, unit: usize, horizon: usize, opts: &BandOptions) -> Result<ForecastBand> {
    unit_checked(draws, unit)?;
    let params = draws.draws.iter().map(move |s| (s.curve_params[unit], s.sigma2_obs));
    band_from_params(params, draws.series_len + horizon, opts)
}

/// Posterior mean of the curve on days `from..=to` (1-based) for one unit.
pub fn predictive_mean(draws: &PosteriorDraws, unit: usize, from: usize, to: usize) -> Result<Vec<f64>> {
    unit_checked(draws, unit)?;
    if draws.draws.is_empty() {
        return Err(Error::contract("no retained draws"));
    }
    (from..=to)
        .map(|t| {
            let mut values = draws
                .draws
                .iter()
                .map(|s| richards(t as f64, &s.curve_params[unit]))
                .collect::<Result<Vec<_>>>()?;
            values.sort_by(f64::total_cmp);
            Ok(values.iter().sum::<f64>() / values.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatTimeSummary {
    pub gamma: f64,
    pub days: CredibleSummary,
    pub mean_date: NaiveDate,
    pub lower_date: NaiveDate,
    pub upper_date: NaiveDate,
}

pub fn flat_time_summary(
    draws: &PosteriorDraws,
    unit: usize,
    gamma: f64,
    level: f64,
    start_date: NaiveDate,
) -> Result<FlatTimeSummary> {
    unit_checked(draws, unit)?;
    let q = FlatTimeQuery::new(gamma)?;
    let times = draws
        .draws
        .iter()
        .map(|s| flat_time_point(&s.curve_params[unit], q))
        .collect::<Result<Vec<_>>>()?;
    let days = summarize(&times, level)?;
    Ok(FlatTimeSummary {
        gamma,
        days,
        mean_date: day_to_date(start_date, days.mean)?,
        lower_date: day_to_date(start_date, days.lower)?,
        upper_date: day_to_date(start_date, days.upper)?,
    })
}

/// Travel-alert level from the posterior mean final size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TravelLevel {
    /// At most 10,000 cases.
    Level1,
    /// More than 10,000 and at most 100,000 cases.
    Level2,
    /// More than 100,000 cases.
    Level3,
}

impl TravelLevel {
    pub fn number(&self) -> u8 {
        match self {
            Self::Level1 => 1,
            Self::Level2 => 2,
            Self::Level3 => 3,
        }
    }
}

pub fn classify(theta1_posterior_mean: f64) -> Result<TravelLevel> {
    let x = theta1_posterior_mean;
    if x.is_nan() {
        return Err(Error::domain("cannot classify NaN"));
    }
    Ok(if x <= 10_000.0 {
        TravelLevel::Level1
    } else if x <= 100_000.0 {
        TravelLevel::Level2
    } else {
        TravelLevel::Level3
    })
}

/// Which ξ the grand-average curve uses for each draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrandAverageXi {
    /// Geometric mean of the draw's unit-level ξ values.
    GeometricMean,
    Fixed { xi: f64 },
}

/// Band of the curve built from the intercepts `(α_1, α_2, α_3)` of each
/// draw, over days `1..=T + horizon`.
pub fn grand_average_curve(
    draws: &PosteriorDraws,
    horizon: usize,
    xi: GrandAverageXi,
    opts: &BandOptions,
) -> Result<ForecastBand> {
    if let GrandAverageXi::Fixed { xi } = xi {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::domain(format!("grand-average shape must be positive, got {xi}")));
        }
    }
    let params = draws.draws.iter().map(move |s| {
        let shape = match xi {
            GrandAverageXi::GeometricMean => {
                let n = s.curve_params.len() as f64;
                (s.curve_params.iter().map(|p| p.xi.ln()).sum::<f64>() / n).exp()
            }
            GrandAverageXi::Fixed { xi } => xi,
        };
        let p = RichardsParams {
            theta1: s.blocks[0].alpha,
            theta2: s.blocks[1].alpha,
            theta3: s.blocks[2].alpha,
            xi: shape,
        };
        (p, s.sigma2_obs)
    });
    band_from_params(params, draws.series_len + horizon, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCovariate {
    /// Column index in the design matrix.
    pub index: usize,
    pub name: String,
    pub posterior_mean: f64,
}

/// Top `k` coefficients of curve parameter `l` (1, 2 or 3) by absolute
/// posterior mean; ties go to the lower column index.
pub fn rank_covariates(draws: &PosteriorDraws, l: usize, k: usize) -> Result<Vec<RankedCovariate>> {
    if !(1..=3).contains(&l) {
        return Err(Error::domain(format!("curve parameter index must be 1, 2 or 3, got {l}")));
    }
    let p = draws.covariate_names.len();
    if p == 0 {
        return Err(Error::contract("these draws have no covariates"));
    }
    if draws.draws.is_empty() {
        return Err(Error::contract("no retained draws"));
    }
    let mut ranked: Vec<RankedCovariate> = (0..p)
        .map(|j| {
            let mut values: Vec<f64> = draws.draws.iter().map(|s| s.blocks[l - 1].beta[j]).collect();
            values.sort_by(f64::total_cmp);
            RankedCovariate {
                index: j,
                name: draws.covariate_names[j].clone(),
                posterior_mean: values.iter().sum::<f64>() / values.len() as f64,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.posterior_mean
            .abs()
            .total_cmp(&a.posterior_mean.abs())
            .then(a.index.cmp(&b.index))
    });
    ranked.truncate(k);
    Ok(ranked)
}

/// Summary of every scalar in layout order.
pub fn parameter_summaries(draws: &PosteriorDraws, level: f64) -> Result<Vec<(String, CredibleSummary)>> {
    check_level(level)?;
    let layout = draws.layout();
    let names = layout.names();
    let mut columns = vec![Vec::with_capacity(draws.draws.len()); names.len()];
    for s in &draws.draws {
        for (k, v) in layout.flatten(s).into_iter().enumerate() {
            columns[k].push(v);
        }
    }
    names
        .into_iter()
        .zip(columns)
        .map(|(n, c)| summarize(&c, level).map(|s| (n, s)))
        .collect()
}

/// Units with at least one retained θ1 at or below the largest observed
/// count.
pub fn theta1_below_observed(draws: &PosteriorDraws) -> Vec<String> {
    draws
        .unit_ids
        .iter()
        .enumerate()
        .filter(|(i, _)| draws.draws.iter().any(|s| s.curve_params[*i].theta1 <= draws.max_observed[*i]))
        .map(|(_, u)| {
            format!("unit '{u}': some retained theta1 draws do not exceed the largest observed count")
        })
        .collect()
}
