//! Domain types for the hierarchical Richards model and exact log-density
//! evaluators for the likelihood and the joint posterior kernel.
//!
//! Observation model: `y_it = f(t; θ1i, θ2i, θ3i, ξi) + ε_it`,
//! `ε_it ~ N(0, σ²)`, with days `t = 1..T`. Each curve parameter follows its
//! own regression `θ_li = α_l + x_iᵀβ_l + ε_li`, `ε_li ~ N(0, σ_l²)`, with a
//! horseshoe prior on `β_l`. Shapes are `ξ_i ~ LogNormal(0, 1)`.

use std::f64::consts::PI;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::curve::{log_basis_with_ln_xi, RichardsParams};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Cumulative count series of one unit, days `t = 1..T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub unit_id: String,
    pub start_date: NaiveDate,
    pub counts: Vec<f64>,
}

impl Trajectory {
    pub fn new(unit_id: impl Into<String>, start_date: NaiveDate, counts: Vec<f64>) -> Result<Self> {
        let t = Self {
            unit_id: unit_id.into(),
            start_date,
            counts,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.is_empty() {
            return Err(Error::data(format!("trajectory '{}' is empty", self.unit_id)));
        }
        if let Some((i, v)) = self
            .counts
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::data(format!(
                "trajectory '{}' has invalid count {v} at day {}",
                self.unit_id,
                i + 1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Replaces each count by the running maximum up to that day.
    pub fn running_max(&self) -> Self {
        let mut best = f64::NEG_INFINITY;
        let counts = self
            .counts
            .iter()
            .map(|&c| {
                best = best.max(c);
                best
            })
            .collect();
        Self {
            counts,
            ..self.clone()
        }
    }

    pub fn max_count(&self) -> f64 {
        self.counts.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Unit-level covariates, raw (after imputation) and standardized to
/// zero-mean, unit-Euclidean-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub unit_ids: Vec<String>,
    pub names: Vec<String>,
    pub raw: DMatrix<f64>,
    pub standardized: DMatrix<f64>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl CovariateTable {
    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.names.len()
    }

    /// Rows reordered to follow `unit_ids`.
    pub fn aligned_to(&self, unit_ids: &[String]) -> Result<Self> {
        if unit_ids.len() != self.unit_ids.len() {
            return Err(Error::data(format!(
                "covariate table has {} units, trajectories have {}",
                self.unit_ids.len(),
                unit_ids.len()
            )));
        }
        let mut order = Vec::with_capacity(unit_ids.len());
        for id in unit_ids {
            let row = self
                .unit_ids
                .iter()
                .position(|u| u.trim() == id.trim())
                .ok_or_else(|| Error::data(format!("no covariates for unit '{id}'")))?;
            order.push(row);
        }
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(order[i], j)]);
        Ok(Self {
            unit_ids: order.iter().map(|&r| self.unit_ids[r].clone()).collect(),
            names: self.names.clone(),
            raw: pick(&self.raw),
            standardized: pick(&self.standardized),
            center: self.center.clone(),
            scale: self.scale.clone(),
        })
    }
}

/// Regression state for one curve parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionBlock {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub tau: f64,
    pub sigma2: f64,
}

impl RegressionBlock {
    /// Block with `p` covariates: `β = 0`, `λ = τ = 1`.
    pub fn new(alpha: f64, sigma2: f64, p: usize) -> Self {
        Self {
            alpha,
            beta: vec![0.0; p],
            lambda: vec![1.0; p],
            tau: 1.0,
            sigma2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.beta.iter().all(|b| b.is_finite())) {
            return Err(Error::domain("non-finite regression coefficients"));
        }
        if self.beta.len() != self.lambda.len() {
            return Err(Error::contract("beta and lambda lengths differ"));
        }
        if !self.lambda.iter().all(|l| l.is_finite() && *l > 0.0) {
            return Err(Error::domain("local scales must be positive"));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::domain(format!("global scale must be positive, got {}", self.tau)));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::domain(format!(
                "regression variance must be positive, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    /// `Λ*⁻¹` diagonal: `1 / (τ² λ_j²)`.
    pub fn prior_precision_diag(&self) -> Vec<f64> {
        let tau2 = self.tau * self.tau;
        self.lambda.iter().map(|l| 1.0 / (tau2 * l * l)).collect()
    }
}

/// Full parameter state of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub curve_params: Vec<RichardsParams>,
    pub sigma2_obs: f64,
    pub blocks: [RegressionBlock; 3],
}

impl ChainState {
    pub fn n_units(&self) -> usize {
        self.curve_params.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.blocks[0].beta.len()
    }

    /// The `l`-th curve parameter (0-based: θ1, θ2, θ3) across units.
    pub fn theta(&self, l: usize) -> Vec<f64> {
        self.curve_params.iter().map(|p| theta_of(p, l)).collect()
    }

    pub fn set_theta(&mut self, l: usize, i: usize, value: f64) {
        let p = &mut self.curve_params[i];
        match l {
            0 => p.theta1 = value,
            1 => p.theta2 = value,
            2 => p.theta3 = value,
            _ => panic!("curve parameter index {l} out of range"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.curve_params.is_empty() {
            return Err(Error::contract("state has no units"));
        }
        for p in &self.curve_params {
            p.validate()?;
        }
        if !(self.sigma2_obs.is_finite() && self.sigma2_obs > 0.0) {
            return Err(Error::domain(format!(
                "observation variance must be positive, got {}",
                self.sigma2_obs
            )));
        }
        let p = self.n_covariates();
        for b in &self.blocks {
            b.validate()?;
            if b.beta.len() != p {
                return Err(Error::contract("regression blocks disagree on covariate count"));
            }
        }
        Ok(())
    }
}

pub(crate) fn theta_of(p: &RichardsParams, l: usize) -> f64 {
    match l {
        0 => p.theta1,
        1 => p.theta2,
        2 => p.theta3,
        _ => panic!("curve parameter index {l} out of range"),
    }
}

/// Which of the three compared models to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum ModelSpec {
    /// Single-unit, non-hierarchical model for the unit at this index.
    M1 { unit: usize },
    /// Hierarchical model without covariates.
    M2,
    /// Full hierarchical model with horseshoe-regularized covariates.
    M3,
}

impl ModelSpec {
    pub fn uses_covariates(&self) -> bool {
        matches!(self, ModelSpec::M3)
    }

    pub fn label(&self) -> &'static str {
        match self {
            ModelSpec::M1 { .. } => "m1",
            ModelSpec::M2 => "m2",
            ModelSpec::M3 => "m3",
        }
    }
}

/// Prior on a variance parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariancePrior {
    /// Improper `π(v) ∝ 1/v`.
    Jeffreys,
    /// Improper `π(v) ∝ v^{-1/2}`, i.e. flat on the standard deviation.
    UniformScale,
    InverseGamma { shape: f64, rate: f64 },
}

impl VariancePrior {
    pub fn log_density(&self, v: f64) -> f64 {
        match *self {
            VariancePrior::Jeffreys => -v.ln(),
            VariancePrior::UniformScale => -0.5 * v.ln(),
            VariancePrior::InverseGamma { shape, rate } => {
                shape * rate.ln() - ln_gamma(shape) - (shape + 1.0) * v.ln() - rate / v
            }
        }
    }

    /// Hyperparameters added to a conjugate inverse-gamma update.
    pub(crate) fn conjugate_offsets(&self) -> (f64, f64) {
        match *self {
            VariancePrior::Jeffreys => (0.0, 0.0),
            VariancePrior::UniformScale => (-0.5, 0.0),
            VariancePrior::InverseGamma { shape, rate } => (shape, rate),
        }
    }
}

/// Prior on a regression intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterceptPrior {
    /// Improper `π(α) ∝ 1`.
    Flat,
    Normal { mean: f64, variance: f64 },
}

impl InterceptPrior {
    pub fn log_density(&self, a: f64) -> f64 {
        match *self {
            InterceptPrior::Flat => 0.0,
            InterceptPrior::Normal { mean, variance } => log_normal_pdf(a, mean, variance),
        }
    }
}

/// Priors on the top-level variances and intercepts. The default is the
/// improper specification used for fitting; proper priors exist for
/// simulation-based checks that need a generative joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Priors {
    pub obs_variance: VariancePrior,
    pub regression_variance: VariancePrior,
    pub intercept: InterceptPrior,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            obs_variance: VariancePrior::Jeffreys,
            regression_variance: VariancePrior::Jeffreys,
            intercept: InterceptPrior::Flat,
        }
    }
}

impl Priors {
    pub fn proper(variance_shape: f64, variance_rate: f64, intercept_variance: f64) -> Self {
        let v = VariancePrior::InverseGamma {
            shape: variance_shape,
            rate: variance_rate,
        };
        Self {
            obs_variance: v,
            regression_variance: v,
            intercept: InterceptPrior::Normal {
                mean: 0.0,
                variance: intercept_variance,
            },
        }
    }
}

/// Observations and (standardized) design matrix as seen by the sampler.
/// Series `i` is observed on days `1..=series[i].len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub series: Vec<Vec<f64>>,
    pub design: Option<DMatrix<f64>>,
    pub unit_ids: Vec<String>,
    pub covariate_names: Vec<String>,
}

impl ModelData {
    pub fn new(series: Vec<Vec<f64>>, design: Option<DMatrix<f64>>) -> Result<Self> {
        if series.is_empty() || series.iter().any(|s| s.is_empty()) {
            return Err(Error::contract("model data needs at least one non-empty series"));
        }
        if let Some(x) = &design {
            if x.nrows() != series.len() {
                return Err(Error::contract(format!(
                    "design has {} rows for {} series",
                    x.nrows(),
                    series.len()
                )));
            }
        }
        let unit_ids = (0..series.len()).map(|i| format!("unit{i}")).collect();
        let covariate_names = (0..design.as_ref().map_or(0, |x| x.ncols()))
            .map(|j| format!("x{j}"))
            .collect();
        Ok(Self {
            series,
            design,
            unit_ids,
            covariate_names,
        })
    }

    pub fn with_labels(mut self, unit_ids: Vec<String>, covariate_names: Vec<String>) -> Result<Self> {
        if unit_ids.len() != self.n_units() || covariate_names.len() != self.n_covariates() {
            return Err(Error::contract("label counts do not match the data"));
        }
        self.unit_ids = unit_ids;
        self.covariate_names = covariate_names;
        Ok(self)
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.unit_ids.clone(), self.n_covariates())
    }

    /// Builds the data a given model variant sees: one series for M1, all
    /// series for M2, series plus standardized design for M3.
    pub fn for_spec(
        trajectories: &[Trajectory],
        covariates: Option<&CovariateTable>,
        spec: &ModelSpec,
    ) -> Result<Self> {
        match *spec {
            ModelSpec::M1 { unit } => {
                let t = trajectories
                    .get(unit)
                    .ok_or_else(|| Error::contract(format!("unit index {unit} out of range")))?;
                Self::new(vec![t.counts.clone()], None)?.with_labels(vec![t.unit_id.clone()], vec![])
            }
            ModelSpec::M2 => Self::new(trajectories.iter().map(|t| t.counts.clone()).collect(), None)?
                .with_labels(trajectories.iter().map(|t| t.unit_id.clone()).collect(), vec![]),
            ModelSpec::M3 => {
                let cov = covariates
                    .ok_or_else(|| Error::Config("model m3 requires a covariate table".into()))?;
                let ids: Vec<String> = trajectories.iter().map(|t| t.unit_id.clone()).collect();
                let aligned = cov.aligned_to(&ids)?;
                Self::new(
                    trajectories.iter().map(|t| t.counts.clone()).collect(),
                    Some(aligned.standardized),
                )?
                .with_labels(ids, aligned.names)
            }
        }
    }

    pub fn n_units(&self) -> usize {
        self.series.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.design.as_ref().map_or(0, |x| x.ncols())
    }

    pub fn total_observations(&self) -> usize {
        self.series.iter().map(Vec::len).sum()
    }

    /// `α_l + x_iᵀβ_l` for every unit (just `α_l` without covariates).
    pub fn regression_mean(&self, block: &RegressionBlock) -> Vec<f64> {
        (0..self.n_units()).map(|i| self.regression_mean_at(block, i)).collect()
    }

    pub fn regression_mean_at(&self, block: &RegressionBlock, i: usize) -> f64 {
        match &self.design {
            Some(x) if !block.beta.is_empty() => {
                block.alpha
                    + block
                        .beta
                        .iter()
                        .enumerate()
                        .map(|(j, b)| x[(i, j)] * b)
                        .sum::<f64>()
            }
            _ => block.alpha,
        }
    }

    fn check_state(&self, state: &ChainState, spec: &ModelSpec) -> Result<()> {
        if state.n_units() != self.n_units() {
            return Err(Error::contract(format!(
                "state has {} units, data has {}",
                state.n_units(),
                self.n_units()
            )));
        }
        match spec {
            ModelSpec::M1 { .. } if self.n_units() != 1 => {
                Err(Error::contract("model m1 expects exactly one series"))
            }
            ModelSpec::M3 => {
                if self.design.is_none() {
                    return Err(Error::contract("model m3 needs a design matrix"));
                }
                if state.n_covariates() != self.n_covariates() {
                    return Err(Error::contract(format!(
                        "state has {} coefficients, design has {} columns",
                        state.n_covariates(),
                        self.n_covariates()
                    )));
                }
                Ok(())
            }
            ModelSpec::M1 { .. } | ModelSpec::M2 => {
                if state.n_covariates() != 0 {
                    return Err(Error::contract(format!(
                        "model {} carries no coefficients",
                        spec.label()
                    )));
                }
                Ok(())
            }
        }
    }
}

pub fn log_normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + variance.ln()) - d * d / (2.0 * variance)
}

/// `log LogNormal(x | 0, 1)`.
pub fn log_lognormal_std(x: f64) -> f64 {
    let l = x.ln();
    -l - 0.5 * LN_2PI - 0.5 * l * l
}

/// Unnormalized half-Cauchy(0, 1) kernel `1/(1+x²)` on the log scale.
pub fn log_half_cauchy_kernel(x: f64) -> f64 {
    -(x * x).ln_1p()
}

/// `‖y − f(p)‖²` over days `1..=y.len()`.
pub fn sum_sq_residuals(y: &[f64], p: &RichardsParams) -> f64 {
    let ln_xi = p.xi.ln();
    y.iter()
        .enumerate()
        .map(|(k, &obs)| {
            let t = (k + 1) as f64;
            let r = obs - p.theta1 * log_basis_with_ln_xi(t, p.theta2, p.theta3, p.xi, ln_xi).exp();
            r * r
        })
        .sum()
}

/// Gaussian log-likelihood of one trajectory under the curve `p`.
pub fn log_likelihood_unit(y: &Trajectory, p: &RichardsParams, sigma2: f64) -> Result<f64> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::domain(format!("observation variance must be positive, got {sigma2}")));
    }
    p.validate()?;
    Ok(log_likelihood_series(&y.counts, p, sigma2))
}

pub(crate) fn log_likelihood_series(y: &[f64], p: &RichardsParams, sigma2: f64) -> f64 {
    let n = y.len() as f64;
    -0.5 * n * (2.0 * PI * sigma2).ln() - sum_sq_residuals(y, p) / (2.0 * sigma2)
}

/// Per-factor decomposition of the joint log-density. Summing the fields
/// gives [`log_joint`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct JointTerms {
    pub likelihood: f64,
    pub theta_regression: f64,
    pub beta_prior: f64,
    pub lambda_prior: f64,
    pub tau_prior: f64,
    pub regression_variance_prior: f64,
    pub intercept_prior: f64,
    pub xi_prior: f64,
    pub obs_variance_prior: f64,
}

impl JointTerms {
    pub fn total(&self) -> f64 {
        self.likelihood
            + self.theta_regression
            + self.beta_prior
            + self.lambda_prior
            + self.tau_prior
            + self.regression_variance_prior
            + self.intercept_prior
            + self.xi_prior
            + self.obs_variance_prior
    }
}

/// Factor-by-factor joint log-density (up to the omitted half-Cauchy
/// normalizing constants).
pub fn joint_terms(
    state: &ChainState,
    data: &ModelData,
    spec: &ModelSpec,
    priors: &Priors,
) -> Result<JointTerms> {
    data.check_state(state, spec)?;
    state.validate()?;
    let mut terms = JointTerms::default();
    for (y, p) in data.series.iter().zip(&state.curve_params) {
        terms.likelihood += log_likelihood_series(y, p, state.sigma2_obs);
        terms.xi_prior += log_lognormal_std(p.xi);
    }
    terms.obs_variance_prior = priors.obs_variance.log_density(state.sigma2_obs);
    for (l, block) in state.blocks.iter().enumerate() {
        for (i, p) in state.curve_params.iter().enumerate() {
            let mean = data.regression_mean_at(block, i);
            terms.theta_regression += log_normal_pdf(theta_of(p, l), mean, block.sigma2);
        }
        if spec.uses_covariates() {
            let tau2 = block.tau * block.tau;
            for (b, lam) in block.beta.iter().zip(&block.lambda) {
                terms.beta_prior += log_normal_pdf(*b, 0.0, block.sigma2 * tau2 * lam * lam);
                terms.lambda_prior += log_half_cauchy_kernel(*lam);
            }
            terms.tau_prior += log_half_cauchy_kernel(block.tau);
        }
        terms.regression_variance_prior += priors.regression_variance.log_density(block.sigma2);
        terms.intercept_prior += priors.intercept.log_density(block.alpha);
    }
    Ok(terms)
}

/// Log of the unnormalized joint posterior.
pub fn log_joint(state: &ChainState, data: &ModelData, spec: &ModelSpec, priors: &Priors) -> Result<f64> {
    joint_terms(state, data, spec, priors).map(|t| t.total())
}

/// Names of the curve parameters, indexed like the regression blocks.
pub const CURVE_PARAM_NAMES: [&str; 3] = ["theta1", "theta2", "theta3"];

/// Fixed flattening of a [`ChainState`] into named scalars.
///
/// Order: per unit `theta1, theta2, theta3, xi`; then `sigma2`; then per
/// block `alpha, sigma2` followed, when covariates are present, by `tau`,
/// every `beta/j` and every `lambda/j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    pub unit_ids: Vec<String>,
    pub n_covariates: usize,
}

impl StateLayout {
    pub fn new(unit_ids: Vec<String>, n_covariates: usize) -> Self {
        Self {
            unit_ids,
            n_covariates,
        }
    }

    pub fn len(&self) -> usize {
        let per_block = 2 + if self.n_covariates > 0 { 1 + 2 * self.n_covariates } else { 0 };
        4 * self.unit_ids.len() + 1 + 3 * per_block
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.len());
        for u in &self.unit_ids {
            for param in ["theta1", "theta2", "theta3", "xi"] {
                names.push(format!("{u}/{param}"));
            }
        }
        names.push("sigma2".to_string());
        for block in CURVE_PARAM_NAMES {
            names.push(format!("{block}/alpha"));
            names.push(format!("{block}/sigma2"));
            if self.n_covariates > 0 {
                names.push(format!("{block}/tau"));
                names.extend((0..self.n_covariates).map(|j| format!("{block}/beta/{j}")));
                names.extend((0..self.n_covariates).map(|j| format!("{block}/lambda/{j}")));
            }
        }
        names
    }

    pub fn flatten(&self, state: &ChainState) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for p in &state.curve_params {
            out.extend([p.theta1, p.theta2, p.theta3, p.xi]);
        }
        out.push(state.sigma2_obs);
        for b in &state.blocks {
            out.push(b.alpha);
            out.push(b.sigma2);
            if self.n_covariates > 0 {
                out.push(b.tau);
                out.extend(&b.beta);
                out.extend(&b.lambda);
            }
        }
        out
    }

    pub fn unflatten(&self, values: &[f64]) -> Result<ChainState> {
        if values.len() != self.len() {
            return Err(Error::contract(format!(
                "expected {} scalars, got {}",
                self.len(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        let mut next = || it.next().expect("length checked");
        let curve_params = (0..self.unit_ids.len())
            .map(|_| RichardsParams {
                theta1: next(),
                theta2: next(),
                theta3: next(),
                xi: next(),
            })
            .collect();
        let sigma2_obs = next();
        let p = self.n_covariates;
        let mut block = || {
            let alpha = next();
            let sigma2 = next();
            let mut b = RegressionBlock::new(alpha, sigma2, p);
            if p > 0 {
                b.tau = next();
                b.beta = (0..p).map(|_| next()).collect();
                b.lambda = (0..p).map(|_| next()).collect();
            }
            b
        };
        let blocks = [block(), block(), block()];
        let state = ChainState {
            curve_params,
            sigma2_obs,
            blocks,
        };
        state.validate()?;
        Ok(state)
    }
}
