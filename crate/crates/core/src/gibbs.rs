//! Metropolis-within-Gibbs sampler for the hierarchical Richards model.
//!
//! One sweep updates, in order: θ1 (exact Gaussian), θ2 and θ3 (random-walk
//! Metropolis), ξ (elliptical slice on log ξ), σ² (inverse gamma), α
//! (Gaussian), β (Gaussian), λ and τ (slice on the log scale) and σ_l²
//! (inverse gamma). Covariate steps only run for M3.
//!
//! After the ξ step each unit also gets a few joint random-walk moves on
//! `(θ1, θ2, θ3, log ξ)`. Their proposal covariance follows the local
//! Gauss–Newton curvature, refreshed during burn-in and frozen afterwards.
//! Set `curve_block_moves` to 0 to run the coordinatewise updates alone.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::RichardsParams;
use crate::diagnostics::{bulk_ess, split_rhat};
use crate::error::{Error, Result};
use crate::model::{
    sum_sq_residuals, theta_of, ChainState, InterceptPrior, ModelData, ModelSpec, Priors, RegressionBlock,
    StateLayout,
};
use crate::samplers::{
    draw_inverse_gamma, ess_step, metropolis_step, slice_step, MetropolisControl, RandomStream,
};

/// Rate floor for σ² when the residual sum is exactly zero.
const RATE_GUARD: f64 = 1e-12;
const CONDITION_LIMIT: f64 = 1e12;
const JITTER: f64 = 1e-10;
/// Burn-in sweeps between curvature refreshes of the joint curve proposal.
const CURVE_BLOCK_REFRESH: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub theta2_proposal_sd: f64,
    pub theta3_proposal_sd: f64,
    /// Adapt Metropolis scales during burn-in.
    pub adapt: bool,
    pub target_acceptance: f64,
    /// Initial slice width for log λ and log τ.
    pub slice_width: f64,
    /// Joint `(θ1, θ2, θ3, log ξ)` Metropolis moves per unit per sweep.
    pub curve_block_moves: usize,
    pub priors: Priors,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            sweeps: 20_000,
            burn_in: 10_000,
            thin: 10,
            chains: 4,
            seed: 1,
            theta2_proposal_sd: 0.02,
            theta3_proposal_sd: 1.0,
            adapt: true,
            target_acceptance: 0.3,
            slice_width: 1.0,
            curve_block_moves: 5,
            priors: Priors::default(),
        }
    }
}

impl SamplerConfig {
    /// Short settings for interactive use: 2000 sweeps, 1000 burn-in, 2 chains.
    pub fn desk() -> Self {
        Self {
            sweeps: 2000,
            burn_in: 1000,
            thin: 1,
            chains: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.sweeps == 0 {
            return fail("sweeps must be positive".into());
        }
        if self.burn_in >= self.sweeps {
            return fail(format!("burn_in ({}) must be below sweeps ({})", self.burn_in, self.sweeps));
        }
        if self.thin == 0 {
            return fail("thin must be at least 1".into());
        }
        if self.chains == 0 {
            return fail("chains must be positive".into());
        }
        if !(self.slice_width.is_finite() && self.slice_width > 0.0) {
            return fail(format!("slice_width must be positive, got {}", self.slice_width));
        }
        MetropolisControl::new(self.theta2_proposal_sd, self.adapt, self.target_acceptance)
            .and(MetropolisControl::new(self.theta3_proposal_sd, self.adapt, self.target_acceptance))
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Number of states kept per chain.
    pub fn retained_per_chain(&self) -> usize {
        (self.sweeps - self.burn_in) / self.thin
    }
}

/// Prior the curve steps place on `θ_{1:3}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvePrior {
    /// `θ_li ~ N(α_l + x_iᵀβ_l, σ_l²)`.
    Hierarchical,
    /// Flat. A single series with a flat intercept prior has `α_l`
    /// integrated out, which leaves `θ_li` flat. `α_l` and `σ_l²` have no
    /// proper posterior then and stay at their starting values.
    Flat,
}

impl CurvePrior {
    pub fn for_model(spec: &ModelSpec, priors: &Priors) -> Self {
        match (spec, priors.intercept) {
            (ModelSpec::M1 { .. }, InterceptPrior::Flat) => Self::Flat,
            _ => Self::Hierarchical,
        }
    }

    /// Prior mean and variance of `θ_li`, or `None` when flat.
    fn moments(&self, state: &ChainState, data: &ModelData, l: usize, i: usize) -> Option<(f64, f64)> {
        match self {
            Self::Hierarchical => {
                let block = &state.blocks[l];
                Some((data.regression_mean_at(block, i), block.sigma2))
            }
            Self::Flat => None,
        }
    }

    fn log_density(&self, state: &ChainState, data: &ModelData, l: usize, i: usize, value: f64) -> f64 {
        self.moments(state, data, l, i)
            .map_or(0.0, |(m, v)| -(value - m) * (value - m) / (2.0 * v))
    }
}

/// Random-walk proposal for one unit's joint `(θ1, θ2, θ3, log ξ)` move.
#[derive(Debug, Clone)]
pub struct CurveBlockProposal {
    /// Lower Cholesky factor of the unscaled proposal covariance.
    chol: Matrix4<f64>,
    log_scale: f64,
    steps: usize,
    adapt: bool,
    target: f64,
}

impl CurveBlockProposal {
    fn new(adapt: bool) -> Self {
        Self {
            chol: Matrix4::from_diagonal(&Vector4::new(1.0, 0.01, 1.0, 0.1)),
            log_scale: (2.38f64 / 2.0).ln(),
            steps: 0,
            adapt,
            target: 0.25,
        }
    }

    /// Resets the shape to the inverse Gauss–Newton precision at `state`.
    fn refresh(&mut self, state: &ChainState, data: &ModelData, prior: CurvePrior, i: usize) {
        let precision = curve_block_precision(state, data, prior, i);
        if let Some(cov) = precision.try_inverse() {
            let cov = (cov + cov.transpose()) * 0.5;
            if let Some(c) = cov.cholesky() {
                if c.l().iter().all(|v| v.is_finite()) {
                    self.chol = c.l();
                }
            }
        }
    }

    fn record(&mut self, accepted: bool) {
        if !self.adapt {
            return;
        }
        self.steps += 1;
        let gain = (self.steps as f64).powf(-0.6);
        self.log_scale += gain * (f64::from(u8::from(accepted)) - self.target);
    }

    fn freeze(&mut self) {
        self.adapt = false;
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Gauss–Newton precision of unit `i`'s `(θ1, θ2, θ3, log ξ)` conditional.
fn curve_block_precision(state: &ChainState, data: &ModelData, prior: CurvePrior, i: usize) -> Matrix4<f64> {
    let p = &state.curve_params[i];
    let ln_xi = p.xi.ln();
    let mut jtj = Matrix4::zeros();
    for k in 0..data.series[i].len() {
        let t = (k + 1) as f64;
        let b = crate::curve::log_basis_with_ln_xi(t, p.theta2, p.theta3, p.xi, ln_xi).exp();
        let z = -p.theta2 * (t - p.theta3) + ln_xi;
        let w = 1.0 / (1.0 + (-z).exp());
        let f = p.theta1 * b;
        let g = Vector4::new(
            b,
            f * (t - p.theta3) * w / p.xi,
            -f * p.theta2 * w / p.xi,
            f * (softplus(z) - w) / p.xi,
        );
        if g.iter().all(|v| v.is_finite()) {
            jtj += g * g.transpose();
        }
    }
    let mut precision = jtj / state.sigma2_obs;
    for l in 0..3 {
        match prior.moments(state, data, l, i) {
            Some((_, v)) => precision[(l, l)] += 1.0 / v,
            None => precision[(l, l)] += 1e-12 * (1.0 + precision[(l, l)]),
        }
    }
    // log ξ has a standard normal prior
    precision[(3, 3)] += 1.0;
    precision
}

/// Log conditional kernel of unit `i`'s `(θ1, θ2, θ3, η = log ξ)`.
pub fn curve_block_log_target(
    state: &ChainState,
    data: &ModelData,
    prior: CurvePrior,
    i: usize,
    z: &[f64; 4],
) -> f64 {
    let xi = z[3].exp();
    if !(xi > 0.0 && xi.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let p = RichardsParams {
        theta1: z[0],
        theta2: z[1],
        theta3: z[2],
        xi,
    };
    let mut lp = -sum_sq_residuals(&data.series[i], &p) / (2.0 * state.sigma2_obs) - 0.5 * z[3] * z[3];
    for (l, v) in z.iter().take(3).enumerate() {
        lp += prior.log_density(state, data, l, i, *v);
    }
    lp
}

/// `moves` joint Metropolis steps for every unit; returns accepted counts.
pub fn sample_curve_block(
    state: &mut ChainState,
    data: &ModelData,
    ctx: &mut SweepContext,
    moves: usize,
    rng: &mut RandomStream,
) -> Result<Vec<usize>> {
    check_variances(state)?;
    let prior = ctx.curve_prior;
    let mut accepted = vec![0; state.n_units()];
    for (i, count) in accepted.iter_mut().enumerate() {
        let p = state.curve_params[i];
        let mut z = [p.theta1, p.theta2, p.theta3, p.xi.ln()];
        let mut lp = curve_block_log_target(state, data, prior, i, &z);
        if lp.is_nan() {
            return Err(Error::Kernel(format!("curve block: log target is NaN at {z:?}")));
        }
        for _ in 0..moves {
            let proposal_ctl = &ctx.curve_block[i];
            let e = Vector4::from_fn(|_, _| rng.std_normal());
            let step = proposal_ctl.chol * e * proposal_ctl.log_scale.exp();
            let cand = [z[0] + step[0], z[1] + step[1], z[2] + step[2], z[3] + step[3]];
            let lc = curve_block_log_target(state, data, prior, i, &cand);
            let ok = !lc.is_nan() && rng.uniform_positive().ln() < lc - lp;
            if ok {
                z = cand;
                lp = lc;
                *count += 1;
            }
            ctx.curve_block[i].record(ok);
        }
        state.curve_params[i] = RichardsParams {
            theta1: z[0],
            theta2: z[1],
            theta3: z[2],
            xi: z[3].exp(),
        };
    }
    Ok(accepted)
}

/// Mutable per-chain kernel settings carried across sweeps.
#[derive(Debug, Clone)]
pub struct SweepContext {
    pub priors: Priors,
    pub curve_prior: CurvePrior,
    pub theta2: Vec<MetropolisControl>,
    pub theta3: Vec<MetropolisControl>,
    pub curve_block: Vec<CurveBlockProposal>,
    pub curve_block_moves: usize,
    pub slice_width: f64,
    /// Times the β system exceeded the condition limit and was jittered.
    pub ill_conditioned: usize,
}

impl SweepContext {
    pub fn new(n_units: usize, spec: &ModelSpec, config: &SamplerConfig) -> Result<Self> {
        let c2 = MetropolisControl::new(config.theta2_proposal_sd, config.adapt, config.target_acceptance)?;
        let c3 = MetropolisControl::new(config.theta3_proposal_sd, config.adapt, config.target_acceptance)?;
        Ok(Self {
            priors: config.priors,
            curve_prior: CurvePrior::for_model(spec, &config.priors),
            theta2: vec![c2; n_units],
            theta3: vec![c3; n_units],
            curve_block: vec![CurveBlockProposal::new(config.adapt); n_units],
            curve_block_moves: config.curve_block_moves,
            slice_width: config.slice_width,
            ill_conditioned: 0,
        })
    }

    /// Re-fits every joint curve proposal to the local curvature at `state`.
    pub fn refresh_curve_block(&mut self, state: &ChainState, data: &ModelData) {
        let prior = self.curve_prior;
        for (i, c) in self.curve_block.iter_mut().enumerate() {
            c.refresh(state, data, prior, i);
        }
    }

    pub fn freeze(&mut self) {
        self.theta2.iter_mut().chain(self.theta3.iter_mut()).for_each(MetropolisControl::freeze);
        self.curve_block.iter_mut().for_each(CurveBlockProposal::freeze);
    }
}

/// Metropolis acceptance flags of one sweep, per unit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepStats {
    pub theta2_accepted: Vec<bool>,
    pub theta3_accepted: Vec<bool>,
    /// Accepted joint curve moves, per unit.
    pub curve_block_accepted: Vec<usize>,
}

fn ssr_all(state: &ChainState, data: &ModelData) -> f64 {
    data.series
        .iter()
        .zip(&state.curve_params)
        .map(|(y, p)| sum_sq_residuals(y, p))
        .sum()
}

fn check_variances(state: &ChainState) -> Result<()> {
    let ok = |v: f64| v.is_finite() && v > 0.0;
    if !ok(state.sigma2_obs) || !state.blocks.iter().all(|b| ok(b.sigma2)) {
        return Err(Error::contract("variances must be positive"));
    }
    Ok(())
}

fn basis_stats(y: &[f64], p: &RichardsParams) -> (f64, f64) {
    let ln_xi = p.xi.ln();
    let mut hh = 0.0;
    let mut yh = 0.0;
    for (k, obs) in y.iter().enumerate() {
        let h = crate::curve::log_basis_with_ln_xi((k + 1) as f64, p.theta2, p.theta3, p.xi, ln_xi).exp();
        hh += h * h;
        yh += obs * h;
    }
    (hh, yh)
}

/// Mean and variance of each θ1,i given everything else. The conditional
/// covariance is diagonal, so these fully describe the joint draw.
pub fn theta1_conditional(state: &ChainState, data: &ModelData, prior: CurvePrior) -> Result<Vec<(f64, f64)>> {
    check_variances(state)?;
    data.series
        .iter()
        .zip(&state.curve_params)
        .enumerate()
        .map(|(i, (y, p))| {
            let (hh, r) = basis_stats(y, p);
            let (prior_mean, prior_precision) = match prior.moments(state, data, 0, i) {
                Some((m, v)) => (m, 1.0 / v),
                None => (0.0, 0.0),
            };
            let precision = hh / state.sigma2_obs + prior_precision;
            if !(precision > 0.0 && precision.is_finite()) {
                return Err(Error::Kernel(format!("theta1 conditional precision is {precision}")));
            }
            let var = 1.0 / precision;
            Ok((var * (r / state.sigma2_obs + prior_mean * prior_precision), var))
        })
        .collect()
}

pub fn sample_theta1(
    state: &mut ChainState,
    data: &ModelData,
    prior: CurvePrior,
    rng: &mut RandomStream,
) -> Result<()> {
    for (i, (mean, var)) in theta1_conditional(state, data, prior)?.into_iter().enumerate() {
        state.curve_params[i].theta1 = rng.normal(mean, var.sqrt());
    }
    Ok(())
}

/// Log conditional kernel of θ2,i (`l = 1`) or θ3,i (`l = 2`) at `value`.
pub fn theta_log_target(
    state: &ChainState,
    data: &ModelData,
    prior: CurvePrior,
    l: usize,
    i: usize,
    value: f64,
) -> f64 {
    let mut p = state.curve_params[i];
    match l {
        1 => p.theta2 = value,
        2 => p.theta3 = value,
        _ => panic!("metropolis targets are theta2 (l=1) or theta3 (l=2), got {l}"),
    }
    -sum_sq_residuals(&data.series[i], &p) / (2.0 * state.sigma2_obs) + prior.log_density(state, data, l, i, value)
}

/// Metropolis updates of θ2 then θ3 for every unit.
pub fn sample_theta23(
    state: &mut ChainState,
    data: &ModelData,
    ctx: &mut SweepContext,
    rng: &mut RandomStream,
) -> Result<SweepStats> {
    check_variances(state)?;
    let n = state.n_units();
    let prior = ctx.curve_prior;
    let mut stats = SweepStats {
        theta2_accepted: vec![false; n],
        theta3_accepted: vec![false; n],
        curve_block_accepted: vec![0; n],
    };
    for i in 0..n {
        for l in [1usize, 2] {
            let ctl = if l == 1 { &mut ctx.theta2[i] } else { &mut ctx.theta3[i] };
            let current = theta_of(&state.curve_params[i], l);
            let snapshot = &*state;
            let (value, accepted) =
                metropolis_step(current, |v| theta_log_target(snapshot, data, prior, l, i, v), ctl, rng)?;
            ctl.adapt(accepted);
            state.set_theta(l, i, value);
            if l == 1 {
                stats.theta2_accepted[i] = accepted;
            } else {
                stats.theta3_accepted[i] = accepted;
            }
        }
    }
    Ok(stats)
}

/// Log-likelihood part `−‖y_i − f(θ_i, e^η)‖² / (2σ²)` used by the
/// elliptical slice update of η = log ξ_i.
pub fn xi_log_likelihood(state: &ChainState, data: &ModelData, i: usize, eta: f64) -> f64 {
    let mut p = state.curve_params[i];
    p.xi = eta.exp();
    if !(p.xi > 0.0 && p.xi.is_finite()) {
        return f64::NEG_INFINITY;
    }
    -sum_sq_residuals(&data.series[i], &p) / (2.0 * state.sigma2_obs)
}

pub fn sample_xi(state: &mut ChainState, data: &ModelData, rng: &mut RandomStream) -> Result<()> {
    for i in 0..state.n_units() {
        let eta = state.curve_params[i].xi.ln();
        let snapshot = &*state;
        let next = ess_step(eta, |e| xi_log_likelihood(snapshot, data, i, e), rng)?;
        let xi = next.exp();
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::Kernel(format!("shape update left the positive reals: {xi}")));
        }
        state.curve_params[i].xi = xi;
    }
    Ok(())
}

/// Inverse-gamma (shape, rate) of σ² given everything else.
pub fn sigma2_obs_conditional(state: &ChainState, data: &ModelData, priors: &Priors) -> (f64, f64) {
    let (a0, b0) = priors.obs_variance.conjugate_offsets();
    let shape = data.total_observations() as f64 / 2.0 + a0;
    let mut rate = ssr_all(state, data) / 2.0 + b0;
    if rate <= 0.0 {
        rate += RATE_GUARD;
    }
    (shape, rate)
}

pub fn sample_sigma2_obs(
    state: &mut ChainState,
    data: &ModelData,
    priors: &Priors,
    rng: &mut RandomStream,
) -> Result<()> {
    let (shape, rate) = sigma2_obs_conditional(state, data, priors);
    if !rate.is_finite() {
        return Err(Error::Kernel(format!("non-finite residual sum {rate}")));
    }
    state.sigma2_obs = draw_inverse_gamma(shape, rate, rng)?;
    Ok(())
}

/// Gaussian (mean, variance) of each α_l given everything else.
pub fn alpha_conditional(state: &ChainState, data: &ModelData, priors: &Priors) -> Result<[(f64, f64); 3]> {
    check_variances(state)?;
    let n = state.n_units() as f64;
    let mut out = [(0.0, 0.0); 3];
    for (l, block) in state.blocks.iter().enumerate() {
        // θ_l − Xβ_l averaged over units
        let resid_mean = state
            .curve_params
            .iter()
            .enumerate()
            .map(|(i, p)| theta_of(p, l) - (data.regression_mean_at(block, i) - block.alpha))
            .sum::<f64>()
            / n;
        out[l] = match priors.intercept {
            crate::model::InterceptPrior::Flat => (resid_mean, block.sigma2 / n),
            crate::model::InterceptPrior::Normal { mean, variance } => {
                let precision = n / block.sigma2 + 1.0 / variance;
                let v = 1.0 / precision;
                (v * (n * resid_mean / block.sigma2 + mean / variance), v)
            }
        };
    }
    Ok(out)
}

pub fn sample_alpha(
    state: &mut ChainState,
    data: &ModelData,
    priors: &Priors,
    rng: &mut RandomStream,
) -> Result<()> {
    let cond = alpha_conditional(state, data, priors)?;
    for (block, (mean, var)) in state.blocks.iter_mut().zip(cond) {
        block.alpha = rng.normal(mean, var.sqrt());
    }
    Ok(())
}

fn design(data: &ModelData) -> Result<&DMatrix<f64>> {
    data.design
        .as_ref()
        .ok_or_else(|| Error::contract("coefficient updates need a design matrix"))
}

fn centered_theta(state: &ChainState, l: usize) -> DVector<f64> {
    let alpha = state.blocks[l].alpha;
    DVector::from_iterator(state.n_units(), state.curve_params.iter().map(|p| theta_of(p, l) - alpha))
}

/// Dense mean and covariance of β_l given everything else, by direct
/// inversion of `XᵀX + Λ*⁻¹`. Used for checking; the sampler itself works
/// with the rescaled system in [`sample_beta`].
pub fn beta_conditional(state: &ChainState, data: &ModelData, l: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let x = design(data)?;
    let block = &state.blocks[l];
    let mut a = x.transpose() * x;
    for (j, prec) in block.prior_precision_diag().into_iter().enumerate() {
        a[(j, j)] += prec;
    }
    let sigma_beta = a
        .try_inverse()
        .ok_or_else(|| Error::Factorization("XᵀX + Λ*⁻¹ is singular".into()))?;
    let mean = &sigma_beta * (x.transpose() * centered_theta(state, l));
    Ok((mean, sigma_beta * block.sigma2))
}

/// Draws every β_l from its Gaussian conditional.
///
/// With `S = diag(τ_l λ_lj)` the conditional is `β = S γ`,
/// `γ ~ N(M⁻¹ S Xᵀ(θ_l − 1α_l), σ_l² M⁻¹)`, `M = S XᵀX S + I`. `M` has all
/// eigenvalues ≥ 1, so strong shrinkage never makes the system singular.
pub fn sample_beta(
    state: &mut ChainState,
    data: &ModelData,
    ctx: &mut SweepContext,
    rng: &mut RandomStream,
) -> Result<()> {
    let x = design(data)?;
    let p = x.ncols();
    if p == 0 {
        return Ok(());
    }
    let xtx = x.transpose() * x;
    for l in 0..3 {
        let block = &state.blocks[l];
        let scales = DVector::from_iterator(p, block.lambda.iter().map(|lam| block.tau * lam));
        let mut m = DMatrix::from_fn(p, p, |r, c| scales[r] * xtx[(r, c)] * scales[c]);
        for j in 0..p {
            m[(j, j)] += 1.0;
        }
        // eigenvalues of M are ≥ 1, so the trace bounds the condition number
        if m.trace() > CONDITION_LIMIT {
            let eig = m.clone().symmetric_eigenvalues();
            let cond = eig.max() / eig.min();
            if !(cond <= CONDITION_LIMIT) {
                ctx.ill_conditioned += 1;
                if ctx.ill_conditioned == 1 {
                    log::warn!("coefficient system for block {l} has condition number {cond:.3e}; adding jitter");
                }
                for j in 0..p {
                    m[(j, j)] += JITTER;
                }
            }
        }
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Factorization(format!("coefficient system for block {l} is not positive definite")))?;
        let rhs = (x.transpose() * centered_theta(state, l)).component_mul(&scales);
        let gamma_mean = chol.solve(&rhs);
        let z = DVector::from_fn(p, |_, _| rng.std_normal());
        // L⁻ᵀ z has covariance M⁻¹
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Factorization("triangular solve failed".into()))?;
        let sd = state.blocks[l].sigma2.sqrt();
        let gamma = gamma_mean + noise * sd;
        state.blocks[l].beta = gamma.component_mul(&scales).iter().copied().collect();
    }
    Ok(())
}

/// Log conditional of `u = log λ_lj` (Jacobian included):
/// `N(β_lj | 0, σ_l² τ_l² e^{2u}) · 1/(1 + e^{2u}) · e^u`.
pub fn lambda_log_target(block: &RegressionBlock, j: usize, log_lambda: f64) -> f64 {
    let b = block.beta[j];
    let s2 = block.sigma2 * block.tau * block.tau;
    let r = b * (-log_lambda).exp();
    -r * r / (2.0 * s2) - softplus(2.0 * log_lambda)
}

/// Log conditional of `v = log τ_l` (Jacobian included):
/// `N_p(β_l | 0, σ_l² e^{2v} Λ_l) · 1/(1 + e^{2v}) · e^v`.
pub fn tau_log_target(block: &RegressionBlock, log_tau: f64) -> f64 {
    let p = block.beta.len() as f64;
    let q: f64 = block
        .beta
        .iter()
        .zip(&block.lambda)
        .map(|(b, l)| b * b / (l * l))
        .sum();
    -q * (-2.0 * log_tau).exp() / (2.0 * block.sigma2) - p * log_tau - softplus(2.0 * log_tau) + log_tau
}

fn positive_from_log(u: f64, what: &str) -> Result<f64> {
    let v = u.exp();
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Kernel(format!("{what} left the positive reals (log value {u})")))
    }
}

pub fn sample_lambda(state: &mut ChainState, ctx: &SweepContext, rng: &mut RandomStream) -> Result<()> {
    for block in state.blocks.iter_mut() {
        for j in 0..block.lambda.len() {
            let snapshot = &*block;
            let u = slice_step(
                block.lambda[j].ln(),
                |u| lambda_log_target(snapshot, j, u),
                ctx.slice_width,
                None,
                rng,
            )?;
            block.lambda[j] = positive_from_log(u, "local scale")?;
        }
    }
    Ok(())
}

pub fn sample_tau(state: &mut ChainState, ctx: &SweepContext, rng: &mut RandomStream) -> Result<()> {
    for block in state.blocks.iter_mut() {
        if block.beta.is_empty() {
            continue;
        }
        let snapshot = &*block;
        let v = slice_step(block.tau.ln(), |v| tau_log_target(snapshot, v), ctx.slice_width, None, rng)?;
        block.tau = positive_from_log(v, "global scale")?;
    }
    Ok(())
}

/// Inverse-gamma (shape, rate) of each σ_l² given everything else.
pub fn sigma2_regression_conditional(
    state: &ChainState,
    data: &ModelData,
    spec: &ModelSpec,
    priors: &Priors,
) -> [(f64, f64); 3] {
    let (a0, b0) = priors.regression_variance.conjugate_offsets();
    let n = state.n_units() as f64;
    let mut out = [(0.0, 0.0); 3];
    for (l, block) in state.blocks.iter().enumerate() {
        let resid: f64 = state
            .curve_params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d = theta_of(p, l) - data.regression_mean_at(block, i);
                d * d
            })
            .sum();
        let (p_eff, penalty) = if spec.uses_covariates() {
            let pen: f64 = block
                .beta
                .iter()
                .zip(block.prior_precision_diag())
                .map(|(b, prec)| b * b * prec)
                .sum();
            (block.beta.len() as f64, pen)
        } else {
            (0.0, 0.0)
        };
        let mut rate = (resid + penalty) / 2.0 + b0;
        if rate <= 0.0 {
            rate += RATE_GUARD;
        }
        out[l] = ((n + p_eff) / 2.0 + a0, rate);
    }
    out
}

pub fn sample_sigma2_regression(
    state: &mut ChainState,
    data: &ModelData,
    spec: &ModelSpec,
    priors: &Priors,
    rng: &mut RandomStream,
) -> Result<()> {
    let cond = sigma2_regression_conditional(state, data, spec, priors);
    for (block, (shape, rate)) in state.blocks.iter_mut().zip(cond) {
        block.sigma2 = draw_inverse_gamma(shape, rate, rng)?;
    }
    Ok(())
}

/// One full sweep. Covariate steps (β, λ, τ) only run for M3.
pub fn gibbs_sweep(
    state: &mut ChainState,
    data: &ModelData,
    spec: &ModelSpec,
    ctx: &mut SweepContext,
    rng: &mut RandomStream,
) -> Result<SweepStats> {
    let priors = ctx.priors;
    sample_theta1(state, data, ctx.curve_prior, rng).map_err(|e| e.at_step("theta1"))?;
    let mut stats = sample_theta23(state, data, ctx, rng).map_err(|e| e.at_step("theta2/theta3"))?;
    sample_xi(state, data, rng).map_err(|e| e.at_step("xi"))?;
    if ctx.curve_block_moves > 0 {
        let moves = ctx.curve_block_moves;
        stats.curve_block_accepted =
            sample_curve_block(state, data, ctx, moves, rng).map_err(|e| e.at_step("curve block"))?;
    }
    sample_sigma2_obs(state, data, &priors, rng).map_err(|e| e.at_step("sigma2"))?;
    let hierarchical = ctx.curve_prior == CurvePrior::Hierarchical;
    if hierarchical {
        sample_alpha(state, data, &priors, rng).map_err(|e| e.at_step("alpha"))?;
    }
    if spec.uses_covariates() {
        sample_beta(state, data, ctx, rng).map_err(|e| e.at_step("beta"))?;
        sample_lambda(state, ctx, rng).map_err(|e| e.at_step("lambda"))?;
        sample_tau(state, ctx, rng).map_err(|e| e.at_step("tau"))?;
    }
    if hierarchical {
        sample_sigma2_regression(state, data, spec, &priors, rng).map_err(|e| e.at_step("sigma2_regression"))?;
    }
    Ok(stats)
}

/// Data-informed starting state with per-chain jitter on θ1 and θ3.
pub fn initial_state(data: &ModelData, spec: &ModelSpec, rng: &mut RandomStream) -> ChainState {
    let curve_params: Vec<RichardsParams> = data
        .series
        .iter()
        .map(|y| {
            let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let peak_day = y
                .windows(2)
                .enumerate()
                .fold((1usize, f64::NEG_INFINITY), |best, (k, w)| {
                    let inc = w[1] - w[0];
                    if inc > best.1 {
                        (k + 2, inc)
                    } else {
                        best
                    }
                })
                .0;
            let theta1 = (1.2 * max).max(1.0) * rng.uniform_range(0.9, 1.1);
            let theta3 = peak_day as f64 + rng.uniform_range(-3.0, 3.0);
            RichardsParams {
                theta1,
                theta2: 0.1,
                theta3,
                xi: 1.0,
            }
        })
        .collect();
    let p = if spec.uses_covariates() { data.n_covariates() } else { 0 };
    let n = curve_params.len() as f64;
    let block = |l: usize| {
        let alpha = curve_params.iter().map(|c| theta_of(c, l)).sum::<f64>() / n;
        RegressionBlock::new(alpha, 1.0, p)
    };
    let blocks = [block(0), block(1), block(2)];
    ChainState {
        curve_params,
        sigma2_obs: 1.0,
        blocks,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarDiagnostic {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
}

/// Retained post-burn-in states of all chains plus run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub spec: ModelSpec,
    pub config: SamplerConfig,
    pub unit_ids: Vec<String>,
    pub covariate_names: Vec<String>,
    /// Length of the observed series (days 1..=series_len).
    pub series_len: usize,
    pub max_observed: Vec<f64>,
    /// Chain-major: chain 0's draws first.
    pub draws: Vec<ChainState>,
    pub draws_per_chain: usize,
    /// Post-burn-in Metropolis acceptance rate per `unit/param`.
    pub acceptance_rates: Vec<(String, f64)>,
    pub diagnostics: Vec<ScalarDiagnostic>,
    pub warnings: Vec<String>,
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.draws.len().checked_div(self.draws_per_chain).unwrap_or(0)
    }

    pub fn chain(&self, c: usize) -> &[ChainState] {
        &self.draws[c * self.draws_per_chain..(c + 1) * self.draws_per_chain]
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.unit_ids.clone(), self.covariate_names.len())
    }

    /// Per-chain traces of every scalar in layout order.
    pub fn traces(&self) -> Vec<Vec<Vec<f64>>> {
        let layout = self.layout();
        let mut out = vec![vec![Vec::with_capacity(self.draws_per_chain); self.n_chains()]; layout.len()];
        for c in 0..self.n_chains() {
            for s in self.chain(c) {
                for (k, v) in layout.flatten(s).into_iter().enumerate() {
                    out[k][c].push(v);
                }
            }
        }
        out
    }

    /// Recomputes split-R̂ and bulk ESS for every scalar.
    pub fn compute_diagnostics(&self) -> Vec<ScalarDiagnostic> {
        let names = self.layout().names();
        self.traces()
            .into_iter()
            .zip(names)
            .map(|(chains, name)| ScalarDiagnostic {
                name,
                rhat: split_rhat(&chains),
                ess: bulk_ess(&chains),
            })
            .collect()
    }

    pub fn unit_index(&self, unit_id: &str) -> Option<usize> {
        self.unit_ids.iter().position(|u| u == unit_id)
    }
}

struct ChainOutput {
    draws: Vec<ChainState>,
    accepted2: Vec<usize>,
    accepted3: Vec<usize>,
    accepted_block: Vec<usize>,
    counted: usize,
    ill_conditioned: usize,
}

fn run_one_chain(data: &ModelData, spec: &ModelSpec, config: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = RandomStream::with_stream(config.seed, chain as u64);
    let mut state = initial_state(data, spec, &mut rng);
    let mut ctx = SweepContext::new(state.n_units(), spec, config)?;
    let n = state.n_units();
    let mut out = ChainOutput {
        draws: Vec::with_capacity(config.retained_per_chain()),
        accepted2: vec![0; n],
        accepted3: vec![0; n],
        accepted_block: vec![0; n],
        counted: 0,
        ill_conditioned: 0,
    };
    for sweep in 0..config.sweeps {
        if sweep == config.burn_in {
            ctx.freeze();
        } else if sweep < config.burn_in && config.adapt && sweep % CURVE_BLOCK_REFRESH == 0 {
            ctx.refresh_curve_block(&state, data);
        }
        let abort = |reason: String| Error::Chain { chain, sweep, reason };
        let stats = gibbs_sweep(&mut state, data, spec, &mut ctx, &mut rng).map_err(|e| abort(e.to_string()))?;
        state.validate().map_err(|e| abort(e.to_string()))?;
        if sweep >= config.burn_in {
            out.counted += 1;
            for i in 0..n {
                out.accepted2[i] += usize::from(stats.theta2_accepted[i]);
                out.accepted3[i] += usize::from(stats.theta3_accepted[i]);
                out.accepted_block[i] += stats.curve_block_accepted.get(i).copied().unwrap_or(0);
            }
            if (sweep - config.burn_in + 1).is_multiple_of(config.thin) {
                out.draws.push(state.clone());
            }
        }
    }
    out.ill_conditioned = ctx.ill_conditioned;
    Ok(out)
}

/// Runs `config.chains` independent chains (in parallel) and collects the
/// retained draws with convergence diagnostics.
pub fn run_chains(data: &ModelData, spec: &ModelSpec, config: &SamplerConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    if let ModelSpec::M1 { .. } = spec {
        if data.n_units() != 1 {
            return Err(Error::contract("model m1 fits exactly one series"));
        }
    }
    if spec.uses_covariates() && data.design.is_none() {
        return Err(Error::Config("model m3 requires covariates".into()));
    }
    let outputs: Vec<ChainOutput> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_one_chain(data, spec, config, c))
        .collect::<Result<_>>()?;

    let n = data.n_units();
    let counted: usize = outputs.iter().map(|o| o.counted).sum();
    let mut acceptance_rates = Vec::with_capacity(2 * n);
    for i in 0..n {
        let a2: usize = outputs.iter().map(|o| o.accepted2[i]).sum();
        let a3: usize = outputs.iter().map(|o| o.accepted3[i]).sum();
        acceptance_rates.push((format!("{}/theta2", data.unit_ids[i]), a2 as f64 / counted as f64));
        acceptance_rates.push((format!("{}/theta3", data.unit_ids[i]), a3 as f64 / counted as f64));
        if config.curve_block_moves > 0 {
            let ab: usize = outputs.iter().map(|o| o.accepted_block[i]).sum();
            let tried = (counted * config.curve_block_moves) as f64;
            acceptance_rates.push((format!("{}/curve_block", data.unit_ids[i]), ab as f64 / tried));
        }
    }
    let mut warnings = Vec::new();
    if CurvePrior::for_model(spec, &config.priors) == CurvePrior::Flat {
        warnings.push(
            "single series with a flat intercept prior: curve parameters have flat priors; \
             block alpha and sigma2 are not identified and stay at their starting values"
                .to_string(),
        );
    }
    let ill: usize = outputs.iter().map(|o| o.ill_conditioned).sum();
    if ill > 0 {
        warnings.push(format!("coefficient system jittered {ill} times for ill-conditioning"));
    }
    let covariate_names = if spec.uses_covariates() {
        data.covariate_names.clone()
    } else {
        Vec::new()
    };
    let mut draws = PosteriorDraws {
        spec: *spec,
        config: config.clone(),
        unit_ids: data.unit_ids.clone(),
        covariate_names,
        series_len: data.series.iter().map(Vec::len).max().unwrap_or(0),
        max_observed: data
            .series
            .iter()
            .map(|y| y.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect(),
        draws_per_chain: config.retained_per_chain(),
        draws: outputs.into_iter().flat_map(|o| o.draws).collect(),
        acceptance_rates,
        diagnostics: Vec::new(),
        warnings,
    };
    draws.diagnostics = draws.compute_diagnostics();
    Ok(draws)
}
