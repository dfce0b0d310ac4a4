//! Model-agnostic MCMC kernels driven by an explicit [`RandomStream`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of stepping-out expansions of the slice interval.
pub const SLICE_MAX_STEPS: u32 = 50;
/// The slice interval may not shrink below this width.
pub const SLICE_MIN_WIDTH: f64 = 1e-14;
const ESS_MAX_SHRINKS: usize = 10_000;

/// Seeded pseudo-random source. Identical seeds (and stream ids) give
/// identical sequences.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent sub-stream of `seed`, e.g. one per chain.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on the open-closed interval (0, 1].
    pub fn uniform_positive(&mut self) -> f64 {
        1.0 - self.rng.random::<f64>()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.std_normal()
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Random-walk Metropolis settings for one scalar coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetropolisControl {
    pub proposal_sd: f64,
    pub adapt: bool,
    pub target_acceptance: f64,
    #[serde(default)]
    adapt_steps: u64,
}

impl MetropolisControl {
    pub fn new(proposal_sd: f64, adapt: bool, target_acceptance: f64) -> Result<Self> {
        if !(proposal_sd.is_finite() && proposal_sd > 0.0) {
            return Err(Error::domain(format!("proposal sd must be positive, got {proposal_sd}")));
        }
        if !(target_acceptance > 0.0 && target_acceptance < 1.0) {
            return Err(Error::domain(format!(
                "target acceptance must lie in (0, 1), got {target_acceptance}"
            )));
        }
        Ok(Self {
            proposal_sd,
            adapt,
            target_acceptance,
            adapt_steps: 0,
        })
    }

    pub fn fixed(proposal_sd: f64) -> Result<Self> {
        Self::new(proposal_sd, false, 0.3)
    }

    /// Robbins–Monro update of the log proposal scale toward the target
    /// acceptance rate. No-op unless `adapt` is set.
    pub fn adapt(&mut self, accepted: bool) {
        if !self.adapt {
            return;
        }
        self.adapt_steps += 1;
        let gain = (self.adapt_steps as f64).powf(-0.6);
        let signal = if accepted { 1.0 } else { 0.0 } - self.target_acceptance;
        let log_sd = (self.proposal_sd.ln() + gain * signal).clamp(-30.0, 30.0);
        self.proposal_sd = log_sd.exp();
    }

    /// Stops adaptation; the kernel is fixed from here on.
    pub fn freeze(&mut self) {
        self.adapt = false;
    }
}

/// One elliptical slice sampling update for a target proportional to
/// `exp(log_likelihood(η)) · N(η | 0, 1)`.
///
/// Always returns a point on the ellipse through `current` and an auxiliary
/// standard normal draw.
pub fn ess_step<F>(current: f64, mut log_likelihood: F, rng: &mut RandomStream) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !current.is_finite() {
        return Err(Error::Kernel(format!("ess: non-finite current state {current}")));
    }
    let current_ll = log_likelihood(current);
    if current_ll.is_nan() || current_ll == f64::NEG_INFINITY {
        return Err(Error::Kernel(format!("ess: invalid log-likelihood {current_ll} at current state")));
    }
    let nu = rng.std_normal();
    // accept when u < L(η*)/L(η)
    let log_u = rng.uniform_positive().ln();
    let threshold = current_ll + log_u;

    let pi = std::f64::consts::PI;
    let mut phi = rng.uniform_range(-pi, pi);
    let (mut phi_min, mut phi_max) = (-pi, pi);
    for _ in 0..ESS_MAX_SHRINKS {
        let proposal = current * phi.cos() + nu * phi.sin();
        let ll = log_likelihood(proposal);
        if ll.is_nan() {
            return Err(Error::Kernel(format!("ess: log-likelihood is NaN at {proposal}")));
        }
        if ll > threshold {
            return Ok(proposal);
        }
        if phi > 0.0 {
            phi_max = phi;
        } else {
            phi_min = phi;
        }
        phi = rng.uniform_range(phi_min, phi_max);
    }
    Err(Error::Kernel("ess: angle bracket failed to close".into()))
}

/// One univariate slice sampling update with stepping out (at most
/// [`SLICE_MAX_STEPS`] expansions) and shrinkage.
///
/// Points at or below `support_lower` are treated as having zero density.
pub fn slice_step<F>(
    current: f64,
    mut log_density: F,
    width: f64,
    support_lower: Option<f64>,
    rng: &mut RandomStream,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::domain(format!("slice width must be positive, got {width}")));
    }
    let mut eval = |x: f64| match support_lower {
        Some(lo) if x <= lo => f64::NEG_INFINITY,
        _ => log_density(x),
    };
    let fx = eval(current);
    if !fx.is_finite() {
        return Err(Error::Kernel(format!("slice: log density {fx} at current state {current}")));
    }
    let level = fx + rng.uniform_positive().ln();

    let mut left = current - width * rng.uniform();
    let mut right = left + width;
    let mut j = (f64::from(SLICE_MAX_STEPS) * rng.uniform()).floor() as u32;
    let mut k = SLICE_MAX_STEPS - 1 - j;
    while j > 0 && support_lower.is_none_or(|lo| left > lo) && level < eval(left) {
        left -= width;
        j -= 1;
    }
    while k > 0 && level < eval(right) {
        right += width;
        k -= 1;
    }
    if let Some(lo) = support_lower {
        left = left.max(lo);
    }

    loop {
        if right - left < SLICE_MIN_WIDTH {
            return Err(Error::Kernel(format!(
                "slice: interval collapsed around {current} without finding a point on the slice"
            )));
        }
        let proposal = left + (right - left) * rng.uniform();
        let fp = eval(proposal);
        if fp.is_nan() {
            return Err(Error::Kernel(format!("slice: log density is NaN at {proposal}")));
        }
        if fp > level {
            return Ok(proposal);
        }
        if proposal < current {
            left = proposal;
        } else {
            right = proposal;
        }
    }
}

/// Gaussian random-walk Metropolis step. Returns the new value and whether
/// the proposal was accepted.
pub fn metropolis_step<F>(
    current: f64,
    mut log_density: F,
    ctl: &MetropolisControl,
    rng: &mut RandomStream,
) -> Result<(f64, bool)>
where
    F: FnMut(f64) -> f64,
{
    let current_ld = log_density(current);
    if current_ld.is_nan() {
        return Err(Error::Kernel(format!("metropolis: log density is NaN at current state {current}")));
    }
    let proposal = current + ctl.proposal_sd * rng.std_normal();
    let proposal_ld = log_density(proposal);
    let log_u = rng.uniform_positive().ln();
    if proposal_ld.is_nan() {
        return Ok((current, false));
    }
    // -inf - -inf is NaN; treat an impossible current state as always movable.
    let delta = if current_ld == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        proposal_ld - current_ld
    };
    if log_u <= delta {
        Ok((proposal, true))
    } else {
        Ok((current, false))
    }
}

/// Exact draw from `N_k(mean, covariance)` through a Cholesky factor.
pub fn draw_gaussian(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    rng: &mut RandomStream,
) -> Result<DVector<f64>> {
    let k = mean.len();
    if covariance.nrows() != k || covariance.ncols() != k {
        return Err(Error::contract(format!(
            "covariance is {}x{}, mean has length {k}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    let asym = (covariance - covariance.transpose()).amax();
    if asym > 1e-10 * covariance.amax().max(1.0) {
        return Err(Error::Factorization("covariance is not symmetric".into()));
    }
    let chol = covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Factorization("covariance is not positive definite".into()))?;
    let z = DVector::from_fn(k, |_, _| rng.std_normal());
    Ok(mean + chol.l() * z)
}

/// Draw `X` with `1/X ~ Gamma(shape, rate)`.
pub fn draw_inverse_gamma(shape: f64, rate: f64, rng: &mut RandomStream) -> Result<f64> {
    if !(shape.is_finite() && shape > 0.0 && rate.is_finite() && rate > 0.0) {
        return Err(Error::domain(format!(
            "inverse gamma needs positive finite shape and rate, got ({shape}, {rate})"
        )));
    }
    let gamma = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::domain(format!("gamma({shape}, {rate}): {e}")))?;
    let g: f64 = gamma.sample(rng);
    let x = 1.0 / g;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::Kernel(format!("inverse gamma draw out of range: {x}")))
    }
}
