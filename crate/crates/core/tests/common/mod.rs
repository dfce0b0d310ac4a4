#![allow(dead_code)]

pub mod criteria;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use growthcast::curve::{basis, richards, RichardsParams};
use growthcast::data::{standardize, PanelDataset, RawCovariates};
use growthcast::model::{ChainState, ModelData, RegressionBlock, Trajectory};
use growthcast::samplers::RandomStream;

pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 22).unwrap()
}

/// N=3, T=10, p=2 instance with moderate scales.
pub fn tiny_instance() -> (ChainState, ModelData) {
    let design = DMatrix::from_row_slice(3, 2, &[-0.7, 0.2, 0.1, -0.8, 0.6, 0.6]);
    let truth = [
        RichardsParams { theta1: 50.0, theta2: 0.8, theta3: 5.0, xi: 0.7 },
        RichardsParams { theta1: 40.0, theta2: 0.6, theta3: 4.0, xi: 1.3 },
        RichardsParams { theta1: 60.0, theta2: 0.9, theta3: 6.0, xi: 1.0 },
    ];
    let series = truth
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (1..=10)
                .map(|t| {
                    let wiggle = ((t * (i + 2)) as f64).sin();
                    p.theta1 * basis(t as f64, p.theta2, p.theta3, p.xi).unwrap() + wiggle
                })
                .collect()
        })
        .collect();
    let mut blocks = [
        RegressionBlock::new(48.0, 30.0, 2),
        RegressionBlock::new(0.7, 0.05, 2),
        RegressionBlock::new(5.0, 1.5, 2),
    ];
    blocks[0].beta = vec![3.0, -2.0];
    blocks[0].lambda = vec![1.5, 0.4];
    blocks[0].tau = 2.0;
    blocks[1].beta = vec![0.05, 0.01];
    blocks[1].lambda = vec![0.3, 0.8];
    blocks[1].tau = 0.5;
    blocks[2].beta = vec![-0.4, 0.2];
    blocks[2].lambda = vec![1.1, 0.9];
    blocks[2].tau = 0.7;
    let state = ChainState {
        curve_params: truth.to_vec(),
        sigma2_obs: 1.2,
        blocks,
    };
    (state, ModelData::new(series, Some(design)).unwrap())
}

/// Settings of the synthetic panel generator. Unit-level parameters are
/// `θ_l = mean_l + x_iᵀβ_l + N(0, sd_l²)` on standardized covariates, with
/// `ξ ~ LogNormal(0, xi_log_sd²)` and Gaussian observation noise.
#[derive(Debug, Clone)]
pub struct Generator {
    pub n: usize,
    pub t: usize,
    pub p: usize,
    pub mean: [f64; 3],
    pub sd: [f64; 3],
    pub beta: [Vec<f64>; 3],
    pub xi_log_sd: f64,
    pub noise_sd: f64,
    /// Smallest accepted growth rate; lower draws are redrawn.
    pub min_theta2: f64,
}

pub struct Synthetic {
    pub panel: PanelDataset,
    pub truth: Vec<RichardsParams>,
}

impl Generator {
    pub fn generate(&self, seed: u64) -> Synthetic {
        let mut rng = RandomStream::new(seed);
        let ids: Vec<String> = (0..self.n).map(|i| format!("unit{i:02}")).collect();
        let covariates = (self.p > 0).then(|| {
            let raw = RawCovariates {
                unit_ids: ids.clone(),
                names: (0..self.p).map(|j| format!("cov{j}")).collect(),
                cells: (0..self.n)
                    .map(|_| (0..self.p).map(|_| Some(rng.std_normal())).collect())
                    .collect(),
            };
            standardize(&raw).unwrap().0
        });
        let mut truth = Vec::with_capacity(self.n);
        let mut trajectories = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let reg = |l: usize| -> f64 {
                let x = covariates.as_ref().map(|c| c.standardized.row(i).iter().copied().collect::<Vec<_>>());
                let shift: f64 = match x {
                    Some(x) => x.iter().zip(&self.beta[l]).map(|(a, b)| a * b).sum(),
                    None => 0.0,
                };
                self.mean[l] + shift
            };
            let theta1 = reg(0) + self.sd[0] * rng.std_normal();
            let theta2 = loop {
                let v = reg(1) + self.sd[1] * rng.std_normal();
                if v >= self.min_theta2 {
                    break v;
                }
            };
            let theta3 = reg(2) + self.sd[2] * rng.std_normal();
            let xi = (self.xi_log_sd * rng.std_normal()).exp();
            let p = RichardsParams::new(theta1, theta2, theta3, xi).unwrap();
            let counts = (1..=self.t)
                .map(|t| (richards(t as f64, &p).unwrap() + self.noise_sd * rng.std_normal()).max(0.0))
                .collect();
            trajectories.push(Trajectory::new(ids[i].clone(), start_date(), counts).unwrap());
            truth.push(p);
        }
        Synthetic {
            panel: PanelDataset::new(trajectories, covariates).unwrap(),
            truth,
        }
    }
}

/// Recovery setting: N=8, T=60, p=5, two nonzero coefficients on θ1
/// (columns 0 and 2).
pub fn recovery_generator() -> Generator {
    Generator {
        n: 8,
        t: 60,
        p: 5,
        mean: [10_000.0, 0.2, 30.0],
        sd: [300.0, 0.02, 3.0],
        beta: [
            vec![3000.0, 0.0, -3000.0, 0.0, 0.0],
            vec![0.0; 5],
            vec![0.0; 5],
        ],
        xi_log_sd: 1.0,
        noise_sd: 100.0,
        min_theta2: 0.05,
    }
}

/// Forecast-comparison setting: N=10, T=80, p=3 with one nonzero
/// coefficient on θ1.
pub fn comparison_generator() -> Generator {
    Generator {
        n: 10,
        t: 80,
        p: 3,
        mean: [10_000.0, 0.12, 45.0],
        sd: [1000.0, 0.03, 6.0],
        beta: [vec![1500.0, 0.0, 0.0], vec![0.0; 3], vec![0.0; 3]],
        xi_log_sd: 1.0,
        noise_sd: 100.0,
        min_theta2: 0.04,
    }
}

/// Batch-means standard error of the mean of a correlated series.
pub fn batch_se(xs: &[f64], batches: usize) -> f64 {
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}
