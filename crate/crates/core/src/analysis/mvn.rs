//! Multivariate-normal orthant probabilities.
//!
//! `P(X > 0)` for `X ~ N(μ, Σ)` by Genz's separation of variables on a
//! randomly shifted Richtmyer lattice with the baker's transform. The
//! lattice shifts come from a fixed-seed generator, so results are
//! reproducible. The standard error across shifts is returned alongside.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmcSettings {
    pub points: usize,
    pub shifts: usize,
    pub seed: u64,
}

impl Default for QmcSettings {
    fn default() -> Self {
        Self { points: 2048, shifts: 8, seed: 0x5eed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthantEstimate {
    pub probability: f64,
    pub std_error: f64,
}

const PRIMES: [u32; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109,
    113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Lower Cholesky factor; fails on a matrix that is not positive definite.
fn cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    if cov.ncols() != n || (0..n).any(|i| (0..i).any(|j| (cov[(i, j)] - cov[(j, i)]).abs() > 1e-9 * (cov[(i, i)] * cov[(j, j)]).sqrt())) {
        return Err(Error::NonPsdCovariance);
    }
    cov.clone().cholesky().map(|c| c.l()).ok_or(Error::NonPsdCovariance)
}

pub fn orthant_probability(mean: &[f64], cov: &DMatrix<f64>, settings: &QmcSettings) -> Result<OrthantEstimate> {
    let d = mean.len();
    if d == 0 {
        return Ok(OrthantEstimate { probability: 1.0, std_error: 0.0 });
    }
    if cov.nrows() != d {
        return Err(Error::InvalidConfig("mean and covariance sizes differ".into()));
    }
    if d > PRIMES.len() + 1 {
        return Err(Error::InvalidConfig(format!("orthant dimension {d} exceeds {}", PRIMES.len() + 1)));
    }
    let l = cholesky(cov)?;
    let phi = std_normal();
    // Region Y > −μ for Y ~ N(0, Σ).
    let lower: Vec<f64> = mean.iter().map(|m| -m).collect();
    let gen: Vec<f64> = PRIMES[..d - 1].iter().map(|&p| f64::from(p).sqrt().fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut y = vec![0.0; d];
    let mut means = Vec::with_capacity(settings.shifts);
    for _ in 0..settings.shifts.max(1) {
        let shift: Vec<f64> = (0..d - 1).map(|_| rng.gen::<f64>()).collect();
        let mut acc = 0.0;
        for k in 0..settings.points.max(1) {
            let mut f = 1.0;
            for i in 0..d {
                let s: f64 = (0..i).map(|j| l[(i, j)] * y[j]).sum();
                let di = phi.cdf((lower[i] - s) / l[(i, i)]);
                f *= 1.0 - di;
                if f == 0.0 {
                    break;
                }
                if i + 1 < d {
                    let x = ((k + 1) as f64 * gen[i] + shift[i]).fract();
                    let w = 1.0 - (2.0 * x - 1.0).abs();
                    let u = (di + w * (1.0 - di)).clamp(1e-16, 1.0 - 1e-16);
                    y[i] = phi.inverse_cdf(u);
                }
            }
            acc += f;
        }
        means.push(acc / settings.points.max(1) as f64);
    }
    let m = means.len() as f64;
    let probability = means.iter().sum::<f64>() / m;
    let var = if means.len() > 1 {
        means.iter().map(|x| (x - probability).powi(2)).sum::<f64>() / (m - 1.0) / m
    } else {
        0.0
    };
    Ok(OrthantEstimate { probability: probability.clamp(0.0, 1.0), std_error: var.sqrt() })
}

/// `P(Z_w > Z_j ∀ j ≠ w)` for independent `Z_j ~ N(μ_j, sd²)`, by
/// composite Simpson integration over `Z_w`.
pub fn argmax_probability_independent(means: &[f64], sd: f64, which: usize) -> f64 {
    let phi = std_normal();
    let m0 = means[which];
    let integrand = |z: f64| {
        let x = m0 + sd * z;
        let dens = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        means
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != which)
            .map(|(_, &mj)| phi.cdf((x - mj) / sd))
            .product::<f64>()
            * dens
    };
    // Composite Simpson over ±10σ; the integrand is smooth and bounded by φ.
    let n = 4000;
    let (a, b) = (-10.0, 10.0);
    let h = (b - a) / n as f64;
    let mut s = integrand(a) + integrand(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * integrand(a + i as f64 * h);
    }
    s * h / 3.0
}
