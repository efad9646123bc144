//! Seeded random energy distributions for property checks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectral::EnergyDistribution;

/// A random distribution together with the revival time and window it is probed at.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub dist: EnergyDistribution,
    pub tau: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub max_levels: usize,
    /// Energies are drawn from `[0, e_max]`.
    pub e_max: f64,
    /// Upper limit for the sampled `tau`.
    pub tau_max: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self { max_levels: 200, e_max: 8.0, tau_max: 2.0 * PI }
    }
}

/// Weights from normalized exponential draws (uniform on the simplex).
fn simplex_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| (x / total).max(f64::MIN_POSITIVE)).collect()
}

fn build(mut energies: Vec<f64>, rng: &mut ChaCha8Rng) -> Result<EnergyDistribution> {
    energies.sort_by(|a, b| a.total_cmp(b));
    energies.dedup();
    let weights = simplex_weights(rng, energies.len());
    EnergyDistribution::new(energies.into_iter().zip(weights).collect(), 0.0)
}

/// Uniform energies on `[0, e_max]` with simplex weights.
pub fn random_distribution(rng: &mut ChaCha8Rng, levels: usize, e_max: f64) -> Result<EnergyDistribution> {
    if levels == 0 || !(e_max > 0.0) {
        return Err(Error::InvalidParameter("need at least one level and e_max > 0".into()));
    }
    let energies = (0..levels).map(|_| rng.random::<f64>() * e_max).collect();
    build(energies, rng)
}

/// Energies near the ladder `2 pi k / tau`, displaced by at most `jitter / tau`;
/// these give small `epsilon` so the in-peak bound is not vacuous.
pub fn near_ladder_distribution(
    rng: &mut ChaCha8Rng,
    levels: usize,
    e_max: f64,
    tau: f64,
    jitter: f64,
) -> Result<EnergyDistribution> {
    if levels == 0 || !(e_max > 0.0 && tau > 0.0) {
        return Err(Error::InvalidParameter("need levels > 0, e_max > 0 and tau > 0".into()));
    }
    let rungs = ((e_max * tau / (2.0 * PI)).floor() as usize).max(1);
    let energies = (0..levels)
        .map(|_| {
            let k = rng.random_range(0..=rungs) as f64;
            let e = 2.0 * PI * k / tau + (2.0 * rng.random::<f64>() - 1.0) * jitter / tau;
            e.clamp(0.0, e_max)
        })
        .collect();
    build(energies, rng)
}

/// `count` cases from `seed`: alternating uniform and near-ladder spectra, with
/// `tau` uniform in `(0, tau_max]` and `delta` uniform in `(0, pi]`.
pub fn synthetic_suite(seed: u64, count: usize, params: SyntheticParams) -> Result<Vec<SyntheticCase>> {
    if params.max_levels == 0 || !(params.tau_max > 0.0) {
        return Err(Error::InvalidParameter("max_levels and tau_max must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let levels = rng.random_range(1..=params.max_levels);
            let tau = params.tau_max * (1.0 - rng.random::<f64>());
            let delta = PI * (1.0 - rng.random::<f64>());
            let dist = if i % 2 == 0 {
                random_distribution(&mut rng, levels, params.e_max)?
            } else {
                let jitter = 0.2 * rng.random::<f64>();
                near_ladder_distribution(&mut rng, levels, params.e_max, tau, jitter)?
            };
            Ok(SyntheticCase { dist, tau, delta })
        })
        .collect()
}
