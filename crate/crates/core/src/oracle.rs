//! Closed forms for the spin-1 XY scar tower and the nematic Neel state.
//!
//! Every quantity here is computed without diagonalization so it can be compared
//! against the numerical pipeline. Binomials are exact integers up to `N = 60`
//! and fall back to log-Gamma beyond that.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{Lattice, StateVector};
use crate::spectral::EnergyDistribution;

/// Largest `N` for which binomials are evaluated in exact integer arithmetic.
pub const EXACT_BINOMIAL_MAX: usize = 60;

pub fn exact_binomial(n: usize, k: usize) -> Option<u128> {
    if k > n || n > EXACT_BINOMIAL_MAX {
        return None;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    Some(acc)
}

pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    match exact_binomial(n, k) {
        Some(b) => b as f64,
        None if k > n => 0.0,
        None => ln_binomial(n, k).exp(),
    }
}

/// `a * b / c` for binomial products, exact-rational when possible.
fn binomial_ratio(a: (usize, usize), b: (usize, usize), c: (usize, usize)) -> f64 {
    if a.1 > a.0 || b.1 > b.0 || c.1 > c.0 {
        return 0.0;
    }
    match (exact_binomial(a.0, a.1), exact_binomial(b.0, b.1), exact_binomial(c.0, c.1)) {
        (Some(x), Some(y), Some(z)) => match x.checked_mul(y) {
            Some(num) => num as f64 / z as f64,
            None => (x as f64 * y as f64) / z as f64,
        },
        _ => (ln_binomial(a.0, a.1) + ln_binomial(b.0, b.1) - ln_binomial(c.0, c.1)).exp(),
    }
}

/// The `N + 1` scar states with `E_n = h(2n - N) + N D` and Neel weights
/// `binom(N, n) / 2^N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScarTower {
    pub n_sites: usize,
    pub field: f64,
    pub anisotropy: f64,
}

impl ScarTower {
    pub fn new(n_sites: usize, field: f64, anisotropy: f64) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidParameter("scar tower needs at least one site".into()));
        }
        Ok(Self { n_sites, field, anisotropy })
    }

    pub fn energy(&self, n: usize) -> f64 {
        let big_n = self.n_sites as f64;
        self.field * (2.0 * n as f64 - big_n) + big_n * self.anisotropy
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..=self.n_sites).map(|n| self.energy(n)).collect()
    }

    /// `binom(N, n)` numerators over the common denominator `2^N` (exact for `N <= 60`).
    pub fn weight_numerators(&self) -> Option<Vec<u128>> {
        (0..=self.n_sites).map(|n| exact_binomial(self.n_sites, n)).collect()
    }

    pub fn weight(&self, n: usize) -> f64 {
        if n > self.n_sites {
            return 0.0;
        }
        match exact_binomial(self.n_sites, n) {
            Some(b) => b as f64 / 2f64.powi(self.n_sites as i32),
            None => (ln_binomial(self.n_sites, n) - self.n_sites as f64 * 2f64.ln()).exp(),
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..=self.n_sites).map(|n| self.weight(n)).collect()
    }

    /// Energy distribution of the nematic Neel state (unshifted energies).
    pub fn distribution(&self) -> Result<EnergyDistribution> {
        if self.field == 0.0 {
            return EnergyDistribution::new(vec![(self.energy(0), 1.0)], 0.0);
        }
        let mut entries: Vec<(f64, f64)> = (0..=self.n_sites).map(|n| (self.energy(n), self.weight(n))).collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        entries.retain(|e| e.1 > 0.0);
        EnergyDistribution::new(entries, 0.0)
    }

    /// `F(t) = |cos(h t)|^N`.
    pub fn fidelity(&self, t: f64) -> f64 {
        (self.field * t).cos().abs().powi(self.n_sites as i32)
    }

    /// Squared Schmidt value `lambda_k^(n)` for a cut with `n_a` sites in `A`.
    /// Out-of-range indices give zero; see [`ScarTower::schmidt_in_range`].
    pub fn schmidt(&self, n: usize, n_a: usize, k: usize) -> f64 {
        if !self.schmidt_in_range(n, n_a, k) {
            return 0.0;
        }
        let n_b = self.n_sites - n_a;
        binomial_ratio((n_a, k), (n_b, n - k), (self.n_sites, n))
    }

    pub fn schmidt_in_range(&self, n: usize, n_a: usize, k: usize) -> bool {
        n <= self.n_sites && n_a <= self.n_sites && k <= n.min(n_a) && n - k <= self.n_sites - n_a
    }

    /// All nonzero squared Schmidt values, descending.
    pub fn schmidt_spectrum(&self, n: usize, n_a: usize) -> Vec<f64> {
        let mut out: Vec<f64> = (0..=n.min(n_a))
            .filter(|&k| self.schmidt_in_range(n, n_a, k))
            .map(|k| self.schmidt(n, n_a, k))
            .filter(|&l| l > 0.0)
            .collect();
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }

    /// `binom(N/2, n/2)^2 / binom(N, n)` for the half cut; needs even `N` and `n`.
    pub fn lambda_max_half_cut(&self, n: usize) -> Result<f64> {
        if !self.n_sites.is_multiple_of(2) || !n.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "half-cut lambda_max needs even N and n (N = {}, n = {n})",
                self.n_sites
            )));
        }
        if n > self.n_sites {
            return Err(Error::InvalidParameter(format!("n = {n} exceeds N = {}", self.n_sites)));
        }
        let half = self.n_sites / 2;
        Ok(binomial_ratio((half, n / 2), (half, n / 2), (self.n_sites, n)))
    }

    /// Largest squared Schmidt value for any cut and any `n`, by enumeration over `k`.
    pub fn lambda_max(&self, n: usize, n_a: usize) -> f64 {
        (0..=n.min(n_a)).map(|k| self.schmidt(n, n_a, k)).fold(0.0, f64::max)
    }

    /// `(1/T) int_0^T F^2 dt = Gamma(N + 1/2) / (sqrt(pi) Gamma(N + 1))` for `T` a
    /// positive multiple of `pi / h`.
    pub fn time_average(&self, t_total: f64) -> Result<f64> {
        if self.field == 0.0 {
            return Err(Error::InvalidParameter("time average closed form needs h != 0".into()));
        }
        let period = PI / self.field.abs();
        let multiple = t_total / period;
        if !(t_total > 0.0) || (multiple - multiple.round()).abs() > 1e-9 * multiple.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "T = {t_total} is not a positive multiple of pi/h = {period}"
            )));
        }
        let n = self.n_sites as f64;
        Ok((ln_gamma(n + 0.5) - ln_gamma(n + 1.0) - 0.5 * PI.ln()).exp())
    }
}

/// `S_inf ~ (1/2) log N + (1/2) log(pi b (1 - b) / 2)`.
pub fn sinf_asymptotic(n_sites: usize, b: f64) -> Result<f64> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::InvalidParameter(format!("b = {b} outside (0, 1)")));
    }
    Ok(0.5 * (n_sites as f64).ln() + 0.5 * (PI * b * (1.0 - b) / 2.0).ln())
}

/// Scar state `|S_n>`: equal-magnitude superposition of configurations with `n`
/// sites in `|+1>` and the rest in `|-1>`, signed by `(-1)` per `|+1>` on the even
/// sublattice. With this sign the nematic Neel state expands as
/// `sum_n c_n |S_n>` with `|c_n|^2 = binom(N, n) / 2^N`.
pub fn scar_state(lattice: &Lattice, n: usize) -> Result<StateVector> {
    if lattice.local_dim() != 3 {
        return Err(Error::InvalidModel("scar states live on spin-1 sites".into()));
    }
    if !lattice.is_bipartite() {
        return Err(Error::InvalidLattice("scar tower needs a bipartite lattice".into()));
    }
    let sites = lattice.num_sites();
    if n > sites {
        return Err(Error::InvalidParameter(format!("n = {n} exceeds N = {sites}")));
    }
    let dim = lattice.hilbert_dim().ok_or_else(|| Error::InvalidLattice("Hilbert space dimension overflows".into()))?;
    if sites >= usize::BITS as usize {
        return Err(Error::InvalidLattice("too many sites to enumerate".into()));
    }
    let amp = 1.0 / binomial(sites, n).sqrt();
    let mut v = vec![Complex64::new(0.0, 0.0); dim];
    for mask in 0usize..(1 << sites) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let mut index = 0;
        let mut sign = 1.0;
        for site in 0..sites {
            let up = mask >> site & 1 == 1;
            index = index * 3 + if up { 0 } else { 2 };
            if up && lattice.sublattice(site) == Some(0) {
                sign = -sign;
            }
        }
        v[index] = Complex64::new(sign * amp, 0.0);
    }
    StateVector::new(v)
}
