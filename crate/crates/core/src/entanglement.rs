//! Approximate eigenstates built from interval projections, Schmidt spectra,
//! Renyi entropies and the entropy bounds that follow from a revival.

use std::collections::BTreeSet;
use std::fmt;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::check::BoundCheck;
use crate::error::{Error, Result};
use crate::model::{inner, l2_norm, Lattice, StateVector};
use crate::revival::{IntervalPartition, PeakStatistics};
use crate::spectral::EigenDecomposition;

/// Default squared-Schmidt threshold for the rank entropy `S_0`.
pub const DEFAULT_RANK_CUT: f64 = 1e-12;

/// `|E_l> = p^{-1/2} sum_{E_j in interval l} c_j |E_j>`.
#[derive(Debug, Clone)]
pub struct ApproxEigenstate {
    pub l: i64,
    /// Centre of the interval (shifted energy scale).
    pub energy: f64,
    pub weight: f64,
    pub residual: f64,
    pub vector: StateVector,
    members: Vec<(f64, f64)>,
}

impl ApproxEigenstate {
    /// Builds the state from eigenvector coefficients `c_j = <E_j|Psi>`.
    pub fn build(
        eig: &EigenDecomposition,
        coeffs: &[Complex64],
        partition: &IntervalPartition,
        l: i64,
    ) -> Result<Self> {
        if coeffs.len() != eig.dim() {
            return Err(Error::DimensionMismatch { expected: eig.dim(), found: coeffs.len() });
        }
        let energy = partition.center(l);
        let mut masked = vec![Complex64::new(0.0, 0.0); coeffs.len()];
        let mut members = Vec::new();
        let mut weight = 0.0;
        for (j, (&c, &e)) in coeffs.iter().zip(eig.energies()).enumerate() {
            if partition.locate(e) == (l, true) && c.norm_sqr() > 0.0 {
                masked[j] = c;
                weight += c.norm_sqr();
                members.push((e, c.norm_sqr()));
            }
        }
        if !(weight > 0.0) {
            return Err(Error::EmptyInterval(l));
        }
        let scale = 1.0 / weight.sqrt();
        masked.iter_mut().for_each(|c| *c *= scale);
        let vector = StateVector::normalized(eig.synthesize(&masked)?)?;
        let members: Vec<(f64, f64)> = members.into_iter().map(|(e, w)| (e, w / weight)).collect();
        let residual = members.iter().map(|&(e, q)| q * (e - energy).powi(2)).sum::<f64>().sqrt();
        Ok(Self { l, energy, weight, residual, vector, members })
    }

    /// `|| U_t |E_l> - exp(-i E_l t) |E_l> ||`, evaluated in the eigenbasis.
    pub fn dephasing_error(&self, t: f64) -> f64 {
        self.members.iter().map(|&(e, q)| q * 2.0 * (1.0 - ((e - self.energy) * t).cos())).sum::<f64>().sqrt()
    }

    /// `sqrt(2 (1 - cos(delta t / tau)))`, valid while `|delta t / tau| <= pi`.
    pub fn dephasing_bound(partition: &IntervalPartition, t: f64) -> Option<f64> {
        let x = partition.delta * t / partition.tau;
        (x.abs() <= std::f64::consts::PI).then(|| (2.0 * (1.0 - x.cos())).sqrt())
    }
}

/// Approximate eigenstates for every interval with weight above `1 / (c N)`.
pub fn qualifying_states(
    eig: &EigenDecomposition,
    coeffs: &[Complex64],
    stats: &PeakStatistics,
    c: f64,
    n_sites: usize,
) -> Result<Vec<ApproxEigenstate>> {
    let cutoff = 1.0 / (c * n_sites as f64);
    stats
        .weights
        .iter()
        .filter(|(_, &p)| p > cutoff)
        .map(|(&l, _)| ApproxEigenstate::build(eig, coeffs, &stats.partition, l))
        .collect()
}

/// A set of sites `A` with its boundary counted in lattice edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    sites: Vec<usize>,
    boundary: usize,
}

impl Region {
    pub fn new(lattice: &Lattice, sites: impl IntoIterator<Item = usize>) -> Result<Self> {
        let set: BTreeSet<usize> = sites.into_iter().collect();
        let n = lattice.num_sites();
        if set.is_empty() || set.len() >= n {
            return Err(Error::InvalidParameter(format!("region must be a nonempty proper subset of the {n} sites")));
        }
        if let Some(&bad) = set.iter().find(|&&s| s >= n) {
            return Err(Error::InvalidParameter(format!("site {bad} is not on the lattice")));
        }
        let boundary = lattice.forward_bonds().iter().filter(|(a, b)| set.contains(a) != set.contains(b)).count();
        Ok(Self { sites: set.into_iter().collect(), boundary })
    }

    /// The first `floor(N / 2)` sites in row-major order.
    pub fn half_cut(lattice: &Lattice) -> Result<Self> {
        Self::new(lattice, 0..lattice.num_sites() / 2)
    }

    /// `len` consecutive sites starting at `start`.
    pub fn block(lattice: &Lattice, start: usize, len: usize) -> Result<Self> {
        Self::new(lattice, start..start + len)
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Number of lattice edges between `A` and its complement.
    pub fn boundary(&self) -> usize {
        self.boundary
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let contiguous = self.sites.windows(2).all(|w| w[1] == w[0] + 1);
        if contiguous {
            write!(f, "sites {}..{}", self.sites[0], self.sites[self.sites.len() - 1] + 1)
        } else {
            let list: Vec<String> = self.sites.iter().map(|s| s.to_string()).collect();
            write!(f, "sites {{{}}}", list.join(","))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementSpectrum {
    pub region: Region,
    /// Squared Schmidt values, descending.
    pub schmidt_sq: Vec<f64>,
    pub rank_cut: f64,
}

impl EntanglementSpectrum {
    pub fn lambda_max(&self) -> f64 {
        self.schmidt_sq.first().copied().unwrap_or(0.0)
    }

    pub fn rank(&self) -> usize {
        self.schmidt_sq.iter().filter(|&&l| l > self.rank_cut).count()
    }

    pub fn entropy(&self, alpha: f64) -> Result<f64> {
        renyi_entropy(self, alpha)
    }
}

/// Squared Schmidt values of `psi` across `A | A^c`.
pub fn schmidt_spectrum(
    psi: &StateVector,
    region: &Region,
    lattice: &Lattice,
    rank_cut: f64,
) -> Result<EntanglementSpectrum> {
    let n = lattice.num_sites();
    let d = lattice.local_dim();
    let dim = lattice.hilbert_dim().ok_or_else(|| Error::InvalidLattice("Hilbert space dimension overflows".into()))?;
    if psi.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: psi.len() });
    }
    if region.sites.iter().any(|&s| s >= n) || region.sites.len() >= n {
        return Err(Error::InvalidParameter("region does not fit the lattice".into()));
    }
    let in_a: Vec<bool> = (0..n).map(|s| region.sites.binary_search(&s).is_ok()).collect();
    let rows = d.pow(region.sites.len() as u32);
    let cols = dim / rows;
    let mut m = Mat::<Complex64>::zeros(rows, cols);
    for (idx, &amp) in psi.as_slice().iter().enumerate() {
        let (mut r, mut c, mut rest) = (0, 0, idx);
        let mut digits = vec![0; n];
        for site in (0..n).rev() {
            digits[site] = rest % d;
            rest /= d;
        }
        for site in 0..n {
            if in_a[site] {
                r = r * d + digits[site];
            } else {
                c = c * d + digits[site];
            }
        }
        m[(r, c)] = amp;
    }
    let sv = m.singular_values().map_err(|_| Error::NoConvergence)?;
    let mut schmidt_sq: Vec<f64> = sv.iter().map(|s| s * s).collect();
    schmidt_sq.sort_by(|a, b| b.total_cmp(a));
    Ok(EntanglementSpectrum { region: region.clone(), schmidt_sq, rank_cut })
}

/// `S_alpha = log(sum lambda^alpha) / (1 - alpha)`, with `alpha = 1` the von Neumann
/// entropy, `alpha = inf` giving `-log lambda_max` and `alpha = 0` the log of the
/// number of values above the rank cut.
pub fn renyi_entropy(spec: &EntanglementSpectrum, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("Renyi order {alpha} must be nonnegative")));
    }
    let lambdas = spec.schmidt_sq.iter().copied().filter(|&l| l > 0.0);
    let s = if alpha.is_infinite() {
        -spec.lambda_max().ln()
    } else if alpha == 0.0 {
        (spec.rank().max(1) as f64).ln()
    } else if alpha == 1.0 {
        -lambdas.map(|l| l * l.ln()).sum::<f64>()
    } else {
        lambdas.map(|l| l.powf(alpha)).sum::<f64>().ln() / (1.0 - alpha)
    };
    Ok(s.max(0.0))
}

/// `alpha / (alpha - 1) * [log(c N) + |dA| log chi]`, with coefficient one at `alpha = inf`.
pub fn renyi_bound(alpha: f64, c: f64, n_sites: usize, chi: usize, boundary: usize) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidParameter(format!("entropy bound needs alpha > 1 (got {alpha})")));
    }
    if !(c > 1.0) || chi == 0 || n_sites == 0 {
        return Err(Error::InvalidParameter("entropy bound needs c > 1, chi >= 1 and N >= 1".into()));
    }
    let coefficient = if alpha.is_infinite() { 1.0 } else { alpha / (alpha - 1.0) };
    Ok(coefficient * ((c * n_sites as f64).ln() + boundary as f64 * (chi as f64).ln()))
}

pub fn check_renyi_bound(
    spec: &EntanglementSpectrum,
    alpha: f64,
    c: f64,
    n_sites: usize,
    chi: usize,
) -> Result<BoundCheck> {
    let bound = renyi_bound(alpha, c, n_sites, chi, spec.region.boundary())?;
    Ok(BoundCheck::upper(renyi_entropy(spec, alpha)?, bound))
}

/// `|<Psi|E>|^2 <= chi^{|dA|} lambda_max`.
pub fn fidelity_rank_check(
    initial: &StateVector,
    target: &StateVector,
    spec: &EntanglementSpectrum,
    chi: usize,
) -> Result<BoundCheck> {
    if initial.len() != target.len() {
        return Err(Error::DimensionMismatch { expected: initial.len(), found: target.len() });
    }
    let overlap = inner(initial.as_slice(), target.as_slice()).norm_sqr();
    let bound = (chi as f64).powi(spec.region.boundary() as i32) * spec.lambda_max();
    Ok(BoundCheck::upper(overlap, bound))
}

/// `K_i(E) = prod_{j != i} (1 - (E - E_i)^2 / (E_j - E_i)^2)`.
pub fn filter_value(ladder: &[f64], i: usize, e: f64) -> f64 {
    let ei = ladder[i];
    ladder.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &ej)| 1.0 - ((e - ei) / (ej - ei)).powi(2)).product()
}

/// `K_i(H) |Psi>` applied through the eigenbasis. The product runs over the given
/// ladder, normally the occupied levels of the state's energy distribution.
pub fn apply_filter(
    eig: &EigenDecomposition,
    coeffs: &[Complex64],
    ladder: &[f64],
    i: usize,
) -> Result<Vec<Complex64>> {
    if i >= ladder.len() {
        return Err(Error::InvalidParameter(format!("ladder index {i} out of range ({} levels)", ladder.len())));
    }
    let mut sorted = ladder.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted.windows(2).any(|w| w[1] - w[0] <= eig.degeneracy_tol()) {
        return Err(Error::InvalidParameter("ladder energies must be distinct".into()));
    }
    if coeffs.len() != eig.dim() {
        return Err(Error::DimensionMismatch { expected: eig.dim(), found: coeffs.len() });
    }
    let filtered: Vec<Complex64> =
        coeffs.iter().zip(eig.energies()).map(|(&c, &e)| c * filter_value(ladder, i, e)).collect();
    eig.synthesize(&filtered)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankBoundParams {
    pub h: f64,
    pub n_sites: usize,
    pub tau: f64,
    pub local_dim: usize,
    pub b: usize,
    pub chi: usize,
}

/// `7 sqrt(h N tau |dA|) log(h N^2 tau d^b) + |dA| log chi`.
pub fn rank_bound(p: &RankBoundParams, boundary: usize) -> Result<f64> {
    if !(p.h > 0.0 && p.tau > 0.0) || p.n_sites == 0 || p.local_dim == 0 || p.chi == 0 {
        return Err(Error::InvalidParameter("rank bound needs h, tau > 0 and N, d, chi >= 1".into()));
    }
    let n = p.n_sites as f64;
    let log_arg = p.h * n * n * p.tau * (p.local_dim as f64).powi(p.b as i32);
    Ok(7.0 * (p.h * n * p.tau * boundary as f64).sqrt() * log_arg.ln() + boundary as f64 * (p.chi as f64).ln())
}

/// `S_0` of the normalized filtered state against [`rank_bound`].
pub fn rank_check(
    filtered: &[Complex64],
    region: &Region,
    lattice: &Lattice,
    params: &RankBoundParams,
    rank_cut: f64,
) -> Result<(EntanglementSpectrum, BoundCheck)> {
    let norm = l2_norm(filtered);
    if !(norm > 0.0) {
        return Err(Error::Numerical("filtered state vanishes".into()));
    }
    let psi = StateVector::normalized(filtered.to_vec())?;
    let spec = schmidt_spectrum(&psi, region, lattice, rank_cut)?;
    let bound = rank_bound(params, region.boundary())?;
    let check = BoundCheck::upper(renyi_entropy(&spec, 0.0)?, bound);
    Ok((spec, check))
}
