//! Exact diagonalization, energy distributions, survival amplitudes and the
//! cumulative-distribution comparison against a Gaussian.

use std::f64::consts::PI;

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{l2_norm, DenseOperator, Hamiltonian, StateVector, STATE_NORM_TOL};

pub const DEFAULT_DIM_CAP: usize = 20_000;
pub const DEFAULT_WEIGHT_CUT: f64 = 1e-14;
/// Relative degeneracy tolerance (times the spectral scale `h * N`).
pub const DEGENERACY_REL_TOL: f64 = 1e-9;
/// Smallest admissible retained weight after dropping coefficients below the cut.
pub const MIN_RETAINED_WEIGHT: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct DiagonalizeOptions {
    pub max_dim: usize,
}

impl Default for DiagonalizeOptions {
    fn default() -> Self {
        Self { max_dim: DEFAULT_DIM_CAP }
    }
}

#[derive(Debug, Clone)]
enum Eigenbasis {
    Identity,
    Real(Mat<f64>),
    Complex(Mat<Complex64>),
}

/// Eigenvalues (ascending, shifted so the ground energy is zero) and eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    energies: Vec<f64>,
    basis: Eigenbasis,
    shift: f64,
    degeneracy_tol: f64,
}

impl EigenDecomposition {
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Ground energy of the unshifted operator; `E_unshifted = E + shift`.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn degeneracy_tol(&self) -> f64 {
        self.degeneracy_tol
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Diagonal operator: the eigenbasis is the computational basis.
    pub fn from_diagonal(energies: &[f64]) -> Result<Self> {
        if energies.is_empty() || energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidParameter("energies must be finite and nonempty".into()));
        }
        let mut order: Vec<usize> = (0..energies.len()).collect();
        order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
        let basis = if order.iter().enumerate().all(|(i, &j)| i == j) {
            Eigenbasis::Identity
        } else {
            let n = energies.len();
            Eigenbasis::Real(Mat::from_fn(n, n, |row, col| if order[col] == row { 1.0 } else { 0.0 }))
        };
        let sorted: Vec<f64> = order.iter().map(|&i| energies[i]).collect();
        let width = sorted[sorted.len() - 1] - sorted[0];
        Ok(Self::assemble(sorted, basis, width))
    }

    /// Diagonalizes an explicit Hermitian matrix.
    pub fn from_matrix(matrix: &Mat<Complex64>) -> Result<Self> {
        let eig = matrix.self_adjoint_eigen(Side::Lower).map_err(|_| Error::NoConvergence)?;
        let energies: Vec<f64> = (0..matrix.nrows()).map(|i| eig.S()[i].re).collect();
        let width = energies.iter().copied().fold(0.0, |a: f64, e| a.max(e.abs())) * 2.0;
        let (energies, basis) = sort_pairs(energies, Eigenbasis::Complex(eig.U().to_owned()));
        Ok(Self::assemble(energies, basis, width))
    }

    fn assemble(mut energies: Vec<f64>, basis: Eigenbasis, scale: f64) -> Self {
        let shift = energies[0];
        energies.iter_mut().for_each(|e| *e -= shift);
        energies[0] = 0.0;
        Self { energies, basis, shift, degeneracy_tol: DEGENERACY_REL_TOL * scale.max(1.0) }
    }

    /// `c_j = <E_j|psi>`.
    pub fn coefficients(&self, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_dim(psi.len())?;
        Ok(match &self.basis {
            Eigenbasis::Identity => psi.to_vec(),
            Eigenbasis::Real(v) => {
                let x = Mat::from_fn(psi.len(), 2, |i, k| if k == 0 { psi[i].re } else { psi[i].im });
                let y = v.transpose() * &x;
                (0..psi.len()).map(|j| Complex64::new(y[(j, 0)], y[(j, 1)])).collect()
            }
            Eigenbasis::Complex(v) => {
                let x = Mat::from_fn(psi.len(), 1, |i, _| psi[i]);
                let y = v.adjoint() * &x;
                (0..psi.len()).map(|j| y[(j, 0)]).collect()
            }
        })
    }

    /// `sum_j c_j |E_j>`.
    pub fn synthesize(&self, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_dim(coeffs.len())?;
        Ok(match &self.basis {
            Eigenbasis::Identity => coeffs.to_vec(),
            Eigenbasis::Real(v) => {
                let x = Mat::from_fn(coeffs.len(), 2, |i, k| if k == 0 { coeffs[i].re } else { coeffs[i].im });
                let y = v * &x;
                (0..coeffs.len()).map(|j| Complex64::new(y[(j, 0)], y[(j, 1)])).collect()
            }
            Eigenbasis::Complex(v) => {
                let x = Mat::from_fn(coeffs.len(), 1, |i, _| coeffs[i]);
                let y = v * &x;
                (0..coeffs.len()).map(|j| y[(j, 0)]).collect()
            }
        })
    }

    pub fn eigenvector(&self, j: usize) -> Vec<Complex64> {
        let n = self.dim();
        match &self.basis {
            Eigenbasis::Identity => {
                let mut v = vec![Complex64::new(0.0, 0.0); n];
                v[j] = Complex64::new(1.0, 0.0);
                v
            }
            Eigenbasis::Real(v) => (0..n).map(|i| Complex64::new(v[(i, j)], 0.0)).collect(),
            Eigenbasis::Complex(v) => (0..n).map(|i| v[(i, j)]).collect(),
        }
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found });
        }
        Ok(())
    }
}

fn sort_pairs(energies: Vec<f64>, basis: Eigenbasis) -> (Vec<f64>, Eigenbasis) {
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    if order.iter().enumerate().all(|(i, &j)| i == j) {
        return (energies, basis);
    }
    let sorted = order.iter().map(|&i| energies[i]).collect();
    let basis = match basis {
        Eigenbasis::Real(v) => Eigenbasis::Real(Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, order[j])])),
        Eigenbasis::Complex(v) => Eigenbasis::Complex(Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, order[j])])),
        other => other,
    };
    (sorted, basis)
}

/// Dense exact diagonalization; energies are shifted so that `E_0 = 0`.
pub fn diagonalize(h: &Hamiltonian, opts: DiagonalizeOptions) -> Result<EigenDecomposition> {
    let dim = h.hilbert_dim()?;
    if dim > opts.max_dim {
        return Err(Error::DimensionCap { dim, cap: opts.max_dim });
    }
    let (energies, basis) = match h.dense()? {
        DenseOperator::Real(m) => {
            let eig = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::NoConvergence)?;
            let e = (0..dim).map(|i| eig.S()[i]).collect();
            (e, Eigenbasis::Real(eig.U().to_owned()))
        }
        DenseOperator::Complex(m) => {
            let eig = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::NoConvergence)?;
            let e = (0..dim).map(|i| eig.S()[i].re).collect();
            (e, Eigenbasis::Complex(eig.U().to_owned()))
        }
    };
    let (energies, basis) = sort_pairs(energies, basis);
    Ok(EigenDecomposition::assemble(energies, basis, h.spectral_bound()))
}

/// Distinct energies `E_j` with weights `w_j = |c_j|^2` (degenerate levels merged).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyDistribution {
    energies: Vec<f64>,
    weights: Vec<f64>,
    weight_cut: f64,
    discarded: f64,
}

impl EnergyDistribution {
    pub fn new(entries: Vec<(f64, f64)>, weight_cut: f64) -> Result<Self> {
        Self::with_discarded(entries, weight_cut, 0.0)
    }

    fn with_discarded(entries: Vec<(f64, f64)>, weight_cut: f64, discarded: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidDistribution("no entries".into()));
        }
        for (i, &(e, w)) in entries.iter().enumerate() {
            if !e.is_finite() {
                return Err(Error::InvalidDistribution(format!("entry {i}: energy is not finite")));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::InvalidDistribution(format!("entry {i}: weight {w} outside (0, 1]")));
            }
            if w <= weight_cut {
                return Err(Error::InvalidDistribution(format!(
                    "entry {i}: weight {w} not above the cut {weight_cut}"
                )));
            }
            if i > 0 && e <= entries[i - 1].0 {
                return Err(Error::InvalidDistribution(format!("entry {i}: energies not strictly increasing")));
            }
        }
        let total: f64 = entries.iter().map(|p| p.1).sum();
        if !(MIN_RETAINED_WEIGHT..=1.0 + 1e-10).contains(&total) {
            return Err(Error::InvalidDistribution(format!(
                "total weight {total} is not 1 (retained weight must lie in [{MIN_RETAINED_WEIGHT}, 1])"
            )));
        }
        let (energies, weights) = entries.into_iter().unzip();
        Ok(Self { energies, weights, weight_cut, discarded })
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.energies.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn weight_cut(&self) -> f64 {
        self.weight_cut
    }

    /// Weight dropped below the cut during projection.
    pub fn discarded_weight(&self) -> f64 {
        self.discarded
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(e, w)| w * e).sum()
    }

    pub fn sigma(&self) -> f64 {
        let mean = self.mean();
        let second: f64 = self.iter().map(|(e, w)| w * e * e).sum();
        (second - mean * mean).max(0.0).sqrt()
    }

    pub fn spread(&self) -> f64 {
        self.energies[self.len() - 1] - self.energies[0]
    }

    /// `f(t) = sum_j w_j exp(-i E_j t)`.
    pub fn amplitude(&self, t: f64) -> Complex64 {
        self.iter().map(|(e, w)| Complex64::from_polar(w, -e * t)).sum()
    }

    pub fn fidelity(&self, t: f64) -> f64 {
        self.amplitude(t).norm()
    }

    /// The same distribution with every energy moved by `delta`.
    pub fn translated(&self, delta: f64) -> Self {
        Self { energies: self.energies.iter().map(|e| e + delta).collect(), ..self.clone() }
    }
}

/// `c_j = <E_j|psi>` for every eigenvector, before any merging.
pub fn amplitudes(eig: &EigenDecomposition, psi: &StateVector) -> Result<Vec<Complex64>> {
    eig.coefficients(psi.as_slice())
}

/// Groups eigenvalues into clusters with `|E - E_first| <= tol`; returns index ranges.
pub fn degenerate_clusters(energies: &[f64], tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=energies.len() {
        if i == energies.len() || energies[i] - energies[start] > tol {
            out.push(start..i);
            start = i;
        }
    }
    out
}

pub fn project_state(eig: &EigenDecomposition, psi: &StateVector, weight_cut: f64) -> Result<EnergyDistribution> {
    let coeffs = amplitudes(eig, psi)?;
    let mut entries = Vec::new();
    let mut discarded = 0.0;
    for range in degenerate_clusters(eig.energies(), eig.degeneracy_tol()) {
        let w: f64 = coeffs[range.clone()].iter().map(Complex64::norm_sqr).sum();
        if w <= weight_cut {
            discarded += w;
            continue;
        }
        let e = range.clone().map(|j| coeffs[j].norm_sqr() * eig.energies()[j]).sum::<f64>() / w;
        entries.push((e, w.min(1.0)));
    }
    let retained: f64 = entries.iter().map(|p| p.1).sum();
    if retained < MIN_RETAINED_WEIGHT {
        return Err(Error::InvalidDistribution(format!(
            "retained weight {retained} after the cut {weight_cut}; the cut is mis-set"
        )));
    }
    EnergyDistribution::with_discarded(entries, weight_cut, discarded)
}

/// `f(t)`, `F(t) = |f(t)|` and the continuously unwrapped phase `alpha(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSeries {
    pub times: Vec<f64>,
    pub amplitude: Vec<Complex64>,
    pub fidelity: Vec<f64>,
    pub phase: Vec<f64>,
}

impl SurvivalSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `F` at `t`: the grid value when `t` is on the grid, otherwise a quadratic
    /// through the three nearest grid points. `None` outside the grid.
    pub fn fidelity_at(&self, t: f64) -> Option<f64> {
        let n = self.len();
        if n == 0 {
            return None;
        }
        let scale = 1e-12 * t.abs().max(1.0);
        let (first, last) = (self.times[0], self.times[n - 1]);
        if t < first - scale || t > last + scale {
            return None;
        }
        let idx = self.times.partition_point(|&x| x < t - scale);
        if idx < n && (self.times[idx] - t).abs() <= scale {
            return Some(self.fidelity[idx]);
        }
        if n < 3 {
            let (a, b) = (idx - 1, idx);
            let s = (t - self.times[a]) / (self.times[b] - self.times[a]);
            return Some(self.fidelity[a] * (1.0 - s) + self.fidelity[b] * s);
        }
        let nearest = if idx == 0 {
            0
        } else if idx >= n {
            n - 1
        } else if t - self.times[idx - 1] <= self.times[idx] - t {
            idx - 1
        } else {
            idx
        };
        let mid = nearest.clamp(1, n - 2);
        let (x0, x1, x2) = (self.times[mid - 1], self.times[mid], self.times[mid + 1]);
        let (y0, y1, y2) = (self.fidelity[mid - 1], self.fidelity[mid], self.fidelity[mid + 1]);
        let l0 = (t - x1) * (t - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (t - x0) * (t - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (t - x0) * (t - x1) / ((x2 - x0) * (x2 - x1));
        Some(y0 * l0 + y1 * l1 + y2 * l2)
    }
}

fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Evaluates `f(t)` on an ascending, nonnegative grid. The phase is continued
/// from `alpha(0) = 0` along the nearest branch; grids whose spacing cannot resolve
/// the fastest relative phase `(E_max - E_min) dt` are refused.
pub fn survival_amplitude(dist: &EnergyDistribution, times: &[f64]) -> Result<SurvivalSeries> {
    if times.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time grid must be finite, nonnegative and strictly increasing".into()));
    }
    let spread = dist.spread();
    let mut amplitude = Vec::with_capacity(times.len());
    let mut fidelity = Vec::with_capacity(times.len());
    let mut phase = Vec::with_capacity(times.len());
    let (mut prev_t, mut prev_alpha) = (0.0, 0.0);
    for (k, &t) in times.iter().enumerate() {
        let f = dist.amplitude(t);
        let resolution = spread * (t - prev_t);
        if resolution >= PI {
            return Err(Error::GridTooCoarse { index: k, step: resolution });
        }
        let step = wrap_angle(f.arg() - prev_alpha);
        if step.abs() >= PI * (1.0 - 1e-12) {
            return Err(Error::GridTooCoarse { index: k, step: step.abs() });
        }
        let alpha = if t == 0.0 { 0.0 } else { prev_alpha + step };
        amplitude.push(f);
        fidelity.push(f.norm());
        phase.push(alpha);
        prev_t = t;
        prev_alpha = alpha;
    }
    Ok(SurvivalSeries { times: times.to_vec(), amplitude, fidelity, phase })
}

/// Uniform grid of `steps` points on `[0, t_max]`.
pub fn uniform_grid(t_max: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..steps).map(|k| t_max * k as f64 / (steps - 1) as f64).collect(),
    }
}

/// `exp(-i H t) |psi>` in the eigenbasis (shifted energies).
pub fn evolve(eig: &EigenDecomposition, psi: &StateVector, t: f64) -> Result<StateVector> {
    let mut c = eig.coefficients(psi.as_slice())?;
    for (cj, &e) in c.iter_mut().zip(eig.energies()) {
        *cj *= Complex64::from_polar(1.0, -e * t);
    }
    let out = eig.synthesize(&c)?;
    let norm = l2_norm(&out);
    if (norm - 1.0).abs() > STATE_NORM_TOL {
        return Err(Error::Numerical(format!("evolution changed the norm to {norm}")));
    }
    StateVector::new(out)
}

/// `J(x) = sum_{E_j <= x} w_j`.
pub fn empirical_cdf(dist: &EnergyDistribution, x: f64) -> f64 {
    dist.iter().take_while(|(e, _)| *e <= x).map(|(_, w)| w).sum()
}

pub fn gaussian_cdf(mean: f64, sigma: f64, x: f64) -> Result<f64> {
    Ok(normal(mean, sigma)?.cdf(x))
}

fn normal(mean: f64, sigma: f64) -> Result<Normal> {
    if !(sigma > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Normal::new(mean, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// `sup_x |J(x) - G(x)|`, evaluated at both one-sided limits of every jump of `J`.
pub fn berry_esseen_sup(dist: &EnergyDistribution, mean: f64, sigma: f64) -> Result<f64> {
    let g = normal(mean, sigma)?;
    let mut below = 0.0;
    let mut sup: f64 = 0.0;
    for (e, w) in dist.iter() {
        let ge = g.cdf(e);
        sup = sup.max((below - ge).abs());
        below += w;
        sup = sup.max((below - ge).abs());
    }
    Ok(sup)
}

/// Single constant `C` with `sup|J - G| <= C / sqrt(N)` across a family of sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerryEsseenFit {
    pub points: Vec<(usize, f64)>,
    pub constant: f64,
}

impl BerryEsseenFit {
    pub fn fit(points: Vec<(usize, f64)>) -> Self {
        let constant = points.iter().map(|&(n, sup)| sup * (n as f64).sqrt()).fold(0.0, f64::max);
        Self { points, constant }
    }

    pub fn violations(&self) -> usize {
        self.points.iter().filter(|&&(n, sup)| sup > self.constant / (n as f64).sqrt() * (1.0 + 1e-12)).count()
    }

    pub fn is_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 < w[0].1)
    }
}

/// Spectral measure of a state restricted to its Krylov space.
///
/// When the Krylov space of `psi` closes (an invariant subspace is reached), the
/// Ritz values are exact eigenvalues, the squared first components of the Ritz
/// vectors are the weights `p(E)` and each Ritz vector is the normalized
/// projection of `psi` onto its eigenspace. Energies are unshifted.
#[derive(Debug, Clone)]
pub struct KrylovMeasure {
    pub distribution: EnergyDistribution,
    /// Normalized projections of `psi` onto each populated eigenspace, in the
    /// order of `distribution.energies()`.
    pub projections: Vec<StateVector>,
    pub steps: usize,
}

/// Lanczos with full reorthogonalization; fails unless the Krylov space closes
/// within `max_steps`.
pub fn krylov_measure(h: &Hamiltonian, psi: &StateVector, max_steps: usize, weight_cut: f64) -> Result<KrylovMeasure> {
    let dim = h.hilbert_dim()?;
    if psi.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: psi.len() });
    }
    let tol = 1e-10 * h.spectral_bound().max(1.0);
    let mut basis: Vec<Vec<Complex64>> = vec![psi.as_slice().to_vec()];
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    loop {
        let k = basis.len() - 1;
        let mut w = h.apply(&basis[k])?;
        alphas.push(crate::model::inner(&basis[k], &w).re);
        for _ in 0..2 {
            for v in &basis {
                let proj = crate::model::inner(v, &w);
                w.iter_mut().zip(v).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let beta = l2_norm(&w);
        if beta <= tol {
            break;
        }
        if basis.len() >= max_steps.min(dim) {
            return Err(Error::NoConvergence);
        }
        betas.push(beta);
        w.iter_mut().for_each(|x| *x /= beta);
        basis.push(w);
    }
    let m = alphas.len();
    let t = Mat::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i == j + 1 {
            betas[j]
        } else if j == i + 1 {
            betas[i]
        } else {
            0.0
        }
    });
    let eig = t.self_adjoint_eigen(Side::Lower).map_err(|_| Error::NoConvergence)?;
    let u = eig.U();
    let mut entries = Vec::new();
    let mut projections = Vec::new();
    let mut discarded = 0.0;
    for j in 0..m {
        let w = u[(0, j)] * u[(0, j)];
        if w <= weight_cut {
            discarded += w;
            continue;
        }
        let mut v = vec![Complex64::new(0.0, 0.0); dim];
        for (k, b) in basis.iter().enumerate() {
            let coef = u[(k, j)];
            v.iter_mut().zip(b).for_each(|(x, y)| *x += y * coef);
        }
        // fix the phase so that <psi|projection> > 0
        let phase = crate::model::inner(psi.as_slice(), &v);
        let phase = if phase.norm() > 0.0 { phase.conj() / phase.norm() } else { Complex64::new(1.0, 0.0) };
        v.iter_mut().for_each(|x| *x *= phase);
        entries.push((eig.S()[j], w.min(1.0)));
        projections.push(StateVector::normalized(v)?);
    }
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[a].0.total_cmp(&entries[b].0));
    let entries = order.iter().map(|&i| entries[i]).collect();
    let projections = order.iter().map(|&i| projections[i].clone()).collect();
    Ok(KrylovMeasure {
        distribution: EnergyDistribution::with_discarded(entries, weight_cut, discarded)?,
        projections,
        steps: m,
    })
}
