//! Revival detection, the energy-interval partition around a revival time, and
//! the inequalities that tie peak weights to the revival quality.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::check::{BoundCheck, Verdict};
use crate::error::{Error, Result};
use crate::model::{hermiticity_deviation, inner, Hamiltonian, Lattice, ProductState, HERMITIAN_TOL};
use crate::spectral::{evolve, EigenDecomposition, EnergyDistribution, SurvivalSeries};

/// Consecutive grid values closer than this belong to one plateau.
pub const PLATEAU_TOL: f64 = 1e-12;
/// Relative tolerance for `delta = 0` membership, scaled by `max(1, |center|)`.
pub const CENTER_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevivalEvent {
    pub tau: f64,
    pub epsilon: f64,
    pub alpha_tau: f64,
}

impl RevivalEvent {
    pub fn new(tau: f64, epsilon: f64, alpha_tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("revival time {tau} must be positive")));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!("epsilon {epsilon} outside [0, 1]")));
        }
        if !alpha_tau.is_finite() {
            return Err(Error::InvalidParameter("revival phase is not finite".into()));
        }
        Ok(Self { tau, epsilon, alpha_tau })
    }

    /// Event at `tau` with `epsilon` and `alpha` taken directly from `f(tau)`.
    pub fn from_distribution(dist: &EnergyDistribution, tau: f64) -> Result<Self> {
        let f = dist.amplitude(tau);
        Self::new(tau, (1.0 - f.norm()).abs().min(1.0), f.arg())
    }
}

/// Local maxima of `F` at `t > 0` with `F >= 1 - threshold`.
///
/// Runs of equal values (within [`PLATEAU_TOL`]) count as one maximum when both
/// outside neighbours are lower; the first positive time of the run is reported.
pub fn detect_revivals(series: &SurvivalSeries, threshold: f64) -> Result<Vec<RevivalEvent>> {
    if series.is_empty() {
        return Err(Error::InvalidParameter("empty survival series".into()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside (0, 1)")));
    }
    let f = &series.fidelity;
    let n = f.len();
    let mut events = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && (f[end + 1] - f[end]).abs() <= PLATEAU_TOL {
            end += 1;
        }
        let value = f[start];
        let left_lower = start == 0 || f[start - 1] < value;
        let right_lower = end + 1 == n || f[end + 1] < value;
        if left_lower && right_lower && value >= 1.0 - threshold {
            if let Some(k) = (start..=end).find(|&k| series.times[k] > 0.0) {
                events.push(RevivalEvent::new(series.times[k], (1.0 - f[k]).abs().min(1.0), series.phase[k])?);
            }
        }
        start = end + 1;
    }
    Ok(events)
}

/// Intervals of half width `delta / tau` centred on `(2 pi l - alpha) / tau`.
///
/// The centres are the points where `E tau + alpha` is a multiple of `2 pi`, so a
/// perfect revival puts every populated level on a centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalPartition {
    pub tau: f64,
    pub delta: f64,
    pub alpha_tau: f64,
    pub l_min: i64,
    pub l_max: i64,
}

impl IntervalPartition {
    /// Partition covering energies in `[0, e_max]`.
    pub fn new(tau: f64, delta: f64, alpha_tau: f64, e_max: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau = {tau} must be positive")));
        }
        if !(0.0..=PI).contains(&delta) {
            return Err(Error::InvalidParameter(format!("delta = {delta} outside [0, pi]")));
        }
        if !(e_max >= 0.0 && e_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("spectral range [0, {e_max}] is invalid")));
        }
        let l_min = (alpha_tau / (2.0 * PI)).floor() as i64;
        let l_max = ((e_max * tau + alpha_tau) / (2.0 * PI)).ceil() as i64;
        Ok(Self { tau, delta, alpha_tau, l_min, l_max })
    }

    pub fn center(&self, l: i64) -> f64 {
        (2.0 * PI * l as f64 - self.alpha_tau) / self.tau
    }

    pub fn half_width(&self) -> f64 {
        self.delta / self.tau
    }

    /// Nearest interval index and whether `energy` lies inside it.
    pub fn locate(&self, energy: f64) -> (i64, bool) {
        let phase = energy * self.tau + self.alpha_tau;
        let l = (phase / (2.0 * PI)).round();
        let theta = (phase - 2.0 * PI * l).abs();
        let l = l as i64;
        let inside = if self.delta > 0.0 {
            theta <= self.delta
        } else {
            theta <= CENTER_REL_TOL * self.center(l).abs().max(1.0)
        };
        (l, inside)
    }

    /// `n = h N tau / (2 pi)`, the number of centres per spectral range.
    pub fn n_max(spectral_bound: f64, tau: f64) -> f64 {
        spectral_bound * tau / (2.0 * PI)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakStatistics {
    pub partition: IntervalPartition,
    pub epsilon: f64,
    /// In-peak weight for every `l` of the partition range (zero entries kept).
    pub weights: BTreeMap<i64, f64>,
    pub in_peak_total: f64,
    pub gap_total: f64,
    /// Lower bound `1 - epsilon / (1 - cos delta)` on the in-peak weight.
    pub in_peak_bound: f64,
}

impl PeakStatistics {
    pub fn in_peak_check(&self) -> BoundCheck {
        BoundCheck::lower(self.in_peak_total, self.in_peak_bound)
    }

    /// Number of intervals whose weight exceeds `1 / (c N)`.
    pub fn peak_count(&self, c: f64, n_sites: usize) -> usize {
        let cutoff = 1.0 / (c * n_sites as f64);
        self.weights.values().filter(|&&p| p > cutoff).count()
    }

    pub fn weight(&self, l: i64) -> f64 {
        self.weights.get(&l).copied().unwrap_or(0.0)
    }
}

/// `1 - epsilon / (1 - cos delta)`; `-inf` when `delta = 0` and `epsilon > 0`.
pub fn in_peak_lower_bound(epsilon: f64, delta: f64) -> f64 {
    let denom = 1.0 - delta.cos();
    if denom > 0.0 {
        1.0 - epsilon / denom
    } else if epsilon == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    }
}

/// Splits the distribution into in-peak and gap weight for the given revival.
/// The partition covers `[0, max(E)]`; shifted energies are expected.
pub fn partition_weights(dist: &EnergyDistribution, event: &RevivalEvent, delta: f64) -> Result<PeakStatistics> {
    let e_max = dist.energies().last().copied().unwrap_or(0.0).max(0.0);
    let mut partition = IntervalPartition::new(event.tau, delta, event.alpha_tau, e_max)?;
    let mut weights = BTreeMap::new();
    for l in partition.l_min..=partition.l_max {
        weights.insert(l, 0.0);
    }
    let (mut in_peak_total, mut gap_total) = (0.0, 0.0);
    for (e, w) in dist.iter() {
        let (l, inside) = partition.locate(e);
        if inside {
            *weights.entry(l).or_insert(0.0) += w;
            in_peak_total += w;
        } else {
            gap_total += w;
        }
    }
    if let (Some(&lo), Some(&hi)) = (weights.keys().next(), weights.keys().next_back()) {
        partition.l_min = lo;
        partition.l_max = hi;
    }
    Ok(PeakStatistics {
        partition,
        epsilon: event.epsilon,
        weights,
        in_peak_total,
        gap_total,
        in_peak_bound: in_peak_lower_bound(event.epsilon, delta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakCountParams {
    pub n_sites: usize,
    pub lattice_dim: usize,
    pub h: f64,
    pub tau: f64,
    pub c: f64,
    pub delta: f64,
    pub epsilon: f64,
    /// Width scale `s = sigma / sqrt(N)` of the state.
    pub s: f64,
    pub k_assumed: f64,
}

impl PeakCountParams {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_sites == 0 {
            return bad("N must be positive".into());
        }
        if !(self.c > 1.0) {
            return bad(format!("c = {} must exceed 1", self.c));
        }
        if !(self.delta > 0.0 && self.delta <= PI) {
            return bad(format!("delta = {} outside (0, pi]", self.delta));
        }
        if !(self.s > 0.0) {
            return bad(format!("s = {} must be positive", self.s));
        }
        if !(self.k_assumed >= 0.0) {
            return bad(format!("K = {} must be nonnegative", self.k_assumed));
        }
        if !(self.tau > 0.0) || !(self.h >= 0.0) || !(self.epsilon >= 0.0) {
            return bad("tau must be positive and h, epsilon nonnegative".into());
        }
        Ok(())
    }

    /// `1 - h tau / (2 pi c) - epsilon / (1 - cos delta)`.
    pub fn bracket(&self) -> f64 {
        1.0 - self.h * self.tau / (2.0 * PI * self.c) - self.epsilon / (1.0 - self.delta.cos())
    }

    pub fn log_power(&self) -> f64 {
        (self.n_sites as f64).ln().powi(2 * self.lattice_dim as i32)
    }
}

/// Lower bound on the number of intervals with weight above `1 / (c N)`:
/// `sqrt(N) * bracket / (delta / (tau s) + K log^{2D} N)`. Nonpositive values are vacuous.
pub fn peak_count_bound(p: &PeakCountParams) -> Result<f64> {
    p.validate()?;
    let denom = p.delta / (p.tau * p.s) + p.k_assumed * p.log_power();
    if !(denom > 0.0) {
        return Err(Error::Numerical(format!("peak-count bound denominator {denom} is not positive")));
    }
    Ok((p.n_sites as f64).sqrt() * p.bracket() / denom)
}

/// Smallest `K >= 0` for which `measured >= bound`; `None` if no `K` works.
pub fn fit_peak_count_constant(p: &PeakCountParams, measured: usize) -> Result<Option<f64>> {
    p.validate()?;
    let top = (p.n_sites as f64).sqrt() * p.bracket();
    if top <= 0.0 {
        return Ok(Some(0.0));
    }
    if measured == 0 {
        return Ok(None);
    }
    let need = top / measured as f64 - p.delta / (p.tau * p.s);
    if need <= 0.0 {
        return Ok(Some(0.0));
    }
    let lp = p.log_power();
    Ok(if lp > 0.0 { Some(need / lp) } else { None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakCountCheck {
    pub params: PeakCountParams,
    pub measured: usize,
    pub bound: f64,
    pub verdict: Verdict,
}

pub fn check_peak_count(stats: &PeakStatistics, params: PeakCountParams) -> Result<PeakCountCheck> {
    let bound = peak_count_bound(&params)?;
    let measured = stats.peak_count(params.c, params.n_sites);
    let verdict = BoundCheck::lower(measured as f64, bound).verdict;
    Ok(PeakCountCheck { params, measured, bound, verdict })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeRow {
    pub m: usize,
    pub fidelity: f64,
    pub bound: f64,
    pub verdict: Verdict,
}

fn cascade_row(m: usize, fidelity: f64, epsilon: f64) -> CascadeRow {
    let bound = 1.0 - m as f64 * (2.0 * epsilon).sqrt();
    CascadeRow { m, fidelity, bound, verdict: BoundCheck::lower(fidelity, bound).verdict }
}

/// `F(m tau) >= 1 - m sqrt(2 epsilon)` for `m = 1..=m_max`, reading `F` off the series.
pub fn cascade_check(series: &SurvivalSeries, event: &RevivalEvent, m_max: usize) -> Result<Vec<CascadeRow>> {
    (1..=m_max)
        .map(|m| {
            let t = m as f64 * event.tau;
            let f = series.fidelity_at(t).ok_or_else(|| {
                Error::InvalidParameter(format!("grid ends before m tau = {t} (m = {m}); extend t_max"))
            })?;
            Ok(cascade_row(m, f, event.epsilon))
        })
        .collect()
}

/// As [`cascade_check`] with `F(m tau)` evaluated from the distribution.
pub fn cascade_check_exact(dist: &EnergyDistribution, event: &RevivalEvent, m_max: usize) -> Vec<CascadeRow> {
    (1..=m_max).map(|m| cascade_row(m, dist.fidelity(m as f64 * event.tau), event.epsilon)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityAverage {
    pub t_total: f64,
    pub average: f64,
    pub sigma: f64,
    /// `5 pi / (2 sigma T)`; absent for an eigenstate.
    pub finite_time_term: Option<f64>,
    /// `log^{2D} N / sqrt(N)`.
    pub log_term: f64,
}

impl FidelityAverage {
    pub fn bound(&self, k_prime: f64) -> Option<f64> {
        self.finite_time_term.map(|ft| ft + k_prime * self.log_term)
    }

    /// Smallest `K'` making the bound hold; zero if the finite-time term suffices.
    pub fn fitted_k_prime(&self) -> Option<f64> {
        let ft = self.finite_time_term?;
        let need = self.average - ft;
        if need <= 0.0 {
            Some(0.0)
        } else if self.log_term > 0.0 {
            Some(need / self.log_term)
        } else {
            None
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `(1/T) int_0^T F(t)^2 dt` in closed form: `sum_{l,m} w_l w_m sin(x)/x` with
/// `x = (E_l - E_m) T`. The imaginary parts of the kernel cancel pairwise.
pub fn time_average_fidelity(
    dist: &EnergyDistribution,
    t_total: f64,
    n_sites: usize,
    lattice_dim: usize,
) -> Result<FidelityAverage> {
    if !(t_total > 0.0 && t_total.is_finite()) {
        return Err(Error::InvalidParameter(format!("T = {t_total} must be positive")));
    }
    if n_sites == 0 {
        return Err(Error::InvalidParameter("N must be positive".into()));
    }
    let (e, w) = (dist.energies(), dist.weights());
    let mut average: f64 = w.iter().map(|x| x * x).sum();
    for i in 0..e.len() {
        let mut row = 0.0;
        for j in 0..i {
            row += w[j] * sinc((e[i] - e[j]) * t_total);
        }
        average += 2.0 * w[i] * row;
    }
    let sigma = dist.sigma();
    let n = n_sites as f64;
    Ok(FidelityAverage {
        t_total,
        average: average.clamp(0.0, 1.0),
        sigma,
        finite_time_term: (sigma > 0.0).then(|| 5.0 * PI / (2.0 * sigma * t_total)),
        log_term: n.ln().powi(2 * lattice_dim as i32) / n.sqrt(),
    })
}

/// `k(tau) = -log <psi_x| rho_x(tau) |psi_x>` for a product state.
///
/// Evaluated as `-log1p(-q)` with `q = ||(1 - P_x) Psi(tau)||^2`, which keeps
/// full relative precision when the return probability is close to one.
pub fn single_site_return(
    eig: &EigenDecomposition,
    product: &ProductState,
    lattice: &Lattice,
    site: usize,
    tau: f64,
) -> Result<f64> {
    if site >= lattice.num_sites() || product.num_sites() != lattice.num_sites() {
        return Err(Error::InvalidParameter(format!(
            "site {site} is not on a lattice of {} sites matching the product state",
            lattice.num_sites()
        )));
    }
    let d = lattice.local_dim();
    if product.local_dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: product.local_dim() });
    }
    let psi = product.to_state_vector();
    let evolved = evolve(eig, &psi, tau)?;
    let phi = product.site(site);
    let stride = d.pow((lattice.num_sites() - 1 - site) as u32);
    let amps = evolved.as_slice();
    let mut q = 0.0;
    for base in 0..amps.len() {
        if !(base / stride).is_multiple_of(d) {
            continue;
        }
        // local amplitudes at this site, everything else fixed
        let mut proj = Complex64::new(0.0, 0.0);
        for m in 0..d {
            proj += phi[m].conj() * amps[base + m * stride];
        }
        for m in 0..d {
            q += (amps[base + m * stride] - phi[m] * proj).norm_sqr();
        }
    }
    if !(q < 1.0 - 1e-15) {
        return Err(Error::Numerical(format!("single-site return probability {} is not positive", 1.0 - q)));
    }
    Ok(-(-q).ln_1p())
}

/// A Hermitian operator that can be applied to dense vectors.
pub trait Observable {
    fn dim(&self) -> Result<usize>;
    fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>>;
    fn hermiticity_deviation(&self) -> f64;
}

impl Observable for Hamiltonian {
    fn dim(&self) -> Result<usize> {
        self.hilbert_dim()
    }

    fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        Hamiltonian::apply(self, v)
    }

    fn hermiticity_deviation(&self) -> f64 {
        0.0
    }
}

impl Observable for Mat<Complex64> {
    fn dim(&self) -> Result<usize> {
        if self.nrows() != self.ncols() {
            return Err(Error::DimensionMismatch { expected: self.nrows(), found: self.ncols() });
        }
        Ok(self.nrows())
    }

    fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.ncols() {
            return Err(Error::DimensionMismatch { expected: self.ncols(), found: v.len() });
        }
        Ok((0..self.nrows()).map(|i| (0..self.ncols()).map(|j| self[(i, j)] * v[j]).sum()).collect())
    }

    fn hermiticity_deviation(&self) -> f64 {
        hermiticity_deviation(self)
    }
}

/// Diagonal operator `sum_x f(x)` built from a single-site diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSum {
    lattice: Lattice,
    diagonal: Vec<f64>,
}

impl SiteSum {
    pub fn new(lattice: Lattice, diagonal: Vec<f64>) -> Result<Self> {
        if diagonal.len() != lattice.local_dim() {
            return Err(Error::DimensionMismatch { expected: lattice.local_dim(), found: diagonal.len() });
        }
        Ok(Self { lattice, diagonal })
    }

    /// Total magnetization `sum_x S^z_x`, local states ordered from `m = S` down to `-S`.
    pub fn total_sz(lattice: Lattice) -> Result<Self> {
        let d = lattice.local_dim();
        let spin = (d as f64 - 1.0) / 2.0;
        Self::new(lattice, (0..d).map(|m| spin - m as f64).collect())
    }
}

impl Observable for SiteSum {
    fn dim(&self) -> Result<usize> {
        self.lattice.hilbert_dim().ok_or_else(|| Error::InvalidLattice("Hilbert space dimension overflows".into()))
    }

    fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let dim = self.dim()?;
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
        }
        let d = self.lattice.local_dim();
        let n = self.lattice.num_sites();
        Ok(v.iter()
            .enumerate()
            .map(|(idx, &a)| {
                let mut rest = idx;
                let mut total = 0.0;
                for _ in 0..n {
                    total += self.diagonal[rest % d];
                    rest /= d;
                }
                a * total
            })
            .collect())
    }

    fn hermiticity_deviation(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyComponent {
    pub omega: f64,
    pub re: f64,
    pub im: f64,
}

impl FrequencyComponent {
    pub fn magnitude(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

/// Bohr-frequency decomposition `<A>(t) = sum_omega v_omega exp(i omega t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpectrum {
    pub components: Vec<FrequencyComponent>,
    pub freq_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderCheck {
    pub spacing: f64,
    pub checked: usize,
    /// Components with `|v| > amp_tol` off the ladder `(2 pi / tau) Z`.
    pub off_ladder: Vec<FrequencyComponent>,
    pub verdict: Verdict,
}

impl ObservableSpectrum {
    pub fn component_at(&self, omega: f64) -> Option<&FrequencyComponent> {
        self.components.iter().find(|c| (c.omega - omega).abs() <= self.freq_tol)
    }

    pub fn ladder_check(&self, tau: f64, amp_tol: f64) -> Result<LadderCheck> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau = {tau} must be positive")));
        }
        let spacing = 2.0 * PI / tau;
        let mut checked = 0;
        let mut off_ladder = Vec::new();
        for c in self.components.iter().filter(|c| c.magnitude() > amp_tol) {
            checked += 1;
            let k = (c.omega / spacing).round();
            let tol = self.freq_tol.max(1e-9 * c.omega.abs().max(1.0));
            if (c.omega - k * spacing).abs() > tol {
                off_ladder.push(*c);
            }
        }
        let verdict = if off_ladder.is_empty() { Verdict::Pass } else { Verdict::Fail };
        Ok(LadderCheck { spacing, checked, off_ladder, verdict })
    }
}

/// `v_omega = sum_{E_i - E_j = omega} c_i c_j^* <E_j|A|E_i>` over eigenvectors with
/// `|c|^2` above `weight_cut`, clustered within `freq_tol`.
pub fn observable_spectrum<A: Observable + ?Sized>(
    coeffs: &[Complex64],
    eig: &EigenDecomposition,
    observable: &A,
    freq_tol: f64,
    weight_cut: f64,
) -> Result<ObservableSpectrum> {
    if coeffs.len() != eig.dim() {
        return Err(Error::DimensionMismatch { expected: eig.dim(), found: coeffs.len() });
    }
    let dim = observable.dim()?;
    if dim != eig.dim() {
        return Err(Error::DimensionMismatch { expected: eig.dim(), found: dim });
    }
    let dev = observable.hermiticity_deviation();
    if dev > HERMITIAN_TOL {
        return Err(Error::InvalidParameter(format!("observable is not Hermitian (deviation {dev:.3e})")));
    }
    if !(freq_tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("freq_tol = {freq_tol} must be nonnegative")));
    }
    let support: Vec<usize> = (0..coeffs.len()).filter(|&j| coeffs[j].norm_sqr() > weight_cut).collect();
    let vectors: Vec<Vec<Complex64>> = support.iter().map(|&j| eig.eigenvector(j)).collect();
    let energies = eig.energies();
    let mut pairs: Vec<(f64, Complex64)> = Vec::with_capacity(support.len() * support.len());
    for (a, &i) in support.iter().enumerate() {
        let applied = observable.apply(&vectors[a])?;
        for (b, &j) in support.iter().enumerate() {
            let a_ji = inner(&vectors[b], &applied);
            pairs.push((energies[i] - energies[j], coeffs[i] * coeffs[j].conj() * a_ji));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut components = Vec::new();
    let mut k = 0;
    while k < pairs.len() {
        let first = pairs[k].0;
        let (mut sum, mut omega_sum, mut count) = (Complex64::new(0.0, 0.0), 0.0, 0usize);
        while k < pairs.len() && pairs[k].0 - first <= freq_tol {
            sum += pairs[k].1;
            omega_sum += pairs[k].0;
            count += 1;
            k += 1;
        }
        components.push(FrequencyComponent { omega: omega_sum / count as f64, re: sum.re, im: sum.im });
    }
    Ok(ObservableSpectrum { components, freq_tol })
}

/// Default Bohr-frequency clustering tolerance `1e-8 h`.
pub fn default_freq_tol(h: f64) -> f64 {
    1e-8 * h.max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_spin1_xy, nematic_neel, StateVector};
    use crate::spectral::{amplitudes, diagonalize, project_state, survival_amplitude, uniform_grid};
    use crate::spectral::{DiagonalizeOptions, DEFAULT_WEIGHT_CUT};

    fn two_level(gap: f64) -> EnergyDistribution {
        EnergyDistribution::new(vec![(0.0, 0.5), (gap, 0.5)], 0.0).unwrap()
    }

    fn xy(n: usize) -> (Hamiltonian, EigenDecomposition, StateVector) {
        let lat = Lattice::chain(n, true, 3).unwrap();
        let h = build_spin1_xy(&lat, 1.0, 1.0, 0.0).unwrap();
        let eig = diagonalize(&h, DiagonalizeOptions::default()).unwrap();
        let psi = nematic_neel(&lat).unwrap().to_state_vector();
        (h, eig, psi)
    }

    #[test]
    fn eigenstate_plateau_reports_first_positive_time() {
        let dist = EnergyDistribution::new(vec![(0.3, 1.0)], 0.0).unwrap();
        let series = survival_amplitude(&dist, &uniform_grid(5.0, 51)).unwrap();
        let events = detect_revivals(&series, 0.1).unwrap();
        assert_eq!(events.len(), 1);
        assert!((events[0].tau - 0.1).abs() < 1e-15);
        assert!(events[0].epsilon < 1e-15);
    }

    #[test]
    fn two_level_revival_at_period() {
        let dist = two_level(2.0 * PI);
        let series = survival_amplitude(&dist, &uniform_grid(1.5, 301)).unwrap();
        let events = detect_revivals(&series, 0.01).unwrap();
        assert_eq!(events.len(), 1);
        assert!((events[0].tau - 1.0).abs() < 1e-12);
        assert!(events[0].epsilon <= 1e-10);
        assert!(detect_revivals(&series, 1.0).is_err());
    }

    #[test]
    fn rejects_empty_series() {
        let empty = SurvivalSeries { times: vec![], amplitude: vec![], fidelity: vec![], phase: vec![] };
        assert!(detect_revivals(&empty, 0.1).is_err());
    }

    #[test]
    fn neel_revival_at_pi() {
        let (h, eig, psi) = xy(4);
        let dist = project_state(&eig, &psi, DEFAULT_WEIGHT_CUT).unwrap();
        let series = survival_amplitude(&dist, &uniform_grid(4.0, 4001)).unwrap();
        let events = detect_revivals(&series, 1e-3).unwrap();
        assert!((events[0].tau - PI).abs() <= 1e-3);
        let exact = RevivalEvent::from_distribution(&dist, PI).unwrap();
        assert!(exact.epsilon <= 1e-8);

        let stats = partition_weights(&dist, &exact, 0.0).unwrap();
        assert!((stats.in_peak_total - 1.0).abs() < 1e-10);
        assert!(stats.gap_total < 1e-12);
        let nonzero: Vec<f64> = stats.weights.values().copied().filter(|&p| p > 0.0).collect();
        assert_eq!(nonzero.len(), 5);
        for (p, expect) in nonzero.iter().zip([1.0, 4.0, 6.0, 4.0, 1.0]) {
            assert!((p - expect / 16.0).abs() < 1e-10);
        }
        assert!(h.spectral_bound() >= *dist.energies().last().unwrap());

        let cascade = cascade_check(&series, &RevivalEvent::new(PI, exact.epsilon, exact.alpha_tau).unwrap(), 1);
        assert!(cascade.unwrap()[0].fidelity > 1.0 - 1e-8);
        assert!(cascade_check(&series, &exact, 2).is_err());
        for row in cascade_check_exact(&dist, &exact, 5) {
            assert!(row.fidelity > 1.0 - 1e-8);
            assert_eq!(row.verdict, Verdict::Pass);
        }
    }

    #[test]
    fn two_level_perfect_partition() {
        let dist = two_level(2.0 * PI);
        let event = RevivalEvent::from_distribution(&dist, 1.0).unwrap();
        let stats = partition_weights(&dist, &event, 0.0).unwrap();
        assert_eq!(stats.gap_total, 0.0);
        assert_eq!(stats.in_peak_total, 1.0);
    }

    #[test]
    fn gap_atom_example() {
        // 0.9 on a centre, 0.1 a quarter period away
        let tau = 1.0;
        let dist = EnergyDistribution::new(vec![(2.0 * PI, 0.9), (2.0 * PI + PI / 2.0, 0.1)], 0.0).unwrap();
        let f = Complex64::from_polar(0.9, -2.0 * PI) + Complex64::from_polar(0.1, -2.5 * PI);
        let event = RevivalEvent::new(tau, 1.0 - f.norm(), f.arg()).unwrap();
        let stats = partition_weights(&dist, &event, PI / 4.0).unwrap();
        assert!((stats.in_peak_total - 0.9).abs() < 1e-15);
        assert!((stats.gap_total - 0.1).abs() < 1e-15);
        let expect = 1.0 - (1.0 - 0.82f64.sqrt()) / (1.0 - (PI / 4.0).cos());
        assert!((stats.in_peak_bound - expect).abs() < 1e-12);
        assert_eq!(stats.in_peak_check().verdict, Verdict::Pass);
        assert!(partition_weights(&dist, &event, 3.5).is_err());
    }

    #[test]
    fn peak_count_bound_formula() {
        let p = PeakCountParams {
            n_sites: 8,
            lattice_dim: 1,
            h: 1.0,
            tau: PI,
            c: 2.0,
            delta: 0.01,
            epsilon: 0.0,
            s: 1.0,
            k_assumed: 0.5,
        };
        let expect = 8f64.sqrt() * 0.75 / (0.01 / PI + 0.5 * 8f64.ln().powi(2));
        assert!((peak_count_bound(&p).unwrap() - expect).abs() < 1e-12);
        let vacuous = PeakCountParams { epsilon: 1.0, ..p };
        assert!(peak_count_bound(&vacuous).unwrap() <= 0.0);
        assert!(peak_count_bound(&PeakCountParams { c: 1.0, ..p }).is_err());
        assert!(peak_count_bound(&PeakCountParams { delta: 0.0, ..p }).is_err());
        let k = fit_peak_count_constant(&p, 2).unwrap().unwrap();
        let tight = peak_count_bound(&PeakCountParams { k_assumed: k, ..p }).unwrap();
        assert!((tight - 2.0).abs() < 1e-12);
        assert_eq!(fit_peak_count_constant(&p, 0).unwrap(), None);
    }

    #[test]
    fn cascade_two_level_off_period() {
        let dist = two_level(2.0);
        for tau in [PI * 0.98, PI * 1.01] {
            let event = RevivalEvent::from_distribution(&dist, tau).unwrap();
            for row in cascade_check_exact(&dist, &event, 6) {
                // F(t) = |cos t| for this pair
                assert!((row.fidelity - (row.m as f64 * tau).cos().abs()).abs() < 1e-12);
                assert!(row.fidelity >= row.bound);
            }
        }
    }

    #[test]
    fn time_average_cases() {
        let single = EnergyDistribution::new(vec![(1.0, 1.0)], 0.0).unwrap();
        let avg = time_average_fidelity(&single, 3.0, 4, 1).unwrap();
        assert_eq!(avg.average, 1.0);
        assert!(avg.finite_time_term.is_none());
        let two = two_level(2.0);
        let avg = time_average_fidelity(&two, 1e6, 4, 1).unwrap();
        assert!((avg.average - 0.5).abs() < 1e-6);
        // direct quadrature of cos^2 t over [0, 1.3]
        let t_total = 1.3;
        let m = 20_000;
        let quad: f64 = (0..m)
            .map(|k| {
                let t = (k as f64 + 0.5) * t_total / m as f64;
                t.cos().powi(2)
            })
            .sum::<f64>()
            / m as f64;
        let avg = time_average_fidelity(&two, t_total, 4, 1).unwrap();
        assert!((avg.average - quad).abs() < 1e-8);
        assert!(time_average_fidelity(&two, 0.0, 4, 1).is_err());
        let fit = avg.fitted_k_prime().unwrap();
        assert!(avg.bound(fit).unwrap() >= avg.average - 1e-12);
    }

    #[test]
    fn single_site_return_cases() {
        let lat = Lattice::chain(3, true, 3).unwrap();
        let h = build_spin1_xy(&lat, 1.0, 0.7, 0.0).unwrap();
        let eig = diagonalize(&h, DiagonalizeOptions::default()).unwrap();
        let c = Complex64::new(0.0, 0.0);
        let up = ProductState::uniform(vec![Complex64::new(1.0, 0.0), c, c], 3).unwrap();
        for tau in [0.0, 0.4, 2.0] {
            assert!(single_site_return(&eig, &up, &lat, 1, tau).unwrap().abs() < 1e-12);
        }
        let neel = nematic_neel(&Lattice::chain(4, true, 3).unwrap()).unwrap();
        let (_, eig4, _) = xy(4);
        let lat4 = Lattice::chain(4, true, 3).unwrap();
        assert!(single_site_return(&eig4, &neel, &lat4, 0, 0.0).unwrap() < 1e-14);
        let k = single_site_return(&eig4, &neel, &lat4, 2, 0.5).unwrap();
        assert!(k > 0.0);
        assert!(single_site_return(&eig4, &neel, &lat4, 4, 0.5).is_err());
    }

    #[test]
    fn identity_and_hamiltonian_spectra() {
        let (h, eig, psi) = xy(4);
        let coeffs = amplitudes(&eig, &psi).unwrap();
        let id = Mat::<Complex64>::identity(eig.dim(), eig.dim());
        let spec = observable_spectrum(&coeffs, &eig, &id, 1e-8, DEFAULT_WEIGHT_CUT).unwrap();
        let zero = spec.component_at(0.0).unwrap();
        assert!((zero.re - 1.0).abs() < 1e-10 && zero.im.abs() < 1e-10);
        assert!(spec.components.iter().filter(|c| c.omega.abs() > 1e-8).all(|c| c.magnitude() < 1e-10));

        let spec = observable_spectrum(&coeffs, &eig, &h, 1e-8, DEFAULT_WEIGHT_CUT).unwrap();
        let mean: f64 = crate::model::energy_moments(&h, &psi).unwrap().mean;
        assert!((spec.component_at(0.0).unwrap().re - mean).abs() < 1e-9);
        assert!(spec.components.iter().filter(|c| c.omega.abs() > 1e-8).all(|c| c.magnitude() < 1e-9));

        let mut bad = Mat::<Complex64>::zeros(eig.dim(), eig.dim());
        bad[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(observable_spectrum(&coeffs, &eig, &bad, 1e-8, DEFAULT_WEIGHT_CUT).is_err());
    }

    #[test]
    fn magnetization_lives_on_the_ladder() {
        let (_, eig, psi) = xy(4);
        let coeffs = amplitudes(&eig, &psi).unwrap();
        let sz = SiteSum::total_sz(Lattice::chain(4, true, 3).unwrap()).unwrap();
        let spec = observable_spectrum(&coeffs, &eig, &sz, default_freq_tol(1.0), DEFAULT_WEIGHT_CUT).unwrap();
        let check = spec.ladder_check(PI, 1e-8).unwrap();
        assert!((check.spacing - 2.0).abs() < 1e-15);
        assert_eq!(check.verdict, Verdict::Pass);
        assert!(spec.components.iter().all(|c| c.magnitude() < 1e-10));

        // (S^x)^2 on one site flips +1 <-> -1 and moves along the tower
        let dim = eig.dim();
        let sx = crate::model::spin1::sx();
        let sx = &sx * &sx;
        let mut op = Mat::<Complex64>::zeros(dim, dim);
        let stride = 27;
        for i in 0..dim {
            for m in 0..3 {
                let j = i - (i / stride % 3) * stride + m * stride;
                op[(j, i)] = sx[(m, i / stride % 3)];
            }
        }
        let spec = observable_spectrum(&coeffs, &eig, &op, default_freq_tol(1.0), DEFAULT_WEIGHT_CUT).unwrap();
        let check = spec.ladder_check(PI, 1e-8).unwrap();
        assert!(check.checked >= 2);
        assert_eq!(check.verdict, Verdict::Pass);
        let shifted = spec.ladder_check(PI * 1.3, 1e-8).unwrap();
        assert_eq!(shifted.verdict, Verdict::Fail);
    }
}
