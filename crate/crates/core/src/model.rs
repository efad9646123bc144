//! Lattices, local operators, Hamiltonians and initial states.
//!
//! Basis convention: a many-body basis index is `sum_i m_i * d^(N-1-i)`, so site 0
//! is the most significant digit. For spin-1 sites the local basis order is
//! `|+1>, |0>, |-1>` (`S^z = diag(1, 0, -1)`).

use std::collections::{BTreeMap, HashSet, VecDeque};

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementwise tolerance for the Hermiticity of local terms.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Norm tolerance for [`StateVector`].
pub const STATE_NORM_TOL: f64 = 1e-10;
/// Norm tolerance for the single-site vectors of a [`ProductState`].
pub const SITE_NORM_TOL: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    extents: Vec<usize>,
    periodic: Vec<bool>,
    local_dim: usize,
}

impl Lattice {
    pub fn new(extents: Vec<usize>, periodic: Vec<bool>, local_dim: usize) -> Result<Self> {
        if extents.is_empty() {
            return Err(Error::InvalidLattice("at least one axis is required".into()));
        }
        if extents.len() != periodic.len() {
            return Err(Error::InvalidLattice(format!(
                "{} extents but {} periodicity flags",
                extents.len(),
                periodic.len()
            )));
        }
        if extents.contains(&0) {
            return Err(Error::InvalidLattice("extents must be positive".into()));
        }
        if local_dim < 2 {
            return Err(Error::InvalidLattice(format!("local dimension {local_dim} < 2")));
        }
        Ok(Self { extents, periodic, local_dim })
    }

    pub fn chain(len: usize, periodic: bool, local_dim: usize) -> Result<Self> {
        Self::new(vec![len], vec![periodic], local_dim)
    }

    pub fn dimension(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn num_sites(&self) -> usize {
        self.extents.iter().product()
    }

    /// `d^N`, or `None` on overflow.
    pub fn hilbert_dim(&self) -> Option<usize> {
        let n = u32::try_from(self.num_sites()).ok()?;
        self.local_dim.checked_pow(n)
    }

    /// Row-major coordinates (last axis fastest).
    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut rest = site;
        let mut out = vec![0; self.extents.len()];
        for (axis, &ext) in self.extents.iter().enumerate().rev() {
            out[axis] = rest % ext;
            rest /= ext;
        }
        out
    }

    pub fn site(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.extents).fold(0, |acc, (&c, &ext)| acc * ext + c)
    }

    /// Nearest-neighbour bonds `(x, x + e_k)`, anchored at `x`, each undirected edge once.
    pub fn forward_bonds(&self) -> Vec<(usize, usize)> {
        let mut seen = HashSet::new();
        let mut bonds = Vec::new();
        for site in 0..self.num_sites() {
            let coords = self.coords(site);
            for axis in 0..self.dimension() {
                let ext = self.extents[axis];
                if ext < 2 {
                    continue;
                }
                let mut next = coords.clone();
                if coords[axis] + 1 < ext {
                    next[axis] += 1;
                } else if self.periodic[axis] && ext > 2 {
                    next[axis] = 0;
                } else {
                    continue;
                }
                let other = self.site(&next);
                let key = (site.min(other), site.max(other));
                if seen.insert(key) {
                    bonds.push((site, other));
                }
            }
        }
        bonds
    }

    pub fn neighbors(&self, site: usize) -> Vec<usize> {
        self.forward_bonds()
            .into_iter()
            .filter_map(|(a, b)| match (a == site, b == site) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .collect()
    }

    /// Sublattice label (coordinate sum mod 2), or `None` when some periodic axis
    /// of odd extent breaks the bipartition.
    pub fn sublattice(&self, site: usize) -> Option<usize> {
        self.is_bipartite().then(|| self.coords(site).iter().sum::<usize>() % 2)
    }

    pub fn is_bipartite(&self) -> bool {
        self.extents.iter().zip(&self.periodic).all(|(&ext, &p)| !p || ext <= 2 || ext % 2 == 0)
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.num_sites() {
            return Err(Error::InvalidTerm(format!("site {site} outside lattice of {} sites", self.num_sites())));
        }
        Ok(())
    }
}

/// Hermitian operator acting on an ordered set of sites.
#[derive(Debug, Clone)]
pub struct LocalTerm {
    support: Vec<usize>,
    matrix: Mat<Complex64>,
}

impl LocalTerm {
    pub fn new(support: Vec<usize>, matrix: Mat<Complex64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidTerm("empty support".into()));
        }
        let distinct: HashSet<_> = support.iter().collect();
        if distinct.len() != support.len() {
            return Err(Error::InvalidTerm(format!("repeated site in support {support:?}")));
        }
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidTerm(format!("matrix is {}x{}, not square", matrix.nrows(), matrix.ncols())));
        }
        let dev = hermiticity_deviation(&matrix);
        if dev > HERMITIAN_TOL {
            return Err(Error::InvalidTerm(format!(
                "matrix on {support:?} is not Hermitian (max |M - M^dag| = {dev:.3e})"
            )));
        }
        Ok(Self { support, matrix })
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn matrix(&self) -> &Mat<Complex64> {
        &self.matrix
    }

    pub fn is_real(&self) -> bool {
        (0..self.matrix.nrows()).all(|i| (0..self.matrix.ncols()).all(|j| self.matrix[(i, j)].im == 0.0))
    }

    /// Operator norm of the term.
    pub fn operator_norm(&self) -> f64 {
        let (lo, hi) = self.eigen_range();
        lo.abs().max(hi.abs())
    }

    /// `lambda_max - lambda_min`: the norm of the term after shifting it to be
    /// positive semidefinite.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self.eigen_range();
        hi - lo
    }

    fn eigen_range(&self) -> (f64, f64) {
        let vals = self.matrix.self_adjoint_eigenvalues(Side::Lower).expect("eigenvalues of a small Hermitian matrix");
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// The same operator written on a larger ordered support (identity on the new sites).
    fn embed(&self, support: &[usize], d: usize) -> LocalTerm {
        let k_new = support.len();
        let positions: Vec<usize> =
            self.support.iter().map(|s| support.iter().position(|t| t == s).expect("support is a subset")).collect();
        let others: Vec<usize> = (0..k_new).filter(|p| !positions.contains(p)).collect();
        let dim = d.pow(k_new as u32);
        let digits = |idx: usize| -> Vec<usize> {
            let mut out = vec![0; k_new];
            let mut rest = idx;
            for slot in (0..k_new).rev() {
                out[slot] = rest % d;
                rest /= d;
            }
            out
        };
        let old_index = |dig: &[usize]| positions.iter().fold(0, |acc, &p| acc * d + dig[p]);
        let mut m = Mat::<Complex64>::zeros(dim, dim);
        for col in 0..dim {
            let dc = digits(col);
            for row in 0..dim {
                let dr = digits(row);
                if others.iter().all(|&p| dr[p] == dc[p]) {
                    m[(row, col)] = self.matrix[(old_index(&dr), old_index(&dc))];
                }
            }
        }
        LocalTerm { support: support.to_vec(), matrix: m }
    }
}

pub(crate) fn hermiticity_deviation(m: &Mat<Complex64>) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Dense matrix of the full operator; real when every term is real.
pub enum DenseOperator {
    Real(Mat<f64>),
    Complex(Mat<Complex64>),
}

/// `H = sum_x h_x` with one term per anchor site.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    lattice: Lattice,
    terms: Vec<LocalTerm>,
    h: f64,
    b: usize,
}

impl Hamiltonian {
    /// Validates every term against the lattice and groups terms by anchor site (the
    /// first site of each support), so the result has at most `N` terms.
    pub fn from_terms(lattice: Lattice, terms: Vec<LocalTerm>) -> Result<Self> {
        let d = lattice.local_dim();
        for term in &terms {
            for &s in term.support() {
                lattice.check_site(s)?;
            }
            let expected = d.pow(term.support().len() as u32);
            if term.matrix().nrows() != expected {
                return Err(Error::DimensionMismatch { expected, found: term.matrix().nrows() });
            }
            if !support_is_connected(&lattice, term.support()) {
                return Err(Error::InvalidTerm(format!(
                    "support {:?} is not a connected set of neighbouring sites",
                    term.support()
                )));
            }
        }

        let mut grouped: BTreeMap<usize, Vec<LocalTerm>> = BTreeMap::new();
        for term in terms {
            grouped.entry(term.support()[0]).or_default().push(term);
        }
        let mut merged = Vec::with_capacity(grouped.len());
        for (_, group) in grouped {
            let mut support: Vec<usize> = Vec::new();
            for t in &group {
                for &s in t.support() {
                    if !support.contains(&s) {
                        support.push(s);
                    }
                }
            }
            let dim = d.pow(support.len() as u32);
            let mut sum = Mat::<Complex64>::zeros(dim, dim);
            for t in &group {
                sum += t.embed(&support, d).matrix();
            }
            merged.push(LocalTerm { support, matrix: sum });
        }

        let h = merged.iter().map(LocalTerm::spread).fold(0.0, f64::max);
        let b = merged.iter().map(|t| t.support().len()).max().unwrap_or(0);
        Ok(Self { lattice, terms: merged, h, b })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    /// Largest term spread; bounds the shifted spectrum by `h * N`.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn b(&self) -> usize {
        self.b
    }

    /// `h * N`.
    pub fn spectral_bound(&self) -> f64 {
        self.h * self.lattice.num_sites() as f64
    }

    pub fn is_real(&self) -> bool {
        self.terms.iter().all(LocalTerm::is_real)
    }

    pub fn hilbert_dim(&self) -> Result<usize> {
        self.lattice.hilbert_dim().ok_or_else(|| Error::InvalidLattice("Hilbert space dimension overflows".into()))
    }

    /// Visits every nonzero `(row, col, value)` contribution of every term.
    fn for_each_element(&self, mut f: impl FnMut(usize, usize, Complex64)) -> Result<()> {
        let dim = self.hilbert_dim()?;
        let n = self.lattice.num_sites();
        let d = self.lattice.local_dim();
        for term in &self.terms {
            let k = term.support().len();
            let local = d.pow(k as u32);
            let strides: Vec<usize> = term.support().iter().map(|&s| d.pow((n - 1 - s) as u32)).collect();
            let offset = |r: usize| -> usize {
                let mut rest = r;
                let mut off = 0;
                for slot in (0..k).rev() {
                    off += (rest % d) * strides[slot];
                    rest /= d;
                }
                off
            };
            let offsets: Vec<usize> = (0..local).map(offset).collect();
            let m = term.matrix();
            for col in 0..dim {
                let r = strides.iter().fold(0, |acc, &st| acc * d + (col / st) % d);
                let base = col - offsets[r];
                for (rp, &off) in offsets.iter().enumerate() {
                    let v = m[(rp, r)];
                    if v != ZERO {
                        f(base + off, col, v);
                    }
                }
            }
        }
        Ok(())
    }

    /// Matrix-free `H |psi>`.
    pub fn apply(&self, psi: &[Complex64]) -> Result<Vec<Complex64>> {
        let dim = self.hilbert_dim()?;
        if psi.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: psi.len() });
        }
        let mut out = vec![ZERO; dim];
        self.for_each_element(|row, col, v| out[row] += v * psi[col])?;
        Ok(out)
    }

    pub fn dense(&self) -> Result<DenseOperator> {
        let dim = self.hilbert_dim()?;
        if self.is_real() {
            let mut m = Mat::<f64>::zeros(dim, dim);
            self.for_each_element(|row, col, v| m[(row, col)] += v.re)?;
            Ok(DenseOperator::Real(m))
        } else {
            let mut m = Mat::<Complex64>::zeros(dim, dim);
            self.for_each_element(|row, col, v| m[(row, col)] += v)?;
            Ok(DenseOperator::Complex(m))
        }
    }

    pub fn dense_complex(&self) -> Result<Mat<Complex64>> {
        Ok(match self.dense()? {
            DenseOperator::Complex(m) => m,
            DenseOperator::Real(m) => Mat::from_fn(m.nrows(), m.ncols(), |i, j| Complex64::new(m[(i, j)], 0.0)),
        })
    }
}

fn support_is_connected(lattice: &Lattice, support: &[usize]) -> bool {
    if support.len() <= 1 {
        return true;
    }
    let members: HashSet<usize> = support.iter().copied().collect();
    let mut seen = HashSet::from([support[0]]);
    let mut queue = VecDeque::from([support[0]]);
    while let Some(s) = queue.pop_front() {
        for nb in lattice.neighbors(s) {
            if members.contains(&nb) && seen.insert(nb) {
                queue.push_back(nb);
            }
        }
    }
    seen.len() == members.len()
}

/// Spin-1 operators in the `|+1>, |0>, |-1>` basis.
pub mod spin1 {
    use faer::Mat;
    use num_complex::Complex64;

    fn real(rows: [[f64; 3]; 3]) -> Mat<Complex64> {
        Mat::from_fn(3, 3, |i, j| Complex64::new(rows[i][j], 0.0))
    }

    pub fn sz() -> Mat<Complex64> {
        real([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
    }

    pub fn sz_squared() -> Mat<Complex64> {
        real([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn splus() -> Mat<Complex64> {
        let r = std::f64::consts::SQRT_2;
        real([[0.0, r, 0.0], [0.0, 0.0, r], [0.0, 0.0, 0.0]])
    }

    pub fn sminus() -> Mat<Complex64> {
        splus().adjoint().to_owned()
    }

    pub fn sx() -> Mat<Complex64> {
        (splus() + sminus()) * faer::Scale(Complex64::new(0.5, 0.0))
    }

    pub fn sy() -> Mat<Complex64> {
        (splus() - sminus()) * faer::Scale(Complex64::new(0.0, -0.5))
    }

    /// `S^x S^x + S^y S^y = (S^+ S^- + S^- S^+) / 2` on two sites.
    pub fn xy_bond() -> Mat<Complex64> {
        let a = kron(&splus(), &sminus());
        let b = kron(&sminus(), &splus());
        (a + b) * faer::Scale(Complex64::new(0.5, 0.0))
    }

    pub fn kron(a: &Mat<Complex64>, b: &Mat<Complex64>) -> Mat<Complex64> {
        let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
        Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
    }
}

/// `H = J sum_<ij> (S^x_i S^x_j + S^y_i S^y_j) + field sum_i S^z_i + aniso sum_i (S^z_i)^2`.
pub fn build_spin1_xy(lattice: &Lattice, coupling: f64, field: f64, anisotropy: f64) -> Result<Hamiltonian> {
    if lattice.local_dim() != 3 {
        return Err(Error::InvalidModel(format!(
            "spin-1 XY model needs local dimension 3, got {}",
            lattice.local_dim()
        )));
    }
    if coupling != 0.0 && lattice.num_sites() > 1 {
        if let Some(axis) = lattice.extents().iter().position(|&e| e < 2) {
            return Err(Error::InvalidModel(format!("axis {axis} has extent < 2 and cannot carry XY couplings")));
        }
    }
    let onsite = spin1::sz() * faer::Scale(Complex64::new(field, 0.0))
        + spin1::sz_squared() * faer::Scale(Complex64::new(anisotropy, 0.0));
    let bond = spin1::xy_bond() * faer::Scale(Complex64::new(coupling, 0.0));

    let mut terms = Vec::new();
    if field != 0.0 || anisotropy != 0.0 {
        for site in 0..lattice.num_sites() {
            terms.push(LocalTerm::new(vec![site], onsite.clone())?);
        }
    }
    if coupling != 0.0 {
        for (a, b) in lattice.forward_bonds() {
            terms.push(LocalTerm::new(vec![a, b], bond.clone())?);
        }
    }
    Hamiltonian::from_terms(lattice.clone(), terms)
}

/// Dense normalized amplitudes over the `d^N` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<Complex64>);

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = l2_norm(&amplitudes);
        if (norm - 1.0).abs() > STATE_NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self(amplitudes))
    }

    pub fn normalized(mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = l2_norm(&amplitudes);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized { norm });
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(Self(amplitudes))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = vec![ZERO; dim];
        v[index] = Complex64::new(1.0, 0.0);
        Self(v)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        inner(&self.0, &other.0)
    }
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn l2_norm(v: &[Complex64]) -> f64 {
    v.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
}

/// Product state `|psi_0> (x) |psi_1> (x) ...`; rank parameter chi = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    sites: Vec<Vec<Complex64>>,
}

impl ProductState {
    pub fn new(sites: Vec<Vec<Complex64>>) -> Result<Self> {
        let Some(first) = sites.first() else {
            return Err(Error::InvalidParameter("product state needs at least one site".into()));
        };
        let d = first.len();
        for (i, v) in sites.iter().enumerate() {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: v.len() });
            }
            let norm = l2_norm(v);
            if (norm - 1.0).abs() > SITE_NORM_TOL {
                return Err(Error::InvalidParameter(format!("site {i} vector has norm {norm}, expected 1")));
            }
        }
        Ok(Self { sites })
    }

    pub fn uniform(site: Vec<Complex64>, num_sites: usize) -> Result<Self> {
        Self::new(vec![site; num_sites])
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn local_dim(&self) -> usize {
        self.sites[0].len()
    }

    pub fn site(&self, i: usize) -> &[Complex64] {
        &self.sites[i]
    }

    pub fn chi(&self) -> usize {
        1
    }

    pub fn to_state_vector(&self) -> StateVector {
        let mut amps = vec![Complex64::new(1.0, 0.0)];
        for site in &self.sites {
            amps = amps.iter().flat_map(|a| site.iter().map(move |s| a * s)).collect();
        }
        StateVector(amps)
    }
}

/// Nematic Neel state: `|x> = (|+1> - |-1>)/sqrt 2` on the even sublattice and
/// `|y> = i(|+1> + |-1>)/sqrt 2` on the odd sublattice.
pub fn nematic_neel(lattice: &Lattice) -> Result<ProductState> {
    if lattice.local_dim() != 3 {
        return Err(Error::InvalidModel(format!(
            "nematic Neel state needs local dimension 3, got {}",
            lattice.local_dim()
        )));
    }
    if !lattice.is_bipartite() {
        return Err(Error::InvalidLattice("periodic axis of odd length has no consistent bipartition".into()));
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let x = vec![Complex64::new(r, 0.0), ZERO, Complex64::new(-r, 0.0)];
    let y = vec![Complex64::new(0.0, r), ZERO, Complex64::new(0.0, r)];
    let sites = (0..lattice.num_sites())
        .map(|s| match lattice.sublattice(s) {
            Some(0) => x.clone(),
            _ => y.clone(),
        })
        .collect();
    ProductState::new(sites)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyMoments {
    pub mean: f64,
    pub sigma: f64,
    /// `sigma / sqrt(N)`.
    pub s: f64,
}

pub fn energy_moments(h: &Hamiltonian, psi: &StateVector) -> Result<EnergyMoments> {
    let norm = l2_norm(psi.as_slice());
    if (norm - 1.0).abs() > STATE_NORM_TOL {
        return Err(Error::NotNormalized { norm });
    }
    let h_psi = h.apply(psi.as_slice())?;
    let mean = inner(psi.as_slice(), &h_psi).re;
    let second: f64 = h_psi.iter().map(Complex64::norm_sqr).sum();
    let sigma = (second - mean * mean).max(0.0).sqrt();
    let n = h.lattice().num_sites() as f64;
    Ok(EnergyMoments { mean, sigma, s: sigma / n.sqrt() })
}
