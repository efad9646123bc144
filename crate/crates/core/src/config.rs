//! Declarative experiment configuration (TOML).

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: String,
    /// Seed for synthetic-spectrum suites.
    pub seed: u64,
    pub lattice: LatticeSpec,
    pub model: ModelSpec,
    pub state: StateSpec,
    pub time: TimeGrid,
    pub analysis: AnalysisParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub extents: Vec<usize>,
    pub periodic: Vec<bool>,
    pub local_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Spin-1 XY chain/lattice: `J sum (S+S- + S-S+)/2 + h sum S^z + D sum (S^z)^2`.
    Spin1Xy { coupling: f64, field: f64, anisotropy: f64 },
    /// Explicit local terms.
    Custom { terms: Vec<TermSpec> },
}

/// A local term on `support`; `re` and `im` hold the matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub support: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    NematicNeel,
    /// The same single-site state on every site, as `[re, im]` pairs.
    Product {
        site: Vec<[f64; 2]>,
    },
    Basis {
        index: usize,
    },
    /// Text file with one `re im` pair per line.
    AmplitudesFile {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_max: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSpec {
    HalfCut,
    Block { start: usize, len: usize },
    Sites { sites: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisParams {
    /// Revivals are local maxima with `F >= 1 - threshold`.
    pub threshold: f64,
    /// Revival time to analyse; the first detected revival when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub delta: f64,
    pub c: f64,
    /// Width scale `s`; the state's `sigma / sqrt(N)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Constant `K` for the peak-count bound (conditional check when present).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_assumed: Option<f64>,
    /// Constant `K'` for the time-average bound (conditional check when present).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_prime: Option<f64>,
    pub alphas: Vec<f64>,
    pub regions: Vec<RegionSpec>,
    /// Bond dimension of the initial product state.
    pub chi: usize,
    pub rank_cut: f64,
    pub weight_cut: f64,
    /// Averaging windows `T` for the time-averaged fidelity.
    pub averages: Vec<f64>,
    pub m_max: usize,
    pub max_dim: usize,
}

impl ExperimentConfig {
    /// Spin-1 XY ring of `n` sites (`J = h = 1`, `D = 0.1`) from the nematic Neel state.
    pub fn xy_default(n: usize) -> Self {
        Self {
            output_dir: "out".into(),
            seed: 0,
            lattice: LatticeSpec { extents: vec![n], periodic: vec![true], local_dim: 3 },
            model: ModelSpec::Spin1Xy { coupling: 1.0, field: 1.0, anisotropy: 0.1 },
            state: StateSpec::NematicNeel,
            time: TimeGrid { t_max: 2.0 * PI, steps: 2001 },
            analysis: AnalysisParams {
                threshold: 0.05,
                tau: None,
                delta: 0.01,
                c: 2.0,
                s: None,
                k_assumed: None,
                k_prime: None,
                alphas: vec![1.5, 2.0, f64::INFINITY],
                regions: vec![RegionSpec::HalfCut],
                chi: 1,
                rank_cut: 1e-12,
                weight_cut: 1e-14,
                averages: vec![10.0 * PI],
                m_max: 5,
                max_dim: crate::spectral::DEFAULT_DIM_CAP,
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::file(path))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// SHA-256 of the canonical TOML serialisation, as lowercase hex.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let l = &self.lattice;
        if l.extents.is_empty() || l.extents.len() != l.periodic.len() || l.local_dim < 2 {
            return bad("lattice needs matching extents/periodic lists and local_dim >= 2".into());
        }
        if let ModelSpec::Spin1Xy { coupling, field, anisotropy } = &self.model {
            if ![coupling, field, anisotropy].iter().all(|x| x.is_finite()) {
                return bad("model parameters must be finite".into());
            }
        }
        let t = &self.time;
        if !(t.t_max > 0.0 && t.t_max.is_finite()) || t.steps < 2 {
            return bad(format!("time grid needs t_max > 0 and steps >= 2 (got {}, {})", t.t_max, t.steps));
        }
        let a = &self.analysis;
        if !(a.threshold > 0.0 && a.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", a.threshold));
        }
        if let Some(tau) = a.tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return bad(format!("tau {tau} must be positive"));
            }
        }
        if !(0.0..=PI).contains(&a.delta) {
            return bad(format!("delta {} outside [0, pi]", a.delta));
        }
        if !(a.c > 1.0) {
            return bad(format!("c {} must exceed 1", a.c));
        }
        if a.s.is_some_and(|s| !(s > 0.0)) {
            return bad("s must be positive".into());
        }
        if a.k_assumed.is_some_and(|k| !(k >= 0.0)) || a.k_prime.is_some_and(|k| !(k >= 0.0)) {
            return bad("K and K' must be nonnegative".into());
        }
        if a.alphas.iter().any(|x| !(*x >= 0.0)) {
            return bad("Renyi orders must be nonnegative".into());
        }
        if a.chi == 0 {
            return bad("chi must be at least 1".into());
        }
        if !(0.0..1.0).contains(&a.rank_cut) || !(0.0..1e-6).contains(&a.weight_cut) {
            return bad("rank_cut must lie in [0, 1) and weight_cut in [0, 1e-6)".into());
        }
        if a.averages.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return bad("averaging windows must be positive".into());
        }
        if a.max_dim == 0 {
            return bad("max_dim must be positive".into());
        }
        Ok(())
    }
}
