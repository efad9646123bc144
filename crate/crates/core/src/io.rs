//! Plain-text spectrum files and CSV/JSON exports.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::entanglement::EntanglementSpectrum;
use crate::error::{Error, Result};
use crate::revival::PeakStatistics;
use crate::spectral::{EnergyDistribution, SurvivalSeries};

const SPECTRUM_MAGIC: &str = "# scarbound spectrum v1";

/// Header fields carried by a spectrum file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub n_sites: usize,
    pub lattice_dim: usize,
    /// Bound on the local term norms.
    pub h: f64,
    /// Ground energy subtracted from every level.
    pub shift: f64,
    pub weight_cut: f64,
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

pub fn write_spectrum(mut out: impl Write, dist: &EnergyDistribution, meta: &SpectrumMeta) -> Result<()> {
    writeln!(out, "{SPECTRUM_MAGIC}")?;
    writeln!(out, "# n_sites = {}", meta.n_sites)?;
    writeln!(out, "# lattice_dim = {}", meta.lattice_dim)?;
    writeln!(out, "# h = {}", fmt_f64(meta.h))?;
    writeln!(out, "# shift = {}", fmt_f64(meta.shift))?;
    writeln!(out, "# weight_cut = {}", fmt_f64(meta.weight_cut))?;
    writeln!(out, "# energies are shifted so the ground state sits at 0")?;
    writeln!(out, "# weight = |<E|psi>|^2 summed over each degenerate level")?;
    writeln!(out, "# energy weight")?;
    for (e, w) in dist.iter() {
        writeln!(out, "{} {}", fmt_f64(e), fmt_f64(w))?;
    }
    Ok(())
}

pub fn save_spectrum(path: &Path, dist: &EnergyDistribution, meta: &SpectrumMeta) -> Result<()> {
    let mut buf = Vec::new();
    write_spectrum(&mut buf, dist, meta)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Parses a spectrum file. Every malformed row is reported with its line number.
pub fn parse_spectrum(text: &str, origin: &str) -> Result<(EnergyDistribution, SpectrumMeta)> {
    let err = |line: usize, msg: String| Error::Parse { path: origin.to_string(), line, msg };
    let mut meta = SpectrumMeta { n_sites: 0, lattice_dim: 1, h: 0.0, shift: 0.0, weight_cut: 0.0 };
    let mut entries: Vec<(f64, f64)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                let value = value.trim();
                let bad = |_| err(line_no, format!("cannot parse header value {value:?}"));
                match key.trim() {
                    "n_sites" => {
                        meta.n_sites = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                    }
                    "lattice_dim" => {
                        meta.lattice_dim = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                    }
                    "h" => meta.h = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                    "shift" => meta.shift = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                    "weight_cut" => {
                        meta.weight_cut = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                    }
                    _ => {}
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(err(line_no, format!("expected 2 columns (energy weight), found {}", fields.len())));
        }
        let e: f64 = fields[0].parse().map_err(|_| err(line_no, format!("bad energy {:?}", fields[0])))?;
        let w: f64 = fields[1].parse().map_err(|_| err(line_no, format!("bad weight {:?}", fields[1])))?;
        if !e.is_finite() {
            return Err(err(line_no, "energy is not finite".into()));
        }
        if !(w > 0.0 && w <= 1.0) {
            return Err(err(line_no, format!("weight {w} outside (0, 1]")));
        }
        if let Some(&(prev, _)) = entries.last() {
            if e <= prev {
                return Err(err(line_no, format!("energy {e} does not increase (previous {prev})")));
            }
        }
        entries.push((e, w));
    }
    if entries.is_empty() {
        return Err(err(0, "no spectrum rows".into()));
    }
    let cut = meta.weight_cut.min(entries.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) * 0.5);
    let dist = EnergyDistribution::new(entries, cut.max(0.0))?;
    Ok((dist, meta))
}

pub fn load_spectrum(path: &Path) -> Result<(EnergyDistribution, SpectrumMeta)> {
    let text = fs::read_to_string(path).map_err(Error::file(path))?;
    parse_spectrum(&text, &path.display().to_string())
}

pub fn write_survival_csv(mut out: impl Write, series: &SurvivalSeries) -> Result<()> {
    writeln!(out, "t,re_f,im_f,F,alpha")?;
    for k in 0..series.len() {
        let f = series.amplitude[k];
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(series.times[k]),
            fmt_f64(f.re),
            fmt_f64(f.im),
            fmt_f64(series.fidelity[k]),
            fmt_f64(series.phase[k])
        )?;
    }
    Ok(())
}

/// `l, center, p, in_bound` where `in_bound` marks `p > 1 / (c N)`.
pub fn write_peak_table_csv(mut out: impl Write, stats: &PeakStatistics, c: f64, n_sites: usize) -> Result<()> {
    let cutoff = 1.0 / (c * n_sites as f64);
    writeln!(out, "l,center,p,in_bound")?;
    for (&l, &p) in &stats.weights {
        writeln!(out, "{l},{},{},{}", fmt_f64(stats.partition.center(l)), fmt_f64(p), u8::from(p > cutoff))?;
    }
    Ok(())
}

pub fn write_schmidt_csv(mut out: impl Write, spec: &EntanglementSpectrum) -> Result<()> {
    writeln!(out, "k,lambda")?;
    for (k, l) in spec.schmidt_sq.iter().enumerate() {
        writeln!(out, "{k},{}", fmt_f64(*l))?;
    }
    Ok(())
}

pub fn write_json<T: Serialize>(out: impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(out, value)?;
    Ok(())
}

pub fn save_with(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, buf)?;
    Ok(())
}
