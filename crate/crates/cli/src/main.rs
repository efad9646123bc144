use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scarbound::config::{ExperimentConfig, ModelSpec, RegionSpec, StateSpec};
use scarbound::io::{self, SpectrumMeta};
use scarbound::pipeline::{
    self, oracle_compare, run_analyze, run_simulate, run_verify, Simulation, Source, VerificationReport,
};
use scarbound::{EnergyDistribution, Error, Result};

const THREADS_VAR: &str = "SCARBOUND_THREADS";

#[derive(Parser)]
#[command(name = "scarbound", version, about = "Revival and scar-entanglement diagnostics for lattice models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Diagonalize the model and write the spectrum file and survival CSV
    Simulate(Common),
    /// Detect revivals and report interval weights, cascade and time averages
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Analyse an existing spectrum file instead of simulating
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
    /// Run every bound check; exits 1 if any check fails
    VerifyBounds {
        #[command(flatten)]
        common: Common,
        /// Check spectrum-level bounds only, from this file
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
    /// Compare the spin-1 XY pipeline against the scar-tower closed forms
    OracleCompare(Common),
    /// Validate a spectrum file and print its summary
    ImportSpectrum {
        path: PathBuf,
        /// Write a normalized copy into this directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write artifacts for a configuration
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ExportKind::All)]
        what: ExportKind,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExportKind {
    All,
    Config,
    Spectrum,
    Survival,
    Peaks,
    Schmidt,
}

/// Configuration file plus per-field overrides.
#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration; the spin-1 XY ring defaults are used when absent
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shorthand for a 1D lattice of this many sites
    #[arg(long)]
    sites: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    extents: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    periodic: Option<Vec<bool>>,
    #[arg(long)]
    local_dim: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    coupling: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    field: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    anisotropy: Option<f64>,
    /// neel | basis:INDEX | product:RE,IM;RE,IM;... | file:PATH
    #[arg(long)]
    state: Option<String>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    k_assumed: Option<f64>,
    #[arg(long)]
    k_prime: Option<f64>,
    /// Renyi orders, e.g. 1.5,2,inf
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// half | block:START:LEN | sites:I+J+... (repeatable)
    #[arg(long = "region")]
    regions: Vec<String>,
    #[arg(long)]
    chi: Option<usize>,
    #[arg(long)]
    rank_cut: Option<f64>,
    #[arg(long)]
    weight_cut: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    averages: Option<Vec<f64>>,
    #[arg(long)]
    m_max: Option<usize>,
    #[arg(long)]
    max_dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_state(spec: &str) -> Result<StateSpec> {
    let bad = || Error::Config(format!("cannot parse state {spec:?}"));
    if spec == "neel" || spec == "nematic_neel" {
        return Ok(StateSpec::NematicNeel);
    }
    let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
    match kind {
        "basis" => Ok(StateSpec::Basis { index: rest.parse().map_err(|_| bad())? }),
        "file" => Ok(StateSpec::AmplitudesFile { path: rest.into() }),
        "product" => {
            let site = rest
                .split(';')
                .map(|pair| {
                    let (re, im) = pair.split_once(',').ok_or_else(bad)?;
                    Ok([re.trim().parse().map_err(|_| bad())?, im.trim().parse().map_err(|_| bad())?])
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(StateSpec::Product { site })
        }
        _ => Err(bad()),
    }
}

fn parse_region(spec: &str) -> Result<RegionSpec> {
    let bad = || Error::Config(format!("cannot parse region {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["half"] | ["half_cut"] => Ok(RegionSpec::HalfCut),
        ["block", start, len] => {
            Ok(RegionSpec::Block { start: start.parse().map_err(|_| bad())?, len: len.parse().map_err(|_| bad())? })
        }
        ["sites", list] => Ok(RegionSpec::Sites {
            sites: list.split('+').map(|s| s.parse().map_err(|_| bad())).collect::<Result<_>>()?,
        }),
        _ => Err(bad()),
    }
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::xy_default(self.sites.unwrap_or(4)),
        };
        if let Some(n) = self.sites {
            cfg.lattice.extents = vec![n];
            if cfg.lattice.periodic.len() != 1 {
                cfg.lattice.periodic = vec![true];
            }
        }
        if let Some(e) = &self.extents {
            cfg.lattice.extents = e.clone();
        }
        if let Some(p) = &self.periodic {
            cfg.lattice.periodic = p.clone();
        }
        if let Some(d) = self.local_dim {
            cfg.lattice.local_dim = d;
        }
        if self.coupling.is_some() || self.field.is_some() || self.anisotropy.is_some() {
            match &mut cfg.model {
                ModelSpec::Spin1Xy { coupling, field, anisotropy } => {
                    *coupling = self.coupling.unwrap_or(*coupling);
                    *field = self.field.unwrap_or(*field);
                    *anisotropy = self.anisotropy.unwrap_or(*anisotropy);
                }
                ModelSpec::Custom { .. } => {
                    return Err(Error::Config(
                        "--coupling/--field/--anisotropy apply to the spin-1 XY model only".into(),
                    ))
                }
            }
        }
        if let Some(s) = &self.state {
            cfg.state = parse_state(s)?;
        }
        let t = &mut cfg.time;
        t.t_max = self.t_max.unwrap_or(t.t_max);
        t.steps = self.steps.unwrap_or(t.steps);
        let a = &mut cfg.analysis;
        a.threshold = self.threshold.unwrap_or(a.threshold);
        a.tau = self.tau.or(a.tau);
        a.delta = self.delta.unwrap_or(a.delta);
        a.c = self.c.unwrap_or(a.c);
        a.s = self.s.or(a.s);
        a.k_assumed = self.k_assumed.or(a.k_assumed);
        a.k_prime = self.k_prime.or(a.k_prime);
        if let Some(al) = &self.alphas {
            a.alphas = al.clone();
        }
        if !self.regions.is_empty() {
            a.regions = self.regions.iter().map(|r| parse_region(r)).collect::<Result<_>>()?;
        }
        a.chi = self.chi.unwrap_or(a.chi);
        a.rank_cut = self.rank_cut.unwrap_or(a.rank_cut);
        a.weight_cut = self.weight_cut.unwrap_or(a.weight_cut);
        if let Some(av) = &self.averages {
            a.averages = av.clone();
        }
        a.m_max = self.m_max.unwrap_or(a.m_max);
        a.max_dim = self.max_dim.unwrap_or(a.max_dim);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        if let Some(out) = &self.out {
            cfg.output_dir = out.display().to_string();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    io::save_with(path, |b| io::write_json(b, value))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn print_report(report: &VerificationReport) {
    println!("tau = {:.10}  epsilon = {:.3e}  config = {}", report.tau, report.epsilon, &report.config_hash[..12]);
    for e in &report.entries {
        println!(
            "{:<8} {:<44} measured = {:>13.6e}  bound = {:>13.6e}  slack = {:>10.3e}",
            e.verdict.to_string(),
            e.name,
            e.measured,
            e.bound,
            e.slack
        );
    }
}

fn summarize(dist: &EnergyDistribution) {
    println!(
        "levels = {}  total weight = {:.15}  mean = {:.10}  sigma = {:.10}  spread = {:.10}",
        dist.len(),
        dist.total_weight(),
        dist.mean(),
        dist.sigma(),
        dist.spread()
    );
}

fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    let sim = run_simulate(cfg)?;
    println!(
        "N = {}  dim = {}  h = {:.6}  shift = {:.10}",
        sim.meta.n_sites,
        sim.prepared.eig.dim(),
        sim.meta.h,
        sim.meta.shift
    );
    summarize(&sim.dist);
    Ok(sim)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = common.resolve()?;
            let sim = simulate(&cfg)?;
            for p in sim.write(&out_dir(&cfg)?)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Analyze { common, spectrum } => {
            let cfg = common.resolve()?;
            let (dist, meta) = load_or_simulate(&cfg, spectrum.as_deref())?;
            let (report, _) = run_analyze(&cfg, &dist, &meta)?;
            println!(
                "revivals = {}  tau = {:.10}  epsilon = {:.3e}  in-peak = {:.12}  N_c = {}",
                report.revivals.len(),
                report.event.tau,
                report.event.epsilon,
                report.peaks.in_peak_total,
                report.peak_count
            );
            let dir = out_dir(&cfg)?;
            let peaks = dir.join(pipeline::PEAKS_FILE);
            io::save_with(&peaks, |b| io::write_peak_table_csv(b, &report.peaks, cfg.analysis.c, meta.n_sites))?;
            println!("wrote {}", peaks.display());
            write_json(&dir.join(pipeline::ANALYSIS_FILE), &report)?;
        }
        Command::VerifyBounds { common, spectrum } => {
            let cfg = common.resolve()?;
            let (report, entropy) = match spectrum {
                Some(path) => {
                    let (dist, meta) = io::load_spectrum(&path)?;
                    run_verify(&cfg, Source::Spectrum { dist: &dist, meta: &meta })?
                }
                None => {
                    let sim = simulate(&cfg)?;
                    run_verify(&cfg, Source::Simulation(&sim))?
                }
            };
            print_report(&report);
            let dir = out_dir(&cfg)?;
            write_json(&dir.join(pipeline::VERIFY_FILE), &report)?;
            if let Some(entropy) = entropy {
                write_json(&dir.join(pipeline::ENTROPY_FILE), &entropy)?;
            }
            return Ok(report.exit_code() as u8);
        }
        Command::OracleCompare(common) => {
            let cfg = common.resolve()?;
            let sim = simulate(&cfg)?;
            let report = oracle_compare(&cfg, &sim)?;
            for r in &report.rows {
                println!(
                    "{:<44} numeric = {:>20.15}  oracle = {:>20.15}  |diff| = {:.3e}",
                    r.quantity, r.numeric, r.oracle, r.abs_diff
                );
            }
            println!("max |diff| = {:.3e}", report.max_abs_diff);
            write_json(&out_dir(&cfg)?.join("oracle_report.json"), &report)?;
        }
        Command::ImportSpectrum { path, out } => {
            let (dist, meta) = io::load_spectrum(&path)?;
            println!("N = {}  D = {}  h = {}  shift = {}", meta.n_sites, meta.lattice_dim, meta.h, meta.shift);
            summarize(&dist);
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                let target = dir.join(pipeline::SPECTRUM_FILE);
                io::save_spectrum(&target, &dist, &meta)?;
                println!("wrote {}", target.display());
            }
        }
        Command::Export { common, what } => {
            let cfg = common.resolve()?;
            export(&cfg, what)?;
        }
    }
    Ok(0)
}

fn load_or_simulate(cfg: &ExperimentConfig, spectrum: Option<&Path>) -> Result<(EnergyDistribution, SpectrumMeta)> {
    match spectrum {
        Some(path) => io::load_spectrum(path),
        None => {
            let sim = simulate(cfg)?;
            Ok((sim.dist, sim.meta))
        }
    }
}

fn export(cfg: &ExperimentConfig, what: ExportKind) -> Result<()> {
    let dir = out_dir(cfg)?;
    if what == ExportKind::Config {
        let path = dir.join("config.toml");
        cfg.save(&path)?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let sim = simulate(cfg)?;
    let all = what == ExportKind::All;
    if all || what == ExportKind::Spectrum {
        let path = dir.join(pipeline::SPECTRUM_FILE);
        io::save_spectrum(&path, &sim.dist, &sim.meta)?;
        println!("wrote {}", path.display());
    }
    if all || what == ExportKind::Survival {
        let path = dir.join(pipeline::SURVIVAL_FILE);
        io::save_with(&path, |b| io::write_survival_csv(b, &sim.series))?;
        println!("wrote {}", path.display());
    }
    if all || what == ExportKind::Peaks {
        let (report, _) = run_analyze(cfg, &sim.dist, &sim.meta)?;
        let path = dir.join(pipeline::PEAKS_FILE);
        io::save_with(&path, |b| io::write_peak_table_csv(b, &report.peaks, cfg.analysis.c, sim.meta.n_sites))?;
        println!("wrote {}", path.display());
        if all {
            write_json(&dir.join(pipeline::ANALYSIS_FILE), &report)?;
        }
    }
    if all || what == ExportKind::Schmidt {
        let (report, entropy) = run_verify(cfg, Source::Simulation(&sim))?;
        if let Some(entropy) = entropy {
            for (l, spec) in &entropy.spectra {
                let slug: String = spec
                    .region
                    .to_string()
                    .chars()
                    .map(|ch| if ch.is_ascii_alphanumeric() { ch } else { '_' })
                    .collect();
                let path = dir.join(format!("schmidt_l{l}_{slug}.csv"));
                io::save_with(&path, |b| io::write_schmidt_csv(b, spec))?;
                println!("wrote {}", path.display());
            }
            if all {
                write_json(&dir.join(pipeline::ENTROPY_FILE), &entropy)?;
            }
        }
        if all {
            write_json(&dir.join(pipeline::VERIFY_FILE), &report)?;
        }
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let threads = match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("{THREADS_VAR} must be a thread count, got {v:?}")))?,
        Err(_) => 1,
    };
    faer::set_global_parallelism(if threads <= 1 { faer::Par::Seq } else { faer::Par::rayon(threads) });
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
