//! Run configuration: a preset overlaid with an optional TOML file.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use helisample::geometry::GeometryConfig;
use helisample::phantom::shepp_logan_3d;
use helisample::pipeline::DeskSetup;
use helisample::spectral::SupportParams;
use helisample::{HelixGeometry, Phantom};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Sampling-gain study: R=2, Z=0.4, h=0.2, ρ=0.5.
    Fig5,
    /// Support containment study: R=2.5, Z=1, h=0.4, ρ=0.5.
    Exp1,
    /// Sparse versus standard reconstruction: R=2, Z=0.4, h=0.2, ρ=0.5, Ω=66.
    Exp2,
}

/// Fully resolved settings for every command.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub geometry: HelixGeometry,
    pub phantom: PhantomSource,
    pub noise: f64,
    pub seed: u64,
    pub omega: f64,
    pub omega_v: Vec<f64>,
    pub gain_omega: [f64; 2],
    pub gain_points: usize,
    pub rolloff: f64,
    pub ex_grid: usize,
    pub ex_beta_points: usize,
    pub ex_tol: f64,
    pub volume: usize,
    pub detector_cols: usize,
    pub detector_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomSource {
    SheppLogan { scale: f64 },
    File(PathBuf),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    geometry: Option<GeometryConfig>,
    #[serde(default)]
    phantom: PhantomSection,
    #[serde(default)]
    sampling: SamplingSection,
    #[serde(default)]
    recon: ReconSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhantomSection {
    scale: Option<f64>,
    file: Option<PathBuf>,
    noise: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplingSection {
    omega: Option<f64>,
    omega_v: Option<Vec<f64>>,
    gain_omega: Option<[f64; 2]>,
    gain_points: Option<usize>,
    rolloff: Option<f64>,
    ex_grid: Option<usize>,
    ex_beta_points: Option<usize>,
    ex_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReconSection {
    volume: Option<usize>,
    detector_cols: Option<usize>,
    detector_rows: Option<usize>,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl Preset {
    pub fn config(self) -> Config {
        let (r, h, z, rho) = match self {
            Preset::Fig5 | Preset::Exp2 => (2.0, 0.2, 0.4, 0.5),
            Preset::Exp1 => (2.5, 0.4, 1.0, 0.5),
        };
        Config {
            geometry: HelixGeometry::new(r, h, z, rho).expect("preset geometry is valid"),
            phantom: PhantomSource::SheppLogan { scale: 0.49 },
            noise: 0.0,
            seed: 0,
            omega: 66.0,
            omega_v: match self {
                Preset::Exp1 => vec![0.0, 0.5],
                _ => vec![0.0],
            },
            gain_omega: [1.0, 500.0],
            gain_points: 200,
            rolloff: helisample::filterbank::DEFAULT_ROLLOFF,
            ex_grid: 64,
            ex_beta_points: 4096,
            ex_tol: 1e-4,
            volume: 64,
            detector_cols: 128,
            detector_rows: 64,
        }
    }
}

impl Config {
    /// Overlays the TOML file at `path` on `self`. Relative phantom paths
    /// resolve against the file's directory.
    pub fn overlay_file(self, path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        self.overlay_str(&text, base)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn overlay_str(mut self, text: &str, base: &Path) -> Result<Self, CliError> {
        let f: FileConfig = toml::from_str(text).map_err(config_err)?;
        if let Some(g) = f.geometry {
            self.geometry = HelixGeometry::try_from(g).map_err(|e| config_err(format!("[geometry] {e}")))?;
        }
        match (f.phantom.scale, f.phantom.file) {
            (Some(_), Some(_)) => {
                return Err(config_err("[phantom] `scale` and `file` are mutually exclusive"));
            }
            (Some(scale), None) => self.phantom = PhantomSource::SheppLogan { scale },
            (None, Some(p)) => self.phantom = PhantomSource::File(base.join(p)),
            (None, None) => {}
        }
        let s = f.sampling;
        let r = f.recon;
        set(&mut self.noise, f.phantom.noise);
        set(&mut self.seed, f.phantom.seed);
        set(&mut self.omega, s.omega);
        set(&mut self.omega_v, s.omega_v);
        set(&mut self.gain_omega, s.gain_omega);
        set(&mut self.gain_points, s.gain_points);
        set(&mut self.rolloff, s.rolloff);
        set(&mut self.ex_grid, s.ex_grid);
        set(&mut self.ex_beta_points, s.ex_beta_points);
        set(&mut self.ex_tol, s.ex_tol);
        set(&mut self.volume, r.volume);
        set(&mut self.detector_cols, r.detector_cols);
        set(&mut self.detector_rows, r.detector_rows);
        self.validate()?;
        Ok(self)
    }

    /// Checks ranges the library does not check on construction.
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(format!("`{name}` must be positive, got {v}")))
            }
        };
        positive("sampling.omega", self.omega)?;
        positive("sampling.ex_tol", self.ex_tol)?;
        if let PhantomSource::SheppLogan { scale } = self.phantom {
            positive("phantom.scale", scale)?;
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(config_err(format!("`phantom.noise` must be non-negative, got {}", self.noise)));
        }
        if !(0.0..1.0).contains(&self.rolloff) {
            return Err(config_err(format!("`sampling.rolloff` must lie in [0, 1), got {}", self.rolloff)));
        }
        let [lo, hi] = self.gain_omega;
        positive("sampling.gain_omega", lo)?;
        if !(hi > lo && hi.is_finite()) {
            return Err(config_err(format!("`sampling.gain_omega` must be increasing, got [{lo}, {hi}]")));
        }
        if self.gain_points < 2 {
            return Err(config_err("`sampling.gain_points` must be at least 2"));
        }
        if self.ex_grid < 2 || self.ex_beta_points < 16 {
            return Err(config_err("`sampling.ex_grid` must be ≥ 2 and `sampling.ex_beta_points` ≥ 16"));
        }
        if self.omega_v.is_empty() || self.omega_v.iter().any(|w| !w.is_finite()) {
            return Err(config_err("`sampling.omega_v` must be a non-empty list of finite values"));
        }
        self.desk()?;
        Ok(())
    }

    pub fn params(&self) -> Result<SupportParams, CliError> {
        SupportParams::new(self.geometry, self.omega).map_err(config_err)
    }

    pub fn desk(&self) -> Result<DeskSetup, CliError> {
        let mut d = DeskSetup::new(self.params()?, self.detector_cols, self.detector_rows, self.volume)
            .map_err(|e| config_err(format!("[recon] {e}")))?;
        d.rolloff = self.rolloff;
        Ok(d)
    }

    pub fn load_phantom(&self) -> Result<Phantom, CliError> {
        match &self.phantom {
            PhantomSource::SheppLogan { scale } => shepp_logan_3d(*scale).map_err(config_err),
            PhantomSource::File(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
                text.parse().map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
            }
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}
