//! Run configuration: defaults, then the `--config` file, then flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use frontlab::asymptotics::FitWindow;
use frontlab::grid::Grid;
use frontlab::wave::SolverConfig;
use frontlab::{Error, Result};

pub const DEFAULT_OUT: &str = "frontlab-out";
pub const DEFAULT_SEED: u64 = 20_240_229;
pub const SPECTRUM_INTERVALS: usize = 1024;

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Overrides for the wave solver; checked against its schema.
    pub solver: Option<SolverConfig>,
    /// Fit window `[lo, hi]` in `|ξ|`.
    pub window: Option<[f64; 2]>,
    pub spectrum: Option<GridOverride>,
    pub greens: Option<GreensFile>,
}

#[derive(Debug, Default, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverride {
    pub half_width: Option<f64>,
    pub intervals: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreensFile {
    pub d: Option<f64>,
    pub c: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub lambda: Option<f64>,
    pub kernel: Option<String>,
    pub half_width: Option<f64>,
    pub intervals: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: Option<String>,
    pub out: PathBuf,
    pub seed: u64,
    pub reproducible: bool,
    pub force: bool,
}

/// Grid flags given on the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct GridFlags {
    pub half_width: Option<f64>,
    pub intervals: Option<usize>,
}

/// Solver settings for `solve`/`rates`, validated before anything runs.
pub fn solver_config(file: &FileConfig, flags: GridFlags) -> Result<(SolverConfig, Grid)> {
    let mut cfg = file.solver.unwrap_or_default();
    if let Some(l) = flags.half_width {
        cfg.half_width = l;
    }
    if let Some(n) = flags.intervals {
        cfg.intervals = n;
    }
    let grid = cfg.validate()?;
    Ok((cfg, grid))
}

/// Solver settings for `spectrum`: the `[spectrum]` grid (default n = 1024)
/// over the `[solver]` settings.
pub fn spectrum_config(file: &FileConfig, flags: GridFlags) -> Result<(SolverConfig, Grid)> {
    let mut cfg = file.solver.unwrap_or_default();
    let over = file.spectrum.unwrap_or_default();
    cfg.intervals = over.intervals.unwrap_or(SPECTRUM_INTERVALS);
    if let Some(l) = over.half_width {
        cfg.half_width = l;
    }
    if let Some(l) = flags.half_width {
        cfg.half_width = l;
    }
    if let Some(n) = flags.intervals {
        cfg.intervals = n;
    }
    let grid = cfg.validate()?;
    Ok((cfg, grid))
}

pub fn fit_window(file: &FileConfig, flag: Option<&[f64]>, half_width: f64) -> Result<FitWindow> {
    let pair = match flag {
        Some(v) => Some([v[0], v[1]]),
        None => file.window,
    };
    match pair {
        Some([lo, hi]) if lo.is_finite() && hi.is_finite() && lo < hi => Ok(FitWindow::new(lo, hi)),
        Some([lo, hi]) => Err(Error::Spec(format!("fit window [{lo}, {hi}] is empty or not finite"))),
        None => Ok(FitWindow::default_for(half_width)),
    }
}

/// Creates the output directory and makes sure it accepts files.
pub fn prepare_out(dir: &Path) -> Result<()> {
    let io = |e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let probe = dir.join(".frontlab-write-probe");
    std::fs::write(&probe, b"").map_err(io)?;
    std::fs::remove_file(&probe).map_err(io)
}
