//! Optional TOML configuration supplying defaults for command-line flags.
//! Precedence is flag > config > built-in default.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub grid: GridCfg,
    #[serde(default)]
    pub angles: AnglesCfg,
    #[serde(default)]
    pub phantom: PhantomCfg,
    #[serde(default)]
    pub motion: MotionCfg,
    #[serde(default)]
    pub tracker: TrackerCfg,
    #[serde(default)]
    pub align: AlignCfg,
    #[serde(default)]
    pub recon: ReconCfg,
    #[serde(default)]
    pub metrology: MetrologyCfg,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub nz: Option<usize>,
    pub spacing_um: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnglesCfg {
    pub start: Option<f64>,
    pub step: Option<f64>,
    pub count: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomCfg {
    pub spec: Option<PathBuf>,
    pub builtin: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionCfg {
    pub mode: Option<String>,
    pub range_tx: Option<[f64; 2]>,
    pub range_ty: Option<[f64; 2]>,
    pub range_tz: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerCfg {
    pub method: Option<String>,
    pub tau_bg: Option<f64>,
    pub marker_window: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignCfg {
    pub mode: Option<String>,
    pub target_row: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconCfg {
    pub filter: Option<String>,
    pub cutoff: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetrologyCfg {
    pub tau_volume: Option<f64>,
    pub tau_projection: Option<f64>,
    pub open_radius: Option<usize>,
    pub close_radius: Option<usize>,
    pub tolerance_px: Option<f64>,
}

pub fn load(path: Option<&Path>) -> Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}
