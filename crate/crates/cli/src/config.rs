//! Run configuration: a versioned TOML schema mirroring every command-line
//! flag. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the base output directory; read by the
/// `--out-dir` flag.
pub const OUT_DIR_ENV: &str = "QDPC_OUT_DIR";

pub const DEFAULT_OUT_DIR: &str = "qdpc-out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Base output directory; each command writes to `<out_dir>/<command>`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub grid: GridConfig,
    pub optics: OpticsConfig,
    pub source: SourceConfig,
    pub target: TargetConfig,
    pub background: BackgroundConfig,
    pub noise: NoiseConfig,
    pub solver: SolverConfig,
    pub learn: LearnSection,
    pub reproduce: ReproduceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            out_dir: None,
            grid: GridConfig::default(),
            optics: OpticsConfig::default(),
            source: SourceConfig::default(),
            target: TargetConfig::default(),
            background: BackgroundConfig::default(),
            noise: NoiseConfig::default(),
            solver: SolverConfig::default(),
            learn: LearnSection::default(),
            reproduce: ReproduceConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Square grid side, in pixels.
    pub size: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { size: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsConfig {
    pub na: f64,
    pub na_illum: f64,
    pub lambda_um: f64,
    pub pixel_size_um: f64,
    pub magnification: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        let m = qdpc::forward::AcquisitionMeta::desk_default();
        Self {
            na: m.na,
            na_illum: m.na_illum,
            lambda_um: m.lambda_um,
            pixel_size_um: m.pixel_size_um,
            magnification: m.magnification,
        }
    }
}

impl OpticsConfig {
    pub fn meta(&self) -> qdpc::forward::AcquisitionMeta {
        qdpc::forward::AcquisitionMeta {
            na: self.na,
            na_illum: self.na_illum,
            lambda_um: self.lambda_um,
            pixel_size_um: self.pixel_size_um,
            magnification: self.magnification,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SourceShape {
    HalfCircle,
    Annular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub shape: SourceShape,
    /// Inner NA of the annular source; ignored for half circles.
    pub inner_na: f64,
    /// Illumination axes theta0, in degrees.
    pub axes_deg: Vec<f64>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            shape: SourceShape::HalfCircle,
            inner_na: 0.125,
            axes_deg: vec![0.0, 90.0],
        }
    }
}

impl SourceConfig {
    pub fn axes_rad(&self) -> Vec<f64> {
        self.axes_deg.iter().map(|d| d.to_radians()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    /// `wedding-cake`, `focal-star` or `custom:<file.npy>`.
    pub kind: String,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            kind: "wedding-cake".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub enabled: bool,
    pub z_um: f64,
    pub mismatch: f64,
    pub layer_bumps: usize,
    pub layer_phase: f64,
    pub layer_seed: u64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        let s = qdpc::scenario::ScenarioConfig::default();
        Self {
            enabled: s.background,
            z_um: s.z_um,
            mismatch: s.mismatch,
            layer_bumps: s.layer_bumps,
            layer_phase: s.layer_phase,
            layer_seed: s.layer_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Per-image SNR in dB; `inf` simulates a noiseless stack.
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { snr_db: 5.0, seed: 0 }
    }
}

impl NoiseConfig {
    pub fn snr(&self) -> Option<f64> {
        self.snr_db.is_finite().then_some(self.snr_db)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    L2,
    Iso,
    Tv,
    RetinexTv,
    Pd,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::L2 => "l2",
            MethodName::Iso => "iso",
            MethodName::Tv => "tv",
            MethodName::RetinexTv => "retinex-tv",
            MethodName::Pd => "pd",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: MethodName,
    /// Penalty weight; taken from the noise sensor when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Gradient penalty weight (pd and iso); sensor value when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub omega: f64,
    pub iters: usize,
    pub tol: f64,
    pub isotropic: bool,
    /// Ignore `alpha`/`beta` and ask the noise sensor.
    pub auto_params: bool,
    /// Gaussian width of the iso penalty kernel, in pixels.
    pub iso_sigma_px: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let pd = qdpc::solvers::PdParams::default();
        Self {
            method: MethodName::Pd,
            alpha: None,
            beta: None,
            omega: pd.omega,
            iters: pd.max_iters,
            tol: pd.tol,
            isotropic: pd.isotropic,
            auto_params: false,
            iso_sigma_px: qdpc::scenario::ISO_SIGMA_PX,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnSection {
    pub iters: usize,
    pub step: f64,
    pub seed: u64,
    pub fx_floor: f64,
    /// `[normal angle in degrees, weight]` pairs; weights are renormalized.
    pub edges: Vec<[f64; 2]>,
    pub snapshots: Vec<usize>,
    /// Phase image whose gradient orientations replace `edges`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guide: Option<PathBuf>,
}

impl Default for LearnSection {
    fn default() -> Self {
        Self {
            iters: 25,
            step: 0.5,
            seed: 0,
            fx_floor: 1.0,
            edges: vec![[0.0, 1.0]],
            snapshots: vec![1, 5, 10, 25],
            guide: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceConfig {
    /// Number of noise seeds, starting at `noise.seed`.
    pub seeds: usize,
    /// Also run the single-term ablations of pd.
    pub ablation: bool,
    pub iters: usize,
    /// Run the methods of one seed on a thread pool.
    pub parallel: bool,
}

impl Default for ReproduceConfig {
    fn default() -> Self {
        Self {
            seeds: 3,
            ablation: false,
            iters: 50,
            parallel: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config {
                path: path.to_path_buf(),
                msg: format!(
                    "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                    cfg.schema_version
                ),
            });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Base output directory: the flag (or its environment variable), then
    /// the config, then the default.
    pub fn resolve_out_base(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn grid(&self) -> Result<qdpc::FrequencyGrid> {
        Ok(qdpc::FrequencyGrid::new(
            self.grid.size,
            self.grid.size,
            self.optics.pixel_size_um,
            self.optics.magnification,
        )?)
    }
}
