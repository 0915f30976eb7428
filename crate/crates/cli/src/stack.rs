//! On-disk DPC stacks: a directory with `metadata.toml` and one NPY per
//! illumination axis.

use std::path::Path;

use qdpc::forward::DpcStack;
use qdpc::pupils::{annular_source, antisymmetrize, objective_pupil};
use qdpc::transfer::{half_circle_ptfs, ptf, TransferFunction};
use qdpc::{npy, FrequencyGrid};
use serde::{Deserialize, Serialize};

use crate::config::{BackgroundConfig, OpticsConfig, RunConfig, SourceConfig, SourceShape};
use crate::error::{io_err, CliError, Result};

pub const METADATA_FILE: &str = "metadata.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackMetadata {
    pub size: usize,
    pub na: f64,
    pub na_illum: f64,
    pub lambda_um: f64,
    pub pixel_size_um: f64,
    pub magnification: f64,
    pub source: SourceShape,
    #[serde(default)]
    pub inner_na: f64,
    /// Illumination axis of each image, in radians.
    pub theta0: Vec<f64>,
    /// Image files relative to the metadata file, one per axis.
    pub images: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `inf` when the stack is noiseless.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<BackgroundConfig>,
}

impl StackMetadata {
    pub fn optics(&self) -> OpticsConfig {
        OpticsConfig {
            na: self.na,
            na_illum: self.na_illum,
            lambda_um: self.lambda_um,
            pixel_size_um: self.pixel_size_um,
            magnification: self.magnification,
        }
    }

    /// Copies grid, optics and source geometry into `cfg`.
    pub fn fill(&self, cfg: &mut RunConfig) {
        cfg.grid.size = self.size;
        cfg.optics = self.optics();
        cfg.source = SourceConfig {
            shape: self.source,
            inner_na: self.inner_na,
            axes_deg: self.theta0.iter().map(|t| t.to_degrees()).collect(),
        };
    }
}

/// One transfer function per axis for the configured source geometry.
pub fn build_tfs(grid: FrequencyGrid, optics: &OpticsConfig, source: &SourceConfig, axes: &[f64]) -> Result<Vec<TransferFunction>> {
    if axes.is_empty() {
        return Err(CliError::Usage("at least one illumination axis is needed".into()));
    }
    Ok(match source.shape {
        SourceShape::HalfCircle => half_circle_ptfs(grid, optics.na, optics.na_illum, optics.lambda_um, axes)?,
        SourceShape::Annular => {
            let pupil = objective_pupil(grid, optics.na, optics.lambda_um)?;
            axes.iter()
                .map(|&t| {
                    let src = annular_source(grid, optics.na_illum, source.inner_na, optics.lambda_um, t)?;
                    ptf(&pupil, &antisymmetrize(&src, &pupil)?)
                })
                .collect::<qdpc::Result<_>>()?
        }
    })
}

pub fn load_stack(dir: &Path) -> Result<(StackMetadata, DpcStack)> {
    let mpath = dir.join(METADATA_FILE);
    let text = std::fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let meta: StackMetadata = toml::from_str(&text).map_err(|e| CliError::BadInput {
        path: mpath.clone(),
        msg: e.to_string(),
    })?;
    if meta.images.len() != meta.theta0.len() {
        return Err(CliError::BadInput {
            path: mpath,
            msg: format!("{} images but {} theta0 values", meta.images.len(), meta.theta0.len()),
        });
    }
    let optics = meta.optics();
    let grid = FrequencyGrid::new(meta.size, meta.size, optics.pixel_size_um, optics.magnification)?;
    let source = SourceConfig {
        shape: meta.source,
        inner_na: meta.inner_na,
        axes_deg: vec![],
    };
    let tfs = build_tfs(grid, &optics, &source, &meta.theta0)?;
    let images = meta
        .images
        .iter()
        .map(|name| npy::load_real(&dir.join(name), grid))
        .collect::<qdpc::Result<Vec<_>>>()?;
    let mut stack = DpcStack::new(images, tfs, optics.meta())?;
    stack.seed = meta.seed;
    Ok((meta, stack))
}
