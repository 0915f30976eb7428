use std::path::{Path, PathBuf};

use qdpc::grid::center_shift;
use qdpc::{npy, preview, ComplexImage, RealImage};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{io_err, Result};

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const VERSION_FILE: &str = "version.txt";

pub fn version_string() -> String {
    format!("qdpc {}", env!("CARGO_PKG_VERSION"))
}

/// An artifact directory. Every directory carries the resolved run
/// configuration and the tool version.
#[derive(Clone, Debug)]
pub struct OutDir {
    path: PathBuf,
}

impl OutDir {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        std::fs::create_dir_all(&path).map_err(io_err(&path))?;
        Ok(Self { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn sub(&self, name: &str) -> Result<OutDir> {
        OutDir::create(self.file(name))
    }

    pub fn write_manifest(&self, cfg: &RunConfig) -> Result<()> {
        self.write_text(RESOLVED_CONFIG, &cfg.to_toml())?;
        self.write_text(VERSION_FILE, &format!("{}\n", version_string()))?;
        Ok(())
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.file(name);
        std::fs::write(&p, text).map_err(io_err(&p))?;
        Ok(p)
    }

    pub fn save_real(&self, name: &str, img: &RealImage) -> Result<PathBuf> {
        let p = self.file(name);
        npy::save_real(&p, img)?;
        Ok(p)
    }

    pub fn save_complex(&self, name: &str, img: &ComplexImage) -> Result<PathBuf> {
        let p = self.file(name);
        npy::save_complex(&p, img)?;
        Ok(p)
    }

    pub fn preview(&self, name: &str, img: &RealImage) -> Result<PathBuf> {
        let p = self.file(name);
        preview::preview_png(img, &p)?;
        Ok(p)
    }

    /// Preview with the zero frequency (or origin) moved to the center.
    pub fn preview_centered(&self, name: &str, img: &RealImage) -> Result<PathBuf> {
        self.preview(name, &center_shift(img))
    }

    pub fn write_csv<R: Serialize>(&self, name: &str, rows: &[R]) -> Result<PathBuf> {
        let p = self.file(name);
        let mut w = csv::Writer::from_path(&p)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(io_err(&p))?;
        Ok(p)
    }
}

/// `key = value` lines for stdout.
pub fn print_toml<T: Serialize>(value: &T) {
    print!("{}", toml::to_string(value).expect("report serializes"));
}
