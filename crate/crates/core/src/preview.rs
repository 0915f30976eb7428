//! 16-bit grayscale PNG previews. Min-max bounds go to a sidecar text file
//! (`<name>.png.bounds`) so pixel values can be mapped back.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::RealImage;

const LEVELS: f64 = 65535.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreviewBounds {
    pub min: f64,
    pub max: f64,
}

impl PreviewBounds {
    /// True when the image was constant and rendered as mid-gray.
    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }

    /// Physical value of a 16-bit level.
    pub fn value(&self, level: u16) -> f64 {
        if self.is_degenerate() {
            self.min
        } else {
            self.min + (self.max - self.min) * level as f64 / LEVELS
        }
    }

    /// One quantization step in physical units.
    pub fn step(&self) -> f64 {
        (self.max - self.min) / LEVELS
    }
}

pub fn sidecar_path(png: &Path) -> PathBuf {
    let mut s = png.as_os_str().to_owned();
    s.push(".bounds");
    PathBuf::from(s)
}

pub fn quantize(img: &RealImage) -> (Vec<u16>, PreviewBounds) {
    let min = img.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = img.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bounds = PreviewBounds { min, max };
    let levels = if bounds.is_degenerate() {
        vec![32768; img.data().len()]
    } else {
        img.data()
            .iter()
            .map(|v| ((v - min) / (max - min) * LEVELS).round() as u16)
            .collect()
    };
    (levels, bounds)
}

/// Writes `img` as a min-max normalized 16-bit PNG plus the bounds sidecar.
pub fn preview_png(img: &RealImage, path: &Path) -> Result<PreviewBounds> {
    let (levels, bounds) = quantize(img);
    let g = img.grid();
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), g.width() as u32, g.height() as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
    let bytes: Vec<u8> = levels.iter().flat_map(|v| v.to_be_bytes()).collect();
    writer.write_image_data(&bytes).map_err(|e| Error::Png(e.to_string()))?;
    writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    fs::write(
        sidecar_path(path),
        format!("min = {:e}\nmax = {:e}\ndegenerate = {}\n", bounds.min, bounds.max, bounds.is_degenerate()),
    )?;
    Ok(bounds)
}

/// Reads back a preview's 16-bit levels (row-major) and its bounds.
pub fn read_preview(path: &Path) -> Result<(usize, usize, Vec<u16>, PreviewBounds)> {
    let dec = png::Decoder::new(std::io::BufReader::new(fs::File::open(path)?));
    let mut reader = dec.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Png("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Sixteen || info.color_type != png::ColorType::Grayscale {
        return Err(Error::Png("expected 16-bit grayscale".into()));
    }
    let levels = buf[..info.buffer_size()]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    let text = fs::read_to_string(sidecar_path(path))?;
    let field = |key: &str| -> Result<f64> {
        text.lines()
            .find_map(|l| l.strip_prefix(key)?.trim_start().strip_prefix('=').map(str::trim))
            .ok_or_else(|| Error::Png(format!("bounds file lacks {key}")))?
            .parse()
            .map_err(|_| Error::Png(format!("bad {key} in bounds file")))
    };
    let bounds = PreviewBounds {
        min: field("min")?,
        max: field("max")?,
    };
    Ok((info.width as usize, info.height as usize, levels, bounds))
}
