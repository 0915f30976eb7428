//! Sampling grid and the real/complex image buffers built on it.
//!
//! Storage is row-major: row `i` runs along y, column `j` along x. Frequency
//! coordinates follow DFT order with the zero frequency at index `(0, 0)`;
//! indices at or above half the size map to negative frequencies.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Shared spatial/frequency coordinate system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyGrid {
    width: usize,
    height: usize,
    pixel_size_um: f64,
    magnification: f64,
}

impl FrequencyGrid {
    pub fn new(width: usize, height: usize, pixel_size_um: f64, magnification: f64) -> Result<Self> {
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive and even, got {width}x{height}"
            )));
        }
        if !(pixel_size_um.is_finite() && pixel_size_um > 0.0) {
            return Err(Error::InvalidGrid(format!("pixel size {pixel_size_um} um")));
        }
        if !(magnification.is_finite() && magnification > 0.0) {
            return Err(Error::InvalidGrid(format!("magnification {magnification}")));
        }
        Ok(Self {
            width,
            height,
            pixel_size_um,
            magnification,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel_size_um(&self) -> f64 {
        self.pixel_size_um
    }

    pub fn magnification(&self) -> f64 {
        self.magnification
    }

    /// Pixel pitch referred to the sample plane (um).
    pub fn dx_um(&self) -> f64 {
        self.pixel_size_um / self.magnification
    }

    /// Frequency step along x (cycles/um).
    pub fn df_x(&self) -> f64 {
        self.magnification / (self.pixel_size_um * self.width as f64)
    }

    /// Frequency step along y (cycles/um).
    pub fn df_y(&self) -> f64 {
        self.magnification / (self.pixel_size_um * self.height as f64)
    }

    /// Smaller of the two Nyquist frequencies (cycles/um).
    pub fn nyquist(&self) -> f64 {
        0.5 / self.dx_um()
    }

    /// Signed DFT index of column `j`.
    pub fn signed_col(&self, j: usize) -> i64 {
        signed_index(j, self.width)
    }

    /// Signed DFT index of row `i`.
    pub fn signed_row(&self, i: usize) -> i64 {
        signed_index(i, self.height)
    }

    pub fn fx(&self, j: usize) -> f64 {
        self.signed_col(j) as f64 * self.df_x()
    }

    pub fn fy(&self, i: usize) -> f64 {
        self.signed_row(i) as f64 * self.df_y()
    }

    /// |f| for a lattice point given by signed indices; the lattice may extend
    /// beyond the grid.
    pub fn radius_at(&self, kx: i64, ky: i64) -> f64 {
        let fx = kx as f64 * self.df_x();
        let fy = ky as f64 * self.df_y();
        (fx * fx + fy * fy).sqrt()
    }

    /// |f| at storage position `(i, j)`.
    pub fn radius(&self, i: usize, j: usize) -> f64 {
        self.radius_at(self.signed_col(j), self.signed_row(i))
    }

    /// Storage offset of the index-negated position `(-i, -j)` modulo the grid.
    pub fn negated(&self, idx: usize) -> usize {
        let (i, j) = (idx / self.width, idx % self.width);
        let ni = (self.height - i) % self.height;
        let nj = (self.width - j) % self.width;
        ni * self.width + nj
    }

    /// Per-pixel |f| in storage order.
    pub fn radius_map(&self) -> Vec<f64> {
        (0..self.len())
            .map(|idx| self.radius(idx / self.width, idx % self.width))
            .collect()
    }

    pub fn same_shape(&self, other: &FrequencyGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_same(&self, other: &FrequencyGrid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }
}

fn signed_index(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

fn check_finite<T>(grid: &FrequencyGrid, data: &[T], finite: impl Fn(&T) -> bool) -> Result<()> {
    match data.iter().position(|v| !finite(v)) {
        Some(idx) => Err(Error::NonFinite {
            row: idx / grid.width(),
            col: idx % grid.width(),
        }),
        None => Ok(()),
    }
}

fn check_len(grid: &FrequencyGrid, len: usize) -> Result<()> {
    if len != grid.len() {
        return Err(Error::GridMismatch(format!(
            "buffer of {len} samples for a {}x{} grid",
            grid.width(),
            grid.height()
        )));
    }
    Ok(())
}

/// Real scalar image on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage {
    grid: FrequencyGrid,
    data: Vec<f64>,
}

impl RealImage {
    pub fn new(grid: FrequencyGrid, data: Vec<f64>) -> Result<Self> {
        check_len(&grid, data.len())?;
        check_finite(&grid, &data, |v| v.is_finite())?;
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: FrequencyGrid) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: FrequencyGrid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let w = grid.width();
        let data = (0..grid.len()).map(|idx| f(idx / w, idx % w)).collect();
        Self { grid, data }
    }

    /// Wraps a buffer produced by internal arithmetic on finite inputs.
    pub(crate) fn from_raw(grid: FrequencyGrid, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, data }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.grid.width() + col]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_raw(self.grid, self.data.iter().map(|v| v * c).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &RealImage, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid, "zip_map")?;
        Ok(Self::from_raw(
            self.grid,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn add(&self, other: &RealImage) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &RealImage) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn to_complex(&self) -> ComplexImage {
        ComplexImage::from_raw(
            self.grid,
            self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    /// Same samples reinterpreted on another grid of identical shape.
    pub fn with_grid(self, grid: FrequencyGrid) -> Result<Self> {
        if !self.grid.same_shape(&grid) {
            return Err(Error::GridMismatch("with_grid: shape differs".into()));
        }
        Ok(Self { grid, data: self.data })
    }
}

/// Complex image on a grid (spectra, transfer functions, optical fields).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage {
    grid: FrequencyGrid,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn new(grid: FrequencyGrid, data: Vec<Complex64>) -> Result<Self> {
        check_len(&grid, data.len())?;
        check_finite(&grid, &data, |v| v.re.is_finite() && v.im.is_finite())?;
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: FrequencyGrid) -> Self {
        Self {
            grid,
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub(crate) fn from_raw(grid: FrequencyGrid, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, data }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.grid.width() + col]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn real_part(&self) -> RealImage {
        RealImage::from_raw(self.grid, self.data.iter().map(|v| v.re).collect())
    }

    pub fn imag_part(&self) -> RealImage {
        RealImage::from_raw(self.grid, self.data.iter().map(|v| v.im).collect())
    }

    pub fn magnitude(&self) -> RealImage {
        RealImage::from_raw(self.grid, self.data.iter().map(|v| v.norm()).collect())
    }
}

/// Moves the zero-frequency (or zero-offset) sample to the image centre for
/// display.
pub fn center_shift(img: &RealImage) -> RealImage {
    let g = *img.grid();
    let (w, h) = (g.width(), g.height());
    RealImage::from_fn(g, |i, j| img.get((i + h / 2) % h, (j + w / 2) % w))
}
