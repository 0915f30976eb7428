//! Two-dimensional DFTs.
//!
//! Convention: the forward transform is unnormalized,
//! `X[k] = sum_n x[n] exp(-2 pi i k.n / N)`, and the inverse carries the full
//! `1 / (W H)` factor. Parseval therefore reads `sum |x|^2 = sum |X|^2 / (W H)`.
//! Multiplier algebra (transfer functions, gradient operators) is identical
//! under this convention and the unitary one.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::Result;
use crate::grid::{ComplexImage, FrequencyGrid, RealImage};

/// Row and column plans for one grid shape.
pub struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

static PLANS: OnceLock<Mutex<HashMap<(usize, usize), Arc<Fft2>>>> = OnceLock::new();

impl Fft2 {
    /// Shared plan set for the grid's shape.
    pub fn for_grid(grid: &FrequencyGrid) -> Arc<Fft2> {
        let key = (grid.width(), grid.height());
        let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
        let mut cache = cache.lock().unwrap_or_else(|e| e.into_inner());
        cache
            .entry(key)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(Fft2 {
                    width: key.0,
                    height: key.1,
                    row_fwd: planner.plan_fft_forward(key.0),
                    row_inv: planner.plan_fft_inverse(key.0),
                    col_fwd: planner.plan_fft_forward(key.1),
                    col_inv: planner.plan_fft_inverse(key.1),
                })
            })
            .clone()
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform including the `1 / (W H)` normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, &self.col_inv);
        let s = 1.0 / (self.width * self.height) as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }

    fn run(&self, buf: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (w, h) = (self.width, self.height);
        assert_eq!(buf.len(), w * h, "buffer does not match plan shape");
        rows.process(buf);
        let mut t = vec![Complex64::new(0.0, 0.0); w * h];
        transpose(buf, &mut t, w, h);
        cols.process(&mut t);
        transpose(&t, buf, h, w);
    }
}

// src is rows x cols (row-major), dst becomes cols x rows.
fn transpose(src: &[Complex64], dst: &mut [Complex64], cols: usize, rows: usize) {
    const B: usize = 16;
    for ib in (0..rows).step_by(B) {
        for jb in (0..cols).step_by(B) {
            for i in ib..(ib + B).min(rows) {
                for j in jb..(jb + B).min(cols) {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}

/// Anything that can be fed to the forward transform.
pub trait FourierInput {
    fn grid(&self) -> &FrequencyGrid;
    fn to_buffer(&self) -> Result<Vec<Complex64>>;
}

impl FourierInput for RealImage {
    fn grid(&self) -> &FrequencyGrid {
        RealImage::grid(self)
    }

    fn to_buffer(&self) -> Result<Vec<Complex64>> {
        // Re-validate: images can be built from raw buffers internally.
        let checked = RealImage::new(*self.grid(), self.data().to_vec())?;
        Ok(checked.data().iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }
}

impl FourierInput for ComplexImage {
    fn grid(&self) -> &FrequencyGrid {
        ComplexImage::grid(self)
    }

    fn to_buffer(&self) -> Result<Vec<Complex64>> {
        Ok(ComplexImage::new(*self.grid(), self.data().to_vec())?.into_data())
    }
}

/// Forward 2D DFT of a real or complex image. Non-finite samples are rejected.
pub fn forward_transform<T: FourierInput>(img: &T) -> Result<ComplexImage> {
    let grid = *img.grid();
    let mut buf = img.to_buffer()?;
    Fft2::for_grid(&grid).forward(&mut buf);
    Ok(ComplexImage::from_raw(grid, buf))
}

pub fn inverse_transform(spec: &ComplexImage) -> ComplexImage {
    let grid = *spec.grid();
    let mut buf = spec.data().to_vec();
    Fft2::for_grid(&grid).inverse(&mut buf);
    ComplexImage::from_raw(grid, buf)
}

/// Real part of the inverse transform.
pub fn inverse_real(spec: &ComplexImage) -> RealImage {
    inverse_transform(spec).real_part()
}

pub(crate) fn fft_real(grid: &FrequencyGrid, data: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Fft2::for_grid(grid).forward(&mut buf);
    buf
}

pub(crate) fn ifft_real(grid: &FrequencyGrid, mut buf: Vec<Complex64>) -> Vec<f64> {
    Fft2::for_grid(grid).inverse(&mut buf);
    buf.into_iter().map(|v| v.re).collect()
}

/// Periodic (circular) convolution of two real images via the DFT.
pub fn convolve_circular(a: &RealImage, b: &RealImage) -> Result<RealImage> {
    a.grid().check_same(b.grid(), "convolve_circular")?;
    let grid = *a.grid();
    let fa = fft_real(&grid, a.data());
    let fb = fft_real(&grid, b.data());
    let prod = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    Ok(RealImage::from_raw(grid, ifft_real(&grid, prod)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(grid: FrequencyGrid, seed: u64) -> RealImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealImage::from_fn(grid, |_, _| rng.random_range(-1.0..1.0))
    }

    // O(N^2) DFT straight from the definition.
    fn direct_dft(img: &RealImage) -> Vec<Complex64> {
        let g = img.grid();
        let (w, h) = (g.width(), g.height());
        let mut out = vec![Complex64::new(0.0, 0.0); w * h];
        for ku in 0..h {
            for kv in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..h {
                    for j in 0..w {
                        let ph = -2.0 * std::f64::consts::PI
                            * ((ku * i) as f64 / h as f64 + (kv * j) as f64 / w as f64);
                        acc += img.get(i, j) * Complex64::from_polar(1.0, ph);
                    }
                }
                out[ku * w + kv] = acc;
            }
        }
        out
    }

    #[test]
    fn constant_image_has_dc_only() {
        let g = FrequencyGrid::new(8, 6, 4.0, 10.0).unwrap();
        let img = RealImage::from_fn(g, |_, _| 2.5);
        let s = forward_transform(&img).unwrap();
        assert!((s.data()[0] - Complex64::new(2.5 * 48.0, 0.0)).norm() < 1e-12);
        assert!(s.data()[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let g = FrequencyGrid::new(8, 8, 4.0, 10.0).unwrap();
        let img = RealImage::from_fn(g, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 });
        let s = forward_transform(&img).unwrap();
        assert!(s.data().iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn matches_direct_dft_on_8x8() {
        let g = FrequencyGrid::new(8, 8, 4.0, 10.0).unwrap();
        let img = random_image(g, 3);
        let fast = forward_transform(&img).unwrap();
        let slow = direct_dft(&img);
        for (a, b) in fast.data().iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn matches_direct_dft_on_rectangular() {
        let g = FrequencyGrid::new(6, 10, 4.0, 10.0).unwrap();
        let img = random_image(g, 4);
        let fast = forward_transform(&img).unwrap();
        for (a, b) in fast.data().iter().zip(&direct_dft(&img)) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn round_trip_and_parseval_up_to_256() {
        for (n, seed) in [(8usize, 1u64), (64, 2), (256, 3)] {
            let g = FrequencyGrid::new(n, n, 4.0, 10.0).unwrap();
            let img = random_image(g, seed);
            let s = forward_transform(&img).unwrap();
            let back = inverse_transform(&s);
            let tol = 1e-12 * img.max_abs();
            for (a, b) in back.data().iter().zip(img.data()) {
                assert!((a.re - b).abs() <= tol && a.im.abs() <= tol);
            }
            let ex: f64 = img.data().iter().map(|v| v * v).sum();
            let es: f64 = s.data().iter().map(|v| v.norm_sqr()).sum::<f64>() / g.len() as f64;
            assert!(((ex - es) / ex).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        let g = FrequencyGrid::new(4, 4, 4.0, 10.0).unwrap();
        let mut d = vec![0.0; 16];
        d[3] = f64::INFINITY;
        let img = RealImage::from_raw(g, d);
        assert!(forward_transform(&img).is_err());
    }
}
