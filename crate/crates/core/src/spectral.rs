//! Periodic forward-difference gradient, diagonalized by the DFT.
//!
//! `D_x x[i, j] = x[i, j + 1] - x[i, j]` (wrapping) has the multiplier
//! `exp(2 pi i k / W) - 1`; the adjoint `D_x^T` is its complex conjugate.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::fft::{fft_real, ifft_real};
use crate::grid::{FrequencyGrid, RealImage};

#[derive(Clone, Debug)]
pub struct SpectralOperators {
    pub grad_x_mult: Vec<Complex64>,
    pub grad_y_mult: Vec<Complex64>,
    /// Multiplier of `D^T D = D_x^T D_x + D_y^T D_y`.
    pub lap_mult: Vec<f64>,
}

pub fn spectral_gradient_ops(grid: &FrequencyGrid) -> SpectralOperators {
    let (w, h) = (grid.width(), grid.height());
    let mut gx = Vec::with_capacity(grid.len());
    let mut gy = Vec::with_capacity(grid.len());
    for i in 0..h {
        for j in 0..w {
            gx.push(diff_mult(j, w));
            gy.push(diff_mult(i, h));
        }
    }
    let lap = gx
        .iter()
        .zip(&gy)
        .map(|(a, b): (&Complex64, &Complex64)| a.norm_sqr() + b.norm_sqr())
        .collect();
    SpectralOperators {
        grad_x_mult: gx,
        grad_y_mult: gy,
        lap_mult: lap,
    }
}

fn diff_mult(k: usize, n: usize) -> Complex64 {
    if k == 0 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64) - 1.0
}

impl SpectralOperators {
    /// Applies the gradient to an image, returning `(D_x x, D_y x)`.
    pub fn gradient(&self, img: &RealImage) -> (RealImage, RealImage) {
        let grid = *img.grid();
        let spec = fft_real(&grid, img.data());
        let (dx, dy) = self.gradient_from_spectrum(&grid, &spec);
        (RealImage::from_raw(grid, dx), RealImage::from_raw(grid, dy))
    }

    pub(crate) fn gradient_from_spectrum(
        &self,
        grid: &FrequencyGrid,
        spec: &[Complex64],
    ) -> (Vec<f64>, Vec<f64>) {
        let sx = spec.iter().zip(&self.grad_x_mult).map(|(s, m)| s * m).collect();
        let sy = spec.iter().zip(&self.grad_y_mult).map(|(s, m)| s * m).collect();
        (ifft_real(grid, sx), ifft_real(grid, sy))
    }

    /// Spectrum of `D^T (gx, gy)`.
    pub(crate) fn divergence_spectrum(
        &self,
        grid: &FrequencyGrid,
        gx: &[f64],
        gy: &[f64],
    ) -> Vec<Complex64> {
        let fx = fft_real(grid, gx);
        let fy = fft_real(grid, gy);
        fx.iter()
            .zip(&fy)
            .zip(self.grad_x_mult.iter().zip(&self.grad_y_mult))
            .map(|((a, b), (mx, my))| a * mx.conj() + b * my.conj())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> FrequencyGrid {
        FrequencyGrid::new(n, n, 4.0, 10.0).unwrap()
    }

    fn spatial_forward_diff(img: &RealImage) -> (Vec<f64>, Vec<f64>) {
        let g = img.grid();
        let (w, h) = (g.width(), g.height());
        let mut dx = vec![0.0; w * h];
        let mut dy = vec![0.0; w * h];
        for i in 0..h {
            for j in 0..w {
                dx[i * w + j] = img.get(i, (j + 1) % w) - img.get(i, j);
                dy[i * w + j] = img.get((i + 1) % h, j) - img.get(i, j);
            }
        }
        (dx, dy)
    }

    #[test]
    fn dc_multiplier_is_zero_and_lap_consistent() {
        let ops = spectral_gradient_ops(&grid(16));
        assert_eq!(ops.grad_x_mult[0], Complex64::new(0.0, 0.0));
        assert_eq!(ops.grad_y_mult[0], Complex64::new(0.0, 0.0));
        for k in 0..ops.lap_mult.len() {
            let l = ops.grad_x_mult[k].norm_sqr() + ops.grad_y_mult[k].norm_sqr();
            assert_eq!(ops.lap_mult[k], l);
            assert!(ops.lap_mult[k] >= 0.0);
        }
    }

    #[test]
    fn constant_image_has_zero_gradient() {
        let g = grid(8);
        let (dx, dy) = spectral_gradient_ops(&g).gradient(&RealImage::from_fn(g, |_, _| 3.0));
        assert!(dx.max_abs() < 1e-14 && dy.max_abs() < 1e-14);
    }

    #[test]
    fn ramp_with_wraparound_matches_spatial_differences() {
        let g = grid(8);
        let img = RealImage::from_fn(g, |i, j| j as f64 + 10.0 * i as f64);
        let (dx, dy) = spectral_gradient_ops(&g).gradient(&img);
        let (ex, ey) = spatial_forward_diff(&img);
        for k in 0..g.len() {
            assert!((dx.data()[k] - ex[k]).abs() < 1e-12);
            assert!((dy.data()[k] - ey[k]).abs() < 1e-12);
        }
        // Wrap column: 0 - 7.
        assert!((dx.get(0, 7) + 7.0).abs() < 1e-12);
    }

    #[test]
    fn random_images_match_spatial_differences() {
        let g = grid(32);
        let ops = spectral_gradient_ops(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let img = RealImage::from_fn(g, |_, _| rng.random_range(-1.0..1.0));
            let (dx, dy) = ops.gradient(&img);
            let (ex, ey) = spatial_forward_diff(&img);
            for k in 0..g.len() {
                assert!((dx.data()[k] - ex[k]).abs() < 1e-12);
                assert!((dy.data()[k] - ey[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn divergence_of_gradient_matches_dense_operator() {
        // Dense D^T D built from the spatial stencil.
        let n = 8;
        let g = grid(n);
        let len = n * n;
        let mut d = nalgebra::DMatrix::<f64>::zeros(2 * len, len);
        for i in 0..n {
            for j in 0..n {
                let r = i * n + j;
                d[(r, r)] -= 1.0;
                d[(r, i * n + (j + 1) % n)] += 1.0;
                d[(len + r, r)] -= 1.0;
                d[(len + r, ((i + 1) % n) * n + j)] += 1.0;
            }
        }
        let dtd = d.transpose() * &d;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = RealImage::from_fn(g, |_, _| rng.random_range(-1.0..1.0));
        let x = nalgebra::DVector::from_column_slice(img.data());
        let expect = &dtd * &x;

        let ops = spectral_gradient_ops(&g);
        let (gx, gy) = ops.gradient(&img);
        let div = ifft_real(&g, ops.divergence_spectrum(&g, gx.data(), gy.data()));
        let spec = fft_real(&g, img.data());
        let lap = ifft_real(&g, spec.iter().zip(&ops.lap_mult).map(|(s, l)| s * l).collect());
        for k in 0..len {
            assert!((div[k] - expect[k]).abs() < 1e-12);
            assert!((lap[k] - expect[k]).abs() < 1e-12);
        }
    }
}
