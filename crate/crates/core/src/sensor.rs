//! Noise level estimated outside the PTF band, and the penalty weights
//! derived from it.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::{fft_real, ifft_real};
use crate::forward::DpcStack;
use crate::grid::{FrequencyGrid, RealImage};

/// 3x3 Laplacian-difference mask.
const GAMMA: [[f64; 3]; 3] = [[-1.0, 2.0, -1.0], [2.0, -4.0, 2.0], [-1.0, 2.0, -1.0]];

/// Floor on the automatic `alpha`, relative to the largest DPC magnitude.
pub const ALPHA_FLOOR_REL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseEstimate {
    pub sigma: f64,
    /// Each image's contribution; they sum to `sigma`.
    pub per_image_sigmas: Vec<f64>,
}

/// Zeroes every bin with `|f| <= band_limit`.
pub fn high_pass(img: &RealImage, band_limit: f64) -> RealImage {
    let g = *img.grid();
    let mut spec = fft_real(&g, img.data());
    for (k, v) in spec.iter_mut().enumerate() {
        if g.radius(k / g.width(), k % g.width()) <= band_limit {
            *v = 0.0.into();
        }
    }
    RealImage::from_raw(g, ifft_real(&g, spec))
}

/// Periodic 3x3 convolution with the Laplacian-difference mask.
pub fn gamma_filter(img: &RealImage) -> RealImage {
    let g = *img.grid();
    let (w, h) = (g.width(), g.height());
    RealImage::from_fn(g, |i, j| {
        let mut acc = 0.0;
        for (di, row) in GAMMA.iter().enumerate() {
            for (dj, c) in row.iter().enumerate() {
                let ii = (i + h + di - 1) % h;
                let jj = (j + w + dj - 1) % w;
                acc += c * img.get(ii, jj);
            }
        }
        acc
    })
}

fn check_band(grid: &FrequencyGrid, band: f64) -> Result<()> {
    // The largest radius on the grid is the corner; a band reaching it leaves nothing.
    let corner = grid.radius_at(grid.width() as i64 / 2, grid.height() as i64 / 2);
    if band >= grid.nyquist().min(corner) {
        return Err(Error::InvalidParameter(format!(
            "band limit {band:.4} cycles/um reaches Nyquist {:.4}; no out-of-band region to sense noise",
            grid.nyquist()
        )));
    }
    Ok(())
}

/// `sigma = (1/5) sqrt(pi/2) / (N W H) * sum |Gamma * HPF(S_n)|`.
pub fn noise_sigma(stack: &DpcStack) -> Result<NoiseEstimate> {
    let g = *stack.grid();
    let band = stack.meta.band_limit();
    check_band(&g, band)?;
    let n = stack.len() as f64;
    let scale = 0.2 * (PI / 2.0).sqrt() / (n * g.len() as f64);
    let per_image_sigmas: Vec<f64> = stack
        .images
        .iter()
        .map(|img| {
            let filtered = gamma_filter(&high_pass(img, band));
            scale * filtered.data().iter().map(|v| v.abs()).sum::<f64>()
        })
        .collect();
    Ok(NoiseEstimate {
        sigma: per_image_sigmas.iter().sum(),
        per_image_sigmas,
    })
}

/// `alpha = sigma / 2`, `beta = sigma / 10`.
pub fn auto_params(est: &NoiseEstimate) -> (f64, f64) {
    (est.sigma / 2.0, est.sigma / 10.0)
}

/// Sensor-derived `(alpha, beta)` with `alpha` floored at
/// `ALPHA_FLOOR_REL * max |S_n|` so the edge subproblem stays well posed.
pub fn auto_params_for(stack: &DpcStack) -> Result<(f64, f64)> {
    let (alpha, beta) = auto_params(&noise_sigma(stack)?);
    let floor = ALPHA_FLOOR_REL * stack.images.iter().map(RealImage::max_abs).fold(0.0, f64::max);
    if alpha < floor {
        log::info!("sensor alpha {alpha:.3e} below floor, using {floor:.3e}");
        return Ok((floor, beta));
    }
    Ok((alpha, beta))
}
