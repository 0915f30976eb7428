//! Reconstruction scores against a ground truth: rpSNR, PSNR and SSIM.

use crate::error::Result;
use crate::grid::RealImage;

/// Value reported for a perfect match.
pub const DB_CAP: f64 = 300.0;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn db(ratio: f64) -> f64 {
    if ratio.is_finite() {
        (10.0 * ratio.log10()).min(DB_CAP)
    } else {
        DB_CAP
    }
}

/// Regression-phase SNR: fit `a * rec + b` to `gt` by least squares and
/// return `10 log10(Var(gt) / MSE)`.
pub fn rpsnr(rec: &RealImage, gt: &RealImage) -> Result<f64> {
    rec.grid().check_same(gt.grid(), "rpsnr")?;
    let (x, y) = (rec.data(), gt.data());
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b = my - a * mx;
    let n = x.len() as f64;
    let mse = x.iter().zip(y).map(|(u, v)| (a * u + b - v).powi(2)).sum::<f64>() / n;
    let var = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
    Ok(db(var / mse))
}

/// `10 log10(peak^2 / MSE)`, peak the ground-truth range.
pub fn psnr(rec: &RealImage, gt: &RealImage) -> Result<f64> {
    rec.grid().check_same(gt.grid(), "psnr")?;
    let peak = range(gt.data());
    let mse = rec
        .data()
        .iter()
        .zip(gt.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / rec.data().len() as f64;
    Ok(db(peak * peak / mse))
}

fn range(x: &[f64]) -> f64 {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

const SSIM_RADIUS: usize = 5;
const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> Vec<f64> {
    let r = SSIM_RADIUS as f64;
    let w: Vec<f64> = (0..2 * SSIM_RADIUS + 1)
        .map(|k| (-(k as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

// Separable filter over the valid region only (no padding).
fn filter_valid(data: &[f64], w: usize, h: usize, win: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = win.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = (0..k).map(|t| win[t] * data[i * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..k).map(|t| win[t] * rows[(i + t) * ow + j]).sum();
        }
    }
    (out, ow, oh)
}

struct LocalStats {
    ux: Vec<f64>,
    uy: Vec<f64>,
    vx: Vec<f64>,
    vy: Vec<f64>,
    cxy: Vec<f64>,
    c1: f64,
    c2: f64,
}

fn local_stats(rec: &RealImage, gt: &RealImage) -> Result<LocalStats> {
    rec.grid().check_same(gt.grid(), "ssim")?;
    let g = rec.grid();
    let (w, h) = (g.width(), g.height());
    if w < 2 * SSIM_RADIUS + 1 || h < 2 * SSIM_RADIUS + 1 {
        return Err(crate::Error::InvalidGrid(format!("SSIM needs at least 11x11 pixels, got {w}x{h}")));
    }
    let mut l = range(gt.data());
    if l == 0.0 {
        l = 1.0;
    }
    let win = gaussian_window();
    let (x, y) = (rec.data(), gt.data());
    let prod = |f: &dyn Fn(f64, f64) -> f64| x.iter().zip(y).map(|(a, b)| f(*a, *b)).collect::<Vec<_>>();
    let (ux, ..) = filter_valid(x, w, h, &win);
    let (uy, ..) = filter_valid(y, w, h, &win);
    let (uxx, ..) = filter_valid(&prod(&|a, _| a * a), w, h, &win);
    let (uyy, ..) = filter_valid(&prod(&|_, b| b * b), w, h, &win);
    let (uxy, ..) = filter_valid(&prod(&|a, b| a * b), w, h, &win);
    let vx = uxx.iter().zip(&ux).map(|(s, m)| s - m * m).collect();
    let vy = uyy.iter().zip(&uy).map(|(s, m)| s - m * m).collect();
    let cxy = (0..ux.len()).map(|k| uxy[k] - ux[k] * uy[k]).collect();
    Ok(LocalStats {
        ux,
        uy,
        vx,
        vy,
        cxy,
        c1: (0.01 * l).powi(2),
        c2: (0.03 * l).powi(2),
    })
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// `K1 = 0.01`, `K2 = 0.03` and dynamic range equal to the ground-truth
/// range (1 for a constant ground truth). Local statistics are population
/// moments; the mean runs over windows fully inside the image.
pub fn ssim(rec: &RealImage, gt: &RealImage) -> Result<f64> {
    let s = local_stats(rec, gt)?;
    let total: f64 = (0..s.ux.len())
        .map(|k| {
            let (mx, my) = (s.ux[k], s.uy[k]);
            ((2.0 * mx * my + s.c1) * (2.0 * s.cxy[k] + s.c2)) / ((mx * mx + my * my + s.c1) * (s.vx[k] + s.vy[k] + s.c2))
        })
        .sum();
    Ok(total / s.ux.len() as f64)
}

/// Mean of the contrast-structure factor alone (SSIM without luminance).
pub fn ssim_contrast_structure(rec: &RealImage, gt: &RealImage) -> Result<f64> {
    let s = local_stats(rec, gt)?;
    let total: f64 = (0..s.ux.len())
        .map(|k| (2.0 * s.cxy[k] + s.c2) / (s.vx[k] + s.vy[k] + s.c2))
        .sum();
    Ok(total / s.ux.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub rpsnr: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub fn score_all(rec: &RealImage, gt: &RealImage) -> Result<Scores> {
    Ok(Scores {
        rpsnr: rpsnr(rec, gt)?,
        psnr: psnr(rec, gt)?,
        ssim: ssim(rec, gt)?,
    })
}
