//! Phase targets, defocus-layer background and the linear DPC forward model.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fft::{fft_real, ifft_real, Fft2};
use crate::grid::{FrequencyGrid, RealImage};
use crate::npy;
use crate::transfer::TransferFunction;

/// Phase map in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseImage(RealImage);

impl PhaseImage {
    pub fn new(img: RealImage) -> Self {
        Self(img)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        self.0.grid()
    }

    pub fn image(&self) -> &RealImage {
        &self.0
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn into_image(self) -> RealImage {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TargetKind {
    WeddingCake,
    FocalStar,
    Custom(PathBuf),
}

impl FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wedding-cake" | "wedding_cake" => Ok(Self::WeddingCake),
            "focal-star" | "focal_star" => Ok(Self::FocalStar),
            other => match other.strip_prefix("custom:") {
                Some(path) if !path.is_empty() => Ok(Self::Custom(PathBuf::from(path))),
                _ => Err(Error::InvalidParameter(format!(
                    "unknown target kind {other:?} (expected wedding-cake, focal-star or custom:<file.npy>)"
                ))),
            },
        }
    }
}

/// Geometry of the synthetic targets, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetParams {
    /// Disc radii of the wedding cake, innermost first.
    pub cake_radii_px: [f64; 3],
    pub spokes: usize,
    pub star_amplitude: f64,
    pub star_radius_px: f64,
}

impl TargetParams {
    /// Radii scaled to the grid: 1/8, 1/4 and 3/8 of the shorter side.
    pub fn for_grid(grid: &FrequencyGrid) -> Self {
        let n = grid.width().min(grid.height()) as f64;
        Self {
            cake_radii_px: [n / 8.0, n / 4.0, 3.0 * n / 8.0],
            spokes: 16,
            star_amplitude: 1.0,
            star_radius_px: 0.4 * n,
        }
    }
}

pub fn phase_target(kind: &TargetKind, grid: FrequencyGrid, params: &TargetParams) -> Result<PhaseImage> {
    let (cx, cy) = (grid.width() as f64 / 2.0, grid.height() as f64 / 2.0);
    let half = cx.min(cy);
    match kind {
        TargetKind::WeddingCake => {
            let [r1, r2, r3] = params.cake_radii_px;
            if !(0.0 < r1 && r1 < r2 && r2 < r3 && r3 <= half) {
                return Err(Error::InvalidParameter(format!(
                    "wedding-cake radii {:?} must increase and fit within {half} px",
                    params.cake_radii_px
                )));
            }
            Ok(PhaseImage(RealImage::from_fn(grid, |i, j| {
                let r = (i as f64 - cy).hypot(j as f64 - cx);
                if r < r1 {
                    1.0
                } else if r < r2 {
                    2.0 / 3.0
                } else if r < r3 {
                    1.0 / 3.0
                } else {
                    0.0
                }
            })))
        }
        TargetKind::FocalStar => {
            if params.spokes == 0 || params.star_radius_px <= 0.0 || params.star_radius_px > half {
                return Err(Error::InvalidParameter("focal star needs spokes > 0 and a radius inside the grid".into()));
            }
            let n = params.spokes as f64;
            Ok(PhaseImage(RealImage::from_fn(grid, |i, j| {
                let (dy, dx) = (i as f64 - cy, j as f64 - cx);
                if dx.hypot(dy) < params.star_radius_px && (n * dy.atan2(dx)).sin() > 0.0 {
                    params.star_amplitude
                } else {
                    0.0
                }
            })))
        }
        TargetKind::Custom(path) => Ok(PhaseImage(npy::load_real(path, grid)?)),
    }
}

/// Seeded debris layer: `count` smooth Gaussian phase bumps of random sign,
/// width and position, peak magnitude up to `max_phase`, wrapping periodically.
pub fn random_layer(grid: FrequencyGrid, seed: u64, count: usize, max_phase: f64) -> PhaseImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (grid.width() as f64, grid.height() as f64);
    let n = w.min(h);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            let amp = rng.random_range(0.3..1.0) * max_phase;
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (
                rng.random_range(0.0..w),
                rng.random_range(0.0..h),
                rng.random_range(0.03..0.10) * n,
                sign * amp,
            )
        })
        .collect();
    PhaseImage(RealImage::from_fn(grid, |i, j| {
        bumps
            .iter()
            .map(|&(cx, cy, r, amp)| {
                let dx = wrap(j as f64 - cx, w);
                let dy = wrap(i as f64 - cy, h);
                amp * (-(dx * dx + dy * dy) / (2.0 * r * r)).exp()
            })
            .sum()
    }))
}

fn wrap(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

/// Intensity of the unit-amplitude field `exp(i phi)` after angular-spectrum
/// propagation over `z_um`, normalized to mean 1. Evanescent bins are dropped.
pub fn propagate(layer: &PhaseImage, z_um: f64, lambda_um: f64) -> RealImage {
    propagate_tilted(layer, z_um, lambda_um, (0, 0))
}

/// As [`propagate`], for a plane-wave illumination whose transverse frequency
/// is the grid bin `(kx, ky)`.
pub fn propagate_tilted(layer: &PhaseImage, z_um: f64, lambda_um: f64, tilt: (i64, i64)) -> RealImage {
    let g = *layer.grid();
    let (w, h) = (g.width(), g.height());
    let k2 = (2.0 * PI / lambda_um).powi(2);
    let mut buf: Vec<Complex64> = layer
        .data()
        .iter()
        .enumerate()
        .map(|(idx, &phi)| {
            let (i, j) = (idx / w, idx % w);
            let ramp = 2.0 * PI * (tilt.0 as f64 * j as f64 / w as f64 + tilt.1 as f64 * i as f64 / h as f64);
            Complex64::from_polar(1.0, phi + ramp)
        })
        .collect();
    let plan = Fft2::for_grid(&g);
    plan.forward(&mut buf);
    for (idx, v) in buf.iter_mut().enumerate() {
        let f = g.radius(idx / w, idx % w);
        let kz2 = k2 - (2.0 * PI * f).powi(2);
        *v = if kz2 > 0.0 {
            *v * Complex64::from_polar(1.0, z_um * kz2.sqrt())
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    plan.inverse(&mut buf);
    let intensity: Vec<f64> = buf.iter().map(|v| v.norm_sqr()).collect();
    let mean = intensity.iter().sum::<f64>() / intensity.len() as f64;
    let scale = if mean > 0.0 { 1.0 / mean } else { 0.0 };
    RealImage::from_raw(g, intensity.into_iter().map(|v| v * scale).collect())
}

/// Keeps the bins with `|f| <= cutoff`.
fn low_pass(img: &RealImage, cutoff: f64) -> RealImage {
    let g = *img.grid();
    let mut spec = fft_real(&g, img.data());
    for (k, v) in spec.iter_mut().enumerate() {
        if g.radius(k / g.width(), k % g.width()) > cutoff {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    RealImage::from_raw(g, ifft_real(&g, spec))
}

/// Defocused debris layer whose shadows corrupt the DPC pair.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundSpec {
    pub layer_phase: PhaseImage,
    pub z_um: f64,
    /// Left/right intensity imbalance, in `[0, 0.2]`.
    pub mismatch: f64,
}

impl BackgroundSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.2).contains(&self.mismatch) {
            return Err(Error::InvalidParameter(format!("mismatch {} outside [0, 0.2]", self.mismatch)));
        }
        if !self.z_um.is_finite() {
            return Err(Error::InvalidParameter("defocus distance must be finite".into()));
        }
        Ok(())
    }
}

/// Optical and camera parameters of an acquisition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcquisitionMeta {
    pub na: f64,
    pub na_illum: f64,
    pub lambda_um: f64,
    pub pixel_size_um: f64,
    pub magnification: f64,
}

impl AcquisitionMeta {
    /// NA 0.25 (matched illumination), 532 nm, 4 um pixels at 10x.
    pub fn desk_default() -> Self {
        Self {
            na: 0.25,
            na_illum: 0.25,
            lambda_um: 0.532,
            pixel_size_um: 4.0,
            magnification: 10.0,
        }
    }

    /// 2 NA / lambda.
    pub fn band_limit(&self) -> f64 {
        2.0 * self.na / self.lambda_um
    }
}

/// N DPC images with the transfer functions that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct DpcStack {
    pub images: Vec<RealImage>,
    pub tfs: Vec<TransferFunction>,
    pub meta: AcquisitionMeta,
    pub seed: Option<u64>,
}

impl DpcStack {
    pub fn new(images: Vec<RealImage>, tfs: Vec<TransferFunction>, meta: AcquisitionMeta) -> Result<Self> {
        if images.is_empty() || images.len() != tfs.len() {
            return Err(Error::InvalidParameter(format!(
                "stack needs N >= 1 images with one PTF each, got {} images and {} PTFs",
                images.len(),
                tfs.len()
            )));
        }
        let g = *images[0].grid();
        for (img, tf) in images.iter().zip(&tfs) {
            img.grid().check_same(&g, "stack image")?;
            tf.grid().check_same(&g, "stack PTF")?;
        }
        let images = images
            .into_iter()
            .map(|img| RealImage::new(*img.grid(), img.into_data()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            images,
            tfs,
            meta,
            seed: None,
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        self.images[0].grid()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Same stack with every image multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            images: self.images.iter().map(|img| img.scaled(c)).collect(),
            ..self.clone()
        }
    }

    /// Same stack with `offset` added to every pixel of every image.
    pub fn offset(&self, offset: f64) -> Self {
        Self {
            images: self.images.iter().map(|img| img.map(|v| v + offset)).collect(),
            ..self.clone()
        }
    }
}

/// Noise-free linear DPC images `F^-1{H_n F{phi}}`.
pub fn ideal_images(phase: &PhaseImage, tfs: &[TransferFunction]) -> Result<Vec<RealImage>> {
    let g = *phase.grid();
    let spec = fft_real(&g, phase.data());
    tfs.iter()
        .map(|tf| {
            tf.grid().check_same(&g, "simulate")?;
            let prod = spec.iter().zip(tf.values()).map(|(s, h)| s * h).collect();
            Ok(RealImage::from_raw(g, ifft_real(&g, prod)))
        })
        .collect()
}

/// The part of `phase` the transfer functions can see: every bin where some
/// `|H_n|` exceeds `1e-9 * max |H|` (FFT round-off sits far below), plus DC.
pub fn observable_phase(phase: &PhaseImage, tfs: &[TransferFunction]) -> Result<PhaseImage> {
    let g = *phase.grid();
    let mut spec = fft_real(&g, phase.data());
    for tf in tfs {
        tf.grid().check_same(&g, "observable phase")?;
    }
    let floor = 1e-9 * tfs.iter().flat_map(|tf| tf.values()).map(|h| h.norm()).fold(0.0, f64::max);
    for (k, v) in spec.iter_mut().enumerate() {
        if k != 0 && tfs.iter().all(|tf| tf.values()[k].norm() <= floor) {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    Ok(PhaseImage::new(RealImage::from_raw(g, ifft_real(&g, spec))))
}

/// Grid bin nearest to the centroid of a half-disk source of cutoff
/// `na_illum / lambda` on the `theta0` side.
pub fn mean_tilt(grid: &FrequencyGrid, na_illum: f64, lambda_um: f64, theta0: f64) -> (i64, i64) {
    let rho = 4.0 / (3.0 * PI) * na_illum / lambda_um;
    (
        (rho * theta0.cos() / grid.df_x()).round() as i64,
        (rho * theta0.sin() / grid.df_y()).round() as i64,
    )
}

/// DPC-domain residual of the defocus layer for one illumination axis.
///
/// Each lobe sees the layer's shadow under its own mean tilt, so the two
/// shadows are laterally displaced; the imbalance `mismatch` scales the left
/// image by `1 + mismatch/2` and the right by `1 - mismatch/2`. Both shadows
/// are imaged through the objective, so they are band-limited to `2 NA / lambda`.
pub fn background_residual(bg: &BackgroundSpec, meta: &AcquisitionMeta, theta0: f64) -> Result<RealImage> {
    bg.validate()?;
    let g = *bg.layer_phase.grid();
    let (tx, ty) = mean_tilt(&g, meta.na_illum, meta.lambda_um, theta0);
    let band = meta.band_limit();
    let left = low_pass(&propagate_tilted(&bg.layer_phase, bg.z_um, meta.lambda_um, (-tx, -ty)), band);
    let right = low_pass(&propagate_tilted(&bg.layer_phase, bg.z_um, meta.lambda_um, (tx, ty)), band);
    let (gl, gr) = (1.0 + bg.mismatch / 2.0, 1.0 - bg.mismatch / 2.0);
    left.zip_map(&right, |l, r| {
        let (l, r) = (gl * l, gr * r);
        let s = l + r;
        if s > 0.0 {
            (l - r) / s
        } else {
            0.0
        }
    })
}

/// Simulates `S_n = F^-1{H_n F{phi}} + b_n + noise`.
///
/// Noise is white Gaussian with per-image variance chosen so that
/// `10 log10(P_signal / P_noise) = snr_db`, `P_signal` being the mean power of
/// the ideal (background-free) image. Deterministic in `seed`.
pub fn simulate_stack(
    phase: &PhaseImage,
    tfs: &[TransferFunction],
    meta: AcquisitionMeta,
    background: Option<&BackgroundSpec>,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<DpcStack> {
    let ideal = ideal_images(phase, tfs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(ideal.len());
    for (img, tf) in ideal.iter().zip(tfs) {
        let mut data = img.data().to_vec();
        if let Some(bg) = background {
            bg.layer_phase.grid().check_same(img.grid(), "background layer")?;
            let b = background_residual(bg, &meta, tf.theta0())?;
            data.iter_mut().zip(b.data()).for_each(|(s, b)| *s += b);
        }
        if let Some(snr) = snr_db {
            let power = img.data().iter().map(|v| v * v).sum::<f64>() / data.len() as f64;
            if !(power > 0.0) {
                return Err(Error::InvalidParameter("an SNR cannot be set for a zero-power signal".into()));
            }
            let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
            for s in data.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *s += sigma * e;
            }
        }
        images.push(RealImage::new(*img.grid(), data)?);
    }
    let mut stack = DpcStack::new(images, tfs.to_vec(), meta)?;
    stack.seed = Some(seed);
    Ok(stack)
}

/// `S = (I_l - I_r) / (I_l + I_r)`.
pub fn dpc_from_raw(i_left: &RealImage, i_right: &RealImage) -> Result<RealImage> {
    i_left.grid().check_same(i_right.grid(), "dpc_from_raw")?;
    let w = i_left.grid().width();
    for (idx, (l, r)) in i_left.data().iter().zip(i_right.data()).enumerate() {
        if !(l + r > 0.0) {
            return Err(Error::NonPositiveSum {
                row: idx / w,
                col: idx % w,
            });
        }
    }
    i_left.zip_map(i_right, |l, r| (l - r) / (l + r))
}
