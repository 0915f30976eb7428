//! Simulation and reconstruction toolkit for quantitative differential phase
//! contrast (qDPC) microscopy.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`], [`fft`], [`spectral`]: coordinate grids, image buffers, 2D DFTs
//!   and the periodic gradient multipliers every solver shares.
//! - [`pupils`], [`transfer`]: objective/illumination pupils, the phase transfer
//!   function (PTF) and its point spread function, plus the edge-response probe.
//! - [`forward`]: phase targets, defocus-layer background, noisy DPC stacks.
//! - [`solvers`]: L2, isotropic, TV, Retinex-TV and pupil-driven reconstruction.
//! - [`sensor`]: out-of-band noise estimation and automatic penalties.
//! - [`metrics`]: rpSNR, PSNR and SSIM.
//! - [`learn`]: illumination-pupil learning by edge-response ascent.
//! - [`npy`], [`preview`]: array files and 16-bit PNG previews.
//! - [`scenario`]: the desk-scale defocus-background comparison study.

pub mod error;
pub mod fft;
pub mod forward;
pub mod grid;
pub mod learn;
pub mod metrics;
pub mod npy;
pub mod preview;
pub mod pupils;
pub mod scenario;
pub mod sensor;
pub mod solvers;
pub mod spectral;
pub mod transfer;

pub use error::{Error, Result};
pub use grid::{ComplexImage, FrequencyGrid, RealImage};
pub use num_complex::Complex64;
