//! Desk-scale benchmark scenario: a wedding-cake phase seen through
//! half-circle DPC with a defocused debris layer and Gaussian noise.

use crate::error::Result;
use crate::sensor::auto_params_for;
use crate::forward::{
    phase_target, random_layer, simulate_stack, AcquisitionMeta, BackgroundSpec, DpcStack, PhaseImage, TargetKind,
    TargetParams,
};
use crate::grid::FrequencyGrid;
use crate::pupils::DEFAULT_AXES;
use crate::solvers::{solve_iso, solve_l2, solve_pd, solve_retinex_tv, solve_tv, PdParams, TvParams};
use crate::transfer::half_circle_ptfs;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub size: usize,
    pub meta: AcquisitionMeta,
    pub target: TargetKind,
    pub z_um: f64,
    pub mismatch: f64,
    pub layer_bumps: usize,
    pub layer_phase: f64,
    pub layer_seed: u64,
    pub snr_db: Option<f64>,
    /// Background on or off.
    pub background: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            size: 256,
            meta: AcquisitionMeta::desk_default(),
            target: TargetKind::WeddingCake,
            z_um: -50.0,
            mismatch: 0.1,
            layer_bumps: 24,
            layer_phase: 1.5,
            layer_seed: 7,
            snr_db: Some(5.0),
            background: true,
        }
    }
}

pub struct Scenario {
    pub ground_truth: PhaseImage,
    pub stack: DpcStack,
    pub background: Option<BackgroundSpec>,
}

impl ScenarioConfig {
    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.size, self.size, self.meta.pixel_size_um, self.meta.magnification)
    }

    /// Builds the scenario; `seed` drives the noise only.
    pub fn build(&self, seed: u64) -> Result<Scenario> {
        let grid = self.grid()?;
        let m = self.meta;
        let tfs = half_circle_ptfs(grid, m.na, m.na_illum, m.lambda_um, &DEFAULT_AXES)?;
        let gt = phase_target(&self.target, grid, &TargetParams::for_grid(&grid))?;
        let background = self.background.then(|| BackgroundSpec {
            layer_phase: random_layer(grid, self.layer_seed, self.layer_bumps, self.layer_phase),
            z_um: self.z_um,
            mismatch: self.mismatch,
        });
        let stack = simulate_stack(&gt, &tfs, m, background.as_ref(), self.snr_db, seed)?;
        Ok(Scenario {
            ground_truth: gt,
            stack,
            background,
        })
    }
}

/// A reconstruction method with its settings.
#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    L2 { alpha: f64 },
    Iso { alpha: f64, beta: f64, sigma_px: f64 },
    Tv(TvParams),
    RetinexTv(TvParams),
    Pd(PdParams),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::L2 { .. } => "l2",
            Method::Iso { .. } => "iso",
            Method::Tv(_) => "tv",
            Method::RetinexTv(_) => "retinex-tv",
            Method::Pd(_) => "pd",
        }
    }

    pub fn run(&self, stack: &DpcStack) -> Result<PhaseImage> {
        match self {
            Method::L2 { alpha } => solve_l2(stack, *alpha),
            Method::Iso { alpha, beta, sigma_px } => solve_iso(stack, *alpha, *beta, *sigma_px),
            Method::Tv(p) => solve_tv(stack, p),
            Method::RetinexTv(p) => solve_retinex_tv(stack, p),
            Method::Pd(p) => solve_pd(stack, p).map(|r| r.phase),
        }
    }
}

/// Gaussian width of the Iso baseline's penalty kernel, in pixels.
pub const ISO_SIGMA_PX: f64 = 2.0;

/// L2 regularization strengths of the comparison sweep.
pub const L2_SWEEP: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// The comparison roster: the L2 sweep, then Iso, TV, Retinex TV and pd, the
/// last four with weights from the noise sensor (`alpha = sigma/2`,
/// `beta = sigma/10`). Labels are unique.
pub fn comparison_methods(stack: &DpcStack, iters: usize) -> Result<Vec<(String, Method)>> {
    let (alpha, beta) = auto_params_for(stack)?;
    let mut out: Vec<(String, Method)> = L2_SWEEP
        .iter()
        .map(|&a| (format!("l2(alpha={a:e})"), Method::L2 { alpha: a }))
        .collect();
    out.push((
        "iso".into(),
        Method::Iso {
            alpha,
            beta,
            sigma_px: ISO_SIGMA_PX,
        },
    ));
    out.push(("tv".into(), Method::Tv(TvParams::new(alpha, iters))));
    out.push(("retinex-tv".into(), Method::RetinexTv(TvParams::new(alpha, iters))));
    out.push((
        "pd".into(),
        Method::Pd(PdParams {
            max_iters: iters,
            ..PdParams::with_weights(alpha, beta)
        }),
    ));
    Ok(out)
}

/// Full model and the three single-term ablations, sharing sensor weights.
pub fn ablation_methods(stack: &DpcStack, iters: usize) -> Result<Vec<(String, Method)>> {
    let (alpha, beta) = auto_params_for(stack)?;
    let base = PdParams {
        max_iters: iters,
        ..PdParams::with_weights(alpha, beta)
    };
    Ok(vec![
        ("full".into(), Method::Pd(base.clone())),
        (
            "no-pupil-fidelity".into(),
            Method::Pd(PdParams {
                fidelity_pupil_driven: false,
                ..base.clone()
            }),
        ),
        (
            "no-pupil-penalty".into(),
            Method::Pd(PdParams {
                penalty_pupil: false,
                ..base.clone()
            }),
        ),
        (
            "no-gradient-penalty".into(),
            Method::Pd(PdParams {
                penalty_grad: false,
                ..base
            }),
        ),
    ])
}
