//! Illumination-pupil learning by gradient ascent on an edge-response cost.
//!
//! For a signed pupil `Q` the cost is
//! `J(Q) = sum_f K(f) C(f)^4` with `C = P * (P (Qn - Qn(-f)))`,
//! `Qn = Q / max|Q|` and `K = sum_theta w_theta E_theta^4`. `E_theta` is the
//! spectrum of a step edge with normal `u_theta`: `1 / max(|f . u|, fx_floor)`
//! on the line through the origin along `u` (bins within half a bin of it),
//! zero elsewhere. Frequencies are in bins.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fft::{fft_real, ifft_real};
use crate::grid::{FrequencyGrid, RealImage};
use crate::pupils::{PupilMask, SourcePattern};
use crate::spectral::spectral_gradient_ops;

#[derive(Clone, Debug, PartialEq)]
pub struct LearnConfig {
    pub pupil: PupilMask,
    /// `(edge normal angle, weight)` pairs; weights sum to 1.
    pub edges: Vec<(f64, f64)>,
    pub iters: usize,
    /// Initial ascent step, in units of `max|Q|`.
    pub step: f64,
    pub seed: u64,
    /// Smallest projected frequency, in bins, used in the `1/f` weight.
    pub fx_floor: f64,
    /// Iterations at which `Q` is recorded.
    pub snapshots: Vec<usize>,
}

impl LearnConfig {
    pub fn new(pupil: PupilMask, edges: Vec<(f64, f64)>) -> Self {
        Self {
            pupil,
            edges,
            iters: 25,
            step: 0.5,
            seed: 0,
            fx_floor: 1.0,
            snapshots: vec![1, 5, 10, 25],
        }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        self.pupil.grid()
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::InvalidParameter("learning needs at least one iteration".into()));
        }
        if !(self.step > 0.0) {
            return Err(Error::InvalidParameter(format!("step must be > 0, got {}", self.step)));
        }
        if !(self.fx_floor >= 1.0) {
            return Err(Error::InvalidParameter(format!("fx_floor must be >= 1 bin, got {}", self.fx_floor)));
        }
        if self.edges.is_empty() || self.edges.iter().any(|&(a, w)| !a.is_finite() || !(w >= 0.0)) {
            return Err(Error::InvalidParameter("edge list needs finite angles with nonnegative weights".into()));
        }
        let total: f64 = self.edges.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("edge weights sum to {total}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnTrace {
    /// Cost of the initial pupil followed by one entry per iteration.
    pub costs: Vec<f64>,
    pub snapshots: Vec<(usize, RealImage)>,
    /// Final signed pupil, `max|Q| = 1`.
    pub final_q: RealImage,
    /// Fraction of the odd part's energy at `0.8..=1.0` of the pupil cutoff.
    pub annulus_energy: f64,
    pub reseeded: bool,
}

/// Precomputed weights and pupil spectrum shared by cost and gradient.
struct CostModel {
    grid: FrequencyGrid,
    pupil: Vec<f64>,
    pupil_hat: Vec<Complex64>,
    weight: Vec<f64>,
}

impl CostModel {
    fn new(cfg: &LearnConfig) -> Self {
        let grid = *cfg.grid();
        let w = grid.width();
        let weight = (0..grid.len())
            .map(|k| {
                let kx = grid.signed_col(k % w) as f64;
                let ky = grid.signed_row(k / w) as f64;
                cfg.edges
                    .iter()
                    .map(|&(theta, wt)| {
                        let across = kx * theta.sin() - ky * theta.cos();
                        if across.abs() > 0.5 {
                            return 0.0;
                        }
                        let along = (kx * theta.cos() + ky * theta.sin()).abs().max(cfg.fx_floor);
                        wt * along.powi(-4)
                    })
                    .sum()
            })
            .collect();
        let pupil = cfg.pupil.data().to_vec();
        Self {
            grid,
            pupil_hat: fft_real(&grid, &pupil),
            pupil,
            weight,
        }
    }

    fn odd(&self, q: &[f64]) -> Vec<f64> {
        (0..q.len()).map(|k| q[k] - q[self.grid.negated(k)]).collect()
    }

    fn response(&self, qn: &[f64]) -> Vec<f64> {
        let odd = self.odd(qn);
        let masked: Vec<f64> = odd.iter().zip(&self.pupil).map(|(a, p)| a * p).collect();
        let spec = fft_real(&self.grid, &masked);
        ifft_real(&self.grid, spec.iter().zip(&self.pupil_hat).map(|(a, p)| a * p).collect())
    }

    /// Cost of an already normalized pupil.
    fn cost_normalized(&self, qn: &[f64]) -> (f64, Vec<f64>) {
        let c = self.response(qn);
        let j = c.iter().zip(&self.weight).map(|(c, k)| k * c.powi(4)).sum();
        (j, c)
    }

    /// `dJ/dQn` for a normalized pupil with response `c`.
    fn grad_normalized(&self, c: &[f64]) -> Vec<f64> {
        let g: Vec<f64> = c.iter().zip(&self.weight).map(|(c, k)| 4.0 * k * c.powi(3)).collect();
        // Adjoint of convolution with P is correlation with P.
        let spec = fft_real(&self.grid, &g);
        let corr = ifft_real(
            &self.grid,
            spec.iter().zip(&self.pupil_hat).map(|(a, p)| a * p.conj()).collect(),
        );
        let h: Vec<f64> = corr.iter().zip(&self.pupil).map(|(a, p)| a * p).collect();
        self.odd(&h)
    }
}

fn max_abs_index(q: &[f64]) -> (usize, f64) {
    q.iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) })
}

fn normalized(q: &[f64]) -> Option<Vec<f64>> {
    let (_, m) = max_abs_index(q);
    (m > 0.0).then(|| q.iter().map(|v| v / m).collect())
}

/// `J(Q)` with the `max|Q| = 1` normalization applied first.
pub fn edge_cost(q: &RealImage, cfg: &LearnConfig) -> Result<f64> {
    cfg.validate()?;
    q.grid().check_same(cfg.grid(), "edge_cost")?;
    let model = CostModel::new(cfg);
    Ok(match normalized(q.data()) {
        Some(qn) => model.cost_normalized(&qn).0,
        None => 0.0,
    })
}

/// `J(Q)` without normalization: homogeneous of degree 4 in `Q` and blind
/// to the even part of `Q`.
pub fn edge_cost_unnormalized(q: &RealImage, cfg: &LearnConfig) -> Result<f64> {
    cfg.validate()?;
    q.grid().check_same(cfg.grid(), "edge_cost")?;
    Ok(CostModel::new(cfg).cost_normalized(q.data()).0)
}

/// Analytic gradient of [`edge_cost`] with respect to the unnormalized `Q`.
pub fn edge_cost_gradient(q: &RealImage, cfg: &LearnConfig) -> Result<RealImage> {
    cfg.validate()?;
    q.grid().check_same(cfg.grid(), "edge_cost_gradient")?;
    let model = CostModel::new(cfg);
    Ok(RealImage::from_raw(*q.grid(), gradient(&model, q.data())))
}

fn gradient(model: &CostModel, q: &[f64]) -> Vec<f64> {
    let (kmax, m) = max_abs_index(q);
    if m == 0.0 {
        return vec![0.0; q.len()];
    }
    let qn: Vec<f64> = q.iter().map(|v| v / m).collect();
    let (j0, c) = model.cost_normalized(&qn);
    let mut g = model.grad_normalized(&c);
    // J is homogeneous of degree 4 in Qn, so sum_j G_j Qn_j = 4 J.
    g[kmax] -= 4.0 * j0 * q[kmax].signum();
    g.iter_mut().for_each(|v| *v /= m);
    g
}

/// Fraction of `sum odd(Q)^2` at radii `0.8..=1.0` times the pupil cutoff.
pub fn annulus_energy(q: &RealImage, pupil: &PupilMask) -> f64 {
    let g = *q.grid();
    let w = g.width();
    let odd: Vec<f64> = (0..g.len()).map(|k| q.data()[k] - q.data()[g.negated(k)]).collect();
    let cutoff = pupil.cutoff();
    let (mut ring, mut total) = (0.0, 0.0);
    for (k, v) in odd.iter().enumerate() {
        let e = v * v * pupil.data()[k];
        total += e;
        let r = g.radius(k / w, k % w);
        if r >= 0.8 * cutoff && r <= cutoff {
            ring += e;
        }
    }
    if total > 0.0 {
        ring / total
    } else {
        0.0
    }
}

fn random_pupil(model: &CostModel, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model
        .pupil
        .iter()
        .map(|&p| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v * p
        })
        .collect()
}

/// Gradient ascent from seeded Gaussian noise with backtracking (at most 20
/// halvings per iteration) and `max|Q| = 1` renormalization after each step.
///
/// Returns the learned DPC lobe (positive part of the odd part of `Q`) and
/// the trace.
pub fn learn_pupil(cfg: &LearnConfig) -> Result<(SourcePattern, LearnTrace)> {
    cfg.validate()?;
    let model = CostModel::new(cfg);
    let grid = *cfg.grid();
    let mut reseeded = false;
    let mut q = normalized(&random_pupil(&model, cfg.seed)).unwrap_or_default();
    let mut grad = gradient(&model, &q);
    if q.is_empty() || grad.iter().all(|&v| v == 0.0) {
        reseeded = true;
        q = normalized(&random_pupil(&model, cfg.seed.wrapping_add(1))).unwrap_or_default();
        grad = gradient(&model, &q);
        if q.is_empty() || grad.iter().all(|&v| v == 0.0) {
            return Err(Error::Learning("cost gradient vanishes at the initial pupil".into()));
        }
    }
    let mut j = model.cost_normalized(&q).0;
    let mut costs = vec![j];
    let mut snapshots = Vec::new();
    for it in 1..=cfg.iters {
        let gmax = grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gmax > 0.0 {
            let mut step = cfg.step;
            for _ in 0..=20 {
                let trial: Vec<f64> = q
                    .iter()
                    .zip(&grad)
                    .zip(&model.pupil)
                    .map(|((qk, gk), p)| (qk + step * gk / gmax) * p)
                    .collect();
                if let Some(tn) = normalized(&trial) {
                    let jt = model.cost_normalized(&tn).0;
                    if jt >= j {
                        q = tn;
                        j = jt;
                        break;
                    }
                }
                step *= 0.5;
            }
        }
        if !j.is_finite() {
            return Err(Error::Learning(format!("cost became non-finite at iteration {it}")));
        }
        costs.push(j);
        if cfg.snapshots.contains(&it) {
            snapshots.push((it, RealImage::from_raw(grid, q.clone())));
        }
        grad = gradient(&model, &q);
    }
    let final_q = RealImage::from_raw(grid, q);
    let annulus = annulus_energy(&final_q, &cfg.pupil);
    let source = lobe_from_pupil(&final_q, &cfg.pupil)?;
    Ok((
        source,
        LearnTrace {
            costs,
            snapshots,
            final_q,
            annulus_energy: annulus,
            reseeded,
        },
    ))
}

/// Positive part of the odd part of `q` inside the pupil, scaled to peak 1,
/// with `theta0` taken from its first moment.
pub fn lobe_from_pupil(q: &RealImage, pupil: &PupilMask) -> Result<SourcePattern> {
    let g = *q.grid();
    let w = g.width();
    let lobe: Vec<f64> = (0..g.len())
        .map(|k| (0.5 * (q.data()[k] - q.data()[g.negated(k)]) * pupil.data()[k]).max(0.0))
        .collect();
    let peak = lobe.iter().cloned().fold(0.0, f64::max);
    let (mut mx, mut my) = (0.0, 0.0);
    for (k, v) in lobe.iter().enumerate() {
        mx += v * g.fx(k % w);
        my += v * g.fy(k / w);
    }
    let data = if peak > 0.0 { lobe.iter().map(|v| v / peak).collect() } else { lobe };
    SourcePattern::new(g, data, my.atan2(mx), pupil.na(), pupil.lambda_um())
}

/// Edge normals and weights from an 8-bin histogram of gradient orientation
/// (modulo pi), weighted by gradient magnitude.
pub fn edge_angles_from_image(img: &RealImage) -> Result<Vec<(f64, f64)>> {
    const BINS: usize = 8;
    let ops = spectral_gradient_ops(img.grid());
    let (gx, gy) = ops.gradient(img);
    let mut hist = [0.0; BINS];
    for (x, y) in gx.data().iter().zip(gy.data()) {
        let mag = x.hypot(*y);
        if mag > 0.0 {
            let angle = y.atan2(*x).rem_euclid(std::f64::consts::PI);
            let bin = ((angle / std::f64::consts::PI * BINS as f64).round() as usize) % BINS;
            hist[bin] += mag;
        }
    }
    let total: f64 = hist.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Learning("guide image has no edges".into()));
    }
    Ok(hist
        .iter()
        .enumerate()
        .filter(|(_, &h)| h > 0.0)
        .map(|(b, h)| (b as f64 * std::f64::consts::PI / BINS as f64, h / total))
        .collect())
}
