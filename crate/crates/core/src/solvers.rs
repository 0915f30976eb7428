//! Phase reconstruction: closed-form L2 and Gaussian-penalty solvers, and
//! split-Bregman TV, Retinex TV and pupil-driven solvers.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft_real, ifft_real};
use crate::forward::{DpcStack, PhaseImage};
use crate::grid::{FrequencyGrid, RealImage};
use crate::spectral::{spectral_gradient_ops, SpectralOperators};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Stabilizer added to the split-Bregman denominator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Eta {
    /// Fraction of the largest value of the other denominator terms.
    Relative(f64),
    Absolute(f64),
}

impl Default for Eta {
    fn default() -> Self {
        Eta::Relative(1e-8)
    }
}

impl Eta {
    fn resolve(self, den: &[f64]) -> f64 {
        match self {
            Eta::Relative(r) => r * den.iter().cloned().fold(0.0, f64::max),
            Eta::Absolute(a) => a,
        }
    }

    fn validate(self) -> Result<()> {
        let v = match self {
            Eta::Relative(v) | Eta::Absolute(v) => v,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be finite and >= 0, got {v}")));
        }
        Ok(())
    }
}

/// `sign(v) max(|v| - t exp(omega (t - |v|)), 0)`.
pub fn rst_shrink_scalar(v: f64, t: f64, omega: f64) -> f64 {
    let m = v.abs();
    let out = m - t * (omega * (t - m)).exp();
    if out > 0.0 {
        out.copysign(v)
    } else {
        0.0
    }
}

/// Plain soft threshold.
pub fn soft_shrink_scalar(v: f64, t: f64) -> f64 {
    let out = v.abs() - t;
    if out > 0.0 {
        out.copysign(v)
    } else {
        0.0
    }
}

/// Reweighted soft threshold. Anisotropic mode shrinks every pixel of every
/// component independently; isotropic mode shrinks the pointwise magnitude
/// across components and keeps the direction.
pub fn rst_shrink(v: &[RealImage], t: f64, omega: f64, isotropic: bool) -> Result<Vec<RealImage>> {
    if !(t >= 0.0) || !(omega > 0.0) {
        return Err(Error::InvalidParameter(format!("shrinkage needs t >= 0 and omega > 0, got t={t}, omega={omega}")));
    }
    let first = v.first().ok_or_else(|| Error::InvalidParameter("nothing to shrink".into()))?;
    let g = *first.grid();
    for img in v {
        img.grid().check_same(&g, "rst_shrink")?;
    }
    let mut comps: Vec<Vec<f64>> = v.iter().map(|img| img.data().to_vec()).collect();
    shrink_in_place(&mut comps, isotropic, |m| rst_shrink_scalar(m, t, omega));
    Ok(comps.into_iter().map(|c| RealImage::from_raw(g, c)).collect())
}

// `scalar` maps a nonnegative magnitude to its shrunk magnitude.
fn shrink_in_place(comps: &mut [Vec<f64>], isotropic: bool, scalar: impl Fn(f64) -> f64) {
    if isotropic {
        let len = comps[0].len();
        for k in 0..len {
            let mag = comps.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt();
            let ratio = if mag > 0.0 { scalar(mag) / mag } else { 0.0 };
            comps.iter_mut().for_each(|c| c[k] *= ratio);
        }
    } else {
        for c in comps.iter_mut() {
            c.iter_mut().for_each(|v| *v = scalar(v.abs()).copysign(*v));
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdParams {
    /// Pupil-edge penalty weight; `None` asks the noise sensor.
    pub alpha: Option<f64>,
    /// Gradient-edge penalty weight; `None` asks the noise sensor.
    pub beta: Option<f64>,
    pub omega: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub eta: Eta,
    pub max_iters: usize,
    /// Relative change of the phase below which iteration stops early.
    pub tol: f64,
    pub isotropic: bool,
    pub fidelity_pupil_driven: bool,
    pub penalty_pupil: bool,
    pub penalty_grad: bool,
}

impl Default for PdParams {
    fn default() -> Self {
        Self {
            alpha: None,
            beta: None,
            omega: 10.0,
            alpha0: 1.0,
            beta0: 1.0,
            eta: Eta::default(),
            max_iters: 50,
            tol: 1e-6,
            isotropic: false,
            fidelity_pupil_driven: true,
            penalty_pupil: true,
            penalty_grad: true,
        }
    }
}

impl PdParams {
    pub fn with_weights(alpha: f64, beta: f64) -> Self {
        Self {
            alpha: Some(alpha),
            beta: Some(beta),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
                }
            }
        }
        for (name, v) in [("omega", self.omega), ("alpha0", self.alpha0), ("beta0", self.beta0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        self.eta.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdResult {
    pub phase: PhaseImage,
    pub edge_maps: Vec<RealImage>,
    /// `(G_x, G_y)`.
    pub grad_map: (RealImage, RealImage),
    /// Cost of the starting point `phi = 0`, before any update.
    pub initial_cost: f64,
    /// Cost after each iteration.
    pub cost_trace: Vec<f64>,
    pub iterations_run: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Absolute stabilizer used in the phase update.
    pub eta: f64,
}

fn spectra(stack: &DpcStack) -> Vec<Vec<Complex64>> {
    let g = stack.grid();
    stack.images.iter().map(|img| fft_real(g, img.data())).collect()
}

fn finish(grid: &FrequencyGrid, spec: Vec<Complex64>) -> Result<PhaseImage> {
    let data = ifft_real(grid, spec);
    if let Some(k) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: k / grid.width(),
            col: k % grid.width(),
        });
    }
    Ok(PhaseImage::new(RealImage::from_raw(*grid, data)))
}

/// Tikhonov solution `sum conj(H) S / (sum |H|^2 + alpha)`.
pub fn solve_l2(stack: &DpcStack, alpha: f64) -> Result<PhaseImage> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    solve_quadratic(stack, |_| alpha)
}

/// L2 solution with an extra `beta |G(f)|^2` penalty, `G` the spectrum of a
/// unit-sum Gaussian of standard deviation `gaussian_sigma` pixels.
pub fn solve_iso(stack: &DpcStack, alpha: f64, beta: f64, gaussian_sigma: f64) -> Result<PhaseImage> {
    if !(alpha > 0.0) || !(beta >= 0.0) || !(gaussian_sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "iso needs alpha > 0, beta >= 0, sigma > 0; got {alpha}, {beta}, {gaussian_sigma}"
        )));
    }
    let g = *stack.grid();
    let (w, h) = (g.width() as f64, g.height() as f64);
    solve_quadratic(stack, |k| {
        let u = g.signed_col(k % g.width()) as f64 / w;
        let v = g.signed_row(k / g.width()) as f64 / h;
        let gk = (-2.0 * PI * PI * gaussian_sigma * gaussian_sigma * (u * u + v * v)).exp();
        alpha + beta * gk * gk
    })
}

fn solve_quadratic(stack: &DpcStack, penalty: impl Fn(usize) -> f64) -> Result<PhaseImage> {
    let g = *stack.grid();
    let specs = spectra(stack);
    let out = (0..g.len())
        .map(|k| {
            let mut num = ZERO;
            let mut den = penalty(k);
            for (tf, s) in stack.tfs.iter().zip(&specs) {
                let hk = tf.values()[k];
                num += hk.conj() * s[k];
                den += hk.norm_sqr();
            }
            num / den
        })
        .collect();
    finish(&g, out)
}

/// Which data term the split-Bregman skeleton uses.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Fidelity {
    /// `||S - H phi||^2`
    Plain,
    /// `||H S - H^2 phi||^2`
    PupilDriven,
    /// `||grad S - H grad phi||^2`
    Retinex,
}

/// Precomputed pieces of the closed-form phase update.
struct PhiOperator {
    grid: FrequencyGrid,
    ops: SpectralOperators,
    h: Vec<Vec<Complex64>>,
    /// Data part of the numerator.
    data_num: Vec<Complex64>,
    den: Vec<f64>,
    alpha0: Option<f64>,
    beta0: Option<f64>,
    eta: f64,
    pin_dc: bool,
}

impl PhiOperator {
    fn new(stack: &DpcStack, fidelity: Fidelity, alpha0: Option<f64>, beta0: Option<f64>, eta: Eta) -> Result<Self> {
        let grid = *stack.grid();
        let ops = spectral_gradient_ops(&grid);
        let specs = spectra(stack);
        let h: Vec<Vec<Complex64>> = stack.tfs.iter().map(|tf| tf.values().to_vec()).collect();
        let mut data_num = vec![ZERO; grid.len()];
        let mut den = vec![0.0; grid.len()];
        for k in 0..grid.len() {
            for (hn, s) in h.iter().zip(&specs) {
                let hk = hn[k];
                let p = hk.norm_sqr();
                let (num, d) = match fidelity {
                    Fidelity::Plain => (hk.conj() * s[k], p),
                    Fidelity::PupilDriven => (hk.conj() * p * s[k], p * p),
                    Fidelity::Retinex => (hk.conj() * ops.lap_mult[k] * s[k], p * ops.lap_mult[k]),
                };
                data_num[k] += num;
                den[k] += d + alpha0.map_or(0.0, |a| a * p);
            }
            den[k] += beta0.map_or(0.0, |b| b * ops.lap_mult[k]);
        }
        let eta = eta.resolve(&den);
        let pin_dc = fidelity == Fidelity::Retinex;
        for (k, d) in den.iter_mut().enumerate() {
            *d += eta;
            if !(*d > 0.0) && !(pin_dc && k == 0) {
                return Err(Error::InvalidParameter(format!(
                    "phase-update denominator vanishes at frequency bin ({}, {}); use a positive eta",
                    k / grid.width(),
                    k % grid.width()
                )));
            }
        }
        Ok(Self {
            grid,
            ops,
            h,
            data_num,
            den,
            alpha0,
            beta0,
            eta,
            pin_dc,
        })
    }

    /// `aux[n]` holds `Psi_n + b_n`, `grad_aux` holds `(G + d)` components.
    fn solve(&self, aux: Option<&[Vec<f64>]>, grad_aux: Option<(&[f64], &[f64])>) -> Vec<Complex64> {
        let mut num = self.data_num.clone();
        if let (Some(a0), Some(aux)) = (self.alpha0, aux) {
            for (hn, a) in self.h.iter().zip(aux) {
                let spec = fft_real(&self.grid, a);
                num.iter_mut()
                    .zip(hn.iter().zip(&spec))
                    .for_each(|(n, (hk, ak))| *n += a0 * hk.conj() * ak);
            }
        }
        if let (Some(b0), Some((gx, gy))) = (self.beta0, grad_aux) {
            let div = self.ops.divergence_spectrum(&self.grid, gx, gy);
            num.iter_mut().zip(&div).for_each(|(n, d)| *n += b0 * d);
        }
        let mut out: Vec<Complex64> = num.iter().zip(&self.den).map(|(n, d)| n / d).collect();
        if self.pin_dc {
            out[0] = ZERO;
        }
        out
    }
}

/// One closed-form phase update of the pupil-driven split-Bregman scheme.
///
/// `psi`, `b` hold one image per PTF; `g` and `d` are `(x, y)` pairs. Terms
/// switched off in `params` ignore their operands.
pub fn phi_update(
    stack: &DpcStack,
    psi: &[RealImage],
    b: &[RealImage],
    g: (&RealImage, &RealImage),
    d: (&RealImage, &RealImage),
    params: &PdParams,
) -> Result<PhaseImage> {
    params.validate()?;
    let grid = *stack.grid();
    if psi.len() != stack.len() || b.len() != stack.len() {
        return Err(Error::InvalidParameter("need one Psi and one b per DPC image".into()));
    }
    for img in psi.iter().chain(b).chain([g.0, g.1, d.0, d.1]) {
        img.grid().check_same(&grid, "phi_update operand")?;
    }
    let op = PhiOperator::new(
        stack,
        if params.fidelity_pupil_driven { Fidelity::PupilDriven } else { Fidelity::Plain },
        params.penalty_pupil.then_some(params.alpha0),
        params.penalty_grad.then_some(params.beta0),
        params.eta,
    )?;
    let aux: Vec<Vec<f64>> = psi.iter().zip(b).map(|(p, b)| add(p.data(), b.data())).collect();
    let gx = add(g.0.data(), d.0.data());
    let gy = add(g.1.data(), d.1.data());
    finish(&grid, op.solve(Some(&aux), Some((&gx, &gy))))
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b).powi(2)).sum();
    let norm: f64 = new.iter().map(|a| a * a).sum();
    if norm > 0.0 {
        (diff / norm).sqrt()
    } else if diff > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn check_finite(values: &[f64], iteration: usize, trace: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence {
            iteration,
            trace: trace.to_vec(),
        })
    }
}

/// Pupil-driven reconstruction. `alpha`/`beta` left unset are taken from
/// the noise sensor.
pub fn solve_pd(stack: &DpcStack, params: &PdParams) -> Result<PdResult> {
    params.validate()?;
    let (alpha, beta) = match (params.alpha, params.beta) {
        (Some(a), Some(b)) => (a, b),
        (a, b) => {
            let (sa, sb) = crate::sensor::auto_params_for(stack)?;
            (a.unwrap_or(sa), b.unwrap_or(sb))
        }
    };
    let grid = *stack.grid();
    let n = stack.len();
    let op = PhiOperator::new(
        stack,
        if params.fidelity_pupil_driven { Fidelity::PupilDriven } else { Fidelity::Plain },
        params.penalty_pupil.then_some(params.alpha0),
        params.penalty_grad.then_some(params.beta0),
        params.eta,
    )?;
    let specs = spectra(stack);
    let cost = CostModel {
        stack_specs: &specs,
        op: &op,
        pupil_driven: params.fidelity_pupil_driven,
        alpha: if params.penalty_pupil { alpha } else { 0.0 },
        beta: if params.penalty_grad { beta } else { 0.0 },
        omega: params.omega,
        isotropic: params.isotropic,
    };
    let t_psi = alpha / params.alpha0;
    let t_g = beta / params.beta0;
    let len = grid.len();

    let mut psi = vec![vec![0.0; len]; n];
    let mut b = vec![vec![0.0; len]; n];
    let mut gmap = [vec![0.0; len], vec![0.0; len]];
    let mut d = [vec![0.0; len], vec![0.0; len]];
    let mut phi = vec![0.0; len];
    let initial_cost = cost.eval(&vec![Complex64::new(0.0, 0.0); len], &psi, (&phi, &phi));
    let mut trace = Vec::with_capacity(params.max_iters);
    let mut iterations = 0;

    for t in 1..=params.max_iters {
        let aux: Vec<Vec<f64>> = psi.iter().zip(&b).map(|(p, b)| add(p, b)).collect();
        let gaux = (add(&gmap[0], &d[0]), add(&gmap[1], &d[1]));
        let phi_hat = op.solve(
            params.penalty_pupil.then_some(aux.as_slice()),
            params.penalty_grad.then_some((gaux.0.as_slice(), gaux.1.as_slice())),
        );
        let new_phi = ifft_real(&grid, phi_hat.clone());
        check_finite(&new_phi, t, &trace)?;

        let hphi: Vec<Vec<f64>> = op
            .h
            .iter()
            .map(|hn| ifft_real(&grid, phi_hat.iter().zip(hn).map(|(p, h)| p * h).collect()))
            .collect();
        let (gx, gy) = op.ops.gradient_from_spectrum(&grid, &phi_hat);

        if params.penalty_pupil {
            let mut v: Vec<Vec<f64>> = hphi
                .iter()
                .zip(&b)
                .map(|(h, b)| h.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect();
            shrink_in_place(&mut v, params.isotropic, |m| rst_shrink_scalar(m, t_psi, params.omega));
            for ((bn, pn), hn) in b.iter_mut().zip(&v).zip(&hphi) {
                bn.iter_mut().zip(pn.iter().zip(hn)).for_each(|(bk, (p, h))| *bk += p - h);
            }
            psi = v;
        }
        if params.penalty_grad {
            let mut v = vec![
                gx.iter().zip(&d[0]).map(|(x, y)| x - y).collect::<Vec<_>>(),
                gy.iter().zip(&d[1]).map(|(x, y)| x - y).collect(),
            ];
            shrink_in_place(&mut v, params.isotropic, |m| rst_shrink_scalar(m, t_g, params.omega));
            for (c, grad) in [&gx, &gy].into_iter().enumerate() {
                d[c].iter_mut()
                    .zip(v[c].iter().zip(grad))
                    .for_each(|(dk, (gk, dg))| *dk += gk - dg);
            }
            let [vx, vy]: [Vec<f64>; 2] = v.try_into().expect("two gradient components");
            gmap = [vx, vy];
        }

        let c = cost.eval(&phi_hat, &hphi, (&gx, &gy));
        trace.push(c);
        if !c.is_finite() {
            return Err(Error::Divergence { iteration: t, trace });
        }
        let change = rel_change(&new_phi, &phi);
        phi = new_phi;
        iterations = t;
        if t > 1 && change < params.tol {
            break;
        }
    }

    Ok(PdResult {
        phase: PhaseImage::new(RealImage::from_raw(grid, phi)),
        edge_maps: psi.into_iter().map(|p| RealImage::from_raw(grid, p)).collect(),
        grad_map: {
            let [gx, gy] = gmap;
            (RealImage::from_raw(grid, gx), RealImage::from_raw(grid, gy))
        },
        initial_cost,
        cost_trace: trace,
        iterations_run: iterations,
        alpha,
        beta,
        eta: op.eta,
    })
}

struct CostModel<'a> {
    stack_specs: &'a [Vec<Complex64>],
    op: &'a PhiOperator,
    pupil_driven: bool,
    alpha: f64,
    beta: f64,
    omega: f64,
    isotropic: bool,
}

impl CostModel<'_> {
    fn f(&self, x: f64) -> f64 {
        1.0 - (-self.omega * x.abs()).exp()
    }

    fn penalty(&self, comps: &[&[f64]]) -> f64 {
        if self.isotropic {
            (0..comps[0].len())
                .map(|k| self.f(comps.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt()))
                .sum()
        } else {
            comps.iter().flat_map(|c| c.iter()).map(|&v| self.f(v)).sum()
        }
    }

    fn eval(&self, phi_hat: &[Complex64], hphi: &[Vec<f64>], grad: (&[f64], &[f64])) -> f64 {
        let len = phi_hat.len() as f64;
        let mut fid = 0.0;
        for (hn, s) in self.op.h.iter().zip(self.stack_specs) {
            // Parseval: ||x||^2 = sum |X|^2 / (W H).
            fid += phi_hat
                .iter()
                .zip(hn.iter().zip(s))
                .map(|(p, (h, s))| {
                    let r = if self.pupil_driven { h * s - h * h * p } else { s - h * p };
                    r.norm_sqr()
                })
                .sum::<f64>()
                / len;
        }
        let mut total = fid;
        if self.alpha > 0.0 {
            let comps: Vec<&[f64]> = hphi.iter().map(Vec::as_slice).collect();
            total += self.alpha * self.penalty(&comps);
        }
        if self.beta > 0.0 {
            total += self.beta * self.penalty(&[grad.0, grad.1]);
        }
        total
    }
}

/// Settings shared by the TV and Retinex TV baselines.
#[derive(Clone, Debug, PartialEq)]
pub struct TvParams {
    pub alpha: f64,
    pub iters: usize,
    /// Weight of the quadratic coupling between `grad phi` and its split copy.
    pub split_weight: f64,
    pub eta: Eta,
    pub isotropic: bool,
    pub tol: f64,
}

impl TvParams {
    pub fn new(alpha: f64, iters: usize) -> Self {
        Self {
            alpha,
            iters,
            split_weight: 1.0,
            eta: Eta::default(),
            isotropic: true,
            tol: 1e-6,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || self.iters == 0 || !(self.split_weight > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "TV needs alpha > 0, iters >= 1 and split weight > 0; got {}, {}, {}",
                self.alpha, self.iters, self.split_weight
            )));
        }
        self.eta.validate()
    }
}

/// `min sum ||S - H phi||^2 + alpha ||grad phi||_1` by split Bregman.
pub fn solve_tv(stack: &DpcStack, params: &TvParams) -> Result<PhaseImage> {
    tv_core(stack, params, Fidelity::Plain)
}

/// `min sum ||grad S - H grad phi||^2 + alpha ||grad phi||_1`, zero-mean phase.
pub fn solve_retinex_tv(stack: &DpcStack, params: &TvParams) -> Result<PhaseImage> {
    tv_core(stack, params, Fidelity::Retinex)
}

fn tv_core(stack: &DpcStack, params: &TvParams, fidelity: Fidelity) -> Result<PhaseImage> {
    params.validate()?;
    let grid = *stack.grid();
    let op = PhiOperator::new(stack, fidelity, None, Some(params.split_weight), params.eta)?;
    let t = params.alpha / params.split_weight;
    let len = grid.len();
    let mut gmap = [vec![0.0; len], vec![0.0; len]];
    let mut d = [vec![0.0; len], vec![0.0; len]];
    let mut phi = vec![0.0; len];
    let mut changes = Vec::new();
    for it in 1..=params.iters {
        let gaux = (add(&gmap[0], &d[0]), add(&gmap[1], &d[1]));
        let phi_hat = op.solve(None, Some((&gaux.0, &gaux.1)));
        let (gx, gy) = op.ops.gradient_from_spectrum(&grid, &phi_hat);
        let new_phi = ifft_real(&grid, phi_hat);
        check_finite(&new_phi, it, &changes)?;
        let mut v = vec![
            gx.iter().zip(&d[0]).map(|(x, y)| x - y).collect::<Vec<_>>(),
            gy.iter().zip(&d[1]).map(|(x, y)| x - y).collect(),
        ];
        shrink_in_place(&mut v, params.isotropic, |m| soft_shrink_scalar(m, t));
        for (c, grad) in [&gx, &gy].into_iter().enumerate() {
            d[c].iter_mut()
                .zip(v[c].iter().zip(grad))
                .for_each(|(dk, (gk, dg))| *dk += gk - dg);
        }
        let [vx, vy]: [Vec<f64>; 2] = v.try_into().expect("two gradient components");
        gmap = [vx, vy];
        let change = rel_change(&new_phi, &phi);
        changes.push(change);
        phi = new_phi;
        if it > 1 && change < params.tol {
            break;
        }
    }
    Ok(PhaseImage::new(RealImage::from_raw(grid, phi)))
}
