//! Phase transfer function, its point spread function, and the edge-response
//! probe that exposes the PSF as an oriented band-limited edge detector.
//!
//! Sign convention: an illumination pupil `Q` is positive on its `theta0`
//! lobe, and `H(f) = i A (P * Q)(f)`. This is the transfer function of
//! `S = (I_l - I_r) / (I_l + I_r)` where `I_l` is recorded under the lobe
//! *opposite* to `theta0` (for `theta0 = 0`, light arriving from the left).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft_real, ifft_real, inverse_transform, Fft2};
use crate::grid::{ComplexImage, FrequencyGrid, RealImage};
use crate::pupils::{antisymmetrize, half_circle_source, objective_pupil, IlluminationPupil, PupilMask, SourcePattern};

/// Relative bound used for the pure-imaginary, odd and band-limit invariants.
pub const INVARIANT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TransferFunction {
    data: ComplexImage,
    theta0: f64,
    norm_a: f64,
    band_limit: f64,
}

impl TransferFunction {
    pub fn grid(&self) -> &FrequencyGrid {
        self.data.grid()
    }

    pub fn data(&self) -> &ComplexImage {
        &self.data
    }

    pub fn values(&self) -> &[Complex64] {
        self.data.data()
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    /// Normalization coefficient `A` that was applied.
    pub fn norm_a(&self) -> f64 {
        self.norm_a
    }

    /// Support radius 2 NA / lambda (cycles/um).
    pub fn band_limit(&self) -> f64 {
        self.band_limit
    }

    /// Wraps externally supplied PTF values (e.g. loaded from NPY) after
    /// checking the structural invariants.
    pub fn from_values(data: ComplexImage, theta0: f64, norm_a: f64, band_limit: f64) -> Result<Self> {
        let tf = Self {
            data,
            theta0,
            norm_a,
            band_limit,
        };
        tf.check_invariants()?;
        Ok(tf)
    }

    /// Verifies pure-imaginary, odd and band-limited structure bin by bin.
    pub fn check_invariants(&self) -> Result<()> {
        let g = *self.grid();
        let v = self.values();
        let tol = INVARIANT_TOL * self.data.max_abs();
        for k in 0..g.len() {
            if v[k].re.abs() > tol {
                return Err(Error::Antisymmetry(format!("real part {} at bin {k}", v[k].re)));
            }
            if (v[k] + v[g.negated(k)]).norm() > tol {
                return Err(Error::Antisymmetry(format!("H(-f) != -H(f) at bin {k}")));
            }
            let (i, j) = (k / g.width(), k % g.width());
            if g.radius(i, j) > self.band_limit && v[k].norm() > tol {
                return Err(Error::Aliasing(format!("energy outside 2NA/lambda at bin {k}")));
            }
        }
        Ok(())
    }
}

/// PTF by FFT convolution of the objective pupil with the illumination pupil,
/// normalized by `A = 1 / sum(q P)`.
pub fn ptf(pupil: &PupilMask, illum: &IlluminationPupil) -> Result<TransferFunction> {
    pupil.grid().check_same(illum.grid(), "ptf")?;
    let g = *pupil.grid();
    let q = illum.data();
    for k in 0..g.len() {
        if q[k] + q[g.negated(k)] != 0.0 {
            return Err(Error::Antisymmetry(format!("illumination pupil is not odd at bin {k}")));
        }
        if q[k] != 0.0 && pupil.data()[k] == 0.0 {
            return Err(Error::Aliasing(format!("illumination support outside the objective pupil at bin {k}")));
        }
    }
    let band_limit = 2.0 * pupil.cutoff();
    if band_limit >= g.nyquist() {
        return Err(Error::Aliasing(format!(
            "PTF support {band_limit:.4} reaches the Nyquist frequency {:.4}",
            g.nyquist()
        )));
    }
    let fp = fft_real(&g, pupil.data());
    let fq = fft_real(&g, q);
    let conv = ifft_real(&g, fp.iter().zip(&fq).map(|(a, b)| a * b).collect());
    let norm_a = if illum.energy() > 0.0 { 1.0 / illum.energy() } else { 0.0 };
    // Even * odd is odd with support inside 2 NA / lambda; enforce both so
    // round-off does not leave ~1e-17 at DC or beyond the band.
    let data = (0..g.len())
        .map(|k| {
            let inside = g.radius(k / g.width(), k % g.width()) <= band_limit * (1.0 + 1e-12);
            let odd = if inside { 0.5 * (conv[k] - conv[g.negated(k)]) } else { 0.0 };
            Complex64::new(0.0, norm_a * odd)
        })
        .collect();
    Ok(TransferFunction {
        data: ComplexImage::from_raw(g, data),
        theta0: illum.theta0(),
        norm_a,
        band_limit,
    })
}

/// Direct double-sum evaluation of the transfer-function integral,
///
/// `H(f) = i A sum_rho q_l(rho) P(rho) [P(rho + f) - P(rho - f)]`,
///
/// where `q_l` is the lobe opposite to `source` (the illumination of `I_l`)
/// and `P` is evaluated analytically on the lattice, so `rho +- f` may leave
/// the grid. Cost is O(N^2) per bin; intended as a test oracle.
pub fn ptf_direct(pupil: &PupilMask, source: &SourcePattern) -> Result<TransferFunction> {
    pupil.grid().check_same(source.grid(), "ptf_direct")?;
    let g = *pupil.grid();
    let left = source.mirrored();
    let support: Vec<(i64, i64, f64)> = (0..g.len())
        .filter_map(|k| {
            let m = left.data()[k] * pupil.data()[k];
            (m != 0.0).then(|| (g.signed_col(k % g.width()), g.signed_row(k / g.width()), m))
        })
        .collect();
    let energy: f64 = support.iter().map(|s| s.2).sum();
    let norm_a = if energy > 0.0 { 1.0 / energy } else { 0.0 };
    let data = (0..g.len())
        .map(|k| {
            let fx = g.signed_col(k % g.width());
            let fy = g.signed_row(k / g.width());
            let sum: f64 = support
                .iter()
                .map(|&(rx, ry, m)| m * (pupil.value_at(rx + fx, ry + fy) - pupil.value_at(rx - fx, ry - fy)))
                .sum();
            Complex64::new(0.0, norm_a * sum)
        })
        .collect();
    Ok(TransferFunction {
        data: ComplexImage::from_raw(g, data),
        theta0: source.theta0(),
        norm_a,
        band_limit: 2.0 * pupil.cutoff(),
    })
}

/// Half-circle PTFs for a set of illumination axes with matched illumination
/// NA unless `na_illum` says otherwise.
pub fn half_circle_ptfs(
    grid: FrequencyGrid,
    na: f64,
    na_illum: f64,
    lambda_um: f64,
    axes: &[f64],
) -> Result<Vec<TransferFunction>> {
    let pupil = objective_pupil(grid, na, lambda_um)?;
    axes.iter()
        .map(|&theta0| {
            let src = half_circle_source(grid, na_illum, lambda_um, theta0)?;
            ptf(&pupil, &antisymmetrize(&src, &pupil)?)
        })
        .collect()
}

/// Real, odd spatial kernel `H(r)`; origin at index `(0, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsfKernel {
    data: RealImage,
}

impl PsfKernel {
    pub fn grid(&self) -> &FrequencyGrid {
        self.data.grid()
    }

    pub fn data(&self) -> &RealImage {
        &self.data
    }
}

pub fn psf(tf: &TransferFunction) -> Result<PsfKernel> {
    let field = inverse_transform(tf.data());
    let peak = field.max_abs();
    let worst = field.data().iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
    if worst > INVARIANT_TOL * peak.max(f64::MIN_POSITIVE) {
        return Err(Error::Antisymmetry(format!(
            "PSF imaginary residue {worst:.3e} exceeds bound (peak {peak:.3e})"
        )));
    }
    Ok(PsfKernel {
        data: field.real_part(),
    })
}

/// Nearest lattice direction with small integer components to `angle`.
fn lattice_direction(angle: f64) -> (i64, i64) {
    let mut best = (1, 0);
    let mut best_err = f64::INFINITY;
    for ky in -8i64..=8 {
        for kx in -8i64..=8 {
            if (kx, ky) == (0, 0) || gcd(kx.unsigned_abs(), ky.unsigned_abs()) != 1 {
                continue;
            }
            let d = (ky as f64).atan2(kx as f64) - angle;
            let err = d.sin().abs() + (1.0 - d.cos());
            if err < best_err - 1e-15 {
                best_err = err;
                best = (kx, ky);
            }
        }
    }
    best
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Periodic two-level step (`+1` / `-1`) whose edge passes through the image
/// centre with normal along `edge_angle`, measured in pixel coordinates and
/// snapped to the nearest small-integer lattice direction. A second (wrap)
/// transition sits half a period away so the pattern is periodic.
pub fn step_pattern(grid: FrequencyGrid, edge_angle: f64) -> RealImage {
    let (kx, ky) = lattice_direction(edge_angle);
    let (w, h) = (grid.width() as f64, grid.height() as f64);
    RealImage::from_fn(grid, |i, j| {
        let x = j as f64 - w / 2.0;
        let y = i as f64 - h / 2.0;
        let t = kx as f64 * x / w + ky as f64 * y / h;
        if t - t.floor() < 0.5 {
            1.0
        } else {
            -1.0
        }
    })
}

/// `|H (*) u|` for the periodic step `u` oriented by `edge_angle`.
pub fn edge_response(kernel: &PsfKernel, edge_angle: f64) -> RealImage {
    let g = *kernel.grid();
    let u = step_pattern(g, edge_angle);
    let fk = fft_real(&g, kernel.data().data());
    let mut buf: Vec<Complex64> = u.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let plan = Fft2::for_grid(&g);
    plan.forward(&mut buf);
    buf.iter_mut().zip(&fk).for_each(|(b, k)| *b *= k);
    plan.inverse(&mut buf);
    RealImage::from_raw(g, buf.iter().map(|v| v.re.abs()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pupils::annular_source;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    const NA: f64 = 0.25;
    const LAMBDA: f64 = 0.532;

    fn grid(n: usize) -> FrequencyGrid {
        FrequencyGrid::new(n, n, 4.0, 10.0).unwrap()
    }

    fn build(g: FrequencyGrid, src: &SourcePattern) -> (TransferFunction, TransferFunction) {
        let p = objective_pupil(g, NA, LAMBDA).unwrap();
        let fast = ptf(&p, &antisymmetrize(src, &p).unwrap()).unwrap();
        let slow = ptf_direct(&p, src).unwrap();
        (fast, slow)
    }

    fn max_diff(a: &TransferFunction, b: &TransferFunction) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0, |m, (x, y)| m.max((x - y).norm()))
    }

    #[test]
    fn zero_pupil_gives_zero_ptf() {
        let g = grid(16);
        let p = objective_pupil(g, NA, LAMBDA).unwrap();
        let disk = SourcePattern::new(g, p.data().to_vec(), 0.0, NA, LAMBDA).unwrap();
        let (fast, slow) = build(g, &disk);
        assert!(fast.data().max_abs() < 1e-15);
        assert!(slow.data().max_abs() == 0.0);
    }

    #[test]
    fn fft_route_matches_direct_sum() {
        for n in [16, 32] {
            let g = grid(n);
            for theta0 in [0.0, FRAC_PI_2] {
                let (fast, slow) = build(g, &half_circle_source(g, NA, LAMBDA, theta0).unwrap());
                assert!(max_diff(&fast, &slow) < 1e-10, "n={n} theta0={theta0}");
                assert_eq!(slow.values()[0], Complex64::new(0.0, 0.0));
                assert_eq!(fast.norm_a(), slow.norm_a());
            }
        }
    }

    #[test]
    fn fft_route_matches_direct_sum_random_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [16, 32] {
            let g = grid(n);
            let data = (0..g.len())
                .map(|k| {
                    if g.radius(k / n, k % n) < NA / LAMBDA && g.fx(k % n) > 0.0 {
                        rng.random_range(0.0..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let src = SourcePattern::new(g, data, 0.0, NA, LAMBDA).unwrap();
            let (fast, slow) = build(g, &src);
            assert!(max_diff(&fast, &slow) < 1e-10);
        }
    }

    #[test]
    fn half_circle_ptf_structure() {
        let g = grid(64);
        let p = objective_pupil(g, NA, LAMBDA).unwrap();
        for (inner, theta0) in [(0.0, 0.0), (0.0, 1.0), (0.9 * NA, 0.0)] {
            let src = annular_source(g, NA, inner, LAMBDA, theta0).unwrap();
            let tf = ptf(&p, &antisymmetrize(&src, &p).unwrap()).unwrap();
            tf.check_invariants().unwrap();
        }
        let tf = ptf(&p, &antisymmetrize(&half_circle_source(g, NA, LAMBDA, 0.0).unwrap(), &p).unwrap()).unwrap();
        // Zero on the f_x = 0 column, odd along f_x.
        for i in 0..64 {
            assert!(tf.data().get(i, 0).norm() < 1e-14);
            for j in 1..64 {
                let a = tf.data().get(i, j);
                let b = tf.data().get(i, 64 - j);
                assert!((a + b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn psf_is_real_and_odd() {
        let g = grid(64);
        let tf = half_circle_ptfs(g, NA, NA, LAMBDA, &[0.0]).unwrap().remove(0);
        let k = psf(&tf).unwrap();
        let d = k.data();
        let peak = d.max_abs();
        for idx in 0..g.len() {
            assert!((d.data()[idx] + d.data()[g.negated(idx)]).abs() < 1e-12 * peak);
        }
        for i in 0..64 {
            assert!(d.get(i, 0).abs() < 1e-12 * peak);
        }
    }

    #[test]
    fn zero_ptf_gives_zero_kernel() {
        let g = grid(16);
        let tf = TransferFunction::from_values(ComplexImage::zeros(g), 0.0, 0.0, 1.0).unwrap();
        assert_eq!(psf(&tf).unwrap().data().max_abs(), 0.0);
    }

    #[test]
    fn psf_rejects_broken_antisymmetry() {
        let g = grid(16);
        let mut v = vec![Complex64::new(0.0, 0.0); g.len()];
        v[1] = Complex64::new(0.0, 1.0);
        let tf = TransferFunction {
            data: ComplexImage::from_raw(g, v),
            theta0: 0.0,
            norm_a: 1.0,
            band_limit: 10.0,
        };
        assert!(psf(&tf).is_err());
        assert!(tf.check_invariants().is_err());
    }

    #[test]
    fn psf_envelope_decays() {
        let g = grid(128);
        let tf = half_circle_ptfs(g, NA, NA, LAMBDA, &[0.0]).unwrap().remove(0);
        let k = psf(&tf).unwrap();
        let peak = k.data().max_abs();
        let radius_um = 3.0 * LAMBDA / NA;
        let mut outside: f64 = 0.0;
        for i in 0..128 {
            for j in 0..128 {
                let x = g.signed_col(j) as f64 * g.dx_um();
                let y = g.signed_row(i) as f64 * g.dx_um();
                if (x * x + y * y).sqrt() > radius_um {
                    outside = outside.max(k.data().get(i, j).abs());
                }
            }
        }
        assert!(outside <= 0.2 * peak, "outside/peak = {}", outside / peak);
    }

    #[test]
    fn step_pattern_orientation() {
        let g = grid(16);
        let u = step_pattern(g, 0.0);
        assert_eq!(u.get(3, 8), 1.0);
        assert_eq!(u.get(3, 7), -1.0);
        let v = step_pattern(g, FRAC_PI_2);
        assert_eq!(v.get(8, 3), 1.0);
        assert_eq!(v.get(7, 3), -1.0);
        assert_eq!(lattice_direction(3.0 * PI / 4.0), (-1, 1));
        assert_eq!(lattice_direction(-PI), (-1, 0));
    }

    #[test]
    fn vertical_edge_peaks_on_edge_column() {
        let g = grid(64);
        let tf = half_circle_ptfs(g, NA, NA, LAMBDA, &[0.0]).unwrap().remove(0);
        let resp = edge_response(&psf(&tf).unwrap(), 0.0);
        for i in 0..64 {
            let row: Vec<f64> = (3..62).map(|j| resp.get(i, j)).collect();
            let arg = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
                + 3;
            assert!((arg as i64 - 32).abs() <= 1, "row {i} argmax {arg}");
        }
        let orth = edge_response(&psf(&tf).unwrap(), FRAC_PI_2);
        assert!(orth.max_abs() <= 0.02 * resp.max_abs());
    }
}
