//! Objective pupil and illumination pupils on the frequency grid.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;

/// Illumination axes used when none are given: left/right and top/bottom.
pub const DEFAULT_AXES: [f64; 2] = [0.0, FRAC_PI_2];

// Relative tolerance on the half-plane test so that bins lying on the dividing
// line stay excluded whatever the rounding of cos/sin(theta0).
const HALF_PLANE_TOL: f64 = 1e-9;

/// Hard-edged, aberration-free objective pupil: 1 inside `|f| < NA / lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct PupilMask {
    grid: FrequencyGrid,
    data: Vec<f64>,
    na: f64,
    lambda_um: f64,
}

impl PupilMask {
    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn na(&self) -> f64 {
        self.na
    }

    pub fn lambda_um(&self) -> f64 {
        self.lambda_um
    }

    /// Cutoff frequency NA / lambda (cycles/um).
    pub fn cutoff(&self) -> f64 {
        self.na / self.lambda_um
    }

    /// Pupil value at a lattice point given by signed indices, which may lie
    /// outside the stored grid.
    pub fn value_at(&self, kx: i64, ky: i64) -> f64 {
        if self.grid.radius_at(kx, ky) < self.cutoff() {
            1.0
        } else {
            0.0
        }
    }
}

pub fn objective_pupil(grid: FrequencyGrid, na: f64, lambda_um: f64) -> Result<PupilMask> {
    if !(na > 0.0 && na <= 1.0) {
        return Err(Error::InvalidParameter(format!("NA must lie in (0, 1], got {na}")));
    }
    if !(lambda_um > 0.0 && lambda_um.is_finite()) {
        return Err(Error::InvalidParameter(format!("wavelength {lambda_um} um")));
    }
    let cutoff = na / lambda_um;
    let limit = 0.5 * grid.nyquist();
    if cutoff >= limit {
        return Err(Error::Aliasing(format!(
            "pupil cutoff {cutoff:.4} cycles/um must stay below half the Nyquist frequency ({limit:.4}); \
             the PTF support 2NA/lambda would wrap around the grid"
        )));
    }
    let data = grid
        .radius_map()
        .into_iter()
        .map(|r| if r < cutoff { 1.0 } else { 0.0 })
        .collect();
    Ok(PupilMask {
        grid,
        data,
        na,
        lambda_um,
    })
}

/// Nonnegative illumination source intensity on the grid, one lobe of a DPC
/// pair. `theta0` is the central illumination direction of the lobe.
#[derive(Clone, Debug, PartialEq)]
pub struct SourcePattern {
    grid: FrequencyGrid,
    data: Vec<f64>,
    theta0: f64,
    cutoff: f64,
}

impl SourcePattern {
    /// Validates a user-supplied pattern: finite, nonnegative and contained in
    /// `|f| <= na_illum / lambda`.
    pub fn new(grid: FrequencyGrid, data: Vec<f64>, theta0: f64, na_illum: f64, lambda_um: f64) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "source of {} samples for a {}-sample grid",
                data.len(),
                grid.len()
            )));
        }
        if !(na_illum > 0.0 && lambda_um > 0.0) {
            return Err(Error::InvalidParameter("source NA and wavelength must be positive".into()));
        }
        let cutoff = na_illum / lambda_um;
        let w = grid.width();
        for (idx, &v) in data.iter().enumerate() {
            let (row, col) = (idx / w, idx % w);
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "negative source intensity {v} at row {row}, col {col}"
                )));
            }
            if v > 0.0 && grid.radius(row, col) > cutoff {
                return Err(Error::InvalidParameter(format!(
                    "source support at row {row}, col {col} exceeds the illumination cutoff"
                )));
            }
        }
        Ok(Self {
            grid,
            data,
            theta0,
            cutoff,
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    /// Illumination cutoff NA_illum / lambda (cycles/um).
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Point reflection `q(-f)`: the opposite lobe of the DPC pair.
    pub fn mirrored(&self) -> SourcePattern {
        let data = (0..self.grid.len()).map(|k| self.data[self.grid.negated(k)]).collect();
        SourcePattern {
            grid: self.grid,
            data,
            theta0: self.theta0 + std::f64::consts::PI,
            cutoff: self.cutoff,
        }
    }
}

fn in_half_plane(fx: f64, fy: f64, theta0: f64) -> bool {
    let r = (fx * fx + fy * fy).sqrt();
    fx * theta0.cos() + fy * theta0.sin() > HALF_PLANE_TOL * r
}

/// Unit intensity on the half disk `|f| < NA_illum / lambda` whose polar angle
/// lies strictly within `(theta0 - pi/2, theta0 + pi/2)`.
pub fn half_circle_source(grid: FrequencyGrid, na_illum: f64, lambda_um: f64, theta0: f64) -> Result<SourcePattern> {
    annular_source(grid, na_illum, 0.0, lambda_um, theta0)
}

/// Half annulus `na_inner / lambda <= |f| < na_outer / lambda` on the
/// `theta0` side.
pub fn annular_source(
    grid: FrequencyGrid,
    na_outer: f64,
    na_inner: f64,
    lambda_um: f64,
    theta0: f64,
) -> Result<SourcePattern> {
    if !(na_inner >= 0.0 && na_inner < na_outer) {
        return Err(Error::InvalidParameter(format!(
            "annulus needs 0 <= na_inner < na_outer, got {na_inner} and {na_outer}"
        )));
    }
    if !(lambda_um > 0.0) {
        return Err(Error::InvalidParameter(format!("wavelength {lambda_um} um")));
    }
    let (outer, inner) = (na_outer / lambda_um, na_inner / lambda_um);
    let w = grid.width();
    let data = (0..grid.len())
        .map(|idx| {
            let (i, j) = (idx / w, idx % w);
            let r = grid.radius(i, j);
            let inside = r < outer && r >= inner && in_half_plane(grid.fx(j), grid.fy(i), theta0);
            if inside {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    SourcePattern::new(grid, data, theta0, na_outer, lambda_um)
}

/// Odd illumination pupil `Q(f) = m(f) - m(-f)`, `m = q P`.
#[derive(Clone, Debug, PartialEq)]
pub struct IlluminationPupil {
    grid: FrequencyGrid,
    data: Vec<f64>,
    energy: f64,
    theta0: f64,
}

impl IlluminationPupil {
    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Total source intensity inside the pupil, `sum q P`, used to normalize
    /// the transfer function.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }
}

pub fn antisymmetrize(src: &SourcePattern, pupil: &PupilMask) -> Result<IlluminationPupil> {
    src.grid.check_same(&pupil.grid, "antisymmetrize")?;
    let grid = src.grid;
    let m: Vec<f64> = src.data.iter().zip(&pupil.data).map(|(q, p)| q * p).collect();
    let data = (0..grid.len()).map(|k| m[k] - m[grid.negated(k)]).collect();
    Ok(IlluminationPupil {
        grid,
        data,
        energy: m.iter().sum(),
        theta0: src.theta0,
    })
}
