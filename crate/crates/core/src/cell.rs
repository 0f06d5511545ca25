//! Explicit flux-form step of the regularized cell-density equation
//! `n_t + u.grad n = div(m (n+eps)^(m-1) grad n - n/(1+eps n)^3 grad c)`.

use crate::error::SolverError;
use crate::fields::{shift, Grid, ScalarField, VectorField};
use serde::{Deserialize, Serialize};

/// Roundoff band below zero that is silently clamped.
pub const CLAMP_BAND: f64 = 1e-14;

/// How the diffusion coefficient is averaged onto a face.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceAverage {
    /// `m (mean(n_L, n_R) + eps)^(m-1)`
    #[default]
    Arithmetic,
    /// harmonic mean of the two cell coefficients
    Harmonic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellStepParams {
    pub m: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub mms_source: Option<ScalarField>,
    pub cfl_limit: f64,
    pub force_cfl: bool,
    pub face_average: FaceAverage,
}

impl CellStepParams {
    pub fn new(m: f64, epsilon: f64, dt: f64) -> Result<Self, SolverError> {
        if !(m > 1.0 && m.is_finite()) {
            return Err(SolverError::InvalidParameter(format!("m must exceed 1, got {m}")));
        }
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(SolverError::InvalidParameter(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SolverError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if m <= 4.0 / 3.0 {
            log::warn!("m = {m} is at or below 4/3; no global solution theory covers this regime");
        }
        Ok(CellStepParams {
            m,
            epsilon,
            dt,
            mms_source: None,
            cfl_limit: 0.5,
            force_cfl: false,
            face_average: FaceAverage::Arithmetic,
        })
    }

    pub fn with_source(mut self, source: Option<ScalarField>) -> Self {
        self.mms_source = source;
        self
    }

    /// Pointwise diffusion coefficient `m (s + eps)^(m-1)`.
    #[inline]
    pub fn diffusivity(&self, s: f64) -> f64 {
        self.m * (s + self.epsilon).powf(self.m - 1.0)
    }

    fn face_diffusivity(&self, left: f64, right: f64) -> f64 {
        match self.face_average {
            FaceAverage::Arithmetic => self.diffusivity(0.5 * (left + right)),
            FaceAverage::Harmonic => {
                let (a, b) = (self.diffusivity(left), self.diffusivity(right));
                2.0 * a * b / (a + b)
            }
        }
    }

    /// Saturated sensitivity `s / (1 + eps s)^3`.
    #[inline]
    pub fn saturation(&self, s: f64) -> f64 {
        s / (1.0 + self.epsilon * s).powi(3)
    }
}

fn face_map(grid: &Grid, mut f: impl FnMut(usize, [usize; 3]) -> f64) -> VectorField {
    let mut v = VectorField::zeros(grid);
    for a in 0..grid.ndim() {
        for p in grid.interior_faces(a) {
            let val = f(a, p);
            v.set_at(a, p, val);
        }
    }
    v.apply_bc();
    v
}

/// Diffusive face flux `m (n_face + eps)^(m-1) (n_R - n_L)/h`.
pub fn degenerate_diffusion_flux(n: &ScalarField, params: &CellStepParams) -> VectorField {
    let grid = *n.grid();
    face_map(&grid, |a, p| {
        let (l, r) = (n.at_padded(p), n.at_padded(shift(p, a, 1)));
        params.face_diffusivity(l, r) * (r - l) / grid.h(a)
    })
}

/// Chemotactic face flux `sat(n_up) (c_R - c_L)/h`, with `n_up` taken from
/// the cell the flux leaves.
pub fn chemotaxis_flux(n: &ScalarField, c: &ScalarField, params: &CellStepParams) -> VectorField {
    let grid = *n.grid();
    face_map(&grid, |a, p| {
        let q = shift(p, a, 1);
        let dc = (c.at_padded(q) - c.at_padded(p)) / grid.h(a);
        let up = if dc > 0.0 { n.at_padded(p) } else { n.at_padded(q) };
        params.saturation(up) * dc
    })
}

/// Upwind advective flux `n_up u` on interior faces.
pub fn advective_flux(f: &ScalarField, u: &VectorField) -> VectorField {
    let grid = *f.grid();
    face_map(&grid, |a, p| {
        let w = u.at(a, p);
        let up = if w > 0.0 { f.at_padded(p) } else { f.at_padded(shift(p, a, 1)) };
        up * w
    })
}

/// `dt * max over cells of sum over its faces of (|u| + |Dc|)/h`.
///
/// Bounds the fraction of a cell's content that the explicit transport
/// terms can remove in one step.
pub fn cfl_number(c: &ScalarField, u: &VectorField, dt: f64) -> f64 {
    let grid = *c.grid();
    let mut worst = 0.0f64;
    for cell in grid.cells() {
        let p = grid.pad(cell);
        let mut s = 0.0;
        for a in 0..grid.ndim() {
            let h = grid.h(a);
            for (face, lo, hi) in [
                (shift(p, a, -1), shift(p, a, -1), p),
                (p, p, shift(p, a, 1)),
            ] {
                let dc = (c.at_padded(hi) - c.at_padded(lo)) / h;
                s += (u.at(a, face).abs() + dc.abs()) / h;
            }
        }
        worst = worst.max(s);
    }
    dt * worst
}

/// Largest stable explicit diffusion step for the current density.
fn diffusion_dt_limit(n: &ScalarField, params: &CellStepParams) -> f64 {
    let grid = n.grid();
    let coef = params.diffusivity(n.max().max(0.0));
    let inv: f64 = grid.spacing().iter().map(|h| 2.0 / (h * h)).sum();
    0.5 / (coef * inv)
}

/// Advances `n` by one step of length `params.dt` with `c` and `u` frozen.
///
/// The explicit update is sub-cycled so that every substep keeps the
/// diffusion number at or below 1/2; transport stability is the caller's
/// CFL precondition.
pub fn step_n(
    n: &ScalarField,
    c: &ScalarField,
    u: &VectorField,
    params: &CellStepParams,
) -> Result<ScalarField, SolverError> {
    assert_eq!(n.grid(), c.grid(), "fields on different grids");
    assert_eq!(n.grid(), u.grid(), "fields on different grids");
    let cfl = cfl_number(c, u, params.dt);
    if cfl > params.cfl_limit && !params.force_cfl {
        return Err(SolverError::CflViolation {
            number: cfl,
            limit: params.cfl_limit,
        });
    }
    let grid = *n.grid();
    let mut cur = n.clone().with_bc(crate::fields::ScalarBc::Neumann);
    let mut elapsed = 0.0;
    while elapsed < params.dt {
        let remaining = params.dt - elapsed;
        let lim = diffusion_dt_limit(&cur, params);
        let k = (remaining / lim).ceil().max(1.0);
        let dts = remaining / k;
        let flux = degenerate_diffusion_flux(&cur, params)
            .axpy(-1.0, &chemotaxis_flux(&cur, c, params))
            .axpy(-1.0, &advective_flux(&cur, u));
        let d = crate::fields::div(&flux);
        let mut vals = cur.interior_vec();
        let dv = d.interior_vec();
        match &params.mms_source {
            Some(s) => {
                let sv = s.interior_vec();
                for i in 0..vals.len() {
                    vals[i] += dts * (dv[i] + sv[i]);
                }
            }
            None => {
                for i in 0..vals.len() {
                    vals[i] += dts * dv[i];
                }
            }
        }
        let low = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if vals.iter().any(|v| !v.is_finite()) || low <= -CLAMP_BAND {
            return Err(SolverError::NegativeDensity { min: low });
        }
        cur = ScalarField::from_interior(&grid, &vals);
        elapsed = if k == 1.0 { params.dt } else { elapsed + dts };
    }
    let min = cur.min();
    if min < 0.0 {
        if min <= -CLAMP_BAND {
            return Err(SolverError::NegativeDensity { min });
        }
        cur = cur.map(|v| v.max(0.0));
    }
    Ok(cur)
}
