//! Semi-implicit step of the signal equation `c_t + u.grad c = lap c - c + n`.

use crate::cell::advective_flux;
use crate::error::SolverError;
use crate::fields::{div, ScalarField, VectorField};
use crate::linalg::{pcg, NeumannHelmholtz, StopRule};

/// Relative residual tolerance of the implicit solve.
pub const SIGNAL_TOL: f64 = 1e-10;

/// Iteration cap `10 * sum(dims)`.
pub fn signal_max_iterations(c: &ScalarField) -> usize {
    10 * c.grid().dims().iter().sum::<usize>()
}

/// Solves `((1+dt) I - dt lap_h) c_new = c + dt (n - div(c_up u)) + dt S`.
pub fn step_c(
    c: &ScalarField,
    n: &ScalarField,
    u: &VectorField,
    dt: f64,
    mms_source: Option<&ScalarField>,
) -> Result<ScalarField, SolverError> {
    step_c_capped(c, n, u, dt, mms_source, signal_max_iterations(c))
}

pub(crate) fn step_c_capped(
    c: &ScalarField,
    n: &ScalarField,
    u: &VectorField,
    dt: f64,
    mms_source: Option<&ScalarField>,
    max_iter: usize,
) -> Result<ScalarField, SolverError> {
    assert_eq!(c.grid(), n.grid(), "fields on different grids");
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SolverError::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let grid = *c.grid();
    let transport = div(&advective_flux(c, u)).interior_vec();
    let nv = n.interior_vec();
    let mut rhs = c.interior_vec();
    for i in 0..rhs.len() {
        rhs[i] += dt * (nv[i] - transport[i]);
    }
    if let Some(s) = mms_source {
        for (r, v) in rhs.iter_mut().zip(s.interior_vec()) {
            *r += dt * v;
        }
    }
    let op = NeumannHelmholtz {
        grid,
        alpha: 1.0 + dt,
        beta: dt,
    };
    let mut x = c.interior_vec();
    let out = pcg(&op, &rhs, &mut x, StopRule::Relative(SIGNAL_TOL), max_iter);
    if !out.converged {
        return Err(SolverError::LinearSolveFailure {
            system: "signal Helmholtz",
            iterations: out.iterations,
            residual: out.residual,
        });
    }
    Ok(ScalarField::from_interior(&grid, &x))
}
