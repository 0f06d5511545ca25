//! Chorin projection step for the filtered Navier-Stokes equations
//! `u_t + (Y u . grad) u = lap u + grad P + n grad phi`, `div u = 0`,
//! with no-slip walls. `Y = (I - eps lap)^-1` followed by re-projection.

use crate::error::SolverError;
use crate::fields::{div, face_inner, grad, shift, velocity_grad_energy, Grid, ScalarField, VectorField};
use crate::linalg::{pcg, NeumannHelmholtz, NoSlipHelmholtz, StopRule};

/// Divergence tolerance used when re-projecting the filtered velocity.
pub const FILTER_PROJ_TOL: f64 = 1e-10;
/// Relative residual tolerance of the componentwise filter solves.
pub const FILTER_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct FluidStepParams {
    /// Filter width; 0 disables the filter.
    pub epsilon: f64,
    pub dt: f64,
    /// Potential sampled at cell centers.
    pub phi: ScalarField,
    /// Bound on `||div u_new||_inf`.
    pub proj_tol: f64,
    pub mms_source: Option<VectorField>,
    pub cfl_limit: f64,
    pub force_cfl: bool,
    /// Drop the convective term (linear Stokes check).
    pub convection: bool,
}

impl FluidStepParams {
    pub fn new(epsilon: f64, dt: f64, phi: ScalarField, proj_tol: f64) -> Result<Self, SolverError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(SolverError::InvalidParameter(format!(
                "filter epsilon must lie in [0, 1], got {epsilon}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SolverError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if !(proj_tol > 0.0 && proj_tol <= 1e-6) {
            return Err(SolverError::InvalidParameter(format!(
                "proj_tol must lie in (0, 1e-6], got {proj_tol}"
            )));
        }
        check_potential(&phi)?;
        Ok(FluidStepParams {
            epsilon,
            dt,
            phi,
            proj_tol,
            mms_source: None,
            cfl_limit: 0.5,
            force_cfl: false,
            convection: true,
        })
    }
}

/// Rejects potentials with non-finite samples or unbounded differences.
fn check_potential(phi: &ScalarField) -> Result<(), SolverError> {
    if phi.data().iter().any(|v| !v.is_finite()) {
        return Err(SolverError::InvalidParameter("potential has non-finite samples".into()));
    }
    let g = grad(phi);
    if !g.max_abs().is_finite() {
        return Err(SolverError::InvalidParameter("potential gradient not finite".into()));
    }
    Ok(())
}

/// `||div u||_inf` over interior cells.
pub fn max_divergence(u: &VectorField) -> f64 {
    div(u).max_abs()
}

fn pressure_max_iterations(grid: &Grid) -> usize {
    100 * grid.dims().iter().sum::<usize>() + 100
}

/// Discrete Leray projection: solves `lap_h q = div u` (Neumann, zero mean)
/// and returns `u - grad q` together with `q`.
///
/// `warm` holds the previous `q` in flat cell order (resized if needed).
pub fn project(
    u: &VectorField,
    proj_tol: f64,
    warm: &mut Vec<f64>,
) -> Result<(VectorField, ScalarField), SolverError> {
    let grid = *u.grid();
    let b: Vec<f64> = div(u).interior_vec().into_iter().map(|v| -v).collect();
    if warm.len() != b.len() {
        *warm = vec![0.0; b.len()];
    }
    let op = NeumannHelmholtz {
        grid,
        alpha: 0.0,
        beta: 1.0,
    };
    let out = pcg(
        &op,
        &b,
        warm,
        StopRule::AbsoluteMax(proj_tol / 10.0),
        pressure_max_iterations(&grid),
    );
    let q = ScalarField::from_interior(&grid, warm);
    let projected = u.axpy(-1.0, &grad(&q));
    let residual = max_divergence(&projected);
    if !out.converged || residual > proj_tol {
        return Err(SolverError::LinearSolveFailure {
            system: "pressure Poisson",
            iterations: out.iterations,
            residual,
        });
    }
    Ok((projected, q))
}

/// Discrete Helmholtz filter: componentwise `(I - eps lap_h) v = u` with
/// no-slip walls, then re-projected. `eps = 0` returns `u` unchanged.
pub fn helmholtz_filter(u: &VectorField, epsilon: f64) -> Result<VectorField, SolverError> {
    let mut warm = Vec::new();
    filter_with(u, epsilon, &mut warm)
}

fn filter_with(u: &VectorField, epsilon: f64, warm: &mut Vec<f64>) -> Result<VectorField, SolverError> {
    if epsilon == 0.0 {
        return Ok(u.clone());
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(SolverError::InvalidParameter(format!("filter epsilon {epsilon}")));
    }
    let grid = *u.grid();
    let mut comps = Vec::with_capacity(grid.ndim());
    for a in 0..grid.ndim() {
        let op = NoSlipHelmholtz {
            grid,
            axis: a,
            alpha: 1.0,
            beta: epsilon,
        };
        let rhs = u.interior_vec(a);
        let mut x = rhs.clone();
        let cap = 20 * grid.dims().iter().sum::<usize>() + 100;
        let out = pcg(&op, &rhs, &mut x, StopRule::Relative(FILTER_TOL), cap);
        if !out.converged {
            return Err(SolverError::LinearSolveFailure {
                system: "velocity filter",
                iterations: out.iterations,
                residual: out.residual,
            });
        }
        comps.push(x);
    }
    let v = VectorField::from_interior(&grid, &comps);
    Ok(project(&v, FILTER_PROJ_TOL, warm)?.0)
}

/// Centered advective term `(v . grad_h) u` on interior faces. Off-axis
/// advecting components are the four-face average around each face.
pub fn convection(v: &VectorField, u: &VectorField) -> VectorField {
    let grid = *u.grid();
    let nd = grid.ndim();
    let mut out = VectorField::zeros(&grid);
    for a in 0..nd {
        for p in grid.interior_faces(a) {
            let mut s = 0.0;
            for b in 0..nd {
                let vb = if b == a {
                    v.at(a, p)
                } else {
                    let pa = shift(p, a, 1);
                    0.25 * (v.at(b, shift(p, b, -1))
                        + v.at(b, p)
                        + v.at(b, shift(pa, b, -1))
                        + v.at(b, pa))
                };
                let du = (u.at(a, shift(p, b, 1)) - u.at(a, shift(p, b, -1))) / (2.0 * grid.h(b));
                s += vb * du;
            }
            out.set_at(a, p, s);
        }
    }
    out.apply_bc();
    out
}

/// Buoyancy `n_face (phi_R - phi_L)/h` on interior faces.
pub fn buoyancy_force(n: &ScalarField, phi: &ScalarField) -> VectorField {
    let grid = *n.grid();
    let mut out = VectorField::zeros(&grid);
    for a in 0..grid.ndim() {
        for p in grid.interior_faces(a) {
            let q = shift(p, a, 1);
            let nf = 0.5 * (n.at_padded(p) + n.at_padded(q));
            out.set_at(a, p, nf * (phi.at_padded(q) - phi.at_padded(p)) / grid.h(a));
        }
    }
    out.apply_bc();
    out
}

/// Number of explicit substeps that keeps `dt_s * sum(2/h^2) <= 1/2`.
pub fn viscous_substeps(grid: &Grid, dt: f64) -> usize {
    let inv: f64 = grid.spacing().iter().map(|h| 2.0 / (h * h)).sum();
    ((dt * inv) / 0.5).ceil().max(1.0) as usize
}

/// `dt * sum over axes of max |u_a| / h_a`.
pub fn fluid_cfl(u: &VectorField, dt: f64) -> f64 {
    let grid = u.grid();
    (0..grid.ndim())
        .map(|a| {
            let m = u.interior_vec(a).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            m / grid.h(a)
        })
        .sum::<f64>()
        * dt
}

/// Fluid stepper that keeps the last pressure as a warm start.
#[derive(Clone, Debug, Default)]
pub struct FluidStepper {
    pressure_warm: Vec<f64>,
    filter_warm: Vec<f64>,
}

impl FluidStepper {
    pub fn new() -> Self {
        Self::default()
    }

    /// Advances `u` by `params.dt`. Returns the new velocity and the
    /// pressure `P` in the sign convention `u_t = ... + grad P`.
    ///
    /// The explicit predictor `u + dt_s (lap u - (v.grad) u + f)` is
    /// followed by a projection; the step is split into equal substeps when
    /// `dt` exceeds the explicit viscous limit. The convecting velocity `v`
    /// is the filtered start-of-step velocity, held over the substeps.
    pub fn step(
        &mut self,
        u: &VectorField,
        n: &ScalarField,
        params: &FluidStepParams,
    ) -> Result<(VectorField, ScalarField), SolverError> {
        assert_eq!(u.grid(), n.grid(), "fields on different grids");
        let grid = *u.grid();
        let cfl = fluid_cfl(u, params.dt);
        if cfl > params.cfl_limit && !params.force_cfl {
            return Err(SolverError::CflViolation {
                number: cfl,
                limit: params.cfl_limit,
            });
        }
        let k = viscous_substeps(&grid, params.dt);
        let dts = params.dt / k as f64;
        let mut force = buoyancy_force(n, &params.phi);
        if let Some(s) = &params.mms_source {
            force = force.axpy(1.0, s);
        }
        let v = if params.convection {
            Some(filter_with(u, params.epsilon, &mut self.filter_warm)?)
        } else {
            None
        };
        let mut cur = u.clone();
        let mut q = ScalarField::zeros(&grid);
        for _ in 0..k {
            let mut rate = crate::fields::vector_laplace(&cur).axpy(1.0, &force);
            if let Some(v) = &v {
                rate = rate.axpy(-1.0, &convection(v, &cur));
            }
            let star = cur.axpy(dts, &rate);
            let (next, qq) = project(&star, params.proj_tol, &mut self.pressure_warm)?;
            cur = next;
            q = qq;
        }
        // u_new = u* - grad q = u* - dt grad p, and P = -p
        let pressure = q.map(|v| -v / dts);
        Ok((cur, pressure))
    }
}

/// Pure single step without warm-start state.
pub fn step_u(
    u: &VectorField,
    n: &ScalarField,
    params: &FluidStepParams,
) -> Result<(VectorField, ScalarField), SolverError> {
    FluidStepper::new().step(u, n, params)
}

/// `int n u . grad phi` with the buoyancy discretization of the stepper.
pub fn buoyancy_work(u: &VectorField, n: &ScalarField, phi: &ScalarField) -> f64 {
    face_inner(u, &buoyancy_force(n, phi))
}

/// `(||u_new||^2 - ||u_old||^2)/(2 dt) + int |grad u_new|^2 - int n u_new . grad phi`.
pub fn discrete_energy_residual(
    u_old: &VectorField,
    u_new: &VectorField,
    n: &ScalarField,
    params: &FluidStepParams,
) -> f64 {
    let dk = face_inner(u_new, u_new) - face_inner(u_old, u_old);
    dk / (2.0 * params.dt) + velocity_grad_energy(u_new) - buoyancy_work(u_new, n, &params.phi)
}

/// Scale against which the energy residual is judged:
/// `int |grad u_new|^2 + |int n u_new . grad phi|`.
pub fn energy_scale(u_new: &VectorField, n: &ScalarField, params: &FluidStepParams) -> f64 {
    velocity_grad_energy(u_new) + buoyancy_work(u_new, n, &params.phi).abs()
}
