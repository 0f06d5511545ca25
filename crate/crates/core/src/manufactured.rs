//! Manufactured solutions on the unit box and their hand-derived sources.
//!
//! n = 1.5 + 0.5 cos(pi x) cos(pi y) e^{-t}
//! c = 1 + 0.25 cos(pi x) e^{-t}
//! u = curl (0, 0, A e^{-t} s(x) s(y) s(z)),  s = sin^2(pi .), pressure 0
//!
//! In 2D the factor s(z) is dropped. The velocity vanishes on every wall and
//! its discrete version is the discrete curl of the same potential.
//!
//! Decoupled modes manufacture one unknown and prescribe the others so that
//! the stepped equation sees no upwinded transport: the cell mode holds
//! `c = 1`, `u = 0`; the signal mode prescribes the exact `n` and `u = 0`;
//! the fluid mode prescribes the exact `n` (buoyancy) and `c`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::fields::{curl_of_potential, Grid, ScalarField, VectorField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MmsMode {
    Coupled,
    Cell,
    Signal,
    Fluid,
    /// `n = c = value`, `u = 0`, no sources.
    Steady,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manufactured {
    pub mode: MmsMode,
    pub ndim: usize,
    pub m: f64,
    pub epsilon: f64,
    /// Potential `phi = gravity * x_1`.
    pub gravity: f64,
    /// Amplitude `A` of the velocity potential.
    pub amplitude: f64,
    /// Constant state of the steady mode.
    pub steady_value: f64,
}

fn s0(x: f64) -> f64 {
    let v = (PI * x).sin();
    v * v
}
fn s1(x: f64) -> f64 {
    PI * (2.0 * PI * x).sin()
}
fn s2(x: f64) -> f64 {
    2.0 * PI * PI * (2.0 * PI * x).cos()
}
fn s3(x: f64) -> f64 {
    -4.0 * PI * PI * PI * (2.0 * PI * x).sin()
}

/// Velocity, its gradient and Laplacian at one point (first two components;
/// the third vanishes).
struct VelocityJet {
    u: [f64; 2],
    du: [[f64; 3]; 2],
    lap: [f64; 2],
}

impl Manufactured {
    pub fn new(mode: MmsMode, ndim: usize, m: f64, epsilon: f64) -> Self {
        Manufactured {
            mode,
            ndim,
            m,
            epsilon,
            gravity: 1.0,
            amplitude: 0.5,
            steady_value: 1.0,
        }
    }

    pub fn steps_n(&self) -> bool {
        matches!(self.mode, MmsMode::Coupled | MmsMode::Cell | MmsMode::Steady)
    }

    pub fn steps_c(&self) -> bool {
        matches!(self.mode, MmsMode::Coupled | MmsMode::Signal | MmsMode::Steady)
    }

    pub fn steps_u(&self) -> bool {
        matches!(self.mode, MmsMode::Coupled | MmsMode::Fluid | MmsMode::Steady)
    }

    fn n_jet(&self, x: [f64; 3], t: f64) -> (f64, f64, [f64; 2], f64) {
        let e = 0.5 * (-t).exp();
        let (cx, sx) = ((PI * x[0]).cos(), (PI * x[0]).sin());
        let (cy, sy) = ((PI * x[1]).cos(), (PI * x[1]).sin());
        let n = 1.5 + e * cx * cy;
        let n_t = -e * cx * cy;
        let grad = [-PI * e * sx * cy, -PI * e * cx * sy];
        let lap = -2.0 * PI * PI * e * cx * cy;
        (n, n_t, grad, lap)
    }

    fn c_jet(&self, x: [f64; 3], t: f64) -> (f64, f64, f64, f64) {
        let e = 0.25 * (-t).exp();
        let c = 1.0 + e * (PI * x[0]).cos();
        let c_t = -e * (PI * x[0]).cos();
        let c_x = -PI * e * (PI * x[0]).sin();
        let lap = -PI * PI * e * (PI * x[0]).cos();
        (c, c_t, c_x, lap)
    }

    fn u_jet(&self, x: [f64; 3], t: f64) -> VelocityJet {
        let e = self.amplitude * (-t).exp();
        let (z0, z1, z2) = if self.ndim == 3 {
            (s0(x[2]), s1(x[2]), s2(x[2]))
        } else {
            (1.0, 0.0, 0.0)
        };
        let (x0, x1, x2, x3) = (s0(x[0]), s1(x[0]), s2(x[0]), s3(x[0]));
        let (y0, y1, y2, y3) = (s0(x[1]), s1(x[1]), s2(x[1]), s3(x[1]));
        VelocityJet {
            u: [e * x0 * y1 * z0, -e * x1 * y0 * z0],
            du: [
                [e * x1 * y1 * z0, e * x0 * y2 * z0, e * x0 * y1 * z1],
                [-e * x2 * y0 * z0, -e * x1 * y1 * z0, -e * x1 * y0 * z1],
            ],
            lap: [
                e * (x2 * y1 * z0 + x0 * y3 * z0 + x0 * y1 * z2),
                -e * (x3 * y0 * z0 + x1 * y2 * z0 + x1 * y0 * z2),
            ],
        }
    }

    pub fn n_exact(&self, x: [f64; 3], t: f64) -> f64 {
        match self.mode {
            MmsMode::Steady => self.steady_value,
            _ => self.n_jet(x, t).0,
        }
    }

    pub fn c_exact(&self, x: [f64; 3], t: f64) -> f64 {
        match self.mode {
            MmsMode::Steady => self.steady_value,
            MmsMode::Cell => 1.0,
            _ => self.c_jet(x, t).0,
        }
    }

    pub fn u_exact(&self, a: usize, x: [f64; 3], t: f64) -> f64 {
        match self.mode {
            MmsMode::Coupled | MmsMode::Fluid if a < 2 => self.u_jet(x, t).u[a],
            _ => 0.0,
        }
    }

    fn has_velocity(&self) -> bool {
        matches!(self.mode, MmsMode::Coupled | MmsMode::Fluid)
    }

    /// Source of the cell equation
    /// `n_t + u.grad n = div(D(n) grad n) - div(chi(n) grad c) + S_n`.
    pub fn source_n(&self, x: [f64; 3], t: f64) -> f64 {
        if !matches!(self.mode, MmsMode::Coupled | MmsMode::Cell) {
            return 0.0;
        }
        let (m, eps) = (self.m, self.epsilon);
        let (n, n_t, gn, lap_n) = self.n_jet(x, t);
        let grad_sq = gn[0] * gn[0] + gn[1] * gn[1];
        let d = m * (n + eps).powf(m - 1.0);
        let d_prime = m * (m - 1.0) * (n + eps).powf(m - 2.0);
        let mut s = n_t - d_prime * grad_sq - d * lap_n;
        if self.mode == MmsMode::Coupled {
            let (_, _, c_x, lap_c) = self.c_jet(x, t);
            let chi = n / (1.0 + eps * n).powi(3);
            let chi_prime = (1.0 - 2.0 * eps * n) / (1.0 + eps * n).powi(4);
            s += chi_prime * gn[0] * c_x + chi * lap_c;
            let v = self.u_jet(x, t);
            s += v.u[0] * gn[0] + v.u[1] * gn[1];
        }
        s
    }

    /// Source of `c_t + u.grad c = lap c - c + n + S_c`.
    pub fn source_c(&self, x: [f64; 3], t: f64) -> f64 {
        if !matches!(self.mode, MmsMode::Coupled | MmsMode::Signal) {
            return 0.0;
        }
        let (c, c_t, c_x, lap_c) = self.c_jet(x, t);
        let n = self.n_jet(x, t).0;
        let mut s = c_t - lap_c + c - n;
        if self.mode == MmsMode::Coupled {
            s += self.u_jet(x, t).u[0] * c_x;
        }
        s
    }

    /// Source of `u_t + (u.grad) u = lap u + grad P + n grad phi + S_u`.
    pub fn source_u(&self, a: usize, x: [f64; 3], t: f64) -> f64 {
        if !self.has_velocity() || a >= 2 {
            return 0.0;
        }
        let v = self.u_jet(x, t);
        let conv = v.u[0] * v.du[a][0] + v.u[1] * v.du[a][1];
        let buoy = if a == 0 { self.n_jet(x, t).0 * self.gravity } else { 0.0 };
        -v.u[a] + conv - v.lap[a] - buoy
    }

    fn potential(&self, x: [f64; 3], t: f64) -> f64 {
        let z = if self.ndim == 3 { s0(x[2]) } else { 1.0 };
        self.amplitude * (-t).exp() * s0(x[0]) * s0(x[1]) * z
    }

    pub fn n_field(&self, grid: &Grid, t: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.n_exact(x, t))
    }

    pub fn c_field(&self, grid: &Grid, t: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.c_exact(x, t))
    }

    /// Discretely solenoidal velocity: discrete curl of the exact potential.
    pub fn u_field(&self, grid: &Grid, t: f64) -> VectorField {
        if !self.has_velocity() {
            return VectorField::zeros(grid);
        }
        curl_of_potential(grid, |c, x| if c == 2 { self.potential(x, t) } else { 0.0 })
    }

    /// Exact velocity sampled pointwise at the faces (error reference).
    pub fn u_pointwise(&self, grid: &Grid, t: f64) -> VectorField {
        VectorField::from_fn(grid, |a, x| self.u_exact(a, x, t))
    }

    pub fn phi_field(&self, grid: &Grid) -> ScalarField {
        let g = self.gravity;
        ScalarField::from_fn(grid, |x| g * x[0])
    }

    pub fn source_n_field(&self, grid: &Grid, t: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.source_n(x, t))
    }

    pub fn source_c_field(&self, grid: &Grid, t: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.source_c(x, t))
    }

    pub fn source_u_field(&self, grid: &Grid, t: f64) -> VectorField {
        VectorField::from_fn(grid, |a, x| self.source_u(a, x, t))
    }
}
