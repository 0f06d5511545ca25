//! Monitored functionals: masses, the coupled `(n+eps)^(m-1)` / `c^2`
//! Lyapunov-type functional and its dissipation, unit-time window
//! integrals, the space-time exponent algebra and the ODE comparison bound.

use crate::error::DomainError;
use crate::fields::{integrate, kinetic, lp_norm, scalar_grad_energy, velocity_grad_energy};
use crate::fields::{ScalarField, VectorField};

const FOUR_THIRDS: f64 = 4.0 / 3.0;
const SEVEN_SIXTHS: f64 = 7.0 / 6.0;

fn check_m(m: f64) -> Result<(), DomainError> {
    if m > FOUR_THIRDS && m.is_finite() {
        Ok(())
    } else {
        Err(DomainError::DiffusionExponent(m))
    }
}

/// The functional `y`:
/// * `m in (4/3, 2)`: `-1/(m-1) int (n+eps)^(m-1) + (2-m)/m int c^2`
/// * `m > 2`: `1/(m-1) int (n+eps)^(m-1) + (m-2)/m int c^2`
/// * `m = 2`: `int n ln n + 1/2 int c^2`
pub fn functional_y(n: &ScalarField, c: &ScalarField, epsilon: f64, m: f64) -> Result<f64, DomainError> {
    check_m(m)?;
    let c2 = integrate(&c.map(|v| v * v));
    if m == 2.0 {
        let ent = integrate(&n.map(|v| if v > 0.0 { v * v.ln() } else { 0.0 }));
        return Ok(ent + 0.5 * c2);
    }
    let pw = integrate(&n.map(|v| (v + epsilon).powf(m - 1.0)));
    Ok(if m < 2.0 {
        -pw / (m - 1.0) + (2.0 - m) / m * c2
    } else {
        pw / (m - 1.0) + (m - 2.0) / m * c2
    })
}

/// Prefactors `(k_n, k_c)` of the dissipation in each branch.
pub fn dissipation_prefactors(m: f64) -> Result<(f64, f64), DomainError> {
    check_m(m)?;
    let q = 4.0 * (m - 1.0) * (m - 1.0);
    Ok(if m == 2.0 {
        (0.5, 0.25)
    } else if m < 2.0 {
        (m * (2.0 - m) / q, (2.0 - m) / (2.0 * m))
    } else {
        (m * (m - 2.0) / q, (m - 2.0) / (2.0 * m))
    })
}

/// The dissipation `g = k_n int |grad (n+eps)^(m-1)|^2 + k_c int |grad c|^2`.
pub fn dissipation_g(n: &ScalarField, c: &ScalarField, epsilon: f64, m: f64) -> Result<f64, DomainError> {
    let (kn, kc) = dissipation_prefactors(m)?;
    Ok(kn * grad_power_energy(n, epsilon, m) + kc * scalar_grad_energy(c))
}

/// `int |grad (n+eps)^(m-1)|^2`.
pub fn grad_power_energy(n: &ScalarField, epsilon: f64, m: f64) -> f64 {
    scalar_grad_energy(&n.map(|v| (v + epsilon).powf(m - 1.0)))
}

/// Exponent `2p(m - 7/6)/(p - 1)` of the space-time bound on `||n+eps||_p`,
/// defined for `m > 7/6` and `p in (1, 6(m-1))`.
pub fn st_bound_exponent(m: f64, p: f64) -> Result<f64, DomainError> {
    if !(m > SEVEN_SIXTHS && p > 1.0 && p < 6.0 * (m - 1.0)) {
        return Err(DomainError::ExponentOutOfRange { m, p });
    }
    Ok(2.0 * p * (m - SEVEN_SIXTHS) / (p - 1.0))
}

/// Interpolation exponent `a = (p-1)/p * 6(m-1)/(6m-7)` for
/// `m > 7/6`, `p in (1, 6(m-1)]`; the closed right end gives `a = 1`.
pub fn gn_interp_exponent(m: f64, p: f64) -> Result<f64, DomainError> {
    let top = 6.0 * (m - 1.0);
    if !(m > SEVEN_SIXTHS && p > 1.0 && p <= top) {
        return Err(DomainError::ExponentOutOfRange { m, p });
    }
    if p == top {
        return Ok(1.0);
    }
    Ok((p - 1.0) / p * top / (6.0 * m - 7.0))
}

/// `max{y0 + b, b/a + 2b}` for `y' + a y <= h` with unit-window sums of
/// `h` at most `b`.
pub fn ode_comparison_bound(y0: f64, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b >= 0.0, "ode_comparison_bound needs a > 0, b >= 0");
    (y0 + b).max(b / a + 2.0 * b)
}

/// True iff every sample stays below the comparison bound started from the
/// first sample, with relative slack `1e-9`.
pub fn verify_ode_comparison(y_samples: &[f64], a: f64, b: f64) -> bool {
    let Some(&y0) = y_samples.first() else {
        return true;
    };
    let bound = ode_comparison_bound(y0, a, b) * (1.0 + 1e-9);
    y_samples.iter().all(|&y| y <= bound)
}

/// Exponent `p = 2m - 4/3` for which the space-time power equals `p`.
pub fn window_lp_exponent(m: f64) -> f64 {
    2.0 * m - FOUR_THIRDS
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub mass_n: f64,
    pub l1_c: f64,
    pub y: f64,
    pub g: f64,
    pub energy_u: f64,
}

/// Unit-time window `[t_start, t_start + 1]` accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowRecord {
    pub t_start: f64,
    pub int_grad_nm1_sq: f64,
    pub int_grad_c_sq: f64,
    pub int_grad_u_sq: f64,
    /// Exponent `p` of the accumulated `int ||n+eps||_p^p`.
    pub st_power_p: f64,
    pub value: f64,
    /// `int ||n+eps||_{6/5}^2`.
    pub l65_square: f64,
    /// Time covered so far.
    pub covered: f64,
    pub complete: bool,
}

impl WindowRecord {
    fn new(t_start: f64, p: f64) -> Self {
        WindowRecord {
            t_start,
            int_grad_nm1_sq: 0.0,
            int_grad_c_sq: 0.0,
            int_grad_u_sq: 0.0,
            st_power_p: p,
            value: 0.0,
            l65_square: 0.0,
            covered: 0.0,
            complete: false,
        }
    }
}

/// Pointwise rates integrated over windows.
#[derive(Clone, Copy, Debug)]
struct Rates {
    grad_nm1: f64,
    grad_c: f64,
    grad_u: f64,
    power: f64,
    l65: f64,
}

/// Time series of monitored quantities and unit-window integrals.
#[derive(Clone, Debug)]
pub struct DiagnosticsLedger {
    pub m: f64,
    pub epsilon: f64,
    pub samples: Vec<Sample>,
    pub windows: Vec<WindowRecord>,
    open: Option<WindowRecord>,
}

/// Slack below which a step is considered to end exactly on a window edge.
const EDGE_SLACK: f64 = 1e-9;

impl DiagnosticsLedger {
    pub fn new(m: f64, epsilon: f64) -> Self {
        DiagnosticsLedger {
            m,
            epsilon,
            samples: Vec::new(),
            windows: Vec::new(),
            open: None,
        }
    }

    /// Evaluates one sample row; functionals outside their range are NaN.
    pub fn sample(&self, t: f64, n: &ScalarField, c: &ScalarField, u: &VectorField) -> Sample {
        Sample {
            t,
            mass_n: integrate(n),
            l1_c: integrate(&c.map(f64::abs)),
            y: functional_y(n, c, self.epsilon, self.m).unwrap_or(f64::NAN),
            g: dissipation_g(n, c, self.epsilon, self.m).unwrap_or(f64::NAN),
            energy_u: kinetic(u),
        }
    }

    fn rates(&self, n: &ScalarField, c: &ScalarField, u: &VectorField) -> Rates {
        let eps = self.epsilon;
        let p = window_lp_exponent(self.m);
        let shifted = n.map(|v| v + eps);
        Rates {
            grad_nm1: grad_power_energy(n, eps, self.m),
            grad_c: scalar_grad_energy(c),
            grad_u: velocity_grad_energy(u),
            power: integrate(&shifted.map(|v| v.abs().powf(p))),
            l65: lp_norm(&shifted, 1.2).map(|v| v * v).unwrap_or(f64::NAN),
        }
    }

    /// Appends a sample at time `t` and credits `dt` worth of the current
    /// rates to the unit windows covering `(t - dt, t]`. The initial state
    /// is recorded with `dt = 0`.
    pub fn record_step(&mut self, t: f64, dt: f64, n: &ScalarField, c: &ScalarField, u: &VectorField) {
        if let Some(last) = self.samples.last() {
            assert!(t > last.t, "sample times must increase");
        }
        let s = self.sample(t, n, c, u);
        self.samples.push(s);
        if dt <= 0.0 {
            return;
        }
        let r = self.rates(n, c, u);
        let p = window_lp_exponent(self.m);
        let mut start = t - dt;
        while t - start > EDGE_SLACK {
            let k = (start + EDGE_SLACK).floor();
            let edge = k + 1.0;
            let end = if edge < t - EDGE_SLACK { edge } else { t };
            let w = self.open.get_or_insert_with(|| WindowRecord::new(k, p));
            if w.t_start != k {
                let mut done = self.open.take().unwrap();
                done.complete = done.covered >= 1.0 - 1e-6;
                self.windows.push(done);
                self.open = Some(WindowRecord::new(k, p));
            }
            let w = self.open.as_mut().unwrap();
            let span = end - start;
            w.int_grad_nm1_sq += span * r.grad_nm1;
            w.int_grad_c_sq += span * r.grad_c;
            w.int_grad_u_sq += span * r.grad_u;
            w.value += span * r.power;
            w.l65_square += span * r.l65;
            w.covered += span;
            start = end;
        }
    }

    /// Closes the open window (complete only if it covered a full unit).
    pub fn finish(&mut self) {
        if let Some(mut w) = self.open.take() {
            w.complete = w.covered >= 1.0 - 1e-6;
            self.windows.push(w);
        }
    }

    pub fn complete_windows(&self) -> impl Iterator<Item = &WindowRecord> {
        self.windows.iter().filter(|w| w.complete)
    }

    pub fn sup_y(&self) -> f64 {
        self.samples.iter().map(|s| s.y).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_energy(&self) -> f64 {
        self.samples.iter().map(|s| s.energy_u).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn samples_csv(&self) -> String {
        let mut out = String::from("t,mass_n,l1_c,y,g,energy_u\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{:.6},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}\n",
                s.t, s.mass_n, s.l1_c, s.y, s.g, s.energy_u
            ));
        }
        out
    }

    pub fn windows_csv(&self) -> String {
        let mut out = String::from("t_start,int_grad_nm1_sq,int_grad_c_sq,int_grad_u_sq,st_power_p,value\n");
        for w in &self.windows {
            out.push_str(&format!(
                "{:.1},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}\n",
                w.t_start, w.int_grad_nm1_sq, w.int_grad_c_sq, w.int_grad_u_sq, w.st_power_p, w.value
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use approx::assert_relative_eq;

    fn unit3() -> Grid {
        Grid::unit(&[4, 4, 4]).unwrap()
    }

    #[test]
    fn y_branch_arithmetic() {
        let g = unit3();
        let zero = ScalarField::zeros(&g);
        let one = ScalarField::constant(&g, 1.0);
        assert_relative_eq!(functional_y(&zero, &zero, 1.0, 1.5).unwrap(), -2.0, epsilon = 1e-14);
        assert_relative_eq!(functional_y(&one, &one, 0.0, 1.5).unwrap(), -5.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(functional_y(&one, &one, 0.0, 3.0).unwrap(), 5.0 / 6.0, epsilon = 1e-14);
        // entropy branch: 1 ln 1 = 0
        assert_relative_eq!(functional_y(&one, &one, 0.0, 2.0).unwrap(), 0.5, epsilon = 1e-14);
        assert!(functional_y(&one, &one, 0.0, 4.0 / 3.0).is_err());
        assert!(dissipation_g(&one, &one, 0.0, 1.2).is_err());
    }

    #[test]
    fn g_prefactors_and_constants() {
        let (kn, kc) = dissipation_prefactors(1.5).unwrap();
        assert_relative_eq!(kn, 0.75, epsilon = 1e-15);
        assert_relative_eq!(kc, 0.5 / 3.0, epsilon = 1e-15);
        let g = unit3();
        let k = ScalarField::constant(&g, 2.0);
        assert_eq!(dissipation_g(&k, &k, 0.1, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn g_ramp_hand_sum() {
        // 8 cells along x (h = 1/8), 4 along y (h = 1/4), unit box.
        let g = Grid::unit(&[8, 4]).unwrap();
        let n = ScalarField::from_fn(&g, |x| ((x[0] * 8.0) as usize) as f64);
        let c = ScalarField::from_fn(&g, |x| 0.5 * ((x[0] * 8.0) as usize) as f64);
        let (m, eps) = (1.5, 0.25);
        // hand computation: per x-face pair (i, i+1), squared difference of
        // sqrt(i+eps) divided by h^2 times cell volume, 4 rows
        let h = 0.125;
        let vol = h * 0.25;
        let mut s_n = 0.0;
        let mut s_c = 0.0;
        for i in 0..7 {
            let d = ((i + 1) as f64 + eps).sqrt() - (i as f64 + eps).sqrt();
            s_n += 4.0 * vol * (d / h).powi(2);
            s_c += 4.0 * vol * (0.5 / h).powi(2);
        }
        let expect = 0.75 * s_n + s_c / 6.0;
        assert_relative_eq!(dissipation_g(&n, &c, eps, m).unwrap(), expect, max_relative = 1e-13);
    }

    #[test]
    fn exponent_anchors() {
        assert!((st_bound_exponent(4.0 / 3.0, 1.2).unwrap() - 2.0).abs() < 1e-12);
        assert!((st_bound_exponent(1.5, 1.2).unwrap() - 4.0).abs() < 1e-12);
        assert!((st_bound_exponent(5.0 / 3.0, 2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((gn_interp_exponent(1.5, 2.0).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(gn_interp_exponent(1.5, 3.0).unwrap(), 1.0);
        assert!(gn_interp_exponent(1.5, 1.0 + 1e-12).unwrap() < 1e-11);
        assert!(st_bound_exponent(1.5, 3.0).is_err());
        assert!(st_bound_exponent(1.5, 1.0).is_err());
        assert!(gn_interp_exponent(1.1, 1.5).is_err());
    }

    #[test]
    fn window_exponent_is_self_consistent() {
        for m in [1.2, 1.4, 1.5, 1.8, 2.5] {
            let p = window_lp_exponent(m);
            assert!((st_bound_exponent(m, p).unwrap() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn ode_bound_values() {
        assert_eq!(ode_comparison_bound(0.0, 1.0, 1.0), 3.0);
        assert_eq!(ode_comparison_bound(5.0, 0.5, 1.0), 6.0);
        assert!((ode_comparison_bound(2.0, 1.0, 1e-12) - 2.0).abs() < 1e-11);
        assert!(verify_ode_comparison(&[2.0; 10], 1.0, 2.0));
        assert!(!verify_ode_comparison(&[0.0, 10.0], 1.0, 1.0));
    }

    #[test]
    fn windows_split_steps_at_integer_times() {
        let g = Grid::unit(&[4, 4]).unwrap();
        let n = ScalarField::from_fn(&g, |x| 1.0 + x[0]);
        let c = ScalarField::from_fn(&g, |x| x[1]);
        let u = VectorField::zeros(&g);
        let mut led = DiagnosticsLedger::new(1.5, 0.1);
        led.record_step(0.0, 0.0, &n, &c, &u);
        let dt = 0.3;
        let mut t = 0.0;
        for _ in 0..8 {
            t += dt;
            led.record_step(t, dt, &n, &c, &u);
        }
        led.finish();
        // t_end = 2.4: windows [0,1], [1,2] complete, [2,3] partial
        assert_eq!(led.windows.len(), 3);
        assert!(led.windows[0].complete && led.windows[1].complete && !led.windows[2].complete);
        let rate = scalar_grad_energy(&c);
        assert_relative_eq!(led.windows[0].int_grad_c_sq, rate, max_relative = 1e-12);
        assert_relative_eq!(led.windows[2].covered, 0.4, max_relative = 1e-9);
        assert_eq!(led.samples.len(), 9);
        assert!(led.samples_csv().starts_with("t,mass_n,l1_c,y,g,energy_u\n"));
        assert_eq!(led.windows_csv().lines().count(), 4);
    }

    #[test]
    fn identical_states_identical_rows() {
        let g = Grid::unit(&[5, 5]).unwrap();
        let n = ScalarField::from_fn(&g, |x| 2.0 + x[0] * x[1]);
        let c = ScalarField::from_fn(&g, |x| x[1]);
        let u = VectorField::zeros(&g);
        let led = DiagnosticsLedger::new(1.6, 0.05);
        let mut a = led.sample(1.0, &n, &c, &u);
        let b = led.sample(1.0, &n, &c, &u);
        assert_eq!(a, b);
        a.t = 0.0;
        assert_ne!(a, b);
    }
}
