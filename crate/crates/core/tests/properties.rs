//! Randomized invariants of the steppers, the exponent algebra and the ODE
//! comparison bound.

mod common;

use chemoflow::cell::{step_n, CellStepParams};
use chemoflow::diagnostics::{gn_interp_exponent, ode_comparison_bound, st_bound_exponent, verify_ode_comparison};
use chemoflow::fields::{curl_of_potential, integrate, Grid, ScalarField, VectorField};
use chemoflow::fluid::{max_divergence, project};
use chemoflow::signal::step_c;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scalar(grid: &Grid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
    let vals: Vec<f64> = (0..grid.num_cells()).map(|_| rng.random_range(lo..hi)).collect();
    ScalarField::from_interior(grid, &vals)
}

/// Small discretely solenoidal no-slip flow from a random node potential.
fn random_flow(grid: &Grid, rng: &mut ChaCha8Rng, amp: f64) -> VectorField {
    let coeffs: Vec<f64> = (0..4).map(|_| rng.random_range(-amp..amp)).collect();
    curl_of_potential(grid, |c, x| {
        if c != 2 {
            return 0.0;
        }
        let s = |v: f64, k: f64| (k * std::f64::consts::PI * v).sin().powi(2);
        coeffs[0] * s(x[0], 1.0) * s(x[1], 1.0) + coeffs[1] * s(x[0], 2.0) * s(x[1], 1.0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cell_step_conserves_mass_and_sign(
        seed in any::<u64>(),
        m in 1.35f64..2.5,
        eps in 0.001f64..1.0,
        zero_spots in any::<bool>(),
    ) {
        let grid = Grid::unit(&[8, 6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut n = random_scalar(&grid, &mut rng, 0.0, 2.0);
        if zero_spots {
            n = n.map(|v| if v < 0.6 { 0.0 } else { v });
        }
        let c = random_scalar(&grid, &mut rng, 0.0, 1.0);
        let u = random_flow(&grid, &mut rng, 0.05);
        let params = CellStepParams::new(m, eps, 2e-3).unwrap();
        let out = step_n(&n, &c, &u, &params).unwrap();
        let (m0, m1) = (integrate(&n), integrate(&out));
        prop_assert!((m1 - m0).abs() <= 1e-12 * m0.max(1.0), "mass {} -> {}", m0, m1);
        prop_assert!(out.min() >= 0.0);
    }

    #[test]
    fn signal_step_keeps_sign_and_budget(seed in any::<u64>(), dt in 1e-4f64..0.05) {
        let grid = Grid::unit(&[6, 7, 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = random_scalar(&grid, &mut rng, 0.0, 3.0);
        let c = random_scalar(&grid, &mut rng, 0.0, 2.0);
        let u = VectorField::zeros(&grid);
        let out = step_c(&c, &n, &u, dt, None).unwrap();
        prop_assert!(out.min() >= 0.0);
        // (1 + dt) int c_new = int c + dt int n
        let expected = (integrate(&c) + dt * integrate(&n)) / (1.0 + dt);
        prop_assert!((integrate(&out) - expected).abs() <= 1e-8 * expected);
    }

    #[test]
    fn projection_is_solenoidal_and_idempotent(seed in any::<u64>()) {
        let grid = Grid::new(&[6, 5, 4], &[1.0, 0.8, 0.6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = VectorField::zeros(&grid);
        for a in 0..3 {
            let k = u.interior_vec(a).len();
            let v: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            u.set_interior(a, &v);
        }
        u.apply_bc();
        let mut warm = Vec::new();
        let (p, _) = project(&u, 1e-9, &mut warm).unwrap();
        prop_assert!(max_divergence(&p) <= 1e-9);
        let (pp, _) = project(&p, 1e-9, &mut Vec::new()).unwrap();
        prop_assert!(pp.axpy(-1.0, &p).max_abs() <= 1e-8);
    }

    #[test]
    fn exponent_domains(m in 0.5f64..3.0, p in 0.5f64..12.0) {
        let st_ok = m > 7.0 / 6.0 && p > 1.0 && p < 6.0 * (m - 1.0);
        prop_assert_eq!(st_bound_exponent(m, p).is_ok(), st_ok);
        let gn_ok = m > 7.0 / 6.0 && p > 1.0 && p <= 6.0 * (m - 1.0);
        prop_assert_eq!(gn_interp_exponent(m, p).is_ok(), gn_ok);
        if gn_ok {
            let a = gn_interp_exponent(m, p).unwrap();
            prop_assert!(a > 0.0 && a <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn ode_comparison_holds_for_euler_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let a = rng.random_range(0.05..5.0);
        let b = rng.random_range(0.0..3.0);
        let y0 = rng.random_range(-2.0..4.0);
        let ys = common::euler_trajectory(&mut rng, a, b, y0, 1e-3, 6.0);
        assert!(verify_ode_comparison(&ys, a, b), "a = {a}, b = {b}, y0 = {y0}");
        let bound = ode_comparison_bound(y0, a, b);
        assert_eq!(bound, (y0 + b).max(b / a + 2.0 * b));
    }
}
