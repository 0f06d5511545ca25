use chemoflow::config::{CellInit, FluidInit, SimConfig};
use chemoflow::error::{RunError, SolverError};
use chemoflow::experiments::{
    certify_trajectory, run_epsilon_sweep, run_mms, run_regime_compare, run_single, summarize_sweep,
};
use chemoflow::fields::integrate;
use chemoflow::manufactured::MmsMode;
use chemoflow::trajectory::TrajectoryRecord;

/// 8^3 box, short horizon, default bump/cosine/vortex data.
fn small() -> SimConfig {
    let mut c = SimConfig::reference();
    c.grid.dims = vec![8, 8, 8];
    c.time.dt = 2e-3;
    c.time.t_end = 0.1;
    c.time.snapshot_interval = 0.01;
    c
}

#[test]
fn steady_constants_stay_put() {
    let cfg = SimConfig::steady(0.7);
    let out = run_single(&cfg).unwrap();
    for s in &out.trajectory.snapshots {
        assert!((s.n.max() - 0.7).abs() < 1e-13 && (s.n.min() - 0.7).abs() < 1e-13);
        assert!((s.c.max() - 0.7).abs() < 1e-13 && (s.c.min() - 0.7).abs() < 1e-13);
        assert!(s.u.max_abs() < 1e-13);
    }
    assert!(out.stats.max_mass_drift < 1e-12);
}

#[test]
fn gated_run_conserves_and_records() {
    let out = run_single(&small()).unwrap();
    assert_eq!(out.stats.steps, 50);
    assert_eq!(out.trajectory.snapshots.len(), 11);
    let m0 = integrate(&out.trajectory.snapshots[0].n);
    let m1 = integrate(&out.trajectory.snapshots[10].n);
    assert!((m1 - m0).abs() <= 1e-12 * m0);
    assert!(out.stats.min_n >= 0.0 && out.stats.min_c >= 0.0);
    assert!(out.stats.max_divergence <= 1e-8);
    let csv = out.ledger.samples_csv();
    assert_eq!(csv.lines().count(), 52);
}

#[test]
fn runs_are_bitwise_deterministic() {
    let a = run_single(&small()).unwrap();
    let b = run_single(&small()).unwrap();
    assert_eq!(a.ledger.samples_csv(), b.ledger.samples_csv());
}

#[test]
fn cfl_violation_aborts_at_first_step() {
    let mut cfg = small();
    cfg.time.dt = 1e-2;
    cfg.time.snapshot_interval = 1e-2;
    cfg.initial.u = FluidInit::Vortex { amplitude: 20.0 };
    match run_single(&cfg) {
        Err(RunError::Solver {
            step: 0,
            source: SolverError::CflViolation { .. },
        }) => {}
        other => panic!("expected CFL violation at step 0, got {other:?}"),
    }
}

#[test]
fn invariant_violation_reports_step_and_dump() {
    let mut cfg = small();
    cfg.tolerances.mass_drift = -1.0;
    match run_single(&cfg) {
        Err(RunError::Invariant { step, what, dump }) => {
            assert_eq!(step, 0);
            assert!(what.contains("mass"), "{what}");
            assert!(dump.contains("max_mass_drift"), "{dump}");
        }
        other => panic!("expected invariant failure, got {other:?}"),
    }
}

#[test]
fn sweep_of_identical_epsilons_has_no_variation() {
    let cfg = small();
    let rep = run_epsilon_sweep(&cfg, &[0.01, 0.01, 0.01]).unwrap();
    assert_eq!(rep.variation, 0.0);
    assert_eq!(rep.envelope, 0.0);
    assert_eq!(rep.cauchy_l1, 0.0);
    assert!(rep.passed);
}

#[test]
fn sweep_rejects_increasing_epsilons() {
    assert!(run_epsilon_sweep(&small(), &[0.01, 0.1, 0.03]).is_err());
    assert!(run_epsilon_sweep(&small(), &[0.1, 0.01]).is_err());
}

#[test]
fn summarized_sweep_matches_direct_sweep() {
    let cfg = small();
    let eps = [0.1, 0.03, 0.01];
    let direct = run_epsilon_sweep(&cfg, &eps).unwrap();
    let outs: Vec<_> = eps
        .iter()
        .map(|&e| {
            let mut c = cfg.clone();
            c.model.epsilon = e;
            run_single(&c).unwrap()
        })
        .collect();
    assert_eq!(summarize_sweep(&cfg, &eps, &outs).unwrap(), direct);
}

#[test]
fn steady_manufactured_study_is_exact() {
    let mut cfg = small();
    cfg.mms.base_cells = 8;
    cfg.mms.levels = 2;
    cfg.mms.t_end = 0.125;
    let rep = run_mms(&cfg, &[MmsMode::Steady], 2).unwrap();
    let st = rep.study(MmsMode::Steady).unwrap();
    for l in &st.levels {
        assert!(l.err_n <= 1e-12 && l.err_c <= 1e-12, "{l:?}");
        // velocity noise is set by the projection tolerance
        assert!(l.err_u <= cfg.tolerances.tol_weak, "{l:?}");
    }
    assert!(st.passed);
}

#[test]
fn signal_manufactured_study_converges_at_second_order() {
    let mut cfg = small();
    cfg.mms.base_cells = 8;
    cfg.mms.levels = 3;
    cfg.mms.ndim = 2;
    cfg.mms.t_end = 0.0625;
    let rep = run_mms(&cfg, &[MmsMode::Signal], 3).unwrap();
    let st = rep.study(MmsMode::Signal).unwrap();
    assert!(st.order >= 1.8, "order {}", st.order);
    assert!(rep.to_text().contains("Signal"));
}

#[test]
fn compare_flags_out_of_theory_exponent() {
    let mut cfg = small();
    cfg.model.m = 1.3;
    cfg.time.t_end = 0.04;
    cfg.certify.test_functions = 4;
    let rep = run_regime_compare(&cfg).unwrap();
    assert_eq!(rep.sections.len(), 2);
    assert!(rep.sections[0].banner.as_deref().unwrap().contains("OUT OF THEORY"));
    assert!(rep.sections[1].banner.is_none());
    assert!(!rep.sections[1].n_weak_decay.is_empty());
    let text = rep.to_text();
    assert!(text.contains("!! OUT OF THEORY"));
    assert_eq!(text, run_regime_compare(&cfg).unwrap().to_text());
}

#[test]
fn stored_trajectory_certifies_identically() {
    let mut cfg = small();
    cfg.certify.test_functions = 6;
    let out = run_single(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.trajectory.save(dir.path()).unwrap();
    let back = TrajectoryRecord::load(dir.path()).unwrap();
    let a = certify_trajectory(&out.trajectory, &cfg).unwrap();
    let b = certify_trajectory(&back, &cfg).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert!(a.to_text().lines().last().unwrap().starts_with("overall,"));
}

#[test]
fn constant_initial_cells_keep_their_mass() {
    let mut cfg = small();
    cfg.initial.n = CellInit::Constant { value: 2.0 };
    let out = run_single(&cfg).unwrap();
    let last = out.trajectory.snapshots.last().unwrap();
    assert!((integrate(&last.n) - 2.0).abs() < 1e-12);
}
