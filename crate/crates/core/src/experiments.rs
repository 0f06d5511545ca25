//! The canonical studies: a single gated run, the epsilon sweep, the
//! manufactured-solution convergence study and the m-regime comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cell::{step_n, CellStepParams};
use crate::config::SimConfig;
use crate::diagnostics::DiagnosticsLedger;
use crate::error::{ConfigError, ResidualError, RunError};
use crate::fields::{face_inner, integrate, lp_norm, Grid, ScalarField, VectorField};
use crate::fluid::{discrete_energy_residual, energy_scale, max_divergence, FluidStepParams, FluidStepper};
use crate::manufactured::{Manufactured, MmsMode};
use crate::signal::step_c;
use crate::testfn::{CosineMode, TestFunction, TimeCutoff};
use crate::trajectory::{Snapshot, TrajectoryRecord};
use crate::weak::{
    c2_inequality_series, residual_c_weak, residual_n_tested, residual_n_weak, residual_u_weak,
    supersolution_residual, Certificate, CertificateLine, Identity,
};

/// Extremes of the online-checked quantities over a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunStats {
    pub steps: usize,
    /// `max |int n - int n0| / int n0`.
    pub max_mass_drift: f64,
    /// `max int |c| / max(int n0, int c0)`.
    pub max_l1c_ratio: f64,
    pub min_n: f64,
    pub min_c: f64,
    pub max_divergence: f64,
    pub max_energy_residual: f64,
    /// `max residual / (tol_energy scale + energy_floor)`; at most 1 on success.
    pub max_energy_use: f64,
    /// `max (y - (2-m)/m int c^2)`; NaN outside `4/3 < m < 2`.
    pub max_y_excess: f64,
    pub min_dissipation: f64,
}

impl RunStats {
    fn new() -> Self {
        RunStats {
            min_n: f64::INFINITY,
            min_c: f64::INFINITY,
            min_dissipation: f64::INFINITY,
            max_y_excess: f64::NEG_INFINITY,
            max_energy_residual: f64::NEG_INFINITY,
            max_energy_use: f64::NEG_INFINITY,
            ..Default::default()
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "steps,{}\nmax_mass_drift,{:.3e}\nmax_l1c_ratio,{:.12}\nmin_n,{:.6e}\nmin_c,{:.6e}\n\
             max_divergence,{:.3e}\nmax_energy_residual,{:.3e}\nmax_energy_use,{:.3e}\nmax_y_excess,{:.6e}\nmin_dissipation,{:.6e}\n",
            self.steps,
            self.max_mass_drift,
            self.max_l1c_ratio,
            self.min_n,
            self.min_c,
            self.max_divergence,
            self.max_energy_residual,
            self.max_energy_use,
            self.max_y_excess,
            self.min_dissipation
        )
    }
}

/// Output of [`run_single`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trajectory: TrajectoryRecord,
    pub ledger: DiagnosticsLedger,
    pub stats: RunStats,
}

/// Which invariants are asserted after every step.
#[derive(Clone, Copy, Debug)]
struct Gates {
    conservation: bool,
    mass_drift: f64,
    l1_slack: f64,
    tol_energy: f64,
    energy_floor: f64,
    proj_tol: f64,
}

struct March {
    m: f64,
    epsilon: f64,
    dt: f64,
    steps: usize,
    stride: usize,
    cell: CellStepParams,
    fluid: FluidStepParams,
    mms: Option<Manufactured>,
    gates: Gates,
}

fn solver(step: usize) -> impl Fn(crate::error::SolverError) -> RunError {
    move |source| RunError::Solver { step, source }
}

impl March {
    fn run(
        &self,
        n0: ScalarField,
        c0: ScalarField,
        u0: VectorField,
    ) -> Result<(TrajectoryRecord, DiagnosticsLedger, RunStats), RunError> {
        let grid = *n0.grid();
        let dt_out = self.stride as f64 * self.dt;
        let mut traj = TrajectoryRecord::new(self.m, self.epsilon, dt_out, self.fluid.phi.clone(), self.mms);
        let mut ledger = DiagnosticsLedger::new(self.m, self.epsilon);
        let mut stats = RunStats::new();
        let mass0 = integrate(&n0);
        let l1_bound = mass0.max(integrate(&c0));
        let (mut n, mut c, mut u) = (n0, c0, u0);
        let mut stepper = FluidStepper::new();
        let mut fluid = self.fluid.clone();
        let mut cell = self.cell.clone();
        self.observe(0, &n, &c, &u, mass0, l1_bound, None, &mut stats, &mut ledger)?;
        traj.push(Snapshot {
            t: 0.0,
            n: n.clone(),
            c: c.clone(),
            u: u.clone(),
        });
        for k in 0..self.steps {
            let t = k as f64 * self.dt;
            let t1 = (k + 1) as f64 * self.dt;
            let mms = self.mms;
            let n_new = match mms {
                Some(mm) if !mm.steps_n() => mm.n_field(&grid, t1),
                _ => {
                    cell.mms_source = mms.map(|mm| mm.source_n_field(&grid, t));
                    step_n(&n, &c, &u, &cell).map_err(solver(k))?
                }
            };
            let c_new = match mms {
                Some(mm) if !mm.steps_c() => mm.c_field(&grid, t1),
                _ => {
                    let src = mms.map(|mm| mm.source_c_field(&grid, t1));
                    step_c(&c, &n_new, &u, self.dt, src.as_ref()).map_err(solver(k))?
                }
            };
            let (u_new, energy) = match mms {
                Some(mm) if !mm.steps_u() => (mm.u_field(&grid, t1), None),
                _ => {
                    fluid.mms_source = mms.map(|mm| mm.source_u_field(&grid, t));
                    let (un, _) = stepper.step(&u, &n_new, &fluid).map_err(solver(k))?;
                    let r = discrete_energy_residual(&u, &un, &n_new, &fluid);
                    let s = energy_scale(&un, &n_new, &fluid);
                    (un, Some((r, s)))
                }
            };
            n = n_new;
            c = c_new;
            u = u_new;
            self.observe(k + 1, &n, &c, &u, mass0, l1_bound, energy, &mut stats, &mut ledger)?;
            if (k + 1) % self.stride == 0 {
                traj.push(Snapshot {
                    t: ((k + 1) / self.stride) as f64 * dt_out,
                    n: n.clone(),
                    c: c.clone(),
                    u: u.clone(),
                });
            }
        }
        ledger.finish();
        stats.steps = self.steps;
        Ok((traj, ledger, stats))
    }

    /// Records the state after `step` steps and asserts the invariants.
    #[allow(clippy::too_many_arguments)]
    fn observe(
        &self,
        step: usize,
        n: &ScalarField,
        c: &ScalarField,
        u: &VectorField,
        mass0: f64,
        l1_bound: f64,
        energy: Option<(f64, f64)>,
        stats: &mut RunStats,
        ledger: &mut DiagnosticsLedger,
    ) -> Result<(), RunError> {
        let g = &self.gates;
        let mut bad = Vec::new();
        let (min_n, min_c) = (n.min(), c.min());
        stats.min_n = stats.min_n.min(min_n);
        stats.min_c = stats.min_c.min(min_c);
        if !(min_n >= 0.0 && min_c >= 0.0) {
            bad.push(format!("negative density: min n = {min_n:e}, min c = {min_c:e}"));
        }
        let div = max_divergence(u);
        stats.max_divergence = stats.max_divergence.max(div);
        if !(div <= g.proj_tol) {
            bad.push(format!("divergence {div:e} exceeds {:e}", g.proj_tol));
        }
        if g.conservation {
            let t = step as f64 * self.dt;
            ledger.record_step(t, if step == 0 { 0.0 } else { self.dt }, n, c, u);
            let s = ledger.samples.last().expect("sample recorded");
            let drift = (s.mass_n - mass0).abs() / mass0.abs().max(f64::MIN_POSITIVE);
            stats.max_mass_drift = stats.max_mass_drift.max(drift);
            if !(drift <= g.mass_drift) {
                bad.push(format!("mass drift {drift:e} exceeds {:e}", g.mass_drift));
            }
            let ratio = s.l1_c / l1_bound;
            stats.max_l1c_ratio = stats.max_l1c_ratio.max(ratio);
            if !(ratio <= 1.0 + g.l1_slack) {
                bad.push(format!("int c ratio {ratio} exceeds 1 + {:e}", g.l1_slack));
            }
            let c2 = integrate(&c.map(|v| v * v));
            let excess = s.y - (2.0 - self.m) / self.m * c2;
            stats.max_y_excess = stats.max_y_excess.max(excess);
            stats.min_dissipation = stats.min_dissipation.min(s.g);
            if let Some((r, scale)) = energy {
                let allowed = g.tol_energy * scale + g.energy_floor;
                stats.max_energy_residual = stats.max_energy_residual.max(r);
                stats.max_energy_use = stats.max_energy_use.max(r / allowed);
                if !(r <= allowed) {
                    bad.push(format!(
                        "energy residual {r:e} exceeds {:e} x scale {scale:e} + {:e}",
                        g.tol_energy, g.energy_floor
                    ));
                }
            }
        }
        if bad.is_empty() {
            return Ok(());
        }
        Err(RunError::Invariant {
            step,
            what: bad.join("; "),
            dump: format!("{}\n{}", stats.to_text(), ledger.samples_csv()),
        })
    }
}

fn invalid(e: crate::error::SolverError) -> RunError {
    RunError::Config(ConfigError::Invalid(e.to_string()))
}

/// Time-marches the configured problem with every step invariant asserted
/// online; on the first violation the run stops and nothing is returned.
pub fn run_single(config: &SimConfig) -> Result<RunOutput, RunError> {
    config.validate()?;
    let grid = config.grid()?;
    let dt = config.time.dt;
    let mut cell = CellStepParams::new(config.model.m, config.model.epsilon, dt).map_err(invalid)?;
    cell.cfl_limit = config.numerics.cfl_limit;
    cell.force_cfl = config.numerics.force_cfl;
    cell.face_average = config.numerics.face_average;
    let mut fluid = FluidStepParams::new(config.filter_epsilon(), dt, config.phi(&grid), config.tolerances.proj_tol)
        .map_err(invalid)?;
    fluid.cfl_limit = config.numerics.cfl_limit;
    fluid.force_cfl = config.numerics.force_cfl;
    let tol = &config.tolerances;
    let march = March {
        m: config.model.m,
        epsilon: config.model.epsilon,
        dt,
        steps: config.steps(),
        stride: config.snapshot_stride()?,
        cell,
        fluid,
        mms: None,
        gates: Gates {
            conservation: true,
            mass_drift: tol.mass_drift,
            l1_slack: tol.l1_slack,
            tol_energy: tol.tol_energy,
            energy_floor: tol.energy_floor,
            proj_tol: tol.proj_tol,
        },
    };
    let (trajectory, ledger, stats) =
        march.run(config.initial_n(&grid), config.initial_c(&grid), config.initial_u(&grid))?;
    Ok(RunOutput {
        trajectory,
        ledger,
        stats,
    })
}

/// Cutoff ending at `support_fraction * T` with its descent starting at
/// `flat_fraction` of that, both snapped to snapshot instants.
pub fn snapshot_cutoff(traj: &TrajectoryRecord, support_fraction: f64, flat_fraction: f64) -> TimeCutoff {
    let steps = (traj.snapshots.len() - 1) as f64;
    let cut = (support_fraction * steps).round().max(2.0);
    let flat = (flat_fraction * cut).round().min(cut - 1.0);
    TimeCutoff::new(flat * traj.dt_out, cut * traj.dt_out)
}

/// Deterministic family of random test functions.
pub fn test_functions(grid: &Grid, seed: u64, count: usize, time: TimeCutoff, solenoidal: bool) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            if solenoidal {
                TestFunction::random_solenoidal(&mut rng, grid, time)
            } else {
                TestFunction::random_scalar(&mut rng, grid, time, true)
            }
        })
        .collect()
}

/// Cosine expansions carrying every wavenumber up to 2 on each axis with
/// seeded coefficients of magnitude in `[0.25, 1]`. Unlike the sparse random
/// family they are not orthogonal to any low mode of a smooth solution,
/// which the refinement studies rely on.
pub fn spectral_test_functions(grid: &Grid, seed: u64, count: usize, time: TimeCutoff) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nd = grid.ndim();
    let modes_per = 3usize.pow(nd as u32);
    (0..count)
        .map(|_| {
            let modes = (0..modes_per)
                .map(|j| {
                    let mut k = [0u32; 3];
                    let mut r = j;
                    for kd in k.iter_mut().take(nd) {
                        *kd = (r % 3) as u32;
                        r /= 3;
                    }
                    let mag: f64 = rng.random_range(0.25..1.0);
                    let coeff = if rng.random_bool(0.5) { mag } else { -mag };
                    CosineMode { coeff, k }
                })
                .collect();
            TestFunction::cosine(grid, modes, false, time)
        })
        .collect()
}

/// Very-weak suite: the supersolution inequality for `count` nonnegative
/// test functions and the `c^2` inequality at every snapshot time.
pub fn certify_very_weak(
    traj: &TrajectoryRecord,
    time: TimeCutoff,
    seed: u64,
    count: usize,
    tol_super: f64,
) -> Result<Certificate, ResidualError> {
    let mut cert = Certificate::new(format!("very weak suite, m = {}, epsilon = {}", traj.m, traj.epsilon));
    for (k, phi) in test_functions(&traj.grid, seed, count, time, false).iter().enumerate() {
        let r = supersolution_residual(traj, phi, traj.m)?;
        cert.push(CertificateLine::new(Identity::Supersolution, format!("phi{k:02}"), r, tol_super));
    }
    for (s, r) in traj.snapshots.iter().zip(c2_inequality_series(traj)) {
        cert.push(CertificateLine::new(Identity::C2Inequality, format!("t={:.4}", s.t), r, tol_super));
    }
    Ok(cert)
}

/// Residuals of the equality identities for fixed test functions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeakResiduals {
    pub n_weak: Vec<f64>,
    pub n_tested: Vec<f64>,
    pub c_weak: Vec<f64>,
    pub u_weak: Vec<f64>,
}

/// Root of the sum of squares.
pub fn rss(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Evaluates the requested equality identities with `count` scalar and
/// `count` solenoidal test functions drawn from `seed`.
pub fn weak_residuals(
    traj: &TrajectoryRecord,
    time: TimeCutoff,
    seed: u64,
    count: usize,
    which: &[Identity],
) -> Result<WeakResiduals, ResidualError> {
    let scalars = spectral_test_functions(&traj.grid, seed, count, time);
    let vectors = test_functions(&traj.grid, seed ^ 0x5eed, count, time, true);
    let mut out = WeakResiduals::default();
    for id in which {
        match id {
            Identity::NWeak => {
                out.n_weak = scalars.iter().map(|p| residual_n_weak(traj, p)).collect::<Result<_, _>>()?
            }
            Identity::NTested => {
                out.n_tested = scalars
                    .iter()
                    .map(|p| residual_n_tested(traj, p, traj.epsilon))
                    .collect::<Result<_, _>>()?
            }
            Identity::CWeak => {
                out.c_weak = scalars.iter().map(|p| residual_c_weak(traj, p)).collect::<Result<_, _>>()?
            }
            Identity::UWeak => {
                out.u_weak = vectors.iter().map(|p| residual_u_weak(traj, p)).collect::<Result<_, _>>()?
            }
            _ => {}
        }
    }
    Ok(out)
}

fn rel_variation(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Spread `(max - min) / max |.|` of a series.
fn envelope(v: &[f64]) -> f64 {
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let s = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if s == 0.0 {
        0.0
    } else {
        (hi - lo) / s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub sup_y: f64,
    /// Largest complete unit-window `int int |grad (n+eps)^(m-1)|^2`.
    pub window_grad_nm1: f64,
    /// Largest complete unit-window `int int |grad c|^2`.
    pub window_grad_c: f64,
    pub sup_energy: f64,
    /// Root-sum-square of the cell weak residual, reported for `m > 5/3`.
    pub n_weak_rss: Option<f64>,
}

impl SweepRow {
    fn monitored(&self) -> [f64; 4] {
        [self.sup_y, self.window_grad_nm1, self.window_grad_c, self.sup_energy]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub m: f64,
    pub rows: Vec<SweepRow>,
    /// Largest relative change of a monitored bound between the two
    /// smallest epsilons.
    pub variation: f64,
    /// Largest spread of a monitored bound across all epsilons.
    pub envelope: f64,
    /// `||n_a - n_b||_L1` at the end time for the two smallest epsilons.
    pub cauchy_l1: f64,
    pub passed: bool,
}

/// Threshold on the relative variation of the monitored bounds.
pub const SWEEP_VARIATION: f64 = 0.1;

impl SweepReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("# epsilon sweep, m = {}\n", self.m);
        s.push_str("epsilon,sup_y,window_grad_nm1,window_grad_c,sup_energy,n_weak_rss\n");
        for r in &self.rows {
            let nw = r.n_weak_rss.map_or("-".to_string(), |v| format!("{v:.6e}"));
            s.push_str(&format!(
                "{},{:.6e},{:.6e},{:.6e},{:.6e},{nw}\n",
                r.epsilon, r.sup_y, r.window_grad_nm1, r.window_grad_c, r.sup_energy
            ));
        }
        s.push_str(&format!(
            "variation,{:.4e}\nenvelope,{:.4e}\ncauchy_l1,{:.6e}\noverall,{}\n",
            self.variation,
            self.envelope,
            self.cauchy_l1,
            if self.passed { "pass" } else { "FAIL" }
        ));
        s
    }
}

/// Runs the configuration for each epsilon (independent runs in parallel)
/// and checks that the monitored bounds settle as epsilon decreases.
pub fn run_epsilon_sweep(config: &SimConfig, epsilons: &[f64]) -> Result<SweepReport, RunError> {
    if epsilons.len() < 3 || epsilons.windows(2).any(|w| w[1] > w[0]) {
        return Err(ConfigError::Invalid("sweep needs at least 3 non-increasing epsilons".into()).into());
    }
    let outputs: Vec<RunOutput> = epsilons
        .par_iter()
        .map(|&eps| {
            let mut c = config.clone();
            c.model.epsilon = eps;
            run_single(&c)
        })
        .collect::<Result<_, _>>()?;
    summarize_sweep(config, epsilons, &outputs)
}

/// Builds the sweep report from finished runs, one per epsilon.
pub fn summarize_sweep(config: &SimConfig, epsilons: &[f64], outputs: &[RunOutput]) -> Result<SweepReport, RunError> {
    if epsilons.len() != outputs.len() || epsilons.len() < 2 {
        return Err(ConfigError::Invalid("sweep needs one run per epsilon".into()).into());
    }
    let m = config.model.m;
    let mut rows = Vec::new();
    for (out, &eps) in outputs.iter().zip(epsilons) {
        let windows: Vec<_> = out.ledger.complete_windows().collect();
        let n_weak_rss = if m > 5.0 / 3.0 {
            let time = snapshot_cutoff(&out.trajectory, config.certify.support_fraction, config.certify.flat_fraction);
            let w = weak_residuals(&out.trajectory, time, config.certify.seed, 4, &[Identity::NWeak])?;
            Some(rss(&w.n_weak))
        } else {
            None
        };
        rows.push(SweepRow {
            epsilon: eps,
            sup_y: out.ledger.sup_y(),
            window_grad_nm1: windows.iter().map(|w| w.int_grad_nm1_sq).fold(0.0, f64::max),
            window_grad_c: windows.iter().map(|w| w.int_grad_c_sq).fold(0.0, f64::max),
            sup_energy: out.ledger.sup_energy(),
            n_weak_rss,
        });
    }
    let k = rows.len();
    let (a, b) = (&rows[k - 2], &rows[k - 1]);
    let variation = a
        .monitored()
        .iter()
        .zip(b.monitored())
        .map(|(x, y)| rel_variation(*x, y))
        .fold(0.0, f64::max);
    let envelope = (0..4)
        .map(|i| envelope(&rows.iter().map(|r| r.monitored()[i]).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    let end = |o: &RunOutput| o.trajectory.snapshots.last().expect("snapshots").n.clone();
    let diff = end(&outputs[k - 2]).zip_map(&end(&outputs[k - 1]), |x, y| (x - y).abs());
    let cauchy_l1 = integrate(&diff);
    Ok(SweepReport {
        m,
        rows,
        variation,
        envelope,
        cauchy_l1,
        passed: variation <= SWEEP_VARIATION,
    })
}

/// One refinement level of a manufactured-solution run.
#[derive(Clone, Debug, PartialEq)]
pub struct MmsLevel {
    pub cells: usize,
    pub dt: f64,
    pub err_n: f64,
    pub err_c: f64,
    pub err_u: f64,
    /// Root-sum-square of the weak residuals evaluated on the trajectory,
    /// per identity.
    pub weak: Vec<(Identity, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmsStudy {
    pub mode: MmsMode,
    pub levels: Vec<MmsLevel>,
    /// Smallest pairwise observed order of each checked error.
    pub order: f64,
    pub required: f64,
    /// Smallest pairwise observed order of each weak residual.
    pub weak_orders: Vec<(Identity, f64)>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MmsReport {
    pub studies: Vec<MmsStudy>,
}

impl MmsReport {
    pub fn passed(&self) -> bool {
        self.studies.iter().all(|s| s.passed)
    }

    pub fn study(&self, mode: MmsMode) -> Option<&MmsStudy> {
        self.studies.iter().find(|s| s.mode == mode)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("mode,cells,dt,err_n,err_c,err_u,weak\n");
        for st in &self.studies {
            for l in &st.levels {
                let weak: Vec<String> = l.weak.iter().map(|(i, v)| format!("{}={v:.4e}", i.id())).collect();
                s.push_str(&format!(
                    "{:?},{},{:.6e},{:.6e},{:.6e},{:.6e},{}\n",
                    st.mode,
                    l.cells,
                    l.dt,
                    l.err_n,
                    l.err_c,
                    l.err_u,
                    weak.join(" ")
                ));
            }
        }
        s.push_str("mode,order,required,weak_orders,status\n");
        for st in &self.studies {
            let w: Vec<String> = st.weak_orders.iter().map(|(i, v)| format!("{}={v:.3}", i.id())).collect();
            s.push_str(&format!(
                "{:?},{:.4},{},{},{}\n",
                st.mode,
                st.order,
                st.required,
                w.join(" "),
                if st.passed { "pass" } else { "FAIL" }
            ));
        }
        s.push_str(&format!("overall,{}\n", if self.passed() { "pass" } else { "FAIL" }));
        s
    }
}

fn scalar_l2(a: &ScalarField, b: &ScalarField) -> f64 {
    lp_norm(&a.zip_map(b, |x, y| x - y), 2.0).expect("p = 2 is admissible")
}

fn vector_l2(a: &VectorField, b: &VectorField) -> f64 {
    let d = a.axpy(-1.0, b);
    face_inner(&d, &d).sqrt()
}

/// Identities whose residuals are tracked for each mode.
pub fn mms_identities(mode: MmsMode) -> &'static [Identity] {
    match mode {
        MmsMode::Cell => &[Identity::NWeak, Identity::NTested],
        MmsMode::Signal => &[Identity::CWeak],
        MmsMode::Fluid => &[Identity::UWeak],
        MmsMode::Coupled | MmsMode::Steady => &[Identity::NWeak, Identity::NTested, Identity::CWeak, Identity::UWeak],
    }
}

/// Runs one manufactured problem on `cells` per axis and returns the
/// trajectory plus the errors at the final time.
pub fn run_mms_level(config: &SimConfig, mode: MmsMode, cells: usize) -> Result<(TrajectoryRecord, MmsLevel), RunError> {
    let mc = &config.mms;
    let grid = Grid::unit(&vec![cells; mc.ndim]).map_err(RunError::Field)?;
    let h = 1.0 / cells as f64;
    let dt = mc.dt_factor * h * h;
    let steps = (mc.t_end / dt).round() as usize;
    if (steps as f64 * dt - mc.t_end).abs() > 1e-9 * mc.t_end || cells % 8 != 0 {
        return Err(ConfigError::Invalid("mms t_end must be a whole number of steps and cells divisible by 8".into()).into());
    }
    let mm = Manufactured::new(mode, mc.ndim, config.model.m, mc.epsilon);
    let mut cell = CellStepParams::new(mm.m, mm.epsilon, dt).map_err(invalid)?;
    cell.face_average = config.numerics.face_average;
    // the manufactured sources carry no velocity filter
    let fluid = FluidStepParams::new(0.0, dt, mm.phi_field(&grid), config.tolerances.proj_tol).map_err(invalid)?;
    let march = March {
        m: mm.m,
        epsilon: mm.epsilon,
        dt,
        steps,
        // dt_out = h / 32: enough nodes on the cutoff descent at the coarsest level
        stride: cells / 8,
        cell,
        fluid,
        mms: Some(mm),
        gates: Gates {
            conservation: false,
            mass_drift: 0.0,
            l1_slack: 0.0,
            tol_energy: 0.0,
            energy_floor: 0.0,
            proj_tol: config.tolerances.proj_tol,
        },
    };
    let (traj, _, _) = march.run(mm.n_field(&grid, 0.0), mm.c_field(&grid, 0.0), mm.u_field(&grid, 0.0))?;
    let t = traj.end_time();
    let last = traj.snapshots.last().expect("snapshots");
    let time = TimeCutoff::new(0.5 * t, t);
    let w = weak_residuals(&traj, time, config.certify.seed, 4, mms_identities(mode))?;
    let mut weak = Vec::new();
    for id in mms_identities(mode) {
        let v = match id {
            Identity::NWeak => &w.n_weak,
            Identity::NTested => &w.n_tested,
            Identity::CWeak => &w.c_weak,
            _ => &w.u_weak,
        };
        weak.push((*id, rss(v)));
    }
    let level = MmsLevel {
        cells,
        dt,
        err_n: scalar_l2(&last.n, &mm.n_field(&grid, t)),
        err_c: scalar_l2(&last.c, &mm.c_field(&grid, t)),
        err_u: vector_l2(&last.u, &mm.u_pointwise(&grid, t)),
        weak,
    };
    Ok((traj, level))
}

fn min_order(errors: &[f64]) -> f64 {
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min)
}

/// Observed order of `2^-k` refinement: smallest pairwise `log2` ratio.
pub fn observed_order(errors: &[f64]) -> f64 {
    min_order(errors)
}

/// Required error order per mode.
pub fn required_order(mode: MmsMode) -> f64 {
    match mode {
        MmsMode::Coupled => 1.0,
        MmsMode::Steady => 0.0,
        _ => 1.8,
    }
}

/// Refinement study for each mode over `levels` grids starting at
/// `base_cells` and doubling.
pub fn run_mms(config: &SimConfig, modes: &[MmsMode], levels: usize) -> Result<MmsReport, RunError> {
    if levels < 2 {
        return Err(ConfigError::Invalid("mms needs at least 2 levels".into()).into());
    }
    let jobs: Vec<(MmsMode, usize)> = modes
        .iter()
        .flat_map(|&m| (0..levels).map(move |l| (m, config.mms.base_cells << l)))
        .collect();
    let results: Vec<MmsLevel> = jobs
        .par_iter()
        .map(|&(mode, cells)| run_mms_level(config, mode, cells).map(|r| r.1))
        .collect::<Result<_, _>>()?;
    let mut studies = Vec::new();
    for (i, &mode) in modes.iter().enumerate() {
        let lv = results[i * levels..(i + 1) * levels].to_vec();
        let series = |f: fn(&MmsLevel) -> f64| lv.iter().map(f).collect::<Vec<_>>();
        let (order, passed) = match mode {
            MmsMode::Cell => (min_order(&series(|l| l.err_n)), None),
            MmsMode::Signal => (min_order(&series(|l| l.err_c)), None),
            MmsMode::Fluid => (min_order(&series(|l| l.err_u)), None),
            MmsMode::Coupled => {
                let o = min_order(&series(|l| l.err_n))
                    .min(min_order(&series(|l| l.err_c)))
                    .min(min_order(&series(|l| l.err_u)));
                (o, None)
            }
            MmsMode::Steady => {
                let worst = lv.iter().map(|l| l.err_n.max(l.err_c).max(l.err_u)).fold(0.0, f64::max);
                (f64::NAN, Some(worst <= config.tolerances.tol_weak))
            }
        };
        let weak_orders = mms_identities(mode)
            .iter()
            .enumerate()
            .map(|(j, id)| (*id, min_order(&lv.iter().map(|l| l.weak[j].1).collect::<Vec<_>>())))
            .collect();
        let required = required_order(mode);
        studies.push(MmsStudy {
            mode,
            levels: lv,
            order,
            required,
            weak_orders,
            passed: passed.unwrap_or(order >= required),
        });
    }
    Ok(MmsReport { studies })
}

/// Which identities a regime is expected to certify.
pub fn regime_label(m: f64) -> &'static str {
    if m <= 4.0 / 3.0 {
        "outside theory (m <= 4/3): no existence result applies"
    } else if m <= 5.0 / 3.0 {
        "very weak regime (4/3 < m <= 5/3): supersolution and c^2 inequalities"
    } else {
        "weak regime (m > 5/3): cell weak identity decays under refinement, supersolution inequality"
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeSection {
    pub m: f64,
    pub banner: Option<String>,
    pub expectation: String,
    pub certificate: Certificate,
    /// `(label, coarse, fine)` cell weak residuals, weak regime only.
    pub n_weak_decay: Vec<(String, f64, f64)>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeReport {
    pub sections: Vec<RegimeSection>,
}

impl RegimeReport {
    pub fn passed(&self) -> bool {
        self.sections.iter().all(|s| s.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for sec in &self.sections {
            s.push_str(&format!("## m = {}\n", sec.m));
            if let Some(b) = &sec.banner {
                s.push_str(&format!("!! {b}\n"));
            }
            s.push_str(&format!("# expected: {}\n", sec.expectation));
            s.push_str(&sec.certificate.to_text());
            if !sec.n_weak_decay.is_empty() {
                s.push_str("n-weak-decay,label,coarse,fine\n");
                for (l, a, b) in &sec.n_weak_decay {
                    s.push_str(&format!("n-weak-decay,{l},{a:.6e},{b:.6e}\n"));
                }
                let (a, b) = decay_rss(&sec.n_weak_decay);
                s.push_str(&format!(
                    "n-weak-decay,rss,{a:.6e},{b:.6e},{}\n",
                    if b < a { "pass" } else { "FAIL" }
                ));
            }
            s.push_str(&format!("section,{}\n", if sec.passed { "pass" } else { "FAIL" }));
        }
        s.push_str(&format!("overall,{}\n", if self.passed() { "pass" } else { "FAIL" }));
        s
    }
}

fn decay_rss(rows: &[(String, f64, f64)]) -> (f64, f64) {
    let a: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.2).collect();
    (rss(&a), rss(&b))
}

/// The configuration refined once: `h/2`, `dt/4`, `epsilon/4`.
pub fn refined(config: &SimConfig) -> SimConfig {
    let mut c = config.clone();
    c.grid.dims = c.grid.dims.iter().map(|d| 2 * d).collect();
    c.time.dt /= 4.0;
    c.model.epsilon /= 4.0;
    if let Some(f) = c.numerics.filter_epsilon.as_mut() {
        *f /= 4.0;
    }
    c
}

fn regime_section(config: &SimConfig, m: f64) -> Result<RegimeSection, RunError> {
    let mut cfg = config.clone();
    cfg.model.m = m;
    let banner = (m <= 4.0 / 3.0).then(|| format!("OUT OF THEORY: m = {m} <= 4/3, results carry no guarantee"));
    let out = run_single(&cfg)?;
    let cf = &cfg.certify;
    let time = snapshot_cutoff(&out.trajectory, cf.support_fraction, cf.flat_fraction);
    let tol = cfg.tolerances.tol_super;
    let mut certificate = Certificate::new(format!("regime m = {m}, epsilon = {}", cfg.model.epsilon));
    let mut n_weak_decay = Vec::new();
    if m > 4.0 / 3.0 && m < 2.0 {
        let vw = certify_very_weak(&out.trajectory, time, cf.seed, cf.test_functions, tol)?;
        if m > 5.0 / 3.0 {
            certificate.lines.extend(vw.lines.into_iter().filter(|l| l.identity == Identity::Supersolution));
        } else {
            certificate.lines = vw.lines;
        }
    }
    if m > 5.0 / 3.0 {
        let fine_cfg = refined(&cfg);
        let fine = run_single(&fine_cfg)?;
        let fine_time = snapshot_cutoff(&fine.trajectory, cf.support_fraction, cf.flat_fraction);
        let count = cf.test_functions.min(8);
        let a = weak_residuals(&out.trajectory, time, cf.seed, count, &[Identity::NWeak])?;
        let b = weak_residuals(&fine.trajectory, fine_time, cf.seed, count, &[Identity::NWeak])?;
        for (k, (x, y)) in a.n_weak.iter().zip(&b.n_weak).enumerate() {
            n_weak_decay.push((format!("phi{k:02}"), *x, *y));
        }
    }
    let decays = n_weak_decay.is_empty() || {
        let (a, b) = decay_rss(&n_weak_decay);
        b < a
    };
    Ok(RegimeSection {
        m,
        passed: certificate.passed() && decays,
        banner,
        expectation: regime_label(m).to_string(),
        certificate,
        n_weak_decay,
    })
}

/// Runs the weak-regime exponent 1.8 and the configured very-weak exponent
/// (1.5 unless the configuration sets another `m <= 5/3`) on identical
/// data and certifies each against its regime's identities.
pub fn run_regime_compare(config: &SimConfig) -> Result<RegimeReport, RunError> {
    let low = if config.model.m <= 5.0 / 3.0 { config.model.m } else { 1.5 };
    let sections = [low, 1.8]
        .iter()
        .map(|&m| regime_section(config, m))
        .collect::<Result<_, _>>()?;
    Ok(RegimeReport { sections })
}

/// Certificate for a stored trajectory according to its regime.
pub fn certify_trajectory(traj: &TrajectoryRecord, config: &SimConfig) -> Result<Certificate, RunError> {
    let cf = &config.certify;
    let time = snapshot_cutoff(traj, cf.support_fraction, cf.flat_fraction);
    let tol = &config.tolerances;
    let mut cert = Certificate::new(format!("stored trajectory, m = {}, epsilon = {}", traj.m, traj.epsilon));
    cert.notes.push(regime_label(traj.m).to_string());
    if traj.m > 4.0 / 3.0 && traj.m < 2.0 {
        cert.lines = certify_very_weak(traj, time, cf.seed, cf.test_functions, tol.tol_super)?.lines;
    }
    if traj.m > 5.0 / 3.0 || traj.manufactured.is_some() {
        let count = cf.test_functions.min(8);
        let w = weak_residuals(traj, time, cf.seed, count, &[Identity::NWeak, Identity::CWeak, Identity::UWeak])?;
        for (id, v) in [(Identity::NWeak, &w.n_weak), (Identity::CWeak, &w.c_weak), (Identity::UWeak, &w.u_weak)] {
            for (k, r) in v.iter().enumerate() {
                cert.push(CertificateLine::new(id, format!("phi{k:02}"), *r, tol.tol_weak));
            }
        }
    }
    Ok(cert)
}
