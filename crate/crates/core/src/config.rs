//! Simulation configuration (TOML with typed sections; unknown keys are
//! rejected).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cell::FaceAverage;
use crate::error::ConfigError;
use crate::fields::{curl_of_potential, Grid, ScalarField, VectorField};
use crate::fluid::max_divergence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub mms: MmsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dims: Vec<usize>,
    pub extents: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub m: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Spacing of stored snapshots; must be a whole number of steps.
    pub snapshot_interval: f64,
}

/// Initial cell density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "lowercase", deny_unknown_fields)]
pub enum CellInit {
    /// `base + amplitude cos(pi x1/L1) cos(pi x2/L2)`.
    Bump { base: f64, amplitude: f64 },
    Constant { value: f64 },
}

/// Initial signal concentration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "lowercase", deny_unknown_fields)]
pub enum SignalInit {
    /// `base + amplitude cos(pi x_axis / L_axis)`.
    Cosine { base: f64, amplitude: f64, axis: usize },
    Constant { value: f64 },
}

/// Initial velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "lowercase", deny_unknown_fields)]
pub enum FluidInit {
    Rest,
    /// Discrete curl of `amplitude sin^2 sin^2 (sin^2)` about the last axis.
    Vortex { amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub n: CellInit,
    pub c: SignalInit,
    pub u: FluidInit,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            n: CellInit::Bump {
                base: 1.0,
                amplitude: 0.5,
            },
            c: SignalInit::Cosine {
                base: 1.0,
                amplitude: 0.5,
                axis: 0,
            },
            u: FluidInit::Vortex { amplitude: 0.05 },
        }
    }
}

/// `phi = gravity * x1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub gravity: f64,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig { gravity: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Bound on `||div u||_inf` after every fluid step.
    pub proj_tol: f64,
    /// Floor for the one-sided inequality residuals.
    pub tol_super: f64,
    /// Relative bound on the per-step discrete energy residual.
    pub tol_energy: f64,
    /// Absolute allowance for the energy residual once the flow has
    /// decayed to the level of the projection tolerance.
    pub energy_floor: f64,
    /// Relative drift allowed in the cell mass.
    pub mass_drift: f64,
    /// Relative slack on the `int c` bound.
    pub l1_slack: f64,
    /// Two-sided bound for the equality residuals.
    pub tol_weak: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            proj_tol: 1e-8,
            tol_super: 3e-4,
            tol_energy: 1e-3,
            energy_floor: 1e-10,
            mass_drift: 1e-12,
            l1_slack: 1e-6,
            tol_weak: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub cfl_limit: f64,
    pub force_cfl: bool,
    pub face_average: FaceAverage,
    /// Filter width of the convecting velocity; `None` uses `model.epsilon`.
    pub filter_epsilon: Option<f64>,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            cfl_limit: 0.5,
            force_cfl: false,
            face_average: FaceAverage::Arithmetic,
            filter_epsilon: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    pub seed: u64,
    pub test_functions: usize,
    /// End of the temporal support as a fraction of `t_end`.
    pub support_fraction: f64,
    /// Start of the descent as a fraction of the support end.
    pub flat_fraction: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            seed: 0,
            test_functions: 20,
            support_fraction: 1.0,
            flat_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmsConfig {
    pub base_cells: usize,
    pub levels: usize,
    pub ndim: usize,
    pub t_end: f64,
    /// `dt = dt_factor * h^2`.
    pub dt_factor: f64,
    /// Regularization of the manufactured cell equation.
    pub epsilon: f64,
}

impl Default for MmsConfig {
    fn default() -> Self {
        MmsConfig {
            base_cells: 8,
            levels: 3,
            ndim: 3,
            t_end: 0.125,
            dt_factor: 0.25,
            epsilon: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub vtk: bool,
    pub snapshots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            vtk: false,
            snapshots: true,
        }
    }
}

impl SimConfig {
    /// The m = 1.5 reference run on a 16^3 unit box up to t = 2.
    pub fn reference() -> Self {
        SimConfig {
            grid: GridConfig {
                dims: vec![16, 16, 16],
                extents: vec![1.0; 3],
            },
            model: ModelConfig { m: 1.5, epsilon: 0.01 },
            time: TimeConfig {
                dt: 1e-3,
                t_end: 2.0,
                snapshot_interval: 0.01,
            },
            initial: InitialConfig::default(),
            potential: PotentialConfig::default(),
            tolerances: Tolerances::default(),
            numerics: Numerics::default(),
            certify: CertifyConfig::default(),
            mms: MmsConfig::default(),
            output: OutputConfig::default(),
        }
    }

    /// Steady constants `n = c = value`, `u = 0`, no potential.
    pub fn steady(value: f64) -> Self {
        let mut c = Self::reference();
        c.grid.dims = vec![8, 8, 8];
        c.time.t_end = 0.2;
        c.time.snapshot_interval = 0.01;
        c.initial = InitialConfig {
            n: CellInit::Constant { value },
            c: SignalInit::Constant { value },
            u: FluidInit::Rest,
        };
        c.potential.gravity = 0.0;
        c
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let c: SimConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Grid::new(&self.grid.dims, &self.grid.extents).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Steps between stored snapshots.
    pub fn snapshot_stride(&self) -> Result<usize, ConfigError> {
        let r = self.time.snapshot_interval / self.time.dt;
        let k = r.round();
        if k < 1.0 || (r - k).abs() > 1e-9 * r {
            return Err(ConfigError::Invalid(format!(
                "snapshot_interval {} is not a whole number of steps of dt {}",
                self.time.snapshot_interval, self.time.dt
            )));
        }
        Ok(k as usize)
    }

    pub fn steps(&self) -> usize {
        (self.time.t_end / self.time.dt).round() as usize
    }

    pub fn filter_epsilon(&self) -> f64 {
        self.numerics.filter_epsilon.unwrap_or(self.model.epsilon)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |s: String| Err(ConfigError::Invalid(s));
        let grid = self.grid()?;
        let m = self.model.m;
        if !(m > 1.0 && m.is_finite()) {
            return bad(format!("m must exceed 1, got {m}"));
        }
        let eps = self.model.epsilon;
        if !(eps > 0.0 && eps <= 1.0) {
            return bad(format!("epsilon must lie in (0, 1], got {eps}"));
        }
        if m <= 4.0 / 3.0 {
            log::warn!("m = {m} <= 4/3: below the very-weak solution regime");
        } else if m > 5.0 / 3.0 {
            log::info!("m = {m} > 5/3: weak-solution regime");
        }
        let t = &self.time;
        if !(t.dt > 0.0 && t.dt.is_finite()) || !(t.t_end > 0.0 && t.t_end.is_finite()) {
            return bad(format!("dt and t_end must be positive, got {} and {}", t.dt, t.t_end));
        }
        let steps = t.t_end / t.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps {
            return bad(format!("t_end {} is not a whole number of steps", t.t_end));
        }
        self.snapshot_stride()?;
        if let SignalInit::Cosine { axis, .. } = self.initial.c {
            if axis >= grid.ndim() {
                return bad(format!("signal recipe axis {axis} out of range"));
            }
        }
        let tol = &self.tolerances;
        if !(tol.proj_tol > 0.0 && tol.proj_tol <= 1e-6) {
            return bad(format!("proj_tol must lie in (0, 1e-6], got {}", tol.proj_tol));
        }
        if let Some(f) = self.numerics.filter_epsilon {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("filter_epsilon must lie in [0, 1], got {f}"));
            }
        }
        let cf = &self.certify;
        if !(cf.support_fraction > 0.0 && cf.support_fraction <= 1.0)
            || !(0.0..1.0).contains(&cf.flat_fraction)
        {
            return bad("certify fractions must lie in (0, 1]".into());
        }
        if self.mms.levels < 2 || self.mms.base_cells < 8 || self.mms.base_cells % 8 != 0 || !(2..=3).contains(&self.mms.ndim) {
            return bad("mms needs >= 2 levels, base cells a multiple of 8, ndim 2 or 3".into());
        }
        let n0 = self.initial_n(&grid);
        let c0 = self.initial_c(&grid);
        if n0.min() < 0.0 || c0.min() < 0.0 {
            return bad("initial n and c must be nonnegative".into());
        }
        let u0 = self.initial_u(&grid);
        if max_divergence(&u0) > tol.proj_tol {
            return bad("initial velocity is not discretely solenoidal".into());
        }
        Ok(())
    }

    pub fn initial_n(&self, grid: &Grid) -> ScalarField {
        let l = grid.extents().to_vec();
        match self.initial.n {
            CellInit::Bump { base, amplitude } => ScalarField::from_fn(grid, |x| {
                base + amplitude * (PI * x[0] / l[0]).cos() * (PI * x[1] / l[1]).cos()
            }),
            CellInit::Constant { value } => ScalarField::constant(grid, value),
        }
    }

    pub fn initial_c(&self, grid: &Grid) -> ScalarField {
        let l = grid.extents().to_vec();
        match self.initial.c {
            SignalInit::Cosine { base, amplitude, axis } => {
                ScalarField::from_fn(grid, |x| base + amplitude * (PI * x[axis] / l[axis]).cos())
            }
            SignalInit::Constant { value } => ScalarField::constant(grid, value),
        }
    }

    /// Discretely solenoidal, no-slip initial velocity.
    pub fn initial_u(&self, grid: &Grid) -> VectorField {
        match self.initial.u {
            FluidInit::Rest => VectorField::zeros(grid),
            FluidInit::Vortex { amplitude } => {
                let mut l = [1.0; 3];
                l[..grid.ndim()].copy_from_slice(grid.extents());
                let nd = grid.ndim();
                let s = |x: f64, len: f64| (PI * x / len).sin().powi(2);
                curl_of_potential(grid, |c, x| {
                    if c != 2 {
                        return 0.0;
                    }
                    let z = if nd == 3 { s(x[2], l[2]) } else { 1.0 };
                    amplitude * s(x[0], l[0]) * s(x[1], l[1]) * z
                })
            }
        }
    }

    pub fn phi(&self, grid: &Grid) -> ScalarField {
        let g = self.potential.gravity;
        ScalarField::from_fn(grid, |x| g * x[0])
    }
}
