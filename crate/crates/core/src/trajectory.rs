//! Stored space-time trajectories: uniformly spaced snapshots of `(n, c, u)`
//! plus the parameters the certifier needs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FieldError, ResidualError};
use crate::fields::{Grid, ScalarField, VectorField};
use crate::io;
use crate::manufactured::Manufactured;

/// Relative tolerance for matching a time to a snapshot instant.
const TIME_MATCH: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub n: ScalarField,
    pub c: ScalarField,
    pub u: VectorField,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub m: f64,
    pub epsilon: f64,
    pub grid: Grid,
    pub dt_out: f64,
    pub phi: ScalarField,
    /// Source descriptor when the run was forced by a manufactured solution.
    pub manufactured: Option<Manufactured>,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    m: f64,
    epsilon: f64,
    dims: Vec<usize>,
    extents: Vec<f64>,
    dt_out: f64,
    times: Vec<f64>,
    manufactured: Option<Manufactured>,
}

impl TrajectoryRecord {
    pub fn new(m: f64, epsilon: f64, dt_out: f64, phi: ScalarField, manufactured: Option<Manufactured>) -> Self {
        assert!(dt_out > 0.0, "snapshot spacing must be positive");
        TrajectoryRecord {
            m,
            epsilon,
            grid: *phi.grid(),
            dt_out,
            phi,
            manufactured,
            snapshots: Vec::new(),
        }
    }

    /// Appends a snapshot; its time must be the next multiple of `dt_out`.
    pub fn push(&mut self, snap: Snapshot) {
        let expected = self.snapshots.len() as f64 * self.dt_out;
        assert!(
            (snap.t - expected).abs() <= TIME_MATCH * self.dt_out.max(expected),
            "snapshot at t = {} breaks uniform spacing (expected {expected})",
            snap.t
        );
        assert_eq!(*snap.n.grid(), self.grid, "snapshot on another grid");
        self.snapshots.push(snap);
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn end_time(&self) -> f64 {
        self.snapshots.last().map_or(0.0, |s| s.t)
    }

    /// Index of the snapshot at time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize, ResidualError> {
        let k = (t / self.dt_out).round();
        let close = (t - k * self.dt_out).abs() <= TIME_MATCH * self.dt_out.max(t.abs());
        if k < 0.0 || !close || k as usize >= self.snapshots.len() {
            return Err(ResidualError::NotASnapshot(t));
        }
        Ok(k as usize)
    }

    /// Writes a `manifest.toml` plus one binary file per field and snapshot.
    pub fn save(&self, dir: &Path) -> Result<(), FieldError> {
        std::fs::create_dir_all(dir)?;
        let manifest = Manifest {
            m: self.m,
            epsilon: self.epsilon,
            dims: self.grid.dims().to_vec(),
            extents: self.grid.extents().to_vec(),
            dt_out: self.dt_out,
            times: self.times(),
            manufactured: self.manufactured,
        };
        let text = toml::to_string(&manifest).map_err(|e| FieldError::Format(e.to_string()))?;
        std::fs::write(dir.join("manifest.toml"), text)?;
        io::write_scalar_binary(&dir.join("phi.bin"), &self.phi, 0.0)?;
        for (k, s) in self.snapshots.iter().enumerate() {
            io::write_scalar_binary(&dir.join(format!("n_{k:05}.bin")), &s.n, s.t)?;
            io::write_scalar_binary(&dir.join(format!("c_{k:05}.bin")), &s.c, s.t)?;
            io::write_vector_binary(&dir.join(format!("u_{k:05}.bin")), &s.u, s.t)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, FieldError> {
        let text = std::fs::read_to_string(dir.join("manifest.toml"))?;
        let mf: Manifest = toml::from_str(&text).map_err(|e| FieldError::Format(e.to_string()))?;
        let grid = Grid::new(&mf.dims, &mf.extents)?;
        let (phi, _) = io::read_scalar_binary(&dir.join("phi.bin"))?;
        if *phi.grid() != grid {
            return Err(FieldError::GridMismatch);
        }
        let mut rec = TrajectoryRecord::new(mf.m, mf.epsilon, mf.dt_out, phi, mf.manufactured);
        for (k, &t) in mf.times.iter().enumerate() {
            let (n, _) = io::read_scalar_binary(&dir.join(format!("n_{k:05}.bin")))?;
            let (c, _) = io::read_scalar_binary(&dir.join(format!("c_{k:05}.bin")))?;
            let (u, _) = io::read_vector_binary(&dir.join(format!("u_{k:05}.bin")))?;
            if *n.grid() != grid || *c.grid() != grid || *u.grid() != grid {
                return Err(FieldError::GridMismatch);
            }
            rec.snapshots.push(Snapshot { t, n, c, u });
        }
        Ok(rec)
    }
}
