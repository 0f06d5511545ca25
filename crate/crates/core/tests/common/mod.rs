//! Independent oracles shared by the integration tests: a dense-matrix MAC
//! model of the unforced viscous fluid step and a forward-Euler integrator
//! for the comparison ODE.

#![allow(dead_code)]

use chemoflow::fields::{kinetic, Grid, ScalarField, VectorField};
use chemoflow::fluid::{max_divergence, FluidStepParams, FluidStepper};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Mac {
    pub n: [usize; 3],
    pub h: [f64; 3],
}

impl Mac {
    /// Interior face shape of component `a`: `n_a - 1` faces along `a`.
    pub fn shape(&self, a: usize) -> [usize; 3] {
        let mut s = self.n;
        s[a] -= 1;
        s
    }

    pub fn faces(&self, a: usize) -> usize {
        self.shape(a).iter().product()
    }

    pub fn offset(&self, a: usize) -> usize {
        (0..a).map(|b| self.faces(b)).sum()
    }

    pub fn unknowns(&self) -> usize {
        (0..3).map(|a| self.faces(a)).sum()
    }

    pub fn cells(&self) -> usize {
        self.n.iter().product()
    }

    /// Face `a` at along-axis node `f` (1..n_a-1) and cells `c` elsewhere.
    pub fn face(&self, a: usize, idx: [usize; 3]) -> Option<usize> {
        let s = self.shape(a);
        let mut j = idx;
        if j[a] == 0 || j[a] >= self.n[a] {
            return None;
        }
        j[a] -= 1;
        Some(self.offset(a) + (j[0] * s[1] + j[1]) * s[2] + j[2])
    }

    pub fn cell(&self, c: [usize; 3]) -> usize {
        (c[0] * self.n[1] + c[1]) * self.n[2] + c[2]
    }

    pub fn face_indices(&self, a: usize) -> Vec<[usize; 3]> {
        let s = self.shape(a);
        let mut out = Vec::new();
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    let mut p = [i, j, k];
                    p[a] += 1;
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn cell_indices(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        for i in 0..self.n[0] {
            for j in 0..self.n[1] {
                for k in 0..self.n[2] {
                    out.push([i, j, k]);
                }
            }
        }
        out
    }

    /// No-slip vector Laplacian: wall-normal neighbours on the wall are
    /// zero, tangential ghosts mirror with a sign flip.
    pub fn laplacian(&self) -> Vec<Vec<f64>> {
        let m = self.unknowns();
        let mut l = vec![vec![0.0; m]; m];
        for a in 0..3 {
            for p in self.face_indices(a) {
                let row = self.face(a, p).unwrap();
                for d in 0..3 {
                    let w = 1.0 / (self.h[d] * self.h[d]);
                    l[row][row] -= 2.0 * w;
                    for up in [false, true] {
                        let mut q = p;
                        let outside = if up {
                            q[d] += 1;
                            q[d] >= self.n[d]
                        } else if q[d] == 0 {
                            true
                        } else {
                            q[d] -= 1;
                            d == a && q[d] == 0
                        };
                        if !outside {
                            l[row][self.face(a, q).unwrap()] += w;
                        } else if d != a {
                            l[row][row] -= w;
                        }
                    }
                }
            }
        }
        l
    }

    pub fn divergence(&self) -> Vec<Vec<f64>> {
        let mut dm = vec![vec![0.0; self.unknowns()]; self.cells()];
        for c in self.cell_indices() {
            let row = self.cell(c);
            for a in 0..3 {
                let mut right = c;
                right[a] += 1;
                if let Some(j) = self.face(a, right) {
                    dm[row][j] += 1.0 / self.h[a];
                }
                if let Some(j) = self.face(a, c) {
                    dm[row][j] -= 1.0 / self.h[a];
                }
            }
        }
        dm
    }

    pub fn gradient(&self) -> Vec<Vec<f64>> {
        let mut g = vec![vec![0.0; self.cells()]; self.unknowns()];
        for a in 0..3 {
            for p in self.face_indices(a) {
                let row = self.face(a, p).unwrap();
                let mut left = p;
                left[a] -= 1;
                g[row][self.cell(p)] += 1.0 / self.h[a];
                g[row][self.cell(left)] -= 1.0 / self.h[a];
            }
        }
        g
    }
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..k {
            let v = a[i][l];
            if v != 0.0 {
                for j in 0..m {
                    out[i][j] += v * b[l][j];
                }
            }
        }
    }
    out
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Exact projector: `u - G q` with `D G q = D u`, zero-mean `q` enforced by
/// adding the rank-one mean term to the singular Neumann matrix.
pub struct Projector {
    d: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    poisson: Vec<Vec<f64>>,
}

impl Projector {
    pub fn new(mac: &Mac) -> Self {
        let d = mac.divergence();
        let g = mac.gradient();
        let mut poisson = matmul(&d, &g);
        let nc = mac.cells() as f64;
        for row in poisson.iter_mut() {
            for v in row.iter_mut() {
                *v += 1.0 / nc;
            }
        }
        Projector { d, g, poisson }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let q = solve(self.poisson.clone(), matvec(&self.d, u));
        let gq = matvec(&self.g, &q);
        u.iter().zip(gq).map(|(a, b)| a - b).collect()
    }
}

pub fn to_field(grid: &Grid, mac: &Mac, v: &[f64]) -> VectorField {
    let comps: Vec<Vec<f64>> = (0..3)
        .map(|a| v[mac.offset(a)..mac.offset(a) + mac.faces(a)].to_vec())
        .collect();
    VectorField::from_interior(grid, &comps)
}

pub fn from_field(u: &VectorField) -> Vec<f64> {
    (0..3).flat_map(|a| u.interior_vec(a)).collect()
}


pub struct DecayCheck {
    pub substeps: usize,
    /// Largest face deviation from the oracle over the checked steps.
    pub max_deviation: f64,
    pub kinetic_mismatch: f64,
    pub e0: f64,
    pub e_end: f64,
}

/// Three fluid steps of a random solenoidal field on an anisotropic 8^3 box
/// (convection off, no forcing) against the dense oracle.
pub fn viscous_decay_check() -> DecayCheck {
    let dims = [8, 8, 8];
    let ext = [1.0, 1.25, 0.9];
    let grid = Grid::new(&dims, &ext).unwrap();
    let mac = Mac {
        n: dims,
        h: [ext[0] / 8.0, ext[1] / 8.0, ext[2] / 8.0],
    };
    let proj = Projector::new(&mac);
    let lap = mac.laplacian();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let raw: Vec<f64> = (0..mac.unknowns()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u0 = proj.apply(&raw);
    let field0 = to_field(&grid, &mac, &u0);
    assert!(max_divergence(&field0) < 1e-12);

    let dt = 4e-3;
    let inv: f64 = mac.h.iter().map(|h| 2.0 / (h * h)).sum();
    let k = ((dt * inv) / 0.5).ceil() as usize;
    let dts = dt / k as f64;

    let mut params = FluidStepParams::new(0.0, dt, ScalarField::zeros(&grid), 1e-13).unwrap();
    params.convection = false;
    let mut stepper = FluidStepper::new();
    let n = ScalarField::zeros(&grid);

    let mut oracle = u0.clone();
    let mut field = field0;
    let mut max_deviation = 0.0f64;
    for _ in 0..3 {
        for _ in 0..k {
            let lu = matvec(&lap, &oracle);
            let star: Vec<f64> = oracle.iter().zip(lu).map(|(u, l)| u + dts * l).collect();
            oracle = proj.apply(&star);
        }
        field = stepper.step(&field, &n, &params).unwrap().0;
        let got = from_field(&field);
        let err = got.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        max_deviation = max_deviation.max(err);
    }
    let e_end: f64 = oracle.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume();
    let e0: f64 = u0.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume();
    DecayCheck {
        substeps: k,
        max_deviation,
        kinetic_mismatch: (kinetic(&field) - e_end).abs(),
        e0,
        e_end,
    }
}

/// Forward Euler for `y' = -a y + h(t) - g(t)` with a period-1 forcing of
/// unit-window mass `b` and a nonnegative slack `g`.
pub fn euler_trajectory(rng: &mut ChaCha8Rng, a: f64, b: f64, y0: f64, dt: f64, t_end: f64) -> Vec<f64> {
    let pulses: Vec<(f64, f64, f64)> = (0..rng.random_range(1..4))
        .map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.02..0.5), rng.random_range(0.1..1.0)))
        .collect();
    let weight: f64 = pulses.iter().map(|p| p.1 * p.2).sum();
    let h = |t: f64| {
        let s = t.rem_euclid(1.0);
        let raw: f64 = pulses
            .iter()
            .map(|&(c, w, amp)| {
                let d = (s - c).rem_euclid(1.0);
                if d < w {
                    amp
                } else {
                    0.0
                }
            })
            .sum();
        raw * b / weight
    };
    let slack = rng.random_range(0.0..0.5);
    let steps = (t_end / dt) as usize;
    let mut y = y0;
    let mut out = vec![y];
    for k in 0..steps {
        let t = k as f64 * dt;
        y += dt * (-a * y + h(t) - slack * y.abs());
        out.push(y);
    }
    out
}
