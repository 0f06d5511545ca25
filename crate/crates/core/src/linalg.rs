//! Matrix-free symmetric operators on interior unknowns and a
//! Jacobi-preconditioned conjugate-gradient solver.

use crate::fields::Grid;

/// A symmetric positive (semi-)definite operator acting on flat vectors.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
    /// True when the operator has the constants as null space and the
    /// iteration must stay in the zero-mean subspace.
    fn singular_constants(&self) -> bool {
        false
    }
}

/// How a CG run should decide it has converged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// `||r||_2 <= tol * ||b||_2`
    Relative(f64),
    /// `||r||_inf <= tol`
    AbsoluteMax(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Preconditioned CG for `A x = b`, warm-started from `x`.
pub fn pcg(
    op: &impl SymmetricOperator,
    b: &[f64],
    x: &mut [f64],
    stop: StopRule,
    max_iter: usize,
) -> CgOutcome {
    let n = op.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let singular = op.singular_constants();
    let mut b = b.to_vec();
    if singular {
        remove_mean(&mut b);
        remove_mean(x);
    }
    let inv_diag: Vec<f64> = op
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let measure = |r: &[f64]| match stop {
        StopRule::Relative(_) => dot(r, r).sqrt(),
        StopRule::AbsoluteMax(_) => r.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    };
    let threshold = match stop {
        StopRule::Relative(tol) => tol * dot(&b, &b).sqrt(),
        StopRule::AbsoluteMax(tol) => tol,
    };

    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut res = measure(&r);
    if res <= threshold {
        return CgOutcome {
            iterations: 0,
            residual: res,
            converged: true,
        };
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    if singular {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return CgOutcome {
                iterations: it,
                residual: res,
                converged: false,
            };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = measure(&r);
        if res <= threshold {
            if singular {
                remove_mean(x);
            }
            return CgOutcome {
                iterations: it,
                residual: res,
                converged: true,
            };
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        if singular {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if singular {
        remove_mean(x);
    }
    CgOutcome {
        iterations: max_iter,
        residual: res,
        converged: false,
    }
}

/// `alpha I - beta lap_h` on cell unknowns with homogeneous Neumann walls.
/// With `alpha = 0` the operator is singular on constants.
#[derive(Clone, Copy, Debug)]
pub struct NeumannHelmholtz {
    pub grid: Grid,
    pub alpha: f64,
    pub beta: f64,
}

impl NeumannHelmholtz {
    fn shape(&self) -> [usize; 3] {
        [self.grid.n(0), self.grid.n(1), self.grid.n(2)]
    }
}

impl SymmetricOperator for NeumannHelmholtz {
    fn dim(&self) -> usize {
        self.grid.num_cells()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let s = self.shape();
        let stride = [s[1] * s[2], s[2], 1];
        let w: Vec<f64> = (0..3)
            .map(|a| self.beta / (self.grid.h(a) * self.grid.h(a)))
            .collect();
        let nd = self.grid.ndim();
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    let q = [i, j, k];
                    let idx = i * stride[0] + j * stride[1] + k;
                    let xc = x[idx];
                    let mut acc = self.alpha * xc;
                    for a in 0..nd {
                        if q[a] > 0 {
                            acc += w[a] * (xc - x[idx - stride[a]]);
                        }
                        if q[a] + 1 < s[a] {
                            acc += w[a] * (xc - x[idx + stride[a]]);
                        }
                    }
                    y[idx] = acc;
                }
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let s = self.shape();
        let nd = self.grid.ndim();
        let mut d = Vec::with_capacity(self.dim());
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    let q = [i, j, k];
                    let mut acc = self.alpha;
                    for a in 0..nd {
                        let w = self.beta / (self.grid.h(a) * self.grid.h(a));
                        acc += w * (usize::from(q[a] > 0) + usize::from(q[a] + 1 < s[a])) as f64;
                    }
                    d.push(acc);
                }
            }
        }
        d
    }

    fn singular_constants(&self) -> bool {
        self.alpha == 0.0
    }
}

/// `alpha I - beta lap_h` on the interior faces of velocity component
/// `axis`, with no-slip walls (zero normal face, mirrored tangential ghost).
#[derive(Clone, Copy, Debug)]
pub struct NoSlipHelmholtz {
    pub grid: Grid,
    pub axis: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl NoSlipHelmholtz {
    fn shape(&self) -> [usize; 3] {
        let mut s = [self.grid.n(0), self.grid.n(1), self.grid.n(2)];
        s[self.axis] -= 1;
        s
    }

    /// Diagonal weight of the missing neighbour across a wall along `b`.
    fn wall_weight(&self, b: usize) -> f64 {
        // normal wall: neighbour face is 0; tangential wall: ghost is -x
        if b == self.axis {
            1.0
        } else {
            2.0
        }
    }
}

impl SymmetricOperator for NoSlipHelmholtz {
    fn dim(&self) -> usize {
        self.grid.interior_face_count(self.axis)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let s = self.shape();
        let stride = [s[1] * s[2], s[2], 1];
        let nd = self.grid.ndim();
        let w: Vec<f64> = (0..3)
            .map(|a| self.beta / (self.grid.h(a) * self.grid.h(a)))
            .collect();
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    let q = [i, j, k];
                    let idx = i * stride[0] + j * stride[1] + k;
                    let xc = x[idx];
                    let mut acc = self.alpha * xc;
                    for b in 0..nd {
                        acc += w[b]
                            * if q[b] > 0 {
                                xc - x[idx - stride[b]]
                            } else {
                                self.wall_weight(b) * xc
                            };
                        acc += w[b]
                            * if q[b] + 1 < s[b] {
                                xc - x[idx + stride[b]]
                            } else {
                                self.wall_weight(b) * xc
                            };
                    }
                    y[idx] = acc;
                }
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let s = self.shape();
        let nd = self.grid.ndim();
        let mut d = Vec::with_capacity(self.dim());
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    let q = [i, j, k];
                    let mut acc = self.alpha;
                    for b in 0..nd {
                        let w = self.beta / (self.grid.h(b) * self.grid.h(b));
                        acc += w * if q[b] > 0 { 1.0 } else { self.wall_weight(b) };
                        acc += w * if q[b] + 1 < s[b] { 1.0 } else { self.wall_weight(b) };
                    }
                    d.push(acc);
                }
            }
        }
        d
    }
}

/// Dense matrix of a small operator, column by column. Test and oracle use.
pub fn dense_matrix(op: &impl SymmetricOperator) -> Vec<Vec<f64>> {
    let n = op.dim();
    let mut cols = vec![vec![0.0; n]; n];
    let mut e = vec![0.0; n];
    for (j, col) in cols.iter_mut().enumerate() {
        e[j] = 1.0;
        op.apply(&e, col);
        e[j] = 0.0;
    }
    // transpose to row-major
    let mut a = vec![vec![0.0; n]; n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            a[i][j] = col[i];
        }
    }
    a
}

/// Gaussian elimination with partial pivoting on a dense system.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{laplace, vector_laplace, ScalarField, VectorField};

    #[test]
    fn neumann_operator_matches_field_laplacian() {
        let g = Grid::new(&[5, 6, 4], &[1.0, 2.0, 0.5]).unwrap();
        let f = ScalarField::from_fn(&g, |x| (3.0 * x[0]).sin() * x[1] + x[2] * x[2]);
        let op = NeumannHelmholtz { grid: g, alpha: 0.0, beta: 1.0 };
        let x = f.interior_vec();
        let mut y = vec![0.0; x.len()];
        op.apply(&x, &mut y);
        let l = laplace(&f).interior_vec();
        for (a, b) in y.iter().zip(&l) {
            assert!((a + b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn noslip_operator_matches_field_laplacian() {
        for dims in [vec![5usize, 6], vec![5, 6, 4]] {
            let g = Grid::unit(&dims).unwrap();
            let u = VectorField::from_fn(&g, |a, x| (a as f64 + 1.0) * (2.0 * x[0] + x[1]).cos() + x[2]);
            let l = vector_laplace(&u);
            for a in 0..g.ndim() {
                let op = NoSlipHelmholtz { grid: g, axis: a, alpha: 0.0, beta: 1.0 };
                let x = u.interior_vec(a);
                let mut y = vec![0.0; x.len()];
                op.apply(&x, &mut y);
                for (p, q) in y.iter().zip(l.interior_vec(a)) {
                    assert!((p + q).abs() < 1e-10, "{p} vs {q}");
                }
            }
        }
    }

    #[test]
    fn operators_are_symmetric() {
        let g = Grid::unit(&[4, 5, 4]).unwrap();
        let ops: Vec<Box<dyn Fn() -> Vec<Vec<f64>>>> = vec![
            Box::new(move || dense_matrix(&NeumannHelmholtz { grid: g, alpha: 0.3, beta: 1.0 })),
            Box::new(move || dense_matrix(&NoSlipHelmholtz { grid: g, axis: 1, alpha: 0.0, beta: 1.0 })),
        ];
        for build in ops {
            let a = build();
            for i in 0..a.len() {
                for j in 0..a.len() {
                    assert!((a[i][j] - a[j][i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cg_matches_dense_solve() {
        let g = Grid::unit(&[4, 5]).unwrap();
        let op = NoSlipHelmholtz { grid: g, axis: 0, alpha: 1.0, beta: 0.05 };
        let n = op.dim();
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let mut x = vec![0.0; n];
        let out = pcg(&op, &b, &mut x, StopRule::Relative(1e-14), 200);
        assert!(out.converged);
        let exact = dense_solve(dense_matrix(&op), b).unwrap();
        for (p, q) in x.iter().zip(&exact) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_neumann_solve_is_zero_mean() {
        let g = Grid::unit(&[6, 6]).unwrap();
        let op = NeumannHelmholtz { grid: g, alpha: 0.0, beta: 1.0 };
        let n = op.dim();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut x = vec![1.0; n];
        let out = pcg(&op, &b, &mut x, StopRule::AbsoluteMax(1e-12), 500);
        assert!(out.converged);
        assert!(x.iter().sum::<f64>().abs() < 1e-10);
        let mut y = vec![0.0; n];
        op.apply(&x, &mut y);
        let mean = b.iter().sum::<f64>() / n as f64;
        for (p, q) in y.iter().zip(&b) {
            assert!((p - (q - mean)).abs() < 1e-11);
        }
    }

    #[test]
    fn cg_reports_failure() {
        let g = Grid::unit(&[8, 8]).unwrap();
        let op = NeumannHelmholtz { grid: g, alpha: 1e-6, beta: 1.0 };
        let b: Vec<f64> = (0..op.dim()).map(|i| i as f64).collect();
        let mut x = vec![0.0; op.dim()];
        let out = pcg(&op, &b, &mut x, StopRule::Relative(1e-14), 2);
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }
}
