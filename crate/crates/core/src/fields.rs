//! Uniform box grids, cell-centered scalars, face-centered (MAC) vectors and
//! the second-order discrete calculus on them.
//!
//! Storage is always three-dimensional. A 2D grid keeps a single inactive
//! third axis without ghost cells, so every stencil simply skips it.
//!
//! Scalars carry one ghost layer on every active axis. Velocity components
//! are stored on the faces normal to their own axis, `N_a + 1` faces along
//! that axis (the two wall faces are part of the array and stay zero) and
//! with a ghost layer on the tangential axes holding the mirrored no-slip
//! values.

use crate::error::FieldError;

/// Uniform axis-aligned box grid with 2 or 3 active axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    ndim: usize,
    dims: [usize; 3],
    extents: [f64; 3],
    spacing: [f64; 3],
}

impl Grid {
    pub fn new(dims: &[usize], extents: &[f64]) -> Result<Self, FieldError> {
        let ndim = dims.len();
        if !(2..=3).contains(&ndim) || extents.len() != ndim {
            return Err(FieldError::BadDimension(ndim));
        }
        let mut g = Grid {
            ndim,
            dims: [1; 3],
            extents: [1.0; 3],
            spacing: [1.0; 3],
        };
        for a in 0..ndim {
            if dims[a] < 4 {
                return Err(FieldError::TooFewCells {
                    axis: a,
                    cells: dims[a],
                });
            }
            if !(extents[a] > 0.0 && extents[a].is_finite()) {
                return Err(FieldError::BadExtent {
                    axis: a,
                    extent: extents[a],
                });
            }
            g.dims[a] = dims[a];
            g.extents[a] = extents[a];
            g.spacing[a] = extents[a] / dims[a] as f64;
        }
        Ok(g)
    }

    /// Unit box `[0,1]^d`.
    pub fn unit(dims: &[usize]) -> Result<Self, FieldError> {
        Self::new(dims, &vec![1.0; dims.len()])
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.ndim]
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.ndim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.ndim]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn num_cells(&self) -> usize {
        self.dims.iter().product()
    }

    /// Total number of interior (non-wall) faces over all active axes.
    pub fn num_interior_faces(&self) -> usize {
        (0..self.ndim).map(|a| self.interior_face_count(a)).sum()
    }

    /// Cell count along storage axis `a` (1 on an inactive axis).
    #[inline]
    pub(crate) fn n(&self, a: usize) -> usize {
        self.dims[a]
    }

    #[inline]
    pub(crate) fn h(&self, a: usize) -> f64 {
        self.spacing[a]
    }

    /// Ghost width on storage axis `a`.
    #[inline]
    pub(crate) fn g(&self, a: usize) -> usize {
        usize::from(a < self.ndim)
    }

    pub fn cell_center(&self, c: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..3 {
            x[a] = if a < self.ndim {
                (c[a] as f64 + 0.5) * self.spacing[a]
            } else {
                0.5
            };
        }
        x
    }

    /// Physical position of a padded scalar index (ghost cells included).
    pub(crate) fn padded_center(&self, p: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..3 {
            x[a] = if a < self.ndim {
                (p[a] as f64 - 0.5) * self.spacing[a]
            } else {
                0.5
            };
        }
        x
    }

    /// Position of the face with face-layout index `p` of component `a`.
    pub(crate) fn face_center(&self, a: usize, p: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for b in 0..3 {
            x[b] = if b == a {
                p[b] as f64 * self.spacing[b]
            } else if b < self.ndim {
                (p[b] as f64 - 0.5) * self.spacing[b]
            } else {
                0.5
            };
        }
        x
    }

    pub(crate) fn scalar_layout(&self) -> Layout {
        let mut shape = [1; 3];
        for a in 0..3 {
            shape[a] = self.dims[a] + 2 * self.g(a);
        }
        Layout::new(shape)
    }

    pub(crate) fn face_layout(&self, a: usize) -> Layout {
        let mut shape = [1; 3];
        for b in 0..3 {
            shape[b] = if b == a {
                self.dims[b] + 1
            } else {
                self.dims[b] + 2 * self.g(b)
            };
        }
        Layout::new(shape)
    }

    /// Interior cells in flat row-major order.
    pub fn cells(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [n0, n1, n2] = self.dims;
        (0..n0).flat_map(move |i| (0..n1).flat_map(move |j| (0..n2).map(move |k| [i, j, k])))
    }

    /// Padded scalar index of interior cell `c`.
    #[inline]
    pub(crate) fn pad(&self, c: [usize; 3]) -> [usize; 3] {
        [c[0] + self.g(0), c[1] + self.g(1), c[2] + self.g(2)]
    }

    /// Interior face count of component `a`.
    pub(crate) fn interior_face_count(&self, a: usize) -> usize {
        (0..3)
            .map(|b| if b == a { self.dims[b] - 1 } else { self.dims[b] })
            .product()
    }

    /// Face-layout indices of the interior faces of component `a`, in the
    /// flat order used by [`VectorField::interior_vec`].
    pub(crate) fn interior_faces(&self, a: usize) -> impl Iterator<Item = [usize; 3]> + '_ {
        let lo = [
            if a == 0 { 1 } else { self.g(0) },
            if a == 1 { 1 } else { self.g(1) },
            if a == 2 { 1 } else { self.g(2) },
        ];
        let hi = [
            lo[0] + if a == 0 { self.dims[0] - 1 } else { self.dims[0] },
            lo[1] + if a == 1 { self.dims[1] - 1 } else { self.dims[1] },
            lo[2] + if a == 2 { self.dims[2] - 1 } else { self.dims[2] },
        ];
        (lo[0]..hi[0]).flat_map(move |i| {
            (lo[1]..hi[1]).flat_map(move |j| (lo[2]..hi[2]).map(move |k| [i, j, k]))
        })
    }
}

/// Row-major index arithmetic for a 3D array.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Layout {
    pub shape: [usize; 3],
    pub strides: [usize; 3],
}

impl Layout {
    fn new(shape: [usize; 3]) -> Self {
        Layout {
            shape,
            strides: [shape[1] * shape[2], shape[2], 1],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    #[inline]
    pub fn at(&self, p: [usize; 3]) -> usize {
        p[0] * self.strides[0] + p[1] * self.strides[1] + p[2]
    }
}

#[inline]
pub(crate) fn shift(p: [usize; 3], a: usize, delta: isize) -> [usize; 3] {
    let mut q = p;
    q[a] = (q[a] as isize + delta) as usize;
    q
}

/// Boundary treatment of a cell-centered field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarBc {
    /// Ghost = mirrored interior value (zero normal derivative).
    Neumann,
    /// Ghost values are set by the producer and left untouched.
    FixedGhost,
}

/// Cell-centered scalar with one ghost layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    bc: ScalarBc,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        ScalarField {
            grid: *grid,
            bc: ScalarBc::Neumann,
            data: vec![value; grid.scalar_layout().len()],
        }
    }

    /// Samples `f` at interior cell centers and mirrors into the ghosts.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut s = Self::zeros(grid);
        let lay = grid.scalar_layout();
        for c in grid.cells() {
            s.data[lay.at(grid.pad(c))] = f(grid.cell_center(c));
        }
        s.apply_bc();
        s
    }

    /// Samples `f` at every padded cell center, ghosts included, and marks
    /// the ghosts as fixed.
    pub fn from_fn_with_ghosts(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let lay = grid.scalar_layout();
        let mut data = vec![0.0; lay.len()];
        for i in 0..lay.shape[0] {
            for j in 0..lay.shape[1] {
                for k in 0..lay.shape[2] {
                    data[lay.at([i, j, k])] = f(grid.padded_center([i, j, k]));
                }
            }
        }
        ScalarField {
            grid: *grid,
            bc: ScalarBc::FixedGhost,
            data,
        }
    }

    /// Builds a Neumann field from interior values in flat cell order.
    pub fn from_interior(grid: &Grid, values: &[f64]) -> Self {
        let mut s = Self::zeros(grid);
        s.set_interior(values);
        s
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bc(&self) -> ScalarBc {
        self.bc
    }

    pub fn with_bc(mut self, bc: ScalarBc) -> Self {
        self.bc = bc;
        self.apply_bc();
        self
    }

    /// Raw padded storage.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, c: [usize; 3]) -> f64 {
        self.data[self.grid.scalar_layout().at(self.grid.pad(c))]
    }

    pub fn set(&mut self, c: [usize; 3], v: f64) {
        let i = self.grid.scalar_layout().at(self.grid.pad(c));
        self.data[i] = v;
    }

    #[inline]
    pub(crate) fn at_padded(&self, p: [usize; 3]) -> f64 {
        self.data[self.grid.scalar_layout().at(p)]
    }

    /// Fills the ghost layer according to the boundary kind.
    pub fn apply_bc(&mut self) {
        if self.bc == ScalarBc::FixedGhost {
            return;
        }
        let lay = self.grid.scalar_layout();
        for a in 0..self.grid.ndim {
            let n = self.grid.dims[a];
            let (b, c) = match a {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            for pb in 0..lay.shape[b] {
                for pc in 0..lay.shape[c] {
                    let mut lo = [0; 3];
                    lo[b] = pb;
                    lo[c] = pc;
                    let mut hi = lo;
                    let mut lo_in = lo;
                    let mut hi_in = lo;
                    lo[a] = 0;
                    lo_in[a] = 1;
                    hi[a] = n + 1;
                    hi_in[a] = n;
                    self.data[lay.at(lo)] = self.data[lay.at(lo_in)];
                    self.data[lay.at(hi)] = self.data[lay.at(hi_in)];
                }
            }
        }
    }

    /// Interior values in flat cell order.
    pub fn interior_vec(&self) -> Vec<f64> {
        let lay = self.grid.scalar_layout();
        self.grid
            .cells()
            .map(|c| self.data[lay.at(self.grid.pad(c))])
            .collect()
    }

    pub fn set_interior(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.grid.num_cells());
        let lay = self.grid.scalar_layout();
        let grid = self.grid;
        for (c, v) in grid.cells().zip(values) {
            self.data[lay.at(grid.pad(c))] = *v;
        }
        self.apply_bc();
    }

    /// Cellwise map over interior values; result is a Neumann field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        let v: Vec<f64> = self.interior_vec().into_iter().map(f).collect();
        ScalarField::from_interior(&self.grid, &v)
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_eq!(self.grid, other.grid, "fields on different grids");
        let v: Vec<f64> = self
            .interior_vec()
            .into_iter()
            .zip(other.interior_vec())
            .map(|(a, b)| f(a, b))
            .collect();
        ScalarField::from_interior(&self.grid, &v)
    }

    pub fn min(&self) -> f64 {
        self.interior_vec().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.interior_vec()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.interior_vec()
            .into_iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Face-centered (staggered) velocity field with no-slip walls.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            grid: *grid,
            comps: (0..grid.ndim)
                .map(|a| vec![0.0; grid.face_layout(a).len()])
                .collect(),
        }
    }

    /// Samples component `f(a, x)` at interior face centers; wall faces are
    /// zero and the tangential ghosts are mirrored.
    pub fn from_fn(grid: &Grid, f: impl Fn(usize, [f64; 3]) -> f64) -> Self {
        let mut v = Self::zeros(grid);
        for a in 0..grid.ndim {
            let lay = grid.face_layout(a);
            for p in grid.interior_faces(a) {
                v.comps[a][lay.at(p)] = f(a, grid.face_center(a, p));
            }
        }
        v.apply_bc();
        v
    }

    /// Builds a field from interior face values, one flat slice per axis.
    pub fn from_interior(grid: &Grid, comps: &[Vec<f64>]) -> Self {
        let mut v = Self::zeros(grid);
        for (a, c) in comps.iter().enumerate() {
            v.set_interior(a, c);
        }
        v
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ndim(&self) -> usize {
        self.grid.ndim
    }

    /// Raw storage of component `a` (face layout, ghosts included).
    pub fn component(&self, a: usize) -> &[f64] {
        &self.comps[a]
    }

    #[inline]
    pub(crate) fn at(&self, a: usize, p: [usize; 3]) -> f64 {
        self.comps[a][self.grid.face_layout(a).at(p)]
    }

    #[inline]
    pub(crate) fn set_at(&mut self, a: usize, p: [usize; 3], v: f64) {
        let i = self.grid.face_layout(a).at(p);
        self.comps[a][i] = v;
    }

    /// Zeroes wall-normal faces and mirrors tangential ghosts (`-interior`),
    /// so that the wall value of every tangential component vanishes.
    pub fn apply_bc(&mut self) {
        let grid = self.grid;
        for a in 0..grid.ndim {
            let lay = grid.face_layout(a);
            let comp = &mut self.comps[a];
            for b in 0..grid.ndim {
                let (c1, c2) = match b {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                for p1 in 0..lay.shape[c1] {
                    for p2 in 0..lay.shape[c2] {
                        let mut lo = [0; 3];
                        lo[c1] = p1;
                        lo[c2] = p2;
                        if b == a {
                            let mut hi = lo;
                            hi[a] = grid.dims[a];
                            comp[lay.at(lo)] = 0.0;
                            comp[lay.at(hi)] = 0.0;
                        } else {
                            let n = grid.dims[b];
                            let mut lo_in = lo;
                            let mut hi = lo;
                            let mut hi_in = lo;
                            lo_in[b] = 1;
                            hi[b] = n + 1;
                            hi_in[b] = n;
                            comp[lay.at(lo)] = -comp[lay.at(lo_in)];
                            comp[lay.at(hi)] = -comp[lay.at(hi_in)];
                        }
                    }
                }
            }
        }
    }

    /// Interior face values of component `a` in flat order.
    pub fn interior_vec(&self, a: usize) -> Vec<f64> {
        let lay = self.grid.face_layout(a);
        self.grid
            .interior_faces(a)
            .map(|p| self.comps[a][lay.at(p)])
            .collect()
    }

    pub fn set_interior(&mut self, a: usize, values: &[f64]) {
        assert_eq!(values.len(), self.grid.interior_face_count(a));
        let lay = self.grid.face_layout(a);
        let grid = self.grid;
        for (p, v) in grid.interior_faces(a).zip(values) {
            self.comps[a][lay.at(p)] = *v;
        }
        self.apply_bc();
    }

    /// Largest absolute value over interior faces.
    pub fn max_abs(&self) -> f64 {
        (0..self.grid.ndim)
            .flat_map(|a| self.interior_vec(a))
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &VectorField) -> VectorField {
        assert_eq!(self.grid, other.grid, "fields on different grids");
        let mut out = self.clone();
        for a in 0..self.grid.ndim {
            for (o, w) in out.comps[a].iter_mut().zip(&other.comps[a]) {
                *o += alpha * w;
            }
        }
        out
    }

    pub fn scale(&self, alpha: f64) -> VectorField {
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            for v in c.iter_mut() {
                *v *= alpha;
            }
        }
        out
    }

    /// Velocity interpolated to interior cell centers, one field per axis.
    pub fn cell_centered(&self) -> Vec<ScalarField> {
        let grid = self.grid;
        (0..grid.ndim)
            .map(|a| {
                let vals: Vec<f64> = grid
                    .cells()
                    .map(|c| {
                        let p = grid.pad(c);
                        // faces p - e_a and p in the face layout
                        0.5 * (self.at(a, shift(p, a, -1)) + self.at(a, p))
                    })
                    .collect();
                ScalarField::from_interior(&grid, &vals)
            })
            .collect()
    }
}

/// Midpoint quadrature `sum f * vol` over interior cells.
pub fn integrate(f: &ScalarField) -> f64 {
    let vol = f.grid.cell_volume();
    f.interior_vec().iter().sum::<f64>() * vol
}

/// Discrete `L^p` norm; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64, FieldError> {
    if p.is_nan() || p < 1.0 {
        return Err(FieldError::InvalidExponent(p));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let vol = f.grid.cell_volume();
    let s: f64 = f.interior_vec().iter().map(|v| v.abs().powf(p)).sum();
    Ok((s * vol).powf(1.0 / p))
}

/// Face gradient `(f_R - f_L)/h` on interior faces; wall faces are zero.
pub fn grad(f: &ScalarField) -> VectorField {
    let grid = *f.grid();
    let mut v = VectorField::zeros(&grid);
    for a in 0..grid.ndim {
        let h = grid.h(a);
        let lay = grid.face_layout(a);
        for p in grid.interior_faces(a) {
            // left cell has padded index p, right cell p + e_a
            let d = (f.at_padded(shift(p, a, 1)) - f.at_padded(p)) / h;
            v.comps[a][lay.at(p)] = d;
        }
    }
    v.apply_bc();
    v
}

/// Cell divergence of a face field.
pub fn div(v: &VectorField) -> ScalarField {
    let grid = *v.grid();
    let vals: Vec<f64> = grid
        .cells()
        .map(|c| {
            let p = grid.pad(c);
            (0..grid.ndim)
                .map(|a| (v.at(a, p) - v.at(a, shift(p, a, -1))) / grid.h(a))
                .sum()
        })
        .collect();
    ScalarField::from_interior(&grid, &vals)
}

/// Seven-point (five-point in 2D) Laplacian using the ghost layer of `f`.
pub fn laplace(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let vals: Vec<f64> = grid
        .cells()
        .map(|c| {
            let p = grid.pad(c);
            let centre = f.at_padded(p);
            (0..grid.ndim)
                .map(|a| {
                    let h2 = grid.h(a) * grid.h(a);
                    (f.at_padded(shift(p, a, 1)) - 2.0 * centre + f.at_padded(shift(p, a, -1))) / h2
                })
                .sum()
        })
        .collect();
    ScalarField::from_interior(&grid, &vals)
}

/// Componentwise Laplacian of a no-slip face field (uses stored ghosts).
pub fn vector_laplace(u: &VectorField) -> VectorField {
    let grid = *u.grid();
    let mut out = VectorField::zeros(&grid);
    for a in 0..grid.ndim {
        let lay = grid.face_layout(a);
        for p in grid.interior_faces(a) {
            let centre = u.at(a, p);
            let s: f64 = (0..grid.ndim)
                .map(|b| {
                    let h2 = grid.h(b) * grid.h(b);
                    (u.at(a, shift(p, b, 1)) - 2.0 * centre + u.at(a, shift(p, b, -1))) / h2
                })
                .sum();
            out.comps[a][lay.at(p)] = s;
        }
    }
    out.apply_bc();
    out
}

/// `sum over interior faces of v . w * vol`, the discrete `L^2` pairing of
/// face fields.
pub fn face_inner(v: &VectorField, w: &VectorField) -> f64 {
    assert_eq!(v.grid, w.grid, "fields on different grids");
    let grid = v.grid;
    let mut s = 0.0;
    for a in 0..grid.ndim {
        let lay = grid.face_layout(a);
        for p in grid.interior_faces(a) {
            let i = lay.at(p);
            s += v.comps[a][i] * w.comps[a][i];
        }
    }
    s * grid.cell_volume()
}

/// `int |u|^2`.
pub fn kinetic(u: &VectorField) -> f64 {
    face_inner(u, u)
}

/// `int |grad u|^2` for a no-slip field, defined as `-(lap_h u, u)` so that
/// it is exactly the dissipation of the discrete viscous operator.
pub fn velocity_grad_energy(u: &VectorField) -> f64 {
    -face_inner(&vector_laplace(u), u)
}

/// `int |grad f|^2` as the sum of squared face differences.
pub fn scalar_grad_energy(f: &ScalarField) -> f64 {
    let g = grad(f);
    face_inner(&g, &g)
}

/// Arithmetic face mean of a scalar, interior faces only.
pub fn face_mean(f: &ScalarField) -> VectorField {
    let grid = *f.grid();
    let mut v = VectorField::zeros(&grid);
    for a in 0..grid.ndim {
        let lay = grid.face_layout(a);
        for p in grid.interior_faces(a) {
            v.comps[a][lay.at(p)] = 0.5 * (f.at_padded(p) + f.at_padded(shift(p, a, 1)));
        }
    }
    v.apply_bc();
    v
}

/// Face-wise product `s_face * v`, with `s` supplied as a face field.
pub fn face_product(s: &VectorField, v: &VectorField) -> VectorField {
    let mut out = v.clone();
    for a in 0..v.grid.ndim {
        for (o, x) in out.comps[a].iter_mut().zip(&s.comps[a]) {
            *o *= x;
        }
    }
    out.apply_bc();
    out
}

/// Discrete curl of a vector potential `a(c, x)` (component `c` at point
/// `x`). Component `c` is sampled on the edges parallel to axis `c`, so the
/// result is exactly divergence free. On a 2D grid only `c = 2` is used (a
/// stream function sampled at the nodes).
pub fn curl_of_potential(grid: &Grid, a: impl Fn(usize, [f64; 3]) -> f64) -> VectorField {
    let nd = grid.ndim;
    let mut v = VectorField::zeros(grid);
    for f in 0..nd {
        let lay = grid.face_layout(f);
        for p in grid.interior_faces(f) {
            let mut s = 0.0;
            for b in (0..nd).filter(|&b| b != f) {
                let c = 3 - f - b;
                let sign = if (f + 1) % 3 == b { 1.0 } else { -1.0 };
                let mut x = [0.5; 3];
                x[f] = p[f] as f64 * grid.h(f);
                if c < nd {
                    x[c] = (p[c] as f64 - 0.5) * grid.h(c);
                }
                x[b] = p[b] as f64 * grid.h(b);
                let hi = a(c, x);
                x[b] = (p[b] - 1) as f64 * grid.h(b);
                let lo = a(c, x);
                s += sign * (hi - lo) / grid.h(b);
            }
            v.comps[f][lay.at(p)] = s;
        }
    }
    v.apply_bc();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid3(n: usize) -> Grid {
        Grid::unit(&[n, n, n]).unwrap()
    }

    #[test]
    fn grid_rejects_bad_shapes() {
        assert!(matches!(
            Grid::unit(&[3, 8]),
            Err(FieldError::TooFewCells { axis: 0, cells: 3 })
        ));
        assert!(Grid::unit(&[8]).is_err());
        assert!(Grid::new(&[8, 8], &[1.0, 0.0]).is_err());
        let g = Grid::new(&[8, 4], &[2.0, 1.0]).unwrap();
        assert_eq!(g.spacing(), &[0.25, 0.25]);
        assert_relative_eq!(g.cell_volume(), 0.0625);
    }

    #[test]
    fn storage_sizes() {
        let g = Grid::unit(&[5, 6, 7]).unwrap();
        let s = ScalarField::zeros(&g);
        assert_eq!(s.data().len(), 7 * 8 * 9);
        let v = VectorField::zeros(&g);
        assert_eq!(v.component(0).len(), 6 * 8 * 9);
        assert_eq!(v.component(2).len(), 7 * 8 * 8);
        let g2 = Grid::unit(&[5, 6]).unwrap();
        assert_eq!(ScalarField::zeros(&g2).data().len(), 7 * 8);
        assert_eq!(g2.num_interior_faces(), 4 * 6 + 5 * 5);
    }

    #[test]
    fn integrate_constants_and_linear() {
        let g = grid3(6);
        assert_relative_eq!(integrate(&ScalarField::constant(&g, 1.0)), 1.0, epsilon = 1e-14);
        assert_eq!(integrate(&ScalarField::zeros(&g)), 0.0);
        for n in [4, 7, 10] {
            let g = Grid::unit(&[n, n + 1, n + 2]).unwrap();
            let f = ScalarField::from_fn(&g, |x| x[0]);
            assert_relative_eq!(integrate(&f), 0.5, epsilon = 1e-14);
        }
    }

    #[test]
    fn norms() {
        let g = grid3(5);
        let two = ScalarField::constant(&g, 2.0);
        assert_relative_eq!(lp_norm(&two, 2.0).unwrap(), 2.0, epsilon = 1e-14);
        let c = ScalarField::constant(&g, -3.5);
        assert_eq!(lp_norm(&c, f64::INFINITY).unwrap(), 3.5);
        assert!(matches!(lp_norm(&c, 0.5), Err(FieldError::InvalidExponent(_))));
        // x_1 on the unit cube: analytic L^2 norm 1/sqrt(3), midpoint error h^2/12
        let mut prev = f64::INFINITY;
        for n in [8, 16, 32] {
            let g = Grid::unit(&[n, 4, 4]).unwrap();
            let f = ScalarField::from_fn(&g, |x| x[0]);
            let err = (lp_norm(&f, 2.0).unwrap() - 1.0 / 3f64.sqrt()).abs();
            let h = 1.0 / n as f64;
            assert!(err <= h * h, "n={n} err={err}");
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn constant_has_no_gradient() {
        let g = grid3(6);
        let f = ScalarField::constant(&g, 4.2);
        assert_eq!(grad(&f).max_abs(), 0.0);
        assert_eq!(div(&grad(&f)).max_abs(), 0.0);
        assert_eq!(laplace(&f).max_abs(), 0.0);
    }

    #[test]
    fn laplace_of_quadratic() {
        let g = grid3(12);
        let f = ScalarField::from_fn(&g, |x| x[0] * x[0]);
        let l = laplace(&f);
        // away from the walls the stencil is exact for quadratics
        for c in g.cells() {
            if c[0] > 0 && c[0] < 11 {
                assert_relative_eq!(l.get(c), 2.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn ghost_mirroring_idempotent() {
        let g = Grid::unit(&[5, 6, 4]).unwrap();
        let mut f = ScalarField::from_fn(&g, |x| (7.0 * x[0]).sin() + x[1] * x[2]);
        let once = f.clone();
        f.apply_bc();
        assert_eq!(f.data(), once.data());
        // mirrored ghost: zero normal difference
        let lay = g.scalar_layout();
        for j in 1..=6 {
            for k in 1..=4 {
                assert_eq!(f.data()[lay.at([0, j, k])], f.data()[lay.at([1, j, k])]);
            }
        }
        let mut u = VectorField::from_fn(&g, |a, x| (a as f64 + 1.0) * x[0] * x[1]);
        let once = u.clone();
        u.apply_bc();
        assert_eq!(u, once);
    }

    #[test]
    fn wall_faces_are_zero() {
        let g = Grid::unit(&[5, 6, 4]).unwrap();
        let u = VectorField::from_fn(&g, |_, _| 1.0);
        for a in 0..3 {
            let lay = g.face_layout(a);
            for i in 0..lay.len() {
                let mut rem = i;
                let mut p = [0; 3];
                for b in 0..3 {
                    p[b] = rem / lay.strides[b];
                    rem %= lay.strides[b];
                }
                if p[a] == 0 || p[a] == g.dims()[a] {
                    assert_eq!(u.component(a)[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn integration_by_parts() {
        for dims in [vec![6usize, 7], vec![5, 6, 4]] {
            let g = Grid::unit(&dims).unwrap();
            let f = ScalarField::from_fn(&g, |x| (3.0 * x[0]).cos() + x[1] * x[1] - x[2]);
            let v = VectorField::from_fn(&g, |a, x| {
                (a as f64 + 1.0) * (2.0 * x[0] + x[1]).sin() + x[2]
            });
            let lhs = integrate(&f.zip_map(&div(&v), |a, b| a * b));
            let rhs = -face_inner(&v, &grad(&f));
            let scale = lp_norm(&f, 2.0).unwrap() * kinetic(&v).sqrt() / g.spacing()[0];
            assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn dirichlet_energy_matches_laplacian() {
        let g = Grid::unit(&[6, 5, 7]).unwrap();
        let f = ScalarField::from_fn(&g, |x| (2.0 * x[0]).sin() * x[1] + x[2]);
        let e1 = scalar_grad_energy(&f);
        let e2 = -integrate(&f.zip_map(&laplace(&f), |a, b| a * b));
        assert_relative_eq!(e1, e2, max_relative = 1e-12);
    }

    #[test]
    fn cell_centered_velocity() {
        let g = Grid::unit(&[4, 4]).unwrap();
        let u = VectorField::from_fn(&g, |a, _| if a == 0 { 1.0 } else { 0.0 });
        let cc = u.cell_centered();
        // first column of cells averages a wall face (0) with an interior face (1)
        assert_eq!(cc[0].get([0, 2, 0]), 0.5);
        assert_eq!(cc[0].get([1, 2, 0]), 1.0);
    }
}
