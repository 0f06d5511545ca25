//! Space-time test functions for the weak identities.
//!
//! A test function is a spatial profile times a smooth cutoff in time. Scalar
//! profiles are cosine products (zero normal derivative on every wall, also
//! for the mirrored discrete samples); solenoidal profiles are the discrete
//! curl of a compactly supported vector potential, so their discrete
//! divergence vanishes identically and they are zero near the walls.

use rand::Rng;

use crate::error::ResidualError;
use crate::fields::{curl_of_potential, div, Grid, ScalarField, VectorField};

/// Fourier coefficients of the normalised `sin^8` cutoff derivative:
/// `w(s) = 1 + sum_k c_k cos(2 pi k s)`.
const CUTOFF_COEFFS: [f64; 4] = [-56.0 / 35.0, 28.0 / 35.0, -8.0 / 35.0, 1.0 / 35.0];

/// Temporal recipe: `theta = 1` on `[0, t_flat]`, a `C^8` monotone descent on
/// `[t_flat, t_cut]`, zero afterwards.
///
/// The descent rate is a trigonometric polynomial of degree 4 on the descent
/// interval, so the trapezoid rule over any uniform grid with at least five
/// intervals spanning `[t_flat, t_cut]` integrates `theta'` exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeCutoff {
    pub t_flat: f64,
    pub t_cut: f64,
}

impl TimeCutoff {
    pub fn new(t_flat: f64, t_cut: f64) -> Self {
        assert!(
            t_flat >= 0.0 && t_cut > t_flat && t_cut.is_finite(),
            "need 0 <= t_flat < t_cut, got {t_flat}, {t_cut}"
        );
        TimeCutoff { t_flat, t_cut }
    }

    fn local(&self, t: f64) -> f64 {
        (t - self.t_flat) / (self.t_cut - self.t_flat)
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = self.local(t);
        if s <= 0.0 {
            return 1.0;
        }
        if s >= 1.0 {
            return 0.0;
        }
        let tau = 2.0 * std::f64::consts::PI;
        let integral: f64 = s + CUTOFF_COEFFS
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = (i + 1) as f64;
                c * (tau * k * s).sin() / (tau * k)
            })
            .sum::<f64>();
        1.0 - integral
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let s = self.local(t);
        if s <= 0.0 || s >= 1.0 {
            return 0.0;
        }
        let tau = 2.0 * std::f64::consts::PI;
        let w: f64 = 1.0 + CUTOFF_COEFFS
            .iter()
            .enumerate()
            .map(|(i, c)| c * (tau * (i + 1) as f64 * s).cos())
            .sum::<f64>();
        -w / (self.t_cut - self.t_flat)
    }
}

/// One term `coeff * prod_d cos(k_d pi x_d / L_d)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineMode {
    pub coeff: f64,
    pub k: [u32; 3],
}

/// One term `amp * prod_d b((x_d - center_d)/radius_d)` with the standard
/// bump `b(r) = exp(1 - 1/(1 - r^2))` on `|r| < 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpMode {
    pub amp: f64,
    pub center: [f64; 3],
    pub radius: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestKind {
    NeumannScalar,
    Solenoidal,
}

#[derive(Clone, Debug, PartialEq)]
enum Profile {
    Cosine { modes: Vec<CosineMode>, squared: bool },
    /// Potential components; in 2D only the third one (a stream function)
    /// is used.
    Curl { potential: [Vec<BumpMode>; 3] },
    Sum(Vec<(f64, Profile)>),
}

impl Profile {
    fn kind(&self) -> TestKind {
        match self {
            Profile::Cosine { .. } => TestKind::NeumannScalar,
            Profile::Curl { .. } => TestKind::Solenoidal,
            Profile::Sum(terms) => terms[0].1.kind(),
        }
    }

    fn nonnegative(&self) -> bool {
        match self {
            Profile::Cosine { modes, squared } => {
                *squared
                    || modes
                        .iter()
                        .all(|m| m.coeff >= 0.0 && m.k == [0, 0, 0])
            }
            Profile::Curl { .. } => false,
            Profile::Sum(terms) => terms.iter().all(|(w, p)| *w >= 0.0 && p.nonnegative()),
        }
    }

    fn scalar_at(&self, x: [f64; 3], ext: [f64; 3], nd: usize) -> f64 {
        match self {
            Profile::Cosine { modes, squared } => {
                let v: f64 = modes
                    .iter()
                    .map(|m| {
                        m.coeff
                            * (0..nd)
                                .map(|d| {
                                    (m.k[d] as f64 * std::f64::consts::PI * x[d] / ext[d]).cos()
                                })
                                .product::<f64>()
                    })
                    .sum();
                if *squared {
                    v * v
                } else {
                    v
                }
            }
            Profile::Sum(terms) => terms.iter().map(|(w, p)| w * p.scalar_at(x, ext, nd)).sum(),
            Profile::Curl { .. } => unreachable!("kind checked by caller"),
        }
    }

    fn potential_at(&self, c: usize, x: [f64; 3], nd: usize) -> f64 {
        match self {
            Profile::Curl { potential } => potential[c]
                .iter()
                .map(|b| {
                    b.amp
                        * (0..nd)
                            .map(|d| bump((x[d] - b.center[d]) / b.radius[d]))
                            .product::<f64>()
                })
                .sum(),
            Profile::Sum(terms) => terms.iter().map(|(w, p)| w * p.potential_at(c, x, nd)).sum(),
            Profile::Cosine { .. } => unreachable!("kind checked by caller"),
        }
    }
}

fn bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r * r)).exp()
    }
}

/// A test function `profile(x) * theta(t)` on a fixed box.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    profile: Profile,
    time: TimeCutoff,
    extents: [f64; 3],
    ndim: usize,
}

impl TestFunction {
    fn boxed(grid: &Grid) -> ([f64; 3], usize) {
        let mut ext = [1.0; 3];
        ext[..grid.ndim()].copy_from_slice(grid.extents());
        (ext, grid.ndim())
    }

    /// Scalar cosine expansion, optionally squared (which makes it
    /// nonnegative). Wavenumbers on an inactive axis are ignored.
    pub fn cosine(grid: &Grid, modes: Vec<CosineMode>, squared: bool, time: TimeCutoff) -> Self {
        let (extents, ndim) = Self::boxed(grid);
        TestFunction {
            profile: Profile::Cosine { modes, squared },
            time,
            extents,
            ndim,
        }
    }

    /// Spatially constant scalar.
    pub fn constant(grid: &Grid, value: f64, time: TimeCutoff) -> Self {
        Self::cosine(grid, vec![CosineMode { coeff: value, k: [0; 3] }], false, time)
    }

    /// Discrete curl of a bump-sum vector potential. Bumps must keep clear of
    /// the walls for the result to vanish there.
    pub fn curl_of_bumps(grid: &Grid, potential: [Vec<BumpMode>; 3], time: TimeCutoff) -> Self {
        let (extents, ndim) = Self::boxed(grid);
        TestFunction {
            profile: Profile::Curl { potential },
            time,
            extents,
            ndim,
        }
    }

    /// `alpha * f + beta * g`; both must share kind, box and time cutoff.
    pub fn combine(alpha: f64, f: &TestFunction, beta: f64, g: &TestFunction) -> Result<Self, ResidualError> {
        if f.kind() != g.kind() || f.time != g.time || f.extents != g.extents || f.ndim != g.ndim {
            return Err(ResidualError::WrongKind);
        }
        Ok(TestFunction {
            profile: Profile::Sum(vec![(alpha, f.profile.clone()), (beta, g.profile.clone())]),
            time: f.time,
            extents: f.extents,
            ndim: f.ndim,
        })
    }

    /// Random cosine expansion with 1 to 4 modes and wavenumbers up to 3.
    pub fn random_scalar(rng: &mut impl Rng, grid: &Grid, time: TimeCutoff, nonnegative: bool) -> Self {
        let count = rng.random_range(1..=4);
        let modes = (0..count)
            .map(|_| {
                let mut k = [0u32; 3];
                for kd in k.iter_mut().take(grid.ndim()) {
                    *kd = rng.random_range(0..=3);
                }
                CosineMode {
                    coeff: rng.random_range(-1.0..1.0),
                    k,
                }
            })
            .collect();
        Self::cosine(grid, modes, nonnegative, time)
    }

    /// Random solenoidal field supported in `[0.1 L, 0.9 L]` on every axis.
    pub fn random_solenoidal(rng: &mut impl Rng, grid: &Grid, time: TimeCutoff) -> Self {
        let (ext, nd) = Self::boxed(grid);
        let mut potential: [Vec<BumpMode>; 3] = Default::default();
        let used: Vec<usize> = if nd == 2 { vec![2] } else { vec![0, 1, 2] };
        for c in used {
            let count = rng.random_range(1..=2);
            for _ in 0..count {
                let mut center = [0.5; 3];
                let mut radius = [1.0; 3];
                for d in 0..nd {
                    center[d] = rng.random_range(0.4..0.6) * ext[d];
                    radius[d] = rng.random_range(0.2..0.3) * ext[d];
                }
                potential[c].push(BumpMode {
                    amp: rng.random_range(-1.0..1.0),
                    center,
                    radius,
                });
            }
        }
        Self::curl_of_bumps(grid, potential, time)
    }

    pub fn kind(&self) -> TestKind {
        self.profile.kind()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.profile.nonnegative()
    }

    pub fn time(&self) -> &TimeCutoff {
        &self.time
    }

    pub fn support_end(&self) -> f64 {
        self.time.t_cut
    }

    fn check_grid(&self, grid: &Grid) {
        let (ext, nd) = Self::boxed(grid);
        assert!(ext == self.extents && nd == self.ndim, "test function built for another box");
    }

    /// Spatial profile sampled at every padded cell center (ghosts included).
    pub fn scalar_profile(&self, grid: &Grid) -> Result<ScalarField, ResidualError> {
        if self.kind() != TestKind::NeumannScalar {
            return Err(ResidualError::WrongKind);
        }
        self.check_grid(grid);
        let (ext, nd) = (self.extents, self.ndim);
        Ok(ScalarField::from_fn_with_ghosts(grid, |x| self.profile.scalar_at(x, ext, nd)))
    }

    /// Discrete curl of the potential on the faces of `grid`.
    pub fn vector_profile(&self, grid: &Grid) -> Result<VectorField, ResidualError> {
        if self.kind() != TestKind::Solenoidal {
            return Err(ResidualError::WrongKind);
        }
        self.check_grid(grid);
        let nd = self.ndim;
        let v = curl_of_potential(grid, |c, x| self.profile.potential_at(c, x, nd));
        Ok(v)
    }

    /// Largest one-sided normal difference across the walls of the sampled
    /// scalar profile, the discrete `d phi / d nu`.
    pub fn wall_normal_defect(&self, grid: &Grid) -> Result<f64, ResidualError> {
        let f = self.scalar_profile(grid)?;
        let mut worst: f64 = 0.0;
        for c in grid.cells() {
            let p = grid.pad(c);
            for a in 0..grid.ndim() {
                for (edge, ghost) in [(0usize, 0usize), (grid.dims()[a] - 1, grid.dims()[a] + 1)] {
                    if c[a] == edge {
                        let mut q = p;
                        q[a] = ghost;
                        worst = worst.max((f.at_padded(q) - f.at_padded(p)).abs() / grid.h(a));
                    }
                }
            }
        }
        Ok(worst)
    }

    /// Largest cell divergence of the discrete solenoidal profile.
    pub fn divergence_defect(&self, grid: &Grid) -> Result<f64, ResidualError> {
        Ok(div(&self.vector_profile(grid)?).max_abs())
    }
}
