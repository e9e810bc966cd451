//! Normalised Bravais lattices of cell area `2 pi`, their duals, the
//! SL(2,Z) reduction of the shape parameter and the sampling grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Area of the rescaled fundamental cell.
pub const CELL_AREA: f64 = 2.0 * std::f64::consts::PI;

/// Lattice `ell (Z + tau Z)` scaled so that the fundamental cell has area `2 pi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeShape {
    /// Shape parameter, `Im tau > 0`.
    #[serde(with = "complex_pair")]
    pub tau: Complex64,
    /// Length of the first basis vector, `sqrt(2 pi / Im tau)`.
    pub ell: f64,
    /// Basis vectors `e1 = ell`, `e2 = ell tau` (as 2-vectors).
    pub basis: [[f64; 2]; 2],
    /// Dual vectors with `K_i . e_j = 2 pi delta_ij`.
    pub dual: [[f64; 2]; 2],
    pub cell_area: f64,
}

impl LatticeShape {
    pub fn new(tau: Complex64) -> Result<Self> {
        if !(tau.im > 0.0) || !tau.re.is_finite() || !tau.im.is_finite() {
            return invalid(format!("shape parameter needs Im tau > 0, got {tau}"));
        }
        let ell = (CELL_AREA / tau.im).sqrt();
        let e1 = [ell, 0.0];
        let e2 = [ell * tau.re, ell * tau.im];
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        let s = CELL_AREA / det;
        let k1 = [s * e2[1], -s * e2[0]];
        let k2 = [-s * e1[1], s * e1[0]];
        Ok(LatticeShape {
            tau,
            ell,
            basis: [e1, e2],
            dual: [k1, k2],
            cell_area: det,
        })
    }

    /// Square lattice, `tau = i`.
    pub fn square() -> Self {
        Self::new(Complex64::new(0.0, 1.0)).unwrap()
    }

    /// Hexagonal lattice, `tau = exp(i pi / 3)`.
    pub fn hexagonal() -> Self {
        Self::new(Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_3)).unwrap()
    }

    /// Cartesian point `t1 e1 + t2 e2`.
    pub fn point(&self, t1: f64, t2: f64) -> [f64; 2] {
        [
            t1 * self.basis[0][0] + t2 * self.basis[1][0],
            t1 * self.basis[0][1] + t2 * self.basis[1][1],
        ]
    }

    /// Dual vector `m1 K1 + m2 K2`.
    pub fn wavevector(&self, m1: f64, m2: f64) -> [f64; 2] {
        [
            m1 * self.dual[0][0] + m2 * self.dual[1][0],
            m1 * self.dual[0][1] + m2 * self.dual[1][1],
        ]
    }

    /// Cross product `e1 x e2`.
    pub fn basis_cross(&self) -> f64 {
        cross(self.basis[0], self.basis[1])
    }
}

/// Planar cross product `a x b = a1 b2 - a2 b1`.
pub fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Uniform grid in lattice coordinates, nodes `x = (j1 e1 + j2 e2) / N`,
/// ordered row-major in `(t1, t2)`: index `j1 * N + j2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub shape: LatticeShape,
    pub n: usize,
    pub points: Vec<[f64; 2]>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn index(&self, j1: usize, j2: usize) -> usize {
        j1 * self.n + j2
    }

    /// Quadrature weight per node, `|cell| / N^2`.
    pub fn weight(&self) -> f64 {
        self.shape.cell_area / (self.n * self.n) as f64
    }

    /// Index of the node `-x` (the grid is symmetric under inversion).
    pub fn mirror_index(&self, idx: usize) -> usize {
        let n = self.n;
        let (j1, j2) = (idx / n, idx % n);
        ((n - j1) % n) * n + (n - j2) % n
    }
}

/// Build the sampling grid; `N` must be even and at least 8.
pub fn make_grid(shape: LatticeShape, n: usize) -> Result<Grid> {
    if n < 8 || n % 2 != 0 {
        return invalid(format!("grid size must be even and >= 8, got {n}"));
    }
    let mut points = Vec::with_capacity(n * n);
    for j1 in 0..n {
        for j2 in 0..n {
            points.push(shape.point(j1 as f64 / n as f64, j2 as f64 / n as f64));
        }
    }
    Ok(Grid { shape, n, points })
}

/// Integer 2x2 matrix `[[a, b], [c, d]]` acting by `tau -> (a tau + b)/(c tau + d)`.
pub type Modular = [[i64; 2]; 2];

pub const IDENTITY: Modular = [[1, 0], [0, 1]];

pub fn mobius(m: &Modular, tau: Complex64) -> Complex64 {
    let (a, b, c, d) = (m[0][0] as f64, m[0][1] as f64, m[1][0] as f64, m[1][1] as f64);
    (tau * a + b) / (tau * c + d)
}

pub fn compose(m: &Modular, k: &Modular) -> Modular {
    [
        [
            m[0][0] * k[0][0] + m[0][1] * k[1][0],
            m[0][0] * k[0][1] + m[0][1] * k[1][1],
        ],
        [
            m[1][0] * k[0][0] + m[1][1] * k[1][0],
            m[1][0] * k[0][1] + m[1][1] * k[1][1],
        ],
    ]
}

/// Tolerance used to decide ties on the boundary of the fundamental domain.
const EDGE_TOL: f64 = 1e-12;

/// Reduce `tau` into the closure of the fundamental domain
/// `|tau| >= 1, -1/2 < Re tau <= 1/2`, returning the reduced value and the
/// SL(2,Z) matrix mapping `tau` to it. Points on the unit circle with
/// `Re tau < 0` are sent to their mirror image with `Re tau > 0`.
pub fn reduce_to_fundamental(tau: Complex64) -> Result<(Complex64, Modular)> {
    if !(tau.im > 0.0) || !tau.re.is_finite() || !tau.im.is_finite() {
        return invalid(format!("reduction needs Im tau > 0, got {tau}"));
    }
    let s: Modular = [[0, -1], [1, 0]];
    let mut m = IDENTITY;
    let mut t = tau;
    for _ in 0..10_000 {
        // translate Re t into (-1/2, 1/2]
        let k = (0.5 - t.re).floor() as i64;
        if k != 0 {
            m = compose(&[[1, k], [0, 1]], &m);
            t = mobius(&m, tau);
        }
        if t.re <= -0.5 + EDGE_TOL {
            m = compose(&[[1, 1], [0, 1]], &m);
            t = mobius(&m, tau);
        }
        let r2 = t.norm_sqr();
        if r2 < 1.0 - EDGE_TOL || (r2 <= 1.0 + EDGE_TOL && t.re < -EDGE_TOL) {
            m = compose(&s, &m);
            t = mobius(&m, tau);
            continue;
        }
        return Ok((t, m));
    }
    invalid(format!("reduction of {tau} did not terminate"))
}

/// Serialise complex numbers as `[re, im]`.
pub mod complex_pair {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}
