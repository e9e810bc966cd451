//! Grid calculus on the oblique index torus.
//!
//! Periodic fields are differentiated spectrally (2D DFT over the lattice
//! coordinates). Flux-sector fields have no global Fourier basis; they are
//! differentiated with covariant differences whose link variables carry the
//! exact Peierls phase of the symmetric-gauge background `a^n = (n/2) J x`
//! and, optionally, the exact edge integral of a periodic potential.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::{cross, Grid};

pub type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Quasi-periodicity class of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Sector {
    /// Lattice-periodic.
    Periodic,
    /// `w(x+s) = exp(i((n/2) s x x + c_s)) w(x)` with `c_{e1} = c_{e2} = 0`.
    Flux(i32),
}

impl Sector {
    /// Sector of a pointwise product.
    pub fn times(self, other: Sector) -> Sector {
        Sector::from_flux(self.flux() + other.flux())
    }

    /// Sector of the complex conjugate.
    pub fn conj(self) -> Sector {
        Sector::from_flux(-self.flux())
    }

    pub fn flux(self) -> i32 {
        match self {
            Sector::Periodic => 0,
            Sector::Flux(n) => n,
        }
    }

    fn from_flux(n: i32) -> Sector {
        if n == 0 {
            Sector::Periodic
        } else {
            Sector::Flux(n)
        }
    }
}

/// Complex scalar (one component) or 2-vector (two components) samples on an `N x N` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub sector: Sector,
    pub n: usize,
    pub comps: Vec<Vec<C64>>,
}

impl GridField {
    pub fn zeros(sector: Sector, n: usize, ncomp: usize) -> Self {
        GridField {
            sector,
            n,
            comps: vec![vec![C64::new(0.0, 0.0); n * n]; ncomp],
        }
    }

    pub fn scalar(sector: Sector, n: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), n * n, "scalar field has wrong length");
        GridField {
            sector,
            n,
            comps: vec![data],
        }
    }

    pub fn vector(sector: Sector, n: usize, c1: Vec<C64>, c2: Vec<C64>) -> Self {
        assert_eq!(c1.len(), n * n, "vector field has wrong length");
        assert_eq!(c2.len(), n * n, "vector field has wrong length");
        GridField {
            sector,
            n,
            comps: vec![c1, c2],
        }
    }

    /// Real periodic scalar from real samples.
    pub fn real_scalar(n: usize, data: &[f64]) -> Self {
        Self::scalar(Sector::Periodic, n, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Constant periodic field.
    pub fn constant(n: usize, ncomp: usize, value: &[C64]) -> Self {
        GridField {
            sector: Sector::Periodic,
            n,
            comps: (0..ncomp).map(|c| vec![value[c]; n * n]).collect(),
        }
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn check_compatible(&self, other: &GridField) -> Result<()> {
        if self.sector != other.sector || self.n != other.n || self.ncomp() != other.ncomp() {
            return Err(Error::SectorMismatch(format!(
                "{:?}/N={}/{} components vs {:?}/N={}/{} components",
                self.sector,
                self.n,
                self.ncomp(),
                other.sector,
                other.n,
                other.ncomp()
            )));
        }
        Ok(())
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: C64, other: &GridField) -> Result<GridField> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (c, o) in out.comps.iter_mut().zip(&other.comps) {
            for (a, b) in c.iter_mut().zip(o) {
                *a += alpha * b;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, alpha: C64) -> GridField {
        let mut out = self.clone();
        out.comps
            .iter_mut()
            .for_each(|c| c.iter_mut().for_each(|v| *v *= alpha));
        out
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> GridField {
        let mut out = self.clone();
        out.comps.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v = f(*v)));
        out
    }

    /// Cell average of a periodic scalar, `(1/|cell|) int f`.
    pub fn average(&self) -> Result<C64> {
        if self.sector != Sector::Periodic || self.ncomp() != 1 {
            return Err(Error::SectorMismatch(
                "cell average needs a periodic scalar field".into(),
            ));
        }
        Ok(mean(&self.comps[0]))
    }

    /// `<self, other> = <conj(self) . other>` as a cell average.
    pub fn inner(&self, other: &GridField) -> Result<C64> {
        self.check_compatible(other)?;
        Ok(self.comps.iter().zip(&other.comps).map(|(a, b)| dot(a, b)).sum())
    }

    /// `sqrt(<|f|^2>)`.
    pub fn norm(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
            / self.n as f64
    }

    /// Pointwise `|f|^2` (summed over components), a periodic scalar.
    pub fn abs2(&self) -> GridField {
        let mut out = vec![C64::new(0.0, 0.0); self.len()];
        for c in &self.comps {
            for (o, v) in out.iter_mut().zip(c) {
                o.re += v.norm_sqr();
            }
        }
        GridField::scalar(Sector::Periodic, self.n, out)
    }

    /// Largest imaginary part over all samples.
    pub fn max_imag(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter().map(|v| v.im.abs()))
            .fold(0.0, f64::max)
    }

    pub fn real_part(&self) -> GridField {
        self.map(|v| C64::new(v.re, 0.0))
    }

    /// CSV export `t1,t2,re,im` (one `re_k,im_k` pair per component) with
    /// 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t1,t2");
        if self.ncomp() == 1 {
            out.push_str(",re,im\n");
        } else {
            for k in 1..=self.ncomp() {
                out.push_str(&format!(",re{k},im{k}"));
            }
            out.push('\n');
        }
        let n = self.n;
        for idx in 0..self.len() {
            let (j1, j2) = (idx / n, idx % n);
            out.push_str(&format!("{:.16e},{:.16e}", j1 as f64 / n as f64, j2 as f64 / n as f64));
            for c in &self.comps {
                out.push_str(&format!(",{:.16e},{:.16e}", c[idx].re, c[idx].im));
            }
            out.push('\n');
        }
        out
    }
}

/// Mean of samples.
pub fn mean(v: &[C64]) -> C64 {
    v.iter().sum::<C64>() / v.len() as f64
}

/// Cell-average inner product `<conj(a) b>`.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>() / a.len() as f64
}

/// A candidate configuration `(w, a, z, phi)` of the rescaled problem.
///
/// `a` holds the deviation `alpha` from the background `a^n / e`; the
/// background itself is handled analytically.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub w: GridField,
    pub a: GridField,
    pub z: GridField,
    pub phi: GridField,
}

impl FieldState {
    /// The homogeneous vacuum `(0, a^n/e, 0, xi)`.
    pub fn vacuum(n_grid: usize, flux: i32, xi: f64) -> Self {
        FieldState {
            w: GridField::zeros(Sector::Flux(flux), n_grid, 2),
            a: GridField::zeros(Sector::Periodic, n_grid, 2),
            z: GridField::zeros(Sector::Periodic, n_grid, 2),
            phi: GridField::constant(n_grid, 1, &[C64::new(xi, 0.0)]),
        }
    }

    pub fn n(&self) -> usize {
        self.w.n
    }

    pub fn flux(&self) -> i32 {
        self.w.sector.flux()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.w.n;
        let ok = matches!(self.w.sector, Sector::Flux(_))
            && self.w.ncomp() == 2
            && self.a.sector == Sector::Periodic
            && self.a.ncomp() == 2
            && self.z.sector == Sector::Periodic
            && self.z.ncomp() == 2
            && self.phi.sector == Sector::Periodic
            && self.phi.ncomp() == 1
            && [self.a.n, self.z.n, self.phi.n].iter().all(|&m| m == n);
        if ok {
            Ok(())
        } else {
            Err(Error::SectorMismatch(
                "field state needs flux-sector w and periodic a, z, phi on one grid".into(),
            ))
        }
    }

    /// `self + eps * dir`, component-wise.
    pub fn axpy(&self, eps: f64, dir: &FieldState) -> Result<FieldState> {
        let e = C64::new(eps, 0.0);
        Ok(FieldState {
            w: self.w.axpy(e, &dir.w)?,
            a: self.a.axpy(e, &dir.a)?,
            z: self.z.axpy(e, &dir.z)?,
            phi: self.phi.axpy(e, &dir.phi)?,
        })
    }

    /// Global phase rotation `T_delta = (e^{i delta}, 1, 1, 1)`.
    pub fn phase_rotate(&self, delta: f64) -> FieldState {
        let mut out = self.clone();
        out.w = self.w.scale(C64::from_polar(1.0, delta));
        out
    }
}

/// Spectral data for periodic fields on the index torus.
pub struct Spectral {
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Cartesian derivative symbols `k~` (Nyquist indices zeroed), per DFT index.
    pub k: [Vec<f64>; 2],
    /// `|k~|^2`, the symbol of `-Delta`.
    pub k2: Vec<f64>,
    /// Signed integer modes `(m1, m2)` per DFT index.
    pub modes: Vec<(i64, i64)>,
}

impl Spectral {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.n;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let signed = |j: usize| -> i64 {
            if j <= n / 2 {
                j as i64
            } else {
                j as i64 - n as i64
            }
        };
        let tilde = |j: usize| -> f64 {
            if j == n / 2 {
                0.0
            } else {
                signed(j) as f64
            }
        };
        let mut kx = vec![0.0; n * n];
        let mut ky = vec![0.0; n * n];
        let mut k2 = vec![0.0; n * n];
        let mut modes = vec![(0, 0); n * n];
        for j1 in 0..n {
            for j2 in 0..n {
                let idx = j1 * n + j2;
                let kv = grid.shape.wavevector(tilde(j1), tilde(j2));
                kx[idx] = kv[0];
                ky[idx] = kv[1];
                k2[idx] = kv[0] * kv[0] + kv[1] * kv[1];
                modes[idx] = (signed(j1), signed(j2));
            }
        }
        Spectral {
            n,
            fwd,
            inv,
            k: [kx, ky],
            k2,
            modes,
        }
    }

    fn fft2(&self, data: &mut [C64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        // rows (contiguous in j2)
        for row in data.chunks_mut(n) {
            plan.process(row);
        }
        // columns
        let mut col = vec![C64::new(0.0, 0.0); n];
        for j2 in 0..n {
            for j1 in 0..n {
                col[j1] = data[j1 * n + j2];
            }
            plan.process(&mut col);
            for j1 in 0..n {
                data[j1 * n + j2] = col[j1];
            }
        }
        if inverse {
            let s = 1.0 / (n * n) as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// DFT coefficients `F[m] = (1/N^2) sum_j f[j] e^{-2 pi i m.j / N}`,
    /// i.e. the amplitudes of `e^{i k.x}`.
    pub fn forward(&self, f: &[C64]) -> Vec<C64> {
        let mut d = f.to_vec();
        self.fft2(&mut d, false);
        let s = 1.0 / (self.n * self.n) as f64;
        d.iter_mut().for_each(|v| *v *= s);
        d
    }

    /// Inverse of [`Spectral::forward`].
    pub fn backward(&self, coeffs: &[C64]) -> Vec<C64> {
        let mut d = coeffs.to_vec();
        self.fft2(&mut d, true);
        let s = (self.n * self.n) as f64;
        d.iter_mut().for_each(|v| *v *= s);
        d
    }

    /// Apply a Fourier multiplier given per DFT index.
    pub fn multiply(&self, f: &[C64], symbol: impl Fn(usize) -> C64) -> Vec<C64> {
        let mut d = self.forward(f);
        d.iter_mut().enumerate().for_each(|(i, v)| *v *= symbol(i));
        self.backward(&d)
    }

    /// Cartesian partial derivative `d/dx_c`.
    pub fn deriv(&self, f: &[C64], c: usize) -> Vec<C64> {
        self.multiply(f, |i| I * self.k[c][i])
    }

    pub fn grad(&self, f: &[C64]) -> [Vec<C64>; 2] {
        let d = self.forward(f);
        let mut gx = d.clone();
        let mut gy = d;
        for i in 0..gx.len() {
            gx[i] *= I * self.k[0][i];
            gy[i] *= I * self.k[1][i];
        }
        [self.backward(&gx), self.backward(&gy)]
    }

    /// `curl v = d1 v2 - d2 v1`.
    pub fn curl(&self, v1: &[C64], v2: &[C64]) -> Vec<C64> {
        let a = self.forward(v1);
        let b = self.forward(v2);
        let c: Vec<C64> = (0..a.len())
            .map(|i| I * (self.k[0][i] * b[i] - self.k[1][i] * a[i]))
            .collect();
        self.backward(&c)
    }

    /// `curl* s = (d2 s, -d1 s)`, the adjoint of `curl`.
    pub fn curl_adj(&self, s: &[C64]) -> [Vec<C64>; 2] {
        let d = self.forward(s);
        let a: Vec<C64> = (0..d.len()).map(|i| I * self.k[1][i] * d[i]).collect();
        let b: Vec<C64> = (0..d.len()).map(|i| -I * self.k[0][i] * d[i]).collect();
        [self.backward(&a), self.backward(&b)]
    }

    pub fn div(&self, v1: &[C64], v2: &[C64]) -> Vec<C64> {
        let a = self.forward(v1);
        let b = self.forward(v2);
        let c: Vec<C64> = (0..a.len())
            .map(|i| I * (self.k[0][i] * a[i] + self.k[1][i] * b[i]))
            .collect();
        self.backward(&c)
    }

    /// `-Delta f` with symbol `|k~|^2`.
    pub fn neg_laplacian(&self, f: &[C64]) -> Vec<C64> {
        self.multiply(f, |i| C64::new(self.k2[i], 0.0))
    }

    /// Exact integral of a periodic scalar along the grid edge from each
    /// node `x` to `x + e_dir / N`.
    pub fn edge_integral(&self, p: &[C64], dir: usize) -> Vec<C64> {
        self.multiply(p, |i| self.edge_symbol(i, dir))
    }

    /// Transpose of [`Spectral::edge_integral`] with respect to the real sum pairing.
    pub fn edge_integral_adj(&self, p: &[C64], dir: usize) -> Vec<C64> {
        self.multiply(p, |i| self.edge_symbol(i, dir).conj())
    }

    fn edge_symbol(&self, i: usize, dir: usize) -> C64 {
        let n = self.n;
        let (m1, m2) = self.modes[i];
        let m = if dir == 0 { m1 } else { m2 };
        if m == 0 {
            return C64::new(1.0, 0.0);
        }
        let phi = 2.0 * std::f64::consts::PI * m as f64 / n as f64;
        let s = (C64::from_polar(1.0, phi) - 1.0) / (I * phi);
        if 2 * m.unsigned_abs() as usize == n {
            C64::new(s.re, 0.0)
        } else {
            s
        }
    }
}

/// Link variables `U_i(x)` for the grid edges `x -> x + e_i/N`, wrap-around
/// phases of the flux sector included.
#[derive(Debug, Clone)]
pub struct Links {
    pub u: [Vec<C64>; 2],
}

/// Cotangents of the forward and backward edge differences of one field.
#[derive(Debug, Clone)]
pub(crate) struct EdgeCotangent {
    pub fwd: [Vec<C64>; 2],
    pub bwd: [Vec<C64>; 2],
}

impl EdgeCotangent {
    pub fn zeros(len: usize) -> Self {
        let z = || vec![C64::new(0.0, 0.0); len];
        EdgeCotangent {
            fwd: [z(), z()],
            bwd: [z(), z()],
        }
    }
}

/// Discretisation context for one lattice shape, grid size and flux.
pub struct Calculus {
    pub grid: Grid,
    pub flux: i32,
    pub spectral: Spectral,
    /// Dual basis `e^i = K_i / (2 pi)`: `grad = sum_i e^i d/dt_i`.
    pub dual: [[f64; 2]; 2],
    background: Links,
}

impl Calculus {
    pub fn new(grid: &Grid, flux: i32) -> Self {
        let n = grid.n;
        let shape = grid.shape;
        let nf = flux as f64;
        let h = [
            [shape.basis[0][0] / n as f64, shape.basis[0][1] / n as f64],
            [shape.basis[1][0] / n as f64, shape.basis[1][1] / n as f64],
        ];
        let mut u = [vec![C64::new(0.0, 0.0); n * n], vec![C64::new(0.0, 0.0); n * n]];
        for j1 in 0..n {
            for j2 in 0..n {
                let idx = j1 * n + j2;
                let x = grid.points[idx];
                for dir in 0..2 {
                    let mut phase = -0.5 * nf * cross(x, h[dir]);
                    let wraps = if dir == 0 { j1 == n - 1 } else { j2 == n - 1 };
                    if wraps {
                        // the neighbour x + h equals x' + e_dir with x' a grid node
                        let xp = [
                            x[0] + h[dir][0] - shape.basis[dir][0],
                            x[1] + h[dir][1] - shape.basis[dir][1],
                        ];
                        phase += 0.5 * nf * cross(shape.basis[dir], xp);
                    }
                    u[dir][idx] = C64::from_polar(1.0, phase);
                }
            }
        }
        let tp = 2.0 * std::f64::consts::PI;
        Calculus {
            grid: grid.clone(),
            flux,
            spectral: Spectral::new(grid),
            dual: [
                [shape.dual[0][0] / tp, shape.dual[0][1] / tp],
                [shape.dual[1][0] / tp, shape.dual[1][1] / tp],
            ],
            background: Links { u },
        }
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// Index of the neighbour `x + s e_dir / N`, `s = +-1`.
    #[inline]
    pub fn shift(&self, idx: usize, dir: usize, forward: bool) -> usize {
        let n = self.grid.n;
        let (j1, j2) = (idx / n, idx % n);
        match (dir, forward) {
            (0, true) => ((j1 + 1) % n) * n + j2,
            (0, false) => ((j1 + n - 1) % n) * n + j2,
            (_, true) => j1 * n + (j2 + 1) % n,
            (_, false) => j1 * n + (j2 + n - 1) % n,
        }
    }

    /// Links of the background `a^n` alone.
    pub fn background_links(&self) -> &Links {
        &self.background
    }

    /// Links of `a^n + nu`, where `nu` is a real periodic 2-vector potential;
    /// the periodic part enters through its exact (spectral) edge integral.
    pub fn links(&self, nu: Option<&GridField>) -> Result<Links> {
        let Some(nu) = nu else {
            return Ok(self.background.clone());
        };
        self.check_periodic_vector(nu)?;
        let theta = self.edge_phases(nu);
        let mut u = self.background.u.clone();
        for dir in 0..2 {
            for (uv, t) in u[dir].iter_mut().zip(&theta[dir]) {
                *uv *= C64::from_polar(1.0, -t.re);
            }
        }
        Ok(Links { u })
    }

    /// `theta_i(x) = int_x^{x + e_i/N} nu . dl`.
    pub fn edge_phases(&self, nu: &GridField) -> [Vec<C64>; 2] {
        let n = self.n() as f64;
        let b = self.grid.shape.basis;
        let mut out: [Vec<C64>; 2] = [Vec::new(), Vec::new()];
        for dir in 0..2 {
            let p: Vec<C64> = nu.comps[0]
                .iter()
                .zip(&nu.comps[1])
                .map(|(a, c)| (a * b[dir][0] + c * b[dir][1]) / n)
                .collect();
            out[dir] = self.spectral.edge_integral(&p, dir);
        }
        out
    }

    fn check_periodic_vector(&self, v: &GridField) -> Result<()> {
        if v.sector != Sector::Periodic || v.ncomp() != 2 || v.n != self.n() {
            return Err(Error::SectorMismatch(
                "expected a periodic 2-vector field on this grid".into(),
            ));
        }
        Ok(())
    }

    fn check_flux(&self, f: &GridField, ncomp: usize) -> Result<()> {
        if f.sector != Sector::Flux(self.flux) || f.ncomp() != ncomp || f.n != self.n() {
            return Err(Error::SectorMismatch(format!(
                "expected a flux-{} field with {ncomp} component(s) on N={}, got {:?} with {} on N={}",
                self.flux,
                self.n(),
                f.sector,
                f.ncomp(),
                f.n
            )));
        }
        Ok(())
    }

    /// Central covariant difference along lattice direction `dir` (per unit `t_dir`).
    fn central(&self, f: &[C64], links: &Links, dir: usize) -> Vec<C64> {
        let half = 0.5 * self.n() as f64;
        (0..f.len())
            .map(|x| {
                let xp = self.shift(x, dir, true);
                let xm = self.shift(x, dir, false);
                half * (links.u[dir][x] * f[xp] - links.u[dir][xm].conj() * f[xm])
            })
            .collect()
    }

    /// Covariant gradient `grad_q f = (d - i q) f`.
    ///
    /// Flux-sector inputs use central differences with link phases
    /// (`q = a^n + nu`); periodic inputs are differentiated spectrally and
    /// `nu` (if given) multiplies pointwise.
    pub fn cov_grad(&self, f: &GridField, nu: Option<&GridField>) -> Result<GridField> {
        if f.ncomp() != 1 {
            return Err(Error::SectorMismatch("cov_grad expects a scalar field".into()));
        }
        match f.sector {
            Sector::Periodic => {
                let [mut gx, mut gy] = self.spectral.grad(&f.comps[0]);
                if let Some(nu) = nu {
                    self.check_periodic_vector(nu)?;
                    for i in 0..gx.len() {
                        gx[i] -= I * nu.comps[0][i] * f.comps[0][i];
                        gy[i] -= I * nu.comps[1][i] * f.comps[0][i];
                    }
                }
                Ok(GridField::vector(Sector::Periodic, f.n, gx, gy))
            }
            Sector::Flux(_) => {
                self.check_flux(f, 1)?;
                let links = self.links(nu)?;
                let d = [
                    self.central(&f.comps[0], &links, 0),
                    self.central(&f.comps[0], &links, 1),
                ];
                Ok(GridField::vector(
                    f.sector,
                    f.n,
                    self.to_cartesian(&d, 0),
                    self.to_cartesian(&d, 1),
                ))
            }
        }
    }

    /// `sum_i (e^i)_c d_i`.
    fn to_cartesian(&self, d: &[Vec<C64>; 2], c: usize) -> Vec<C64> {
        d[0].iter()
            .zip(&d[1])
            .map(|(a, b)| a * self.dual[0][c] + b * self.dual[1][c])
            .collect()
    }

    /// `curl_q v = (grad_q)_1 v_2 - (grad_q)_2 v_1`.
    pub fn curl2(&self, v: &GridField, nu: Option<&GridField>) -> Result<GridField> {
        if v.ncomp() != 2 {
            return Err(Error::SectorMismatch("curl2 expects a 2-vector field".into()));
        }
        match v.sector {
            Sector::Periodic => {
                let mut c = self.spectral.curl(&v.comps[0], &v.comps[1]);
                if let Some(nu) = nu {
                    self.check_periodic_vector(nu)?;
                    for i in 0..c.len() {
                        c[i] -= I * (nu.comps[0][i] * v.comps[1][i] - nu.comps[1][i] * v.comps[0][i]);
                    }
                }
                Ok(GridField::scalar(Sector::Periodic, v.n, c))
            }
            Sector::Flux(_) => {
                self.check_flux(v, 2)?;
                let links = self.links(nu)?;
                let d1 = [
                    self.central(&v.comps[0], &links, 0),
                    self.central(&v.comps[0], &links, 1),
                ];
                let d2 = [
                    self.central(&v.comps[1], &links, 0),
                    self.central(&v.comps[1], &links, 1),
                ];
                let g1 = self.to_cartesian(&d2, 0); // d_1 v_2
                let g2 = self.to_cartesian(&d1, 1); // d_2 v_1
                Ok(GridField::scalar(
                    v.sector,
                    v.n,
                    g1.iter().zip(&g2).map(|(a, b)| a - b).collect(),
                ))
            }
        }
    }

    /// Adjoint of [`Calculus::curl2`]: `curl*_q s = (grad_q)_2 s, -(grad_q)_1 s)`,
    /// exactly adjoint for the discrete cell-average pairing.
    pub fn curl2_adj(&self, s: &GridField, nu: Option<&GridField>) -> Result<GridField> {
        if s.ncomp() != 1 {
            return Err(Error::SectorMismatch("curl2_adj expects a scalar field".into()));
        }
        let g = self.cov_grad(s, nu)?;
        let [g1, g2] = [&g.comps[0], &g.comps[1]];
        Ok(GridField::vector(
            s.sector,
            s.n,
            g2.clone(),
            g1.iter().map(|v| -v).collect(),
        ))
    }

    /// Covariant divergence (central differences for flux fields).
    pub fn div(&self, v: &GridField, nu: Option<&GridField>) -> Result<GridField> {
        match v.sector {
            Sector::Periodic => {
                let mut d = self.spectral.div(&v.comps[0], &v.comps[1]);
                if let Some(nu) = nu {
                    for i in 0..d.len() {
                        d[i] -= I * (nu.comps[0][i] * v.comps[0][i] + nu.comps[1][i] * v.comps[1][i]);
                    }
                }
                Ok(GridField::scalar(Sector::Periodic, v.n, d))
            }
            Sector::Flux(_) => {
                self.check_flux(v, 2)?;
                let links = self.links(nu)?;
                let d1 = [
                    self.central(&v.comps[0], &links, 0),
                    self.central(&v.comps[0], &links, 1),
                ];
                let d2 = [
                    self.central(&v.comps[1], &links, 0),
                    self.central(&v.comps[1], &links, 1),
                ];
                let a = self.to_cartesian(&d1, 0);
                let b = self.to_cartesian(&d2, 1);
                Ok(GridField::scalar(
                    v.sector,
                    v.n,
                    a.iter().zip(&b).map(|(x, y)| x + y).collect(),
                ))
            }
        }
    }

    /// Orthogonal projection of a periodic 2-vector onto divergence-free fields.
    pub fn project_divfree(&self, v: &GridField) -> Result<GridField> {
        self.check_periodic_vector(v)?;
        let sp = &self.spectral;
        let a = sp.forward(&v.comps[0]);
        let b = sp.forward(&v.comps[1]);
        let mut pa = a.clone();
        let mut pb = b.clone();
        for i in 0..a.len() {
            let k2 = sp.k2[i];
            if k2 > 0.0 {
                let (kx, ky) = (sp.k[0][i], sp.k[1][i]);
                let kv = (kx * a[i] + ky * b[i]) / k2;
                pa[i] = a[i] - kv * kx;
                pb[i] = b[i] - kv * ky;
            }
        }
        Ok(GridField::vector(
            Sector::Periodic,
            v.n,
            sp.backward(&pa),
            sp.backward(&pb),
        ))
    }

    /// Forward edge differences `E_i(x) = N (U_i(x) f(x + h_i) - f(x))`.
    pub(crate) fn edge_diffs(&self, f: &[C64], links: &Links) -> [Vec<C64>; 2] {
        let n = self.n() as f64;
        let mut out: [Vec<C64>; 2] = [vec![C64::new(0.0, 0.0); f.len()], vec![C64::new(0.0, 0.0); f.len()]];
        for dir in 0..2 {
            for x in 0..f.len() {
                out[dir][x] = n * (links.u[dir][x] * f[self.shift(x, dir, true)] - f[x]);
            }
        }
        out
    }

    /// One-sided covariant differences at node `x` for the corner `sigma`
    /// (`true` = forward): the backward difference is the transported
    /// forward difference of the previous edge.
    #[inline]
    pub(crate) fn corner_diff(&self, e: &[Vec<C64>; 2], links: &Links, x: usize, dir: usize, forward: bool) -> C64 {
        if forward {
            e[dir][x]
        } else {
            let xm = self.shift(x, dir, false);
            links.u[dir][xm].conj() * e[dir][xm]
        }
    }

    /// Accumulate the cotangent `g` of a corner difference.
    #[inline]
    pub(crate) fn corner_diff_adj(&self, cot: &mut EdgeCotangent, x: usize, dir: usize, forward: bool, g: C64) {
        if forward {
            cot.fwd[dir][x] += g;
        } else {
            cot.bwd[dir][x] += g;
        }
    }

    /// `d/d conj(f)` of `2 Re sum conj(cot) . d(f)` over all forward
    /// differences `E_i(x) = N (U_i(x) f(x+h_i) - f(x))` and backward
    /// differences `B_i(x) = N (f(x) - conj(U_i(x-h_i)) f(x-h_i))`.
    pub(crate) fn edge_adjoint(&self, cot: &EdgeCotangent, links: &Links) -> Vec<C64> {
        let n = self.n() as f64;
        let len = cot.fwd[0].len();
        let mut out = vec![C64::new(0.0, 0.0); len];
        for dir in 0..2 {
            for x in 0..len {
                let ge = cot.fwd[dir][x];
                let gb = cot.bwd[dir][x];
                let xp = self.shift(x, dir, true);
                let xm = self.shift(x, dir, false);
                out[xp] += n * links.u[dir][x].conj() * ge;
                out[x] += n * (gb - ge);
                out[xm] -= n * links.u[dir][xm] * gb;
            }
        }
        out
    }

    /// Derivative of `2 Re sum conj(cot) . d(f)` with respect to the edge
    /// phases `theta_i(x)` (`U_i(x) = U_bg e^{-i theta_i(x)}`).
    pub(crate) fn edge_phase_sensitivity(&self, f: &[C64], cot: &EdgeCotangent, links: &Links) -> [Vec<f64>; 2] {
        let n = self.n() as f64;
        let mut out = [vec![0.0; f.len()], vec![0.0; f.len()]];
        for dir in 0..2 {
            for x in 0..f.len() {
                let xp = self.shift(x, dir, true);
                let u = links.u[dir][x];
                // dE_i(x)/dtheta = -i N U f(x+h);  dB_i(x+h)/dtheta = -i N conj(U) f(x)
                let de = -I * n * u * f[xp];
                let db = -I * n * u.conj() * f[x];
                out[dir][x] = 2.0 * (cot.fwd[dir][x].conj() * de + cot.bwd[dir][xp].conj() * db).re;
            }
        }
        out
    }

    /// All four corner sign patterns.
    pub(crate) const CORNERS: [[bool; 2]; 4] = [[true, true], [true, false], [false, true], [false, false]];

    /// Covariant magnetic Laplacian `-Delta_{a^n + nu}` from the
    /// corner-averaged quadratic form `(1/4) sum_corners |grad^c f|^2`.
    pub fn magnetic_laplacian(&self, f: &[C64], links: &Links) -> Vec<C64> {
        let g = self.metric();
        let e = self.edge_diffs(f, links);
        let len = f.len();
        let mut cot = EdgeCotangent::zeros(len);
        for x in 0..len {
            for c in Self::CORNERS {
                let d = [
                    self.corner_diff(&e, links, x, 0, c[0]),
                    self.corner_diff(&e, links, x, 1, c[1]),
                ];
                for i in 0..2 {
                    let gi = 0.25 * (g[i][0] * d[0] + g[i][1] * d[1]);
                    self.corner_diff_adj(&mut cot, x, i, c[i], gi);
                }
            }
        }
        self.edge_adjoint(&cot, links)
    }

    /// Corner curls `curl^c w(x) = sum_i (e^i_1 d_i^c w_2 - e^i_2 d_i^c w_1)`
    /// for the four corners, plus the forward edge differences they use.
    pub(crate) fn corner_curls(&self, w: [&[C64]; 2], links: &Links) -> ([[Vec<C64>; 2]; 2], Vec<[C64; 4]>) {
        let e = [self.edge_diffs(w[0], links), self.edge_diffs(w[1], links)];
        let d = self.dual;
        let curls = (0..w[0].len())
            .map(|x| {
                let mut out = [C64::new(0.0, 0.0); 4];
                for (ci, c) in Self::CORNERS.iter().enumerate() {
                    let mut v = C64::new(0.0, 0.0);
                    for i in 0..2 {
                        let d1 = self.corner_diff(&e[0], links, x, i, c[i]);
                        let d2 = self.corner_diff(&e[1], links, x, i, c[i]);
                        v += d[i][0] * d2 - d[i][1] * d1;
                    }
                    out[ci] = v;
                }
                out
            })
            .collect();
        (e, curls)
    }

    /// Given cotangents `g^c(x)` of the corner curls, return the edge-difference
    /// cotangents of both components (see [`Calculus::edge_diffs_adj`]).
    pub(crate) fn corner_curls_adj(&self, cot: &[[C64; 4]]) -> [EdgeCotangent; 2] {
        let len = cot.len();
        let mut ge = [EdgeCotangent::zeros(len), EdgeCotangent::zeros(len)];
        let d = self.dual;
        for (x, g) in cot.iter().enumerate() {
            for (ci, c) in Self::CORNERS.iter().enumerate() {
                for i in 0..2 {
                    self.corner_diff_adj(&mut ge[1], x, i, c[i], d[i][0] * g[ci]);
                    self.corner_diff_adj(&mut ge[0], x, i, c[i], -d[i][1] * g[ci]);
                }
            }
        }
        ge
    }

    /// `curl* curl w` from the corner-averaged form `(1/4) sum_c |curl^c w|^2`.
    pub fn curl_curl(&self, w: [&[C64]; 2], links: &Links) -> [Vec<C64>; 2] {
        let (_, curls) = self.corner_curls(w, links);
        let cot: Vec<[C64; 4]> = curls.iter().map(|c| c.map(|v| 0.25 * v)).collect();
        let ge = self.corner_curls_adj(&cot);
        [self.edge_adjoint(&ge[0], links), self.edge_adjoint(&ge[1], links)]
    }

    /// Inverse metric `g^{ij} = e^i . e^j`.
    pub fn metric(&self) -> [[f64; 2]; 2] {
        let d = self.dual;
        let m = |i: usize, j: usize| d[i][0] * d[j][0] + d[i][1] * d[j][1];
        [[m(0, 0), m(0, 1)], [m(1, 0), m(1, 1)]]
    }
}
