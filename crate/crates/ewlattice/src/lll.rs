//! Lowest-Landau-level lattice states from theta series, the exact Landau
//! ladder basis and the discrete ladder operators.
//!
//! Conventions: `z = x1 + i x2`, symmetric gauge `a^n = (n/2) J x`,
//! `dbar = (grad_{a^n})_1 + i (grad_{a^n})_2 = 2 d_zbar + (n/2) z` and its
//! adjoint `dbar* = (n/2) zbar - 2 d_z`, with `[dbar, dbar*] = 2n`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::fields::{dot, Calculus, GridField, Links, Sector, C64};
use crate::lattice::{Grid, LatticeShape};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Theta series `theta(zeta) = sum_m c_m e^{2 pi i m zeta}` with the flux-n
/// coefficient recursion `c_{m+n} = e^{i pi tau (2m + n)} c_m`, so that
/// `theta(zeta + 1) = theta(zeta)` and
/// `theta(zeta + tau) = e^{-2 pi i n zeta} e^{-i pi n tau} theta(zeta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSeries {
    pub tau: Complex64,
    pub n: u32,
    /// Seed coefficients `c_0, ..., c_{n-1}`.
    pub coeffs: Vec<Complex64>,
    /// Number of terms kept on each side of the dominant index.
    pub truncation: usize,
}

/// Value of a truncated theta series and a bound on the neglected tail
/// (relative to the largest term).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaValue {
    pub value: Complex64,
    pub tail_bound: f64,
}

/// Default truncation `ceil(sqrt(34 n / (pi Im tau))) + 2`: the first dropped
/// term is below `e^{-34} < 1e-14` of the dominant one.
pub fn default_truncation(tau: Complex64, n: u32) -> usize {
    (34.0 * n as f64 / (PI * tau.im)).sqrt().ceil() as usize + 2
}

impl ThetaSeries {
    /// Series with the given seed; the flux integer is the seed length.
    pub fn new(tau: Complex64, coeffs: Vec<Complex64>) -> Result<Self> {
        if !(tau.im > 0.0) {
            return invalid(format!("theta series needs Im tau > 0, got {tau}"));
        }
        if coeffs.is_empty() {
            return invalid("theta series needs at least one seed coefficient");
        }
        let n = coeffs.len() as u32;
        Ok(ThetaSeries {
            tau,
            n,
            truncation: default_truncation(tau, n),
            coeffs,
        })
    }

    /// The symmetric seed `c_0 = 1, c_1 = ... = c_{n-1} = 0`.
    pub fn symmetric(tau: Complex64, n: u32) -> Result<Self> {
        if n == 0 {
            return invalid("flux integer must be positive");
        }
        let mut c = vec![Complex64::new(0.0, 0.0); n as usize];
        c[0] = Complex64::new(1.0, 0.0);
        Self::new(tau, c)
    }

    pub fn with_truncation(mut self, m: usize) -> Self {
        self.truncation = m;
        self
    }

    /// `(k, log c_m - log c_k)` for `m = k + j n`, `0 <= k < n`:
    /// `c_{k + j n} = c_k e^{i pi tau (2 k j + n j^2)}`.
    fn coeff_exponent(&self, m: i64) -> (usize, Complex64) {
        let n = self.n as i64;
        let k = m.rem_euclid(n);
        let j = (m - k) / n;
        let e = I * PI * self.tau * ((2 * k * j + n * j * j) as f64);
        (k as usize, e)
    }

    /// Index around which the terms `|c_m e^{2 pi i m zeta}|` peak.
    fn centre(&self, zeta: Complex64) -> i64 {
        (-(self.n as f64) * zeta.im / self.tau.im).round() as i64
    }

    fn tail(&self) -> f64 {
        let m = self.truncation as f64 - 0.5;
        let q = PI * self.tau.im / self.n as f64;
        2.0 * (-q * m * m).exp() / (1.0 - (-2.0 * q * m).exp()).max(1e-300)
    }
}

/// Evaluate the truncated series at `zeta`.
pub fn theta_eval(series: &ThetaSeries, zeta: Complex64) -> ThetaValue {
    let m0 = series.centre(zeta);
    let big_m = series.truncation as i64;
    let mut sum = Complex64::new(0.0, 0.0);
    for m in (m0 - big_m)..=(m0 + big_m) {
        let (k, e) = series.coeff_exponent(m);
        let ck = series.coeffs[k];
        if ck == Complex64::new(0.0, 0.0) {
            continue;
        }
        sum += ck * (e + 2.0 * PI * I * (m as f64) * zeta).exp();
    }
    ThetaValue {
        value: sum,
        tail_bound: series.tail(),
    }
}

impl ThetaSeries {
    pub fn eval(&self, zeta: Complex64) -> ThetaValue {
        theta_eval(self, zeta)
    }
}

/// Lowest-Landau-level state `beta` and `chi = (beta, i beta)` normalised to
/// `<|chi|^2> = 1`.
#[derive(Debug, Clone)]
pub struct LLLState {
    pub beta: GridField,
    pub chi: GridField,
    pub shape: LatticeShape,
    pub n: u32,
    /// Truncation bound of the theta series used.
    pub tail_bound: f64,
}

/// Sample `beta(x) = e^{(in/2) x2 z} theta(z / ell)` on the grid and normalise.
///
/// `seed` defaults to the symmetric seed; its length must equal `n`.
pub fn build_chi(
    shape: &LatticeShape,
    n: u32,
    grid: &Grid,
    seed: Option<&[Complex64]>,
    truncation: Option<usize>,
) -> Result<LLLState> {
    if grid.shape != *shape {
        return invalid("grid was built for a different lattice shape");
    }
    let mut series = match seed {
        None => ThetaSeries::symmetric(shape.tau, n)?,
        Some(c) => {
            if c.len() != n as usize {
                return invalid(format!(
                    "seed has {} coefficients, flux n = {n} needs exactly n",
                    c.len()
                ));
            }
            ThetaSeries::new(shape.tau, c.to_vec())?
        }
    };
    if let Some(m) = truncation {
        series = series.with_truncation(m);
    }
    let nf = n as f64;
    let data: Vec<C64> = grid
        .points
        .par_iter()
        .map(|x| {
            let z = Complex64::new(x[0], x[1]);
            let pref = (I * 0.5 * nf * x[1] * z).exp();
            pref * series.eval(z / shape.ell).value
        })
        .collect();
    let norm2: f64 = data.iter().map(|v| v.norm_sqr()).sum::<f64>() / data.len() as f64;
    if norm2 < 1e-300 {
        return Err(Error::Degenerate {
            norm: norm2.sqrt(),
            threshold: 1e-150,
        });
    }
    // <|beta|^2> = 1/2 so that <|chi|^2> = 1
    let s = (0.5 / norm2).sqrt();
    let beta: Vec<C64> = data.iter().map(|v| v * s).collect();
    let ibeta: Vec<C64> = beta.iter().map(|v| I * v).collect();
    let sector = Sector::Flux(n as i32);
    Ok(LLLState {
        beta: GridField::scalar(sector, grid.n, beta.clone()),
        chi: GridField::vector(sector, grid.n, beta, ibeta),
        shape: *shape,
        n,
        tail_bound: series.tail(),
    })
}

impl LLLState {
    /// `<|chi|^2>`.
    pub fn chi_norm2(&self) -> f64 {
        self.chi.abs2().average().map(|v| v.re).unwrap_or(f64::NAN)
    }

    /// `|chi|^2` as a real periodic field.
    pub fn chi_abs2(&self) -> GridField {
        self.chi.abs2()
    }

    /// Abrikosov ratio `<|chi|^4> / <|chi|^2>^2`.
    pub fn abrikosov_beta(&self) -> f64 {
        let a = self.chi.abs2();
        let m2 = a.comps[0].iter().map(|v| v.re).sum::<f64>() / a.len() as f64;
        let m4 = a.comps[0].iter().map(|v| v.re * v.re).sum::<f64>() / a.len() as f64;
        m4 / (m2 * m2)
    }
}

/// Largest `|beta(-x) - beta(x)| / max |beta|` over the grid nodes for the
/// symmetric seed, with `beta(-x)` evaluated from the theta series (the
/// grid node `-x` itself differs from `x`'s mirror node by a lattice vector
/// and hence by a quasi-periodicity phase).
pub fn parity_defect(shape: &LatticeShape, n: u32, grid: &Grid) -> Result<f64> {
    let series = ThetaSeries::symmetric(shape.tau, n)?;
    let nf = n as f64;
    let beta = |x: [f64; 2]| {
        let z = Complex64::new(x[0], x[1]);
        (I * 0.5 * nf * x[1] * z).exp() * series.eval(z / shape.ell).value
    };
    let (worst, scale) = grid
        .points
        .par_iter()
        .map(|&x| {
            let b = beta(x);
            ((beta([-x[0], -x[1]]) - b).norm(), b.norm())
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Ok(worst / scale.max(1e-300))
}

/// Discrete `dbar_{a^n}` and its adjoint acting on flux-sector scalars.
pub trait CovariantDerivative {
    /// `dbar f = (grad)_1 f + i (grad)_2 f`.
    fn dbar(&self, f: &[C64]) -> Vec<C64>;
    /// Adjoint `dbar* f = -(grad)_1 f + i (grad)_2 f`.
    fn dbar_adj(&self, f: &[C64]) -> Vec<C64>;
}

/// Central link-phase differences of [`Calculus`] with fixed links.
pub struct CentralDbar<'a> {
    pub calc: &'a Calculus,
    pub links: Links,
}

impl<'a> CentralDbar<'a> {
    /// Background links `a^n` only.
    pub fn new(calc: &'a Calculus) -> Self {
        CentralDbar {
            calc,
            links: calc.background_links().clone(),
        }
    }

    fn grad(&self, f: &[C64]) -> [Vec<C64>; 2] {
        let c = self.calc;
        let half = 0.5 * c.n() as f64;
        let d: Vec<[C64; 2]> = (0..f.len())
            .map(|x| {
                let mut out = [C64::new(0.0, 0.0); 2];
                for (dir, o) in out.iter_mut().enumerate() {
                    let xp = c.shift(x, dir, true);
                    let xm = c.shift(x, dir, false);
                    *o = half * (self.links.u[dir][x] * f[xp] - self.links.u[dir][xm].conj() * f[xm]);
                }
                out
            })
            .collect();
        let e = c.dual;
        let g1 = d.iter().map(|v| v[0] * e[0][0] + v[1] * e[1][0]).collect();
        let g2 = d.iter().map(|v| v[0] * e[0][1] + v[1] * e[1][1]).collect();
        [g1, g2]
    }
}

impl CovariantDerivative for CentralDbar<'_> {
    fn dbar(&self, f: &[C64]) -> Vec<C64> {
        let [g1, g2] = self.grad(f);
        g1.iter().zip(&g2).map(|(a, b)| a + I * b).collect()
    }

    fn dbar_adj(&self, f: &[C64]) -> Vec<C64> {
        let [g1, g2] = self.grad(f);
        g1.iter().zip(&g2).map(|(a, b)| -a + I * b).collect()
    }
}

/// Norm below which a ladder step is treated as a collapse.
pub const LADDER_COLLAPSE: f64 = 1e-10;

/// Apply `dbar*` `k` times and normalise to the input's norm, raising a
/// Landau level by `k`.
pub fn ladder_up(state: &GridField, k: usize, covderiv: &dyn CovariantDerivative) -> Result<GridField> {
    if !matches!(state.sector, Sector::Flux(_)) || state.ncomp() != 1 {
        return Err(Error::SectorMismatch(
            "ladder_up expects a flux-sector scalar field".into(),
        ));
    }
    if k == 0 {
        return invalid("ladder_up needs k >= 1");
    }
    let n0 = state.norm();
    let mut f = state.comps[0].clone();
    for _ in 0..k {
        f = covderiv.dbar_adj(&f);
        let nrm = dot(&f, &f).re.sqrt();
        if nrm < LADDER_COLLAPSE {
            return Err(Error::Degenerate {
                norm: nrm,
                threshold: LADDER_COLLAPSE,
            });
        }
        f.iter_mut().for_each(|v| *v /= nrm);
    }
    f.iter_mut().for_each(|v| *v *= n0);
    Ok(GridField::scalar(state.sector, state.n, f))
}

/// Exact Landau eigenfunctions `phi_m = (dbar*)^m phi_0 / sqrt((2n)^m m!)`
/// built from the theta expansion of `phi_0 = sqrt(2) beta`:
/// each theta term becomes a Gaussian times a Hermite function of
/// `y_j = -sqrt(2/n) (n x2 + 2 pi j / ell)`.
#[derive(Debug, Clone)]
pub struct LandauBasis {
    pub n: u32,
    pub grid_n: usize,
    /// `levels[m][node]`, orthonormal for the cell average.
    pub levels: Vec<Vec<C64>>,
}

impl LandauBasis {
    /// Levels `0..=max_level` for the symmetric seed.
    pub fn new(grid: &Grid, n: u32, max_level: usize) -> Result<Self> {
        let series = ThetaSeries::symmetric(grid.shape.tau, n)?;
        let shape = grid.shape;
        let nf = n as f64;
        let ell = shape.ell;
        let ycut = 2.0 * ((max_level + 1) as f64).sqrt() + 12.0;
        let nl = max_level + 1;
        let per_node: Vec<Vec<C64>> = grid
            .points
            .par_iter()
            .map(|x| {
                let z = Complex64::new(x[0], x[1]);
                let base = 0.25 * nf * (z * z - z.norm_sqr());
                // y_j within the cutoff: n x2 + 2 pi j / ell in +- ycut sqrt(n/2)
                let w = ycut * (nf / 2.0).sqrt();
                let jlo = ((-nf * x[1] - w) * ell / (2.0 * PI)).floor() as i64;
                let jhi = ((-nf * x[1] + w) * ell / (2.0 * PI)).ceil() as i64;
                let mut acc = vec![C64::new(0.0, 0.0); nl];
                let mut h = vec![0.0; nl];
                for j in jlo..=jhi {
                    let (k, ce) = series.coeff_exponent(j);
                    let ck = series.coeffs[k];
                    if ck == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let y = -(2.0 / nf).sqrt() * (nf * x[1] + 2.0 * PI * j as f64 / ell);
                    let term = ck * (base + ce + 2.0 * PI * I * (j as f64) * z / ell).exp();
                    h[0] = 1.0;
                    if nl > 1 {
                        h[1] = y;
                    }
                    for m in 1..nl.saturating_sub(1) {
                        h[m + 1] = (y * h[m] - (m as f64).sqrt() * h[m - 1]) / ((m + 1) as f64).sqrt();
                    }
                    for m in 0..nl {
                        acc[m] += term * h[m];
                    }
                }
                let mut phase = C64::new(1.0, 0.0);
                for a in acc.iter_mut() {
                    *a *= phase;
                    phase *= I;
                }
                acc
            })
            .collect();
        let len = grid.len();
        let mut levels = vec![vec![C64::new(0.0, 0.0); len]; nl];
        for (node, vals) in per_node.iter().enumerate() {
            for m in 0..nl {
                levels[m][node] = vals[m];
            }
        }
        let n0 = dot(&levels[0], &levels[0]).re.sqrt();
        if n0 < 1e-300 {
            return Err(Error::Degenerate {
                norm: n0,
                threshold: 1e-300,
            });
        }
        levels.iter_mut().for_each(|l| l.iter_mut().for_each(|v| *v /= n0));
        Ok(LandauBasis {
            n,
            grid_n: grid.n,
            levels,
        })
    }

    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, m: usize) -> GridField {
        GridField::scalar(Sector::Flux(self.n as i32), self.grid_n, self.levels[m].clone())
    }
}

/// Gauge-invariant vortex count on `2 x 2` macro-plaquettes whose corners
/// sit at odd grid indices (so nodes of even index, e.g. the cell centre,
/// lie strictly inside a plaquette). Returns `(j1, j2, winding)` of the
/// lower-left corner for every non-zero winding.
pub fn vortex_windings(calc: &Calculus, f: &GridField) -> Result<Vec<(usize, usize, i64)>> {
    let n = calc.n();
    if f.n != n || f.ncomp() != 1 || f.sector != Sector::Flux(calc.flux) {
        return Err(Error::SectorMismatch(
            "vortex_windings expects a flux-sector scalar on this grid".into(),
        ));
    }
    let links = calc.background_links();
    let flux_per_cell = 2.0 * PI * calc.flux as f64;
    let plaquette_flux = flux_per_cell * 4.0 / (n * n) as f64;
    let v = &f.comps[0];
    // phase increment along an edge, forward = true means x -> x + h_dir
    let step = |x: usize, dir: usize| -> (usize, f64) {
        let xp = calc.shift(x, dir, true);
        ((xp), (v[x].conj() * links.u[dir][x] * v[xp]).arg())
    };
    let mut out = Vec::new();
    for a in 0..n / 2 {
        for b in 0..n / 2 {
            let j1 = 2 * a + 1;
            let j2 = 2 * b + 1;
            let start = (j1 % n) * n + (j2 % n);
            let mut x = start;
            let mut total = 0.0;
            // counter-clockwise: +e1, +e1, +e2, +e2, -e1, -e1, -e2, -e2
            for &(dir, fwd) in &[
                (0, true),
                (0, true),
                (1, true),
                (1, true),
                (0, false),
                (0, false),
                (1, false),
                (1, false),
            ] {
                if fwd {
                    let (xp, ph) = step(x, dir);
                    total += ph;
                    x = xp;
                } else {
                    let xm = calc.shift(x, dir, false);
                    let (_, ph) = step(xm, dir);
                    total -= ph;
                    x = xm;
                }
            }
            let w = ((total + plaquette_flux) / (2.0 * PI)).round() as i64;
            if w != 0 {
                out.push((j1 % n, j2 % n, w));
            }
        }
    }
    Ok(out)
}
