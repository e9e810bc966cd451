//! The bifurcating vortex-lattice branch just above the critical field.
//!
//! * first-order fields `a'`, `z'`, `psi'`, `xi'` from periodic resolvents;
//! * the shape functions `alpha(tau)`, `eta(tau)` and the Abrikosov ratio;
//! * the leading-order relations `s^2(omega)` and `E(omega)`;
//! * a Galerkin/Newton solve of the full rescaled equations at fixed
//!   `omega`, with `w` expanded in exact Landau levels and the periodic
//!   fields in truncated Fourier series.
//!
//! The Newton solver works on the Landau coefficients of `w`; for each
//! trial `w` the periodic fields are relaxed to their Galerkin equations
//! (a contraction with rate `O(omega)`), so the outer problem is the
//! reduced bifurcation system in the coefficients of `w`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{dot, FieldState, GridField, Sector, Spectral, C64};
use crate::green;
use crate::lattice::{make_grid, Grid, LatticeShape};
use crate::lll::{build_chi, LLLState, LandauBasis};
use crate::params::PhysParams;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn cplx(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&x| C64::new(x, 0.0)).collect()
}

fn re(v: &[C64]) -> Vec<f64> {
    v.iter().map(|c| c.re).collect()
}

fn avg(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn l2(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn spectral_for(chi: &LLLState) -> Result<(Grid, Spectral)> {
    let grid = make_grid(chi.shape, chi.chi.n)?;
    let sp = Spectral::new(&grid);
    Ok((grid, sp))
}

fn check_normalised(chi: &LLLState) -> Result<f64> {
    let m = chi.chi_norm2();
    if !((m - 1.0).abs() < 1e-8) {
        return invalid(format!("chi must be normalised to <|chi|^2> = 1, got {m}"));
    }
    Ok(m)
}

/// The `s^2`-coefficients of the branch expansion.
#[derive(Debug, Clone)]
pub struct FirstOrderFields {
    /// `a' = e curl* G_0(|chi|^2 - <|chi|^2>)`.
    pub a1: GridField,
    /// `z' = g cos(theta) curl* G_{m_z}(|chi|^2)`.
    pub z1: GridField,
    /// `psi' = -(g/2) sqrt(2n) G_{m_h}(|chi|^2)`.
    pub psi1: GridField,
    /// `xi' = -(g / sqrt(2n)) <|chi|^2> / eta`.
    pub xi1: f64,
    /// `curl nu' = g^2 |chi|^2 - e^2 <|chi|^2> - g^2 n G_{m_z}(|chi|^2)`.
    pub nu1_curl: GridField,
    /// `|chi|^2` on the grid.
    pub chi_abs2: GridField,
    pub eta: f64,
}

/// Shape functions of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeFunctions {
    /// `<|chi|^2 (G_{m_z} - G_{m_h}) |chi|^2> / <|chi|^2>^2`.
    pub alpha: f64,
    /// `1 / (m_w^2 alpha + sin^2 theta)`.
    pub eta: f64,
    /// Abrikosov ratio `<|chi|^4> / <|chi|^2>^2`.
    pub beta: f64,
}

/// `alpha`, `eta` and `beta` of the lattice state `chi`.
///
/// The resolvent difference is taken as `G_{m_z} - G_{m_h}`, which is
/// positivity preserving for `m_z < m_h`.
pub fn alpha_eta(chi: &LLLState, params: &PhysParams) -> Result<ShapeFunctions> {
    if params.m_z > params.m_h * (1.0 + 1e-12) {
        return invalid(format!(
            "alpha/eta need m_z <= m_h (got m_z = {}, m_h = {})",
            params.m_z, params.m_h
        ));
    }
    alpha_eta_with_masses(chi, params, params.m_z, params.m_h)
}

/// `alpha`, `eta`, `beta` with the Green difference `G_{m1} - G_{m2}` in
/// place of `G_{m_z} - G_{m_h}`; used to inject deliberate faults.
pub fn alpha_eta_with_masses(chi: &LLLState, params: &PhysParams, m1: f64, m2: f64) -> Result<ShapeFunctions> {
    let (_, sp) = spectral_for(chi)?;
    let rho = chi.chi_abs2().real_part();
    let r = re(&rho.comps[0]);
    let mean = avg(&r);
    let gd = green::apply_diff(&sp, m1, m2, &rho)?;
    let num = avg(&r.iter().zip(&gd.comps[0]).map(|(a, b)| a * b.re).collect::<Vec<_>>());
    let alpha = num / (mean * mean);
    let eta = 1.0 / (params.m_w * params.m_w * alpha + params.sin2_theta());
    let m4 = avg(&r.iter().map(|a| a * a).collect::<Vec<_>>());
    Ok(ShapeFunctions {
        alpha,
        eta,
        beta: m4 / (mean * mean),
    })
}

/// Shape functions for a lattice shape, sampling `chi` on an `N x N` grid.
pub fn shape_functions(shape: &LatticeShape, params: &PhysParams, grid_n: usize) -> Result<ShapeFunctions> {
    let grid = make_grid(*shape, grid_n)?;
    let chi = build_chi(shape, params.n, &grid, None, None)?;
    alpha_eta(&chi, params)
}

/// First-order fields of the branch.
pub fn first_order(chi: &LLLState, params: &PhysParams) -> Result<FirstOrderFields> {
    let mean = check_normalised(chi)?;
    let (_, sp) = spectral_for(chi)?;
    let ng = sp.n;
    let p = params;
    let nf = p.flux();
    let cos_t = p.theta.cos();
    let rho = chi.chi_abs2().real_part();
    let centred = rho.map(|v| v - mean);
    let g0 = green::apply(&sp, 0.0, &centred)?;
    let gz = green::apply(&sp, p.m_z, &rho)?;
    let gh = green::apply(&sp, p.m_h, &rho)?;
    let [a1x, a1y] = sp.curl_adj(&g0.comps[0]);
    let [z1x, z1y] = sp.curl_adj(&gz.comps[0]);
    let real = |v: Vec<C64>, s: f64| -> Vec<C64> { v.iter().map(|c| C64::new(s * c.re, 0.0)).collect() };
    let a1 = GridField::vector(Sector::Periodic, ng, real(a1x, p.e), real(a1y, p.e));
    let z1 = GridField::vector(Sector::Periodic, ng, real(z1x, p.g * cos_t), real(z1y, p.g * cos_t));
    let psi1 = gh.map(|v| C64::new(-0.5 * p.g * (2.0 * nf).sqrt() * v.re, 0.0));
    let g2 = p.g * p.g;
    let nu1_curl = GridField::scalar(
        Sector::Periodic,
        ng,
        rho.comps[0]
            .iter()
            .zip(&gz.comps[0])
            .map(|(r, gzv)| C64::new(g2 * r.re - p.e * p.e * mean - g2 * nf * gzv.re, 0.0))
            .collect(),
    );
    let sf = alpha_eta(chi, params)?;
    let xi1 = -(p.g / (2.0 * nf).sqrt()) * mean / sf.eta;
    Ok(FirstOrderFields {
        a1,
        z1,
        psi1,
        xi1,
        nu1_curl,
        chi_abs2: rho,
        eta: sf.eta,
    })
}

/// Relative residuals of the three order-`s^4` equations
/// `-Delta a' - e curl*|chi|^2`, `(-Delta + m_z^2) z' - g cos(theta) curl*|chi|^2`,
/// `(-Delta + m_h^2) psi' + (g/2) sqrt(2n) |chi|^2`, evaluated spectrally.
pub fn first_order_residuals(fo: &FirstOrderFields, chi: &LLLState, params: &PhysParams) -> Result<[f64; 3]> {
    let (_, sp) = spectral_for(chi)?;
    let p = params;
    let rho = &fo.chi_abs2.comps[0];
    let [cx, cy] = sp.curl_adj(rho);
    let rel = |res: &[f64], scale: &[f64]| l2(res) / l2(scale).max(1e-300);
    let mut out = [0.0; 3];
    let comps = |f: &GridField, m2: f64, coup: f64| -> (Vec<f64>, Vec<f64>) {
        let mut res = Vec::new();
        let mut src = Vec::new();
        for (c, s) in f.comps.iter().zip([&cx, &cy]) {
            let lap = sp.neg_laplacian(c);
            for j in 0..c.len() {
                res.push(lap[j].re + m2 * c[j].re - coup * s[j].re);
                src.push(coup * s[j].re);
            }
        }
        (res, src)
    };
    let (r0, s0) = comps(&fo.a1, 0.0, p.e);
    out[0] = rel(&r0, &s0);
    let (r1, s1) = comps(&fo.z1, p.m_z * p.m_z, p.g * p.theta.cos());
    out[1] = rel(&r1, &s1);
    let lap = sp.neg_laplacian(&fo.psi1.comps[0]);
    let c = 0.5 * p.g * (2.0 * p.flux()).sqrt();
    let r2: Vec<f64> = (0..lap.len())
        .map(|j| lap[j].re + p.m_h * p.m_h * fo.psi1.comps[0][j].re + c * rho[j].re)
        .collect();
    let s2: Vec<f64> = rho.iter().map(|v| c * v.re).collect();
    out[2] = rel(&r2, &s2);
    Ok(out)
}

/// Both sides of the scalar identity
/// `<g sqrt(2n) xi' |chi|^2> = <-g sqrt(2n) psi' |chi|^2 + (curl nu') |chi|^2 - g^2 |chi|^4>`,
/// with `curl nu'` recomputed from `a'` and `z'`.
pub fn appendix_f_identity(fo: &FirstOrderFields, chi: &LLLState, params: &PhysParams) -> Result<(f64, f64)> {
    let (_, sp) = spectral_for(chi)?;
    let p = params;
    let c = p.g * (2.0 * p.flux()).sqrt();
    let rho = re(&fo.chi_abs2.comps[0]);
    let curl_a = re(&sp.curl(&fo.a1.comps[0], &fo.a1.comps[1]));
    let curl_z = re(&sp.curl(&fo.z1.comps[0], &fo.z1.comps[1]));
    let psi = re(&fo.psi1.comps[0]);
    let cos_t = p.theta.cos();
    let lhs = c * fo.xi1 * avg(&rho);
    let rhs = avg(&(0..rho.len())
        .map(|j| {
            let curl_nu = p.g * (p.theta.sin() * curl_a[j] + cos_t * curl_z[j]);
            -c * psi[j] * rho[j] + curl_nu * rho[j] - p.g * p.g * rho[j] * rho[j]
        })
        .collect::<Vec<_>>());
    Ok((lhs, rhs))
}

/// The `s^4` coefficient of the per-cell energy of the branch,
/// `<1/2|curl z'|^2 + 1/2|curl a'|^2 + g sqrt(2n)(psi' + xi')|chi|^2
///  + n/(2 cos^2 theta)|z'|^2 + |grad psi'|^2 + (4 lambda n/g^2) psi'^2
///  - |chi|^2 curl nu' + g^2/2 |chi|^4>`.
pub fn s4_bracket(fo: &FirstOrderFields, chi: &LLLState, params: &PhysParams) -> Result<f64> {
    let (_, sp) = spectral_for(chi)?;
    let p = params;
    let nf = p.flux();
    let cos_t = p.theta.cos();
    let rho = re(&fo.chi_abs2.comps[0]);
    let curl_a = re(&sp.curl(&fo.a1.comps[0], &fo.a1.comps[1]));
    let curl_z = re(&sp.curl(&fo.z1.comps[0], &fo.z1.comps[1]));
    let psi = re(&fo.psi1.comps[0]);
    let [gx, gy] = sp.grad(&fo.psi1.comps[0]);
    let c = p.g * (2.0 * nf).sqrt();
    let vals: Vec<f64> = (0..rho.len())
        .map(|j| {
            let z2 = fo.z1.comps[0][j].re.powi(2) + fo.z1.comps[1][j].re.powi(2);
            let curl_nu = p.g * (p.theta.sin() * curl_a[j] + cos_t * curl_z[j]);
            0.5 * curl_z[j] * curl_z[j]
                + 0.5 * curl_a[j] * curl_a[j]
                + c * (psi[j] + fo.xi1) * rho[j]
                + nf / (2.0 * cos_t * cos_t) * z2
                + gx[j].norm_sqr()
                + gy[j].norm_sqr()
                + 4.0 * p.lambda * nf / (p.g * p.g) * psi[j] * psi[j]
                - rho[j] * curl_nu
                + 0.5 * p.g * p.g * rho[j] * rho[j]
        })
        .collect();
    Ok(avg(&vals))
}

/// Closed form of the `s^4` coefficient, `-(g^2/2) <|chi|^2>^2 / eta`.
pub fn s4_bracket_closed_form(fo: &FirstOrderFields, params: &PhysParams) -> f64 {
    let m = avg(&re(&fo.chi_abs2.comps[0]));
    -0.5 * params.g * params.g * m * m / fo.eta
}

/// Leading-order `s^2 = n eta omega / (g^2 <|chi|^2>)`.
pub fn s_squared_of_omega(omega: f64, chi: &LLLState, params: &PhysParams) -> Result<f64> {
    if !(omega >= 0.0) || !omega.is_finite() {
        return invalid(format!("the branch exists for omega > 0, got {omega}"));
    }
    let sf = alpha_eta(chi, params)?;
    Ok(params.flux() * sf.eta * omega / (params.g * params.g * chi.chi_norm2()))
}

/// Leading-order energy per unit area of the branch,
/// `1/2 b^2 - 1/2 b^2 sin^2(theta) eta omega^2` with `b = b_* / (1 - omega)`.
pub fn energy_expansion(omega: f64, eta: f64, params: &PhysParams) -> Result<f64> {
    if !(omega < 1.0) || !omega.is_finite() {
        return invalid(format!("omega must be finite and < 1, got {omega}"));
    }
    let b = params.b_of_omega(omega);
    Ok(0.5 * b * b - 0.5 * b * b * params.sin2_theta() * eta * omega * omega)
}

/// [`energy_expansion`] for a lattice shape (eta from an `N x N` quadrature).
pub fn energy_expansion_for_shape(omega: f64, shape: &LatticeShape, params: &PhysParams, grid_n: usize) -> Result<f64> {
    let sf = shape_functions(shape, params, grid_n)?;
    energy_expansion(omega, sf.eta, params)
}

/// Galerkin discretisation of the rescaled energy.
///
/// `w = sum_m a_m U_m + b_m V_m` with `U_m = (phi_m, -i phi_m)/sqrt2`,
/// `V_m = (phi_m, i phi_m)/sqrt2` and `phi_m` the exact Landau levels, so
/// that `chi = V_0`. The covariant curl is applied exactly through the
/// ladder relations
/// `curl_{a^n} w = i sum_m [a_m sqrt(n(m+1)) phi_{m+1} + b_m sqrt(n m) phi_{m-1}]`.
/// The periodic fields live on the grid, restricted to Fourier modes
/// `|m_i| <= pmax`; integrals are grid averages.
pub struct GalerkinModel {
    pub params: PhysParams,
    /// Higgs vacuum value in the potential `lambda/2 (phi^2 - xi^2)^2`.
    pub xi: f64,
    /// Highest Landau level of `w`.
    pub levels: usize,
    /// Fourier cut-off of the periodic fields.
    pub pmax: usize,
    pub grid: Grid,
    spectral: Spectral,
    basis: LandauBasis,
    mask: Vec<bool>,
}

/// Unknowns of the Galerkin problem.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinState {
    /// Coefficients `a_m`, `m = 0..=levels`.
    pub a: Vec<C64>,
    /// Coefficients `b_m`, `m = 0..=levels`.
    pub b: Vec<C64>,
    pub alpha: [Vec<f64>; 2],
    pub z: [Vec<f64>; 2],
    pub phi: Vec<f64>,
}

/// Gradient of the Galerkin energy.
///
/// `ga`, `gb` are Wirtinger derivatives (`dE = 2 Re sum conj(g) dc`);
/// the periodic entries are `L^2` densities for the cell-average pairing.
#[derive(Debug, Clone)]
pub struct GalerkinGradient {
    pub ga: Vec<C64>,
    pub gb: Vec<C64>,
    pub g_alpha: [Vec<f64>; 2],
    pub g_z: [Vec<f64>; 2],
    pub g_phi: Vec<f64>,
    /// `dE/d nu~` density (the current), used for the divergence check.
    pub current: [Vec<f64>; 2],
}

/// Kind of a periodic unknown: parity and gauge constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    /// Odd, divergence-free, zero mean.
    Alpha,
    /// Odd.
    Z,
    /// Even.
    Phi,
}

impl GalerkinModel {
    pub fn new(chi: &LLLState, params: &PhysParams, xi: f64, levels: usize) -> Result<Self> {
        if chi.n != 1 || params.n != 1 {
            return Err(Error::Unsupported(format!(
                "the Galerkin branch solver covers n = 1 only (chi has n = {}, params n = {})",
                chi.n, params.n
            )));
        }
        let grid = make_grid(chi.shape, chi.chi.n)?;
        let spectral = Spectral::new(&grid);
        let basis = LandauBasis::new(&grid, 1, levels + 1)?;
        let pmax = grid.n / 3;
        let mask = spectral
            .modes
            .iter()
            .map(|&(m1, m2)| m1.unsigned_abs() as usize <= pmax && m2.unsigned_abs() as usize <= pmax)
            .collect();
        Ok(GalerkinModel {
            params: *params,
            xi,
            levels,
            pmax,
            grid,
            spectral,
            basis,
            mask,
        })
    }

    fn len(&self) -> usize {
        self.grid.n * self.grid.n
    }

    /// The vacuum `w = 0`, `alpha = z = 0`, `phi = xi`.
    pub fn vacuum(&self) -> GalerkinState {
        let len = self.len();
        GalerkinState {
            a: vec![ZERO; self.levels + 1],
            b: vec![ZERO; self.levels + 1],
            alpha: [vec![0.0; len], vec![0.0; len]],
            z: [vec![0.0; len], vec![0.0; len]],
            phi: vec![self.xi; len],
        }
    }

    /// `(u, v) = sqrt2 (sum a_m phi_m, sum b_m phi_m)`.
    fn uv(&self, st: &GalerkinState) -> (Vec<C64>, Vec<C64>) {
        let len = self.len();
        let mut u = vec![ZERO; len];
        let mut v = vec![ZERO; len];
        let r2 = std::f64::consts::SQRT_2;
        for m in 0..=self.levels {
            let (ca, cb) = (st.a[m] * r2, st.b[m] * r2);
            if ca == ZERO && cb == ZERO {
                continue;
            }
            let phi = &self.basis.levels[m];
            for j in 0..len {
                u[j] += ca * phi[j];
                v[j] += cb * phi[j];
            }
        }
        (u, v)
    }

    /// `w = (w1, w2)` on the grid.
    pub fn w_field(&self, st: &GalerkinState) -> [Vec<C64>; 2] {
        let (u, v) = self.uv(st);
        let w1 = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
        let w2 = u.iter().zip(&v).map(|(a, b)| -0.5 * I * (a - b)).collect();
        [w1, w2]
    }

    /// Grid `FieldState` of a Galerkin state.
    pub fn field_state(&self, st: &GalerkinState) -> FieldState {
        let ng = self.grid.n;
        let [w1, w2] = self.w_field(st);
        FieldState {
            w: GridField::vector(Sector::Flux(1), ng, w1, w2),
            a: GridField::vector(Sector::Periodic, ng, cplx(&st.alpha[0]), cplx(&st.alpha[1])),
            z: GridField::vector(Sector::Periodic, ng, cplx(&st.z[0]), cplx(&st.z[1])),
            phi: GridField::real_scalar(ng, &st.phi),
        }
    }

    /// Energy per cell minus `n^2 / (2 e^2)`, and optionally its gradient.
    pub fn evaluate(&self, st: &GalerkinState, want_grad: bool) -> (f64, Option<GalerkinGradient>) {
        self.evaluate_impl(st, want_grad, want_grad)
    }

    fn evaluate_impl(
        &self,
        st: &GalerkinState,
        periodic_grad: bool,
        coeff_grad: bool,
    ) -> (f64, Option<GalerkinGradient>) {
        let p = &self.params;
        let sp = &self.spectral;
        let len = self.len();
        let nf = p.flux();
        let g2 = p.g * p.g;
        let gc = p.g * p.theta.cos();
        let lv = self.levels;
        let (u, v) = self.uv(st);
        let w1: Vec<C64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
        let w2: Vec<C64> = u.iter().zip(&v).map(|(a, b)| -0.5 * I * (a - b)).collect();
        let nu: [Vec<f64>; 2] = [0, 1].map(|c| (0..len).map(|j| p.e * st.alpha[c][j] + gc * st.z[c][j]).collect());

        // exact covariant curl
        let mut cw = vec![ZERO; len];
        for l in 0..=lv + 1 {
            let mut c = ZERO;
            if l >= 1 && l - 1 <= lv {
                c += st.a[l - 1] * (nf * l as f64).sqrt();
            }
            if l < lv {
                c += st.b[l + 1] * (nf * (l + 1) as f64).sqrt();
            }
            if c == ZERO {
                continue;
            }
            let c = I * c;
            let phi = &self.basis.levels[l];
            for j in 0..len {
                cw[j] += c * phi[j];
            }
        }
        for j in 0..len {
            let (n1, n2) = (nu[0][j], nu[1][j]);
            cw[j] += 0.5 * (C64::new(-n1, n2) * u[j] + C64::new(n1, n2) * v[j]);
        }

        let curl_a = re(&sp.curl(&cplx(&st.alpha[0]), &cplx(&st.alpha[1])));
        let curl_z = re(&sp.curl(&cplx(&st.z[0]), &cplx(&st.z[1])));
        let curl_nu: Vec<f64> = (0..len).map(|j| p.e * curl_a[j] + gc * curl_z[j]).collect();
        let phi_c = cplx(&st.phi);
        let [gp1, gp2] = sp.grad(&phi_c);
        let wabs2: Vec<f64> = (0..len).map(|j| w1[j].norm_sqr() + w2[j].norm_sqr()).collect();
        let zabs2: Vec<f64> = (0..len).map(|j| st.z[0][j].powi(2) + st.z[1][j].powi(2)).collect();
        let x: Vec<C64> = (0..len).map(|j| w1[j].conj() * w2[j] - w2[j].conj() * w1[j]).collect();
        let xi2 = self.xi * self.xi;
        let phi = &st.phi;
        let mut e = 0.0;
        for j in 0..len {
            let f2 = phi[j] * phi[j];
            e += cw[j].norm_sqr()
                + 0.5 * curl_a[j] * curl_a[j]
                + 0.5 * curl_z[j] * curl_z[j]
                + 0.5 * g2 * f2 * wabs2[j]
                + 0.5 * p.kappa * f2 * zabs2[j]
                + 0.5 * g2 * x[j].norm_sqr()
                + (I * (nf + curl_nu[j]) * x[j]).re
                + gp1[j].norm_sqr()
                + gp2[j].norm_sqr()
                + 0.5 * p.lambda * (f2 - xi2).powi(2);
        }
        let energy = e / len as f64;
        if !periodic_grad && !coeff_grad {
            return (energy, None);
        }

        // current F = dE/d nu~
        let ix: Vec<C64> = x.iter().map(|v| C64::new((I * v).re, 0.0)).collect();
        let [c1, c2] = sp.curl_adj(&ix);
        let current = [
            (0..len)
                .map(|j| 2.0 * (cw[j].conj() * w2[j]).im + c1[j].re)
                .collect::<Vec<f64>>(),
            (0..len)
                .map(|j| -2.0 * (cw[j].conj() * w1[j]).im + c2[j].re)
                .collect::<Vec<f64>>(),
        ];
        let cc = |f: &[f64]| -> [Vec<f64>; 2] {
            let [a, b] = sp.curl_adj(&cplx(f));
            [re(&a), re(&b)]
        };
        let cca = cc(&curl_a);
        let ccz = cc(&curl_z);
        let g_alpha = [0, 1].map(|c| (0..len).map(|j| cca[c][j] + p.e * current[c][j]).collect::<Vec<f64>>());
        let g_z = [0, 1].map(|c| {
            (0..len)
                .map(|j| ccz[c][j] + p.kappa * phi[j] * phi[j] * st.z[c][j] + gc * current[c][j])
                .collect::<Vec<f64>>()
        });
        let lap = re(&sp.neg_laplacian(&phi_c));
        let g_phi: Vec<f64> = (0..len)
            .map(|j| {
                let f = phi[j];
                2.0 * (lap[j] + (0.5 * g2 * wabs2[j] + 0.5 * p.kappa * zabs2[j] + p.lambda * (f * f - xi2)) * f)
            })
            .collect();

        let mut ga = vec![ZERO; lv + 1];
        let mut gb = vec![ZERO; lv + 1];
        if coeff_grad {
            // W = dE/d conj(w) from the pointwise terms
            let r2 = std::f64::consts::SQRT_2;
            let mut pp = vec![ZERO; len];
            let mut qq = vec![ZERO; len];
            for j in 0..len {
                let pot = 0.5 * g2 * phi[j] * phi[j];
                let cn = nf + curl_nu[j];
                let jw = [-w2[j], w1[j]];
                let wa = pot * w1[j] + g2 * x[j] * jw[0] - I * cn * jw[0];
                let wb = pot * w2[j] + g2 * x[j] * jw[1] - I * cn * jw[1];
                let (n1, n2) = (nu[0][j], nu[1][j]);
                pp[j] = (C64::new(-n1, -n2) * cw[j] + wa + I * wb) / r2;
                qq[j] = (C64::new(n1, -n2) * cw[j] + wa - I * wb) / r2;
            }
            let proj: Vec<(C64, C64, C64)> = (0..=lv + 1)
                .into_par_iter()
                .map(|l| {
                    let phi = &self.basis.levels[l];
                    let pc = dot(phi, &cw);
                    if l > lv {
                        return (pc, ZERO, ZERO);
                    }
                    (pc, dot(phi, &pp), dot(phi, &qq))
                })
                .collect();
            for m in 0..=lv {
                ga[m] = -I * (nf * (m + 1) as f64).sqrt() * proj[m + 1].0 + proj[m].1;
                gb[m] = proj[m].2;
                if m >= 1 {
                    gb[m] += -I * (nf * m as f64).sqrt() * proj[m - 1].0;
                }
            }
        }
        (
            energy,
            Some(GalerkinGradient {
                ga,
                gb,
                g_alpha,
                g_z,
                g_phi,
                current,
            }),
        )
    }

    /// Project Fourier coefficients onto the Galerkin space of a periodic unknown.
    fn project_coeffs(&self, c: &mut [C64], kind: Kind) {
        for (i, v) in c.iter_mut().enumerate() {
            if !self.mask[i] {
                *v = ZERO;
                continue;
            }
            *v = match kind {
                Kind::Phi => C64::new(v.re, 0.0),
                Kind::Alpha | Kind::Z => C64::new(0.0, v.im),
            };
        }
        if kind == Kind::Alpha {
            c[0] = ZERO;
        }
    }

    /// Preconditioned, projected update of the periodic fields;
    /// returns `P^{-1} g` for `(alpha, z, phi)`.
    fn periodic_step(&self, g: &GalerkinGradient) -> ([Vec<f64>; 2], [Vec<f64>; 2], Vec<f64>) {
        let sp = &self.spectral;
        let p = &self.params;
        let mz2 = p.kappa * self.xi * self.xi;
        let mh2 = 2.0 * p.lambda * self.xi * self.xi;
        let n = sp.k2.len();
        let vec_step = |gv: &[Vec<f64>; 2], kind: Kind| -> [Vec<f64>; 2] {
            let mut a = sp.forward(&cplx(&gv[0]));
            let mut b = sp.forward(&cplx(&gv[1]));
            for i in 0..n {
                let (kx, ky, k2) = (sp.k[0][i], sp.k[1][i], sp.k2[i]);
                let (lt, ll) = match kind {
                    Kind::Alpha => (if k2 > 0.0 { 1.0 / k2 } else { 0.0 }, 0.0),
                    _ => (1.0 / (k2 + mz2), 1.0 / mz2),
                };
                if k2 > 0.0 {
                    let kl = (kx * a[i] + ky * b[i]) / k2;
                    let (la, lb) = (kl * kx, kl * ky);
                    a[i] = (a[i] - la) * lt + la * ll;
                    b[i] = (b[i] - lb) * lt + lb * ll;
                } else {
                    a[i] *= ll;
                    b[i] *= ll;
                }
            }
            self.project_coeffs(&mut a, kind);
            self.project_coeffs(&mut b, kind);
            [re(&sp.backward(&a)), re(&sp.backward(&b))]
        };
        let da = vec_step(&g.g_alpha, Kind::Alpha);
        let dz = vec_step(&g.g_z, Kind::Z);
        let mut f = sp.forward(&cplx(&g.g_phi));
        for (i, v) in f.iter_mut().enumerate() {
            *v *= 0.5 / (sp.k2[i] + mh2);
        }
        self.project_coeffs(&mut f, Kind::Phi);
        (da, dz, re(&sp.backward(&f)))
    }

    /// Project the periodic fields of a state onto the Galerkin space.
    pub fn project_state(&self, st: &mut GalerkinState) {
        let sp = &self.spectral;
        let proj = |f: &mut Vec<f64>, kind: Kind| {
            let mut c = sp.forward(&cplx(f));
            self.project_coeffs(&mut c, kind);
            *f = re(&sp.backward(&c));
        };
        for c in 0..2 {
            proj(&mut st.z[c], Kind::Z);
        }
        proj(&mut st.phi, Kind::Phi);
        // alpha: transverse part only
        let mut a = sp.forward(&cplx(&st.alpha[0]));
        let mut b = sp.forward(&cplx(&st.alpha[1]));
        for i in 0..a.len() {
            let k2 = sp.k2[i];
            if k2 > 0.0 {
                let kl = (sp.k[0][i] * a[i] + sp.k[1][i] * b[i]) / k2;
                a[i] -= kl * sp.k[0][i];
                b[i] -= kl * sp.k[1][i];
            }
        }
        self.project_coeffs(&mut a, Kind::Alpha);
        self.project_coeffs(&mut b, Kind::Alpha);
        st.alpha = [re(&sp.backward(&a)), re(&sp.backward(&b))];
    }

    /// Relax the periodic fields to their Galerkin equations at fixed `w`.
    /// Returns the number of sweeps and the final relative update.
    pub fn relax_periodic(&self, st: &mut GalerkinState, tol: f64, max_sweeps: usize) -> Result<(usize, f64)> {
        let mut last = f64::INFINITY;
        let mut history = Vec::new();
        for sweep in 0..max_sweeps {
            let (_, g) = self.evaluate_impl(st, true, false);
            let g = g.expect("gradient requested");
            let (da, dz, dp) = self.periodic_step(&g);
            let mut num = 0.0;
            let mut den = 0.0;
            for c in 0..2 {
                for j in 0..da[c].len() {
                    st.alpha[c][j] -= da[c][j];
                    st.z[c][j] -= dz[c][j];
                }
                num += l2(&da[c]).powi(2) + l2(&dz[c]).powi(2);
                den += l2(&st.alpha[c]).powi(2) + l2(&st.z[c]).powi(2);
            }
            for j in 0..dp.len() {
                st.phi[j] -= dp[j];
            }
            num += l2(&dp).powi(2);
            let dev: Vec<f64> = st.phi.iter().map(|f| f - self.xi).collect();
            den += l2(&dev).powi(2);
            let rel = if num == 0.0 {
                0.0
            } else {
                (num / den.max(1e-300)).sqrt()
            };
            history.push(rel);
            last = rel;
            if rel <= tol {
                return Ok((sweep + 1, rel));
            }
        }
        Err(Error::NoConvergence {
            solver: "periodic relaxation",
            iterations: max_sweeps,
            residual: last,
            history,
        })
    }

    /// Projected gradient norms of the periodic equations, each relative to
    /// the size of its leading linear term.
    pub fn periodic_residual(&self, st: &GalerkinState) -> f64 {
        let (_, g) = self.evaluate_impl(st, true, false);
        let g = g.expect("gradient requested");
        let (da, dz, dp) = self.periodic_step(&g);
        let dev: Vec<f64> = st.phi.iter().map(|f| f - self.xi).collect();
        let num = l2(&da[0]).powi(2) + l2(&da[1]).powi(2) + l2(&dz[0]).powi(2) + l2(&dz[1]).powi(2) + l2(&dp).powi(2);
        let den = l2(&st.alpha[0]).powi(2)
            + l2(&st.alpha[1]).powi(2)
            + l2(&st.z[0]).powi(2)
            + l2(&st.z[1]).powi(2)
            + l2(&dev).powi(2);
        if num == 0.0 {
            0.0
        } else {
            (num / den.max(1e-300)).sqrt()
        }
    }

    /// Relative size of the longitudinal (pure-gauge) part of the current
    /// on the retained Fourier modes: `|P_L F| / |F|`.
    pub fn divergence_defect(&self, st: &GalerkinState) -> f64 {
        let (_, g) = self.evaluate_impl(st, true, false);
        let g = g.expect("gradient requested");
        let sp = &self.spectral;
        let a = sp.forward(&cplx(&g.current[0]));
        let b = sp.forward(&cplx(&g.current[1]));
        let mut lon = 0.0;
        let mut tot = 0.0;
        for i in 0..a.len() {
            if !self.mask[i] {
                continue;
            }
            let k2 = sp.k2[i];
            tot += a[i].norm_sqr() + b[i].norm_sqr();
            if k2 > 0.0 {
                let kl = (sp.k[0][i] * a[i] + sp.k[1][i] * b[i]).norm_sqr() / k2;
                lon += kl;
            }
        }
        if tot == 0.0 {
            0.0
        } else {
            (lon / tot).sqrt()
        }
    }
}

/// Outer unknowns: `s = b_0` (real) and the even-level coefficients.
fn pack(st: &GalerkinState) -> Vec<f64> {
    let mut x = vec![st.b[0].re];
    for m in (0..st.a.len()).step_by(2) {
        x.push(st.a[m].re);
        x.push(st.a[m].im);
    }
    for m in (2..st.b.len()).step_by(2) {
        x.push(st.b[m].re);
        x.push(st.b[m].im);
    }
    x
}

fn unpack(x: &[f64], st: &mut GalerkinState) {
    st.b[0] = C64::new(x[0], 0.0);
    let mut k = 1;
    for m in (0..st.a.len()).step_by(2) {
        st.a[m] = C64::new(x[k], x[k + 1]);
        k += 2;
    }
    for m in (2..st.b.len()).step_by(2) {
        st.b[m] = C64::new(x[k], x[k + 1]);
        k += 2;
    }
}

fn pack_grad(g: &GalerkinGradient) -> Vec<f64> {
    let mut r = vec![2.0 * g.gb[0].re];
    for m in (0..g.ga.len()).step_by(2) {
        r.push(2.0 * g.ga[m].re);
        r.push(2.0 * g.ga[m].im);
    }
    for m in (2..g.gb.len()).step_by(2) {
        r.push(2.0 * g.gb[m].re);
        r.push(2.0 * g.gb[m].im);
    }
    r
}

fn vnorm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Settings of the branch solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchOptions {
    /// Highest Landau level in the expansion of `w` (even levels are used).
    pub galerkin_levels: usize,
    /// Sign of the starting `s` (`+1` or `-1`).
    pub sign: f64,
    pub max_iter: usize,
    /// Stopping tolerance on the relative residual.
    pub tol: f64,
    /// Tolerance of the inner periodic relaxation.
    pub inner_tol: f64,
}

impl Default for BranchOptions {
    fn default() -> Self {
        BranchOptions {
            galerkin_levels: 48,
            sign: 1.0,
            max_iter: 40,
            tol: 1e-10,
            inner_tol: 1e-12,
        }
    }
}

/// A converged point of the bifurcating branch.
#[derive(Debug, Clone, Serialize)]
pub struct BranchPoint {
    pub omega: f64,
    /// `s = <chi, w>` (real by the phase fixing).
    pub s: f64,
    /// `mu = g^2 xi^2 / 2 = n (1 - omega)`.
    pub mu: f64,
    pub xi: f64,
    /// Constant part `<alpha>` of the potential correction.
    pub c: [f64; 2],
    /// Landau coefficients of `w` (`U_m`, `V_m` components), as `(re, im)`.
    pub coeffs_u: Vec<[f64; 2]>,
    pub coeffs_v: Vec<[f64; 2]>,
    /// Full field configuration on the grid.
    #[serde(skip)]
    pub state: FieldState,
    /// Correction `(w - s chi, alpha, z, phi - xi)`, orthogonal to the kernel.
    #[serde(skip)]
    pub u_perp: FieldState,
    /// Rescaled energy per cell area.
    pub energy_per_cell: f64,
    /// `energy_per_cell - n^2 / (2 e^2)`.
    pub energy_excess: f64,
    /// Unrescaled energy per unit area.
    pub energy_per_area: f64,
    /// `1/2 b^2 - energy_per_area`.
    pub energy_deficit: f64,
    pub b: f64,
    /// Final relative residual (outer and periodic equations).
    pub residual_norm: f64,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    /// Longitudinal fraction of the current on the retained modes.
    pub div_current: f64,
    /// `|<chi, w_perp>| / |s|`.
    pub kernel_overlap: f64,
    pub galerkin_levels: usize,
    pub grid_n: usize,
}

fn reduced_gradient(model: &GalerkinModel, x: &[f64], st: &mut GalerkinState, inner_tol: f64) -> Result<Vec<f64>> {
    unpack(x, st);
    model.relax_periodic(st, inner_tol, 200)?;
    let (_, g) = model.evaluate(st, true);
    Ok(pack_grad(&g.expect("gradient requested")))
}

/// Solve the full rescaled equations at fixed `omega` on the branch
/// through `chi` (Galerkin truncation at `opts.galerkin_levels`).
pub fn newton_branch(omega: f64, chi: &LLLState, params: &PhysParams, opts: &BranchOptions) -> Result<BranchPoint> {
    if chi.n != 1 || params.n != 1 {
        return Err(Error::Unsupported(format!(
            "the bifurcation branch is constructed for n = 1 only (got n = {})",
            chi.n.max(params.n)
        )));
    }
    if !(omega > 0.0 && omega < 1.0) {
        return invalid(format!(
            "the branch bifurcates into omega > 0 (b > b_*); got omega = {omega}"
        ));
    }
    if opts.galerkin_levels < 2 {
        return invalid("the Galerkin expansion needs at least two levels");
    }
    let levels = opts.galerkin_levels + opts.galerkin_levels % 2;
    let mu = params.mu_of_omega(omega);
    let xi = params.xi_of_mu(mu);
    let model = GalerkinModel::new(chi, params, xi, levels)?;
    let fo = first_order(chi, params)?;
    let s2 = s_squared_of_omega(omega, chi, params)?;
    let s0 = opts.sign.signum() * s2.sqrt();

    // initial guess from the first-order fields
    let mut st = model.vacuum();
    st.b[0] = C64::new(s0, 0.0);
    for c in 0..2 {
        st.alpha[c] = fo.a1.comps[c].iter().map(|v| s2 * v.re).collect();
        st.z[c] = fo.z1.comps[c].iter().map(|v| s2 * v.re).collect();
    }
    st.phi = fo.psi1.comps[0].iter().map(|v| xi + s2 * v.re).collect();
    model.project_state(&mut st);

    let scale = |x: &[f64]| params.flux() * vnorm(x).max(1e-300);
    let mut x = pack(&st);
    let mut r = reduced_gradient(&model, &x, &mut st, opts.inner_tol)?;
    let mut history = vec![vnorm(&r) / scale(&x)];
    let mut iterations = 0;
    while history.last().copied().unwrap_or(f64::INFINITY) > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence {
                solver: "newton branch",
                iterations,
                residual: *history.last().unwrap(),
                history,
            });
        }
        iterations += 1;
        let dim = x.len();
        let h = 1e-4 * x[0].abs().max(1e-12);
        let cols: Vec<Result<Vec<f64>>> = (0..dim)
            .into_par_iter()
            .map(|j| {
                let mut sp_ = st.clone();
                let mut sm_ = st.clone();
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let rp = reduced_gradient(&model, &xp, &mut sp_, opts.inner_tol)?;
                let rm = reduced_gradient(&model, &xm, &mut sm_, opts.inner_tol)?;
                Ok(rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
            })
            .collect();
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for (j, col) in cols.into_iter().enumerate() {
            let col = col?;
            for i in 0..dim {
                jac[(i, j)] = col[i];
            }
        }
        let jac = (&jac + jac.transpose()) * 0.5;
        let rhs = -DVector::from_vec(r.clone());
        let dx = jac.clone().lu().solve(&rhs).ok_or_else(|| Error::Degenerate {
            norm: 0.0,
            threshold: f64::EPSILON,
        })?;
        // Armijo backtracking on the residual norm
        let r0 = vnorm(&r);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let xt: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + t * d).collect();
            let mut stt = st.clone();
            let rt = reduced_gradient(&model, &xt, &mut stt, opts.inner_tol)?;
            if vnorm(&rt) <= (1.0 - 1e-4 * t) * r0 || vnorm(&rt) / scale(&xt) <= opts.tol {
                x = xt;
                r = rt;
                st = stt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        history.push(vnorm(&r) / scale(&x));
        if !accepted {
            return Err(Error::NoConvergence {
                solver: "newton branch (line search)",
                iterations,
                residual: *history.last().unwrap(),
                history,
            });
        }
    }

    // assemble the branch point
    let outer = *history.last().unwrap();
    let inner = model.periodic_residual(&st);
    let (excess, _) = model.evaluate(&st, false);
    let b = params.b_of_omega(omega);
    let background = 0.5 * params.flux().powi(2) / (params.e * params.e);
    let unscale = params.energy_unscale(b);
    let state = model.field_state(&st);
    let mut w_perp = st.clone();
    w_perp.b[0] = ZERO;
    let perp_w = model.field_state(&w_perp).w;
    let overlap = perp_w.inner(&chi.chi)?.norm() / st.b[0].re.abs().max(1e-300);
    let u_perp = FieldState {
        w: perp_w,
        a: state.a.clone(),
        z: state.z.clone(),
        phi: state.phi.map(|f| f - xi),
    };
    let c = [avg(&st.alpha[0]), avg(&st.alpha[1])];
    Ok(BranchPoint {
        omega,
        s: st.b[0].re,
        mu,
        xi,
        c,
        coeffs_u: st.a.iter().map(|v| [v.re, v.im]).collect(),
        coeffs_v: st.b.iter().map(|v| [v.re, v.im]).collect(),
        state,
        u_perp,
        energy_per_cell: background + excess,
        energy_excess: excess,
        energy_per_area: unscale * (background + excess),
        energy_deficit: -unscale * excess,
        b,
        residual_norm: outer.max(inner),
        residual_history: history,
        iterations,
        div_current: model.divergence_defect(&st),
        kernel_overlap: overlap,
        galerkin_levels: levels,
        grid_n: chi.chi.n,
    })
}

/// Energy of the truncated order-`s` ansatz
/// `(s chi, s^2 a', s^2 z', xi_s + s^2 psi')` with `xi_s = sqrt(2n)/g + s^2 xi'`,
/// compared with `n^2/(2e^2) + s^4 B` (`B` the `s^4` bracket).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzExpansion {
    pub s: Vec<f64>,
    /// Energy per cell minus `n^2 / (2 e^2)`.
    pub energy_excess: Vec<f64>,
    /// `s^4 B`.
    pub predicted: Vec<f64>,
    /// `|energy_excess - s^4 B|`.
    pub remainder: Vec<f64>,
    /// Least-squares log-log slope of the remainder against `s`.
    pub slope: f64,
    pub bracket: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().max(1e-300).ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Evaluate the ansatz energy with the Galerkin evaluator (exact Landau
/// levels, spectral periodic fields) at the given `s` values.
pub fn ansatz_expansion(chi: &LLLState, params: &PhysParams, s_values: &[f64]) -> Result<AnsatzExpansion> {
    let fo = first_order(chi, params)?;
    let bracket = s4_bracket(&fo, chi, params)?;
    let xi0 = (2.0 * params.flux()).sqrt() / params.g;
    let mut model = GalerkinModel::new(chi, params, xi0, 2)?;
    let mut out = AnsatzExpansion {
        s: s_values.to_vec(),
        energy_excess: Vec::new(),
        predicted: Vec::new(),
        remainder: Vec::new(),
        slope: f64::NAN,
        bracket,
    };
    for &s in s_values {
        let s2 = s * s;
        let xi_s = xi0 + s2 * fo.xi1;
        model.xi = xi_s;
        let mut st = model.vacuum();
        st.b[0] = C64::new(s, 0.0);
        for c in 0..2 {
            st.alpha[c] = fo.a1.comps[c].iter().map(|v| s2 * v.re).collect();
            st.z[c] = fo.z1.comps[c].iter().map(|v| s2 * v.re).collect();
        }
        st.phi = fo.psi1.comps[0].iter().map(|v| xi_s + s2 * v.re).collect();
        let (e, _) = model.evaluate(&st, false);
        let pred = s2 * s2 * bracket;
        out.energy_excess.push(e);
        out.predicted.push(pred);
        out.remainder.push((e - pred).abs());
    }
    if s_values.len() >= 2 {
        out.slope = loglog_slope(&out.s, &out.remainder);
    }
    Ok(out)
}
