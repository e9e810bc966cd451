//! Rescaled Weinberg–Salam energy per cell and its `L^2` gradient on the grid.
//!
//! `w` is differentiated with corner-averaged link-phase differences
//! (links of `a^n + nu~`, `nu~ = e alpha + g cos(theta) z`); the periodic
//! fields spectrally. The residual is the exact gradient of the discrete
//! energy, so gradient checks hold to rounding error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Calculus, FieldState, GridField, Sector, C64};
use crate::params::PhysParams;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Names of the nine integrands, in the order of [`EnergyBreakdown::terms`].
pub const TERM_NAMES: [&str; 9] = [
    "|curl_nu w|^2",
    "1/2 |curl a|^2",
    "1/2 |curl z|^2",
    "1/2 g^2 phi^2 |w|^2",
    "1/2 kappa phi^2 |z|^2",
    "g^2/2 |wbar x w|^2",
    "i (curl nu) wbar x w",
    "|grad phi|^2",
    "1/2 lambda (phi^2 - xi^2)^2",
];

/// Per-cell energy split into the nine integrands (cell averages).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// Cell average `E / |cell|`.
    pub total: f64,
    /// `total - n^2 / (2 e^2)`, accumulated without the background constant.
    pub excess: f64,
    /// Raw integral over the cell.
    pub integral: f64,
    pub terms: [f64; 9],
    /// Imaginary part of the `i (curl nu) wbar x w` average (should vanish).
    pub term7_imag: f64,
}

/// Gradient fields `(G1, G2, G3, G4)` of the energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub g1: GridField,
    pub g2: GridField,
    pub g3: GridField,
    pub g4: GridField,
}

impl Residual {
    /// `sqrt(|G1|^2 + |G2|^2 + |G3|^2 + |G4|^2)` in the cell-average norm.
    pub fn norm(&self) -> f64 {
        [&self.g1, &self.g2, &self.g3, &self.g4]
            .iter()
            .map(|f| f.norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Global phase rotation of the `w` component.
    pub fn phase_rotate(&self, delta: f64) -> Residual {
        let mut r = self.clone();
        r.g1 = self.g1.scale(C64::from_polar(1.0, delta));
        r
    }
}

/// Energy functional on one discretisation.
pub struct EnergyModel<'a> {
    pub calc: &'a Calculus,
    pub params: PhysParams,
    /// Rescaled Higgs vacuum value.
    pub xi: f64,
}

fn re(v: &[C64]) -> Vec<f64> {
    v.iter().map(|c| c.re).collect()
}

fn avg(v: impl Iterator<Item = f64>, len: usize) -> f64 {
    v.sum::<f64>() / len as f64
}

impl<'a> EnergyModel<'a> {
    pub fn new(calc: &'a Calculus, params: PhysParams, xi: f64) -> Self {
        EnergyModel { calc, params, xi }
    }

    fn check(&self, s: &FieldState) -> Result<()> {
        s.check()?;
        if s.n() != self.calc.n() || s.flux() != self.calc.flux {
            return Err(Error::SectorMismatch(format!(
                "state on N={} with flux {} used with a discretisation for N={} flux {}",
                s.n(),
                s.flux(),
                self.calc.n(),
                self.calc.flux
            )));
        }
        Ok(())
    }

    /// `nu~ = e alpha + g cos(theta) z` (real parts).
    pub fn nu_tilde(&self, s: &FieldState) -> GridField {
        let p = &self.params;
        let gc = p.g * p.theta.cos();
        let c: Vec<Vec<C64>> = (0..2)
            .map(|k| {
                s.a.comps[k]
                    .iter()
                    .zip(&s.z.comps[k])
                    .map(|(a, z)| C64::new(p.e * a.re + gc * z.re, 0.0))
                    .collect()
            })
            .collect();
        GridField {
            sector: Sector::Periodic,
            n: s.n(),
            comps: c,
        }
    }

    pub fn energy(&self, s: &FieldState) -> Result<EnergyBreakdown> {
        Ok(self.evaluate(s, false)?.0)
    }

    pub fn residual(&self, s: &FieldState) -> Result<Residual> {
        Ok(self.evaluate(s, true)?.1.expect("gradient requested"))
    }

    pub fn energy_and_residual(&self, s: &FieldState) -> Result<(EnergyBreakdown, Residual)> {
        let (e, r) = self.evaluate(s, true)?;
        Ok((e, r.expect("gradient requested")))
    }

    fn evaluate(&self, s: &FieldState, want_grad: bool) -> Result<(EnergyBreakdown, Option<Residual>)> {
        self.check(s)?;
        let calc = self.calc;
        let sp = &calc.spectral;
        let p = &self.params;
        let ng = calc.n();
        let len = ng * ng;
        let n2 = len as f64;
        let nflux = calc.flux as f64;
        let g2 = p.g * p.g;
        let gc = p.g * p.theta.cos();

        let nu = self.nu_tilde(s);
        let links = calc.links(Some(&nu))?;
        let w1 = &s.w.comps[0];
        let w2 = &s.w.comps[1];
        let alpha = [re(&s.a.comps[0]), re(&s.a.comps[1])];
        let zf = [re(&s.z.comps[0]), re(&s.z.comps[1])];
        let phi = re(&s.phi.comps[0]);
        let cplx = |v: &[f64]| -> Vec<C64> { v.iter().map(|&x| C64::new(x, 0.0)).collect() };

        // term 1: corner-averaged |curl_nu w|^2
        let (_, curls) = calc.corner_curls([w1, w2], &links);
        let t1 = curls
            .iter()
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>() * 0.25)
            .sum::<f64>()
            / n2;

        // periodic derivatives
        let curl_a = re(&sp.curl(&cplx(&alpha[0]), &cplx(&alpha[1])));
        let curl_z = re(&sp.curl(&cplx(&zf[0]), &cplx(&zf[1])));
        let curl_nu: Vec<f64> = curl_a.iter().zip(&curl_z).map(|(a, z)| p.e * a + gc * z).collect();
        let [gp1, gp2] = sp.grad(&cplx(&phi));

        let wabs2: Vec<f64> = (0..len).map(|j| w1[j].norm_sqr() + w2[j].norm_sqr()).collect();
        let zabs2: Vec<f64> = (0..len).map(|j| zf[0][j].powi(2) + zf[1][j].powi(2)).collect();
        let x: Vec<C64> = (0..len).map(|j| w1[j].conj() * w2[j] - w2[j].conj() * w1[j]).collect();

        let t2 = 0.5 * avg(curl_a.iter().map(|v| v * v), len);
        let t3 = 0.5 * avg(curl_z.iter().map(|v| v * v), len);
        let t4 = 0.5 * g2 * avg((0..len).map(|j| phi[j] * phi[j] * wabs2[j]), len);
        let t5 = 0.5 * p.kappa * avg((0..len).map(|j| phi[j] * phi[j] * zabs2[j]), len);
        let t6 = 0.5 * g2 * avg(x.iter().map(|v| v.norm_sqr()), len);
        let t7c: C64 = (0..len).map(|j| I * (nflux + curl_nu[j]) * x[j]).sum::<C64>() / n2;
        let t8 = avg((0..len).map(|j| gp1[j].norm_sqr() + gp2[j].norm_sqr()), len);
        let xi2 = self.xi * self.xi;
        let t9 = 0.5 * p.lambda * avg(phi.iter().map(|f| (f * f - xi2).powi(2)), len);

        let background = 0.5 * nflux * nflux / (p.e * p.e);
        let terms = [t1, background + t2, t3, t4, t5, t6, t7c.re, t8, t9];
        let excess = t1 + t2 + t3 + t4 + t5 + t6 + t7c.re + t8 + t9;
        let total = background + excess;
        let breakdown = EnergyBreakdown {
            total,
            excess,
            integral: total * calc.grid.shape.cell_area,
            terms,
            term7_imag: t7c.im,
        };
        if !want_grad {
            return Ok((breakdown, None));
        }

        // gradient of term 1 with respect to conj(w) and the edge phases
        let cot: Vec<[C64; 4]> = curls.iter().map(|c| c.map(|v| v * (0.25 / n2))).collect();
        let ge = calc.corner_curls_adj(&cot);
        let dw1 = calc.edge_adjoint(&ge[0], &links);
        let dw2 = calc.edge_adjoint(&ge[1], &links);
        let s1 = calc.edge_phase_sensitivity(w1, &ge[0], &links);
        let s2 = calc.edge_phase_sensitivity(w2, &ge[1], &links);
        // d term1 / d nu~ (density, i.e. times N^2)
        let mut f_nu = [vec![0.0; len], vec![0.0; len]];
        for dir in 0..2 {
            let sens: Vec<C64> = (0..len)
                .map(|j| C64::new((s1[dir][j] + s2[dir][j]) * n2, 0.0))
                .collect();
            let back = sp.edge_integral_adj(&sens, dir);
            let h = calc.grid.shape.basis[dir];
            for j in 0..len {
                for c in 0..2 {
                    f_nu[c][j] += h[c] / ng as f64 * back[j].re;
                }
            }
        }
        // term 7: <i X curl nu~> -> curl*(i X)
        let ix: Vec<C64> = x.iter().map(|v| C64::new((I * v).re, 0.0)).collect();
        let [c1, c2] = sp.curl_adj(&ix);
        for j in 0..len {
            f_nu[0][j] += c1[j].re;
            f_nu[1][j] += c2[j].re;
        }

        // G1
        let mut g1a = Vec::with_capacity(len);
        let mut g1b = Vec::with_capacity(len);
        for j in 0..len {
            let pot = 0.5 * g2 * phi[j] * phi[j];
            let cn = nflux + curl_nu[j];
            // J w = (-w2, w1)
            let jw = [-w2[j], w1[j]];
            g1a.push(n2 * dw1[j] + pot * w1[j] + g2 * x[j] * jw[0] - I * cn * jw[0]);
            g1b.push(n2 * dw2[j] + pot * w2[j] + g2 * x[j] * jw[1] - I * cn * jw[1]);
        }
        // curl* curl of the periodic fields
        let cc = |f: &[f64]| -> [Vec<f64>; 2] {
            let [a, b] = sp.curl_adj(&cplx(f));
            [re(&a), re(&b)]
        };
        let cca = cc(&curl_a);
        let ccz = cc(&curl_z);
        let g2f: Vec<Vec<C64>> = (0..2)
            .map(|c| (0..len).map(|j| C64::new(cca[c][j] + p.e * f_nu[c][j], 0.0)).collect())
            .collect();
        let g3f: Vec<Vec<C64>> = (0..2)
            .map(|c| {
                (0..len)
                    .map(|j| C64::new(ccz[c][j] + p.kappa * phi[j] * phi[j] * zf[c][j] + gc * f_nu[c][j], 0.0))
                    .collect()
            })
            .collect();
        let lap = re(&sp.neg_laplacian(&cplx(&phi)));
        let g4f: Vec<C64> = (0..len)
            .map(|j| {
                let f = phi[j];
                C64::new(
                    lap[j] + (0.5 * g2 * wabs2[j] + 0.5 * p.kappa * zabs2[j] + p.lambda * (f * f - xi2)) * f,
                    0.0,
                )
            })
            .collect();
        let residual = Residual {
            g1: GridField::vector(s.w.sector, ng, g1a, g1b),
            g2: GridField {
                sector: Sector::Periodic,
                n: ng,
                comps: g2f,
            },
            g3: GridField {
                sector: Sector::Periodic,
                n: ng,
                comps: g3f,
            },
            g4: GridField::scalar(Sector::Periodic, ng, g4f),
        };
        Ok((breakdown, Some(residual)))
    }
}

/// Energy of `state` (convenience wrapper).
pub fn energy(calc: &Calculus, state: &FieldState, params: &PhysParams, xi: f64) -> Result<EnergyBreakdown> {
    EnergyModel::new(calc, *params, xi).energy(state)
}

/// Residual map `(G1, ..., G4)` of `state` (convenience wrapper).
pub fn residual(calc: &Calculus, state: &FieldState, params: &PhysParams, xi: f64) -> Result<Residual> {
    EnergyModel::new(calc, *params, xi).residual(state)
}

/// Directional derivative predicted by the residual:
/// `2 Re<G1, dw> + <G2, da> + <G3, dz> + 2 <G4, dphi>` (cell averages).
pub fn pairing(r: &Residual, dir: &FieldState) -> Result<f64> {
    let real_part = |a: &GridField, b: &GridField| -> Result<f64> { Ok(a.inner(b)?.re) };
    Ok(2.0 * real_part(&r.g1, &dir.w)?
        + real_part(&r.g2, &dir.a)?
        + real_part(&r.g3, &dir.z)?
        + 2.0 * real_part(&r.g4, &dir.phi)?)
}

/// Outcome of a gradient check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub predicted: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

/// Compare the residual pairing with a Richardson-extrapolated central
/// difference of the energy along `direction`.
pub fn gradient_check(
    calc: &Calculus,
    state: &FieldState,
    params: &PhysParams,
    xi: f64,
    direction: &FieldState,
    step: f64,
) -> Result<GradientCheck> {
    let model = EnergyModel::new(calc, *params, xi);
    let r = model.residual(state)?;
    let predicted = pairing(&r, direction)?;
    let central = |h: f64| -> Result<f64> {
        let ep = model.energy(&state.axpy(h, direction)?)?.excess;
        let em = model.energy(&state.axpy(-h, direction)?)?.excess;
        Ok((ep - em) / (2.0 * h))
    };
    let d1 = central(step)?;
    let d2 = central(0.5 * step)?;
    let fd = (4.0 * d2 - d1) / 3.0;
    let scale = predicted.abs().max(fd.abs()).max(1e-300);
    Ok(GradientCheck {
        predicted,
        finite_difference: fd,
        relative_error: (predicted - fd).abs() / scale,
    })
}
