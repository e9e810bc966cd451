//! Physical couplings and the derived constants used throughout the crate.
//!
//! Internal units fix the Higgs vacuum value to `phi0 = 1`, so that
//! `M_W = g / sqrt(2)`, `M_Z = M_W / cos(theta)` and `M_H = sqrt(2 lambda)`.
//! In the rescaled problem (cell area `2 pi`, flux `n`) the three bosons
//! carry the masses `m_w = sqrt(n)`, `m_z = sqrt(n)/cos(theta)` and
//! `m_h = sqrt(4 lambda n)/g`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Coupling constants, boson masses and derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    /// SU(2) coupling.
    pub g: f64,
    /// U(1) coupling.
    pub gprime: f64,
    /// Higgs self-coupling.
    pub lambda: f64,
    /// Higgs vacuum value.
    pub phi0: f64,
    /// Magnetic flux quanta per lattice cell.
    pub n: u32,
    /// Weinberg angle, `tan(theta) = gprime / g`.
    pub theta: f64,
    /// Electric charge `g sin(theta)`.
    pub e: f64,
    /// Z-field coupling `g^2 / (2 cos^2 theta)`.
    pub kappa: f64,
    /// W mass `g phi0 / sqrt(2)`.
    pub mass_w: f64,
    /// Z mass `M_W / cos(theta)`.
    pub mass_z: f64,
    /// Higgs mass `sqrt(2 lambda) phi0`.
    pub mass_h: f64,
    /// Critical field `M_W^2 / e`.
    pub b_star: f64,
    /// Rescaled W mass `sqrt(n)`.
    pub m_w: f64,
    /// Rescaled Z mass `sqrt(n) / cos(theta)`.
    pub m_z: f64,
    /// Rescaled Higgs mass `sqrt(4 lambda n) / g`.
    pub m_h: f64,
}

/// JSON form of the parameter block: either boson masses or raw couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSpec {
    Masses {
        #[serde(rename = "M_W")]
        mass_w: f64,
        #[serde(rename = "M_Z")]
        mass_z: f64,
        #[serde(rename = "M_H")]
        mass_h: f64,
        #[serde(default = "default_flux")]
        n: u32,
    },
    Couplings {
        g: f64,
        gprime: f64,
        lambda: f64,
        #[serde(default = "default_phi0")]
        phi0: f64,
        #[serde(default = "default_flux")]
        n: u32,
    },
}

fn default_flux() -> u32 {
    1
}

fn default_phi0() -> f64 {
    1.0
}

impl Default for ParamSpec {
    fn default() -> Self {
        ParamSpec::Masses {
            mass_w: 80.379,
            mass_z: 91.1876,
            mass_h: 125.09,
            n: 1,
        }
    }
}

impl ParamSpec {
    pub fn build(&self) -> Result<PhysParams> {
        match *self {
            ParamSpec::Masses {
                mass_w,
                mass_z,
                mass_h,
                n,
            } => PhysParams::from_masses(mass_w, mass_z, mass_h, n),
            ParamSpec::Couplings {
                g,
                gprime,
                lambda,
                phi0,
                n,
            } => PhysParams::from_couplings(g, gprime, lambda, phi0, n),
        }
    }
}

impl PhysParams {
    /// Build parameters from the three boson masses.
    ///
    /// Uses `cos(theta) = M_W / M_Z`, `phi0 = 1`, `g = sqrt(2) M_W` and
    /// `lambda = M_H^2 / 2`.
    pub fn from_masses(mass_w: f64, mass_z: f64, mass_h: f64, n: u32) -> Result<Self> {
        if !(mass_w.is_finite() && mass_z.is_finite() && mass_h.is_finite()) {
            return invalid("boson masses must be finite");
        }
        if !(0.0 < mass_w && mass_w < mass_z && mass_z < mass_h) {
            return invalid(format!(
                "masses must satisfy 0 < M_W < M_Z < M_H (got M_W = {mass_w}, M_Z = {mass_z}, M_H = {mass_h})"
            ));
        }
        let phi0 = 1.0;
        let g = std::f64::consts::SQRT_2 * mass_w / phi0;
        let cos_t = mass_w / mass_z;
        let theta = cos_t.acos();
        let gprime = g * theta.tan();
        let lambda = mass_h * mass_h / (2.0 * phi0 * phi0);
        Self::from_couplings(g, gprime, lambda, phi0, n)
    }

    /// Build parameters from raw couplings (no ordering of the masses is imposed).
    pub fn from_couplings(g: f64, gprime: f64, lambda: f64, phi0: f64, n: u32) -> Result<Self> {
        if !(g > 0.0 && gprime > 0.0 && lambda > 0.0 && phi0 > 0.0) {
            return invalid(format!(
                "couplings must be positive (g = {g}, gprime = {gprime}, lambda = {lambda}, phi0 = {phi0})"
            ));
        }
        if n == 0 {
            return invalid("flux integer n must be positive");
        }
        let theta = (gprime / g).atan();
        let e = g * theta.sin();
        let cos_t = theta.cos();
        let mass_w = g * phi0 / std::f64::consts::SQRT_2;
        let mass_z = mass_w / cos_t;
        let mass_h = (2.0 * lambda).sqrt() * phi0;
        let nf = n as f64;
        Ok(PhysParams {
            g,
            gprime,
            lambda,
            phi0,
            n,
            theta,
            e,
            kappa: g * g / (2.0 * cos_t * cos_t),
            mass_w,
            mass_z,
            mass_h,
            b_star: mass_w * mass_w / e,
            m_w: nf.sqrt(),
            m_z: nf.sqrt() / cos_t,
            m_h: (4.0 * lambda * nf).sqrt() / g,
        })
    }

    /// The physical-mass parameter set used for the headline results.
    pub fn physical() -> Self {
        Self::from_masses(80.379, 91.1876, 125.09, 1).expect("physical masses are valid")
    }

    /// Same couplings with a different flux integer.
    pub fn with_flux(&self, n: u32) -> Result<Self> {
        Self::from_couplings(self.g, self.gprime, self.lambda, self.phi0, n)
    }

    pub fn sin2_theta(&self) -> f64 {
        self.theta.sin().powi(2)
    }

    pub fn flux(&self) -> f64 {
        self.n as f64
    }

    /// Critical field computed from the couplings, `g^2 phi0^2 / (2 e)`.
    pub fn b_star_from_couplings(&self) -> f64 {
        self.g * self.g * self.phi0 * self.phi0 / (2.0 * self.e)
    }

    /// Dimensionless distance above threshold, `omega = 1 - M_W^2 / (e b)`.
    pub fn omega_of_b(&self, b: f64) -> f64 {
        1.0 - self.b_star / b
    }

    /// Field strength for a given `omega`.
    pub fn b_of_omega(&self, omega: f64) -> f64 {
        self.b_star / (1.0 - omega)
    }

    /// Eigen-parameter `mu = g^2 xi^2 / 2 = n b_star / b` of the rescaled problem.
    pub fn mu_of_b(&self, b: f64) -> f64 {
        self.flux() * self.b_star / b
    }

    pub fn mu_of_omega(&self, omega: f64) -> f64 {
        self.flux() * (1.0 - omega)
    }

    /// Rescaled Higgs vacuum value `xi = sqrt(2 mu) / g`.
    pub fn xi_of_mu(&self, mu: f64) -> f64 {
        (2.0 * mu).sqrt() / self.g
    }

    /// Rescaled Higgs vacuum value `xi = r phi0` with `r = sqrt(n / (e b))`.
    pub fn xi_of_b(&self, b: f64) -> f64 {
        (self.flux() / (self.e * b)).sqrt() * self.phi0
    }

    /// Factor converting a rescaled per-cell energy into energy per unit area, `(e b / n)^2`.
    pub fn energy_unscale(&self, b: f64) -> f64 {
        (self.e * b / self.flux()).powi(2)
    }

    /// Converts a field strength to Tesla for display, assuming the boson
    /// masses were supplied in GeV (then `e b` is numerically in GeV^2).
    /// Uses `1 T = 5.9157e-17 GeV^2` for the product `e B` in natural units.
    pub fn field_in_tesla(&self, b: f64) -> f64 {
        const GEV2_PER_TESLA: f64 = 5.915_7e-17;
        self.e * b / GEV2_PER_TESLA
    }
}
