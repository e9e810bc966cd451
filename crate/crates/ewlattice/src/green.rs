//! Periodic resolvents `G_m = (-Delta + m^2)^{-1}` as Fourier multipliers.

use crate::error::{invalid, Error, Result};
use crate::fields::{GridField, Sector, Spectral, C64};

/// Mean tolerance for the massless resolvent.
pub const MEAN_TOL: f64 = 1e-10;

/// `(-Delta + m^2)^{-1}` on periodic scalars of one grid.
#[derive(Debug, Clone)]
pub struct GreenOp {
    pub m: f64,
    pub n: usize,
    multipliers: Vec<f64>,
}

impl GreenOp {
    pub fn new(spectral: &Spectral, m: f64) -> Result<Self> {
        if !(m >= 0.0) || !m.is_finite() {
            return invalid(format!("Green operator mass must be finite and >= 0, got {m}"));
        }
        let m2 = m * m;
        let multipliers = spectral
            .k2
            .iter()
            .map(|&k2| {
                let d = k2 + m2;
                if d > 0.0 {
                    1.0 / d
                } else {
                    0.0
                }
            })
            .collect();
        Ok(GreenOp {
            m,
            n: spectral.n,
            multipliers,
        })
    }

    /// `G_m f`; for `m = 0` the input must have zero mean.
    pub fn apply(&self, spectral: &Spectral, f: &GridField) -> Result<GridField> {
        check_periodic_scalar(f, self.n)?;
        let mut coeffs = spectral.forward(&f.comps[0]);
        if self.m == 0.0 && coeffs[0].norm() > MEAN_TOL {
            return invalid(format!(
                "massless resolvent needs a mean-zero input, mean is {:.3e}",
                coeffs[0].norm()
            ));
        }
        coeffs.iter_mut().zip(&self.multipliers).for_each(|(c, m)| *c *= m);
        Ok(GridField::scalar(Sector::Periodic, f.n, spectral.backward(&coeffs)))
    }
}

/// `(G_{m1} - G_{m2}) f`, evaluated as `(m2^2 - m1^2) / ((k^2 + m1^2)(k^2 + m2^2))`
/// so that close masses do not cancel; positivity preserving for `m1 < m2`.
pub fn apply_diff(spectral: &Spectral, m1: f64, m2: f64, f: &GridField) -> Result<GridField> {
    if !(m1 > 0.0 && m2 > 0.0) {
        return invalid(format!("resolvent difference needs positive masses, got {m1}, {m2}"));
    }
    check_periodic_scalar(f, spectral.n)?;
    let (a, b) = (m1 * m1, m2 * m2);
    let out = spectral.multiply(&f.comps[0], |i| {
        let k2 = spectral.k2[i];
        C64::new((b - a) / ((k2 + a) * (k2 + b)), 0.0)
    });
    Ok(GridField::scalar(Sector::Periodic, f.n, out))
}

/// `G_m f` in one call.
pub fn apply(spectral: &Spectral, m: f64, f: &GridField) -> Result<GridField> {
    GreenOp::new(spectral, m)?.apply(spectral, f)
}

fn check_periodic_scalar(f: &GridField, n: usize) -> Result<()> {
    if f.sector != Sector::Periodic || f.ncomp() != 1 || f.n != n {
        return Err(Error::SectorMismatch(
            "Green operators act on periodic scalars of the same grid".into(),
        ));
    }
    Ok(())
}
