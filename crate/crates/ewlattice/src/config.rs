//! Serializable run configuration shared by the command-line pipelines.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lattice::LatticeShape;
use crate::params::{ParamSpec, PhysParams};
use crate::shapeopt::ScanWindow;

/// Numerical tolerances that a run may override.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative eigen-residual tolerance.
    pub eigen: f64,
    /// Newton stopping tolerance on the relative residual.
    pub newton: f64,
    /// Simplex-diameter tolerance of the shape refinement.
    pub refine: f64,
    /// Relative error allowed in the gradient check.
    pub gradient: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eigen: 1e-9,
            newton: 1e-10,
            refine: 1e-6,
            gradient: 1e-6,
        }
    }
}

/// Everything a pipeline run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamSpec,
    /// Grid points per lattice direction.
    pub grid_n: usize,
    /// Override of the theta-series truncation index.
    pub theta_truncation: Option<usize>,
    /// Lattice shape parameter `[Re tau, Im tau]`.
    pub tau: [f64; 2],
    /// Window of the shape scan.
    pub window: ScanWindow,
    /// Raster points per axis of the shape scan.
    pub scan_resolution: usize,
    /// Distances above threshold `omega = 1 - b_*/b` for branch runs.
    pub omegas: Vec<f64>,
    /// Landau levels in the Galerkin space of branch runs.
    pub galerkin_levels: usize,
    /// Number of eigenvalues reported by `spectrum`.
    pub eigen_count: usize,
    pub output_dir: String,
    /// Seed for random test directions.
    pub seed: u64,
    /// Worker threads; `None` means all available cores.
    pub workers: Option<usize>,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ParamSpec::default(),
            grid_n: 64,
            theta_truncation: None,
            tau: [0.0, 1.0],
            window: ScanWindow::default(),
            scan_resolution: 40,
            omegas: vec![0.005, 0.01, 0.02],
            galerkin_levels: 48,
            eigen_count: 10,
            output_dir: "out".into(),
            seed: 1,
            workers: None,
            tolerances: Tolerances::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| crate::error::Error::Validation(format!("malformed config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        self.params.build()?;
        if self.grid_n < 8 || self.grid_n % 2 != 0 {
            return invalid(format!("grid_n must be even and at least 8, got {}", self.grid_n));
        }
        if !(self.tau[1] > 0.0) || !self.tau[0].is_finite() {
            return invalid(format!("tau must have positive imaginary part, got {:?}", self.tau));
        }
        self.window.validate()?;
        if self.scan_resolution < 2 {
            return invalid("scan_resolution must be at least 2");
        }
        if self.eigen_count == 0 {
            return invalid("eigen_count must be positive");
        }
        if self.galerkin_levels < 2 {
            return invalid("galerkin_levels must be at least 2");
        }
        if self.omegas.iter().any(|w| !w.is_finite()) {
            return invalid("omegas must be finite");
        }
        if self.workers == Some(0) {
            return invalid("workers must be positive");
        }
        let t = &self.tolerances;
        if [t.eigen, t.newton, t.refine, t.gradient].iter().any(|v| !(*v > 0.0)) {
            return invalid("tolerances must be positive");
        }
        Ok(())
    }

    pub fn physical(&self) -> Result<PhysParams> {
        self.params.build()
    }

    pub fn shape(&self) -> Result<LatticeShape> {
        LatticeShape::new(Complex64::new(self.tau[0], self.tau[1]))
    }
}
