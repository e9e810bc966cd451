//! Maximisation of the shape function `eta(tau)` over the modular
//! fundamental domain.
//!
//! `eta` only depends on the lattice, so it is invariant under SL(2,Z). The
//! raster covers the usual fundamental-domain window; the simplex refinement
//! works in the whole upper half plane and reduces every iterate, which lets
//! it converge to maxima sitting on a corner of the domain (the hexagonal
//! point `e^{i pi/3}` is one).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bifurcation::{shape_functions, ShapeFunctions};
use crate::error::{invalid, Result};
use crate::lattice::{complex_pair, mobius, reduce_to_fundamental, LatticeShape, Modular};
use crate::params::PhysParams;

/// Relative spread of `eta` below which the landscape counts as flat.
const FLAT_TOL: f64 = 1e-12;

/// Rectangle in the `(Re tau, Im tau)` plane. Samples outside the
/// fundamental domain (`|tau| < 1`) are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanWindow {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Default for ScanWindow {
    fn default() -> Self {
        ScanWindow {
            re_min: -0.5,
            re_max: 0.5,
            im_min: 3f64.sqrt() / 2.0,
            im_max: 2.0,
        }
    }
}

impl ScanWindow {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.re_min, self.re_max, self.im_min, self.im_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.re_max <= self.re_min || self.im_max <= self.im_min || self.im_min <= 0.0 {
            return invalid(format!("empty or malformed scan window {self:?}"));
        }
        if self.im_max * self.im_max + self.re_min.abs().max(self.re_max.abs()).powi(2) < 1.0 {
            return invalid("scan window lies entirely below the unit circle");
        }
        Ok(())
    }
}

/// One raster sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSample {
    #[serde(with = "complex_pair")]
    pub tau: Complex64,
    /// Raster indices `(i_re, i_im)`.
    pub index: [usize; 2],
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// `eta`, `alpha` and `beta` on a raster of the fundamental domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeScan {
    pub params: PhysParams,
    pub window: ScanWindow,
    pub resolution: usize,
    pub grid_n: usize,
    /// Raster spacing `(d Re tau, d Im tau)`.
    pub cell: [f64; 2],
    pub samples: Vec<ScanSample>,
    /// Index of the largest `eta` (first in raster order on ties).
    pub argmax: usize,
    /// Index of the smallest `beta`.
    pub argmin_beta: usize,
    /// `eta` is constant over the raster to relative `1e-12`.
    pub flat: bool,
}

/// Shape functions at `tau`, evaluated at its fundamental-domain representative.
pub fn eta_at(tau: Complex64, params: &PhysParams, grid_n: usize) -> Result<ShapeFunctions> {
    let (t, _) = reduce_to_fundamental(tau)?;
    shape_functions(&LatticeShape::new(t)?, params, grid_n)
}

/// Raster scan over the default window `Re tau in (-1/2, 1/2]`,
/// `Im tau in [sqrt(3)/2, 2]`, with `resolution` points along each axis.
pub fn scan_eta(params: &PhysParams, resolution: usize, grid_n: usize) -> Result<ShapeScan> {
    scan_eta_window(params, &ScanWindow::default(), resolution, grid_n)
}

/// Raster scan over an explicit window. The real axis is sampled at
/// `re_min + (i + 1) d` (half-open on the left, matching the fundamental
/// domain), the imaginary axis at `im_min + j d'` including both ends.
pub fn scan_eta_window(
    params: &PhysParams,
    window: &ScanWindow,
    resolution: usize,
    grid_n: usize,
) -> Result<ShapeScan> {
    window.validate()?;
    if resolution < 2 {
        return invalid("scan resolution must be at least 2");
    }
    let dre = (window.re_max - window.re_min) / resolution as f64;
    let dim = (window.im_max - window.im_min) / (resolution - 1) as f64;
    let mut points = Vec::new();
    for j in 0..resolution {
        for i in 0..resolution {
            let tau = Complex64::new(window.re_min + (i + 1) as f64 * dre, window.im_min + j as f64 * dim);
            if tau.norm_sqr() >= 1.0 - 1e-12 {
                points.push((tau, [i, j]));
            }
        }
    }
    if points.is_empty() {
        return invalid("scan window contains no point of the fundamental domain");
    }
    let samples = points
        .par_iter()
        .map(|&(tau, index)| {
            let sf = shape_functions(&LatticeShape::new(tau)?, params, grid_n)?;
            Ok(ScanSample {
                tau,
                index,
                eta: sf.eta,
                alpha: sf.alpha,
                beta: sf.beta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut argmax = 0;
    let mut argmin_beta = 0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (k, s) in samples.iter().enumerate() {
        if s.eta > samples[argmax].eta {
            argmax = k;
        }
        if s.beta < samples[argmin_beta].beta {
            argmin_beta = k;
        }
        lo = lo.min(s.eta);
        hi = hi.max(s.eta);
    }
    Ok(ShapeScan {
        params: *params,
        window: *window,
        resolution,
        grid_n,
        cell: [dre, dim],
        samples,
        argmax,
        argmin_beta,
        flat: hi - lo <= FLAT_TOL * hi.abs(),
    })
}

impl ShapeScan {
    pub fn argmax_sample(&self) -> &ScanSample {
        &self.samples[self.argmax]
    }

    pub fn argmin_beta_sample(&self) -> &ScanSample {
        &self.samples[self.argmin_beta]
    }

    /// Whether a sample lies on an edge of the window that is not an edge of
    /// the fundamental domain. Edges `Re tau = +-1/2` and the unit circle are
    /// identified with other points of the domain by SL(2,Z), so a maximum
    /// there is genuine; the `Im tau` cap and any user-narrowed side are not.
    pub fn on_artificial_boundary(&self, k: usize) -> bool {
        let s = &self.samples[k];
        let w = &self.window;
        let [i, j] = s.index;
        let last = self.resolution - 1;
        let left = i == 0 && w.re_min > -0.5 + 1e-12;
        let right = i == last && w.re_max < 0.5 - 1e-12;
        let top = j == last;
        // bottom row: artificial only if the window floor is above the circle
        let bottom = j == 0 && s.tau.norm_sqr() > 1.0 + 1e-9 && w.im_min > 3f64.sqrt() / 2.0 + 1e-12;
        left || right || top || bottom
    }

    /// `re_tau,im_tau,eta,alpha,beta` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re_tau,im_tau,eta,alpha,beta\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                s.tau.re, s.tau.im, s.eta, s.alpha, s.beta
            ));
        }
        out
    }

    /// Heat-map data for gnuplot `splot ... with pm3d`: one block per
    /// `Im tau` row, blank line between rows, missing points omitted.
    pub fn to_heatmap(&self) -> String {
        let mut out = String::new();
        let mut row = usize::MAX;
        for s in &self.samples {
            if s.index[1] != row && row != usize::MAX {
                out.push('\n');
            }
            row = s.index[1];
            out.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", s.tau.re, s.tau.im, s.eta));
        }
        out
    }
}

/// Whether `a` lies within one raster cell of `b` or of one of its integer
/// translates (which represent the same lattice).
pub fn within_cells(a: Complex64, b: Complex64, cell: [f64; 2], cells: f64) -> bool {
    (-1..=1).any(|k| {
        let d = a - (b + k as f64);
        d.re.abs() <= cells * cell[0] * (1.0 + 1e-9) && d.im.abs() <= cells * cell[1] * (1.0 + 1e-9)
    })
}

/// Distance between two shape parameters modulo `tau -> tau + 1` and the
/// reflection-equivalent corner `e^{2 pi i/3} ~ e^{i pi/3}` after reduction.
pub fn modular_distance(a: Complex64, b: Complex64) -> Result<f64> {
    let (ra, _) = reduce_to_fundamental(a)?;
    let (rb, _) = reduce_to_fundamental(b)?;
    Ok((-1..=1)
        .map(|k| (ra - rb - k as f64).norm())
        .fold(f64::INFINITY, f64::min))
}

/// One simplex iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineStep {
    pub iteration: usize,
    #[serde(with = "complex_pair")]
    pub tau: Complex64,
    pub eta: f64,
    pub diameter: f64,
}

/// Agreement of `eta` at the refined point between `N` and `2N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionCheck {
    pub grid_n: usize,
    pub eta_n: f64,
    pub eta_2n: f64,
    pub relative: f64,
}

/// Result of the simplex refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    /// Refined maximiser, reduced to the fundamental domain.
    #[serde(with = "complex_pair")]
    pub tau_star: Complex64,
    pub eta_star: f64,
    /// `false` when the refinement was skipped (boundary or flat landscape).
    pub refined: bool,
    pub flat: bool,
    pub warnings: Vec<String>,
    /// Best vertex after every iteration.
    pub trace: Vec<RefineStep>,
    pub evaluations: usize,
    pub resolution_check: Option<ResolutionCheck>,
}

/// Derivative-free Nelder–Mead maximisation of `eta` starting from the raster
/// argmax, stopping once the simplex diameter drops below `tol`.
pub fn refine_max(scan: &ShapeScan, tol: f64) -> Result<Refinement> {
    if !(tol > 0.0) {
        return invalid("refinement tolerance must be positive");
    }
    let start = *scan.argmax_sample();
    let mut out = Refinement {
        tau_star: start.tau,
        eta_star: start.eta,
        refined: false,
        flat: scan.flat,
        warnings: Vec::new(),
        trace: Vec::new(),
        evaluations: 0,
        resolution_check: None,
    };
    if scan.flat {
        out.warnings
            .push("eta is constant over the raster (flat landscape); no refinement".into());
        return Ok(out);
    }
    if scan.on_artificial_boundary(scan.argmax) {
        out.warnings.push(format!(
            "raster maximum at tau = {} lies on the scan-window boundary; no refinement",
            start.tau
        ));
        return Ok(out);
    }
    let params = scan.params;
    let grid_n = scan.grid_n;
    let mut evals = 0usize;
    let mut f = |p: [f64; 2]| -> Result<f64> {
        evals += 1;
        if !(p[1] > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(eta_at(Complex64::new(p[0], p[1]), &params, grid_n)?.eta)
    };
    let x0 = [start.tau.re, start.tau.im];
    let (h1, h2) = (scan.cell[0], scan.cell[1]);
    let mut simplex = [x0, [x0[0] + h1, x0[1]], [x0[0], x0[1] + h2]];
    let mut vals = [start.eta, f(simplex[1])?, f(simplex[2])?];
    let diameter = |s: &[[f64; 2]; 3]| {
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        d(s[0], s[1]).max(d(s[0], s[2])).max(d(s[1], s[2]))
    };
    let max_iter = 500;
    for it in 0..max_iter {
        // order best (largest eta) first
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        simplex = [simplex[idx[0]], simplex[idx[1]], simplex[idx[2]]];
        vals = [vals[idx[0]], vals[idx[1]], vals[idx[2]]];
        let diam = diameter(&simplex);
        out.trace.push(RefineStep {
            iteration: it,
            tau: Complex64::new(simplex[0][0], simplex[0][1]),
            eta: vals[0],
            diameter: diam,
        });
        if diam < tol {
            break;
        }
        if it + 1 == max_iter {
            out.warnings
                .push(format!("simplex did not shrink below {tol:e} in {max_iter} iterations"));
        }
        let c = [
            (simplex[0][0] + simplex[1][0]) / 2.0,
            (simplex[0][1] + simplex[1][1]) / 2.0,
        ];
        let along = |t: f64| [c[0] + t * (simplex[2][0] - c[0]), c[1] + t * (simplex[2][1] - c[1])];
        let xr = along(-1.0);
        let fr = f(xr)?;
        if fr > vals[0] {
            let xe = along(-2.0);
            let fe = f(xe)?;
            if fe > fr {
                simplex[2] = xe;
                vals[2] = fe;
            } else {
                simplex[2] = xr;
                vals[2] = fr;
            }
        } else if fr > vals[1] {
            simplex[2] = xr;
            vals[2] = fr;
        } else {
            let (xc, fc) = if fr > vals[2] {
                let x = along(-0.5);
                (x, f(x)?)
            } else {
                let x = along(0.5);
                (x, f(x)?)
            };
            if fc > vals[2].max(fr) {
                simplex[2] = xc;
                vals[2] = fc;
            } else {
                // shrink towards the best vertex
                for k in 1..3 {
                    simplex[k] = [
                        simplex[0][0] + 0.5 * (simplex[k][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[k][1] - simplex[0][1]),
                    ];
                    vals[k] = f(simplex[k])?;
                }
            }
        }
    }
    let best = out.trace.last().expect("at least one iteration");
    let (tau_star, _) = reduce_to_fundamental(best.tau)?;
    out.tau_star = tau_star;
    out.eta_star = best.eta;
    out.refined = true;
    out.evaluations = evals;
    let eta_n = eta_at(tau_star, &params, grid_n)?.eta;
    let eta_2n = eta_at(tau_star, &params, 2 * grid_n)?.eta;
    out.resolution_check = Some(ResolutionCheck {
        grid_n,
        eta_n,
        eta_2n,
        relative: (eta_n - eta_2n).abs() / eta_2n.abs(),
    });
    Ok(out)
}

/// Map `tau` by an SL(2,Z) element and reduce it back.
pub fn map_and_reduce(m: &Modular, tau: Complex64) -> Result<Complex64> {
    Ok(reduce_to_fundamental(mobius(m, tau))?.0)
}
