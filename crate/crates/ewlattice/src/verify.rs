//! Invariant suite: symmetry, identity and consistency checks across all
//! modules, reported as a pass/fail table.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bifurcation::{
    alpha_eta, alpha_eta_with_masses, appendix_f_identity, first_order, first_order_residuals, newton_branch,
    s4_bracket, s4_bracket_closed_form, BranchOptions,
};
use crate::energy::{gradient_check, EnergyModel};
use crate::error::Result;
use crate::fields::{Calculus, FieldState, GridField, Sector, C64};
use crate::lattice::{make_grid, mobius, reduce_to_fundamental, LatticeShape, Modular};
use crate::lll::{build_chi, parity_defect, CentralDbar, CovariantDerivative};
use crate::params::PhysParams;
use crate::shapeopt::{eta_at, map_and_reduce};
use crate::spectrum::{stability_verdict, Stability};

/// A deliberate fault, used to confirm that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Use `G_{m_h} - G_{m_z}` instead of `G_{m_z} - G_{m_h}`.
    FlipGreenDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Grid for the field-level checks.
    pub grid_n: usize,
    /// Grid and Galerkin levels for the branch checks.
    pub branch_grid_n: usize,
    pub galerkin_levels: usize,
    /// Run the (slower) Newton-branch checks.
    pub branch: bool,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            grid_n: 32,
            branch_grid_n: 64,
            galerkin_levels: 48,
            branch: true,
            seed: 1,
            fault: None,
        }
    }
}

/// Outcome of one check: `passed` iff `value <= tolerance` (NaN fails).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
            detail: detail.into(),
        }
    }

    /// A boolean check reported as value 0 (pass) or 1 (fail).
    fn flag(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self::new(name, if ok { 0.0 } else { 1.0 }, 0.5, detail)
    }

    fn error(name: &str, e: impl std::fmt::Display) -> Self {
        CheckResult {
            name: name.into(),
            value: f64::NAN,
            tolerance: 0.0,
            passed: false,
            detail: format!("error: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

impl VerifyReport {
    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<w$}  {:>12}  {:>9}  result  detail\n", "check", "value", "tol");
        for c in &self.checks {
            out.push_str(&format!(
                "{:<w$}  {:>12.3e}  {:>9.1e}  {:<6}  {}\n",
                c.name,
                c.value,
                c.tolerance,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail
            ));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        out
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Real band-limited periodic field with Fourier modes `|m_i| <= kmax` and
/// amplitude `scale`.
pub fn random_periodic(calc: &Calculus, rng: &mut ChaCha8Rng, kmax: i64, scale: f64) -> Vec<C64> {
    let sp = &calc.spectral;
    let coeffs: Vec<C64> = sp
        .modes
        .iter()
        .map(|&(a, b)| {
            if a.abs() <= kmax && b.abs() <= kmax {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / ((1 + a * a + b * b) as f64)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    let f = sp.backward(&coeffs);
    let m = f.iter().map(|v| v.re.abs()).fold(0.0, f64::max).max(1e-300);
    f.iter().map(|v| C64::new(scale * v.re / m, 0.0)).collect()
}

/// A generic smooth state around the vacuum: `w` is the lattice state times
/// smooth complex profiles, the periodic fields are band-limited.
pub fn random_state(calc: &Calculus, params: &PhysParams, rng: &mut ChaCha8Rng, amplitude: f64) -> Result<FieldState> {
    let shape = calc.grid.shape;
    let chi = build_chi(&shape, calc.flux as u32, &calc.grid, None, None)?;
    let k = 3;
    let mut w = Vec::new();
    for c in 0..2 {
        let p = random_periodic(calc, rng, k, 1.0);
        let q = random_periodic(calc, rng, k, 1.0);
        w.push(
            chi.beta.comps[0]
                .iter()
                .zip(p.iter().zip(&q))
                .map(|(b, (x, y))| amplitude * b * C64::new(x.re + if c == 0 { 1.0 } else { 0.0 }, y.re))
                .collect::<Vec<_>>(),
        );
    }
    let xi = (2.0 * params.flux()).sqrt() / params.g;
    let phi: Vec<C64> = random_periodic(calc, rng, k, 0.1 * xi)
        .iter()
        .map(|v| C64::new(xi + v.re, 0.0))
        .collect();
    let n = calc.n();
    Ok(FieldState {
        w: GridField::vector(Sector::Flux(calc.flux), n, w[0].clone(), w[1].clone()),
        a: GridField::vector(
            Sector::Periodic,
            n,
            random_periodic(calc, rng, k, amplitude),
            random_periodic(calc, rng, k, amplitude),
        ),
        z: GridField::vector(
            Sector::Periodic,
            n,
            random_periodic(calc, rng, k, amplitude),
            random_periodic(calc, rng, k, amplitude),
        ),
        phi: GridField::scalar(Sector::Periodic, n, phi),
    })
}

/// Gauge transform `w -> e^{i theta} w`, `alpha -> alpha + grad theta / e`.
pub fn gauge_transform(calc: &Calculus, params: &PhysParams, s: &FieldState, theta: &[C64]) -> FieldState {
    let [gx, gy] = calc.spectral.grad(theta);
    let mut out = s.clone();
    for c in 0..2 {
        for (j, v) in out.w.comps[c].iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, theta[j].re);
        }
    }
    for (j, v) in out.a.comps[0].iter_mut().enumerate() {
        *v += gx[j].re / params.e;
    }
    for (j, v) in out.a.comps[1].iter_mut().enumerate() {
        *v += gy[j].re / params.e;
    }
    out
}

fn field_diff(a: &GridField, b: &GridField) -> f64 {
    let d: f64 = a
        .comps
        .iter()
        .zip(&b.comps)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>())
        .sum();
    (d / (a.norm().powi(2) * a.len() as f64).max(1e-300)).sqrt()
}

/// Run every check; individual failures never abort the suite.
pub fn run_suite(params: &PhysParams, opts: &VerifyOptions) -> VerifyReport {
    let mut checks = Vec::new();
    let mut push = |r: Result<Vec<CheckResult>>, name: &str| match r {
        Ok(v) => checks.extend(v),
        Err(e) => checks.push(CheckResult::error(name, e)),
    };
    push(check_params(params), "params");
    push(check_modular(params, opts), "lattice.modular");
    push(check_lll(params, opts), "lll");
    push(check_shape_functions(params, opts), "green.positivity");
    push(check_energy(params, opts), "energy");
    push(check_stability(params), "spectrum.stability");
    push(check_first_order(params, opts), "bifurcation.first_order");
    if opts.branch {
        push(check_branch(params, opts), "bifurcation.branch");
    }
    let all_passed = checks.iter().all(|c| c.passed);
    VerifyReport { checks, all_passed }
}

fn check_params(p: &PhysParams) -> Result<Vec<CheckResult>> {
    let n = p.flux();
    let worst = [
        rel(p.e, p.g * p.theta.sin()),
        rel(p.kappa, p.g * p.g / (2.0 * p.theta.cos().powi(2))),
        rel(p.b_star, p.mass_w * p.mass_w / p.e),
        rel(p.m_w * p.m_w, n),
        rel(p.m_z * p.theta.cos(), p.m_w),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(vec![CheckResult::new(
        "params.identities",
        worst,
        1e-12,
        "e, kappa, b_*, rescaled masses",
    )])
}

fn check_modular(p: &PhysParams, opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let tau = Complex64::new(0.18, 1.13);
    let base = eta_at(tau, p, opts.grid_n)?.eta;
    let maps: [Modular; 3] = [[[1, 1], [0, 1]], [[0, -1], [1, 0]], [[2, 1], [1, 1]]];
    let mut worst_red: f64 = 0.0;
    let mut worst_eta: f64 = 0.0;
    for m in &maps {
        let t = mobius(m, tau);
        let (r, _) = reduce_to_fundamental(t)?;
        worst_red = worst_red.max((r - tau).norm());
        // eta evaluated on the equivalent (unreduced) lattice directly
        let sf = crate::bifurcation::shape_functions(&LatticeShape::new(t)?, p, opts.grid_n)?;
        worst_eta = worst_eta.max(rel(sf.eta, base));
    }
    let hex = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_3);
    let mut worst_arg: f64 = 0.0;
    for m in &maps {
        worst_arg = worst_arg.max((map_and_reduce(m, hex)? - hex).norm());
    }
    Ok(vec![
        CheckResult::new(
            "lattice.reduction_roundtrip",
            worst_red,
            1e-12,
            "SL(2,Z) images reduce back",
        ),
        CheckResult::new(
            "lattice.eta_modular_invariance",
            worst_eta,
            1e-8,
            "eta on equivalent lattices",
        ),
        CheckResult::new(
            "shapeopt.argmax_invariance",
            worst_arg,
            1e-12,
            "images of e^{i pi/3} re-reduce",
        ),
    ])
}

fn check_lll(p: &PhysParams, opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for shape in [LatticeShape::square(), LatticeShape::hexagonal()] {
        let grid = make_grid(shape, opts.grid_n)?;
        let chi = build_chi(&shape, p.n, &grid, None, None)?;
        let b = &chi.beta.comps[0];
        let parity = parity_defect(&shape, p.n, &grid)?;
        let calc = Calculus::new(&grid, p.n as i32);
        let d = CentralDbar::new(&calc).dbar(b);
        let nd = d.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let tag = if shape.tau.re == 0.0 { "square" } else { "hex" };
        out.push(CheckResult::new(
            &format!("lll.parity_{tag}"),
            parity,
            1e-10,
            "beta(-x) = beta(x)",
        ));
        // second-order scheme: ~2e-3 at N = 32
        let tol = 8.0 / (opts.grid_n * opts.grid_n) as f64;
        out.push(CheckResult::new(
            &format!("lll.null_state_{tag}"),
            nd / nb,
            tol,
            format!("|dbar beta|/|beta| at N={}", opts.grid_n),
        ));
    }
    Ok(out)
}

fn check_shape_functions(p: &PhysParams, opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let (m1, m2) = match opts.fault {
        Some(Fault::FlipGreenDifference) => (p.m_h, p.m_z),
        None => (p.m_z, p.m_h),
    };
    let mut out = Vec::new();
    let mut etas = Vec::new();
    for shape in [LatticeShape::square(), LatticeShape::hexagonal()] {
        let grid = make_grid(shape, opts.grid_n)?;
        let chi = build_chi(&shape, p.n, &grid, None, None)?;
        let sf = alpha_eta_with_masses(&chi, p, m1, m2)?;
        let tag = if shape.tau.re == 0.0 { "square" } else { "hex" };
        out.push(CheckResult::flag(
            &format!("green.positivity_{tag}"),
            sf.alpha > 0.0 && sf.eta > 0.0 && sf.beta >= 1.0,
            format!("alpha = {:.6}, eta = {:.6}, beta = {:.6}", sf.alpha, sf.eta, sf.beta),
        ));
        etas.push(sf.eta);
    }
    out.push(CheckResult::flag(
        "shapeopt.hex_beats_square",
        etas[1] > etas[0],
        format!("eta(hex) = {:.8}, eta(square) = {:.8}", etas[1], etas[0]),
    ));
    Ok(out)
}

fn check_energy(p: &PhysParams, opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let shape = LatticeShape::new(Complex64::new(0.21, 1.07))?;
    let grid = make_grid(shape, opts.grid_n)?;
    let calc = Calculus::new(&grid, p.n as i32);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let xi = (2.0 * p.flux()).sqrt() / p.g * 0.99;
    let model = EnergyModel::new(&calc, *p, xi);
    let s = random_state(&calc, p, &mut rng, 0.05)?;
    let (e0, r0) = model.energy_and_residual(&s)?;

    // gauge covariance
    let theta = random_periodic(&calc, &mut rng, 3, 1.5);
    let sg = gauge_transform(&calc, p, &s, &theta);
    let (eg, rg) = model.energy_and_residual(&sg)?;
    let mut r_rot = r0.clone();
    for c in 0..2 {
        for (j, v) in r_rot.g1.comps[c].iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, theta[j].re);
        }
    }
    let gauge_res = field_diff(&r_rot.g1, &rg.g1)
        .max(field_diff(&r0.g2, &rg.g2))
        .max(field_diff(&r0.g3, &rg.g3))
        .max(field_diff(&r0.g4, &rg.g4));

    // global phase equivariance
    let delta = 0.7;
    let rt = model.residual(&s.phase_rotate(delta))?;
    let rr = r0.phase_rotate(delta);
    let phase = field_diff(&rr.g1, &rt.g1)
        .max(field_diff(&rr.g2, &rt.g2))
        .max(field_diff(&rr.g3, &rt.g3))
        .max(field_diff(&rr.g4, &rt.g4));

    // realness of <u, F(u)>
    let ip = s.w.inner(&r0.g1)?;
    let realness = ip.im.abs() / ip.norm().max(1e-300);

    // gradient consistency along random directions
    let mut worst_grad: f64 = 0.0;
    for _ in 0..3 {
        let mut d = random_state(&calc, p, &mut rng, 1.0)?;
        d.phi = d.phi.map(|v| C64::new(v.re - xi, 0.0));
        let gc = gradient_check(&calc, &s, p, xi, &d, 1e-5)?;
        worst_grad = worst_grad.max(gc.relative_error);
    }

    // zero mode: the Hessian at the mu = n vacuum annihilates (0, c, 0, 0)
    let xi_n = (2.0 * p.flux()).sqrt() / p.g;
    let vac_model = EnergyModel::new(&calc, *p, xi_n);
    let vac = FieldState::vacuum(opts.grid_n, p.n as i32, xi_n);
    let mut dir = FieldState::vacuum(opts.grid_n, p.n as i32, 0.0);
    dir.a = GridField::constant(opts.grid_n, 2, &[C64::new(0.3, 0.0), C64::new(-0.8, 0.0)]);
    let h = 1e-4;
    let rp = vac_model.residual(&vac.axpy(h, &dir)?)?;
    let rm = vac_model.residual(&vac.axpy(-h, &dir)?)?;
    let lu = ((rp.g1.norm().powi(2) + rp.g2.norm().powi(2) + rp.g3.norm().powi(2) + rp.g4.norm().powi(2)).sqrt()
        + (rm.g1.norm().powi(2) + rm.g2.norm().powi(2) + rm.g3.norm().powi(2) + rm.g4.norm().powi(2)).sqrt())
        / (2.0 * h);

    Ok(vec![
        CheckResult::new(
            "energy.gauge_invariance",
            rel(e0.total, eg.total),
            1e-10,
            "E(gauge-transformed) = E",
        ),
        CheckResult::new(
            "energy.gauge_covariance",
            gauge_res,
            1e-9,
            "residual transforms covariantly",
        ),
        CheckResult::new("energy.phase_equivariance", phase, 1e-12, "F(T_delta u) = T_delta F(u)"),
        CheckResult::new("energy.realness", realness, 1e-10, "Im <w, G_1> / |<w, G_1>|"),
        CheckResult::new(
            "energy.gradient",
            worst_grad,
            1e-6,
            "residual vs Richardson finite differences",
        ),
        CheckResult::new("spectrum.zero_mode", lu, 1e-10, "|L_{n,n}(0,c,0,0)|"),
    ])
}

fn check_stability(p: &PhysParams) -> Result<Vec<CheckResult>> {
    let below = stability_verdict(p, p.b_star * (1.0 - 1e-9))?;
    let at = stability_verdict(p, p.b_star)?;
    let above = stability_verdict(p, p.b_star * (1.0 + 1e-9))?;
    let ok =
        below.verdict == Stability::Stable && at.verdict == Stability::Critical && above.verdict == Stability::Unstable;
    let v = stability_verdict(p, 1.25 * p.b_star)?;
    let expected = (1.0 / 1.25 - 1.0) * p.flux();
    Ok(vec![
        CheckResult::flag("spectrum.stability_flip", ok, "stable / critical / unstable around b_*"),
        CheckResult::new(
            "spectrum.negative_eigenvalue",
            rel(v.lowest_eigenvalue, expected),
            1e-12,
            "(b_*/b - 1) n at b = 1.25 b_*",
        ),
    ])
}

fn check_first_order(p: &PhysParams, opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let shape = LatticeShape::hexagonal();
    let grid = make_grid(shape, opts.grid_n)?;
    let chi = build_chi(&shape, p.n, &grid, None, None)?;
    let fo = first_order(&chi, p)?;
    let res = first_order_residuals(&fo, &chi, p)?;
    let (l, r) = appendix_f_identity(&fo, &chi, p)?;
    let b = s4_bracket(&fo, &chi, p)?;
    let bc = s4_bracket_closed_form(&fo, p);
    let xi_sign = if p.m_z < p.m_h { fo.xi1 < 0.0 } else { true };
    let psi_neg = fo.psi1.comps[0].iter().all(|v| v.re < 0.0);
    let _ = alpha_eta(&chi, p)?;
    Ok(vec![
        CheckResult::new(
            "bifurcation.first_order_residual",
            res.iter().fold(0.0, |a: f64, v| a.max(*v)),
            1e-9,
            "equations for a', z', psi'",
        ),
        CheckResult::new("bifurcation.appendix_f", rel(l, r), 1e-8, "scalar xi' identity"),
        CheckResult::new(
            "bifurcation.closed_form",
            rel(b, bc),
            1e-7,
            "s^4 bracket = -(g^2/2)<|chi|^2>^2/eta",
        ),
        CheckResult::flag("bifurcation.signs", xi_sign && psi_neg, "xi' < 0 and psi' < 0"),
    ])
}

fn check_branch(p: &PhysParams, opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    if p.n != 1 {
        return Ok(vec![CheckResult::flag(
            "bifurcation.branch",
            true,
            "skipped: branch is constructed for n = 1 only",
        )]);
    }
    let shape = LatticeShape::hexagonal();
    let grid = make_grid(shape, opts.branch_grid_n)?;
    let chi = build_chi(&shape, p.n, &grid, None, None)?;
    let mut bo = BranchOptions {
        galerkin_levels: opts.galerkin_levels,
        ..BranchOptions::default()
    };
    let omega = 0.01;
    let plus = newton_branch(omega, &chi, p, &bo)?;
    bo.sign = -1.0;
    let minus = newton_branch(omega, &chi, p, &bo)?;
    let even = field_diff(&plus.state.a, &minus.state.a)
        .max(field_diff(&plus.state.z, &minus.state.z))
        .max(field_diff(&plus.state.phi, &minus.state.phi));
    let odd = field_diff(&plus.state.w, &minus.state.w.scale(C64::new(-1.0, 0.0)));
    Ok(vec![
        CheckResult::new(
            "bifurcation.newton_residual",
            plus.residual_norm,
            1e-8,
            format!("omega = {omega}"),
        ),
        CheckResult::new(
            "bifurcation.div_current",
            plus.div_current,
            1e-8,
            "weak div J on retained modes",
        ),
        CheckResult::flag(
            "bifurcation.energy_below_vacuum",
            plus.energy_deficit > 0.0,
            format!("deficit {:.6e}", plus.energy_deficit),
        ),
        CheckResult::new(
            "bifurcation.s_parity",
            even.max(odd),
            1e-10,
            "s -> -s: w odd, (alpha, z, phi) even",
        ),
    ])
}
