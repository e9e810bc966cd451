//! Acceptance run: one PASS/FAIL line per criterion 1-9.
//!
//! The table goes to stderr even when the test passes. A criterion listed in
//! `KNOWN_UNATTAINABLE` is evaluated as stated and reported, but does not fail
//! the test; its attainable parts are still asserted.

use std::fs;
use std::io::Write;
use std::process::Command;
use std::time::Instant;

use ewlattice::bifurcation::{
    alpha_eta, appendix_f_identity, first_order, loglog_slope, newton_branch, s4_bracket, s4_bracket_closed_form,
    BranchOptions,
};
use ewlattice::energy::gradient_check;
use ewlattice::fields::{dot, Calculus, C64};
use ewlattice::lattice::{make_grid, LatticeShape};
use ewlattice::lll::{build_chi, parity_defect, CentralDbar, CovariantDerivative};
use ewlattice::params::PhysParams;
use ewlattice::shapeopt::{modular_distance, refine_max, scan_eta};
use ewlattice::spectrum::{
    h1_spectrum, magnetic_laplacian_spectrum_extrapolated, stability_verdict, EigenOptions, Stability,
};
use ewlattice::verify::random_state;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Criterion 1 asks for the second Landau level at 2; on this operator it is
/// 3 (levels (2m + 1) n), so that sub-check cannot pass.
const KNOWN_UNATTAINABLE: &[usize] = &[1];

/// One sub-check of a criterion.
struct Part {
    label: String,
    ok: bool,
}

struct Criterion {
    id: usize,
    title: &'static str,
    parts: Vec<Part>,
    seconds: f64,
}

impl Criterion {
    fn passed(&self) -> bool {
        self.parts.iter().all(|p| p.ok)
    }

    fn line(&self) -> String {
        let failed: Vec<&str> = self.parts.iter().filter(|p| !p.ok).map(|p| p.label.as_str()).collect();
        let detail: Vec<&str> = self.parts.iter().map(|p| p.label.as_str()).collect();
        format!(
            "criterion {} [{}] {}: {} ({:.1} s){}",
            self.id,
            if self.passed() { "PASS" } else { "FAIL" },
            self.title,
            detail.join("; "),
            self.seconds,
            if failed.is_empty() {
                String::new()
            } else {
                format!(" -- failing: {}", failed.join("; "))
            }
        )
    }
}

fn part(ok: bool, label: String) -> Part {
    Part { label, ok }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn criterion(id: usize, title: &'static str, f: impl FnOnce() -> Vec<Part>) -> Criterion {
    let t = Instant::now();
    let parts = f();
    Criterion {
        id,
        title,
        parts,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn landau_spectrum() -> Vec<Part> {
    let t = Instant::now();
    let opts = EigenOptions::default();
    let mut parts = Vec::new();
    let r = magnetic_laplacian_spectrum_extrapolated(&LatticeShape::square(), 1, 32, 2, &opts).unwrap();
    let ext = r.extrapolated.unwrap();
    parts.push(part(
        (ext[0] - 1.0).abs() < 0.01,
        format!("lambda_0 = {:.6} (target 1 +- 1%)", ext[0]),
    ));
    parts.push(part(
        (ext[1] - 2.0).abs() < 0.02,
        format!("lambda_1 = {:.6} (target 2 +- 1%)", ext[1]),
    ));
    for n in [1, 2, 3] {
        let k = n as usize + 1;
        let r = magnetic_laplacian_spectrum_extrapolated(&LatticeShape::square(), n, 16, k, &opts).unwrap();
        let m = r.clusters[0].multiplicity;
        let ext = r.extrapolated.unwrap();
        let ok = m == n as usize && (ext[0] - n as f64).abs() < 0.01 * n as f64;
        parts.push(part(ok, format!("n = {n}: lowest level {:.4} x{m}", ext[0])));
    }
    let secs = t.elapsed().as_secs_f64();
    parts.push(part(secs < 60.0, format!("runtime {secs:.1} s < 60 s")));
    parts
}

fn null_state() -> Vec<Part> {
    let mut parts = Vec::new();
    for shape in [LatticeShape::square(), LatticeShape::hexagonal()] {
        let ratios: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| {
                let grid = make_grid(shape, n).unwrap();
                let st = build_chi(&shape, 1, &grid, None, None).unwrap();
                let calc = Calculus::new(&grid, 1);
                let b = &st.beta.comps[0];
                let d = CentralDbar::new(&calc).dbar(b);
                (dot(&d, &d).re / dot(b, b).re).sqrt()
            })
            .collect();
        let order = ratios
            .windows(2)
            .map(|w| (w[0] / w[1]).log2())
            .fold(f64::INFINITY, f64::min);
        parts.push(part(
            order >= 1.9,
            format!("tau = {}: dbar order {order:.3} >= 1.9", shape.tau),
        ));
        let grid = make_grid(shape, 64).unwrap();
        let parity = parity_defect(&shape, 1, &grid).unwrap();
        parts.push(part(parity < 1e-10, format!("parity {parity:.1e} < 1e-10")));
    }
    parts
}

fn stability() -> Vec<Part> {
    let p = PhysParams::physical();
    let bs = p.b_star;
    let below = stability_verdict(&p, bs * (1.0 - 1e-12)).unwrap().verdict;
    let at = stability_verdict(&p, bs).unwrap().verdict;
    let above = stability_verdict(&p, bs * (1.0 + 1e-12)).unwrap().verdict;
    let flip = below == Stability::Stable && at == Stability::Critical && above == Stability::Unstable;
    let mut parts = vec![part(
        flip,
        format!("verdicts {below:?} / {at:?} / {above:?} around b_*"),
    )];
    let v = stability_verdict(&p, 1.25 * bs).unwrap();
    for shape in [LatticeShape::square(), LatticeShape::hexagonal()] {
        let r = h1_spectrum(&shape, 1, v.mu, 32, 1, &EigenOptions::default()).unwrap();
        let e = rel(r.eigenvalues[0], v.lowest_eigenvalue);
        parts.push(part(
            e < 0.02,
            format!(
                "tau = {}: H1 {:.5} vs {:.5} (rel {e:.1e} < 2%)",
                shape.tau, r.eigenvalues[0], v.lowest_eigenvalue
            ),
        ));
    }
    parts
}

fn gradient() -> Vec<Part> {
    let t = Instant::now();
    let p = PhysParams::physical();
    let grid = make_grid(LatticeShape::new(num_complex::Complex64::new(0.21, 1.07)).unwrap(), 32).unwrap();
    let c = Calculus::new(&grid, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let xi = p.xi_of_mu(0.99);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let s = random_state(&c, &p, &mut rng, 0.05).unwrap();
        let mut d = random_state(&c, &p, &mut rng, 1.0).unwrap();
        d.phi = d.phi.map(|v| C64::new(v.re - xi, 0.0));
        worst = worst.max(gradient_check(&c, &s, &p, xi, &d, 1e-5).unwrap().relative_error);
    }
    let secs = t.elapsed().as_secs_f64();
    vec![
        part(worst < 1e-6, format!("worst of 20: {worst:.1e} < 1e-6")),
        part(secs < 30.0, format!("runtime {secs:.1} s < 30 s")),
    ]
}

fn abrikosov() -> Vec<Part> {
    // [DERIVED] quadrature at N = 64 and 128 must agree before the frozen
    // constants are compared.
    let mut parts = Vec::new();
    for (shape, frozen) in [
        (LatticeShape::square(), 1.180340),
        (LatticeShape::hexagonal(), 1.159595),
    ] {
        let b: Vec<f64> = [64, 128]
            .iter()
            .map(|&n| {
                let grid = make_grid(shape, n).unwrap();
                build_chi(&shape, 1, &grid, None, None).unwrap().abrikosov_beta()
            })
            .collect();
        let ok = (b[0] - b[1]).abs() < 1e-6 && (b[1] - frozen).abs() < 1e-4;
        parts.push(part(
            ok,
            format!("beta({}) = {:.7} / {:.7} vs {frozen}", shape.tau, b[0], b[1]),
        ));
    }
    parts
}

fn hexagonal_shape() -> Vec<Part> {
    let t = Instant::now();
    let p = PhysParams::physical();
    let scan = scan_eta(&p, 40, 64).unwrap();
    let r = refine_max(&scan, 1e-6).unwrap();
    let hex = LatticeShape::hexagonal().tau;
    let d = modular_distance(r.tau_star, hex).unwrap();
    let direct = (r.tau_star - hex).norm();
    let secs = t.elapsed().as_secs_f64();
    vec![
        part(r.refined, format!("refined {} warnings {:?}", r.refined, r.warnings)),
        part(
            d < 0.02 && direct < 0.02,
            format!(
                "tau_star = {:.8}, |tau_star - e^(i pi/3)| = {direct:.1e} < 0.02",
                r.tau_star
            ),
        ),
        part(
            secs < 600.0,
            format!("40x40 scan at N = 64 + refinement {secs:.1} s < 600 s"),
        ),
    ]
}

fn bifurcation() -> Vec<Part> {
    let p = PhysParams::physical();
    let shape = LatticeShape::hexagonal();
    let grid = make_grid(shape, 64).unwrap();
    let chi = build_chi(&shape, 1, &grid, None, None).unwrap();
    let eta = alpha_eta(&chi, &p).unwrap().eta;
    let omegas = [0.005, 0.01, 0.02];
    let opts = BranchOptions::default();
    let mut s2_err = Vec::new();
    let mut remainder = Vec::new();
    let mut deficit_err = Vec::new();
    let mut below = true;
    let mut converged = true;
    for &w in &omegas {
        let bp = newton_branch(w, &chi, &p, &opts).unwrap();
        converged &= bp.residual_norm < 1e-8;
        s2_err.push(rel(bp.s * bp.s / w, eta / (p.g * p.g)));
        let pred = 0.5 * bp.b * bp.b * p.sin2_theta() * eta * w * w;
        deficit_err.push(rel(bp.energy_deficit, pred));
        remainder.push((bp.energy_deficit - pred).abs());
        below &= bp.energy_per_area < 0.5 * bp.b * bp.b;
    }
    let slope = loglog_slope(&omegas, &remainder);
    let improving = s2_err[0] <= s2_err[1] && s2_err[1] <= s2_err[2];
    vec![
        part(converged, "Newton residual < 1e-8 at every omega".into()),
        part(
            s2_err[0] < 0.05 && improving,
            format!(
                "(a) s^2/omega rel errors {:.1e}, {:.1e}, {:.1e}",
                s2_err[0], s2_err[1], s2_err[2]
            ),
        ),
        part(
            deficit_err[0] < 0.1,
            format!("(b) deficit rel error {:.1e} < 10% at omega = 0.005", deficit_err[0]),
        ),
        part(slope >= 2.7, format!("(b) remainder slope {slope:.3} >= 2.7")),
        part(below, "(c) energy < 1/2 b^2 at every point".into()),
    ]
}

fn identities() -> Vec<Part> {
    let p = PhysParams::physical();
    let mut parts = Vec::new();
    for shape in [LatticeShape::square(), LatticeShape::hexagonal()] {
        let grid = make_grid(shape, 64).unwrap();
        let chi = build_chi(&shape, 1, &grid, None, None).unwrap();
        let fo = first_order(&chi, &p).unwrap();
        let (l, r) = appendix_f_identity(&fo, &chi, &p).unwrap();
        let b = s4_bracket(&fo, &chi, &p).unwrap();
        let bc = s4_bracket_closed_form(&fo, &p);
        let (e1, e2) = (rel(l, r), rel(b, bc));
        parts.push(part(
            e1 < 1e-7 && e2 < 1e-7,
            format!("tau = {}: xi' identity {e1:.1e}, s^4 bracket {e2:.1e}", shape.tau),
        ));
    }
    parts
}

fn symmetry_suite() -> Vec<Part> {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ewlattice"))
        .args(["verify", "--out", dir.path().to_str().unwrap()])
        .env_remove("EWLATTICE_WORKERS")
        .output()
        .unwrap();
    let code = out.status.code();
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    let checks = report["checks"].as_array().unwrap();
    let mut parts = vec![part(code == Some(0), format!("verify exit status {code:?}"))];
    for name in [
        "energy.gauge_covariance",
        "energy.phase_equivariance",
        "spectrum.zero_mode",
        "bifurcation.div_current",
    ] {
        let c = checks.iter().find(|c| c["name"] == name);
        let ok = c.is_some_and(|c| c["passed"] == true);
        let v = c.and_then(|c| c["value"].as_f64()).unwrap_or(f64::NAN);
        parts.push(part(ok, format!("{name} {v:.1e}")));
    }
    parts
}

#[test]
fn acceptance_criteria() {
    let results = vec![
        criterion(1, "Landau spectrum", landau_spectrum),
        criterion(2, "null-state quality", null_state),
        criterion(3, "stability threshold", stability),
        criterion(4, "gradient consistency", gradient),
        criterion(5, "Abrikosov ratio", abrikosov),
        criterion(6, "hexagonal shape", hexagonal_shape),
        criterion(7, "bifurcation asymptotics", bifurcation),
        criterion(8, "first-order identities", identities),
        criterion(9, "symmetry suite", symmetry_suite),
    ];
    // written to the process stderr directly (bypassing the test harness
    // capture) so the table appears in a plain `cargo test` log
    let mut err = std::io::stderr().lock();
    for c in &results {
        writeln!(err, "{}", c.line()).unwrap();
    }
    drop(err);
    for c in &results {
        if KNOWN_UNATTAINABLE.contains(&c.id) {
            // only the second-level sub-check may fail
            let failing: Vec<_> = c.parts.iter().filter(|p| !p.ok).map(|p| p.label.as_str()).collect();
            assert!(
                failing.iter().all(|l| l.starts_with("lambda_1")),
                "criterion {}: {failing:?}",
                c.id
            );
        } else {
            assert!(c.passed(), "{}", c.line());
        }
    }
}
