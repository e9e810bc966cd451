//! First-order fields, shape functions, expansions and the Newton branch.

use ewlattice::bifurcation::{
    alpha_eta, ansatz_expansion, appendix_f_identity, energy_expansion, energy_expansion_for_shape, first_order,
    first_order_residuals, loglog_slope, newton_branch, s4_bracket, s4_bracket_closed_form, s_squared_of_omega,
    shape_functions, BranchOptions,
};
use ewlattice::fields::{Calculus, C64};
use ewlattice::green::apply_diff;
use ewlattice::lattice::{make_grid, LatticeShape};
use ewlattice::lll::{build_chi, LLLState};
use ewlattice::params::PhysParams;
use ewlattice::Error;
use num_complex::Complex64;

fn chi(shape: LatticeShape, n: usize) -> (LLLState, Calculus) {
    let grid = make_grid(shape, n).unwrap();
    (
        build_chi(&shape, 1, &grid, None, None).unwrap(),
        Calculus::new(&grid, 1),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn max_abs(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

#[test]
fn first_order_equations_hold() {
    // [DERIVED] direct substitution into the three order-s^4 equations.
    let p = PhysParams::physical();
    for shape in [LatticeShape::square(), LatticeShape::hexagonal()] {
        let (st, calc) = chi(shape, 64);
        let fo = first_order(&st, &p).unwrap();
        let res = first_order_residuals(&fo, &st, &p).unwrap();
        assert!(res.iter().all(|r| *r < 1e-9), "{res:?}");
        let sp = &calc.spectral;
        // [PAPER] curl a' = e (|chi|^2 - <|chi|^2>), zero mean
        let curl_a = sp.curl(&fo.a1.comps[0], &fo.a1.comps[1]);
        let rho = &fo.chi_abs2.comps[0];
        let mean = rho.iter().map(|v| v.re).sum::<f64>() / rho.len() as f64;
        assert!((mean - 1.0).abs() < 1e-12);
        let d: Vec<C64> = curl_a.iter().zip(rho).map(|(c, r)| c - p.e * (r - mean)).collect();
        assert!(max_abs(&d) < 1e-9 * p.e);
        assert!((curl_a.iter().sum::<C64>() / curl_a.len() as f64).norm() < 1e-12);
        // a', z' divergence free
        assert!(max_abs(&sp.div(&fo.a1.comps[0], &fo.a1.comps[1])) < 1e-10);
        assert!(max_abs(&sp.div(&fo.z1.comps[0], &fo.z1.comps[1])) < 1e-10);
        // [PAPER] curl nu' = g^2 |chi|^2 - e^2 <|chi|^2> - g^2 n G_{m_z}|chi|^2,
        // recomputed here as g (sin theta curl a' + cos theta curl z')
        let curl_z = sp.curl(&fo.z1.comps[0], &fo.z1.comps[1]);
        let scale = max_abs(&fo.nu1_curl.comps[0]);
        for j in 0..rho.len() {
            let v = p.g * (p.theta.sin() * curl_a[j].re + p.theta.cos() * curl_z[j].re);
            assert!((v - fo.nu1_curl.comps[0][j].re).abs() < 1e-9 * scale);
        }
        // signs: psi' < 0 pointwise, xi' < 0 for m_z < m_h
        assert!(fo.psi1.comps[0].iter().all(|v| v.re < 0.0));
        assert!(fo.xi1 < 0.0);
    }
}

#[test]
fn scalar_identities() {
    let p = PhysParams::physical();
    let (st, calc) = chi(LatticeShape::hexagonal(), 64);
    let fo = first_order(&st, &p).unwrap();
    // Appendix F identity
    let (l, r) = appendix_f_identity(&fo, &st, &p).unwrap();
    assert!(rel(l, r) < 1e-8, "{l} vs {r}");
    // [DERIVED] g sqrt(2n) xi' <|chi|^2> = -g^2 [m_w^2 <|chi|^2 G_{mz,mh}|chi|^2> + sin^2 theta <|chi|^2>^2]
    let rho = st.chi_abs2().real_part();
    let gd = apply_diff(&calc.spectral, p.m_z, p.m_h, &rho).unwrap();
    let m = rho.average().unwrap().re;
    let q = rho.inner(&gd).unwrap().re;
    let lhs = p.g * 2f64.sqrt() * fo.xi1 * m;
    let rhs = -p.g * p.g * (p.m_w * p.m_w * q + p.sin2_theta() * m * m);
    assert!(rel(lhs, rhs) < 1e-9, "{lhs} vs {rhs}");
    // closed form of the s^4 bracket
    let b = s4_bracket(&fo, &st, &p).unwrap();
    let bc = s4_bracket_closed_form(&fo, &p);
    assert!(rel(b, bc) < 1e-7, "{b} vs {bc}");
    assert!(b < 0.0);
}

#[test]
fn shape_functions_square_lattice() {
    // [DERIVED] beta from quadrature at two resolutions; [PAPER] alpha, eta > 0.
    let p = PhysParams::physical();
    let a = shape_functions(&LatticeShape::square(), &p, 64).unwrap();
    let b = shape_functions(&LatticeShape::square(), &p, 128).unwrap();
    assert!((a.beta - b.beta).abs() < 1e-6 && (b.beta - 1.180340).abs() < 1e-4);
    assert!(rel(a.eta, b.eta) < 1e-8);
    assert!(a.alpha > 0.0 && a.eta > 0.0 && a.beta >= 1.0);
    assert!(a.eta < 1.0 / p.sin2_theta());
}

#[test]
fn degenerate_masses_give_flat_shape_function() {
    // [TRIVIAL] m_z = m_h (lambda = kappa / 2): alpha = 0, eta = 1 / sin^2 theta.
    let p = PhysParams::physical();
    let q = PhysParams::from_couplings(p.g, p.gprime, 0.5 * p.kappa, 1.0, 1).unwrap();
    assert!(rel(q.m_z, q.m_h) < 1e-14);
    for shape in [LatticeShape::square(), LatticeShape::hexagonal()] {
        let sf = shape_functions(&shape, &q, 32).unwrap();
        assert!(sf.alpha.abs() < 1e-12, "{}", sf.alpha);
        assert!(rel(sf.eta, 1.0 / q.sin2_theta()) < 1e-10);
    }
    // m_z > m_h is outside the theory
    let r = PhysParams::from_couplings(p.g, p.gprime, 0.4 * p.kappa, 1.0, 1).unwrap();
    let (st, _) = chi(LatticeShape::square(), 16);
    assert!(alpha_eta(&st, &r).is_err());
}

#[test]
fn eta_is_a_lattice_invariant() {
    // [DERIVED] tau, tau + 1 and -1/tau generate the same lattice.
    let p = PhysParams::physical();
    let tau = Complex64::new(0.18, 1.13);
    let base = shape_functions(&LatticeShape::new(tau).unwrap(), &p, 32).unwrap().eta;
    for t in [tau + 1.0, -1.0 / tau, tau - 2.0] {
        let e = shape_functions(&LatticeShape::new(t).unwrap(), &p, 32).unwrap().eta;
        assert!(rel(e, base) < 1e-8, "{t}: {e} vs {base}");
    }
}

#[test]
fn leading_order_s_squared() {
    let p = PhysParams::physical();
    let (st, _) = chi(LatticeShape::hexagonal(), 32);
    assert_eq!(s_squared_of_omega(0.0, &st, &p).unwrap(), 0.0);
    let a = s_squared_of_omega(0.01, &st, &p).unwrap();
    let b = s_squared_of_omega(0.02, &st, &p).unwrap();
    assert!(rel(b, 2.0 * a) < 1e-15);
    let eta = alpha_eta(&st, &p).unwrap().eta;
    assert!(rel(a, eta * 0.01 / (p.g * p.g)) < 1e-12);
    assert!(s_squared_of_omega(-0.01, &st, &p).is_err());
}

#[test]
fn energy_expansion_properties() {
    let p = PhysParams::physical();
    let b = p.b_star;
    assert!(rel(energy_expansion(0.0, 3.0, &p).unwrap(), 0.5 * b * b) < 1e-15);
    let w = 0.01;
    let bw = p.b_of_omega(w);
    let e1 = energy_expansion(w, 1.0, &p).unwrap();
    let e2 = energy_expansion(w, 2.0, &p).unwrap();
    assert!(e2 < e1 && e1 < 0.5 * bw * bw);
    // [PAPER] hexagonal below square, via eta(hex) > eta(square)
    let hex = energy_expansion_for_shape(w, &LatticeShape::hexagonal(), &p, 64).unwrap();
    let sq = energy_expansion_for_shape(w, &LatticeShape::square(), &p, 64).unwrap();
    assert!(hex < sq, "{hex} vs {sq}");
    assert!(energy_expansion(1.0, 1.0, &p).is_err());
}

#[test]
fn ansatz_energy_remainder_is_sixth_order() {
    let p = PhysParams::physical();
    let (st, _) = chi(LatticeShape::hexagonal(), 64);
    // asymptotic regime: remainder O(s^6)
    let small = ansatz_expansion(&st, &p, &[1e-3, 2e-3, 4e-3]).unwrap();
    assert!(small.slope >= 5.5, "slope {}", small.slope);
    // the larger s values of the stated test set are dominated by higher
    // powers (g ~ 114 enters the s^6 and s^8 terms), still with slope >= 5.5
    let large = ansatz_expansion(&st, &p, &[0.05, 0.1, 0.2]).unwrap();
    assert!(large.slope >= 5.5, "slope {}", large.slope);
    assert!(small.energy_excess.iter().all(|e| *e < 0.0));
    assert!((loglog_slope(&[1.0, 2.0, 4.0], &[3.0, 24.0, 192.0]) - 3.0).abs() < 1e-12);
}

#[test]
fn newton_branch_point_and_parity() {
    // [DERIVED] cross-oracle between the Newton solve and the leading-order formula.
    let p = PhysParams::physical();
    let (st, _) = chi(LatticeShape::hexagonal(), 64);
    let omega = 0.01;
    let opts = BranchOptions::default();
    let bp = newton_branch(omega, &st, &p, &opts).unwrap();
    assert!(bp.residual_norm < 1e-8, "residual {}", bp.residual_norm);
    let lead = s_squared_of_omega(omega, &st, &p).unwrap();
    assert!(rel(bp.s * bp.s, lead) < 0.05, "s^2 = {}, leading {lead}", bp.s * bp.s);
    assert!(bp.s > 0.0);
    // [PAPER] div J = 0 weakly on solutions
    assert!(bp.div_current < 1e-8, "div J {}", bp.div_current);
    // [PAPER] below the vacuum energy; deficit close to 1/2 b^2 sin^2 theta eta omega^2
    assert!(bp.energy_deficit > 0.0);
    let eta = alpha_eta(&st, &p).unwrap().eta;
    let pred = 0.5 * bp.b * bp.b * p.sin2_theta() * eta * omega * omega;
    assert!(rel(bp.energy_deficit, pred) < 0.1);
    assert!((bp.mu - p.mu_of_omega(omega)).abs() < 1e-15);
    // phase fixing: <chi, w> real and equal to s
    let ov = st.chi.inner(&bp.state.w).unwrap();
    assert!(
        ov.im.abs() < 1e-12 && (ov.re - bp.s).abs() < 1e-10 * bp.s,
        "{ov} vs {}",
        bp.s
    );

    // [PAPER] s -> -s: w odd, (alpha, z, phi) even
    let minus = newton_branch(omega, &st, &p, &BranchOptions { sign: -1.0, ..opts }).unwrap();
    assert!((minus.s + bp.s).abs() < 1e-12);
    let d = |a: &[C64], b: &[C64], sgn: f64| a.iter().zip(b).map(|(x, y)| (x - sgn * y).norm()).fold(0.0, f64::max);
    for c in 0..2 {
        assert!(d(&bp.state.w.comps[c], &minus.state.w.comps[c], -1.0) < 1e-10);
        assert!(d(&bp.state.a.comps[c], &minus.state.a.comps[c], 1.0) < 1e-12);
        assert!(d(&bp.state.z.comps[c], &minus.state.z.comps[c], 1.0) < 1e-12);
    }
    assert!(d(&bp.state.phi.comps[0], &minus.state.phi.comps[0], 1.0) < 1e-12);

    // the JSON record omits the field arrays
    let json: serde_json::Value = serde_json::to_value(&bp).unwrap();
    assert!(json.get("state").is_none());
    assert!(json["residual_norm"].as_f64().unwrap() < 1e-8);
}

#[test]
fn newton_branch_preconditions() {
    let p = PhysParams::physical();
    let (st, _) = chi(LatticeShape::hexagonal(), 16);
    let opts = BranchOptions::default();
    assert!(matches!(newton_branch(0.0, &st, &p, &opts), Err(Error::Validation(_))));
    assert!(newton_branch(-0.01, &st, &p, &opts).is_err());
    let p2 = p.with_flux(2).unwrap();
    let grid = make_grid(LatticeShape::hexagonal(), 16).unwrap();
    let st2 = build_chi(&grid.shape, 2, &grid, None, None).unwrap();
    assert!(matches!(
        newton_branch(0.01, &st2, &p2, &opts),
        Err(Error::Unsupported(_))
    ));
    assert!(newton_branch(
        0.01,
        &st,
        &p,
        &BranchOptions {
            galerkin_levels: 1,
            ..opts
        }
    )
    .is_err());
}
