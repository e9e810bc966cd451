//! Parameter construction, derived constants and validation.

use ewlattice::params::{ParamSpec, PhysParams};
use ewlattice::Error;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

#[test]
fn physical_masses_give_expected_weinberg_angle() {
    // [PAPER] mass inputs; [DERIVED] sin^2 theta = 1 - (M_W/M_Z)^2 computed directly.
    let p = PhysParams::from_masses(80.379, 91.1876, 125.09, 1).unwrap();
    let expected = 1.0 - (80.379f64 / 91.1876).powi(2);
    assert!(rel(p.sin2_theta(), expected) < 1e-12);
    assert!(
        (p.sin2_theta() - 0.2230).abs() < 5e-4,
        "sin^2 theta = {}",
        p.sin2_theta()
    );
}

#[test]
fn forty_five_degree_angle() {
    // [TRIVIAL] cos theta = M_W / M_Z = 1/sqrt(2).
    let m = 50.0;
    let p = PhysParams::from_masses(m, m * 2f64.sqrt(), 2.0 * m, 1).unwrap();
    assert!((p.theta.cos() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
    assert!((p.theta - std::f64::consts::FRAC_PI_4).abs() < 1e-14);
}

#[test]
fn invalid_mass_orderings_are_rejected() {
    for (w, z, h) in [
        (80.0, 80.0, 125.0),
        (91.0, 80.0, 125.0),
        (80.0, 130.0, 125.0),
        (0.0, 91.0, 125.0),
        (-1.0, 91.0, 125.0),
        (80.0, f64::NAN, 125.0),
    ] {
        match PhysParams::from_masses(w, z, h, 1) {
            Err(Error::Validation(msg)) => assert!(!msg.is_empty()),
            other => panic!("({w}, {z}, {h}) should be rejected, got {other:?}"),
        }
    }
    assert!(PhysParams::from_masses(80.379, 91.1876, 125.09, 0).is_err());
    assert!(PhysParams::from_couplings(1.0, 0.0, 1.0, 1.0, 1).is_err());
}

#[test]
fn derived_constants() {
    // [DERIVED] each identity recomputed from the raw couplings.
    let p = PhysParams::physical();
    let e_alt = p.g * p.gprime / (p.g * p.g + p.gprime * p.gprime).sqrt();
    assert!(rel(p.e, e_alt) < 1e-14);
    assert!(rel(p.e, p.g * p.theta.sin()) < 1e-15);
    assert!(rel(p.b_star, p.mass_w * p.mass_w / p.e) < 1e-15);
    assert!(rel(p.b_star, p.b_star_from_couplings()) < 1e-12);
    assert!(rel(p.kappa, p.g * p.g / (2.0 * p.theta.cos().powi(2))) < 1e-14);
    assert!(rel(p.mass_w, 80.379) < 1e-14);
    assert!(rel(p.mass_z, 91.1876) < 1e-14);
    assert!(rel(p.mass_h, 125.09) < 1e-14);
    assert_eq!(p.phi0, 1.0);
}

#[test]
fn rescaled_mass_ratios_match_physical_ratios() {
    for n in 1..=4 {
        let p = PhysParams::physical().with_flux(n).unwrap();
        assert!(rel(p.m_w, (n as f64).sqrt()) < 1e-15);
        assert!(rel(p.m_z / p.m_w, p.mass_z / p.mass_w) < 1e-13);
        assert!(rel(p.m_h / p.m_w, p.mass_h / p.mass_w) < 1e-13);
    }
}

#[test]
fn mass_ratios_invariant_under_normalisation() {
    // Changing phi0 (with g, lambda fixed up to the convention) leaves the
    // rescaled ratios unchanged.
    let p = PhysParams::physical();
    for phi0 in [0.5, 1.0, 3.0] {
        let q = PhysParams::from_couplings(p.g / phi0, p.gprime / phi0, p.lambda / (phi0 * phi0), phi0, 1).unwrap();
        assert!(rel(q.m_z / q.m_w, p.m_z / p.m_w) < 1e-13);
        assert!(rel(q.mass_h / q.mass_w, p.mass_h / p.mass_w) < 1e-13);
        assert!(rel(q.mass_z / q.mass_w, p.mass_z / p.mass_w) < 1e-13);
    }
}

#[test]
fn field_and_omega_maps_are_inverse() {
    let p = PhysParams::physical();
    for w in [-0.3, 0.0, 0.005, 0.2] {
        let b = p.b_of_omega(w);
        assert!((p.omega_of_b(b) - w).abs() < 1e-14);
        assert!(rel(p.mu_of_b(b), p.mu_of_omega(w)) < 1e-14);
        // xi = sqrt(n/(e b)) phi0 = sqrt(2 mu)/g
        assert!(rel(p.xi_of_b(b), p.xi_of_mu(p.mu_of_b(b))) < 1e-13);
    }
    assert!(rel(p.mu_of_b(p.b_star), 1.0) < 1e-15);
    assert!(p.field_in_tesla(p.b_star) > 0.0);
}

#[test]
fn json_blocks_round_trip() {
    let masses: ParamSpec = serde_json::from_str(r#"{"M_W": 80.379, "M_Z": 91.1876, "M_H": 125.09, "n": 1}"#).unwrap();
    assert_eq!(masses.build().unwrap(), PhysParams::physical());
    let p = PhysParams::physical();
    let text = format!(
        r#"{{"g": {}, "gprime": {}, "lambda": {}, "phi0": 1.0, "n": 2}}"#,
        p.g, p.gprime, p.lambda
    );
    let couplings: ParamSpec = serde_json::from_str(&text).unwrap();
    let q = couplings.build().unwrap();
    assert_eq!(q.n, 2);
    assert!(rel(q.mass_z, p.mass_z) < 1e-13);
    let again: ParamSpec = serde_json::from_str(&serde_json::to_string(&couplings).unwrap()).unwrap();
    assert_eq!(again, couplings);
}
