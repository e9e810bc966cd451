//! Lattice geometry, sampling grid and modular reduction.

use std::f64::consts::{FRAC_PI_3, PI};

use ewlattice::lattice::{compose, make_grid, mobius, reduce_to_fundamental, LatticeShape, Modular, IDENTITY};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn in_domain(t: Complex64) -> bool {
    t.norm_sqr() >= 1.0 - 1e-10 && t.re > -0.5 + 1e-10 && t.re <= 0.5 + 1e-10
}

/// Brute-force oracle: every SL(2,Z) matrix with entries bounded by `bound`,
/// keeping the image that lies in the fundamental domain (ties on the unit
/// circle resolved towards `Re >= 0`).
fn brute_force_reduce(tau: Complex64, bound: i64) -> Complex64 {
    let mut best: Option<Complex64> = None;
    for a in -bound..=bound {
        for b in -bound..=bound {
            for cc in -bound..=bound {
                for d in -bound..=bound {
                    if a * d - b * cc != 1 {
                        continue;
                    }
                    let t = mobius(&[[a, b], [cc, d]], tau);
                    if !in_domain(t) {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some(old) => t.re > old.re + 1e-12,
                    };
                    if better {
                        best = Some(t);
                    }
                }
            }
        }
    }
    best.expect("no image in the fundamental domain")
}

#[test]
fn basis_area_and_dual() {
    for tau in [
        c(0.0, 1.0),
        Complex64::from_polar(1.0, FRAC_PI_3),
        c(0.31, 0.77),
        c(-2.3, 0.2),
    ] {
        let s = LatticeShape::new(tau).unwrap();
        assert!((s.basis_cross().abs() - 2.0 * PI).abs() < 1e-12);
        assert!((s.cell_area - 2.0 * PI).abs() < 1e-12);
        let ratio = c(s.basis[1][0], s.basis[1][1]) / c(s.basis[0][0], s.basis[0][1]);
        assert!((ratio - tau).norm() < 1e-12);
        for i in 0..2 {
            for j in 0..2 {
                let dot = s.dual[i][0] * s.basis[j][0] + s.dual[i][1] * s.basis[j][1];
                let target = if i == j { 2.0 * PI } else { 0.0 };
                assert!((dot - target).abs() < 1e-12, "K{i}.e{j} = {dot}");
            }
        }
    }
    assert!(LatticeShape::new(c(0.3, 0.0)).is_err());
    assert!(LatticeShape::new(c(0.3, -1.0)).is_err());
}

#[test]
fn grid_layout() {
    let g = make_grid(LatticeShape::square(), 8).unwrap();
    assert_eq!(g.points.len(), 64);
    assert_eq!(g.points[0], [0.0, 0.0]);
    // row-major in (t1, t2): index j1 * N + j2
    let s = LatticeShape::square();
    let p = s.point(3.0 / 8.0, 5.0 / 8.0);
    let q = g.points[g.index(3, 5)];
    assert!((p[0] - q[0]).abs() < 1e-15 && (p[1] - q[1]).abs() < 1e-15);
    assert_eq!(g.mirror_index(g.index(3, 5)), g.index(5, 3));
    assert_eq!(g.mirror_index(0), 0);

    let h = make_grid(LatticeShape::hexagonal(), 16).unwrap();
    assert!((h.shape.basis_cross() - 2.0 * PI).abs() < 1e-12);
    assert!((h.weight() * 256.0 - 2.0 * PI).abs() < 1e-12);

    for n in [7, 6, 0, 9] {
        assert!(make_grid(LatticeShape::square(), n).is_err(), "N = {n}");
    }
}

#[test]
fn quadrature_exact_for_trigonometric_polynomials() {
    // [DERIVED] the exact cell average of sum c_m e^{i K_m . x} is c_0.
    let shape = LatticeShape::new(c(0.27, 1.3)).unwrap();
    let n = 16;
    let g = make_grid(shape, n).unwrap();
    let mut terms = Vec::new();
    for m1 in -7i64..=7 {
        for m2 in -7i64..=7 {
            let coeff = c(((m1 * 7 + m2 * 3) % 5) as f64 * 0.1, ((m1 - m2) % 3) as f64 * 0.2);
            terms.push((shape.wavevector(m1 as f64, m2 as f64), coeff, m1 == 0 && m2 == 0));
        }
    }
    let c0 = terms.iter().find(|t| t.2).unwrap().1;
    let mut sum = c(0.0, 0.0);
    for x in &g.points {
        for (k, a, _) in &terms {
            sum += a * Complex64::from_polar(1.0, k[0] * x[0] + k[1] * x[1]);
        }
    }
    let avg = sum / g.points.len() as f64;
    assert!((avg - c0).norm() < 1e-12, "{avg} vs {c0}");
}

#[test]
fn reduction_examples() {
    let hex = Complex64::from_polar(1.0, FRAC_PI_3);
    let (t, m) = reduce_to_fundamental(hex).unwrap();
    assert!((t - hex).norm() < 1e-15);
    assert_eq!(m, IDENTITY);

    // [DERIVED] 1 + i -> i by T^{-1}.
    let (t, m) = reduce_to_fundamental(c(1.0, 1.0)).unwrap();
    assert!((t - c(0.0, 1.0)).norm() < 1e-12);
    assert_eq!(m, [[1, -1], [0, 1]]);

    // [DERIVED] brute-force enumeration over bounded SL(2,Z) matrices.
    let (t, m) = reduce_to_fundamental(c(0.1, 0.1)).unwrap();
    assert!(t.norm() >= 1.0 - 1e-12);
    assert!((mobius(&m, c(0.1, 0.1)) - t).norm() < 1e-12);
    assert!((t - brute_force_reduce(c(0.1, 0.1), 8)).norm() < 1e-10);

    // tie on the unit circle: Re < 0 goes to the mirror
    let (t, _) = reduce_to_fundamental(Complex64::from_polar(1.0, 1.9)).unwrap();
    assert!((t - Complex64::from_polar(1.0, PI - 1.9)).norm() < 1e-12);
    let (t, _) = reduce_to_fundamental(c(-0.5, 1.2)).unwrap();
    assert!((t - c(0.5, 1.2)).norm() < 1e-12);

    assert!(reduce_to_fundamental(c(0.2, 0.0)).is_err());
    assert!(reduce_to_fundamental(c(0.2, -0.4)).is_err());
}

#[test]
fn reduction_matches_brute_force() {
    for tau in [c(0.37, 0.21), c(-1.62, 0.35), c(2.2, 0.9), c(0.05, 0.4), c(-0.3, 0.6)] {
        let (t, m) = reduce_to_fundamental(tau).unwrap();
        let oracle = brute_force_reduce(tau, 8);
        assert!((t - oracle).norm() < 1e-10, "{tau}: {t} vs {oracle}");
        assert_eq!(m[0][0] * m[1][1] - m[0][1] * m[1][0], 1);
    }
}

fn modular_word(word: &[u8]) -> Modular {
    let s: Modular = [[0, -1], [1, 0]];
    let t: Modular = [[1, 1], [0, 1]];
    let ti: Modular = [[1, -1], [0, 1]];
    word.iter()
        .fold(IDENTITY, |m, g| compose(&[s, t, ti][*g as usize % 3], &m))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reduction_is_idempotent_and_in_sl2z(re in -3.0f64..3.0, im in 0.05f64..3.0) {
        let tau = c(re, im);
        let (t, m) = reduce_to_fundamental(tau).unwrap();
        prop_assert!(in_domain(t));
        prop_assert_eq!(m[0][0] * m[1][1] - m[0][1] * m[1][0], 1);
        prop_assert!((mobius(&m, tau) - t).norm() < 1e-9 * (1.0 + t.norm()));
        let (t2, m2) = reduce_to_fundamental(t).unwrap();
        prop_assert!((t2 - t).norm() < 1e-12);
        prop_assert_eq!(m2, IDENTITY);
    }

    #[test]
    fn equivalent_shapes_reduce_to_the_same_point(re in -0.5f64..0.5, im in 1.0f64..2.0,
                                                  word in proptest::collection::vec(0u8..3, 0..8)) {
        let tau = c(re, im);
        prop_assume!(tau.norm() > 1.0 + 1e-6 && re > -0.5 + 1e-6 && re < 0.5 - 1e-6);
        let image = mobius(&modular_word(&word), tau);
        let (t, _) = reduce_to_fundamental(image).unwrap();
        prop_assert!((t - tau).norm() < 1e-9, "{} -> {}", tau, t);
    }
}

#[test]
fn shape_serialises_tau_as_pair() {
    let s = LatticeShape::new(c(0.25, 1.5)).unwrap();
    let v: serde_json::Value = serde_json::to_value(s).unwrap();
    assert_eq!(v["tau"], serde_json::json!([0.25, 1.5]));
    let back: LatticeShape = serde_json::from_value(v).unwrap();
    assert_eq!(back, s);
}
