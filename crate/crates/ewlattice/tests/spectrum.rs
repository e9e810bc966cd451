//! Landau spectrum, H_1 spectrum, periodic blocks and the stability verdict.

use ewlattice::fields::{Calculus, C64};
use ewlattice::lattice::{make_grid, LatticeShape};
use ewlattice::params::PhysParams;
use ewlattice::spectrum::{
    assemble_dense, cluster, h1_diagonalization_defect, h1_spectrum, h234_checks, lowest_eigenpairs,
    magnetic_laplacian_spectrum, magnetic_laplacian_spectrum_extrapolated, richardson, stability_verdict, EigenOptions,
    H1Operator, MagneticLaplacian, Stability,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts() -> EigenOptions {
    EigenOptions::default()
}

#[test]
fn landau_levels_n1_square() {
    // [PAPER] sigma(-Delta_{a^n}) = {(2m + 1) n}: for n = 1 the two lowest
    // levels are 1 and 3 (each simple).
    let r = magnetic_laplacian_spectrum_extrapolated(&LatticeShape::square(), 1, 32, 3, &opts()).unwrap();
    let coarse = &r.eigenvalues;
    assert!((coarse[0] - 1.0).abs() < 0.03, "{coarse:?}");
    let ext = r.extrapolated.as_ref().unwrap();
    assert!((ext[0] - 1.0).abs() < 1e-3, "{ext:?}");
    assert!((ext[1] - 3.0).abs() < 3e-3, "{ext:?}");
    assert!(r.clusters[0].multiplicity == 1);
    assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn landau_multiplicity_equals_flux() {
    for n in [2, 3] {
        let k = 2 * n as usize;
        let r = magnetic_laplacian_spectrum_extrapolated(&LatticeShape::square(), n, 16, k, &opts()).unwrap();
        let lowest = r.clusters[0];
        assert_eq!(lowest.multiplicity, n as usize, "{:?}", r.clusters);
        assert!((lowest.value - n as f64).abs() / (n as f64) < 0.01, "{:?}", r.clusters);
        let ext = r.extrapolated.unwrap();
        assert!((ext[0] - n as f64).abs() < 0.01 * n as f64);
        assert!((ext[n as usize] - 3.0 * n as f64).abs() < 0.03 * n as f64, "{ext:?}");
    }
}

#[test]
fn plain_torus_spectrum() {
    // [TRIVIAL] n = 0: lowest 0, then the smallest |K|^2 (second-order accurate).
    let shape = LatticeShape::new(Complex64::new(0.1, 1.3)).unwrap();
    let r = magnetic_laplacian_spectrum(&shape, 0, 32, 3, &opts()).unwrap();
    assert!(r.eigenvalues[0].abs() < 1e-9, "{:?}", r.eigenvalues);
    let mut k2: Vec<f64> = [(1.0, 0.0), (0.0, 1.0), (1.0, -1.0), (1.0, 1.0)]
        .iter()
        .map(|&(a, b)| {
            let k = shape.wavevector(a, b);
            k[0] * k[0] + k[1] * k[1]
        })
        .collect();
    k2.sort_by(f64::total_cmp);
    assert!(
        (r.eigenvalues[1] - k2[0]).abs() / k2[0] < 0.02,
        "{:?} vs {k2:?}",
        r.eigenvalues
    );
}

#[test]
fn lowest_eigenvalue_converges_at_second_order() {
    let shape = LatticeShape::hexagonal();
    let errs: Vec<f64> = [16, 32]
        .iter()
        .map(|&n| {
            (magnetic_laplacian_spectrum(&shape, 1, n, 1, &opts())
                .unwrap()
                .eigenvalues[0]
                - 1.0)
                .abs()
        })
        .collect();
    let order = (errs[0] / errs[1]).log2();
    assert!(order >= 1.9, "errors {errs:?}, order {order}");
}

#[test]
fn dense_and_iterative_solvers_agree() {
    let grid = make_grid(LatticeShape::hexagonal(), 16).unwrap();
    let calc = Calculus::new(&grid, 1);
    let op = MagneticLaplacian::new(&calc);
    let dense = lowest_eigenpairs(&op, 4, &opts()).unwrap();
    let it = lowest_eigenpairs(&op, 4, &EigenOptions { dense_max: 0, ..opts() }).unwrap();
    for (a, b) in dense.values.iter().zip(&it.values) {
        assert!((a - b).abs() < 1e-8, "{:?} vs {:?}", dense.values, it.values);
    }
    assert!(dense.hermiticity_defect < 1e-12);
    assert!(it.residuals.iter().all(|r| *r < 1e-8));
}

#[test]
fn h1_is_hermitian() {
    let grid = make_grid(LatticeShape::new(Complex64::new(0.3, 0.9)).unwrap(), 8).unwrap();
    let calc = Calculus::new(&grid, 1);
    let m = assemble_dense(&H1Operator::new(&calc, 1.3));
    let defect = (&m - m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(defect < 1e-12, "{defect}");
}

#[test]
fn h1_lowest_eigenvalue() {
    // [PAPER] lowest eigenvalue mu - n: 0 at mu = n and 0.2 at mu = 1.2.
    for shape in [LatticeShape::square(), LatticeShape::hexagonal()] {
        for (mu, target) in [(1.0, 0.0), (1.2, 0.2)] {
            let r16 = h1_spectrum(&shape, 1, mu, 16, 3, &opts()).unwrap();
            let r32 = h1_spectrum(&shape, 1, mu, 32, 1, &opts()).unwrap();
            let ext = richardson(&r16.eigenvalues[..1], &r32.eigenvalues, 2.0)[0];
            assert!(
                (r32.eigenvalues[0] - target).abs() < 0.01,
                "mu {mu}: {:?}",
                r32.eigenvalues
            );
            assert!((ext - target).abs() < 1e-3, "mu {mu}: extrapolated {ext}");
            // next: the gradient sector at mu, then mu + 2n
            assert!(r16.eigenvalues[1] > target + 0.9, "{:?}", r16.eigenvalues);
        }
    }
}

#[test]
fn h1_diagonalisation_identity() {
    // [PAPER] U*(-Delta - 2n iJ)U = diag(-Delta + 2n, -Delta - 2n).
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = make_grid(LatticeShape::new(Complex64::new(-0.2, 1.05)).unwrap(), 16).unwrap();
    let calc = Calculus::new(&grid, 1);
    let samples: Vec<[Vec<C64>; 2]> = (0..4)
        .map(|_| {
            let mut v = || -> Vec<C64> {
                (0..grid.len())
                    .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect()
            };
            [v(), v()]
        })
        .collect();
    assert!(h1_diagonalization_defect(&calc, &samples) < 1e-10);
}

#[test]
fn stability_examples() {
    let p = PhysParams::physical();
    // [PAPER] (b_*/b - 1) n
    let v = stability_verdict(&p, 0.5 * p.b_star).unwrap();
    assert_eq!(v.verdict, Stability::Stable);
    assert!((v.lowest_eigenvalue - 1.0).abs() < 1e-14);
    assert!(v.negative_eigenvalue.is_none());
    let v = stability_verdict(&p, p.b_star).unwrap();
    assert_eq!(v.verdict, Stability::Critical);
    assert_eq!(v.lowest_eigenvalue, 0.0);
    let v = stability_verdict(&p, 2.0 * p.b_star).unwrap();
    assert_eq!(v.verdict, Stability::Unstable);
    assert!((v.negative_eigenvalue.unwrap() + 0.5).abs() < 1e-14);
    assert!((v.mu - 0.5).abs() < 1e-14);
    // the flip is exactly at b_*
    assert_eq!(
        stability_verdict(&p, p.b_star * (1.0 - 1e-12)).unwrap().verdict,
        Stability::Stable
    );
    assert_eq!(
        stability_verdict(&p, p.b_star * (1.0 + 1e-12)).unwrap().verdict,
        Stability::Unstable
    );
    let p2 = p.with_flux(2).unwrap();
    assert!((stability_verdict(&p2, 2.0 * p2.b_star).unwrap().lowest_eigenvalue + 1.0).abs() < 1e-14);
    assert!(stability_verdict(&p, 0.0).is_err());
    assert!(stability_verdict(&p, -1.0).is_err());
}

#[test]
fn verdict_matches_numerical_h1() {
    // lowest H_1 eigenvalue at b = 1.25 b_* against (b_*/b - 1) n = -0.2
    let p = PhysParams::physical();
    let v = stability_verdict(&p, 1.25 * p.b_star).unwrap();
    let r = h1_spectrum(&LatticeShape::hexagonal(), 1, v.mu, 32, 1, &opts()).unwrap();
    let rel = (r.eigenvalues[0] - v.lowest_eigenvalue).abs() / v.lowest_eigenvalue.abs();
    assert!(rel < 0.02, "{} vs {}", r.eigenvalues[0], v.lowest_eigenvalue);
}

#[test]
fn periodic_blocks() {
    let p = PhysParams::physical();
    let mu = 0.9;
    let shape = LatticeShape::new(Complex64::new(0.1, 1.1)).unwrap();
    let r = h234_checks(&p, mu, &shape, 16, 6).unwrap();
    // [PAPER] H_2 null space = constants, residual < 1e-12
    assert!(r.h2_null_residual < 1e-12);
    assert_eq!(r.h2.clusters[0].multiplicity, 2);
    assert_eq!(r.h2.eigenvalues[0], 0.0);
    // [TRIVIAL] H_3 lowest = mu / cos^2 theta on constants
    let m3 = mu / p.theta.cos().powi(2);
    assert!((r.h3.eigenvalues[0] - m3).abs() < 1e-12);
    assert!((r.h3_constant_rayleigh - m3).abs() < 1e-12);
    // [TRIVIAL] H_4 on e^{i K1 x}: |K1|^2 + 4 lambda mu / g^2
    let (got, exact) = r.h4_planewave_rayleigh;
    assert!((got - exact).abs() < 1e-10 * exact);
    let k = shape.wavevector(1.0, 0.0);
    assert!((exact - (k[0] * k[0] + k[1] * k[1] + 4.0 * p.lambda * mu / (p.g * p.g))).abs() < 1e-12);
    assert!((r.h4.eigenvalues[0] - 4.0 * p.lambda * mu / (p.g * p.g)).abs() < 1e-12);
}

#[test]
fn helpers_and_validation() {
    let cl = cluster(&[1.0, 1.0 + 1e-9, 3.0, 5.0, 5.0], 1e-6);
    assert_eq!(cl.len(), 3);
    assert_eq!(cl[0].multiplicity, 2);
    assert_eq!(cl[2].multiplicity, 2);
    let ext = richardson(&[1.04], &[1.01], 2.0);
    assert!((ext[0] - 1.0).abs() < 1e-15);
    assert!(magnetic_laplacian_spectrum(&LatticeShape::square(), 1, 16, 0, &opts()).is_err());
    assert!(magnetic_laplacian_spectrum(&LatticeShape::square(), 1, 8, 17, &opts()).is_err());
    let r = magnetic_laplacian_spectrum(&LatticeShape::square(), 1, 16, 2, &opts()).unwrap();
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("\"eigenvalues\""));
}
