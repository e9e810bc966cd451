//! Raster scan of eta over the fundamental domain and simplex refinement.

use ewlattice::lattice::LatticeShape;
use ewlattice::params::PhysParams;
use ewlattice::shapeopt::{eta_at, modular_distance, refine_max, scan_eta, scan_eta_window, within_cells, ScanWindow};
use num_complex::Complex64;

fn hex() -> Complex64 {
    LatticeShape::hexagonal().tau
}

#[test]
fn default_scan_peaks_at_hexagonal_lattice() {
    // [PAPER] eta is maximised (beta minimised) at the hexagonal lattice.
    let p = PhysParams::physical();
    let scan = scan_eta(&p, 40, 64).unwrap();
    assert!(!scan.flat);
    let best = scan.argmax_sample();
    assert!(within_cells(best.tau, hex(), scan.cell, 1.0), "argmax at {}", best.tau);
    let low = scan.argmin_beta_sample();
    assert!(
        within_cells(low.tau, hex(), scan.cell, 1.0),
        "argmin beta at {}",
        low.tau
    );
    assert!((low.beta - 1.159595).abs() < 1e-4);
    // every retained sample is in the closed fundamental domain
    assert!(scan
        .samples
        .iter()
        .all(|s| s.tau.norm_sqr() >= 1.0 - 1e-12 && s.tau.re.abs() <= 0.5 + 1e-12));
    assert!(scan.samples.iter().all(|s| s.eta <= best.eta && s.alpha > 0.0));

    // [PAPER] eta(tau) = eta(-conj tau): sample (i, j) mirrors (res - 2 - i, j)
    let res = scan.resolution;
    let lookup = |i: usize, j: usize| scan.samples.iter().find(|s| s.index == [i, j]);
    let mut pairs = 0;
    for s in &scan.samples {
        let [i, j] = s.index;
        if i + 2 > res {
            continue;
        }
        if let Some(m) = lookup(res - 2 - i, j) {
            assert!((m.tau.re + s.tau.re).abs() < 1e-12);
            assert!((m.eta - s.eta).abs() < 1e-6 * s.eta, "{} vs {}", s.tau, m.tau);
            pairs += 1;
        }
    }
    assert!(pairs > 1000);
}

#[test]
fn mirror_symmetry_off_raster() {
    let p = PhysParams::physical();
    for tau in [
        Complex64::new(0.13, 1.21),
        Complex64::new(0.41, 0.95),
        Complex64::new(0.27, 1.7),
    ] {
        let a = eta_at(tau, &p, 32).unwrap().eta;
        let b = eta_at(Complex64::new(-tau.re, tau.im), &p, 32).unwrap().eta;
        assert!((a - b).abs() < 1e-6 * a);
    }
}

#[test]
fn refinement_converges_to_hexagonal_point() {
    // the window floor 0.8 keeps e^{i pi/3} off the raster nodes
    let p = PhysParams::physical();
    let window = ScanWindow {
        im_min: 0.8,
        ..ScanWindow::default()
    };
    let scan = scan_eta_window(&p, &window, 17, 32).unwrap();
    let start = scan.argmax_sample().tau;
    assert!(modular_distance(start, hex()).unwrap() > 1e-3);
    assert!(!scan.on_artificial_boundary(scan.argmax));
    let r = refine_max(&scan, 1e-6).unwrap();
    assert!(r.refined && r.warnings.is_empty(), "{:?}", r.warnings);
    let d = modular_distance(r.tau_star, hex()).unwrap();
    assert!(d < 0.02, "tau* = {}, distance {d}", r.tau_star);
    // the best vertex never gets worse
    assert!(r.trace.windows(2).all(|w| w[1].eta >= w[0].eta));
    assert!(r.eta_star >= scan.argmax_sample().eta);
    let check = r.resolution_check.unwrap();
    assert!(check.relative < 1e-6, "{check:?}");
    assert!(r.tau_star.norm_sqr() >= 1.0 - 1e-9 && r.tau_star.re.abs() <= 0.5 + 1e-9);
}

#[test]
fn boundary_maximum_is_not_refined() {
    // with the floor raised to Im tau = 1.2 the largest eta sits on the window edge
    let p = PhysParams::physical();
    let window = ScanWindow {
        im_min: 1.2,
        ..ScanWindow::default()
    };
    let scan = scan_eta_window(&p, &window, 8, 16).unwrap();
    assert!(
        scan.on_artificial_boundary(scan.argmax),
        "argmax at {}",
        scan.argmax_sample().tau
    );
    let r = refine_max(&scan, 1e-6).unwrap();
    assert!(!r.refined);
    assert_eq!(r.warnings.len(), 1);
    assert!(r.warnings[0].contains("boundary"));
}

#[test]
fn flat_landscape_for_degenerate_masses() {
    // [TRIVIAL] m_z = m_h: eta = 1 / sin^2 theta everywhere.
    let p = PhysParams::physical();
    let q = PhysParams::from_couplings(p.g, p.gprime, 0.5 * p.kappa, 1.0, 1).unwrap();
    let scan = scan_eta(&q, 6, 16).unwrap();
    assert!(scan.flat);
    let r = refine_max(&scan, 1e-6).unwrap();
    assert!(r.flat && !r.refined);
    assert!(r.warnings[0].contains("flat"));
}

#[test]
fn malformed_windows_are_rejected() {
    let p = PhysParams::physical();
    let below = ScanWindow {
        re_min: 0.1,
        re_max: 0.2,
        im_min: 0.1,
        im_max: 0.5,
    };
    assert!(scan_eta_window(&p, &below, 4, 16).is_err());
    let empty = ScanWindow {
        re_min: 0.3,
        re_max: 0.3,
        ..ScanWindow::default()
    };
    assert!(scan_eta_window(&p, &empty, 4, 16).is_err());
    let nan = ScanWindow {
        im_max: f64::NAN,
        ..ScanWindow::default()
    };
    assert!(scan_eta_window(&p, &nan, 4, 16).is_err());
    assert!(scan_eta(&p, 1, 16).is_err());
    let scan = scan_eta(&p, 3, 16).unwrap();
    assert!(refine_max(&scan, 0.0).is_err());
}

#[test]
fn csv_output() {
    let p = PhysParams::physical();
    let scan = scan_eta(&p, 5, 16).unwrap();
    let csv = scan.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("re_tau,im_tau,eta,alpha,beta"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), scan.samples.len());
    for (row, s) in rows.iter().zip(&scan.samples) {
        assert_eq!(row.len(), 5);
        assert_eq!(row[0], s.tau.re);
        assert_eq!(row[2], s.eta);
    }
    let heat = scan.to_heatmap();
    assert_eq!(heat.lines().filter(|l| !l.is_empty()).count(), scan.samples.len());
    let json = serde_json::to_value(scan.argmax_sample()).unwrap();
    assert!(json["tau"].is_array());
}
