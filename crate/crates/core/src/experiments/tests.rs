use super::*;
use crate::functionals::Outer;
use crate::kernels::DriftModel;
use crate::spectral::{Lattice, Mode};
use crate::Complex64;
use std::f64::consts::PI;

fn lat(d: usize, kmax: usize) -> Lattice {
    Lattice::new(d, kmax).unwrap()
}

fn row(n: usize, gap: f64) -> WeakErrorRow {
    let p = MeanSe { mean: gap, se: 0.0, n: 10 };
    let s = MeanSe { mean: 0.0, se: 0.0, n: 10 };
    WeakErrorRow::from_estimates(n, p, s)
}

fn cosine(l: Lattice, k: Mode) -> SpectralField {
    let mut f = SpectralField::zeros(l);
    f.set(&k, Complex64::new(0.5, 0.0)).unwrap();
    f.set(&[-k[0], -k[1], -k[2]], Complex64::new(0.5, 0.0)).unwrap();
    f
}

/// Mean-zero solution of `-ΔG = δ - 1` on the unit square by a 1D series
/// in the larger coordinate.
fn green_series(x: f64, y: f64) -> f64 {
    let x = x - (x + 0.5).floor();
    let y = y - (y + 0.5).floor();
    let (x, y) = if y.abs() >= x.abs() { (x, y.abs()) } else { (y, x.abs()) };
    let mut g = 0.5 * (y * y - y) + 1.0 / 12.0;
    for k in 1..20000 {
        let q = 2.0 * PI * k as f64;
        let term = (q * x).cos() * ((q * (y - 1.0)).exp() + (-q * y).exp()) / (1.0 - (-q).exp()) / q;
        g += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    g
}

#[test]
fn fit_recovers_exact_power_laws() {
    let ns = [64, 128, 256, 512, 1024, 2048];
    let half: Vec<_> = ns.iter().map(|&n| row(n, 3.0 / (n as f64).sqrt())).collect();
    let fit = fit_rate(&half).unwrap();
    assert!((fit.slope + 0.5).abs() < 1e-12);
    assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
    let one: Vec<_> = ns.iter().map(|&n| row(n, -0.2 / n as f64)).collect();
    assert!((fit_rate(&one).unwrap().slope + 1.0).abs() < 1e-12);
}

#[test]
fn fit_needs_three_resolved_rows() {
    let mut rows: Vec<_> = [64, 128, 256].iter().map(|&n| row(n, 1.0 / n as f64)).collect();
    rows[1].gap_se = 1.0;
    rows[1].resolved = false;
    assert!(matches!(fit_rate(&rows), Err(Error::InsufficientData(_))));
}

#[test]
fn bootstrap_interval_brackets_a_clean_slope() {
    let ns = [100, 400, 1600];
    let particle: Vec<Vec<f64>> =
        ns.iter().map(|&n| (0..200).map(|i| 1.0 / (n as f64).sqrt() + 1e-4 * ((i % 7) as f64 - 3.0)).collect()).collect();
    let spde = vec![0.0; 200];
    let rows = ns.iter().zip(&particle).map(|(&n, xs)| WeakErrorRow::from_estimates(n, mean_se(xs), mean_se(&spde))).collect();
    let curve = WeakErrorCurve { rows, particle, spde };
    let fit = fit_rate_bootstrap(&curve, 200, 3).unwrap();
    let (lo, hi) = fit.slope_ci.unwrap();
    assert!(lo <= fit.slope && fit.slope <= hi);
    assert!(lo > -0.52 && hi < -0.48, "{lo} {hi}");
}

#[test]
fn csv_has_the_documented_columns() {
    let csv = rows_to_csv(&[row(64, 0.25)]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("N,est_p,se_p,est_s,se_s,gap,gap_se,replicas"));
    assert_eq!(lines.next(), Some("64,0.25,0,0,0,0.25,0,10"));
    assert!(rows_to_dat(&[row(64, 0.25)]).lines().nth(1).unwrap().ends_with(" 1"));
}

#[test]
fn content_hash_is_sha256() {
    assert_eq!(content_hash(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

#[test]
fn iid_variance_of_a_cosine() {
    let l = lat(1, 4);
    let phi = cosine(l, [1, 0, 0]);
    assert!((iid_variance(&SpectralField::uniform(l), &phi).unwrap() - 0.5).abs() < 1e-14);
    // Under μ = 1 + cos(2πx): E cos = 1/2, E cos² = 1/2.
    let mu = SpectralField::uniform(l).add(&phi.scaled(1.0));
    assert!((iid_variance(&mu, &phi).unwrap() - 0.25).abs() < 1e-14);
}

#[test]
fn linear_functional_without_drift_has_no_gap() {
    let l = lat(1, 4);
    let sc = Scenario::new(DriftModel::zero(l), 1.0, SpectralField::uniform(l), 0.05, 0.01, 11);
    let phi = CylindricalFunctional::from_test_functions(vec![cosine(l, [2, 0, 0])], Outer::Linear { coef: vec![1.0] }, -2.5)
        .unwrap();
    let curve = weak_error_curve(&sc, &phi, &[16, 64], 400, 400).unwrap();
    for r in &curve.rows {
        assert!(r.gap.abs() < 3.0 * r.gap_se, "{r:?}");
        assert_eq!(r.spde_replicas, 400);
    }
}

#[test]
fn replicas_do_not_depend_on_the_thread_count() {
    let l = lat(1, 3);
    let sc = Scenario::new(DriftModel::sine1d(l, 1.0).unwrap(), 1.0, SpectralField::uniform(l), 0.04, 0.01, 5);
    let phi = CylindricalFunctional::from_test_functions(
        vec![cosine(l, [1, 0, 0])],
        Outer::Quadratic { weights: vec![1.0], cutoff: None },
        -2.5,
    )
    .unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rows_to_csv(&weak_error_curve(&sc, &phi, &[8, 16], 64, 64).unwrap().rows))
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn exact_integrating_factor_ignores_the_step_size() {
    let l = lat(1, 8);
    let sc = Scenario::new(DriftModel::zero(l), 0.9, SpectralField::uniform(l), 0.2, 0.01, 0);
    let curve = sc.mu_curve().unwrap();
    let solver = sc.spde_solver(&curve).unwrap();
    let h = cosine(l, [3, 0, 0]).add(&cosine(l, [7, 0, 0]));
    let a = solver.linear_flow(&h, 0.0, 0.2, 0.01).unwrap();
    let b = solver.linear_flow(&h, 0.0, 0.2, 0.005).unwrap();
    for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
        assert!((x - y).norm() < 1e-14);
    }
}

#[test]
fn refinement_reports_differences() {
    let psi = |l| cosine(l, [1, 0, 0]);
    let levels: Vec<Scenario> = [4, 8]
        .iter()
        .map(|&k| Scenario::new(DriftModel::zero(lat(1, k)), 1.0, SpectralField::uniform(lat(1, k)), 0.05, 0.01, 2))
        .collect();
    let phi = CylindricalFunctional::from_test_functions(vec![psi(lat(1, 4))], Outer::Linear { coef: vec![1.0] }, -2.5).unwrap();
    let rows = refinement_study(&levels, &phi, 300).unwrap();
    assert_eq!(rows[0].diff, None);
    let (d, se) = (rows[1].diff.unwrap(), rows[1].diff_se.unwrap());
    assert!(d.abs() < 2.5 * se, "{d} vs {se}");
    assert!(!rows[1].stall);
}

#[test]
fn modulated_energy_for_uniform_density_is_the_pair_sum() {
    let l = lat(2, 4);
    let model = DriftModel::coulomb(l).unwrap();
    let sigma = 0.7;
    let pts = [0.0, 0.0, 0.5, 0.5];
    let f = modulated_energy(&pts, &SpectralField::uniform(l), &model, sigma).unwrap();
    let want = 2.0 / (sigma * sigma * 4.0) * green_series(0.5, 0.5);
    assert!((f - want).abs() < 1e-6 * want.abs(), "{f} vs {want}");
}

#[test]
fn three_term_energy_matches_direct_quadrature() {
    let l = lat(2, 2);
    let model = DriftModel::coulomb(l).unwrap();
    let mut mu = SpectralField::uniform(l);
    mu.axpy(Complex64::new(0.3, 0.0), &cosine(l, [1, 0, 0]));
    mu.set(&[1, 1, 0], Complex64::new(0.0, -0.05)).unwrap();
    mu.set(&[-1, -1, 0], Complex64::new(0.0, 0.05)).unwrap();
    let pts = [0.1, 0.2, 0.7, 0.35, 0.4, 0.9, 0.55, 0.05];
    let n = 4;
    let sigma = 1.3;
    let f = modulated_energy(&pts, &mu, &model, sigma).unwrap();

    let m = 160;
    let h = 1.0 / m as f64;
    let mut pair = 0.0;
    let mut cross = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                pair += green_series(pts[2 * i] - pts[2 * j], pts[2 * i + 1] - pts[2 * j + 1]);
            }
        }
        // Midpoint rule on a grid whose nodes avoid x_i by half a cell.
        for a in 0..m {
            for b in 0..m {
                let y = [pts[2 * i] + (a as f64 + 0.5) * h, pts[2 * i + 1] + (b as f64 + 0.5) * h];
                cross += green_series(pts[2 * i] - y[0], pts[2 * i + 1] - y[1]) * mu.eval(&y).re * h * h;
            }
        }
    }
    let self_term: f64 = mu
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != l.zero_index())
        .map(|(i, c)| c.norm_sqr() / (4.0 * PI * PI * crate::spectral::norm2(&l.mode(i))))
        .sum();
    let nf = n as f64;
    let direct = (pair / (nf * nf) - 2.0 * cross / nf + self_term) / (sigma * sigma);
    assert!((f - direct).abs() < 1e-4 * direct.abs().max(1.0), "{f} vs {direct}");
}

#[test]
fn coincident_points_are_a_singularity() {
    let l = lat(2, 2);
    let model = DriftModel::coulomb(l).unwrap();
    let pts = [0.1, 0.2, 0.3, 0.3, 0.1, 0.2];
    match modulated_energy(&pts, &SpectralField::uniform(l), &model, 1.0) {
        Err(Error::Singularity { i, j, .. }) => assert_eq!((i, j), (0, 2)),
        other => panic!("expected a singularity, got {other:?}"),
    }
    assert!(modulated_energy(&pts, &SpectralField::uniform(l), &DriftModel::biot_savart(l).unwrap(), 1.0).is_err());
}
