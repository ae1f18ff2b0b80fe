use super::ewald::{e1, PeriodicGreen};
use super::images::{image_sum, FreeKernel};
use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lat(d: usize, kmax: usize) -> Lattice {
    Lattice::new(d, kmax).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Mean-zero periodic solution of `-ΔG = δ - 1` on the unit square, summed
/// along one axis in closed form (exponentially convergent off `y = 0`).
fn green_series(x: f64, y: f64) -> f64 {
    let (x, y) = {
        let x = x - (x + 0.5).floor();
        let y = y - (y + 0.5).floor();
        if y.abs() >= x.abs() { (x, y.abs()) } else { (y, x.abs()) }
    };
    let mut g = 0.5 * (y * y - y) + 1.0 / 12.0;
    for k in 1..4000 {
        let q = 2.0 * PI * k as f64;
        let t = ((q * (y - 1.0)).exp() + (-q * y).exp()) / (1.0 - (-q).exp());
        let term = (q * x).cos() * t / q;
        g += term;
        if term.abs() < 1e-18 && k > 10 {
            break;
        }
    }
    g
}

#[test]
fn exponential_integral_reference_values() {
    for (x, v) in [
        (0.1, 1.822_923_958_419_390_7),
        (1.0, 0.219_383_934_395_520_27),
        (2.5, 0.024_914_917_870_269_76),
        (5.0, 0.001_148_295_591_275_325_8),
        (20.0, 9.835_525_290_649_886e-11),
    ] {
        assert!((e1(x) - v).abs() <= 1e-13 * v, "E1({x}) = {} vs {v}", e1(x));
    }
}

// Absolute error: G is O(1) near unit distance and the pair sums are
// accurate to 1e-13 on that scale.
#[test]
fn tabulated_short_range_matches_direct_e1() {
    let g = PeriodicGreen::new(2, 9.0, 1e-13);
    let mut worst = 0.0f64;
    for i in 1..20_000 {
        let r2 = g.cutoff().powi(2) * i as f64 / 20_000.0;
        let want = e1(81.0 * r2) / (4.0 * std::f64::consts::PI);
        worst = worst.max((g.short_value(r2) - want).abs());
    }
    assert!(worst <= 1e-14, "worst {worst:.2e}");
}

#[test]
fn ewald_potential_matches_series_oracle() {
    let g = PeriodicGreen::standard(2);
    for (x, y) in [(0.5, 0.5), (0.1, 0.3), (-0.27, 0.41), (0.02, 0.45), (0.3, 0.05)] {
        let ew = g.value(&[x, y]).unwrap();
        let ser = green_series(x, y);
        assert!((ew - ser).abs() < 1e-12, "({x},{y}): {ew} vs {ser}");
    }
}

#[test]
fn ewald_is_independent_of_splitting() {
    for d in [2, 3] {
        let a = PeriodicGreen::new(d, 4.0, 1e-15);
        let b = PeriodicGreen::new(d, 7.5, 1e-15);
        let x = [0.13, -0.31, 0.22];
        assert!((a.value(&x).unwrap() - b.value(&x).unwrap()).abs() < 1e-12);
        let (ga, gb) = (a.gradient(&x).unwrap(), b.gradient(&x).unwrap());
        assert!(norm(&[ga[0] - gb[0], ga[1] - gb[1], ga[2] - gb[2]]) < 1e-11);
    }
}

#[test]
fn ewald_gradient_matches_finite_differences() {
    for d in [2, 3] {
        let g = PeriodicGreen::standard(d);
        let x = [0.21, -0.17, 0.08];
        let grad = g.gradient(&x).unwrap();
        let h = 1e-6;
        for a in 0..d {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (g.value(&xp).unwrap() - g.value(&xm).unwrap()) / (2.0 * h);
            assert!((fd - grad[a]).abs() < 1e-7, "d={d} axis {a}: {fd} vs {}", grad[a]);
        }
    }
}

#[test]
fn ewald_pair_sum_matches_direct_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in [2, 3] {
        let pts: Vec<f64> = (0..40 * d).map(|_| rng.random::<f64>()).collect();
        let direct_green = PeriodicGreen::standard(d);
        let mut direct = 0.0;
        for i in 0..40 {
            for j in 0..40 {
                if i != j {
                    let x: Vec<f64> = (0..d).map(|a| pts[i * d + a] - pts[j * d + a]).collect();
                    direct += direct_green.value(&x).unwrap();
                }
            }
        }
        for alpha in [6.0, 12.0, 20.0] {
            let fast = PeriodicGreen::new(d, alpha, 1e-14).pair_sum(&pts).unwrap();
            assert!((fast - direct).abs() < 1e-9 * (1.0 + direct.abs()), "d={d} α={alpha}: {fast} vs {direct}");
        }
    }
}

#[test]
fn multiplier_vanishes_at_zero_mode() {
    let models = [
        DriftModel::sine1d(lat(1, 4), 1.0).unwrap(),
        DriftModel::gauss_reg(lat(2, 4), 1.0, 0.1).unwrap(),
        DriftModel::biot_savart(lat(2, 4)).unwrap(),
        DriftModel::coulomb(lat(3, 4)).unwrap(),
    ];
    for m in &models {
        assert!(m.spectral_multiplier(&[0, 0, 0]).unwrap().iter().all(|c| c.norm() == 0.0));
    }
}

#[test]
fn biot_savart_is_divergence_free_and_coulomb_is_a_gradient() {
    let l = lat(2, 6);
    let bs = DriftModel::biot_savart(l).unwrap();
    let co = DriftModel::coulomb(l).unwrap();
    for k in l.modes() {
        let b = bs.multiplier(&k);
        let div = Complex64::new(0.0, 2.0 * PI) * (b[0] * k[0] as f64 + b[1] * k[1] as f64);
        assert!(div.norm() < 1e-15);
        let c = co.multiplier(&k);
        let cross = c[0] * k[1] as f64 - c[1] * k[0] as f64;
        assert!(cross.norm() < 1e-15 * (1.0 + c[0].norm() + c[1].norm()));
    }
    assert!(matches!(bs.spectral_multiplier(&[7, 0, 0]), Err(Error::Index(_))));
}

#[test]
fn biot_savart_one_mode_drift_matches_image_sum_quadrature() {
    // Velocity of ω = cos(2π k0·y) at grid points, spectrally and by quadrature
    // of the |m|∞ ≤ 30 image sum against ω(y) − ω(x).
    let m = 128usize;
    let k0 = [1i64, 2, 0];
    let l = lat(2, 3);
    let bs = DriftModel::biot_savart(l).unwrap();
    let mut omega = SpectralField::zeros(l);
    omega.set(&k0, Complex64::new(0.5, 0.0)).unwrap();
    omega.set(&[-1, -2, 0], Complex64::new(0.5, 0.0)).unwrap();
    let vel = bs.velocity_field(&omega);
    let mut kgrid = vec![[0.0; 3]; m * m];
    for i in 0..m {
        for j in 0..m {
            if i + j > 0 {
                kgrid[i * m + j] = image_sum(FreeKernel::BiotSavart, &[i as f64 / m as f64, j as f64 / m as f64], 30).unwrap();
            }
        }
    }
    let om = |i: usize, j: usize| (2.0 * PI * (k0[0] as f64 * i as f64 + k0[1] as f64 * j as f64) / m as f64).cos();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let (a, b) = (rng.random_range(0..m), rng.random_range(0..m));
        let mut q = [0.0; 2];
        for i in 0..m {
            for j in 0..m {
                let kk = kgrid[((a + m - i) % m) * m + (b + m - j) % m];
                let w = om(i, j) - om(a, b);
                q[0] += kk[0] * w;
                q[1] += kk[1] * w;
            }
        }
        let x = [a as f64 / m as f64, b as f64 / m as f64];
        for c in 0..2 {
            let spec = vel[c].eval(&x).re;
            let quad = q[c] / (m * m) as f64;
            assert!((spec - quad).abs() < 1e-4, "component {c}: {spec} vs {quad}");
        }
    }
}

#[test]
fn ewald_kernel_agrees_with_corrected_image_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases = [
        (DriftModel::biot_savart(lat(2, 2)).unwrap(), FreeKernel::BiotSavart, 30, 1e-4),
        (DriftModel::coulomb(lat(2, 2)).unwrap(), FreeKernel::Coulomb2, 30, 1e-3),
        (DriftModel::coulomb(lat(3, 2)).unwrap(), FreeKernel::Coulomb3, 8, 1e-2),
    ];
    for (model, free, radius, tol) in cases {
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
            let a = model.kernel(&x).unwrap();
            let b = image_sum(free, &x, radius).unwrap();
            let err = norm(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]]);
            assert!(err < tol, "{free:?} at {x:?}: {err}");
        }
    }
}

#[test]
fn short_range_oracles_fix_signs_and_normalization() {
    let r = [0.006, -0.008];
    let base = [0.3, 0.6];
    let pos = [base[0] + r[0], base[1] + r[1], base[0], base[1]];
    let r2 = r[0] * r[0] + r[1] * r[1];
    let bs_expect = [0.5 / (2.0 * PI) * -r[1] / r2, 0.5 / (2.0 * PI) * r[0] / r2];
    let co_expect = [0.5 * r[0] / r2, 0.5 * r[1] / r2];
    for period in [Periodization::Ewald, Periodization::ImageSum { radius: 30 }] {
        let bs = DriftModel::biot_savart(lat(2, 2)).unwrap().with_periodization(period);
        let v = bs.drift_at_particles(&pos, 0.0).unwrap();
        for a in 0..2 {
            assert!((v[a] - bs_expect[a]).abs() < 1e-3 * norm(&bs_expect));
            assert!((v[2 + a] + v[a]).abs() < 1e-12);
        }
        assert!((v[0] * r[0] + v[1] * r[1]).abs() < 1e-3 * norm(&v[..2]) * norm(&r));
        let co = DriftModel::coulomb(lat(2, 2)).unwrap().with_periodization(period);
        let v = co.drift_at_particles(&pos, 0.0).unwrap();
        for a in 0..2 {
            assert!((v[a] - co_expect[a]).abs() < 1e-3 * norm(&co_expect));
        }
    }
    let p3 = [0.31, 0.5, 0.52, 0.3, 0.5, 0.5];
    let co3 = DriftModel::coulomb(lat(3, 2)).unwrap();
    let v = co3.drift_at_particles(&p3, 0.0).unwrap();
    let d = [0.01, 0.0, 0.02];
    let r3 = norm(&d).powi(3);
    for a in 0..3 {
        assert!((v[a] - 0.5 * d[a] / r3).abs() < 1e-3 * 0.5 / norm(&d).powi(2));
    }
}

#[test]
fn single_particle_has_zero_velocity() {
    for model in [
        DriftModel::sine1d(lat(1, 3), 2.0).unwrap(),
        DriftModel::biot_savart(lat(2, 3)).unwrap(),
        DriftModel::coulomb(lat(3, 3)).unwrap(),
    ] {
        let d = model.d();
        let v = model.drift_at_particles(&vec![0.3; d], 0.0).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn sine_kernel_two_particle_closed_form() {
    let model = DriftModel::sine1d(lat(2, 2), 1.0).unwrap();
    let (x, y) = ([0.13, 0.4], [0.71, 0.9]);
    let v = model.drift_at_particles(&[x[0], x[1], y[0], y[1]], 0.0).unwrap();
    let expect = -0.5 * (2.0 * PI * (x[0] - y[0])).sin();
    assert!((v[0] - expect).abs() < 1e-14);
    assert!(v[1].abs() < 1e-15);
    assert!((v[2] + expect).abs() < 1e-14);
}

#[test]
fn smooth_fast_drift_matches_pairwise_kernel_sum() {
    let model = DriftModel::gauss_reg(lat(2, 5), 0.7, 0.12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pos: Vec<f64> = (0..2 * 17).map(|_| rng.random::<f64>()).collect();
    let v = model.drift_at_particles(&pos, 0.0).unwrap();
    for i in 0..17 {
        let mut acc = [0.0; 2];
        for j in 0..17 {
            if i != j {
                let k = model.flat_derivative(&pos[2 * i..2 * i + 2], &pos[2 * j..2 * j + 2]).unwrap();
                acc[0] += k[0] / 17.0;
                acc[1] += k[1] / 17.0;
            }
        }
        assert!((acc[0] - v[2 * i]).abs() < 1e-12 && (acc[1] - v[2 * i + 1]).abs() < 1e-12);
    }
}

#[test]
fn unscaled_normalization_drops_the_mean_field_factor() {
    let pos = [0.1, 0.2, 0.5, 0.55, 0.8, 0.15];
    let a = DriftModel::coulomb(lat(2, 2)).unwrap();
    let b = a.clone().with_normalization(Normalization::Unscaled);
    let va = a.drift_at_particles(&pos, 0.0).unwrap();
    let vb = b.drift_at_particles(&pos, 0.0).unwrap();
    for (x, y) in va.iter().zip(&vb) {
        assert!((3.0 * x - y).abs() < 1e-12 * y.abs().max(1.0));
    }
}

#[test]
fn collisions_name_the_pair_unless_capped() {
    let pos = [0.1, 0.2, 0.4, 0.4, 0.1, 0.2];
    let bs = DriftModel::biot_savart(lat(2, 2)).unwrap();
    match bs.drift_at_particles(&pos, 0.0) {
        Err(Error::Singularity { i, j, .. }) => assert_eq!((i, j), (0, 2)),
        other => panic!("expected singularity, got {other:?}"),
    }
    assert!(bs.flat_derivative(&[0.3, 0.3], &[0.3, 0.3]).is_err());
    let capped = bs.with_cap(Some(1e-3));
    let v = capped.drift_at_particles(&pos, 0.0).unwrap();
    assert!(v.iter().all(|x| x.is_finite()));
    let near = [0.1, 0.2, 0.1 + 1e-9, 0.2];
    let v = capped.drift_at_particles(&near, 0.0).unwrap();
    // Only the short-range part is capped; the smooth remainder is O(r).
    assert!(norm(&v[..2]) <= 0.5 * 1e3 * (1.0 + 1e-9));
}

#[test]
fn smooth_flat_derivative_at_coincidence_is_finite() {
    let model = DriftModel::gauss_reg(lat(1, 4), 1.0, 0.1).unwrap();
    let k = model.flat_derivative(&[0.3], &[0.3]).unwrap();
    assert!(k[0].is_finite());
}

#[test]
fn spectral_drift_matches_flat_derivative_quadrature() {
    let l = lat(2, 3);
    let model = DriftModel::gauss_reg(l, 1.3, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut m = SpectralField::from_fn(l, |k| {
        let amp = 0.2 / (1.0 + norm2(k));
        Complex64::new(rng.random_range(-amp..amp), rng.random_range(-amp..amp))
    })
    .symmetrized();
    m.set(&[0, 0, 0], Complex64::new(1.0, 0.0)).unwrap();
    let vel = model.velocity_field(&m);
    let q = 24usize;
    let mut grid = Vec::new();
    for i in 0..q {
        for j in 0..q {
            let y = [i as f64 / q as f64, j as f64 / q as f64];
            grid.push((y, m.eval(&y).re));
        }
    }
    for _ in 0..5 {
        let x = [rng.random::<f64>(), rng.random::<f64>()];
        let mut acc = [0.0; 2];
        for (y, w) in &grid {
            let k = model.flat_derivative(&x, y).unwrap();
            acc[0] += k[0] * w;
            acc[1] += k[1] * w;
        }
        for a in 0..2 {
            let quad = acc[a] / (q * q) as f64;
            assert!((quad - vel[a].eval(&x).re).abs() < 1e-6);
        }
    }
}

#[test]
fn momentum_is_conserved_for_antisymmetric_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for model in [
        DriftModel::biot_savart(lat(2, 2)).unwrap(),
        DriftModel::coulomb(lat(2, 2)).unwrap(),
        DriftModel::coulomb(lat(3, 2)).unwrap(),
    ] {
        let d = model.d();
        let pos: Vec<f64> = (0..50 * d).map(|_| rng.random::<f64>()).collect();
        let v = model.drift_at_particles(&pos, 0.0).unwrap();
        for a in 0..d {
            let total: f64 = (0..50).map(|i| v[i * d + a]).sum();
            assert!(total.abs() < 1e-10, "{}: {total}", model.name());
        }
    }
}

#[test]
fn smooth_table_must_be_hermitian() {
    let bad = DriftModel::smooth(
        "bad",
        lat(1, 2),
        vec![([1, 0, 0], vec![Complex64::new(0.0, 1.0)])],
    );
    assert!(matches!(bad, Err(Error::Domain(_))));
    assert!(DriftModel::biot_savart(lat(3, 2)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn singular_kernels_are_odd(x0 in -0.5f64..0.5, x1 in -0.5f64..0.5, x2 in -0.5f64..0.5) {
        prop_assume!(x0.abs() + x1.abs() > 1e-3);
        for model in [DriftModel::biot_savart(lat(2, 2)).unwrap(), DriftModel::coulomb(lat(2, 2)).unwrap(), DriftModel::coulomb(lat(3, 2)).unwrap()] {
            let a = model.flat_derivative(&[x0, x1, x2], &[0.0, 0.0, 0.0]).unwrap();
            let b = model.flat_derivative(&[0.0, 0.0, 0.0], &[x0, x1, x2]).unwrap();
            for c in 0..3 {
                prop_assert!((a[c] + b[c]).abs() <= 1e-12 * (1.0 + a[c].abs()));
            }
        }
    }

    #[test]
    fn image_sum_is_odd(x0 in -0.49f64..0.49, x1 in -0.49f64..0.49) {
        prop_assume!(x0.abs() + x1.abs() > 1e-3);
        let a = image_sum(FreeKernel::BiotSavart, &[x0, x1], 12).unwrap();
        let b = image_sum(FreeKernel::BiotSavart, &[-x0, -x1], 12).unwrap();
        prop_assert!((a[0] + b[0]).abs() < 1e-12 && (a[1] + b[1]).abs() < 1e-12);
    }
}
