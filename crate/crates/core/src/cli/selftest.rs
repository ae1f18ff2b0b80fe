//! Fast deterministic checks of every module, run by `fluctlab selftest`.

use crate::experiments::{fit_rate, modulated_energy, WeakErrorRow};
use crate::functionals::{cosine, generator_spde, CylindricalFunctional, Outer};
use crate::kernels::{ewald::PeriodicGreen, DriftModel};
use crate::meanfield::{solve_fp, FpOptions, MuCurve};
use crate::particles::{fluctuation_field, step_em, ParticleEnsemble};
use crate::spde::{apply_a, apply_a_n, SpdeSolver};
use crate::spectral::{embed_empirical, sobolev_inner, GridPlan, Lattice, SpectralField};
use crate::stats::MeanSe;
use crate::{Complex64, Error, Result};

use super::config::parse_config_str;

pub struct CheckOutcome {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = (&'static str, &'static str, fn() -> Result<f64>);

fn lat(d: usize, kmax: usize) -> Lattice {
    Lattice::new(d, kmax).expect("valid lattice")
}

fn mode_field(l: Lattice, k: [i64; 3]) -> SpectralField {
    let mut f = SpectralField::zeros(l);
    f.set(&k, Complex64::new(1.0, 0.0)).expect("mode on lattice");
    f
}

fn max_abs(a: &SpectralField, b: &SpectralField) -> f64 {
    a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn cos_density(l: Lattice, amp: f64) -> SpectralField {
    let mut mu = SpectralField::uniform(l);
    mu.axpy(Complex64::new(amp, 0.0), &cosine(l, &[1, 0, 0]).expect("mode on lattice"));
    mu
}

// Each check returns its residual; the caller compares it with the tolerance.
const CHECKS: &[Check] = &[
    ("spectral", "sobolev inner of c_(1,0) at s = -1 is 1/2", || {
        let f = mode_field(lat(2, 2), [1, 0, 0]);
        Ok((sobolev_inner(&f, &f, -1.0)?.re - 0.5).abs())
    }),
    ("spectral", "point at the origin embeds to c_k = 1", || {
        let f = embed_empirical(&[0.0], lat(1, 6))?;
        Ok(f.coeffs().iter().map(|c| (c - Complex64::new(1.0, 0.0)).norm()).fold(0.0, f64::max))
    }),
    ("spectral", "c_1 = c_-1 = 1/2 samples cos(2 pi x)", || {
        let l = lat(1, 4);
        let f = cosine(l, &[1, 0, 0])?;
        let plan = GridPlan::new(l, 16)?;
        let g = plan.to_grid(&f);
        Ok((0..16).map(|i| (g[i].re - (2.0 * std::f64::consts::PI * plan.point(i)[0]).cos()).abs()).fold(0.0, f64::max))
    }),
    ("kernels", "Biot-Savart multiplier is orthogonal to k", || {
        let m = DriftModel::biot_savart(lat(2, 4))?.multiplier(&[1, 0, 0]);
        Ok((m[0] * 1.0).norm())
    }),
    ("kernels", "single particle feels no drift", || {
        let v = DriftModel::biot_savart(lat(2, 4))?.drift_at_particles(&[0.3, 0.7], 0.0)?;
        Ok(v.iter().map(|x| x.abs()).fold(0.0, f64::max))
    }),
    ("particles", "sigma = 0 with zero kernel leaves positions unchanged", || {
        let pos = vec![0.1, 0.4, 0.8];
        let mut ens = ParticleEnsemble::new(1, pos.clone(), 1, 0)?;
        step_em(&mut ens, &DriftModel::zero(lat(1, 4)), 0.01, 0.0)?;
        Ok(ens.positions().iter().zip(&pos).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }),
    ("particles", "one particle at the origin against uniform mu", || {
        let l = lat(1, 4);
        let ens = ParticleEnsemble::new(1, vec![0.0], 1, 0)?;
        let rho = fluctuation_field(&ens, &SpectralField::uniform(l))?;
        Ok(l.modes()
            .map(|k| {
                let want = if k[0] == 0 { 0.0 } else { 1.0 };
                (rho.get(&k).expect("on lattice") - Complex64::new(want, 0.0)).norm()
            })
            .fold(0.0, f64::max))
    }),
    ("meanfield", "heat flow c_1 = 0.25 exp(-2 pi^2 t)", || {
        let mu0 = cos_density(lat(1, 8), 0.5);
        let curve = solve_fp(&mu0, &DriftModel::zero(lat(1, 8)), 1.0, &[0.0, 0.1], &FpOptions::new(0.1))?;
        let want = 0.25 * (-2.0 * std::f64::consts::PI.powi(2) * 0.1).exp();
        Ok((curve.last().get(&[1, 0, 0]).expect("on lattice").re - want).abs() / want)
    }),
    ("meanfield", "uniform density is a Biot-Savart fixed point", || {
        let l = lat(2, 6);
        let mu0 = SpectralField::uniform(l);
        let curve = solve_fp(&mu0, &DriftModel::biot_savart(l)?, 1.0, &[0.0, 0.05], &FpOptions::new(0.01))?;
        Ok(max_abs(curve.last(), &mu0))
    }),
    ("spde", "zero-kernel drift is diffusion", || {
        let l = lat(1, 6);
        let mu = SpectralField::uniform(l);
        let f = cosine(l, &[3, 0, 0])?;
        let af = apply_a(&f, &mu, &DriftModel::zero(l), 1.0)?;
        let want = f.scaled(-0.5 * (2.0 * std::f64::consts::PI * 3.0).powi(2));
        Ok(max_abs(&af, &want) / want.get(&[3, 0, 0]).expect("on lattice").norm())
    }),
    ("spde", "mollified drift equals the plain one beyond bandwidth", || {
        let l = lat(1, 6);
        let model = DriftModel::sine1d(l, 1.0)?;
        let mu = cos_density(l, 0.3);
        let f = cosine(l, &[2, 0, 0])?;
        Ok(max_abs(&apply_a_n(&f, 1000, &mu, &model, 1.0)?, &apply_a(&f, &mu, &model, 1.0)?))
    }),
    ("spde", "flow over an empty interval is the identity", || {
        let l = lat(1, 6);
        let model = DriftModel::sine1d(l, 1.0)?;
        let curve = MuCurve::constant(cos_density(l, 0.3), 1.0, "sine1d")?;
        let solver = SpdeSolver::new(&model, &curve, 1000, 6)?;
        let h = cosine(l, &[1, 0, 0])?;
        Ok(max_abs(&solver.linear_flow(&h, 0.0, 0.0, 0.01)?, &h))
    }),
    ("functionals", "gauss bump at f = 0 is g(0)", || {
        let l = lat(1, 4);
        let phi = CylindricalFunctional::new(
            vec![cosine(l, &[1, 0, 0])?],
            Outer::GaussBump { center: vec![0.0], width: 1.0 },
            -4.0,
        )?;
        Ok((phi.eval(&SpectralField::zeros(l))? - 1.0).abs())
    }),
    ("functionals", "linear generator vanishes at f = 0", || {
        let l = lat(1, 6);
        let model = DriftModel::sine1d(l, 1.0)?;
        let curve = MuCurve::constant(cos_density(l, 0.3), 1.0, "sine1d")?;
        let solver = SpdeSolver::new(&model, &curve, 1000, 6)?;
        let phi = CylindricalFunctional::new(vec![cosine(l, &[1, 0, 0])?], Outer::Linear { coef: vec![1.0] }, -4.0)?;
        let g = generator_spde(&phi, &SpectralField::zeros(l), 0.0, 1000, solver.operator_at(0.0), solver.noise())?;
        Ok(g.value.abs())
    }),
    ("experiments", "slope of exact c/sqrt(N) rows", || {
        let rows: Vec<WeakErrorRow> = [64usize, 128, 256, 512]
            .iter()
            .map(|&n| {
                let p = MeanSe { mean: 3.0 / (n as f64).sqrt(), se: 1e-9, n: 100 };
                WeakErrorRow::from_estimates(n, p, MeanSe { mean: 0.0, se: 1e-9, n: 100 })
            })
            .collect();
        Ok((fit_rate(&rows)?.slope + 0.5).abs())
    }),
    ("experiments", "uniform modulated energy is the pair sum", || {
        let l = lat(2, 4);
        let points = [0.1, 0.2, 0.6, 0.7, 0.35, 0.9];
        let f = modulated_energy(&points, &SpectralField::uniform(l), &DriftModel::coulomb(l)?, 1.0)?;
        let green = PeriodicGreen::standard(2);
        let want = green.pair_sum(&points).ok_or_else(|| Error::Consistency {
            op: "selftest",
            detail: "coincident points".into(),
        })? / 9.0;
        Ok((f - want).abs())
    }),
    ("cli", "minimal config fills lambda = 2", || {
        let cfg = parse_config_str("[run]\ndimension = 1\n", &[])?;
        Ok((cfg.run.lambda.unwrap_or(f64::NAN) - 2.0).abs())
    }),
    ("cli", "lambda = 1.4 is rejected", || match parse_config_str("[run]\nlambda = 1.4\n", &[]) {
        Err(Error::Config(v)) if v.iter().any(|m| m.contains("lambda > 1.5*d")) => Ok(0.0),
        _ => Ok(1.0),
    }),
];

pub const TOLERANCE: f64 = 1e-10;

pub fn run_selftest() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(module, name, check)| match check() {
            Ok(r) => CheckOutcome { module, name, passed: r <= TOLERANCE, detail: format!("residual {r:.3e}") },
            Err(e) => CheckOutcome { module, name, passed: false, detail: e.to_string() },
        })
        .collect()
}
