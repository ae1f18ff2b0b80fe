//! Monte-Carlo orchestration: weak-error curves against N, rate fits, CLT
//! baselines, generator cross-checks, refinement ladders and the Coulomb
//! modulated energy.
//!
//! Replicas run on the ambient rayon pool. Every replica draws from its own
//! counter-based streams and results are collected in replica order, so the
//! numbers do not depend on the thread count.

mod energy;
mod report;

pub use energy::{energy_decay, modulated_energy, EnergyReport, EnergyRow};
pub use report::{content_hash, rows_to_csv, rows_to_dat, Manifest};

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::functionals::{generator_particle, generator_spde, CylindricalFunctional};
use crate::kernels::DriftModel;
use crate::meanfield::{solve_fp, FpOptions, MuCurve, PositivityMode};
use crate::particles::{fluctuation_field, sample_initial, step_em, ParticleEnsemble};
use crate::rng::{stream, Purpose};
use crate::spde::{sample_rho0, GalerkinState, Rho0Mode, SpdeSolver};
use crate::spectral::{pairing, GridPlan, SpectralField};
use crate::stats::{mean_se, ols, quantile, variance_se, MeanSe};
use crate::{Error, Result};

/// Everything both sides of a weak-error comparison share.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub model: DriftModel,
    pub sigma: f64,
    pub mu0: SpectralField,
    pub t_final: f64,
    pub dt: f64,
    pub n_mollify: usize,
    pub l_noise: usize,
    pub rho0: Rho0Mode,
    pub positivity: PositivityMode,
    pub sqrt_kmax: Option<usize>,
    pub seed: u64,
}

impl Scenario {
    /// Defaults: identity mollification, noise resolving the lattice, CLT `ρ_0`.
    pub fn new(model: DriftModel, sigma: f64, mu0: SpectralField, t_final: f64, dt: f64, seed: u64) -> Self {
        let kmax = model.lattice().kmax();
        Scenario {
            n_mollify: crate::spectral::identity_level(model.lattice()),
            l_noise: kmax,
            model,
            sigma,
            mu0,
            t_final,
            dt,
            rho0: Rho0Mode::Clt,
            positivity: PositivityMode::Error,
            sqrt_kmax: None,
            seed,
        }
    }

    /// Number of steps to `t_final`; `dt` must divide it up to round-off.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.t_final >= self.dt) {
            return Err(Error::Domain(format!("need 0 < dt ≤ t_final, got dt={} t_final={}", self.dt, self.t_final)));
        }
        let r = self.t_final / self.dt;
        if (r - r.round()).abs() > 1e-9 * r {
            return Err(Error::Domain(format!("t_final = {} is not a multiple of dt = {}", self.t_final, self.dt)));
        }
        Ok(r.round() as usize)
    }

    fn step_times(&self, steps: usize) -> Vec<f64> {
        (0..=steps).map(|i| i as f64 * self.dt).collect()
    }

    /// Limit curve tabulated at every step time.
    pub fn mu_curve(&self) -> Result<MuCurve> {
        let steps = self.steps()?;
        let opts = FpOptions { positivity: self.positivity, sqrt_kmax: self.sqrt_kmax, ..FpOptions::new(self.dt) };
        solve_fp(&self.mu0, &self.model, self.sigma, &self.step_times(steps), &opts)
    }

    pub fn spde_solver(&self, curve: &MuCurve) -> Result<SpdeSolver> {
        SpdeSolver::new(&self.model, curve, self.n_mollify, self.l_noise)
    }

    fn particle_label(n: usize, replica: usize) -> u64 {
        ((n as u64) << 32) | replica as u64
    }

    /// Runs one particle replica, calling `observe` after the steps listed in
    /// `checkpoints` (0 means the initial state).
    pub fn particle_replica<T>(
        &self,
        n: usize,
        replica: usize,
        checkpoints: &[usize],
        mut observe: impl FnMut(&ParticleEnsemble, usize) -> Result<T>,
    ) -> Result<Vec<T>> {
        let mut ens = sample_initial(&self.mu0, n, self.seed, Self::particle_label(n, replica))?;
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut done = 0;
        for &c in checkpoints {
            while done < c {
                step_em(&mut ens, &self.model, self.dt, self.sigma)?;
                done += 1;
            }
            out.push(observe(&ens, c)?);
        }
        Ok(out)
    }

    /// Runs one SPDE replica with the same checkpoint convention.
    pub fn spde_replica<T>(
        &self,
        solver: &SpdeSolver,
        curve: &MuCurve,
        replica: usize,
        checkpoints: &[usize],
        mut observe: impl FnMut(&GalerkinState, usize) -> Result<T>,
    ) -> Result<Vec<T>> {
        let mut init = stream(self.seed, Purpose::SpdeInitial, replica as u64, 0);
        let rho0 = sample_rho0(self.rho0, &curve.states()[0], &curve.sqrt_states()[0], &mut init)?;
        let mut state = solver.initial_state(rho0);
        let mut rng = stream(self.seed, Purpose::SpdeNoise, replica as u64, 0);
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut done = 0;
        for &c in checkpoints {
            while done < c {
                solver.step(&mut state, self.dt, &mut rng)?;
                done += 1;
            }
            out.push(observe(&state, c)?);
        }
        Ok(out)
    }

    /// `Φ(ρ^N_T)` for replicas `0..replicas`.
    pub fn particle_samples(
        &self,
        curve: &MuCurve,
        n: usize,
        replicas: usize,
        obs: &(dyn Fn(&SpectralField) -> Result<f64> + Sync),
    ) -> Result<Vec<f64>> {
        let steps = self.steps()?;
        let mu_t = curve.mu_at(self.t_final);
        par_replicas(replicas, |r| {
            let v = self.particle_replica(n, r, &[steps], |ens, _| obs(&fluctuation_field(ens, mu_t)?))?;
            Ok(v[0])
        })
    }

    /// `Φ(ρ_T)` for SPDE replicas `0..replicas`.
    pub fn spde_samples(
        &self,
        solver: &SpdeSolver,
        curve: &MuCurve,
        replicas: usize,
        obs: &(dyn Fn(&SpectralField) -> Result<f64> + Sync),
    ) -> Result<Vec<f64>> {
        let steps = self.steps()?;
        par_replicas(replicas, |r| {
            let v = self.spde_replica(solver, curve, r, &[steps], |s, _| obs(&s.rho))?;
            Ok(v[0])
        })
    }
}

/// Maps replicas in parallel and returns results in replica order.
pub fn par_replicas<T: Send>(replicas: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..replicas).into_par_iter().map(f).collect()
}

/// One N of a weak-error curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakErrorRow {
    pub n: usize,
    pub est_p: f64,
    pub se_p: f64,
    pub est_s: f64,
    pub se_s: f64,
    pub gap: f64,
    pub gap_se: f64,
    pub replicas: usize,
    pub spde_replicas: usize,
    /// `|gap| > 2·gap_se`; other rows stay out of rate fits.
    pub resolved: bool,
}

impl WeakErrorRow {
    pub fn from_estimates(n: usize, p: MeanSe, s: MeanSe) -> Self {
        let gap = p.mean - s.mean;
        let gap_se = p.se.hypot(s.se);
        WeakErrorRow {
            n,
            est_p: p.mean,
            se_p: p.se,
            est_s: s.mean,
            se_s: s.se,
            gap,
            gap_se,
            replicas: p.n,
            spde_replicas: s.n,
            resolved: gap.abs() > 2.0 * gap_se,
        }
    }
}

/// Weak-error curve with the per-replica samples behind it.
#[derive(Clone, Debug)]
pub struct WeakErrorCurve {
    pub rows: Vec<WeakErrorRow>,
    pub particle: Vec<Vec<f64>>,
    /// Shared by every row: the SPDE side does not depend on N.
    pub spde: Vec<f64>,
}

/// Particle-side `E Φ(ρ^N_T)` for each N against one SPDE pool.
pub fn weak_error_curve(
    scenario: &Scenario,
    phi: &CylindricalFunctional,
    ns: &[usize],
    replicas: usize,
    spde_replicas: usize,
) -> Result<WeakErrorCurve> {
    if ns.is_empty() || ns.contains(&0) || replicas < 2 || spde_replicas < 2 {
        return Err(Error::Domain("need at least one N ≥ 1 and two replicas per side".into()));
    }
    let curve = scenario.mu_curve()?;
    let solver = scenario.spde_solver(&curve)?;
    let obs = |f: &SpectralField| phi.eval(f);
    let spde = scenario.spde_samples(&solver, &curve, spde_replicas, &obs)?;
    let s = mean_se(&spde);
    let mut rows = Vec::with_capacity(ns.len());
    let mut particle = Vec::with_capacity(ns.len());
    for &n in ns {
        let xs = scenario.particle_samples(&curve, n, replicas, &obs)?;
        rows.push(WeakErrorRow::from_estimates(n, mean_se(&xs), s));
        particle.push(xs);
    }
    Ok(WeakErrorCurve { rows, particle, spde })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// 95% percentile interval; `None` without replica samples.
    pub slope_ci: Option<(f64, f64)>,
    /// N values that entered the fit.
    pub used: Vec<usize>,
}

fn loglog(points: &[(usize, f64)]) -> (f64, f64, f64) {
    let x: Vec<f64> = points.iter().map(|(n, _)| (*n as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|(_, g)| g.abs().ln()).collect();
    ols(&x, &y)
}

/// OLS of `log|gap|` on `log N` over the resolved rows.
pub fn fit_rate(rows: &[WeakErrorRow]) -> Result<RateFit> {
    let usable: Vec<(usize, f64)> = rows.iter().filter(|r| r.resolved).map(|r| (r.n, r.gap)).collect();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} of {} rows clear 2·SE; a rate fit needs 3",
            usable.len(),
            rows.len()
        )));
    }
    let (slope, intercept, r2) = loglog(&usable);
    Ok(RateFit { slope, intercept, r2, slope_ci: None, used: usable.iter().map(|u| u.0).collect() })
}

/// [`fit_rate`] plus a percentile bootstrap over replicas: each resample
/// redraws every row's particle samples and the shared SPDE pool.
pub fn fit_rate_bootstrap(curve: &WeakErrorCurve, resamples: usize, seed: u64) -> Result<RateFit> {
    let mut fit = fit_rate(&curve.rows)?;
    let rows: Vec<usize> = (0..curve.rows.len()).filter(|&i| curve.rows[i].resolved).collect();
    let resample_mean = |xs: &[f64], rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        (0..xs.len()).map(|_| *xs.choose(rng).expect("non-empty")).sum::<f64>() / xs.len() as f64
    };
    let slopes: Vec<f64> = par_replicas(resamples, |b| {
        let mut rng = stream(seed, Purpose::Bootstrap, b as u64, 0);
        let s = resample_mean(&curve.spde, &mut rng);
        let pts: Vec<(usize, f64)> = rows
            .iter()
            .map(|&i| (curve.rows[i].n, resample_mean(&curve.particle[i], &mut rng) - s))
            .collect();
        Ok(loglog(&pts).0)
    })?;
    let mut sorted: Vec<f64> = slopes.into_iter().filter(|s| s.is_finite()).collect();
    if sorted.len() < 2 {
        return Err(Error::InsufficientData("bootstrap produced no finite slopes".into()));
    }
    sorted.sort_by(f64::total_cmp);
    fit.slope_ci = Some((quantile(&sorted, 0.025), quantile(&sorted, 0.975)));
    Ok(fit)
}

/// Variance of `⟨ρ, φ⟩` on one side against the i.i.d. value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceRow {
    pub side: String,
    pub n: Option<usize>,
    pub variance: f64,
    pub se: f64,
    pub z: f64,
    pub replicas: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CltReport {
    /// `Var_{μ_T}(φ)` by grid quadrature.
    pub reference: f64,
    pub rows: Vec<VarianceRow>,
}

impl CltReport {
    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max)
    }
}

/// `∫ φ² dμ − (∫ φ dμ)²` on a grid that integrates the product exactly.
pub fn iid_variance(mu: &SpectralField, phi: &SpectralField) -> Result<f64> {
    let phi = phi.resized(mu.lattice())?;
    let plan = GridPlan::dealiased(mu.lattice());
    let mean = pairing(mu, &phi)?.re;
    let second = pairing(mu, &plan.product(&phi, &phi))?.re;
    Ok(second - mean * mean)
}

/// Zero-drift check that both fluctuation variances equal the i.i.d. value.
pub fn clt_baseline(
    scenario: &Scenario,
    phi: &SpectralField,
    ns: &[usize],
    replicas: usize,
    spde_replicas: usize,
) -> Result<CltReport> {
    if !scenario.model.is_zero() {
        return Err(Error::Domain("the CLT baseline needs the zero drift".into()));
    }
    if !phi.is_real(1e-12) {
        return Err(Error::Domain("test function must be real".into()));
    }
    let curve = scenario.mu_curve()?;
    let reference = iid_variance(curve.mu_at(scenario.t_final), phi)?;
    let obs = |f: &SpectralField| Ok(pairing(f, &phi.resized(f.lattice())?)?.re);
    let row = |side: &str, n: Option<usize>, xs: &[f64]| {
        let v = variance_se(xs);
        VarianceRow { side: side.into(), n, variance: v.mean, se: v.se, z: (v.mean - reference) / v.se, replicas: xs.len() }
    };
    let mut rows = Vec::new();
    for &n in ns {
        rows.push(row("particle", Some(n), &scenario.particle_samples(&curve, n, replicas, &obs)?));
    }
    let solver = scenario.spde_solver(&curve)?;
    rows.push(row("spde", None, &scenario.spde_samples(&solver, &curve, spde_replicas, &obs)?));
    Ok(CltReport { reference, rows })
}

/// One rung of a refinement ladder.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementRow {
    pub kmax: usize,
    pub l_noise: usize,
    pub n_mollify: usize,
    pub dt: f64,
    pub mean: f64,
    pub se: f64,
    /// Change from the previous rung with its SE.
    pub diff: Option<f64>,
    pub diff_se: Option<f64>,
    /// The change did not shrink relative to the previous one.
    pub stall: bool,
}

/// `E Φ(ρ_T)` along a ladder of increasingly resolved SPDE discretizations.
pub fn refinement_study(levels: &[Scenario], phi: &CylindricalFunctional, spde_replicas: usize) -> Result<Vec<RefinementRow>> {
    let obs = |f: &SpectralField| phi.eval(f);
    let mut rows: Vec<RefinementRow> = Vec::with_capacity(levels.len());
    for sc in levels {
        let curve = sc.mu_curve()?;
        let solver = sc.spde_solver(&curve)?;
        let est = mean_se(&sc.spde_samples(&solver, &curve, spde_replicas, &obs)?);
        let (diff, diff_se) = match rows.last() {
            Some(p) => (Some(est.mean - p.mean), Some(est.se.hypot(p.se))),
            None => (None, None),
        };
        let stall = match (diff, rows.last().and_then(|p| p.diff)) {
            (Some(d), Some(pd)) => d.abs() >= pd.abs(),
            _ => false,
        };
        rows.push(RefinementRow {
            kmax: sc.model.lattice().kmax(),
            l_noise: sc.l_noise,
            n_mollify: sc.n_mollify,
            dt: sc.dt,
            mean: est.mean,
            se: est.se,
            diff,
            diff_se,
            stall,
        });
    }
    Ok(rows)
}

/// Time finite difference of `E Φ` against the expected generator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneratorCheck {
    pub t: f64,
    pub delta: f64,
    /// `(Φ(t+δ) − Φ(t))/δ`.
    pub fd: f64,
    pub fd_se: f64,
    pub generator: f64,
    pub generator_se: f64,
    /// Paired difference `fd − G(t)` and its SE.
    pub diff: f64,
    pub diff_se: f64,
    /// `|E G(t+δ) − E G(t)|`, the first-order-in-δ allowance.
    pub drift_band: f64,
    pub replicas: usize,
}

impl GeneratorCheck {
    fn from_samples(t: f64, delta: f64, samples: &[[f64; 4]]) -> Self {
        let col = |j: usize| samples.iter().map(|s| s[j]).collect::<Vec<f64>>();
        let (phi0, phi1, g0, g1) = (col(0), col(1), col(2), col(3));
        let fd: Vec<f64> = phi0.iter().zip(&phi1).map(|(a, b)| (b - a) / delta).collect();
        let d: Vec<f64> = fd.iter().zip(&g0).map(|(f, g)| f - g).collect();
        let (fd, g, d) = (mean_se(&fd), mean_se(&g0), mean_se(&d));
        GeneratorCheck {
            t,
            delta,
            fd: fd.mean,
            fd_se: fd.se,
            generator: g.mean,
            generator_se: g.se,
            diff: d.mean,
            diff_se: d.se,
            drift_band: (mean_se(&g1).mean - g.mean).abs(),
            replicas: samples.len(),
        }
    }

    /// Within `k` standard errors plus the first-order band.
    pub fn passes(&self, k: f64) -> bool {
        self.diff.abs() <= k * self.diff_se + self.drift_band
    }
}

fn checkpoints(scenario: &Scenario, t: f64, delta_steps: usize) -> Result<[usize; 2]> {
    let s0 = (t / scenario.dt).round() as usize;
    if delta_steps == 0 || (s0 + delta_steps) as f64 * scenario.dt > scenario.t_final * (1.0 + 1e-12) {
        return Err(Error::Domain("checkpoint window must fit inside [0, t_final]".into()));
    }
    Ok([s0, s0 + delta_steps])
}

/// Particle side: `Φ(ρ^N)` and the generator at `t` and `t + δ` per replica.
pub fn generator_check_particle(
    scenario: &Scenario,
    phi: &CylindricalFunctional,
    n: usize,
    t: f64,
    delta_steps: usize,
    replicas: usize,
) -> Result<GeneratorCheck> {
    let cps = checkpoints(scenario, t, delta_steps)?;
    let curve = scenario.mu_curve()?;
    let samples = par_replicas(replicas, |r| {
        let v = scenario.particle_replica(n, r, &cps, |ens, c| {
            let tc = c as f64 * scenario.dt;
            let mu = curve.mu_at(tc);
            let val = phi.eval(&fluctuation_field(ens, mu)?)?;
            let g = generator_particle(phi, ens.positions(), mu, &scenario.model, scenario.sigma)?;
            Ok((val, g.value))
        })?;
        Ok([v[0].0, v[1].0, v[0].1, v[1].1])
    })?;
    Ok(GeneratorCheck::from_samples(cps[0] as f64 * scenario.dt, delta_steps as f64 * scenario.dt, &samples))
}

/// SPDE side of the same check with `generator_spde`.
pub fn generator_check_spde(
    scenario: &Scenario,
    phi: &CylindricalFunctional,
    t: f64,
    delta_steps: usize,
    replicas: usize,
) -> Result<GeneratorCheck> {
    let cps = checkpoints(scenario, t, delta_steps)?;
    let curve = scenario.mu_curve()?;
    let solver = scenario.spde_solver(&curve)?;
    let samples = par_replicas(replicas, |r| {
        let v = scenario.spde_replica(&solver, &curve, r, &cps, |s, c| {
            let tc = c as f64 * scenario.dt;
            let g = generator_spde(phi, &s.rho, tc, solver.n_mollify(), solver.operator_at(tc), solver.noise())?;
            Ok((phi.eval(&s.rho)?, g.value))
        })?;
        Ok([v[0].0, v[1].0, v[0].1, v[1].1])
    })?;
    Ok(GeneratorCheck::from_samples(cps[0] as f64 * scenario.dt, delta_steps as f64 * scenario.dt, &samples))
}

/// Uniform draws on `[0,1)^{n·d}` from the energy stream of one replica.
pub fn uniform_points(seed: u64, d: usize, n: usize, replica: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Energy, ((n as u64) << 32) | replica, 0);
    (0..n * d).map(|_| rng.random::<f64>()).collect()
}

#[cfg(test)]
mod tests;
