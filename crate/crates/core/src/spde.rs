//! Galerkin integrator for the linear fluctuation SPDE
//! `dρ = A_n(t, ρ) dt + Σ_j B_j(t) dW_j` on a truncated Fourier lattice.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::kernels::{positive, DriftModel};
use crate::meanfield::{check_finite, MuCurve};
use crate::spectral::{fast_size, mollifier_factor, norm2, pairing, GridPlan, Lattice, SpectralField};
use crate::{Complex64, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn i2pi(k: i64) -> Complex64 {
    Complex64::new(0.0, 2.0 * PI * k as f64)
}

fn only_zero_mode(f: &SpectralField) -> bool {
    let z = f.lattice().zero_index();
    f.coeffs().iter().enumerate().all(|(i, c)| i == z || *c == ZERO)
}

/// `A(t)` and `A'(t)` frozen at one density `μ_t`.
#[derive(Clone, Debug)]
pub struct DriftOperator {
    lattice: Lattice,
    sigma: f64,
    mu: SpectralField,
    mu_uniform: bool,
    /// `b = K*μ`, one field per axis.
    b: Vec<SpectralField>,
    b_zero: bool,
    /// `K̂(k)` per lattice index.
    mult: Vec<[Complex64; 3]>,
    plan: GridPlan,
}

impl DriftOperator {
    pub fn new(model: &DriftModel, sigma: f64, mu: &SpectralField) -> Result<Self> {
        let lattice = model.lattice();
        let mu = mu.resized(lattice)?;
        let b = model.velocity_field(&mu);
        let b_zero = b.iter().all(|f| f.coeffs().iter().all(|c| *c == ZERO));
        let mult = (0..lattice.len()).map(|i| model.multiplier(&lattice.mode(i))).collect();
        Ok(DriftOperator {
            lattice,
            sigma,
            mu_uniform: only_zero_mode(&mu),
            mu,
            b,
            b_zero,
            mult,
            plan: GridPlan::dealiased(lattice),
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn mu(&self) -> &SpectralField {
        &self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn times_mu(&self, f: &SpectralField) -> SpectralField {
        if self.mu_uniform {
            f.scaled(self.mu.c0().re)
        } else {
            self.plan.product(&self.mu, f)
        }
    }

    /// First-order part `−∇·(f b) − ∇·(μ (K*f))`.
    pub fn transport(&self, f: &SpectralField) -> SpectralField {
        let d = self.lattice.d();
        let mut out = SpectralField::zeros(self.lattice);
        let mut flux = SpectralField::zeros(self.lattice);
        for j in 0..d {
            flux.coeffs_mut().fill(ZERO);
            if !self.b_zero {
                flux.axpy(Complex64::new(1.0, 0.0), &self.plan.product(f, &self.b[j]));
            }
            let kf = SpectralField::from_coeffs(
                self.lattice,
                f.coeffs().iter().zip(&self.mult).map(|(c, m)| c * m[j]).collect(),
            )
            .expect("same lattice");
            flux.axpy(Complex64::new(1.0, 0.0), &self.times_mu(&kf));
            for (idx, o) in out.coeffs_mut().iter_mut().enumerate() {
                *o -= i2pi(self.lattice.mode(idx)[j]) * flux.coeffs()[idx];
            }
        }
        out
    }

    /// Decay rate `(σ²/2)(2π|k|)² j̃(k/n)²` of mode `idx` under `A_n`.
    pub fn diffusion_rate(&self, idx: usize, n: usize) -> f64 {
        let k = self.lattice.mode(idx);
        let j = mollifier_factor(&k, n);
        0.5 * self.sigma * self.sigma * 4.0 * PI * PI * norm2(&k) * j * j
    }

    /// `A f = −∇·(f b) − ∇·(μ (K*f)) + (σ²/2)Δf`.
    pub fn apply_a(&self, f: &SpectralField) -> SpectralField {
        let mut out = self.transport(f);
        out.axpy(Complex64::new(0.5 * self.sigma * self.sigma, 0.0), &f.laplacian());
        out
    }

    /// `A' φ = b·Dφ + ∫ K(x−·)·Dφ(x) μ(dx) + (σ²/2)Δφ`.
    pub fn apply_aprime(&self, phi: &SpectralField) -> SpectralField {
        let mut out = phi.laplacian().scaled(0.5 * self.sigma * self.sigma);
        let n = self.lattice.len();
        for j in 0..self.lattice.d() {
            let dphi = phi.derivative(j);
            if !self.b_zero {
                out.axpy(Complex64::new(1.0, 0.0), &self.plan.product(&self.b[j], &dphi));
            }
            let h = self.times_mu(&dphi);
            // Correlation with K: coefficient K̂_j(−k) c_k(h).
            for (idx, o) in out.coeffs_mut().iter_mut().enumerate() {
                *o += self.mult[n - 1 - idx][j] * h.coeffs()[idx];
            }
        }
        out
    }

    /// `A_n = j_n A j_n`; `n = 0` is the unmollified operator.
    pub fn apply_a_n(&self, f: &SpectralField, n: usize) -> SpectralField {
        mollified(&self.apply_a(&mollified(f, n)), n)
    }

    /// First-order part of `A_n`.
    pub fn transport_n(&self, f: &SpectralField, n: usize) -> SpectralField {
        mollified(&self.transport(&mollified(f, n)), n)
    }
}

fn mollified(f: &SpectralField, n: usize) -> SpectralField {
    crate::spectral::mollify(f, n)
}

fn same_lattice(f: &SpectralField, model: &DriftModel) -> Result<()> {
    if f.lattice() == model.lattice() {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "field lattice (d={}, kmax={}) differs from the model lattice (d={}, kmax={})",
            f.d(),
            f.kmax(),
            model.d(),
            model.lattice().kmax()
        )))
    }
}

pub fn apply_a(f: &SpectralField, mu: &SpectralField, model: &DriftModel, sigma: f64) -> Result<SpectralField> {
    same_lattice(f, model)?;
    Ok(DriftOperator::new(model, sigma, mu)?.apply_a(f))
}

pub fn apply_aprime(phi: &SpectralField, mu: &SpectralField, model: &DriftModel, sigma: f64) -> Result<SpectralField> {
    same_lattice(phi, model)?;
    Ok(DriftOperator::new(model, sigma, mu)?.apply_aprime(phi))
}

pub fn apply_a_n(f: &SpectralField, n: usize, mu: &SpectralField, model: &DriftModel, sigma: f64) -> Result<SpectralField> {
    Ok(apply_a(&mollified(f, n), mu, model, sigma)?.map(|k, c| c * mollifier_factor(k, n)))
}

/// Noise operators `B_j u = ∂_j(σ u √μ_t)` expanded in Fourier modes `|l|∞ ≤ L`.
#[derive(Clone, Debug)]
pub struct NoiseModel {
    sigma: f64,
    lattice: Lattice,
    noise_lattice: Lattice,
    times: Vec<f64>,
    sqrt_mu: Vec<SpectralField>,
    sqrt_grid: Vec<Option<Vec<Complex64>>>,
    in_plan: Option<GridPlan>,
    out_plan: Option<GridPlan>,
}

impl NoiseModel {
    /// `lattice` is the SPDE lattice, `l_noise` the per-axis noise cutoff.
    pub fn new(curve: &MuCurve, sigma: f64, lattice: Lattice, l_noise: usize) -> Result<Self> {
        let noise_lattice = Lattice::new(lattice.d(), l_noise)?;
        let sqrt_mu: Vec<SpectralField> = curve.sqrt_states().to_vec();
        let ks = sqrt_mu.iter().map(|s| s.kmax()).max().unwrap_or(0);
        let general = sqrt_mu.iter().any(|s| !only_zero_mode(s));
        let (in_plan, out_plan, sqrt_grid) = if general {
            let widest = lattice.kmax().max(l_noise).max(ks);
            let m = fast_size((lattice.kmax() + l_noise + ks + 1).max(2 * widest + 1));
            let s_grids = sqrt_mu
                .iter()
                .map(|s| {
                    if only_zero_mode(s) {
                        Ok(None)
                    } else {
                        GridPlan::new(s.lattice(), m).map(|p| Some(p.to_grid(s)))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            (Some(GridPlan::new(noise_lattice, m)?), Some(GridPlan::new(lattice, m)?), s_grids)
        } else {
            (None, None, vec![None; sqrt_mu.len()])
        };
        Ok(NoiseModel {
            sigma,
            lattice,
            noise_lattice,
            times: curve.times().to_vec(),
            sqrt_mu,
            sqrt_grid,
            in_plan,
            out_plan,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn l_noise(&self) -> usize {
        self.noise_lattice.kmax()
    }

    pub fn noise_lattice(&self) -> Lattice {
        self.noise_lattice
    }

    /// Scales the noise amplitude (0 switches the noise off).
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    fn index_at(&self, t: f64) -> usize {
        let slack = 1e-9 * (1.0 + t.abs());
        self.times.partition_point(|&s| s <= t + slack).saturating_sub(1)
    }

    pub fn sqrt_mu_at(&self, t: f64) -> &SpectralField {
        &self.sqrt_mu[self.index_at(t)]
    }

    /// Brownian increments `Δβ_{l,j}`, one field per axis, Hermitian in `l`.
    pub fn draw_increments(&self, dt: f64, rng: &mut impl Rng) -> Vec<SpectralField> {
        let nl = self.noise_lattice;
        let half = (dt / 2.0).sqrt();
        let full = dt.sqrt();
        let mut beta = vec![SpectralField::zeros(nl); nl.d()];
        for idx in 0..nl.len() {
            let l = nl.mode(idx);
            if idx == nl.zero_index() {
                for b in beta.iter_mut() {
                    let x: f64 = rng.sample(StandardNormal);
                    b.coeffs_mut()[idx] = Complex64::new(full * x, 0.0);
                }
            } else if positive(&l) {
                let neg = nl.neg_index(idx);
                for b in beta.iter_mut() {
                    let x: f64 = rng.sample(StandardNormal);
                    let y: f64 = rng.sample(StandardNormal);
                    let z = Complex64::new(half * x, half * y);
                    b.coeffs_mut()[idx] = z;
                    b.coeffs_mut()[neg] = z.conj();
                }
            }
        }
        beta
    }

    /// `c_k(Δζ) = σ Σ_j 2πi k_j Σ_l (√μ)^_{k−l} Δβ_{l,j}` for given increments.
    pub fn increment_from(&self, t: f64, beta: &[SpectralField]) -> SpectralField {
        let i = self.index_at(t);
        let lat = self.lattice;
        let mut out = SpectralField::zeros(lat);
        let s = &self.sqrt_mu[i];
        for (j, b) in beta.iter().enumerate() {
            let conv = match &self.sqrt_grid[i] {
                None => {
                    let c0 = s.c0();
                    SpectralField::from_fn(lat, |k| b.get(k).unwrap_or(ZERO) * c0)
                }
                Some(sg) => {
                    let (pin, pout) = (self.in_plan.as_ref().unwrap(), self.out_plan.as_ref().unwrap());
                    let mut g = pin.to_grid(b);
                    for (v, w) in g.iter_mut().zip(sg) {
                        *v *= w;
                    }
                    let mut conv = SpectralField::zeros(lat);
                    pout.from_grid_into(&mut g, &mut conv);
                    conv
                }
            };
            for (idx, o) in out.coeffs_mut().iter_mut().enumerate() {
                *o += self.sigma * i2pi(lat.mode(idx)[j]) * conv.coeffs()[idx];
            }
        }
        out.coeffs_mut()[lat.zero_index()] = ZERO;
        out
    }

    /// One Gaussian increment `Δζ` over `[t, t+dt]`.
    pub fn noise_increment(&self, t: f64, dt: f64, rng: &mut impl Rng) -> SpectralField {
        let beta = self.draw_increments(dt, rng);
        self.increment_from(t, &beta)
    }

    /// `c_k(B_j e_l)` for one noise mode, used by trace computations.
    pub fn apply_b(&self, t: f64, j: usize, l: &[i64; 3]) -> SpectralField {
        let s = self.sqrt_mu_at(t);
        SpectralField::from_fn(self.lattice, |k| {
            let diff = [k[0] - l[0], k[1] - l[1], k[2] - l[2]];
            self.sigma * i2pi(k[j]) * s.get(&diff).unwrap_or(ZERO)
        })
    }
}

/// Galerkin state `ρ^n_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinState {
    pub rho: SpectralField,
    pub t: f64,
    pub n_mollify: usize,
    pub l_noise: usize,
}

/// How `ρ_0` is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rho0Mode {
    Zero,
    /// Gaussian with the covariance `Var_{μ0}` of the i.i.d. central limit.
    #[default]
    Clt,
}

/// Draws `ρ_0`. The CLT mode builds `√μ0·ξ − μ0⟨√μ0, ξ⟩` from a truncated
/// white noise ξ, whose pairing with φ has variance `Var_{μ0}(φ)` exactly when
/// ξ resolves `√μ0·φ`.
pub fn sample_rho0(mode: Rho0Mode, mu0: &SpectralField, sqrt_mu0: &SpectralField, rng: &mut impl Rng) -> Result<SpectralField> {
    let lattice = mu0.lattice();
    if mode == Rho0Mode::Zero {
        return Ok(SpectralField::zeros(lattice));
    }
    let xi_lat = Lattice::new(lattice.d(), lattice.kmax() + sqrt_mu0.kmax())?;
    let mut xi = SpectralField::zeros(xi_lat);
    let h = 0.5f64.sqrt();
    for idx in 0..xi_lat.len() {
        let k = xi_lat.mode(idx);
        if idx == xi_lat.zero_index() {
            let x: f64 = rng.sample(StandardNormal);
            xi.coeffs_mut()[idx] = Complex64::new(x, 0.0);
        } else if positive(&k) {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(h * x, h * y);
            let neg = xi_lat.neg_index(idx);
            xi.coeffs_mut()[idx] = z;
            xi.coeffs_mut()[neg] = z.conj();
        }
    }
    let mut rho = if only_zero_mode(sqrt_mu0) {
        xi.resized(lattice)?.scaled(sqrt_mu0.c0().re)
    } else {
        let m = fast_size((xi_lat.kmax() + sqrt_mu0.kmax() + lattice.kmax() + 1).max(2 * xi_lat.kmax() + 1));
        let mut g = GridPlan::new(xi_lat, m)?.to_grid(&xi);
        for (v, w) in g.iter_mut().zip(GridPlan::new(sqrt_mu0.lattice(), m)?.to_grid(sqrt_mu0)) {
            *v *= w;
        }
        GridPlan::new(lattice, m)?.from_grid(&g)?
    };
    let proj = pairing(&xi, &sqrt_mu0.resized(xi_lat)?)?;
    rho.axpy(-proj, mu0);
    rho.coeffs_mut()[lattice.zero_index()] = ZERO;
    Ok(rho.symmetrized())
}

/// Time stepper for one `(model, μ curve, n, L)` configuration.
#[derive(Clone, Debug)]
pub struct SpdeSolver {
    lattice: Lattice,
    n: usize,
    times: Vec<f64>,
    ops: Vec<DriftOperator>,
    noise: NoiseModel,
}

impl SpdeSolver {
    pub fn new(model: &DriftModel, curve: &MuCurve, n_mollify: usize, l_noise: usize) -> Result<Self> {
        let lattice = model.lattice();
        let sigma = curve.sigma();
        let ops = curve
            .states()
            .iter()
            .map(|mu| DriftOperator::new(model, sigma, mu))
            .collect::<Result<Vec<_>>>()?;
        Ok(SpdeSolver {
            lattice,
            n: n_mollify,
            times: curve.times().to_vec(),
            ops,
            noise: NoiseModel::new(curve, sigma, lattice, l_noise)?,
        })
    }

    /// Rescales the noise (0 gives the deterministic linear flow).
    pub fn with_noise_sigma(mut self, sigma: f64) -> Self {
        self.noise = self.noise.with_sigma(sigma);
        self
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn n_mollify(&self) -> usize {
        self.n
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn operator_at(&self, t: f64) -> &DriftOperator {
        let slack = 1e-9 * (1.0 + t.abs());
        &self.ops[self.times.partition_point(|&s| s <= t + slack).saturating_sub(1)]
    }

    pub fn initial_state(&self, rho0: SpectralField) -> GalerkinState {
        GalerkinState { rho: rho0, t: 0.0, n_mollify: self.n, l_noise: self.noise.l_noise() }
    }

    /// Lawson–Euler step: `ρ' = e^{-a dt}(ρ + dt F_n ρ) + s_k Δζ_k` with
    /// `s_k = √((1 − e^{-2a dt})/(2a dt))`, which makes the per-mode
    /// Ornstein–Uhlenbeck variance exact when modes decouple.
    pub fn step_with(&self, state: &mut GalerkinState, dt: f64, dzeta: Option<&SpectralField>) -> Result<()> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        let op = self.operator_at(state.t);
        let mut next = state.rho.clone();
        next.axpy(Complex64::new(dt, 0.0), &op.transport_n(&state.rho, self.n));
        for (idx, c) in next.coeffs_mut().iter_mut().enumerate() {
            let a = op.diffusion_rate(idx, self.n);
            *c *= (-a * dt).exp();
            if let Some(z) = dzeta {
                let x = 2.0 * a * dt;
                let s = if x < 1e-12 { 1.0 } else { (-(-x).exp_m1() / x).sqrt() };
                *c += s * z.coeffs()[idx];
            }
        }
        next.coeffs_mut()[self.lattice.zero_index()] = ZERO;
        check_finite(&next, "spde::step_spde")?;
        state.rho = next;
        state.t += dt;
        Ok(())
    }

    pub fn step(&self, state: &mut GalerkinState, dt: f64, rng: &mut impl Rng) -> Result<()> {
        let dz = if self.noise.sigma() == 0.0 {
            None
        } else {
            Some(self.noise.noise_increment(state.t, dt, rng))
        };
        self.step_with(state, dt, dz.as_ref())
    }

    /// Integrates to `t_final` in `steps` equal steps.
    pub fn run(&self, state: &mut GalerkinState, t_final: f64, steps: usize, rng: &mut impl Rng) -> Result<()> {
        let dt = (t_final - state.t) / steps as f64;
        for _ in 0..steps {
            self.step(state, dt, rng)?;
        }
        Ok(())
    }

    /// `Y_{s,t} h`: the noiseless flow of `dy = A_n y dt` from `y_s = h`,
    /// with `ceil((t−s)/dt)` equal steps.
    pub fn linear_flow(&self, h: &SpectralField, s: f64, t: f64, dt: f64) -> Result<SpectralField> {
        if t < s {
            return Err(Error::Domain(format!("flow needs s ≤ t, got s={s}, t={t}")));
        }
        let mut state = GalerkinState { rho: h.clone(), t: s, n_mollify: self.n, l_noise: self.noise.l_noise() };
        if t == s {
            return Ok(state.rho);
        }
        let steps = ((t - s) / dt - 1e-9).ceil().max(1.0) as usize;
        let h_dt = (t - s) / steps as f64;
        for _ in 0..steps {
            self.step_with(&mut state, h_dt, None)?;
        }
        Ok(state.rho)
    }
}

/// Run manifest written next to SPDE outputs.
#[derive(Clone, Debug, Serialize)]
pub struct SpdeManifest {
    pub kmax: usize,
    pub l_noise: usize,
    pub n_mollify: usize,
    pub dt: f64,
    pub sigma: f64,
    pub drift: String,
    pub mu_curve_ref: String,
    pub seed: u64,
}
