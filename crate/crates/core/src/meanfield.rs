//! Pseudo-spectral solver for the nonlinear Fokker–Planck equation
//! `∂_t μ = (σ²/2) Δμ − ∇·((K*μ) μ)`.
//!
//! Diffusion is integrated exactly per mode and transport with exponential
//! Euler, `μ' = e^{-a dt} μ + (1 − e^{-a dt})/a · T(μ)`, which keeps steady
//! states of the continuous equation as exact fixed points.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kernels::DriftModel;
use crate::spectral::{
    fast_size, from_json, norm2, sobolev_norm, to_json, GridPlan, Lattice, Mode, SpectralField,
};
use crate::{Complex64, Error, Result};

/// Floor applied to grid values of μ before taking square roots.
pub const TOL_POS: f64 = 1e-8;

/// What to do when μ dips below `-TOL_POS` at an output time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivityMode {
    #[default]
    Error,
    Warn,
}

/// Velocity multipliers and grid plan for one drift model.
pub struct FpSolver<'a> {
    model: &'a DriftModel,
    sigma: f64,
    plan: GridPlan,
}

fn diffusion_rate(k: &Mode, sigma: f64) -> f64 {
    0.5 * sigma * sigma * 4.0 * PI * PI * norm2(k)
}

/// `(1 − e^{-a dt})/a`, continuous at `a = 0`.
fn phi1(a: f64, dt: f64) -> f64 {
    let x = a * dt;
    if x < 1e-8 {
        dt * (1.0 - 0.5 * x)
    } else {
        -(-x).exp_m1() / a
    }
}

pub(crate) fn check_finite(f: &SpectralField, op: &'static str) -> Result<()> {
    match f.coeffs().iter().position(|c| !c.re.is_finite() || !c.im.is_finite()) {
        Some(i) => Err(Error::Instability { op, mode: f.lattice().mode(i)[..f.d()].to_vec() }),
        None => Ok(()),
    }
}

impl<'a> FpSolver<'a> {
    pub fn new(model: &'a DriftModel, sigma: f64) -> Self {
        FpSolver { model, sigma, plan: GridPlan::dealiased(model.lattice()) }
    }

    pub fn lattice(&self) -> Lattice {
        self.model.lattice()
    }

    /// `−∇·((K*μ) μ)`, products on the padded grid.
    pub fn transport(&self, mu: &SpectralField) -> SpectralField {
        let lattice = self.lattice();
        let mut out = SpectralField::zeros(lattice);
        if self.model.is_zero() {
            return out;
        }
        for (j, b) in self.model.velocity_field(mu).iter().enumerate() {
            let flux = self.plan.product(b, mu);
            for (idx, o) in out.coeffs_mut().iter_mut().enumerate() {
                let k = lattice.mode(idx);
                *o -= Complex64::new(0.0, 2.0 * PI * k[j] as f64) * flux.coeffs()[idx];
            }
        }
        out
    }

    /// Right-hand side `(σ²/2)Δμ − ∇·((K*μ)μ)`.
    pub fn residual(&self, mu: &SpectralField) -> SpectralField {
        let mut r = self.transport(mu);
        r.axpy(Complex64::new(0.5 * self.sigma * self.sigma, 0.0), &mu.laplacian());
        r
    }

    pub fn step(&self, mu: &SpectralField, dt: f64) -> Result<SpectralField> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        let t = self.transport(mu);
        let lattice = self.lattice();
        let mut out = mu.clone();
        for (idx, o) in out.coeffs_mut().iter_mut().enumerate() {
            let a = diffusion_rate(&lattice.mode(idx), self.sigma);
            *o = *o * (-a * dt).exp() + t.coeffs()[idx] * phi1(a, dt);
        }
        // Mass is conserved by construction; pin it against round-off.
        out.coeffs_mut()[lattice.zero_index()] = mu.c0();
        check_finite(&out, "meanfield::fp_step")?;
        Ok(out)
    }
}

pub fn fp_step(mu: &SpectralField, model: &DriftModel, sigma: f64, dt: f64) -> Result<SpectralField> {
    FpSolver::new(model, sigma).step(mu, dt)
}

/// Knobs for [`solve_fp`].
#[derive(Clone, Debug)]
pub struct FpOptions {
    /// Largest internal step; each output interval is split evenly.
    pub dt: f64,
    pub positivity: PositivityMode,
    /// Bandwidth kept for `√μ`; defaults to twice the lattice bandwidth.
    pub sqrt_kmax: Option<usize>,
    /// Sobolev index whose norm is recorded at every output time.
    pub monitor_s: f64,
}

impl FpOptions {
    pub fn new(dt: f64) -> Self {
        FpOptions { dt, positivity: PositivityMode::Error, sqrt_kmax: None, monitor_s: 0.0 }
    }
}

/// Tabulated limit curve `t ↦ (μ_t, √μ_t)`.
#[derive(Clone, Debug)]
pub struct MuCurve {
    times: Vec<f64>,
    states: Vec<SpectralField>,
    sqrt: Vec<SpectralField>,
    sigma: f64,
    model: String,
    min_values: Vec<f64>,
    norms: Vec<f64>,
    warnings: Vec<String>,
}

/// `√μ` on the lattice of bandwidth `kmax_s`, computed on a grid with values
/// clipped at `TOL_POS`. A uniform μ maps to the exact constant 1.
pub fn sqrt_coefficients(mu: &SpectralField, kmax_s: usize) -> Result<SpectralField> {
    let target = Lattice::new(mu.d(), kmax_s)?;
    let zero = mu.lattice().zero_index();
    if mu.coeffs().iter().enumerate().all(|(i, c)| i == zero || c.norm() == 0.0) {
        let mut s = SpectralField::zeros(target);
        s.coeffs_mut()[target.zero_index()] = Complex64::new(mu.c0().re.max(TOL_POS).sqrt(), 0.0);
        return Ok(s);
    }
    let m = fast_size(2 * mu.kmax().max(kmax_s) + 1).max(fast_size(4 * mu.kmax() + 1));
    let src = GridPlan::new(mu.lattice(), m)?;
    let mut grid = src.to_grid(mu);
    for v in grid.iter_mut() {
        *v = Complex64::new(v.re.max(TOL_POS).sqrt(), 0.0);
    }
    GridPlan::new(target, m)?.from_grid(&grid).map(|s| s.symmetrized())
}

fn grid_min(mu: &SpectralField) -> Result<f64> {
    let m = fast_size(4 * mu.kmax() + 1);
    let plan = GridPlan::new(mu.lattice(), m)?;
    Ok(plan.to_grid(mu).iter().map(|v| v.re).fold(f64::INFINITY, f64::min))
}

/// Integrates from `mu0` and records the state at every time in `t_grid`.
pub fn solve_fp(
    mu0: &SpectralField,
    model: &DriftModel,
    sigma: f64,
    t_grid: &[f64],
    opts: &FpOptions,
) -> Result<MuCurve> {
    if t_grid.first() != Some(&0.0) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("time grid must start at 0 and increase strictly".into()));
    }
    if mu0.lattice() != model.lattice() {
        return Err(Error::Shape("initial density and drift model use different lattices".into()));
    }
    let solver = FpSolver::new(model, sigma);
    let kmax_s = opts.sqrt_kmax.unwrap_or(2 * mu0.kmax());
    let mut curve = MuCurve {
        times: Vec::with_capacity(t_grid.len()),
        states: Vec::with_capacity(t_grid.len()),
        sqrt: Vec::with_capacity(t_grid.len()),
        sigma,
        model: model.name().to_string(),
        min_values: Vec::new(),
        norms: Vec::new(),
        warnings: Vec::new(),
    };
    let mut mu = mu0.clone();
    let mut t = 0.0;
    for &target in t_grid {
        let span = target - t;
        if span > 0.0 {
            let steps = (span / opts.dt).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                mu = solver.step(&mu, h)?;
            }
        }
        t = target;
        let min = grid_min(&mu)?;
        if min < -TOL_POS {
            match opts.positivity {
                PositivityMode::Error => {
                    return Err(Error::Positivity { op: "meanfield::solve_fp", t, min });
                }
                PositivityMode::Warn => {
                    curve.warnings.push(format!("density minimum {min:.3e} at t = {t}"));
                }
            }
        }
        curve.min_values.push(min);
        curve.norms.push(sobolev_norm(&mu, opts.monitor_s)?);
        curve.sqrt.push(sqrt_coefficients(&mu, kmax_s)?);
        curve.times.push(t);
        curve.states.push(mu.clone());
    }
    Ok(curve)
}

impl MuCurve {
    /// Time-independent curve, e.g. a stationary uniform density.
    pub fn constant(mu: SpectralField, sigma: f64, model: &str) -> Result<Self> {
        let sqrt = sqrt_coefficients(&mu, 2 * mu.kmax())?;
        Ok(MuCurve {
            times: vec![0.0],
            min_values: vec![grid_min(&mu)?],
            norms: vec![sobolev_norm(&mu, 0.0)?],
            states: vec![mu],
            sqrt: vec![sqrt],
            sigma,
            model: model.to_string(),
            warnings: Vec::new(),
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[SpectralField] {
        &self.states
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn min_values(&self) -> &[f64] {
        &self.min_values
    }

    /// Norms recorded with `FpOptions::monitor_s`.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the last tabulated time not after `t` (with a little slack for
    /// accumulated step round-off).
    pub fn index_at(&self, t: f64) -> usize {
        let slack = 1e-9 * (1.0 + t.abs());
        self.times.partition_point(|&s| s <= t + slack).saturating_sub(1)
    }

    pub fn mu_at(&self, t: f64) -> &SpectralField {
        &self.states[self.index_at(t)]
    }

    pub fn sqrt_at(&self, t: f64) -> &SpectralField {
        &self.sqrt[self.index_at(t)]
    }

    pub fn sqrt_states(&self) -> &[SpectralField] {
        &self.sqrt
    }

    pub fn last(&self) -> &SpectralField {
        self.states.last().expect("curves are never empty")
    }

    /// Writes one JSON field per output time plus `index.json`.
    pub fn write(&self, dir: &Path) -> Result<CurveIndex> {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::with_capacity(self.len());
        for (i, mu) in self.states.iter().enumerate() {
            let name = format!("mu_{i:05}.json");
            std::fs::write(dir.join(&name), to_json(mu))?;
            files.push(name);
        }
        let index = CurveIndex {
            times: self.times.clone(),
            sigma: self.sigma,
            model: self.model.clone(),
            files,
        };
        std::fs::write(dir.join("index.json"), index.to_json())?;
        Ok(index)
    }

    /// Reads a curve written by [`MuCurve::write`], recomputing `√μ` at
    /// bandwidth `2·kmax`.
    pub fn read(dir: &Path) -> Result<Self> {
        let index = CurveIndex::parse(&std::fs::read_to_string(dir.join("index.json"))?)?;
        let mut states = Vec::with_capacity(index.files.len());
        for name in &index.files {
            if name.contains('/') || name.contains('\\') || name.starts_with("..") {
                return Err(Error::Format(format!("curve file name {name:?} leaves the curve directory")));
            }
            states.push(from_json(&std::fs::read_to_string(dir.join(name))?)?);
        }
        let mut curve = MuCurve {
            times: index.times,
            sqrt: Vec::with_capacity(states.len()),
            min_values: Vec::with_capacity(states.len()),
            norms: Vec::with_capacity(states.len()),
            states,
            sigma: index.sigma,
            model: index.model,
            warnings: Vec::new(),
        };
        for mu in &curve.states {
            curve.sqrt.push(sqrt_coefficients(mu, 2 * mu.kmax())?);
            curve.min_values.push(grid_min(mu)?);
            curve.norms.push(sobolev_norm(mu, 0.0)?);
        }
        Ok(curve)
    }
}

/// `index.json` of a curve dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveIndex {
    pub times: Vec<f64>,
    pub sigma: f64,
    pub model: String,
    pub files: Vec<String>,
}

impl CurveIndex {
    pub fn parse(s: &str) -> Result<Self> {
        let index: CurveIndex = serde_json::from_str(s).map_err(|e| Error::Format(format!("curve index: {e}")))?;
        if index.times.len() != index.files.len() {
            return Err(Error::Format(format!(
                "curve index lists {} times but {} files",
                index.times.len(),
                index.files.len()
            )));
        }
        if index.times.is_empty() {
            return Err(Error::Format("curve index is empty".into()));
        }
        if index.times.iter().any(|t| !t.is_finite()) || index.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Format("curve times must be finite and strictly increasing".into()));
        }
        if !index.sigma.is_finite() || index.sigma < 0.0 {
            return Err(Error::Format(format!("invalid sigma {}", index.sigma)));
        }
        Ok(index)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("index serializes")
    }
}
