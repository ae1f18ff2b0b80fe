//! Cylindrical test functionals `Φ(f) = g(⟨f, φ_1⟩_{H^s}, …, ⟨f, φ_m⟩_{H^s})`
//! and their generators along the particle system and the fluctuation SPDE.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kernels::DriftModel;
use crate::particles::fluctuation_on;
use crate::spde::{DriftOperator, NoiseModel};
use crate::spectral::{
    bracket_weight, eval_at_points, fast_size, pairing, sobolev_inner, GridPlan, Lattice, SpectralField,
};
use crate::{Complex64, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Smooth outer map `g: ℝ^m → ℝ` with bounded derivatives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outer", rename_all = "snake_case")]
pub enum Outer {
    /// `Σ c_a y_a`.
    Linear { coef: Vec<f64> },
    /// `q = ½ Σ w_a y_a²`, optionally bounded as `c·tanh(q/c)`.
    Quadratic { weights: Vec<f64>, cutoff: Option<f64> },
    /// `Π tanh(β_a (y_a − c_a))`.
    TanhProduct { scale: Vec<f64>, offset: Vec<f64> },
    /// `exp(−|y − c|² / 2w²)`.
    GaussBump { center: Vec<f64>, width: f64 },
}

impl Outer {
    pub fn m(&self) -> usize {
        match self {
            Outer::Linear { coef } => coef.len(),
            Outer::Quadratic { weights, .. } => weights.len(),
            Outer::TanhProduct { scale, .. } => scale.len(),
            Outer::GaussBump { center, .. } => center.len(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Outer::Linear { .. } => "linear",
            Outer::Quadratic { .. } => "quadratic",
            Outer::TanhProduct { .. } => "tanh_product",
            Outer::GaussBump { .. } => "gauss_bump",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            Outer::Linear { coef } => finite(coef),
            Outer::Quadratic { weights, cutoff } => {
                // The cap only bounds the derivatives when q is coercive.
                finite(weights) && cutoff.is_none_or(|c| c.is_finite() && c > 0.0 && weights.iter().all(|w| *w > 0.0))
            }
            Outer::TanhProduct { scale, offset } => finite(scale) && finite(offset) && scale.len() == offset.len(),
            Outer::GaussBump { center, width } => finite(center) && width.is_finite() && *width > 0.0,
        };
        if !ok || self.m() == 0 {
            return Err(Error::Domain(format!("invalid parameters for the {} outer map", self.name())));
        }
        Ok(())
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        match self {
            Outer::Linear { coef } => coef.iter().zip(y).map(|(c, v)| c * v).sum(),
            Outer::Quadratic { weights, cutoff } => {
                let q: f64 = 0.5 * weights.iter().zip(y).map(|(w, v)| w * v * v).sum::<f64>();
                match cutoff {
                    Some(c) => c * (q / c).tanh(),
                    None => q,
                }
            }
            Outer::TanhProduct { scale, offset } => {
                (0..y.len()).map(|a| (scale[a] * (y[a] - offset[a])).tanh()).product()
            }
            Outer::GaussBump { center, width } => {
                let r2: f64 = y.iter().zip(center).map(|(v, c)| (v - c).powi(2)).sum();
                (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let m = y.len();
        match self {
            Outer::Linear { coef } => coef.clone(),
            Outer::Quadratic { weights, cutoff } => {
                let s = match cutoff {
                    Some(c) => {
                        let q: f64 = 0.5 * weights.iter().zip(y).map(|(w, v)| w * v * v).sum::<f64>();
                        1.0 - (q / c).tanh().powi(2)
                    }
                    None => 1.0,
                };
                (0..m).map(|a| s * weights[a] * y[a]).collect()
            }
            Outer::TanhProduct { scale, offset } => {
                let t: Vec<f64> = (0..m).map(|a| (scale[a] * (y[a] - offset[a])).tanh()).collect();
                (0..m)
                    .map(|a| {
                        let others: f64 = (0..m).filter(|&b| b != a).map(|b| t[b]).product();
                        scale[a] * (1.0 - t[a] * t[a]) * others
                    })
                    .collect()
            }
            Outer::GaussBump { center, width } => {
                let g = self.value(y);
                let w2 = width * width;
                (0..m).map(|a| -(y[a] - center[a]) / w2 * g).collect()
            }
        }
    }

    /// Row-major `m×m` Hessian.
    pub fn hessian(&self, y: &[f64]) -> Vec<f64> {
        let m = y.len();
        let mut h = vec![0.0; m * m];
        match self {
            Outer::Linear { .. } => {}
            Outer::Quadratic { weights, cutoff } => match cutoff {
                None => {
                    for a in 0..m {
                        h[a * m + a] = weights[a];
                    }
                }
                Some(c) => {
                    let q: f64 = 0.5 * weights.iter().zip(y).map(|(w, v)| w * v * v).sum::<f64>();
                    let t = (q / c).tanh();
                    let s = 1.0 - t * t;
                    for a in 0..m {
                        for b in 0..m {
                            let mut v = -2.0 * s * t * weights[a] * y[a] * weights[b] * y[b] / c;
                            if a == b {
                                v += s * weights[a];
                            }
                            h[a * m + b] = v;
                        }
                    }
                }
            },
            Outer::TanhProduct { scale, offset } => {
                let t: Vec<f64> = (0..m).map(|i| (scale[i] * (y[i] - offset[i])).tanh()).collect();
                let rest = |skip: &[usize]| -> f64 { (0..m).filter(|i| !skip.contains(i)).map(|i| t[i]).product() };
                for a in 0..m {
                    let da = scale[a] * (1.0 - t[a] * t[a]);
                    for b in 0..m {
                        h[a * m + b] = if a == b {
                            -2.0 * scale[a] * t[a] * da * rest(&[a])
                        } else {
                            da * scale[b] * (1.0 - t[b] * t[b]) * rest(&[a, b])
                        };
                    }
                }
            }
            Outer::GaussBump { center, width } => {
                let g = self.value(y);
                let w2 = width * width;
                for a in 0..m {
                    for b in 0..m {
                        let mut v = (y[a] - center[a]) * (y[b] - center[b]) / (w2 * w2);
                        if a == b {
                            v -= 1.0 / w2;
                        }
                        h[a * m + b] = g * v;
                    }
                }
            }
        }
        h
    }
}

/// `Φ(f) = g(⟨f, φ_a⟩_{H^s})` with bandlimited real `φ_a`.
#[derive(Clone, Debug)]
pub struct CylindricalFunctional {
    phis: Vec<SpectralField>,
    outer: Outer,
    s: f64,
}

/// Probe estimates of `sup ‖∇Φ‖` and `sup ‖∇²Φ‖`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeBounds {
    pub c1: f64,
    pub c2: f64,
}

impl CylindricalFunctional {
    pub fn new(phis: Vec<SpectralField>, outer: Outer, s: f64) -> Result<Self> {
        outer.validate()?;
        if phis.len() != outer.m() {
            return Err(Error::Shape(format!("{} test functions for an outer map of arity {}", phis.len(), outer.m())));
        }
        if phis.iter().any(|p| p.lattice() != phis[0].lattice()) {
            return Err(Error::Shape("test functions live on different lattices".into()));
        }
        if phis.iter().any(|p| !p.is_real(1e-12)) {
            return Err(Error::Domain("test functions must be real".into()));
        }
        Ok(CylindricalFunctional { phis, outer, s })
    }

    /// Functional whose coordinates are the plain pairings `∫ ψ_a df`:
    /// `φ_a` has coefficients `⟨k⟩^{-2s} c_k(ψ_a)`.
    pub fn from_test_functions(psis: Vec<SpectralField>, outer: Outer, s: f64) -> Result<Self> {
        let phis = psis.iter().map(|p| p.map(|k, c| c * bracket_weight(k, -s))).collect();
        Self::new(phis, outer, s)
    }

    pub fn phis(&self) -> &[SpectralField] {
        &self.phis
    }

    pub fn outer(&self) -> &Outer {
        &self.outer
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn lattice(&self) -> Lattice {
        self.phis[0].lattice()
    }

    /// Coordinates `y_a = ⟨f, φ_a⟩_{H^s}`.
    pub fn coords(&self, f: &SpectralField) -> Result<Vec<f64>> {
        let f = f.resized(self.lattice())?;
        self.phis.iter().map(|p| Ok(sobolev_inner(&f, p, self.s)?.re)).collect()
    }

    pub fn eval(&self, f: &SpectralField) -> Result<f64> {
        Ok(self.outer.value(&self.coords(f)?))
    }

    fn combine(&self, w: &[f64]) -> SpectralField {
        let mut out = SpectralField::zeros(self.lattice());
        for (p, c) in self.phis.iter().zip(w) {
            out.axpy(Complex64::new(*c, 0.0), p);
        }
        out
    }

    /// `Σ_a ∂_a g · φ_a`, the Riesz representer of `DΦ(f)` in `H^s`.
    pub fn gradient(&self, f: &SpectralField) -> Result<SpectralField> {
        Ok(self.combine(&self.outer.gradient(&self.coords(f)?)))
    }

    /// `Σ_ab ∂_a∂_b g · ⟨φ_b, h⟩_{H^s} · φ_a`.
    pub fn hessian_apply(&self, f: &SpectralField, h: &SpectralField) -> Result<SpectralField> {
        let hess = self.outer.hessian(&self.coords(f)?);
        let hy = self.coords(h)?;
        let m = self.phis.len();
        let w: Vec<f64> = (0..m).map(|a| (0..m).map(|b| hess[a * m + b] * hy[b]).sum()).collect();
        Ok(self.combine(&w))
    }

    fn gram(&self) -> Vec<f64> {
        let m = self.phis.len();
        let mut g = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                g[a * m + b] = sobolev_inner(&self.phis[a], &self.phis[b], self.s).expect("same lattice").re;
            }
        }
        g
    }

    /// Sup of `‖∇Φ‖_{H^s}` and of the Frobenius bound on `‖∇²Φ‖` over
    /// coordinates drawn uniformly from `[−radius, radius]^m`.
    pub fn probe_bounds(&self, radius: f64, samples: usize, rng: &mut impl Rng) -> ProbeBounds {
        let m = self.phis.len();
        let gram = self.gram();
        let mut out = ProbeBounds { c1: 0.0, c2: 0.0 };
        let mut y = vec![0.0; m];
        for i in 0..samples.max(1) {
            for v in y.iter_mut() {
                *v = if i == 0 { 0.0 } else { rng.random_range(-radius..=radius) };
            }
            let g = self.outer.gradient(&y);
            let n1: f64 = (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).map(|(a, b)| g[a] * gram[a * m + b] * g[b]).sum();
            out.c1 = out.c1.max(n1.max(0.0).sqrt());
            // ‖G^{1/2} H G^{1/2}‖_F² = tr(HGHG).
            let h = self.outer.hessian(&y);
            let hg: Vec<f64> = (0..m * m).map(|ij| (0..m).map(|k| h[ij / m * m + k] * gram[k * m + ij % m]).sum()).collect();
            let tr: f64 = (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).map(|(a, b)| hg[a * m + b] * hg[b * m + a]).sum();
            out.c2 = out.c2.max(tr.max(0.0).sqrt());
        }
        out
    }

    /// Function-side test functions `ψ_a` with `⟨f, φ_a⟩_{H^s} = ∫ ψ_a df`.
    pub fn representers(&self) -> Vec<SpectralField> {
        let lat = self.lattice();
        self.phis
            .iter()
            .map(|p| {
                let n = lat.len();
                SpectralField::from_coeffs(
                    lat,
                    (0..n).map(|i| p.coeffs()[n - 1 - i].conj() * bracket_weight(&lat.mode(i), self.s)).collect(),
                )
                .expect("same lattice")
            })
            .collect()
    }
}

/// Tensor-product Fejér kernel of bandwidth `b` centred at `center`: a
/// non-negative spike with unit mean and height `(b+1)^d`.
pub fn fejer(lattice: Lattice, b: usize, center: &[f64]) -> Result<SpectralField> {
    let d = lattice.d();
    if b == 0 || b > lattice.kmax() || center.len() != d {
        return Err(Error::Domain(format!("Fejér bandwidth {b} needs 1 ≤ b ≤ {} and a {d}-point centre", lattice.kmax())));
    }
    Ok(SpectralField::from_fn(lattice, |k| {
        let mut c = Complex64::new(1.0, 0.0);
        for a in 0..d {
            let w = 1.0 - k[a].unsigned_abs() as f64 / (b + 1) as f64;
            c *= Complex64::from_polar(w.max(0.0), -2.0 * PI * k[a] as f64 * center[a]);
        }
        c
    })
    .symmetrized())
}

/// `cos(2πk·x)`.
pub fn cosine(lattice: Lattice, k: &[i64; 3]) -> Result<SpectralField> {
    let mut f = SpectralField::zeros(lattice);
    f.set(k, Complex64::new(0.5, 0.0))?;
    f.set(&[-k[0], -k[1], -k[2]], Complex64::new(0.5, 0.0))?;
    if k.iter().all(|&c| c == 0) {
        f.set(k, Complex64::new(1.0, 0.0))?;
    }
    Ok(f)
}

/// SPDE-side generator with both trace evaluations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpdeGenerator {
    /// `⟨A_n f, ∇Φ(f)⟩_{H^s}`.
    pub drift: f64,
    /// `Σ_{j,l} ⟨∇²Φ B_j e_l, B_j e_l⟩` over the truncated noise modes.
    pub trace_modes: f64,
    /// `σ² Σ_j ∫ Σ_ab ∂_a∂_b g ∂_jψ_a ∂_jψ_b dμ_eff` with `μ_eff = (√μ)²`.
    pub trace_diagonal: f64,
    /// Whether the noise modes resolve every `√μ ∂_jψ_a`, in which case the
    /// two traces must coincide.
    pub complete: bool,
    pub value: f64,
}

/// `⟨A_n f, ∇Φ⟩ + ½ Tr(∇²Φ Σ_j B_j B_j*)` at time `t`.
pub fn generator_spde(
    phi: &CylindricalFunctional,
    f: &SpectralField,
    t: f64,
    n: usize,
    op: &DriftOperator,
    noise: &NoiseModel,
) -> Result<SpdeGenerator> {
    let lat = phi.lattice();
    if op.lattice() != lat {
        return Err(Error::Shape("functional and operator lattices differ".into()));
    }
    let y = phi.coords(f)?;
    let m = y.len();
    let grad = phi.combine(&phi.outer.gradient(&y));
    let hess = phi.outer.hessian(&y);
    let drift = sobolev_inner(&op.apply_a_n(&f.resized(lat)?, n), &grad, phi.s)?.re;

    let sigma = noise.sigma();
    let sq = noise.sqrt_mu_at(t);
    let d = lat.d();
    let nl = noise.noise_lattice();

    // Path 1: X_{a,l,j} = ⟨B_j e_l, φ_a⟩ = σ Σ_k (√μ)^_{k−l} 2πi k_j ⟨k⟩^{2s} conj(φ̂_a(k)).
    let mut trace_modes = 0.0;
    let mut u = vec![vec![ZERO; lat.len()]; m];
    for j in 0..d {
        for (a, p) in phi.phis.iter().enumerate() {
            for (i, c) in p.coeffs().iter().enumerate() {
                let k = lat.mode(i);
                u[a][i] = Complex64::new(0.0, 2.0 * PI * k[j] as f64) * bracket_weight(&k, phi.s) * c.conj();
            }
        }
        let mut x = vec![ZERO; m];
        for li in 0..nl.len() {
            let l = nl.mode(li);
            x.fill(ZERO);
            for i in 0..lat.len() {
                let k = lat.mode(i);
                let Some(sc) = sq.get(&[k[0] - l[0], k[1] - l[1], k[2] - l[2]]) else {
                    continue;
                };
                if sc == ZERO {
                    continue;
                }
                for a in 0..m {
                    x[a] += sc * u[a][i];
                }
            }
            for a in 0..m {
                for b in 0..m {
                    trace_modes += hess[a * m + b] * (x[b] * x[a].conj()).re * sigma * sigma;
                }
            }
        }
    }

    // Path 2: diagonal-derivative formula on a grid that integrates the
    // bandlimited integrand exactly.
    let psis = phi.representers();
    let mg = fast_size(2 * lat.kmax() + 2 * sq.kmax() + 1);
    let s_grid = GridPlan::new(sq.lattice(), mg)?.to_grid(sq);
    let plan = GridPlan::new(lat, mg)?;
    let mut trace_diagonal = 0.0;
    for j in 0..d {
        let dpsi: Vec<Vec<Complex64>> = psis.iter().map(|p| plan.to_grid(&p.derivative(j))).collect();
        for (pt, s) in s_grid.iter().enumerate() {
            let w = s.re * s.re;
            let mut acc = 0.0;
            for a in 0..m {
                for b in 0..m {
                    acc += hess[a * m + b] * dpsi[a][pt].re * dpsi[b][pt].re;
                }
            }
            trace_diagonal += acc * w;
        }
    }
    trace_diagonal *= sigma * sigma / s_grid.len() as f64;

    let complete = nl.kmax() >= lat.kmax() + sq.kmax();
    if complete && (trace_modes - trace_diagonal).abs() > 1e-8 * trace_modes.abs().max(1.0) {
        return Err(Error::Consistency {
            op: "functionals::generator_spde",
            detail: format!("noise-mode trace {trace_modes} vs diagonal trace {trace_diagonal}"),
        });
    }
    Ok(SpdeGenerator { drift, trace_modes, trace_diagonal, complete, value: drift + 0.5 * trace_modes })
}

/// Particle-side generator split into its three surviving terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParticleGenerator {
    /// `√N ∫ (b^N − b)·∇ψ dμ`.
    pub interaction: f64,
    /// `√N [⟨μ^N − μ, drift·∇ψ + (σ²/2)Δψ⟩]` with `b^N` in the μ-integral.
    pub transport: f64,
    /// `(σ²/2) (1/N) Σ_i Σ_ab ∂_a∂_b g ∇ψ_a·∇ψ_b (X_i)`.
    pub diagonal: f64,
    pub value: f64,
}

/// Generator of `Φ(ρ^N)` along the particle system at the current positions,
/// with `ψ = Σ ∂_a g ψ_a` built from the function-side representers.
pub fn generator_particle(
    phi: &CylindricalFunctional,
    positions: &[f64],
    mu: &SpectralField,
    model: &DriftModel,
    sigma: f64,
) -> Result<ParticleGenerator> {
    let lat = phi.lattice();
    let d = lat.d();
    let n = positions.len() / d;
    let sqrt_n = (n as f64).sqrt();
    let mu = mu.resized(lat)?;
    let rho = fluctuation_on(positions, &mu)?;
    let y = phi.coords(&rho)?;
    let m = y.len();
    let dg = phi.outer.gradient(&y);
    let hess = phi.outer.hessian(&y);
    let psis = phi.representers();
    let mut psi = SpectralField::zeros(lat);
    for (p, c) in psis.iter().zip(&dg) {
        psi.axpy(Complex64::new(*c, 0.0), p);
    }
    let half_s2 = 0.5 * sigma * sigma;

    // Pointwise values: ∂_j ψ, Δψ, then ∂_j ψ_a.
    let mut fields: Vec<SpectralField> = (0..d).map(|j| psi.derivative(j)).collect();
    fields.push(psi.laplacian());
    for p in &psis {
        for j in 0..d {
            fields.push(p.derivative(j));
        }
    }
    let refs: Vec<&SpectralField> = fields.iter().collect();
    let vals = eval_at_points(&refs, positions)?;
    let stride = fields.len();
    let drift = if model.is_zero() {
        vec![0.0; positions.len()]
    } else {
        model.drift_at_particles(positions, 0.0)?
    };
    let mut particle_sum = 0.0;
    let mut diagonal = 0.0;
    for i in 0..n {
        let v = &vals[i * stride..(i + 1) * stride];
        let mut term = half_s2 * v[d];
        for j in 0..d {
            term += drift[i * d + j] * v[j];
        }
        particle_sum += term;
        for a in 0..m {
            for b in 0..m {
                let dot: f64 = (0..d).map(|j| v[d + 1 + a * d + j] * v[d + 1 + b * d + j]).sum();
                diagonal += hess[a * m + b] * dot;
            }
        }
    }
    diagonal *= half_s2 / n as f64;

    let plan = GridPlan::dealiased(lat);
    let against_mu = |b: &[SpectralField]| -> Result<f64> {
        let mut h = psi.laplacian().scaled(half_s2);
        for (j, bj) in b.iter().enumerate() {
            h.axpy(Complex64::new(1.0, 0.0), &plan.product(bj, &psi.derivative(j)));
        }
        Ok(pairing(&mu, &h)?.re)
    };
    let mu_term = sqrt_n * against_mu(&model.velocity_field(&mu))?;
    let particle_term = particle_sum / sqrt_n;
    let mut interaction = 0.0;
    for (j, v) in model.velocity_field(&rho).iter().enumerate() {
        interaction += pairing(&mu, &plan.product(v, &psi.derivative(j)))?.re;
    }
    let transport = particle_term - mu_term - interaction;
    Ok(ParticleGenerator { interaction, transport, diagonal, value: particle_term - mu_term + diagonal })
}
