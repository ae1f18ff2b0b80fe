//! Fourier representation of functions and distributions on the torus.
//!
//! A [`SpectralField`] stores coefficients `c_k = ∫ e^{-2πik·x} df(x)` on the
//! truncated lattice `{-kmax..kmax}^d`, in row-major order with the last axis
//! fastest. Negating a mode reverses the flat index, which keeps Hermitian
//! bookkeeping cheap.

mod dump;
mod grid;

pub use dump::{from_binary, from_json, to_binary, to_json, BINARY_MAGIC};
pub use grid::{dealiased_size, fast_size, from_grid, to_grid, GridPlan};

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::{Error, Result};

/// Lattice mode; components beyond the dimension are zero.
pub type Mode = [i64; 3];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn norm2(k: &Mode) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64
}

/// `⟨k⟩^{2s} = (1 + |k|²)^s`.
pub fn bracket_weight(k: &Mode, s: f64) -> f64 {
    (1.0 + norm2(k)).powf(s)
}

/// Truncated mode lattice `{-kmax..kmax}^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Lattice {
    d: usize,
    kmax: usize,
}

impl Lattice {
    pub fn new(d: usize, kmax: usize) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::Shape(format!("dimension must be 1, 2 or 3, got {d}")));
        }
        Ok(Lattice { d, kmax })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn side(&self) -> usize {
        2 * self.kmax + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mode(&self, idx: usize) -> Mode {
        let side = self.side();
        let mut k = [0; 3];
        let mut r = idx;
        for a in (0..self.d).rev() {
            k[a] = (r % side) as i64 - self.kmax as i64;
            r /= side;
        }
        k
    }

    pub fn index(&self, k: &Mode) -> Option<usize> {
        let km = self.kmax as i64;
        let mut idx = 0usize;
        for (a, &ka) in k.iter().enumerate() {
            if a >= self.d {
                if ka != 0 {
                    return None;
                }
                continue;
            }
            if ka.abs() > km {
                return None;
            }
            idx = idx * self.side() + (ka + km) as usize;
        }
        Some(idx)
    }

    /// Flat index of `-k` given the flat index of `k`.
    pub fn neg_index(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    pub fn zero_index(&self) -> usize {
        self.len() / 2
    }

    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        (0..self.len()).map(move |i| self.mode(i))
    }
}

/// Sobolev indices `λ`, `λ'` with the fluctuation index `s = -(λ+2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevIndices {
    pub d: usize,
    pub lambda: f64,
    pub lambda_prime: f64,
}

impl SobolevIndices {
    pub fn new(d: usize, lambda: f64, lambda_prime: f64) -> Result<Self> {
        let v = Self::violations(d, lambda, lambda_prime);
        if v.is_empty() {
            Ok(SobolevIndices {
                d,
                lambda,
                lambda_prime,
            })
        } else {
            Err(Error::Config(v))
        }
    }

    /// Every violated constraint, for aggregated config reports.
    pub fn violations(d: usize, lambda: f64, lambda_prime: f64) -> Vec<String> {
        let mut v = Vec::new();
        if !(lambda > 1.5 * d as f64) {
            v.push(format!("lambda > 1.5*d violated: lambda = {lambda}, d = {d}"));
        }
        if !(lambda_prime > lambda + 1.0) {
            v.push(format!(
                "lambda_prime > lambda + 1 violated: lambda_prime = {lambda_prime}, lambda = {lambda}"
            ));
        }
        v
    }

    pub fn s_fluct(&self) -> f64 {
        -(self.lambda + 2.0)
    }
}

/// Complex Fourier coefficients on a truncated lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    lattice: Lattice,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(lattice: Lattice) -> Self {
        SpectralField {
            lattice,
            coeffs: vec![ZERO; lattice.len()],
        }
    }

    /// The uniform probability density: `c_0 = 1`.
    pub fn uniform(lattice: Lattice) -> Self {
        let mut f = Self::zeros(lattice);
        f.coeffs[lattice.zero_index()] = Complex64::new(1.0, 0.0);
        f
    }

    pub fn from_coeffs(lattice: Lattice, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != lattice.len() {
            return Err(Error::Shape(format!(
                "lattice d={} kmax={} needs {} coefficients, got {}",
                lattice.d(),
                lattice.kmax(),
                lattice.len(),
                coeffs.len()
            )));
        }
        Ok(SpectralField { lattice, coeffs })
    }

    pub fn from_fn(lattice: Lattice, mut f: impl FnMut(&Mode) -> Complex64) -> Self {
        let coeffs = lattice.modes().map(|k| f(&k)).collect();
        SpectralField { lattice, coeffs }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn d(&self) -> usize {
        self.lattice.d
    }

    pub fn kmax(&self) -> usize {
        self.lattice.kmax
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn get(&self, k: &Mode) -> Option<Complex64> {
        self.lattice.index(k).map(|i| self.coeffs[i])
    }

    pub fn set(&mut self, k: &Mode, v: Complex64) -> Result<()> {
        let i = self
            .lattice
            .index(k)
            .ok_or_else(|| Error::Index(format!("mode {k:?} outside lattice kmax = {}", self.kmax())))?;
        self.coeffs[i] = v;
        Ok(())
    }

    pub fn c0(&self) -> Complex64 {
        self.coeffs[self.lattice.zero_index()]
    }

    /// Largest `|c_{-k} - conj(c_k)|`; zero for real-valued fields.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.coeffs.len();
        (0..n)
            .map(|i| (self.coeffs[n - 1 - i] - self.coeffs[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    /// Replace coefficients by their Hermitian projection `(c_k + conj c_{-k})/2`.
    pub fn symmetrized(&self) -> Self {
        let n = self.coeffs.len();
        let coeffs = (0..n)
            .map(|i| 0.5 * (self.coeffs[i] + self.coeffs[n - 1 - i].conj()))
            .collect();
        SpectralField {
            lattice: self.lattice,
            coeffs,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|_, c| c * a)
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: Complex64, other: &SpectralField) {
        assert_eq!(self.lattice, other.lattice, "axpy on mismatched lattices");
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
    }

    pub fn add(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(Complex64::new(1.0, 0.0), other);
        out
    }

    pub fn sub(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other);
        out
    }

    pub fn map(&self, mut f: impl FnMut(&Mode, Complex64) -> Complex64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| f(&self.lattice.mode(i), c))
            .collect();
        SpectralField {
            lattice: self.lattice,
            coeffs,
        }
    }

    /// Copy onto another lattice of the same dimension, truncating or
    /// zero-padding.
    pub fn resized(&self, lattice: Lattice) -> Result<Self> {
        if lattice.d() != self.d() {
            return Err(Error::Shape(format!(
                "cannot resize a d={} field to d={}",
                self.d(),
                lattice.d()
            )));
        }
        Ok(SpectralField::from_fn(lattice, |k| self.get(k).unwrap_or(ZERO)))
    }

    /// Partial derivative along `axis`: multiplier `2πi k_axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        self.map(|k, c| c * Complex64::new(0.0, 2.0 * PI * k[axis] as f64))
    }

    /// Laplacian: multiplier `-(2π|k|)²`.
    pub fn laplacian(&self) -> Self {
        self.map(|k, c| c * (-4.0 * PI * PI * norm2(k)))
    }

    /// Point evaluation `Σ_k c_k e^{2πik·x}`.
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let mut acc = ZERO;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == ZERO {
                continue;
            }
            let k = self.lattice.mode(i);
            let phase: f64 = (0..self.d()).map(|a| k[a] as f64 * x[a]).sum();
            acc += c * Complex64::cis(2.0 * PI * phase);
        }
        acc
    }

    fn check_shape(&self, other: &SpectralField) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(Error::Shape(format!(
                "lattice mismatch: (d={}, kmax={}) vs (d={}, kmax={})",
                self.d(),
                self.kmax(),
                other.d(),
                other.kmax()
            )));
        }
        Ok(())
    }
}

/// `Σ_k ⟨k⟩^{2s} c_k(f) conj(c_k(g))`.
pub fn sobolev_inner(f: &SpectralField, g: &SpectralField, s: f64) -> Result<Complex64> {
    f.check_shape(g)?;
    let mut acc = ZERO;
    for (i, (a, b)) in f.coeffs.iter().zip(&g.coeffs).enumerate() {
        acc += a * b.conj() * bracket_weight(&f.lattice.mode(i), s);
    }
    Ok(acc)
}

pub fn sobolev_norm(f: &SpectralField, s: f64) -> Result<f64> {
    Ok(sobolev_inner(f, f, s)?.re.max(0.0).sqrt())
}

/// Distribution pairing `∫ φ df = Σ_k c_k(f) c_{-k}(φ)`.
pub fn pairing(f: &SpectralField, phi: &SpectralField) -> Result<Complex64> {
    f.check_shape(phi)?;
    let n = f.coeffs.len();
    Ok((0..n).map(|i| f.coeffs[i] * phi.coeffs[n - 1 - i]).sum())
}

fn smooth_ramp(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth radial bump: 1 on `|r| ≤ 1/2`, 0 on `|r| ≥ 1`, `C^∞` in between.
/// The plateau makes `j_n` the identity on a lattice once `n ≥ 2·kmax·√d`.
pub fn bump(r: f64) -> f64 {
    let r = r.abs();
    if r <= 0.5 {
        1.0
    } else if r >= 1.0 {
        0.0
    } else {
        let a = smooth_ramp(1.0 - r);
        a / (a + smooth_ramp(r - 0.5))
    }
}

/// Smallest mollification level acting as the identity on `lattice`.
pub fn identity_level(lattice: Lattice) -> usize {
    (2.0 * lattice.kmax() as f64 * (lattice.d() as f64).sqrt()).floor() as usize + 1
}

/// Mollifier multiplier `j̃(k/n)`; `n = 0` means no mollification.
pub fn mollifier_factor(k: &Mode, n: usize) -> f64 {
    if n == 0 {
        1.0
    } else {
        bump(norm2(k).sqrt() / n as f64)
    }
}

/// `j_n * f`, i.e. `c_k ↦ j̃(k/n) c_k`. `n = 0` returns `f` unchanged.
pub fn mollify(f: &SpectralField, n: usize) -> SpectralField {
    if n == 0 {
        return f.clone();
    }
    f.map(|k, c| c * mollifier_factor(k, n))
}

/// Coefficients of the empirical measure `(1/N) Σ δ_{X_i}`; `points` holds
/// `N·d` coordinates.
pub fn embed_empirical(points: &[f64], lattice: Lattice) -> Result<SpectralField> {
    let d = lattice.d();
    if points.is_empty() || !points.len().is_multiple_of(d) {
        return Err(Error::Domain(format!(
            "embed_empirical needs a non-empty list of d={d} points, got {} coordinates",
            points.len()
        )));
    }
    let n = points.len() / d;
    let km = lattice.kmax();
    let side = lattice.side();
    let mut out = SpectralField::zeros(lattice);
    // Per-axis phase tables e^{-2πi k x_a}, k = -kmax..kmax.
    let mut tab = vec![ZERO; d * side];
    for x in points.chunks_exact(d) {
        for a in 0..d {
            let w = Complex64::cis(-2.0 * PI * x[a]);
            let row = &mut tab[a * side..(a + 1) * side];
            row[km] = Complex64::new(1.0, 0.0);
            for j in 1..=km {
                row[km + j] = row[km + j - 1] * w;
                row[km - j] = row[km + j].conj();
            }
        }
        accumulate_tensor(&tab, d, side, out.coeffs_mut());
    }
    let inv = 1.0 / n as f64;
    for c in out.coeffs_mut() {
        *c *= inv;
    }
    out.coeffs[lattice.zero_index()] = Complex64::new(1.0, 0.0);
    Ok(out)
}

/// Real parts of several fields at many points, laid out `[point][field]`.
/// Shares one phase table per point across all fields.
pub fn eval_at_points(fields: &[&SpectralField], points: &[f64]) -> Result<Vec<f64>> {
    let Some(first) = fields.first() else {
        return Ok(Vec::new());
    };
    let lattice = first.lattice;
    for f in fields {
        first.check_shape(f)?;
    }
    let d = lattice.d();
    if !points.len().is_multiple_of(d) {
        return Err(Error::Shape(format!("{} coordinates do not split into d={d} points", points.len())));
    }
    let km = lattice.kmax();
    let side = lattice.side();
    let mut tab = vec![ZERO; d * side];
    let mut out = Vec::with_capacity(points.len() / d * fields.len());
    for x in points.chunks_exact(d) {
        for a in 0..d {
            let w = Complex64::cis(2.0 * PI * x[a]);
            let row = &mut tab[a * side..(a + 1) * side];
            row[km] = Complex64::new(1.0, 0.0);
            for j in 1..=km {
                row[km + j] = row[km + j - 1] * w;
                row[km - j] = row[km + j].conj();
            }
        }
        for f in fields {
            out.push(contract_tensor(&tab, d, side, &f.coeffs).re);
        }
    }
    Ok(out)
}

fn contract_tensor(tab: &[Complex64], d: usize, side: usize, c: &[Complex64]) -> Complex64 {
    match d {
        1 => c.iter().zip(tab).map(|(a, b)| a * b).sum(),
        2 => {
            let (t0, t1) = tab.split_at(side);
            t0.iter()
                .zip(c.chunks_exact(side))
                .map(|(a, row)| a * row.iter().zip(t1).map(|(x, y)| x * y).sum::<Complex64>())
                .sum()
        }
        _ => {
            let (t0, rest) = tab.split_at(side);
            let (t1, t2) = rest.split_at(side);
            let mut acc = ZERO;
            for (i, a) in t0.iter().enumerate() {
                for (j, b) in t1.iter().enumerate() {
                    let row = &c[(i * side + j) * side..(i * side + j + 1) * side];
                    acc += a * b * row.iter().zip(t2).map(|(x, y)| x * y).sum::<Complex64>();
                }
            }
            acc
        }
    }
}

fn accumulate_tensor(tab: &[Complex64], d: usize, side: usize, out: &mut [Complex64]) {
    match d {
        1 => {
            for (o, t) in out.iter_mut().zip(tab) {
                *o += t;
            }
        }
        2 => {
            let (t0, t1) = tab.split_at(side);
            for (i, a) in t0.iter().enumerate() {
                let row = &mut out[i * side..(i + 1) * side];
                for (o, b) in row.iter_mut().zip(t1) {
                    *o += a * b;
                }
            }
        }
        _ => {
            let (t0, rest) = tab.split_at(side);
            let (t1, t2) = rest.split_at(side);
            for (i, a) in t0.iter().enumerate() {
                for (j, b) in t1.iter().enumerate() {
                    let ab = a * b;
                    let row = &mut out[(i * side + j) * side..(i * side + j + 1) * side];
                    for (o, c) in row.iter_mut().zip(t2) {
                        *o += ab * c;
                    }
                }
            }
        }
    }
}
