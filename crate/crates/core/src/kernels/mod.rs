//! Drift models `b(x, m) = (K * m)(x)`: smooth convolution kernels given by a
//! Fourier multiplier table, the periodized Biot–Savart kernel and the
//! repulsive Coulomb force.
//!
//! The multiplier `K̂(k) = ∫ K(x) e^{-2πik·x} dx` is the ground truth; the
//! singular kernels are evaluated in real space either by an Ewald split
//! (default) or by a shape-corrected lattice-image sum.

pub mod ewald;
pub mod images;

#[cfg(test)]
mod tests;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::spectral::{norm2, Lattice, Mode, SpectralField};
use crate::{Error, Result};
use ewald::{displacement, PeriodicGreen};
use images::FreeKernel;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Prefactor in front of the pair sum in the particle drift.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// `(1/N) Σ_{j≠i}`, the mean-field scaling.
    MeanField,
    /// `Σ_{j≠i}` without `1/N`.
    Unscaled,
}

/// Real-space evaluation of the singular kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Periodization {
    Ewald,
    ImageSum { radius: i64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum DriftKind {
    /// Multipliers on the listed modes, sorted by mode; every other mode is zero.
    Smooth { table: Vec<(Mode, [Complex64; 3])> },
    BiotSavart,
    Coulomb,
}

/// Kernel specification shared read-only by every pipeline.
#[derive(Clone, Debug)]
pub struct DriftModel {
    name: String,
    kind: DriftKind,
    lattice: Lattice,
    normalization: Normalization,
    periodization: Periodization,
    cap: Option<f64>,
    green: Option<PeriodicGreen>,
}

impl DriftModel {
    /// Smooth kernel from an explicit multiplier table. The table must be
    /// Hermitian (`K̂(-k) = conj K̂(k)`, real kernel) and vanish at `k = 0`.
    pub fn smooth(
        name: &str,
        lattice: Lattice,
        table: Vec<(Mode, Vec<Complex64>)>,
    ) -> Result<Self> {
        let d = lattice.d();
        let mut full: Vec<(Mode, [Complex64; 3])> = Vec::new();
        for (k, v) in &table {
            if lattice.index(k).is_none() {
                return Err(Error::Index(format!(
                    "multiplier mode {k:?} outside lattice kmax = {}",
                    lattice.kmax()
                )));
            }
            if v.len() != d {
                return Err(Error::Shape(format!(
                    "multiplier at {k:?} has {} components, expected {d}",
                    v.len()
                )));
            }
            let mut arr = [ZERO; 3];
            arr[..d].copy_from_slice(v);
            if norm2(k) == 0.0 && arr.iter().any(|c| c.norm() > 0.0) {
                return Err(Error::Domain("multiplier at k = 0 must vanish".into()));
            }
            if arr.iter().any(|c| c.norm() > 0.0) {
                full.push((*k, arr));
            }
        }
        full.sort_by_key(|a| a.0);
        if full.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Domain("multiplier table lists a mode twice".into()));
        }
        for (k, v) in &full {
            let neg = [-k[0], -k[1], -k[2]];
            let partner = match full.binary_search_by(|(q, _)| q.cmp(&neg)) {
                Ok(i) => full[i].1,
                Err(_) => [ZERO; 3],
            };
            for a in 0..3 {
                if (partner[a] - v[a].conj()).norm() > 1e-12 * (1.0 + v[a].norm()) {
                    return Err(Error::Domain(format!(
                        "multiplier table is not Hermitian at mode {k:?}"
                    )));
                }
            }
        }
        Ok(DriftModel {
            name: name.to_string(),
            kind: DriftKind::Smooth { table: full },
            lattice,
            normalization: Normalization::MeanField,
            periodization: Periodization::Ewald,
            cap: None,
            green: None,
        })
    }

    /// Zero kernel.
    pub fn zero(lattice: Lattice) -> Self {
        Self::smooth("zero", lattice, Vec::new()).expect("empty table is valid")
    }

    /// `K(x) = -α sin(2πx₁) e₁`: multiplier `±iα/2` at `k = ±e₁`.
    pub fn sine1d(lattice: Lattice, alpha: f64) -> Result<Self> {
        let d = lattice.d();
        let mut plus = vec![ZERO; d];
        plus[0] = Complex64::new(0.0, 0.5 * alpha);
        let minus: Vec<Complex64> = plus.iter().map(|c| c.conj()).collect();
        Self::smooth(
            "sine1d",
            lattice,
            vec![([1, 0, 0], plus), ([-1, 0, 0], minus)],
        )
    }

    /// Attractive Gaussian interaction `K = -α ∇W`, `Ŵ(k) = exp(-2π²w²|k|²)`,
    /// truncated to the lattice.
    pub fn gauss_reg(lattice: Lattice, alpha: f64, width: f64) -> Result<Self> {
        let d = lattice.d();
        let table = lattice
            .modes()
            .filter(|k| norm2(k) > 0.0)
            .map(|k| {
                let w = (-2.0 * PI * PI * width * width * norm2(&k)).exp();
                let v = (0..d)
                    .map(|a| Complex64::new(0.0, -alpha * 2.0 * PI * k[a] as f64 * w))
                    .collect();
                (k, v)
            })
            .collect();
        Self::smooth("gauss_reg", lattice, table)
    }

    /// Periodized Biot–Savart kernel `(1/2π)(−x₂, x₁)/|x|²`, d = 2.
    pub fn biot_savart(lattice: Lattice) -> Result<Self> {
        if lattice.d() != 2 {
            return Err(Error::Domain("the Biot–Savart kernel is defined for d = 2 only".into()));
        }
        Ok(Self::singular("biot_savart", DriftKind::BiotSavart, lattice))
    }

    /// Periodized repulsive Coulomb force `x/|x|^d`, d ∈ {2, 3}.
    pub fn coulomb(lattice: Lattice) -> Result<Self> {
        if lattice.d() < 2 {
            return Err(Error::Domain("the Coulomb kernel needs d = 2 or 3".into()));
        }
        Ok(Self::singular("coulomb", DriftKind::Coulomb, lattice))
    }

    fn singular(name: &str, kind: DriftKind, lattice: Lattice) -> Self {
        DriftModel {
            name: name.to_string(),
            kind,
            lattice,
            normalization: Normalization::MeanField,
            periodization: Periodization::Ewald,
            cap: None,
            green: Some(PeriodicGreen::standard(lattice.d())),
        }
    }

    pub fn with_normalization(mut self, n: Normalization) -> Self {
        self.normalization = n;
        self
    }

    pub fn with_periodization(mut self, p: Periodization) -> Self {
        self.periodization = p;
        self
    }

    /// Cap the singular part of `|K|` at `1/eps` and ignore exact collisions.
    pub fn with_cap(mut self, eps: Option<f64>) -> Self {
        self.cap = eps;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &DriftKind {
        &self.kind
    }

    pub fn d(&self) -> usize {
        self.lattice.d()
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn is_singular(&self) -> bool {
        !matches!(self.kind, DriftKind::Smooth { .. })
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.kind, DriftKind::Smooth { table } if table.is_empty())
    }

    /// Multiplier with zero-padding to three components; no bounds check.
    pub fn multiplier(&self, k: &Mode) -> [Complex64; 3] {
        let k2 = norm2(k);
        if k2 == 0.0 {
            return [ZERO; 3];
        }
        match &self.kind {
            DriftKind::Smooth { table } => match table.binary_search_by(|(q, _)| q.cmp(k)) {
                Ok(i) => table[i].1,
                Err(_) => [ZERO; 3],
            },
            DriftKind::BiotSavart => {
                let s = -1.0 / (2.0 * PI * k2);
                [
                    Complex64::new(0.0, -(k[1] as f64) * s),
                    Complex64::new(0.0, k[0] as f64 * s),
                    ZERO,
                ]
            }
            DriftKind::Coulomb => {
                let c = if self.d() == 2 { -1.0 } else { -2.0 };
                let s = c / k2;
                [
                    Complex64::new(0.0, k[0] as f64 * s),
                    Complex64::new(0.0, k[1] as f64 * s),
                    Complex64::new(0.0, k[2] as f64 * s),
                ]
            }
        }
    }

    /// `K̂(k)` with `(K*m)ˆ_k = K̂(k) c_k(m)`, one entry per axis.
    pub fn spectral_multiplier(&self, k: &Mode) -> Result<Vec<Complex64>> {
        if self.lattice.index(k).is_none() {
            return Err(Error::Index(format!(
                "mode {k:?} outside the d={} lattice with kmax = {}",
                self.d(),
                self.lattice.kmax()
            )));
        }
        Ok(self.multiplier(k)[..self.d()].to_vec())
    }

    /// Velocity field `K * m`, one spectral field per axis.
    pub fn velocity_field(&self, m: &SpectralField) -> Vec<SpectralField> {
        (0..self.d())
            .map(|a| m.map(|k, c| c * self.multiplier(k)[a]))
            .collect()
    }

    /// Periodized kernel `K(x)` in real space.
    pub fn kernel(&self, x: &[f64]) -> Result<[f64; 3]> {
        match &self.kind {
            DriftKind::Smooth { table } => {
                let mut v = [0.0; 3];
                for (k, m) in table {
                    let ph = 2.0 * PI * (0..self.d()).map(|a| k[a] as f64 * x[a]).sum::<f64>();
                    let e = Complex64::cis(ph);
                    for a in 0..3 {
                        v[a] += (m[a] * e).re;
                    }
                }
                Ok(v)
            }
            _ => self
                .singular_kernel(x)
                .ok_or(Error::Singularity { op: "kernels::kernel", i: 0, j: 0 }),
        }
    }

    fn singular_kernel(&self, x: &[f64]) -> Option<[f64; 3]> {
        match self.periodization {
            Periodization::Ewald => {
                let g = self.green.as_ref().expect("singular models carry a Green function").gradient(x)?;
                Some(self.force_from_gradient(&g))
            }
            Periodization::ImageSum { radius } => images::image_sum(self.free_kernel(), x, radius),
        }
    }

    fn free_kernel(&self) -> FreeKernel {
        match (&self.kind, self.d()) {
            (DriftKind::BiotSavart, _) => FreeKernel::BiotSavart,
            (_, 2) => FreeKernel::Coulomb2,
            _ => FreeKernel::Coulomb3,
        }
    }

    /// Map `∇G` to the kernel: `K = −∇^⊥G` (Biot–Savart), `K = −|S^{d−1}|∇G`
    /// (Coulomb).
    fn force_from_gradient(&self, g: &[f64; 3]) -> [f64; 3] {
        match self.kind {
            DriftKind::BiotSavart => [g[1], -g[0], 0.0],
            _ => {
                let c = if self.d() == 2 { -2.0 * PI } else { -4.0 * PI };
                [c * g[0], c * g[1], c * g[2]]
            }
        }
    }

    /// Flat derivative `δb/δm(x, v) = K(x − v)`.
    pub fn flat_derivative(&self, x: &[f64], v: &[f64]) -> Result<[f64; 3]> {
        let d = self.d();
        let diff: Vec<f64> = (0..d).map(|a| x[a] - v[a]).collect();
        self.kernel(&diff).map_err(|e| match e {
            Error::Singularity { .. } => Error::Singularity { op: "kernels::flat_derivative", i: 0, j: 1 },
            other => other,
        })
    }

    /// Particle velocities `c_N Σ_{j≠i} K(X_i − X_j)`, `c_N = 1/N` or 1.
    /// `positions` holds `N·d` coordinates; the result has the same layout.
    pub fn drift_at_particles(&self, positions: &[f64], _t: f64) -> Result<Vec<f64>> {
        let d = self.d();
        let n = positions.len() / d;
        let mut v = vec![0.0; n * d];
        if n <= 1 || self.is_zero() {
            return Ok(v);
        }
        match &self.kind {
            DriftKind::Smooth { table } => self.smooth_drift(table, positions, &mut v),
            _ => self.singular_drift(positions, &mut v)?,
        }
        let scale = match self.normalization {
            Normalization::MeanField => 1.0 / n as f64,
            Normalization::Unscaled => 1.0,
        };
        for x in &mut v {
            *x *= scale;
        }
        Ok(v)
    }

    /// `Σ_j K(X_i − X_j) − K(0)` via `Σ_k K̂(k)(e^{2πik·X_i} S̄_k − 1)`, using
    /// only half of the Hermitian table.
    fn smooth_drift(&self, table: &[(Mode, [Complex64; 3])], pos: &[f64], v: &mut [f64]) {
        let d = self.d();
        let n = pos.len() / d;
        let half: Vec<&(Mode, [Complex64; 3])> =
            table.iter().filter(|(k, _)| positive(k)).collect();
        let mut phases = vec![ZERO; n * half.len()];
        let mut sums = vec![ZERO; half.len()];
        for i in 0..n {
            let x = &pos[i * d..(i + 1) * d];
            for (h, (k, _)) in half.iter().enumerate() {
                let ph: f64 = (0..d).map(|a| k[a] as f64 * x[a]).sum();
                let e = Complex64::cis(2.0 * PI * ph);
                phases[i * half.len() + h] = e;
                sums[h] += e.conj();
            }
        }
        for i in 0..n {
            for (h, (_, m)) in half.iter().enumerate() {
                let z = phases[i * half.len() + h] * sums[h] - 1.0;
                for a in 0..d {
                    v[i * d + a] += 2.0 * (m[a] * z).re;
                }
            }
        }
    }

    fn singular_drift(&self, pos: &[f64], v: &mut [f64]) -> Result<()> {
        let d = self.d();
        let n = pos.len() / d;
        if let Periodization::ImageSum { radius } = self.periodization {
            let kernel = self.free_kernel();
            for i in 0..n {
                for j in i + 1..n {
                    let x = displacement(pos, d, i, j);
                    let k = match images::image_sum(kernel, &x, radius) {
                        Some(k) => self.capped(k),
                        None if self.cap.is_some() => continue,
                        None => return Err(Error::Singularity { op: "kernels::drift_at_particles", i, j }),
                    };
                    for a in 0..d {
                        v[i * d + a] += k[a];
                        v[j * d + a] -= k[a];
                    }
                }
            }
            return Ok(());
        }
        let green = self.green.as_ref().expect("singular models carry a Green function");
        for i in 0..n {
            for j in i + 1..n {
                let x = displacement(pos, d, i, j);
                let g = match green.short_gradient(&x) {
                    Some(g) => g,
                    None if self.cap.is_some() => continue,
                    None => return Err(Error::Singularity { op: "kernels::drift_at_particles", i, j }),
                };
                let k = self.capped(self.force_from_gradient(&g));
                for a in 0..d {
                    v[i * d + a] += k[a];
                    v[j * d + a] -= k[a];
                }
            }
        }
        for (i, g) in green.long_gradients(pos).iter().enumerate() {
            let k = self.force_from_gradient(g);
            for a in 0..d {
                v[i * d + a] += k[a];
            }
        }
        Ok(())
    }

    fn capped(&self, k: [f64; 3]) -> [f64; 3] {
        match self.cap {
            Some(eps) => {
                let norm = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
                let max = 1.0 / eps;
                if norm > max {
                    let s = max / norm;
                    [k[0] * s, k[1] * s, k[2] * s]
                } else {
                    k
                }
            }
            None => k,
        }
    }
}

/// Representative half of the lattice: first nonzero component positive.
pub fn positive(k: &Mode) -> bool {
    for &c in k {
        if c != 0 {
            return c > 0;
        }
    }
    false
}
