//! Ewald splitting of the periodic Coulomb potential.
//!
//! `G` is the mean-zero periodic solution of `-ΔG = δ - 1` on the unit torus
//! (multiplier `1/(4π²|k|²)`), so `G(x) ≈ -ln|x|/(2π)` in d=2 and
//! `G(x) ≈ 1/(4π|x|)` in d=3. With a Gaussian screening width `1/α`,
//!
//! ```text
//! G = Σ_m S(|x+m|) - 1/(4α²) + Σ_{k≠0} e^{-π²|k|²/α²}/(4π²|k|²) cos(2πk·x)
//! ```
//!
//! where `S(r) = E1(α²r²)/(4π)` (d=2) or `erfc(αr)/(4πr)` (d=3).

use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::function::erf::erfc;

use crate::spectral::Mode;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
pub fn e1(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for n in 1..60 {
            term *= -x / n as f64;
            let add = -term / n as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        -EULER_GAMMA - x.ln() + sum
    } else {
        // Modified Lentz evaluation of the continued fraction.
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

const EIN_DEGREE: usize = 13;

/// `Ein(x) = E1(x) + γ + ln x`, an entire function, as degree-13 Chebyshev
/// series on unit intervals. Pair sums call `E1` millions of times and the
/// continued fraction is too slow for that.
#[derive(Clone, Debug)]
struct EinTable {
    pieces: Vec<[f64; EIN_DEGREE + 1]>,
}

impl EinTable {
    fn new(xmax: f64) -> Self {
        let m = EIN_DEGREE + 1;
        let pieces = (0..xmax.ceil() as usize)
            .map(|j| {
                let nodes: Vec<f64> = (0..m).map(|i| (PI * (i as f64 + 0.5) / m as f64).cos()).collect();
                let vals: Vec<f64> = nodes
                    .iter()
                    .map(|t| {
                        let x = j as f64 + 0.5 * (t + 1.0);
                        e1(x) + EULER_GAMMA + x.ln()
                    })
                    .collect();
                let mut c = [0.0; EIN_DEGREE + 1];
                for (q, cq) in c.iter_mut().enumerate() {
                    let sum: f64 = (0..m).map(|i| vals[i] * (PI * q as f64 * (i as f64 + 0.5) / m as f64).cos()).sum();
                    *cq = 2.0 * sum / m as f64;
                }
                c[0] *= 0.5;
                c
            })
            .collect();
        EinTable { pieces }
    }

    /// `E1(x)`; falls back to the direct evaluation outside the table.
    #[inline]
    fn e1(&self, x: f64) -> f64 {
        let j = x as usize;
        let Some(c) = self.pieces.get(j) else { return e1(x) };
        if x < 1e-300 {
            return e1(x);
        }
        let t = 2.0 * (x - j as f64) - 1.0;
        let (mut b1, mut b2) = (0.0, 0.0);
        for &cq in c[1..].iter().rev() {
            let b0 = 2.0 * t * b1 - b2 + cq;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + c[0] - EULER_GAMMA - x.ln()
    }
}

/// Periodic Coulomb potential and its gradient on the unit torus, d ∈ {2, 3}.
#[derive(Clone, Debug)]
pub struct PeriodicGreen {
    d: usize,
    alpha: f64,
    rcut2: f64,
    ein: EinTable,
    /// Half-space wave vectors with their screened weights `e^{-π²|k|²/α²}/|k|²`.
    waves: Vec<(Mode, f64)>,
    kc: i64,
}

impl PeriodicGreen {
    /// Accuracy `tol` is relative to the O(1) scale of `G` near unit distance.
    pub fn new(d: usize, alpha: f64, tol: f64) -> Self {
        assert!(d == 2 || d == 3, "periodic Coulomb potential needs d = 2 or 3");
        let log = (1.0 / tol).ln();
        let rcut = log.sqrt() / alpha;
        let kc = (alpha * log.sqrt() / PI).ceil() as i64;
        let mut waves = Vec::new();
        let kz = if d == 3 { kc } else { 0 };
        for k0 in -kc..=kc {
            for k1 in -kc..=kc {
                for k2 in -kz..=kz {
                    let k = [k0, k1, k2];
                    if !in_half_space(&k) {
                        continue;
                    }
                    let k2n = (k0 * k0 + k1 * k1 + k2 * k2) as f64;
                    let w = (-PI * PI * k2n / (alpha * alpha)).exp();
                    if w < tol * 1e-2 {
                        continue;
                    }
                    waves.push((k, w / k2n));
                }
            }
        }
        PeriodicGreen {
            d,
            alpha,
            rcut2: rcut * rcut,
            ein: EinTable::new(if d == 2 { log + 1.0 } else { 0.0 }),
            waves,
            kc,
        }
    }

    /// Default splitting for point evaluations and O(N²) particle drifts.
    pub fn standard(d: usize) -> Self {
        Self::new(d, 6.0, 1e-15)
    }

    /// Splitting tuned for pair sums over `n` points: balances the cell-list
    /// short-range cost against the wave count.
    pub fn for_count(d: usize, n: usize) -> Self {
        Self::new(d, (1000.0 * n as f64).powf(0.25).max(6.0), 1e-13)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cutoff(&self) -> f64 {
        self.rcut2.sqrt()
    }

    pub fn wave_cutoff(&self) -> i64 {
        self.kc
    }

    /// Short-range potential `S(r)` at squared distance `r2`.
    pub fn short_value(&self, r2: f64) -> f64 {
        let a = self.alpha;
        if self.d == 2 {
            self.ein.e1(a * a * r2) / (4.0 * PI)
        } else {
            let r = r2.sqrt();
            erfc(a * r) / (4.0 * PI * r)
        }
    }

    /// `S'(r)/r`, so that `∇S(y) = y · short_grad_factor(|y|²)`.
    pub fn short_grad_factor(&self, r2: f64) -> f64 {
        let a = self.alpha;
        if self.d == 2 {
            -(-a * a * r2).exp() / (2.0 * PI * r2)
        } else {
            let r = r2.sqrt();
            -(erfc(a * r) / r2 + 2.0 * a / PI.sqrt() * (-a * a * r2).exp() / r) / (4.0 * PI * r)
        }
    }

    pub fn background(&self) -> f64 {
        -1.0 / (4.0 * self.alpha * self.alpha)
    }

    /// Sum the short-range part over the lattice images of a minimal-image
    /// displacement `x`. Returns `None` if some image sits at the origin.
    fn short_images(&self, x: &[f64; 3], mut f: impl FnMut(&[f64; 3], f64)) -> Option<()> {
        let reach = (self.rcut2.sqrt() + 0.5).ceil() as i64;
        let rz = if self.d == 3 { reach } else { 0 };
        for m0 in -reach..=reach {
            for m1 in -reach..=reach {
                for m2 in -rz..=rz {
                    let y = [x[0] + m0 as f64, x[1] + m1 as f64, x[2] + m2 as f64];
                    let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
                    if r2 >= self.rcut2 {
                        continue;
                    }
                    if r2 == 0.0 {
                        return None;
                    }
                    f(&y, r2);
                }
            }
        }
        Some(())
    }

    /// `G(x)`; `None` at lattice points.
    pub fn value(&self, x: &[f64]) -> Option<f64> {
        let y = minimal_image(x, self.d);
        let mut acc = self.background();
        self.short_images(&y, |_, r2| acc += self.short_value(r2))?;
        for (k, w) in &self.waves {
            let ph = 2.0 * PI * (k[0] as f64 * y[0] + k[1] as f64 * y[1] + k[2] as f64 * y[2]);
            acc += 2.0 * w * ph.cos() / (4.0 * PI * PI);
        }
        Some(acc)
    }

    /// `∇G(x)`; `None` at lattice points.
    pub fn gradient(&self, x: &[f64]) -> Option<[f64; 3]> {
        let y = minimal_image(x, self.d);
        let mut g = [0.0; 3];
        self.short_images(&y, |z, r2| {
            let f = self.short_grad_factor(r2);
            for a in 0..3 {
                g[a] += f * z[a];
            }
        })?;
        for (k, w) in &self.waves {
            let ph = 2.0 * PI * (k[0] as f64 * y[0] + k[1] as f64 * y[1] + k[2] as f64 * y[2]);
            let s = -ph.sin() * w / PI;
            for a in 0..3 {
                g[a] += s * k[a] as f64;
            }
        }
        Some(g)
    }

    /// Short-range gradient between two minimal-image-reduced points; used by
    /// the pairwise particle loop.
    pub fn short_gradient(&self, x: &[f64; 3]) -> Option<[f64; 3]> {
        let mut g = [0.0; 3];
        self.short_images(x, |z, r2| {
            let f = self.short_grad_factor(r2);
            for a in 0..3 {
                g[a] += f * z[a];
            }
        })?;
        Some(g)
    }

    /// Long-range gradient `Σ_j ∇L(X_i − X_j)` for every particle, via
    /// structure factors. `∇L(0) = 0`, so self-pairs need no correction.
    pub fn long_gradients(&self, points: &[f64]) -> Vec<[f64; 3]> {
        let d = self.d;
        let n = points.len() / d;
        let kc = self.kc as usize;
        let side = 2 * kc + 1;
        let phases = phase_tables(points, d, kc);
        let mut s = vec![Complex64::new(0.0, 0.0); self.waves.len()];
        for i in 0..n {
            let tab = &phases[i * d * side..(i + 1) * d * side];
            for (sk, (k, _)) in s.iter_mut().zip(&self.waves) {
                *sk += wave(tab, k, d, kc);
            }
        }
        let mut out = vec![[0.0; 3]; n];
        for (i, o) in out.iter_mut().enumerate() {
            let tab = &phases[i * d * side..(i + 1) * d * side];
            for (sk, (k, w)) in s.iter().zip(&self.waves) {
                let e = wave(tab, k, d, kc);
                let im = (e * sk.conj()).im;
                let f = -im * w / PI;
                for a in 0..d {
                    o[a] += f * k[a] as f64;
                }
            }
        }
        out
    }

    /// `Σ_{k≠0} e^{-π²|k|²/α²}/(4π²|k|²) (|S_k|² − N)`: the long-range part of
    /// `Σ_{i≠j} G(x_i − x_j)`.
    pub fn long_pair_sum(&self, points: &[f64]) -> f64 {
        let d = self.d;
        let n = points.len() / d;
        let kc = self.kc as usize;
        let side = 2 * kc + 1;
        let phases = phase_tables(points, d, kc);
        let mut s = vec![Complex64::new(0.0, 0.0); self.waves.len()];
        for i in 0..n {
            let tab = &phases[i * d * side..(i + 1) * d * side];
            for (sk, (k, _)) in s.iter_mut().zip(&self.waves) {
                *sk += wave(tab, k, d, kc);
            }
        }
        let total: f64 = s
            .iter()
            .zip(&self.waves)
            .map(|(sk, (_, w))| w * (sk.norm_sqr() - n as f64))
            .sum();
        2.0 * total / (4.0 * PI * PI)
    }

    /// `Σ_{i≠j} G(x_i − x_j)` using a cell list for the short-range part.
    pub fn pair_sum(&self, points: &[f64]) -> Option<f64> {
        let n = points.len() / self.d;
        let short = self.short_pair_sum(points)?;
        let bg = self.background() * (n as f64) * (n as f64 - 1.0);
        Some(short + bg + self.long_pair_sum(points))
    }

    fn short_pair_sum(&self, points: &[f64]) -> Option<f64> {
        let d = self.d;
        let n = points.len() / d;
        let rcut = self.rcut2.sqrt();
        let nc = (1.0 / rcut).floor() as usize;
        if nc < 3 {
            let mut acc = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    let x = displacement(points, d, i, j);
                    self.short_images(&x, |_, r2| acc += self.short_value(r2))?;
                }
            }
            return Some(2.0 * acc);
        }
        // With rcut ≤ 1/3 only the minimal image can be in range.
        let cells = CellList::new(points, d, nc);
        let mut acc = 0.0;
        for (c, members) in cells.cells.iter().enumerate() {
            for nb in cells.neighbours(c) {
                if nb < c {
                    continue;
                }
                let other = &cells.cells[nb];
                for (ii, &i) in members.iter().enumerate() {
                    let start = if nb == c { ii + 1 } else { 0 };
                    for &j in &other[start..] {
                        let x = displacement(points, d, i, j);
                        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                        if r2 == 0.0 {
                            return None;
                        }
                        if r2 < self.rcut2 {
                            acc += self.short_value(r2);
                        }
                    }
                }
            }
        }
        Some(2.0 * acc)
    }
}

fn in_half_space(k: &Mode) -> bool {
    for &c in k {
        if c != 0 {
            return c > 0;
        }
    }
    false
}

/// Minimal-image representative in `[-1/2, 1/2)^d`.
pub fn minimal_image(x: &[f64], d: usize) -> [f64; 3] {
    let mut y = [0.0; 3];
    for a in 0..d {
        y[a] = x[a] - (x[a] + 0.5).floor();
    }
    y
}

pub(crate) fn displacement(points: &[f64], d: usize, i: usize, j: usize) -> [f64; 3] {
    let mut x = [0.0; 3];
    for a in 0..d {
        let v = points[i * d + a] - points[j * d + a];
        x[a] = v - (v + 0.5).floor();
    }
    x
}

/// Per-particle tables `e^{2πi k x_a}` for `k = -kc..kc`, laid out
/// `[particle][axis][k]`.
fn phase_tables(points: &[f64], d: usize, kc: usize) -> Vec<Complex64> {
    let side = 2 * kc + 1;
    let n = points.len() / d;
    let mut out = vec![Complex64::new(0.0, 0.0); n * d * side];
    for i in 0..n {
        for a in 0..d {
            let w = Complex64::cis(2.0 * PI * points[i * d + a]);
            let row = &mut out[(i * d + a) * side..(i * d + a + 1) * side];
            row[kc] = Complex64::new(1.0, 0.0);
            for j in 1..=kc {
                row[kc + j] = row[kc + j - 1] * w;
                row[kc - j] = row[kc + j].conj();
            }
        }
    }
    out
}

#[inline]
fn wave(tab: &[Complex64], k: &Mode, d: usize, kc: usize) -> Complex64 {
    let side = 2 * kc + 1;
    let mut e = tab[(k[0] + kc as i64) as usize];
    for a in 1..d {
        e *= tab[a * side + (k[a] + kc as i64) as usize];
    }
    e
}

struct CellList {
    d: usize,
    nc: usize,
    cells: Vec<Vec<usize>>,
}

impl CellList {
    fn new(points: &[f64], d: usize, nc: usize) -> Self {
        let mut cells = vec![Vec::new(); nc.pow(d as u32)];
        for (i, x) in points.chunks_exact(d).enumerate() {
            let mut c = 0;
            for &xa in x {
                let ca = ((xa.rem_euclid(1.0) * nc as f64) as usize).min(nc - 1);
                c = c * nc + ca;
            }
            cells[c].push(i);
        }
        CellList { d, nc, cells }
    }

    fn neighbours(&self, c: usize) -> Vec<usize> {
        let nc = self.nc as i64;
        let mut coord = [0i64; 3];
        let mut r = c as i64;
        for a in (0..self.d).rev() {
            coord[a] = r % nc;
            r /= nc;
        }
        let span = |a: usize| if a < self.d { -1..=1 } else { 0..=0 };
        let mut out = Vec::with_capacity(27);
        for o0 in span(0) {
            for o1 in span(1) {
                for o2 in span(2) {
                    let off = [o0, o1, o2];
                    let mut idx = 0i64;
                    for a in 0..self.d {
                        idx = idx * nc + (coord[a] + off[a]).rem_euclid(nc);
                    }
                    out.push(idx as usize);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}
