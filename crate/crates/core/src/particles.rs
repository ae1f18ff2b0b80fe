//! Euler–Maruyama integration of the interacting particle system on the torus.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::kernels::DriftModel;
use crate::rng::{stream, Purpose};
use crate::spectral::{embed_empirical, to_grid, Lattice, SpectralField};
use crate::{Complex64, Error, Result};

/// Positions of `N` particles in `[0,1)^d` plus one noise stream per particle.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    d: usize,
    positions: Vec<f64>,
    displacement: Vec<f64>,
    t: f64,
    replica: u64,
    streams: Vec<ChaCha8Rng>,
}

fn wrap(x: f64) -> f64 {
    let y = x - x.floor();
    // x.floor() can round so that y == 1.0 for tiny negative x.
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

impl ParticleEnsemble {
    /// Ensemble at `t = 0` with noise streams keyed by `(master, replica, particle)`.
    pub fn new(d: usize, positions: Vec<f64>, master: u64, replica: u64) -> Result<Self> {
        let n = positions.len() / d.max(1);
        let streams = (0..n as u64)
            .map(|i| stream(master, Purpose::ParticleNoise, replica, i))
            .collect();
        Self::from_parts(d, positions, replica, streams)
    }

    /// Ensemble with explicitly supplied per-particle noise streams.
    pub fn from_parts(d: usize, positions: Vec<f64>, replica: u64, streams: Vec<ChaCha8Rng>) -> Result<Self> {
        if !(1..=3).contains(&d) || positions.is_empty() || !positions.len().is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "{} coordinates do not form a non-empty set of d={d} points",
                positions.len()
            )));
        }
        if streams.len() != positions.len() / d {
            return Err(Error::Shape(format!(
                "{} noise streams for {} particles",
                streams.len(),
                positions.len() / d
            )));
        }
        let positions: Vec<f64> = positions.into_iter().map(wrap).collect();
        Ok(ParticleEnsemble {
            d,
            displacement: vec![0.0; positions.len()],
            positions,
            t: 0.0,
            replica,
            streams,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Accumulated unwrapped displacement since `t = 0`.
    pub fn displacement(&self) -> &[f64] {
        &self.displacement
    }

    /// Exact duplicates are the only collisions a singular kernel cannot
    /// survive at `t = 0`; report the first one found.
    pub fn check_distinct(&self) -> Result<()> {
        let d = self.d;
        let mut order: Vec<usize> = (0..self.len()).collect();
        let key = |i: usize| &self.positions[i * d..(i + 1) * d];
        order.sort_by(|&a, &b| key(a).partial_cmp(key(b)).expect("positions are finite"));
        for w in order.windows(2) {
            if key(w[0]) == key(w[1]) {
                let (i, j) = (w[0].min(w[1]), w[0].max(w[1]));
                return Err(Error::Singularity { op: "particles::sample_initial", i, j });
            }
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. points from `density` by rejection against the bound
/// `Σ|c_k| ≥ max μ`.
pub fn sample_initial(density: &SpectralField, n: usize, master: u64, replica: u64) -> Result<ParticleEnsemble> {
    let lattice = density.lattice();
    let d = lattice.d();
    if n == 0 {
        return Err(Error::Domain("particle count must be at least 1".into()));
    }
    if !density.is_real(1e-12) || (density.c0() - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
        return Err(Error::Domain("initial density must be real with unit mass".into()));
    }
    let uniform = density
        .coeffs()
        .iter()
        .enumerate()
        .all(|(i, c)| i == lattice.zero_index() || *c == Complex64::new(0.0, 0.0));
    let mut rng = stream(master, Purpose::InitialParticles, replica, 0);
    let mut positions = Vec::with_capacity(n * d);
    if uniform {
        positions.extend((0..n * d).map(|_| rng.random::<f64>()));
    } else {
        let m = 4 * lattice.side();
        let min = to_grid(density, m)?.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(Error::Domain(format!("initial density is negative on the grid (min {min:.3e})")));
        }
        let envelope: f64 = density.coeffs().iter().map(|c| c.norm()).sum();
        let mut x = [0.0; 3];
        while positions.len() < n * d {
            for v in x.iter_mut().take(d) {
                *v = rng.random::<f64>();
            }
            let u: f64 = rng.random();
            if u * envelope < density.eval(&x[..d]).re {
                positions.extend_from_slice(&x[..d]);
            }
        }
    }
    ParticleEnsemble::new(d, positions, master, replica)
}

/// One Euler–Maruyama step `X ← wrap(X + b dt + σ √dt ξ)`. On a drift error the
/// ensemble is left untouched.
pub fn step_em(ens: &mut ParticleEnsemble, model: &DriftModel, dt: f64, sigma: f64) -> Result<()> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be non-negative, got {sigma}")));
    }
    if model.d() != ens.d {
        return Err(Error::Shape(format!("model is d={} but ensemble is d={}", model.d(), ens.d)));
    }
    let drift = if model.is_zero() {
        None
    } else {
        Some(model.drift_at_particles(&ens.positions, ens.t)?)
    };
    let d = ens.d;
    let amp = sigma * dt.sqrt();
    for (i, rng) in ens.streams.iter_mut().enumerate() {
        for a in 0..d {
            let idx = i * d + a;
            let xi: f64 = rng.sample(StandardNormal);
            let mut inc = amp * xi;
            if let Some(b) = &drift {
                inc += b[idx] * dt;
            }
            ens.displacement[idx] += inc;
            ens.positions[idx] = wrap(ens.positions[idx] + inc);
        }
    }
    ens.t += dt;
    Ok(())
}

/// `√N (μ^N − μ)` on the lattice of `mu`; the zero mode is exactly 0.
pub fn fluctuation_field(ens: &ParticleEnsemble, mu: &SpectralField) -> Result<SpectralField> {
    fluctuation_on(ens.positions(), mu)
}

pub(crate) fn fluctuation_on(positions: &[f64], mu: &SpectralField) -> Result<SpectralField> {
    let lattice: Lattice = mu.lattice();
    let n = positions.len() / lattice.d();
    let mut rho = embed_empirical(positions, lattice)?.sub(mu).scaled((n as f64).sqrt());
    rho.coeffs_mut()[lattice.zero_index()] = Complex64::new(0.0, 0.0);
    Ok(rho)
}

/// CSV header for trajectory dumps: `t,replica,particle,x1..xd`.
pub fn write_trajectory_header(out: &mut impl Write, d: usize) -> std::io::Result<()> {
    write!(out, "t,replica,particle")?;
    for a in 1..=d {
        write!(out, ",x{a}")?;
    }
    writeln!(out)
}

pub fn write_trajectory_rows(out: &mut impl Write, ens: &ParticleEnsemble) -> std::io::Result<()> {
    for (i, x) in ens.positions.chunks_exact(ens.d).enumerate() {
        write!(out, "{},{},{}", ens.t, ens.replica, i)?;
        for v in x {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
