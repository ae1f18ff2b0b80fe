//! Coulomb modulated energy of an empirical measure against a density.

use std::f64::consts::PI;

use rand::seq::IndexedRandom;
use serde::Serialize;

use super::{loglog, par_replicas, uniform_points};
use crate::kernels::ewald::PeriodicGreen;
use crate::kernels::{DriftKind, DriftModel};
use crate::rng::{stream, Purpose};
use crate::spectral::{eval_at_points, norm2, pairing, SpectralField};
use crate::stats::{mean_se, quantile};
use crate::{Complex64, Error, Result};

/// `G*μ` with `Ĝ(k) = 1/(4π²|k|²)`, `Ĝ(0) = 0`.
pub(crate) fn coulomb_potential(mu: &SpectralField) -> SpectralField {
    mu.map(|k, c| {
        let k2 = norm2(k);
        if k2 == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            c / (4.0 * PI * PI * k2)
        }
    })
}

fn coincident_pair(points: &[f64], d: usize) -> (usize, usize) {
    let n = points.len() / d;
    for i in 0..n {
        for j in i + 1..n {
            if points[i * d..(i + 1) * d] == points[j * d..(j + 1) * d] {
                return (i, j);
            }
        }
    }
    (0, 0)
}

/// `F_N = σ^{-2} [N^{-2} Σ_{i≠j} G(x_i − x_j) − (2/N) Σ_i (G*μ)(x_i) + ⟨G*μ, μ⟩]`,
/// the off-diagonal Coulomb energy of `μ^N − μ`.
pub fn modulated_energy(points: &[f64], mu: &SpectralField, model: &DriftModel, sigma: f64) -> Result<f64> {
    if !matches!(model.kind(), DriftKind::Coulomb) {
        return Err(Error::Domain(format!("modulated energy needs the Coulomb model, got {}", model.name())));
    }
    if sigma <= 0.0 {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let d = model.d();
    if mu.d() != d || points.is_empty() || !points.len().is_multiple_of(d) {
        return Err(Error::Shape(format!("{} coordinates do not form points in d = {d}", points.len())));
    }
    let n = points.len() / d;
    let pair = PeriodicGreen::for_count(d, n).pair_sum(points).ok_or_else(|| {
        let (i, j) = coincident_pair(points, d);
        Error::Singularity { op: "experiments::modulated_energy", i, j }
    })?;
    let g_mu = coulomb_potential(mu);
    let cross: f64 = if g_mu.coeffs().iter().all(|c| c.norm() == 0.0) {
        0.0
    } else {
        eval_at_points(&[&g_mu], points)?.iter().sum()
    };
    let self_term = pairing(&g_mu, mu)?.re;
    let nf = n as f64;
    Ok((pair / (nf * nf) - 2.0 * cross / nf + self_term) / (sigma * sigma))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyRow {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub mean_abs: f64,
    pub se_abs: f64,
    pub replicas: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
    /// Log-log slope of `E|F_N|` against N with a 95% bootstrap interval.
    pub slope: f64,
    pub slope_ci: (f64, f64),
}

/// `F_N` for i.i.d. uniform points at each N.
pub fn energy_decay(
    model: &DriftModel,
    sigma: f64,
    ns: &[usize],
    replicas: usize,
    resamples: usize,
    seed: u64,
) -> Result<EnergyReport> {
    if ns.len() < 3 || replicas < 2 {
        return Err(Error::InsufficientData("energy decay needs three N values and two replicas".into()));
    }
    let d = model.d();
    let mu = SpectralField::uniform(model.lattice());
    let mut rows = Vec::with_capacity(ns.len());
    let mut samples = Vec::with_capacity(ns.len());
    for &n in ns {
        let xs = par_replicas(replicas, |r| modulated_energy(&uniform_points(seed, d, n, r as u64), &mu, model, sigma))?;
        let m = mean_se(&xs);
        let abs: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
        let a = mean_se(&abs);
        rows.push(EnergyRow { n, mean: m.mean, se: m.se, mean_abs: a.mean, se_abs: a.se, replicas });
        samples.push(abs);
    }
    let pts: Vec<(usize, f64)> = rows.iter().map(|r| (r.n, r.mean_abs)).collect();
    let slope = loglog(&pts).0;
    let mut boot = par_replicas(resamples, |b| {
        let mut rng = stream(seed, Purpose::Bootstrap, b as u64, 1);
        let pts: Vec<(usize, f64)> = samples
            .iter()
            .zip(ns)
            .map(|(xs, &n)| (n, (0..xs.len()).map(|_| *xs.choose(&mut rng).expect("non-empty")).sum::<f64>() / xs.len() as f64))
            .collect();
        Ok(loglog(&pts).0)
    })?;
    boot.sort_by(f64::total_cmp);
    Ok(EnergyReport { rows, slope, slope_ci: (quantile(&boot, 0.025), quantile(&boot, 0.975)) })
}
