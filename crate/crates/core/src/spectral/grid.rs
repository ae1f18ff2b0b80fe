use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Lattice, SpectralField};
use crate::{Error, Result};

/// Smallest grid size `m ≥ min` whose prime factors are 2, 3 and 5.
pub fn fast_size(min: usize) -> usize {
    let mut m = min.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Grid size that makes quadratic products on `lattice` alias-free (3/2 rule).
pub fn dealiased_size(lattice: Lattice) -> usize {
    fast_size(3 * lattice.kmax() + 1)
}

/// FFT bridge between a lattice and an `m^d` sample grid at points `j/m`.
#[derive(Clone)]
pub struct GridPlan {
    lattice: Lattice,
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    map: Vec<usize>,
}

impl std::fmt::Debug for GridPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridPlan")
            .field("lattice", &self.lattice)
            .field("m", &self.m)
            .finish()
    }
}

impl GridPlan {
    pub fn new(lattice: Lattice, m: usize) -> Result<Self> {
        if m < lattice.side() {
            return Err(Error::Shape(format!(
                "grid of {m} points per axis cannot hold kmax = {} (need ≥ {})",
                lattice.kmax(),
                lattice.side()
            )));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(m);
        let inv = planner.plan_fft_inverse(m);
        let d = lattice.d();
        let map = lattice
            .modes()
            .map(|k| {
                (0..d).fold(0usize, |acc, a| {
                    acc * m + k[a].rem_euclid(m as i64) as usize
                })
            })
            .collect();
        Ok(GridPlan {
            lattice,
            m,
            fwd,
            inv,
            map,
        })
    }

    /// Plan on the 3/2-padded grid used for pointwise products.
    pub fn dealiased(lattice: Lattice) -> Self {
        Self::new(lattice, dealiased_size(lattice)).expect("padded grid is large enough")
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of grid samples, `m^d`.
    pub fn len(&self) -> usize {
        self.m.pow(self.lattice.d() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinates of grid sample `idx` (row-major, last axis fastest).
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let d = self.lattice.d();
        let mut x = [0.0; 3];
        let mut r = idx;
        for a in (0..d).rev() {
            x[a] = (r % self.m) as f64 / self.m as f64;
            r /= self.m;
        }
        x
    }

    /// Evaluate `f` at every grid point.
    pub fn to_grid(&self, f: &SpectralField) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        self.to_grid_into(f, &mut out);
        out
    }

    pub fn to_grid_into(&self, f: &SpectralField, out: &mut [Complex64]) {
        assert_eq!(f.lattice(), self.lattice, "field lattice does not match grid plan");
        out.fill(Complex64::new(0.0, 0.0));
        for (c, &g) in f.coeffs().iter().zip(&self.map) {
            out[g] = *c;
        }
        self.transform(out, &self.inv);
    }

    /// Project grid samples back to lattice coefficients. `samples` is used
    /// as scratch and left in an unspecified state.
    pub fn from_grid_into(&self, samples: &mut [Complex64], out: &mut SpectralField) {
        assert_eq!(out.lattice(), self.lattice, "field lattice does not match grid plan");
        assert_eq!(samples.len(), self.len());
        self.transform(samples, &self.fwd);
        let scale = 1.0 / self.len() as f64;
        for (c, &g) in out.coeffs_mut().iter_mut().zip(&self.map) {
            *c = samples[g] * scale;
        }
    }

    pub fn from_grid(&self, samples: &[Complex64]) -> Result<SpectralField> {
        if samples.len() != self.len() {
            return Err(Error::Shape(format!(
                "expected {} grid samples, got {}",
                self.len(),
                samples.len()
            )));
        }
        let mut buf = samples.to_vec();
        let mut out = SpectralField::zeros(self.lattice);
        self.from_grid_into(&mut buf, &mut out);
        Ok(out)
    }

    /// Dealiased product of two fields, truncated to the plan lattice.
    /// Exact on the lattice whenever `m ≥ 3·kmax + 1`.
    pub fn product(&self, a: &SpectralField, b: &SpectralField) -> SpectralField {
        let mut ga = self.to_grid(a);
        let gb = self.to_grid(b);
        for (x, y) in ga.iter_mut().zip(&gb) {
            *x *= *y;
        }
        let mut out = SpectralField::zeros(self.lattice);
        self.from_grid_into(&mut ga, &mut out);
        out
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let m = self.m;
        let d = self.lattice.d();
        // Last axis is contiguous: rustfft processes all rows in one call.
        fft.process(data);
        if d == 1 {
            return;
        }
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        for axis in 0..d - 1 {
            let stride = m.pow((d - 1 - axis) as u32);
            let block = stride * m;
            for base in (0..data.len()).step_by(block) {
                for off in 0..stride {
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = data[base + off + j * stride];
                    }
                    fft.process(&mut line);
                    for (j, v) in line.iter().enumerate() {
                        data[base + off + j * stride] = *v;
                    }
                }
            }
        }
    }
}

/// Sample `f` on an `m^d` grid (`m ≥ 2·kmax+1`).
pub fn to_grid(f: &SpectralField, m: usize) -> Result<Vec<Complex64>> {
    Ok(GridPlan::new(f.lattice(), m)?.to_grid(f))
}

/// Coefficients on `lattice` from samples on an `m^d` grid.
pub fn from_grid(samples: &[Complex64], lattice: Lattice, m: usize) -> Result<SpectralField> {
    GridPlan::new(lattice, m)?.from_grid(samples)
}
