//! Direct lattice-image sums of the free-space singular kernels.
//!
//! Summing `K(x + m)` over the cube `|m|∞ ≤ R` converges, but not to the
//! periodic kernel: the cube truncation leaves a uniform-background field that
//! is linear in `x`. For the cubic shape this field is isotropic and fixed by
//! the divergence (Coulomb) or curl (Biot–Savart) of the free kernel, so it is
//! removed analytically for `x` in the central cell.

use std::f64::consts::PI;

use super::ewald::minimal_image;

/// Free-space Biot–Savart kernel `(−x₂, x₁)/(2π|x|²)`.
pub fn biot_savart_free(x: &[f64; 3]) -> [f64; 3] {
    let r2 = x[0] * x[0] + x[1] * x[1];
    [-x[1] / (2.0 * PI * r2), x[0] / (2.0 * PI * r2), 0.0]
}

/// Free-space repulsive Coulomb force `x/|x|^d`.
pub fn coulomb_free(x: &[f64; 3], d: usize) -> [f64; 3] {
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    let s = if d == 2 { 1.0 / r2 } else { 1.0 / (r2 * r2.sqrt()) };
    [x[0] * s, x[1] * s, x[2] * s]
}

/// Which free-space kernel to periodize.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FreeKernel {
    BiotSavart,
    Coulomb2,
    Coulomb3,
}

impl FreeKernel {
    fn d(self) -> usize {
        match self {
            FreeKernel::Coulomb3 => 3,
            _ => 2,
        }
    }

    fn eval(self, x: &[f64; 3]) -> [f64; 3] {
        match self {
            FreeKernel::BiotSavart => biot_savart_free(x),
            FreeKernel::Coulomb2 => coulomb_free(x, 2),
            FreeKernel::Coulomb3 => coulomb_free(x, 3),
        }
    }

    /// Linear background field left by the cube truncation.
    fn shape_term(self, x: &[f64; 3]) -> [f64; 3] {
        match self {
            FreeKernel::BiotSavart => [-0.5 * x[1], 0.5 * x[0], 0.0],
            FreeKernel::Coulomb2 => [PI * x[0], PI * x[1], 0.0],
            FreeKernel::Coulomb3 => {
                let c = 4.0 * PI / 3.0;
                [c * x[0], c * x[1], c * x[2]]
            }
        }
    }
}

/// Truncated image sum over `|m|∞ ≤ radius` with the shape term removed.
/// Returns `None` when `x` is a lattice point.
pub fn image_sum(kernel: FreeKernel, x: &[f64], radius: i64) -> Option<[f64; 3]> {
    let d = kernel.d();
    let y = minimal_image(x, d);
    if y[..d].iter().all(|&v| v == 0.0) {
        return None;
    }
    let rz = if d == 3 { radius } else { 0 };
    let mut acc = [0.0; 3];
    for m0 in -radius..=radius {
        for m1 in -radius..=radius {
            for m2 in -rz..=rz {
                let z = [y[0] + m0 as f64, y[1] + m1 as f64, y[2] + m2 as f64];
                let k = kernel.eval(&z);
                for a in 0..3 {
                    acc[a] += k[a];
                }
            }
        }
    }
    let s = kernel.shape_term(&y);
    Some([acc[0] - s[0], acc[1] - s[1], acc[2] - s[2]])
}
