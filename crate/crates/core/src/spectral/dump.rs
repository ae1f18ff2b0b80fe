use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Lattice, SpectralField};
use crate::{Error, Result};

pub const BINARY_MAGIC: &[u8; 5] = b"FLSF1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldDump {
    d: usize,
    kmax: usize,
    coeffs: Vec<[f64; 2]>,
}

pub fn to_json(f: &SpectralField) -> String {
    let dump = FieldDump {
        d: f.d(),
        kmax: f.kmax(),
        coeffs: f.coeffs().iter().map(|c| [c.re, c.im]).collect(),
    };
    serde_json::to_string(&dump).expect("field dump serializes")
}

pub fn from_json(s: &str) -> Result<SpectralField> {
    let dump: FieldDump =
        serde_json::from_str(s).map_err(|e| Error::Format(format!("field JSON: {e}")))?;
    let lattice = checked_lattice(dump.d, dump.kmax)?;
    let coeffs = dump
        .coeffs
        .into_iter()
        .map(|[re, im]| Complex64::new(re, im))
        .collect();
    SpectralField::from_coeffs(lattice, coeffs)
}

/// Binary layout: magic `FLSF1`, `d` and `kmax` as little-endian `u32`, then
/// `(re, im)` little-endian `f64` pairs in lattice order.
pub fn to_binary(f: &SpectralField) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 16 * f.coeffs().len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(f.d() as u32).to_le_bytes());
    out.extend_from_slice(&(f.kmax() as u32).to_le_bytes());
    for c in f.coeffs() {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
    out
}

pub fn from_binary(bytes: &[u8]) -> Result<SpectralField> {
    if bytes.len() < 13 || &bytes[..5] != BINARY_MAGIC {
        return Err(Error::Format("binary field dump: missing FLSF1 header".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let lattice = checked_lattice(word(5), word(9))?;
    let body = &bytes[13..];
    if body.len() != 16 * lattice.len() {
        return Err(Error::Format(format!(
            "binary field dump: expected {} payload bytes, found {}",
            16 * lattice.len(),
            body.len()
        )));
    }
    let coeffs = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    SpectralField::from_coeffs(lattice, coeffs)
}

/// Refuse lattices whose coefficient count would not fit in memory; decoders
/// see untrusted headers.
fn checked_lattice(d: usize, kmax: usize) -> Result<Lattice> {
    const MAX_COEFFS: u128 = 1 << 28;
    let lattice = Lattice::new(d, kmax)?;
    let len = (2 * kmax as u128 + 1).pow(d as u32);
    if len > MAX_COEFFS {
        return Err(Error::Format(format!("lattice d={d} kmax={kmax} is too large")));
    }
    Ok(lattice)
}
