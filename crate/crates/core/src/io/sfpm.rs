//! SFPM property-map container.
//!
//! Layout (little-endian): magic "SFPM", version u16, width u32, height u32,
//! an f32 mu_a plane, an f32 mu_s' plane, a u8 mask plane (0/1), then a
//! UTF-8 JSON provenance footer (reference ids, spatial frequencies,
//! wavelength, smoothing sigma) running to end of file.

use super::ByteReader;
use crate::error::{Error, Result};
use crate::pipeline::{PropertyMap, Provenance};
use ndarray::Array2;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"SFPM";
pub const VERSION: u16 = 1;

pub fn to_bytes(map: &PropertyMap) -> Vec<u8> {
    let (h, w) = map.mu_a.dim();
    let mut out = Vec::with_capacity(14 + 9 * w * h + 128);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    for &v in map.mu_a.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &v in map.mu_s_prime.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &m in map.mask.iter() {
        out.push(u8::from(m));
    }
    let footer = serde_json::to_string(&map.provenance).expect("provenance serializes");
    out.extend_from_slice(footer.as_bytes());
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<PropertyMap> {
    let mut r = ByteReader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(r.error(format!("unsupported SFPM version {version}")));
    }
    let w = r.u32("width")? as usize;
    let h = r.u32("height")? as usize;
    if w == 0 || h == 0 {
        return Err(r.error("zero map dimension"));
    }
    let mut mu_a = Array2::<f64>::zeros((h, w));
    for v in mu_a.iter_mut() {
        *v = r.f32("mu_a plane")? as f64;
    }
    let mut mu_s = Array2::<f64>::zeros((h, w));
    for v in mu_s.iter_mut() {
        *v = r.f32("mu_s plane")? as f64;
    }
    let mut mask = Array2::<bool>::from_elem((h, w), false);
    for m in mask.iter_mut() {
        let b = r.u8("mask plane")?;
        if b > 1 {
            return Err(r.error(format!("mask byte {b} is not 0/1")));
        }
        *m = b == 1;
    }
    let footer_offset = r.offset();
    let footer = r.rest();
    let provenance: Provenance = serde_json::from_slice(footer).map_err(|e| Error::Parse {
        offset: footer_offset,
        message: format!("provenance footer: {e}"),
    })?;
    Ok(PropertyMap { mu_a, mu_s_prime: mu_s, mask, provenance })
}

pub fn write_file(path: &Path, map: &PropertyMap) -> Result<()> {
    std::fs::write(path, to_bytes(map))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<PropertyMap> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes)
}
