//! SFLU lookup-table container.
//!
//! Layout (little-endian): magic "SFLU", version u16, fx f64 (mm^-1),
//! refractive index f64, grid lengths u32 x 2, the mu_a and mu_s' grids as
//! f64 arrays, then the table as (rd_dc, rd_ac) f64 pairs row-major by the
//! mu_a index. A CSV dump mode is provided for inspection.

use super::ByteReader;
use crate::error::{Error, Result};
use crate::optics::{DiffusionLut, SpatialFrequency};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"SFLU";
pub const VERSION: u16 = 1;

pub fn to_bytes(lut: &DiffusionLut) -> Vec<u8> {
    let (dc, ac) = lut.planes();
    let mut out = Vec::with_capacity(30 + 8 * (lut.mu_a_grid().len() + lut.mu_s_grid().len()) + 16 * dc.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&lut.fx().per_mm().to_le_bytes());
    out.extend_from_slice(&lut.refractive_index().to_le_bytes());
    out.extend_from_slice(&(lut.mu_a_grid().len() as u32).to_le_bytes());
    out.extend_from_slice(&(lut.mu_s_grid().len() as u32).to_le_bytes());
    for &v in lut.mu_a_grid() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in lut.mu_s_grid() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for k in 0..dc.len() {
        out.extend_from_slice(&dc[k].to_le_bytes());
        out.extend_from_slice(&ac[k].to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<DiffusionLut> {
    let mut r = ByteReader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(r.error(format!("unsupported SFLU version {version}")));
    }
    let fx = SpatialFrequency::new(r.f64("fx")?).map_err(|e| r.error(e.to_string()))?;
    let n = r.f64("refractive_index")?;
    let n_a = r.u32("mu_a grid length")? as usize;
    let n_s = r.u32("mu_s grid length")? as usize;
    let mut mu_a_grid = Vec::with_capacity(n_a);
    for _ in 0..n_a {
        mu_a_grid.push(r.f64("mu_a grid value")?);
    }
    let mut mu_s_grid = Vec::with_capacity(n_s);
    for _ in 0..n_s {
        mu_s_grid.push(r.f64("mu_s grid value")?);
    }
    let mut rd_dc = Vec::with_capacity(n_a * n_s);
    let mut rd_ac = Vec::with_capacity(n_a * n_s);
    for _ in 0..n_a * n_s {
        rd_dc.push(r.f64("rd_dc")?);
        rd_ac.push(r.f64("rd_ac")?);
    }
    r.expect_end()?;
    DiffusionLut::from_stored(fx, mu_a_grid, mu_s_grid, rd_dc, rd_ac, n)
        .map_err(|e| Error::Parse { offset: r.offset(), message: e.to_string() })
}

/// CSV dump: one row per node, header mu_a,mu_s_prime,rd_dc,rd_ac.
pub fn to_csv(lut: &DiffusionLut) -> String {
    let mut out = String::from("mu_a,mu_s_prime,rd_dc,rd_ac\n");
    for (i, &mu_a) in lut.mu_a_grid().iter().enumerate() {
        for (j, &mu_s) in lut.mu_s_grid().iter().enumerate() {
            let e = lut.entry(i, j);
            out.push_str(&format!("{mu_a:.9},{mu_s:.9},{:.9},{:.9}\n", e.rd_dc, e.rd_ac));
        }
    }
    out
}

pub fn write_file(path: &Path, lut: &DiffusionLut) -> Result<()> {
    std::fs::write(path, to_bytes(lut))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<DiffusionLut> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::GridAxis;

    #[test]
    fn round_trip_is_bit_identical() {
        let lut = DiffusionLut::build(
            SpatialFrequency::new(0.25).unwrap(),
            GridAxis::log(0.001, 0.05, 12),
            GridAxis::linear(0.3, 2.0, 9),
            1.37,
        )
        .unwrap();
        let bytes = to_bytes(&lut);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, lut);
        assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn csv_dump_has_expected_shape() {
        let lut = DiffusionLut::build(
            SpatialFrequency::new(0.2).unwrap(),
            GridAxis::log(0.001, 0.05, 4),
            GridAxis::linear(0.3, 2.0, 3),
            1.4,
        )
        .unwrap();
        let csv = to_csv(&lut);
        assert_eq!(csv.lines().count(), 1 + 12);
        assert!(csv.starts_with("mu_a,mu_s_prime,rd_dc,rd_ac\n"));
    }

    #[test]
    fn truncation_is_a_parse_error() {
        let lut = DiffusionLut::build(
            SpatialFrequency::new(0.2).unwrap(),
            GridAxis::log(0.001, 0.05, 4),
            GridAxis::linear(0.3, 2.0, 3),
            1.4,
        )
        .unwrap();
        let bytes = to_bytes(&lut);
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Parse { .. })));
    }
}
