//! Domain types, the diffusion-approximation forward model of spatially
//! modulated diffuse reflectance, and lookup-table construction/inversion.
//!
//! The forward model is the standard semi-infinite diffusion expression:
//!
//! ```text
//! mu_tr   = mu_a + mu_s'
//! a'      = mu_s' / mu_tr
//! mu_eff' = sqrt(3 mu_a mu_tr + (2 pi fx)^2)
//! R_eff   = 0.0636 n + 0.668 + 0.710/n - 1.440/n^2
//! A       = (1 - R_eff) / (2 (1 + R_eff))
//! Rd(fx)  = 3 A a' / ((mu_eff'/mu_tr + 1) (mu_eff'/mu_tr + 3A))
//! ```
//!
//! Rd is dimensionless in [0, 1] and strictly decreasing in `fx`. Along
//! `mu_a` the planar (fx = 0) response is strictly decreasing everywhere;
//! the modulated response flattens to a shallow extremum in the
//! low-absorption/low-albedo corner where `2 pi fx` dominates the transport
//! coefficient, so inversion leans on the DC axis for absorption.

use crate::error::{Error, Result};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Default refractive index when none is configured (soft-tissue value).
pub const DEFAULT_REFRACTIVE_INDEX: f64 = 1.4;

/// Absorption and reduced scattering coefficients at one wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalProperties {
    /// Absorption coefficient mu_a, mm^-1.
    pub mu_a: f64,
    /// Reduced scattering coefficient mu_s', mm^-1.
    pub mu_s_prime: f64,
    /// Illumination wavelength, nm.
    pub wavelength_nm: f64,
}

impl OpticalProperties {
    pub fn new(mu_a: f64, mu_s_prime: f64, wavelength_nm: f64) -> Result<Self> {
        let p = Self { mu_a, mu_s_prime, wavelength_nm };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_a.is_finite() && self.mu_a > 0.0) {
            return Err(Error::invalid(format!("mu_a must be finite and > 0, got {}", self.mu_a)));
        }
        if !(self.mu_s_prime.is_finite() && self.mu_s_prime > 0.0) {
            return Err(Error::invalid(format!(
                "mu_s' must be finite and > 0, got {}",
                self.mu_s_prime
            )));
        }
        if !(self.wavelength_nm.is_finite() && self.wavelength_nm > 0.0) {
            return Err(Error::invalid(format!(
                "wavelength must be finite and > 0 nm, got {}",
                self.wavelength_nm
            )));
        }
        Ok(())
    }
}

/// Spatial frequency of the projected fringes at the sample plane, mm^-1.
/// Zero denotes planar (DC) illumination.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SpatialFrequency(f64);

impl SpatialFrequency {
    /// Planar illumination.
    pub const PLANAR: SpatialFrequency = SpatialFrequency(0.0);

    pub fn new(fx_per_mm: f64) -> Result<Self> {
        if !(fx_per_mm.is_finite() && fx_per_mm >= 0.0) {
            return Err(Error::invalid(format!(
                "spatial frequency must be finite and >= 0 mm^-1, got {fx_per_mm}"
            )));
        }
        Ok(Self(fx_per_mm))
    }

    /// Cycles per millimetre.
    pub fn per_mm(&self) -> f64 {
        self.0
    }

    pub fn is_planar(&self) -> bool {
        self.0 == 0.0
    }

    /// True when two frequencies agree to within 1e-9 relative.
    pub fn matches(&self, other: SpatialFrequency) -> bool {
        let scale = self.0.abs().max(other.0.abs()).max(1e-12);
        (self.0 - other.0).abs() <= 1e-9 * scale
    }
}

/// Diffuse reflectance at planar (`rd_dc`) and modulated (`rd_ac`)
/// illumination for one spatial frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffuseReflectancePair {
    /// Diffuse reflectance at fx = 0, in [0, 1].
    pub rd_dc: f64,
    /// Diffuse reflectance at fx > 0, in [0, 1]; rd_ac <= rd_dc.
    pub rd_ac: f64,
    /// Spatial frequency of the AC component.
    pub fx: SpatialFrequency,
}

impl DiffuseReflectancePair {
    pub fn new(rd_dc: f64, rd_ac: f64, fx: SpatialFrequency) -> Result<Self> {
        if !(rd_dc.is_finite() && rd_ac.is_finite()) {
            return Err(Error::invalid("reflectance values must be finite"));
        }
        if !(0.0..=1.0).contains(&rd_dc) || !(0.0..=1.0).contains(&rd_ac) || rd_ac > rd_dc {
            return Err(Error::invalid(format!(
                "reflectance pair must satisfy 0 <= rd_ac <= rd_dc <= 1, got ({rd_dc}, {rd_ac})"
            )));
        }
        Ok(Self { rd_dc, rd_ac, fx })
    }
}

fn effective_reflection_coefficient(n: f64) -> f64 {
    0.0636 * n + 0.668 + 0.710 / n - 1.440 / (n * n)
}

/// Diffuse reflectance Rd(fx) of a semi-infinite medium under sinusoidal
/// illumination, from the diffusion approximation.
pub fn diffuse_reflectance(
    props: &OpticalProperties,
    fx: SpatialFrequency,
    refractive_index: f64,
) -> Result<f64> {
    props.validate()?;
    if !(refractive_index.is_finite() && refractive_index >= 1.0) {
        return Err(Error::invalid(format!(
            "refractive index must be >= 1, got {refractive_index}"
        )));
    }
    let mu_tr = props.mu_a + props.mu_s_prime;
    let transport_albedo = props.mu_s_prime / mu_tr;
    let k = 2.0 * PI * fx.per_mm();
    let mu_eff_prime = (3.0 * props.mu_a * mu_tr + k * k).sqrt();
    let r_eff = effective_reflection_coefficient(refractive_index);
    let a = (1.0 - r_eff) / (2.0 * (1.0 + r_eff));
    let ratio = mu_eff_prime / mu_tr;
    let rd = 3.0 * a * transport_albedo / ((ratio + 1.0) * (ratio + 3.0 * a));
    if !rd.is_finite() {
        return Err(Error::Numerical(format!(
            "diffuse reflectance not finite for mu_a={}, mu_s'={}, fx={}",
            props.mu_a,
            props.mu_s_prime,
            fx.per_mm()
        )));
    }
    Ok(rd)
}

/// Multiplicative per-coefficient scaling between two wavelengths,
/// expressed as fractional shifts (e.g. -0.14 for a 14% decrease).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavelengthAdjustment {
    pub mu_a_fraction: f64,
    pub mu_s_fraction: f64,
}

impl WavelengthAdjustment {
    /// No change.
    pub const IDENTITY: WavelengthAdjustment =
        WavelengthAdjustment { mu_a_fraction: 0.0, mu_s_fraction: 0.0 };
}

/// Rescale reference optical properties from one wavelength to another by
/// material-specific fractional shifts.
pub fn wavelength_adjust(
    props: &OpticalProperties,
    from_nm: f64,
    to_nm: f64,
    adjustment: WavelengthAdjustment,
) -> Result<OpticalProperties> {
    props.validate()?;
    if (props.wavelength_nm - from_nm).abs() > 1e-9 * from_nm.abs().max(1.0) {
        return Err(Error::invalid(format!(
            "properties are at {} nm, adjustment starts from {} nm",
            props.wavelength_nm, from_nm
        )));
    }
    if !(adjustment.mu_a_fraction.is_finite() && adjustment.mu_s_fraction.is_finite()) {
        return Err(Error::invalid("adjustment fractions must be finite"));
    }
    OpticalProperties::new(
        props.mu_a * (1.0 + adjustment.mu_a_fraction),
        props.mu_s_prime * (1.0 + adjustment.mu_s_fraction),
        to_nm,
    )
}

/// Grid spacing for one LUT axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSpacing {
    Linear,
    Log,
}

/// One axis of the LUT grid: an inclusive range sampled at `count` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub spacing: GridSpacing,
}

impl GridAxis {
    pub fn linear(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count, spacing: GridSpacing::Linear }
    }

    pub fn log(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count, spacing: GridSpacing::Log }
    }

    fn build(&self, name: &str) -> Result<Vec<f64>> {
        if self.count < 2 {
            return Err(Error::invalid(format!(
                "{name} grid needs at least 2 points, got {}",
                self.count
            )));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min > 0.0 && self.max > self.min)
        {
            return Err(Error::invalid(format!(
                "{name} range must be positive and non-degenerate, got [{}, {}]",
                self.min, self.max
            )));
        }
        let n = self.count;
        let grid: Vec<f64> = match self.spacing {
            GridSpacing::Linear => (0..n)
                .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
                .collect(),
            GridSpacing::Log => {
                let (lo, hi) = (self.min.ln(), self.max.ln());
                (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect()
            }
        };
        Ok(grid)
    }
}

/// Default grid: log-spaced in mu_a, linear in mu_s', covering the phantom
/// ranges with margin.
pub fn default_mu_a_axis() -> GridAxis {
    GridAxis::log(0.001, 0.1, 128)
}

pub fn default_mu_s_axis() -> GridAxis {
    GridAxis::linear(0.1, 3.0, 128)
}

/// True when the requested ranges are entirely out of diffusion-validity
/// order: every mu_a node at or above every mu_s' node.
fn diffusion_order_violated(mu_a_grid: &[f64], mu_s_grid: &[f64]) -> bool {
    mu_a_grid[0] >= *mu_s_grid.last().expect("nonempty grid")
}

/// Gridded forward map (mu_a, mu_s') -> (Rd_DC, Rd_AC) at one spatial
/// frequency, with inverse queries.
///
/// A built table is immutable; inversion queries are read-only and safe to
/// share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionLut {
    fx: SpatialFrequency,
    refractive_index: f64,
    mu_a_grid: Vec<f64>,
    mu_s_grid: Vec<f64>,
    /// Row-major by mu_a index: entry (i, j) at [i * mu_s_grid.len() + j].
    rd_dc: Vec<f64>,
    rd_ac: Vec<f64>,
    /// Set when the grid ranges are entirely out of diffusion-validity
    /// order (mu_a >= mu_s' at every node pair).
    validity_warning: bool,
}

/// Result of an inverse LUT query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LutInversion {
    pub mu_a: f64,
    pub mu_s_prime: f64,
    /// True when the measured pair fell outside the convex range of the
    /// table and the result was clamped to the nearest boundary solution.
    pub out_of_range: bool,
}

impl DiffusionLut {
    /// Build the forward table over the given axes.
    pub fn build(
        fx: SpatialFrequency,
        mu_a_axis: GridAxis,
        mu_s_axis: GridAxis,
        refractive_index: f64,
    ) -> Result<Self> {
        let mu_a_grid = mu_a_axis.build("mu_a")?;
        let mu_s_grid = mu_s_axis.build("mu_s'")?;
        Self::from_grids(fx, mu_a_grid, mu_s_grid, refractive_index)
    }

    /// Build from explicit, strictly ascending grids.
    pub fn from_grids(
        fx: SpatialFrequency,
        mu_a_grid: Vec<f64>,
        mu_s_grid: Vec<f64>,
        refractive_index: f64,
    ) -> Result<Self> {
        for (name, g) in [("mu_a", &mu_a_grid), ("mu_s'", &mu_s_grid)] {
            if g.len() < 2 {
                return Err(Error::invalid(format!("{name} grid needs at least 2 points")));
            }
            if g[0] <= 0.0 || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid(format!("{name} grid must be positive and strictly ascending")));
            }
        }
        if !(refractive_index.is_finite() && refractive_index >= 1.0) {
            return Err(Error::invalid(format!(
                "refractive index must be >= 1, got {refractive_index}"
            )));
        }
        let n_s = mu_s_grid.len();
        let nodes: Vec<(f64, f64)> = mu_a_grid
            .par_iter()
            .flat_map_iter(|&mu_a| {
                let mu_s_grid = &mu_s_grid;
                mu_s_grid.iter().map(move |&mu_s| {
                    let props =
                        OpticalProperties { mu_a, mu_s_prime: mu_s, wavelength_nm: 1.0 };
                    let dc = diffuse_reflectance(&props, SpatialFrequency::PLANAR, refractive_index)
                        .expect("valid grid node");
                    let ac = diffuse_reflectance(&props, fx, refractive_index)
                        .expect("valid grid node");
                    (dc, ac)
                })
            })
            .collect();
        let rd_dc: Vec<f64> = nodes.iter().map(|p| p.0).collect();
        let rd_ac: Vec<f64> = nodes.iter().map(|p| p.1).collect();
        debug_assert_eq!(rd_dc.len(), mu_a_grid.len() * n_s);
        let validity_warning = diffusion_order_violated(&mu_a_grid, &mu_s_grid);
        Ok(Self { fx, refractive_index, mu_a_grid, mu_s_grid, rd_dc, rd_ac, validity_warning })
    }

    /// Reassemble a LUT from stored planes (the file codec path). Grid and
    /// shape invariants are checked; reflectance values are taken as-is so
    /// a stored table round-trips exactly.
    pub fn from_stored(
        fx: SpatialFrequency,
        mu_a_grid: Vec<f64>,
        mu_s_grid: Vec<f64>,
        rd_dc: Vec<f64>,
        rd_ac: Vec<f64>,
        refractive_index: f64,
    ) -> Result<Self> {
        for (name, g) in [("mu_a", &mu_a_grid), ("mu_s'", &mu_s_grid)] {
            if g.len() < 2 || g[0] <= 0.0 || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::invalid(format!(
                    "{name} grid must have >= 2 positive, strictly ascending values"
                )));
            }
        }
        let expected = mu_a_grid.len() * mu_s_grid.len();
        if rd_dc.len() != expected || rd_ac.len() != expected {
            return Err(Error::invalid(format!(
                "table has {} entries, grids imply {expected}",
                rd_dc.len()
            )));
        }
        for k in 0..expected {
            if !(rd_dc[k].is_finite() && rd_ac[k].is_finite()) || rd_ac[k] > rd_dc[k] {
                return Err(Error::invalid(format!(
                    "table entry {k} violates rd_ac <= rd_dc"
                )));
            }
        }
        let validity_warning = diffusion_order_violated(&mu_a_grid, &mu_s_grid);
        Ok(Self { fx, refractive_index, mu_a_grid, mu_s_grid, rd_dc, rd_ac, validity_warning })
    }

    pub fn fx(&self) -> SpatialFrequency {
        self.fx
    }

    pub fn refractive_index(&self) -> f64 {
        self.refractive_index
    }

    pub fn mu_a_grid(&self) -> &[f64] {
        &self.mu_a_grid
    }

    pub fn mu_s_grid(&self) -> &[f64] {
        &self.mu_s_grid
    }

    pub fn validity_warning(&self) -> bool {
        self.validity_warning
    }

    pub fn len(&self) -> usize {
        self.rd_dc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rd_dc.is_empty()
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.mu_s_grid.len() + j
    }

    /// Table entry at (mu_a index, mu_s' index).
    pub fn entry(&self, i: usize, j: usize) -> DiffuseReflectancePair {
        let k = self.idx(i, j);
        DiffuseReflectancePair { rd_dc: self.rd_dc[k], rd_ac: self.rd_ac[k], fx: self.fx }
    }

    /// Raw reflectance planes (row-major by mu_a index), used by the codec.
    pub fn planes(&self) -> (&[f64], &[f64]) {
        (&self.rd_dc, &self.rd_ac)
    }

    /// Nearest grid node to a measured pair by squared distance in
    /// (rd_dc, rd_ac) space. Ties break toward lower mu_a, then lower mu_s'.
    pub fn nearest_node(&self, rd_dc: f64, rd_ac: f64) -> (usize, usize) {
        let n_s = self.mu_s_grid.len();
        let mut best = (0usize, f64::INFINITY);
        for k in 0..self.rd_dc.len() {
            let dd = self.rd_dc[k] - rd_dc;
            let da = self.rd_ac[k] - rd_ac;
            let d2 = dd * dd + da * da;
            if d2 < best.1 {
                best = (k, d2);
            }
        }
        (best.0 / n_s, best.0 % n_s)
    }

    /// Invert a measured (rd_dc, rd_ac) pair to optical-property coordinates.
    ///
    /// Nearest-node search followed by inverse bilinear refinement in the
    /// cells around the winning node. Pairs outside the convex range of the
    /// table are clamped to the best boundary solution and flagged.
    pub fn invert(&self, rd_dc: f64, rd_ac: f64) -> Result<LutInversion> {
        if !(rd_dc.is_finite() && rd_ac.is_finite()) {
            return Err(Error::invalid("measured reflectance pair must be finite"));
        }
        let (ni, nj) = self.nearest_node(rd_dc, rd_ac);
        let n_a = self.mu_a_grid.len();
        let n_s = self.mu_s_grid.len();

        // Inspect cells within two steps of the nearest node; the containing
        // cell of an in-range query shares the neighbourhood of its nearest
        // node for this smooth monotone map.
        let i_lo = ni.saturating_sub(2);
        let i_hi = (ni + 1).min(n_a - 2);
        let j_lo = nj.saturating_sub(2);
        let j_hi = (nj + 1).min(n_s - 2);

        let mut contained: Option<(f64, f64, f64)> = None; // (mu_a, mu_s, residual2)
        let mut clamped: Option<(f64, f64, f64)> = None;
        for i in i_lo..=i_hi {
            for j in j_lo..=j_hi {
                if let Some((u, v)) = self.invert_cell(i, j, rd_dc, rd_ac) {
                    let inside = (-1e-9..=1.0 + 1e-9).contains(&u)
                        && (-1e-9..=1.0 + 1e-9).contains(&v);
                    let (uc, vc) = (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0));
                    let mu_a = self.mu_a_grid[i] + uc * (self.mu_a_grid[i + 1] - self.mu_a_grid[i]);
                    let mu_s = self.mu_s_grid[j] + vc * (self.mu_s_grid[j + 1] - self.mu_s_grid[j]);
                    let (fd, fa) = self.bilinear_forward(i, j, uc, vc);
                    let r2 = (fd - rd_dc).powi(2) + (fa - rd_ac).powi(2);
                    let slot = if inside { &mut contained } else { &mut clamped };
                    if slot.map_or(true, |(_, _, best)| r2 < best) {
                        *slot = Some((mu_a, mu_s, r2));
                    }
                }
            }
        }

        if let Some((mu_a, mu_s, _)) = contained {
            return Ok(LutInversion { mu_a, mu_s_prime: mu_s, out_of_range: false });
        }
        // Out of range: prefer the best boundary-clamped cell solution, fall
        // back to the nearest node itself.
        let (mu_a, mu_s_prime) = match clamped {
            Some((a, s, _)) => (a, s),
            None => (self.mu_a_grid[ni], self.mu_s_grid[nj]),
        };
        Ok(LutInversion { mu_a, mu_s_prime, out_of_range: true })
    }

    /// Invert and attach a wavelength, producing full optical properties.
    pub fn invert_to_props(
        &self,
        rd_dc: f64,
        rd_ac: f64,
        wavelength_nm: f64,
    ) -> Result<(OpticalProperties, bool)> {
        let inv = self.invert(rd_dc, rd_ac)?;
        let props = OpticalProperties::new(inv.mu_a, inv.mu_s_prime, wavelength_nm)?;
        Ok((props, inv.out_of_range))
    }

    fn bilinear_forward(&self, i: usize, j: usize, u: f64, v: f64) -> (f64, f64) {
        let k00 = self.idx(i, j);
        let k10 = self.idx(i + 1, j);
        let k01 = self.idx(i, j + 1);
        let k11 = self.idx(i + 1, j + 1);
        let w00 = (1.0 - u) * (1.0 - v);
        let w10 = u * (1.0 - v);
        let w01 = (1.0 - u) * v;
        let w11 = u * v;
        (
            w00 * self.rd_dc[k00] + w10 * self.rd_dc[k10] + w01 * self.rd_dc[k01] + w11 * self.rd_dc[k11],
            w00 * self.rd_ac[k00] + w10 * self.rd_ac[k10] + w01 * self.rd_ac[k01] + w11 * self.rd_ac[k11],
        )
    }

    /// Newton solve of the 2x2 bilinear system in cell (i, j); returns the
    /// local coordinates (u, v), unclamped, or None when the iteration does
    /// not converge.
    fn invert_cell(&self, i: usize, j: usize, rd_dc: f64, rd_ac: f64) -> Option<(f64, f64)> {
        let k00 = self.idx(i, j);
        let k10 = self.idx(i + 1, j);
        let k01 = self.idx(i, j + 1);
        let k11 = self.idx(i + 1, j + 1);
        let (d00, d10, d01, d11) =
            (self.rd_dc[k00], self.rd_dc[k10], self.rd_dc[k01], self.rd_dc[k11]);
        let (a00, a10, a01, a11) =
            (self.rd_ac[k00], self.rd_ac[k10], self.rd_ac[k01], self.rd_ac[k11]);
        let (mut u, mut v) = (0.5_f64, 0.5_f64);
        for _ in 0..25 {
            let fd = (1.0 - u) * (1.0 - v) * d00 + u * (1.0 - v) * d10 + (1.0 - u) * v * d01 + u * v * d11
                - rd_dc;
            let fa = (1.0 - u) * (1.0 - v) * a00 + u * (1.0 - v) * a10 + (1.0 - u) * v * a01 + u * v * a11
                - rd_ac;
            if fd.abs() < 1e-14 && fa.abs() < 1e-14 {
                break;
            }
            let dfd_du = (1.0 - v) * (d10 - d00) + v * (d11 - d01);
            let dfd_dv = (1.0 - u) * (d01 - d00) + u * (d11 - d10);
            let dfa_du = (1.0 - v) * (a10 - a00) + v * (a11 - a01);
            let dfa_dv = (1.0 - u) * (a01 - a00) + u * (a11 - a10);
            let det = dfd_du * dfa_dv - dfd_dv * dfa_du;
            if det.abs() < 1e-300 {
                return None;
            }
            let du = (fd * dfa_dv - fa * dfd_dv) / det;
            let dv = (dfd_du * fa - dfa_du * fd) / det;
            u -= du;
            v -= dv;
            if !u.is_finite() || !v.is_finite() || u.abs() > 1e6 || v.abs() > 1e6 {
                return None;
            }
        }
        Some((u, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn props(mu_a: f64, mu_s: f64) -> OpticalProperties {
        OpticalProperties::new(mu_a, mu_s, 660.0).unwrap()
    }

    fn fx(v: f64) -> SpatialFrequency {
        SpatialFrequency::new(v).unwrap()
    }

    #[test]
    fn zero_absorption_limit_approaches_unity() {
        let rd = diffuse_reflectance(&props(1e-12, 1.0), SpatialFrequency::PLANAR, 1.4).unwrap();
        assert!(rd > 0.999, "Rd -> 1 as mu_a -> 0, got {rd}");
    }

    #[test]
    fn high_frequency_rolloff_approaches_zero() {
        let rd = diffuse_reflectance(&props(0.01, 1.0), fx(1e6), 1.4).unwrap();
        assert!(rd < 1e-6, "Rd -> 0 as fx -> inf, got {rd}");
    }

    #[test]
    fn closed_form_regression_value() {
        // Independently evaluated from the closed-form expression.
        let rd = diffuse_reflectance(&props(0.01, 1.0), fx(0.2), 1.4).unwrap();
        assert!((rd - 0.11790694795236298).abs() < 1e-12, "got {rd}");
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(OpticalProperties::new(-0.01, 1.0, 660.0).is_err());
        assert!(OpticalProperties::new(0.01, f64::NAN, 660.0).is_err());
        assert!(diffuse_reflectance(&props(0.01, 1.0), fx(0.2), 0.9).is_err());
        assert!(SpatialFrequency::new(-0.1).is_err());
    }

    #[test]
    fn wavelength_adjust_examples() {
        let adj = WavelengthAdjustment { mu_a_fraction: -0.14, mu_s_fraction: -0.03 };
        let p = OpticalProperties::new(0.010, 1.00, 635.0).unwrap();
        let q = wavelength_adjust(&p, 635.0, 660.0, adj).unwrap();
        assert!((q.mu_a - 0.0086).abs() < 1e-12);
        assert!((q.mu_s_prime - 0.97).abs() < 1e-12);
        assert_eq!(q.wavelength_nm, 660.0);

        let same = wavelength_adjust(&p, 635.0, 635.0, WavelengthAdjustment::IDENTITY).unwrap();
        assert_eq!(same, p);

        // starting wavelength must match the properties
        assert!(wavelength_adjust(&p, 660.0, 635.0, WavelengthAdjustment::IDENTITY).is_err());
    }

    #[test]
    fn build_lut_structure() {
        let lut = DiffusionLut::build(
            fx(0.2),
            GridAxis::log(0.001, 0.05, 128),
            GridAxis::linear(0.3, 2.0, 128),
            1.4,
        )
        .unwrap();
        assert_eq!(lut.len(), 128 * 128);
        assert!(!lut.validity_warning());
        for i in 0..128 {
            for j in 0..128 {
                let e = lut.entry(i, j);
                assert!(e.rd_ac <= e.rd_dc && e.rd_ac >= 0.0 && e.rd_dc <= 1.0);
            }
        }
    }

    #[test]
    fn degenerate_grid_rejected() {
        let err = DiffusionLut::build(
            fx(0.2),
            GridAxis::log(0.001, 0.05, 1),
            GridAxis::linear(0.3, 2.0, 64),
            1.4,
        );
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn out_of_validity_range_warns_instead_of_failing() {
        let lut = DiffusionLut::build(
            fx(0.2),
            GridAxis::linear(1.0, 2.0, 8),
            GridAxis::linear(0.1, 0.5, 8),
            1.4,
        )
        .unwrap();
        assert!(lut.validity_warning());
    }

    #[test]
    fn lut_monotone_in_mu_a() {
        let lut = DiffusionLut::build(
            fx(0.2),
            GridAxis::log(0.001, 0.05, 64),
            GridAxis::linear(0.3, 2.0, 64),
            1.4,
        )
        .unwrap();
        // exhaustive scan: rd_dc strictly decreasing along mu_a at fixed j
        for j in 0..64 {
            for i in 1..64 {
                assert!(
                    lut.entry(i, j).rd_dc < lut.entry(i - 1, j).rd_dc,
                    "rd_dc not decreasing at i={i}, j={j}"
                );
            }
        }
    }

    #[test]
    fn node_round_trip_is_exact() {
        let lut = DiffusionLut::build(
            fx(0.2),
            GridAxis::log(0.002, 0.05, 48),
            GridAxis::linear(0.3, 2.0, 48),
            1.4,
        )
        .unwrap();
        let e = lut.entry(17, 29);
        let inv = lut.invert(e.rd_dc, e.rd_ac).unwrap();
        assert!(!inv.out_of_range);
        assert!((inv.mu_a - lut.mu_a_grid()[17]).abs() < 1e-9 * lut.mu_a_grid()[17]);
        assert!((inv.mu_s_prime - lut.mu_s_grid()[29]).abs() < 1e-9 * lut.mu_s_grid()[29]);
    }

    #[test]
    fn off_grid_round_trip_within_one_step() {
        let lut = DiffusionLut::build(
            fx(0.2),
            GridAxis::log(0.002, 0.05, 64),
            GridAxis::linear(0.3, 2.0, 64),
            1.4,
        )
        .unwrap();
        let p = props(0.0123, 0.87);
        let dc = diffuse_reflectance(&p, SpatialFrequency::PLANAR, 1.4).unwrap();
        let ac = diffuse_reflectance(&p, fx(0.2), 1.4).unwrap();

        // brute-force nearest-node oracle
        let (ni, nj) = lut.nearest_node(dc, ac);
        let step_a = lut.mu_a_grid()[ni + 1] - lut.mu_a_grid()[ni];
        let step_s = lut.mu_s_grid()[nj + 1] - lut.mu_s_grid()[nj];

        let inv = lut.invert(dc, ac).unwrap();
        assert!(!inv.out_of_range);
        assert!((inv.mu_a - p.mu_a).abs() <= step_a, "mu_a off by more than a grid step");
        assert!((inv.mu_s_prime - p.mu_s_prime).abs() <= step_s);
        // refinement should be much tighter than a grid step in practice
        assert!((inv.mu_a - p.mu_a).abs() / p.mu_a < 0.01);
        assert!((inv.mu_s_prime - p.mu_s_prime).abs() / p.mu_s_prime < 0.01);
    }

    #[test]
    fn nonphysical_measurement_is_clamped_and_flagged() {
        let lut = DiffusionLut::build(
            fx(0.2),
            GridAxis::log(0.002, 0.05, 32),
            GridAxis::linear(0.3, 2.0, 32),
            1.4,
        )
        .unwrap();
        let inv = lut.invert(1.5, 1.5).unwrap();
        assert!(inv.out_of_range);
        assert!(inv.mu_a >= lut.mu_a_grid()[0] && inv.mu_a <= *lut.mu_a_grid().last().unwrap());
        assert!(
            inv.mu_s_prime >= lut.mu_s_grid()[0]
                && inv.mu_s_prime <= *lut.mu_s_grid().last().unwrap()
        );
    }

    #[test]
    fn round_trip_probe_lattice_within_one_grid_step() {
        let lut = DiffusionLut::build(
            fx(0.2),
            GridAxis::log(0.002, 0.05, 64),
            GridAxis::linear(0.3, 2.0, 64),
            1.4,
        )
        .unwrap();
        // 16x16 probe lattice strictly inside the LUT range
        for pi in 0..16 {
            for pj in 0..16 {
                let mu_a = 0.003 + (0.045 - 0.003) * (pi as f64 + 0.5) / 16.0;
                let mu_s = 0.4 + (1.9 - 0.4) * (pj as f64 + 0.5) / 16.0;
                let p = props(mu_a, mu_s);
                let dc = diffuse_reflectance(&p, SpatialFrequency::PLANAR, 1.4).unwrap();
                let ac = diffuse_reflectance(&p, fx(0.2), 1.4).unwrap();
                let inv = lut.invert(dc, ac).unwrap();
                let (ni, nj) = lut.nearest_node(dc, ac);
                let step_a = lut.mu_a_grid()[(ni + 1).min(63)] - lut.mu_a_grid()[ni.min(62)];
                let step_s = lut.mu_s_grid()[(nj + 1).min(63)] - lut.mu_s_grid()[nj.min(62)];
                assert!((inv.mu_a - mu_a).abs() <= step_a);
                assert!((inv.mu_s_prime - mu_s).abs() <= step_s);
            }
        }
    }

    proptest! {
        #[test]
        fn reflectance_in_unit_interval(
            mu_a in 1e-4_f64..0.5,
            mu_s in 0.05_f64..5.0,
            f in 0.0_f64..2.0,
            n in 1.0_f64..2.0,
        ) {
            let rd = diffuse_reflectance(&props(mu_a, mu_s), fx(f), n).unwrap();
            prop_assert!((0.0..=1.0).contains(&rd));
        }

        #[test]
        fn reflectance_decreases_with_fx(
            mu_a in 1e-4_f64..0.2,
            mu_s in 0.2_f64..3.0,
            f in 0.0_f64..1.0,
        ) {
            let r0 = diffuse_reflectance(&props(mu_a, mu_s), fx(f), 1.4).unwrap();
            let r_more_fx = diffuse_reflectance(&props(mu_a, mu_s), fx(f + 0.1), 1.4).unwrap();
            prop_assert!(r_more_fx < r0);
        }

        #[test]
        fn planar_reflectance_decreases_with_mu_a(
            mu_a in 1e-4_f64..0.5,
            mu_s in 0.05_f64..5.0,
        ) {
            let r0 = diffuse_reflectance(&props(mu_a, mu_s), SpatialFrequency::PLANAR, 1.4).unwrap();
            let r1 = diffuse_reflectance(&props(mu_a * 1.5, mu_s), SpatialFrequency::PLANAR, 1.4).unwrap();
            prop_assert!(r1 < r0);
        }
    }

    #[test]
    fn modulated_reflectance_decreases_with_mu_a_in_phantom_regime() {
        // Strict along-mu_a decrease of the AC plane holds at moderate
        // frequency over the phantom property box; at higher fx the closed
        // form develops a sub-1e-4 extremum there.
        for j in 0..16 {
            let mu_s = 0.52 + (0.99 - 0.52) * j as f64 / 15.0;
            let mut prev = f64::INFINITY;
            for i in 0..64 {
                let mu_a = 0.006 * (0.017_f64 / 0.006).powf(i as f64 / 63.0);
                let v = diffuse_reflectance(&props(mu_a, mu_s), fx(0.15), 1.4).unwrap();
                assert!(v < prev, "rise at mu_a={mu_a}, mu_s={mu_s}");
                prev = v;
            }
        }
    }

    #[test]
    fn inversion_matches_brute_force_oracle_on_random_queries() {
        use rand::{Rng, SeedableRng};
        let lut = DiffusionLut::build(
            fx(0.2),
            GridAxis::log(0.002, 0.05, 48),
            GridAxis::linear(0.3, 2.0, 48),
            1.4,
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let mu_a = rng.gen_range(0.0025..0.048);
            let mu_s = rng.gen_range(0.35..1.95);
            let p = props(mu_a, mu_s);
            let dc = diffuse_reflectance(&p, SpatialFrequency::PLANAR, 1.4).unwrap();
            let ac = diffuse_reflectance(&p, fx(0.2), 1.4).unwrap();
            let inv = lut.invert(dc, ac).unwrap();
            // oracle: exhaustive nearest-node brute force
            let (ni, nj) = lut.nearest_node(dc, ac);
            let na = lut.mu_a_grid()[ni];
            let ns = lut.mu_s_grid()[nj];
            let step_a = lut.mu_a_grid()[(ni + 1).min(47)] - lut.mu_a_grid()[ni.saturating_sub(1)];
            let step_s = lut.mu_s_grid()[(nj + 1).min(47)] - lut.mu_s_grid()[nj.saturating_sub(1)];
            assert!((inv.mu_a - na).abs() <= step_a, "refined mu_a more than a step from oracle");
            assert!((inv.mu_s_prime - ns).abs() <= step_s);
        }
    }
}
