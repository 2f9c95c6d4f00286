//! End-to-end optical-property mapping: reference calibration, per-pixel
//! LUT inversion, multi-reference/multi-frequency averaging, mask-aware
//! smoothing, and dual-wavelength orchestration.

use crate::demod::{
    background_subtract, demodulate, select_from_tracks, track_frames, DemodulatedPair,
    FrameTriplet, TrackData, TrackerConfig,
};
use crate::error::{Error, Result};
use crate::optics::{diffuse_reflectance, DiffusionLut, OpticalProperties, SpatialFrequency};
use crate::stack::FrameStack;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Rectangle restricting computation to the high-quality fringe area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisRegion {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl AnalysisRegion {
    /// Centred rectangle covering the given fraction of each image extent.
    pub fn centered_fraction(image_width: usize, image_height: usize, fraction: f64) -> Self {
        let f = fraction.clamp(0.05, 1.0);
        let w = ((image_width as f64 * f).round() as usize).max(1);
        let h = ((image_height as f64 * f).round() as usize).max(1);
        Self { x: (image_width - w) / 2, y: (image_height - h) / 2, width: w, height: h }
    }

    pub fn validate_within(&self, image_width: usize, image_height: usize) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("analysis region must be nonempty"));
        }
        if self.x + self.width > image_width || self.y + self.height > image_height {
            return Err(Error::invalid(format!(
                "analysis region {:?} exceeds image {}x{}",
                self, image_width, image_height
            )));
        }
        Ok(())
    }

    fn crop_f64(&self, map: &Array2<f64>) -> Array2<f64> {
        map.slice(ndarray::s![self.y..self.y + self.height, self.x..self.x + self.width])
            .to_owned()
    }

    fn crop_bool(&self, map: &Array2<bool>) -> Array2<bool> {
        map.slice(ndarray::s![self.y..self.y + self.height, self.x..self.x + self.width])
            .to_owned()
    }
}

/// Demodulated capture of a reference material with known optical
/// properties (wavelength-adjusted by the caller as needed).
#[derive(Debug, Clone)]
pub struct ReferenceCapture {
    pub id: String,
    pub demod: DemodulatedPair,
    pub known_props: OpticalProperties,
}

/// Per-pixel diffuse reflectance map after reference calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct RdMap {
    pub rd_dc: Array2<f64>,
    pub rd_ac: Array2<f64>,
    pub mask: Array2<bool>,
    pub fx: SpatialFrequency,
}

/// Where a property map came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub references: Vec<String>,
    pub fx_per_mm: Vec<f64>,
    pub wavelength_nm: f64,
    pub sigma_px: Option<f64>,
}

/// Recovered absorption/reduced-scattering maps with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyMap {
    pub mu_a: Array2<f64>,
    pub mu_s_prime: Array2<f64>,
    pub mask: Array2<bool>,
    pub provenance: Provenance,
}

impl PropertyMap {
    pub fn width(&self) -> usize {
        self.mu_a.ncols()
    }

    pub fn height(&self) -> usize {
        self.mu_a.nrows()
    }

    /// Mean and std of both coefficients over valid pixels of a sub-region.
    pub fn region_stats(&self, region: Option<AnalysisRegion>) -> RegionStats {
        let (h, w) = self.mu_a.dim();
        let r = region.unwrap_or(AnalysisRegion { x: 0, y: 0, width: w, height: h });
        let mut n = 0usize;
        let (mut sa, mut saa, mut ss, mut sss) = (0.0, 0.0, 0.0, 0.0);
        for y in r.y..(r.y + r.height).min(h) {
            for x in r.x..(r.x + r.width).min(w) {
                if self.mask[[y, x]] {
                    let a = self.mu_a[[y, x]];
                    let s = self.mu_s_prime[[y, x]];
                    n += 1;
                    sa += a;
                    saa += a * a;
                    ss += s;
                    sss += s * s;
                }
            }
        }
        if n == 0 {
            return RegionStats { n: 0, mean_mu_a: 0.0, std_mu_a: 0.0, mean_mu_s: 0.0, std_mu_s: 0.0 };
        }
        let nf = n as f64;
        let mean_a = sa / nf;
        let mean_s = ss / nf;
        RegionStats {
            n,
            mean_mu_a: mean_a,
            std_mu_a: (saa / nf - mean_a * mean_a).max(0.0).sqrt(),
            mean_mu_s: mean_s,
            std_mu_s: (sss / nf - mean_s * mean_s).max(0.0).sqrt(),
        }
    }

    /// Median over valid pixels, per coefficient.
    pub fn median(&self) -> Option<(f64, f64)> {
        let mut a: Vec<f64> = Vec::new();
        let mut s: Vec<f64> = Vec::new();
        for ((y, x), &m) in self.mask.indexed_iter() {
            if m {
                a.push(self.mu_a[[y, x]]);
                s.push(self.mu_s_prime[[y, x]]);
            }
        }
        if a.is_empty() {
            return None;
        }
        let med = |v: &mut Vec<f64>| {
            v.sort_by(|p, q| p.partial_cmp(q).unwrap());
            v[v.len() / 2]
        };
        Some((med(&mut a), med(&mut s)))
    }
}

/// Summary statistics over a region of a property map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    pub n: usize,
    pub mean_mu_a: f64,
    pub std_mu_a: f64,
    pub mean_mu_s: f64,
    pub std_mu_s: f64,
}

/// Calibrate a sample capture against a reference of known properties:
/// `Rd_sample = (M_sample / M_ref) * Rd_ref_predicted` per pixel and per
/// AC/DC channel. Pixels where the reference signal is at or below
/// `eps_frac` of its maximum are masked out.
pub fn calibrate_reflectance(
    sample: &DemodulatedPair,
    reference: &ReferenceCapture,
    refractive_index: f64,
    eps_frac: f64,
) -> Result<RdMap> {
    if !sample.fx.matches(reference.demod.fx) {
        return Err(Error::invalid(format!(
            "spatial frequency mismatch: sample {} vs reference {} mm^-1",
            sample.fx.per_mm(),
            reference.demod.fx.per_mm()
        )));
    }
    if sample.m_ac.dim() != reference.demod.m_ac.dim() {
        return Err(Error::invalid("sample and reference maps must share geometry"));
    }
    if !(0.0..1.0).contains(&eps_frac) {
        return Err(Error::invalid("division floor fraction must be in [0, 1)"));
    }
    let rd_ref_dc = diffuse_reflectance(
        &reference.known_props,
        SpatialFrequency::PLANAR,
        refractive_index,
    )?;
    let rd_ref_ac = diffuse_reflectance(&reference.known_props, sample.fx, refractive_index)?;

    let max_dc = reference.demod.m_dc.iter().cloned().fold(0.0_f64, f64::max);
    let max_ac = reference.demod.m_ac.iter().cloned().fold(0.0_f64, f64::max);
    let eps_dc = eps_frac * max_dc;
    let eps_ac = eps_frac * max_ac;

    let dim = sample.m_ac.dim();
    let mut rd_dc = Array2::<f64>::zeros(dim);
    let mut rd_ac = Array2::<f64>::zeros(dim);
    let mut mask = Array2::<bool>::from_elem(dim, false);
    for ((y, x), out) in rd_dc.indexed_iter_mut() {
        let ref_dc = reference.demod.m_dc[[y, x]];
        let ref_ac = reference.demod.m_ac[[y, x]];
        if ref_dc > eps_dc && ref_ac > eps_ac && ref_dc > 0.0 && ref_ac > 0.0 {
            *out = sample.m_dc[[y, x]] / ref_dc * rd_ref_dc;
            rd_ac[[y, x]] = sample.m_ac[[y, x]] / ref_ac * rd_ref_ac;
            mask[[y, x]] = out.is_finite() && rd_ac[[y, x]].is_finite();
        }
    }
    Ok(RdMap { rd_dc, rd_ac, mask, fx: sample.fx })
}

/// Invert a calibrated reflectance map per pixel through the LUT.
/// Out-of-range pixels are cleared in the output mask.
pub fn property_map(
    rd: &RdMap,
    lut: &DiffusionLut,
    wavelength_nm: f64,
    reference_id: &str,
) -> Result<PropertyMap> {
    if !rd.fx.matches(lut.fx()) {
        return Err(Error::invalid(format!(
            "spatial frequency mismatch: map {} vs LUT {} mm^-1",
            rd.fx.per_mm(),
            lut.fx().per_mm()
        )));
    }
    let dim = rd.rd_dc.dim();
    let mut mu_a = Array2::<f64>::zeros(dim);
    let mut mu_s = Array2::<f64>::zeros(dim);
    let mut mask = Array2::<bool>::from_elem(dim, false);

    let w = dim.1;
    let mu_a_slice = mu_a.as_slice_mut().expect("standard layout");
    let mu_s_slice = mu_s.as_slice_mut().expect("standard layout");
    let mask_slice = mask.as_slice_mut().expect("standard layout");
    let rd_dc = rd.rd_dc.as_slice().expect("standard layout");
    let rd_ac = rd.rd_ac.as_slice().expect("standard layout");
    let in_mask = rd.mask.as_slice().expect("standard layout");

    use rayon::prelude::*;
    mu_a_slice
        .par_chunks_mut(w)
        .zip(mu_s_slice.par_chunks_mut(w))
        .zip(mask_slice.par_chunks_mut(w))
        .enumerate()
        .try_for_each(|(row, ((a_row, s_row), m_row))| -> Result<()> {
            for col in 0..w {
                let k = row * w + col;
                if !in_mask[k] {
                    continue;
                }
                let inv = lut.invert(rd_dc[k], rd_ac[k])?;
                a_row[col] = inv.mu_a;
                s_row[col] = inv.mu_s_prime;
                m_row[col] = !inv.out_of_range;
            }
            Ok(())
        })?;

    Ok(PropertyMap {
        mu_a,
        mu_s_prime: mu_s,
        mask,
        provenance: Provenance {
            references: vec![reference_id.to_string()],
            fx_per_mm: vec![rd.fx.per_mm()],
            wavelength_nm,
            sigma_px: None,
        },
    })
}

/// Pointwise mean of several property maps. A pixel is valid in the output
/// only where it is valid in every input.
pub fn average_maps(maps: &[PropertyMap]) -> Result<PropertyMap> {
    let first = maps.first().ok_or_else(|| Error::invalid("average needs at least one map"))?;
    let dim = first.mu_a.dim();
    for m in maps {
        if m.mu_a.dim() != dim {
            return Err(Error::invalid("all maps must share shape"));
        }
        if (m.provenance.wavelength_nm - first.provenance.wavelength_nm).abs() > 1e-9 {
            return Err(Error::invalid("cannot average maps from different wavelengths"));
        }
    }
    let n = maps.len() as f64;
    let mut mu_a = Array2::<f64>::zeros(dim);
    let mut mu_s = Array2::<f64>::zeros(dim);
    let mut mask = Array2::<bool>::from_elem(dim, true);
    for m in maps {
        mu_a += &m.mu_a;
        mu_s += &m.mu_s_prime;
        mask.zip_mut_with(&m.mask, |acc, &v| *acc &= v);
    }
    mu_a.mapv_inplace(|v| v / n);
    mu_s.mapv_inplace(|v| v / n);

    let mut references: Vec<String> = Vec::new();
    let mut fx_list: Vec<f64> = Vec::new();
    for m in maps {
        for r in &m.provenance.references {
            if !references.contains(r) {
                references.push(r.clone());
            }
        }
        for &f in &m.provenance.fx_per_mm {
            if !fx_list.iter().any(|&g| (g - f).abs() < 1e-12) {
                fx_list.push(f);
            }
        }
    }
    Ok(PropertyMap {
        mu_a,
        mu_s_prime: mu_s,
        mask,
        provenance: Provenance {
            references,
            fx_per_mm: fx_list,
            wavelength_nm: first.provenance.wavelength_nm,
            sigma_px: first.provenance.sigma_px,
        },
    })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma + 0.5) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Reflect an index into [0, n) with half-sample symmetry (edge repeated),
/// the convention that preserves total mass under symmetric kernels.
fn reflect(idx: isize, n: isize) -> usize {
    let mut i = idx;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn convolve_separable(map: &Array2<f64>, kernel: &[f64]) -> Array2<f64> {
    let (h, w) = map.dim();
    let radius = kernel.len() / 2;
    let mut tmp = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sx = reflect(x as isize + k as isize - radius as isize, w as isize);
                acc += kv * map[[y, sx]];
            }
            tmp[[y, x]] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + k as isize - radius as isize, h as isize);
                acc += kv * tmp[[sy, x]];
            }
            out[[y, x]] = acc;
        }
    }
    out
}

/// Gaussian smoothing with mask-aware normalized convolution: invalid
/// pixels contribute nothing and the result is renormalized by the blurred
/// mask. `sigma_px = 0` is the identity.
pub fn smooth_map(map: &PropertyMap, sigma_px: f64) -> Result<PropertyMap> {
    if !(sigma_px.is_finite() && sigma_px >= 0.0) {
        return Err(Error::invalid("sigma must be >= 0"));
    }
    let mut out = map.clone();
    out.provenance.sigma_px = Some(sigma_px);
    if sigma_px == 0.0 {
        return Ok(out);
    }
    let kernel = gaussian_kernel(sigma_px);
    let weights = map.mask.mapv(|m| if m { 1.0 } else { 0.0 });
    let wa = convolve_separable(&(&map.mu_a * &weights), &kernel);
    let ws = convolve_separable(&(&map.mu_s_prime * &weights), &kernel);
    let wsum = convolve_separable(&weights, &kernel);
    for ((y, x), m) in out.mask.indexed_iter_mut() {
        if wsum[[y, x]] > 1e-12 {
            out.mu_a[[y, x]] = wa[[y, x]] / wsum[[y, x]];
            out.mu_s_prime[[y, x]] = ws[[y, x]] / wsum[[y, x]];
        } else {
            *m = false;
        }
    }
    Ok(out)
}

/// Split a multi-channel stack into independent single-channel stacks,
/// preserving timing metadata.
pub fn split_channels(stack: &FrameStack) -> Result<Vec<FrameStack>> {
    if stack.channels() < 2 {
        return Err(Error::invalid("split_channels needs a multi-channel stack"));
    }
    (0..stack.channels()).map(|c| stack.extract_channel(c)).collect()
}

/// Configuration of the single-capture processing chain.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub fx: SpatialFrequency,
    pub wavelength_nm: f64,
    pub tracker: TrackerConfig,
    /// Analysis region; defaults to a centred rectangle at 60% of frame
    /// extent when `None`.
    pub region: Option<AnalysisRegion>,
    /// Gaussian smoothing applied after averaging. Zero disables.
    pub sigma_px: f64,
    /// Division floor as a fraction of the reference maximum.
    pub eps_frac: f64,
}

impl PipelineConfig {
    pub fn new(fx: SpatialFrequency, wavelength_nm: f64) -> Self {
        Self {
            fx,
            wavelength_nm,
            tracker: TrackerConfig::default(),
            region: None,
            sigma_px: 5.0,
            eps_frac: 1e-6,
        }
    }

    fn resolve_region(&self, width: usize, height: usize) -> Result<AnalysisRegion> {
        let region = self
            .region
            .unwrap_or_else(|| AnalysisRegion::centered_fraction(width, height, 0.6));
        region.validate_within(width, height)?;
        Ok(region)
    }
}

/// Everything produced by processing one capture.
#[derive(Debug, Clone)]
pub struct CaptureOutput {
    pub map: PropertyMap,
    pub triplet: FrameTriplet,
    pub tracks: TrackData,
    /// Unsmoothed per-reference maps, before averaging.
    pub per_reference: Vec<PropertyMap>,
}

fn crop_demod(demod: &DemodulatedPair, region: AnalysisRegion) -> DemodulatedPair {
    DemodulatedPair {
        m_ac: region.crop_f64(&demod.m_ac),
        m_dc: region.crop_f64(&demod.m_dc),
        fx: demod.fx,
        clipped: region.crop_bool(&demod.clipped),
    }
}

/// Track, select, and demodulate one single-channel capture.
pub fn track_and_demodulate(
    stack: &FrameStack,
    fx: SpatialFrequency,
    tracker: &TrackerConfig,
) -> Result<(DemodulatedPair, FrameTriplet, TrackData)> {
    let subtracted = background_subtract(stack)?;
    let tracks = track_frames(&subtracted, tracker)?;
    let triplet = select_from_tracks(&tracks, tracker)?;
    let demod = demodulate(stack, &triplet, fx)?;
    Ok((demod, triplet, tracks))
}

/// Build a reference capture by running the tracker and demodulation on a
/// reference-material recording.
pub fn reference_from_stack(
    id: &str,
    stack: &FrameStack,
    known_props: OpticalProperties,
    fx: SpatialFrequency,
    tracker: &TrackerConfig,
) -> Result<ReferenceCapture> {
    let (demod, _, _) = track_and_demodulate(stack, fx, tracker)?;
    Ok(ReferenceCapture { id: id.to_string(), demod, known_props })
}

/// Full single-wavelength chain for one capture: track, select, demodulate,
/// calibrate against every reference, invert, average, and smooth.
pub fn process_capture(
    stack: &FrameStack,
    lut: &DiffusionLut,
    references: &[ReferenceCapture],
    cfg: &PipelineConfig,
) -> Result<CaptureOutput> {
    if stack.channels() != 1 {
        return Err(Error::invalid(
            "process_capture expects a single-channel stack; split channels first",
        ));
    }
    if references.is_empty() {
        return Err(Error::invalid("at least one reference capture is required"));
    }
    let region = cfg.resolve_region(stack.width(), stack.height())?;
    let (demod, triplet, tracks) = track_and_demodulate(stack, cfg.fx, &cfg.tracker)?;
    let demod = crop_demod(&demod, region);

    let mut per_reference = Vec::with_capacity(references.len());
    for r in references {
        let cropped_ref = ReferenceCapture {
            id: r.id.clone(),
            demod: crop_demod(&r.demod, region),
            known_props: r.known_props,
        };
        let rd = calibrate_reflectance(&demod, &cropped_ref, lut.refractive_index(), cfg.eps_frac)?;
        per_reference.push(property_map(&rd, lut, cfg.wavelength_nm, &r.id)?);
    }
    let averaged = average_maps(&per_reference)?;
    let map = smooth_map(&averaged, cfg.sigma_px)?;
    Ok(CaptureOutput { map, triplet, tracks, per_reference })
}

/// One wavelength channel of a dual-wavelength run.
#[derive(Debug, Clone)]
pub struct ChannelSpec {
    pub channel: usize,
    pub lut: DiffusionLut,
    pub references: Vec<ReferenceCapture>,
    pub config: PipelineConfig,
}

/// Outcome of one channel: failures propagate independently.
#[derive(Debug)]
pub struct ChannelOutcome {
    pub channel: usize,
    pub result: Result<CaptureOutput>,
}

/// Run the full pipeline independently on selected channels of a
/// multi-channel capture. One channel failing does not abort the others.
pub fn run_dual_wavelength(stack: &FrameStack, specs: &[ChannelSpec]) -> Result<Vec<ChannelOutcome>> {
    if stack.channels() < 2 {
        return Err(Error::invalid("dual-wavelength run needs a multi-channel stack"));
    }
    if specs.is_empty() {
        return Err(Error::invalid("no channel specs supplied"));
    }
    let mut outcomes = Vec::with_capacity(specs.len());
    for spec in specs {
        let result = stack
            .extract_channel(spec.channel)
            .and_then(|ch| process_capture(&ch, &spec.lut, &spec.references, &spec.config));
        outcomes.push(ChannelOutcome { channel: spec.channel, result });
    }
    Ok(outcomes)
}

/// Region statistics as CSV: region,n,mean_mu_a,std_mu_a,mean_mu_s,std_mu_s.
pub fn region_stats_csv(entries: &[(String, RegionStats)]) -> String {
    let mut out = String::from("region,n,mean_mu_a,std_mu_a,mean_mu_s_prime,std_mu_s_prime\n");
    for (name, s) in entries {
        out.push_str(&format!(
            "{},{},{:.8},{:.8},{:.8},{:.8}\n",
            name, s.n, s.mean_mu_a, s.std_mu_a, s.mean_mu_s, s.std_mu_s
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::GridAxis;

    fn demo_pair(v_dc: f64, v_ac: f64, fx: SpatialFrequency) -> DemodulatedPair {
        DemodulatedPair {
            m_ac: Array2::from_elem((8, 8), v_ac),
            m_dc: Array2::from_elem((8, 8), v_dc),
            fx,
            clipped: Array2::from_elem((8, 8), false),
        }
    }

    fn test_lut(fx: SpatialFrequency) -> DiffusionLut {
        DiffusionLut::build(
            fx,
            GridAxis::log(0.002, 0.05, 64),
            GridAxis::linear(0.3, 2.0, 64),
            1.4,
        )
        .unwrap()
    }

    #[test]
    fn self_calibration_returns_model_prediction() {
        let fx = SpatialFrequency::new(0.2).unwrap();
        let props = OpticalProperties::new(0.01, 1.0, 660.0).unwrap();
        let demod = demo_pair(0.41, 0.09, fx);
        let reference =
            ReferenceCapture { id: "self".into(), demod: demod.clone(), known_props: props };
        let rd = calibrate_reflectance(&demod, &reference, 1.4, 1e-6).unwrap();
        let want_dc = diffuse_reflectance(&props, SpatialFrequency::PLANAR, 1.4).unwrap();
        let want_ac = diffuse_reflectance(&props, fx, 1.4).unwrap();
        for ((y, x), &m) in rd.mask.indexed_iter() {
            assert!(m);
            assert!((rd.rd_dc[[y, x]] - want_dc).abs() <= 1e-12 * want_dc);
            assert!((rd.rd_ac[[y, x]] - want_ac).abs() <= 1e-12 * want_ac);
        }
    }

    #[test]
    fn dead_reference_pixels_are_masked() {
        let fx = SpatialFrequency::new(0.2).unwrap();
        let props = OpticalProperties::new(0.01, 1.0, 660.0).unwrap();
        let sample = demo_pair(0.4, 0.1, fx);
        let mut ref_demod = demo_pair(0.4, 0.1, fx);
        ref_demod.m_dc[[3, 3]] = 0.0;
        ref_demod.m_ac[[5, 5]] = 0.0;
        let reference = ReferenceCapture { id: "r".into(), demod: ref_demod, known_props: props };
        let rd = calibrate_reflectance(&sample, &reference, 1.4, 1e-6).unwrap();
        assert!(!rd.mask[[3, 3]]);
        assert!(!rd.mask[[5, 5]]);
        assert!(rd.mask[[0, 0]]);
    }

    #[test]
    fn fx_mismatch_is_rejected() {
        let props = OpticalProperties::new(0.01, 1.0, 660.0).unwrap();
        let sample = demo_pair(0.4, 0.1, SpatialFrequency::new(0.2).unwrap());
        let reference = ReferenceCapture {
            id: "r".into(),
            demod: demo_pair(0.4, 0.1, SpatialFrequency::new(0.3).unwrap()),
            known_props: props,
        };
        assert!(calibrate_reflectance(&sample, &reference, 1.4, 1e-6).is_err());
    }

    #[test]
    fn property_map_round_trips_homogeneous_reflectance() {
        let fx = SpatialFrequency::new(0.2).unwrap();
        let lut = test_lut(fx);
        let props = OpticalProperties::new(0.0123, 0.87, 660.0).unwrap();
        let dc = diffuse_reflectance(&props, SpatialFrequency::PLANAR, 1.4).unwrap();
        let ac = diffuse_reflectance(&props, fx, 1.4).unwrap();
        let rd = RdMap {
            rd_dc: Array2::from_elem((6, 6), dc),
            rd_ac: Array2::from_elem((6, 6), ac),
            mask: Array2::from_elem((6, 6), true),
            fx,
        };
        let map = property_map(&rd, &lut, 660.0, "ref-a").unwrap();
        for ((y, x), &m) in map.mask.indexed_iter() {
            assert!(m);
            assert!((map.mu_a[[y, x]] - 0.0123).abs() / 0.0123 < 0.01);
            assert!((map.mu_s_prime[[y, x]] - 0.87).abs() / 0.87 < 0.01);
        }
        assert_eq!(map.provenance.references, vec!["ref-a".to_string()]);
    }

    #[test]
    fn property_map_empty_mask_stays_empty() {
        let fx = SpatialFrequency::new(0.2).unwrap();
        let lut = test_lut(fx);
        let rd = RdMap {
            rd_dc: Array2::from_elem((4, 4), 0.5),
            rd_ac: Array2::from_elem((4, 4), 0.08),
            mask: Array2::from_elem((4, 4), false),
            fx,
        };
        let map = property_map(&rd, &lut, 660.0, "r").unwrap();
        assert!(map.mask.iter().all(|&m| !m));
    }

    #[test]
    fn average_single_map_is_identity() {
        let fx = SpatialFrequency::new(0.2).unwrap();
        let lut = test_lut(fx);
        let rd = RdMap {
            rd_dc: Array2::from_elem((4, 4), 0.55),
            rd_ac: Array2::from_elem((4, 4), 0.07),
            mask: Array2::from_elem((4, 4), true),
            fx,
        };
        let map = property_map(&rd, &lut, 660.0, "r").unwrap();
        let avg = average_maps(std::slice::from_ref(&map)).unwrap();
        assert_eq!(avg.mu_a, map.mu_a);
        assert_eq!(avg.mask, map.mask);
    }

    #[test]
    fn average_of_constants() {
        let mk = |a: f64, s: f64| PropertyMap {
            mu_a: Array2::from_elem((3, 3), a),
            mu_s_prime: Array2::from_elem((3, 3), s),
            mask: Array2::from_elem((3, 3), true),
            provenance: Provenance {
                references: vec![format!("r{a}")],
                fx_per_mm: vec![0.2],
                wavelength_nm: 660.0,
                sigma_px: None,
            },
        };
        let avg = average_maps(&[mk(0.01, 0.8), mk(0.03, 1.2)]).unwrap();
        assert!(avg.mu_a.iter().all(|&v| (v - 0.02).abs() < 1e-15));
        assert!(avg.mu_s_prime.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert_eq!(avg.provenance.references.len(), 2);
        let bad = PropertyMap {
            mu_a: Array2::from_elem((2, 2), 0.01),
            mu_s_prime: Array2::from_elem((2, 2), 0.8),
            mask: Array2::from_elem((2, 2), true),
            provenance: avg.provenance.clone(),
        };
        assert!(average_maps(&[mk(0.01, 0.8), bad]).is_err());
    }

    #[test]
    fn smoothing_identity_and_constant() {
        let map = PropertyMap {
            mu_a: Array2::from_elem((32, 32), 0.015),
            mu_s_prime: Array2::from_elem((32, 32), 0.9),
            mask: Array2::from_elem((32, 32), true),
            provenance: Provenance {
                references: vec!["r".into()],
                fx_per_mm: vec![0.2],
                wavelength_nm: 660.0,
                sigma_px: None,
            },
        };
        let same = smooth_map(&map, 0.0).unwrap();
        assert_eq!(same.mu_a, map.mu_a);
        let smoothed = smooth_map(&map, 5.0).unwrap();
        assert!(smoothed.mu_a.iter().all(|&v| (v - 0.015).abs() < 1e-12));
    }

    #[test]
    fn smoothing_impulse_gives_unit_mass_kernel() {
        let mut mu_a = Array2::<f64>::zeros((64, 64));
        mu_a[[32, 32]] = 1.0;
        let map = PropertyMap {
            mu_a,
            mu_s_prime: Array2::zeros((64, 64)),
            mask: Array2::from_elem((64, 64), true),
            provenance: Provenance {
                references: vec![],
                fx_per_mm: vec![],
                wavelength_nm: 660.0,
                sigma_px: None,
            },
        };
        let out = smooth_map(&map, 3.0).unwrap();
        let total: f64 = out.mu_a.iter().sum();
        assert!((total - 1.0).abs() < 1e-6, "kernel mass {total}");
        // peak at impulse location
        let peak = out
            .mu_a
            .indexed_iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(peak, (32, 32));
    }

    #[test]
    fn smoothing_preserves_mean_of_mask_free_map() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mu_a = Array2::from_shape_fn((48, 56), |_| rng.gen_range(0.001..0.1));
        let mean_before: f64 = mu_a.iter().sum::<f64>() / mu_a.len() as f64;
        let map = PropertyMap {
            mu_a,
            mu_s_prime: Array2::from_elem((48, 56), 1.0),
            mask: Array2::from_elem((48, 56), true),
            provenance: Provenance {
                references: vec![],
                fx_per_mm: vec![],
                wavelength_nm: 660.0,
                sigma_px: None,
            },
        };
        let out = smooth_map(&map, 5.0).unwrap();
        let mean_after: f64 = out.mu_a.iter().sum::<f64>() / out.mu_a.len() as f64;
        assert!(
            (mean_after - mean_before).abs() <= 1e-6 * mean_before.abs(),
            "mean drifted from {mean_before} to {mean_after}"
        );
    }

    #[test]
    fn smoothing_is_mask_aware() {
        // a masked-out hot pixel must not bleed into its neighbourhood
        let mut mu_a = Array2::<f64>::from_elem((32, 32), 0.01);
        mu_a[[16, 16]] = 100.0;
        let mut mask = Array2::from_elem((32, 32), true);
        mask[[16, 16]] = false;
        let map = PropertyMap {
            mu_a,
            mu_s_prime: Array2::from_elem((32, 32), 1.0),
            mask,
            provenance: Provenance {
                references: vec![],
                fx_per_mm: vec![],
                wavelength_nm: 660.0,
                sigma_px: None,
            },
        };
        let out = smooth_map(&map, 2.0).unwrap();
        for ((y, x), &v) in out.mu_a.indexed_iter() {
            if out.mask[[y, x]] {
                assert!((v - 0.01).abs() < 1e-9, "leak at ({y},{x}): {v}");
            }
        }
    }

    #[test]
    fn split_channels_behaviour() {
        use ndarray::Array3;
        let mut s = FrameStack::new(4, 4, 3, 10.0, crate::stack::BitDepth::Float32).unwrap();
        let mut f = Array3::<f32>::zeros((4, 4, 3));
        f.index_axis_mut(ndarray::Axis(2), 0).fill(0.9);
        // green channel left all-zero
        f.index_axis_mut(ndarray::Axis(2), 2).fill(0.1);
        s.push_frame(f).unwrap();
        let channels = split_channels(&s).unwrap();
        assert_eq!(channels.len(), 3);
        assert!(channels[0].frame(0).iter().all(|&v| v == 0.9));
        assert!(channels[1].frame(0).iter().all(|&v| v == 0.0));
        assert_eq!(channels[0].frame_rate_fps(), 10.0);

        let mono = channels[0].clone();
        assert!(split_channels(&mono).is_err());
    }

    #[test]
    fn region_helpers() {
        let r = AnalysisRegion::centered_fraction(100, 60, 0.6);
        assert_eq!(r.width, 60);
        assert_eq!(r.height, 36);
        assert_eq!(r.x, 20);
        assert_eq!(r.y, 12);
        assert!(r.validate_within(100, 60).is_ok());
        assert!(r.validate_within(50, 30).is_err());
    }
}
