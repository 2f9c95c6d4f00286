//! Fiber-array interferometric projector model: geometry to spatial
//! frequency, and synthesis of realistic drifting-fringe frame stacks used
//! as the processing pipeline's test oracle.

use crate::error::{Error, Result};
use crate::optics::{diffuse_reflectance, OpticalProperties, SpatialFrequency};
use crate::stack::{BitDepth, FrameStack};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Fiber tip spacings of the fabricated array, micrometres.
pub const DEVICE_TIP_SPACINGS_UM: [f64; 3] = [5.0, 8.66, 10.0];

/// A pair of fiber tips acting as a double slit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberPair {
    /// Tip separation d, micrometres.
    pub spacing_um: f64,
    /// Illumination wavelength, nanometres.
    pub wavelength_nm: f64,
    /// Fiber-to-sample distance, millimetres.
    pub working_distance_mm: f64,
}

impl FiberPair {
    pub fn new(spacing_um: f64, wavelength_nm: f64, working_distance_mm: f64) -> Result<Self> {
        for (name, v) in [
            ("spacing", spacing_um),
            ("wavelength", wavelength_nm),
            ("working distance", working_distance_mm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(Self { spacing_um, wavelength_nm, working_distance_mm })
    }

    /// Fringe spatial frequency at the sample plane, from the small-angle
    /// double-slit relation fx = d / (lambda * WD).
    pub fn spatial_frequency(&self) -> SpatialFrequency {
        // d [um] * 1e-3 / (lambda [nm] * 1e-6 * WD [mm]) = d * 1e3 / (lambda * WD)
        let fx = self.spacing_um * 1e3 / (self.wavelength_nm * self.working_distance_mm);
        SpatialFrequency::new(fx).expect("positive inputs give positive fx")
    }
}

/// Fringe spatial frequency for a fiber pair (free-function form).
pub fn spatial_frequency(pair: &FiberPair) -> SpatialFrequency {
    pair.spatial_frequency()
}

/// Illumination envelope across the field of view, relative units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    Flat { amplitude: f64 },
    Gaussian { amplitude: f64, center_px: (f64, f64), sigma_px: (f64, f64) },
}

impl Envelope {
    fn value(&self, x: f64, y: f64) -> f64 {
        match *self {
            Envelope::Flat { amplitude } => amplitude,
            Envelope::Gaussian { amplitude, center_px, sigma_px } => {
                let dx = (x - center_px.0) / sigma_px.0;
                let dy = (y - center_px.1) / sigma_px.1;
                amplitude * (-0.5 * (dx * dx + dy * dy)).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Envelope::Flat { amplitude } => {
                if !(amplitude.is_finite() && amplitude >= 0.0) {
                    return Err(Error::invalid("envelope amplitude must be >= 0"));
                }
            }
            Envelope::Gaussian { amplitude, sigma_px, .. } => {
                if !(amplitude.is_finite() && amplitude >= 0.0) {
                    return Err(Error::invalid("envelope amplitude must be >= 0"));
                }
                if sigma_px.0 <= 0.0 || sigma_px.1 <= 0.0 {
                    return Err(Error::invalid("envelope sigma must be > 0"));
                }
            }
        }
        Ok(())
    }
}

/// Sample optical properties: homogeneous, or a per-pixel map.
#[derive(Debug, Clone, PartialEq)]
pub enum PropertyField {
    Uniform(OpticalProperties),
    Map { mu_a: Array2<f64>, mu_s_prime: Array2<f64>, wavelength_nm: f64 },
}

impl PropertyField {
    /// Two homogeneous regions split at a column boundary (left | right).
    pub fn split_vertical(
        width: usize,
        height: usize,
        split_col: usize,
        left: OpticalProperties,
        right: OpticalProperties,
    ) -> Result<Self> {
        left.validate()?;
        right.validate()?;
        if (left.wavelength_nm - right.wavelength_nm).abs() > 1e-9 {
            return Err(Error::invalid("both regions must share a wavelength"));
        }
        if split_col == 0 || split_col >= width {
            return Err(Error::invalid("split column must be inside the image"));
        }
        let mut mu_a = Array2::from_elem((height, width), left.mu_a);
        let mut mu_s = Array2::from_elem((height, width), left.mu_s_prime);
        for y in 0..height {
            for x in split_col..width {
                mu_a[[y, x]] = right.mu_a;
                mu_s[[y, x]] = right.mu_s_prime;
            }
        }
        Ok(PropertyField::Map { mu_a, mu_s_prime: mu_s, wavelength_nm: left.wavelength_nm })
    }

    fn at(&self, y: usize, x: usize) -> (f64, f64) {
        match self {
            PropertyField::Uniform(p) => (p.mu_a, p.mu_s_prime),
            PropertyField::Map { mu_a, mu_s_prime, .. } => (mu_a[[y, x]], mu_s_prime[[y, x]]),
        }
    }

    pub fn wavelength_nm(&self) -> f64 {
        match self {
            PropertyField::Uniform(p) => p.wavelength_nm,
            PropertyField::Map { wavelength_nm, .. } => *wavelength_nm,
        }
    }
}

/// Phase drift per frame: Gaussian random walk plus optional deterministic
/// linear component, degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftModel {
    pub random_walk_std_deg: f64,
    pub linear_deg_per_frame: f64,
}

impl DriftModel {
    pub const NONE: DriftModel = DriftModel { random_walk_std_deg: 0.0, linear_deg_per_frame: 0.0 };
}

/// Temporary loss of fringe contrast: with `probability` per frame the
/// modulation is multiplied by (1 - depth).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastDropout {
    pub probability: f64,
    pub depth: f64,
}

impl ContrastDropout {
    pub const NONE: ContrastDropout = ContrastDropout { probability: 0.0, depth: 0.0 };
}

/// Complete description of a synthetic drifting-fringe capture.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeScene {
    pub width: usize,
    pub height: usize,
    pub fx: SpatialFrequency,
    /// Size of one pixel at the sample plane, millimetres.
    pub pixel_size_mm: f64,
    pub envelope: Envelope,
    /// Initial fringe phase at x = 0, degrees.
    pub phase0_deg: f64,
    pub drift: DriftModel,
    pub dropout: ContrastDropout,
    /// Additive intensity noise, std in the same relative units as pixels.
    pub noise_std: f64,
    /// Multiplicative speckle contrast (std of the unit-mean field).
    pub speckle_contrast: f64,
    pub sample: PropertyField,
    pub refractive_index: f64,
}

impl FringeScene {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("scene dimensions must be nonzero"));
        }
        if !(self.pixel_size_mm.is_finite() && self.pixel_size_mm > 0.0) {
            return Err(Error::invalid("pixel size must be > 0 mm"));
        }
        self.envelope.validate()?;
        if !(0.0..=1.0).contains(&self.dropout.probability) {
            return Err(Error::invalid("dropout probability must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.dropout.depth) {
            return Err(Error::invalid("dropout depth must be in [0, 1]"));
        }
        if self.noise_std < 0.0 || self.speckle_contrast < 0.0 {
            return Err(Error::invalid("noise levels must be >= 0"));
        }
        if self.drift.random_walk_std_deg < 0.0 {
            return Err(Error::invalid("drift std must be >= 0"));
        }
        if let PropertyField::Map { mu_a, mu_s_prime, .. } = &self.sample {
            if mu_a.dim() != (self.height, self.width) || mu_s_prime.dim() != (self.height, self.width) {
                return Err(Error::invalid("property map shape must match scene dimensions"));
            }
        }
        Ok(())
    }
}

/// Per-frame ground truth emitted by the renderer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTruth {
    /// Fringe phase at x = 0 for this frame, degrees in [0, 360).
    pub phase_deg: f64,
    /// Modulation factor after dropout, in [0, 1].
    pub contrast: f64,
}

/// A rendered capture: the stack plus its exact phase/contrast series.
#[derive(Debug, Clone)]
pub struct RenderedVideo {
    pub stack: FrameStack,
    pub truth: Vec<FrameTruth>,
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer over seed ^ salt
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Unit-mean multiplicative speckle field. Regenerated per spatial frequency
/// (not per frame): captures at the same fx and scene seed share the field,
/// captures at different fx get independent fields.
fn speckle_field(scene: &FringeScene, seed: u64) -> Array2<f64> {
    let salt = scene.fx.per_mm().to_bits();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, salt));
    let normal = Normal::new(0.0, 1.0).unwrap();
    Array2::from_shape_fn((scene.height, scene.width), |_| {
        (1.0 + scene.speckle_contrast * normal.sample(&mut rng)).max(0.0)
    })
}

/// Per-pixel reflectance pair for the scene's sample under its fx.
fn reflectance_planes(scene: &FringeScene) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut cache: HashMap<(u64, u64), (f64, f64)> = HashMap::new();
    let wavelength = scene.sample.wavelength_nm();
    let mut rd_dc = Array2::zeros((scene.height, scene.width));
    let mut rd_ac = Array2::zeros((scene.height, scene.width));
    for y in 0..scene.height {
        for x in 0..scene.width {
            let (mu_a, mu_s) = scene.sample.at(y, x);
            let key = (mu_a.to_bits(), mu_s.to_bits());
            let (dc, ac) = match cache.get(&key) {
                Some(&v) => v,
                None => {
                    let props = OpticalProperties::new(mu_a, mu_s, wavelength)?;
                    let dc = diffuse_reflectance(
                        &props,
                        SpatialFrequency::PLANAR,
                        scene.refractive_index,
                    )?;
                    let ac = diffuse_reflectance(&props, scene.fx, scene.refractive_index)?;
                    cache.insert(key, (dc, ac));
                    (dc, ac)
                }
            };
            rd_dc[[y, x]] = dc;
            rd_ac[[y, x]] = ac;
        }
    }
    Ok((rd_dc, rd_ac))
}

fn quantize(v: f32, depth: BitDepth) -> f32 {
    match depth.max_code() {
        Some(max) => {
            let q = (v * max as f32).round().clamp(0.0, max as f32);
            q / max as f32
        }
        None => v,
    }
}

/// Render a drifting-fringe video of the scene.
///
/// The intensity model is
/// `I(x, y, t) = envelope * (Rd_DC + m(t) * Rd_AC * cos(2 pi fx x + phi(t)))`
/// times the speckle field, plus additive noise, clipped to [0, 1].
/// The exact phase series phi(t) and per-frame modulation m(t) are returned
/// for oracle tests. Rendering is deterministic per seed.
pub fn render_fringe_video(
    scene: &FringeScene,
    n_frames: usize,
    frame_rate_fps: f32,
    seed: u64,
    quantize_to: Option<BitDepth>,
) -> Result<RenderedVideo> {
    scene.validate()?;
    if n_frames == 0 {
        return Err(Error::invalid("n_frames must be >= 1"));
    }
    let (rd_dc, rd_ac) = reflectance_planes(scene)?;
    let speckle = if scene.speckle_contrast > 0.0 {
        Some(speckle_field(scene, seed))
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5ce0e));
    let walk = Normal::new(0.0, scene.drift.random_walk_std_deg.max(f64::MIN_POSITIVE)).unwrap();
    let noise = Normal::new(0.0, 1.0).unwrap();

    let bit_depth = quantize_to.unwrap_or(BitDepth::Float32);
    let mut stack =
        FrameStack::new(scene.width, scene.height, 1, frame_rate_fps, bit_depth)?;
    let mut truth = Vec::with_capacity(n_frames);

    let omega = 2.0 * PI * scene.fx.per_mm() * scene.pixel_size_mm; // rad per pixel
    let mut phase_deg = scene.phase0_deg;
    for _t in 0..n_frames {
        let dropped = scene.dropout.probability > 0.0
            && rng.gen_bool(scene.dropout.probability.clamp(0.0, 1.0));
        let modulation = if dropped { 1.0 - scene.dropout.depth } else { 1.0 };
        let phase_rad = phase_deg.to_radians();

        let mut frame = Array3::<f32>::zeros((scene.height, scene.width, 1));
        for y in 0..scene.height {
            for x in 0..scene.width {
                let env = scene.envelope.value(x as f64, y as f64);
                let carrier = (omega * x as f64 + phase_rad).cos();
                let mut v = env * (rd_dc[[y, x]] + modulation * rd_ac[[y, x]] * carrier);
                if let Some(s) = &speckle {
                    v *= s[[y, x]];
                }
                if scene.noise_std > 0.0 {
                    v += scene.noise_std * noise.sample(&mut rng);
                }
                frame[[y, x, 0]] = quantize(v.clamp(0.0, 1.0) as f32, bit_depth);
            }
        }
        stack.push_frame(frame)?;
        truth.push(FrameTruth { phase_deg: phase_deg.rem_euclid(360.0), contrast: modulation });

        phase_deg += scene.drift.linear_deg_per_frame;
        if scene.drift.random_walk_std_deg > 0.0 {
            phase_deg += walk.sample(&mut rng);
        }
    }
    Ok(RenderedVideo { stack, truth })
}

/// Render two scenes into one RGB stack: channel 0 carries `red`, channel 1
/// carries `green`, channel 2 is dark. Channels use independent sub-seeds.
pub fn render_dual(
    red: &FringeScene,
    green: &FringeScene,
    n_frames: usize,
    frame_rate_fps: f32,
    seed: u64,
    quantize_to: Option<BitDepth>,
) -> Result<(FrameStack, [Vec<FrameTruth>; 2])> {
    if red.width != green.width || red.height != green.height {
        return Err(Error::invalid("both channel scenes must share dimensions"));
    }
    let r = render_fringe_video(red, n_frames, frame_rate_fps, mix_seed(seed, 1), quantize_to)?;
    let g = render_fringe_video(green, n_frames, frame_rate_fps, mix_seed(seed, 2), quantize_to)?;
    let bit_depth = quantize_to.unwrap_or(BitDepth::Float32);
    let mut stack = FrameStack::new(red.width, red.height, 3, frame_rate_fps, bit_depth)?;
    for t in 0..n_frames {
        let mut frame = Array3::<f32>::zeros((red.height, red.width, 3));
        frame
            .index_axis_mut(ndarray::Axis(2), 0)
            .assign(&r.stack.channel_view(t, 0));
        frame
            .index_axis_mut(ndarray::Axis(2), 1)
            .assign(&g.stack.channel_view(t, 0));
        stack.push_frame(frame)?;
    }
    Ok((stack, [r.truth, g.truth]))
}

/// Cross-sectional envelope profile: mean over all frames, then mean over a
/// band of rows centred on the frame middle. Used to compare envelope
/// stability across captures.
pub fn envelope_profile(stack: &FrameStack, row_band_half_width: usize) -> Result<Vec<f64>> {
    if stack.is_empty() {
        return Err(Error::invalid("empty stack has no envelope profile"));
    }
    let mean = stack.mean_frame()?;
    let center = stack.height() / 2;
    let lo = center.saturating_sub(row_band_half_width);
    let hi = (center + row_band_half_width).min(stack.height() - 1);
    let rows = (hi - lo + 1) as f64;
    let mut profile = vec![0.0; stack.width()];
    for x in 0..stack.width() {
        let mut acc = 0.0;
        for y in lo..=hi {
            let mut px = 0.0;
            for c in 0..stack.channels() {
                px += mean[[y, x, c]] as f64;
            }
            acc += px / stack.channels() as f64;
        }
        profile[x] = acc / rows;
    }
    Ok(profile)
}

/// Ground-truth series as CSV: frame_index,phase_deg,contrast.
pub fn truth_csv(truth: &[FrameTruth]) -> String {
    let mut out = String::from("frame_index,phase_deg,contrast\n");
    for (i, t) in truth.iter().enumerate() {
        out.push_str(&format!("{},{:.6},{:.6}\n", i, t.phase_deg, t.contrast));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::OpticalProperties;

    fn basic_scene() -> FringeScene {
        FringeScene {
            width: 96,
            height: 32,
            fx: SpatialFrequency::new(0.2).unwrap(),
            pixel_size_mm: 0.4, // 12.5 px period
            envelope: Envelope::Flat { amplitude: 0.8 },
            phase0_deg: 0.0,
            drift: DriftModel::NONE,
            dropout: ContrastDropout::NONE,
            noise_std: 0.0,
            speckle_contrast: 0.0,
            sample: PropertyField::Uniform(OpticalProperties::new(0.01, 1.0, 660.0).unwrap()),
            refractive_index: 1.4,
        }
    }

    #[test]
    fn double_slit_values_match_device_frequencies() {
        let fx = FiberPair::new(10.0, 660.0, 50.0).unwrap().spatial_frequency();
        assert!((fx.per_mm() - 0.30303).abs() < 1e-4);
        let fx = FiberPair::new(5.0, 660.0, 50.0).unwrap().spatial_frequency();
        assert!((fx.per_mm() - 0.15152).abs() < 1e-4);
        let fx = FiberPair::new(5.0, 515.0, 50.0).unwrap().spatial_frequency();
        assert!((fx.per_mm() - 0.19417).abs() < 1e-4);
    }

    #[test]
    fn doubling_working_distance_halves_frequency() {
        let near = FiberPair::new(8.66, 660.0, 25.0).unwrap().spatial_frequency();
        let far = FiberPair::new(8.66, 660.0, 50.0).unwrap().spatial_frequency();
        assert!((near.per_mm() - 2.0 * far.per_mm()).abs() < 1e-12);
    }

    #[test]
    fn small_angle_identity_holds_exactly() {
        for d in DEVICE_TIP_SPACINGS_UM {
            for wd in [20.0, 30.0, 50.0] {
                let p = FiberPair::new(d, 660.0, wd).unwrap();
                let fx = p.spatial_frequency().per_mm();
                let identity = fx * (p.wavelength_nm * 1e-6) * p.working_distance_mm
                    / (p.spacing_um * 1e-3);
                assert!((identity - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn drift_free_render_is_static_sinusoid() {
        let scene = basic_scene();
        let video = render_fringe_video(&scene, 4, 10.0, 9, None).unwrap();
        for t in 1..4 {
            assert_eq!(video.stack.frame(t), video.stack.frame(0), "frames must be identical");
        }
        // spectrum peak of the row-averaged frame sits at fx (+-1 bin)
        let profile: Vec<f64> = (0..96)
            .map(|x| (0..32).map(|y| video.stack.frame(0)[[y, x, 0]] as f64).sum::<f64>() / 32.0)
            .collect();
        let n = profile.len();
        let mean: f64 = profile.iter().sum::<f64>() / n as f64;
        let mut best = (0usize, 0.0f64);
        for k in 1..n / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (x, v) in profile.iter().enumerate() {
                let ang = 2.0 * PI * k as f64 * x as f64 / n as f64;
                re += (v - mean) * ang.cos();
                im -= (v - mean) * ang.sin();
            }
            let mag = (re * re + im * im).sqrt();
            if mag > best.1 {
                best = (k, mag);
            }
        }
        let expected_bin = scene.fx.per_mm() * scene.pixel_size_mm * n as f64; // 7.68
        assert!((best.0 as f64 - expected_bin).abs() <= 1.0, "peak bin {} vs {expected_bin}", best.0);
    }

    #[test]
    fn rendered_triplet_demodulates_to_envelope_times_reflectance() {
        // three exact phase steps via deterministic linear drift
        let mut scene = basic_scene();
        scene.drift = DriftModel { random_walk_std_deg: 0.0, linear_deg_per_frame: 120.0 };
        let video = render_fringe_video(&scene, 3, 10.0, 3, None).unwrap();
        let props = OpticalProperties::new(0.01, 1.0, 660.0).unwrap();
        let rd_dc = diffuse_reflectance(&props, SpatialFrequency::PLANAR, 1.4).unwrap();
        let rd_ac = diffuse_reflectance(&props, scene.fx, 1.4).unwrap();
        let (want_ac, want_dc) = (0.8 * rd_ac, 0.8 * rd_dc);
        for x in 0..96 {
            let (i1, i2, i3) = (
                video.stack.frame(0)[[16, x, 0]] as f64,
                video.stack.frame(1)[[16, x, 0]] as f64,
                video.stack.frame(2)[[16, x, 0]] as f64,
            );
            let m_dc = (i1 + i2 + i3) / 3.0;
            let m_ac = (2.0f64.sqrt() / 3.0)
                * ((i1 - i2).powi(2) + (i2 - i3).powi(2) + (i3 - i1).powi(2)).sqrt();
            assert!((m_dc - want_dc).abs() / want_dc < 1e-6);
            assert!((m_ac - want_ac).abs() / want_ac < 1e-6);
        }
    }

    #[test]
    fn full_dropout_kills_modulation() {
        let mut scene = basic_scene();
        scene.dropout = ContrastDropout { probability: 1.0, depth: 1.0 };
        let video = render_fringe_video(&scene, 5, 10.0, 11, None).unwrap();
        assert!(video.truth.iter().all(|t| t.contrast == 0.0));
        // all frames flat at envelope * rd_dc
        let f = video.stack.frame(2);
        let (min, max) = f.iter().fold((f32::MAX, f32::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        assert!(max - min < 1e-6);
    }

    #[test]
    fn flat_scene_yields_flat_profile() {
        let mut scene = basic_scene();
        // zero modulation via full dropout; envelope flat
        scene.dropout = ContrastDropout { probability: 1.0, depth: 1.0 };
        let video = render_fringe_video(&scene, 3, 10.0, 1, None).unwrap();
        let profile = envelope_profile(&video.stack, 5).unwrap();
        let c = profile[0];
        assert!(profile.iter().all(|&v| (v - c).abs() < 1e-6));
    }

    #[test]
    fn gaussian_envelope_profile_peaks_at_center() {
        let mut scene = basic_scene();
        scene.envelope = Envelope::Gaussian {
            amplitude: 0.9,
            center_px: (48.0, 16.0),
            sigma_px: (20.0, 20.0),
        };
        scene.drift = DriftModel { random_walk_std_deg: 40.0, linear_deg_per_frame: 0.0 };
        let video = render_fringe_video(&scene, 60, 10.0, 21, None).unwrap();
        let profile = envelope_profile(&video.stack, 5).unwrap();
        let argmax = profile
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((argmax as i64 - 48).unsigned_abs() <= 1, "argmax {argmax}");
    }

    #[test]
    fn envelope_scale_change_keeps_argmax_and_bounded_ratio() {
        let mut a = basic_scene();
        a.envelope = Envelope::Gaussian {
            amplitude: 1.0,
            center_px: (40.0, 16.0),
            sigma_px: (18.0, 18.0),
        };
        let mut b = a.clone();
        b.envelope = Envelope::Gaussian {
            amplitude: 1.1,
            center_px: (40.0, 16.0),
            sigma_px: (18.0, 18.0),
        };
        let va = render_fringe_video(&a, 10, 10.0, 4, None).unwrap();
        let vb = render_fringe_video(&b, 10, 10.0, 4, None).unwrap();
        let pa = envelope_profile(&va.stack, 5).unwrap();
        let pb = envelope_profile(&vb.stack, 5).unwrap();
        let argmax = |p: &[f64]| {
            p.iter().enumerate().max_by(|x, y| x.1.partial_cmp(y.1).unwrap()).unwrap().0
        };
        assert_eq!(argmax(&pa), argmax(&pb));
        for (x, (&ya, &yb)) in pa.iter().zip(pb.iter()).enumerate() {
            if ya > 1e-3 {
                let ratio = yb / ya;
                assert!((ratio - 1.1).abs() < 0.011, "ratio {ratio} at x={x}");
            }
        }
    }

    #[test]
    fn renderer_is_deterministic_per_seed() {
        let mut scene = basic_scene();
        scene.drift = DriftModel { random_walk_std_deg: 10.0, linear_deg_per_frame: 0.0 };
        scene.noise_std = 0.01;
        scene.speckle_contrast = 0.1;
        let a = render_fringe_video(&scene, 8, 10.0, 77, None).unwrap();
        let b = render_fringe_video(&scene, 8, 10.0, 77, None).unwrap();
        assert_eq!(a.stack, b.stack);
        let c = render_fringe_video(&scene, 8, 10.0, 78, None).unwrap();
        assert_ne!(a.stack, c.stack);
    }

    #[test]
    fn speckle_field_is_frequency_correlated() {
        let mut s1 = basic_scene();
        s1.speckle_contrast = 0.2;
        let mut s2 = s1.clone();
        s2.fx = SpatialFrequency::new(0.3).unwrap();
        let f1 = speckle_field(&s1, 5);
        let f1_again = speckle_field(&s1, 5);
        let f2 = speckle_field(&s2, 5);
        assert_eq!(f1, f1_again, "same seed and fx share the field");
        assert_ne!(f1, f2, "different fx regenerates the field");
    }

    #[test]
    fn quantization_twelve_bit() {
        let mut scene = basic_scene();
        scene.noise_std = 0.003;
        let video = render_fringe_video(&scene, 2, 10.0, 5, Some(BitDepth::Twelve)).unwrap();
        for &v in video.stack.frame(0).iter() {
            let q = v * 4095.0;
            assert!((q - q.round()).abs() < 1e-3, "value {v} not on the 12-bit lattice");
        }
    }
}
