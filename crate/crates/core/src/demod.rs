//! Phase-tracking frame selection from a drifting-fringe stack and
//! three-phase AC/DC demodulation.
//!
//! Tracking pipeline: subtract the mean frame, reduce each frame to a
//! smoothed row-band profile, estimate the fringe period from adjacent
//! maxima, then fit each frame's complex fringe amplitude at that period.
//!
//! Mean-frame subtraction shifts every per-frame phasor by one common
//! complex offset, so the phasors of all frames are concentric around it:
//! steady frames at radius (fringe amplitude), contrast dropouts on smaller
//! circles. A consensus circle fit over the phasors recovers that offset;
//! angles around it are the physical relative phases, and radial distance
//! is each frame's true modulation, which drives the contrast floor. Frames
//! whose modulation falls below a configurable fraction of the zeroth
//! frame's are disregarded.

use crate::error::{Error, Result, TripletSearch};
use crate::optics::SpatialFrequency;
use crate::stack::FrameStack;
use ndarray::{Array2, ArrayView2};
use std::f64::consts::PI;

/// Tracking and selection parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Acceptance half-width around the 120/240 degree targets.
    pub phase_tolerance_deg: f64,
    /// Minimum contrast as a fraction of the zeroth frame's contrast.
    pub contrast_floor: f64,
    /// Rows averaged on each side of the frame's central row.
    pub row_band_half_width: usize,
    /// Moving-average window applied to the row-band profile, pixels.
    pub smoothing_window_px: usize,
    /// The zeroth frame is the highest-contrast frame inside this initial
    /// span of the capture.
    pub zeroth_window_s: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            phase_tolerance_deg: 10.0,
            contrast_floor: 0.7,
            row_band_half_width: 5,
            smoothing_window_px: 5,
            zeroth_window_s: 1.0,
        }
    }
}

/// Row-averaged, smoothed fringe cross-section with extracted quantities.
/// `period_px`/`phase_deg` are `None` when no fringe is discernible.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeProfile {
    /// Smoothed, row-band-averaged intensity profile.
    pub values: Vec<f64>,
    /// Fringe period from mean adjacent-maxima spacing, pixels.
    pub period_px: Option<f64>,
    /// Phase at x = 0 in cosine convention, degrees in [0, 360).
    pub phase_deg: Option<f64>,
    /// Max minus min of the smoothed profile.
    pub contrast: f64,
}

impl FringeProfile {
    pub fn is_discernible(&self) -> bool {
        self.period_px.is_some()
    }
}

/// Three frame indices whose relative phases approximate {0, 120, 240}
/// degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTriplet {
    pub indices: [usize; 3],
    /// Relative phases (degrees) of the three frames w.r.t. the zeroth.
    pub phases_deg: [f64; 3],
}

impl FrameTriplet {
    pub fn new(indices: [usize; 3], phases_deg: [f64; 3], tolerance_deg: f64) -> Result<Self> {
        if indices[0] == indices[1] || indices[1] == indices[2] || indices[0] == indices[2] {
            return Err(Error::invalid("triplet frame indices must be distinct"));
        }
        for (phase, target) in phases_deg.iter().zip([0.0, 120.0, 240.0]) {
            if wrap_half(phase - target).abs() > tolerance_deg + 1e-9 {
                return Err(Error::invalid(format!(
                    "triplet phase {phase:.2} deg not within {tolerance_deg} deg of {target}"
                )));
            }
        }
        Ok(Self { indices, phases_deg })
    }
}

/// AC and DC modulation amplitude maps from one triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct DemodulatedPair {
    pub m_ac: Array2<f64>,
    pub m_dc: Array2<f64>,
    pub fx: SpatialFrequency,
    /// Pixels where a negative DC estimate was clipped to zero (possible
    /// only from corrupt input).
    pub clipped: Array2<bool>,
}

/// Per-frame tracking record, the basis of the selection report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTrack {
    pub frame: usize,
    /// Phase relative to the zeroth frame, degrees in [0, 360).
    pub phase_deg: Option<f64>,
    pub contrast: f64,
    pub usable: bool,
}

/// Outcome of tracking a full stack.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackData {
    pub frames: Vec<FrameTrack>,
    /// Index of the zeroth (phase reference) frame, when one exists.
    pub zeroth: Option<usize>,
    /// Fringe period used for the phase fits, pixels.
    pub period_px: Option<f64>,
    /// Fitted complex fringe amplitude per frame, in the tracking basis.
    pub phasors: Vec<(f64, f64)>,
    /// Common phasor offset introduced by the mean-frame subtraction.
    pub circle_center: Option<(f64, f64)>,
    /// Fringe contrast (peak-trough modulation) of the zeroth frame.
    pub zeroth_contrast: f64,
}

fn wrap_half(deg: f64) -> f64 {
    let mut d = deg.rem_euclid(360.0);
    if d > 180.0 {
        d -= 360.0;
    }
    d
}

fn positive_deg(deg: f64) -> f64 {
    deg.rem_euclid(360.0)
}

/// Subtract the mean frame from every frame. The result has pointwise mean
/// approximately zero and carries only the modulated component.
pub fn background_subtract(stack: &FrameStack) -> Result<FrameStack> {
    if stack.len() < 2 {
        return Err(Error::invalid("background subtraction needs at least 2 frames"));
    }
    let mean = stack.mean_frame()?;
    let mut out = FrameStack::new(
        stack.width(),
        stack.height(),
        stack.channels(),
        stack.frame_rate_fps(),
        stack.bit_depth(),
    )?;
    for f in stack.frames() {
        out.push_frame(f - &mean)?;
    }
    Ok(out)
}

fn band_profile(frame: ArrayView2<'_, f32>, cfg: &TrackerConfig) -> Result<Vec<f64>> {
    let (h, w) = frame.dim();
    let band = 2 * cfg.row_band_half_width + 1;
    if band > h {
        return Err(Error::invalid(format!(
            "row band of {band} rows exceeds image height {h}"
        )));
    }
    let center = h / 2;
    let lo = center - cfg.row_band_half_width.min(center);
    let hi = (center + cfg.row_band_half_width).min(h - 1);
    let rows = (hi - lo + 1) as f64;
    let mut profile = vec![0.0f64; w];
    for y in lo..=hi {
        for x in 0..w {
            profile[x] += frame[[y, x]] as f64;
        }
    }
    for v in &mut profile {
        *v /= rows;
    }
    Ok(profile)
}

fn smooth_moving_average(profile: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return profile.to_vec();
    }
    let n = profile.len();
    let half_lo = (window - 1) / 2;
    let half_hi = window / 2;
    let mut out = vec![0.0; n];
    for i in 0..n {
        let lo = i.saturating_sub(half_lo);
        let hi = (i + half_hi).min(n - 1);
        let sum: f64 = profile[lo..=hi].iter().sum();
        out[i] = sum / (hi - lo + 1) as f64;
    }
    out
}

/// Sub-pixel positions of strict local maxima (parabolic refinement).
fn find_maxima(profile: &[f64]) -> Vec<f64> {
    let n = profile.len();
    let mut maxima = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if profile[i] > profile[i - 1] && profile[i] >= profile[i + 1] {
            let denom = profile[i - 1] - 2.0 * profile[i] + profile[i + 1];
            let offset = if denom.abs() > 1e-300 {
                (0.5 * (profile[i - 1] - profile[i + 1]) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            maxima.push(i as f64 + offset);
            // skip a plateau of equal samples
            let mut j = i + 1;
            while j + 1 < n && profile[j] == profile[i] {
                j += 1;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    maxima
}

fn period_from_maxima(maxima: &[f64], width: usize) -> Option<f64> {
    if maxima.len() < 2 {
        return None;
    }
    let spacings: Vec<f64> = maxima.windows(2).map(|w| w[1] - w[0]).collect();
    let period = spacings.iter().sum::<f64>() / spacings.len() as f64;
    if period.is_finite() && period >= 2.0 && period <= width as f64 {
        Some(period)
    } else {
        None
    }
}

/// Least-squares fit of `a + b cos(w(x - xc)) + c sin(w(x - xc))` over the
/// interior of the smoothed profile (the span where the moving average of a
/// sinusoid stays an exact sinusoid). Returns (b, c).
fn sinusoid_coefficients(profile: &[f64], omega: f64, window: usize) -> (f64, f64) {
    let n = profile.len();
    let margin = window / 2;
    let lo = margin.min(n.saturating_sub(1));
    let hi = n - margin.min(n);
    let (lo, hi) = if hi > lo + 8 { (lo, hi) } else { (0, n) };
    let xc = (n as f64 - 1.0) / 2.0;

    let (mut s1, mut sc, mut ss, mut scc, mut scs, mut sss) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut sp, mut spc, mut sps) = (0.0, 0.0, 0.0);
    for (x, &p) in profile.iter().enumerate().take(hi).skip(lo) {
        let ang = omega * (x as f64 - xc);
        let (cs, sn) = (ang.cos(), ang.sin());
        s1 += 1.0;
        sc += cs;
        ss += sn;
        scc += cs * cs;
        scs += cs * sn;
        sss += sn * sn;
        sp += p;
        spc += p * cs;
        sps += p * sn;
    }
    // Solve the 3x3 normal equations by Gaussian elimination.
    let mut m = [[s1, sc, ss, sp], [sc, scc, scs, spc], [ss, scs, sss, sps]];
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        if m[col][col].abs() < 1e-300 {
            return (0.0, 0.0);
        }
        for row in 0..3 {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..4 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    (m[1][3] / m[1][1], m[2][3] / m[2][2])
}

/// Phasor of the fringe component at the given period: magnitude is the
/// fitted amplitude, argument is the phase at the profile centre.
fn fringe_phasor(profile: &[f64], period_px: f64, window: usize) -> (f64, f64) {
    let omega = 2.0 * PI / period_px;
    let (b, c) = sinusoid_coefficients(profile, omega, window);
    // a + b cos(u) + c sin(u) = a + R cos(u + theta), theta = atan2(-c, b)
    (b, -c)
}

/// Extract a fringe profile from a single frame: smoothed row-band mean,
/// period from adjacent maxima, phase from the sinusoid fit at that period.
pub fn estimate_phase(frame: ArrayView2<'_, f32>, cfg: &TrackerConfig) -> Result<FringeProfile> {
    if cfg.smoothing_window_px == 0 {
        return Err(Error::invalid("smoothing window must be >= 1"));
    }
    let raw = band_profile(frame, cfg)?;
    let values = smooth_moving_average(&raw, cfg.smoothing_window_px);
    let contrast = contrast_of(&values);
    let maxima = find_maxima(&values);
    let period_px = period_from_maxima(&maxima, values.len());
    let phase_deg = period_px.map(|t| {
        let (re, im) = fringe_phasor(&values, t, cfg.smoothing_window_px);
        let omega = 2.0 * PI / t;
        let xc = (values.len() as f64 - 1.0) / 2.0;
        // shift the centre-referenced phase back to x = 0
        positive_deg((im.atan2(re) - omega * xc).to_degrees())
    });
    Ok(FringeProfile { values, period_px, phase_deg, contrast })
}

fn contrast_of(values: &[f64]) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

// Fraction of the cloud extent used as the radial window width when
// scoring candidate centres, and the fraction of the cloud a centre must
// explain to be trusted.
const RING_WINDOW: f64 = 0.025;
const MIN_CONSENSUS: f64 = 0.4;

/// Points captured by at most `k` radial windows of absolute width
/// `window` around the given centre. Around the true centre the cloud
/// collapses into one sharp ring per modulation level, so nearly every
/// point is captured; around any eccentric centre the radii smear.
fn ring_capture(points: &[(f64, f64)], center: (f64, f64), window: f64, k: usize) -> usize {
    let mut radii: Vec<f64> = points
        .iter()
        .map(|p| ((p.0 - center.0).powi(2) + (p.1 - center.1).powi(2)).sqrt())
        .collect();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut captured = 0usize;
    for _ in 0..k {
        if radii.is_empty() {
            break;
        }
        // densest window over the sorted radii
        let mut best = (0usize, 0usize); // (count, start index)
        let mut j = 0usize;
        for i in 0..radii.len() {
            if j < i + 1 {
                j = i + 1;
            }
            while j < radii.len() && radii[j] - radii[i] <= window {
                j += 1;
            }
            if j - i > best.0 {
                best = (j - i, i);
            }
        }
        if best.0 == 0 {
            break;
        }
        captured += best.0;
        radii.drain(best.1..best.1 + best.0);
    }
    captured
}

/// Deterministic consensus centre of a phasor cloud: circumcentres of
/// strided point triples are scored by how much of the cloud collapses
/// into at most three narrow radial rings around them. Returns the winning
/// centre and its captured count. `None` when the cloud has no structure
/// (e.g. a drift-free stack collapses to a single point).
fn consensus_center(points: &[(f64, f64)]) -> Option<((f64, f64), usize)> {
    let n = points.len();
    if n < 3 {
        return None;
    }
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo_x = lo_x.min(p.0);
        hi_x = hi_x.max(p.0);
        lo_y = lo_y.min(p.1);
        hi_y = hi_y.max(p.1);
    }
    let extent = ((hi_x - lo_x).powi(2) + (hi_y - lo_y).powi(2)).sqrt();
    if !(extent.is_finite() && extent > 0.0) {
        return None;
    }
    let window = RING_WINDOW * extent;

    let mut best: Option<((f64, f64), usize)> = None;
    for stride in [n / 3, n / 5, n / 11] {
        let s = stride.max(1);
        for i in 0..n {
            let (a, b, c) = (i, (i + s) % n, (i + 2 * s) % n);
            if a == b || b == c || a == c {
                continue;
            }
            let Some(center) = circumcenter(points[a], points[b], points[c]) else {
                continue;
            };
            let captured = ring_capture(points, center, window, 3);
            if best.map_or(true, |(_, k)| captured > k) {
                best = Some((center, captured));
            }
        }
    }
    best
}

fn single_channel_view(stack: &FrameStack, t: usize) -> ArrayView2<'_, f32> {
    stack.channel_view(t, 0)
}

/// Track every frame of a background-subtracted, single-channel stack:
/// choose the zeroth frame, fit per-frame phasors at its period, correct the
/// subtraction offset, and grade contrast.
pub fn track_frames(subtracted: &FrameStack, cfg: &TrackerConfig) -> Result<TrackData> {
    if subtracted.channels() != 1 {
        return Err(Error::invalid("tracking expects a single-channel stack"));
    }
    if subtracted.len() < 3 {
        return Err(Error::invalid("tracking needs at least 3 frames"));
    }
    if !(cfg.contrast_floor >= 0.0 && cfg.phase_tolerance_deg > 0.0) {
        return Err(Error::invalid("tracker thresholds must be positive"));
    }
    let n = subtracted.len();

    let mut profiles = Vec::with_capacity(n);
    for t in 0..n {
        let raw = band_profile(single_channel_view(subtracted, t), cfg)?;
        profiles.push(smooth_moving_average(&raw, cfg.smoothing_window_px));
    }
    let raw_contrasts: Vec<f64> = profiles.iter().map(|p| contrast_of(p)).collect();

    // Fringe period: mean adjacent-maxima spacing of the clearest
    // discernible frame (the period is a property of the projection, shared
    // by every frame).
    let mut discernible = vec![false; n];
    let mut period: Option<f64> = None;
    let mut anchor_contrast = f64::NEG_INFINITY;
    for t in 0..n {
        let maxima = find_maxima(&profiles[t]);
        if let Some(p) = period_from_maxima(&maxima, profiles[t].len()) {
            discernible[t] = true;
            if raw_contrasts[t] > anchor_contrast {
                anchor_contrast = raw_contrasts[t];
                period = Some(p);
            }
        }
    }

    let not_found = |raw_contrasts: &[f64]| TrackData {
        frames: (0..n)
            .map(|t| FrameTrack {
                frame: t,
                phase_deg: None,
                contrast: raw_contrasts[t],
                usable: false,
            })
            .collect(),
        zeroth: None,
        period_px: None,
        phasors: vec![(0.0, 0.0); n],
        circle_center: None,
        zeroth_contrast: 0.0,
    };
    let Some(period) = period else {
        return Ok(not_found(&raw_contrasts));
    };

    // Per-frame phasors at the shared period. Mean-frame subtraction adds
    // one common complex offset, so every frame's phasor sits at radius
    // (modulation x amplitude) around that offset. Recover it by consensus
    // over the discernible phasors.
    let phasors: Vec<(f64, f64)> = profiles
        .iter()
        .map(|p| fringe_phasor(p, period, cfg.smoothing_window_px))
        .collect();
    let cloud: Vec<(f64, f64)> =
        (0..n).filter(|&t| discernible[t]).map(|t| phasors[t]).collect();
    let Some((center, captured)) = consensus_center(&cloud) else {
        return Ok(not_found(&raw_contrasts));
    };
    if (captured as f64) < MIN_CONSENSUS * cloud.len() as f64 {
        return Ok(not_found(&raw_contrasts));
    }

    // Radial distance from the recovered offset is the frame's true
    // peak-trough fringe modulation (up to the common smoothing factor).
    let modulation: Vec<f64> = phasors
        .iter()
        .map(|p| 2.0 * ((p.0 - center.0).powi(2) + (p.1 - center.1).powi(2)).sqrt())
        .collect();

    // Zeroth frame: highest modulation among discernible frames in the
    // initial window of the capture.
    let window_frames = ((subtracted.frame_rate_fps() as f64 * cfg.zeroth_window_s).ceil()
        as usize)
        .clamp(1, n);
    let mut zeroth: Option<usize> = None;
    for t in 0..window_frames {
        if discernible[t] && modulation[t] > 0.0 {
            if zeroth.map_or(true, |z| modulation[t] > modulation[z]) {
                zeroth = Some(t);
            }
        }
    }
    let Some(zeroth) = zeroth else {
        return Ok(not_found(&raw_contrasts));
    };

    let floor = cfg.contrast_floor * modulation[zeroth];
    let zero_phase = {
        let (re, im) = (phasors[zeroth].0 - center.0, phasors[zeroth].1 - center.1);
        im.atan2(re)
    };
    let frames: Vec<FrameTrack> = (0..n)
        .map(|t| {
            let (re, im) = (phasors[t].0 - center.0, phasors[t].1 - center.1);
            let rel = positive_deg((im.atan2(re) - zero_phase).to_degrees());
            FrameTrack {
                frame: t,
                phase_deg: if discernible[t] { Some(rel) } else { None },
                contrast: modulation[t],
                usable: discernible[t] && modulation[t] >= floor && modulation[t] > 0.0,
            }
        })
        .collect();

    Ok(TrackData {
        frames,
        zeroth: Some(zeroth),
        period_px: Some(period),
        phasors,
        circle_center: Some(center),
        zeroth_contrast: modulation[zeroth],
    })
}

/// Circumcircle centre of three points, or None when nearly collinear.
fn circumcenter(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> Option<(f64, f64)> {
    let span = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let scale = span(p0, p1).max(span(p1, p2)).max(span(p0, p2));
    // d = 4 * signed triangle area
    let d = 2.0
        * (p0.0 * (p1.1 - p2.1) + p1.0 * (p2.1 - p0.1) + p2.0 * (p0.1 - p1.1));
    if scale <= 0.0 || d.abs() < 1e-9 * scale * scale {
        return None;
    }
    let sq = |p: (f64, f64)| p.0 * p.0 + p.1 * p.1;
    let ux = (sq(p0) * (p1.1 - p2.1) + sq(p1) * (p2.1 - p0.1) + sq(p2) * (p0.1 - p1.1)) / d;
    let uy = (sq(p0) * (p2.0 - p1.0) + sq(p1) * (p0.0 - p2.0) + sq(p2) * (p1.0 - p0.0)) / d;
    Some((ux, uy))
}


/// Select the first frames whose relative phases fall within the tolerance
/// of 120 and 240 degrees and whose contrast passes the floor.
pub fn select_triplet(subtracted: &FrameStack, cfg: &TrackerConfig) -> Result<FrameTriplet> {
    let tracks = track_frames(subtracted, cfg)?;
    select_from_tracks(&tracks, cfg)
}

/// Selection step on precomputed tracking data.
pub fn select_from_tracks(tracks: &TrackData, cfg: &TrackerConfig) -> Result<FrameTriplet> {
    let zeroth = match tracks.zeroth {
        Some(z) => z,
        None => {
            return Err(Error::TripletNotFound(TripletSearch {
                zeroth: None,
                best_120: None,
                best_240: None,
                usable_frames: 0,
            }));
        }
    };
    let tol = cfg.phase_tolerance_deg;
    let mut pick_120: Option<(usize, f64)> = None;
    let mut pick_240: Option<(usize, f64)> = None;
    let mut best_120: Option<(usize, f64, f64)> = None; // frame, phase, distance
    let mut best_240: Option<(usize, f64, f64)> = None;
    let mut usable_frames = 0usize;

    for t in &tracks.frames {
        if t.frame == zeroth || !t.usable {
            continue;
        }
        usable_frames += 1;
        let rel = match t.phase_deg {
            Some(p) => p,
            None => continue,
        };
        let d120 = wrap_half(rel - 120.0).abs();
        let d240 = wrap_half(rel - 240.0).abs();
        if best_120.map_or(true, |(_, _, d)| d120 < d) {
            best_120 = Some((t.frame, rel, d120));
        }
        if best_240.map_or(true, |(_, _, d)| d240 < d) {
            best_240 = Some((t.frame, rel, d240));
        }
        if pick_120.is_none() && d120 <= tol {
            pick_120 = Some((t.frame, rel));
        }
        if pick_240.is_none() && d240 <= tol {
            pick_240 = Some((t.frame, rel));
        }
        if pick_120.is_some() && pick_240.is_some() {
            break;
        }
    }

    match (pick_120, pick_240) {
        (Some((i1, p1)), Some((i2, p2))) if i1 != i2 => {
            FrameTriplet::new([zeroth, i1, i2], [0.0, p1, p2], tol)
        }
        _ => Err(Error::TripletNotFound(TripletSearch {
            zeroth: Some(zeroth),
            best_120: best_120.map(|(i, p, _)| (i, p)),
            best_240: best_240.map(|(i, p, _)| (i, p)),
            usable_frames,
        })),
    }
}

/// Pointwise three-phase demodulation of a single intensity triple.
/// Returns (ac, dc).
#[inline]
pub fn demodulate_values(i1: f64, i2: f64, i3: f64) -> (f64, f64) {
    let ac = (2.0_f64.sqrt() / 3.0)
        * ((i1 - i2).powi(2) + (i2 - i3).powi(2) + (i3 - i1).powi(2)).sqrt();
    let dc = (i1 + i2 + i3) / 3.0;
    (ac, dc)
}

/// Demodulate a triplet of frames from the original (non-subtracted) stack
/// into AC and DC amplitude maps.
pub fn demodulate(
    stack: &FrameStack,
    triplet: &FrameTriplet,
    fx: SpatialFrequency,
) -> Result<DemodulatedPair> {
    if stack.channels() != 1 {
        return Err(Error::invalid("demodulation expects a single-channel stack"));
    }
    for &i in &triplet.indices {
        if i >= stack.len() {
            return Err(Error::invalid(format!(
                "triplet frame {i} out of range for stack of {} frames",
                stack.len()
            )));
        }
    }
    let (h, w) = (stack.height(), stack.width());
    let f1 = single_channel_view(stack, triplet.indices[0]);
    let f2 = single_channel_view(stack, triplet.indices[1]);
    let f3 = single_channel_view(stack, triplet.indices[2]);
    let mut m_ac = Array2::<f64>::zeros((h, w));
    let mut m_dc = Array2::<f64>::zeros((h, w));
    let mut clipped = Array2::<bool>::from_elem((h, w), false);
    for y in 0..h {
        for x in 0..w {
            let (ac, dc) = demodulate_values(f1[[y, x]] as f64, f2[[y, x]] as f64, f3[[y, x]] as f64);
            m_ac[[y, x]] = ac;
            if dc < 0.0 {
                m_dc[[y, x]] = 0.0;
                clipped[[y, x]] = true;
            } else {
                m_dc[[y, x]] = dc;
            }
        }
    }
    Ok(DemodulatedPair { m_ac, m_dc, fx, clipped })
}

/// Usable-frame rate of a raw capture: the fraction of frames passing the
/// contrast floor times the frame rate, with per-frame flags.
#[derive(Debug, Clone, PartialEq)]
pub struct UsableRate {
    pub rate_per_s: f64,
    pub flags: Vec<bool>,
}

pub fn usable_frame_rate(stack: &FrameStack, cfg: &TrackerConfig) -> Result<UsableRate> {
    let subtracted = background_subtract(stack)?;
    let tracks = track_frames(&subtracted, cfg)?;
    let flags: Vec<bool> = tracks.frames.iter().map(|t| t.usable).collect();
    let usable = flags.iter().filter(|&&u| u).count();
    let rate = stack.frame_rate_fps() as f64 * usable as f64 / stack.len() as f64;
    Ok(UsableRate { rate_per_s: rate, flags })
}

/// Frame-selection audit report as CSV: frame,phase_deg,contrast,usable,selected.
pub fn selection_report_csv(tracks: &TrackData, selected: Option<&FrameTriplet>) -> String {
    let mut out = String::from("frame,phase_deg,contrast,usable,selected\n");
    for t in &tracks.frames {
        let phase = t.phase_deg.map_or(String::new(), |p| format!("{p:.4}"));
        let sel = selected.map_or(false, |s| s.indices.contains(&t.frame));
        out.push_str(&format!(
            "{},{},{:.6},{},{}\n",
            t.frame,
            phase,
            t.contrast,
            u8::from(t.usable),
            u8::from(sel)
        ));
    }
    out
}
