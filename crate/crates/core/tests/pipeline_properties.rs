//! End-to-end statistical properties of the processing pipeline, driven by
//! the synthetic renderer as ground-truth oracle.

use sfdi_core::optics::{
    diffuse_reflectance, DiffusionLut, GridAxis, OpticalProperties, SpatialFrequency,
};
use sfdi_core::pipeline::{
    average_maps, process_capture, reference_from_stack, PipelineConfig, PropertyMap,
};
use sfdi_core::projector::{
    render_fringe_video, ContrastDropout, DriftModel, Envelope, FringeScene, PropertyField,
};
use sfdi_core::demod::TrackerConfig;

fn fx(v: f64) -> SpatialFrequency {
    SpatialFrequency::new(v).unwrap()
}

fn props(mu_a: f64, mu_s: f64) -> OpticalProperties {
    OpticalProperties::new(mu_a, mu_s, 660.0).unwrap()
}

fn sweep_scene(sample: OpticalProperties, noise_std: f64, speckle: f64) -> FringeScene {
    FringeScene {
        width: 64,
        height: 64,
        fx: fx(0.2),
        pixel_size_mm: 0.45,
        envelope: Envelope::Flat { amplitude: 0.85 },
        phase0_deg: 0.0,
        drift: DriftModel { random_walk_std_deg: 0.0, linear_deg_per_frame: 10.0 },
        dropout: ContrastDropout::NONE,
        noise_std,
        speckle_contrast: speckle,
        sample: PropertyField::Uniform(sample),
        refractive_index: 1.4,
    }
}

fn test_lut() -> DiffusionLut {
    DiffusionLut::build(
        fx(0.2),
        GridAxis::log(0.004, 0.025, 96),
        GridAxis::linear(0.35, 1.3, 96),
        1.4,
    )
    .unwrap()
}

fn run_once(
    truth: OpticalProperties,
    lut: &DiffusionLut,
    noise_std: f64,
    speckle: f64,
    seed: u64,
    sigma_px: f64,
    tolerance_deg: f64,
) -> PropertyMap {
    let video = render_fringe_video(&sweep_scene(truth, noise_std, speckle), 40, 10.0, seed, None)
        .unwrap();
    let ref_props = props(0.0115, 0.755);
    let ref_video = render_fringe_video(
        &sweep_scene(ref_props, noise_std, speckle),
        40,
        10.0,
        seed ^ 0x5eed,
        None,
    )
    .unwrap();
    let mut cfg = PipelineConfig::new(fx(0.2), 660.0);
    cfg.tracker = TrackerConfig { phase_tolerance_deg: tolerance_deg, ..TrackerConfig::default() };
    cfg.sigma_px = sigma_px;
    let reference =
        reference_from_stack("ref", &ref_video.stack, ref_props, fx(0.2), &cfg.tracker).unwrap();
    process_capture(&video.stack, lut, std::slice::from_ref(&reference), &cfg).unwrap().map
}

#[test]
fn error_grows_gracefully_with_sensor_noise() {
    let lut = test_lut();
    let truth = props(0.009, 0.88);
    let dc_level = 0.85 * diffuse_reflectance(&truth, SpatialFrequency::PLANAR, 1.4).unwrap();
    let mut errors = Vec::new();
    for (i, noise_frac) in [0.0f64, 0.01, 0.05].iter().enumerate() {
        let tol = if *noise_frac > 0.02 { 6.0 } else { 3.0 };
        let map = run_once(truth, &lut, noise_frac * dc_level, 0.0, 300 + i as u64, 5.0, tol);
        let (med_a, med_s) = map.median().unwrap();
        let err = ((med_a - truth.mu_a) / truth.mu_a).abs()
            + ((med_s - truth.mu_s_prime) / truth.mu_s_prime).abs();
        errors.push(err);
    }
    // zero-noise error is tiny and error does not shrink as noise grows
    assert!(errors[0] < 0.01, "zero-noise error {:.4}", errors[0]);
    assert!(errors[2] + 1e-4 > errors[0], "errors {errors:?}");
    assert!(errors[2] < 0.25, "high-noise error should stay bounded, got {errors:?}");
}

#[test]
fn averaging_independent_maps_reduces_variance() {
    let lut = test_lut();
    let truth = props(0.0115, 0.755);
    // speckle regenerates per seed, so maps from different seeds carry
    // independent multiplicative noise
    let maps: Vec<PropertyMap> =
        (0..4).map(|k| run_once(truth, &lut, 0.0, 0.12, 900 + k, 0.0, 3.0)).collect();
    let single_stds: Vec<f64> = maps.iter().map(|m| m.region_stats(None).std_mu_s).collect();
    let averaged = average_maps(&maps).unwrap();
    let avg_std = averaged.region_stats(None).std_mu_s;
    let best_single = single_stds.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(
        avg_std < best_single,
        "averaging 4 maps must beat every single map: {avg_std:.5} vs {single_stds:?}"
    );
    // close to the 1/sqrt(4) ideal for independent noise
    assert!(avg_std < 0.75 * best_single, "{avg_std:.5} vs best {best_single:.5}");
}
