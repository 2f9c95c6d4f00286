//! TOML run configuration and command-line overrides. Flags win over the
//! file; every mode validates its required fields before any input is read.

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use std::path::{Path, PathBuf};

use sfdi_core::clinical::TissueClassStats;
use sfdi_core::demod::TrackerConfig;
use sfdi_core::optics::{GridAxis, GridSpacing, SpatialFrequency};
use sfdi_core::pipeline::AnalysisRegion;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Process,
    Dual,
    Lut,
    Clinical,
}

impl std::str::FromStr for Mode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(Mode::Simulate),
            "process" => Ok(Mode::Process),
            "dual" => Ok(Mode::Dual),
            "lut" => Ok(Mode::Lut),
            "clinical" => Ok(Mode::Clinical),
            other => bail!("unknown mode '{other}' (simulate|process|dual|lut|clinical)"),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    pub scene: Option<SceneSection>,
    /// Second (green) channel scene for dual-wavelength simulation.
    pub scene2: Option<SceneSection>,
    pub process: Option<ProcessSection>,
    #[serde(default)]
    pub tracker: TrackerSection,
    pub lut: Option<LutSection>,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default, rename = "reference")]
    pub references: Vec<ReferenceSection>,
    pub dual: Option<DualSection>,
    pub clinical: Option<ClinicalSection>,
    #[serde(default)]
    pub viz: VizSection,
    #[serde(default, rename = "region_stats")]
    pub stat_regions: Vec<NamedRegion>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    #[serde(default = "default_fps")]
    pub frame_rate_fps: f32,
    pub pixel_size_mm: f64,
    /// Spatial frequency at the sample plane; alternatively derive it from
    /// the fiber geometry below.
    pub fx: Option<f64>,
    pub spacing_um: Option<f64>,
    pub working_distance_mm: Option<f64>,
    pub wavelength_nm: f64,
    #[serde(default = "default_envelope")]
    pub envelope: String,
    #[serde(default = "default_amplitude")]
    pub envelope_amplitude: f64,
    pub envelope_sigma_px: Option<[f64; 2]>,
    #[serde(default)]
    pub phase0_deg: f64,
    #[serde(default)]
    pub drift_std_deg: f64,
    #[serde(default)]
    pub drift_linear_deg: f64,
    #[serde(default)]
    pub dropout_prob: f64,
    #[serde(default = "default_dropout_depth")]
    pub dropout_depth: f64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub speckle_contrast: f64,
    pub mu_a: f64,
    pub mu_s_prime: f64,
    /// Optional second region (right half from `split_col`).
    pub right_mu_a: Option<f64>,
    pub right_mu_s_prime: Option<f64>,
    pub split_col: Option<usize>,
    #[serde(default = "default_bit_depth")]
    pub bit_depth: u8,
    #[serde(default = "default_n")]
    pub refractive_index: f64,
}

fn default_fps() -> f32 {
    10.0
}

fn default_envelope() -> String {
    "flat".into()
}

fn default_amplitude() -> f64 {
    0.85
}

fn default_dropout_depth() -> f64 {
    0.9
}

fn default_bit_depth() -> u8 {
    32
}

fn default_n() -> f64 {
    sfdi_core::optics::DEFAULT_REFRACTIVE_INDEX
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSection {
    pub input: Option<PathBuf>,
    pub fx: Option<f64>,
    pub wavelength_nm: Option<f64>,
    /// Channel to analyse when the input has several.
    pub channel: Option<usize>,
    /// Frame rate for frame-directory inputs that carry none.
    #[serde(default = "default_fps")]
    pub frame_rate_fps: f32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerSection {
    #[serde(default = "default_tol")]
    pub phase_tol_deg: f64,
    #[serde(default = "default_floor")]
    pub contrast_floor: f64,
    #[serde(default = "default_row_band")]
    pub row_band_half: usize,
    #[serde(default = "default_window")]
    pub smooth_window_px: usize,
    #[serde(default = "default_zeroth_window")]
    pub zeroth_window_s: f64,
}

fn default_tol() -> f64 {
    10.0
}

fn default_floor() -> f64 {
    0.7
}

fn default_row_band() -> usize {
    5
}

fn default_window() -> usize {
    5
}

fn default_zeroth_window() -> f64 {
    1.0
}

impl Default for TrackerSection {
    fn default() -> Self {
        Self {
            phase_tol_deg: default_tol(),
            contrast_floor: default_floor(),
            row_band_half: default_row_band(),
            smooth_window_px: default_window(),
            zeroth_window_s: default_zeroth_window(),
        }
    }
}

impl TrackerSection {
    pub fn to_core(&self) -> TrackerConfig {
        TrackerConfig {
            phase_tolerance_deg: self.phase_tol_deg,
            contrast_floor: self.contrast_floor,
            row_band_half_width: self.row_band_half,
            smoothing_window_px: self.smooth_window_px,
            zeroth_window_s: self.zeroth_window_s,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LutSection {
    /// Import an existing SFLU table instead of building one.
    pub import: Option<PathBuf>,
    pub fx: Option<f64>,
    #[serde(default = "default_n")]
    pub refractive_index: f64,
    #[serde(default = "default_mu_a_min")]
    pub mu_a_min: f64,
    #[serde(default = "default_mu_a_max")]
    pub mu_a_max: f64,
    #[serde(default = "default_count")]
    pub mu_a_count: usize,
    #[serde(default = "default_log")]
    pub mu_a_spacing: String,
    #[serde(default = "default_mu_s_min")]
    pub mu_s_min: f64,
    #[serde(default = "default_mu_s_max")]
    pub mu_s_max: f64,
    #[serde(default = "default_count")]
    pub mu_s_count: usize,
    #[serde(default = "default_linear")]
    pub mu_s_spacing: String,
    /// Also write a CSV dump in lut mode.
    #[serde(default)]
    pub csv_dump: bool,
}

fn default_mu_a_min() -> f64 {
    0.001
}

fn default_mu_a_max() -> f64 {
    0.1
}

fn default_mu_s_min() -> f64 {
    0.1
}

fn default_mu_s_max() -> f64 {
    3.0
}

fn default_count() -> usize {
    128
}

fn default_log() -> String {
    "log".into()
}

fn default_linear() -> String {
    "linear".into()
}

impl Default for LutSection {
    fn default() -> Self {
        Self {
            import: None,
            fx: None,
            refractive_index: default_n(),
            mu_a_min: default_mu_a_min(),
            mu_a_max: default_mu_a_max(),
            mu_a_count: default_count(),
            mu_a_spacing: default_log(),
            mu_s_min: default_mu_s_min(),
            mu_s_max: default_mu_s_max(),
            mu_s_count: default_count(),
            mu_s_spacing: default_linear(),
            csv_dump: false,
        }
    }
}

fn parse_spacing(s: &str) -> Result<GridSpacing> {
    match s {
        "linear" => Ok(GridSpacing::Linear),
        "log" => Ok(GridSpacing::Log),
        other => bail!("unknown grid spacing '{other}' (linear|log)"),
    }
}

impl LutSection {
    pub fn axes(&self) -> Result<(GridAxis, GridAxis)> {
        Ok((
            GridAxis {
                min: self.mu_a_min,
                max: self.mu_a_max,
                count: self.mu_a_count,
                spacing: parse_spacing(&self.mu_a_spacing)?,
            },
            GridAxis {
                min: self.mu_s_min,
                max: self.mu_s_max,
                count: self.mu_s_count,
                spacing: parse_spacing(&self.mu_s_spacing)?,
            },
        ))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    #[serde(default = "default_sigma")]
    pub sigma_px: f64,
    #[serde(default = "default_eps")]
    pub eps_frac: f64,
    /// Analysis region [x, y, width, height]; defaults to the centred 60%.
    pub region: Option<[usize; 4]>,
}

fn default_sigma() -> f64 {
    5.0
}

fn default_eps() -> f64 {
    1e-6
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self { sigma_px: default_sigma(), eps_frac: default_eps(), region: None }
    }
}

impl PipelineSection {
    pub fn region(&self) -> Option<AnalysisRegion> {
        self.region.map(|[x, y, width, height]| AnalysisRegion { x, y, width, height })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub id: String,
    pub stack: PathBuf,
    pub mu_a: f64,
    pub mu_s_prime: f64,
    pub wavelength_nm: f64,
    #[serde(default = "default_fps")]
    pub frame_rate_fps: f32,
    /// Optional multiplicative wavelength adjustment applied to the known
    /// properties before calibration.
    pub adjust_to_nm: Option<f64>,
    #[serde(default)]
    pub adjust_mu_a_fraction: f64,
    #[serde(default)]
    pub adjust_mu_s_fraction: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualSection {
    pub input: Option<PathBuf>,
    pub red: DualChannelSection,
    pub green: DualChannelSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualChannelSection {
    #[serde(default)]
    pub channel: Option<usize>,
    pub fx: f64,
    pub wavelength_nm: f64,
    /// Reference ids from the top-level `[[reference]]` list.
    pub references: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClinicalSection {
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_train")]
    pub n_validation: usize,
    pub healthy: String,
    #[serde(default)]
    pub rel_err_mu_a: f64,
    #[serde(default)]
    pub rel_err_mu_s: f64,
    #[serde(rename = "class")]
    pub classes: Vec<ClassSection>,
}

fn default_n_train() -> usize {
    500
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSection {
    pub name: String,
    pub mean_mu_a: f64,
    pub std_mu_a: f64,
    pub mean_mu_s: f64,
    pub std_mu_s: f64,
    pub wavelength_nm: f64,
}

impl ClassSection {
    pub fn to_core(&self) -> TissueClassStats {
        TissueClassStats {
            name: self.name.clone(),
            mean_mu_a: self.mean_mu_a,
            std_mu_a: self.std_mu_a,
            mean_mu_s: self.mean_mu_s,
            std_mu_s: self.std_mu_s,
            wavelength_nm: self.wavelength_nm,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct VizSection {
    pub mu_a_min: Option<f64>,
    pub mu_a_max: Option<f64>,
    pub mu_s_min: Option<f64>,
    pub mu_s_max: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedRegion {
    pub name: String,
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Command-line flags; every one of them overrides the config file.
#[derive(Debug, Clone, clap::Parser)]
#[command(
    name = "sfdi",
    about = "Spatial frequency domain imaging toolkit: fringe simulation, phase-tracked demodulation, optical-property mapping, and clinical performance extrapolation",
    version
)]
pub struct Cli {
    /// Run mode: simulate | process | dual | lut | clinical.
    #[arg(long)]
    pub mode: Option<String>,
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input stack (SFST file or directory of PGM/PPM frames).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Spatial frequency at the sample plane, mm^-1.
    #[arg(long)]
    pub fx: Option<f64>,
    /// Illumination wavelength, nm.
    #[arg(long = "wavelength-nm")]
    pub wavelength_nm: Option<f64>,
    /// Fiber-to-sample working distance, mm.
    #[arg(long = "working-distance-mm")]
    pub working_distance_mm: Option<f64>,
    /// Reference capture as `path,mu_a,mu_s_prime[,wavelength_nm]`.
    #[arg(long = "ref")]
    pub reference: Option<String>,
    /// Import a lookup table from an SFLU file.
    #[arg(long)]
    pub lut: Option<PathBuf>,
    /// Gaussian smoothing sigma in pixels [default: 5].
    #[arg(long = "sigma-px")]
    pub sigma_px: Option<f64>,
    /// Phase acceptance tolerance around 120/240 degrees [default: 10].
    #[arg(long = "phase-tol-deg")]
    pub phase_tol_deg: Option<f64>,
    /// Contrast floor as a fraction of the zeroth frame's contrast
    /// [default: 0.7].
    #[arg(long = "contrast-floor")]
    pub contrast_floor: Option<f64>,
}

/// Fully merged configuration: file plus flag overrides.
#[derive(Debug, Clone)]
pub struct Merged {
    pub mode: Mode,
    pub out: PathBuf,
    pub seed: u64,
    pub file: FileConfig,
    pub cli: Cli,
}

pub fn load(cli: Cli) -> Result<Merged> {
    let mut file: FileConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("config {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    // flags win over the file
    if let Some(v) = cli.sigma_px {
        file.pipeline.sigma_px = v;
    }
    if let Some(v) = cli.phase_tol_deg {
        file.tracker.phase_tol_deg = v;
    }
    if let Some(v) = cli.contrast_floor {
        file.tracker.contrast_floor = v;
    }

    let mode: Mode = cli
        .mode
        .clone()
        .or_else(|| file.run.mode.clone())
        .ok_or_else(|| anyhow::anyhow!("no mode given (--mode or [run].mode)"))?
        .parse()?;
    let out = cli
        .out
        .clone()
        .or_else(|| file.run.out.clone())
        .ok_or_else(|| anyhow::anyhow!("no output directory given (--out or [run].out)"))?;
    let seed = cli.seed.or(file.run.seed).unwrap_or(0);

    Ok(Merged { mode, out, seed, file, cli })
}

impl Merged {
    /// Spatial frequency for single-channel work: the --fx flag, then the
    /// mode section, then fiber geometry.
    pub fn resolve_fx(&self, section_fx: Option<f64>, scene: Option<&SceneSection>) -> Result<SpatialFrequency> {
        if let Some(v) = self.cli.fx.or(section_fx) {
            return SpatialFrequency::new(v).map_err(Into::into);
        }
        if let Some(s) = scene {
            if let Some(v) = s.fx {
                return SpatialFrequency::new(v).map_err(Into::into);
            }
            let (Some(d), Some(wd)) = (s.spacing_um, s.working_distance_mm.or(self.cli.working_distance_mm)) else {
                bail!("no spatial frequency: give fx, or spacing_um + working_distance_mm");
            };
            let pair = sfdi_core::projector::FiberPair::new(d, s.wavelength_nm, wd)?;
            return Ok(pair.spatial_frequency());
        }
        bail!("no spatial frequency given (--fx or config)");
    }

    pub fn reference_sections(&self) -> Result<Vec<ReferenceSection>> {
        let mut refs = self.file.references.clone();
        if let Some(spec) = &self.cli.reference {
            refs.push(parse_reference_flag(spec)?);
        }
        Ok(refs)
    }
}

fn parse_reference_flag(spec: &str) -> Result<ReferenceSection> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() < 3 || parts.len() > 4 {
        bail!("--ref expects path,mu_a,mu_s_prime[,wavelength_nm], got '{spec}'");
    }
    let wavelength_nm = if parts.len() == 4 { parts[3].parse()? } else { 660.0 };
    Ok(ReferenceSection {
        id: Path::new(parts[0])
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "ref".into()),
        stack: PathBuf::from(parts[0]),
        mu_a: parts[1].parse().context("--ref mu_a")?,
        mu_s_prime: parts[2].parse().context("--ref mu_s_prime")?,
        wavelength_nm,
        frame_rate_fps: 10.0,
        adjust_to_nm: None,
        adjust_mu_a_fraction: 0.0,
        adjust_mu_s_fraction: 0.0,
    })
}
