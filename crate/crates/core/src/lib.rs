//! Computational toolkit for an ultra-miniature spatial frequency domain
//! imaging (SFDI) system.
//!
//! The crate covers the full chain from illumination to tissue classification:
//!
//! 1. **optics** – diffusion-approximation forward model of spatially
//!    modulated diffuse reflectance, and lookup-table construction/inversion.
//! 2. **projector** – fiber-pair interference geometry (spacing ↔ spatial
//!    frequency) and a synthetic drifting-fringe video renderer that doubles
//!    as the pipeline's ground-truth oracle.
//! 3. **demod** – phase-tracking frame selection from a drifting-fringe stack
//!    and three-phase AC/DC demodulation.
//! 4. **pipeline** – reference calibration, per-pixel property inversion,
//!    multi-map averaging, mask-aware smoothing, and dual-wavelength runs.
//! 5. **clinical** – log-normal tissue sampling, linear SVM classifiers,
//!    sensitivity/specificity reports against screening thresholds, and the
//!    Poisson usable-frame timing estimator.
//! 6. **io** – codec-free binary formats (SFST stacks, SFLU tables, SFPM
//!    maps) plus PGM/PPM frame-directory ingestion.

pub mod clinical;
pub mod demod;
pub mod error;
pub mod io;
pub mod optics;
pub mod pipeline;
pub mod projector;
pub mod stack;

pub use error::{Error, Result};
pub use optics::{DiffuseReflectancePair, DiffusionLut, OpticalProperties, SpatialFrequency};
pub use stack::{BitDepth, FrameStack};
