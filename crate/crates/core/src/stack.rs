//! In-memory frame stacks: time-ordered 2-D intensity frames with 1-3
//! colour channels, normalized to [0, 1] floats.

use crate::error::{Error, Result};
use ndarray::{Array3, ArrayView2};

/// Pixel bit depth of the originating sensor or file. In memory everything
/// is f32; the depth controls (de)quantization at the file boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Twelve,
    Sixteen,
    Float32,
}

impl BitDepth {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            8 => Ok(BitDepth::Eight),
            12 => Ok(BitDepth::Twelve),
            16 => Ok(BitDepth::Sixteen),
            32 => Ok(BitDepth::Float32),
            _ => Err(Error::invalid(format!("unsupported bit depth {v}"))),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Twelve => 12,
            BitDepth::Sixteen => 16,
            BitDepth::Float32 => 32,
        }
    }

    /// Maximum integer code value, for quantized depths.
    pub fn max_code(self) -> Option<u32> {
        match self {
            BitDepth::Eight => Some(255),
            BitDepth::Twelve => Some(4095),
            BitDepth::Sixteen => Some(65535),
            BitDepth::Float32 => None,
        }
    }
}

/// Time-ordered stack of frames, each of shape (height, width, channels).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    width: usize,
    height: usize,
    channels: usize,
    frame_rate_fps: f32,
    bit_depth: BitDepth,
    frames: Vec<Array3<f32>>,
}

impl FrameStack {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        frame_rate_fps: f32,
        bit_depth: BitDepth,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be nonzero"));
        }
        if !(1..=3).contains(&channels) {
            return Err(Error::invalid(format!("channels must be 1-3, got {channels}")));
        }
        if !(frame_rate_fps.is_finite() && frame_rate_fps > 0.0) {
            return Err(Error::invalid(format!("frame rate must be > 0, got {frame_rate_fps}")));
        }
        Ok(Self { width, height, channels, frame_rate_fps, bit_depth, frames: Vec::new() })
    }

    pub fn push_frame(&mut self, frame: Array3<f32>) -> Result<()> {
        if frame.dim() != (self.height, self.width, self.channels) {
            return Err(Error::invalid(format!(
                "frame shape {:?} does not match stack ({}, {}, {})",
                frame.dim(),
                self.height,
                self.width,
                self.channels
            )));
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frame_rate_fps(&self) -> f32 {
        self.frame_rate_fps
    }

    pub fn set_frame_rate_fps(&mut self, fps: f32) -> Result<()> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid(format!("frame rate must be > 0, got {fps}")));
        }
        self.frame_rate_fps = fps;
        Ok(())
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Array3<f32>] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &Array3<f32> {
        &self.frames[t]
    }

    /// View of one channel of one frame, shape (height, width).
    pub fn channel_view(&self, t: usize, channel: usize) -> ArrayView2<'_, f32> {
        self.frames[t].index_axis(ndarray::Axis(2), channel)
    }

    /// Pointwise mean over all frames.
    pub fn mean_frame(&self) -> Result<Array3<f32>> {
        if self.frames.is_empty() {
            return Err(Error::invalid("empty stack has no mean frame"));
        }
        let mut acc = Array3::<f64>::zeros((self.height, self.width, self.channels));
        for f in &self.frames {
            acc.zip_mut_with(f, |a, &v| *a += v as f64);
        }
        let n = self.frames.len() as f64;
        Ok(acc.mapv(|v| (v / n) as f32))
    }

    /// Extract a single channel as a new one-channel stack, preserving
    /// timing metadata.
    pub fn extract_channel(&self, channel: usize) -> Result<FrameStack> {
        if channel >= self.channels {
            return Err(Error::invalid(format!(
                "channel {channel} out of range for {}-channel stack",
                self.channels
            )));
        }
        let mut out = FrameStack::new(self.width, self.height, 1, self.frame_rate_fps, self.bit_depth)?;
        for f in &self.frames {
            let ch = f
                .index_axis(ndarray::Axis(2), channel)
                .to_owned()
                .into_shape_with_order((self.height, self.width, 1))
                .expect("channel reshape");
            out.push_frame(ch)?;
        }
        Ok(out)
    }
}
