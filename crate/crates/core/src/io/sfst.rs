//! SFST frame-stack container.
//!
//! Layout (little-endian): magic "SFST", version u16, width u32, height u32,
//! n_frames u32, n_channels u8, bit depth u8, frame rate f32, then pixel
//! data frame-major, row-major, channel-interleaved. Depths 8/12/16 store
//! integer codes (12-bit codes occupy u16); depth 32 stores raw f32.

use super::ByteReader;
use crate::error::{Error, Result};
use crate::stack::{BitDepth, FrameStack};
use ndarray::Array3;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"SFST";
pub const VERSION: u16 = 1;

pub fn to_bytes(stack: &FrameStack) -> Vec<u8> {
    let (w, h, c) = (stack.width(), stack.height(), stack.channels());
    let depth = stack.bit_depth();
    let px_bytes = match depth {
        BitDepth::Eight => 1,
        BitDepth::Twelve | BitDepth::Sixteen => 2,
        BitDepth::Float32 => 4,
    };
    let mut out = Vec::with_capacity(20 + stack.len() * w * h * c * px_bytes);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(stack.len() as u32).to_le_bytes());
    out.push(c as u8);
    out.push(depth.as_u8());
    out.extend_from_slice(&stack.frame_rate_fps().to_le_bytes());
    for frame in stack.frames() {
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let v = frame[[y, x, ch]];
                    match depth {
                        BitDepth::Eight => {
                            out.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
                        }
                        BitDepth::Twelve => {
                            let q = (v * 4095.0).round().clamp(0.0, 4095.0) as u16;
                            out.extend_from_slice(&q.to_le_bytes());
                        }
                        BitDepth::Sixteen => {
                            let q = (v * 65535.0).round().clamp(0.0, 65535.0) as u16;
                            out.extend_from_slice(&q.to_le_bytes());
                        }
                        BitDepth::Float32 => out.extend_from_slice(&v.to_le_bytes()),
                    }
                }
            }
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<FrameStack> {
    let mut r = ByteReader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(r.error(format!("unsupported SFST version {version}")));
    }
    let width = r.u32("width")? as usize;
    let height = r.u32("height")? as usize;
    let n_frames = r.u32("n_frames")? as usize;
    let channels = r.u8("n_channels")? as usize;
    let depth = BitDepth::from_u8(r.u8("bit_depth")?).map_err(|e| r.error(e.to_string()))?;
    let frame_rate = r.f32("frame_rate")?;

    let mut stack = FrameStack::new(width, height, channels, frame_rate, depth)
        .map_err(|e| r.error(e.to_string()))?;
    for _ in 0..n_frames {
        let mut frame = Array3::<f32>::zeros((height, width, channels));
        for y in 0..height {
            for x in 0..width {
                for ch in 0..channels {
                    let v = match depth {
                        BitDepth::Eight => r.u8("pixel")? as f32 / 255.0,
                        BitDepth::Twelve => {
                            let q = r.u16("pixel")?;
                            if q > 4095 {
                                return Err(r.error(format!("12-bit code {q} out of range")));
                            }
                            q as f32 / 4095.0
                        }
                        BitDepth::Sixteen => r.u16("pixel")? as f32 / 65535.0,
                        BitDepth::Float32 => r.f32("pixel")?,
                    };
                    frame[[y, x, ch]] = v;
                }
            }
        }
        stack.push_frame(frame).map_err(|e| r.error(e.to_string()))?;
    }
    r.expect_end()?;
    Ok(stack)
}

pub fn write_file(path: &Path, stack: &FrameStack) -> Result<()> {
    std::fs::write(path, to_bytes(stack))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<FrameStack> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}
