//! Ingestion of a directory of numerically-ordered binary PGM (P5) or PPM
//! (P6) frames into a frame stack. The frame rate is supplied by the caller
//! since the files carry none.

use crate::error::{Error, Result};
use crate::stack::{BitDepth, FrameStack};
use ndarray::Array3;
use std::path::{Path, PathBuf};

struct PnmImage {
    width: usize,
    height: usize,
    channels: usize,
    maxval: u32,
    /// Normalized samples, row-major, channel-interleaved.
    data: Vec<f32>,
}

fn parse_pnm(bytes: &[u8], name: &str) -> Result<PnmImage> {
    let err = |pos: usize, msg: String| Error::Parse { offset: pos as u64, message: format!("{name}: {msg}") };

    let channels = match bytes.get(0..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(err(0, "not a binary PGM/PPM (P5/P6) file".into())),
    };
    let mut pos = 2usize;

    // header tokens: width, height, maxval; '#' comments run to end of line
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(err(pos, "unexpected end of header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if pos == start {
            return Err(err(pos, "expected a decimal header field".into()));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are utf-8");
        *field = text.parse::<u32>().map_err(|e| err(start, format!("bad header field: {e}")))?;
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(err(pos, "missing whitespace before raster".into())),
    }

    let (width, height, maxval) = (fields[0] as usize, fields[1] as usize, fields[2]);
    if width == 0 || height == 0 {
        return Err(err(pos, "zero image dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(err(pos, format!("maxval {maxval} out of range")));
    }
    let wide = maxval > 255;
    let n_samples = width * height * channels;
    let needed = n_samples * if wide { 2 } else { 1 };
    if bytes.len() - pos < needed {
        return Err(err(bytes.len(), format!("raster truncated: need {needed} bytes")));
    }
    let mut data = Vec::with_capacity(n_samples);
    if wide {
        for k in 0..n_samples {
            // PNM wide samples are big-endian
            let hi = bytes[pos + 2 * k] as u32;
            let lo = bytes[pos + 2 * k + 1] as u32;
            data.push(((hi << 8) | lo) as f32 / maxval as f32);
        }
    } else {
        for k in 0..n_samples {
            data.push(bytes[pos + k] as f32 / maxval as f32);
        }
    }
    Ok(PnmImage { width, height, channels, maxval, data })
}

/// Numeric sort key: the first run of digits in the file name, then the
/// name itself.
fn numeric_key(path: &Path) -> (u64, String) {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let digits: String =
        name.chars().skip_while(|c| !c.is_ascii_digit()).take_while(|c| c.is_ascii_digit()).collect();
    (digits.parse().unwrap_or(u64::MAX), name)
}

fn depth_for_maxval(maxval: u32) -> BitDepth {
    match maxval {
        0..=255 => BitDepth::Eight,
        256..=4095 => BitDepth::Twelve,
        _ => BitDepth::Sixteen,
    }
}

/// Read every `.pgm`/`.ppm` file in a directory as one stack, ordered by the
/// number embedded in each file name.
pub fn read_dir(dir: &Path, frame_rate_fps: f32) -> Result<FrameStack> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("pgm") || e.eq_ignore_ascii_case("ppm"))
                .unwrap_or(false)
        })
        .collect();
    if paths.is_empty() {
        return Err(Error::invalid(format!("no PGM/PPM frames in {}", dir.display())));
    }
    paths.sort_by_key(|p| numeric_key(p));

    let mut stack: Option<FrameStack> = None;
    for path in &paths {
        let bytes = std::fs::read(path)?;
        let img = parse_pnm(&bytes, &path.display().to_string())?;
        let target = match &mut stack {
            Some(s) => {
                if (img.width, img.height, img.channels)
                    != (s.width(), s.height(), s.channels())
                {
                    return Err(Error::invalid(format!(
                        "{}: frame dimensions {}x{}x{} differ from first frame {}x{}x{}",
                        path.display(),
                        img.width,
                        img.height,
                        img.channels,
                        s.width(),
                        s.height(),
                        s.channels()
                    )));
                }
                s
            }
            None => {
                stack = Some(FrameStack::new(
                    img.width,
                    img.height,
                    img.channels,
                    frame_rate_fps,
                    depth_for_maxval(img.maxval),
                )?);
                stack.as_mut().unwrap()
            }
        };
        let frame = Array3::from_shape_vec((img.height, img.width, img.channels), img.data)
            .expect("sample count checked");
        target.push_frame(frame)?;
    }
    Ok(stack.expect("at least one frame"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_ppm(path: &Path, w: usize, h: usize, seed: u8) {
        let mut bytes = format!("P6\n# test frame\n{w} {h}\n255\n").into_bytes();
        for k in 0..w * h * 3 {
            bytes.push((k as u8).wrapping_mul(31).wrapping_add(seed));
        }
        std::fs::write(path, bytes).unwrap();
    }

    #[test]
    fn reads_rgb_frame_directory_in_numeric_order() {
        let dir = tempfile::tempdir().unwrap();
        // names chosen so lexical order differs from numeric order
        write_ppm(&dir.path().join("frame_10.ppm"), 4, 3, 30);
        write_ppm(&dir.path().join("frame_2.ppm"), 4, 3, 20);
        write_ppm(&dir.path().join("frame_1.ppm"), 4, 3, 10);
        let stack = read_dir(dir.path(), 10.0).unwrap();
        assert_eq!(stack.len(), 3);
        assert_eq!(stack.channels(), 3);
        assert_eq!(stack.frame(0)[[0, 0, 0]], 10.0 / 255.0);
        assert_eq!(stack.frame(1)[[0, 0, 0]], 20.0 / 255.0);
        assert_eq!(stack.frame(2)[[0, 0, 0]], 30.0 / 255.0);
    }

    #[test]
    fn sixteen_bit_pgm_is_big_endian() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = b"P5\n2 1\n4095\n".to_vec();
        bytes.extend_from_slice(&[0x0F, 0xFF, 0x00, 0x01]); // 4095, 1
        std::fs::write(dir.path().join("f0.pgm"), bytes).unwrap();
        let stack = read_dir(dir.path(), 10.0).unwrap();
        assert_eq!(stack.bit_depth(), BitDepth::Twelve);
        assert!((stack.frame(0)[[0, 0, 0]] - 1.0).abs() < 1e-6);
        assert!((stack.frame(0)[[0, 1, 0]] - 1.0 / 4095.0).abs() < 1e-7);
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_ppm(&dir.path().join("a1.ppm"), 4, 3, 1);
        write_ppm(&dir.path().join("a2.ppm"), 5, 3, 2);
        assert!(read_dir(dir.path(), 10.0).is_err());
    }

    #[test]
    fn truncated_raster_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("f1.pgm"), b"P5\n4 4\n255\nshort").unwrap();
        assert!(matches!(read_dir(dir.path(), 10.0), Err(Error::Parse { .. })));
    }
}
