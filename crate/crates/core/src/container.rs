//! Video container I/O.
//!
//! `.vmb` layout (little-endian):
//!
//! ```text
//! "VMB1"  u32 F  u32 H  u32 W  u32 C  then F*H*W*C f32 pixels,
//! frame-major, row-major, channel-interleaved
//! ```
//!
//! A directory of numerically named 8-bit PNG frames is also accepted on
//! import, and can be written on export.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::video::{Frame, FrameShape, Video};

pub const MAGIC: &[u8; 4] = b"VMB1";
const HEADER_LEN: usize = 20;
/// Refuse payloads above 4 GiB of pixels.
const MAX_VALUES: u64 = 1 << 30;

/// Serialises a video to the `.vmb` byte layout.
pub fn encode_vmb(video: &Video) -> Vec<u8> {
    let shape = video.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * video.len());
    out.extend_from_slice(MAGIC);
    for v in [
        video.num_frames(),
        shape.height,
        shape.width,
        shape.channels,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for frame in video.frames() {
        for &p in frame.data() {
            out.extend_from_slice(&(p as f32).to_le_bytes());
        }
    }
    out
}

/// Parses the `.vmb` byte layout.
pub fn decode_vmb(bytes: &[u8]) -> Result<Video> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"VMB1\"",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let field = |i: usize| {
        let off = 4 + 4 * i;
        u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4-byte slice")) as u64
    };
    let (f, h, w, c) = (field(0), field(1), field(2), field(3));
    let count = f
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(c))
        .filter(|&v| v <= MAX_VALUES)
        .ok_or_else(|| Error::Format(format!("dimensions {f}x{h}x{w}x{c} overflow")))?;
    if f == 0 {
        return Err(Error::Format("container holds zero frames".into()));
    }
    let shape = FrameShape::new(h as usize, w as usize, c as usize)
        .map_err(|e| Error::Format(e.to_string()))?;
    let expected = HEADER_LEN as u64 + 4 * count;
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len() as u64,
        });
    }
    if (bytes.len() as u64) > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() as u64 - expected
        )));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4-byte chunk"))))
        .collect();
    let frames = values
        .chunks_exact(shape.len())
        .map(|chunk| Frame::new(shape, chunk.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Video::new(frames).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_vmb(video: &Video, path: &Path) -> Result<()> {
    write_atomic(path, &encode_vmb(video))
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::param(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let written = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|()| f.sync_all()))
        .and_then(|()| fs::rename(&tmp, path));
    if let Err(e) = written {
        let _ = fs::remove_file(&tmp);
        return Err(Error::at_path(path, e));
    }
    Ok(())
}

pub fn read_vmb(path: &Path) -> Result<Video> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::at_path(path, e))?;
    decode_vmb(&bytes)
}

/// Reads either a `.vmb` file or a directory of PNG frames.
pub fn read_container(path: &Path) -> Result<Video> {
    if path.is_dir() {
        read_png_dir(path)
    } else {
        read_vmb(path)
    }
}

/// Writes a `.vmb` file, or a PNG directory when `path` has no `.vmb` extension
/// and either exists as a directory or ends with a separator.
pub fn write_container(video: &Video, path: &Path) -> Result<()> {
    if is_png_target(path) {
        write_png_dir(video, path)
    } else {
        write_vmb(video, path)
    }
}

pub fn is_png_target(path: &Path) -> bool {
    let has_vmb_ext = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("vmb"));
    !has_vmb_ext && (path.is_dir() || path.to_string_lossy().ends_with('/'))
}

/// Loads numerically named PNG frames (`0.png`, `1.png`, `0007.png`, ...)
/// in numeric order, converting 8-bit samples to `[0, 1]`.
pub fn read_png_dir(dir: &Path) -> Result<Video> {
    let mut entries: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::at_path(dir, e))? {
        let path = entry.map_err(|e| Error::at_path(dir, e))?.path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        let index = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok());
        if let (true, Some(i)) = (is_png, index) {
            entries.push((i, path));
        }
    }
    if entries.is_empty() {
        return Err(Error::Format(format!(
            "{} contains no numerically named PNG frames",
            dir.display()
        )));
    }
    entries.sort();
    let frames = entries
        .iter()
        .map(|(_, p)| read_png_frame(p))
        .collect::<Result<Vec<_>>>()?;
    Video::new(frames)
}

fn read_png_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = if img.color().has_color() {
        (3, img.to_rgb8().into_raw())
    } else {
        (1, img.to_luma8().into_raw())
    };
    from_raw_u8(FrameShape::new(h, w, channels)?, &raw)
}

/// Writes frames as `00000.png`, `00001.png`, ... quantised to 8 bits.
pub fn write_png_dir(video: &Video, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::at_path(dir, e))?;
    let shape = video.shape();
    for (i, frame) in video.frames().iter().enumerate() {
        let raw = to_raw_u8(frame);
        let path = dir.join(format!("{i:05}.png"));
        let (w, h) = (shape.width as u32, shape.height as u32);
        if shape.channels == 3 {
            image::RgbImage::from_raw(w, h, raw)
                .expect("buffer matches frame shape")
                .save(&path)?;
        } else {
            image::GrayImage::from_raw(w, h, raw)
                .expect("buffer matches frame shape")
                .save(&path)?;
        }
    }
    Ok(())
}

/// Quantises a frame to interleaved 8-bit samples.
pub fn to_raw_u8(frame: &Frame) -> Vec<u8> {
    frame
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

pub fn from_raw_u8(shape: FrameShape, raw: &[u8]) -> Result<Frame> {
    Frame::new(shape, raw.iter().map(|&b| f64::from(b) / 255.0).collect())
}
