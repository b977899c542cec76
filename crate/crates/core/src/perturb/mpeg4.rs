//! Round trip through an external video encoder.
//!
//! The encoder is a shell command template. Before running it the tokens
//! `{input}`, `{output}`, `{Q}`, `{qscale}`, `{width}`, `{height}`,
//! `{frames}` and `{pix_fmt}` are substituted. `{Q}` is the quality in
//! `[1, 100]` (higher is better); `{qscale}` maps it onto the ffmpeg
//! quantiser scale `31..=1` (lower is better). `{input}` holds raw interleaved 8-bit frames
//! (`rgb24` or `gray`) and the command must leave raw frames of the same
//! format and size in `{output}`. For example, with ffmpeg:
//!
//! ```text
//! ffmpeg -y -f rawvideo -pix_fmt {pix_fmt} -s {width}x{height} -i {input} \
//!   -c:v mpeg4 -q:v {qscale} -f avi - | ffmpeg -y -i - -f rawvideo -pix_fmt {pix_fmt} {output}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::Video;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderCommand {
    pub template: String,
}

impl EncoderCommand {
    pub fn new(template: impl Into<String>) -> Self {
        Self {
            template: template.into(),
        }
    }

    /// Substitutes the template tokens.
    pub fn render(&self, input: &str, output: &str, quality: f64, video: &Video) -> String {
        let shape = video.shape();
        let pix_fmt = if shape.channels == 3 { "rgb24" } else { "gray" };
        self.template
            .replace("{input}", input)
            .replace("{output}", output)
            .replace("{Q}", &format!("{}", quality.round() as i64))
            .replace("{qscale}", &qscale(quality).to_string())
            .replace("{width}", &shape.width.to_string())
            .replace("{height}", &shape.height.to_string())
            .replace("{frames}", &video.num_frames().to_string())
            .replace("{pix_fmt}", pix_fmt)
    }
}

/// Quality `Q` in `[1, 100]` to an ffmpeg `-q:v` value: 100 maps to 1, 1 to 31.
pub fn qscale(quality: f64) -> u32 {
    let q = quality.clamp(1.0, 100.0);
    (1.0 + (100.0 - q) * 30.0 / 99.0).round() as u32
}

#[cfg(feature = "mpeg4")]
pub fn mpeg4_external(video: &Video, quality: f64, encoder: Option<&EncoderCommand>) -> Result<Video> {
    use std::process::Command;

    use crate::container::{from_raw_u8, to_raw_u8};

    if !(1.0..=100.0).contains(&quality) {
        return Err(Error::param(format!("MPEG-4 quality must lie in [1, 100], got {quality}")));
    }
    let encoder = encoder.ok_or_else(|| Error::Capability("no MPEG-4 encoder command configured".into()))?;
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("input.raw");
    let output = dir.path().join("output.raw");
    let raw: Vec<u8> = video.frames().iter().flat_map(to_raw_u8).collect();
    std::fs::write(&input, &raw).map_err(|e| Error::at_path(&input, e))?;

    let command = encoder.render(
        &input.to_string_lossy(),
        &output.to_string_lossy(),
        quality,
        video,
    );
    let result = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .output()
        .map_err(|e| Error::Capability(format!("cannot run shell for encoder: {e}")))?;
    match result.status.code() {
        Some(0) => {}
        Some(127) => {
            return Err(Error::Capability(format!(
                "encoder not found: {}",
                String::from_utf8_lossy(&result.stderr).trim()
            )))
        }
        _ => {
            return Err(Error::Encoder(format!(
                "encoder exited with {}: {}",
                result.status,
                String::from_utf8_lossy(&result.stderr).trim()
            )))
        }
    }

    let decoded = std::fs::read(&output).map_err(|e| Error::at_path(&output, e))?;
    let shape = video.shape();
    if decoded.len() != raw.len() {
        return Err(Error::Encoder(format!(
            "decoded stream has {} bytes, expected {} for {} frames of {shape}",
            decoded.len(),
            raw.len(),
            video.num_frames()
        )));
    }
    let frames = decoded
        .chunks_exact(shape.len())
        .map(|chunk| from_raw_u8(shape, chunk))
        .collect::<Result<Vec<_>>>()?;
    Video::new(frames)
}

#[cfg(not(feature = "mpeg4"))]
pub fn mpeg4_external(_video: &Video, _quality: f64, _encoder: Option<&EncoderCommand>) -> Result<Video> {
    Err(Error::Capability(
        "MPEG-4 support requires building with the `mpeg4` feature".into(),
    ))
}
