//! Frame ingest: binary PPM sequences and raw RGB24 dumps, plus sliding-window
//! clip addressing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a binary PPM (P6) file")]
    NotPpm { path: PathBuf },
    #[error("{path}: malformed PPM header")]
    BadHeader { path: PathBuf },
    #[error("{path}: unsupported maxval {maxval} (only 255 is accepted)")]
    UnsupportedMaxval { path: PathBuf, maxval: u32 },
    #[error("{path}: truncated pixel data (expected {expected} bytes, found {found})")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("missing sidecar {0}")]
    MissingSidecar(PathBuf),
    #[error("bad sidecar {path}: {message}")]
    BadSidecar { path: PathBuf, message: String },
    #[error("inconsistent frame dimensions: {first:?} vs {other:?} in {path}")]
    InconsistentDimensions {
        path: PathBuf,
        first: (usize, usize),
        other: (usize, usize),
    },
    #[error("no frames found in {0}")]
    Empty(PathBuf),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MediaError + '_ {
    move |source| MediaError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One RGB frame, row-major and channel-interleaved, samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Frame {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self, MediaError> {
        if height == 0 || width == 0 {
            return Err(MediaError::InvalidFrame("zero-sized frame".into()));
        }
        if data.len() != height * width * Self::CHANNELS {
            return Err(MediaError::InvalidFrame(format!(
                "expected {} samples for {height}x{width}, got {}",
                height * width * Self::CHANNELS,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MediaError::InvalidFrame(format!(
                "sample {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds a frame from 8-bit interleaved RGB samples.
    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self, MediaError> {
        let data = bytes.iter().map(|&b| f32::from(b) / 255.0).collect();
        Self::new(height, width, data)
    }

    /// Constant-color frame.
    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self, MediaError> {
        let data = std::iter::repeat_n(rgb, height * width).flatten().collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * Self::CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Quantizes back to 8-bit samples.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Rotates the frame 90 degrees clockwise.
    pub fn rotated_cw(&self) -> Frame {
        let (h, w) = (self.height, self.width);
        let mut data = Vec::with_capacity(self.data.len());
        // output is w rows by h columns; out(y, x) = in(h - 1 - x, y)
        for y in 0..w {
            for x in 0..h {
                data.extend_from_slice(&self.pixel(h - 1 - x, y));
            }
        }
        Frame {
            height: w,
            width: h,
            data,
        }
    }
}

/// Position of one clip inside a longer frame sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipSpec {
    pub source_video_id: String,
    pub start_frame: usize,
    pub frame_count: usize,
    pub frame_stride: usize,
}

impl ClipSpec {
    /// Absolute frame indices addressed by this clip.
    pub fn frame_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.frame_count).map(move |k| self.start_frame + k * self.frame_stride)
    }

    pub fn last_frame(&self) -> usize {
        self.start_frame + (self.frame_count - 1) * self.frame_stride
    }

    /// Gathers the clip's frames from the full video.
    pub fn gather<'a>(&self, frames: &'a [Frame]) -> Vec<&'a Frame> {
        self.frame_indices().map(|i| &frames[i]).collect()
    }
}

/// Lists every sliding-window clip start `0, clip_stride, 2*clip_stride, ...`
/// whose last addressed frame still lies inside the video.
pub fn enumerate_clips(
    total_frames: usize,
    window: usize,
    frame_stride: usize,
    clip_stride: usize,
) -> Vec<usize> {
    assert!(
        window >= 1 && frame_stride >= 1 && clip_stride >= 1,
        "clip parameters must be >= 1"
    );
    let span = (window - 1) * frame_stride;
    (0..)
        .map(|k| k * clip_stride)
        .take_while(|start| start + span < total_frames)
        .collect()
}

/// Same as [`enumerate_clips`] but returns full clip descriptors.
pub fn clip_specs(
    video_id: &str,
    total_frames: usize,
    window: usize,
    frame_stride: usize,
    clip_stride: usize,
) -> Vec<ClipSpec> {
    enumerate_clips(total_frames, window, frame_stride, clip_stride)
        .into_iter()
        .map(|start_frame| ClipSpec {
            source_video_id: video_id.to_string(),
            start_frame,
            frame_count: window,
            frame_stride,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameFormat {
    Ppm,
    RawRgb,
}

impl FromStr for FrameFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ppm" => Ok(Self::Ppm),
            "raw_rgb" => Ok(Self::RawRgb),
            other => Err(format!("unknown frame format '{other}' (ppm, raw_rgb)")),
        }
    }
}

/// Dimensions sidecar for raw RGB24 dumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
}

/// Sidecar path for a raw dump: same location, `.json` extension.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

/// Loads a frame sequence.
///
/// For [`FrameFormat::Ppm`] `path` is a directory of `.ppm` files read in
/// lexicographic filename order. For [`FrameFormat::RawRgb`] `path` is the raw
/// dump itself, with its dimensions in the `.json` sidecar next to it.
pub fn load_frame_sequence(path: &Path, format: FrameFormat) -> Result<Vec<Frame>, MediaError> {
    match format {
        FrameFormat::Ppm => load_ppm_dir(path),
        FrameFormat::RawRgb => load_raw_rgb(path),
    }
}

/// Video identifier used in clip and output names.
pub fn video_id(path: &Path, format: FrameFormat) -> String {
    let name = match format {
        FrameFormat::Ppm => path.file_name(),
        FrameFormat::RawRgb => path.file_stem(),
    };
    name.map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".to_string())
}

fn load_ppm_dir(dir: &Path) -> Result<Vec<Frame>, MediaError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "ppm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(MediaError::Empty(dir.to_path_buf()));
    }
    let frames = files
        .par_iter()
        .map(|p| read_ppm(p))
        .collect::<Result<Vec<_>, _>>()?;
    let first = (frames[0].height, frames[0].width);
    for (f, p) in frames.iter().zip(&files) {
        if (f.height, f.width) != first {
            return Err(MediaError::InconsistentDimensions {
                path: p.clone(),
                first,
                other: (f.height, f.width),
            });
        }
    }
    Ok(frames)
}

fn load_raw_rgb(path: &Path) -> Result<Vec<Frame>, MediaError> {
    let sidecar = sidecar_path(path);
    if !sidecar.is_file() {
        return Err(MediaError::MissingSidecar(sidecar));
    }
    let text = fs::read_to_string(&sidecar).map_err(io_err(&sidecar))?;
    let dims: RawSidecar =
        serde_json::from_str(&text).map_err(|e| MediaError::BadSidecar {
            path: sidecar.clone(),
            message: e.to_string(),
        })?;
    if dims.height == 0 || dims.width == 0 || dims.frames == 0 {
        return Err(MediaError::BadSidecar {
            path: sidecar,
            message: "dimensions must be positive".into(),
        });
    }
    let bytes = fs::read(path).map_err(io_err(path))?;
    let frame_len = dims.height * dims.width * 3;
    let expected = frame_len * dims.frames;
    if bytes.len() != expected {
        return Err(MediaError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    bytes
        .chunks_exact(frame_len)
        .map(|chunk| Frame::from_rgb8(dims.height, dims.width, chunk))
        .collect()
}

/// Writes frames as a raw RGB24 dump plus its sidecar.
pub fn write_raw_rgb(path: &Path, frames: &[Frame]) -> Result<(), MediaError> {
    let first = frames.first().ok_or_else(|| MediaError::Empty(path.to_path_buf()))?;
    let dims = RawSidecar {
        height: first.height,
        width: first.width,
        frames: frames.len(),
    };
    let mut bytes = Vec::with_capacity(dims.height * dims.width * 3 * dims.frames);
    for f in frames {
        if (f.height, f.width) != (dims.height, dims.width) {
            return Err(MediaError::InconsistentDimensions {
                path: path.to_path_buf(),
                first: (dims.height, dims.width),
                other: (f.height, f.width),
            });
        }
        bytes.extend(f.to_rgb8());
    }
    fs::write(path, bytes).map_err(io_err(path))?;
    let sidecar = sidecar_path(path);
    let json = serde_json::to_string(&dims).expect("sidecar serializes");
    fs::write(&sidecar, json).map_err(io_err(&sidecar))
}

/// Writes each frame as `frame_00000.ppm`, `frame_00001.ppm`, ...
pub fn write_ppm_dir(dir: &Path, frames: &[Frame]) -> Result<(), MediaError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, f) in frames.iter().enumerate() {
        let p = dir.join(format!("frame_{i:05}.ppm"));
        fs::write(&p, encode_ppm(f)).map_err(io_err(&p))?;
    }
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<Frame, MediaError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_ppm(&bytes, path)
}

/// Canonical P6 encoding: `P6\n<w> <h>\n255\n` followed by raw samples.
pub fn encode_ppm(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::with_capacity(frame.data.len() + 20);
    write!(out, "P6\n{} {}\n255\n", frame.width, frame.height).expect("write to vec");
    out.extend(frame.to_rgb8());
    out
}

/// Decodes a binary P6 PPM with maxval 255. `origin` is only used in errors.
pub fn decode_ppm(bytes: &[u8], origin: &Path) -> Result<Frame, MediaError> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(MediaError::NotPpm {
            path: origin.to_path_buf(),
        });
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        *field = next_header_number(bytes, &mut pos).ok_or_else(|| MediaError::BadHeader {
            path: origin.to_path_buf(),
        })?;
    }
    let [width, height, maxval] = fields;
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(MediaError::BadHeader {
            path: origin.to_path_buf(),
        });
    }
    pos += 1;
    if maxval != 255 {
        return Err(MediaError::UnsupportedMaxval {
            path: origin.to_path_buf(),
            maxval,
        });
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width * height * 3;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(MediaError::Truncated {
            path: origin.to_path_buf(),
            expected,
            found: raster.len(),
        });
    }
    Frame::from_rgb8(height, width, &raster[..expected])
}

fn next_header_number(bytes: &[u8], pos: &mut usize) -> Option<u32> {
    loop {
        match bytes.get(*pos)? {
            b'#' => {
                while *bytes.get(*pos)? != b'\n' {
                    *pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok()?.parse().ok()
}
