//! Frame and sequence files.
//!
//! Frames are stored twice: as little-endian PFM with linear RGB floats for
//! metric work and as 8-bit sRGB PNG for viewing. Readers prefer the PFM.
//!
//! sRGB transfer (IEC 61966-2-1), applied per channel:
//!
//! ```text
//! encode(l) = 12.92·l                     if l ≤ 0.0031308
//!             1.055·l^(1/2.4) − 0.055     otherwise
//! decode(s) = s/12.92                     if s ≤ 0.04045
//!             ((s + 0.055)/1.055)^2.4     otherwise
//! byte = round(255·encode(clamp(l, 0, 1)))
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use f2f_core::energy::LandmarkObservation;
use f2f_core::imaging::{CameraIntrinsics, Frame, Illumination, PoseRecord};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub fn srgb_encode(l: f64) -> f64 {
    if l <= 0.0031308 {
        12.92 * l
    } else {
        1.055 * l.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_decode(s: f64) -> f64 {
    if s <= 0.04045 {
        s / 12.92
    } else {
        ((s + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_byte(l: f64) -> u8 {
    (255.0 * srgb_encode(l.clamp(0.0, 1.0))).round() as u8
}

pub fn write_png(path: &Path, frame: &Frame) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), frame.width as u32, frame.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_source_srgb(png::SrgbRenderingIntent::Perceptual);
    let bytes: Vec<u8> = frame.rgb.iter().map(|&v| linear_to_byte(v)).collect();
    let mut w = enc.write_header().map_err(|e| Error::format(path, e))?;
    w.write_image_data(&bytes).map_err(|e| Error::format(path, e))?;
    w.finish().map_err(|e| Error::format(path, e))?;
    Ok(())
}

/// Reads an 8-bit RGB or RGBA PNG into linear RGB.
pub fn read_png(path: &Path) -> Result<Frame> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let dec = png::Decoder::new(BufReader::new(file));
    let mut reader = dec.read_info().map_err(|e| Error::format(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(path, "only 8-bit PNG frames are supported"));
    }
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => return Err(Error::format(path, format!("unsupported color type {other:?}"))),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut rgb = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        let row = &buf[y * info.line_size..];
        for x in 0..w {
            for c in 0..3 {
                rgb.push(srgb_decode(row[x * channels + c] as f64 / 255.0));
            }
        }
    }
    Ok(Frame::from_rgb(w, h, rgb))
}

/// Little-endian color PFM, rows stored bottom to top.
pub fn write_pfm(path: &Path, frame: &Frame) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = Vec::with_capacity(12 * frame.pixel_count());
    for y in (0..frame.height).rev() {
        for x in 0..frame.width {
            for v in frame.get(x, y) {
                body.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    write!(w, "PF\n{} {}\n-1.0\n", frame.width, frame.height)
        .and_then(|_| w.write_all(&body))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cursor = &bytes[..];
    let mut header = Vec::new();
    for _ in 0..3 {
        let mut line = String::new();
        cursor.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        header.push(line.trim().to_string());
    }
    if header[0] != "PF" {
        return Err(Error::format(path, "not a color PFM"));
    }
    let dims: Vec<usize> = header[1].split_whitespace().filter_map(|s| s.parse().ok()).collect();
    let scale: f64 = header[2].parse().map_err(|_| Error::format(path, "bad PFM scale"))?;
    let [w, h] = dims[..] else {
        return Err(Error::format(path, "bad PFM dimensions"));
    };
    let mut body = Vec::new();
    cursor.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
    if body.len() != 12 * w * h {
        return Err(Error::format(path, "PFM body has the wrong length"));
    }
    let value = |i: usize| {
        let b = [body[4 * i], body[4 * i + 1], body[4 * i + 2], body[4 * i + 3]];
        if scale < 0.0 {
            f32::from_le_bytes(b) as f64
        } else {
            f32::from_be_bytes(b) as f64
        }
    };
    let mut frame = Frame::new(w, h);
    for row in 0..h {
        let y = h - 1 - row;
        for x in 0..w {
            let i = 3 * (row * w + x);
            frame.set(x, y, [value(i), value(i + 1), value(i + 2)]);
        }
    }
    Ok(frame)
}

/// Identity, albedo and camera of a synthetic subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectTruth {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub camera: CameraIntrinsics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceInfo {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Present for synthetic sequences.
    pub subject: Option<SubjectTruth>,
}

/// Per-frame ground truth of a synthetic sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub frame: usize,
    pub delta: Vec<f64>,
    pub pose: PoseRecord,
    pub gamma: Illumination,
    /// Exact projections of every landmark vertex.
    pub landmarks: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkRecord {
    pub frame: usize,
    pub landmarks: Vec<LandmarkObservation>,
}

/// A frame directory with its sidecars:
///
/// ```text
/// sequence.json        SequenceInfo
/// frames/000000.pfm    linear RGB
/// frames/000000.png    sRGB preview
/// landmarks.jsonl      one LandmarkRecord per frame
/// ground_truth.jsonl   one GroundTruthRecord per frame (synthetic only)
/// ```
#[derive(Clone, Debug)]
pub struct SequenceDir {
    pub root: PathBuf,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out += &serde_json::to_string(item).map_err(|e| Error::format(path, e))?;
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

impl SequenceDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn info_path(&self) -> PathBuf {
        self.root.join("sequence.json")
    }

    pub fn frame_path(&self, i: usize, ext: &str) -> PathBuf {
        self.root.join("frames").join(format!("{i:06}.{ext}"))
    }

    pub fn landmarks_path(&self) -> PathBuf {
        self.root.join("landmarks.jsonl")
    }

    pub fn ground_truth_path(&self) -> PathBuf {
        self.root.join("ground_truth.jsonl")
    }

    pub fn info(&self) -> Result<SequenceInfo> {
        let path = self.info_path();
        if !path.exists() {
            return Err(Error::MissingArtifact {
                what: "sequence",
                path,
                stage: "synth",
            });
        }
        read_json(&path)
    }

    pub fn write_frame(&self, i: usize, frame: &Frame) -> Result<()> {
        create_dir(&self.root.join("frames"))?;
        write_pfm(&self.frame_path(i, "pfm"), frame)?;
        write_png(&self.frame_path(i, "png"), frame)
    }

    pub fn read_frame(&self, i: usize) -> Result<Frame> {
        let pfm = self.frame_path(i, "pfm");
        if pfm.exists() {
            read_pfm(&pfm)
        } else {
            read_png(&self.frame_path(i, "png"))
        }
    }

    /// The first `limit` frames (all when `None`).
    pub fn read_frames(&self, limit: Option<usize>) -> Result<Vec<Frame>> {
        let info = self.info()?;
        let n = limit.map_or(info.frames, |l| l.min(info.frames));
        (0..n).map(|i| self.read_frame(i)).collect()
    }

    /// Landmarks per frame, in frame order.
    pub fn read_landmarks(&self, frames: usize) -> Result<Vec<Vec<LandmarkObservation>>> {
        let path = self.landmarks_path();
        let records: Vec<LandmarkRecord> = read_jsonl(&path)?;
        let mut out = vec![Vec::new(); frames];
        for r in records {
            if r.frame < frames {
                out[r.frame] = r.landmarks;
            }
        }
        Ok(out)
    }

    pub fn read_ground_truth(&self) -> Result<Option<Vec<GroundTruthRecord>>> {
        let path = self.ground_truth_path();
        if path.exists() {
            read_jsonl(&path).map(Some)
        } else {
            Ok(None)
        }
    }
}
