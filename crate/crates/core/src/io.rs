//! Plain-text file formats.
//!
//! Detections: `frame,detector_id,x,y,w,h,conf`, one line per detection,
//! frames non-decreasing, detector ids starting at 1. MOT-challenge
//! detection lines (`frame,-1,x,y,w,h,conf,x,y,z`) are read as detector 1.
//! Appearance histograms live in a sidecar file (`<detections>.hist`) with
//! lines `frame,index,b1,...,bB`, where `index` is the 0-based position of
//! the detection among the lines of its frame.
//!
//! Tracks and ground truth: `frame,id,x,y,w,h,visibility`. Ground truth uses
//! visibility 1.
//!
//! Blank lines and lines starting with `#` are ignored. Numbers are written
//! in shortest round-trip form, so writing then reading is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{Error, Result};
use crate::metrics::FrameSet;
use crate::types::{AppearanceHistogram, BoundingBox, Detection};

/// `frames[t - 1]` holds the detections of frame `t`.
pub type DetectionStream = Vec<Vec<Detection>>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub frame: u64,
    pub id: u32,
    pub bbox: BoundingBox,
    pub visibility: f64,
}

pub fn sidecar_path(detections: &Path) -> PathBuf {
    let mut name = detections.as_os_str().to_owned();
    name.push(".hist");
    PathBuf::from(name)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        (!line.is_empty() && !line.starts_with('#')).then(|| (i + 1, line.split(',').map(str::trim).collect()))
    })
}

struct LineCtx<'a> {
    path: &'a Path,
    line: usize,
}

impl LineCtx<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    fn num(&self, field: &str, what: &str) -> Result<f64> {
        field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(format!("bad {what} '{field}'")))
    }

    fn int<T: std::str::FromStr>(&self, field: &str, what: &str) -> Result<T> {
        field.parse::<T>().map_err(|_| self.err(format!("bad {what} '{field}'")))
    }

    fn bbox(&self, f: &[&str]) -> Result<BoundingBox> {
        BoundingBox::new(
            self.num(f[0], "x")?,
            self.num(f[1], "y")?,
            self.num(f[2], "w")?,
            self.num(f[3], "h")?,
        )
        .map_err(|e| self.err(e.to_string()))
    }
}

/// Loads a detection file and its histogram sidecar. `bins` is the histogram
/// size substituted (uniform) when the sidecar is missing. The stream covers
/// frames `1..=last frame in the file`.
pub fn load_detections(path: &Path, bins: usize) -> Result<DetectionStream> {
    let text = read(path)?;
    let mut stream: DetectionStream = Vec::new();
    let mut last_frame = 0u64;
    for (line, f) in records(&text) {
        let ctx = LineCtx { path, line };
        let detector = match f.len() {
            7 => {
                let id: i64 = ctx.int(f[1], "detector id")?;
                if id < 1 {
                    return Err(ctx.err(format!("detector id must be >= 1, got {id}")));
                }
                id as usize - 1
            }
            10 => 0,
            n => return Err(ctx.err(format!("expected 7 or 10 fields, found {n}"))),
        };
        let frame: u64 = ctx.int(f[0], "frame")?;
        if frame < 1 {
            return Err(ctx.err("frames start at 1"));
        }
        if frame < last_frame {
            return Err(ctx.err(format!("frame {frame} after frame {last_frame}")));
        }
        last_frame = frame;
        let bbox = ctx.bbox(&f[2..6])?;
        ctx.num(f[6], "confidence")?;
        if stream.len() < frame as usize {
            stream.resize(frame as usize, Vec::new());
        }
        stream[frame as usize - 1].push(Detection::new(detector, bbox, AppearanceHistogram::uniform(bins), frame));
    }

    let sidecar = sidecar_path(path);
    if !sidecar.exists() {
        if stream.iter().any(|f| !f.is_empty()) {
            warn!("{}: no histogram sidecar, using uniform histograms", path.display());
        }
        return Ok(stream);
    }
    let text = read(&sidecar)?;
    let mut seen = vec![Vec::<bool>::new(); stream.len()];
    for (t, frame) in stream.iter().enumerate() {
        seen[t] = vec![false; frame.len()];
    }
    for (line, f) in records(&text) {
        let ctx = LineCtx { path: &sidecar, line };
        if f.len() < 4 {
            return Err(ctx.err("expected frame,index and at least 2 bins"));
        }
        let frame: usize = ctx.int(f[0], "frame")?;
        let index: usize = ctx.int(f[1], "index")?;
        let values = f[2..].iter().map(|v| ctx.num(v, "bin")).collect::<Result<Vec<_>>>()?;
        if values.len() != bins {
            return Err(ctx.err(format!("expected {bins} bins, found {}", values.len())));
        }
        let hist = AppearanceHistogram::new(values).map_err(|e| ctx.err(e.to_string()))?;
        let slot = frame
            .checked_sub(1)
            .and_then(|t| stream.get_mut(t))
            .and_then(|dets| dets.get_mut(index))
            .ok_or_else(|| ctx.err(format!("no detection {index} in frame {frame}")))?;
        slot.appearance = hist;
        seen[frame - 1][index] = true;
    }
    if let Some((t, k)) = seen
        .iter()
        .enumerate()
        .find_map(|(t, s)| s.iter().position(|v| !v).map(|k| (t, k)))
    {
        return Err(Error::Parse {
            path: sidecar,
            line: 0,
            message: format!("no histogram for detection {k} of frame {}", t + 1),
        });
    }
    Ok(stream)
}

fn push_box(out: &mut String, b: &BoundingBox) {
    let _ = write!(out, "{},{},{},{}", b.x, b.y, b.w, b.h);
}

/// Writes a detection file and its sidecar. Confidence is written as 1.
pub fn write_detections(path: &Path, stream: &[Vec<Detection>]) -> Result<()> {
    let mut dets = String::new();
    let mut hist = String::new();
    for (t, frame) in stream.iter().enumerate() {
        for (k, d) in frame.iter().enumerate() {
            let _ = write!(dets, "{},{},", t + 1, d.detector + 1);
            push_box(&mut dets, &d.bbox);
            dets.push_str(",1\n");
            let _ = write!(hist, "{},{}", t + 1, k);
            for b in d.appearance.bins() {
                let _ = write!(hist, ",{b}");
            }
            hist.push('\n');
        }
    }
    write(path, &dets)?;
    write(&sidecar_path(path), &hist)
}

pub fn write_tracks(path: &Path, records: &[TrackRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        let _ = write!(out, "{},{},", r.frame, r.id);
        push_box(&mut out, &r.bbox);
        let _ = writeln!(out, ",{}", r.visibility);
    }
    write(path, &out)
}

pub fn load_tracks(path: &Path) -> Result<Vec<TrackRecord>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (line, f) in records(&text) {
        let ctx = LineCtx { path, line };
        if f.len() != 7 {
            return Err(ctx.err(format!("expected 7 fields, found {}", f.len())));
        }
        let frame: u64 = ctx.int(f[0], "frame")?;
        if frame < 1 {
            return Err(ctx.err("frames start at 1"));
        }
        let id: u32 = ctx.int(f[1], "id")?;
        let bbox = ctx.bbox(&f[2..6])?;
        let visibility = ctx.num(f[6], "visibility")?;
        out.push(TrackRecord {
            frame,
            id,
            bbox,
            visibility,
        });
    }
    Ok(out)
}

/// Ground truth in track-file layout.
pub fn write_truth(path: &Path, frames: &[FrameSet]) -> Result<()> {
    write_tracks(path, &truth_records(frames))
}

pub fn truth_records(frames: &[FrameSet]) -> Vec<TrackRecord> {
    frames
        .iter()
        .enumerate()
        .flat_map(|(t, set)| {
            set.iter().map(move |(id, bbox)| TrackRecord {
                frame: t as u64 + 1,
                id: *id,
                bbox: *bbox,
                visibility: 1.0,
            })
        })
        .collect()
}

/// Groups records by frame into `frames` frame-aligned sets, ids ascending.
/// Records beyond `frames` extend the sequence.
pub fn frame_sets(records: &[TrackRecord], frames: usize) -> Vec<FrameSet> {
    let mut by_frame: BTreeMap<u64, FrameSet> = BTreeMap::new();
    for r in records {
        by_frame.entry(r.frame).or_default().push((r.id, r.bbox));
    }
    let last = by_frame.keys().next_back().map_or(0, |f| *f as usize);
    let mut out = vec![FrameSet::new(); frames.max(last)];
    for (frame, mut set) in by_frame {
        set.sort_by_key(|(id, _)| *id);
        out[frame as usize - 1] = set;
    }
    out
}
