//! On-disk CIR streams: `<name>.json` metadata plus `<name>.cirb` frames.
//!
//! Frame layout (little-endian): `u64 k`, `f64 t`, `n_beams * n_taps`
//! interleaved `f32` I/Q pairs (beam-major), then, when the stream carries
//! truth, `f64` TO in samples, `f64` carrier phase, `u32` target count and
//! that many `(f64, f64)` positions.

use super::{CirFrame, FrameTruth};
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub version: u32,
    #[serde(rename = "L_prime")]
    pub n_taps: usize,
    #[serde(rename = "P")]
    pub n_beams: usize,
    pub delta_tau_s: f64,
    #[serde(rename = "T_s")]
    pub packet_interval_s: f64,
    pub fc_hz: f64,
    pub d_los_m: f64,
    pub alpha_rad: f64,
    pub frames: usize,
    pub has_truth: bool,
    /// Beam weights, one `[re, im]` list per beam.
    pub codebook: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone)]
pub struct TraceFile {
    pub meta: TraceMeta,
    pub frames: Vec<CirFrame>,
}

/// `(json, cirb)` paths for a trace stem; any extension on `stem` is replaced.
pub fn trace_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("cirb"))
}

pub fn write_trace(stem: &Path, meta: &TraceMeta, frames: &[CirFrame]) -> Result<()> {
    let mut meta = meta.clone();
    meta.version = TRACE_VERSION;
    meta.frames = frames.len();
    meta.has_truth = !frames.is_empty() && frames.iter().all(|f| f.truth.is_some());
    for (i, f) in frames.iter().enumerate() {
        if f.n_beams != meta.n_beams
            || f.n_taps != meta.n_taps
            || f.taps.len() != f.n_beams * f.n_taps
        {
            return Err(Error::Frame {
                frame: i,
                msg: format!(
                    "shape {}x{} does not match {}x{}",
                    f.n_beams, f.n_taps, meta.n_beams, meta.n_taps
                ),
            });
        }
    }
    let (json, bin) = trace_paths(stem);
    serde_json::to_writer_pretty(BufWriter::new(File::create(json)?), &meta)?;
    let mut w = BufWriter::new(File::create(bin)?);
    for f in frames {
        w.write_all(&f.k.to_le_bytes())?;
        w.write_all(&f.t.to_le_bytes())?;
        for x in &f.taps {
            w.write_all(&(x.re as f32).to_le_bytes())?;
            w.write_all(&(x.im as f32).to_le_bytes())?;
        }
        if meta.has_truth {
            let t = f.truth.as_ref().expect("checked above");
            w.write_all(&t.to_samples.to_le_bytes())?;
            w.write_all(&t.cfo_phase.to_le_bytes())?;
            w.write_all(&(t.targets.len() as u32).to_le_bytes())?;
            for p in &t.targets {
                w.write_all(&p[0].to_le_bytes())?;
                w.write_all(&p[1].to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_meta(stem: &Path) -> Result<TraceMeta> {
    let (json, _) = trace_paths(stem);
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(json)?))?;
    let version = value.get("version").and_then(|v| v.as_u64());
    if version != Some(TRACE_VERSION as u64) {
        return Err(Error::Schema(format!(
            "unsupported trace version {version:?}, expected {TRACE_VERSION}"
        )));
    }
    let meta: TraceMeta =
        serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    if meta.n_beams == 0 || meta.n_taps == 0 {
        return Err(Error::Schema("empty frame shape".into()));
    }
    if meta.codebook.len() != meta.n_beams {
        return Err(Error::Schema(format!(
            "codebook has {} beams, P = {}",
            meta.codebook.len(),
            meta.n_beams
        )));
    }
    if !(meta.delta_tau_s > 0.0 && meta.packet_interval_s > 0.0) {
        return Err(Error::Schema("non-positive sampling intervals".into()));
    }
    Ok(meta)
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], frame: usize) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Frame {
            frame,
            msg: "truncated frame".into(),
        },
        _ => Error::Io(e),
    })
}

fn read_f64<R: Read>(r: &mut R, frame: usize) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact_or(r, &mut b, frame)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_trace(stem: &Path) -> Result<TraceFile> {
    let meta = read_meta(stem)?;
    let (_, bin) = trace_paths(stem);
    let mut r = BufReader::new(File::open(bin)?);
    let n = meta.n_beams * meta.n_taps;
    let mut frames = Vec::with_capacity(meta.frames);
    let mut raw = vec![0u8; 8 * n];
    for i in 0..meta.frames {
        let mut kb = [0u8; 8];
        read_exact_or(&mut r, &mut kb, i)?;
        let k = u64::from_le_bytes(kb);
        let t = read_f64(&mut r, i)?;
        read_exact_or(&mut r, &mut raw, i)?;
        let taps: Vec<Complex64> = raw
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        if taps.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) || !t.is_finite() {
            return Err(Error::Frame {
                frame: i,
                msg: "non-finite values; frame shape likely inconsistent with metadata".into(),
            });
        }
        let truth = if meta.has_truth {
            let to_samples = read_f64(&mut r, i)?;
            let cfo_phase = read_f64(&mut r, i)?;
            let mut cb = [0u8; 4];
            read_exact_or(&mut r, &mut cb, i)?;
            let count = u32::from_le_bytes(cb) as usize;
            if count > 1 << 16 {
                return Err(Error::Frame {
                    frame: i,
                    msg: format!("implausible target count {count}"),
                });
            }
            let mut targets = Vec::with_capacity(count);
            for _ in 0..count {
                targets.push([read_f64(&mut r, i)?, read_f64(&mut r, i)?]);
            }
            Some(FrameTruth {
                to_samples,
                cfo_phase,
                targets,
            })
        } else {
            None
        };
        frames.push(CirFrame {
            k,
            t,
            n_beams: meta.n_beams,
            n_taps: meta.n_taps,
            taps,
            truth,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Schema(format!(
            "trailing bytes after {} frames; metadata shape does not match the binary",
            meta.frames
        )));
    }
    Ok(TraceFile { meta, frames })
}
