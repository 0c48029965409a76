//! Output directory with CSV/JSON/binary writers and a manifest listing every
//! emitted file.

use crate::error::Result;
use image::{Rgb, RgbImage};
use jcs_core::microdoppler::Spectrogram;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub harness_version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub files: Vec<String>,
}

/// Collects files written into one directory.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.record(name);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let f = std::fs::File::create(self.path(name))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), value)?;
        self.record(name);
        Ok(())
    }

    /// One JSON document per line.
    pub fn jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(self.path(name))?);
        for r in rows {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        self.record(name);
        Ok(())
    }

    /// `<stem>.f32` (little-endian, frame-major), `<stem>.json` axes and a
    /// `<stem>.png` rendering.
    pub fn spectrogram(&mut self, stem: &str, s: &Spectrogram) -> Result<()> {
        let mut w =
            std::io::BufWriter::new(std::fs::File::create(self.path(&format!("{stem}.f32")))?);
        for row in &s.power {
            for v in row {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        self.record(&format!("{stem}.f32"));
        let axes = serde_json::json!({
            "frames": s.power.len(),
            "bins": s.freqs.len(),
            "window": s.window,
            "hop": s.hop,
            "freqs_hz": s.freqs,
            "times_s": s.times,
        });
        self.json(&format!("{stem}.json"), &axes)?;
        let name = format!("{stem}.png");
        render_spectrogram(s, 60.0).save(self.path(&name))?;
        self.record(&name);
        Ok(())
    }

    /// Registers a file written by other means.
    pub fn add(&mut self, name: &str) {
        self.record(name);
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn finish(
        mut self,
        command: &str,
        seed: u64,
        config: serde_json::Value,
    ) -> Result<Manifest> {
        use sha2::{Digest, Sha256};
        let config_hash = hex::encode(Sha256::digest(serde_json::to_vec(&config)?));
        self.files.sort();
        let m = Manifest {
            tool: "jcs",
            harness_version: env!("CARGO_PKG_VERSION"),
            core_version: jcs_core::VERSION,
            command: command.to_string(),
            seed,
            config_hash,
            config,
            files: self.files.clone(),
        };
        let f = std::fs::File::create(self.root.join("manifest.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), &m)?;
        Ok(m)
    }
}

/// Time runs left to right, frequency bottom to top; `floor_db` of dynamic
/// range below the global maximum.
pub fn render_spectrogram(s: &Spectrogram, floor_db: f64) -> RgbImage {
    let frames = s.power.len().max(1) as u32;
    let bins = s.freqs.len().max(1) as u32;
    let max = s
        .power
        .iter()
        .flatten()
        .cloned()
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut img = RgbImage::new(frames, bins);
    for (x, row) in s.power.iter().enumerate() {
        for (y, &p) in row.iter().enumerate() {
            let db = 10.0 * (p.max(1e-300) / max).log10();
            let v = ((db + floor_db) / floor_db).clamp(0.0, 1.0);
            img.put_pixel(x as u32, bins - 1 - y as u32, heat(v));
        }
    }
    img
}

/// Black-red-yellow-white ramp.
fn heat(v: f64) -> Rgb<u8> {
    let c = |t: f64| (t.clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([c(3.0 * v), c(3.0 * v - 1.0), c(3.0 * v - 2.0)])
}
