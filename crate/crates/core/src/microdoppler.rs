//! Carrier-offset removal against a static reference, receiver-motion
//! compensation, short-time spectra and spectrogram comparison.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default gap, in packets, over which a lost reference phase is carried.
pub const MAX_REFERENCE_GAP: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CleanSeries {
    pub values: Vec<Complex64>,
    /// Samples whose reference was missing for longer than the carry limit.
    pub unreliable: Vec<bool>,
}

/// Divides out the reference phase sample by sample. A zero reference reuses
/// the last valid phase for up to `max_gap` samples.
pub fn remove_cfo(
    target: &[Complex64],
    reference: &[Complex64],
    max_gap: usize,
) -> Result<CleanSeries> {
    if target.len() != reference.len() {
        return Err(Error::Config(format!(
            "series lengths differ: {} vs {}",
            target.len(),
            reference.len()
        )));
    }
    let mut values = Vec::with_capacity(target.len());
    let mut unreliable = Vec::with_capacity(target.len());
    let mut last: Option<f64> = None;
    let mut gap = 0usize;
    for (h, r) in target.iter().zip(reference) {
        let phase = if r.norm() > 0.0 {
            gap = 0;
            let p = r.arg();
            last = Some(p);
            Some(p)
        } else {
            gap += 1;
            last
        };
        match phase {
            Some(p) => {
                values.push(h * Complex64::from_polar(1.0, -p));
                unreliable.push(gap > max_gap);
            }
            None => {
                values.push(Complex64::new(0.0, 0.0));
                unreliable.push(true);
            }
        }
    }
    Ok(CleanSeries { values, unreliable })
}

/// Removes the Doppler a moving receiver adds relative to the reference
/// path: `exp(-j 2 pi v/lambda (cos(zeta + eta) - cos(eta)) k T)`.
///
/// `zeta` is the direct-path direction minus the target direction and `eta`
/// the receiver heading minus the direct-path direction, both at the receiver.
pub fn compensate_rx_motion(
    series: &[Complex64],
    speed: f64,
    zeta: f64,
    eta: f64,
    wavelength: f64,
    packet_interval: f64,
) -> Vec<Complex64> {
    let f = speed / wavelength * ((zeta + eta).cos() - eta.cos());
    series
        .iter()
        .enumerate()
        .map(|(k, x)| x * Complex64::from_polar(1.0, -2.0 * PI * f * k as f64 * packet_interval))
        .collect()
}

/// Power spectra over time, `power[frame][bin]`, zero frequency centred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub power: Vec<Vec<f64>>,
    /// Bin centres, Hz.
    pub freqs: Vec<f64>,
    /// Window centres, seconds from the first sample.
    pub times: Vec<f64>,
    pub window: usize,
    pub hop: usize,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.power.len()
    }

    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// Frequency of the strongest bin of each frame.
    pub fn peak_frequencies(&self) -> Vec<f64> {
        self.power
            .iter()
            .map(|row| {
                let i = (0..row.len())
                    .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                    .unwrap_or(0);
                self.freqs[i]
            })
            .collect()
    }
}

/// Symmetric Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Hann-windowed STFT power `|X|^2 / W`, so that each frame sums to the
/// windowed energy.
pub fn spectrogram(
    series: &[Complex64],
    window: usize,
    hop: usize,
    packet_interval: f64,
) -> Result<Spectrogram> {
    if window == 0 || hop == 0 {
        return Err(Error::Config("window and hop must be positive".into()));
    }
    if series.len() < window {
        return Err(Error::InsufficientData(format!(
            "{} samples, window needs {window}",
            series.len()
        )));
    }
    let win = hann(window);
    let fft = FftPlanner::new().plan_fft_forward(window);
    let n_frames = (series.len() - window) / hop + 1;
    let half = window / 2;
    let mut power = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); window];
    for f in 0..n_frames {
        let start = f * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = series[start + i] * win[i];
        }
        fft.process(&mut buf);
        let row: Vec<f64> = (0..window)
            .map(|i| buf[(i + window - half) % window].norm_sqr() / window as f64)
            .collect();
        power.push(row);
    }
    let df = 1.0 / (window as f64 * packet_interval);
    let freqs = (0..window).map(|i| (i as f64 - half as f64) * df).collect();
    let times = (0..n_frames)
        .map(|f| (f * hop) as f64 * packet_interval + (window as f64 - 1.0) / 2.0 * packet_interval)
        .collect();
    Ok(Spectrogram {
        power,
        freqs,
        times,
        window,
        hop,
    })
}

/// Taps `center - q ..= center + q` clipped to `[0, n_taps)`; the flag is set
/// when clipping happened.
pub fn tap_window(center: usize, q: usize, n_taps: usize) -> (std::ops::Range<usize>, bool) {
    let lo = center.saturating_sub(q);
    let hi = (center + q + 1).min(n_taps);
    (lo..hi, center < q || center + q + 1 > n_taps)
}

/// Sum of per-tap spectrograms with identical axes.
pub fn aggregate_taps(parts: &[Spectrogram]) -> Result<Spectrogram> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InsufficientData("no spectrograms to aggregate".into()))?;
    let mut out = first.clone();
    for s in &parts[1..] {
        if s.power.len() != out.power.len() || s.freqs.len() != out.freqs.len() {
            return Err(Error::Config("spectrogram shapes differ".into()));
        }
        for (acc, row) in out.power.iter_mut().zip(&s.power) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskConfig {
    /// Dynamic range kept below each frame's maximum, dB.
    pub floor_db: f64,
    /// Gaussian blur standard deviation, bins.
    pub blur_sigma: f64,
    pub threshold: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            floor_db: 60.0,
            blur_sigma: 2.0,
            threshold: 0.45,
        }
    }
}

/// Per-frame log scaling clamped `floor_db` below the maximum, then min-max
/// normalized to `[0, 1]`.
pub fn normalize_frames(power: &[Vec<f64>], floor_db: f64) -> Vec<Vec<f64>> {
    power
        .iter()
        .map(|row| {
            let db: Vec<f64> = row.iter().map(|&p| 10.0 * p.max(1e-300).log10()).collect();
            let max = db.iter().cloned().fold(f64::MIN, f64::max);
            let lo = db
                .iter()
                .cloned()
                .fold(f64::MAX, f64::min)
                .max(max - floor_db);
            let span = max - lo;
            db.iter()
                .map(|&v| {
                    if span > 0.0 {
                        ((v.max(lo) - lo) / span).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur with mirrored borders, kernel truncated at 4 sigma.
pub fn gaussian_blur(img: &[Vec<f64>], sigma: f64) -> Vec<Vec<f64>> {
    if img.is_empty() || sigma <= 0.0 {
        return img.to_vec();
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let rows = img.len();
    let cols = img[0].len();
    let mut tmp = vec![vec![0.0; cols]; rows];
    for r in 0..rows {
        for c in 0..cols {
            tmp[r][c] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * img[r][reflect(c as isize + j as isize - radius, cols)])
                .sum();
        }
    }
    let mut out = vec![vec![0.0; cols]; rows];
    for r in 0..rows {
        for c in 0..cols {
            out[r][c] = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * tmp[reflect(r as isize + j as isize - radius, rows)][c])
                .sum();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedRmse {
    /// Masked RMSE of each frame with a non-empty mask.
    pub per_frame: Vec<f64>,
    pub unmasked_per_frame: Vec<f64>,
    /// Frames skipped because their mask was empty.
    pub skipped: usize,
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

impl MaskedRmse {
    pub fn median(&self) -> f64 {
        median(&self.per_frame)
    }

    pub fn mean(&self) -> f64 {
        self.per_frame.iter().sum::<f64>() / self.per_frame.len().max(1) as f64
    }

    pub fn unmasked_median(&self) -> f64 {
        median(&self.unmasked_per_frame)
    }
}

/// Frame-wise RMSE between normalized spectrograms, restricted to the bins
/// where the blurred reference exceeds the threshold.
pub fn masked_rmse(
    test: &Spectrogram,
    reference: &Spectrogram,
    cfg: &MaskConfig,
) -> Result<MaskedRmse> {
    if test.power.len() != reference.power.len()
        || test.power.first().map(Vec::len) != reference.power.first().map(Vec::len)
    {
        return Err(Error::Config("spectrogram shapes differ".into()));
    }
    let a = normalize_frames(&test.power, cfg.floor_db);
    let b = normalize_frames(&reference.power, cfg.floor_db);
    let mask = gaussian_blur(&b, cfg.blur_sigma);
    let mut per_frame = Vec::new();
    let mut unmasked_per_frame = Vec::new();
    let mut skipped = 0;
    for ((ra, rb), rm) in a.iter().zip(&b).zip(&mask) {
        let all: f64 =
            ra.iter().zip(rb).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / ra.len() as f64;
        unmasked_per_frame.push(all.sqrt());
        let sel: Vec<f64> = ra
            .iter()
            .zip(rb)
            .zip(rm)
            .filter(|(_, m)| **m > cfg.threshold)
            .map(|((x, y), _)| (x - y).powi(2))
            .collect();
        if sel.is_empty() {
            skipped += 1;
            continue;
        }
        per_frame.push((sel.iter().sum::<f64>() / sel.len() as f64).sqrt());
    }
    Ok(MaskedRmse {
        per_frame,
        unmasked_per_frame,
        skipped,
    })
}

/// Standard deviation of the residual reference phase error,
/// `sqrt(1 / (2 G Gamma) * |h_los|^2 / |h_ref|^2)`, radians.
pub fn residual_phase_std(snr_linear: f64, gain: f64, reference_ratio: f64) -> f64 {
    (reference_ratio / (2.0 * gain * snr_linear)).sqrt()
}

/// Residual phase error expressed as a frequency over one packet interval.
pub fn residual_cfo_std_hz(
    snr_linear: f64,
    gain: f64,
    reference_ratio: f64,
    packet_interval: f64,
) -> f64 {
    residual_phase_std(snr_linear, gain, reference_ratio) / (2.0 * PI * packet_interval)
}
