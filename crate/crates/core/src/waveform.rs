//! Golay complementary training sequences, TRN-field layout, received-stream
//! synthesis and complementary-correlator channel estimation.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

/// Binary complementary pair. `a[i], b[i]` are ±1.
#[derive(Debug, Clone, PartialEq)]
pub struct GolayPair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl GolayPair {
    /// Recursive construction `(a, b) -> (a|b, a|-b)` starting from `([1], [1])`.
    /// `len` must be a power of two in `2..=1024`.
    pub fn new(len: usize) -> Result<Self> {
        if !(2..=1024).contains(&len) || !len.is_power_of_two() {
            return Err(Error::Config(format!(
                "Golay length {len} is not a power of two in 2..=1024"
            )));
        }
        let mut a = vec![1.0];
        let mut b = vec![1.0];
        while a.len() < len {
            let mut na = a.clone();
            na.extend_from_slice(&b);
            let mut nb = a;
            nb.extend(b.iter().map(|v| -v));
            a = na;
            b = nb;
        }
        Ok(Self { a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Aperiodic autocorrelation `sum_i x[i] x[i+lag]` for `lag >= 0`.
pub fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    x.iter().zip(x.iter().skip(lag)).map(|(p, q)| p * q).sum()
}

/// One training unit: a complementary pair sent on one beam pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrnUnit {
    pub beam: usize,
}

/// Training field. Each unit carries `a` then `b`, every sequence followed by
/// `guard` zero symbols so that delayed echoes never reach the next sequence.
#[derive(Debug, Clone)]
pub struct TrnField {
    pub pair: GolayPair,
    pub units: Vec<TrnUnit>,
    pub guard: usize,
}

impl TrnField {
    pub fn new(pair: GolayPair, beams: &[usize], guard: usize) -> Result<Self> {
        if beams.is_empty() {
            return Err(Error::Layout("training field without units".into()));
        }
        Ok(Self {
            pair,
            units: beams.iter().map(|&beam| TrnUnit { beam }).collect(),
            guard,
        })
    }

    /// Six 128-symbol units (64 + 64 complementary halves), one beam each.
    pub fn standard(guard: usize) -> Self {
        let pair = GolayPair::new(64).expect("64 is a valid Golay length");
        let beams: Vec<usize> = (0..6).collect();
        Self::new(pair, &beams, guard).expect("non-empty layout")
    }

    /// Pilot symbols per unit; this is the coherent processing gain per beam.
    pub fn unit_len(&self) -> usize {
        2 * self.pair.len()
    }

    /// Pilot symbols in the whole field, guards excluded.
    pub fn total_symbols(&self) -> usize {
        self.units.len() * self.unit_len()
    }

    fn slot_len(&self) -> usize {
        self.pair.len() + self.guard
    }

    /// Start sample of the `a` and `b` sequence of unit `u`.
    pub fn sequence_starts(&self, u: usize) -> (usize, usize) {
        let start = 2 * u * self.slot_len();
        (start, start + self.slot_len())
    }

    /// Samples in a synthesized stream, guards included.
    pub fn stream_len(&self) -> usize {
        2 * self.units.len() * self.slot_len()
    }

    fn check_beams(&self, n_beams: usize) -> Result<()> {
        if let Some(u) = self.units.iter().find(|u| u.beam >= n_beams) {
            return Err(Error::Layout(format!(
                "unit references beam {} but only {n_beams} channels given",
                u.beam
            )));
        }
        Ok(())
    }
}

/// Windowed-sinc fractional delay taps, indexed `-half..=half`.
fn fractional_delay(frac: f64, half: usize) -> Vec<f64> {
    let n = 2 * half + 1;
    (0..n)
        .map(|i| {
            let m = i as f64 - half as f64;
            let x = m - frac;
            let sinc = if x.abs() < 1e-12 {
                1.0
            } else {
                (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
            };
            // Hann window centred on the fractional delay.
            let w = 0.5 + 0.5 * (std::f64::consts::PI * x / (half as f64 + 1.0)).cos();
            sinc * w
        })
        .collect()
}

/// Received baseband stream of one training field.
///
/// `channels[b]` is the tap vector seen on beam `b`. `to_samples` may be
/// fractional; `cfo_phase0 + cfo_step * n` is the carrier phase on sample `n`.
pub fn synthesize_rx_stream<R: Rng + ?Sized>(
    channels: &[Vec<Complex64>],
    trn: &TrnField,
    to_samples: f64,
    cfo_phase0: f64,
    cfo_step: f64,
    noise_var: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    trn.check_beams(channels.len())?;
    if to_samples < 0.0 || !to_samples.is_finite() {
        return Err(Error::Config(format!(
            "timing offset {to_samples} must be >= 0"
        )));
    }
    let n_taps = channels.iter().map(Vec::len).max().unwrap_or(0);
    let whole = to_samples.floor() as usize;
    let frac = to_samples - whole as f64;
    const HALF: usize = 8;
    let spread = if frac > 0.0 { HALF } else { 0 };
    if whole + n_taps + spread > trn.guard {
        return Err(Error::Layout(format!(
            "timing offset {whole} plus {n_taps} taps exceeds guard {}",
            trn.guard
        )));
    }
    let interp = if frac > 0.0 {
        fractional_delay(frac, HALF)
    } else {
        vec![1.0]
    };
    let len = trn.stream_len();
    let mut y = vec![Complex64::new(0.0, 0.0); len];
    for (u, unit) in trn.units.iter().enumerate() {
        // Effective response: channel taps convolved with the delay filter.
        let h = &channels[unit.beam];
        let mut eff = vec![Complex64::new(0.0, 0.0); h.len() + interp.len() - 1];
        for (l, &tap) in h.iter().enumerate() {
            if tap == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (m, &w) in interp.iter().enumerate() {
                eff[l + m] += tap * w;
            }
        }
        let (sa, sb) = trn.sequence_starts(u);
        for (start, seq) in [(sa, &trn.pair.a), (sb, &trn.pair.b)] {
            for (d, &e) in eff.iter().enumerate() {
                if e == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let base = (start + whole + d) as isize - spread as isize;
                for (i, &s) in seq.iter().enumerate() {
                    let n = base + i as isize;
                    if n >= 0 && (n as usize) < len {
                        y[n as usize] += e * s;
                    }
                }
            }
        }
    }
    let sigma = (noise_var / 2.0).sqrt();
    for (n, v) in y.iter_mut().enumerate() {
        *v *= Complex64::from_polar(1.0, cfo_phase0 + cfo_step * n as f64);
        if noise_var > 0.0 {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re, im) * sigma;
        }
    }
    Ok(y)
}

/// Complementary-correlator estimate of `n_taps` taps for each of `n_beams`
/// beams. Units sharing a beam are averaged. Output taps have unit gain.
pub fn estimate_cir(
    stream: &[Complex64],
    trn: &TrnField,
    n_beams: usize,
    n_taps: usize,
) -> Result<Vec<Vec<Complex64>>> {
    trn.check_beams(n_beams)?;
    if n_taps > trn.guard + 1 {
        return Err(Error::Layout(format!(
            "{n_taps} taps requested but guard is only {}",
            trn.guard
        )));
    }
    if stream.len() < trn.stream_len() {
        return Err(Error::Layout(format!(
            "stream has {} samples, layout needs {}",
            stream.len(),
            trn.stream_len()
        )));
    }
    let s = trn.pair.len();
    let norm = 2.0 * s as f64;
    let mut out = vec![vec![Complex64::new(0.0, 0.0); n_taps]; n_beams];
    let mut hits = vec![0usize; n_beams];
    for (u, unit) in trn.units.iter().enumerate() {
        let (sa, sb) = trn.sequence_starts(u);
        let h = &mut out[unit.beam];
        for (l, tap) in h.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..s {
                acc += stream[sa + i + l] * trn.pair.a[i] + stream[sb + i + l] * trn.pair.b[i];
            }
            *tap += acc / norm;
        }
        hits[unit.beam] += 1;
    }
    for (b, (h, &n)) in out.iter_mut().zip(&hits).enumerate() {
        if n == 0 {
            return Err(Error::Layout(format!(
                "beam {b} is not covered by any unit"
            )));
        }
        if n > 1 {
            h.iter_mut().for_each(|t| *t /= n as f64);
        }
    }
    Ok(out)
}
