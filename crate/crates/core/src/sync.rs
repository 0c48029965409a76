//! Timing-offset compensation: per-beam magnitude cross-correlation, majority
//! vote over beams, CIR re-anchoring and direct-path anchoring.

use crate::error::{Error, Result};
use crate::simulator::CirFrame;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Lag search half-width, taps.
pub const DEFAULT_SEARCH_RANGE: i32 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ToEstimate {
    /// Offset of the current frame relative to the reference, taps.
    pub rho_hat: i32,
    /// Per-beam argmax; `None` for beams without energy.
    pub per_beam: Vec<Option<i32>>,
    pub votes: BTreeMap<i32, usize>,
}

/// `sum_l cur[l + rho] * prev[l]` with zero padding.
pub fn cross_correlation(cur: &[f64], prev: &[f64], rho: i32) -> f64 {
    let n = cur.len().min(prev.len()) as i32;
    let lo = 0.max(-rho);
    let hi = n.min(n - rho);
    (lo..hi)
        .map(|l| cur[(l + rho) as usize] * prev[l as usize])
        .sum()
}

fn closer_to_zero(a: i32, b: i32) -> bool {
    (a.abs(), a) < (b.abs(), b)
}

/// Per-beam lag maximizing the magnitude cross-correlation; ties go to the
/// smallest `|rho|`. `None` when the correlation is identically zero.
pub fn beam_offset(cur: &[f64], prev: &[f64], search_range: i32) -> Option<(i32, f64)> {
    let mut best: Option<(i32, f64)> = None;
    for rho in -search_range..=search_range {
        let c = cross_correlation(cur, prev, rho);
        best = match best {
            None => Some((rho, c)),
            Some((r, v)) if c > v || (c == v && closer_to_zero(rho, r)) => Some((rho, c)),
            keep => keep,
        };
    }
    best.filter(|&(_, v)| v > 0.0)
}

/// Offset of `current` against the aligned magnitudes of the previous frame.
pub fn estimate_to(
    current: &CirFrame,
    previous: &[Vec<f64>],
    search_range: i32,
) -> Result<ToEstimate> {
    if previous.len() != current.n_beams {
        return Err(Error::Config(format!(
            "reference has {} beams, frame has {}",
            previous.len(),
            current.n_beams
        )));
    }
    let mags = current.magnitudes();
    let mut per_beam = Vec::with_capacity(current.n_beams);
    let mut votes: BTreeMap<i32, usize> = BTreeMap::new();
    let mut weight: BTreeMap<i32, f64> = BTreeMap::new();
    for (cur, prev) in mags.iter().zip(previous) {
        let hit = beam_offset(cur, prev, search_range);
        if let Some((rho, c)) = hit {
            *votes.entry(rho).or_default() += 1;
            let e: f64 = cur.iter().map(|x| x * x).sum::<f64>().sqrt()
                * prev.iter().map(|x| x * x).sum::<f64>().sqrt();
            *weight.entry(rho).or_default() += c / e;
        }
        per_beam.push(hit.map(|h| h.0));
    }
    // Most votes, then largest normalized correlation, then smallest |rho|.
    let rho_hat = votes
        .iter()
        .max_by(|(ra, na), (rb, nb)| {
            na.cmp(nb)
                .then(weight[ra].total_cmp(&weight[rb]))
                .then(if closer_to_zero(**ra, **rb) {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Less
                })
        })
        .map(|(r, _)| *r)
        .ok_or_else(|| Error::NoSignal(format!("frame {} has no energy on any beam", current.k)))?;
    Ok(ToEstimate {
        rho_hat,
        per_beam,
        votes,
    })
}

/// Removes an offset of `rho` taps: output tap `l` takes input tap `l + rho`,
/// zero-filled outside the window.
pub fn shift_cir(frame: &CirFrame, rho: i32) -> CirFrame {
    let mut out = CirFrame::zeros(frame.k, frame.t, frame.n_beams, frame.n_taps);
    out.truth = frame.truth.clone();
    let n = frame.n_taps as i64;
    for b in 0..frame.n_beams {
        let src = frame.beam(b);
        let dst = out.beam_mut(b);
        for (l, d) in dst.iter_mut().enumerate() {
            let s = l as i64 + rho as i64;
            if (0..n).contains(&s) {
                *d = src[s as usize];
            }
        }
    }
    out
}

/// Beam-summed tap power.
pub fn power_profile(frame: &CirFrame) -> Vec<f64> {
    let mut p = vec![0.0; frame.n_taps];
    for b in 0..frame.n_beams {
        for (acc, x) in p.iter_mut().zip(frame.beam(b)) {
            *acc += x.norm_sqr();
        }
    }
    p
}

/// First tap whose beam-summed power exceeds the median by `threshold_db`.
pub fn first_arrival(frame: &CirFrame, threshold_db: f64) -> Option<usize> {
    let p = power_profile(frame);
    let mut sorted = p.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[sorted.len() / 2];
    let peak = *sorted.last()?;
    if peak <= 0.0 {
        return None;
    }
    let thr = if floor > 0.0 {
        floor * 10f64.powf(threshold_db / 10.0)
    } else {
        // Noise-free input: anything non-zero counts.
        0.0
    };
    p.iter().position(|&x| x > thr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncConfig {
    pub search_range: i32,
    /// Consecutive frames an earlier path must persist before re-anchoring.
    pub los_persistence: usize,
    /// First-arrival detection threshold above the noise median, dB.
    pub arrival_threshold_db: f64,
    /// Smallest advance of an earlier path that counts, taps.
    pub min_advance: i32,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            search_range: DEFAULT_SEARCH_RANGE,
            los_persistence: 5,
            // CFAR scale 8 (~9 dB) plus 6 dB margin.
            arrival_threshold_db: 15.0,
            min_advance: 2,
        }
    }
}

/// Streaming aligner state.
#[derive(Debug, Clone)]
pub struct AnchorState {
    pub cfg: SyncConfig,
    pub reference: Option<Vec<Vec<f64>>>,
    /// `false` until the anchor is known to sit on the earliest path.
    pub anchored_to_los: bool,
    /// Earlier-path advance observed over the current run, taps.
    pub pending_offset: Option<i32>,
    run: usize,
}

/// Result of aligning one frame.
#[derive(Debug, Clone)]
pub struct AlignStep {
    pub aligned: CirFrame,
    /// Offset removed from this frame, taps.
    pub offset: i32,
    /// Set when an earlier path was confirmed: every previously emitted
    /// offset must be reduced by this many taps.
    pub retro_correction: Option<i32>,
}

impl AnchorState {
    pub fn new(cfg: SyncConfig) -> Self {
        Self {
            cfg,
            reference: None,
            anchored_to_los: false,
            pending_offset: None,
            run: 0,
        }
    }

    pub fn push(&mut self, raw: &CirFrame) -> Result<AlignStep> {
        let arrival = first_arrival(raw, self.cfg.arrival_threshold_db);
        let mut offset = match &self.reference {
            None => arrival
                .map(|a| a as i32)
                .ok_or_else(|| Error::NoSignal(format!("frame {} is empty", raw.k)))?,
            Some(r) => estimate_to(raw, r, self.cfg.search_range)?.rho_hat,
        };
        let mut retro = None;
        match arrival.map(|a| offset - a as i32) {
            Some(adv) if adv >= self.cfg.min_advance => {
                let consistent = self.pending_offset.is_none_or(|p| (p - adv).abs() <= 1);
                self.run = if consistent { self.run + 1 } else { 1 };
                self.pending_offset = Some(adv);
                if self.run >= self.cfg.los_persistence {
                    offset -= adv;
                    retro = Some(adv);
                    self.anchored_to_los = true;
                    self.pending_offset = None;
                    self.run = 0;
                }
            }
            _ => {
                self.run = 0;
                self.pending_offset = None;
            }
        }
        let aligned = shift_cir(raw, offset);
        self.reference = Some(aligned.magnitudes());
        Ok(AlignStep {
            aligned,
            offset,
            retro_correction: retro,
        })
    }
}

#[derive(Debug, Clone)]
pub struct AlignedStream {
    pub frames: Vec<CirFrame>,
    /// Final offset removed from each raw frame, taps.
    pub offsets: Vec<i32>,
    /// `(frame index, taps)` of every direct-path re-anchoring.
    pub corrections: Vec<(usize, i32)>,
}

/// Aligns a whole stream, applying direct-path re-anchoring retroactively.
pub fn align_stream(frames: &[CirFrame], cfg: SyncConfig) -> Result<AlignedStream> {
    let mut state = AnchorState::new(cfg);
    let mut offsets = Vec::with_capacity(frames.len());
    let mut corrections = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let step = state.push(f)?;
        if let Some(c) = step.retro_correction {
            offsets.iter_mut().for_each(|o: &mut i32| *o -= c);
            corrections.push((i, c));
        }
        offsets.push(step.offset);
    }
    let aligned = frames
        .iter()
        .zip(&offsets)
        .map(|(f, &o)| shift_cir(f, o))
        .collect();
    Ok(AlignedStream {
        frames: aligned,
        offsets,
        corrections,
    })
}

/// Normalized autocorrelation of a beam-summed magnitude profile, lags
/// `-(n-1)..=n-1`; index `n-1` is lag zero.
pub fn ambiguity_function(profiles: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = profiles.first().map(Vec::len).unwrap_or(0);
    let energy: f64 = profiles.iter().flatten().map(|x| x * x).sum();
    if n == 0 || energy <= 0.0 {
        return Err(Error::NoSignal("empty profile".into()));
    }
    let mut af = vec![0.0; 2 * n - 1];
    for (i, v) in af.iter_mut().enumerate() {
        let lag = i as i32 - (n as i32 - 1);
        *v = profiles
            .iter()
            .map(|p| cross_correlation(p, p, lag))
            .sum::<f64>()
            / energy;
    }
    Ok(af)
}

/// Half-power main-lobe width of an ambiguity function, taps.
pub fn mainlobe_width(af: &[f64]) -> f64 {
    let c = af.len() / 2;
    let right = &af[c..];
    match right.iter().position(|&v| v < 0.5) {
        Some(m) if m > 0 => {
            let (a, b) = (right[m - 1], right[m]);
            2.0 * ((m - 1) as f64 + (a - 0.5) / (a - b))
        }
        _ => 2.0 * (right.len() - 1) as f64,
    }
}

/// Median of the ambiguity function outside the half-power main lobe, up to
/// `max_lag`.
pub fn sidelobe_floor(af: &[f64], max_lag: usize) -> f64 {
    let c = af.len() / 2;
    let half = (mainlobe_width(af) / 2.0).ceil() as usize;
    let mut side: Vec<f64> = (half + 1..=max_lag.min(c))
        .flat_map(|m| [af[c - m], af[c + m]])
        .collect();
    if side.is_empty() {
        return 0.0;
    }
    side.sort_by(f64::total_cmp);
    side[side.len() / 2]
}

/// Magnitude profile helper for single-beam tap vectors.
pub fn magnitudes(taps: &[Complex64]) -> Vec<f64> {
    taps.iter().map(|x| x.norm()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_from(beams: Vec<Vec<f64>>) -> CirFrame {
        let nb = beams.len();
        let nt = beams[0].len();
        let mut f = CirFrame::zeros(0, 0.0, nb, nt);
        for (b, v) in beams.iter().enumerate() {
            for (d, s) in f.beam_mut(b).iter_mut().zip(v) {
                *d = Complex64::new(*s, 0.0);
            }
        }
        f
    }

    fn peaks(n: usize, at: &[(usize, f64)]) -> Vec<f64> {
        let mut v = vec![0.0; n];
        for &(i, a) in at {
            v[i] = a;
        }
        v
    }

    #[test]
    fn recovers_injected_shift() {
        let prev = peaks(64, &[(5, 1.0), (12, 0.5), (30, 0.2)]);
        let cur = peaks(64, &[(8, 1.0), (15, 0.5), (33, 0.2)]);
        let est = estimate_to(&frame_from(vec![cur]), &[prev], 20).unwrap();
        assert_eq!(est.rho_hat, 3);
    }

    #[test]
    fn majority_vote_beats_outlier_beam() {
        let prev = peaks(64, &[(10, 1.0), (20, 0.4)]);
        let good = peaks(64, &[(12, 1.0), (22, 0.4)]);
        let bad = peaks(64, &[(30, 1.0)]);
        let f = frame_from(vec![good.clone(), good, bad]);
        let est = estimate_to(&f, &[prev.clone(), prev.clone(), prev], 30).unwrap();
        assert_eq!(est.rho_hat, 2);
        assert_eq!(est.votes[&2], 2);
    }

    #[test]
    fn empty_frame_is_no_signal() {
        let f = frame_from(vec![vec![0.0; 16]]);
        assert!(matches!(
            estimate_to(&f, &[vec![1.0; 16]], 4),
            Err(Error::NoSignal(_))
        ));
    }

    #[test]
    fn shift_undoes_offset() {
        let f = frame_from(vec![peaks(32, &[(17, 1.0)])]);
        let s = shift_cir(&f, 5);
        assert_eq!(s.beam(0)[12], Complex64::new(1.0, 0.0));
        assert_eq!(s.beam(0).iter().filter(|x| x.norm() > 0.0).count(), 1);
        let back = shift_cir(&f, -20);
        assert!(back.beam(0).iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn two_peak_ambiguity() {
        let af = ambiguity_function(&[peaks(32, &[(4, 1.0), (10, 1.0)])]).unwrap();
        let c = 31;
        assert_eq!(af[c], 1.0);
        assert!((af[c + 6] - 0.5).abs() < 1e-12 && (af[c - 6] - 0.5).abs() < 1e-12);
        assert!((mainlobe_width(&af) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn late_direct_path_triggers_reanchoring() {
        // Reflection at raw tap 10 first; from frame 3 on a direct path fades in 6 taps earlier.
        let mut frames = Vec::new();
        for k in 0..12 {
            let mut v = vec![0.0; 64];
            v[10] = 1.0;
            v[25] = 0.5;
            if k >= 3 {
                v[4] = 0.1 * (k - 2) as f64;
            }
            let mut f = frame_from(vec![v]);
            f.k = k;
            frames.push(f);
        }
        let cfg = SyncConfig {
            los_persistence: 5,
            ..SyncConfig::default()
        };
        let out = align_stream(&frames, cfg).unwrap();
        assert_eq!(out.corrections, vec![(7, 6)]);
        assert!(out.offsets.iter().all(|&o| o == 4), "{:?}", out.offsets);
        for f in &out.frames[3..] {
            assert!(f.beam(0)[0].re > 0.0);
            assert_eq!(f.beam(0)[6].re, 1.0);
        }
    }
}
