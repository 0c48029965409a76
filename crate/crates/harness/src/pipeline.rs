//! Offline processing of a CIR stream: timing alignment, decimated tracking
//! with static-reference selection, carrier removal and micro-Doppler
//! spectrograms. Streams carrying ground truth are also scored.

use crate::error::{HarnessError, Result};
use jcs_core::geometry::{doppler_from_motion, ArrayModel, GeometryConfig};
use jcs_core::microdoppler::{
    masked_rmse, remove_cfo, spectrogram, tap_window, MaskConfig, Spectrogram, MAX_REFERENCE_GAP,
};
use jcs_core::simulator::trace::{TraceFile, TraceMeta, TRACE_VERSION};
use jcs_core::simulator::{generate_stream, CirFrame, Scenario};
use jcs_core::sync::{AnchorState, SyncConfig};
use jcs_core::tracking::{TrackLogEntry, Tracker, TrackerConfig};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Frames plus the radio description needed to interpret them.
pub struct StreamInput {
    pub frames: Vec<CirFrame>,
    pub geometry: GeometryConfig,
    pub array: ArrayModel,
    pub delta_tau: f64,
    pub packet_interval: f64,
}

impl StreamInput {
    pub fn from_trace(t: TraceFile) -> Result<Self> {
        let m = &t.meta;
        let geometry = GeometryConfig::new(m.d_los_m, m.alpha_rad, m.fc_hz)?;
        let codebook = m
            .codebook
            .iter()
            .map(|w| w.iter().map(|c| Complex64::new(c[0], c[1])).collect())
            .collect();
        Ok(Self {
            geometry,
            array: ArrayModel::from_codebook(codebook)?,
            delta_tau: m.delta_tau_s,
            packet_interval: m.packet_interval_s,
            frames: t.frames,
        })
    }

    pub fn simulate(scn: &Scenario) -> Result<Self> {
        Ok(Self {
            frames: generate_stream(scn)?,
            geometry: scn.geometry,
            array: scn.array.build()?,
            delta_tau: scn.delta_tau(),
            packet_interval: scn.packet_interval_s,
        })
    }
}

/// Trace metadata describing streams generated from `scn`.
pub fn trace_meta(scn: &Scenario) -> Result<TraceMeta> {
    let array = scn.array.build()?;
    Ok(TraceMeta {
        version: TRACE_VERSION,
        n_taps: scn.n_taps,
        n_beams: array.n_beams(),
        delta_tau_s: scn.delta_tau(),
        packet_interval_s: scn.packet_interval_s,
        fc_hz: scn.geometry.fc,
        d_los_m: scn.geometry.d_los,
        alpha_rad: scn.geometry.alpha,
        frames: scn.n_packets,
        has_truth: true,
        codebook: array
            .codebook
            .iter()
            .map(|w| w.iter().map(|x| [x.re, x.im]).collect())
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub sync: SyncConfig,
    pub tracker: TrackerConfig,
    /// STFT window and hop, packets.
    pub window: usize,
    pub hop: usize,
    /// Taps on each side of the target tap summed into the spectrogram.
    pub tap_half_width: usize,
    /// A candidate reference must be this many times stronger than the
    /// current one to take over.
    pub handover_ratio: f64,
    pub max_reference_gap: usize,
    pub mask: MaskConfig,
    /// Tracks faster than this count as moving, m/s.
    pub moving_speed: f64,
    /// Tracking steps ignored after all targets are first held.
    pub settle_steps: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sync: SyncConfig::default(),
            tracker: TrackerConfig::default(),
            window: 256,
            hop: 16,
            tap_half_width: 2,
            handover_ratio: 2.0,
            max_reference_gap: MAX_REFERENCE_GAP,
            mask: MaskConfig::default(),
            moving_speed: 0.2,
            settle_steps: 10,
        }
    }
}

/// Confirmed track as seen at one tracking step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    pub id: u32,
    pub direct: bool,
    pub position: [f64; 2],
    pub speed: f64,
    pub tap: usize,
    pub beam: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub k: u64,
    pub reference_id: Option<u32>,
    pub reference_tap: Option<usize>,
    pub reference_beam: Option<usize>,
    pub confirmed: usize,
    pub moving: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub sync_ms: f64,
    pub tracking_ms: f64,
    pub microdoppler_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMetrics {
    /// Largest change of the alignment error between consecutive packets, taps.
    pub max_timing_jump_taps: i64,
    /// Packets whose alignment error differs from the most common value.
    pub misaligned_packets: usize,
    pub track_rmse_m: Option<f64>,
    /// Fraction of scored steps with as many moving tracks as targets.
    pub track_count_accuracy: Option<f64>,
    pub scored_steps: usize,
    pub masked_rmse_median: Option<f64>,
    pub masked_rmse_mean: Option<f64>,
    pub unmasked_rmse_median: Option<f64>,
    /// Fraction of spectrogram frames whose peak lies within one bin of the
    /// true body Doppler.
    pub torso_peak_hit_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineMetrics {
    pub frames: usize,
    pub steps: usize,
    pub stage_ms: StageTimes,
    pub direct_path_corrections: usize,
    pub confirmed_tracks: usize,
    pub moving_tracks: usize,
    pub reference_handovers: usize,
    pub target_track: Option<u32>,
    pub truth: Option<TruthMetrics>,
}

pub struct PipelineOutput {
    pub offsets: Vec<i32>,
    pub track_log: Vec<TrackLogEntry>,
    pub steps: Vec<StepSummary>,
    pub step_tracks: Vec<Vec<TrackState>>,
    pub spectrogram: Option<Spectrogram>,
    pub truth_spectrogram: Option<Spectrogram>,
    pub metrics: PipelineMetrics,
}

fn stage(stage: &'static str, frame: usize) -> impl FnOnce(jcs_core::Error) -> HarnessError {
    move |source| HarnessError::Stage {
        stage,
        frame,
        source,
    }
}

/// Mean tap power per beam over a block of frames.
fn block_power(block: &[CirFrame]) -> Vec<Vec<f64>> {
    let f0 = &block[0];
    let mut p = vec![vec![0.0; f0.n_taps]; f0.n_beams];
    for f in block {
        for (b, pb) in p.iter_mut().enumerate() {
            for (acc, x) in pb.iter_mut().zip(f.beam(b)) {
                *acc += x.norm_sqr();
            }
        }
    }
    let n = block.len() as f64;
    p.iter_mut().flatten().for_each(|v| *v /= n);
    p
}

fn strongest_beam(power: &[Vec<f64>], tap: usize) -> usize {
    (0..power.len())
        .max_by(|&a, &b| power[a][tap].total_cmp(&power[b][tap]))
        .unwrap_or(0)
}

/// Keeps the current reference unless it is gone or a candidate is
/// `ratio` times stronger.
fn choose_reference(tracker: &Tracker, current: Option<u32>, ratio: f64) -> Option<u32> {
    let w = tracker.cfg.strength_window;
    let best = tracker.select_static_reference().ok();
    match (current.and_then(|id| tracker.track(id)), best) {
        (Some(cur), Some(b)) if b != cur.id => {
            let cand = tracker.track(b).expect("selected from live tracks");
            if cand.recent_magnitude(w) > ratio * cur.recent_magnitude(w) {
                Some(b)
            } else {
                Some(cur.id)
            }
        }
        (Some(cur), _) => Some(cur.id),
        (None, b) => b,
    }
}

/// Fills `None` entries from the nearest earlier entry, leading ones from
/// the first known entry.
fn fill_gaps<T: Copy>(v: &[Option<T>]) -> Option<Vec<T>> {
    let first = v.iter().flatten().next().copied()?;
    let mut last = first;
    Some(
        v.iter()
            .map(|x| {
                if let Some(x) = x {
                    last = *x;
                }
                last
            })
            .collect(),
    )
}

pub fn run_pipeline(input: &StreamInput, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let frames = &input.frames;
    let n = frames.len();
    if n == 0 {
        return Err(jcs_core::Error::InsufficientData("empty stream".into()).into());
    }
    let mut times = StageTimes::default();

    // Timing alignment, with direct-path corrections applied retroactively.
    let t0 = Instant::now();
    let mut anchor = AnchorState::new(cfg.sync);
    let mut offsets: Vec<i32> = Vec::with_capacity(n);
    let mut corrections = 0;
    for (i, f) in frames.iter().enumerate() {
        let step = anchor.push(f).map_err(stage("sync", i))?;
        if let Some(c) = step.retro_correction {
            offsets.iter_mut().for_each(|o| *o -= c);
            corrections += 1;
        }
        offsets.push(step.offset);
    }
    let aligned: Vec<CirFrame> = frames
        .iter()
        .zip(&offsets)
        .map(|(f, &o)| jcs_core::sync::shift_cir(f, o))
        .collect();
    times.sync_ms = t0.elapsed().as_secs_f64() * 1e3;

    // Tracking on block-averaged powers.
    let t0 = Instant::now();
    let d = cfg.tracker.decimation.max(1);
    let mut tracker = Tracker::new(
        cfg.tracker,
        input.geometry,
        input.array.clone(),
        input.delta_tau,
        d as f64 * input.packet_interval,
    );
    let n_steps = n / d;
    let mut track_log = Vec::new();
    let mut steps = Vec::with_capacity(n_steps);
    let mut step_tracks = Vec::with_capacity(n_steps);
    let mut ref_taps: Vec<Option<(usize, usize)>> = Vec::with_capacity(n_steps);
    let mut reference = None;
    let mut handovers = 0;
    let mut confirmed_ids = std::collections::BTreeSet::new();
    let mut moving_ids = std::collections::BTreeSet::new();
    for j in 0..n_steps {
        let block = &aligned[j * d..(j + 1) * d];
        let power = block_power(block);
        tracker.process(&power).map_err(stage("tracking", j * d))?;
        let k = block[0].k;
        track_log.extend(tracker.log(k));
        let next = choose_reference(&tracker, reference, cfg.handover_ratio);
        if reference.is_some() && next.is_some() && next != reference {
            handovers += 1;
        }
        reference = next;
        let rt = reference.and_then(|id| tracker.track(id)).map(|t| {
            let tap = t.last_tap.min(power[0].len() - 1);
            (tap, strongest_beam(&power, tap))
        });
        ref_taps.push(rt);
        let states: Vec<TrackState> = tracker
            .confirmed()
            .map(|t| {
                let (tap, beam) = tracker.tap_of(t);
                let v = t.velocity();
                TrackState {
                    id: t.id,
                    direct: t.direct,
                    position: t.position(),
                    speed: v[0].hypot(v[1]),
                    tap,
                    beam,
                }
            })
            .collect();
        let moving = states
            .iter()
            .filter(|s| !s.direct && s.speed > cfg.moving_speed)
            .count();
        for s in &states {
            confirmed_ids.insert(s.id);
            if !s.direct && s.speed > cfg.moving_speed {
                moving_ids.insert(s.id);
            }
        }
        steps.push(StepSummary {
            step: j,
            k,
            reference_id: reference,
            reference_tap: rt.map(|r| r.0),
            reference_beam: rt.map(|r| r.1),
            confirmed: states.len(),
            moving,
        });
        step_tracks.push(states);
    }
    times.tracking_ms = t0.elapsed().as_secs_f64() * 1e3;

    // Micro-Doppler of the longest-lived moving track.
    let t0 = Instant::now();
    let target = {
        let mut counts = std::collections::BTreeMap::new();
        for states in &step_tracks {
            for s in states
                .iter()
                .filter(|s| !s.direct && s.speed > cfg.moving_speed)
            {
                *counts.entry(s.id).or_insert(0usize) += 1;
            }
        }
        counts
            .into_iter()
            .max_by_key(|&(id, c)| (c, std::cmp::Reverse(id)))
            .map(|(id, _)| id)
    };
    let mut spec = None;
    let mut truth_spec = None;
    let mut torso_hit_rate = None;
    let has_truth = aligned.iter().all(|f| f.truth.is_some());
    if let (Some(id), Some(refs)) = (target, fill_gaps(&ref_taps)) {
        if n < cfg.window {
            return Err(HarnessError::Stage {
                stage: "microdoppler",
                frame: n,
                source: jcs_core::Error::InsufficientData(format!(
                    "{n} packets, window needs {}",
                    cfg.window
                )),
            });
        }
        let target_steps: Vec<Option<(usize, usize, [f64; 2])>> = step_tracks
            .iter()
            .map(|st| {
                st.iter()
                    .find(|s| s.id == id)
                    .map(|s| (s.tap, s.beam, s.position))
            })
            .collect();
        let target_taps = fill_gaps(&target_steps).expect("target seen at least once");
        let step_of = |k: usize| (k / d).min(n_steps - 1);

        // Reference phase with continuity across handovers.
        let mut ref_series = Vec::with_capacity(n);
        let mut corr = Complex64::new(1.0, 0.0);
        let mut prev: Option<(usize, usize)> = None;
        for (k, f) in aligned.iter().enumerate() {
            let (l, b) = refs[step_of(k)];
            if let Some((pl, pb)) = prev.filter(|&p| p != (l, b)) {
                let old = f.tap(pb, pl) * corr;
                let new = f.tap(b, l);
                if old.norm() > 0.0 && new.norm() > 0.0 {
                    corr = old / old.norm() * (new / new.norm()).conj();
                }
            }
            prev = Some((l, b));
            ref_series.push(f.tap(b, l) * corr);
        }

        let w = cfg.window;
        let n_frames = (n - w) / cfg.hop + 1;
        let mut rows = Vec::with_capacity(n_frames);
        let mut truth_rows = Vec::with_capacity(n_frames);
        let mut freqs = Vec::new();
        let mut frame_times = Vec::with_capacity(n_frames);
        let mut hits = 0usize;
        for fi in 0..n_frames {
            let s = fi * cfg.hop;
            let centre = s + w / 2;
            let (lc, bc, track_pos) = target_taps[step_of(centre)];
            let (taps, _) = tap_window(lc, cfg.tap_half_width, aligned[0].n_taps);
            let mut row = vec![0.0; w];
            let mut truth_row = vec![0.0; w];
            for l in taps {
                let x: Vec<Complex64> = aligned[s..s + w].iter().map(|f| f.tap(bc, l)).collect();
                let cleaned = remove_cfo(&x, &ref_series[s..s + w], cfg.max_reference_gap)
                    .map_err(stage("microdoppler", s))?;
                let sp = spectrogram(&cleaned.values, w, w, input.packet_interval)
                    .map_err(stage("microdoppler", s))?;
                row.iter_mut().zip(&sp.power[0]).for_each(|(a, v)| *a += v);
                if freqs.is_empty() {
                    freqs = sp.freqs.clone();
                }
                if has_truth {
                    let xt: Vec<Complex64> = x
                        .iter()
                        .zip(&aligned[s..s + w])
                        .map(|(v, f)| {
                            v * Complex64::from_polar(
                                1.0,
                                -f.truth.as_ref().expect("checked").cfo_phase,
                            )
                        })
                        .collect();
                    let st = spectrogram(&xt, w, w, input.packet_interval)
                        .map_err(stage("microdoppler", s))?;
                    truth_row
                        .iter_mut()
                        .zip(&st.power[0])
                        .for_each(|(a, v)| *a += v);
                }
            }
            if has_truth {
                if let Some(f_true) = body_doppler(&aligned, centre, track_pos, input) {
                    let peak = (0..w)
                        .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                        .unwrap_or(0);
                    let bin = 1.0 / (w as f64 * input.packet_interval);
                    if (freqs[peak] - f_true).abs() <= bin {
                        hits += 1;
                    }
                }
            }
            rows.push(row);
            truth_rows.push(truth_row);
            frame_times.push(aligned[s].t + (w as f64 - 1.0) / 2.0 * input.packet_interval);
        }
        let make = |power| Spectrogram {
            power,
            freqs: freqs.clone(),
            times: frame_times.clone(),
            window: w,
            hop: cfg.hop,
        };
        spec = Some(make(rows));
        if has_truth {
            truth_spec = Some(make(truth_rows));
            torso_hit_rate = Some(hits as f64 / n_frames as f64);
        }
    }
    times.microdoppler_ms = t0.elapsed().as_secs_f64() * 1e3;

    let truth = if has_truth {
        let mut m = score_tracking(&aligned, &offsets, &step_tracks, d, cfg);
        if let (Some(s), Some(t)) = (&spec, &truth_spec) {
            let r = masked_rmse(s, t, &cfg.mask)?;
            m.masked_rmse_median = Some(r.median());
            m.masked_rmse_mean = Some(r.mean());
            m.unmasked_rmse_median = Some(r.unmasked_median());
        }
        m.torso_peak_hit_rate = torso_hit_rate;
        Some(m)
    } else {
        None
    };

    Ok(PipelineOutput {
        offsets,
        track_log,
        steps,
        step_tracks,
        spectrogram: spec,
        truth_spectrogram: truth_spec,
        metrics: PipelineMetrics {
            frames: n,
            steps: n_steps,
            stage_ms: times,
            direct_path_corrections: corrections,
            confirmed_tracks: confirmed_ids.len(),
            moving_tracks: moving_ids.len(),
            reference_handovers: handovers,
            target_track: target,
            truth,
        },
    })
}

/// True Doppler of the target nearest to `near` at packet `k`, from a
/// central difference of the recorded positions.
fn body_doppler(frames: &[CirFrame], k: usize, near: [f64; 2], input: &StreamInput) -> Option<f64> {
    if k == 0 || k + 1 >= frames.len() {
        return None;
    }
    let pos = |f: &CirFrame| {
        f.truth
            .as_ref()
            .map(|t| t.targets.clone())
            .unwrap_or_default()
    };
    let (a, c, b) = (pos(&frames[k - 1]), pos(&frames[k]), pos(&frames[k + 1]));
    let i = (0..c.len()).min_by(|&i, &j| dist(c[i], near).total_cmp(&dist(c[j], near)))?;
    let dt = frames[k + 1].t - frames[k - 1].t;
    let v = [(b[i][0] - a[i][0]) / dt, (b[i][1] - a[i][1]) / dt];
    Some(doppler_from_motion(c[i], v, &input.geometry))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Alignment and tracking scores against the recorded truth.
fn score_tracking(
    aligned: &[CirFrame],
    offsets: &[i32],
    step_tracks: &[Vec<TrackState>],
    d: usize,
    cfg: &PipelineConfig,
) -> TruthMetrics {
    let err: Vec<i64> = aligned
        .iter()
        .zip(offsets)
        .map(|(f, &o)| o as i64 - f.truth.as_ref().map_or(0.0, |t| t.to_samples).round() as i64)
        .collect();
    let max_jump = err
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .max()
        .unwrap_or(0);
    let mut counts = std::collections::BTreeMap::new();
    for e in &err {
        *counts.entry(*e).or_insert(0usize) += 1;
    }
    let mode = counts
        .iter()
        .max_by_key(|(_, c)| **c)
        .map(|(e, _)| *e)
        .unwrap_or(0);
    let misaligned = err.iter().filter(|&&e| e != mode).count();

    // Match each true target to the nearest moving track within a metre.
    const MATCH_RADIUS: f64 = 1.0;
    let mut first_held = None;
    let mut per_step = Vec::with_capacity(step_tracks.len());
    for (j, states) in step_tracks.iter().enumerate() {
        let centre = (j * d + d / 2).min(aligned.len() - 1);
        let targets = aligned[centre]
            .truth
            .as_ref()
            .map(|t| t.targets.clone())
            .unwrap_or_default();
        let moving: Vec<&TrackState> = states
            .iter()
            .filter(|s| !s.direct && s.speed > cfg.moving_speed)
            .collect();
        let errors: Vec<Option<f64>> = targets
            .iter()
            .map(|&p| {
                moving
                    .iter()
                    .map(|s| dist(s.position, p))
                    .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.min(e))))
                    .filter(|&e| e < MATCH_RADIUS)
            })
            .collect();
        if first_held.is_none() && errors.iter().all(Option::is_some) {
            first_held = Some(j);
        }
        per_step.push((moving.len() == targets.len(), errors));
    }
    let start = first_held.map(|j| j + cfg.settle_steps);
    let scored: &[(bool, Vec<Option<f64>>)] = match start {
        Some(s) if s < per_step.len() => &per_step[s..],
        _ => &[],
    };
    let sq: Vec<f64> = scored
        .iter()
        .flat_map(|(_, e)| e.iter().flatten().map(|v| v * v))
        .collect();
    TruthMetrics {
        max_timing_jump_taps: max_jump,
        misaligned_packets: misaligned,
        track_rmse_m: (!sq.is_empty()).then(|| (sq.iter().sum::<f64>() / sq.len() as f64).sqrt()),
        track_count_accuracy: (!scored.is_empty())
            .then(|| scored.iter().filter(|(ok, _)| *ok).count() as f64 / scored.len() as f64),
        scored_steps: scored.len(),
        masked_rmse_median: None,
        masked_rmse_mean: None,
        unmasked_rmse_median: None,
        torso_peak_hit_rate: None,
    }
}
