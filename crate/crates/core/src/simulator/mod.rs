//! Scene description and CIR stream generation with timing/carrier offsets,
//! blockage, beam sweeping and receiver noise.

pub mod trace;

use crate::error::{Error, Result};
use crate::geometry::{self, ArrayModel, GeometryConfig, SPEED_OF_LIGHT};
use crate::waveform::{self, GolayPair, TrnField};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScattererKind {
    Static,
    Target,
}

/// One constant-velocity leg of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    /// `None` continues indefinitely.
    #[serde(default)]
    pub duration_s: Option<f64>,
    pub velocity: [f64; 2],
}

/// Limb-like component moving sinusoidally along the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limb {
    /// Amplitude relative to the main body return.
    pub rel_amplitude: f64,
    /// Tap offset of the component from the body tap.
    pub tap_offset: i32,
    /// Peak displacement, metres.
    pub swing_m: f64,
    pub rate_hz: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    /// Position at t = 0, metres, TX frame.
    pub position: [f64; 2],
    pub rcs_dbsm: f64,
    pub kind: ScattererKind,
    /// Piecewise-constant velocity; the last leg continues indefinitely.
    #[serde(default)]
    pub trajectory: Vec<Leg>,
    /// Equal-power copies on taps `-extent..=extent` around the main tap.
    #[serde(default)]
    pub extent_taps: u32,
    #[serde(default)]
    pub limbs: Vec<Limb>,
    /// Reflection phase; drawn from the scene seed when absent.
    #[serde(default)]
    pub phase: Option<f64>,
}

impl Scatterer {
    pub fn point(position: [f64; 2], rcs_dbsm: f64) -> Self {
        Self {
            position,
            rcs_dbsm,
            kind: ScattererKind::Static,
            trajectory: Vec::new(),
            extent_taps: 0,
            limbs: Vec::new(),
            phase: None,
        }
    }

    pub fn moving(position: [f64; 2], velocity: [f64; 2], rcs_dbsm: f64) -> Self {
        Self {
            kind: ScattererKind::Target,
            trajectory: vec![Leg {
                duration_s: None,
                velocity,
            }],
            ..Self::point(position, rcs_dbsm)
        }
    }

    /// Walking body: torso return plus four limb components over +-2 taps.
    pub fn walker(position: [f64; 2], velocity: [f64; 2], rcs_dbsm: f64) -> Self {
        let limbs = [
            (-2, 0.35, 0.0),
            (-1, 0.5, PI),
            (1, 0.5, 0.5 * PI),
            (2, 0.35, 1.5 * PI),
        ]
        .into_iter()
        .map(|(tap_offset, rel_amplitude, phase)| Limb {
            rel_amplitude,
            tap_offset,
            swing_m: 0.12,
            rate_hz: 1.8,
            phase,
        })
        .collect();
        Self {
            limbs,
            ..Self::moving(position, velocity, rcs_dbsm)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-40.0..=30.0).contains(&self.rcs_dbsm) {
            return Err(Error::Config(format!(
                "RCS {} dBsm out of range",
                self.rcs_dbsm
            )));
        }
        if self.kind == ScattererKind::Static && !self.trajectory.is_empty() {
            return Err(Error::Config("static scatterer with a trajectory".into()));
        }
        let finite = self.position.iter().all(|v| v.is_finite())
            && self.trajectory.iter().all(|l| {
                l.velocity.iter().all(|v| v.is_finite()) && l.duration_s.is_none_or(|d| d >= 0.0)
            });
        if !finite {
            return Err(Error::Config("non-finite scatterer parameters".into()));
        }
        Ok(())
    }

    /// Position and velocity at time `t`.
    pub fn state_at(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        let mut p = self.position;
        let mut elapsed = 0.0;
        let mut v = [0.0, 0.0];
        for leg in &self.trajectory {
            v = leg.velocity;
            let duration = leg.duration_s.unwrap_or(f64::INFINITY);
            let dt = (t - elapsed).min(duration).max(0.0);
            p[0] += v[0] * dt;
            p[1] += v[1] * dt;
            elapsed += duration;
            if t <= elapsed {
                return (p, v);
            }
        }
        if let Some(last) = self.trajectory.last() {
            // Past the final finite leg the body keeps moving.
            let extra = t - elapsed;
            if extra > 0.0 && elapsed.is_finite() {
                p[0] += last.velocity[0] * extra;
                p[1] += last.velocity[1] * extra;
            }
        }
        (p, v)
    }
}

/// LOS attenuation event: exponential fade starting at `start_k`, exponential
/// recovery after `end_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blockage {
    pub start_k: u64,
    pub end_k: u64,
    pub decay: f64,
}

impl Blockage {
    pub fn factor(&self, k: u64) -> f64 {
        if k < self.start_k {
            1.0
        } else if k < self.end_k {
            (-((k - self.start_k) as f64) / self.decay).exp()
        } else {
            let floor = (-((self.end_k - self.start_k) as f64) / self.decay).exp();
            1.0 - (1.0 - floor) * (-((k - self.end_k) as f64) / self.decay).exp()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ToModel {
    None,
    /// Independent per packet, uniform in `[0, max_taps]` samples.
    Uniform {
        max_taps: f64,
    },
    /// Reflected random walk inside `[0, max_taps]`.
    RandomWalk {
        step_std_taps: f64,
        max_taps: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum CfoModel {
    None,
    /// Independent uniform phase in `[0, 2pi)` per packet.
    UniformPhase,
    /// Phase random walk with Gaussian steps.
    RandomWalk {
        step_std: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetProcess {
    pub to: ToModel,
    pub cfo: CfoModel,
    /// Residual frequency offset inside a packet (waveform-domain only), Hz.
    #[serde(default)]
    pub cfo_hz: f64,
}

impl Default for OffsetProcess {
    fn default() -> Self {
        Self {
            to: ToModel::Uniform { max_taps: 20.0 },
            cfo: CfoModel::RandomWalk { step_std: 0.5 },
            cfo_hz: 0.0,
        }
    }
}

/// Receiver translation; phases only, tap positions use the initial geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RxMotion {
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_elements: usize,
    pub n_beams: usize,
    pub max_angle_deg: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            n_elements: 8,
            n_beams: 12,
            max_angle_deg: 60.0,
        }
    }
}

impl ArrayConfig {
    pub fn isotropic() -> Self {
        Self {
            n_elements: 1,
            n_beams: 1,
            max_angle_deg: 0.0,
        }
    }

    pub fn build(&self) -> Result<ArrayModel> {
        ArrayModel::uniform(
            self.n_elements,
            self.n_beams,
            self.max_angle_deg.to_radians(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisMode {
    #[default]
    CirDomain,
    WaveformDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub geometry: GeometryConfig,
    pub array: ArrayConfig,
    pub scatterers: Vec<Scatterer>,
    pub los: bool,
    pub offsets: OffsetProcess,
    /// SNR of the unblocked direct path with isotropic transmission, dB.
    pub snr_db: f64,
    pub bandwidth_hz: f64,
    pub packet_interval_s: f64,
    pub n_packets: usize,
    pub n_taps: usize,
    /// Pilot symbols per beam; sets the post-correlation noise level.
    pub pilot_len: usize,
    pub blockage: Vec<Blockage>,
    pub rx_motion: Option<RxMotion>,
    pub mode: SynthesisMode,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            array: ArrayConfig::default(),
            scatterers: Vec::new(),
            los: true,
            offsets: OffsetProcess::default(),
            snr_db: 10.0,
            bandwidth_hz: 1.76e9,
            packet_interval_s: 2.7e-4,
            n_packets: 1000,
            n_taps: 128,
            pilot_len: 128,
            blockage: Vec::new(),
            rx_motion: None,
            mode: SynthesisMode::CirDomain,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn delta_tau(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) || !(self.packet_interval_s > 0.0) {
            return Err(Error::Config(
                "bandwidth and packet interval must be positive".into(),
            ));
        }
        if self.n_taps == 0 || self.pilot_len == 0 {
            return Err(Error::Config(
                "tap window and pilot length must be non-zero".into(),
            ));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("SNR must be finite".into()));
        }
        match self.offsets.to {
            ToModel::Uniform { max_taps } | ToModel::RandomWalk { max_taps, .. }
                if !(max_taps >= 0.0) || !max_taps.is_finite() =>
            {
                return Err(Error::Config(format!("TO bound {max_taps} invalid")));
            }
            _ => {}
        }
        if let CfoModel::RandomWalk { step_std } = self.offsets.cfo {
            if !(step_std >= 0.0) || !step_std.is_finite() {
                return Err(Error::Config(
                    "CFO walk step must be finite and >= 0".into(),
                ));
            }
        }
        if self
            .blockage
            .iter()
            .any(|b| !(b.decay > 0.0) || b.end_k < b.start_k)
        {
            return Err(Error::Config(
                "blockage needs decay > 0 and end >= start".into(),
            ));
        }
        GeometryConfig::new(self.geometry.d_los, self.geometry.alpha, self.geometry.fc)?;
        self.array.build()?;
        self.scatterers.iter().try_for_each(Scatterer::validate)
    }

    pub fn los_factor(&self, k: u64) -> f64 {
        if !self.los {
            return 0.0;
        }
        self.blockage.iter().map(|b| b.factor(k)).product()
    }
}

/// Amplitude of a reflection relative to the isotropic direct path, before
/// TX beam gain: `sqrt(sigma d_los^2 / (4 pi d_tx^2 d_rx^2))`.
pub fn path_amplitude(pos: [f64; 2], rcs_dbsm: f64, geom: &GeometryConfig) -> Result<f64> {
    let s = geometry::solve_position(pos, geom);
    if s.d_tx < 1e-6 || s.d_rx < 1e-6 {
        return Err(Error::DegenerateGeometry(format!(
            "scatterer at ({:.3}, {:.3}) coincides with a radio",
            pos[0], pos[1]
        )));
    }
    let sigma = 10f64.powf(rcs_dbsm / 10.0);
    let scale = geometry::cassini_snr_scale(s.d_tx, s.d_rx)?;
    Ok((sigma * geom.d_los * geom.d_los * scale / (4.0 * PI)).sqrt())
}

/// Ranges used by [`sample_random_scene`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneRanges {
    pub count: (usize, usize),
    pub distance_m: (f64, f64),
    pub rcs_dbsm: (f64, f64),
    /// Azimuth interval in the TX frame, radians.
    pub azimuth: (f64, f64),
    /// Minimum reflector-to-RX distance, metres.
    pub min_rx_distance: f64,
}

impl Default for SceneRanges {
    fn default() -> Self {
        Self {
            count: (2, 10),
            distance_m: (1.5, 10.0),
            rcs_dbsm: (-20.0, 10.0),
            azimuth: (-PI, PI),
            min_rx_distance: 0.3,
        }
    }
}

/// Static random scene: uniform count, TX distance, azimuth and RCS.
pub fn sample_random_scene(seed: u64, ranges: &SceneRanges, base: &Scenario) -> Result<Scenario> {
    if ranges.count.0 > ranges.count.1
        || !(ranges.distance_m.0 > 0.0 && ranges.distance_m.0 <= ranges.distance_m.1)
        || ranges.rcs_dbsm.0 > ranges.rcs_dbsm.1
    {
        return Err(Error::Config("invalid scene ranges".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(ranges.count.0..=ranges.count.1);
    let rx = base.geometry.rx_position();
    let mut scatterers = Vec::with_capacity(n);
    while scatterers.len() < n {
        let d = uniform(&mut rng, ranges.distance_m);
        let az = uniform(&mut rng, ranges.azimuth);
        let rcs = uniform(&mut rng, ranges.rcs_dbsm);
        let pos = [d * az.cos(), d * az.sin()];
        if (pos[0] - rx[0]).hypot(pos[1] - rx[1]) < ranges.min_rx_distance {
            continue;
        }
        let mut s = Scatterer::point(pos, rcs);
        s.phase = Some(rng.gen_range(0.0..2.0 * PI));
        scatterers.push(s);
    }
    Ok(Scenario {
        scatterers,
        los: true,
        seed,
        ..base.clone()
    })
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Simulation ground truth attached to a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    /// Timing offset, samples (fractional).
    pub to_samples: f64,
    /// Common carrier phase of the packet, radians.
    pub cfo_phase: f64,
    pub targets: Vec<[f64; 2]>,
}

/// One packet's channel estimate: `n_beams x n_taps`, beam-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CirFrame {
    pub k: u64,
    pub t: f64,
    pub n_beams: usize,
    pub n_taps: usize,
    pub taps: Vec<Complex64>,
    pub truth: Option<FrameTruth>,
}

impl CirFrame {
    pub fn zeros(k: u64, t: f64, n_beams: usize, n_taps: usize) -> Self {
        Self {
            k,
            t,
            n_beams,
            n_taps,
            taps: vec![Complex64::new(0.0, 0.0); n_beams * n_taps],
            truth: None,
        }
    }

    pub fn beam(&self, b: usize) -> &[Complex64] {
        &self.taps[b * self.n_taps..(b + 1) * self.n_taps]
    }

    pub fn beam_mut(&mut self, b: usize) -> &mut [Complex64] {
        let n = self.n_taps;
        &mut self.taps[b * n..(b + 1) * n]
    }

    pub fn tap(&self, b: usize, l: usize) -> Complex64 {
        self.taps[b * self.n_taps + l]
    }

    /// Per-beam tap magnitudes.
    pub fn magnitudes(&self) -> Vec<Vec<f64>> {
        (0..self.n_beams)
            .map(|b| self.beam(b).iter().map(|x| x.norm()).collect())
            .collect()
    }
}

/// One propagation path at a given packet.
#[derive(Debug, Clone, Copy)]
struct PathTap {
    /// Excess delay, samples.
    delay: f64,
    tap_offset: i32,
    azimuth: f64,
    /// Complex amplitude before beam gain and offsets.
    value: Complex64,
    is_los: bool,
}

/// Frame generator. Produces frames in order; Doppler and random-walk
/// offsets accumulate across calls.
pub struct StreamGenerator {
    scn: Scenario,
    array: ArrayModel,
    rng: ChaCha8Rng,
    phases: Vec<f64>,
    extent_phases: Vec<Vec<f64>>,
    to_state: f64,
    cfo_state: f64,
    next_k: u64,
    truncated: u64,
    trn: Option<TrnField>,
}

/// Frame together with its noise-free counterpart.
#[derive(Debug, Clone)]
pub struct GeneratedFrame {
    pub frame: CirFrame,
    pub clean: CirFrame,
}

impl StreamGenerator {
    pub fn new(scn: &Scenario) -> Result<Self> {
        scn.validate()?;
        let array = scn.array.build()?;
        let mut rng = ChaCha8Rng::seed_from_u64(scn.seed ^ 0x9e37_79b9_7f4a_7c15);
        let phases = scn
            .scatterers
            .iter()
            .map(|s| s.phase.unwrap_or_else(|| rng.gen_range(0.0..2.0 * PI)))
            .collect();
        let extent_phases = scn
            .scatterers
            .iter()
            .map(|s| {
                (0..2 * s.extent_taps + 1)
                    .map(|_| rng.gen_range(0.0..2.0 * PI))
                    .collect()
            })
            .collect();
        for s in &scn.scatterers {
            path_amplitude(s.position, s.rcs_dbsm, &scn.geometry)?;
        }
        let trn = match scn.mode {
            SynthesisMode::CirDomain => None,
            SynthesisMode::WaveformDomain => {
                if !scn.pilot_len.is_multiple_of(2) {
                    return Err(Error::Config("pilot length must be even".into()));
                }
                let pair = GolayPair::new(scn.pilot_len / 2)?;
                let beams: Vec<usize> = (0..array.n_beams()).collect();
                let max_to = match scn.offsets.to {
                    ToModel::None => 0.0,
                    ToModel::Uniform { max_taps } | ToModel::RandomWalk { max_taps, .. } => {
                        max_taps
                    }
                };
                let guard = scn.n_taps + max_to.ceil() as usize + 16;
                Some(TrnField::new(pair, &beams, guard)?)
            }
        };
        Ok(Self {
            scn: scn.clone(),
            array,
            rng,
            phases,
            extent_phases,
            to_state: 0.0,
            cfo_state: 0.0,
            next_k: 0,
            truncated: 0,
            trn,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scn
    }

    pub fn array(&self) -> &ArrayModel {
        &self.array
    }

    /// Path-tap placements that fell outside the window so far.
    pub fn truncated_paths(&self) -> u64 {
        self.truncated
    }

    /// Per-sample noise variance `1 / Gamma` relative to the unit direct path.
    pub fn noise_variance(&self) -> f64 {
        10f64.powf(-self.scn.snr_db / 10.0)
    }

    fn draw_offsets(&mut self) -> (f64, f64) {
        let to = match self.scn.offsets.to {
            ToModel::None => 0.0,
            ToModel::Uniform { max_taps } => {
                if max_taps > 0.0 {
                    self.rng.gen_range(0.0..max_taps)
                } else {
                    0.0
                }
            }
            ToModel::RandomWalk {
                step_std_taps,
                max_taps,
            } => {
                let step: f64 = self.rng.sample(StandardNormal);
                let mut x = self.to_state + step * step_std_taps;
                if max_taps > 0.0 {
                    let period = 2.0 * max_taps;
                    x = x.rem_euclid(period);
                    if x > max_taps {
                        x = period - x;
                    }
                } else {
                    x = 0.0;
                }
                self.to_state = x;
                x
            }
        };
        let cfo = match self.scn.offsets.cfo {
            CfoModel::None => 0.0,
            CfoModel::UniformPhase => self.rng.gen_range(0.0..2.0 * PI),
            CfoModel::RandomWalk { step_std } => {
                if self.next_k == 0 {
                    self.cfo_state = self.rng.gen_range(0.0..2.0 * PI);
                } else {
                    let n = Normal::new(0.0, step_std).expect("finite std");
                    self.cfo_state = (self.cfo_state + self.rng.sample(n)).rem_euclid(2.0 * PI);
                }
                self.cfo_state
            }
        };
        (to, cfo)
    }

    fn paths_at(&self, k: u64) -> Vec<PathTap> {
        let g = &self.scn.geometry;
        let lambda = g.wavelength();
        let t = k as f64 * self.scn.packet_interval_s;
        let dt = self.scn.delta_tau();
        let rx0 = g.rx_position();
        let rx = match self.scn.rx_motion {
            Some(m) => [rx0[0] + m.velocity[0] * t, rx0[1] + m.velocity[1] * t],
            None => rx0,
        };
        let path_phase = |p: [f64; 2]| {
            let len = p[0].hypot(p[1]) + (p[0] - rx[0]).hypot(p[1] - rx[1]);
            -2.0 * PI * len / lambda
        };
        let mut out = Vec::new();
        let los = self.scn.los_factor(k);
        if los > 0.0 {
            out.push(PathTap {
                delay: 0.0,
                tap_offset: 0,
                azimuth: g.alpha,
                value: Complex64::from_polar(los, -2.0 * PI * rx[0].hypot(rx[1]) / lambda),
                is_los: true,
            });
        }
        for (i, s) in self.scn.scatterers.iter().enumerate() {
            let (pos, vel) = s.state_at(t);
            let sol = geometry::solve_position(pos, g);
            let amp = match path_amplitude(pos, s.rcs_dbsm, g) {
                Ok(a) => a,
                Err(_) => continue,
            };
            let delay = sol.tau / dt;
            let az = pos[1].atan2(pos[0]);
            let base = self.phases[i] + path_phase(pos);
            let n_ext = 2 * s.extent_taps as usize + 1;
            let body_amp = amp / (n_ext as f64).sqrt();
            for (j, ph) in self.extent_phases[i].iter().enumerate() {
                out.push(PathTap {
                    delay,
                    tap_offset: j as i32 - s.extent_taps as i32,
                    azimuth: az,
                    value: Complex64::from_polar(body_amp, base + ph),
                    is_los: false,
                });
            }
            let speed = vel[0].hypot(vel[1]);
            let dir = if speed > 0.0 {
                [vel[0] / speed, vel[1] / speed]
            } else {
                [1.0, 0.0]
            };
            for limb in &s.limbs {
                let disp = limb.swing_m * (2.0 * PI * limb.rate_hz * t + limb.phase).sin();
                let lp = [pos[0] + dir[0] * disp, pos[1] + dir[1] * disp];
                out.push(PathTap {
                    delay,
                    tap_offset: limb.tap_offset,
                    azimuth: az,
                    value: Complex64::from_polar(
                        amp * limb.rel_amplitude,
                        self.phases[i] + path_phase(lp),
                    ),
                    is_los: false,
                });
            }
        }
        out
    }

    /// True target positions at packet `k`.
    pub fn target_positions(&self, k: u64) -> Vec<[f64; 2]> {
        let t = k as f64 * self.scn.packet_interval_s;
        self.scn
            .scatterers
            .iter()
            .filter(|s| s.kind == ScattererKind::Target)
            .map(|s| s.state_at(t).0)
            .collect()
    }

    /// Noise-free channel per beam without offsets (integer-delay taps).
    fn channel(&mut self, paths: &[PathTap], shift: i64) -> Vec<Vec<Complex64>> {
        let nb = self.array.n_beams();
        let nt = self.scn.n_taps;
        let mut h = vec![vec![Complex64::new(0.0, 0.0); nt]; nb];
        let gains: Vec<Vec<f64>> = paths.iter().map(|p| self.array.gains(p.azimuth)).collect();
        for (p, g) in paths.iter().zip(&gains) {
            let l = p.delay.round() as i64 + p.tap_offset as i64 + shift;
            if l < 0 || l >= nt as i64 {
                if !p.is_los || l >= nt as i64 {
                    self.truncated += 1;
                }
                continue;
            }
            for (b, hb) in h.iter_mut().enumerate() {
                hb[l as usize] += p.value * g[b];
            }
        }
        h
    }

    /// Skips `n` packets; offset processes still evolve through them.
    pub fn advance(&mut self, n: u64) {
        for _ in 0..n {
            self.draw_offsets();
            self.next_k += 1;
        }
    }

    pub fn next_frame(&mut self) -> Result<GeneratedFrame> {
        let k = self.next_k;
        let (to, cfo) = self.draw_offsets();
        let paths = self.paths_at(k);
        let nb = self.array.n_beams();
        let nt = self.scn.n_taps;
        let t = k as f64 * self.scn.packet_interval_s;
        let truth = FrameTruth {
            to_samples: to,
            cfo_phase: cfo,
            targets: self.target_positions(k),
        };
        let rot = Complex64::from_polar(1.0, cfo);
        let shifted = self.channel(&paths, to.round() as i64);
        let mut clean = CirFrame::zeros(k, t, nb, nt);
        for (b, hb) in shifted.iter().enumerate() {
            for (dst, src) in clean.beam_mut(b).iter_mut().zip(hb) {
                *dst = src * rot;
            }
        }
        clean.truth = Some(truth.clone());
        let noise_var = self.noise_variance();
        let mut frame = match (&self.trn, self.scn.mode) {
            (Some(trn), SynthesisMode::WaveformDomain) => {
                let trn = trn.clone();
                let base = self.channel(&paths, 0);
                let step = 2.0 * PI * self.scn.offsets.cfo_hz * self.scn.delta_tau();
                let y = waveform::synthesize_rx_stream(
                    &base,
                    &trn,
                    to,
                    cfo,
                    step,
                    noise_var,
                    &mut self.rng,
                )?;
                let est = waveform::estimate_cir(&y, &trn, nb, nt)?;
                let mut f = CirFrame::zeros(k, t, nb, nt);
                for (b, hb) in est.iter().enumerate() {
                    f.beam_mut(b).copy_from_slice(hb);
                }
                f
            }
            _ => {
                let mut f = clean.clone();
                let sigma = (noise_var / self.scn.pilot_len as f64 / 2.0).sqrt();
                for x in f.taps.iter_mut() {
                    let re: f64 = self.rng.sample(StandardNormal);
                    let im: f64 = self.rng.sample(StandardNormal);
                    *x += Complex64::new(re, im) * sigma;
                }
                f
            }
        };
        frame.truth = Some(truth);
        self.next_k += 1;
        Ok(GeneratedFrame { frame, clean })
    }
}

/// Generates `scn.n_packets` frames.
pub fn generate_stream(scn: &Scenario) -> Result<Vec<CirFrame>> {
    let mut gen = StreamGenerator::new(scn)?;
    (0..scn.n_packets)
        .map(|_| gen.next_frame().map(|g| g.frame))
        .collect()
}

/// Excess delay of a point reflector, in samples.
pub fn excess_delay_samples(pos: [f64; 2], geom: &GeometryConfig, delta_tau: f64) -> f64 {
    let s = geometry::solve_position(pos, geom);
    (s.d_tx + s.d_rx - geom.d_los) / SPEED_OF_LIGHT / delta_tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quiet(scatterers: Vec<Scatterer>) -> Scenario {
        Scenario {
            scatterers,
            offsets: OffsetProcess {
                to: ToModel::None,
                cfo: CfoModel::None,
                cfo_hz: 0.0,
            },
            snr_db: 300.0,
            n_packets: 5,
            ..Scenario::default()
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let base = Scenario::default();
        let a = sample_random_scene(7, &SceneRanges::default(), &base).unwrap();
        let b = sample_random_scene(7, &SceneRanges::default(), &base).unwrap();
        assert_eq!(a, b);
        assert!(a.los);
    }

    #[test]
    fn scene_ranges_hold() {
        let base = Scenario::default();
        let mut counts = [0usize; 11];
        for seed in 0..2000 {
            let s = sample_random_scene(seed, &SceneRanges::default(), &base).unwrap();
            counts[s.scatterers.len()] += 1;
            for sc in &s.scatterers {
                let d = sc.position[0].hypot(sc.position[1]);
                assert!((1.5..=10.0).contains(&d));
                assert!((-20.0..=10.0).contains(&sc.rcs_dbsm));
            }
        }
        assert!(counts[..2].iter().all(|&c| c == 0));
        // 2000 / 9 ~ 222 each; sd ~ 14
        assert!(
            counts[2..].iter().all(|&c| (150..300).contains(&c)),
            "{counts:?}"
        );
    }

    #[test]
    fn amplitude_distance_and_rcs_laws() {
        let g = GeometryConfig::new(4.0, 0.0, 60e9).unwrap();
        let a = path_amplitude([0.0, 3.0], 0.0, &g).unwrap();
        let b = path_amplitude([0.0, 3.0], 10.0, &g).unwrap();
        assert_relative_eq!(b * b / (a * a), 10.0, max_relative = 1e-12);
        assert!(matches!(
            path_amplitude([4.0, 0.0], 0.0, &g),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(
            path_amplitude([0.0, 0.0], 0.0, &g),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn static_noiseless_frames_are_identical() {
        let scn = quiet(vec![Scatterer::point([2.0, 2.0], 0.0)]);
        let mut gen = StreamGenerator::new(&scn).unwrap();
        let first = gen.next_frame().unwrap().clean;
        for _ in 0..4 {
            assert_eq!(gen.next_frame().unwrap().clean.taps, first.taps);
        }
    }

    #[test]
    fn blockage_fades_direct_path() {
        let b = Blockage {
            start_k: 10,
            end_k: 200,
            decay: 8.0,
        };
        let mut prev = 1.0;
        for k in 10..200 {
            let f = b.factor(k);
            assert!(f <= prev);
            prev = f;
        }
        assert!(b.factor(10 + 40) < 0.01);
        assert!(b.factor(1000) > 0.99);
    }

    #[test]
    fn walker_trajectory_is_linear() {
        let w = Scatterer::walker([1.0, 2.0], [0.5, -0.25], -3.0);
        let (p, v) = w.state_at(2.0);
        assert_relative_eq!(p[0], 2.0);
        assert_relative_eq!(p[1], 1.5);
        assert_eq!(v, [0.5, -0.25]);
    }

    #[test]
    fn piecewise_legs_accumulate() {
        let mut s = Scatterer::point([0.0, 1.0], 0.0);
        s.kind = ScattererKind::Target;
        s.trajectory = vec![
            Leg {
                duration_s: Some(1.0),
                velocity: [1.0, 0.0],
            },
            Leg {
                duration_s: Some(2.0),
                velocity: [0.0, 1.0],
            },
        ];
        assert_eq!(s.state_at(0.5).0, [0.5, 1.0]);
        assert_eq!(s.state_at(2.0).0, [1.0, 2.0]);
        assert_eq!(s.state_at(5.0).0, [1.0, 5.0]);
    }
}
