//! Reflector detection (CA-CFAR), angle-of-departure estimation, bistatic
//! localization and multi-target EKF tracking with static-reference selection.

use crate::error::{Error, Result};
use crate::geometry::{self, ArrayModel, GeometryConfig, SPEED_OF_LIGHT};
use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfarConfig {
    /// Training cells per side.
    pub train: usize,
    /// Guard cells per side.
    pub guard: usize,
    /// Threshold multiplier on the training-cell mean.
    pub scale: f64,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self {
            train: 16,
            guard: 4,
            scale: 8.0,
        }
    }
}

/// Cell-averaging CFAR on a power profile. Cells near the edges use the
/// training cells that exist. Runs of adjacent detections collapse to their
/// strongest cell.
pub fn cfar_detect(power: &[f64], cfg: &CfarConfig) -> Vec<usize> {
    let n = power.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, p) in power.iter().enumerate() {
        prefix[i + 1] = prefix[i] + p;
    }
    let sum = |a: usize, b: usize| prefix[b] - prefix[a];
    let mut hits = Vec::new();
    for (i, &p) in power.iter().enumerate() {
        let lo_end = i.saturating_sub(cfg.guard);
        let lo_start = i.saturating_sub(cfg.guard + cfg.train);
        let hi_start = (i + cfg.guard + 1).min(n);
        let hi_end = (i + cfg.guard + cfg.train + 1).min(n);
        let cells = (lo_end - lo_start) + (hi_end - hi_start);
        if cells == 0 {
            continue;
        }
        let mean = (sum(lo_start, lo_end) + sum(hi_start, hi_end)) / cells as f64;
        if p > cfg.scale * mean && p > 0.0 {
            hits.push(i);
        }
    }
    merge_adjacent(&hits, power)
}

fn merge_adjacent(hits: &[usize], power: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < hits.len() {
        let mut j = i;
        while j + 1 < hits.len() && hits[j + 1] == hits[j] + 1 {
            j += 1;
        }
        let best = (i..=j)
            .map(|t| hits[t])
            .max_by(|&a, &b| power[a].total_cmp(&power[b]))
            .expect("non-empty run");
        out.push(best);
        i = j + 1;
    }
    out
}

/// Candidate departure angles for one detection: local maxima of
/// `sum_b g_b(theta) r_b^2 / |r|^2` above `threshold_ratio` times the maximum,
/// on a grid over `[-90, 90]` degrees.
pub fn estimate_aod(
    amplitudes: &[f64],
    array: &ArrayModel,
    grid_step_deg: f64,
    threshold_ratio: f64,
) -> Result<Vec<f64>> {
    if amplitudes.len() != array.n_beams() {
        return Err(Error::Config(format!(
            "{} beam amplitudes for {} beams",
            amplitudes.len(),
            array.n_beams()
        )));
    }
    let norm: f64 = amplitudes.iter().map(|r| r * r).sum();
    if norm <= 0.0 {
        return Err(Error::NoSignal("detection without energy".into()));
    }
    let n = (180.0 / grid_step_deg).round() as usize + 1;
    let grid: Vec<f64> = (0..n)
        .map(|i| (-90.0 + i as f64 * grid_step_deg).to_radians())
        .collect();
    let score: Vec<f64> = grid
        .iter()
        .map(|&t| {
            array
                .gains(t)
                .iter()
                .zip(amplitudes)
                .map(|(g, r)| g * r * r)
                .sum::<f64>()
                / norm
        })
        .collect();
    let max = score.iter().cloned().fold(f64::MIN, f64::max);
    let min = score.iter().cloned().fold(f64::MAX, f64::min);
    if max - min <= 1e-9 * max.abs().max(1e-300) {
        return Err(Error::DegenerateGeometry(
            "isotropic codebook gives no angular information".into(),
        ));
    }
    let thr = threshold_ratio * max;
    let mut out = Vec::new();
    for i in 0..n {
        let left = if i > 0 { score[i - 1] } else { f64::MIN };
        let right = if i + 1 < n { score[i + 1] } else { f64::MIN };
        if score[i] > thr && score[i] >= left && score[i] > right {
            out.push(grid[i]);
        }
    }
    Ok(out)
}

/// Position measurement of one reflector: TX range and azimuth (TX frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub d_tx: f64,
    pub azimuth: f64,
    pub tap: usize,
    /// Root of the beam-summed peak power.
    pub magnitude: f64,
    /// Zero-delay detection, placed at the receiver.
    pub direct: bool,
}

impl Measurement {
    pub fn position(&self) -> [f64; 2] {
        [
            self.d_tx * self.azimuth.cos(),
            self.d_tx * self.azimuth.sin(),
        ]
    }
}

/// One CFAR hit with the per-beam amplitudes at its tap.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub tap: usize,
    pub amplitudes: Vec<f64>,
}

/// Per-beam CFAR on `power[b][l]`, union over beams, adjacent hits merged on
/// the beam-summed power.
pub fn detect(power: &[Vec<f64>], cfg: &CfarConfig) -> Vec<Detection> {
    let n = power.first().map(Vec::len).unwrap_or(0);
    let mut total = vec![0.0; n];
    let mut any = vec![false; n];
    for p in power {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
        for i in cfar_detect(p, cfg) {
            any[i] = true;
        }
    }
    let hits: Vec<usize> = (0..n).filter(|&i| any[i]).collect();
    merge_adjacent(&hits, &total)
        .into_iter()
        .map(|tap| Detection {
            tap,
            amplitudes: power.iter().map(|p| p[tap].sqrt()).collect(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AodConfig {
    pub grid_step_deg: f64,
    pub threshold_ratio: f64,
}

impl Default for AodConfig {
    fn default() -> Self {
        Self {
            grid_step_deg: 0.5,
            threshold_ratio: 0.7,
        }
    }
}

/// Turns detections into `(d_tx, azimuth)` measurements. Zero-delay hits map
/// to the receiver position; degenerate angle/delay pairs are dropped.
pub fn form_measurements(
    detections: &[Detection],
    geom: &GeometryConfig,
    array: &ArrayModel,
    delta_tau: f64,
    aod: &AodConfig,
) -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    for d in detections {
        let magnitude = d.amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
        if d.tap == 0 {
            out.push(Measurement {
                d_tx: geom.d_los,
                azimuth: geom.alpha,
                tap: 0,
                magnitude,
                direct: true,
            });
            continue;
        }
        let tau = d.tap as f64 * delta_tau;
        for az in estimate_aod(&d.amplitudes, array, aod.grid_step_deg, aod.threshold_ratio)? {
            let theta = geom.baseline_angle(az);
            if let Ok(d_tx) = geometry::dtx_from_delay(tau, theta, geom) {
                out.push(Measurement {
                    d_tx,
                    azimuth: az,
                    tap: d.tap,
                    magnitude,
                    direct: false,
                });
            }
        }
    }
    Ok(out)
}

/// Constant-velocity EKF over `[x, y, vx, vy]` with range/azimuth updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Ekf {
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
}

impl Ekf {
    pub fn from_measurement(z: &Measurement, r: &Matrix2<f64>, speed_std: f64) -> Self {
        let pos = z.position();
        let (s, c) = z.azimuth.sin_cos();
        // Polar-to-Cartesian covariance.
        let j = Matrix2::new(c, -z.d_tx * s, s, z.d_tx * c);
        let pc = j * r * j.transpose();
        let mut p = Matrix4::zeros();
        p.fixed_view_mut::<2, 2>(0, 0).copy_from(&pc);
        p[(2, 2)] = speed_std * speed_std;
        p[(3, 3)] = speed_std * speed_std;
        Self {
            x: Vector4::new(pos[0], pos[1], 0.0, 0.0),
            p,
        }
    }

    pub fn predict(&mut self, dt: f64, q: f64) {
        let mut f = Matrix4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let (d2, d3) = (dt * dt / 2.0, dt * dt * dt / 3.0);
        let qm = Matrix4::new(
            d3, 0.0, d2, 0.0, //
            0.0, d3, 0.0, d2, //
            d2, 0.0, dt, 0.0, //
            0.0, d2, 0.0, dt,
        ) * q;
        self.x = f * self.x;
        self.p = f * self.p * f.transpose() + qm;
    }

    pub fn predicted_measurement(&self) -> Vector2<f64> {
        Vector2::new(self.x[0].hypot(self.x[1]), self.x[1].atan2(self.x[0]))
    }

    /// Measurement Jacobian; `None` at the origin.
    pub fn jacobian(&self) -> Option<Matrix2x4<f64>> {
        let (x, y) = (self.x[0], self.x[1]);
        let r2 = x * x + y * y;
        if r2 < 1e-12 {
            return None;
        }
        let r = r2.sqrt();
        Some(Matrix2x4::new(
            x / r,
            y / r,
            0.0,
            0.0, //
            -y / r2,
            x / r2,
            0.0,
            0.0,
        ))
    }

    /// Innovation (angle wrapped) and its covariance.
    pub fn innovation(
        &self,
        z: &Measurement,
        r: &Matrix2<f64>,
    ) -> Option<(Vector2<f64>, Matrix2<f64>)> {
        let h = self.jacobian()?;
        let zp = self.predicted_measurement();
        let nu = Vector2::new(z.d_tx - zp[0], geometry::wrap_angle(z.azimuth - zp[1]));
        let s = h * self.p * h.transpose() + r;
        Some((nu, s))
    }

    /// Squared Mahalanobis distance; `None` when the innovation covariance
    /// is singular.
    pub fn mahalanobis(&self, z: &Measurement, r: &Matrix2<f64>) -> Option<f64> {
        let (nu, s) = self.innovation(z, r)?;
        let si = s.try_inverse()?;
        Some((nu.transpose() * si * nu)[0])
    }

    /// Measurement update. Returns `false` (state untouched) when the
    /// innovation covariance cannot be inverted.
    pub fn update(&mut self, z: &Measurement, r: &Matrix2<f64>) -> bool {
        let Some(h) = self.jacobian() else {
            return false;
        };
        let Some((nu, s)) = self.innovation(z, r) else {
            return false;
        };
        if s.determinant().abs() < 1e-30 {
            return false;
        }
        let Some(si) = s.try_inverse() else {
            return false;
        };
        let k = self.p * h.transpose() * si;
        self.x += k * nu;
        let ikh = Matrix4::identity() - k * h;
        // Joseph form keeps P symmetric positive semi-definite.
        self.p = ikh * self.p * ikh.transpose() + k * r * k.transpose();
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Deleted,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u32,
    pub status: TrackStatus,
    pub filter: Ekf,
    /// Hit/miss outcomes of the most recent steps.
    hits: VecDeque<bool>,
    pub misses: usize,
    pub positions: VecDeque<[f64; 2]>,
    pub magnitudes: VecDeque<f64>,
    /// Initiated from a zero-delay detection.
    pub direct: bool,
    pub last_tap: usize,
}

impl Track {
    pub fn position(&self) -> [f64; 2] {
        [self.filter.x[0], self.filter.x[1]]
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.filter.x[2], self.filter.x[3]]
    }

    /// Per-axis position variance over the stored history.
    pub fn position_variance(&self) -> [f64; 2] {
        let n = self.positions.len() as f64;
        if n < 2.0 {
            return [f64::INFINITY; 2];
        }
        let mut out = [0.0; 2];
        for (axis, o) in out.iter_mut().enumerate() {
            let mean = self.positions.iter().map(|p| p[axis]).sum::<f64>() / n;
            *o = self
                .positions
                .iter()
                .map(|p| (p[axis] - mean).powi(2))
                .sum::<f64>()
                / n;
        }
        out
    }

    pub fn recent_magnitude(&self, window: usize) -> f64 {
        let n = self.magnitudes.len().min(window);
        if n == 0 {
            return 0.0;
        }
        self.magnitudes.iter().rev().take(n).sum::<f64>() / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub cfar: CfarConfig,
    pub aod: AodConfig,
    /// Chi-square gate, 2 dof.
    pub gate: f64,
    pub confirm_hits: usize,
    pub confirm_window: usize,
    pub max_misses: usize,
    pub tentative_max_misses: usize,
    /// White-acceleration spectral density, m^2/s^3.
    pub process_noise: f64,
    pub init_speed_std: f64,
    /// Steps of position history used for static-reference selection.
    pub history: usize,
    pub min_history: usize,
    /// Per-axis variance limit for a static reference, m^2.
    pub static_variance: f64,
    /// Steps averaged when ranking reference strength.
    pub strength_window: usize,
    /// Packets per tracking step.
    pub decimation: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            cfar: CfarConfig::default(),
            aod: AodConfig::default(),
            gate: 9.21,
            confirm_hits: 3,
            confirm_window: 5,
            max_misses: 10,
            tentative_max_misses: 3,
            process_noise: 0.5,
            init_speed_std: 2.0,
            history: 100,
            min_history: 20,
            static_variance: 0.005,
            strength_window: 8,
            decimation: 32,
        }
    }
}

/// One line of the track log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackLogEntry {
    pub k: u64,
    pub id: u32,
    pub status: TrackStatus,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub l_hat: usize,
    pub b_hat: usize,
}

/// Delay tap and best beam of a tracked position.
pub fn map_track_to_tap(
    pos: [f64; 2],
    geom: &GeometryConfig,
    array: &ArrayModel,
    delta_tau: f64,
) -> (usize, usize) {
    let az = pos[1].atan2(pos[0]);
    let theta = geom.baseline_angle(az);
    let d_tx = pos[0].hypot(pos[1]);
    let d = geom.d_los;
    let d_rx = (d_tx * d_tx + d * d - 2.0 * d_tx * d * theta.cos())
        .max(0.0)
        .sqrt();
    let tau = ((d_tx + d_rx - d) / SPEED_OF_LIGHT).max(0.0);
    ((tau / delta_tau).round() as usize, array.best_beam(az))
}

pub struct Tracker {
    pub cfg: TrackerConfig,
    pub geom: GeometryConfig,
    pub array: ArrayModel,
    pub delta_tau: f64,
    /// Seconds between steps.
    pub dt: f64,
    pub tracks: Vec<Track>,
    next_id: u32,
    r: Matrix2<f64>,
}

impl Tracker {
    pub fn new(
        cfg: TrackerConfig,
        geom: GeometryConfig,
        array: ArrayModel,
        delta_tau: f64,
        dt: f64,
    ) -> Self {
        let sd = SPEED_OF_LIGHT * delta_tau / 2.0;
        let sa = array.half_beamwidth();
        Self {
            cfg,
            geom,
            array,
            delta_tau,
            dt,
            tracks: Vec::new(),
            next_id: 0,
            r: Matrix2::new(sd * sd, 0.0, 0.0, sa * sa),
        }
    }

    pub fn measurement_noise(&self) -> Matrix2<f64> {
        self.r
    }

    /// Detection, localization and one filter step on averaged tap powers.
    pub fn process(&mut self, power: &[Vec<f64>]) -> Result<Vec<Measurement>> {
        let det = detect(power, &self.cfg.cfar);
        let meas = form_measurements(&det, &self.geom, &self.array, self.delta_tau, &self.cfg.aod)?;
        self.step(&meas);
        Ok(meas)
    }

    /// Predict, gate, associate greedily and manage track lifecycles.
    pub fn step(&mut self, meas: &[Measurement]) {
        let dt = self.dt;
        let q = self.cfg.process_noise;
        for t in &mut self.tracks {
            t.filter.predict(dt, q);
        }
        let r = self.r;
        let mut pairs = Vec::new();
        let mut gated = vec![false; meas.len()];
        for (ti, t) in self.tracks.iter().enumerate() {
            for (mi, z) in meas.iter().enumerate() {
                if z.direct != t.direct {
                    continue;
                }
                if let Some(d2) = t.filter.mahalanobis(z, &r) {
                    if d2 < self.cfg.gate {
                        pairs.push((d2, ti, mi));
                        gated[mi] = true;
                    }
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut track_used = vec![false; self.tracks.len()];
        let mut meas_used = vec![false; meas.len()];
        for (_, ti, mi) in pairs {
            if track_used[ti] || meas_used[mi] {
                continue;
            }
            track_used[ti] = true;
            meas_used[mi] = true;
            let t = &mut self.tracks[ti];
            let z = &meas[mi];
            // A singular innovation freezes the state for this step.
            t.filter.update(z, &r);
            t.magnitudes.push_back(z.magnitude);
            t.last_tap = z.tap;
        }
        let cfg = self.cfg;
        for (t, &hit) in self.tracks.iter_mut().zip(&track_used) {
            t.hits.push_back(hit);
            while t.hits.len() > cfg.confirm_window {
                t.hits.pop_front();
            }
            t.misses = if hit { 0 } else { t.misses + 1 };
            if !hit {
                t.magnitudes.push_back(0.0);
            }
            while t.magnitudes.len() > cfg.history {
                t.magnitudes.pop_front();
            }
            t.positions.push_back(t.position());
            while t.positions.len() > cfg.history {
                t.positions.pop_front();
            }
            match t.status {
                TrackStatus::Tentative => {
                    if t.hits.iter().filter(|&&h| h).count() >= cfg.confirm_hits {
                        t.status = TrackStatus::Confirmed;
                    } else if t.misses >= cfg.tentative_max_misses {
                        t.status = TrackStatus::Deleted;
                    }
                }
                TrackStatus::Confirmed => {
                    if t.misses >= cfg.max_misses {
                        t.status = TrackStatus::Deleted;
                    }
                }
                TrackStatus::Deleted => {}
            }
        }
        self.tracks.retain(|t| t.status != TrackStatus::Deleted);
        for (mi, z) in meas.iter().enumerate() {
            if meas_used[mi] || gated[mi] {
                continue;
            }
            let filter = Ekf::from_measurement(z, &r, cfg.init_speed_std);
            let mut hits = VecDeque::new();
            hits.push_back(true);
            self.tracks.push(Track {
                id: self.next_id,
                status: TrackStatus::Tentative,
                filter,
                hits,
                misses: 0,
                positions: VecDeque::from([z.position()]),
                magnitudes: VecDeque::from([z.magnitude]),
                direct: z.direct,
                last_tap: z.tap,
            });
            self.next_id += 1;
        }
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &Track> {
        self.tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed)
    }

    pub fn track(&self, id: u32) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    /// Confirmed, currently detected track with low position spread and the
    /// largest recent peak magnitude.
    pub fn select_static_reference(&self) -> Result<u32> {
        let cfg = &self.cfg;
        self.confirmed()
            .filter(|t| t.misses == 0 && t.positions.len() >= cfg.min_history)
            .filter(|t| {
                let v = t.position_variance();
                v[0] < cfg.static_variance && v[1] < cfg.static_variance
            })
            .max_by(|a, b| {
                a.recent_magnitude(cfg.strength_window)
                    .total_cmp(&b.recent_magnitude(cfg.strength_window))
            })
            .map(|t| t.id)
            .ok_or(Error::NoStaticReference)
    }

    pub fn tap_of(&self, track: &Track) -> (usize, usize) {
        map_track_to_tap(track.position(), &self.geom, &self.array, self.delta_tau)
    }

    pub fn log(&self, k: u64) -> Vec<TrackLogEntry> {
        self.tracks
            .iter()
            .map(|t| {
                let (l_hat, b_hat) = self.tap_of(t);
                TrackLogEntry {
                    k,
                    id: t.id,
                    status: t.status,
                    x: t.filter.x[0],
                    y: t.filter.x[1],
                    vx: t.filter.x[2],
                    vy: t.filter.x[3],
                    l_hat,
                    b_hat,
                }
            })
            .collect()
    }
}
