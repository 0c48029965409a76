//! Bistatic geometry: phased-array model, delay/angle to position, Doppler and
//! resolution relations.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Transmitter at the origin, receiver at `d_los * (cos alpha, sin alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    /// TX-RX baseline length, metres.
    pub d_los: f64,
    /// Angle of the receiver in the transmitter frame, radians.
    pub alpha: f64,
    /// Carrier frequency, Hz.
    pub fc: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            d_los: 4.0,
            alpha: -PI / 4.0,
            fc: 60e9,
        }
    }
}

impl GeometryConfig {
    pub fn new(d_los: f64, alpha: f64, fc: f64) -> Result<Self> {
        if !(d_los > 0.0) || !(fc > 0.0) || !alpha.is_finite() {
            return Err(Error::Config(format!(
                "invalid geometry d_los={d_los} alpha={alpha} fc={fc}"
            )));
        }
        Ok(Self { d_los, alpha, fc })
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    pub fn rx_position(&self) -> [f64; 2] {
        [self.d_los * self.alpha.cos(), self.d_los * self.alpha.sin()]
    }

    /// Angle between the baseline and the direction `azimuth` (TX frame), in `[0, pi]`.
    pub fn baseline_angle(&self, azimuth: f64) -> f64 {
        wrap_angle(azimuth - self.alpha).abs()
    }
}

/// Wrap to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Uniform linear array with half-wavelength spacing and a beam codebook.
#[derive(Debug, Clone)]
pub struct ArrayModel {
    pub n_elements: usize,
    /// Unit-norm beamforming vectors.
    pub codebook: Vec<Vec<Complex64>>,
}

/// Steering vector `[1, e^{-j pi sin(theta)}, ...]`.
pub fn steering_vector(n_elements: usize, theta: f64) -> Vec<Complex64> {
    let s = theta.sin();
    (0..n_elements)
        .map(|m| Complex64::from_polar(1.0, -(m as f64) * PI * s))
        .collect()
}

impl ArrayModel {
    /// `n_beams` beams uniformly spaced in `sin(theta)` over `[-max_angle, max_angle]`.
    pub fn uniform(n_elements: usize, n_beams: usize, max_angle: f64) -> Result<Self> {
        if n_elements == 0 || n_beams == 0 {
            return Err(Error::Config("array needs elements and beams".into()));
        }
        let smax = max_angle.sin();
        let codebook = (0..n_beams)
            .map(|b| {
                let s = if n_beams == 1 {
                    0.0
                } else {
                    -smax + 2.0 * smax * b as f64 / (n_beams - 1) as f64
                };
                let v = steering_vector(n_elements, s.asin());
                let norm = (n_elements as f64).sqrt();
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        Ok(Self {
            n_elements,
            codebook,
        })
    }

    /// Twelve beams over +-60 degrees on an 8-element array.
    pub fn default_codebook() -> Self {
        Self::uniform(8, 12, PI / 3.0).expect("valid defaults")
    }

    /// Single isotropic element and beam.
    pub fn isotropic() -> Self {
        Self {
            n_elements: 1,
            codebook: vec![vec![Complex64::new(1.0, 0.0)]],
        }
    }

    pub fn from_codebook(codebook: Vec<Vec<Complex64>>) -> Result<Self> {
        let n = codebook.first().map(Vec::len).unwrap_or(0);
        if n == 0 || codebook.iter().any(|w| w.len() != n) {
            return Err(Error::Config(
                "codebook rows must share a non-zero length".into(),
            ));
        }
        Ok(Self {
            n_elements: n,
            codebook,
        })
    }

    pub fn n_beams(&self) -> usize {
        self.codebook.len()
    }

    /// Amplitude gain `|a(theta)^H w_b|`.
    pub fn gain(&self, beam: usize, theta: f64) -> f64 {
        let a = steering_vector(self.n_elements, theta);
        a.iter()
            .zip(&self.codebook[beam])
            .map(|(x, w)| x.conj() * w)
            .sum::<Complex64>()
            .norm()
    }

    pub fn gains(&self, theta: f64) -> Vec<f64> {
        (0..self.n_beams()).map(|b| self.gain(b, theta)).collect()
    }

    /// Beam with the largest gain towards `theta`.
    pub fn best_beam(&self, theta: f64) -> usize {
        let g = self.gains(theta);
        (0..g.len())
            .max_by(|&i, &j| g[i].total_cmp(&g[j]))
            .unwrap_or(0)
    }

    /// Main-lobe half-power half-width at broadside, radians.
    pub fn half_beamwidth(&self) -> f64 {
        // 0.886 / M in sin-space for half-wavelength spacing, halved.
        (0.886 / self.n_elements as f64).min(1.0).asin()
    }
}

/// TX-target distance from excess delay `tau` and baseline angle `theta`.
pub fn dtx_from_delay(tau: f64, theta: f64, geom: &GeometryConfig) -> Result<f64> {
    let d = geom.d_los;
    let r = SPEED_OF_LIGHT * tau + d;
    let den = 2.0 * (r - d * theta.cos());
    if !(den > 1e-12 * d) {
        return Err(Error::DegenerateGeometry(format!(
            "tau={tau:e} theta={theta} puts the reflector on the baseline"
        )));
    }
    Ok((r * r - d * d) / den)
}

/// Range and angle relations of one reflector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BistaticSolution {
    pub d_tx: f64,
    pub d_rx: f64,
    /// Bistatic angle at the reflector.
    pub beta: f64,
    /// Excess delay over the direct path, seconds.
    pub tau: f64,
}

/// Completes the triangle from `d_tx` and the baseline angle `theta`.
pub fn solve_bistatic(d_tx: f64, theta: f64, geom: &GeometryConfig) -> BistaticSolution {
    let d = geom.d_los;
    let d_rx = (d_tx * d_tx + d * d - 2.0 * d_tx * d * theta.cos())
        .max(0.0)
        .sqrt();
    let beta = if d_tx > 0.0 && d_rx > 0.0 {
        ((d_tx * d_tx + d_rx * d_rx - d * d) / (2.0 * d_tx * d_rx))
            .clamp(-1.0, 1.0)
            .acos()
    } else {
        0.0
    };
    BistaticSolution {
        d_tx,
        d_rx,
        beta,
        tau: (d_tx + d_rx - d) / SPEED_OF_LIGHT,
    }
}

/// Bistatic geometry of a point given in TX Cartesian coordinates.
pub fn solve_position(pos: [f64; 2], geom: &GeometryConfig) -> BistaticSolution {
    let d_tx = pos[0].hypot(pos[1]);
    let theta = geom.baseline_angle(pos[1].atan2(pos[0]));
    solve_bistatic(d_tx, theta, geom)
}

/// Doppler shift of a reflector moving at `speed` with angle `gamma` between
/// its velocity and the bistatic bisector.
pub fn bistatic_doppler(speed: f64, gamma: f64, beta: f64, geom: &GeometryConfig) -> f64 {
    2.0 * speed / geom.wavelength() * gamma.cos() * (beta / 2.0).cos()
}

/// Doppler of a reflector at `pos` moving with `vel`, from the rate of change
/// of the bistatic path length. Positive when the path shortens.
pub fn doppler_from_motion(pos: [f64; 2], vel: [f64; 2], geom: &GeometryConfig) -> f64 {
    let rx = geom.rx_position();
    let d_tx = pos[0].hypot(pos[1]);
    let d_rx = (pos[0] - rx[0]).hypot(pos[1] - rx[1]);
    if d_tx == 0.0 || d_rx == 0.0 {
        return 0.0;
    }
    let rate = (pos[0] * vel[0] + pos[1] * vel[1]) / d_tx
        + ((pos[0] - rx[0]) * vel[0] + (pos[1] - rx[1]) * vel[1]) / d_rx;
    -rate / geom.wavelength()
}

/// Bistatic range resolution `c dtau / (2 cos(beta/2))`.
pub fn range_resolution(beta: f64, delta_tau: f64) -> Result<f64> {
    let c = (beta / 2.0).cos();
    if !(c > 1e-12) {
        return Err(Error::DegenerateGeometry(format!(
            "no range resolution at bistatic angle {beta}"
        )));
    }
    Ok(SPEED_OF_LIGHT * delta_tau / (2.0 * c))
}

/// Excess-path length spanned by one delay bin, `c dtau`.
pub fn path_bin_length(delta_tau: f64) -> f64 {
    SPEED_OF_LIGHT * delta_tau
}

/// Two-way path-loss scaling `1 / (d_tx d_rx)^2`.
pub fn cassini_snr_scale(d_tx: f64, d_rx: f64) -> Result<f64> {
    if !(d_tx > 0.0 && d_rx > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "zero distance in path loss (d_tx={d_tx}, d_rx={d_rx})"
        )));
    }
    Ok(1.0 / (d_tx * d_rx).powi(2))
}
