//! Monte-Carlo sweeps over independent random scenes: timing-offset error,
//! residual carrier offset and ambiguity-function statistics.

use crate::error::Result;
use jcs_core::geometry::wrap_angle;
use jcs_core::microdoppler::{remove_cfo, residual_cfo_std_hz};
use jcs_core::simulator::{
    sample_random_scene, Blockage, Scenario, SceneRanges, StreamGenerator, ToModel,
};
use jcs_core::sync::{
    ambiguity_function, beam_offset, mainlobe_width, power_profile, shift_cir, sidelobe_floor,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Decay constant, packets, of the direct-path fade in LOS/NLOS draws.
const NLOS_DECAY: f64 = 20.0;
/// Largest direct-path attenuation exponent in LOS/NLOS draws.
const NLOS_MAX_EXPONENT: f64 = 5.0;
/// Lag search half-width of the single-pair TO estimate, taps.
pub const SEARCH_RANGE: i32 = 64;
/// Lags kept in the ambiguity-function summary, taps.
pub const AF_MAX_LAG: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// Unobstructed direct path.
    Los,
    /// Direct path attenuated by a random factor `exp(-u)`, `u ~ U[0, 5]`.
    LosNlos,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::Los, Condition::LosNlos];
}

/// Seed of realization `r` in a run seeded with `seed`.
pub fn realization_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(r as u64)
}

/// Timing-offset model of `base` re-expressed in taps at `bandwidth_hz`. The
/// offset is a clock error in seconds, so its span in taps grows with the
/// bandwidth.
pub fn to_model_for_bandwidth(base: &Scenario, bandwidth_hz: f64) -> ToModel {
    let scale = bandwidth_hz / base.bandwidth_hz;
    match base.offsets.to {
        ToModel::Uniform { max_taps } => ToModel::Uniform {
            max_taps: max_taps * scale,
        },
        ToModel::RandomWalk {
            step_std_taps,
            max_taps,
        } => ToModel::RandomWalk {
            step_std_taps: step_std_taps * scale,
            max_taps: max_taps * scale,
        },
        ToModel::None => ToModel::None,
    }
}

/// Random scene of one realization, with the generator advanced to the first
/// packet that will be used.
pub fn realization(
    base: &Scenario,
    seed: u64,
    condition: Condition,
    snr_db: f64,
    bandwidth_hz: f64,
) -> Result<StreamGenerator> {
    let mut b = base.clone();
    b.snr_db = snr_db;
    b.bandwidth_hz = bandwidth_hz;
    b.offsets.to = to_model_for_bandwidth(base, bandwidth_hz);
    let mut scn = sample_random_scene(seed, &SceneRanges::default(), &b)?;
    let mut start = 0;
    if condition == Condition::LosNlos {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_b10c);
        let u: f64 = rng.gen_range(0.0..NLOS_MAX_EXPONENT);
        scn.blockage.push(Blockage {
            start_k: 0,
            end_k: u64::MAX,
            decay: NLOS_DECAY,
        });
        start = (u * NLOS_DECAY).round() as u64;
    }
    let mut gen = StreamGenerator::new(&scn)?;
    gen.advance(start);
    Ok(gen)
}

fn profile(frame: &jcs_core::simulator::CirFrame) -> Vec<f64> {
    power_profile(frame).into_iter().map(f64::sqrt).collect()
}

/// Error, seconds, of one single-pair TO estimate: the previous packet is
/// aligned with its true (rounded) offset and the current one is estimated
/// against it.
pub fn to_error(gen: &mut StreamGenerator) -> Result<f64> {
    let prev = gen.next_frame()?.frame;
    let cur = gen.next_frame()?.frame;
    let dtau = gen.scenario().delta_tau();
    let prev_to = prev.truth.as_ref().map_or(0.0, |t| t.to_samples);
    let cur_to = cur.truth.as_ref().map_or(0.0, |t| t.to_samples);
    let reference = shift_cir(&prev, prev_to.round() as i32);
    let (rho, _) = beam_offset(&profile(&cur), &profile(&reference), SEARCH_RANGE)
        .ok_or_else(|| jcs_core::Error::NoSignal(format!("packet {} has no energy", cur.k)))?;
    Ok((rho as f64 - cur_to) * dtau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToPoint {
    pub condition: Condition,
    pub snr_db: f64,
    pub bandwidth_ghz: f64,
    pub realizations: usize,
    pub rmse_ns: f64,
    pub delta_tau_ns: f64,
    /// Realizations whose error exceeds one tap.
    pub gross_errors: usize,
}

pub fn to_point(
    base: &Scenario,
    seed: u64,
    realizations: usize,
    condition: Condition,
    snr_db: f64,
    bandwidth_hz: f64,
) -> Result<ToPoint> {
    let errors = (0..realizations)
        .into_par_iter()
        .map(|r| {
            let mut gen = realization(
                base,
                realization_seed(seed, r),
                condition,
                snr_db,
                bandwidth_hz,
            )?;
            to_error(&mut gen)
        })
        .collect::<Result<Vec<f64>>>()?;
    let dtau = 1.0 / bandwidth_hz;
    let mse = errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64;
    Ok(ToPoint {
        condition,
        snr_db,
        bandwidth_ghz: bandwidth_hz / 1e9,
        realizations,
        rmse_ns: mse.sqrt() * 1e9,
        delta_tau_ns: dtau * 1e9,
        gross_errors: errors.iter().filter(|e| e.abs() > dtau).count(),
    })
}

/// Residual carrier phase after dividing by the chosen reference tap, and
/// the direct-to-reference power ratio of that tap.
pub fn cfo_residual(gen: &mut StreamGenerator, condition: Condition) -> Result<(f64, f64)> {
    let g = gen.next_frame()?;
    let f = &g.frame;
    let (beam, tap) = match condition {
        Condition::Los => {
            let to = f.truth.as_ref().map_or(0.0, |t| t.to_samples);
            (
                gen.array().best_beam(gen.scenario().geometry.alpha),
                to.round() as usize,
            )
        }
        // Strongest observed tap stands in for the strongest static path.
        Condition::LosNlos => {
            let i = (0..f.taps.len())
                .max_by(|&a, &b| f.taps[a].norm_sqr().total_cmp(&f.taps[b].norm_sqr()))
                .unwrap_or(0);
            (i / f.n_taps, i % f.n_taps)
        }
    };
    let noisy = f.tap(beam, tap);
    let clean = g.clean.tap(beam, tap);
    // Unit phasor of the true reference; a tap without any path has an
    // arbitrary true phase.
    let truth = if clean.norm() > 0.0 {
        clean / clean.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let out = remove_cfo(&[truth], &[noisy], 0)?;
    let residual = wrap_angle(-out.values[0].arg());
    let ratio = 1.0 / clean.norm_sqr().max(1e-300);
    Ok((residual, ratio))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfoPoint {
    pub condition: Condition,
    pub snr_db: f64,
    pub bandwidth_ghz: f64,
    pub realizations: usize,
    pub std_hz: f64,
    /// Closed-form prediction for a unit-amplitude reference.
    pub predicted_los_hz: f64,
    /// Median direct-to-reference power ratio, dB.
    pub median_reference_ratio_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfoSample {
    pub condition: Condition,
    pub snr_db: f64,
    pub bandwidth_ghz: f64,
    pub realization: usize,
    pub residual_hz: f64,
}

pub fn cfo_point(
    base: &Scenario,
    seed: u64,
    realizations: usize,
    condition: Condition,
    snr_db: f64,
    bandwidth_hz: f64,
) -> Result<(CfoPoint, Vec<CfoSample>)> {
    let res = (0..realizations)
        .into_par_iter()
        .map(|r| {
            let mut gen = realization(
                base,
                realization_seed(seed, r),
                condition,
                snr_db,
                bandwidth_hz,
            )?;
            cfo_residual(&mut gen, condition)
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let t = base.packet_interval_s;
    let hz: Vec<f64> = res.iter().map(|(p, _)| p / (2.0 * PI * t)).collect();
    let mean = hz.iter().sum::<f64>() / hz.len() as f64;
    let var = hz.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (hz.len().max(2) - 1) as f64;
    let mut ratios: Vec<f64> = res.iter().map(|(_, q)| *q).collect();
    ratios.sort_by(f64::total_cmp);
    let point = CfoPoint {
        condition,
        snr_db,
        bandwidth_ghz: bandwidth_hz / 1e9,
        realizations,
        std_hz: var.sqrt(),
        predicted_los_hz: residual_cfo_std_hz(
            10f64.powf(snr_db / 10.0),
            base.pilot_len as f64,
            1.0,
            t,
        ),
        median_reference_ratio_db: 10.0 * ratios[ratios.len() / 2].log10(),
    };
    let samples = hz
        .into_iter()
        .enumerate()
        .map(|(realization, residual_hz)| CfoSample {
            condition,
            snr_db,
            bandwidth_ghz: bandwidth_hz / 1e9,
            realization,
            residual_hz,
        })
        .collect();
    Ok((point, samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfRecord {
    pub condition: Condition,
    pub realization: usize,
    pub peak_lag_taps: i64,
    pub width_taps: f64,
    pub sidelobe_floor: f64,
}

/// Ambiguity function of one packet's per-beam magnitude profiles, cut to
/// `-AF_MAX_LAG..=AF_MAX_LAG`.
pub fn af_realization(gen: &mut StreamGenerator) -> Result<(Vec<f64>, i64, f64, f64)> {
    let f = gen.next_frame()?.frame;
    let af = ambiguity_function(&f.magnitudes())?;
    let c = af.len() / 2;
    let peak = (0..af.len())
        .max_by(|&a, &b| af[a].total_cmp(&af[b]).then(b.cmp(&a)))
        .unwrap_or(c) as i64
        - c as i64;
    let width = mainlobe_width(&af);
    let floor = sidelobe_floor(&af, AF_MAX_LAG);
    let lo = c.saturating_sub(AF_MAX_LAG);
    let hi = (c + AF_MAX_LAG + 1).min(af.len());
    let mut cut = vec![0.0; 2 * AF_MAX_LAG + 1];
    for (i, v) in af[lo..hi].iter().enumerate() {
        cut[i + AF_MAX_LAG - (c - lo)] = *v;
    }
    Ok((cut, peak, width, floor))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfCurvePoint {
    pub condition: Condition,
    pub lag_taps: i64,
    pub lag_ns: f64,
    pub p10: f64,
    pub median: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfSummary {
    pub condition: Condition,
    pub realizations: usize,
    pub peak_at_zero: f64,
    /// Fraction with a half-power width of at most two taps.
    pub narrow_mainlobe: f64,
    pub median_sidelobe_floor: f64,
}

pub struct AfStudy {
    pub records: Vec<AfRecord>,
    pub curves: Vec<AfCurvePoint>,
    pub summary: Vec<AfSummary>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

pub fn af_study(base: &Scenario, seed: u64, realizations: usize) -> Result<AfStudy> {
    let mut records = Vec::new();
    let mut curves = Vec::new();
    let mut summary = Vec::new();
    let dtau = base.delta_tau();
    for condition in Condition::ALL {
        let res = (0..realizations)
            .into_par_iter()
            .map(|r| {
                let mut gen = realization(
                    base,
                    realization_seed(seed, r),
                    condition,
                    base.snr_db,
                    base.bandwidth_hz,
                )?;
                af_realization(&mut gen)
            })
            .collect::<Result<Vec<_>>>()?;
        for lag in 0..=2 * AF_MAX_LAG {
            let mut v: Vec<f64> = res.iter().map(|(c, ..)| c[lag]).collect();
            v.sort_by(f64::total_cmp);
            let l = lag as i64 - AF_MAX_LAG as i64;
            curves.push(AfCurvePoint {
                condition,
                lag_taps: l,
                lag_ns: l as f64 * dtau * 1e9,
                p10: quantile(&v, 0.1),
                median: quantile(&v, 0.5),
                p90: quantile(&v, 0.9),
            });
        }
        let n = res.len() as f64;
        let mut floors: Vec<f64> = res.iter().map(|r| r.3).collect();
        floors.sort_by(f64::total_cmp);
        let m = floors.len();
        summary.push(AfSummary {
            condition,
            realizations,
            peak_at_zero: res.iter().filter(|r| r.1 == 0).count() as f64 / n,
            narrow_mainlobe: res.iter().filter(|r| r.2 <= 2.0).count() as f64 / n,
            median_sidelobe_floor: if m % 2 == 1 {
                floors[m / 2]
            } else {
                0.5 * (floors[m / 2 - 1] + floors[m / 2])
            },
        });
        records.extend(res.into_iter().enumerate().map(
            |(realization, (_, peak, width, floor))| AfRecord {
                condition,
                realization,
                peak_lag_taps: peak,
                width_taps: width,
                sidelobe_floor: floor,
            },
        ));
    }
    Ok(AfStudy {
        records,
        curves,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::sweep_base;

    #[test]
    fn realizations_are_reproducible() {
        let base = sweep_base();
        let a = to_point(&base, 3, 20, Condition::LosNlos, 0.0, 1.76e9).unwrap();
        let b = to_point(&base, 3, 20, Condition::LosNlos, 0.0, 1.76e9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_to_error_is_the_rounding_residual() {
        let base = sweep_base();
        for r in 0..20 {
            let mut gen = realization(&base, r, Condition::Los, 200.0, 1.76e9).unwrap();
            let e = to_error(&mut gen).unwrap() * 1.76e9;
            assert!(e.abs() <= 0.5 + 1e-9, "realization {r}: {e} taps");
        }
    }

    #[test]
    fn offset_span_is_fixed_in_seconds() {
        let base = sweep_base();
        for bw in [0.35e9, 1.76e9, 3.52e9] {
            let ToModel::Uniform { max_taps } = to_model_for_bandwidth(&base, bw) else {
                panic!("uniform model expected");
            };
            assert!((max_taps / bw - 20.0 / 1.76e9).abs() < 1e-21);
        }
    }

    #[test]
    fn noiseless_cfo_residual_is_zero() {
        let base = sweep_base();
        for cond in Condition::ALL {
            let mut gen = realization(&base, 5, cond, 300.0, 1.76e9).unwrap();
            let (res, _) = cfo_residual(&mut gen, cond).unwrap();
            assert!(res.abs() < 1e-9);
        }
    }

    #[test]
    fn single_path_af_is_a_delta() {
        let mut base = sweep_base();
        base.snr_db = 300.0;
        let scn = Scenario {
            scatterers: vec![],
            ..base
        };
        let mut gen = StreamGenerator::new(&scn).unwrap();
        let (cut, peak, width, _) = af_realization(&mut gen).unwrap();
        assert_eq!(peak, 0);
        assert!((cut[AF_MAX_LAG] - 1.0).abs() < 1e-12);
        assert!(cut[AF_MAX_LAG + 1] < 1e-12);
        assert!(width <= 1.0 + 1e-12);
    }
}
