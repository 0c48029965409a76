//! Experiment configuration, read from TOML.

use crate::error::{HarnessError, Result};
use crate::pipeline::PipelineConfig;
use jcs_core::simulator::Scenario;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Realizations per point for desk-scale runs.
pub const DESK_REALIZATIONS: usize = 1_000;
/// Realizations per point with `full_scale`.
pub const FULL_REALIZATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ToSweep,
    CfoSweep,
    BwSweep,
    AfStudy,
    MudDemo,
    TrackDemo,
    Overhead,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ToSweep => "to-sweep",
            Experiment::CfoSweep => "cfo-sweep",
            Experiment::BwSweep => "bw-sweep",
            Experiment::AfStudy => "af-study",
            Experiment::MudDemo => "mud-demo",
            Experiment::TrackDemo => "track-demo",
            Experiment::Overhead => "overhead",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub realizations: usize,
    /// Overrides `realizations` with [`FULL_REALIZATIONS`].
    pub full_scale: bool,
    pub snr_db: Vec<f64>,
    pub bandwidth_ghz: Vec<f64>,
    /// SNR of the bandwidth sweeps, dB.
    pub bandwidth_snr_db: f64,
    /// Partial scenario merged over the experiment's base scene.
    pub scenario: Value,
    pub pipeline: PipelineConfig,
    /// Not part of the hashed configuration.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::ToSweep,
            seed: 1,
            realizations: DESK_REALIZATIONS,
            full_scale: false,
            snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            bandwidth_ghz: vec![0.35, 0.88, 1.76, 3.52],
            bandwidth_snr_db: 5.0,
            scenario: Value::Object(Default::default()),
            pipeline: PipelineConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn realization_count(&self) -> usize {
        if self.full_scale {
            FULL_REALIZATIONS
        } else {
            self.realizations
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realization_count() == 0 {
            return Err(HarnessError::Config("realizations must be positive".into()));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(HarnessError::Config(
                "SNR grid must be non-empty and finite".into(),
            ));
        }
        if self.bandwidth_ghz.is_empty()
            || self
                .bandwidth_ghz
                .iter()
                .any(|b| !(*b > 0.0 && b.is_finite()))
        {
            return Err(HarnessError::Config(
                "bandwidth grid must be non-empty and positive".into(),
            ));
        }
        if !self.bandwidth_snr_db.is_finite() {
            return Err(HarnessError::Config(
                "bandwidth-sweep SNR must be finite".into(),
            ));
        }
        let p = &self.pipeline;
        if p.window == 0 || p.hop == 0 || p.tracker.decimation == 0 {
            return Err(HarnessError::Config(
                "window, hop and decimation must be positive".into(),
            ));
        }
        if !self.scenario.is_object() {
            return Err(HarnessError::Config(
                "scenario overrides must be a table".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config is serializable");
        hex::encode(Sha256::digest(bytes))
    }

    /// `base` with the configured overrides applied.
    pub fn scenario_over(&self, base: &Scenario) -> Result<Scenario> {
        apply_overrides(base, &self.scenario)
    }
}

/// Deep-merges `src` into `dst`; tables merge key by key, anything else is
/// replaced.
pub fn merge(dst: &mut Value, src: &Value) {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                match d.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        d.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (d, s) => *d = s.clone(),
    }
}

/// Deep-merges `overrides` into the serialized `base` and validates the result.
pub fn apply_overrides(base: &Scenario, overrides: &Value) -> Result<Scenario> {
    let mut v = serde_json::to_value(base)?;
    merge(&mut v, overrides);
    let scn: Scenario =
        serde_json::from_value(v).map_err(|e| HarnessError::Config(format!("scenario: {e}")))?;
    scn.validate()?;
    Ok(scn)
}

/// Reads a scenario override file (TOML, any subset of scenario fields).
pub fn read_overrides(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)?;
    Ok(toml::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_overrides_keep_other_fields() {
        let base = Scenario::default();
        let over: Value = toml::from_str("snr_db = 3.0\n[geometry]\nd_los = 6.0\n").unwrap();
        let s = apply_overrides(&base, &over).unwrap();
        assert_eq!(s.snr_db, 3.0);
        assert_eq!(s.geometry.d_los, 6.0);
        assert_eq!(s.geometry.fc, base.geometry.fc);
        assert_eq!(s.n_taps, base.n_taps);
    }

    #[test]
    fn bad_override_is_a_config_error() {
        let over: Value = toml::from_str("bandwidth_hz = -1.0").unwrap();
        let e = apply_overrides(&Scenario::default(), &over).unwrap_err();
        assert_eq!(e.category(), "config");
        let over: Value = toml::from_str("n_taps = \"many\"").unwrap();
        assert_eq!(
            apply_overrides(&Scenario::default(), &over)
                .unwrap_err()
                .category(),
            "config"
        );
    }

    #[test]
    fn config_round_trips_and_hash_is_stable() {
        let cfg: ExperimentConfig = toml::from_str(
            "experiment = \"cfo-sweep\"\nseed = 9\nsnr_db = [0.0, 10.0]\n[scenario]\nn_taps = 64\n",
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.experiment, Experiment::CfoSweep);
        assert_eq!(cfg.realization_count(), DESK_REALIZATIONS);
        assert_eq!(cfg.hash(), cfg.clone().hash());
        let mut other = cfg.clone();
        other.seed = 10;
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn empty_grid_is_rejected() {
        let cfg = ExperimentConfig {
            snr_db: vec![],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
