//! Experiment drivers around `jcs_core`: Monte-Carlo sweeps, the offline
//! stream pipeline, built-in scenes and output writers.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod pipeline;
pub mod scenarios;
pub mod sweeps;

pub use error::{HarnessError, Result};

use jcs_core::overhead::{OverheadCurve, REFERENCE_OVERHEAD};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub mcs: String,
    pub psdu_kb: u32,
    pub n: u32,
    pub reported_pct: f64,
    pub model_pct: f64,
    pub rel_err: f64,
}

/// Model overhead against every reported point, fitting each curve from its
/// single-unit value.
pub fn overhead_table() -> Result<Vec<OverheadRow>> {
    let mut rows = Vec::new();
    for (mcs, kb, pts) in REFERENCE_OVERHEAD {
        let curve = OverheadCurve::fit(1, pts[0])?;
        for (i, &reported) in pts.iter().enumerate() {
            let n = i as u32 + 1;
            let model = curve.overhead_pct(n);
            rows.push(OverheadRow {
                mcs: mcs.to_string(),
                psdu_kb: kb,
                n,
                reported_pct: reported,
                model_pct: model,
                rel_err: (model - reported).abs() / reported,
            });
        }
    }
    Ok(rows)
}
