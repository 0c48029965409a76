//! Experiment runners writing their results into an output directory.

use crate::config::{Experiment, ExperimentConfig};
use crate::error::Result;
use crate::output::{Manifest, OutputDir};
use crate::pipeline::{run_pipeline, trace_meta, PipelineConfig, PipelineOutput, StreamInput};
use crate::scenarios;
use crate::sweeps::{af_study, cfo_point, to_point, CfoPoint, CfoSample, Condition, ToPoint};
use jcs_core::simulator::trace::write_trace;
use jcs_core::simulator::{generate_stream, Scenario};
use serde::Serialize;

/// Stem of the trace written by `simulate`.
pub const TRACE_STEM: &str = "trace";

pub fn to_snr_sweep(cfg: &ExperimentConfig, base: &Scenario) -> Result<Vec<ToPoint>> {
    let mut rows = Vec::new();
    for cond in Condition::ALL {
        for &snr in &cfg.snr_db {
            rows.push(to_point(
                base,
                cfg.seed,
                cfg.realization_count(),
                cond,
                snr,
                base.bandwidth_hz,
            )?);
        }
    }
    Ok(rows)
}

pub fn to_bandwidth_sweep(cfg: &ExperimentConfig, base: &Scenario) -> Result<Vec<ToPoint>> {
    let mut rows = Vec::new();
    for cond in Condition::ALL {
        for &bw in &cfg.bandwidth_ghz {
            rows.push(to_point(
                base,
                cfg.seed,
                cfg.realization_count(),
                cond,
                cfg.bandwidth_snr_db,
                bw * 1e9,
            )?);
        }
    }
    Ok(rows)
}

pub fn cfo_snr_sweep(
    cfg: &ExperimentConfig,
    base: &Scenario,
) -> Result<(Vec<CfoPoint>, Vec<CfoSample>)> {
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for cond in Condition::ALL {
        for &snr in &cfg.snr_db {
            let (p, s) = cfo_point(
                base,
                cfg.seed,
                cfg.realization_count(),
                cond,
                snr,
                base.bandwidth_hz,
            )?;
            rows.push(p);
            samples.extend(s);
        }
    }
    Ok((rows, samples))
}

pub fn cfo_bandwidth_sweep(cfg: &ExperimentConfig, base: &Scenario) -> Result<Vec<CfoPoint>> {
    let mut rows = Vec::new();
    for cond in Condition::ALL {
        for &bw in &cfg.bandwidth_ghz {
            let (p, _) = cfo_point(
                base,
                cfg.seed,
                cfg.realization_count(),
                cond,
                cfg.bandwidth_snr_db,
                bw * 1e9,
            )?;
            rows.push(p);
        }
    }
    Ok(rows)
}

/// Writes a simulated trace and returns the frames' packet count.
pub fn simulate(scn: &Scenario, out: &mut OutputDir) -> Result<usize> {
    let frames = generate_stream(scn)?;
    let stem = out.path(TRACE_STEM);
    write_trace(&stem, &trace_meta(scn)?, &frames)?;
    let (meta, data) = jcs_core::simulator::trace::trace_paths(&stem);
    for p in [meta, data] {
        if let Some(name) = p.file_name().and_then(|n| n.to_str()) {
            out.add(name);
        }
    }
    out.json("scenario.json", scn)?;
    Ok(frames.len())
}

#[derive(Serialize)]
struct OffsetRow {
    k: u64,
    offset: i32,
}

/// Runs the pipeline and writes tracks, per-step state, spectrograms and
/// metrics.
pub fn pipeline(
    input: &StreamInput,
    cfg: &PipelineConfig,
    out: &mut OutputDir,
) -> Result<PipelineOutput> {
    let res = run_pipeline(input, cfg)?;
    out.jsonl("tracks.jsonl", &res.track_log)?;
    out.csv("steps.csv", &res.steps)?;
    let offsets: Vec<OffsetRow> = input
        .frames
        .iter()
        .zip(&res.offsets)
        .map(|(f, &offset)| OffsetRow { k: f.k, offset })
        .collect();
    out.csv("offsets.csv", &offsets)?;
    if let Some(s) = &res.spectrogram {
        out.spectrogram("spectrogram", s)?;
    }
    if let Some(s) = &res.truth_spectrogram {
        out.spectrogram("truth_spectrogram", s)?;
    }
    out.json("metrics.json", &res.metrics)?;
    Ok(res)
}

/// Base scene of a sweep experiment with the configured overrides.
fn sweep_scene(cfg: &ExperimentConfig) -> Result<Scenario> {
    cfg.scenario_over(&scenarios::sweep_base())
}

/// Runs the configured experiment into `cfg.out_dir` and writes its manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let mut out = OutputDir::create(&cfg.out_dir)?;
    let mut seed = cfg.seed;
    match cfg.experiment {
        Experiment::ToSweep => {
            let base = sweep_scene(cfg)?;
            out.csv("to_sweep.csv", &to_snr_sweep(cfg, &base)?)?;
            out.csv("to_bandwidth.csv", &to_bandwidth_sweep(cfg, &base)?)?;
        }
        Experiment::CfoSweep => {
            let base = sweep_scene(cfg)?;
            let (rows, samples) = cfo_snr_sweep(cfg, &base)?;
            out.csv("cfo_sweep.csv", &rows)?;
            out.csv("cfo_residuals.csv", &samples)?;
            out.csv("cfo_bandwidth.csv", &cfo_bandwidth_sweep(cfg, &base)?)?;
        }
        Experiment::BwSweep => {
            let base = sweep_scene(cfg)?;
            out.csv("to_bandwidth.csv", &to_bandwidth_sweep(cfg, &base)?)?;
            out.csv("cfo_bandwidth.csv", &cfo_bandwidth_sweep(cfg, &base)?)?;
        }
        Experiment::AfStudy => {
            let base = sweep_scene(cfg)?;
            let study = af_study(&base, cfg.seed, cfg.realization_count())?;
            out.csv("af_records.csv", &study.records)?;
            out.csv("af_curves.csv", &study.curves)?;
            out.csv("af_summary.csv", &study.summary)?;
        }
        Experiment::MudDemo | Experiment::TrackDemo => {
            let base = if cfg.experiment == Experiment::MudDemo {
                scenarios::walker_demo()
            } else {
                scenarios::two_targets()
            };
            let scn = cfg.scenario_over(&base)?;
            seed = scn.seed;
            let input = StreamInput::simulate(&scn)?;
            out.json("scenario.json", &scn)?;
            pipeline(&input, &cfg.pipeline, &mut out)?;
        }
        Experiment::Overhead => {
            out.csv("overhead.csv", &crate::overhead_table()?)?;
        }
    }
    out.finish(cfg.experiment.name(), seed, serde_json::to_value(cfg)?)
}
