use clap::{Args, Parser, Subcommand};
use jcs_core::simulator::trace::read_trace;
use jcs_harness::config::{merge, read_overrides, Experiment, ExperimentConfig};
use jcs_harness::experiments::{self, run_experiment};
use jcs_harness::output::OutputDir;
use jcs_harness::pipeline::StreamInput;
use jcs_harness::{scenarios, HarnessError, Result};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "jcs",
    version,
    about = "Bistatic CIR simulation, synchronization and sensing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// Experiment config (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Use the full-scale realization count.
    #[arg(long)]
    full_scale: bool,
    /// Comma-separated SNR grid, dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Vec<f64>,
    /// Comma-separated bandwidth grid, GHz.
    #[arg(long, value_delimiter = ',')]
    bandwidth_ghz: Vec<f64>,
    /// Scenario overrides (TOML).
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene and write it as a trace.
    Simulate {
        /// Built-in scene to start from.
        #[arg(long, default_value = "walker")]
        demo: String,
        #[command(flatten)]
        common: Common,
    },
    /// Timing-offset error against SNR and bandwidth.
    ToSweep(Common),
    /// Residual carrier-offset spread against SNR and bandwidth.
    CfoSweep(Common),
    /// Ambiguity-function statistics.
    AfStudy(Common),
    /// Sync, tracking and micro-Doppler over a trace or a simulated scene.
    Pipeline {
        /// Trace stem or file to process; a scene is simulated when absent.
        trace: Option<PathBuf>,
        #[arg(long, default_value = "walker")]
        demo: String,
        #[command(flatten)]
        common: Common,
    },
    /// Training overhead model against the reported table.
    Overhead(Common),
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn build_config(experiment: Experiment, c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_toml_file(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.experiment = experiment;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(r) = c.realizations {
        cfg.realizations = r;
    }
    cfg.full_scale |= c.full_scale;
    if !c.snr_db.is_empty() {
        cfg.snr_db = c.snr_db.clone();
    }
    if !c.bandwidth_ghz.is_empty() {
        cfg.bandwidth_ghz = c.bandwidth_ghz.clone();
    }
    if let Some(p) = &c.scenario {
        merge(&mut cfg.scenario, &read_overrides(p)?);
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn demo_scene(name: &str) -> Result<jcs_core::simulator::Scenario> {
    scenarios::by_name(name).ok_or_else(|| {
        HarnessError::Config(format!(
            "unknown scene '{name}', expected one of {:?}",
            scenarios::NAMES
        ))
    })
}

/// Demo scene with overrides; `--seed` and a single `--snr-db` apply to it.
fn scene_for(
    demo: &str,
    c: &Common,
    cfg: &mut ExperimentConfig,
) -> Result<jcs_core::simulator::Scenario> {
    if let Some(s) = c.seed {
        merge(&mut cfg.scenario, &serde_json::json!({ "seed": s }));
    }
    if let [snr] = c.snr_db[..] {
        merge(&mut cfg.scenario, &serde_json::json!({ "snr_db": snr }));
    }
    cfg.scenario_over(&demo_scene(demo)?)
}

fn run(cli: Cli) -> Result<()> {
    let manifest = match cli.command {
        Command::ToSweep(c) => run_experiment(&build_config(Experiment::ToSweep, &c)?)?,
        Command::CfoSweep(c) => run_experiment(&build_config(Experiment::CfoSweep, &c)?)?,
        Command::AfStudy(c) => run_experiment(&build_config(Experiment::AfStudy, &c)?)?,
        Command::Overhead(c) => run_experiment(&build_config(Experiment::Overhead, &c)?)?,
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::from_toml_file(&config)?;
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            run_experiment(&cfg)?
        }
        Command::Simulate { demo, common } => {
            let mut cfg = build_config(Experiment::MudDemo, &common)?;
            let scn = scene_for(&demo, &common, &mut cfg)?;
            let mut out = OutputDir::create(&cfg.out_dir)?;
            experiments::simulate(&scn, &mut out)?;
            out.finish("simulate", scn.seed, serde_json::to_value(&cfg)?)?
        }
        Command::Pipeline {
            trace,
            demo,
            common,
        } => {
            let mut cfg = build_config(Experiment::MudDemo, &common)?;
            let (input, seed) = match &trace {
                Some(p) => {
                    let stem = p.with_extension("");
                    (StreamInput::from_trace(read_trace(&stem)?)?, cfg.seed)
                }
                None => {
                    let scn = scene_for(&demo, &common, &mut cfg)?;
                    (StreamInput::simulate(&scn)?, scn.seed)
                }
            };
            let mut out = OutputDir::create(&cfg.out_dir)?;
            let res = experiments::pipeline(&input, &cfg.pipeline, &mut out)?;
            println!("{}", serde_json::to_string(&res.metrics)?);
            out.finish("pipeline", seed, serde_json::to_value(&cfg)?)?
        }
    };
    eprintln!(
        "wrote {} files, config {}",
        manifest.files.len(),
        &manifest.config_hash[..12]
    );
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!(
            "{}",
            serde_json::json!({ "error": e.category(), "message": e.to_string() })
        );
        std::process::exit(e.exit_code());
    }
}
