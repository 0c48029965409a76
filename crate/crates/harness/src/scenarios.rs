//! Built-in scenes for the demos and the acceptance suite.

use jcs_core::simulator::{
    ArrayConfig, Blockage, CfoModel, OffsetProcess, Scatterer, Scenario, ToModel,
};

/// Base of the Monte-Carlo sweeps: isotropic single-beam receiver, one
/// training field per realization, uniform TO and uniform carrier phase.
pub fn sweep_base() -> Scenario {
    Scenario {
        array: ArrayConfig::isotropic(),
        offsets: OffsetProcess {
            to: ToModel::Uniform { max_taps: 20.0 },
            cfo: CfoModel::UniformPhase,
            cfo_hz: 0.0,
        },
        n_packets: 2,
        ..Scenario::default()
    }
}

fn stream_base(n_packets: usize, seed: u64) -> Scenario {
    Scenario {
        offsets: OffsetProcess {
            to: ToModel::Uniform { max_taps: 20.0 },
            cfo: CfoModel::RandomWalk { step_std: 0.5 },
            cfo_hz: 0.0,
        },
        snr_db: 10.0,
        n_packets,
        seed,
        ..Scenario::default()
    }
}

/// Strong metal-cabinet-like reflector between the radios.
fn cabinet() -> Scatterer {
    let mut s = Scatterer::point([3.5, -1.0], 10.0);
    s.phase = Some(0.4);
    s
}

/// Walking person with limb returns, a strong static reflector and two LOS
/// blockage events.
pub fn walker_demo() -> Scenario {
    let mut walker = Scatterer::walker([2.0, 1.5], [0.3, 0.7], -3.0);
    walker.phase = Some(1.1);
    Scenario {
        scatterers: vec![walker, cabinet()],
        blockage: vec![
            Blockage {
                start_k: 1500,
                end_k: 2700,
                decay: 100.0,
            },
            Blockage {
                start_k: 4200,
                end_k: 6000,
                decay: 100.0,
            },
        ],
        ..stream_base(6000, 7)
    }
}

/// Static reflectors only.
pub fn static_scene() -> Scenario {
    Scenario {
        scatterers: vec![
            cabinet(),
            Scatterer::point([1.5, 2.5], 0.0),
            Scatterer::point([6.0, 1.0], 5.0),
        ],
        ..stream_base(2000, 3)
    }
}

/// One point target at constant velocity.
pub fn single_target() -> Scenario {
    Scenario {
        scatterers: vec![Scatterer::moving([3.0, 1.5], [0.2, 0.5], 0.0)],
        ..stream_base(4000, 11)
    }
}

/// Two point targets well separated in delay.
pub fn two_targets() -> Scenario {
    Scenario {
        scatterers: vec![
            Scatterer::moving([2.5, 2.0], [0.4, 0.2], 0.0),
            Scatterer::moving([7.0, -1.0], [-0.4, 0.3], 3.0),
        ],
        ..stream_base(4000, 13)
    }
}

/// Moving target plus strong static reflector under intermittent blockage.
pub fn blockage_scene() -> Scenario {
    Scenario {
        scatterers: vec![Scatterer::moving([2.5, 1.5], [0.3, 0.4], 0.0), cabinet()],
        blockage: vec![
            Blockage {
                start_k: 800,
                end_k: 1800,
                decay: 60.0,
            },
            Blockage {
                start_k: 2600,
                end_k: 3400,
                decay: 60.0,
            },
        ],
        ..stream_base(4000, 17)
    }
}

pub const NAMES: [&str; 5] = [
    "walker",
    "static",
    "single-target",
    "two-targets",
    "blockage",
];

pub fn by_name(name: &str) -> Option<Scenario> {
    Some(match name {
        "walker" => walker_demo(),
        "static" => static_scene(),
        "single-target" => single_target(),
        "two-targets" => two_targets(),
        "blockage" => blockage_scene(),
        _ => return None,
    })
}
