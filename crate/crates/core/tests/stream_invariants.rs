use jcs_core::geometry::{bistatic_doppler, solve_position};
use jcs_core::simulator::{
    excess_delay_samples, path_amplitude, sample_random_scene, ArrayConfig, CfoModel,
    OffsetProcess, Scatterer, Scenario, SceneRanges, StreamGenerator, SynthesisMode, ToModel,
};
use jcs_core::sync::shift_cir;
use num_complex::Complex64;
use std::f64::consts::PI;

fn no_offsets() -> OffsetProcess {
    OffsetProcess {
        to: ToModel::None,
        cfo: CfoModel::None,
        cfo_hz: 0.0,
    }
}

#[test]
fn cir_and_waveform_modes_agree() {
    for seed in 0..10 {
        let base = Scenario {
            offsets: no_offsets(),
            snr_db: 300.0,
            n_packets: 1,
            n_taps: 96,
            ..Scenario::default()
        };
        let scn = sample_random_scene(seed, &SceneRanges::default(), &base).unwrap();
        let cir = StreamGenerator::new(&scn)
            .unwrap()
            .next_frame()
            .unwrap()
            .frame;
        let wf_scn = Scenario {
            mode: SynthesisMode::WaveformDomain,
            ..scn.clone()
        };
        let wf = StreamGenerator::new(&wf_scn)
            .unwrap()
            .next_frame()
            .unwrap()
            .frame;
        let peak = cir.taps.iter().map(|x| x.norm()).fold(0.0, f64::max);
        for (a, b) in cir.taps.iter().zip(&wf.taps) {
            // Relative on significant taps, absolute against the peak elsewhere.
            let tol = 0.01 * a.norm().max(1e-3 * peak);
            assert!(
                (a.norm() - b.norm()).abs() <= tol,
                "seed {seed}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn frame_energy_matches_path_powers() {
    let scn = Scenario {
        scatterers: vec![
            Scatterer::point([2.0, 1.5], 5.0),
            Scatterer::point([7.0, -1.0], 0.0),
            Scatterer::point([1.0, -6.0], 8.0),
        ],
        offsets: no_offsets(),
        snr_db: 30.0,
        n_packets: 50,
        ..Scenario::default()
    };
    let mut gen = StreamGenerator::new(&scn).unwrap();
    let arr = gen.array().clone();
    let g = scn.geometry;
    let mut taps = vec![0i64];
    let mut expect: f64 = arr.gains(g.alpha).iter().map(|x| x * x).sum();
    for s in &scn.scatterers {
        let a = path_amplitude(s.position, s.rcs_dbsm, &g).unwrap();
        let az = s.position[1].atan2(s.position[0]);
        expect += a * a * arr.gains(az).iter().map(|x| x * x).sum::<f64>();
        taps.push(excess_delay_samples(s.position, &g, scn.delta_tau()).round() as i64);
    }
    taps.sort();
    taps.dedup();
    assert_eq!(taps.len(), 4, "paths must occupy distinct taps");
    let noise = gen.noise_variance() / scn.pilot_len as f64 * (arr.n_beams() * scn.n_taps) as f64;
    let mut total = 0.0;
    for _ in 0..scn.n_packets {
        let f = gen.next_frame().unwrap().frame;
        total += f.taps.iter().map(|x| x.norm_sqr()).sum::<f64>();
    }
    let measured = total / scn.n_packets as f64 - noise;
    assert!(
        (measured - expect).abs() < 0.01 * expect,
        "{measured} vs {expect}"
    );
}

#[test]
fn static_paths_are_constant_after_offset_removal() {
    let scn = Scenario {
        scatterers: vec![
            Scatterer::point([3.0, 1.0], 10.0),
            Scatterer::point([2.0, -3.0], 5.0),
        ],
        offsets: OffsetProcess {
            to: ToModel::Uniform { max_taps: 20.0 },
            cfo: CfoModel::UniformPhase,
            cfo_hz: 0.0,
        },
        snr_db: 20.0,
        n_packets: 200,
        ..Scenario::default()
    };
    let mut gen = StreamGenerator::new(&scn).unwrap();
    let sigma = (gen.noise_variance() / scn.pilot_len as f64).sqrt();
    let mut reference: Option<Vec<Complex64>> = None;
    for _ in 0..scn.n_packets {
        let g = gen.next_frame().unwrap();
        let truth = g.frame.truth.clone().unwrap();
        let aligned = shift_cir(&g.frame, truth.to_samples.round() as i32);
        let clean = shift_cir(&g.clean, truth.to_samples.round() as i32);
        let rot = Complex64::from_polar(1.0, -truth.cfo_phase);
        let clean: Vec<Complex64> = clean.taps.iter().map(|x| x * rot).collect();
        let noisy: Vec<Complex64> = aligned.taps.iter().map(|x| x * rot).collect();
        let r = reference.get_or_insert_with(|| clean.clone());
        for ((c, n), r) in clean.iter().zip(&noisy).zip(r.iter()) {
            assert!((c - r).norm() < 1e-9);
            if r.norm() > 10.0 * sigma {
                assert!((n - r).norm() < 3.0 * sigma);
            }
        }
    }
}

#[test]
fn moving_target_phase_advances_at_bistatic_doppler() {
    let pos = [2.0, 2.0];
    let mut scn = Scenario {
        array: ArrayConfig::isotropic(),
        los: false,
        offsets: OffsetProcess {
            to: ToModel::None,
            cfo: CfoModel::RandomWalk { step_std: 0.5 },
            cfo_hz: 0.0,
        },
        snr_db: 300.0,
        n_packets: 20,
        ..Scenario::default()
    };
    scn.geometry.alpha = 0.0;
    let g = scn.geometry;
    let s = solve_position(pos, &g);
    // Inward bisector: sum of the unit vectors towards TX and RX.
    let rx = g.rx_position();
    let ut = [-pos[0] / s.d_tx, -pos[1] / s.d_tx];
    let ur = [(rx[0] - pos[0]) / s.d_rx, (rx[1] - pos[1]) / s.d_rx];
    let n = (ut[0] + ur[0]).hypot(ut[1] + ur[1]);
    let speed = 1.2;
    let vel = [speed * (ut[0] + ur[0]) / n, speed * (ut[1] + ur[1]) / n];
    scn.scatterers = vec![Scatterer::moving(pos, vel, 10.0)];
    let tap = excess_delay_samples(pos, &g, scn.delta_tau()).round() as usize;

    let mut gen = StreamGenerator::new(&scn).unwrap();
    let mut prev: Option<Complex64> = None;
    for _ in 0..scn.n_packets {
        let f = gen.next_frame().unwrap().frame;
        let h = f.tap(0, tap) * Complex64::from_polar(1.0, -f.truth.as_ref().unwrap().cfo_phase);
        if let Some(p) = prev {
            let step = (h * p.conj()).arg();
            // Evaluated mid-step; the target stays on the perpendicular bisector.
            let t = (f.k as f64 - 0.5) * scn.packet_interval_s;
            let mid = [pos[0] + vel[0] * t, pos[1] + vel[1] * t];
            let f_d = bistatic_doppler(speed, 0.0, solve_position(mid, &g).beta, &g);
            let expect = 2.0 * PI * f_d * scn.packet_interval_s;
            assert!(
                (step - expect).abs() < 1e-5 * expect.abs(),
                "{step} vs {expect}"
            );
        }
        prev = Some(h);
    }
}
