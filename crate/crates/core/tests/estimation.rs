use jcs_core::waveform::{
    autocorrelation, estimate_cir, synthesize_rx_stream, GolayPair, TrnField,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_channel(rng: &mut ChaCha8Rng, n_taps: usize) -> Vec<Complex64> {
    (0..n_taps)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

#[test]
fn complementary_identity_for_every_length() {
    let mut len = 2;
    while len <= 1024 {
        let p = GolayPair::new(len).unwrap();
        // Direct summation, independent of the library helper.
        for lag in 0..len {
            let mut s = 0.0;
            for i in 0..len - lag {
                s += p.a[i] * p.a[i + lag] + p.b[i] * p.b[i + lag];
            }
            let expect = if lag == 0 { 2.0 * len as f64 } else { 0.0 };
            assert_eq!(s, expect, "L={len} lag={lag}");
            assert_eq!(
                autocorrelation(&p.a, lag) + autocorrelation(&p.b, lag),
                expect
            );
        }
        len *= 2;
    }
}

#[test]
fn noiseless_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for half in [16, 64, 256] {
        let pair = GolayPair::new(half).unwrap();
        let beams: Vec<usize> = (0..4).collect();
        let trn = TrnField::new(pair, &beams, 64).unwrap();
        let channels: Vec<Vec<Complex64>> = (0..4).map(|_| random_channel(&mut rng, 32)).collect();
        for to in [0usize, 5, 20] {
            let y =
                synthesize_rx_stream(&channels, &trn, to as f64, 0.0, 0.0, 0.0, &mut rng).unwrap();
            let est = estimate_cir(&y, &trn, 4, 60).unwrap();
            for (h, e) in channels.iter().zip(&est) {
                let mut shifted = vec![Complex64::new(0.0, 0.0); 60];
                shifted[to..to + h.len()].copy_from_slice(h);
                let err: f64 = shifted.iter().zip(e).map(|(a, b)| (a - b).norm_sqr()).sum();
                let norm: f64 = shifted.iter().map(|a| a.norm_sqr()).sum();
                assert!((err / norm).sqrt() < 1e-9, "half={half} to={to}");
            }
        }
    }
}

#[test]
fn coherent_gain_matches_pilot_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trn = TrnField::standard(40);
    let l = trn.unit_len() as f64;
    let zero = vec![vec![Complex64::new(0.0, 0.0); 8]; 6];
    let noise_var = 1.0;
    let mut acc = 0.0;
    let mut n = 0usize;
    for _ in 0..400 {
        let y = synthesize_rx_stream(&zero, &trn, 0.0, 0.0, 0.0, noise_var, &mut rng).unwrap();
        for h in estimate_cir(&y, &trn, 6, 8).unwrap() {
            for t in h {
                acc += t.norm_sqr();
                n += 1;
            }
        }
    }
    // Unit-gain taps: output SNR over input SNR is the inverse noise ratio.
    let gain_db = 10.0 * (noise_var / (acc / n as f64)).log10();
    let target_db = 10.0 * l.log10();
    assert!(
        (gain_db - target_db).abs() < 0.5,
        "gain {gain_db:.2} dB vs {target_db:.2} dB"
    );
}
