//! Airtime overhead of appending training units to data packets.

use crate::error::{Error, Result};

/// Overhead model `100 n / (n + ratio)`, where `ratio` is the data airtime in
/// units of one training unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverheadCurve {
    pub ratio: f64,
}

impl OverheadCurve {
    /// Fits `ratio` from one observation: `overhead_pct` percent with `n` units.
    pub fn fit(n: u32, overhead_pct: f64) -> Result<Self> {
        if n == 0 || !(overhead_pct > 0.0 && overhead_pct < 100.0) {
            return Err(Error::Config(format!(
                "cannot fit overhead from n={n}, {overhead_pct}%"
            )));
        }
        Ok(Self {
            ratio: n as f64 * (100.0 / overhead_pct - 1.0),
        })
    }

    pub fn overhead_pct(&self, n: u32) -> f64 {
        let n = n as f64;
        100.0 * n / (n + self.ratio)
    }
}

/// Reported overhead (percent) for 1..=12 training units, keyed by modulation
/// and coding scheme and PSDU size in kB.
pub const REFERENCE_OVERHEAD: [(&str, u32, [f64; 12]); 8] = [
    (
        "MCS8",
        4,
        [
            2.49480271339417,
            4.86815452575684,
            7.12871313095093,
            9.28433227539062,
            11.342155456543,
            13.3086881637573,
            15.1898746490479,
            16.9911518096924,
            18.7175025939941,
            20.373514175415,
            21.9633960723877,
            23.4910297393799,
        ],
    ),
    (
        "MCS8",
        66,
        [
            0.189603388309479,
            0.378489196300507,
            0.566661477088928,
            0.754124104976654,
            0.940881252288818,
            1.12693679332733,
            1.31229507923126,
            1.49695932865143,
            1.68093395233154,
            1.86422276496887,
            2.04682874679565,
            2.22875714302063,
        ],
    ),
    (
        "MCS8",
        262,
        [
            0.0478908121585846,
            0.0957357659935951,
            0.143534943461418,
            0.19128842651844,
            0.238996222615242,
            0.286658406257629,
            0.334275156259537,
            0.381846368312836,
            0.429372221231461,
            0.476852774620056,
            0.5242879986763,
            0.571678161621094,
        ],
    ),
    (
        "MCS8",
        4194,
        [
            0.0120056420564651,
            0.0240084007382393,
            0.0360082872211933,
            0.0480052754282951,
            0.0599993951618671,
            0.0719906315207481,
            0.0839790031313896,
            0.0959645062685013,
            0.10794710367918,
            0.11992684751749,
            0.13190370798111,
            0.143877729773521,
        ],
    ),
    (
        "MCS12",
        4,
        [
            4.27046251296997,
            8.19112682342529,
            11.8032779693604,
            15.1419563293457,
            18.23708152771,
            21.114372253418,
            23.7960319519043,
            26.3013706207275,
            28.6472129821777,
            30.8483333587646,
            32.9177093505859,
            34.8668251037598,
        ],
    ),
    (
        "MCS12",
        66,
        [
            0.373948335647583,
            0.745110213756561,
            1.11351680755615,
            1.47919881343842,
            1.84218621253967,
            2.20250844955444,
            2.56019473075867,
            2.91527462005615,
            3.26777625083923,
            3.61772704124451,
            3.96515488624573,
            4.31008625030518,
        ],
    ),
    (
        "MCS12",
        262,
        [
            0.0954729989171028,
            0.190763860940933,
            0.285873115062714,
            0.380801260471344,
            0.475548923015594,
            0.570116460323334,
            0.66450434923172,
            0.758713364601135,
            0.852743804454803,
            0.946596324443817,
            1.04027092456818,
            1.13376891613007,
        ],
    ),
    (
        "MCS12",
        4194,
        [
            0.0239918455481529,
            0.047972172498703,
            0.071941003203392,
            0.0958983302116394,
            0.119844220578671,
            0.143778547644615,
            0.167701482772827,
            0.191612973809242,
            0.215512990951538,
            0.239401459693909,
            0.26327857375145,
            0.287144303321838,
        ],
    ),
];
