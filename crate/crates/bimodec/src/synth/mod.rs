//! Ground-truth session factory.
//!
//! [`gen_protocol`] lays out the trial schedule, [`force`] builds the
//! commanded grip profiles, and [`recording`] runs a forward model from
//! force to raw EEG, fNIRS intensity, scalp-control and force-sensor
//! streams. Everything is a pure function of `(manifest, params, seed)`,
//! so the same inputs reproduce every sample bit for bit.

pub mod force;
pub mod protocol;
pub mod recording;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use force::{
    crest_order, force_at, gen_force_trace, hold_value, session_force_percent, CREST_WIDTHS_S,
    RAMP_S,
};
pub use protocol::{gen_protocol, gen_protocol_sized};
pub use recording::{
    eeg_labels, fnirs_labels, force_channel_labels, gen_recording, gen_recording_with_truth,
    skin_labels, OpticalTruth, Recording, Synthesizer, WAVELENGTHS_NM,
};

/// Independent sub-stream seed for one named purpose.
///
/// Splitmix of the session seed xor a tag hash; every generator in the
/// forward model draws from its own stream so adding or reordering one
/// never shifts another. Public so downstream seeding (e.g. trial splits)
/// can derive independent streams the same way.
pub fn stream_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag bytes.
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in tag.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Double-gamma hemodynamic impulse response parameters (unit scale `θ=1`,
/// so a peak at `t` seconds means gamma shape `t + 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HrfParams {
    /// Positive-lobe peak time, seconds.
    pub peak_s: f64,
    /// Undershoot peak time, seconds.
    pub undershoot_s: f64,
    /// Undershoot amplitude as a fraction of the positive lobe.
    pub undershoot_ratio: f64,
}

impl Default for HrfParams {
    fn default() -> Self {
        Self {
            peak_s: 6.0,
            undershoot_s: 16.0,
            undershoot_ratio: 1.0 / 6.0,
        }
    }
}

/// Lanczos log-gamma (g=7, n=9), |rel err| < 1e-13 for positive arguments.
fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection; unused by the defaults but keeps the helper total.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Gamma density with unit scale.
fn gamma_pdf(t: f64, shape: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    ((shape - 1.0) * t.ln() - t - ln_gamma(shape)).exp()
}

/// Sampled double-gamma kernel with its discrete integral normalized to 1
/// (`sum * dt = 1`), covering `[0, 2 * undershoot_s]`.
pub fn hrf_kernel(p: &HrfParams, rate_hz: f64) -> Result<Vec<f64>> {
    if !(p.peak_s > 0.0) || !(p.undershoot_s > p.peak_s) || !(rate_hz > 0.0) {
        return Err(Error::Config(format!(
            "hrf parameters out of range: peak {} s, undershoot {} s at {} Hz",
            p.peak_s, p.undershoot_s, rate_hz
        )));
    }
    if !(0.0..1.0).contains(&p.undershoot_ratio) {
        return Err(Error::Config(format!(
            "hrf undershoot ratio {} outside [0, 1)",
            p.undershoot_ratio
        )));
    }
    let dt = 1.0 / rate_hz;
    let n = (2.0 * p.undershoot_s * rate_hz).round() as usize + 1;
    let k1 = p.peak_s + 1.0;
    let k2 = p.undershoot_s + 1.0;
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            gamma_pdf(t, k1) - p.undershoot_ratio * gamma_pdf(t, k2)
        })
        .collect();
    let integral: f64 = h.iter().sum::<f64>() * dt;
    if !(integral.abs() > f64::MIN_POSITIVE) {
        return Err(Error::Config("hrf kernel integrates to zero".into()));
    }
    for v in &mut h {
        *v /= integral;
    }
    Ok(h)
}

/// Forward-model gains and noise levels mapping force to raw signals.
///
/// EEG carriers live in two bands (beta, low gamma); their envelopes dip
/// with contraction, more for the contralateral hand. Optical coupling is
/// a hemodynamic-kernel convolution of the contralateral drive, opposite
/// in sign for the two wavelengths. Scalp-control channels carry only the
/// shared systemic oscillations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForwardModelParams {
    /// Envelope dip per unit contralateral drive, `[beta, low-gamma]`.
    pub erd_depth_contra: [f64; 2],
    /// Ipsilateral dip; at most the contralateral one.
    pub erd_depth_ipsi: [f64; 2],
    /// 1/f^alpha noise exponent for the EEG floor.
    pub eeg_noise_exponent: f64,
    /// EEG noise scale, microvolts.
    pub eeg_noise_uv: f64,
    /// Band carrier scale, microvolts.
    pub eeg_band_uv: f64,
    /// Mains interference amplitude, microvolts.
    pub mains_uv: f64,
    /// Optical-sampling strobe bleed amplitude, microvolts.
    pub optical_strobe_uv: f64,
    /// Slow electrode drift amplitude, microvolts.
    pub drift_uv: f64,
    /// Ocular burst amplitude at the reference site, microvolts.
    pub eog_uv: f64,
    /// Blink rate, events per second.
    pub blink_rate_hz: f64,

    pub hrf: HrfParams,
    /// Optical-density units per unit contralateral drive.
    pub hrf_gain_contra: f64,
    /// Ipsilateral coupling; at most the contralateral one.
    pub hrf_gain_ipsi: f64,
    /// Per-wavelength coupling multiplier; signs must be opposite.
    pub wavelength_gain: [f64; 2],
    /// Systemic blood-pressure oscillation amplitude, OD units.
    pub mayer_od: f64,
    /// Cardiac pulsation amplitude, OD units.
    pub cardiac_od: f64,
    /// Optical noise floor, OD units.
    pub fnirs_noise_od: f64,
    /// Detector baseline intensity, arbitrary units.
    pub fnirs_baseline: f64,
    /// Scalp-control systemic amplification relative to cortical channels.
    pub skin_systemic_factor: f64,

    /// Force tracking jitter, %MVC standard deviation.
    pub force_jitter_pct: f64,
}

impl Default for ForwardModelParams {
    fn default() -> Self {
        Self {
            erd_depth_contra: [0.50, 0.40],
            erd_depth_ipsi: [0.20, 0.16],
            eeg_noise_exponent: 1.0,
            eeg_noise_uv: 9.0,
            eeg_band_uv: 11.0,
            mains_uv: 15.0,
            optical_strobe_uv: 2.0,
            drift_uv: 25.0,
            eog_uv: 120.0,
            blink_rate_hz: 0.2,
            hrf: HrfParams::default(),
            hrf_gain_contra: 0.055,
            hrf_gain_ipsi: 0.022,
            wavelength_gain: [-0.7, 1.0],
            mayer_od: 0.0015,
            cardiac_od: 0.0008,
            fnirs_noise_od: 0.0009,
            fnirs_baseline: 1.0,
            skin_systemic_factor: 1.5,
            force_jitter_pct: 0.5,
        }
    }
}

impl ForwardModelParams {
    /// Coupling-free variant: same noise and artifacts, no force information
    /// in any brain channel.
    pub fn uncoupled() -> Self {
        Self {
            erd_depth_contra: [0.0, 0.0],
            erd_depth_ipsi: [0.0, 0.0],
            hrf_gain_contra: 0.0,
            hrf_gain_ipsi: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("eeg_noise_exponent", self.eeg_noise_exponent),
            ("eeg_noise_uv", self.eeg_noise_uv),
            ("eeg_band_uv", self.eeg_band_uv),
            ("mains_uv", self.mains_uv),
            ("optical_strobe_uv", self.optical_strobe_uv),
            ("drift_uv", self.drift_uv),
            ("eog_uv", self.eog_uv),
            ("blink_rate_hz", self.blink_rate_hz),
            ("hrf_gain_contra", self.hrf_gain_contra),
            ("hrf_gain_ipsi", self.hrf_gain_ipsi),
            ("mayer_od", self.mayer_od),
            ("cardiac_od", self.cardiac_od),
            ("fnirs_noise_od", self.fnirs_noise_od),
            ("fnirs_baseline", self.fnirs_baseline),
            ("skin_systemic_factor", self.skin_systemic_factor),
            ("force_jitter_pct", self.force_jitter_pct),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        for b in 0..2 {
            let (c, i) = (self.erd_depth_contra[b], self.erd_depth_ipsi[b]);
            if !c.is_finite() || !i.is_finite() || i < 0.0 || c < i || c >= 1.0 {
                return Err(Error::Config(format!(
                    "erd depths band {b}: need 0 <= ipsi <= contra < 1, got contra {c}, ipsi {i}"
                )));
            }
        }
        if self.hrf_gain_ipsi < 0.0 || self.hrf_gain_contra < self.hrf_gain_ipsi {
            return Err(Error::Config(format!(
                "hrf gains: need 0 <= ipsi <= contra, got contra {}, ipsi {}",
                self.hrf_gain_contra, self.hrf_gain_ipsi
            )));
        }
        let [w0, w1] = self.wavelength_gain;
        if !w0.is_finite() || !w1.is_finite() || w0 * w1 >= 0.0 {
            return Err(Error::Config(format!(
                "wavelength gains must have opposite signs, got {w0} and {w1}"
            )));
        }
        if !(self.fnirs_baseline > 0.0) {
            return Err(Error::Config(format!(
                "fnirs_baseline must be positive, got {}",
                self.fnirs_baseline
            )));
        }
        if !(self.blink_rate_hz >= 0.0) {
            return Err(Error::Config(format!(
                "blink_rate_hz must be non-negative, got {}",
                self.blink_rate_hz
            )));
        }
        Ok(())
    }
}
