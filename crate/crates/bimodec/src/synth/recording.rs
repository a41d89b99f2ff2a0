//! Forward model from commanded force to raw recordings.
//!
//! Per modality:
//! - EEG (acquisition rate): 1/f^alpha floor + two band-limited carriers per
//!   hemisphere whose envelopes dip with contraction (contralateral more than
//!   ipsilateral), mains and optical-strobe interference, slow drift, and
//!   ocular bursts mixed in with frontal-weighted gains.
//! - fNIRS (optical rate): detector intensity `I0 * 10^(-dOD)` where `dOD`
//!   sums a hemodynamic-kernel convolution of the contralateral drive
//!   (opposite sign per wavelength), shared Mayer/cardiac systemics, and a
//!   pink floor.
//! - Scalp control: the same systemics and floor with zero force coupling.
//! - Force: commanded profile plus low-pass tracking jitter, in Newtons.
//!
//! Every generator draws from its own tagged seed stream, so any channel can
//! be produced alone, in any order, with identical bits.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

use super::force::session_force_percent;
use super::{hrf_kernel, stream_seed, ForwardModelParams};
use crate::error::{Error, Result};
use crate::signal::{
    Hand, SessionManifest, SignalKind, TimeSeries, FORCE_CREST_PCT, FORCE_TROUGH_PCT, N_SITES,
    N_WAVELENGTHS,
};

/// Optical wavelengths, nanometres; order matches label suffixes and
/// `ForwardModelParams::wavelength_gain`.
pub const WAVELENGTHS_NM: [u32; N_WAVELENGTHS] = [760, 850];

const SITES_PER_HEMI: usize = N_SITES / 2;
/// Envelope drives are sampled at this rate and interpolated upward.
const DRIVE_RATE_HZ: f64 = 250.0;
/// Carrier bands (Hz), kept strictly inside the beta and low-gamma analysis
/// bands so filter roll-off never clips them.
const CARRIER_BANDS_HZ: [(f64, f64); 2] = [(14.0, 29.0), (31.0, 49.0)];
const CARRIER_TONES: usize = 12;
/// Cross-hemisphere carrier leak (volume conduction stand-in).
const CROSS_LEAK: f64 = 0.2;
/// Envelope floor; desynchronization never silences a carrier completely.
const ENV_FLOOR: f64 = 0.05;
/// Gaussian site-weight profile: centre and width in site-index units.
const SITE_CENTRE: f64 = 5.5;
const SITE_SIGMA: f64 = 2.5;
/// Ocular gain falls off with site index (front to back) on this scale.
const EOG_FALLOFF_SITES: f64 = 3.0;

fn hemi_tag(hemi: usize) -> &'static str {
    if hemi == 0 {
        "L"
    } else {
        "R"
    }
}

/// EEG channel labels, left hemisphere then right, front to back.
pub fn eeg_labels() -> Vec<String> {
    let mut v = Vec::with_capacity(N_SITES);
    for hemi in 0..2 {
        for site in 0..SITES_PER_HEMI {
            v.push(format!("eeg{}{:02}", hemi_tag(hemi), site + 1));
        }
    }
    v
}

/// Optical channel labels, site-major with the wavelength as suffix.
pub fn fnirs_labels() -> Vec<String> {
    let mut v = Vec::with_capacity(N_SITES * N_WAVELENGTHS);
    for hemi in 0..2 {
        for site in 0..SITES_PER_HEMI {
            for wl in WAVELENGTHS_NM {
                v.push(format!("fn{}{:02}@{}", hemi_tag(hemi), site + 1, wl));
            }
        }
    }
    v
}

/// Scalp-control channel labels, one per wavelength.
pub fn skin_labels() -> Vec<String> {
    WAVELENGTHS_NM.iter().map(|wl| format!("skin@{wl}")).collect()
}

/// Force channel labels, left then right.
pub fn force_channel_labels() -> Vec<String> {
    vec!["forceL".into(), "forceR".into()]
}

/// Gaussian site weight shared by the electrode and optode models.
fn site_weight(site: usize) -> f64 {
    let d = site as f64 - SITE_CENTRE;
    (-d * d / (2.0 * SITE_SIGMA * SITE_SIGMA)).exp()
}

/// The hand a hemisphere predominantly serves (crossed motor pathways).
fn contra_hand(hemi: usize) -> usize {
    1 - hemi
}

/// Standard normal draws via the polar Box-Muller transform.
struct Gauss {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Gauss {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    fn next(&mut self) -> f64 {
        if let Some(s) = self.spare.take() {
            return s;
        }
        loop {
            let u = self.rng.gen::<f64>() * 2.0 - 1.0;
            let v = self.rng.gen::<f64>() * 2.0 - 1.0;
            let s = u * u + v * v;
            if s > f64::MIN_POSITIVE && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * m);
                return u * m;
            }
        }
    }
}

/// 1/f^alpha noise: staggered sample-and-hold rows (row r refreshes every
/// 2^(r+1) samples) with exponent-dependent row gains, plus a white row.
/// Unit variance by construction.
struct PinkNoise {
    rows: Vec<f64>,
    gains: Vec<f64>,
    held_sum: f64,
    counter: u64,
    gauss: Gauss,
    norm: f64,
}

const PINK_ROWS: usize = 16;

impl PinkNoise {
    fn new(seed: u64, exponent: f64) -> Self {
        let mut gauss = Gauss::new(seed);
        let gains: Vec<f64> = (0..PINK_ROWS)
            .map(|r| 2f64.powf((r + 1) as f64 * (exponent - 1.0) / 2.0))
            .collect();
        let rows: Vec<f64> = gains.iter().map(|g| g * gauss.next()).collect();
        let held_sum = rows.iter().sum();
        let var: f64 = gains.iter().map(|g| g * g).sum::<f64>() + 1.0;
        Self {
            rows,
            gains,
            held_sum,
            counter: 1,
            gauss,
            norm: 1.0 / var.sqrt(),
        }
    }

    fn next(&mut self) -> f64 {
        let r = (self.counter.trailing_zeros() as usize).min(PINK_ROWS - 1);
        self.counter = self.counter.wrapping_add(1);
        let fresh = self.gains[r] * self.gauss.next();
        self.held_sum += fresh - self.rows[r];
        self.rows[r] = fresh;
        (self.held_sum + self.gauss.next()) * self.norm
    }
}

/// One band carrier: seeded tones summed by rotation recurrence, unit
/// variance (`tones * amp^2 / 2 = 1`).
fn eval_carrier(seed: u64, band: (f64, f64), rate_hz: f64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = (2.0 / CARRIER_TONES as f64).sqrt();
    let mut xs = [0.0f64; CARRIER_TONES];
    let mut ys = [0.0f64; CARRIER_TONES];
    let mut cs = [0.0f64; CARRIER_TONES];
    let mut ss = [0.0f64; CARRIER_TONES];
    for k in 0..CARRIER_TONES {
        let f = rng.gen_range(band.0..band.1);
        let phase = rng.gen_range(0.0..TAU);
        xs[k] = phase.cos();
        ys[k] = phase.sin();
        let w = TAU * f / rate_hz;
        cs[k] = w.cos();
        ss[k] = w.sin();
    }
    let mut out = vec![0.0f64; n];
    for v in out.iter_mut() {
        let mut acc = 0.0;
        for k in 0..CARRIER_TONES {
            acc += xs[k];
            let x = xs[k] * cs[k] - ys[k] * ss[k];
            let y = xs[k] * ss[k] + ys[k] * cs[k];
            xs[k] = x;
            ys[k] = y;
        }
        *v = acc * amp;
    }
    out
}

/// A blink event: onset, amplitude multiplier, pulse width.
#[derive(Debug, Clone, Copy)]
struct Blink {
    t_s: f64,
    amp: f64,
    width_s: f64,
}

/// Coupling-only ground truth for the optical channels, for oracle tests
/// against the generated data.
#[derive(Debug, Clone)]
pub struct OpticalTruth {
    /// Force-coupled optical-density component per channel (no systemics,
    /// no noise); rows match [`fnirs_labels`].
    pub coupling_od: Array2<f64>,
    /// Hemodynamic-kernel convolution of each hand's normalized drive;
    /// rows are left, right.
    pub conv_drive: Array2<f64>,
    pub rate_hz: f64,
}

/// Shared forward-model state: drives, carriers, systemics and event lists
/// are derived once, then any channel can be generated independently.
pub struct Synthesizer {
    manifest: SessionManifest,
    params: ForwardModelParams,
    seed: u64,
    n_eeg: usize,
    n_optical: usize,
    /// Normalized force drive per hand at [`DRIVE_RATE_HZ`].
    drive: [Vec<f64>; 2],
    /// Hemodynamic convolution per hand at the optical rate.
    conv: [Vec<f64>; 2],
    /// Band carriers indexed `[hemi][band]` at the EEG rate.
    carriers: [[Vec<f64>; 2]; 2],
    /// Shared systemic oscillations at the optical rate.
    mayer: Vec<f64>,
    cardiac: Vec<f64>,
    blinks: Vec<Blink>,
}

impl Synthesizer {
    pub fn new(manifest: &SessionManifest, params: &ForwardModelParams, seed: u64) -> Result<Self> {
        manifest.validate()?;
        params.validate()?;
        let eeg_rate = manifest.rates.eeg_hz;
        let optical_rate = manifest.rates.fnirs_hz;
        if (manifest.rates.skin_hz - optical_rate).abs() > 1e-9 {
            return Err(Error::RateMismatch {
                context: "Synthesizer::new",
                expected_hz: optical_rate,
                got_hz: manifest.rates.skin_hz,
            });
        }
        if eeg_rate < DRIVE_RATE_HZ {
            return Err(Error::InvalidRate {
                rate_hz: eeg_rate,
                reason: "EEG rate below the envelope drive rate",
            });
        }
        let n_eeg = (manifest.duration_s * eeg_rate).round() as usize;
        let n_optical = (manifest.duration_s * optical_rate).round() as usize;
        let n_drive = (manifest.duration_s * DRIVE_RATE_HZ).round() as usize;

        let mut drive = [Vec::new(), Vec::new()];
        let mut u_optical = [Vec::new(), Vec::new()];
        for hand in Hand::BOTH {
            let pct = session_force_percent(manifest, hand, DRIVE_RATE_HZ);
            drive[hand.index()] = pct.iter().map(|p| p / FORCE_CREST_PCT).collect();
            let pct = session_force_percent(manifest, hand, optical_rate);
            u_optical[hand.index()] = pct.iter().map(|p| p / FORCE_CREST_PCT).collect();
        }
        debug_assert_eq!(drive[0].len(), n_drive);

        // Causal convolution of the optical-rate drive with the kernel.
        let h = hrf_kernel(&params.hrf, optical_rate)?;
        let dt = 1.0 / optical_rate;
        let mut conv = [vec![0.0; n_optical], vec![0.0; n_optical]];
        for hand in 0..2 {
            let u = &u_optical[hand];
            let v = &mut conv[hand];
            for (i, vi) in v.iter_mut().enumerate() {
                let kmax = h.len().min(i + 1);
                let mut acc = 0.0;
                for (k, &hk) in h.iter().take(kmax).enumerate() {
                    acc += hk * u[i - k];
                }
                *vi = acc * dt;
            }
        }

        let carriers = [0, 1].map(|hemi| {
            [0, 1].map(|band| {
                let tag = format!("eeg/carrier/{}/{band}", hemi_tag(hemi));
                eval_carrier(stream_seed(seed, &tag), CARRIER_BANDS_HZ[band], eeg_rate, n_eeg)
            })
        });

        // Quasi-periodic systemics: a narrow cluster of seeded tones around
        // the nominal frequency, shared by every optical channel.
        let systemic = |tag: &str, freqs: &[(f64, f64)]| -> Vec<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, tag));
            let comps: Vec<(f64, f64, f64)> = freqs
                .iter()
                .map(|&(f, a)| (f, a, rng.gen_range(0.0..TAU)))
                .collect();
            let norm = 1.0 / freqs.iter().map(|&(_, a)| a * a / 2.0).sum::<f64>().sqrt();
            (0..n_optical)
                .map(|i| {
                    let t = i as f64 * dt;
                    comps
                        .iter()
                        .map(|&(f, a, p)| a * (TAU * f * t + p).sin())
                        .sum::<f64>()
                        * norm
                })
                .collect()
        };
        let mayer = systemic("systemic/mayer", &[(0.08, 0.5), (0.10, 1.0), (0.12, 0.5)]);
        let cardiac = systemic("systemic/cardiac", &[(1.2, 1.0), (2.4, 0.3)]);

        let mut blinks = Vec::new();
        if params.blink_rate_hz > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "eog/events"));
            let mut t = 0.0f64;
            loop {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                t += -u.ln() / params.blink_rate_hz;
                if t >= manifest.duration_s {
                    break;
                }
                blinks.push(Blink {
                    t_s: t,
                    amp: (1.0 + 0.25 * (rng.gen::<f64>() * 2.0 - 1.0)).max(0.2),
                    width_s: 0.25 + 0.10 * rng.gen::<f64>(),
                });
            }
        }

        Ok(Self {
            manifest: manifest.clone(),
            params: params.clone(),
            seed,
            n_eeg,
            n_optical,
            drive,
            conv,
            carriers,
            mayer,
            cardiac,
            blinks,
        })
    }

    pub fn manifest(&self) -> &SessionManifest {
        &self.manifest
    }

    pub fn params(&self) -> &ForwardModelParams {
        &self.params
    }

    /// Samples every EEG-rate channel (EEG sites and EOG) will have.
    pub fn n_eeg_samples(&self) -> usize {
        self.n_eeg
    }

    /// Samples every optical-rate channel (fNIRS and skin) will have.
    pub fn n_optical_samples(&self) -> usize {
        self.n_optical
    }

    /// Samples each force channel will have.
    pub fn n_force_samples(&self) -> usize {
        (self.manifest.duration_s * self.manifest.rates.force_hz).round() as usize
    }

    /// Linear interpolation of a hand's drive at an EEG sample index.
    fn drive_at(&self, hand: usize, i_eeg: usize) -> f64 {
        let pos = i_eeg as f64 * DRIVE_RATE_HZ / self.manifest.rates.eeg_hz;
        let i0 = pos as usize;
        let d = &self.drive[hand];
        let a = d[i0.min(d.len() - 1)];
        let b = d[(i0 + 1).min(d.len() - 1)];
        a + (b - a) * (pos - i0 as f64)
    }

    fn add_blinks(&self, out: &mut [f64], rate_hz: f64, gain_uv: f64) {
        for b in &self.blinks {
            let first = (b.t_s * rate_hz).ceil() as usize;
            let last = (((b.t_s + b.width_s) * rate_hz).floor() as usize).min(out.len() - 1);
            for (i, v) in out.iter_mut().enumerate().take(last + 1).skip(first) {
                let u = (i as f64 / rate_hz - b.t_s) / b.width_s;
                *v += gain_uv * b.amp * 0.5 * (1.0 - (TAU * u).cos());
            }
        }
    }

    /// One raw EEG channel (microvolts at the acquisition rate).
    pub fn gen_eeg_channel(&self, idx: usize) -> Vec<f64> {
        assert!(idx < N_SITES, "eeg channel {idx} out of range");
        let p = &self.params;
        let hemi = idx / SITES_PER_HEMI;
        let site = idx % SITES_PER_HEMI;
        let label = &eeg_labels()[idx];
        let rate = self.manifest.rates.eeg_hz;

        let mut pink = PinkNoise::new(
            stream_seed(self.seed, &format!("eeg/pink/{label}")),
            p.eeg_noise_exponent,
        );
        let mut misc = ChaCha8Rng::seed_from_u64(stream_seed(self.seed, &format!("eeg/misc/{label}")));
        let mains_phase: f64 = misc.gen_range(0.0..TAU);
        let mains2_phase: f64 = misc.gen_range(0.0..TAU);
        let strobe_phases: [f64; 3] = [0; 3].map(|_| misc.gen_range(0.0..TAU));
        let drift_phase: f64 = misc.gen_range(0.0..TAU);
        let dc_uv: f64 = misc.gen_range(-20.0..20.0);

        // Per-source mixing weight: own-hemisphere Gaussian site profile,
        // attenuated leak from the other hemisphere.
        let w_site = site_weight(site);
        let weight = |src_hemi: usize| -> f64 {
            if src_hemi == hemi {
                w_site
            } else {
                w_site * CROSS_LEAK
            }
        };

        let mut out = vec![0.0f64; self.n_eeg];
        for (i, v) in out.iter_mut().enumerate() {
            let t = i as f64 / rate;
            let mut acc = dc_uv
                + p.drift_uv * (TAU * 0.05 * t + drift_phase).sin()
                + p.eeg_noise_uv * pink.next()
                + p.mains_uv * ((TAU * 50.0 * t + mains_phase).sin()
                    + 0.2 * (TAU * 100.0 * t + mains2_phase).sin());
            for (k, ph) in strobe_phases.iter().enumerate() {
                let f = 12.5 * (k + 1) as f64;
                acc += p.optical_strobe_uv / (k + 1) as f64 * (TAU * f * t + ph).sin();
            }
            for src_hemi in 0..2 {
                let uc = self.drive_at(contra_hand(src_hemi), i);
                let ui = self.drive_at(1 - contra_hand(src_hemi), i);
                for band in 0..2 {
                    let env = (1.0
                        - p.erd_depth_contra[band] * uc
                        - p.erd_depth_ipsi[band] * ui)
                        .max(ENV_FLOOR);
                    acc += p.eeg_band_uv
                        * weight(src_hemi)
                        * env
                        * self.carriers[src_hemi][band][i];
                }
            }
            *v = acc;
        }
        let eog_gain = (-(site as f64) / EOG_FALLOFF_SITES).exp();
        self.add_blinks(&mut out, rate, self.params.eog_uv * eog_gain);
        out
    }

    /// The ocular reference channel (microvolts at the acquisition rate).
    pub fn gen_eog(&self) -> Vec<f64> {
        let rate = self.manifest.rates.eeg_hz;
        let mut gauss = Gauss::new(stream_seed(self.seed, "eog/sensor"));
        let mut out: Vec<f64> = (0..self.n_eeg).map(|_| 3.0 * gauss.next()).collect();
        self.add_blinks(&mut out, rate, self.params.eog_uv);
        out
    }

    /// Coupling-only optical density for one optical channel.
    fn coupling_row(&self, idx: usize) -> Vec<f64> {
        let p = &self.params;
        let site_global = idx / N_WAVELENGTHS;
        let wl = idx % N_WAVELENGTHS;
        let hemi = site_global / SITES_PER_HEMI;
        let site = site_global % SITES_PER_HEMI;
        let w = p.wavelength_gain[wl] * site_weight(site);
        let contra = &self.conv[contra_hand(hemi)];
        let ipsi = &self.conv[1 - contra_hand(hemi)];
        (0..self.n_optical)
            .map(|i| w * (p.hrf_gain_contra * contra[i] + p.hrf_gain_ipsi * ipsi[i]))
            .collect()
    }

    /// One raw fNIRS detector-intensity channel at the optical rate.
    pub fn gen_fnirs_channel(&self, idx: usize) -> Vec<f64> {
        assert!(idx < N_SITES * N_WAVELENGTHS, "fnirs channel {idx} out of range");
        let p = &self.params;
        let label = &fnirs_labels()[idx];
        let mut misc =
            ChaCha8Rng::seed_from_u64(stream_seed(self.seed, &format!("fnirs/misc/{label}")));
        let sys_mul: f64 = misc.gen_range(0.8..1.2);
        let baseline = p.fnirs_baseline * misc.gen_range(0.5..2.0);
        let mut pink = PinkNoise::new(stream_seed(self.seed, &format!("fnirs/pink/{label}")), 1.0);
        let coupling = self.coupling_row(idx);
        (0..self.n_optical)
            .map(|i| {
                let od = coupling[i]
                    + sys_mul * (p.mayer_od * self.mayer[i] + p.cardiac_od * self.cardiac[i])
                    + p.fnirs_noise_od * pink.next();
                baseline * 10f64.powf(-od)
            })
            .collect()
    }

    /// One scalp-control intensity channel: systemics and noise only.
    pub fn gen_skin_channel(&self, idx: usize) -> Vec<f64> {
        assert!(idx < N_WAVELENGTHS, "skin channel {idx} out of range");
        let p = &self.params;
        let label = &skin_labels()[idx];
        let mut misc =
            ChaCha8Rng::seed_from_u64(stream_seed(self.seed, &format!("skin/misc/{label}")));
        let sys_mul: f64 = p.skin_systemic_factor * misc.gen_range(0.8..1.2);
        let baseline = p.fnirs_baseline * misc.gen_range(0.5..2.0);
        let mut pink = PinkNoise::new(stream_seed(self.seed, &format!("skin/pink/{label}")), 1.0);
        (0..self.n_optical)
            .map(|i| {
                let od = sys_mul * (p.mayer_od * self.mayer[i] + p.cardiac_od * self.cardiac[i])
                    + p.fnirs_noise_od * pink.next();
                baseline * 10f64.powf(-od)
            })
            .collect()
    }

    /// One force-sensor channel in Newtons at the force rate: commanded
    /// profile plus low-pass tracking jitter, gated so rest stays at zero.
    pub fn gen_force_channel(&self, hand: Hand) -> Vec<f64> {
        let p = &self.params;
        let rate = self.manifest.rates.force_hz;
        let pct = session_force_percent(&self.manifest, hand, rate);
        let mut gauss = Gauss::new(stream_seed(
            self.seed,
            &format!("force/jitter/{}", hand.as_str()),
        ));
        // One-pole low pass at 2 Hz; rescaled to unit variance.
        let a = 1.0 - (-TAU * 2.0 / rate).exp();
        let renorm = ((2.0 - a) / a).sqrt();
        let mvc = self.manifest.mvc_for_hand(hand);
        let mut y = 0.0f64;
        pct.into_iter()
            .map(|v| {
                y += a * (gauss.next() - y);
                let gate = (v / FORCE_TROUGH_PCT).min(1.0);
                (v + p.force_jitter_pct * renorm * y * gate) * mvc / 100.0
            })
            .collect()
    }

    /// Ground truth for oracle tests.
    pub fn optical_truth(&self) -> OpticalTruth {
        let n = self.n_optical;
        let mut coupling = Array2::zeros((N_SITES * N_WAVELENGTHS, n));
        for idx in 0..N_SITES * N_WAVELENGTHS {
            let row = self.coupling_row(idx);
            coupling.row_mut(idx).assign(&ndarray::ArrayView1::from(&row));
        }
        let mut conv = Array2::zeros((2, n));
        for hand in 0..2 {
            conv.row_mut(hand)
                .assign(&ndarray::ArrayView1::from(&self.conv[hand]));
        }
        OpticalTruth {
            coupling_od: coupling,
            conv_drive: conv,
            rate_hz: self.manifest.rates.fnirs_hz,
        }
    }
}

/// A full raw session in memory.
///
/// Every stream is materialized in double precision; a standard 120-trial
/// session needs several gigabytes, so large sessions should be generated
/// channel by channel through [`Synthesizer`] instead.
#[derive(Debug, Clone)]
pub struct Recording {
    pub manifest: SessionManifest,
    /// Microvolts at the acquisition rate.
    pub eeg: TimeSeries<f64>,
    /// Ocular reference, same rate as the EEG.
    pub eog: TimeSeries<f64>,
    /// Detector intensities at the optical rate.
    pub fnirs: TimeSeries<f64>,
    /// Scalp-control intensities at the optical rate.
    pub skin: TimeSeries<f64>,
    /// Newtons at the force rate.
    pub force: TimeSeries<f64>,
}

fn series_from_rows(
    kind: SignalKind,
    rows: Vec<Vec<f64>>,
    rate: f64,
    labels: Vec<String>,
) -> Result<TimeSeries<f64>> {
    let c = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    let mut data = Array2::zeros((c, n));
    for (r, row) in rows.into_iter().enumerate() {
        data.row_mut(r).assign(&ndarray::ArrayView1::from(&row));
    }
    TimeSeries::new(kind, data, rate, 0.0, labels)
}

/// Generate the whole session plus the optical ground truth.
pub fn gen_recording_with_truth(
    manifest: &SessionManifest,
    params: &ForwardModelParams,
    seed: u64,
) -> Result<(Recording, OpticalTruth)> {
    let synth = Synthesizer::new(manifest, params, seed)?;
    let rates = &manifest.rates;

    let eeg_rows: Vec<Vec<f64>> = (0..N_SITES).map(|i| synth.gen_eeg_channel(i)).collect();
    let eeg = series_from_rows(SignalKind::Eeg, eeg_rows, rates.eeg_hz, eeg_labels())?;
    let eog = series_from_rows(
        SignalKind::Eeg,
        vec![synth.gen_eog()],
        rates.eeg_hz,
        vec!["eog".into()],
    )?;
    let fnirs_rows: Vec<Vec<f64>> = (0..N_SITES * N_WAVELENGTHS)
        .map(|i| synth.gen_fnirs_channel(i))
        .collect();
    let fnirs = series_from_rows(
        SignalKind::FnirsIntensity,
        fnirs_rows,
        rates.fnirs_hz,
        fnirs_labels(),
    )?;
    let skin_rows: Vec<Vec<f64>> = (0..N_WAVELENGTHS).map(|i| synth.gen_skin_channel(i)).collect();
    let skin = series_from_rows(SignalKind::Skin, skin_rows, rates.skin_hz, skin_labels())?;
    let force_rows: Vec<Vec<f64>> = Hand::BOTH
        .iter()
        .map(|&h| synth.gen_force_channel(h))
        .collect();
    let force = series_from_rows(
        SignalKind::Force,
        force_rows,
        rates.force_hz,
        force_channel_labels(),
    )?;

    let truth = synth.optical_truth();
    Ok((
        Recording {
            manifest: manifest.clone(),
            eeg,
            eog,
            fnirs,
            skin,
            force,
        },
        truth,
    ))
}

/// Generate the whole session.
pub fn gen_recording(
    manifest: &SessionManifest,
    params: &ForwardModelParams,
    seed: u64,
) -> Result<Recording> {
    gen_recording_with_truth(manifest, params, seed).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{apply_filter, design_iir, hilbert_analytic, BandForm, FilterFamily, FilterMode};
    use crate::synth::protocol::gen_protocol_sized;

    fn tiny_session() -> SessionManifest {
        gen_protocol_sized(42, 1)
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn pink_noise_is_unit_scale_and_low_frequency_heavy() {
        let mut p = PinkNoise::new(7, 1.0);
        let n = 1 << 16;
        let xs: Vec<f64> = (0..n).map(|_| p.next()).collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((0.5..2.0).contains(&var), "variance {var}");
        // Adjacent-sample differences suppress the held rows: a white signal
        // keeps var(diff)/var = 2, pink sits well below.
        let dvar = xs
            .windows(2)
            .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
            .sum::<f64>()
            / (n - 1) as f64;
        assert!(dvar / var < 1.5, "difference ratio {}", dvar / var);
    }

    #[test]
    fn carriers_stay_inside_their_band() {
        let rate = 4000.0;
        let n = (20.0 * rate) as usize;
        let c = eval_carrier(11, CARRIER_BANDS_HZ[0], rate, n);
        let var = c.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.35, "carrier variance {var}");
        // Out-of-band probe tones find nothing.
        for probe in [5.0, 60.0, 200.0] {
            let mut re = 0.0;
            let mut im = 0.0;
            for (i, &x) in c.iter().enumerate() {
                let w = TAU * probe * i as f64 / rate;
                re += x * w.cos();
                im += x * w.sin();
            }
            let amp = 2.0 * (re * re + im * im).sqrt() / n as f64;
            assert!(amp < 0.05, "probe {probe} Hz amplitude {amp}");
        }
    }

    #[test]
    fn channel_generation_is_deterministic() {
        let m = tiny_session();
        let p = ForwardModelParams::default();
        let a = Synthesizer::new(&m, &p, 5).unwrap();
        let b = Synthesizer::new(&m, &p, 5).unwrap();
        assert_eq!(a.gen_eeg_channel(3), b.gen_eeg_channel(3));
        assert_eq!(a.gen_fnirs_channel(17), b.gen_fnirs_channel(17));
        assert_eq!(a.gen_skin_channel(1), b.gen_skin_channel(1));
        assert_eq!(a.gen_force_channel(Hand::Left), b.gen_force_channel(Hand::Left));
        assert_eq!(a.gen_eog(), b.gen_eog());
        let c = Synthesizer::new(&m, &p, 6).unwrap();
        assert_ne!(a.gen_eeg_channel(3), c.gen_eeg_channel(3));
    }

    #[test]
    fn optical_intensities_stay_positive() {
        let m = tiny_session();
        let p = ForwardModelParams::default();
        let s = Synthesizer::new(&m, &p, 42).unwrap();
        for idx in [0, 13, 47] {
            assert!(s.gen_fnirs_channel(idx).iter().all(|&v| v > 0.0));
        }
        for idx in 0..2 {
            assert!(s.gen_skin_channel(idx).iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn skin_channels_carry_no_force_information() {
        let m = tiny_session();
        let p = ForwardModelParams::default();
        let s = Synthesizer::new(&m, &p, 42).unwrap();
        let rate = m.rates.skin_hz;
        for hand in Hand::BOTH {
            let force = session_force_percent(&m, hand, rate);
            for idx in 0..2 {
                let raw = s.gen_skin_channel(idx);
                // Work in optical density, as the pipeline would.
                let mean = raw.iter().sum::<f64>() / raw.len() as f64;
                let od: Vec<f64> = raw.iter().map(|v| -(v / mean).log10()).collect();
                let r = pearson(&od, &force);
                assert!(r.abs() < 0.1, "skin {idx} vs {} force: r {r}", hand.as_str());
            }
        }
    }

    #[test]
    fn coupling_truth_is_lateralized_two_to_one() {
        let m = tiny_session();
        let p = ForwardModelParams::default();
        let s = Synthesizer::new(&m, &p, 42).unwrap();
        let truth = s.optical_truth();
        let n = truth.conv_drive.ncols();
        let cl: Vec<f64> = truth.conv_drive.row(0).to_vec();
        let cr: Vec<f64> = truth.conv_drive.row(1).to_vec();
        // Two-regressor least squares on each channel's truth row.
        let (mut sll, mut slr, mut srr) = (0.0, 0.0, 0.0);
        for i in 0..n {
            sll += cl[i] * cl[i];
            slr += cl[i] * cr[i];
            srr += cr[i] * cr[i];
        }
        let det = sll * srr - slr * slr;
        assert!(det.abs() > 1e-12, "drives are collinear");
        for idx in 0..truth.coupling_od.nrows() {
            let row = truth.coupling_od.row(idx);
            let site_global = idx / N_WAVELENGTHS;
            let hemi = site_global / SITES_PER_HEMI;
            let (mut syl, mut syr) = (0.0, 0.0);
            for i in 0..n {
                syl += row[i] * cl[i];
                syr += row[i] * cr[i];
            }
            let bl = (srr * syl - slr * syr) / det;
            let br = (sll * syr - slr * syl) / det;
            let (contra, ipsi) = if hemi == 0 { (br, bl) } else { (bl, br) };
            assert!(
                contra.abs() >= 2.0 * ipsi.abs() - 1e-9,
                "channel {idx}: contra {contra}, ipsi {ipsi}"
            );
        }
    }

    #[test]
    fn contralateral_beta_envelope_tracks_force_inversely() {
        let m = tiny_session();
        let p = ForwardModelParams::default();
        let s = Synthesizer::new(&m, &p, 42).unwrap();
        // Right-hemisphere channel at the weight peak; its carriers follow
        // the left hand.
        let idx = SITES_PER_HEMI + 5;
        let raw = s.gen_eeg_channel(idx);
        let rate = m.rates.eeg_hz;
        let ts = series_from_rows(SignalKind::Eeg, vec![raw], rate, vec!["probe".into()]).unwrap();
        let bp = design_iir(
            FilterFamily::Butterworth,
            4,
            BandForm::Bandpass(13.0, 30.0),
            rate,
            None,
            None,
        )
        .unwrap();
        let filtered = apply_filter(&bp, &ts, FilterMode::ZeroPhase).unwrap();
        let analytic = hilbert_analytic(&filtered).unwrap();
        // Frame-average the envelope and compare against the drive.
        let frame = (rate * 0.08).round() as usize;
        let n_frames = analytic.envelope.ncols() / frame;
        let mut env = Vec::with_capacity(n_frames);
        let mut drive = Vec::with_capacity(n_frames);
        for f in 0..n_frames {
            let seg = analytic.envelope.slice(ndarray::s![0, f * frame..(f + 1) * frame]);
            env.push(seg.iter().sum::<f64>() / frame as f64);
            drive.push(s.drive_at(Hand::Left.index(), f * frame + frame / 2));
        }
        let r = pearson(&env, &drive);
        assert!(r < -0.3, "beta envelope vs left force: r {r}");
    }

    #[test]
    fn ocular_bursts_are_frontal_weighted() {
        let m = tiny_session();
        let p = ForwardModelParams::default();
        let s = Synthesizer::new(&m, &p, 42).unwrap();
        let eog = s.gen_eog();
        let frontal = s.gen_eeg_channel(0); // eegL01
        let occipital = s.gen_eeg_channel(11); // eegL12
        let rf = pearson(&frontal, &eog);
        let ro = pearson(&occipital, &eog);
        assert!(rf > 2.0 * ro.abs(), "frontal r {rf} vs occipital r {ro}");
        assert!(rf > 0.2, "frontal channel barely sees the bursts: r {rf}");
    }

    #[test]
    fn force_channels_convert_to_newtons_with_bounded_jitter() {
        let m = tiny_session();
        let p = ForwardModelParams::default();
        let s = Synthesizer::new(&m, &p, 42).unwrap();
        let f = s.gen_force_channel(Hand::Left);
        let mvc = m.mvc_left_n;
        let hi = f.iter().cloned().fold(f64::MIN, f64::max);
        assert!((hi - 0.25 * mvc).abs() < 0.04 * mvc, "peak {hi} N");
        // Before the first ramp the sensor reads exactly zero.
        let first = ((m.trials[0].go_time_s - 1.0) * m.rates.force_hz) as usize;
        assert!(f[..first.saturating_sub(2)].iter().all(|&v| v == 0.0));
        // Jitter stays near its design scale inside the hold.
        let go = m.trials[0].go_time_s;
        let a = (go * m.rates.force_hz) as usize;
        let b = ((go + 10.0) * m.rates.force_hz) as usize;
        let pct = session_force_percent(&m, Hand::Left, m.rates.force_hz);
        let resid: Vec<f64> = (a..b).map(|i| (f[i] * 100.0 / mvc) - pct[i]).collect();
        let sd = (resid.iter().map(|v| v * v).sum::<f64>() / resid.len() as f64).sqrt();
        assert!((0.1..1.5).contains(&sd), "jitter sd {sd} %MVC");
    }

    #[test]
    fn uncoupled_model_still_produces_valid_streams() {
        let m = tiny_session();
        let p = ForwardModelParams::uncoupled();
        let s = Synthesizer::new(&m, &p, 9).unwrap();
        let truth = s.optical_truth();
        assert!(truth.coupling_od.iter().all(|&v| v == 0.0));
        assert!(s.gen_fnirs_channel(5).iter().all(|&v| v > 0.0));
        // The EEG envelope no longer moves with force.
        let raw = s.gen_eeg_channel(SITES_PER_HEMI + 5);
        assert!(raw.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn full_recording_assembles_with_consistent_shapes() {
        let m = tiny_session();
        let p = ForwardModelParams::default();
        let (rec, truth) = gen_recording_with_truth(&m, &p, 42).unwrap();
        assert_eq!(rec.eeg.n_channels(), N_SITES);
        assert_eq!(rec.eog.n_channels(), 1);
        assert_eq!(rec.fnirs.n_channels(), N_SITES * N_WAVELENGTHS);
        assert_eq!(rec.skin.n_channels(), N_WAVELENGTHS);
        assert_eq!(rec.force.n_channels(), 2);
        assert_eq!(rec.eeg.n_samples(), (m.duration_s * m.rates.eeg_hz).round() as usize);
        assert_eq!(rec.fnirs.n_samples(), truth.coupling_od.ncols());
        assert_eq!(rec.eeg.labels()[0], "eegL01");
        assert_eq!(rec.fnirs.labels()[1], "fnL01@850");
        assert_eq!(rec.skin.labels()[0], "skin@760");
    }
}
