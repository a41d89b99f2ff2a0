//! Per-modality preprocessing chains composed from the dsp kernels.
//!
//! EEG: anti-aliased downsample, notch bank at the mains and optical-sampling
//! interference harmonics, 1 Hz high-pass, ICA-based ocular cleaning. A 500 Hz
//! intermediate copy of the cleaned EEG is kept so that gamma bands above the
//! 125 Hz Nyquist of the 250 Hz stream remain extractable.
//!
//! fNIRS/skin: 0.25 Hz low-pass on raw intensities, then optical density
//! change dOD = -log10(I / Ibar) against a per-trial pre-cue baseline mean.
//!
//! Force: resample to 250 Hz, band-pass 0.01-10 Hz, an extra 0.01 Hz
//! high-pass, per-trial linear drift removal, scale to %MVC.

use std::collections::BTreeSet;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dsp::{
    apply_filter, apply_spatial_transform, design_iir, fastica_eog_clean, BandForm, FilterFamily,
    FilterMode, IcaConfig, IcaReport, IirFilter,
};
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::resample::resample;
use crate::signal::{linear_detrend_windows, SignalKind, TimeSeries};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EegConfig {
    /// Working rate of the low-band EEG stream.
    pub downsample_hz: f64,
    /// Intermediate rate kept alongside for gamma bands above the
    /// working-rate Nyquist.
    pub gamma_rate_hz: f64,
    /// Mains fundamental; notched together with all harmonics below Nyquist.
    pub notch_mains_hz: f64,
    /// Optical sampling interference fundamental; harmonics likewise.
    pub notch_optical_hz: f64,
    pub notch_q: f64,
    pub highpass_hz: f64,
    pub highpass_order: usize,
    /// |corr| threshold for rejecting the ocular component.
    pub ica_threshold: f64,
    pub ica_seed: u64,
}

impl Default for EegConfig {
    fn default() -> Self {
        Self {
            downsample_hz: 250.0,
            gamma_rate_hz: 500.0,
            notch_mains_hz: 50.0,
            notch_optical_hz: 12.5,
            notch_q: 35.0,
            highpass_hz: 1.0,
            highpass_order: 5,
            ica_threshold: 0.3,
            ica_seed: 0x1CA,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FnirsConfig {
    pub lowpass_hz: f64,
    pub lowpass_order: usize,
}

impl Default for FnirsConfig {
    fn default() -> Self {
        Self {
            lowpass_hz: 0.25,
            lowpass_order: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ForceConfig {
    pub resample_hz: f64,
    pub bandpass_lo_hz: f64,
    pub bandpass_hi_hz: f64,
    pub bandpass_order: usize,
    pub highpass_hz: f64,
    pub highpass_order: usize,
}

impl Default for ForceConfig {
    fn default() -> Self {
        Self {
            resample_hz: 250.0,
            bandpass_lo_hz: 0.01,
            bandpass_hi_hz: 10.0,
            bandpass_order: 3,
            highpass_hz: 0.01,
            highpass_order: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub eeg: EegConfig,
    pub fnirs: FnirsConfig,
    pub force: ForceConfig,
    /// Offline default; streaming decode reuses the same designs causally.
    pub mode: FilterMode,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("eeg.downsample_hz", self.eeg.downsample_hz),
            ("eeg.gamma_rate_hz", self.eeg.gamma_rate_hz),
            ("eeg.notch_mains_hz", self.eeg.notch_mains_hz),
            ("eeg.notch_optical_hz", self.eeg.notch_optical_hz),
            ("eeg.notch_q", self.eeg.notch_q),
            ("eeg.highpass_hz", self.eeg.highpass_hz),
            ("fnirs.lowpass_hz", self.fnirs.lowpass_hz),
            ("force.resample_hz", self.force.resample_hz),
            ("force.bandpass_lo_hz", self.force.bandpass_lo_hz),
            ("force.bandpass_hi_hz", self.force.bandpass_hi_hz),
            ("force.highpass_hz", self.force.highpass_hz),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.eeg.gamma_rate_hz < self.eeg.downsample_hz {
            return Err(Error::Config(format!(
                "eeg.gamma_rate_hz ({}) must be at least eeg.downsample_hz ({})",
                self.eeg.gamma_rate_hz, self.eeg.downsample_hz
            )));
        }
        if self.force.bandpass_lo_hz >= self.force.bandpass_hi_hz {
            return Err(Error::Config(format!(
                "force band-pass edges out of order: {} >= {}",
                self.force.bandpass_lo_hz, self.force.bandpass_hi_hz
            )));
        }
        Ok(())
    }
}

/// Cleaned EEG at the working rate plus the higher-rate twin for gamma bands.
#[derive(Debug, Clone)]
pub struct EegPreprocessed<F: Scalar> {
    pub eeg: TimeSeries<F>,
    pub eeg_gamma: TimeSeries<F>,
    pub ica: IcaReport,
}

fn expect_kind<F: Scalar>(ts: &TimeSeries<F>, want: SignalKind, context: &'static str) -> Result<()> {
    if ts.kind() != want {
        return Err(Error::ShapeMismatch {
            context,
            expected: format!("kind {}", want.as_str()),
            got: ts.kind().as_str().to_string(),
        });
    }
    Ok(())
}

/// All harmonics of `base_hz` strictly below Nyquist.
fn harmonics(base_hz: f64, nyquist_hz: f64) -> Vec<f64> {
    let mut v = Vec::new();
    let mut k = 1.0;
    while k * base_hz < nyquist_hz * 0.999 {
        v.push(k * base_hz);
        k += 1.0;
    }
    v
}

/// One cascade holding a notch per interference frequency. Frequencies are
/// deduplicated (the mains harmonics may coincide with optical ones).
pub fn notch_bank(freqs_hz: &[f64], q: f64, rate_hz: f64) -> Result<IirFilter> {
    let mut seen = BTreeSet::new();
    let mut parts = Vec::new();
    for &f in freqs_hz {
        if seen.insert((f * 1e3).round() as u64) {
            parts.push(design_iir(
                FilterFamily::Notch,
                2,
                BandForm::Notch { f0_hz: f, q },
                rate_hz,
                None,
                None,
            )?);
        }
    }
    IirFilter::cascade(parts)
}

/// Full EEG chain from the acquisition rate. The heavy lifting happens at the
/// intermediate rate so both output streams share identical filtering.
pub fn preprocess_eeg<F: Scalar>(
    raw: &TimeSeries<F>,
    eog_ref: &TimeSeries<F>,
    cfg: &PipelineConfig,
) -> Result<EegPreprocessed<F>> {
    expect_kind(raw, SignalKind::Eeg, "preprocess_eeg")?;
    let mid = resample(raw, cfg.eeg.gamma_rate_hz)?;
    let eog_mid = resample(eog_ref, cfg.eeg.gamma_rate_hz)?;
    preprocess_eeg_at_gamma_rate(&mid, &eog_mid, cfg)
}

/// EEG chain entry point for callers that already downsampled each channel to
/// the intermediate rate (streaming ingest of large sessions).
pub fn preprocess_eeg_at_gamma_rate<F: Scalar>(
    mid: &TimeSeries<F>,
    eog_mid: &TimeSeries<F>,
    cfg: &PipelineConfig,
) -> Result<EegPreprocessed<F>> {
    cfg.validate()?;
    expect_kind(mid, SignalKind::Eeg, "preprocess_eeg")?;
    let rate = mid.rate_hz();
    let nyq = rate / 2.0;

    let mut freqs = harmonics(cfg.eeg.notch_mains_hz, nyq);
    freqs.extend(harmonics(cfg.eeg.notch_optical_hz, nyq));
    let bank = notch_bank(&freqs, cfg.eeg.notch_q, rate)?;
    let notched = apply_filter(&bank, mid, cfg.mode)?;

    let hp = design_iir(
        FilterFamily::Butterworth,
        cfg.eeg.highpass_order,
        BandForm::Highpass(cfg.eeg.highpass_hz),
        rate,
        None,
        None,
    )?;
    let gamma = apply_filter(&hp, &notched, cfg.mode)?;
    drop(notched);

    let low = resample(&gamma, cfg.eeg.downsample_hz)?;
    let eog_low = resample(eog_mid, cfg.eeg.downsample_hz)?;

    let ica_cfg = IcaConfig {
        corr_threshold: cfg.eeg.ica_threshold,
        seed: cfg.eeg.ica_seed,
        ..IcaConfig::default()
    };
    let outcome = fastica_eog_clean(&low, &eog_low, &ica_cfg)?;
    // The mixing is spatial, so the cleaning matrix fitted at the working
    // rate applies unchanged to the higher-rate twin.
    let eeg_gamma = match &outcome.transform {
        Some(t) => apply_spatial_transform(&gamma, t)?,
        None => gamma,
    };
    Ok(EegPreprocessed {
        eeg: outcome.cleaned,
        eeg_gamma,
        ica: outcome.report,
    })
}

fn check_positive_intensity<F: Scalar>(ts: &TimeSeries<F>) -> Result<()> {
    for (ch, row) in ts.data().rows().into_iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            if v.as_f64() <= 0.0 {
                return Err(Error::NonPositiveIntensity {
                    channel: ts.labels()[ch].clone(),
                    sample: i,
                });
            }
        }
    }
    Ok(())
}

/// Optical density change against per-window baselines: each baseline window
/// owns the segment from its start to the next window's start, so a trial
/// epoch never straddles two baselines.
fn od_convert<F: Scalar>(
    intensity: &TimeSeries<F>,
    baseline_windows_s: &[(f64, f64)],
    out_kind: SignalKind,
) -> Result<TimeSeries<F>> {
    let n = intensity.n_samples();
    let clamp = |i: i64| -> usize { i.clamp(0, n as i64) as usize };
    // (segment start, baseline sample range) per window; a missing window
    // list falls back to one whole-series baseline.
    let mut segs: Vec<(usize, usize, usize)> = Vec::new();
    if baseline_windows_s.is_empty() {
        segs.push((0, 0, n));
    } else {
        for (w, &(a_s, b_s)) in baseline_windows_s.iter().enumerate() {
            let a = clamp(intensity.index_of(a_s));
            let b = clamp(intensity.index_of(b_s));
            if b <= a {
                return Err(Error::EmptyOverlap(format!(
                    "baseline window {w} [{a_s}, {b_s}] s covers no samples"
                )));
            }
            if let Some(prev) = segs.last() {
                if a < prev.2 {
                    return Err(Error::Config(format!(
                        "baseline windows out of order at index {w}"
                    )));
                }
            }
            segs.push((a, a, b));
        }
        segs[0].0 = 0; // leading samples use the first baseline
    }

    let mut data = Array2::<F>::zeros((intensity.n_channels(), n));
    for (ch, row) in intensity.data().rows().into_iter().enumerate() {
        for (s, seg) in segs.iter().enumerate() {
            let (start, b0, b1) = *seg;
            let end = segs.get(s + 1).map_or(n, |nx| nx.0);
            let mut ibar = 0.0;
            for i in b0..b1 {
                ibar += row[i].as_f64();
            }
            ibar /= (b1 - b0) as f64;
            for i in start..end {
                let v = row[i].as_f64();
                if v <= 0.0 || ibar <= 0.0 {
                    return Err(Error::NonPositiveIntensity {
                        channel: intensity.labels()[ch].clone(),
                        sample: i,
                    });
                }
                data[[ch, i]] = F::of(-(v / ibar).log10());
            }
        }
    }
    intensity.with_data(out_kind, data, intensity.rate_hz())
}

fn optical_chain<F: Scalar>(
    intensity: &TimeSeries<F>,
    baseline_windows_s: &[(f64, f64)],
    cfg: &PipelineConfig,
    out_kind: SignalKind,
) -> Result<TimeSeries<F>> {
    cfg.validate()?;
    check_positive_intensity(intensity)?;
    let lp = design_iir(
        FilterFamily::Elliptic,
        cfg.fnirs.lowpass_order,
        BandForm::Lowpass(cfg.fnirs.lowpass_hz),
        intensity.rate_hz(),
        None,
        None,
    )?;
    let filtered = apply_filter(&lp, intensity, cfg.mode)?;
    od_convert(&filtered, baseline_windows_s, out_kind)
}

/// Intensity -> optical density chain for the fNIRS channels.
pub fn preprocess_fnirs<F: Scalar>(
    intensity: &TimeSeries<F>,
    baseline_windows_s: &[(f64, f64)],
    cfg: &PipelineConfig,
) -> Result<TimeSeries<F>> {
    expect_kind(intensity, SignalKind::FnirsIntensity, "preprocess_fnirs")?;
    optical_chain(intensity, baseline_windows_s, cfg, SignalKind::FnirsOd)
}

/// Identical chain for the scalp-hemodynamics control channels; the output
/// keeps the skin kind so evaluation can build the control decoder.
pub fn preprocess_skin<F: Scalar>(
    skin: &TimeSeries<F>,
    baseline_windows_s: &[(f64, f64)],
    cfg: &PipelineConfig,
) -> Result<TimeSeries<F>> {
    expect_kind(skin, SignalKind::Skin, "preprocess_skin")?;
    optical_chain(skin, baseline_windows_s, cfg, SignalKind::Skin)
}

/// Force chain: resample, band-pass, extra drift high-pass, per-trial linear
/// detrend over `trial_windows_s`, scale to %MVC (one MVC per channel).
pub fn preprocess_force<F: Scalar>(
    raw: &TimeSeries<F>,
    mvc_newtons: &[f64],
    trial_windows_s: &[(f64, f64)],
    cfg: &PipelineConfig,
) -> Result<TimeSeries<F>> {
    cfg.validate()?;
    expect_kind(raw, SignalKind::Force, "preprocess_force")?;
    if mvc_newtons.len() != raw.n_channels() {
        return Err(Error::ShapeMismatch {
            context: "preprocess_force",
            expected: format!("{} MVC values", raw.n_channels()),
            got: format!("{}", mvc_newtons.len()),
        });
    }
    for &m in mvc_newtons {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::NonPositiveMvc(m));
        }
    }

    let r = resample(raw, cfg.force.resample_hz)?;
    let bp = design_iir(
        FilterFamily::Butterworth,
        cfg.force.bandpass_order,
        BandForm::Bandpass(cfg.force.bandpass_lo_hz, cfg.force.bandpass_hi_hz),
        r.rate_hz(),
        None,
        None,
    )?;
    let r = apply_filter(&bp, &r, cfg.mode)?;
    let hp = design_iir(
        FilterFamily::Elliptic,
        cfg.force.highpass_order,
        BandForm::Highpass(cfg.force.highpass_hz),
        r.rate_hz(),
        None,
        None,
    )?;
    let r = apply_filter(&hp, &r, cfg.mode)?;

    let n = r.n_samples();
    let mut windows = Vec::new();
    for &(a_s, b_s) in trial_windows_s {
        let a = r.index_of(a_s).clamp(0, n as i64) as usize;
        let b = r.index_of(b_s).clamp(0, n as i64) as usize;
        if b > a + 1 {
            windows.push((a, b - a));
        }
    }
    let r = linear_detrend_windows(&r, &windows)?;

    let mut data = r.data().clone();
    for (ch, mut row) in data.rows_mut().into_iter().enumerate() {
        let scale = F::of(100.0 / mvc_newtons[ch]);
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    r.with_data(SignalKind::Force, data, r.rate_hz())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn series(kind: SignalKind, rows: Vec<Vec<f64>>, rate: f64) -> TimeSeries<f64> {
        let c = rows.len();
        let n = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let labels = (0..c).map(|i| format!("ch{i}")).collect();
        TimeSeries::new(kind, Array2::from_shape_vec((c, n), flat).unwrap(), rate, 0.0, labels)
            .unwrap()
    }

    /// Goertzel-style single-bin amplitude estimate over an integer number of
    /// cycles.
    fn tone_amplitude(xs: &[f64], f_hz: f64, rate: f64) -> f64 {
        let n = xs.len() as f64;
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let w = 2.0 * PI * f_hz * i as f64 / rate;
            re += x * w.cos();
            im += x * w.sin();
        }
        2.0 * (re * re + im * im).sqrt() / n
    }

    #[test]
    fn eeg_chain_removes_interference_and_keeps_passband() {
        let rate = 4000.0;
        let n = (20.0 * rate) as usize;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
        // Three channels mixing a passband tone, mains, and DC.
        let tone: Vec<f64> = t.iter().map(|&t| (2.0 * PI * 20.0 * t).sin()).collect();
        let mains: Vec<f64> = t.iter().map(|&t| (2.0 * PI * 50.0 * t).sin()).collect();
        let rows: Vec<Vec<f64>> = [(1.0, 0.8), (0.6, 1.0), (0.9, 0.5)]
            .iter()
            .map(|&(a, b)| {
                t.iter()
                    .enumerate()
                    .map(|(i, _)| 10.0 + a * tone[i] + b * mains[i])
                    .collect()
            })
            .collect();
        let raw = series(SignalKind::Eeg, rows, rate);
        let eog = series(
            SignalKind::Eeg,
            vec![t.iter().map(|&t| (2.0 * PI * 0.3 * t).sin()).collect()],
            rate,
        );
        let cfg = PipelineConfig::default();
        let out = preprocess_eeg(&raw, &eog, &cfg).unwrap();

        assert_eq!(out.eeg.rate_hz(), 250.0);
        assert_eq!(out.eeg_gamma.rate_hz(), 500.0);
        assert_eq!(out.eeg.n_channels(), 3);

        // Interior region past all filter transients.
        let lo = (5.0 * 250.0) as usize;
        let hi = (15.0 * 250.0) as usize;
        for ch in 0..3 {
            let full = out.eeg.channel(ch).to_vec();
            let seg = &full[lo..hi];
            let a50 = tone_amplitude(seg, 50.0, 250.0);
            let a20 = tone_amplitude(seg, 20.0, 250.0);
            let in_amp = [(1.0, 0.8), (0.6, 1.0), (0.9, 0.5)][ch];
            assert!(a50 < 0.02 * in_amp.1, "mains leaked: {a50}");
            assert!((a20 - in_amp.0).abs() < 0.1 * in_amp.0, "passband tone {a20} vs {}", in_amp.0);
            // DC offset removed by the 1 Hz high-pass.
            let last_s = &full[17 * 250..18 * 250];
            let mean = last_s.iter().sum::<f64>() / last_s.len() as f64;
            assert!(mean.abs() < 0.1, "residual offset {mean}");
        }
    }

    #[test]
    fn eeg_chain_is_deterministic() {
        let rate = 1000.0;
        let n = 4000;
        let rows: Vec<Vec<f64>> = (0..2)
            .map(|c| {
                (0..n)
                    .map(|i| {
                        let t = i as f64 / rate;
                        (2.0 * PI * (7.0 + c as f64) * t).sin() + 0.3 * (2.0 * PI * 50.0 * t).sin()
                    })
                    .collect()
            })
            .collect();
        let raw = series(SignalKind::Eeg, rows, rate);
        let eog = series(
            SignalKind::Eeg,
            vec![(0..n).map(|i| ((i / 100) % 7) as f64 * 0.1).collect()],
            rate,
        );
        let mut cfg = PipelineConfig::default();
        cfg.eeg.gamma_rate_hz = 500.0;
        let a = preprocess_eeg(&raw, &eog, &cfg).unwrap();
        let b = preprocess_eeg(&raw, &eog, &cfg).unwrap();
        assert_eq!(a.eeg.data(), b.eeg.data());
        assert_eq!(a.eeg_gamma.data(), b.eeg_gamma.data());
    }

    #[test]
    fn fnirs_constant_intensity_gives_zero_od() {
        let n = 500;
        let raw = series(SignalKind::FnirsIntensity, vec![vec![0.8; n]], 12.5);
        let cfg = PipelineConfig::default();
        let od = preprocess_fnirs(&raw, &[(0.0, 4.0)], &cfg).unwrap();
        assert_eq!(od.kind(), SignalKind::FnirsOd);
        for &v in od.channel(0).iter() {
            assert!(v.abs() < 1e-12, "dOD {v}");
        }
    }

    #[test]
    fn fnirs_step_converges_to_log_ratio() {
        let rate = 12.5;
        let n = (240.0 * rate) as usize;
        let step_at = n / 2;
        let base = 0.9;
        let stepped = base * 10f64.powf(-0.01);
        let row: Vec<f64> = (0..n).map(|i| if i < step_at { base } else { stepped }).collect();
        let raw = series(SignalKind::FnirsIntensity, vec![row], rate);
        let cfg = PipelineConfig::default();
        let od = preprocess_fnirs(&raw, &[(0.0, 60.0)], &cfg).unwrap();
        // Well after the step and the 0.25 Hz transient.
        let full = od.channel(0).to_vec();
        let tail = &full[n - (30.0 * rate) as usize..];
        for &v in tail {
            assert!((v - 0.01).abs() < 1e-3, "dOD tail {v}");
        }
    }

    #[test]
    fn fnirs_rejects_cardiac_band() {
        let rate = 12.5;
        let n = (400.0 * rate) as usize;
        let row: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                1.0 + 0.05 * (2.0 * PI * 1.0 * t).sin()
            })
            .collect();
        let raw = series(SignalKind::FnirsIntensity, vec![row.clone()], rate);
        let cfg = PipelineConfig::default();
        let od = preprocess_fnirs(&raw, &[(0.0, 60.0)], &cfg).unwrap();
        // Unfiltered equivalent: dOD of the raw oscillation.
        let od_raw: Vec<f64> = row.iter().map(|&v| -(v / 1.0).log10()).collect();
        let interior = (60.0 * rate) as usize..(340.0 * rate) as usize;
        let filtered = od.channel(0).to_vec();
        let a_f = tone_amplitude(&filtered[interior.clone()], 1.0, rate);
        let a_r = tone_amplitude(&od_raw[interior], 1.0, rate);
        assert!(a_f < 0.05 * a_r, "cardiac leak {a_f} vs raw {a_r}");
    }

    #[test]
    fn fnirs_names_bad_sample() {
        let mut row = vec![1.0; 100];
        row[37] = 0.0;
        let raw = series(SignalKind::FnirsIntensity, vec![vec![1.0; 100], row], 12.5);
        let err = preprocess_fnirs(&raw, &[(0.0, 4.0)], &PipelineConfig::default()).unwrap_err();
        match err {
            Error::NonPositiveIntensity { channel, sample } => {
                assert_eq!(channel, "ch1");
                assert_eq!(sample, 37);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn skin_uses_identical_chain() {
        let rate = 12.5;
        let n = (240.0 * rate) as usize;
        let row: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.02 * (2.0 * PI * 0.1 * i as f64 / rate).sin())
            .collect();
        let cfg = PipelineConfig::default();
        let f = preprocess_fnirs(
            &series(SignalKind::FnirsIntensity, vec![row.clone()], rate),
            &[(0.0, 20.0)],
            &cfg,
        )
        .unwrap();
        let s = preprocess_skin(
            &series(SignalKind::Skin, vec![row], rate),
            &[(0.0, 20.0)],
            &cfg,
        )
        .unwrap();
        assert_eq!(s.kind(), SignalKind::Skin);
        assert_eq!(f.data(), s.data());
    }

    #[test]
    fn force_zero_stays_zero_and_scale_cancels() {
        let cfg = PipelineConfig::default();
        let zero = series(SignalKind::Force, vec![vec![0.0; 4000], vec![0.0; 4000]], 1000.0);
        let out = preprocess_force(&zero, &[200.0, 150.0], &[(0.5, 3.5)], &cfg).unwrap();
        assert_eq!(out.rate_hz(), 250.0);
        for ch in 0..2 {
            for &v in out.channel(ch).iter() {
                assert!(v.abs() < 1e-9);
            }
        }

        let rate = 1000.0;
        let n = 30_000;
        let rows: Vec<Vec<f64>> = (0..2)
            .map(|c| {
                (0..n)
                    .map(|i| 20.0 + 8.0 * (2.0 * PI * (0.5 + c as f64 * 0.2) * i as f64 / rate).sin())
                    .collect()
            })
            .collect();
        let raw = series(SignalKind::Force, rows.clone(), rate);
        let scaled = series(
            SignalKind::Force,
            rows.iter()
                .map(|r| r.iter().map(|v| v * 3.0).collect())
                .collect(),
            rate,
        );
        let a = preprocess_force(&raw, &[200.0, 160.0], &[(2.0, 28.0)], &cfg).unwrap();
        let b = preprocess_force(&scaled, &[600.0, 480.0], &[(2.0, 28.0)], &cfg).unwrap();
        for ch in 0..2 {
            for (x, y) in a.channel(ch).iter().zip(b.channel(ch).iter()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn force_passband_amplitude_and_mains_rejection() {
        let cfg = PipelineConfig::default();
        let rate = 1000.0;
        let n = 60_000;
        // 1 Hz tracking oscillation of 35 N amplitude plus 50 Hz sensor hum.
        let row: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                35.0 * (2.0 * PI * 1.0 * t).sin() + 5.0 * (2.0 * PI * 50.0 * t).sin()
            })
            .collect();
        let raw = series(SignalKind::Force, vec![row], rate);
        let out = preprocess_force(&raw, &[200.0], &[], &cfg).unwrap();
        let seg = out.channel(0).to_vec()[(10.0 * 250.0) as usize..(50.0 * 250.0) as usize].to_vec();
        let a1 = tone_amplitude(&seg, 1.0, 250.0);
        let a50 = tone_amplitude(&seg, 50.0, 250.0);
        // 35 N on a 200 N MVC is 17.5 %MVC.
        assert!((a1 - 17.5).abs() < 0.175, "passband amplitude {a1}");
        let in50 = 5.0 * 100.0 / 200.0;
        assert!(a50 < in50 * 10f64.powf(-30.0 / 20.0), "mains on force leaked: {a50}");
    }

    #[test]
    fn force_detrends_each_trial_window() {
        let cfg = PipelineConfig::default();
        let rate = 1000.0;
        let n = 20_000;
        // Drift plus oscillation; windows cover two "trials".
        let row: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                0.8 * t + 10.0 * (2.0 * PI * 1.5 * t).sin()
            })
            .collect();
        let raw = series(SignalKind::Force, vec![row], rate);
        let out = preprocess_force(&raw, &[100.0], &[(1.0, 9.0), (11.0, 19.0)], &cfg).unwrap();
        let full = out.channel(0).to_vec();
        for (a_s, b_s) in [(1.0f64, 9.0f64), (11.0, 19.0)] {
            let a = (a_s * 250.0) as usize;
            let b = (b_s * 250.0) as usize;
            let seg = &full[a..b];
            let m = seg.len() as f64;
            let mean = seg.iter().sum::<f64>() / m;
            let mut sxy = 0.0;
            let mut sxx = 0.0;
            for (i, &y) in seg.iter().enumerate() {
                let x = i as f64 - (m - 1.0) / 2.0;
                sxy += x * y;
                sxx += x * x;
            }
            assert!(mean.abs() < 1e-6, "window mean {mean}");
            assert!((sxy / sxx).abs() < 1e-9, "window slope {}", sxy / sxx);
        }
    }

    #[test]
    fn config_round_trips_and_rejects_bad_values() {
        let cfg = PipelineConfig::default();
        let js = serde_json::to_string_pretty(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&js).unwrap();
        assert_eq!(back.eeg.downsample_hz, 250.0);
        assert_eq!(back.eeg.notch_optical_hz, 12.5);
        assert_eq!(back.fnirs.lowpass_order, 7);
        assert_eq!(back.force.bandpass_hi_hz, 10.0);
        assert_eq!(back.mode, FilterMode::ZeroPhase);

        let mut bad = PipelineConfig::default();
        bad.force.bandpass_lo_hz = 12.0;
        assert!(bad.validate().is_err());
        let mut bad = PipelineConfig::default();
        bad.eeg.highpass_hz = -1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mvc_must_be_positive() {
        let raw = series(SignalKind::Force, vec![vec![0.0; 2000]], 1000.0);
        let err =
            preprocess_force(&raw, &[0.0], &[], &PipelineConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonPositiveMvc(_)));
    }
}
