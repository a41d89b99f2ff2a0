//! Band power/phase features on a shared 12.5 Hz clock, multi-modal column
//! assembly, per-trial concatenation, lag-window indexing, and column
//! standardization.
//!
//! Column layout is fixed by (channel index, band index, feature type):
//! for every EEG channel, for every band, a power column then a phase
//! column; after all EEG columns, one column per fNIRS channel. With 24
//! sites, 7 bands and 2 wavelengths that is 24*7*2 + 24*2 = 384 columns.

use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dsp::{apply_filter, design_iir, hilbert_analytic, unwrap_phase, wrap_phase, BandForm, FilterFamily, FilterMode};
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::resample::resample;
use crate::signal::{SignalKind, TimeSeries};

/// Shared clock of the assembled feature stream (the fNIRS rate).
pub const FEATURE_RATE_HZ: f64 = 12.5;
/// History span of one decoder input window.
pub const LAG_WINDOW_MS: f64 = 800.0;
/// Band filters need this much sampling headroom above the top edge.
pub const MIN_RATE_FACTOR: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSpec {
    pub name: &'static str,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

/// The fixed analysis bands.
pub const EEG_BANDS: [BandSpec; 7] = [
    BandSpec { name: "delta", lo_hz: 1.0, hi_hz: 4.0 },
    BandSpec { name: "theta", lo_hz: 4.0, hi_hz: 8.0 },
    BandSpec { name: "alpha", lo_hz: 8.0, hi_hz: 13.0 },
    BandSpec { name: "beta", lo_hz: 13.0, hi_hz: 30.0 },
    BandSpec { name: "low-gamma", lo_hz: 30.0, hi_hz: 50.0 },
    BandSpec { name: "mid-gamma", lo_hz: 70.0, hi_hz: 110.0 },
    BandSpec { name: "high-gamma", lo_hz: 130.0, hi_hz: 200.0 },
];

/// Per-band Hilbert features of one series: instantaneous power (squared
/// envelope) and phase, both resampled to `out_rate_hz`.
///
/// Power is clamped at zero after resampling (the anti-alias kernel can
/// undershoot); phase is unwrapped, resampled, then rewrapped to (-pi, pi].
pub fn band_power_phase<F: Scalar>(
    ts: &TimeSeries<F>,
    band: &BandSpec,
    out_rate_hz: f64,
    mode: FilterMode,
) -> Result<(TimeSeries<F>, TimeSeries<F>)> {
    if ts.rate_hz() < MIN_RATE_FACTOR * band.hi_hz {
        return Err(Error::CutoffOutOfRange {
            cutoff_hz: band.hi_hz,
            nyquist_hz: ts.rate_hz() / 2.0,
        });
    }
    let bp = design_iir(
        FilterFamily::Butterworth,
        4,
        BandForm::Bandpass(band.lo_hz, band.hi_hz),
        ts.rate_hz(),
        None,
        None,
    )?;
    let filtered = apply_filter(&bp, ts, mode)?;
    let analytic = hilbert_analytic(&filtered)?;

    let power = analytic.envelope.mapv(|e| e * e);
    let power = ts.with_data(SignalKind::Feature, power, ts.rate_hz())?;
    let mut power = resample(&power, out_rate_hz)?;
    let clamped = power.data().mapv(|v| if v < F::zero() { F::zero() } else { v });
    power = power.with_data(SignalKind::Feature, clamped, out_rate_hz)?;

    let mut phase = analytic.phase;
    for mut row in phase.rows_mut() {
        unwrap_phase(row.as_slice_mut().expect("contiguous row"));
    }
    let phase = ts.with_data(SignalKind::Feature, phase, ts.rate_hz())?;
    let phase = resample(&phase, out_rate_hz)?;
    let mut wrapped = phase.data().clone();
    for mut row in wrapped.rows_mut() {
        wrap_phase(row.as_slice_mut().expect("contiguous row"));
    }
    let phase = phase.with_data(SignalKind::Feature, wrapped, out_rate_hz)?;
    Ok((power, phase))
}

/// Names and group membership of the assembled feature columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub names: Vec<String>,
    /// Group name -> member columns. Groups: "eeg", "fnirs", and one
    /// "eeg-<band>" per band (band columns are non-contiguous by layout).
    pub group_index: BTreeMap<String, Vec<usize>>,
}

pub fn feature_layout(
    eeg_labels: &[String],
    bands: &[BandSpec],
    fnirs_labels: &[String],
) -> FeatureLayout {
    let mut names = Vec::new();
    let mut group_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for ch in eeg_labels {
        for b in bands {
            for feat in ["pow", "phase"] {
                let col = names.len();
                names.push(format!("eeg:{ch}:{}:{feat}", b.name));
                group_index.entry("eeg".into()).or_default().push(col);
                group_index
                    .entry(format!("eeg-{}", b.name))
                    .or_default()
                    .push(col);
            }
        }
    }
    for ch in fnirs_labels {
        let col = names.len();
        names.push(format!("fnirs:{ch}"));
        group_index.entry("fnirs".into()).or_default().push(col);
    }
    FeatureLayout { names, group_index }
}

/// One trial's aligned feature frames (rows) on the shared clock.
#[derive(Debug, Clone)]
pub struct FeatureBlock<F: Scalar> {
    pub frames: Array2<F>,
    pub rate_hz: f64,
    pub t0_s: f64,
    pub layout: FeatureLayout,
}

/// Extract the full multi-modal block for one trial epoch. Bands whose top
/// edge exceeds the working-rate headroom are taken from `eeg_gamma`.
pub fn extract_trial_features<F: Scalar>(
    eeg: &TimeSeries<F>,
    eeg_gamma: Option<&TimeSeries<F>>,
    fnirs_od: &TimeSeries<F>,
    bands: &[BandSpec],
    mode: FilterMode,
) -> Result<FeatureBlock<F>> {
    let out_rate = FEATURE_RATE_HZ;
    if let Some(g) = eeg_gamma {
        if g.n_channels() != eeg.n_channels() {
            return Err(Error::ShapeMismatch {
                context: "extract_trial_features",
                expected: format!("{} gamma-stream channels", eeg.n_channels()),
                got: format!("{}", g.n_channels()),
            });
        }
        if (g.t0_s() - eeg.t0_s()).abs() > 0.5 / out_rate {
            return Err(Error::Config(format!(
                "eeg streams misaligned: t0 {} vs {}",
                eeg.t0_s(),
                g.t0_s()
            )));
        }
    }
    if (fnirs_od.t0_s() - eeg.t0_s()).abs() > 0.5 / out_rate {
        return Err(Error::Config(format!(
            "fnirs misaligned with eeg: t0 {} vs {}",
            fnirs_od.t0_s(),
            eeg.t0_s()
        )));
    }

    let c = eeg.n_channels();
    let layout = feature_layout(eeg.labels(), bands, fnirs_od.labels());

    // Per-band feature series, choosing the source stream with enough
    // headroom for the band's top edge.
    let mut per_band = Vec::with_capacity(bands.len());
    for b in bands {
        let src = if eeg.rate_hz() >= MIN_RATE_FACTOR * b.hi_hz {
            eeg
        } else {
            eeg_gamma.ok_or(Error::CutoffOutOfRange {
                cutoff_hz: b.hi_hz,
                nyquist_hz: eeg.rate_hz() / 2.0,
            })?
        };
        per_band.push(band_power_phase(src, b, out_rate, mode)?);
    }
    let od = if (fnirs_od.rate_hz() - out_rate).abs() > 1e-9 * out_rate {
        resample(fnirs_od, out_rate)?
    } else {
        fnirs_od.clone()
    };

    // Sources can disagree by one frame from resampling arithmetic; trim to
    // the common length.
    let t = per_band
        .iter()
        .flat_map(|(p, ph)| [p.n_samples(), ph.n_samples()])
        .chain([od.n_samples()])
        .min()
        .expect("at least one part");

    let n_cols = layout.names.len();
    let mut frames = Array2::<F>::zeros((t, n_cols));
    for (bi, (pow, ph)) in per_band.iter().enumerate() {
        for ch in 0..c {
            let col = (ch * bands.len() + bi) * 2;
            for i in 0..t {
                frames[[i, col]] = pow.data()[[ch, i]];
                frames[[i, col + 1]] = ph.data()[[ch, i]];
            }
        }
    }
    let fnirs_base = c * bands.len() * 2;
    for ch in 0..od.n_channels() {
        for i in 0..t {
            frames[[i, fnirs_base + ch]] = od.data()[[ch, i]];
        }
    }
    Ok(FeatureBlock {
        frames,
        rate_hz: out_rate,
        t0_s: eeg.t0_s(),
        layout,
    })
}

/// Column-concatenate two blocks over their mutual time support. Clocks must
/// share the rate and differ in start time by a whole number of frames.
pub fn align_streams<F: Scalar>(
    a: &FeatureBlock<F>,
    b: &FeatureBlock<F>,
) -> Result<FeatureBlock<F>> {
    if (a.rate_hz - b.rate_hz).abs() > 1e-9 * a.rate_hz {
        return Err(Error::RateMismatch {
            context: "align_streams",
            expected_hz: a.rate_hz,
            got_hz: b.rate_hz,
        });
    }
    let shift = (b.t0_s - a.t0_s) * a.rate_hz;
    if (shift - shift.round()).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "streams offset by a fractional frame: {shift} frames"
        )));
    }
    let shift = shift.round() as i64; // b starts this many frames after a
    let start_a = shift.max(0) as usize;
    let start_b = (-shift).max(0) as usize;
    let na = a.frames.nrows() as i64 - start_a as i64;
    let nb = b.frames.nrows() as i64 - start_b as i64;
    let t = na.min(nb);
    if t <= 0 {
        return Err(Error::EmptyOverlap(format!(
            "streams share no frames (lengths {}, {}, offset {shift})",
            a.frames.nrows(),
            b.frames.nrows()
        )));
    }
    let t = t as usize;

    let ca = a.frames.ncols();
    let cb = b.frames.ncols();
    let mut frames = Array2::<F>::zeros((t, ca + cb));
    frames
        .slice_mut(s![.., ..ca])
        .assign(&a.frames.slice(s![start_a..start_a + t, ..]));
    frames
        .slice_mut(s![.., ca..])
        .assign(&b.frames.slice(s![start_b..start_b + t, ..]));

    let mut names = a.layout.names.clone();
    names.extend(b.layout.names.iter().cloned());
    let mut group_index = a.layout.group_index.clone();
    for (g, cols) in &b.layout.group_index {
        let shifted: Vec<usize> = cols.iter().map(|c| c + ca).collect();
        group_index.entry(g.clone()).or_default().extend(shifted);
    }
    Ok(FeatureBlock {
        frames,
        rate_hz: a.rate_hz,
        t0_s: a.t0_s + start_a as f64 / a.rate_hz,
        layout: FeatureLayout { names, group_index },
    })
}

/// Frame range of one trial inside the concatenated stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpan {
    pub trial: usize,
    pub condition_id: u8,
    pub start: usize,
    pub len: usize,
}

/// Per-column z-scoring parameters fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns with (numerically) zero training variance; mapped to 0.
    pub constant: Vec<bool>,
}

impl Standardization {
    /// Population mean/std over the given frame rows only.
    pub fn fit<F: Scalar>(frames: &ArrayView2<'_, F>, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptySignal("Standardization::fit"));
        }
        let ncols = frames.ncols();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; ncols];
        let mut std = vec![0.0; ncols];
        for &r in rows {
            for c in 0..ncols {
                mean[c] += frames[[r, c]].as_f64();
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        for &r in rows {
            for c in 0..ncols {
                let d = frames[[r, c]].as_f64() - mean[c];
                std[c] += d * d;
            }
        }
        let mut constant = vec![false; ncols];
        for c in 0..ncols {
            std[c] = (std[c] / n).sqrt();
            if std[c] <= 1e-12 * mean[c].abs().max(1.0) {
                constant[c] = true;
                std[c] = 1.0;
            }
        }
        Ok(Self { mean, std, constant })
    }

    pub fn apply_in_place<F: Scalar>(&self, frames: &mut Array2<F>) -> Result<()> {
        if frames.ncols() != self.mean.len() {
            return Err(Error::ShapeMismatch {
                context: "Standardization::apply",
                expected: format!("{} columns", self.mean.len()),
                got: format!("{}", frames.ncols()),
            });
        }
        for mut row in frames.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = if self.constant[c] {
                    F::zero()
                } else {
                    F::of((v.as_f64() - self.mean[c]) / self.std[c])
                };
            }
        }
        Ok(())
    }
}

/// All trials stacked on the shared clock, with targets and trial bounds.
#[derive(Debug, Clone)]
pub struct FeatureStream<F: Scalar> {
    pub frames: Array2<F>,
    /// %MVC force per frame, one column per hand (left, right).
    pub targets: Array2<F>,
    pub rate_hz: f64,
    pub layout: FeatureLayout,
    pub spans: Vec<TrialSpan>,
    /// Present once the stream has been standardized.
    pub stats: Option<Standardization>,
}

impl<F: Scalar> FeatureStream<F> {
    /// Stack per-trial blocks and their target matrices (frames x hands).
    pub fn concat_trials(parts: Vec<(FeatureBlock<F>, Array2<F>, u8)>) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptySignal("concat_trials"))?;
        let layout = first.0.layout.clone();
        let rate = first.0.rate_hz;
        let n_hands = first.1.ncols();
        let total: usize = parts
            .iter()
            .map(|(b, y, _)| b.frames.nrows().min(y.nrows()))
            .sum();
        let mut frames = Array2::<F>::zeros((total, layout.names.len()));
        let mut targets = Array2::<F>::zeros((total, n_hands));
        let mut spans = Vec::with_capacity(parts.len());
        let mut at = 0;
        for (trial, (block, y, condition_id)) in parts.into_iter().enumerate() {
            if block.layout != layout {
                return Err(Error::ShapeMismatch {
                    context: "concat_trials",
                    expected: "identical feature layout across trials".into(),
                    got: format!("trial {trial} differs"),
                });
            }
            let t = block.frames.nrows().min(y.nrows());
            frames
                .slice_mut(s![at..at + t, ..])
                .assign(&block.frames.slice(s![..t, ..]));
            targets
                .slice_mut(s![at..at + t, ..])
                .assign(&y.slice(s![..t, ..]));
            spans.push(TrialSpan {
                trial,
                condition_id,
                start: at,
                len: t,
            });
            at += t;
        }
        Ok(Self {
            frames,
            targets,
            rate_hz: rate,
            layout,
            spans,
            stats: None,
        })
    }

    /// Frame rows belonging to the listed trials.
    pub fn rows_of_trials(&self, trials: &[usize]) -> Vec<usize> {
        let mut rows = Vec::new();
        for span in &self.spans {
            if trials.contains(&span.trial) {
                rows.extend(span.start..span.start + span.len);
            }
        }
        rows
    }

    /// Standardized copy; stats come from the caller (training split only).
    pub fn standardized(&self, stats: &Standardization) -> Result<Self> {
        let mut out = self.clone();
        stats.apply_in_place(&mut out.frames)?;
        out.stats = Some(stats.clone());
        Ok(out)
    }
}

/// Frame indices `t` that have a full lag window behind them inside their
/// own trial (windows never straddle trial boundaries).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagWindows {
    pub k: usize,
    pub indices: Vec<usize>,
}

impl LagWindows {
    pub fn build<F: Scalar>(stream: &FeatureStream<F>, window_ms: f64) -> Result<Self> {
        let k = (window_ms / 1000.0 * stream.rate_hz).round() as usize + 1;
        if k < 1 {
            return Err(Error::Config(format!(
                "lag window of {window_ms} ms spans no frames at {} Hz",
                stream.rate_hz
            )));
        }
        let mut indices = Vec::new();
        for span in &stream.spans {
            for t in span.start + k - 1..span.start + span.len {
                indices.push(t);
            }
        }
        Ok(Self { k, indices })
    }

    /// The K x F history matrix ending at frame `t` (rows oldest to newest).
    pub fn window_of<'a, F: Scalar>(
        &self,
        stream: &'a FeatureStream<F>,
        t: usize,
    ) -> ArrayView2<'a, F> {
        stream.frames.slice(s![t + 1 - self.k..=t, ..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine_series(f_hz: f64, amp: f64, rate: f64, dur_s: f64) -> TimeSeries<f64> {
        let n = (dur_s * rate) as usize;
        let row: Vec<f64> = (0..n)
            .map(|i| amp * (2.0 * PI * f_hz * i as f64 / rate).sin())
            .collect();
        TimeSeries::new(
            SignalKind::Eeg,
            Array2::from_shape_vec((1, n), row).unwrap(),
            rate,
            0.0,
            vec!["c0".into()],
        )
        .unwrap()
    }

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
    fn layout_counts_and_groups() {
        let eeg: Vec<String> = (0..24).map(|i| format!("E{i:02}")).collect();
        let fnirs: Vec<String> = (0..24)
            .flat_map(|i| [format!("S{i:02}-760"), format!("S{i:02}-850")])
            .collect();
        let lay = feature_layout(&eeg, &EEG_BANDS, &fnirs);
        assert_eq!(lay.names.len(), 384);
        assert_eq!(lay.group_index["eeg"].len(), 336);
        assert_eq!(lay.group_index["fnirs"].len(), 48);
        for b in &EEG_BANDS {
            assert_eq!(lay.group_index[&format!("eeg-{}", b.name)].len(), 48);
        }
        // Every column appears in exactly one modality group.
        let mut seen = vec![0usize; 384];
        for g in ["eeg", "fnirs"] {
            for &c in &lay.group_index[g] {
                seen[c] += 1;
            }
        }
        assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn pure_tone_lands_in_its_band() {
        let ts = sine_series(20.0, 1.0, 250.0, 18.0);
        let beta = &EEG_BANDS[3];
        let alpha = &EEG_BANDS[2];
        let (pb, _) = band_power_phase(&ts, beta, 12.5, FilterMode::ZeroPhase).unwrap();
        let (pa, _) = band_power_phase(&ts, alpha, 12.5, FilterMode::ZeroPhase).unwrap();
        let n = pb.n_samples();
        let interior = n / 4..3 * n / 4;
        let mb: f64 = pb.channel(0).to_vec()[interior.clone()].iter().sum::<f64>()
            / (interior.len() as f64);
        let ma: f64 = pa.channel(0).to_vec()[interior.clone()].iter().sum::<f64>()
            / (interior.len() as f64);
        assert!((mb - 1.0).abs() < 0.05, "beta power {mb}");
        assert!(ma < 0.05 * mb, "alpha power {ma} vs beta {mb}");
    }

    #[test]
    fn zero_signal_has_zero_power() {
        let ts = sine_series(20.0, 0.0, 250.0, 10.0);
        let (p, _) = band_power_phase(&ts, &EEG_BANDS[3], 12.5, FilterMode::ZeroPhase).unwrap();
        for &v in p.channel(0).iter() {
            assert!(v.abs() < 1e-18);
        }
    }

    #[test]
    fn phase_slope_matches_carrier_frequency() {
        // Keep the native rate so the phase is inspected before decimation.
        let ts = sine_series(10.0, 1.0, 250.0, 12.0);
        let (_, ph) = band_power_phase(&ts, &EEG_BANDS[2], 250.0, FilterMode::ZeroPhase).unwrap();
        let mut phase = ph.channel(0).to_vec();
        unwrap_phase(&mut phase);
        let n = phase.len();
        let seg = &phase[n / 4..3 * n / 4];
        let m = seg.len() as f64;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mean_idx = (m - 1.0) / 2.0;
        let mean_y = seg.iter().sum::<f64>() / m;
        for (i, &y) in seg.iter().enumerate() {
            let x = i as f64 - mean_idx;
            sxy += x * (y - mean_y);
            sxx += x * x;
        }
        let slope = sxy / sxx * 250.0; // rad/s
        let want = 2.0 * PI * 10.0;
        assert!((slope - want).abs() < 1e-3 * want, "slope {slope} vs {want}");
    }

    #[test]
    fn band_needs_rate_headroom() {
        let ts = sine_series(40.0, 1.0, 250.0, 10.0);
        let err = band_power_phase(&ts, &EEG_BANDS[6], 12.5, FilterMode::ZeroPhase).unwrap_err();
        assert!(matches!(err, Error::CutoffOutOfRange { .. }));
    }

    #[test]
    fn slow_amplitude_modulation_survives_decimation() {
        let rate = 250.0;
        let dur = 40.0;
        let n = (dur * rate) as usize;
        let row: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                (1.0 + 0.3 * (2.0 * PI * 0.2 * t).sin()) * (2.0 * PI * 20.0 * t).sin()
            })
            .collect();
        let ts = TimeSeries::new(
            SignalKind::Eeg,
            Array2::from_shape_vec((1, n), row).unwrap(),
            rate,
            0.0,
            vec!["c0".into()],
        )
        .unwrap();
        let (p, _) = band_power_phase(&ts, &EEG_BANDS[3], 12.5, FilterMode::ZeroPhase).unwrap();
        let v = p.channel(0).to_vec();
        let interior = &v[(5.0 * 12.5) as usize..(35.0 * 12.5) as usize];
        // Power of (1 + m sin)·carrier has a 0.2 Hz component of 2m.
        let a = tone_amplitude(interior, 0.2, 12.5);
        assert!((a - 0.6).abs() < 0.05 * 0.6, "AM amplitude {a}");
    }

    fn block(vals: Vec<Vec<f64>>, t0: f64, name: &str) -> FeatureBlock<f64> {
        let t = vals.len();
        let c = vals[0].len();
        let flat: Vec<f64> = vals.into_iter().flatten().collect();
        let names = (0..c).map(|i| format!("{name}{i}")).collect();
        let mut group_index = BTreeMap::new();
        group_index.insert(name.to_string(), (0..c).collect());
        FeatureBlock {
            frames: Array2::from_shape_vec((t, c), flat).unwrap(),
            rate_hz: 12.5,
            t0_s: t0,
            layout: FeatureLayout { names, group_index },
        }
    }

    #[test]
    fn align_concatenates_identical_clocks() {
        let a = block(vec![vec![1.0], vec![2.0], vec![3.0]], 0.0, "a");
        let b = block(vec![vec![4.0], vec![5.0], vec![6.0]], 0.0, "b");
        let out = align_streams(&a, &b).unwrap();
        assert_eq!(out.frames.nrows(), 3);
        assert_eq!(out.frames.ncols(), 2);
        assert_eq!(out.layout.names, vec!["a0", "b0"]);
        assert_eq!(out.layout.group_index["b"], vec![1]);
        assert_eq!(out.frames[[0, 1]], 4.0);
    }

    #[test]
    fn align_drops_frames_outside_mutual_support() {
        let a = block(vec![vec![1.0], vec![2.0], vec![3.0]], 0.0, "a");
        // Starts one 80 ms frame late: first frame of `a` has no partner.
        let b = block(vec![vec![9.0], vec![8.0]], 0.08, "b");
        let out = align_streams(&a, &b).unwrap();
        assert_eq!(out.frames.nrows(), 2);
        assert_eq!(out.t0_s, 0.08);
        assert_eq!(out.frames[[0, 0]], 2.0);
        assert_eq!(out.frames[[0, 1]], 9.0);

        let c = block(vec![vec![1.0]], 10.0, "c");
        assert!(matches!(
            align_streams(&a, &c).unwrap_err(),
            Error::EmptyOverlap(_)
        ));
        let d = block(vec![vec![1.0]], 0.03, "d");
        assert!(matches!(align_streams(&a, &d).unwrap_err(), Error::Config(_)));
       }

    fn counting_stream(lens: &[usize], ncols: usize) -> FeatureStream<f64> {
        let parts: Vec<(FeatureBlock<f64>, Array2<f64>, u8)> = lens
            .iter()
            .enumerate()
            .map(|(i, &len)| {
                let vals: Vec<Vec<f64>> = (0..len)
                    .map(|r| (0..ncols).map(|c| (r * ncols + c) as f64 + 1000.0 * i as f64).collect())
                    .collect();
                let y = Array2::from_shape_fn((len, 2), |(r, h)| (r + h) as f64);
                (block(vals, 0.0, "f"), y, (i % 4 + 1) as u8)
            })
            .collect();
        FeatureStream::concat_trials(parts).unwrap()
    }

    #[test]
    fn lag_windows_respect_trial_bounds() {
        let s = counting_stream(&[11], 3);
        let w = LagWindows::build(&s, LAG_WINDOW_MS).unwrap();
        assert_eq!(w.k, 11);
        assert_eq!(w.indices, vec![10]);

        let s = counting_stream(&[20], 3);
        let w = LagWindows::build(&s, LAG_WINDOW_MS).unwrap();
        assert_eq!(w.indices.len(), 10);

        // Two trials: no window may span the boundary.
        let s = counting_stream(&[15, 14], 3);
        let w = LagWindows::build(&s, LAG_WINDOW_MS).unwrap();
        assert_eq!(w.indices, vec![10, 11, 12, 13, 14, 25, 26, 27, 28]);
        let x = w.window_of(&s, 25);
        assert_eq!(x.nrows(), 11);
        // Window ending at the second trial's first eligible frame starts at
        // that trial's own first frame.
        assert_eq!(x[[0, 0]], 1000.0);
        assert_eq!(x[[10, 0]], (10 * 3) as f64 + 1000.0);
    }

    #[test]
    fn standardization_is_train_only_and_handles_constants() {
        let mut s = counting_stream(&[10, 10], 2);
        // Make column 1 constant on the training rows.
        for r in 0..10 {
            s.frames[[r, 1]] = 7.0;
        }
        let train_rows: Vec<usize> = (0..10).collect();
        let stats = Standardization::fit(&s.frames.view(), &train_rows).unwrap();
        assert!(stats.constant[1]);
        assert!(!stats.constant[0]);

        let z = s.standardized(&stats).unwrap();
        for r in 0..20 {
            assert_eq!(z.frames[[r, 1]], 0.0);
        }
        // Hand-checked z-score: train column 0 is 0,2,4,..,18.
        assert!((stats.mean[0] - 9.0).abs() < 1e-12);
        let var: f64 = (0..10).map(|r| ((r * 2) as f64 - 9.0).powi(2)).sum::<f64>() / 10.0;
        assert!((stats.std[0] - var.sqrt()).abs() < 1e-12);
        let want = ((4.0) - 9.0) / var.sqrt();
        assert!((z.frames[[2, 0]] - want).abs() < 1e-12);

        // Perturbing non-train rows leaves refitted stats identical.
        let mut s2 = s.clone();
        for r in 10..20 {
            s2.frames[[r, 0]] += 123.0;
        }
        let stats2 = Standardization::fit(&s2.frames.view(), &train_rows).unwrap();
        assert_eq!(stats.mean, stats2.mean);
        assert_eq!(stats.std, stats2.std);
    }

    #[test]
    fn trial_block_assembly_places_columns() {
        // Two channels, two bands at 250 Hz; one "fnirs" channel at 12.5 Hz.
        let rate = 250.0;
        let n = (12.0 * rate) as usize;
        let rows: Vec<Vec<f64>> = vec![
            (0..n).map(|i| (2.0 * PI * 10.0 * i as f64 / rate).sin()).collect(),
            (0..n).map(|i| (2.0 * PI * 20.0 * i as f64 / rate).sin()).collect(),
        ];
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let eeg = TimeSeries::new(
            SignalKind::Eeg,
            Array2::from_shape_vec((2, n), flat).unwrap(),
            rate,
            0.0,
            vec!["e0".into(), "e1".into()],
        )
        .unwrap();
        let nf = (12.0 * 12.5) as usize;
        let od = TimeSeries::new(
            SignalKind::FnirsOd,
            Array2::from_elem((1, nf), 0.25),
            12.5,
            0.0,
            vec!["f0".into()],
        )
        .unwrap();
        let bands = [EEG_BANDS[2], EEG_BANDS[3]]; // alpha, beta
        let blockk =
            extract_trial_features(&eeg, None, &od, &bands, FilterMode::ZeroPhase).unwrap();
        assert_eq!(blockk.frames.ncols(), 2 * 2 * 2 + 1);
        let t = blockk.frames.nrows();
        let mid = t / 2;
        // Channel 0 carries 10 Hz: alpha power high at column 0, beta power
        // (column 2) low. Channel 1 carries 20 Hz: beta power high (col 6).
        assert!(blockk.frames[[mid, 0]] > 0.8);
        assert!(blockk.frames[[mid, 2]] < 0.05);
        assert!(blockk.frames[[mid, 4]] < 0.05);
        assert!(blockk.frames[[mid, 6]] > 0.8);
        assert_eq!(blockk.frames[[mid, 8]], 0.25);
        assert_eq!(blockk.layout.group_index["fnirs"], vec![8]);
    }
}
