//! Signal containers and trial bookkeeping shared by every stage.
//!
//! A [`TimeSeries`] is an immutable channels-by-samples block with a sampling
//! rate, a start time and named channels. Trials are sliced out of continuous
//! recordings by [`epoch`] and bundled per trial as [`TrialEpoch`]. The
//! [`SessionManifest`] records the protocol (condition order, rest durations,
//! rates, maximum voluntary contraction) for one recording session.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Trials span 4 s before the go cue to 14 s after.
pub const EPOCH_PRE_S: f64 = 4.0;
/// See [`EPOCH_PRE_S`].
pub const EPOCH_POST_S: f64 = 14.0;
/// Active contraction phase of every trial.
pub const TRIAL_DURATION_S: f64 = 10.0;
/// Inter-trial rest bounds (uniformly distributed).
pub const REST_MIN_S: f64 = 15.0;
/// See [`REST_MIN_S`].
pub const REST_MAX_S: f64 = 21.0;
/// Conditions in the protocol; each pairs a left and a right force profile.
pub const N_CONDITIONS: u8 = 4;
/// Default trial count per condition for a full session.
pub const TRIALS_PER_CONDITION: usize = 30;
/// Crest force level in %MVC.
pub const FORCE_CREST_PCT: f64 = 25.0;
/// Trough force level in %MVC.
pub const FORCE_TROUGH_PCT: f64 = 10.0;
/// Required mean contraction over a trial in %MVC.
pub const FORCE_MEAN_PCT: f64 = 17.5;
/// Go cues sit on this grid so every recording rate (4 kHz, 1 kHz, 500 Hz,
/// 250 Hz, 12.5 Hz) lands an integer sample on the cue.
pub const GO_GRID_S: f64 = 0.08;
/// Co-aligned electrode/optode sites per hemisphere pair.
pub const N_SITES: usize = 24;
/// Optical wavelengths per site.
pub const N_WAVELENGTHS: usize = 2;

/// What a series physically is; drives per-kind validation and file headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Eeg,
    FnirsIntensity,
    FnirsOd,
    Force,
    Skin,
    Feature,
}

impl SignalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalKind::Eeg => "eeg",
            SignalKind::FnirsIntensity => "fnirs_intensity",
            SignalKind::FnirsOd => "fnirs_od",
            SignalKind::Force => "force",
            SignalKind::Skin => "skin",
            SignalKind::Feature => "feature",
        }
    }

    pub fn from_str_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "eeg" => SignalKind::Eeg,
            "fnirs_intensity" => SignalKind::FnirsIntensity,
            "fnirs_od" => SignalKind::FnirsOd,
            "force" => SignalKind::Force,
            "skin" => SignalKind::Skin,
            "feature" => SignalKind::Feature,
            _ => return None,
        })
    }
}

/// Uniformly sampled multi-channel signal. Immutable after construction;
/// construction rejects non-finite samples, empty data and duplicate labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<F: Scalar> {
    kind: SignalKind,
    data: Array2<F>,
    rate_hz: f64,
    t0_s: f64,
    labels: Vec<String>,
}

impl<F: Scalar> TimeSeries<F> {
    pub fn new(
        kind: SignalKind,
        data: Array2<F>,
        rate_hz: f64,
        t0_s: f64,
        labels: Vec<String>,
    ) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::InvalidRate {
                rate_hz,
                reason: "rate must be finite and positive",
            });
        }
        if !t0_s.is_finite() {
            return Err(Error::InvalidRate {
                rate_hz: t0_s,
                reason: "start time must be finite",
            });
        }
        if data.nrows() == 0 {
            return Err(Error::EmptySignal("no channels"));
        }
        if data.ncols() == 0 {
            return Err(Error::EmptySignal("no samples"));
        }
        if labels.len() != data.nrows() {
            return Err(Error::ShapeMismatch {
                context: "TimeSeries::new",
                expected: format!("{} labels", data.nrows()),
                got: format!("{}", labels.len()),
            });
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        check_finite(&data, "TimeSeries::new")?;
        Ok(Self {
            kind,
            data,
            rate_hz,
            t0_s,
            labels,
        })
    }

    pub fn kind(&self) -> SignalKind {
        self.kind
    }

    pub fn data(&self) -> &Array2<F> {
        &self.data
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.rate_hz
    }

    pub fn channel(&self, idx: usize) -> ArrayView1<'_, F> {
        self.data.row(idx)
    }

    pub fn channel_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Time of sample `i` in seconds.
    pub fn time_of(&self, i: usize) -> f64 {
        self.t0_s + i as f64 / self.rate_hz
    }

    /// Nearest sample index for time `t_s` (may be out of bounds).
    pub fn index_of(&self, t_s: f64) -> i64 {
        ((t_s - self.t0_s) * self.rate_hz).round() as i64
    }

    /// Same channels and start time, new sample block (rate may change, e.g.
    /// after resampling). Revalidates finiteness.
    pub fn with_data(&self, kind: SignalKind, data: Array2<F>, rate_hz: f64) -> Result<Self> {
        if data.nrows() != self.n_channels() {
            return Err(Error::ShapeMismatch {
                context: "TimeSeries::with_data",
                expected: format!("{} channels", self.n_channels()),
                got: format!("{}", data.nrows()),
            });
        }
        Self::new(kind, data, rate_hz, self.t0_s, self.labels.clone())
    }

    /// Copy of the window `[start, start + len)` with adjusted start time.
    pub fn slice_samples(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_samples() || len == 0 {
            return Err(Error::SignalTooShort {
                context: "TimeSeries::slice_samples",
                needed: start + len.max(1),
                got: self.n_samples(),
            });
        }
        Ok(Self {
            kind: self.kind,
            data: self.data.slice(ndarray::s![.., start..start + len]).to_owned(),
            rate_hz: self.rate_hz,
            t0_s: self.time_of(start),
            labels: self.labels.clone(),
        })
    }
}

/// Reject any NaN/Inf with channel/sample coordinates.
pub fn check_finite<F: Scalar>(data: &Array2<F>, context: &str) -> Result<()> {
    for (ch, row) in data.rows().into_iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: context.to_string(),
                    channel: ch,
                    sample: i,
                });
            }
        }
    }
    Ok(())
}

/// One trial of one session: per-kind signal slices plus the commanded force.
#[derive(Debug, Clone)]
pub struct TrialEpoch<F: Scalar> {
    pub condition_id: u8,
    pub go_time_s: f64,
    /// Commanded profile, 2 rows (left, right) in %MVC over the epoch.
    pub target_force: Array2<F>,
    pub signals: BTreeMap<SignalKind, TimeSeries<F>>,
}

impl<F: Scalar> TrialEpoch<F> {
    pub fn new(
        condition_id: u8,
        go_time_s: f64,
        target_force: Array2<F>,
        signals: BTreeMap<SignalKind, TimeSeries<F>>,
    ) -> Result<Self> {
        if !(1..=N_CONDITIONS).contains(&condition_id) {
            return Err(Error::InvalidManifest(format!(
                "condition id {condition_id} outside 1..={N_CONDITIONS}"
            )));
        }
        if target_force.nrows() != 2 {
            return Err(Error::ShapeMismatch {
                context: "TrialEpoch::new",
                expected: "2 target force rows".into(),
                got: format!("{}", target_force.nrows()),
            });
        }
        for &v in target_force.iter() {
            let v = v.as_f64();
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::InvalidManifest(format!(
                    "target force {v} %MVC outside [0, 100]"
                )));
            }
        }
        let span = EPOCH_PRE_S + EPOCH_POST_S;
        for ts in signals.values() {
            let half_sample = 0.5 / ts.rate_hz();
            if (ts.duration_s() - span).abs() > half_sample
                || (ts.t0_s() - (go_time_s - EPOCH_PRE_S)).abs() > half_sample
            {
                return Err(Error::ShapeMismatch {
                    context: "TrialEpoch::new",
                    expected: format!("[{:.2}, {:.2}] s window", go_time_s - EPOCH_PRE_S, go_time_s + EPOCH_POST_S),
                    got: format!("[{:.2}, {:.2}] s", ts.t0_s(), ts.t0_s() + ts.duration_s()),
                });
            }
        }
        Ok(Self {
            condition_id,
            go_time_s,
            target_force,
            signals,
        })
    }
}

/// One protocol event: condition, cue time and the rest that preceded it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrialSpec {
    pub condition_id: u8,
    pub go_time_s: f64,
    pub rest_before_s: f64,
}

/// Per-kind sampling rates of the raw recording.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SamplingRates {
    pub eeg_hz: f64,
    pub fnirs_hz: f64,
    pub force_hz: f64,
    pub skin_hz: f64,
}

impl Default for SamplingRates {
    fn default() -> Self {
        Self {
            eeg_hz: 4000.0,
            fnirs_hz: 12.5,
            force_hz: 1000.0,
            skin_hz: 12.5,
        }
    }
}

/// Session protocol record: who, what order, which rests, which rates.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SessionManifest {
    pub subject_id: String,
    pub seed: u64,
    pub trials_per_condition: usize,
    pub trials: Vec<TrialSpec>,
    pub rates: SamplingRates,
    pub mvc_left_n: f64,
    pub mvc_right_n: f64,
    /// Total recorded duration, covering every epoch window plus padding.
    pub duration_s: f64,
}

impl SessionManifest {
    /// Protocol sanity: equal trial counts per condition, rests in bounds,
    /// strictly increasing cue times with room for every epoch window.
    pub fn validate(&self) -> Result<()> {
        if self.mvc_left_n <= 0.0 {
            return Err(Error::NonPositiveMvc(self.mvc_left_n));
        }
        if self.mvc_right_n <= 0.0 {
            return Err(Error::NonPositiveMvc(self.mvc_right_n));
        }
        let mut counts = BTreeMap::new();
        for t in &self.trials {
            if !(1..=N_CONDITIONS).contains(&t.condition_id) {
                return Err(Error::InvalidManifest(format!(
                    "condition id {} outside 1..={N_CONDITIONS}",
                    t.condition_id
                )));
            }
            *counts.entry(t.condition_id).or_insert(0usize) += 1;
            // Snapping cue times to the sample grid moves rests by at most
            // half a grid step; accept that much slack at the bounds.
            let slack = GO_GRID_S;
            if t.rest_before_s < REST_MIN_S - slack || t.rest_before_s > REST_MAX_S + slack {
                return Err(Error::InvalidManifest(format!(
                    "rest {:.3} s outside [{REST_MIN_S}, {REST_MAX_S}]",
                    t.rest_before_s
                )));
            }
        }
        if counts.len() != N_CONDITIONS as usize
            || counts.values().any(|&c| c != self.trials_per_condition)
        {
            return Err(Error::InvalidManifest(format!(
                "expected {} trials in each of {N_CONDITIONS} conditions, got {counts:?}",
                self.trials_per_condition
            )));
        }
        let mut prev_end = 0.0f64;
        for t in &self.trials {
            if t.go_time_s - EPOCH_PRE_S < prev_end - 1e-9 {
                return Err(Error::InvalidManifest(format!(
                    "epoch window at go {:.2} s overlaps previous trial",
                    t.go_time_s
                )));
            }
            prev_end = t.go_time_s + TRIAL_DURATION_S;
        }
        if let Some(last) = self.trials.last() {
            if last.go_time_s + EPOCH_POST_S > self.duration_s + 1e-9 {
                return Err(Error::InvalidManifest(
                    "recording too short for last epoch window".into(),
                ));
            }
        } else {
            return Err(Error::InvalidManifest("no trials".into()));
        }
        Ok(())
    }

    pub fn n_trials(&self) -> usize {
        self.trials.len()
    }

    pub fn go_times(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.go_time_s).collect()
    }

    pub fn mvc_for_hand(&self, hand: Hand) -> f64 {
        match hand {
            Hand::Left => self.mvc_left_n,
            Hand::Right => self.mvc_right_n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const BOTH: [Hand; 2] = [Hand::Left, Hand::Right];

    pub fn index(self) -> usize {
        match self {
            Hand::Left => 0,
            Hand::Right => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Hand::Left => "left",
            Hand::Right => "right",
        }
    }
}

/// A trial whose window did not fit the recording, with the reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedWindow {
    pub trial_index: usize,
    pub go_time_s: f64,
    pub reason: String,
}

/// Output of [`epoch`]: kept slices (with their source trial indices) and
/// rejected windows. Rejections are reported, never silently dropped.
#[derive(Debug, Clone)]
pub struct Epochs<F: Scalar> {
    pub slices: Vec<TimeSeries<F>>,
    pub kept: Vec<usize>,
    pub rejected: Vec<RejectedWindow>,
}

/// Slice `[go - pre_s, go + post_s)` windows around each cue. Each slice has
/// `round((pre_s + post_s) * rate)` samples and the cue sits at sample
/// `round(pre_s * rate)`. Windows that exceed the recording are rejected.
pub fn epoch<F: Scalar>(
    ts: &TimeSeries<F>,
    go_times: &[f64],
    pre_s: f64,
    post_s: f64,
) -> Result<Epochs<F>> {
    if !(pre_s >= 0.0 && post_s > 0.0 && (pre_s + post_s).is_finite()) {
        return Err(Error::Config(format!(
            "epoch window [{pre_s}, {post_s}] s invalid"
        )));
    }
    let n = ((pre_s + post_s) * ts.rate_hz()).round() as usize;
    let mut out = Epochs {
        slices: Vec::new(),
        kept: Vec::new(),
        rejected: Vec::new(),
    };
    for (idx, &go) in go_times.iter().enumerate() {
        let start = ts.index_of(go - pre_s);
        if start < 0 || start as usize + n > ts.n_samples() {
            out.rejected.push(RejectedWindow {
                trial_index: idx,
                go_time_s: go,
                reason: format!(
                    "window [{:.2}, {:.2}] s outside recording [{:.2}, {:.2}] s",
                    go - pre_s,
                    go + post_s,
                    ts.t0_s(),
                    ts.t0_s() + ts.duration_s()
                ),
            });
            continue;
        }
        out.slices.push(ts.slice_samples(start as usize, n)?);
        out.kept.push(idx);
    }
    Ok(out)
}

/// Subtract the per-channel least-squares line. The fit accumulates in f64
/// regardless of the sample type so long trials stay accurate.
pub fn linear_detrend<F: Scalar>(ts: &TimeSeries<F>) -> Result<TimeSeries<F>> {
    if ts.n_samples() < 2 {
        return Err(Error::SignalTooShort {
            context: "linear_detrend",
            needed: 2,
            got: ts.n_samples(),
        });
    }
    let mut data = ts.data().clone();
    for mut row in data.rows_mut() {
        let (a, b) = line_fit(row.iter().map(|v| v.as_f64()));
        for (i, v) in row.iter_mut().enumerate() {
            *v -= F::of(a + b * i as f64);
        }
    }
    ts.with_data(ts.kind(), data, ts.rate_hz())
}

/// In-place detrend restricted to index windows (used per trial on a
/// continuous recording). Windows must be disjoint and in range.
pub fn linear_detrend_windows<F: Scalar>(
    ts: &TimeSeries<F>,
    windows: &[(usize, usize)],
) -> Result<TimeSeries<F>> {
    let mut data = ts.data().clone();
    for &(start, len) in windows {
        if len < 2 || start + len > ts.n_samples() {
            return Err(Error::SignalTooShort {
                context: "linear_detrend_windows",
                needed: start + len.max(2),
                got: ts.n_samples(),
            });
        }
        for mut row in data.rows_mut() {
            let seg = row.slice(ndarray::s![start..start + len]).to_owned();
            let (a, b) = line_fit(seg.iter().map(|v| v.as_f64()));
            for i in 0..len {
                row[start + i] -= F::of(a + b * i as f64);
            }
        }
    }
    ts.with_data(ts.kind(), data, ts.rate_hz())
}

/// Least-squares line `y = a + b x` over `x = 0..n`, in closed form.
fn line_fit(ys: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut n = 0.0f64;
    let mut sy = 0.0f64;
    let mut sxy = 0.0f64;
    for (i, y) in ys.enumerate() {
        n += 1.0;
        sy += y;
        sxy += i as f64 * y;
    }
    let sx = n * (n - 1.0) / 2.0;
    let sxx = n * (n - 1.0) * (2.0 * n - 1.0) / 6.0;
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return (sy / n.max(1.0), 0.0);
    }
    let b = (n * sxy - sx * sy) / denom;
    let a = (sy - b * sx) / n;
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn series(data: Array2<f64>, rate: f64, t0: f64) -> TimeSeries<f64> {
        let labels = (0..data.nrows()).map(|i| format!("ch{i}")).collect();
        TimeSeries::new(SignalKind::Eeg, data, rate, t0, labels).unwrap()
    }

    #[test]
    fn construction_rejects_bad_inputs() {
        let ok = Array2::zeros((2, 4));
        assert!(matches!(
            TimeSeries::<f64>::new(SignalKind::Eeg, ok.clone(), 0.0, 0.0, vec!["a".into(), "b".into()]),
            Err(Error::InvalidRate { .. })
        ));
        assert!(matches!(
            TimeSeries::<f64>::new(SignalKind::Eeg, ok.clone(), 10.0, 0.0, vec!["a".into()]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            TimeSeries::<f64>::new(SignalKind::Eeg, ok.clone(), 10.0, 0.0, vec!["a".into(), "a".into()]),
            Err(Error::DuplicateLabel(_))
        ));
        let mut nan = ok;
        nan[[1, 2]] = f64::NAN;
        let err = TimeSeries::<f64>::new(SignalKind::Eeg, nan, 10.0, 0.0, vec!["a".into(), "b".into()]);
        match err {
            Err(Error::NonFinite { channel, sample, .. }) => {
                assert_eq!((channel, sample), (1, 2));
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
        assert!(matches!(
            TimeSeries::<f64>::new(SignalKind::Eeg, Array2::zeros((0, 4)), 10.0, 0.0, vec![]),
            Err(Error::EmptySignal(_))
        ));
        assert!(matches!(
            TimeSeries::<f64>::new(SignalKind::Eeg, Array2::zeros((1, 0)), 10.0, 0.0, vec!["a".into()]),
            Err(Error::EmptySignal(_))
        ));
    }

    #[test]
    fn epoch_slices_have_expected_geometry() {
        // 26 s at 250 Hz, go at 10 s: slice is 4500 samples starting at 6 s.
        let n = 6500;
        let data = Array2::from_shape_fn((1, n), |(_, i)| i as f64);
        let ts = series(data, 250.0, 0.0);
        let ep = epoch(&ts, &[10.0], EPOCH_PRE_S, EPOCH_POST_S).unwrap();
        assert_eq!(ep.slices.len(), 1);
        assert!(ep.rejected.is_empty());
        let s = &ep.slices[0];
        assert_eq!(s.n_samples(), 4500);
        assert_eq!(s.t0_s(), 6.0);
        // Sample at the go cue is index round(pre * rate).
        assert_eq!(s.data()[[0, 1000]], (10.0f64 * 250.0));
    }

    #[test]
    fn epoch_rejects_out_of_bounds_windows() {
        let ts = series(Array2::zeros((1, 2500)), 250.0, 0.0);
        let ep = epoch(&ts, &[2.0], EPOCH_PRE_S, EPOCH_POST_S).unwrap();
        assert!(ep.slices.is_empty());
        assert_eq!(ep.rejected.len(), 1);
        assert_eq!(ep.rejected[0].trial_index, 0);
    }

    #[test]
    fn epoch_is_a_pure_read() {
        let data = Array2::from_shape_fn((2, 20000), |(c, i)| (c * 31 + i) as f64 % 7.0);
        let ts = series(data.clone(), 250.0, 0.0);
        let a = epoch(&ts, &[20.0, 50.0], EPOCH_PRE_S, EPOCH_POST_S).unwrap();
        let b = epoch(&ts, &[20.0, 50.0], EPOCH_PRE_S, EPOCH_POST_S).unwrap();
        assert_eq!(ts.data(), &data);
        assert_eq!(a.slices.len(), 2);
        for (x, y) in a.slices.iter().zip(&b.slices) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn detrend_removes_exact_line() {
        let data = Array2::from_shape_fn((1, 100), |(_, i)| 2.0 * i as f64 + 3.0);
        let out = linear_detrend(&series(data, 100.0, 0.0)).unwrap();
        for &v in out.data().iter() {
            assert!(v.abs() < 1e-9, "residual {v}");
        }
    }

    #[test]
    fn detrend_leaves_sine_shape_with_zero_slope() {
        // Full periods: the fit only removes the (near-zero) line, leaving a
        // signal strongly correlated with the input.
        let n = 1000;
        let data = Array2::from_shape_fn((1, n), |(_, i)| (2.0 * std::f64::consts::PI * 20.0 * i as f64 / n as f64).sin());
        let ts = series(data.clone(), 100.0, 0.0);
        let out = linear_detrend(&ts).unwrap();
        // Best-fit slope of the output via independent normal equations.
        let ys: Vec<f64> = out.data().row(0).to_vec();
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let xm = xs.iter().sum::<f64>() / n as f64;
        let ym = ys.iter().sum::<f64>() / n as f64;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
        assert!(slope.abs() < 1e-9);
        let dot: f64 = ys.iter().zip(data.iter()).map(|(a, b)| a * b).sum();
        let na: f64 = ys.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = data.iter().map(|b| b * b).sum::<f64>().sqrt();
        assert!(dot / (na * nb) > 0.99);
    }

    #[test]
    fn detrend_is_a_projection() {
        let data = Array2::from_shape_fn((2, 257), |(c, i)| {
            (i as f64 * 0.1 + c as f64).sin() + 0.01 * i as f64
        });
        let ts = series(data, 100.0, 0.0);
        let once = linear_detrend(&ts).unwrap();
        let twice = linear_detrend(&once).unwrap();
        for (a, b) in once.data().iter().zip(twice.data().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn detrend_zero_stays_zero_and_short_input_errors() {
        let z = series(Array2::zeros((1, 10)), 10.0, 0.0);
        let out = linear_detrend(&z).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        let one = series(array![[5.0]], 10.0, 0.0);
        assert!(matches!(
            linear_detrend(&one),
            Err(Error::SignalTooShort { .. })
        ));
    }

    #[test]
    fn manifest_validation_checks_counts_and_rests() {
        let mut trials = Vec::new();
        let mut t = 16.0;
        for block in 0..4u8 {
            for _ in 0..2 {
                trials.push(TrialSpec {
                    condition_id: block + 1,
                    go_time_s: t,
                    rest_before_s: 16.0,
                });
                t += 26.0;
            }
        }
        let m = SessionManifest {
            subject_id: "synth".into(),
            seed: 7,
            trials_per_condition: 2,
            trials,
            rates: SamplingRates::default(),
            mvc_left_n: 300.0,
            mvc_right_n: 320.0,
            duration_s: t + 20.0,
        };
        m.validate().unwrap();

        let mut bad = m.clone();
        bad.trials[0].rest_before_s = 10.0;
        assert!(bad.validate().is_err());

        let mut bad = m.clone();
        bad.trials[0].condition_id = 2;
        assert!(bad.validate().is_err());

        let mut bad = m;
        bad.mvc_left_n = 0.0;
        assert!(matches!(bad.validate(), Err(Error::NonPositiveMvc(_))));
    }
}
