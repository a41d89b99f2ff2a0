//! Polyphase rational resampler with a Kaiser windowed-sinc anti-alias filter.
//!
//! FFT-free and deterministic. The conversion ratio is reduced to a small
//! rational l/m; the signal is conceptually upsampled by l, filtered by a
//! zero-phase lowpass at 0.45 times the lower of the two rates, and decimated
//! by m. Edges are odd-reflected so constants and ramps pass through cleanly,
//! and each polyphase branch is normalized so DC is preserved exactly.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::signal::TimeSeries;

/// Stopband attenuation of the anti-alias filter in dB.
const ATTEN_DB: f64 = 60.0;
/// Cutoff and transition width as fractions of the lower sampling rate.
const CUTOFF_FRAC: f64 = 0.45;
const TRANSITION_FRAC: f64 = 0.1;
/// Largest accepted denominator for the rational rate ratio.
const MAX_DENOM: u64 = 16384;

/// Resample to `target_rate_hz`, preserving start time and channel labels.
/// Passband content below 0.4 times the lower rate keeps its amplitude
/// within 1%; content above the new Nyquist is attenuated by at least 60 dB.
pub fn resample<F: Scalar>(ts: &TimeSeries<F>, target_rate_hz: f64) -> Result<TimeSeries<F>> {
    if !(target_rate_hz.is_finite() && target_rate_hz > 0.0) {
        return Err(Error::InvalidRate {
            rate_hz: target_rate_hz,
            reason: "target rate must be finite and positive",
        });
    }
    let rate = ts.rate_hz();
    if (target_rate_hz - rate).abs() <= 1e-9 * rate {
        return Ok(ts.clone());
    }
    let (l, m) = rational_ratio(rate, target_rate_hz)?;
    let plan = Plan::design(rate, target_rate_hz, l, m);

    let n_in = ts.n_samples();
    let n_out = ((n_in as u64 - 1) * l) / m + 1;
    let mut out = Array2::<F>::zeros((ts.n_channels(), n_out as usize));
    let mut x = vec![0.0f64; n_in];
    for (ch, mut orow) in out.rows_mut().into_iter().enumerate() {
        for (i, v) in ts.channel(ch).iter().enumerate() {
            x[i] = v.as_f64();
        }
        for (n, o) in orow.iter_mut().enumerate() {
            *o = F::of(plan.eval(&x, n as u64));
        }
    }
    ts.with_data(ts.kind(), out, target_rate_hz)
}

/// Reduced l/m with target/rate == l/m within 1e-9 relative, by continued
/// fractions. Irrational or extreme ratios are rejected.
fn rational_ratio(rate: f64, target: f64) -> Result<(u64, u64)> {
    let r = target / rate;
    let (mut h0, mut k0, mut h1, mut k1) = (1u64, 0u64, 0u64, 1u64);
    let mut frac = r;
    for _ in 0..64 {
        let a = frac.floor();
        if a > MAX_DENOM as f64 {
            break;
        }
        let h2 = a as u64 * h0 + h1;
        let k2 = a as u64 * k0 + k1;
        h1 = h0;
        k1 = k0;
        h0 = h2;
        k0 = k2;
        if h0 > MAX_DENOM || k0 > MAX_DENOM {
            break;
        }
        if k0 > 0 && ((h0 as f64 / k0 as f64) - r).abs() <= 1e-9 * r.max(1.0) {
            return Ok((h0, k0));
        }
        let rem = frac - a;
        if rem.abs() < 1e-15 {
            break;
        }
        frac = 1.0 / rem;
    }
    Err(Error::UnsupportedRatio {
        from_hz: rate,
        to_hz: target,
    })
}

/// Precomputed polyphase filter for one (rate, l, m) combination.
struct Plan {
    l: u64,
    m: u64,
    half: u64,
    /// Branch r holds taps h[r], h[r+l], ... normalized to unit sum.
    branches: Vec<Vec<f64>>,
}

impl Plan {
    fn design(rate: f64, target: f64, l: u64, m: u64) -> Self {
        let fs_up = rate * l as f64;
        let low = rate.min(target);
        let fc = CUTOFF_FRAC * low;
        let df = TRANSITION_FRAC * low;
        let dw = 2.0 * std::f64::consts::PI * df / fs_up;
        let mut n = ((ATTEN_DB - 7.95) / (2.285 * dw)).ceil() as u64;
        if n % 2 == 0 {
            n += 1;
        }
        let half = n / 2;
        let beta = 0.1102 * (ATTEN_DB - 8.7);
        let i0b = bessel_i0(beta);
        let mut taps = vec![0.0f64; n as usize];
        for (i, t) in taps.iter_mut().enumerate() {
            let k = i as f64 - half as f64;
            let x = 2.0 * fc / fs_up;
            let sinc = if k == 0.0 {
                1.0
            } else {
                let a = std::f64::consts::PI * x * k;
                a.sin() / a
            };
            let u = k / half as f64;
            let w = bessel_i0(beta * (1.0 - u * u).max(0.0).sqrt()) / i0b;
            *t = x * sinc * w;
        }
        let mut branches = vec![Vec::new(); l as usize];
        for (i, &t) in taps.iter().enumerate() {
            branches[i % l as usize].push(t);
        }
        for b in &mut branches {
            let s: f64 = b.iter().sum();
            if s != 0.0 {
                for t in b.iter_mut() {
                    *t /= s;
                }
            }
        }
        Self { l, m, half, branches }
    }

    /// Output sample n as a dot product of one polyphase branch against the
    /// input, odd-reflecting indices that fall outside the signal.
    fn eval(&self, x: &[f64], n: u64) -> f64 {
        let pos = n * self.m + self.half;
        let r = (pos % self.l) as usize;
        let i_top = (pos / self.l) as i64;
        let b = &self.branches[r];
        let nlen = x.len() as i64;
        let lo = i_top - b.len() as i64 + 1;
        if lo >= 0 && i_top < nlen {
            // Fast path: fully interior.
            let base = lo as usize;
            let mut acc = 0.0;
            for (k, &c) in b.iter().enumerate() {
                acc += c * x[base + b.len() - 1 - k];
            }
            return acc;
        }
        let mut acc = 0.0;
        for (k, &c) in b.iter().enumerate() {
            acc += c * reflect(x, i_top - k as i64);
        }
        acc
    }
}

/// Odd (antisymmetric) reflection about the end samples; preserves constants
/// and straight lines across the boundary.
fn reflect(x: &[f64], idx: i64) -> f64 {
    let n = x.len() as i64;
    if n == 1 {
        return x[0];
    }
    let mut i = idx;
    // Fold until in range; each fold mirrors about an endpoint with sign
    // bookkeeping handled by re-deriving the value, not the index alone.
    let mut value_shift = 0.0;
    let mut sign = 1.0;
    for _ in 0..64 {
        if i < 0 {
            value_shift += sign * 2.0 * x[0];
            sign = -sign;
            i = -i;
        } else if i >= n {
            value_shift += sign * 2.0 * x[(n - 1) as usize];
            sign = -sign;
            i = 2 * (n - 1) - i;
        } else {
            return value_shift + sign * x[i as usize];
        }
    }
    // Pathologically short signal relative to the filter: clamp.
    x[i.clamp(0, n - 1) as usize]
}

/// Modified Bessel function of the first kind, order zero (series form).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half_sq = (x / 2.0) * (x / 2.0);
    for k in 1..200 {
        term *= half_sq / ((k * k) as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SignalKind;
    use ndarray::Array2;

    fn series(samples: Vec<f64>, rate: f64) -> TimeSeries<f64> {
        let n = samples.len();
        TimeSeries::new(
            SignalKind::Eeg,
            Array2::from_shape_vec((1, n), samples).unwrap(),
            rate,
            0.0,
            vec!["ch0".into()],
        )
        .unwrap()
    }

    #[test]
    fn dc_survives_heavy_downsampling() {
        let ts = series(vec![1.0; 40_000], 4000.0);
        let out = resample(&ts, 250.0).unwrap();
        assert_eq!(out.rate_hz(), 250.0);
        assert_eq!(out.n_samples(), 2500);
        for &v in out.data().iter() {
            assert!((v - 1.0).abs() < 1e-6, "dev {}", (v - 1.0).abs());
        }
    }

    #[test]
    fn slow_sine_amplitude_preserved_at_12p5_hz() {
        let rate = 250.0;
        let n = 5000; // 20 s
        let xs: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 1.0 * i as f64 / rate).sin())
            .collect();
        let out = resample(&series(xs, rate), 12.5).unwrap();
        // Compare against the analytically sampled sine away from the edges.
        let m = out.n_samples();
        let mut max_dev = 0.0f64;
        let mut peak = 0.0f64;
        for i in m / 5..4 * m / 5 {
            let t = i as f64 / 12.5;
            let expect = (2.0 * std::f64::consts::PI * t).sin();
            max_dev = max_dev.max((out.data()[[0, i]] - expect).abs());
            peak = peak.max(out.data()[[0, i]].abs());
        }
        assert!(max_dev < 0.01, "max dev {max_dev}");
        assert!((peak - 1.0).abs() < 0.01, "peak {peak}");
    }

    #[test]
    fn out_of_band_tone_is_rejected() {
        let rate = 4000.0;
        let n = 40_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 300.0 * i as f64 / rate).sin())
            .collect();
        let out = resample(&series(xs, rate), 250.0).unwrap();
        let m = out.n_samples();
        let interior = &out.data().as_slice().unwrap()[m / 5..4 * m / 5];
        let power: f64 =
            interior.iter().map(|v| v * v).sum::<f64>() / interior.len() as f64;
        // Input tone power is 0.5; require < -40 dB residual.
        assert!(power < 0.5 * 1e-4, "residual power {power}");
    }

    #[test]
    fn upsampling_tracks_the_analytic_waveform() {
        let rate = 500.0;
        let n = 5000;
        let xs: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 30.0 * i as f64 / rate).sin())
            .collect();
        let out = resample(&series(xs, rate), 4000.0).unwrap();
        let m = out.n_samples();
        let mut max_dev = 0.0f64;
        for i in m / 5..4 * m / 5 {
            let t = i as f64 / 4000.0;
            let expect = (2.0 * std::f64::consts::PI * 30.0 * t).sin();
            max_dev = max_dev.max((out.data()[[0, i]] - expect).abs());
        }
        assert!(max_dev < 0.01, "max dev {max_dev}");
    }

    #[test]
    fn same_rate_resampling_is_idempotent() {
        let xs: Vec<f64> = (0..1000)
            .map(|i| (0.02 * i as f64).sin() + 0.5 * (0.013 * i as f64).cos())
            .collect();
        let once = resample(&series(xs, 250.0), 125.0).unwrap();
        let twice = resample(&once, 125.0).unwrap();
        for (a, b) in once.data().iter().zip(twice.data().iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn bad_targets_are_rejected() {
        let ts = series(vec![0.0; 100], 250.0);
        assert!(matches!(
            resample(&ts, 0.0),
            Err(Error::InvalidRate { .. })
        ));
        assert!(matches!(
            resample(&ts, 250.0 * std::f64::consts::SQRT_2 / 3.0),
            Err(Error::UnsupportedRatio { .. })
        ));
    }

    #[test]
    fn ratio_reduction_finds_small_fractions() {
        assert_eq!(rational_ratio(4000.0, 250.0).unwrap(), (1, 16));
        assert_eq!(rational_ratio(250.0, 12.5).unwrap(), (1, 20));
        assert_eq!(rational_ratio(500.0, 4000.0).unwrap(), (8, 1));
        assert_eq!(rational_ratio(1000.0, 250.0).unwrap(), (1, 4));
        assert_eq!(rational_ratio(12.5, 250.0).unwrap(), (20, 1));
    }
}
