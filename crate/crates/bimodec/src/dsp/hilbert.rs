//! Analytic signal via the FFT method: envelope and instantaneous phase.

use ndarray::Array2;
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::signal::TimeSeries;

/// Instantaneous amplitude envelope and phase per channel. Squaring the
/// envelope gives band power; phase is wrapped to (-pi, pi].
#[derive(Debug, Clone)]
pub struct AnalyticSeries<F: Scalar> {
    pub envelope: Array2<F>,
    pub phase: Array2<F>,
    pub rate_hz: f64,
    pub t0_s: f64,
}

/// Analytic signal per channel: FFT, zero the negative frequencies (double
/// the positive ones), inverse FFT. One plan pair is shared by all channels.
pub fn hilbert_analytic<F: Scalar>(ts: &TimeSeries<F>) -> Result<AnalyticSeries<F>> {
    let n = ts.n_samples();
    if n < 8 {
        return Err(Error::SignalTooShort {
            context: "hilbert_analytic",
            needed: 8,
            got: n,
        });
    }
    let mut planner = FftPlanner::<F>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut envelope = Array2::<F>::zeros((ts.n_channels(), n));
    let mut phase = Array2::<F>::zeros((ts.n_channels(), n));
    let mut spec = vec![Complex::<F>::new(F::zero(), F::zero()); n];
    let two = F::of(2.0);
    let scale = F::of(1.0 / n as f64);
    let pi = F::of(std::f64::consts::PI);

    for ch in 0..ts.n_channels() {
        for (i, &v) in ts.channel(ch).iter().enumerate() {
            spec[i] = Complex::new(v, F::zero());
        }
        fwd.process(&mut spec);
        // Analytic-signal spectrum mask: keep DC and Nyquist, double the
        // positive band, zero the negative band.
        let half = n / 2;
        for s in spec.iter_mut().take(half).skip(1) {
            *s = *s * two;
        }
        if n % 2 == 1 {
            // No Nyquist bin; index `half` is still a positive frequency.
            spec[half] = spec[half] * two;
        }
        for s in spec.iter_mut().skip(half + 1) {
            *s = Complex::new(F::zero(), F::zero());
        }
        inv.process(&mut spec);
        for (i, &z) in spec.iter().enumerate() {
            let re = z.re * scale;
            let im = z.im * scale;
            envelope[[ch, i]] = (re * re + im * im).sqrt();
            let mut p = im.atan2(re);
            if p <= -pi {
                p = pi;
            }
            phase[[ch, i]] = p;
        }
    }
    Ok(AnalyticSeries {
        envelope,
        phase,
        rate_hz: ts.rate_hz(),
        t0_s: ts.t0_s(),
    })
}

/// Unwrap a phase row in place: remove 2 pi jumps so slopes are fittable.
pub fn unwrap_phase<F: Scalar>(phase: &mut [F]) {
    let two_pi = F::of(2.0 * std::f64::consts::PI);
    let pi = F::of(std::f64::consts::PI);
    let mut offset = F::zero();
    let mut prev = phase.first().copied().unwrap_or_else(F::zero);
    for p in phase.iter_mut().skip(1) {
        let raw = *p;
        let mut d = raw - prev;
        while d > pi {
            offset -= two_pi;
            d -= two_pi;
        }
        while d < -pi {
            offset += two_pi;
            d += two_pi;
        }
        prev = raw;
        *p = raw + offset;
    }
}

/// Wrap values back into (-pi, pi].
pub fn wrap_phase<F: Scalar>(phase: &mut [F]) {
    let two_pi = 2.0 * std::f64::consts::PI;
    for p in phase.iter_mut() {
        let mut v = p.as_f64() % two_pi;
        if v > std::f64::consts::PI {
            v -= two_pi;
        } else if v <= -std::f64::consts::PI {
            v += two_pi;
        }
        *p = F::of(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SignalKind;

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
    fn cosine_envelope_is_unit() {
        let rate = 250.0;
        let n = 2500;
        let xs: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / rate).cos())
            .collect();
        let a = hilbert_analytic(&series(xs, rate)).unwrap();
        for i in n / 10..9 * n / 10 {
            let e = a.envelope[[0, i]];
            assert!((e - 1.0).abs() < 1e-3, "sample {i}: {e}");
        }
    }

    #[test]
    fn phase_slope_matches_frequency() {
        let rate = 250.0;
        let n = 2500;
        let f0 = 10.0;
        let xs: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f0 * i as f64 / rate).cos())
            .collect();
        let a = hilbert_analytic(&series(xs, rate)).unwrap();
        let mut ph: Vec<f64> = (0..n).map(|i| a.phase[[0, i]]).collect();
        unwrap_phase(&mut ph);
        // Linear fit of unwrapped phase over the interior.
        let lo = n / 10;
        let hi = 9 * n / 10;
        let m = (hi - lo) as f64;
        let xm = (lo + hi - 1) as f64 / 2.0;
        let ym = ph[lo..hi].iter().sum::<f64>() / m;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in lo..hi {
            let dx = i as f64 - xm;
            num += dx * (ph[i] - ym);
            den += dx * dx;
        }
        let slope_per_s = (num / den) * rate;
        let expect = 2.0 * std::f64::consts::PI * f0;
        assert!(
            (slope_per_s - expect).abs() < 0.001 * expect,
            "slope {slope_per_s} vs {expect}"
        );
    }

    #[test]
    fn zero_signal_has_zero_envelope() {
        let a = hilbert_analytic(&series(vec![0.0; 256], 250.0)).unwrap();
        assert!(a.envelope.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_input_errors() {
        assert!(matches!(
            hilbert_analytic(&series(vec![0.0; 7], 250.0)),
            Err(Error::SignalTooShort { .. })
        ));
    }

    #[test]
    fn envelope_is_scale_equivariant() {
        let rate = 250.0;
        let n = 1024;
        let xs: Vec<f64> = (0..n)
            .map(|i| (0.3 * i as f64).sin() + 0.5 * (0.07 * i as f64).cos())
            .collect();
        let a1 = hilbert_analytic(&series(xs.clone(), rate)).unwrap();
        let a3 = hilbert_analytic(&series(xs.iter().map(|v| 3.0 * v).collect(), rate)).unwrap();
        for i in 0..n {
            let e1 = a1.envelope[[0, i]];
            let e3 = a3.envelope[[0, i]];
            assert!((e3 - 3.0 * e1).abs() <= 1e-9 * e3.abs().max(1.0));
        }
    }

    #[test]
    fn phase_stays_in_principal_range() {
        let rate = 250.0;
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (0.7 * i as f64).sin() + 0.1).collect();
        let a = hilbert_analytic(&series(xs, rate)).unwrap();
        for &p in a.phase.iter() {
            assert!(p > -std::f64::consts::PI && p <= std::f64::consts::PI);
        }
    }
}
