//! Apply a biquad cascade to a series, causally or with zero phase.
//!
//! Zero-phase mode runs the cascade forward and backward over an
//! odd-reflected extension of the signal, with each section's state started
//! at its constant-input steady state. The steady-state start matters: the
//! 0.01 Hz filters in this pipeline have transients of minutes, far longer
//! than any reasonable padding alone could absorb.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::signal::TimeSeries;

use super::design::{Biquad, IirFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Causal,
    ZeroPhase,
}

impl Default for FilterMode {
    /// Offline preprocessing default; the streaming decode path opts into
    /// `Causal` explicitly.
    fn default() -> Self {
        FilterMode::ZeroPhase
    }
}

/// Filter every channel. Causal mode is sample-sequential direct-form II
/// transposed from zero state; zero-phase mode has no group delay.
pub fn apply_filter<F: Scalar>(
    filter: &IirFilter,
    ts: &TimeSeries<F>,
    mode: FilterMode,
) -> Result<TimeSeries<F>> {
    let rate = ts.rate_hz();
    if (filter.rate_hz() - rate).abs() > 1e-6 * rate {
        return Err(Error::RateMismatch {
            context: "apply_filter",
            expected_hz: filter.rate_hz(),
            got_hz: rate,
        });
    }
    let n = ts.n_samples();
    let mut out = Array2::<F>::zeros((ts.n_channels(), n));
    let mut buf = vec![0.0f64; n];
    for (ch, mut orow) in out.rows_mut().into_iter().enumerate() {
        for (i, v) in ts.channel(ch).iter().enumerate() {
            buf[i] = v.as_f64();
        }
        match mode {
            FilterMode::Causal => {
                for section in filter.sections() {
                    filter_causal(section, &mut buf);
                }
            }
            FilterMode::ZeroPhase => filter_zero_phase(filter, &mut buf),
        }
        for (o, &v) in orow.iter_mut().zip(buf.iter()) {
            *o = F::of(v);
        }
    }
    ts.with_data(ts.kind(), out, rate)
}

/// In-place DF2T with zero initial state.
fn filter_causal(s: &Biquad, x: &mut [f64]) {
    let (mut w1, mut w2) = (0.0f64, 0.0f64);
    for v in x.iter_mut() {
        let xin = *v;
        let y = s.b0 * xin + w1;
        w1 = s.b1 * xin - s.a1 * y + w2;
        w2 = s.b2 * xin - s.a2 * y;
        *v = y;
    }
}

/// DF2T with state scaled to the constant-input steady state for `x0`, so a
/// step pedestal produces no transient at all.
fn filter_with_zi(s: &Biquad, x: &mut [f64], x0: f64) {
    let g = s.dc_gain();
    let zi2 = s.b2 - s.a2 * g;
    let zi1 = s.b1 - s.a1 * g + zi2;
    let (mut w1, mut w2) = (zi1 * x0, zi2 * x0);
    for v in x.iter_mut() {
        let xin = *v;
        let y = s.b0 * xin + w1;
        w1 = s.b1 * xin - s.a1 * y + w2;
        w2 = s.b2 * xin - s.a2 * y;
        *v = y;
    }
}

fn filter_zero_phase(filter: &IirFilter, x: &mut [f64]) {
    let n = x.len();
    let pad = filter.pad_samples().min(n.saturating_sub(1));
    let mut ext = Vec::with_capacity(n + 2 * pad);
    // Odd reflection about both end samples.
    let first = x[0];
    let last = x[n - 1];
    for i in (1..=pad).rev() {
        ext.push(2.0 * first - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * last - x[n - 1 - i]);
    }
    for section in filter.sections() {
        let x0 = ext[0];
        filter_with_zi(section, &mut ext, x0);
    }
    ext.reverse();
    for section in filter.sections() {
        let x0 = ext[0];
        filter_with_zi(section, &mut ext, x0);
    }
    ext.reverse();
    x.copy_from_slice(&ext[pad..pad + n]);
}
