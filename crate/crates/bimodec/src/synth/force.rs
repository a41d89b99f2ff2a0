//! Target grip-force profiles.
//!
//! Each 10 s hold is a train of four raised-cosine crests whose widths tile
//! the window exactly, so the window mean is 17.5 %MVC by construction
//! (trough 10, crest peak 25). Crest order is a seeded permutation per
//! condition and hand; the right hand rotates its order when it collides
//! with the left so the two profiles always differ.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

use super::stream_seed;
use crate::error::{Error, Result};
use crate::signal::{
    Hand, SessionManifest, SignalKind, TimeSeries, FORCE_CREST_PCT, FORCE_TROUGH_PCT,
    N_CONDITIONS, TRIAL_DURATION_S,
};
use crate::Scalar;
use ndarray::Array2;

/// Crest widths in seconds; they sum to the 10 s hold exactly.
pub const CREST_WIDTHS_S: [f64; 4] = [1.6, 2.2, 2.8, 3.4];
/// Rise/fall ramp linking rest (zero force) to the hold baseline; it sits
/// outside the hold window and inside the epoch padding.
pub const RAMP_S: f64 = 1.0;

fn seeded_order(seed: u64, condition_id: u8, hand: Hand) -> [usize; 4] {
    let tag = format!("force/c{}/{}", condition_id, hand.as_str());
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &tag));
    let mut order = [0usize, 1, 2, 3];
    order.shuffle(&mut rng);
    order
}

/// Crest width order for one condition and hand.
pub fn crest_order(seed: u64, condition_id: u8, hand: Hand) -> [usize; 4] {
    let left = seeded_order(seed, condition_id, Hand::Left);
    match hand {
        Hand::Left => left,
        Hand::Right => {
            let mut right = seeded_order(seed, condition_id, Hand::Right);
            if right == left {
                right.rotate_left(1);
            }
            right
        }
    }
}

/// Force inside the hold window, %MVC; `t_in_trial` in `[0, TRIAL_DURATION_S]`.
pub fn hold_value(order: &[usize; 4], t_in_trial: f64) -> f64 {
    let t = t_in_trial.clamp(0.0, TRIAL_DURATION_S);
    let swing = FORCE_CREST_PCT - FORCE_TROUGH_PCT;
    let mut start = 0.0;
    for &i in order {
        let w = CREST_WIDTHS_S[i];
        if t <= start + w {
            let u = (t - start) / w;
            return FORCE_TROUGH_PCT + swing * 0.5 * (1.0 - (TAU * u).cos());
        }
        start += w;
    }
    FORCE_TROUGH_PCT
}

/// Smooth 0 -> 1 cosine ramp on `[0, 1]`.
fn ramp01(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    0.5 * (1.0 - (PI * u).cos())
}

/// Noise-free commanded force at absolute session time `t_s`, %MVC.
/// Zero during rest; cosine ramps link rest to the hold baseline.
pub fn force_at(manifest: &SessionManifest, hand: Hand, t_s: f64) -> f64 {
    for trial in &manifest.trials {
        let go = trial.go_time_s;
        if t_s < go - RAMP_S {
            break;
        }
        let end = go + TRIAL_DURATION_S;
        if t_s < go {
            return FORCE_TROUGH_PCT * ramp01((t_s - (go - RAMP_S)) / RAMP_S);
        }
        if t_s <= end {
            let order = crest_order(manifest.seed, trial.condition_id, hand);
            return hold_value(&order, t_s - go);
        }
        if t_s <= end + RAMP_S {
            return FORCE_TROUGH_PCT * ramp01(1.0 - (t_s - end) / RAMP_S);
        }
    }
    0.0
}

/// Sample the whole-session commanded profile, %MVC.
pub fn session_force_percent(manifest: &SessionManifest, hand: Hand, rate_hz: f64) -> Vec<f64> {
    let n = (manifest.duration_s * rate_hz).round() as usize;
    let dt = 1.0 / rate_hz;
    let mut out = vec![0.0f64; n];
    for trial in &manifest.trials {
        let order = crest_order(manifest.seed, trial.condition_id, hand);
        let go = trial.go_time_s;
        let end = go + TRIAL_DURATION_S;
        let first = (((go - RAMP_S) * rate_hz).ceil() as isize).max(0) as usize;
        let last = (((end + RAMP_S) * rate_hz).floor() as usize).min(n.saturating_sub(1));
        for (i, v) in out.iter_mut().enumerate().take(last + 1).skip(first) {
            let t = i as f64 * dt;
            *v = if t < go {
                FORCE_TROUGH_PCT * ramp01((t - (go - RAMP_S)) / RAMP_S)
            } else if t <= end {
                hold_value(&order, t - go)
            } else {
                FORCE_TROUGH_PCT * ramp01(1.0 - (t - end) / RAMP_S)
            };
        }
    }
    out
}

/// One 10 s commanded trial profile as a single-channel series, %MVC.
pub fn gen_force_trace<F: Scalar>(
    condition_id: u8,
    hand: Hand,
    seed: u64,
    rate_hz: f64,
) -> Result<TimeSeries<F>> {
    if !(1..=N_CONDITIONS).contains(&condition_id) {
        return Err(Error::InvalidManifest(format!(
            "condition id {condition_id} outside 1..={N_CONDITIONS}"
        )));
    }
    let order = crest_order(seed, condition_id, hand);
    let n = (TRIAL_DURATION_S * rate_hz).round() as usize;
    let mut data = Array2::<F>::zeros((1, n));
    for i in 0..n {
        data[[0, i]] = F::of(hold_value(&order, i as f64 / rate_hz));
    }
    let label = match hand {
        Hand::Left => "forceL",
        Hand::Right => "forceR",
    };
    TimeSeries::new(SignalKind::Force, data, rate_hz, 0.0, vec![label.to_string()])
}
