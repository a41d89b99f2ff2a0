//! Session protocol generation: blocked condition order, seeded rests.
//!
//! Go cues snap to the 80 ms cue grid so every sampling rate in the pipeline
//! (4 kHz, 1 kHz, 500, 250, 12.5 Hz) lands a whole sample on each cue.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::stream_seed;
use crate::signal::{
    SamplingRates, SessionManifest, TrialSpec, EPOCH_POST_S, GO_GRID_S, N_CONDITIONS, REST_MAX_S,
    REST_MIN_S, TRIALS_PER_CONDITION, TRIAL_DURATION_S,
};

/// Default maximum voluntary contraction per hand, Newtons.
pub const DEFAULT_MVC_LEFT_N: f64 = 300.0;
/// See [`DEFAULT_MVC_LEFT_N`].
pub const DEFAULT_MVC_RIGHT_N: f64 = 320.0;

fn snap_to_grid(t_s: f64) -> f64 {
    (t_s / GO_GRID_S).round() * GO_GRID_S
}

/// Standard session: 4 condition blocks of 30 trials in seeded block order.
pub fn gen_protocol(seed: u64) -> SessionManifest {
    gen_protocol_sized(seed, TRIALS_PER_CONDITION)
}

/// Same layout with a configurable block length (smaller test sessions).
pub fn gen_protocol_sized(seed: u64, trials_per_condition: usize) -> SessionManifest {
    let mut order: Vec<u8> = (1..=N_CONDITIONS).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "protocol"));
    order.shuffle(&mut rng);

    let mut trials = Vec::with_capacity(N_CONDITIONS as usize * trials_per_condition);
    let mut prev_end = 0.0f64;
    for &condition_id in &order {
        for _ in 0..trials_per_condition {
            let rest = rng.gen_range(REST_MIN_S..=REST_MAX_S);
            let go = snap_to_grid(prev_end + rest);
            trials.push(TrialSpec {
                condition_id,
                go_time_s: go,
                rest_before_s: go - prev_end,
            });
            prev_end = go + TRIAL_DURATION_S;
        }
    }
    // The tail rest keeps the last epoch window inside the recording.
    let duration_s = snap_to_grid(prev_end + EPOCH_POST_S + 1.0);
    SessionManifest {
        subject_id: format!("syn{seed:04}"),
        seed,
        trials_per_condition,
        trials,
        rates: SamplingRates::default(),
        mvc_left_n: DEFAULT_MVC_LEFT_N,
        mvc_right_n: DEFAULT_MVC_RIGHT_N,
        duration_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_session_has_120_trials_in_condition_blocks() {
        for seed in [0u64, 1, 42, 999] {
            let m = gen_protocol(seed);
            m.validate().unwrap();
            assert_eq!(m.n_trials(), 120);
            for c in 1..=4u8 {
                let n = m.trials.iter().filter(|t| t.condition_id == c).count();
                assert_eq!(n, 30);
            }
            // Blocked: the condition changes exactly 3 times.
            let changes = m
                .trials
                .windows(2)
                .filter(|w| w[0].condition_id != w[1].condition_id)
                .count();
            assert_eq!(changes, 3);
        }
    }

    #[test]
    fn rests_stay_inside_the_stated_range() {
        let m = gen_protocol(7);
        let mut prev_end = 0.0;
        for t in &m.trials {
            let rest = t.go_time_s - prev_end;
            assert!((rest - t.rest_before_s).abs() < 1e-9);
            // Snapping moves a cue by at most half a grid step.
            assert!(
                rest >= REST_MIN_S - GO_GRID_S && rest <= REST_MAX_S + GO_GRID_S,
                "rest {rest} s out of range"
            );
            prev_end = t.go_time_s + TRIAL_DURATION_S;
        }
        assert!(m.duration_s >= prev_end + EPOCH_POST_S - TRIAL_DURATION_S);
    }

    #[test]
    fn go_cues_sit_on_the_cue_grid() {
        let m = gen_protocol(3);
        for t in &m.trials {
            let steps = t.go_time_s / GO_GRID_S;
            assert!(
                (steps - steps.round()).abs() < 1e-9,
                "go {} not grid-aligned",
                t.go_time_s
            );
        }
    }

    #[test]
    fn same_seed_reproduces_the_manifest() {
        let a = gen_protocol(11);
        let b = gen_protocol(11);
        assert_eq!(a, b);
        let c = gen_protocol(12);
        assert_ne!(a.trials[0].go_time_s, c.trials[0].go_time_s);
    }

    #[test]
    fn sized_sessions_scale_block_length_and_validate() {
        let m = gen_protocol_sized(5, 3);
        m.validate().unwrap();
        assert_eq!(m.n_trials(), 12);
        assert_eq!(m.trials_per_condition, 3);
    }
}
