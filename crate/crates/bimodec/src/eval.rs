//! Decoder evaluation: fraction of variance accounted for (FVAF),
//! hand-specificity, feature-group sensitivity by temporal shuffling, and
//! per-window latency statistics.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::{predict_stream, DecoderModel};
use crate::error::{Error, Result};
use crate::features::{FeatureStream, LagWindows};
use crate::num::Scalar;

/// FVAF[%] = 100 * (1 - SSE/SST): 100 is perfect reconstruction, 0 matches
/// predicting the mean, negative is worse than the mean.
pub fn fvaf(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::ShapeMismatch {
            context: "fvaf",
            expected: format!("{} predictions", y.len()),
            got: format!("{}", yhat.len()),
        });
    }
    if y.len() < 2 {
        return Err(Error::SignalTooShort {
            context: "fvaf",
            needed: 2,
            got: y.len(),
        });
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if sst == 0.0 {
        return Err(Error::ConstantSignal("fvaf target".into()));
    }
    let sse: f64 = y
        .iter()
        .zip(yhat.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(100.0 * (1.0 - sse / sst))
}

/// Per-hand FVAF of predictions rows against the stream targets at the
/// predicted frames.
pub fn per_hand_fvaf<F: Scalar>(
    stream: &FeatureStream<F>,
    frames: &[usize],
    values: &Array2<f64>,
) -> Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for (h, o) in out.iter_mut().enumerate() {
        let truth: Vec<f64> = frames
            .iter()
            .map(|&t| stream.targets[[t, h]].as_f64())
            .collect();
        let hat: Vec<f64> = values.column(h).to_vec();
        *o = fvaf(&truth, &hat)?;
    }
    Ok(out)
}

/// 2x2 FVAF: entry [i][j] scores predicted hand i against true hand j, so
/// the diagonal is own-hand accuracy and the off-diagonal cross-hand.
pub fn specificity_matrix(
    pred_l: &[f64],
    pred_r: &[f64],
    true_l: &[f64],
    true_r: &[f64],
) -> Result<[[f64; 2]; 2]> {
    let preds = [pred_l, pred_r];
    let truths = [true_l, true_r];
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = fvaf(truths[j], preds[i])?;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityConfig {
    /// Shuffle repetitions averaged per group.
    pub reps: usize,
    pub seed: u64,
    /// Batch size for the forward passes.
    pub batch: usize,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            reps: 20,
            seed: 0,
            batch: 256,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub group: String,
    /// Mean FVAF (over hands, then repetitions) with this group shuffled.
    pub fvaf_mean: f64,
    pub fvaf_std: f64,
    /// 100 * (F0 - Fg) / (F0 - Fall); absent when the normalization is
    /// degenerate.
    pub percent_change: Option<f64>,
    /// Raw FVAF drop, always present.
    pub raw_drop: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// Unperturbed FVAF (mean over hands).
    pub baseline_fvaf: f64,
    /// Mean FVAF with every column shuffled.
    pub all_shuffled_fvaf: f64,
    /// True when shuffling everything does not change performance, making
    /// the percent normalization undefined.
    pub degenerate: bool,
    pub rows: Vec<SensitivityRow>,
}

fn mean_fvaf<F: Scalar>(
    model: &DecoderModel,
    stream: &FeatureStream<F>,
    windows: &LagWindows,
    batch: usize,
) -> Result<f64> {
    let pred = model.predict_frames(stream, windows, &windows.indices, batch)?;
    let per_hand = per_hand_fvaf(stream, &windows.indices, &pred)?;
    Ok((per_hand[0] + per_hand[1]) / 2.0)
}

/// Shuffle the frame order of selected columns, per trial span, using one
/// permutation per span.
fn shuffle_columns<F: Scalar>(
    work: &mut Array2<F>,
    orig: &Array2<F>,
    spans: &[crate::features::TrialSpan],
    perms: &[Vec<usize>],
    cols: &[usize],
) {
    for (span, perm) in spans.iter().zip(perms) {
        for (i, &src) in perm.iter().enumerate() {
            for &c in cols {
                work[[span.start + i, c]] = orig[[span.start + src, c]];
            }
        }
    }
}

/// How much each feature group contributes: shuffle the group's columns in
/// time (targets untouched), re-predict, and normalize the FVAF drop by the
/// drop when all columns are shuffled. The same per-trial permutations are
/// shared by every group and the all-columns reference within a repetition,
/// so "nothing shuffled" is exactly 0% and "everything shuffled" exactly
/// 100%.
pub fn sensitivity_analysis<F: Scalar>(
    model: &DecoderModel,
    stream: &FeatureStream<F>,
    windows: &LagWindows,
    groups: &[(String, Vec<usize>)],
    cfg: &SensitivityConfig,
) -> Result<SensitivityReport> {
    if groups.is_empty() {
        return Err(Error::Config("sensitivity needs at least one group".into()));
    }
    if cfg.reps == 0 {
        return Err(Error::Config("sensitivity reps must be positive".into()));
    }
    let ncols = stream.frames.ncols();
    for (name, cols) in groups {
        if cols.iter().any(|&c| c >= ncols) {
            return Err(Error::Config(format!(
                "group {name:?} references column beyond {ncols}"
            )));
        }
    }
    let f0 = mean_fvaf(model, stream, windows, cfg.batch)?;

    let all_cols: Vec<usize> = (0..ncols).collect();
    let mut scores: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.reps); groups.len()];
    let mut all_scores: Vec<f64> = Vec::with_capacity(cfg.reps);

    let mut work = stream.clone();
    for rep in 0..cfg.reps {
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(rep as u64 + 1),
        );
        let perms: Vec<Vec<usize>> = stream
            .spans
            .iter()
            .map(|s| {
                let mut p: Vec<usize> = (0..s.len).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        for (gi, (_, cols)) in groups.iter().enumerate() {
            shuffle_columns(&mut work.frames, &stream.frames, &stream.spans, &perms, cols);
            scores[gi].push(mean_fvaf(model, &work, windows, cfg.batch)?);
            // Restore only what was touched before the next group.
            for (span, _) in stream.spans.iter().zip(&perms) {
                for i in 0..span.len {
                    for &c in cols.iter() {
                        work.frames[[span.start + i, c]] = stream.frames[[span.start + i, c]];
                    }
                }
            }
        }
        shuffle_columns(&mut work.frames, &stream.frames, &stream.spans, &perms, &all_cols);
        all_scores.push(mean_fvaf(model, &work, windows, cfg.batch)?);
        work.frames.assign(&stream.frames);
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let std = |v: &[f64], m: f64| {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let f_all = mean(&all_scores);
    let denom = f0 - f_all;
    let degenerate = denom.abs() < 1e-9;

    let mut rows = Vec::with_capacity(groups.len() + 2);
    let mut push_row = |group: String, fvaf_mean: f64, fvaf_std: f64| {
        let percent_change = if degenerate {
            None
        } else {
            Some(100.0 * ((f0 - fvaf_mean) / denom))
        };
        rows.push(SensitivityRow {
            group,
            fvaf_mean,
            fvaf_std,
            percent_change,
            raw_drop: f0 - fvaf_mean,
        });
    };
    push_row("none".into(), f0, 0.0);
    for (gi, (name, _)) in groups.iter().enumerate() {
        let m = mean(&scores[gi]);
        push_row(name.clone(), m, std(&scores[gi], m));
    }
    push_row("all".into(), f_all, std(&all_scores, f_all));

    Ok(SensitivityReport {
        baseline_fvaf: f0,
        all_shuffled_fvaf: f_all,
        degenerate,
        rows,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub n_windows: usize,
    /// True when per-window timing was below timer resolution and the mean
    /// was derived from whole-pass timing instead.
    pub batch_granularity: bool,
}

/// Wall-clock per predict call over `repeats` passes of the stream's
/// windows; `warmup` full passes run first and are discarded.
pub fn latency_bench<F: Scalar>(
    model: &DecoderModel,
    stream: &FeatureStream<F>,
    windows: &LagWindows,
    repeats: usize,
    warmup: usize,
) -> Result<LatencyStats> {
    if repeats == 0 {
        return Err(Error::Config("latency_bench needs repeats >= 1".into()));
    }
    for _ in 0..warmup {
        predict_stream(model, stream, windows)?;
    }
    let mut samples: Vec<f64> = Vec::new();
    let mut pass_total_ms = 0.0;
    for _ in 0..repeats {
        let start = std::time::Instant::now();
        let pred = predict_stream(model, stream, windows)?;
        pass_total_ms += start.elapsed().as_secs_f64() * 1e3;
        samples.extend(pred.per_window_ms);
    }
    let n = samples.len();
    let mut mean = samples.iter().sum::<f64>() / n as f64;
    // Below ~2 microseconds individual timings are mostly timer noise; fall
    // back to the whole-pass average.
    let batch_granularity = mean < 2e-3;
    if batch_granularity {
        mean = pass_total_ms / n as f64;
    }
    let std =
        (samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt();
    let mut sorted = samples.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let p99 = sorted[((0.99 * n as f64).ceil() as usize).clamp(1, n) - 1];
    Ok(LatencyStats {
        mean_ms: mean,
        std_ms: std,
        p99_ms: p99,
        max_ms: *sorted.last().expect("non-empty"),
        n_windows: n,
        batch_granularity,
    })
}
