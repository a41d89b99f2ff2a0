//! Mini-batch training for the conv + attention decoder: Adam on MSE with
//! early stopping on validation FVAF, seeded shuffles, best-checkpoint
//! return and NaN-divergence abort.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::autograd::Tape;
use crate::decode::cnnatt::{AdamState, CnnAttArch, CnnAttModel, EpochStat};
use crate::error::{Error, Result};
use crate::features::{FeatureStream, LagWindows};
use crate::num::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    /// Epochs past the best validation score before stopping; 0 stops one
    /// epoch after the best.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Keep every n-th training window (1 = all); validation is never
    /// subsampled.
    pub train_stride: usize,
    pub min_delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch: 64,
            patience: 10,
            max_epochs: 200,
            seed: 0,
            train_stride: 1,
            min_delta: 0.0,
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Copy the lag windows ending at `frames` into one stacked (B*K) x F batch
/// and the matching B x hands target block.
pub fn gather_batch<F: Scalar>(
    stream: &FeatureStream<F>,
    windows: &LagWindows,
    frames: &[usize],
) -> (Array2<f64>, Array2<f64>) {
    let k = windows.k;
    let nf = stream.frames.ncols();
    let hands = stream.targets.ncols();
    let mut x = Array2::<f64>::zeros((frames.len() * k, nf));
    let mut y = Array2::<f64>::zeros((frames.len(), hands));
    for (b, &t) in frames.iter().enumerate() {
        let win = windows.window_of(stream, t);
        for lag in 0..k {
            for f in 0..nf {
                x[[b * k + lag, f]] = win[[lag, f]].as_f64();
            }
        }
        for h in 0..hands {
            y[[b, h]] = stream.targets[[t, h]].as_f64();
        }
    }
    (x, y)
}

fn adam_step(model: &mut CnnAttModel, grads: &[Array2<f64>], lr: f64) {
    let state = model.adam.get_or_insert_with(|| AdamState {
        m: model.params.iter().map(|p| Array2::zeros(p.dim())).collect(),
        v: model.params.iter().map(|p| Array2::zeros(p.dim())).collect(),
        step: 0,
    });
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - BETA1.powi(state.step as i32);
    let bc2 = 1.0 - BETA2.powi(state.step as i32);
    debug_assert!(t >= 1.0);
    for (i, p) in model.params.iter_mut().enumerate() {
        let g = &grads[i];
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for ((pv, gv), (mv, vv)) in p
            .iter_mut()
            .zip(g.iter())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mv = BETA1 * *mv + (1.0 - BETA1) * gv;
            *vv = BETA2 * *vv + (1.0 - BETA2) * gv * gv;
            let mhat = *mv / bc1;
            let vhat = *vv / bc2;
            *pv -= lr * mhat / (vhat.sqrt() + EPS);
        }
    }
}

/// Forward-only batched predictions for the given window end-frames.
pub fn predict_frames<F: Scalar>(
    model: &CnnAttModel,
    stream: &FeatureStream<F>,
    windows: &LagWindows,
    frames: &[usize],
    batch: usize,
) -> Result<Array2<f64>> {
    let hands = model.arch.outputs;
    let mut out = Array2::<f64>::zeros((frames.len(), hands));
    let mut at = 0;
    for chunk in frames.chunks(batch.max(1)) {
        let (x, _) = gather_batch(stream, windows, chunk);
        let pred = model.predict_batch(x)?;
        for (b, row) in pred.rows().into_iter().enumerate() {
            for h in 0..hands {
                out[[at + b, h]] = row[h];
            }
        }
        at += chunk.len();
    }
    Ok(out)
}

fn val_score<F: Scalar>(
    model: &CnnAttModel,
    stream: &FeatureStream<F>,
    windows: &LagWindows,
    frames: &[usize],
    batch: usize,
) -> Result<f64> {
    let pred = predict_frames(model, stream, windows, frames, batch)?;
    let hands = stream.targets.ncols();
    let mut acc = 0.0;
    for h in 0..hands {
        let truth: Vec<f64> = frames
            .iter()
            .map(|&t| stream.targets[[t, h]].as_f64())
            .collect();
        let hat: Vec<f64> = pred.column(h).to_vec();
        acc += crate::eval::fvaf(&truth, &hat)?;
    }
    Ok(acc / hands as f64)
}

/// Train on the windows ending at `train_frames`, early-stopping on those
/// ending at `val_frames`. Both lists must index full-history frames
/// (see `LagWindows`) and come from disjoint trials.
pub fn train_cnnatt<F: Scalar>(
    stream: &FeatureStream<F>,
    windows: &LagWindows,
    train_frames: &[usize],
    val_frames: &[usize],
    arch: CnnAttArch,
    cfg: &TrainConfig,
) -> Result<CnnAttModel> {
    if train_frames.is_empty() || val_frames.is_empty() {
        return Err(Error::EmptySignal("train_cnnatt splits"));
    }
    if cfg.batch == 0 || cfg.train_stride == 0 || cfg.max_epochs == 0 {
        return Err(Error::Config(
            "batch, train_stride and max_epochs must be positive".into(),
        ));
    }
    let mut model = CnnAttModel::init(arch, cfg.seed)?;
    model.stats = stream.stats.clone();

    let mut order: Vec<usize> = train_frames
        .iter()
        .copied()
        .step_by(cfg.train_stride)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best_params: Option<Vec<Array2<f64>>> = None;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut last_finite: Vec<Array2<f64>> = model.params.clone();
    let mut bad_epochs = 0usize;
    let mut stopped_early = false;
    let mut diverged = false;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut loss_n = 0usize;
        'batches: for chunk in order.chunks(cfg.batch) {
            let (x, y) = gather_batch(stream, windows, chunk);
            let mut tape = Tape::new();
            let pids = model.params_on(&mut tape);
            let xid = tape.input(x);
            let pred = model.forward(&mut tape, &pids, xid)?;
            let yid = tape.input(y);
            let loss = tape.mse_loss(pred, yid)?;
            let lv = tape.value(loss)[[0, 0]];
            if !lv.is_finite() {
                diverged = true;
                break 'batches;
            }
            loss_sum += lv * chunk.len() as f64;
            loss_n += chunk.len();
            let grads = tape.backward(loss);
            let gvec: Vec<Array2<f64>> =
                pids.iter().map(|id| grads.of(*id).clone()).collect();
            adam_step(&mut model, &gvec, cfg.lr);
        }
        if diverged || !model.all_finite() {
            diverged = true;
            break;
        }
        last_finite = model.params.clone();

        let score = val_score(&model, stream, windows, val_frames, cfg.batch)?;
        model.log.push(EpochStat {
            epoch,
            train_loss: loss_sum / loss_n.max(1) as f64,
            val_fvaf: score,
        });
        if score > best_score + cfg.min_delta {
            best_score = score;
            best_epoch = epoch;
            best_params = Some(model.params.clone());
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs > cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    model.params = match best_params {
        Some(p) => p,
        None => last_finite,
    };
    model.best_epoch = best_epoch;
    model.stopped_early = stopped_early;
    model.diverged = diverged;
    Ok(model)
}
