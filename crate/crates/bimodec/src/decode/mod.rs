//! Decoders: the sparse linear model and the conv + attention network,
//! with a shared causal streaming-prediction front end.

pub mod autograd;
pub mod cnnatt;
pub mod lasso;
pub mod train;

use std::time::Instant;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::{FeatureStream, LagWindows, Standardization};
use crate::num::Scalar;

pub use cnnatt::{CnnAttArch, CnnAttModel, EpochStat};
pub use lasso::{
    build_design, default_lambda_grid, lambda_max, lasso_fit, select_lambda, DesignMatrix,
    LambdaTrace, LinearModel,
};
pub use train::{gather_batch, predict_frames, train_cnnatt, TrainConfig};

/// Either decoder behind one prediction interface.
#[derive(Debug, Clone)]
pub enum DecoderModel {
    Linear(LinearModel),
    CnnAtt(CnnAttModel),
}

impl DecoderModel {
    pub fn kind(&self) -> &'static str {
        match self {
            DecoderModel::Linear(_) => "linear",
            DecoderModel::CnnAtt(_) => "cnnatt",
        }
    }

    pub fn window_frames(&self) -> usize {
        match self {
            DecoderModel::Linear(m) => m.k,
            DecoderModel::CnnAtt(m) => m.arch.input_frames,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            DecoderModel::Linear(m) => m.n_features,
            DecoderModel::CnnAtt(m) => m.arch.input_features,
        }
    }

    pub fn stats(&self) -> Option<&Standardization> {
        match self {
            DecoderModel::Linear(m) => m.stats.as_ref(),
            DecoderModel::CnnAtt(m) => m.stats.as_ref(),
        }
    }

    /// One K x F window (rows oldest to newest) to a 2-vector.
    pub fn predict_window(&self, window: &ndarray::ArrayView2<'_, f64>) -> Result<[f64; 2]> {
        match self {
            DecoderModel::Linear(m) => m.predict_window(window),
            DecoderModel::CnnAtt(m) => {
                let y = m.predict_batch(window.to_owned())?;
                Ok([y[[0, 0]], y[[0, 1]]])
            }
        }
    }

    /// Batched forward over the windows ending at `frames` (fast path used
    /// by evaluation; identical values to the per-window path).
    pub fn predict_frames<F: Scalar>(
        &self,
        stream: &FeatureStream<F>,
        windows: &LagWindows,
        frames: &[usize],
        batch: usize,
    ) -> Result<Array2<f64>> {
        match self {
            DecoderModel::CnnAtt(m) => train::predict_frames(m, stream, windows, frames, batch),
            DecoderModel::Linear(m) => {
                let mut out = Array2::<f64>::zeros((frames.len(), 2));
                let mut buf = Array2::<f64>::zeros((windows.k, stream.frames.ncols()));
                for (i, &t) in frames.iter().enumerate() {
                    let win = windows.window_of(stream, t);
                    for (d, s) in buf.iter_mut().zip(win.iter()) {
                        *d = s.as_f64();
                    }
                    let y = m.predict_window(&buf.view())?;
                    out[[i, 0]] = y[0];
                    out[[i, 1]] = y[1];
                }
                Ok(out)
            }
        }
    }
}

/// Sliding-window predictions: one 2-vector per frame whose full lag
/// history fits inside its trial; earlier frames emit nothing.
#[derive(Debug, Clone)]
pub struct Predictions {
    /// Stream frame index of each prediction (the window's newest frame).
    pub frames: Vec<usize>,
    /// One row per predicted frame: %MVC per hand.
    pub values: Array2<f64>,
    /// Wall-clock per window, milliseconds, same order as `frames`.
    pub per_window_ms: Vec<f64>,
    pub rate_hz: f64,
}

/// Causal streaming prediction over every eligible frame of the stream.
/// Each window is evaluated on its own (no cross-window batching) so the
/// recorded latencies reflect online, frame-at-a-time use.
pub fn predict_stream<F: Scalar>(
    model: &DecoderModel,
    stream: &FeatureStream<F>,
    windows: &LagWindows,
) -> Result<Predictions> {
    if let (Some(ms), Some(ss)) = (model.stats(), stream.stats.as_ref()) {
        if ms != ss {
            return Err(Error::Config(
                "stream was standardized with different statistics than the model's".into(),
            ));
        }
    }
    if model.n_features() != stream.frames.ncols() || model.window_frames() != windows.k {
        return Err(Error::ShapeMismatch {
            context: "predict_stream",
            expected: format!("{} features, {}-frame window", model.n_features(), model.window_frames()),
            got: format!("{} features, {}-frame window", stream.frames.ncols(), windows.k),
        });
    }
    let n = windows.indices.len();
    let mut values = Array2::<f64>::zeros((n, 2));
    let mut per_window_ms = Vec::with_capacity(n);
    let mut buf = Array2::<f64>::zeros((windows.k, stream.frames.ncols()));
    for (i, &t) in windows.indices.iter().enumerate() {
        let start = Instant::now();
        let win = windows.window_of(stream, t);
        for (d, s) in buf.iter_mut().zip(win.iter()) {
            *d = s.as_f64();
        }
        let y = model.predict_window(&buf.view())?;
        per_window_ms.push(start.elapsed().as_secs_f64() * 1e3);
        values[[i, 0]] = y[0];
        values[[i, 1]] = y[1];
    }
    Ok(Predictions {
        frames: windows.indices.clone(),
        values,
        per_window_ms,
        rate_hz: stream.rate_hz,
    })
}
