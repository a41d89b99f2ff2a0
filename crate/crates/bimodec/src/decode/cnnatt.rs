//! Convolution + self-attention regression network over lag windows.
//!
//! Architecture (window K x F in, 2 out): temporal conv (F -> C channels,
//! odd kernel, same padding) -> ELU -> per-frame layer norm -> single-head
//! self-attention over the K frames (dim C) -> temporal mean pool ->
//! FC C -> H -> ELU -> FC H -> 2. Sizes live in the architecture descriptor
//! so variants are config-only.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::autograd::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::features::Standardization;

/// Everything needed to rebuild the parameter tensors' shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnAttArch {
    pub input_frames: usize,
    pub input_features: usize,
    pub conv_channels: usize,
    pub kernel: usize,
    pub fc_hidden: usize,
    pub outputs: usize,
    pub layer_norm_eps: f64,
}

impl CnnAttArch {
    /// Default sizes for a K x F input window.
    pub fn new(input_frames: usize, input_features: usize) -> Self {
        Self {
            input_frames,
            input_features,
            conv_channels: 64,
            kernel: 3,
            fc_hidden: 32,
            outputs: 2,
            layer_norm_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_frames == 0
            || self.input_features == 0
            || self.conv_channels == 0
            || self.fc_hidden == 0
            || self.outputs == 0
        {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "temporal kernel must be odd, got {}",
                self.kernel
            )));
        }
        Ok(())
    }

    /// Named parameter tensors in their fixed storage order.
    pub fn param_shapes(&self) -> Vec<(&'static str, (usize, usize))> {
        let c = self.conv_channels;
        vec![
            ("conv.w", (self.kernel * self.input_features, c)),
            ("conv.b", (1, c)),
            ("ln.gamma", (1, c)),
            ("ln.beta", (1, c)),
            ("att.wq", (c, c)),
            ("att.wk", (c, c)),
            ("att.wv", (c, c)),
            ("att.wo", (c, c)),
            ("att.bo", (1, c)),
            ("fc1.w", (c, self.fc_hidden)),
            ("fc1.b", (1, self.fc_hidden)),
            ("fc2.w", (self.fc_hidden, self.outputs)),
            ("fc2.b", (1, self.outputs)),
        ]
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_fvaf: f64,
}

/// Adam first/second moments, aligned with the parameter list.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub step: usize,
}

#[derive(Debug, Clone)]
pub struct CnnAttModel {
    pub arch: CnnAttArch,
    /// Tensors in `param_shapes` order.
    pub params: Vec<Array2<f64>>,
    pub stats: Option<Standardization>,
    pub log: Vec<EpochStat>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub diverged: bool,
    pub adam: Option<AdamState>,
    pub seed: u64,
}

impl CnnAttModel {
    /// Fan-in scaled uniform init, U(-sqrt(1/fan_in), +sqrt(1/fan_in));
    /// norm gains start at 1, shifts and biases at 0.
    pub fn init(arch: CnnAttArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (name, (r, c)) in arch.param_shapes() {
            let t = match name {
                "ln.gamma" => Array2::from_elem((r, c), 1.0),
                n if n.ends_with(".b") || n == "att.bo" || n == "ln.beta" => {
                    Array2::zeros((r, c))
                }
                _ => {
                    let a = (1.0 / r as f64).sqrt();
                    Array2::from_shape_fn((r, c), |_| rng.gen_range(-a..a))
                }
            };
            params.push(t);
        }
        Ok(Self {
            arch,
            params,
            stats: None,
            log: Vec::new(),
            best_epoch: 0,
            stopped_early: false,
            diverged: false,
            adam: None,
            seed,
        })
    }

    /// Register parameters on a tape; returns their node ids in order.
    pub fn params_on(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.params.iter().map(|p| tape.param(p.clone())).collect()
    }

    /// Build the forward graph for a batch of windows stacked as
    /// (B*K) x F rows; returns the B x outputs prediction node.
    pub fn forward(&self, tape: &mut Tape, pids: &[NodeId], x: NodeId) -> Result<NodeId> {
        let a = &self.arch;
        let k = a.input_frames;
        let (n, f) = tape.value(x).dim();
        if f != a.input_features || n % k != 0 {
            return Err(Error::ShapeMismatch {
                context: "cnnatt forward",
                expected: format!("(B*{k}) x {}", a.input_features),
                got: format!("{n} x {f}"),
            });
        }
        let [conv_w, conv_b, ln_g, ln_b, wq, wk, wv, wo, bo, fc1_w, fc1_b, fc2_w, fc2_b] =
            pids else {
            return Err(Error::Config("parameter list length mismatch".into()));
        };
        let u = tape.im2col_time(x, a.kernel, k)?;
        let h = tape.matmul(u, *conv_w)?;
        let h = tape.add_bias_row(h, *conv_b)?;
        let h = tape.elu(h);
        let h = tape.layer_norm_rows(h, *ln_g, *ln_b, a.layer_norm_eps)?;
        let q = tape.matmul(h, *wq)?;
        let ky = tape.matmul(h, *wk)?;
        let v = tape.matmul(h, *wv)?;
        let sc = tape.block_dot_t(q, ky, k)?;
        let sc = tape.scale(sc, 1.0 / (a.conv_channels as f64).sqrt());
        let att = tape.softmax_rows(sc);
        let ctx = tape.block_apply(att, v, k)?;
        let ctx = tape.matmul(ctx, *wo)?;
        let ctx = tape.add_bias_row(ctx, *bo)?;
        let pooled = tape.mean_rows_per_window(ctx, k)?;
        let z = tape.matmul(pooled, *fc1_w)?;
        let z = tape.add_bias_row(z, *fc1_b)?;
        let z = tape.elu(z);
        let out = tape.matmul(z, *fc2_w)?;
        tape.add_bias_row(out, *fc2_b)
    }

    /// Inference on a stacked batch; forward pass only.
    pub fn predict_batch(&self, x: Array2<f64>) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let pids = self.params_on(&mut tape);
        let xid = tape.input(x);
        let out = self.forward(&mut tape, &pids, xid)?;
        Ok(tape.value(out).clone())
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }
}
