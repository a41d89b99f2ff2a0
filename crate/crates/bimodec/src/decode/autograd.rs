//! Minimal reverse-mode autodiff on 2-D tensors, eager (define-by-run).
//!
//! Everything is batched: a batch of B lag windows of K frames rides in one
//! (B*K) x F matrix with rows grouped per window, so the expensive steps are
//! single gemms instead of per-window loops. Ops suffixed `per window`
//! operate block-wise on the K-row groups.
//!
//! The tape is rebuilt every step (cheap next to the gemms); parameters live
//! outside and are cloned in as leaves, their gradients read back after
//! `backward`.

use std::ops::AddAssign;

use ndarray::{s, Array2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    AddBiasRow { x: NodeId, b: NodeId },
    Elu { x: NodeId },
    Scale { x: NodeId, c: f64 },
    Im2ColTime { x: NodeId, kernel: usize, win: usize },
    LayerNormRows { x: NodeId, gamma: NodeId, beta: NodeId, eps: f64 },
    BlockDotT { a: NodeId, b: NodeId, win: usize },
    SoftmaxRows { x: NodeId },
    BlockApply { w: NodeId, v: NodeId, win: usize },
    MeanRowsPerWindow { x: NodeId, win: usize },
    MseLoss { pred: NodeId, target: NodeId },
}

#[derive(Debug, Default)]
pub struct Tape {
    ops: Vec<Op>,
    vals: Vec<Array2<f64>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, val: Array2<f64>) -> NodeId {
        self.ops.push(op);
        self.vals.push(val);
        NodeId(self.vals.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.vals[id.0]
    }

    /// External data (no gradient consumer reads it back).
    pub fn input(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Parameter leaf; read its gradient after `backward`.
    pub fn param(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    fn shape_err(context: &'static str, expected: String, got: String) -> Error {
        Error::ShapeMismatch {
            context,
            expected,
            got,
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ar, ac) = self.vals[a.0].dim();
        let (br, bc) = self.vals[b.0].dim();
        if ac != br {
            return Err(Self::shape_err(
                "matmul",
                format!("inner dims equal ({ar}x{ac} . rxc)"),
                format!("{br}x{bc}"),
            ));
        }
        let v = self.vals[a.0].dot(&self.vals[b.0]);
        Ok(self.push(Op::MatMul { a, b }, v))
    }

    /// Broadcast-add a 1 x C bias to every row.
    pub fn add_bias_row(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (_, xc) = self.vals[x.0].dim();
        let (br, bc) = self.vals[b.0].dim();
        if br != 1 || bc != xc {
            return Err(Self::shape_err(
                "add_bias_row",
                format!("bias 1x{xc}"),
                format!("{br}x{bc}"),
            ));
        }
        let v = &self.vals[x.0] + &self.vals[b.0];
        Ok(self.push(Op::AddBiasRow { x, b }, v))
    }

    /// elu(x) = x for x > 0, exp(x) - 1 otherwise (alpha = 1; the derivative
    /// is continuous at 0).
    pub fn elu(&mut self, x: NodeId) -> NodeId {
        let v = self.vals[x.0].mapv(|t| if t > 0.0 { t } else { t.exp() - 1.0 });
        self.push(Op::Elu { x }, v)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.vals[x.0].mapv(|t| c * t);
        self.push(Op::Scale { x, c }, v)
    }

    /// Unfold time context within each K-row window: output column block j
    /// holds the rows shifted by j - kernel/2, zero-padded at window edges.
    /// (B*K) x F -> (B*K) x (kernel*F).
    pub fn im2col_time(&mut self, x: NodeId, kernel: usize, win: usize) -> Result<NodeId> {
        let (n, f) = self.vals[x.0].dim();
        if win == 0 || n % win != 0 {
            return Err(Self::shape_err(
                "im2col_time",
                format!("row count divisible by window length {win}"),
                format!("{n}"),
            ));
        }
        if kernel % 2 == 0 || kernel == 0 {
            return Err(Error::Config(format!(
                "im2col_time kernel must be odd and positive, got {kernel}"
            )));
        }
        let half = kernel / 2;
        let b = n / win;
        let mut v = Array2::<f64>::zeros((n, kernel * f));
        for w in 0..b {
            let base = w * win;
            for t in 0..win {
                for j in 0..kernel {
                    let src = t as i64 + j as i64 - half as i64;
                    if src < 0 || src >= win as i64 {
                        continue;
                    }
                    let src = base + src as usize;
                    let x_row = self.vals[x.0].row(src);
                    v.slice_mut(s![base + t, j * f..(j + 1) * f])
                        .assign(&x_row);
                }
            }
        }
        Ok(self.push(Op::Im2ColTime { x, kernel, win }, v))
    }

    /// Per-row normalization to zero mean / unit variance over columns,
    /// then scale by gamma and shift by beta (both 1 x C).
    pub fn layer_norm_rows(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<NodeId> {
        let (_, c) = self.vals[x.0].dim();
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            let (r, cc) = self.vals[id.0].dim();
            if r != 1 || cc != c {
                return Err(Self::shape_err(
                    "layer_norm_rows",
                    format!("{name} 1x{c}"),
                    format!("{r}x{cc}"),
                ));
            }
        }
        let mut v = self.vals[x.0].clone();
        for mut row in v.rows_mut() {
            let m = row.mean().expect("non-empty row");
            let var = row.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for t in row.iter_mut() {
                *t = (*t - m) * inv;
            }
        }
        let g = &self.vals[gamma.0];
        let bta = &self.vals[beta.0];
        for mut row in v.rows_mut() {
            for (j, t) in row.iter_mut().enumerate() {
                *t = *t * g[[0, j]] + bta[[0, j]];
            }
        }
        Ok(self.push(Op::LayerNormRows { x, gamma, beta, eps }, v))
    }

    /// Per-window a_w . b_w^T: two (B*K) x H inputs give (B*K) x K scores.
    pub fn block_dot_t(&mut self, a: NodeId, b: NodeId, win: usize) -> Result<NodeId> {
        let (n, h) = self.vals[a.0].dim();
        let (nb, hb) = self.vals[b.0].dim();
        if nb != n || hb != h || win == 0 || n % win != 0 {
            return Err(Self::shape_err(
                "block_dot_t",
                format!("matching {n}x{h} with rows divisible by {win}"),
                format!("{nb}x{hb}"),
            ));
        }
        let nw = n / win;
        let mut v = Array2::<f64>::zeros((n, win));
        for w in 0..nw {
            let r = w * win..(w + 1) * win;
            let aw = self.vals[a.0].slice(s![r.clone(), ..]);
            let bw = self.vals[b.0].slice(s![r.clone(), ..]);
            v.slice_mut(s![r, ..]).assign(&aw.dot(&bw.t()));
        }
        Ok(self.push(Op::BlockDotT { a, b, win }, v))
    }

    /// Numerically stable row-wise softmax.
    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let mut v = self.vals[x.0].clone();
        for mut row in v.rows_mut() {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for t in row.iter_mut() {
                *t = (*t - mx).exp();
                z += *t;
            }
            for t in row.iter_mut() {
                *t /= z;
            }
        }
        self.push(Op::SoftmaxRows { x }, v)
    }

    /// Per-window w_w . v_w: (B*K) x K weights with (B*K) x H values.
    pub fn block_apply(&mut self, w: NodeId, v: NodeId, win: usize) -> Result<NodeId> {
        let (n, k) = self.vals[w.0].dim();
        let (nv, _h) = self.vals[v.0].dim();
        if k != win || nv != n || win == 0 || n % win != 0 {
            return Err(Self::shape_err(
                "block_apply",
                format!("weights {n}x{win} over rows divisible by {win}"),
                format!("{n}x{k} with {nv} value rows"),
            ));
        }
        let nw = n / win;
        let h = self.vals[v.0].ncols();
        let mut out = Array2::<f64>::zeros((n, h));
        for wi in 0..nw {
            let r = wi * win..(wi + 1) * win;
            let ww = self.vals[w.0].slice(s![r.clone(), ..]);
            let vw = self.vals[v.0].slice(s![r.clone(), ..]);
            out.slice_mut(s![r, ..]).assign(&ww.dot(&vw));
        }
        Ok(self.push(Op::BlockApply { w, v, win }, out))
    }

    /// Temporal mean pool: (B*K) x H -> B x H.
    pub fn mean_rows_per_window(&mut self, x: NodeId, win: usize) -> Result<NodeId> {
        let (n, h) = self.vals[x.0].dim();
        if win == 0 || n % win != 0 {
            return Err(Self::shape_err(
                "mean_rows_per_window",
                format!("rows divisible by {win}"),
                format!("{n}"),
            ));
        }
        let b = n / win;
        let mut v = Array2::<f64>::zeros((b, h));
        for w in 0..b {
            let blk = self.vals[x.0].slice(s![w * win..(w + 1) * win, ..]);
            v.row_mut(w).assign(&blk.mean_axis(Axis(0)).expect("win > 0"));
        }
        Ok(self.push(Op::MeanRowsPerWindow { x, win }, v))
    }

    /// Mean of squared residuals over every element; returns a 1x1 node.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        if self.vals[pred.0].dim() != self.vals[target.0].dim() {
            let (pr, pc) = self.vals[pred.0].dim();
            let (tr, tc) = self.vals[target.0].dim();
            return Err(Self::shape_err(
                "mse_loss",
                format!("target {pr}x{pc}"),
                format!("{tr}x{tc}"),
            ));
        }
        let d = &self.vals[pred.0] - &self.vals[target.0];
        let n = d.len() as f64;
        let loss = d.iter().map(|t| t * t).sum::<f64>() / n;
        Ok(self.push(
            Op::MseLoss { pred, target },
            Array2::from_elem((1, 1), loss),
        ))
    }

    /// Reverse sweep from `root` (seeded with 1); returns all gradients,
    /// indexable by NodeId.
    pub fn backward(&self, root: NodeId) -> Gradients {
        let mut grads: Vec<Array2<f64>> = self
            .vals
            .iter()
            .map(|v| Array2::zeros(v.dim()))
            .collect();
        grads[root.0].fill(1.0);

        for (i, op) in self.ops.iter().enumerate().rev() {
            let g = grads[i].clone();
            match *op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let da = g.dot(&self.vals[b.0].t());
                    let db = self.vals[a.0].t().dot(&g);
                    grads[a.0] += &da;
                    grads[b.0] += &db;
                }
                Op::AddBiasRow { x, b } => {
                    grads[x.0] += &g;
                    let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    grads[b.0] += &db;
                }
                Op::Elu { x } => {
                    // d/dx = 1 for x > 0, exp(x) = y + 1 otherwise.
                    let y = &self.vals[i];
                    let mut dx = g;
                    for (d, (&xv, &yv)) in
                        dx.iter_mut().zip(self.vals[x.0].iter().zip(y.iter()))
                    {
                        if xv <= 0.0 {
                            *d *= yv + 1.0;
                        }
                    }
                    grads[x.0] += &dx;
                }
                Op::Scale { x, c } => {
                    grads[x.0].scaled_add(c, &g);
                }
                Op::Im2ColTime { x, kernel, win } => {
                    let f = self.vals[x.0].ncols();
                    let half = kernel / 2;
                    let b = self.vals[x.0].nrows() / win;
                    let mut dx = Array2::<f64>::zeros(self.vals[x.0].dim());
                    for w in 0..b {
                        let base = w * win;
                        for t in 0..win {
                            for j in 0..kernel {
                                let src = t as i64 + j as i64 - half as i64;
                                if src < 0 || src >= win as i64 {
                                    continue;
                                }
                                let src = base + src as usize;
                                let gslice = g.slice(s![base + t, j * f..(j + 1) * f]);
                                let mut dst = dx.row_mut(src);
                                dst += &gslice;
                            }
                        }
                    }
                    grads[x.0] += &dx;
                }
                Op::LayerNormRows { x, gamma, beta, eps } => {
                    let xv = &self.vals[x.0];
                    let c = xv.ncols() as f64;
                    let gm = self.vals[gamma.0].clone();
                    let mut dx = Array2::<f64>::zeros(xv.dim());
                    let mut dgamma = Array2::<f64>::zeros((1, xv.ncols()));
                    let mut dbeta = Array2::<f64>::zeros((1, xv.ncols()));
                    for (r, row) in xv.rows().into_iter().enumerate() {
                        let m = row.mean().expect("non-empty");
                        let var =
                            row.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / c;
                        let inv = 1.0 / (var + eps).sqrt();
                        // xhat and upstream-through-gamma per element.
                        let mut mean_dxh = 0.0;
                        let mut mean_dxh_xh = 0.0;
                        let xh: Vec<f64> = row.iter().map(|t| (t - m) * inv).collect();
                        let dxh: Vec<f64> = (0..xv.ncols())
                            .map(|j| g[[r, j]] * gm[[0, j]])
                            .collect();
                        for j in 0..xv.ncols() {
                            mean_dxh += dxh[j];
                            mean_dxh_xh += dxh[j] * xh[j];
                            dgamma[[0, j]] += g[[r, j]] * xh[j];
                            dbeta[[0, j]] += g[[r, j]];
                        }
                        mean_dxh /= c;
                        mean_dxh_xh /= c;
                        for j in 0..xv.ncols() {
                            dx[[r, j]] =
                                inv * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
                        }
                    }
                    grads[x.0] += &dx;
                    grads[gamma.0] += &dgamma;
                    grads[beta.0] += &dbeta;
                }
                Op::BlockDotT { a, b, win } => {
                    let n = self.vals[a.0].nrows();
                    for w in 0..n / win {
                        let r = w * win..(w + 1) * win;
                        let gw = g.slice(s![r.clone(), ..]);
                        let aw = self.vals[a.0].slice(s![r.clone(), ..]);
                        let bw = self.vals[b.0].slice(s![r.clone(), ..]);
                        let da = gw.dot(&bw);
                        let db = gw.t().dot(&aw);
                        grads[a.0].slice_mut(s![r.clone(), ..]).add_assign(&da);
                        grads[b.0].slice_mut(s![r, ..]).add_assign(&db);
                    }
                }
                Op::SoftmaxRows { x } => {
                    let y = &self.vals[i];
                    let mut dx = Array2::<f64>::zeros(y.dim());
                    for (r, yrow) in y.rows().into_iter().enumerate() {
                        let dot: f64 = yrow
                            .iter()
                            .zip(g.row(r).iter())
                            .map(|(&yv, &gv)| yv * gv)
                            .sum();
                        for (j, &yv) in yrow.iter().enumerate() {
                            dx[[r, j]] = yv * (g[[r, j]] - dot);
                        }
                    }
                    grads[x.0] += &dx;
                }
                Op::BlockApply { w, v, win } => {
                    let n = self.vals[w.0].nrows();
                    for wi in 0..n / win {
                        let r = wi * win..(wi + 1) * win;
                        let gw = g.slice(s![r.clone(), ..]);
                        let ww = self.vals[w.0].slice(s![r.clone(), ..]);
                        let vw = self.vals[v.0].slice(s![r.clone(), ..]);
                        let dw = gw.dot(&vw.t());
                        let dv = ww.t().dot(&gw);
                        grads[w.0].slice_mut(s![r.clone(), ..]).add_assign(&dw);
                        grads[v.0].slice_mut(s![r, ..]).add_assign(&dv);
                    }
                }
                Op::MeanRowsPerWindow { x, win } => {
                    let b = self.vals[x.0].nrows() / win;
                    let inv = 1.0 / win as f64;
                    for w in 0..b {
                        for t in 0..win {
                            let mut dst = grads[x.0].row_mut(w * win + t);
                            dst.scaled_add(inv, &g.row(w));
                        }
                    }
                }
                Op::MseLoss { pred, target } => {
                    let d = &self.vals[pred.0] - &self.vals[target.0];
                    let n = d.len() as f64;
                    let scale = 2.0 / n * g[[0, 0]];
                    grads[pred.0].scaled_add(scale, &d);
                    grads[target.0].scaled_add(-scale, &d);
                }
            }
        }
        Gradients { grads }
    }
}

/// Gradient buffers aligned with the tape's nodes.
pub struct Gradients {
    grads: Vec<Array2<f64>>,
}

impl Gradients {
    pub fn of(&self, id: NodeId) -> &Array2<f64> {
        &self.grads[id.0]
    }
}
