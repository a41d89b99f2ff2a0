//! L1-regularized linear decoder trained by cyclic coordinate descent.
//!
//! Each output (hand) is an independent criterion sharing the design matrix:
//! minimize (1/2N)||y - X w - b||^2 + lambda ||w||_1 with the bias
//! unpenalized. The design matrix is stored feature-major (P x N) so the
//! inner coordinate updates stream over contiguous rows.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::features::{FeatureStream, LagWindows, Standardization};
use crate::num::Scalar;

/// Lag-window design matrix plus aligned targets, feature-major.
///
/// Row p = lag * F + f addresses feature column f at lag index 0 (oldest)
/// to K-1 (newest frame, the prediction time).
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    /// P x N with P = K * F.
    pub xt: Array2<f64>,
    /// N x 2 targets (%MVC per hand) at each window's newest frame.
    pub y: Array2<f64>,
    /// Stream frame index of each window's newest frame.
    pub frames: Vec<usize>,
    pub k: usize,
    pub n_features: usize,
}

/// Assemble the design for the given window end-frames (a subset of
/// `windows.indices`, e.g. one split's rows).
pub fn build_design<F: Scalar>(
    stream: &FeatureStream<F>,
    windows: &LagWindows,
    frame_ids: &[usize],
) -> Result<DesignMatrix> {
    let nf = stream.frames.ncols();
    let k = windows.k;
    let n = frame_ids.len();
    if n == 0 {
        return Err(Error::EmptySignal("build_design"));
    }
    let total = stream.frames.nrows();
    let mut xt = Array2::<f64>::zeros((k * nf, n));
    let mut y = Array2::<f64>::zeros((n, stream.targets.ncols()));
    for (col, &t) in frame_ids.iter().enumerate() {
        if t + 1 < k || t >= total {
            return Err(Error::ShapeMismatch {
                context: "build_design",
                expected: format!("frame in {}..{total}", k - 1),
                got: format!("{t}"),
            });
        }
        let win = windows.window_of(stream, t);
        for lag in 0..k {
            for f in 0..nf {
                xt[[lag * nf + f, col]] = win[[lag, f]].as_f64();
            }
        }
        for h in 0..y.ncols() {
            y[[col, h]] = stream.targets[[t, h]].as_f64();
        }
    }
    Ok(DesignMatrix {
        xt,
        y,
        frames: frame_ids.to_vec(),
        k,
        n_features: nf,
    })
}

/// Sparse linear decoder: 2 x P weights over the flattened lag window.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub weights: Array2<f64>,
    pub bias: [f64; 2],
    pub lambda: f64,
    pub k: usize,
    pub n_features: usize,
    /// Fraction of exactly-zero weights.
    pub sparsity: f64,
    pub converged: bool,
    pub sweeps: usize,
    /// Column statistics the features must be standardized with.
    pub stats: Option<Standardization>,
}

impl LinearModel {
    /// Predict from one K x F lag window (rows oldest to newest).
    pub fn predict_window(&self, window: &ArrayView2<'_, f64>) -> Result<[f64; 2]> {
        if window.nrows() != self.k || window.ncols() != self.n_features {
            return Err(Error::ShapeMismatch {
                context: "LinearModel::predict_window",
                expected: format!("{}x{}", self.k, self.n_features),
                got: format!("{}x{}", window.nrows(), window.ncols()),
            });
        }
        let mut out = self.bias;
        for (h, o) in out.iter_mut().enumerate() {
            let wrow = self.weights.row(h);
            let mut acc = 0.0;
            let mut p = 0;
            for row in window.rows() {
                for &v in row.iter() {
                    acc += wrow[p] * v;
                    p += 1;
                }
            }
            *o += acc;
        }
        Ok(out)
    }

    /// Predict every window of a prebuilt design matrix: N x 2.
    pub fn predict_design(&self, design: &DesignMatrix) -> Array2<f64> {
        let mut pred = design.xt.t().dot(&self.weights.t());
        for mut row in pred.rows_mut() {
            for (h, v) in row.iter_mut().enumerate() {
                *v += self.bias[h];
            }
        }
        pred
    }
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Dot product with four accumulators so the reduction vectorizes; the
/// inner coordinate loop spends most of its time here.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut i = 0;
    while i + 4 <= n {
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
        i += 4;
    }
    let mut s = (acc[0] + acc[2]) + (acc[1] + acc[3]);
    while i < n {
        s += a[i] * b[i];
        i += 1;
    }
    s
}

/// y += alpha * x over the common prefix.
#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * xi;
    }
}

fn check_finite(xt: &Array2<f64>, y: &Array2<f64>) -> Result<()> {
    for (p, row) in xt.rows().into_iter().enumerate() {
        if let Some((n, _)) = row.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "lasso design matrix".into(),
                channel: p,
                sample: n,
            });
        }
    }
    if let Some(((n, h), _)) = y.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "lasso targets".into(),
            channel: h,
            sample: n,
        });
    }
    Ok(())
}

/// Smallest lambda for which the solution is identically zero:
/// max |x_j . (y - mean(y))| / N over features and outputs.
pub fn lambda_max(design: &DesignMatrix) -> f64 {
    let n = design.y.nrows() as f64;
    let mut best = 0.0f64;
    for h in 0..design.y.ncols() {
        let yc = design.y.column(h);
        let mean = yc.mean().unwrap_or(0.0);
        for row in design.xt.rows() {
            let dot: f64 = row.iter().zip(yc.iter()).map(|(&x, &y)| x * (y - mean)).sum();
            best = best.max(dot.abs() / n);
        }
    }
    best
}

/// Cyclic coordinate descent. Converged when no coefficient (or bias) moves
/// more than `tol` in a full sweep; otherwise returns the last iterate with
/// `converged: false`.
pub fn lasso_fit(
    design: &DesignMatrix,
    lambda: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LinearModel> {
    lasso_fit_warm(design, lambda, max_iter, tol, None)
}

/// Same as `lasso_fit` but optionally starting from a previous solution
/// (used by the warm-started lambda path).
pub fn lasso_fit_warm(
    design: &DesignMatrix,
    lambda: f64,
    max_iter: usize,
    tol: f64,
    warm: Option<&LinearModel>,
) -> Result<LinearModel> {
    let (p, n) = design.xt.dim();
    let hands = design.y.ncols();
    if n < 2 {
        return Err(Error::SignalTooShort {
            context: "lasso_fit",
            needed: 2,
            got: n,
        });
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    check_finite(&design.xt, &design.y)?;

    let nf = n as f64;
    // Per-feature mean square; zero rows (standardized constants) are skipped.
    let znorm: Vec<f64> = design
        .xt
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>() / nf)
        .collect();

    let mut weights = match warm {
        Some(m) if m.weights.dim() == (hands, p) => m.weights.clone(),
        _ => Array2::<f64>::zeros((hands, p)),
    };
    let mut bias = vec![0.0; hands];
    let mut total_sweeps = 0;
    let mut converged = true;

    // Feature-major rows as one contiguous slice; copied only if a caller
    // hand-built a non-standard layout.
    let xt_owned;
    let xt: &[f64] = match design.xt.as_slice() {
        Some(s) => s,
        None => {
            xt_owned = design.xt.as_standard_layout().into_owned();
            xt_owned.as_slice().expect("standard layout")
        }
    };
    let row = |j: usize| &xt[j * n..(j + 1) * n];
    let solvable: Vec<usize> = (0..p).filter(|&j| znorm[j] > f64::MIN_POSITIVE).collect();

    for h in 0..hands {
        let mut w: Vec<f64> = (0..p).map(|j| weights[[h, j]]).collect();
        // Residual r = y - X w - b for the warm start.
        let mut r: Vec<f64> = design.y.column(h).to_vec();
        for j in 0..p {
            if w[j] != 0.0 {
                axpy(-w[j], row(j), &mut r);
            }
        }
        let b0 = r.iter().sum::<f64>() / nf;
        for ri in r.iter_mut() {
            *ri -= b0;
        }
        bias[h] = b0;

        let objective = |r: &[f64], w: &[f64]| -> f64 {
            let sse: f64 = r.iter().map(|v| v * v).sum();
            let l1: f64 = w.iter().map(|v| v.abs()).sum();
            sse / (2.0 * nf) + lambda * l1
        };
        // One coordinate pass; every update is an exact single-coordinate
        // minimizer, so the objective can only fall.
        let mut pass = |coords: &[usize], w: &mut [f64], r: &mut [f64], b: &mut f64| -> f64 {
            let mut max_delta = 0.0f64;
            for &j in coords {
                let xj = row(j);
                let w_old = w[j];
                let rho = dot(xj, r) / nf + znorm[j] * w_old;
                let w_new = soft_threshold(rho, lambda) / znorm[j];
                let delta = w_new - w_old;
                if delta != 0.0 {
                    axpy(-delta, xj, r);
                    w[j] = w_new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            // Re-center the bias (unpenalized exact minimizer).
            let db = r.iter().sum::<f64>() / nf;
            if db != 0.0 {
                *b += db;
                for ri in r.iter_mut() {
                    *ri -= db;
                }
                max_delta = max_delta.max(db.abs());
            }
            max_delta
        };

        let mut prev_obj = objective(&r, &w);
        let mut check = |r: &[f64], w: &[f64]| {
            let obj = objective(r, w);
            assert!(
                obj <= prev_obj + 1e-9 * (1.0 + prev_obj.abs()),
                "coordinate descent objective rose: {prev_obj} -> {obj}"
            );
            prev_obj = obj;
        };

        // Full sweeps admit new coordinates; between them, cheap sweeps
        // over the active (nonzero) set refine the fit. Convergence is
        // declared only by a full sweep, so the fixpoint (all coordinates
        // stationary within tol) is the same as plain cyclic descent.
        let mut done = false;
        let mut sweeps = 0;
        while sweeps < max_iter && !done {
            let max_delta = pass(&solvable, &mut w, &mut r, &mut bias[h]);
            sweeps += 1;
            check(&r, &w);
            if max_delta < tol {
                done = true;
                break;
            }
            let active: Vec<usize> =
                solvable.iter().copied().filter(|&j| w[j] != 0.0).collect();
            if active.len() == solvable.len() {
                continue;
            }
            while sweeps < max_iter {
                let d = pass(&active, &mut w, &mut r, &mut bias[h]);
                sweeps += 1;
                check(&r, &w);
                if d < tol {
                    break;
                }
            }
        }
        converged &= done;
        total_sweeps = total_sweeps.max(sweeps);
        for (j, &wj) in w.iter().enumerate() {
            weights[[h, j]] = wj;
        }
    }

    let zeros = weights.iter().filter(|v| **v == 0.0).count();
    Ok(LinearModel {
        sparsity: zeros as f64 / weights.len().max(1) as f64,
        weights,
        bias: [bias[0], *bias.get(1).unwrap_or(&0.0)],
        lambda,
        k: design.k,
        n_features: design.n_features,
        converged,
        sweeps: total_sweeps,
        stats: None,
    })
}

/// One grid point's outcome during lambda selection.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LambdaTrace {
    pub lambda: f64,
    /// Mean validation FVAF over hands, if computable.
    pub val_fvaf: Option<f64>,
    pub sparsity: f64,
}

/// Log-spaced grid spanning three decades below the null threshold.
pub fn default_lambda_grid(lambda_max: f64) -> Vec<f64> {
    (0..13)
        .map(|j| lambda_max * 10f64.powf(-(j as f64) / 4.0))
        .collect()
}

/// Fit along a descending, warm-started lambda grid and keep the model with
/// the best mean validation FVAF; exact ties go to the larger lambda.
/// If no grid point yields a finite score the largest lambda is returned
/// with a warning flag.
pub fn select_lambda(
    train: &DesignMatrix,
    val: &DesignMatrix,
    grid: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<(LinearModel, Vec<LambdaTrace>, bool)> {
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    let mut order: Vec<f64> = grid.to_vec();
    order.sort_by(|a, b| b.partial_cmp(a).expect("finite lambda grid"));

    let mut traces = Vec::with_capacity(order.len());
    let mut best: Option<(f64, LinearModel)> = None;
    let mut warm: Option<LinearModel> = None;
    for &lambda in &order {
        let model = lasso_fit_warm(train, lambda, max_iter, tol, warm.as_ref())?;
        let pred = model.predict_design(val);
        let mut scores = Vec::new();
        for h in 0..val.y.ncols() {
            let truth: Vec<f64> = val.y.column(h).to_vec();
            let hat: Vec<f64> = pred.column(h).to_vec();
            if let Ok(s) = crate::eval::fvaf(&truth, &hat) {
                scores.push(s);
            }
        }
        let score = if scores.len() == val.y.ncols() {
            Some(scores.iter().sum::<f64>() / scores.len() as f64)
        } else {
            None
        };
        traces.push(LambdaTrace {
            lambda,
            val_fvaf: score,
            sparsity: model.sparsity,
        });
        if let Some(s) = score {
            // Strict > keeps the earlier (larger) lambda on exact ties.
            let better = match &best {
                None => true,
                Some((bs, _)) => s > *bs,
            };
            if better {
                best = Some((s, model.clone()));
            }
        }
        warm = Some(model);
    }
    match best {
        Some((_, model)) => Ok((model, traces, false)),
        None => {
            // Degenerate validation targets on every grid point.
            let fallback = lasso_fit(train, order[0], max_iter, tol)?;
            Ok((fallback, traces, true))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Hand-rolled design container for direct numeric tests.
    fn design_from(x: Array2<f64>, y: Array2<f64>) -> DesignMatrix {
        let n = x.nrows();
        let p = x.ncols();
        DesignMatrix {
            xt: x.t().to_owned(),
            frames: (0..n).collect(),
            k: 1,
            n_features: p,
            y,
        }
    }

    /// Mean-centered Gram-Schmidt columns scaled so that X^T X = N I.
    /// Zero column means keep the intercept decoupled from the slopes,
    /// which the closed-form soft-threshold oracle requires.
    fn orthonormal_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
        let mut x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0));
        for j in 0..p {
            let m: f64 = (0..n).map(|r| x[[r, j]]).sum::<f64>() / n as f64;
            for r in 0..n {
                x[[r, j]] -= m;
            }
        }
        // Orthonormalize at unit norm, then scale every column by sqrt(n).
        for j in 0..p {
            for i in 0..j {
                let dot: f64 = (0..n).map(|r| x[[r, j]] * x[[r, i]]).sum();
                for r in 0..n {
                    let xi = x[[r, i]];
                    x[[r, j]] -= dot * xi;
                }
            }
            let norm: f64 = (0..n).map(|r| x[[r, j]] * x[[r, j]]).sum::<f64>().sqrt();
            for r in 0..n {
                x[[r, j]] /= norm;
            }
        }
        x.mapv_inplace(|v| v * (n as f64).sqrt());
        x
    }

    #[test]
    fn orthonormal_design_matches_soft_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (n, p) = (24, 5);
        let x = orthonormal_design(&mut rng, n, p);
        let w_true = [1.5, -0.8, 0.0, 0.3, 0.05];
        let mut y = Array2::<f64>::zeros((n, 2));
        for r in 0..n {
            let mut v = 0.0;
            for j in 0..p {
                v += x[[r, j]] * w_true[j];
            }
            y[[r, 0]] = v;
            y[[r, 1]] = -v;
        }
        let design = design_from(x.clone(), y.clone());
        let lambda = 0.2;
        let model = lasso_fit(&design, lambda, 1000, 1e-12).unwrap();
        assert!(model.converged);
        // With X^T X = N I and centered y the solution is the
        // soft-thresholded least-squares coefficient per coordinate.
        for h in 0..2 {
            for j in 0..p {
                let beta: f64 =
                    (0..n).map(|r| x[[r, j]] * y[[r, h]]).sum::<f64>() / n as f64;
                let expect = super::soft_threshold(beta, lambda);
                assert!(
                    (model.weights[[h, j]] - expect).abs() <= 1e-6,
                    "hand {h} coord {j}: {} vs {}",
                    model.weights[[h, j]],
                    expect
                );
            }
        }
        assert!(model.weights[[0, 2]].abs() <= 1e-9, "planted zero stays zero");
    }

    #[test]
    fn zero_penalty_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, p) = (10, 3);
        let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0));
        let mut y = Array2::<f64>::zeros((n, 2));
        for r in 0..n {
            y[[r, 0]] = 2.0 * x[[r, 0]] - x[[r, 1]] + 0.5 * x[[r, 2]] + 3.0;
            y[[r, 1]] = -x[[r, 0]] + 0.25 * x[[r, 2]] - 1.0;
        }
        let design = design_from(x.clone(), y.clone());
        let model = lasso_fit(&design, 0.0, 5000, 1e-13).unwrap();

        // Independent oracle: centered normal equations solved by Gaussian
        // elimination with partial pivoting.
        let xm: Vec<f64> = (0..p)
            .map(|j| (0..n).map(|r| x[[r, j]]).sum::<f64>() / n as f64)
            .collect();
        for h in 0..2 {
            let ym: f64 = (0..n).map(|r| y[[r, h]]).sum::<f64>() / n as f64;
            let mut a = vec![vec![0.0f64; p + 1]; p];
            for i in 0..p {
                for j in 0..p {
                    a[i][j] = (0..n)
                        .map(|r| (x[[r, i]] - xm[i]) * (x[[r, j]] - xm[j]))
                        .sum();
                }
                a[i][p] = (0..n).map(|r| (x[[r, i]] - xm[i]) * (y[[r, h]] - ym)).sum();
            }
            for col in 0..p {
                let piv = (col..p)
                    .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                    .unwrap();
                a.swap(col, piv);
                for row in col + 1..p {
                    let f = a[row][col] / a[col][col];
                    for k in col..=p {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
            let mut beta = vec![0.0f64; p];
            for i in (0..p).rev() {
                let mut v = a[i][p];
                for j in i + 1..p {
                    v -= a[i][j] * beta[j];
                }
                beta[i] = v / a[i][i];
            }
            let b = ym - (0..p).map(|j| beta[j] * xm[j]).sum::<f64>();
            for j in 0..p {
                assert!(
                    (model.weights[[h, j]] - beta[j]).abs() <= 1e-6,
                    "hand {h} coord {j}: {} vs {}",
                    model.weights[[h, j]],
                    beta[j]
                );
            }
            assert!((model.bias[h] - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn null_threshold_zeroes_all_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((40, 6), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((40, 2), |_| rng.gen_range(-1.0..1.0));
        let design = design_from(x, y);
        let lmax = lambda_max(&design);
        let model = lasso_fit(&design, lmax * 1.0000001, 100, 1e-10).unwrap();
        assert!(model.weights.iter().all(|w| *w == 0.0));
        assert!((model.sparsity - 1.0).abs() < 1e-15);
        // Just below the threshold at least one weight activates.
        let model = lasso_fit(&design, lmax * 0.99, 200, 1e-10).unwrap();
        assert!(model.weights.iter().any(|w| *w != 0.0));
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let mut x = Array2::<f64>::zeros((4, 2));
        x[[2, 1]] = f64::NAN;
        let y = Array2::<f64>::zeros((4, 2));
        let design = design_from(x, y);
        match lasso_fit(&design, 0.1, 10, 1e-6) {
            Err(Error::NonFinite { channel, sample, .. }) => {
                assert_eq!((channel, sample), (1, 2));
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn single_element_grid_is_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((30, 4), |_| rng.gen_range(-1.0..1.0));
        let mut y = Array2::<f64>::zeros((30, 2));
        for r in 0..30 {
            y[[r, 0]] = x[[r, 0]] + 0.1 * rng.gen_range(-1.0..1.0);
            y[[r, 1]] = x[[r, 1]] + 0.1 * rng.gen_range(-1.0..1.0);
        }
        let xv = Array2::from_shape_fn((20, 4), |_| rng.gen_range(-1.0..1.0));
        let mut yv = Array2::<f64>::zeros((20, 2));
        for r in 0..20 {
            yv[[r, 0]] = xv[[r, 0]];
            yv[[r, 1]] = xv[[r, 1]];
        }
        let train = design_from(x, y);
        let val = design_from(xv, yv);
        let (model, traces, degenerate) =
            select_lambda(&train, &val, &[0.05], 1000, 1e-9).unwrap();
        assert_eq!(traces.len(), 1);
        assert!(!degenerate);
        assert!((model.lambda - 0.05).abs() < 1e-15);
    }

    #[test]
    fn planted_sparse_support_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Noise-free planted mapping: residual correlations of the 25
        // spurious columns shrink with lambda itself (they only see the
        // signal coordinates' shrinkage error), so they never activate and
        // the FVAF-optimal model carries exactly the true support.
        let (n, p) = (200, 30);
        let gen = |rng: &mut ChaCha8Rng, n: usize| {
            let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0));
            let mut y = Array2::<f64>::zeros((n, 2));
            for r in 0..n {
                let v = 2.0 * x[[r, 3]] - 1.5 * x[[r, 7]] + 1.3 * x[[r, 11]]
                    - 1.2 * x[[r, 19]] + 1.5 * x[[r, 25]];
                y[[r, 0]] = v;
                y[[r, 1]] = -0.5 * v;
            }
            (x, y)
        };
        let (xt, yt) = gen(&mut rng, n);
        let (xv, yv) = gen(&mut rng, 400);
        let train = design_from(xt, yt);
        let val = design_from(xv, yv);
        let lmax = lambda_max(&train);
        let grid: Vec<f64> = (0..7).map(|j| lmax * 10f64.powf(-(j as f64) / 2.0)).collect();
        let (model, traces, _) = select_lambda(&train, &val, &grid, 1000, 1e-8).unwrap();

        let truth: std::collections::BTreeSet<usize> = [3, 7, 11, 19, 25].into();
        let found: std::collections::BTreeSet<usize> = (0..p)
            .filter(|&j| model.weights[[0, j]].abs() > 1e-6)
            .collect();
        let inter = truth.intersection(&found).count();
        let union = truth.union(&found).count();
        assert!(
            inter as f64 / union as f64 >= 0.8,
            "support Jaccard too low: {found:?}; lambda {} of {traces:?}",
            model.lambda
        );
    }

    #[test]
    fn exact_tie_prefers_larger_lambda() {
        // Every grid point sits above the null threshold, so all three fits
        // are the identical intercept-only model and score bit-equal; the
        // largest lambda must win the tie.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Array2::from_shape_fn((20, 3), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((20, 2), |_| rng.gen_range(-1.0..1.0));
        let train = design_from(x, y);
        let xv = Array2::from_shape_fn((10, 3), |_| rng.gen_range(-1.0..1.0));
        let yv = Array2::from_shape_fn((10, 2), |_| rng.gen_range(-1.0..1.0));
        let val = design_from(xv, yv);
        let lmax = lambda_max(&train);
        let grid = vec![lmax * 2.0, lmax * 1.5, lmax * 1.1];
        let (model, traces, _) = select_lambda(&train, &val, &grid, 500, 1e-9).unwrap();
        let s0 = traces[0].val_fvaf.unwrap();
        for t in &traces {
            assert_eq!(t.val_fvaf.unwrap(), s0, "null models must score bit-equal");
        }
        assert!((model.lambda - lmax * 2.0).abs() < 1e-15);
    }

    #[test]
    fn design_rows_follow_lag_layout() {
        use crate::features::{FeatureLayout, TrialSpan};
        use std::collections::BTreeMap;
        // 1 trial, 6 frames, 2 features; frame t holds [t, 10t].
        let frames = Array2::from_shape_fn((6, 2), |(t, c)| {
            if c == 0 {
                t as f64
            } else {
                10.0 * t as f64
            }
        });
        let targets = Array2::from_shape_fn((6, 2), |(t, h)| (t * (h + 1)) as f64);
        let stream = FeatureStream::<f64> {
            frames,
            targets,
            rate_hz: 12.5,
            layout: FeatureLayout {
                names: vec!["a".into(), "b".into()],
                group_index: BTreeMap::new(),
            },
            spans: vec![TrialSpan {
                trial: 0,
                condition_id: 0,
                start: 0,
                len: 6,
            }],
            stats: None,
        };
        let windows = LagWindows { k: 3, indices: vec![2, 3, 4, 5] };
        let d = build_design(&stream, &windows, &[2, 5]).unwrap();
        assert_eq!(d.xt.dim(), (6, 2));
        // Window ending at t=2: frames 0,1,2 flattened oldest first.
        let col0: Vec<f64> = d.xt.column(0).to_vec();
        assert_eq!(col0, vec![0.0, 0.0, 1.0, 10.0, 2.0, 20.0]);
        let col1: Vec<f64> = d.xt.column(1).to_vec();
        assert_eq!(col1, vec![3.0, 30.0, 4.0, 40.0, 5.0, 50.0]);
        assert_eq!(d.y[[0, 0]], 2.0);
        assert_eq!(d.y[[1, 1]], 10.0);
    }
}
