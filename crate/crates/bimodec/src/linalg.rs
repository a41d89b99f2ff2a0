//! Small dense symmetric eigensolver used by whitening and decorrelation.
//!
//! Cyclic Jacobi rotations; adequate for the channel-count-sized (tens of
//! rows) matrices this crate needs, with no external linear-algebra backend.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix: returns (eigenvalues,
/// eigenvectors-as-columns) with `a == v * diag(w) * v^T`. Eigenvalues are
/// sorted ascending.
pub fn eigh_sym(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch {
            context: "eigh_sym",
            expected: "square matrix".into(),
            got: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    let mut b = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let scale = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += b[[p, q]] * b[[p, q]];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = b[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = b[[p, p]];
                let aqq = b[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                // Stable tangent of the rotation angle.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let bkp = b[[k, p]];
                    let bkq = b[[k, q]];
                    b[[k, p]] = c * bkp - s * bkq;
                    b[[k, q]] = s * bkp + c * bkq;
                }
                for k in 0..n {
                    let bpk = b[[p, k]];
                    let bqk = b[[q, k]];
                    b[[p, k]] = c * bpk - s * bqk;
                    b[[q, k]] = s * bpk + c * bqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| b[[i, i]].partial_cmp(&b[[j, j]]).unwrap());
    let w = Array1::from_iter(idx.iter().map(|&i| b[[i, i]]));
    let mut vs = Array2::<f64>::zeros((n, n));
    for (col, &i) in idx.iter().enumerate() {
        for r in 0..n {
            vs[[r, col]] = v[[r, i]];
        }
    }
    Ok((w, vs))
}

/// `a^(-1/2)` for a symmetric positive matrix, with eigenvalues floored at
/// `floor` so near-singular inputs stay bounded.
pub fn sym_inv_sqrt(a: &Array2<f64>, floor: f64) -> Result<Array2<f64>> {
    let (w, v) = eigh_sym(a)?;
    let n = a.nrows();
    let mut scaled = v.clone();
    for (j, &wj) in w.iter().enumerate() {
        let s = 1.0 / wj.max(floor).sqrt();
        for i in 0..n {
            scaled[[i, j]] *= s;
        }
    }
    Ok(scaled.dot(&v.t()))
}
