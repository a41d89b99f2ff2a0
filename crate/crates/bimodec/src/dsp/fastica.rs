//! Symmetric FastICA (tanh contrast) used to reject the EOG component.
//!
//! The unmixing matrix is estimated on an evenly strided sample subset
//! (estimation is statistical; the subset keeps the tanh passes cheap), then
//! applied to the full recording. The component most correlated with the EOG
//! reference is zeroed and the channels are remixed. If nothing crosses the
//! correlation threshold, or the iteration fails to converge, the input is
//! returned bit-exact with the outcome recorded in the report.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{eigh_sym, sym_inv_sqrt};
use crate::num::Scalar;
use crate::signal::TimeSeries;

#[derive(Debug, Clone)]
pub struct IcaConfig {
    /// Components with |corr| to the reference above this are rejected.
    pub corr_threshold: f64,
    /// Upper bound on rejected components.
    pub max_reject: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// Unmixing is fitted on at most this many (strided) samples.
    pub fit_max_samples: usize,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            corr_threshold: 0.3,
            max_reject: 1,
            max_iter: 500,
            tol: 1e-6,
            seed: 0x1CA,
            fit_max_samples: 50_000,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RejectedComponent {
    pub component: usize,
    pub corr: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct IcaReport {
    pub converged: bool,
    pub iterations: usize,
    /// |corr| of each estimated component against the reference.
    pub component_corrs: Vec<f64>,
    pub rejected: Vec<RejectedComponent>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone)]
pub struct IcaOutcome<F: Scalar> {
    pub cleaned: TimeSeries<F>,
    pub report: IcaReport,
    /// Spatial cleaning matrix (applies to mean-centered channels), present
    /// only when a component was actually removed. The mixing is spatial, so
    /// the same matrix is valid for other sampling rates of the same montage.
    pub transform: Option<Array2<f64>>,
}

/// Unmix, reject the reference-correlated component (at most
/// `max_reject`), remix.
pub fn fastica_eog_clean<F: Scalar>(
    eeg: &TimeSeries<F>,
    eog_ref: &TimeSeries<F>,
    cfg: &IcaConfig,
) -> Result<IcaOutcome<F>> {
    let c = eeg.n_channels();
    let n = eeg.n_samples();
    if c < 2 {
        return Err(Error::ShapeMismatch {
            context: "fastica_eog_clean",
            expected: "at least 2 channels".into(),
            got: format!("{c}"),
        });
    }
    if (eeg.rate_hz() - eog_ref.rate_hz()).abs() > 1e-6 * eeg.rate_hz() {
        return Err(Error::RateMismatch {
            context: "fastica_eog_clean",
            expected_hz: eeg.rate_hz(),
            got_hz: eog_ref.rate_hz(),
        });
    }
    if eog_ref.n_samples() != n {
        return Err(Error::ShapeMismatch {
            context: "fastica_eog_clean",
            expected: format!("{n} reference samples"),
            got: format!("{}", eog_ref.n_samples()),
        });
    }

    // Centered data and full covariance (small: channels x channels).
    let mut xc = Array2::<f64>::zeros((c, n));
    let mut means = Array1::<f64>::zeros(c);
    for ch in 0..c {
        let mut m = 0.0;
        for &v in eeg.channel(ch).iter() {
            m += v.as_f64();
        }
        m /= n as f64;
        means[ch] = m;
        for (i, &v) in eeg.channel(ch).iter().enumerate() {
            xc[[ch, i]] = v.as_f64() - m;
        }
    }

    // Fit subset (evenly strided) and its whitening.
    let stride = (n / cfg.fit_max_samples).max(1);
    let ns = (n + stride - 1) / stride;
    let mut xs = Array2::<f64>::zeros((c, ns));
    for ch in 0..c {
        for (j, i) in (0..n).step_by(stride).enumerate() {
            xs[[ch, j]] = xc[[ch, i]];
        }
    }
    let cov_s = xs.dot(&xs.t()) / ns as f64;
    let (w, e) = eigh_sym(&cov_s)?;
    let w_floor = w[c - 1].max(1e-300) * 1e-12;
    let mut wh = e.t().to_owned();
    for (j, &wj) in w.iter().enumerate() {
        let s = 1.0 / wj.max(w_floor).sqrt();
        for i in 0..c {
            wh[[j, i]] *= s;
        }
    }
    let z = wh.dot(&xs); // whitened subset, c x ns

    // Symmetric FastICA with tanh contrast.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut u = Array2::<f64>::zeros((c, c));
    for v in u.iter_mut() {
        *v = normal(&mut rng);
    }
    u = sym_inv_sqrt(&u.dot(&u.t()), 1e-12)?.dot(&u);

    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let proj = u.dot(&z); // c x ns
        let g = proj.mapv(f64::tanh);
        // Row means of g' = 1 - tanh^2.
        let mut gp_mean = Array1::<f64>::zeros(c);
        for (i, row) in g.rows().into_iter().enumerate() {
            gp_mean[i] = row.iter().map(|t| 1.0 - t * t).sum::<f64>() / ns as f64;
        }
        let mut u1 = g.dot(&z.t()) / ns as f64;
        for i in 0..c {
            for j in 0..c {
                u1[[i, j]] -= gp_mean[i] * u[[i, j]];
            }
        }
        u1 = sym_inv_sqrt(&u1.dot(&u1.t()), 1e-12)?.dot(&u1);
        let overlap = u1.dot(&u.t());
        let delta = (0..c)
            .map(|i| (1.0 - overlap[[i, i]].abs()).abs())
            .fold(0.0f64, f64::max);
        u = u1;
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }

    if !converged {
        return Ok(IcaOutcome {
            cleaned: eeg.clone(),
            report: IcaReport {
                converged: false,
                iterations,
                component_corrs: Vec::new(),
                rejected: Vec::new(),
                warning: Some(format!(
                    "FastICA did not converge in {} iterations; returning input unchanged",
                    cfg.max_iter
                )),
            },
            transform: None,
        });
    }

    // Correlation of each component with the reference over the full
    // recording, without materializing the component matrix:
    // corr_i = (M xc ec)_i / (||s_i|| ||ec||), with component rows s = M xc.
    let m = u.dot(&wh); // unmixing, c x c
    let mut ec = Array1::<f64>::zeros(n);
    let emean = eog_ref.channel(0).iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
    for (i, &v) in eog_ref.channel(0).iter().enumerate() {
        ec[i] = v.as_f64() - emean;
    }
    let e_norm = ec.dot(&ec).sqrt();
    if e_norm == 0.0 {
        return Err(Error::ConstantSignal("fastica_eog_clean reference".into()));
    }
    let cov_full = xc.dot(&xc.t()) / n as f64;
    let xe = xc.dot(&ec); // c-vector
    let num = m.dot(&xe);
    let mcm = m.dot(&cov_full).dot(&m.t());
    let corrs: Vec<f64> = (0..c)
        .map(|i| {
            let s_norm = (mcm[[i, i]] * n as f64).max(0.0).sqrt();
            if s_norm == 0.0 {
                0.0
            } else {
                (num[i] / (s_norm * e_norm)).abs()
            }
        })
        .collect();

    // Pick the strongest components above threshold, up to max_reject.
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&i, &j| corrs[j].partial_cmp(&corrs[i]).unwrap());
    let rejected: Vec<RejectedComponent> = order
        .into_iter()
        .take(cfg.max_reject)
        .filter(|&i| corrs[i] > cfg.corr_threshold)
        .map(|i| RejectedComponent {
            component: i,
            corr: corrs[i],
        })
        .collect();

    if rejected.is_empty() {
        return Ok(IcaOutcome {
            cleaned: eeg.clone(),
            report: IcaReport {
                converged,
                iterations,
                component_corrs: corrs,
                rejected,
                warning: None,
            },
            transform: None,
        });
    }

    // Mixing back: inverse of m = u wh is e diag(sqrt(w)) u^T.
    let mut a = Array2::<f64>::zeros((c, c));
    for jj in 0..c {
        let s = w[jj].max(w_floor).sqrt();
        for i in 0..c {
            a[[i, jj]] = e[[i, jj]] * s;
        }
    }
    let a = a.dot(&u.t());
    let mut keep = m.clone();
    for r in &rejected {
        for j in 0..c {
            keep[[r.component, j]] = 0.0;
        }
    }
    let transform = a.dot(&keep); // c x c on centered data

    let cleaned_c = transform.dot(&xc);
    let mut out = Array2::<F>::zeros((c, n));
    for ch in 0..c {
        for i in 0..n {
            out[[ch, i]] = F::of(cleaned_c[[ch, i]] + means[ch]);
        }
    }
    let cleaned = eeg.with_data(eeg.kind(), out, eeg.rate_hz())?;
    Ok(IcaOutcome {
        cleaned,
        report: IcaReport {
            converged,
            iterations,
            component_corrs: corrs,
            rejected,
            warning: None,
        },
        transform: Some(transform),
    })
}

/// Apply a spatial cleaning matrix from a previous fit to another series of
/// the same montage (e.g. a different sampling rate of the same recording).
pub fn apply_spatial_transform<F: Scalar>(
    ts: &TimeSeries<F>,
    transform: &Array2<f64>,
) -> Result<TimeSeries<F>> {
    let c = ts.n_channels();
    if transform.nrows() != c || transform.ncols() != c {
        return Err(Error::ShapeMismatch {
            context: "apply_spatial_transform",
            expected: format!("{c}x{c} transform"),
            got: format!("{}x{}", transform.nrows(), transform.ncols()),
        });
    }
    let n = ts.n_samples();
    let mut xc = Array2::<f64>::zeros((c, n));
    let mut means = Array1::<f64>::zeros(c);
    for ch in 0..c {
        let m = ts.channel(ch).iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
        means[ch] = m;
        for (i, &v) in ts.channel(ch).iter().enumerate() {
            xc[[ch, i]] = v.as_f64() - m;
        }
    }
    let y = transform.dot(&xc);
    let mut out = Array2::<F>::zeros((c, n));
    for ch in 0..c {
        for i in 0..n {
            out[[ch, i]] = F::of(y[[ch, i]] + means[ch]);
        }
    }
    ts.with_data(ts.kind(), out, ts.rate_hz())
}

/// Standard normal via Box-Muller (enough for weight initialization).
fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
