//! Elliptic (Cauer) analog lowpass prototype via Landen iterations and
//! Jacobi elliptic functions in normalized quarter-period argument form.
//!
//! `sne`/`cde` evaluate sn(u K, k) and cd(u K, k); the normalized argument u
//! is invariant under a Landen modulus step, so both directions of the
//! recursion use the same u. The prototype has its passband edge at Omega=1.

use num_complex::Complex64;

use super::design::Zpk;

/// Descending Landen modulus sequence k1, k2, ... down to ~0.
fn landen(k: f64) -> Vec<f64> {
    let mut v = Vec::new();
    let mut k = k;
    for _ in 0..60 {
        if k < 1e-20 {
            break;
        }
        let kp = (1.0 - k * k).max(0.0).sqrt();
        k = (k / (1.0 + kp)).powi(2);
        v.push(k);
    }
    v
}

/// sn(u K(k), k) for normalized complex u.
fn sne(u: Complex64, seq: &[f64]) -> Complex64 {
    let mut w = (u * (std::f64::consts::PI / 2.0)).sin();
    for &v in seq.iter().rev() {
        w = w * (1.0 + v) / (1.0 + v * w * w);
    }
    w
}

/// cd(u K(k), k) for normalized complex u.
fn cde(u: Complex64, seq: &[f64]) -> Complex64 {
    let mut w = (u * (std::f64::consts::PI / 2.0)).cos();
    for &v in seq.iter().rev() {
        w = w * (1.0 + v) / (1.0 + v * w * w);
    }
    w
}

/// Inverse of [`sne`]: u with sne(u, k) = w. Each Landen level inverts the
/// Moebius-like step by the quadratic root that stays continuous with w,
/// written as 2w / ((1+v) + sqrt(...)) so small v costs no cancellation.
fn asne(w: Complex64, seq: &[f64]) -> Complex64 {
    let mut w = w;
    for &v in seq.iter() {
        let disc = (Complex64::new((1.0 + v) * (1.0 + v), 0.0) - 4.0 * v * w * w).sqrt();
        w = 2.0 * w / ((1.0 + v) + disc);
    }
    w.asin() * (2.0 / std::f64::consts::PI)
}

/// Degree equation: the selectivity modulus k for filter order n and ripple
/// modulus k1 = eps_p/eps_s.
fn degree_modulus(n: usize, k1: f64) -> f64 {
    let k1c = (1.0 - k1 * k1).max(0.0).sqrt();
    let seq = landen(k1c);
    let l = n / 2;
    let mut kc = k1c.powi(n as i32);
    for i in 1..=l {
        let u = Complex64::new((2.0 * i as f64 - 1.0) / n as f64, 0.0);
        kc *= sne(u, &seq).re.powi(4);
    }
    (1.0 - kc * kc).max(0.0).sqrt()
}

/// Analog elliptic lowpass prototype (passband edge at Omega = 1) with
/// `rp` dB passband ripple and `rs` dB stopband attenuation.
pub(crate) fn elliptic_proto(n: usize, rp: f64, rs: f64) -> Zpk {
    let ep = (10f64.powf(rp / 10.0) - 1.0).sqrt();
    let es = (10f64.powf(rs / 10.0) - 1.0).sqrt();
    let k1 = ep / es;
    let k = degree_modulus(n, k1);
    let seq_k = landen(k);
    let seq_k1 = landen(k1);

    let l = n / 2;
    let mut zeros = Vec::new();
    let mut poles = Vec::new();

    let j = Complex64::new(0.0, 1.0);
    let v0 = (-j * asne(j / ep, &seq_k1) / n as f64).re;

    for i in 1..=l {
        let u = (2.0 * i as f64 - 1.0) / n as f64;
        let zeta = cde(Complex64::new(u, 0.0), &seq_k).re;
        let z = j / (k * zeta);
        zeros.push(z);
        zeros.push(z.conj());
        let p = j * cde(Complex64::new(u, -v0), &seq_k);
        poles.push(p);
        poles.push(p.conj());
    }
    if n % 2 == 1 {
        let p0 = j * sne(Complex64::new(0.0, v0), &seq_k);
        poles.push(Complex64::new(p0.re, 0.0));
    }

    let h0 = if n % 2 == 0 {
        10f64.powf(-rp / 20.0)
    } else {
        1.0
    };
    let num: Complex64 = zeros.iter().map(|z| -z).product();
    let den: Complex64 = poles.iter().map(|p| -p).product();
    let k_gain = h0 * (den / if zeros.is_empty() { Complex64::new(1.0, 0.0) } else { num }).re;

    Zpk {
        z: zeros,
        p: poles,
        k: k_gain,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::design::{design_iir, BandForm, FilterFamily};

    #[test]
    fn jacobi_functions_match_known_values() {
        // sn(K/2, k) = cd(K/2, k) = 1/sqrt(1 + k') for any modulus k.
        for k in [0.1f64, 0.5, 0.9, 0.999] {
            let kp = (1.0 - k * k).sqrt();
            let expect = 1.0 / (1.0 + kp).sqrt();
            let seq = landen(k);
            let s = sne(Complex64::new(0.5, 0.0), &seq).re;
            let c = cde(Complex64::new(0.5, 0.0), &seq).re;
            assert!((s - expect).abs() < 1e-12, "sne k={k}: {s} vs {expect}");
            assert!((c - expect).abs() < 1e-12, "cde k={k}: {c} vs {expect}");
        }
        // Endpoints.
        let seq = landen(0.7);
        assert!((sne(Complex64::new(1.0, 0.0), &seq).re - 1.0).abs() < 1e-12);
        assert!(cde(Complex64::new(1.0, 0.0), &seq).re.abs() < 1e-12);
    }

    #[test]
    fn asne_inverts_sne() {
        for k in [0.05, 0.5, 0.95] {
            let seq = landen(k);
            for i in 1..10 {
                let w = Complex64::new(i as f64 / 10.0, 0.0);
                let u = asne(w, &seq);
                let back = sne(u, &seq);
                assert!((back - w).norm() < 1e-10, "k={k} w={w}: {back}");
            }
            // Imaginary arguments (used for the pole parameter).
            let w = Complex64::new(0.0, 3.0);
            let back = sne(asne(w, &seq), &seq);
            assert!((back - w).norm() < 1e-9);
        }
    }

    #[test]
    fn lowpass_0p25_order7_is_equiripple_and_sharp() {
        let f = design_iir(
            FilterFamily::Elliptic,
            7,
            BandForm::Lowpass(0.25),
            12.5,
            None,
            None,
        )
        .unwrap();
        // Passband edge sits at exactly -0.1 dB (bilinear maps it exactly).
        let edge = f.magnitude_db(0.25);
        assert!((edge + 0.1).abs() < 1e-6, "edge {edge} dB");
        // Equiripple passband within [-0.1, 0] dB.
        for i in 1..200 {
            let fq = 0.25 * i as f64 / 200.0;
            let db = f.magnitude_db(fq);
            assert!(db <= 1e-9 && db >= -0.1 - 1e-6, "passband {fq} Hz: {db} dB");
        }
        // Spec bound: at least 40 dB down at 1 Hz.
        assert!(f.magnitude_db(1.0) <= -40.0, "{}", f.magnitude_db(1.0));
        // Whole far stopband stays at or under the design attenuation
        // (equiripple peaks touch it exactly; allow float-level slack).
        for i in 0..=100 {
            let fq = 0.5 + (6.0 - 0.5) * i as f64 / 100.0;
            let db = f.magnitude_db(fq);
            assert!(db <= -40.0 + 1e-6, "stopband {fq} Hz: {db} dB");
        }
    }

    #[test]
    fn first_order_highpass_matches_closed_form() {
        let f = design_iir(
            FilterFamily::Elliptic,
            1,
            BandForm::Highpass(0.01),
            250.0,
            None,
            None,
        )
        .unwrap();
        // Odd order: 0 dB at Nyquist-side flat region, -0.1 dB at the edge.
        assert!((f.magnitude_db(0.01) + 0.1).abs() < 1e-6, "{}", f.magnitude_db(0.01));
        assert!(f.magnitude_db(10.0).abs() < 1e-3);
        // DC is an exact zero.
        assert!(f.magnitude_db(0.0) < -250.0);
    }

    #[test]
    fn even_order_lowpass_has_ripple_dc_gain() {
        let f = design_iir(
            FilterFamily::Elliptic,
            4,
            BandForm::Lowpass(1.0),
            50.0,
            Some(0.5),
            Some(45.0),
        )
        .unwrap();
        // Even order: |H(0)| = -rp.
        assert!((f.magnitude_db(0.0) + 0.5).abs() < 1e-9, "{}", f.magnitude_db(0.0));
        assert!((f.magnitude_db(1.0) + 0.5).abs() < 1e-6);
        for i in 0..=50 {
            let fq = 3.0 + 20.0 * i as f64 / 50.0;
            assert!(f.magnitude_db(fq) <= -45.0 + 1e-6);
        }
    }
}
