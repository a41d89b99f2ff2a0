//! IIR design: Butterworth and elliptic prototypes mapped through the
//! bilinear transform into stable biquad cascades, plus second-order notches.
//!
//! Design is always double precision and happens once per pipeline run, so
//! clarity beats speed here. Every returned filter satisfies the stability
//! invariant max |pole| < 1 - 1e-6, enforced by an assertion because valid
//! inputs cannot produce an unstable cascade.

use num_complex::Complex64;

use crate::error::{Error, Result};

use super::elliptic;

/// One second-order section of `H(z) = (b0 + b1 z^-1 + b2 z^-2) /
/// (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = Complex64::new(self.b0, 0.0) + z_inv * (self.b1 + z_inv * self.b2);
        let den = Complex64::new(1.0, 0.0) + z_inv * (self.a1 + z_inv * self.a2);
        num / den
    }

    pub fn poles(&self) -> [Complex64; 2] {
        let d = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [
            (-Complex64::new(self.a1, 0.0) + d) / 2.0,
            (-Complex64::new(self.a1, 0.0) - d) / 2.0,
        ]
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterFamily {
    Butterworth,
    Elliptic,
    Notch,
}

/// Target response shape with cutoff frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandForm {
    Lowpass(f64),
    Highpass(f64),
    Bandpass(f64, f64),
    Notch { f0_hz: f64, q: f64 },
}

impl BandForm {
    fn cutoffs(&self) -> Vec<f64> {
        match *self {
            BandForm::Lowpass(f) | BandForm::Highpass(f) => vec![f],
            BandForm::Bandpass(lo, hi) => vec![lo, hi],
            BandForm::Notch { f0_hz, .. } => vec![f0_hz],
        }
    }

    /// Slowest frequency scale of the response, used to size zero-phase
    /// padding (transients decay on roughly this time scale).
    fn characteristic_hz(&self) -> f64 {
        match *self {
            BandForm::Lowpass(f) | BandForm::Highpass(f) => f,
            BandForm::Bandpass(lo, _) => lo,
            BandForm::Notch { f0_hz, q } => f0_hz / q,
        }
    }
}

/// Full description of how a filter was designed, kept for provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub family: FilterFamily,
    pub band: BandForm,
    pub order: usize,
    pub rate_hz: f64,
    pub ripple_db: Option<f64>,
    pub atten_db: Option<f64>,
}

/// Designed biquad cascade plus its design descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct IirFilter {
    sections: Vec<Biquad>,
    spec: FilterSpec,
    pad_samples: usize,
}

impl IirFilter {
    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    /// Suggested odd-reflection padding for zero-phase application; long
    /// enough for the slowest transient to decay.
    pub fn pad_samples(&self) -> usize {
        self.pad_samples
    }

    pub fn rate_hz(&self) -> f64 {
        self.spec.rate_hz
    }

    /// Concatenate several designs into one cascade (e.g. a notch bank).
    /// The descriptor keeps the first member's spec; padding takes the
    /// longest member so every transient has room to decay.
    pub fn cascade(parts: Vec<IirFilter>) -> Result<IirFilter> {
        let first = parts
            .first()
            .ok_or(Error::EmptySignal("IirFilter::cascade"))?
            .clone();
        let mut sections = Vec::new();
        let mut pad = 0;
        for p in &parts {
            if (p.rate_hz() - first.rate_hz()).abs() > 1e-9 * first.rate_hz() {
                return Err(Error::RateMismatch {
                    context: "IirFilter::cascade",
                    expected_hz: first.rate_hz(),
                    got_hz: p.rate_hz(),
                });
            }
            sections.extend_from_slice(&p.sections);
            pad = pad.max(p.pad_samples);
        }
        Ok(IirFilter {
            sections,
            spec: first.spec,
            pad_samples: pad,
        })
    }

    /// Complex frequency response at `f_hz`.
    pub fn response_at(&self, f_hz: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * f_hz / self.spec.rate_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    /// Magnitude response in dB (floored far below any bound of interest).
    pub fn magnitude_db(&self, f_hz: f64) -> f64 {
        20.0 * self.response_at(f_hz).norm().max(1e-300).log10()
    }

    pub fn max_pole_modulus(&self) -> f64 {
        self.sections
            .iter()
            .flat_map(|s| s.poles())
            .map(|p| p.norm())
            .fold(0.0, f64::max)
    }
}

/// Analog or digital zero-pole-gain form used during design.
#[derive(Debug, Clone)]
pub(crate) struct Zpk {
    pub z: Vec<Complex64>,
    pub p: Vec<Complex64>,
    pub k: f64,
}

/// Design a filter. `ripple_db`/`atten_db` apply to the elliptic family only
/// (defaults 0.1 dB and 40 dB); the notch family takes its Q from the band
/// form and has inherent order 2.
pub fn design_iir(
    family: FilterFamily,
    order: usize,
    band: BandForm,
    rate_hz: f64,
    ripple_db: Option<f64>,
    atten_db: Option<f64>,
) -> Result<IirFilter> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(Error::InvalidRate {
            rate_hz,
            reason: "filter design rate must be finite and positive",
        });
    }
    let nyq = rate_hz / 2.0;
    for f in band.cutoffs() {
        if !(f.is_finite() && f > 0.0 && f < nyq) {
            return Err(Error::CutoffOutOfRange {
                cutoff_hz: f,
                nyquist_hz: nyq,
            });
        }
    }
    if let BandForm::Bandpass(lo, hi) = band {
        if lo >= hi {
            return Err(Error::Config(format!(
                "bandpass edges must be ordered, got [{lo}, {hi}] Hz"
            )));
        }
    }
    if order < 1 {
        return Err(Error::InvalidOrder {
            order,
            reason: "order must be at least 1",
        });
    }

    let (sections, spec) = match family {
        FilterFamily::Notch => {
            let BandForm::Notch { f0_hz, q } = band else {
                return Err(Error::Config(
                    "notch family requires a notch band form".into(),
                ));
            };
            if !(q.is_finite() && q > 0.0) {
                return Err(Error::Config(format!("notch Q must be positive, got {q}")));
            }
            let s = rbj_notch(f0_hz, q, rate_hz);
            (
                vec![s],
                FilterSpec {
                    family,
                    band,
                    order: 2,
                    rate_hz,
                    ripple_db: None,
                    atten_db: None,
                },
            )
        }
        FilterFamily::Butterworth => {
            if matches!(band, BandForm::Notch { .. }) {
                return Err(Error::Config(
                    "notch band form requires the notch family".into(),
                ));
            }
            let proto = butter_proto(order);
            let sections = realize(proto, band, rate_hz)?;
            (
                sections,
                FilterSpec {
                    family,
                    band,
                    order,
                    rate_hz,
                    ripple_db: None,
                    atten_db: None,
                },
            )
        }
        FilterFamily::Elliptic => {
            let rp = ripple_db.unwrap_or(0.1);
            let rs = atten_db.unwrap_or(40.0);
            if !(rp > 0.0 && rs > rp) {
                return Err(Error::Config(format!(
                    "elliptic needs 0 < ripple ({rp} dB) < attenuation ({rs} dB)"
                )));
            }
            if matches!(band, BandForm::Bandpass(..) | BandForm::Notch { .. }) {
                return Err(Error::Config(
                    "elliptic designs support lowpass and highpass only".into(),
                ));
            }
            let proto = elliptic::elliptic_proto(order, rp, rs);
            let sections = realize(proto, band, rate_hz)?;
            (
                sections,
                FilterSpec {
                    family,
                    band,
                    order,
                    rate_hz,
                    ripple_db: Some(rp),
                    atten_db: Some(rs),
                },
            )
        }
    };

    let filter = IirFilter {
        pad_samples: (3.0 * rate_hz / band.characteristic_hz()).ceil() as usize,
        sections,
        spec,
    };
    let max_mod = filter.max_pole_modulus();
    assert!(
        max_mod < 1.0 - 1e-6,
        "unstable design (max pole modulus {max_mod}); inputs were validated, this is a bug"
    );
    Ok(filter)
}

/// Map a normalized analog lowpass prototype onto the requested band and
/// rate: prewarp, frequency-transform, bilinear, pair into biquads.
fn realize(proto: Zpk, band: BandForm, rate_hz: f64) -> Result<Vec<Biquad>> {
    let warp = |f: f64| 2.0 * rate_hz * (std::f64::consts::PI * f / rate_hz).tan();
    let analog = match band {
        BandForm::Lowpass(f) => lp_to_lp(proto, warp(f)),
        BandForm::Highpass(f) => lp_to_hp(proto, warp(f)),
        BandForm::Bandpass(lo, hi) => {
            let (wl, wh) = (warp(lo), warp(hi));
            let w0 = (wl * wh).sqrt();
            lp_to_bp(proto, w0, wh - wl)
        }
        BandForm::Notch { .. } => unreachable!("notch handled separately"),
    };
    let digital = bilinear(analog, rate_hz);
    Ok(zpk_to_sos(digital))
}

/// Butterworth analog lowpass prototype: unit-circle poles in the left half
/// plane, no finite zeros, unit gain.
fn butter_proto(n: usize) -> Zpk {
    let p = (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (2.0 * k as f64 + n as f64 + 1.0) / (2.0 * n as f64);
            Complex64::from_polar(1.0, theta)
        })
        .collect();
    Zpk {
        z: Vec::new(),
        p,
        k: 1.0,
    }
}

fn lp_to_lp(zpk: Zpk, w0: f64) -> Zpk {
    let degree = zpk.p.len() - zpk.z.len();
    Zpk {
        z: zpk.z.into_iter().map(|z| z * w0).collect(),
        p: zpk.p.into_iter().map(|p| p * w0).collect(),
        k: zpk.k * w0.powi(degree as i32),
    }
}

fn lp_to_hp(zpk: Zpk, w0: f64) -> Zpk {
    let degree = zpk.p.len() - zpk.z.len();
    // k picks up prod(-z)/prod(-p); both products are real for conjugate sets.
    let num: Complex64 = zpk.z.iter().map(|z| -z).product();
    let den: Complex64 = zpk.p.iter().map(|p| -p).product();
    let mut z: Vec<Complex64> = zpk.z.iter().map(|z| w0 / z).collect();
    let p: Vec<Complex64> = zpk.p.iter().map(|p| w0 / p).collect();
    z.extend(std::iter::repeat(Complex64::new(0.0, 0.0)).take(degree));
    let knum = if zpk.z.is_empty() { Complex64::new(1.0, 0.0) } else { num };
    Zpk {
        z,
        p,
        k: zpk.k * (knum / den).re,
    }
}

fn lp_to_bp(zpk: Zpk, w0: f64, bw: f64) -> Zpk {
    let degree = zpk.p.len() - zpk.z.len();
    let transform = |r: Complex64| {
        let h = r * bw / 2.0;
        let d = (h * h - w0 * w0).sqrt();
        [h + d, h - d]
    };
    let mut z: Vec<Complex64> = zpk.z.iter().flat_map(|&r| transform(r)).collect();
    let p: Vec<Complex64> = zpk.p.iter().flat_map(|&r| transform(r)).collect();
    z.extend(std::iter::repeat(Complex64::new(0.0, 0.0)).take(degree));
    Zpk {
        z,
        p,
        k: zpk.k * bw.powi(degree as i32),
    }
}

/// Bilinear transform at sampling rate `fs` (cutoffs must be prewarped by
/// the caller). Analog zeros at infinity map to z = -1.
fn bilinear(zpk: Zpk, fs: f64) -> Zpk {
    let fs2 = 2.0 * fs;
    let degree = zpk.p.len() - zpk.z.len();
    let mut num = Complex64::new(1.0, 0.0);
    let mut den = Complex64::new(1.0, 0.0);
    for z in &zpk.z {
        num *= fs2 - z;
    }
    for p in &zpk.p {
        den *= fs2 - p;
    }
    let mut z: Vec<Complex64> = zpk
        .z
        .iter()
        .map(|&r| (fs2 + r) / (fs2 - r))
        .collect();
    let p: Vec<Complex64> = zpk
        .p
        .iter()
        .map(|&r| (fs2 + r) / (fs2 - r))
        .collect();
    z.extend(std::iter::repeat(Complex64::new(-1.0, 0.0)).take(degree));
    Zpk {
        z,
        p,
        k: zpk.k * (num / den).re,
    }
}

/// Roots grouped for section building: a conjugate pair or a lone real root.
enum RootGroup {
    Pair(Complex64),
    Single(f64),
}

impl RootGroup {
    fn len(&self) -> usize {
        match self {
            RootGroup::Pair(_) => 2,
            RootGroup::Single(_) => 1,
        }
    }

    fn rep(&self) -> Complex64 {
        match *self {
            RootGroup::Pair(c) => c,
            RootGroup::Single(r) => Complex64::new(r, 0.0),
        }
    }

    /// Monic polynomial coefficients [1, c1, c2] in z^-1.
    fn poly(&self) -> (f64, f64) {
        match *self {
            RootGroup::Pair(c) => (-2.0 * c.re, c.norm_sqr()),
            RootGroup::Single(r) => (-r, 0.0),
        }
    }
}

fn group_conjugates(mut roots: Vec<Complex64>) -> Vec<RootGroup> {
    const TOL: f64 = 1e-9;
    let mut groups = Vec::new();
    while let Some(r) = roots.pop() {
        if r.im.abs() <= TOL * r.norm().max(1.0) {
            groups.push(RootGroup::Single(r.re));
            continue;
        }
        let conj_at = roots
            .iter()
            .position(|q| (q - r.conj()).norm() <= 1e-6 * r.norm().max(1.0))
            .expect("conjugate-complete root set");
        roots.swap_remove(conj_at);
        groups.push(RootGroup::Pair(Complex64::new(r.re, r.im.abs())));
    }
    groups
}

/// Pair pole groups with nearby zero groups into biquads. Gain is spread
/// evenly across sections to keep intermediate signals well scaled.
fn zpk_to_sos(zpk: Zpk) -> Vec<Biquad> {
    let mut poles = group_conjugates(zpk.p);
    let mut zeros = group_conjugates(zpk.z);
    // Merge lone real poles pairwise so every section is second order.
    poles.sort_by(|a, b| b.rep().norm().partial_cmp(&a.rep().norm()).unwrap());

    let mut sections = Vec::new();
    while let Some(pg) = poles.pop() {
        let (pg, extra_real) = match pg {
            RootGroup::Single(r1) => {
                // Pull another real pole if one exists to fill the section.
                if let Some(at) = poles.iter().position(|g| matches!(g, RootGroup::Single(_))) {
                    let RootGroup::Single(r2) = poles.remove(at) else {
                        unreachable!()
                    };
                    (RootGroup::Single(r1), Some(r2))
                } else {
                    (RootGroup::Single(r1), None)
                }
            }
            pair => (pair, None),
        };
        let (mut a1, mut a2) = pg.poly();
        if let Some(r2) = extra_real {
            // (1 - r1 q)(1 - r2 q) with q = z^-1.
            let r1 = -a1;
            a1 = -(r1 + r2);
            a2 = r1 * r2;
        }

        let want = pg.len() + extra_real.is_some() as usize;
        let (b1, b2) = take_zero_poly(&mut zeros, pg.rep(), want);
        sections.push(Biquad {
            b0: 1.0,
            b1,
            b2,
            a1,
            a2,
        });
    }
    // Leftover zeros would mean more zeros than poles; our designs never do.
    debug_assert!(zeros.is_empty());

    let g = zpk.k.abs().powf(1.0 / sections.len().max(1) as f64);
    let sign = zpk.k.signum();
    for (i, s) in sections.iter_mut().enumerate() {
        let gg = if i == 0 { sign * g } else { g };
        s.b0 *= gg;
        s.b1 *= gg;
        s.b2 *= gg;
    }
    sections
}

/// Remove up to `want` zeros (preferring a conjugate pair, then the nearest
/// real ones) and return the numerator coefficients they imply.
fn take_zero_poly(zeros: &mut Vec<RootGroup>, near: Complex64, want: usize) -> (f64, f64) {
    if want >= 2 {
        // Closest pair first.
        let mut best: Option<(usize, f64)> = None;
        for (i, zg) in zeros.iter().enumerate() {
            if let RootGroup::Pair(c) = zg {
                let d = (c - near).norm();
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
        }
        if let Some((i, _)) = best {
            let RootGroup::Pair(c) = zeros.remove(i) else {
                unreachable!()
            };
            return (-2.0 * c.re, c.norm_sqr());
        }
        // Otherwise combine the two nearest real zeros.
        let mut singles: Vec<usize> = zeros
            .iter()
            .enumerate()
            .filter(|(_, g)| matches!(g, RootGroup::Single(_)))
            .map(|(i, _)| i)
            .collect();
        singles.sort_by(|&i, &j| {
            let di = (zeros[i].rep() - near).norm();
            let dj = (zeros[j].rep() - near).norm();
            di.partial_cmp(&dj).unwrap()
        });
        match singles.len() {
            0 => (0.0, 0.0),
            1 => {
                let RootGroup::Single(r) = zeros.remove(singles[0]) else {
                    unreachable!()
                };
                (-r, 0.0)
            }
            _ => {
                let (i, j) = (singles[0].max(singles[1]), singles[0].min(singles[1]));
                let RootGroup::Single(r1) = zeros.remove(i) else {
                    unreachable!()
                };
                let RootGroup::Single(r2) = zeros.remove(j) else {
                    unreachable!()
                };
                (-(r1 + r2), r1 * r2)
            }
        }
    } else {
        // Single real zero for a first-order-ish section.
        let pos = zeros
            .iter()
            .position(|g| matches!(g, RootGroup::Single(_)));
        match pos {
            Some(i) => {
                let RootGroup::Single(r) = zeros.remove(i) else {
                    unreachable!()
                };
                (-r, 0.0)
            }
            None => (0.0, 0.0),
        }
    }
}

/// Constrained second-order notch: unit gain far from `f0_hz`, zeros exactly
/// on the unit circle at the notch frequency, -3 dB width about `f0/q`.
fn rbj_notch(f0_hz: f64, q: f64, rate_hz: f64) -> Biquad {
    let w0 = 2.0 * std::f64::consts::PI * f0_hz / rate_hz;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    Biquad {
        b0: 1.0 / a0,
        b1: -2.0 * w0.cos() / a0,
        b2: 1.0 / a0,
        a1: -2.0 * w0.cos() / a0,
        a2: (1.0 - alpha) / a0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn butter(order: usize, band: BandForm, rate: f64) -> IirFilter {
        design_iir(FilterFamily::Butterworth, order, band, rate, None, None).unwrap()
    }

    #[test]
    fn butterworth_lowpass_hits_half_power_at_cutoff() {
        for order in [1, 2, 3, 5, 8] {
            let f = butter(order, BandForm::Lowpass(30.0), 250.0);
            let db = f.magnitude_db(30.0);
            assert!((db + 3.0103).abs() < 0.01, "order {order}: {db} dB");
            assert!((f.magnitude_db(0.01)).abs() < 1e-6);
        }
    }

    #[test]
    fn highpass_1hz_order5_meets_bounds() {
        let f = butter(5, BandForm::Highpass(1.0), 250.0);
        assert!(f.magnitude_db(0.1) < -40.0, "{}", f.magnitude_db(0.1));
        assert!(f.magnitude_db(10.0) > -1.0, "{}", f.magnitude_db(10.0));
        assert!((f.magnitude_db(1.0) + 3.0103).abs() < 0.01);
    }

    #[test]
    fn force_bandpass_attenuates_mains() {
        let f = butter(3, BandForm::Bandpass(0.01, 10.0), 250.0);
        assert!(f.magnitude_db(50.0) < -30.0, "{}", f.magnitude_db(50.0));
        assert!(f.magnitude_db(1.0) > -1.0, "{}", f.magnitude_db(1.0));
        assert!(f.magnitude_db(5.0) > -1.0);
    }

    #[test]
    fn notch_kills_target_and_spares_neighbors() {
        let f = design_iir(
            FilterFamily::Notch,
            2,
            BandForm::Notch { f0_hz: 50.0, q: 35.0 },
            250.0,
            None,
            None,
        )
        .unwrap();
        assert!(f.magnitude_db(50.0) < -40.0, "{}", f.magnitude_db(50.0));
        assert!(f.magnitude_db(45.0) > -3.0, "{}", f.magnitude_db(45.0));
        assert!(f.magnitude_db(55.0) > -3.0, "{}", f.magnitude_db(55.0));
        assert!(f.magnitude_db(0.01).abs() < 0.01);
    }

    #[test]
    fn all_designs_are_stable_with_margin() {
        let mut filters = Vec::new();
        for order in 1..=8 {
            filters.push(butter(order, BandForm::Lowpass(30.0), 250.0));
            filters.push(butter(order, BandForm::Highpass(1.0), 250.0));
            filters.push(butter(order, BandForm::Bandpass(0.01, 10.0), 250.0));
        }
        filters.push(butter(5, BandForm::Highpass(1.0), 500.0));
        for k in 1..=4 {
            filters.push(
                design_iir(
                    FilterFamily::Notch,
                    2,
                    BandForm::Notch { f0_hz: 50.0 * k as f64, q: 35.0 },
                    500.0,
                    None,
                    None,
                )
                .unwrap(),
            );
        }
        for f in &filters {
            assert!(
                f.max_pole_modulus() < 1.0 - 1e-6,
                "{:?}: {}",
                f.spec(),
                f.max_pole_modulus()
            );
        }
    }

    #[test]
    fn invalid_requests_are_rejected() {
        assert!(matches!(
            design_iir(
                FilterFamily::Butterworth,
                3,
                BandForm::Lowpass(200.0),
                250.0,
                None,
                None
            ),
            Err(Error::CutoffOutOfRange { .. })
        ));
        assert!(matches!(
            design_iir(
                FilterFamily::Butterworth,
                0,
                BandForm::Lowpass(10.0),
                250.0,
                None,
                None
            ),
            Err(Error::InvalidOrder { .. })
        ));
        assert!(design_iir(
            FilterFamily::Elliptic,
            3,
            BandForm::Bandpass(1.0, 10.0),
            250.0,
            None,
            None
        )
        .is_err());
    }

    #[test]
    fn bandpass_order_doubles() {
        let f = butter(3, BandForm::Bandpass(0.01, 10.0), 250.0);
        let n_poles: usize = f.sections().len() * 2;
        assert_eq!(n_poles, 6);
    }
}
