//! Filter design and application, analytic-signal extraction, and ICA-based
//! artifact rejection: the numeric kernels behind the preprocessing chains.

pub mod apply;
pub mod design;
pub mod elliptic;
pub mod fastica;
pub mod hilbert;

pub use apply::{apply_filter, FilterMode};
pub use design::{design_iir, BandForm, Biquad, FilterFamily, IirFilter};
pub use fastica::{
    apply_spatial_transform, fastica_eog_clean, IcaConfig, IcaOutcome, IcaReport,
};
pub use hilbert::{hilbert_analytic, unwrap_phase, wrap_phase, AnalyticSeries};
