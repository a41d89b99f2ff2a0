//! Run configuration: one JSON document covering generation, preprocessing,
//! splitting and both decoders. Defaults reproduce the standard session;
//! `config init` dumps them; flags override file values; the effective
//! document is persisted next to every output and hashed into reports.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bimodec::features::LAG_WINDOW_MS;
use bimodec::pipeline::PipelineConfig;
use bimodec::signal::TRIALS_PER_CONDITION;
use bimodec::synth::ForwardModelParams;
use bimodec::{Error, Result};

/// Trial-level split fractions; the test share is the remainder.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_frac: 0.70,
            val_frac: 0.15,
        }
    }
}

/// Sparse linear decoder training knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoConfig {
    /// Log-spaced regularization grid points below the null threshold.
    pub grid_points: usize,
    /// Coordinate-descent sweep cap per grid point.
    pub max_sweeps: usize,
    /// Convergence threshold on the largest coefficient move per sweep.
    pub tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            grid_points: 13,
            max_sweeps: 150,
            tol: 1e-4,
        }
    }
}

/// Conv + attention decoder: architecture sizes and optimizer knobs. The
/// window length and feature count come from the data; the training seed is
/// the run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnAttConfig {
    pub conv_channels: usize,
    pub kernel: usize,
    pub fc_hidden: usize,
    pub lr: f64,
    pub batch: usize,
    pub patience: usize,
    pub max_epochs: usize,
    /// Keep every n-th training window; validation is never subsampled.
    pub train_stride: usize,
    pub min_delta: f64,
}

impl Default for CnnAttConfig {
    fn default() -> Self {
        Self {
            conv_channels: 32,
            kernel: 3,
            fc_hidden: 32,
            lr: 1e-3,
            batch: 96,
            patience: 3,
            max_epochs: 20,
            train_stride: 3,
            min_delta: 0.0,
        }
    }
}

/// Feature-group shuffling analysis knobs; the shuffle seed is the run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityRunConfig {
    pub reps: usize,
    pub batch: usize,
}

impl Default for SensitivityRunConfig {
    fn default() -> Self {
        Self {
            reps: 20,
            batch: 256,
        }
    }
}

/// The full effective configuration of a synthesis or decoding run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed: session protocol, signal noise, split, weight init and
    /// shuffle analysis all derive from it.
    pub seed: u64,
    pub trials_per_condition: usize,
    pub forward_model: ForwardModelParams,
    pub pipeline: PipelineConfig,
    pub lag_window_ms: f64,
    pub split: SplitConfig,
    pub lasso: LassoConfig,
    pub cnnatt: CnnAttConfig,
    pub sensitivity: SensitivityRunConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            trials_per_condition: TRIALS_PER_CONDITION,
            forward_model: ForwardModelParams::default(),
            pipeline: PipelineConfig::default(),
            lag_window_ms: LAG_WINDOW_MS,
            split: SplitConfig::default(),
            lasso: LassoConfig::default(),
            cnnatt: CnnAttConfig::default(),
            sensitivity: SensitivityRunConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.forward_model.validate()?;
        self.pipeline.validate()?;
        let s = &self.split;
        if !(s.train_frac > 0.0 && s.val_frac > 0.0 && s.train_frac + s.val_frac < 1.0) {
            return Err(Error::Config(format!(
                "split fractions {}/{} leave no test share",
                s.train_frac, s.val_frac
            )));
        }
        if self.trials_per_condition < 3 {
            return Err(Error::Config(
                "need at least 3 trials per condition to form train/val/test splits".into(),
            ));
        }
        if !(self.lag_window_ms > 0.0) {
            return Err(Error::Config(format!(
                "lag window must be positive, got {} ms",
                self.lag_window_ms
            )));
        }
        if self.lasso.grid_points == 0 || self.lasso.max_sweeps == 0 || !(self.lasso.tol > 0.0) {
            return Err(Error::Config("lasso grid, sweeps and tol must be positive".into()));
        }
        let c = &self.cnnatt;
        if c.conv_channels == 0
            || c.fc_hidden == 0
            || c.batch == 0
            || c.max_epochs == 0
            || c.train_stride == 0
            || !(c.lr > 0.0)
        {
            return Err(Error::Config("cnnatt sizes, batch, epochs and lr must be positive".into()));
        }
        if c.kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "cnnatt kernel must be odd, got {}",
                c.kernel
            )));
        }
        if self.sensitivity.reps == 0 || self.sensitivity.batch == 0 {
            return Err(Error::Config("sensitivity reps and batch must be positive".into()));
        }
        Ok(())
    }

    /// Load from a JSON file (all fields optional, missing ones default).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::IoAt {
            path: path.to_path_buf(),
            source: e,
        })?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical (compact, declaration-ordered) JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_pretty_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.trials_per_condition, 30);
        let back: RunConfig = serde_json::from_str(&cfg.to_pretty_json()).unwrap();
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn hash_tracks_every_field() {
        let base = RunConfig::default();
        let mut changed = RunConfig::default();
        changed.cnnatt.conv_channels += 1;
        assert_ne!(base.hash(), changed.hash());
        let mut changed = RunConfig::default();
        changed.forward_model.mayer_od *= 2.0;
        assert_ne!(base.hash(), changed.hash());
    }

    #[test]
    fn partial_files_inherit_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"seed": 7, "cnnatt": {"batch": 32}}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.cnnatt.batch, 32);
        assert_eq!(cfg.cnnatt.kernel, RunConfig::default().cnnatt.kernel);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"split": {"train_frac": 0.9, "val_frac": 0.2}}"#).unwrap();
        let err = RunConfig::load(&path).unwrap_err();
        assert_eq!(err.class(), bimodec::ErrorClass::Config);
        std::fs::write(&path, "not json").unwrap();
        let err = RunConfig::load(&path).unwrap_err();
        assert_eq!(err.class(), bimodec::ErrorClass::Config);
    }
}
