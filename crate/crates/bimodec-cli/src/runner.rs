//! End-to-end decoding over an on-disk dataset: streamed signal loading,
//! preprocessing, multi-modal feature assembly, condition-stratified trial
//! splitting, decoder training, held-out evaluation, feature-group
//! sensitivity and latency benchmarking.
//!
//! [`Prepared`] holds the assembled feature stream and split so several
//! model/modality combinations can reuse one (expensive) preprocessing
//! pass. Every quantity it produces is a pure function of the dataset
//! bytes and the run configuration; reports carry no timestamps.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bimodec::decode::{
    build_design, lambda_max, select_lambda, train_cnnatt, CnnAttArch, DecoderModel, EpochStat,
    LambdaTrace, TrainConfig,
};
use bimodec::eval::{
    latency_bench, per_hand_fvaf, sensitivity_analysis, specificity_matrix, LatencyStats,
    SensitivityConfig, SensitivityReport,
};
use bimodec::features::{
    extract_trial_features, FeatureBlock, FeatureLayout, FeatureStream, LagWindows,
    Standardization, TrialSpan, EEG_BANDS, FEATURE_RATE_HZ,
};
use bimodec::pipeline::{
    preprocess_eeg_at_gamma_rate, preprocess_fnirs, preprocess_force, preprocess_skin,
};
use bimodec::resample::resample;
use bimodec::signal::{
    epoch, Epochs, SessionManifest, TimeSeries, EPOCH_POST_S, EPOCH_PRE_S,
    TRIAL_DURATION_S,
};
use bimodec::synth::stream_seed;
use bimodec::Error;

use crate::config::RunConfig;
use crate::dataset::{self, CheckpointMeta, DatasetManifest, MANIFEST_FILE};

/// Frames per trial on the 12.5 Hz feature clock: the 18 s epoch window.
/// Every per-trial source is trimmed to exactly this length so the stream
/// does not depend on which modalities were prepared alongside.
pub const TRIAL_FRAMES: usize = 225;

/// Seconds before the go cue where the per-trial optical baseline ends
/// (samples right at the cue already carry anticipatory activity).
const BASELINE_GAP_S: f64 = 0.5;

/// Per-trial rest windows used as optical-density baselines: from the epoch
/// start up to shortly before the cue.
pub fn baseline_windows_s(session: &SessionManifest) -> Vec<(f64, f64)> {
    session
        .go_times()
        .iter()
        .map(|&g| (g - EPOCH_PRE_S, g - BASELINE_GAP_S))
        .collect()
}

/// Contraction windows (cue to trial end), used for force conditioning.
pub fn trial_windows_s(session: &SessionManifest) -> Vec<(f64, f64)> {
    session
        .go_times()
        .iter()
        .map(|&g| (g, g + TRIAL_DURATION_S))
        .collect()
}

/// Which feature columns a decoder consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Eeg,
    Fnirs,
    Both,
    Skin,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Eeg, Modality::Fnirs, Modality::Both, Modality::Skin];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Eeg => "eeg",
            Modality::Fnirs => "fnirs",
            Modality::Both => "both",
            Modality::Skin => "skin",
        }
    }

    pub fn from_str_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == tag)
    }

    /// Whether this modality's columns come from the EEG pipeline.
    pub fn needs_eeg(self) -> bool {
        matches!(self, Modality::Eeg | Modality::Both)
    }
}

/// Decoder family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    CnnAtt,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::CnnAtt => "cnnatt",
        }
    }

    pub fn from_str_tag(tag: &str) -> Option<Self> {
        [ModelKind::Linear, ModelKind::CnnAtt]
            .into_iter()
            .find(|m| m.as_str() == tag)
    }
}

/// Condition-stratified trial-level split. Indices address trials in
/// session order; every list is sorted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub hash: String,
}

/// Per-condition counts: round the train share, floor the validation share,
/// give the remainder to test; each split keeps at least one trial.
fn split_counts(n: usize, train_frac: f64, val_frac: f64) -> (usize, usize, usize) {
    debug_assert!(n >= 3);
    let tr = ((n as f64 * train_frac).round() as usize).clamp(1, n - 2);
    let va = ((n as f64 * val_frac).floor() as usize).clamp(1, n - 1 - tr);
    (tr, va, n - tr - va)
}

/// Shuffle each condition's trials with a seed-derived stream and cut by
/// the configured fractions.
pub fn split_trials(
    session: &SessionManifest,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> bimodec::Result<Split> {
    let mut by_condition: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, t) in session.trials.iter().enumerate() {
        by_condition.entry(t.condition_id).or_default().push(i);
    }
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        hash: String::new(),
    };
    for (cond, mut trials) in by_condition {
        let n = trials.len();
        if n < 3 {
            return Err(Error::Config(format!(
                "condition {cond} has {n} trials; need at least 3 to split"
            )));
        }
        let mut rng =
            ChaCha8Rng::seed_from_u64(stream_seed(seed, &format!("split/condition{cond}")));
        trials.shuffle(&mut rng);
        let (tr, va, _te) = split_counts(n, train_frac, val_frac);
        split.train.extend(&trials[..tr]);
        split.val.extend(&trials[tr..tr + va]);
        split.test.extend(&trials[tr + va..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    let desc = format!(
        "train:{:?}|val:{:?}|test:{:?}",
        split.train, split.val, split.test
    );
    split.hash = hex(&Sha256::digest(desc.as_bytes()));
    Ok(split)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Copy of `stream` keeping only the listed columns (ascending). Groups are
/// remapped into the new column space; empty groups are dropped.
pub fn column_sub_stream(stream: &FeatureStream<f64>, cols: &[usize]) -> FeatureStream<f64> {
    debug_assert!(cols.windows(2).all(|w| w[0] < w[1]));
    let frames = stream.frames.select(Axis(1), cols);
    let names: Vec<String> = cols.iter().map(|&c| stream.layout.names[c].clone()).collect();
    let mut group_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (g, members) in &stream.layout.group_index {
        let mapped: Vec<usize> = members
            .iter()
            .filter_map(|m| cols.binary_search(m).ok())
            .collect();
        if !mapped.is_empty() {
            group_index.insert(g.clone(), mapped);
        }
    }
    FeatureStream {
        frames,
        targets: stream.targets.clone(),
        rate_hz: stream.rate_hz,
        layout: FeatureLayout { names, group_index },
        spans: stream.spans.clone(),
        stats: None,
    }
}

/// Copy of `stream` keeping only the listed trials' frame rows, spans
/// rebased to the new row space. Standardization stats carry over.
pub fn restrict_trials(
    stream: &FeatureStream<f64>,
    trials: &[usize],
) -> bimodec::Result<FeatureStream<f64>> {
    let keep: Vec<&TrialSpan> = stream
        .spans
        .iter()
        .filter(|s| trials.contains(&s.trial))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptySignal("restrict_trials: no matching trials"));
    }
    let total: usize = keep.iter().map(|s| s.len).sum();
    let mut frames = Array2::<f64>::zeros((total, stream.frames.ncols()));
    let mut targets = Array2::<f64>::zeros((total, stream.targets.ncols()));
    let mut spans = Vec::with_capacity(keep.len());
    let mut at = 0;
    for s in keep {
        frames
            .slice_mut(ndarray::s![at..at + s.len, ..])
            .assign(&stream.frames.slice(ndarray::s![s.start..s.start + s.len, ..]));
        targets
            .slice_mut(ndarray::s![at..at + s.len, ..])
            .assign(&stream.targets.slice(ndarray::s![s.start..s.start + s.len, ..]));
        spans.push(TrialSpan {
            trial: s.trial,
            condition_id: s.condition_id,
            start: at,
            len: s.len,
        });
        at += s.len;
    }
    Ok(FeatureStream {
        frames,
        targets,
        rate_hz: stream.rate_hz,
        layout: stream.layout.clone(),
        spans,
        stats: stream.stats.clone(),
    })
}

/// Log-spaced regularization grid over three decades below `lmax`.
fn lambda_grid(lmax: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lmax];
    }
    (0..points)
        .map(|j| lmax * 10f64.powf(-3.0 * j as f64 / (points as f64 - 1.0)))
        .collect()
}

/// Training diagnostics of the sparse linear decoder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearDiagnostics {
    pub lambda: f64,
    pub sparsity: f64,
    pub converged: bool,
    pub sweeps: usize,
    /// True when no grid point produced a finite validation score.
    pub degenerate_selection: bool,
    pub trace: Vec<LambdaTrace>,
}

/// Training diagnostics of the conv + attention decoder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CnnAttDiagnostics {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub diverged: bool,
    pub log: Vec<EpochStat>,
}

/// One model/modality evaluation. Deterministic given (dataset, config):
/// carries hashes instead of timestamps so reruns are byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub modality: String,
    pub subject_id: String,
    pub seed: u64,
    pub config_hash: String,
    pub split_hash: String,
    pub dataset_fingerprint: String,
    pub train_trials: Vec<usize>,
    pub val_trials: Vec<usize>,
    pub test_trials: Vec<usize>,
    pub n_feature_columns: usize,
    pub lag_frames: usize,
    pub n_train_frames: usize,
    pub n_val_frames: usize,
    pub n_test_frames: usize,
    /// Held-out own-hand FVAF, [left, right].
    pub fvaf_test: [f64; 2],
    pub fvaf_test_mean: f64,
    /// Validation own-hand FVAF, [left, right].
    pub fvaf_val: [f64; 2],
    /// [predicted hand][true hand]: diagonal own-hand, off-diagonal crossed.
    pub specificity: [[f64; 2]; 2],
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub linear: Option<LinearDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cnnatt: Option<CnnAttDiagnostics>,
}

impl RunReport {
    /// Reports must contain only finite numbers.
    pub fn check_finite(&self) -> bimodec::Result<()> {
        let mut vals = vec![self.fvaf_test_mean];
        vals.extend(self.fvaf_test);
        vals.extend(self.fvaf_val);
        for row in self.specificity {
            vals.extend(row);
        }
        if let Some(l) = &self.linear {
            vals.push(l.lambda);
            vals.push(l.sparsity);
        }
        if let Some(c) = &self.cnnatt {
            vals.extend(c.log.iter().flat_map(|e| [e.train_loss, e.val_fvaf]));
        }
        if let Some(bad) = vals.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                context: "run report",
                reason: format!("non-finite value {bad}"),
            });
        }
        Ok(())
    }
}

/// A trained model with its provenance and evaluation.
pub struct RunOutcome {
    pub model: DecoderModel,
    pub meta: CheckpointMeta,
    pub report: RunReport,
}

/// Latency measurement of one trained model on the held-out trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: String,
    pub modality: String,
    pub per_window: LatencyStats,
    /// Mean wall-clock to decode one full trial's windows, milliseconds.
    pub per_trial_ms: f64,
    pub windows_per_trial: f64,
    pub n_trials: usize,
    pub repeats: usize,
}

/// Dataset loaded, preprocessed, assembled and split: everything shared
/// between model/modality runs over one session.
pub struct Prepared {
    pub stream: FeatureStream<f64>,
    pub split: Split,
    pub config: RunConfig,
    pub config_hash: String,
    pub dataset_fingerprint: String,
    pub session: SessionManifest,
    pub with_eeg: bool,
}

impl Prepared {
    /// Load and preprocess a raw dataset. With `with_eeg` false the EEG
    /// pipeline is skipped and the stream carries only optical columns
    /// (identical values to a full build, fewer columns).
    pub fn build(dir: &Path, config: &RunConfig, with_eeg: bool) -> anyhow::Result<Self> {
        config.validate().context("configuration")?;
        let manifest = dataset::load_manifest(dir).context("dataset manifest")?;
        if manifest.format != dataset::DATASET_FORMAT_RAW {
            bail!(
                "dataset {} has format {:?}; decoding runs need a raw dataset",
                dir.display(),
                manifest.format
            );
        }
        manifest.session.validate().context("session protocol")?;
        let dataset_fingerprint = dataset::file_sha256(&dir.join(MANIFEST_FILE))?;
        let session = manifest.session.clone();
        let go_times = session.go_times();
        let baseline_windows = baseline_windows_s(&session);
        let trial_windows = trial_windows_s(&session);

        log::info!("preprocessing force");
        let force = {
            let raw = dataset::load_series(dir, &manifest, "force").context("load force")?;
            let mvc = [session.mvc_left_n, session.mvc_right_n];
            preprocess_force(&raw, &mvc, &trial_windows, &config.pipeline)
                .context("stage preprocess: force")?
        };

        log::info!("preprocessing optical channels");
        let fnirs_od = {
            let raw = dataset::load_series(dir, &manifest, "fnirs").context("load fnirs")?;
            preprocess_fnirs(&raw, &baseline_windows, &config.pipeline)
                .context("stage preprocess: fnirs")?
        };
        let skin = {
            let raw = dataset::load_series(dir, &manifest, "skin").context("load skin")?;
            preprocess_skin(&raw, &baseline_windows, &config.pipeline)
                .context("stage preprocess: skin")?
        };

        let eeg_pre = if with_eeg {
            log::info!("loading EEG at the intermediate rate");
            let mid_rate = config.pipeline.eeg.gamma_rate_hz;
            let eeg_mid = load_resampled(dir, &manifest, "eeg", mid_rate).context("load eeg")?;
            let eog_mid = load_resampled(dir, &manifest, "eog", mid_rate).context("load eog")?;
            log::info!("preprocessing EEG");
            Some(
                preprocess_eeg_at_gamma_rate(&eeg_mid, &eog_mid, &config.pipeline)
                    .context("stage preprocess: eeg")?,
            )
        } else {
            None
        };

        log::info!("assembling feature stream");
        let ep_force = checked_epochs(&force, &go_times, "force")?;
        drop(force);
        let ep_od = checked_epochs(&fnirs_od, &go_times, "fnirs")?;
        drop(fnirs_od);
        let ep_skin = checked_epochs(&skin, &go_times, "skin")?;
        drop(skin);
        let eeg_epochs = match &eeg_pre {
            Some(p) => Some((
                checked_epochs(&p.eeg, &go_times, "eeg")?,
                checked_epochs(&p.eeg_gamma, &go_times, "eeg gamma stream")?,
            )),
            None => None,
        };
        drop(eeg_pre);

        let mut parts = Vec::with_capacity(session.trials.len());
        for (i, trial) in session.trials.iter().enumerate() {
            let in_trial = |what: &str| {
                format!(
                    "stage features: trial {i} (condition {}, go {:.2} s): {what}",
                    trial.condition_id, trial.go_time_s
                )
            };
            let block = match &eeg_epochs {
                Some((ep_eeg, ep_gamma)) => extract_trial_features(
                    &ep_eeg.slices[i],
                    Some(&ep_gamma.slices[i]),
                    &ep_od.slices[i],
                    &EEG_BANDS,
                    config.pipeline.mode,
                )
                .with_context(|| in_trial("band extraction"))?,
                None => block_from_series(&ep_od.slices[i], "fnirs")
                    .with_context(|| in_trial("optical block"))?,
            };
            let skin_block = block_from_series(&ep_skin.slices[i], "skin")
                .with_context(|| in_trial("skin block"))?;
            let block = bimodec::features::align_streams(&block, &skin_block)
                .with_context(|| in_trial("alignment"))?;
            let block = trim_block(block, TRIAL_FRAMES).with_context(|| in_trial("frame count"))?;

            let y = resample(&ep_force.slices[i], FEATURE_RATE_HZ)
                .with_context(|| in_trial("target resample"))?;
            if y.n_samples() < TRIAL_FRAMES {
                bail!("{}", in_trial(&format!("{} target frames, need {TRIAL_FRAMES}", y.n_samples())));
            }
            let mut targets = Array2::<f64>::zeros((TRIAL_FRAMES, 2));
            for h in 0..2 {
                for t in 0..TRIAL_FRAMES {
                    targets[[t, h]] = y.data()[[h, t]];
                }
            }
            parts.push((block, targets, trial.condition_id));
        }
        let stream = FeatureStream::concat_trials(parts).context("stage features: concat")?;

        let split = split_trials(
            &session,
            config.split.train_frac,
            config.split.val_frac,
            config.seed,
        )
        .context("stage split")?;

        Ok(Self {
            stream,
            split,
            config: config.clone(),
            config_hash: config.hash(),
            dataset_fingerprint,
            session,
            with_eeg,
        })
    }

    /// Columns of one modality in the assembled stream, ascending.
    pub fn modality_columns(&self, modality: Modality) -> anyhow::Result<Vec<usize>> {
        let gi = &self.stream.layout.group_index;
        let take = |name: &str| -> anyhow::Result<Vec<usize>> {
            gi.get(name).cloned().ok_or_else(|| {
                anyhow::Error::from(Error::Config(format!(
                    "stream has no {name:?} feature group (prepared without it?)"
                )))
            })
        };
        let mut cols = match modality {
            Modality::Eeg => take("eeg")?,
            Modality::Fnirs => take("fnirs")?,
            Modality::Skin => take("skin")?,
            Modality::Both => {
                let mut c = take("eeg")?;
                c.extend(take("fnirs")?);
                c
            }
        };
        cols.sort_unstable();
        cols.dedup();
        Ok(cols)
    }

    /// Window end-frames of each split, in stream frame space.
    fn split_frames(&self, windows: &LagWindows) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        let mut test = Vec::new();
        for span in &self.stream.spans {
            let dst = if self.split.train.contains(&span.trial) {
                &mut train
            } else if self.split.val.contains(&span.trial) {
                &mut val
            } else {
                &mut test
            };
            let lo = span.start + windows.k - 1;
            dst.extend(lo..span.start + span.len);
        }
        (train, val, test)
    }

    /// Train and evaluate one decoder on one modality.
    pub fn run(&self, kind: ModelKind, modality: Modality) -> anyhow::Result<RunOutcome> {
        if modality.needs_eeg() && !self.with_eeg {
            bail!("stream was prepared without the EEG pipeline; cannot run modality {}", modality.as_str());
        }
        let cols = self.modality_columns(modality)?;
        log::info!(
            "training {} on {} ({} columns)",
            kind.as_str(),
            modality.as_str(),
            cols.len()
        );
        let sub = column_sub_stream(&self.stream, &cols);
        let layout = sub.layout.clone();
        let windows = LagWindows::build(&sub, self.config.lag_window_ms)
            .context("stage windows")?;
        let (train_f, val_f, test_f) = self.split_frames(&windows);
        if train_f.is_empty() || val_f.is_empty() || test_f.is_empty() {
            bail!(
                "empty split: {} train, {} val, {} test windows",
                train_f.len(),
                val_f.len(),
                test_f.len()
            );
        }
        let train_rows = sub.rows_of_trials(&self.split.train);
        let stats = Standardization::fit(&sub.frames.view(), &train_rows)
            .context("stage standardize")?;
        let std_stream = sub.standardized(&stats).context("stage standardize")?;
        drop(sub);

        let (model, linear_diag, cnnatt_diag) = match kind {
            ModelKind::Linear => {
                let train_design = build_design(&std_stream, &windows, &train_f)
                    .context("stage train: design")?;
                let val_design = build_design(&std_stream, &windows, &val_f)
                    .context("stage train: design")?;
                let lmax = lambda_max(&train_design);
                let grid = lambda_grid(lmax, self.config.lasso.grid_points);
                let (mut m, trace, degenerate) = select_lambda(
                    &train_design,
                    &val_design,
                    &grid,
                    self.config.lasso.max_sweeps,
                    self.config.lasso.tol,
                )
                .context("stage train: regularization path")?;
                m.stats = Some(stats.clone());
                let diag = LinearDiagnostics {
                    lambda: m.lambda,
                    sparsity: m.sparsity,
                    converged: m.converged,
                    sweeps: m.sweeps,
                    degenerate_selection: degenerate,
                    trace,
                };
                (DecoderModel::Linear(m), Some(diag), None)
            }
            ModelKind::CnnAtt => {
                let c = &self.config.cnnatt;
                let arch = CnnAttArch {
                    input_frames: windows.k,
                    input_features: std_stream.frames.ncols(),
                    conv_channels: c.conv_channels,
                    kernel: c.kernel,
                    fc_hidden: c.fc_hidden,
                    outputs: 2,
                    layer_norm_eps: 1e-5,
                };
                let tc = TrainConfig {
                    lr: c.lr,
                    batch: c.batch,
                    patience: c.patience,
                    max_epochs: c.max_epochs,
                    seed: self.config.seed,
                    train_stride: c.train_stride,
                    min_delta: c.min_delta,
                };
                let m = train_cnnatt(&std_stream, &windows, &train_f, &val_f, arch, &tc)
                    .context("stage train: optimization")?;
                let diag = CnnAttDiagnostics {
                    best_epoch: m.best_epoch,
                    epochs_run: m.log.len(),
                    stopped_early: m.stopped_early,
                    diverged: m.diverged,
                    log: m.log.clone(),
                };
                (DecoderModel::CnnAtt(m), None, Some(diag))
            }
        };

        log::info!("evaluating on held-out trials");
        let pred_test = model
            .predict_frames(&std_stream, &windows, &test_f, 512)
            .context("stage evaluate: test")?;
        let truth = |h: usize| -> Vec<f64> {
            test_f.iter().map(|&t| std_stream.targets[[t, h]]).collect()
        };
        let spec = specificity_matrix(
            &pred_test.column(0).to_vec(),
            &pred_test.column(1).to_vec(),
            &truth(0),
            &truth(1),
        )
        .context("stage evaluate: specificity")?;
        let fvaf_test = [spec[0][0], spec[1][1]];
        let pred_val = model
            .predict_frames(&std_stream, &windows, &val_f, 512)
            .context("stage evaluate: validation")?;
        let fvaf_val = per_hand_fvaf(&std_stream, &val_f, &pred_val)
            .context("stage evaluate: validation")?;

        let report = RunReport {
            model: kind.as_str().into(),
            modality: modality.as_str().into(),
            subject_id: self.session.subject_id.clone(),
            seed: self.config.seed,
            config_hash: self.config_hash.clone(),
            split_hash: self.split.hash.clone(),
            dataset_fingerprint: self.dataset_fingerprint.clone(),
            train_trials: self.split.train.clone(),
            val_trials: self.split.val.clone(),
            test_trials: self.split.test.clone(),
            n_feature_columns: layout.names.len(),
            lag_frames: windows.k,
            n_train_frames: train_f.len(),
            n_val_frames: val_f.len(),
            n_test_frames: test_f.len(),
            fvaf_test,
            fvaf_test_mean: (fvaf_test[0] + fvaf_test[1]) / 2.0,
            fvaf_val,
            specificity: spec,
            linear: linear_diag,
            cnnatt: cnnatt_diag,
        };
        report.check_finite().context("stage evaluate")?;

        let meta = CheckpointMeta {
            model_kind: kind.as_str().into(),
            modality: modality.as_str().into(),
            config_hash: self.config_hash.clone(),
            split_hash: self.split.hash.clone(),
            dataset_fingerprint: self.dataset_fingerprint.clone(),
            seed: self.config.seed,
            lag_frames: windows.k,
            feature_names: layout.names,
            group_index: layout.group_index,
            config_json: self.config.to_pretty_json(),
        };
        Ok(RunOutcome {
            model,
            meta,
            report,
        })
    }

    /// Standardized stream restricted to the model's columns and the
    /// held-out trials, plus its lag windows.
    fn test_stream_for(
        &self,
        model: &DecoderModel,
        meta: &CheckpointMeta,
    ) -> anyhow::Result<(FeatureStream<f64>, LagWindows)> {
        let cols: Vec<usize> = meta
            .feature_names
            .iter()
            .map(|n| {
                self.stream
                    .layout
                    .names
                    .iter()
                    .position(|x| x == n)
                    .ok_or_else(|| {
                        anyhow::Error::from(Error::Config(format!(
                            "checkpoint feature {n:?} not present in this stream"
                        )))
                    })
            })
            .collect::<anyhow::Result<_>>()?;
        let stats = model
            .stats()
            .cloned()
            .ok_or_else(|| anyhow::Error::from(Error::Config("model carries no standardization".into())))?;
        let sub = column_sub_stream(&self.stream, &cols);
        let std_stream = sub.standardized(&stats).context("stage standardize")?;
        let test = restrict_trials(&std_stream, &self.split.test).context("stage restrict")?;
        let windows = LagWindows::build(&test, self.config.lag_window_ms).context("stage windows")?;
        Ok((test, windows))
    }

    /// Feature-group shuffling analysis of a trained model on the held-out
    /// trials. Groups come from the checkpoint's column index.
    pub fn sensitivity(
        &self,
        model: &DecoderModel,
        meta: &CheckpointMeta,
    ) -> anyhow::Result<SensitivityReport> {
        let (test, windows) = self.test_stream_for(model, meta)?;
        let groups: Vec<(String, Vec<usize>)> = meta
            .group_index
            .iter()
            .map(|(g, c)| (g.clone(), c.clone()))
            .collect();
        let cfg = SensitivityConfig {
            reps: self.config.sensitivity.reps,
            seed: self.config.seed,
            batch: self.config.sensitivity.batch,
        };
        sensitivity_analysis(model, &test, &windows, &groups, &cfg)
            .context("stage sensitivity")
    }

    /// Per-window wall-clock of streaming prediction on the held-out trials.
    pub fn bench(
        &self,
        model: &DecoderModel,
        meta: &CheckpointMeta,
        repeats: usize,
        warmup: usize,
    ) -> anyhow::Result<BenchReport> {
        let (test, windows) = self.test_stream_for(model, meta)?;
        let stats = latency_bench(model, &test, &windows, repeats, warmup)
            .context("stage bench")?;
        let n_trials = test.spans.len();
        let windows_per_trial = windows.indices.len() as f64 / n_trials as f64;
        Ok(BenchReport {
            model: meta.model_kind.clone(),
            modality: meta.modality.clone(),
            per_trial_ms: stats.mean_ms * windows_per_trial,
            windows_per_trial,
            per_window: stats,
            n_trials,
            repeats,
        })
    }
}

/// Epoch a series and fail loudly when any trial window does not fit.
fn checked_epochs(
    ts: &TimeSeries<f64>,
    go_times: &[f64],
    what: &str,
) -> anyhow::Result<Epochs<f64>> {
    let ep = epoch(ts, go_times, EPOCH_PRE_S, EPOCH_POST_S)
        .with_context(|| format!("stage epoch: {what}"))?;
    if !ep.rejected.is_empty() {
        let ids: Vec<String> = ep
            .rejected
            .iter()
            .map(|r| format!("trial {} ({})", r.trial_index, r.reason))
            .collect();
        return Err(anyhow::Error::from(Error::InvalidManifest(format!(
            "{what}: {} epoch windows outside the recording: {}",
            ids.len(),
            ids.join("; ")
        ))));
    }
    Ok(ep)
}

/// Feature block straight from an already slow-rate optical series: one
/// column per channel named `<group>:<label>`, all in one group.
fn block_from_series(ts: &TimeSeries<f64>, group: &str) -> bimodec::Result<FeatureBlock<f64>> {
    let ts = if (ts.rate_hz() - FEATURE_RATE_HZ).abs() > 1e-9 * FEATURE_RATE_HZ {
        resample(ts, FEATURE_RATE_HZ)?
    } else {
        ts.clone()
    };
    let names: Vec<String> = ts.labels().iter().map(|l| format!("{group}:{l}")).collect();
    let mut group_index = BTreeMap::new();
    group_index.insert(group.to_string(), (0..names.len()).collect());
    Ok(FeatureBlock {
        frames: ts.data().t().to_owned(),
        rate_hz: FEATURE_RATE_HZ,
        t0_s: ts.t0_s(),
        layout: FeatureLayout { names, group_index },
    })
}

/// Cut a block to exactly `n` frames; shorter blocks are an error.
fn trim_block(block: FeatureBlock<f64>, n: usize) -> bimodec::Result<FeatureBlock<f64>> {
    if block.frames.nrows() < n {
        return Err(Error::SignalTooShort {
            context: "trim_block",
            needed: n,
            got: block.frames.nrows(),
        });
    }
    Ok(FeatureBlock {
        frames: block.frames.slice(ndarray::s![..n, ..]).to_owned(),
        rate_hz: block.rate_hz,
        t0_s: block.t0_s,
        layout: block.layout,
    })
}

/// Load one dataset signal channel by channel, resampling each to
/// `target_hz` before assembly so the peak footprint stays one channel.
pub fn load_resampled(
    dir: &Path,
    manifest: &DatasetManifest,
    name: &str,
    target_hz: f64,
) -> anyhow::Result<TimeSeries<f64>> {
    let entry = manifest.entry(name)?;
    let mut reader = dataset::BtsReader::open_verified(dir, entry)?;
    let kind = reader.kind;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(reader.n_channels);
    for ch in 0..reader.n_channels {
        let raw = reader.read_channel(ch)?;
        let one = TimeSeries::new(
            kind,
            Array2::from_shape_vec((1, raw.len()), raw).map_err(|e| {
                Error::Numeric {
                    context: "load_resampled",
                    reason: e.to_string(),
                }
            })?,
            reader.rate_hz,
            reader.t0_s,
            vec![entry.channels[ch].clone()],
        )?;
        let out = resample(&one, target_hz)?;
        rows.push(out.channel(0).to_vec());
    }
    let n = rows.iter().map(|r| r.len()).min().unwrap_or(0);
    let mut data = Array2::<f64>::zeros((rows.len(), n));
    for (ch, row) in rows.iter().enumerate() {
        for i in 0..n {
            data[[ch, i]] = row[i];
        }
    }
    Ok(TimeSeries::new(
        kind,
        data,
        target_hz,
        reader.t0_s,
        entry.channels.clone(),
    )?)
}
