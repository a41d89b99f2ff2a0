//! Subcommand implementations. Each command takes plain paths and options,
//! reads inputs read-only, and writes every artifact atomically so an
//! interrupted run never leaves a half-valid output directory.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use bimodec::pipeline::{
    preprocess_eeg_at_gamma_rate, preprocess_fnirs, preprocess_force, preprocess_skin,
};
use bimodec::signal::SignalKind;
use bimodec::synth::{
    eeg_labels, fnirs_labels, force_channel_labels, gen_protocol_sized, skin_labels, Synthesizer,
};
use bimodec::signal::Hand;

use crate::config::RunConfig;
use crate::dataset::{
    load_checkpoint, load_manifest, load_series, save_checkpoint, save_manifest, write_atomic,
    write_json, BtsWriter, DatasetManifest, DATASET_FORMAT_PREPROCESSED, DATASET_FORMAT_RAW,
};
use crate::plot;
use crate::runner::{
    baseline_windows_s, load_resampled, trial_windows_s, BenchReport, ModelKind, Modality,
    Prepared, RunOutcome, TRIAL_FRAMES,
};

/// Sidecar for values that must not affect report comparability
/// (reports themselves are byte-stable for a given seed).
#[derive(Debug, Serialize)]
struct RunMeta<'a> {
    generated_at_unix_s: u64,
    tool_version: &'static str,
    command: &'a str,
}

fn write_meta(dir: &Path, command: &str) -> Result<()> {
    let meta = RunMeta {
        generated_at_unix_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
    };
    Ok(write_json(&dir.join("run_meta.json"), &meta)?)
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("stage config: {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))
}

/// Generate channels in parallel but write sequentially, keeping at most
/// one small chunk of full-length channels in memory.
fn write_channels<G>(writer: &mut BtsWriter, n: usize, gen: G) -> Result<()>
where
    G: Fn(usize) -> Vec<f64> + Sync,
{
    let chunk = rayon::current_num_threads().clamp(1, 4);
    let idx: Vec<usize> = (0..n).collect();
    for block in idx.chunks(chunk) {
        let channels: Vec<Vec<f64>> = block.par_iter().map(|&i| gen(i)).collect();
        for ch in &channels {
            writer.write_channel(ch)?;
        }
    }
    Ok(())
}

pub fn cmd_synth(
    out: &Path,
    config_path: Option<&Path>,
    seed: Option<u64>,
    trials_per_condition: Option<usize>,
) -> Result<()> {
    let mut config = load_config(config_path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(t) = trials_per_condition {
        config.trials_per_condition = t;
    }
    synth_to_dir(out, &config)
}

/// Generate and write a full session for `config`. Signals are streamed
/// one channel chunk at a time; the manifest is written last so partially
/// written directories never validate.
pub fn synth_to_dir(out: &Path, config: &RunConfig) -> Result<()> {
    config.validate().context("stage config")?;
    let session = gen_protocol_sized(config.seed, config.trials_per_condition);
    let synth = Synthesizer::new(&session, &config.forward_model, config.seed)
        .context("stage synth: forward model")?;
    ensure_dir(out)?;

    let rates = session.rates.clone();
    let mut manifest = DatasetManifest::new(DATASET_FORMAT_RAW, session.clone());
    manifest.forward_model = Some(config.forward_model.clone());
    manifest.synth_seed = Some(config.seed);

    {
        let mut w = BtsWriter::create(
            out,
            "eeg.bts",
            SignalKind::Eeg,
            rates.eeg_hz,
            0.0,
            eeg_labels(),
            synth.n_eeg_samples() as u64,
        )?;
        write_channels(&mut w, eeg_labels().len(), |i| synth.gen_eeg_channel(i))?;
        manifest.signals.insert("eeg".into(), w.finish()?);
    }
    {
        let mut w = BtsWriter::create(
            out,
            "eog.bts",
            SignalKind::Eeg,
            rates.eeg_hz,
            0.0,
            vec!["EOG".to_string()],
            synth.n_eeg_samples() as u64,
        )?;
        w.write_channel(&synth.gen_eog())?;
        manifest.signals.insert("eog".into(), w.finish()?);
    }
    {
        let labels = fnirs_labels();
        let mut w = BtsWriter::create(
            out,
            "fnirs.bts",
            SignalKind::FnirsIntensity,
            rates.fnirs_hz,
            0.0,
            labels.clone(),
            synth.n_optical_samples() as u64,
        )?;
        write_channels(&mut w, labels.len(), |i| synth.gen_fnirs_channel(i))?;
        manifest.signals.insert("fnirs".into(), w.finish()?);
    }
    {
        let labels = skin_labels();
        let mut w = BtsWriter::create(
            out,
            "skin.bts",
            SignalKind::Skin,
            rates.skin_hz,
            0.0,
            labels.clone(),
            synth.n_optical_samples() as u64,
        )?;
        write_channels(&mut w, labels.len(), |i| synth.gen_skin_channel(i))?;
        manifest.signals.insert("skin".into(), w.finish()?);
    }
    {
        let mut w = BtsWriter::create(
            out,
            "force.bts",
            SignalKind::Force,
            rates.force_hz,
            0.0,
            force_channel_labels(),
            synth.n_force_samples() as u64,
        )?;
        for hand in Hand::BOTH {
            w.write_channel(&synth.gen_force_channel(hand))?;
        }
        manifest.signals.insert("force".into(), w.finish()?);
    }

    write_atomic(&out.join("config.json"), config.to_pretty_json().as_bytes())?;
    // Manifest last: a dataset directory is valid only once every signal
    // file it indexes is complete.
    save_manifest(out, &manifest)?;
    println!(
        "synthesized session {}: {} trials, {:.0} s, seed {}",
        manifest.session.subject_id,
        manifest.session.n_trials(),
        manifest.session.duration_s,
        config.seed
    );
    Ok(())
}

pub fn cmd_preprocess(dataset: &Path, out: &Path, config_path: Option<&Path>) -> Result<()> {
    let config = load_config(config_path)?;
    config.validate().context("stage config")?;
    let manifest = load_manifest(dataset)?;
    if manifest.format != DATASET_FORMAT_RAW {
        bail!(bimodec::Error::InvalidManifest(format!(
            "preprocess expects a raw dataset, got format {:?}",
            manifest.format
        )));
    }
    let session = &manifest.session;
    session.validate().context("stage load: session manifest")?;
    let baselines = baseline_windows_s(session);
    let trials = trial_windows_s(session);
    let pcfg = &config.pipeline;
    ensure_dir(out)?;

    let mut derived = DatasetManifest::new(DATASET_FORMAT_PREPROCESSED, session.clone());
    derived.synth_seed = manifest.synth_seed;

    let fnirs = load_series(dataset, &manifest, "fnirs")?;
    let od = preprocess_fnirs(&fnirs, &baselines, pcfg).context("stage preprocess: fnirs")?;
    drop(fnirs);
    derived
        .signals
        .insert("fnirs_od".into(), crate::dataset::write_series(out, "fnirs_od.bts", &od)?);
    drop(od);

    let skin = load_series(dataset, &manifest, "skin")?;
    let skin_od = preprocess_skin(&skin, &baselines, pcfg).context("stage preprocess: skin")?;
    drop(skin);
    derived
        .signals
        .insert("skin".into(), crate::dataset::write_series(out, "skin.bts", &skin_od)?);
    drop(skin_od);

    let force = load_series(dataset, &manifest, "force")?;
    let mvc = [session.mvc_left_n, session.mvc_right_n];
    let force_pct =
        preprocess_force(&force, &mvc, &trials, pcfg).context("stage preprocess: force")?;
    drop(force);
    derived
        .signals
        .insert("force".into(), crate::dataset::write_series(out, "force.bts", &force_pct)?);
    drop(force_pct);

    let gamma_rate = pcfg.eeg.gamma_rate_hz;
    let eeg_mid = load_resampled(dataset, &manifest, "eeg", gamma_rate)?;
    let eog_mid = load_resampled(dataset, &manifest, "eog", gamma_rate)?;
    let pre = preprocess_eeg_at_gamma_rate(&eeg_mid, &eog_mid, pcfg)
        .context("stage preprocess: eeg")?;
    drop(eeg_mid);
    drop(eog_mid);
    derived
        .signals
        .insert("eeg".into(), crate::dataset::write_series(out, "eeg.bts", &pre.eeg)?);
    derived.signals.insert(
        "eeg_gamma".into(),
        crate::dataset::write_series(out, "eeg_gamma.bts", &pre.eeg_gamma)?,
    );
    write_json(&out.join("preprocess_meta.json"), &pre.ica)?;

    write_atomic(&out.join("config.json"), config.to_pretty_json().as_bytes())?;
    save_manifest(out, &derived)?;
    write_meta(out, "preprocess")?;
    println!(
        "preprocessed {} -> {} ({} signals)",
        dataset.display(),
        out.display(),
        derived.signals.len()
    );
    Ok(())
}

pub fn cmd_features(dataset: &Path, out: &Path, config_path: Option<&Path>) -> Result<()> {
    let config = load_config(config_path)?;
    let prepared = Prepared::build(dataset, &config, true)?;
    let stream = &prepared.stream;
    let n_rows = stream.frames.nrows();
    let n_cols = stream.frames.ncols();
    ensure_dir(out)?;

    {
        let mut w = BtsWriter::create(
            out,
            "features.bts",
            SignalKind::Feature,
            stream.rate_hz,
            0.0,
            stream.layout.names.clone(),
            n_rows as u64,
        )?;
        for c in 0..n_cols {
            w.write_channel(&stream.frames.column(c).to_vec())?;
        }
        w.finish()?;
    }
    {
        let mut w = BtsWriter::create(
            out,
            "targets.bts",
            SignalKind::Force,
            stream.rate_hz,
            0.0,
            force_channel_labels(),
            n_rows as u64,
        )?;
        for c in 0..stream.targets.ncols() {
            w.write_channel(&stream.targets.column(c).to_vec())?;
        }
        w.finish()?;
    }

    let mut columns = String::from("index,name,group\n");
    for (i, name) in stream.layout.names.iter().enumerate() {
        let group = stream
            .layout
            .group_index
            .iter()
            .find(|(_, cols)| cols.contains(&i))
            .map(|(g, _)| g.as_str())
            .unwrap_or("");
        columns.push_str(&format!("{i},{name},{group}\n"));
    }
    write_atomic(&out.join("columns.csv"), columns.as_bytes())?;

    let mut trials = String::from("trial,condition,start_row,n_rows\n");
    for span in &stream.spans {
        trials.push_str(&format!(
            "{},{},{},{}\n",
            span.trial,
            span.condition_id,
            span.start,
            span.len
        ));
    }
    write_atomic(&out.join("trials.csv"), trials.as_bytes())?;

    #[derive(Serialize)]
    struct FeaturesMeta {
        format: &'static str,
        rate_hz: f64,
        n_rows: usize,
        n_columns: usize,
        frames_per_trial: usize,
        config_hash: String,
        dataset_fingerprint: String,
    }
    write_json(
        &out.join("features_meta.json"),
        &FeaturesMeta {
            format: "bimodec-features/1",
            rate_hz: stream.rate_hz,
            n_rows,
            n_columns: n_cols,
            frames_per_trial: TRIAL_FRAMES,
            config_hash: prepared.config_hash.clone(),
            dataset_fingerprint: prepared.dataset_fingerprint.clone(),
        },
    )?;
    write_atomic(&out.join("config.json"), config.to_pretty_json().as_bytes())?;
    write_meta(out, "features")?;
    println!("extracted {n_rows} frames x {n_cols} feature columns");
    Ok(())
}

/// FVAF table rows for one run: own- and crossed-hand accuracy per hand.
fn fvaf_csv(outcome: &RunOutcome) -> String {
    let m = &outcome.report.specificity;
    let mut s = String::from("model,modality,hand,kind,fvaf\n");
    let rows = [
        ("left", "own", m[0][0]),
        ("left", "crossed", m[0][1]),
        ("right", "own", m[1][1]),
        ("right", "crossed", m[1][0]),
    ];
    for (hand, kind, v) in rows {
        s.push_str(&format!(
            "{},{},{hand},{kind},{v:.6}\n",
            outcome.report.model, outcome.report.modality
        ));
    }
    s
}

pub fn write_run_outputs(out: &Path, outcome: &RunOutcome) -> Result<()> {
    ensure_dir(out)?;
    write_json(&out.join("report.json"), &outcome.report)?;
    let csv = fvaf_csv(outcome);
    write_atomic(&out.join("fvaf.csv"), csv.as_bytes())?;
    let svg = plot::fvaf_chart_from_csv(&csv).context("stage report: fvaf chart")?;
    write_atomic(&out.join("fvaf.svg"), svg.as_bytes())?;
    save_checkpoint(&out.join("checkpoint.bmd"), &outcome.model, &outcome.meta)?;
    write_atomic(
        &out.join("config.json"),
        (outcome.meta.config_json.clone()).as_bytes(),
    )?;
    Ok(())
}

pub fn cmd_run(
    dataset: &Path,
    out: &Path,
    config_path: Option<&Path>,
    model: ModelKind,
    modality: Modality,
) -> Result<()> {
    let config = load_config(config_path)?;
    let prepared = Prepared::build(dataset, &config, modality.needs_eeg())?;
    let outcome = prepared.run(model, modality)?;
    write_run_outputs(out, &outcome)?;
    write_meta(out, "run")?;
    let r = &outcome.report;
    println!(
        "{} {}: FVAF left {:.1} right {:.1} (val {:.1}/{:.1}), split {}",
        r.model,
        r.modality,
        r.fvaf_test[0],
        r.fvaf_test[1],
        r.fvaf_val[0],
        r.fvaf_val[1],
        &r.split_hash[..12.min(r.split_hash.len())]
    );
    Ok(())
}

/// Load a checkpoint and rebuild the matching evaluation context, failing
/// when the dataset or configuration differs from what the model saw.
fn restore(
    checkpoint: &Path,
    dataset: &Path,
    config_path: Option<&Path>,
) -> Result<(bimodec::decode::DecoderModel, crate::dataset::CheckpointMeta, Prepared)> {
    let (model, meta) = load_checkpoint(checkpoint)?;
    let config: RunConfig = serde_json::from_str(&meta.config_json)
        .map_err(|e| bimodec::Error::Config(format!("checkpoint config unreadable: {e}")))?;
    if config.hash() != meta.config_hash {
        bail!(bimodec::Error::Config(
            "checkpoint config hash does not match its embedded config".into()
        ));
    }
    if let Some(p) = config_path {
        let given = RunConfig::load(p)?;
        if given.hash() != meta.config_hash {
            bail!(bimodec::Error::Config(format!(
                "config {} does not match the checkpoint's config (hash {} != {})",
                p.display(),
                given.hash(),
                meta.config_hash
            )));
        }
    }
    let modality = Modality::from_str_tag(&meta.modality)
        .ok_or_else(|| bimodec::Error::Config(format!("unknown modality {:?}", meta.modality)))?;
    let prepared = Prepared::build(dataset, &config, modality.needs_eeg())?;
    if prepared.dataset_fingerprint != meta.dataset_fingerprint {
        bail!(bimodec::Error::Config(format!(
            "checkpoint was trained on a different dataset (fingerprint {} != {})",
            meta.dataset_fingerprint, prepared.dataset_fingerprint
        )));
    }
    if prepared.split.hash != meta.split_hash {
        bail!(bimodec::Error::Config(
            "trial split hash mismatch between checkpoint and rebuilt split".into()
        ));
    }
    Ok((model, meta, prepared))
}

pub fn cmd_sensitivity(
    checkpoint: &Path,
    dataset: &Path,
    out: &Path,
    config_path: Option<&Path>,
) -> Result<()> {
    let (model, meta, prepared) = restore(checkpoint, dataset, config_path)?;
    let report = prepared.sensitivity(&model, &meta)?;
    ensure_dir(out)?;
    write_json(&out.join("sensitivity.json"), &report)?;

    let mut csv = String::from("group,fvaf_mean,fvaf_std,percent_change,raw_drop\n");
    for row in &report.rows {
        let pc = row
            .percent_change
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{:.6},{:.6},{pc},{:.6}\n",
            row.group, row.fvaf_mean, row.fvaf_std, row.raw_drop
        ));
    }
    write_atomic(&out.join("sensitivity.csv"), csv.as_bytes())?;
    let svg = plot::sensitivity_chart_from_csv(&csv).context("stage report: sensitivity chart")?;
    write_atomic(&out.join("sensitivity.svg"), svg.as_bytes())?;
    write_meta(out, "sensitivity")?;
    println!(
        "sensitivity over {} groups, baseline FVAF {:.1}, fully shuffled {:.1}",
        report.rows.len(),
        report.baseline_fvaf,
        report.all_shuffled_fvaf
    );
    Ok(())
}

pub fn cmd_bench(
    checkpoint: &Path,
    dataset: &Path,
    out: Option<&Path>,
    repeats: usize,
    warmup: usize,
) -> Result<()> {
    let (model, meta, prepared) = restore(checkpoint, dataset, None)?;
    let report: BenchReport = prepared.bench(&model, &meta, repeats, warmup)?;
    println!(
        "{} {}: {:.3} ms/window (p99 {:.3}, max {:.3}), {:.2} ms/trial over {} windows",
        report.model,
        report.modality,
        report.per_window.mean_ms,
        report.per_window.p99_ms,
        report.per_window.max_ms,
        report.per_trial_ms,
        report.per_window.n_windows
    );
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join("bench.json"), &report)?;
        write_meta(dir, "bench")?;
    }
    Ok(())
}

pub fn cmd_report(runs: &[std::path::PathBuf], out: &Path) -> Result<()> {
    if runs.is_empty() {
        bail!(bimodec::Error::Config("report needs at least one run directory".into()));
    }
    let mut reports = Vec::new();
    for dir in runs {
        let path = dir.join("report.json");
        let report: crate::runner::RunReport = crate::dataset::read_json(&path)?;
        reports.push(report);
    }
    let first_split = &reports[0].split_hash;
    if !reports.iter().all(|r| &r.split_hash == first_split) {
        bail!(bimodec::Error::Config(
            "runs use different trial splits; their accuracies are not comparable".into()
        ));
    }
    ensure_dir(out)?;

    let mut csv = String::from("model,modality,hand,kind,fvaf\n");
    for r in &reports {
        let m = &r.specificity;
        for (hand, kind, v) in [
            ("left", "own", m[0][0]),
            ("left", "crossed", m[0][1]),
            ("right", "own", m[1][1]),
            ("right", "crossed", m[1][0]),
        ] {
            csv.push_str(&format!("{},{},{hand},{kind},{v:.6}\n", r.model, r.modality));
        }
    }
    write_atomic(&out.join("fvaf.csv"), csv.as_bytes())?;
    let svg = plot::fvaf_chart_from_csv(&csv).context("stage report: fvaf chart")?;
    write_atomic(&out.join("fvaf.svg"), svg.as_bytes())?;

    #[derive(Serialize)]
    struct Aggregate<'a> {
        split_hash: &'a str,
        runs: &'a [crate::runner::RunReport],
    }
    write_json(
        &out.join("report.json"),
        &Aggregate {
            split_hash: first_split,
            runs: &reports,
        },
    )?;
    write_meta(out, "report")?;
    println!("aggregated {} runs into {}", reports.len(), out.display());
    Ok(())
}

pub fn cmd_config_init(path: Option<&Path>) -> Result<()> {
    let json = RunConfig::default().to_pretty_json();
    match path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                if !parent.as_os_str().is_empty() {
                    ensure_dir(parent)?;
                }
            }
            write_atomic(p, json.as_bytes())?;
            println!("wrote default config to {}", p.display());
        }
        None => print!("{json}"),
    }
    Ok(())
}
