//! On-disk formats: raw/preprocessed signal datasets and model checkpoints.
//!
//! A dataset is a directory holding one binary file per signal plus
//! `manifest.json`. Signal files are channel-major little-endian `f32`
//! blocks behind a fixed header, so single channels can be streamed off
//! disk without touching the rest. The manifest indexes every file with
//! its SHA-256, which readers verify before use.
//!
//! All writes go through a temp file in the target directory followed by a
//! rename, so a failed command never leaves a partial file behind.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bimodec::signal::{SessionManifest, SignalKind};
use bimodec::synth::ForwardModelParams;
use bimodec::{Error, Result, TimeSeries};

const BTS_MAGIC: &[u8; 4] = b"BTS1";
const BMD_MAGIC: &[u8; 4] = b"BMD1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FORMAT_RAW: &str = "bimodec-dataset/1";
pub const DATASET_FORMAT_PREPROCESSED: &str = "bimodec-preprocessed/1";

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::IoAt {
        path: path.to_path_buf(),
        source: e,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Write `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_path(path);
    let write = || -> std::io::Result<()> {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        Ok(())
    };
    if let Err(e) = write() {
        let _ = fs::remove_file(&tmp);
        return Err(io_at(path)(e));
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_at(path)(e)
    })
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Serialize as pretty JSON and write atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| format_err(path, format!("serialize: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, format!("parse: {e}")))
}

/// Index entry for one signal file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalEntry {
    pub file: String,
    pub kind: String,
    pub rate_hz: f64,
    pub t0_s: f64,
    pub channels: Vec<String>,
    pub samples: u64,
    pub sha256: String,
}

/// Dataset directory index: session protocol plus one entry per signal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub session: SessionManifest,
    pub signals: BTreeMap<String, SignalEntry>,
    /// Present on synthesized datasets: the generator configuration echo.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward_model: Option<ForwardModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_seed: Option<u64>,
}

impl DatasetManifest {
    pub fn new(format: &str, session: SessionManifest) -> Self {
        Self {
            format: format.into(),
            session,
            signals: BTreeMap::new(),
            forward_model: None,
            synth_seed: None,
        }
    }

    pub fn entry(&self, name: &str) -> Result<&SignalEntry> {
        self.signals
            .get(name)
            .ok_or_else(|| Error::InvalidManifest(format!("no signal named {name:?} in manifest")))
    }
}

pub fn save_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    write_json(&dir.join(MANIFEST_FILE), manifest)
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let m: DatasetManifest = read_json(&path)?;
    if m.format != DATASET_FORMAT_RAW && m.format != DATASET_FORMAT_PREPROCESSED {
        return Err(format_err(&path, format!("unknown format {:?}", m.format)));
    }
    for (name, e) in &m.signals {
        if !dir.join(&e.file).is_file() {
            return Err(Error::InvalidManifest(format!(
                "signal {name:?} points at missing file {:?}",
                e.file
            )));
        }
        if SignalKind::from_str_tag(&e.kind).is_none() {
            return Err(Error::InvalidManifest(format!(
                "signal {name:?} has unknown kind {:?}",
                e.kind
            )));
        }
    }
    Ok(m)
}

/// SHA-256 of a whole file, streamed.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(io_at(path))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf).map_err(io_at(path))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Streaming channel-major writer for one signal file. Channels are fed in
/// order; `finish` seals the file and returns its manifest entry.
pub struct BtsWriter {
    path: PathBuf,
    tmp: PathBuf,
    w: BufWriter<File>,
    hasher: Sha256,
    kind: SignalKind,
    rate_hz: f64,
    t0_s: f64,
    labels: Vec<String>,
    samples: u64,
    written: usize,
    file_name: String,
}

impl BtsWriter {
    pub fn create(
        dir: &Path,
        file_name: &str,
        kind: SignalKind,
        rate_hz: f64,
        t0_s: f64,
        labels: Vec<String>,
        samples: u64,
    ) -> Result<Self> {
        let path = dir.join(file_name);
        let tmp = tmp_path(&path);
        let f = File::create(&tmp).map_err(io_at(&path))?;
        let mut this = Self {
            path,
            tmp,
            w: BufWriter::new(f),
            hasher: Sha256::new(),
            kind,
            rate_hz,
            t0_s,
            labels,
            samples,
            written: 0,
            file_name: file_name.into(),
        };
        let header = this.header_bytes();
        this.put(&header)?;
        Ok(this)
    }

    fn header_bytes(&self) -> Vec<u8> {
        let tag = self.kind.as_str().as_bytes();
        let mut h = Vec::with_capacity(4 + 1 + tag.len() + 4 + 8 + 8 + 8);
        h.extend_from_slice(BTS_MAGIC);
        h.push(tag.len() as u8);
        h.extend_from_slice(tag);
        h.extend_from_slice(&(self.labels.len() as u32).to_le_bytes());
        h.extend_from_slice(&self.samples.to_le_bytes());
        h.extend_from_slice(&self.rate_hz.to_le_bytes());
        h.extend_from_slice(&self.t0_s.to_le_bytes());
        h
    }

    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.hasher.update(bytes);
        self.w.write_all(bytes).map_err(|e| {
            let _ = fs::remove_file(&self.tmp);
            Error::IoAt {
                path: self.path.clone(),
                source: e,
            }
        })
    }

    pub fn write_channel(&mut self, data: &[f64]) -> Result<()> {
        if data.len() as u64 != self.samples {
            return Err(Error::ShapeMismatch {
                context: "BtsWriter::write_channel",
                expected: format!("{} samples", self.samples),
                got: format!("{}", data.len()),
            });
        }
        if self.written >= self.labels.len() {
            return Err(Error::ShapeMismatch {
                context: "BtsWriter::write_channel",
                expected: format!("{} channels", self.labels.len()),
                got: format!("{}", self.written + 1),
            });
        }
        let mut bytes = Vec::with_capacity(data.len() * 4);
        for &v in data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        self.put(&bytes)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<SignalEntry> {
        if self.written != self.labels.len() {
            let _ = fs::remove_file(&self.tmp);
            return Err(Error::ShapeMismatch {
                context: "BtsWriter::finish",
                expected: format!("{} channels", self.labels.len()),
                got: format!("{}", self.written),
            });
        }
        let flush = self
            .w
            .flush()
            .and_then(|_| self.w.get_ref().sync_all());
        if let Err(e) = flush {
            let _ = fs::remove_file(&self.tmp);
            return Err(Error::IoAt {
                path: self.path.clone(),
                source: e,
            });
        }
        fs::rename(&self.tmp, &self.path).map_err(|e| {
            let _ = fs::remove_file(&self.tmp);
            Error::IoAt {
                path: self.path.clone(),
                source: e,
            }
        })?;
        Ok(SignalEntry {
            file: self.file_name,
            kind: self.kind.as_str().into(),
            rate_hz: self.rate_hz,
            t0_s: self.t0_s,
            channels: self.labels,
            samples: self.samples,
            sha256: hex(&self.hasher.finalize()),
        })
    }
}

/// Write a whole in-memory series as one signal file.
pub fn write_series(dir: &Path, file_name: &str, ts: &TimeSeries) -> Result<SignalEntry> {
    let mut w = BtsWriter::create(
        dir,
        file_name,
        ts.kind(),
        ts.rate_hz(),
        ts.t0_s(),
        ts.labels().to_vec(),
        ts.n_samples() as u64,
    )?;
    for ch in 0..ts.n_channels() {
        let row: Vec<f64> = ts.channel(ch).to_vec();
        w.write_channel(&row)?;
    }
    w.finish()
}

/// Random-access reader for one signal file.
#[derive(Debug)]
pub struct BtsReader {
    path: PathBuf,
    f: File,
    data_offset: u64,
    pub kind: SignalKind,
    pub rate_hz: f64,
    pub t0_s: f64,
    pub n_channels: usize,
    pub samples: u64,
}

impl BtsReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut f = File::open(path).map_err(io_at(path))?;
        let mut fixed = [0u8; 5];
        f.read_exact(&mut fixed).map_err(io_at(path))?;
        if &fixed[..4] != BTS_MAGIC {
            return Err(format_err(path, "bad magic"));
        }
        let tag_len = fixed[4] as usize;
        let mut tag = vec![0u8; tag_len];
        f.read_exact(&mut tag).map_err(io_at(path))?;
        let tag = String::from_utf8(tag).map_err(|_| format_err(path, "kind tag not UTF-8"))?;
        let kind = SignalKind::from_str_tag(&tag)
            .ok_or_else(|| format_err(path, format!("unknown kind {tag:?}")))?;
        let mut buf8 = [0u8; 8];
        let mut buf4 = [0u8; 4];
        f.read_exact(&mut buf4).map_err(io_at(path))?;
        let n_channels = u32::from_le_bytes(buf4) as usize;
        f.read_exact(&mut buf8).map_err(io_at(path))?;
        let samples = u64::from_le_bytes(buf8);
        f.read_exact(&mut buf8).map_err(io_at(path))?;
        let rate_hz = f64::from_le_bytes(buf8);
        f.read_exact(&mut buf8).map_err(io_at(path))?;
        let t0_s = f64::from_le_bytes(buf8);
        let data_offset = f.stream_position().map_err(io_at(path))?;
        let expect = data_offset + n_channels as u64 * samples * 4;
        let actual = f.metadata().map_err(io_at(path))?.len();
        if actual != expect {
            return Err(format_err(
                path,
                format!("file length {actual}, header implies {expect}"),
            ));
        }
        Ok(Self {
            path: path.to_path_buf(),
            f,
            data_offset,
            kind,
            rate_hz,
            t0_s,
            n_channels,
            samples,
        })
    }

    /// Open and check the entry: header consistency plus full checksum.
    pub fn open_verified(dir: &Path, entry: &SignalEntry) -> Result<Self> {
        let path = dir.join(&entry.file);
        let sum = file_sha256(&path)?;
        if sum != entry.sha256 {
            return Err(Error::ChecksumMismatch { path });
        }
        let r = Self::open(&path)?;
        if r.n_channels != entry.channels.len()
            || r.samples != entry.samples
            || (r.rate_hz - entry.rate_hz).abs() > 1e-9
        {
            return Err(format_err(&r.path, "header disagrees with manifest entry"));
        }
        Ok(r)
    }

    pub fn read_channel(&mut self, idx: usize) -> Result<Vec<f64>> {
        if idx >= self.n_channels {
            return Err(Error::ShapeMismatch {
                context: "BtsReader::read_channel",
                expected: format!("channel < {}", self.n_channels),
                got: format!("{idx}"),
            });
        }
        let off = self.data_offset + idx as u64 * self.samples * 4;
        self.f
            .seek(SeekFrom::Start(off))
            .map_err(io_at(&self.path))?;
        let mut bytes = vec![0u8; self.samples as usize * 4];
        let mut r = BufReader::new(&self.f);
        r.read_exact(&mut bytes).map_err(io_at(&self.path))?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }

    /// Materialize the whole signal with the manifest labels.
    pub fn read_all(&mut self, labels: &[String]) -> Result<TimeSeries> {
        let mut data = Array2::<f64>::zeros((self.n_channels, self.samples as usize));
        for ch in 0..self.n_channels {
            let row = self.read_channel(ch)?;
            data.row_mut(ch).assign(&ndarray::ArrayView1::from(&row));
        }
        TimeSeries::new(self.kind, data, self.rate_hz, self.t0_s, labels.to_vec())
    }
}

/// Load one signal of a dataset fully into memory, checksum-verified.
pub fn load_series(dir: &Path, manifest: &DatasetManifest, name: &str) -> Result<TimeSeries> {
    let entry = manifest.entry(name)?;
    let mut r = BtsReader::open_verified(dir, entry)?;
    r.read_all(&entry.channels)
}

/// Everything needed to re-evaluate a trained decoder later.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model_kind: String,
    pub modality: String,
    /// Hash of the effective run configuration.
    pub config_hash: String,
    /// Hash of the trial split (train/val/test indices).
    pub split_hash: String,
    /// SHA-256 of the source dataset's manifest file.
    pub dataset_fingerprint: String,
    pub seed: u64,
    pub lag_frames: usize,
    /// Names of the feature columns the model consumes, in model order.
    pub feature_names: Vec<String>,
    /// Group -> columns in model column space (for sensitivity analysis).
    pub group_index: BTreeMap<String, Vec<usize>>,
    /// Full effective run configuration as JSON, for standalone reuse.
    pub config_json: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    meta: CheckpointMeta,
    model: ModelHeader,
    tensors: Vec<TensorInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelHeader {
    Linear {
        lambda: f64,
        k: usize,
        n_features: usize,
        bias: [f64; 2],
        sparsity: f64,
        converged: bool,
        sweeps: usize,
        stats: Option<bimodec::features::Standardization>,
    },
    CnnAtt {
        arch: bimodec::decode::CnnAttArch,
        seed: u64,
        best_epoch: usize,
        stopped_early: bool,
        diverged: bool,
        log: Vec<bimodec::decode::EpochStat>,
        stats: Option<bimodec::features::Standardization>,
    },
}

/// Serialize a trained decoder with its metadata. Layout: magic, JSON
/// header, raw little-endian f64 tensors in header order, SHA-256 trailer.
pub fn save_checkpoint(
    path: &Path,
    model: &bimodec::decode::DecoderModel,
    meta: &CheckpointMeta,
) -> Result<()> {
    use bimodec::decode::DecoderModel;
    let (model_header, tensors): (ModelHeader, Vec<(&str, &Array2<f64>)>) = match model {
        DecoderModel::Linear(m) => (
            ModelHeader::Linear {
                lambda: m.lambda,
                k: m.k,
                n_features: m.n_features,
                bias: m.bias,
                sparsity: m.sparsity,
                converged: m.converged,
                sweeps: m.sweeps,
                stats: m.stats.clone(),
            },
            vec![("weights", &m.weights)],
        ),
        DecoderModel::CnnAtt(m) => (
            ModelHeader::CnnAtt {
                arch: m.arch.clone(),
                seed: m.seed,
                best_epoch: m.best_epoch,
                stopped_early: m.stopped_early,
                diverged: m.diverged,
                log: m.log.clone(),
                stats: m.stats.clone(),
            },
            m.arch
                .param_shapes()
                .iter()
                .map(|(name, _)| *name)
                .zip(m.params.iter())
                .map(|(n, t)| (n, t))
                .collect(),
        ),
    };
    let header = CheckpointHeader {
        meta: meta.clone(),
        model: model_header,
        tensors: tensors
            .iter()
            .map(|(n, t)| TensorInfo {
                name: (*n).into(),
                rows: t.nrows(),
                cols: t.ncols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| format_err(path, format!("serialize: {e}")))?;
    let mut bytes = Vec::new();
    bytes.extend_from_slice(BMD_MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for (_, t) in &tensors {
        for &v in t.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    write_atomic(path, &bytes)
}

/// Load a checkpoint, verifying the trailer hash and tensor shapes.
pub fn load_checkpoint(path: &Path) -> Result<(bimodec::decode::DecoderModel, CheckpointMeta)> {
    use bimodec::decode::{CnnAttModel, DecoderModel, LinearModel};
    let bytes = fs::read(path).map_err(io_at(path))?;
    if bytes.len() < 4 + 8 + 32 || &bytes[..4] != BMD_MAGIC {
        return Err(format_err(path, "bad magic or truncated file"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(Error::ChecksumMismatch {
            path: path.to_path_buf(),
        });
    }
    let json_len = u64::from_le_bytes(body[4..12].try_into().unwrap()) as usize;
    if body.len() < 12 + json_len {
        return Err(format_err(path, "truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&body[12..12 + json_len])
        .map_err(|e| format_err(path, format!("parse header: {e}")))?;
    let mut off = 12 + json_len;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for info in &header.tensors {
        let n = info.rows * info.cols;
        let end = off + n * 8;
        if body.len() < end {
            return Err(format_err(path, format!("tensor {:?} truncated", info.name)));
        }
        let vals: Vec<f64> = body[off..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Array2::from_shape_vec((info.rows, info.cols), vals)
            .map_err(|e| format_err(path, format!("tensor {:?}: {e}", info.name)))?;
        tensors.push(t);
        off = end;
    }
    if off != body.len() {
        return Err(format_err(path, "trailing bytes after tensors"));
    }
    let model = match header.model {
        ModelHeader::Linear {
            lambda,
            k,
            n_features,
            bias,
            sparsity,
            converged,
            sweeps,
            stats,
        } => {
            let weights = tensors
                .pop()
                .ok_or_else(|| format_err(path, "missing weight tensor"))?;
            if weights.ncols() != k * n_features || weights.nrows() != 2 {
                return Err(format_err(path, "weight tensor shape mismatch"));
            }
            DecoderModel::Linear(LinearModel {
                weights,
                bias,
                lambda,
                k,
                n_features,
                sparsity,
                converged,
                sweeps,
                stats,
            })
        }
        ModelHeader::CnnAtt {
            arch,
            seed,
            best_epoch,
            stopped_early,
            diverged,
            log,
            stats,
        } => {
            let shapes = arch.param_shapes();
            if tensors.len() != shapes.len() {
                return Err(format_err(path, "parameter tensor count mismatch"));
            }
            for ((_, (r, c)), t) in shapes.iter().zip(&tensors) {
                if t.nrows() != *r || t.ncols() != *c {
                    return Err(format_err(path, "parameter tensor shape mismatch"));
                }
            }
            DecoderModel::CnnAtt(CnnAttModel {
                arch,
                params: tensors,
                stats,
                log,
                best_epoch,
                stopped_early,
                diverged,
                adam: None,
                seed,
            })
        }
    };
    Ok((model, header.meta))
}
