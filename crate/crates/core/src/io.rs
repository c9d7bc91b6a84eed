//! On-disk formats.
//!
//! All binary files are little-endian.
//!
//! | file        | layout |
//! |-------------|--------|
//! | features    | `"DADH"`, u32 version = 1, u32 n, u32 d, `n·d` f32 row-major |
//! | checkpoint  | `"DADHMODL"`, u32 version = 1, u32 streams = 2, then per stream: u32 dim count, u32 dims, each layer's f64 weights (row-major `out × in`) then f64 biases |
//! | codes       | `"DADHCODE"`, u32 version = 1, u32 n, u32 k, `n · ceil(k/64)` u64 words |
//!
//! Labels are text, one line of space-separated integers per sample. Splits,
//! metrics and run manifests are JSON; precision–recall curves are CSV.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codes::{words_for, CodeMatrix};
use crate::data::{LabelSet, Split};
use crate::encoder::{Layer, MlpEncoder};
use crate::error::{Error, Result};
use crate::params::HyperParams;
use crate::retrieval::{Metrics, PrCurve};
use crate::trainer::{IterationRecord, RunSeeds, TrainOptions};

pub const FEATURES_MAGIC: &[u8; 4] = b"DADH";
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DADHMODL";
pub const CODES_MAGIC: &[u8; 8] = b"DADHCODE";
pub const FORMAT_VERSION: u32 = 1;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8], what: &str) -> Result<()> {
    let mut got = vec![0u8; magic.len()];
    read_exact_or(r, &mut got, what)?;
    if got != magic {
        return Err(format_err(format!("not a {what}: bad magic {:?}", String::from_utf8_lossy(&got))));
    }
    let version = read_u32(r, what)?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported {what} version {version}")));
    }
    Ok(())
}

fn expect_end<R: Read>(r: &mut R, what: &str) -> Result<()> {
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(()),
        _ => Err(format_err(format!("trailing bytes after {what}"))),
    }
}

fn to_u32(x: usize, what: &str) -> Result<u32> {
    u32::try_from(x).map_err(|_| format_err(format!("{what} = {x} does not fit in u32")))
}

fn read_f64s<R: Read>(r: &mut R, count: usize, what: &str) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    read_exact_or(r, &mut buf, what)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

// ----- features -----

/// Values are stored as f32.
pub fn write_features<W: Write>(w: &mut W, x: &Array2<f64>) -> Result<()> {
    w.write_all(FEATURES_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&to_u32(x.nrows(), "n")?.to_le_bytes())?;
    w.write_all(&to_u32(x.ncols(), "d")?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(x.len() * 4);
    for &v in x.iter() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_features<R: Read>(r: &mut R) -> Result<Array2<f64>> {
    expect_magic(r, FEATURES_MAGIC, "feature file")?;
    let n = read_u32(r, "feature file")? as usize;
    let d = read_u32(r, "feature file")? as usize;
    let mut buf = vec![0u8; n * d * 4];
    read_exact_or(r, &mut buf, "feature file")?;
    expect_end(r, "feature data")?;
    let values: Vec<f64> = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if let Some(p) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite feature at row {}, column {}", p / d, p % d)));
    }
    Ok(Array2::from_shape_vec((n, d), values).expect("length checked"))
}

pub fn save_features(path: &Path, x: &Array2<f64>) -> Result<()> {
    let mut w = create(path)?;
    write_features(&mut w, x)?;
    w.flush()?;
    Ok(())
}

pub fn load_features(path: &Path) -> Result<Array2<f64>> {
    read_features(&mut open(path)?)
}

// ----- labels -----

pub fn format_labels(labels: &[LabelSet]) -> String {
    let mut out = String::new();
    for set in labels {
        let line: Vec<String> = set.iter().map(u32::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_labels(text: &str) -> Result<Vec<LabelSet>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|tok| {
                    tok.parse::<u32>()
                        .map_err(|_| Error::Data(format!("line {}: bad label {tok:?}", i + 1)))
                })
                .collect()
        })
        .collect()
}

pub fn save_labels(path: &Path, labels: &[LabelSet]) -> Result<()> {
    std::fs::write(path, format_labels(labels))?;
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<Vec<LabelSet>> {
    parse_labels(&std::fs::read_to_string(path)?)
}

// ----- JSON -----

/// Pretty JSON with a trailing newline.
pub fn save_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_split(path: &Path, split: &Split) -> Result<()> {
    save_json(path, split)
}

pub fn load_split(path: &Path) -> Result<Split> {
    load_json(path).map_err(|e| match e {
        Error::Json(j) => Error::Data(format!("split file {}: {j}", path.display())),
        other => other,
    })
}

pub fn save_metrics(path: &Path, m: &Metrics) -> Result<()> {
    save_json(path, m)
}

pub fn save_pr_curve(path: &Path, curve: &PrCurve) -> Result<()> {
    std::fs::write(path, curve.to_csv())?;
    Ok(())
}

// ----- checkpoints -----

pub fn write_checkpoint<W: Write>(w: &mut W, f: &MlpEncoder, g: &MlpEncoder) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&2u32.to_le_bytes())?;
    for enc in [f, g] {
        w.write_all(&to_u32(enc.dims().len(), "dim count")?.to_le_bytes())?;
        for &d in enc.dims() {
            w.write_all(&to_u32(d, "layer width")?.to_le_bytes())?;
        }
        let mut buf = Vec::new();
        for layer in enc.layers() {
            for &x in layer.weight.iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            for &x in layer.bias.iter() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(MlpEncoder, MlpEncoder)> {
    expect_magic(r, CHECKPOINT_MAGIC, "checkpoint")?;
    let streams = read_u32(r, "checkpoint")?;
    if streams != 2 {
        return Err(format_err(format!("checkpoint holds {streams} streams, expected 2")));
    }
    let mut encoders = Vec::with_capacity(2);
    for _ in 0..2 {
        let count = read_u32(r, "checkpoint")? as usize;
        if count < 2 {
            return Err(format_err(format!("stream with {count} layer widths")));
        }
        let dims = (0..count)
            .map(|_| read_u32(r, "checkpoint").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if dims.contains(&0) {
            return Err(format_err("zero layer width in checkpoint"));
        }
        let mut layers = Vec::with_capacity(count - 1);
        for pair in dims.windows(2) {
            let (inp, out) = (pair[0], pair[1]);
            let weight = Array2::from_shape_vec((out, inp), read_f64s(r, out * inp, "checkpoint")?).expect("sized");
            let bias = Array1::from(read_f64s(r, out, "checkpoint")?);
            layers.push(Layer { weight, bias });
        }
        encoders.push(MlpEncoder::from_layers(layers)?);
    }
    expect_end(r, "checkpoint")?;
    let g = encoders.pop().unwrap();
    let f = encoders.pop().unwrap();
    Ok((f, g))
}

pub fn save_checkpoint(path: &Path, f: &MlpEncoder, g: &MlpEncoder) -> Result<()> {
    let mut w = create(path)?;
    write_checkpoint(&mut w, f, g)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpEncoder, MlpEncoder)> {
    read_checkpoint(&mut open(path)?)
}

// ----- codes -----

pub fn write_codes<W: Write>(w: &mut W, codes: &CodeMatrix) -> Result<()> {
    w.write_all(CODES_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&to_u32(codes.n(), "n")?.to_le_bytes())?;
    w.write_all(&to_u32(codes.k(), "k")?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(codes.words().len() * 8);
    for &word in codes.words() {
        buf.extend_from_slice(&word.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_codes<R: Read>(r: &mut R) -> Result<CodeMatrix> {
    expect_magic(r, CODES_MAGIC, "code file")?;
    let n = read_u32(r, "code file")? as usize;
    let k = read_u32(r, "code file")? as usize;
    if k == 0 {
        return Err(format_err("code file with k = 0"));
    }
    let mut buf = vec![0u8; n * words_for(k) * 8];
    read_exact_or(r, &mut buf, "code file")?;
    expect_end(r, "code file")?;
    let words = buf.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
    CodeMatrix::from_words(n, k, words)
}

pub fn save_codes(path: &Path, codes: &CodeMatrix) -> Result<()> {
    let mut w = create(path)?;
    write_codes(&mut w, codes)?;
    w.flush()?;
    Ok(())
}

pub fn load_codes(path: &Path) -> Result<CodeMatrix> {
    read_codes(&mut open(path)?)
}

// ----- digests and manifests -----

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut r = open(path)?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let got = r.read(&mut buf)?;
        if got == 0 {
            break;
        }
        hasher.update(&buf[..got]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Digests of the inputs a run read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigests {
    pub features_sha256: String,
    pub labels_sha256: String,
    pub n: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Full,
    Ablated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub retrieval: usize,
    pub query: usize,
}

impl From<&Split> for SplitSizes {
    fn from(s: &Split) -> Self {
        Self {
            train: s.train.len(),
            retrieval: s.retrieval.len(),
            query: s.query.len(),
        }
    }
}

/// Everything needed to rerun and audit a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub mode: RunMode,
    pub hyperparams: HyperParams,
    pub options: TrainOptions,
    pub seeds: RunSeeds,
    pub inputs: InputDigests,
    pub split: SplitSizes,
    /// `"ok"`, or the error that stopped the run.
    pub status: String,
    pub converged: bool,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub checkpoint_sha256: Option<String>,
    pub codes_sha256: Option<String>,
}
