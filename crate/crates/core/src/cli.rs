//! The `dadh` command line: `synth`, `train`, `encode`, `eval` and `search`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error,
//! 3 data error, 4 numeric failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{split_dataset, FeatureDataset, LabelSet};
use crate::error::{Error, Result};
use crate::io::{self, InputDigests, RunManifest, RunMode, SplitSizes};
use crate::objective::Variant;
use crate::params::HyperParams;
use crate::retrieval::{evaluate, pr_curve, encode_batch, EvalInput, HammingIndex, StreamChoice};
use crate::synth::{gaussian_clusters, SynthSpec};
use crate::trainer::{TrainOptions, Trainer};

pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Config(_) | Error::Json(_) | Error::Domain(_) => EXIT_CONFIG,
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::Shape(_)
        | Error::IdOutOfRange { .. }
        | Error::Index { .. }
        | Error::Size(_)
        | Error::State(_)
        | Error::Data(_)
        | Error::Format(_) => EXIT_DATA,
    }
}

/// Training run description. Relative paths resolve against the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub features: PathBuf,
    pub labels: PathBuf,
    /// Explicit split; when absent one is drawn from `n_query`, `n_train` and `split_seed`.
    #[serde(default)]
    pub split: Option<PathBuf>,
    #[serde(default = "default_n_query")]
    pub n_query: usize,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub hyperparams: HyperParams,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub track_b_objective: bool,
}

fn default_n_query() -> usize {
    100
}

fn default_n_train() -> usize {
    500
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("run")
}

fn default_hidden() -> Vec<usize> {
    vec![512]
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.features, &mut cfg.labels, &mut cfg.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = cfg.split.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(name = "dadh", version, about = "Two-stream supervised hashing: train, encode, search, evaluate")]
pub struct Cli {
    /// Worker threads for evaluation (1 keeps runs bit-exact by construction).
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a Gaussian-cluster dataset (features.bin and labels.txt).
    Synth(SynthArgs),
    /// Train both streams and the shared codes.
    Train(TrainArgs),
    /// Encode features with a trained checkpoint.
    Encode(EncodeArgs),
    /// Score query codes against database codes.
    Eval(EvalArgs),
    /// Nearest database entries for query codes, as JSON lines.
    Search(SearchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 60)]
    pub per_class: usize,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.15)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Drop the code/feature inner-product terms.
    #[arg(long)]
    pub ablate: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub outer_iters: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// fused, f or g.
    #[arg(long, default_value = "fused")]
    pub stream: StreamChoice,
    /// Expected code length; checked against the checkpoint.
    #[arg(long)]
    pub k: Option<usize>,
    /// Encode only the rows of one split subset, in split order.
    #[arg(long, requires = "subset")]
    pub split: Option<PathBuf>,
    #[arg(long, value_parser = ["train", "retrieval", "query"], requires = "split")]
    pub subset: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub db: PathBuf,
    /// Labels by sample id (with `--split`) or by database row.
    #[arg(long)]
    pub labels: PathBuf,
    /// Query labels by row; defaults to `--labels`.
    #[arg(long, conflicts_with = "split")]
    pub query_labels: Option<PathBuf>,
    /// Map code rows to sample ids through the split's query and retrieval lists.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub topk: usize,
    /// Write the precision-recall curve as CSV.
    #[arg(long)]
    pub pr: Option<PathBuf>,
    /// Write the metrics JSON here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// Search a single query row.
    #[arg(long)]
    pub query_row: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub topk: usize,
    /// Report database rows as the split's retrieval ids.
    #[arg(long)]
    pub split: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_from<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match run(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Encode(a) => cmd_encode(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Search(a) => cmd_search(a, out),
    })
}

pub fn cmd_synth(a: &SynthArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let ds = gaussian_clusters(&SynthSpec {
        classes: a.classes,
        per_class: a.per_class,
        dim: a.dim,
        sigma: a.sigma,
        seed: a.seed,
    })?;
    std::fs::create_dir_all(&a.out)?;
    io::save_features(&a.out.join("features.bin"), ds.features())?;
    io::save_labels(&a.out.join("labels.txt"), ds.labels())?;
    writeln!(out, "wrote {} samples of dimension {} to {}", ds.len(), ds.dim(), a.out.display())?;
    Ok(())
}

fn load_dataset(features: &Path, labels: &Path) -> Result<(FeatureDataset, InputDigests)> {
    let x = io::load_features(features)?;
    let l = io::load_labels(labels)?;
    if l.len() != x.nrows() {
        return Err(Error::Data(format!("{} label lines for {} feature rows", l.len(), x.nrows())));
    }
    let digests = InputDigests {
        features_sha256: io::sha256_file(features)?,
        labels_sha256: io::sha256_file(labels)?,
        n: x.nrows(),
        d: x.ncols(),
    };
    Ok((FeatureDataset::new(x, l)?, digests))
}

pub fn cmd_train(a: &TrainArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    let hp = &mut cfg.hyperparams;
    if let Some(v) = a.seed {
        hp.seed = v;
    }
    if let Some(v) = a.k {
        hp.k = v;
    }
    if let Some(v) = a.outer_iters {
        hp.outer_iters = v;
    }
    if let Some(v) = a.tau {
        hp.tau = v;
    }
    if let Some(v) = a.gamma {
        hp.gamma = v;
    }
    if let Some(v) = a.eta {
        hp.eta = v;
    }
    if let Some(d) = &a.out_dir {
        cfg.out_dir = d.clone();
    }
    cfg.hyperparams.validate()?;

    let (ds, inputs) = load_dataset(&cfg.features, &cfg.labels)?;
    let split = match &cfg.split {
        Some(p) => {
            let s = io::load_split(p)?;
            s.validate(ds.len())?;
            s
        }
        None => split_dataset(&ds, cfg.n_query, cfg.n_train, cfg.split_seed)?,
    };
    let opts = TrainOptions {
        hidden: cfg.hidden.clone(),
        variant: if a.ablate { Variant::Ablated } else { Variant::Full },
        track_b_objective: cfg.track_b_objective,
    };
    std::fs::create_dir_all(&cfg.out_dir)?;
    io::save_split(&cfg.out_dir.join("split.json"), &split)?;

    let mut trainer = Trainer::new(&ds, &split, &cfg.hyperparams, &opts)?;
    let mut manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        mode: if a.ablate { RunMode::Ablated } else { RunMode::Full },
        hyperparams: cfg.hyperparams.clone(),
        options: opts,
        seeds: trainer.seeds(),
        inputs,
        split: SplitSizes::from(&split),
        status: "running".into(),
        converged: false,
        iterations: 0,
        history: Vec::new(),
        checkpoint_sha256: None,
        codes_sha256: None,
    };
    let manifest_path = cfg.out_dir.join("manifest.json");
    while !trainer.is_done() {
        if let Err(e) = trainer.step() {
            manifest.status = format!("error: {e}");
            manifest.history = trainer.state().history.clone();
            manifest.iterations = trainer.state().iter;
            io::save_json(&manifest_path, &manifest)?;
            return Err(e);
        }
    }
    let state = trainer.into_state();
    let ckpt = cfg.out_dir.join("model.ckpt");
    let codes = cfg.out_dir.join("codes.bin");
    io::save_checkpoint(&ckpt, &state.encoder_f, &state.encoder_g)?;
    io::save_codes(&codes, &state.codes)?;
    manifest.status = "ok".into();
    manifest.converged = state.converged;
    manifest.iterations = state.iter;
    manifest.history = state.history;
    manifest.checkpoint_sha256 = Some(io::sha256_file(&ckpt)?);
    manifest.codes_sha256 = Some(io::sha256_file(&codes)?);
    io::save_json(&manifest_path, &manifest)?;
    let last = manifest.history.last().map(|r| r.loss.total).unwrap_or(f64::NAN);
    writeln!(
        out,
        "trained {} iterations ({}), final loss {last:.6e}, outputs in {}",
        manifest.iterations,
        if manifest.converged { "converged" } else { "budget spent" },
        cfg.out_dir.display()
    )?;
    Ok(())
}

pub fn cmd_encode(a: &EncodeArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let (f, g) = io::load_checkpoint(&a.checkpoint)?;
    if let Some(k) = a.k {
        if k != f.output_dim() {
            return Err(Error::Shape(format!("checkpoint produces {} bits, expected {k}", f.output_dim())));
        }
    }
    let mut x = io::load_features(&a.features)?;
    if let (Some(p), Some(subset)) = (&a.split, &a.subset) {
        let split = io::load_split(p)?;
        split.validate(x.nrows())?;
        let ids = match subset.as_str() {
            "train" => &split.train,
            "retrieval" => &split.retrieval,
            _ => &split.query,
        };
        x = x.select(ndarray::Axis(0), ids);
    }
    let codes = encode_batch(x.view(), &f, &g, a.stream)?;
    io::save_codes(&a.out, &codes)?;
    writeln!(out, "encoded {} rows into {}-bit codes at {}", codes.n(), codes.k(), a.out.display())?;
    Ok(())
}

fn labels_for(all: &[LabelSet], ids: &[usize], what: &str) -> Result<Vec<LabelSet>> {
    ids.iter()
        .map(|&i| {
            all.get(i)
                .cloned()
                .ok_or_else(|| Error::Data(format!("{what} id {i} has no label line ({} lines)", all.len())))
        })
        .collect()
}

fn first_rows(all: &[LabelSet], n: usize, what: &str) -> Result<Vec<LabelSet>> {
    if all.len() < n {
        return Err(Error::Data(format!("{} label lines for {n} {what} codes", all.len())));
    }
    Ok(all[..n].to_vec())
}

pub fn cmd_eval(a: &EvalArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let queries = io::load_codes(&a.queries)?;
    let db = io::load_codes(&a.db)?;
    if queries.n() == 0 {
        return Err(Error::Data("query file holds no codes".into()));
    }
    let labels = io::load_labels(&a.labels)?;
    let (index, query_labels, db_labels) = match &a.split {
        Some(p) => {
            let split = io::load_split(p)?;
            if split.query.len() != queries.n() || split.retrieval.len() != db.n() {
                return Err(Error::Data(format!(
                    "split lists {} queries and {} retrieval ids for {} and {} codes",
                    split.query.len(),
                    split.retrieval.len(),
                    queries.n(),
                    db.n()
                )));
            }
            let ql = labels_for(&labels, &split.query, "query")?;
            let dl = labels_for(&labels, &split.retrieval, "retrieval")?;
            (HammingIndex::with_ids(db, split.retrieval.clone())?, ql, dl)
        }
        None => {
            let dl = first_rows(&labels, db.n(), "database")?;
            let ql = match &a.query_labels {
                Some(p) => first_rows(&io::load_labels(p)?, queries.n(), "query")?,
                None => first_rows(&labels, queries.n(), "query")?,
            };
            (HammingIndex::new(db), ql, dl)
        }
    };
    let input = EvalInput::new(&queries, &query_labels, &index, &db_labels)?;
    let metrics = evaluate(&input, a.topk)?;
    if let Some(p) = &a.pr {
        io::save_pr_curve(p, &pr_curve(&input)?)?;
    }
    if let Some(p) = &a.out {
        io::save_metrics(p, &metrics)?;
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&metrics)?)?;
    Ok(())
}

#[derive(Serialize)]
struct SearchLine {
    query: usize,
    hits: Vec<SearchHit>,
}

#[derive(Serialize)]
struct SearchHit {
    id: usize,
    distance: u32,
}

pub fn cmd_search(a: &SearchArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let db = io::load_codes(&a.db)?;
    let queries = io::load_codes(&a.queries)?;
    let index = match &a.split {
        Some(p) => HammingIndex::with_ids(db, io::load_split(p)?.retrieval)?,
        None => HammingIndex::new(db),
    };
    if !index.is_empty() && queries.k() != index.k() {
        return Err(Error::Shape(format!("query codes have {} bits, database {}", queries.k(), index.k())));
    }
    let rows: Vec<usize> = match a.query_row {
        Some(r) if r >= queries.n() => return Err(Error::Index { index: r, len: queries.n() }),
        Some(r) => vec![r],
        None => (0..queries.n()).collect(),
    };
    for q in rows {
        let res = index.search(queries.row_words(q), a.topk)?;
        let line = SearchLine {
            query: q,
            hits: res.hits.iter().map(|h| SearchHit { id: h.id, distance: h.distance }).collect(),
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    Ok(())
}
