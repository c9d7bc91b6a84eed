//! The Gaussian-cluster retrieval benchmark: train on a split, encode query and
//! retrieval sets, and score them against the LSH baseline.

use crate::codes::CodeMatrix;
use crate::data::{split_dataset, FeatureDataset, Split};
use crate::error::Result;
use crate::lsh::LshModel;
use crate::params::HyperParams;
use crate::retrieval::{encode_batch, mean_ap, EvalInput, HammingIndex, StreamChoice};
use crate::synth::{gaussian_clusters, SynthSpec};
use crate::trainer::TrainState;

/// Synthetic data plus the split sizes used to evaluate on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkSpec {
    pub data: SynthSpec,
    pub n_query: usize,
    pub n_train: usize,
    pub split_seed: u64,
}

impl Default for BenchmarkSpec {
    /// 10 classes × 60 samples in 128 dimensions, σ = 0.15; 100 queries,
    /// 500 retrieval samples, all of them used for training.
    fn default() -> Self {
        Self {
            data: SynthSpec {
                classes: 10,
                per_class: 60,
                dim: 128,
                sigma: 0.15,
                seed: 1,
            },
            n_query: 100,
            n_train: 500,
            split_seed: 7,
        }
    }
}

impl BenchmarkSpec {
    pub fn build(&self) -> Result<(FeatureDataset, Split)> {
        let ds = gaussian_clusters(&self.data)?;
        let split = split_dataset(&ds, self.n_query, self.n_train, self.split_seed)?;
        Ok((ds, split))
    }
}

/// Encoded query and retrieval sets with their labels.
pub struct EncodedSplit {
    pub queries: CodeMatrix,
    pub query_labels: Vec<Vec<u32>>,
    pub index: HammingIndex,
    pub db_labels: Vec<Vec<u32>>,
}

impl EncodedSplit {
    pub fn input(&self) -> Result<EvalInput<'_>> {
        EvalInput::new(&self.queries, &self.query_labels, &self.index, &self.db_labels)
    }

    /// Full-ranking MAP.
    pub fn map(&self) -> Result<f64> {
        mean_ap(&self.input()?, None)
    }
}

fn assemble(ds: &FeatureDataset, split: &Split, queries: CodeMatrix, db: CodeMatrix) -> Result<EncodedSplit> {
    Ok(EncodedSplit {
        queries,
        query_labels: ds.select_labels(&split.query)?,
        index: HammingIndex::with_ids(db, split.retrieval.clone())?,
        db_labels: ds.select_labels(&split.retrieval)?,
    })
}

/// Queries and retrieval set encoded by the trained streams.
pub fn encode_split(ds: &FeatureDataset, split: &Split, state: &TrainState, stream: StreamChoice) -> Result<EncodedSplit> {
    let q = encode_batch(ds.select(&split.query)?.view(), &state.encoder_f, &state.encoder_g, stream)?;
    let db = encode_batch(ds.select(&split.retrieval)?.view(), &state.encoder_f, &state.encoder_g, stream)?;
    assemble(ds, split, q, db)
}

/// Queries and retrieval set under random hyperplanes centred on the training mean.
pub fn encode_split_lsh(ds: &FeatureDataset, split: &Split, hp: &HyperParams) -> Result<EncodedSplit> {
    let model = LshModel::fit(ds.dim(), hp.k, hp.seed)?.centered_on(ds.select(&split.train)?.view())?;
    let q = model.encode_batch(ds.select(&split.query)?.view())?;
    let db = model.encode_batch(ds.select(&split.retrieval)?.view())?;
    assemble(ds, split, q, db)
}
