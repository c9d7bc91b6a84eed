//! Datasets, label-derived similarity and train/retrieval/query splits.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Sorted, deduplicated label ids of one sample.
pub type LabelSet = Vec<u32>;

/// `n` real feature vectors of dimension `d`, each carrying at least one label.
///
/// Sample ids are the row indices `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    features: Array2<f64>,
    labels: Vec<LabelSet>,
}

impl FeatureDataset {
    pub fn new(features: Array2<f64>, labels: Vec<Vec<u32>>) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 {
            return Err(Error::Data("dataset must contain at least one sample".into()));
        }
        if d == 0 {
            return Err(Error::Data("feature dimension must be at least 1".into()));
        }
        if labels.len() != n {
            return Err(shape_err(format!(
                "{} label sets for {} feature rows",
                labels.len(),
                n
            )));
        }
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(i, mut set)| {
                if set.is_empty() {
                    return Err(Error::Data(format!("sample {i} has no labels")));
                }
                set.sort_unstable();
                set.dedup();
                Ok(set)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[LabelSet] {
        &self.labels
    }

    pub fn row(&self, id: usize) -> Result<ArrayView1<'_, f64>> {
        self.check_id(id)?;
        Ok(self.features.row(id))
    }

    pub fn label_set(&self, id: usize) -> Result<&LabelSet> {
        self.check_id(id)?;
        Ok(&self.labels[id])
    }

    /// Feature rows for `ids`, in the given order.
    pub fn select(&self, ids: &[usize]) -> Result<Array2<f64>> {
        for &id in ids {
            self.check_id(id)?;
        }
        Ok(self.features.select(Axis(0), ids))
    }

    /// Label sets for `ids`, in the given order.
    pub fn select_labels(&self, ids: &[usize]) -> Result<Vec<LabelSet>> {
        ids.iter()
            .map(|&id| self.label_set(id).cloned())
            .collect()
    }

    /// `+1` when the two samples share a label, `-1` otherwise.
    pub fn similarity(&self, a: usize, b: usize) -> Result<f64> {
        self.check_id(a)?;
        self.check_id(b)?;
        Ok(sign_of(share_label(&self.labels[a], &self.labels[b])))
    }

    fn check_id(&self, id: usize) -> Result<()> {
        if id >= self.len() {
            return Err(Error::IdOutOfRange { id, n: self.len() });
        }
        Ok(())
    }
}

/// Merge-intersection test on two sorted label sets.
pub fn share_label(a: &[u32], b: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

#[inline]
fn sign_of(similar: bool) -> f64 {
    if similar {
        1.0
    } else {
        -1.0
    }
}

/// Pairwise similarity `S ∈ {-1,+1}^{n×n}` over a fixed list of samples,
/// evaluated on demand from their label sets.
///
/// Indices are positions in the list handed to the constructor, not dataset ids.
#[derive(Debug, Clone)]
pub struct SimilarityOracle {
    labels: Vec<LabelSet>,
}

impl SimilarityOracle {
    pub fn new(labels: Vec<LabelSet>) -> Result<Self> {
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(i, mut set)| {
                if set.is_empty() {
                    return Err(Error::Data(format!("sample {i} has no labels")));
                }
                set.sort_unstable();
                set.dedup();
                Ok(set)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { labels })
    }

    /// Oracle over the dataset samples `ids`; position `p` refers to `ids[p]`.
    pub fn for_ids(ds: &FeatureDataset, ids: &[usize]) -> Result<Self> {
        Self::new(ds.select_labels(ids)?)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Checked `S_ab` in `{-1,+1}`.
    pub fn sign(&self, a: usize, b: usize) -> Result<f64> {
        let n = self.len();
        if a >= n {
            return Err(Error::IdOutOfRange { id: a, n });
        }
        if b >= n {
            return Err(Error::IdOutOfRange { id: b, n });
        }
        Ok(self.get(a, b))
    }

    #[inline]
    pub(crate) fn get(&self, a: usize, b: usize) -> f64 {
        sign_of(a == b || share_label(&self.labels[a], &self.labels[b]))
    }

    /// Dense rows `S[rows, :]` (all columns).
    pub fn block(&self, rows: &[usize]) -> Array2<f64> {
        let n = self.len();
        let mut out = Array2::zeros((rows.len(), n));
        for (r, &i) in rows.iter().enumerate() {
            let mut row = out.row_mut(r);
            for j in 0..n {
                row[j] = self.get(i, j);
            }
        }
        out
    }

    /// The full `n×n` matrix. Only for small `n`.
    pub fn dense(&self) -> Array2<f64> {
        let rows: Vec<usize> = (0..self.len()).collect();
        self.block(&rows)
    }
}

/// Disjoint query / retrieval sample ids, with the training ids drawn
/// from the retrieval set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub train: Vec<usize>,
    pub retrieval: Vec<usize>,
    pub query: Vec<usize>,
}

impl Split {
    /// Checks ids against a dataset of `n` samples: all in range, no duplicates
    /// within a list, query disjoint from retrieval and train.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut sets = Vec::with_capacity(3);
        for (name, ids) in [
            ("train", &self.train),
            ("retrieval", &self.retrieval),
            ("query", &self.query),
        ] {
            let mut seen = HashSet::with_capacity(ids.len());
            for &id in ids {
                if id >= n {
                    return Err(Error::IdOutOfRange { id, n });
                }
                if !seen.insert(id) {
                    return Err(Error::Data(format!("duplicate id {id} in {name} set")));
                }
            }
            sets.push(seen);
        }
        if let Some(id) = sets[2].iter().find(|id| sets[1].contains(id) || sets[0].contains(id)) {
            return Err(Error::Data(format!(
                "query id {id} also appears in the train or retrieval set"
            )));
        }
        Ok(())
    }
}

/// Random query / retrieval partition with `n_train` training ids taken from
/// the retrieval side. Each list is returned in ascending order.
pub fn split_dataset(
    ds: &FeatureDataset,
    n_query: usize,
    n_train: usize,
    seed: u64,
) -> Result<Split> {
    let n = ds.len();
    if n_query + 1 > n {
        return Err(Error::Size(format!(
            "{n_query} queries leave no retrieval samples out of {n}"
        )));
    }
    if n_train > n - n_query {
        return Err(Error::Size(format!(
            "{n_train} training samples exceed the {} retrieval samples",
            n - n_query
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);

    let mut query = perm[..n_query].to_vec();
    let mut rest = perm[n_query..].to_vec();
    rest.shuffle(&mut rng);
    let mut train = rest[..n_train].to_vec();
    query.sort_unstable();
    train.sort_unstable();
    rest.sort_unstable();
    Ok(Split {
        train,
        retrieval: rest,
        query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn ds_with_labels(labels: Vec<Vec<u32>>) -> FeatureDataset {
        let n = labels.len();
        FeatureDataset::new(Array2::zeros((n, 2)), labels).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let ds = ds_with_labels(vec![vec![1, 3], vec![3, 5], vec![2], vec![2], vec![0], vec![7]]);
        assert_eq!(ds.similarity(0, 1).unwrap(), 1.0);
        assert_eq!(ds.similarity(2, 3).unwrap(), 1.0);
        assert_eq!(ds.similarity(4, 5).unwrap(), -1.0);
        assert_eq!(ds.similarity(5, 5).unwrap(), 1.0);
        assert!(matches!(
            ds.similarity(0, 6),
            Err(Error::IdOutOfRange { id: 6, n: 6 })
        ));
    }

    #[test]
    fn oracle_is_symmetric_with_unit_diagonal() {
        let labels = vec![vec![1, 3], vec![3, 5], vec![2], vec![0, 2], vec![7]];
        let s = SimilarityOracle::new(labels).unwrap().dense();
        for i in 0..5 {
            assert_eq!(s[[i, i]], 1.0);
            for j in 0..5 {
                assert_eq!(s[[i, j]], s[[j, i]]);
                assert!(s[[i, j]] == 1.0 || s[[i, j]] == -1.0);
            }
        }
        assert_eq!(s[[2, 3]], 1.0);
        assert_eq!(s[[0, 4]], -1.0);
    }

    #[test]
    fn dataset_rejects_unlabeled_samples() {
        let err = FeatureDataset::new(Array2::zeros((2, 3)), vec![vec![1], vec![]]);
        assert!(matches!(err, Err(Error::Data(_))));
        let err = FeatureDataset::new(Array2::zeros((0, 3)), vec![]);
        assert!(matches!(err, Err(Error::Data(_))));
        let err = FeatureDataset::new(Array2::zeros((2, 0)), vec![vec![1], vec![1]]);
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn split_cardinalities() {
        let ds = ds_with_labels((0..100).map(|i| vec![i % 10]).collect());
        let split = split_dataset(&ds, 10, 50, 7).unwrap();
        assert_eq!(split.query.len(), 10);
        assert_eq!(split.retrieval.len(), 90);
        assert_eq!(split.train.len(), 50);
        let retrieval: HashSet<_> = split.retrieval.iter().collect();
        assert!(split.train.iter().all(|id| retrieval.contains(id)));
        assert!(split.query.iter().all(|id| !retrieval.contains(id)));
        split.validate(100).unwrap();

        assert_eq!(split, split_dataset(&ds, 10, 50, 7).unwrap());
        assert_ne!(split.query, split_dataset(&ds, 10, 50, 8).unwrap().query);
    }

    #[test]
    fn split_size_errors() {
        let ds = ds_with_labels((0..10).map(|i| vec![i]).collect());
        assert!(matches!(split_dataset(&ds, 10, 0, 1), Err(Error::Size(_))));
        assert!(matches!(split_dataset(&ds, 4, 7, 1), Err(Error::Size(_))));
        assert!(split_dataset(&ds, 9, 1, 1).is_ok());
    }

    #[test]
    fn split_validation_catches_overlap() {
        let split = Split {
            train: vec![0, 1],
            retrieval: vec![0, 1, 2],
            query: vec![2],
        };
        assert!(matches!(split.validate(3), Err(Error::Data(_))));
        let split = Split {
            train: vec![0],
            retrieval: vec![0, 1],
            query: vec![5],
        };
        assert!(matches!(split.validate(3), Err(Error::IdOutOfRange { .. })));
    }
}
