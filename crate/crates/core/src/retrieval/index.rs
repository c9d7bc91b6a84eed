use std::collections::HashSet;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::codes::{last_word_mask, CodeMatrix};
use crate::encoder::MlpEncoder;
use crate::error::{shape_err, Error, Result};

/// Number of differing bits among the first `k` bits of two packed codes.
#[inline]
pub fn hamming(a: &[u64], b: &[u64], k: usize) -> Result<u32> {
    let words = k.div_ceil(64);
    if a.len() != words || b.len() != words {
        return Err(shape_err(format!(
            "codes of {} and {} words compared at {k} bits",
            a.len(),
            b.len()
        )));
    }
    Ok(hamming_unchecked(a, b, k))
}

#[inline]
pub(crate) fn hamming_unchecked(a: &[u64], b: &[u64], k: usize) -> u32 {
    let last = a.len().saturating_sub(1);
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(w, (x, y))| {
            let diff = x ^ y;
            let diff = if w == last { diff & last_word_mask(k) } else { diff };
            diff.count_ones()
        })
        .sum()
}

/// Which trained stream produces query codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamChoice {
    /// `sign(½(f(x) + g(x)))`
    #[default]
    Fused,
    F,
    G,
}

impl std::str::FromStr for StreamChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(Self::Fused),
            "f" => Ok(Self::F),
            "g" => Ok(Self::G),
            other => Err(Error::Config(format!("unknown stream {other:?} (expected fused, f or g)"))),
        }
    }
}

/// Codes for every row of `x`. No `tanh` is applied; `sign(0) = +1`.
pub fn encode_batch(
    x: ArrayView2<'_, f64>,
    enc_f: &MlpEncoder,
    enc_g: &MlpEncoder,
    stream: StreamChoice,
) -> Result<CodeMatrix> {
    if enc_f.dims()[0] != enc_g.dims()[0] || enc_f.output_dim() != enc_g.output_dim() {
        return Err(shape_err("the two streams have different input or output sizes"));
    }
    let out = match stream {
        StreamChoice::F => enc_f.infer(x)?,
        StreamChoice::G => enc_g.infer(x)?,
        StreamChoice::Fused => (enc_f.infer(x)? + enc_g.infer(x)?) * 0.5,
    };
    Ok(CodeMatrix::from_signs(out.view()))
}

/// Fused code of a single feature vector.
pub fn encode_query(x: &[f64], enc_f: &MlpEncoder, enc_g: &MlpEncoder) -> Result<CodeMatrix> {
    let row = ArrayView2::from_shape((1, x.len()), x).map_err(|e| shape_err(e.to_string()))?;
    encode_batch(row, enc_f, enc_g, StreamChoice::Fused)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    /// Caller-facing identifier.
    pub id: usize,
    /// Row of the entry inside the index.
    pub row: usize,
    pub distance: u32,
}

/// Ranked hits ordered by `(distance, id)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
}

impl RetrievalResult {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.hits.iter().map(|h| h.id).collect()
    }
}

/// Exact linear-scan index over packed codes.
#[derive(Debug, Clone)]
pub struct HammingIndex {
    codes: CodeMatrix,
    ids: Vec<usize>,
    /// Rows sorted by ascending id, so distance buckets come out id-ordered.
    by_id: Vec<usize>,
}

impl HammingIndex {
    /// Index whose ids are the row numbers.
    pub fn new(codes: CodeMatrix) -> Self {
        let ids: Vec<usize> = (0..codes.n()).collect();
        let by_id = ids.clone();
        Self { codes, ids, by_id }
    }

    pub fn with_ids(codes: CodeMatrix, ids: Vec<usize>) -> Result<Self> {
        if ids.len() != codes.n() {
            return Err(shape_err(format!("{} ids for {} codes", ids.len(), codes.n())));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::Data(format!("duplicate id {dup} in index")));
        }
        let mut by_id: Vec<usize> = (0..ids.len()).collect();
        by_id.sort_unstable_by_key(|&r| ids[r]);
        Ok(Self { codes, ids, by_id })
    }

    pub fn len(&self) -> usize {
        self.codes.n()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.n() == 0
    }

    pub fn k(&self) -> usize {
        self.codes.k()
    }

    pub fn codes(&self) -> &CodeMatrix {
        &self.codes
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Distance from `query` to every entry, in row order.
    pub fn distances(&self, query: &[u64]) -> Result<Vec<u32>> {
        let k = self.k();
        if query.len() != self.codes.words_per_row() {
            return Err(shape_err(format!(
                "query has {} words, index codes have {}",
                query.len(),
                self.codes.words_per_row()
            )));
        }
        Ok((0..self.len())
            .map(|r| hamming_unchecked(query, self.codes.row_words(r), k))
            .collect())
    }

    /// All entries ranked by `(distance, id)`.
    pub fn rank(&self, query: &[u64]) -> Result<RetrievalResult> {
        self.search(query, self.len().max(1))
    }

    /// The `topk` nearest entries by `(distance, id)`.
    pub fn search(&self, query: &[u64], topk: usize) -> Result<RetrievalResult> {
        if topk == 0 {
            return Err(Error::Domain("topk must be at least 1".into()));
        }
        if self.is_empty() {
            return Ok(RetrievalResult::default());
        }
        let dist = self.distances(query)?;
        // counting sort over the k+1 possible distances
        let mut buckets = vec![Vec::new(); self.k() + 1];
        for &r in &self.by_id {
            buckets[dist[r] as usize].push(r);
        }
        let hits = buckets
            .into_iter()
            .flatten()
            .take(topk)
            .map(|r| Hit {
                id: self.ids[r],
                row: r,
                distance: dist[r],
            })
            .collect();
        Ok(RetrievalResult { hits })
    }
}
