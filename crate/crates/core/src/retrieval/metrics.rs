//! Ranking metrics over Hamming retrieval: AP / MAP (full or depth-limited),
//! precision at K and radius-swept precision–recall curves.
//!
//! A database item is relevant to a query when their label sets intersect.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::CodeMatrix;
use crate::data::{share_label, LabelSet};
use crate::error::{shape_err, Error, Result};

use super::index::HammingIndex;

/// `(1/T) Σ_r P(r) δ(r)` over a ranked relevance list, `T` being the number
/// of relevant entries in the list. Zero when none are relevant.
pub fn average_precision(relevant: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (r, &rel) in relevant.iter().enumerate() {
        if rel {
            hits += 1;
            acc += hits as f64 / (r + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        acc / hits as f64
    }
}

/// Query codes with their labels, checked against an index and its labels.
#[derive(Debug, Clone, Copy)]
pub struct EvalInput<'a> {
    pub queries: &'a CodeMatrix,
    pub query_labels: &'a [LabelSet],
    pub index: &'a HammingIndex,
    /// Labels of the index entries, by row.
    pub db_labels: &'a [LabelSet],
}

impl<'a> EvalInput<'a> {
    pub fn new(
        queries: &'a CodeMatrix,
        query_labels: &'a [LabelSet],
        index: &'a HammingIndex,
        db_labels: &'a [LabelSet],
    ) -> Result<Self> {
        if queries.n() == 0 {
            return Err(Error::Data("no queries to evaluate".into()));
        }
        if query_labels.len() != queries.n() {
            return Err(Error::Data(format!(
                "{} query label sets for {} query codes",
                query_labels.len(),
                queries.n()
            )));
        }
        if db_labels.len() != index.len() {
            return Err(Error::Data(format!(
                "{} database label sets for {} indexed codes",
                db_labels.len(),
                index.len()
            )));
        }
        if !index.is_empty() && queries.k() != index.k() {
            return Err(shape_err(format!(
                "query codes have {} bits, index has {}",
                queries.k(),
                index.k()
            )));
        }
        if let Some(q) = query_labels.iter().position(|l| l.is_empty()) {
            return Err(Error::Data(format!("query {q} has no labels")));
        }
        Ok(Self {
            queries,
            query_labels,
            index,
            db_labels,
        })
    }

    /// Relevance flags of the ranked list for query `q`, truncated to `depth`.
    fn ranked_relevance(&self, q: usize, depth: Option<usize>) -> Result<Vec<bool>> {
        let depth = depth.unwrap_or(self.index.len()).max(1);
        let ranked = self.index.search(self.queries.row_words(q), depth)?;
        let labels = &self.query_labels[q];
        Ok(ranked
            .hits
            .iter()
            .map(|h| share_label(labels, &self.db_labels[h.row]))
            .collect())
    }

    fn per_query<T: Send>(&self, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        (0..self.queries.n()).into_par_iter().map(f).collect()
    }
}

/// Mean AP over all queries at `depth` (`None` ranks the whole database).
pub fn mean_ap(input: &EvalInput<'_>, depth: Option<usize>) -> Result<f64> {
    let aps = input.per_query(|q| Ok(average_precision(&input.ranked_relevance(q, depth)?)))?;
    Ok(mean(&aps))
}

/// Mean fraction of relevant entries among the top `k`.
pub fn topk_precision(input: &EvalInput<'_>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("K must be at least 1".into()));
    }
    let precs = input.per_query(|q| {
        let rel = input.ranked_relevance(q, Some(k))?;
        Ok(rel.iter().filter(|&&r| r).count() as f64 / k as f64)
    })?;
    Ok(mean(&precs))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub radius: u32,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    /// Queries skipped because nothing in the database is relevant to them.
    pub excluded_queries: usize,
}

impl PrCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("radius,recall,precision\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.radius, p.recall, p.precision));
        }
        out
    }
}

/// Precision and recall of retrieving everything within Hamming radius
/// `0..=k`, pooled over queries. Precision is 1 at radii that retrieve nothing.
pub fn pr_curve(input: &EvalInput<'_>) -> Result<PrCurve> {
    let k = input.queries.k();
    // per query: (retrieved, relevant retrieved) by exact distance, plus relevant total
    let per_query = input.per_query(|q| {
        let dist = input.index.distances(input.queries.row_words(q))?;
        let labels = &input.query_labels[q];
        let mut at = vec![0u64; k + 1];
        let mut rel_at = vec![0u64; k + 1];
        let mut total_rel = 0u64;
        for (r, &d) in dist.iter().enumerate() {
            at[d as usize] += 1;
            if share_label(labels, &input.db_labels[r]) {
                rel_at[d as usize] += 1;
                total_rel += 1;
            }
        }
        Ok((at, rel_at, total_rel))
    })?;

    let mut retrieved = vec![0u64; k + 1];
    let mut rel_retrieved = vec![0u64; k + 1];
    let mut total_rel = 0u64;
    let mut excluded = 0;
    for (at, rel_at, tr) in per_query {
        if tr == 0 {
            excluded += 1;
            continue;
        }
        total_rel += tr;
        for d in 0..=k {
            retrieved[d] += at[d];
            rel_retrieved[d] += rel_at[d];
        }
    }
    if total_rel == 0 {
        return Err(Error::Data("no query has a relevant database item".into()));
    }

    let (mut cum, mut cum_rel) = (0u64, 0u64);
    let points = (0..=k)
        .map(|d| {
            cum += retrieved[d];
            cum_rel += rel_retrieved[d];
            PrPoint {
                radius: d as u32,
                recall: cum_rel as f64 / total_rel as f64,
                precision: if cum == 0 { 1.0 } else { cum_rel as f64 / cum as f64 },
            }
        })
        .collect();
    Ok(PrCurve {
        points,
        excluded_queries: excluded,
    })
}

/// Summary written by the evaluation command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub map: f64,
    pub map_at_k: f64,
    pub precision_at_k: f64,
    pub n_queries: usize,
}

pub fn evaluate(input: &EvalInput<'_>, topk: usize) -> Result<Metrics> {
    Ok(Metrics {
        map: mean_ap(input, None)?,
        map_at_k: mean_ap(input, Some(topk))?,
        precision_at_k: topk_precision(input, topk)?,
        n_queries: input.queries.n(),
    })
}
