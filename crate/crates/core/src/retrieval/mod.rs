//! Query encoding, exact Hamming search and retrieval metrics.

mod index;
mod metrics;

pub(crate) use index::hamming_unchecked;
pub use index::{encode_batch, encode_query, hamming, HammingIndex, Hit, RetrievalResult, StreamChoice};
pub use metrics::{
    average_precision, evaluate, mean_ap, pr_curve, topk_precision, EvalInput, Metrics, PrCurve, PrPoint,
};
