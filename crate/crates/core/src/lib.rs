//! Two-stream supervised hashing with an asymmetric feature/code loss.
//!
//! Two multilayer-perceptron hash functions are trained against shared binary
//! codes with an asymmetric feature/code inner-product loss, a pairwise
//! likelihood loss over the two streams, quantization and bit-balance terms.
//! The codes are solved bit column by bit column. Trained streams are
//! evaluated with exact bit-packed Hamming search.
//!
//! | module | contents |
//! |--------|----------|
//! | [`data`] | datasets, label similarity, splits |
//! | [`codes`] | packed `±1` code matrices |
//! | [`encoder`] | MLP streams with forward/backward/SGD |
//! | [`objective`] | loss terms and stream gradients |
//! | [`gradcheck`] | finite-difference check of the stream gradients |
//! | [`solver`] | discrete code step |
//! | [`trainer`] | alternating optimisation loop |
//! | [`retrieval`] | query encoding, Hamming search, MAP / precision / PR |
//! | [`lsh`] | random-hyperplane baseline |
//! | [`synth`], [`benchmark`] | Gaussian-cluster data and the end-to-end benchmark |
//! | [`io`] | binary and text file formats |
//! | [`cli`] | the `dadh` command implementations |
#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod benchmark;
pub mod cli;
pub mod codes;
pub mod data;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod lsh;
pub mod objective;
pub mod params;
pub mod retrieval;
pub mod solver;
pub mod synth;
pub mod trainer;

pub use codes::CodeMatrix;
pub use data::{split_dataset, FeatureDataset, SimilarityOracle, Split};
pub use encoder::MlpEncoder;
pub use error::{Error, Result};
pub use objective::{LossBreakdown, Variant};
pub use params::{GradReduction, HyperParams};
pub use trainer::{stream_agreement, train, train_ablated, TrainOptions, TrainState, Trainer};
