//! Random-hyperplane LSH baseline.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::codes::CodeMatrix;
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LshModel {
    /// `k × d`, one Gaussian hyperplane normal per row.
    projection: Array2<f64>,
    /// Subtracted from inputs before projecting.
    center: Option<Array1<f64>>,
    seed: u64,
}

impl LshModel {
    /// `k` standard-normal hyperplanes in `d` dimensions.
    pub fn fit(d: usize, k: usize, seed: u64) -> Result<Self> {
        if d == 0 || k == 0 {
            return Err(Error::Domain(format!("LSH needs d, k >= 1 (got d = {d}, k = {k})")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = Array2::from_shape_fn((k, d), |_| StandardNormal.sample(&mut rng));
        Ok(Self {
            projection,
            center: None,
            seed,
        })
    }

    /// Centres inputs on the column means of `train`.
    pub fn centered_on(mut self, train: ArrayView2<'_, f64>) -> Result<Self> {
        if train.ncols() != self.dim() {
            return Err(shape_err(format!(
                "centering data has {} features, model expects {}",
                train.ncols(),
                self.dim()
            )));
        }
        self.center = train.mean_axis(Axis(0));
        Ok(self)
    }

    pub fn projection(&self) -> &Array2<f64> {
        &self.projection
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn bits(&self) -> usize {
        self.projection.nrows()
    }

    /// `sign(W(x − c))` for one vector, `sign(0) = +1`.
    pub fn encode(&self, x: ArrayView1<'_, f64>) -> Result<CodeMatrix> {
        let row = x.insert_axis(Axis(0));
        self.encode_batch(row)
    }

    pub fn encode_batch(&self, x: ArrayView2<'_, f64>) -> Result<CodeMatrix> {
        if x.ncols() != self.dim() {
            return Err(shape_err(format!(
                "input has {} features, model expects {}",
                x.ncols(),
                self.dim()
            )));
        }
        let proj = match &self.center {
            Some(c) => (&x - c).dot(&self.projection.t()),
            None => x.dot(&self.projection.t()),
        };
        Ok(CodeMatrix::from_signs(proj.view()))
    }
}
