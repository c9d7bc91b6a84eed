//! The two-stream hashing objective and its gradients with respect to the
//! raw stream outputs.
//!
//! With `U = tanh(F)`, `V = tanh(G)`, codes `B` and similarity `S ∈ {-1,+1}`:
//!
//! ```text
//! L = ‖UBᵀ − kS‖² + ‖VBᵀ − kS‖²
//!     − τ Σ_ij (s_ij Θ_ij − log(1 + e^Θ_ij))        Θ_ij = ½ u_iᵀ v_j,  s = (S+1)/2
//!     + γ (‖U − B‖² + ‖V − B‖²)
//!     + η (‖Uᵀ1‖² + ‖Vᵀ1‖²)
//! ```
//!
//! The ablated variant drops the two `‖·Bᵀ − kS‖²` terms.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::codes::CodeMatrix;
use crate::data::SimilarityOracle;
use crate::error::{shape_err, Error, Result};
use crate::params::HyperParams;

/// Rows per similarity block when sweeping the full training set.
const ROW_BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// All terms, discrete coordinate-descent B-step.
    #[default]
    Full,
    /// No code/feature inner-product terms, B = sign(U + V).
    Ablated,
}

impl Variant {
    pub fn asymmetric(self) -> bool {
        matches!(self, Variant::Full)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log(1 + e^θ) − sθ` for `s ∈ {0, 1}`, as `softplus(∓θ)` to avoid cancellation.
#[inline]
fn bernoulli_nll(theta: f64, s01: f64) -> f64 {
    s01 * softplus(-theta) + (1.0 - s01) * softplus(theta)
}

/// Logistic function, branch-stable for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `Θ = ½ uᵀv`.
pub fn theta(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(shape_err(format!("theta of vectors of length {} and {}", u.len(), v.len())));
    }
    Ok(0.5 * u.dot(&v))
}

/// Per-term values of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub asym_f: f64,
    pub asym_g: f64,
    pub pairwise: f64,
    pub quant_f: f64,
    pub quant_g: f64,
    pub balance: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Weighted sum of the terms.
    pub fn recompose(&self, hp: &HyperParams) -> f64 {
        self.asym_f
            + self.asym_g
            + hp.tau * self.pairwise
            + hp.gamma * (self.quant_f + self.quant_g)
            + hp.eta * self.balance
    }

    pub fn is_finite(&self) -> bool {
        [
            self.asym_f,
            self.asym_g,
            self.pairwise,
            self.quant_f,
            self.quant_g,
            self.balance,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

fn check_finite(m: ArrayView2<'_, f64>, name: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite entries in {name}")))
    }
}

fn check_aligned(u: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>, sim: &SimilarityOracle) -> Result<()> {
    if u.dim() != v.dim() {
        return Err(shape_err(format!("U is {:?} but V is {:?}", u.dim(), v.dim())));
    }
    if u.nrows() != sim.len() {
        return Err(shape_err(format!(
            "{} activation rows for {} similarity samples",
            u.nrows(),
            sim.len()
        )));
    }
    Ok(())
}

fn check_codes(u: ArrayView2<'_, f64>, b: &CodeMatrix) -> Result<()> {
    if (b.n(), b.k()) != u.dim() {
        return Err(shape_err(format!(
            "codes are {}×{} but activations are {:?}",
            b.n(),
            b.k(),
            u.dim()
        )));
    }
    Ok(())
}

fn to_s01(s: &Array2<f64>) -> Array2<f64> {
    s.mapv(|x| 0.5 * (x + 1.0))
}

/// `−Σ_ij (s_ij Θ_ij − log(1 + e^Θ_ij))` with `s = (S+1)/2`.
pub fn pairwise_nll(u: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>, sim: &SimilarityOracle) -> Result<f64> {
    check_aligned(u, v, sim)?;
    check_finite(u, "U")?;
    check_finite(v, "V")?;
    let n = u.nrows();
    let mut acc = 0.0;
    for start in (0..n).step_by(ROW_BLOCK) {
        let rows: Vec<usize> = (start..(start + ROW_BLOCK).min(n)).collect();
        acc += pairwise_block(u, v, sim, &rows);
    }
    Ok(acc)
}

fn pairwise_block(u: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>, sim: &SimilarityOracle, rows: &[usize]) -> f64 {
    let s01 = to_s01(&sim.block(rows));
    let ub = u.select(Axis(0), rows);
    let th = ub.dot(&v.t()) * 0.5;
    th.iter()
        .zip(s01.iter())
        .map(|(&t, &s)| bernoulli_nll(t, s))
        .sum()
}

/// Every term of the objective for full-set activations `U`, `V` and codes `B`.
pub fn loss_total(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    b: &CodeMatrix,
    sim: &SimilarityOracle,
    hp: &HyperParams,
) -> Result<LossBreakdown> {
    loss_with(u, v, b, sim, hp, Variant::Full)
}

pub fn loss_with(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    b: &CodeMatrix,
    sim: &SimilarityOracle,
    hp: &HyperParams,
    variant: Variant,
) -> Result<LossBreakdown> {
    check_aligned(u, v, sim)?;
    check_codes(u, b)?;
    check_finite(u, "U")?;
    check_finite(v, "V")?;
    let n = u.nrows();
    let k = hp.k as f64;
    if b.k() != hp.k {
        return Err(shape_err(format!("codes have {} bits, hyperparameters say {}", b.k(), hp.k)));
    }
    let bm = b.unpack();

    let mut out = LossBreakdown::default();
    for start in (0..n).step_by(ROW_BLOCK) {
        let rows: Vec<usize> = (start..(start + ROW_BLOCK).min(n)).collect();
        let s = sim.block(&rows);
        if variant.asymmetric() {
            for (stream, acc) in [(u, &mut out.asym_f), (v, &mut out.asym_g)] {
                let ip = stream.select(Axis(0), &rows).dot(&bm.t());
                *acc += ip
                    .iter()
                    .zip(s.iter())
                    .map(|(&x, &sij)| (x - k * sij).powi(2))
                    .sum::<f64>();
            }
        }
        let s01 = to_s01(&s);
        let th = u.select(Axis(0), &rows).dot(&v.t()) * 0.5;
        out.pairwise += th
            .iter()
            .zip(s01.iter())
            .map(|(&t, &sij)| bernoulli_nll(t, sij))
            .sum::<f64>();
    }
    out.quant_f = (&u - &bm).mapv(|x| x * x).sum();
    out.quant_g = (&v - &bm).mapv(|x| x * x).sum();
    out.balance = col_sums(u).mapv(|x| x * x).sum() + col_sums(v).mapv(|x| x * x).sum();
    out.total = out.recompose(hp);
    Ok(out)
}

fn col_sums(m: ArrayView2<'_, f64>) -> Array1<f64> {
    m.sum_axis(Axis(0))
}

/// `∂L/∂(raw output)` for the rows `batch` of one stream.
///
/// `own` is the relaxed output of the stream being updated (`U` for the first,
/// `V` for the second) and `other` that of the opposite stream. Row `r` of the
/// result belongs to sample `batch[r]`; all sums run over the full training set.
pub fn stream_grad_rows(
    batch: &[usize],
    own: ArrayView2<'_, f64>,
    other: ArrayView2<'_, f64>,
    b: &CodeMatrix,
    sim: &SimilarityOracle,
    hp: &HyperParams,
    variant: Variant,
) -> Result<Array2<f64>> {
    check_aligned(own, other, sim)?;
    check_codes(own, b)?;
    let n = own.nrows();
    if let Some(&bad) = batch.iter().find(|&&i| i >= n) {
        return Err(Error::IdOutOfRange { id: bad, n });
    }
    grad_rows(batch, own, other, Some(&b.unpack()), sim, hp, variant)
}

/// Stream gradient with the codes taken as the zero matrix, the state before
/// the first code step.
pub fn stream_grad_rows_zero_codes(
    batch: &[usize],
    own: ArrayView2<'_, f64>,
    other: ArrayView2<'_, f64>,
    sim: &SimilarityOracle,
    hp: &HyperParams,
    variant: Variant,
) -> Result<Array2<f64>> {
    check_aligned(own, other, sim)?;
    let n = own.nrows();
    if let Some(&bad) = batch.iter().find(|&&i| i >= n) {
        return Err(Error::IdOutOfRange { id: bad, n });
    }
    grad_rows(batch, own, other, None, sim, hp, variant)
}

fn grad_rows(
    batch: &[usize],
    own: ArrayView2<'_, f64>,
    other: ArrayView2<'_, f64>,
    bm: Option<&Array2<f64>>,
    sim: &SimilarityOracle,
    hp: &HyperParams,
    variant: Variant,
) -> Result<Array2<f64>> {
    let k = hp.k as f64;
    let s = sim.block(batch);
    let own_b = own.select(Axis(0), batch);
    check_finite(own_b.view(), "batch activations")?;

    // likelihood: (τ/2) Σ_j (σ(Θ_ij) − s_ij) other_j
    let th = own_b.dot(&other.t()) * 0.5;
    let mut resid = th;
    resid.zip_mut_with(&s, |t, &sij| *t = sigmoid(*t) - 0.5 * (sij + 1.0));
    let mut grad = resid.dot(&other) * (0.5 * hp.tau);

    match bm {
        Some(bm) => {
            if variant.asymmetric() {
                // 2 Σ_j b_j (b_jᵀ own_i − k S_ij)
                let mut ip = own_b.dot(&bm.t());
                ip.zip_mut_with(&s, |x, &sij| *x -= k * sij);
                grad.scaled_add(2.0, &ip.dot(bm));
            }
            let b_rows = bm.select(Axis(0), batch);
            grad.scaled_add(2.0 * hp.gamma, &(&own_b - &b_rows));
        }
        None => grad.scaled_add(2.0 * hp.gamma, &own_b),
    }
    let balance = col_sums(own) * (2.0 * hp.eta);
    grad += &balance;

    grad.zip_mut_with(&own_b, |g, &a| *g *= 1.0 - a * a);
    Ok(grad)
}

/// Relaxed outputs `U = tanh(F)` and `V = tanh(G)` for the whole training set,
/// with per-row refresh stamps.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    u: Array2<f64>,
    v: Array2<f64>,
    u_stamp: Vec<u64>,
    v_stamp: Vec<u64>,
    u_tick: u64,
    v_tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    F,
    G,
}

impl ActivationCache {
    /// Cache from raw outputs `F`, `G` (tanh applied here).
    pub fn from_raw(f: ArrayView2<'_, f64>, g: ArrayView2<'_, f64>) -> Result<Self> {
        if f.dim() != g.dim() {
            return Err(shape_err(format!("F is {:?} but G is {:?}", f.dim(), g.dim())));
        }
        let n = f.nrows();
        Ok(Self {
            u: f.mapv(f64::tanh),
            v: g.mapv(f64::tanh),
            u_stamp: vec![1; n],
            v_stamp: vec![1; n],
            u_tick: 1,
            v_tick: 1,
        })
    }

    pub fn u(&self) -> ArrayView2<'_, f64> {
        self.u.view()
    }

    pub fn v(&self) -> ArrayView2<'_, f64> {
        self.v.view()
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    /// Replaces rows `ids` of one stream with `tanh(raw)`; only these rows count
    /// as current for the next gradient call on that stream.
    pub fn refresh(&mut self, stream: Stream, ids: &[usize], raw: ArrayView2<'_, f64>) -> Result<()> {
        let (m, cols) = (self.u.nrows(), self.u.ncols());
        if raw.dim() != (ids.len(), cols) {
            return Err(shape_err(format!(
                "refresh of {} rows got a {:?} block",
                ids.len(),
                raw.dim()
            )));
        }
        let (mat, stamps, tick) = match stream {
            Stream::F => (&mut self.u, &mut self.u_stamp, &mut self.u_tick),
            Stream::G => (&mut self.v, &mut self.v_stamp, &mut self.v_tick),
        };
        *tick += 1;
        for (r, &id) in ids.iter().enumerate() {
            if id >= m {
                return Err(Error::IdOutOfRange { id, n: m });
            }
            mat.row_mut(id).assign(&raw.row(r).mapv(f64::tanh));
            stamps[id] = *tick;
        }
        Ok(())
    }

    fn check_current(&self, stream: Stream, ids: &[usize]) -> Result<()> {
        let (stamps, tick) = match stream {
            Stream::F => (&self.u_stamp, self.u_tick),
            Stream::G => (&self.v_stamp, self.v_tick),
        };
        for &id in ids {
            if id >= stamps.len() {
                return Err(Error::IdOutOfRange { id, n: stamps.len() });
            }
            if stamps[id] != tick {
                return Err(Error::State(format!(
                    "cached activation row {id} of stream {stream:?} is stale"
                )));
            }
        }
        Ok(())
    }
}

/// `∂L/∂f_i` for the batch, requiring its `U` rows to be freshly refreshed.
pub fn grad_f_rows(
    batch: &[usize],
    cache: &ActivationCache,
    b: &CodeMatrix,
    sim: &SimilarityOracle,
    hp: &HyperParams,
    variant: Variant,
) -> Result<Array2<f64>> {
    cache.check_current(Stream::F, batch)?;
    stream_grad_rows(batch, cache.u(), cache.v(), b, sim, hp, variant)
}

/// Gradient for either stream; `codes = None` takes `B = 0`.
pub fn grad_rows_for(
    stream: Stream,
    batch: &[usize],
    cache: &ActivationCache,
    codes: Option<&CodeMatrix>,
    sim: &SimilarityOracle,
    hp: &HyperParams,
    variant: Variant,
) -> Result<Array2<f64>> {
    cache.check_current(stream, batch)?;
    let (own, other) = match stream {
        Stream::F => (cache.u(), cache.v()),
        Stream::G => (cache.v(), cache.u()),
    };
    match codes {
        Some(b) => stream_grad_rows(batch, own, other, b, sim, hp, variant),
        None => stream_grad_rows_zero_codes(batch, own, other, sim, hp, variant),
    }
}

/// `∂L/∂g_i` for the batch, requiring its `V` rows to be freshly refreshed.
pub fn grad_g_rows(
    batch: &[usize],
    cache: &ActivationCache,
    b: &CodeMatrix,
    sim: &SimilarityOracle,
    hp: &HyperParams,
    variant: Variant,
) -> Result<Array2<f64>> {
    cache.check_current(Stream::G, batch)?;
    stream_grad_rows(batch, cache.v(), cache.u(), b, sim, hp, variant)
}
