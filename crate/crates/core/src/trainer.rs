//! Alternating optimisation of the two streams and the shared codes.
//!
//! Each outer iteration runs one shuffled minibatch epoch on the first stream,
//! one on the second, then a B-step. Gradient sums over the training set use
//! the cached activations, whose rows are refreshed at every batch forward.
//!
//! Codes start as the zero matrix: the first two epochs see `B = 0`, and the
//! first B-step sweeps up from zero columns (see [`b_step_from_zero`]).

use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codes::CodeMatrix;
use crate::data::{FeatureDataset, SimilarityOracle, Split};
use crate::encoder::MlpEncoder;
use crate::error::{shape_err, Error, Result};
use crate::objective::{grad_rows_for, loss_with, ActivationCache, LossBreakdown, Stream, Variant};
use crate::params::HyperParams;
use crate::retrieval::hamming_unchecked;
use crate::solver::{b_step, b_step_from_zero, b_step_symmetric, b_step_tracked, BObjective};

/// Geometric decay from `lr_start` at iteration 0 to `lr_end` at the last iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_start: f64,
    pub lr_end: f64,
    pub outer_iters: usize,
}

impl LrSchedule {
    pub fn from_params(hp: &HyperParams) -> Self {
        Self {
            lr_start: hp.lr_start,
            lr_end: hp.lr_end,
            outer_iters: hp.outer_iters,
        }
    }

    pub fn lr_at(&self, t: usize) -> Result<f64> {
        if t >= self.outer_iters {
            return Err(Error::Index {
                index: t,
                len: self.outer_iters,
            });
        }
        if self.outer_iters == 1 {
            return Ok(self.lr_start);
        }
        let frac = t as f64 / (self.outer_iters - 1) as f64;
        Ok(self.lr_start * (self.lr_end / self.lr_start).powf(frac))
    }
}

/// Wall-clock seconds spent in each phase of one outer iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub stream_f: f64,
    pub stream_g: f64,
    pub b_step: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
    /// Bits changed by the code step.
    pub b_flips: usize,
    /// Code-step objective before and after the update (full variant only).
    pub b_objective: Option<(f64, f64)>,
    /// Column updates that raised the code-step objective; only counted when
    /// per-column tracking is on.
    pub b_increases: usize,
    pub seconds: PhaseTimes,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub encoder_f: MlpEncoder,
    pub encoder_g: MlpEncoder,
    /// All `+1` until the first code step.
    pub codes: CodeMatrix,
    /// False while the codes still stand for the zero matrix.
    pub codes_set: bool,
    pub cache: ActivationCache,
    pub iter: usize,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

/// Network shape and loop switches beyond the hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    /// Hidden layer widths between the input features and the `k` outputs.
    pub hidden: Vec<usize>,
    pub variant: Variant,
    /// Evaluate the code-step objective after every column update.
    pub track_b_objective: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            hidden: vec![512],
            variant: Variant::Full,
            track_b_objective: false,
        }
    }
}

impl TrainOptions {
    pub fn layer_dims(&self, d: usize, k: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(d);
        dims.extend_from_slice(&self.hidden);
        dims.push(k);
        dims
    }
}

/// Seeds derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub run: u64,
    pub encoder_f: u64,
    pub encoder_g: u64,
    pub shuffle: u64,
}

impl RunSeeds {
    pub fn derive(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            run: seed,
            encoder_f: rng.random(),
            encoder_g: rng.random(),
            shuffle: rng.random(),
        }
    }
}

/// Flips, optional `(before, after)` code objective, increases.
type CodeStepOutcome = (usize, Option<(f64, f64)>, usize);

/// Stepwise driver of the alternating optimisation.
pub struct Trainer {
    features: Array2<f64>,
    sim: SimilarityOracle,
    hp: HyperParams,
    opts: TrainOptions,
    schedule: LrSchedule,
    seeds: RunSeeds,
    rng: ChaCha8Rng,
    state: TrainState,
    streak: usize,
}

impl Trainer {
    pub fn new(ds: &FeatureDataset, split: &Split, hp: &HyperParams, opts: &TrainOptions) -> Result<Self> {
        hp.validate()?;
        split.validate(ds.len())?;
        if split.train.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        if opts.variant == Variant::Ablated && !(hp.gamma > 0.0) {
            return Err(Error::Config("the ablated variant needs gamma > 0".into()));
        }
        let features = ds.select(&split.train)?;
        let sim = SimilarityOracle::for_ids(ds, &split.train)?;
        let dims = opts.layer_dims(ds.dim(), hp.k);
        let seeds = RunSeeds::derive(hp.seed);
        let encoder_f = MlpEncoder::init(&dims, seeds.encoder_f)?;
        let encoder_g = MlpEncoder::init(&dims, seeds.encoder_g)?;
        let cache = ActivationCache::from_raw(
            encoder_f.infer(features.view())?.view(),
            encoder_g.infer(features.view())?.view(),
        )?;
        let n = features.nrows();
        let state = TrainState {
            encoder_f,
            encoder_g,
            codes: CodeMatrix::all_positive(n, hp.k),
            codes_set: false,
            cache,
            iter: 0,
            history: Vec::new(),
            converged: false,
        };
        Ok(Self {
            features,
            sim,
            hp: hp.clone(),
            opts: opts.clone(),
            schedule: LrSchedule::from_params(hp),
            seeds,
            rng: ChaCha8Rng::seed_from_u64(seeds.shuffle),
            state,
            streak: 0,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn seeds(&self) -> RunSeeds {
        self.seeds
    }

    pub fn similarity(&self) -> &SimilarityOracle {
        &self.sim
    }

    pub fn is_done(&self) -> bool {
        self.state.converged || self.state.iter >= self.hp.outer_iters
    }

    /// One outer iteration. Errors once the run is done.
    pub fn step(&mut self) -> Result<&IterationRecord> {
        if self.is_done() {
            return Err(Error::State("training already finished".into()));
        }
        let t = self.state.iter;
        let lr = self.schedule.lr_at(t)?;
        let mut seconds = PhaseTimes::default();

        let clock = Instant::now();
        self.stream_epoch(Stream::F, lr).map_err(|e| at_iter(t, e))?;
        seconds.stream_f = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        self.stream_epoch(Stream::G, lr).map_err(|e| at_iter(t, e))?;
        seconds.stream_g = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let (b_flips, b_objective, b_increases) = self.code_step()?;
        seconds.b_step = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let st = &self.state;
        let loss = loss_with(st.cache.u(), st.cache.v(), &st.codes, &self.sim, &self.hp, self.opts.variant)
            .map_err(|e| at_iter(t, e))?;
        seconds.loss = clock.elapsed().as_secs_f64();
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at iteration {t}: {loss:?}")));
        }

        if let Some(prev) = self.state.history.last() {
            let rel = (loss.total - prev.loss.total).abs() / prev.loss.total.abs().max(f64::MIN_POSITIVE);
            if rel < self.hp.early_stop_tol {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
        }
        self.state.history.push(IterationRecord {
            iter: t,
            lr,
            loss,
            b_flips,
            b_objective,
            b_increases,
            seconds,
        });
        self.state.iter += 1;
        if self.hp.early_stop_patience > 0 && self.streak >= self.hp.early_stop_patience {
            self.state.converged = true;
        }
        Ok(self.state.history.last().unwrap())
    }

    /// Steps until the iteration budget is spent or the loss settles.
    pub fn run(mut self) -> Result<TrainState> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.state)
    }

    fn stream_epoch(&mut self, stream: Stream, lr: f64) -> Result<()> {
        let n = self.features.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        for batch in order.chunks(self.hp.batch) {
            let x = self.features.select(Axis(0), batch);
            let st = &mut self.state;
            let enc = match stream {
                Stream::F => &mut st.encoder_f,
                Stream::G => &mut st.encoder_g,
            };
            let (out, fwd) = enc.forward(x.view())?;
            st.cache.refresh(stream, batch, out.view())?;
            let codes = st.codes_set.then_some(&st.codes);
            let mut d_out = grad_rows_for(stream, batch, &st.cache, codes, &self.sim, &self.hp, self.opts.variant)?;
            d_out *= self.hp.grad_reduction.factor(batch.len());
            let grads = enc.backward(&fwd, d_out.view())?;
            enc.sgd_step(&grads, lr)?;
        }
        Ok(())
    }

    fn code_step(&mut self) -> Result<CodeStepOutcome> {
        let st = &mut self.state;
        let (u, v) = (st.cache.u(), st.cache.v());
        let first = !st.codes_set;
        st.codes_set = true;
        match self.opts.variant {
            Variant::Ablated => {
                let next = b_step_symmetric(u, v, self.hp.gamma)?;
                let flips = if first {
                    next.n() * next.k()
                } else {
                    (0..next.n())
                        .map(|i| hamming_unchecked(next.row_words(i), st.codes.row_words(i), next.k()) as usize)
                        .sum()
                };
                st.codes = next;
                Ok((flips, None, 0))
            }
            Variant::Full if first => {
                let (codes, report) = b_step_from_zero(u, v, &self.sim, &self.hp, self.opts.track_b_objective)?;
                st.codes = codes;
                let objective = BObjective::new(u, v, &self.sim, self.hp.gamma)?;
                let after = objective.value(&st.codes);
                let before = objective.value_dense(Array2::zeros(u.dim()).view());
                Ok((report.total_flips(), Some((before, after)), report.increases(B_OBJECTIVE_RTOL)))
            }
            Variant::Full => {
                let objective = BObjective::new(u, v, &self.sim, self.hp.gamma)?;
                let before = objective.value(&st.codes);
                let report = if self.opts.track_b_objective {
                    b_step_tracked(&mut st.codes, u, v, &self.sim, &self.hp)?
                } else {
                    b_step(&mut st.codes, u, v, &self.sim, &self.hp)?
                };
                let after = objective.value(&st.codes);
                Ok((report.total_flips(), Some((before, after)), report.increases(B_OBJECTIVE_RTOL)))
            }
        }
    }
}

/// Relative slack for rounding when checking that a code update did not
/// raise its objective.
pub const B_OBJECTIVE_RTOL: f64 = 1e-12;

fn at_iter(t: usize, e: Error) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("iteration {t}: {msg}")),
        other => other,
    }
}

/// Full objective with the discrete code step.
pub fn train(ds: &FeatureDataset, split: &Split, hp: &HyperParams) -> Result<TrainState> {
    Trainer::new(ds, split, hp, &TrainOptions::default())?.run()
}

/// Objective without the code/feature inner-product terms, codes from `sign(U + V)`.
pub fn train_ablated(ds: &FeatureDataset, split: &Split, hp: &HyperParams) -> Result<TrainState> {
    let opts = TrainOptions {
        variant: Variant::Ablated,
        ..Default::default()
    };
    Trainer::new(ds, split, hp, &opts)?.run()
}

/// Fraction of bits on which the two streams' codes agree for `x`.
pub fn stream_agreement(state: &TrainState, x: ndarray::ArrayView2<'_, f64>) -> Result<f64> {
    let f = CodeMatrix::from_signs(state.encoder_f.infer(x)?.view());
    let g = CodeMatrix::from_signs(state.encoder_g.infer(x)?.view());
    if f.n() == 0 {
        return Err(shape_err("no rows to compare"));
    }
    let k = f.k();
    let diff: usize = (0..f.n())
        .map(|i| hamming_unchecked(f.row_words(i), g.row_words(i), k) as usize)
        .sum();
    Ok(1.0 - diff as f64 / (f.n() * k) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::split_dataset;

    #[test]
    fn lr_schedule_endpoints() {
        let s = LrSchedule::from_params(&HyperParams::default());
        assert_eq!(s.lr_at(0).unwrap(), 1e-4);
        assert!((s.lr_at(149).unwrap() - 1e-6).abs() < 1e-20);
        let mid_lo = s.lr_at(74).unwrap();
        let mid_hi = s.lr_at(75).unwrap();
        assert!(mid_lo > 1e-5 && mid_hi < 1e-5);
        let step = (1e-2f64).powf(1.0 / 149.0);
        assert!((mid_lo / 1e-5) < 1.0 / step.sqrt() + 1e-9);
        assert!(matches!(s.lr_at(150), Err(Error::Index { .. })));
        for t in 1..150 {
            assert!(s.lr_at(t).unwrap() <= s.lr_at(t - 1).unwrap());
        }
    }

    fn toy() -> (FeatureDataset, Split) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 40;
        let labels: Vec<Vec<u32>> = (0..n).map(|i| vec![(i % 4) as u32]).collect();
        let feats = Array2::from_shape_fn((n, 6), |(i, j)| {
            let c = (i % 4) as f64;
            (c * (j as f64 + 1.0)).sin() + 0.1 * rng.random_range(-1.0..1.0)
        });
        let ds = FeatureDataset::new(feats, labels).unwrap();
        let split = split_dataset(&ds, 8, 24, 1).unwrap();
        (ds, split)
    }

    fn small_hp() -> HyperParams {
        HyperParams {
            k: 8,
            batch: 8,
            outer_iters: 4,
            lr_start: 1e-4,
            lr_end: 1e-5,
            seed: 3,
            ..Default::default()
        }
    }

    fn small_opts(variant: Variant) -> TrainOptions {
        TrainOptions {
            hidden: vec![10],
            variant,
            track_b_objective: true,
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let (ds, split) = toy();
        let a = Trainer::new(&ds, &split, &small_hp(), &small_opts(Variant::Full)).unwrap().run().unwrap();
        let b = Trainer::new(&ds, &split, &small_hp(), &small_opts(Variant::Full)).unwrap().run().unwrap();
        assert_eq!(a.encoder_f, b.encoder_f);
        assert_eq!(a.encoder_g, b.encoder_g);
        assert_eq!(a.codes, b.codes);
        assert_eq!(a.history.len(), a.iter);
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert_eq!(ra.loss, rb.loss);
        }
    }

    #[test]
    fn code_step_never_raises_its_objective() {
        let (ds, split) = toy();
        let st = Trainer::new(&ds, &split, &small_hp(), &small_opts(Variant::Full)).unwrap().run().unwrap();
        for rec in &st.history {
            let (before, after) = rec.b_objective.unwrap();
            assert!(after <= before + B_OBJECTIVE_RTOL * before.abs());
            assert_eq!(rec.b_increases, 0);
            assert!(rec.loss.is_finite());
        }
    }

    #[test]
    fn all_weights_off_leaves_parameters_unchanged() {
        // with τ = γ = η = 0 only the inner-product term is left; ablating it too
        // zeroes every gradient
        let (ds, split) = toy();
        let hp = HyperParams { tau: 0.0, gamma: 1e-300, eta: 0.0, ..small_hp() };
        let tr = Trainer::new(&ds, &split, &hp, &small_opts(Variant::Ablated)).unwrap();
        let f0 = tr.state().encoder_f.clone();
        let st = tr.run().unwrap();
        for (a, b) in st.encoder_f.layers().iter().zip(f0.layers()) {
            for (x, y) in a.weight.iter().zip(b.weight.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ablated_codes_follow_summed_activations() {
        let (ds, split) = toy();
        let mut tr = Trainer::new(&ds, &split, &small_hp(), &small_opts(Variant::Ablated)).unwrap();
        while !tr.is_done() {
            let rec = tr.step().unwrap().clone();
            assert_eq!(rec.loss.asym_f, 0.0);
            assert_eq!(rec.loss.asym_g, 0.0);
            let st = tr.state();
            let expected = b_step_symmetric(st.cache.u(), st.cache.v(), 1.0).unwrap();
            assert_eq!(st.codes, expected);
        }
        assert!(tr.step().is_err());
    }

    #[test]
    fn rejects_empty_training_set() {
        let (ds, mut split) = toy();
        split.train.clear();
        assert!(matches!(
            Trainer::new(&ds, &split, &small_hp(), &TrainOptions::default()),
            Err(Error::Data(_))
        ));
    }
}
