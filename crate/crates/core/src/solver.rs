//! Discrete code step: minimise
//!
//! ```text
//! L(B) = ‖UBᵀ − kS‖² + ‖VBᵀ − kS‖² + γ(‖U − B‖² + ‖V − B‖²),   B ∈ {-1,+1}^{n×k}
//! ```
//!
//! one bit column at a time with the other columns held fixed.

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::codes::CodeMatrix;
use crate::data::SimilarityOracle;
use crate::error::{shape_err, Error, Result};
use crate::params::HyperParams;

const ROW_BLOCK: usize = 64;

fn check_inputs(u: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>, sim: &SimilarityOracle) -> Result<()> {
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

/// `S·M` for the (symmetric) similarity, one row block at a time.
fn sim_times(sim: &SimilarityOracle, m: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = sim.len();
    let mut out = Array2::zeros(m.dim());
    for start in (0..n).step_by(ROW_BLOCK) {
        let end = (start + ROW_BLOCK).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let block = sim.block(&rows);
        out.slice_mut(s![start..end, ..]).assign(&block.dot(&m));
    }
    out
}

/// `Q = −2k(SᵀU + SᵀV) − 2γ(U + V)`.
pub fn compute_q(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    sim: &SimilarityOracle,
    k: usize,
    gamma: f64,
) -> Result<Array2<f64>> {
    check_inputs(u, v, sim)?;
    if u.ncols() != k {
        return Err(shape_err(format!("activations have {} columns for {k} bits", u.ncols())));
    }
    let uv = &u + &v;
    let mut q = sim_times(sim, uv.view()) * (-2.0 * k as f64);
    q.scaled_add(-2.0 * gamma, &uv);
    Ok(q)
}

/// Replaces column `c` of `B` with `−sign(2 B̂_c (Û_cᵀU_c + V̂_cᵀV_c) + Q_c)`.
///
/// Entries whose argument is exactly zero keep their bit. Returns the number
/// of flipped bits.
pub fn update_column(
    b: &mut CodeMatrix,
    c: usize,
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    q: ArrayView2<'_, f64>,
) -> Result<usize> {
    let (n, k) = (b.n(), b.k());
    if c >= k {
        return Err(Error::Index { index: c, len: k });
    }
    for (name, m) in [("U", u), ("V", v), ("Q", q)] {
        if m.dim() != (n, k) {
            return Err(shape_err(format!("{name} is {:?}, codes are {n}×{k}", m.dim())));
        }
    }
    // weights[c'] = U_c'ᵀU_c + V_c'ᵀV_c for c' ≠ c
    let uc = u.column(c);
    let vc = v.column(c);
    let mut weights: Array1<f64> = u.t().dot(&uc) + v.t().dot(&vc);
    weights[c] = 0.0;
    Ok(apply_column(b, c, weights.view(), q))
}

fn apply_column(
    b: &mut CodeMatrix,
    c: usize,
    weights: ndarray::ArrayView1<'_, f64>,
    q: ArrayView2<'_, f64>,
) -> usize {
    let k = b.k();
    let mut flips = 0;
    for i in 0..b.n() {
        let mut acc = 0.0;
        for cc in 0..k {
            if cc != c {
                acc += b.get(i, cc) * weights[cc];
            }
        }
        let arg = 2.0 * acc + q[[i, c]];
        let old = b.bit(i, c);
        let new = if arg > 0.0 {
            false
        } else if arg < 0.0 {
            true
        } else {
            old
        };
        if new != old {
            b.set(i, c, new);
            flips += 1;
        }
    }
    flips
}

/// Direct evaluation of `L(B)` with dense similarity blocks.
pub fn b_objective(
    b: &CodeMatrix,
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    sim: &SimilarityOracle,
    gamma: f64,
) -> Result<f64> {
    check_inputs(u, v, sim)?;
    if (b.n(), b.k()) != u.dim() {
        return Err(shape_err("codes and activations differ in shape"));
    }
    let n = b.n();
    let k = b.k() as f64;
    let bm = b.unpack();
    let mut total = 0.0;
    for start in (0..n).step_by(ROW_BLOCK) {
        let end = (start + ROW_BLOCK).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let s = sim.block(&rows);
        for m in [u, v] {
            let ip = m.slice(s![start..end, ..]).dot(&bm.t());
            total += ip
                .iter()
                .zip(s.iter())
                .map(|(&x, &sij)| (x - k * sij).powi(2))
                .sum::<f64>();
        }
    }
    total += gamma * ((&u - &bm).mapv(|x| x * x).sum() + (&v - &bm).mapv(|x| x * x).sum());
    Ok(total)
}

/// `L(B)` for fixed `U`, `V`, `S` through Gram matrices, `O(nk²)` per evaluation.
#[derive(Debug, Clone)]
pub struct BObjective {
    gram: Array2<f64>,
    linear: Array2<f64>,
    constant: f64,
}

impl BObjective {
    pub fn new(u: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>, sim: &SimilarityOracle, gamma: f64) -> Result<Self> {
        check_inputs(u, v, sim)?;
        let (n, k) = u.dim();
        let kf = k as f64;
        let gram = u.t().dot(&u) + v.t().dot(&v);
        let uv = &u + &v;
        // ⟨B, 2k·S(U+V) + 2γ(U+V)⟩ is subtracted
        let mut linear = sim_times(sim, uv.view()) * (2.0 * kf);
        linear.scaled_add(2.0 * gamma, &uv);
        // ‖S‖² = n² because every entry is ±1
        let constant = 2.0 * kf * kf * (n * n) as f64
            + gamma * (u.mapv(|x| x * x).sum() + v.mapv(|x| x * x).sum() + 2.0 * (n * k) as f64);
        Ok(Self { gram, linear, constant })
    }

    pub fn value(&self, b: &CodeMatrix) -> f64 {
        self.value_dense(b.unpack().view())
    }

    /// `L(B)` for any real `n × k` matrix, e.g. one with unset zero columns.
    pub fn value_dense(&self, bm: ArrayView2<'_, f64>) -> f64 {
        let btb = bm.t().dot(&bm);
        let quad: f64 = (&self.gram * &btb).sum();
        quad - (&bm * &self.linear).sum() + self.constant
    }
}

/// What one B-step did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BStepReport {
    pub sweeps_done: usize,
    /// Flipped bits per column update, in update order.
    pub flips: Vec<usize>,
    /// `L(B)` before the first update followed by its value after each
    /// column update; empty unless tracking was requested.
    pub objective_trace: Vec<f64>,
}

impl BStepReport {
    pub fn total_flips(&self) -> usize {
        self.flips.iter().sum()
    }

    /// Column updates whose objective rose by more than `rel_tol · |L|`.
    pub fn increases(&self, rel_tol: f64) -> usize {
        self.objective_trace
            .windows(2)
            .filter(|w| w[1] > w[0] + rel_tol * w[0].abs().max(1.0))
            .count()
    }
}

/// `hp.b_sweeps` passes over the columns `0..k`, recomputing `Q` once per pass.
pub fn b_step(
    b: &mut CodeMatrix,
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    sim: &SimilarityOracle,
    hp: &HyperParams,
) -> Result<BStepReport> {
    run_b_step(b, u, v, sim, hp, false)
}

/// As [`b_step`], also recording `L(B)` around every column update.
pub fn b_step_tracked(
    b: &mut CodeMatrix,
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    sim: &SimilarityOracle,
    hp: &HyperParams,
) -> Result<BStepReport> {
    run_b_step(b, u, v, sim, hp, true)
}

fn run_b_step(
    b: &mut CodeMatrix,
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    sim: &SimilarityOracle,
    hp: &HyperParams,
    track: bool,
) -> Result<BStepReport> {
    if (b.n(), b.k()) != u.dim() {
        return Err(shape_err(format!(
            "codes are {}×{} but activations are {:?}",
            b.n(),
            b.k(),
            u.dim()
        )));
    }
    let k = b.k();
    let tracker = if track {
        Some(BObjective::new(u, v, sim, hp.gamma)?)
    } else {
        None
    };
    let mut report = BStepReport::default();
    if let Some(t) = &tracker {
        report.objective_trace.push(t.value(b));
    }
    let gram = u.t().dot(&u) + v.t().dot(&v);
    for _ in 0..hp.b_sweeps {
        let q = compute_q(u, v, sim, k, hp.gamma)?;
        for c in 0..k {
            let mut weights = gram.column(c).to_owned();
            weights[c] = 0.0;
            let flips = apply_column(b, c, weights.view(), q.view());
            report.flips.push(flips);
            if let Some(t) = &tracker {
                report.objective_trace.push(t.value(b));
            }
        }
        report.sweeps_done += 1;
    }
    Ok(report)
}

/// The first code step, starting from `B = 0`.
///
/// During the first pass, columns not yet visited are still zero and add
/// nothing to the update argument; a zero argument gives `+1`. Any further
/// passes up to `hp.b_sweeps` run as in [`b_step`]. The first pass assigns
/// bits rather than flipping them, so `flips` counts every bit for it and the
/// tracked trace only covers the later passes, starting from the packed codes.
pub fn b_step_from_zero(
    u: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    sim: &SimilarityOracle,
    hp: &HyperParams,
    track: bool,
) -> Result<(CodeMatrix, BStepReport)> {
    check_inputs(u, v, sim)?;
    let (n, k) = u.dim();
    if k != hp.k {
        return Err(shape_err(format!("activations have {k} columns for {} bits", hp.k)));
    }
    let mut report = BStepReport::default();
    let mut dense = Array2::<f64>::zeros((n, k));
    let gram = u.t().dot(&u) + v.t().dot(&v);
    let q = compute_q(u, v, sim, k, hp.gamma)?;
    for c in 0..k {
        let mut weights = gram.column(c).to_owned();
        weights[c] = 0.0;
        let arg = dense.dot(&weights) * 2.0 + q.column(c);
        for (i, &a) in arg.iter().enumerate() {
            dense[[i, c]] = if a > 0.0 { -1.0 } else { 1.0 };
        }
        report.flips.push(n);
    }
    report.sweeps_done = 1;
    let mut b = CodeMatrix::pack(dense.view())?;
    if hp.b_sweeps > 1 {
        let rest = HyperParams {
            b_sweeps: hp.b_sweeps - 1,
            ..hp.clone()
        };
        let more = run_b_step(&mut b, u, v, sim, &rest, track)?;
        report.sweeps_done += more.sweeps_done;
        report.flips.extend(more.flips);
        report.objective_trace = more.objective_trace;
    }
    Ok((b, report))
}

/// `sign(γ(U + V))` with `sign(0) = +1`.
pub fn b_step_symmetric(u: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>, gamma: f64) -> Result<CodeMatrix> {
    if u.dim() != v.dim() {
        return Err(shape_err(format!("U is {:?} but V is {:?}", u.dim(), v.dim())));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("symmetric code update needs gamma > 0, got {gamma}")));
    }
    let mut arg = &u + &v;
    arg *= gamma;
    Ok(CodeMatrix::from_signs(arg.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(n: usize, k: usize, seed: u64) -> (Array2<f64>, Array2<f64>, CodeMatrix, SimilarityOracle) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Array2::from_shape_fn((n, k), |_| rng.random_range(-1.0..1.0));
        let v = Array2::from_shape_fn((n, k), |_| rng.random_range(-1.0..1.0));
        let bm = Array2::from_shape_fn((n, k), |_| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let labels = (0..n).map(|_| vec![rng.random_range(0..3u32)]).collect();
        (u, v, CodeMatrix::pack(bm.view()).unwrap(), SimilarityOracle::new(labels).unwrap())
    }

    #[test]
    fn q_examples() {
        let sim = SimilarityOracle::new(vec![vec![0], vec![1]]).unwrap();
        let z = Array2::zeros((2, 3));
        assert_eq!(compute_q(z.view(), z.view(), &sim, 3, 5.0).unwrap(), z);

        let sim = SimilarityOracle::new(vec![vec![0]]).unwrap();
        let h = array![[0.5]];
        assert_eq!(compute_q(h.view(), h.view(), &sim, 1, 0.0).unwrap(), array![[-2.0]]);
    }

    #[test]
    fn q_gamma_part_is_linear() {
        let (u, v, _, sim) = instance(5, 3, 1);
        let q1 = compute_q(u.view(), v.view(), &sim, 3, 1.0).unwrap();
        let q2 = compute_q(u.view(), v.view(), &sim, 3, 2.0).unwrap();
        let expected = (&u + &v) * -2.0;
        for (d, e) in (&q2 - &q1).iter().zip(expected.iter()) {
            assert!((d - e).abs() < 1e-12);
        }
    }

    #[test]
    fn single_bit_column_is_negated_sign_of_q() {
        let (u, v, mut b, sim) = instance(6, 1, 2);
        let q = compute_q(u.view(), v.view(), &sim, 1, 3.0).unwrap();
        update_column(&mut b, 0, u.view(), v.view(), q.view()).unwrap();
        for i in 0..6 {
            assert_eq!(b.get(i, 0), if q[[i, 0]] > 0.0 { -1.0 } else { 1.0 });
        }
    }

    #[test]
    fn zero_argument_keeps_bits() {
        let n = 4;
        let z = Array2::zeros((n, 3));
        let mut b = CodeMatrix::pack(array![[1.0, -1.0, 1.0], [-1.0, -1.0, 1.0], [1.0, 1.0, 1.0], [-1.0, 1.0, -1.0]].view()).unwrap();
        let before = b.clone();
        for c in 0..3 {
            assert_eq!(update_column(&mut b, c, z.view(), z.view(), z.view()).unwrap(), 0);
        }
        assert_eq!(b, before);
    }

    #[test]
    fn column_index_checked() {
        let (u, v, mut b, _) = instance(3, 2, 3);
        let q = Array2::zeros((3, 2));
        assert!(matches!(
            update_column(&mut b, 2, u.view(), v.view(), q.view()),
            Err(Error::Index { index: 2, len: 2 })
        ));
    }

    #[test]
    fn gram_objective_matches_direct() {
        for seed in 0..10 {
            let (u, v, b, sim) = instance(7, 4, seed);
            let direct = b_objective(&b, u.view(), v.view(), &sim, 2.5).unwrap();
            let gram = BObjective::new(u.view(), v.view(), &sim, 2.5).unwrap().value(&b);
            assert!((direct - gram).abs() < 1e-9 * direct.abs(), "{direct} vs {gram}");
        }
    }

    #[test]
    fn column_update_is_optimal_by_enumeration() {
        let (n, k) = (6, 3);
        for seed in 0..20 {
            let (u, v, b, sim) = instance(n, k, 100 + seed);
            let gamma = 1.0 + seed as f64;
            let q = compute_q(u.view(), v.view(), &sim, k, gamma).unwrap();
            for c in 0..k {
                let mut best = f64::INFINITY;
                for mask in 0..(1u32 << n) {
                    let mut trial = b.clone();
                    for i in 0..n {
                        trial.set(i, c, mask >> i & 1 == 1);
                    }
                    best = best.min(b_objective(&trial, u.view(), v.view(), &sim, gamma).unwrap());
                }
                let mut updated = b.clone();
                update_column(&mut updated, c, u.view(), v.view(), q.view()).unwrap();
                let got = b_objective(&updated, u.view(), v.view(), &sim, gamma).unwrap();
                assert!((got - best).abs() <= 1e-9 * best.abs(), "seed {seed} col {c}: {got} vs {best}");
            }
        }
    }

    #[test]
    fn b_step_is_monotone_and_idempotent_at_fixed_points() {
        let hp = HyperParams { k: 4, gamma: 10.0, b_sweeps: 1, ..Default::default() };
        let (u, v, mut b, sim) = instance(8, 4, 9);
        for _ in 0..10 {
            let report = b_step_tracked(&mut b, u.view(), v.view(), &sim, &hp).unwrap();
            assert_eq!(report.sweeps_done, 1);
            assert_eq!(report.flips.len(), 4);
            assert_eq!(report.increases(1e-12), 0);
            if report.total_flips() == 0 {
                let again = b_step(&mut b, u.view(), v.view(), &sim, &hp).unwrap();
                assert_eq!(again.total_flips(), 0);
                return;
            }
        }
        panic!("no fixed point reached within 10 sweeps");
    }

    #[test]
    fn global_optimum_is_a_fixed_point() {
        let (n, k) = (4, 3);
        let hp = HyperParams { k, gamma: 5.0, ..Default::default() };
        for seed in 0..5 {
            let (u, v, _, sim) = instance(n, k, 300 + seed);
            let mut best = (f64::INFINITY, 0u32);
            for mask in 0..(1u32 << (n * k)) {
                let b = CodeMatrix::from_words(n, k, (0..n).map(|i| ((mask >> (i * k)) & 0b111) as u64).collect()).unwrap();
                let val = b_objective(&b, u.view(), v.view(), &sim, hp.gamma).unwrap();
                if val < best.0 {
                    best = (val, mask);
                }
            }
            let mask = best.1;
            let mut b = CodeMatrix::from_words(n, k, (0..n).map(|i| ((mask >> (i * k)) & 0b111) as u64).collect()).unwrap();
            b_step(&mut b, u.view(), v.view(), &sim, &hp).unwrap();
            let after = b_objective(&b, u.view(), v.view(), &sim, hp.gamma).unwrap();
            assert!((after - best.0).abs() <= 1e-9 * best.0.abs());
        }
    }

    #[test]
    fn symmetric_update() {
        let u = array![[0.3, -0.5]];
        let v = array![[0.2, 0.3]];
        assert_eq!(b_step_symmetric(u.view(), v.view(), 100.0).unwrap().row_string(0), "10");
        let u = array![[0.4, -0.7, 0.0]];
        let v = -&u;
        assert_eq!(b_step_symmetric(u.view(), v.view(), 1.0).unwrap().row_string(0), "111");
        let (u, v, _, _) = instance(5, 6, 4);
        assert_eq!(
            b_step_symmetric(u.view(), v.view(), 0.01).unwrap(),
            b_step_symmetric(u.view(), v.view(), 1e4).unwrap()
        );
        assert!(b_step_symmetric(u.view(), v.view(), 0.0).is_err());
    }

    #[test]
    fn zero_start_columns_are_exact_minimisers() {
        // with earlier columns fixed and later ones still zero, each column
        // of the first pass minimises L over all 2^n sign patterns
        for seed in 0..10 {
            let (n, k) = (6, 3);
            let (u, v, _, sim) = instance(n, k, 100 + seed);
            let hp = HyperParams { k, gamma: 2.0, ..Default::default() };
            let (b, report) = b_step_from_zero(u.view(), v.view(), &sim, &hp, true).unwrap();
            assert_eq!(report.flips, vec![n; k]);
            assert!(report.objective_trace.is_empty());
            let obj = BObjective::new(u.view(), v.view(), &sim, hp.gamma).unwrap();
            let target = b.unpack();
            let mut dense = Array2::<f64>::zeros((n, k));
            for c in 0..k {
                let mut best = f64::INFINITY;
                for mask in 0u32..(1 << n) {
                    for i in 0..n {
                        dense[[i, c]] = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                    }
                    best = best.min(obj.value_dense(dense.view()));
                }
                dense.column_mut(c).assign(&target.column(c));
                let got = obj.value_dense(dense.view());
                assert!(got <= best + 1e-9 * best.abs().max(1.0), "seed {seed} column {c}: {got} vs {best}");
            }
        }
    }

    #[test]
    fn zero_start_extra_sweeps_match_b_step() {
        let (u, v, _, sim) = instance(9, 4, 7);
        let one = HyperParams { k: 4, gamma: 1.5, ..Default::default() };
        let three = HyperParams { b_sweeps: 3, ..one.clone() };
        let (mut b, _) = b_step_from_zero(u.view(), v.view(), &sim, &one, false).unwrap();
        b_step(&mut b, u.view(), v.view(), &sim, &HyperParams { b_sweeps: 2, ..one.clone() }).unwrap();
        let (b3, report) = b_step_from_zero(u.view(), v.view(), &sim, &three, true).unwrap();
        assert_eq!(b, b3);
        assert_eq!(report.sweeps_done, 3);
        assert_eq!(report.objective_trace.len(), 1 + 2 * 4);
        assert_eq!(report.increases(1e-12), 0);
    }
}
