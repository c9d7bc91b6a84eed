//! One column update is the exact minimiser over that column: compare it with
//! enumeration of all 2^n bit patterns, then watch a few sweeps descend.

use dadh::solver::{b_step_tracked, compute_q, update_column, BObjective};
use dadh::{CodeMatrix, HyperParams, SimilarityOracle};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dadh::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, k, gamma) = (8, 4, 100.0);
    let u = Array2::from_shape_fn((n, k), |_| rng.random_range(-1.0..1.0));
    let v = Array2::from_shape_fn((n, k), |_| rng.random_range(-1.0..1.0));
    let signs = Array2::from_shape_fn((n, k), |_| if rng.random::<bool>() { 1.0 } else { -1.0 });
    let start = CodeMatrix::pack(signs.view())?;
    let sim = SimilarityOracle::new((0..n).map(|i| vec![(i % 3) as u32]).collect())?;
    let objective = BObjective::new(u.view(), v.view(), &sim, gamma)?;

    let c = 2;
    let mut best = f64::INFINITY;
    let mut probe = start.clone();
    for mask in 0u32..1 << n {
        for i in 0..n {
            probe.set(i, c, mask >> i & 1 == 1);
        }
        best = best.min(objective.value(&probe));
    }
    let mut b = start.clone();
    let q = compute_q(u.view(), v.view(), &sim, k, gamma)?;
    let flips = update_column(&mut b, c, u.view(), v.view(), q.view())?;
    println!("column {c}: {flips} flips, objective {:.6} (enumerated minimum {best:.6})", objective.value(&b));

    let hp = HyperParams { k, gamma, b_sweeps: 3, ..Default::default() };
    let mut b = start;
    let report = b_step_tracked(&mut b, u.view(), v.view(), &sim, &hp)?;
    for (step, value) in report.objective_trace.iter().enumerate() {
        println!("after {step:2} column updates: {value:.6}");
    }
    println!("increases: {}", report.increases(1e-12));
    Ok(())
}
