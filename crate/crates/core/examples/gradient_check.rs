//! Analytic stream gradients against central finite differences of the loss.

use dadh::gradcheck::check_gradients;
use dadh::{CodeMatrix, HyperParams, SimilarityOracle, Variant};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dadh::Result<()> {
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let n = rng.random_range(2..=12);
        let k = rng.random_range(1..=8);
        let f = Array2::from_shape_fn((n, k), |_| rng.random_range(-2.0..2.0));
        let g = Array2::from_shape_fn((n, k), |_| rng.random_range(-2.0..2.0));
        let signs = Array2::from_shape_fn((n, k), |_| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let b = CodeMatrix::pack(signs.view())?;
        let labels = (0..n).map(|_| vec![rng.random_range(0..3)]).collect();
        let sim = SimilarityOracle::new(labels)?;
        let hp = HyperParams { k, ..Default::default() };
        let check = check_gradients(f.view(), g.view(), &b, &sim, &hp, Variant::Full, 1e-5)?;
        println!("trial {trial:2}  n={n:2} k={k}  max rel err {:.2e}", check.max_rel_err);
        worst = worst.max(check.max_rel_err);
    }
    println!("worst {worst:.2e}");
    Ok(())
}
