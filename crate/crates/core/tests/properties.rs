use dadh::codes::CodeMatrix;
use dadh::gradcheck::check_gradients;
use dadh::lsh::LshModel;
use dadh::retrieval::{encode_batch, hamming, HammingIndex, StreamChoice};
use dadh::solver::{b_objective, compute_q, update_column};
use dadh::{HyperParams, MlpEncoder, SimilarityOracle, Variant};
use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sign_matrix(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, k), |_| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

fn uniform(n: usize, k: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, k), |_| rng.random_range(lo..hi))
}

fn oracle(n: usize, classes: u32, rng: &mut ChaCha8Rng) -> SimilarityOracle {
    SimilarityOracle::new((0..n).map(|_| vec![rng.random_range(0..classes)]).collect()).unwrap()
}

fn inner(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, i: usize, j: usize) -> f64 {
    a.row(i).dot(&b.row(j))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pack_unpack_roundtrip(seed in any::<u64>(), n in 1usize..12, k in 1usize..140) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = sign_matrix(n, k, &mut rng);
        let c = CodeMatrix::pack(m.view()).unwrap();
        prop_assert_eq!(c.unpack(), m);
    }

    #[test]
    fn hamming_matches_inner_product(seed in any::<u64>(), k in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = sign_matrix(2, k, &mut rng);
        let c = CodeMatrix::pack(m.view()).unwrap();
        let d = hamming(c.row_words(0), c.row_words(1), k).unwrap() as f64;
        prop_assert_eq!(d, 0.5 * (k as f64 - inner(m.view(), m.view(), 0, 1)));
    }

    #[test]
    fn search_result_invariant_under_row_permutation(seed in any::<u64>(), n in 1usize..40, k in 1usize..70, topk in 1usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = sign_matrix(n, k, &mut rng);
        let q = CodeMatrix::pack(sign_matrix(1, k, &mut rng).view()).unwrap();
        let ids: Vec<usize> = (0..n).map(|i| 3 * i + 1).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let shuffled = Array2::from_shape_fn((n, k), |(i, c)| m[[perm[i], c]]);
        let shuffled_ids: Vec<usize> = perm.iter().map(|&p| ids[p]).collect();

        let a = HammingIndex::with_ids(CodeMatrix::pack(m.view()).unwrap(), ids).unwrap();
        let b = HammingIndex::with_ids(CodeMatrix::pack(shuffled.view()).unwrap(), shuffled_ids).unwrap();
        let ra = a.search(q.row_words(0), topk).unwrap();
        let rb = b.search(q.row_words(0), topk).unwrap();
        prop_assert_eq!(ra.len(), topk.min(n));
        let key = |r: &dadh::retrieval::RetrievalResult| r.hits.iter().map(|h| (h.id, h.distance)).collect::<Vec<_>>();
        prop_assert_eq!(key(&ra), key(&rb));
        prop_assert!(ra.hits.windows(2).all(|w| (w[0].distance, w[0].id) < (w[1].distance, w[1].id)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn stream_gradients_match_finite_differences(seed in any::<u64>(), n in 2usize..7, k in 1usize..6, full in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = uniform(n, k, -1.5, 1.5, &mut rng);
        let g = uniform(n, k, -1.5, 1.5, &mut rng);
        let b = CodeMatrix::pack(sign_matrix(n, k, &mut rng).view()).unwrap();
        let sim = oracle(n, 3, &mut rng);
        let hp = HyperParams { k, ..Default::default() };
        let variant = if full { Variant::Full } else { Variant::Ablated };
        let check = check_gradients(f.view(), g.view(), &b, &sim, &hp, variant, 1e-5).unwrap();
        prop_assert!(check.max_rel_err < 1e-5, "relative error {}", check.max_rel_err);
    }

    #[test]
    fn column_update_minimises_over_the_column(seed in any::<u64>(), n in 1usize..8, k in 1usize..5, gamma in prop::sample::select(vec![0.0, 1.0, 100.0])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = uniform(n, k, -1.0, 1.0, &mut rng);
        let v = uniform(n, k, -1.0, 1.0, &mut rng);
        let sim = oracle(n, 2, &mut rng);
        let q = compute_q(u.view(), v.view(), &sim, k, gamma).unwrap();
        let mut b = CodeMatrix::pack(sign_matrix(n, k, &mut rng).view()).unwrap();
        let c = rng.random_range(0..k);
        update_column(&mut b, c, u.view(), v.view(), q.view()).unwrap();
        let got = b_objective(&b, u.view(), v.view(), &sim, gamma).unwrap();

        let mut best = f64::INFINITY;
        let mut trial = b.clone();
        for mask in 0u32..(1 << n) {
            for i in 0..n {
                trial.set(i, c, mask >> i & 1 == 1);
            }
            best = best.min(b_objective(&trial, u.view(), v.view(), &sim, gamma).unwrap());
        }
        prop_assert!(got <= best + 1e-9 * best.abs().max(1.0), "column value {got}, enumerated best {best}");
    }
}

#[test]
fn lsh_bit_disagreement_tracks_angle() {
    let bits = 10_000;
    for (seed, theta) in [(0u64, 0.3f64), (1, 1.0), (2, std::f64::consts::FRAC_PI_2), (3, 2.5)] {
        let model = LshModel::fit(3, bits, seed).unwrap();
        let x = Array2::from_shape_vec((2, 3), vec![1.0, 0.0, 0.0, theta.cos(), theta.sin(), 0.0]).unwrap();
        let codes = model.encode_batch(x.view()).unwrap();
        let d = hamming(codes.row_words(0), codes.row_words(1), bits).unwrap() as f64;
        let rate = d / bits as f64;
        let expected = theta / std::f64::consts::PI;
        assert!((rate - expected).abs() <= 0.05, "θ = {theta}: disagreement {rate}, θ/π = {expected}");
    }
}

#[test]
fn single_stream_codes_equal_fused_when_streams_agree() {
    let f = MlpEncoder::init(&[6, 8, 12], 5).unwrap();
    let g = f.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = uniform(20, 6, -1.0, 1.0, &mut rng);
    let fused = encode_batch(x.view(), &f, &g, StreamChoice::Fused).unwrap();
    assert_eq!(encode_batch(x.view(), &f, &g, StreamChoice::F).unwrap(), fused);
    assert_eq!(encode_batch(x.view(), &f, &g, StreamChoice::G).unwrap(), fused);
}
