//! Packed Hamming search over random codes, checked against a naive scan of
//! the unpacked `±1` matrix.

use dadh::retrieval::{hamming, HammingIndex};
use dadh::CodeMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dadh::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, k) = (1000, 64);
    let signs = Array2::from_shape_fn((n, k), |_| if rng.random::<bool>() { 1.0 } else { -1.0 });
    let codes = CodeMatrix::pack(signs.view())?;
    let ids: Vec<usize> = (0..n).map(|i| 10_000 + i).collect();
    let index = HammingIndex::with_ids(codes.clone(), ids)?;

    let query = codes.row_words(17);
    let start = std::time::Instant::now();
    let hits = index.search(query, 5)?;
    println!("top 5 for row 17 in {:?}:", start.elapsed());
    for h in &hits.hits {
        println!("  id {} at distance {}", h.id, h.distance);
    }

    // d_H = (k − ⟨a, b⟩) / 2
    let naive: Vec<u32> = (0..n)
        .map(|j| {
            let ip: f64 = signs.row(17).dot(&signs.row(j));
            ((k as f64 - ip) / 2.0) as u32
        })
        .collect();
    let packed: Vec<u32> = (0..n).map(|j| hamming(query, codes.row_words(j), k)).collect::<Result<_, _>>()?;
    println!("packed distances equal the inner-product form: {}", naive == packed);
    Ok(())
}
