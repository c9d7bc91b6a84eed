//! Random-hyperplane LSH on the benchmark at several code lengths.

use dadh::benchmark::{encode_split_lsh, BenchmarkSpec};
use dadh::HyperParams;

fn main() -> dadh::Result<()> {
    let (ds, split) = BenchmarkSpec::default().build()?;
    for k in [8, 16, 32, 64, 128] {
        let hp = HyperParams { k, ..Default::default() };
        let map = encode_split_lsh(&ds, &split, &hp)?.map()?;
        println!("k = {k:3}  MAP {map:.4}");
    }
    Ok(())
}
