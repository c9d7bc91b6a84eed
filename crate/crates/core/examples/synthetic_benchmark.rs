//! Train on the Gaussian-cluster benchmark and compare against LSH.
//!
//! ```text
//! cargo run --release --example synthetic_benchmark [seed]
//! ```

use dadh::benchmark::{encode_split, encode_split_lsh, BenchmarkSpec};
use dadh::retrieval::StreamChoice;
use dadh::{stream_agreement, HyperParams, TrainOptions, Trainer};

fn main() -> dadh::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let (ds, split) = BenchmarkSpec::default().build()?;
    let hp = HyperParams { seed, ..Default::default() };

    let mut trainer = Trainer::new(&ds, &split, &hp, &TrainOptions::default())?;
    let start = std::time::Instant::now();
    println!("iter  total        asym         pairwise     quant        balance      flips");
    while !trainer.is_done() {
        let r = trainer.step()?;
        let l = &r.loss;
        if r.iter < 5 || r.iter % 10 == 0 {
            println!(
                "{:4}  {:.5e}  {:.5e}  {:.5e}  {:.5e}  {:.5e}  {:5}",
                r.iter,
                l.total,
                l.asym_f + l.asym_g,
                l.pairwise,
                l.quant_f + l.quant_g,
                l.balance,
                r.b_flips
            );
        }
    }
    let state = trainer.into_state();
    println!(
        "{} iterations in {:.1}s{}",
        state.iter,
        start.elapsed().as_secs_f64(),
        if state.converged { " (loss settled)" } else { "" }
    );

    for stream in [StreamChoice::Fused, StreamChoice::F, StreamChoice::G] {
        let map = encode_split(&ds, &split, &state, stream)?.map()?;
        println!("{:<6} MAP {map:.4}", format!("{stream:?}"));
    }
    println!("LSH    MAP {:.4}", encode_split_lsh(&ds, &split, &hp)?.map()?);
    let agree = stream_agreement(&state, ds.select(&split.query)?.view())?;
    println!("stream bit agreement on queries: {:.1}%", 100.0 * agree);
    Ok(())
}
