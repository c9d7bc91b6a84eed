//! Full objective against the variant without the code/feature inner-product
//! terms, tracking query MAP after every iteration.
//!
//! ```text
//! cargo run --release --example ablation [seed]
//! ```

use dadh::benchmark::{encode_split, BenchmarkSpec};
use dadh::retrieval::StreamChoice;
use dadh::{FeatureDataset, HyperParams, Split, TrainOptions, Trainer, Variant};

/// Query MAP after each iteration.
fn map_curve(ds: &FeatureDataset, split: &Split, hp: &HyperParams, variant: Variant) -> dadh::Result<Vec<f64>> {
    let opts = TrainOptions { variant, ..Default::default() };
    let mut trainer = Trainer::new(ds, split, hp, &opts)?;
    let mut curve = Vec::new();
    while !trainer.is_done() {
        trainer.step()?;
        curve.push(encode_split(ds, split, trainer.state(), StreamChoice::Fused)?.map()?);
    }
    Ok(curve)
}

/// First iteration whose MAP is within 2% of the final value.
fn settle_iter(curve: &[f64]) -> usize {
    let last = *curve.last().unwrap();
    curve.iter().position(|&m| m >= 0.98 * last).unwrap()
}

fn main() -> dadh::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let (ds, split) = BenchmarkSpec::default().build()?;
    let hp = HyperParams { seed, ..Default::default() };

    let full = map_curve(&ds, &split, &hp, Variant::Full)?;
    let ablated = map_curve(&ds, &split, &hp, Variant::Ablated)?;
    let width = full.len().max(ablated.len());
    println!("iter  full    ablated");
    for t in (0..width).filter(|t| t % 5 == 0 || *t + 1 == width) {
        let cell = |c: &[f64]| c.get(t).map_or("   -  ".to_string(), |m| format!("{m:.4}"));
        println!("{t:4}  {}  {}", cell(&full), cell(&ablated));
    }
    for (name, c) in [("full", &full), ("ablated", &ablated)] {
        println!(
            "{name:<8} final MAP {:.4} after {} iterations, within 2% from iteration {}",
            c.last().unwrap(),
            c.len(),
            settle_iter(c)
        );
    }
    Ok(())
}
