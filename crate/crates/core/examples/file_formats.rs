//! Write and read back every file format: features, labels, split,
//! checkpoint and codes.

use dadh::benchmark::BenchmarkSpec;
use dadh::io;
use dadh::retrieval::{encode_batch, StreamChoice};
use dadh::MlpEncoder;

fn main() -> dadh::Result<()> {
    let dir = std::env::temp_dir().join(format!("dadh-formats-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let (ds, split) = BenchmarkSpec::default().build()?;

    let feats = dir.join("features.bin");
    io::save_features(&feats, ds.features())?;
    assert_eq!(&io::load_features(&feats)?, ds.features());
    let labels = dir.join("labels.txt");
    io::save_labels(&labels, ds.labels())?;
    assert_eq!(io::load_labels(&labels)?, ds.labels());
    let split_path = dir.join("split.json");
    io::save_split(&split_path, &split)?;
    assert_eq!(io::load_split(&split_path)?, split);

    let f = MlpEncoder::init(&[ds.dim(), 64, 16], 1)?;
    let g = MlpEncoder::init(&[ds.dim(), 64, 16], 2)?;
    let ckpt = dir.join("model.ckpt");
    io::save_checkpoint(&ckpt, &f, &g)?;
    let (f2, g2) = io::load_checkpoint(&ckpt)?;
    assert!(f == f2 && g == g2);

    let codes = encode_batch(ds.features().view(), &f, &g, StreamChoice::Fused)?;
    let codes_path = dir.join("codes.bin");
    io::save_codes(&codes_path, &codes)?;
    assert_eq!(io::load_codes(&codes_path)?, codes);

    for p in [&feats, &labels, &split_path, &ckpt, &codes_path] {
        let size = std::fs::metadata(p)?.len();
        println!("{:<14} {size:>8} bytes  sha256 {}", p.file_name().unwrap().to_string_lossy(), &io::sha256_file(p)?[..16]);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
