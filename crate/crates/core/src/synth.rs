//! Gaussian-cluster benchmark data.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::FeatureDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Standard deviation of the isotropic noise around each centre.
    pub sigma: f64,
    pub seed: u64,
}

/// `classes × per_class` samples, each its class centre plus Gaussian noise.
///
/// Centres lie uniformly on the unit sphere. Sample `i` belongs to class
/// `i / per_class` and carries that single label. Values are rounded to `f32`
/// precision so that the binary feature file stores them exactly.
pub fn gaussian_clusters(spec: &SynthSpec) -> Result<FeatureDataset> {
    if spec.classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    if spec.per_class == 0 || spec.dim == 0 {
        return Err(Error::Config("per_class and dim must be at least 1".into()));
    }
    if !(spec.sigma >= 0.0 && spec.sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be finite and >= 0, got {}", spec.sigma)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut centers = Array2::<f64>::from_shape_fn((spec.classes, spec.dim), |_| StandardNormal.sample(&mut rng));
    for mut row in centers.rows_mut() {
        let norm = row.dot(&row).sqrt().max(f64::MIN_POSITIVE);
        row /= norm;
    }
    let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let n = spec.classes * spec.per_class;
    let mut features = Array2::zeros((n, spec.dim));
    let mut labels = Vec::with_capacity(n);
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        let class = i / spec.per_class;
        for (x, &c) in row.iter_mut().zip(centers.row(class)) {
            let v = if spec.sigma > 0.0 { c + noise.sample(&mut rng) } else { c };
            *x = v as f32 as f64;
        }
        labels.push(vec![class as u32]);
    }
    FeatureDataset::new(features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinality_and_determinism() {
        let spec = SynthSpec { classes: 10, per_class: 60, dim: 128, sigma: 0.15, seed: 1 };
        let ds = gaussian_clusters(&spec).unwrap();
        assert_eq!(ds.len(), 600);
        assert_eq!(ds.dim(), 128);
        assert_eq!(ds, gaussian_clusters(&spec).unwrap());
        assert_eq!(ds.labels()[59], vec![0]);
        assert_eq!(ds.labels()[60], vec![1]);
    }

    #[test]
    fn noiseless_samples_sit_on_centres() {
        let spec = SynthSpec { classes: 3, per_class: 4, dim: 5, sigma: 0.0, seed: 2 };
        let ds = gaussian_clusters(&spec).unwrap();
        for class in 0..3 {
            let first = ds.features().row(class * 4);
            for j in 1..4 {
                assert_eq!(ds.features().row(class * 4 + j), first);
            }
            let norm = first.dot(&first).sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_degenerate_specs() {
        let base = SynthSpec { classes: 2, per_class: 1, dim: 1, sigma: 0.1, seed: 0 };
        assert!(gaussian_clusters(&SynthSpec { classes: 1, ..base }).is_err());
        assert!(gaussian_clusters(&SynthSpec { per_class: 0, ..base }).is_err());
        assert!(gaussian_clusters(&SynthSpec { sigma: -1.0, ..base }).is_err());
    }
}
