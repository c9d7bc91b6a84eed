//! Central finite differences of the loss against the analytic stream gradients.

use ndarray::{Array2, ArrayView2};

use crate::codes::CodeMatrix;
use crate::data::SimilarityOracle;
use crate::error::Result;
use crate::objective::{loss_with, stream_grad_rows, Variant};
use crate::params::HyperParams;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Analytic `∂L/∂F` and `∂L/∂G`.
    pub analytic: [Array2<f64>; 2],
    pub numeric: [Array2<f64>; 2],
    /// Largest entrywise `|a − n| / max(|a|, |n|, floor)`, where `floor` is
    /// 1e-3 of the largest gradient magnitude.
    pub max_rel_err: f64,
}

/// Compares both stream gradients at raw outputs `F`, `G` (relaxed by `tanh`)
/// with central differences of step `eps`.
pub fn check_gradients(
    f: ArrayView2<'_, f64>,
    g: ArrayView2<'_, f64>,
    b: &CodeMatrix,
    sim: &SimilarityOracle,
    hp: &HyperParams,
    variant: Variant,
    eps: f64,
) -> Result<GradCheck> {
    let u = f.mapv(f64::tanh);
    let v = g.mapv(f64::tanh);
    let all: Vec<usize> = (0..f.nrows()).collect();
    let analytic = [
        stream_grad_rows(&all, u.view(), v.view(), b, sim, hp, variant)?,
        stream_grad_rows(&all, v.view(), u.view(), b, sim, hp, variant)?,
    ];

    let loss = |f: &Array2<f64>, g: &Array2<f64>| -> Result<f64> {
        Ok(loss_with(f.mapv(f64::tanh).view(), g.mapv(f64::tanh).view(), b, sim, hp, variant)?.total)
    };
    let mut numeric = [Array2::zeros(f.dim()), Array2::zeros(f.dim())];
    let (mut fp, mut gp) = (f.to_owned(), g.to_owned());
    for (s, num) in numeric.iter_mut().enumerate() {
        for idx in ndarray::indices(f.dim()) {
            let target = if s == 0 { &mut fp } else { &mut gp };
            let x0 = target[idx];
            target[idx] = x0 + eps;
            let up = loss(&fp, &gp)?;
            let target = if s == 0 { &mut fp } else { &mut gp };
            target[idx] = x0 - eps;
            let down = loss(&fp, &gp)?;
            let target = if s == 0 { &mut fp } else { &mut gp };
            target[idx] = x0;
            num[idx] = (up - down) / (2.0 * eps);
        }
    }

    let scale = analytic
        .iter()
        .chain(numeric.iter())
        .flat_map(|m| m.iter())
        .fold(0.0f64, |a, &x| a.max(x.abs()));
    let floor = (1e-3 * scale).max(f64::MIN_POSITIVE);
    let mut max_rel_err = 0.0f64;
    for s in 0..2 {
        for (&a, &n) in analytic[s].iter().zip(numeric[s].iter()) {
            max_rel_err = max_rel_err.max((a - n).abs() / a.abs().max(n.abs()).max(floor));
        }
    }
    Ok(GradCheck {
        analytic,
        numeric,
        max_rel_err,
    })
}
