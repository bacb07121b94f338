//! Row-wise normalization math.
//!
//! Each node's feature row is treated as a distribution over its feature
//! dimensions: mean `mu_i`, population variance `var_i = (1/d) * sum_j
//! (h_ij - mu_i)^2`, standard deviation `sigma_i`.
//!
//! * **Node normalization** with exponent `p >= 1` divides the row by
//!   `sigma_i^{1/p}`, scaling the row standard deviation to `sigma_i^{1-1/p}`
//!   (exactly 1 when `p = 1`). Rows with `sigma_i` below a small epsilon are
//!   passed through unchanged.
//! * **Layer normalization** comes in three flavors: the full form
//!   `alpha ⊙ (h - mu)/sigma + beta` with learnable row-broadcast parameters,
//!   the star form without the affine part, and the mean-subtraction form
//!   `h - mu`.
//!
//! This module holds the pure forward math; gradient bookkeeping lives in the
//! autodiff ops, which call into these functions so there is a single source
//! of truth for the formulas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Rows whose standard deviation falls below this are considered degenerate:
/// node normalization passes them through and layer normalization clamps the
/// divisor to epsilon.
pub const SIGMA_EPS: f64 = 1e-6;

/// Which normalization a model layer applies, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// No normalization.
    None,
    /// Divide each row by `sigma^{1/p}`.
    NodeNorm { p: u32 },
    /// Full layer normalization with learnable scale and shift.
    LayerNorm,
    /// Layer normalization without the affine part.
    LayerNormStar,
    /// Mean subtraction only.
    LayerNormMs,
}

impl NormKind {
    /// Whether this kind carries learnable per-layer parameters.
    pub fn has_affine_params(&self) -> bool {
        matches!(self, NormKind::LayerNorm)
    }

    /// Validate parameters that arrive from configuration files.
    pub fn validate(&self) -> Result<()> {
        if let NormKind::NodeNorm { p } = self {
            if *p < 1 {
                return Err(Error::Config("node_norm requires p >= 1".into()));
            }
        }
        Ok(())
    }

    /// Short lowercase token used in CSV reports and file names.
    pub fn token(&self) -> String {
        match self {
            NormKind::None => "none".into(),
            NormKind::NodeNorm { p } => format!("nodenorm{p}"),
            NormKind::LayerNorm => "layernorm".into(),
            NormKind::LayerNormStar => "layernorm-star".into(),
            NormKind::LayerNormMs => "layernorm-ms".into(),
        }
    }
}

/// Mean and population standard deviation of one row.
#[derive(Debug, Clone, Copy)]
pub struct RowStats {
    pub mean: f64,
    pub var: f64,
    pub std: f64,
}

/// Compute mean and population variance/std of a slice.
///
/// The divisor is the row length `d`, not `d - 1`; a constant row has
/// variance exactly 0.
pub fn row_stats(row: &[f64]) -> RowStats {
    let d = row.len() as f64;
    if row.is_empty() {
        return RowStats { mean: 0.0, var: 0.0, std: 0.0 };
    }
    let mean = row.iter().sum::<f64>() / d;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / d;
    RowStats { mean, var, std: var.sqrt() }
}

/// Per-row bookkeeping produced by the normalization forward passes and
/// consumed by their backward passes.
#[derive(Debug, Clone)]
pub struct NormRowMeta {
    pub mean: f64,
    /// For node norm: the raw sigma. For layer norm: sigma clamped from below
    /// by [`SIGMA_EPS`].
    pub sigma: f64,
    /// Node norm: row passed through unchanged. Layer norm: sigma was clamped,
    /// so the divisor is treated as a constant in the backward pass.
    pub degenerate: bool,
}

/// Node normalization forward: `h_i / sigma_i^{1/p}` per row.
///
/// Returns the normalized matrix and per-row metadata. Requires `p >= 1`.
pub fn node_norm_forward(h: &Matrix, p: u32) -> Result<(Matrix, Vec<NormRowMeta>)> {
    if p < 1 {
        return Err(Error::Invalid(format!("node_norm exponent must satisfy p >= 1, got {p}")));
    }
    let mut out = h.clone();
    let mut meta = Vec::with_capacity(h.rows());
    for i in 0..h.rows() {
        let stats = row_stats(h.row(i));
        let degenerate = stats.std < SIGMA_EPS;
        if !degenerate {
            let scale = stats.std.powf(-1.0 / p as f64);
            for x in out.row_mut(i) {
                *x *= scale;
            }
        }
        meta.push(NormRowMeta { mean: stats.mean, sigma: stats.std, degenerate });
    }
    Ok((out, meta))
}

/// Which layer-normalization flavor to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerNormMode {
    /// `alpha ⊙ x_hat + beta`.
    Full,
    /// `x_hat` alone.
    Star,
    /// `h - mu` alone.
    MeanSubtract,
}

/// Layer normalization forward.
///
/// For [`LayerNormMode::Full`], `alpha` and `beta` must be `1 x d` and are
/// broadcast over rows. The returned `x_hat` matrix is the standardized input
/// `(h - mu) / max(sigma, eps)` (empty for mean-subtraction, which does not
/// need it in the backward pass).
pub fn layer_norm_forward(
    h: &Matrix,
    mode: LayerNormMode,
    alpha: Option<&Matrix>,
    beta: Option<&Matrix>,
) -> Result<(Matrix, Matrix, Vec<NormRowMeta>)> {
    let d = h.cols();
    if mode == LayerNormMode::Full {
        let a = alpha.ok_or_else(|| Error::Invalid("layer_norm full mode requires alpha".into()))?;
        let b = beta.ok_or_else(|| Error::Invalid("layer_norm full mode requires beta".into()))?;
        if a.shape() != (1, d) || b.shape() != (1, d) {
            return Err(Error::Shape(format!(
                "layer_norm affine parameters must be 1x{d}, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
    }
    let mut out = Matrix::zeros(h.rows(), d);
    let mut xhat = if mode == LayerNormMode::MeanSubtract {
        Matrix::zeros(0, 0)
    } else {
        Matrix::zeros(h.rows(), d)
    };
    let mut meta = Vec::with_capacity(h.rows());
    for i in 0..h.rows() {
        let stats = row_stats(h.row(i));
        match mode {
            LayerNormMode::MeanSubtract => {
                for (o, &x) in out.row_mut(i).iter_mut().zip(h.row(i)) {
                    *o = x - stats.mean;
                }
                meta.push(NormRowMeta { mean: stats.mean, sigma: stats.std, degenerate: false });
            }
            LayerNormMode::Star | LayerNormMode::Full => {
                let degenerate = stats.std < SIGMA_EPS;
                let sigma_hat = if degenerate { SIGMA_EPS } else { stats.std };
                for ((o, xh), &x) in
                    out.row_mut(i).iter_mut().zip(xhat.row_mut(i)).zip(h.row(i))
                {
                    *xh = (x - stats.mean) / sigma_hat;
                    *o = *xh;
                }
                if mode == LayerNormMode::Full {
                    let a = alpha.unwrap().row(0);
                    let b = beta.unwrap().row(0);
                    for (j, o) in out.row_mut(i).iter_mut().enumerate() {
                        *o = a[j] * *o + b[j];
                    }
                }
                meta.push(NormRowMeta { mean: stats.mean, sigma: sigma_hat, degenerate });
            }
        }
    }
    Ok((out, xhat, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_matrix(row: &[f64]) -> Matrix {
        Matrix::from_rows(&[row.to_vec()]).unwrap()
    }

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() < tol, "{a} vs {b}");
    }

    /// Hand-derived: row [1, 3] has mean 2 and population variance 1
    /// (not 2, which the sample divisor would give).
    #[test]
    fn row_stats_uses_population_divisor() {
        let s = row_stats(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.var, 1.0);
        assert_eq!(s.std, 1.0);
        let c = row_stats(&[5.0, 5.0, 5.0]);
        assert_eq!(c.var, 0.0);
    }

    /// Hand-derived: row [-4, 4] with p = 2 has sigma = 4, divisor
    /// sigma^{1/2} = 2, output [-2, 2].
    #[test]
    fn node_norm_p2_hand_example() {
        let (out, meta) = node_norm_forward(&row_matrix(&[-4.0, 4.0]), 2).unwrap();
        assert_close(out.get(0, 0), -2.0, 1e-12);
        assert_close(out.get(0, 1), 2.0, 1e-12);
        assert!(!meta[0].degenerate);
        assert_close(meta[0].sigma, 4.0, 1e-12);
    }

    /// p = 1 scales every non-degenerate row to standard deviation exactly 1.
    #[test]
    fn node_norm_p1_unit_std() {
        let (out, _) = node_norm_forward(&row_matrix(&[2.0, 4.0, 9.0, -3.0]), 1).unwrap();
        let s = row_stats(out.row(0));
        assert_close(s.std, 1.0, 1e-12);
    }

    /// General law: the post-normalization std is sigma^{1 - 1/p}.
    #[test]
    fn node_norm_p_power_law() {
        for p in 1..=4u32 {
            let row = [10.0, -5.0, 3.0, 7.5, 0.25];
            let sigma = row_stats(&row).std;
            let (out, _) = node_norm_forward(&row_matrix(&row), p).unwrap();
            let got = row_stats(out.row(0)).std;
            assert_close(got, sigma.powf(1.0 - 1.0 / p as f64), 1e-9);
        }
    }

    /// Constant rows are degenerate and pass through unchanged.
    #[test]
    fn node_norm_degenerate_rows_pass_through() {
        let h = Matrix::from_rows(&[vec![3.0, 3.0, 3.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let (out, meta) = node_norm_forward(&h, 1).unwrap();
        assert_eq!(out, h);
        assert!(meta[0].degenerate && meta[1].degenerate);
    }

    #[test]
    fn node_norm_rejects_p_zero() {
        assert!(node_norm_forward(&row_matrix(&[1.0, 2.0]), 0).is_err());
    }

    /// Hand-derived star example: [1, 3] -> mean 2, sigma 1 -> [-1, 1].
    #[test]
    fn layer_norm_star_hand_example() {
        let (out, _, _) =
            layer_norm_forward(&row_matrix(&[1.0, 3.0]), LayerNormMode::Star, None, None).unwrap();
        assert_close(out.get(0, 0), -1.0, 1e-12);
        assert_close(out.get(0, 1), 1.0, 1e-12);
    }

    /// Star output has mean 0 and std 1 on non-degenerate rows.
    #[test]
    fn layer_norm_star_standardizes() {
        let h = row_matrix(&[4.0, -2.0, 7.0, 1.0, 0.5]);
        let (out, _, _) = layer_norm_forward(&h, LayerNormMode::Star, None, None).unwrap();
        let s = row_stats(out.row(0));
        assert_close(s.mean, 0.0, 1e-12);
        assert_close(s.std, 1.0, 1e-12);
    }

    /// Full form with alpha = 1 and beta = 0 coincides with star.
    #[test]
    fn layer_norm_full_with_identity_affine_equals_star() {
        let h = Matrix::from_rows(&[vec![4.0, -2.0, 7.0], vec![1.0, 1.0, 2.0]]).unwrap();
        let alpha = Matrix::filled(1, 3, 1.0);
        let beta = Matrix::zeros(1, 3);
        let (full, _, _) =
            layer_norm_forward(&h, LayerNormMode::Full, Some(&alpha), Some(&beta)).unwrap();
        let (star, _, _) = layer_norm_forward(&h, LayerNormMode::Star, None, None).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_close(full.get(i, j), star.get(i, j), 1e-12);
            }
        }
    }

    /// Mean subtraction removes the mean and keeps the spread.
    #[test]
    fn layer_norm_mean_subtract() {
        let h = row_matrix(&[1.0, 3.0, 8.0]);
        let sigma = row_stats(h.row(0)).std;
        let (out, _, _) =
            layer_norm_forward(&h, LayerNormMode::MeanSubtract, None, None).unwrap();
        let s = row_stats(out.row(0));
        assert_close(s.mean, 0.0, 1e-12);
        assert_close(s.std, sigma, 1e-12);
    }

    /// A constant row under star/full is divided by the clamped epsilon and
    /// comes out all zero (numerator is exactly 0).
    #[test]
    fn layer_norm_constant_row_is_zeroed() {
        let h = row_matrix(&[2.0, 2.0, 2.0]);
        let (out, _, meta) = layer_norm_forward(&h, LayerNormMode::Star, None, None).unwrap();
        for j in 0..3 {
            assert_eq!(out.get(0, j), 0.0);
        }
        assert!(meta[0].degenerate);
        assert_eq!(meta[0].sigma, SIGMA_EPS);
    }

    #[test]
    fn layer_norm_full_requires_affine_params_of_right_shape() {
        let h = row_matrix(&[1.0, 2.0]);
        assert!(layer_norm_forward(&h, LayerNormMode::Full, None, None).is_err());
        let bad = Matrix::zeros(1, 3);
        let ok = Matrix::zeros(1, 2);
        assert!(layer_norm_forward(&h, LayerNormMode::Full, Some(&bad), Some(&ok)).is_err());
    }

    /// Scale equivariance: node_norm(c * h) = c^{1 - 1/p} ... only for p = 1 it
    /// is scale-invariant up to sign; check the p = 1 law precisely:
    /// node_norm_1(c * h) = sign(c) * node_norm_1(h) for c != 0.
    #[test]
    fn node_norm_p1_scale_invariance() {
        let row = [3.0, -1.0, 4.0, 1.0];
        let (base, _) = node_norm_forward(&row_matrix(&row), 1).unwrap();
        for &c in &[2.5, -3.0] {
            let scaled: Vec<f64> = row.iter().map(|&x| c * x).collect();
            let (out, _) = node_norm_forward(&row_matrix(&scaled), 1).unwrap();
            for j in 0..4 {
                assert_close(out.get(0, j), c.signum() * base.get(0, j), 1e-12);
            }
        }
    }

    #[test]
    fn norm_kind_tokens_and_validation() {
        assert_eq!(NormKind::NodeNorm { p: 2 }.token(), "nodenorm2");
        assert_eq!(NormKind::LayerNormStar.token(), "layernorm-star");
        assert!(NormKind::NodeNorm { p: 0 }.validate().is_err());
        assert!(NormKind::NodeNorm { p: 1 }.validate().is_ok());
        assert!(NormKind::LayerNorm.has_affine_params());
        assert!(!NormKind::LayerNormStar.has_affine_params());
    }
}
