//! Degradation diagnostics: node-wise variance profiles, variance-bin
//! accuracy gaps, an empirical graph Lipschitz constant, feature-correlation
//! strength, and overfitting gaps.
//!
//! These are the measurement tools used to characterize *why* deep graph
//! convolutional models lose accuracy: hidden-state variance inflating with
//! depth, high-variance nodes being classified worse, models growing more
//! sensitive to input differences (larger Lipschitz estimates), and the
//! train/validation gap widening.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::graph::SparseAdjacency;
use crate::matrix::Matrix;
use crate::models::{forward, Model};
use crate::norm::row_stats;
use crate::rng::{seeded, Rng};

/// Population variance of each row of `h` (divisor `d`, not `d - 1`).
pub fn node_variance(h: &Matrix) -> Vec<f64> {
    (0..h.rows()).map(|i| row_stats(h.row(i)).var).collect()
}

/// Per-layer node variances of a model evaluated on `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile {
    /// `per_layer[l][i]` is the variance of node `i`'s features after layer
    /// `l`; the last layer is the logits.
    pub per_layer: Vec<Vec<f64>>,
    /// `log10` of the same values; `None` where the variance is exactly 0.
    pub log10_per_layer: Vec<Vec<Option<f64>>>,
}

impl VarianceProfile {
    pub fn depth(&self) -> usize {
        self.per_layer.len()
    }

    /// Median variance of one layer (average-of-middle-two convention).
    pub fn layer_median(&self, layer: usize) -> f64 {
        median(&self.per_layer[layer])
    }

    /// Maximum variance of one layer.
    pub fn layer_max(&self, layer: usize) -> f64 {
        self.per_layer[layer].iter().fold(0.0f64, |m, &v| m.max(v))
    }
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("variances are never NaN"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Evaluate `model` on `x` and record the node variance of every layer's
/// output (including the logits layer).
pub fn variance_profile(
    model: &Model,
    x: &Matrix,
    adj: &Arc<SparseAdjacency>,
) -> Result<VarianceProfile> {
    let mut tape = Tape::new();
    // Evaluation mode: no dropout, so the rng is never consumed.
    let pass = forward(model, &mut tape, x, adj, false, &mut seeded(0))?;
    let mut per_layer = Vec::with_capacity(pass.hidden.len());
    let mut log10_per_layer = Vec::with_capacity(pass.hidden.len());
    for &h in &pass.hidden {
        let vars = node_variance(tape.value(h));
        let logs = vars
            .iter()
            .map(|&v| if v > 0.0 { Some(v.log10()) } else { None })
            .collect();
        per_layer.push(vars);
        log10_per_layer.push(logs);
    }
    Ok(VarianceProfile { per_layer, log10_per_layer })
}

/// Accuracy of a shallow and a deep model over five variance-sorted bins of
/// the same node set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    /// Number of nodes in each bin (near-equal; earlier bins absorb the
    /// remainder).
    pub bin_sizes: Vec<usize>,
    /// Mean deep-model variance within each bin.
    pub mean_variance: Vec<f64>,
    pub acc_shallow: Vec<f64>,
    pub acc_deep: Vec<f64>,
    /// `acc_shallow - acc_deep` per bin.
    pub gap: Vec<f64>,
}

/// Partition nodes into 5 bins by ascending deep-model variance and compare
/// per-bin accuracy of the two models.
///
/// Ties are broken by node index (stable sort), bins are near-equal with the
/// remainder going to the earliest bins. Requires at least 5 nodes.
pub fn variance_bins(
    deep_var: &[f64],
    correct_deep: &[bool],
    correct_shallow: &[bool],
) -> Result<BinReport> {
    let n = deep_var.len();
    if correct_deep.len() != n || correct_shallow.len() != n {
        return Err(Error::Shape(format!(
            "variance_bins: {n} variances vs {} deep and {} shallow outcomes",
            correct_deep.len(),
            correct_shallow.len()
        )));
    }
    if n < 5 {
        return Err(Error::Invalid(format!(
            "variance_bins needs at least 5 nodes, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort on variance keeps ties in index order.
    order.sort_by(|&a, &b| deep_var[a].partial_cmp(&deep_var[b]).expect("variance is not NaN"));

    let base = n / 5;
    let rem = n % 5;
    let mut report = BinReport {
        bin_sizes: Vec::with_capacity(5),
        mean_variance: Vec::with_capacity(5),
        acc_shallow: Vec::with_capacity(5),
        acc_deep: Vec::with_capacity(5),
        gap: Vec::with_capacity(5),
    };
    let mut cursor = 0usize;
    for b in 0..5 {
        let size = base + usize::from(b < rem);
        let members = &order[cursor..cursor + size];
        cursor += size;
        let sz = size as f64;
        let mean_var = members.iter().map(|&i| deep_var[i]).sum::<f64>() / sz;
        let acc_d = members.iter().filter(|&&i| correct_deep[i]).count() as f64 / sz;
        let acc_s = members.iter().filter(|&&i| correct_shallow[i]).count() as f64 / sz;
        report.bin_sizes.push(size);
        report.mean_variance.push(mean_var);
        report.acc_shallow.push(acc_s);
        report.acc_deep.push(acc_d);
        report.gap.push(acc_s - acc_d);
    }
    Ok(report)
}

/// How pairs were enumerated for the Lipschitz estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    AllPairs,
    Sampled { limit: usize },
}

/// Empirical graph Lipschitz estimate and its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// `max over pairs ||f(x_i) - f(x_j)|| / ||x_i - x_j||`.
    pub value: f64,
    pub mode: PairMode,
    /// Pairs that actually entered the maximum.
    pub pairs_used: usize,
    /// Pairs skipped because the input distance was below 1e-12.
    pub pairs_skipped: usize,
}

/// Input distance below which a pair is considered degenerate and skipped.
const PAIR_DISTANCE_EPS: f64 = 1e-12;

fn pair_ratio(fx: &Matrix, x: &Matrix, i: usize, j: usize) -> Option<f64> {
    let dx: f64 = x
        .row(i)
        .iter()
        .zip(x.row(j))
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if dx < PAIR_DISTANCE_EPS {
        return None;
    }
    let df: f64 = fx
        .row(i)
        .iter()
        .zip(fx.row(j))
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Some(df / dx)
}

/// Exhaustive maximum over all unordered pairs.
///
/// Returns `(value, pairs_used, pairs_skipped)`.
pub fn lipschitz_all_pairs(fx: &Matrix, x: &Matrix) -> Result<(f64, usize, usize)> {
    let n = check_lipschitz_inputs(fx, x)?;
    let mut best = 0.0f64;
    let (mut used, mut skipped) = (0usize, 0usize);
    for i in 0..n {
        for j in (i + 1)..n {
            match pair_ratio(fx, x, i, j) {
                Some(r) => {
                    best = best.max(r);
                    used += 1;
                }
                None => skipped += 1,
            }
        }
    }
    if used == 0 {
        return Err(Error::Invalid(
            "graph_lipschitz: every node pair has (near-)identical inputs".into(),
        ));
    }
    Ok((best, used, skipped))
}

/// Maximum over `limit` uniformly sampled pairs `i != j`.
pub fn lipschitz_sampled(
    fx: &Matrix,
    x: &Matrix,
    limit: usize,
    rng: &mut Rng,
) -> Result<(f64, usize, usize)> {
    let n = check_lipschitz_inputs(fx, x)?;
    if limit == 0 {
        return Err(Error::Invalid("graph_lipschitz: pair_limit must be positive".into()));
    }
    let mut best = 0.0f64;
    let (mut used, mut skipped) = (0usize, 0usize);
    for _ in 0..limit {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        match pair_ratio(fx, x, i, j) {
            Some(r) => {
                best = best.max(r);
                used += 1;
            }
            None => skipped += 1,
        }
    }
    if used == 0 {
        return Err(Error::Invalid(
            "graph_lipschitz: every sampled pair has (near-)identical inputs".into(),
        ));
    }
    Ok((best, used, skipped))
}

fn check_lipschitz_inputs(fx: &Matrix, x: &Matrix) -> Result<usize> {
    let n = x.rows();
    if fx.rows() != n {
        return Err(Error::Shape(format!(
            "graph_lipschitz: {} outputs for {} inputs",
            fx.rows(),
            n
        )));
    }
    if n < 2 {
        return Err(Error::Invalid("graph_lipschitz needs at least 2 nodes".into()));
    }
    Ok(n)
}

/// Node count up to which the estimate is always exhaustive.
const ALL_PAIRS_LIMIT: usize = 2000;

/// Empirical Lipschitz constant of the trained model's logit map.
///
/// The model is evaluated once (no dropout); the maximum of
/// `||f(x_i) - f(x_j)|| / ||x_i - x_j||` is then taken over all pairs when
/// the graph has at most 2000 nodes or `pair_limit` is `None`, and over a
/// seeded uniform sample of `pair_limit` pairs otherwise. Pairs with
/// `||x_i - x_j|| < 1e-12` are skipped.
pub fn graph_lipschitz(
    model: &Model,
    x: &Matrix,
    adj: &Arc<SparseAdjacency>,
    pair_limit: Option<usize>,
    seed: u64,
) -> Result<LipschitzReport> {
    let mut tape = Tape::new();
    let pass = forward(model, &mut tape, x, adj, false, &mut seeded(0))?;
    let fx = tape.value(pass.logits);
    match pair_limit {
        Some(limit) if x.rows() > ALL_PAIRS_LIMIT => {
            let mut rng = seeded(seed);
            let (value, used, skipped) = lipschitz_sampled(fx, x, limit, &mut rng)?;
            Ok(LipschitzReport {
                value,
                mode: PairMode::Sampled { limit },
                pairs_used: used,
                pairs_skipped: skipped,
            })
        }
        _ => {
            let (value, used, skipped) = lipschitz_all_pairs(fx, x)?;
            Ok(LipschitzReport {
                value,
                mode: PairMode::AllPairs,
                pairs_used: used,
                pairs_skipped: skipped,
            })
        }
    }
}

/// Frobenius norm of the column-correlation matrix of `h`.
///
/// Columns are standardized with population statistics; a zero-variance
/// column is defined to have correlation 0 with every other column and 1
/// with itself. Requires at least 2 rows.
pub fn correlation_frobenius(h: &Matrix) -> Result<f64> {
    let (n, d) = h.shape();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "correlation_frobenius needs at least 2 rows, got {n}"
        )));
    }
    if d == 0 {
        return Err(Error::Invalid("correlation_frobenius on a zero-column matrix".into()));
    }
    let nf = n as f64;
    // Column means and population stds.
    let mut mean = vec![0.0f64; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(h.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= nf;
    }
    let mut var = vec![0.0f64; d];
    for i in 0..n {
        for (j, &v) in h.row(i).iter().enumerate() {
            let c = v - mean[j];
            var[j] += c * c;
        }
    }
    let sd: Vec<f64> = var.iter().map(|&v| (v / nf).sqrt()).collect();
    let degenerate: Vec<bool> = sd.iter().map(|&s| s == 0.0).collect();

    // Standardize (degenerate columns become all-zero) and form
    // C = Z^T Z / n.
    let mut z = Matrix::zeros(n, d);
    for i in 0..n {
        let zr = z.row_mut(i);
        for (j, &v) in h.row(i).iter().enumerate() {
            if !degenerate[j] {
                zr[j] = (v - mean[j]) / sd[j];
            }
        }
    }
    let mut c = z.transpose_matmul(&z)?;
    for v in c.as_mut_slice() {
        *v /= nf;
    }
    // Pin the diagonal to exactly 1 (including degenerate columns).
    let mut sum_sq = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let v = if i == j { 1.0 } else { c.get(i, j) };
            sum_sq += v * v;
        }
    }
    Ok(sum_sq.sqrt())
}

/// Final-epoch train-minus-validation gaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverfitGaps {
    /// `train_acc - val_acc` at the last epoch.
    pub acc_gap: f64,
    /// `val_loss - train_loss` at the last epoch (positive when validation
    /// loss is worse).
    pub loss_gap: f64,
}

/// Compute overfitting gaps from per-epoch curves. All four series must be
/// non-empty and share a length.
pub fn overfit_gaps(
    train_acc: &[f64],
    val_acc: &[f64],
    train_loss: &[f64],
    val_loss: &[f64],
) -> Result<OverfitGaps> {
    let n = train_acc.len();
    if n == 0 {
        return Err(Error::Invalid("overfit_gaps: empty history".into()));
    }
    if val_acc.len() != n || train_loss.len() != n || val_loss.len() != n {
        return Err(Error::Shape(format!(
            "overfit_gaps: series lengths differ ({n}, {}, {}, {})",
            val_acc.len(),
            train_loss.len(),
            val_loss.len()
        )));
    }
    Ok(OverfitGaps {
        acc_gap: train_acc[n - 1] - val_acc[n - 1],
        loss_gap: val_loss[n - 1] - train_loss[n - 1],
    })
}
