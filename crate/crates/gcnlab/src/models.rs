//! Graph convolutional models: the plain GCN, the transformation-only T-GCN,
//! and the propagation-only P-GCN, each with pluggable row normalization.
//!
//! One graph-convolution layer computes `ReLU(A_hat * H * W)`; it factors into
//! propagation (`A_hat * H`, no parameters) and transformation
//! (`ReLU(H * W)`). The three variants stack these pieces differently for a
//! pipeline of depth `L >= 2`:
//!
//! * **GCN**: `L` full graph-convolution layers.
//! * **T-GCN**: graph convolution, `L - 2` transformation-only layers, graph
//!   convolution.
//! * **P-GCN**: graph convolution, `L - 2` propagation-only steps, graph
//!   convolution.
//!
//! Structural conventions, applied uniformly:
//!
//! * The final layer emits raw logits: no activation and no normalization.
//! * When `residual` is set, every hidden layer whose input and output widths
//!   match gets an identity skip (`out = layer(h) + h`), including
//!   propagation-only steps.
//! * Normalization attaches to every non-final layer. `AfterConv` normalizes
//!   the post-activation output; `InsideConv` normalizes the propagated
//!   features before the weight multiply (`ReLU(f(A_hat H) W)`). A
//!   propagation-only step has a single op, so both placements normalize its
//!   output.
//! * During training, dropout is applied to the input of every parameterized
//!   layer. Propagation-only steps have no parameters and receive no dropout.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, TensorId};
use crate::error::{Error, Result};
use crate::graph::SparseAdjacency;
use crate::matrix::Matrix;
use crate::norm::{LayerNormMode, NormKind};
use crate::optim::glorot_init;
use crate::rng::Rng;

/// Which layer stack to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Gcn,
    #[serde(alias = "tgcn")]
    TGcn,
    #[serde(alias = "pgcn")]
    PGcn,
}

impl Variant {
    /// Short lowercase token used in reports and file names.
    pub fn token(&self) -> &'static str {
        match self {
            Variant::Gcn => "gcn",
            Variant::TGcn => "tgcn",
            Variant::PGcn => "pgcn",
        }
    }
}

/// Where a normalization sits relative to the weight multiply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPlacement {
    AfterConv,
    InsideConv,
}

/// Full architectural description of a model; everything needed to rebuild
/// its parameter shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub depth: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub norm: NormKind,
    pub placement: NormPlacement,
    pub residual: bool,
    pub dropout_rate: f64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::Config(format!(
                "model depth must be at least 2, got {}",
                self.depth
            )));
        }
        if self.input_dim == 0 || self.hidden_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        self.norm.validate()?;
        if self.placement == NormPlacement::InsideConv && self.norm == NormKind::None {
            return Err(Error::Config(
                "inside_conv placement is meaningless without a normalization".into(),
            ));
        }
        Ok(())
    }

    /// Shapes of the weight matrices, in layer order.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        let (d_in, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        match self.variant {
            Variant::Gcn | Variant::TGcn => {
                let mut shapes = vec![(d_in, h)];
                shapes.extend(std::iter::repeat_n((h, h), self.depth - 2));
                shapes.push((h, c));
                shapes
            }
            Variant::PGcn => vec![(d_in, h), (h, c)],
        }
    }

    /// Number of normalization sites (every non-final layer).
    pub fn norm_sites(&self) -> usize {
        if self.norm == NormKind::None {
            0
        } else {
            self.depth - 1
        }
    }

    /// Column width of the activation each normalization site operates on.
    /// With `inside_conv` placement the first site normalizes the propagated
    /// raw input, so it runs at `input_dim`; every other site sees
    /// hidden-width activations.
    pub fn norm_site_widths(&self) -> Vec<usize> {
        (0..self.norm_sites())
            .map(|site| {
                if site == 0 && self.placement == NormPlacement::InsideConv {
                    self.input_dim
                } else {
                    self.hidden_dim
                }
            })
            .collect()
    }
}

/// A model: its spec plus parameter values. Parameter order is canonical:
/// all weights (layer order), then all layer-norm scales, then all shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub weights: Vec<Matrix>,
    pub alphas: Vec<Matrix>,
    pub betas: Vec<Matrix>,
}

impl Model {
    /// Total number of parameter tensors.
    pub fn param_count(&self) -> usize {
        self.weights.len() + self.alphas.len() + self.betas.len()
    }

    /// Parameters in canonical order.
    pub fn params(&self) -> impl Iterator<Item = &Matrix> {
        self.weights.iter().chain(self.alphas.iter()).chain(self.betas.iter())
    }

    /// Mutable parameters in canonical order.
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.weights
            .iter_mut()
            .chain(self.alphas.iter_mut())
            .chain(self.betas.iter_mut())
    }
}

/// Build a model with Glorot-initialized weights.
///
/// Weights are drawn in layer order, so two specs with the same weight shapes
/// and the same seed produce identical initial weights regardless of variant
/// or normalization (layer-norm scales/shifts are constant-initialized to
/// 1/0 and consume no randomness).
pub fn build_model(spec: &ModelSpec, rng: &mut Rng) -> Result<Model> {
    spec.validate()?;
    let mut weights = Vec::new();
    for (rows, cols) in spec.weight_shapes() {
        weights.push(glorot_init(rows, cols, rng)?);
    }
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    if spec.norm.has_affine_params() {
        for width in spec.norm_site_widths() {
            alphas.push(Matrix::filled(1, width, 1.0));
            betas.push(Matrix::zeros(1, width));
        }
    }
    Ok(Model { spec: spec.clone(), weights, alphas, betas })
}

/// A normalization bound to its (optional) affine parameter tensors.
#[derive(Debug, Clone, Copy)]
pub struct NormOp {
    pub kind: NormKind,
    pub alpha: Option<TensorId>,
    pub beta: Option<TensorId>,
}

impl NormOp {
    pub fn none() -> Self {
        NormOp { kind: NormKind::None, alpha: None, beta: None }
    }

    /// Record this normalization on the tape (identity for `None`).
    pub fn apply(&self, tape: &mut Tape, x: TensorId) -> Result<TensorId> {
        match self.kind {
            NormKind::None => Ok(x),
            NormKind::NodeNorm { p } => tape.node_norm(x, p),
            NormKind::LayerNorm => {
                tape.layer_norm(x, LayerNormMode::Full, self.alpha, self.beta)
            }
            NormKind::LayerNormStar => tape.layer_norm(x, LayerNormMode::Star, None, None),
            NormKind::LayerNormMs => {
                tape.layer_norm(x, LayerNormMode::MeanSubtract, None, None)
            }
        }
    }
}

/// One full graph-convolution layer on the tape:
/// propagation, weight multiply, optional activation, and normalization in
/// the requested placement.
pub fn gc_layer(
    tape: &mut Tape,
    h: TensorId,
    adj: &Arc<SparseAdjacency>,
    w: TensorId,
    norm: &NormOp,
    placement: NormPlacement,
    apply_relu: bool,
) -> Result<TensorId> {
    let propagated = tape.spmm(adj, h)?;
    match placement {
        NormPlacement::InsideConv => {
            let normed = norm.apply(tape, propagated)?;
            let z = tape.matmul(normed, w)?;
            Ok(if apply_relu { tape.relu(z) } else { z })
        }
        NormPlacement::AfterConv => {
            let z = tape.matmul(propagated, w)?;
            let activated = if apply_relu { tape.relu(z) } else { z };
            norm.apply(tape, activated)
        }
    }
}

/// A transformation-only layer: weight multiply and activation without
/// propagation.
pub fn tran_layer(
    tape: &mut Tape,
    h: TensorId,
    w: TensorId,
    norm: &NormOp,
    placement: NormPlacement,
) -> Result<TensorId> {
    match placement {
        NormPlacement::InsideConv => {
            let normed = norm.apply(tape, h)?;
            let z = tape.matmul(normed, w)?;
            Ok(tape.relu(z))
        }
        NormPlacement::AfterConv => {
            let z = tape.matmul(h, w)?;
            let activated = tape.relu(z);
            norm.apply(tape, activated)
        }
    }
}

/// Handles returned by [`forward`].
pub struct ForwardPass {
    /// Raw (pre-softmax) class scores, `n x num_classes`.
    pub logits: TensorId,
    /// Output of every layer in order, length `depth`; the last entry is the
    /// logits node.
    pub hidden: Vec<TensorId>,
    pub input_id: TensorId,
    pub weight_ids: Vec<TensorId>,
    pub alpha_ids: Vec<TensorId>,
    pub beta_ids: Vec<TensorId>,
}

impl ForwardPass {
    /// Parameter node ids in the model's canonical order.
    pub fn param_ids(&self) -> Vec<TensorId> {
        let mut ids = self.weight_ids.clone();
        ids.extend_from_slice(&self.alpha_ids);
        ids.extend_from_slice(&self.beta_ids);
        ids
    }
}

/// Record a full forward pass of `model` on the tape.
///
/// `training` enables dropout (drawing masks from `rng`) and marks parameters
/// as requiring gradients; evaluation passes draw nothing from `rng` and
/// track nothing.
pub fn forward(
    model: &Model,
    tape: &mut Tape,
    x: &Matrix,
    adj: &Arc<SparseAdjacency>,
    training: bool,
    rng: &mut Rng,
) -> Result<ForwardPass> {
    let spec = &model.spec;
    if x.cols() != spec.input_dim {
        return Err(Error::Shape(format!(
            "input has {} feature columns but the model expects {}",
            x.cols(),
            spec.input_dim
        )));
    }
    if x.rows() != adj.n() {
        return Err(Error::Shape(format!(
            "input has {} rows but the adjacency has {} nodes",
            x.rows(),
            adj.n()
        )));
    }
    let input_id = tape.leaf(x.clone(), false);
    let weight_ids: Vec<TensorId> =
        model.weights.iter().map(|w| tape.leaf(w.clone(), training)).collect();
    let alpha_ids: Vec<TensorId> =
        model.alphas.iter().map(|a| tape.leaf(a.clone(), training)).collect();
    let beta_ids: Vec<TensorId> =
        model.betas.iter().map(|b| tape.leaf(b.clone(), training)).collect();
    let (logits, hidden) = forward_from_ids(
        spec,
        tape,
        input_id,
        &weight_ids,
        &alpha_ids,
        &beta_ids,
        adj,
        training,
        rng,
    )?;
    Ok(ForwardPass { logits, hidden, input_id, weight_ids, alpha_ids, beta_ids })
}

/// Core forward routine over pre-created parameter nodes. Exposed so
/// gradient-check programs can rebuild the exact graph from their own leaves.
#[allow(clippy::too_many_arguments)]
pub fn forward_from_ids(
    spec: &ModelSpec,
    tape: &mut Tape,
    input: TensorId,
    weights: &[TensorId],
    alphas: &[TensorId],
    betas: &[TensorId],
    adj: &Arc<SparseAdjacency>,
    training: bool,
    rng: &mut Rng,
) -> Result<(TensorId, Vec<TensorId>)> {
    spec.validate()?;
    let expected_weights = spec.weight_shapes().len();
    if weights.len() != expected_weights {
        return Err(Error::Shape(format!(
            "expected {expected_weights} weight tensors, got {}",
            weights.len()
        )));
    }
    if spec.norm.has_affine_params()
        && (alphas.len() != spec.norm_sites() || betas.len() != spec.norm_sites())
    {
        return Err(Error::Shape(format!(
            "expected {} alpha/beta tensors, got {}/{}",
            spec.norm_sites(),
            alphas.len(),
            betas.len()
        )));
    }

    let norm_at = |site: usize| -> NormOp {
        if spec.norm == NormKind::None {
            return NormOp::none();
        }
        NormOp {
            kind: spec.norm,
            alpha: alphas.get(site).copied(),
            beta: betas.get(site).copied(),
        }
    };
    let depth = spec.depth;
    let mut hidden = Vec::with_capacity(depth);
    let mut h = input;

    // Dropout on the input of a parameterized layer (training only).
    macro_rules! dropped {
        ($tape:expr, $h:expr) => {
            if training && spec.dropout_rate > 0.0 {
                $tape.dropout($h, spec.dropout_rate, rng)?
            } else {
                $h
            }
        };
    }

    match spec.variant {
        Variant::Gcn => {
            for (l, &w) in weights.iter().enumerate() {
                let is_final = l + 1 == depth;
                let inp = dropped!(tape, h);
                let norm = if is_final { NormOp::none() } else { norm_at(l) };
                let mut out = gc_layer(tape, inp, adj, w, &norm, spec.placement, !is_final)?;
                // Identity skip on hidden layers (hidden -> hidden widths).
                if spec.residual && l > 0 && !is_final {
                    out = tape.add(out, h)?;
                }
                hidden.push(out);
                h = out;
            }
        }
        Variant::TGcn => {
            for (l, &w) in weights.iter().enumerate() {
                let is_final = l + 1 == depth;
                let is_first = l == 0;
                let inp = dropped!(tape, h);
                let mut out = if is_first || is_final {
                    let norm = if is_final { NormOp::none() } else { norm_at(l) };
                    gc_layer(tape, inp, adj, w, &norm, spec.placement, !is_final)?
                } else {
                    tran_layer(tape, inp, w, &norm_at(l), spec.placement)?
                };
                if spec.residual && !is_first && !is_final {
                    out = tape.add(out, h)?;
                }
                hidden.push(out);
                h = out;
            }
        }
        Variant::PGcn => {
            // Opening graph convolution.
            let inp = dropped!(tape, h);
            let first = gc_layer(tape, inp, adj, weights[0], &norm_at(0), spec.placement, true)?;
            hidden.push(first);
            h = first;
            // Parameter-free propagation steps: no dropout, no activation.
            for s in 0..depth - 2 {
                let propagated = tape.spmm(adj, h)?;
                let mut out = norm_at(s + 1).apply(tape, propagated)?;
                if spec.residual {
                    out = tape.add(out, h)?;
                }
                hidden.push(out);
                h = out;
            }
            // Closing graph convolution producing logits.
            let inp = dropped!(tape, h);
            let logits =
                gc_layer(tape, inp, adj, weights[1], &NormOp::none(), spec.placement, false)?;
            hidden.push(logits);
            h = logits;
        }
    }
    Ok((h, hidden))
}
