//! Experiment orchestration: run configuration, full-batch training,
//! sweeps over (variant, depth, seed) grids, and model checkpoints.
//!
//! Randomness is fully determined by `RunConfig::seed`. The seed feeds four
//! independent ChaCha streams so that, e.g., changing the split protocol
//! never perturbs weight initialization:
//!
//! * stream 0 — model initialization and dropout masks,
//! * stream 1 — synthetic dataset generation,
//! * stream 2 — split sampling (unless `split.seed` pins its own),
//! * stream 3 — feature masking.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{
    generate_sbm, load_bundle, make_split, mask_features, GraphDataset, SbmParams, SplitSpec,
};
use crate::diagnostics::{
    self, correlation_frobenius, graph_lipschitz, node_variance, overfit_gaps, variance_profile,
    LipschitzReport, OverfitGaps, VarianceProfile,
};
use crate::error::{Error, Result};
use crate::graph::SparseAdjacency;
use crate::matrix::Matrix;
use crate::models::{build_model, forward, Model, ModelSpec, NormPlacement, Variant};
use crate::norm::NormKind;
use crate::optim::AdamState;
use crate::rng::{seeded, Rng};

/// Version stamp written into every record and checkpoint.
pub const RECORD_FORMAT_VERSION: u32 = 1;

const STREAM_MODEL: u64 = 0;
const STREAM_DATA: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_MASK: u64 = 3;

fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = seeded(seed);
    rng.set_stream(stream);
    rng
}

/// Where the graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// A bundle directory on disk.
    Bundle { path: PathBuf },
    /// A stochastic block model drawn from the run seed.
    Sbm(SbmParams),
}

/// Architecture portion of a run configuration. Input and output widths are
/// resolved from the dataset at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub depth: usize,
    pub hidden_dim: usize,
    #[serde(default = "default_norm")]
    pub norm: NormKind,
    #[serde(default = "default_placement")]
    pub placement: NormPlacement,
    #[serde(default)]
    pub residual: bool,
    #[serde(default)]
    pub dropout_rate: f64,
}

fn default_norm() -> NormKind {
    NormKind::None
}

fn default_placement() -> NormPlacement {
    NormPlacement::AfterConv
}

impl ModelConfig {
    /// Fill in the data-dependent dimensions and validate the whole spec.
    pub fn resolve(&self, input_dim: usize, num_classes: usize) -> Result<ModelSpec> {
        let spec = ModelSpec {
            variant: self.variant,
            depth: self.depth,
            input_dim,
            hidden_dim: self.hidden_dim,
            num_classes,
            norm: self.norm,
            placement: self.placement,
            residual: self.residual,
            dropout_rate: self.dropout_rate,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Optimizer portion of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub l1_weight: f64,
    pub epochs: usize,
}

/// Which diagnostics to compute on the trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    #[serde(default)]
    pub variance_profile: bool,
    #[serde(default)]
    pub lipschitz: bool,
    #[serde(default)]
    pub lipschitz_pair_limit: Option<usize>,
    #[serde(default)]
    pub correlation: bool,
    /// Record per-test-node correctness and final hidden-layer variance
    /// (the inputs to accuracy-by-variance binning).
    #[serde(default)]
    pub record_test_outcomes: bool,
}

/// Complete description of a single training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    pub split: SplitSpec,
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub seed: u64,
    /// Fraction of eligible feature rows zeroed before training.
    #[serde(default)]
    pub missing_rate: f64,
    /// Keep training rows intact when masking features.
    #[serde(default = "default_true")]
    pub protect_train: bool,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.optim.lr >= 0.0 && self.optim.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.optim.lr
            )));
        }
        if self.optim.weight_decay < 0.0 || self.optim.l1_weight < 0.0 {
            return Err(Error::Config("weight_decay and l1_weight must be >= 0".into()));
        }
        if self.optim.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return Err(Error::Config(format!(
                "missing_rate must be in [0, 1], got {}",
                self.missing_rate
            )));
        }
        // Validate the architecture with placeholder dimensions; the real
        // input/output widths are positive by dataset validation.
        self.model.resolve(1, 2).map(drop)
    }
}

/// Per-epoch metric traces; every vector has length `epochs`. Losses are the
/// plain masked cross-entropy measured in evaluation mode (no dropout, no
/// penalty terms), so train and validation numbers are directly comparable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochHistory {
    pub train_loss: Vec<f64>,
    pub train_acc: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_acc: Vec<f64>,
}

/// Outcome data for one test node, recorded in ascending node order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub node: usize,
    pub correct: bool,
    /// Node-wise feature variance at the deepest hidden layer.
    pub variance: f64,
}

/// Optional analysis artifacts attached to a record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsPayload {
    pub variance_profile: Option<VarianceProfile>,
    pub lipschitz: Option<LipschitzReport>,
    /// Frobenius norm of the feature correlation matrix per layer
    /// (same layer order as the variance profile).
    pub correlation_per_layer: Option<Vec<f64>>,
    pub test_outcomes: Option<Vec<TestOutcome>>,
}

/// Basic shape of the materialized dataset after splitting/masking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSummary {
    pub name: String,
    pub nodes: usize,
    pub edges: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Everything a finished run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format_version: u32,
    pub config: RunConfig,
    /// The fully resolved architecture actually trained.
    pub spec: ModelSpec,
    pub data: DataSummary,
    pub history: EpochHistory,
    pub test_acc: f64,
    pub overfit: OverfitGaps,
    pub wall_time_secs: f64,
    pub diagnostics: DiagnosticsPayload,
}

/// Class prediction for one logit row: argmax, ties broken toward the
/// lowest class index.
pub fn argmax_class(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Mean cross-entropy and accuracy of `logits` over the masked nodes.
pub fn masked_metrics(logits: &Matrix, labels: &[i64], mask: &[bool]) -> Result<(f64, f64)> {
    if logits.rows() != labels.len() || logits.rows() != mask.len() {
        return Err(Error::Shape(format!(
            "metrics over {} logit rows, {} labels, {} mask entries",
            logits.rows(),
            labels.len(),
            mask.len()
        )));
    }
    let classes = logits.cols();
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut count = 0usize;
    for i in 0..logits.rows() {
        if !mask[i] {
            continue;
        }
        let label = labels[i];
        if label < 0 || label as usize >= classes {
            return Err(Error::Data(format!(
                "node {i}: label {label} outside [0, {classes}) under an active mask"
            )));
        }
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label as usize];
        if argmax_class(row) == label as usize {
            correct += 1;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Invalid("metrics requested over an empty mask".into()));
    }
    Ok((loss / count as f64, correct as f64 / count as f64))
}

/// Materialize the dataset a config describes: load or generate, split,
/// and apply feature masking. Returns the dataset (with masks assigned)
/// and its renormalized propagation operator.
pub fn prepare_data(config: &RunConfig) -> Result<(GraphDataset, Arc<SparseAdjacency>)> {
    let mut ds = match &config.data {
        DataSource::Bundle { path } => load_bundle(path)?.0,
        DataSource::Sbm(params) => {
            generate_sbm(params, &mut stream_rng(config.seed, STREAM_DATA))?
        }
    };
    let splits = make_split(&ds, &config.split, &mut stream_rng(config.seed, STREAM_SPLIT))?;
    ds.splits = Some(splits);
    if config.missing_rate > 0.0 {
        mask_features(
            &mut ds,
            config.missing_rate,
            config.protect_train,
            &mut stream_rng(config.seed, STREAM_MASK),
        )?;
    }
    ds.validate()?;
    let adj = SparseAdjacency::from_edges(ds.n(), &ds.edges)?.renormalize()?;
    Ok((ds, Arc::new(adj)))
}

/// Train a model per `config` and return the full record.
///
/// Full-batch gradient descent with Adam for exactly `epochs` steps (no
/// early stopping). The optimized loss is the masked cross-entropy on the
/// training nodes plus `l1_weight * ||W||_1` over the weight matrices;
/// weight decay is applied through the optimizer to every parameter.
/// Test accuracy is measured once, after the final epoch.
pub fn train(config: &RunConfig) -> Result<RunRecord> {
    let (record, _) = train_with_model(config)?;
    Ok(record)
}

/// As [`train`], additionally returning the trained model (for
/// checkpointing).
pub fn train_with_model(config: &RunConfig) -> Result<(RunRecord, Model)> {
    config.validate()?;
    let start = Instant::now();
    let (ds, adj) = prepare_data(config)?;
    let splits = ds.splits.clone().expect("prepare_data assigns splits");
    let spec = config.model.resolve(ds.dim(), ds.num_classes)?;

    let mut rng = stream_rng(config.seed, STREAM_MODEL);
    let mut model = build_model(&spec, &mut rng)?;
    let mut states: Vec<AdamState> =
        model.params().map(|p| AdamState::new(p.rows(), p.cols())).collect();

    let mut history = EpochHistory::default();
    let mut final_eval: Option<(Tape, crate::models::ForwardPass)> = None;

    for epoch in 0..config.optim.epochs {
        // Optimization pass (dropout active, gradients tracked).
        let mut tape = Tape::new();
        let pass = forward(&model, &mut tape, &ds.features, &adj, true, &mut rng)?;
        let ce = tape.softmax_cross_entropy(pass.logits, &ds.labels, &splits.train)?;
        let loss = if config.optim.l1_weight > 0.0 {
            let penalty = tape.l1_penalty(&pass.weight_ids, config.optim.l1_weight)?;
            tape.add(ce, penalty)?
        } else {
            ce
        };
        let mut grads = tape.backward(loss)?;
        let param_ids = pass.param_ids();
        for ((param, state), id) in model.params_mut().zip(states.iter_mut()).zip(param_ids) {
            match grads.take(id) {
                Some(g) => state.step(param, &g, config.optim.lr, config.optim.weight_decay)?,
                None => {
                    let zero = Matrix::zeros(param.rows(), param.cols());
                    state.step(param, &zero, config.optim.lr, config.optim.weight_decay)?;
                }
            }
        }

        // Metric pass (evaluation mode: no dropout, nothing drawn from rng).
        let mut eval_tape = Tape::new();
        let eval_pass = forward(&model, &mut eval_tape, &ds.features, &adj, false, &mut rng)?;
        let logits = eval_tape.value(eval_pass.logits);
        let (tr_loss, tr_acc) = masked_metrics(logits, &ds.labels, &splits.train)?;
        let (va_loss, va_acc) = masked_metrics(logits, &ds.labels, &splits.val)?;
        history.train_loss.push(tr_loss);
        history.train_acc.push(tr_acc);
        history.val_loss.push(va_loss);
        history.val_acc.push(va_acc);
        if epoch + 1 == config.optim.epochs {
            final_eval = Some((eval_tape, eval_pass));
        }
    }

    let (eval_tape, eval_pass) = final_eval.expect("epochs >= 1");
    let logits = eval_tape.value(eval_pass.logits);
    let (_, test_acc) = masked_metrics(logits, &ds.labels, &splits.test)?;
    let overfit = overfit_gaps(
        &history.train_acc,
        &history.val_acc,
        &history.train_loss,
        &history.val_loss,
    )?;

    let dcfg = &config.diagnostics;
    let mut payload = DiagnosticsPayload::default();
    if dcfg.variance_profile {
        payload.variance_profile = Some(variance_profile(&model, &ds.features, &adj)?);
    }
    if dcfg.lipschitz {
        payload.lipschitz = Some(graph_lipschitz(
            &model,
            &ds.features,
            &adj,
            dcfg.lipschitz_pair_limit,
            config.seed,
        )?);
    }
    if dcfg.correlation {
        let mut per_layer = Vec::with_capacity(eval_pass.hidden.len());
        for &id in &eval_pass.hidden {
            per_layer.push(correlation_frobenius(eval_tape.value(id))?);
        }
        payload.correlation_per_layer = Some(per_layer);
    }
    if dcfg.record_test_outcomes {
        // `hidden` has one entry per layer with the logits last; the deepest
        // hidden representation is the entry before it.
        let deepest = eval_pass.hidden[eval_pass.hidden.len() - 2];
        let variances = node_variance(eval_tape.value(deepest));
        let mut outcomes = Vec::new();
        for (i, &variance) in variances.iter().enumerate() {
            if !splits.test[i] {
                continue;
            }
            outcomes.push(TestOutcome {
                node: i,
                correct: argmax_class(logits.row(i)) == ds.labels[i] as usize,
                variance,
            });
        }
        payload.test_outcomes = Some(outcomes);
    }

    let (train_n, val_n, test_n) = splits.counts();
    let record = RunRecord {
        format_version: RECORD_FORMAT_VERSION,
        config: config.clone(),
        spec,
        data: DataSummary {
            name: ds.name.clone(),
            nodes: ds.n(),
            edges: ds.edges.len(),
            train: train_n,
            val: val_n,
            test: test_n,
        },
        history,
        test_acc,
        overfit,
        wall_time_secs: start.elapsed().as_secs_f64(),
        diagnostics: payload,
    };
    Ok((record, model))
}

/// Translate a sweep preset token into an architecture variant and
/// normalization. `gcn`/`tgcn`/`pgcn` select bare variants; `nodenorm<p>`,
/// `layernorm`, `layernorm-star` and `layernorm-ms` select a normalized GCN.
pub fn parse_variant_preset(token: &str) -> Result<(Variant, NormKind)> {
    match token {
        "gcn" => Ok((Variant::Gcn, NormKind::None)),
        "tgcn" => Ok((Variant::TGcn, NormKind::None)),
        "pgcn" => Ok((Variant::PGcn, NormKind::None)),
        "layernorm" => Ok((Variant::Gcn, NormKind::LayerNorm)),
        "layernorm-star" => Ok((Variant::Gcn, NormKind::LayerNormStar)),
        "layernorm-ms" => Ok((Variant::Gcn, NormKind::LayerNormMs)),
        _ => {
            if let Some(digits) = token.strip_prefix("nodenorm") {
                let p: u32 = digits.parse().map_err(|_| {
                    Error::Config(format!("unknown variant preset '{token}'"))
                })?;
                let norm = NormKind::NodeNorm { p };
                norm.validate()?;
                Ok((Variant::Gcn, norm))
            } else {
                Err(Error::Config(format!("unknown variant preset '{token}'")))
            }
        }
    }
}

/// Wrap one finished run as a single-cell batch for
/// [`crate::report::emit_reports`].
pub fn single_cell(record: RunRecord) -> CellResult {
    CellResult {
        cell: SweepCell {
            variant: record.spec.variant.token().to_string(),
            depth: record.spec.depth,
            seed: record.config.seed,
        },
        outcome: Ok(record),
    }
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepCell {
    pub variant: String,
    pub depth: usize,
    pub seed: u64,
}

/// Outcome of one grid point; failures carry the error text so the sweep
/// can continue past them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: SweepCell,
    pub outcome: std::result::Result<RunRecord, String>,
}

/// Expand `base` over the Cartesian grid of presets, depths and seeds and
/// train every cell. Cells are independent: the result is a pure function
/// of (base, grid) regardless of execution order, and one failed cell does
/// not abort the rest. Results arrive in grid order: variants outermost,
/// then depths, then seeds.
pub fn sweep(
    base: &RunConfig,
    depths: &[usize],
    seeds: &[u64],
    variants: &[String],
) -> Result<Vec<CellResult>> {
    if depths.is_empty() || seeds.is_empty() || variants.is_empty() {
        return Err(Error::Config("sweep requires at least one depth, seed and variant".into()));
    }
    // Fail fast on malformed presets before burning compute.
    for v in variants {
        parse_variant_preset(v)?;
    }
    let mut results = Vec::with_capacity(variants.len() * depths.len() * seeds.len());
    for variant in variants {
        let (arch, norm) = parse_variant_preset(variant)?;
        for &depth in depths {
            for &seed in seeds {
                let mut config = base.clone();
                config.model.variant = arch;
                config.model.norm = norm;
                config.model.depth = depth;
                config.seed = seed;
                let cell =
                    SweepCell { variant: variant.clone(), depth, seed };
                let outcome = train(&config).map_err(|e| e.to_string());
                results.push(CellResult { cell, outcome });
            }
        }
    }
    Ok(results)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"GCNLCKP1";

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    spec: ModelSpec,
    tensors: Vec<TensorInfo>,
}

/// Serialize a model to `path`.
///
/// Byte layout: the 8-byte magic `GCNLCKP1`, a little-endian u32 header
/// length, the JSON header (version, spec, tensor table), then every
/// tensor's row-major f64 values in little-endian order, concatenated in
/// table order (weights, then scales, then shifts).
pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    let mut describe = |prefix: &str, list: &[Matrix]| {
        for (i, m) in list.iter().enumerate() {
            tensors.push(TensorInfo {
                name: format!("{prefix}{i}"),
                rows: m.rows(),
                cols: m.cols(),
            });
        }
    };
    describe("weight", &model.weights);
    describe("alpha", &model.alphas);
    describe("beta", &model.betas);
    let header = CheckpointHeader {
        version: RECORD_FORMAT_VERSION,
        spec: model.spec.clone(),
        tensors,
    };
    let header_json = serde_json::to_string(&header)
        .map_err(|e| Error::Invalid(format!("serializing checkpoint header: {e}")))?;

    let mut w =
        std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io_err = |e| Error::io(path, e);
    w.write_all(CHECKPOINT_MAGIC).map_err(io_err)?;
    w.write_all(&(header_json.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(header_json.as_bytes()).map_err(io_err)?;
    for m in model.params() {
        for &v in m.as_slice() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Load a model saved by [`save_checkpoint`], verifying the magic, the
/// header, and that the tensor table matches the spec's parameter shapes.
pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |msg: String| Error::Data(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fail("not a checkpoint (bad magic)".into()));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body_start = 12 + header_len;
    if bytes.len() < body_start {
        return Err(fail("truncated header".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[12..body_start])
        .map_err(|e| fail(format!("bad header: {e}")))?;
    if header.version != RECORD_FORMAT_VERSION {
        return Err(fail(format!("unsupported checkpoint version {}", header.version)));
    }
    header.spec.validate()?;

    let expected: usize = header.tensors.iter().map(|t| t.rows * t.cols).sum();
    let payload = &bytes[body_start..];
    if payload.len() != expected * 8 {
        return Err(fail(format!(
            "payload holds {} bytes, tensor table requires {}",
            payload.len(),
            expected * 8
        )));
    }

    let mut offset = 0usize;
    let mut read_tensor = |info: &TensorInfo| -> Result<Matrix> {
        let count = info.rows * info.cols;
        let mut data = Vec::with_capacity(count);
        let mut chunk = &payload[offset * 8..(offset + count) * 8];
        for _ in 0..count {
            let mut buf = [0u8; 8];
            chunk.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            data.push(f64::from_le_bytes(buf));
        }
        offset += count;
        Matrix::from_flat(info.rows, info.cols, data)
    };

    let mut weights = Vec::new();
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    for info in &header.tensors {
        let m = read_tensor(info)?;
        if info.name.starts_with("weight") {
            weights.push(m);
        } else if info.name.starts_with("alpha") {
            alphas.push(m);
        } else if info.name.starts_with("beta") {
            betas.push(m);
        } else {
            return Err(fail(format!("unknown tensor '{}'", info.name)));
        }
    }
    let model = Model { spec: header.spec, weights, alphas, betas };
    verify_model_shapes(&model).map_err(|e| fail(e.to_string()))?;
    Ok(model)
}

fn verify_model_shapes(model: &Model) -> Result<()> {
    let shapes = model.spec.weight_shapes();
    if model.weights.len() != shapes.len() {
        return Err(Error::Shape(format!(
            "{} weight tensors, spec requires {}",
            model.weights.len(),
            shapes.len()
        )));
    }
    for (i, (m, &(r, c))) in model.weights.iter().zip(&shapes).enumerate() {
        if m.shape() != (r, c) {
            return Err(Error::Shape(format!(
                "weight {i} is {:?}, spec requires ({r}, {c})",
                m.shape()
            )));
        }
    }
    let widths = if model.spec.norm.has_affine_params() {
        model.spec.norm_site_widths()
    } else {
        Vec::new()
    };
    if model.alphas.len() != widths.len() || model.betas.len() != widths.len() {
        return Err(Error::Shape(format!(
            "{} scale / {} shift tensors, spec requires {} of each",
            model.alphas.len(),
            model.betas.len(),
            widths.len()
        )));
    }
    for (m, &width) in model.alphas.iter().zip(&widths).chain(model.betas.iter().zip(&widths)) {
        if m.shape() != (1, width) {
            return Err(Error::Shape(format!(
                "affine tensor is {:?}, spec requires (1, {width})",
                m.shape()
            )));
        }
    }
    Ok(())
}

/// Compute a [`diagnostics::BinReport`] from the recorded test outcomes of
/// a deep run and a shallow run over the same split.
pub fn bins_from_records(deep: &RunRecord, shallow: &RunRecord) -> Result<diagnostics::BinReport> {
    let deep_out = deep
        .diagnostics
        .test_outcomes
        .as_ref()
        .ok_or_else(|| Error::Invalid("deep record has no test outcomes".into()))?;
    let shallow_out = shallow
        .diagnostics
        .test_outcomes
        .as_ref()
        .ok_or_else(|| Error::Invalid("shallow record has no test outcomes".into()))?;
    if deep_out.len() != shallow_out.len()
        || deep_out.iter().zip(shallow_out).any(|(a, b)| a.node != b.node)
    {
        return Err(Error::Invalid(
            "records cover different test sets; bins need a shared split".into(),
        ));
    }
    let variances: Vec<f64> = deep_out.iter().map(|o| o.variance).collect();
    let deep_correct: Vec<bool> = deep_out.iter().map(|o| o.correct).collect();
    let shallow_correct: Vec<bool> = shallow_out.iter().map(|o| o.correct).collect();
    diagnostics::variance_bins(&variances, &deep_correct, &shallow_correct)
}
