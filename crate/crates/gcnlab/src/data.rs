//! Datasets: the plain-text graph bundle format, split construction, feature
//! masking, and a stochastic block model generator.
//!
//! A *bundle* is a directory of small text files:
//!
//! ```text
//! meta.json      {"n": int, "d": int, "num_classes": int, "name": string}
//! edges.tsv      one undirected edge per line, "u<TAB>v", 0-based
//! features.csv   n lines of d comma-separated reals
//! labels.txt     n lines, integer class or -1 for unlabeled
//! splits.json    optional {"train": [ids], "val": [ids], "test": [ids]}
//! ```
//!
//! [`save_bundle`] emits exactly this layout and [`load_bundle`] validates it
//! back in; the round trip is the identity (floats are written in shortest
//! round-trip decimal form).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Boolean node masks for the three roles. Masks are disjoint by
/// construction everywhere in this crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Splits {
    fn empty(n: usize) -> Self {
        Splits { train: vec![false; n], val: vec![false; n], test: vec![false; n] }
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let c = |v: &[bool]| v.iter().filter(|&&b| b).count();
        (c(&self.train), c(&self.val), c(&self.test))
    }
}

/// An attributed graph with optional labels and masks.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    /// `n x d` node features.
    pub features: Matrix,
    /// Per-node class in `[0, num_classes)`, or -1 for unlabeled.
    pub labels: Vec<i64>,
    /// Canonical undirected edge list: `u < v`, sorted, unique.
    pub edges: Vec<(usize, usize)>,
    pub num_classes: usize,
    pub splits: Option<Splits>,
}

impl GraphDataset {
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Structural validation of all invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.labels.len() != n {
            return Err(Error::Data(format!(
                "dataset '{}': {} labels for {} nodes",
                self.name,
                self.labels.len(),
                n
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Data(format!("dataset '{}': num_classes is 0", self.name)));
        }
        for (i, &l) in self.labels.iter().enumerate() {
            if l < -1 || l >= self.num_classes as i64 {
                return Err(Error::Data(format!(
                    "dataset '{}': label {l} of node {i} outside [-1, {})",
                    self.name, self.num_classes
                )));
            }
        }
        for (k, &(u, v)) in self.edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::Data(format!(
                    "dataset '{}': edge {k} = ({u}, {v}) out of range for n = {n}",
                    self.name
                )));
            }
            if u >= v {
                return Err(Error::Data(format!(
                    "dataset '{}': edge {k} = ({u}, {v}) is not in canonical u < v form",
                    self.name
                )));
            }
        }
        if let Some(s) = &self.splits {
            if s.train.len() != n || s.val.len() != n || s.test.len() != n {
                return Err(Error::Data(format!(
                    "dataset '{}': split masks do not cover all {n} nodes",
                    self.name
                )));
            }
            for i in 0..n {
                let roles =
                    usize::from(s.train[i]) + usize::from(s.val[i]) + usize::from(s.test[i]);
                if roles > 1 {
                    return Err(Error::Data(format!(
                        "dataset '{}': node {i} belongs to multiple splits",
                        self.name
                    )));
                }
                if roles == 1 && self.labels[i] < 0 {
                    return Err(Error::Data(format!(
                        "dataset '{}': node {i} is in a split but unlabeled",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Indices of labeled nodes, ascending.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] >= 0).collect()
    }
}

/// Counts of dirty edge entries dropped by [`load_bundle`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BundleWarnings {
    pub duplicate_edges: usize,
    pub self_loops: usize,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    n: usize,
    d: usize,
    num_classes: usize,
    name: String,
}

#[derive(Serialize, Deserialize)]
struct SplitIds {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Load and validate a bundle directory.
///
/// Duplicate edges and self-loops are dropped (the counts are returned so
/// callers can warn); all other irregularities are hard errors naming the
/// offending file and line.
pub fn load_bundle(dir: &Path) -> Result<(GraphDataset, BundleWarnings)> {
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read_to_string(&meta_path)?)
        .map_err(|e| Error::Data(format!("{}: {e}", meta_path.display())))?;
    if meta.n == 0 || meta.d == 0 || meta.num_classes == 0 {
        return Err(Error::Data(format!(
            "{}: n, d and num_classes must be positive",
            meta_path.display()
        )));
    }

    // features.csv
    let feat_path = dir.join("features.csv");
    let file = fs::File::open(&feat_path).map_err(|e| Error::io(&feat_path, e))?;
    let mut data = Vec::with_capacity(meta.n * meta.d);
    let mut rows = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&feat_path, e))?;
        if line.is_empty() {
            continue;
        }
        rows += 1;
        if rows > meta.n {
            break;
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{} line {}: '{}' is not a real number",
                    feat_path.display(),
                    lineno + 1,
                    field.trim()
                ))
            })?;
            data.push(v);
        }
        if data.len() - before != meta.d {
            return Err(Error::Data(format!(
                "{} line {}: {} values, expected {}",
                feat_path.display(),
                lineno + 1,
                data.len() - before,
                meta.d
            )));
        }
    }
    if rows != meta.n {
        return Err(Error::Data(format!(
            "{}: {} feature rows, expected {}",
            feat_path.display(),
            rows,
            meta.n
        )));
    }
    let features = Matrix::from_flat(meta.n, meta.d, data)?;

    // labels.txt
    let labels_path = dir.join("labels.txt");
    let mut labels = Vec::with_capacity(meta.n);
    for (lineno, line) in read_to_string(&labels_path)?.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let l: i64 = line.trim().parse().map_err(|_| {
            Error::Data(format!(
                "{} line {}: '{}' is not an integer",
                labels_path.display(),
                lineno + 1,
                line.trim()
            ))
        })?;
        labels.push(l);
    }
    if labels.len() != meta.n {
        return Err(Error::Data(format!(
            "{}: {} labels, expected {}",
            labels_path.display(),
            labels.len(),
            meta.n
        )));
    }

    // edges.tsv
    let edges_path = dir.join("edges.tsv");
    let mut raw_edges = Vec::new();
    for (lineno, line) in read_to_string(&edges_path)?.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let parse = |s: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{} line {}: '{}' is not a node id",
                    edges_path.display(),
                    lineno + 1,
                    s.trim()
                ))
            })
        };
        let mut parts = line.splitn(2, '\t');
        let (u, v) = match (parts.next(), parts.next()) {
            (Some(a), Some(b)) => (parse(a)?, parse(b)?),
            _ => {
                return Err(Error::Data(format!(
                    "{} line {}: expected 'u<TAB>v'",
                    edges_path.display(),
                    lineno + 1
                )))
            }
        };
        if u >= meta.n || v >= meta.n {
            return Err(Error::Data(format!(
                "{} line {}: endpoint out of range (n = {})",
                edges_path.display(),
                lineno + 1,
                meta.n
            )));
        }
        raw_edges.push((u, v));
    }
    let mut warnings = BundleWarnings::default();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(raw_edges.len());
    for (u, v) in raw_edges {
        if u == v {
            warnings.self_loops += 1;
            continue;
        }
        edges.push((u.min(v), u.max(v)));
    }
    edges.sort_unstable();
    let before = edges.len();
    edges.dedup();
    warnings.duplicate_edges = before - edges.len();

    // splits.json (optional)
    let splits_path = dir.join("splits.json");
    let splits = if splits_path.exists() {
        Some(parse_split_ids(&read_to_string(&splits_path)?, meta.n, &splits_path)?)
    } else {
        None
    };

    let ds = GraphDataset {
        name: meta.name,
        features,
        labels,
        edges,
        num_classes: meta.num_classes,
        splits,
    };
    ds.validate()?;
    Ok((ds, warnings))
}

fn parse_split_ids(text: &str, n: usize, path: &Path) -> Result<Splits> {
    let ids: SplitIds = serde_json::from_str(text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut splits = Splits::empty(n);
    let mut fill = |list: &[usize], mask_name: &str| -> Result<()> {
        for &i in list {
            if i >= n {
                return Err(Error::Data(format!(
                    "{}: {mask_name} id {i} out of range (n = {n})",
                    path.display()
                )));
            }
            let already = splits.train[i] || splits.val[i] || splits.test[i];
            if already {
                return Err(Error::Data(format!(
                    "{}: node {i} appears in more than one split",
                    path.display()
                )));
            }
            match mask_name {
                "train" => splits.train[i] = true,
                "val" => splits.val[i] = true,
                _ => splits.test[i] = true,
            }
        }
        Ok(())
    };
    fill(&ids.train, "train")?;
    fill(&ids.val, "val")?;
    fill(&ids.test, "test")?;
    Ok(splits)
}

/// Write `ds` as a bundle directory (created if needed).
pub fn save_bundle(ds: &GraphDataset, dir: &Path) -> Result<()> {
    ds.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = Meta {
        n: ds.n(),
        d: ds.dim(),
        num_classes: ds.num_classes,
        name: ds.name.clone(),
    };
    let meta_path = dir.join("meta.json");
    let meta_json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Data(format!("serializing meta: {e}")))?;
    fs::write(&meta_path, meta_json + "\n").map_err(|e| Error::io(&meta_path, e))?;

    let edges_path = dir.join("edges.tsv");
    let mut w = BufWriter::new(fs::File::create(&edges_path).map_err(|e| Error::io(&edges_path, e))?);
    for &(u, v) in &ds.edges {
        writeln!(w, "{u}\t{v}").map_err(|e| Error::io(&edges_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&edges_path, e))?;

    let feat_path = dir.join("features.csv");
    let mut w = BufWriter::new(fs::File::create(&feat_path).map_err(|e| Error::io(&feat_path, e))?);
    for i in 0..ds.n() {
        let mut first = true;
        for &v in ds.features.row(i) {
            if !first {
                write!(w, ",").map_err(|e| Error::io(&feat_path, e))?;
            }
            write!(w, "{v}").map_err(|e| Error::io(&feat_path, e))?;
            first = false;
        }
        writeln!(w).map_err(|e| Error::io(&feat_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&feat_path, e))?;

    let labels_path = dir.join("labels.txt");
    let mut w =
        BufWriter::new(fs::File::create(&labels_path).map_err(|e| Error::io(&labels_path, e))?);
    for &l in &ds.labels {
        writeln!(w, "{l}").map_err(|e| Error::io(&labels_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&labels_path, e))?;

    if let Some(s) = &ds.splits {
        let pick = |mask: &[bool]| -> Vec<usize> {
            mask.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect()
        };
        let ids = SplitIds { train: pick(&s.train), val: pick(&s.val), test: pick(&s.test) };
        let splits_path = dir.join("splits.json");
        let json = serde_json::to_string_pretty(&ids)
            .map_err(|e| Error::Data(format!("serializing splits: {e}")))?;
        fs::write(&splits_path, json + "\n").map_err(|e| Error::io(&splits_path, e))?;
    }
    Ok(())
}

/// How to partition labeled nodes into train/val/test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// `k` labeled nodes per class for training; `val_size`/`test_size`
    /// nodes sampled from the remaining labeled nodes.
    PerClass { k: usize },
    /// Seeded shuffle of labeled nodes, proportional cut. Fractions must be
    /// positive and sum to at most 1.
    Fraction { train: f64, val: f64, test: f64 },
    /// Use pre-assigned splits: from `file` (splits.json layout) when given,
    /// otherwise the ones embedded in the dataset.
    Fixed { file: Option<PathBuf> },
}

/// Full split request. `val_size`/`test_size` apply to
/// [`SplitKind::PerClass`] only. `seed`, when set, overrides the RNG the
/// caller passes to [`make_split`] (useful to share one split across runs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    #[serde(default)]
    pub val_size: usize,
    #[serde(default)]
    pub test_size: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Construct split masks for `ds` according to `spec`.
///
/// Deterministic given the generator state; classes are visited in ascending
/// label order and candidate pools are index-sorted before sampling, so the
/// same seed always yields the same masks.
pub fn make_split(ds: &GraphDataset, spec: &SplitSpec, rng: &mut Rng) -> Result<Splits> {
    let mut local;
    let rng = match spec.seed {
        Some(s) => {
            local = crate::rng::seeded(s);
            &mut local
        }
        None => rng,
    };
    match &spec.kind {
        SplitKind::PerClass { k } => {
            if *k == 0 || spec.val_size == 0 || spec.test_size == 0 {
                return Err(Error::Config(
                    "per_class split requires k, val_size and test_size to be positive".into(),
                ));
            }
            let n = ds.n();
            let mut splits = Splits::empty(n);
            for class in 0..ds.num_classes as i64 {
                let pool: Vec<usize> =
                    (0..n).filter(|&i| ds.labels[i] == class).collect();
                if pool.len() < *k {
                    return Err(Error::Data(format!(
                        "class {class} has only {} labeled nodes, need {k}",
                        pool.len()
                    )));
                }
                for idx in rand::seq::index::sample(rng, pool.len(), *k) {
                    splits.train[pool[idx]] = true;
                }
            }
            let mut rest: Vec<usize> = ds
                .labeled_nodes()
                .into_iter()
                .filter(|&i| !splits.train[i])
                .collect();
            if rest.len() < spec.val_size + spec.test_size {
                return Err(Error::Data(format!(
                    "only {} labeled nodes remain for val+test = {}",
                    rest.len(),
                    spec.val_size + spec.test_size
                )));
            }
            rest.shuffle(rng);
            for &i in &rest[..spec.val_size] {
                splits.val[i] = true;
            }
            for &i in &rest[spec.val_size..spec.val_size + spec.test_size] {
                splits.test[i] = true;
            }
            Ok(splits)
        }
        SplitKind::Fraction { train, val, test } => {
            for (name, f) in [("train", train), ("val", val), ("test", test)] {
                if !(*f > 0.0 && *f <= 1.0) {
                    return Err(Error::Config(format!(
                        "fraction '{name}' must be in (0, 1], got {f}"
                    )));
                }
            }
            if train + val + test > 1.0 + 1e-9 {
                return Err(Error::Config(format!(
                    "fractions sum to {} > 1",
                    train + val + test
                )));
            }
            let mut pool = ds.labeled_nodes();
            let m = pool.len();
            let n_train = (train * m as f64).floor() as usize;
            let n_val = (val * m as f64).floor() as usize;
            let n_test = (test * m as f64).floor() as usize;
            if n_train == 0 || n_val == 0 || n_test == 0 {
                return Err(Error::Data(format!(
                    "fractional split of {m} labeled nodes yields an empty mask \
                     ({n_train}/{n_val}/{n_test})"
                )));
            }
            pool.shuffle(rng);
            let mut splits = Splits::empty(ds.n());
            for &i in &pool[..n_train] {
                splits.train[i] = true;
            }
            for &i in &pool[n_train..n_train + n_val] {
                splits.val[i] = true;
            }
            for &i in &pool[n_train + n_val..n_train + n_val + n_test] {
                splits.test[i] = true;
            }
            Ok(splits)
        }
        SplitKind::Fixed { file } => match file {
            Some(path) => {
                let text = read_to_string(path)?;
                let splits = parse_split_ids(&text, ds.n(), path)?;
                validate_fixed_splits(ds, &splits)?;
                Ok(splits)
            }
            None => {
                let splits = ds.splits.clone().ok_or_else(|| {
                    Error::Data(format!(
                        "dataset '{}' carries no splits and none were supplied",
                        ds.name
                    ))
                })?;
                validate_fixed_splits(ds, &splits)?;
                Ok(splits)
            }
        },
    }
}

fn validate_fixed_splits(ds: &GraphDataset, splits: &Splits) -> Result<()> {
    let (tr, va, te) = splits.counts();
    if tr == 0 || va == 0 || te == 0 {
        return Err(Error::Data(format!(
            "fixed splits are unusable: sizes {tr}/{va}/{te}"
        )));
    }
    for i in 0..ds.n() {
        if (splits.train[i] || splits.val[i] || splits.test[i]) && ds.labels[i] < 0 {
            return Err(Error::Data(format!("split node {i} is unlabeled")));
        }
    }
    Ok(())
}

/// Zero out the feature rows of a seeded sample of nodes.
///
/// Eligible nodes are the non-training ones when `protect_train` is set
/// (masks must be assigned), or all nodes otherwise. Exactly
/// `round(rate * eligible)` rows are zeroed, sampled without replacement.
/// Returns the number of rows zeroed.
pub fn mask_features(
    ds: &mut GraphDataset,
    rate: f64,
    protect_train: bool,
    rng: &mut Rng,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("missing rate must be in [0, 1], got {rate}")));
    }
    if rate == 0.0 {
        return Ok(0);
    }
    let eligible: Vec<usize> = if protect_train {
        let splits = ds.splits.as_ref().ok_or_else(|| {
            Error::Data("mask_features with protect_train requires assigned splits".into())
        })?;
        (0..ds.n()).filter(|&i| !splits.train[i]).collect()
    } else {
        (0..ds.n()).collect()
    };
    let count = (rate * eligible.len() as f64).round() as usize;
    if count == 0 {
        return Ok(0);
    }
    for idx in rand::seq::index::sample(rng, eligible.len(), count) {
        let node = eligible[idx];
        for v in ds.features.row_mut(node) {
            *v = 0.0;
        }
    }
    Ok(count)
}

/// Parameters of the stochastic block model generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub blocks: usize,
    pub nodes_per_block: usize,
    /// Intra-block edge probability.
    pub p_in: f64,
    /// Inter-block edge probability; must be `< p_in`.
    pub p_out: f64,
    /// Feature dimension; must be at least `blocks` (the first `blocks`
    /// coordinates carry the one-hot block centroid).
    pub feature_dim: usize,
    /// Standard deviation of the Gaussian noise added to every coordinate.
    pub feature_noise: f64,
}

/// Generate a stochastic block model dataset.
///
/// Labels are block ids; features are the block's one-hot centroid plus
/// `feature_noise * N(0, 1)` per coordinate. Edges are drawn first (pairs in
/// lexicographic order), then features (nodes in order), so the output is a
/// pure function of the generator state.
pub fn generate_sbm(params: &SbmParams, rng: &mut Rng) -> Result<GraphDataset> {
    if params.blocks == 0 || params.nodes_per_block == 0 {
        return Err(Error::Config("sbm: blocks and nodes_per_block must be positive".into()));
    }
    if !(0.0..=1.0).contains(&params.p_in) || !(0.0..=1.0).contains(&params.p_out) {
        return Err(Error::Config("sbm: probabilities must lie in [0, 1]".into()));
    }
    if params.p_out >= params.p_in {
        return Err(Error::Config(format!(
            "sbm: requires p_out < p_in, got p_out = {} >= p_in = {}",
            params.p_out, params.p_in
        )));
    }
    if params.feature_dim < params.blocks {
        return Err(Error::Config(format!(
            "sbm: feature_dim {} cannot hold one-hot centroids for {} blocks",
            params.feature_dim, params.blocks
        )));
    }
    if params.feature_noise < 0.0 {
        return Err(Error::Config("sbm: feature_noise must be >= 0".into()));
    }
    let n = params.blocks * params.nodes_per_block;
    let block_of = |i: usize| i / params.nodes_per_block;

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if block_of(u) == block_of(v) { params.p_in } else { params.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut features = Matrix::zeros(n, params.feature_dim);
    for i in 0..n {
        let b = block_of(i);
        let row = features.row_mut(i);
        row[b] = 1.0;
        if params.feature_noise > 0.0 {
            for v in row.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += params.feature_noise * z;
            }
        }
    }

    let labels: Vec<i64> = (0..n).map(|i| block_of(i) as i64).collect();
    let ds = GraphDataset {
        name: format!("sbm-b{}-n{}", params.blocks, params.nodes_per_block),
        features,
        labels,
        edges,
        num_classes: params.blocks,
        splits: None,
    };
    ds.validate()?;
    Ok(ds)
}
