//! Command-line front end: train single runs, sweep grids, diagnose
//! checkpoints, and generate synthetic datasets.
//!
//! Exit codes: 0 success, 1 configuration error (including bad flags),
//! 2 data error, 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use gcnlab::autodiff::Tape;
use gcnlab::data::{generate_sbm, load_bundle, make_split, save_bundle, SbmParams, SplitKind,
    SplitSpec};
use gcnlab::diagnostics::{graph_lipschitz, node_variance, variance_profile, correlation_frobenius};
use gcnlab::experiment::{
    argmax_class, load_checkpoint, save_checkpoint, single_cell, sweep, train_with_model,
    RunConfig,
};
use gcnlab::models::{forward, Model};
use gcnlab::report::{bin_gaps_svg, emit_reports, variance_profile_svg};
use gcnlab::rng::seeded;
use gcnlab::{Error, Result};

#[derive(Parser)]
#[command(
    name = "gcnlab",
    version,
    about = "Train and analyze deep graph convolutional networks",
    max_term_width = 100
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model from a JSON config and write reports + checkpoint.
    Train(TrainArgs),
    /// Train a (variant, depth, seed) grid from a base config.
    Sweep(SweepArgs),
    /// Compute diagnostics for a saved checkpoint on a dataset bundle.
    Diagnose(DiagnoseArgs),
    /// Generate a stochastic block model dataset bundle.
    GenSbm(GenSbmArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override a config field by dotted path, e.g. --set optim.lr=0.01
    /// or --set model.norm='{"node_norm":{"p":1}}'.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory for reports and the checkpoint.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Base run configuration (JSON); the grid overrides variant, depth
    /// and seed per cell.
    #[arg(long)]
    config: PathBuf,
    /// Override a base config field by dotted path (applies to every cell).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Comma-separated depths, e.g. 2,4,8,16,32,64.
    #[arg(long)]
    depths: String,
    /// Comma-separated seeds; a..b denotes the inclusive range, e.g. 0..9.
    #[arg(long)]
    seeds: String,
    /// Comma-separated variant presets: gcn, tgcn, pgcn, nodenorm<p>,
    /// layernorm, layernorm-star, layernorm-ms.
    #[arg(long)]
    variants: String,
    /// Output directory for reports.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Model checkpoint to analyze.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Optional second (shallower) checkpoint; enables accuracy-by-variance
    /// bins over the bundle's test split.
    #[arg(long)]
    shallow_checkpoint: Option<PathBuf>,
    /// Dataset bundle directory.
    #[arg(long)]
    dataset: PathBuf,
    /// Sample at most this many node pairs for the Lipschitz estimate
    /// (default: exhaustive below the built-in node-count cutoff).
    #[arg(long)]
    pair_limit: Option<usize>,
    /// Seed for pair sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenSbmArgs {
    #[arg(long)]
    blocks: usize,
    #[arg(long)]
    nodes_per_block: usize,
    /// Intra-block edge probability.
    #[arg(long)]
    p_in: f64,
    /// Inter-block edge probability.
    #[arg(long)]
    p_out: f64,
    /// Feature dimension (default: one per block).
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Gaussian feature noise scale.
    #[arg(long, default_value_t = 0.5)]
    feature_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also embed a per-class split with this many training nodes per class.
    #[arg(long)]
    train_per_class: Option<usize>,
    /// Validation-set size for the embedded split.
    #[arg(long, default_value_t = 0)]
    val_size: usize,
    /// Test-set size for the embedded split.
    #[arg(long, default_value_t = 0)]
    test_size: usize,
    /// Output bundle directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes, not usage errors.
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::GenSbm(args) => cmd_gen_sbm(args),
    }
}

/// Apply `--set key=value` overrides onto the raw JSON config.
fn apply_overrides(config: &mut serde_json::Value, sets: &[String]) -> Result<()> {
    for entry in sets {
        let (key, raw) = entry.split_once('=').ok_or_else(|| {
            Error::Config(format!("--set expects KEY=VALUE, got '{entry}'"))
        })?;
        if key.is_empty() {
            return Err(Error::Config(format!("--set '{entry}' has an empty key")));
        }
        let value: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut cursor = &mut *config;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            let obj = cursor.as_object_mut().ok_or_else(|| {
                Error::Config(format!("--set path '{key}': '{part}' is not an object"))
            })?;
            cursor = obj
                .entry(part.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
        }
        let obj = cursor.as_object_mut().ok_or_else(|| {
            Error::Config(format!("--set path '{key}' does not address an object field"))
        })?;
        obj.insert(parts[parts.len() - 1].to_string(), value);
    }
    Ok(())
}

fn load_config(path: &Path, sets: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    apply_overrides(&mut value, sets)?;
    let config: RunConfig = serde_json::from_value(value)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Parse "2,4,8" or "0..9" (inclusive) or any comma mix of both.
fn parse_grid_list(text: &str, what: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        if let Some((a, b)) = item.split_once("..") {
            let lo: u64 = a.trim().parse().map_err(|_| {
                Error::Config(format!("bad {what} range '{item}'"))
            })?;
            let hi: u64 = b.trim().parse().map_err(|_| {
                Error::Config(format!("bad {what} range '{item}'"))
            })?;
            if hi < lo {
                return Err(Error::Config(format!("{what} range '{item}' is empty")));
            }
            out.extend(lo..=hi);
        } else {
            out.push(item.parse().map_err(|_| {
                Error::Config(format!("bad {what} value '{item}'"))
            })?);
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no {what} values given")));
    }
    Ok(out)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = load_config(&args.config, &args.set)?;
    let (record, model) = train_with_model(&config)?;
    let test_acc = record.test_acc;
    let wall = record.wall_time_secs;
    let epochs = config.optim.epochs;
    let manifest = emit_reports(&[single_cell(record)], &args.out)?;
    let ckpt = args.out.join("model.ckpt");
    save_checkpoint(&model, &ckpt)?;
    println!(
        "trained {} epochs in {wall:.2}s; test accuracy {}",
        epochs,
        gcnlab::report::fmt_float(test_acc)
    );
    println!(
        "wrote {} ({} records, {} figures) and {}",
        args.out.join("results.csv").display(),
        manifest.records.len(),
        manifest.figures.len(),
        ckpt.display()
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let config = load_config(&args.config, &args.set)?;
    let depths: Vec<usize> = parse_grid_list(&args.depths, "depth")?
        .into_iter()
        .map(|d| d as usize)
        .collect();
    let seeds = parse_grid_list(&args.seeds, "seed")?;
    let variants: Vec<String> = args
        .variants
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let results = sweep(&config, &depths, &seeds, &variants)?;
    let failures = results.iter().filter(|r| r.outcome.is_err()).count();
    let manifest = emit_reports(&results, &args.out)?;
    println!(
        "swept {} cells ({} ok, {failures} failed); wrote {}",
        results.len(),
        manifest.runs,
        args.out.join("results.csv").display()
    );
    for skip in &manifest.skipped_figures {
        eprintln!("note: skipped {}: {}", skip.figure, skip.reason);
    }
    if failures > 0 {
        for f in manifest.failures.iter().take(3) {
            eprintln!(
                "warning: {} depth {} seed {} failed: {}",
                f.variant, f.depth, f.seed, f.error
            );
        }
        if manifest.runs == 0 {
            return Err(Error::Data("every sweep cell failed".into()));
        }
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct DiagnoseOutput {
    format_version: u32,
    dataset: String,
    spec: gcnlab::models::ModelSpec,
    variance_profile: gcnlab::diagnostics::VarianceProfile,
    lipschitz: gcnlab::diagnostics::LipschitzReport,
    correlation_per_layer: Vec<f64>,
    bins: Option<gcnlab::diagnostics::BinReport>,
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let model = load_checkpoint(&args.checkpoint)?;
    let (ds, warnings) = load_bundle(&args.dataset)?;
    if warnings.duplicate_edges + warnings.self_loops > 0 {
        eprintln!(
            "note: dropped {} duplicate edges and {} self-loops while loading",
            warnings.duplicate_edges, warnings.self_loops
        );
    }
    if ds.dim() != model.spec.input_dim {
        return Err(Error::Data(format!(
            "dataset '{}' has {} features but the checkpoint expects {}",
            ds.name,
            ds.dim(),
            model.spec.input_dim
        )));
    }
    if ds.num_classes != model.spec.num_classes {
        return Err(Error::Data(format!(
            "dataset '{}' has {} classes but the checkpoint expects {}",
            ds.name,
            ds.num_classes,
            model.spec.num_classes
        )));
    }
    let adj = Arc::new(
        gcnlab::graph::SparseAdjacency::from_edges(ds.n(), &ds.edges)?.renormalize()?,
    );

    let profile = variance_profile(&model, &ds.features, &adj)?;
    let lipschitz = graph_lipschitz(&model, &ds.features, &adj, args.pair_limit, args.seed)?;
    let mut tape = Tape::new();
    let pass = forward(&model, &mut tape, &ds.features, &adj, false, &mut seeded(0))?;
    let mut correlation_per_layer = Vec::with_capacity(pass.hidden.len());
    for &id in &pass.hidden {
        correlation_per_layer.push(correlation_frobenius(tape.value(id))?);
    }

    let bins = match &args.shallow_checkpoint {
        Some(path) => Some(compute_bins(&model, &load_checkpoint(path)?, &ds, &adj)?),
        None => None,
    };

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let output = DiagnoseOutput {
        format_version: gcnlab::experiment::RECORD_FORMAT_VERSION,
        dataset: ds.name.clone(),
        spec: model.spec.clone(),
        variance_profile: profile,
        lipschitz,
        correlation_per_layer,
        bins,
    };
    let json_path = args.out.join("diagnostics.json");
    let json = serde_json::to_string_pretty(&output)
        .map_err(|e| Error::Invalid(format!("serializing diagnostics: {e}")))?;
    std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;

    let mut figures = Vec::new();
    let label = format!("{}, depth {}", output.spec.variant.token(), output.spec.depth);
    if let Some(svg) = variance_profile_svg(&output.variance_profile, &label) {
        let path = args.out.join("variance_profile.svg");
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        figures.push("variance_profile.svg");
    }
    if let Some(bins) = &output.bins {
        let svg = bin_gaps_svg(bins, "Accuracy gap by variance bin (shallow vs deep)");
        let path = args.out.join("bin_gaps.svg");
        std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        figures.push("bin_gaps.svg");
    }
    println!(
        "graph Lipschitz {} over {} pairs; wrote {} and {} figure(s)",
        gcnlab::report::fmt_float(output.lipschitz.value),
        output.lipschitz.pairs_used,
        json_path.display(),
        figures.len()
    );
    Ok(())
}

/// Accuracy-by-variance bins of `deep` vs `shallow` over the bundle's test
/// split.
fn compute_bins(
    deep: &Model,
    shallow: &Model,
    ds: &gcnlab::data::GraphDataset,
    adj: &Arc<gcnlab::graph::SparseAdjacency>,
) -> Result<gcnlab::diagnostics::BinReport> {
    let splits = ds.splits.as_ref().ok_or_else(|| {
        Error::Data("variance bins need a bundle with embedded splits (test mask)".into())
    })?;
    let evaluate = |model: &Model| -> Result<(Vec<bool>, Vec<f64>)> {
        let mut tape = Tape::new();
        let pass = forward(model, &mut tape, &ds.features, adj, false, &mut seeded(0))?;
        let logits = tape.value(pass.logits);
        let deepest = pass.hidden[pass.hidden.len() - 2];
        let variances = node_variance(tape.value(deepest));
        let mut correct = Vec::new();
        let mut vars = Vec::new();
        for (i, &variance) in variances.iter().enumerate() {
            if !splits.test[i] {
                continue;
            }
            correct.push(argmax_class(logits.row(i)) == ds.labels[i] as usize);
            vars.push(variance);
        }
        Ok((correct, vars))
    };
    let (deep_correct, deep_vars) = evaluate(deep)?;
    let (shallow_correct, _) = evaluate(shallow)?;
    gcnlab::diagnostics::variance_bins(&deep_vars, &deep_correct, &shallow_correct)
}

fn cmd_gen_sbm(args: GenSbmArgs) -> Result<()> {
    let params = SbmParams {
        blocks: args.blocks,
        nodes_per_block: args.nodes_per_block,
        p_in: args.p_in,
        p_out: args.p_out,
        feature_dim: args.feature_dim.unwrap_or(args.blocks),
        feature_noise: args.feature_noise,
    };
    let mut ds = generate_sbm(&params, &mut seeded(args.seed))?;
    if let Some(k) = args.train_per_class {
        let spec = SplitSpec {
            kind: SplitKind::PerClass { k },
            val_size: args.val_size,
            test_size: args.test_size,
            seed: Some(args.seed),
        };
        ds.splits = Some(make_split(&ds, &spec, &mut seeded(args.seed))?);
    }
    save_bundle(&ds, &args.out)?;
    println!(
        "wrote bundle '{}' to {} ({} nodes, {} edges{})",
        ds.name,
        args.out.display(),
        ds.n(),
        ds.edges.len(),
        match &ds.splits {
            Some(s) => {
                let (tr, va, te) = s.counts();
                format!(", splits {tr}/{va}/{te}")
            }
            None => String::new(),
        }
    );
    Ok(())
}
