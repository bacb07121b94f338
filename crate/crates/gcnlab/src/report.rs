//! Report emission: CSV tables, per-run JSON records, SVG figures and a
//! manifest tying them together.
//!
//! Everything written here is a pure function of the run records (wall-clock
//! times are deliberately kept out of the CSVs), and floats are printed in
//! shortest round-trip decimal form, so re-emitting the same results yields
//! byte-identical tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{bins_from_records, CellResult, RunRecord, RECORD_FORMAT_VERSION};

/// Shortest decimal string that parses back to exactly `v`.
pub fn fmt_float(v: f64) -> String {
    format!("{v}")
}

/// A figure that could not be produced, and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FigureSkip {
    pub figure: String,
    pub reason: String,
}

/// A grid cell whose training failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureNote {
    pub variant: String,
    pub depth: usize,
    pub seed: u64,
    pub error: String,
}

/// Index of everything [`emit_reports`] wrote (saved as `manifest.json`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// Successful runs feeding the tables.
    pub runs: usize,
    pub failures: Vec<FailureNote>,
    pub results_csv: String,
    pub aggregate_csv: String,
    pub records: Vec<String>,
    pub figures: Vec<String>,
    pub skipped_figures: Vec<FigureSkip>,
}

const RESULTS_HEADER: &str = "dataset,variant,norm,placement,residual,depth,hidden_dim,\
dropout,lr,weight_decay,l1_weight,epochs,seed,final_train_loss,final_train_acc,\
final_val_loss,final_val_acc,test_acc,acc_gap,loss_gap,lipschitz,correlation_final";

fn placement_token(record: &RunRecord) -> &'static str {
    match record.spec.placement {
        crate::models::NormPlacement::AfterConv => "after_conv",
        crate::models::NormPlacement::InsideConv => "inside_conv",
    }
}

fn sort_key(r: &RunRecord) -> (String, String, usize, u64) {
    (
        r.spec.variant.token().to_string(),
        r.spec.norm.token(),
        r.spec.depth,
        r.config.seed,
    )
}

fn results_csv(records: &[&RunRecord]) -> String {
    let mut rows: Vec<&RunRecord> = records.to_vec();
    rows.sort_by_key(|r| sort_key(r));
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        let h = &r.history;
        let last = h.train_loss.len() - 1;
        let lipschitz = r
            .diagnostics
            .lipschitz
            .as_ref()
            .map(|l| fmt_float(l.value))
            .unwrap_or_default();
        let correlation = r
            .diagnostics
            .correlation_per_layer
            .as_ref()
            .and_then(|c| c.last())
            .map(|&v| fmt_float(v))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.data.name,
            r.spec.variant.token(),
            r.spec.norm.token(),
            placement_token(r),
            r.spec.residual,
            r.spec.depth,
            r.spec.hidden_dim,
            fmt_float(r.spec.dropout_rate),
            fmt_float(r.config.optim.lr),
            fmt_float(r.config.optim.weight_decay),
            fmt_float(r.config.optim.l1_weight),
            r.config.optim.epochs,
            r.config.seed,
            fmt_float(h.train_loss[last]),
            fmt_float(h.train_acc[last]),
            fmt_float(h.val_loss[last]),
            fmt_float(h.val_acc[last]),
            fmt_float(r.test_acc),
            fmt_float(r.overfit.acc_gap),
            fmt_float(r.overfit.loss_gap),
            lipschitz,
            correlation,
        );
    }
    out
}

/// Mean and population standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn aggregate_csv(records: &[&RunRecord]) -> String {
    let mut groups: BTreeMap<(String, String, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((
                r.spec.variant.token().to_string(),
                r.spec.norm.token(),
                r.spec.depth,
            ))
            .or_default()
            .push(r);
    }
    let mut out = String::from(
        "variant,norm,depth,runs,mean_test_acc,std_test_acc,mean_acc_gap,mean_loss_gap\n",
    );
    for ((variant, norm, depth), rs) in groups {
        let accs: Vec<f64> = rs.iter().map(|r| r.test_acc).collect();
        let (mean_acc, std_acc) = mean_std(&accs);
        let (mean_gap, _) = mean_std(&rs.iter().map(|r| r.overfit.acc_gap).collect::<Vec<_>>());
        let (mean_loss_gap, _) =
            mean_std(&rs.iter().map(|r| r.overfit.loss_gap).collect::<Vec<_>>());
        let _ = writeln!(
            out,
            "{variant},{norm},{depth},{},{},{},{},{}",
            rs.len(),
            fmt_float(mean_acc),
            fmt_float(std_acc),
            fmt_float(mean_gap),
            fmt_float(mean_loss_gap),
        );
    }
    out
}

fn record_file_name(r: &RunRecord) -> String {
    format!(
        "run_{}-{}_d{}_s{}.json",
        r.spec.variant.token(),
        r.spec.norm.token(),
        r.spec.depth,
        r.config.seed
    )
}

// ---------------------------------------------------------------------------
// Minimal deterministic SVG writer.

struct Svg {
    width: f64,
    height: f64,
    body: String,
}

const PALETTE: [&str; 9] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
    "#7f7f7f",
];

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Svg { width, height, body: String::new() }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="{width:.2}"/>"#
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], stroke: &str) {
        if points.len() < 2 {
            return;
        }
        let pts: Vec<String> =
            points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="1.80"/>"#,
            pts.join(" ")
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="{fill}"/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let escaped = content.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size:.1}" font-family="sans-serif" text-anchor="{anchor}">{escaped}</text>"#
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" \
             viewBox=\"0 0 {:.0} {:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.width, self.height, self.width, self.height, self.body
        )
    }
}

/// Plot area with margins and linear value -> pixel mapping.
struct Frame {
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(width: f64, height: f64, x: (f64, f64), y: (f64, f64)) -> Self {
        Frame {
            left: 62.0,
            right: width - 18.0,
            top: 22.0,
            bottom: height - 46.0,
            x_min: x.0,
            x_max: x.1,
            y_min: y.0,
            y_max: y.1,
        }
    }

    fn px(&self, x: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-12);
        self.left + (x - self.x_min) / span * (self.right - self.left)
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-12);
        self.bottom - (y - self.y_min) / span * (self.bottom - self.top)
    }

    fn draw_axes(&self, svg: &mut Svg, x_label: &str, y_label: &str, title: &str) {
        svg.line(self.left, self.bottom, self.right, self.bottom, "#333333", 1.0);
        svg.line(self.left, self.top, self.left, self.bottom, "#333333", 1.0);
        let mid_x = (self.left + self.right) / 2.0;
        svg.text(mid_x, self.bottom + 34.0, 12.0, "middle", x_label);
        svg.text(mid_x, 14.0, 13.0, "middle", title);
        // Vertical axis label, written horizontally above the axis to keep
        // the writer transform-free.
        svg.text(self.left - 48.0, self.top - 6.0, 11.0, "start", y_label);
        for i in 0..=4 {
            let v = self.y_min + (self.y_max - self.y_min) * i as f64 / 4.0;
            let y = self.py(v);
            svg.line(self.left - 4.0, y, self.left, y, "#333333", 1.0);
            svg.line(self.left, y, self.right, y, "#e0e0e0", 0.5);
            svg.text(self.left - 7.0, y + 4.0, 10.0, "end", &format!("{v:.2}"));
        }
    }
}

fn accuracy_vs_depth_figure(records: &[&RunRecord]) -> Option<String> {
    let mut depths: Vec<usize> = records.iter().map(|r| r.spec.depth).collect();
    depths.sort_unstable();
    depths.dedup();
    if records.is_empty() || depths.is_empty() {
        return None;
    }
    // Series keyed by architecture + normalization.
    let mut series: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in records {
        let name = if r.spec.norm == crate::norm::NormKind::None {
            r.spec.variant.token().to_string()
        } else {
            format!("{}+{}", r.spec.variant.token(), r.spec.norm.token())
        };
        series
            .entry(name)
            .or_default()
            .entry(r.spec.depth)
            .or_default()
            .push(r.test_acc);
    }
    let (w, h) = (640.0, 420.0);
    let mut svg = Svg::new(w, h);
    let frame = Frame::new(w, h, (0.0, (depths.len() - 1).max(1) as f64), (0.0, 1.0));
    frame.draw_axes(&mut svg, "depth (layers)", "test accuracy", "Test accuracy vs. depth");
    for (i, &d) in depths.iter().enumerate() {
        let x = frame.px(i as f64);
        svg.line(x, frame.bottom, x, frame.bottom + 4.0, "#333333", 1.0);
        svg.text(x, frame.bottom + 16.0, 10.0, "middle", &d.to_string());
    }
    let x_of = |depth: usize| {
        let idx = depths.iter().position(|&d| d == depth).unwrap();
        frame.px(idx as f64)
    };
    for (si, (name, by_depth)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut points = Vec::new();
        for (&depth, accs) in by_depth {
            let (mean, std) = mean_std(accs);
            let x = x_of(depth);
            let y = frame.py(mean.clamp(0.0, 1.0));
            if accs.len() > 1 {
                let y_lo = frame.py((mean - std).clamp(0.0, 1.0));
                let y_hi = frame.py((mean + std).clamp(0.0, 1.0));
                svg.line(x, y_lo, x, y_hi, color, 1.0);
            }
            svg.circle(x, y, 2.6, color);
            points.push((x, y));
        }
        svg.polyline(&points, color);
        let ly = frame.top + 14.0 * si as f64 + 4.0;
        svg.line(frame.right - 120.0, ly, frame.right - 104.0, ly, color, 2.0);
        svg.text(frame.right - 100.0, ly + 4.0, 10.0, "start", name);
    }
    Some(svg.finish())
}

fn variance_profile_figure(records: &[&RunRecord]) -> Option<String> {
    // Deterministic choice: the deepest profiled run, first in sort order.
    let mut candidates: Vec<&&RunRecord> = records
        .iter()
        .filter(|r| r.diagnostics.variance_profile.is_some())
        .collect();
    candidates.sort_by_key(|r| {
        let (v, n, d, s) = sort_key(r);
        (std::cmp::Reverse(d), v, n, s)
    });
    let record = candidates.first()?;
    let profile = record.diagnostics.variance_profile.as_ref()?;
    let label = format!("{}, depth {}", record.spec.variant.token(), record.spec.depth);
    variance_profile_svg(profile, &label)
}

/// Render a variance profile as an SVG chart of per-layer log10 median and
/// max node variance. Returns `None` when no layer has positive variance.
pub fn variance_profile_svg(
    profile: &crate::diagnostics::VarianceProfile,
    label: &str,
) -> Option<String> {
    let log_points = |pick: &dyn Fn(&[f64]) -> f64| -> Vec<(usize, f64)> {
        profile
            .per_layer
            .iter()
            .enumerate()
            .filter_map(|(l, vars)| {
                let v = pick(vars);
                (v > 0.0).then(|| (l, v.log10()))
            })
            .collect()
    };
    let median_pts = log_points(&|vars: &[f64]| {
        let mut sorted = vars.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        if n == 0 {
            0.0
        } else if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        }
    });
    let max_pts = log_points(&|vars: &[f64]| vars.iter().cloned().fold(f64::MIN, f64::max));
    let all: Vec<f64> = median_pts.iter().chain(&max_pts).map(|&(_, v)| v).collect();
    if all.is_empty() {
        return None;
    }
    let mut y_min = all.iter().cloned().fold(f64::MAX, f64::min);
    let mut y_max = all.iter().cloned().fold(f64::MIN, f64::max);
    if (y_max - y_min).abs() < 1e-9 {
        y_min -= 1.0;
        y_max += 1.0;
    } else {
        let pad = 0.05 * (y_max - y_min);
        y_min -= pad;
        y_max += pad;
    }
    let layers = profile.per_layer.len();
    let (w, h) = (640.0, 420.0);
    let mut svg = Svg::new(w, h);
    let frame = Frame::new(w, h, (0.0, (layers - 1).max(1) as f64), (y_min, y_max));
    let title = format!("log10 node variance by layer ({label})");
    frame.draw_axes(&mut svg, "layer", "log10 variance", &title);
    let step = (layers / 8).max(1);
    for l in (0..layers).step_by(step) {
        let x = frame.px(l as f64);
        svg.line(x, frame.bottom, x, frame.bottom + 4.0, "#333333", 1.0);
        svg.text(x, frame.bottom + 16.0, 10.0, "middle", &(l + 1).to_string());
    }
    for (si, (name, pts)) in
        [("median", &median_pts), ("max", &max_pts)].into_iter().enumerate()
    {
        let color = PALETTE[si % PALETTE.len()];
        let screen: Vec<(f64, f64)> =
            pts.iter().map(|&(l, v)| (frame.px(l as f64), frame.py(v))).collect();
        svg.polyline(&screen, color);
        for &(x, y) in &screen {
            svg.circle(x, y, 2.2, color);
        }
        let ly = frame.top + 14.0 * si as f64 + 4.0;
        svg.line(frame.right - 90.0, ly, frame.right - 74.0, ly, color, 2.0);
        svg.text(frame.right - 70.0, ly + 4.0, 10.0, "start", name);
    }
    Some(svg.finish())
}

fn bin_gaps_figure(records: &[&RunRecord]) -> Option<String> {
    // Pair the shallowest and deepest run with recorded outcomes within each
    // (variant, norm, seed) group; take the first viable group in order.
    let mut groups: BTreeMap<(String, String, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        if r.diagnostics.test_outcomes.is_some() {
            groups
                .entry((
                    r.spec.variant.token().to_string(),
                    r.spec.norm.token(),
                    r.config.seed,
                ))
                .or_default()
                .push(r);
        }
    }
    let mut chosen = None;
    for rs in groups.values() {
        let shallow = rs.iter().min_by_key(|r| r.spec.depth)?;
        let deep = rs.iter().max_by_key(|r| r.spec.depth)?;
        if shallow.spec.depth == deep.spec.depth {
            continue;
        }
        if let Ok(report) = bins_from_records(deep, shallow) {
            chosen = Some((report, shallow.spec.depth, deep.spec.depth));
            break;
        }
    }
    let (report, shallow_depth, deep_depth) = chosen?;
    let title = format!("Accuracy gap by variance bin (depth {shallow_depth} vs {deep_depth})");
    Some(bin_gaps_svg(&report, &title))
}

/// Render an accuracy-by-variance-bin report as an SVG bar chart.
pub fn bin_gaps_svg(report: &crate::diagnostics::BinReport, title: &str) -> String {
    let y_max = report.gap.iter().cloned().fold(0.05f64, f64::max) * 1.1;
    let y_min = report.gap.iter().cloned().fold(0.0f64, f64::min) * 1.1;
    let (w, h) = (640.0, 420.0);
    let mut svg = Svg::new(w, h);
    let bins = report.gap.len();
    let frame = Frame::new(w, h, (0.0, bins as f64), (y_min, y_max));
    frame.draw_axes(&mut svg, "variance bin (low to high)", "accuracy gap", title);
    let zero_y = frame.py(0.0);
    svg.line(frame.left, zero_y, frame.right, zero_y, "#888888", 0.8);
    let slot = (frame.right - frame.left) / bins as f64;
    for (b, &gap) in report.gap.iter().enumerate() {
        let x = frame.left + slot * b as f64 + slot * 0.2;
        let y = frame.py(gap.max(0.0));
        let height = (frame.py(gap.min(0.0)) - y).abs();
        svg.rect(x, y, slot * 0.6, height.max(0.5), PALETTE[0]);
        let cx = frame.left + slot * (b as f64 + 0.5);
        svg.text(cx, frame.bottom + 16.0, 10.0, "middle", &format!("bin {}", b + 1));
        svg.text(
            cx,
            frame.bottom + 28.0,
            9.0,
            "middle",
            &format!("n={}", report.bin_sizes[b]),
        );
    }
    svg.finish()
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Write the full report tree for a batch of results into `out_dir`:
///
/// ```text
/// out_dir/results.csv        one row per successful run
/// out_dir/aggregate.csv      mean / population std per (variant, norm, depth)
/// out_dir/records/*.json     full per-run records (including wall time)
/// out_dir/figures/*.svg      whatever the data supports; see the manifest
/// out_dir/manifest.json      index of all of the above
/// ```
pub fn emit_reports(results: &[CellResult], out_dir: &Path) -> Result<Manifest> {
    let records_dir = out_dir.join("records");
    let figures_dir = out_dir.join("figures");
    fs::create_dir_all(&records_dir).map_err(|e| Error::io(&records_dir, e))?;
    fs::create_dir_all(&figures_dir).map_err(|e| Error::io(&figures_dir, e))?;

    let mut records: Vec<&RunRecord> = Vec::new();
    let mut failures = Vec::new();
    for cell in results {
        match &cell.outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push(FailureNote {
                variant: cell.cell.variant.clone(),
                depth: cell.cell.depth,
                seed: cell.cell.seed,
                error: e.clone(),
            }),
        }
    }

    write_file(&out_dir.join("results.csv"), &results_csv(&records))?;
    write_file(&out_dir.join("aggregate.csv"), &aggregate_csv(&records))?;

    let mut record_files = Vec::new();
    let mut sorted = records.clone();
    sorted.sort_by_key(|r| sort_key(r));
    for r in &sorted {
        let name = record_file_name(r);
        let json = serde_json::to_string_pretty(r)
            .map_err(|e| Error::Invalid(format!("serializing record: {e}")))?;
        write_file(&records_dir.join(&name), &(json + "\n"))?;
        record_files.push(format!("records/{name}"));
    }

    let mut figures = Vec::new();
    let mut skipped = Vec::new();
    let mut emit_figure = |name: &str, content: Option<String>, reason: &str| -> Result<()> {
        match content {
            Some(svg) => {
                write_file(&figures_dir.join(name), &svg)?;
                figures.push(format!("figures/{name}"));
            }
            None => skipped.push(FigureSkip {
                figure: name.to_string(),
                reason: reason.to_string(),
            }),
        }
        Ok(())
    };
    emit_figure(
        "accuracy_vs_depth.svg",
        accuracy_vs_depth_figure(&sorted),
        "no successful runs",
    )?;
    emit_figure(
        "variance_profile.svg",
        variance_profile_figure(&sorted),
        "no run recorded a variance profile with positive variances",
    )?;
    emit_figure(
        "bin_gaps.svg",
        bin_gaps_figure(&sorted),
        "bins need two depths with recorded test outcomes over a shared split",
    )?;

    let manifest = Manifest {
        format_version: RECORD_FORMAT_VERSION,
        runs: records.len(),
        failures,
        results_csv: "results.csv".to_string(),
        aggregate_csv: "aggregate.csv".to_string(),
        records: record_files,
        figures,
        skipped_figures: skipped,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Invalid(format!("serializing manifest: {e}")))?;
    write_file(&out_dir.join("manifest.json"), &(json + "\n"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SbmParams, SplitKind, SplitSpec};
    use crate::experiment::{
        sweep, DataSource, DiagnosticsConfig, ModelConfig, OptimConfig, RunConfig,
    };
    use crate::models::{NormPlacement, Variant};
    use crate::norm::NormKind;
    use tempfile::TempDir;

    fn base_config() -> RunConfig {
        RunConfig {
            data: DataSource::Sbm(SbmParams {
                blocks: 2,
                nodes_per_block: 25,
                p_in: 0.4,
                p_out: 0.02,
                feature_dim: 4,
                feature_noise: 0.2,
            }),
            split: SplitSpec {
                kind: SplitKind::PerClass { k: 5 },
                val_size: 10,
                test_size: 20,
                seed: Some(11),
            },
            model: ModelConfig {
                variant: Variant::Gcn,
                depth: 2,
                hidden_dim: 8,
                norm: NormKind::None,
                placement: NormPlacement::AfterConv,
                residual: false,
                dropout_rate: 0.0,
            },
            optim: OptimConfig { lr: 0.03, weight_decay: 0.0, l1_weight: 0.0, epochs: 8 },
            seed: 0,
            missing_rate: 0.0,
            protect_train: true,
            diagnostics: DiagnosticsConfig {
                variance_profile: true,
                lipschitz: true,
                lipschitz_pair_limit: Some(100),
                correlation: true,
                record_test_outcomes: true,
            },
        }
    }

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5, 1e-17, 12345.678901234567, 0.0, 2.0] {
            let s = fmt_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_float(f64::NAN), "NaN");
        assert_eq!(fmt_float(2.0), "2");
    }

    #[test]
    fn emit_writes_stable_tables_and_figures() {
        let results =
            sweep(&base_config(), &[2, 4], &[0, 1], &["gcn".into(), "nodenorm1".into()])
                .unwrap();
        let dir_a = TempDir::new().unwrap();
        let dir_b = TempDir::new().unwrap();
        let manifest = emit_reports(&results, dir_a.path()).unwrap();
        emit_reports(&results, dir_b.path()).unwrap();

        assert_eq!(manifest.runs, 8);
        assert!(manifest.failures.is_empty());
        assert_eq!(manifest.records.len(), 8);
        assert_eq!(manifest.figures.len(), 3, "skipped: {:?}", manifest.skipped_figures);
        assert!(manifest.skipped_figures.is_empty());

        for file in ["results.csv", "aggregate.csv", "manifest.json"] {
            let a = std::fs::read(dir_a.path().join(file)).unwrap();
            let b = std::fs::read(dir_b.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between emissions");
        }
        let csv = std::fs::read_to_string(dir_a.path().join("results.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), RESULTS_HEADER);
        assert_eq!(lines.count(), 8);
        // Wall time never leaks into the table.
        assert!(!RESULTS_HEADER.contains("wall"));

        for fig in &manifest.figures {
            let body = std::fs::read_to_string(dir_a.path().join(fig)).unwrap();
            assert!(body.starts_with("<svg"), "{fig} is not svg");
            assert!(body.ends_with("</svg>\n"));
        }
        for rec in &manifest.records {
            let body = std::fs::read_to_string(dir_a.path().join(rec)).unwrap();
            let parsed: RunRecord = serde_json::from_str(&body).unwrap();
            assert_eq!(parsed.format_version, RECORD_FORMAT_VERSION);
        }
    }

    #[test]
    fn aggregate_uses_population_std() {
        let results = sweep(&base_config(), &[2], &[0, 1], &["gcn".into()]).unwrap();
        let dir = TempDir::new().unwrap();
        emit_reports(&results, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        let line = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], "gcn");
        assert_eq!(fields[3], "2");
        let mean: f64 = fields[4].parse().unwrap();
        let std: f64 = fields[5].parse().unwrap();
        let accs: Vec<f64> = results
            .iter()
            .map(|r| r.outcome.as_ref().unwrap().test_acc)
            .collect();
        let expect_mean = (accs[0] + accs[1]) / 2.0;
        let expect_var =
            ((accs[0] - expect_mean).powi(2) + (accs[1] - expect_mean).powi(2)) / 2.0;
        assert!((mean - expect_mean).abs() < 1e-15);
        assert!((std - expect_var.sqrt()).abs() < 1e-15);

        // A single run has population std exactly 0.
        let single = sweep(&base_config(), &[2], &[0], &["gcn".into()]).unwrap();
        let dir = TempDir::new().unwrap();
        emit_reports(&single, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
        let line = csv.lines().nth(1).unwrap();
        assert_eq!(line.split(',').nth(5).unwrap(), "0");
    }

    #[test]
    fn failures_reach_the_manifest_not_the_tables() {
        let mut config = base_config();
        config.split.kind = SplitKind::PerClass { k: 100 };
        let results = sweep(&config, &[2], &[0], &["gcn".into()]).unwrap();
        let dir = TempDir::new().unwrap();
        let manifest = emit_reports(&results, dir.path()).unwrap();
        assert_eq!(manifest.runs, 0);
        assert_eq!(manifest.failures.len(), 1);
        assert_eq!(manifest.failures[0].variant, "gcn");
        assert!(!manifest.failures[0].error.is_empty());
        let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1, "only the header");
        // All figures skip cleanly with reasons.
        assert!(manifest.figures.is_empty());
        assert_eq!(manifest.skipped_figures.len(), 3);
        assert!(manifest.skipped_figures.iter().all(|s| !s.reason.is_empty()));
    }

    #[test]
    fn figures_skip_without_diagnostics() {
        let mut config = base_config();
        config.diagnostics = DiagnosticsConfig::default();
        let results = sweep(&config, &[2], &[0], &["gcn".into()]).unwrap();
        let dir = TempDir::new().unwrap();
        let manifest = emit_reports(&results, dir.path()).unwrap();
        // Accuracy curves need only records; the other two need diagnostics.
        assert_eq!(manifest.figures, vec!["figures/accuracy_vs_depth.svg".to_string()]);
        assert_eq!(manifest.skipped_figures.len(), 2);
    }

    #[test]
    fn results_rows_are_sorted() {
        let results =
            sweep(&base_config(), &[4, 2], &[1, 0], &["nodenorm1".into(), "gcn".into()])
                .unwrap();
        let dir = TempDir::new().unwrap();
        emit_reports(&results, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let keys: Vec<(String, String, usize, u64)> = csv
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[1].to_string(), f[2].to_string(), f[5].parse().unwrap(), f[12].parse().unwrap())
            })
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}
