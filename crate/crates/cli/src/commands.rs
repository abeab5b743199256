//! The five subcommands. Each resolves its configuration from [`Layers`],
//! writes its artifacts under `out`, and returns a summary for the caller.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use sfair::expansion::{build_debiased_adjacency, expand, expansion_report, groups_by_score_bins, ExpansionReport};
use sfair::fairness::{FairnessReport, CSV_HEADER};
use sfair::models::{load_checkpoint, save_checkpoint, FusionKind, ModelKind};
use sfair::synthetic::{generate_separable_fixture, generate_three_group, GroupedGraph};

use crate::config::{Layers, RunConfig, SweepAxis};
use crate::error::{CliError, CliResult};
use crate::output::{config_header, ensure_dir, fmt_opt, write_bytes, write_csv, write_text};
use crate::pipeline;

const META_PREFIX: &str = "config.";

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub config: RunConfig,
    pub checkpoint: PathBuf,
    pub loss_curve: Vec<f64>,
}

/// Centrality, expansion and training; writes `checkpoint.bin`, `loss.csv`
/// and `config.txt`.
pub fn train(layers: &Layers) -> CliResult<TrainSummary> {
    let mut cfg = layers.resolve()?;
    cfg.check()?;
    pipeline::normalize_for_model(&mut cfg);
    let full = pipeline::load_dataset(&cfg)?;
    let dataset = pipeline::split(&cfg, &full, cfg.seed)?;
    let hops = if cfg.model == ModelKind::Sfair && cfg.hops > 1 {
        let scores = pipeline::scores(&cfg, &dataset.graph)?;
        pipeline::neighborhoods(&cfg, &dataset.graph, &scores)?
    } else {
        sfair::expansion::HopNeighborhoods::one_hop(&dataset.graph)
    };
    let trained = pipeline::fit(&cfg, &dataset, &hops, cfg.seed)?;

    ensure_dir(&cfg.out)?;
    let checkpoint = cfg.out.join("checkpoint.bin");
    let meta: BTreeMap<String, String> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (format!("{META_PREFIX}{k}"), v))
        .collect();
    save_checkpoint(&trained.model, &meta, &checkpoint)?;
    let rows: Vec<Vec<String>> = trained
        .loss_curve
        .iter()
        .enumerate()
        .map(|(e, l)| vec![e.to_string(), l.to_string()])
        .collect();
    write_csv(&cfg.out.join("loss.csv"), &cfg, "train", &["epoch", "loss"], &rows)?;
    write_bytes(&cfg.out.join("config.txt"), cfg.render().as_bytes())?;
    Ok(TrainSummary {
        config: cfg,
        checkpoint,
        loss_curve: trained.loss_curve,
    })
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    command: &'static str,
    config: BTreeMap<&'static str, String>,
    report: &'a FairnessReport,
}

fn read_report(path: &std::path::Path) -> CliResult<FairnessReport> {
    if !path.is_file() {
        return Err(CliError::NotFound {
            what: "baseline report",
            path: path.to_path_buf(),
        });
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let report = value.get("report").cloned().unwrap_or(value);
    serde_json::from_value(report).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn report_row(r: &FairnessReport) -> Vec<String> {
    let mut row = r.csv_record();
    let imp = r.improvement.as_ref();
    row.push(fmt_opt(imp.and_then(|i| i.std_pct)));
    row.push(fmt_opt(imp.and_then(|i| i.pcc_pct)));
    row
}

/// Scores a checkpoint on its test split; writes `report.json`,
/// `report.csv` and `bins.csv`.
pub fn audit(layers: &Layers) -> CliResult<FairnessReport> {
    let first = layers.resolve()?;
    let path = first.checkpoint_path();
    if !path.is_file() {
        return Err(CliError::NotFound { what: "checkpoint", path });
    }
    let (model, meta) = load_checkpoint(&path)?;

    // Training-time values are the base; this invocation's layers win.
    let mut cfg = RunConfig::default();
    for (k, v) in &meta {
        if let Some(key) = k.strip_prefix(META_PREFIX) {
            cfg.set(key, v)?;
        }
    }
    let mut cfg = layers.apply_over(cfg)?;
    let mc = model.config();
    cfg.checkpoint = path;
    cfg.model = mc.kind;
    cfg.fusion = mc.fusion;
    cfg.hops = mc.hops_used();
    cfg.layers = mc.num_layers();
    cfg.hidden = mc.hidden_dims[0];
    cfg.embed_dim = mc.embed_dim;
    cfg.dropout = mc.dropout;
    cfg.check()?;

    let full = pipeline::load_dataset(&cfg)?;
    if full.num_nodes() != mc.num_nodes || full.num_classes > mc.num_classes {
        return Err(sfair::Error::ShapeMismatch(format!(
            "checkpoint expects {} nodes and at most {} classes, dataset has {} nodes and {} classes",
            mc.num_nodes,
            mc.num_classes,
            full.num_nodes(),
            full.num_classes
        ))
        .into());
    }
    let dataset = pipeline::split(&cfg, &full, cfg.seed)?;
    let scores = pipeline::scores(&cfg, &dataset.graph)?;
    let hops = pipeline::neighborhoods(&cfg, &dataset.graph, &scores)?;
    let baseline = if cfg.baseline.as_os_str().is_empty() {
        None
    } else {
        Some(read_report(&cfg.baseline)?)
    };
    let report = pipeline::audit_model(&cfg, &model, &dataset, &scores, &hops, cfg.seed, baseline.as_ref())?;

    ensure_dir(&cfg.out)?;
    let file = ReportFile {
        command: "audit",
        config: cfg.entries().into_iter().collect(),
        report: &report,
    };
    let mut json = serde_json::to_string_pretty(&file).map_err(|source| CliError::Json {
        path: cfg.out.join("report.json"),
        source,
    })?;
    json.push('\n');
    write_bytes(&cfg.out.join("report.json"), json.as_bytes())?;

    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    header.extend(["std_improvement", "pcc_improvement"]);
    write_csv(&cfg.out.join("report.csv"), &cfg, "audit", &header, &[report_row(&report)])?;

    let bins: Vec<Vec<String>> = report
        .bins
        .bins
        .iter()
        .map(|b| {
            vec![
                b.lower.to_string(),
                b.upper.to_string(),
                ((b.lower + b.upper) / 2.0).to_string(),
                b.count.to_string(),
                b.correct.to_string(),
                fmt_opt(b.accuracy),
                b.retained.to_string(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out.join("bins.csv"),
        &cfg,
        "audit",
        &["lower", "upper", "center", "count", "correct", "accuracy", "retained"],
        &bins,
    )?;
    Ok(report)
}

pub const SWEEP_HEADER: [&str; 7] = ["dataset", "model", "axis", "point", "seed", "metric", "value"];
const METRICS: [&str; 6] = ["acc", "std", "pcc", "abs_pcc", "pcc_binary", "final_loss"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub axis: SweepAxis,
    pub points: Vec<String>,
    /// Mean over seeds per point, in [`METRICS`] order; `None` where no seed
    /// produced a value.
    pub means: Vec<Vec<Option<f64>>>,
    pub failures: usize,
    pub flags: Vec<(String, Option<bool>)>,
}

impl SweepSummary {
    pub fn mean(&self, point: usize, metric: &str) -> Option<f64> {
        let m = METRICS.iter().position(|&x| x == metric)?;
        self.means[point][m]
    }
}

fn default_grid(axis: SweepAxis) -> Vec<String> {
    match axis {
        SweepAxis::Hops => (1..=5).map(|h| h.to_string()).collect(),
        SweepAxis::Line => (1..=9).map(|k| format!("0.{k}")).collect(),
        SweepAxis::Fusion => [FusionKind::Seq, FusionKind::Avg, FusionKind::Max]
            .iter()
            .map(|f| f.to_string())
            .collect(),
    }
}

fn grid(cfg: &RunConfig, axis: SweepAxis) -> CliResult<Vec<String>> {
    if cfg.values.is_empty() {
        return Ok(default_grid(axis));
    }
    let points: Vec<String> = cfg
        .values
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    if points.is_empty() {
        return Err(CliError::Usage(format!("empty sweep grid {:?}", cfg.values)));
    }
    Ok(points)
}

fn metric_values(report: &FairnessReport, loss: f64) -> [Option<f64>; 6] {
    [
        Some(report.accuracy_pct),
        report.std_metric,
        report.pcc_metric,
        report.pcc_metric.map(f64::abs),
        report.pcc_binary,
        Some(loss),
    ]
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Value at the largest point below 4 hops is lower than at the smallest
/// point, for both STD and |PCC|.
fn decreasing_below_four(points: &[String], means: &[Vec<Option<f64>>]) -> Option<bool> {
    let mut below: Vec<(usize, usize)> = points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.parse::<usize>().ok().filter(|&h| h < 4).map(|h| (h, i)))
        .collect();
    below.sort();
    let (&(_, first), &(_, last)) = (below.first()?, below.last()?);
    if first == last {
        return None;
    }
    let drop = |m: usize| Some(means[last][m]? < means[first][m]?);
    Some(drop(1)? && drop(3)?)
}

/// The smallest mean STD is at neither end of the grid.
fn interior_minimum(means: &[Vec<Option<f64>>]) -> Option<bool> {
    if means.len() < 3 {
        return None;
    }
    let stds: Vec<f64> = means.iter().map(|m| m[1]).collect::<Option<_>>()?;
    let best = stds
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)?;
    Some(best != 0 && best + 1 != stds.len())
}

type SeedOutcome = CliResult<(f64, FairnessReport)>;

/// One train+audit per grid point and seed; writes `sweep_<axis>.csv` in
/// long format plus `sweep_<axis>_flags.csv`.
pub fn sweep(layers: &Layers) -> CliResult<SweepSummary> {
    let cfg = layers.resolve()?;
    cfg.check()?;
    let axis = cfg
        .axis
        .ok_or_else(|| CliError::Usage("sweep needs a grid axis (--axis hops|line|fusion)".into()))?;
    let points = grid(&cfg, axis)?;
    let full = pipeline::load_dataset(&cfg)?;
    let scores = pipeline::scores(&cfg, &full.graph)?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|k| cfg.seed + k).collect();

    // Hop sets only depend on the line and the hop count; build the deepest
    // once for a hop sweep and truncate.
    let deepest = if axis == SweepAxis::Hops && cfg.model == ModelKind::Sfair {
        let max_h = points.iter().filter_map(|p| p.parse::<usize>().ok()).max().unwrap_or(1);
        let mask = pipeline::marginal_mask(&cfg, &scores)?;
        Some(expand(&build_debiased_adjacency(&full.graph, &mask)?, max_h.max(1), &full.graph)?)
    } else {
        None
    };

    let mut outcomes: Vec<(String, Vec<(u64, SeedOutcome)>)> = Vec::with_capacity(points.len());
    for point in &points {
        let prepared = (|| -> CliResult<_> {
            let mut pc = cfg.clone();
            pc.set(&axis.to_string(), point)?;
            pc.check()?;
            pipeline::normalize_for_model(&mut pc);
            let hops = match &deepest {
                Some(d) => d.truncated(pc.hops)?,
                None => pipeline::neighborhoods(&pc, &full.graph, &scores)?,
            };
            Ok((pc, hops))
        })();
        let runs = match prepared {
            Err(e) => {
                let msg = e.to_string();
                seeds.iter().map(|&s| (s, Err(CliError::Usage(msg.clone())))).collect()
            }
            Ok((pc, hops)) => seeds
                .par_iter()
                .map(|&s| {
                    let out = pipeline::run_seed(&pc, &full, &scores, &hops, s)
                        .map(|(t, r)| (*t.loss_curve.last().unwrap_or(&f64::NAN), r));
                    (s, out)
                })
                .collect(),
        };
        outcomes.push((point.clone(), runs));
    }

    let name = cfg.dataset_name();
    let model = cfg.model.to_string();
    let axis_s = axis.to_string();
    let row = |point: &str, seed: String, metric: &str, value: String| {
        vec![name.clone(), model.clone(), axis_s.clone(), point.to_string(), seed, metric.to_string(), value]
    };
    let mut rows = Vec::new();
    let mut means = Vec::with_capacity(points.len());
    let mut failures = 0;
    for (point, runs) in &outcomes {
        let mut per_seed: Vec<[Option<f64>; 6]> = Vec::new();
        for (seed, out) in runs {
            match out {
                Ok((loss, report)) => {
                    let vals = metric_values(report, *loss);
                    for (m, v) in METRICS.iter().zip(vals) {
                        rows.push(row(point, seed.to_string(), m, fmt_opt(v)));
                    }
                    per_seed.push(vals);
                }
                Err(e) => {
                    failures += 1;
                    rows.push(row(point, seed.to_string(), "error", e.to_string()));
                }
            }
        }
        let point_means: Vec<Option<f64>> = (0..METRICS.len())
            .map(|m| mean_defined(per_seed.iter().map(|v| v[m])))
            .collect();
        for (m, v) in METRICS.iter().zip(&point_means) {
            rows.push(row(point, "mean".to_string(), m, fmt_opt(*v)));
        }
        means.push(point_means);
    }

    let flags = match axis {
        SweepAxis::Hops => vec![("pcc_std_decrease_below_4_hops".to_string(), decreasing_below_four(&points, &means))],
        SweepAxis::Line => vec![("std_minimum_inside_grid".to_string(), interior_minimum(&means))],
        SweepAxis::Fusion => Vec::new(),
    };
    let stem = format!("sweep_{axis}");
    write_csv(&cfg.out.join(format!("{stem}.csv")), &cfg, "sweep", &SWEEP_HEADER, &rows)?;
    let flag_rows: Vec<Vec<String>> = flags
        .iter()
        .map(|(f, v)| vec![f.clone(), v.map_or("NA".to_string(), |b| b.to_string())])
        .collect();
    write_csv(&cfg.out.join(format!("{stem}_flags.csv")), &cfg, "sweep", &["flag", "value"], &flag_rows)?;
    Ok(SweepSummary {
        axis,
        points,
        means,
        failures,
        flags,
    })
}

/// Per-hop closeness gap between node groups after expansion; writes
/// `expand_gap.csv`, `expand_groups.csv` and `expand_sizes.csv`.
pub fn expand_report(layers: &Layers) -> CliResult<ExpansionReport> {
    let cfg = layers.resolve()?;
    cfg.check()?;
    let (graph, mask, groups, names) = if cfg.synthetic {
        let gg = generate_three_group(cfg.core_size, cfg.middle_per_core, cfg.chain_len, cfg.seed)?;
        let mask = gg.non_central_mask();
        let groups = gg.group_ids();
        (gg.graph, mask, groups, GroupedGraph::group_names())
    } else {
        let graph = pipeline::load_graph(&cfg)?;
        let scores = pipeline::scores(&cfg, &graph)?;
        let mask = pipeline::marginal_mask(&cfg, &scores)?;
        let (groups, names) = groups_by_score_bins(&scores.scores, cfg.bins);
        (graph, mask, groups, names)
    };
    let hops = expand(&build_debiased_adjacency(&graph, &mask)?, cfg.hops, &graph)?;
    let report = expansion_report(&hops, &groups, &names)?;

    let gap_rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| vec![r.hop.to_string(), r.num_edges.to_string(), r.gap.to_string()])
        .collect();
    write_csv(&cfg.out.join("expand_gap.csv"), &cfg, "expand", &["hop", "num_edges", "gap"], &gap_rows)?;

    let mut counts = vec![0usize; names.len()];
    for &g in &groups {
        counts[g] += 1;
    }
    let group_rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .flat_map(|r| {
            let counts = &counts;
            names.iter().enumerate().map(move |(g, name)| {
                vec![r.hop.to_string(), name.clone(), counts[g].to_string(), fmt_opt(Some(r.group_means[g]).filter(|m| !m.is_nan()))]
            })
        })
        .collect();
    write_csv(
        &cfg.out.join("expand_groups.csv"),
        &cfg,
        "expand",
        &["hop", "group", "nodes", "mean_closeness"],
        &group_rows,
    )?;

    let mut size_rows = Vec::new();
    for (h, sets) in hops.hops().iter().enumerate() {
        let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
        for s in sets.sizes() {
            *hist.entry(s).or_default() += 1;
        }
        for (size, count) in hist {
            size_rows.push(vec![(h + 1).to_string(), size.to_string(), count.to_string()]);
        }
    }
    write_csv(
        &cfg.out.join("expand_sizes.csv"),
        &cfg,
        "expand",
        &["hop", "set_size", "nodes"],
        &size_rows,
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub files: Vec<PathBuf>,
}

fn labels_text(labels: &[usize]) -> Vec<u8> {
    labels.iter().enumerate().map(|(i, l)| format!("{i}\t{l}\n")).collect::<String>().into_bytes()
}

/// Writes a generated graph as `edges.tsv` + `labels.tsv` (and `groups.csv`
/// for the three-group graph), loadable with `--dataset <out>`.
pub fn synth(layers: &Layers) -> CliResult<SynthSummary> {
    let cfg = layers.resolve()?;
    let (graph, labels, groups) = if cfg.fixture {
        let ds = generate_separable_fixture(cfg.seed)?;
        (ds.graph, ds.labels, None)
    } else {
        let gg = generate_three_group(cfg.core_size, cfg.middle_per_core, cfg.chain_len, cfg.seed)?;
        let labels = gg.parity_labels();
        (gg.graph.clone(), labels, Some(gg))
    };
    let mut files = Vec::new();
    let mut edges = Vec::new();
    graph
        .write_edge_list(&mut edges)
        .map_err(|e| CliError::write(cfg.out.join("edges.tsv"), e))?;
    let path = cfg.out.join("edges.tsv");
    write_text(&path, &cfg, "synth", &edges)?;
    files.push(path);
    let path = cfg.out.join("labels.tsv");
    write_text(&path, &cfg, "synth", &labels_text(&labels))?;
    files.push(path);
    if let Some(gg) = groups {
        let mut body = Vec::new();
        gg.write_groups_csv(&mut body)
            .map_err(|e| CliError::write(cfg.out.join("groups.csv"), e))?;
        let path = cfg.out.join("groups.csv");
        let mut buf = config_header(&cfg, "synth").into_bytes();
        buf.extend_from_slice(&body);
        write_bytes(&path, &buf)?;
        files.push(path);
    }
    Ok(SynthSummary {
        num_nodes: graph.num_nodes(),
        num_edges: graph.num_edges(),
        files,
    })
}
