use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sfair_cli::commands;
use sfair_cli::config::env_overrides;
use sfair_cli::{CliResult, Layers};

/// Structure-fairness experiments on graph neural networks.
///
/// Settings resolve as: flag, then `SFAIR_<KEY>` environment variable, then
/// `--config` file (`key = value` lines), then built-in default.
#[derive(Parser)]
#[command(name = "sfair", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute centrality, expand neighborhoods and train one model
    Train(RunArgs),
    /// Score a checkpoint: accuracy, STD and PCC over centrality bins
    Audit(RunArgs),
    /// Train and audit across one grid axis and several seeds
    Sweep(RunArgs),
    /// Per-hop closeness of node groups after neighborhood expansion
    Expand(RunArgs),
    /// Write a generated graph as edge and label files
    Synth(RunArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// `key = value` config file
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory with edges.tsv and labels.tsv
    #[arg(long, value_name = "DIR")]
    dataset: Option<String>,
    #[arg(long, value_name = "FILE")]
    edges: Option<String>,
    #[arg(long, value_name = "FILE")]
    labels: Option<String>,
    /// Dataset name used in reports
    #[arg(long)]
    name: Option<String>,
    /// sfair, gcn or gat
    #[arg(long)]
    model: Option<String>,
    /// closeness or eigenvector
    #[arg(long)]
    centrality: Option<String>,
    /// Margin line on normalized centrality
    #[arg(long)]
    line: Option<String>,
    /// Hop count of neighborhood expansion
    #[arg(long)]
    hops: Option<String>,
    /// seq, avg or max
    #[arg(long)]
    fusion: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    embed_dim: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Seeds per sweep point
    #[arg(long)]
    seeds: Option<String>,
    /// Training fraction of the node split
    #[arg(long)]
    split: Option<String>,
    /// Centrality bins for the STD metric
    #[arg(long)]
    bins: Option<String>,
    /// Smallest bin entering the STD metric
    #[arg(long)]
    min_count: Option<String>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<String>,
    /// Baseline report.json for improvement columns
    #[arg(long, value_name = "FILE")]
    baseline: Option<String>,
    /// Sweep axis: hops, line or fusion
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated sweep values
    #[arg(long)]
    values: Option<String>,
    /// Use the generated three-group graph
    #[arg(long)]
    synthetic: bool,
    /// Generate the two-clique fixture
    #[arg(long)]
    fixture: bool,
    #[arg(long)]
    core_size: Option<String>,
    #[arg(long)]
    middle_per_core: Option<String>,
    #[arg(long)]
    chain_len: Option<String>,
}

impl RunArgs {
    fn into_layers(self) -> Layers {
        let mut flags = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                flags.push((k.to_string(), v));
            }
        };
        put("dataset", self.dataset);
        put("edges", self.edges);
        put("labels", self.labels);
        put("name", self.name);
        put("model", self.model);
        put("centrality", self.centrality);
        put("line", self.line);
        put("hops", self.hops);
        put("fusion", self.fusion);
        put("layers", self.layers);
        put("hidden", self.hidden);
        put("embed_dim", self.embed_dim);
        put("dropout", self.dropout);
        put("epochs", self.epochs);
        put("lr", self.lr);
        put("weight_decay", self.weight_decay);
        put("seed", self.seed);
        put("seeds", self.seeds);
        put("split", self.split);
        put("bins", self.bins);
        put("min_count", self.min_count);
        put("out", self.out);
        put("checkpoint", self.checkpoint);
        put("baseline", self.baseline);
        put("axis", self.axis);
        put("values", self.values);
        put("synthetic", self.synthetic.then(|| "true".to_string()));
        put("fixture", self.fixture.then(|| "true".to_string()));
        put("core_size", self.core_size);
        put("middle_per_core", self.middle_per_core);
        put("chain_len", self.chain_len);
        Layers {
            file: self.config,
            env: env_overrides(std::env::vars()),
            flags,
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Train(args) => {
            let s = commands::train(&args.into_layers())?;
            let first = s.loss_curve.first().copied().unwrap_or(f64::NAN);
            let last = s.loss_curve.last().copied().unwrap_or(f64::NAN);
            println!(
                "trained {} on {} for {} epochs: loss {first:.4} -> {last:.4}",
                s.config.model,
                s.config.dataset_name(),
                s.loss_curve.len()
            );
            println!("checkpoint {}", s.checkpoint.display());
        }
        Command::Audit(args) => {
            let r = commands::audit(&args.into_layers())?;
            let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.2}"));
            println!(
                "{} {}: acc {:.2} std {} pcc {}",
                r.config.dataset,
                r.config.model,
                r.accuracy_pct,
                opt(r.std_metric),
                opt(r.pcc_metric)
            );
            if let Some(imp) = &r.improvement {
                println!("improvement over baseline: std {}% pcc {}%", opt(imp.std_pct), opt(imp.pcc_pct));
            }
        }
        Command::Sweep(args) => {
            let s = commands::sweep(&args.into_layers())?;
            let opt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.2}"));
            for (i, p) in s.points.iter().enumerate() {
                println!(
                    "{}={p}: acc {} std {} |pcc| {}",
                    s.axis,
                    opt(s.mean(i, "acc")),
                    opt(s.mean(i, "std")),
                    opt(s.mean(i, "abs_pcc"))
                );
            }
            for (flag, v) in &s.flags {
                println!("{flag}: {}", v.map_or("NA".to_string(), |b| b.to_string()));
            }
            if s.failures > 0 {
                eprintln!("{} runs failed; see the error rows", s.failures);
            }
        }
        Command::Expand(args) => {
            let r = commands::expand_report(&args.into_layers())?;
            for row in &r.rows {
                println!("hop {}: {} edges, gap {:.4}", row.hop, row.num_edges, row.gap);
            }
        }
        Command::Synth(args) => {
            let s = commands::synth(&args.into_layers())?;
            println!("{} nodes, {} edges", s.num_nodes, s.num_edges);
            for f in &s.files {
                println!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
