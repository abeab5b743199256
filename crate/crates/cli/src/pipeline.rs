//! Stages shared by the commands: loading, scoring, expansion, training and
//! auditing one configuration.

use std::path::Path;

use sfair::centrality::{compute, normalize_minmax, CentralityVector};
use sfair::expansion::{build_debiased_adjacency, expand, mark_marginal, HopNeighborhoods, MarginConfig};
use sfair::fairness::{build_report, FairnessReport, ReportConfig};
use sfair::graph::{load_edge_list, load_labels, split_train_test, Graph, LabeledDataset};
use sfair::models::{train, Model, ModelConfig, ModelKind, TrainConfig, TrainedModel};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

fn require(path: &Path, what: &'static str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::NotFound {
            what,
            path: path.to_path_buf(),
        })
    }
}

pub fn load_graph(cfg: &RunConfig) -> CliResult<Graph> {
    let edges = cfg.edges_path();
    require(&edges, "edge list")?;
    Ok(load_edge_list(&edges)?)
}

/// The labeled dataset, before splitting.
pub fn load_dataset(cfg: &RunConfig) -> CliResult<LabeledDataset> {
    let graph = load_graph(cfg)?;
    let labels = cfg.labels_path();
    require(&labels, "labels")?;
    Ok(load_labels(&labels, graph)?)
}

pub fn split(cfg: &RunConfig, full: &LabeledDataset, seed: u64) -> CliResult<LabeledDataset> {
    Ok(split_train_test(full, cfg.split, seed)?)
}

/// Min-max normalized scores; thresholds and bins both live on this scale.
pub fn scores(cfg: &RunConfig, graph: &Graph) -> CliResult<CentralityVector> {
    Ok(normalize_minmax(&compute(graph, cfg.centrality)?))
}

pub fn marginal_mask(cfg: &RunConfig, scores: &CentralityVector) -> CliResult<Vec<bool>> {
    Ok(mark_marginal(scores, &MarginConfig::new(cfg.line, cfg.centrality))?)
}

/// Hop sets the configured model consumes. Baselines only see the original
/// one-hop neighborhood.
pub fn neighborhoods(cfg: &RunConfig, graph: &Graph, scores: &CentralityVector) -> CliResult<HopNeighborhoods> {
    if cfg.model != ModelKind::Sfair || cfg.hops == 1 {
        return Ok(HopNeighborhoods::one_hop(graph));
    }
    let mask = marginal_mask(cfg, scores)?;
    Ok(expand(&build_debiased_adjacency(graph, &mask)?, cfg.hops, graph)?)
}

pub fn model_config(cfg: &RunConfig, dataset: &LabeledDataset) -> ModelConfig {
    ModelConfig {
        embed_dim: cfg.embed_dim,
        hidden_dims: cfg.hidden_dims(),
        h_max: if cfg.model == ModelKind::Sfair { cfg.hops } else { 1 },
        fusion: cfg.fusion,
        dropout: cfg.dropout,
        ..ModelConfig::new(cfg.model, dataset.num_nodes(), dataset.num_classes)
    }
}

pub fn train_config(cfg: &RunConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: cfg.epochs,
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        seed,
    }
}

/// Baselines ignore the hop count; pin it so every artifact says so.
pub fn normalize_for_model(cfg: &mut RunConfig) {
    if cfg.model != ModelKind::Sfair {
        cfg.hops = 1;
    }
}

pub fn fit(
    cfg: &RunConfig,
    dataset: &LabeledDataset,
    hops: &HopNeighborhoods,
    seed: u64,
) -> CliResult<TrainedModel> {
    let model = Model::new(model_config(cfg, dataset), seed)?;
    Ok(train(model, dataset, hops, &train_config(cfg, seed))?)
}

pub fn report_config(cfg: &RunConfig, seed: u64) -> ReportConfig {
    ReportConfig {
        dataset: cfg.dataset_name(),
        model: cfg.model,
        centrality: cfg.centrality,
        normalized: true,
        num_bins: cfg.bins,
        min_count: cfg.min_count,
        line: cfg.line,
        hop: cfg.hops,
        fusion: cfg.fusion,
        seed,
    }
}

pub fn audit_model(
    cfg: &RunConfig,
    model: &Model,
    dataset: &LabeledDataset,
    scores: &CentralityVector,
    hops: &HopNeighborhoods,
    seed: u64,
    baseline: Option<&FairnessReport>,
) -> CliResult<FairnessReport> {
    let prediction = model.predict(hops)?;
    Ok(build_report(dataset, scores, &prediction, report_config(cfg, seed), baseline)?)
}

/// Split, train and audit one seed.
pub fn run_seed(
    cfg: &RunConfig,
    full: &LabeledDataset,
    scores: &CentralityVector,
    hops: &HopNeighborhoods,
    seed: u64,
) -> CliResult<(TrainedModel, FairnessReport)> {
    let dataset = split(cfg, full, seed)?;
    let trained = fit(cfg, &dataset, hops, seed)?;
    let report = audit_model(cfg, &trained.model, &dataset, scores, hops, seed, None)?;
    Ok((trained, report))
}
