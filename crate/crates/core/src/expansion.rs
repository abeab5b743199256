//! Marginal-node detection and neighborhood expansion.
//!
//! Nodes whose centrality falls at or below the margin line are marginal.
//! The debiased adjacency keeps only edges touching a marginal node, and its
//! boolean powers define the hop-`h` neighbor sets used by hop-aware
//! aggregation. Hop 1 always comes from the original adjacency.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centrality::{closeness, CentralityKind, CentralityVector};
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSpace {
    /// Compare the line against min-max normalized scores.
    Normalized,
    Raw,
}

impl fmt::Display for ThresholdSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdSpace::Normalized => "normalized",
            ThresholdSpace::Raw => "raw",
        })
    }
}

impl FromStr for ThresholdSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normalized" => Ok(ThresholdSpace::Normalized),
            "raw" => Ok(ThresholdSpace::Raw),
            other => Err(Error::invalid(format!("unknown threshold space {other:?}"))),
        }
    }
}

/// How hop sets beyond the first are read off the debiased adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HopMode {
    /// Nonzeros of `Ã^h`: walks of exactly `h` steps.
    #[default]
    Exact,
    /// Union of nonzeros of `Ã^g` for `g <= h`.
    Within,
}

impl fmt::Display for HopMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HopMode::Exact => "exact",
            HopMode::Within => "within",
        })
    }
}

impl FromStr for HopMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(HopMode::Exact),
            "within" => Ok(HopMode::Within),
            other => Err(Error::invalid(format!("unknown hop mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginConfig {
    pub line: f64,
    pub centrality_kind: CentralityKind,
    pub threshold_space: ThresholdSpace,
}

impl MarginConfig {
    pub fn new(line: f64, centrality_kind: CentralityKind) -> Self {
        MarginConfig {
            line,
            centrality_kind,
            threshold_space: ThresholdSpace::Normalized,
        }
    }
}

/// `mask[i] = s_i <= line`.
pub fn mark_marginal(cv: &CentralityVector, cfg: &MarginConfig) -> Result<Vec<bool>> {
    if cv.kind != cfg.centrality_kind {
        return Err(Error::invalid(format!(
            "margin line configured for {} but scores are {}",
            cfg.centrality_kind, cv.kind
        )));
    }
    match cfg.threshold_space {
        ThresholdSpace::Normalized => {
            if !cv.normalized {
                return Err(Error::invalid(
                    "normalized margin line applied to raw scores",
                ));
            }
            if !(0.0..=1.0).contains(&cfg.line) {
                return Err(Error::invalid(format!(
                    "normalized margin line {} outside [0, 1]",
                    cfg.line
                )));
            }
        }
        ThresholdSpace::Raw => {
            if cv.normalized {
                return Err(Error::invalid("raw margin line applied to normalized scores"));
            }
            if cfg.line.is_nan() {
                return Err(Error::invalid("margin line is NaN"));
            }
        }
    }
    Ok(cv.scores.iter().map(|&s| s <= cfg.line).collect())
}

/// The adjacency restricted to edges with at least one marginal endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedAdjacency {
    pub adjacency: Graph,
    pub marginal_mask: Vec<bool>,
}

pub fn build_debiased_adjacency(graph: &Graph, mask: &[bool]) -> Result<DebiasedAdjacency> {
    let n = graph.num_nodes();
    if mask.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "marginal mask of length {} for {} nodes",
            mask.len(),
            n
        )));
    }
    let adjacency = Graph::from_edges(n, graph.edges().filter(|&(u, v)| mask[u] || mask[v]))?;
    Ok(DebiasedAdjacency {
        adjacency,
        marginal_mask: mask.to_vec(),
    })
}

/// Sorted, duplicate-free neighbor lists for every node, in CSR layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSets {
    offsets: Vec<usize>,
    ids: Vec<usize>,
}

impl NeighborSets {
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut ids = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for row in rows {
            ids.extend(row);
            offsets.push(ids.len());
        }
        NeighborSets { offsets, ids }
    }

    /// Each node's graph neighbors plus itself.
    pub fn with_self_loops(graph: &Graph) -> Self {
        let rows = (0..graph.num_nodes())
            .map(|i| insert_sorted(graph.neighbors(i).to_vec(), i))
            .collect();
        NeighborSets::from_rows(rows)
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, node: usize) -> &[usize] {
        &self.ids[self.offsets[node]..self.offsets[node + 1]]
    }

    /// Flat entry range of `row(node)`.
    pub fn row_range(&self, node: usize) -> std::ops::Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }

    /// Total number of (node, neighbor) entries.
    pub fn nnz(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Applies a node relabeling `i -> perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.num_nodes();
        let mut rows = vec![Vec::new(); n];
        for i in 0..n {
            let mut row: Vec<usize> = self.row(i).iter().map(|&j| perm[j]).collect();
            row.sort_unstable();
            rows[perm[i]] = row;
        }
        NeighborSets::from_rows(rows)
    }
}

fn insert_sorted(mut row: Vec<usize>, node: usize) -> Vec<usize> {
    if let Err(pos) = row.binary_search(&node) {
        row.insert(pos, node);
    }
    row
}

/// The hop-indexed neighbor sets `N^(1)_i, ..., N^(h)_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopNeighborhoods {
    hops: Vec<NeighborSets>,
}

impl HopNeighborhoods {
    pub fn from_hops(hops: Vec<NeighborSets>) -> Result<Self> {
        if hops.is_empty() {
            return Err(Error::invalid("at least one hop is required"));
        }
        let n = hops[0].num_nodes();
        if hops.iter().any(|h| h.num_nodes() != n) {
            return Err(Error::ShapeMismatch("hops disagree on node count".into()));
        }
        Ok(HopNeighborhoods { hops })
    }

    /// One-hop neighborhoods of the original graph, self included.
    pub fn one_hop(graph: &Graph) -> Self {
        HopNeighborhoods {
            hops: vec![NeighborSets::with_self_loops(graph)],
        }
    }

    pub fn h_max(&self) -> usize {
        self.hops.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.hops[0].num_nodes()
    }

    /// Neighbor sets at 1-based hop `h`.
    pub fn hop(&self, h: usize) -> &NeighborSets {
        &self.hops[h - 1]
    }

    pub fn hops(&self) -> &[NeighborSets] {
        &self.hops
    }

    /// Keeps hops `1..=h_max`.
    pub fn truncated(&self, h_max: usize) -> Result<Self> {
        if h_max == 0 || h_max > self.hops.len() {
            return Err(Error::invalid(format!(
                "cannot truncate {} hops to {h_max}",
                self.hops.len()
            )));
        }
        Ok(HopNeighborhoods {
            hops: self.hops[..h_max].to_vec(),
        })
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        HopNeighborhoods {
            hops: self.hops.iter().map(|h| h.permuted(perm)).collect(),
        }
    }
}

/// Row-wise boolean product `walks · adj`, one sorted row per node.
fn boolean_step(walks: &[Vec<usize>], adj: &Graph) -> Vec<Vec<usize>> {
    let n = adj.num_nodes();
    walks
        .par_iter()
        .map_init(
            || vec![false; n],
            |seen, row| {
                let mut out = Vec::new();
                for &k in row {
                    for &j in adj.neighbors(k) {
                        if !seen[j] {
                            seen[j] = true;
                            out.push(j);
                        }
                    }
                }
                for &j in &out {
                    seen[j] = false;
                }
                out.sort_unstable();
                out
            },
        )
        .collect()
}

fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

pub fn expand(dadj: &DebiasedAdjacency, h_max: usize, graph: &Graph) -> Result<HopNeighborhoods> {
    expand_with_mode(dadj, h_max, graph, HopMode::Exact)
}

/// Builds `N^(1) .. N^(h_max)`. Hop 1 is the original neighborhood; hop
/// `h >= 2` is read off `Ã^h` (or the union of `Ã^2 .. Ã^h` in
/// [`HopMode::Within`]) under the boolean semiring. Every set contains its
/// own node.
pub fn expand_with_mode(
    dadj: &DebiasedAdjacency,
    h_max: usize,
    graph: &Graph,
    mode: HopMode,
) -> Result<HopNeighborhoods> {
    if h_max == 0 {
        return Err(Error::invalid("hop count must be at least 1"));
    }
    let n = graph.num_nodes();
    let adj = &dadj.adjacency;
    if adj.num_nodes() != n {
        return Err(Error::ShapeMismatch(format!(
            "debiased adjacency has {} nodes, graph has {n}",
            adj.num_nodes()
        )));
    }

    let mut hops = vec![NeighborSets::with_self_loops(graph)];
    let mut walks: Vec<Vec<usize>> = (0..n).map(|i| adj.neighbors(i).to_vec()).collect();
    let mut reach = walks.clone();
    for _ in 2..=h_max {
        walks = boolean_step(&walks, adj);
        let rows: Vec<Vec<usize>> = match mode {
            HopMode::Exact => walks.par_iter().enumerate().map(|(i, w)| insert_sorted(w.clone(), i)).collect(),
            HopMode::Within => {
                reach = reach
                    .par_iter()
                    .zip(walks.par_iter())
                    .map(|(r, w)| union_sorted(r, w))
                    .collect();
                reach.par_iter().enumerate().map(|(i, r)| insert_sorted(r.clone(), i)).collect()
            }
        };
        hops.push(NeighborSets::from_rows(rows));
    }
    Ok(HopNeighborhoods { hops })
}

/// Closeness of the graph implied by the first `h` hop sets, summarized per
/// node group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopGapRow {
    pub hop: usize,
    pub num_edges: usize,
    pub group_means: Vec<f64>,
    /// Largest minus smallest group mean.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub group_names: Vec<String>,
    pub rows: Vec<HopGapRow>,
}

/// The graph whose edges are `(i, j)` for `j` in any of the first `h` hop
/// sets of `i`.
pub fn expanded_graph(hops: &HopNeighborhoods, h: usize) -> Result<Graph> {
    let n = hops.num_nodes();
    let edges: Vec<(usize, usize)> = hops.hops()[..h]
        .iter()
        .flat_map(|sets| (0..n).flat_map(move |i| sets.row(i).iter().map(move |&j| (i, j))))
        .collect();
    Graph::from_edges(n, edges)
}

/// Recomputes closeness on each cumulative expanded graph and reports
/// per-group means. `groups[i]` indexes into `group_names`; empty groups are
/// skipped when computing the gap.
pub fn expansion_report(
    hops: &HopNeighborhoods,
    groups: &[usize],
    group_names: &[String],
) -> Result<ExpansionReport> {
    let n = hops.num_nodes();
    if groups.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} group tags for {n} nodes",
            groups.len()
        )));
    }
    if let Some(&g) = groups.iter().find(|&&g| g >= group_names.len()) {
        return Err(Error::invalid(format!("group id {g} has no name")));
    }
    let mut rows = Vec::with_capacity(hops.h_max());
    for h in 1..=hops.h_max() {
        let g = expanded_graph(hops, h)?;
        let cv = closeness(&g)?;
        let mut sums = vec![0.0; group_names.len()];
        let mut counts = vec![0usize; group_names.len()];
        for (i, &grp) in groups.iter().enumerate() {
            sums[grp] += cv.scores[i];
            counts[grp] += 1;
        }
        let group_means: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
            .collect();
        let present = group_means.iter().copied().filter(|m| !m.is_nan());
        let (lo, hi) = present.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
            (lo.min(m), hi.max(m))
        });
        rows.push(HopGapRow {
            hop: h,
            num_edges: g.num_edges(),
            group_means,
            gap: if hi >= lo { hi - lo } else { 0.0 },
        });
    }
    Ok(ExpansionReport {
        group_names: group_names.to_vec(),
        rows,
    })
}

/// Groups nodes into `num_bins` equal-width bins of their scores.
pub fn groups_by_score_bins(scores: &[f64], num_bins: usize) -> (Vec<usize>, Vec<String>) {
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let num_bins = num_bins.max(1);
    let width = (hi - lo) / num_bins as f64;
    let groups = scores
        .iter()
        .map(|&s| {
            if width > 0.0 {
                (((s - lo) / width) as usize).min(num_bins - 1)
            } else {
                0
            }
        })
        .collect();
    let names = (0..num_bins)
        .map(|b| format!("bin{b}[{:.4},{:.4}]", lo + width * b as f64, lo + width * (b + 1) as f64))
        .collect();
    (groups, names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, edges.iter().copied()).unwrap()
    }

    fn normalized(scores: Vec<f64>) -> CentralityVector {
        CentralityVector {
            kind: CentralityKind::Closeness,
            scores,
            normalized: true,
        }
    }

    #[test]
    fn marginal_mask_extremes() {
        let cv = normalized(vec![0.0, 0.3, 1.0, 0.7]);
        let cfg = MarginConfig::new(0.0, CentralityKind::Closeness);
        assert_eq!(mark_marginal(&cv, &cfg).unwrap(), vec![true, false, false, false]);
        let cfg = MarginConfig::new(1.0, CentralityKind::Closeness);
        assert!(mark_marginal(&cv, &cfg).unwrap().iter().all(|&m| m));
    }

    #[test]
    fn marginal_mask_rejects_mismatch() {
        let cv = normalized(vec![0.0, 1.0]);
        let wrong_kind = MarginConfig::new(0.5, CentralityKind::Eigenvector);
        assert!(mark_marginal(&cv, &wrong_kind).is_err());
        let raw = MarginConfig {
            threshold_space: ThresholdSpace::Raw,
            ..MarginConfig::new(0.5, CentralityKind::Closeness)
        };
        assert!(mark_marginal(&cv, &raw).is_err());
        let out_of_range = MarginConfig::new(1.5, CentralityKind::Closeness);
        assert!(mark_marginal(&cv, &out_of_range).is_err());
        let unnormalized = CentralityVector {
            normalized: false,
            ..cv
        };
        let cfg = MarginConfig::new(0.5, CentralityKind::Closeness);
        assert!(mark_marginal(&unnormalized, &cfg).is_err());
    }

    #[test]
    fn debiased_adjacency_cases() {
        let tri = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let none = build_debiased_adjacency(&tri, &[false; 3]).unwrap();
        assert_eq!(none.adjacency.num_edges(), 0);
        let all = build_debiased_adjacency(&tri, &[true; 3]).unwrap();
        assert_eq!(all.adjacency, tri);
        let one = build_debiased_adjacency(&tri, &[true, false, false]).unwrap();
        assert!(one.adjacency.has_edge(0, 1));
        assert!(one.adjacency.has_edge(0, 2));
        assert!(!one.adjacency.has_edge(1, 2));
        assert!(build_debiased_adjacency(&tri, &[true]).is_err());
    }

    #[test]
    fn empty_mask_leaves_only_self_beyond_hop_one() {
        let p4 = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let dadj = build_debiased_adjacency(&p4, &[false; 4]).unwrap();
        let hops = expand(&dadj, 3, &p4).unwrap();
        assert_eq!(hops.hop(1).row(1), &[0, 1, 2]);
        for h in 2..=3 {
            for i in 0..4 {
                assert_eq!(hops.hop(h).row(i), &[i]);
            }
        }
    }

    #[test]
    fn path_two_hop() {
        let p4 = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        let dadj = build_debiased_adjacency(&p4, &[true; 4]).unwrap();
        let hops = expand(&dadj, 2, &p4).unwrap();
        assert_eq!(hops.hop(2).row(0), &[0, 2]);
        assert_eq!(hops.hop(2).row(1), &[1, 3]);

        let within = expand_with_mode(&dadj, 2, &p4, HopMode::Within).unwrap();
        assert_eq!(within.hop(2).row(0), &[0, 1, 2]);
    }

    #[test]
    fn zero_hops_rejected() {
        let p2 = graph(2, &[(0, 1)]);
        let dadj = build_debiased_adjacency(&p2, &[true; 2]).unwrap();
        assert!(expand(&dadj, 0, &p2).is_err());
    }

    #[test]
    fn report_hop_one_matches_original_closeness() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let dadj = build_debiased_adjacency(&g, &[true; 5]).unwrap();
        let hops = expand(&dadj, 2, &g).unwrap();
        let groups = vec![0, 1, 2, 3, 4];
        let names: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let report = expansion_report(&hops, &groups, &names).unwrap();
        let cv = closeness(&g).unwrap();
        assert_eq!(report.rows[0].group_means, cv.scores);
    }

    #[test]
    fn complete_graph_has_no_gap() {
        let k5 = Graph::from_edges(5, (0..5).flat_map(|i| (0..5).map(move |j| (i, j)))).unwrap();
        let dadj = build_debiased_adjacency(&k5, &[true, false, true, false, false]).unwrap();
        let hops = expand(&dadj, 3, &k5).unwrap();
        let report = expansion_report(&hops, &[0, 0, 1, 1, 2], &["a".into(), "b".into(), "c".into()]).unwrap();
        for row in report.rows {
            assert_eq!(row.gap, 0.0);
        }
    }

    #[test]
    fn score_bins() {
        let (groups, names) = groups_by_score_bins(&[0.0, 0.49, 0.5, 1.0], 2);
        assert_eq!(groups, vec![0, 0, 1, 1]);
        assert_eq!(names.len(), 2);
    }
}
