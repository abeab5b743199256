//! Synthetic graphs: a three-group core/middle/rim topology for expansion
//! experiments, and a two-clique fixture for training smoke tests.

use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{split_train_test, Graph, LabeledDataset};

pub const DEFAULT_CORE_SIZE: usize = 5;
pub const DEFAULT_MIDDLE_PER_CORE: usize = 1;
pub const DEFAULT_CHAIN_LEN: usize = 1;
pub const FIXTURE_CLIQUE_SIZE: usize = 10;
pub const FIXTURE_TRAIN_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeGroup {
    Central,
    Middle,
    Marginal,
}

impl NodeGroup {
    pub const ALL: [NodeGroup; 3] = [NodeGroup::Central, NodeGroup::Middle, NodeGroup::Marginal];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NodeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeGroup::Central => "central",
            NodeGroup::Middle => "middle",
            NodeGroup::Marginal => "marginal",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedGraph {
    pub graph: Graph,
    pub groups: Vec<NodeGroup>,
    /// Branch index of each node; central nodes use their own position in
    /// the core.
    pub branch: Vec<usize>,
}

impl GroupedGraph {
    pub fn group_ids(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.index()).collect()
    }

    pub fn group_names() -> Vec<String> {
        NodeGroup::ALL.iter().map(|g| g.to_string()).collect()
    }

    /// Nodes outside the core.
    pub fn non_central_mask(&self) -> Vec<bool> {
        self.groups.iter().map(|&g| g != NodeGroup::Central).collect()
    }

    /// Binary labels from branch parity.
    pub fn parity_labels(&self) -> Vec<usize> {
        self.branch.iter().map(|b| b % 2).collect()
    }

    pub fn write_groups_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "node_id,group,branch")?;
        for (i, (g, b)) in self.groups.iter().zip(&self.branch).enumerate() {
            writeln!(out, "{i},{g},{b}")?;
        }
        Ok(())
    }
}

/// Core/middle/rim graph.
///
/// * `core_size` central nodes form a clique.
/// * `core_size * middle_per_core` middle nodes, each adjacent to every
///   central node.
/// * Each middle node starts a path of `chain_len` marginal nodes.
/// * The path tips are joined in a rim cycle whose order the seed shuffles.
///
/// Nodes are numbered central first, then branch by branch (middle node
/// followed by its path).
pub fn generate_three_group(
    core_size: usize,
    middle_per_core: usize,
    chain_len: usize,
    seed: u64,
) -> Result<GroupedGraph> {
    if core_size < 3 {
        return Err(Error::invalid(format!("core_size must be at least 3, got {core_size}")));
    }
    if middle_per_core == 0 {
        return Err(Error::invalid("middle_per_core must be at least 1"));
    }
    if chain_len == 0 {
        return Err(Error::invalid("chain_len must be at least 1"));
    }
    let num_branches = core_size * middle_per_core;
    let n = core_size + num_branches * (1 + chain_len);
    let mut edges = Vec::new();
    let mut groups = vec![NodeGroup::Central; core_size];
    let mut branch: Vec<usize> = (0..core_size).collect();
    for u in 0..core_size {
        for v in u + 1..core_size {
            edges.push((u, v));
        }
    }
    let mut tips = Vec::with_capacity(num_branches);
    for b in 0..num_branches {
        let mid = groups.len();
        groups.push(NodeGroup::Middle);
        branch.push(b);
        edges.extend((0..core_size).map(|u| (u, mid)));
        let mut prev = mid;
        for _ in 0..chain_len {
            let node = groups.len();
            groups.push(NodeGroup::Marginal);
            branch.push(b);
            edges.push((prev, node));
            prev = node;
        }
        tips.push(prev);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tips.shuffle(&mut rng);
    if tips.len() >= 2 {
        for k in 0..tips.len() {
            edges.push((tips[k], tips[(k + 1) % tips.len()]));
        }
    }
    debug_assert_eq!(groups.len(), n);
    Ok(GroupedGraph {
        graph: Graph::from_edges(n, edges)?,
        groups,
        branch,
    })
}

/// Two cliques of [`FIXTURE_CLIQUE_SIZE`] joined by one bridge edge, labeled
/// by clique and split 80/20.
pub fn generate_separable_fixture(seed: u64) -> Result<LabeledDataset> {
    let k = FIXTURE_CLIQUE_SIZE;
    let mut edges = Vec::new();
    for base in [0, k] {
        for i in 0..k {
            for j in i + 1..k {
                edges.push((base + i, base + j));
            }
        }
    }
    edges.push((k - 1, k));
    let graph = Graph::from_edges(2 * k, edges)?;
    let labels = (0..2 * k).map(|i| i / k).collect();
    split_train_test(&LabeledDataset::new(graph, labels)?, FIXTURE_TRAIN_RATIO, seed)
}
