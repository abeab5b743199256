//! Undirected graphs in CSR form, dataset files, splitting and BFS.
//!
//! A [`Graph`] is immutable once built. Neighbor lists are sorted, contain no
//! duplicates and no self-loops; self-inclusion is applied by the consumers
//! that need it (neighborhood expansion, aggregation).

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    num_edges: usize,
}

impl Graph {
    /// Builds a graph from an arbitrary edge iterator. Edges are symmetrized,
    /// deduplicated and stripped of self-loops.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for (u, v) in edges {
            for node in [u, v] {
                if node >= num_nodes {
                    return Err(Error::NodeOutOfRange { node, num_nodes });
                }
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        let num_edges = neighbors.len() / 2;
        Ok(Graph {
            offsets,
            neighbors,
            num_edges,
        })
    }

    /// Graph with `num_nodes` nodes and no edges.
    pub fn empty(num_nodes: usize) -> Self {
        Graph {
            offsets: vec![0; num_nodes + 1],
            neighbors: Vec::new(),
            num_edges: 0,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes() && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "permutation of length {} for {} nodes",
                perm.len(),
                self.num_nodes()
            )));
        }
        Graph::from_edges(
            self.num_nodes(),
            self.edges().map(|(u, v)| (perm[u], perm[v])),
        )
    }

    /// Serializes as a tab-separated edge list readable by [`parse_edge_list`].
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# nodes {} edges {}", self.num_nodes(), self.num_edges())?;
        for (u, v) in self.edges() {
            writeln!(out, "{u}\t{v}")?;
        }
        Ok(())
    }
}

fn parse_pair(line: &str, source_name: &str, lineno: usize) -> Result<(usize, usize)> {
    let parse_err = |message: String| Error::Parse {
        source_name: source_name.to_string(),
        line: lineno,
        message,
    };
    let mut fields = line.split(['\t', ' ']).filter(|f| !f.is_empty());
    let mut next = |what: &str| -> Result<usize> {
        let field = fields
            .next()
            .ok_or_else(|| parse_err(format!("missing {what}")))?;
        field
            .parse::<usize>()
            .map_err(|e| parse_err(format!("bad {what} {field:?}: {e}")))
    };
    let a = next("first column")?;
    let b = next("second column")?;
    if let Some(extra) = fields.next() {
        return Err(parse_err(format!("unexpected trailing field {extra:?}")));
    }
    Ok((a, b))
}

/// Iterates the meaningful lines of a whitespace pair file, skipping blanks and
/// `#` comments. Yields 1-based line numbers.
fn data_lines<'a, R: BufRead + 'a>(
    reader: R,
    source_name: &'a str,
) -> impl Iterator<Item = Result<(usize, String)>> + 'a {
    reader
        .lines()
        .enumerate()
        .filter_map(move |(idx, line)| match line {
            Err(e) => Some(Err(Error::Parse {
                source_name: source_name.to_string(),
                line: idx + 1,
                message: e.to_string(),
            })),
            Ok(l) => {
                let trimmed = l.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    None
                } else {
                    Some(Ok((idx + 1, trimmed.to_string())))
                }
            }
        })
}

/// Parses a `src<TAB>dst` edge list. A `# nodes <N>` comment, as written by
/// [`Graph::write_edge_list`], raises the node count so trailing isolated
/// nodes survive a round trip.
pub fn parse_edge_list<R: BufRead>(reader: R, source_name: &str) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut max_id = None::<usize>;
    let mut declared = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some("nodes") {
                if let Some(n) = words.next().and_then(|w| w.parse::<usize>().ok()) {
                    declared = declared.max(n);
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (u, v) = parse_pair(line, source_name, lineno)?;
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }
    let num_nodes = match max_id {
        Some(m) => (m + 1).max(declared),
        None => return Err(Error::EmptyEdgeList(source_name.to_string())),
    };
    Graph::from_edges(num_nodes, edges)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(BufReader::new(file), &path.display().to_string())
}

/// A graph with one class label per node and a train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub graph: Graph,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl LabeledDataset {
    /// Wraps labels around a graph. Every node starts in the training set.
    pub fn new(graph: Graph, labels: Vec<usize>) -> Result<Self> {
        let n = graph.num_nodes();
        if labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} nodes",
                labels.len(),
                n
            )));
        }
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Ok(LabeledDataset {
            graph,
            labels,
            num_classes,
            train_mask: vec![true; n],
            test_mask: vec![false; n],
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        mask_to_ids(&self.train_mask)
    }

    pub fn test_nodes(&self) -> Vec<usize> {
        mask_to_ids(&self.test_mask)
    }
}

pub(crate) fn mask_to_ids(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}

pub fn parse_labels<R: BufRead>(reader: R, source_name: &str, graph: Graph) -> Result<LabeledDataset> {
    let n = graph.num_nodes();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    for item in data_lines(reader, source_name) {
        let (lineno, line) = item?;
        let (node, class) = parse_pair(&line, source_name, lineno)?;
        if node >= n {
            return Err(Error::NodeOutOfRange { node, num_nodes: n });
        }
        if labels[node].is_some() {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line: lineno,
                message: format!("duplicate label for node {node}"),
            });
        }
        labels[node] = Some(class);
    }
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or(Error::MissingLabel(i)))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(graph, labels)
}

pub fn load_labels(path: impl AsRef<Path>, graph: Graph) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_labels(BufReader::new(file), &path.display().to_string(), graph)
}

/// Uniform random train/test split: a seeded shuffle of node ids, the first
/// `floor(ratio * N)` of which become training nodes.
pub fn split_train_test(dataset: &LabeledDataset, ratio: f64, seed: u64) -> Result<LabeledDataset> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n = dataset.num_nodes();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let num_train = (ratio * n as f64).floor() as usize;
    let mut train_mask = vec![false; n];
    for &node in &order[..num_train] {
        train_mask[node] = true;
    }
    let test_mask = train_mask.iter().map(|t| !t).collect();
    Ok(LabeledDataset {
        train_mask,
        test_mask,
        ..dataset.clone()
    })
}

/// Hop distance from a BFS source; `None` marks an unreachable node.
pub type HopDistance = Option<u32>;

pub fn bfs_distances(graph: &Graph, source: usize) -> Result<Vec<HopDistance>> {
    let n = graph.num_nodes();
    if source >= n {
        return Err(Error::NodeOutOfRange {
            node: source,
            num_nodes: n,
        });
    }
    let mut scratch = BfsScratch::new(n);
    scratch.run(graph, source);
    Ok(scratch
        .dist
        .iter()
        .map(|&d| (d != UNSEEN).then_some(d))
        .collect())
}

const UNSEEN: u32 = u32::MAX;

/// Reusable BFS buffers, one per worker thread.
pub(crate) struct BfsScratch {
    pub(crate) dist: Vec<u32>,
    queue: VecDeque<usize>,
    touched: Vec<usize>,
}

impl BfsScratch {
    pub(crate) fn new(n: usize) -> Self {
        BfsScratch {
            dist: vec![UNSEEN; n],
            queue: VecDeque::new(),
            touched: Vec::new(),
        }
    }

    /// Runs a BFS from `source` and returns (reached nodes excluding source,
    /// sum of distances). Buffers are reset lazily on the next call.
    pub(crate) fn run(&mut self, graph: &Graph, source: usize) -> (u64, u64) {
        for &t in &self.touched {
            self.dist[t] = UNSEEN;
        }
        self.touched.clear();
        self.queue.clear();

        self.dist[source] = 0;
        self.touched.push(source);
        self.queue.push_back(source);
        let mut reached = 0u64;
        let mut total = 0u64;
        while let Some(u) = self.queue.pop_front() {
            let next = self.dist[u] + 1;
            for &v in graph.neighbors(u) {
                if self.dist[v] == UNSEEN {
                    self.dist[v] = next;
                    self.touched.push(v);
                    self.queue.push_back(v);
                    reached += 1;
                    total += next as u64;
                }
            }
        }
        (reached, total)
    }
}
