//! Per-node structure indicators: closeness and eigenvector centrality.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BfsScratch, Graph};

pub const DEFAULT_EIGEN_TOL: f64 = 1e-8;
pub const DEFAULT_EIGEN_MAX_ITER: usize = 10_000;

/// Self-loop weight added inside power iteration only (iterating `A + I`).
/// Shifting every eigenvalue leaves the eigenvectors unchanged and breaks the
/// +λ/−λ tie of bipartite components, which otherwise oscillate forever.
const POWER_ITERATION_SHIFT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CentralityKind {
    Closeness,
    Eigenvector,
}

impl fmt::Display for CentralityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CentralityKind::Closeness => "closeness",
            CentralityKind::Eigenvector => "eigenvector",
        })
    }
}

impl FromStr for CentralityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "closeness" => Ok(CentralityKind::Closeness),
            "eigenvector" => Ok(CentralityKind::Eigenvector),
            other => Err(Error::invalid(format!("unknown centrality {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityVector {
    pub kind: CentralityKind,
    pub scores: Vec<f64>,
    /// Whether `scores` have been min-max rescaled to `[0, 1]`.
    pub normalized: bool,
}

impl CentralityVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Writes `node_id,score` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "node_id,score")?;
        for (i, s) in self.scores.iter().enumerate() {
            writeln!(out, "{i},{s:.16e}")?;
        }
        Ok(())
    }
}

pub fn compute(graph: &Graph, kind: CentralityKind) -> Result<CentralityVector> {
    match kind {
        CentralityKind::Closeness => closeness(graph),
        CentralityKind::Eigenvector => eigenvector(graph, DEFAULT_EIGEN_TOL, DEFAULT_EIGEN_MAX_ITER),
    }
}

/// Closeness centrality from one BFS per node.
///
/// A node reaching `r` other nodes with distance sum `d` scores
/// `(r / d) * (r / (N - 1))`, and 0 when it reaches nobody. On a connected
/// graph this is `(N - 1) / d`; on a disconnected one the second factor
/// scales each component by its share of the graph.
pub fn closeness(graph: &Graph) -> Result<CentralityVector> {
    let n = graph.num_nodes();
    if n < 2 {
        return Err(Error::invalid(format!(
            "closeness needs at least 2 nodes, graph has {n}"
        )));
    }
    let denom = (n - 1) as f64;
    let scores = (0..n)
        .into_par_iter()
        .map_init(
            || BfsScratch::new(n),
            |scratch, source| {
                let (reached, total) = scratch.run(graph, source);
                if reached == 0 {
                    0.0
                } else {
                    let r = reached as f64;
                    (r / total as f64) * (r / denom)
                }
            },
        )
        .collect();
    Ok(CentralityVector {
        kind: CentralityKind::Closeness,
        scores,
        normalized: false,
    })
}

fn spmv_shifted(graph: &Graph, x: &[f64], out: &mut [f64]) {
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        let mut acc = POWER_ITERATION_SHIFT * x[i];
        for &j in graph.neighbors(i) {
            acc += x[j];
        }
        *o = acc;
    });
}

fn l2_normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Eigenvector centrality by power iteration from the uniform unit vector.
///
/// Stops once no entry moves by `tol` or more between iterations. The result
/// has unit L2 norm and non-negative entries.
pub fn eigenvector(graph: &Graph, tol: f64, max_iter: usize) -> Result<CentralityVector> {
    let n = graph.num_nodes();
    if n == 0 {
        return Err(Error::invalid("eigenvector centrality of an empty graph"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut next = vec![0.0; n];
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        spmv_shifted(graph, &x, &mut next);
        l2_normalize(&mut next);
        change = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut next);
        if change < tol {
            return Ok(CentralityVector {
                kind: CentralityKind::Eigenvector,
                scores: x,
                normalized: false,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: change,
        last: x,
    })
}

/// Rayleigh quotient `vᵀAv / vᵀv` of the plain adjacency.
pub fn rayleigh_quotient(graph: &Graph, v: &[f64]) -> f64 {
    let num: f64 = (0..graph.num_nodes())
        .map(|i| v[i] * graph.neighbors(i).iter().map(|&j| v[j]).sum::<f64>())
        .sum();
    let den: f64 = v.iter().map(|x| x * x).sum();
    num / den
}

/// Affine rescale to `[0, 1]`. A constant vector maps to all zeros.
pub fn normalize_minmax(cv: &CentralityVector) -> CentralityVector {
    let (lo, hi) = cv
        .scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let span = hi - lo;
    let scores = if span > 0.0 {
        cv.scores.iter().map(|s| (s - lo) / span).collect()
    } else {
        vec![0.0; cv.scores.len()]
    };
    CentralityVector {
        kind: cv.kind,
        scores,
        normalized: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, edges.iter().copied()).unwrap()
    }

    #[test]
    fn closeness_path_and_complete() {
        let p3 = closeness(&graph(3, &[(0, 1), (1, 2)])).unwrap();
        assert!((p3.scores[1] - 1.0).abs() < 1e-15);
        assert!((p3.scores[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p3.scores[2] - 2.0 / 3.0).abs() < 1e-15);

        let k4 = graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert!(closeness(&k4).unwrap().scores.iter().all(|&s| (s - 1.0).abs() < 1e-15));
    }

    #[test]
    fn closeness_disconnected_components() {
        // Each node reaches one other at distance 1: (1/1) * (1/3).
        let cv = closeness(&graph(4, &[(0, 1), (2, 3)])).unwrap();
        for s in cv.scores {
            assert!((s - 1.0 / 3.0).abs() < 1e-15);
        }
        let iso = closeness(&graph(3, &[(0, 1)])).unwrap();
        assert_eq!(iso.scores[2], 0.0);
    }

    #[test]
    fn closeness_needs_two_nodes() {
        assert!(closeness(&Graph::empty(1)).is_err());
    }

    #[test]
    fn eigenvector_triangle_and_star() {
        let k3 = eigenvector(&graph(3, &[(0, 1), (1, 2), (0, 2)]), 1e-12, 10_000).unwrap();
        for s in &k3.scores {
            assert!((s - 1.0 / 3f64.sqrt()).abs() < 1e-9);
        }
        // Star: bipartite, so this also exercises the shift.
        let star = graph(4, &[(0, 1), (0, 2), (0, 3)]);
        match eigenvector(&star, 1e-8, 10_000) {
            Ok(cv) => {
                assert!((cv.scores[0] - 0.5f64.sqrt()).abs() < 1e-6);
                for leaf in 1..4 {
                    assert!((cv.scores[leaf] - 1.0 / 6f64.sqrt()).abs() < 1e-6);
                }
            }
            Err(e) => panic!("star did not converge: {e}"),
        }
    }

    #[test]
    fn eigenvector_rejects_bad_input() {
        assert!(eigenvector(&Graph::empty(0), 1e-8, 10).is_err());
        assert!(eigenvector(&graph(2, &[(0, 1)]), 0.0, 10).is_err());
    }

    #[test]
    fn non_convergence_carries_last_iterate() {
        let p4 = graph(4, &[(0, 1), (1, 2), (2, 3)]);
        match eigenvector(&p4, 1e-300, 3) {
            Err(Error::NoConvergence { iterations, last, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(last.len(), 4);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn minmax() {
        let cv = CentralityVector {
            kind: CentralityKind::Closeness,
            scores: vec![2.0, 4.0, 6.0],
            normalized: false,
        };
        assert_eq!(normalize_minmax(&cv).scores, vec![0.0, 0.5, 1.0]);
        let flat = CentralityVector {
            scores: vec![5.0, 5.0],
            ..cv
        };
        let out = normalize_minmax(&flat);
        assert_eq!(out.scores, vec![0.0, 0.0]);
        assert!(out.normalized);
    }

    #[test]
    fn csv_has_full_precision() {
        let cv = CentralityVector {
            kind: CentralityKind::Closeness,
            scores: vec![2.0 / 3.0],
            normalized: false,
        };
        let mut buf = Vec::new();
        cv.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let value: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(value, 2.0 / 3.0);
    }
}
