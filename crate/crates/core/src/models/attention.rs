//! Single-head attention over one hop's neighbor sets, with its backward pass.
//!
//! For node `i` and neighbor `j ∈ N_i`, with `z = x·W`:
//!
//! ```text
//! u_ij = a_src · z_i + a_dst · z_j
//! α_ij = softmax_j(leaky_relu(u_ij))
//! p_i  = Σ_j α_ij z_j
//! ```
//!
//! `a = [a_src ‖ a_dst]` is stored as a `1 × 2d` row.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expansion::NeighborSets;
use crate::nn::{dot, leaky_relu, leaky_relu_grad, softmax_in_place, DenseMatrix};

/// Per-entry attention weights aligned with a [`NeighborSets`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCoefficients {
    pub alpha: Vec<f64>,
}

impl AttentionCoefficients {
    pub fn row<'a>(&'a self, nbrs: &NeighborSets, node: usize) -> &'a [f64] {
        &self.alpha[nbrs.row_range(node)]
    }
}

/// Column view of a [`NeighborSets`]: for each node `j`, the flat entries whose
/// neighbor is `j`, in ascending entry order.
#[derive(Debug, Clone)]
pub(crate) struct TransposeIndex {
    offsets: Vec<usize>,
    entries: Vec<usize>,
    entry_row: Vec<usize>,
}

impl TransposeIndex {
    pub(crate) fn new(nbrs: &NeighborSets) -> Self {
        let n = nbrs.num_nodes();
        let mut counts = vec![0usize; n + 1];
        for &j in nbrs.ids() {
            counts[j + 1] += 1;
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut entries = vec![0; nbrs.nnz()];
        let mut entry_row = vec![0; nbrs.nnz()];
        for i in 0..n {
            for e in nbrs.row_range(i) {
                entry_row[e] = i;
                let j = nbrs.ids()[e];
                entries[cursor[j]] = e;
                cursor[j] += 1;
            }
        }
        TransposeIndex {
            offsets,
            entries,
            entry_row,
        }
    }

    pub(crate) fn column(&self, j: usize) -> &[usize] {
        &self.entries[self.offsets[j]..self.offsets[j + 1]]
    }

    pub(crate) fn row_of(&self, entry: usize) -> usize {
        self.entry_row[entry]
    }
}

fn split_attention(a: &DenseMatrix, dim: usize) -> Result<(&[f64], &[f64])> {
    if a.rows() != 1 || a.cols() != 2 * dim {
        return Err(Error::ShapeMismatch(format!(
            "attention vector {:?} for embedding width {dim}",
            a.shape()
        )));
    }
    Ok(a.data().split_at(dim))
}

fn check_nbrs(x: &DenseMatrix, nbrs: &NeighborSets) -> Result<()> {
    if nbrs.num_nodes() != x.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} neighbor rows for {} embeddings",
            nbrs.num_nodes(),
            x.rows()
        )));
    }
    Ok(())
}

/// Attention weights from already-projected embeddings `z = x·W`.
fn coefficients_from_projected(
    z: &DenseMatrix,
    a: &DenseMatrix,
    nbrs: &NeighborSets,
    slope: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_nbrs(z, nbrs)?;
    let (a_src, a_dst) = split_attention(a, z.cols())?;
    let src: Vec<f64> = (0..z.rows()).into_par_iter().map(|i| dot(z.row(i), a_src)).collect();
    let dst: Vec<f64> = (0..z.rows()).into_par_iter().map(|i| dot(z.row(i), a_dst)).collect();
    let per_row: Vec<(Vec<f64>, Vec<f64>)> = (0..z.rows())
        .into_par_iter()
        .map(|i| {
            let row = nbrs.row(i);
            let pre: Vec<f64> = row.iter().map(|&j| src[i] + dst[j]).collect();
            let mut alpha: Vec<f64> = pre.iter().map(|&u| leaky_relu(u, slope)).collect();
            softmax_in_place(&mut alpha);
            (alpha, pre)
        })
        .collect();
    let mut alpha = Vec::with_capacity(nbrs.nnz());
    let mut pre = Vec::with_capacity(nbrs.nnz());
    for (a_row, p_row) in per_row {
        alpha.extend(a_row);
        pre.extend(p_row);
    }
    Ok((alpha, pre))
}

/// `α^(h,k)` for every node and neighbor of one hop.
pub fn attention_coefficients(
    x_prev: &DenseMatrix,
    w: &DenseMatrix,
    a: &DenseMatrix,
    nbrs: &NeighborSets,
    slope: f64,
) -> Result<AttentionCoefficients> {
    let z = x_prev.matmul(w)?;
    let (alpha, _) = coefficients_from_projected(&z, a, nbrs, slope)?;
    Ok(AttentionCoefficients { alpha })
}

/// `Σ_j α_ij z_j` over each row, for already-projected `z`.
pub(crate) fn weighted_sum(z: &DenseMatrix, alpha: &[f64], nbrs: &NeighborSets) -> DenseMatrix {
    let d = z.cols();
    let mut out = DenseMatrix::zeros(z.rows(), d);
    if d == 0 {
        return out;
    }
    out.data_mut()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, out_row)| {
            for e in nbrs.row_range(i) {
                let w = alpha[e];
                for (o, v) in out_row.iter_mut().zip(z.row(nbrs.ids()[e])) {
                    *o += w * v;
                }
            }
        });
    out
}

/// Attention-weighted hop aggregation `x_i = act(Σ_j α_ij W x_j)`.
pub fn hop_aggregate(
    x_prev: &DenseMatrix,
    w: &DenseMatrix,
    coeffs: &AttentionCoefficients,
    nbrs: &NeighborSets,
    act: super::Activation,
) -> Result<DenseMatrix> {
    check_nbrs(x_prev, nbrs)?;
    if coeffs.alpha.len() != nbrs.nnz() {
        return Err(Error::ShapeMismatch(format!(
            "{} coefficients for {} neighbor entries",
            coeffs.alpha.len(),
            nbrs.nnz()
        )));
    }
    let z = x_prev.matmul(w)?;
    Ok(act.apply(&weighted_sum(&z, &coeffs.alpha, nbrs)))
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    pub z: DenseMatrix,
    pub alpha: Vec<f64>,
    pub pre: Vec<f64>,
    /// Aggregated embeddings before activation.
    pub agg: DenseMatrix,
}

pub(crate) fn forward(
    x: &DenseMatrix,
    w: &DenseMatrix,
    a: &DenseMatrix,
    nbrs: &NeighborSets,
    slope: f64,
) -> Result<AttentionCache> {
    let z = x.matmul(w)?;
    let (alpha, pre) = coefficients_from_projected(&z, a, nbrs, slope)?;
    let agg = weighted_sum(&z, &alpha, nbrs);
    Ok(AttentionCache { z, alpha, pre, agg })
}

pub(crate) struct AttentionGrads {
    pub dx: DenseMatrix,
    pub dw: DenseMatrix,
    pub da: DenseMatrix,
}

/// Backward of [`forward`] given `d_agg = ∂L/∂agg`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    x: &DenseMatrix,
    w: &DenseMatrix,
    a: &DenseMatrix,
    nbrs: &NeighborSets,
    transpose: &TransposeIndex,
    slope: f64,
    cache: &AttentionCache,
    d_agg: &DenseMatrix,
) -> Result<AttentionGrads> {
    let z = &cache.z;
    let d = z.cols();
    let n = z.rows();
    let (a_src, a_dst) = split_attention(a, d)?;
    let ids = nbrs.ids();

    // Per row: gradient w.r.t. the pre-activation score of every entry, and
    // its row sum (gradient of the source term).
    let per_row: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let range = nbrs.row_range(i);
            let dp = d_agg.row(i);
            let d_alpha: Vec<f64> = range.clone().map(|e| dot(dp, z.row(ids[e]))).collect();
            let alpha = &cache.alpha[range.clone()];
            let mean: f64 = alpha.iter().zip(&d_alpha).map(|(al, da)| al * da).sum();
            let du: Vec<f64> = range
                .clone()
                .enumerate()
                .map(|(k, e)| alpha[k] * (d_alpha[k] - mean) * leaky_relu_grad(cache.pre[e], slope))
                .collect();
            let ds = du.iter().sum();
            (du, ds)
        })
        .collect();
    let mut du = Vec::with_capacity(nbrs.nnz());
    let mut ds = Vec::with_capacity(n);
    for (row, s) in per_row {
        du.extend(row);
        ds.push(s);
    }

    let dt: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| transpose.column(j).iter().map(|&e| du[e]).sum())
        .collect();

    let mut dz = DenseMatrix::zeros(n, d);
    if d > 0 {
        dz.data_mut()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(j, out)| {
                for &e in transpose.column(j) {
                    let al = cache.alpha[e];
                    for (o, g) in out.iter_mut().zip(d_agg.row(transpose.row_of(e))) {
                        *o += al * g;
                    }
                }
                for k in 0..d {
                    out[k] += ds[j] * a_src[k] + dt[j] * a_dst[k];
                }
            });
    }

    let ds_col = DenseMatrix::from_vec(n, 1, ds)?;
    let dt_col = DenseMatrix::from_vec(n, 1, dt)?;
    let da_src = z.t_matmul(&ds_col)?;
    let da_dst = z.t_matmul(&dt_col)?;
    let mut da_data = da_src.into_data();
    da_data.extend(da_dst.into_data());
    let da = DenseMatrix::from_vec(1, 2 * d, da_data)?;

    let dw = x.t_matmul(&dz)?;
    let dx = dz.matmul_t(w)?;
    Ok(AttentionGrads { dx, dw, da })
}
