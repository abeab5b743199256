//! Multi-hop attention GNN with AVG/MAX/SEQ hop fusion, plus GCN and GAT
//! baselines. All three read a trainable random input embedding.

pub mod attention;
pub mod checkpoint;
pub mod train;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{HopNeighborhoods, NeighborSets};
use crate::nn::{cross_entropy, elu, elu_grad, softmax_rows, xavier_init, DenseMatrix, ParamId, ParamStore};

pub use attention::{attention_coefficients, hop_aggregate, AttentionCoefficients};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use train::{train, TrainConfig, TrainedModel};

use attention::TransposeIndex;

pub const DEFAULT_EMBED_DIM: usize = 64;
pub const DEFAULT_HIDDEN_DIM: usize = 64;
pub const DEFAULT_NUM_LAYERS: usize = 2;
pub const DEFAULT_H_MAX: usize = 3;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    Seq,
    Avg,
    Max,
}

impl fmt::Display for FusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionKind::Seq => "seq",
            FusionKind::Avg => "avg",
            FusionKind::Max => "max",
        })
    }
}

impl FromStr for FusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "seq" => Ok(FusionKind::Seq),
            "avg" => Ok(FusionKind::Avg),
            "max" => Ok(FusionKind::Max),
            other => Err(Error::invalid(format!("unknown fusion {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Multi-hop attention over expanded neighborhoods.
    Sfair,
    /// Symmetric-normalized graph convolution over one hop.
    Gcn,
    /// Single-hop attention.
    Gat,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Sfair => "sfair",
            ModelKind::Gcn => "gcn",
            ModelKind::Gat => "gat",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sfair" | "sfairgnn" => Ok(ModelKind::Sfair),
            "gcn" => Ok(ModelKind::Gcn),
            "gat" => Ok(ModelKind::Gat),
            other => Err(Error::invalid(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Identity,
}

impl Activation {
    pub fn apply(self, m: &DenseMatrix) -> DenseMatrix {
        match self {
            Activation::Elu => m.map(elu),
            Activation::Identity => m.clone(),
        }
    }

    /// `grad ⊙ act'(pre)`.
    fn backprop(self, pre: &DenseMatrix, grad: &DenseMatrix) -> DenseMatrix {
        match self {
            Activation::Identity => grad.clone(),
            Activation::Elu => {
                let mut out = grad.clone();
                out.data_mut()
                    .par_iter_mut()
                    .zip(pre.data().par_iter())
                    .for_each(|(g, &x)| *g *= elu_grad(x));
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub num_nodes: usize,
    pub num_classes: usize,
    pub embed_dim: usize,
    /// Output width of each layer; its length is the layer count.
    pub hidden_dims: Vec<usize>,
    /// Hops aggregated per layer. Baselines always use 1.
    pub h_max: usize,
    pub fusion: FusionKind,
    pub leaky_slope: f64,
    /// Drop probability on every layer input during training.
    pub dropout: f64,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, num_nodes: usize, num_classes: usize) -> Self {
        ModelConfig {
            kind,
            num_nodes,
            num_classes,
            embed_dim: DEFAULT_EMBED_DIM,
            hidden_dims: vec![DEFAULT_HIDDEN_DIM; DEFAULT_NUM_LAYERS],
            h_max: if kind == ModelKind::Sfair { DEFAULT_H_MAX } else { 1 },
            fusion: FusionKind::Max,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            dropout: 0.0,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_dims.len()
    }

    /// Hops actually consumed by the forward pass.
    pub fn hops_used(&self) -> usize {
        match self.kind {
            ModelKind::Sfair => self.h_max,
            ModelKind::Gcn | ModelKind::Gat => 1,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(self.embed_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 || self.num_classes == 0 || self.embed_dim == 0 {
            return Err(Error::invalid("model needs nodes, classes and a positive embedding width"));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::invalid(format!("bad layer widths {:?}", self.hidden_dims)));
        }
        if self.hops_used() == 0 {
            return Err(Error::invalid("h_max must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            Activation::Identity
        } else {
            Activation::Elu
        }
    }

    fn layer_in_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed_dim
        } else {
            self.hidden_dims[layer - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum LayerParams {
    /// One `(W, a)` pair per hop.
    Attention(Vec<(ParamId, ParamId)>),
    Gcn(ParamId),
}

/// A model: its configuration, the seed it was initialised from, and its
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    seed: u64,
    params: ParamStore,
    input: ParamId,
    layers: Vec<LayerParams>,
    head_w: ParamId,
    head_b: ParamId,
}

/// splitmix64 step, used to give each parameter its own init stream.
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Model {
    /// Xavier-initialised model. Bias starts at zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut stream = 0u64;
        let mut init = |params: &mut ParamStore, name: String, rows: usize, cols: usize| -> Result<ParamId> {
            stream += 1;
            Ok(params.add(name, xavier_init(rows, cols, derive_seed(seed, stream))?))
        };
        let input = init(&mut params, "input".into(), config.num_nodes, config.embed_dim)?;
        let mut layers = Vec::with_capacity(config.num_layers());
        for k in 0..config.num_layers() {
            let (din, dout) = (config.layer_in_dim(k), config.hidden_dims[k]);
            match config.kind {
                ModelKind::Gcn => {
                    layers.push(LayerParams::Gcn(init(&mut params, format!("layer{k}.weight"), din, dout)?));
                }
                ModelKind::Sfair | ModelKind::Gat => {
                    let mut hops = Vec::with_capacity(config.hops_used());
                    for h in 1..=config.hops_used() {
                        let rows = if config.fusion == FusionKind::Seq && h > 1 { dout } else { din };
                        let w = init(&mut params, format!("layer{k}.hop{h}.weight"), rows, dout)?;
                        let a = init(&mut params, format!("layer{k}.hop{h}.attention"), 1, 2 * dout)?;
                        hops.push((w, a));
                    }
                    layers.push(LayerParams::Attention(hops));
                }
            }
        }
        let head_w = init(&mut params, "head.weight".into(), config.output_dim(), config.num_classes)?;
        let head_b = params.add("head.bias", DenseMatrix::zeros(1, config.num_classes));
        Ok(Model {
            config,
            seed,
            params,
            input,
            layers,
            head_w,
            head_b,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Replaces every parameter value; shapes and names must match.
    pub fn set_params(&mut self, params: ParamStore) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters given, model has {}",
                params.len(),
                self.params.len()
            )));
        }
        for (mine, theirs) in self.params.iter().zip(params.iter()) {
            if mine.name != theirs.name || mine.value.shape() != theirs.value.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    theirs.name,
                    theirs.value.shape(),
                    mine.name,
                    mine.value.shape()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    /// Same model with input rows relabeled so node `i` becomes `perm[i]`.
    pub fn permuted_nodes(&self, perm: &[usize]) -> Result<Self> {
        let n = self.config.num_nodes;
        if perm.len() != n {
            return Err(Error::ShapeMismatch(format!("permutation of {} for {n} nodes", perm.len())));
        }
        let mut out = self.clone();
        let x = self.params.value(self.input);
        let mut y = DenseMatrix::zeros(n, x.cols());
        for (i, &p) in perm.iter().enumerate() {
            y.row_mut(p).copy_from_slice(x.row(i));
        }
        out.params.get_mut(self.input).value = y;
        Ok(out)
    }

    pub fn check_neighborhoods(&self, hops: &HopNeighborhoods) -> Result<()> {
        if hops.num_nodes() != self.config.num_nodes {
            return Err(Error::ShapeMismatch(format!(
                "neighborhoods cover {} nodes, model has {}",
                hops.num_nodes(),
                self.config.num_nodes
            )));
        }
        if hops.h_max() < self.config.hops_used() {
            return Err(Error::ShapeMismatch(format!(
                "model needs {} hops, only {} available",
                self.config.hops_used(),
                hops.h_max()
            )));
        }
        Ok(())
    }

    /// Class logits, one row per node.
    pub fn forward(&self, hops: &HopNeighborhoods) -> Result<DenseMatrix> {
        Ok(self.forward_with(&self.params, hops, None)?.logits)
    }

    /// Softmax class probabilities and their argmax.
    pub fn predict(&self, hops: &HopNeighborhoods) -> Result<Prediction> {
        let probs = softmax_rows(&self.forward(hops)?);
        let labels = (0..probs.rows())
            .map(|i| {
                let row = probs.row(i);
                (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
            })
            .collect();
        Ok(Prediction { probs, labels })
    }

    /// Masked cross-entropy evaluated with `params` in place of the model's own.
    pub fn loss_with(
        &self,
        params: &ParamStore,
        hops: &HopNeighborhoods,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<f64> {
        let cache = self.forward_with(params, hops, None)?;
        Ok(cross_entropy(&cache.logits, labels, mask)?.0)
    }

    /// Loss, with gradients written into the parameter store (overwriting).
    pub fn loss_and_gradients(
        &mut self,
        hops: &HopNeighborhoods,
        labels: &[usize],
        mask: &[bool],
        dropout_seed: Option<u64>,
    ) -> Result<f64> {
        let cache = self.forward_with(&self.params, hops, dropout_seed)?;
        let (loss, d_logits) = cross_entropy(&cache.logits, labels, mask)?;
        self.params.zero_grads();
        let grads = self.backward(hops, &cache, &d_logits)?;
        for (id, g) in grads {
            self.params.accumulate(id, &g)?;
        }
        Ok(loss)
    }

    fn forward_with(
        &self,
        params: &ParamStore,
        hops: &HopNeighborhoods,
        dropout_seed: Option<u64>,
    ) -> Result<ForwardCache> {
        self.check_neighborhoods(hops)?;
        let cfg = &self.config;
        let mut x = params.value(self.input).clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let act = cfg.activation(k);
            let keep = match dropout_seed {
                Some(seed) if cfg.dropout > 0.0 => {
                    let scale = dropout_scale(x.rows() * x.cols(), cfg.dropout, derive_seed(seed, k as u64));
                    x.data_mut().iter_mut().zip(&scale).for_each(|(v, s)| *v *= s);
                    Some(scale)
                }
                _ => None,
            };
            let (state, out) = match layer {
                LayerParams::Gcn(w) => {
                    let nbrs = hops.hop(1);
                    let coef = gcn_coefficients(nbrs);
                    let z = x.matmul(params.value(*w))?;
                    let agg = attention::weighted_sum(&z, &coef, nbrs);
                    let out = act.apply(&agg);
                    (LayerState::Gcn { agg }, out)
                }
                LayerParams::Attention(pairs) => {
                    let slope = cfg.leaky_slope;
                    if cfg.fusion == FusionKind::Seq && pairs.len() > 1 {
                        let mut caches = Vec::with_capacity(pairs.len());
                        let mut outputs: Vec<DenseMatrix> = Vec::with_capacity(pairs.len());
                        for (t, &(w, a)) in pairs.iter().enumerate() {
                            let input = if t == 0 { &x } else { &outputs[t - 1] };
                            let c = attention::forward(input, params.value(w), params.value(a), hops.hop(t + 1), slope)?;
                            outputs.push(act.apply(&c.agg));
                            caches.push(c);
                        }
                        let out = outputs.last().cloned().expect("at least one hop");
                        (LayerState::Sequential { caches, outputs }, out)
                    } else {
                        let mut caches = Vec::with_capacity(pairs.len());
                        let mut outputs = Vec::with_capacity(pairs.len());
                        for (t, &(w, a)) in pairs.iter().enumerate() {
                            let c = attention::forward(&x, params.value(w), params.value(a), hops.hop(t + 1), slope)?;
                            outputs.push(act.apply(&c.agg));
                            caches.push(c);
                        }
                        let (out, argmax) = fuse_parallel(&outputs, cfg.fusion)?;
                        (LayerState::Parallel { caches, argmax }, out)
                    }
                }
            };
            layers.push(LayerCache {
                input: x,
                keep,
                state,
            });
            x = out;
        }
        let mut logits = x.matmul(params.value(self.head_w))?;
        let bias = params.value(self.head_b).row(0).to_vec();
        for i in 0..logits.rows() {
            logits.row_mut(i).iter_mut().zip(&bias).for_each(|(l, b)| *l += b);
        }
        Ok(ForwardCache {
            layers,
            embedding: x,
            logits,
        })
    }

    fn backward(
        &self,
        hops: &HopNeighborhoods,
        cache: &ForwardCache,
        d_logits: &DenseMatrix,
    ) -> Result<Vec<(ParamId, DenseMatrix)>> {
        let cfg = &self.config;
        let params = &self.params;
        let mut grads = Vec::new();
        grads.push((self.head_w, cache.embedding.t_matmul(d_logits)?));
        let db = d_logits.column_sums();
        grads.push((self.head_b, DenseMatrix::from_vec(1, db.len(), db)?));
        let mut dx = d_logits.matmul_t(params.value(self.head_w))?;

        let transposes: Vec<TransposeIndex> = hops.hops()[..cfg.hops_used()]
            .iter()
            .map(TransposeIndex::new)
            .collect();

        for (k, layer) in self.layers.iter().enumerate().rev() {
            let act = cfg.activation(k);
            let lc = &cache.layers[k];
            let mut d_in = match (layer, &lc.state) {
                (LayerParams::Gcn(w), LayerState::Gcn { agg }) => {
                    let nbrs = hops.hop(1);
                    let d_agg = act.backprop(agg, &dx);
                    // The normalized adjacency is symmetric, so its transpose
                    // product reuses the forward gather.
                    let dz = attention::weighted_sum(&d_agg, &gcn_coefficients(nbrs), nbrs);
                    grads.push((*w, lc.input.t_matmul(&dz)?));
                    dz.matmul_t(params.value(*w))?
                }
                (LayerParams::Attention(pairs), LayerState::Parallel { caches, argmax }) => {
                    let h = pairs.len();
                    let mut d_in = DenseMatrix::zeros(lc.input.rows(), lc.input.cols());
                    for (t, &(w, a)) in pairs.iter().enumerate() {
                        let d_out = match argmax {
                            Some(winner) => {
                                let mut g = dx.clone();
                                g.data_mut()
                                    .par_iter_mut()
                                    .zip(winner.par_iter())
                                    .for_each(|(v, &win)| {
                                        if win as usize != t {
                                            *v = 0.0;
                                        }
                                    });
                                g
                            }
                            None => {
                                let mut g = dx.clone();
                                g.scale(1.0 / h as f64);
                                g
                            }
                        };
                        let c = &caches[t];
                        let d_agg = act.backprop(&c.agg, &d_out);
                        let g = attention::backward(
                            &lc.input,
                            params.value(w),
                            params.value(a),
                            hops.hop(t + 1),
                            &transposes[t],
                            cfg.leaky_slope,
                            c,
                            &d_agg,
                        )?;
                        grads.push((w, g.dw));
                        grads.push((a, g.da));
                        d_in.add_assign(&g.dx)?;
                    }
                    d_in
                }
                (LayerParams::Attention(pairs), LayerState::Sequential { caches, outputs }) => {
                    let mut d_out = dx.clone();
                    for (t, &(w, a)) in pairs.iter().enumerate().rev() {
                        let input = if t == 0 { &lc.input } else { &outputs[t - 1] };
                        let c = &caches[t];
                        let d_agg = act.backprop(&c.agg, &d_out);
                        let g = attention::backward(
                            input,
                            params.value(w),
                            params.value(a),
                            hops.hop(t + 1),
                            &transposes[t],
                            cfg.leaky_slope,
                            c,
                            &d_agg,
                        )?;
                        grads.push((w, g.dw));
                        grads.push((a, g.da));
                        d_out = g.dx;
                    }
                    d_out
                }
                _ => unreachable!("layer cache does not match layer parameters"),
            };
            if let Some(scale) = &lc.keep {
                d_in.data_mut().iter_mut().zip(scale).for_each(|(g, s)| *g *= s);
            }
            dx = d_in;
        }
        grads.push((self.input, dx));
        Ok(grads)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: DenseMatrix,
    pub labels: Vec<usize>,
}

#[derive(Debug)]
enum LayerState {
    Gcn {
        agg: DenseMatrix,
    },
    Parallel {
        caches: Vec<attention::AttentionCache>,
        /// Winning hop per element for MAX fusion.
        argmax: Option<Vec<u8>>,
    },
    Sequential {
        caches: Vec<attention::AttentionCache>,
        outputs: Vec<DenseMatrix>,
    },
}

#[derive(Debug)]
struct LayerCache {
    /// Layer input after dropout.
    input: DenseMatrix,
    keep: Option<Vec<f64>>,
    state: LayerState,
}

#[derive(Debug)]
struct ForwardCache {
    layers: Vec<LayerCache>,
    embedding: DenseMatrix,
    logits: DenseMatrix,
}

/// Inverted-dropout multipliers: 0 with probability `p`, else `1 / (1 - p)`.
fn dropout_scale(len: usize, p: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

/// `1 / √(|N_i| |N_j|)` per entry, where the sets already contain the node.
pub fn gcn_coefficients(nbrs: &NeighborSets) -> Vec<f64> {
    let sizes = nbrs.sizes();
    let mut coef = Vec::with_capacity(nbrs.nnz());
    for i in 0..nbrs.num_nodes() {
        for &j in nbrs.row(i) {
            coef.push(1.0 / ((sizes[i] * sizes[j]) as f64).sqrt());
        }
    }
    coef
}

fn fuse_parallel(hops: &[DenseMatrix], kind: FusionKind) -> Result<(DenseMatrix, Option<Vec<u8>>)> {
    let first = hops.first().ok_or_else(|| Error::invalid("fusion of zero hop embeddings"))?;
    if let Some(bad) = hops.iter().find(|m| m.shape() != first.shape()) {
        return Err(Error::ShapeMismatch(format!(
            "hop embeddings {:?} and {:?}",
            first.shape(),
            bad.shape()
        )));
    }
    if hops.len() > u8::MAX as usize {
        return Err(Error::invalid(format!("{} hops exceeds the fusion limit", hops.len())));
    }
    match kind {
        FusionKind::Max => {
            let mut out = first.clone();
            let mut winner = vec![0u8; out.data().len()];
            for (t, m) in hops.iter().enumerate().skip(1) {
                for ((o, w), &v) in out.data_mut().iter_mut().zip(&mut winner).zip(m.data()) {
                    if v > *o {
                        *o = v;
                        *w = t as u8;
                    }
                }
            }
            Ok((out, Some(winner)))
        }
        // SEQ with a single hop is the same as averaging that hop.
        FusionKind::Avg | FusionKind::Seq => {
            let mut out = first.clone();
            for m in &hops[1..] {
                out.add_assign(m)?;
            }
            out.scale(1.0 / hops.len() as f64);
            Ok((out, None))
        }
    }
}

/// Combines per-hop embeddings of one layer. MAX takes the element-wise
/// maximum and AVG the mean. SEQ chains hops inside the layer, so the
/// embedding of the last hop already is the layer output.
pub fn fuse(hop_embeddings: &[DenseMatrix], kind: FusionKind) -> Result<DenseMatrix> {
    match kind {
        FusionKind::Seq => {
            let last = hop_embeddings
                .last()
                .ok_or_else(|| Error::invalid("fusion of zero hop embeddings"))?;
            Ok(last.clone())
        }
        _ => Ok(fuse_parallel(hop_embeddings, kind)?.0),
    }
}
