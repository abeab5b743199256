//! Dense 64-bit numeric kernel: matrices, parameters, activations, loss,
//! Adam and a finite-difference gradient checker.
//!
//! Parallel kernels split work by output row or by fixed-size row chunks
//! reduced in chunk order, so results are bitwise identical for any thread
//! count.

use rand::distr::{Distribution, Uniform};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per partial sum in reductions over the row dimension.
const REDUCE_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.par_iter().map(|&x| f(x)).collect(),
        }
    }

    fn check_same_shape(&self, other: &DenseMatrix, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{op}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) -> Result<()> {
        self.check_same_shape(other, "add")?;
        self.data
            .par_iter_mut()
            .zip(other.data.par_iter())
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.par_iter_mut().for_each(|x| *x *= factor);
    }

    /// `self · other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "matmul {:?} x {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        if other.cols == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(other.cols)
            .enumerate()
            .for_each(|(i, out_row)| {
                for (k, &a) in self.row(i).iter().enumerate() {
                    if a != 0.0 {
                        for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                            *o += a * b;
                        }
                    }
                }
            });
        Ok(out)
    }

    /// `selfᵀ · other`, reduced over rows in fixed chunks.
    pub fn t_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "t_matmul {:?}ᵀ x {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let (p, q) = (self.cols, other.cols);
        let partials: Vec<Vec<f64>> = (0..self.rows.div_ceil(REDUCE_CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let mut acc = vec![0.0; p * q];
                let end = ((chunk + 1) * REDUCE_CHUNK).min(self.rows);
                for r in chunk * REDUCE_CHUNK..end {
                    let b = other.row(r);
                    for (i, &a) in self.row(r).iter().enumerate() {
                        if a != 0.0 {
                            for (o, &bv) in acc[i * q..(i + 1) * q].iter_mut().zip(b) {
                                *o += a * bv;
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut data = vec![0.0; p * q];
        for part in partials {
            for (d, v) in data.iter_mut().zip(part) {
                *d += v;
            }
        }
        Ok(DenseMatrix { rows: p, cols: q, data })
    }

    /// `self · otherᵀ`.
    pub fn matmul_t(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "matmul_t {:?} x {:?}ᵀ",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.rows);
        if other.rows == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(other.rows)
            .enumerate()
            .for_each(|(i, out_row)| {
                let a = self.row(i);
                for (j, o) in out_row.iter_mut().enumerate() {
                    *o = dot(a, other.row(j));
                }
            });
        Ok(out)
    }

    /// Column sums, reduced over rows in fixed chunks.
    pub fn column_sums(&self) -> Vec<f64> {
        let partials: Vec<Vec<f64>> = (0..self.rows.div_ceil(REDUCE_CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let mut acc = vec![0.0; self.cols];
                let end = ((chunk + 1) * REDUCE_CHUNK).min(self.rows);
                for r in chunk * REDUCE_CHUNK..end {
                    for (a, v) in acc.iter_mut().zip(self.row(r)) {
                        *a += v;
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; self.cols];
        for part in partials {
            for (o, v) in out.iter_mut().zip(part) {
                *o += v;
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A trainable tensor with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: DenseMatrix) -> Self {
        let grad = DenseMatrix::zeros(value.rows(), value.cols());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Handle into a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered collection of named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: DenseMatrix) -> ParamId {
        self.params.push(Parameter::new(name, value));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &DenseMatrix {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    /// Adds `delta` into the gradient of `id`.
    pub fn accumulate(&mut self, id: ParamId, delta: &DenseMatrix) -> Result<()> {
        self.params[id.0].grad.add_assign(delta)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }
}

/// Glorot-uniform matrix on `[-√(6/(rows+cols)), +√(6/(rows+cols))]`.
pub fn xavier_init(rows: usize, cols: usize, seed: u64) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!("xavier_init of a {rows}x{cols} matrix")));
    }
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound)
        .map_err(|e| Error::invalid(format!("xavier bound {bound}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| dist.sample(&mut rng)).collect();
    DenseMatrix::from_vec(rows, cols, data)
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    if m.cols() == 0 {
        return out;
    }
    out.data_mut()
        .par_chunks_mut(m.cols())
        .for_each(softmax_in_place);
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

/// ELU with α = 1.
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Derivative of [`elu`] at pre-activation `x`.
pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Mean cross-entropy over masked rows, with its gradient w.r.t. `logits`.
pub fn cross_entropy(logits: &DenseMatrix, labels: &[usize], mask: &[bool]) -> Result<(f64, DenseMatrix)> {
    let (n, c) = logits.shape();
    if labels.len() != n || mask.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} logit rows, {} labels, {} mask entries",
            labels.len(),
            mask.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::invalid(format!("label {bad} with {c} classes")));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::invalid("cross-entropy over an empty mask"));
    }
    let probs = softmax_rows(logits);
    let inv = 1.0 / count as f64;
    let mut grad = DenseMatrix::zeros(n, c);
    let mut loss = 0.0;
    for i in (0..n).filter(|&i| mask[i]) {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        loss += lse - row[labels[i]];
        let g = grad.row_mut(i);
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = probs[(i, k)] * inv;
        }
        g[labels[i]] -= inv;
    }
    Ok((loss * inv, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient before the moment updates.
    pub weight_decay: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.value.data().len()]).collect();
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }
}

/// One bias-corrected Adam update of every parameter from its gradient.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, lr: f64) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::ShapeMismatch(format!(
            "optimizer tracks {} parameters, store has {}",
            state.m.len(),
            store.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2, eps, wd) = (state.beta1, state.beta2, state.eps, state.weight_decay);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for ((param, m), v) in store.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        if m.len() != param.value.data().len() {
            return Err(Error::ShapeMismatch(format!("moment shape for {}", param.name)));
        }
        let grads = param.grad.data();
        param
            .value
            .data_mut()
            .par_iter_mut()
            .zip(grads.par_iter())
            .zip(m.par_iter_mut().zip(v.par_iter_mut()))
            .for_each(|((w, &g), (mi, vi))| {
                let g = g + wd * *w;
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}

/// Gradients smaller than this are compared in absolute rather than
/// relative terms by [`finite_difference_check`].
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coordinates_checked: usize,
    /// `(parameter, flat index, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares the gradients already stored in `store` against central
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε` on up to `probes` random coordinates
/// of every parameter. Relative error is `|a − n| / max(|a|, |n|, floor)`
/// with floor [`GRAD_CHECK_FLOOR`].
pub fn finite_difference_check<F>(
    store: &mut ParamStore,
    mut loss: F,
    probes: usize,
    eps: f64,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coordinates_checked: 0,
        worst: None,
    };
    for p in 0..store.len() {
        let id = ParamId(p);
        let size = store.get(id).value.data().len();
        let picks = sample(&mut rng, size, probes.min(size)).into_vec();
        for idx in picks {
            let analytic = store.get(id).grad.data()[idx];
            let original = store.get(id).value.data()[idx];
            store.get_mut(id).value.data_mut()[idx] = original + eps;
            let plus = loss(store);
            store.get_mut(id).value.data_mut()[idx] = original - eps;
            let minus = loss(store);
            store.get_mut(id).value.data_mut()[idx] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            let rel = (analytic - numeric).abs() / denom;
            report.coordinates_checked += 1;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                report.worst = Some((store.get(id).name.clone(), idx, analytic, numeric));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![1.0, 0.5, -1.0], vec![2.0, 0.0, 1.0]]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.row(0), &[5.0, 0.5, 1.0]);
        assert_eq!(ab.row(2), &[17.0, 2.5, 1.0]);
        // aᵀ·a and a·aᵀ against hand values.
        let ata = a.t_matmul(&a).unwrap();
        assert_eq!(ata.data(), &[35.0, 44.0, 44.0, 56.0]);
        let aat = a.matmul_t(&a).unwrap();
        assert_eq!(aat.row(1), &[11.0, 25.0, 39.0]);
        assert!(a.matmul(&a).is_err());
        assert_eq!(a.column_sums(), vec![9.0, 12.0]);
    }

    #[test]
    fn xavier_support_mean_and_determinism() {
        let m = xavier_init(100, 100, 11).unwrap();
        let bound = (6.0f64 / 200.0).sqrt();
        assert!(m.data().iter().all(|x| x.abs() <= bound));
        // σ = bound/√3 ≈ 0.1; the mean of 10k draws has σ ≈ 0.001.
        let mean = m.data().iter().sum::<f64>() / 10_000.0;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert_eq!(m, xavier_init(100, 100, 11).unwrap());
        assert_ne!(m, xavier_init(100, 100, 12).unwrap());
        assert!(xavier_init(0, 3, 1).is_err());
    }

    #[test]
    fn softmax_examples() {
        let m = DenseMatrix::from_rows(&[
            vec![0.0, 0.0],
            vec![1000.0, 0.0],
            vec![2f64.ln(), 1f64.ln()],
        ])
        .unwrap();
        let s = softmax_rows(&m);
        assert_eq!(s.row(0), &[0.5, 0.5]);
        assert_eq!(s.row(1), &[1.0, 0.0]);
        assert!((s[(2, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s[(2, 1)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn activations() {
        assert_eq!(leaky_relu(-1.0, 0.2), -0.2);
        assert_eq!(leaky_relu(3.0, 0.2), 3.0);
        assert_eq!(leaky_relu_grad(-1.0, 0.2), 0.2);
        assert_eq!(leaky_relu_grad(3.0, 0.2), 1.0);
        assert_eq!(elu(2.0), 2.0);
        assert!((elu(-1.0) - (-1.0f64).exp_m1()).abs() < 1e-16);
        assert!((elu_grad(-1.0) - (-1.0f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn cross_entropy_values() {
        let sure = DenseMatrix::from_rows(&[vec![1000.0, 0.0]]).unwrap();
        let (loss, _) = cross_entropy(&sure, &[0], &[true]).unwrap();
        assert_eq!(loss, 0.0);

        let uniform = DenseMatrix::zeros(2, 4);
        let (loss, grad) = cross_entropy(&uniform, &[1, 3], &[true, true]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        assert!((grad[(0, 1)] - (0.25 - 1.0) / 2.0).abs() < 1e-15);

        let (_, grad) = cross_entropy(&uniform, &[1, 3], &[true, false]).unwrap();
        assert!(grad.row(1).iter().all(|&g| g == 0.0));

        assert!(cross_entropy(&uniform, &[1, 3], &[false, false]).is_err());
        assert!(cross_entropy(&uniform, &[1, 4], &[true, true]).is_err());
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = xavier_init(5, 3, 3).unwrap();
        let labels = [0, 2, 1, 1, 0];
        let mask = [true, true, false, true, true];
        let mut store = ParamStore::new();
        let id = store.add("logits", logits);
        let (_, grad) = cross_entropy(store.value(id), &labels, &mask).unwrap();
        store.get_mut(id).grad = grad;
        let report = finite_difference_check(
            &mut store,
            |s| cross_entropy(s.value(id), &labels, &mask).unwrap().0,
            15,
            1e-5,
            0,
        );
        assert_eq!(report.coordinates_checked, 15);
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.add("w", DenseMatrix::zeros(1, 1));
        store.get_mut(id).grad[(0, 0)] = 1.0;
        let mut state = AdamState::new(&store);
        adam_step(&mut store, &mut state, 0.005).unwrap();
        assert!((store.value(id)[(0, 0)] + 0.005).abs() < 1e-10);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut store = ParamStore::new();
        let id = store.add("w", xavier_init(3, 3, 1).unwrap());
        let before = store.value(id).clone();
        let mut state = AdamState::new(&store);
        for _ in 0..10 {
            adam_step(&mut store, &mut state, 0.005).unwrap();
        }
        for (a, b) in before.data().iter().zip(store.value(id).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut store = ParamStore::new();
            let id = store.add("w", xavier_init(4, 2, 5).unwrap());
            let mut state = AdamState::new(&store);
            for step in 0..20 {
                let g = xavier_init(4, 2, 100 + step).unwrap();
                store.get_mut(id).grad = g;
                adam_step(&mut store, &mut state, 0.005).unwrap();
            }
            store.value(id).clone()
        };
        assert_eq!(run().data(), run().data());
    }

    #[test]
    fn grad_check_quadratic_and_negative_control() {
        // f(w) = Σ c_k w_k², ∇f = 2 c ⊙ w.
        let coeffs = [1.0, 2.5, -0.5, 3.0];
        let mut store = ParamStore::new();
        let id = store.add("w", DenseMatrix::from_vec(1, 4, vec![0.3, -1.2, 2.0, 0.7]).unwrap());
        let f = |s: &ParamStore| -> f64 {
            s.value(id).data().iter().zip(coeffs).map(|(w, c)| c * w * w).sum()
        };
        let analytic: Vec<f64> = store.value(id).data().iter().zip(coeffs).map(|(w, c)| 2.0 * c * w).collect();
        store.get_mut(id).grad = DenseMatrix::from_vec(1, 4, analytic.clone()).unwrap();
        let ok = finite_difference_check(&mut store, f, 4, 1e-5, 1);
        assert!(ok.max_rel_error < 1e-9, "{ok:?}");

        let mut corrupted = analytic;
        corrupted[1] *= 1.1;
        store.get_mut(id).grad = DenseMatrix::from_vec(1, 4, corrupted).unwrap();
        let bad = finite_difference_check(&mut store, f, 4, 1e-5, 1);
        assert!(bad.max_rel_error > 1e-2, "{bad:?}");
        assert_eq!(bad.worst.as_ref().unwrap().1, 1);
    }
}
