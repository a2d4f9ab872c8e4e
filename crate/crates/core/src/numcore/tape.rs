use std::collections::BTreeMap;
use std::sync::Arc;

use super::{matmul, mismatch, nan_to_num, sigmoid, silu, NumError, ParamStore, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(String),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a[n×m] + b[1×m]`
    AddRow(Var, Var),
    /// `a[n×m] * s[n×1]`
    ScaleRows(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    Square(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Arc<Vec<usize>>),
    ScatterAddRows(Var, Arc<Vec<usize>>),
    RowNorm(Var),
    Sum(Var),
    Mean(Var),
    NanToNum(Var),
    /// Mean cross-entropy of `softmax(logits / tau)` against labels.
    SoftmaxCe {
        logits: Var,
        probs: Tensor,
        labels: Vec<usize>,
        tau: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a computation eagerly; [`Tape::backward`] walks it in reverse.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients keyed by parameter name.
pub type Gradients = BTreeMap<String, Tensor>;

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, NumError> {
        let t = store.get(name)?.clone();
        Ok(self.push(t, Op::Param(name.to_owned())))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let v = matmul(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, NumError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(mismatch(name, x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let v = self.zip(a, b, "add", |p, q| p + q)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let v = self.zip(a, b, "sub", |p, q| p - q)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let v = self.zip(a, b, "mul", |p, q| p * q)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumError> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(mismatch("add_row", x.shape(), r.shape()));
        }
        let c = x.cols();
        let mut out = x.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            *v += r.data()[k % c];
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var, NumError> {
        let (x, sc) = (self.value(a), self.value(s));
        if sc.cols() != 1 || sc.rows() != x.rows() {
            return Err(mismatch("scale_rows", x.shape(), sc.shape()));
        }
        let c = x.cols();
        let mut out = x.clone();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            *v *= sc.data()[k / c];
        }
        Ok(self.push(out, Op::ScaleRows(a, s)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::Scale(a, k))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(silu);
        self.push(v, Op::Silu(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn nan_to_num(&mut self, a: Var) -> Var {
        let v = self.value(a).nan_to_num();
        self.push(v, Op::NanToNum(a))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows());
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(mismatch("concat_cols", &[rows], self.value(p).shape()));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Row `k` of the result is row `index[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Arc<Vec<usize>>) -> Result<Var, NumError> {
        let x = self.value(a);
        let c = x.cols();
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            if i >= x.rows() {
                return Err(mismatch("gather_rows", x.shape(), &[i]));
            }
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::matrix(index.len(), c, data)?;
        Ok(self.push(out, Op::GatherRows(a, index)))
    }

    /// Sums row `k` of `a` into row `index[k]` of an `out_rows`-row result.
    pub fn scatter_add_rows(&mut self, a: Var, index: Arc<Vec<usize>>, out_rows: usize) -> Result<Var, NumError> {
        let x = self.value(a);
        if x.rows() != index.len() {
            return Err(mismatch("scatter_add_rows", x.shape(), &[index.len()]));
        }
        let c = x.cols();
        let mut out = Tensor::zeros(out_rows, c);
        for (k, &i) in index.iter().enumerate() {
            if i >= out_rows {
                return Err(mismatch("scatter_add_rows", &[out_rows], &[i]));
            }
            for j in 0..c {
                out.data_mut()[i * c + j] += x.data()[k * c + j];
            }
        }
        Ok(self.push(out, Op::ScatterAddRows(a, index)))
    }

    /// Euclidean norm of each row, as an `n×1` column.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let norms: Vec<f64> = (0..x.rows())
            .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let out = Tensor::column(&norms);
        self.push(out, Op::RowNorm(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let s = if x.is_empty() {
            0.0
        } else {
            x.data().iter().sum::<f64>() / x.len() as f64
        };
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Mean over rows of `-ln softmax(logits_i / tau)[labels_i]`; zero rows give 0.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize], tau: f64) -> Result<Var, NumError> {
        let x = self.value(logits);
        if x.rows() != labels.len() && !(labels.is_empty() && x.is_empty()) {
            return Err(mismatch("softmax_cross_entropy", x.shape(), &[labels.len()]));
        }
        let c = x.cols();
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(mismatch("softmax_cross_entropy", x.shape(), &[bad]));
        }
        let probs = softmax_rows(x, tau);
        let n = labels.len();
        let loss = if n == 0 {
            0.0
        } else {
            labels
                .iter()
                .enumerate()
                .map(|(i, &l)| -log_softmax_at(x.row(i), tau, l))
                .sum::<f64>()
                / n as f64
        };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                probs,
                labels: labels.to_vec(),
                tau,
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`; returns gradients for every
    /// parameter recorded on the tape (summed if recorded more than once).
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumError> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(NumError::NotScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![1.0]).expect("scalar"));
        let mut out = Gradients::new();
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(name) => accumulate_named(&mut out, name, g),
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let ga = matmul(&g, &bv.transpose())?;
                    let gb = matmul(&av.transpose(), &g)?;
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|v| -v));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = zip_with(&g, self.value(*b), |p, q| p * q);
                    let gb = zip_with(&g, self.value(*a), |p, q| p * q);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, r) => {
                    let c = g.cols();
                    let mut gr = vec![0.0; c];
                    for (k, v) in g.data().iter().enumerate() {
                        gr[k % c] += v;
                    }
                    let shape = self.value(*r).shape().to_vec();
                    acc(&mut grads, *r, Tensor::new(shape, gr)?);
                    acc(&mut grads, *a, g);
                }
                Op::ScaleRows(a, s) => {
                    let x = self.value(*a);
                    let sc = self.value(*s);
                    let c = x.cols();
                    let mut gs = vec![0.0; sc.len()];
                    let mut ga = g.clone();
                    for (k, v) in ga.data_mut().iter_mut().enumerate() {
                        gs[k / c] += *v * x.data()[k];
                        *v *= sc.data()[k / c];
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *s, Tensor::new(sc.shape().to_vec(), gs)?);
                }
                Op::Scale(a, k) => acc(&mut grads, *a, g.map(|v| v * k)),
                Op::Silu(a) => {
                    let d = zip_with(&g, self.value(*a), |gv, x| {
                        let s = sigmoid(x);
                        gv * s * (1.0 + x * (1.0 - s))
                    });
                    acc(&mut grads, *a, d);
                }
                Op::Square(a) => acc(&mut grads, *a, zip_with(&g, self.value(*a), |gv, x| 2.0 * gv * x)),
                Op::NanToNum(a) => {
                    let d = zip_with(&g, self.value(*a), |gv, x| if x.is_finite() { gv } else { 0.0 });
                    acc(&mut grads, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let rows = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.value(p).cols();
                        let mut data = Vec::with_capacity(rows * c);
                        for i in 0..rows {
                            data.extend_from_slice(&g.data()[i * total + offset..i * total + offset + c]);
                        }
                        acc(&mut grads, p, Tensor::matrix(rows, c, data)?);
                        offset += c;
                    }
                }
                Op::GatherRows(a, index) => {
                    let x = self.value(*a);
                    let c = x.cols();
                    let mut ga = Tensor::zeros(x.rows(), c);
                    for (k, &i) in index.iter().enumerate() {
                        for j in 0..c {
                            ga.data_mut()[i * c + j] += g.data()[k * c + j];
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ScatterAddRows(a, index) => {
                    let c = g.cols();
                    let mut data = Vec::with_capacity(index.len() * c);
                    for &i in index.iter() {
                        data.extend_from_slice(g.row(i));
                    }
                    acc(&mut grads, *a, Tensor::matrix(index.len(), c, data)?);
                }
                Op::RowNorm(a) => {
                    let x = self.value(*a);
                    let c = x.cols();
                    let mut ga = Tensor::zeros(x.rows(), c);
                    for i in 0..x.rows() {
                        let norm = node.value.data()[i];
                        if norm > 0.0 {
                            let f = g.data()[i] / norm;
                            for j in 0..c {
                                ga.data_mut()[i * c + j] = f * x.data()[i * c + j];
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, Tensor::new(x.shape().to_vec(), vec![g.item(); x.len()])?);
                }
                Op::Mean(a) => {
                    let x = self.value(*a);
                    let f = if x.is_empty() { 0.0 } else { g.item() / x.len() as f64 };
                    acc(&mut grads, *a, Tensor::new(x.shape().to_vec(), vec![f; x.len()])?);
                }
                Op::SoftmaxCe {
                    logits,
                    probs,
                    labels,
                    tau,
                } => {
                    let n = labels.len();
                    let mut gl = probs.clone();
                    if n > 0 {
                        let c = gl.cols();
                        let f = g.item() / (tau * n as f64);
                        for (i, &l) in labels.iter().enumerate() {
                            gl.data_mut()[i * c + l] -= 1.0;
                        }
                        for v in gl.data_mut() {
                            *v *= f;
                        }
                    }
                    acc(&mut grads, *logits, gl);
                }
            }
        }
        Ok(out)
    }
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn accumulate_named(out: &mut Gradients, name: &str, g: Tensor) {
    match out.get_mut(name) {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += x;
            }
        }
        None => {
            out.insert(name.to_owned(), g);
        }
    }
}

fn log_softmax_at(row: &[f64], tau: f64, k: usize) -> f64 {
    let max = row.iter().map(|v| v / tau).fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v / tau - max).exp()).sum::<f64>().ln() + max;
    row[k] / tau - lse
}

/// Row-wise `softmax(x / tau)`.
pub fn softmax_rows(x: &Tensor, tau: f64) -> Tensor {
    let c = x.cols();
    let mut out = x.clone();
    for i in 0..x.rows() {
        let row = &mut out.data_mut()[i * c..(i + 1) * c];
        let max = row.iter().map(|v| nan_to_num(*v) / tau).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (nan_to_num(*v) / tau - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}
