use std::sync::Arc;

use super::{log_sigmoid, sigmoid, Tensor};
use crate::{KmfError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScaleConst(Var, f64),
    AddConst(Var),
    ScaleVar(Var, Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Log(Var),
    Abs(Var),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    Dot(Var, Var),
    RowDot(Var, Var),
    GatherRows(Var, Vec<usize>),
    NeighborMean(Var, Arc<Vec<Vec<usize>>>),
    SoftmaxRows(Var, f64),
    LogSoftmaxRows(Var, f64),
    Euclidean(Var, Var),
    Cosine(Var, Var),
    Stack(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run reverse-mode tape. Build a fresh tape for every step, record
/// the forward computation through its methods, then call [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every tape value that requires one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` did not influence the loss.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn shape_err(op: &str, a: &Tensor, b: &Tensor) -> KmfError {
    KmfError::Shape(format!("{op}: {:?} vs {:?}", a.shape(), b.shape()))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Fixed input; no gradient is computed for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMulNt(a, b), rg))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).scaled(k);
        let rg = self.rg(a);
        self.push(out, Op::ScaleConst(a, k), rg)
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|v| v + k);
        let rg = self.rg(a);
        self.push(out, Op::AddConst(a), rg)
    }

    /// `s · a` where `s` is a one-element tensor.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let ts = self.value(s);
        if ts.len() != 1 {
            return Err(KmfError::Shape(format!(
                "scale_by needs a scalar, got {:?}",
                ts.shape()
            )));
        }
        let k = ts.item();
        let out = self.value(a).scaled(k);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(out, Op::ScaleVar(a, s), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    /// `ln σ(a)`, computed stably.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(log_sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::LogSigmoid(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(out, Op::Log(a), rg)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::abs);
        let rg = self.rg(a);
        self.push(out, Op::Abs(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(KmfError::Shape("mean of an empty tensor".into()));
        }
        let out = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Mean(a), rg))
    }

    /// Inner product of two tensors viewed as flat vectors.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() {
            return Err(shape_err("dot", ta, tb));
        }
        let out = Tensor::scalar(super::dot(ta.data(), tb.data()));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Dot(a, b), rg))
    }

    /// Per-row inner products of two equally shaped matrices, as a vector.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("row_dot", ta, tb));
        }
        let out = Tensor::vector(
            (0..ta.rows())
                .map(|r| super::dot(ta.row(r), tb.row(r)))
                .collect(),
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::RowDot(a, b), rg))
    }

    /// Matrix of the selected rows, in the given order (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (n, c) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            if r >= n {
                return Err(KmfError::Shape(format!("gather row {r} of {n}")));
            }
            data.extend_from_slice(t.row(r));
        }
        let out = Tensor::matrix(rows.len(), c, data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::GatherRows(a, rows.to_vec()), rg))
    }

    /// Row `v` of the output is the mean of rows `neighbors[v]` of `a`, or the
    /// zero vector when `neighbors[v]` is empty.
    pub fn neighbor_mean(&mut self, a: Var, neighbors: Arc<Vec<Vec<usize>>>) -> Result<Var> {
        let t = self.value(a);
        let (n, c) = (t.rows(), t.cols());
        if neighbors.len() != n {
            return Err(KmfError::Shape(format!(
                "{} neighbor lists for {n} rows",
                neighbors.len()
            )));
        }
        let mut data = vec![0.0; n * c];
        for (v, list) in neighbors.iter().enumerate() {
            if list.is_empty() {
                continue;
            }
            let inv = 1.0 / list.len() as f64;
            let out = &mut data[v * c..(v + 1) * c];
            for &u in list {
                if u >= n {
                    return Err(KmfError::Shape(format!("neighbor {u} of {n}")));
                }
                for (o, &x) in out.iter_mut().zip(t.row(u)) {
                    *o += x * inv;
                }
            }
        }
        let out = Tensor::matrix(n, c, data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::NeighborMean(a, neighbors), rg))
    }

    pub fn softmax_rows(&mut self, a: Var, temperature: f64) -> Var {
        let t = self.value(a);
        let mut data = Vec::with_capacity(t.len());
        for r in 0..t.rows() {
            data.extend(super::softmax_with_temperature(t.row(r), temperature));
        }
        let out = Tensor::new(t.shape().to_vec(), data).expect("same length");
        let rg = self.rg(a);
        self.push(out, Op::SoftmaxRows(a, temperature), rg)
    }

    pub fn log_softmax_rows(&mut self, a: Var, temperature: f64) -> Var {
        let t = self.value(a);
        let mut data = Vec::with_capacity(t.len());
        for r in 0..t.rows() {
            let row = t.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row
                .iter()
                .map(|v| ((v - max) / temperature).exp())
                .sum::<f64>()
                .ln();
            data.extend(row.iter().map(|v| (v - max) / temperature - lse));
        }
        let out = Tensor::new(t.shape().to_vec(), data).expect("same length");
        let rg = self.rg(a);
        self.push(out, Op::LogSoftmaxRows(a, temperature), rg)
    }

    pub fn euclidean(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() {
            return Err(shape_err("euclidean", ta, tb));
        }
        let out = Tensor::scalar(super::euclidean_distance(ta.data(), tb.data()));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Euclidean(a, b), rg))
    }

    /// Cosine similarity; errors on a zero-norm input.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() {
            return Err(shape_err("cosine", ta, tb));
        }
        let out = Tensor::scalar(super::cosine_similarity(ta.data(), tb.data())?);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Cosine(a, b), rg))
    }

    /// Concatenate one-element tensors into a vector.
    pub fn stack(&mut self, scalars: &[Var]) -> Result<Var> {
        let mut data = Vec::with_capacity(scalars.len());
        for &s in scalars {
            let t = self.value(s);
            if t.len() != 1 {
                return Err(KmfError::Shape(format!(
                    "stack expects scalars, got {:?}",
                    t.shape()
                )));
            }
            data.push(t.item());
        }
        let rg = scalars.iter().any(|&s| self.rg(s));
        Ok(self.push(Tensor::vector(data), Op::Stack(scalars.to_vec()), rg))
    }

    /// Reverse pass from a scalar `loss`. Gradients accumulate in reverse
    /// recording order, so results are deterministic.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(KmfError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::new(lt.shape().to_vec(), vec![1.0])?);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads)?;
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.matmul_nt(tb)?);
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, ta.matmul_tn(g)?);
                }
            }
            Op::MatMulNt(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.matmul(tb)?);
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, g.matmul_tn(ta)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, reshape_like(g.clone(), self.value(*a))?);
                self.accumulate(grads, *b, reshape_like(g.clone(), self.value(*b))?);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, reshape_like(g.clone(), self.value(*a))?);
                self.accumulate(grads, *b, reshape_like(g.scaled(-1.0), self.value(*b))?);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let d = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, Tensor::new(ta.shape().to_vec(), d)?);
                }
                if self.rg(*b) {
                    let d = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, Tensor::new(tb.shape().to_vec(), d)?);
                }
            }
            Op::ScaleConst(a, k) => self.accumulate(grads, *a, g.scaled(*k)),
            Op::AddConst(a) => self.accumulate(grads, *a, g.clone()),
            Op::ScaleVar(a, s) => {
                let ta = self.value(*a);
                let ts = self.value(*s);
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.scaled(ts.item()));
                }
                if self.rg(*s) {
                    let ds = super::dot(g.data(), ta.data());
                    self.accumulate(grads, *s, Tensor::new(ts.shape().to_vec(), vec![ds])?);
                }
            }
            Op::Sigmoid(a) => {
                let d = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(g, s)| g * s * (1.0 - s))
                    .collect();
                self.accumulate(grads, *a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::LogSigmoid(a) => {
                let x = self.value(*a);
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(g, &x)| g * sigmoid(-x))
                    .collect();
                self.accumulate(grads, *a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::Log(a) => {
                let x = self.value(*a);
                let d = g.data().iter().zip(x.data()).map(|(g, x)| g / x).collect();
                self.accumulate(grads, *a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::Abs(a) => {
                let x = self.value(*a);
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(g, &x)| {
                        if x > 0.0 {
                            *g
                        } else if x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                self.accumulate(grads, *a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let d = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::Sum(a) => {
                let ta = self.value(*a);
                self.accumulate(
                    grads,
                    *a,
                    Tensor::new(ta.shape().to_vec(), vec![g.item(); ta.len()])?,
                );
            }
            Op::Mean(a) => {
                let ta = self.value(*a);
                let v = g.item() / ta.len() as f64;
                self.accumulate(
                    grads,
                    *a,
                    Tensor::new(ta.shape().to_vec(), vec![v; ta.len()])?,
                );
            }
            Op::Dot(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let k = g.item();
                self.accumulate(grads, *a, tb.scaled(k).reshaped(ta.shape().to_vec())?);
                self.accumulate(grads, *b, ta.scaled(k).reshaped(tb.shape().to_vec())?);
            }
            Op::RowDot(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let c = ta.cols();
                let mut da = Vec::with_capacity(ta.len());
                let mut db = Vec::with_capacity(tb.len());
                for (r, &gr) in g.data().iter().enumerate() {
                    da.extend(tb.row(r).iter().map(|v| v * gr));
                    db.extend(ta.row(r).iter().map(|v| v * gr));
                }
                debug_assert_eq!(da.len(), ta.rows() * c);
                self.accumulate(grads, *a, Tensor::new(ta.shape().to_vec(), da)?);
                self.accumulate(grads, *b, Tensor::new(tb.shape().to_vec(), db)?);
            }
            Op::GatherRows(a, rows) => {
                let ta = self.value(*a);
                let mut d = Tensor::zeros(ta.shape());
                for (k, &r) in rows.iter().enumerate() {
                    for (o, x) in d.row_mut(r).iter_mut().zip(g.row(k)) {
                        *o += x;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::NeighborMean(a, neighbors) => {
                let ta = self.value(*a);
                let mut d = Tensor::zeros(ta.shape());
                for (v, list) in neighbors.iter().enumerate() {
                    if list.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / list.len() as f64;
                    for &u in list {
                        for (o, x) in d.row_mut(u).iter_mut().zip(g.row(v)) {
                            *o += x * inv;
                        }
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::SoftmaxRows(a, t) => {
                let mut d = Vec::with_capacity(y.len());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let inner = super::dot(yr, gr);
                    d.extend(yr.iter().zip(gr).map(|(y, g)| y * (g - inner) / t));
                }
                self.accumulate(grads, *a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::LogSoftmaxRows(a, t) => {
                let mut d = Vec::with_capacity(y.len());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let gsum: f64 = gr.iter().sum();
                    d.extend(yr.iter().zip(gr).map(|(ly, g)| (g - ly.exp() * gsum) / t));
                }
                self.accumulate(grads, *a, Tensor::new(y.shape().to_vec(), d)?);
            }
            Op::Euclidean(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let dist = y.item();
                let k = if dist > 0.0 { g.item() / dist } else { 0.0 };
                let da: Vec<f64> = ta
                    .data()
                    .iter()
                    .zip(tb.data())
                    .map(|(x, y)| k * (x - y))
                    .collect();
                let db: Vec<f64> = da.iter().map(|v| -v).collect();
                self.accumulate(grads, *a, Tensor::new(ta.shape().to_vec(), da)?);
                self.accumulate(grads, *b, Tensor::new(tb.shape().to_vec(), db)?);
            }
            Op::Cosine(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (na, nb) = (super::norm(ta.data()), super::norm(tb.data()));
                let cos = y.item();
                let k = g.item();
                let da = ta
                    .data()
                    .iter()
                    .zip(tb.data())
                    .map(|(x, y)| k * (y / (na * nb) - cos * x / (na * na)))
                    .collect();
                let db = ta
                    .data()
                    .iter()
                    .zip(tb.data())
                    .map(|(x, y)| k * (x / (na * nb) - cos * y / (nb * nb)))
                    .collect();
                self.accumulate(grads, *a, Tensor::new(ta.shape().to_vec(), da)?);
                self.accumulate(grads, *b, Tensor::new(tb.shape().to_vec(), db)?);
            }
            Op::Stack(items) => {
                for (k, &s) in items.iter().enumerate() {
                    let ts = self.value(s);
                    self.accumulate(
                        grads,
                        s,
                        Tensor::new(ts.shape().to_vec(), vec![g.data()[k]])?,
                    );
                }
            }
        }
        Ok(())
    }
}

fn reshape_like(g: Tensor, like: &Tensor) -> Result<Tensor> {
    g.reshaped(like.shape().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_self_gradient_is_twice_w() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::vector(vec![1.5, -2.0, 0.25]));
        let l = tape.dot(w, w).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[3.0, -4.0, 0.5]);
    }

    #[test]
    fn sigmoid_of_wx_at_zero() {
        let x = [2.0, -1.0, 4.0];
        let mut tape = Tape::new();
        let w = tape.param(Tensor::vector(vec![0.0; 3]));
        let xv = tape.constant(Tensor::vector(x.to_vec()));
        let wx = tape.dot(w, xv).unwrap();
        let l = tape.sigmoid(wx);
        let g = tape.backward(l).unwrap();
        let expected: Vec<f64> = x.iter().map(|v| 0.25 * v).collect();
        assert_eq!(g.get(w).unwrap().data(), expected.as_slice());
        assert!(g.get(xv).is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let s = tape.sigmoid(w);
        assert!(matches!(tape.backward(s), Err(KmfError::NonScalarLoss(_))));
    }

    #[test]
    fn cosine_of_zero_vector_errors() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::vector(vec![0.0, 0.0]));
        let b = tape.param(Tensor::vector(vec![1.0, 0.0]));
        assert!(matches!(tape.cosine(a, b), Err(KmfError::ZeroNorm)));
    }

    #[test]
    fn isolated_rows_get_zero_neighbor_mean() {
        let mut tape = Tape::new();
        let h = tape.param(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let adj = Arc::new(vec![vec![1, 2], vec![], vec![0]]);
        let m = tape.neighbor_mean(h, adj).unwrap();
        assert_eq!(tape.value(m).data(), &[4.0, 5.0, 0.0, 0.0, 1.0, 2.0]);
    }
}
