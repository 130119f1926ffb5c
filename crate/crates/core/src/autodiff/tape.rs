use super::tensor::{gemm, Layout, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f64 },
    LeakyRelu { x: Var, alpha: f64 },
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    Clamp { x: Var, lo: f64, hi: f64 },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Records forward operations in topological order for a single reverse sweep.
///
/// Nodes only reference earlier nodes, so iterating the node list backwards
/// visits every node exactly once after all of its consumers.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients from one [`Tape::backward`] call. Only leaf entries are retained.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    /// Gradient with respect to the leaf `v`; zero if `v` does not influence the output.
    pub fn wrt(&self, v: Var) -> &Tensor {
        &self.grads[v.0]
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        std::mem::replace(&mut self.grads[v.0], Tensor::scalar(0.0))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), out))
    }

    /// `x[m×n] + bias[n]`, the bias repeated across rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(bias);
        let (m, n) = xv.dims2("add_bias")?;
        let bias_ok = matches!(bv.shape(), [k] if *k == n) || matches!(bv.shape(), [1, k] if *k == n);
        if !bias_ok {
            return Err(Error::shape(
                "add_bias",
                format!("input {:?} with bias {:?}", xv.shape(), bv.shape()),
            ));
        }
        let mut data = xv.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            for (v, b) in row.iter_mut().zip(bv.data()) {
                *v += b;
            }
        }
        let out = Tensor::matrix(m, n, data)?;
        Ok(self.push(Op::AddBias(x, bias), out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.affine(x, factor, 0.0)
    }

    /// `factor · x + offset`, elementwise.
    pub fn affine(&mut self, x: Var, factor: f64, offset: f64) -> Var {
        let out = self.value(x).map(|v| factor * v + offset);
        self.push(Op::Affine { x, scale: factor }, out)
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { alpha * v });
        self.push(Op::LeakyRelu { x, alpha }, out)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), out)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), out)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if let Some(bad) = xv.data().iter().find(|v| !(**v > 0.0)) {
            return Err(Error::domain("log", format!("non-positive input {bad}")));
        }
        let out = xv.map(f64::ln);
        Ok(self.push(Op::Log(x), out))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum(x), out)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out = Tensor::scalar(xv.sum() / xv.len() as f64);
        self.push(Op::Mean(x), out)
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no inputs"));
        }
        let rows = self.value(parts[0]).dims2("concat")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2("concat")?;
            if r != rows {
                let shapes: Vec<_> = parts.iter().map(|&p| self.value(p).shape().to_vec()).collect();
                return Err(Error::shape("concat", format!("row counts differ: {shapes:?}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::matrix(rows, total, data)?;
        Ok(self.push(Op::Concat(parts.to_vec()), out))
    }

    /// Elementwise clamp to `[lo, hi]`; gradient passes only strictly inside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(Op::Clamp { x, lo, hi }, out)
    }

    /// Reverse sweep from `output`, seeded with `seed` (same shape as the output).
    pub fn backward(&self, output: Var, seed: Tensor) -> Result<Gradients> {
        let out_shape = self.value(output).shape();
        if seed.shape() != out_shape {
            return Err(Error::shape(
                "backward",
                format!("seed {:?} for output {:?}", seed.shape(), out_shape),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            // Leaves keep their gradient; interior nodes hand theirs to their inputs.
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let (m, k) = av.dims2("matmul")?;
                    let n = bv.cols();
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), Layout::Normal, bv.data(), Layout::Transposed, &mut da, false);
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, av.data(), Layout::Transposed, g.data(), Layout::Normal, &mut db, false);
                    add_grad(&mut grads, *a, Tensor::matrix(m, k, da)?);
                    add_grad(&mut grads, *b, Tensor::matrix(k, n, db)?);
                }
                Op::Add(a, b) => {
                    add_grad(&mut grads, *b, g.clone());
                    add_grad(&mut grads, *a, g);
                }
                Op::AddBias(x, bias) => {
                    let bshape = self.value(*bias).shape().to_vec();
                    let n = g.cols();
                    let mut db = vec![0.0; n];
                    for row in g.data().chunks_exact(n) {
                        for (acc, v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    add_grad(&mut grads, *bias, Tensor::new(bshape, db)?);
                    add_grad(&mut grads, *x, g);
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), "mul", |gv, bv| gv * bv)?;
                    let db = g.zip_map(self.value(*a), "mul", |gv, av| gv * av)?;
                    add_grad(&mut grads, *a, da);
                    add_grad(&mut grads, *b, db);
                }
                Op::Affine { x, scale } => {
                    let s = *scale;
                    add_grad(&mut grads, *x, g.map(|v| v * s));
                }
                Op::LeakyRelu { x, alpha } => {
                    let a = *alpha;
                    let dx = g.zip_map(self.value(*x), "leaky_relu", |gv, xv| if xv > 0.0 { gv } else { a * gv })?;
                    add_grad(&mut grads, *x, dx);
                }
                Op::Tanh(x) => {
                    let dx = g.zip_map(&node.value, "tanh", |gv, y| gv * (1.0 - y * y))?;
                    add_grad(&mut grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let dx = g.zip_map(&node.value, "sigmoid", |gv, y| gv * y * (1.0 - y))?;
                    add_grad(&mut grads, *x, dx);
                }
                Op::Log(x) => {
                    let dx = g.zip_map(self.value(*x), "log", |gv, xv| gv / xv)?;
                    add_grad(&mut grads, *x, dx);
                }
                Op::Sum(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    add_grad(&mut grads, *x, Tensor::full(&shape, g.item()));
                }
                Op::Mean(x) => {
                    let xv = self.value(*x);
                    let v = g.item() / xv.len() as f64;
                    add_grad(&mut grads, *x, Tensor::full(xv.shape(), v));
                }
                Op::Concat(parts) => {
                    let rows = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut data = Vec::with_capacity(rows * w);
                        for i in 0..rows {
                            data.extend_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                        }
                        add_grad(&mut grads, p, Tensor::matrix(rows, w, data)?);
                        offset += w;
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    let (lo, hi) = (*lo, *hi);
                    let dx = g.zip_map(self.value(*x), "clamp", |gv, xv| if xv > lo && xv < hi { gv } else { 0.0 })?;
                    add_grad(&mut grads, *x, dx);
                }
            }
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| g.unwrap_or_else(|| Tensor::zeros(node.value.shape())))
            .collect();
        Ok(Gradients { grads })
    }
}

fn add_grad(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => acc.accumulate(&g),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0]));
        let y = tape.sigmoid(x);
        assert_eq!(tape.value(y).data(), &[0.5]);
        let g = tape.backward(y, Tensor::vector(vec![1.0])).unwrap();
        assert_eq!(g.wrt(x).data(), &[0.25]);
    }

    #[test]
    fn leaky_relu_branches() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![-1.0, 2.0, 0.0]));
        let y = tape.leaky_relu(x, 0.2);
        assert_eq!(tape.value(y).data(), &[-0.2, 2.0, 0.0]);
        let g = tape.backward(y, Tensor::vector(vec![1.0; 3])).unwrap();
        // slope at exactly zero takes the negative branch
        assert_eq!(g.wrt(x).data(), &[0.2, 1.0, 0.2]);
    }

    #[test]
    fn square_sum_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![3.0]));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        let g = tape.backward(s, Tensor::scalar(1.0)).unwrap();
        assert_eq!(g.wrt(x).data(), &[6.0]);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let unused = tape.leaf(Tensor::zeros(&[3, 2]));
        let s = tape.sum(x);
        let g = tape.backward(s, Tensor::scalar(1.0)).unwrap();
        assert_eq!(g.wrt(unused), &Tensor::zeros(&[3, 2]));
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 0.0]));
        assert!(matches!(tape.log(x), Err(Error::Domain { op: "log", .. })));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        match tape.matmul(a, b) {
            Err(Error::Shape { op, detail }) => {
                assert_eq!(op, "matmul");
                assert!(detail.contains("[2, 3]"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let bias = tape.leaf(Tensor::zeros(&[2]));
        assert!(tape.add_bias(a, bias).is_err());
    }

    #[test]
    fn seed_shape_is_checked() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2, 2]));
        let y = tape.tanh(x);
        assert!(tape.backward(y, Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn backward_is_pure() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(2, 2, vec![0.1, -0.4, 0.7, 1.3]).unwrap());
        let w = tape.leaf(Tensor::matrix(2, 1, vec![0.5, -1.5]).unwrap());
        let h = tape.matmul(x, w).unwrap();
        let y = tape.tanh(h);
        let s = tape.sum(y);
        let g1 = tape.backward(s, Tensor::scalar(1.0)).unwrap();
        let g2 = tape.backward(s, Tensor::scalar(1.0)).unwrap();
        assert_eq!(g1.wrt(x), g2.wrt(x));
        assert_eq!(g1.wrt(w), g2.wrt(w));
    }

    #[test]
    fn concat_and_clamp_gradients() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
        let b = tape.leaf(Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let c = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let clamped = tape.clamp(c, 2.0, 5.5);
        let s = tape.sum(clamped);
        let g = tape.backward(s, Tensor::scalar(1.0)).unwrap();
        assert_eq!(g.wrt(a).data(), &[0.0, 0.0]);
        assert_eq!(g.wrt(b).data(), &[1.0, 1.0, 1.0, 0.0]);
    }
}
