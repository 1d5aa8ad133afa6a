use super::kernels::{gemm, power_iteration};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input {
        requires_grad: bool,
    },
    Param(ParamId),
    Matmul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    Log(Var),
    Exp(Var),
    Sqrt(Var),
    Square(Var),
    ClampMin(Var, f64),
    Sum(Var),
    Mean(Var),
    SumAxis {
        x: Var,
        axis: usize,
    },
    SelectAxis {
        x: Var,
        axis: usize,
        picks: Vec<usize>,
    },
    L2Norm(Var),
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape(Var),
    SpectralNorm {
        w: Var,
        u: Vec<f64>,
        v: Vec<f64>,
    },
}

#[derive(Clone, Debug)]
struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    op: Op,
}

/// Reverse-mode autodiff tape.
///
/// Nodes are appended in evaluation order, so the tape is already
/// topologically sorted and backward walks it once in reverse.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` influenced it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// Splits `shape` around `axis` into `(outer, len, inner)`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node { shape, data, op });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    /// Copies a node's current value out as a tensor.
    pub fn value(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor {
            shape: n.shape.clone(),
            data: n.data.clone(),
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].data[0]
    }

    /// Records a leaf. Its gradient is tracked when `t.requires_grad()`.
    pub fn input(&mut self, t: &Tensor) -> Var {
        let requires_grad = t.requires_grad;
        self.push(t.shape.clone(), t.data.clone(), Op::Input { requires_grad })
    }

    /// Records a leaf that never receives gradient.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(
            t.shape.clone(),
            t.data.clone(),
            Op::Input {
                requires_grad: false,
            },
        )
    }

    /// Copies a node's value into a new constant leaf, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = &self.nodes[v.0];
        let (shape, data) = (n.shape.clone(), n.data.clone());
        self.push(
            shape,
            data,
            Op::Input {
                requires_grad: false,
            },
        )
    }

    /// Records a parameter from `store`; [`Graph::backward_into`] routes its
    /// gradient back.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let t = store.get(id);
        self.push(t.shape.clone(), t.data.clone(), Op::Param(id))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip_map(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, data, op)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let data = self.data(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, data, op)
    }

    /// Matrix product of `[m, k]` and `[k, n]`. A rank-1 right operand is
    /// treated as a column vector and yields a rank-1 result.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let err = || Error::ShapeMismatch {
            op: "matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        if sa.len() != 2 || sb.is_empty() || sb.len() > 2 || sa[1] != sb[0] {
            return Err(err());
        }
        let (m, k) = (sa[0], sa[1]);
        let n = if sb.len() == 2 { sb[1] } else { 1 };
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.data(a),
            false,
            self.data(b),
            false,
            &mut out,
            false,
        );
        let shape = if sb.len() == 2 { vec![m, n] } else { vec![m] };
        Ok(self.push(shape, out, Op::Matmul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_map(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_map(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_map(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// Adds a length-`n` row vector to every row of a `[b, n]` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (sx, sr) = (self.shape(x).to_vec(), self.shape(row).to_vec());
        if sx.len() != 2 || sr.len() != 1 || sx[1] != sr[0] {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: sx,
                rhs: sr,
            });
        }
        let n = sx[1];
        let r = self.data(row);
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + r[i % n])
            .collect();
        Ok(self.push(sx, data, Op::AddRow(x, row)))
    }

    /// Multiplies row `i` of a `[b, n]` matrix by entry `i` of a length-`b`
    /// vector.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (sx, sc) = (self.shape(x).to_vec(), self.shape(col).to_vec());
        if sx.len() != 2 || sc.len() != 1 || sx[0] != sc[0] {
            return Err(Error::ShapeMismatch {
                op: "mul_col",
                lhs: sx,
                rhs: sc,
            });
        }
        let n = sx[1];
        let c = self.data(col);
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v * c[i / n])
            .collect();
        Ok(self.push(sx, data, Op::MulCol(x, col)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::AddScalar(a), |x| x + c)
    }

    /// `max(x, 0)` with subgradient 0 at 0.
    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    /// Softmax along the last axis, computed after subtracting the row max.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let Some(&n) = shape.last() else {
            return Err(Error::ShapeMismatch {
                op: "softmax",
                lhs: shape,
                rhs: vec![],
            });
        };
        let mut data = self.data(a).to_vec();
        for row in data.chunks_mut(n) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - mx).exp();
                s += *x;
            }
            row.iter_mut().for_each(|x| *x /= s);
        }
        Ok(self.push(shape, data, Op::Softmax(a)))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, Op::Log(a), f64::ln)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a), f64::exp)
    }

    /// Square root; the gradient at 0 is taken as 0.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.map(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, Op::Square(a), |x| x * x)
    }

    /// `max(x, lo)`; gradient passes only where `x > lo`.
    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Var {
        self.map(a, Op::ClampMin(a, lo), |x| x.max(lo))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(vec![], vec![s], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let s = d.iter().sum::<f64>() / d.len() as f64;
        self.push(vec![], vec![s], Op::Mean(a))
    }

    fn check_axis(&self, op: &'static str, a: Var, axis: usize) -> Result<()> {
        let shape = self.shape(a);
        if axis >= shape.len() {
            return Err(Error::ShapeMismatch {
                op,
                lhs: shape.to_vec(),
                rhs: vec![axis],
            });
        }
        Ok(())
    }

    fn reduced_shape(&self, a: Var, axis: usize) -> Vec<usize> {
        let mut s = self.shape(a).to_vec();
        s.remove(axis);
        s
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_axis("sum_axis", a, axis)?;
        let (outer, len, inner) = split_axis(self.shape(a), axis);
        let x = self.data(a);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += x[(o * len + k) * inner + i];
                }
            }
        }
        let shape = self.reduced_shape(a, axis);
        Ok(self.push(shape, out, Op::SumAxis { x: a, axis }))
    }

    /// Index of the extreme entry along `axis` for every outer/inner slot.
    /// Ties resolve to the lowest index.
    pub fn arg_extreme(&self, a: Var, axis: usize, max: bool) -> Result<Vec<usize>> {
        self.check_axis(if max { "argmax" } else { "argmin" }, a, axis)?;
        let (outer, len, inner) = split_axis(self.shape(a), axis);
        let x = self.data(a);
        let mut picks = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = 0;
                for k in 1..len {
                    let cand = x[(o * len + k) * inner + i];
                    let cur = x[(o * len + best) * inner + i];
                    if (max && cand > cur) || (!max && cand < cur) {
                        best = k;
                    }
                }
                picks.push(best);
            }
        }
        Ok(picks)
    }

    /// Picks one entry along `axis` per outer/inner slot. The gradient flows
    /// only to the picked entry.
    pub fn select_axis(&mut self, a: Var, axis: usize, picks: Vec<usize>) -> Result<Var> {
        self.check_axis("select_axis", a, axis)?;
        let (outer, len, inner) = split_axis(self.shape(a), axis);
        if picks.len() != outer * inner {
            return Err(Error::DimensionMismatch {
                expected: outer * inner,
                actual: picks.len(),
            });
        }
        if let Some(&bad) = picks.iter().find(|&&p| p >= len) {
            return Err(Error::IndexOutOfRange {
                what: "entries along axis",
                index: bad,
                len,
            });
        }
        let x = self.data(a);
        let mut out = Vec::with_capacity(picks.len());
        for o in 0..outer {
            for i in 0..inner {
                out.push(x[(o * len + picks[o * inner + i]) * inner + i]);
            }
        }
        let shape = self.reduced_shape(a, axis);
        Ok(self.push(shape, out, Op::SelectAxis { x: a, axis, picks }))
    }

    /// Minimum along `axis`; backward routes to the first minimal index.
    pub fn min_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let picks = self.arg_extreme(a, axis, false)?;
        self.select_axis(a, axis, picks)
    }

    /// Maximum along `axis`; backward routes to the first maximal index.
    pub fn max_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let picks = self.arg_extreme(a, axis, true)?;
        self.select_axis(a, axis, picks)
    }

    /// Euclidean (Frobenius) norm of all entries; gradient at 0 is 0.
    pub fn l2norm(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().map(|x| x * x).sum::<f64>().sqrt();
        self.push(vec![], vec![s], Op::L2Norm(a))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(Error::invalid("concat of zero tensors"));
        };
        self.check_axis("concat", first, axis)?;
        let base = self.shape(first).to_vec();
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            let ok = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &x in xs {
                let len = self.shape(x)[axis];
                let chunk = len * inner;
                out.extend_from_slice(&self.data(x)[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push(
            shape,
            out,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
        ))
    }

    /// Entries `start..start + len` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.check_axis("slice", a, axis)?;
        let shape = self.shape(a).to_vec();
        if len == 0 || start + len > shape[axis] {
            return Err(Error::ShapeMismatch {
                op: "slice",
                lhs: shape,
                rhs: vec![start, len],
            });
        }
        let (outer, full, inner) = split_axis(&shape, axis);
        let x = self.data(a);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let off = (o * full + start) * inner;
            out.extend_from_slice(&x[off..off + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        Ok(self.push(new_shape, out, Op::Slice { x: a, axis, start }))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let len = self.data(a).len();
        if shape.iter().product::<usize>() != len || shape.iter().any(|&s| s == 0) {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let data = self.data(a).to_vec();
        Ok(self.push(shape.to_vec(), data, Op::Reshape(a)))
    }

    /// Largest singular value of a matrix by power iteration.
    ///
    /// `u` is the caller's persistent left-vector estimate and is updated in
    /// place, so repeated calls warm-start. The backward rule is `g · u vᵀ`
    /// with `u`, `v` held constant.
    pub fn spectral_norm(&mut self, w: Var, u: &mut Vec<f64>, iters: usize) -> Result<Var> {
        let shape = self.shape(w).to_vec();
        if shape.len() != 2 || iters == 0 {
            return Err(Error::ShapeMismatch {
                op: "spectral_norm",
                lhs: shape,
                rhs: vec![iters],
            });
        }
        let (sigma, uu, vv) = power_iteration(self.data(w), shape[0], shape[1], u, iters);
        Ok(self.push(vec![], vec![sigma], Op::SpectralNorm { w, u: uu, v: vv }))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let ln = &self.nodes[loss.0];
        if !ln.shape.is_empty() {
            return Err(Error::NonScalarLoss(ln.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.backprop_node(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (idx, node) in self.nodes[..=loss.0].iter().enumerate() {
            if let Op::Input {
                requires_grad: false,
            } = node.op
            {
                grads[idx] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].data.as_slice();
        let shp = |v: Var| self.nodes[v.0].shape.as_slice();
        match &node.op {
            Op::Input { .. } | Op::Param(_) => {}
            Op::Matmul(a, b) => {
                let sa = shp(*a);
                let (m, k) = (sa[0], sa[1]);
                let n = node.data.len() / m;
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, g, false, val(*b), true, &mut ga, false);
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, val(*a), true, g, false, &mut gb, false);
                add_into(&mut grads[a.0], &ga);
                add_into(&mut grads[b.0], &gb);
            }
            Op::Add(a, b) => {
                add_into(&mut grads[a.0], g);
                add_into(&mut grads[b.0], g);
            }
            Op::Sub(a, b) => {
                add_into(&mut grads[a.0], g);
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                add_into(&mut grads[b.0], &neg);
            }
            Op::Mul(a, b) => {
                let ga: Vec<f64> = g.iter().zip(val(*b)).map(|(x, y)| x * y).collect();
                let gb: Vec<f64> = g.iter().zip(val(*a)).map(|(x, y)| x * y).collect();
                add_into(&mut grads[a.0], &ga);
                add_into(&mut grads[b.0], &gb);
            }
            Op::AddRow(x, row) => {
                add_into(&mut grads[x.0], g);
                let n = shp(*row)[0];
                let mut gr = vec![0.0; n];
                for (i, v) in g.iter().enumerate() {
                    gr[i % n] += v;
                }
                add_into(&mut grads[row.0], &gr);
            }
            Op::MulCol(x, col) => {
                let n = shp(*x)[1];
                let c = val(*col);
                let xv = val(*x);
                let gx: Vec<f64> = g.iter().enumerate().map(|(i, v)| v * c[i / n]).collect();
                let mut gc = vec![0.0; c.len()];
                for (i, v) in g.iter().enumerate() {
                    gc[i / n] += v * xv[i];
                }
                add_into(&mut grads[x.0], &gx);
                add_into(&mut grads[col.0], &gc);
            }
            Op::Scale(a, c) => {
                let ga: Vec<f64> = g.iter().map(|x| c * x).collect();
                add_into(&mut grads[a.0], &ga);
            }
            Op::AddScalar(a) => add_into(&mut grads[a.0], g),
            Op::Relu(a) => {
                let ga: Vec<f64> = g
                    .iter()
                    .zip(val(*a))
                    .map(|(gv, &x)| if x > 0.0 { *gv } else { 0.0 })
                    .collect();
                add_into(&mut grads[a.0], &ga);
            }
            Op::Sigmoid(a) => {
                let ga: Vec<f64> = g
                    .iter()
                    .zip(&node.data)
                    .map(|(gv, s)| gv * s * (1.0 - s))
                    .collect();
                add_into(&mut grads[a.0], &ga);
            }
            Op::Softmax(a) => {
                let n = *node.shape.last().unwrap();
                let mut ga = vec![0.0; g.len()];
                for ((gr, sr), out) in g.chunks(n).zip(node.data.chunks(n)).zip(ga.chunks_mut(n)) {
                    let dot: f64 = gr.iter().zip(sr).map(|(x, y)| x * y).sum();
                    for j in 0..n {
                        out[j] = sr[j] * (gr[j] - dot);
                    }
                }
                add_into(&mut grads[a.0], &ga);
            }
            Op::Log(a) => {
                let ga: Vec<f64> = g.iter().zip(val(*a)).map(|(gv, x)| gv / x).collect();
                add_into(&mut grads[a.0], &ga);
            }
            Op::Exp(a) => {
                let ga: Vec<f64> = g.iter().zip(&node.data).map(|(gv, y)| gv * y).collect();
                add_into(&mut grads[a.0], &ga);
            }
            Op::Sqrt(a) => {
                let ga: Vec<f64> = g
                    .iter()
                    .zip(&node.data)
                    .map(|(gv, y)| if *y > 0.0 { gv / (2.0 * y) } else { 0.0 })
                    .collect();
                add_into(&mut grads[a.0], &ga);
            }
            Op::Square(a) => {
                let ga: Vec<f64> = g.iter().zip(val(*a)).map(|(gv, x)| 2.0 * x * gv).collect();
                add_into(&mut grads[a.0], &ga);
            }
            Op::ClampMin(a, lo) => {
                let ga: Vec<f64> = g
                    .iter()
                    .zip(val(*a))
                    .map(|(gv, x)| if x > lo { *gv } else { 0.0 })
                    .collect();
                add_into(&mut grads[a.0], &ga);
            }
            Op::Sum(a) => {
                let ga = vec![g[0]; val(*a).len()];
                add_into(&mut grads[a.0], &ga);
            }
            Op::Mean(a) => {
                let n = val(*a).len();
                let ga = vec![g[0] / n as f64; n];
                add_into(&mut grads[a.0], &ga);
            }
            Op::SumAxis { x, axis } => {
                let (outer, len, inner) = split_axis(shp(*x), *axis);
                let mut gx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for k in 0..len {
                        for i in 0..inner {
                            gx[(o * len + k) * inner + i] = g[o * inner + i];
                        }
                    }
                }
                add_into(&mut grads[x.0], &gx);
            }
            Op::SelectAxis { x, axis, picks } => {
                let (outer, len, inner) = split_axis(shp(*x), *axis);
                let mut gx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let slot = o * inner + i;
                        gx[(o * len + picks[slot]) * inner + i] += g[slot];
                    }
                }
                add_into(&mut grads[x.0], &gx);
            }
            Op::L2Norm(a) => {
                let nrm = node.data[0];
                let ga: Vec<f64> = if nrm > 0.0 {
                    val(*a).iter().map(|x| g[0] * x / nrm).collect()
                } else {
                    vec![0.0; val(*a).len()]
                };
                add_into(&mut grads[a.0], &ga);
            }
            Op::Concat { xs, axis } => {
                let (outer, total, inner) = split_axis(&node.shape, *axis);
                let mut offset = 0;
                for &x in xs {
                    let len = shp(x)[*axis];
                    let mut gx = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        gx.extend_from_slice(&g[start..start + len * inner]);
                    }
                    add_into(&mut grads[x.0], &gx);
                    offset += len;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, full, inner) = split_axis(shp(*x), *axis);
                let len = node.shape[*axis];
                let mut gx = vec![0.0; outer * full * inner];
                for o in 0..outer {
                    let dst = (o * full + start) * inner;
                    let src = o * len * inner;
                    gx[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                add_into(&mut grads[x.0], &gx);
            }
            Op::Reshape(a) => add_into(&mut grads[a.0], g),
            Op::SpectralNorm { w, u, v } => {
                let gw: Vec<f64> = u
                    .iter()
                    .flat_map(|ui| v.iter().map(move |vj| g[0] * ui * vj))
                    .collect();
                add_into(&mut grads[w.0], &gw);
            }
        }
    }

    /// Runs [`Graph::backward`] and accumulates parameter gradients into
    /// `store`. Every trainable parameter of the store ends up with a
    /// populated gradient, zero when it did not influence the loss.
    pub fn backward_into(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(g) = grads.grads.get(idx).and_then(|g| g.as_deref()) {
                    store.get_mut(id).accumulate_grad(g)?;
                }
            }
        }
        for t in store.tensors_mut() {
            if t.requires_grad && t.grad.is_none() {
                t.grad = Some(vec![0.0; t.data.len()]);
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn relu_forward() {
        let mut g = Graph::new();
        let x = g.input(&t(&[3], &[-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.data(y), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut g = Graph::new();
        let x = g.input(&t(&[2], &[0.0, 0.0]));
        let y = g.softmax(x).unwrap();
        assert_eq!(g.data(y), &[0.5, 0.5]);
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i3 = g.input(&t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
        let v = g.input(&t(&[3], &[0.3, -7.0, 2.5]));
        let y = g.matmul(i3, v).unwrap();
        assert_eq!(g.data(y), &[0.3, -7.0, 2.5]);
        assert_eq!(g.shape(y), &[3]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.input(&t(&[2], &[1.0, 2.0]).with_requires_grad(true));
        let sq = g.square(x);
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn dead_relu_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.input(&Tensor::scalar(-1.0).with_requires_grad(true));
        let y = g.relu(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.0]);
        let mut g = Graph::new();
        let x = g.input(&Tensor::scalar(0.0).with_requires_grad(true));
        let y = g.relu(x);
        assert_eq!(g.backward(y).unwrap().get(x).unwrap(), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.input(&t(&[2], &[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(s)) if s == vec![2]));
    }

    #[test]
    fn shape_errors_name_op_and_shapes() {
        let mut g = Graph::new();
        let a = g.input(&t(&[2, 3], &[0.0; 6]));
        let b = g.input(&t(&[2, 3], &[0.0; 6]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        let c = g.input(&t(&[3], &[0.0; 3]));
        let err = g.add(a, c).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("[3]"), "{err}");
    }

    #[test]
    fn min_axis_routes_to_first_minimum() {
        let mut g = Graph::new();
        let x = g.input(&t(&[2, 3], &[1.0, 0.5, 0.5, 2.0, 3.0, 2.0]).with_requires_grad(true));
        let m = g.min_axis(x, 1).unwrap();
        assert_eq!(g.data(m), &[0.5, 2.0]);
        let s = g.sum(m);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_and_slice_roundtrip() {
        let mut g = Graph::new();
        let a = g.input(&t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = g.input(&t(&[2, 1], &[5.0, 6.0]));
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.data(c), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let s = g.slice(c, 1, 2, 1).unwrap();
        assert_eq!(g.data(s), &[5.0, 6.0]);
        let r = g.concat(&[a, a], 0).unwrap();
        assert_eq!(g.shape(r), &[4, 2]);
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let mut store = ParamStore::new();
        let id = store.insert("w", t(&[2], &[1.0, -1.0]));
        let unused = store.insert("u", t(&[1], &[0.0]));
        for _ in 0..2 {
            let mut g = Graph::new();
            let w = g.param(&store, id);
            let l = g.sum(w);
            g.backward_into(l, &mut store).unwrap();
        }
        assert_eq!(store.get(id).grad().unwrap(), &[2.0, 2.0]);
        assert_eq!(store.get(unused).grad().unwrap(), &[0.0]);
    }
}
