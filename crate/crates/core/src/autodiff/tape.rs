use std::ops::Range;

/// Dense row-major matrix; vectors are `n × 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length does not match shape {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self { rows: n, cols: 1, data }
    }

    pub fn scalar(x: f64) -> Self {
        Self { rows: 1, cols: 1, data: vec![x] }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn is_vector(&self) -> bool {
        self.cols == 1
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatVec(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Log(Var),
    Square(Var),
    Concat(Var, Var),
    Slice(Var, usize),
    Softmax(Var),
    LogSoftmax(Var),
    Dot(Var, Var),
    Sum(Var),
    Pick(Var, usize),
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so the tape
/// order is already a topological order of the graph.
#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Tensor>,
    grads: Vec<Option<Vec<f64>>>,
    ops: Vec<Op>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| x - lse).collect()
}

/// `out = m · v` for a row-major `rows × cols` matrix.
pub fn matvec_into(m: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.len(), rows * cols);
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.values.push(value);
        self.grads.push(None);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant_vec(&mut self, data: Vec<f64>) -> Var {
        self.leaf(Tensor::vector(data))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.values[v.0].data
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = &self.values[v.0];
        assert_eq!(t.shape(), (1, 1), "scalar() on a non-scalar node");
        t.data[0]
    }

    /// Gradient accumulated at `v`, or zeros when backward never reached it.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        self.grads[v.0].clone().unwrap_or_else(|| vec![0.0; self.values[v.0].len()])
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn vec_shape(&self, v: Var, what: &str) -> usize {
        let t = &self.values[v.0];
        assert!(t.is_vector(), "{what}: expected a column vector, got {:?}", t.shape());
        t.rows
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        let (sa, sb) = (self.values[a.0].shape(), self.values[b.0].shape());
        assert_eq!(sa, sb, "{what}: shape mismatch {sa:?} vs {sb:?}");
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = &self.values[a.0];
        let out = Tensor { rows: t.rows, cols: t.cols, data: t.data.iter().map(|&x| f(x)).collect() };
        self.push(out, op)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, what: &str) -> Var {
        self.same_shape(a, b, what);
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor { rows: ta.rows, cols: ta.cols, data };
        self.push(out, op)
    }

    pub fn matvec(&mut self, m: Var, v: Var) -> Var {
        let n = self.vec_shape(v, "matvec");
        let (rows, cols) = self.values[m.0].shape();
        assert_eq!(cols, n, "matvec: matrix is {rows}x{cols}, vector has {n} rows");
        let mut out = vec![0.0; rows];
        matvec_into(&self.values[m.0].data, rows, cols, &self.values[v.0].data, &mut out);
        self.push(Tensor::vector(out), Op::MatVec(m, v))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    /// Elementwise product.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b), "hadamard")
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |x| k * x, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, f64::ln, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        self.vec_shape(a, "concat");
        self.vec_shape(b, "concat");
        let mut data = self.values[a.0].data.clone();
        data.extend_from_slice(&self.values[b.0].data);
        self.push(Tensor::vector(data), Op::Concat(a, b))
    }

    pub fn slice(&mut self, a: Var, range: Range<usize>) -> Var {
        let n = self.vec_shape(a, "slice");
        assert!(range.end <= n && range.start <= range.end, "slice {range:?} out of bounds for length {n}");
        let data = self.values[a.0].data[range.clone()].to_vec();
        self.push(Tensor::vector(data), Op::Slice(a, range.start))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        self.vec_shape(a, "softmax");
        let data = softmax(&self.values[a.0].data);
        self.push(Tensor::vector(data), Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        self.vec_shape(a, "log_softmax");
        let data = log_softmax(&self.values[a.0].data);
        self.push(Tensor::vector(data), Op::LogSoftmax(a))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "dot");
        let x: f64 = self.values[a.0].data.iter().zip(&self.values[b.0].data).map(|(x, y)| x * y).sum();
        self.push(Tensor::scalar(x), Op::Dot(a, b))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let x = self.values[a.0].data.iter().sum();
        self.push(Tensor::scalar(x), Op::Sum(a))
    }

    /// Scalar node holding element `i` of vector `a`.
    pub fn pick(&mut self, a: Var, i: usize) -> Var {
        let n = self.vec_shape(a, "pick");
        assert!(i < n, "pick index {i} out of bounds for length {n}");
        let x = self.values[a.0].data[i];
        self.push(Tensor::scalar(x), Op::Pick(a, i))
    }

    /// Sum of scalar nodes as one scalar node (a left fold of `add`).
    pub fn add_all(&mut self, terms: &[Var]) -> Var {
        let mut iter = terms.iter().copied();
        let first = iter.next().unwrap_or_else(|| self.leaf(Tensor::scalar(0.0)));
        iter.fold(first, |acc, t| self.add(acc, t))
    }

    fn grad_slot(&mut self, v: Var) -> &mut Vec<f64> {
        let n = self.values[v.0].len();
        self.grads[v.0].get_or_insert_with(|| vec![0.0; n])
    }

    /// Propagates d`loss` into every node reachable from it. Leaf gradients
    /// accumulate across calls until [`Tape::zero_grads`].
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.values[loss.0].shape(), (1, 1), "backward requires a scalar loss");
        for (g, op) in self.grads.iter_mut().zip(&self.ops) {
            if !matches!(op, Op::Leaf) {
                *g = None;
            }
        }
        self.grad_slot(loss)[0] += 1.0;
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            self.backprop_node(i, &g);
            self.grads[i] = Some(g);
        }
    }

    fn backprop_node(&mut self, i: usize, g: &[f64]) {
        match self.ops[i].clone() {
            Op::Leaf => {}
            Op::MatVec(m, v) => {
                let (rows, cols) = self.values[m.0].shape();
                let vv = std::mem::take(&mut self.values[v.0].data);
                {
                    let gm = self.grad_slot(m);
                    for (r, &gr) in g.iter().enumerate() {
                        if gr != 0.0 {
                            let row = &mut gm[r * cols..(r + 1) * cols];
                            row.iter_mut().zip(&vv).for_each(|(a, &x)| *a += gr * x);
                        }
                    }
                }
                self.values[v.0].data = vv;
                let mm = std::mem::take(&mut self.values[m.0].data);
                {
                    let gv = self.grad_slot(v);
                    for (r, &gr) in g.iter().enumerate().take(rows) {
                        if gr != 0.0 {
                            let row = &mm[r * cols..(r + 1) * cols];
                            gv.iter_mut().zip(row).for_each(|(a, &w)| *a += gr * w);
                        }
                    }
                }
                self.values[m.0].data = mm;
            }
            Op::Add(a, b) => {
                accumulate(self.grad_slot(a), g, |_, gi| gi);
                accumulate(self.grad_slot(b), g, |_, gi| gi);
            }
            Op::Sub(a, b) => {
                accumulate(self.grad_slot(a), g, |_, gi| gi);
                accumulate(self.grad_slot(b), g, |_, gi| -gi);
            }
            Op::Mul(a, b) => {
                let vb = self.values[b.0].data.clone();
                accumulate(self.grad_slot(a), g, |k, gi| gi * vb[k]);
                let va = self.values[a.0].data.clone();
                accumulate(self.grad_slot(b), g, |k, gi| gi * va[k]);
            }
            Op::Scale(a, k) => accumulate(self.grad_slot(a), g, |_, gi| gi * k),
            Op::Tanh(a) => {
                let y = std::mem::take(&mut self.values[i].data);
                accumulate(self.grad_slot(a), g, |k, gi| gi * (1.0 - y[k] * y[k]));
                self.values[i].data = y;
            }
            Op::Sigmoid(a) => {
                let y = std::mem::take(&mut self.values[i].data);
                accumulate(self.grad_slot(a), g, |k, gi| gi * y[k] * (1.0 - y[k]));
                self.values[i].data = y;
            }
            Op::Log(a) => {
                let x = self.values[a.0].data.clone();
                accumulate(self.grad_slot(a), g, |k, gi| gi / x[k]);
            }
            Op::Square(a) => {
                let x = self.values[a.0].data.clone();
                accumulate(self.grad_slot(a), g, |k, gi| 2.0 * gi * x[k]);
            }
            Op::Concat(a, b) => {
                let na = self.values[a.0].len();
                accumulate(self.grad_slot(a), &g[..na], |_, gi| gi);
                accumulate(self.grad_slot(b), &g[na..], |_, gi| gi);
            }
            Op::Slice(a, start) => {
                let ga = self.grad_slot(a);
                ga[start..start + g.len()].iter_mut().zip(g).for_each(|(x, &gi)| *x += gi);
            }
            Op::Softmax(a) => {
                let y = std::mem::take(&mut self.values[i].data);
                let gy: f64 = g.iter().zip(&y).map(|(gi, yi)| gi * yi).sum();
                accumulate(self.grad_slot(a), g, |k, gi| y[k] * (gi - gy));
                self.values[i].data = y;
            }
            Op::LogSoftmax(a) => {
                let y = std::mem::take(&mut self.values[i].data);
                let total: f64 = g.iter().sum();
                accumulate(self.grad_slot(a), g, |k, gi| gi - y[k].exp() * total);
                self.values[i].data = y;
            }
            Op::Dot(a, b) => {
                let s = g[0];
                let vb = self.values[b.0].data.clone();
                let va = self.values[a.0].data.clone();
                let ga = self.grad_slot(a);
                ga.iter_mut().zip(&vb).for_each(|(x, &y)| *x += s * y);
                let gb = self.grad_slot(b);
                gb.iter_mut().zip(&va).for_each(|(x, &y)| *x += s * y);
            }
            Op::Sum(a) => {
                let s = g[0];
                self.grad_slot(a).iter_mut().for_each(|x| *x += s);
            }
            Op::Pick(a, k) => self.grad_slot(a)[k] += g[0],
        }
    }
}

fn accumulate(dst: &mut [f64], g: &[f64], f: impl Fn(usize, f64) -> f64) {
    for (k, (d, &gi)) in dst.iter_mut().zip(g).enumerate() {
        *d += f(k, gi);
    }
}
