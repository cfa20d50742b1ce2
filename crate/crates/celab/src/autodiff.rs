//! Reverse-mode automatic differentiation over small dense matrices.
//!
//! Gradients are materialized as ordinary graph nodes, so a gradient can be
//! differentiated again. The poisoning objective needs exactly that: the
//! outer loss is evaluated at parameters produced by an inner gradient step,
//! and its gradient with respect to the generated encodings flows through
//! that inner step.
//!
//! The op set is closed under differentiation: every backward rule is
//! expressed with the same primitives, so second (and higher) order
//! derivatives are exact wherever the function is differentiable. Piecewise
//! switches (relu masks, q-error branches) are frozen at their forward-time
//! values, which is correct almost everywhere.

/// Dense row-major matrix of f64.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor shape/data mismatch");
        Tensor { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn full(rows: usize, cols: usize, v: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(1, 1, vec![v])
    }

    pub fn from_row(row: &[f64]) -> Self {
        Tensor::new(1, row.len(), row.to_vec())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty());
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols);
            data.extend_from_slice(r);
        }
        Tensor::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn matmul_nn(&self, b: &Tensor) -> Tensor {
        assert_eq!(self.cols, b.rows, "matmul inner dim");
        let mut out = Tensor::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a_ik = self.get(i, k);
                if a_ik == 0.0 {
                    continue;
                }
                let brow = b.row(k);
                let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
                for (o, bv) in orow.iter_mut().zip(brow.iter()) {
                    *o += a_ik * bv;
                }
            }
        }
        out
    }

    /// self · bᵀ
    fn matmul_nt(&self, b: &Tensor) -> Tensor {
        assert_eq!(self.cols, b.cols, "matmul_nt inner dim");
        let mut out = Tensor::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            for j in 0..b.rows {
                let brow = b.row(j);
                let mut acc = 0.0;
                for (av, bv) in arow.iter().zip(brow.iter()) {
                    acc += av * bv;
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    /// selfᵀ · b
    fn matmul_tn(&self, b: &Tensor) -> Tensor {
        assert_eq!(self.rows, b.rows, "matmul_tn inner dim");
        let mut out = Tensor::zeros(self.cols, b.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = b.row(k);
            for (i, av) in arow.iter().enumerate() {
                if *av == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
                for (o, bv) in orow.iter_mut().zip(brow.iter()) {
                    *o += av * bv;
                }
            }
        }
        out
    }

    fn zip(&self, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.rows, b.rows);
        assert_eq!(self.cols, b.cols);
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(b.data.iter())
                .map(|(x, y)| f(*x, *y))
                .collect(),
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| f(*x)).collect(),
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMulNN(Var, Var),
    MatMulNT(Var, Var),
    MatMulTN(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    AddRow(Var, Var),
    SumRows(Var),
    BroadcastRows(Var, usize),
    SumAll(Var),
    BroadcastScalar(Var, usize, usize),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Ln(Var),
    Exp(Var),
    SliceCols(Var, usize, usize),
    PadCols(Var, usize, usize),
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Eagerly evaluated computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const SIGMOID_CLIP: f64 = 30.0;

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
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

    pub fn scalar_value(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "expected scalar node");
        t.data[0]
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.push(Op::Leaf, t, requires_grad)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_nn(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::MatMulNN(a, b), v, rg)
    }

    /// a · bᵀ
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_nt(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::MatMulNT(a, b), v, rg)
    }

    /// aᵀ · b
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_tn(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::MatMulTN(a, b), v, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::Add(a, b), v, rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::Sub(a, b), v, rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::Mul(a, b), v, rg)
    }

    /// Elementwise a / b. Callers must keep b away from zero.
    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x / y);
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::Div(a, b), v, rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        let rg = self.rg(a);
        self.push(Op::Neg(a), v, rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| k * x);
        let rg = self.rg(a);
        self.push(Op::Scale(a, k), v, rg)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x + k);
        let rg = self.rg(a);
        self.push(Op::AddScalar(a, k), v, rg)
    }

    /// [r×c] + [1×c] row broadcast (bias add).
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (at, rt) = (self.value(a), self.value(row));
        assert_eq!(rt.rows, 1);
        assert_eq!(at.cols, rt.cols);
        let mut v = at.clone();
        for i in 0..v.rows {
            for j in 0..v.cols {
                v.data[i * v.cols + j] += rt.data[j];
            }
        }
        let rg = self.rg(a) || self.rg(row);
        self.push(Op::AddRow(a, row), v, rg)
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let at = self.value(a);
        let mut v = Tensor::zeros(1, at.cols);
        for i in 0..at.rows {
            for j in 0..at.cols {
                v.data[j] += at.get(i, j);
            }
        }
        let rg = self.rg(a);
        self.push(Op::SumRows(a), v, rg)
    }

    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Var {
        let at = self.value(a);
        assert_eq!(at.rows, 1);
        let mut v = Tensor::zeros(rows, at.cols);
        for i in 0..rows {
            v.data[i * at.cols..(i + 1) * at.cols].copy_from_slice(&at.data);
        }
        let rg = self.rg(a);
        self.push(Op::BroadcastRows(a, rows), v, rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data.iter().sum();
        let rg = self.rg(a);
        self.push(Op::SumAll(a), Tensor::scalar(s), rg)
    }

    pub fn broadcast_scalar(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let s = self.scalar_value(a);
        let rg = self.rg(a);
        self.push(
            Op::BroadcastScalar(a, rows, cols),
            Tensor::full(rows, cols, s),
            rg,
        )
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| {
            let z = x.clamp(-SIGMOID_CLIP, SIGMOID_CLIP);
            1.0 / (1.0 + (-z).exp())
        });
        let rg = self.rg(a);
        self.push(Op::Sigmoid(a), v, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.tanh());
        let rg = self.rg(a);
        self.push(Op::Tanh(a), v, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(Op::Relu(a), v, rg)
    }

    /// Natural log. Callers must keep inputs positive.
    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(1e-300).ln());
        let rg = self.rg(a);
        self.push(Op::Ln(a), v, rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.min(700.0).exp());
        let rg = self.rg(a);
        self.push(Op::Exp(a), v, rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let at = self.value(a);
        assert!(start + len <= at.cols, "slice out of range");
        let mut v = Tensor::zeros(at.rows, len);
        for i in 0..at.rows {
            let src = &at.data[i * at.cols + start..i * at.cols + start + len];
            v.data[i * len..(i + 1) * len].copy_from_slice(src);
        }
        let rg = self.rg(a);
        self.push(Op::SliceCols(a, start, len), v, rg)
    }

    /// Embed `a` into a zero matrix with `total` columns at column `offset`.
    pub fn pad_cols(&mut self, a: Var, total: usize, offset: usize) -> Var {
        let at = self.value(a);
        assert!(offset + at.cols <= total, "pad out of range");
        let mut v = Tensor::zeros(at.rows, total);
        for i in 0..at.rows {
            let dst = &mut v.data[i * total + offset..i * total + offset + at.cols];
            dst.copy_from_slice(at.row(i));
        }
        let rg = self.rg(a);
        self.push(Op::PadCols(a, total, offset), v, rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let total = self.value(a).cols + self.value(b).cols;
        let off = self.value(a).cols;
        let pa = self.pad_cols(a, total, 0);
        let pb = self.pad_cols(b, total, off);
        self.add(pa, pb)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.neg(a);
        self.add_scalar(n, 1.0)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    /// mask ⊙ a + (1−mask) ⊙ b with a constant 0/1 mask.
    pub fn select_mask(&mut self, mask: Tensor, a: Var, b: Var) -> Var {
        let m = self.constant(mask);
        let im = self.one_minus(m);
        let lhs = self.mul(m, a);
        let rhs = self.mul(im, b);
        self.add(lhs, rhs)
    }

    /// Gradients of scalar `y` with respect to each var in `wrt`.
    ///
    /// Every returned gradient is itself a graph node, so it can be fed back
    /// into further ops and differentiated again. Vars with no path to `y`
    /// yield `None`.
    pub fn backward(&mut self, y: Var, wrt: &[Var]) -> Vec<Option<Var>> {
        assert_eq!(self.value(y).len(), 1, "backward target must be scalar");
        let mut grads: Vec<Option<Var>> = vec![None; self.nodes.len()];
        let seed = self.constant(Tensor::scalar(1.0));
        grads[y.0] = Some(seed);

        for id in (0..=y.0).rev() {
            let g = match grads[id] {
                Some(g) => g,
                None => continue,
            };
            if !self.nodes[id].requires_grad {
                continue;
            }
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMulNN(a, b) => {
                    if self.rg(a) {
                        let da = self.matmul_nt(g, b);
                        self.accum(&mut grads, a, da);
                    }
                    if self.rg(b) {
                        let db = self.matmul_tn(a, g);
                        self.accum(&mut grads, b, db);
                    }
                }
                Op::MatMulNT(a, b) => {
                    if self.rg(a) {
                        let da = self.matmul(g, b);
                        self.accum(&mut grads, a, da);
                    }
                    if self.rg(b) {
                        let db = self.matmul_tn(g, a);
                        self.accum(&mut grads, b, db);
                    }
                }
                Op::MatMulTN(a, b) => {
                    if self.rg(a) {
                        let da = self.matmul_nt(b, g);
                        self.accum(&mut grads, a, da);
                    }
                    if self.rg(b) {
                        let db = self.matmul(a, g);
                        self.accum(&mut grads, b, db);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(a) {
                        self.accum(&mut grads, a, g);
                    }
                    if self.rg(b) {
                        self.accum(&mut grads, b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(a) {
                        self.accum(&mut grads, a, g);
                    }
                    if self.rg(b) {
                        let ng = self.neg(g);
                        self.accum(&mut grads, b, ng);
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(a) {
                        let da = self.mul(g, b);
                        self.accum(&mut grads, a, da);
                    }
                    if self.rg(b) {
                        let db = self.mul(g, a);
                        self.accum(&mut grads, b, db);
                    }
                }
                Op::Div(a, b) => {
                    if self.rg(a) {
                        let da = self.div(g, b);
                        self.accum(&mut grads, a, da);
                    }
                    if self.rg(b) {
                        let c = Var(id);
                        let cb = self.div(c, b);
                        let gc = self.mul(g, cb);
                        let db = self.neg(gc);
                        self.accum(&mut grads, b, db);
                    }
                }
                Op::Neg(a) => {
                    if self.rg(a) {
                        let da = self.neg(g);
                        self.accum(&mut grads, a, da);
                    }
                }
                Op::Scale(a, k) => {
                    if self.rg(a) {
                        let da = self.scale(g, k);
                        self.accum(&mut grads, a, da);
                    }
                }
                Op::AddScalar(a, _) => {
                    if self.rg(a) {
                        self.accum(&mut grads, a, g);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.rg(a) {
                        self.accum(&mut grads, a, g);
                    }
                    if self.rg(row) {
                        let dr = self.sum_rows(g);
                        self.accum(&mut grads, row, dr);
                    }
                }
                Op::SumRows(a) => {
                    if self.rg(a) {
                        let r = self.value(a).rows;
                        let da = self.broadcast_rows(g, r);
                        self.accum(&mut grads, a, da);
                    }
                }
                Op::BroadcastRows(a, _) => {
                    if self.rg(a) {
                        let da = self.sum_rows(g);
                        self.accum(&mut grads, a, da);
                    }
                }
                Op::SumAll(a) => {
                    if self.rg(a) {
                        let (r, c) = {
                            let t = self.value(a);
                            (t.rows, t.cols)
                        };
                        let da = self.broadcast_scalar(g, r, c);
                        self.accum(&mut grads, a, da);
                    }
                }
                Op::BroadcastScalar(a, _, _) => {
                    if self.rg(a) {
                        let da = self.sum_all(g);
                        self.accum(&mut grads, a, da);
                    }
                }
                Op::Sigmoid(a) => {
                    if self.rg(a) {
                        let s = Var(id);
                        let om = self.one_minus(s);
                        let ds = self.mul(s, om);
                        let da = self.mul(g, ds);
                        self.accum(&mut grads, a, da);
                    }
                }
                Op::Tanh(a) => {
                    if self.rg(a) {
                        let t = Var(id);
                        let t2 = self.mul(t, t);
                        let dt = self.one_minus(t2);
                        let da = self.mul(g, dt);
                        self.accum(&mut grads, a, da);
                    }
                }
                Op::Relu(a) => {
                    if self.rg(a) {
                        let mask = self.value(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                        let m = self.constant(mask);
                        let da = self.mul(g, m);
                        self.accum(&mut grads, a, da);
                    }
                }
                Op::Ln(a) => {
                    if self.rg(a) {
                        let da = self.div(g, a);
                        self.accum(&mut grads, a, da);
                    }
                }
                Op::Exp(a) => {
                    if self.rg(a) {
                        let c = Var(id);
                        let da = self.mul(g, c);
                        self.accum(&mut grads, a, da);
                    }
                }
                Op::SliceCols(a, start, _) => {
                    if self.rg(a) {
                        let total = self.value(a).cols;
                        let da = self.pad_cols(g, total, start);
                        self.accum(&mut grads, a, da);
                    }
                }
                Op::PadCols(a, _, offset) => {
                    if self.rg(a) {
                        let len = self.value(a).cols;
                        let da = self.slice_cols(g, offset, len);
                        self.accum(&mut grads, a, da);
                    }
                }
            }
        }

        wrt.iter().map(|v| grads[v.0]).collect()
    }

    fn accum(&mut self, grads: &mut [Option<Var>], target: Var, g: Var) {
        grads[target.0] = Some(match grads[target.0] {
            Some(prev) => self.add(prev, g),
            None => g,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    // y = sum(sigmoid(x·W + b) ⊙ v); checks matmul/add_row/sigmoid/mul chains.
    #[test]
    fn first_order_matches_finite_differences() {
        let w0 = vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.25];
        let x0 = vec![0.7, -1.1];
        let eval = |w: &[f64], x: &[f64]| -> f64 {
            let mut t = Tape::new();
            let wv = t.leaf(Tensor::new(2, 3, w.to_vec()), true);
            let xv = t.leaf(Tensor::new(1, 2, x.to_vec()), true);
            let b = t.constant(Tensor::new(1, 3, vec![0.05, -0.1, 0.2]));
            let v = t.constant(Tensor::new(1, 3, vec![1.0, -2.0, 0.5]));
            let h = t.matmul(xv, wv);
            let hb = t.add_row(h, b);
            let s = t.sigmoid(hb);
            let p = t.mul(s, v);
            let y = t.sum_all(p);
            t.scalar_value(y)
        };

        let mut t = Tape::new();
        let wv = t.leaf(Tensor::new(2, 3, w0.clone()), true);
        let xv = t.leaf(Tensor::new(1, 2, x0.clone()), true);
        let b = t.constant(Tensor::new(1, 3, vec![0.05, -0.1, 0.2]));
        let v = t.constant(Tensor::new(1, 3, vec![1.0, -2.0, 0.5]));
        let h = t.matmul(xv, wv);
        let hb = t.add_row(h, b);
        let s = t.sigmoid(hb);
        let p = t.mul(s, v);
        let y = t.sum_all(p);
        let grads = t.backward(y, &[wv, xv]);
        let gw = t.value(grads[0].unwrap()).clone();
        let gx = t.value(grads[1].unwrap()).clone();

        for i in 0..6 {
            let fd = fd_grad(|w| eval(w, &x0), &w0, i, 1e-6);
            assert!(
                rel_err(gw.data[i], fd) < 1e-6,
                "w[{i}]: ad={} fd={}",
                gw.data[i],
                fd
            );
        }
        for i in 0..2 {
            let fd = fd_grad(|x| eval(&w0, x), &x0, i, 1e-6);
            assert!(rel_err(gx.data[i], fd) < 1e-6);
        }
    }

    // s(x) = d · ∇ₓ f with f = sum(c ⊙ (x−a)²): analytic ∇ₓ s = 2 c ⊙ d.
    #[test]
    fn second_order_grad_of_grad_is_exact() {
        let a = [0.4, -0.3, 1.2];
        let c = [2.0, 0.5, -1.5];
        let d = [0.7, -0.2, 0.9];
        let x0 = [0.1, 0.2, -0.5];

        let mut t = Tape::new();
        let xv = t.leaf(Tensor::from_row(&x0), true);
        let av = t.constant(Tensor::from_row(&a));
        let cv = t.constant(Tensor::from_row(&c));
        let dv = t.constant(Tensor::from_row(&d));
        let diff = t.sub(xv, av);
        let sq = t.square(diff);
        let term = t.mul(cv, sq);
        let f = t.sum_all(term);
        let g = t.backward(f, &[xv])[0].unwrap();
        let gd = t.mul(g, dv);
        let s = t.sum_all(gd);
        let gg = t.backward(s, &[xv])[0].unwrap();
        let got = t.value(gg).clone();
        for i in 0..3 {
            let want = 2.0 * c[i] * d[i];
            assert!((got.data[i] - want).abs() < 1e-12, "i={i}");
        }
    }

    // Second order through a nonlinear chain, checked against finite
    // differences of the first-order gradient.
    #[test]
    fn second_order_matches_fd_of_gradient() {
        let w0 = vec![0.35, -0.15, 0.6, 0.2];
        let x0 = vec![0.9, -0.7];

        let grad_x = |w: &[f64], x: &[f64]| -> Vec<f64> {
            let mut t = Tape::new();
            let wv = t.leaf(Tensor::new(2, 2, w.to_vec()), true);
            let xv = t.leaf(Tensor::new(1, 2, x.to_vec()), true);
            let h = t.matmul(xv, wv);
            let s = t.tanh(h);
            let y = t.sum_all(s);
            let g = t.backward(y, &[xv])[0].unwrap();
            let _ = wv;
            t.value(g).data.clone()
        };

        // s = sum(∇ₓ y); differentiate again w.r.t. w.
        let mut t = Tape::new();
        let wv = t.leaf(Tensor::new(2, 2, w0.clone()), true);
        let xv = t.leaf(Tensor::new(1, 2, x0.clone()), true);
        let h = t.matmul(xv, wv);
        let sgm = t.tanh(h);
        let y = t.sum_all(sgm);
        let g = t.backward(y, &[xv])[0].unwrap();
        let s = t.sum_all(g);
        let gw = t.backward(s, &[wv])[0].unwrap();
        let got = t.value(gw).clone();

        for i in 0..4 {
            let h = 1e-6;
            let mut wp = w0.clone();
            let mut wm = w0.clone();
            wp[i] += h;
            wm[i] -= h;
            let sp: f64 = grad_x(&wp, &x0).iter().sum();
            let sm: f64 = grad_x(&wm, &x0).iter().sum();
            let fd = (sp - sm) / (2.0 * h);
            assert!(
                rel_err(got.data[i], fd) < 1e-5,
                "w[{i}]: ad={} fd={}",
                got.data[i],
                fd
            );
        }
    }

    #[test]
    fn slice_pad_concat_roundtrip_gradient() {
        let x0 = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(2, 3, x0), true);
        let left = t.slice_cols(x, 0, 1);
        let right = t.slice_cols(x, 1, 2);
        let joined = t.concat_cols(left, right);
        let w = t.constant(Tensor::new(2, 3, vec![1.0, 10.0, 100.0, 1.0, 10.0, 100.0]));
        let p = t.mul(joined, w);
        let y = t.sum_all(p);
        assert_eq!(t.scalar_value(y), 1.0 + 20.0 + 300.0 + 4.0 + 50.0 + 600.0);
        let g = t.backward(y, &[x])[0].unwrap();
        assert_eq!(t.value(g).data, vec![1.0, 10.0, 100.0, 1.0, 10.0, 100.0]);
    }

    #[test]
    fn unreachable_var_has_no_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(2.0), true);
        let z = t.leaf(Tensor::scalar(3.0), true);
        let y = t.square(x);
        let grads = t.backward(y, &[x, z]);
        assert!(grads[0].is_some());
        assert!(grads[1].is_none());
    }
}
