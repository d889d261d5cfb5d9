//! Reverse-mode differentiation over a fixed set of matrix ops.
//!
//! A [`Tape`] records every op applied during a forward pass. Parameters are
//! leaves that borrow from a [`ParamStore`]; constants are leaves without
//! gradient. [`Tape::backward`] walks the records in reverse and returns
//! gradients only for parameters the loss actually reaches.

use super::params::{ParamId, ParamStore};
use super::tensor::dot;
use super::Matrix;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub(super) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Param(ParamId),
    Const,
    Gather(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    Relu(Var),
    LogFloor(Var, f64),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Matrix,
        rstd: Vec<f64>,
    },
    NormalizeRows(Var, Vec<f64>),
    SumRows(Var),
    Pick(Var, Vec<(usize, usize)>),
    Sum(Var),
}

struct Node {
    op: Op,
    value: Matrix,
}

/// Parameter gradients indexed by [`ParamId`]; `None` means unreached.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn new(n_params: usize) -> Self {
        Self {
            grads: vec![None; n_params],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }

    pub fn accumulate(&mut self, id: ParamId, g: Matrix) {
        match &mut self.grads[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Adds `other` into `self`; used for ordered reduction over a batch.
    pub fn merge(&mut self, other: &Gradients) {
        if self.grads.len() < other.grads.len() {
            self.grads.resize(other.grads.len(), None);
        }
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g.clone());
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.scale_assign(s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(Matrix::is_finite)
    }
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn value(&self, v: Var) -> &Matrix {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "scalar of non-scalar node");
        m.get(0, 0)
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(Op::Param(id), Matrix::default())
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Const, value)
    }

    /// Rows `ids` of `src`.
    pub fn gather(&mut self, src: Var, ids: &[usize]) -> Var {
        let s = self.value(src);
        let mut data = Vec::with_capacity(ids.len() * s.cols());
        for &i in ids {
            data.extend_from_slice(s.row(i));
        }
        let out = Matrix::from_vec(ids.len(), s.cols(), data);
        self.push(Op::Gather(src, ids.to_vec()), out)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(m.data());
            rows += m.rows();
        }
        self.push(Op::ConcatRows(parts.to_vec()), Matrix::from_vec(rows, cols, data))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[off..off + m.cols()].copy_from_slice(m.row(r));
            }
            off += m.cols();
        }
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    pub fn slice_cols(&mut self, src: Var, start: usize, len: usize) -> Var {
        let s = self.value(src);
        let mut out = Matrix::zeros(s.rows(), len);
        for r in 0..s.rows() {
            out.row_mut(r).copy_from_slice(&s.row(r)[start..start + len]);
        }
        self.push(Op::SliceCols(src, start), out)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), out)
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_bt(self.value(b));
        self.push(Op::MatMulBt(a, b), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), out)
    }

    /// Adds the `1×c` row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "add_row expects a row vector");
        let mut out = self.value(a).clone();
        assert_eq!(out.cols(), r.cols(), "add_row width");
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        self.push(Op::AddRow(a, row), out)
    }

    /// Multiplies row `i` of `a` by `col[i]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let c = self.value(col);
        assert_eq!(c.cols(), 1, "mul_col expects a column vector");
        let mut out = self.value(a).clone();
        assert_eq!(out.rows(), c.rows(), "mul_col height");
        for i in 0..out.rows() {
            let s = c.get(i, 0);
            out.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        self.push(Op::MulCol(a, col), out)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(Op::Sigmoid(a), out)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map(gelu);
        self.push(Op::Gelu(a), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), out)
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log_floor(&mut self, a: Var, floor: f64) -> Var {
        let out = self.value(a).map(|x| x.max(floor).ln());
        self.push(Op::LogFloor(a, floor), out)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let s = self.value(a);
        let mut out = Matrix::zeros(s.rows(), s.cols());
        for r in 0..s.rows() {
            out.row_mut(r)
                .copy_from_slice(&super::tensor::softmax(s.row(r)));
        }
        self.push(Op::SoftmaxRows(a), out)
    }

    /// Row-wise log-softmax. Entries of `-inf` act as masked out.
    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let s = self.value(a);
        let mut out = Matrix::zeros(s.rows(), s.cols());
        for r in 0..s.rows() {
            let row = s.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            for (o, &x) in out.row_mut(r).iter_mut().zip(row) {
                *o = x - lse;
            }
        }
        self.push(Op::LogSoftmaxRows(a), out)
    }

    /// Row-wise layer normalisation with `1×c` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let (g, b) = (self.value(gain), self.value(bias));
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd.push(rs);
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat.set(r, c, h);
                out.set(r, c, h * g.get(0, c) + b.get(0, c));
            }
        }
        self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            out,
        )
    }

    /// Scales every row to unit L2 norm. Errors on a zero row.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a);
        let mut out = s.clone();
        let mut norms = Vec::with_capacity(s.rows());
        for r in 0..s.rows() {
            let n = super::tensor::norm(s.row(r));
            if n == 0.0 || !n.is_finite() {
                return Err(Error::ZeroNorm);
            }
            norms.push(n);
            out.row_mut(r).iter_mut().for_each(|x| *x /= n);
        }
        Ok(self.push(Op::NormalizeRows(a, norms), out))
    }

    /// Sum across columns; `r×c → r×1`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let s = self.value(a);
        let data = (0..s.rows()).map(|r| s.row(r).iter().sum()).collect();
        self.push(Op::SumRows(a), Matrix::from_vec(s.rows(), 1, data))
    }

    /// Selected `(row, col)` entries as an `n×1` column.
    pub fn pick(&mut self, a: Var, idx: &[(usize, usize)]) -> Var {
        let s = self.value(a);
        let data = idx.iter().map(|&(r, c)| s.get(r, c)).collect();
        self.push(Op::Pick(a, idx.to_vec()), Matrix::from_vec(idx.len(), 1, data))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Matrix::from_vec(1, 1, vec![total]))
    }

    /// Gradients of the scalar `loss` with respect to every reached
    /// parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Shape(format!("loss must be 1x1, got {:?}", lv.shape())));
        }
        if !lv.get(0, 0).is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Matrix>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut out = Gradients::new(self.params.len());

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = &node.value;
            match &node.op {
                Op::Param(id) => out.accumulate(*id, g),
                Op::Const => {}
                Op::Gather(src, ids) => {
                    let (rows, cols) = self.shape(*src);
                    let dst = slot(&mut grads, *src, rows, cols);
                    for (k, &r) in ids.iter().enumerate() {
                        for (d, v) in dst.row_mut(r).iter_mut().zip(g.row(k)) {
                            *d += v;
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (rows, cols) = self.shape(p);
                        let part = Matrix::from_vec(
                            rows,
                            cols,
                            g.data()[off * cols..(off + rows) * cols].to_vec(),
                        );
                        add_into(&mut grads, p, part);
                        off += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (rows, cols) = self.shape(p);
                        let mut part = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            part.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        add_into(&mut grads, p, part);
                        off += cols;
                    }
                }
                Op::SliceCols(src, start) => {
                    let (rows, cols) = self.shape(*src);
                    let dst = slot(&mut grads, *src, rows, cols);
                    for r in 0..rows {
                        for (d, v) in dst.row_mut(r)[*start..*start + g.cols()]
                            .iter_mut()
                            .zip(g.row(r))
                        {
                            *d += v;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    add_into(&mut grads, *a, g.matmul_bt(self.value(*b)));
                    add_into(&mut grads, *b, self.value(*a).matmul_at(&g));
                }
                Op::MatMulBt(a, b) => {
                    add_into(&mut grads, *a, g.matmul(self.value(*b)));
                    add_into(&mut grads, *b, g.matmul_at(self.value(*a)));
                }
                Op::Add(a, b) => {
                    add_into(&mut grads, *b, g.clone());
                    add_into(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    add_into(&mut grads, *b, g.map(|x| -x));
                    add_into(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    add_into(&mut grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                    add_into(&mut grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
                Op::AddRow(a, row) => {
                    let mut dr = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in dr.data_mut().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    add_into(&mut grads, *row, dr);
                    add_into(&mut grads, *a, g);
                }
                Op::MulCol(a, col) => {
                    let (av, cv) = (self.value(*a), self.value(*col));
                    let mut da = g.clone();
                    let mut dc = Matrix::zeros(cv.rows(), 1);
                    for r in 0..g.rows() {
                        let s = cv.get(r, 0);
                        da.row_mut(r).iter_mut().for_each(|x| *x *= s);
                        dc.set(r, 0, dot(g.row(r), av.row(r)));
                    }
                    add_into(&mut grads, *a, da);
                    add_into(&mut grads, *col, dc);
                }
                Op::Scale(a, s) => add_into(&mut grads, *a, g.map(|x| x * s)),
                Op::Tanh(a) => add_into(&mut grads, *a, g.zip_map(y, |gv, t| gv * (1.0 - t * t))),
                Op::Sigmoid(a) => {
                    add_into(&mut grads, *a, g.zip_map(y, |gv, s| gv * s * (1.0 - s)))
                }
                Op::Gelu(a) => {
                    let d = self.value(*a).map(|x| {
                        let u = GELU_C * (x + 0.044715 * x * x * x);
                        let t = u.tanh();
                        0.5 * (1.0 + t)
                            + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
                    });
                    add_into(&mut grads, *a, g.zip_map(&d, |gv, dv| gv * dv));
                }
                Op::Relu(a) => add_into(
                    &mut grads,
                    *a,
                    g.zip_map(self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 }),
                ),
                Op::LogFloor(a, floor) => add_into(
                    &mut grads,
                    *a,
                    g.zip_map(self.value(*a), |gv, x| if x > *floor { gv / x } else { 0.0 }),
                ),
                Op::SoftmaxRows(a) => {
                    let mut d = Matrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let s = dot(g.row(r), y.row(r));
                        for ((o, &gv), &p) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = p * (gv - s);
                        }
                    }
                    add_into(&mut grads, *a, d);
                }
                Op::LogSoftmaxRows(a) => {
                    let mut d = Matrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let s: f64 = g.row(r).iter().sum();
                        for ((o, &gv), &ly) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = gv - ly.exp() * s;
                        }
                    }
                    add_into(&mut grads, *a, d);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let gv = self.value(*gain);
                    let (rows, cols) = g.shape();
                    let mut dgain = Matrix::zeros(1, cols);
                    let mut dbias = Matrix::zeros(1, cols);
                    let mut dx = Matrix::zeros(rows, cols);
                    let mut dxhat = vec![0.0; cols];
                    for r in 0..rows {
                        let (gr, hr) = (g.row(r), xhat.row(r));
                        for c in 0..cols {
                            dgain.data_mut()[c] += gr[c] * hr[c];
                            dbias.data_mut()[c] += gr[c];
                            dxhat[c] = gr[c] * gv.get(0, c);
                        }
                        let m1 = dxhat.iter().sum::<f64>() / cols as f64;
                        let m2 = dot(&dxhat, hr) / cols as f64;
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = rstd[r] * (dxhat[c] - m1 - hr[c] * m2);
                        }
                    }
                    add_into(&mut grads, *gain, dgain);
                    add_into(&mut grads, *bias, dbias);
                    add_into(&mut grads, *x, dx);
                }
                Op::NormalizeRows(a, norms) => {
                    let mut d = Matrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let proj = dot(g.row(r), y.row(r));
                        for ((o, &gv), &u) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = (gv - u * proj) / norms[r];
                        }
                    }
                    add_into(&mut grads, *a, d);
                }
                Op::SumRows(a) => {
                    let (rows, cols) = self.shape(*a);
                    let mut d = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        let v = g.get(r, 0);
                        d.row_mut(r).iter_mut().for_each(|x| *x = v);
                    }
                    add_into(&mut grads, *a, d);
                }
                Op::Pick(a, idx) => {
                    let (rows, cols) = self.shape(*a);
                    let dst = slot(&mut grads, *a, rows, cols);
                    for (k, &(r, c)) in idx.iter().enumerate() {
                        let cur = dst.get(r, c);
                        dst.set(r, c, cur + g.get(k, 0));
                    }
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.shape(*a);
                    add_into(&mut grads, *a, Matrix::filled(rows, cols, g.get(0, 0)));
                }
            }
        }
        Ok(out)
    }
}

fn slot(grads: &mut [Option<Matrix>], v: Var, rows: usize, cols: usize) -> &mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(rows, cols))
}

fn add_into(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        s @ None => *s = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_one_embedding_row() {
        let mut store = ParamStore::new();
        let e = store.add("embed", Matrix::from_vec(3, 2, vec![1., 2., 3., 4., 5., 6.]));
        let other = store.add("unused", Matrix::zeros(2, 2));
        let mut t = Tape::new(&store);
        let ev = t.param(e);
        let row = t.gather(ev, &[1]);
        let loss = t.sum(row);
        assert_eq!(t.scalar(loss), 7.0);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(e).unwrap().data(), &[0., 0., 1., 1., 0., 0.]);
        assert!(g.get(other).is_none());
    }

    #[test]
    fn non_finite_loss_is_rejected() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let c = t.constant(Matrix::filled(1, 1, 0.0));
        let l = t.log_floor(c, 0.0);
        assert!(matches!(t.backward(l), Err(Error::NonFinite(_))));
    }

    #[test]
    fn normalize_rejects_zero_rows() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let c = t.constant(Matrix::zeros(1, 3));
        assert!(matches!(t.normalize_rows(c), Err(Error::ZeroNorm)));
    }

    #[test]
    fn masked_log_softmax_has_zero_gradient_outside_mask() {
        let mut store = ParamStore::new();
        let p = store.add("x", Matrix::row_vector(vec![0.3, -0.2, 0.9]));
        let mut t = Tape::new(&store);
        let x = t.param(p);
        let mask = t.constant(Matrix::row_vector(vec![0.0, 0.0, f64::NEG_INFINITY]));
        let m = t.add(x, mask);
        let ls = t.log_softmax_rows(m);
        let picked = t.pick(ls, &[(0, 0)]);
        let loss = t.sum(picked);
        let g = t.backward(loss).unwrap();
        let gx = g.get(p).unwrap();
        assert_eq!(gx.get(0, 2), 0.0);
        assert!((gx.get(0, 0) + gx.get(0, 1)).abs() < 1e-12);
    }
}
