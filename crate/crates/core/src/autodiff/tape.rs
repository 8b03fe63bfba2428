//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value; node indices
//! are therefore already a topological order and [`Tape::backward`] walks
//! them in reverse exactly once.

use std::rc::Rc;

use super::{AutodiffError, NdArray};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Destination-segment layout shared by the segment operations: row `e` of
/// the input belongs to segment `ids[e]`, and there are `count` segments.
#[derive(Debug, Clone)]
pub struct Segments {
    ids: Rc<[usize]>,
    count: usize,
}

impl Segments {
    pub fn new(ids: Vec<usize>, count: usize) -> Self {
        assert!(ids.iter().all(|&s| s < count), "segment id out of range");
        Self {
            ids: ids.into(),
            count,
        }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Minimum(Var, Var),
    Scale(Var, f32),
    Concat(Vec<Var>),
    RowGather(Var, Rc<[usize]>),
    SegmentSoftmax(Var, Segments),
    SegmentWeightedSum(Var, Var, Segments),
    MeanRows(Var),
    SumAll(Var),
    MeanAll(Var),
    Relu(Var),
    LeakyRelu(Var, f32),
    Exp(Var),
    Log(Var),
    Square(Var),
    Clamp(Var, f32, f32),
    LogSoftmaxRows(Var),
    Reshape(Var),
    GatAttention(Box<GatAttentionOp>),
}

#[derive(Debug, Clone)]
struct GatAttentionOp {
    xs: Var,
    xt: Var,
    edge_weight: Var,
    theta_e: Var,
    att: Var,
    src: Rc<[usize]>,
    dst: Segments,
    slope: f32,
    alpha: Vec<f32>,
}

/// Result of [`Tape::gat_attention`]. `alpha` is recorded as a constant.
#[derive(Debug, Clone, Copy)]
pub struct GatAttentionOutput {
    pub out: Var,
    pub alpha: Var,
}

#[derive(Debug)]
struct Node {
    value: NdArray,
    op: Op,
    requires_grad: bool,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<NdArray>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&NdArray> {
        self.grads[var.0].as_ref()
    }

    /// Gradient of `var`, or zeros when `var` does not influence the loss.
    pub fn take_or_zeros(&mut self, var: Var) -> NdArray {
        self.grads[var.0].take().unwrap_or_else(|| {
            let [r, c] = self.shapes[var.0];
            NdArray::zeros(r, c)
        })
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, lhs: &NdArray, rhs: &NdArray) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        lhs: lhs.shape(),
        rhs: rhs.shape(),
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

    pub fn value(&self, var: Var) -> &NdArray {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: NdArray, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// A leaf that receives a gradient.
    pub fn variable(&mut self, value: NdArray) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: NdArray) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn zip_same(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f32, f32) -> f32,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch(op_name, va, vb));
        }
        let [r, c] = va.shape();
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = NdArray::from_vec(r, c, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_same("minimum", a, b, |x, y| if x <= y { x } else { y }, Op::Minimum(a, b))
    }

    /// `[n, m] + [1, m]`, broadcasting the row over all rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(mismatch("add_row", va, vb));
        }
        let mut value = va.clone();
        let c = va.cols();
        for (i, x) in value.data_mut().iter_mut().enumerate() {
            *x += vb.data()[i % c];
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(value, Op::AddRow(a, bias), rg))
    }

    pub fn scale(&mut self, a: Var, factor: f32) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, factor), rg)
    }

    /// Concatenates along columns.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let first = self.value(*parts.first().ok_or(AutodiffError::EmptyConcat)?);
        let rows = first.rows();
        for p in parts {
            if self.value(*p).rows() != rows {
                return Err(mismatch("concat", first, self.value(*p)));
            }
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let value = NdArray::from_vec(rows, cols, data)?;
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    /// Selects rows `index[0], index[1], ...` of `a` (repeats allowed).
    pub fn row_gather(&mut self, a: Var, index: Rc<[usize]>) -> Result<Var, AutodiffError> {
        let va = self.value(a);
        let (n, c) = (va.rows(), va.cols());
        if let Some(&bad) = index.iter().find(|&&i| i >= n) {
            return Err(AutodiffError::IndexOutOfRange { index: bad, len: n });
        }
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            data.extend_from_slice(va.row(i));
        }
        let value = NdArray::from_vec(index.len(), c, data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::RowGather(a, index), rg))
    }

    fn check_segments(&self, op: &'static str, a: &NdArray, seg: &Segments) -> Result<(), AutodiffError> {
        if a.rows() != seg.ids.len() {
            return Err(AutodiffError::ShapeMismatch {
                op,
                lhs: a.shape(),
                rhs: [seg.ids.len(), 1],
            });
        }
        Ok(())
    }

    /// Softmax over the rows of each segment, independently per column.
    pub fn segment_softmax(&mut self, a: Var, seg: &Segments) -> Result<Var, AutodiffError> {
        let va = self.value(a);
        self.check_segments("segment_softmax", va, seg)?;
        let cols = va.cols();
        let mut max = vec![f32::NEG_INFINITY; seg.count * cols];
        for (e, &s) in seg.ids.iter().enumerate() {
            for c in 0..cols {
                let m = &mut max[s * cols + c];
                *m = m.max(va.at(e, c));
            }
        }
        let mut value = NdArray::zeros(va.rows(), cols);
        let mut denom = vec![0.0f32; seg.count * cols];
        for (e, &s) in seg.ids.iter().enumerate() {
            for c in 0..cols {
                let ex = (va.at(e, c) - max[s * cols + c]).exp();
                value.data_mut()[e * cols + c] = ex;
                denom[s * cols + c] += ex;
            }
        }
        for (e, &s) in seg.ids.iter().enumerate() {
            for c in 0..cols {
                value.data_mut()[e * cols + c] /= denom[s * cols + c];
            }
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::SegmentSoftmax(a, seg.clone()), rg))
    }

    /// `out[s] = Σ_{e: ids[e] = s} weights[e] · values[e]` with `weights`
    /// shaped `[E, 1]` and `values` `[E, D]`; returns `[count, D]`.
    pub fn segment_weighted_sum(
        &mut self,
        weights: Var,
        values: Var,
        seg: &Segments,
    ) -> Result<Var, AutodiffError> {
        let (vw, vv) = (self.value(weights), self.value(values));
        self.check_segments("segment_weighted_sum", vv, seg)?;
        if vw.cols() != 1 || vw.rows() != vv.rows() {
            return Err(mismatch("segment_weighted_sum", vw, vv));
        }
        let d = vv.cols();
        let mut value = NdArray::zeros(seg.count, d);
        for (e, &s) in seg.ids.iter().enumerate() {
            let w = vw.data()[e];
            let out = &mut value.data_mut()[s * d..(s + 1) * d];
            for (o, &x) in out.iter_mut().zip(vv.row(e)) {
                *o += w * x;
            }
        }
        let rg = self.rg(weights) || self.rg(values);
        Ok(self.push(value, Op::SegmentWeightedSum(weights, values, seg.clone()), rg))
    }

    /// Column means, `[n, m] -> [1, m]`.
    pub fn mean_over_rows(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let va = self.value(a);
        let (n, m) = (va.rows(), va.cols());
        if n == 0 {
            return Err(AutodiffError::Empty("mean_over_rows"));
        }
        let mut data = vec![0.0f32; m];
        for r in 0..n {
            for (o, x) in data.iter_mut().zip(va.row(r)) {
                *o += x;
            }
        }
        for o in &mut data {
            *o /= n as f32;
        }
        let value = NdArray::from_vec(1, m, data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::MeanRows(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = NdArray::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::SumAll(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(AutodiffError::Empty("mean"));
        }
        let value = NdArray::scalar(va.sum() / va.len() as f32);
        let rg = self.rg(a);
        Ok(self.push(value, Op::MeanAll(a), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f32) -> f32, op: Op) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f32) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { slope * x }, Op::LeakyRelu(a, slope))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f32::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f32::ln, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f32, hi: f32) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Numerically stable log-softmax of each row.
    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let (n, m) = (va.rows(), va.cols());
        let mut value = va.clone();
        for r in 0..n {
            let row = &mut value.data_mut()[r * m..(r + 1) * m];
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f32>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        let rg = self.rg(a);
        self.push(value, Op::LogSoftmaxRows(a), rg)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, AutodiffError> {
        let value = self.value(a).clone().reshaped(rows, cols)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Fused GATv2 attention and aggregation for one head.
    ///
    /// For edge `e: j -> i` with weight `w_e`:
    /// `s_e = attᵀ LeakyReLU(xs_i + xt_j + w_e θ_e)`, `α = softmax of s over
    /// the in-edges of each node`, and `out_i = Σ α_e xt_j`. Shapes: `xs`,
    /// `xt` `[N, D]`, `edge_weight` `[E, 1]`, `theta_e` `[1, D]`, `att`
    /// `[D, 1]`.
    #[allow(clippy::too_many_arguments)]
    pub fn gat_attention(
        &mut self,
        xs: Var,
        xt: Var,
        edge_weight: Var,
        theta_e: Var,
        att: Var,
        src: Rc<[usize]>,
        dst: &Segments,
        slope: f32,
    ) -> Result<GatAttentionOutput, AutodiffError> {
        let (vs, vt) = (self.value(xs), self.value(xt));
        let (vw, ve, va) = (self.value(edge_weight), self.value(theta_e), self.value(att));
        let [n, d] = vs.shape();
        let e_count = src.len();
        if vt.shape() != [n, d] {
            return Err(mismatch("gat_attention xt", vs, vt));
        }
        if vw.shape() != [e_count, 1] || dst.ids.len() != e_count {
            return Err(mismatch("gat_attention edges", vw, vs));
        }
        if ve.shape() != [1, d] || va.shape() != [d, 1] {
            return Err(mismatch("gat_attention weights", ve, va));
        }
        if dst.count != n {
            return Err(AutodiffError::ShapeMismatch {
                op: "gat_attention segments",
                lhs: [n, d],
                rhs: [dst.count, 1],
            });
        }
        if let Some(&bad) = src.iter().find(|&&j| j >= n) {
            return Err(AutodiffError::IndexOutOfRange { index: bad, len: n });
        }
        let (ve, va) = (ve.data(), va.data());
        let mut score = vec![0.0f32; e_count];
        for (e, (&j, &i)) in src.iter().zip(dst.ids.iter()).enumerate() {
            let w = vw.data()[e];
            let (ri, rj) = (vs.row(i), vt.row(j));
            let mut acc = 0.0;
            for c in 0..d {
                let pre = ri[c] + rj[c] + w * ve[c];
                acc += va[c] * if pre > 0.0 { pre } else { slope * pre };
            }
            score[e] = acc;
        }
        let mut max = vec![f32::NEG_INFINITY; n];
        for (&i, &s) in dst.ids.iter().zip(&score) {
            max[i] = max[i].max(s);
        }
        let mut denom = vec![0.0f32; n];
        for (&i, s) in dst.ids.iter().zip(score.iter_mut()) {
            *s = (*s - max[i]).exp();
            denom[i] += *s;
        }
        let alpha: Vec<f32> = dst.ids.iter().zip(&score).map(|(&i, s)| s / denom[i]).collect();
        let mut out = NdArray::zeros(n, d);
        for (e, (&j, &i)) in src.iter().zip(dst.ids.iter()).enumerate() {
            let a = alpha[e];
            let rj = vt.row(j);
            for (o, x) in out.data_mut()[i * d..(i + 1) * d].iter_mut().zip(rj) {
                *o += a * x;
            }
        }
        let alpha_arr = NdArray::from_vec(e_count, 1, alpha.clone())?;
        let rg = [xs, xt, edge_weight, theta_e, att].iter().any(|v| self.rg(*v));
        let op = GatAttentionOp {
            xs,
            xt,
            edge_weight,
            theta_e,
            att,
            src,
            dst: dst.clone(),
            slope,
            alpha,
        };
        let out = self.push(out, Op::GatAttention(Box::new(op)), rg);
        let alpha = self.constant(alpha_arr);
        Ok(GatAttentionOutput { out, alpha })
    }

    /// Reverse pass from a `[1, 1]` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        let shape = self.value(loss).shape();
        if shape != [1, 1] {
            return Err(AutodiffError::NonScalarLoss { shape });
        }
        let mut grads: Vec<Option<NdArray>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(NdArray::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<NdArray>], var: Var, delta: NdArray) {
        if !self.rg(var) {
            return;
        }
        match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&delta),
            slot => *slot = Some(delta),
        }
    }

    fn propagate(&self, idx: usize, g: &NdArray, grads: &mut [Option<NdArray>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.matmul_t(self.value(*b)));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, self.value(*a).t_matmul(g));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    self.accumulate(grads, *a, zip(g, vb, |g, b| g * b));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, zip(g, va, |g, a| g * a));
                }
            }
            Op::Minimum(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let mut ga = NdArray::zeros(g.rows(), g.cols());
                let mut gb = NdArray::zeros(g.rows(), g.cols());
                for i in 0..g.len() {
                    if va.data()[i] <= vb.data()[i] {
                        ga.data_mut()[i] = g.data()[i];
                    } else {
                        gb.data_mut()[i] = g.data()[i];
                    }
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::AddRow(a, bias) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*bias) {
                    let c = g.cols();
                    let mut gb = NdArray::zeros(1, c);
                    for r in 0..g.rows() {
                        for (o, x) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    self.accumulate(grads, *bias, gb);
                }
            }
            Op::Scale(a, factor) => {
                self.accumulate(grads, *a, g.map(|x| x * factor));
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let vp = self.value(*p);
                    let w = vp.cols();
                    if self.rg(*p) {
                        let mut gp = NdArray::zeros(vp.rows(), w);
                        for r in 0..vp.rows() {
                            gp.data_mut()[r * w..(r + 1) * w]
                                .copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        self.accumulate(grads, *p, gp);
                    }
                    offset += w;
                }
            }
            Op::RowGather(a, index) => {
                let va = self.value(*a);
                let c = va.cols();
                let mut ga = NdArray::zeros(va.rows(), c);
                for (r, &src) in index.iter().enumerate() {
                    let dst = &mut ga.data_mut()[src * c..(src + 1) * c];
                    for (o, x) in dst.iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SegmentSoftmax(a, seg) => {
                let cols = y.cols();
                let mut dot = vec![0.0f32; seg.count * cols];
                for (e, &s) in seg.ids.iter().enumerate() {
                    for c in 0..cols {
                        dot[s * cols + c] += y.at(e, c) * g.at(e, c);
                    }
                }
                let mut ga = NdArray::zeros(y.rows(), cols);
                for (e, &s) in seg.ids.iter().enumerate() {
                    for c in 0..cols {
                        ga.data_mut()[e * cols + c] = y.at(e, c) * (g.at(e, c) - dot[s * cols + c]);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SegmentWeightedSum(w, v, seg) => {
                let (vw, vv) = (self.value(*w), self.value(*v));
                let d = vv.cols();
                if self.rg(*w) {
                    let mut gw = NdArray::zeros(vw.rows(), 1);
                    for (e, &s) in seg.ids.iter().enumerate() {
                        gw.data_mut()[e] = g.row(s).iter().zip(vv.row(e)).map(|(a, b)| a * b).sum();
                    }
                    self.accumulate(grads, *w, gw);
                }
                if self.rg(*v) {
                    let mut gv = NdArray::zeros(vv.rows(), d);
                    for (e, &s) in seg.ids.iter().enumerate() {
                        let weight = vw.data()[e];
                        for (o, x) in gv.data_mut()[e * d..(e + 1) * d].iter_mut().zip(g.row(s)) {
                            *o = weight * x;
                        }
                    }
                    self.accumulate(grads, *v, gv);
                }
            }
            Op::MeanRows(a) => {
                let va = self.value(*a);
                let n = va.rows();
                let m = va.cols();
                let mut ga = NdArray::zeros(n, m);
                for r in 0..n {
                    for (o, x) in ga.data_mut()[r * m..(r + 1) * m].iter_mut().zip(g.data()) {
                        *o = x / n as f32;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SumAll(a) => {
                let [r, c] = self.value(*a).shape();
                self.accumulate(grads, *a, NdArray::filled(r, c, g.item()));
            }
            Op::MeanAll(a) => {
                let va = self.value(*a);
                let [r, c] = va.shape();
                self.accumulate(grads, *a, NdArray::filled(r, c, g.item() / va.len() as f32));
            }
            Op::Relu(a) => {
                let ga = zip(g, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                self.accumulate(grads, *a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let ga = zip(g, self.value(*a), |g, x| if x > 0.0 { g } else { slope * g });
                self.accumulate(grads, *a, ga);
            }
            Op::Exp(a) => {
                self.accumulate(grads, *a, zip(g, y, |g, y| g * y));
            }
            Op::Log(a) => {
                self.accumulate(grads, *a, zip(g, self.value(*a), |g, x| g / x));
            }
            Op::Square(a) => {
                self.accumulate(grads, *a, zip(g, self.value(*a), |g, x| 2.0 * g * x));
            }
            Op::Clamp(a, lo, hi) => {
                let ga = zip(g, self.value(*a), |g, x| if x >= *lo && x <= *hi { g } else { 0.0 });
                self.accumulate(grads, *a, ga);
            }
            Op::LogSoftmaxRows(a) => {
                let (n, m) = (y.rows(), y.cols());
                let mut ga = NdArray::zeros(n, m);
                for r in 0..n {
                    let gs: f32 = g.row(r).iter().sum();
                    for c in 0..m {
                        ga.data_mut()[r * m + c] = g.at(r, c) - y.at(r, c).exp() * gs;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Reshape(a) => {
                let [r, c] = self.value(*a).shape();
                let ga = g.clone().reshaped(r, c).expect("reshape preserves length");
                self.accumulate(grads, *a, ga);
            }
            Op::GatAttention(op) => self.gat_attention_backward(op, g, grads),
        }
    }

    fn gat_attention_backward(&self, op: &GatAttentionOp, g: &NdArray, grads: &mut [Option<NdArray>]) {
        let (vs, vt) = (self.value(op.xs), self.value(op.xt));
        let vw = self.value(op.edge_weight);
        let ve = self.value(op.theta_e).data();
        let va = self.value(op.att).data();
        let [n, d] = vs.shape();
        let ids = &op.dst.ids;
        let alpha = &op.alpha;
        let mut gs = NdArray::zeros(n, d);
        let mut gt = NdArray::zeros(n, d);
        let mut gw = NdArray::zeros(vw.rows(), 1);
        let mut ge = vec![0.0f32; d];
        let mut ga = vec![0.0f32; d];

        let mut dalpha = vec![0.0f32; alpha.len()];
        let mut weighted = vec![0.0f32; n];
        for (e, (&j, &i)) in op.src.iter().zip(ids.iter()).enumerate() {
            let gi = g.row(i);
            let rj = vt.row(j);
            dalpha[e] = gi.iter().zip(rj).map(|(a, b)| a * b).sum();
            weighted[i] += alpha[e] * dalpha[e];
            for (o, x) in gt.data_mut()[j * d..(j + 1) * d].iter_mut().zip(gi) {
                *o += alpha[e] * x;
            }
        }
        for (e, (&j, &i)) in op.src.iter().zip(ids.iter()).enumerate() {
            let ds = alpha[e] * (dalpha[e] - weighted[i]);
            if ds == 0.0 {
                continue;
            }
            let w = vw.data()[e];
            let (ri, rj) = (vs.row(i), vt.row(j));
            let mut dw = 0.0;
            for c in 0..d {
                let pre = ri[c] + rj[c] + w * ve[c];
                let (z, slope) = if pre > 0.0 { (pre, 1.0) } else { (op.slope * pre, op.slope) };
                ga[c] += ds * z;
                let dpre = ds * va[c] * slope;
                gs.data_mut()[i * d + c] += dpre;
                gt.data_mut()[j * d + c] += dpre;
                ge[c] += dpre * w;
                dw += dpre * ve[c];
            }
            gw.data_mut()[e] = dw;
        }
        self.accumulate(grads, op.xs, gs);
        self.accumulate(grads, op.xt, gt);
        self.accumulate(grads, op.edge_weight, gw);
        self.accumulate(grads, op.theta_e, NdArray::from_vec(1, d, ge).expect("theta_e shape"));
        self.accumulate(grads, op.att, NdArray::from_vec(d, 1, ga).expect("att shape"));
    }
}

fn zip(a: &NdArray, b: &NdArray, f: impl Fn(f32, f32) -> f32) -> NdArray {
    let [r, c] = a.shape();
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    NdArray::from_vec(r, c, data).expect("same shape")
}
