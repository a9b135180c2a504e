use std::sync::Arc;

use super::{Result, SparseRelation, Tensor, TensorError};
use crate::scalar::Scalar;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// SELU scale, from the self-normalizing networks publication.
pub const SELU_LAMBDA: f64 = 1.0507009873554805;
/// SELU negative-branch saturation.
pub const SELU_ALPHA: f64 = 1.673263242354377;
/// Variance floor of layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

enum Op<S: Scalar> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Propagate(Var, Arc<SparseRelation<S>>),
    ScaleRows(Var, Arc<Vec<S>>),
    SegmentSum {
        x: Var,
        groups: usize,
        weights: Arc<Vec<S>>,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<S>,
        rstd: Vec<S>,
    },
    Relu(Var),
    Selu(Var),
    Conv {
        x: Var,
        w: Var,
        dilation: usize,
        pad: usize,
    },
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        class_weights: Vec<S>,
        probs: Vec<S>,
    },
}

struct Node<S: Scalar> {
    value: Tensor<S>,
    op: Op<S>,
}

/// Records differentiable operations in execution order and replays them
/// in reverse to fill the gradients of every `requires_grad` leaf.
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    consumed: bool,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf; its `requires_grad` flag is kept.
    pub fn leaf(&mut self, mut value: Tensor<S>) -> Var {
        value.grad = None;
        self.push(value, Op::Leaf)
    }

    pub fn constant(&mut self, mut value: Tensor<S>) -> Var {
        value.requires_grad = false;
        self.leaf(value)
    }

    pub fn param(&mut self, mut value: Tensor<S>) -> Var {
        value.requires_grad = true;
        self.leaf(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    /// Gradient of a `requires_grad` leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, shape: Vec<usize>, data: Vec<S>, inputs: &[Var], op: Op<S>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].value.requires_grad);
        let value = Tensor {
            shape,
            data,
            requires_grad,
            grad: None,
        };
        self.push(value, op)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        }
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.mismatch("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![S::zero(); m * n];
        S::gemm(
            m,
            k,
            n,
            S::one(),
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (n, 1),
            S::zero(),
            &mut out,
            (n, 1),
        );
        Ok(self.derived(vec![m, n], out, &[a, b], Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("add", a, b));
        }
        let out = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
        let shape = self.shape(a).to_vec();
        Ok(self.derived(shape, out, &[a, b], Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("mul", a, b));
        }
        let out = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let shape = self.shape(a).to_vec();
        Ok(self.derived(shape, out, &[a, b], Op::Mul(a, b)))
    }

    /// Adds a `[F]` vector to every row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let cols = self.value(x).cols();
        if self.shape(b) != [cols] {
            return Err(self.mismatch("add_bias", x, b));
        }
        let bias = self.value(b).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(cols.max(1)) {
            for (o, &bb) in row.iter_mut().zip(bias) {
                *o += bb;
            }
        }
        let shape = self.shape(x).to_vec();
        Ok(self.derived(shape, out, &[x, b], Op::AddBias(x, b)))
    }

    /// Affine map `x w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    /// Graph propagation: output row `i` is `sum_j w(j -> i) h_j` over the
    /// normalized edges of `rel`.
    pub fn propagate(&mut self, rel: &Arc<SparseRelation<S>>, h: Var) -> Result<Var> {
        if !rel.is_normalized() {
            return Err(TensorError::NotNormalized);
        }
        let hv = self.value(h);
        if hv.rows() != rel.n_vertices() {
            return Err(TensorError::Relation(format!(
                "relation over {} vertices applied to {} rows",
                rel.n_vertices(),
                hv.rows()
            )));
        }
        let f = hv.cols();
        let src = hv.data();
        let mut out = vec![S::zero(); src.len()];
        for e in rel.edges() {
            let from = &src[e.src * f..(e.src + 1) * f];
            let to = &mut out[e.dst * f..(e.dst + 1) * f];
            for (o, &x) in to.iter_mut().zip(from) {
                *o += e.weight * x;
            }
        }
        let shape = hv.shape().to_vec();
        Ok(self.derived(shape, out, &[h], Op::Propagate(h, Arc::clone(rel))))
    }

    /// Multiplies row `i` by the constant `weights[i]`.
    pub fn scale_rows(&mut self, x: Var, weights: &Arc<Vec<S>>) -> Result<Var> {
        let xv = self.value(x);
        if xv.rows() != weights.len() {
            return Err(TensorError::Parameter {
                op: "scale_rows",
                reason: format!("{} weights for {} rows", weights.len(), xv.rows()),
            });
        }
        let f = xv.cols();
        let mut out = xv.data().to_vec();
        for (row, &w) in out.chunks_mut(f.max(1)).zip(weights.iter()) {
            for o in row {
                *o *= w;
            }
        }
        let shape = xv.shape().to_vec();
        Ok(self.derived(shape, out, &[x], Op::ScaleRows(x, Arc::clone(weights))))
    }

    /// Splits the rows of `x` into `groups` equal consecutive blocks and
    /// returns the weighted sum of each block: `[groups, F]`.
    pub fn segment_sum(&mut self, x: Var, groups: usize, weights: &Arc<Vec<S>>) -> Result<Var> {
        let xv = self.value(x);
        let rows = xv.rows();
        if groups == 0 || !rows.is_multiple_of(groups) || weights.len() != rows {
            return Err(TensorError::Parameter {
                op: "segment_sum",
                reason: format!("{rows} rows, {groups} groups, {} weights", weights.len()),
            });
        }
        let per = rows / groups;
        let f = xv.cols();
        let src = xv.data();
        let mut out = vec![S::zero(); groups * f];
        for r in 0..rows {
            let w = weights[r];
            if w == S::zero() {
                continue;
            }
            let g = r / per;
            for (o, &v) in out[g * f..(g + 1) * f]
                .iter_mut()
                .zip(&src[r * f..(r + 1) * f])
            {
                *o += w * v;
            }
        }
        let op = Op::SegmentSum {
            x,
            groups,
            weights: Arc::clone(weights),
        };
        Ok(self.derived(vec![groups, f], out, &[x], op))
    }

    /// Row-wise layer normalization with affine `gain` and `bias` of
    /// length `F`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let f = self.value(x).cols();
        if f == 0 {
            return Err(TensorError::Parameter {
                op: "layer_norm",
                reason: "zero feature width".into(),
            });
        }
        if self.shape(gain) != [f] {
            return Err(self.mismatch("layer_norm", x, gain));
        }
        if self.shape(bias) != [f] {
            return Err(self.mismatch("layer_norm", x, bias));
        }
        let eps = S::lit(LAYER_NORM_EPS);
        let inv_f = S::lit(1.0 / f as f64);
        let xv = self.value(x);
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut xhat = vec![S::zero(); xv.len()];
        let mut rstd = Vec::with_capacity(xv.rows());
        let mut out = vec![S::zero(); xv.len()];
        for (r, row) in xv.data().chunks(f).enumerate() {
            let mean = row.iter().copied().sum::<S>() * inv_f;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() * inv_f;
            let rs = (var + eps).sqrt().recip();
            rstd.push(rs);
            let xh = &mut xhat[r * f..(r + 1) * f];
            let o = &mut out[r * f..(r + 1) * f];
            for j in 0..f {
                xh[j] = (row[j] - mean) * rs;
                o[j] = g[j] * xh[j] + b[j];
            }
        }
        let shape = xv.shape().to_vec();
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            rstd,
        };
        Ok(self.derived(shape, out, &[x, gain, bias], op))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out = xv.data().iter().map(|&v| v.max(S::zero())).collect();
        let shape = xv.shape().to_vec();
        self.derived(shape, out, &[x], Op::Relu(x))
    }

    pub fn selu(&mut self, x: Var) -> Var {
        let (lambda, alpha) = (S::lit(SELU_LAMBDA), S::lit(SELU_ALPHA));
        let xv = self.value(x);
        let out = xv
            .data()
            .iter()
            .map(|&v| {
                if v > S::zero() {
                    lambda * v
                } else {
                    lambda * alpha * v.exp_m1()
                }
            })
            .collect();
        let shape = xv.shape().to_vec();
        self.derived(shape, out, &[x], Op::Selu(x))
    }

    /// Same-length dilated convolution along the leading (time) axis.
    ///
    /// `x` is `[T, B, C_in]` (B independent series), `w` is
    /// `[C_out, C_in, K]`; tap `k` reads time `t + k * dilation - pad`,
    /// out-of-range taps read zero. The output is `[T, B, C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, dilation: usize, pad: usize) -> Result<Var> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 3 || sw.len() != 3 || sx[2] != sw[1] {
            return Err(self.mismatch("conv1d", x, w));
        }
        let (t_len, batch, c_in) = (sx[0], sx[1], sx[2]);
        let (c_out, k_len) = (sw[0], sw[2]);
        if dilation == 0 || k_len == 0 {
            return Err(TensorError::Parameter {
                op: "conv1d",
                reason: "dilation and kernel size must be positive".into(),
            });
        }
        let span = dilation * (k_len - 1);
        if 2 * pad != span {
            return Err(TensorError::Parameter {
                op: "conv1d",
                reason: format!(
                    "padding {pad} does not preserve length for kernel {k_len}, dilation {dilation}"
                ),
            });
        }
        let mut out = vec![S::zero(); t_len * batch * c_out];
        let (xd, wd) = (self.value(x).data(), self.value(w).data());
        for k in 0..k_len {
            let Some((t0, t1, src0)) = conv_range(t_len, k * dilation, pad) else {
                continue;
            };
            let rows = (t1 - t0) * batch;
            S::gemm(
                rows,
                c_in,
                c_out,
                S::one(),
                &xd[src0 * batch * c_in..],
                (c_in, 1),
                &wd[k..],
                (k_len, c_in * k_len),
                S::one(),
                &mut out[t0 * batch * c_out..],
                (c_out, 1),
            );
        }
        let op = Op::Conv {
            x,
            w,
            dilation,
            pad,
        };
        Ok(self.derived(vec![t_len, batch, c_out], out, &[x, w], op))
    }

    /// Single-series convolution: `x` is `[C_in, T]`, output `[C_out, T]`.
    pub fn conv1d_dilated(&mut self, x: Var, w: Var, dilation: usize, pad: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(self.mismatch("conv1d_dilated", x, w));
        }
        let xt = self.transpose(x)?;
        let x3 = self.reshape(xt, vec![s[1], 1, s[0]])?;
        let y3 = self.conv1d(x3, w, dilation, pad)?;
        let c_out = self.shape(y3)[2];
        let y2 = self.reshape(y3, vec![s[1], c_out])?;
        self.transpose(y2)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(TensorError::Parameter {
                op: "transpose",
                reason: format!("expected a matrix, got shape {s:?}"),
            });
        }
        let (r, c) = (s[0], s[1]);
        let src = self.value(x).data();
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        Ok(self.derived(vec![c, r], out, &[x], Op::Transpose(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let xv = self.value(x);
        if shape.iter().product::<usize>() != xv.len() {
            return Err(TensorError::DataLength {
                expected: shape.iter().product(),
                shape,
                actual: xv.len(),
            });
        }
        let data = xv.data().to_vec();
        Ok(self.derived(shape, data, &[x], Op::Reshape(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.derived(vec![], vec![s], &[x], Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = S::lit(xv.len().max(1) as f64);
        let s = xv.data().iter().copied().sum::<S>() / n;
        self.derived(vec![], vec![s], &[x], Op::Mean(x))
    }

    /// Mean over rows of `w[y_t] * -log softmax(logits_t)[y_t]`.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        class_weights: &[S],
    ) -> Result<Var> {
        let lv = self.value(logits);
        let s = lv.shape();
        if s.len() != 2 || s[0] != targets.len() || s[1] != class_weights.len() {
            return Err(TensorError::Parameter {
                op: "weighted_cross_entropy",
                reason: format!(
                    "logits {:?}, {} targets, {} class weights",
                    s,
                    targets.len(),
                    class_weights.len()
                ),
            });
        }
        let (t_len, c) = (s[0], s[1]);
        if let Some(&bad) = targets.iter().find(|&&y| y >= c) {
            return Err(TensorError::Parameter {
                op: "weighted_cross_entropy",
                reason: format!("target {bad} outside {c} classes"),
            });
        }
        let mut probs = vec![S::zero(); t_len * c];
        let mut total = S::zero();
        for (t, row) in lv.data().chunks(c).enumerate() {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let z: S = row.iter().map(|&v| (v - max).exp()).sum();
            let log_z = z.ln() + max;
            for j in 0..c {
                probs[t * c + j] = (row[j] - log_z).exp();
            }
            total += class_weights[targets[t]] * (log_z - row[targets[t]]);
        }
        let loss = total / S::lit(t_len.max(1) as f64);
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            class_weights: class_weights.to_vec(),
            probs,
        };
        Ok(self.derived(vec![], vec![loss], &[logits], op))
    }

    /// Reverse sweep from a scalar `loss`; afterwards every `requires_grad`
    /// leaf holds its gradient and the recorded operations are dropped.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(TensorError::TapeConsumed);
        }
        let loss_value = self.value(loss);
        if loss_value.len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<S>>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(vec![S::one()]);

        for i in (0..=loss.0).rev() {
            let Some(dout) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.value.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                grads[i] = Some(dout);
                continue;
            }
            self.backprop(i, &dout, &mut grads);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if matches!(node.op, Op::Leaf) && node.value.requires_grad {
                node.value.grad = Some(g.unwrap_or_else(|| vec![S::zero(); node.value.len()]));
            }
            node.op = Op::Leaf;
        }
        self.consumed = true;
        Ok(())
    }

    fn backprop(&self, i: usize, dout: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if let Some(ga) = self.slot(*a, grads) {
                    // dA = dC * B^T
                    S::gemm(
                        m,
                        n,
                        k,
                        S::one(),
                        dout,
                        (n, 1),
                        bv.data(),
                        (1, n),
                        S::one(),
                        ga,
                        (k, 1),
                    );
                }
                if let Some(gb) = self.slot(*b, grads) {
                    // dB = A^T * dC
                    S::gemm(
                        k,
                        m,
                        n,
                        S::one(),
                        av.data(),
                        (1, k),
                        dout,
                        (n, 1),
                        S::one(),
                        gb,
                        (n, 1),
                    );
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(g) = self.slot(*v, grads) {
                        axpy(g, dout);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(g) = self.slot(*a, grads) {
                    for ((g, &d), &y) in g.iter_mut().zip(dout).zip(bv) {
                        *g += d * y;
                    }
                }
                if let Some(g) = self.slot(*b, grads) {
                    for ((g, &d), &x) in g.iter_mut().zip(dout).zip(av) {
                        *g += d * x;
                    }
                }
            }
            Op::AddBias(x, b) => {
                if let Some(g) = self.slot(*x, grads) {
                    axpy(g, dout);
                }
                let cols = self.value(*b).len();
                if let Some(g) = self.slot(*b, grads) {
                    for row in dout.chunks(cols.max(1)) {
                        axpy(g, row);
                    }
                }
            }
            Op::Propagate(h, rel) => {
                let f = self.value(*h).cols();
                if let Some(g) = self.slot(*h, grads) {
                    for e in rel.edges() {
                        let from = &dout[e.dst * f..(e.dst + 1) * f];
                        let to = &mut g[e.src * f..(e.src + 1) * f];
                        for (o, &d) in to.iter_mut().zip(from) {
                            *o += e.weight * d;
                        }
                    }
                }
            }
            Op::ScaleRows(x, w) => {
                let f = self.value(*x).cols().max(1);
                if let Some(g) = self.slot(*x, grads) {
                    for ((grow, drow), &wr) in g.chunks_mut(f).zip(dout.chunks(f)).zip(w.iter()) {
                        for (o, &d) in grow.iter_mut().zip(drow) {
                            *o += wr * d;
                        }
                    }
                }
            }
            Op::SegmentSum { x, groups, weights } => {
                let xv = self.value(*x);
                let (rows, f) = (xv.rows(), xv.cols());
                let per = rows / groups;
                if let Some(g) = self.slot(*x, grads) {
                    for r in 0..rows {
                        let w = weights[r];
                        if w == S::zero() {
                            continue;
                        }
                        let grp = r / per;
                        for (o, &d) in g[r * f..(r + 1) * f]
                            .iter_mut()
                            .zip(&dout[grp * f..(grp + 1) * f])
                        {
                            *o += w * d;
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let f = self.value(*gain).len();
                let gv = self.value(*gain).data();
                if let Some(g) = self.slot(*gain, grads) {
                    for (drow, xrow) in dout.chunks(f).zip(xhat.chunks(f)) {
                        for j in 0..f {
                            g[j] += drow[j] * xrow[j];
                        }
                    }
                }
                if let Some(g) = self.slot(*bias, grads) {
                    for drow in dout.chunks(f) {
                        axpy(g, drow);
                    }
                }
                if let Some(g) = self.slot(*x, grads) {
                    let inv_f = S::lit(1.0 / f as f64);
                    let mut dxhat = vec![S::zero(); f];
                    for (r, (drow, xrow)) in dout.chunks(f).zip(xhat.chunks(f)).enumerate() {
                        let mut mean_d = S::zero();
                        let mut mean_dx = S::zero();
                        for j in 0..f {
                            dxhat[j] = drow[j] * gv[j];
                            mean_d += dxhat[j];
                            mean_dx += dxhat[j] * xrow[j];
                        }
                        mean_d *= inv_f;
                        mean_dx *= inv_f;
                        let grow = &mut g[r * f..(r + 1) * f];
                        for j in 0..f {
                            grow[j] += rstd[r] * (dxhat[j] - mean_d - xrow[j] * mean_dx);
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                if let Some(g) = self.slot(*x, grads) {
                    for ((g, &d), &v) in g.iter_mut().zip(dout).zip(xv) {
                        if v > S::zero() {
                            *g += d;
                        }
                    }
                }
            }
            Op::Selu(x) => {
                let (lambda, alpha) = (S::lit(SELU_LAMBDA), S::lit(SELU_ALPHA));
                let xv = self.value(*x).data();
                if let Some(g) = self.slot(*x, grads) {
                    for ((g, &d), &v) in g.iter_mut().zip(dout).zip(xv) {
                        let slope = if v > S::zero() {
                            lambda
                        } else {
                            lambda * alpha * v.exp()
                        };
                        *g += d * slope;
                    }
                }
            }
            Op::Conv {
                x,
                w,
                dilation,
                pad,
            } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (t_len, batch, c_in) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let (c_out, k_len) = (wv.shape()[0], wv.shape()[2]);
                if let Some(gx) = self.slot(*x, grads) {
                    for k in 0..k_len {
                        let Some((t0, t1, src0)) = conv_range(t_len, k * dilation, *pad) else {
                            continue;
                        };
                        let rows = (t1 - t0) * batch;
                        S::gemm(
                            rows,
                            c_out,
                            c_in,
                            S::one(),
                            &dout[t0 * batch * c_out..],
                            (c_out, 1),
                            &wv.data()[k..],
                            (c_in * k_len, k_len),
                            S::one(),
                            &mut gx[src0 * batch * c_in..],
                            (c_in, 1),
                        );
                    }
                }
                if let Some(gw) = self.slot(*w, grads) {
                    for k in 0..k_len {
                        let Some((t0, t1, src0)) = conv_range(t_len, k * dilation, *pad) else {
                            continue;
                        };
                        let rows = (t1 - t0) * batch;
                        S::gemm(
                            c_out,
                            rows,
                            c_in,
                            S::one(),
                            &dout[t0 * batch * c_out..],
                            (1, c_out),
                            &xv.data()[src0 * batch * c_in..],
                            (c_in, 1),
                            S::one(),
                            &mut gw[k..],
                            (c_in * k_len, k_len),
                        );
                    }
                }
            }
            Op::Transpose(x) => {
                let s = self.value(*x).shape();
                let (r, c) = (s[0], s[1]);
                if let Some(g) = self.slot(*x, grads) {
                    for i in 0..r {
                        for j in 0..c {
                            g[i * c + j] += dout[j * r + i];
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(g) = self.slot(*x, grads) {
                    axpy(g, dout);
                }
            }
            Op::Sum(x) => {
                if let Some(g) = self.slot(*x, grads) {
                    for o in g.iter_mut() {
                        *o += dout[0];
                    }
                }
            }
            Op::Mean(x) => {
                let n = S::lit(self.value(*x).len().max(1) as f64);
                if let Some(g) = self.slot(*x, grads) {
                    for o in g.iter_mut() {
                        *o += dout[0] / n;
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                class_weights,
                probs,
            } => {
                let c = class_weights.len();
                let scale = dout[0] / S::lit(targets.len().max(1) as f64);
                if let Some(g) = self.slot(*logits, grads) {
                    for (t, &y) in targets.iter().enumerate() {
                        let wy = class_weights[y] * scale;
                        for j in 0..c {
                            let onehot = if j == y { S::one() } else { S::zero() };
                            g[t * c + j] += wy * (probs[t * c + j] - onehot);
                        }
                    }
                }
            }
        }
    }

    /// Gradient accumulator for `v`, allocated on first use; `None` when
    /// `v` does not need a gradient.
    #[allow(clippy::mut_from_ref)]
    fn slot<'g>(&self, v: Var, grads: &'g mut [Option<Vec<S>>]) -> Option<&'g mut Vec<S>> {
        let value = &self.nodes[v.0].value;
        if !value.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![S::zero(); value.len()]))
    }
}

/// Output time range `[t0, t1)` that tap offset `shift - pad` reads from
/// inside the sequence, together with the first source time.
fn conv_range(t_len: usize, shift: usize, pad: usize) -> Option<(usize, usize, usize)> {
    let t0 = pad.saturating_sub(shift);
    let t1 = (t_len + pad).saturating_sub(shift).min(t_len);
    if t0 >= t1 {
        return None;
    }
    Some((t0, t1, t0 + shift - pad))
}

fn zip_map<S: Scalar>(a: &[S], b: &[S], f: impl Fn(S, S) -> S) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn axpy<S: Scalar>(acc: &mut [S], x: &[S]) {
    for (a, &v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}
