//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value and enough saved
//! state to run its adjoint. [`Tape::backward`] walks the nodes in strict
//! reverse order, so gradient accumulation order is fixed by record order.

use super::kernels::{self, col2im, gemm, im2col, inverse_perm, ConvGeom, Mat};
use super::params::{ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
    },
    Upsample2x(Var),
    AvgPool2x(Var),
    GlobalAvgPool(Var),
    Relu(Var),
    Add(Var, Var),
    AddBroadcast(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    LayerNorm {
        input: Var,
        gain: Var,
        offset: Var,
        normalized: Vec<f32>,
        inv_std: Vec<f32>,
    },
    Softmax(Var),
    BceWithLogits {
        logits: Var,
        target: Vec<f32>,
    },
    Sum(Var),
    WeightedSum(Var, Vec<f32>),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    BatchMatmul {
        a: Var,
        b: Var,
        transpose_b: bool,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation graph.
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
    grad_enabled: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(msg()))
    }
}

/// `(outer, axis_len, inner)` split of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A tape that records values only; nothing on it requires a gradient.
    pub fn no_grad() -> Self {
        Tape {
            grad_enabled: false,
            ..Self::new()
        }
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = self.grad_enabled && inputs.iter().any(|&v| self.needs(v));
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let needs_grad = self.grad_enabled;
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Loads a trainable parameter onto the tape.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let v = self.leaf(params.get(id).clone());
        self.params.push((id, v));
        v
    }

    /// Same-padded 2-D convolution: `[N,C,H,W] * [O,C,k,k] -> [N,O,ceil(H/s),ceil(W/s)]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>, stride: usize) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ks = self.shape(kernel).to_vec();
        check(xs.len() == 4 && ks.len() == 4, || format!("conv2d expects rank-4 operands, got {xs:?} and {ks:?}"))?;
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (o, kc, k) = (ks[0], ks[1], ks[2]);
        check(kc == c, || format!("conv2d kernel expects {kc} input channels, input has {c}"))?;
        check(ks[3] == k && k % 2 == 1, || format!("conv2d needs an odd square kernel, got {ks:?}"))?;
        check(stride == 1 || stride == 2, || format!("conv2d stride must be 1 or 2, got {stride}"))?;
        if let Some(b) = bias {
            check(self.shape(b) == [o], || format!("conv2d bias shape {:?}, expected [{o}]", self.shape(b)))?;
        }

        let g = ConvGeom::new(c, h, w, k, stride);
        let p = g.out_pixels();
        let kk = g.col_rows();
        let mut out = vec![0.0f32; n * o * p];
        let mut cols = vec![0.0f32; kk * p];
        {
            let x = self.value(input).data();
            let wk = self.value(kernel).data();
            for i in 0..n {
                im2col(&x[i * c * h * w..(i + 1) * c * h * w], &g, &mut cols);
                gemm(1.0, Mat::new(wk, o, kk), Mat::new(&cols, kk, p), 0.0, &mut out[i * o * p..(i + 1) * o * p]);
            }
            if let Some(b) = bias {
                let bd = self.value(b).data();
                for chunk in out.chunks_mut(p).enumerate() {
                    let (idx, plane) = chunk;
                    let bv = bd[idx % o];
                    plane.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        let value = Tensor::new([n, o, g.out_h, g.out_w], out)?;
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        Ok(self.push(value, Op::Conv2d { input, kernel, bias, stride }, &inputs))
    }

    /// Nearest-neighbour 2x enlargement of the two trailing axes.
    pub fn upsample2x(&mut self, input: Var) -> Result<Var> {
        let s = self.shape(input).to_vec();
        check(s.len() >= 2, || format!("upsample2x needs rank >= 2, got {s:?}"))?;
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        let planes: usize = s[..s.len() - 2].iter().product();
        let x = self.value(input).data();
        let mut out = vec![0.0f32; planes * 4 * h * w];
        for pl in 0..planes {
            let src = &x[pl * h * w..(pl + 1) * h * w];
            let dst = &mut out[pl * 4 * h * w..(pl + 1) * 4 * h * w];
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
                }
            }
        }
        let mut shape = s.clone();
        let r = shape.len();
        shape[r - 2] *= 2;
        shape[r - 1] *= 2;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Upsample2x(input), &[input]))
    }

    /// Mean over non-overlapping 2x2 blocks of the two trailing axes.
    pub fn avg_pool2x(&mut self, input: Var) -> Result<Var> {
        let s = self.shape(input).to_vec();
        check(s.len() >= 2, || format!("avg_pool2x needs rank >= 2, got {s:?}"))?;
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        check(h % 2 == 0 && w % 2 == 0, || format!("avg_pool2x needs even spatial dims, got {s:?}"))?;
        let planes: usize = s[..s.len() - 2].iter().product();
        let (oh, ow) = (h / 2, w / 2);
        let x = self.value(input).data();
        let mut out = vec![0.0f32; planes * oh * ow];
        for pl in 0..planes {
            let src = &x[pl * h * w..];
            for y in 0..oh {
                for xx in 0..ow {
                    let a = src[2 * y * w + 2 * xx] as f64
                        + src[2 * y * w + 2 * xx + 1] as f64
                        + src[(2 * y + 1) * w + 2 * xx] as f64
                        + src[(2 * y + 1) * w + 2 * xx + 1] as f64;
                    out[pl * oh * ow + y * ow + xx] = (a / 4.0) as f32;
                }
            }
        }
        let mut shape = s.clone();
        let r = shape.len();
        shape[r - 2] = oh;
        shape[r - 1] = ow;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::AvgPool2x(input), &[input]))
    }

    /// `[N,C,H,W] -> [N,C]`, the spatial mean of every channel.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let s = self.shape(input).to_vec();
        check(s.len() == 4, || format!("global_avg_pool needs rank 4, got {s:?}"))?;
        let area = s[2] * s[3];
        let out: Vec<f32> = self
            .value(input)
            .data()
            .chunks(area)
            .map(|plane| (plane.iter().map(|&v| v as f64).sum::<f64>() / area as f64) as f32)
            .collect();
        let value = Tensor::new([s[0], s[1]], out)?;
        Ok(self.push(value, Op::GlobalAvgPool(input), &[input]))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| v.max(0.0)).collect())
            .expect("same shape");
        self.push(value, Op::Relu(input), &[input])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check(self.shape(a) == self.shape(b), || {
            format!("add of {:?} and {:?}", self.shape(a), self.shape(b))
        })?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    /// `a + b` where `b`'s shape is a suffix of `a`'s and `b` repeats.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        check(sb.len() <= sa.len() && sa[sa.len() - sb.len()..] == sb[..], || {
            format!("cannot broadcast {sb:?} onto {sa:?}")
        })?;
        let bd = self.value(b).data();
        let m = bd.len();
        let data = self
            .value(a)
            .data()
            .chunks(m.max(1))
            .flat_map(|chunk| chunk.iter().zip(bd).map(|(x, y)| x + y))
            .collect();
        let value = Tensor::new(sa, data)?;
        Ok(self.push(value, Op::AddBroadcast(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check(self.shape(a) == self.shape(b), || {
            format!("mul of {:?} and {:?}", self.shape(a), self.shape(b))
        })?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, input: Var, factor: f32) -> Var {
        let x = self.value(input);
        let value = Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| v * factor).collect())
            .expect("same shape");
        self.push(value, Op::Scale(input, factor), &[input])
    }

    /// Affine map over the last axis: `x W^T + b` with `W: [d_out, d_in]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        check(!xs.is_empty() && ws.len() == 2 && xs[xs.len() - 1] == ws[1], || {
            format!("linear of {xs:?} with weight {ws:?}")
        })?;
        let (d_out, d_in) = (ws[0], ws[1]);
        if let Some(b) = bias {
            check(self.shape(b) == [d_out], || format!("linear bias {:?}, expected [{d_out}]", self.shape(b)))?;
        }
        let m = self.value(input).numel() / d_in;
        let mut out = vec![0.0f32; m * d_out];
        gemm(
            1.0,
            Mat::new(self.value(input).data(), m, d_in),
            Mat::new(self.value(weight).data(), d_out, d_in).t(),
            0.0,
            &mut out,
        );
        if let Some(b) = bias {
            let bd = self.value(b).data();
            for row in out.chunks_mut(d_out) {
                row.iter_mut().zip(bd).for_each(|(v, bv)| *v += bv);
            }
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = d_out;
        let value = Tensor::new(shape, out)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push(value, Op::Linear { input, weight, bias }, &inputs))
    }

    /// Normalises the last axis to zero mean and unit variance, then applies
    /// `gain * x + offset`.
    pub fn layer_norm(&mut self, input: Var, gain: Var, offset: Var, eps: f32) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        check(!xs.is_empty(), || "layer_norm on a scalar".into())?;
        let d = xs[xs.len() - 1];
        check(d >= 1 && self.shape(gain) == [d] && self.shape(offset) == [d], || {
            format!("layer_norm of {xs:?} with gain {:?} offset {:?}", self.shape(gain), self.shape(offset))
        })?;
        let rows = self.value(input).numel() / d;
        let mut normalized = vec![0.0f32; rows * d];
        let mut inv_std = vec![0.0f32; rows];
        let mut out = vec![0.0f32; rows * d];
        let (x, gd, od) = (self.value(input).data(), self.value(gain).data(), self.value(offset).data());
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps as f64).sqrt();
            inv_std[r] = inv as f32;
            for j in 0..d {
                let xh = ((row[j] as f64 - mean) * inv) as f32;
                normalized[r * d + j] = xh;
                out[r * d + j] = gd[j] * xh + od[j];
            }
        }
        let value = Tensor::new(xs, out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                input,
                gain,
                offset,
                normalized,
                inv_std,
            },
            &[input, gain, offset],
        ))
    }

    /// Softmax over the last axis, stabilised by subtracting the row maximum.
    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        check(!xs.is_empty(), || "softmax on a scalar".into())?;
        let d = xs[xs.len() - 1];
        let mut out = self.value(input).data().to_vec();
        for row in out.chunks_mut(d.max(1)) {
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut total = 0.0f64;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v as f64;
            }
            for v in row.iter_mut() {
                *v = (*v as f64 / total) as f32;
            }
        }
        let value = Tensor::new(xs, out)?;
        Ok(self.push(value, Op::Softmax(input), &[input]))
    }

    /// Mean binary cross-entropy between logits and a `{0,1}` target, in nats.
    pub fn bce_with_logits(&mut self, logits: Var, target: &Tensor) -> Result<Var> {
        check(self.shape(logits) == target.shape(), || {
            format!("bce_with_logits of {:?} against target {:?}", self.shape(logits), target.shape())
        })?;
        if let Some(&bad) = target.data().iter().find(|&&t| t != 0.0 && t != 1.0) {
            return Err(Error::NonBinaryTarget(bad));
        }
        let x = self.value(logits).data();
        let total: f64 = x
            .iter()
            .zip(target.data())
            .map(|(&l, &t)| kernels::bce_logit(l as f64, t as f64))
            .sum();
        let mean = total / x.len().max(1) as f64;
        let value = Tensor::scalar(mean as f32);
        Ok(self.push(
            value,
            Op::BceWithLogits {
                logits,
                target: target.data().to_vec(),
            },
            &[logits],
        ))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total: f64 = self.value(input).data().iter().map(|&v| v as f64).sum();
        self.push(Tensor::scalar(total as f32), Op::Sum(input), &[input])
    }

    /// `sum(w * x)` with fixed weights.
    pub fn weighted_sum(&mut self, input: Var, weights: Vec<f32>) -> Result<Var> {
        check(weights.len() == self.value(input).numel(), || {
            format!("{} weights for {:?}", weights.len(), self.shape(input))
        })?;
        let total: f64 = self
            .value(input)
            .data()
            .iter()
            .zip(&weights)
            .map(|(&v, &w)| v as f64 * w as f64)
            .sum();
        Ok(self.push(Tensor::scalar(total as f32), Op::WeightedSum(input, weights), &[input]))
    }

    pub fn reshape(&mut self, input: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(input).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(input), &[input]))
    }

    pub fn permute(&mut self, input: Var, perm: &[usize]) -> Result<Var> {
        let s = self.shape(input).to_vec();
        let mut seen = vec![false; s.len()];
        check(perm.len() == s.len() && perm.iter().all(|&p| p < s.len() && !std::mem::replace(&mut seen[p], true)), || {
            format!("invalid permutation {perm:?} for {s:?}")
        })?;
        let data = kernels::permute(self.value(input).data(), &s, perm);
        let shape: Vec<usize> = perm.iter().map(|&p| s[p]).collect();
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Permute(input, perm.to_vec()), &[input]))
    }

    /// Batched matrix product over matching leading axes:
    /// `[..,M,K] x [..,K,N]`, or `[..,M,K] x [..,N,K]^T` with `transpose_b`.
    pub fn bmm(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        check(sa.len() >= 2 && sa.len() == sb.len() && sa[..sa.len() - 2] == sb[..sb.len() - 2], || {
            format!("bmm of {sa:?} and {sb:?}")
        })?;
        let r = sa.len();
        let (m, k) = (sa[r - 2], sa[r - 1]);
        let (kb, n) = if transpose_b { (sb[r - 1], sb[r - 2]) } else { (sb[r - 2], sb[r - 1]) };
        check(k == kb, || format!("bmm inner dims {k} vs {kb}"))?;
        let batch: usize = sa[..r - 2].iter().product();
        let mut out = vec![0.0f32; batch * m * n];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            let am = Mat::new(&ad[i * m * k..(i + 1) * m * k], m, k);
            let bs = &bd[i * k * n..(i + 1) * k * n];
            let bm = if transpose_b { Mat::new(bs, n, k).t() } else { Mat::new(bs, k, n) };
            gemm(1.0, am, bm, 0.0, &mut out[i * m * n..(i + 1) * m * n]);
        }
        let mut shape = sa;
        shape[r - 1] = n;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::BatchMatmul { a, b, transpose_b }, &[a, b]))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        check(!inputs.is_empty(), || "concat of nothing".into())?;
        let first = self.shape(inputs[0]).to_vec();
        check(axis < first.len(), || format!("concat axis {axis} for {first:?}"))?;
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            check(
                s.len() == first.len() && s[..axis] == first[..axis] && s[axis + 1..] == first[axis + 1..],
                || format!("concat of {first:?} and {s:?} along {axis}"),
            )?;
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let len = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.value(v).data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = first;
        shape[axis] = total;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Sub-range `start..start+len` of one axis.
    pub fn slice(&mut self, input: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(input).to_vec();
        check(axis < s.len() && start + len <= s[axis], || {
            format!("slice {start}..{} of axis {axis} in {s:?}", start + len)
        })?;
        let (outer, full, inner) = split_axis(&s, axis);
        let x = self.value(input).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * full * inner + start * inner;
            out.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Slice { input, axis, start }, &[input]))
    }

    /// Propagates d(loss)/d(node) for every node that needs it.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        check(self.value(loss).numel() == 1, || {
            format!("backward from non-scalar {:?}", self.shape(loss))
        })?;
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(node, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, dy: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let mut acc = |v: Var, g: Vec<f32>| {
            if !self.needs(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, x)| *e += x),
                slot @ None => *slot = Some(g),
            }
        };
        let val = |v: Var| self.value(v);

        match &node.op {
            Op::Leaf => {}
            &Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
            } => {
                let xs = val(input).shape();
                let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
                let ks = val(kernel).shape();
                let (o, k) = (ks[0], ks[2]);
                let g = ConvGeom::new(c, h, w, k, stride);
                let p = g.out_pixels();
                let kk = g.col_rows();
                let x = val(input).data();
                let wk = val(kernel).data();
                let want_w = self.needs(kernel);
                let want_x = self.needs(input);
                let mut dw = if want_w { vec![0.0f32; o * kk] } else { Vec::new() };
                let mut dx = if want_x { vec![0.0f32; n * c * h * w] } else { Vec::new() };
                let mut cols = vec![0.0f32; kk * p];
                for i in 0..n {
                    let dy_i = Mat::new(&dy[i * o * p..(i + 1) * o * p], o, p);
                    if want_w {
                        im2col(&x[i * c * h * w..(i + 1) * c * h * w], &g, &mut cols);
                        gemm(1.0, dy_i, Mat::new(&cols, kk, p).t(), 1.0, &mut dw);
                    }
                    if want_x {
                        gemm(1.0, Mat::new(wk, o, kk).t(), dy_i, 0.0, &mut cols);
                        col2im(&cols, &g, &mut dx[i * c * h * w..(i + 1) * c * h * w]);
                    }
                }
                if let Some(b) = bias {
                    if self.needs(b) {
                        let mut db = vec![0.0f64; o];
                        for (idx, plane) in dy.chunks(p).enumerate() {
                            db[idx % o] += plane.iter().map(|&v| v as f64).sum::<f64>();
                        }
                        acc(b, db.into_iter().map(|v| v as f32).collect());
                    }
                }
                if want_w {
                    acc(kernel, dw);
                }
                if want_x {
                    acc(input, dx);
                }
            }
            &Op::Upsample2x(input) => {
                let s = val(input).shape();
                let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
                let planes = val(input).numel() / (h * w);
                let mut dx = vec![0.0f32; planes * h * w];
                for pl in 0..planes {
                    let src = &dy[pl * 4 * h * w..(pl + 1) * 4 * h * w];
                    for y in 0..h {
                        for x in 0..w {
                            let top = (2 * y) * 2 * w + 2 * x;
                            let bot = top + 2 * w;
                            dx[pl * h * w + y * w + x] = src[top] + src[top + 1] + src[bot] + src[bot + 1];
                        }
                    }
                }
                acc(input, dx);
            }
            &Op::AvgPool2x(input) => {
                let s = val(input).shape();
                let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
                let (oh, ow) = (h / 2, w / 2);
                let planes = val(input).numel() / (h * w);
                let mut dx = vec![0.0f32; planes * h * w];
                for pl in 0..planes {
                    for y in 0..h {
                        for x in 0..w {
                            dx[pl * h * w + y * w + x] = dy[pl * oh * ow + (y / 2) * ow + x / 2] * 0.25;
                        }
                    }
                }
                acc(input, dx);
            }
            &Op::GlobalAvgPool(input) => {
                let s = val(input).shape();
                let area = s[2] * s[3];
                let mut dx = Vec::with_capacity(val(input).numel());
                for &g in dy {
                    dx.extend(std::iter::repeat_n(g / area as f32, area));
                }
                acc(input, dx);
            }
            &Op::Relu(input) => {
                let dx = val(input)
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                acc(input, dx);
            }
            &Op::Add(a, b) => {
                acc(a, dy.to_vec());
                acc(b, dy.to_vec());
            }
            &Op::AddBroadcast(a, b) => {
                acc(a, dy.to_vec());
                if self.needs(b) {
                    let m = val(b).numel();
                    let mut db = vec![0.0f64; m];
                    for chunk in dy.chunks(m.max(1)) {
                        db.iter_mut().zip(chunk).for_each(|(d, &g)| *d += g as f64);
                    }
                    acc(b, db.into_iter().map(|v| v as f32).collect());
                }
            }
            &Op::Mul(a, b) => {
                if self.needs(a) {
                    acc(a, dy.iter().zip(val(b).data()).map(|(g, y)| g * y).collect());
                }
                if self.needs(b) {
                    acc(b, dy.iter().zip(val(a).data()).map(|(g, x)| g * x).collect());
                }
            }
            &Op::Scale(input, f) => acc(input, dy.iter().map(|g| g * f).collect()),
            &Op::Linear { input, weight, bias } => {
                let ws = val(weight).shape();
                let (d_out, d_in) = (ws[0], ws[1]);
                let m = val(input).numel() / d_in;
                let dy_m = Mat::new(dy, m, d_out);
                if self.needs(input) {
                    let mut dx = vec![0.0f32; m * d_in];
                    gemm(1.0, dy_m, Mat::new(val(weight).data(), d_out, d_in), 0.0, &mut dx);
                    acc(input, dx);
                }
                if self.needs(weight) {
                    let mut dw = vec![0.0f32; d_out * d_in];
                    gemm(1.0, dy_m.t(), Mat::new(val(input).data(), m, d_in), 0.0, &mut dw);
                    acc(weight, dw);
                }
                if let Some(b) = bias {
                    if self.needs(b) {
                        let mut db = vec![0.0f64; d_out];
                        for row in dy.chunks(d_out) {
                            db.iter_mut().zip(row).for_each(|(d, &g)| *d += g as f64);
                        }
                        acc(b, db.into_iter().map(|v| v as f32).collect());
                    }
                }
            }
            Op::LayerNorm {
                input,
                gain,
                offset,
                normalized,
                inv_std,
            } => {
                let d = val(*gain).numel();
                let gd = val(*gain).data();
                let rows = normalized.len() / d;
                if self.needs(*input) {
                    let mut dx = vec![0.0f32; rows * d];
                    for r in 0..rows {
                        let xh = &normalized[r * d..(r + 1) * d];
                        let g = &dy[r * d..(r + 1) * d];
                        let mut mean_dxh = 0.0f64;
                        let mut mean_dxh_xh = 0.0f64;
                        for j in 0..d {
                            let dxh = (g[j] * gd[j]) as f64;
                            mean_dxh += dxh;
                            mean_dxh_xh += dxh * xh[j] as f64;
                        }
                        mean_dxh /= d as f64;
                        mean_dxh_xh /= d as f64;
                        let inv = inv_std[r] as f64;
                        for j in 0..d {
                            let dxh = (g[j] * gd[j]) as f64;
                            dx[r * d + j] = (inv * (dxh - mean_dxh - xh[j] as f64 * mean_dxh_xh)) as f32;
                        }
                    }
                    acc(*input, dx);
                }
                if self.needs(*gain) || self.needs(*offset) {
                    let mut dg = vec![0.0f64; d];
                    let mut db = vec![0.0f64; d];
                    for r in 0..rows {
                        for j in 0..d {
                            let g = dy[r * d + j] as f64;
                            dg[j] += g * normalized[r * d + j] as f64;
                            db[j] += g;
                        }
                    }
                    acc(*gain, dg.into_iter().map(|v| v as f32).collect());
                    acc(*offset, db.into_iter().map(|v| v as f32).collect());
                }
            }
            &Op::Softmax(input) => {
                let y = node.value.data();
                let d = *node.value.shape().last().unwrap();
                let mut dx = vec![0.0f32; y.len()];
                for ((yr, gr), dr) in y.chunks(d).zip(dy.chunks(d)).zip(dx.chunks_mut(d)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(&a, &b)| a as f64 * b as f64).sum();
                    for j in 0..d {
                        dr[j] = (yr[j] as f64 * (gr[j] as f64 - dot)) as f32;
                    }
                }
                acc(input, dx);
            }
            Op::BceWithLogits { logits, target } => {
                let scale = dy[0] / target.len().max(1) as f32;
                let dx = val(*logits)
                    .data()
                    .iter()
                    .zip(target)
                    .map(|(&x, &t)| (kernels::sigmoid(x) - t) * scale)
                    .collect();
                acc(*logits, dx);
            }
            &Op::Sum(input) => acc(input, vec![dy[0]; val(input).numel()]),
            Op::WeightedSum(input, weights) => acc(*input, weights.iter().map(|w| w * dy[0]).collect()),
            &Op::Reshape(input) => acc(input, dy.to_vec()),
            Op::Permute(input, perm) => {
                let out_shape = node.value.shape();
                acc(*input, kernels::permute(dy, out_shape, &inverse_perm(perm)));
            }
            &Op::BatchMatmul { a, b, transpose_b } => {
                let sa = val(a).shape();
                let r = sa.len();
                let (m, k) = (sa[r - 2], sa[r - 1]);
                let n = node.value.shape()[r - 1];
                let batch: usize = sa[..r - 2].iter().product();
                let (ad, bd) = (val(a).data(), val(b).data());
                if self.needs(a) {
                    let mut da = vec![0.0f32; batch * m * k];
                    for i in 0..batch {
                        let g = Mat::new(&dy[i * m * n..(i + 1) * m * n], m, n);
                        let bs = &bd[i * k * n..(i + 1) * k * n];
                        // out = a b  -> da = dy b^T ;  out = a b^T -> da = dy b
                        let bm = if transpose_b { Mat::new(bs, n, k) } else { Mat::new(bs, k, n).t() };
                        gemm(1.0, g, bm, 0.0, &mut da[i * m * k..(i + 1) * m * k]);
                    }
                    acc(a, da);
                }
                if self.needs(b) {
                    let mut db = vec![0.0f32; batch * k * n];
                    for i in 0..batch {
                        let g = Mat::new(&dy[i * m * n..(i + 1) * m * n], m, n);
                        let am = Mat::new(&ad[i * m * k..(i + 1) * m * k], m, k);
                        let dst = &mut db[i * k * n..(i + 1) * k * n];
                        if transpose_b {
                            gemm(1.0, g.t(), am, 0.0, dst);
                        } else {
                            gemm(1.0, am.t(), g, 0.0, dst);
                        }
                    }
                    acc(b, db);
                }
            }
            Op::Concat { inputs, axis } => {
                let out_shape = node.value.shape();
                let (outer, total, inner) = split_axis(out_shape, *axis);
                let mut offset = 0;
                for &v in inputs {
                    let len = val(v).shape()[*axis];
                    if self.needs(v) {
                        let mut dv = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            dv.extend_from_slice(&dy[base..base + len * inner]);
                        }
                        acc(v, dv);
                    }
                    offset += len;
                }
            }
            &Op::Slice { input, axis, start } => {
                let (outer, full, inner) = split_axis(val(input).shape(), axis);
                let len = node.value.shape()[axis];
                let mut dx = vec![0.0f32; outer * full * inner];
                for o in 0..outer {
                    let base = o * full * inner + start * inner;
                    dx[base..base + len * inner].copy_from_slice(&dy[o * len * inner..(o + 1) * len * inner]);
                }
                acc(input, dx);
            }
        }
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    /// Gradient with respect to `v`, if any flowed there.
    pub fn get(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v` as a tensor shaped like its value; zeros when no
    /// gradient reached it.
    pub fn tensor(&self, tape: &Tape, v: Var) -> Tensor {
        let shape = tape.shape(v).to_vec();
        match self.get(v) {
            Some(g) => Tensor::new(shape, g.to_vec()).expect("gradient matches value shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// One gradient per parameter in `params`, summed over every time the
    /// parameter was loaded onto `tape`. Unused parameters get zeros.
    pub fn for_params(&self, tape: &Tape, params: &ParamSet) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
        for &(id, v) in &tape.params {
            if let Some(g) = self.get(v) {
                out[id.0].data_mut().iter_mut().zip(g).for_each(|(o, x)| *o += x);
            }
        }
        out
    }
}
