use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use super::{numel, Element, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        shared_rhs: bool,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Scale(Var, f64),
    Ln {
        x: Var,
        eps: f64,
    },
    Sum(Var),
    Mean(Var),
    MeanAxis {
        x: Var,
        axis: usize,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    AdaptiveAvgPool {
        x: Var,
        oh: usize,
        ow: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Reshape(Var),
    Transpose {
        x: Var,
        a0: usize,
        a1: usize,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Gather {
        x: Var,
        idx: Vec<usize>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Append-only tape of differentiable operations.
///
/// Nodes are stored in creation order, so every node's parents precede it and
/// a reverse sweep is a valid topological order for backpropagation.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// `(outer, len, inner)` decomposition of `dims` around `axis`.
fn split_axis(dims: &[usize], axis: usize) -> (usize, usize, usize) {
    (numel(&dims[..axis]), dims[axis], numel(&dims[axis + 1..]))
}

fn is_suffix(long: &[usize], short: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if padded < k || stride == 0 {
        None
    } else {
        Some((padded - k) / stride + 1)
    }
}

struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    /// Calls `f(col_row, col_col, input_offset)` for every in-bounds tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        for c in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let r = (c * self.kh + ky) * self.kw + kx;
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        for ox in 0..self.wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            let off = (c * self.h + iy as usize) * self.w + ix as usize;
                            f(r, oy * self.wo + ox, off);
                        }
                    }
                }
            }
        }
    }

    fn im2col<T: Element>(&self, x: &[T], cols: &mut [T]) {
        cols.iter_mut().for_each(|v| *v = T::zero());
        let n = self.cols();
        self.for_each_tap(|r, p, off| cols[r * n + p] = x[off]);
    }

    fn col2im<T: Element>(&self, cols: &[T], dx: &mut [T]) {
        let n = self.cols();
        self.for_each_tap(|r, p, off| dx[off] = dx[off] + cols[r * n + p]);
    }
}

fn pool_bounds(i: usize, out: usize, size: usize) -> (usize, usize) {
    let start = i * size / out;
    let end = ((i + 1) * size).div_ceil(out);
    (start, end)
}

/// Maps each linear index of the transposed tensor to the source index.
fn transpose_map(dims: &[usize], a0: usize, a1: usize) -> (Vec<usize>, Vec<usize>) {
    let mut out_dims = dims.to_vec();
    out_dims.swap(a0, a1);
    let rank = dims.len();
    let mut in_strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * dims[i + 1];
    }
    let mut strides = in_strides.clone();
    strides.swap(a0, a1);
    let total = numel(dims);
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; rank];
    for _ in 0..total {
        map.push(idx.iter().zip(&strides).map(|(i, s)| i * s).sum());
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out_dims[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    (out_dims, map)
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Registers a constant input (no gradient).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.dims()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of `v`, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let node = &self.nodes[v.0];
        node.grad.as_ref().map(|g| Tensor {
            dims: node.value.dims().to_vec(),
            data: g.clone(),
        })
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Parents of every node, in tape order.
    pub fn parents(&self, v: Var) -> Vec<Var> {
        match &self.nodes[v.0].op {
            Op::Leaf => vec![],
            Op::MatMul { a, b, .. } | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Relu(x)
            | Op::Scale(x, _)
            | Op::Ln { x, .. }
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::MeanAxis { x, .. }
            | Op::MaxPool { x, .. }
            | Op::AdaptiveAvgPool { x, .. }
            | Op::Softmax { x, .. }
            | Op::Reshape(x)
            | Op::Transpose { x, .. }
            | Op::Narrow { x, .. }
            | Op::Gather { x, .. } => vec![*x],
            Op::Conv2d { x, w, b, .. } => {
                let mut p = vec![*x, *w];
                p.extend(b);
                p
            }
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Embedding { table, .. } => vec![*table],
            Op::Concat { parts, .. } => parts.clone(),
            Op::Attention { q, k, v, .. } => vec![*q, *k, *v],
        }
    }

    // ---- forward ops -------------------------------------------------------

    /// `a[..., m, k] · b[k, n]`, or a batched product when `b` has the same
    /// leading dimensions as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ad = self.dims(a).to_vec();
        let bd = self.dims(b).to_vec();
        if ad.len() < 2 || bd.len() < 2 {
            return Err(Error::shape("matmul", &ad, &bd));
        }
        let (m, k) = (ad[ad.len() - 2], ad[ad.len() - 1]);
        let shared_rhs = bd.len() == 2;
        if bd[bd.len() - 2] != k || (!shared_rhs && (bd.len() != ad.len() || ad[..ad.len() - 2] != bd[..bd.len() - 2]))
        {
            return Err(Error::shape("matmul", &ad, &bd));
        }
        let n = bd[bd.len() - 1];
        let batch = numel(&ad[..ad.len() - 2]);
        let mut out_dims = ad.clone();
        *out_dims.last_mut().unwrap() = n;
        let mut out = vec![T::zero(); batch * m * n];
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            if shared_rhs {
                gemm_nn(batch * m, k, n, av, bv, &mut out, false);
            } else {
                for i in 0..batch {
                    gemm_nn(
                        m,
                        k,
                        n,
                        &av[i * m * k..(i + 1) * m * k],
                        &bv[i * k * n..(i + 1) * k * n],
                        &mut out[i * m * n..(i + 1) * m * n],
                        false,
                    );
                }
            }
        }
        let value = Tensor::new(out_dims, out)?;
        Ok(self.push(
            value,
            Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                shared_rhs,
            },
            &[a, b],
        ))
    }

    fn broadcast_pair(&self, op: &'static str, a: Var, b: Var) -> Result<(Var, Var)> {
        let (ad, bd) = (self.dims(a), self.dims(b));
        if is_suffix(ad, bd) {
            Ok((a, b))
        } else if is_suffix(bd, ad) {
            Ok((b, a))
        } else {
            Err(Error::shape(op, ad, bd))
        }
    }

    /// Elementwise sum; the smaller operand may match a trailing block of the
    /// larger one's dimensions and is broadcast over the leading ones.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (big, small) = self.broadcast_pair("add", a, b)?;
        let sv = self.value(small).data();
        let ns = sv.len();
        let data: Vec<T> = self
            .value(big)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + sv[i % ns])
            .collect();
        let value = Tensor::new(self.dims(big).to_vec(), data)?;
        Ok(self.push(value, Op::Add(big, small), &[big, small]))
    }

    /// Elementwise product with the same broadcasting rule as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (big, small) = self.broadcast_pair("mul", a, b)?;
        let sv = self.value(small).data();
        let ns = sv.len();
        let data: Vec<T> = self
            .value(big)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * sv[i % ns])
            .collect();
        let value = Tensor::new(self.dims(big).to_vec(), data)?;
        Ok(self.push(value, Op::Mul(big, small), &[big, small]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&e| e.max(T::zero())).collect();
        let value = Tensor {
            dims: v.dims().to_vec(),
            data,
        };
        self.push(value, Op::Relu(x), &[x])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&e| T::from_f64(e.as_f64() * c)).collect();
        let value = Tensor {
            dims: v.dims().to_vec(),
            data,
        };
        self.push(value, Op::Scale(x, c), &[x])
    }

    /// `ln(x + eps)` elementwise.
    pub fn ln(&mut self, x: Var, eps: f64) -> Result<Var> {
        let v = self.value(x);
        let mut data = Vec::with_capacity(v.numel());
        for &e in v.data() {
            let s = e.as_f64() + eps;
            if !(s > 0.0) {
                return Err(Error::NumericDomain(format!("ln of non-positive value {s}")));
            }
            data.push(T::from_f64(s.ln()));
        }
        let value = Tensor {
            dims: v.dims().to_vec(),
            data,
        };
        Ok(self.push(value, Op::Ln { x, eps }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|v| v.as_f64()).sum();
        self.push(Tensor::scalar(T::from_f64(s)), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s: f64 = v.data().iter().map(|e| e.as_f64()).sum::<f64>() / v.numel() as f64;
        self.push(Tensor::scalar(T::from_f64(s)), Op::Mean(x), &[x])
    }

    /// Mean over one axis; the axis is removed from the result.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let dims = self.dims(x).to_vec();
        if axis >= dims.len() {
            return Err(Error::shape("mean_axis", &dims, &[axis]));
        }
        let (outer, len, inner) = split_axis(&dims, axis);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..inner {
                let s: f64 = (0..len).map(|i| xv[(o * len + i) * inner + j].as_f64()).sum();
                out[o * inner + j] = T::from_f64(s / len as f64);
            }
        }
        let mut out_dims = dims;
        out_dims.remove(axis);
        let value = Tensor {
            dims: out_dims,
            data: out,
        };
        Ok(self.push(value, Op::MeanAxis { x, axis }, &[x]))
    }

    /// 2D convolution, `x[N, C, H, W] ⊛ w[O, C, KH, KW] + b[O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xd = self.dims(x).to_vec();
        let wd = self.dims(w).to_vec();
        if xd.len() != 4 || wd.len() != 4 || xd[1] != wd[1] {
            return Err(Error::shape("conv2d", &xd, &wd));
        }
        if let Some(b) = b {
            if self.dims(b) != [wd[0]] {
                return Err(Error::shape("conv2d bias", self.dims(b), &wd));
            }
        }
        let (ho, wo) = match (conv_out(xd[2], wd[2], stride, pad), conv_out(xd[3], wd[3], stride, pad)) {
            (Some(h), Some(w)) => (h, w),
            _ => return Err(Error::shape("conv2d", &xd, &wd)),
        };
        let geom = ConvGeom {
            c: xd[1],
            h: xd[2],
            w: xd[3],
            kh: wd[2],
            kw: wd[3],
            ho,
            wo,
            stride,
            pad,
        };
        let (n, o) = (xd[0], wd[0]);
        let (rows, cols) = (geom.rows(), geom.cols());
        let mut out = vec![T::zero(); n * o * cols];
        let mut colbuf = vec![T::zero(); rows * cols];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bv = b.map(|b| self.value(b).data());
            let per = geom.c * geom.h * geom.w;
            for s in 0..n {
                geom.im2col(&xv[s * per..(s + 1) * per], &mut colbuf);
                let dst = &mut out[s * o * cols..(s + 1) * o * cols];
                gemm_nn(o, rows, cols, wv, &colbuf, dst, false);
                if let Some(bv) = bv {
                    for (oc, &bias) in bv.iter().enumerate() {
                        dst[oc * cols..(oc + 1) * cols].iter_mut().for_each(|v| *v = *v + bias);
                    }
                }
            }
        }
        let value = Tensor::new(vec![n, o, ho, wo], out)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(value, Op::Conv2d { x, w, b, stride, pad }, &parents))
    }

    /// Max pooling over `kernel × kernel` windows of `x[N, C, H, W]`.
    pub fn maxpool2d(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let xd = self.dims(x).to_vec();
        if xd.len() != 4 || kernel == 0 {
            return Err(Error::shape("maxpool2d", &xd, &[kernel, stride]));
        }
        let (ho, wo) = match (conv_out(xd[2], kernel, stride, 0), conv_out(xd[3], kernel, stride, 0)) {
            (Some(h), Some(w)) => (h, w),
            _ => return Err(Error::shape("maxpool2d", &xd, &[kernel, stride])),
        };
        let (nc, h, w) = (xd[0] * xd[1], xd[2], xd[3]);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(nc * ho * wo);
        let mut argmax = Vec::with_capacity(nc * ho * wo);
        for p in 0..nc {
            let base = p * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * stride * w + ox * stride;
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                            if xv[idx] > xv[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(xv[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(vec![xd[0], xd[1], ho, wo], out)?;
        Ok(self.push(value, Op::MaxPool { x, argmax }, &[x]))
    }

    /// Adaptive average pooling of `x[N, C, H, W]` to `[N, C, oh, ow]`.
    pub fn avgpool_adaptive(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var> {
        let xd = self.dims(x).to_vec();
        if xd.len() != 4 || oh == 0 || ow == 0 {
            return Err(Error::shape("avgpool_adaptive", &xd, &[oh, ow]));
        }
        let (nc, h, w) = (xd[0] * xd[1], xd[2], xd[3]);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(nc * oh * ow);
        for p in 0..nc {
            let base = p * h * w;
            for i in 0..oh {
                let (y0, y1) = pool_bounds(i, oh, h);
                for j in 0..ow {
                    let (x0, x1) = pool_bounds(j, ow, w);
                    let mut s = 0.0;
                    for y in y0..y1 {
                        for xx in x0..x1 {
                            s += xv[base + y * w + xx].as_f64();
                        }
                    }
                    out.push(T::from_f64(s / ((y1 - y0) * (x1 - x0)) as f64));
                }
            }
        }
        let value = Tensor::new(vec![xd[0], xd[1], oh, ow], out)?;
        Ok(self.push(value, Op::AdaptiveAvgPool { x, oh, ow }, &[x]))
    }

    /// Normalizes over the last axis, then applies `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let xd = self.dims(x).to_vec();
        let d = *xd.last().ok_or_else(|| Error::shape("layer_norm", &xd, &[]))?;
        if self.dims(gamma) != [d] || self.dims(beta) != [d] {
            return Err(Error::shape("layer_norm", &xd, self.dims(gamma)));
        }
        let rows = numel(&xd) / d;
        let xv = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = Vec::with_capacity(rows * d);
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(rows * d);
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd.push(rs);
            for (j, v) in row.iter().enumerate() {
                let xh = (v.as_f64() - mean) * rs;
                xhat.push(xh);
                out.push(T::from_f64(xh * g[j].as_f64() + b[j].as_f64()));
            }
        }
        let value = Tensor::new(xd, out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let dims = self.dims(x).to_vec();
        if axis >= dims.len() {
            return Err(Error::shape("softmax", &dims, &[axis]));
        }
        let (outer, len, inner) = split_axis(&dims, axis);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); xv.len()];
        let mut buf = vec![0.0f64; len];
        for o in 0..outer {
            for j in 0..inner {
                let at = |i: usize| (o * len + i) * inner + j;
                let max = (0..len).map(|i| xv[at(i)].as_f64()).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = (xv[at(i)].as_f64() - max).exp();
                    total += *b;
                }
                for (i, b) in buf.iter().enumerate() {
                    out[at(i)] = T::from_f64(b / total);
                }
            }
        }
        let value = Tensor::new(dims, out)?;
        Ok(self.push(value, Op::Softmax { x, axis }, &[x]))
    }

    /// Rows of `table[V, D]` selected by `ids`, giving `[ids.len(), D]`.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let td = self.dims(table).to_vec();
        if td.len() != 2 || ids.is_empty() || ids.iter().any(|&i| i >= td[0]) {
            return Err(Error::shape("embedding_lookup", &td, ids));
        }
        let d = td[1];
        let tv = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        let value = Tensor::new(vec![ids.len(), d], out)?;
        Ok(self.push(
            value,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let base = self.dims(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        let mut total = 0;
        for p in parts {
            let d = self.dims(*p);
            if d.len() != base.len() || d.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b) {
                return Err(Error::shape("concat", &base, d));
            }
            total += d[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let v = self.value(*p);
                let len = v.dims()[axis];
                out.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut dims = base;
        dims[axis] = total;
        let value = Tensor::new(dims, out)?;
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        ))
    }

    pub fn reshape(&mut self, x: Var, dims: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(dims)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Swaps two axes.
    pub fn transpose(&mut self, x: Var, a0: usize, a1: usize) -> Result<Var> {
        let dims = self.dims(x).to_vec();
        if a0 >= dims.len() || a1 >= dims.len() {
            return Err(Error::shape("transpose", &dims, &[a0, a1]));
        }
        let (out_dims, map) = transpose_map(&dims, a0, a1);
        let xv = self.value(x).data();
        let out = map.iter().map(|&i| xv[i]).collect();
        let value = Tensor::new(out_dims, out)?;
        Ok(self.push(value, Op::Transpose { x, a0, a1 }, &[x]))
    }

    /// Slice `start..start + len` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let dims = self.dims(x).to_vec();
        if axis >= dims.len() || len == 0 || start + len > dims[axis] {
            return Err(Error::shape("narrow", &dims, &[axis, start, len]));
        }
        let (outer, full, inner) = split_axis(&dims, axis);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * full + start) * inner;
            out.extend_from_slice(&xv[from..from + len * inner]);
        }
        let mut out_dims = dims;
        out_dims[axis] = len;
        let value = Tensor::new(out_dims, out)?;
        Ok(self.push(value, Op::Narrow { x, axis, start }, &[x]))
    }

    /// `out[n] = x[n, idx[n]]` for a rank-2 `x`.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let dims = self.dims(x).to_vec();
        if dims.len() != 2 || dims[0] != idx.len() || idx.iter().any(|&i| i >= dims[1]) {
            return Err(Error::shape("gather", &dims, &[idx.len()]));
        }
        let xv = self.value(x).data();
        let out = idx.iter().enumerate().map(|(n, &i)| xv[n * dims[1] + i]).collect();
        let value = Tensor::new(vec![idx.len()], out)?;
        Ok(self.push(value, Op::Gather { x, idx: idx.to_vec() }, &[x]))
    }

    /// Multi-head scaled dot-product attention. `q[N, Tq, D]`, `k, v[N, Tk, D]`;
    /// the feature axis is split into `heads` contiguous blocks.
    pub fn scaled_dot_product_attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let qd = self.dims(q).to_vec();
        let kd = self.dims(k).to_vec();
        let vd = self.dims(v).to_vec();
        if qd.len() != 3
            || kd != vd
            || kd.len() != 3
            || qd[0] != kd[0]
            || qd[2] != kd[2]
            || heads == 0
            || !qd[2].is_multiple_of(heads)
        {
            return Err(Error::shape("scaled_dot_product_attention", &qd, &kd));
        }
        let (n, tq, d) = (qd[0], qd[1], qd[2]);
        let tk = kd[1];
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut out = vec![T::zero(); n * tq * d];
        let mut probs = vec![T::zero(); n * heads * tq * tk];
        let mut qh = vec![T::zero(); tq * dh];
        let mut kh = vec![T::zero(); tk * dh];
        let mut vh = vec![T::zero(); tk * dh];
        let mut oh = vec![T::zero(); tq * dh];
        let mut scores = vec![T::zero(); tq * tk];
        for b in 0..n {
            for h in 0..heads {
                gather_head(qv, b, tq, d, h, dh, &mut qh);
                gather_head(kv, b, tk, d, h, dh, &mut kh);
                gather_head(vv, b, tk, d, h, dh, &mut vh);
                gemm_nt(tq, dh, tk, &qh, &kh, &mut scores, false);
                let p = &mut probs[(b * heads + h) * tq * tk..(b * heads + h + 1) * tq * tk];
                for i in 0..tq {
                    let row = &scores[i * tk..(i + 1) * tk];
                    let max = row.iter().map(|s| s.as_f64() * scale).fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|s| (s.as_f64() * scale - max).exp()).collect();
                    let total: f64 = exps.iter().sum();
                    for (j, e) in exps.iter().enumerate() {
                        p[i * tk + j] = T::from_f64(e / total);
                    }
                }
                gemm_nn(tq, tk, dh, p, &vh, &mut oh, false);
                scatter_head(&oh, b, tq, d, h, dh, &mut out, false);
            }
        }
        let value = Tensor::new(vec![n, tq, d], out)?;
        Ok(self.push(value, Op::Attention { q, k, v, heads, probs }, &[q, k, v]))
    }

    // ---- backward ----------------------------------------------------------

    /// Backpropagates from a scalar `loss`, adding gradients into every
    /// reachable node that requires them. Repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got dims {:?}",
                self.dims(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            let (Some(g), true) = (g, node.requires_grad) else {
                continue;
            };
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a = *a + *b),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let wants = |v: &Var| nodes[v.0].requires_grad;
        macro_rules! buf {
            ($v:expr) => {
                grad_slot(nodes, grads, $v)
            };
        }
        let val = |v: Var| nodes[v.0].value.data();
        let out = nodes[i].value.data();

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                shared_rhs,
            } => {
                let (batch, m, k, n) = (*batch, *m, *k, *n);
                if *shared_rhs {
                    if wants(a) {
                        gemm_nt(batch * m, n, k, g, val(*b), buf!(*a), true);
                    }
                    if wants(b) {
                        gemm_tn(k, batch * m, n, val(*a), g, buf!(*b), true);
                    }
                } else {
                    for s in 0..batch {
                        let gs = &g[s * m * n..(s + 1) * m * n];
                        if wants(a) {
                            let bs = &val(*b)[s * k * n..(s + 1) * k * n];
                            gemm_nt(m, n, k, gs, bs, &mut buf!(*a)[s * m * k..(s + 1) * m * k], true);
                        }
                        if wants(b) {
                            let as_ = &val(*a)[s * m * k..(s + 1) * m * k];
                            gemm_tn(k, m, n, as_, gs, &mut buf!(*b)[s * k * n..(s + 1) * k * n], true);
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                if wants(a) {
                    let ga = buf!(*a);
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x = *x + *y);
                }
                if wants(b) {
                    let gb = buf!(*b);
                    let nb = gb.len();
                    let mut acc = vec![0.0f64; nb];
                    for (idx, y) in g.iter().enumerate() {
                        acc[idx % nb] += y.as_f64();
                    }
                    gb.iter_mut()
                        .zip(acc)
                        .for_each(|(x, y)| *x = T::from_f64(x.as_f64() + y));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let nb = bv.len();
                if wants(a) {
                    let ga = buf!(*a);
                    for (idx, x) in ga.iter_mut().enumerate() {
                        *x = *x + g[idx] * bv[idx % nb];
                    }
                }
                if wants(b) {
                    let mut acc = vec![0.0f64; nb];
                    for (idx, y) in g.iter().enumerate() {
                        acc[idx % nb] += y.as_f64() * av[idx].as_f64();
                    }
                    let gb = buf!(*b);
                    gb.iter_mut()
                        .zip(acc)
                        .for_each(|(x, y)| *x = T::from_f64(x.as_f64() + y));
                }
            }
            Op::Relu(x) => {
                let xv = val(*x);
                let gx = buf!(*x);
                for (idx, gv) in gx.iter_mut().enumerate() {
                    if xv[idx] > T::zero() {
                        *gv = *gv + g[idx];
                    }
                }
            }
            Op::Scale(x, c) => {
                let gx = buf!(*x);
                for (gv, y) in gx.iter_mut().zip(g) {
                    *gv = T::from_f64(gv.as_f64() + y.as_f64() * c);
                }
            }
            Op::Ln { x, eps } => {
                let xv = val(*x);
                let gx = buf!(*x);
                for (idx, gv) in gx.iter_mut().enumerate() {
                    *gv = T::from_f64(gv.as_f64() + g[idx].as_f64() / (xv[idx].as_f64() + eps));
                }
            }
            Op::Sum(x) => {
                let gx = buf!(*x);
                gx.iter_mut().for_each(|v| *v = *v + g[0]);
            }
            Op::Mean(x) => {
                let gx = buf!(*x);
                let s = T::from_f64(g[0].as_f64() / gx.len() as f64);
                gx.iter_mut().for_each(|v| *v = *v + s);
            }
            Op::MeanAxis { x, axis } => {
                let (outer, len, inner) = split_axis(nodes[x.0].value.dims(), *axis);
                let gx = buf!(*x);
                for o in 0..outer {
                    for j in 0..inner {
                        let s = T::from_f64(g[o * inner + j].as_f64() / len as f64);
                        for l in 0..len {
                            let idx = (o * len + l) * inner + j;
                            gx[idx] = gx[idx] + s;
                        }
                    }
                }
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let xd = nodes[x.0].value.dims();
                let wd = nodes[w.0].value.dims();
                let od = nodes[i].value.dims();
                let geom = ConvGeom {
                    c: xd[1],
                    h: xd[2],
                    w: xd[3],
                    kh: wd[2],
                    kw: wd[3],
                    ho: od[2],
                    wo: od[3],
                    stride: *stride,
                    pad: *pad,
                };
                let (n, o) = (xd[0], wd[0]);
                let (rows, cols) = (geom.rows(), geom.cols());
                let per = geom.c * geom.h * geom.w;
                let mut colbuf = vec![T::zero(); rows * cols];
                let mut dcol = vec![T::zero(); rows * cols];
                let xv = val(*x);
                let wv = val(*w);
                for s in 0..n {
                    let gs = &g[s * o * cols..(s + 1) * o * cols];
                    if wants(w) {
                        geom.im2col(&xv[s * per..(s + 1) * per], &mut colbuf);
                        gemm_nt(o, cols, rows, gs, &colbuf, buf!(*w), true);
                    }
                    if wants(x) {
                        gemm_tn(rows, o, cols, wv, gs, &mut dcol, false);
                        geom.col2im(&dcol, &mut buf!(*x)[s * per..(s + 1) * per]);
                    }
                }
                if let Some(b) = b {
                    if wants(b) {
                        let mut acc = vec![0.0f64; o];
                        for s in 0..n {
                            for (oc, a) in acc.iter_mut().enumerate() {
                                let base = (s * o + oc) * cols;
                                *a += g[base..base + cols].iter().map(|v| v.as_f64()).sum::<f64>();
                            }
                        }
                        let gb = buf!(*b);
                        gb.iter_mut()
                            .zip(acc)
                            .for_each(|(v, a)| *v = T::from_f64(v.as_f64() + a));
                    }
                }
            }
            Op::MaxPool { x, argmax } => {
                let gx = buf!(*x);
                for (gv, &src) in g.iter().zip(argmax) {
                    gx[src] = gx[src] + *gv;
                }
            }
            Op::AdaptiveAvgPool { x, oh, ow } => {
                let xd = nodes[x.0].value.dims();
                let (nc, h, w) = (xd[0] * xd[1], xd[2], xd[3]);
                let gx = buf!(*x);
                for p in 0..nc {
                    for oi in 0..*oh {
                        let (y0, y1) = pool_bounds(oi, *oh, h);
                        for oj in 0..*ow {
                            let (x0, x1) = pool_bounds(oj, *ow, w);
                            let share = g[(p * oh + oi) * ow + oj].as_f64() / ((y1 - y0) * (x1 - x0)) as f64;
                            for y in y0..y1 {
                                for xx in x0..x1 {
                                    let idx = p * h * w + y * w + xx;
                                    gx[idx] = T::from_f64(gx[idx].as_f64() + share);
                                }
                            }
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = nodes[gamma.0].value.numel();
                let rows = rstd.len();
                let gam = val(*gamma);
                if wants(x) {
                    let gx = buf!(*x);
                    for r in 0..rows {
                        let mut dxhat = vec![0.0f64; d];
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..d {
                            let dxh = g[r * d + j].as_f64() * gam[j].as_f64();
                            dxhat[j] = dxh;
                            mean_d += dxh;
                            mean_dx += dxh * xhat[r * d + j];
                        }
                        mean_d /= d as f64;
                        mean_dx /= d as f64;
                        for (j, dxh) in dxhat.iter().enumerate() {
                            let idx = r * d + j;
                            let v = rstd[r] * (dxh - mean_d - xhat[idx] * mean_dx);
                            gx[idx] = T::from_f64(gx[idx].as_f64() + v);
                        }
                    }
                }
                if wants(gamma) || wants(beta) {
                    let mut dg = vec![0.0f64; d];
                    let mut db = vec![0.0f64; d];
                    for r in 0..rows {
                        for j in 0..d {
                            let gv = g[r * d + j].as_f64();
                            dg[j] += gv * xhat[r * d + j];
                            db[j] += gv;
                        }
                    }
                    if wants(gamma) {
                        let gg = buf!(*gamma);
                        gg.iter_mut()
                            .zip(dg)
                            .for_each(|(v, a)| *v = T::from_f64(v.as_f64() + a));
                    }
                    if wants(beta) {
                        let gb = buf!(*beta);
                        gb.iter_mut()
                            .zip(db)
                            .for_each(|(v, a)| *v = T::from_f64(v.as_f64() + a));
                    }
                }
            }
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = split_axis(nodes[i].value.dims(), *axis);
                let gx = buf!(*x);
                for o in 0..outer {
                    for j in 0..inner {
                        let at = |l: usize| (o * len + l) * inner + j;
                        let dot: f64 = (0..len).map(|l| g[at(l)].as_f64() * out[at(l)].as_f64()).sum();
                        for l in 0..len {
                            let idx = at(l);
                            let v = out[idx].as_f64() * (g[idx].as_f64() - dot);
                            gx[idx] = T::from_f64(gx[idx].as_f64() + v);
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let d = nodes[table.0].value.dims()[1];
                let gt = buf!(*table);
                for (row, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        gt[id * d + j] = gt[id * d + j] + g[row * d + j];
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let dims = nodes[i].value.dims();
                let (outer, total, inner) = split_axis(dims, *axis);
                let mut offset = 0;
                for p in parts {
                    let len = nodes[p.0].value.dims()[*axis];
                    if wants(p) {
                        let gp = buf!(*p);
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            let dst = o * len * inner;
                            for t in 0..len * inner {
                                gp[dst + t] = gp[dst + t] + g[src + t];
                            }
                        }
                    }
                    offset += len;
                }
            }
            Op::Reshape(x) => {
                let gx = buf!(*x);
                gx.iter_mut().zip(g).for_each(|(a, b)| *a = *a + *b);
            }
            Op::Transpose { x, a0, a1 } => {
                let (_, map) = transpose_map(nodes[x.0].value.dims(), *a0, *a1);
                let gx = buf!(*x);
                for (o, &src) in map.iter().enumerate() {
                    gx[src] = gx[src] + g[o];
                }
            }
            Op::Narrow { x, axis, start } => {
                let full = nodes[x.0].value.dims()[*axis];
                let (outer, len, inner) = split_axis(nodes[i].value.dims(), *axis);
                let gx = buf!(*x);
                for o in 0..outer {
                    let dst = (o * full + start) * inner;
                    for t in 0..len * inner {
                        gx[dst + t] = gx[dst + t] + g[o * len * inner + t];
                    }
                }
            }
            Op::Gather { x, idx } => {
                let cols = nodes[x.0].value.dims()[1];
                let gx = buf!(*x);
                for (n, &c) in idx.iter().enumerate() {
                    gx[n * cols + c] = gx[n * cols + c] + g[n];
                }
            }
            Op::Attention { q, k, v, heads, probs } => {
                let qd = nodes[q.0].value.dims();
                let (n, tq, d) = (qd[0], qd[1], qd[2]);
                let tk = nodes[k.0].value.dims()[1];
                let heads = *heads;
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let (qv, kv, vv) = (val(*q), val(*k), val(*v));
                let mut qh = vec![T::zero(); tq * dh];
                let mut kh = vec![T::zero(); tk * dh];
                let mut vh = vec![T::zero(); tk * dh];
                let mut goh = vec![T::zero(); tq * dh];
                let mut dp = vec![T::zero(); tq * tk];
                let mut tmp_q = vec![T::zero(); tq * dh];
                let mut tmp_k = vec![T::zero(); tk * dh];
                for b in 0..n {
                    for h in 0..heads {
                        let p = &probs[(b * heads + h) * tq * tk..(b * heads + h + 1) * tq * tk];
                        gather_head(qv, b, tq, d, h, dh, &mut qh);
                        gather_head(kv, b, tk, d, h, dh, &mut kh);
                        gather_head(vv, b, tk, d, h, dh, &mut vh);
                        gather_head(g, b, tq, d, h, dh, &mut goh);
                        if wants(v) {
                            gemm_tn(tk, tq, dh, p, &goh, &mut tmp_k, false);
                            scatter_head(&tmp_k, b, tk, d, h, dh, buf!(*v), true);
                        }
                        if wants(q) || wants(k) {
                            gemm_nt(tq, dh, tk, &goh, &vh, &mut dp, false);
                            // dS = P ∘ (dP − rowsum(dP ∘ P)), folded with the 1/√dh scale
                            for r in 0..tq {
                                let row = r * tk..(r + 1) * tk;
                                let dot: f64 = dp[row.clone()]
                                    .iter()
                                    .zip(&p[row.clone()])
                                    .map(|(a, b)| a.as_f64() * b.as_f64())
                                    .sum();
                                for c in row {
                                    dp[c] = T::from_f64(p[c].as_f64() * (dp[c].as_f64() - dot) * scale);
                                }
                            }
                            if wants(q) {
                                gemm_nn(tq, tk, dh, &dp, &kh, &mut tmp_q, false);
                                scatter_head(&tmp_q, b, tq, d, h, dh, buf!(*q), true);
                            }
                            if wants(k) {
                                gemm_tn(tk, tq, dh, &dp, &qh, &mut tmp_k, false);
                                scatter_head(&tmp_k, b, tk, d, h, dh, buf!(*k), true);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn grad_slot<'a, T: Element>(nodes: &[Node<T>], grads: &'a mut [Option<Vec<T>>], v: Var) -> &'a mut Vec<T> {
    let n = nodes[v.0].value.numel();
    grads[v.0].get_or_insert_with(|| vec![T::zero(); n])
}

fn gather_head<T: Element>(src: &[T], b: usize, t: usize, d: usize, h: usize, dh: usize, dst: &mut [T]) {
    for i in 0..t {
        let from = (b * t + i) * d + h * dh;
        dst[i * dh..(i + 1) * dh].copy_from_slice(&src[from..from + dh]);
    }
}

#[allow(clippy::too_many_arguments)]
fn scatter_head<T: Element>(
    src: &[T],
    b: usize,
    t: usize,
    d: usize,
    h: usize,
    dh: usize,
    dst: &mut [T],
    accumulate: bool,
) {
    for i in 0..t {
        let to = (b * t + i) * d + h * dh;
        let row = &mut dst[to..to + dh];
        let s = &src[i * dh..(i + 1) * dh];
        if accumulate {
            row.iter_mut().zip(s).for_each(|(a, b)| *a = *a + *b);
        } else {
            row.copy_from_slice(s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{run_op_suite, OP_TOLERANCE};

    fn t(dims: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64_slice(dims, v).unwrap()
    }

    #[test]
    fn relu_clamps_negatives() {
        let mut g = Graph::new();
        let x = g.input(t(&[3], &[-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.input(t(&[2, 4], &[1.0, 2.0, 3.0, 4.0, -50.0, 0.0, 50.0, 1.0]));
        let y = g.softmax(x, 1).unwrap();
        for row in g.value(y).data().chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_by_one_conv_is_a_matmul() {
        let (c, o, hw) = (3, 2, 4);
        let xs: Vec<f64> = (0..c * hw).map(|i| (i as f64 * 0.37).sin()).collect();
        let ws: Vec<f64> = (0..o * c).map(|i| (i as f64 * 0.91).cos()).collect();
        let mut g = Graph::new();
        let x = g.input(t(&[1, c, 2, 2], &xs));
        let w = g.input(t(&[o, c, 1, 1], &ws));
        let y = g.conv2d(x, w, None, 1, 0).unwrap();
        // independent: out[o][p] = Σ_c w[o][c] x[c][p]
        for oc in 0..o {
            for p in 0..hw {
                let expect: f64 = (0..c).map(|ci| ws[oc * c + ci] * xs[ci * hw + p]).sum();
                assert!((g.value(y).data()[oc * hw + p] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_head_attention_matches_direct_formula() {
        let (tq, tk, d) = (2, 3, 4);
        let q: Vec<f64> = (0..tq * d).map(|i| (i as f64 * 0.3).sin()).collect();
        let k: Vec<f64> = (0..tk * d).map(|i| (i as f64 * 0.7).cos()).collect();
        let v: Vec<f64> = (0..tk * d).map(|i| i as f64 * 0.1 - 0.5).collect();
        let mut g = Graph::new();
        let (qv, kv, vv) = (
            g.input(t(&[1, tq, d], &q)),
            g.input(t(&[1, tk, d], &k)),
            g.input(t(&[1, tk, d], &v)),
        );
        let out = g.scaled_dot_product_attention(qv, kv, vv, 1).unwrap();
        for i in 0..tq {
            let scores: Vec<f64> = (0..tk)
                .map(|j| (0..d).map(|e| q[i * d + e] * k[j * d + e]).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            for e in 0..d {
                let expect: f64 = (0..tk).map(|j| scores[j].exp() / z * v[j * d + e]).sum();
                assert!((g.value(out).data()[i * d + e] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn every_op_passes_finite_differences() {
        for r in run_op_suite(7).unwrap() {
            assert!(r.max_rel_error <= OP_TOLERANCE, "{}: {:e}", r.name, r.max_rel_error);
        }
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let y = g.scale(x, 2.0);
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut g = Graph::<f32>::new();
        let a = g.input(Tensor::zeros(&[2, 3]));
        let b = g.input(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("matmul"), "{err}");
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, -3.0]));
        let c = g.input(t(&[2], &[2.0, 5.0]));
        let y = g.mul(x, c).unwrap();
        let l = g.sum(y);
        g.backward(l).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[4.0, 10.0]);
        assert!(g.grad(c).is_none());
        g.zero_grad();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn tape_is_topologically_ordered() {
        let mut g = Graph::new();
        let a = g.param(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = g.relu(a);
        let c = g.matmul(b, a).unwrap();
        let d = g.concat(&[c, b], 0).unwrap();
        let _ = g.mean(d);
        for i in 0..g.len() {
            assert!(g.parents(Var(i)).iter().all(|p| p.0 < i));
        }
    }
}
