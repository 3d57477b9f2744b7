use super::kernels::{self, ConvGeom, MatView};
use super::{Precision, Tensor};
use crate::error::{Error, Result};

/// Handle to a tensor recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(usize);

impl TensorId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Conv2d { stride: usize, padding: usize },
    Add,
    Mul,
    Concat,
    SliceChannels { start: usize },
    Relu,
    Sigmoid,
    ResizeBilinear,
    Bce { eps: f64, pos_weight: f64 },
    Sum,
    Scale(f64),
    #[cfg(test)]
    FaultyScale(f64),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    inputs: Vec<TensorId>,
    output: TensorId,
}

/// Define-by-run tape. Every op appends its output tensor and a node; backward
/// walks the nodes in exact reverse recording order.
#[derive(Debug, Default)]
pub struct Graph {
    values: Vec<Tensor>,
    nodes: Vec<Node>,
    precision: Precision,
}

impl Graph {
    pub fn new(precision: Precision) -> Self {
        Graph {
            values: Vec::new(),
            nodes: Vec::new(),
            precision,
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Adds a leaf tensor (keeps its `requires_grad` flag, clears any grad).
    pub fn leaf(&mut self, mut tensor: Tensor) -> TensorId {
        tensor.set_grad(None);
        self.values.push(tensor);
        TensorId(self.values.len() - 1)
    }

    /// Adds a trainable leaf.
    pub fn param(&mut self, tensor: Tensor) -> TensorId {
        self.leaf(tensor.with_requires_grad(true))
    }

    /// Adds a constant leaf.
    pub fn constant(&mut self, tensor: Tensor) -> TensorId {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.values[id.0].shape()
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.values[id.0].grad()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn record(&mut self, op: Op, inputs: Vec<TensorId>, out: Tensor, name: &'static str) -> Result<TensorId> {
        if !out.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|i| self.values[i.0].requires_grad());
        let output = self.leaf(out.with_requires_grad(requires_grad));
        self.nodes.push(Node { op, inputs, output });
        Ok(output)
    }

    /// 2-D cross-correlation, `x: [N,Cin,H,W]`, `weight: [Cout,Cin,kh,kw]`, `bias: [Cout]`.
    ///
    /// Output size uses floor division: `(H + 2p - kh) / stride + 1`.
    pub fn conv2d(&mut self, x: TensorId, weight: TensorId, bias: TensorId, stride: usize, padding: usize) -> Result<TensorId> {
        let geom = self.conv_geom(x, weight, bias, stride, padding)?;
        let (n, _, _, _) = self.values[x.0].dims4()?;
        let cout = self.values[weight.0].shape()[0];
        let (xv, wv, bv) = (&self.values[x.0], &self.values[weight.0], &self.values[bias.0]);
        let in_len = geom.channels * geom.height * geom.width;
        let (k, p) = (geom.patch_len(), geom.out_len());
        let mut out = vec![0.0; n * cout * p];
        let mut cols = if geom.is_pointwise() { Vec::new() } else { vec![0.0; k * p] };
        for b in 0..n {
            let xb = &xv.data()[b * in_len..(b + 1) * in_len];
            let colm: &[f64] = if geom.is_pointwise() {
                xb
            } else {
                kernels::im2col(xb, &geom, &mut cols);
                &cols
            };
            let ob = &mut out[b * cout * p..(b + 1) * cout * p];
            for (c, row) in ob.chunks_exact_mut(p).enumerate() {
                row.fill(bv.data()[c]);
            }
            kernels::gemm(self.precision, wv.data(), MatView::dense(cout, k), colm, MatView::dense(k, p), 1.0, ob);
        }
        let out = Tensor::new(&[n, cout, geom.out_h, geom.out_w], out)?;
        self.record(Op::Conv2d { stride, padding }, vec![x, weight, bias], out, "conv2d")
    }

    fn conv_geom(&self, x: TensorId, weight: TensorId, bias: TensorId, stride: usize, padding: usize) -> Result<ConvGeom> {
        let (_, cin, h, w) = self.values[x.0].dims4()?;
        let (cout, wcin, kh, kw) = match self.values[weight.0].shape() {
            &[a, b, c, d] => (a, b, c, d),
            s => return Err(Error::shape("conv2d", format!("weight must be [Cout,Cin,kh,kw], got {s:?}"))),
        };
        if wcin != cin {
            return Err(Error::shape("conv2d", format!("input channels: x has Cin={cin}, weight expects {wcin}")));
        }
        if self.values[bias.0].shape() != [cout] {
            return Err(Error::shape(
                "conv2d",
                format!("bias: expected [{cout}], got {:?}", self.values[bias.0].shape()),
            ));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::shape("conv2d", format!("kernel size {kh}x{kw} must be odd")));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d: stride must be >= 1".into()));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::shape(
                "conv2d",
                format!("height/width {h}x{w} with padding {padding} smaller than kernel {kh}x{kw}"),
            ));
        }
        Ok(ConvGeom {
            channels: cin,
            height: h,
            width: w,
            kh,
            kw,
            stride,
            padding,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (w + 2 * padding - kw) / stride + 1,
        })
    }

    pub fn add(&mut self, x: TensorId, y: TensorId) -> Result<TensorId> {
        let (a, b) = (&self.values[x.0], &self.values[y.0]);
        if a.shape() != b.shape() {
            return Err(Error::shape("add", format!("{:?} vs {:?}", a.shape(), b.shape())));
        }
        let data = a.data().iter().zip(b.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(a.shape(), data)?;
        self.record(Op::Add, vec![x, y], out, "add")
    }

    /// Elementwise product.
    pub fn mul(&mut self, x: TensorId, y: TensorId) -> Result<TensorId> {
        let (a, b) = (&self.values[x.0], &self.values[y.0]);
        if a.shape() != b.shape() {
            return Err(Error::shape("mul", format!("{:?} vs {:?}", a.shape(), b.shape())));
        }
        let data = a.data().iter().zip(b.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(a.shape(), data)?;
        self.record(Op::Mul, vec![x, y], out, "mul")
    }

    /// Channel-axis concatenation of 4-D tensors.
    pub fn concat(&mut self, xs: &[TensorId]) -> Result<TensorId> {
        let first = xs.first().ok_or_else(|| Error::InvalidArgument("concat: empty input list".into()))?;
        let (n, _, h, w) = self.values[first.0].dims4()?;
        let mut channels = Vec::with_capacity(xs.len());
        for id in xs {
            let (ni, ci, hi, wi) = self.values[id.0].dims4()?;
            if (ni, hi, wi) != (n, h, w) {
                return Err(Error::shape(
                    "concat",
                    format!("non-channel dims [{ni},_,{hi},{wi}] differ from [{n},_,{h},{w}]"),
                ));
            }
            channels.push(ci);
        }
        let total: usize = channels.iter().sum();
        let plane = h * w;
        let mut data = Vec::with_capacity(n * total * plane);
        for b in 0..n {
            for (id, &c) in xs.iter().zip(&channels) {
                let src = self.values[id.0].data();
                data.extend_from_slice(&src[b * c * plane..(b + 1) * c * plane]);
            }
        }
        let out = Tensor::new(&[n, total, h, w], data)?;
        self.record(Op::Concat, xs.to_vec(), out, "concat")
    }

    pub fn slice_channels(&mut self, x: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let out = self.values[x.0].channel_slice(start, len)?;
        self.record(Op::SliceChannels { start }, vec![x], out, "slice_channels")
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId> {
        let v = &self.values[x.0];
        let out = Tensor::new(v.shape(), v.data().iter().map(|&a| a.max(0.0)).collect())?;
        self.record(Op::Relu, vec![x], out, "relu")
    }

    pub fn sigmoid(&mut self, x: TensorId) -> Result<TensorId> {
        let v = &self.values[x.0];
        let out = Tensor::new(v.shape(), v.data().iter().map(|&a| sigmoid(a)).collect())?;
        self.record(Op::Sigmoid, vec![x], out, "sigmoid")
    }

    /// Bilinear resize of a 4-D tensor with half-pixel centres (align-corners = false).
    pub fn resize_bilinear(&mut self, x: TensorId, out_h: usize, out_w: usize) -> Result<TensorId> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::InvalidArgument(format!("resize_bilinear: target {out_h}x{out_w}")));
        }
        let v = &self.values[x.0];
        let (n, c, h, w) = v.dims4()?;
        let data = if (h, w) == (out_h, out_w) {
            v.data().to_vec()
        } else {
            let rows = kernels::bilinear_taps(h, out_h);
            let cols = kernels::bilinear_taps(w, out_w);
            let mut data = vec![0.0; n * c * out_h * out_w];
            for (src, dst) in v.data().chunks_exact(h * w).zip(data.chunks_exact_mut(out_h * out_w)) {
                kernels::resize_plane(src, w, &rows, &cols, dst);
            }
            data
        };
        let out = Tensor::new(&[n, c, out_h, out_w], data)?;
        self.record(Op::ResizeBilinear, vec![x], out, "resize_bilinear")
    }

    /// Mean binary cross-entropy of probabilities `pred` against `target`.
    ///
    /// `pred` is clamped to `[eps, 1 - eps]`; positives are weighted by `pos_weight`.
    pub fn bce(&mut self, pred: TensorId, target: TensorId, eps: f64, pos_weight: f64) -> Result<TensorId> {
        let (p, t) = (&self.values[pred.0], &self.values[target.0]);
        if p.shape() != t.shape() {
            return Err(Error::shape("bce_loss", format!("pred {:?} vs target {:?}", p.shape(), t.shape())));
        }
        let mut acc = 0.0;
        for (&pv, &tv) in p.data().iter().zip(t.data()) {
            let pc = pv.clamp(eps, 1.0 - eps);
            acc -= pos_weight * tv * pc.ln() + (1.0 - tv) * (1.0 - pc).ln();
        }
        let out = Tensor::scalar(acc / p.numel() as f64);
        self.record(Op::Bce { eps, pos_weight }, vec![pred, target], out, "bce_loss")
    }

    pub fn sum(&mut self, x: TensorId) -> Result<TensorId> {
        let out = Tensor::scalar(self.values[x.0].data().iter().sum());
        self.record(Op::Sum, vec![x], out, "sum")
    }

    pub fn scale(&mut self, x: TensorId, factor: f64) -> Result<TensorId> {
        let v = &self.values[x.0];
        let out = Tensor::new(v.shape(), v.data().iter().map(|a| a * factor).collect())?;
        self.record(Op::Scale(factor), vec![x], out, "scale")
    }

    /// Scale whose backward is deliberately wrong by a factor of two.
    #[cfg(test)]
    pub(crate) fn faulty_scale(&mut self, x: TensorId, factor: f64) -> Result<TensorId> {
        let v = &self.values[x.0];
        let out = Tensor::new(v.shape(), v.data().iter().map(|a| a * factor).collect())?;
        self.record(Op::FaultyScale(factor), vec![x], out, "faulty_scale")
    }

    /// Reverse-mode sweep from a scalar root. Gradients accumulate (`+=`) into
    /// every reachable tensor with `requires_grad`.
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        if self.values[root.0].numel() != 1 {
            return Err(Error::NonScalarRoot(self.values[root.0].shape().to_vec()));
        }
        for v in &mut self.values {
            v.set_grad(None);
        }
        self.values[root.0].set_grad(Some(vec![1.0]));
        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            let Some(grad_out) = self.values[node.output.0].grad() else {
                continue;
            };
            let contributions = self.node_backward(node, grad_out)?;
            let inputs = node.inputs.clone();
            for (input, contribution) in inputs.into_iter().zip(contributions) {
                if let Some(c) = contribution {
                    if self.values[input.0].requires_grad() {
                        self.values[input.0].accumulate_grad(&c);
                    }
                }
            }
        }
        Ok(())
    }

    fn wants_grad(&self, id: TensorId) -> bool {
        self.values[id.0].requires_grad()
    }

    fn node_backward(&self, node: &Node, g: &[f64]) -> Result<Vec<Option<Vec<f64>>>> {
        let val = |i: usize| &self.values[node.inputs[i].0];
        let grads = match node.op {
            Op::Conv2d { stride, padding } => {
                let (x, w, b) = (node.inputs[0], node.inputs[1], node.inputs[2]);
                let (dx, dw, db) = self.conv2d_backward(x, w, b, stride, padding, g)?;
                vec![dx, dw, db]
            }
            Op::Add => vec![Some(g.to_vec()), Some(g.to_vec())],
            Op::Mul => {
                let (a, b) = (val(0).data(), val(1).data());
                vec![
                    Some(b.iter().zip(g).map(|(q, d)| q * d).collect()),
                    Some(a.iter().zip(g).map(|(p, d)| p * d).collect()),
                ]
            }
            Op::Concat => {
                let (n, _, h, w) = val(0).dims4()?;
                let plane = h * w;
                let total: usize = node.inputs.iter().map(|i| self.values[i.0].shape()[1]).sum();
                let mut offset = 0;
                let mut out = Vec::with_capacity(node.inputs.len());
                for id in &node.inputs {
                    let c = self.values[id.0].shape()[1];
                    if self.wants_grad(*id) {
                        let mut gi = Vec::with_capacity(n * c * plane);
                        for b in 0..n {
                            let base = (b * total + offset) * plane;
                            gi.extend_from_slice(&g[base..base + c * plane]);
                        }
                        out.push(Some(gi));
                    } else {
                        out.push(None);
                    }
                    offset += c;
                }
                out
            }
            Op::SliceChannels { start } => {
                let (n, c, h, w) = val(0).dims4()?;
                let len = self.values[node.output.0].shape()[1];
                let plane = h * w;
                let mut gi = vec![0.0; n * c * plane];
                for b in 0..n {
                    let dst = (b * c + start) * plane;
                    let src = b * len * plane;
                    gi[dst..dst + len * plane].copy_from_slice(&g[src..src + len * plane]);
                }
                vec![Some(gi)]
            }
            Op::Relu => {
                let x = val(0).data();
                vec![Some(x.iter().zip(g).map(|(&a, &d)| if a > 0.0 { d } else { 0.0 }).collect())]
            }
            Op::Sigmoid => {
                let y = self.values[node.output.0].data();
                vec![Some(y.iter().zip(g).map(|(&s, &d)| d * s * (1.0 - s)).collect())]
            }
            Op::ResizeBilinear => {
                let (n, c, h, w) = val(0).dims4()?;
                let out_shape = self.values[node.output.0].shape();
                let (oh, ow) = (out_shape[2], out_shape[3]);
                if (h, w) == (oh, ow) {
                    vec![Some(g.to_vec())]
                } else {
                    let rows = kernels::bilinear_taps(h, oh);
                    let cols = kernels::bilinear_taps(w, ow);
                    let mut gi = vec![0.0; n * c * h * w];
                    for (gd, gs) in g.chunks_exact(oh * ow).zip(gi.chunks_exact_mut(h * w)) {
                        kernels::resize_plane_adjoint(gd, w, &rows, &cols, gs);
                    }
                    vec![Some(gi)]
                }
            }
            Op::Bce { eps, pos_weight } => {
                let (p, t) = (val(0), val(1));
                let scale = g[0] / p.numel() as f64;
                let dp = p
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(&pv, &tv)| {
                        if pv < eps || pv > 1.0 - eps {
                            0.0
                        } else {
                            scale * (-pos_weight * tv / pv + (1.0 - tv) / (1.0 - pv))
                        }
                    })
                    .collect();
                let dt = if self.wants_grad(node.inputs[1]) {
                    Some(
                        p.data()
                            .iter()
                            .map(|&pv| {
                                let pc = pv.clamp(eps, 1.0 - eps);
                                scale * (-pos_weight * pc.ln() + (1.0 - pc).ln())
                            })
                            .collect(),
                    )
                } else {
                    None
                };
                vec![Some(dp), dt]
            }
            Op::Sum => vec![Some(vec![g[0]; val(0).numel()])],
            Op::Scale(f) => vec![Some(g.iter().map(|d| d * f).collect())],
            #[cfg(test)]
            Op::FaultyScale(f) => vec![Some(g.iter().map(|d| 2.0 * d * f).collect())],
        };
        Ok(grads)
    }

    #[allow(clippy::type_complexity)]
    fn conv2d_backward(
        &self,
        x: TensorId,
        weight: TensorId,
        bias: TensorId,
        stride: usize,
        padding: usize,
        g: &[f64],
    ) -> Result<(Option<Vec<f64>>, Option<Vec<f64>>, Option<Vec<f64>>)> {
        let geom = self.conv_geom(x, weight, bias, stride, padding)?;
        let (xv, wv) = (&self.values[x.0], &self.values[weight.0]);
        let (n, _, _, _) = xv.dims4()?;
        let cout = wv.shape()[0];
        let (k, p) = (geom.patch_len(), geom.out_len());
        let in_len = geom.channels * geom.height * geom.width;
        let (need_x, need_w, need_b) = (self.wants_grad(x), self.wants_grad(weight), self.wants_grad(bias));

        let mut dx = need_x.then(|| vec![0.0; xv.numel()]);
        let mut dw = need_w.then(|| vec![0.0; wv.numel()]);
        let mut db = need_b.then(|| vec![0.0; cout]);
        let mut cols = if geom.is_pointwise() || !need_w { Vec::new() } else { vec![0.0; k * p] };
        let mut dcols = if geom.is_pointwise() || !need_x { Vec::new() } else { vec![0.0; k * p] };

        for b in 0..n {
            let gb = &g[b * cout * p..(b + 1) * cout * p];
            let gv = MatView::dense(cout, p);
            if let Some(db) = db.as_mut() {
                for (c, row) in gb.chunks_exact(p).enumerate() {
                    db[c] += row.iter().sum::<f64>();
                }
            }
            if let Some(dw) = dw.as_mut() {
                let xb = &xv.data()[b * in_len..(b + 1) * in_len];
                let colm: &[f64] = if geom.is_pointwise() {
                    xb
                } else {
                    kernels::im2col(xb, &geom, &mut cols);
                    &cols
                };
                // dW[cout,k] += g[cout,p] . cols[k,p]^T
                kernels::gemm(self.precision, gb, gv, colm, MatView::dense(k, p).transposed(), 1.0, dw);
            }
            if let Some(dx) = dx.as_mut() {
                let wt = MatView::dense(cout, k).transposed();
                let dxb = &mut dx[b * in_len..(b + 1) * in_len];
                if geom.is_pointwise() {
                    kernels::gemm(self.precision, wv.data(), wt, gb, gv, 0.0, dxb);
                } else {
                    // dcols[k,p] = W^T[k,cout] . g[cout,p]
                    kernels::gemm(self.precision, wv.data(), wt, gb, gv, 0.0, &mut dcols);
                    kernels::col2im(&dcols, &geom, dxb);
                }
            }
        }
        Ok((dx, dw, db))
    }
}

/// Largest `f64` strictly below one.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function evaluated on the branch that cannot overflow, kept
/// strictly inside `(0, 1)`: results that would round to 0 or 1 are clamped
/// to the nearest representable interior value.
pub fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, ONE_BELOW)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn conv_full_overlap_sums_ones() {
        let mut g = Graph::new(Precision::F64);
        let x = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let w = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let b = g.constant(Tensor::zeros(&[1]));
        let y = g.conv2d(x, w, b, 1, 1).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 3, 3]);
        assert_eq!(g.value(y).data()[4], 9.0);
        assert_eq!(g.value(y).data()[0], 4.0);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut g = Graph::new(Precision::F64);
        let xt = Tensor::from_fn(&[2, 1, 4, 5], |i| (i as f64).sin());
        let x = g.constant(xt.clone());
        let w = g.constant(Tensor::full(&[1, 1, 1, 1], 1.0));
        let b = g.constant(Tensor::zeros(&[1]));
        let y = g.conv2d(x, w, b, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), xt.data());
    }

    #[test]
    fn conv_shape_errors_name_dimension() {
        let mut g = Graph::new(Precision::F64);
        let x = g.constant(Tensor::zeros(&[1, 3, 5, 5]));
        let w = g.constant(Tensor::zeros(&[4, 2, 3, 3]));
        let b = g.constant(Tensor::zeros(&[4]));
        let err = g.conv2d(x, w, b, 1, 1).unwrap_err().to_string();
        assert!(err.contains("input channels"), "{err}");
        let w = g.constant(Tensor::zeros(&[4, 3, 2, 2]));
        assert!(g.conv2d(x, w, b, 1, 1).is_err());
    }

    #[test]
    fn conv_strided_output_size() {
        let mut g = Graph::new(Precision::F64);
        let x = g.constant(Tensor::zeros(&[1, 1, 64, 64]));
        let w = g.constant(Tensor::zeros(&[2, 1, 3, 3]));
        let b = g.constant(Tensor::zeros(&[2]));
        let y = g.conv2d(x, w, b, 2, 1).unwrap();
        assert_eq!(g.shape(y), &[1, 2, 32, 32]);
    }

    #[test]
    fn add_and_its_gradient() {
        let mut g = Graph::new(Precision::F64);
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let y = g.param(t(&[2], &[3.0, 4.0]));
        let z = g.add(x, y).unwrap();
        assert_eq!(g.value(z).data(), &[4.0, 6.0]);
        let s = g.sum(z).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0]);
        assert_eq!(g.grad(y).unwrap(), &[1.0, 1.0]);

        let zero = g.constant(Tensor::zeros(&[2]));
        let same = g.add(x, zero).unwrap();
        assert_eq!(g.value(same).data(), g.value(x).data());
        let bad = g.constant(Tensor::zeros(&[3]));
        assert!(g.add(x, bad).is_err());
    }

    #[test]
    fn fan_out_accumulates() {
        let mut g = Graph::new(Precision::F64);
        let x = g.param(t(&[3], &[1.0, -2.0, 0.5]));
        let z = g.add(x, x).unwrap();
        let s = g.sum(z).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn concat_shapes_and_single_input() {
        let mut g = Graph::new(Precision::F64);
        let a = g.constant(Tensor::from_fn(&[2, 2, 3, 3], |i| i as f64));
        let b = g.constant(Tensor::from_fn(&[2, 3, 3, 3], |i| -(i as f64)));
        let c = g.concat(&[a, b]).unwrap();
        assert_eq!(g.shape(c), &[2, 5, 3, 3]);
        let single = g.concat(&[a]).unwrap();
        assert_eq!(g.value(single).data(), g.value(a).data());
        let odd = g.constant(Tensor::zeros(&[2, 1, 4, 3]));
        assert!(g.concat(&[a, odd]).is_err());
        assert!(g.concat(&[]).is_err());
    }

    #[test]
    fn concat_backward_splits_at_offsets() {
        let mut g = Graph::new(Precision::F64);
        let a = g.param(Tensor::zeros(&[1, 2, 1, 1]));
        let b = g.param(Tensor::zeros(&[1, 3, 1, 1]));
        let c = g.concat(&[a, b]).unwrap();
        let s0 = g.slice_channels(c, 0, 2).unwrap();
        let s1 = g.slice_channels(c, 2, 3).unwrap();
        let a2 = g.scale(s0, 3.0).unwrap();
        let total0 = g.sum(a2).unwrap();
        let total1 = g.sum(s1).unwrap();
        let total = g.add(total0, total1).unwrap();
        g.backward(total).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[3.0, 3.0]);
        assert_eq!(g.grad(b).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn activations() {
        let mut g = Graph::new(Precision::F64);
        let x = g.constant(t(&[2], &[-1.0, 2.0]));
        let r = g.relu(x).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 2.0]);
        assert_eq!(sigmoid(0.0), 0.5);
        for v in [-40.0, 40.0, -800.0, 800.0] {
            let s = sigmoid(v);
            assert!(s.is_finite() && (0.0..=1.0).contains(&s));
        }
        // 1/(1+e^40) = 4.248354255291589e-18 (high-precision reference)
        assert!((sigmoid(-40.0) - 4.248354255291589e-18).abs() < 1e-30);
        assert!(sigmoid(-40.0) > 0.0 && sigmoid(40.0) < 1.0);
        assert!(1.0 - sigmoid(40.0) <= 1.2e-16);
    }

    #[test]
    fn resize_identity_and_corners() {
        let mut g = Graph::new(Precision::F64);
        let x = g.constant(t(&[1, 1, 2, 2], &[0.0, 1.0, 2.0, 3.0]));
        let same = g.resize_bilinear(x, 2, 2).unwrap();
        assert_eq!(g.value(same).data(), &[0.0, 1.0, 2.0, 3.0]);
        let up = g.resize_bilinear(x, 4, 4).unwrap();
        let v = g.value(up).data();
        // Hand-evaluated: rows sample source y in {0, 0.25, 0.75, 1} (clamped ends).
        let expect = [
            0.0, 0.25, 0.75, 1.0, //
            0.5, 0.75, 1.25, 1.5, //
            1.5, 1.75, 2.25, 2.5, //
            2.0, 2.25, 2.75, 3.0,
        ];
        assert_eq!(v, &expect);
        assert_eq!((v[0], v[3], v[12], v[15]), (0.0, 1.0, 2.0, 3.0));
    }

    #[test]
    fn bce_values() {
        let mut g = Graph::new(Precision::F64);
        let p = g.constant(Tensor::full(&[4], 0.5));
        let l = g.bce(p, p, 1e-7, 1.0).unwrap();
        assert!((g.value(l).data()[0] - std::f64::consts::LN_2).abs() < 1e-15);
        let p = g.constant(t(&[4], &[0.0, 1.0, 1.0, 0.0]));
        let l = g.bce(p, p, 1e-7, 1.0).unwrap();
        let expect = -(1.0f64 - 1e-7).ln();
        assert!((g.value(l).data()[0] - expect).abs() < 1e-15);
        let q = g.constant(Tensor::zeros(&[3]));
        assert!(g.bce(p, q, 1e-7, 1.0).is_err());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new(Precision::F64);
        let x = g.param(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new(Precision::F64);
        let x = g.param(Tensor::from_fn(&[2, 3], |i| i as f64));
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn non_finite_is_an_error() {
        let mut g = Graph::new(Precision::F64);
        let x = g.constant(t(&[1], &[f64::MAX]));
        assert!(matches!(g.scale(x, 10.0), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn f32_mode_close_to_f64() {
        let xt = Tensor::from_fn(&[1, 3, 6, 6], |i| (i as f64 * 0.3).cos());
        let wt = Tensor::from_fn(&[2, 3, 3, 3], |i| (i as f64 * 0.7).sin());
        let run = |p: Precision| {
            let mut g = Graph::new(p);
            let x = g.constant(xt.clone());
            let w = g.constant(wt.clone());
            let b = g.constant(Tensor::zeros(&[2]));
            let y = g.conv2d(x, w, b, 1, 1).unwrap();
            g.value(y).data().to_vec()
        };
        for (a, b) in run(Precision::F64).iter().zip(run(Precision::F32)) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
