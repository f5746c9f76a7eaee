//! Reverse-mode differentiation by operation recording.
//!
//! Every op evaluates eagerly and appends a node holding its value. Leaves
//! flagged `requires_grad` keep persistent gradient buffers; `backward` adds
//! into them, so calling it twice on the same loss doubles every gradient
//! until `zero_grad` is called.
//!
//! Complex values are carried as packed real tensors of shape `[2, ...]`
//! (real block first, imaginary block second).

use super::conv::{self, ConvDims};
use super::fft::{mirror, transform_planes};
use super::params::{ParamId, ParamSet};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleChannels(Var, Var),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        dims: ConvDims,
    },
    Pack(Var, Var),
    RealPart(Var),
    ImagPart(Var),
    Fft2(Var),
    Ifft2(Var),
    ModeMix {
        input: Var,
        weight: Var,
        rows: Vec<usize>,
        cols: Vec<usize>,
    },
    Hermitian(Var),
    SpatialMean(Var),
    SpatialMax {
        input: Var,
        argmax: Vec<usize>,
    },
    Affine {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Relu(Var),
    Sigmoid(Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Tensor>>,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape().len() != b.shape().len() {
        return Err(Error::Rank {
            op,
            expected: a.shape().len(),
            got: b.shape().to_vec(),
        });
    }
    for (&x, &y) in a.shape().iter().zip(b.shape()) {
        if x != y {
            return Err(Error::ShapeMismatch {
                op,
                dim: "operand extent",
                expected: x,
                got: y,
            });
        }
    }
    Ok(())
}

fn packed_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize)> {
    match t.shape() {
        &[2, c, h, w] => Ok((c, h, w)),
        s => Err(Error::Rank {
            op,
            expected: 4,
            got: s.to_vec(),
        }),
    }
}

fn sigmoid(x: f64) -> f64 {
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

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            param: None,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Leaf bound to a parameter; differentiable iff the parameter is trainable.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let p = params.get(id);
        let v = self.leaf(p.value.clone(), p.trainable);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, if `backward` reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    /// Gradients of parameter-bound leaves, one slot per parameter of `params`.
    pub fn param_grads(&self, params: &ParamSet) -> Vec<Option<Tensor>> {
        let mut out: Vec<Option<Tensor>> = vec![None; params.len()];
        for (node, g) in self.nodes.iter().zip(&self.leaf_grads) {
            if let (Some(id), Some(g)) = (node.param, g) {
                match &mut out[id.index()] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .for_each(|(a, b)| *a += b),
                    slot => *slot = Some(g.clone()),
                }
            }
        }
        out
    }

    // ---- elementwise -------------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.value(a).map(|v| v * factor);
        self.push(t, Op::Scale(a, factor), &[a])
    }

    /// `x[c, ...] * s[c]`, broadcasting each scale over its channel.
    pub fn scale_channels(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(s));
        let c = *xv.shape().first().unwrap_or(&0);
        if sv.shape() != [c] {
            return Err(Error::ShapeMismatch {
                op: "scale_channels",
                dim: "scale length",
                expected: c,
                got: sv.numel(),
            });
        }
        let per = xv.numel() / c.max(1);
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * sv.data()[i / per])
            .collect();
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(t, Op::ScaleChannels(x, s), &[x, s]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|v| v.max(0.0));
        self.push(t, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        self.push(t, Op::Sigmoid(a), &[a])
    }

    // ---- convolution ----------------------------------------------------------

    pub fn conv2d_periodic(&mut self, input: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let dims = ConvDims::check(
            self.value(input),
            self.value(kernel),
            bias.map(|b| self.value(b)),
        )?;
        let out = conv::forward(
            self.value(input).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
            dims,
        );
        let t = Tensor::new(vec![dims.c_out, dims.h, dims.w], out)?;
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        Ok(self.push(
            t,
            Op::Conv2d {
                input,
                kernel,
                bias,
                dims,
            },
            &inputs,
        ))
    }

    // ---- complex / spectral ------------------------------------------------

    pub fn pack(&mut self, re: Var, im: Var) -> Result<Var> {
        let (r, i) = (self.value(re), self.value(im));
        same_shape("pack", r, i)?;
        let mut shape = vec![2];
        shape.extend_from_slice(r.shape());
        let mut data = r.data().to_vec();
        data.extend_from_slice(i.data());
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::Pack(re, im), &[re, im]))
    }

    fn part(&mut self, z: Var, imag: bool) -> Result<Var> {
        let zv = self.value(z);
        if zv.shape().first() != Some(&2) {
            return Err(Error::InvalidArgument(format!(
                "expected packed complex tensor, got shape {:?}",
                zv.shape()
            )));
        }
        let half = zv.numel() / 2;
        let data = if imag {
            zv.data()[half..].to_vec()
        } else {
            zv.data()[..half].to_vec()
        };
        let t = Tensor::new(zv.shape()[1..].to_vec(), data)?;
        let op = if imag { Op::ImagPart(z) } else { Op::RealPart(z) };
        Ok(self.push(t, op, &[z]))
    }

    pub fn real_part(&mut self, z: Var) -> Result<Var> {
        self.part(z, false)
    }

    pub fn imag_part(&mut self, z: Var) -> Result<Var> {
        self.part(z, true)
    }

    fn transform(&mut self, z: Var, inverse: bool) -> Result<Var> {
        let name = if inverse { "ifft2" } else { "fft2" };
        let zv = self.value(z);
        let (_, h, w) = packed_dims(name, zv)?;
        if h < 2 || w < 2 {
            return Err(Error::InvalidArgument(format!(
                "{name}: spatial size must be at least 2x2"
            )));
        }
        if !zv.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let half = zv.numel() / 2;
        let mut data = zv.data().to_vec();
        let (re, im) = data.split_at_mut(half);
        transform_planes(re, im, h, w, inverse);
        let t = Tensor::new(zv.shape().to_vec(), data)?;
        let op = if inverse { Op::Ifft2(z) } else { Op::Fft2(z) };
        Ok(self.push(t, op, &[z]))
    }

    /// Unnormalized forward 2-D FFT of a packed complex `[2, c, H, W]` value.
    pub fn fft2(&mut self, z: Var) -> Result<Var> {
        self.transform(z, false)
    }

    /// Inverse 2-D FFT (with `1/(HW)`) of a packed complex value.
    pub fn ifft2(&mut self, z: Var) -> Result<Var> {
        self.transform(z, true)
    }

    /// Forward FFT of a real `c × H × W` value.
    pub fn rfft2(&mut self, x: Var) -> Result<Var> {
        let zeros = self.constant(Tensor::zeros(self.value(x).shape()));
        let z = self.pack(x, zeros)?;
        self.fft2(z)
    }

    /// Per-mode complex channel mixing on the retained `rows × cols` bins.
    ///
    /// `weight` is packed `[2, rows, cols, c_out, c_in]`; every bin outside
    /// the retained set is zero in the output.
    pub fn mode_mix(&mut self, z: Var, weight: Var, rows: &[usize], cols: &[usize]) -> Result<Var> {
        const OP: &str = "mode_mix";
        let (c_in, h, w) = packed_dims(OP, self.value(z))?;
        let ws = self.value(weight).shape().to_vec();
        let &[2, nr, nc, c_out, wc_in] = ws.as_slice() else {
            return Err(Error::Rank {
                op: OP,
                expected: 5,
                got: ws,
            });
        };
        if nr != rows.len() {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim: "retained rows",
                expected: rows.len(),
                got: nr,
            });
        }
        if nc != cols.len() {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim: "retained cols",
                expected: cols.len(),
                got: nc,
            });
        }
        if wc_in != c_in {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim: "weight input channels",
                expected: c_in,
                got: wc_in,
            });
        }
        if rows.iter().any(|&r| r >= h) || cols.iter().any(|&c| c >= w) {
            return Err(Error::InvalidArgument(format!(
                "{OP}: retained mode index outside {h}x{w} spectrum"
            )));
        }
        let (zd, wd) = (self.value(z).data(), self.value(weight).data());
        let (zi_off, wi_off) = (c_in * h * w, nr * nc * c_out * c_in);
        let mut out = vec![0.0; 2 * c_out * h * w];
        let oi_off = c_out * h * w;
        for (ri, &r) in rows.iter().enumerate() {
            for (ci, &c) in cols.iter().enumerate() {
                for o in 0..c_out {
                    let (mut ar, mut ai) = (0.0, 0.0);
                    for i in 0..c_in {
                        let widx = ((ri * nc + ci) * c_out + o) * c_in + i;
                        let (wr, wi) = (wd[widx], wd[wi_off + widx]);
                        let zidx = (i * h + r) * w + c;
                        let (xr, xi) = (zd[zidx], zd[zi_off + zidx]);
                        ar += wr * xr - wi * xi;
                        ai += wr * xi + wi * xr;
                    }
                    out[(o * h + r) * w + c] = ar;
                    out[oi_off + (o * h + r) * w + c] = ai;
                }
            }
        }
        let t = Tensor::new(vec![2, c_out, h, w], out)?;
        Ok(self.push(
            t,
            Op::ModeMix {
                input: z,
                weight,
                rows: rows.to_vec(),
                cols: cols.to_vec(),
            },
            &[z, weight],
        ))
    }

    /// Projection onto conjugate-symmetric spectra:
    /// `out(k) = (z(k) + conj(z(-k))) / 2`. The inverse FFT of the result is
    /// real and equals the real part of the inverse FFT of `z`.
    pub fn hermitian(&mut self, z: Var) -> Result<Var> {
        let t = hermitian_apply(self.value(z))?;
        Ok(self.push(t, Op::Hermitian(z), &[z]))
    }

    // ---- reductions -----------------------------------------------------------

    /// Mean over the spatial axes of `c × H × W`, giving `[c]`.
    pub fn spatial_mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (c, h, w) = xv.dims3("spatial_mean")?;
        let hw = (h * w) as f64;
        let data = xv
            .data()
            .chunks(h * w)
            .map(|p| p.iter().sum::<f64>() / hw)
            .collect();
        let t = Tensor::new(vec![c], data)?;
        Ok(self.push(t, Op::SpatialMean(x), &[x]))
    }

    /// Max over the spatial axes of `c × H × W`; ties resolve to the first index.
    pub fn spatial_max(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (c, h, w) = xv.dims3("spatial_max")?;
        let mut argmax = Vec::with_capacity(c);
        let mut data = Vec::with_capacity(c);
        for (ch, plane) in xv.data().chunks(h * w).enumerate() {
            let (mut best, mut idx) = (plane[0], 0);
            for (j, &v) in plane.iter().enumerate().skip(1) {
                if v > best {
                    best = v;
                    idx = j;
                }
            }
            argmax.push(ch * h * w + idx);
            data.push(best);
        }
        let t = Tensor::new(vec![c], data)?;
        Ok(self.push(t, Op::SpatialMax { input: x, argmax }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let s = xv.data().iter().sum::<f64>() / xv.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Mean squared difference.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    // ---- dense ----------------------------------------------------------------

    /// `W x + b` for a vector `x` of length `n`, `W` of shape `[m, n]`.
    pub fn affine(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        const OP: &str = "affine";
        let (xv, wv, bv) = (self.value(x), self.value(weight), self.value(bias));
        let &[m, n] = wv.shape() else {
            return Err(Error::Rank {
                op: OP,
                expected: 2,
                got: wv.shape().to_vec(),
            });
        };
        if xv.shape() != [n] {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim: "input length",
                expected: n,
                got: xv.numel(),
            });
        }
        if bv.shape() != [m] {
            return Err(Error::ShapeMismatch {
                op: OP,
                dim: "bias length",
                expected: m,
                got: bv.numel(),
            });
        }
        let data = (0..m)
            .map(|r| {
                bv.data()[r]
                    + wv.data()[r * n..(r + 1) * n]
                        .iter()
                        .zip(xv.data())
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        let t = Tensor::new(vec![m], data)?;
        Ok(self.push(
            t,
            Op::Affine {
                input: x,
                weight,
                bias,
            },
            &[x, weight, bias],
        ))
    }

    // ---- backward -------------------------------------------------------------

    /// Propagate `d loss / d leaf` into every reachable leaf with
    /// `requires_grad`, adding to any gradient already stored there.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let nodes = &self.nodes;
            let needs = |v: Var| nodes[v.0].requires_grad;
            let val = |v: Var| nodes[v.0].value.data();
            let mut send = |v: Var, contrib: Vec<f64>| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                match &mut adj[v.0] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(contrib),
                }
            };

            match &node.op {
                Op::Leaf => {
                    match &mut self.leaf_grads[idx] {
                        Some(acc) => acc
                            .data_mut()
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(a, b)| *a += b),
                        slot => *slot = Some(Tensor::new(node.value.shape().to_vec(), g)?),
                    }
                    continue;
                }
                &Op::Add(a, b) => {
                    send(a, g.clone());
                    send(b, g);
                }
                &Op::Sub(a, b) => {
                    send(b, g.iter().map(|v| -v).collect());
                    send(a, g);
                }
                &Op::Mul(a, b) => {
                    if needs(a) {
                        send(a, g.iter().zip(val(b)).map(|(p, q)| p * q).collect());
                    }
                    if needs(b) {
                        send(b, g.iter().zip(val(a)).map(|(p, q)| p * q).collect());
                    }
                }
                &Op::Scale(a, f) => send(a, g.iter().map(|v| v * f).collect()),
                &Op::ScaleChannels(x, s) => {
                    let sv = val(s);
                    let per = g.len() / sv.len().max(1);
                    if needs(x) {
                        send(x, g.iter().enumerate().map(|(i, v)| v * sv[i / per]).collect());
                    }
                    if needs(s) {
                        let gs = g
                            .chunks(per)
                            .zip(val(x).chunks(per))
                            .map(|(gc, xc)| gc.iter().zip(xc).map(|(p, q)| p * q).sum())
                            .collect();
                        send(s, gs);
                    }
                }
                &Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    dims,
                } => {
                    let (gi, gk, gb) =
                        conv::backward(val(input), val(kernel), &g, dims, needs(input), needs(kernel));
                    if let Some(gi) = gi {
                        send(input, gi);
                    }
                    if let Some(gk) = gk {
                        send(kernel, gk);
                    }
                    if let Some(b) = bias {
                        send(b, gb);
                    }
                }
                &Op::Pack(re, im) => {
                    let half = g.len() / 2;
                    send(re, g[..half].to_vec());
                    send(im, g[half..].to_vec());
                }
                &Op::RealPart(z) | &Op::ImagPart(z) => {
                    let mut full = vec![0.0; 2 * g.len()];
                    let off = if matches!(node.op, Op::ImagPart(_)) { g.len() } else { 0 };
                    full[off..off + g.len()].copy_from_slice(&g);
                    send(z, full);
                }
                &Op::Fft2(z) | &Op::Ifft2(z) => {
                    // The adjoint of the unnormalized DFT is HW times the inverse
                    // transform; the adjoint of the inverse is the forward over HW.
                    let (_, h, w) = packed_dims("backward", &node.value)?;
                    let hw = (h * w) as f64;
                    let forward = matches!(node.op, Op::Fft2(_));
                    let mut gd = g;
                    let half = gd.len() / 2;
                    let (re, im) = gd.split_at_mut(half);
                    transform_planes(re, im, h, w, forward);
                    let f = if forward { hw } else { 1.0 / hw };
                    gd.iter_mut().for_each(|v| *v *= f);
                    send(z, gd);
                }
                Op::ModeMix {
                    input,
                    weight,
                    rows,
                    cols,
                } => {
                    let (input, weight) = (*input, *weight);
                    let zv = &nodes[input.0].value;
                    let (c_in, h, w) = packed_dims("backward", zv)?;
                    let ws = nodes[weight.0].value.shape();
                    let (nr, nc, c_out) = (ws[1], ws[2], ws[3]);
                    let (zd, wd) = (zv.data(), val(weight));
                    let (zi_off, wi_off, gi_off) = (c_in * h * w, nr * nc * c_out * c_in, c_out * h * w);
                    let mut gz = needs(input).then(|| vec![0.0; zd.len()]);
                    let mut gw = needs(weight).then(|| vec![0.0; wd.len()]);
                    for (ri, &r) in rows.iter().enumerate() {
                        for (ci, &c) in cols.iter().enumerate() {
                            for o in 0..c_out {
                                let gidx = (o * h + r) * w + c;
                                let (gr, gim) = (g[gidx], g[gi_off + gidx]);
                                for i in 0..c_in {
                                    let widx = ((ri * nc + ci) * c_out + o) * c_in + i;
                                    let zidx = (i * h + r) * w + c;
                                    if let Some(gz) = gz.as_mut() {
                                        // conj(W) * g
                                        let (wr, wi) = (wd[widx], wd[wi_off + widx]);
                                        gz[zidx] += wr * gr + wi * gim;
                                        gz[zi_off + zidx] += wr * gim - wi * gr;
                                    }
                                    if let Some(gw) = gw.as_mut() {
                                        // g * conj(z)
                                        let (xr, xi) = (zd[zidx], zd[zi_off + zidx]);
                                        gw[widx] += gr * xr + gim * xi;
                                        gw[wi_off + widx] += gim * xr - gr * xi;
                                    }
                                }
                            }
                        }
                    }
                    if let Some(gz) = gz {
                        send(input, gz);
                    }
                    if let Some(gw) = gw {
                        send(weight, gw);
                    }
                }
                &Op::Hermitian(z) => {
                    // The projection is self-adjoint.
                    let gt = Tensor::new(node.value.shape().to_vec(), g)?;
                    send(z, hermitian_apply(&gt)?.into_data());
                }
                &Op::SpatialMean(x) => {
                    let per = nodes[x.0].value.numel() / g.len();
                    let mut out = Vec::with_capacity(per * g.len());
                    for gv in &g {
                        out.extend(std::iter::repeat(gv / per as f64).take(per));
                    }
                    send(x, out);
                }
                Op::SpatialMax { input, argmax } => {
                    let mut out = vec![0.0; nodes[input.0].value.numel()];
                    for (gv, &i) in g.iter().zip(argmax) {
                        out[i] += gv;
                    }
                    send(*input, out);
                }
                &Op::Affine {
                    input,
                    weight,
                    bias,
                } => {
                    let (xv, wv) = (val(input), val(weight));
                    let n = xv.len();
                    if needs(input) {
                        let mut gx = vec![0.0; n];
                        for (r, gv) in g.iter().enumerate() {
                            for (j, a) in gx.iter_mut().enumerate() {
                                *a += wv[r * n + j] * gv;
                            }
                        }
                        send(input, gx);
                    }
                    if needs(weight) {
                        let gw = g
                            .iter()
                            .flat_map(|gv| xv.iter().map(move |x| gv * x))
                            .collect();
                        send(weight, gw);
                    }
                    send(bias, g);
                }
                &Op::Relu(a) => {
                    let gx = g
                        .iter()
                        .zip(val(a))
                        .map(|(gv, x)| if *x > 0.0 { *gv } else { 0.0 })
                        .collect();
                    send(a, gx);
                }
                &Op::Sigmoid(a) => {
                    let gx = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(gv, s)| gv * s * (1.0 - s))
                        .collect();
                    send(a, gx);
                }
                &Op::Sum(x) => send(x, vec![g[0]; nodes[x.0].value.numel()]),
                &Op::Mean(x) => {
                    let n = nodes[x.0].value.numel();
                    send(x, vec![g[0] / n as f64; n]);
                }
            }
        }
        Ok(())
    }
}

fn hermitian_apply(z: &Tensor) -> Result<Tensor> {
    let (c, h, w) = packed_dims("hermitian", z)?;
    let d = z.data();
    let off = c * h * w;
    let mut out = vec![0.0; d.len()];
    for ch in 0..c {
        for a in 0..h {
            for b in 0..w {
                let i = (ch * h + a) * w + b;
                let m = (ch * h + mirror(a, h)) * w + mirror(b, w);
                out[i] = 0.5 * (d[i] + d[m]);
                out[off + i] = 0.5 * (d[off + i] - d[off + m]);
            }
        }
    }
    Tensor::new(z.shape().to_vec(), out)
}
