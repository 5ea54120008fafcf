use std::collections::HashMap;

use super::kernels::{conv_output_len, matmul, matmul_strided, moments, normalize_backward, ConvGeom, ConvSpec};
use super::{Activation, LossKind, ParamId, ParamStore, Scalar, Tensor};
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Param(ParamId),
    Conv { x: Var, w: Var, b: Option<Var>, spec: ConvSpec },
    WeightStd { w: Var, rstd: Vec<f64> },
    GroupNorm { x: Var, gamma: Var, beta: Var, groups: usize, xhat: Vec<T>, rstd: Vec<f64> },
    Act { x: Var, kind: Activation },
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    Upsample(Var),
    Loss { pred: Var, target: Var, kind: LossKind },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Define-by-run computation graph.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a valid
/// topological order for the backward pass.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    leaf_grads: HashMap<usize, Vec<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), leaf_grads: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Constant input; no gradient is tracked for it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf whose gradient is kept in the graph (see [`Graph::grad`]).
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf bound to a stored parameter; backward accumulates into the store.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.tensor.clone(), Op::Param(id), p.trainable)
    }

    /// Accumulated gradient of a [`Graph::variable`] leaf.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.leaf_grads.get(&v.0).map(Vec::as_slice)
    }

    /// 3D cross-correlation of `x` (N,C,D,H,W) with `w` (O,C,k,k,k), plus optional bias (O).
    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let [n, c, d, h, wd] = self.value(x).shape5("conv3d input")?;
        let [o, ci, k, k2, k3] = self.value(w).shape5("conv3d kernel")?;
        if ci != c || k != k2 || k != k3 {
            return Err(Error::Dimension(format!(
                "conv3d kernel {:?} incompatible with input {:?}",
                self.value(w).shape(),
                self.value(x).shape()
            )));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [o] {
                return Err(Error::Dimension(format!("conv3d bias shape {:?}, expected [{o}]", self.value(b).shape())));
            }
        }
        let out = [d, h, wd].map(|len| conv_output_len(len, k, spec.stride, spec.padding));
        let [Some(od), Some(oh), Some(ow)] = out else {
            return Err(Error::Dimension(format!("kernel {k} with padding {} does not fit input {:?}", spec.padding, [d, h, wd])));
        };
        let geom = ConvGeom::new(c, [d, h, wd], k, spec, [od, oh, ow]);
        let (kk, p) = (geom.rows(), geom.cols());
        let in_len = c * d * h * wd;
        let xs = self.value(x).data();
        let ws = self.value(w).data();
        let mut out_data = vec![T::zero(); n * o * p];
        let pointwise = geom.is_pointwise();
        let (rows, tile) = (geom.out_rows(), geom.tile_rows());
        let mut col = if pointwise { Vec::new() } else { vec![T::zero(); kk * tile * ow] };
        for s in 0..n {
            let xin = &xs[s * in_len..(s + 1) * in_len];
            let dst = &mut out_data[s * o * p..(s + 1) * o * p];
            if pointwise {
                matmul(o, kk, p, ws, false, xin, false, dst, false);
            } else {
                for r0 in (0..rows).step_by(tile) {
                    let r1 = (r0 + tile).min(rows);
                    let pc = (r1 - r0) * ow;
                    let col = &mut col[..kk * pc];
                    geom.im2col_rows(xin, r0, r1, col);
                    matmul_strided(o, kk, pc, ws, false, kk, col, false, pc, &mut dst[r0 * ow..], p, false);
                }
            }
            if let Some(b) = b {
                let bs = self.value(b).data();
                for (oc, row) in dst.chunks_exact_mut(p).enumerate() {
                    let bv = bs[oc];
                    row.iter_mut().for_each(|v| *v = *v + bv);
                }
            }
        }
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        let value = Tensor::new(vec![n, o, od, oh, ow], out_data)?;
        Ok(self.push(value, Op::Conv { x, w, b, spec }, needs))
    }

    /// Per-output-channel standardization of a kernel: zero mean, unit (population)
    /// variance over the fan-in.
    pub fn weight_standardize(&mut self, w: Var, eps: f64) -> Result<Var> {
        let t = self.value(w);
        let o = *t.shape().first().ok_or_else(|| Error::Dimension("weight_standardize on a scalar".into()))?;
        if o == 0 || t.numel() == 0 {
            return Err(Error::Dimension("weight_standardize needs at least one output channel".into()));
        }
        let fan = t.numel() / o;
        let mut out = vec![T::zero(); t.numel()];
        let mut rstds = Vec::with_capacity(o);
        for (src, dst) in t.data().chunks_exact(fan).zip(out.chunks_exact_mut(fan)) {
            let (mean, rstd) = moments(src, eps);
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = T::c((s.f64() - mean) * rstd);
            }
            rstds.push(rstd);
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let needs = self.needs(w);
        Ok(self.push(value, Op::WeightStd { w, rstd: rstds }, needs))
    }

    /// Group normalization over (channels in group × spatial) per sample, then the
    /// per-channel affine `gamma`, `beta`.
    pub fn group_norm(&mut self, x: Var, groups: usize, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() < 2 {
            return Err(Error::Dimension(format!("group_norm expects (N, C, ...), got {:?}", t.shape())));
        }
        let (n, c) = (t.shape()[0], t.shape()[1]);
        if groups == 0 || c % groups != 0 {
            return Err(Error::Config(format!("{c} channels are not divisible into {groups} groups")));
        }
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(Error::Dimension(format!("group_norm affine parameters must have shape [{c}]")));
        }
        let spatial = t.numel() / (n * c);
        let glen = c / groups * spatial;
        let mut xhat = vec![T::zero(); t.numel()];
        let mut rstds = Vec::with_capacity(n * groups);
        for (src, dst) in t.data().chunks_exact(glen).zip(xhat.chunks_exact_mut(glen)) {
            let (mean, rstd) = moments(src, eps);
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = T::c((s.f64() - mean) * rstd);
            }
            rstds.push(rstd);
        }
        let gs = self.value(gamma).data();
        let bs = self.value(beta).data();
        let mut out = xhat.clone();
        for (i, chunk) in out.chunks_exact_mut(spatial).enumerate() {
            let ch = i % c;
            let (g, b) = (gs[ch], bs[ch]);
            chunk.iter_mut().for_each(|v| *v = *v * g + b);
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(value, Op::GroupNorm { x, gamma, beta, groups, xhat, rstd: rstds }, needs))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let t = self.value(x);
        let data = t
            .data()
            .iter()
            .map(|&u| match kind {
                Activation::Silu => u / (T::one() + (-u).exp()),
                Activation::Relu => u.max(T::zero()),
                Activation::Tanh => u.tanh(),
            })
            .collect();
        let value = Tensor { shape: t.shape().to_vec(), data };
        let needs = self.needs(x);
        self.push(value, Op::Act { x, kind }, needs)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor { shape: self.value(a).shape().to_vec(), data };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor { shape: self.value(a).shape().to_vec(), data };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), needs))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(0.0f64, |acc, v| acc + v.f64());
        let needs = self.needs(x);
        self.push(Tensor::scalar(T::c(s)), Op::Sum(x), needs)
    }

    /// Nearest-neighbour upsampling by 2 along each spatial axis of an NCDHW tensor.
    pub fn upsample_nearest2x(&mut self, x: Var) -> Result<Var> {
        let [n, c, d, h, w] = self.value(x).shape5("upsample")?;
        let src = self.value(x).data();
        let mut out = vec![T::zero(); n * c * d * h * w * 8];
        let (h2, w2) = (2 * h, 2 * w);
        for (plane, chunk) in src.chunks_exact(d * h * w).enumerate() {
            let dst = &mut out[plane * 8 * d * h * w..(plane + 1) * 8 * d * h * w];
            for z in 0..2 * d {
                for y in 0..h2 {
                    let row = &chunk[((z / 2) * h + y / 2) * w..][..w];
                    let drow = &mut dst[(z * h2 + y) * w2..][..w2];
                    for (xo, v) in drow.iter_mut().enumerate() {
                        *v = row[xo / 2];
                    }
                }
            }
        }
        let value = Tensor::new(vec![n, c, 2 * d, h2, w2], out)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Upsample(x), needs))
    }

    /// Mean absolute or mean squared difference between `pred` and `target`.
    pub fn loss(&mut self, pred: Var, target: Var, kind: LossKind) -> Result<Var> {
        self.same_shape(pred, target, "loss")?;
        let p = self.value(pred).data();
        let t = self.value(target).data();
        let n = p.len().max(1) as f64;
        let total: f64 = p
            .iter()
            .zip(t)
            .map(|(&a, &b)| {
                let d = a.f64() - b.f64();
                match kind {
                    LossKind::L1 => d.abs(),
                    LossKind::Mse => d * d,
                }
            })
            .sum();
        let needs = self.needs(pred) || self.needs(target);
        Ok(self.push(Tensor::scalar(T::c(total / n)), Op::Loss { pred, target, kind }, needs))
    }

    /// Reverse-mode accumulation from a scalar root.
    ///
    /// Parameter gradients are added to the store (every parameter gets a buffer,
    /// zero if unused); [`Graph::variable`] gradients are added to the graph.
    /// Returns the number of nodes visited; each node is visited at most once.
    pub fn backward(&mut self, root: Var, store: &mut ParamStore<T>) -> Result<usize> {
        if self.value(root).numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        store.ensure_grads();
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(vec![T::one()]);
        let mut visited = 0;
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            visited += 1;
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    let slot = self.leaf_grads.entry(i).or_insert_with(|| vec![T::zero(); g.len()]);
                    slot.iter_mut().zip(&g).for_each(|(s, &v)| *s = *s + v);
                }
                Op::Param(id) => store.accumulate(*id, &g),
                op => {
                    for (parent, contribution) in self.local_backward(op, &node.value, &g)? {
                        add_into(&mut grads[parent.0], contribution);
                    }
                }
            }
        }
        Ok(visited)
    }

    fn local_backward(&self, op: &Op<T>, out: &Tensor<T>, g: &[T]) -> Result<Vec<(Var, Vec<T>)>> {
        let mut res = Vec::new();
        match op {
            Op::Leaf | Op::Param(_) => unreachable!("leaves handled by caller"),
            Op::Conv { x, w, b, spec } => {
                let xt = self.value(*x);
                let wt = self.value(*w);
                let [n, c, d, h, wd] = xt.shape5("conv3d input")?;
                let [o, _, k, _, _] = wt.shape5("conv3d kernel")?;
                let os = out.shape();
                let geom = ConvGeom::new(c, [d, h, wd], k, *spec, [os[2], os[3], os[4]]);
                let (kk, p) = (geom.rows(), geom.cols());
                let in_len = c * d * h * wd;
                let pointwise = geom.is_pointwise();
                let (need_x, need_w) = (self.needs(*x), self.needs(*w));
                let (rows, ow, tile) = (geom.out_rows(), os[4], geom.tile_rows());
                let mut dw = if need_w { vec![T::zero(); wt.numel()] } else { Vec::new() };
                let mut dx = if need_x { vec![T::zero(); xt.numel()] } else { Vec::new() };
                let mut col = if pointwise { Vec::new() } else { vec![T::zero(); kk * tile * ow] };
                for s in 0..n {
                    let gs = &g[s * o * p..(s + 1) * o * p];
                    let xin = &xt.data()[s * in_len..(s + 1) * in_len];
                    if pointwise {
                        if need_w {
                            matmul(o, p, kk, gs, false, xin, true, &mut dw, true);
                        }
                        if need_x {
                            let dxs = &mut dx[s * in_len..(s + 1) * in_len];
                            matmul(kk, o, p, wt.data(), true, gs, false, dxs, true);
                        }
                        continue;
                    }
                    for r0 in (0..rows).step_by(tile) {
                        let r1 = (r0 + tile).min(rows);
                        let pc = (r1 - r0) * ow;
                        let col = &mut col[..kk * pc];
                        let gt = &gs[r0 * ow..];
                        if need_w {
                            geom.im2col_rows(xin, r0, r1, col);
                            matmul_strided(o, pc, kk, gt, false, p, col, true, pc, &mut dw, kk, true);
                        }
                        if need_x {
                            matmul_strided(kk, o, pc, wt.data(), true, kk, gt, false, p, col, pc, false);
                            geom.col2im_rows(col, r0, r1, &mut dx[s * in_len..(s + 1) * in_len]);
                        }
                    }
                }
                if need_x {
                    res.push((*x, dx));
                }
                if need_w {
                    res.push((*w, dw));
                }
                if let Some(b) = b.filter(|b| self.needs(*b)) {
                    let mut db = vec![0.0f64; o];
                    for (i, row) in g.chunks_exact(p).enumerate() {
                        db[i % o] += row.iter().map(|v| v.f64()).sum::<f64>();
                    }
                    res.push((b, db.into_iter().map(T::c).collect()));
                }
            }
            Op::WeightStd { w, rstd } => {
                let fan = out.numel() / rstd.len();
                let mut dw = vec![T::zero(); out.numel()];
                for (o, r) in rstd.iter().enumerate() {
                    let sl = o * fan..(o + 1) * fan;
                    normalize_backward(&out.data()[sl.clone()], &g[sl.clone()], *r, &mut dw[sl]);
                }
                res.push((*w, dw));
            }
            Op::GroupNorm { x, gamma, beta, groups, xhat, rstd } => {
                let shape = out.shape();
                let (n, c) = (shape[0], shape[1]);
                let spatial = out.numel() / (n * c);
                let glen = c / groups * spatial;
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![0.0f64; c];
                let mut dbeta = vec![0.0f64; c];
                let mut dxhat = vec![T::zero(); out.numel()];
                for (i, (gchunk, xchunk)) in g.chunks_exact(spatial).zip(xhat.chunks_exact(spatial)).enumerate() {
                    let ch = i % c;
                    let mut sg = 0.0;
                    let mut sgx = 0.0;
                    for (&gv, &xv) in gchunk.iter().zip(xchunk) {
                        sg += gv.f64();
                        sgx += gv.f64() * xv.f64();
                    }
                    dgamma[ch] += sgx;
                    dbeta[ch] += sg;
                    let gm = gam[ch];
                    for (d, &gv) in dxhat[i * spatial..(i + 1) * spatial].iter_mut().zip(gchunk) {
                        *d = gv * gm;
                    }
                }
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); out.numel()];
                    for (j, r) in rstd.iter().enumerate() {
                        let sl = j * glen..(j + 1) * glen;
                        normalize_backward(&xhat[sl.clone()], &dxhat[sl.clone()], *r, &mut dx[sl]);
                    }
                    res.push((*x, dx));
                }
                res.push((*gamma, dgamma.into_iter().map(T::c).collect()));
                res.push((*beta, dbeta.into_iter().map(T::c).collect()));
            }
            Op::Act { x, kind } => {
                let xs = self.value(*x).data();
                let dx = xs
                    .iter()
                    .zip(out.data())
                    .zip(g)
                    .map(|((&u, &y), &gv)| {
                        let d = match kind {
                            Activation::Silu => {
                                let s = T::one() / (T::one() + (-u).exp());
                                s * (T::one() + u * (T::one() - s))
                            }
                            Activation::Relu => {
                                if u > T::zero() {
                                    T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            Activation::Tanh => T::one() - y * y,
                        };
                        gv * d
                    })
                    .collect();
                res.push((*x, dx));
            }
            Op::Add(a, b) => {
                res.push((*a, g.to_vec()));
                res.push((*b, g.to_vec()));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                res.push((*a, g.iter().zip(bv).map(|(&gv, &y)| gv * y).collect()));
                res.push((*b, g.iter().zip(av).map(|(&gv, &y)| gv * y).collect()));
            }
            Op::Sum(x) => {
                res.push((*x, vec![g[0]; self.value(*x).numel()]));
            }
            Op::Upsample(x) => {
                let [n, c, d, h, w] = self.value(*x).shape5("upsample")?;
                let mut dx = vec![T::zero(); n * c * d * h * w];
                let (h2, w2) = (2 * h, 2 * w);
                let plane_out = 8 * d * h * w;
                for (plane, dchunk) in dx.chunks_exact_mut(d * h * w).enumerate() {
                    let gp = &g[plane * plane_out..(plane + 1) * plane_out];
                    for z in 0..2 * d {
                        for y in 0..h2 {
                            let grow = &gp[(z * h2 + y) * w2..][..w2];
                            let drow = &mut dchunk[((z / 2) * h + y / 2) * w..][..w];
                            for (xo, &v) in grow.iter().enumerate() {
                                drow[xo / 2] = drow[xo / 2] + v;
                            }
                        }
                    }
                }
                res.push((*x, dx));
            }
            Op::Loss { pred, target, kind } => {
                let p = self.value(*pred).data();
                let t = self.value(*target).data();
                let scale = g[0].f64() / p.len().max(1) as f64;
                let dp: Vec<T> = p
                    .iter()
                    .zip(t)
                    .map(|(&a, &b)| {
                        let d = a.f64() - b.f64();
                        T::c(match kind {
                            LossKind::L1 => scale * if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 },
                            LossKind::Mse => 2.0 * scale * d,
                        })
                    })
                    .collect();
                if self.needs(*target) {
                    res.push((*target, dp.iter().map(|&v| -v).collect()));
                }
                res.push((*pred, dp));
            }
        }
        Ok(res.into_iter().filter(|(v, _)| self.needs(*v)).collect())
    }
}

fn add_into<T: Scalar>(slot: &mut Option<Vec<T>>, contribution: Vec<T>) {
    match slot {
        None => *slot = Some(contribution),
        Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, &c)| *a = *a + c),
    }
}
