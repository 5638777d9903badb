use std::collections::{BTreeMap, HashMap};

use super::kernels::{gelu, gelu_grad, gemm, Conv2dGeom};
use super::{ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

/// Which keys a query row may attend to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AttentionMask {
    #[default]
    Full,
    /// Row `i` sees column `j` when `j <= i`, or when both sit inside the first
    /// `full_prefix` positions.
    Causal { full_prefix: usize },
}

impl AttentionMask {
    #[inline]
    pub fn allows(self, i: usize, j: usize) -> bool {
        match self {
            AttentionMask::Full => true,
            AttentionMask::Causal { full_prefix } => j <= i || (i < full_prefix && j < full_prefix),
        }
    }
}

#[derive(Debug)]
enum Op<F> {
    Input,
    Param(ParamId),
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias {
        x: Var,
        b: Var,
    },
    Scale {
        x: Var,
        s: F,
    },
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Option<Var>,
        beta: Option<Var>,
        xhat: Vec<F>,
        rstd: Vec<F>,
    },
    Transpose(Var),
    Reshape(Var),
    Concat {
        inputs: Vec<Var>,
        outer: usize,
        chunks: Vec<usize>,
    },
    Slice {
        x: Var,
        outer: usize,
        src_chunk: usize,
        offset: usize,
    },
    Embedding {
        table: Var,
        indices: Vec<usize>,
    },
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: Conv2dGeom,
        cols: Vec<F>,
    },
    Mean {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<F>,
    },
    Mse {
        pred: Var,
        target: Vec<F>,
    },
}

#[derive(Debug)]
struct Node<F> {
    dims: Vec<usize>,
    value: Vec<F>,
    op: Op<F>,
    tracked: bool,
}

/// Gradients of a scalar loss with respect to each tracked parameter.
#[derive(Clone, Debug, Default)]
pub struct Gradients<F> {
    by_param: BTreeMap<ParamId, Vec<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, id: ParamId) -> Option<&[F]> {
        self.by_param.get(&id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[F])> {
        self.by_param.iter().map(|(&id, g)| (id, g.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }

    /// Elementwise sum, used to combine per-sample passes in a fixed order.
    pub fn merge(&mut self, other: Gradients<F>) {
        for (id, g) in other.by_param {
            match self.by_param.get_mut(&id) {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                None => {
                    self.by_param.insert(id, g);
                }
            }
        }
    }
}

/// Wengert list of executed operations.
///
/// Nodes are appended in execution order, so inputs always precede their
/// consumers and [`backward`](Tape::backward) is a single reverse sweep.
/// One tape per thread; a tape borrows the parameter store read-only.
pub struct Tape<'s, F: Real> {
    store: Option<&'s ParamStore<F>>,
    nodes: Vec<Node<F>>,
    params: HashMap<ParamId, Var>,
}

impl<F: Real> Default for Tape<'_, F> {
    fn default() -> Self {
        Tape::new()
    }
}

fn rows_cols(dims: &[usize]) -> (usize, usize) {
    let cols = dims.last().copied().unwrap_or(1);
    let n: usize = dims.iter().product();
    (if cols == 0 { 0 } else { n / cols }, cols)
}

impl<'s, F: Real> Tape<'s, F> {
    /// A tape without parameters; every value is a constant input.
    pub fn new() -> Self {
        Tape {
            store: None,
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn with_store(store: &'s ParamStore<F>) -> Self {
        Tape {
            store: Some(store),
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dims(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].dims
    }

    pub fn value(&self, v: Var) -> &[F] {
        &self.nodes[v.0].value
    }

    pub fn tensor(&self, v: Var) -> Tensor<F> {
        let n = &self.nodes[v.0];
        Tensor::new(n.dims.clone(), n.value.clone()).expect("node dims match value")
    }

    pub fn scalar(&self, v: Var) -> F {
        self.nodes[v.0].value[0]
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, name: &str, dims: Vec<usize>, value: Vec<F>, op: Op<F>) -> Result<Var> {
        debug_assert_eq!(dims.iter().product::<usize>(), value.len());
        if !value.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: name.into() });
        }
        let tracked = match &op {
            Op::Input => false,
            Op::Param(id) => !self.store.map(|s| s.is_frozen(*id)).unwrap_or(true),
            _ => self.inputs_of(&op).iter().any(|v| self.nodes[v.0].tracked),
        };
        self.nodes.push(Node {
            dims,
            value,
            op,
            tracked,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn inputs_of(&self, op: &Op<F>) -> Vec<Var> {
        match op {
            Op::Input | Op::Param(_) => vec![],
            Op::MatMul { a, b, .. } | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::AddBias { x, b } => vec![*x, *b],
            Op::Scale { x, .. }
            | Op::Gelu(x)
            | Op::Softmax(x)
            | Op::Transpose(x)
            | Op::Reshape(x)
            | Op::Slice { x, .. }
            | Op::Mean { x, .. }
            | Op::Sum(x) => vec![*x],
            Op::LayerNorm { x, gamma, beta, .. } => {
                let mut v = vec![*x];
                v.extend(gamma.iter().chain(beta.iter()).copied());
                v
            }
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Embedding { table, .. } => vec![*table],
            Op::Conv { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::Mse { pred, .. } => vec![*pred],
        }
    }

    // ── leaves ──────────────────────────────────────────────────────────

    /// Records a constant. Inputs are not checked for finiteness; the first
    /// operation consuming a non-finite value fails.
    pub fn input(&mut self, t: Tensor<F>) -> Var {
        let dims = t.dims().to_vec();
        self.nodes.push(Node {
            dims,
            value: t.into_data(),
            op: Op::Input,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn input_data(&mut self, dims: impl Into<Vec<usize>>, data: Vec<F>) -> Result<Var> {
        Ok(self.input(Tensor::new(dims, data)?))
    }

    /// Places a stored parameter on the tape. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.params.get(&id) {
            return Ok(v);
        }
        let store = self
            .store
            .ok_or_else(|| Error::contract("tape has no parameter store"))?;
        if id.0 >= store.len() {
            return Err(Error::Index {
                what: "parameter store",
                index: id.0,
                size: store.len(),
            });
        }
        let t = store.get(id);
        let v = self.push("param", t.dims().to_vec(), t.data().to_vec(), Op::Param(id))?;
        self.params.insert(id, v);
        Ok(v)
    }

    // ── linear algebra ──────────────────────────────────────────────────

    fn matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let d = self.dims(v);
        if d.len() != 2 {
            return Err(Error::Shape {
                op,
                lhs: d.to_vec(),
                rhs: vec![],
            });
        }
        Ok((d[0], d[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a) @ op(b)`, where `op` transposes when the flag is set.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let (ar, ac) = self.matrix(a, "matmul")?;
        let (br, bc) = self.matrix(b, "matmul")?;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: self.dims(a).to_vec(),
                rhs: self.dims(b).to_vec(),
            });
        }
        let mut out = vec![F::zero(); m * n];
        gemm(m, k, n, self.value(a), ta, self.value(b), tb, F::zero(), &mut out);
        self.push(
            "matmul",
            vec![m, n],
            out,
            Op::MatMul {
                a,
                b,
                ta,
                tb,
                m,
                k,
                n,
            },
        )
    }

    /// `x @ w + b` with `w` stored as `in x out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_bias(y, b),
            None => Ok(y),
        }
    }

    fn same_dims(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.dims(a) != self.dims(b) {
            return Err(Error::Shape {
                op,
                lhs: self.dims(a).to_vec(),
                rhs: self.dims(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &'static str, op: Op<F>, f: impl Fn(F, F) -> F) -> Result<Var> {
        self.same_dims(a, b, name)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(name, self.dims(a).to_vec(), out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a length-`n` vector to every row of an `m x n` matrix.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (_, n) = self.matrix(x, "add_bias")?;
        if self.value(b).len() != n {
            return Err(Error::Shape {
                op: "add_bias",
                lhs: self.dims(x).to_vec(),
                rhs: self.dims(b).to_vec(),
            });
        }
        let bias = self.value(b);
        let out = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bias[i % n])
            .collect();
        self.push("add_bias", self.dims(x).to_vec(), out, Op::AddBias { x, b })
    }

    pub fn scale(&mut self, x: Var, s: F) -> Result<Var> {
        let out = self.value(x).iter().map(|&v| v * s).collect();
        self.push("scale", self.dims(x).to_vec(), out, Op::Scale { x, s })
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).iter().map(|&v| gelu(v)).collect();
        self.push("gelu", self.dims(x).to_vec(), out, Op::Gelu(x))
    }

    /// Row-wise softmax over the last axis, stabilised by row-max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.masked_softmax(x, AttentionMask::Full)
    }

    /// Row-wise softmax of a square-or-rectangular score matrix where masked
    /// entries receive exactly zero weight.
    pub fn masked_softmax(&mut self, x: Var, mask: AttentionMask) -> Result<Var> {
        let (rows, cols) = rows_cols(self.dims(x));
        let src = self.value(x);
        if src.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite { op: "softmax".into() });
        }
        let mut out = vec![F::zero(); src.len()];
        for i in 0..rows {
            let row = &src[i * cols..(i + 1) * cols];
            let dst = &mut out[i * cols..(i + 1) * cols];
            let r = i % cols.max(1);
            let mut max = F::neg_infinity();
            for (j, &v) in row.iter().enumerate() {
                if mask.allows(r, j) && v > max {
                    max = v;
                }
            }
            if max == F::neg_infinity() {
                return Err(Error::contract(format!("softmax row {i} fully masked")));
            }
            let mut sum = F::zero();
            for (j, (&v, d)) in row.iter().zip(dst.iter_mut()).enumerate() {
                if mask.allows(r, j) {
                    *d = (v - max).exp();
                    sum += *d;
                }
            }
            dst.iter_mut().for_each(|d| *d /= sum);
        }
        self.push("softmax", self.dims(x).to_vec(), out, Op::Softmax(x))
    }

    /// Normalises each row over the last axis: `(x - mean) / sqrt(var + eps)`,
    /// then applies the optional per-column affine `gamma * . + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Option<Var>, beta: Option<Var>, eps: F) -> Result<Var> {
        let (rows, cols) = rows_cols(self.dims(x));
        for p in gamma.iter().chain(beta.iter()) {
            if self.value(*p).len() != cols {
                return Err(Error::Shape {
                    op: "layer_norm",
                    lhs: self.dims(x).to_vec(),
                    rhs: self.dims(*p).to_vec(),
                });
            }
        }
        let src = self.value(x);
        let n = F::of(cols as f64);
        let mut xhat = vec![F::zero(); src.len()];
        let mut rstd = vec![F::zero(); rows];
        for i in 0..rows {
            let row = &src[i * cols..(i + 1) * cols];
            let mean = row.iter().copied().sum::<F>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let r = F::one() / (var + eps).sqrt();
            rstd[i] = r;
            for (h, &v) in xhat[i * cols..(i + 1) * cols].iter_mut().zip(row) {
                *h = (v - mean) * r;
            }
        }
        let mut out = xhat.clone();
        if let Some(g) = gamma {
            let g = self.value(g);
            out.iter_mut().enumerate().for_each(|(i, v)| *v *= g[i % cols]);
        }
        if let Some(b) = beta {
            let b = self.value(b);
            out.iter_mut().enumerate().for_each(|(i, v)| *v += b[i % cols]);
        }
        self.push(
            "layer_norm",
            self.dims(x).to_vec(),
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
        )
    }

    // ── shape ops ───────────────────────────────────────────────────────

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.matrix(x, "transpose")?;
        let src = self.value(x);
        let mut out = vec![F::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        self.push("transpose", vec![c, r], out, Op::Transpose(x))
    }

    pub fn reshape(&mut self, x: Var, dims: impl Into<Vec<usize>>) -> Result<Var> {
        let dims = dims.into();
        if dims.iter().product::<usize>() != self.value(x).len() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: self.dims(x).to_vec(),
                rhs: dims,
            });
        }
        let v = self.value(x).to_vec();
        self.push("reshape", dims, v, Op::Reshape(x))
    }

    /// Concatenates along `axis`; all other dims must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::contract("concat of zero tensors"))?;
        let base = self.dims(first).to_vec();
        if axis >= base.len() {
            return Err(Error::Index {
                what: "concat axis",
                index: axis,
                size: base.len(),
            });
        }
        let mut out_dims = base.clone();
        out_dims[axis] = 0;
        for &v in inputs {
            let d = self.dims(v);
            let compatible = d.len() == base.len()
                && d.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: base,
                    rhs: d.to_vec(),
                });
            }
            out_dims[axis] += d[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let chunks: Vec<usize> = inputs.iter().map(|&v| self.dims(v)[axis] * inner).collect();
        let total: usize = chunks.iter().sum();
        let mut out = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (&v, &c) in inputs.iter().zip(&chunks) {
                out.extend_from_slice(&self.value(v)[o * c..(o + 1) * c]);
            }
        }
        self.push(
            "concat",
            out_dims,
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                outer,
                chunks,
            },
        )
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let dims = self.dims(x).to_vec();
        if axis >= dims.len() || start + len > dims[axis] || len == 0 {
            return Err(Error::Shape {
                op: "slice",
                lhs: dims,
                rhs: vec![axis, start, len],
            });
        }
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let src_chunk = dims[axis] * inner;
        let offset = start * inner;
        let chunk = len * inner;
        let src = self.value(x);
        let mut out = Vec::with_capacity(outer * chunk);
        for o in 0..outer {
            out.extend_from_slice(&src[o * src_chunk + offset..o * src_chunk + offset + chunk]);
        }
        let mut out_dims = dims;
        out_dims[axis] = len;
        self.push(
            "slice",
            out_dims,
            out,
            Op::Slice {
                x,
                outer,
                src_chunk,
                offset,
            },
        )
    }

    /// Gathers rows of a `vocab x d` table.
    pub fn embedding(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (vocab, d) = self.matrix(table, "embedding")?;
        let src = self.value(table);
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= vocab {
                return Err(Error::Index {
                    what: "embedding vocabulary",
                    index: i,
                    size: vocab,
                });
            }
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        self.push(
            "embedding",
            vec![indices.len(), d],
            out,
            Op::Embedding {
                table,
                indices: indices.to_vec(),
            },
        )
    }

    fn conv(&mut self, x: Var, w: Var, b: Option<Var>, geom: Conv2dGeom, out_dims: Vec<usize>) -> Result<Var> {
        let out_ch = self.dims(w)[0];
        if let Some(b) = b {
            if self.value(b).len() != out_ch {
                return Err(Error::Shape {
                    op: "conv",
                    lhs: self.dims(w).to_vec(),
                    rhs: self.dims(b).to_vec(),
                });
            }
        }
        let cols = geom.im2col(self.value(x));
        let pos = geom.positions();
        let mut out = vec![F::zero(); out_ch * pos];
        gemm(out_ch, geom.patch_len(), pos, self.value(w), false, &cols, false, F::zero(), &mut out);
        if let Some(b) = b {
            let bias = self.value(b);
            for (o, row) in out.chunks_mut(pos).enumerate() {
                row.iter_mut().for_each(|v| *v += bias[o]);
            }
        }
        self.push("conv", out_dims, out, Op::Conv { x, w, b, geom, cols })
    }

    /// 1-D convolution: `x` is `C x L`, kernels `O x C x K`, output `O x L'`,
    /// with `pad` zeros on both ends.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xd = self.dims(x).to_vec();
        let wd = self.dims(w).to_vec();
        if xd.len() != 2 || wd.len() != 3 || wd[1] != xd[0] {
            return Err(Error::Shape {
                op: "conv1d",
                lhs: xd,
                rhs: wd,
            });
        }
        let geom = Conv2dGeom::new(xd[0], 1, xd[1], 1, wd[2], stride, 0, pad).ok_or(Error::Shape {
            op: "conv1d",
            lhs: xd.clone(),
            rhs: wd.clone(),
        })?;
        self.conv(x, w, b, geom, vec![wd[0], geom.out_w])
    }

    /// 2-D convolution: `x` is `C x H x W`, kernels `O x C x KH x KW`, output
    /// `O x H' x W'`, with `pad` zeros on every border.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xd = self.dims(x).to_vec();
        let wd = self.dims(w).to_vec();
        if xd.len() != 3 || wd.len() != 4 || wd[1] != xd[0] {
            return Err(Error::Shape {
                op: "conv2d",
                lhs: xd,
                rhs: wd,
            });
        }
        let geom = Conv2dGeom::new(xd[0], xd[1], xd[2], wd[2], wd[3], stride, pad, pad).ok_or(Error::Shape {
            op: "conv2d",
            lhs: xd.clone(),
            rhs: wd.clone(),
        })?;
        self.conv(x, w, b, geom, vec![wd[0], geom.out_h, geom.out_w])
    }

    // ── reductions and losses ───────────────────────────────────────────

    /// Mean along `axis`; the axis is removed from the output dims.
    pub fn mean_pool(&mut self, x: Var, axis: usize) -> Result<Var> {
        let dims = self.dims(x).to_vec();
        if axis >= dims.len() || dims[axis] == 0 {
            return Err(Error::Index {
                what: "mean axis",
                index: axis,
                size: dims.len(),
            });
        }
        let outer: usize = dims[..axis].iter().product();
        let len = dims[axis];
        let inner: usize = dims[axis + 1..].iter().product();
        let src = self.value(x);
        let inv = F::one() / F::of(len as f64);
        let mut out = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let row = &src[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (d, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *d += v;
                }
            }
        }
        out.iter_mut().for_each(|v| *v *= inv);
        let mut out_dims = dims;
        out_dims.remove(axis);
        if out_dims.is_empty() {
            out_dims.push(1);
        }
        self.push("mean_pool", out_dims, out, Op::Mean { x, outer, len, inner })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).iter().copied().sum();
        self.push("sum", vec![1], vec![s], Op::Sum(x))
    }

    /// Mean softmax cross-entropy of `m x C` logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (m, c) = self.matrix(logits, "cross_entropy")?;
        if targets.len() != m {
            return Err(Error::Shape {
                op: "cross_entropy",
                lhs: vec![m, c],
                rhs: vec![targets.len()],
            });
        }
        let src = self.value(logits);
        let mut probs = vec![F::zero(); m * c];
        let mut loss = F::zero();
        for (i, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(Error::Index {
                    what: "class",
                    index: t,
                    size: c,
                });
            }
            let row = &src[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let sum: F = row.iter().map(|&v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            loss += lse - row[t];
            for (p, &v) in probs[i * c..(i + 1) * c].iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
        }
        loss /= F::of(m as f64);
        self.push(
            "cross_entropy",
            vec![1],
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Mean squared error against a constant target of the same length.
    pub fn mse(&mut self, pred: Var, target: &[F]) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() {
            return Err(Error::Shape {
                op: "mse",
                lhs: self.dims(pred).to_vec(),
                rhs: vec![target.len()],
            });
        }
        let n = F::of(p.len() as f64);
        let loss = p.iter().zip(target).map(|(&a, &b)| (a - b) * (a - b)).sum::<F>() / n;
        self.push(
            "mse",
            vec![1],
            vec![loss],
            Op::Mse {
                pred,
                target: target.to_vec(),
            },
        )
    }

    // ── reverse sweep ───────────────────────────────────────────────────

    /// Propagates from a scalar `loss` back to every tracked parameter.
    ///
    /// Consumes the tape. Gradients are returned rather than written, so that
    /// callers decide when and in which order they accumulate into the store.
    pub fn backward(self, loss: Var) -> Result<Gradients<F>> {
        let n_loss = self.nodes[loss.0].value.len();
        if n_loss != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: self.nodes[loss.0].dims.clone(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Option<Vec<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![F::one()]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            self.backprop_node(node, &g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn backprop_node(&self, node: &Node<F>, g: &[F], grads: &mut [Option<Vec<F>>], out: &mut Gradients<F>) {
        let nodes = &self.nodes;
        let val = |v: Var| nodes[v.0].value.as_slice();
        let tracked = |v: Var| nodes[v.0].tracked;
        // Lazily allocated accumulation buffer for an input.
        macro_rules! acc {
            ($v:expr) => {{
                let v: Var = $v;
                let len = nodes[v.0].value.len();
                grads[v.0].get_or_insert_with(|| vec![F::zero(); len])
            }};
        }

        match &node.op {
            Op::Input => {}
            Op::Param(id) => match out.by_param.get_mut(id) {
                Some(buf) => buf.iter_mut().zip(g).for_each(|(b, &v)| *b += v),
                None => {
                    out.by_param.insert(*id, g.to_vec());
                }
            },
            &Op::MatMul { a, b, ta, tb, m, k, n } => {
                if tracked(a) {
                    let da = acc!(a);
                    if ta {
                        gemm(k, n, m, val(b), tb, g, true, F::one(), da);
                    } else {
                        gemm(m, n, k, g, false, val(b), !tb, F::one(), da);
                    }
                }
                if tracked(b) {
                    let db = acc!(b);
                    if tb {
                        gemm(n, m, k, g, true, val(a), ta, F::one(), db);
                    } else {
                        gemm(k, m, n, val(a), !ta, g, false, F::one(), db);
                    }
                }
            }
            &Op::Add(a, b) => {
                if tracked(a) {
                    acc!(a).iter_mut().zip(g).for_each(|(d, &v)| *d += v);
                }
                if tracked(b) {
                    acc!(b).iter_mut().zip(g).for_each(|(d, &v)| *d += v);
                }
            }
            &Op::Sub(a, b) => {
                if tracked(a) {
                    acc!(a).iter_mut().zip(g).for_each(|(d, &v)| *d += v);
                }
                if tracked(b) {
                    acc!(b).iter_mut().zip(g).for_each(|(d, &v)| *d -= v);
                }
            }
            &Op::Mul(a, b) => {
                if tracked(a) {
                    let vb = val(b);
                    acc!(a)
                        .iter_mut()
                        .zip(g.iter().zip(vb))
                        .for_each(|(d, (&gv, &bv))| *d += gv * bv);
                }
                if tracked(b) {
                    let va = val(a);
                    acc!(b)
                        .iter_mut()
                        .zip(g.iter().zip(va))
                        .for_each(|(d, (&gv, &av))| *d += gv * av);
                }
            }
            &Op::AddBias { x, b } => {
                if tracked(x) {
                    acc!(x).iter_mut().zip(g).for_each(|(d, &v)| *d += v);
                }
                if tracked(b) {
                    let db = acc!(b);
                    let n = db.len();
                    for (i, &v) in g.iter().enumerate() {
                        db[i % n] += v;
                    }
                }
            }
            &Op::Scale { x, s } => {
                acc!(x).iter_mut().zip(g).for_each(|(d, &v)| *d += s * v);
            }
            &Op::Gelu(x) => {
                let vx = val(x);
                acc!(x)
                    .iter_mut()
                    .zip(g.iter().zip(vx))
                    .for_each(|(d, (&gv, &xv))| *d += gv * gelu_grad(xv));
            }
            &Op::Softmax(x) => {
                let (_, cols) = rows_cols(&node.dims);
                let y = &node.value;
                let dx = acc!(x);
                for ((yr, gr), dr) in y.chunks(cols).zip(g.chunks(cols)).zip(dx.chunks_mut(cols)) {
                    let dot: F = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for ((d, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *d += yv * (gv - dot);
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
                let (_, cols) = rows_cols(&node.dims);
                if let Some(gm) = gamma.filter(|&v| tracked(v)) {
                    let dg = acc!(gm);
                    for (i, (&gv, &h)) in g.iter().zip(xhat).enumerate() {
                        dg[i % cols] += gv * h;
                    }
                }
                if let Some(bt) = beta.filter(|&v| tracked(v)) {
                    let db = acc!(bt);
                    for (i, &gv) in g.iter().enumerate() {
                        db[i % cols] += gv;
                    }
                }
                if tracked(*x) {
                    let gvals = gamma.map(|v| val(v).to_vec());
                    let n = F::of(cols as f64);
                    let dx = acc!(*x);
                    let mut dh = vec![F::zero(); cols];
                    for (r, &rs) in rstd.iter().enumerate() {
                        let gr = &g[r * cols..(r + 1) * cols];
                        let hr = &xhat[r * cols..(r + 1) * cols];
                        for j in 0..cols {
                            dh[j] = match &gvals {
                                Some(gm) => gr[j] * gm[j],
                                None => gr[j],
                            };
                        }
                        let mean_dh = dh.iter().copied().sum::<F>() / n;
                        let mean_dhh = dh.iter().zip(hr).map(|(&a, &b)| a * b).sum::<F>() / n;
                        for j in 0..cols {
                            dx[r * cols + j] += rs * (dh[j] - mean_dh - hr[j] * mean_dhh);
                        }
                    }
                }
            }
            &Op::Transpose(x) => {
                let (r, c) = (node.dims[1], node.dims[0]);
                let dx = acc!(x);
                for i in 0..r {
                    for j in 0..c {
                        dx[i * c + j] += g[j * r + i];
                    }
                }
            }
            &Op::Reshape(x) => {
                acc!(x).iter_mut().zip(g).for_each(|(d, &v)| *d += v);
            }
            Op::Concat { inputs, outer, chunks } => {
                let total: usize = chunks.iter().sum();
                let mut off = 0;
                for (&v, &c) in inputs.iter().zip(chunks) {
                    if tracked(v) {
                        let dv = acc!(v);
                        for o in 0..*outer {
                            let src = &g[o * total + off..o * total + off + c];
                            dv[o * c..(o + 1) * c].iter_mut().zip(src).for_each(|(d, &s)| *d += s);
                        }
                    }
                    off += c;
                }
            }
            &Op::Slice {
                x,
                outer,
                src_chunk,
                offset,
            } => {
                let chunk = g.len() / outer.max(1);
                let dx = acc!(x);
                for o in 0..outer {
                    let dst = &mut dx[o * src_chunk + offset..o * src_chunk + offset + chunk];
                    dst.iter_mut()
                        .zip(&g[o * chunk..(o + 1) * chunk])
                        .for_each(|(d, &s)| *d += s);
                }
            }
            Op::Embedding { table, indices } => {
                let d = node.dims[1];
                let dt = acc!(*table);
                for (r, &i) in indices.iter().enumerate() {
                    dt[i * d..(i + 1) * d]
                        .iter_mut()
                        .zip(&g[r * d..(r + 1) * d])
                        .for_each(|(a, &b)| *a += b);
                }
            }
            Op::Conv { x, w, b, geom, cols } => {
                let pos = geom.positions();
                let out_ch = nodes[w.0].dims[0];
                let plen = geom.patch_len();
                if tracked(*w) {
                    let dw = acc!(*w);
                    gemm(out_ch, pos, plen, g, false, cols, true, F::one(), dw);
                }
                if let Some(b) = b.filter(|&v| tracked(v)) {
                    let db = acc!(b);
                    for (o, row) in g.chunks(pos).enumerate() {
                        db[o] += row.iter().copied().sum::<F>();
                    }
                }
                if tracked(*x) {
                    let mut dcols = vec![F::zero(); plen * pos];
                    gemm(plen, out_ch, pos, val(*w), true, g, false, F::zero(), &mut dcols);
                    geom.col2im_add(&dcols, acc!(*x));
                }
            }
            &Op::Mean { x, outer, len, inner } => {
                let inv = F::one() / F::of(len as f64);
                let dx = acc!(x);
                for o in 0..outer {
                    let gr = &g[o * inner..(o + 1) * inner];
                    for l in 0..len {
                        dx[(o * len + l) * inner..(o * len + l + 1) * inner]
                            .iter_mut()
                            .zip(gr)
                            .for_each(|(d, &v)| *d += v * inv);
                    }
                }
            }
            &Op::Sum(x) => {
                let s = g[0];
                acc!(x).iter_mut().for_each(|d| *d += s);
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let c = nodes[logits.0].dims[1];
                let scale = g[0] / F::of(targets.len() as f64);
                let dl = acc!(*logits);
                for (i, &t) in targets.iter().enumerate() {
                    for j in 0..c {
                        let onehot = if j == t { F::one() } else { F::zero() };
                        dl[i * c + j] += scale * (probs[i * c + j] - onehot);
                    }
                }
            }
            Op::Mse { pred, target } => {
                let p = val(*pred);
                let scale = g[0] * F::of(2.0) / F::of(target.len() as f64);
                acc!(*pred)
                    .iter_mut()
                    .zip(p.iter().zip(target))
                    .for_each(|(d, (&a, &b))| *d += scale * (a - b));
            }
        }
    }
}

/// Matrix product of two rank-2 tensors.
pub fn matmul<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let mut tape = Tape::new();
    let (a, b) = (tape.input(a.clone()), tape.input(b.clone()));
    let c = tape.matmul(a, b)?;
    Ok(tape.tensor(c))
}

/// Row-wise softmax of a tensor over its last axis.
pub fn softmax_rows<F: Real>(x: &Tensor<F>) -> Result<Tensor<F>> {
    let mut tape = Tape::new();
    let x = tape.input(x.clone());
    let y = tape.softmax_rows(x)?;
    Ok(tape.tensor(y))
}
