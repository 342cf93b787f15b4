use std::sync::Arc;

use super::{dim_err, Real, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the second operand of a binary op lines up with the first.
///
/// `RightPrefix` means the right operand's shape is a leading prefix of the
/// left operand's shape and is repeated over the remaining trailing axes
/// (e.g. a per-channel gate `[n, d]` against vectors `[n, d, 3]`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    RightPrefix { inner: usize },
    LeftPrefix { inner: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    VecLinear {
        v: Var,
        w: Var,
    },
    Binary(Binary, Var, Var, Bcast),
    Scale(Var, f64),
    AddScalar(Var),
    Silu(Var),
    Sigmoid(Var),
    Recip(Var),
    Sum {
        a: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Mean {
        a: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    SumAll(Var),
    ChannelNorm(Var),
    ChannelInner(Var, Var),
    ScatterAdd {
        m: Var,
        targets: Arc<[usize]>,
    },
    Gather {
        x: Var,
        idx: Arc<[usize]>,
    },
    Concat {
        a: Var,
        b: Var,
        p: usize,
        q: usize,
    },
    RepeatChannels {
        v: Var,
        d: usize,
    },
    Rbf {
        dist: Var,
        centers: Arc<[f64]>,
        sigma: f64,
    },
    Cutoff {
        dist: Var,
        rc: f64,
    },
    Outer3(Var, Var),
    Reshape(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

/// Per-variable gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

/// Append-only record of one forward evaluation.
///
/// Every op checks shapes eagerly, stores its result, and remembers its
/// inputs. [`Tape::backward`] replays the record once in reverse; after that
/// the tape is spent.
pub struct Tape<T: Real = f64> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn silu_parts<T: Real>(x: T) -> (T, T) {
    let s = sigmoid(x);
    (x * s, s)
}

fn sigmoid<T: Real>(x: T) -> T {
    if x.re() >= 0.0 {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn cutoff_value<T: Real>(d: T, rc: f64) -> T {
    if d.re() <= rc {
        (T::one() + (d.scale(std::f64::consts::PI / rc)).cos()).scale(0.5)
    } else {
        T::zero()
    }
}

fn cutoff_slope<T: Real>(d: T, rc: f64) -> T {
    if d.re() <= rc {
        let k = std::f64::consts::PI / rc;
        -(d.scale(k)).sin().scale(0.5 * k)
    } else {
        T::zero()
    }
}

/// `c[m,n] += a[m,k] · b[k,n]`
fn mm_acc<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    let k4 = k - k % 4;
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        // four rows of b per pass over c
        for p in (0..k4).step_by(4) {
            let (a0, a1, a2, a3) = (arow[p], arow[p + 1], arow[p + 2], arow[p + 3]);
            let b0 = &b[p * n..(p + 1) * n];
            let b1 = &b[(p + 1) * n..(p + 2) * n];
            let b2 = &b[(p + 2) * n..(p + 3) * n];
            let b3 = &b[(p + 3) * n..(p + 4) * n];
            for j in 0..n {
                crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
        }
        for p in k4..k {
            let aip = arow[p];
            let brow = &b[p * n..(p + 1) * n];
            for (cj, &bj) in crow.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
}

/// `c[k,n] += a[m,k]ᵀ · g[m,n]`
fn mm_at_b_acc<T: Real>(a: &[T], g: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    let m4 = m - m % 4;
    for i in (0..m4).step_by(4) {
        let g0 = &g[i * n..(i + 1) * n];
        let g1 = &g[(i + 1) * n..(i + 2) * n];
        let g2 = &g[(i + 2) * n..(i + 3) * n];
        let g3 = &g[(i + 3) * n..(i + 4) * n];
        for p in 0..k {
            let (a0, a1, a2, a3) = (a[i * k + p], a[(i + 1) * k + p], a[(i + 2) * k + p], a[(i + 3) * k + p]);
            let crow = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += a0 * g0[j] + a1 * g1[j] + a2 * g2[j] + a3 * g3[j];
            }
        }
    }
    for i in m4..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let crow = &mut c[p * n..(p + 1) * n];
            for (cj, &gj) in crow.iter_mut().zip(grow) {
                *cj += aip * gj;
            }
        }
    }
}

/// `c[m,k] += g[m,n] · b[k,n]ᵀ`
fn mm_a_bt_acc<T: Real>(g: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = T::zero();
            for (&gj, &bj) in grow.iter().zip(brow) {
                acc += gj * bj;
            }
            c[i * k + p] += acc;
        }
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Real> Tape<T> {
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

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(dim_err("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        mm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), &[a, b]))
    }

    /// `x[n,in] · w[in,out] + b[out]`
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, TensorError> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[0] {
            return Err(dim_err("linear", format!("{sx:?} x {sw:?}")));
        }
        let (m, k, n) = (sx[0], sx[1], sw[1]);
        let mut out = vec![T::zero(); m * n];
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != [n] {
                return Err(dim_err("linear", format!("bias {:?} for width {n}", bv.shape())));
            }
            for row in out.chunks_mut(n) {
                row.copy_from_slice(bv.data());
            }
        }
        mm_acc(self.value(x).data(), self.value(w).data(), &mut out, m, k, n);
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::Linear { x, w, b }, &inputs))
    }

    /// Channel-mixing map for vector features: `v[n,in,3] -> [n,out,3]`,
    /// `out[n,o,s] = Σ_c v[n,c,s]·w[c,o]`. The spatial axis is untouched.
    pub fn vec_linear(&mut self, v: Var, w: Var) -> Result<Var, TensorError> {
        let (sv, sw) = (self.shape(v), self.shape(w));
        if sv.len() != 3 || sv[2] != 3 || sw.len() != 2 || sv[1] != sw[0] {
            return Err(dim_err("vec_linear", format!("{sv:?} x {sw:?}")));
        }
        let (n, cin, cout) = (sv[0], sv[1], sw[1]);
        let vd = self.value(v).data();
        let wd = self.value(w).data();
        let mut out = vec![T::zero(); n * cout * 3];
        for a in 0..n {
            let vrow = &vd[a * cin * 3..(a + 1) * cin * 3];
            let orow = &mut out[a * cout * 3..(a + 1) * cout * 3];
            for c in 0..cin {
                let (x, y, z) = (vrow[c * 3], vrow[c * 3 + 1], vrow[c * 3 + 2]);
                for o in 0..cout {
                    let wco = wd[c * cout + o];
                    orow[o * 3] += x * wco;
                    orow[o * 3 + 1] += y * wco;
                    orow[o * 3 + 2] += z * wco;
                }
            }
        }
        Ok(self.push(
            Tensor::new(vec![n, cout, 3], out)?,
            Op::VecLinear { v, w },
            &[v, w],
        ))
    }

    fn bcast(&self, op: &'static str, a: Var, b: Var) -> Result<(Bcast, Vec<usize>), TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Ok((Bcast::Same, sa.to_vec()));
        }
        if sb.len() < sa.len() && sa[..sb.len()] == *sb {
            let inner = sa[sb.len()..].iter().product();
            return Ok((Bcast::RightPrefix { inner }, sa.to_vec()));
        }
        if sa.len() < sb.len() && sb[..sa.len()] == *sa {
            let inner = sb[sa.len()..].iter().product();
            return Ok((Bcast::LeftPrefix { inner }, sb.to_vec()));
        }
        Err(dim_err(op, format!("{sa:?} vs {sb:?}")))
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var, TensorError> {
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        };
        let (bc, shape) = self.bcast(name, a, b)?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let f = |x: T, y: T| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let out: Vec<T> = match bc {
            Bcast::Same => av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect(),
            Bcast::RightPrefix { inner } => av
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, bv[i / inner]))
                .collect(),
            Bcast::LeftPrefix { inner } => bv
                .iter()
                .enumerate()
                .map(|(i, &y)| f(av[i / inner], y))
                .collect(),
        };
        Ok(self.push(Tensor::new(shape, out)?, Op::Binary(kind, a, b, bc), &[a, b]))
    }

    /// Elementwise sum; equal shapes or prefix broadcast.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Sub, a, b)
    }

    /// Elementwise product; equal shapes or prefix broadcast, so a gate of
    /// shape `[n, d]` scales every spatial component of `[n, d, 3]`.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x.scale(c));
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let c = T::from_f64(c);
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a), &[a])
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| silu_parts(x).0);
        self.push(out, Op::Silu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.recip());
        self.push(out, Op::Recip(a), &[a])
    }

    fn reduce_shape(&self, a: Var, axis: usize) -> Result<(Vec<usize>, usize, usize, usize), TensorError> {
        let s = self.shape(a);
        if axis >= s.len() {
            return Err(TensorError::Axis {
                axis,
                rank: s.len(),
            });
        }
        let (outer, len, inner) = split_axis(s, axis);
        let mut out_shape = s.to_vec();
        out_shape.remove(axis);
        Ok((out_shape, outer, len, inner))
    }

    fn reduce_sum(&self, a: Var, outer: usize, len: usize, inner: usize) -> Vec<T> {
        let d = self.value(a).data();
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for k in 0..len {
                let src = &d[(o * len + k) * inner..(o * len + k + 1) * inner];
                for (dst, &x) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *dst += x;
                }
            }
        }
        out
    }

    pub fn sum(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let (shape, outer, len, inner) = self.reduce_shape(a, axis)?;
        let out = self.reduce_sum(a, outer, len, inner);
        Ok(self.push(Tensor::new(shape, out)?, Op::Sum { a, outer, len, inner }, &[a]))
    }

    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let (shape, outer, len, inner) = self.reduce_shape(a, axis)?;
        let inv = 1.0 / len.max(1) as f64;
        let out = self
            .reduce_sum(a, outer, len, inner)
            .into_iter()
            .map(|x| x.scale(inv))
            .collect();
        Ok(self.push(Tensor::new(shape, out)?, Op::Mean { a, outer, len, inner }, &[a]))
    }

    /// Sum of every element, as a rank-0 tensor.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let mut acc = T::zero();
        for &x in self.value(a).data() {
            acc += x;
        }
        self.push(Tensor::scalar(acc), Op::SumAll(a), &[a])
    }

    /// Euclidean norm over a trailing spatial axis of extent 3. The norm of a
    /// zero vector is 0 and passes a zero gradient.
    pub fn channel_norm(&mut self, v: Var) -> Result<Var, TensorError> {
        let s = self.shape(v);
        if s.last() != Some(&3) {
            return Err(dim_err("channel_norm", format!("trailing axis of {s:?} is not 3")));
        }
        let shape = s[..s.len() - 1].to_vec();
        let out: Vec<T> = self
            .value(v)
            .data()
            .chunks(3)
            .map(|c| {
                let sq = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
                if sq.re() == 0.0 {
                    T::zero()
                } else {
                    sq.sqrt()
                }
            })
            .collect();
        Ok(self.push(Tensor::new(shape, out)?, Op::ChannelNorm(v), &[v]))
    }

    /// Dot product over the trailing spatial axis.
    pub fn channel_inner(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb || sa.last() != Some(&3) {
            return Err(dim_err("channel_inner", format!("{sa:?} vs {sb:?}")));
        }
        let shape = sa[..sa.len() - 1].to_vec();
        let out: Vec<T> = self
            .value(a)
            .data()
            .chunks(3)
            .zip(self.value(b).data().chunks(3))
            .map(|(x, y)| x[0] * y[0] + x[1] * y[1] + x[2] * y[2])
            .collect();
        Ok(self.push(Tensor::new(shape, out)?, Op::ChannelInner(a, b), &[a, b]))
    }

    /// `out[t] = Σ_{e : targets[e] = t} m[e]`, accumulated in message order.
    pub fn scatter_add(
        &mut self,
        m: Var,
        targets: &Arc<[usize]>,
        n: usize,
    ) -> Result<Var, TensorError> {
        let s = self.shape(m);
        if s.is_empty() || s[0] != targets.len() {
            return Err(dim_err(
                "scatter_add",
                format!("{} targets for messages {s:?}", targets.len()),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
            return Err(TensorError::Index {
                index: bad,
                extent: n,
            });
        }
        let row: usize = s[1..].iter().product();
        let mut shape = s.to_vec();
        shape[0] = n;
        let md = self.value(m).data();
        let mut out = vec![T::zero(); n * row];
        for (e, &t) in targets.iter().enumerate() {
            for (dst, &x) in out[t * row..(t + 1) * row]
                .iter_mut()
                .zip(&md[e * row..(e + 1) * row])
            {
                *dst += x;
            }
        }
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::ScatterAdd {
                m,
                targets: targets.clone(),
            },
            &[m],
        ))
    }

    /// Row selection: `out[e] = x[idx[e]]`.
    pub fn gather(&mut self, x: Var, idx: &Arc<[usize]>) -> Result<Var, TensorError> {
        let s = self.shape(x);
        if s.is_empty() {
            return Err(dim_err("gather", "rank-0 source"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= s[0]) {
            return Err(TensorError::Index {
                index: bad,
                extent: s[0],
            });
        }
        let row: usize = s[1..].iter().product();
        let mut shape = s.to_vec();
        shape[0] = idx.len();
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(idx.len() * row);
        for &i in idx.iter() {
            out.extend_from_slice(&xd[i * row..(i + 1) * row]);
        }
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Gather {
                x,
                idx: idx.clone(),
            },
            &[x],
        ))
    }

    /// Concatenation of `[n,p]` and `[n,q]` along the feature axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(dim_err("concat", format!("{sa:?} ++ {sb:?}")));
        }
        let (n, p, q) = (sa[0], sa[1], sb[1]);
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(n * (p + q));
        for r in 0..n {
            out.extend_from_slice(&ad[r * p..(r + 1) * p]);
            out.extend_from_slice(&bd[r * q..(r + 1) * q]);
        }
        Ok(self.push(
            Tensor::new(vec![n, p + q], out)?,
            Op::Concat { a, b, p, q },
            &[a, b],
        ))
    }

    /// `[n,3] -> [n,d,3]`, the same vector in every channel.
    pub fn repeat_channels(&mut self, v: Var, d: usize) -> Result<Var, TensorError> {
        let s = self.shape(v);
        if s.len() != 2 || s[1] != 3 {
            return Err(dim_err("repeat_channels", format!("{s:?}")));
        }
        let n = s[0];
        let vd = self.value(v).data();
        let mut out = Vec::with_capacity(n * d * 3);
        for r in 0..n {
            for _ in 0..d {
                out.extend_from_slice(&vd[r * 3..r * 3 + 3]);
            }
        }
        Ok(self.push(
            Tensor::new(vec![n, d, 3], out)?,
            Op::RepeatChannels { v, d },
            &[v],
        ))
    }

    /// Gaussian radial basis `[n] -> [n, centers]`,
    /// `exp(-(x - μ)² / (2σ²))`.
    pub fn rbf(&mut self, dist: Var, centers: &Arc<[f64]>, sigma: f64) -> Result<Var, TensorError> {
        let s = self.shape(dist);
        if s.len() != 1 {
            return Err(dim_err("rbf", format!("{s:?}")));
        }
        let k = centers.len();
        let inv = 1.0 / (2.0 * sigma * sigma);
        let mut out = Vec::with_capacity(s[0] * k);
        for &x in self.value(dist).data() {
            for &mu in centers.iter() {
                let dx = x - T::from_f64(mu);
                out.push((-(dx * dx).scale(inv)).exp());
            }
        }
        Ok(self.push(
            Tensor::new(vec![s[0], k], out)?,
            Op::Rbf {
                dist,
                centers: centers.clone(),
                sigma,
            },
            &[dist],
        ))
    }

    /// Cosine envelope `½(1 + cos(πx/rc))` inside the cutoff, 0 outside.
    pub fn cosine_cutoff(&mut self, dist: Var, rc: f64) -> Var {
        let out = self.value(dist).map(|x| cutoff_value(x, rc));
        self.push(out, Op::Cutoff { dist, rc }, &[dist])
    }

    /// Row-wise dyadic product `[n,3] ⊗ [n,3] -> [n,3,3]`.
    pub fn outer3(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb || sa.len() != 2 || sa[1] != 3 {
            return Err(dim_err("outer3", format!("{sa:?} vs {sb:?}")));
        }
        let n = sa[0];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(n * 9);
        for r in 0..n {
            for i in 0..3 {
                for j in 0..3 {
                    out.push(ad[r * 3 + i] * bd[r * 3 + j]);
                }
            }
        }
        Ok(self.push(Tensor::new(vec![n, 3, 3], out)?, Op::Outer3(a, b), &[a, b]))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        let out = self.value(a).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// Reverse sweep from a scalar `root`. The tape can be swept only once.
    pub fn backward(&mut self, root: Var) -> Result<Gradients<T>, TensorError> {
        if self.consumed {
            return Err(TensorError::StaleTape);
        }
        if root.0 >= self.nodes.len() {
            return Err(TensorError::UnknownVar(root.0));
        }
        if self.nodes[root.0].value.numel() != 1 {
            return Err(TensorError::NonScalarRoot(
                self.nodes[root.0].value.shape().to_vec(),
            ));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<T>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![T::one()]);

        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let node = &self.nodes[i];
                match g {
                    Some(g) if node.requires_grad => {
                        Some(Tensor::new(node.value.shape().to_vec(), g).expect("grad shape"))
                    }
                    _ => None,
                }
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut Vec<T>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let n = node.value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if let Some(ga) = self.acc(grads, *a) {
                    mm_a_bt_acc(g, self.value(*b).data(), ga, m, k, n);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    mm_at_b_acc(self.value(*a).data(), g, gb, m, k, n);
                }
            }
            Op::Linear { x, w, b } => {
                let (sx, sw) = (self.shape(*x), self.shape(*w));
                let (m, k, n) = (sx[0], sx[1], sw[1]);
                if let Some(gx) = self.acc(grads, *x) {
                    mm_a_bt_acc(g, self.value(*w).data(), gx, m, k, n);
                }
                if let Some(gw) = self.acc(grads, *w) {
                    mm_at_b_acc(self.value(*x).data(), g, gw, m, k, n);
                }
                if let Some(b) = b {
                    if let Some(gb) = self.acc(grads, *b) {
                        for row in g.chunks(n) {
                            for (d, &x) in gb.iter_mut().zip(row) {
                                *d += x;
                            }
                        }
                    }
                }
            }
            Op::VecLinear { v, w } => {
                let (sv, sw) = (self.shape(*v), self.shape(*w));
                let (n, cin, cout) = (sv[0], sv[1], sw[1]);
                let wd = self.value(*w).data();
                if let Some(gv) = self.acc(grads, *v) {
                    for a in 0..n {
                        let grow = &g[a * cout * 3..(a + 1) * cout * 3];
                        let gvrow = &mut gv[a * cin * 3..(a + 1) * cin * 3];
                        for c in 0..cin {
                            let (mut x, mut y, mut z) = (T::zero(), T::zero(), T::zero());
                            for o in 0..cout {
                                let wco = wd[c * cout + o];
                                x += grow[o * 3] * wco;
                                y += grow[o * 3 + 1] * wco;
                                z += grow[o * 3 + 2] * wco;
                            }
                            gvrow[c * 3] += x;
                            gvrow[c * 3 + 1] += y;
                            gvrow[c * 3 + 2] += z;
                        }
                    }
                }
                let vd = self.value(*v).data();
                if let Some(gw) = self.acc(grads, *w) {
                    for a in 0..n {
                        let grow = &g[a * cout * 3..(a + 1) * cout * 3];
                        let vrow = &vd[a * cin * 3..(a + 1) * cin * 3];
                        for c in 0..cin {
                            let (x, y, z) = (vrow[c * 3], vrow[c * 3 + 1], vrow[c * 3 + 2]);
                            let gwrow = &mut gw[c * cout..(c + 1) * cout];
                            for (o, dst) in gwrow.iter_mut().enumerate() {
                                *dst += x * grow[o * 3] + y * grow[o * 3 + 1] + z * grow[o * 3 + 2];
                            }
                        }
                    }
                }
            }
            Op::Binary(kind, a, b, bc) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                // index maps from output element to operand element
                let ia = |k: usize| match bc {
                    Bcast::LeftPrefix { inner } => k / inner,
                    _ => k,
                };
                let ib = |k: usize| match bc {
                    Bcast::RightPrefix { inner } => k / inner,
                    _ => k,
                };
                if let Some(ga) = self.acc(grads, *a) {
                    for (k, &gk) in g.iter().enumerate() {
                        ga[ia(k)] += match kind {
                            Binary::Add | Binary::Sub => gk,
                            Binary::Mul => gk * bv[ib(k)],
                        };
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (k, &gk) in g.iter().enumerate() {
                        gb[ib(k)] += match kind {
                            Binary::Add => gk,
                            Binary::Sub => -gk,
                            Binary::Mul => gk * av[ia(k)],
                        };
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (d, &gk) in ga.iter_mut().zip(g) {
                        *d += gk.scale(*c);
                    }
                }
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (d, &gk) in ga.iter_mut().zip(g) {
                        *d += gk;
                    }
                }
            }
            Op::Silu(a) => {
                let av = self.value(*a).data();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((d, &gk), &x) in ga.iter_mut().zip(g).zip(av) {
                        let s = sigmoid(x);
                        *d += gk * s * (T::one() + x * (T::one() - s));
                    }
                }
            }
            Op::Sigmoid(a) => {
                let out = node.value.data();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((d, &gk), &s) in ga.iter_mut().zip(g).zip(out) {
                        *d += gk * s * (T::one() - s);
                    }
                }
            }
            Op::Recip(a) => {
                let out = node.value.data();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((d, &gk), &r) in ga.iter_mut().zip(g).zip(out) {
                        *d -= gk * r * r;
                    }
                }
            }
            Op::Sum { a, outer, len, inner } | Op::Mean { a, outer, len, inner } => {
                let w = match node.op {
                    Op::Mean { .. } => 1.0 / (*len).max(1) as f64,
                    _ => 1.0,
                };
                if let Some(ga) = self.acc(grads, *a) {
                    for o in 0..*outer {
                        for k in 0..*len {
                            let dst = &mut ga[(o * len + k) * inner..(o * len + k + 1) * inner];
                            for (d, &gk) in dst.iter_mut().zip(&g[o * inner..(o + 1) * inner]) {
                                *d += gk.scale(w);
                            }
                        }
                    }
                }
            }
            Op::SumAll(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for d in ga.iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::ChannelNorm(v) => {
                let vd = self.value(*v).data();
                let out = node.value.data();
                if let Some(gv) = self.acc(grads, *v) {
                    for (r, &nrm) in out.iter().enumerate() {
                        if nrm.re() == 0.0 {
                            continue;
                        }
                        let s = g[r] / nrm;
                        for c in 0..3 {
                            gv[r * 3 + c] += s * vd[r * 3 + c];
                        }
                    }
                }
            }
            Op::ChannelInner(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    for (k, d) in ga.iter_mut().enumerate() {
                        *d += g[k / 3] * bd[k];
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (k, d) in gb.iter_mut().enumerate() {
                        *d += g[k / 3] * ad[k];
                    }
                }
            }
            Op::ScatterAdd { m, targets } => {
                let row = node.value.numel() / node.value.shape()[0].max(1);
                if let Some(gm) = self.acc(grads, *m) {
                    for (e, &t) in targets.iter().enumerate() {
                        for (d, &gk) in gm[e * row..(e + 1) * row]
                            .iter_mut()
                            .zip(&g[t * row..(t + 1) * row])
                        {
                            *d += gk;
                        }
                    }
                }
            }
            Op::Gather { x, idx } => {
                let s = self.shape(*x);
                let row: usize = s[1..].iter().product();
                if let Some(gx) = self.acc(grads, *x) {
                    for (e, &src) in idx.iter().enumerate() {
                        for (d, &gk) in gx[src * row..(src + 1) * row]
                            .iter_mut()
                            .zip(&g[e * row..(e + 1) * row])
                        {
                            *d += gk;
                        }
                    }
                }
            }
            Op::Concat { a, b, p, q } => {
                let w = p + q;
                let n = g.len() / w.max(1);
                if let Some(ga) = self.acc(grads, *a) {
                    for r in 0..n {
                        for c in 0..*p {
                            ga[r * p + c] += g[r * w + c];
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for r in 0..n {
                        for c in 0..*q {
                            gb[r * q + c] += g[r * w + p + c];
                        }
                    }
                }
            }
            Op::RepeatChannels { v, d } => {
                if let Some(gv) = self.acc(grads, *v) {
                    for (r, chunk) in g.chunks(d * 3).enumerate() {
                        for c in chunk.chunks(3) {
                            for s in 0..3 {
                                gv[r * 3 + s] += c[s];
                            }
                        }
                    }
                }
            }
            Op::Rbf {
                dist,
                centers,
                sigma,
            } => {
                let k = centers.len();
                let xd = self.value(*dist).data();
                let out = node.value.data();
                let inv = 1.0 / (sigma * sigma);
                if let Some(gd) = self.acc(grads, *dist) {
                    for (e, &x) in xd.iter().enumerate() {
                        let mut acc = T::zero();
                        for (m, &mu) in centers.iter().enumerate() {
                            let dx = x - T::from_f64(mu);
                            acc += g[e * k + m] * out[e * k + m] * dx;
                        }
                        gd[e] -= acc.scale(inv);
                    }
                }
            }
            Op::Cutoff { dist, rc } => {
                let xd = self.value(*dist).data();
                if let Some(gd) = self.acc(grads, *dist) {
                    for ((d, &gk), &x) in gd.iter_mut().zip(g).zip(xd) {
                        *d += gk * cutoff_slope(x, *rc);
                    }
                }
            }
            Op::Outer3(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    for r in 0..ad.len() / 3 {
                        for i in 0..3 {
                            for j in 0..3 {
                                ga[r * 3 + i] += g[r * 9 + i * 3 + j] * bd[r * 3 + j];
                            }
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for r in 0..bd.len() / 3 {
                        for i in 0..3 {
                            for j in 0..3 {
                                gb[r * 3 + j] += g[r * 9 + i * 3 + j] * ad[r * 3 + i];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_projector() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::eye(2));
        let m = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let y = tape.matmul(i2, m).unwrap();
        assert_eq!(tape.value(y).data(), &[1., 2., 3., 4.]);

        let p = tape.constant(t(&[2, 2], &[1., 0., 0., 0.]));
        let v = tape.constant(t(&[2, 1], &[5., 7.]));
        let y = tape.matmul(p, v).unwrap();
        assert_eq!(tape.value(y).data(), &[5., 0.]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(TensorError::Dimension { .. })));
    }

    #[test]
    fn activations_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0), true);
        let s = tape.silu(x);
        let g = tape.sigmoid(x);
        assert_eq!(tape.value(s).item(), 0.0);
        assert_eq!(tape.value(g).item(), 0.5);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 0.5);
    }

    #[test]
    fn reductions() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let s = tape.sum(a, 0).unwrap();
        assert_eq!(tape.value(s).data(), &[4., 6.]);
        let b = tape.constant(t(&[2], &[2., 4.]));
        let m = tape.mean(b, 0).unwrap();
        assert_eq!(tape.value(m).item(), 3.0);
        assert!(matches!(tape.sum(b, 1), Err(TensorError::Axis { axis: 1, rank: 1 })));
    }

    #[test]
    fn broadcast_rejects_unrelated_shapes() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[3]));
        assert!(tape.mul(a, b).is_err());
        let gate = tape.constant(Tensor::full(&[2], 2.0));
        let y = tape.mul(a, gate).unwrap();
        assert_eq!(tape.shape(y), &[2, 3]);
    }

    #[test]
    fn channel_norm_and_zero_subgradient() {
        let mut tape = Tape::new();
        let v = tape.leaf(t(&[2, 3], &[3., 4., 0., 0., 0., 0.]), true);
        let n = tape.channel_norm(v).unwrap();
        assert_eq!(tape.value(n).data(), &[5., 0.]);
        let s = tape.sum_all(n);
        let grads = tape.backward(s).unwrap();
        let g = grads.get(v).unwrap().data();
        let want = [0.6, 0.8, 0., 0., 0., 0.];
        assert!(g.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(g[2..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn channel_inner_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[1, 3], &[1., 0., 0.]));
        let b = tape.constant(t(&[1, 3], &[0., 1., 0.]));
        let c = tape.constant(t(&[1, 3], &[1., 2., 2.]));
        let ab = tape.channel_inner(a, b).unwrap();
        let cc = tape.channel_inner(c, c).unwrap();
        assert_eq!(tape.value(ab).data(), &[0.]);
        assert_eq!(tape.value(cc).data(), &[9.]);
        let bad = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(tape.channel_inner(a, bad).is_err());
    }

    #[test]
    fn scatter_add_examples() {
        let mut tape = Tape::new();
        let m = tape.constant(t(&[3, 1], &[1., 2., 3.]));
        let targets: Arc<[usize]> = vec![0, 0, 1].into();
        let out = tape.scatter_add(m, &targets, 2).unwrap();
        assert_eq!(tape.value(out).data(), &[3., 3.]);
        let out = tape.scatter_add(m, &targets, 3).unwrap();
        assert_eq!(tape.value(out).data(), &[3., 3., 0.]);
        let bad: Arc<[usize]> = vec![0, 2, 1].into();
        assert!(matches!(
            tape.scatter_add(m, &bad, 2),
            Err(TensorError::Index { index: 2, extent: 2 })
        ));
    }

    #[test]
    fn backward_square() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0), true);
        let y = tape.mul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn backward_errors() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]), true);
        let y = tape.scale(x, 2.0);
        assert!(matches!(tape.backward(y), Err(TensorError::NonScalarRoot(_))));
        let s = tape.sum_all(y);
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(TensorError::StaleTape)));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0), true);
        let c = tape.constant(Tensor::scalar(5.0));
        let y = tape.mul(x, c).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 5.0);
        assert!(grads.get(c).is_none());
    }
}
