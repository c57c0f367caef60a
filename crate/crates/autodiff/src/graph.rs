//! Tape-based reverse-mode differentiation.
//!
//! Values are computed eagerly as nodes are appended, so the node list is
//! already in topological order; `backward` walks it in reverse.

use crate::error::AutodiffError;
use crate::tensor::{gemm, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    /// `a · bᵀ`
    MatMulBt(usize, usize),
    AddBias(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Tanh(usize),
    Relu(usize),
    /// `1 - tanh(x)^2`
    TanhDeriv(usize),
    /// Heaviside step of the input; carries no gradient.
    ReluMask,
    Sigmoid(usize),
    Square(usize),
    Concat(Vec<usize>),
    Slice { src: usize, start: usize },
    RowNorm(usize),
    Mean(usize),
    Sum(usize),
    /// Per-row `phiᵀ · T · psi` with `T` stored row-major in `d*d` columns.
    Bilinear(usize, usize, usize),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of operations; owns every intermediate value.
#[derive(Default, Debug)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients indexed by node, as returned from [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros shaped like `like` when the node was
    /// unreachable from the output.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_err(op: &str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::Shape(format!("{op}: {:?} vs {:?}", a.shape(), b.shape()))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    /// Differentiable leaf (parameter or input we want a gradient for).
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::MatMul(a.0, b.0), rg))
    }

    /// `a · bᵀ` for `a: [n,k]`, `b: [m,k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, k, m) = (av.rows(), av.cols(), bv.rows());
        if bv.cols() != k {
            return Err(shape_err("matmul_bt", av, bv));
        }
        let mut out = Tensor::zeros(&[n, m]);
        gemm(n, k, m, av.data(), (k, 1), bv.data(), (1, k), out.data_mut(), 0.0);
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::MatMulBt(a.0, b.0), rg))
    }

    /// Adds a length-`m` bias to every row of an `[n,m]` matrix.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, AutodiffError> {
        let (xv, bv) = (self.value(x), self.value(b));
        let m = xv.cols();
        if bv.len() != m {
            return Err(shape_err("add_bias", xv, bv));
        }
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(m) {
            for (o, bb) in row.iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        let rg = self.rg(x.0) || self.rg(b.0);
        Ok(self.push(out, Op::AddBias(x.0, b.0), rg))
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(op, av, bv));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::Add(a.0, b.0), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::Sub(a.0, b.0), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a.0) || self.rg(b.0);
        Ok(self.push(out, Op::Mul(a.0, b.0), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        let rg = self.rg(a.0);
        self.push(out, Op::Scale(a.0, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        let rg = self.rg(a.0);
        self.push(out, Op::AddScalar(a.0), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(a.0);
        self.push(out, Op::Tanh(a.0), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a.0);
        self.push(out, Op::Relu(a.0), rg)
    }

    pub fn tanh_deriv(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| {
            let t = x.tanh();
            1.0 - t * t
        });
        let rg = self.rg(a.0);
        self.push(out, Op::TanhDeriv(a.0), rg)
    }

    /// Derivative of relu at `a`: 1 where `a > 0`, else 0. Its own second
    /// derivative is taken to be exactly zero.
    pub fn relu_mask(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
        self.push(out, Op::ReluMask, false)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(crate::sigmoid);
        let rg = self.rg(a.0);
        self.push(out, Op::Sigmoid(a.0), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        let rg = self.rg(a.0);
        self.push(out, Op::Square(a.0), rg)
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let vals: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let out = Tensor::hconcat(&vals)?;
        let rg = parts.iter().any(|p| self.rg(p.0));
        Ok(self.push(out, Op::Concat(parts.iter().map(|p| p.0).collect()), rg))
    }

    /// Contiguous run of `src`'s flat data starting at `start`, viewed with `shape`.
    pub fn slice(&mut self, src: Var, start: usize, shape: &[usize]) -> Result<Var, AutodiffError> {
        let n: usize = shape.iter().product();
        let sv = self.value(src);
        if start + n > sv.len() {
            return Err(AutodiffError::Shape(format!(
                "slice [{start}, {}) out of {} values",
                start + n,
                sv.len()
            )));
        }
        let out = Tensor::new(shape.to_vec(), sv.data()[start..start + n].to_vec())?;
        let rg = self.rg(src.0);
        Ok(self.push(out, Op::Slice { src: src.0, start }, rg))
    }

    /// Euclidean norm of each row, `[n,m] -> [n,1]`.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let m = av.cols();
        let data: Vec<f64> = av
            .data()
            .chunks(m)
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let n = data.len();
        let out = Tensor::new(vec![n, 1], data).expect("row_norm shape");
        let rg = self.rg(a.0);
        self.push(out, Op::RowNorm(a.0), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).mean());
        let rg = self.rg(a.0);
        self.push(out, Op::Mean(a.0), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a.0);
        self.push(out, Op::Sum(a.0), rg)
    }

    /// Per-row bilinear contraction `phi_nᵀ T_n psi_n` where row `n` of `t`
    /// holds a `d x d` matrix in row-major order. Output is `[n,1]`.
    pub fn bilinear(&mut self, phi: Var, t: Var, psi: Var) -> Result<Var, AutodiffError> {
        let (pv, tv, sv) = (self.value(phi), self.value(t), self.value(psi));
        let (n, d) = (pv.rows(), pv.cols());
        if sv.rows() != n || sv.cols() != d || tv.rows() != n || tv.cols() != d * d {
            return Err(AutodiffError::Shape(format!(
                "bilinear: phi {:?}, T {:?}, psi {:?}",
                pv.shape(),
                tv.shape(),
                sv.shape()
            )));
        }
        let mut out = Vec::with_capacity(n);
        for r in 0..n {
            let (p, tm, s) = (pv.row(r), tv.row(r), sv.row(r));
            let mut acc = 0.0;
            for i in 0..d {
                let row = &tm[i * d..(i + 1) * d];
                let inner: f64 = row.iter().zip(s).map(|(a, b)| a * b).sum();
                acc += p[i] * inner;
            }
            out.push(acc);
        }
        let out = Tensor::new(vec![n, 1], out)?;
        let rg = self.rg(phi.0) || self.rg(t.0) || self.rg(psi.0);
        Ok(self.push(out, Op::Bilinear(phi.0, t.0, psi.0), rg))
    }

    /// Reverse pass from `out` seeded with `seed`.
    pub fn backward(&self, out: Var, seed: &Tensor) -> Result<Gradients, AutodiffError> {
        let ov = self.value(out);
        if ov.shape() != seed.shape() {
            return Err(shape_err("backward seed", ov, seed));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; out.0 + 1];
        grads[out.0] = Some(seed.clone());
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Backward from a scalar output with seed 1.
    pub fn backward_scalar(&self, out: Var) -> Result<Gradients, AutodiffError> {
        let seed = Tensor::filled(self.value(out).shape(), 1.0);
        self.backward(out, &seed)
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        match &node.op {
            Op::Leaf | Op::ReluMask => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                if self.rg(*a) {
                    // dA = g · Bᵀ
                    let mut da = Tensor::zeros(av.shape());
                    gemm(n, m, k, g.data(), (m, 1), bv.data(), (1, m), da.data_mut(), 0.0);
                    accumulate(grads, *a, da);
                }
                if self.rg(*b) {
                    // dB = Aᵀ · g
                    let mut db = Tensor::zeros(bv.shape());
                    gemm(k, n, m, av.data(), (1, k), g.data(), (m, 1), db.data_mut(), 0.0);
                    accumulate(grads, *b, db);
                }
            }
            Op::MatMulBt(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (n, k, m) = (av.rows(), av.cols(), bv.rows());
                if self.rg(*a) {
                    // dA = g · B
                    let mut da = Tensor::zeros(av.shape());
                    gemm(n, m, k, g.data(), (m, 1), bv.data(), (k, 1), da.data_mut(), 0.0);
                    accumulate(grads, *a, da);
                }
                if self.rg(*b) {
                    // dB = gᵀ · A
                    let mut db = Tensor::zeros(bv.shape());
                    gemm(m, n, k, g.data(), (1, m), av.data(), (k, 1), db.data_mut(), 0.0);
                    accumulate(grads, *b, db);
                }
            }
            Op::AddBias(x, b) => {
                if self.rg(*x) {
                    accumulate(grads, *x, g.clone());
                }
                if self.rg(*b) {
                    let bv = val(*b);
                    let m = bv.len();
                    let mut db = Tensor::zeros(bv.shape());
                    for row in g.data().chunks(m) {
                        for (d, r) in db.data_mut().iter_mut().zip(row) {
                            *d += r;
                        }
                    }
                    accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.rg(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.rg(*b) {
                    accumulate(grads, *b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    accumulate(grads, *a, g.zip_map(val(*b), |x, y| x * y));
                }
                if self.rg(*b) {
                    accumulate(grads, *b, g.zip_map(val(*a), |x, y| x * y));
                }
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.map(|x| x * c)),
            Op::AddScalar(a) => accumulate(grads, *a, g.clone()),
            Op::Tanh(a) => {
                accumulate(grads, *a, g.zip_map(&node.value, |gg, y| gg * (1.0 - y * y)));
            }
            Op::Relu(a) => {
                accumulate(grads, *a, g.zip_map(val(*a), |gg, x| if x > 0.0 { gg } else { 0.0 }));
            }
            Op::TanhDeriv(a) => {
                let d = val(*a).map(|x| {
                    let t = x.tanh();
                    -2.0 * t * (1.0 - t * t)
                });
                accumulate(grads, *a, g.zip_map(&d, |gg, dd| gg * dd));
            }
            Op::Sigmoid(a) => {
                accumulate(grads, *a, g.zip_map(&node.value, |gg, s| gg * s * (1.0 - s)));
            }
            Op::Square(a) => {
                accumulate(grads, *a, g.zip_map(val(*a), |gg, x| 2.0 * gg * x));
            }
            Op::Concat(parts) => {
                let rows = g.rows();
                let total = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                        }
                        let t = Tensor::new(val(p).shape().to_vec(), d).expect("concat grad");
                        accumulate(grads, p, t);
                    }
                    offset += w;
                }
            }
            Op::Slice { src, start } => {
                let sv = val(*src);
                let mut d = Tensor::zeros(sv.shape());
                d.data_mut()[*start..*start + g.len()].copy_from_slice(g.data());
                accumulate(grads, *src, d);
            }
            Op::RowNorm(a) => {
                let av = val(*a);
                let m = av.cols();
                let mut d = Tensor::zeros(av.shape());
                for (r, (drow, xrow)) in d.data_mut().chunks_mut(m).zip(av.data().chunks(m)).enumerate() {
                    let norm = node.value.data()[r];
                    if norm > 0.0 {
                        let s = g.data()[r] / norm;
                        for (dd, x) in drow.iter_mut().zip(xrow) {
                            *dd = s * x;
                        }
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::Mean(a) => {
                let av = val(*a);
                let s = g.item() / av.len() as f64;
                accumulate(grads, *a, Tensor::filled(av.shape(), s));
            }
            Op::Sum(a) => {
                let av = val(*a);
                accumulate(grads, *a, Tensor::filled(av.shape(), g.item()));
            }
            Op::Bilinear(phi, t, psi) => {
                let (pv, tv, sv) = (val(*phi), val(*t), val(*psi));
                let (n, d) = (pv.rows(), pv.cols());
                let mut dphi = Tensor::zeros(pv.shape());
                let mut dt = Tensor::zeros(tv.shape());
                let mut dpsi = Tensor::zeros(sv.shape());
                for r in 0..n {
                    let gr = g.data()[r];
                    let (p, tm, s) = (pv.row(r), tv.row(r), sv.row(r));
                    for i in 0..d {
                        let trow = &tm[i * d..(i + 1) * d];
                        let mut ts = 0.0;
                        for j in 0..d {
                            ts += trow[j] * s[j];
                            dt.data_mut()[r * d * d + i * d + j] = gr * p[i] * s[j];
                            dpsi.data_mut()[r * d + j] += gr * p[i] * trow[j];
                        }
                        dphi.data_mut()[r * d + i] = gr * ts;
                    }
                }
                if self.rg(*phi) {
                    accumulate(grads, *phi, dphi);
                }
                if self.rg(*t) {
                    accumulate(grads, *t, dt);
                }
                if self.rg(*psi) {
                    accumulate(grads, *psi, dpsi);
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], idx: usize, t: Tensor) {
    match &mut grads[idx] {
        Some(existing) => existing.add_assign(&t),
        slot @ None => *slot = Some(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient_at_three_is_six() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::scalar(3.0));
        let y = g.square(x);
        let grads = g.backward_scalar(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::scalar(3.0));
        let c = g.constant(Tensor::scalar(5.0));
        let zero = g.scale(x, 0.0);
        let y = g.add(zero, c).unwrap();
        let grads = g.backward_scalar(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 0.0);
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn seed_shape_mismatch_is_rejected() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::zeros(&[2, 3]));
        let y = g.tanh(x);
        let err = g.backward(y, &Tensor::zeros(&[3, 2])).unwrap_err();
        assert!(matches!(err, AutodiffError::Shape(_)));
    }

    #[test]
    fn matmul_shape_mismatch_is_rejected() {
        let mut g = Graph::new();
        let a = g.variable(Tensor::zeros(&[2, 3]));
        let b = g.variable(Tensor::zeros(&[2, 3]));
        assert!(g.matmul(a, b).is_err());
        assert!(g.matmul_bt(a, b).is_ok());
    }

    #[test]
    fn bilinear_basis_contraction() {
        let mut g = Graph::new();
        let phi = g.constant(Tensor::row_vector(&[1.0, 0.0]));
        let t = g.constant(Tensor::row_vector(&[1.0, 0.0, 0.0, 1.0]));
        let psi = g.constant(Tensor::row_vector(&[1.0, 0.0]));
        let v = g.bilinear(phi, t, psi).unwrap();
        assert_eq!(g.value(v).item(), 1.0);
    }

    #[test]
    fn row_norm_of_zero_row_has_zero_gradient() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::zeros(&[1, 3]));
        let n = g.row_norm(x);
        let s = g.sum(n);
        let grads = g.backward_scalar(s).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 0.0));
    }
}
