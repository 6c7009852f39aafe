//! Tape-based reverse-mode differentiation over small dense matrices.
//!
//! Every operation appends a node holding its output value. `backward`
//! walks the tape in reverse, so gradients are accumulated in a fixed order
//! and results are bit-reproducible for identical inputs.
//!
//! Subgradient conventions: `relu'(0) = 0`, `leaky_relu'(0) = slope`,
//! `sqrt'(0) = 0`, max-pooling routes the gradient to the first maximal row,
//! and budget scaling is the identity whenever the budget is not exceeded.

use super::params::{ParamSet, Slot};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(Slot),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    MatMulTN(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Square(Var),
    Sin(Var),
    Cos(Var),
    Sum(Var),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Col(Var, usize),
    Row(Var, usize),
    MaxRows(Var),
    CumSum(Var),
    BudgetScale(Var, f64),
    PassThrough(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    stage: u16,
}

/// Records a forward computation for later differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    stages: Vec<String>,
    current_stage: u16,
}

/// Scales `v` so that its sum does not exceed `budget`:
/// `v · budget / max(budget, Σv)`.
///
/// When scaling is needed the factor is stepped down one ulp at a time until
/// the floating-point sum of the result is at most `budget`, so a second
/// application is always the identity.
pub fn budget_scale(v: &[f64], budget: f64) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total <= budget {
        return v.to_vec();
    }
    let mut factor = budget / total;
    if !factor.is_finite() || factor <= 0.0 {
        return v.iter().map(|x| x * factor).collect();
    }
    loop {
        let out: Vec<f64> = v.iter().map(|x| x * factor).collect();
        if out.iter().sum::<f64>() <= budget {
            return out;
        }
        factor = f64::from_bits(factor.to_bits() - 1);
    }
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.rows, "matmul {:?} x {:?}", a.shape(), b.shape());
    let mut out = Tensor::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out
}

/// `a · bᵀ`
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.cols, "matmul_nt {:?} x {:?}ᵀ", a.shape(), b.shape());
    let mut out = Tensor::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let arow = a.row(i);
        for j in 0..b.rows {
            let brow = b.row(j);
            let mut acc = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out.data[i * b.rows + j] = acc;
        }
    }
    out
}

/// `aᵀ · b`
fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.rows, b.rows, "matmul_tn {:?}ᵀ x {:?}", a.shape(), b.shape());
    let mut out = Tensor::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let brow = b.row(k);
        for i in 0..a.cols {
            let aki = a.data[k * a.cols + i];
            if aki == 0.0 {
                continue;
            }
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aki * bv;
            }
        }
    }
    out
}

fn transpose(a: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.cols, a.rows);
    for i in 0..a.rows {
        for j in 0..a.cols {
            out.data[j * a.rows + i] = a.data[i * a.cols + j];
        }
    }
    out
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_vec(a.rows, a.cols, a.data.iter().map(|&x| f(x)).collect())
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    assert_eq!(a.shape(), b.shape(), "elementwise shape mismatch");
    Tensor::from_vec(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    )
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(1024),
            stages: vec!["input".to_string()],
            current_stage: 0,
        }
    }

    /// Labels subsequently recorded nodes; used in non-finite diagnostics.
    pub fn stage(&mut self, label: impl Into<String>) {
        let label = label.into();
        if let Some(i) = self.stages.iter().position(|s| *s == label) {
            self.current_stage = i as u16;
        } else {
            self.stages.push(label);
            self.current_stage = (self.stages.len() - 1) as u16;
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            stage: self.current_stage,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        assert_eq!(t.len(), 1, "not a scalar");
        t.data[0]
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, params: &ParamSet, slot: Slot) -> Var {
        self.push(params.tensor(slot), Op::Param(slot))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = matmul(self.value(a), self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let v = matmul_nt(self.value(a), self.value(b));
        self.push(v, Op::MatMulNT(a, b))
    }

    /// `aᵀ · b`
    pub fn matmul_tn(&mut self, a: Var, b: Var) -> Var {
        let v = matmul_tn(self.value(a), self.value(b));
        self.push(v, Op::MatMulTN(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = transpose(self.value(a));
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = zip(self.value(a), self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = zip(self.value(a), self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = zip(self.value(a), self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = zip(self.value(a), self.value(b), |x, y| x / y);
        self.push(v, Op::Div(a, b))
    }

    /// Adds a `1 × c` (or `c × 1`) row to every row of an `r × c` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (av, rv) = (self.value(a), self.value(row));
        assert_eq!(av.cols, rv.len(), "add_row width");
        let mut out = av.clone();
        for r in 0..av.rows {
            for (o, &b) in out.data[r * av.cols..(r + 1) * av.cols].iter_mut().zip(&rv.data) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    /// Multiplies every entry of `a` by the `1 × 1` node `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        let k = self.scalar(s);
        let v = map(self.value(a), |x| x * k);
        self.push(v, Op::MulScalar(a, s))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = map(self.value(a), |x| x * k);
        self.push(v, Op::Scale(a, k))
    }

    /// Adds a constant tensor of the same shape.
    pub fn offset(&mut self, a: Var, c: &Tensor) -> Var {
        let v = zip(self.value(a), c, |x, y| x + y);
        self.push(v, Op::Offset(a))
    }

    pub fn offset_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = map(self.value(a), |x| x + c);
        self.push(v, Op::Offset(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = map(self.value(a), |x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = map(self.value(a), |x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = map(self.value(a), f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = map(self.value(a), f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = map(self.value(a), f64::sqrt);
        self.push(v, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = map(self.value(a), |x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = map(self.value(a), f64::sin);
        self.push(v, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let v = map(self.value(a), f64::cos);
        self.push(v, Op::Cos(a))
    }

    /// Sum of all entries, in storage order.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Softmax over all entries, keeping the shape.
    pub fn softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let max = av.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = av.data.iter().map(|&x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let v = Tensor::from_vec(av.rows, av.cols, exps.into_iter().map(|e| e / total).collect());
        self.push(v, Op::Softmax(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut c0 = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows, rows, "concat_cols rows");
            for r in 0..rows {
                out.data[r * cols + c0..r * cols + c0 + pv.cols].copy_from_slice(pv.row(r));
            }
            c0 += pv.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols, cols, "concat_rows cols");
            data.extend_from_slice(&pv.data);
        }
        let rows = data.len() / cols.max(1);
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    /// Column `c` as an `r × 1` vector.
    pub fn col(&mut self, a: Var, c: usize) -> Var {
        let av = self.value(a);
        let v = Tensor::column((0..av.rows).map(|r| av.get(r, c)).collect());
        self.push(v, Op::Col(a, c))
    }

    /// Row `r` as a `1 × c` matrix.
    pub fn row(&mut self, a: Var, r: usize) -> Var {
        let av = self.value(a);
        let v = Tensor::from_vec(1, av.cols, av.row(r).to_vec());
        self.push(v, Op::Row(a, r))
    }

    /// Column-wise maximum over rows, `1 × c`.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = Tensor::from_vec(1, av.cols, av.row(0).to_vec());
        for r in 1..av.rows {
            for c in 0..av.cols {
                if av.get(r, c) > out.data[c] {
                    out.data[c] = av.get(r, c);
                }
            }
        }
        self.push(out, Op::MaxRows(a))
    }

    /// Running sum over entries in storage order.
    pub fn cumsum(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut acc = 0.0;
        let data = av
            .data
            .iter()
            .map(|&x| {
                acc += x;
                acc
            })
            .collect();
        let v = Tensor::from_vec(av.rows, av.cols, data);
        self.push(v, Op::CumSum(a))
    }

    /// See [`budget_scale`].
    pub fn budget_scale(&mut self, a: Var, budget: f64) -> Var {
        let av = self.value(a);
        let v = Tensor::from_vec(av.rows, av.cols, budget_scale(&av.data, budget));
        self.push(v, Op::BudgetScale(a, budget))
    }

    /// Replaces the value of `a` with `value` while passing gradients through
    /// unchanged. Used for ulp-level feasibility corrections.
    pub fn pass_through(&mut self, a: Var, value: Tensor) -> Var {
        assert_eq!(self.value(a).shape(), value.shape());
        self.push(value, Op::PassThrough(a))
    }

    /// Fails with the stage label of the first non-finite node.
    pub fn check_finite(&self) -> Result<()> {
        match self.nodes.iter().find(|n| !n.value.all_finite()) {
            Some(n) => Err(Error::NonFinite {
                stage: self.stages[n.stage as usize].clone(),
            }),
            None => Ok(()),
        }
    }

    /// Reverse pass from the scalar `loss`. Returns one gradient per node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward from non-scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        fn acc_with(grads: &mut [Option<Tensor>], v: Var, shape: (usize, usize), f: impl FnOnce(&mut Tensor)) {
            let slot = &mut grads[v.0];
            if slot.is_none() {
                *slot = Some(Tensor::zeros(shape.0, shape.1));
            }
            f(slot.as_mut().unwrap());
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let out = &node.value;
            match &node.op {
                Op::Leaf | Op::Param(_) => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, matmul_nt(&g, bv));
                    acc(&mut grads, *b, matmul_tn(av, &g));
                }
                Op::MatMulNT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, matmul(&g, bv));
                    acc(&mut grads, *b, matmul_tn(&g, av));
                }
                Op::MatMulTN(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, matmul_nt(bv, &g));
                    acc(&mut grads, *b, matmul(av, &g));
                }
                Op::Transpose(a) => acc(&mut grads, *a, transpose(&g)),
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, map(&g, |x| -x));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, zip(&g, bv, |x, y| x * y));
                    acc(&mut grads, *b, zip(&g, av, |x, y| x * y));
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    acc(&mut grads, *a, zip(&g, bv, |x, y| x / y));
                    let gb = Tensor::from_vec(
                        g.rows,
                        g.cols,
                        g.data
                            .iter()
                            .zip(&out.data)
                            .zip(&bv.data)
                            .map(|((gi, oi), bi)| -gi * oi / bi)
                            .collect(),
                    );
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let rshape = self.value(*row).shape();
                    let mut gr = Tensor::zeros(rshape.0, rshape.1);
                    for r in 0..g.rows {
                        for (o, &x) in gr.data.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *row, gr);
                    acc(&mut grads, *a, g);
                }
                Op::MulScalar(a, s) => {
                    let av = self.value(*a);
                    let k = self.scalar(*s);
                    let gs: f64 = g.data.iter().zip(&av.data).map(|(x, y)| x * y).sum();
                    acc(&mut grads, *s, Tensor::scalar(gs));
                    acc(&mut grads, *a, map(&g, |x| x * k));
                }
                Op::Scale(a, k) => acc(&mut grads, *a, map(&g, |x| x * k)),
                Op::Offset(a) | Op::PassThrough(a) => acc(&mut grads, *a, g),
                Op::Relu(a) => {
                    let av = self.value(*a);
                    acc(&mut grads, *a, zip(&g, av, |x, y| if y > 0.0 { x } else { 0.0 }));
                }
                Op::LeakyRelu(a, slope) => {
                    let av = self.value(*a);
                    let s = *slope;
                    acc(&mut grads, *a, zip(&g, av, |x, y| if y > 0.0 { x } else { s * x }));
                }
                Op::Exp(a) => acc(&mut grads, *a, zip(&g, out, |x, y| x * y)),
                Op::Ln(a) => {
                    let av = self.value(*a);
                    acc(&mut grads, *a, zip(&g, av, |x, y| x / y));
                }
                Op::Sqrt(a) => acc(
                    &mut grads,
                    *a,
                    zip(&g, out, |x, y| if y > 0.0 { 0.5 * x / y } else { 0.0 }),
                ),
                Op::Square(a) => {
                    let av = self.value(*a);
                    acc(&mut grads, *a, zip(&g, av, |x, y| 2.0 * x * y));
                }
                Op::Sin(a) => {
                    let av = self.value(*a);
                    acc(&mut grads, *a, zip(&g, av, |x, y| x * y.cos()));
                }
                Op::Cos(a) => {
                    let av = self.value(*a);
                    acc(&mut grads, *a, zip(&g, av, |x, y| -x * y.sin()));
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut grads, *a, Tensor::from_vec(r, c, vec![g.data[0]; r * c]));
                }
                Op::Softmax(a) => {
                    let dot: f64 = g.data.iter().zip(&out.data).map(|(x, y)| x * y).sum();
                    acc(&mut grads, *a, zip(&g, out, |x, y| y * (x - dot)));
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let pc = self.value(p).cols;
                        let mut gp = Tensor::zeros(g.rows, pc);
                        for r in 0..g.rows {
                            gp.data[r * pc..(r + 1) * pc]
                                .copy_from_slice(&g.data[r * g.cols + c0..r * g.cols + c0 + pc]);
                        }
                        acc(&mut grads, p, gp);
                        c0 += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let (pr, pc) = self.value(p).shape();
                        let gp = Tensor::from_vec(pr, pc, g.data[start..start + pr * pc].to_vec());
                        acc(&mut grads, p, gp);
                        start += pr * pc;
                    }
                }
                Op::Col(a, c) => {
                    let shape = self.value(*a).shape();
                    let c = *c;
                    acc_with(&mut grads, *a, shape, |t| {
                        for r in 0..shape.0 {
                            t.data[r * shape.1 + c] += g.data[r];
                        }
                    });
                }
                Op::Row(a, r) => {
                    let shape = self.value(*a).shape();
                    let r = *r;
                    acc_with(&mut grads, *a, shape, |t| {
                        for (o, &x) in t.data[r * shape.1..(r + 1) * shape.1].iter_mut().zip(&g.data) {
                            *o += x;
                        }
                    });
                }
                Op::MaxRows(a) => {
                    let av = self.value(*a);
                    let mut ga = Tensor::zeros(av.rows, av.cols);
                    for c in 0..av.cols {
                        let r = (0..av.rows).find(|&r| av.get(r, c) == out.data[c]).unwrap();
                        ga.data[r * av.cols + c] = g.data[c];
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::CumSum(a) => {
                    let mut ga = g.clone();
                    let mut acc_g = 0.0;
                    for v in ga.data.iter_mut().rev() {
                        acc_g += *v;
                        *v = acc_g;
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::BudgetScale(a, budget) => {
                    let av = self.value(*a);
                    let total: f64 = av.data.iter().sum();
                    if total <= *budget {
                        acc(&mut grads, *a, g);
                    } else {
                        // d/dv [v B / S] = (B/S)(I - v 1ᵀ / S)
                        let k = budget / total;
                        let gv: f64 = g.data.iter().zip(&av.data).map(|(x, y)| x * y).sum();
                        let shift = gv / total;
                        acc(&mut grads, *a, map(&g, |x| k * (x - shift)));
                    }
                }
            }
        }
        Gradients { grads }
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to node `v`, or `None` if the loss does not
    /// depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Accumulates gradients of every parameter leaf into a flat vector laid
    /// out like `params.values`.
    pub fn flatten_params(&self, tape: &Tape, params: &ParamSet) -> Vec<f64> {
        let mut flat = vec![0.0; params.len()];
        for (i, node) in tape.nodes.iter().enumerate().take(self.grads.len()) {
            if let (Op::Param(slot), Some(g)) = (&node.op, &self.grads[i]) {
                let off = params.spec(*slot).offset;
                for (dst, &src) in flat[off..off + g.len()].iter_mut().zip(&g.data) {
                    *dst += src;
                }
            }
        }
        flat
    }
}
