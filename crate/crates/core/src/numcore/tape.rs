//! Tape-based reverse-mode differentiation over dense `f64` matrices.
//!
//! Every tensor is two-dimensional; vectors are stored as `1×n` rows.
//! A [`Tape`] records each operation as it is evaluated, and
//! [`Tape::backward`] walks the record in reverse to accumulate
//! gradients for every node that depends on a `requires_grad` leaf.
//!
//! ```
//! use connfuse::numcore::{Tape, Mat};
//! use ndarray::array;
//!
//! let tape = Tape::new();
//! let a = tape.param(array![[1.0, 2.0], [3.0, 4.0]]);
//! let b = tape.constant(array![[0.0], [1.0]]);
//! let y = a.matmul(b).unwrap().sum();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(a).unwrap(), &array![[0.0, 1.0], [0.0, 1.0]]);
//! ```

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use ndarray::{s, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TensorError;

/// Dense row-major matrix of `f64`.
pub type Mat = Array2<f64>;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const NORM_FLOOR: f64 = 1e-12;

pub(crate) enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Clamp(usize, f64, f64),
    Relu(usize),
    Gelu(usize),
    Dropout(usize, Mat),
    SoftmaxRows(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    SliceCols(usize, usize),
    ConcatCols(Vec<usize>),
    RowNormalize {
        x: usize,
        norms: Vec<f64>,
    },
    SymPairs {
        s: usize,
        edges: Rc<[(usize, usize)]>,
    },
    ScaledLaplacian {
        w: usize,
        edges: Rc<[(usize, usize)]>,
        adj: Mat,
        inv_sqrt_deg: Vec<f64>,
    },
    CrossEntropy {
        logits: usize,
        rows: Vec<(usize, usize)>,
        probs: Mat,
    },
    Sum(usize),
}

struct Node {
    value: Mat,
    op: Op,
    requires_grad: bool,
    tracked: bool,
}

/// Records evaluated operations for a single backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (r, c) = self.shape();
        write!(f, "Var#{}[{}x{}]", self.id, r, c)
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if it was tracked.
    pub fn get(&self, var: Var<'_>) -> Option<&Mat> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Like [`get`](Self::get) but returns zeros of the right shape when the
    /// node did not influence the loss.
    pub fn get_or_zeros(&self, var: Var<'_>) -> Mat {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Mat::zeros(var.shape()),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Mat, op: Op, tracked: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad: false,
            tracked,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn leaf(&self, value: Mat, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            tracked: requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Leaf whose gradient is requested.
    pub fn param(&self, value: Mat) -> Var<'_> {
        self.leaf(value, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&self, value: Mat) -> Var<'_> {
        self.leaf(value, false)
    }

    fn tracked(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].tracked)
    }

    /// Reverse pass from a `1×1` output.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients, TensorError> {
        let nodes = self.nodes.borrow();
        let shape = nodes[output.id].value.dim();
        if shape != (1, 1) {
            return Err(TensorError::Shape {
                op: "backward",
                left: shape,
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Mat>> = (0..nodes.len()).map(|_| None).collect();
        grads[output.id] = Some(Mat::ones((1, 1)));

        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            if !node.tracked {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            let val = |i: usize| &nodes[i].value;
            let mut acc = |i: usize, delta: Mat| {
                if !nodes[i].tracked {
                    return;
                }
                match &mut grads[i] {
                    Some(existing) => *existing += &delta,
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    if nodes[*a].tracked {
                        acc(*a, g.dot(&val(*b).t()));
                    }
                    if nodes[*b].tracked {
                        acc(*b, val(*a).t().dot(&g));
                    }
                }
                Op::Transpose(a) => acc(*a, g.t().to_owned()),
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, -&g);
                }
                Op::Mul(a, b) => {
                    acc(*a, &g * val(*b));
                    acc(*b, &g * val(*a));
                }
                Op::AddRow(a, row) => {
                    acc(*a, g.clone());
                    acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                Op::Scale(a, c) => acc(*a, &g * *c),
                Op::AddScalar(a) => acc(*a, g.clone()),
                Op::Clamp(a, lo, hi) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                        if x < *lo || x > *hi {
                            *d = 0.0;
                        }
                    });
                    acc(*a, d);
                }
                Op::Relu(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    acc(*a, d);
                }
                Op::Gelu(a) => {
                    let mut d = g.clone();
                    Zip::from(&mut d)
                        .and(val(*a))
                        .for_each(|d, &x| *d *= gelu_grad(x));
                    acc(*a, d);
                }
                Op::Dropout(a, mask) => acc(*a, &g * mask),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut d = &g * y;
                    for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                        let dot: f64 = drow.sum();
                        Zip::from(&mut drow).and(&yrow).for_each(|d, &y| *d -= y * dot);
                    }
                    acc(*a, d);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let n = xhat.ncols() as f64;
                    if nodes[*gain].tracked {
                        acc(*gain, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if nodes[*bias].tracked {
                        acc(*bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if nodes[*x].tracked {
                        let gain_row = val(*gain).row(0).to_owned();
                        let mut dx = &g * &gain_row;
                        for ((mut drow, xrow), &inv) in
                            dx.rows_mut().into_iter().zip(xhat.rows()).zip(inv_std)
                        {
                            let sum_d: f64 = drow.sum();
                            let sum_dx: f64 = drow.iter().zip(xrow.iter()).map(|(a, b)| a * b).sum();
                            Zip::from(&mut drow).and(&xrow).for_each(|d, &xh| {
                                *d = inv / n * (n * *d - sum_d - xh * sum_dx);
                            });
                        }
                        acc(*x, dx);
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut d = Mat::zeros(val(*a).dim());
                    let w = g.ncols();
                    d.slice_mut(s![.., *start..*start + w]).assign(&g);
                    acc(*a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = val(p).ncols();
                        acc(p, g.slice(s![.., offset..offset + w]).to_owned());
                        offset += w;
                    }
                }
                Op::RowNormalize { x, norms } => {
                    let y = &node.value;
                    let mut d = g.clone();
                    for ((mut drow, yrow), &norm) in
                        d.rows_mut().into_iter().zip(y.rows()).zip(norms)
                    {
                        if norm <= NORM_FLOOR {
                            // clamped region: y = x / floor, linear in x
                            drow.mapv_inplace(|v| v / NORM_FLOOR);
                            continue;
                        }
                        let dot: f64 = drow.iter().zip(yrow.iter()).map(|(a, b)| a * b).sum();
                        Zip::from(&mut drow)
                            .and(&yrow)
                            .for_each(|d, &y| *d = (*d - y * dot) / norm);
                    }
                    acc(*x, d);
                }
                Op::SymPairs { s, edges } => {
                    let mut d = Mat::zeros(val(*s).dim());
                    for (e, &(i, j)) in edges.iter().enumerate() {
                        let ge = 0.5 * g[[0, e]];
                        d[[i, j]] += ge;
                        d[[j, i]] += ge;
                    }
                    acc(*s, d);
                }
                Op::ScaledLaplacian {
                    w,
                    edges,
                    adj,
                    inv_sqrt_deg,
                } => {
                    let n = adj.nrows();
                    // out_ij = -s_i a_ij s_j, d_i = sum_j a_ij, s = d^{-1/2}
                    let mut d_adj = Mat::zeros((n, n));
                    let mut d_s = vec![0.0; n];
                    for i in 0..n {
                        let si = inv_sqrt_deg[i];
                        for j in 0..n {
                            let a = adj[[i, j]];
                            let gij = g[[i, j]];
                            let sj = inv_sqrt_deg[j];
                            d_adj[[i, j]] = -gij * si * sj;
                            d_s[i] -= gij * a * sj;
                            d_s[j] -= gij * a * si;
                        }
                    }
                    for i in 0..n {
                        let si = inv_sqrt_deg[i];
                        // ds/dd = -1/2 d^{-3/2}
                        let d_deg = d_s[i] * (-0.5 * si * si * si);
                        d_adj.row_mut(i).mapv_inplace(|v| v + d_deg);
                    }
                    let mut dw = Mat::zeros((1, edges.len()));
                    for (e, &(i, j)) in edges.iter().enumerate() {
                        dw[[0, e]] = d_adj[[i, j]] + d_adj[[j, i]];
                    }
                    acc(*w, dw);
                }
                Op::CrossEntropy {
                    logits,
                    rows,
                    probs,
                } => {
                    let scale = g[[0, 0]] / rows.len() as f64;
                    let mut d = Mat::zeros(probs.dim());
                    for &(i, label) in rows {
                        for c in 0..probs.ncols() {
                            let target = if c == label { 1.0 } else { 0.0 };
                            d[[i, c]] = scale * (probs[[i, c]] - target);
                        }
                    }
                    acc(*logits, d);
                }
                Op::Sum(a) => {
                    let dim = val(*a).dim();
                    acc(*a, Mat::from_elem(dim, g[[0, 0]]));
                }
            }
        }
        drop(nodes);
        let nodes = self.nodes.borrow();
        // only leaves requesting gradients keep them
        for (i, node) in nodes.iter().enumerate() {
            if !(matches!(node.op, Op::Leaf) && node.requires_grad) && i != output.id {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu_scalar(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

fn gelu_grad(x: f64) -> f64 {
    std_normal_cdf(x) + x * std_normal_pdf(x)
}

fn same_shape(op: &'static str, a: &Mat, b: &Mat) -> Result<(), TensorError> {
    if a.dim() == b.dim() {
        Ok(())
    } else {
        Err(TensorError::Shape {
            op,
            left: a.dim(),
            right: b.dim(),
        })
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows_values(x: &Mat) -> Mat {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Borrow of the forward value.
    pub fn value(&self) -> Ref<'t, Mat> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.dim()
    }

    /// Scalar value of a `1×1` node.
    pub fn item(&self) -> f64 {
        self.value()[[0, 0]]
    }

    fn unary(self, value: Mat, op: Op) -> Var<'t> {
        let tracked = self.tape.tracked(&[self.id]);
        self.tape.push(value, op, tracked)
    }

    fn binary(self, other: Var<'t>, value: Mat, op: Op) -> Var<'t> {
        let tracked = self.tape.tracked(&[self.id, other.id]);
        self.tape.push(value, op, tracked)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let value = {
            let a = self.value();
            let b = other.value();
            if a.ncols() != b.nrows() {
                return Err(TensorError::Shape {
                    op: "matmul",
                    left: a.dim(),
                    right: b.dim(),
                });
            }
            a.dot(&*b)
        };
        Ok(self.binary(other, value, Op::MatMul(self.id, other.id)))
    }

    pub fn t(self) -> Var<'t> {
        let value = self.value().t().to_owned();
        self.unary(value, Op::Transpose(self.id))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let value = {
            let (a, b) = (self.value(), other.value());
            same_shape("add", &a, &b)?;
            &*a + &*b
        };
        Ok(self.binary(other, value, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let value = {
            let (a, b) = (self.value(), other.value());
            same_shape("sub", &a, &b)?;
            &*a - &*b
        };
        Ok(self.binary(other, value, Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, TensorError> {
        let value = {
            let (a, b) = (self.value(), other.value());
            same_shape("mul", &a, &b)?;
            &*a * &*b
        };
        Ok(self.binary(other, value, Op::Mul(self.id, other.id)))
    }

    /// Adds a `1×n` row to every row.
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>, TensorError> {
        let value = {
            let (a, r) = (self.value(), row.value());
            if r.nrows() != 1 || r.ncols() != a.ncols() {
                return Err(TensorError::Shape {
                    op: "add_row",
                    left: a.dim(),
                    right: r.dim(),
                });
            }
            &*a + &r.row(0)
        };
        Ok(self.binary(row, value, Op::AddRow(self.id, row.id)))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let value = &*self.value() * c;
        self.unary(value, Op::Scale(self.id, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        let value = &*self.value() + c;
        self.unary(value, Op::AddScalar(self.id))
    }

    /// Elementwise clamp to `[lo, hi]`; gradient is zero where clamped.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        let value = self.value().mapv(|v| v.clamp(lo, hi));
        self.unary(value, Op::Clamp(self.id, lo, hi))
    }

    pub fn relu(self) -> Var<'t> {
        let value = self.value().mapv(|v| v.max(0.0));
        self.unary(value, Op::Relu(self.id))
    }

    pub fn gelu(self) -> Var<'t> {
        let value = self.value().mapv(gelu_scalar);
        self.unary(value, Op::Gelu(self.id))
    }

    /// Inverted dropout. Identity when `training` is false or `rate` is 0.
    pub fn dropout(self, rate: f64, training: bool, seed: u64) -> Result<Var<'t>, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Param(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(self);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = Mat::from_shape_simple_fn(self.shape(), || {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep_scale
            }
        });
        let value = &*self.value() * &mask;
        Ok(self.unary(value, Op::Dropout(self.id, mask)))
    }

    pub fn softmax_rows(self) -> Var<'t> {
        let value = softmax_rows_values(&self.value());
        self.unary(value, Op::SoftmaxRows(self.id))
    }

    /// Row-wise layer normalization with affine `gain` and `bias` (`1×n` each).
    pub fn layer_norm(self, gain: Var<'t>, bias: Var<'t>) -> Result<Var<'t>, TensorError> {
        let (value, xhat, inv_std) = {
            let x = self.value();
            let (gv, bv) = (gain.value(), bias.value());
            let n = x.ncols();
            if n < 2 {
                return Err(TensorError::Param(
                    "layer_norm requires at least two features".into(),
                ));
            }
            if gv.dim() != (1, n) || bv.dim() != (1, n) {
                return Err(TensorError::Shape {
                    op: "layer_norm",
                    left: x.dim(),
                    right: gv.dim(),
                });
            }
            let mut xhat = x.clone();
            let mut inv_std = Vec::with_capacity(x.nrows());
            for mut row in xhat.rows_mut() {
                let mean = row.sum() / n as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                row.mapv_inplace(|v| (v - mean) * inv);
                inv_std.push(inv);
            }
            let value = &(&xhat * &gv.row(0)) + &bv.row(0);
            (value, xhat, inv_std)
        };
        let tracked = self.tape.tracked(&[self.id, gain.id, bias.id]);
        Ok(self.tape.push(
            value,
            Op::LayerNorm {
                x: self.id,
                gain: gain.id,
                bias: bias.id,
                xhat,
                inv_std,
            },
            tracked,
        ))
    }

    /// Columns `start..end`.
    pub fn slice_cols(self, start: usize, end: usize) -> Result<Var<'t>, TensorError> {
        let value = {
            let x = self.value();
            if start > end || end > x.ncols() {
                return Err(TensorError::Shape {
                    op: "slice_cols",
                    left: x.dim(),
                    right: (start, end),
                });
            }
            x.slice(s![.., start..end]).to_owned()
        };
        Ok(self.unary(value, Op::SliceCols(self.id, start)))
    }

    /// `x / max(‖x‖, 1e-12)` for each row.
    pub fn row_normalize(self) -> Var<'t> {
        let (value, norms) = {
            let x = self.value();
            let mut out = x.clone();
            let mut norms = Vec::with_capacity(x.nrows());
            for mut row in out.rows_mut() {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                let denom = norm.max(NORM_FLOOR);
                row.mapv_inplace(|v| v / denom);
                norms.push(norm);
            }
            (out, norms)
        };
        self.unary(
            value,
            Op::RowNormalize {
                x: self.id,
                norms,
            },
        )
    }

    /// `1×E` row holding `(S_ij + S_ji)/2` for each listed pair.
    pub fn sym_pairs(self, edges: Rc<[(usize, usize)]>) -> Result<Var<'t>, TensorError> {
        let value = {
            let s = self.value();
            let n = s.nrows();
            if s.ncols() != n || edges.iter().any(|&(i, j)| i >= n || j >= n) {
                return Err(TensorError::Shape {
                    op: "sym_pairs",
                    left: s.dim(),
                    right: (edges.len(), n),
                });
            }
            let mut out = Mat::zeros((1, edges.len()));
            for (e, &(i, j)) in edges.iter().enumerate() {
                out[[0, e]] = 0.5 * (s[[i, j]] + s[[j, i]]);
            }
            out
        };
        Ok(self.unary(value, Op::SymPairs { s: self.id, edges }))
    }

    /// Rescaled normalized Laplacian `-D^{-1/2}(W + I)D^{-1/2}` for an
    /// undirected graph on `n` nodes whose edge weights are this `1×E` row.
    pub fn scaled_laplacian(
        self,
        n: usize,
        edges: Rc<[(usize, usize)]>,
    ) -> Result<Var<'t>, TensorError> {
        let (value, adj, inv_sqrt_deg) = {
            let w = self.value();
            if w.dim() != (1, edges.len()) || edges.iter().any(|&(i, j)| i >= n || j >= n) {
                return Err(TensorError::Shape {
                    op: "scaled_laplacian",
                    left: w.dim(),
                    right: (1, edges.len()),
                });
            }
            let mut adj = Mat::eye(n);
            for (e, &(i, j)) in edges.iter().enumerate() {
                adj[[i, j]] += w[[0, e]];
                adj[[j, i]] += w[[0, e]];
            }
            let deg: Vec<f64> = adj.rows().into_iter().map(|r| r.sum()).collect();
            let inv_sqrt_deg: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
            let mut out = Mat::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    out[[i, j]] = -adj[[i, j]] / (deg[i] * deg[j]).sqrt();
                }
            }
            (out, adj, inv_sqrt_deg)
        };
        Ok(self.unary(
            value,
            Op::ScaledLaplacian {
                w: self.id,
                edges,
                adj,
                inv_sqrt_deg,
            },
        ))
    }

    /// Mean softmax cross-entropy over the `(row, label)` pairs.
    pub fn cross_entropy(self, rows: &[(usize, usize)]) -> Result<Var<'t>, TensorError> {
        if rows.is_empty() {
            return Err(TensorError::Param(
                "cross_entropy requires at least one labeled row".into(),
            ));
        }
        let (value, probs) = {
            let z = self.value();
            if let Some(&(i, c)) = rows.iter().find(|&&(i, c)| i >= z.nrows() || c >= z.ncols()) {
                return Err(TensorError::Shape {
                    op: "cross_entropy",
                    left: z.dim(),
                    right: (i, c),
                });
            }
            let probs = softmax_rows_values(&z);
            let mut total = 0.0;
            for &(i, c) in rows {
                let row = z.row(i);
                let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total += lse - z[[i, c]];
            }
            (Mat::from_elem((1, 1), total / rows.len() as f64), probs)
        };
        Ok(self.unary(
            value,
            Op::CrossEntropy {
                logits: self.id,
                rows: rows.to_vec(),
                probs,
            },
        ))
    }

    pub fn sum(self) -> Var<'t> {
        let value = Mat::from_elem((1, 1), self.value().sum());
        self.unary(value, Op::Sum(self.id))
    }
}

/// Concatenates along the column axis.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
    let first = parts
        .first()
        .ok_or_else(|| TensorError::Param("concat_cols of zero tensors".into()))?;
    let tape = first.tape;
    let value = {
        let views: Vec<Ref<'_, Mat>> = parts.iter().map(|p| p.value()).collect();
        let rows = views[0].nrows();
        if let Some(bad) = views.iter().find(|v| v.nrows() != rows) {
            return Err(TensorError::Shape {
                op: "concat_cols",
                left: views[0].dim(),
                right: bad.dim(),
            });
        }
        let v: Vec<_> = views.iter().map(|m| m.view()).collect();
        ndarray::concatenate(Axis(1), &v).expect("row counts checked")
    };
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let tracked = tape.tracked(&ids);
    Ok(tape.push(value, Op::ConcatCols(ids), tracked))
}
