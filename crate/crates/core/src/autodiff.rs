//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! Every operation records its output value and a backward closure on the
//! [`Tape`]. [`Tape::backward`] walks the tape in reverse and accumulates
//! gradients for every node that (transitively) depends on a leaf created
//! with `requires_grad = true`. Parameter tensors are borrowed, not copied.

use alloc::borrow::Cow;
use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::linalg;
use crate::sparse::sparsemax_threshold;
use crate::tensor::Tensor;
use crate::transforms::{phase_of, DctPlan, DftPlan};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Read-only view of recorded node values, handed to backward closures.
pub struct Values<'a, 'p>(&'a [Cow<'p, Tensor>]);

impl Values<'_, '_> {
    #[inline]
    pub fn get(&self, v: Var) -> &Tensor {
        &self.0[v.0]
    }
}

/// Gradient accumulators, indexed by node.
pub struct Grads {
    slots: Vec<Option<Vec<f64>>>,
    requires: Vec<bool>,
    lens: Vec<usize>,
}

impl Grads {
    /// Mutable gradient buffer for `v`, allocated on first use. `None` when
    /// `v` does not need a gradient.
    #[inline]
    pub fn slot(&mut self, v: Var) -> Option<&mut [f64]> {
        if !self.requires[v.0] {
            return None;
        }
        let len = self.lens[v.0];
        Some(self.slots[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    pub fn add(&mut self, v: Var, g: &[f64]) {
        if let Some(slot) = self.slot(v) {
            for (s, x) in slot.iter_mut().zip(g) {
                *s += x;
            }
        }
    }
}

type BackwardFn<'p> = Box<dyn Fn(&Values<'_, 'p>, &[f64], &mut Grads) + 'p>;

#[derive(Default)]
struct Nodes<'p> {
    values: Vec<Cow<'p, Tensor>>,
    requires: Vec<bool>,
    backward: Vec<Option<BackwardFn<'p>>>,
}

/// Recording of one forward evaluation.
#[derive(Default)]
pub struct Tape<'p> {
    nodes: RefCell<Nodes<'p>>,
    grads: RefCell<Option<Grads>>,
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Cow<'p, Tensor>, requires: bool, backward: Option<BackwardFn<'p>>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.values.len();
        nodes.values.push(value);
        nodes.requires.push(requires);
        nodes.backward.push(if requires { backward } else { None });
        Var(id)
    }

    /// Leaf that owns its value.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Cow::Owned(value), requires_grad, None)
    }

    /// Leaf that borrows its value (parameters).
    pub fn leaf_ref(&self, value: &'p Tensor, requires_grad: bool) -> Var {
        self.push(Cow::Borrowed(value), requires_grad, None)
    }

    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow().requires[v.0]
    }

    /// Clone of a node's value.
    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow().values[v.0].clone().into_owned()
    }

    pub fn with_value<R>(&self, v: Var, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow().values[v.0])
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow().values[v.0].shape().to_vec()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes.borrow().values[v.0].data()[0]
    }

    /// Records an operation whose output is `value`; `backward` is only kept
    /// when some input requires a gradient.
    pub fn op(
        &self,
        inputs: &[Var],
        value: Tensor,
        backward: impl Fn(&Values<'_, 'p>, &[f64], &mut Grads) + 'p,
    ) -> Var {
        let requires = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| nodes.requires[v.0])
        };
        self.push(Cow::Owned(value), requires, Some(Box::new(backward)))
    }

    /// Reverse sweep from the scalar `output`, seeded with gradient 1.
    /// Previous gradients are discarded.
    pub fn backward(&self, output: Var) {
        let nodes = self.nodes.borrow();
        let n = nodes.values.len();
        let mut grads = Grads {
            slots: (0..n).map(|_| None).collect(),
            requires: nodes.requires.clone(),
            lens: nodes.values.iter().map(|v| v.len()).collect(),
        };
        if nodes.requires[output.0] {
            grads.slots[output.0] = Some(vec![1.0; nodes.values[output.0].len()]);
        }
        let values = Values(&nodes.values);
        for i in (0..=output.0).rev() {
            let Some(f) = nodes.backward[i].as_ref() else {
                continue;
            };
            let Some(g) = grads.slots[i].take() else {
                continue;
            };
            f(&values, &g, &mut grads);
            grads.slots[i] = Some(g);
        }
        *self.grads.borrow_mut() = Some(grads);
    }

    /// Gradient of the last [`Tape::backward`] output with respect to `v`;
    /// zeros when `v` did not influence it.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        let grads = self.grads.borrow();
        let len = self.nodes.borrow().values[v.0].len();
        grads
            .as_ref()
            .and_then(|g| g.slots[v.0].clone())
            .unwrap_or_else(|| vec![0.0; len])
    }

    fn unary(&self, x: Var, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'p) -> Var {
        let (value, shape) = self.with_value(x, |t| {
            (t.data().iter().map(|&v| f(v)).collect::<Vec<_>>(), t.shape().to_vec())
        });
        let out_id = self.len();
        let value = Tensor::from_vec(&shape, value).expect("unary shape");
        self.op(&[x], value, move |vals, g, grads| {
            let xs = vals.get(x).data();
            let ys = vals.get(Var(out_id)).data();
            if let Some(gx) = grads.slot(x) {
                for i in 0..g.len() {
                    gx[i] += g[i] * df(xs[i], ys[i]);
                }
            }
        })
    }

    fn binary(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let nodes = self.nodes.borrow();
        let (ta, tb) = (&nodes.values[a.0], &nodes.values[b.0]);
        assert_eq!(ta.len(), tb.len(), "elementwise op on {:?} and {:?}", ta.shape(), tb.shape());
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(ta.shape(), data).expect("binary shape")
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let value = self.binary(a, b, |x, y| x + y);
        self.op(&[a, b], value, move |_, g, grads| {
            grads.add(a, g);
            grads.add(b, g);
        })
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let value = self.binary(a, b, |x, y| x - y);
        self.op(&[a, b], value, move |_, g, grads| {
            grads.add(a, g);
            if let Some(gb) = grads.slot(b) {
                for (s, x) in gb.iter_mut().zip(g) {
                    *s -= x;
                }
            }
        })
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let value = self.binary(a, b, |x, y| x * y);
        self.op(&[a, b], value, move |vals, g, grads| {
            if let Some(ga) = grads.slot(a) {
                let bv = vals.get(b).data();
                for i in 0..g.len() {
                    ga[i] += g[i] * bv[i];
                }
            }
            if let Some(gb) = grads.slot(b) {
                let av = vals.get(a).data();
                for i in 0..g.len() {
                    gb[i] += g[i] * av[i];
                }
            }
        })
    }

    pub fn scale(&self, x: Var, c: f64) -> Var {
        self.unary(x, move |v| v * c, move |_, _| c)
    }

    pub fn add_scalar(&self, x: Var, c: f64) -> Var {
        self.unary(x, move |v| v + c, |_, _| 1.0)
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.unary(x, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn relu(&self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), |v, _| if v > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn square(&self, x: Var) -> Var {
        self.unary(x, |v| v * v, |v, _| 2.0 * v)
    }

    pub fn silu(&self, x: Var) -> Var {
        self.unary(
            x,
            |v| v * sigmoid(v),
            |v, _| {
                let s = sigmoid(v);
                s * (1.0 + v * (1.0 - s))
            },
        )
    }

    pub fn cos(&self, x: Var) -> Var {
        self.unary(x, libm::cos, |v, _| -libm::sin(v))
    }

    pub fn sin(&self, x: Var) -> Var {
        self.unary(x, libm::sin, |v, _| libm::cos(v))
    }

    /// Multiplies every element by the single-element tensor `s`.
    pub fn mul_scalar(&self, x: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let value = self.with_value(x, |t| {
            let data = t.data().iter().map(|&v| v * sv).collect();
            Tensor::from_vec(t.shape(), data).expect("shape")
        });
        self.op(&[x, s], value, move |vals, g, grads| {
            if let Some(gx) = grads.slot(x) {
                for i in 0..g.len() {
                    gx[i] += g[i] * sv;
                }
            }
            if let Some(gs) = grads.slot(s) {
                let xv = vals.get(x).data();
                gs[0] += g.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
            }
        })
    }

    /// `x - s` for a single-element `s`.
    pub fn sub_scalar_var(&self, x: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let value = self.with_value(x, |t| {
            let data = t.data().iter().map(|&v| v - sv).collect();
            Tensor::from_vec(t.shape(), data).expect("shape")
        });
        self.op(&[x, s], value, move |_, g, grads| {
            grads.add(x, g);
            if let Some(gs) = grads.slot(s) {
                gs[0] -= g.iter().sum::<f64>();
            }
        })
    }

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Var {
        let value = self.value(x).reshaped(shape).expect("reshape");
        self.op(&[x], value, move |_, g, grads| grads.add(x, g))
    }

    fn rows_cols(&self, x: Var) -> (usize, usize) {
        self.with_value(x, |t| {
            let m = t.shape()[0];
            (m, t.len() / m.max(1))
        })
    }

    /// `out[i, j] = x[i, j] * v[i]`, treating `x` as `rows × rest`.
    pub fn mul_rows(&self, x: Var, v: Var) -> Var {
        let (m, n) = self.rows_cols(x);
        let value = {
            let nodes = self.nodes.borrow();
            let (xt, vt) = (&nodes.values[x.0], &nodes.values[v.0]);
            assert_eq!(vt.len(), m, "mul_rows: vector length");
            let mut out = xt.as_ref().clone();
            for (i, row) in out.data_mut().chunks_mut(n).enumerate() {
                let s = vt.data()[i];
                row.iter_mut().for_each(|e| *e *= s);
            }
            out
        };
        self.op(&[x, v], value, move |vals, g, grads| {
            if let Some(gx) = grads.slot(x) {
                let vv = vals.get(v).data();
                for i in 0..m {
                    for j in 0..n {
                        gx[i * n + j] += g[i * n + j] * vv[i];
                    }
                }
            }
            if let Some(gv) = grads.slot(v) {
                let xv = vals.get(x).data();
                for i in 0..m {
                    gv[i] += (0..n).map(|j| g[i * n + j] * xv[i * n + j]).sum::<f64>();
                }
            }
        })
    }

    /// `out[i, j] = x[i, j] * v[j]`, treating `x` as `rows × rest`.
    pub fn mul_cols(&self, x: Var, v: Var) -> Var {
        let (m, n) = self.rows_cols(x);
        let value = {
            let nodes = self.nodes.borrow();
            let (xt, vt) = (&nodes.values[x.0], &nodes.values[v.0]);
            assert_eq!(vt.len(), n, "mul_cols: vector length");
            let mut out = xt.as_ref().clone();
            for row in out.data_mut().chunks_mut(n) {
                row.iter_mut().zip(vt.data()).for_each(|(e, s)| *e *= s);
            }
            out
        };
        self.op(&[x, v], value, move |vals, g, grads| {
            if let Some(gx) = grads.slot(x) {
                let vv = vals.get(v).data();
                for i in 0..m {
                    for j in 0..n {
                        gx[i * n + j] += g[i * n + j] * vv[j];
                    }
                }
            }
            if let Some(gv) = grads.slot(v) {
                let xv = vals.get(x).data();
                for i in 0..m {
                    for j in 0..n {
                        gv[j] += g[i * n + j] * xv[i * n + j];
                    }
                }
            }
        })
    }

    /// `out[i, j] = x[i, j] + v[i]`.
    pub fn add_rows(&self, x: Var, v: Var) -> Var {
        let (m, n) = self.rows_cols(x);
        let value = {
            let nodes = self.nodes.borrow();
            let (xt, vt) = (&nodes.values[x.0], &nodes.values[v.0]);
            assert_eq!(vt.len(), m, "add_rows: vector length");
            let mut out = xt.as_ref().clone();
            for (i, row) in out.data_mut().chunks_mut(n).enumerate() {
                let s = vt.data()[i];
                row.iter_mut().for_each(|e| *e += s);
            }
            out
        };
        self.op(&[x, v], value, move |_, g, grads| {
            grads.add(x, g);
            if let Some(gv) = grads.slot(v) {
                for i in 0..m {
                    gv[i] += g[i * n..(i + 1) * n].iter().sum::<f64>();
                }
            }
        })
    }

    /// `out[i, j] = x[i, j] + v[j]`.
    pub fn add_cols(&self, x: Var, v: Var) -> Var {
        let (m, n) = self.rows_cols(x);
        let value = {
            let nodes = self.nodes.borrow();
            let (xt, vt) = (&nodes.values[x.0], &nodes.values[v.0]);
            assert_eq!(vt.len(), n, "add_cols: vector length");
            let mut out = xt.as_ref().clone();
            for row in out.data_mut().chunks_mut(n) {
                row.iter_mut().zip(vt.data()).for_each(|(e, s)| *e += s);
            }
            out
        };
        self.op(&[x, v], value, move |_, g, grads| {
            grads.add(x, g);
            if let Some(gv) = grads.slot(v) {
                for i in 0..m {
                    for j in 0..n {
                        gv[j] += g[i * n + j];
                    }
                }
            }
        })
    }

    /// `out[i, j] = u[i] * v[j]`.
    pub fn outer(&self, u: Var, v: Var) -> Var {
        let (ud, vd) = (self.value(u).into_data(), self.value(v).into_data());
        let (m, n) = (ud.len(), vd.len());
        let mut data = Vec::with_capacity(m * n);
        for &a in &ud {
            data.extend(vd.iter().map(|&b| a * b));
        }
        let value = Tensor::from_vec(&[m, n], data).expect("outer");
        self.op(&[u, v], value, move |vals, g, grads| {
            if let Some(gu) = grads.slot(u) {
                let vv = vals.get(v).data();
                for i in 0..m {
                    gu[i] += (0..n).map(|j| g[i * n + j] * vv[j]).sum::<f64>();
                }
            }
            if let Some(gv) = grads.slot(v) {
                let uv = vals.get(u).data();
                for i in 0..m {
                    for j in 0..n {
                        gv[j] += g[i * n + j] * uv[i];
                    }
                }
            }
        })
    }

    /// Mean over each row: `[m, ...] -> [m]`.
    pub fn row_means(&self, x: Var) -> Var {
        let (m, n) = self.rows_cols(x);
        let value = self.with_value(x, |t| {
            let data = t.data().chunks(n).map(|r| r.iter().sum::<f64>() / n as f64).collect();
            Tensor::from_vec(&[m], data).expect("row_means")
        });
        self.op(&[x], value, move |_, g, grads| {
            if let Some(gx) = grads.slot(x) {
                for i in 0..m {
                    let gi = g[i] / n as f64;
                    gx[i * n..(i + 1) * n].iter_mut().for_each(|e| *e += gi);
                }
            }
        })
    }

    /// Mean over rows for each column: `[m, n] -> [n]`.
    pub fn col_means(&self, x: Var) -> Var {
        let (m, n) = self.rows_cols(x);
        let value = self.with_value(x, |t| {
            let mut data = vec![0.0; n];
            for row in t.data().chunks(n) {
                data.iter_mut().zip(row).for_each(|(d, v)| *d += v);
            }
            data.iter_mut().for_each(|d| *d /= m as f64);
            Tensor::from_vec(&[n], data).expect("col_means")
        });
        self.op(&[x], value, move |_, g, grads| {
            if let Some(gx) = grads.slot(x) {
                for i in 0..m {
                    for j in 0..n {
                        gx[i * n + j] += g[j] / m as f64;
                    }
                }
            }
        })
    }

    /// Max over rows for each column: `[m, n] -> [n]`; ties go to the lowest row.
    pub fn col_max(&self, x: Var) -> Var {
        let (m, n) = self.rows_cols(x);
        let (value, arg) = self.with_value(x, |t| {
            let d = t.data();
            let mut best = d[..n].to_vec();
            let mut arg = vec![0usize; n];
            for i in 1..m {
                for j in 0..n {
                    if d[i * n + j] > best[j] {
                        best[j] = d[i * n + j];
                        arg[j] = i;
                    }
                }
            }
            (Tensor::from_vec(&[n], best).expect("col_max"), arg)
        });
        self.op(&[x], value, move |_, g, grads| {
            if let Some(gx) = grads.slot(x) {
                for j in 0..n {
                    gx[arg[j] * n + j] += g[j];
                }
            }
        })
    }

    /// Column `j` of a `[m, n]` tensor: `-> [m]`.
    pub fn column(&self, x: Var, j: usize) -> Var {
        let (m, n) = self.rows_cols(x);
        let value = self.with_value(x, |t| {
            let data = (0..m).map(|i| t.data()[i * n + j]).collect();
            Tensor::from_vec(&[m], data).expect("column")
        });
        self.op(&[x], value, move |_, g, grads| {
            if let Some(gx) = grads.slot(x) {
                for i in 0..m {
                    gx[i * n + j] += g[i];
                }
            }
        })
    }

    pub fn sum(&self, x: Var) -> Var {
        let value = self.with_value(x, |t| Tensor::scalar(t.data().iter().sum()));
        self.op(&[x], value, move |_, g, grads| {
            if let Some(gx) = grads.slot(x) {
                gx.iter_mut().for_each(|e| *e += g[0]);
            }
        })
    }

    /// Stacks tensors along the leading axis; trailing shapes must agree.
    pub fn concat(&self, parts: &[Var]) -> Var {
        let (value, lens) = {
            let nodes = self.nodes.borrow();
            let first = nodes.values[parts[0].0].shape();
            let rest = first[1..].to_vec();
            let mut rows = 0;
            let mut data = Vec::new();
            let mut lens = Vec::new();
            for p in parts {
                let t = &nodes.values[p.0];
                assert_eq!(&t.shape()[1..], &rest[..], "concat: trailing shapes differ");
                rows += t.shape()[0];
                data.extend_from_slice(t.data());
                lens.push(t.len());
            }
            let mut shape = vec![rows];
            shape.extend_from_slice(&rest);
            (Tensor::from_vec(&shape, data).expect("concat"), lens)
        };
        let parts_owned = parts.to_vec();
        self.op(parts, value, move |_, g, grads| {
            let mut off = 0;
            for (p, &len) in parts_owned.iter().zip(&lens) {
                grads.add(*p, &g[off..off + len]);
                off += len;
            }
        })
    }

    /// Rows `start..start + count` along the leading axis.
    pub fn slice_rows(&self, x: Var, start: usize, count: usize) -> Var {
        let (value, row_len) = self.with_value(x, |t| {
            let row_len = t.len() / t.shape()[0];
            let mut shape = t.shape().to_vec();
            shape[0] = count;
            let data = t.data()[start * row_len..(start + count) * row_len].to_vec();
            (Tensor::from_vec(&shape, data).expect("slice_rows"), row_len)
        });
        self.op(&[x], value, move |_, g, grads| {
            if let Some(gx) = grads.slot(x) {
                let off = start * row_len;
                for (i, v) in g.iter().enumerate() {
                    gx[off + i] += v;
                }
            }
        })
    }

    pub fn transpose(&self, x: Var) -> Var {
        let (m, n) = self.rows_cols(x);
        let value = self.with_value(x, |t| {
            let mut out = vec![0.0; m * n];
            linalg::transpose(t.data(), m, n, &mut out);
            Tensor::from_vec(&[n, m], out).expect("transpose")
        });
        self.op(&[x], value, move |_, g, grads| {
            if let Some(gx) = grads.slot(x) {
                for i in 0..m {
                    for j in 0..n {
                        gx[i * n + j] += g[j * m + i];
                    }
                }
            }
        })
    }

    /// `[m, k] · [k, n]`.
    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let (m, k) = self.rows_cols(a);
        let (k2, n) = self.rows_cols(b);
        assert_eq!(k, k2, "matmul: inner dimensions");
        let value = {
            let nodes = self.nodes.borrow();
            let mut out = vec![0.0; m * n];
            linalg::gemm_nn(m, k, n, nodes.values[a.0].data(), nodes.values[b.0].data(), &mut out);
            Tensor::from_vec(&[m, n], out).expect("matmul")
        };
        self.op(&[a, b], value, move |vals, g, grads| {
            if let Some(ga) = grads.slot(a) {
                linalg::gemm_nt(m, n, k, g, vals.get(b).data(), ga);
            }
            if let Some(gb) = grads.slot(b) {
                linalg::gemm_tn(k, m, n, vals.get(a).data(), g, gb);
            }
        })
    }

    /// `[m, k] · [n, k]ᵀ`.
    pub fn matmul_nt(&self, a: Var, b: Var) -> Var {
        let (m, k) = self.rows_cols(a);
        let (n, k2) = self.rows_cols(b);
        assert_eq!(k, k2, "matmul_nt: inner dimensions");
        let value = {
            let nodes = self.nodes.borrow();
            let mut out = vec![0.0; m * n];
            linalg::gemm_nt(m, k, n, nodes.values[a.0].data(), nodes.values[b.0].data(), &mut out);
            Tensor::from_vec(&[m, n], out).expect("matmul_nt")
        };
        self.op(&[a, b], value, move |vals, g, grads| {
            if let Some(ga) = grads.slot(a) {
                linalg::gemm_nn(m, n, k, g, vals.get(b).data(), ga);
            }
            if let Some(gb) = grads.slot(b) {
                linalg::gemm_tn(n, m, k, g, vals.get(a).data(), gb);
            }
        })
    }

    /// Row-wise affine map `x · Wᵀ + b` for `x: [m, in]`, `W: [out, in]`.
    pub fn linear(&self, x: Var, weight: Var, bias: Var) -> Var {
        let y = self.matmul_nt(x, weight);
        self.add_cols(y, bias)
    }

    /// Zero-padded "same" 2-D convolution of `x: [ci, h, w]` with
    /// `weight: [co, ci, kh, kw]` (odd kernel sides) and `bias: [co]`.
    pub fn conv2d(&self, x: Var, weight: Var, bias: Var) -> Var {
        let xs = self.shape(x);
        let ws = self.shape(weight);
        let (ci, h, w) = (xs[0], xs[1], xs[2]);
        let (co, kh, kw) = (ws[0], ws[2], ws[3]);
        assert_eq!(ws[1], ci, "conv2d: input channels");
        let geom = linalg::ConvGeometry { channels: ci, height: h, width: w, kh, kw };
        let cols = self.with_value(x, |t| geom.im2col(t.data()));
        let kdim = ci * kh * kw;
        let p = h * w;
        let value = {
            let nodes = self.nodes.borrow();
            let mut out = vec![0.0; co * p];
            linalg::gemm_nn(co, kdim, p, nodes.values[weight.0].data(), &cols, &mut out);
            let bv = nodes.values[bias.0].data();
            for (o, row) in out.chunks_mut(p).enumerate() {
                row.iter_mut().for_each(|e| *e += bv[o]);
            }
            Tensor::from_vec(&[co, h, w], out).expect("conv2d")
        };
        self.op(&[x, weight, bias], value, move |vals, g, grads| {
            if let Some(gw) = grads.slot(weight) {
                linalg::gemm_nt(co, p, kdim, g, &cols, gw);
            }
            if let Some(gb) = grads.slot(bias) {
                for o in 0..co {
                    gb[o] += g[o * p..(o + 1) * p].iter().sum::<f64>();
                }
            }
            if grads.requires[x.0] {
                let mut gcols = vec![0.0; kdim * p];
                linalg::gemm_tn(kdim, co, p, vals.get(weight).data(), g, &mut gcols);
                let gx = grads.slot(x).expect("requires");
                geom.col2im(&gcols, gx);
            }
        })
    }

    /// Depthwise "same" convolution with channel multiplier `mult`:
    /// `weight: [mult, c, k, k]`, `bias: [mult, c]`, output `[mult·c, h, w]`
    /// where output channel `j·c + ch` filters input channel `ch`.
    pub fn depthwise_conv2d(&self, x: Var, weight: Var, bias: Var) -> Var {
        let xs = self.shape(x);
        let ws = self.shape(weight);
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let (mult, kh, kw) = (ws[0], ws[2], ws[3]);
        assert_eq!(ws[1], c, "depthwise_conv2d: channels");
        let p = h * w;
        let (ph, pw) = (kh / 2, kw / 2);
        let value = {
            let nodes = self.nodes.borrow();
            let (xv, wv, bv) = (
                nodes.values[x.0].data(),
                nodes.values[weight.0].data(),
                nodes.values[bias.0].data(),
            );
            let mut out = vec![0.0; mult * c * p];
            for j in 0..mult {
                for ch in 0..c {
                    let o = j * c + ch;
                    let kern = &wv[o * kh * kw..(o + 1) * kh * kw];
                    let plane = &xv[ch * p..(ch + 1) * p];
                    let dst = &mut out[o * p..(o + 1) * p];
                    for r in 0..h {
                        for s in 0..w {
                            let mut acc = bv[o];
                            for a in 0..kh {
                                let rr = r as isize + a as isize - ph as isize;
                                if rr < 0 || rr >= h as isize {
                                    continue;
                                }
                                for b in 0..kw {
                                    let ss = s as isize + b as isize - pw as isize;
                                    if ss < 0 || ss >= w as isize {
                                        continue;
                                    }
                                    acc += kern[a * kw + b] * plane[rr as usize * w + ss as usize];
                                }
                            }
                            dst[r * w + s] = acc;
                        }
                    }
                }
            }
            Tensor::from_vec(&[mult * c, h, w], out).expect("depthwise")
        };
        self.op(&[x, weight, bias], value, move |vals, g, grads| {
            let xv = vals.get(x).data();
            let wv = vals.get(weight).data();
            let need_x = grads.requires[x.0];
            let need_w = grads.requires[weight.0];
            let mut gx = if need_x { vec![0.0; c * p] } else { Vec::new() };
            let mut gw = if need_w { vec![0.0; mult * c * kh * kw] } else { Vec::new() };
            for j in 0..mult {
                for ch in 0..c {
                    let o = j * c + ch;
                    for r in 0..h {
                        for s in 0..w {
                            let go = g[o * p + r * w + s];
                            if go == 0.0 {
                                continue;
                            }
                            for a in 0..kh {
                                let rr = r as isize + a as isize - ph as isize;
                                if rr < 0 || rr >= h as isize {
                                    continue;
                                }
                                for b in 0..kw {
                                    let ss = s as isize + b as isize - pw as isize;
                                    if ss < 0 || ss >= w as isize {
                                        continue;
                                    }
                                    let xi = ch * p + rr as usize * w + ss as usize;
                                    let wi = o * kh * kw + a * kw + b;
                                    if need_w {
                                        gw[wi] += go * xv[xi];
                                    }
                                    if need_x {
                                        gx[xi] += go * wv[wi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if need_x {
                grads.add(x, &gx);
            }
            if need_w {
                grads.add(weight, &gw);
            }
            if let Some(gb) = grads.slot(bias) {
                for o in 0..mult * c {
                    gb[o] += g[o * p..(o + 1) * p].iter().sum::<f64>();
                }
            }
        })
    }

    /// Softmax over all elements.
    pub fn softmax(&self, x: Var) -> Var {
        let value = self.with_value(x, |t| {
            Tensor::from_vec(t.shape(), softmax(t.data())).expect("softmax")
        });
        let out_id = self.len();
        self.op(&[x], value, move |vals, g, grads| {
            if let Some(gx) = grads.slot(x) {
                let y = vals.get(Var(out_id)).data();
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                for i in 0..y.len() {
                    gx[i] += y[i] * (g[i] - dot);
                }
            }
        })
    }

    /// Sparsemax (Euclidean projection onto the simplex) over all elements.
    pub fn sparsemax(&self, x: Var) -> Var {
        let weights = self.with_value(x, |t| sparsemax_threshold(t.data()).expect("sparsemax"));
        let support: Vec<bool> = weights.w.iter().map(|&v| v > 0.0).collect();
        let size = weights.support_size as f64;
        let shape = self.shape(x);
        let value = Tensor::from_vec(&shape, weights.w).expect("sparsemax");
        self.op(&[x], value, move |_, g, grads| {
            if let Some(gx) = grads.slot(x) {
                let mean: f64 = g
                    .iter()
                    .zip(&support)
                    .filter(|(_, &s)| s)
                    .map(|(v, _)| v)
                    .sum::<f64>()
                    / size;
                for i in 0..g.len() {
                    if support[i] {
                        gx[i] += g[i] - mean;
                    }
                }
            }
        })
    }

    /// Keeps the `k` largest elements (ties to the lowest index) and zeroes
    /// the rest. The selection is treated as constant when differentiating.
    pub fn keep_top(&self, x: Var, k: usize) -> Var {
        let mask = self.with_value(x, |t| top_k_mask(t.data(), k));
        let value = self.with_value(x, |t| {
            let data = t.data().iter().zip(&mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
            Tensor::from_vec(t.shape(), data).expect("keep_top")
        });
        self.op(&[x], value, move |_, g, grads| {
            if let Some(gx) = grads.slot(x) {
                for i in 0..g.len() {
                    if mask[i] {
                        gx[i] += g[i];
                    }
                }
            }
        })
    }

    /// Standardizes each row of `x` (treated as `rows × rest`) to zero mean
    /// and unit variance: `(x - μ) / √(σ² + eps)`.
    pub fn normalize_rows(&self, x: Var, eps: f64) -> Var {
        let (m, n) = self.rows_cols(x);
        let (value, inv_std) = self.with_value(x, |t| {
            let mut out = t.clone();
            let mut inv = Vec::with_capacity(m);
            for row in out.data_mut().chunks_mut(n) {
                let mean = row.iter().sum::<f64>() / n as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                let is = 1.0 / libm::sqrt(var + eps);
                row.iter_mut().for_each(|v| *v = (*v - mean) * is);
                inv.push(is);
            }
            (out, inv)
        });
        let out_id = self.len();
        self.op(&[x], value, move |vals, g, grads| {
            if let Some(gx) = grads.slot(x) {
                let y = vals.get(Var(out_id)).data();
                for i in 0..m {
                    let gr = &g[i * n..(i + 1) * n];
                    let yr = &y[i * n..(i + 1) * n];
                    let mg = gr.iter().sum::<f64>() / n as f64;
                    let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    for j in 0..n {
                        gx[i * n + j] += inv_std[i] * (gr[j] - mg - yr[j] * mgy);
                    }
                }
            }
        })
    }

    /// Filters each row of `x: [r, l]` along its length with a real per-bin
    /// gain: `y = Re(IDFT(gain ⊙ DFT(x)))`.
    pub fn spectral_filter(&self, x: Var, gain: Var) -> Var {
        let (r, l) = self.rows_cols(x);
        let plan = DftPlan::new(l);
        let mut spec_re = vec![0.0; r * l];
        let mut spec_im = vec![0.0; r * l];
        let value = {
            let nodes = self.nodes.borrow();
            let (xv, gv) = (nodes.values[x.0].data(), nodes.values[gain.0].data());
            assert_eq!(gv.len(), r * l, "spectral_filter: gain shape");
            let mut out = vec![0.0; r * l];
            let mut fr = vec![0.0; l];
            let mut fi = vec![0.0; l];
            for i in 0..r {
                let row = i * l..(i + 1) * l;
                plan.forward_real(&xv[row.clone()], &mut spec_re[row.clone()], &mut spec_im[row.clone()]);
                for k in 0..l {
                    fr[k] = spec_re[i * l + k] * gv[i * l + k];
                    fi[k] = spec_im[i * l + k] * gv[i * l + k];
                }
                plan.inverse_real_part(&fr, &fi, &mut out[row]);
            }
            Tensor::from_vec(&self.shape(x), out).expect("spectral_filter")
        };
        self.op(&[x, gain], value, move |vals, g, grads| {
            let gv = vals.get(gain).data();
            let mut gr = vec![0.0; l];
            let mut gi = vec![0.0; l];
            let need_gain = grads.requires[gain.0];
            let need_x = grads.requires[x.0];
            let mut ggain = if need_gain { vec![0.0; r * l] } else { Vec::new() };
            let mut gx = if need_x { vec![0.0; r * l] } else { Vec::new() };
            let mut tr = vec![0.0; l];
            let mut ti = vec![0.0; l];
            for i in 0..r {
                let row = i * l..(i + 1) * l;
                // DFT of the upstream gradient row.
                plan.forward_real(&g[row.clone()], &mut gr, &mut gi);
                if need_gain {
                    for k in 0..l {
                        let (xr, xi) = (spec_re[i * l + k], spec_im[i * l + k]);
                        ggain[i * l + k] = (xr * gr[k] + xi * gi[k]) / l as f64;
                    }
                }
                if need_x {
                    // Adjoint of Re∘IDFT∘diag(gain)∘DFT.
                    for k in 0..l {
                        tr[k] = gr[k] * gv[i * l + k];
                        ti[k] = gi[k] * gv[i * l + k];
                    }
                    let mut tmp = vec![0.0; l];
                    plan.inverse_real_part(&tr, &ti, &mut tmp);
                    gx[row].copy_from_slice(&tmp);
                }
            }
            if need_x {
                grads.add(x, &gx);
            }
            if need_gain {
                grads.add(gain, &ggain);
            }
        })
    }

    /// Per-channel 2-D DFT of `x: [c, h, w]`; output `[2c, h, w]` holding the
    /// real parts followed by the imaginary parts.
    pub fn dft2(&self, x: Var) -> Var {
        let xs = self.shape(x);
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let planes = Dft2Planes::new(h, w);
        let value = self.with_value(x, |t| {
            let mut out = vec![0.0; 2 * c * h * w];
            let (re, im) = out.split_at_mut(c * h * w);
            for ch in 0..c {
                let r = ch * h * w..(ch + 1) * h * w;
                planes.forward(&t.data()[r.clone()], &mut re[r.clone()], &mut im[r]);
            }
            Tensor::from_vec(&[2 * c, h, w], out).expect("dft2")
        });
        self.op(&[x], value, move |_, g, grads| {
            if let Some(gx) = grads.slot(x) {
                let p = h * w;
                let (gre, gim) = g.split_at(c * p);
                let mut tmp = vec![0.0; p];
                for ch in 0..c {
                    let r = ch * p..(ch + 1) * p;
                    // x_t receives Σ_k gRe_k cos θ - gIm_k sin θ = p · Re(IDFT(gRe + i gIm)).
                    planes.inverse_real_part(&gre[r.clone()], &gim[r.clone()], &mut tmp);
                    for (d, v) in gx[r].iter_mut().zip(&tmp) {
                        *d += v * p as f64;
                    }
                }
            }
        })
    }

    /// Real part of the per-channel inverse 2-D DFT of `re + i·im`
    /// (each `[c, h, w]`).
    pub fn idft2_real(&self, re: Var, im: Var) -> Var {
        let xs = self.shape(re);
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let p = h * w;
        let planes = Dft2Planes::new(h, w);
        let value = {
            let nodes = self.nodes.borrow();
            let (rv, iv) = (nodes.values[re.0].data(), nodes.values[im.0].data());
            let mut out = vec![0.0; c * p];
            for ch in 0..c {
                let r = ch * p..(ch + 1) * p;
                planes.inverse_real_part(&rv[r.clone()], &iv[r.clone()], &mut out[r]);
            }
            Tensor::from_vec(&[c, h, w], out).expect("idft2_real")
        };
        self.op(&[re, im], value, move |_, g, grads| {
            let mut gr = vec![0.0; c * p];
            let mut gi = vec![0.0; c * p];
            for ch in 0..c {
                let r = ch * p..(ch + 1) * p;
                planes.forward(&g[r.clone()], &mut gr[r.clone()], &mut gi[r]);
            }
            gr.iter_mut().chain(gi.iter_mut()).for_each(|v| *v /= p as f64);
            grads.add(re, &gr);
            grads.add(im, &gi);
        })
    }

    /// Modulus `√(re² + im²)` elementwise.
    pub fn complex_abs(&self, re: Var, im: Var) -> Var {
        let value = self.binary(re, im, libm::hypot);
        let out_id = self.len();
        self.op(&[re, im], value, move |vals, g, grads| {
            let (rv, iv, av) = (vals.get(re).data(), vals.get(im).data(), vals.get(Var(out_id)).data());
            if let Some(gr) = grads.slot(re) {
                for i in 0..g.len() {
                    if av[i] > 0.0 {
                        gr[i] += g[i] * rv[i] / av[i];
                    }
                }
            }
            if let Some(gi) = grads.slot(im) {
                for i in 0..g.len() {
                    if av[i] > 0.0 {
                        gi[i] += g[i] * iv[i] / av[i];
                    }
                }
            }
        })
    }

    /// Argument in `(-π, π]` elementwise.
    pub fn complex_angle(&self, re: Var, im: Var) -> Var {
        let value = self.binary(re, im, |r, i| phase_of(num_complex::Complex64::new(r, i)));
        self.op(&[re, im], value, move |vals, g, grads| {
            let (rv, iv) = (vals.get(re).data(), vals.get(im).data());
            let r2: Vec<f64> = rv.iter().zip(iv).map(|(a, b)| a * a + b * b).collect();
            if let Some(gr) = grads.slot(re) {
                for i in 0..g.len() {
                    if r2[i] > 0.0 {
                        gr[i] -= g[i] * iv[i] / r2[i];
                    }
                }
            }
            if let Some(gi) = grads.slot(im) {
                for i in 0..g.len() {
                    if r2[i] > 0.0 {
                        gi[i] += g[i] * rv[i] / r2[i];
                    }
                }
            }
        })
    }

    /// Diagonal linear state-space scan over `u: [t, e]`:
    /// `h_t = a ⊙ h_{t-1} + b ⊙ u_t`, `y_t = Σ_n c ⊙ h_t + d ⊙ u_t`, with
    /// `a, b, c: [e, n]` and `d: [e]`. `reverse` scans from the last token.
    pub fn ssm_scan(&self, u: Var, a: Var, b: Var, c: Var, d: Var, reverse: bool) -> Var {
        let (t_len, e) = self.rows_cols(u);
        let (e2, n) = self.rows_cols(a);
        assert_eq!(e, e2, "ssm_scan: channel mismatch");
        let order: Vec<usize> = if reverse { (0..t_len).rev().collect() } else { (0..t_len).collect() };
        // Hidden states in scan order, `[t, e, n]`.
        let mut states = vec![0.0; t_len * e * n];
        let value = {
            let nodes = self.nodes.borrow();
            let (uv, av, bv, cv, dv) = (
                nodes.values[u.0].data(),
                nodes.values[a.0].data(),
                nodes.values[b.0].data(),
                nodes.values[c.0].data(),
                nodes.values[d.0].data(),
            );
            let mut out = vec![0.0; t_len * e];
            let zeros = vec![0.0; e * n];
            for (step, &t) in order.iter().enumerate() {
                let (done, rest) = states.split_at_mut(step * e * n);
                let prev = if step > 0 { &done[(step - 1) * e * n..] } else { &zeros[..] };
                let h = &mut rest[..e * n];
                for ch in 0..e {
                    let ut = uv[t * e + ch];
                    let r = ch * n..(ch + 1) * n;
                    let (hs, hp) = (&mut h[r.clone()], &prev[r.clone()]);
                    for ((hv, &pv), (&a_, &b_)) in hs.iter_mut().zip(hp).zip(av[r.clone()].iter().zip(&bv[r.clone()])) {
                        *hv = a_ * pv + b_ * ut;
                    }
                    out[t * e + ch] = dv[ch] * ut + linalg::dot(&cv[r], hs);
                }
            }
            Tensor::from_vec(&[t_len, e], out).expect("ssm_scan")
        };
        self.op(&[u, a, b, c, d], value, move |vals, g, grads| {
            let (uv, av, bv, cv, dv) = (
                vals.get(u).data(),
                vals.get(a).data(),
                vals.get(b).data(),
                vals.get(c).data(),
                vals.get(d).data(),
            );
            let mut gu = vec![0.0; t_len * e];
            let mut ga = vec![0.0; e * n];
            let mut gb = vec![0.0; e * n];
            let mut gc = vec![0.0; e * n];
            let mut gd = vec![0.0; e];
            let mut gh = vec![0.0; e * n];
            let mut ght = vec![0.0; n];
            let zeros = vec![0.0; e * n];
            for step in (0..t_len).rev() {
                let t = order[step];
                let h = &states[step * e * n..(step + 1) * e * n];
                let prev = if step > 0 { &states[(step - 1) * e * n..step * e * n] } else { &zeros[..] };
                for ch in 0..e {
                    let gy = g[t * e + ch];
                    let ut = uv[t * e + ch];
                    gd[ch] += gy * ut;
                    let r = ch * n..(ch + 1) * n;
                    // gh holds a ⊙ gh_{t+1}; add this step's output path.
                    for (o, (&ghv, &cvv)) in ght.iter_mut().zip(gh[r.clone()].iter().zip(&cv[r.clone()])) {
                        *o = ghv + gy * cvv;
                    }
                    let (gcs, gas, gbs, ghs) = (&mut gc[r.clone()], &mut ga[r.clone()], &mut gb[r.clone()], &mut gh[r.clone()]);
                    let (hs, ps, as_) = (&h[r.clone()], &prev[r.clone()], &av[r.clone()]);
                    for s in 0..n {
                        let gs = ght[s];
                        gcs[s] += gy * hs[s];
                        gas[s] += gs * ps[s];
                        gbs[s] += gs * ut;
                        ghs[s] = gs * as_[s];
                    }
                    gu[t * e + ch] = gy * dv[ch] + linalg::dot(&ght, &bv[r]);
                }
            }
            grads.add(u, &gu);
            grads.add(a, &ga);
            grads.add(b, &gb);
            grads.add(c, &gc);
            grads.add(d, &gd);
        })
    }

    /// Softmax cross-entropy of `logits: [k]` against class `label`.
    pub fn cross_entropy(&self, logits: Var, label: usize) -> Var {
        let probs = self.with_value(logits, |t| softmax(t.data()));
        let loss = -libm::log(probs[label].max(f64::MIN_POSITIVE));
        self.op(&[logits], Tensor::scalar(loss), move |_, g, grads| {
            if let Some(gl) = grads.slot(logits) {
                for (i, p) in probs.iter().enumerate() {
                    let target = if i == label { 1.0 } else { 0.0 };
                    gl[i] += g[0] * (p - target);
                }
            }
        })
    }
}

impl<'p> Tape<'p> {
    /// Per-channel orthonormal 2-D DCT-II of `x: [c, h, w]`.
    pub fn dct2(&self, x: Var) -> Var {
        let xs = self.shape(x);
        let (c, h, w) = (xs[0], xs[1], xs[2]);
        let p = h * w;
        let plan = DctPlan::new(h, w);
        let value = self.with_value(x, |t| {
            let mut out = vec![0.0; c * p];
            for ch in 0..c {
                plan.forward(&t.data()[ch * p..(ch + 1) * p], &mut out[ch * p..(ch + 1) * p]);
            }
            Tensor::from_vec(&xs, out).expect("dct2")
        });
        self.op(&[x], value, move |_, g, grads| {
            if let Some(gx) = grads.slot(x) {
                let mut tmp = vec![0.0; p];
                for ch in 0..c {
                    plan.inverse(&g[ch * p..(ch + 1) * p], &mut tmp);
                    for (d, v) in gx[ch * p..(ch + 1) * p].iter_mut().zip(&tmp) {
                        *d += v;
                    }
                }
            }
        })
    }

    /// Selects columns of `x: [m, n]` (rest flattened) by index: `-> [m, indices.len()]`.
    pub fn gather_cols(&self, x: Var, indices: &[usize]) -> Var {
        let (m, n) = self.rows_cols(x);
        let idx = indices.to_vec();
        let value = self.with_value(x, |t| {
            let mut data = Vec::with_capacity(m * idx.len());
            for row in t.data().chunks(n) {
                data.extend(idx.iter().map(|&j| row[j]));
            }
            Tensor::from_vec(&[m, idx.len()], data).expect("gather_cols")
        });
        self.op(&[x], value, move |_, g, grads| {
            if let Some(gx) = grads.slot(x) {
                let k = idx.len();
                for i in 0..m {
                    for (jj, &j) in idx.iter().enumerate() {
                        gx[i * n + j] += g[i * k + jj];
                    }
                }
            }
        })
    }
}

/// Precomputed row/column plans for per-plane 2-D DFTs of real data.
#[derive(Clone)]
struct Dft2Planes {
    h: usize,
    w: usize,
    rows: DftPlan,
    cols: DftPlan,
}

impl Dft2Planes {
    fn new(h: usize, w: usize) -> Self {
        Self { h, w, rows: DftPlan::new(w), cols: DftPlan::new(h) }
    }

    fn forward(&self, x: &[f64], re: &mut [f64], im: &mut [f64]) {
        let (h, w) = (self.h, self.w);
        let mut tr = vec![0.0; h * w];
        let mut ti = vec![0.0; h * w];
        for r in 0..h {
            self.rows.forward_real(&x[r * w..(r + 1) * w], &mut tr[r * w..(r + 1) * w], &mut ti[r * w..(r + 1) * w]);
        }
        let mut cin = vec![num_complex::Complex64::new(0.0, 0.0); h];
        let mut cout = vec![num_complex::Complex64::new(0.0, 0.0); h];
        for c in 0..w {
            for r in 0..h {
                cin[r] = num_complex::Complex64::new(tr[r * w + c], ti[r * w + c]);
            }
            self.cols.forward_strided(&cin, 1, &mut cout);
            for r in 0..h {
                re[r * w + c] = cout[r].re;
                im[r * w + c] = cout[r].im;
            }
        }
    }

    fn inverse_real_part(&self, re: &[f64], im: &[f64], out: &mut [f64]) {
        let (h, w) = (self.h, self.w);
        let mut cin = vec![num_complex::Complex64::new(0.0, 0.0); h];
        let mut cout = vec![num_complex::Complex64::new(0.0, 0.0); h];
        let mut tr = vec![0.0; h * w];
        let mut ti = vec![0.0; h * w];
        for c in 0..w {
            for r in 0..h {
                cin[r] = num_complex::Complex64::new(re[r * w + c], im[r * w + c]);
            }
            self.cols.inverse_strided(&cin, 1, &mut cout);
            for r in 0..h {
                tr[r * w + c] = cout[r].re;
                ti[r * w + c] = cout[r].im;
            }
        }
        for r in 0..h {
            self.rows.inverse_real_part(&tr[r * w..(r + 1) * w], &ti[r * w..(r + 1) * w], &mut out[r * w..(r + 1) * w]);
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| libm::exp(v - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / total).collect()
}

/// Mask of the `k` largest entries; equal values are ranked by lower index.
pub fn top_k_mask(x: &[f64], k: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[j].partial_cmp(&x[i]).unwrap_or(core::cmp::Ordering::Equal).then(i.cmp(&j)));
    let mut mask = vec![false; x.len()];
    for &i in idx.iter().take(k) {
        mask[i] = true;
    }
    mask
}
