//! Named parameter tree with per-leaf gradients.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// One parameter tensor, addressed by a dotted path such as `hfset.fc.weight`.
#[derive(Debug, Clone)]
pub struct ParamLeaf {
    pub path: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Default)]
pub struct ModelParams {
    leaves: Vec<ParamLeaf>,
    index: BTreeMap<String, usize>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: &str, value: Tensor, trainable: bool) -> Result<ParamId> {
        if self.index.contains_key(path) {
            return Err(invalid(alloc::format!("duplicate parameter path `{path}`")));
        }
        let id = self.leaves.len();
        let grad = Tensor::zeros(value.shape());
        self.leaves.push(ParamLeaf {
            path: path.to_string(),
            value,
            grad,
            trainable,
        });
        self.index.insert(path.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn id(&self, path: &str) -> Option<ParamId> {
        self.index.get(path).map(|&i| ParamId(i))
    }

    pub fn get(&self, path: &str) -> Option<&ParamLeaf> {
        self.index.get(path).map(|&i| &self.leaves[i])
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut ParamLeaf> {
        self.index.get(path).map(|&i| &mut self.leaves[i])
    }

    pub fn leaf(&self, id: ParamId) -> &ParamLeaf {
        &self.leaves[id.0]
    }

    pub fn leaf_mut(&mut self, id: ParamId) -> &mut ParamLeaf {
        &mut self.leaves[id.0]
    }

    pub fn leaves(&self) -> &[ParamLeaf] {
        &self.leaves
    }

    pub fn leaves_mut(&mut self) -> &mut [ParamLeaf] {
        &mut self.leaves
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// Replaces the value of `path`, keeping its shape.
    pub fn set_value(&mut self, path: &str, value: Tensor) -> Result<()> {
        let leaf = self
            .get_mut(path)
            .ok_or_else(|| invalid(alloc::format!("unknown parameter `{path}`")))?;
        if leaf.value.shape() != value.shape() {
            return Err(invalid(alloc::format!(
                "parameter `{path}` has shape {:?}, got {:?}",
                leaf.value.shape(),
                value.shape()
            )));
        }
        leaf.value = value;
        Ok(())
    }

    /// Fills the value of `path` with a constant.
    pub fn fill(&mut self, path: &str, v: f64) -> Result<()> {
        let leaf = self
            .get_mut(path)
            .ok_or_else(|| invalid(alloc::format!("unknown parameter `{path}`")))?;
        leaf.value.data_mut().iter_mut().for_each(|x| *x = v);
        Ok(())
    }

    pub fn trainable_count(&self) -> usize {
        self.leaves.iter().filter(|l| l.trainable).map(|l| l.value.len()).sum()
    }

    pub fn total_count(&self) -> usize {
        self.leaves.iter().map(|l| l.value.len()).sum()
    }

    /// Trainable scalar count of every leaf whose path starts with `prefix`.
    pub fn count_with_prefix(&self, prefix: &str) -> usize {
        self.leaves
            .iter()
            .filter(|l| l.trainable && l.path.starts_with(prefix))
            .map(|l| l.value.len())
            .sum()
    }

    pub fn zero_grads(&mut self) {
        for leaf in &mut self.leaves {
            leaf.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// `grad += scale · g` for every leaf.
    pub fn accumulate_grads(&mut self, grads: &[Vec<f64>], scale: f64) {
        for (leaf, g) in self.leaves.iter_mut().zip(grads) {
            for (a, b) in leaf.grad.data_mut().iter_mut().zip(g) {
                *a += scale * b;
            }
        }
    }

    /// Registers every leaf on `tape` without copying.
    pub fn bind<'p>(&'p self, tape: &Tape<'p>) -> Bound {
        let vars = self
            .leaves
            .iter()
            .map(|l| tape.leaf_ref(&l.value, l.trainable))
            .collect();
        Bound { vars }
    }
}

/// Tape variables for every leaf of a [`ModelParams`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    #[inline]
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Per-leaf gradients after [`Tape::backward`].
    pub fn gradients(&self, tape: &Tape<'_>) -> Vec<Vec<f64>> {
        self.vars.iter().map(|&v| tape.grad(v)).collect()
    }
}

/// Creates initialized leaves under a path prefix.
pub struct ParamBuilder<'a> {
    params: &'a mut ModelParams,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(params: &'a mut ModelParams, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            params,
            rng,
            prefix: String::new(),
        }
    }

    /// Builder writing below `prefix.name`.
    pub fn scope<'b>(&'b mut self, name: &str) -> ParamBuilder<'b> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            alloc::format!("{}.{name}", self.prefix)
        };
        ParamBuilder {
            params: self.params,
            rng: self.rng,
            prefix,
        }
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            alloc::format!("{}.{name}", self.prefix)
        }
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        let path = self.path(name);
        self.params.insert(&path, Tensor::full(shape, value), true)
    }

    pub fn tensor(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        let path = self.path(name);
        self.params.insert(&path, value, true)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        let path = self.path(name);
        self.params.insert(&path, Tensor::from_vec(shape, data)?, true)
    }

    /// Uniform on `[lo, hi]`.
    pub fn uniform_range(&mut self, name: &str, shape: &[usize], lo: f64, hi: f64) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(lo..=hi)).collect();
        let path = self.path(name);
        self.params.insert(&path, Tensor::from_vec(shape, data)?, true)
    }

    /// Weight with fan-in scaled uniform init (`±1/√fan_in`) plus bias.
    pub fn affine(&mut self, weight_shape: &[usize], bias_shape: &[usize]) -> Result<(ParamId, ParamId)> {
        let fan_in: usize = weight_shape[1..].iter().product();
        let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
        let w = self.uniform("weight", weight_shape, bound)?;
        let b = self.uniform("bias", bias_shape, bound)?;
        Ok((w, b))
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }
}

/// Weight/bias pair of a linear map or convolution.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Affine {
    pub fn linear(b: &mut ParamBuilder<'_>, name: &str, inputs: usize, outputs: usize) -> Result<Self> {
        let (weight, bias) = b.scope(name).affine(&[outputs, inputs], &[outputs])?;
        Ok(Self { weight, bias })
    }

    pub fn conv(
        b: &mut ParamBuilder<'_>,
        name: &str,
        inputs: usize,
        outputs: usize,
        kh: usize,
        kw: usize,
    ) -> Result<Self> {
        let (weight, bias) = b.scope(name).affine(&[outputs, inputs, kh, kw], &[outputs])?;
        Ok(Self { weight, bias })
    }

    /// Row-wise `x · Wᵀ + b` for `x: [rows, inputs]`.
    pub fn apply_rows(&self, tape: &Tape<'_>, p: &Bound, x: Var) -> Var {
        tape.linear(x, p.var(self.weight), p.var(self.bias))
    }

    /// Channel mixing `W · x + b` for a channel-major `x: [inputs, positions]`.
    pub fn apply_channels(&self, tape: &Tape<'_>, p: &Bound, x: Var) -> Var {
        let y = tape.matmul(p.var(self.weight), x);
        tape.add_rows(y, p.var(self.bias))
    }

    pub fn conv2d(&self, tape: &Tape<'_>, p: &Bound, x: Var) -> Var {
        tape.conv2d(x, p.var(self.weight), p.var(self.bias))
    }
}

/// Identity-centered convolution kernel: `weight[o][i][kh/2][kw/2] = δ_oi`.
pub fn identity_kernel(channels: usize, kh: usize, kw: usize) -> Tensor {
    let mut t = Tensor::zeros(&[channels, channels, kh, kw]);
    let center = (kh / 2) * kw + kw / 2;
    for c in 0..channels {
        t.data_mut()[(c * channels + c) * kh * kw + center] = 1.0;
    }
    t
}
