//! Spectral branch: squared-ReLU sparse attention feeding a trainable
//! high-frequency filter, merged back onto the input through a linear layer,
//! per-channel normalization and a residual connection.

use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Result};
use crate::params::{Affine, Bound, ParamBuilder, ParamId};
use crate::sparse::{depthwise_qkv_vars, squared_relu_attention_vars};
use crate::tensor::Tensor;
use crate::transforms::normalized_frequency;

/// Frequency gate used by the high-frequency filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMode {
    /// `σ(k · (|f| - f_cutoff))`, differentiable in `f_cutoff`.
    Soft { steepness: f64 },
    /// `1[|f| ≥ f_cutoff]`.
    Hard,
}

/// Which axis the sparse weights `w` are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightAlignment {
    /// One weight per spatial token, applied to every frequency bin of that
    /// token's spectrum.
    Spatial,
    /// One weight per spectral channel, applied to the frequency bin of the
    /// same index at every token.
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HfsetConfig {
    pub channels: usize,
    pub kernel: usize,
    pub gate: GateMode,
    pub alignment: WeightAlignment,
    pub f_cutoff_init: f64,
    pub g_amp_init: f64,
    pub norm_eps: f64,
}

impl HfsetConfig {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            kernel: 3,
            gate: GateMode::Soft { steepness: 50.0 },
            alignment: WeightAlignment::Spatial,
            f_cutoff_init: 0.5,
            g_amp_init: 0.05,
            norm_eps: 1e-5,
        }
    }
}

/// Trainable scalars of the high-frequency filter together with the gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HfFilterParams {
    pub f_cutoff: f64,
    pub g_amp: f64,
    pub gate: GateMode,
}

impl HfFilterParams {
    /// Projects onto the feasible set: `f_cutoff ∈ [0, 0.5]`, `g_amp ≥ 0`.
    pub fn clamped(self) -> Self {
        Self {
            f_cutoff: self.f_cutoff.clamp(0.0, 0.5),
            g_amp: self.g_amp.max(0.0),
            gate: self.gate,
        }
    }
}

/// Per-token spectral filter. `x` is `[tokens, bands]`; `w` has one entry
/// per token (spatial alignment) or per band (spectral alignment);
/// `f_cutoff` and `g_amp` are single-element tensors.
pub fn highfreq_enhance_vars(
    tape: &Tape<'_>,
    x: Var,
    w: Var,
    f_cutoff: Var,
    g_amp: Var,
    gate: GateMode,
    alignment: WeightAlignment,
) -> Result<Var> {
    let shape = tape.shape(x);
    let (tokens, bands) = (shape[0], shape[1]);
    if bands < 2 {
        return Err(invalid("highfreq_enhance: spectral axis needs at least 2 bands"));
    }
    let freqs: Vec<f64> = (0..bands).map(|k| normalized_frequency(k, bands)).collect();
    let gate_var = match gate {
        GateMode::Soft { steepness } => {
            let f = tape.constant(Tensor::from_vec(&[bands], freqs)?);
            let shifted = tape.sub_scalar_var(f, f_cutoff);
            let scaled = tape.scale(shifted, steepness);
            tape.sigmoid(scaled)
        }
        GateMode::Hard => {
            let cut = tape.scalar(f_cutoff);
            let mask = freqs.iter().map(|&f| if f < cut { 0.0 } else { 1.0 }).collect();
            tape.constant(Tensor::from_vec(&[bands], mask)?)
        }
    };
    let w_plus = tape.add_scalar(w, 1.0);
    let gain = match alignment {
        WeightAlignment::Spatial => {
            if tape.shape(w) != [tokens] {
                return Err(invalid("highfreq_enhance: spatial weights need one entry per token"));
            }
            tape.outer(w_plus, gate_var)
        }
        WeightAlignment::Spectral => {
            if tape.shape(w) != [bands] {
                return Err(invalid("highfreq_enhance: spectral weights need one entry per band"));
            }
            let per_bin = tape.mul(w_plus, gate_var);
            let ones = tape.constant(Tensor::full(&[tokens], 1.0));
            tape.outer(ones, per_bin)
        }
    };
    let gain = tape.mul_scalar(gain, g_amp);
    Ok(tape.spectral_filter(x, gain))
}

/// Value-level form of [`highfreq_enhance_vars`] for a `[tokens, bands]`
/// feature matrix.
pub fn highfreq_enhance(
    x: &Tensor,
    w: &[f64],
    params: HfFilterParams,
    alignment: WeightAlignment,
) -> Result<Tensor> {
    if x.shape().len() != 2 {
        return Err(invalid("highfreq_enhance: expected [tokens, bands]"));
    }
    let tape = Tape::new();
    let xv = tape.leaf_ref(x, false);
    let wv = tape.constant(Tensor::from_vec(&[w.len()], w.to_vec())?);
    let fc = tape.constant(Tensor::scalar(params.f_cutoff));
    let g = tape.constant(Tensor::scalar(params.g_amp));
    let y = highfreq_enhance_vars(&tape, xv, wv, fc, g, params.gate, alignment)?;
    Ok(tape.value(y))
}

/// Parameter handles of the spectral branch.
#[derive(Debug, Clone)]
pub struct Hfset {
    pub config: HfsetConfig,
    pub qkv_weight: ParamId,
    pub qkv_bias: ParamId,
    pub fc: Affine,
    pub norm_gamma: ParamId,
    pub norm_beta: ParamId,
    pub f_cutoff: ParamId,
    pub g_amp: ParamId,
}

/// Intermediate results of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct HfsetTrace {
    pub sparse: Var,
    pub weights: Var,
    pub high_freq: Var,
    pub output: Var,
}

impl Hfset {
    pub fn new(b: &mut ParamBuilder<'_>, config: HfsetConfig) -> Result<Self> {
        let c = config.channels;
        let k = config.kernel;
        if k % 2 == 0 {
            return Err(invalid("hfset: depthwise kernel size must be odd"));
        }
        let (qkv_weight, qkv_bias) = b.scope("qkv").affine(&[3, c, k, k], &[3, c])?;
        let fc = Affine::linear(b, "fc", 2 * c, c)?;
        let mut norm = b.scope("norm");
        let norm_gamma = norm.constant("gamma", &[c], 1.0)?;
        let norm_beta = norm.constant("beta", &[c], 0.0)?;
        let mut hf = b.scope("hf");
        let f_cutoff = hf.constant("f_cutoff", &[1], config.f_cutoff_init)?;
        let g_amp = hf.constant("g_amp", &[1], config.g_amp_init)?;
        Ok(Self {
            config,
            qkv_weight,
            qkv_bias,
            fc,
            norm_gamma,
            norm_beta,
            f_cutoff,
            g_amp,
        })
    }

    /// `x` is the embedded spectral patch `[C, H, W]`.
    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, x: Var) -> Result<HfsetTrace> {
        let shape = tape.shape(x);
        let (c, tokens) = (shape[0], shape[1] * shape[2]);
        let (q, k, v) = depthwise_qkv_vars(tape, x, p.var(self.qkv_weight), p.var(self.qkv_bias))?;
        let sparse_tokens = squared_relu_attention_vars(tape, q, k, v);

        let scores = match self.config.alignment {
            WeightAlignment::Spatial => tape.row_means(sparse_tokens),
            WeightAlignment::Spectral => tape.col_means(sparse_tokens),
        };
        let weights = tape.sparsemax(scores);

        let flat = tape.reshape(x, &[c, tokens]);
        let x_tokens = tape.transpose(flat);
        let hf_tokens = highfreq_enhance_vars(
            tape,
            x_tokens,
            weights,
            p.var(self.f_cutoff),
            p.var(self.g_amp),
            self.config.gate,
            self.config.alignment,
        )?;

        let sparse = tape.transpose(sparse_tokens);
        let high_freq = tape.transpose(hf_tokens);
        let merged = tape.concat(&[sparse, high_freq]);
        let mixed = self.fc.apply_channels(tape, p, merged);
        let normed = tape.normalize_rows(mixed, self.config.norm_eps);
        let normed = tape.mul_rows(normed, p.var(self.norm_gamma));
        let normed = tape.add_rows(normed, p.var(self.norm_beta));
        let normed = tape.reshape(normed, &shape);
        let output = tape.add(normed, x);
        Ok(HfsetTrace {
            sparse,
            weights,
            high_freq,
            output,
        })
    }

    pub fn filter_params(&self, params: &crate::params::ModelParams) -> HfFilterParams {
        HfFilterParams {
            f_cutoff: params.leaf(self.f_cutoff).value.data()[0],
            g_amp: params.leaf(self.g_amp).value.data()[0],
            gate: self.config.gate,
        }
    }
}
