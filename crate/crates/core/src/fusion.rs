//! Two-level spatial-frequency fusion.
//!
//! [`Afcm`] recalibrates the channels of both modalities from their DCT
//! spectra: high-frequency coefficients drive a modality-specific gate, the
//! averaged low-frequency coefficients drive a gate shared by both.
//!
//! [`Hfrm`] fuses the Fourier amplitudes of two feature maps, boosting the
//! frequency positions where the phases of the two modalities agree, and
//! rebuilds spatial features from the fused amplitude and phase.

use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Result};
use crate::params::{identity_kernel, Affine, Bound, ParamBuilder, ParamId};
use crate::tensor::Tensor;
use crate::transforms::FrequencyPartition;

#[derive(Debug, Clone, PartialEq)]
pub struct AfcmConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub cut_index: usize,
}

/// Per-channel linear read-out of a coefficient vector:
/// `s_c = Σ_j W[c, j] · v[c, j] + b_c`.
#[derive(Debug, Clone, Copy)]
pub struct ChannelReadout {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl ChannelReadout {
    fn new(b: &mut ParamBuilder<'_>, name: &str, channels: usize, coeffs: usize) -> Result<Self> {
        let (weight, bias) = b.scope(name).affine(&[channels, coeffs], &[channels])?;
        Ok(Self { weight, bias })
    }

    fn apply(&self, tape: &Tape<'_>, p: &Bound, v: Var) -> Var {
        let n = tape.shape(v)[1];
        let prod = tape.mul(v, p.var(self.weight));
        let sums = tape.row_means(prod);
        let sums = tape.scale(sums, n as f64);
        tape.add(sums, p.var(self.bias))
    }
}

#[derive(Debug, Clone)]
pub struct Afcm {
    pub partition: FrequencyPartition,
    pub fc_high_p: ChannelReadout,
    pub fc_high_a: ChannelReadout,
    pub fc_low_shared: ChannelReadout,
}

#[derive(Debug, Clone, Copy)]
pub struct AfcmTrace {
    pub x_p: Var,
    pub x_a: Var,
    /// Per-channel modulation factors `σ(·) + σ(·) + 1`.
    pub factor_p: Var,
    pub factor_a: Var,
}

impl Afcm {
    pub fn new(b: &mut ParamBuilder<'_>, config: &AfcmConfig) -> Result<Self> {
        let partition = FrequencyPartition::new(config.height, config.width, config.cut_index);
        let c = config.channels;
        if partition.low_len() == 0 || partition.high_len() == 0 {
            return Err(invalid(alloc::format!(
                "afcm: cut index {} leaves an empty frequency set on a {}x{} grid",
                config.cut_index,
                config.height,
                config.width
            )));
        }
        let fc_high_p = ChannelReadout::new(b, "fc_high_p", c, partition.high_len())?;
        let fc_high_a = ChannelReadout::new(b, "fc_high_a", c, partition.high_len())?;
        let fc_low_shared = ChannelReadout::new(b, "fc_low_shared", c, partition.low_len())?;
        Ok(Self {
            partition,
            fc_high_p,
            fc_high_a,
            fc_low_shared,
        })
    }

    /// `x_p`, `x_a`: `[C, H, W]` feature maps of the two modalities.
    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, x_p: Var, x_a: Var) -> Result<AfcmTrace> {
        let (sp, sa) = (tape.shape(x_p), tape.shape(x_a));
        if sp[1..] != sa[1..] {
            return Err(invalid(alloc::format!(
                "afcm: spatial dims differ ({:?} vs {:?})",
                &sp[1..],
                &sa[1..]
            )));
        }
        if sp[0] != sa[0] || sp[1] != self.partition.height || sp[2] != self.partition.width {
            return Err(invalid("afcm: inputs do not match the configured shape"));
        }
        let spec_p = tape.dct2(x_p);
        let spec_a = tape.dct2(x_a);
        let low_p = tape.gather_cols(spec_p, &self.partition.low_indices);
        let low_a = tape.gather_cols(spec_a, &self.partition.low_indices);
        let high_p = tape.gather_cols(spec_p, &self.partition.high_indices);
        let high_a = tape.gather_cols(spec_a, &self.partition.high_indices);

        let low_sum = tape.add(low_p, low_a);
        let low_mean = tape.scale(low_sum, 0.5);
        let shared = tape.sigmoid(self.fc_low_shared.apply(tape, p, low_mean));

        let factor = |readout: &ChannelReadout, high: Var| {
            let s = tape.sigmoid(readout.apply(tape, p, high));
            let s = tape.add(s, shared);
            tape.add_scalar(s, 1.0)
        };
        let factor_p = factor(&self.fc_high_p, high_p);
        let factor_a = factor(&self.fc_high_a, high_a);
        Ok(AfcmTrace {
            x_p: tape.mul_rows(x_p, factor_p),
            x_a: tape.mul_rows(x_a, factor_a),
            factor_p,
            factor_a,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HfrmConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Amplitude boost at phase-resonant positions.
    pub alpha: f64,
    /// Fraction of frequency positions kept by the top selection.
    pub top_fraction: f64,
    /// Reserved trade-off factor; not used by any computation.
    pub beta: f64,
}

impl HfrmConfig {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            alpha: 0.2,
            top_fraction: 0.1,
            beta: 0.5,
        }
    }

    /// `⌈top_fraction · H · W⌉`, at least one position.
    pub fn top_count(&self) -> usize {
        let p = self.height * self.width;
        let k = libm::ceil(self.top_fraction * p as f64 - 1e-9) as usize;
        k.clamp(1, p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(invalid("hfrm: alpha must be non-negative"));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(invalid("hfrm: top_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Amplitude/phase pair of one modality, each `[C, H, W]`.
#[derive(Debug, Clone, Copy)]
pub struct Polar {
    pub amplitude: Var,
    pub phase: Var,
}

/// Fourier amplitude and phase of every channel of `x: [C, H, W]`.
pub fn polar_decompose(tape: &Tape<'_>, x: Var) -> Polar {
    let c = tape.shape(x)[0];
    let spec = tape.dft2(x);
    let re = tape.slice_rows(spec, 0, c);
    let im = tape.slice_rows(spec, c, c);
    Polar {
        amplitude: tape.complex_abs(re, im),
        phase: tape.complex_angle(re, im),
    }
}

/// `(α · Top⟨Softmax(Σ_c P_p ⊙ P_a / √C)⟩ + 1) ⊙ (A_p + A_a)/2`, with the
/// softmax taken over frequency positions. Returns `[C, H, W]`.
pub fn phase_resonance_amplitude_vars(
    tape: &Tape<'_>,
    p: Polar,
    a: Polar,
    alpha: f64,
    top_count: usize,
) -> Result<Var> {
    let shape = tape.shape(p.amplitude);
    for v in [p.phase, a.amplitude, a.phase] {
        if tape.shape(v) != shape {
            return Err(invalid("phase_resonance_amplitude: shape mismatch"));
        }
    }
    let c = shape[0];
    let positions = shape[1] * shape[2];
    let prod = tape.mul(p.phase, a.phase);
    let prod = tape.reshape(prod, &[c, positions]);
    // Σ_c / √C = mean_c · √C.
    let score = tape.col_means(prod);
    let score = tape.scale(score, libm::sqrt(c as f64));
    let soft = tape.softmax(score);
    let top = tape.keep_top(soft, top_count);
    let boost = tape.scale(top, alpha);
    let boost = tape.add_scalar(boost, 1.0);
    let mean = amplitude_mean(tape, p.amplitude, a.amplitude, c, positions);
    let out = tape.mul_cols(mean, boost);
    Ok(tape.reshape(out, &shape))
}

fn amplitude_mean(tape: &Tape<'_>, ap: Var, aa: Var, c: usize, positions: usize) -> Var {
    let sum = tape.add(ap, aa);
    let mean = tape.scale(sum, 0.5);
    tape.reshape(mean, &[c, positions])
}

/// Value-level [`phase_resonance_amplitude_vars`] on `[C, H, W]` arrays.
pub fn phase_resonance_amplitude(
    amp_p: &Tensor,
    phase_p: &Tensor,
    amp_a: &Tensor,
    phase_a: &Tensor,
    config: &HfrmConfig,
) -> Result<Tensor> {
    config.validate()?;
    let tape = Tape::new();
    let p = Polar {
        amplitude: tape.leaf_ref(amp_p, false),
        phase: tape.leaf_ref(phase_p, false),
    };
    let a = Polar {
        amplitude: tape.leaf_ref(amp_a, false),
        phase: tape.leaf_ref(phase_a, false),
    };
    if amp_p.shape().len() != 3 {
        return Err(invalid("phase_resonance_amplitude: expected [C, H, W]"));
    }
    let out = phase_resonance_amplitude_vars(&tape, p, a, config.alpha, config.top_count())?;
    Ok(tape.value(out))
}

#[derive(Debug, Clone)]
pub struct Hfrm {
    pub config: HfrmConfig,
    pub conv_amp: Affine,
    pub fc_amp: Affine,
    pub conv_phase: Affine,
}

#[derive(Debug, Clone, Copy)]
pub struct HfrmTrace {
    pub resonant_amplitude: Var,
    pub omega: Var,
    pub fused_amplitude: Var,
    pub fused_phase: Var,
    pub output: Var,
}

impl Hfrm {
    pub fn new(b: &mut ParamBuilder<'_>, config: HfrmConfig) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let positions = config.height * config.width;
        let conv_amp = Affine::conv(b, "conv_amp", 2, 1, 7, 7)?;
        let fc_amp = Affine::linear(b, "fc_amp", positions, positions)?;
        let mut phase = b.scope("conv_phase");
        let conv_phase = Affine {
            weight: phase.tensor("weight", identity_kernel(c, 3, 3))?,
            bias: phase.constant("bias", &[c], 0.0)?,
        };
        Ok(Self {
            config,
            conv_amp,
            fc_amp,
            conv_phase,
        })
    }

    /// Spatial attention over an amplitude array `[C, H, W]`: channel max and
    /// mean maps, 7×7 convolution, linear layer, softmax over positions.
    /// Returns `[H·W]`.
    pub fn amplitude_attention(&self, tape: &Tape<'_>, p: &Bound, amplitude: Var) -> Var {
        let shape = tape.shape(amplitude);
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let flat = tape.reshape(amplitude, &[c, h * w]);
        let max = tape.col_max(flat);
        let avg = tape.col_means(flat);
        let max = tape.reshape(max, &[1, h * w]);
        let avg = tape.reshape(avg, &[1, h * w]);
        let pooled = tape.concat(&[max, avg]);
        let pooled = tape.reshape(pooled, &[2, h, w]);
        let conv = self.conv_amp.conv2d(tape, p, pooled);
        let conv = tape.reshape(conv, &[1, h * w]);
        let logits = self.fc_amp.apply_rows(tape, p, conv);
        let logits = tape.reshape(logits, &[h * w]);
        tape.softmax(logits)
    }

    /// Rebuilds spatial features from `(1 + ω) ⊙ (A_p + A_a)/2` and
    /// `Conv((P_p + P_a)/2)`.
    pub fn reconstruct(
        &self,
        tape: &Tape<'_>,
        bnd: &Bound,
        p: Polar,
        a: Polar,
        omega: Var,
    ) -> (Var, Var, Var) {
        let shape = tape.shape(p.amplitude);
        let (c, positions) = (shape[0], shape[1] * shape[2]);
        let mean = amplitude_mean(tape, p.amplitude, a.amplitude, c, positions);
        let gain = tape.add_scalar(omega, 1.0);
        let fused_amp = tape.mul_cols(mean, gain);
        let fused_amp = tape.reshape(fused_amp, &shape);
        let phase_sum = tape.add(p.phase, a.phase);
        let phase_mean = tape.scale(phase_sum, 0.5);
        let fused_phase = self.conv_phase.conv2d(tape, bnd, phase_mean);
        let re = tape.mul(fused_amp, tape.cos(fused_phase));
        let im = tape.mul(fused_amp, tape.sin(fused_phase));
        (tape.idft2_real(re, im), fused_amp, fused_phase)
    }

    /// `f_s`, `f_a`: `[C, H, W]` features of the two modalities.
    pub fn forward(&self, tape: &Tape<'_>, bnd: &Bound, f_s: Var, f_a: Var) -> Result<HfrmTrace> {
        if tape.shape(f_s) != tape.shape(f_a) {
            return Err(invalid("hfrm: input shapes differ"));
        }
        let p = polar_decompose(tape, f_s);
        let a = polar_decompose(tape, f_a);
        let resonant =
            phase_resonance_amplitude_vars(tape, p, a, self.config.alpha, self.config.top_count())?;
        let omega = self.amplitude_attention(tape, bnd, resonant);
        let (output, fused_amplitude, fused_phase) = self.reconstruct(tape, bnd, p, a, omega);
        Ok(HfrmTrace {
            resonant_amplitude: resonant,
            omega,
            fused_amplitude,
            fused_phase,
            output,
        })
    }
}

/// Indices of the `k` largest softmax scores, used by tests and diagnostics.
pub fn top_positions(scores: &[f64], k: usize) -> Vec<usize> {
    crate::autodiff::top_k_mask(scores, k)
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}
