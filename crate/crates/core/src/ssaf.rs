//! Spatial-spectral attention fusion, the bidirectional state-space sequence
//! mixer and the shared cross-feature gate.

use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Result};
use crate::params::{Affine, Bound, ParamBuilder, ParamId};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Ssaf {
    /// 1-D convolution over the channel axis (kernel 3) for the channel score.
    pub conv_spat: Affine,
    /// 7×7 convolution for the spatial score.
    pub conv_spec: Affine,
    pub conv_gamma: Affine,
    pub conv_out: Affine,
}

#[derive(Debug, Clone, Copy)]
pub struct SsafTrace {
    /// `[C]`, from the spatial-branch input.
    pub atte_spat: Var,
    /// `[H·W]`, from the spectral-branch input.
    pub atte_spec: Var,
    pub gamma: Var,
    /// `x^ss + γ ⊙ x_spec + (1 - γ) ⊙ x_spat`, the input of the output conv.
    pub mixed: Var,
    pub output: Var,
}

/// Flat index of the center pixel of an `h × w` patch.
pub fn center_index(h: usize, w: usize) -> usize {
    (h / 2) * w + w / 2
}

impl Ssaf {
    pub fn new(b: &mut ParamBuilder<'_>, channels: usize) -> Result<Self> {
        Ok(Self {
            conv_spat: Affine::conv(b, "conv_spat", 2, 1, 1, 3)?,
            conv_spec: Affine::conv(b, "conv_spec", 2, 1, 7, 7)?,
            conv_gamma: Affine::conv(b, "conv_gamma", 2 * channels, channels, 3, 3)?,
            conv_out: Affine::conv(b, "conv_out", channels, channels, 3, 3)?,
        })
    }

    /// Channel score from the spatial mean and center pixel of `x_spat`, and
    /// spatial score from the channel mean and max of `x_spec`.
    pub fn attention_scores(&self, tape: &Tape<'_>, p: &Bound, x_spat: Var, x_spec: Var) -> Result<(Var, Var)> {
        let shape = tape.shape(x_spat);
        if tape.shape(x_spec) != shape {
            return Err(invalid("ssaf: spatial and spectral inputs differ in shape"));
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let spat = tape.reshape(x_spat, &[c, h * w]);
        let mean = tape.reshape(tape.row_means(spat), &[1, c]);
        let cent = tape.reshape(tape.column(spat, center_index(h, w)), &[1, c]);
        let stacked = tape.reshape(tape.concat(&[mean, cent]), &[2, 1, c]);
        let atte_spat = self.conv_spat.conv2d(tape, p, stacked);
        let atte_spat = tape.sigmoid(tape.reshape(atte_spat, &[c]));

        let spec = tape.reshape(x_spec, &[c, h * w]);
        let avg = tape.reshape(tape.col_means(spec), &[1, h * w]);
        let max = tape.reshape(tape.col_max(spec), &[1, h * w]);
        let stacked = tape.reshape(tape.concat(&[avg, max]), &[2, h, w]);
        let atte_spec = self.conv_spec.conv2d(tape, p, stacked);
        let atte_spec = tape.sigmoid(tape.reshape(atte_spec, &[h * w]));
        Ok((atte_spat, atte_spec))
    }

    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, x_spat: Var, x_spec: Var) -> Result<SsafTrace> {
        let (atte_spat, atte_spec) = self.attention_scores(tape, p, x_spat, x_spec)?;
        let shape = tape.shape(x_spat);
        let x_ss = tape.add(x_spat, x_spec);
        let atte_fus = tape.reshape(tape.outer(atte_spat, atte_spec), &shape);
        let gate_in = tape.concat(&[x_ss, atte_fus]);
        let gamma = tape.sigmoid(self.conv_gamma.conv2d(tape, p, gate_in));
        let one_minus = tape.add_scalar(tape.scale(gamma, -1.0), 1.0);
        let mixed = tape.add(x_ss, tape.mul(gamma, x_spec));
        let mixed = tape.add(mixed, tape.mul(one_minus, x_spat));
        let output = tape.sigmoid(self.conv_out.conv2d(tape, p, mixed));
        Ok(SsafTrace {
            atte_spat,
            atte_spec,
            gamma,
            mixed,
            output,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixerConfig {
    pub channels: usize,
    /// Inner width of the scan (`expand · channels`).
    pub inner: usize,
    pub state: usize,
    pub depth: usize,
    pub residual: bool,
}

impl MixerConfig {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            inner: 2 * channels,
            state: 16,
            depth: 2,
            residual: true,
        }
    }
}

/// Parameters of one scan direction. `decay` holds pre-sigmoid values so the
/// effective `a = σ(decay)` stays in `(0, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct ScanParams {
    pub decay: ParamId,
    pub input: ParamId,
    pub output: ParamId,
    pub skip: ParamId,
}

impl ScanParams {
    fn new(b: &mut ParamBuilder<'_>, inner: usize, state: usize) -> Result<Self> {
        // a = σ(decay) initialized in [0.5, 0.95].
        let decay = b.uniform_range("decay", &[inner, state], 0.0, libm::log(19.0))?;
        let input = b.uniform("input", &[inner, state], 1.0 / libm::sqrt(state as f64))?;
        let output = b.uniform("output", &[inner, state], 1.0 / libm::sqrt(state as f64))?;
        let skip = b.constant("skip", &[inner], 1.0)?;
        Ok(Self {
            decay,
            input,
            output,
            skip,
        })
    }

    fn scan(&self, tape: &Tape<'_>, p: &Bound, u: Var, reverse: bool) -> Var {
        let a = tape.sigmoid(p.var(self.decay));
        tape.ssm_scan(u, a, p.var(self.input), p.var(self.output), p.var(self.skip), reverse)
    }
}

/// Sum of a forward and a backward diagonal scan over `u: [tokens, inner]`.
pub fn bidirectional_scan(
    tape: &Tape<'_>,
    u: Var,
    forward: (Var, Var, Var, Var),
    backward: (Var, Var, Var, Var),
) -> Var {
    let f = tape.ssm_scan(u, forward.0, forward.1, forward.2, forward.3, false);
    let b = tape.ssm_scan(u, backward.0, backward.1, backward.2, backward.3, true);
    tape.add(f, b)
}

#[derive(Debug, Clone)]
pub struct MixerLayer {
    pub norm_gamma: ParamId,
    pub norm_beta: ParamId,
    pub in_x: Affine,
    pub in_z: Affine,
    pub forward_scan: ScanParams,
    pub backward_scan: ScanParams,
    pub out: Affine,
}

/// Stack of pre-normalized, gated, bidirectional diagonal state-space
/// layers over the row-major token sequence of a feature patch.
#[derive(Debug, Clone)]
pub struct SequenceMixer {
    pub config: MixerConfig,
    pub layers: Vec<MixerLayer>,
}

impl SequenceMixer {
    pub fn new(b: &mut ParamBuilder<'_>, config: MixerConfig) -> Result<Self> {
        let (c, e) = (config.channels, config.inner);
        let mut layers = Vec::with_capacity(config.depth);
        for i in 0..config.depth {
            let name = alloc::format!("layers.{i}");
            let mut lb = b.scope(&name);
            let mut norm = lb.scope("norm");
            let norm_gamma = norm.constant("gamma", &[c], 1.0)?;
            let norm_beta = norm.constant("beta", &[c], 0.0)?;
            let in_x = Affine::linear(&mut lb, "in_x", c, e)?;
            let in_z = Affine::linear(&mut lb, "in_z", c, e)?;
            let forward_scan = ScanParams::new(&mut lb.scope("scan_fwd"), e, config.state)?;
            let backward_scan = ScanParams::new(&mut lb.scope("scan_bwd"), e, config.state)?;
            let out = Affine::linear(&mut lb, "out", e, c)?;
            layers.push(MixerLayer {
                norm_gamma,
                norm_beta,
                in_x,
                in_z,
                forward_scan,
                backward_scan,
                out,
            });
        }
        Ok(Self { config, layers })
    }

    /// Mixes a `[tokens, C]` sequence.
    pub fn forward_tokens(&self, tape: &Tape<'_>, p: &Bound, tokens: Var) -> Var {
        let mut x = tokens;
        for layer in &self.layers {
            let n = tape.normalize_rows(x, 1e-5);
            let n = tape.mul_cols(n, p.var(layer.norm_gamma));
            let n = tape.add_cols(n, p.var(layer.norm_beta));
            let u = layer.in_x.apply_rows(tape, p, n);
            let z = layer.in_z.apply_rows(tape, p, n);
            let f = layer.forward_scan.scan(tape, p, u, false);
            let b = layer.backward_scan.scan(tape, p, u, true);
            let y = tape.add(f, b);
            let y = tape.mul(y, tape.silu(z));
            let y = layer.out.apply_rows(tape, p, y);
            x = if self.config.residual { tape.add(x, y) } else { y };
        }
        x
    }

    /// Mixes a `[C, H, W]` patch scanned in row-major order.
    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, x: Var) -> Var {
        let shape = tape.shape(x);
        let flat = tape.reshape(x, &[shape[0], shape[1] * shape[2]]);
        let tokens = tape.transpose(flat);
        let mixed = self.forward_tokens(tape, p, tokens);
        let back = tape.transpose(mixed);
        tape.reshape(back, &shape)
    }
}

/// `F = σ(FC(cent(f_spat) ⊕ mean_c(f_fus)))`, a per-channel gate shared by
/// both outputs. `⊕` broadcasts the `[C]` center vector against the
/// `[H·W]` channel-mean map; the FC reads the spatial axis.
#[derive(Debug, Clone)]
pub struct CrossFeatureGate {
    pub fc: Affine,
}

#[derive(Debug, Clone, Copy)]
pub struct GateTrace {
    pub gate: Var,
    pub f_s: Var,
    pub f_fus: Var,
}

impl CrossFeatureGate {
    pub fn new(b: &mut ParamBuilder<'_>, positions: usize) -> Result<Self> {
        Ok(Self {
            fc: Affine::linear(b, "fc", positions, 1)?,
        })
    }

    pub fn forward(&self, tape: &Tape<'_>, p: &Bound, f_spat: Var, f_fus: Var) -> Result<GateTrace> {
        let shape = tape.shape(f_spat);
        if tape.shape(f_fus) != shape {
            return Err(invalid("cross_feature_gate: input shapes differ"));
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let spat = tape.reshape(f_spat, &[c, h * w]);
        let cent = tape.column(spat, center_index(h, w));
        let fus = tape.reshape(f_fus, &[c, h * w]);
        let channel_mean = tape.col_means(fus);
        let ones = tape.constant(Tensor::full(&[h * w], 1.0));
        let grid = tape.outer(cent, ones);
        let grid = tape.add_cols(grid, channel_mean);
        let logits = self.fc.apply_rows(tape, p, grid);
        let gate = tape.sigmoid(tape.reshape(logits, &[c]));
        Ok(GateTrace {
            gate,
            f_s: tape.mul_rows(f_spat, gate),
            f_fus: tape.mul_rows(f_fus, gate),
        })
    }
}
