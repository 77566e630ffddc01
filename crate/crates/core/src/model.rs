//! Full network assembly.
//!
//! Data flow for one patch (`C` = embedding width):
//!
//! ```text
//! x_spec ──embed──► HFSET ─────────────┐
//! x_spat ──embed──► AFCM(p) ──┬──► SSAF(spat, spec) ──► mixer_fus ──┐
//! x_act  ──embed──► AFCM(a) ─┐└──► mixer_spat ───────────────────────┤
//!                            │                         cross gate ◄──┘
//!                            │                          │f_s     │f_fus
//!                            └────────────► HFRM(f_s, a)         │
//!                                             │ f_spat           │
//!                               GAP(f_fus) ⊕ GAP(f_spat) ──► linear ──► logits
//! ```
//!
//! Any of AFCM, HFSET, SSAF and HFRM can be disabled; a disabled module is
//! replaced by the identity on its primary input and owns no parameters.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::data::PatchTriple;
use crate::error::{invalid, Result};
use crate::fusion::{Afcm, AfcmConfig, Hfrm, HfrmConfig};
use crate::hfset::{GateMode, Hfset, HfsetConfig, WeightAlignment};
use crate::params::{Affine, Bound, ModelParams, ParamBuilder};
use crate::ssaf::{CrossFeatureGate, MixerConfig, SequenceMixer, Ssaf};

/// The four ablatable modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Module {
    Afcm,
    Hfrm,
    Hfset,
    Ssaf,
}

impl Module {
    pub const ALL: [Module; 4] = [Module::Afcm, Module::Hfrm, Module::Hfset, Module::Ssaf];

    pub fn name(self) -> &'static str {
        match self {
            Module::Afcm => "afcm",
            Module::Hfrm => "hfrm",
            Module::Hfset => "hfset",
            Module::Ssaf => "ssaf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

/// Set of disabled modules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ModuleSet(u8);

impl ModuleSet {
    pub const fn empty() -> Self {
        Self(0)
    }

    pub fn all() -> Self {
        Module::ALL.into_iter().collect()
    }

    fn bit(m: Module) -> u8 {
        1 << (m as u8)
    }

    pub fn with(mut self, m: Module) -> Self {
        self.0 |= Self::bit(m);
        self
    }

    pub fn contains(self, m: Module) -> bool {
        self.0 & Self::bit(m) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Module> {
        Module::ALL.into_iter().filter(move |&m| self.contains(m))
    }
}

impl FromIterator<Module> for ModuleSet {
    fn from_iter<I: IntoIterator<Item = Module>>(iter: I) -> Self {
        iter.into_iter().fold(Self::empty(), Self::with)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub spectral_bands: usize,
    pub active_channels: usize,
    pub classes: usize,
    pub window: usize,
    pub embed_dim: usize,
    /// DCT partition threshold: `(h, w)` is low-frequency iff `h + w < cut_index`.
    pub cut_index: usize,
    pub alpha: f64,
    pub top_fraction: f64,
    pub beta: f64,
    pub state_dim: usize,
    pub expand: usize,
    pub mixer_depth: usize,
    pub gate: GateMode,
    pub alignment: WeightAlignment,
    pub f_cutoff_init: f64,
    pub g_amp_init: f64,
    pub disabled: ModuleSet,
}

impl ModelConfig {
    pub fn new(spectral_bands: usize, active_channels: usize, classes: usize, window: usize) -> Self {
        Self {
            spectral_bands,
            active_channels,
            classes,
            window,
            embed_dim: 64,
            cut_index: 4,
            alpha: 0.2,
            top_fraction: 0.1,
            beta: 0.5,
            state_dim: 16,
            expand: 2,
            mixer_depth: 2,
            gate: GateMode::Soft { steepness: 50.0 },
            alignment: WeightAlignment::Spatial,
            f_cutoff_init: 0.5,
            g_amp_init: 0.05,
            disabled: ModuleSet::empty(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 || self.window == 0 {
            return Err(invalid(alloc::format!("window {} must be odd", self.window)));
        }
        if self.spectral_bands == 0 || self.active_channels == 0 {
            return Err(invalid("model: raster channel counts must be positive"));
        }
        if self.classes < 2 {
            return Err(invalid("model: at least two classes are required"));
        }
        if self.embed_dim < 2 {
            return Err(invalid("model: embed_dim must be at least 2"));
        }
        Ok(())
    }
}

/// Parameter handles and configuration of the whole network.
#[derive(Debug, Clone)]
pub struct S2Fin {
    pub config: ModelConfig,
    pub embed_spec: Affine,
    pub embed_spat: Affine,
    pub embed_active: Affine,
    pub afcm: Option<Afcm>,
    pub hfset: Option<Hfset>,
    pub ssaf: Option<Ssaf>,
    pub mixer_spat: SequenceMixer,
    pub mixer_fus: SequenceMixer,
    pub gate: CrossFeatureGate,
    pub hfrm: Option<Hfrm>,
    pub head: Affine,
}

/// Named intermediate tensors of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardTrace {
    pub x_spat_p: Var,
    pub x_spat_a: Var,
    pub x_spec: Var,
    pub x_fus: Var,
    pub f_s: Var,
    pub f_fus: Var,
    pub f_spat: Var,
    pub logits: Var,
}

impl S2Fin {
    /// Builds the parameter tree with a seeded initialization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<(Self, ModelParams)> {
        config.validate()?;
        let mut params = ModelParams::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = ParamBuilder::new(&mut params, &mut rng);
        let c = config.embed_dim;
        let s = config.window;
        let off = config.disabled;

        let mut embed = b.scope("embed");
        let embed_spec = Affine::linear(&mut embed, "spec", config.spectral_bands, c)?;
        let embed_spat = Affine::linear(&mut embed, "spat", config.spectral_bands, c)?;
        let embed_active = Affine::linear(&mut embed, "active", config.active_channels, c)?;

        let afcm = if off.contains(Module::Afcm) {
            None
        } else {
            let cfg = AfcmConfig {
                channels: c,
                height: s,
                width: s,
                cut_index: config.cut_index,
            };
            Some(Afcm::new(&mut b.scope("afcm"), &cfg)?)
        };
        let hfset = if off.contains(Module::Hfset) {
            None
        } else {
            let cfg = HfsetConfig {
                gate: config.gate,
                alignment: config.alignment,
                f_cutoff_init: config.f_cutoff_init,
                g_amp_init: config.g_amp_init,
                ..HfsetConfig::new(c)
            };
            Some(Hfset::new(&mut b.scope("hfset"), cfg)?)
        };
        let ssaf = if off.contains(Module::Ssaf) {
            None
        } else {
            Some(Ssaf::new(&mut b.scope("ssaf"), c)?)
        };
        let mixer_cfg = MixerConfig {
            inner: config.expand * c,
            state: config.state_dim,
            depth: config.mixer_depth,
            ..MixerConfig::new(c)
        };
        let mixer_spat = SequenceMixer::new(&mut b.scope("mixer_spat"), mixer_cfg)?;
        let mixer_fus = SequenceMixer::new(&mut b.scope("mixer_fus"), mixer_cfg)?;
        let gate = CrossFeatureGate::new(&mut b.scope("gate"), s * s)?;
        let hfrm = if off.contains(Module::Hfrm) {
            None
        } else {
            let cfg = HfrmConfig {
                alpha: config.alpha,
                top_fraction: config.top_fraction,
                beta: config.beta,
                ..HfrmConfig::new(c, s, s)
            };
            Some(Hfrm::new(&mut b.scope("hfrm"), cfg)?)
        };
        let head = Affine::linear(&mut b, "head", 2 * c, config.classes)?;
        drop(b);
        let model = Self {
            config,
            embed_spec,
            embed_spat,
            embed_active,
            afcm,
            hfset,
            ssaf,
            mixer_spat,
            mixer_fus,
            gate,
            hfrm,
            head,
        };
        Ok((model, params))
    }

    fn check_patch(&self, patch: &PatchTriple) -> Result<()> {
        let s = self.config.window;
        let want = |ch: usize| [ch, s, s];
        if patch.x_spec.shape() != want(self.config.spectral_bands)
            || patch.x_spat.shape() != want(self.config.spectral_bands)
            || patch.x_active.shape() != want(self.config.active_channels)
        {
            return Err(invalid(alloc::format!(
                "patch shapes {:?}/{:?}/{:?} do not match the model ({} bands, {} active, window {s})",
                patch.x_spec.shape(),
                patch.x_spat.shape(),
                patch.x_active.shape(),
                self.config.spectral_bands,
                self.config.active_channels
            )));
        }
        Ok(())
    }

    fn embed(&self, tape: &Tape<'_>, p: &Bound, layer: &Affine, x: Var) -> Var {
        let shape = tape.shape(x);
        let flat = tape.reshape(x, &[shape[0], shape[1] * shape[2]]);
        let y = layer.apply_channels(tape, p, flat);
        tape.reshape(y, &[self.config.embed_dim, shape[1], shape[2]])
    }

    pub fn forward_trace<'p>(
        &self,
        tape: &Tape<'p>,
        p: &Bound,
        patch: &'p PatchTriple,
    ) -> Result<ForwardTrace> {
        self.check_patch(patch)?;
        let c = self.config.embed_dim;
        let x_spec_in = tape.leaf_ref(&patch.x_spec, false);
        let x_spat_in = tape.leaf_ref(&patch.x_spat, false);
        let x_act_in = tape.leaf_ref(&patch.x_active, false);

        let x_spec = self.embed(tape, p, &self.embed_spec, x_spec_in);
        let x_spat = self.embed(tape, p, &self.embed_spat, x_spat_in);
        let x_act = self.embed(tape, p, &self.embed_active, x_act_in);

        let (x_spat_p, x_spat_a) = match &self.afcm {
            Some(afcm) => {
                let t = afcm.forward(tape, p, x_spat, x_act)?;
                (t.x_p, t.x_a)
            }
            None => (x_spat, x_act),
        };
        let x_spec = match &self.hfset {
            Some(h) => h.forward(tape, p, x_spec)?.output,
            None => x_spec,
        };
        let x_fus = match &self.ssaf {
            Some(s) => s.forward(tape, p, x_spat_p, x_spec)?.output,
            None => x_spec,
        };
        let f_spat_p = self.mixer_spat.forward(tape, p, x_spat_p);
        let f_fus_p = self.mixer_fus.forward(tape, p, x_fus);
        let gated = self.gate.forward(tape, p, f_spat_p, f_fus_p)?;
        let f_spat = match &self.hfrm {
            Some(h) => h.forward(tape, p, gated.f_s, x_spat_a)?.output,
            None => gated.f_s,
        };
        let pooled_fus = tape.row_means(gated.f_fus);
        let pooled_spat = tape.row_means(f_spat);
        let features = tape.concat(&[pooled_fus, pooled_spat]);
        let features = tape.reshape(features, &[1, 2 * c]);
        let logits = self.head.apply_rows(tape, p, features);
        let logits = tape.reshape(logits, &[self.config.classes]);
        Ok(ForwardTrace {
            x_spat_p,
            x_spat_a,
            x_spec,
            x_fus,
            f_s: gated.f_s,
            f_fus: gated.f_fus,
            f_spat,
            logits,
        })
    }

    pub fn forward<'p>(&self, tape: &Tape<'p>, p: &Bound, patch: &'p PatchTriple) -> Result<Var> {
        Ok(self.forward_trace(tape, p, patch)?.logits)
    }

    /// Class logits for one patch.
    pub fn logits(&self, params: &ModelParams, patch: &PatchTriple) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let bound = params.bind(&tape);
        let logits = self.forward(&tape, &bound, patch)?;
        Ok(tape.value(logits).into_data())
    }

    pub fn predict(&self, params: &ModelParams, patch: &PatchTriple) -> Result<usize> {
        let logits = self.logits(params, patch)?;
        Ok(argmax(&logits))
    }

    /// Cross-entropy loss and per-leaf gradients for one labeled patch.
    pub fn loss_and_grad(&self, params: &ModelParams, patch: &PatchTriple) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
        let label = patch
            .label
            .ok_or_else(|| invalid("loss_and_grad: patch is unlabeled"))?;
        let tape = Tape::new();
        let bound = params.bind(&tape);
        let logits = self.forward(&tape, &bound, patch)?;
        let loss = tape.cross_entropy(logits, label);
        tape.backward(loss);
        Ok((tape.scalar(loss), tape.value(logits).into_data(), bound.gradients(&tape)))
    }

    pub fn loss(&self, params: &ModelParams, patch: &PatchTriple) -> Result<f64> {
        let label = patch
            .label
            .ok_or_else(|| invalid("loss: patch is unlabeled"))?;
        let tape = Tape::new();
        let bound = params.bind(&tape);
        let logits = self.forward(&tape, &bound, patch)?;
        let loss = tape.cross_entropy(logits, label);
        Ok(tape.scalar(loss))
    }

    /// Clamps the high-frequency filter scalars to their feasible ranges.
    pub fn project_params(&self, params: &mut ModelParams) {
        if let Some(h) = &self.hfset {
            let fc = &mut params.leaf_mut(h.f_cutoff).value.data_mut()[0];
            *fc = fc.clamp(0.0, 0.5);
            let g = &mut params.leaf_mut(h.g_amp).value.data_mut()[0];
            *g = g.max(0.0);
        }
    }
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}
