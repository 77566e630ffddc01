//! Seeded synthetic multimodal scenes: Voronoi regions, one spectral and one
//! active prototype per class, additive Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use s2fin_core::data::Scene;

use crate::container::SceneContainer;
use crate::error::{Error, Result};

/// Layouts are redrawn at most this many times before giving up.
pub const MAX_LAYOUT_ATTEMPTS: usize = 64;

/// Smallest share of the scene each class must cover.
pub const MIN_CLASS_SHARE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrototype {
    pub spectral: Vec<f32>,
    pub active: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneSpec {
    pub height: usize,
    pub width: usize,
    pub noise_std: f64,
    /// Voronoi sites per class.
    pub regions_per_class: usize,
    pub prototypes: Vec<ClassPrototype>,
}

impl SyntheticSceneSpec {
    /// Smooth random spectral curves and uniform active signatures.
    pub fn with_random_prototypes(
        height: usize,
        width: usize,
        spectral_bands: usize,
        active_channels: usize,
        classes: usize,
        noise_std: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let prototypes = (0..classes)
            .map(|_| {
                let base = rng.gen_range(0.25..0.75);
                let amp = rng.gen_range(0.05..0.25);
                let freq = rng.gen_range(0.3..2.0);
                let shift = rng.gen_range(0.0..std::f64::consts::TAU);
                let spectral = (0..spectral_bands)
                    .map(|b| {
                        let t = b as f64 / spectral_bands.max(1) as f64;
                        (base + amp * (std::f64::consts::TAU * freq * t + shift).sin()) as f32
                    })
                    .collect();
                let active = (0..active_channels).map(|_| rng.gen_range(0.0f32..1.0)).collect();
                ClassPrototype { spectral, active }
            })
            .collect();
        Self {
            height,
            width,
            noise_std,
            regions_per_class: 3,
            prototypes,
        }
    }

    pub fn classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(Error::Usage(m));
        if self.classes() < 2 {
            return usage(format!("synthetic scene needs at least 2 classes, got {}", self.classes()));
        }
        if self.height == 0 || self.width == 0 || self.regions_per_class == 0 {
            return usage("synthetic scene dims and regions must be positive".into());
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return usage(format!("noise std must be finite and >= 0, got {}", self.noise_std));
        }
        let first = &self.prototypes[0];
        if first.spectral.is_empty() || first.active.is_empty() {
            return usage("prototypes need at least one spectral band and one active channel".into());
        }
        for p in &self.prototypes {
            if p.spectral.len() != first.spectral.len() || p.active.len() != first.active.len() {
                return Err(Error::Dimension("prototype lengths differ between classes".into()));
            }
        }
        for i in 0..self.classes() {
            for j in 0..i {
                if self.prototypes[i] == self.prototypes[j] {
                    return usage(format!("classes {} and {} share a prototype", j + 1, i + 1));
                }
            }
        }
        Ok(())
    }
}

/// Nearest-site labels, or `None` when some class is under its share.
fn layout(spec: &SyntheticSceneSpec, rng: &mut ChaCha8Rng) -> Option<Vec<u16>> {
    let (h, w, k) = (spec.height, spec.width, spec.classes());
    let sites: Vec<(f64, f64, u16)> = (0..k * spec.regions_per_class)
        .map(|i| (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64), (i % k + 1) as u16))
        .collect();
    let mut labels = Vec::with_capacity(h * w);
    let mut counts = vec![0usize; k];
    for r in 0..h {
        for c in 0..w {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            let mut best = (f64::INFINITY, 0u16);
            for &(sy, sx, class) in &sites {
                let d = (sy - y).powi(2) + (sx - x).powi(2);
                if d < best.0 {
                    best = (d, class);
                }
            }
            counts[best.1 as usize - 1] += 1;
            labels.push(best.1);
        }
    }
    let need = (MIN_CLASS_SHARE * (h * w) as f64).ceil() as usize;
    counts.iter().all(|&n| n >= need.max(1)).then_some(labels)
}

/// Generates a fully labeled scene; deterministic in `(spec, seed)`.
pub fn synth_scene(spec: &SyntheticSceneSpec, seed: u64) -> Result<SceneContainer> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = (0..MAX_LAYOUT_ATTEMPTS)
        .find_map(|_| layout(spec, &mut rng))
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "no layout gives every one of {} classes {}% of {}x{} pixels after {MAX_LAYOUT_ATTEMPTS} attempts",
                spec.classes(),
                MIN_CLASS_SHARE * 100.0,
                spec.height,
                spec.width
            ))
        })?;

    let px = spec.height * spec.width;
    let bands = spec.prototypes[0].spectral.len();
    let active_channels = spec.prototypes[0].active.len();
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Usage(e.to_string()))?;
    let mut raster = |channels: usize, value: &dyn Fn(&ClassPrototype, usize) -> f32| {
        let mut out = vec![0.0f32; channels * px];
        for ch in 0..channels {
            for (i, &l) in labels.iter().enumerate() {
                let v = value(&spec.prototypes[l as usize - 1], ch);
                out[ch * px + i] = if spec.noise_std > 0.0 {
                    (v as f64 + noise.sample(&mut rng)) as f32
                } else {
                    v
                };
            }
        }
        out
    };
    let spectral = raster(bands, &|p, ch| p.spectral[ch]);
    let active = raster(active_channels, &|p, ch| p.active[ch]);

    Ok(SceneContainer::new(Scene {
        height: spec.height,
        width: spec.width,
        spectral_bands: bands,
        active_channels,
        class_count: spec.classes(),
        spectral,
        active,
        labels,
    }))
}
