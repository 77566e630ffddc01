//! In-memory multimodal scene, patch extraction and few-shot sampling.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// Two co-registered rasters and a label map. Rasters are band-sequential,
/// row-major; label 0 marks unlabeled pixels, classes are `1..=class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub height: usize,
    pub width: usize,
    pub spectral_bands: usize,
    pub active_channels: usize,
    pub class_count: usize,
    pub spectral: Vec<f32>,
    pub active: Vec<f32>,
    pub labels: Vec<u16>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        let px = self.height * self.width;
        if px == 0 {
            return Err(invalid("scene: zero-sized raster"));
        }
        if self.spectral.len() != self.spectral_bands * px {
            return Err(invalid("scene: spectral raster size does not match dims"));
        }
        if self.active.len() != self.active_channels * px {
            return Err(invalid("scene: active raster size does not match dims"));
        }
        if self.labels.len() != px {
            return Err(invalid("scene: label map size does not match dims"));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l as usize > self.class_count) {
            return Err(invalid(alloc::format!(
                "scene: label {bad} exceeds class count {}",
                self.class_count
            )));
        }
        Ok(())
    }

    pub fn label_at(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    /// Labeled pixel positions of each class, `result[k]` for class `k + 1`.
    pub fn pixels_by_class(&self) -> Vec<Vec<Pixel>> {
        let mut out = vec![Vec::new(); self.class_count];
        for row in 0..self.height {
            for col in 0..self.width {
                let l = self.label_at(row, col);
                if l > 0 {
                    out[l as usize - 1].push(Pixel { row, col, class: l as usize - 1 });
                }
            }
        }
        out
    }
}

/// A labeled pixel; `class` is zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
    pub class: usize,
}

/// One classification sample centered on a pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchTriple {
    /// Spectral patch `[B, S, S]`.
    pub x_spec: Tensor,
    /// Spatial patch of the spectral modality `[B, S, S]`.
    pub x_spat: Tensor,
    /// Active-modality patch `[C_a, S, S]`.
    pub x_active: Tensor,
    /// Zero-based class of the center pixel, `None` if unlabeled.
    pub label: Option<usize>,
}

/// Mirror (reflect, edge not repeated) index into `0..n`.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

fn extract_plane(raster: &[f32], channels: usize, scene: &Scene, row: usize, col: usize, window: usize) -> Tensor {
    let half = (window / 2) as isize;
    let px = scene.height * scene.width;
    let mut data = Vec::with_capacity(channels * window * window);
    for ch in 0..channels {
        let plane = &raster[ch * px..(ch + 1) * px];
        for dr in -half..=half {
            let r = reflect_index(row as isize + dr, scene.height);
            for dc in -half..=half {
                let c = reflect_index(col as isize + dc, scene.width);
                data.push(plane[r * scene.width + c] as f64);
            }
        }
    }
    Tensor::from_vec(&[channels, window, window], data).expect("patch shape")
}

/// Mirror-padded `window × window` patches centered on `(row, col)`.
pub fn extract_patch(scene: &Scene, row: usize, col: usize, window: usize) -> Result<PatchTriple> {
    if window % 2 == 0 {
        return Err(invalid(alloc::format!("window {window} must be odd")));
    }
    if row >= scene.height || col >= scene.width {
        return Err(invalid("extract_patch: pixel outside the scene"));
    }
    let x_spec = extract_plane(&scene.spectral, scene.spectral_bands, scene, row, col, window);
    let x_active = extract_plane(&scene.active, scene.active_channels, scene, row, col, window);
    let label = match scene.label_at(row, col) {
        0 => None,
        l => Some(l as usize - 1),
    };
    Ok(PatchTriple {
        x_spat: x_spec.clone(),
        x_spec,
        x_active,
        label,
    })
}

/// Patches for a list of pixels.
pub fn extract_patches(scene: &Scene, pixels: &[Pixel], window: usize) -> Result<Vec<PatchTriple>> {
    pixels.iter().map(|p| extract_patch(scene, p.row, p.col, window)).collect()
}

/// Per-channel `(mean, std)` of both rasters, used to standardize inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub spectral: Vec<(f64, f64)>,
    pub active: Vec<(f64, f64)>,
}

fn channel_stats(raster: &[f32], channels: usize, px: usize) -> Vec<(f64, f64)> {
    (0..channels)
        .map(|ch| {
            let plane = &raster[ch * px..(ch + 1) * px];
            let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / px as f64;
            let var = plane.iter().map(|&v| (v as f64 - mean) * (v as f64 - mean)).sum::<f64>() / px as f64;
            (mean, libm::sqrt(var))
        })
        .collect()
}

fn standardize(raster: &mut [f32], stats: &[(f64, f64)], px: usize) {
    for (plane, &(mean, std)) in raster.chunks_mut(px).zip(stats) {
        let scale = if std > 0.0 { 1.0 / std } else { 1.0 };
        for v in plane {
            *v = ((*v as f64 - mean) * scale) as f32;
        }
    }
}

impl Normalization {
    /// Statistics over every pixel of the scene, labeled or not.
    pub fn fit(scene: &Scene) -> Self {
        let px = scene.height * scene.width;
        Self {
            spectral: channel_stats(&scene.spectral, scene.spectral_bands, px),
            active: channel_stats(&scene.active, scene.active_channels, px),
        }
    }

    /// Copy of `scene` with every channel mapped to `(x - mean) / std`;
    /// constant channels are only centered.
    pub fn apply(&self, scene: &Scene) -> Result<Scene> {
        if self.spectral.len() != scene.spectral_bands || self.active.len() != scene.active_channels {
            return Err(Error::ShapeMismatch {
                expected: alloc::format!("{} spectral / {} active channels", self.spectral.len(), self.active.len()),
                actual: alloc::format!("{} / {}", scene.spectral_bands, scene.active_channels),
            });
        }
        let px = scene.height * scene.width;
        let mut out = scene.clone();
        standardize(&mut out.spectral, &self.spectral, px);
        standardize(&mut out.active, &self.active, px);
        Ok(out)
    }
}

/// Training/evaluation partition of the labeled pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSplit {
    pub train: Vec<Pixel>,
    pub eval: Vec<Pixel>,
}

/// Draws `per_class` training pixels per class uniformly without
/// replacement; every other labeled pixel goes to evaluation.
pub fn split_samples(scene: &Scene, per_class: usize, seed: u64) -> Result<SampleSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for (k, pixels) in scene.pixels_by_class().into_iter().enumerate() {
        if pixels.len() < per_class {
            return Err(Error::InsufficientSamples {
                class: (k + 1) as u16,
                available: pixels.len(),
                requested: per_class,
            });
        }
        let mut chosen = vec![false; pixels.len()];
        let mut picked: Vec<usize> = sample(&mut rng, pixels.len(), per_class).into_vec();
        picked.sort_unstable();
        for i in picked {
            chosen[i] = true;
            train.push(pixels[i]);
        }
        eval.extend(pixels.iter().zip(&chosen).filter(|(_, &c)| !c).map(|(p, _)| *p));
    }
    Ok(SampleSplit { train, eval })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_scene(h: usize, w: usize) -> Scene {
        Scene {
            height: h,
            width: w,
            spectral_bands: 1,
            active_channels: 1,
            class_count: 1,
            spectral: (0..h * w).map(|i| i as f32).collect(),
            active: (0..h * w).map(|i| -(i as f32)).collect(),
            labels: vec![1; h * w],
        }
    }

    #[test]
    fn reflect_rule() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-2, 5), 2);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(2, 5), 2);
        assert_eq!(reflect_index(-3, 1), 0);
    }

    #[test]
    fn window_one_is_the_pixel() {
        let s = ramp_scene(4, 5);
        let p = extract_patch(&s, 2, 3, 1).unwrap();
        assert_eq!(p.x_spec.data(), &[13.0]);
        assert_eq!(p.x_active.data(), &[-13.0]);
    }

    #[test]
    fn corner_window_three_mirrors_neighbours() {
        let s = ramp_scene(4, 5);
        let p = extract_patch(&s, 0, 0, 3).unwrap();
        // Row -1 mirrors row 1, column -1 mirrors column 1.
        let v = |r: usize, c: usize| (r * 5 + c) as f64;
        let expected = [
            v(1, 1), v(1, 0), v(1, 1),
            v(0, 1), v(0, 0), v(0, 1),
            v(1, 1), v(1, 0), v(1, 1),
        ];
        assert_eq!(p.x_spec.data(), &expected);
    }

    #[test]
    fn even_window_rejected() {
        let s = ramp_scene(4, 5);
        assert!(extract_patch(&s, 0, 0, 4).is_err());
    }
}
