//! Frequency views of a scene: low/high split of class-mean spectra and
//! class-average 2-D magnitude spectra of PCA component patches.

use std::io::{self, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use s2fin_core::transforms::Complex64;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use s2fin_core::data::{reflect_index, Scene};
use s2fin_core::transforms::{dft_1d, dft_2d, idft_1d, ComplexSpectrum};

use crate::error::{Error, Result};

/// Splits a 1-D signal at `cutoff_bin`: bin `k` is low iff
/// `min(k, n - k) <= cutoff_bin`, so DC is always low.
pub fn split_spectrum(signal: &[f64], cutoff_bin: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let spectrum = dft_1d(signal)?;
    let n = signal.len();
    let zero = Complex64::new(0.0, 0.0);
    let masked = |low: bool| -> Result<Vec<f64>> {
        let values = spectrum
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| if (k.min(n - k) <= cutoff_bin) == low { v } else { zero })
            .collect();
        let s = ComplexSpectrum { dims: spectrum.dims.clone(), values };
        Ok(idft_1d(&s)?.into_iter().map(|z| z.re).collect())
    };
    Ok((masked(true)?, masked(false)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpectrum {
    /// One-based class label.
    pub class: usize,
    pub pixels: usize,
    pub mean: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumAnalysis {
    pub cutoff_bin: usize,
    pub classes: Vec<ClassSpectrum>,
    pub warnings: Vec<String>,
}

impl SpectrumAnalysis {
    /// `class,band,low_value,high_value`, bands zero-based.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "class,band,low_value,high_value")?;
        for c in &self.classes {
            for (b, (lo, hi)) in c.low.iter().zip(&c.high).enumerate() {
                writeln!(w, "{},{},{},{}", c.class, b, lo, hi)?;
            }
        }
        Ok(())
    }
}

/// Mean spectrum of each labeled class, split into low and high parts.
pub fn analyze_spectrum(scene: &Scene, cutoff_bin: usize) -> Result<SpectrumAnalysis> {
    let px = scene.height * scene.width;
    let mut classes = Vec::new();
    let mut warnings = Vec::new();
    for (k, pixels) in scene.pixels_by_class().iter().enumerate() {
        if pixels.is_empty() {
            warnings.push(format!("class {} has no labeled pixels, skipped", k + 1));
            continue;
        }
        let mean: Vec<f64> = (0..scene.spectral_bands)
            .map(|b| {
                let plane = &scene.spectral[b * px..(b + 1) * px];
                pixels.iter().map(|p| plane[p.row * scene.width + p.col] as f64).sum::<f64>() / pixels.len() as f64
            })
            .collect();
        let (low, high) = split_spectrum(&mean, cutoff_bin)?;
        classes.push(ClassSpectrum {
            class: k + 1,
            pixels: pixels.len(),
            mean,
            low,
            high,
        });
    }
    Ok(SpectrumAnalysis { cutoff_bin, classes, warnings })
}

/// Principal axes ordered by descending variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm rows; the largest-magnitude loading of each is positive.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    /// Fits `k` components to `samples` rows of `dims` values.
    pub fn fit(data: &[f64], samples: usize, dims: usize, k: usize) -> Result<Self> {
        if samples == 0 || dims == 0 || data.len() != samples * dims {
            return Err(Error::Dimension(format!(
                "pca: {} values for {samples} samples of {dims} dims",
                data.len()
            )));
        }
        let k = k.min(dims);
        let x = DMatrix::from_row_slice(samples, dims, data);
        let mean: Vec<f64> = (0..dims).map(|j| x.column(j).mean()).collect();
        let mut centered = x;
        for (j, m) in mean.iter().enumerate() {
            centered.column_mut(j).add_scalar_mut(-m);
        }
        let cov = centered.transpose() * &centered / samples as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dims).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut components = Vec::with_capacity(k);
        let mut eigenvalues = Vec::with_capacity(k);
        for &i in order.iter().take(k) {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            components.push(v);
            eigenvalues.push(eig.eigenvalues[i]);
        }
        Ok(Self { mean, components, eigenvalues })
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect()
    }
}

/// `|DFT|` of a `side × side` plane with DC moved to the center.
pub fn centered_magnitude(plane: &[f64], side: usize) -> Result<Vec<f64>> {
    let amp = dft_2d(plane, side, side)?.amplitude();
    let half = side / 2;
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            out[((r + half) % side) * side + (c + half) % side] = amp[r * side + c];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMagnitudes {
    /// One-based class label.
    pub class: usize,
    pub samples: usize,
    /// One DC-centered `window × window` image per component.
    pub images: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialAnalysis {
    pub window: usize,
    pub pca: Pca,
    pub classes: Vec<ClassMagnitudes>,
    pub warnings: Vec<String>,
}

/// Projects every pixel onto the first three principal components, then
/// averages the centered magnitude spectra of `samples_per_class` random
/// patches per class.
pub fn analyze_spatial_frequency(
    scene: &Scene,
    samples_per_class: usize,
    window: usize,
    seed: u64,
) -> Result<SpatialAnalysis> {
    if window % 2 == 0 || window == 0 {
        return Err(Error::Usage(format!("window {window} must be odd")));
    }
    let px = scene.height * scene.width;
    let bands = scene.spectral_bands;
    let mut rows = vec![0.0; px * bands];
    for b in 0..bands {
        for i in 0..px {
            rows[i * bands + b] = scene.spectral[b * px + i] as f64;
        }
    }
    let pca = Pca::fit(&rows, px, bands, 3)?;
    let comps = pca.components.len();
    let mut planes = vec![vec![0.0; px]; comps];
    for i in 0..px {
        for (c, v) in pca.project(&rows[i * bands..(i + 1) * bands]).into_iter().enumerate() {
            planes[c][i] = v;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = (window / 2) as isize;
    let mut classes = Vec::new();
    let mut warnings = Vec::new();
    for (k, pixels) in scene.pixels_by_class().iter().enumerate() {
        let n = samples_per_class.min(pixels.len());
        if n < samples_per_class {
            warnings.push(format!(
                "class {} has {} labeled pixels, {samples_per_class} requested",
                k + 1,
                pixels.len()
            ));
        }
        if n == 0 {
            continue;
        }
        let mut picked = sample(&mut rng, pixels.len(), n).into_vec();
        picked.sort_unstable();
        let mut images = vec![vec![0.0; window * window]; comps];
        let mut patch = vec![0.0; window * window];
        for &i in &picked {
            let p = pixels[i];
            for (plane, image) in planes.iter().zip(images.iter_mut()) {
                for dr in -half..=half {
                    let r = reflect_index(p.row as isize + dr, scene.height);
                    for dc in -half..=half {
                        let c = reflect_index(p.col as isize + dc, scene.width);
                        patch[((dr + half) as usize) * window + (dc + half) as usize] = plane[r * scene.width + c];
                    }
                }
                for (acc, m) in image.iter_mut().zip(centered_magnitude(&patch, window)?) {
                    *acc += m / n as f64;
                }
            }
        }
        classes.push(ClassMagnitudes { class: k + 1, samples: n, images });
    }
    Ok(SpatialAnalysis { window, pca, classes, warnings })
}
