//! Discrete Fourier and cosine transforms, frequency partitioning and
//! amplitude/phase decomposition.
//!
//! Conventions, which every frequency-domain operator in the crate relies on:
//!
//! * forward DFT is unnormalized, `X[k] = Σ x[t] e^{-2πi kt/N}`; the inverse
//!   carries the `1/N` factor (`1/(H·W)` in two dimensions);
//! * the normalized frequency of bin `k` is `min(k, N-k) / N`, in `[0, 0.5]`;
//! * the DCT is the orthonormal DCT-II with `C(0) = √(1/N)`, `C(u) = √(2/N)`;
//! * phase lies in `(-π, π]`.
//!
//! All transforms are direct `O(N²)` evaluations so odd sizes such as 11 and
//! 13 are exact.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

pub use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Precomputed twiddle table for length-`n` DFTs.
#[derive(Debug, Clone)]
pub struct DftPlan {
    n: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl DftPlan {
    pub fn new(n: usize) -> Self {
        let (cos, sin) = (0..n)
            .map(|j| {
                let theta = 2.0 * PI * j as f64 / n as f64;
                (libm::cos(theta), libm::sin(theta))
            })
            .unzip();
        Self { n, cos, sin }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `e^{-2πi j/n}` for the reduced index `j mod n`.
    #[inline]
    fn twiddle(&self, j: usize) -> Complex64 {
        let j = j % self.n;
        Complex64::new(self.cos[j], -self.sin[j])
    }

    /// Forward transform of a complex sequence read with `stride`.
    pub fn forward_strided(&self, input: &[Complex64], stride: usize, out: &mut [Complex64]) {
        for (k, o) in out.iter_mut().enumerate().take(self.n) {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..self.n {
                acc += input[t * stride] * self.twiddle(k * t);
            }
            *o = acc;
        }
    }

    /// Inverse transform, including the `1/n` factor.
    pub fn inverse_strided(&self, input: &[Complex64], stride: usize, out: &mut [Complex64]) {
        let scale = 1.0 / self.n as f64;
        for (t, o) in out.iter_mut().enumerate().take(self.n) {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..self.n {
                acc += input[k * stride] * self.twiddle(k * t).conj();
            }
            *o = acc * scale;
        }
    }

    /// Forward transform of a real sequence, returned as separate real and
    /// imaginary parts.
    pub fn forward_real(&self, input: &[f64], re: &mut [f64], im: &mut [f64]) {
        for k in 0..self.n {
            let (mut r, mut i) = (0.0, 0.0);
            for (t, &x) in input.iter().enumerate().take(self.n) {
                let j = (k * t) % self.n;
                r += x * self.cos[j];
                i -= x * self.sin[j];
            }
            re[k] = r;
            im[k] = i;
        }
    }

    /// Real part of the inverse transform of `re + i·im`, including `1/n`.
    pub fn inverse_real_part(&self, re: &[f64], im: &[f64], out: &mut [f64]) {
        let scale = 1.0 / self.n as f64;
        for (t, o) in out.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for k in 0..self.n {
                let j = (k * t) % self.n;
                acc += re[k] * self.cos[j] - im[k] * self.sin[j];
            }
            *o = acc * scale;
        }
    }
}

/// Normalized frequency `min(k, n-k)/n` of DFT bin `k`.
pub fn normalized_frequency(k: usize, n: usize) -> f64 {
    let k = k % n;
    k.min(n - k) as f64 / n as f64
}

/// Complex spectrum together with its array dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub dims: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn amplitude(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    pub fn phase(&self) -> Vec<f64> {
        self.values.iter().map(|z| phase_of(*z)).collect()
    }
}

/// Argument of `z` in `(-π, π]`.
#[inline]
pub fn phase_of(z: Complex64) -> f64 {
    let p = libm::atan2(z.im, z.re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

pub fn dft_1d(signal: &[f64]) -> Result<ComplexSpectrum> {
    if signal.is_empty() {
        return Err(invalid("dft_1d: empty signal"));
    }
    let input: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    dft_1d_complex(&input)
}

pub fn dft_1d_complex(signal: &[Complex64]) -> Result<ComplexSpectrum> {
    if signal.is_empty() {
        return Err(invalid("dft_1d: empty signal"));
    }
    let plan = DftPlan::new(signal.len());
    let mut values = vec![Complex64::new(0.0, 0.0); signal.len()];
    plan.forward_strided(signal, 1, &mut values);
    Ok(ComplexSpectrum {
        dims: vec![signal.len()],
        values,
    })
}

pub fn idft_1d(spectrum: &ComplexSpectrum) -> Result<Vec<Complex64>> {
    let n = spectrum.values.len();
    if n == 0 {
        return Err(invalid("idft_1d: empty spectrum"));
    }
    let plan = DftPlan::new(n);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    plan.inverse_strided(&spectrum.values, 1, &mut out);
    Ok(out)
}

fn check_2d(len: usize, height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(invalid("2-D transform: zero-sized dimension"));
    }
    if len != height * width {
        return Err(invalid(alloc::format!(
            "2-D transform: {len} values do not form a {height}x{width} array"
        )));
    }
    Ok(())
}

/// Separable 2-D DFT of one complex `height × width` plane, in place.
fn dft_2d_in_place(
    data: &mut [Complex64],
    height: usize,
    width: usize,
    row_plan: &DftPlan,
    col_plan: &DftPlan,
    inverse: bool,
) {
    let mut buf = vec![Complex64::new(0.0, 0.0); height.max(width)];
    for r in 0..height {
        let row = &mut data[r * width..(r + 1) * width];
        if inverse {
            row_plan.inverse_strided(row, 1, &mut buf[..width]);
        } else {
            row_plan.forward_strided(row, 1, &mut buf[..width]);
        }
        row.copy_from_slice(&buf[..width]);
    }
    for c in 0..width {
        if inverse {
            col_plan.inverse_strided(&data[c..], width, &mut buf[..height]);
        } else {
            col_plan.forward_strided(&data[c..], width, &mut buf[..height]);
        }
        for r in 0..height {
            data[r * width + c] = buf[r];
        }
    }
}

/// 2-D DFT of a real `height × width` plane (row-major).
pub fn dft_2d(patch: &[f64], height: usize, width: usize) -> Result<ComplexSpectrum> {
    check_2d(patch.len(), height, width)?;
    let mut values: Vec<Complex64> = patch.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    dft_2d_in_place(
        &mut values,
        height,
        width,
        &DftPlan::new(width),
        &DftPlan::new(height),
        false,
    );
    Ok(ComplexSpectrum {
        dims: vec![height, width],
        values,
    })
}

/// Inverse 2-D DFT, normalized by `1/(H·W)`, complex output.
pub fn idft_2d_complex(spectrum: &ComplexSpectrum) -> Result<Vec<Complex64>> {
    let (height, width) = match spectrum.dims[..] {
        [h, w] => (h, w),
        _ => return Err(invalid("idft_2d: spectrum is not two-dimensional")),
    };
    check_2d(spectrum.values.len(), height, width)?;
    let mut values = spectrum.values.clone();
    dft_2d_in_place(
        &mut values,
        height,
        width,
        &DftPlan::new(width),
        &DftPlan::new(height),
        true,
    );
    Ok(values)
}

/// Inverse 2-D DFT returning the real part, the imaginary residue being
/// discarded.
pub fn idft_2d(spectrum: &ComplexSpectrum) -> Result<Vec<f64>> {
    Ok(idft_2d_complex(spectrum)?.iter().map(|z| z.re).collect())
}

/// 2-D DFT applied independently to each `height × width` channel plane.
pub fn dft_2d_channels(
    x: &[f64],
    channels: usize,
    height: usize,
    width: usize,
) -> Result<Vec<ComplexSpectrum>> {
    check_2d(x.len(), channels * height, width)?;
    x.chunks(height * width)
        .map(|plane| dft_2d(plane, height, width))
        .collect()
}

/// Orthonormal DCT-II basis, `basis[u * n + i] = C(u) cos(π u (i + ½) / n)`.
pub fn dct_basis(n: usize) -> Vec<f64> {
    let mut basis = vec![0.0; n * n];
    let c0 = libm::sqrt(1.0 / n as f64);
    let cu = libm::sqrt(2.0 / n as f64);
    for u in 0..n {
        let c = if u == 0 { c0 } else { cu };
        for i in 0..n {
            basis[u * n + i] = c * libm::cos(PI * u as f64 * (i as f64 + 0.5) / n as f64);
        }
    }
    basis
}

/// Precomputed separable 2-D DCT-II for a fixed plane size.
#[derive(Debug, Clone)]
pub struct DctPlan {
    height: usize,
    width: usize,
    row_basis: Vec<f64>,
    col_basis: Vec<f64>,
}

impl DctPlan {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            row_basis: dct_basis(height),
            col_basis: dct_basis(width),
        }
    }

    /// `f = D_H · x · D_Wᵀ`.
    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        self.apply(x, out, false);
    }

    /// `x = D_Hᵀ · f · D_W`.
    pub fn inverse(&self, f: &[f64], out: &mut [f64]) {
        self.apply(f, out, true);
    }

    fn apply(&self, x: &[f64], out: &mut [f64], transpose: bool) {
        let (h, w) = (self.height, self.width);
        let hb = |a: usize, b: usize| {
            if transpose {
                self.row_basis[b * h + a]
            } else {
                self.row_basis[a * h + b]
            }
        };
        let wb = |a: usize, b: usize| {
            if transpose {
                self.col_basis[b * w + a]
            } else {
                self.col_basis[a * w + b]
            }
        };
        // tmp = B_H x
        let mut tmp = vec![0.0; h * w];
        for u in 0..h {
            for i in 0..h {
                let coef = hb(u, i);
                if coef == 0.0 {
                    continue;
                }
                for j in 0..w {
                    tmp[u * w + j] += coef * x[i * w + j];
                }
            }
        }
        // out = tmp B_Wᵀ
        for u in 0..h {
            for v in 0..w {
                let mut acc = 0.0;
                for j in 0..w {
                    acc += tmp[u * w + j] * wb(v, j);
                }
                out[u * w + v] = acc;
            }
        }
    }
}

pub fn dct2_2d(patch: &[f64], height: usize, width: usize) -> Result<Vec<f64>> {
    check_2d(patch.len(), height, width)?;
    let mut out = vec![0.0; patch.len()];
    DctPlan::new(height, width).forward(patch, &mut out);
    Ok(out)
}

pub fn idct2_2d(coeffs: &[f64], height: usize, width: usize) -> Result<Vec<f64>> {
    check_2d(coeffs.len(), height, width)?;
    let mut out = vec![0.0; coeffs.len()];
    DctPlan::new(height, width).inverse(coeffs, &mut out);
    Ok(out)
}

/// Split of an `H × W` coefficient grid into low- and high-frequency index
/// sets: `(h, w)` is low iff `h + w < cut_index`. Indices are flat row-major
/// positions, listed in increasing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyPartition {
    pub height: usize,
    pub width: usize,
    pub cut_index: usize,
    pub low_indices: Vec<usize>,
    pub high_indices: Vec<usize>,
}

impl FrequencyPartition {
    pub fn new(height: usize, width: usize, cut_index: usize) -> Self {
        let (low_indices, high_indices) =
            (0..height * width).partition(|&idx| idx / width + idx % width < cut_index);
        Self {
            height,
            width,
            cut_index,
            low_indices,
            high_indices,
        }
    }

    pub fn low_len(&self) -> usize {
        self.low_indices.len()
    }

    pub fn high_len(&self) -> usize {
        self.high_indices.len()
    }

    /// Inverse of [`partition_spectrum`].
    pub fn merge(&self, low: &[f64], high: &[f64]) -> Result<Vec<f64>> {
        if low.len() != self.low_len() || high.len() != self.high_len() {
            return Err(invalid("FrequencyPartition::merge: vector lengths do not match"));
        }
        let mut out = vec![0.0; self.height * self.width];
        for (&i, &v) in self.low_indices.iter().zip(low) {
            out[i] = v;
        }
        for (&i, &v) in self.high_indices.iter().zip(high) {
            out[i] = v;
        }
        Ok(out)
    }
}

pub fn partition_spectrum(
    coeffs: &[f64],
    part: &FrequencyPartition,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if coeffs.len() != part.height * part.width {
        return Err(invalid(alloc::format!(
            "partition_spectrum: {} coefficients for a {}x{} partition",
            coeffs.len(),
            part.height,
            part.width
        )));
    }
    let low = part.low_indices.iter().map(|&i| coeffs[i]).collect();
    let high = part.high_indices.iter().map(|&i| coeffs[i]).collect();
    Ok((low, high))
}

pub fn amp_phase_decompose(spectrum: &ComplexSpectrum) -> (Vec<f64>, Vec<f64>) {
    (spectrum.amplitude(), spectrum.phase())
}

pub fn amp_phase_compose(
    amplitude: &[f64],
    phase: &[f64],
    dims: &[usize],
) -> Result<ComplexSpectrum> {
    if amplitude.len() != phase.len() || amplitude.len() != dims.iter().product::<usize>() {
        return Err(invalid("amp_phase_compose: amplitude/phase/dims disagree"));
    }
    let values = amplitude
        .iter()
        .zip(phase)
        .map(|(&a, &p)| Complex64::from_polar(a, p))
        .collect();
    Ok(ComplexSpectrum {
        dims: dims.to_vec(),
        values,
    })
}
