//! Dense kernels behind the tape operations. All `gemm_*` routines
//! accumulate into `c`.

use alloc::vec;
use alloc::vec::Vec;

pub fn transpose(a: &[f64], m: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    gemm(m, k, n, a, [k, 1], b, [n, 1], c);
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    gemm(m, k, n, a, [k, 1], b, [1, k], c);
}

/// `c[m×n] += a[k×m]ᵀ · b[k×n]`
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    gemm(m, k, n, a, [1, m], b, [n, 1], c);
}

/// Strided `c += a · b` with row-major `c`; strides are `[row, col]`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], sa: [usize; 2], b: &[f64], sb: [usize; 2], c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm: buffer too small");
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: the asserted lengths cover every strided access.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa[0] as isize,
            sa[1] as isize,
            b.as_ptr(),
            sb[0] as isize,
            sb[1] as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Zero-padded "same" convolution layout for odd kernel sides.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeometry {
    /// Unfolds `x: [c, h, w]` into `[c·kh·kw, h·w]`.
    pub fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let p = h * w;
        let mut cols = vec![0.0; self.channels * self.kh * self.kw * p];
        self.for_each_tap(|row, pos, src| cols[row * p + pos] = x[src]);
        cols
    }

    /// Folds column gradients back onto `gx: [c, h, w]`.
    pub fn col2im(&self, cols: &[f64], gx: &mut [f64]) {
        let p = self.height * self.width;
        self.for_each_tap(|row, pos, src| gx[src] += cols[row * p + pos]);
    }

    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (h, w) = (self.height as isize, self.width as isize);
        let (ph, pw) = ((self.kh / 2) as isize, (self.kw / 2) as isize);
        for ch in 0..self.channels {
            for a in 0..self.kh {
                for b in 0..self.kw {
                    let row = (ch * self.kh + a) * self.kw + b;
                    let (da, db) = (a as isize - ph, b as isize - pw);
                    for r in 0..h {
                        let rr = r + da;
                        if rr < 0 || rr >= h {
                            continue;
                        }
                        for s in 0..w {
                            let ss = s + db;
                            if ss < 0 || ss >= w {
                                continue;
                            }
                            let src = ch * (h * w) as usize + (rr * w + ss) as usize;
                            f(row, (r * w + s) as usize, src);
                        }
                    }
                }
            }
        }
    }
}
