//! Squared-ReLU attention and the sparsemax threshold that turns token
//! scores into sparse weights.

use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// Sparse weights produced by [`sparsemax_threshold`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseWeights {
    pub w: Vec<f64>,
    pub tau: f64,
    /// Number of strictly positive weights (`m̂`).
    pub support_size: usize,
}

/// Sorts `z` in descending order, finds the largest `m` with
/// `z_(m) > (S_m - 1)/m`, sets `τ = (S_m̂ - 1)/m̂` and returns
/// `w_i = max(z_i - τ, 0)`, the Euclidean projection of `z` onto the
/// probability simplex. Equal scores are ordered by lower index first.
pub fn sparsemax_threshold(z: &[f64]) -> Result<SparseWeights> {
    if z.is_empty() {
        return Err(invalid("sparsemax_threshold: empty score vector"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sparsemax_threshold: non-finite score"));
    }
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&i, &j| z[j].total_cmp(&z[i]).then(i.cmp(&j)));

    let mut cumsum = 0.0;
    let mut support = 1;
    let mut support_sum = z[order[0]];
    for (m, &i) in order.iter().enumerate() {
        cumsum += z[i];
        let rank = (m + 1) as f64;
        if z[i] > (cumsum - 1.0) / rank {
            support = m + 1;
            support_sum = cumsum;
        }
    }
    let tau = (support_sum - 1.0) / support as f64;
    let w: Vec<f64> = z.iter().map(|&v| (v - tau).max(0.0)).collect();
    let support_size = w.iter().filter(|&&v| v > 0.0).count();
    Ok(SparseWeights {
        w,
        tau,
        support_size,
    })
}

/// Query, key and value token matrices, each `[tokens, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QkvTriple {
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
}

/// Graph form of [`depthwise_qkv`]: returns `(Q, K, V)` as `[tokens, channels]`.
pub fn depthwise_qkv_vars(tape: &Tape<'_>, x: Var, weight: Var, bias: Var) -> Result<(Var, Var, Var)> {
    let xs = tape.shape(x);
    let ws = tape.shape(weight);
    if xs.len() != 3 || xs[0] == 0 {
        return Err(invalid("depthwise_qkv: input must be [channels, height, width]"));
    }
    if ws.len() != 4 || ws[1] != xs[0] || ws[2] % 2 == 0 || ws[3] % 2 == 0 {
        return Err(invalid("depthwise_qkv: weight must be [3, channels, k, k] with odd k"));
    }
    let channels = xs[0];
    let expanded = ws[0] * channels;
    if ws[0] != 3 || expanded % 3 != 0 {
        return Err(Error::Config(alloc::format!(
            "depthwise_qkv: {expanded} expanded channels do not split into Q, K, V"
        )));
    }
    let tokens = xs[1] * xs[2];
    let qkv = tape.depthwise_conv2d(x, weight, bias);
    let part = |i: usize| {
        let block = tape.slice_rows(qkv, i * channels, channels);
        let flat = tape.reshape(block, &[channels, tokens]);
        tape.transpose(flat)
    };
    Ok((part(0), part(1), part(2)))
}

/// One depthwise convolution expanding every channel into three outputs,
/// split into Q, K and V token matrices.
pub fn depthwise_qkv(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<QkvTriple> {
    let tape = Tape::new();
    let (xv, wv, bv) = (
        tape.leaf_ref(x, false),
        tape.leaf_ref(weight, false),
        tape.leaf_ref(bias, false),
    );
    let (q, k, v) = depthwise_qkv_vars(&tape, xv, wv, bv)?;
    Ok(QkvTriple {
        q: tape.value(q),
        k: tape.value(k),
        v: tape.value(v),
    })
}

/// `ReLU(Q Kᵀ)² · V`.
pub fn squared_relu_attention_vars(tape: &Tape<'_>, q: Var, k: Var, v: Var) -> Var {
    let scores = tape.matmul_nt(q, k);
    let act = tape.relu(scores);
    let act = tape.square(act);
    tape.matmul(act, v)
}

pub fn squared_relu_attention(qkv: &QkvTriple) -> Result<Tensor> {
    let (qs, ks, vs) = (qkv.q.shape(), qkv.k.shape(), qkv.v.shape());
    if qs.len() != 2 || qs != ks || ks[0] != vs[0] {
        return Err(invalid("squared_relu_attention: inconsistent Q/K/V shapes"));
    }
    let tape = Tape::new();
    let q = tape.leaf_ref(&qkv.q, false);
    let k = tape.leaf_ref(&qkv.k, false);
    let v = tape.leaf_ref(&qkv.v, false);
    let out = squared_relu_attention_vars(&tape, q, k, v);
    Ok(tape.value(out))
}

/// Per-token salience (mean over the embedding dimension) followed by the
/// sparsemax threshold; `features` is `[tokens, dim]`.
pub fn spatial_sparse_scores_vars(tape: &Tape<'_>, features: Var) -> Var {
    let scores = tape.row_means(features);
    tape.sparsemax(scores)
}

pub fn spatial_sparse_scores(features: &Tensor) -> Result<SparseWeights> {
    let shape = features.shape();
    if shape.is_empty() || shape[0] == 0 {
        return Err(invalid("spatial_sparse_scores: no tokens"));
    }
    let dim = features.len() / shape[0];
    let scores: Vec<f64> = features
        .data()
        .chunks(dim)
        .map(|row| row.iter().sum::<f64>() / dim as f64)
        .collect();
    sparsemax_threshold(&scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sparsemax_worked_examples() {
        let w = sparsemax_threshold(&[0.9, 0.3, -0.2]).unwrap();
        assert_eq!(w.support_size, 2);
        assert!((w.tau - 0.1).abs() < 1e-12);
        for (a, b) in w.w.iter().zip([0.8, 0.2, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }

        let third = 1.0 / 3.0;
        let w = sparsemax_threshold(&[third, third, third]).unwrap();
        assert_eq!(w.support_size, 3);
        assert!(w.tau.abs() < 1e-12);
        assert!(w.w.iter().all(|v| (v - third).abs() < 1e-12));

        let w = sparsemax_threshold(&[2.0, 0.0, 0.0]).unwrap();
        assert_eq!(w.support_size, 1);
        assert!((w.tau - 1.0).abs() < 1e-12);
        assert_eq!(w.w, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn sparsemax_rejects_empty() {
        assert!(matches!(sparsemax_threshold(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn spatial_scores_identical_tokens_are_uniform() {
        let t = Tensor::from_vec(&[4, 3], vec![0.5; 12]).unwrap();
        let w = spatial_sparse_scores(&t).unwrap();
        assert!(w.w.iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn spatial_scores_dominant_token_is_one_hot() {
        let mut data = vec![0.1; 12];
        data[6..9].copy_from_slice(&[50.0, 50.0, 50.0]);
        let t = Tensor::from_vec(&[4, 3], data).unwrap();
        let w = spatial_sparse_scores(&t).unwrap();
        assert_eq!(w.w, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn qkv_rejects_even_kernel() {
        let x = Tensor::zeros(&[2, 3, 3]);
        let w = Tensor::zeros(&[3, 2, 2, 2]);
        let b = Tensor::zeros(&[3, 2]);
        assert!(depthwise_qkv(&x, &w, &b).is_err());
    }
}
